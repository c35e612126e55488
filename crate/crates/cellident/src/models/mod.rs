//! Battery forward models in mass matrix DAE form and their integration.
//!
//! A [`CellModel`] owns the structure of the discretised system — state
//! dimension, mass-matrix diagonal, right-hand side, terminal-voltage output
//! and initial-state map — while the unknown parameter vector θ stays a live
//! argument so the same built model serves every optimiser iterate. Model
//! coefficients bound to θ are called *slots*; slots flagged geometric
//! (thicknesses, radii, volume fractions, area) change the spatial
//! discretisation and therefore force a rebuild, which [`ModelHandle`]
//! caches and counts.

pub mod ecm;
pub mod spm;
pub mod tables;

pub use ecm::{EcmConfig, EcmModel, RcPair};
pub use spm::{Electrode, SpmConfig, SpmModel};
pub use tables::Table1d;

use crate::solver::{
    self, damped_newton, fd_step_sensitivity, integrate_span, OdeSystem, SolverError,
    SolverOptions, SolverStats,
};
use std::sync::{Arc, Mutex};
use thiserror::Error;

/// Faraday constant, C/mol.
pub const FARADAY: f64 = 96485.33212;
/// Molar gas constant, J/(mol K).
pub const GAS_CONSTANT: f64 = 8.314462618;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("model has no parameter slot named `{0}`")]
    UnknownSlot(String),
    #[error("invalid model configuration: {0}")]
    BadConfig(String),
    #[error("invalid protocol: {0}")]
    BadProtocol(String),
    #[error("sensitivities unavailable: {0}")]
    SensitivityUnsupported(String),
    #[error("steady-state search failed: residual {residual:.3e} after {iters} iterations")]
    SteadyState { residual: f64, iters: u64 },
    #[error("expected {expected} parameter values, got {got}")]
    ThetaDimension { expected: usize, got: usize },
}

/// One bound coefficient of a model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotInfo {
    pub name: String,
    /// Geometric slots change the discretisation and force a rebuild.
    pub geometric: bool,
}

/// Analytic Jacobians a model may register; the integrator and the
/// impedance layer fall back to finite differences when absent.
///
/// Matrix buffers are row-major: entry (i, j) of an n×m matrix lives at
/// `out[i * m + j]`.
pub trait AnalyticJacobians {
    fn jac_state(&self, t: f64, x: &[f64], theta: &[f64], current: f64, out: &mut [f64]);
    fn jac_theta(&self, t: f64, x: &[f64], theta: &[f64], current: f64, out: &mut [f64]);
    fn out_grad_state(&self, t: f64, x: &[f64], theta: &[f64], current: f64, out: &mut [f64]);
    fn out_grad_theta(&self, t: f64, x: &[f64], theta: &[f64], current: f64, out: &mut [f64]);
    fn jac_current(&self, t: f64, x: &[f64], theta: &[f64], current: f64, out: &mut [f64]);
    fn out_grad_current(&self, t: f64, x: &[f64], theta: &[f64], current: f64) -> f64;
    /// ∂x0/∂θ, n×d row-major.
    fn init_jac_theta(&self, theta: &[f64], soc0: f64, out: &mut [f64]);
}

/// A built forward model: M dx/dt = F(t, x, θ, I), y = h(t, x, θ, I),
/// x(0) = x0(θ, soc0).
pub trait CellModel: Send + Sync {
    fn dim(&self) -> usize;
    /// Diagonal mass matrix entries, 0 or 1.
    fn mass_diag(&self) -> &[f64];
    fn rhs(&self, t: f64, x: &[f64], theta: &[f64], current: f64, out: &mut [f64]);
    /// Terminal voltage in volts.
    fn output(&self, t: f64, x: &[f64], theta: &[f64], current: f64) -> f64;
    fn initial_state(&self, theta: &[f64], soc0: f64) -> Vec<f64>;
    /// Parameter slots in θ order.
    fn slots(&self) -> &[SlotInfo];
    /// Admissibility box; violations abort the integration with a typed
    /// error rather than silently continuing.
    fn check_state(&self, _x: &[f64], _theta: &[f64], _current: f64) -> Result<(), String> {
        Ok(())
    }
    fn analytic(&self) -> Option<&dyn AnalyticJacobians> {
        None
    }
    /// Theoretical cell capacity in ampere hours at the given θ, used to
    /// resolve C-rates.
    fn capacity_ah(&self, theta: &[f64]) -> f64;
}

/// One constant-current protocol segment; discharge is positive.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Segment {
    pub current: f64,
    pub duration: f64,
}

/// A current schedule with sampling instants and the operating condition.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Protocol {
    pub initial_soc: f64,
    pub segments: Vec<Segment>,
    /// Strictly increasing sample instants within the total duration.
    pub t_eval: Vec<f64>,
    /// Stop early when the output drops to this voltage.
    pub voltage_cutoff: Option<f64>,
}

impl Protocol {
    /// Single constant-current hold sampled every `dt` seconds (endpoints
    /// included).
    pub fn constant_current(initial_soc: f64, current: f64, duration: f64, dt: f64) -> Protocol {
        let n = (duration / dt).round() as usize;
        let t_eval = (0..=n).map(|i| i as f64 * dt).collect();
        Protocol {
            initial_soc,
            segments: vec![Segment { current, duration }],
            t_eval,
            voltage_cutoff: None,
        }
    }

    /// Replays a sampled current signal as a piecewise-constant hold:
    /// I(t) = Iᵢ on [tᵢ, tᵢ₊₁). Runs of equal current merge into single
    /// segments so synthetic step protocols integrate fast.
    pub fn from_samples(
        initial_soc: f64,
        times: &[f64],
        currents: &[f64],
    ) -> Result<Protocol, ModelError> {
        if times.len() < 2 || times.len() != currents.len() {
            return Err(ModelError::BadProtocol(
                "need at least two samples with matching current values".into(),
            ));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ModelError::BadProtocol("sample times must strictly increase".into()));
        }
        let mut segments = Vec::new();
        let mut seg_start = times[0];
        let mut seg_current = currents[0];
        for i in 1..times.len() {
            if currents[i] != seg_current {
                segments.push(Segment { current: seg_current, duration: times[i] - seg_start });
                seg_start = times[i];
                seg_current = currents[i];
            }
        }
        let end = *times.last().unwrap();
        if end > seg_start {
            segments.push(Segment { current: seg_current, duration: end - seg_start });
        }
        Ok(Protocol {
            initial_soc,
            segments,
            t_eval: times.to_vec(),
            voltage_cutoff: None,
        })
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Current at time `t` under the hold convention (switch instants
    /// belong to the incoming segment).
    pub fn current_at(&self, t: f64) -> f64 {
        let mut start = 0.0;
        for (i, seg) in self.segments.iter().enumerate() {
            let end = start + seg.duration;
            let is_last = i + 1 == self.segments.len();
            if t < end || (is_last && t <= end) {
                return seg.current;
            }
            start = end;
        }
        self.segments.last().map_or(0.0, |s| s.current)
    }

    fn validate(&self) -> Result<(), ModelError> {
        if self.segments.is_empty() {
            return Err(ModelError::BadProtocol("no segments".into()));
        }
        if self.segments.iter().any(|s| !(s.duration > 0.0)) {
            return Err(ModelError::BadProtocol("segment durations must be positive".into()));
        }
        if self.t_eval.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ModelError::BadProtocol("t_eval must strictly increase".into()));
        }
        let total = self.total_duration();
        if let (Some(&first), Some(&last)) = (self.t_eval.first(), self.t_eval.last()) {
            if first < 0.0 || last > total * (1.0 + 1e-12) {
                return Err(ModelError::BadProtocol(format!(
                    "t_eval range [{first}, {last}] outside protocol duration {total}"
                )));
            }
        }
        Ok(())
    }
}

/// Simulation result sampled at the protocol's evaluation instants.
#[derive(Debug, Clone)]
pub struct Trace {
    pub times: Vec<f64>,
    /// Terminal voltage at each instant.
    pub outputs: Vec<f64>,
    /// Applied current at each instant.
    pub currents: Vec<f64>,
    pub states: Option<Vec<Vec<f64>>>,
    /// ∂y/∂θ at each instant (one d-vector per time), present when
    /// sensitivities were requested.
    pub output_sens: Option<Vec<Vec<f64>>>,
    pub stats: SolverStats,
    /// Time at which the voltage cutoff stopped the run, if it did.
    pub stopped_at: Option<f64>,
}

/// Integration options for the forward simulation.
#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    pub solver: SolverOptions,
    pub record_states: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { solver: SolverOptions::default(), record_states: false }
    }
}

struct SegmentSystem<'a> {
    model: &'a dyn CellModel,
    theta: &'a [f64],
    current: f64,
}

impl OdeSystem for SegmentSystem<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }
    fn rhs(&self, t: f64, x: &[f64], out: &mut [f64]) {
        self.model.rhs(t, x, self.theta, self.current, out);
    }
    fn mass_diag(&self) -> Option<&[f64]> {
        Some(self.model.mass_diag())
    }
    fn check_state(&self, _t: f64, x: &[f64]) -> Result<(), String> {
        self.model.check_state(x, self.theta, self.current)
    }
}

fn check_theta(model: &dyn CellModel, theta: &[f64]) -> Result<(), ModelError> {
    if theta.len() != model.slots().len() {
        return Err(ModelError::ThetaDimension {
            expected: model.slots().len(),
            got: theta.len(),
        });
    }
    Ok(())
}

/// Simulates `model` under `protocol`, sampling the output at the
/// protocol's evaluation instants with dense output.
pub fn integrate(
    model: &dyn CellModel,
    theta: &[f64],
    protocol: &Protocol,
    opts: &SimOptions,
) -> Result<Trace, ModelError> {
    check_theta(model, theta)?;
    protocol.validate()?;

    let mut x = model.initial_state(theta, protocol.initial_soc);
    let mut trace = Trace {
        times: Vec::with_capacity(protocol.t_eval.len()),
        outputs: Vec::with_capacity(protocol.t_eval.len()),
        currents: Vec::with_capacity(protocol.t_eval.len()),
        states: opts.record_states.then(Vec::new),
        output_sens: None,
        stats: SolverStats::default(),
        stopped_at: None,
    };

    let mut seg_start = 0.0;
    for (si, seg) in protocol.segments.iter().enumerate() {
        let seg_end = seg_start + seg.duration;
        let last = si + 1 == protocol.segments.len();
        let sys = SegmentSystem { model, theta, current: seg.current };

        // Hold convention: a sample at a switch instant belongs to the
        // incoming segment, so the window is half-open except at the end.
        let lo = protocol.t_eval.partition_point(|&t| t < seg_start);
        let hi = if last {
            protocol.t_eval.len()
        } else {
            protocol.t_eval.partition_point(|&t| t < seg_end)
        };
        let t_eval = &protocol.t_eval[lo..hi];

        let event = protocol
            .voltage_cutoff
            .map(|vcut| move |t: f64, x: &[f64]| model.output(t, x, theta, seg.current) - vcut);

        let sol = integrate_span(
            &sys,
            seg_start,
            seg_end,
            &x,
            t_eval,
            event.as_ref().map(|e| e as &dyn Fn(f64, &[f64]) -> f64),
            &opts.solver,
            &mut |t, xs| {
                trace.times.push(t);
                trace.outputs.push(model.output(t, xs, theta, seg.current));
                trace.currents.push(seg.current);
                if let Some(states) = &mut trace.states {
                    states.push(xs.to_vec());
                }
            },
        )?;
        trace.stats.merge(&sol.stats);
        x = sol.x_end;
        if let Some(te) = sol.event_time {
            trace.stopped_at = Some(te);
            break;
        }
        seg_start = seg_end;
    }
    Ok(trace)
}

/// Forward-sensitivity simulation: states are augmented with the n×d
/// sensitivity matrix S, dS/dt = (∂F/∂x)S + ∂F/∂θ with S(0) = ∂x0/∂θ, and
/// the trace gains ∂y/∂θ = (∂h/∂x)S + ∂h/∂θ at every sample.
///
/// Jacobians come from the model's registered analytic forms when present
/// and central finite differences otherwise. Slots that change the
/// geometry cannot be differentiated through the rebuild and are rejected.
pub fn integrate_with_sensitivities(
    model: &dyn CellModel,
    theta: &[f64],
    protocol: &Protocol,
    opts: &SimOptions,
) -> Result<Trace, ModelError> {
    check_theta(model, theta)?;
    protocol.validate()?;
    if let Some(slot) = model.slots().iter().find(|s| s.geometric) {
        return Err(ModelError::SensitivityUnsupported(format!(
            "parameter `{}` changes the discretisation",
            slot.name
        )));
    }
    if model.mass_diag().iter().any(|&m| m == 0.0) {
        return Err(ModelError::SensitivityUnsupported(
            "algebraic rows are not supported in the forward-sensitivity path".into(),
        ));
    }

    let n = model.dim();
    let d = theta.len();

    // S(0) = ∂x0/∂θ.
    let mut x_aug = vec![0.0; n * (1 + d)];
    x_aug[..n].copy_from_slice(&model.initial_state(theta, protocol.initial_soc));
    let mut init_jac = vec![0.0; n * d];
    if let Some(an) = model.analytic() {
        an.init_jac_theta(theta, protocol.initial_soc, &mut init_jac);
    } else {
        let mut th = theta.to_vec();
        for j in 0..d {
            let h = fd_step_sensitivity(theta[j]);
            th[j] = theta[j] + h;
            let xp = model.initial_state(&th, protocol.initial_soc);
            th[j] = theta[j] - h;
            let xm = model.initial_state(&th, protocol.initial_soc);
            th[j] = theta[j];
            for i in 0..n {
                init_jac[i * d + j] = (xp[i] - xm[i]) / (2.0 * h);
            }
        }
    }
    for j in 0..d {
        for i in 0..n {
            x_aug[n + j * n + i] = init_jac[i * d + j];
        }
    }

    let mut trace = Trace {
        times: Vec::with_capacity(protocol.t_eval.len()),
        outputs: Vec::with_capacity(protocol.t_eval.len()),
        currents: Vec::with_capacity(protocol.t_eval.len()),
        states: opts.record_states.then(Vec::new),
        output_sens: Some(Vec::with_capacity(protocol.t_eval.len())),
        stats: SolverStats::default(),
        stopped_at: None,
    };

    let mut seg_start = 0.0;
    for (si, seg) in protocol.segments.iter().enumerate() {
        let seg_end = seg_start + seg.duration;
        let last = si + 1 == protocol.segments.len();
        let sys = AugmentedSystem::new(model, theta, seg.current);

        let lo = protocol.t_eval.partition_point(|&t| t < seg_start);
        let hi = if last {
            protocol.t_eval.len()
        } else {
            protocol.t_eval.partition_point(|&t| t < seg_end)
        };
        let t_eval = &protocol.t_eval[lo..hi];

        let sol = integrate_span(
            &sys,
            seg_start,
            seg_end,
            &x_aug,
            t_eval,
            None,
            &opts.solver,
            &mut |t, xs| {
                let (state, sens) = xs.split_at(n);
                trace.times.push(t);
                trace.outputs.push(model.output(t, state, theta, seg.current));
                trace.currents.push(seg.current);
                trace
                    .output_sens
                    .as_mut()
                    .unwrap()
                    .push(sys.output_sensitivity(t, state, sens));
                if let Some(states) = &mut trace.states {
                    states.push(state.to_vec());
                }
            },
        )?;
        trace.stats.merge(&sol.stats);
        x_aug = sol.x_end;
        seg_start = seg_end;
    }
    Ok(trace)
}

/// Augments a model with forward sensitivity columns.
struct AugmentedSystem<'a> {
    model: &'a dyn CellModel,
    theta: &'a [f64],
    current: f64,
    n: usize,
    d: usize,
}

impl<'a> AugmentedSystem<'a> {
    fn new(model: &'a dyn CellModel, theta: &'a [f64], current: f64) -> Self {
        AugmentedSystem { model, theta, current, n: model.dim(), d: theta.len() }
    }

    /// ∂F/∂x (n×n) and ∂F/∂θ (n×d), both row-major.
    fn state_jacobians(&self, t: f64, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (n, d) = (self.n, self.d);
        let mut jx = vec![0.0; n * n];
        let mut jth = vec![0.0; n * d];
        if let Some(an) = self.model.analytic() {
            an.jac_state(t, x, self.theta, self.current, &mut jx);
            an.jac_theta(t, x, self.theta, self.current, &mut jth);
            return (jx, jth);
        }
        let mut xp = x.to_vec();
        let mut fp = vec![0.0; n];
        let mut fm = vec![0.0; n];
        for j in 0..n {
            let h = fd_step_sensitivity(x[j]);
            xp[j] = x[j] + h;
            self.model.rhs(t, &xp, self.theta, self.current, &mut fp);
            xp[j] = x[j] - h;
            self.model.rhs(t, &xp, self.theta, self.current, &mut fm);
            xp[j] = x[j];
            for i in 0..n {
                jx[i * n + j] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        let mut th = self.theta.to_vec();
        for j in 0..d {
            let h = fd_step_sensitivity(self.theta[j]);
            th[j] = self.theta[j] + h;
            self.model.rhs(t, x, &th, self.current, &mut fp);
            th[j] = self.theta[j] - h;
            self.model.rhs(t, x, &th, self.current, &mut fm);
            th[j] = self.theta[j];
            for i in 0..n {
                jth[i * d + j] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        (jx, jth)
    }

    /// ∂y/∂θ = (∂h/∂x)·S + ∂h/∂θ at one instant.
    fn output_sensitivity(&self, t: f64, state: &[f64], sens: &[f64]) -> Vec<f64> {
        let (n, d) = (self.n, self.d);
        let mut hx = vec![0.0; n];
        let mut hth = vec![0.0; d];
        if let Some(an) = self.model.analytic() {
            an.out_grad_state(t, state, self.theta, self.current, &mut hx);
            an.out_grad_theta(t, state, self.theta, self.current, &mut hth);
        } else {
            let mut xp = state.to_vec();
            for j in 0..n {
                let h = fd_step_sensitivity(state[j]);
                xp[j] = state[j] + h;
                let yp = self.model.output(t, &xp, self.theta, self.current);
                xp[j] = state[j] - h;
                let ym = self.model.output(t, &xp, self.theta, self.current);
                xp[j] = state[j];
                hx[j] = (yp - ym) / (2.0 * h);
            }
            let mut th = self.theta.to_vec();
            for j in 0..d {
                let h = fd_step_sensitivity(self.theta[j]);
                th[j] = self.theta[j] + h;
                let yp = self.model.output(t, state, &th, self.current);
                th[j] = self.theta[j] - h;
                let ym = self.model.output(t, state, &th, self.current);
                th[j] = self.theta[j];
                hth[j] = (yp - ym) / (2.0 * h);
            }
        }
        let mut grad = hth;
        for j in 0..d {
            let col = &sens[j * n..(j + 1) * n];
            grad[j] += hx.iter().zip(col).map(|(&a, &b)| a * b).sum::<f64>();
        }
        grad
    }
}

impl OdeSystem for AugmentedSystem<'_> {
    fn dim(&self) -> usize {
        self.n * (1 + self.d)
    }
    fn error_dim(&self) -> usize {
        self.n
    }
    fn rhs(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let (n, d) = (self.n, self.d);
        let (state, sens) = x.split_at(n);
        self.model.rhs(t, state, self.theta, self.current, &mut out[..n]);
        let (jx, jth) = self.state_jacobians(t, state);
        for j in 0..d {
            let col = &sens[j * n..(j + 1) * n];
            let dcol = &mut out[n + j * n..n + (j + 1) * n];
            for i in 0..n {
                let mut acc = jth[i * d + j];
                let row = &jx[i * n..(i + 1) * n];
                for (a, s) in row.iter().zip(col) {
                    acc += a * s;
                }
                dcol[i] = acc;
            }
        }
    }
    fn check_state(&self, _t: f64, x: &[f64]) -> Result<(), String> {
        self.model.check_state(&x[..self.n], self.theta, self.current)
    }
}

/// Finds the rest state x* with F(t, x*, θ, I=0) = 0 at the requested state
/// of charge; residual below 1e-10 in the infinity norm.
pub fn find_steady_state(
    model: &dyn CellModel,
    theta: &[f64],
    soc: f64,
) -> Result<Vec<f64>, ModelError> {
    check_theta(model, theta)?;
    let mut x = model.initial_state(theta, soc);
    let mut residual = |x: &[f64], out: &mut [f64]| {
        model.rhs(0.0, x, theta, 0.0, out);
    };
    match damped_newton(&mut residual, &mut x, 1e-11, 50) {
        Ok(_) => Ok(x),
        Err((residual, iters)) => Err(ModelError::SteadyState { residual, iters }),
    }
}

/// Model description that can be (re)built for a given θ.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub enum ModelConfig {
    Ecm(EcmConfig),
    Spm(SpmConfig),
}

impl ModelConfig {
    /// Is the named slot geometric for this model kind?
    pub fn slot_geometric(&self, name: &str) -> Result<bool, ModelError> {
        match self {
            ModelConfig::Ecm(_) => {
                ecm::slot_index(name).ok_or_else(|| ModelError::UnknownSlot(name.into()))?;
                Ok(false)
            }
            ModelConfig::Spm(_) => spm::slot_geometric(name)
                .ok_or_else(|| ModelError::UnknownSlot(name.into())),
        }
    }

    /// Builds the model with geometric slot values baked in from θ.
    pub fn build(
        &self,
        slot_names: &[String],
        theta: &[f64],
    ) -> Result<Arc<dyn CellModel>, ModelError> {
        match self {
            ModelConfig::Ecm(cfg) => Ok(Arc::new(EcmModel::new(cfg.clone(), slot_names)?)),
            ModelConfig::Spm(cfg) => {
                let mut cfg = cfg.clone();
                for (name, &value) in slot_names.iter().zip(theta) {
                    if spm::slot_geometric(name)
                        .ok_or_else(|| ModelError::UnknownSlot(name.clone()))?
                    {
                        spm::apply_geometric(&mut cfg, name, value);
                    }
                }
                Ok(Arc::new(SpmModel::new(cfg, slot_names)?))
            }
        }
    }
}

struct CacheState {
    geom_key: Vec<f64>,
    model: Option<Arc<dyn CellModel>>,
    rebuilds: u64,
}

/// Caches the built model across θ updates, re-discretising only when a
/// geometric slot value actually changed. Rebuilds are serialised behind a
/// mutex; returned models are immutable snapshots safe to integrate
/// concurrently.
pub struct ModelHandle {
    config: ModelConfig,
    slot_names: Vec<String>,
    geometric: Vec<bool>,
    cache: Mutex<CacheState>,
}

impl ModelHandle {
    pub fn new(config: ModelConfig, slot_names: Vec<String>) -> Result<Self, ModelError> {
        let geometric = slot_names
            .iter()
            .map(|n| config.slot_geometric(n))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ModelHandle {
            config,
            slot_names,
            geometric,
            cache: Mutex::new(CacheState { geom_key: Vec::new(), model: None, rebuilds: 0 }),
        })
    }

    pub fn slot_names(&self) -> &[String] {
        &self.slot_names
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn has_geometric_slots(&self) -> bool {
        self.geometric.iter().any(|&g| g)
    }

    /// The model to use for this θ; cached unless a geometric value changed.
    pub fn system_for(&self, theta: &[f64]) -> Result<Arc<dyn CellModel>, ModelError> {
        if theta.len() != self.slot_names.len() {
            return Err(ModelError::ThetaDimension {
                expected: self.slot_names.len(),
                got: theta.len(),
            });
        }
        let key: Vec<f64> = theta
            .iter()
            .zip(&self.geometric)
            .filter_map(|(&v, &g)| g.then_some(v))
            .collect();
        let mut cache = self.cache.lock().expect("model cache poisoned");
        if cache.model.is_none() || cache.geom_key != key {
            let model = self.config.build(&self.slot_names, theta)?;
            cache.model = Some(model);
            cache.geom_key = key;
            cache.rebuilds += 1;
        }
        Ok(cache.model.as_ref().unwrap().clone())
    }

    /// Number of discretisation builds performed so far.
    pub fn rebuild_count(&self) -> u64 {
        self.cache.lock().expect("model cache poisoned").rebuilds
    }
}

/// Convenience used by tests and the solver module docs.
pub fn solver_defaults() -> SolverOptions {
    solver::SolverOptions::default()
}
