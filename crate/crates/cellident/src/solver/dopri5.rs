//! Dormand–Prince 5(4) with PI step control and dense output.

use super::newton::project_algebraic;
use super::{OdeSystem, SolverError, SolverOptions, SolverStats};

// Butcher tableau (Dormand & Prince 1980), FSAL form: 7 stages, 6 fresh
// evaluations per step, k7 = f(t+h, y_new).
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// Error coefficients: 5th-order weights minus the embedded 4th-order ones.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
// Dense output weights for the quartic interpolant.
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const EXPO1: f64 = 0.2 - BETA * 0.75;
const MAX_GROW: f64 = 10.0;
const MAX_SHRINK: f64 = 5.0;

/// End state of one integration span.
#[derive(Debug, Clone)]
pub struct Solution {
    pub t_end: f64,
    pub x_end: Vec<f64>,
    pub stats: SolverStats,
    /// Set when the event function crossed zero and stopped the run early.
    pub event_time: Option<f64>,
}

/// Quartic dense-output interpolant over one accepted step.
struct Interpolant {
    t_old: f64,
    h: f64,
    cont: [Vec<f64>; 5],
}

impl Interpolant {
    fn eval_into(&self, t: f64, out: &mut [f64]) {
        let theta = (t - self.t_old) / self.h;
        let theta1 = 1.0 - theta;
        for i in 0..out.len() {
            out[i] = self.cont[0][i]
                + theta
                    * (self.cont[1][i]
                        + theta1
                            * (self.cont[2][i]
                                + theta * (self.cont[3][i] + theta1 * self.cont[4][i])));
        }
    }
}

/// Integrates `sys` from `t0` to `tf`, reporting dense-output values at the
/// sorted instants `t_eval` through `emit(t, x)`.
///
/// With an `event` function, the run stops at the first downward zero
/// crossing (positive to non-positive), localised on the dense output; the
/// crossing point is also emitted.
#[allow(clippy::too_many_arguments)]
pub fn integrate_span<S: OdeSystem>(
    sys: &S,
    t0: f64,
    tf: f64,
    x0: &[f64],
    t_eval: &[f64],
    event: Option<&dyn Fn(f64, &[f64]) -> f64>,
    opts: &SolverOptions,
    emit: &mut dyn FnMut(f64, &[f64]),
) -> Result<Solution, SolverError> {
    let n = sys.dim();
    if x0.len() != n {
        return Err(SolverError::BadSetup(format!(
            "initial state has dimension {}, system has {}",
            x0.len(),
            n
        )));
    }
    if !(tf > t0) {
        return Err(SolverError::BadSetup(format!("need tf > t0, got [{t0}, {tf}]")));
    }
    if t_eval.windows(2).any(|w| w[0] > w[1]) {
        return Err(SolverError::BadSetup("t_eval must be non-decreasing".into()));
    }

    let mut stats = SolverStats::default();
    let mass = sys.mass_diag();
    let has_algebraic = mass.map_or(false, |m| m.iter().any(|&mi| mi == 0.0));

    let mut t = t0;
    let mut x = x0.to_vec();
    if has_algebraic {
        // Consistent initial conditions for the algebraic rows.
        stats.newton_iters += project_algebraic(sys, t, &mut x)
            .map_err(|(residual, _)| SolverError::NewtonFailure { t, residual })?;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(SolverError::NonFinite { t, what: "initial state".into() });
    }

    let mut k: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; n]);
    let mut x_stage = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut x_interp = vec![0.0; n];

    // Stage derivative evaluation; algebraic rows are projected before the
    // rhs call and their reported derivative is forced to zero so they never
    // pollute the Runge–Kutta combination.
    let eval_rhs = |t: f64,
                    x: &mut [f64],
                    out: &mut [f64],
                    stats: &mut SolverStats|
     -> Result<(), SolverError> {
        if has_algebraic {
            stats.newton_iters += project_algebraic(sys, t, x)
                .map_err(|(residual, _)| SolverError::NewtonFailure { t, residual })?;
        }
        sys.rhs(t, x, out);
        stats.rhs_evals += 1;
        if let Some(m) = mass {
            for (o, &mi) in out.iter_mut().zip(m) {
                if mi == 0.0 {
                    *o = 0.0;
                }
            }
        }
        Ok(())
    };

    eval_rhs(t, &mut x, &mut k[0], &mut stats)?;

    let span = tf - t0;
    let max_step = opts.max_step.min(span);
    let mut h = match opts.initial_step {
        Some(h0) => h0.min(max_step),
        None => initial_step(sys, t, &x, &k[0], tf, opts, &mut stats),
    };
    let mut fac_old: f64 = 1e-4;

    let mut eval_idx = t_eval.partition_point(|&te| te < t0);
    // Emit any points that coincide with the start.
    while eval_idx < t_eval.len() && t_eval[eval_idx] <= t0 {
        emit(t_eval[eval_idx], &x);
        eval_idx += 1;
    }
    let mut event_old = event.map(|e| e(t, &x));

    let n_err = sys.error_dim().min(n);

    loop {
        if t >= tf {
            return Ok(Solution { t_end: t, x_end: x, stats, event_time: None });
        }
        if stats.steps + stats.rejected >= opts.max_steps {
            return Err(SolverError::MaxSteps { t, max_steps: opts.max_steps });
        }
        h = h.min(max_step);
        let mut last = false;
        if t + h >= tf {
            h = tf - t;
            last = true;
        }
        if h <= f64::EPSILON * t.abs().max(1.0) {
            return Err(SolverError::StepSizeUnderflow { t, h });
        }

        // Stages 2..7 (k[0] is the FSAL carry-over).
        let mut stage_failed = false;
        for s in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(s) {
                    let a = A[s][j];
                    if a != 0.0 {
                        acc += a * kj[i];
                    }
                }
                x_stage[i] = x[i] + h * acc;
            }
            let ts = t + C[s] * h;
            if eval_rhs(ts, &mut x_stage, &mut k[s], &mut stats).is_err() {
                stage_failed = true;
                break;
            }
            if k[s].iter().any(|v| !v.is_finite()) {
                stage_failed = true;
                break;
            }
        }
        // Stage 7 state is the 5th-order solution (A[6] row = b weights).
        x_new.copy_from_slice(&x_stage);

        let err = if stage_failed {
            f64::INFINITY
        } else {
            let mut err_acc = 0.0;
            for i in 0..n_err {
                let mut e = 0.0;
                for (j, kj) in k.iter().enumerate() {
                    if E[j] != 0.0 {
                        e += E[j] * kj[i];
                    }
                }
                e *= h;
                let sk = opts.atol + opts.rtol * x[i].abs().max(x_new[i].abs());
                err_acc += (e / sk) * (e / sk);
            }
            (err_acc / n_err as f64).sqrt()
        };

        if !err.is_finite() {
            stats.rejected += 1;
            h *= 0.25;
            continue;
        }

        if err <= 1.0 {
            // Accepted.
            stats.steps += 1;
            if let Err(detail) = sys.check_state(t + h, &x_new) {
                return Err(SolverError::StateViolation { t: t + h, detail });
            }

            let interp = build_interpolant(t, h, &x, &x_new, &k);
            let t_new = t + h;

            // Event localisation on the dense output.
            if let (Some(ev), Some(e_old)) = (event, event_old) {
                let e_new = ev(t_new, &x_new);
                if e_old > 0.0 && e_new <= 0.0 {
                    let t_star = bisect_event(sys, ev, &interp, t, t_new, &mut x_interp, &mut stats, has_algebraic)?;
                    while eval_idx < t_eval.len() && t_eval[eval_idx] <= t_star {
                        interp_at(sys, &interp, t_eval[eval_idx], &mut x_interp, &mut stats, has_algebraic)?;
                        emit(t_eval[eval_idx], &x_interp);
                        eval_idx += 1;
                    }
                    interp_at(sys, &interp, t_star, &mut x_interp, &mut stats, has_algebraic)?;
                    emit(t_star, &x_interp);
                    return Ok(Solution {
                        t_end: t_star,
                        x_end: x_interp.clone(),
                        stats,
                        event_time: Some(t_star),
                    });
                }
                event_old = Some(e_new);
            }

            while eval_idx < t_eval.len() && t_eval[eval_idx] <= t_new {
                let te = t_eval[eval_idx];
                if (te - t_new).abs() <= 1e-12 * t_new.abs().max(1.0) {
                    emit(te, &x_new);
                } else {
                    interp_at(sys, &interp, te, &mut x_interp, &mut stats, has_algebraic)?;
                    emit(te, &x_interp);
                }
                eval_idx += 1;
            }

            // FSAL: k7 becomes k1 of the next step.
            let (head, tail) = k.split_at_mut(6);
            head[0].copy_from_slice(&tail[0]);
            x.copy_from_slice(&x_new);
            t = t_new;

            let fac11 = err.powf(EXPO1);
            let fac = (fac11 / fac_old.powf(BETA) / SAFETY).clamp(1.0 / MAX_GROW, MAX_SHRINK);
            h /= fac;
            fac_old = err.max(1e-4);
            if last && t >= tf {
                return Ok(Solution { t_end: t, x_end: x, stats, event_time: None });
            }
        } else {
            stats.rejected += 1;
            let fac11 = err.powf(EXPO1);
            h /= (fac11 / SAFETY).min(MAX_SHRINK);
        }
    }
}

fn build_interpolant(
    t: f64,
    h: f64,
    x_old: &[f64],
    x_new: &[f64],
    k: &[Vec<f64>; 7],
) -> Interpolant {
    let n = x_old.len();
    let mut cont: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);
    for i in 0..n {
        let dy = x_new[i] - x_old[i];
        let bspl = h * k[0][i] - dy;
        cont[0][i] = x_old[i];
        cont[1][i] = dy;
        cont[2][i] = bspl;
        cont[3][i] = dy - h * k[6][i] - bspl;
        let mut dsum = 0.0;
        for (j, kj) in k.iter().enumerate() {
            if D[j] != 0.0 {
                dsum += D[j] * kj[i];
            }
        }
        cont[4][i] = h * dsum;
    }
    Interpolant { t_old: t, h, cont }
}

fn interp_at<S: OdeSystem>(
    sys: &S,
    interp: &Interpolant,
    t: f64,
    out: &mut Vec<f64>,
    stats: &mut SolverStats,
    has_algebraic: bool,
) -> Result<(), SolverError> {
    interp.eval_into(t, out);
    if has_algebraic {
        stats.newton_iters += project_algebraic(sys, t, out)
            .map_err(|(residual, _)| SolverError::NewtonFailure { t, residual })?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn bisect_event<S: OdeSystem>(
    sys: &S,
    event: &dyn Fn(f64, &[f64]) -> f64,
    interp: &Interpolant,
    mut lo: f64,
    mut hi: f64,
    work: &mut Vec<f64>,
    stats: &mut SolverStats,
    has_algebraic: bool,
) -> Result<f64, SolverError> {
    // lo has event > 0, hi has event <= 0.
    for _ in 0..200 {
        if (hi - lo) <= 1e-12 * hi.abs().max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        interp_at(sys, interp, mid, work, stats, has_algebraic)?;
        if event(mid, work) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Hairer-style automatic initial step selection.
fn initial_step<S: OdeSystem>(
    sys: &S,
    t0: f64,
    x0: &[f64],
    f0: &[f64],
    tf: f64,
    opts: &SolverOptions,
    stats: &mut SolverStats,
) -> f64 {
    let n = sys.error_dim().min(x0.len());
    let mut dnf = 0.0;
    let mut dny = 0.0;
    for i in 0..n {
        let sk = opts.atol + opts.rtol * x0[i].abs();
        dnf += (f0[i] / sk).powi(2);
        dny += (x0[i] / sk).powi(2);
    }
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
        1e-6
    } else {
        (dny / dnf).sqrt() * 0.01
    };
    h = h.min(tf - t0).min(opts.max_step);

    // One explicit Euler probe to estimate the second derivative.
    let mut x1 = vec![0.0; x0.len()];
    for i in 0..x0.len() {
        x1[i] = x0[i] + h * f0[i];
    }
    let mut f1 = vec![0.0; x0.len()];
    sys.rhs(t0 + h, &x1, &mut f1);
    stats.rhs_evals += 1;

    let mut der2 = 0.0;
    for i in 0..n {
        let sk = opts.atol + opts.rtol * x0[i].abs();
        der2 += ((f1[i] - f0[i]) / sk).powi(2);
    }
    let der2 = der2.sqrt() / h;
    let der12 = der2.max(dnf.sqrt());
    let h1 = if der12 <= 1e-15 {
        (1e-6f64).max(h * 1e-3)
    } else {
        (0.01 / der12).powf(0.2)
    };
    if !h1.is_finite() || !h.is_finite() {
        return 1e-6;
    }
    (100.0 * h).min(h1).min(tf - t0).min(opts.max_step)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Decay;
    impl OdeSystem for Decay {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, _t: f64, x: &[f64], out: &mut [f64]) {
            out[0] = -x[0];
        }
    }

    #[test]
    fn exponential_decay_matches_analytic() {
        let opts = SolverOptions { rtol: 1e-8, atol: 1e-12, ..Default::default() };
        let mut got = Vec::new();
        let sol = integrate_span(
            &Decay,
            0.0,
            1.0,
            &[1.0],
            &[0.25, 0.5, 1.0],
            None,
            &opts,
            &mut |t, x| got.push((t, x[0])),
        )
        .unwrap();
        assert_eq!(got.len(), 3);
        for &(t, v) in &got {
            assert!(
                (v - (-t).exp()).abs() < 1e-8,
                "x({t}) = {v}, expected {}",
                (-t).exp()
            );
        }
        assert!((sol.x_end[0] - (-1.0f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn halving_rtol_does_not_worsen_error() {
        let mut errs = Vec::new();
        for rtol in [1e-6, 5e-7] {
            let opts = SolverOptions { rtol, atol: 1e-14, ..Default::default() };
            let sol =
                integrate_span(&Decay, 0.0, 1.0, &[1.0], &[], None, &opts, &mut |_, _| {})
                    .unwrap();
            errs.push((sol.x_end[0] - (-1.0f64).exp()).abs());
        }
        assert!(errs[1] <= errs[0], "errors {errs:?}");
    }

    /// dx/dt = -x with the constraint 0 = y - x^2 exercises the algebraic
    /// Newton projection.
    struct DecayWithSquare {
        mass: [f64; 2],
    }
    impl OdeSystem for DecayWithSquare {
        fn dim(&self) -> usize {
            2
        }
        fn rhs(&self, _t: f64, x: &[f64], out: &mut [f64]) {
            out[0] = -x[0];
            out[1] = x[1] - x[0] * x[0];
        }
        fn mass_diag(&self) -> Option<&[f64]> {
            Some(&self.mass)
        }
    }

    #[test]
    fn algebraic_row_tracks_square_of_state() {
        let sys = DecayWithSquare { mass: [1.0, 0.0] };
        let opts = SolverOptions { rtol: 1e-9, atol: 1e-12, ..Default::default() };
        let mut points = Vec::new();
        // Deliberately inconsistent algebraic start; projection fixes it.
        integrate_span(&sys, 0.0, 1.0, &[1.0, 5.0], &[0.5, 1.0], None, &opts, &mut |t, x| {
            points.push((t, x[0], x[1]))
        })
        .unwrap();
        for &(t, x, y) in &points {
            let exact = (-t).exp();
            assert!((x - exact).abs() < 1e-8);
            assert!((y - exact * exact).abs() < 1e-8, "algebraic row y({t}) = {y}");
        }
    }

    #[test]
    fn event_stops_at_threshold() {
        let opts = SolverOptions::default();
        let event = |_t: f64, x: &[f64]| x[0] - 0.5;
        let sol = integrate_span(
            &Decay,
            0.0,
            5.0,
            &[1.0],
            &[],
            Some(&event),
            &opts,
            &mut |_, _| {},
        )
        .unwrap();
        let t_star = sol.event_time.expect("event must trigger");
        // x(t) = e^-t = 0.5 at t = ln 2.
        assert!((t_star - std::f64::consts::LN_2).abs() < 1e-9, "t* = {t_star}");
    }

    #[test]
    fn state_violation_is_typed_and_carries_time() {
        struct Guarded;
        impl OdeSystem for Guarded {
            fn dim(&self) -> usize {
                1
            }
            fn rhs(&self, _t: f64, x: &[f64], out: &mut [f64]) {
                out[0] = -x[0];
            }
            fn check_state(&self, _t: f64, x: &[f64]) -> Result<(), String> {
                if x[0] < 0.6 {
                    Err("below 0.6".into())
                } else {
                    Ok(())
                }
            }
        }
        let err = integrate_span(
            &Guarded,
            0.0,
            5.0,
            &[1.0],
            &[],
            None,
            &SolverOptions::default(),
            &mut |_, _| {},
        )
        .unwrap_err();
        match err {
            SolverError::StateViolation { t, .. } => assert!(t > 0.0 && t < 5.0),
            other => panic!("expected state violation, got {other:?}"),
        }
    }
}
