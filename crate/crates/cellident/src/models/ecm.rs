//! Thévenin equivalent circuit model: OCV source, series resistance and RC
//! relaxation branches.
//!
//! States are [SOC, V₁, …, V_m] with
//!
//! * dSOC/dt = −I / (3600 Q),
//! * dVᵢ/dt = I/Cᵢ − Vᵢ/(RᵢCᵢ),
//! * y = OCV(SOC) − I·R₀ − ΣVᵢ,
//!
//! discharge current positive. All Jacobians are registered analytically,
//! so the sensitivity and impedance layers use exact derivatives.

use super::tables::Table1d;
use super::{AnalyticJacobians, CellModel, ModelError, SlotInfo};
use serde::{Deserialize, Serialize};

/// One parallel resistor–capacitor relaxation branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RcPair {
    /// Ω
    pub resistance: f64,
    /// F
    pub capacitance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EcmConfig {
    /// Series resistance, Ω.
    pub series_resistance: f64,
    pub rc_pairs: Vec<RcPair>,
    /// Cell capacity, Ah.
    pub capacity_ah: f64,
    /// Open-circuit voltage vs state of charge, strictly increasing.
    pub ocv: Table1d,
}

impl EcmConfig {
    /// A 5 Ah cell with one 20 s relaxation branch; the stock test article
    /// used across the guide and test suites.
    pub fn reference_cell() -> EcmConfig {
        // Gently curved OCV from 3.0 V to 4.2 V.
        let ocv = Table1d::from_fn(0.0, 1.0, 101, |s| 3.0 + 1.0 * s + 0.2 * s * s).unwrap();
        EcmConfig {
            series_resistance: 0.01,
            rc_pairs: vec![RcPair { resistance: 0.02, capacitance: 1000.0 }],
            capacity_ah: 5.0,
            ocv,
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        if !(self.series_resistance > 0.0) {
            return Err(ModelError::BadConfig("series resistance must be positive".into()));
        }
        if !(self.capacity_ah > 0.0) {
            return Err(ModelError::BadConfig("capacity must be positive".into()));
        }
        for (i, rc) in self.rc_pairs.iter().enumerate() {
            if !(rc.resistance > 0.0 && rc.capacitance > 0.0) {
                return Err(ModelError::BadConfig(format!(
                    "RC pair {} must have positive resistance and capacitance",
                    i + 1
                )));
            }
        }
        let (lo, hi) = self.ocv.domain();
        if lo > 0.0 || hi < 1.0 {
            return Err(ModelError::BadConfig(
                "OCV table must cover the SOC range [0, 1]".into(),
            ));
        }
        // Table1d enforces strict monotonicity; require increasing here.
        let first = self.ocv.eval(lo);
        let last = self.ocv.eval(hi);
        if last <= first {
            return Err(ModelError::BadConfig("OCV must increase with SOC".into()));
        }
        Ok(())
    }
}

/// Bindable coefficients: `r0`, `q`, and `r1`/`c1`, `r2`/`c2`, … per branch.
pub fn slot_index(name: &str) -> Option<EcmSlot> {
    match name {
        "r0" => Some(EcmSlot::SeriesResistance),
        "q" => Some(EcmSlot::Capacity),
        _ => {
            let (kind, idx) = name.split_at(1);
            let i: usize = idx.parse().ok()?;
            if i == 0 {
                return None;
            }
            match kind {
                "r" => Some(EcmSlot::BranchResistance(i - 1)),
                "c" => Some(EcmSlot::BranchCapacitance(i - 1)),
                _ => None,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EcmSlot {
    SeriesResistance,
    Capacity,
    BranchResistance(usize),
    BranchCapacitance(usize),
}

#[derive(Debug)]
pub struct EcmModel {
    cfg: EcmConfig,
    slots: Vec<SlotInfo>,
    slot_kinds: Vec<EcmSlot>,
    mass: Vec<f64>,
}

impl EcmModel {
    pub fn new(cfg: EcmConfig, slot_names: &[impl AsRef<str>]) -> Result<Self, ModelError> {
        cfg.validate()?;
        let mut slot_kinds = Vec::with_capacity(slot_names.len());
        let mut slots = Vec::with_capacity(slot_names.len());
        for name in slot_names {
            let name = name.as_ref();
            let kind =
                slot_index(name).ok_or_else(|| ModelError::UnknownSlot(name.to_string()))?;
            match kind {
                EcmSlot::BranchResistance(i) | EcmSlot::BranchCapacitance(i)
                    if i >= cfg.rc_pairs.len() =>
                {
                    return Err(ModelError::UnknownSlot(name.to_string()));
                }
                _ => {}
            }
            slot_kinds.push(kind);
            slots.push(SlotInfo { name: name.to_string(), geometric: false });
        }
        let mass = vec![1.0; 1 + cfg.rc_pairs.len()];
        Ok(EcmModel { cfg, slots, slot_kinds, mass })
    }

    /// Effective coefficient values with θ overriding the bound slots.
    fn resolve(&self, theta: &[f64]) -> (f64, f64, Vec<RcPair>) {
        let mut r0 = self.cfg.series_resistance;
        let mut q = self.cfg.capacity_ah;
        let mut rc = self.cfg.rc_pairs.clone();
        for (kind, &v) in self.slot_kinds.iter().zip(theta) {
            match *kind {
                EcmSlot::SeriesResistance => r0 = v,
                EcmSlot::Capacity => q = v,
                EcmSlot::BranchResistance(i) => rc[i].resistance = v,
                EcmSlot::BranchCapacitance(i) => rc[i].capacitance = v,
            }
        }
        (r0, q, rc)
    }

    pub fn config(&self) -> &EcmConfig {
        &self.cfg
    }
}

impl CellModel for EcmModel {
    fn dim(&self) -> usize {
        1 + self.cfg.rc_pairs.len()
    }

    fn mass_diag(&self) -> &[f64] {
        &self.mass
    }

    fn rhs(&self, _t: f64, x: &[f64], theta: &[f64], current: f64, out: &mut [f64]) {
        let (_, q, rc) = self.resolve(theta);
        out[0] = -current / (3600.0 * q);
        for (i, pair) in rc.iter().enumerate() {
            out[1 + i] = current / pair.capacitance
                - x[1 + i] / (pair.resistance * pair.capacitance);
        }
    }

    fn output(&self, _t: f64, x: &[f64], theta: &[f64], current: f64) -> f64 {
        let (r0, _, _) = self.resolve(theta);
        let polarisation: f64 = x[1..].iter().sum();
        self.cfg.ocv.eval(x[0]) - current * r0 - polarisation
    }

    fn initial_state(&self, _theta: &[f64], soc0: f64) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        x[0] = soc0;
        x
    }

    fn slots(&self) -> &[SlotInfo] {
        &self.slots
    }

    fn check_state(&self, x: &[f64], _theta: &[f64], _current: f64) -> Result<(), String> {
        // A small overrun is tolerated; the OCV table clamps at its ends.
        if x[0] < -0.02 || x[0] > 1.02 {
            return Err(format!("state of charge {:.4} left [0, 1]", x[0]));
        }
        Ok(())
    }

    fn analytic(&self) -> Option<&dyn AnalyticJacobians> {
        Some(self)
    }

    fn capacity_ah(&self, theta: &[f64]) -> f64 {
        self.resolve(theta).1
    }
}

impl AnalyticJacobians for EcmModel {
    fn jac_state(&self, _t: f64, _x: &[f64], theta: &[f64], _current: f64, out: &mut [f64]) {
        let (_, _, rc) = self.resolve(theta);
        let n = self.dim();
        out.fill(0.0);
        for (i, pair) in rc.iter().enumerate() {
            out[(1 + i) * n + (1 + i)] = -1.0 / (pair.resistance * pair.capacitance);
        }
    }

    fn jac_theta(&self, _t: f64, x: &[f64], theta: &[f64], current: f64, out: &mut [f64]) {
        let (_, q, rc) = self.resolve(theta);
        let d = theta.len();
        out.fill(0.0);
        for (j, kind) in self.slot_kinds.iter().enumerate() {
            match *kind {
                EcmSlot::SeriesResistance => {}
                EcmSlot::Capacity => {
                    out[j] = current / (3600.0 * q * q);
                }
                EcmSlot::BranchResistance(i) => {
                    let RcPair { resistance: r, capacitance: c } = rc[i];
                    out[(1 + i) * d + j] = x[1 + i] / (r * r * c);
                }
                EcmSlot::BranchCapacitance(i) => {
                    let RcPair { resistance: r, capacitance: c } = rc[i];
                    out[(1 + i) * d + j] = -current / (c * c) + x[1 + i] / (r * c * c);
                }
            }
        }
    }

    fn out_grad_state(&self, _t: f64, x: &[f64], _theta: &[f64], _current: f64, out: &mut [f64]) {
        out[0] = self.cfg.ocv.slope(x[0]);
        for o in out[1..].iter_mut() {
            *o = -1.0;
        }
    }

    fn out_grad_theta(&self, _t: f64, _x: &[f64], _theta: &[f64], current: f64, out: &mut [f64]) {
        out.fill(0.0);
        for (j, kind) in self.slot_kinds.iter().enumerate() {
            if matches!(kind, EcmSlot::SeriesResistance) {
                out[j] = -current;
            }
        }
    }

    fn jac_current(&self, _t: f64, _x: &[f64], theta: &[f64], _current: f64, out: &mut [f64]) {
        let (_, q, rc) = self.resolve(theta);
        out[0] = -1.0 / (3600.0 * q);
        for (i, pair) in rc.iter().enumerate() {
            out[1 + i] = 1.0 / pair.capacitance;
        }
    }

    fn out_grad_current(&self, _t: f64, _x: &[f64], theta: &[f64], _current: f64) -> f64 {
        let (r0, _, _) = self.resolve(theta);
        -r0
    }

    fn init_jac_theta(&self, theta: &[f64], _soc0: f64, out: &mut [f64]) {
        // The rest state [soc0, 0, …] does not depend on any slot.
        let _ = theta;
        out.fill(0.0);
    }
}
