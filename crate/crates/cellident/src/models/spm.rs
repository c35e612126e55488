//! Single particle model with a contact-resistance submodel.
//!
//! Each electrode is reduced to one representative spherical particle.
//! Solid diffusion ∂c/∂t = (1/r²)∂/∂r(D r² ∂c/∂r) is discretised with
//! shell-uniform finite volumes (mass-conservative, second order), driven by
//! the pore-wall flux j = ±I/(F a L A) with a = 3ε/R. The terminal voltage
//! combines the open-circuit potentials at the particle surfaces,
//! Butler–Volmer overpotentials in asinh form, and an ohmic contact drop:
//!
//! y = U_p(x_p,surf) − U_n(x_n,surf) + η_p − η_n − I·R_c,
//! η_k = (2RT/F)·asinh(∓I / (2 a_k L_k A i₀,k)),
//! i₀,k = k_k F √c_e √(c_surf (c_max − c_surf)).

use super::tables::Table1d;
use super::{CellModel, ModelError, SlotInfo, FARADAY, GAS_CONSTANT};
use serde::{Deserialize, Serialize};

/// Per-electrode geometry, transport and thermodynamics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Electrode {
    /// Solid diffusivity, m²/s.
    pub diffusivity: f64,
    /// Particle radius, m.
    pub particle_radius: f64,
    /// Active material volume fraction.
    pub active_fraction: f64,
    /// Binder/conductive additive volume fraction (porosity is whatever
    /// remains: ε_porosity = 1 − ε_active − ε_inactive).
    pub inactive_fraction: f64,
    /// Electrode thickness, m.
    pub thickness: f64,
    /// Maximum lithium concentration, mol/m³.
    pub max_concentration: f64,
    /// Reaction rate constant in the exchange-current form
    /// i₀ = k F √c_e √(c_s(c_max − c_s)).
    pub reaction_rate: f64,
    /// Stoichiometry at 0% and 100% state of charge.
    pub stoich_at_soc0: f64,
    pub stoich_at_soc1: f64,
    /// Open-circuit potential vs stoichiometry, strictly decreasing on [0, 1].
    pub ocp: Table1d,
}

impl Electrode {
    fn stoich_at(&self, soc: f64) -> f64 {
        self.stoich_at_soc0 + soc * (self.stoich_at_soc1 - self.stoich_at_soc0)
    }

    /// Specific interfacial area a = 3ε/R, 1/m.
    fn specific_area(&self) -> f64 {
        3.0 * self.active_fraction / self.particle_radius
    }

    /// Charge moved while sweeping the whole stoichiometry window, coulombs
    /// per square metre of electrode area.
    fn window_charge_per_area(&self) -> f64 {
        self.thickness
            * self.active_fraction
            * self.max_concentration
            * (self.stoich_at_soc1 - self.stoich_at_soc0).abs()
            * FARADAY
    }

    fn validate(&self, label: &str) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::BadConfig(format!("{label} electrode: {msg}")));
        if !(self.diffusivity > 0.0) {
            return bad("diffusivity must be positive".into());
        }
        if !(self.particle_radius > 0.0) {
            return bad("particle radius must be positive".into());
        }
        if !(self.active_fraction > 0.0 && self.active_fraction < 1.0) {
            return bad(format!("active fraction {} outside (0, 1)", self.active_fraction));
        }
        if self.inactive_fraction < 0.0
            || self.active_fraction + self.inactive_fraction >= 1.0
        {
            return bad("active + inactive fractions must leave room for porosity".into());
        }
        if !(self.thickness > 0.0 && self.max_concentration > 0.0 && self.reaction_rate > 0.0) {
            return bad("thickness, max concentration and reaction rate must be positive".into());
        }
        for s in [self.stoich_at_soc0, self.stoich_at_soc1] {
            if !(s > 0.0 && s < 1.0) {
                return bad(format!("stoichiometry endpoint {s} outside (0, 1)"));
            }
        }
        let (lo, hi) = self.ocp.domain();
        if lo > 0.0 || hi < 1.0 {
            return bad("OCP table must cover the stoichiometry range [0, 1]".into());
        }
        if self.ocp.eval(hi) >= self.ocp.eval(lo) {
            return bad("OCP must decrease with stoichiometry".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpmConfig {
    pub negative: Electrode,
    pub positive: Electrode,
    /// Electrode plate area, m².
    pub electrode_area: f64,
    /// Electrolyte lithium concentration, mol/m³.
    pub electrolyte_concentration: f64,
    /// Cell temperature, K.
    pub temperature: f64,
    /// Ohmic contact resistance, Ω.
    pub contact_resistance: f64,
    /// Radial finite-volume shells per particle.
    pub shells: usize,
}

impl SpmConfig {
    /// The stock graphite/layered-oxide test cell used by the guide, the
    /// test suites and the shipped example configurations. Electrode
    /// stoichiometry windows are charge-balanced by construction, giving a
    /// theoretical capacity of about 3.57 Ah.
    pub fn reference_cell() -> SpmConfig {
        let u_neg = Table1d::from_fn(0.0, 1.0, 201, |x| {
            0.05 + (-12.0 * x).exp() + 0.12 * (1.0 - x)
        })
        .unwrap();
        let u_pos = Table1d::from_fn(0.0, 1.0, 201, |x| {
            3.0 + 1.5 * (1.0 - x) + 0.3 * (-8.0 * (x - 0.2)).exp()
        })
        .unwrap();

        let negative = Electrode {
            diffusivity: 3.3e-14,
            particle_radius: 5e-6,
            active_fraction: 0.6,
            inactive_fraction: 0.05,
            thickness: 85e-6,
            max_concentration: 30_000.0,
            reaction_rate: 6e-11,
            stoich_at_soc0: 0.03,
            stoich_at_soc1: 0.90,
            ocp: u_neg,
        };
        let mut positive = Electrode {
            diffusivity: 1e-14,
            particle_radius: 5e-6,
            active_fraction: 0.55,
            inactive_fraction: 0.05,
            thickness: 75e-6,
            max_concentration: 50_000.0,
            reaction_rate: 6e-11,
            stoich_at_soc0: 0.95,
            stoich_at_soc1: 0.30, // replaced below by the balanced value
            ocp: u_pos,
        };
        // Balance the positive window against the negative one so a full
        // SOC sweep moves the same charge through both electrodes.
        let swing = negative.window_charge_per_area()
            / (positive.thickness * positive.active_fraction * positive.max_concentration
                * FARADAY);
        positive.stoich_at_soc1 = positive.stoich_at_soc0 - swing;

        SpmConfig {
            negative,
            positive,
            electrode_area: 0.1,
            electrolyte_concentration: 1000.0,
            temperature: 298.15,
            contact_resistance: 0.010,
            shells: 20,
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        self.negative.validate("negative")?;
        self.positive.validate("positive")?;
        if self.shells < 3 {
            return Err(ModelError::BadConfig(format!(
                "need at least 3 radial shells, got {}",
                self.shells
            )));
        }
        if !(self.electrode_area > 0.0
            && self.electrolyte_concentration > 0.0
            && self.temperature > 0.0
            && self.contact_resistance >= 0.0)
        {
            return Err(ModelError::BadConfig(
                "area, electrolyte concentration and temperature must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Slot identifiers understood by [`SpmModel`]; `None` for unknown names.
/// Geometric slots are baked into the discretisation at build time.
pub fn slot_geometric(name: &str) -> Option<bool> {
    match name {
        "negative_particle_diffusivity"
        | "positive_particle_diffusivity"
        | "contact_resistance"
        | "negative_reaction_rate"
        | "positive_reaction_rate"
        | "electrolyte_concentration" => Some(false),
        "negative_particle_radius"
        | "positive_particle_radius"
        | "negative_electrode_thickness"
        | "positive_electrode_thickness"
        | "negative_active_fraction"
        | "positive_active_fraction"
        | "electrode_area" => Some(true),
        _ => None,
    }
}

/// Writes a geometric slot value into the configuration before a rebuild.
pub fn apply_geometric(cfg: &mut SpmConfig, name: &str, value: f64) {
    match name {
        "negative_particle_radius" => cfg.negative.particle_radius = value,
        "positive_particle_radius" => cfg.positive.particle_radius = value,
        "negative_electrode_thickness" => cfg.negative.thickness = value,
        "positive_electrode_thickness" => cfg.positive.thickness = value,
        "negative_active_fraction" => cfg.negative.active_fraction = value,
        "positive_active_fraction" => cfg.positive.active_fraction = value,
        "electrode_area" => cfg.electrode_area = value,
        _ => {}
    }
}

#[derive(Debug, Clone, Copy)]
enum SpmSlot {
    NegDiffusivity,
    PosDiffusivity,
    ContactResistance,
    NegReactionRate,
    PosReactionRate,
    ElectrolyteConcentration,
    /// Value baked into the configuration at build time.
    Geometric,
}

fn slot_kind(name: &str) -> Option<SpmSlot> {
    Some(match name {
        "negative_particle_diffusivity" => SpmSlot::NegDiffusivity,
        "positive_particle_diffusivity" => SpmSlot::PosDiffusivity,
        "contact_resistance" => SpmSlot::ContactResistance,
        "negative_reaction_rate" => SpmSlot::NegReactionRate,
        "positive_reaction_rate" => SpmSlot::PosReactionRate,
        "electrolyte_concentration" => SpmSlot::ElectrolyteConcentration,
        _ => {
            if slot_geometric(name)? {
                return Some(SpmSlot::Geometric);
            }
            return None;
        }
    })
}

/// Radial finite-volume coefficients for one particle. The 4π factors of
/// face areas and shell volumes cancel and are dropped throughout.
#[derive(Debug, Clone)]
struct Grid {
    shells: usize,
    dr: f64,
    /// Coupling to the inner neighbour: A(i)/(Δr·V_i), by cell.
    g_in: Vec<f64>,
    /// Coupling to the outer neighbour: A(i+1)/(Δr·V_i), by cell.
    g_out: Vec<f64>,
    /// Surface term A(N)/V_{N−1} multiplying the boundary flux.
    surf: f64,
    /// Shell volumes (scaled), for conservative averages.
    volumes: Vec<f64>,
    /// Weights reconstructing c(R) from the outer three shell averages by a
    /// quadratic fit. Exact for uniform profiles and for the parabolic
    /// quasi-steady profile, so the surface value stays second-order through
    /// transients.
    surf_weights: [f64; 3],
}

impl Grid {
    fn new(radius: f64, shells: usize) -> Grid {
        let dr = radius / shells as f64;
        let face = |i: usize| {
            let r = i as f64 * dr;
            r * r
        };
        let volume = |i: usize| {
            let r0 = i as f64 * dr;
            let r1 = (i + 1) as f64 * dr;
            (r1 * r1 * r1 - r0 * r0 * r0) / 3.0
        };
        let volumes: Vec<f64> = (0..shells).map(volume).collect();
        let g_in = (0..shells).map(|i| face(i) / (dr * volumes[i])).collect();
        let g_out = (0..shells).map(|i| face(i + 1) / (dr * volumes[i])).collect();
        let surf = face(shells) / volumes[shells - 1];
        let surf_weights = surface_weights(radius, dr, shells);
        Grid { shells, dr, g_in, g_out, surf, volumes, surf_weights }
    }
}

/// Solves for w such that Σ wₛ · shell_avg(p) = p(R) for every quadratic p,
/// over the outer three shells.
fn surface_weights(radius: f64, dr: f64, shells: usize) -> [f64; 3] {
    use nalgebra::{Matrix3, Vector3};
    // Volume-weighted moments of r^k over a shell [r0, r1].
    let moment = |s: usize, k: i32| {
        let r0 = s as f64 * dr;
        let r1 = (s + 1) as f64 * dr;
        let p = k + 3;
        ((r1.powi(p) - r0.powi(p)) / p as f64) / ((r1.powi(3) - r0.powi(3)) / 3.0)
    };
    let rows: Vec<usize> = (shells - 3..shells).collect();
    let m = Matrix3::from_fn(|i, j| moment(rows[i], j as i32));
    let target = Vector3::new(1.0, radius, radius * radius);
    let w = m
        .transpose()
        .lu()
        .solve(&target)
        .expect("surface reconstruction system is well conditioned");
    [w[0], w[1], w[2]]
}

struct Resolved {
    diffusivity: [f64; 2],
    reaction_rate: [f64; 2],
    contact_resistance: f64,
    electrolyte: f64,
}

pub struct SpmModel {
    cfg: SpmConfig,
    grid: [Grid; 2],
    slots: Vec<SlotInfo>,
    slot_kinds: Vec<SpmSlot>,
    mass: Vec<f64>,
}

const NEG: usize = 0;
const POS: usize = 1;

impl SpmModel {
    pub fn new(cfg: SpmConfig, slot_names: &[impl AsRef<str>]) -> Result<Self, ModelError> {
        cfg.validate()?;
        let mut slots = Vec::with_capacity(slot_names.len());
        let mut slot_kinds = Vec::with_capacity(slot_names.len());
        for name in slot_names {
            let name = name.as_ref();
            let kind = slot_kind(name).ok_or_else(|| ModelError::UnknownSlot(name.into()))?;
            slots.push(SlotInfo {
                name: name.to_string(),
                geometric: matches!(kind, SpmSlot::Geometric),
            });
            slot_kinds.push(kind);
        }
        let grid = [
            Grid::new(cfg.negative.particle_radius, cfg.shells),
            Grid::new(cfg.positive.particle_radius, cfg.shells),
        ];
        let mass = vec![1.0; 2 * cfg.shells];
        Ok(SpmModel { cfg, grid, slots, slot_kinds, mass })
    }

    pub fn config(&self) -> &SpmConfig {
        &self.cfg
    }

    fn electrode(&self, e: usize) -> &Electrode {
        if e == NEG {
            &self.cfg.negative
        } else {
            &self.cfg.positive
        }
    }

    fn resolve(&self, theta: &[f64]) -> Resolved {
        let mut r = Resolved {
            diffusivity: [self.cfg.negative.diffusivity, self.cfg.positive.diffusivity],
            reaction_rate: [self.cfg.negative.reaction_rate, self.cfg.positive.reaction_rate],
            contact_resistance: self.cfg.contact_resistance,
            electrolyte: self.cfg.electrolyte_concentration,
        };
        for (kind, &v) in self.slot_kinds.iter().zip(theta) {
            match kind {
                SpmSlot::NegDiffusivity => r.diffusivity[NEG] = v,
                SpmSlot::PosDiffusivity => r.diffusivity[POS] = v,
                SpmSlot::ContactResistance => r.contact_resistance = v,
                SpmSlot::NegReactionRate => r.reaction_rate[NEG] = v,
                SpmSlot::PosReactionRate => r.reaction_rate[POS] = v,
                SpmSlot::ElectrolyteConcentration => r.electrolyte = v,
                SpmSlot::Geometric => {}
            }
        }
        r
    }

    /// Pore-wall molar flux for electrode `e`, positive out of the particle.
    fn boundary_flux(&self, e: usize, current: f64) -> f64 {
        let el = self.electrode(e);
        let sign = if e == NEG { 1.0 } else { -1.0 };
        sign * current
            / (FARADAY * el.specific_area() * el.thickness * self.cfg.electrode_area)
    }

    /// Surface concentration reconstructed from the outer three shell
    /// averages (second-order accurate, exact at equilibrium and at the
    /// parabolic quasi-steady profile).
    fn surface_concentration(&self, e: usize, x: &[f64]) -> f64 {
        let n = self.cfg.shells;
        let w = &self.grid[e].surf_weights;
        let c = &x[e * n..(e + 1) * n];
        w[0] * c[n - 3] + w[1] * c[n - 2] + w[2] * c[n - 1]
    }

    /// Volume-weighted mean concentration of one particle.
    pub fn mean_concentration(&self, e: usize, x: &[f64]) -> f64 {
        let n = self.cfg.shells;
        let grid = &self.grid[e];
        let total: f64 = grid.volumes.iter().sum();
        x[e * n..(e + 1) * n]
            .iter()
            .zip(&grid.volumes)
            .map(|(&c, &v)| c * v)
            .sum::<f64>()
            / total
    }

    fn overpotential(&self, e: usize, c_surf: f64, current: f64, res: &Resolved) -> f64 {
        let el = self.electrode(e);
        // Clamp keeps the exchange current finite while the admissibility
        // check is what actually reports a violation.
        let c = c_surf.clamp(1e-9 * el.max_concentration, (1.0 - 1e-9) * el.max_concentration);
        let i0 = res.reaction_rate[e]
            * FARADAY
            * res.electrolyte.sqrt()
            * (c * (el.max_concentration - c)).sqrt();
        let scale =
            2.0 * el.specific_area() * el.thickness * self.cfg.electrode_area * i0;
        let sign = if e == NEG { 1.0 } else { -1.0 };
        let thermal = 2.0 * GAS_CONSTANT * self.cfg.temperature / FARADAY;
        thermal * (sign * current / scale).asinh()
    }
}

impl CellModel for SpmModel {
    fn dim(&self) -> usize {
        2 * self.cfg.shells
    }

    fn mass_diag(&self) -> &[f64] {
        &self.mass
    }

    fn rhs(&self, _t: f64, x: &[f64], theta: &[f64], current: f64, out: &mut [f64]) {
        let res = self.resolve(theta);
        let n = self.cfg.shells;
        for e in [NEG, POS] {
            let grid = &self.grid[e];
            let d = res.diffusivity[e];
            let c = &x[e * n..(e + 1) * n];
            let dc = &mut out[e * n..(e + 1) * n];
            dc[0] = d * grid.g_out[0] * (c[1] - c[0]);
            for i in 1..n - 1 {
                dc[i] = d
                    * (grid.g_in[i] * (c[i - 1] - c[i]) + grid.g_out[i] * (c[i + 1] - c[i]));
            }
            let flux = self.boundary_flux(e, current);
            dc[n - 1] = d * grid.g_in[n - 1] * (c[n - 2] - c[n - 1]) - flux * grid.surf;
        }
    }

    fn output(&self, _t: f64, x: &[f64], theta: &[f64], current: f64) -> f64 {
        let res = self.resolve(theta);
        let mut surf_stoich = [0.0; 2];
        let mut eta = [0.0; 2];
        for e in [NEG, POS] {
            let c_surf = self.surface_concentration(e, x);
            surf_stoich[e] = c_surf / self.electrode(e).max_concentration;
            eta[e] = self.overpotential(e, c_surf, current, &res);
        }
        let u_pos = self.cfg.positive.ocp.eval(surf_stoich[POS]);
        let u_neg = self.cfg.negative.ocp.eval(surf_stoich[NEG]);
        u_pos - u_neg + eta[POS] - eta[NEG] - current * res.contact_resistance
    }

    fn initial_state(&self, _theta: &[f64], soc0: f64) -> Vec<f64> {
        let n = self.cfg.shells;
        let mut x = vec![0.0; 2 * n];
        for e in [NEG, POS] {
            let el = self.electrode(e);
            let c = el.stoich_at(soc0) * el.max_concentration;
            x[e * n..(e + 1) * n].fill(c);
        }
        x
    }

    fn slots(&self) -> &[SlotInfo] {
        &self.slots
    }

    fn check_state(&self, x: &[f64], _theta: &[f64], _current: f64) -> Result<(), String> {
        let n = self.cfg.shells;
        for e in [NEG, POS] {
            let el = self.electrode(e);
            let label = if e == NEG { "negative" } else { "positive" };
            for (i, &c) in x[e * n..(e + 1) * n].iter().enumerate() {
                let stoich = c / el.max_concentration;
                if !(stoich > 0.0 && stoich < 1.0) {
                    return Err(format!(
                        "{label} electrode shell {i} stoichiometry {stoich:.4} left (0, 1)"
                    ));
                }
            }
            let stoich = self.surface_concentration(e, x) / el.max_concentration;
            if !(stoich > 0.0 && stoich < 1.0) {
                return Err(format!(
                    "{label} electrode surface stoichiometry {stoich:.4} left (0, 1)"
                ));
            }
        }
        Ok(())
    }

    fn capacity_ah(&self, _theta: &[f64]) -> f64 {
        let area = self.cfg.electrode_area;
        let neg = self.cfg.negative.window_charge_per_area() * area;
        let pos = self.cfg.positive.window_charge_per_area() * area;
        neg.min(pos) / 3600.0
    }
}
