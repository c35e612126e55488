//! Unknown parameters, their feasible box, priors and search-space
//! transformations.
//!
//! Optimisers and samplers never see physical parameter values directly:
//! they work in a transformed *search space* chosen per parameter (identity,
//! logarithmic, or affine). The [`ParameterSet`] owns the bijections between
//! the two spaces, the chain rule for gradients, and the prior density used
//! by Bayesian workflows.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while constructing or transforming parameters.
#[derive(Debug, Error)]
pub enum ParameterError {
    #[error("parameter `{name}`: lower bound {lower} must be below upper bound {upper}")]
    BadBounds { name: String, lower: f64, upper: f64 },
    #[error("parameter `{name}`: initial value {initial} outside [{lower}, {upper}]")]
    InitialOutOfBounds { name: String, initial: f64, lower: f64, upper: f64 },
    #[error("parameter `{name}`: log transform requires a positive lower bound, got {lower}")]
    LogNeedsPositive { name: String, lower: f64 },
    #[error("parameter `{name}`: affine transform must have non-zero scale")]
    ZeroScale { name: String },
    #[error("parameter `{name}`: prior support does not cover the bounds [{lower}, {upper}]")]
    PriorTooNarrow { name: String, lower: f64, upper: f64 },
    #[error("parameter `{name}`: invalid prior ({reason})")]
    BadPrior { name: String, reason: String },
    #[error("duplicate parameter name `{0}`")]
    DuplicateName(String),
    #[error("a parameter set needs at least one parameter")]
    Empty,
    #[error("expected a vector of dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("parameter `{name}`: value {value} is not positive, log transform undefined")]
    LogDomain { name: String, value: f64 },
}

/// Bijective map between physical parameter values and optimiser
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Transformation {
    Identity,
    /// u = ln(theta). Requires a strictly positive parameter.
    Log,
    /// u = (theta - offset) / scale.
    Affine { scale: f64, offset: f64 },
}

impl Transformation {
    /// Physical value to search-space coordinate.
    pub fn to_search(&self, theta: f64) -> Option<f64> {
        match *self {
            Transformation::Identity => Some(theta),
            Transformation::Log => {
                if theta > 0.0 {
                    Some(theta.ln())
                } else {
                    None
                }
            }
            Transformation::Affine { scale, offset } => Some((theta - offset) / scale),
        }
    }

    /// Search-space coordinate back to the physical value.
    pub fn from_search(&self, u: f64) -> f64 {
        match *self {
            Transformation::Identity => u,
            Transformation::Log => u.exp(),
            Transformation::Affine { scale, offset } => scale * u + offset,
        }
    }

    /// dθ/du evaluated at the physical value θ.
    pub fn dtheta_du(&self, theta: f64) -> f64 {
        match *self {
            Transformation::Identity => 1.0,
            Transformation::Log => theta,
            Transformation::Affine { scale, .. } => scale,
        }
    }

    /// ln |dθ/du| at the search coordinate, the Jacobian correction used
    /// when sampling in search space.
    pub fn log_abs_jacobian(&self, u: f64) -> f64 {
        match *self {
            Transformation::Identity => 0.0,
            Transformation::Log => u,
            Transformation::Affine { scale, .. } => scale.abs().ln(),
        }
    }
}

/// Prior parameter distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Prior {
    Uniform { a: f64, b: f64 },
    Gaussian { mean: f64, std: f64 },
    /// Density proportional to 1/θ on [a, b]; natural for scale
    /// parameters such as diffusivities.
    LogUniform { a: f64, b: f64 },
}

impl Prior {
    /// Log density, `-inf` outside the support.
    pub fn logpdf(&self, theta: f64) -> f64 {
        match *self {
            Prior::Uniform { a, b } => {
                if theta >= a && theta <= b {
                    -(b - a).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Prior::Gaussian { mean, std } => {
                let z = (theta - mean) / std;
                -0.5 * (2.0 * std::f64::consts::PI).ln() - std.ln() - 0.5 * z * z
            }
            Prior::LogUniform { a, b } => {
                if theta >= a && theta <= b && theta > 0.0 {
                    -theta.ln() - (b / a).ln().ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    /// Draw one value from the prior.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Prior::Uniform { a, b } => rng.gen_range(a..b),
            Prior::Gaussian { mean, std } => {
                Normal::new(mean, std).expect("validated at construction").sample(rng)
            }
            Prior::LogUniform { a, b } => rng.gen_range(a.ln()..b.ln()).exp(),
        }
    }

    fn validate(&self, name: &str) -> Result<(), ParameterError> {
        let bad = |reason: &str| ParameterError::BadPrior {
            name: name.to_string(),
            reason: reason.to_string(),
        };
        match *self {
            Prior::Uniform { a, b } => {
                if !(a < b) {
                    return Err(bad("uniform requires a < b"));
                }
            }
            Prior::Gaussian { std, .. } => {
                if !(std > 0.0) {
                    return Err(bad("gaussian requires std > 0"));
                }
            }
            Prior::LogUniform { a, b } => {
                if !(a > 0.0 && a < b) {
                    return Err(bad("log-uniform requires 0 < a < b"));
                }
            }
        }
        Ok(())
    }

    /// Does the support contain the closed interval [lo, hi]?
    fn covers(&self, lo: f64, hi: f64) -> bool {
        match *self {
            Prior::Uniform { a, b } => a <= lo && hi <= b,
            Prior::Gaussian { .. } => true,
            Prior::LogUniform { a, b } => a <= lo && hi <= b,
        }
    }
}

/// One unknown model parameter: box bounds in physical units, an initial
/// value, a prior and the search-space transformation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub initial: f64,
    pub prior: Prior,
    pub transform: Transformation,
}

impl Parameter {
    /// A parameter with identity transform and a uniform prior over its
    /// bounds. Use the `with_*` builders to override either.
    pub fn new(name: impl Into<String>, lower: f64, upper: f64, initial: f64) -> Self {
        Parameter {
            name: name.into(),
            lower,
            upper,
            initial,
            prior: Prior::Uniform { a: lower, b: upper },
            transform: Transformation::Identity,
        }
    }

    pub fn with_prior(mut self, prior: Prior) -> Self {
        self.prior = prior;
        self
    }

    pub fn with_transform(mut self, transform: Transformation) -> Self {
        self.transform = transform;
        self
    }

    fn validate(&self) -> Result<(), ParameterError> {
        if !(self.lower < self.upper) {
            return Err(ParameterError::BadBounds {
                name: self.name.clone(),
                lower: self.lower,
                upper: self.upper,
            });
        }
        if !(self.initial >= self.lower && self.initial <= self.upper) {
            return Err(ParameterError::InitialOutOfBounds {
                name: self.name.clone(),
                initial: self.initial,
                lower: self.lower,
                upper: self.upper,
            });
        }
        if matches!(self.transform, Transformation::Log) && self.lower <= 0.0 {
            return Err(ParameterError::LogNeedsPositive {
                name: self.name.clone(),
                lower: self.lower,
            });
        }
        if let Transformation::Affine { scale, .. } = self.transform {
            if scale == 0.0 {
                return Err(ParameterError::ZeroScale { name: self.name.clone() });
            }
        }
        self.prior.validate(&self.name)?;
        if !self.prior.covers(self.lower, self.upper) {
            return Err(ParameterError::PriorTooNarrow {
                name: self.name.clone(),
                lower: self.lower,
                upper: self.upper,
            });
        }
        Ok(())
    }
}

/// Ordered, immutable collection of [`Parameter`]s. Iteration order is
/// definition order everywhere (vectors, CSV columns, reports).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParameterSet {
    params: Vec<Parameter>,
}

impl ParameterSet {
    pub fn new(params: Vec<Parameter>) -> Result<Self, ParameterError> {
        if params.is_empty() {
            return Err(ParameterError::Empty);
        }
        for p in &params {
            p.validate()?;
        }
        for (i, p) in params.iter().enumerate() {
            if params[..i].iter().any(|q| q.name == p.name) {
                return Err(ParameterError::DuplicateName(p.name.clone()));
            }
        }
        Ok(ParameterSet { params })
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn get(&self, index: usize) -> &Parameter {
        &self.params[index]
    }

    pub fn names(&self) -> Vec<&str> {
        self.params.iter().map(|p| p.name.as_str()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    /// Initial physical values in definition order.
    pub fn initial(&self) -> Vec<f64> {
        self.params.iter().map(|p| p.initial).collect()
    }

    fn check_dim(&self, v: &[f64]) -> Result<(), ParameterError> {
        if v.len() != self.params.len() {
            return Err(ParameterError::DimensionMismatch {
                expected: self.params.len(),
                got: v.len(),
            });
        }
        Ok(())
    }

    /// Map a physical vector into search space.
    pub fn to_search(&self, theta: &[f64]) -> Result<Vec<f64>, ParameterError> {
        self.check_dim(theta)?;
        self.params
            .iter()
            .zip(theta)
            .map(|(p, &t)| {
                p.transform.to_search(t).ok_or(ParameterError::LogDomain {
                    name: p.name.clone(),
                    value: t,
                })
            })
            .collect()
    }

    /// Map a search-space vector back to physical values.
    pub fn from_search(&self, u: &[f64]) -> Vec<f64> {
        self.params
            .iter()
            .zip(u)
            .map(|(p, &ui)| p.transform.from_search(ui))
            .collect()
    }

    /// Chain rule: gradient with respect to physical θ into the gradient
    /// with respect to the search coordinates, ∂L/∂u = (dθ/du)·∂L/∂θ.
    pub fn chain_gradient(&self, grad_physical: &[f64], theta: &[f64]) -> Vec<f64> {
        self.params
            .iter()
            .zip(grad_physical.iter().zip(theta))
            .map(|(p, (&g, &t))| g * p.transform.dtheta_du(t))
            .collect()
    }

    /// Sum of componentwise prior log densities; `-inf` outside support.
    pub fn prior_logpdf(&self, theta: &[f64]) -> f64 {
        self.params
            .iter()
            .zip(theta)
            .map(|(p, &t)| p.prior.logpdf(t))
            .sum()
    }

    /// Joint Jacobian correction ln |dθ/du| for search-space sampling.
    pub fn log_abs_jacobian(&self, u: &[f64]) -> f64 {
        self.params
            .iter()
            .zip(u)
            .map(|(p, &ui)| p.transform.log_abs_jacobian(ui))
            .sum()
    }

    /// Draw a physical vector from the joint prior, clipped into the
    /// bounds box so it is always a feasible start.
    pub fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.params
            .iter()
            .map(|p| p.prior.sample(rng).clamp(p.lower, p.upper))
            .collect()
    }

    /// Per-component bounds mapped into search space, ordered (lo, hi).
    pub fn search_bounds(&self) -> Vec<(f64, f64)> {
        self.params
            .iter()
            .map(|p| {
                let a = p.transform.to_search(p.lower).expect("bounds validated");
                let b = p.transform.to_search(p.upper).expect("bounds validated");
                if a <= b {
                    (a, b)
                } else {
                    (b, a)
                }
            })
            .collect()
    }

    /// Clip a search-space point into the transformed bounds box.
    pub fn clip_search(&self, u: &mut [f64]) {
        for ((lo, hi), ui) in self.search_bounds().into_iter().zip(u.iter_mut()) {
            *ui = ui.clamp(lo, hi);
        }
    }

    /// Is the physical vector inside the closed bounds box?
    pub fn within_bounds(&self, theta: &[f64]) -> bool {
        self.params
            .iter()
            .zip(theta)
            .all(|(p, &t)| t >= p.lower && t <= p.upper)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn set_with(transform: Transformation, lower: f64, upper: f64, initial: f64) -> ParameterSet {
        ParameterSet::new(vec![Parameter::new("p", lower, upper, initial)
            .with_transform(transform)])
        .unwrap()
    }

    #[test]
    fn to_search_identity() {
        let s = set_with(Transformation::Identity, 0.0, 1.0, 0.5);
        assert_eq!(s.to_search(&[0.5]).unwrap(), vec![0.5]);
    }

    #[test]
    fn to_search_log_matches_independent_logarithm() {
        // ln(3.3e-14) = ln 3.3 - 14 ln 10, evaluated independently.
        let s = set_with(Transformation::Log, 1e-15, 1e-12, 3.3e-14);
        let u = s.to_search(&[3.3e-14]).unwrap()[0];
        assert!((u - (-31.042268833444205)).abs() < 1e-12, "u = {u}");
        assert!((u + 31.04).abs() < 0.01);
    }

    #[test]
    fn to_search_affine_hand_arithmetic() {
        let s = set_with(Transformation::Affine { scale: 2.0, offset: 1.0 }, 0.0, 10.0, 5.0);
        assert_eq!(s.to_search(&[5.0]).unwrap(), vec![2.0]);
    }

    #[test]
    fn to_search_log_rejects_non_positive() {
        let t = Transformation::Log;
        assert!(t.to_search(0.0).is_none());
        assert!(t.to_search(-1.0).is_none());
    }

    #[test]
    fn from_search_cases() {
        assert_eq!(Transformation::Identity.from_search(0.5), 0.5);
        assert_eq!(Transformation::Log.from_search(0.0), 1.0);
        assert_eq!(Transformation::Affine { scale: 2.0, offset: 1.0 }.from_search(2.0), 5.0);
    }

    #[test]
    fn chain_gradient_cases() {
        let id = set_with(Transformation::Identity, -10.0, 10.0, 0.0);
        assert_eq!(id.chain_gradient(&[3.0], &[0.0]), vec![3.0]);

        let log = set_with(Transformation::Log, 0.1, 10.0, 2.0);
        assert_eq!(log.chain_gradient(&[3.0], &[2.0]), vec![6.0]);

        let aff = set_with(Transformation::Affine { scale: 2.0, offset: 1.0 }, 0.0, 10.0, 5.0);
        assert_eq!(aff.chain_gradient(&[3.0], &[5.0]), vec![6.0]);
    }

    #[test]
    fn chain_gradient_matches_finite_differences() {
        // L(theta) = theta^3 is smooth; compare d(L ∘ from_search)/du.
        let objective = |theta: f64| theta.powi(3);
        let grad_physical = |theta: f64| 3.0 * theta * theta;
        for transform in [
            Transformation::Identity,
            Transformation::Log,
            Transformation::Affine { scale: 2.0, offset: 1.0 },
        ] {
            let set = set_with(transform, 1.5, 8.0, 3.0);
            let theta = 3.0;
            let u = set.to_search(&[theta]).unwrap()[0];
            let analytic = set.chain_gradient(&[grad_physical(theta)], &[theta])[0];
            let h = 1e-6 * u.abs().max(1.0);
            let fd = (objective(set.from_search(&[u + h])[0])
                - objective(set.from_search(&[u - h])[0]))
                / (2.0 * h);
            assert!(
                ((analytic - fd) / fd).abs() < 1e-6,
                "{transform:?}: analytic {analytic} vs fd {fd}"
            );
        }
    }

    #[test]
    fn prior_logpdf_cases() {
        let uni = Prior::Uniform { a: 0.0, b: 1.0 };
        assert_eq!(uni.logpdf(0.5), 0.0);
        assert_eq!(uni.logpdf(2.0), f64::NEG_INFINITY);

        let gauss = Prior::Gaussian { mean: 0.0, std: 1.0 };
        let expected = -0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((gauss.logpdf(0.0) - expected).abs() < 1e-15);
    }

    #[test]
    fn log_uniform_prior_normalised() {
        // Integrate 1/(theta ln(b/a)) over [a, b] by midpoint rule.
        let (a, b) = (0.1, 10.0);
        let prior = Prior::LogUniform { a, b };
        let n = 200_000;
        let h = (b - a) / n as f64;
        let integral: f64 = (0..n)
            .map(|i| prior.logpdf(a + (i as f64 + 0.5) * h).exp() * h)
            .sum();
        assert!((integral - 1.0).abs() < 1e-4, "integral = {integral}");
        assert_eq!(prior.logpdf(0.05), f64::NEG_INFINITY);
    }

    #[test]
    fn sample_prior_support_and_determinism() {
        let set = ParameterSet::new(vec![
            Parameter::new("a", 0.0, 1.0, 0.5),
            Parameter::new("b", 1e-3, 1e2, 1.0)
                .with_prior(Prior::LogUniform { a: 1e-3, b: 1e2 })
                .with_transform(Transformation::Log),
        ])
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draw = set.sample_prior(&mut rng);
        assert!(draw[0] >= 0.0 && draw[0] <= 1.0);
        assert!(draw[1] >= 1e-3 && draw[1] <= 1e2);

        let mut rng2 = ChaCha8Rng::seed_from_u64(7);
        assert_eq!(draw, set.sample_prior(&mut rng2));
    }

    #[test]
    fn sample_prior_uniform_mean() {
        let set = ParameterSet::new(vec![Parameter::new("a", 0.0, 1.0, 0.5)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| set.sample_prior(&mut rng)[0]).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean = {mean}");
    }

    #[test]
    fn validation_errors() {
        assert!(ParameterSet::new(vec![]).is_err());
        assert!(ParameterSet::new(vec![Parameter::new("x", 1.0, 0.0, 0.5)]).is_err());
        assert!(ParameterSet::new(vec![Parameter::new("x", 0.0, 1.0, 2.0)]).is_err());
        assert!(ParameterSet::new(vec![
            Parameter::new("x", -1.0, 1.0, 0.0).with_transform(Transformation::Log)
        ])
        .is_err());
        assert!(ParameterSet::new(vec![
            Parameter::new("x", 0.0, 1.0, 0.5),
            Parameter::new("x", 0.0, 1.0, 0.5),
        ])
        .is_err());
        // Prior narrower than the bounds is rejected.
        assert!(ParameterSet::new(vec![
            Parameter::new("x", 0.0, 1.0, 0.5).with_prior(Prior::Uniform { a: 0.2, b: 0.8 })
        ])
        .is_err());
    }

    #[test]
    fn search_bounds_ordered_for_negative_scale() {
        let set = set_with(Transformation::Affine { scale: -1.0, offset: 0.0 }, 0.0, 2.0, 1.0);
        assert_eq!(set.search_bounds(), vec![(-2.0, 0.0)]);
    }

    mod round_trip {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn from_search_inverts_to_search(theta in 1e-12f64..1e6) {
                for transform in [
                    Transformation::Identity,
                    Transformation::Log,
                    Transformation::Affine { scale: 3.5, offset: -2.0 },
                ] {
                    let u = transform.to_search(theta).unwrap();
                    let back = transform.from_search(u);
                    prop_assert!(((back - theta) / theta).abs() <= 1e-12);
                }
            }
        }
    }
}
