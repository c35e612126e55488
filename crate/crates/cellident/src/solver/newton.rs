//! Damped Newton iterations for algebraic constraint rows and steady states.

use super::OdeSystem;
use nalgebra::{DMatrix, DVector};

/// Damped Newton on r(x) = 0 with a finite-difference Jacobian.
///
/// Returns `(residual_inf_norm, iterations)`; `Err` carries the same pair
/// when the iteration stalls or the Jacobian is singular.
pub fn damped_newton(
    residual: &mut dyn FnMut(&[f64], &mut [f64]),
    x: &mut [f64],
    tol: f64,
    max_iters: u64,
) -> Result<(f64, u64), (f64, u64)> {
    let n = x.len();
    let mut r = vec![0.0; n];
    let mut r_trial = vec![0.0; n];
    let mut x_trial = vec![0.0; n];
    let mut iters = 0u64;

    residual(x, &mut r);
    let mut norm = inf_norm(&r);

    while norm > tol {
        if iters >= max_iters || !norm.is_finite() {
            return Err((norm, iters));
        }
        iters += 1;

        // Finite-difference Jacobian, column by column.
        let mut jac = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let h = (1e-7 * x[j].abs()).max(1e-10);
            let saved = x[j];
            x[j] = saved + h;
            residual(x, &mut r_trial);
            let r_plus = r_trial.clone();
            x[j] = saved - h;
            residual(x, &mut r_trial);
            x[j] = saved;
            for i in 0..n {
                jac[(i, j)] = (r_plus[i] - r_trial[i]) / (2.0 * h);
            }
        }

        let rhs = DVector::from_column_slice(&r);
        let delta = match jac.lu().solve(&rhs) {
            Some(d) => d,
            None => return Err((norm, iters)),
        };

        // Backtracking damping on the residual norm.
        let mut lambda = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            for i in 0..n {
                x_trial[i] = x[i] - lambda * delta[i];
            }
            residual(&x_trial, &mut r_trial);
            let trial_norm = inf_norm(&r_trial);
            if trial_norm.is_finite() && trial_norm < norm {
                x.copy_from_slice(&x_trial);
                r.copy_from_slice(&r_trial);
                norm = trial_norm;
                improved = true;
                break;
            }
            lambda *= 0.5;
        }
        if !improved {
            return Err((norm, iters));
        }
    }
    Ok((norm, iters))
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |acc, &x| acc.max(x.abs()))
}

/// Solves the algebraic rows (zero mass-matrix entries) of `sys` for the
/// corresponding state components, holding differential components fixed.
///
/// Returns the Newton iteration count, or `(residual, iters)` on failure.
pub fn project_algebraic<S: OdeSystem>(
    sys: &S,
    t: f64,
    x: &mut [f64],
) -> Result<u64, (f64, u64)> {
    let mass = match sys.mass_diag() {
        Some(m) => m,
        None => return Ok(0),
    };
    let alg: Vec<usize> = mass
        .iter()
        .enumerate()
        .filter_map(|(i, &m)| (m == 0.0).then_some(i))
        .collect();
    if alg.is_empty() {
        return Ok(0);
    }

    let n = sys.dim();
    let mut full = vec![0.0; n];
    let mut state = x.to_vec();
    let mut xa: Vec<f64> = alg.iter().map(|&i| x[i]).collect();

    let mut residual = |xa: &[f64], out: &mut [f64]| {
        for (slot, &i) in xa.iter().zip(&alg) {
            state[i] = *slot;
        }
        sys.rhs(t, &state, &mut full);
        for (o, &i) in out.iter_mut().zip(&alg) {
            *o = full[i];
        }
    };

    let (_, iters) = damped_newton(&mut residual, &mut xa, 1e-12, 50)?;
    for (&v, &i) in xa.iter().zip(&alg) {
        x[i] = v;
    }
    Ok(iters)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn newton_solves_scalar_quadratic() {
        // r(x) = x^2 - 4, roots at +-2.
        let mut x = vec![3.0];
        let (norm, iters) =
            damped_newton(&mut |x, out| out[0] = x[0] * x[0] - 4.0, &mut x, 1e-12, 50).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-10);
        assert!(norm <= 1e-12);
        assert!(iters > 0);
    }

    #[test]
    fn newton_returns_immediately_at_solution() {
        let mut x = vec![2.0];
        let (_, iters) =
            damped_newton(&mut |x, out| out[0] = x[0] * x[0] - 4.0, &mut x, 1e-10, 50).unwrap();
        // Residual at the start is exactly zero: no Jacobian is ever built,
        // which keeps singular-Jacobian systems usable at equilibrium.
        assert_eq!(iters, 0);
    }

    #[test]
    fn newton_reports_failure_on_stall() {
        // r(x) = 1 + x^2 has no real root.
        let mut x = vec![0.5];
        let err = damped_newton(&mut |x, out| out[0] = 1.0 + x[0] * x[0], &mut x, 1e-12, 20);
        assert!(err.is_err());
    }
}
