//! Preconditioned conjugate gradients with a Lanczos condition-number
//! estimate built from the CG coefficients.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::sparse::{dot, norm2};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PcgOptions {
    /// Relative tolerance on the unpreconditioned residual.
    pub tol: f64,
    pub max_it: usize,
}

impl Default for PcgOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_it: 500 }
    }
}

#[derive(Clone, Debug)]
pub struct PcgResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `||r_k|| / ||b||` for k = 0, 1, ...
    pub residual_history: Vec<f64>,
    pub final_rel_residual: f64,
    /// Ritz values of the Lanczos tridiagonal, ascending.
    pub ritz: Vec<f64>,
    /// `λ_max / λ_min` of the Ritz values, NaN when no step was taken.
    pub cond_estimate: f64,
    /// Set when `(p, A p)` or `(r, z)` went non-positive.
    pub breakdown: bool,
}

impl PcgResult {
    pub fn lambda_min(&self) -> f64 {
        self.ritz.first().copied().unwrap_or(f64::NAN)
    }

    pub fn lambda_max(&self) -> f64 {
        self.ritz.last().copied().unwrap_or(f64::NAN)
    }
}

/// Eigenvalues of the Lanczos matrix assembled from CG step lengths `alpha`
/// and direction updates `beta` (`beta.len() + 1 >= alpha.len()`).
pub fn lanczos_eigenvalues(alpha: &[f64], beta: &[f64]) -> Vec<f64> {
    let k = alpha.len();
    if k == 0 {
        return Vec::new();
    }
    let mut t = DMatrix::zeros(k, k);
    for j in 0..k {
        t[(j, j)] = 1.0 / alpha[j];
        if j > 0 {
            t[(j, j)] += beta[j - 1] / alpha[j - 1];
        }
        if j + 1 < k {
            let off = beta[j].sqrt() / alpha[j];
            t[(j, j + 1)] = off;
            t[(j + 1, j)] = off;
        }
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(t).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Solves `A x = b` from a zero initial guess.
pub fn pcg(
    apply_a: impl Fn(&[f64]) -> Vec<f64>,
    apply_m: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    opts: PcgOptions,
) -> PcgResult {
    let n = b.len();
    let mut x = vec![0.0; n];
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return PcgResult {
            x,
            iterations: 0,
            converged: true,
            residual_history: vec![0.0],
            final_rel_residual: 0.0,
            ritz: Vec::new(),
            cond_estimate: f64::NAN,
            breakdown: false,
        };
    }
    let mut r = b.to_vec();
    let mut z = apply_m(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut history = vec![1.0];
    let (mut alphas, mut betas) = (Vec::new(), Vec::new());
    let mut converged = false;
    let mut breakdown = false;
    let mut it = 0;
    while it < opts.max_it {
        if rz <= 0.0 {
            breakdown = true;
            break;
        }
        let q = apply_a(&p);
        let pq = dot(&p, &q);
        if pq <= 0.0 {
            breakdown = true;
            break;
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        alphas.push(alpha);
        it += 1;
        let rel = norm2(&r) / bnorm;
        history.push(rel);
        if rel <= opts.tol {
            converged = true;
            break;
        }
        z = apply_m(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        betas.push(beta);
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let ritz = lanczos_eigenvalues(&alphas, &betas);
    let cond_estimate = match (ritz.first(), ritz.last()) {
        (Some(&lo), Some(&hi)) => hi / lo,
        _ => f64::NAN,
    };
    PcgResult {
        x,
        iterations: it,
        converged,
        final_rel_residual: *history.last().unwrap(),
        residual_history: history,
        ritz,
        cond_estimate,
        breakdown,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag_op(d: Vec<f64>) -> impl Fn(&[f64]) -> Vec<f64> {
        move |x: &[f64]| x.iter().zip(&d).map(|(a, b)| a * b).collect()
    }

    #[test]
    fn identity_preconditioner_solves_diagonal() {
        let d: Vec<f64> = (1..=20).map(|k| k as f64).collect();
        let b = vec![1.0; 20];
        let res = pcg(
            diag_op(d.clone()),
            |r: &[f64]| r.to_vec(),
            &b,
            PcgOptions {
                tol: 1e-12,
                max_it: 100,
            },
        );
        assert!(res.converged);
        assert!(res.iterations <= 20);
        for (xi, di) in res.x.iter().zip(&d) {
            assert!((xi * di - 1.0).abs() < 1e-9);
        }
        // full Krylov space: Ritz values reproduce the extreme eigenvalues
        assert!((res.lambda_min() - 1.0).abs() < 1e-8);
        assert!((res.lambda_max() - 20.0).abs() < 1e-8);
        assert!((res.cond_estimate - 20.0).abs() < 1e-6);
    }

    #[test]
    fn exact_preconditioner_one_step() {
        let d: Vec<f64> = (1..=10).map(|k| (k * k) as f64).collect();
        let inv: Vec<f64> = d.iter().map(|v| 1.0 / v).collect();
        let res = pcg(diag_op(d), diag_op(inv), &[2.0; 10], PcgOptions::default());
        assert_eq!(res.iterations, 1);
        assert!((res.cond_estimate - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_rhs() {
        let res = pcg(
            |x: &[f64]| x.to_vec(),
            |x: &[f64]| x.to_vec(),
            &[0.0; 4],
            PcgOptions::default(),
        );
        assert_eq!(res.iterations, 0);
        assert!(res.converged);
        assert!(res.cond_estimate.is_nan());
    }

    #[test]
    fn indefinite_operator_breaks_down() {
        let res = pcg(
            diag_op(vec![1.0, -1.0]),
            |x: &[f64]| x.to_vec(),
            &[0.0, 1.0],
            PcgOptions::default(),
        );
        assert!(res.breakdown);
        assert!(!res.converged);
    }

    #[test]
    fn max_it_respected() {
        let d: Vec<f64> = (1..=50).map(|k| k as f64).collect();
        let res = pcg(
            diag_op(d),
            |r: &[f64]| r.to_vec(),
            &[1.0; 50],
            PcgOptions { tol: 1e-14, max_it: 5 },
        );
        assert_eq!(res.iterations, 5);
        assert!(!res.converged);
        assert_eq!(res.residual_history.len(), 6);
    }
}
