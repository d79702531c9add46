//! Dense and matrix-free linear algebra: bordered KKT solves, projected
//! conjugate gradients and a Lanczos smallest-eigenvalue routine.

use crate::error::SolverError;
use faer::prelude::SpSolver;
use faer::{Mat, Side};

/// Solve a dense linear system by partial-pivot LU.
pub fn dense_solve(a: &Mat<f64>, rhs: &[f64]) -> Result<Vec<f64>, SolverError> {
    let n = a.nrows();
    assert_eq!(rhs.len(), n);
    let lu = a.partial_piv_lu();
    let b = Mat::from_fn(n, 1, |i, _| rhs[i]);
    let x = lu.solve(&b);
    let sol: Vec<f64> = (0..n).map(|i| x.read(i, 0)).collect();
    if sol.iter().all(|v| v.is_finite()) {
        Ok(sol)
    } else {
        Err(SolverError::SingularSystem)
    }
}

/// Eigendecomposition of a dense symmetric matrix; returns eigenvalues in
/// ascending order with matching eigenvectors (columns).
pub fn dense_symmetric_eigen(a: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>), SolverError> {
    let n = a.nrows();
    let evd = a.selfadjoint_eigendecomposition(Side::Lower);
    let s = evd.s();
    let u = evd.u();
    let mut idx: Vec<usize> = (0..n).collect();
    let vals: Vec<f64> = (0..n).map(|i| s.column_vector().read(i)).collect();
    if !vals.iter().all(|v| v.is_finite()) {
        return Err(SolverError::Eigensolver("non-finite eigenvalues".into()));
    }
    idx.sort_by(|&i, &j| vals[i].partial_cmp(&vals[j]).unwrap());
    let sorted_vals: Vec<f64> = idx.iter().map(|&i| vals[i]).collect();
    let vecs = Mat::from_fn(n, n, |r, c| u.read(r, idx[c]));
    Ok((sorted_vals, vecs))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Orthogonal projector onto the complement of a small span, with the basis
/// orthonormalised once at construction.
pub struct Projector {
    basis: Vec<Vec<f64>>,
}

impl Projector {
    pub fn new(vectors: &[Vec<f64>]) -> Projector {
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for v in vectors {
            let mut w = v.clone();
            for b in &basis {
                let c = dot(&w, b);
                axpy(&mut w, -c, b);
            }
            // re-orthogonalise for safety
            for b in &basis {
                let c = dot(&w, b);
                axpy(&mut w, -c, b);
            }
            let nrm = dot(&w, &w).sqrt();
            if nrm > 1e-13 {
                w.iter_mut().for_each(|x| *x /= nrm);
                basis.push(w);
            }
        }
        Projector { basis }
    }

    pub fn apply(&self, v: &mut [f64]) {
        for b in &self.basis {
            let c = dot(v, b);
            axpy(v, -c, b);
        }
    }
}

/// Preconditioned conjugate gradients for `P A P x = P b` on the range of the
/// projector, where `A` is symmetric positive definite there.
pub struct ProjectedPcg<'a> {
    pub apply_a: &'a dyn Fn(&[f64]) -> Vec<f64>,
    pub apply_m_inv: &'a dyn Fn(&[f64]) -> Vec<f64>,
    pub projector: &'a Projector,
    pub tol: f64,
    pub max_iter: usize,
}

impl ProjectedPcg<'_> {
    pub fn solve(&self, b: &[f64]) -> Result<(Vec<f64>, usize), SolverError> {
        let n = b.len();
        let mut rhs = b.to_vec();
        self.projector.apply(&mut rhs);
        let bnorm = dot(&rhs, &rhs).sqrt();
        if bnorm == 0.0 {
            return Ok((vec![0.0; n], 0));
        }
        let mut x = vec![0.0; n];
        let mut r = rhs;
        let mut z = (self.apply_m_inv)(&r);
        self.projector.apply(&mut z);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        for it in 0..self.max_iter {
            let mut ap = (self.apply_a)(&p);
            self.projector.apply(&mut ap);
            let pap = dot(&p, &ap);
            if !pap.is_finite() {
                return Err(SolverError::SingularSystem);
            }
            if pap <= 0.0 {
                // rounding-level stagnation near convergence is acceptance,
                // genuine negative curvature is not
                let rnorm = dot(&r, &r).sqrt();
                if rnorm <= 100.0 * self.tol * bnorm {
                    return Ok((x, it));
                }
                return Err(SolverError::SingularSystem);
            }
            let alpha = rz / pap;
            axpy(&mut x, alpha, &p);
            axpy(&mut r, -alpha, &ap);
            let rnorm = dot(&r, &r).sqrt();
            if rnorm <= self.tol * bnorm {
                return Ok((x, it + 1));
            }
            z = (self.apply_m_inv)(&r);
            self.projector.apply(&mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for (pi, zi) in p.iter_mut().zip(&z) {
                *pi = zi + beta * *pi;
            }
        }
        let rnorm = dot(&r, &r).sqrt();
        Err(SolverError::NonConvergence {
            iterations: self.max_iter,
            residual: rnorm / bnorm,
        })
    }
}

/// Smallest eigenvalue of a symmetric operator restricted to the range of a
/// projector, by Lanczos with full reorthogonalisation.
pub fn lanczos_smallest(
    apply: &dyn Fn(&[f64]) -> Vec<f64>,
    projector: &Projector,
    n: usize,
    iters: usize,
    seed: u64,
) -> Result<f64, SolverError> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut q0 = vec![0.0; n];
    let mut q1: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    projector.apply(&mut q1);
    let nrm = dot(&q1, &q1).sqrt();
    if nrm == 0.0 {
        return Err(SolverError::Eigensolver("empty projected space".into()));
    }
    q1.iter_mut().for_each(|x| *x /= nrm);

    let m = iters.min(n);
    let mut qs: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut alphas = Vec::with_capacity(m);
    let mut betas: Vec<f64> = Vec::with_capacity(m);
    let mut beta = 0.0;
    for _ in 0..m {
        let mut w = apply(&q1);
        projector.apply(&mut w);
        let alpha = dot(&w, &q1);
        axpy(&mut w, -alpha, &q1);
        if beta != 0.0 {
            axpy(&mut w, -beta, &q0);
        }
        // full reorthogonalisation against all previous vectors
        for q in &qs {
            let c = dot(&w, q);
            axpy(&mut w, -c, q);
        }
        alphas.push(alpha);
        qs.push(q1.clone());
        beta = dot(&w, &w).sqrt();
        if beta < 1e-13 {
            break;
        }
        betas.push(beta);
        q0 = q1;
        q1 = w;
        q1.iter_mut().for_each(|x| *x /= beta);
    }
    // smallest eigenvalue of the tridiagonal matrix
    let k = alphas.len();
    let t = Mat::from_fn(k, k, |i, j| {
        if i == j {
            alphas[i]
        } else if j + 1 == i || i + 1 == j {
            betas[i.min(j)]
        } else {
            0.0
        }
    });
    let (vals, _) = dense_symmetric_eigen(&t)?;
    vals.first()
        .copied()
        .ok_or_else(|| SolverError::Eigensolver("empty Lanczos basis".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_solve_small_system() {
        let a = Mat::from_fn(2, 2, |i, j| if i == j { 2.0 } else { 1.0 });
        let x = dense_solve(&a, &[3.0, 3.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigen_orders_ascending() {
        let a = Mat::from_fn(3, 3, |i, j| if i == j { [3.0, 1.0, 2.0][i] } else { 0.0 });
        let (vals, _) = dense_symmetric_eigen(&a).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!((vals[2] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn projected_pcg_solves_with_constraints() {
        // A = diag(1..n) on the complement of span{e1+e2}
        let n = 20;
        let apply_a = |v: &[f64]| -> Vec<f64> {
            v.iter().enumerate().map(|(i, x)| (i + 1) as f64 * x).collect()
        };
        let apply_m = |v: &[f64]| -> Vec<f64> { v.to_vec() };
        let mut c = vec![0.0; n];
        c[0] = 1.0;
        c[1] = 1.0;
        let proj = Projector::new(&[c]);
        let pcg = ProjectedPcg {
            apply_a: &apply_a,
            apply_m_inv: &apply_m,
            projector: &proj,
            tol: 1e-12,
            max_iter: 200,
        };
        let mut b = vec![1.0; n];
        proj.apply(&mut b);
        let (x, _) = pcg.solve(&b).unwrap();
        let mut ax = apply_a(&x);
        proj.apply(&mut ax);
        let err: f64 = ax.iter().zip(&b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10);
    }

    #[test]
    fn lanczos_finds_smallest_eigenvalue() {
        let n = 50;
        let apply = |v: &[f64]| -> Vec<f64> {
            v.iter()
                .enumerate()
                .map(|(i, x)| ((i as f64) - 3.0) * x)
                .collect()
        };
        let proj = Projector::new(&[]);
        let lam = lanczos_smallest(&apply, &proj, n, 60, 7).unwrap();
        assert!((lam + 3.0).abs() < 1e-9, "lam = {lam}");
    }
}
