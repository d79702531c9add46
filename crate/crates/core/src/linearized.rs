//! The linearized operator `L = |D|^alpha + 1 - 3Q^2`: spectrum checks,
//! constrained inversions with Lagrange directions `Q`, `Q'`, the tail
//! function `S_0` and localized coercivity.

use crate::error::SolverError;
use crate::field::{SpectralField, TailField};
use crate::ground_state::GroundState;
use crate::linalg::{dense_solve, dense_symmetric_eigen, Projector, ProjectedPcg};
use faer::Mat;
use std::sync::Arc;

/// Largest grid for which dense factorisations are assembled.
pub const DENSE_LIMIT: usize = 4096;

/// Bordered solves switch to projected CG above this size (the dense
/// factorisation is kept for small grids and as an independent cross-check).
pub const SOLVE_DENSE_LIMIT: usize = 1024;

pub struct LinearizedOperator {
    pub gs: Arc<GroundState>,
    three_q2: SpectralField,
}

impl LinearizedOperator {
    pub fn new(gs: Arc<GroundState>) -> LinearizedOperator {
        assert!(
            (gs.c - 1.0).abs() < 1e-12,
            "linearized operator is defined at speed c = 1"
        );
        let three_q2 = gs.q.mul(&gs.q).scale(3.0);
        LinearizedOperator { gs, three_q2 }
    }

    pub fn alpha(&self) -> f64 {
        self.gs.alpha
    }

    /// `L u = |D|^alpha u + u - 3 Q^2 u`.
    pub fn apply(&self, u: &SpectralField) -> SpectralField {
        u.fractional_derivative(self.gs.alpha)
            .expect("finite field")
            .add(u)
            .sub(&self.three_q2.mul(u))
    }

    /// `L` applied to a field with an affine carrier; the affine part passes
    /// through the identity and is annihilated by `|D|^alpha`.
    pub fn apply_tail(&self, t: &TailField) -> TailField {
        let p = t
            .periodic
            .fractional_derivative(self.gs.alpha)
            .expect("finite field")
            .add(&t.periodic)
            .sub(&self.three_q2.mul(&t.periodic));
        // -3Q^2 times the affine part decays, fold it into the periodic part
        let affine = SpectralField::from_fn(t.grid().clone(), |y| t.offset + t.slope * y);
        let extra = self.three_q2.mul(&affine).scale(-1.0);
        TailField {
            offset: t.offset,
            slope: t.slope,
            periodic: p.add(&extra),
        }
    }

    /// Dense symmetric matrix of `L` (circulant `|D|^alpha` plus diagonal).
    pub fn dense(&self) -> Result<Mat<f64>, SolverError> {
        let grid = self.gs.grid();
        let n = grid.n_points();
        if n > DENSE_LIMIT {
            return Err(SolverError::DenseTooLarge {
                n,
                limit: DENSE_LIMIT,
            });
        }
        let row = multiplier_row(&self.gs.q, self.gs.alpha);
        let q2 = self.three_q2.values();
        Ok(Mat::from_fn(n, n, |i, j| {
            let circ = row[(i + n - j) % n];
            let diag = if i == j { 1.0 - q2[i] } else { 0.0 };
            circ + diag
        }))
    }
}

/// First row of the circulant matrix of the real multiplier `|k|^s`.
fn multiplier_row(reference: &SpectralField, s: f64) -> Vec<f64> {
    let grid = reference.grid();
    let unit = SpectralField::from_coeffs(
        grid.clone(),
        grid.wavenumbers()
            .iter()
            .map(|&k| num_complex::Complex64::new(k.abs().powf(s), 0.0))
            .collect(),
    );
    unit.values().to_vec()
}

/// Tail function `S_0(y) = int_y^inf (|D|^alpha + 1)^{-1} Lambda Q` with its
/// finite left limit `l`. Generic in the scaling generator: the modulation
/// machinery builds it from `lambda_speed`, the paper-normalised variant from
/// `lambda_q`.
pub struct TailFunction {
    pub s0: TailField,
    pub l_limit: f64,
    /// `w = (|D|^alpha + 1)^{-1} Lambda Q`, so `S_0' = -w`.
    pub w: SpectralField,
    /// `<Q, Lambda Q>` for the generator used, fixing the tail-solve
    /// multiplier normalisation.
    pub q_lambda: f64,
}

impl TailFunction {
    pub fn derivative(&self) -> SpectralField {
        self.w.scale(-1.0)
    }

    /// `l - S_0` as a tail field (the back-wave variant).
    pub fn l_minus_s0(&self) -> TailField {
        self.s0.negate_plus(self.l_limit)
    }
}

pub fn build_tail_function(op: &LinearizedOperator, generator: &SpectralField) -> TailFunction {
    let w = generator
        .inverse_helmholtz(op.gs.alpha)
        .expect("finite field");
    let s0 = TailField::antiderivative(&w.scale(-1.0), 0.0);
    // l read off the left 5% plateau
    let grid = op.gs.grid();
    let n = grid.n_points();
    let window = (n / 20).max(1);
    let l_limit = (0..window).map(|j| s0.value_at_index(j)).sum::<f64>() / window as f64;
    TailFunction {
        s0,
        l_limit,
        w,
        q_lambda: op.gs.q.inner(generator),
    }
}

/// Tail function in the speed normalisation (the one the dynamics uses).
pub fn build_tail_function_speed(op: &LinearizedOperator) -> TailFunction {
    let lam = op.gs.lambda_speed.clone();
    build_tail_function(op, &lam)
}

/// Result of a constrained solve `L f = g + a Q` with `f` orthogonal to `Q, Q'`.
pub struct ConstrainedSolve {
    pub f: SpectralField,
    pub a: f64,
    pub residual: f64,
    pub orth_q: f64,
    pub orth_qprime: f64,
    /// Set when the input had to be projected off `Q'`.
    pub projected_input: bool,
}

/// Result of a tail solve `d/dy L (f + atilde t) = d/dy g + a Q' + atilde Lambda Q`.
pub struct TailSolve {
    pub f: SpectralField,
    pub a: f64,
    pub a_tilde: f64,
    pub residual: f64,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum TailSign {
    /// `t = -S_0`, orthogonality on `f - atilde S_0` (front wave).
    Front,
    /// `t = l - S_0`, orthogonality on `f + atilde (l - S_0)` (back wave).
    Back,
}

fn orthonormal_qq(gs: &GroundState) -> (SpectralField, SpectralField) {
    let e1 = gs.q.scale(1.0 / gs.q.l2_norm());
    let mut e2 = gs.q_prime.clone();
    let c = e2.inner(&e1);
    e2 = e2.sub(&e1.scale(c));
    let e2n = e2.l2_norm();
    (e1, e2.scale(1.0 / e2n))
}

/// Solve `L f = rhs + a Q (+ defect Q')` subject to inhomogeneous constraints
/// `<f, Q> = c1`, `<f, Q'> = c2` (L2 inner products). Dense bordered KKT for
/// small grids, projected preconditioned CG otherwise.
fn constrained_solve_raw(
    op: &LinearizedOperator,
    rhs: &SpectralField,
    c1: f64,
    c2: f64,
) -> Result<(SpectralField, f64), SolverError> {
    let gs = &op.gs;
    let grid = gs.grid();
    let n = grid.n_points();
    let h = grid.spacing();
    if n <= SOLVE_DENSE_LIMIT {
        // bordered symmetric system [[L, Q, Q'], [Q^T, 0, 0], [Q'^T, 0, 0]]
        let l = op.dense()?;
        let qv = gs.q.values();
        let qpv = gs.q_prime.values();
        let m = Mat::from_fn(n + 2, n + 2, |i, j| {
            if i < n && j < n {
                l.read(i, j)
            } else if i < n && j == n {
                qv[i]
            } else if i < n && j == n + 1 {
                qpv[i]
            } else if i == n && j < n {
                qv[j]
            } else if i == n + 1 && j < n {
                qpv[j]
            } else {
                0.0
            }
        });
        let mut b = vec![0.0; n + 2];
        b[..n].copy_from_slice(rhs.values());
        b[n] = c1 / h;
        b[n + 1] = c2 / h;
        let sol = dense_solve(&m, &b)?;
        let f = SpectralField::from_values(grid.clone(), sol[..n].to_vec())
            .map_err(SolverError::Field)?;
        let a = -sol[n];
        Ok((f, a))
    } else {
        let (e1, e2) = orthonormal_qq(gs);
        // particular part carrying the constraint values
        let coeff1 = c1 / gs.q.l2_norm();
        let qp_proj = gs.q_prime.inner(&e2);
        let coeff2 = (c2 - 0.0) / qp_proj;
        let f0 = e1.scale(coeff1).add(&e2.scale(coeff2));
        let b = rhs.sub(&op.apply(&f0));
        let alpha = gs.alpha;
        let proj = Projector::new(&[e1.values().to_vec(), e2.values().to_vec()]);
        let apply_a = |v: &[f64]| -> Vec<f64> {
            let f = SpectralField::from_values(grid.clone(), v.to_vec()).expect("finite");
            op.apply(&f).values().to_vec()
        };
        let apply_m = |v: &[f64]| -> Vec<f64> {
            let f = SpectralField::from_values(grid.clone(), v.to_vec()).expect("finite");
            f.real_multiplier(|k| 1.0 / (1.0 + k.abs().powf(alpha)))
                .values()
                .to_vec()
        };
        let pcg = ProjectedPcg {
            apply_a: &apply_a,
            apply_m_inv: &apply_m,
            projector: &proj,
            tol: 1e-12,
            max_iter: 2000,
        };
        let (x, _iters) = pcg.solve(b.values())?;
        let fperp = SpectralField::from_values(grid.clone(), x).map_err(SolverError::Field)?;
        let f = f0.add(&fperp);
        // multiplier recovered from the residual component along Q
        let r = op.apply(&f).sub(rhs);
        let a = r.inner(&gs.q) / gs.l2_norm_sq;
        Ok((f, a))
    }
}

/// Lemma-ant1-type solve: `L f = g + a Q`, `f` orthogonal to `Q` and `Q'`.
/// Inputs with a `Q'` component beyond `1e-9 ||g||` are projected off it.
pub fn solve_with_q_correction(
    op: &LinearizedOperator,
    g: &SpectralField,
) -> Result<ConstrainedSolve, SolverError> {
    let gs = &op.gs;
    let qp_l2 = gs.q_prime.l2_norm();
    let gq = g.inner(&gs.q_prime);
    let mut g_used = g.clone();
    let mut projected = false;
    if gq.abs() > 1e-9 * g.l2_norm().max(1e-300) {
        g_used = g.sub(&gs.q_prime.scale(gq / (qp_l2 * qp_l2)));
        projected = true;
    }
    let (f, a) = constrained_solve_raw(op, &g_used, 0.0, 0.0)?;
    let resid_field = op.apply(&f).sub(&g_used).sub(&gs.q.scale(a));
    let gnorm = g_used.l2_norm().max(1e-300);
    let fnorm = f.l2_norm().max(1e-300);
    Ok(ConstrainedSolve {
        residual: resid_field.l2_norm() / gnorm,
        orth_q: f.inner(&gs.q).abs() / fnorm,
        orth_qprime: f.inner(&gs.q_prime).abs() / fnorm,
        f,
        a,
        projected_input: projected,
    })
}

/// Closed form for the `Q`-multiplier of the ant1 solve,
/// `a = -<g, Lambda Q> / <Q, Lambda Q>`; the value is the same for either
/// generator normalisation.
pub fn ant1_a_formula(gs: &GroundState, g: &SpectralField) -> f64 {
    -(2.0 * (gs.alpha + 1.0) / (gs.alpha - 1.0)) * g.inner(&gs.lambda_q) / gs.l2_norm_sq
}

/// Lemma-ant2-type solve. Reduces to `L f = g + a Q + 3 atilde Q^2 t` with
/// `t = -S_0` (front) or `t = l - S_0` (back) and the orthogonality carried on
/// `f + atilde t`.
pub fn solve_with_tail(
    op: &LinearizedOperator,
    tail: &TailFunction,
    g: &SpectralField,
    sign: TailSign,
) -> Result<TailSolve, SolverError> {
    let gs = &op.gs;
    let a_tilde = g.inner(&gs.q_prime) / tail.q_lambda;
    let t = match sign {
        TailSign::Front => tail.s0.scale(-1.0),
        TailSign::Back => tail.l_minus_s0(),
    };
    let q2t = op.gs.q.mul(&op.gs.q).scale(3.0).mul(&t.sample());
    let rhs = g.add(&q2t.scale(a_tilde));
    let c1 = -a_tilde * t.inner_with(&gs.q);
    let c2 = -a_tilde * t.inner_with(&gs.q_prime);
    let (f, a) = constrained_solve_raw(op, &rhs, c1, c2)?;
    let resid = op
        .apply(&f)
        .sub(&rhs)
        .sub(&gs.q.scale(a))
        .l2_norm()
        / rhs.l2_norm().max(1e-300);
    Ok(TailSolve {
        f,
        a,
        a_tilde,
        residual: resid,
    })
}

/// Weak defect of the derivative identity of the tail solve, measured against
/// smooth compactly supported test functions.
pub fn weak_tail_identity_defect(
    op: &LinearizedOperator,
    tail: &TailFunction,
    generator: &SpectralField,
    solve: &TailSolve,
    g: &SpectralField,
    sign: TailSign,
) -> f64 {
    let gs = &op.gs;
    let t = match sign {
        TailSign::Front => tail.s0.scale(-1.0),
        TailSign::Back => tail.l_minus_s0(),
    };
    let combo = TailField {
        offset: t.offset * solve.a_tilde,
        slope: t.slope * solve.a_tilde,
        periodic: t.periodic.scale(solve.a_tilde).add(&solve.f),
    };
    let lhs = op.apply_tail(&combo).derivative();
    let defect = lhs
        .sample()
        .sub(&g.derivative())
        .sub(&gs.q_prime.scale(solve.a))
        .sub(&generator.scale(solve.a_tilde));
    let grid = gs.grid();
    let l = grid.length();
    let mut worst: f64 = 0.0;
    for &center in &[-l / 8.0, 0.0, l / 10.0] {
        let chi = SpectralField::from_fn(grid.clone(), |y| {
            let t = (y - center) / (l / 16.0);
            if t.abs() < 1.0 {
                (-1.0 / (1.0 - t * t)).exp()
            } else {
                0.0
            }
        });
        let val = defect.inner(&chi).abs() / chi.l2_norm();
        worst = worst.max(val);
    }
    worst / g.l2_norm().max(1e-300)
}

#[derive(Debug)]
pub struct SpectralDiagnostics {
    pub mu0: f64,
    pub v0: SpectralField,
    pub kernel_defect: f64,
    pub second_eigenvalue: f64,
    pub negative_count: usize,
}

/// Lowest part of the discrete spectrum of the dense `L`.
pub fn spectral_diagnostics(op: &LinearizedOperator) -> Result<SpectralDiagnostics, SolverError> {
    let l = op.dense()?;
    let (vals, vecs) = dense_symmetric_eigen(&l)?;
    let grid = op.gs.grid();
    let n = grid.n_points();
    let mut v0: Vec<f64> = (0..n).map(|i| vecs.read(i, 0)).collect();
    // normalise with positive sign at the peak
    let peak = v0
        .iter()
        .cloned()
        .fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
    if peak < 0.0 {
        v0.iter_mut().for_each(|x| *x = -*x);
    }
    let nrm = (grid.spacing() * v0.iter().map(|v| v * v).sum::<f64>()).sqrt();
    v0.iter_mut().for_each(|x| *x /= nrm);
    let v0 = SpectralField::from_values(grid.clone(), v0).map_err(SolverError::Field)?;
    let kernel_defect =
        op.apply(&op.gs.q_prime).l2_norm() / op.gs.q_prime.l2_norm();
    let negative_count = vals.iter().filter(|&&v| v < -1e-6).count();
    Ok(SpectralDiagnostics {
        mu0: vals[0],
        v0,
        kernel_defect,
        second_eigenvalue: vals[1],
        negative_count,
    })
}

/// Coercivity constant of `<Lf, f>` against the `H^{alpha/2}` metric on the
/// orthogonal complement of `span{Q, Q'}`.
pub fn coercivity_constant(op: &LinearizedOperator) -> Result<f64, SolverError> {
    let gs = &op.gs;
    let weights = [SpectralField::from_fn(gs.grid().clone(), |_| 1.0)];
    let potentials = [gs.q.clone()];
    localized_form_min_eigenvalue(op, &weights, &potentials, &[gs.q.clone(), gs.q_prime.clone()])
}

/// Minimum eigenvalue (against the `H^{alpha/2}` metric) of the quadratic form
/// `sum_i int (eps |D|^a eps + eps^2 - 3 P_i^2 eps^2) psi_i` restricted to the
/// orthogonal complement of the given constraint fields.
pub fn localized_form_min_eigenvalue(
    op: &LinearizedOperator,
    weights: &[SpectralField],
    potentials: &[SpectralField],
    constraints: &[SpectralField],
) -> Result<f64, SolverError> {
    assert_eq!(weights.len(), potentials.len());
    let grid = op.gs.grid();
    let n = grid.n_points();
    if n > DENSE_LIMIT {
        return Err(SolverError::DenseTooLarge {
            n,
            limit: DENSE_LIMIT,
        });
    }
    let alpha = op.gs.alpha;
    let quarter = alpha / 4.0;
    // columns of G^{-1/2} F G^{-1/2} assembled by FFT application
    let apply = |v: &[f64]| -> Vec<f64> {
        let f = SpectralField::from_values(grid.clone(), v.to_vec()).expect("finite");
        let x = f.real_multiplier(|k| (1.0 + k * k).powf(-quarter));
        let dx = x.fractional_derivative(alpha).expect("finite");
        let mut acc = SpectralField::zeros(grid.clone());
        for (psi, p) in weights.iter().zip(potentials) {
            // symmetrised |D|^alpha part plus the local part
            let t1 = psi.mul(&dx);
            let t2 = psi.mul(&x).fractional_derivative(alpha).expect("finite");
            let local = psi.mul(&x).sub(&psi.mul(&p.mul(p)).mul(&x).scale(3.0));
            acc = acc.add(&t1.add(&t2).scale(0.5)).add(&local);
        }
        acc.real_multiplier(|k| (1.0 + k * k).powf(-quarter))
            .values()
            .to_vec()
    };
    let mut m = Mat::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = apply(&e);
        e[j] = 0.0;
        for i in 0..n {
            m.write(i, j, col[i]);
        }
    }
    // exact symmetrisation (the form is symmetric; assembly is not, to round-off)
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m.read(i, j) + m.read(j, i));
            m.write(i, j, v);
            m.write(j, i, v);
        }
    }
    // constraints transform with G^{-1/2} as well
    let cons: Vec<Vec<f64>> = constraints
        .iter()
        .map(|c| {
            c.real_multiplier(|k| (1.0 + k * k).powf(-quarter))
                .values()
                .to_vec()
        })
        .collect();
    // push the constrained directions far up the spectrum
    let sigma = 1e6;
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for c in &cons {
        let mut w = c.clone();
        for b in &basis {
            let d: f64 = w.iter().zip(b).map(|(x, y)| x * y).sum();
            for (wi, bi) in w.iter_mut().zip(b) {
                *wi -= d * bi;
            }
        }
        let nrm: f64 = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nrm > 1e-13 {
            w.iter_mut().for_each(|x| *x /= nrm);
            basis.push(w);
        }
    }
    let mut pm = Mat::zeros(n, n);
    // P M P + sigma V V^T with P = I - V V^T
    // compute via rank-k corrections
    let k = basis.len();
    let vmat = Mat::from_fn(n, k, |i, j| basis[j][i]);
    let mv = &m * &vmat; // n x k
    let vtmv = vmat.transpose() * &mv; // k x k
    for i in 0..n {
        for j in 0..n {
            let mut val = m.read(i, j);
            for a in 0..k {
                val -= vmat.read(i, a) * mv.read(j, a);
                val -= mv.read(i, a) * vmat.read(j, a);
                val += sigma * vmat.read(i, a) * vmat.read(j, a);
            }
            for a in 0..k {
                for b in 0..k {
                    val += vmat.read(i, a) * vtmv.read(a, b) * vmat.read(j, b);
                }
            }
            pm.write(i, j, val);
        }
    }
    let (vals, _) = dense_symmetric_eigen(&pm)?;
    Ok(vals[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::ground_state::{solve_ground_state, PetviashviliConfig};

    fn state(alpha: f64, n: usize, l: f64) -> Arc<GroundState> {
        let grid = Grid::new(n, l).unwrap();
        Arc::new(solve_ground_state(alpha, 1.0, &grid, PetviashviliConfig::default()).unwrap())
    }

    #[test]
    fn operator_is_symmetric_and_kills_qprime() {
        let gs = state(1.5, 2048, 160.0);
        let op = LinearizedOperator::new(gs.clone());
        let u = SpectralField::from_fn(gs.grid().clone(), |y| (-(y * y) / 7.0).exp());
        let v = SpectralField::from_fn(gs.grid().clone(), |y| y * (-(y * y) / 5.0).exp());
        let luv = op.apply(&u).inner(&v);
        let ulv = u.inner(&op.apply(&v));
        assert!((luv - ulv).abs() < 1e-10 * luv.abs().max(1.0));
        assert!(op.apply(&gs.q_prime).l2_norm() / gs.q_prime.l2_norm() < 1e-7);
    }

    #[test]
    fn l_lambda_speed_is_minus_q() {
        // the identity holds on the line; on the torus the defect is a
        // truncation artifact decaying like L^{-2}
        let mut defects = Vec::new();
        for (n, l) in [(2048usize, 160.0f64), (4096, 320.0)] {
            let gs = state(1.5, n, l);
            let op = LinearizedOperator::new(gs.clone());
            let r = op.apply(&gs.lambda_speed).add(&gs.q);
            defects.push(r.l2_norm() / gs.q.l2_norm());
            // the paper-normalised generator inverts to -(alpha/(alpha+1)) Q,
            // with the same truncation defect
            let ratio = gs.alpha / (gs.alpha + 1.0);
            let r2 = op.apply(&gs.lambda_q).add(&gs.q.scale(ratio));
            assert!(r2.l2_norm() / gs.q.l2_norm() < 2.0 * defects.last().unwrap() + 1e-9);
        }
        assert!(defects[0] < 1e-3, "defect {:.3e}", defects[0]);
        assert!(
            defects[1] < 0.35 * defects[0],
            "no L^-2 decay: {:?}",
            defects
        );
    }

    #[test]
    fn ant1_with_g_minus_q_gives_zero() {
        // L Lambda_s Q = -Q and the virial identity force a = 1, f = 0
        let gs = state(1.5, 1024, 160.0);
        let op = LinearizedOperator::new(gs.clone());
        let g = gs.q.scale(-1.0);
        let sol = solve_with_q_correction(&op, &g).unwrap();
        assert!((sol.a - 1.0).abs() < 1e-5, "a = {}", sol.a);
        assert!(sol.f.l2_norm() < 1e-5, "f = {}", sol.f.l2_norm());
        assert!((ant1_a_formula(&gs, &g) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn ant1_zero_input_gives_zero() {
        let gs = state(1.5, 1024, 160.0);
        let op = LinearizedOperator::new(gs.clone());
        let sol = solve_with_q_correction(&op, &SpectralField::zeros(gs.grid().clone())).unwrap();
        assert!(sol.f.l2_norm() < 1e-12);
        assert!(sol.a.abs() < 1e-12);
    }

    #[test]
    fn tail_function_basics() {
        let gs = state(1.5, 2048, 256.0);
        let op = LinearizedOperator::new(gs.clone());
        let tail = build_tail_function_speed(&op);
        let n = gs.grid().n_points();
        // anchored at the right boundary
        assert!(tail.s0.value_at_index(n - 1).abs() < 1e-13);
        // l equals the k = 0 identity int w = int Lambda Q
        let exact = gs.lambda_speed.integral();
        assert!(
            (tail.l_limit - exact).abs() < 0.02 * exact.abs(),
            "l = {} vs {}",
            tail.l_limit,
            exact
        );
        // S0 decays on the right, plateaus on the left
        assert!(tail.s0.value_at_index(n - 10).abs() < 1e-3 * tail.l_limit.abs());
    }
}
