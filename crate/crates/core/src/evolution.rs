//! Time integration of `d_t v + d_y(-v - |D|^alpha v + v^3) = 0` by fourth
//! order exponential time differencing, invariant monitoring, the weighted
//! Lyapunov functional and the two-wave (dipole) experiment harness.

use crate::error::ModelError;
use crate::field::SpectralField;
use crate::grid::Grid;
use crate::ground_state::GroundState;
use crate::modulation::{
    fit_modulation, integrate_reduced, separation_constant, symmetric_initial_state,
    ModulationState, ReducedOdeConfig, Trajectory, VAssembler,
};
use crate::profiles::{
    assemble_approximation, residual_decompose, ApproximateSolution, ProfileSet, WaveFamily,
};
use crate::weights::WeightFamily;
use num_complex::Complex64;
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct EvolutionConfig {
    pub alpha: f64,
    pub dt: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub output_stride: usize,
    pub dealias: bool,
    pub invariant_check_stride: usize,
}

impl EvolutionConfig {
    /// Stability envelope of the integrator, `|dt| max|k|^{1+alpha} <= 50`.
    pub fn validate(&self, grid: &Grid) -> Result<(), ModelError> {
        let kmax = grid.k_max();
        let stiff = self.dt.abs() * kmax.powf(1.0 + self.alpha);
        if stiff > 50.0 {
            return Err(ModelError::Solver(crate::error::SolverError::Divergence {
                factor: stiff,
                iterations: 0,
            }));
        }
        if self.dt == 0.0 || !self.dt.is_finite() {
            return Err(ModelError::Solver(crate::error::SolverError::Divergence {
                factor: self.dt,
                iterations: 0,
            }));
        }
        Ok(())
    }
}

/// phi-style ETDRK4 coefficient, Taylor-switched near the origin.
fn etd_coeffs(z: Complex64) -> (Complex64, Complex64, Complex64, Complex64) {
    // returns (q, f1, f2, f3) divided by the step (pure coefficient form)
    if z.norm() < 1e-2 {
        let q = horner(
            z / 2.0,
            &[1.0, 1.0 / 2.0, 1.0 / 6.0, 1.0 / 24.0, 1.0 / 120.0, 1.0 / 720.0, 1.0 / 5040.0, 1.0 / 40320.0],
        ) * 0.5;
        // q = (e^{z/2}-1)/z = (1/2) * phi1(z/2)
        let f1 = horner(
            z,
            &[1.0 / 6.0, 1.0 / 6.0, 3.0 / 40.0, 1.0 / 45.0, 5.0 / 1008.0, 1.0 / 1120.0, 7.0 / 51840.0, 1.0 / 56700.0],
        );
        let f2 = horner(
            z,
            &[1.0 / 3.0, 1.0 / 6.0, 1.0 / 20.0, 1.0 / 90.0, 1.0 / 504.0, 1.0 / 3360.0, 7.0 / 181440.0, 1.0 / 226800.0],
        );
        let f3 = horner(
            z,
            &[1.0 / 6.0, 0.0, -1.0 / 120.0, -1.0 / 360.0, -1.0 / 1680.0, -1.0 / 10080.0, -1.0 / 72576.0, -1.0 / 604800.0],
        );
        (q, f1, f2, f3)
    } else {
        let ez = z.exp();
        let ez2 = (z / 2.0).exp();
        let z2 = z * z;
        let z3 = z2 * z;
        let q = (ez2 - 1.0) / z;
        let f1 = (-4.0 - z + ez * (4.0 - 3.0 * z + z2)) / z3;
        let f2 = 2.0 * (2.0 + z + ez * (-2.0 + z)) / z3;
        let f3 = (-4.0 - 3.0 * z - z2 + ez * (4.0 - z)) / z3;
        (q, f1, f2, f3)
    }
}

fn horner(z: Complex64, coeffs: &[f64]) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        acc = acc * z + c;
    }
    acc
}

/// Precomputed ETDRK4 stepper for a fixed `(grid, alpha, dt)`.
pub struct Etdrk4 {
    grid: Arc<Grid>,
    dt: f64,
    e_full: Vec<Complex64>,
    e_half: Vec<Complex64>,
    q: Vec<Complex64>,
    f1: Vec<Complex64>,
    f2: Vec<Complex64>,
    f3: Vec<Complex64>,
    /// derivative multiplier of the nonlinear flux, masked for the cubic
    ik: Vec<Complex64>,
    mask: Vec<f64>,
}

impl Etdrk4 {
    pub fn new(grid: Arc<Grid>, alpha: f64, dt: f64, dealias: bool) -> Etdrk4 {
        let n = grid.n_points();
        let ks = grid.wavenumbers().to_vec();
        let mut e_full = Vec::with_capacity(n);
        let mut e_half = Vec::with_capacity(n);
        let (mut q, mut f1, mut f2, mut f3) = (
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
        );
        for &k in &ks {
            // linear symbol: i k (1 + |k|^alpha)
            let lam = Complex64::new(0.0, k * (1.0 + k.abs().powf(alpha)));
            let z = lam * dt;
            e_full.push(z.exp());
            e_half.push((z / 2.0).exp());
            let (qc, c1, c2, c3) = etd_coeffs(z);
            q.push(qc * dt);
            f1.push(c1 * dt);
            f2.push(c2 * dt);
            f3.push(c3 * dt);
        }
        let cutoff = if dealias { grid.k_max() / 2.0 } else { f64::INFINITY };
        let mask: Vec<f64> = ks
            .iter()
            .map(|&k| if k.abs() > cutoff + 1e-12 { 0.0 } else { 1.0 })
            .collect();
        let ik: Vec<Complex64> = ks
            .iter()
            .enumerate()
            .map(|(j, &k)| {
                if j == n / 2 {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(0.0, k)
                }
            })
            .collect();
        Etdrk4 {
            grid,
            dt,
            e_full,
            e_half,
            q,
            f1,
            f2,
            f3,
            ik,
            mask,
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Nonlinear term in coefficient space: `N(v) = -d_y(v^3)`, dealiased
    /// with the half-rule when enabled.
    fn nonlinear(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        let n = self.grid.n_points();
        let mut buf: Vec<Complex64> = coeffs
            .iter()
            .zip(&self.mask)
            .map(|(&c, &m)| c * m)
            .collect();
        self.grid.fft_inverse(&mut buf);
        let scale = 1.0 / n as f64;
        for c in buf.iter_mut() {
            let v = c.re * scale;
            *c = Complex64::new(v * v * v, 0.0);
        }
        self.grid.fft_forward(&mut buf);
        for ((c, &ik), &m) in buf.iter_mut().zip(&self.ik).zip(&self.mask) {
            *c *= -ik * m;
        }
        buf
    }

    /// One ETDRK4 step on spectral coefficients.
    pub fn step_coeffs(&self, u: &[Complex64]) -> Vec<Complex64> {
        let n = u.len();
        let nu = self.nonlinear(u);
        let mut a = vec![Complex64::default(); n];
        for j in 0..n {
            a[j] = self.e_half[j] * u[j] + self.q[j] * nu[j];
        }
        let na = self.nonlinear(&a);
        let mut b = vec![Complex64::default(); n];
        for j in 0..n {
            b[j] = self.e_half[j] * u[j] + self.q[j] * na[j];
        }
        let nb = self.nonlinear(&b);
        let mut c = vec![Complex64::default(); n];
        for j in 0..n {
            c[j] = self.e_half[j] * a[j] + self.q[j] * (2.0 * nb[j] - nu[j]);
        }
        let nc = self.nonlinear(&c);
        let mut out = vec![Complex64::default(); n];
        for j in 0..n {
            out[j] = self.e_full[j] * u[j]
                + self.f1[j] * nu[j]
                + self.f2[j] * (na[j] + nb[j])
                + self.f3[j] * nc[j];
        }
        out
    }

    pub fn step(&self, v: &SpectralField) -> Result<SpectralField, ModelError> {
        let out = self.step_coeffs(v.coeffs());
        let f = SpectralField::from_coeffs(self.grid.clone(), out);
        if !f.is_finite() {
            return Err(ModelError::Field(crate::error::FieldError::InvalidField));
        }
        Ok(f)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Invariants {
    pub mass: f64,
    pub l2_half: f64,
    pub hamiltonian: f64,
}

pub fn invariants(v: &SpectralField, alpha: f64) -> Invariants {
    let mass = v.integral();
    let l2_half = 0.5 * v.l2_norm_sq();
    let half_d = v.fractional_derivative(alpha / 2.0).expect("finite field");
    let h = 0.5 * (half_d.l2_norm_sq() + v.l2_norm_sq()) - 0.25 * v.lp_norm(4.0).powi(4);
    Invariants {
        mass,
        l2_half,
        hamiltonian: h,
    }
}

#[derive(Debug, Clone)]
pub struct InvariantReport {
    pub initial: Invariants,
    pub finals: Invariants,
    pub max_mass_drift: f64,
    pub max_l2_drift: f64,
    pub max_hamiltonian_drift: f64,
}

pub struct EvolveResult {
    pub v: SpectralField,
    pub invariants: InvariantReport,
    pub steps: usize,
}

/// Fixed-step loop; `cfg.t_end < cfg.t_start` runs backward with `dt < 0`.
/// The checkpoint callback receives `(step, t, v)` every `output_stride` steps.
pub fn evolve(
    v0: &SpectralField,
    cfg: &EvolutionConfig,
    mut on_checkpoint: impl FnMut(usize, f64, &SpectralField) -> Result<(), ModelError>,
) -> Result<EvolveResult, ModelError> {
    let grid = v0.grid().clone();
    cfg.validate(&grid)?;
    let span = cfg.t_end - cfg.t_start;
    assert!(
        span * cfg.dt > 0.0,
        "dt must point from t_start toward t_end"
    );
    let steps = (span / cfg.dt).round() as usize;
    let stepper = Etdrk4::new(grid.clone(), cfg.alpha, cfg.dt, cfg.dealias);
    let inv0 = invariants(v0, cfg.alpha);
    let mut u = v0.coeffs().to_vec();
    let mut max_mass = 0.0f64;
    let mut max_l2 = 0.0f64;
    let mut max_h = 0.0f64;
    let mut current = v0.clone();
    for s in 0..steps {
        u = stepper.step_coeffs(&u);
        if !u[0].re.is_finite() {
            return Err(ModelError::Field(crate::error::FieldError::InvalidField));
        }
        let t = cfg.t_start + (s + 1) as f64 * cfg.dt;
        let need_field = (cfg.output_stride > 0 && (s + 1) % cfg.output_stride == 0)
            || (cfg.invariant_check_stride > 0 && (s + 1) % cfg.invariant_check_stride == 0)
            || s + 1 == steps;
        if need_field {
            current = SpectralField::from_coeffs(grid.clone(), u.clone());
            if !current.is_finite() {
                return Err(ModelError::Field(crate::error::FieldError::InvalidField));
            }
            if cfg.invariant_check_stride > 0 && (s + 1) % cfg.invariant_check_stride == 0 {
                let inv = invariants(&current, cfg.alpha);
                max_mass = max_mass.max(rel_drift(inv.mass, inv0.mass));
                max_l2 = max_l2.max(rel_drift(inv.l2_half, inv0.l2_half));
                max_h = max_h.max(rel_drift(inv.hamiltonian, inv0.hamiltonian));
            }
            if cfg.output_stride > 0 && (s + 1) % cfg.output_stride == 0 {
                on_checkpoint(s + 1, t, &current)?;
            }
        }
    }
    let finals = invariants(&current, cfg.alpha);
    Ok(EvolveResult {
        v: current,
        invariants: InvariantReport {
            initial: inv0,
            finals,
            max_mass_drift: max_mass,
            max_l2_drift: max_l2,
            max_hamiltonian_drift: max_h,
        },
        steps,
    })
}

fn rel_drift(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Weighted functional
/// `F = int (eps|D|^a eps/2 + eps^2/2 - (V+eps)^4/4 + V^4/4 + V^3 eps - S eps) phi_1A
///    + int eps^2/2 phi_2A`.
pub fn lyapunov_functional(
    v: &SpectralField,
    approx: &ApproximateSolution,
    s_total: &SpectralField,
    weights: &WeightFamily,
) -> f64 {
    let eps = v.sub(&approx.v);
    let alpha_half = eps
        .fractional_derivative(weights.alpha)
        .expect("finite field");
    let vv = &approx.v;
    let vpe = vv.add(&eps);
    let quartic = vpe.mul(&vpe).mul(&vpe).mul(&vpe).scale(-0.25);
    let v4 = vv.mul(vv).mul(vv).mul(vv).scale(0.25);
    let v3e = vv.mul(vv).mul(vv).mul(&eps);
    let integrand1 = eps
        .mul(&alpha_half)
        .scale(0.5)
        .add(&eps.mul(&eps).scale(0.5))
        .add(&quartic)
        .add(&v4)
        .add(&v3e)
        .sub(&s_total.mul(&eps));
    let phi1 = weights.phi_1a_field();
    let phi2 = weights.phi_2a_field();
    integrand1.inner(&phi1) + eps.mul(&eps).scale(0.5).inner(&phi2)
}

/// One tracked point of a dipole run.
#[derive(Debug, Clone)]
pub struct DipolePoint {
    pub t: f64,
    pub state: ModulationState,
    pub eps_h_alpha2: f64,
    pub lyapunov: f64,
}

pub struct DipoleReport {
    pub points: Vec<DipolePoint>,
    pub ode: Trajectory,
    pub fitted_exponent: f64,
    pub max_rel_z_gap: f64,
    pub invariants: InvariantReport,
    pub a_constant: f64,
    pub s_final: f64,
}

struct FamilyAssembler<'a> {
    ps: &'a ProfileSet,
    family: &'a WaveFamily,
}

impl VAssembler for FamilyAssembler<'_> {
    fn assemble(&self, gamma: &ModulationState) -> Result<ApproximateSolution, ModelError> {
        assemble_approximation(self.ps, self.family, gamma)
    }
}

pub struct DipoleConfig {
    pub z_in: f64,
    pub s_final: Option<f64>,
    pub z_stop: f64,
    pub dt: f64,
    pub fit_stride: usize,
    pub track_functional: bool,
    pub weight_a: f64,
}

/// Final-data dipole run: set `v(S) = V(Gamma_in)` on the self-similar orbit,
/// integrate backward until the separation shrinks to `z_stop`, fit the
/// modulation parameters at checkpoints and compare with the reduced ODE.
pub fn dipole_experiment(
    gs: Arc<GroundState>,
    ps: &ProfileSet,
    cfg: &DipoleConfig,
) -> Result<DipoleReport, ModelError> {
    let alpha = gs.alpha;
    let a = separation_constant(alpha, ps.b1);
    let p = 2.0 / (alpha + 3.0);
    let s_final = cfg
        .s_final
        .unwrap_or_else(|| (cfg.z_in / a).powf(1.0 / p));
    let gamma_in = symmetric_initial_state(alpha, ps.b1, cfg.z_in);

    // reduced-ODE companion run from the same data, stopping at z_stop
    let mut ode_cfg = ReducedOdeConfig::leading_order(alpha, ps.b1);
    ode_cfg.betas = Some(ps.betas);
    ode_cfg.deltas = Some(ps.deltas);
    ode_cfg.swap_back_mu_slots = ps.swap_back_mu_slots;
    ode_cfg.z_min = cfg.z_stop;
    let t_stop_guess = (cfg.z_stop / a).powf(1.0 / p);
    let ode = match integrate_reduced(gamma_in, s_final, 0.8 * t_stop_guess, &ode_cfg) {
        Ok(t) => t,
        Err((_, partial)) => partial,
    };
    let t_end = ode.last().t;

    // final data and backward evolution
    let family = WaveFamily::new(gs.clone(), crate::profiles::WaveProfiles::Dilated);
    let approx_in = assemble_approximation(ps, &family, &gamma_in)?;
    let assembler = FamilyAssembler { ps, family: &family };
    let weights = if cfg.track_functional {
        Some(WeightFamily::build(
            alpha,
            cfg.weight_a,
            gamma_in.mu1,
            gamma_in.mu2,
            gs.grid(),
        )?)
    } else {
        None
    };

    let evo = EvolutionConfig {
        alpha,
        dt: -cfg.dt.abs(),
        t_start: s_final,
        t_end,
        output_stride: cfg.fit_stride,
        dealias: true,
        invariant_check_stride: cfg.fit_stride * 4,
    };
    let mut points: Vec<DipolePoint> = Vec::new();
    let mut guess = gamma_in;
    let tol_scale = gs.l2_norm_sq;
    let mut fit_lost = false;
    let result = evolve(&approx_in.v, &evo, |_, t, v| {
        if fit_lost {
            return Ok(());
        }
        match fit_modulation(v, &assembler, guess, tol_scale) {
            Ok(fit) => {
                guess = fit.gamma;
                let mut lyap = 0.0;
                if let Some(w) = &weights {
                    if let Ok(approx) = assembler.assemble(&fit.gamma) {
                        if let Ok(dot) = crate::profiles::construction_gamma_dot(ps, &fit.gamma) {
                            if let Ok(dec) = residual_decompose(ps, &approx, &dot) {
                                lyap = lyapunov_functional(v, &approx, &dec.s_total, w);
                            }
                        }
                    }
                }
                points.push(DipolePoint {
                    t,
                    state: fit.gamma,
                    eps_h_alpha2: fit.epsilon.hs_norm(alpha / 2.0),
                    lyapunov: lyap,
                });
            }
            Err(_) => {
                // waves too close or out of the tube: keep the run, stop tracking
                fit_lost = true;
            }
        }
        Ok(())
    })?;

    // exponent fit over the tracked window
    let window: Vec<(f64, f64)> = points
        .iter()
        .filter(|pt| pt.state.z() >= cfg.z_stop)
        .map(|pt| (pt.t.ln(), pt.state.z().ln()))
        .collect();
    let fitted_exponent = fit_slope(&window);
    let mut max_gap = 0.0f64;
    for pt in &points {
        if let Some(zo) = ode.z_at(pt.t) {
            max_gap = max_gap.max((pt.state.z() - zo).abs() / zo);
        }
    }
    Ok(DipoleReport {
        points,
        ode,
        fitted_exponent,
        max_rel_z_gap: max_gap,
        invariants: result.invariants,
        a_constant: a,
        s_final,
    })
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    if pairs.len() < 2 {
        return f64::NAN;
    }
    let sx: f64 = pairs.iter().map(|p| p.0).sum();
    let sy: f64 = pairs.iter().map(|p| p.1).sum();
    let sxx: f64 = pairs.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pairs.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ground_state::{solve_ground_state, PetviashviliConfig};

    #[test]
    fn zero_field_stays_zero() {
        let grid = Grid::new(256, 100.0).unwrap();
        let stepper = Etdrk4::new(grid.clone(), 1.5, 0.01, true);
        let z = SpectralField::zeros(grid);
        let out = stepper.step(&z).unwrap();
        assert_eq!(out.linf_norm(), 0.0);
    }

    #[test]
    fn linear_regime_is_exact_dispersion() {
        let grid = Grid::new(512, 100.0).unwrap();
        let alpha = 1.5;
        let k = 2.0 * std::f64::consts::PI * 6.0 / grid.length();
        let amp = 1e-8;
        let v0 = SpectralField::from_fn(grid.clone(), |y| amp * (k * y).cos());
        let cfg = EvolutionConfig {
            alpha,
            dt: 0.01,
            t_start: 0.0,
            t_end: 5.0,
            output_stride: 0,
            dealias: true,
            invariant_check_stride: 0,
        };
        let out = evolve(&v0, &cfg, |_, _, _| Ok(())).unwrap();
        let t = 5.0;
        let speed = 1.0 + k.powf(alpha);
        let exact = SpectralField::from_fn(grid, |y| amp * (k * (y + speed * t)).cos());
        assert!(out.v.sub(&exact).linf_norm() < 1e-10 * amp);
    }

    #[test]
    fn traveling_wave_transport_and_reversibility() {
        // the dealiased band must cover the soliton spectrum: k_eff = 12.6
        let grid = Grid::new(2048, 256.0).unwrap();
        let alpha = 1.5;
        let gs = solve_ground_state(alpha, 1.1, &grid, PetviashviliConfig::default()).unwrap();
        let cfg = EvolutionConfig {
            alpha,
            dt: 0.0025,
            t_start: 0.0,
            t_end: 2.0,
            output_stride: 0,
            dealias: true,
            invariant_check_stride: 100,
        };
        let out = evolve(&gs.q, &cfg, |_, _, _| Ok(())).unwrap();
        // profile moves at speed c - 1 = 0.1 in the travelling frame
        let exact = gs.q.shift(0.1 * 2.0);
        assert!(
            out.v.sub(&exact).l2_norm() < 2e-4,
            "shape error {:.3e}",
            out.v.sub(&exact).l2_norm()
        );
        assert!(out.invariants.max_l2_drift < 1e-8);
        // backward steps return the initial data
        let back_cfg = EvolutionConfig {
            dt: -0.0025,
            t_start: 2.0,
            t_end: 0.0,
            ..cfg
        };
        let back = evolve(&out.v, &back_cfg, |_, _, _| Ok(())).unwrap();
        assert!(
            back.v.sub(&gs.q).l2_norm() < 1e-8,
            "reversibility {:.3e}",
            back.v.sub(&gs.q).l2_norm()
        );
    }

    #[test]
    fn stability_envelope_is_enforced() {
        let grid = Grid::new(1024, 64.0).unwrap();
        let cfg = EvolutionConfig {
            alpha: 1.5,
            dt: 1.0,
            t_start: 0.0,
            t_end: 10.0,
            output_stride: 0,
            dealias: true,
            invariant_check_stride: 0,
        };
        assert!(cfg.validate(&grid).is_err());
    }
}
