//! Reduced parameter dynamics: the modulation state, the leading-order ODE
//! system, its conserved relation and self-similar solution, and the Newton
//! fit of the parameters from a PDE snapshot.

use crate::error::ModelError;
use crate::field::SpectralField;
use crate::linalg::dense_solve;
use faer::Mat;

/// `Gamma = (z1, z2, mu1, mu2)`: centers and speed offsets of the two waves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulationState {
    pub z1: f64,
    pub z2: f64,
    pub mu1: f64,
    pub mu2: f64,
}

impl ModulationState {
    pub fn z(&self) -> f64 {
        self.z1 - self.z2
    }

    pub fn mu(&self) -> f64 {
        self.mu1 - self.mu2
    }

    pub fn z_bar(&self) -> f64 {
        self.z1 + self.z2
    }

    pub fn mu_bar(&self) -> f64 {
        self.mu1 + self.mu2
    }
}

/// Time derivative of `Gamma`, named to avoid ordering mistakes.
#[derive(Debug, Clone, Copy)]
pub struct GammaDot {
    pub z1_dot: f64,
    pub z2_dot: f64,
    pub mu1_dot: f64,
    pub mu2_dot: f64,
}

#[derive(Debug, Clone)]
pub struct ReducedOdeConfig {
    pub alpha: f64,
    pub b1: f64,
    /// Full coefficient vectors (front slot order); `None` runs the
    /// leading-order system with `beta = delta = 0`.
    pub betas: Option<[f64; 6]>,
    pub deltas: Option<[f64; 6]>,
    pub swap_back_mu_slots: bool,
    pub tol: f64,
    pub step: f64,
    pub z_min: f64,
}

impl ReducedOdeConfig {
    pub fn leading_order(alpha: f64, b1: f64) -> ReducedOdeConfig {
        assert!(b1 < 0.0, "interaction coefficient must be negative");
        ReducedOdeConfig {
            alpha,
            b1,
            betas: None,
            deltas: None,
            swap_back_mu_slots: true,
            tol: 1e-11,
            step: 1.0,
            z_min: 10.0,
        }
    }

    fn beta(&self, g: &ModulationState) -> f64 {
        match &self.betas {
            None => 0.0,
            Some(b) => {
                let f = slots(self.alpha, g, true);
                b.iter().zip(f).map(|(c, fv)| c * fv).sum()
            }
        }
    }

    fn delta(&self, g: &ModulationState) -> f64 {
        match &self.deltas {
            None => 0.0,
            Some(d) => {
                let f = slots(self.alpha, g, !self.swap_back_mu_slots);
                d.iter().zip(f).map(|(c, fv)| c * fv).sum()
            }
        }
    }
}

fn slots(alpha: f64, g: &ModulationState, own_first: bool) -> [f64; 6] {
    let z = g.z();
    let (ma, mb) = if own_first { (g.mu1, g.mu2) } else { (g.mu2, g.mu1) };
    [
        z.powf(-1.0 - alpha),
        z.powf(-2.0 - alpha),
        ma * z.powf(-1.0 - alpha),
        mb * z.powf(-1.0 - alpha),
        z.powf(-2.0 * alpha - 1.0),
        z.powf(-3.0 - alpha),
    ]
}

/// Right-hand side of the reduced system:
/// `mu1' = b(z)`, `mu2' = -b(z)`, `z1' = mu1 - beta`, `z2' = mu2 - delta`.
pub fn reduced_rhs(g: &ModulationState, cfg: &ReducedOdeConfig) -> Result<GammaDot, ModelError> {
    let z = g.z();
    if z <= 0.0 {
        return Err(ModelError::WaveOrdering(z));
    }
    let b = cfg.b1 / z.powf(cfg.alpha + 2.0);
    Ok(GammaDot {
        z1_dot: g.mu1 - cfg.beta(g),
        z2_dot: g.mu2 - cfg.delta(g),
        mu1_dot: b,
        mu2_dot: -b,
    })
}

/// `mu^2/2 + 2 b1 / ((alpha+1) z^{alpha+1})`, conserved along symmetric
/// leading-order trajectories.
pub fn conserved_relation(g: &ModulationState, cfg: &ReducedOdeConfig) -> f64 {
    let z = g.z();
    let mu = g.mu();
    mu * mu / 2.0 + 2.0 * cfg.b1 / ((cfg.alpha + 1.0) * z.powf(cfg.alpha + 1.0))
}

/// Separation-law constant `a = ((alpha+3)/2 sqrt(-4 b1/(alpha+1)))^{2/(alpha+3)}`.
pub fn separation_constant(alpha: f64, b1: f64) -> f64 {
    ((alpha + 3.0) / 2.0 * (-4.0 * b1 / (alpha + 1.0)).sqrt()).powf(2.0 / (alpha + 3.0))
}

/// Symmetric initial state on the self-similar orbit:
/// `mu_in = sqrt(-4 b1/(alpha+1)) z_in^{-(alpha+1)/2}`, split evenly.
pub fn symmetric_initial_state(alpha: f64, b1: f64, z_in: f64) -> ModulationState {
    let mu_in = (-4.0 * b1 / (alpha + 1.0)).sqrt() * z_in.powf(-(alpha + 1.0) / 2.0);
    ModulationState {
        z1: z_in / 2.0,
        z2: -z_in / 2.0,
        mu1: mu_in / 2.0,
        mu2: -mu_in / 2.0,
    }
}

#[derive(Debug, Clone)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub state: ModulationState,
    pub conserved_defect: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    /// Set when the integration stopped at the collision floor.
    pub collided: bool,
}

impl Trajectory {
    pub fn last(&self) -> &TrajectoryPoint {
        self.points.last().expect("non-empty trajectory")
    }

    /// Linear interpolation of `z(t)`.
    pub fn z_at(&self, t: f64) -> Option<f64> {
        let pts = &self.points;
        if pts.len() < 2 {
            return None;
        }
        let increasing = pts.last()?.t >= pts[0].t;
        for w in pts.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let inside = if increasing {
                a.t <= t && t <= b.t
            } else {
                b.t <= t && t <= a.t
            };
            if inside {
                let s = (t - a.t) / (b.t - a.t);
                return Some(a.state.z() + s * (b.state.z() - a.state.z()));
            }
        }
        None
    }
}

fn rk4_step(g: &ModulationState, h: f64, cfg: &ReducedOdeConfig) -> Result<ModulationState, ModelError> {
    let add = |s: &ModulationState, d: &GammaDot, f: f64| ModulationState {
        z1: s.z1 + f * d.z1_dot,
        z2: s.z2 + f * d.z2_dot,
        mu1: s.mu1 + f * d.mu1_dot,
        mu2: s.mu2 + f * d.mu2_dot,
    };
    let k1 = reduced_rhs(g, cfg)?;
    let k2 = reduced_rhs(&add(g, &k1, h / 2.0), cfg)?;
    let k3 = reduced_rhs(&add(g, &k2, h / 2.0), cfg)?;
    let k4 = reduced_rhs(&add(g, &k3, h), cfg)?;
    Ok(ModulationState {
        z1: g.z1 + h / 6.0 * (k1.z1_dot + 2.0 * k2.z1_dot + 2.0 * k3.z1_dot + k4.z1_dot),
        z2: g.z2 + h / 6.0 * (k1.z2_dot + 2.0 * k2.z2_dot + 2.0 * k3.z2_dot + k4.z2_dot),
        mu1: g.mu1 + h / 6.0 * (k1.mu1_dot + 2.0 * k2.mu1_dot + 2.0 * k3.mu1_dot + k4.mu1_dot),
        mu2: g.mu2 + h / 6.0 * (k1.mu2_dot + 2.0 * k2.mu2_dot + 2.0 * k3.mu2_dot + k4.mu2_dot),
    })
}

fn state_distance(a: &ModulationState, b: &ModulationState) -> f64 {
    (a.z1 - b.z1)
        .abs()
        .max((a.z2 - b.z2).abs())
        .max((a.mu1 - b.mu1).abs())
        .max((a.mu2 - b.mu2).abs())
}

/// Classical RK4 with step halving; backward integration uses `t1 < t0`.
/// A collision (`z < z_min`) returns the partial trajectory inside the error.
pub fn integrate_reduced(
    g0: ModulationState,
    t0: f64,
    t1: f64,
    cfg: &ReducedOdeConfig,
) -> Result<Trajectory, (ModelError, Trajectory)> {
    let forward = t1 >= t0;
    let mut t = t0;
    let mut g = g0;
    let mut h = cfg.step.abs().max(1e-9) * if forward { 1.0 } else { -1.0 };
    let mut points = vec![TrajectoryPoint {
        t,
        state: g,
        conserved_defect: conserved_relation(&g, cfg),
    }];
    let c0 = conserved_relation(&g0, cfg);
    let max_steps = 100_000_000usize;
    for _ in 0..max_steps {
        if (forward && t >= t1) || (!forward && t <= t1) {
            break;
        }
        let remaining = t1 - t;
        if h.abs() > remaining.abs() {
            h = remaining;
        }
        let full = match rk4_step(&g, h, cfg) {
            Ok(s) => s,
            Err(e) => {
                return Err((
                    e,
                    Trajectory {
                        points,
                        collided: true,
                    },
                ))
            }
        };
        let half1 = rk4_step(&g, h / 2.0, cfg).map_err(|e| {
            (
                e,
                Trajectory {
                    points: points.clone(),
                    collided: true,
                },
            )
        })?;
        let half2 = rk4_step(&half1, h / 2.0, cfg).map_err(|e| {
            (
                e,
                Trajectory {
                    points: points.clone(),
                    collided: true,
                },
            )
        })?;
        let err = state_distance(&full, &half2);
        let scale = 1.0 + g.z().abs();
        if err > cfg.tol * scale && h.abs() > 1e-10 {
            h *= 0.5;
            continue;
        }
        t += h;
        g = half2;
        points.push(TrajectoryPoint {
            t,
            state: g,
            conserved_defect: conserved_relation(&g, cfg) - c0,
        });
        if g.z() < cfg.z_min {
            return Err((
                ModelError::SeparationTooSmall {
                    z: g.z(),
                    min: cfg.z_min,
                },
                Trajectory {
                    points,
                    collided: true,
                },
            ));
        }
        if err < 0.03 * cfg.tol * scale {
            h *= 2.0;
        }
    }
    Ok(Trajectory {
        points,
        collided: false,
    })
}

/// Result of the four-condition Newton fit.
pub struct FitResult {
    pub gamma: ModulationState,
    pub epsilon: SpectralField,
    pub defects: [f64; 4],
    pub iterations: usize,
}

/// Interface the fit needs from the approximation machinery: assemble `V` and
/// its wave fields at a given `Gamma`.
pub trait VAssembler {
    fn assemble(
        &self,
        gamma: &ModulationState,
    ) -> Result<crate::profiles::ApproximateSolution, ModelError>;
}

/// Newton iteration on
/// `G(Gamma) = (<v-V, R1>, <v-V, d_y R1>, <v-V, R2>, <v-V, d_y R2>)`,
/// with the Jacobian from analytic `Gamma`-derivatives.
pub fn fit_modulation(
    v: &SpectralField,
    assembler: &dyn VAssembler,
    guess: ModulationState,
    tol_scale: f64,
) -> Result<FitResult, ModelError> {
    let mut gamma = guess;
    let tol = 1e-10 * tol_scale;
    let max_iter = 50;
    for it in 0..max_iter {
        let approx = assembler.assemble(&gamma)?;
        let eps = v.sub(&approx.v);
        let g = residuals(&eps, &approx);
        let defect = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if defect <= tol {
            return Ok(FitResult {
                gamma,
                epsilon: eps,
                defects: g,
                iterations: it,
            });
        }
        let jac = jacobian(&eps, &approx);
        let m = Mat::from_fn(4, 4, |i, j| jac[i][j]);
        let step = dense_solve(&m, &g).map_err(ModelError::Solver)?;
        // Newton: Gamma <- Gamma - J^{-1} G
        gamma = ModulationState {
            z1: gamma.z1 - step[0],
            z2: gamma.z2 - step[1],
            mu1: gamma.mu1 - step[2],
            mu2: gamma.mu2 - step[3],
        };
        if !gamma.z1.is_finite() || gamma.z() <= 0.0 {
            return Err(ModelError::NoFit {
                iterations: it,
                defect,
            });
        }
    }
    let approx = assembler.assemble(&gamma)?;
    let eps = v.sub(&approx.v);
    let g = residuals(&eps, &approx);
    let defect = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if defect <= tol {
        Ok(FitResult {
            gamma,
            epsilon: eps,
            defects: g,
            iterations: max_iter,
        })
    } else {
        Err(ModelError::NoFit {
            iterations: max_iter,
            defect,
        })
    }
}

fn residuals(eps: &SpectralField, approx: &crate::profiles::ApproximateSolution) -> [f64; 4] {
    [
        eps.inner(&approx.waves[0].r),
        eps.inner(&approx.waves[0].dy_r),
        eps.inner(&approx.waves[1].r),
        eps.inner(&approx.waves[1].dy_r),
    ]
}

/// Jacobian `dG/dGamma` from the analytic derivatives of the wave fields.
/// The profile and bump contributions are `O(z^{-1-alpha})` corrections to
/// `dV/dGamma`; dropping them leaves Newton's root unchanged and only costs a
/// contraction factor of that size per iteration.
fn jacobian(
    eps: &SpectralField,
    approx: &crate::profiles::ApproximateSolution,
) -> [[f64; 4]; 4] {
    let w1 = &approx.waves[0];
    let w2 = &approx.waves[1];
    // dV/d(z1, z2, mu1, mu2), leading parts
    let dv = [
        w1.dy_r.clone(),
        w2.dy_r.scale(-1.0),
        w1.lambda_r.scale(-1.0),
        w2.lambda_r.clone(),
    ];
    let ddy_r1 = w1.dy_r.derivative();
    let ddy_r2 = w2.dy_r.derivative();
    let dlam_r1 = w1.lambda_r.derivative();
    let dlam_r2 = w2.lambda_r.derivative();
    let zero = SpectralField::zeros(eps.grid().clone());
    // dD_i/dGamma_k for the four orthogonality directions
    let dd = |i: usize, k: usize| -> &SpectralField {
        match (i, k) {
            (0, 0) => &w1.dy_r,
            (1, 0) => &ddy_r1,
            (0, 2) | (1, 2) => {
                if i == 0 {
                    &w1.lambda_r
                } else {
                    &dlam_r1
                }
            }
            (2, 1) => &w2.dy_r,
            (3, 1) => &ddy_r2,
            (2, 3) => &w2.lambda_r,
            (3, 3) => &dlam_r2,
            _ => &zero,
        }
    };
    let dirs = [&w1.r, &w1.dy_r, &w2.r, &w2.dy_r];
    let mut jac = [[0.0f64; 4]; 4];
    for i in 0..4 {
        for k in 0..4 {
            let mut val = -dv[k].inner(dirs[i]);
            // direction derivatives carry a sign from d/dz_i = -d_y
            let sgn = if k < 2 { -1.0 } else { 1.0 };
            if !(std::ptr::eq(dd(i, k), &zero)) {
                val += sgn * eps.inner(dd(i, k));
            }
            jac[i][k] = val;
        }
    }
    jac
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ReducedOdeConfig {
        ReducedOdeConfig::leading_order(1.5, -20.0)
    }

    #[test]
    fn self_similar_orbit_is_exact() {
        let c = cfg();
        let a = separation_constant(c.alpha, c.b1);
        let t0 = 1000.0f64;
        let p = 2.0 / (c.alpha + 3.0);
        let z0 = a * t0.powf(p);
        let g0 = symmetric_initial_state(c.alpha, c.b1, z0);
        // mu_in equals dz/dt of the self-similar law
        let zdot = a * p * t0.powf(p - 1.0);
        assert!((g0.mu() - zdot).abs() < 1e-12 * zdot);
        let traj = integrate_reduced(g0, t0, 10.0 * t0, &c).unwrap();
        for pt in traj.points.iter().step_by(50) {
            let expect = a * pt.t.powf(p);
            assert!(
                (pt.state.z() - expect).abs() < 1e-6 * expect,
                "t={} z={} expect={}",
                pt.t,
                pt.state.z(),
                expect
            );
            assert!(pt.conserved_defect.abs() < 1e-8);
        }
    }

    #[test]
    fn symmetric_field_stays_symmetric() {
        let c = cfg();
        let g = symmetric_initial_state(c.alpha, c.b1, 80.0);
        let d = reduced_rhs(&g, &c).unwrap();
        assert!((d.mu1_dot + d.mu2_dot).abs() < 1e-15);
        assert!((d.z1_dot + d.z2_dot).abs() < 1e-15);
        // mu' = 2 b1 / z^{alpha+2}
        let expect = 2.0 * c.b1 / 80.0f64.powf(c.alpha + 2.0);
        assert!(((d.mu1_dot - d.mu2_dot) - expect).abs() < 1e-15);
        assert!(expect < 0.0);
    }

    #[test]
    fn backward_then_forward_returns() {
        let c = cfg();
        let g0 = symmetric_initial_state(c.alpha, c.b1, 120.0);
        let t0 = 2000.0;
        let back = integrate_reduced(g0, t0, t0 - 500.0, &c).unwrap();
        let fwd = integrate_reduced(back.last().state, t0 - 500.0, t0, &c).unwrap();
        let end = fwd.last().state;
        assert!((end.z1 - g0.z1).abs() < 1e-9);
        assert!((end.mu1 - g0.mu1).abs() < 1e-12);
    }

    #[test]
    fn collision_stop_returns_partial_trajectory() {
        let c = cfg();
        // strongly inward-moving state
        let g0 = ModulationState {
            z1: 20.0,
            z2: -20.0,
            mu1: -0.2,
            mu2: 0.2,
        };
        match integrate_reduced(g0, 0.0, 1e5, &c) {
            Err((ModelError::SeparationTooSmall { .. }, traj)) => {
                assert!(traj.collided);
                assert!(traj.points.len() > 2);
                assert!(traj.last().state.z() < 10.5);
            }
            other => panic!("expected collision, got {:?}", other.map(|t| t.points.len())),
        }
    }
}
