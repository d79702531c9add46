//! Weight machinery and the numerical verification battery for the weighted
//! fractional commutator estimates.

use crate::error::ModelError;
use crate::field::{SpectralField, TailField};
use crate::grid::Grid;
use crate::ground_state::GroundState;
use rand::{Rng, SeedableRng};
use std::sync::Arc;

/// `phi` and its rescalings for a given `(A, mu1, mu2)`.
///
/// `phi(y) = (int <s>^{-1-alpha} ds)^{-1} int_y^inf <s>^{-1-alpha} ds`
/// decreases from 1 to 0; `phi_A(y) = phi(y/A)`;
/// `Phi_{j,A}(y)^2 = |d_y phi_{j,A}(y)| = |phi_j'(y/A)| / A`. The `1/A`
/// factor is what makes the mixed `phi`/`Phi^2` estimates dimensionally
/// consistent in `A`.
pub struct WeightFamily {
    pub alpha: f64,
    pub a_scale: f64,
    pub mu1: f64,
    pub mu2: f64,
    /// normalisation `c_alpha = 1 / int <s>^{-1-alpha} ds`
    pub c_alpha: f64,
    pub phi_a: TailField,
    grid: Arc<Grid>,
}

impl WeightFamily {
    pub fn build(
        alpha: f64,
        a_scale: f64,
        mu1: f64,
        mu2: f64,
        grid: &Arc<Grid>,
    ) -> Result<WeightFamily, ModelError> {
        assert!(a_scale >= 1.0);
        let norm = weight_norm(alpha);
        let c_alpha = 1.0 / norm;
        // phi_A(y) = c_alpha * int_{y/A}^inf <s>^{-1-alpha} ds, built by exact
        // antidifferentiation of the sampled integrand
        let integrand = SpectralField::from_fn(grid.clone(), |y| {
            let s = y / a_scale;
            -c_alpha / a_scale * (1.0 + s * s).powf(-(1.0 + alpha) / 2.0)
        });
        let mut phi_a = TailField::antiderivative(&integrand, 0.0);
        // anchor so the last grid point carries the true (small) tail mass
        let l = grid.length();
        let y_anchor = grid.points()[grid.n_points() - 1];
        let tail_right = c_alpha * tail_mass(alpha, y_anchor / a_scale);
        phi_a = phi_a.add_constant(tail_right);
        let left = phi_a.value_at_index(0);
        if (1.0 - left).abs() > 0.05 {
            return Err(ModelError::DomainTooSmall { a: a_scale, l });
        }
        Ok(WeightFamily {
            alpha,
            a_scale,
            mu1,
            mu2,
            c_alpha,
            phi_a,
            grid: grid.clone(),
        })
    }

    pub fn phi_a_field(&self) -> SpectralField {
        self.phi_a.sample()
    }

    /// `phi_{1,A} = (1 - phi_A)/(1+mu1)^2 + phi_A/(1+mu2)^2`.
    pub fn phi_1a_field(&self) -> SpectralField {
        let c1 = 1.0 / (1.0 + self.mu1).powi(2);
        let c2 = 1.0 / (1.0 + self.mu2).powi(2);
        self.phi_a_field().map(|p| (1.0 - p) * c1 + p * c2)
    }

    /// `phi_{2,A} = mu1 (1 - phi_A)/(1+mu1)^2 + mu2 phi_A/(1+mu2)^2`.
    pub fn phi_2a_field(&self) -> SpectralField {
        let c1 = self.mu1 / (1.0 + self.mu1).powi(2);
        let c2 = self.mu2 / (1.0 + self.mu2).powi(2);
        self.phi_a_field().map(|p| (1.0 - p) * c1 + p * c2)
    }

    /// amplitude of `phi_1'` relative to `phi'`
    pub fn coef_1(&self) -> f64 {
        1.0 / (1.0 + self.mu2).powi(2) - 1.0 / (1.0 + self.mu1).powi(2)
    }

    fn coef_2(&self) -> f64 {
        self.mu2 / (1.0 + self.mu2).powi(2) - self.mu1 / (1.0 + self.mu1).powi(2)
    }

    /// `|phi'(x)| = c_alpha <x>^{-1-alpha}` evaluated at `x = y/A`.
    fn abs_phi_prime_scaled(&self, y: f64) -> f64 {
        let x = y / self.a_scale;
        self.c_alpha * (1.0 + x * x).powf(-(1.0 + self.alpha) / 2.0)
    }

    /// `Phi_{j,A}` for `j = 1, 2`.
    pub fn big_phi_field(&self, j: usize) -> SpectralField {
        let coef = if j == 1 { self.coef_1() } else { self.coef_2() }.abs();
        let a = self.a_scale;
        SpectralField::from_fn(self.grid.clone(), |y| {
            (self.abs_phi_prime_scaled(y) * coef / a).sqrt()
        })
    }

    /// `phi_{j,A}` for `j = 1, 2`.
    pub fn small_phi_field(&self, j: usize) -> SpectralField {
        if j == 1 {
            self.phi_1a_field()
        } else {
            self.phi_2a_field()
        }
    }

    /// Defect of the closed form
    /// `Phi_1 = c <y>^{-(1+alpha)/2} mu^{1/2} (2+mu_bar)^{1/2} / ((1+mu1)(1+mu2))`.
    pub fn phi1_closed_form_defect(&self) -> f64 {
        let mu = self.mu1 - self.mu2;
        if mu <= 0.0 {
            return f64::NAN;
        }
        let mubar = self.mu1 + self.mu2;
        let c = (self.c_alpha / self.a_scale).sqrt();
        let closed = SpectralField::from_fn(self.grid.clone(), |y| {
            let x = y / self.a_scale;
            c * (1.0 + x * x).powf(-(1.0 + self.alpha) / 4.0) * (mu * (2.0 + mubar)).sqrt()
                / ((1.0 + self.mu1) * (1.0 + self.mu2))
        });
        let built = self.big_phi_field(1);
        built.sub(&closed).linf_norm() / closed.linf_norm()
    }
}

/// `int_R <s>^{-1-alpha} ds` by quadrature.
fn weight_norm(alpha: f64) -> f64 {
    let f = |s: f64| (1.0 + s * s).powf(-(1.0 + alpha) / 2.0);
    // split at |s| = 1 and use the substitution s = 1/u on the tails
    let inner = crate::quad::adaptive_simpson(&f, -1.0, 1.0, 1e-13).expect("quadrature");
    let tail = crate::quad::adaptive_simpson(
        &|u: f64| {
            if u <= 0.0 {
                0.0
            } else {
                (1.0 + 1.0 / (u * u)).powf(-(1.0 + alpha) / 2.0) / (u * u)
            }
        },
        0.0,
        1.0,
        1e-13,
    )
    .expect("quadrature");
    inner + 2.0 * tail
}

/// `int_x^inf <s>^{-1-alpha} ds` for `x > 0`.
fn tail_mass(alpha: f64, x: f64) -> f64 {
    crate::quad::adaptive_simpson(
        &|u: f64| {
            if u <= 0.0 {
                0.0
            } else {
                (1.0 + 1.0 / (u * u)).powf(-(1.0 + alpha) / 2.0) / (u * u)
            }
        },
        0.0,
        1.0 / x,
        1e-13,
    )
    .expect("quadrature")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LemmaId {
    Comm1,
    Comm2,
    Ncomm1,
    Ncomm2,
    Interchange,
    CommSimpl,
    EstTc,
    CommH1,
    CommL2,
}

impl LemmaId {
    pub const ALL: [LemmaId; 9] = [
        LemmaId::Comm1,
        LemmaId::Comm2,
        LemmaId::Ncomm1,
        LemmaId::Ncomm2,
        LemmaId::Interchange,
        LemmaId::CommSimpl,
        LemmaId::EstTc,
        LemmaId::CommH1,
        LemmaId::CommL2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LemmaId::Comm1 => "comm1",
            LemmaId::Comm2 => "comm2",
            LemmaId::Ncomm1 => "ncomm1",
            LemmaId::Ncomm2 => "ncomm2",
            LemmaId::Interchange => "interchange",
            LemmaId::CommSimpl => "commsimpl",
            LemmaId::EstTc => "esttc",
            LemmaId::CommH1 => "commh1",
            LemmaId::CommL2 => "comml2",
        }
    }

    pub fn parse(s: &str) -> Option<LemmaId> {
        LemmaId::ALL.iter().copied().find(|l| l.name() == s)
    }

    /// Predicted decay exponent of the ratio in `A`.
    pub fn expected_slope(self, alpha: f64) -> f64 {
        match self {
            LemmaId::Comm1 | LemmaId::Comm2 | LemmaId::CommSimpl => -alpha,
            LemmaId::CommH1 => 0.0,
            _ => -alpha / 2.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EstimateReport {
    pub lemma: LemmaId,
    pub a_values: Vec<f64>,
    /// `ratios[ai][fi]` = LHS/RHS for weight scale `a_values[ai]`, function `fi`.
    pub ratios: Vec<Vec<f64>>,
    pub fitted_slope: f64,
    pub expected_slope: f64,
    /// max over the battery of `ratio * A^{-expected}` (the empirical constant)
    pub max_c: f64,
    pub pass: bool,
}

/// Fixed-seed battery: randomized Gaussian-times-cubic envelopes plus the
/// ground state and its generator when available.
pub fn default_battery(
    grid: &Arc<Grid>,
    count: usize,
    seed: u64,
    gs: Option<&GroundState>,
) -> Vec<SpectralField> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let l = grid.length();
    let mut out = Vec::new();
    for _ in 0..count {
        let y0: f64 = rng.gen_range(-l / 10.0..l / 10.0);
        let sigma: f64 = rng.gen_range(1.5..12.0);
        let c: [f64; 4] = [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ];
        out.push(SpectralField::from_fn(grid.clone(), move |y| {
            let t = (y - y0) / sigma;
            (-t * t).exp() * (c[0] + c[1] * t + c[2] * t * t + c[3] * t * t * t)
        }));
    }
    if let Some(g) = gs {
        out.push(g.q.clone());
        out.push(g.lambda_speed.clone());
    }
    out
}

/// Trapezoid integral restricted to the interior 80% of the domain
/// (wrap-around pollutes the excluded outer band).
fn interior_integral(f: &SpectralField) -> f64 {
    let grid = f.grid();
    let h = grid.spacing();
    let cut = 0.4 * grid.length();
    h * grid
        .points()
        .iter()
        .zip(f.values())
        .filter(|(&y, _)| y.abs() <= cut)
        .map(|(_, &v)| v)
        .sum::<f64>()
}

fn commutator_dalpha(alpha: f64, weight: &SpectralField, u: &SpectralField) -> SpectralField {
    weight
        .mul(u)
        .fractional_derivative(alpha)
        .expect("finite field")
        .sub(&weight.mul(&u.fractional_derivative(alpha).expect("finite field")))
}

/// Evaluate one estimate over the battery at one weight scale; returns the
/// LHS/RHS ratios per test function.
fn eval_lemma(
    lemma: LemmaId,
    wf: &WeightFamily,
    battery: &[SpectralField],
    j: usize,
) -> Vec<f64> {
    let alpha = wf.alpha;
    let big_phi = wf.big_phi_field(j);
    let small_phi = wf.small_phi_field(j);
    let phi2 = big_phi.mul(&big_phi);
    let sgn = if j == 1 { 1.0 } else { -1.0 }; // (-1)^{j+1}
    let mut out = Vec::new();
    for (i, u) in battery.iter().enumerate() {
        let v = &battery[(i + 1) % battery.len()];
        let du = u.fractional_derivative(alpha).expect("finite field");
        let hu = u.fractional_derivative(alpha / 2.0).expect("finite field");
        let ratio = match lemma {
            LemmaId::Comm1 => {
                let i1 = interior_integral(&du.mul(u).mul(&phi2));
                let w = u
                    .mul(&big_phi)
                    .fractional_derivative(alpha / 2.0)
                    .expect("finite field");
                let i2 = interior_integral(&w.mul(&w));
                let rhs = interior_integral(&u.mul(u).mul(&phi2));
                (i1 - i2).abs() / rhs.max(1e-300)
            }
            LemmaId::Comm2 => {
                let i1 = interior_integral(&du.mul(&u.derivative()).mul(&small_phi));
                let w = u
                    .mul(&big_phi)
                    .fractional_derivative(alpha / 2.0)
                    .expect("finite field");
                let i2 = interior_integral(&w.mul(&w));
                let rhs = interior_integral(&u.mul(u).mul(&phi2));
                (i1 + sgn * (alpha - 1.0) / 2.0 * i2).abs() / rhs.max(1e-300)
            }
            LemmaId::Ncomm1 => {
                let dv = v.fractional_derivative(alpha).expect("finite field");
                let i1 = interior_integral(&du.mul(v).sub(&dv.mul(u)).mul(&phi2));
                let rhs = interior_integral(
                    &u.mul(u).add(&v.mul(v)).add(&hu.mul(&hu)).mul(&phi2),
                );
                i1.abs() / rhs.max(1e-300)
            }
            LemmaId::Ncomm2 => {
                let dv = v.fractional_derivative(alpha).expect("finite field");
                let i1 = interior_integral(
                    &du.mul(&v.derivative())
                        .add(&dv.mul(&u.derivative()))
                        .mul(&small_phi),
                );
                let wu = u
                    .mul(&big_phi)
                    .fractional_derivative(alpha / 2.0)
                    .expect("finite field");
                let wv = v
                    .mul(&big_phi)
                    .fractional_derivative(alpha / 2.0)
                    .expect("finite field");
                let i2 = interior_integral(&wu.mul(&wv));
                let rhs = interior_integral(
                    &u.mul(u).add(&v.mul(v)).add(&hu.mul(&hu)).mul(&phi2),
                );
                (i1 + sgn * (alpha - 1.0) * i2).abs() / rhs.max(1e-300)
            }
            LemmaId::Interchange => {
                let w = u
                    .mul(&big_phi)
                    .fractional_derivative(alpha / 2.0)
                    .expect("finite field");
                let i1 = interior_integral(&w.mul(&w));
                let i2 = interior_integral(&hu.mul(&hu).mul(&phi2));
                let rhs = interior_integral(&u.mul(u).add(&hu.mul(&hu)).mul(&phi2));
                (i1 - i2).abs() / rhs.max(1e-300)
            }
            LemmaId::CommSimpl => {
                let c = commutator_dalpha(alpha, &big_phi, u);
                let lhs = interior_integral(&c.mul(&c));
                let rhs = interior_integral(&u.mul(u).add(&hu.mul(&hu)).mul(&phi2));
                lhs / rhs.max(1e-300)
            }
            LemmaId::EstTc => {
                let i1 = interior_integral(
                    &u.mul(&big_phi)
                        .fractional_derivative(alpha)
                        .expect("finite field")
                        .mul(&du.mul(&big_phi)),
                );
                let i2 = interior_integral(&du.mul(&du).mul(&phi2));
                let rhs = interior_integral(
                    &u.mul(u).add(&hu.mul(&hu)).add(&du.mul(&du)).mul(&phi2),
                );
                (i1 - i2).abs() / rhs.max(1e-300)
            }
            LemmaId::CommH1 => {
                let c = commutator_dalpha(alpha, &small_phi, u);
                let lhs = interior_integral(&c.mul(&c)).sqrt();
                let coef = wf.coef_1().abs().sqrt();
                let rhs = coef * u.mul(&big_phi).hs_norm(1.0);
                lhs / rhs.max(1e-300)
            }
            LemmaId::CommL2 => {
                let pa = wf.phi_a_field().map(|p| p.clamp(0.0, 1.0));
                let sq = pa.map(f64::sqrt);
                let sq1 = pa.map(|p| (1.0 - p).max(0.0).sqrt());
                let c1 = commutator_dalpha(alpha, &sq, u);
                let c2 = commutator_dalpha(alpha, &sq1, u);
                let lhs = interior_integral(&c1.mul(&c1)).sqrt()
                    + interior_integral(&c2.mul(&c2)).sqrt();
                lhs / u.hs_norm(alpha / 2.0).max(1e-300)
            }
        };
        out.push(ratio);
    }
    out
}

pub fn check_estimate(
    lemma: LemmaId,
    alpha: f64,
    a_values: &[f64],
    battery: &[SpectralField],
    grid: &Arc<Grid>,
    mu: (f64, f64),
) -> Result<EstimateReport, ModelError> {
    let j = 1usize;
    let mut ratios = Vec::new();
    for &a in a_values {
        let wf = WeightFamily::build(alpha, a, mu.0, mu.1, grid)?;
        ratios.push(eval_lemma(lemma, &wf, battery, j));
    }
    // slope of the battery-max ratio against A
    let pairs: Vec<(f64, f64)> = a_values
        .iter()
        .zip(&ratios)
        .map(|(&a, r)| {
            let m = r.iter().cloned().fold(0.0f64, f64::max);
            (a.ln(), m.max(1e-300).ln())
        })
        .collect();
    let fitted_slope = crate::evolution::fit_slope(&pairs);
    let expected_slope = lemma.expected_slope(alpha);
    let mut max_c = 0.0f64;
    for (&a, r) in a_values.iter().zip(&ratios) {
        for &x in r {
            max_c = max_c.max(x * a.powf(-expected_slope));
        }
    }
    let pass = max_c.is_finite() && fitted_slope <= expected_slope + 0.4;
    Ok(EstimateReport {
        lemma,
        a_values: a_values.to_vec(),
        ratios,
        fitted_slope,
        expected_slope,
        max_c,
        pass,
    })
}

/// Fitted constant of the weight modulus-of-continuity bound over random
/// point pairs.
pub fn weight_modulus_constant(wf: &WeightFamily, samples: usize, seed: u64) -> f64 {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let alpha = wf.alpha;
    let l = wf.grid.length();
    let phi = |x: f64| -> f64 {
        // continuum phi via the tail mass (A developed out)
        if x >= 0.0 {
            wf.c_alpha * tail_mass(alpha, x.max(1e-9))
        } else {
            1.0 - wf.c_alpha * tail_mass(alpha, (-x).max(1e-9))
        }
    };
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let x: f64 = rng.gen_range(-l / 4.0..l / 4.0);
        let jx = (1.0 + x * x).sqrt();
        let max_d = 0.5 * (jx + (1.0 + x * x).sqrt());
        let d: f64 = rng.gen_range(-max_d..max_d);
        let y = x + d;
        let jy = (1.0 + y * y).sqrt();
        if d.abs() > 0.5 * (jx + jy) {
            continue;
        }
        let bound = d.abs() / (jx * jy).powf((alpha + 1.0) / 2.0)
            + d * d / (jx + jy).powf(alpha + 2.0);
        if bound > 1e-14 {
            worst = worst.max((phi(x) - phi(y)).abs() / bound);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Arc<Grid> {
        Grid::new(2048, 1024.0).unwrap()
    }

    #[test]
    fn phi_at_zero_is_half() {
        // A = 4 keeps the transition resolved on this grid spacing
        let g = grid();
        let wf = WeightFamily::build(1.5, 4.0, 0.0, 0.0, &g).unwrap();
        let f = wf.phi_a_field();
        let n = g.n_points();
        // y = 0 sits at index n/2
        assert!((f.values()[n / 2] - 0.5).abs() < 1e-8);
        // monotone decreasing
        for w in f.values().windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn degenerate_weights_at_zero_mu() {
        let g = grid();
        let wf = WeightFamily::build(1.5, 4.0, 0.0, 0.0, &g).unwrap();
        let p1 = wf.phi_1a_field();
        assert!(p1.map(|v| v - 1.0).linf_norm() < 1e-12);
        assert!(wf.big_phi_field(1).linf_norm() < 1e-12);
    }

    #[test]
    fn phi1_closed_form_holds() {
        let g = grid();
        let wf = WeightFamily::build(1.5, 8.0, 0.05, -0.05, &g).unwrap();
        assert!(wf.phi1_closed_form_defect() < 1e-10);
    }

    #[test]
    fn transition_hitting_boundary_is_an_error() {
        let g = Grid::new(256, 64.0).unwrap();
        assert!(matches!(
            WeightFamily::build(1.5, 64.0, 0.0, 0.0, &g),
            Err(ModelError::DomainTooSmall { .. })
        ));
    }

    #[test]
    fn comm1_single_mode_decays_in_a() {
        let g = grid();
        let alpha = 1.5;
        let u = SpectralField::from_fn(g.clone(), |y| {
            (-y * y / 400.0).exp() * (0.7 * y).sin()
        });
        let report = check_estimate(
            LemmaId::Comm1,
            alpha,
            &[4.0, 8.0, 16.0, 32.0, 64.0],
            &[u],
            &g,
            (0.05, -0.05),
        )
        .unwrap();
        assert!(
            report.fitted_slope <= -alpha + 0.4,
            "slope {:.2}",
            report.fitted_slope
        );
        assert!(report.pass);
    }

    #[test]
    fn comm2_sign_structure() {
        // for j = 1 the phi-weighted dispersive flux correlates negatively
        let g = grid();
        let alpha = 1.5;
        let wf = WeightFamily::build(alpha, 64.0, 0.05, -0.05, &g).unwrap();
        let u = SpectralField::from_fn(g.clone(), |y| (-y * y / 200.0).exp() * (1.3 * y).cos());
        let du = u.fractional_derivative(alpha).unwrap();
        let i1 = interior_integral(&du.mul(&u.derivative()).mul(&wf.small_phi_field(1)));
        assert!(i1 < 0.0, "i1 = {i1:.3e}");
    }

    #[test]
    fn ncomm1_antisymmetric_in_equal_arguments() {
        let g = grid();
        let alpha = 1.5;
        let wf = WeightFamily::build(alpha, 8.0, 0.05, -0.05, &g).unwrap();
        let u = SpectralField::from_fn(g.clone(), |y| (-y * y / 50.0).exp());
        let du = u.fractional_derivative(alpha).unwrap();
        let phi2 = {
            let p = wf.big_phi_field(1);
            p.mul(&p)
        };
        let lhs = interior_integral(&du.mul(&u).sub(&du.mul(&u)).mul(&phi2));
        assert_eq!(lhs, 0.0);
    }

    #[test]
    fn constant_weight_commutes() {
        let g = grid();
        let one = SpectralField::from_fn(g.clone(), |_| 1.0);
        let u = SpectralField::from_fn(g, |y| (-y * y / 30.0).exp() * y);
        let c = commutator_dalpha(1.5, &one, &u);
        assert!(c.linf_norm() < 1e-12);
    }

    #[test]
    fn weight_modulus_bound_has_stable_constant() {
        let g = grid();
        let wf = WeightFamily::build(1.5, 4.0, 0.0, 0.0, &g).unwrap();
        let c1 = weight_modulus_constant(&wf, 4000, 11);
        let c2 = weight_modulus_constant(&wf, 4000, 97);
        assert!(c1.is_finite() && c1 > 0.0);
        assert!(c2 / c1 < 3.0 && c1 / c2 < 3.0, "c1={c1:.3} c2={c2:.3}");
    }
}
