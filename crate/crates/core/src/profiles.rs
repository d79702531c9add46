//! Interaction profiles of the two-wave approximation: the basis fields
//! `B_0..B_5` / `D_0..D_5`, the coefficients `beta(Gamma)`, `delta(Gamma)`,
//! the interaction coefficient `b(z) = b_1 / z^{alpha+2}`, the bump `W`, the
//! assembled approximation `V` and the exact residual decomposition
//! `E_V = m . MV + d_y S + T`.

use crate::error::ModelError;
use crate::field::{SpectralField, TailField};
use crate::ground_state::{rescale_ground_state, solve_ground_state, GroundState, PetviashviliConfig};
use crate::linearized::{
    solve_with_q_correction, solve_with_tail, LinearizedOperator, TailFunction, TailSign,
};
use crate::modulation::{GammaDot, ModulationState};
use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

/// How the scaled wave profiles `Q_{1+mu}` are produced.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum WaveProfiles {
    /// Spectral dilation of the base profile (fast; used for fitting).
    Dilated,
    /// A fresh elliptic solve per speed (exact discrete elliptic residual;
    /// used for the residual-decomposition identities).
    DirectSolve,
}

/// Cache of scaled ground states keyed by the speed.
pub struct WaveFamily {
    pub gs: Arc<GroundState>,
    pub mode: WaveProfiles,
    cache: RefCell<HashMap<u64, Arc<GroundState>>>,
}

impl WaveFamily {
    pub fn new(gs: Arc<GroundState>, mode: WaveProfiles) -> WaveFamily {
        WaveFamily {
            gs,
            mode,
            cache: RefCell::new(HashMap::new()),
        }
    }

    pub fn state(&self, c: f64) -> Result<Arc<GroundState>, ModelError> {
        if (c - self.gs.c).abs() < 1e-15 {
            return Ok(self.gs.clone());
        }
        let key = c.to_bits();
        if let Some(hit) = self.cache.borrow().get(&key) {
            return Ok(hit.clone());
        }
        let state = match self.mode {
            WaveProfiles::Dilated => Arc::new(rescale_ground_state(&self.gs, c)?),
            WaveProfiles::DirectSolve => Arc::new(solve_ground_state(
                self.gs.alpha,
                c,
                self.gs.grid(),
                PetviashviliConfig::default(),
            )?),
        };
        self.cache.borrow_mut().insert(key, state.clone());
        Ok(state)
    }
}

/// The six-field profile basis and its coefficients.
pub struct ProfileSet {
    pub gs: Arc<GroundState>,
    pub tail: TailFunction,
    pub b_basis: [SpectralField; 6],
    pub d_basis: [SpectralField; 6],
    pub betas: [f64; 6],
    pub deltas: [f64; 6],
    pub b1: f64,
    pub d1: f64,
    /// Swap the `mu_1`/`mu_2` slots of `f(Gamma)` for the back wave
    /// (the wave's own `mu` then multiplies its own even correction).
    pub swap_back_mu_slots: bool,
    /// Worst residual and orthogonality defect over the basis solves.
    pub worst_residual: f64,
    pub worst_orth_defect: f64,
}

/// Slot coefficients `f(Gamma)` for one wave.
fn f_slots(alpha: f64, gamma: &ModulationState, own_first: bool) -> [f64; 6] {
    let z = gamma.z();
    let (ma, mb) = if own_first {
        (gamma.mu1, gamma.mu2)
    } else {
        (gamma.mu2, gamma.mu1)
    };
    [
        z.powf(-1.0 - alpha),
        z.powf(-2.0 - alpha),
        ma * z.powf(-1.0 - alpha),
        mb * z.powf(-1.0 - alpha),
        z.powf(-2.0 * alpha - 1.0),
        z.powf(-3.0 - alpha),
    ]
}

/// d/dt of the slot coefficients by the chain rule.
fn f_slots_dot(
    alpha: f64,
    gamma: &ModulationState,
    dot: &GammaDot,
    own_first: bool,
) -> [f64; 6] {
    let z = gamma.z();
    let zd = dot.z1_dot - dot.z2_dot;
    let (ma, mb, mad, mbd) = if own_first {
        (gamma.mu1, gamma.mu2, dot.mu1_dot, dot.mu2_dot)
    } else {
        (gamma.mu2, gamma.mu1, dot.mu2_dot, dot.mu1_dot)
    };
    let p1 = -(1.0 + alpha) * z.powf(-2.0 - alpha) * zd;
    [
        p1,
        -(2.0 + alpha) * z.powf(-3.0 - alpha) * zd,
        mad * z.powf(-1.0 - alpha) + ma * p1,
        mbd * z.powf(-1.0 - alpha) + mb * p1,
        -(2.0 * alpha + 1.0) * z.powf(-2.0 * alpha - 2.0) * zd,
        -(3.0 + alpha) * z.powf(-4.0 - alpha) * zd,
    ]
}

/// Source fields for the slot problems of one wave (`sign = -1` front wave;
/// `sign = +1` back wave flips the odd slot).
fn slot_sources(gs: &GroundState, tail: &TailFunction, b0: Option<&SpectralField>, beta0: f64) -> Vec<SpectralField> {
    let a = gs.alpha;
    let q2 = gs.q.mul(&gs.q);
    let y = SpectralField::coordinate(gs.grid());
    let lam = &gs.lambda_speed;
    let mut out = Vec::new();
    // slot 0: L B0 = -3 a1 Q^2 + beta0 Q
    out.push(q2.scale(-3.0 * gs.a1));
    // slot 1 handled separately (tail solve)
    out.push(SpectralField::zeros(gs.grid().clone()));
    // slot 2 (own-mu): L B2 = 6 Q Lam Q B0 - 6 a1 Q Lam Q - B0 + beta0 Lam Q + beta2 Q
    if let Some(b0f) = b0 {
        let qlam = gs.q.mul(lam);
        out.push(
            qlam.mul(b0f)
                .scale(6.0)
                .sub(&qlam.scale(6.0 * gs.a1))
                .sub(b0f)
                .add(&lam.scale(beta0)),
        );
    } else {
        out.push(SpectralField::zeros(gs.grid().clone()));
    }
    // slot 3 (other-mu): far field of Lambda_s is -a1(alpha+2)/(2 alpha) / y^{1+alpha}
    out.push(q2.scale(3.0 * gs.a1 * (a + 2.0) / (2.0 * a)));
    // slot 4: L B4 = -3 a2 Q^2 + beta4 Q
    out.push(q2.scale(-3.0 * gs.a2));
    // slot 5: L B5 = -3 (a1 (alpha+1)(alpha+2)/2 y^2 + a3) Q^2 + beta5 Q
    let quad = y
        .mul(&y)
        .scale(gs.a1 * (a + 1.0) * (a + 2.0) / 2.0)
        .map(|v| v + 0.0);
    let poly = quad.map(|v| v + gs.a3_fitted);
    out.push(poly.mul(&q2).scale(-3.0));
    let _ = tail;
    out
}

/// Build the full basis (six ant1/ant2 solves for B, one extra for D1).
pub fn build_profile_set(
    op: &LinearizedOperator,
    tail: TailFunction,
) -> Result<ProfileSet, ModelError> {
    let gs = op.gs.clone();
    let a = gs.alpha;
    let mut worst_residual = 0.0f64;
    let mut worst_orth = 0.0f64;

    // B0 first, it feeds the slot-2 source
    let q2 = gs.q.mul(&gs.q);
    let s0 = solve_with_q_correction(op, &q2.scale(-3.0 * gs.a1))?;
    worst_residual = worst_residual.max(s0.residual);
    worst_orth = worst_orth.max(s0.orth_q.max(s0.orth_qprime));
    let b0_field = s0.f.clone();
    let beta0 = s0.a;

    let sources = slot_sources(&gs, &tail, Some(&b0_field), beta0);

    // slot 1, front wave: d_y L (B1 - b1 S0) = d_y(3(a+1) a1 y Q^2) + beta1 Q' + b1 Lam Q
    let y = SpectralField::coordinate(gs.grid());
    let g1 = y.mul(&q2).scale(3.0 * (a + 1.0) * gs.a1);
    let front = solve_with_tail(op, &tail, &g1, TailSign::Front)?;
    worst_residual = worst_residual.max(front.residual);
    let b1 = front.a_tilde;
    let beta1 = front.a;
    let b1_field = front.f;

    // remaining ant1 slots
    let mut b_fields: Vec<SpectralField> = Vec::with_capacity(6);
    let mut betas = [0.0f64; 6];
    betas[0] = beta0;
    betas[1] = beta1;
    b_fields.push(b0_field);
    b_fields.push(b1_field);
    for j in 2..6 {
        let sol = solve_with_q_correction(op, &sources[j])?;
        worst_residual = worst_residual.max(sol.residual);
        worst_orth = worst_orth.max(sol.orth_q.max(sol.orth_qprime));
        betas[j] = sol.a;
        b_fields.push(sol.f);
    }

    // D1, back wave: d_y L (D1 + d1 (l - S0)) = d_y(-3(a+1) a1 y Q^2) + delta1 Q' + d1 Lam Q
    let back = solve_with_tail(op, &tail, &g1.scale(-1.0), TailSign::Back)?;
    worst_residual = worst_residual.max(back.residual);
    let d1 = back.a_tilde;
    let delta1 = back.a;
    let d1_field = back.f;

    let mut d_fields: Vec<SpectralField> = b_fields.clone();
    d_fields[1] = d1_field;
    let mut deltas = betas;
    deltas[1] = delta1;

    let b_basis: [SpectralField; 6] = b_fields.try_into().map_err(|_| {
        ModelError::Solver(crate::error::SolverError::Eigensolver("basis size".into()))
    })?;
    let d_basis: [SpectralField; 6] = d_fields.try_into().map_err(|_| {
        ModelError::Solver(crate::error::SolverError::Eigensolver("basis size".into()))
    })?;

    Ok(ProfileSet {
        gs,
        tail,
        b_basis,
        d_basis,
        betas,
        deltas,
        b1,
        d1,
        swap_back_mu_slots: true,
        worst_residual,
        worst_orth_defect: worst_orth,
    })
}

impl ProfileSet {
    pub fn b_of_z(&self, z: f64) -> f64 {
        self.b1 / z.powf(self.gs.alpha + 2.0)
    }

    /// `beta(Gamma) = betas . f(Gamma)` (front-wave slot order).
    pub fn beta(&self, gamma: &ModulationState) -> Result<f64, ModelError> {
        if gamma.z() <= 0.0 {
            return Err(ModelError::WaveOrdering(gamma.z()));
        }
        let f = f_slots(self.gs.alpha, gamma, true);
        Ok(self.betas.iter().zip(f).map(|(b, fv)| b * fv).sum())
    }

    /// `delta(Gamma) = deltas . f(Gamma)`, with the back wave's own `mu`
    /// placed on its even-correction slot when the swap flag is set.
    pub fn delta(&self, gamma: &ModulationState) -> Result<f64, ModelError> {
        if gamma.z() <= 0.0 {
            return Err(ModelError::WaveOrdering(gamma.z()));
        }
        let f = f_slots(self.gs.alpha, gamma, !self.swap_back_mu_slots);
        Ok(self.deltas.iter().zip(f).map(|(d, fv)| d * fv).sum())
    }
}

/// One wave's assembled fields.
pub struct WaveData {
    pub r: SpectralField,
    pub r_tilde: SpectralField,
    pub lambda_r: SpectralField,
    pub lambda_r_tilde: SpectralField,
    pub dy_r: SpectralField,
    pub dy_r_tilde: SpectralField,
}

/// The assembled approximation `V(Gamma)` with all constituent fields.
pub struct ApproximateSolution {
    pub gamma: ModulationState,
    pub v: SpectralField,
    pub waves: [WaveData; 2],
    pub p: [SpectralField; 2],
    pub w_bump: SpectralField,
    pub b_value: f64,
    /// `S0(. - z1)` and `(l - S0)(. - z2)` as tail fields.
    pub s0_z1: TailField,
    pub lms0_z2: TailField,
}

pub fn assemble_approximation(
    ps: &ProfileSet,
    family: &WaveFamily,
    gamma: &ModulationState,
) -> Result<ApproximateSolution, ModelError> {
    let gs = &ps.gs;
    let grid = gs.grid();
    let z = gamma.z();
    if z <= 0.0 {
        return Err(ModelError::WaveOrdering(z));
    }
    if z < 16.0 * grid.spacing() {
        return Err(ModelError::SeparationTooSmall {
            z,
            min: 16.0 * grid.spacing(),
        });
    }
    let half = grid.length() / 2.0;
    if gamma.z1.abs() > half - z / 4.0 || gamma.z2.abs() > half - z / 4.0 {
        return Err(ModelError::BoundaryViolation {
            z1: gamma.z1,
            z2: gamma.z2,
            l: grid.length(),
        });
    }

    let mut waves = Vec::with_capacity(2);
    for (zi, mui) in [(gamma.z1, gamma.mu1), (gamma.z2, gamma.mu2)] {
        let st = family.state(1.0 + mui)?;
        waves.push(WaveData {
            r: st.q.shift(zi),
            r_tilde: gs.q.shift(zi),
            lambda_r: st.lambda_speed.shift(zi),
            lambda_r_tilde: gs.lambda_speed.shift(zi),
            dy_r: st.q_prime.shift(zi),
            dy_r_tilde: gs.q_prime.shift(zi),
        });
    }
    let waves: [WaveData; 2] = waves.try_into().map_err(|_| ModelError::WaveOrdering(z))?;

    // P_i = f(Gamma) . basis(. - z_i)
    let f1 = f_slots(gs.alpha, gamma, true);
    let f2 = f_slots(gs.alpha, gamma, !ps.swap_back_mu_slots);
    let mut p1 = SpectralField::zeros(grid.clone());
    let mut p2 = SpectralField::zeros(grid.clone());
    for j in 0..6 {
        p1 = p1.add(&ps.b_basis[j].shift(gamma.z1).scale(f1[j]));
        p2 = p2.add(&ps.d_basis[j].shift(gamma.z2).scale(f2[j]));
    }

    let s0_z1 = ps.tail.s0.shift(gamma.z1);
    let lms0_z2 = ps.tail.l_minus_s0().shift(gamma.z2);
    let w_bump = s0_z1.sample().sub(&ps.tail.s0.shift(gamma.z2).sample());
    let b_value = ps.b_of_z(z);

    let v = waves[0]
        .r
        .add(&p1)
        .scale(-1.0)
        .add(&waves[1].r.add(&p2))
        .add(&w_bump.scale(b_value));

    Ok(ApproximateSolution {
        gamma: *gamma,
        v,
        waves,
        p: [p1, p2],
        w_bump,
        b_value,
        s0_z1,
        lms0_z2,
    })
}

impl ApproximateSolution {
    /// `d/dt V` by the exact chain rule in `(Gamma, Gamma_dot)`.
    pub fn time_derivative(&self, ps: &ProfileSet, dot: &GammaDot) -> SpectralField {
        let gs = &ps.gs;
        let g = &self.gamma;
        // wave parts
        let mut out = self.waves[0]
            .lambda_r
            .scale(-dot.mu1_dot)
            .add(&self.waves[0].dy_r.scale(dot.z1_dot));
        out = out
            .add(&self.waves[1].lambda_r.scale(dot.mu2_dot))
            .add(&self.waves[1].dy_r.scale(-dot.z2_dot));
        // profiles: d/dt P_i = (df/dt) . B(.-z_i) - z_i' d_y P_i
        let f1d = f_slots_dot(gs.alpha, g, dot, true);
        let f2d = f_slots_dot(gs.alpha, g, dot, !ps.swap_back_mu_slots);
        let mut dp1 = SpectralField::zeros(gs.grid().clone());
        let mut dp2 = SpectralField::zeros(gs.grid().clone());
        for j in 0..6 {
            dp1 = dp1.add(&ps.b_basis[j].shift(g.z1).scale(f1d[j]));
            dp2 = dp2.add(&ps.d_basis[j].shift(g.z2).scale(f2d[j]));
        }
        dp1 = dp1.sub(&self.p[0].derivative().scale(dot.z1_dot));
        dp2 = dp2.sub(&self.p[1].derivative().scale(dot.z2_dot));
        out = out.sub(&dp1).add(&dp2);
        // d/dt (b W) = b' W + b dW/dt, with dW/dt = z1' w(.-z1) - z2' w(.-z2)
        let z = g.z();
        let zd = dot.z1_dot - dot.z2_dot;
        let bdot = -(gs.alpha + 2.0) * self.b_value / z * zd;
        let dw = ps
            .tail
            .w
            .shift(g.z1)
            .scale(dot.z1_dot)
            .sub(&ps.tail.w.shift(g.z2).scale(dot.z2_dot));
        out.add(&self.w_bump.scale(bdot)).add(&dw.scale(self.b_value))
    }

    /// Direct residual `E_V = d_t V + d_y(-|D|^a V - V + V^3)`.
    pub fn residual_direct(&self, ps: &ProfileSet, dot: &GammaDot) -> SpectralField {
        let alpha = ps.gs.alpha;
        let flux = self
            .v
            .fractional_derivative(alpha)
            .expect("finite field")
            .scale(-1.0)
            .sub(&self.v)
            .add(&self.v.mul(&self.v).mul(&self.v))
            .derivative();
        self.time_derivative(ps, dot).add(&flux)
    }
}

/// The decomposition `E_V = m . MV + d_y S + T` with all named parts.
pub struct ResidualDecomposition {
    pub m_vec: [f64; 4],
    pub s1: SpectralField,
    pub s2: SpectralField,
    pub s_v3: SpectralField,
    pub s_tilde: SpectralField,
    pub t_field: SpectralField,
    pub e_v: SpectralField,
    /// `m . MV + d_y S + T`
    pub reconstructed: SpectralField,
    pub s_total: SpectralField,
}

/// Sign convention of the third slot of `m`: the derivation forces
/// `mu2' - b`, with the matching extra term in `S2`; the printed variant
/// `mu2' + b` is kept behind this switch for comparison.
pub const PAPER_SLOT3: bool = false;

/// `Q_app(x, z)` evaluated pointwise with the state's constants.
fn q_app_field(
    gs: &GroundState,
    center: f64,
    mirror: bool,
    z: f64,
) -> SpectralField {
    let a = gs.alpha;
    let (a1, a2, a3) = (gs.a1, gs.a2, gs.a3_fitted);
    SpectralField::from_fn(gs.grid().clone(), |y| {
        let x = if mirror { -(y - center) } else { y - center };
        a1 / z.powf(a + 1.0) - (a + 1.0) * a1 * x / z.powf(a + 2.0)
            + a2 / z.powf(2.0 * a + 1.0)
            + (a1 * (a + 1.0) * (a + 2.0) / 2.0 * x * x + a3) / z.powf(a + 3.0)
    })
}

pub fn residual_decompose(
    ps: &ProfileSet,
    approx: &ApproximateSolution,
    dot: &GammaDot,
) -> Result<ResidualDecomposition, ModelError> {
    let gs = &ps.gs;
    let g = &approx.gamma;
    let z = g.z();
    let b = approx.b_value;
    let beta = ps.beta(g)?;
    let delta = ps.delta(g)?;

    let w1 = &approx.waves[0];
    let w2 = &approx.waves[1];
    let (r1, r2) = (&w1.r, &w2.r);
    let (rt1, rt2) = (&w1.r_tilde, &w2.r_tilde);
    let (p1, p2) = (&approx.p[0], &approx.p[1]);
    let s0z1 = approx.s0_z1.sample();
    let lms0z2 = approx.lms0_z2.sample();

    // m and MV
    let slot3 = if PAPER_SLOT3 {
        dot.mu2_dot + b
    } else {
        dot.mu2_dot - b
    };
    let m_vec = [
        -dot.mu1_dot + b,
        dot.z1_dot - g.mu1 + beta,
        slot3,
        -dot.z2_dot + g.mu2 - delta,
    ];
    let m_mv = w1
        .lambda_r
        .scale(m_vec[0])
        .add(&w1.dy_r.scale(m_vec[1]))
        .add(&w2.lambda_r.scale(m_vec[2]))
        .add(&w2.dy_r.scale(m_vec[3]));

    // S_V3 per its defining formula
    let v3 = approx.v.mul(&approx.v).mul(&approx.v);
    let r1_3 = r1.mul(r1).mul(r1);
    let r2_3 = r2.mul(r2).mul(r2);
    let r1sq = r1.mul(r1);
    let r2sq = r2.mul(r2);
    let s_v3 = v3
        .add(&r1_3)
        .sub(&r2_3)
        .add(&r1sq.mul(p1).scale(3.0))
        .sub(&r2sq.mul(p2).scale(3.0))
        .sub(&r1sq.mul(&s0z1).scale(3.0 * b))
        .sub(&r2sq.mul(&lms0z2).scale(3.0 * b))
        .sub(&r1sq.mul(r2).scale(3.0))
        .add(&r1.mul(&r2sq).scale(3.0));

    // curly-S(i, j) terms
    let rt1sq = rt1.mul(rt1);
    let rt2sq = rt2.mul(rt2);
    let beta0 = ps.betas[0];
    let delta0 = ps.deltas[0];
    let zpow = z.powf(-1.0 - gs.alpha);
    let s_cal_12 = rt1sq
        .mul(rt2)
        .scale(3.0)
        .sub(&rt1.mul(&w1.lambda_r_tilde).mul(p1).scale(6.0 * g.mu1))
        .add(&rt1.mul(&w1.lambda_r_tilde).mul(rt2).scale(6.0 * g.mu1))
        .add(&rt1sq.mul(&w2.lambda_r_tilde).scale(3.0 * g.mu2))
        .add(&p1.scale(g.mu1))
        .sub(&w1.lambda_r_tilde.scale(beta0 * g.mu1 * zpow));
    let s_cal_21 = rt2sq
        .mul(rt1)
        .scale(3.0)
        .sub(&rt2.mul(&w2.lambda_r_tilde).mul(p2).scale(6.0 * g.mu2))
        .add(&rt2.mul(&w2.lambda_r_tilde).mul(rt1).scale(6.0 * g.mu2))
        .add(&rt2sq.mul(&w1.lambda_r_tilde).scale(3.0 * g.mu1))
        .add(&p2.scale(g.mu2))
        .sub(&w2.lambda_r_tilde.scale(delta0 * g.mu2 * zpow));

    // curly-F(i, j): the slot-exact approximations of curly-S
    let qapp1 = q_app_field(gs, g.z1, false, z);
    let qapp2 = q_app_field(gs, g.z2, true, z);
    let lam_far = gs.a1 * (gs.alpha + 2.0) / (2.0 * gs.alpha);
    let b0_z1 = ps.b_basis[0].shift(g.z1);
    let b0_z2 = ps.d_basis[0].shift(g.z2);
    let f_cal_12 = rt1sq
        .mul(&qapp1)
        .scale(3.0)
        .sub(&rt1.mul(&w1.lambda_r_tilde).mul(&b0_z1).scale(6.0 * g.mu1 * zpow))
        .add(&rt1.mul(&w1.lambda_r_tilde).scale(6.0 * g.mu1 * zpow * gs.a1))
        .sub(&rt1sq.scale(3.0 * g.mu2 * zpow * lam_far))
        .add(&b0_z1.scale(g.mu1 * zpow))
        .sub(&w1.lambda_r_tilde.scale(beta0 * g.mu1 * zpow));
    let f_cal_21 = rt2sq
        .mul(&qapp2)
        .scale(3.0)
        .sub(&rt2.mul(&w2.lambda_r_tilde).mul(&b0_z2).scale(6.0 * g.mu2 * zpow))
        .add(&rt2.mul(&w2.lambda_r_tilde).scale(6.0 * g.mu2 * zpow * gs.a1))
        .sub(&rt2sq.scale(3.0 * g.mu1 * zpow * lam_far))
        .add(&b0_z2.scale(g.mu2 * zpow))
        .sub(&w2.lambda_r_tilde.scale(delta0 * g.mu2 * zpow));

    let s1 = s_cal_12.sub(&f_cal_12);
    let mut s2 = f_cal_21.sub(&s_cal_21);
    if !PAPER_SLOT3 {
        // extra term generated by the back-wave tail mismatch
        s2 = s2.add(&rt2sq.mul(&lms0z2).scale(6.0 * b));
    }

    // S_tilde
    let dr1 = r1.mul(r1).sub(&rt1sq);
    let dr2 = r2.mul(r2).sub(&rt2sq);
    let comb1 = p1.scale(-1.0).add(&s0z1.scale(b));
    let comb2 = p2.add(&lms0z2.scale(b));
    let s_tilde_12 = rt1
        .mul(&w1.lambda_r_tilde)
        .mul(p1)
        .scale(6.0 * g.mu1)
        .add(&r1sq.mul(r2).scale(3.0))
        .sub(&rt1sq.mul(rt2).scale(3.0))
        .sub(&rt1.mul(&w1.lambda_r_tilde).mul(rt2).scale(6.0 * g.mu1))
        .sub(&rt1sq.mul(&w2.lambda_r_tilde).scale(3.0 * g.mu2));
    let s_tilde_21 = rt2
        .mul(&w2.lambda_r_tilde)
        .mul(p2)
        .scale(6.0 * g.mu2)
        .add(&r2sq.mul(r1).scale(3.0))
        .sub(&rt2sq.mul(rt1).scale(3.0))
        .sub(&rt2.mul(&w2.lambda_r_tilde).mul(rt1).scale(6.0 * g.mu2))
        .sub(&rt2sq.mul(&w1.lambda_r_tilde).scale(3.0 * g.mu1));
    let s_tilde = dr1
        .mul(&comb1)
        .scale(3.0)
        .add(&s_tilde_12)
        .add(&dr2.mul(&comb2).scale(3.0))
        .sub(&s_tilde_21);

    // T
    let t_cal_1 = w1
        .lambda_r_tilde
        .scale(g.mu1)
        .derivative()
        .scale(beta0 * zpow)
        .sub(&p1.derivative().scale(g.mu1));
    let t_cal_2 = w2
        .lambda_r_tilde
        .scale(g.mu2)
        .derivative()
        .scale(delta0 * zpow)
        .sub(&p2.derivative().scale(g.mu2));
    let lam2_sign = if PAPER_SLOT3 { 1.0 } else { -1.0 };
    let dtp = {
        // d/dt(-P1 + P2 + bW) reusing the chain rule
        let f1d = f_slots_dot(gs.alpha, g, dot, true);
        let f2d = f_slots_dot(gs.alpha, g, dot, !ps.swap_back_mu_slots);
        let mut dp1 = SpectralField::zeros(gs.grid().clone());
        let mut dp2 = SpectralField::zeros(gs.grid().clone());
        for j in 0..6 {
            dp1 = dp1.add(&ps.b_basis[j].shift(g.z1).scale(f1d[j]));
            dp2 = dp2.add(&ps.d_basis[j].shift(g.z2).scale(f2d[j]));
        }
        dp1 = dp1.sub(&approx.p[0].derivative().scale(dot.z1_dot));
        dp2 = dp2.sub(&approx.p[1].derivative().scale(dot.z2_dot));
        let zd = dot.z1_dot - dot.z2_dot;
        let bdot = -(gs.alpha + 2.0) * b / z * zd;
        let dw = ps
            .tail
            .w
            .shift(g.z1)
            .scale(dot.z1_dot)
            .sub(&ps.tail.w.shift(g.z2).scale(dot.z2_dot));
        dp1.scale(-1.0)
            .add(&dp2)
            .add(&approx.w_bump.scale(bdot))
            .add(&dw.scale(b))
    };
    let t_field = w1
        .lambda_r_tilde
        .sub(&w1.lambda_r)
        .scale(b)
        .add(&w2.lambda_r_tilde.sub(&w2.lambda_r).scale(lam2_sign * b))
        .add(&w1.dy_r_tilde.sub(&w1.dy_r).scale(beta))
        .sub(&w2.dy_r_tilde.sub(&w2.dy_r).scale(delta))
        .add(&t_cal_1)
        .sub(&t_cal_2)
        .add(&dtp);

    let s_total = s1.add(&s2).add(&s_v3).add(&s_tilde);
    let reconstructed = m_mv.add(&s_total.derivative()).add(&t_field);
    let e_v = approx.residual_direct(ps, dot);

    Ok(ResidualDecomposition {
        m_vec,
        s1,
        s2,
        s_v3,
        s_tilde,
        t_field,
        e_v,
        reconstructed,
        s_total,
    })
}

/// The construction's distinguished Gamma-dot:
/// `mu1' = b, mu2' = -b, z1' = mu1 - beta, z2' = mu2 - delta`
/// (the same closure the reduced ODE integrates).
pub fn construction_gamma_dot(
    ps: &ProfileSet,
    gamma: &ModulationState,
) -> Result<GammaDot, ModelError> {
    let b = ps.b_of_z(gamma.z());
    let beta = ps.beta(gamma)?;
    let delta = ps.delta(gamma)?;
    Ok(GammaDot {
        z1_dot: gamma.mu1 - beta,
        z2_dot: gamma.mu2 - delta,
        mu1_dot: b,
        mu2_dot: -b,
    })
}
