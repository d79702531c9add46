//! Adaptive quadrature for the asymptotic-constant integrals.

use crate::error::SolverError;

/// Adaptive Simpson on [a, b] to absolute tolerance `tol`.
pub fn adaptive_simpson(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<f64, SolverError> {
    fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: usize,
    ) -> Result<f64, SolverError> {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(a, m, fa, flm, fm);
        let right = simpson(m, b, fm, frm, fb);
        let err = left + right - whole;
        // relative floor keeps weakly singular integrands from grinding to
        // unattainable absolute tolerances
        let floor = 1e-16 * (left.abs() + right.abs());
        if err.abs() <= (15.0 * tol).max(floor) {
            return Ok(left + right + err / 15.0);
        }
        if depth == 0 {
            return Err(SolverError::Quadrature(err.abs()));
        }
        // keep the tolerance down the recursion (Lyness): halving it loses
        // against endpoint singularities with weakly divergent derivatives
        let l = recurse(f, a, m, fa, flm, fm, left, tol, depth - 1)?;
        let r = recurse(f, m, b, fm, frm, fb, right, tol, depth - 1)?;
        Ok(l + r)
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson(a, b, fa, fm, fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, 60)
}

/// `int_0^inf r^p exp(-r^{1/alpha}) dr` by adaptive quadrature. The
/// substitution `r = v^{8 alpha}` regularises the singular derivative of the
/// stretched exponential at the origin and compresses the tail, so plain
/// Simpson converges quickly.
pub fn stretched_exponential_moment(alpha: f64, p: f64, tol: f64) -> Result<f64, SolverError> {
    let m = 8.0 * alpha;
    // v^8 = r^{1/alpha}; e^{-v^8} < 1e-18 once v^8 > 42
    let vmax = 42.0f64.powf(1.0 / 8.0) * 1.05;
    adaptive_simpson(
        &|v: f64| {
            if v <= 0.0 {
                return 0.0;
            }
            m * v.powf(m * (p + 1.0) - 1.0) * (-v.powi(8)).exp()
        },
        0.0,
        vmax,
        tol,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_matches_closed_forms() {
        let v = adaptive_simpson(&|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-12).unwrap();
        assert!((v - 2.0).abs() < 1e-11);
    }

    #[test]
    fn gamma_identity_for_stretched_exponential() {
        // int_0^inf exp(-r^{1/alpha}) dr = Gamma(alpha + 1)
        // int_0^inf r exp(-r^{1/alpha}) dr = Gamma(2 alpha + 1) / 2
        for alpha in [1.25, 1.5, 1.75, 2.0] {
            let v = stretched_exponential_moment(alpha, 0.0, 1e-13).unwrap();
            let g = statrs::function::gamma::gamma(alpha + 1.0);
            assert!((v - g).abs() < 1e-10 * g, "alpha={alpha}: {v} vs {g}");
            let v1 = stretched_exponential_moment(alpha, 1.0, 1e-13).unwrap();
            let g1 = statrs::function::gamma::gamma(2.0 * alpha + 1.0) / 2.0;
            assert!((v1 - g1).abs() < 1e-10 * g1, "alpha={alpha}: {v1} vs {g1}");
        }
    }
}
