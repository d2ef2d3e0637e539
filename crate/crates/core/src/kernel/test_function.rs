//! Smooth compactly supported test functions `G(t, u) = q(t) φ(u)`.
//!
//! The spatial profile is the standard bump `exp(-1/(1-s^2))` rescaled to a
//! given center and width (identically zero outside `|u - center| < width`),
//! and the time factor `q` is a polynomial.  All derivatives used elsewhere
//! (`∂_t G`, `∂_u^2 G`) have closed forms.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct TestFunction {
    center: f64,
    width: f64,
    /// Coefficients of the polynomial time factor, `q(t) = Σ_j c_j t^j`.
    time_coeffs: Vec<f64>,
    /// `sup |φ''|`, cached at construction (used by envelope bounds).
    dxx_sup: f64,
}

impl TestFunction {
    /// Time-independent bump centered at the origin or shifted.
    pub fn bump(center: f64, width: f64) -> Result<Self> {
        Self::polynomial_time_bump(center, width, vec![1.0])
    }

    /// Bump with a polynomial time factor `q(t) = Σ_j coeffs[j] t^j`.
    pub fn polynomial_time_bump(center: f64, width: f64, coeffs: Vec<f64>) -> Result<Self> {
        if !(width > 0.0) || !width.is_finite() || !center.is_finite() {
            return Err(Error::Parameter(format!(
                "bump requires finite center and width > 0, got ({center}, {width})"
            )));
        }
        if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Parameter("time coefficients must be finite and nonempty".into()));
        }
        let mut f = Self {
            center,
            width,
            time_coeffs: coeffs,
            dxx_sup: 0.0,
        };
        f.dxx_sup = f.scan_dxx_sup();
        Ok(f)
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn time_coeffs(&self) -> &[f64] {
        &self.time_coeffs
    }

    /// Support radius `b_G = |center| + width`: the spatial profile vanishes
    /// outside `[-b_G, b_G]` for every time.
    pub fn support_radius(&self) -> f64 {
        self.center.abs() + self.width
    }

    /// Spatial profile `φ(u)`.
    pub fn profile(&self, u: f64) -> f64 {
        let s = (u - self.center) / self.width;
        if s.abs() >= 1.0 {
            0.0
        } else {
            (-1.0 / (1.0 - s * s)).exp()
        }
    }

    /// Second spatial derivative `φ''(u)` (closed form).
    pub fn profile_dxx(&self, u: f64) -> f64 {
        let s = (u - self.center) / self.width;
        if s.abs() >= 1.0 {
            return 0.0;
        }
        let r = 1.0 - s * s;
        let psi = (-1.0 / r).exp();
        let d2 = psi * (4.0 * s * s / r.powi(4) - 2.0 / r.powi(2) - 8.0 * s * s / r.powi(3));
        d2 / (self.width * self.width)
    }

    /// `sup_u |φ(u)| = e^{-1}` (attained at the center).
    pub fn profile_sup(&self) -> f64 {
        (-1.0_f64).exp()
    }

    /// `sup_u |φ''(u)|`, cached from a dense scan at construction.
    pub fn profile_dxx_sup(&self) -> f64 {
        self.dxx_sup
    }

    fn scan_dxx_sup(&self) -> f64 {
        let n = 1 << 20;
        let mut best = 0.0_f64;
        for i in 0..=n {
            let s = -1.0 + 2.0 * i as f64 / n as f64;
            let u = self.center + s * self.width;
            best = best.max(self.profile_dxx(u).abs());
        }
        best
    }

    /// Time factor `q(s)`.
    pub fn time_factor(&self, s: f64) -> f64 {
        let mut v = 0.0;
        for &c in self.time_coeffs.iter().rev() {
            v = v * s + c;
        }
        v
    }

    /// `q'(s)`.
    pub fn time_factor_dt(&self, s: f64) -> f64 {
        let mut v = 0.0;
        for (j, &c) in self.time_coeffs.iter().enumerate().skip(1).rev() {
            v = v * s + j as f64 * c;
        }
        v
    }

    /// Antiderivative `Q(s) = ∫_0^s q(r) dr` (exact).
    pub fn time_factor_integral(&self, s: f64) -> f64 {
        let mut v = 0.0;
        for (j, &c) in self.time_coeffs.iter().enumerate().rev() {
            v = v * s + c / (j + 1) as f64;
        }
        v * s
    }

    /// `G(s, u) = q(s) φ(u)`.
    pub fn eval(&self, s: f64, u: f64) -> f64 {
        self.time_factor(s) * self.profile(u)
    }

    /// `∂_s G(s, u) = q'(s) φ(u)`.
    pub fn eval_dt(&self, s: f64, u: f64) -> f64 {
        self.time_factor_dt(s) * self.profile(u)
    }

    /// `sup_{0 <= s <= horizon} |q(s)|` on a uniform grid of at least 64
    /// points (resolution lower bound; the factor is a low-degree
    /// polynomial, so this is ample).
    pub fn sup_time_abs(&self, horizon: f64, points: usize) -> f64 {
        let n = points.max(64);
        let mut best = 0.0_f64;
        for i in 0..=n {
            let s = horizon * i as f64 / n as f64;
            best = best.max(self.time_factor(s).abs());
        }
        best
    }
}
