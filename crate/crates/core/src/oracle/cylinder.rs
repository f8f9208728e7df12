use num_complex::Complex64;

use super::bessel::{BesselTable, MAX_ORDER};
use crate::error::{domain, Result};
use crate::geometry::Vec2;
use crate::operator::ComplexJet;
use crate::physics::{incident, PhysicsConfig};

/// Series length used when none is given.
pub const DEFAULT_TERMS: usize = 40;

/// Rigid circular cylinder under the configured plane wave.
#[derive(Clone, Debug)]
pub struct CylinderProblem {
    pub radius: f64,
    pub center: Vec2,
    pub physics: PhysicsConfig,
    pub n_terms: usize,
    /// ε_n (−i)^n a_n, times the incident phase at the center
    coefficients: Vec<Complex64>,
}

impl CylinderProblem {
    pub fn new(radius: f64, center: Vec2, physics: PhysicsConfig, n_terms: usize) -> Result<Self> {
        physics.validate()?;
        if !(radius.is_finite() && radius > 0.0) {
            return domain(format!("cylinder radius must be positive, got {radius}"));
        }
        if !(center.x.is_finite() && center.y.is_finite()) {
            return domain("cylinder center must be finite");
        }
        let ka = physics.wavenumber() * radius;
        let min_terms = ka.ceil() as usize + 10;
        if n_terms < min_terms {
            return domain(format!("{n_terms} series terms is below the required {min_terms} for ka = {ka:.3}"));
        }
        if n_terms + 1 > MAX_ORDER {
            return domain(format!("{n_terms} series terms exceeds the supported {}", MAX_ORDER - 1));
        }

        let table = BesselTable::new(n_terms, ka)?;
        let (p_center, _) = incident(&physics, center);
        let coefficients = (0..=n_terms)
            .map(|n| {
                let dh = Complex64::new(table.dj(n), -table.dy(n));
                let a = -table.dj(n) / dh;
                let eps = if n == 0 { 1.0 } else { 2.0 };
                eps * minus_i_pow(n) * a * p_center
            })
            .collect();
        Ok(Self { radius, center, physics, n_terms, coefficients })
    }

    /// Uses [`DEFAULT_TERMS`] or the minimum admissible length, whichever is larger.
    pub fn with_default_terms(radius: f64, center: Vec2, physics: PhysicsConfig) -> Result<Self> {
        let ka = physics.wavenumber() * radius;
        let n = DEFAULT_TERMS.max(ka.ceil() as usize + 15);
        Self::new(radius, center, physics, n)
    }

    /// Scattered pressure with gradient and Laplacian, the latter assembled
    /// from the radial and angular second derivatives.
    pub fn jet(&self, x: Vec2) -> Result<ComplexJet> {
        let d = x - self.center;
        let r = d.norm();
        if !(r.is_finite() && r >= self.radius * (1.0 - 1e-12)) {
            return domain(format!("point ({}, {}) lies inside the cylinder", x.x, x.y));
        }
        let k = self.physics.wavenumber();
        let e = self.physics.direction;
        let e_perp = Vec2::new(-e.y, e.x);
        let theta = e_perp.dot(d).atan2(e.dot(d));
        let r_hat = d / r;
        let t_hat = Vec2::new(-r_hat.y, r_hat.x);

        let n_terms = self.n_terms;
        let table = BesselTable::new(n_terms + 1, k * r)?;
        let h = |m: i64| -> Complex64 {
            let a = m.unsigned_abs() as usize;
            let v = Complex64::new(table.j[a], -table.y[a]);
            if m < 0 && a % 2 == 1 {
                -v
            } else {
                v
            }
        };

        let (mut p, mut p_r, mut p_t, mut p_rr, mut p_tt) = (Complex64::default(), Complex64::default(), Complex64::default(), Complex64::default(), Complex64::default());
        for (n, c) in self.coefficients.iter().enumerate() {
            let m = n as i64;
            let nf = n as f64;
            let (sin_n, cos_n) = (nf * theta).sin_cos();
            let hn = h(m);
            let dh = 0.5 * (h(m - 1) - h(m + 1));
            let ddh = 0.25 * (h(m - 2) - 2.0 * hn + h(m + 2));
            p += c * hn * cos_n;
            p_r += c * k * dh * cos_n;
            p_t += c * hn * (-nf * sin_n);
            p_rr += c * k * k * ddh * cos_n;
            p_tt += c * hn * (-nf * nf * cos_n);
        }
        let g = [p_r * r_hat.x + p_t / r * t_hat.x, p_r * r_hat.y + p_t / r * t_hat.y];
        let laplacian = p_rr + p_r / r + p_tt / (r * r);
        Ok(ComplexJet { value: p, grad: g, laplacian })
    }
}

fn minus_i_pow(n: usize) -> Complex64 {
    match n % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, -1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, 1.0),
    }
}

/// Scattered pressure and its gradient at `x`.
pub fn cylinder_scatter(prob: &CylinderProblem, x: Vec2) -> Result<(Complex64, [Complex64; 2])> {
    let jet = prob.jet(x)?;
    Ok((jet.value, jet.grad))
}
