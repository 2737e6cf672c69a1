//! The standing-wave layer profile `U0'' + f(U0) = 0`, `U0(-inf) = a-`,
//! `U0(0) = a`, `U0(+inf) = a+`.
//!
//! The profile is built from the first integral `(U0')^2 / 2 = W(U0) - W(a-)`:
//! the inverse map `z(u) = int_a^u ds / sqrt(2 (W(s) - W(a-)))` is tabulated
//! in the log-distance variable `sigma = -ln |a± - u|`, where the integrand is
//! smooth up to the wells, and each sample `U0(z_j)` is then polished by
//! Newton iteration on that quadrature.

use thiserror::Error;

use crate::nonlinearity::{BistableNonlinearity, Zeros};
use crate::quad::integrate_gl16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("z_max must be at least 5, got {0}")]
    DomainTooShort(f64),
    #[error("need at least 100 samples, got {0}")]
    TooFewSamples(usize),
    #[error("W(s) - W(a-) = {value:e} <= 0 at s = {s}: not a double well")]
    NotDoubleWell { s: f64, value: f64 },
    #[error("tabulated profile is not strictly increasing at sample {0}")]
    NotMonotone(usize),
}

/// Tabulated profile on a uniform grid of `[-z_max, z_max]`.
#[derive(Debug, Clone)]
pub struct LayerProfile {
    z_max: f64,
    dz: f64,
    u: Vec<f64>,
    /// Hermite slopes (first-integral slopes after the Fritsch-Carlson limiter).
    m: Vec<f64>,
    limits: (f64, f64),
    anchor: f64,
    nl: BistableNonlinearity,
}

const SIGMA_STEP: f64 = 0.05;

/// One side of the inverse map, parametrised by `sigma = -ln w` where `w` is
/// the distance of `u` to the well.
struct SideTable<'a> {
    nl: &'a BistableNonlinearity,
    well: f64,
    /// +1 for the `a+` side (z increases with sigma), -1 for `a-`.
    dir: f64,
    sigma: Vec<f64>,
    z: Vec<f64>,
}

impl<'a> SideTable<'a> {
    fn new(
        nl: &'a BistableNonlinearity,
        well: f64,
        dir: f64,
        z_reach: f64,
    ) -> Result<Self, ProfileError> {
        let a = nl.zeros().mid;
        let sigma0 = -(well - a).abs().ln();
        let mut table = SideTable {
            nl,
            well,
            dir,
            sigma: vec![sigma0],
            z: vec![0.0],
        };
        while table.z.last().unwrap().abs() <= z_reach {
            let s0 = *table.sigma.last().unwrap();
            let s1 = s0 + SIGMA_STEP;
            if s1 > 700.0 {
                break;
            }
            // probe the right end; the left end was checked in the last round
            table.integrand(s1)?;
            let dz = table.segment(s0, s1)?;
            let z_next = table.z.last().unwrap() + dz;
            table.sigma.push(s1);
            table.z.push(z_next);
        }
        Ok(table)
    }

    fn u_of(&self, sigma: f64) -> f64 {
        self.well - self.dir * (-sigma).exp()
    }

    /// `dz/dsigma = ±w / sqrt(2 (W(u) - W(a-)))`, NaN where the gap is not
    /// positive.
    fn raw(&self, sigma: f64) -> f64 {
        let gap = self.nl.well_gap(self.u_of(sigma));
        if gap > 0.0 {
            self.dir * (-sigma).exp() / (2.0 * gap).sqrt()
        } else {
            f64::NAN
        }
    }

    fn integrand(&self, sigma: f64) -> Result<f64, ProfileError> {
        let v = self.raw(sigma);
        if v.is_nan() {
            let u = self.u_of(sigma);
            return Err(ProfileError::NotDoubleWell {
                s: u,
                value: self.nl.well_gap(u),
            });
        }
        Ok(v)
    }

    fn segment(&self, s0: f64, s1: f64) -> Result<f64, ProfileError> {
        let v = integrate_gl16(s0, s1, |s| self.raw(s));
        if v.is_nan() {
            let (x, _) = crate::quad::gl16();
            for xi in x {
                self.integrand(0.5 * (s0 + s1) + 0.5 * (s1 - s0) * xi)?;
            }
        }
        Ok(v)
    }

    /// Solves `z(sigma) = target` and returns `u`.
    fn invert(&self, target: f64) -> Result<f64, ProfileError> {
        let k = match self.z.iter().position(|&z| z.abs() > target.abs()) {
            Some(0) => 0,
            Some(k) => k - 1,
            None => self.z.len() - 2,
        };
        let (s0, z0) = (self.sigma[k], self.z[k]);
        let (s1, z1) = (self.sigma[k + 1], self.z[k + 1]);
        let mut s = s0 + (target - z0) / (z1 - z0) * (s1 - s0);
        for _ in 0..50 {
            let f = z0 + self.segment(s0, s)? - target;
            let ds = f / self.integrand(s)?;
            s -= ds;
            if ds.abs() <= 1e-15 * s.abs().max(1.0) {
                break;
            }
        }
        Ok(self.u_of(s))
    }
}

/// Tabulates `U0` on `n` uniform samples of `[-z_max, z_max]`.
pub fn solve_profile(
    nl: &BistableNonlinearity,
    z_max: f64,
    n: usize,
) -> Result<LayerProfile, ProfileError> {
    if !(z_max >= 5.0) {
        return Err(ProfileError::DomainTooShort(z_max));
    }
    if n < 100 {
        return Err(ProfileError::TooFewSamples(n));
    }
    let Zeros { minus, mid, plus } = nl.zeros();
    let gap_mid = nl.well_gap(mid);
    if !(gap_mid > 0.0) {
        return Err(ProfileError::NotDoubleWell {
            s: mid,
            value: gap_mid,
        });
    }
    let upper = SideTable::new(nl, plus, 1.0, z_max)?;
    let lower = SideTable::new(nl, minus, -1.0, z_max)?;

    let dz = 2.0 * z_max / (n - 1) as f64;
    let mut u = Vec::with_capacity(n);
    for j in 0..n {
        let z = -z_max + dz * j as f64;
        let value = if z > 0.0 {
            upper.invert(z)?
        } else if z < 0.0 {
            lower.invert(z)?
        } else {
            mid
        };
        u.push(value);
    }
    for j in 1..n {
        if !(u[j] > u[j - 1]) {
            return Err(ProfileError::NotMonotone(j));
        }
    }
    let mut m: Vec<f64> = u
        .iter()
        .map(|&x| (2.0 * nl.well_gap(x).max(0.0)).sqrt())
        .collect();
    fritsch_carlson(&u, dz, &mut m);
    Ok(LayerProfile {
        z_max,
        dz,
        u,
        m,
        limits: (minus, plus),
        anchor: mid,
        nl: nl.clone(),
    })
}

/// Shrinks Hermite slopes where needed so the interpolant stays monotone.
fn fritsch_carlson(u: &[f64], dz: f64, m: &mut [f64]) {
    for k in 0..u.len() - 1 {
        let delta = (u[k + 1] - u[k]) / dz;
        let a = m[k] / delta;
        let b = m[k + 1] / delta;
        let r2 = a * a + b * b;
        if r2 > 9.0 {
            let tau = 3.0 / r2.sqrt();
            m[k] = tau * a * delta;
            m[k + 1] = tau * b * delta;
        }
    }
}

impl LayerProfile {
    pub fn z_max(&self) -> f64 {
        self.z_max
    }

    pub fn limits(&self) -> (f64, f64) {
        self.limits
    }

    /// The value `a` at `z = 0`.
    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    pub fn nonlinearity(&self) -> &BistableNonlinearity {
        &self.nl
    }

    pub fn z_samples(&self) -> Vec<f64> {
        (0..self.u.len())
            .map(|j| -self.z_max + self.dz * j as f64)
            .collect()
    }

    pub fn u_samples(&self) -> &[f64] {
        &self.u
    }

    /// Monotone cubic Hermite interpolation inside `[-z_max, z_max]`, clamped
    /// to the wells outside.
    #[inline]
    pub fn evaluate(&self, z: f64) -> f64 {
        if z >= self.z_max {
            return if z > self.z_max {
                self.limits.1
            } else {
                *self.u.last().unwrap()
            };
        }
        if z <= -self.z_max {
            return if z < -self.z_max {
                self.limits.0
            } else {
                self.u[0]
            };
        }
        let pos = (z + self.z_max) / self.dz;
        let k = (pos as usize).min(self.u.len() - 2);
        let t = pos - k as f64;
        let (u0, u1) = (self.u[k], self.u[k + 1]);
        let (m0, m1) = (self.m[k] * self.dz, self.m[k + 1] * self.dz);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * u0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * u1
            + (t3 - t2) * m1
    }
}

/// `U0'(z) = sqrt(2 (W(U0(z)) - W(a-)))`.
pub fn profile_slope(p: &LayerProfile, z: f64) -> f64 {
    (2.0 * p.nl.well_gap(p.evaluate(z)).max(0.0)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::{make_cubic, mobility_constant};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn exact(z: f64) -> f64 {
        (z / std::f64::consts::SQRT_2).tanh()
    }

    fn cubic_profile() -> &'static LayerProfile {
        static P: std::sync::OnceLock<LayerProfile> = std::sync::OnceLock::new();
        P.get_or_init(|| solve_profile(&make_cubic(), 12.0, 4000).unwrap())
    }

    #[test]
    fn anchored_and_matches_closed_form() {
        let p = cubic_profile();
        assert!(p.evaluate(0.0).abs() < 1e-10);
        assert_relative_eq!(p.evaluate(1.0), 0.608_859_365, epsilon = 1e-8);
        assert_relative_eq!(p.evaluate(1.0), exact(1.0), epsilon = 1e-10);
    }

    #[test]
    fn odd_symmetry() {
        let p = cubic_profile();
        for z in p.z_samples() {
            assert!((p.evaluate(-z) + p.evaluate(z)).abs() < 1e-12, "z = {z}");
        }
    }

    #[test]
    fn clamps_far_tails() {
        let p = cubic_profile();
        assert_eq!(p.evaluate(1e6), 1.0);
        assert_eq!(p.evaluate(-1e6), -1.0);
    }

    #[test]
    fn midpoints_within_1e8_of_tanh() {
        let p = cubic_profile();
        let z = p.z_samples();
        for w in z.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            assert!((p.evaluate(mid) - exact(mid)).abs() < 1e-8, "z = {mid}");
        }
    }

    #[test]
    fn slopes() {
        let p = cubic_profile();
        assert_relative_eq!(
            profile_slope(p, 0.0),
            std::f64::consts::FRAC_1_SQRT_2,
            epsilon = 1e-10
        );
        assert!(profile_slope(p, p.z_max()) <= 2e-6);
    }

    #[test]
    fn samples_within_wells_and_tails_reached() {
        let p = cubic_profile();
        let u = p.u_samples();
        assert!(u.iter().all(|&x| x > -1.0 && x < 1.0));
        assert!(u.windows(2).all(|w| w[1] > w[0]));
        assert!(u[u.len() - 1] >= 1.0 - 1e-6);
        assert!(u[0] <= -1.0 + 1e-6);
    }

    #[test]
    fn ode_residual_small() {
        let p = solve_profile(&make_cubic(), 10.0, 4000).unwrap();
        let nl = make_cubic();
        let u = p.u_samples();
        let dz = 20.0 / 3999.0;
        let worst = (1..u.len() - 1)
            .map(|j| ((u[j + 1] - 2.0 * u[j] + u[j - 1]) / (dz * dz) + nl.evaluate(u[j])).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-5, "residual {worst}");
    }

    #[test]
    fn first_integral_and_finite_difference_slope() {
        let p = cubic_profile();
        let nl = make_cubic();
        for (z, &u) in p.z_samples().iter().zip(p.u_samples()) {
            let s = profile_slope(p, *z);
            assert!((0.5 * s * s - nl.well_gap(u)).abs() < 1e-10);
        }
        for z in [-3.3, -0.7, 0.2, 1.9, 5.1] {
            let fd = (p.evaluate(z + 1e-5) - p.evaluate(z - 1e-5)) / 2e-5;
            assert!((fd - profile_slope(p, z)).abs() < 1e-7);
        }
    }

    #[test]
    fn surface_tension_is_inverse_mobility() {
        // int (U0')^2 dz over the table by the trapezoid rule
        let p = cubic_profile();
        let z = p.z_samples();
        let dz = z[1] - z[0];
        let s: Vec<f64> = z.iter().map(|&zz| profile_slope(p, zz).powi(2)).collect();
        let integral = dz * (s.iter().sum::<f64>() - 0.5 * (s[0] + s[s.len() - 1]));
        let c0 = mobility_constant(&make_cubic(), 512).unwrap();
        assert_relative_eq!(integral, 1.0 / c0, max_relative = 1e-8);
    }

    #[test]
    fn refinement_stable() {
        let a = solve_profile(&make_cubic(), 10.0, 2000).unwrap();
        let b = solve_profile(&make_cubic(), 10.0, 4000).unwrap();
        for k in 0..100 {
            let z = -9.5 + 19.0 * (k as f64 * 0.618_034).fract();
            assert!((a.evaluate(z) - b.evaluate(z)).abs() < 1e-8, "z = {z}");
        }
    }

    #[test]
    fn rejects_bad_input() {
        let nl = make_cubic();
        assert!(matches!(
            solve_profile(&nl, 4.0, 1000),
            Err(ProfileError::DomainTooShort(_))
        ));
        assert!(matches!(
            solve_profile(&nl, 10.0, 50),
            Err(ProfileError::TooFewSamples(50))
        ));
        let unbalanced = BistableNonlinearity::from_zeros(1.0, (-1.0, -0.2, 1.0)).unwrap();
        assert!(matches!(
            solve_profile(&unbalanced, 10.0, 400),
            Err(ProfileError::NotDoubleWell { .. })
        ));
    }

    #[test]
    fn asymmetric_zeros_anchor_and_limits() {
        // a balanced cubic with wells at 0 and 2 and middle zero 1: a shifted u - u^3
        let nl = BistableNonlinearity::from_zeros(1.0, (0.0, 1.0, 2.0)).unwrap();
        let p = solve_profile(&nl, 12.0, 1000).unwrap();
        assert!((p.evaluate(0.0) - 1.0).abs() < 1e-10);
        assert_relative_eq!(p.evaluate(1.3), 1.0 + exact(1.3), epsilon = 1e-8);
    }

    proptest! {
        #[test]
        fn slope_nonnegative(z in -12.0f64..12.0) {
            let p = cubic_profile();
            prop_assert!(profile_slope(p, z) >= 0.0);
        }
    }
}
