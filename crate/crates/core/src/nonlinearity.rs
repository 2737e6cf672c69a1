//! Bistable reaction terms, the double-well potential, the perturbation
//! hooks of the two diffuse-interface problems, and the mobility constant.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::geom::Point;
use crate::quad;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NonlinearityError {
    #[error("zeros must be strictly ordered, got ({0}, {1}, {2})")]
    UnorderedZeros(f64, f64, f64),
    #[error("W(s) - W(a-) = {value:e} < 0 at s = {s}: potential is not a balanced double well")]
    NegativeWellGap { s: f64, value: f64 },
    #[error("quadrature needs at least 16 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("scale factor must be positive, got {0}")]
    BadScale(f64),
    #[error("no invariant rectangle: {0}")]
    NoInvariantRectangle(String),
    #[error("forcing violates its bound: {0}")]
    ForcingBound(String),
}

/// The three zeros `a- < a < a+` of a bistable nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Zeros {
    pub minus: f64,
    pub mid: f64,
    pub plus: f64,
}

/// A cubic bistable reaction term `f(u) = c0 + c1 u + c2 u^2 + c3 u^3`
/// together with its declared zeros.
///
/// The zeros are stored rather than root-found so that every use site sees
/// exactly the same values; `check_admissible` verifies that they really are
/// zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct BistableNonlinearity {
    coeffs: [f64; 4],
    zeros: Zeros,
}

/// The canonical balanced cubic `f(u) = u - u^3` with zeros `(-1, 0, 1)`.
pub fn make_cubic() -> BistableNonlinearity {
    BistableNonlinearity {
        coeffs: [0.0, 1.0, 0.0, -1.0],
        zeros: Zeros {
            minus: -1.0,
            mid: 0.0,
            plus: 1.0,
        },
    }
}

impl BistableNonlinearity {
    pub fn from_coefficients(
        coeffs: [f64; 4],
        zeros: (f64, f64, f64),
    ) -> Result<Self, NonlinearityError> {
        let (m, a, p) = zeros;
        if !(m < a && a < p) {
            return Err(NonlinearityError::UnorderedZeros(m, a, p));
        }
        Ok(BistableNonlinearity {
            coeffs,
            zeros: Zeros {
                minus: m,
                mid: a,
                plus: p,
            },
        })
    }

    /// `-lambda (u - a-)(u - a)(u - a+)`.
    pub fn from_zeros(lambda: f64, zeros: (f64, f64, f64)) -> Result<Self, NonlinearityError> {
        let (m, a, p) = zeros;
        let coeffs = [
            lambda * m * a * p,
            -lambda * (m * a + m * p + a * p),
            lambda * (m + a + p),
            -lambda,
        ];
        Self::from_coefficients(coeffs, zeros)
    }

    /// `lambda * f` with the same zeros.
    pub fn scaled(&self, lambda: f64) -> Result<Self, NonlinearityError> {
        if !(lambda > 0.0) {
            return Err(NonlinearityError::BadScale(lambda));
        }
        let mut out = self.clone();
        for c in &mut out.coeffs {
            *c *= lambda;
        }
        Ok(out)
    }

    pub fn coefficients(&self) -> [f64; 4] {
        self.coeffs
    }

    pub fn zeros(&self) -> Zeros {
        self.zeros
    }

    #[inline]
    pub fn evaluate(&self, u: f64) -> f64 {
        let [c0, c1, c2, c3] = self.coeffs;
        c0 + u * (c1 + u * (c2 + u * c3))
    }

    #[inline]
    pub fn derivative(&self, u: f64) -> f64 {
        let [_, c1, c2, c3] = self.coeffs;
        c1 + u * (2.0 * c2 + u * 3.0 * c3)
    }

    /// `int_0^x f(c + y) dy`, expanded around `c` so that it keeps full
    /// relative accuracy for small `x`.
    fn shifted_integral(&self, c: f64, x: f64) -> f64 {
        let [_, _, c2, c3] = self.coeffs;
        let b0 = self.evaluate(c);
        let b1 = self.derivative(c);
        let b2 = c2 + 3.0 * c3 * c;
        let b3 = c3;
        x * (b0 + x * (b1 / 2.0 + x * (b2 / 3.0 + x * b3 / 4.0)))
    }

    /// `W(s) = -int_a^s f(r) dr`.
    pub fn potential(&self, s: f64) -> f64 {
        -self.shifted_integral(self.zeros.mid, s - self.zeros.mid)
    }

    /// `int_{a-}^{a+} f(u) du`; zero for a balanced nonlinearity.
    pub fn balance_integral(&self) -> f64 {
        let Zeros { minus, plus, .. } = self.zeros;
        self.shifted_integral(minus, plus - minus)
    }

    /// `W(s) - W(a-)`, evaluated by expanding around the nearer stable zero so
    /// the tails keep relative precision.
    pub fn well_gap(&self, s: f64) -> f64 {
        let Zeros { minus, plus, .. } = self.zeros;
        if s <= 0.5 * (minus + plus) {
            -self.shifted_integral(minus, s - minus)
        } else {
            -self.balance_integral() - self.shifted_integral(plus, s - plus)
        }
    }

    /// `max |f'|` over `[a-, a+]`.
    pub fn max_abs_derivative(&self) -> f64 {
        let Zeros { minus, plus, .. } = self.zeros;
        let [_, _, c2, c3] = self.coeffs;
        let mut m = self
            .derivative(minus)
            .abs()
            .max(self.derivative(plus).abs());
        if c3 != 0.0 {
            let vertex = -c2 / (3.0 * c3);
            if vertex > minus && vertex < plus {
                m = m.max(self.derivative(vertex).abs());
            }
        }
        m
    }

    /// `int_{a-}^{a+} g(r) dr` by composite Gauss-Legendre.
    pub fn integrate_over_wells(&self, g: impl Fn(f64) -> f64) -> f64 {
        quad::integrate_composite(self.zeros.minus, self.zeros.plus, 32, g)
    }
}

impl fmt::Display for BistableNonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [c0, c1, c2, c3] = self.coeffs;
        write!(
            f,
            "f(u) = {c0} + {c1} u + {c2} u^2 + {c3} u^3, zeros ({}, {}, {})",
            self.zeros.minus, self.zeros.mid, self.zeros.plus
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityCheck {
    pub name: &'static str,
    pub residual: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityReport {
    pub checks: Vec<AdmissibilityCheck>,
}

impl AdmissibilityReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &AdmissibilityCheck> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

/// Checks the zeros, the sign pattern of `f'` and the balance condition.
///
/// Sign checks report the offending derivative value as residual (zero when
/// the sign is right); zero and balance checks report absolute values.
pub fn check_admissible(nl: &BistableNonlinearity, tol: f64) -> AdmissibilityReport {
    assert!(tol > 0.0, "tolerance must be positive");
    let Zeros { minus, mid, plus } = nl.zeros;
    let mut checks = Vec::new();
    let mut abs_check = |name, r: f64| {
        checks.push(AdmissibilityCheck {
            name,
            residual: r,
            pass: r.is_finite() && r <= tol,
        });
    };
    abs_check("f(a-) = 0", nl.evaluate(minus).abs());
    abs_check("f(a) = 0", nl.evaluate(mid).abs());
    abs_check("f(a+) = 0", nl.evaluate(plus).abs());
    abs_check("balance", nl.balance_integral().abs());
    abs_check(
        "W(a-) = W(a+)",
        (nl.potential(minus) - nl.potential(plus)).abs(),
    );
    let mut sign_check = |name, value: f64, want_positive: bool| {
        let ok = if want_positive {
            value > 0.0
        } else {
            value < 0.0
        };
        checks.push(AdmissibilityCheck {
            name,
            residual: if ok { 0.0 } else { value },
            pass: ok,
        });
    };
    sign_check("f'(a-) < 0", nl.derivative(minus), false);
    sign_check("f'(a) > 0", nl.derivative(mid), true);
    sign_check("f'(a+) < 0", nl.derivative(plus), false);
    AdmissibilityReport { checks }
}

/// `c0 = [sqrt(2) int_{a-}^{a+} (W(s) - W(a-))^{1/2} ds]^{-1}`.
///
/// Integrated in `phi` with `s = a- + (a+ - a-) sin^2(phi)`, which clusters
/// nodes at both wells.
pub fn mobility_constant(
    nl: &BistableNonlinearity,
    n_quad: usize,
) -> Result<f64, NonlinearityError> {
    if n_quad < 16 {
        return Err(NonlinearityError::TooFewNodes(n_quad));
    }
    scan_well_gap(nl, n_quad)?;
    let Zeros { minus, plus, .. } = nl.zeros;
    let width = plus - minus;
    let integral = quad::integrate_composite(0.0, std::f64::consts::FRAC_PI_2, n_quad, |phi| {
        let (sp, cp) = phi.sin_cos();
        let s = minus + width * sp * sp;
        nl.well_gap(s).max(0.0).sqrt() * 2.0 * width * sp * cp
    });
    if !(integral > 0.0) {
        return Err(NonlinearityError::NegativeWellGap {
            s: minus,
            value: integral,
        });
    }
    Ok(1.0 / (std::f64::consts::SQRT_2 * integral))
}

/// Samples `W - W(a-)` on the quadrature's `s` nodes and rejects a negative
/// gap anywhere strictly between the wells.
fn scan_well_gap(nl: &BistableNonlinearity, n: usize) -> Result<(), NonlinearityError> {
    let Zeros { minus, plus, .. } = nl.zeros;
    let scale = nl
        .well_gap(0.5 * (minus + plus))
        .abs()
        .max(f64::MIN_POSITIVE);
    let tol = 1e-12 * scale;
    for k in 1..n {
        let phi = std::f64::consts::FRAC_PI_2 * k as f64 / n as f64;
        let s = minus + (plus - minus) * phi.sin().powi(2);
        let gap = nl.well_gap(s);
        if gap < -tol {
            return Err(NonlinearityError::NegativeWellGap { s, value: gap });
        }
    }
    Ok(())
}

type ForcingFn = Arc<dyn Fn(Point, f64, f64) -> f64 + Send + Sync>;

/// User-supplied `g^eps` / `g` pair.
#[derive(Clone)]
pub struct CustomForcing {
    pub eps_fn: ForcingFn,
    pub limit_fn: ForcingFn,
    pub bound: f64,
    pub radially_symmetric: bool,
}

/// The perturbation `g^eps(x, t, u)` of the Allen-Cahn problem and its limit
/// `g(x, t, u)`.
#[derive(Clone, Default)]
pub enum Forcing {
    #[default]
    Zero,
    /// `g = delta`.
    Constant {
        delta: f64,
    },
    /// `g = delta * x_1`.
    LinearX {
        delta: f64,
    },
    Custom(CustomForcing),
}

impl fmt::Debug for Forcing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Forcing::Zero => write!(f, "Zero"),
            Forcing::Constant { delta } => write!(f, "Constant({delta})"),
            Forcing::LinearX { delta } => write!(f, "LinearX({delta})"),
            Forcing::Custom(c) => write!(f, "Custom(bound = {})", c.bound),
        }
    }
}

impl Forcing {
    #[inline]
    pub fn evaluate(&self, x: Point, t: f64, u: f64) -> f64 {
        match self {
            Forcing::Zero => 0.0,
            Forcing::Constant { delta } => *delta,
            Forcing::LinearX { delta } => delta * x.x,
            Forcing::Custom(c) => (c.eps_fn)(x, t, u),
        }
    }

    pub fn limit_evaluate(&self, x: Point, t: f64, u: f64) -> f64 {
        match self {
            Forcing::Custom(c) => (c.limit_fn)(x, t, u),
            _ => self.evaluate(x, t, u),
        }
    }

    /// The uniform constant `C`. The built-ins have `g^eps = g`, so any `C`
    /// works for the approximation bound; `|delta|` also bounds `g_u`.
    pub fn bound(&self) -> f64 {
        match self {
            Forcing::Zero => 0.0,
            Forcing::Constant { delta } | Forcing::LinearX { delta } => delta.abs(),
            Forcing::Custom(c) => c.bound,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Forcing::Zero)
    }

    pub fn is_radially_symmetric(&self) -> bool {
        match self {
            Forcing::Zero | Forcing::Constant { .. } => true,
            Forcing::LinearX { .. } => false,
            Forcing::Custom(c) => c.radially_symmetric,
        }
    }

    /// `int_{a-}^{a+} g(x, t, r) dr`.
    pub fn well_integral(&self, nl: &BistableNonlinearity, x: Point, t: f64) -> f64 {
        let Zeros { minus, plus, .. } = nl.zeros();
        match self {
            Forcing::Zero => 0.0,
            Forcing::Constant { delta } => delta * (plus - minus),
            Forcing::LinearX { delta } => delta * x.x * (plus - minus),
            Forcing::Custom(_) => nl.integrate_over_wells(|r| self.limit_evaluate(x, t, r)),
        }
    }

    /// Samples `|g^eps - g| <= C eps` and `|d g^eps / du| <= C` on a 10x10
    /// spatial lattice over `domain`, 5 times in `[0, t_max]` and 5 values of
    /// `u` in `u_range`.
    pub fn check_bounds(
        &self,
        eps: f64,
        domain: (Point, Point),
        t_max: f64,
        u_range: (f64, f64),
    ) -> Result<(), NonlinearityError> {
        let c = self.bound();
        let (lo, hi) = domain;
        for i in 0..10 {
            for j in 0..10 {
                let x = Point::new(
                    lo.x + (hi.x - lo.x) * i as f64 / 9.0,
                    lo.y + (hi.y - lo.y) * j as f64 / 9.0,
                );
                for k in 0..5 {
                    let t = t_max * k as f64 / 4.0;
                    for l in 0..5 {
                        let u = u_range.0 + (u_range.1 - u_range.0) * l as f64 / 4.0;
                        let gap = (self.evaluate(x, t, u) - self.limit_evaluate(x, t, u)).abs();
                        if gap > c * eps * (1.0 + 1e-12) {
                            return Err(NonlinearityError::ForcingBound(format!(
                                "|g^eps - g| = {gap:e} > C eps = {:e} at x = ({}, {}), t = {t}, u = {u}",
                                c * eps,
                                x.x,
                                x.y
                            )));
                        }
                        let du = 1e-6;
                        let gu = (self.evaluate(x, t, u + du) - self.evaluate(x, t, u - du))
                            / (2.0 * du);
                        if gu.abs() > c * (1.0 + 1e-6) + 1e-9 {
                            return Err(NonlinearityError::ForcingBound(format!(
                                "|g_u| = {:e} > C = {c:e} at u = {u}",
                                gu.abs()
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Constants of the FitzHugh-Nagumo special case.
#[derive(Debug, Clone, PartialEq)]
pub struct FhnConstants {
    pub alpha: f64,
    pub beta: f64,
    /// Coefficients of the polynomial `f_1(u)` in increasing degree.
    pub f1_poly: Vec<f64>,
}

impl FhnConstants {
    #[inline]
    pub fn f1_scalar(&self, u: f64) -> f64 {
        self.f1_poly.iter().rev().fold(0.0, |acc, c| acc * u + c)
    }
}

type PairFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum CouplingKind {
    Fhn(FhnConstants),
    Custom { f1: PairFn, f2: PairFn, h: PairFn },
}

/// Coupling terms of the reaction-diffusion system:
/// `u_t = Lap u + (f + eps f1(u,v) + eps^2 f2(u,v)) / eps^2`,
/// `v_t = D Lap v + h(u, v)`.
#[derive(Clone)]
pub struct SystemCoupling {
    kind: CouplingKind,
    diffusion: f64,
}

impl fmt::Debug for SystemCoupling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            CouplingKind::Fhn(c) => write!(f, "SystemCoupling::Fhn({c:?}, D = {})", self.diffusion),
            CouplingKind::Custom { .. } => {
                write!(f, "SystemCoupling::Custom(D = {})", self.diffusion)
            }
        }
    }
}

impl SystemCoupling {
    /// FitzHugh-Nagumo: `f1(u, v) = -(f_1(u) + v)`, `f2 = 0`,
    /// `h(u, v) = alpha u - beta v`.
    pub fn fhn(alpha: f64, beta: f64, diffusion: f64, f1_poly: Vec<f64>) -> Self {
        assert!(diffusion > 0.0, "diffusion must be positive");
        SystemCoupling {
            kind: CouplingKind::Fhn(FhnConstants {
                alpha,
                beta,
                f1_poly,
            }),
            diffusion,
        }
    }

    pub fn custom(
        f1: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        f2: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        h: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        diffusion: f64,
    ) -> Self {
        assert!(diffusion > 0.0, "diffusion must be positive");
        SystemCoupling {
            kind: CouplingKind::Custom {
                f1: Arc::new(f1),
                f2: Arc::new(f2),
                h: Arc::new(h),
            },
            diffusion,
        }
    }

    pub fn kind(&self) -> &CouplingKind {
        &self.kind
    }

    pub fn diffusion(&self) -> f64 {
        self.diffusion
    }

    pub fn fhn_constants(&self) -> Option<&FhnConstants> {
        match &self.kind {
            CouplingKind::Fhn(c) => Some(c),
            CouplingKind::Custom { .. } => None,
        }
    }

    #[inline]
    pub fn f1(&self, u: f64, v: f64) -> f64 {
        match &self.kind {
            CouplingKind::Fhn(c) => -(c.f1_scalar(u) + v),
            CouplingKind::Custom { f1, .. } => f1(u, v),
        }
    }

    #[inline]
    pub fn f2(&self, u: f64, v: f64) -> f64 {
        match &self.kind {
            CouplingKind::Fhn(_) => 0.0,
            CouplingKind::Custom { f2, .. } => f2(u, v),
        }
    }

    #[inline]
    pub fn h(&self, u: f64, v: f64) -> f64 {
        match &self.kind {
            CouplingKind::Fhn(c) => c.alpha * u - c.beta * v,
            CouplingKind::Custom { h, .. } => h(u, v),
        }
    }

    /// Smallest `M1 >= m` with `h(u, -M1) >= 0 >= h(u, M1)` for `|u| <= l`.
    ///
    /// Closed form in the FHN case; otherwise doubling search on a sampled
    /// `u` grid.
    pub fn invariant_v_bound(&self, l: f64, m: f64) -> Result<f64, NonlinearityError> {
        match &self.kind {
            CouplingKind::Fhn(c) => {
                if c.alpha == 0.0 {
                    if c.beta >= 0.0 {
                        Ok(m)
                    } else {
                        Err(NonlinearityError::NoInvariantRectangle(format!(
                            "beta = {} < 0",
                            c.beta
                        )))
                    }
                } else if c.beta > 0.0 {
                    Ok(m.max(c.alpha.abs() * l / c.beta))
                } else {
                    Err(NonlinearityError::NoInvariantRectangle(format!(
                        "alpha = {} needs beta > 0, got {}",
                        c.alpha, c.beta
                    )))
                }
            }
            CouplingKind::Custom { .. } => {
                let mut m1 = m.max(1e-12);
                for _ in 0..60 {
                    let ok = (0..=64).all(|k| {
                        let u = -l + 2.0 * l * k as f64 / 64.0;
                        self.h(u, -m1) >= 0.0 && self.h(u, m1) <= 0.0
                    });
                    if ok {
                        return Ok(m1);
                    }
                    m1 *= 2.0;
                }
                Err(NonlinearityError::NoInvariantRectangle(
                    "doubling search exhausted".into(),
                ))
            }
        }
    }
}
