//! Sharp-interface limit problems: forced curvature flow of a sphere (radial
//! ODE), of a planar closed curve (front tracking), and the curve flow
//! coupled to a diffusion equation for `v`.

use std::sync::Arc;

use thiserror::Error;

use crate::geom::Point;
use crate::grid::ScalarField;
use crate::interface::{is_inside, Curve, InterfaceError, MIN_POINTS};
use crate::nonlinearity::{BistableNonlinearity, Forcing, SystemCoupling};
use crate::pde::{step_v_frozen_u, PdeError};
use crate::schedule::{drive, Event};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SharpError {
    #[error("radius must be positive, got {0}")]
    BadRadius(f64),
    #[error("dimension must be at least 2, got {0}")]
    BadDimension(u32),
    #[error("time step must be positive, got {0}")]
    BadStep(f64),
    #[error("end time {t_end} precedes start time {t}")]
    EndBeforeStart { t: f64, t_end: f64 },
    #[error("sphere extinct between t = {t_lo} and t = {t_hi} (last radius {r_last})")]
    Extinction { t_lo: f64, t_hi: f64, r_last: f64 },
    #[error("time step {dt:e} exceeds (min segment)^2 / 4 = {bound:e}")]
    StepTooLarge { dt: f64, bound: f64 },
    #[error("curve collapsed at t = {0}")]
    Collapsed(f64),
    #[error("curve self-intersects at t = {t} (segments {a} and {b})")]
    SelfIntersection { t: f64, a: usize, b: usize },
    #[error("curve node left the grid at t = {t}: ({x}, {y})")]
    LeftGrid { t: f64, x: f64, y: f64 },
    #[error(transparent)]
    Curve(#[from] InterfaceError),
    #[error(transparent)]
    Pde(#[from] PdeError),
}

type ForceFn = Arc<dyn Fn(Point, f64) -> f64 + Send + Sync>;

/// Normal-velocity forcing `F(p, t)` of the limit flow `V_n = -kappa + F`.
#[derive(Clone)]
pub struct LimitForcing {
    f: ForceFn,
}

impl std::fmt::Debug for LimitForcing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("LimitForcing")
    }
}

impl LimitForcing {
    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn constant(value: f64) -> Self {
        LimitForcing {
            f: Arc::new(move |_, _| value),
        }
    }

    pub fn from_fn(f: impl Fn(Point, f64) -> f64 + Send + Sync + 'static) -> Self {
        LimitForcing { f: Arc::new(f) }
    }

    /// Depends on the point only through `|p|`.
    pub fn radial(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        LimitForcing {
            f: Arc::new(move |p: Point, t| f(p.norm(), t)),
        }
    }

    /// `c0 int_{a-}^{a+} g(x, t, r) dr` for an Allen-Cahn perturbation.
    pub fn from_allen_cahn(forcing: &Forcing, nl: &BistableNonlinearity, c0: f64) -> Self {
        match forcing {
            Forcing::Zero => Self::zero(),
            Forcing::Constant { .. } => {
                Self::constant(c0 * forcing.well_integral(nl, Point::ORIGIN, 0.0))
            }
            _ => {
                let (g, nl) = (forcing.clone(), nl.clone());
                Self::from_fn(move |p, t| c0 * g.well_integral(&nl, p, t))
            }
        }
    }

    #[inline]
    pub fn evaluate(&self, p: Point, t: f64) -> f64 {
        (self.f)(p, t)
    }

    /// Value on a sphere of radius `r`, taken at `(r, 0)`.
    #[inline]
    pub fn evaluate_radial(&self, r: f64, t: f64) -> f64 {
        self.evaluate(Point::new(r, 0.0), t)
    }
}

/// Sampled solution of `dR/dt = -(N - 1) / R + F(R, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialTrajectory {
    pub dimension: u32,
    pub times: Vec<f64>,
    pub radii: Vec<f64>,
    /// `dR/dt` at each sample.
    pub rates: Vec<f64>,
}

impl RadialTrajectory {
    pub fn final_radius(&self) -> f64 {
        *self.radii.last().expect("trajectory has samples")
    }

    /// Cubic Hermite interpolation between samples; clamps outside the run.
    pub fn radius_at(&self, t: f64) -> f64 {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.radii[0];
        }
        if t >= self.times[n - 1] {
            return self.radii[n - 1];
        }
        let k = self.times.partition_point(|&s| s <= t) - 1;
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let (h00, h10) = (
            2.0 * s * s * s - 3.0 * s * s + 1.0,
            s * s * s - 2.0 * s * s + s,
        );
        let (h01, h11) = (-2.0 * s * s * s + 3.0 * s * s, s * s * s - s * s);
        h00 * self.radii[k]
            + h10 * h * self.rates[k]
            + h01 * self.radii[k + 1]
            + h11 * h * self.rates[k + 1]
    }
}

/// Classical RK4 for the sphere radius. Stops with [`SharpError::Extinction`]
/// as soon as a stage or the step result is no longer positive.
pub fn evolve_radial(
    r0: f64,
    dimension: u32,
    forcing: &LimitForcing,
    t_end: f64,
    dt: f64,
) -> Result<RadialTrajectory, SharpError> {
    if !(r0 > 0.0) {
        return Err(SharpError::BadRadius(r0));
    }
    if dimension < 2 {
        return Err(SharpError::BadDimension(dimension));
    }
    if !(dt > 0.0) {
        return Err(SharpError::BadStep(dt));
    }
    if t_end < 0.0 {
        return Err(SharpError::EndBeforeStart { t: 0.0, t_end });
    }
    let bend = (dimension - 1) as f64;
    let rhs = |r: f64, t: f64| -bend / r + forcing.evaluate_radial(r, t);
    let mut traj = RadialTrajectory {
        dimension,
        times: vec![0.0],
        radii: vec![r0],
        rates: vec![rhs(r0, 0.0)],
    };
    let mut r = r0;
    let mut t = 0.0;
    drive(0.0, t_end, dt, &[], |ev| {
        let Event::Step(h) = ev else { return Ok(()) };
        let extinct = |t_hi| SharpError::Extinction {
            t_lo: t,
            t_hi,
            r_last: r,
        };
        let k1 = rhs(r, t);
        let r2 = r + 0.5 * h * k1;
        if !(r2 > 0.0) {
            return Err(extinct(t + h));
        }
        let k2 = rhs(r2, t + 0.5 * h);
        let r3 = r + 0.5 * h * k2;
        if !(r3 > 0.0) {
            return Err(extinct(t + h));
        }
        let k3 = rhs(r3, t + 0.5 * h);
        let r4 = r + h * k3;
        if !(r4 > 0.0) {
            return Err(extinct(t + h));
        }
        let k4 = rhs(r4, t + h);
        let next = r + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !(next > 0.0) {
            return Err(extinct(t + h));
        }
        r = next;
        t += h;
        traj.times.push(t);
        traj.radii.push(r);
        traj.rates.push(rhs(r, t));
        Ok(())
    })?;
    // the driver lands exactly on t_end
    if let Some(last) = traj.times.last_mut() {
        if t_end > 0.0 {
            *last = t_end;
        }
    }
    Ok(traj)
}

/// Options of the front-tracking scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveFlowOptions {
    /// Redistribute nodes to uniform arclength every this many steps.
    pub remesh_every: usize,
    /// Times (sorted) at which the curve is recorded; the final state is
    /// always recorded.
    pub snapshot_times: Vec<f64>,
}

impl Default for CurveFlowOptions {
    fn default() -> Self {
        CurveFlowOptions {
            remesh_every: 5,
            snapshot_times: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveTrajectory {
    pub samples: Vec<(f64, Curve)>,
}

impl CurveTrajectory {
    pub fn final_curve(&self) -> &Curve {
        &self.samples.last().expect("trajectory has samples").1
    }
}

fn min_segment(c: &Curve) -> f64 {
    c.segments()
        .map(|(a, b)| a.dist(b))
        .fold(f64::INFINITY, f64::min)
}

/// Explicit front tracking shared by the plain and the coupled limit flows.
struct CurveFlow {
    curve: Curve,
    t: f64,
    steps: usize,
    target: f64,
    remesh_every: usize,
}

impl CurveFlow {
    /// With `strict`, a `dt` above the step bound is an error; otherwise
    /// [`CurveFlow::advance`] substeps.
    fn new(curve: Curve, dt: f64, remesh_every: usize, strict: bool) -> Result<Self, SharpError> {
        curve.validate()?;
        if !(dt > 0.0) {
            return Err(SharpError::BadStep(dt));
        }
        let bound = 0.25 * min_segment(&curve).powi(2);
        if strict && dt > bound {
            return Err(SharpError::StepTooLarge { dt, bound });
        }
        let target = curve.length() / curve.len() as f64;
        Ok(CurveFlow {
            curve,
            t: 0.0,
            steps: 0,
            target,
            remesh_every: remesh_every.max(1),
        })
    }

    /// Advances by `h`, splitting into equal substeps when remeshing has
    /// made segments short enough for `h` to violate the step bound.
    fn advance(&mut self, h: f64, forcing: &dyn Fn(Point, f64) -> f64) -> Result<(), SharpError> {
        let bound = 0.25 * min_segment(&self.curve).powi(2);
        let parts = if h <= bound {
            1
        } else {
            (h / bound).ceil() as usize
        };
        let sub = h / parts as f64;
        for _ in 0..parts {
            self.euler(sub, forcing);
            self.steps += 1;
            if self.steps.is_multiple_of(self.remesh_every) {
                self.remesh()?;
            }
            if let Some((a, b)) = self.curve.self_intersection() {
                return Err(SharpError::SelfIntersection { t: self.t, a, b });
            }
        }
        Ok(())
    }

    fn euler(&mut self, h: f64, forcing: &dyn Fn(Point, f64) -> f64) {
        let p = &self.curve.points;
        let n = p.len();
        let next: Vec<Point> = (0..n)
            .map(|k| {
                let a = p[(k + n - 1) % n];
                let b = p[k];
                let c = p[(k + 1) % n];
                let (ab, bc, ac) = (b - a, c - b, c - a);
                let denom = ab.norm() * bc.norm() * ac.norm();
                let kappa = if denom > 0.0 {
                    2.0 * ab.cross(bc) / denom
                } else {
                    0.0
                };
                let normal = ac.normalized().rot_cw();
                b + normal * (h * (-kappa + forcing(b, self.t)))
            })
            .collect();
        self.curve.points = next;
        self.t += h;
    }

    fn remesh(&mut self) -> Result<(), SharpError> {
        let length = self.curve.length();
        let mut n = self.curve.len();
        let spacing = length / n as f64;
        if !(spacing >= 0.5 * self.target && spacing <= 1.5 * self.target) {
            n = (length / self.target).round() as usize;
        }
        if n < MIN_POINTS || !(self.curve.signed_area() > 0.0) {
            return Err(SharpError::Collapsed(self.t));
        }
        self.curve = smooth_resample(&self.curve, n);
        Ok(())
    }
}

/// `n` points at equal chord-arclength spacing on the cubic Hermite spline
/// through the vertices of a closed curve; unlike linear resampling this
/// does not cut corners at second order.
fn smooth_resample(c: &Curve, n: usize) -> Curve {
    let p = &c.points;
    let m = p.len();
    let len: Vec<f64> = (0..m).map(|k| p[k].dist(p[(k + 1) % m])).collect();
    let total: f64 = len.iter().sum();
    // tangent at vertex k in units of d/ds
    let tangent = |k: usize| {
        let prev = (k + m - 1) % m;
        (p[(k + 1) % m] - p[prev]) * (1.0 / (len[prev] + len[k]))
    };
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    let mut before = 0.0;
    for j in 0..n {
        let target = total * j as f64 / n as f64;
        while seg + 1 < m && before + len[seg] < target {
            before += len[seg];
            seg += 1;
        }
        let l = len[seg];
        let s = if l > 0.0 {
            ((target - before) / l).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let (a, b) = (p[seg], p[(seg + 1) % m]);
        let (ta, tb) = (tangent(seg) * l, tangent((seg + 1) % m) * l);
        let (s2, s3) = (s * s, s * s * s);
        let q = a * (2.0 * s3 - 3.0 * s2 + 1.0)
            + ta * (s3 - 2.0 * s2 + s)
            + b * (-2.0 * s3 + 3.0 * s2)
            + tb * (s3 - s2);
        out.push(q);
    }
    Curve {
        points: out,
        closed: true,
    }
}

/// Front tracking of `V_n = -kappa + F(p, t)` with outward normal and
/// `kappa > 0` on a counter-clockwise circle.
pub fn evolve_curve(
    c: &Curve,
    forcing: &LimitForcing,
    t_end: f64,
    dt: f64,
    opts: &CurveFlowOptions,
) -> Result<CurveTrajectory, SharpError> {
    if t_end < 0.0 {
        return Err(SharpError::EndBeforeStart { t: 0.0, t_end });
    }
    let mut flow = CurveFlow::new(c.clone(), dt, opts.remesh_every, true)?;
    let mut samples = Vec::new();
    let force = |p: Point, t: f64| forcing.evaluate(p, t);
    drive(0.0, t_end, dt, &opts.snapshot_times, |ev| {
        match ev {
            Event::Step(h) => flow.advance(h, &force)?,
            Event::Stop(k) => samples.push((opts.snapshot_times[k], flow.curve.clone())),
        }
        Ok::<(), SharpError>(())
    })?;
    if samples.last().is_none_or(|s| s.0 < t_end) {
        samples.push((t_end, flow.curve.clone()));
    }
    Ok(CurveTrajectory { samples })
}

/// Where a point lies relative to a closed curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Inside,
    Outside,
    Boundary,
}

/// Ray-cast parity. Vertices on the ray count as lying just above it, the
/// same as shifting the ray by an infinitesimal amount in `y`.
pub fn inside_outside(c: &Curve, q: Point) -> Side {
    for (a, b) in c.segments() {
        let on_line = (b - a).cross(q - a) == 0.0;
        let within = q.x >= a.x.min(b.x)
            && q.x <= a.x.max(b.x)
            && q.y >= a.y.min(b.y)
            && q.y <= a.y.max(b.y);
        if on_line && within {
            return Side::Boundary;
        }
    }
    if is_inside(q, std::slice::from_ref(c)) {
        Side::Inside
    } else {
        Side::Outside
    }
}

/// `int_{a-}^{a+} f1(r, v) dr` tabulated in `v`, with four-point Lagrange
/// interpolation; values outside the table are integrated directly.
#[derive(Debug, Clone)]
pub struct WellIntegralTable {
    lo: f64,
    step: f64,
    values: Vec<f64>,
    coupling: SystemCoupling,
    nl: BistableNonlinearity,
}

impl WellIntegralTable {
    pub fn new(
        coupling: &SystemCoupling,
        nl: &BistableNonlinearity,
        lo: f64,
        hi: f64,
        step: f64,
    ) -> Self {
        let n = (((hi - lo) / step).ceil() as usize).max(3) + 1;
        let direct = |v: f64| nl.integrate_over_wells(|r| coupling.f1(r, v));
        let values = (0..n).map(|k| direct(lo + step * k as f64)).collect();
        WellIntegralTable {
            lo,
            step,
            values,
            coupling: coupling.clone(),
            nl: nl.clone(),
        }
    }

    pub fn direct(&self, v: f64) -> f64 {
        self.nl.integrate_over_wells(|r| self.coupling.f1(r, v))
    }

    pub fn evaluate(&self, v: f64) -> f64 {
        let n = self.values.len();
        let x = (v - self.lo) / self.step;
        if !(x >= 0.0 && x <= (n - 1) as f64) {
            return self.direct(v);
        }
        let k = (x.floor() as usize).saturating_sub(1).min(n - 4);
        let s = x - k as f64;
        let mut acc = 0.0;
        for a in 0..4 {
            let mut w = 1.0;
            for b in 0..4 {
                if a != b {
                    w *= (s - b as f64) / (a as f64 - b as f64);
                }
            }
            acc += w * self.values[k + a];
        }
        acc
    }
}

/// State of the sharp-interface coupled system at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct RdLimitSample {
    pub t: f64,
    pub curve: Curve,
    pub v: ScalarField,
}

/// Operator-split solver of the coupled limit:
///
/// 1. `u~ = a-` inside the curve and `a+` outside,
/// 2. the curve moves with `V_n = -kappa - c0 int f1(r, v) dr`, `v` taken
///    bilinearly at each node at the start of the step,
/// 3. `v` takes a Neumann Euler step of `D Lap v + h(u~, v)`.
///
/// `dt` is the step of `v`; the curve substeps when `dt` exceeds its own
/// bound.
#[allow(clippy::too_many_arguments)]
pub fn evolve_rd_limit(
    c: &Curve,
    v0: &ScalarField,
    coupling: &SystemCoupling,
    nl: &BistableNonlinearity,
    c0: f64,
    t_end: f64,
    dt: f64,
    opts: &CurveFlowOptions,
) -> Result<Vec<RdLimitSample>, SharpError> {
    if t_end < 0.0 {
        return Err(SharpError::EndBeforeStart { t: 0.0, t_end });
    }
    let geom = v0.geom;
    let check_inside = |curve: &Curve, t: f64| -> Result<(), SharpError> {
        match curve
            .points
            .iter()
            .find(|p| !(geom.distance_to_boundary(**p) > 0.0))
        {
            Some(p) => Err(SharpError::LeftGrid { t, x: p.x, y: p.y }),
            None => Ok(()),
        }
    };
    check_inside(c, 0.0)?;
    let mut flow = CurveFlow::new(c.clone(), dt, opts.remesh_every, false)?;
    let (vmin, vmax) = (v0.min(), v0.max());
    let span = 1.0f64.max(vmax - vmin);
    let table = WellIntegralTable::new(coupling, nl, vmin - span, vmax + span, 1e-3);
    let zeros = nl.zeros();
    let mut v = v0.clone();
    let mut samples = Vec::new();
    drive(0.0, t_end, dt, &opts.snapshot_times, |ev| {
        match ev {
            Event::Step(h) => {
                let mask = crate::interface::inside_mask(&geom, std::slice::from_ref(&flow.curve));
                let u_tilde = ScalarField {
                    geom,
                    values: mask
                        .iter()
                        .map(|&inside| if inside { zeros.minus } else { zeros.plus })
                        .collect(),
                };
                let t = flow.t;
                {
                    let vv = &v;
                    let force = |p: Point, _t: f64| {
                        let value = vv.bilinear(p).unwrap_or(f64::NAN);
                        -c0 * table.evaluate(value)
                    };
                    flow.advance(h, &force)?;
                }
                check_inside(&flow.curve, flow.t)?;
                v = step_v_frozen_u(&u_tilde, &v, coupling, h, t)?;
            }
            Event::Stop(k) => samples.push(RdLimitSample {
                t: opts.snapshot_times[k],
                curve: flow.curve.clone(),
                v: v.clone(),
            }),
        }
        Ok::<(), SharpError>(())
    })?;
    if samples.last().is_none_or(|s| s.t < t_end) {
        samples.push(RdLimitSample {
            t: t_end,
            curve: flow.curve.clone(),
            v,
        });
    }
    Ok(samples)
}
