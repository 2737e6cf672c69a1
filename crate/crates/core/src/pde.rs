//! Explicit finite-difference time stepping of the Allen-Cahn equation and of
//! the reaction-diffusion system on a rectangle with homogeneous Neumann
//! conditions (mirror ghost nodes).
//!
//! Every output node depends only on the previous state, and all reductions
//! run in a fixed sequential order, so results are bitwise reproducible.

use thiserror::Error;

use crate::grid::{GridError, GridGeometry, ScalarField};
use crate::nonlinearity::{
    BistableNonlinearity, CouplingKind, Forcing, NonlinearityError, SystemCoupling, Zeros,
};
use crate::schedule::{drive, Event};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PdeError {
    #[error("time step {dt:e} exceeds the stability bound {bound:e}")]
    Unstable { dt: f64, bound: f64 },
    #[error("blow-up at t = {t}: {field} = {value} at node ({i}, {j})")]
    BlowUp {
        t: f64,
        field: &'static str,
        value: f64,
        i: usize,
        j: usize,
    },
    #[error("left the invariant rectangle |u| <= {l}, |v| <= {m1} at t = {t}: (u, v) = ({u}, {v}) at node ({i}, {j})")]
    InvariantRectangle {
        t: f64,
        l: f64,
        m1: f64,
        u: f64,
        v: f64,
        i: usize,
        j: usize,
    },
    #[error("end time {t_end} precedes current time {t}")]
    EndBeforeStart { t: f64, t_end: f64 },
    #[error("u and v live on different grids")]
    GeometryMismatch,
    #[error(
        "initial circle of radius {r0} is within {dist} of the boundary (need at least {need})"
    )]
    CircleTooClose { r0: f64, dist: f64, need: f64 },
    #[error("eps must be positive, got {0}")]
    BadEps(f64),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Nonlinearity(#[from] NonlinearityError),
}

/// Blow-up diagnostic threshold.
pub const BLOW_UP: f64 = 10.0;

const DIM: f64 = 2.0;

/// `min(h^2 / (2 dim 1.01), eps^2 / (1.01 max|f'|))`.
pub fn stability_bound(h: f64, eps: f64, nl: &BistableNonlinearity) -> f64 {
    let diffusive = h * h / (2.0 * DIM * 1.01);
    let reactive = eps * eps / (1.01 * nl.max_abs_derivative());
    diffusive.min(reactive)
}

/// As [`stability_bound`], also bounded by `h^2 / (2 dim D 1.01)` for `v`.
pub fn rd_stability_bound(h: f64, eps: f64, nl: &BistableNonlinearity, diffusion: f64) -> f64 {
    stability_bound(h, eps, nl).min(h * h / (2.0 * DIM * diffusion * 1.01))
}

/// Five-point Laplacian with mirror ghosts (second-order Neumann).
pub fn laplacian_neumann(f: &ScalarField) -> ScalarField {
    let mut out = vec![0.0; f.values.len()];
    stencil_update(f, &mut out, 1.0, 1.0, |_, _, _| 0.0, |_, lap| lap);
    ScalarField {
        geom: f.geom,
        values: out,
    }
}

/// Row-wise five-point sweep: `out = combine(c, dt (diff lap c + react(i, j, c)))`.
#[inline(always)]
fn stencil_update<R, C>(f: &ScalarField, out: &mut [f64], dt: f64, diff: f64, react: R, combine: C)
where
    R: Fn(usize, usize, f64) -> f64,
    C: Fn(f64, f64) -> f64,
{
    let g = f.geom;
    let nx = g.nx;
    let k = diff / (g.h * g.h);
    let v = &f.values;
    for j in 0..g.ny {
        let jd = if j == 0 { 1 } else { j - 1 };
        let ju = if j == g.ny - 1 { g.ny - 2 } else { j + 1 };
        let c = &v[j * nx..(j + 1) * nx];
        let dn = &v[jd * nx..(jd + 1) * nx];
        let up = &v[ju * nx..(ju + 1) * nx];
        let o = &mut out[j * nx..(j + 1) * nx];

        let lap0 = (c[1] + c[1] + dn[0] + up[0] - 4.0 * c[0]) * k;
        o[0] = combine(c[0], dt * (lap0 + react(0, j, c[0])));

        let inner = o[1..nx - 1]
            .iter_mut()
            .zip(c[..nx - 2].iter().zip(&c[1..nx - 1]).zip(&c[2..]))
            .zip(dn[1..nx - 1].iter().zip(&up[1..nx - 1]));
        for (i, ((oi, ((l, m), r)), (d, u))) in inner.enumerate() {
            let lap = (l + r + d + u - 4.0 * m) * k;
            *oi = combine(*m, dt * (lap + react(i + 1, j, *m)));
        }

        let e = nx - 1;
        let lap_e = (c[e - 1] + c[e - 1] + dn[e] + up[e] - 4.0 * c[e]) * k;
        o[e] = combine(c[e], dt * (lap_e + react(e, j, c[e])));
    }
}

fn check_bounded(values: &[f64], nx: usize, t: f64, field: &'static str) -> Result<(), PdeError> {
    // NaN fails the comparison too
    if let Some(k) = values.iter().position(|v| !(v.abs() <= BLOW_UP)) {
        return Err(PdeError::BlowUp {
            t,
            field,
            value: values[k],
            i: k % nx,
            j: k / nx,
        });
    }
    Ok(())
}

/// Parameters of the Allen-Cahn problem `u_t = Lap u + (f(u) - eps g^eps) / eps^2`.
#[derive(Debug, Clone)]
pub struct ACParams {
    pub eps: f64,
    pub nl: BistableNonlinearity,
    pub forcing: Forcing,
    pub dt: f64,
    pub t: f64,
}

impl ACParams {
    /// `dt = dt_safety * stability_bound`.
    pub fn new(
        eps: f64,
        nl: BistableNonlinearity,
        forcing: Forcing,
        geom: &GridGeometry,
        dt_safety: f64,
    ) -> Result<Self, PdeError> {
        if !(eps > 0.0) {
            return Err(PdeError::BadEps(eps));
        }
        let dt = dt_safety * stability_bound(geom.h, eps, &nl);
        let p = ACParams {
            eps,
            nl,
            forcing,
            dt,
            t: 0.0,
        };
        p.validate(geom)?;
        Ok(p)
    }

    pub fn validate(&self, geom: &GridGeometry) -> Result<(), PdeError> {
        let bound = stability_bound(geom.h, self.eps, &self.nl);
        if !(self.dt > 0.0 && self.dt <= bound * (1.0 + 1e-12)) {
            return Err(PdeError::Unstable { dt: self.dt, bound });
        }
        Ok(())
    }
}

fn ac_step_into(u: &ScalarField, out: &mut [f64], p: &ACParams, dt: f64) -> Result<(), PdeError> {
    let inv_eps2 = 1.0 / (p.eps * p.eps);
    let nl = &p.nl;
    let eps = p.eps;
    let combine = |c: f64, d: f64| c + d;
    match &p.forcing {
        Forcing::Zero => stencil_update(
            u,
            out,
            dt,
            1.0,
            |_, _, c| nl.evaluate(c) * inv_eps2,
            combine,
        ),
        Forcing::Constant { delta } => {
            let shift = eps * delta;
            stencil_update(
                u,
                out,
                dt,
                1.0,
                |_, _, c| (nl.evaluate(c) - shift) * inv_eps2,
                combine,
            )
        }
        g => {
            let geom = u.geom;
            let t = p.t;
            stencil_update(
                u,
                out,
                dt,
                1.0,
                |i, j, c| (nl.evaluate(c) - eps * g.evaluate(geom.node(i, j), t, c)) * inv_eps2,
                combine,
            )
        }
    }
    check_bounded(out, u.geom.nx, p.t + dt, "u")
}

/// One forward-Euler step; advances `p.t` by `p.dt`.
pub fn step_allen_cahn(u: &ScalarField, p: &mut ACParams) -> Result<ScalarField, PdeError> {
    p.validate(&u.geom)?;
    let mut out = vec![0.0; u.values.len()];
    ac_step_into(u, &mut out, p, p.dt)?;
    p.t += p.dt;
    Ok(ScalarField {
        geom: u.geom,
        values: out,
    })
}

/// Runs forward Euler until `t_end` (the last step shortened to land
/// exactly), calling `observe(t, u)` at every requested time in
/// `[p.t, t_end]`. Observer times must be sorted.
pub fn simulate_ac(
    u0: &ScalarField,
    p: &mut ACParams,
    t_end: f64,
    observer_times: &[f64],
    mut observe: impl FnMut(f64, &ScalarField),
) -> Result<ScalarField, PdeError> {
    p.validate(&u0.geom)?;
    if t_end < p.t {
        return Err(PdeError::EndBeforeStart { t: p.t, t_end });
    }
    let mut cur = u0.clone();
    let mut next = vec![0.0; u0.values.len()];
    let dt = p.dt;
    let t_final = drive(p.t, t_end, dt, observer_times, |ev| {
        match ev {
            Event::Step(h) => {
                ac_step_into(&cur, &mut next, p, h)?;
                std::mem::swap(&mut cur.values, &mut next);
                p.t += h;
            }
            Event::Stop(k) => observe(observer_times[k], &cur),
        }
        Ok::<(), PdeError>(())
    })?;
    p.t = t_final;
    Ok(cur)
}

/// Discrete Lyapunov functional `int eps |grad u|^2 / 2 + W(u) / eps`.
///
/// Potential term by the trapezoid rule over nodes; gradient term by
/// one-sided edge differences, with half weight on edges lying along the
/// boundary. This is the energy whose gradient is the mirror-Neumann stencil,
/// so it decreases along the explicit scheme when `g = 0`.
pub fn energy(u: &ScalarField, eps: f64, nl: &BistableNonlinearity) -> f64 {
    let g = u.geom;
    let (nx, ny) = (g.nx, g.ny);
    let weight = |k: usize, n: usize| if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
    let mut pot = 0.0;
    let mut grad = 0.0;
    for j in 0..ny {
        let wy = weight(j, ny);
        let row = u.row(j);
        for (i, &v) in row.iter().enumerate() {
            pot += wy * weight(i, nx) * nl.potential(v);
        }
        for i in 0..nx - 1 {
            let d = row[i + 1] - row[i];
            grad += wy * d * d;
        }
    }
    for j in 0..ny - 1 {
        let (r0, r1) = (u.row(j), u.row(j + 1));
        for i in 0..nx {
            let d = r1[i] - r0[i];
            grad += weight(i, nx) * d * d;
        }
    }
    // h^2 area element; (d/h)^2 h^2 = d^2
    0.5 * eps * grad + pot * g.h * g.h / eps
}

/// `u0 = a + (a+ - a) tanh(s (r - R0))` outside the circle and
/// `a + (a - a-) tanh(s (r - R0))` inside, centred in the box.
pub fn radial_initial_data(
    geom: &GridGeometry,
    r0: f64,
    steepness: f64,
    nl: &BistableNonlinearity,
) -> Result<ScalarField, PdeError> {
    let c = geom.center();
    let room = geom.distance_to_boundary(c) - r0;
    let need = 4.0 * geom.h;
    if room < need || r0 < need {
        return Err(PdeError::CircleTooClose {
            r0,
            dist: room.min(r0),
            need,
        });
    }
    let Zeros { minus, mid, plus } = nl.zeros();
    Ok(ScalarField::from_fn(*geom, |p| {
        let s = (p - c).norm() - r0;
        let th = (steepness * s).tanh();
        if s >= 0.0 {
            mid + (plus - mid) * th
        } else {
            mid + (mid - minus) * th
        }
    }))
}

/// `|u| <= l`, `|v| <= m1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvariantRectangle {
    pub l: f64,
    pub m1: f64,
}

/// State of the reaction-diffusion system
/// `u_t = Lap u + (f(u) + eps f1 + eps^2 f2) / eps^2`, `v_t = D Lap v + h(u, v)`.
#[derive(Debug, Clone)]
pub struct RDState {
    pub u: ScalarField,
    pub v: ScalarField,
    pub nl: BistableNonlinearity,
    pub coupling: SystemCoupling,
    pub t: f64,
    pub rectangle: Option<InvariantRectangle>,
}

impl RDState {
    pub fn new(
        u: ScalarField,
        v: ScalarField,
        nl: BistableNonlinearity,
        coupling: SystemCoupling,
    ) -> Result<Self, PdeError> {
        if u.geom != v.geom {
            return Err(PdeError::GeometryMismatch);
        }
        Ok(RDState {
            u,
            v,
            nl,
            coupling,
            t: 0.0,
            rectangle: None,
        })
    }

    /// Enables the per-step rectangle check with `|u| <= l` and `M1` derived
    /// from the sign condition on `h`, starting from `M = max |v0|`.
    pub fn with_rectangle(mut self, l: f64) -> Result<Self, PdeError> {
        let m = self.v.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let m1 = self.coupling.invariant_v_bound(l, m)?;
        self.rectangle = Some(InvariantRectangle { l, m1 });
        Ok(self)
    }

    fn check_rectangle(&self) -> Result<(), PdeError> {
        let Some(InvariantRectangle { l, m1 }) = self.rectangle else {
            return Ok(());
        };
        let slack = 1e-12;
        for (k, (u, v)) in self.u.values.iter().zip(&self.v.values).enumerate() {
            if u.abs() > l + slack || v.abs() > m1 + slack {
                let nx = self.u.geom.nx;
                return Err(PdeError::InvariantRectangle {
                    t: self.t,
                    l,
                    m1,
                    u: *u,
                    v: *v,
                    i: k % nx,
                    j: k / nx,
                });
            }
        }
        Ok(())
    }
}

fn rd_step_into(
    s: &RDState,
    eps: f64,
    dt: f64,
    out_u: &mut [f64],
    out_v: &mut [f64],
) -> Result<(), PdeError> {
    let inv_eps2 = 1.0 / (eps * eps);
    let eps2 = eps * eps;
    let nl = &s.nl;
    let (u, v) = (&s.u, &s.v);
    let nx = u.geom.nx;
    let d = s.coupling.diffusion();
    let combine = |c: f64, dd: f64| c + dd;
    match s.coupling.kind() {
        CouplingKind::Fhn(fc) => {
            let f1 = |uu: f64, vv: f64| -(fc.f1_scalar(uu) + vv);
            stencil_update(
                u,
                out_u,
                dt,
                1.0,
                |i, j, c| {
                    let vv = v.values[j * nx + i];
                    (nl.evaluate(c) + eps * f1(c, vv) + eps2 * 0.0) * inv_eps2
                },
                combine,
            );
            let (alpha, beta) = (fc.alpha, fc.beta);
            stencil_update(
                v,
                out_v,
                dt,
                d,
                |i, j, c| alpha * u.values[j * nx + i] - beta * c,
                combine,
            );
        }
        CouplingKind::Custom { f1, f2, h } => {
            stencil_update(
                u,
                out_u,
                dt,
                1.0,
                |i, j, c| {
                    let vv = v.values[j * nx + i];
                    (nl.evaluate(c) + eps * f1(c, vv) + eps2 * f2(c, vv)) * inv_eps2
                },
                combine,
            );
            stencil_update(
                v,
                out_v,
                dt,
                d,
                |i, j, c| h(u.values[j * nx + i], c),
                combine,
            );
        }
    }
    check_bounded(out_u, nx, s.t + dt, "u")?;
    check_bounded(out_v, nx, s.t + dt, "v")
}

/// Forward-Euler step of `v_t = D Lap v + h(u, v)` with `u` frozen, as used
/// by the sharp-interface system.
pub fn step_v_frozen_u(
    u: &ScalarField,
    v: &ScalarField,
    coupling: &SystemCoupling,
    dt: f64,
    t: f64,
) -> Result<ScalarField, PdeError> {
    if u.geom != v.geom {
        return Err(PdeError::GeometryMismatch);
    }
    let d = coupling.diffusion();
    let bound = v.geom.h * v.geom.h / (2.0 * DIM * d * 1.01);
    if !(dt > 0.0 && dt <= bound * (1.0 + 1e-12)) {
        return Err(PdeError::Unstable { dt, bound });
    }
    let nx = v.geom.nx;
    let mut out = vec![0.0; v.values.len()];
    stencil_update(
        v,
        &mut out,
        dt,
        d,
        |i, j, c| coupling.h(u.values[j * nx + i], c),
        |c, dd| c + dd,
    );
    check_bounded(&out, nx, t + dt, "v")?;
    Ok(ScalarField {
        geom: v.geom,
        values: out,
    })
}

/// One simultaneous forward-Euler step of both components.
pub fn step_rd(s: &RDState, eps: f64, dt: f64) -> Result<RDState, PdeError> {
    let bound = rd_stability_bound(s.u.geom.h, eps, &s.nl, s.coupling.diffusion());
    if !(dt > 0.0 && dt <= bound * (1.0 + 1e-12)) {
        return Err(PdeError::Unstable { dt, bound });
    }
    let mut out_u = vec![0.0; s.u.values.len()];
    let mut out_v = vec![0.0; s.v.values.len()];
    rd_step_into(s, eps, dt, &mut out_u, &mut out_v)?;
    let next = RDState {
        u: ScalarField {
            geom: s.u.geom,
            values: out_u,
        },
        v: ScalarField {
            geom: s.v.geom,
            values: out_v,
        },
        nl: s.nl.clone(),
        coupling: s.coupling.clone(),
        t: s.t + dt,
        rectangle: s.rectangle,
    };
    next.check_rectangle()?;
    Ok(next)
}

/// Driver for the system; same landing rules as [`simulate_ac`].
pub fn simulate_rd(
    state: &mut RDState,
    eps: f64,
    dt: f64,
    t_end: f64,
    observer_times: &[f64],
    mut observe: impl FnMut(f64, &RDState),
) -> Result<(), PdeError> {
    let bound = rd_stability_bound(state.u.geom.h, eps, &state.nl, state.coupling.diffusion());
    if !(dt > 0.0 && dt <= bound * (1.0 + 1e-12)) {
        return Err(PdeError::Unstable { dt, bound });
    }
    if t_end < state.t {
        return Err(PdeError::EndBeforeStart { t: state.t, t_end });
    }
    let mut nu = vec![0.0; state.u.values.len()];
    let mut nv = vec![0.0; state.v.values.len()];
    let t_final = drive(state.t, t_end, dt, observer_times, |ev| match ev {
        Event::Step(h) => {
            rd_step_into(state, eps, h, &mut nu, &mut nv)?;
            std::mem::swap(&mut state.u.values, &mut nu);
            std::mem::swap(&mut state.v.values, &mut nv);
            state.t += h;
            state.check_rectangle()
        }
        Event::Stop(k) => {
            observe(observer_times[k], state);
            Ok(())
        }
    })?;
    state.t = t_final;
    Ok(())
}
