//! Eps-sweeps that compare diffuse-interface runs with their sharp limits,
//! convergence-order fits, and the files the CLI writes.

pub mod config;
pub mod io;
pub mod report;

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::geom::Point;
use crate::grid::{GridError, GridGeometry, ScalarField};
use crate::interface::{
    extract_level_set, graph_over, hausdorff_sets, inside_mask, layer_error_with,
    nearest_by_centroid, transversality, Curve, DistanceBand, GraphSample, InterfaceError,
};
use crate::nonlinearity::{
    mobility_constant, BistableNonlinearity, Forcing, NonlinearityError, Zeros,
};
use crate::pde::{
    radial_initial_data, rd_stability_bound, simulate_ac, simulate_rd, ACParams, PdeError, RDState,
};
use crate::profile::{solve_profile, LayerProfile, ProfileError};
use crate::sharp::{
    evolve_curve, evolve_radial, evolve_rd_limit, CurveFlowOptions, LimitForcing, RadialTrajectory,
    RdLimitSample, SharpError,
};

pub use config::{ConfigError, ExperimentConfig, ForcingSpec, NonlinearitySpec};
pub use report::{EpsRecord, RecordStatus, SweepReport};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("eps must lie in (0, 1), got {0}")]
    BadEps(f64),
    #[error("need at least two (eps, value) pairs, got {0}")]
    TooFewPairs(usize),
    #[error("pair {index} is not positive: ({eps}, {value})")]
    NonPositive { index: usize, eps: f64, value: f64 },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Nonlinearity(#[from] NonlinearityError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Sharp(#[from] SharpError),
    #[error(transparent)]
    Pde(#[from] PdeError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Layer formation time `eps^2 |ln eps| / f'(a)`.
pub fn t_eps(eps: f64, nl: &BistableNonlinearity) -> Result<f64, HarnessError> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(HarnessError::BadEps(eps));
    }
    Ok(eps * eps * eps.ln().abs() / nl.derivative(nl.zeros().mid))
}

/// Least-squares line `ln err = ln C + p ln eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fit {
    pub order: f64,
    pub constant: f64,
    /// RMS misfit in log space.
    pub residual: f64,
}

pub fn fit_order(pairs: &[(f64, f64)]) -> Result<Fit, HarnessError> {
    if pairs.len() < 2 {
        return Err(HarnessError::TooFewPairs(pairs.len()));
    }
    if let Some((index, &(eps, value))) = pairs
        .iter()
        .enumerate()
        .find(|(_, p)| !(p.0 > 0.0 && p.1 > 0.0))
    {
        return Err(HarnessError::NonPositive { index, eps, value });
    }
    let n = pairs.len() as f64;
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let order = sxy / sxx;
    let intercept = my - order * mx;
    let ss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - order * x).powi(2))
        .sum();
    Ok(Fit {
        order,
        constant: intercept.exp(),
        residual: (ss / n).sqrt(),
    })
}

/// Quantities shared by every eps of a sweep.
pub struct Setup {
    pub cfg: ExperimentConfig,
    pub hash: String,
    pub nl: BistableNonlinearity,
    pub c0: f64,
    pub profile: LayerProfile,
    pub forcing: Forcing,
    pub limit_forcing: LimitForcing,
    pub initial: Vec<Curve>,
    /// Circle centred in the domain with a radially symmetric forcing.
    pub radial: bool,
}

impl Setup {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let nl = cfg.nonlinearity()?;
        let c0 = mobility_constant(&nl, 256)?;
        let profile = solve_profile(&nl, cfg.profile_z_max, cfg.profile_samples)?;
        let forcing = cfg.forcing();
        let limit_forcing = LimitForcing::from_allen_cahn(&forcing, &nl, c0);
        let (lo, hi) = cfg.domain_corners();
        let center = Point::new(0.5 * (lo.x + hi.x), 0.5 * (lo.y + hi.y));
        let (initial, radial) = match &cfg.curve_file {
            Some(path) => {
                let curves = io::read_curves(path).map_err(io_err(path))?;
                for c in &curves {
                    c.validate().map_err(SharpError::from)?;
                }
                (curves, false)
            }
            None => {
                let h = cfg.eps_list.last().copied().unwrap_or(0.01) / cfg.grid_ratio;
                let n = nodes_for(2.0 * std::f64::consts::PI * cfg.r0, h / cfg.limit_density);
                (
                    vec![Curve::circle(center, cfg.r0, n)],
                    forcing.is_radially_symmetric(),
                )
            }
        };
        Ok(Setup {
            cfg: cfg.clone(),
            hash: cfg.hash(),
            nl,
            c0,
            profile,
            forcing,
            limit_forcing,
            initial,
            radial,
        })
    }

    pub fn geometry(&self, eps: f64) -> Result<GridGeometry, HarnessError> {
        let (lo, hi) = self.cfg.domain_corners();
        Ok(GridGeometry::from_box(lo, hi, eps / self.cfg.grid_ratio)?)
    }

    /// The eps-independent initial field: a `tanh` of the signed distance to
    /// the initial interface, negative side inside.
    pub fn initial_field(&self, geom: &GridGeometry) -> Result<ScalarField, HarnessError> {
        if self.radial {
            return Ok(radial_initial_data(
                geom,
                self.cfg.r0,
                self.cfg.steepness,
                &self.nl,
            )?);
        }
        let diag = geom.h * ((geom.nx + geom.ny) as f64);
        let d = DistanceBand::new(*geom, &self.initial, diag).signed(&self.initial);
        let Zeros { minus, mid, plus } = self.nl.zeros();
        let s = self.cfg.steepness;
        Ok(ScalarField {
            geom: *geom,
            values: d
                .values
                .iter()
                .map(|&x| {
                    let th = (s * x).tanh();
                    if x >= 0.0 {
                        mid + (plus - mid) * th
                    } else {
                        mid + (mid - minus) * th
                    }
                })
                .collect(),
        })
    }

    fn center(&self) -> Point {
        let (lo, hi) = self.cfg.domain_corners();
        Point::new(0.5 * (lo.x + hi.x), 0.5 * (lo.y + hi.y))
    }

    /// Observer times: `observers` points spread evenly over `[mu t_eps, T]`.
    pub fn observer_times(&self, eps: f64) -> Result<Vec<f64>, String> {
        let t0 = self.cfg.mu * t_eps(eps, &self.nl).map_err(|e| e.to_string())?;
        let t1 = self.cfg.t_end;
        if t0 >= t1 {
            return Err(format!("mu t_eps = {t0} is not below t_end = {t1}"));
        }
        let n = self.cfg.observers;
        Ok((0..n)
            .map(|k| {
                if k + 1 == n {
                    t1
                } else {
                    t0 + (t1 - t0) * k as f64 / (n - 1) as f64
                }
            })
            .collect())
    }
}

fn nodes_for(length: f64, spacing: f64) -> usize {
    ((length / spacing).ceil() as usize).max(64)
}

/// The limit interface at the times a sweep asks for.
pub enum Reference {
    Radial {
        trajectory: RadialTrajectory,
        center: Point,
        spacing: f64,
    },
    Tracked(Vec<(f64, Vec<Curve>)>),
}

impl Reference {
    /// Radial ODE when the set-up is radial, otherwise front tracking of every
    /// initial component with snapshots at `times`.
    pub fn build(setup: &Setup, times: &[f64]) -> Result<Self, HarnessError> {
        let cfg = &setup.cfg;
        let h = cfg.eps_list.last().copied().unwrap_or(0.01) / cfg.grid_ratio;
        let spacing = h / cfg.limit_density;
        if setup.radial {
            let trajectory =
                evolve_radial(cfg.r0, 2, &setup.limit_forcing, cfg.t_end, cfg.limit_dt)?;
            return Ok(Reference::Radial {
                trajectory,
                center: setup.center(),
                spacing,
            });
        }
        let mut sorted = times.to_vec();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        let opts = CurveFlowOptions {
            remesh_every: cfg.remesh_every,
            snapshot_times: sorted.clone(),
        };
        let mut per_time: Vec<(f64, Vec<Curve>)> =
            sorted.iter().map(|&t| (t, Vec::new())).collect();
        for c in &setup.initial {
            let c = c.resample(nodes_for(c.length(), spacing));
            let seg = c
                .segments()
                .map(|(a, b)| a.dist(b))
                .fold(f64::INFINITY, f64::min);
            let tr = evolve_curve(&c, &setup.limit_forcing, cfg.t_end, 0.2 * seg * seg, &opts)?;
            for (slot, (t, curve)) in per_time.iter_mut().zip(&tr.samples) {
                debug_assert_eq!(slot.0, *t);
                slot.1.push(curve.clone());
            }
        }
        Ok(Reference::Tracked(per_time))
    }

    pub fn curves_at(&self, t: f64) -> Vec<Curve> {
        match self {
            Reference::Radial {
                trajectory,
                center,
                spacing,
            } => {
                let r = trajectory.radius_at(t);
                vec![Curve::circle(
                    *center,
                    r,
                    nodes_for(2.0 * std::f64::consts::PI * r, *spacing),
                )]
            }
            Reference::Tracked(snaps) => {
                let k = snaps
                    .iter()
                    .enumerate()
                    .min_by(|a, b| (a.1 .0 - t).abs().total_cmp(&(b.1 .0 - t).abs()))
                    .map(|(k, _)| k)
                    .expect("reference has snapshots");
                snaps[k].1.clone()
            }
        }
    }

    pub fn radius_at(&self, t: f64) -> Option<f64> {
        match self {
            Reference::Radial { trajectory, .. } => Some(trajectory.radius_at(t)),
            Reference::Tracked(_) => None,
        }
    }
}

/// Statistics of one observer time.
#[derive(Debug, Clone)]
pub struct Observation {
    pub t: f64,
    pub hausdorff: f64,
    pub layer_error: f64,
    pub theta_sup: Option<f64>,
    pub graph_failure: Option<String>,
    pub transversality: f64,
    pub radius: f64,
    pub v_error: Option<f64>,
    pub curves: Vec<Curve>,
    pub theta: Vec<GraphSample>,
}

fn observe(
    setup: &Setup,
    u: &ScalarField,
    t: f64,
    eps: f64,
    reference: &[Curve],
) -> Result<Observation, InterfaceError> {
    let level = setup.nl.zeros().mid;
    let curves = extract_level_set(u, level)?;
    if curves.is_empty() {
        return Err(InterfaceError::EmptyLevelSet);
    }
    if curves.iter().any(|c| !c.closed) {
        return Err(InterfaceError::OpenContour);
    }
    let layer_error = layer_error_with(u, &setup.profile, eps, &curves)?;
    let hausdorff = hausdorff_sets(&curves, reference);
    let mut theta_sup: f64 = 0.0;
    let mut graph_failure = None;
    let mut theta = Vec::new();
    let mut trans = f64::INFINITY;
    for r in reference {
        let target = &curves[nearest_by_centroid(r, &curves).expect("nonempty")];
        match graph_over(r, target, setup.cfg.graph_tube * eps) {
            Ok(g) => {
                theta_sup = g.iter().fold(theta_sup, |m, s| m.max(s.s.abs() / eps));
                theta.extend(g);
            }
            Err(e) => graph_failure = graph_failure.or(Some(e.to_string())),
        }
        trans = trans.min(transversality(u, r, setup.cfg.transversality_tube * eps)?);
    }
    let area: f64 = curves.iter().map(Curve::signed_area).sum();
    Ok(Observation {
        t,
        hausdorff,
        layer_error,
        theta_sup: graph_failure.is_none().then_some(theta_sup),
        graph_failure,
        transversality: trans,
        radius: (area.max(0.0) / std::f64::consts::PI).sqrt(),
        v_error: None,
        curves,
        theta,
    })
}

/// Folds observations into a record.
fn summarize(mut rec: EpsRecord, obs: &[Observation]) -> EpsRecord {
    let max = |f: &dyn Fn(&Observation) -> Option<f64>| obs.iter().filter_map(f).reduce(f64::max);
    rec.hausdorff_max = max(&|o| Some(o.hausdorff));
    rec.layer_error_max = max(&|o| Some(o.layer_error));
    rec.graph_ok = Some(obs.iter().all(|o| o.graph_failure.is_none()));
    rec.theta_sup = max(&|o| o.theta_sup);
    rec.transversality_min = obs.iter().map(|o| o.transversality).reduce(f64::min);
    rec.v_error_max = max(&|o| o.v_error);
    rec.radius_final = obs.last().map(|o| o.radius);
    if let Some(o) = obs.iter().find(|o| o.graph_failure.is_some()) {
        rec.diagnostic = format!(
            "graph property at t = {}: {}",
            o.t,
            o.graph_failure.as_deref().unwrap_or("")
        );
    }
    rec
}

fn eps_dir(out: &Path, eps: f64) -> PathBuf {
    out.join(format!("eps_{eps}"))
}

fn write_eps_outputs(
    dir: &Path,
    u: Option<&ScalarField>,
    v: Option<&ScalarField>,
    obs: &[Observation],
    reference: &[Curve],
    eps: f64,
) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let p = |name: &str| dir.join(name);
    if let Some(u) = u {
        io::write_pgm(&p("u_final.pgm"), u).map_err(io_err(&p("u_final.pgm")))?;
    }
    if let Some(v) = v {
        io::write_pgm(&p("v_final.pgm"), v).map_err(io_err(&p("v_final.pgm")))?;
    }
    if let Some(last) = obs.last() {
        io::write_curves(&p("interface_eps.csv"), &last.curves)
            .map_err(io_err(&p("interface_eps.csv")))?;
        io::write_theta(&p("theta.csv"), &last.theta, eps).map_err(io_err(&p("theta.csv")))?;
    }
    io::write_curves(&p("interface_limit.csv"), reference)
        .map_err(io_err(&p("interface_limit.csv")))?;
    let mut text = String::from("t,hausdorff,layer_error,theta_sup,transversality,v_error\n");
    for o in obs {
        let opt = |x: Option<f64>| x.map(|v| format!("{v:.12e}")).unwrap_or_default();
        text.push_str(&format!(
            "{:.12e},{:.12e},{:.12e},{},{:.12e},{}\n",
            o.t,
            o.hausdorff,
            o.layer_error,
            opt(o.theta_sup),
            o.transversality,
            opt(o.v_error)
        ));
    }
    fs::write(p("observers.csv"), text).map_err(io_err(&p("observers.csv")))
}

fn all_observer_times(setup: &Setup) -> Vec<f64> {
    setup
        .cfg
        .eps_list
        .iter()
        .filter_map(|&e| setup.observer_times(e).ok())
        .flatten()
        .collect()
}

/// Allen-Cahn runs for every eps against the limit interface: Hausdorff
/// distance, layer error, normal-graph offsets and transversality at each
/// observer time in `[mu t_eps, T]`. A failing eps is recorded as aborted.
pub fn run_validity_sweep(
    cfg: &ExperimentConfig,
    out: Option<&Path>,
) -> Result<SweepReport, HarnessError> {
    let setup = Setup::new(cfg)?;
    let reference = Reference::build(&setup, &all_observer_times(&setup))?;
    let mut records = Vec::new();
    for &eps in &cfg.eps_list {
        records.push(validity_record(&setup, &reference, eps, out)?);
    }
    let report = SweepReport::assemble(records);
    if let Some(dir) = out {
        write_run_files(dir, &setup, &report)?;
    }
    Ok(report)
}

fn write_run_files(dir: &Path, setup: &Setup, report: &SweepReport) -> Result<(), HarnessError> {
    report.write(dir).map_err(io_err(dir))?;
    let cfg_path = dir.join("config.txt");
    fs::write(&cfg_path, setup.cfg.canonical_text()).map_err(io_err(&cfg_path))
}

fn validity_record(
    setup: &Setup,
    reference: &Reference,
    eps: f64,
    out: Option<&Path>,
) -> Result<EpsRecord, HarnessError> {
    let rec = EpsRecord::new(eps, t_eps(eps, &setup.nl)?, &setup.hash);
    let times = match setup.observer_times(eps) {
        Ok(t) => t,
        Err(e) => return Ok(rec.aborted(e)),
    };
    let geom = setup.geometry(eps)?;
    let u0 = setup.initial_field(&geom)?;
    let mut p = match ACParams::new(
        eps,
        setup.nl.clone(),
        setup.forcing.clone(),
        &geom,
        setup.cfg.dt_safety,
    ) {
        Ok(p) => p,
        Err(e) => return Ok(rec.aborted(e)),
    };
    let mut obs = Vec::new();
    let mut failure: Option<String> = None;
    let run = simulate_ac(&u0, &mut p, setup.cfg.t_end, &times, |t, u| {
        if failure.is_some() {
            return;
        }
        match observe(setup, u, t, eps, &reference.curves_at(t)) {
            Ok(o) => obs.push(o),
            Err(e) => failure = Some(format!("t = {t}: {e}")),
        }
    });
    let u = match (run, failure) {
        (Err(e), _) => return Ok(rec.aborted(e)),
        (_, Some(f)) => return Ok(rec.aborted(f)),
        (Ok(u), None) => u,
    };
    if let (Some(dir), true) = (out, setup.cfg.write_fields) {
        let last = reference.curves_at(setup.cfg.t_end);
        write_eps_outputs(&eps_dir(dir, eps), Some(&u), None, &obs, &last, eps)?;
    }
    Ok(summarize(rec, &obs))
}

/// Whether `|u - a-| <= eta` inside and `|u - a+| <= eta` outside the
/// `c_tube eps` neighbourhood of the reference interface.
fn layer_developed(
    setup: &Setup,
    reference: &Reference,
    u: &ScalarField,
    t: f64,
    eps: f64,
) -> bool {
    let Zeros { minus, plus, .. } = setup.nl.zeros();
    let eta = setup.cfg.eta;
    let tube = setup.cfg.c_tube * eps;
    let g = u.geom;
    let ok = |v: f64, inside: bool| {
        if inside {
            (v - minus).abs() <= eta
        } else {
            (v - plus).abs() <= eta
        }
    };
    if let (Some(r), Reference::Radial { center, .. }) = (reference.radius_at(t), reference) {
        return (0..g.ny).all(|j| {
            (0..g.nx).all(|i| {
                let d = g.node(i, j).dist(*center) - r;
                d.abs() <= tube || ok(u.get(i, j), d < 0.0)
            })
        });
    }
    let curves = reference.curves_at(t);
    let band = DistanceBand::new(g, &curves, tube);
    let mask = inside_mask(&g, &curves);
    (0..g.len()).all(|k| band.foot[k].is_some() && band.dist[k] <= tube || ok(u.values[k], mask[k]))
}

/// First time the layer is fully developed, for every eps: the condition is
/// checked every `t_eps / generation_checks` and the crossing located by
/// bisection, re-simulating from the last check where it failed.
pub fn run_generation_study(
    cfg: &ExperimentConfig,
    out: Option<&Path>,
) -> Result<SweepReport, HarnessError> {
    let setup = Setup::new(cfg)?;
    let mut check_times = Vec::new();
    for &eps in &cfg.eps_list {
        let step = t_eps(eps, &setup.nl)? / cfg.generation_checks as f64;
        let mut k = 1;
        while k as f64 * step <= cfg.t_end {
            check_times.push(k as f64 * step);
            k += 1;
        }
    }
    let reference = Reference::build(&setup, &check_times)?;
    let mut records = Vec::new();
    for &eps in &cfg.eps_list {
        records.push(generation_record(&setup, &reference, eps)?);
    }
    let report = SweepReport::assemble(records);
    if let Some(dir) = out {
        write_run_files(dir, &setup, &report)?;
    }
    Ok(report)
}

fn generation_record(
    setup: &Setup,
    reference: &Reference,
    eps: f64,
) -> Result<EpsRecord, HarnessError> {
    let cfg = &setup.cfg;
    let te = t_eps(eps, &setup.nl)?;
    let mut rec = EpsRecord::new(eps, te, &setup.hash);
    let step = te / cfg.generation_checks as f64;
    let geom = setup.geometry(eps)?;
    let mut u = setup.initial_field(&geom)?;
    let mut p = match ACParams::new(
        eps,
        setup.nl.clone(),
        setup.forcing.clone(),
        &geom,
        cfg.dt_safety,
    ) {
        Ok(p) => p,
        Err(e) => return Ok(rec.aborted(e)),
    };
    let mut k = 1;
    loop {
        let t_check = k as f64 * step;
        if t_check > cfg.t_end {
            rec.status = RecordStatus::Censored;
            rec.diagnostic = format!("layer not developed by t = {}", cfg.t_end);
            return Ok(rec);
        }
        let before = (u.clone(), p.clone());
        u = match simulate_ac(&u, &mut p, t_check, &[], |_, _| {}) {
            Ok(u) => u,
            Err(e) => return Ok(rec.aborted(e)),
        };
        if layer_developed(setup, reference, &u, t_check, eps) {
            if k == 1 {
                rec.generation_time = Some(t_check);
                return Ok(rec);
            }
            let (u_lo, p_lo) = before;
            let (mut lo, mut hi) = (p_lo.t, t_check);
            for _ in 0..cfg.bisection_steps {
                let mid = 0.5 * (lo + hi);
                let mut pm = p_lo.clone();
                let um = match simulate_ac(&u_lo, &mut pm, mid, &[], |_, _| {}) {
                    Ok(um) => um,
                    Err(e) => return Ok(rec.aborted(e)),
                };
                if layer_developed(setup, reference, &um, mid, eps) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            rec.generation_time = Some(hi);
            return Ok(rec);
        }
        k += 1;
    }
}

/// Reaction-diffusion runs against the coupled sharp-interface system.
///
/// The limit is solved once on the finest grid; `v` errors compare each
/// eps-grid node with the bilinear interpolant of the limit `v`.
pub fn run_fhn_sweep(
    cfg: &ExperimentConfig,
    out: Option<&Path>,
) -> Result<SweepReport, HarnessError> {
    let setup = Setup::new(cfg)?;
    let finest = *cfg.eps_list.last().expect("validated nonempty");
    let fine = setup.geometry(finest)?;
    let coupling = cfg.coupling();
    let v0_fine = ScalarField::constant(fine, cfg.v0);
    let mut times = all_observer_times(&setup);
    times.sort_by(f64::total_cmp);
    times.dedup();
    let opts = CurveFlowOptions {
        remesh_every: cfg.remesh_every,
        snapshot_times: times,
    };
    let dt_limit = cfg.dt_safety * fine.h * fine.h / (4.0 * cfg.fhn_diffusion * 1.01);
    let mut limit: Vec<Vec<RdLimitSample>> = Vec::new();
    for c in &setup.initial {
        let c = c.resample(nodes_for(c.length(), fine.h / cfg.rd_limit_density));
        limit.push(evolve_rd_limit(
            &c, &v0_fine, &coupling, &setup.nl, setup.c0, cfg.t_end, dt_limit, &opts,
        )?);
    }
    let limit_at = |t: f64| -> (Vec<Curve>, ScalarField) {
        let k = limit[0]
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1.t - t).abs().total_cmp(&(b.1.t - t).abs()))
            .map(|(k, _)| k)
            .expect("limit has samples");
        (
            limit.iter().map(|s| s[k].curve.clone()).collect(),
            limit[0][k].v.clone(),
        )
    };

    let mut records = Vec::new();
    for &eps in &cfg.eps_list {
        let rec = EpsRecord::new(eps, t_eps(eps, &setup.nl)?, &setup.hash);
        let times = match setup.observer_times(eps) {
            Ok(t) => t,
            Err(e) => {
                records.push(rec.aborted(e));
                continue;
            }
        };
        let geom = setup.geometry(eps)?;
        let u0 = setup.initial_field(&geom)?;
        let bound = 2.0
            * setup
                .nl
                .zeros()
                .minus
                .abs()
                .max(setup.nl.zeros().plus.abs());
        let state = RDState::new(
            u0,
            ScalarField::constant(geom, cfg.v0),
            setup.nl.clone(),
            coupling.clone(),
        )
        .and_then(|s| s.with_rectangle(bound));
        let mut state = match state {
            Ok(s) => s,
            Err(e) => {
                records.push(rec.aborted(e));
                continue;
            }
        };
        let dt = cfg.dt_safety * rd_stability_bound(geom.h, eps, &setup.nl, coupling.diffusion());
        let mut obs = Vec::new();
        let mut failure: Option<String> = None;
        let run = simulate_rd(&mut state, eps, dt, cfg.t_end, &times, |t, s| {
            if failure.is_some() {
                return;
            }
            let (curves, v_lim) = limit_at(t);
            match observe(&setup, &s.u, t, eps, &curves) {
                Ok(mut o) => {
                    let mut worst: f64 = 0.0;
                    for j in 0..geom.ny {
                        for i in 0..geom.nx {
                            let lim = v_lim.bilinear(geom.node(i, j)).unwrap_or(f64::NAN);
                            worst = worst.max((s.v.get(i, j) - lim).abs());
                        }
                    }
                    o.v_error = Some(worst);
                    obs.push(o);
                }
                Err(e) => failure = Some(format!("t = {t}: {e}")),
            }
        });
        match (run, failure) {
            (Err(e), _) => records.push(rec.aborted(e)),
            (_, Some(f)) => records.push(rec.aborted(f)),
            (Ok(()), None) => {
                if let (Some(dir), true) = (out, cfg.write_fields) {
                    let (last, _) = limit_at(cfg.t_end);
                    write_eps_outputs(
                        &eps_dir(dir, eps),
                        Some(&state.u),
                        Some(&state.v),
                        &obs,
                        &last,
                        eps,
                    )?;
                }
                records.push(summarize(rec, &obs));
            }
        }
    }
    let report = SweepReport::assemble(records);
    if let Some(dir) = out {
        write_run_files(dir, &setup, &report)?;
    }
    Ok(report)
}

/// `profile.csv`: the layer profile on its sample grid.
pub fn write_profile(cfg: &ExperimentConfig, out: &Path) -> Result<(), HarnessError> {
    cfg.validate()?;
    let profile = solve_profile(&cfg.nonlinearity()?, cfg.profile_z_max, cfg.profile_samples)?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let path = out.join("profile.csv");
    let rows = profile
        .z_samples()
        .into_iter()
        .zip(profile.u_samples().iter().copied());
    io::write_columns(&path, "z,u", rows).map_err(io_err(&path))
}

/// Allen-Cahn runs without a reference: a PGM of `u` at every observer time
/// and `observers.csv` with energy, extrema and the level-set radius.
pub fn run_simulation(cfg: &ExperimentConfig, out: &Path) -> Result<SweepReport, HarnessError> {
    let setup = Setup::new(cfg)?;
    let mut records = Vec::new();
    for &eps in &cfg.eps_list {
        let rec = EpsRecord::new(eps, t_eps(eps, &setup.nl)?, &setup.hash);
        let times: Vec<f64> = (1..=cfg.observers)
            .map(|k| cfg.t_end * k as f64 / cfg.observers as f64)
            .collect();
        let geom = setup.geometry(eps)?;
        let u0 = setup.initial_field(&geom)?;
        let mut p = match ACParams::new(
            eps,
            setup.nl.clone(),
            setup.forcing.clone(),
            &geom,
            cfg.dt_safety,
        ) {
            Ok(p) => p,
            Err(e) => {
                records.push(rec.aborted(e));
                continue;
            }
        };
        let dir = eps_dir(out, eps);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let mut rows = String::from("t,energy,min,max,radius\n");
        let mut failure: Option<HarnessError> = None;
        let mut radius = None;
        let level = setup.nl.zeros().mid;
        let mut k = 0;
        let run = simulate_ac(&u0, &mut p, cfg.t_end, &times, |t, u| {
            if failure.is_some() {
                return;
            }
            let area: f64 = extract_level_set(u, level)
                .map(|c| c.iter().map(Curve::signed_area).sum())
                .unwrap_or(0.0);
            let r = (area.max(0.0) / std::f64::consts::PI).sqrt();
            radius = Some(r);
            rows.push_str(&format!(
                "{t:.12e},{:.12e},{:.12e},{:.12e},{r:.12e}\n",
                crate::pde::energy(u, eps, &setup.nl),
                u.min(),
                u.max()
            ));
            if cfg.write_fields {
                let path = dir.join(format!("u_{k:03}.pgm"));
                if let Err(e) = io::write_pgm(&path, u) {
                    failure = Some(HarnessError::Io { path, source: e });
                }
            }
            k += 1;
        });
        if let Some(e) = failure {
            return Err(e);
        }
        let path = dir.join("observers.csv");
        fs::write(&path, rows).map_err(io_err(&path))?;
        match run {
            Ok(_) => {
                let mut rec = rec;
                rec.radius_final = radius;
                records.push(rec);
            }
            Err(e) => records.push(rec.aborted(e)),
        }
    }
    let report = SweepReport::assemble(records);
    write_run_files(out, &setup, &report)?;
    Ok(report)
}

/// The sharp-interface flow alone: `radius.csv` for a radial set-up, and the
/// curve at `observers` evenly spaced times with an index in `times.csv`.
pub fn run_limit(cfg: &ExperimentConfig, out: &Path) -> Result<(), HarnessError> {
    let setup = Setup::new(cfg)?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let times: Vec<f64> = (0..=cfg.observers)
        .map(|k| cfg.t_end * k as f64 / cfg.observers as f64)
        .collect();
    let snapshots: Vec<(f64, Vec<Curve>)> = if setup.radial {
        let tr = evolve_radial(
            cfg.r0,
            cfg.dimension,
            &setup.limit_forcing,
            cfg.t_end,
            cfg.limit_dt,
        )?;
        let path = out.join("radius.csv");
        io::write_columns(
            &path,
            "t,r",
            tr.times.iter().copied().zip(tr.radii.iter().copied()),
        )
        .map_err(io_err(&path))?;
        let reference = Reference::Radial {
            trajectory: tr,
            center: setup.center(),
            spacing: cfg.eps_list.last().copied().unwrap_or(0.01)
                / cfg.grid_ratio
                / cfg.limit_density,
        };
        times.iter().map(|&t| (t, reference.curves_at(t))).collect()
    } else {
        match Reference::build(&setup, &times)? {
            Reference::Tracked(s) => s,
            Reference::Radial { .. } => unreachable!("set-up is not radial"),
        }
    };
    let mut index = String::from("k,t\n");
    for (k, (t, curves)) in snapshots.iter().enumerate() {
        let path = out.join(format!("curve_{k:03}.csv"));
        io::write_curves(&path, curves).map_err(io_err(&path))?;
        index.push_str(&format!("{k},{t:.12e}\n"));
    }
    let path = out.join("times.csv");
    fs::write(&path, index).map_err(io_err(&path))?;
    let cfg_path = out.join("config.txt");
    fs::write(&cfg_path, cfg.canonical_text()).map_err(io_err(&cfg_path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::make_cubic;

    #[test]
    fn t_eps_examples() {
        let nl = make_cubic();
        assert!((t_eps(0.05, &nl).unwrap() - 0.0025 * 20f64.ln()).abs() < 1e-15);
        assert!((t_eps(0.05, &nl).unwrap() - 0.007489).abs() < 1e-6);
        let e = (-1.0f64).exp();
        assert!((t_eps(e, &nl).unwrap() - e * e).abs() < 1e-15);
        assert!(t_eps(1.0, &nl).is_err());
        assert!(t_eps(0.0, &nl).is_err());
        let ratios: Vec<f64> = (1..=40)
            .map(|k| 0.2 * k as f64 / 40.0)
            .map(|e| t_eps(e, &nl).unwrap() / e)
            .collect();
        assert!(ratios.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn t_eps_uses_slope_at_middle_zero() {
        let nl = BistableNonlinearity::from_zeros(2.0, (-1.0, 0.0, 1.0)).unwrap();
        assert!((t_eps(0.1, &nl).unwrap() - 0.01 * 10f64.ln() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn fit_examples() {
        let f = fit_order(&[(0.1, 0.05), (0.05, 0.025), (0.025, 0.0125)]).unwrap();
        assert!((f.order - 1.0).abs() < 1e-12);
        assert!((f.constant - 0.5).abs() < 1e-12);
        assert!(f.residual < 1e-12);
        let q = fit_order(&[(0.1, 0.01), (0.05, 0.0025)]).unwrap();
        assert!((q.order - 2.0).abs() < 1e-12);
        assert!(fit_order(&[(0.1, 0.01)]).is_err());
        assert!(matches!(
            fit_order(&[(0.1, 0.01), (0.05, 0.0)]),
            Err(HarnessError::NonPositive { index: 1, .. })
        ));
    }

    #[test]
    fn fit_sensitivity_to_one_perturbed_value() {
        let base = [(0.1, 0.05), (0.05, 0.025), (0.025, 0.0125)];
        // OLS slope weights are (x_i - mean x) / Sxx; the largest |weight| is
        // 1 / (2 ln 2) at the end points, so a 5% change moves p by at most
        // ln(1.05) / (2 ln 2) ~ 0.0352
        let bound = 1.05f64.ln() / (2.0 * 2f64.ln());
        for k in 0..3 {
            for factor in [1.05, 1.0 / 1.05] {
                let mut pairs = base;
                pairs[k].1 *= factor;
                let dp = (fit_order(&pairs).unwrap().order - 1.0).abs();
                assert!(dp <= bound + 1e-12 && dp <= 0.08, "k = {k}: {dp}");
            }
        }
    }

    #[test]
    fn developed_layer_is_detected_at_first_check() {
        let eps = 0.05;
        // tanh(s d) with s = 1 / (sqrt 2 eps) is the layer profile itself
        let cfg = ExperimentConfig {
            eps_list: vec![eps],
            steepness: 1.0 / (2f64.sqrt() * eps),
            t_end: 0.01,
            write_fields: false,
            ..ExperimentConfig::default()
        };
        let rep = run_generation_study(&cfg, None).unwrap();
        let rec = &rep.records[0];
        let first = t_eps(eps, &make_cubic()).unwrap() / cfg.generation_checks as f64;
        assert_eq!(rec.status, RecordStatus::Ok);
        assert_eq!(rec.generation_time, Some(first));
    }
}
