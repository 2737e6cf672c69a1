//! End-to-end acceptance criteria. Prints one line per criterion and exits
//! non-zero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use layerlab::geom::Point;
use layerlab::grid::{GridGeometry, ScalarField};
use layerlab::harness::{
    fit_order, run_fhn_sweep, run_generation_study, run_validity_sweep, ExperimentConfig,
    ForcingSpec, SweepReport,
};
use layerlab::interface::{extract_level_set, hausdorff, Curve};
use layerlab::nonlinearity::{make_cubic, mobility_constant, Forcing, SystemCoupling};
use layerlab::pde::{
    energy, radial_initial_data, rd_stability_bound, simulate_ac, simulate_rd, ACParams, RDState,
};
use layerlab::profile::solve_profile;
use layerlab::sharp::{evolve_curve, evolve_radial, CurveFlowOptions, LimitForcing};

type Outcome = Result<String, String>;
type Criterion = fn() -> Outcome;

fn ensure(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn strictly_decreasing_in_eps(values: &[f64]) -> bool {
    // records come sorted by decreasing eps
    values.windows(2).all(|w| w[1] < w[0])
}

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let took = start.elapsed();
    if took <= limit {
        Ok(())
    } else {
        Err(format!("took {took:.1?}, limit {limit:?}"))
    }
}

fn base_config() -> ExperimentConfig {
    ExperimentConfig {
        write_fields: false,
        ..ExperimentConfig::default()
    }
}

fn radial_sweep() -> &'static SweepReport {
    static REPORT: OnceLock<SweepReport> = OnceLock::new();
    REPORT.get_or_init(|| run_validity_sweep(&base_config(), None).expect("radial sweep runs"))
}

fn values(
    report: &SweepReport,
    get: impl Fn(&layerlab::harness::EpsRecord) -> Option<f64>,
) -> Result<Vec<f64>, String> {
    report
        .records
        .iter()
        .map(|r| {
            if r.is_ok() {
                get(r).ok_or(format!("eps = {}: missing value", r.eps))
            } else {
                Err(format!("eps = {}: {}", r.eps, r.diagnostic))
            }
        })
        .collect()
}

fn sci(xs: &[f64]) -> String {
    format!(
        "[{}]",
        xs.iter()
            .map(|x| format!("{x:.3e}"))
            .collect::<Vec<_>>()
            .join(", ")
    )
}

fn ratio_spread(xs: &[f64]) -> f64 {
    xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        / xs.iter().cloned().fold(f64::INFINITY, f64::min)
}

fn mobility() -> Outcome {
    let start = Instant::now();
    let c0 = mobility_constant(&make_cubic(), 256).map_err(|e| e.to_string())?;
    let want = 3.0 / (2.0 * 2f64.sqrt());
    within(Duration::from_secs(1), start)?;
    ensure(
        (c0 - want).abs() <= 1e-8,
        format!("c0 = {c0:.12}, closed form {want:.12}"),
    )
}

fn profile() -> Outcome {
    let start = Instant::now();
    let p = solve_profile(&make_cubic(), 10.0, 4000).map_err(|e| e.to_string())?;
    let worst = (-8000..=8000)
        .map(|k| k as f64 * 1e-3)
        .map(|z| (p.evaluate(z) - (z / 2f64.sqrt()).tanh()).abs())
        .fold(0.0, f64::max);
    within(Duration::from_secs(1), start)?;
    ensure(
        worst <= 1e-6,
        format!("sup |U0 - tanh| on |z| <= 8 = {worst:.3e}"),
    )
}

fn radial_limit() -> Outcome {
    let start = Instant::now();
    let tr = evolve_radial(0.5, 2, &LimitForcing::zero(), 0.05, 1e-5).map_err(|e| e.to_string())?;
    let exact = (0.25f64 - 0.1).sqrt();
    let rel = (tr.final_radius() - exact).abs() / exact;
    within(Duration::from_secs(1), start)?;
    ensure(rel <= 1e-8, format!("relative radius error {rel:.3e}"))
}

fn curve_flow() -> Outcome {
    let start = Instant::now();
    let c = Curve::circle(Point::ORIGIN, 0.5, 256);
    let seg = c
        .segments()
        .map(|(a, b)| a.dist(b))
        .fold(f64::INFINITY, f64::min);
    let tr = evolve_curve(
        &c,
        &LimitForcing::zero(),
        0.05,
        0.2 * seg * seg,
        &CurveFlowOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let exact = 0.15f64.sqrt();
    let end = tr.final_curve();
    let radius_err = end
        .points
        .iter()
        .map(|p| (p.norm() - exact).abs())
        .fold(0.0, f64::max);
    let rate = (c.signed_area() - end.signed_area()) / 0.05;
    let two_pi = 2.0 * std::f64::consts::PI;
    within(Duration::from_secs(30), start)?;
    ensure(
        radius_err <= 1e-3 && (rate - two_pi).abs() <= 0.01 * two_pi,
        format!("max node radius error {radius_err:.3e}, area decay rate {rate:.5} (2 pi = {two_pi:.5})"),
    )
}

fn thickness() -> Outcome {
    let start = Instant::now();
    let rep = radial_sweep();
    let d = values(rep, |r| r.hausdorff_max)?;
    let scaled: Vec<f64> = rep.records.iter().zip(&d).map(|(r, d)| d / r.eps).collect();
    let spread = ratio_spread(&scaled);
    within(Duration::from_secs(600), start)?;
    ensure(
        strictly_decreasing_in_eps(&d) && spread <= 3.0,
        format!(
            "hausdorff_max {d_}, hausdorff_max/eps {scaled_}, max/min {spread:.2} (bar 3)",
            d_ = sci(&d),
            scaled_ = sci(&scaled)
        ),
    )
}

fn profile_validity() -> Outcome {
    let rep = radial_sweep();
    let e = values(rep, |r| r.layer_error_max)?;
    let factor = e[0] / e[e.len() - 1];
    ensure(
        strictly_decreasing_in_eps(&e) && factor >= 2.0,
        format!("layer_error_max {e_}, reduction {factor:.1}", e_ = sci(&e)),
    )
}

fn graph_property() -> Outcome {
    let rep = radial_sweep();
    let graph = rep
        .records
        .iter()
        .all(|r| r.is_ok() && r.graph_ok == Some(true));
    let trans = values(rep, |r| r.transversality_min)?;
    let theta = values(rep, |r| r.theta_sup)?;
    let growth = theta.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
    ensure(
        graph && trans.iter().all(|&t| t > 0.0) && growth <= 1.5,
        format!("graph ok {graph}, transversality_min {trans_}, theta_sup {theta_}, worst growth {growth:.2}", trans_ = sci(&trans), theta_ = sci(&theta)),
    )
}

fn generation() -> Outcome {
    let start = Instant::now();
    let cfg = ExperimentConfig {
        steepness: 0.1,
        eta: 0.1,
        c_tube: 6.0,
        ..base_config()
    };
    let rep = run_generation_study(&cfg, None).map_err(|e| e.to_string())?;
    let tau = values(&rep, |r| r.generation_time)?;
    let ratios = values(&rep, |r| r.generation_ratio())?;
    let pairs: Vec<(f64, f64)> = rep
        .records
        .iter()
        .zip(&tau)
        .map(|(r, t)| (r.eps, *t))
        .collect();
    let p = fit_order(&pairs).map_err(|e| e.to_string())?.order;
    let spread = ratio_spread(&ratios);
    within(Duration::from_secs(300), start)?;
    ensure(
        spread <= 1.5 && (1.7..=2.3).contains(&p) && strictly_decreasing_in_eps(&tau),
        format!(
            "tau {tau_}, tau/(eps^2 |ln eps|) {ratios:.3?}, max/min {spread:.3}, order {p:.3}",
            tau_ = sci(&tau)
        ),
    )
}

fn forced_motion() -> Outcome {
    let delta = 0.2;
    let nl = make_cubic();
    let c0 = mobility_constant(&nl, 256).map_err(|e| e.to_string())?;
    let forced = LimitForcing::from_allen_cahn(&Forcing::Constant { delta }, &nl, c0);
    let push = forced.evaluate_radial(0.3, 0.0);
    let cfg = ExperimentConfig {
        forcing: ForcingSpec::Constant(delta),
        ..base_config()
    };
    let rep = run_validity_sweep(&cfg, None).map_err(|e| e.to_string())?;
    let d = values(&rep, |r| r.hausdorff_max)?;
    let scaled: Vec<f64> = rep.records.iter().zip(&d).map(|(r, d)| d / r.eps).collect();
    let spread = ratio_spread(&scaled);
    let r_forced = values(&rep, |r| r.radius_final)?;
    let r_free = values(radial_sweep(), |r| r.radius_final)?;
    let sim_order = r_forced.iter().zip(&r_free).all(|(a, b)| a > b);
    let t = cfg.t_end;
    let lim_forced = evolve_radial(cfg.r0, 2, &forced, t, cfg.limit_dt)
        .map_err(|e| e.to_string())?
        .final_radius();
    let lim_free = evolve_radial(cfg.r0, 2, &LimitForcing::zero(), t, cfg.limit_dt)
        .map_err(|e| e.to_string())?
        .final_radius();
    ensure(
        (push - 3.0 * delta / 2f64.sqrt()).abs() <= 1e-10
            && strictly_decreasing_in_eps(&d)
            && spread <= 3.0
            && sim_order
            && lim_forced > lim_free,
        format!(
            "limit forcing {push:.6}, hausdorff_max {d_}, hausdorff_max/eps {scaled_}, max/min {spread:.2} (bar 3), \
             R(T) forced {r_forced:.4?} vs free {r_free:.4?}, limit {lim_forced:.4} vs {lim_free:.4}", d_ = sci(&d), scaled_ = sci(&scaled)),
    )
}

fn fhn() -> Outcome {
    let start = Instant::now();
    let decoupled = ExperimentConfig {
        fhn_alpha: 0.0,
        fhn_beta: 0.0,
        fhn_f1: Vec::new(),
        v0: 0.0,
        ..base_config()
    };
    let dec = run_fhn_sweep(&decoupled, None).map_err(|e| e.to_string())?;
    let mine = values(&dec, |r| r.layer_error_max)?;
    let theirs = values(radial_sweep(), |r| r.layer_error_max)?;
    let gap = mine
        .iter()
        .zip(&theirs)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let coupled = ExperimentConfig {
        eps_list: vec![0.08, 0.04],
        v0: 0.1,
        ..base_config()
    };
    let rep = run_fhn_sweep(&coupled, None).map_err(|e| e.to_string())?;
    let layer = values(&rep, |r| r.layer_error_max)?;
    let v_err = values(&rep, |r| r.v_error_max)?;
    within(Duration::from_secs(600), start)?;
    ensure(
        gap <= 1e-10 && strictly_decreasing_in_eps(&layer) && strictly_decreasing_in_eps(&v_err),
        format!("decoupled layer_error gap {gap:.1e}, coupled layer_error_max {layer_}, sup|v - v_limit| {v_err_}", layer_ = sci(&layer), v_err_ = sci(&v_err)),
    )
}

fn structural() -> Outcome {
    let start = Instant::now();
    let nl = make_cubic();
    let g = GridGeometry::from_box(Point::new(-1.0, -1.0), Point::new(1.0, 1.0), 0.025).unwrap();
    let eps = 0.2;
    let u0 = radial_initial_data(&g, 0.5, 3.0, &nl).map_err(|e| e.to_string())?;

    let mut p =
        ACParams::new(eps, nl.clone(), Forcing::Zero, &g, 0.9).map_err(|e| e.to_string())?;
    let times: Vec<f64> = (1..=40).map(|k| 0.001 * k as f64).collect();
    let mut bounded = true;
    let mut energies = vec![energy(&u0, eps, &nl)];
    simulate_ac(&u0, &mut p, 0.04, &times, |_, u| {
        bounded &= u.values.iter().all(|v| (-1.0..=1.0).contains(v));
        energies.push(energy(u, eps, &nl));
    })
    .map_err(|e| e.to_string())?;
    let monotone = energies.windows(2).all(|w| w[0] - w[1] >= -1e-12);

    let coupling = SystemCoupling::fhn(1.0, 1.0, 1.0, vec![]);
    let mut s = RDState::new(
        u0.clone(),
        ScalarField::constant(g, 0.1),
        nl.clone(),
        coupling,
    )
    .and_then(|s| s.with_rectangle(2.0))
    .map_err(|e| e.to_string())?;
    let m1 = s.rectangle.map(|r| r.m1).unwrap_or(f64::NAN);
    let dt = 0.9 * rd_stability_bound(g.h, eps, &nl, 1.0);
    let rect = simulate_rd(&mut s, eps, dt, 0.1, &[], |_, _| {}).is_ok()
        && s.u.values.iter().all(|u| u.abs() <= 2.0)
        && s.v.values.iter().all(|v| v.abs() <= m1);

    let f = ScalarField::from_fn(g, |q| {
        (q.x - 0.1).powi(2) + 2.0 * (q.y + 0.05).powi(2) + 0.3 * q.x * q.y
    });
    let level = 0.2;
    let curves = extract_level_set(&f, level).map_err(|e| e.to_string())?;
    let residual = curves
        .iter()
        .flat_map(|c| c.points.iter())
        .map(|&q| (f.bilinear(q).unwrap_or(f64::NAN) - level).abs())
        .fold(0.0, f64::max);

    let a = Curve::circle(Point::ORIGIN, 0.3, 97);
    let b = Curve::ellipse(Point::new(0.05, -0.02), 0.35, 0.25, 60);
    let symmetric = hausdorff(&a, &b) == hausdorff(&b, &a);

    within(Duration::from_secs(60), start)?;
    ensure(
        bounded && monotone && rect && residual <= 1e-10 && !curves.is_empty() && symmetric,
        format!(
            "maximum principle {bounded}, energy monotone {monotone}, invariant rectangle {rect}, \
             vertex residual {residual:.1e}, hausdorff symmetric {symmetric}"
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 11] = [
        ("mobility constant oracle", mobility),
        ("profile oracle", profile),
        ("radial limit oracle", radial_limit),
        ("curve-flow oracle", curve_flow),
        ("thickness estimate", thickness),
        ("profile validity", profile_validity),
        ("graph property and theta", graph_property),
        ("generation time", generation),
        ("forced motion sign convention", forced_motion),
        ("reaction-diffusion reduction and validity", fhn),
        ("structural invariants", structural),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or(e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let took = start.elapsed();
        match outcome {
            Ok(msg) => println!("criterion {:2} PASS  {name} [{took:.1?}]: {msg}", k + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {:2} FAIL  {name} [{took:.1?}]: {msg}", k + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
