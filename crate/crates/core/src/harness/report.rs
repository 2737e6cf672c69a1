//! Per-eps measurement records and their CSV form.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use super::{fit_order, Fit};

/// Column order of `report.csv`.
pub const COLUMNS: &[&str] = &[
    "eps",
    "t_eps",
    "status",
    "hausdorff_max",
    "layer_error_max",
    "theta_sup",
    "generation_time",
    "generation_ratio",
    "graph_ok",
    "transversality_min",
    "v_error_max",
    "radius_final",
    "config_hash",
    "diagnostic",
];

#[derive(Debug, Clone, PartialEq)]
pub enum RecordStatus {
    Ok,
    /// The generation condition never held before the end time.
    Censored,
    Aborted,
}

impl RecordStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RecordStatus::Ok => "ok",
            RecordStatus::Censored => "censored",
            RecordStatus::Aborted => "aborted",
        }
    }
}

/// Measurements for one `eps`. Quantities a run does not produce stay `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsRecord {
    pub eps: f64,
    pub t_eps: f64,
    pub status: RecordStatus,
    pub hausdorff_max: Option<f64>,
    pub layer_error_max: Option<f64>,
    pub theta_sup: Option<f64>,
    pub generation_time: Option<f64>,
    pub graph_ok: Option<bool>,
    pub transversality_min: Option<f64>,
    pub v_error_max: Option<f64>,
    /// `sqrt(area / pi)` of the computed level set at the last observer.
    pub radius_final: Option<f64>,
    pub config_hash: String,
    pub diagnostic: String,
}

impl EpsRecord {
    pub fn new(eps: f64, t_eps: f64, config_hash: &str) -> Self {
        EpsRecord {
            eps,
            t_eps,
            status: RecordStatus::Ok,
            hausdorff_max: None,
            layer_error_max: None,
            theta_sup: None,
            generation_time: None,
            graph_ok: None,
            transversality_min: None,
            v_error_max: None,
            radius_final: None,
            config_hash: config_hash.to_string(),
            diagnostic: String::new(),
        }
    }

    pub fn aborted(mut self, why: impl std::fmt::Display) -> Self {
        self.status = RecordStatus::Aborted;
        self.diagnostic = why.to_string();
        self
    }

    pub fn is_ok(&self) -> bool {
        self.status == RecordStatus::Ok
    }

    /// `tau / (eps^2 |ln eps|)`.
    pub fn generation_ratio(&self) -> Option<f64> {
        self.generation_time
            .map(|t| t / (self.eps * self.eps * self.eps.ln().abs()))
    }

    fn csv_row(&self) -> String {
        let num = |x: Option<f64>| x.map(|v| format!("{v:.12e}")).unwrap_or_default();
        let diag = self.diagnostic.replace(['"', '\n', ','], " ");
        [
            format!("{:.12e}", self.eps),
            format!("{:.12e}", self.t_eps),
            self.status.as_str().to_string(),
            num(self.hausdorff_max),
            num(self.layer_error_max),
            num(self.theta_sup),
            num(self.generation_time),
            num(self.generation_ratio()),
            self.graph_ok.map(|b| b.to_string()).unwrap_or_default(),
            num(self.transversality_min),
            num(self.v_error_max),
            num(self.radius_final),
            self.config_hash.clone(),
            diag,
        ]
        .join(",")
    }
}

type Getter = fn(&EpsRecord) -> Option<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    /// Sorted by decreasing `eps`.
    pub records: Vec<EpsRecord>,
    pub fits: Vec<(String, Fit)>,
}

impl SweepReport {
    /// Sorts the records and fits every quantity with at least two usable
    /// (`ok`, positive) values.
    pub fn assemble(mut records: Vec<EpsRecord>) -> Self {
        records.sort_by(|a, b| b.eps.total_cmp(&a.eps));
        let quantities: [(&str, Getter); 6] = [
            ("hausdorff_max", |r| r.hausdorff_max),
            ("layer_error_max", |r| r.layer_error_max),
            ("theta_sup", |r| r.theta_sup),
            ("generation_time", |r| r.generation_time),
            ("transversality_min", |r| r.transversality_min),
            ("v_error_max", |r| r.v_error_max),
        ];
        let mut fits = Vec::new();
        for (name, get) in quantities {
            let pairs: Vec<(f64, f64)> = records
                .iter()
                .filter(|r| r.is_ok())
                .filter_map(|r| get(r).map(|v| (r.eps, v)))
                .collect();
            if pairs.len() >= 2 && pairs.iter().all(|p| p.1 > 0.0) {
                if let Ok(f) = fit_order(&pairs) {
                    fits.push((name.to_string(), f));
                }
            }
        }
        SweepReport { records, fits }
    }

    pub fn any_aborted(&self) -> bool {
        self.records
            .iter()
            .any(|r| r.status == RecordStatus::Aborted)
    }

    pub fn record(&self, eps: f64) -> Option<&EpsRecord> {
        self.records.iter().find(|r| r.eps == eps)
    }

    pub fn fit(&self, quantity: &str) -> Option<&Fit> {
        self.fits
            .iter()
            .find(|(n, _)| n == quantity)
            .map(|(_, f)| f)
    }

    pub fn csv(&self) -> String {
        let mut s = COLUMNS.join(",");
        s.push('\n');
        for r in &self.records {
            s.push_str(&r.csv_row());
            s.push('\n');
        }
        s
    }

    pub fn fit_text(&self) -> String {
        let mut s = String::from("quantity order constant residual\n");
        for (name, f) in &self.fits {
            let _ = writeln!(
                s,
                "{name} {:.6} {:.6e} {:.3e}",
                f.order, f.constant, f.residual
            );
        }
        s
    }

    /// `report.csv` and `fit.txt`.
    pub fn write(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.csv"), self.csv())?;
        fs::write(dir.join("fit.txt"), self.fit_text())
    }
}
