//! Plain-text and image outputs.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use crate::geom::Point;
use crate::grid::ScalarField;
use crate::interface::{Curve, GraphSample};

/// 16-bit binary PGM, top row = largest `y`, scaled linearly from the field
/// minimum to its maximum. The range goes to `<path>.range` as `min max`.
pub fn write_pgm(path: &Path, f: &ScalarField) -> io::Result<()> {
    let (lo, hi) = (f.min(), f.max());
    let span = if hi > lo { hi - lo } else { 1.0 };
    let g = f.geom;
    let mut buf = format!("P5\n{} {}\n65535\n", g.nx, g.ny).into_bytes();
    buf.reserve(2 * g.len());
    for j in (0..g.ny).rev() {
        for &v in f.row(j) {
            let q = (((v - lo) / span) * 65535.0).round().clamp(0.0, 65535.0) as u16;
            buf.extend_from_slice(&q.to_be_bytes());
        }
    }
    fs::write(path, buf)?;
    let mut range = path.as_os_str().to_owned();
    range.push(".range");
    fs::write(range, format!("{lo:.17e} {hi:.17e}\n"))
}

/// `x,y` rows, one blank line between components.
pub fn write_curves(path: &Path, curves: &[Curve]) -> io::Result<()> {
    let mut out = io::BufWriter::new(fs::File::create(path)?);
    writeln!(out, "x,y")?;
    for (k, c) in curves.iter().enumerate() {
        if k > 0 {
            writeln!(out)?;
        }
        for p in &c.points {
            writeln!(out, "{:.12e},{:.12e}", p.x, p.y)?;
        }
    }
    out.flush()
}

/// Reads what [`write_curves`] writes; every component is taken as closed.
pub fn read_curves(path: &Path) -> io::Result<Vec<Curve>> {
    let text = fs::read_to_string(path)?;
    let mut curves = Vec::new();
    let mut pts = Vec::new();
    let bad = |line: usize, msg: &str| {
        io::Error::new(io::ErrorKind::InvalidData, format!("line {line}: {msg}"))
    };
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if n == 0 && line.starts_with('x') {
            continue;
        }
        if line.is_empty() {
            if !pts.is_empty() {
                curves.push(Curve {
                    points: std::mem::take(&mut pts),
                    closed: true,
                });
            }
            continue;
        }
        let (x, y) = line
            .split_once(',')
            .ok_or_else(|| bad(n + 1, "expected x,y"))?;
        let x: f64 = x.trim().parse().map_err(|_| bad(n + 1, "bad x"))?;
        let y: f64 = y.trim().parse().map_err(|_| bad(n + 1, "bad y"))?;
        pts.push(Point::new(x, y));
    }
    if !pts.is_empty() {
        curves.push(Curve {
            points: pts,
            closed: true,
        });
    }
    Ok(curves)
}

/// `arclength,theta` along the reference curve.
pub fn write_theta(path: &Path, samples: &[GraphSample], eps: f64) -> io::Result<()> {
    let mut out = io::BufWriter::new(fs::File::create(path)?);
    writeln!(out, "arclength,theta")?;
    let mut s = 0.0;
    for (k, g) in samples.iter().enumerate() {
        if k > 0 {
            s += g.point.dist(samples[k - 1].point);
        }
        writeln!(out, "{:.12e},{:.12e}", s, g.s / eps)?;
    }
    out.flush()
}

/// Two-column CSV with a header.
pub fn write_columns(
    path: &Path,
    header: &str,
    rows: impl IntoIterator<Item = (f64, f64)>,
) -> io::Result<()> {
    let mut out = io::BufWriter::new(fs::File::create(path)?);
    writeln!(out, "{header}")?;
    for (a, b) in rows {
        writeln!(out, "{a:.12e},{b:.12e}")?;
    }
    out.flush()
}
