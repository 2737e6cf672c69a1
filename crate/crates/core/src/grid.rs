//! Uniform 2-D node grids over a rectangle and scalar fields on them.

use thiserror::Error;

use crate::geom::Point;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid needs at least 3x3 nodes, got {0}x{1}")]
    TooSmall(usize, usize),
    #[error("spacing must be positive and finite, got {0}")]
    BadSpacing(f64),
    #[error("box side {side} is not an integer multiple of h = {h}")]
    Incommensurate { side: f64, h: f64 },
    #[error("field has {got} values, geometry needs {want}")]
    LengthMismatch { got: usize, want: usize },
    #[error("non-finite value at node ({0}, {1})")]
    NonFinite(usize, usize),
}

/// Node-centred grid: node `(i, j)` sits at `origin + h (i, j)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridGeometry {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub origin: Point,
}

impl GridGeometry {
    pub fn new(nx: usize, ny: usize, h: f64, origin: Point) -> Result<Self, GridError> {
        if nx < 3 || ny < 3 {
            return Err(GridError::TooSmall(nx, ny));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(GridError::BadSpacing(h));
        }
        Ok(GridGeometry { nx, ny, h, origin })
    }

    /// Grid covering `[lo, hi]` with spacing as close to `h` as the box
    /// allows; the box sides must be integer multiples of `h` up to 1e-9
    /// relative.
    pub fn from_box(lo: Point, hi: Point, h: f64) -> Result<Self, GridError> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(GridError::BadSpacing(h));
        }
        let cells = |side: f64| -> Result<usize, GridError> {
            let n = side / h;
            let r = n.round();
            if r < 2.0 || (n - r).abs() > 1e-9 * r {
                return Err(GridError::Incommensurate { side, h });
            }
            Ok(r as usize)
        };
        let cx = cells(hi.x - lo.x)?;
        let cy = cells(hi.y - lo.y)?;
        let h_exact = (hi.x - lo.x) / cx as f64;
        let g = GridGeometry::new(cx + 1, cy + 1, h_exact, lo)?;
        if ((hi.y - lo.y) - h_exact * cy as f64).abs() > 1e-12 {
            return Err(GridError::Incommensurate {
                side: hi.y - lo.y,
                h,
            });
        }
        Ok(g)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.origin.x + self.h * i as f64
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        self.origin.y + self.h * j as f64
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> Point {
        Point::new(self.x(i), self.y(j))
    }

    pub fn upper(&self) -> Point {
        self.node(self.nx - 1, self.ny - 1)
    }

    pub fn center(&self) -> Point {
        let hi = self.upper();
        Point::new(0.5 * (self.origin.x + hi.x), 0.5 * (self.origin.y + hi.y))
    }

    pub fn area(&self) -> f64 {
        self.h * (self.nx - 1) as f64 * self.h * (self.ny - 1) as f64
    }

    /// Distance from `p` to the nearest side of the box (negative outside).
    pub fn distance_to_boundary(&self, p: Point) -> f64 {
        let hi = self.upper();
        (p.x - self.origin.x)
            .min(hi.x - p.x)
            .min(p.y - self.origin.y)
            .min(hi.y - p.y)
    }
}

/// Node values on a [`GridGeometry`], stored row-major (x fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub geom: GridGeometry,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(geom: GridGeometry, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != geom.len() {
            return Err(GridError::LengthMismatch {
                got: values.len(),
                want: geom.len(),
            });
        }
        let f = ScalarField { geom, values };
        f.check_finite()?;
        Ok(f)
    }

    pub fn constant(geom: GridGeometry, value: f64) -> Self {
        ScalarField {
            geom,
            values: vec![value; geom.len()],
        }
    }

    pub fn from_fn(geom: GridGeometry, f: impl Fn(Point) -> f64) -> Self {
        let mut values = Vec::with_capacity(geom.len());
        for j in 0..geom.ny {
            for i in 0..geom.nx {
                values.push(f(geom.node(i, j)));
            }
        }
        ScalarField { geom, values }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.geom.index(i, j)]
    }

    pub fn row(&self, j: usize) -> &[f64] {
        let nx = self.geom.nx;
        &self.values[j * nx..(j + 1) * nx]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `max |self - other|`, sequential order.
    pub fn max_abs_diff(&self, other: &ScalarField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn check_finite(&self) -> Result<(), GridError> {
        match self.values.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(k) => Err(GridError::NonFinite(k % self.geom.nx, k / self.geom.nx)),
        }
    }

    /// Bilinear interpolation; `None` outside the box.
    pub fn bilinear(&self, p: Point) -> Option<f64> {
        let g = &self.geom;
        let fx = (p.x - g.origin.x) / g.h;
        let fy = (p.y - g.origin.y) / g.h;
        let eps = 1e-9;
        if fx < -eps || fy < -eps || fx > (g.nx - 1) as f64 + eps || fy > (g.ny - 1) as f64 + eps {
            return None;
        }
        let i = (fx.floor().max(0.0) as usize).min(g.nx - 2);
        let j = (fy.floor().max(0.0) as usize).min(g.ny - 2);
        let tx = fx - i as f64;
        let ty = fy - j as f64;
        let v00 = self.get(i, j);
        let v10 = self.get(i + 1, j);
        let v01 = self.get(i, j + 1);
        let v11 = self.get(i + 1, j + 1);
        Some((1.0 - ty) * ((1.0 - tx) * v00 + tx * v10) + ty * ((1.0 - tx) * v01 + tx * v11))
    }
}
