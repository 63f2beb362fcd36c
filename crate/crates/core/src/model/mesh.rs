use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LATTICE_TOL: f64 = 1e-9;

/// Uniform spatial mesh `x_min + j * delta`, `j = 0..len`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeshRepr", into = "MeshRepr")]
pub struct Mesh {
    delta: f64,
    x_min: f64,
    x_max: f64,
    len: usize,
}

#[derive(Serialize, Deserialize)]
struct MeshRepr {
    delta: f64,
    x_min: f64,
    x_max: f64,
}

impl TryFrom<MeshRepr> for Mesh {
    type Error = Error;

    fn try_from(r: MeshRepr) -> Result<Mesh> {
        Mesh::new(r.delta, r.x_min, r.x_max)
    }
}

impl From<Mesh> for MeshRepr {
    fn from(m: Mesh) -> MeshRepr {
        MeshRepr {
            delta: m.delta,
            x_min: m.x_min,
            x_max: m.x_max,
        }
    }
}

impl Mesh {
    pub fn new(delta: f64, x_min: f64, x_max: f64) -> Result<Mesh> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::InvalidMesh(format!("delta must be positive, got {delta}")));
        }
        if !(x_min.is_finite() && x_max.is_finite() && x_max >= x_min) {
            return Err(Error::InvalidMesh(format!(
                "need finite x_min <= x_max, got [{x_min}, {x_max}]"
            )));
        }
        let cells = (x_max - x_min) / delta;
        let rounded = cells.round();
        if (cells - rounded).abs() > LATTICE_TOL * rounded.max(1.0) {
            return Err(Error::InvalidMesh(format!(
                "(x_max - x_min) / delta = {cells} is not an integer"
            )));
        }
        if rounded > 5e8 {
            return Err(Error::InvalidMesh(format!("{rounded} cells is too many")));
        }
        Ok(Mesh {
            delta,
            x_min,
            x_max,
            len: rounded as usize + 1,
        })
    }

    /// Mesh on `[0, x_max]`.
    pub fn from_origin(delta: f64, x_max: f64) -> Result<Mesh> {
        Mesh::new(delta, 0.0, x_max)
    }

    /// Mesh whose end points are the lattice sites `lo * delta` and `hi * delta`.
    pub fn lattice(delta: f64, lo: i64, hi: i64) -> Result<Mesh> {
        if hi < lo {
            return Err(Error::InvalidMesh(format!("lattice range [{lo}, {hi}] is empty")));
        }
        Mesh::new(delta, lo as f64 * delta, hi as f64 * delta)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn x(&self, j: usize) -> f64 {
        if j + 1 == self.len {
            self.x_max
        } else {
            self.x_min + j as f64 * self.delta
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(move |j| self.x(j))
    }

    /// Fractional node coordinate of `x`.
    pub fn position(&self, x: f64) -> f64 {
        (x - self.x_min) / self.delta
    }

    /// Nearest node index, or `None` when `x` is more than `delta / 2` outside.
    pub fn nearest_index(&self, x: f64) -> Option<usize> {
        let p = self.position(x).round();
        if p < 0.0 || p > (self.len - 1) as f64 {
            return None;
        }
        Some(p as usize)
    }

    /// Integer lattice coordinate of `x_min` (`x_min / delta`), if aligned.
    pub fn lattice_start(&self) -> Option<i64> {
        let p = self.x_min / self.delta;
        let r = p.round();
        ((p - r).abs() <= LATTICE_TOL * r.abs().max(1.0)).then_some(r as i64)
    }

    /// Both meshes share `delta` (to rounding) and the same lattice.
    pub fn compatible(&self, other: &Mesh) -> bool {
        (self.delta - other.delta).abs() <= 1e-12 * self.delta
            && self.lattice_start().is_some()
            && other.lattice_start().is_some()
    }
}

/// Uniform time grid `i * h`, `i = 0..=steps`, over `[0, t_end]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    h: f64,
    t_end: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(h: f64, t_end: f64) -> Result<TimeGrid> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidTimeGrid(format!("h must be positive, got {h}")));
        }
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(Error::InvalidTimeGrid(format!("T must be positive, got {t_end}")));
        }
        let n = t_end / h;
        let r = n.round();
        if (n - r).abs() > LATTICE_TOL * r.max(1.0) || r < 1.0 {
            return Err(Error::InvalidTimeGrid(format!(
                "T / h = {n} is not a positive integer"
            )));
        }
        Ok(TimeGrid {
            h,
            t_end,
            steps: r as usize,
        })
    }

    /// Grid over `[0, span]` with the smallest step count whose step does not
    /// exceed `h_max`.
    pub fn covering(span: f64, h_max: f64) -> Result<TimeGrid> {
        if !(span.is_finite() && span > 0.0 && h_max > 0.0) {
            return Err(Error::InvalidTimeGrid(format!(
                "cannot cover span {span} with step {h_max}"
            )));
        }
        let steps = ((span / h_max) - LATTICE_TOL).ceil().max(1.0) as usize;
        Ok(TimeGrid {
            h: span / steps as f64,
            t_end: span,
            steps,
        })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn steps(&self) -> usize {
        self.steps
    }
}
