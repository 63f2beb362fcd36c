use serde::{Deserialize, Serialize};

use super::mesh::Mesh;
use crate::error::{Error, Result};

/// Tolerance for floating-point noise in CDF values.
pub const GRID_TOL: f64 = 1e-12;

/// Atoms lighter than this are dropped.
pub const ATOM_PRUNE: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub x: f64,
    pub mass: f64,
}

/// Right-continuous CDF values on a mesh plus the list of point masses.
///
/// `values[j]` is `F(x_j)` including every atom at or below `x_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfGrid {
    mesh: Mesh,
    values: Vec<f64>,
    atoms: Vec<Atom>,
}

impl CdfGrid {
    /// Builds and validates a grid. Atoms are sorted by location.
    pub fn new(mesh: Mesh, values: Vec<f64>, atoms: Vec<Atom>) -> Result<CdfGrid> {
        let grid = CdfGrid::from_parts(mesh, values, atoms);
        grid.validate()?;
        Ok(grid)
    }

    pub(crate) fn from_parts(mesh: Mesh, values: Vec<f64>, mut atoms: Vec<Atom>) -> CdfGrid {
        atoms.sort_by(|a, b| a.x.total_cmp(&b.x));
        CdfGrid { mesh, values, atoms }
    }

    /// Point mass at `x0`, which must lie within `delta / 2` of a node.
    pub fn point_mass(mesh: Mesh, x0: f64) -> Result<CdfGrid> {
        let j0 = mesh
            .nearest_index(x0)
            .ok_or_else(|| Error::InvalidGrid(format!("atom at {x0} lies outside the mesh")))?;
        let values = (0..mesh.len()).map(|j| if j >= j0 { 1.0 } else { 0.0 }).collect();
        CdfGrid::new(mesh, values, vec![Atom { x: mesh.x(j0), mass: 1.0 }])
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn into_parts(self) -> (Mesh, Vec<f64>, Vec<Atom>) {
        (self.mesh, self.values, self.atoms)
    }

    /// `F(x_max)`: the probability mass the mesh holds.
    pub fn mass_captured(&self) -> f64 {
        *self.values.last().unwrap_or(&0.0)
    }

    pub fn total_atom_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }

    /// Mass of the atom sitting on node `j`, zero when there is none.
    pub fn atom_mass_at_node(&self, j: usize) -> f64 {
        let x = self.mesh.x(j);
        let half = 0.5 * self.mesh.delta();
        self.atoms
            .iter()
            .filter(|a| (a.x - x).abs() < half)
            .map(|a| a.mass)
            .sum()
    }

    /// Per-node atom masses (zero off-atom).
    pub fn atom_masses_by_node(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.mesh.len()];
        for a in &self.atoms {
            if let Some(j) = self.mesh.nearest_index(a.x) {
                out[j] += a.mass;
            }
        }
        out
    }

    /// Value at node index `j` extended by zero to the left and by the last
    /// value to the right.
    pub fn node_value(&self, j: i64) -> f64 {
        if j < 0 {
            0.0
        } else if j as usize >= self.values.len() {
            self.mass_captured()
        } else {
            self.values[j as usize]
        }
    }

    /// `F(x)`: linear between nodes, right-continuous at atoms.
    pub fn value_at(&self, x: f64) -> f64 {
        let m = &self.mesh;
        if x < m.x_min() - 0.5 * GRID_TOL * m.delta() {
            return 0.0;
        }
        if x >= m.x_max() {
            return self.mass_captured();
        }
        let p = m.position(x).max(0.0);
        let j = p.floor() as usize;
        let frac = p - j as f64;
        if frac <= 1e-12 || j + 1 >= m.len() {
            return self.values[j.min(m.len() - 1)];
        }
        // the interpolation target is the left limit at the next node
        let right = self.values[j + 1] - self.atom_mass_at_node(j + 1);
        let left = self.values[j];
        left + frac * (right.max(left) - left)
    }

    /// `F(x-)`: subtracts the mass of an atom located at `x`.
    pub fn left_limit_at(&self, x: f64) -> f64 {
        let tol = 1e-6 * self.mesh.delta();
        let atom: f64 = self
            .atoms
            .iter()
            .filter(|a| (a.x - x).abs() <= tol)
            .map(|a| a.mass)
            .sum();
        if atom > 0.0 {
            (self.value_at(x) - atom).max(0.0)
        } else {
            self.value_at(x)
        }
    }

    /// Smallest mesh node `x` with `F(x) >= p`; `x_max` when no node reaches `p`.
    pub fn quantile(&self, p: f64) -> f64 {
        let idx = self.values.partition_point(|&v| v < p);
        if idx >= self.values.len() {
            self.mesh.x_max()
        } else {
            self.mesh.x(idx)
        }
    }

    /// Checks the grid invariants: values in `[0, 1]`, non-decreasing, atoms
    /// positive and on nodes, total atom mass at most one.
    pub fn validate(&self) -> Result<()> {
        let m = &self.mesh;
        if self.values.len() != m.len() {
            return Err(Error::InvalidGrid(format!(
                "{} values for a mesh of {} nodes",
                self.values.len(),
                m.len()
            )));
        }
        for (j, &v) in self.values.iter().enumerate() {
            if !(-GRID_TOL..=1.0 + GRID_TOL).contains(&v) {
                return Err(Error::InvalidGrid(format!("value {v} at node {j} outside [0, 1]")));
            }
        }
        for j in 1..self.values.len() {
            if self.values[j] < self.values[j - 1] - GRID_TOL {
                return Err(Error::InvalidGrid(format!(
                    "values decrease at node {j}: {} -> {}",
                    self.values[j - 1],
                    self.values[j]
                )));
            }
        }
        let mut total = 0.0;
        for a in &self.atoms {
            if !(a.mass > 0.0 && a.mass.is_finite()) {
                return Err(Error::InvalidGrid(format!("atom at {} has mass {}", a.x, a.mass)));
            }
            let p = m.position(a.x);
            if (p - p.round()).abs() > 0.5 || p.round() < 0.0 || p.round() > (m.len() - 1) as f64 {
                return Err(Error::InvalidGrid(format!("atom at {} is not on a mesh node", a.x)));
            }
            total += a.mass;
        }
        if total > 1.0 + GRID_TOL {
            return Err(Error::InvalidGrid(format!("atom masses sum to {total} > 1")));
        }
        Ok(())
    }
}
