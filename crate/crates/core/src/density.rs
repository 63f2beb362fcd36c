//! Density of the continuous part of a computed CDF, with atoms kept apart.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Atom, CdfGrid, Mesh};

/// Default differencing half-width in mesh steps.
pub const DEFAULT_DELTA1_STEPS: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub mesh: Mesh,
    pub values: Vec<f64>,
    pub atoms: Vec<Atom>,
    /// Differencing half-width actually used.
    pub delta1: f64,
    /// Total negative mass (`Σ δ |f|` over clamped nodes) removed by clamping.
    pub clamped: f64,
}

impl DensityGrid {
    /// `Σ δ f_j` by the trapezoid rule.
    pub fn continuous_mass(&self) -> f64 {
        trapezoid(&self.values, self.mesh.delta())
    }

    pub fn total_atom_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }
}

fn trapezoid(values: &[f64], delta: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => delta * (values.iter().sum::<f64>() - 0.5 * (values[0] + values[n - 1])),
    }
}

/// Atom-removed CDF values: each atom's mass is subtracted at and beyond its
/// node.
pub fn continuous_part(grid: &CdfGrid) -> Vec<f64> {
    let by_node = grid.atom_masses_by_node();
    let mut removed = 0.0;
    grid.values()
        .iter()
        .zip(by_node)
        .map(|(&v, m)| {
            removed += m;
            v - removed
        })
        .collect()
}

/// `f(x) ≈ (F_c(x + δ₁) - F_c(x - δ₁)) / (2 δ₁)` on the continuous part
/// `F_c`, with `δ₁` rounded to a whole number `w` of mesh steps. Nodes within
/// `w` of either end use a one-sided difference of the same width.
pub fn central_difference_density(grid: &CdfGrid, delta1: f64) -> Result<DensityGrid> {
    let mesh = *grid.mesh();
    let delta = mesh.delta();
    if !(delta1 >= 2.0 * delta * (1.0 - 1e-9)) {
        return Err(Error::Delta1TooSmall {
            delta1,
            min: 2.0 * delta,
        });
    }
    let fc = continuous_part(grid);
    let len = fc.len();
    let w = ((delta1 / delta).round() as usize).max(1);
    if len < w + 1 {
        return Err(Error::MeshTooShort(format!(
            "{len} nodes cannot hold a differencing window of {w} steps"
        )));
    }
    let mut values = Vec::with_capacity(len);
    let mut clamped = 0.0;
    for j in 0..len {
        let f = if j >= w && j + w < len {
            (fc[j + w] - fc[j - w]) / (2.0 * w as f64 * delta)
        } else if j < w {
            (fc[j + w] - fc[j]) / (w as f64 * delta)
        } else {
            (fc[j] - fc[j - w]) / (w as f64 * delta)
        };
        if f < 0.0 {
            clamped += -f * delta;
            values.push(0.0);
        } else {
            values.push(f);
        }
    }
    Ok(DensityGrid {
        mesh,
        values,
        atoms: grid.atoms().to_vec(),
        delta1: w as f64 * delta,
        clamped,
    })
}

/// Centered moving average over `round(window / δ)` nodes, truncated at the
/// mesh ends, then rescaled so the continuous mass is unchanged.
pub fn smooth_density(density: &DensityGrid, window: f64) -> Result<DensityGrid> {
    let delta = density.mesh.delta();
    if !(window >= delta * (1.0 - 1e-9)) {
        return Err(Error::InvalidInput(format!(
            "smoothing window {window} is narrower than delta = {delta}"
        )));
    }
    let nodes = ((window / delta).round() as usize).max(1);
    let half = nodes / 2;
    let len = density.values.len();
    let mut prefix = Vec::with_capacity(len + 1);
    prefix.push(0.0);
    for &v in &density.values {
        prefix.push(prefix.last().unwrap() + v);
    }
    let mut values: Vec<f64> = (0..len)
        .map(|j| {
            let lo = j.saturating_sub(half);
            let hi = (j + nodes - half).min(len);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect();
    let before = density.continuous_mass();
    let after = trapezoid(&values, delta);
    if after > 0.0 {
        let scale = before / after;
        values.iter_mut().for_each(|v| *v *= scale);
    }
    Ok(DensityGrid {
        values,
        ..density.clone()
    })
}
