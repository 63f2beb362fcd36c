//! Empirical smoothness and convergence instruments.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::density::continuous_part;
use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::model::{CdfGrid, ControlDensity, Mesh};
use crate::transforms::{compose_piecewise, ComposeConfig};

/// Minimum random pair budget for [`holder_estimate`].
pub const MIN_PAIRS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct HolderReport {
    pub gamma: f64,
    pub seminorm_estimate: f64,
    /// `C_{n,t} [g^{-1}]_γ` when the caller supplied both ingredients.
    pub bound: Option<f64>,
    pub pair_budget: usize,
}

impl HolderReport {
    /// Attaches the theoretical bound `constant * g_inv_seminorm`.
    pub fn with_bound(mut self, constant: f64, g_inv_seminorm: f64) -> HolderReport {
        self.bound = Some(constant * g_inv_seminorm);
        self
    }

    pub fn within_bound(&self) -> Option<bool> {
        self.bound.map(|b| self.seminorm_estimate <= b)
    }
}

/// `C_{n,t} = n*_t (1 - e^{-Λ}) / Λ` with `Λ = ∫_0^t n`; `n*_t` when `Λ = 0`.
pub fn holder_constant(n: &ControlDensity, t: f64) -> Result<f64> {
    let n_star = n.sup_on(n.start(), t)?;
    let lambda = n.integrate(n.start(), t)?;
    if lambda == 0.0 {
        return Ok(n_star);
    }
    Ok(n_star * (1.0 - (-lambda).exp()) / lambda)
}

/// Largest `|F(x) - F(y)| / |x - y|^γ` over node pairs on `x > 0` with
/// `|x - y| <= 1`: every adjacent pair plus `pairs` random ones. Atoms are
/// removed first and their nodes skipped.
pub fn holder_estimate(grid: &CdfGrid, gamma: f64, pairs: usize, seed: u64) -> Result<HolderReport> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidInput(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    if pairs < MIN_PAIRS {
        return Err(Error::InvalidInput(format!("need at least {MIN_PAIRS} pairs, got {pairs}")));
    }
    let mesh = grid.mesh();
    let fc = continuous_part(grid);
    let atoms = grid.atom_masses_by_node();
    let nodes: Vec<usize> = (0..mesh.len())
        .filter(|&j| mesh.x(j) > 0.0 && atoms[j] == 0.0)
        .collect();
    let delta = mesh.delta();
    let ratio = |i: usize, j: usize| {
        let d = (mesh.x(j) - mesh.x(i)).abs();
        if d == 0.0 || d > 1.0 + 1e-12 {
            0.0
        } else {
            (fc[j] - fc[i]).abs() / d.powf(gamma)
        }
    };
    let mut best = 0.0f64;
    for w in nodes.windows(2) {
        best = best.max(ratio(w[0], w[1]));
    }
    if nodes.len() >= 2 {
        let reach = ((1.0 / delta).floor() as usize).max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..pairs {
            let a = rng.random_range(0..nodes.len());
            let span = reach.min(nodes.len() - 1);
            let b = (a + rng.random_range(1..=span)).min(nodes.len() - 1);
            if a != b {
                best = best.max(ratio(nodes[a], nodes[b]));
            }
        }
    }
    Ok(HolderReport {
        gamma,
        seminorm_estimate: best,
        bound: None,
        pair_budget: pairs,
    })
}

/// Slope of `log(F(x0) - F(x0 - ε))` against `log ε` over `count`
/// log-spaced `ε` in `[eps_lo, eps_hi]`.
pub fn local_holder_exponent(grid: &CdfGrid, x0: f64, eps_lo: f64, eps_hi: f64, count: usize) -> Result<f64> {
    if !(eps_lo > 0.0 && eps_hi > eps_lo && count >= 2) {
        return Err(Error::InvalidInput("need 0 < eps_lo < eps_hi and count >= 2".into()));
    }
    let f0 = grid.value_at(x0);
    let mut xs = Vec::with_capacity(count);
    let mut ys = Vec::with_capacity(count);
    for k in 0..count {
        let eps = eps_lo * (eps_hi / eps_lo).powf(k as f64 / (count - 1) as f64);
        let rise = f0 - grid.value_at(x0 - eps);
        if rise <= 0.0 {
            return Err(Error::InvalidInput(format!("F is flat on [{}, {x0}]", x0 - eps)));
        }
        xs.push(eps.ln());
        ys.push(rise.ln());
    }
    Ok(least_squares_slope(&xs, &ys))
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// `Σ_j δ |A_j - B_j|` over a shared mesh.
pub fn l1_distance(a: &CdfGrid, b: &CdfGrid) -> Result<f64> {
    let (ma, mb) = (a.mesh(), b.mesh());
    if ma.len() != mb.len() || (ma.delta() - mb.delta()).abs() > 1e-12 * ma.delta() || (ma.x_min() - mb.x_min()).abs() > 1e-9 * ma.delta() {
        return Err(Error::MeshMismatch(format!(
            "L1 distance needs one mesh; got {} nodes from {} and {} nodes from {}",
            ma.len(),
            ma.x_min(),
            mb.len(),
            mb.x_min()
        )));
    }
    Ok(ma.delta()
        * a.values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>())
}

/// What [`convergence_study`] solves.
#[derive(Debug, Clone)]
pub struct ConvergenceProblem {
    pub g: Expression,
    pub n: ControlDensity,
    pub x_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub delta: f64,
    pub h: f64,
    pub l1_error: f64,
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `log error` against `log δ`; `None` when some
    /// error is zero or fewer than two distinct `δ` were run.
    pub order: Option<f64>,
}

impl ConvergenceTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("delta,h,l1_error,wall_time_s\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{:e},{:e},{:.16e},{:.6}\n",
                r.delta,
                r.h,
                r.l1_error,
                r.wall_time.as_secs_f64()
            ));
        }
        out
    }
}

/// Solves `problem` at each `(δ, h)` concurrently and measures the L¹ error
/// against `oracle` evaluated on the same mesh.
pub fn convergence_study<O>(
    problem: &ConvergenceProblem,
    resolutions: &[(f64, f64)],
    oracle: O,
) -> Result<ConvergenceTable>
where
    O: Fn(&Mesh) -> Result<CdfGrid> + Sync,
{
    let mut rows = resolutions
        .par_iter()
        .map(|&(delta, h)| {
            let started = Instant::now();
            let solved = compose_piecewise(&problem.g, &problem.n, &ComposeConfig::new(delta, h, problem.x_max))?;
            let wall_time = started.elapsed();
            let exact = oracle(solved.grid.mesh())?;
            Ok(ConvergenceRow {
                delta,
                h,
                l1_error: l1_distance(&solved.grid, &exact)?,
                wall_time,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| a.delta.total_cmp(&b.delta).then(a.h.total_cmp(&b.h)));
    let distinct = rows.windows(2).any(|w| w[0].delta != w[1].delta);
    let order = if distinct && rows.iter().all(|r| r.l1_error > 0.0) {
        let xs: Vec<f64> = rows.iter().map(|r| r.delta.ln()).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.l1_error.ln()).collect();
        Some(least_squares_slope(&xs, &ys))
    } else {
        None
    };
    Ok(ConvergenceTable { rows, order })
}
