//! Forward finite-difference scheme for the Kolmogorov-Feller equation on a
//! single increasing, non-negative kernel segment.
//!
//! One time step maps `F^i` to
//!
//! ```text
//! F^{i+1}_j = (1 - h n_i) F^i_j + h n_i [(1 - λ_i) F^i_{j-k_i} + λ_i F^i_{j-k_i+1}]
//! ```
//!
//! with `k_i = floor(g(t_i) / δ) + 1` and `λ_i = (δ k_i - g(t_i)) / δ`. Reads
//! below node 0 return zero. The update matrix is never formed.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::model::{Atom, CdfGrid, ControlDensity, Mesh, TimeGrid, GRID_TOL};

/// Final mass below this triggers a mass-leak warning.
pub const MASS_LEAK_THRESHOLD: f64 = 0.999;

const NODE_SNAP: f64 = 1e-9;

/// Stencil of time step `i`: shift `k` and interpolation weight `lambda` for
/// the point `x_j - g(t_i)`, plus the intensity `n(t_i)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStencil {
    pub i: usize,
    pub k: usize,
    pub lambda: f64,
    pub n: f64,
}

impl StepStencil {
    /// Stencil for kernel value `g_value >= 0` on a mesh of step `delta`.
    ///
    /// When `g_value / delta` is an integer (to `1e-9`) the stencil lands on
    /// the node exactly: `lambda = 1`.
    pub fn new(i: usize, g_value: f64, n_value: f64, delta: f64) -> StepStencil {
        let ratio = g_value.max(0.0) / delta;
        let snapped = ratio.round();
        let ratio = if (ratio - snapped).abs() <= NODE_SNAP * snapped.max(1.0) {
            snapped
        } else {
            ratio
        };
        let k = ratio.floor() as usize + 1;
        let lambda = (k as f64 - ratio).clamp(0.0, 1.0);
        StepStencil {
            i,
            k,
            lambda,
            n: n_value,
        }
    }
}

#[derive(Debug, Clone)]
pub enum InitialCondition {
    PointMassAtZero,
    Grid(CdfGrid),
}

#[derive(Debug, Clone)]
pub struct SolveConfig {
    pub mesh: Mesh,
    pub h: f64,
    /// Overwrite node 0 with the exact no-arrival probability every step.
    pub atom_pinning: bool,
    /// Keep a copy of every `record_every`-th time level.
    pub record_trajectory: bool,
    pub record_every: usize,
}

impl SolveConfig {
    pub fn new(mesh: Mesh, h: f64) -> SolveConfig {
        SolveConfig {
            mesh,
            h,
            atom_pinning: false,
            record_trajectory: false,
            record_every: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolveWarning {
    /// `F(x_max)` ended below [`MASS_LEAK_THRESHOLD`].
    MassLeak { mass_captured: f64 },
}

impl std::fmt::Display for SolveWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SolveWarning::MassLeak { mass_captured } => write!(
                f,
                "mass leak: F(x_max) = {mass_captured} < {MASS_LEAK_THRESHOLD}; extend x_max"
            ),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SegmentSolution {
    pub grid: CdfGrid,
    pub warnings: Vec<SolveWarning>,
    /// `1 - h n*` of the segment.
    pub stability_margin: f64,
    pub steps: usize,
    pub elapsed: std::time::Duration,
    pub trajectory: Vec<(f64, Vec<f64>)>,
}

/// `1 - h n*`. Callers reject a margin `<= 0`.
pub fn stability_check(h: f64, n_star: f64) -> f64 {
    1.0 - h * n_star
}

fn require_stable(h: f64, n_star: f64) -> Result<f64> {
    let margin = stability_check(h, n_star);
    if margin <= 0.0 {
        return Err(Error::StabilityViolation {
            margin,
            product: h * n_star,
        });
    }
    Ok(margin)
}

/// Applies one step of the scheme, writing `F^{i+1}` into `next`.
pub fn step(current: &[f64], next: &mut [f64], stencil: &StepStencil, h: f64) {
    debug_assert_eq!(current.len(), next.len());
    let hn = h * stencil.n;
    let stay = 1.0 - hn;
    let w_far = hn * (1.0 - stencil.lambda);
    let w_near = hn * stencil.lambda;
    debug_assert!(
        (stay.abs() + w_far.abs() + w_near.abs() - 1.0).abs() < 1e-12 || stay < 0.0,
        "column sums must equal one under stability"
    );
    let k = stencil.k;
    let m = current.len();
    // j < k - 1: both reads fall below node 0
    let split_near = (k - 1).min(m);
    for j in 0..split_near {
        next[j] = stay * current[j];
    }
    // j = k - 1: only the near read is on the mesh
    if k - 1 < m {
        let j = k - 1;
        next[j] = stay * current[j] + w_near * current[0];
    }
    for j in k..m {
        next[j] = stay * current[j] + w_far * current[j - k] + w_near * current[j - k + 1];
    }
}

/// Allocating convenience wrapper around [`step`].
pub fn step_once(current: &[f64], stencil: &StepStencil, h: f64) -> Vec<f64> {
    let mut next = vec![0.0; current.len()];
    step(current, &mut next, stencil, h);
    next
}

/// Solves the scheme on `[a, b]` for a kernel that is non-negative and
/// non-decreasing there. Time is re-indexed so step 0 sits at `a`; the step
/// count is the smallest one whose step does not exceed `cfg.h`.
pub fn solve_segment(
    g: &Expression,
    n: &ControlDensity,
    a: f64,
    b: f64,
    init: &InitialCondition,
    cfg: &SolveConfig,
) -> Result<SegmentSolution> {
    let started = Instant::now();
    let mesh = cfg.mesh;
    if mesh.x_min() != 0.0 {
        return Err(Error::InvalidMesh(format!(
            "the scheme runs on [0, x_max]; got x_min = {}",
            mesh.x_min()
        )));
    }
    let time = TimeGrid::covering(b - a, cfg.h)?;
    let h = time.h();
    let n_star = n.sup_on(a, b)?;
    let margin = require_stable(cfg.h, n_star)?;

    let (mut current, init_atoms) = match init {
        InitialCondition::PointMassAtZero => {
            (vec![1.0; mesh.len()], vec![Atom { x: 0.0, mass: 1.0 }])
        }
        InitialCondition::Grid(grid) => (resample_initial(grid, &mesh)?, grid.atoms().to_vec()),
    };
    let pin = cfg.atom_pinning && matches!(init, InitialCondition::PointMassAtZero);

    let mut next = vec![0.0; mesh.len()];
    let mut trajectory = Vec::new();
    if cfg.record_trajectory {
        trajectory.push((a, current.clone()));
    }
    let delta = mesh.delta();
    for i in 0..time.steps() {
        let t = a + i as f64 * h;
        let stencil = StepStencil::new(i, g.evaluate(t)?, n.value(t)?, delta);
        step(&current, &mut next, &stencil, h);
        std::mem::swap(&mut current, &mut next);
        if pin {
            current[0] = (-n.integrate(a, (t + h).min(b))?).exp();
        }
        debug_assert!(
            current.windows(2).all(|w| w[1] >= w[0] - 1e-12),
            "step {i} broke monotonicity"
        );
        if cfg.record_trajectory && (i + 1) % cfg.record_every.max(1) == 0 {
            trajectory.push((t + h, current.clone()));
        }
    }

    let survive = (-n.integrate(a, b)?).exp();
    let atoms: Vec<Atom> = init_atoms
        .iter()
        .map(|at| Atom {
            x: at.x,
            mass: at.mass * survive,
        })
        .filter(|at| at.mass > crate::model::ATOM_PRUNE)
        .collect();
    for v in current.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    let grid = CdfGrid::from_parts(mesh, current, atoms);
    let mut warnings = Vec::new();
    if grid.mass_captured() < MASS_LEAK_THRESHOLD {
        warnings.push(SolveWarning::MassLeak {
            mass_captured: grid.mass_captured(),
        });
    }
    debug_assert!(grid.validate().is_ok(), "{:?}", grid.validate());
    Ok(SegmentSolution {
        grid,
        warnings,
        stability_margin: margin,
        steps: time.steps(),
        elapsed: started.elapsed(),
        trajectory,
    })
}

/// Brings an initial CDF onto the solve mesh: nodes beyond the initial mesh
/// take its last value, nodes below take zero.
fn resample_initial(grid: &CdfGrid, mesh: &Mesh) -> Result<Vec<f64>> {
    if !grid.mesh().compatible(mesh) {
        return Err(Error::MeshMismatch(format!(
            "initial condition has delta {} but the solve mesh has delta {}",
            grid.mesh().delta(),
            mesh.delta()
        )));
    }
    if grid.mesh().x_min() < -GRID_TOL && grid.value_at(-0.5 * mesh.delta()) > GRID_TOL {
        return Err(Error::InvalidInput(
            "initial condition carries mass below 0; reflect it first".into(),
        ));
    }
    let offset = grid.mesh().lattice_start().unwrap_or(0);
    Ok((0..mesh.len())
        .map(|j| grid.node_value(j as i64 - offset))
        .collect())
}
