//! Reductions of a general piecewise-monotone kernel to the increasing,
//! non-negative case the scheme handles, and the glue that recombines the
//! pieces.
//!
//! Increments of `N` over disjoint intervals are independent, so the integral
//! splits into a sum of independent pieces. All positive pieces are chained
//! through one sequence of solves (each solve starting from the previous CDF),
//! likewise all negative pieces after negating the kernel. The negative chain
//! is reflected back and convolved with the positive chain and with the exact
//! laws of flat pieces.

use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::expr::{BinOp, Expression};
use crate::model::{
    segment_kernel, Atom, CdfGrid, ControlDensity, KernelClass, KernelSegment, Mesh, Sign,
    ATOM_PRUNE, FLAT_TOL,
};
use crate::solver::{
    solve_segment, stability_check, InitialCondition, SolveConfig, SolveWarning,
    MASS_LEAK_THRESHOLD,
};

/// Poisson tail mass left out by [`flat_segment_cdf`].
pub const POISSON_TAIL: f64 = 1e-12;

/// Standard deviations past the mean used to size intermediate meshes.
pub const TAIL_SDS: f64 = 10.0;

const MOMENT_PANELS: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    Direct,
    TimeReversal,
    Reflection,
    ReflectionAndTimeReversal,
    ExactPoisson,
}

impl Transform {
    pub fn for_class(class: KernelClass) -> Transform {
        match class {
            KernelClass::IncreasingPositive => Transform::Direct,
            KernelClass::DecreasingPositive => Transform::TimeReversal,
            KernelClass::DecreasingNegative => Transform::Reflection,
            KernelClass::IncreasingNegative => Transform::ReflectionAndTimeReversal,
            KernelClass::Flat(_) => Transform::ExactPoisson,
        }
    }
}

/// A kernel segment with its reduction and its intensity mass `∫ n`.
#[derive(Debug, Clone)]
pub struct SegmentPlan {
    pub segment: KernelSegment,
    pub transform: Transform,
    pub lambda: f64,
}

/// `(g(a + b - s), n(a + b - s))` on `[a, b]`.
pub fn reverse_time(
    g: &Expression,
    n: &ControlDensity,
    a: f64,
    b: f64,
) -> Result<(Expression, ControlDensity)> {
    let flip = Expression::binary(BinOp::Sub, Expression::Num(a + b), Expression::Var);
    Ok((g.substitute(&flip), n.reversed(a, b)?))
}

/// Exact CDF of `level * Pois(lambda)` for `level > 0` on a mesh starting at
/// 0. Atom `k` sits on the node nearest `k * level`.
pub fn flat_segment_cdf(level: f64, lambda: f64, mesh: &Mesh) -> Result<CdfGrid> {
    if !(level > 0.0 && level.is_finite()) {
        return Err(Error::InvalidInput(format!("flat level must be positive, got {level}")));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!("Poisson mean must be >= 0, got {lambda}")));
    }
    if mesh.x_min() != 0.0 {
        return Err(Error::InvalidMesh("flat segment mesh must start at 0".into()));
    }
    let pmf = poisson_pmf(lambda);
    let k_max = pmf.len() - 1;
    if k_max as f64 * level > mesh.x_max() + 0.5 * mesh.delta() {
        return Err(Error::MeshTooShort(format!(
            "Poisson atoms reach {} but the mesh ends at {}",
            k_max as f64 * level,
            mesh.x_max()
        )));
    }
    let mut by_node = vec![0.0; mesh.len()];
    for (k, &p) in pmf.iter().enumerate() {
        let j = mesh.nearest_index(k as f64 * level).expect("checked above");
        by_node[j] += p;
    }
    let mut values = Vec::with_capacity(mesh.len());
    let mut acc = 0.0;
    let mut atoms = Vec::new();
    for (j, &m) in by_node.iter().enumerate() {
        acc += m;
        values.push(acc.min(1.0));
        if m > ATOM_PRUNE {
            atoms.push(Atom { x: mesh.x(j), mass: m });
        }
    }
    CdfGrid::new(*mesh, values, atoms)
}

/// `e^{-λ} λ^k / k!` for `k = 0..=k_max`, with the tail beyond `k_max` below
/// [`POISSON_TAIL`]. Weights are built outward from the mode by the ratio
/// recursion and normalized, so large means neither underflow nor drift.
pub fn poisson_pmf(lambda: f64) -> Vec<f64> {
    if lambda == 0.0 {
        return vec![1.0];
    }
    let mode = lambda.floor() as usize;
    let mut w = vec![0.0; mode + 1];
    w[mode] = 1.0;
    for k in (0..mode).rev() {
        w[k] = w[k + 1] * (k + 1) as f64 / lambda;
    }
    let mut k = mode;
    loop {
        let next = w[k] * lambda / (k + 1) as f64;
        let r = lambda / (k + 2) as f64;
        w.push(next);
        k += 1;
        // geometric bound on everything past k
        if r < 1.0 && next * r / (1.0 - r) < POISSON_TAIL * 1e-3 {
            break;
        }
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    while w.len() > mode + 1 && *w.last().unwrap() < 1e-300 {
        w.pop();
    }
    w
}

/// CDF of `-X` from the CDF of `X`: `G(u) = 1 - F((-u)-)` on the mirrored
/// mesh. Atoms at `l` move to `-l` with the same mass.
pub fn reflect(grid: &CdfGrid) -> CdfGrid {
    let m = grid.mesh();
    let mesh = mirrored(m);
    let atom_at = grid.atom_masses_by_node();
    let len = m.len();
    let values = (0..len)
        .map(|j| {
            let i = len - 1 - j;
            (1.0 - grid.values()[i] + atom_at[i]).clamp(0.0, 1.0)
        })
        .collect::<Vec<_>>();
    let mut values = values;
    enforce_monotone(&mut values);
    let atoms = grid
        .atoms()
        .iter()
        .map(|a| Atom { x: -a.x, mass: a.mass })
        .collect();
    CdfGrid::from_parts(mesh, values, atoms)
}

fn mirrored(m: &Mesh) -> Mesh {
    match m.lattice_start() {
        Some(lo) => Mesh::lattice(m.delta(), -(lo + m.len() as i64 - 1), -lo)
            .expect("mirror of a valid lattice mesh"),
        None => Mesh::new(m.delta(), -m.x_max(), -m.x_min()).expect("mirror of a valid mesh"),
    }
}

fn enforce_monotone(values: &mut [f64]) {
    let mut run = 0.0f64;
    for v in values.iter_mut() {
        run = run.max(*v);
        *v = run;
    }
}

fn lattice_of(m: &Mesh) -> Result<i64> {
    m.lattice_start().ok_or_else(|| {
        Error::MeshMismatch(format!(
            "x_min = {} is not a multiple of delta = {}",
            m.x_min(),
            m.delta()
        ))
    })
}

fn increments(grid: &CdfGrid) -> Vec<f64> {
    let v = grid.values();
    let mut out = Vec::with_capacity(v.len());
    let mut prev = 0.0;
    for &x in v {
        out.push(x - prev);
        prev = x;
    }
    out
}

/// Law of `X + Y` for independent `X ~ a`, `Y ~ b` on the natural output mesh
/// `[a.x_min + b.x_min, a.x_max + b.x_max]`.
///
/// The mass of `b` in each cell `(y_{k-1}, y_k]` is placed at `y_k`, atoms
/// exactly where they are. Mass at or below a mesh's first node sits on that
/// node; the grids carry nothing above their last node. Written in increments
/// the sum is symmetric, so the result does not depend on argument order.
pub fn convolve(a: &CdfGrid, b: &CdfGrid) -> Result<CdfGrid> {
    if !a.mesh().compatible(b.mesh()) {
        return Err(Error::MeshMismatch(format!(
            "cannot convolve grids with delta {} and {}",
            a.mesh().delta(),
            b.mesh().delta()
        )));
    }
    let delta = a.mesh().delta();
    let (lo_a, lo_b) = (lattice_of(a.mesh())?, lattice_of(b.mesh())?);
    let da = increments(a);
    let db = increments(b);
    let (short, long) = if da.len() <= db.len() { (&da, &db) } else { (&db, &da) };
    let mut c = vec![0.0; da.len() + db.len() - 1];
    for (l, &w) in short.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for (out, &v) in c[l..l + long.len()].iter_mut().zip(long.iter()) {
            *out += w * v;
        }
    }
    let mut values = Vec::with_capacity(c.len());
    let mut acc = 0.0;
    for x in c {
        acc += x;
        values.push(acc.clamp(0.0, 1.0));
    }
    enforce_monotone(&mut values);
    let lo = lo_a + lo_b;
    let mesh = Mesh::lattice(delta, lo, lo + values.len() as i64 - 1)?;

    let mut atoms: Vec<Atom> = Vec::new();
    let idx_a = atom_lattice(a, lo_a);
    let idx_b = atom_lattice(b, lo_b);
    for &(ia, ma) in &idx_a {
        for &(ib, mb) in &idx_b {
            let mass = ma * mb;
            if mass <= ATOM_PRUNE {
                continue;
            }
            let j = (ia + ib - lo) as usize;
            match atoms.iter_mut().find(|at| at.x == mesh.x(j)) {
                Some(at) => at.mass += mass,
                None => atoms.push(Atom { x: mesh.x(j), mass }),
            }
        }
    }
    Ok(CdfGrid::from_parts(mesh, values, atoms))
}

fn atom_lattice(grid: &CdfGrid, lo: i64) -> Vec<(i64, f64)> {
    grid.atoms()
        .iter()
        .filter_map(|at| grid.mesh().nearest_index(at.x).map(|j| (lo + j as i64, at.mass)))
        .collect()
}

/// Re-samples a lattice grid onto another lattice mesh of the same step:
/// zero below the source mesh, its last value above. Atoms outside the
/// target are dropped from the list (their mass stays in the values).
pub fn restrict(grid: &CdfGrid, target: &Mesh) -> Result<CdfGrid> {
    if !grid.mesh().compatible(target) {
        return Err(Error::MeshMismatch(format!(
            "cannot move a grid with delta {} onto delta {}",
            grid.mesh().delta(),
            target.delta()
        )));
    }
    let src = lattice_of(grid.mesh())?;
    let dst = lattice_of(target)?;
    let values = (0..target.len())
        .map(|j| grid.node_value(dst + j as i64 - src))
        .collect();
    let atoms = atom_lattice(grid, src)
        .into_iter()
        .filter(|&(i, _)| i >= dst && i < dst + target.len() as i64)
        .map(|(i, m)| Atom { x: target.x((i - dst) as usize), mass: m })
        .collect();
    Ok(CdfGrid::from_parts(*target, values, atoms))
}

#[derive(Debug, Clone)]
pub struct ComposeConfig {
    pub delta: f64,
    pub h: f64,
    /// Output mesh is `[0, x_max]`, or `[-x_max, x_max]` when the kernel
    /// takes negative values.
    pub x_max: f64,
    pub atom_pinning: bool,
    pub breakpoints: Option<Vec<f64>>,
    pub probe_count: usize,
}

impl ComposeConfig {
    pub fn new(delta: f64, h: f64, x_max: f64) -> ComposeConfig {
        ComposeConfig {
            delta,
            h,
            x_max,
            atom_pinning: false,
            breakpoints: None,
            probe_count: 4096,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ComposeReport {
    pub plans: Vec<SegmentPlan>,
    pub warnings: Vec<SolveWarning>,
    /// `1 - h n*` over the whole horizon.
    pub stability_margin: f64,
    pub steps: usize,
    pub elapsed: Duration,
}

#[derive(Debug, Clone)]
pub struct Composed {
    pub grid: CdfGrid,
    pub report: ComposeReport,
}

/// CDF of `∫_0^T g(s) N(ds)` where `n` lives on `[0, T]`.
pub fn compose_piecewise(g: &Expression, n: &ControlDensity, cfg: &ComposeConfig) -> Result<Composed> {
    let started = Instant::now();
    let (t0, t1) = (n.start(), n.end());
    let margin = stability_check(cfg.h, n.n_star());
    if margin <= 0.0 {
        return Err(Error::StabilityViolation {
            margin,
            product: cfg.h * n.n_star(),
        });
    }
    let cells = cfg.x_max / cfg.delta;
    if !(cfg.x_max > 0.0) || (cells - cells.round()).abs() > 1e-9 * cells.round().max(1.0) {
        return Err(Error::InvalidMesh(format!(
            "x_max = {} must be a positive multiple of delta = {}",
            cfg.x_max, cfg.delta
        )));
    }
    let top = cells.round() as i64;

    let segments = segment_kernel(g, t0, t1, cfg.breakpoints.as_deref(), cfg.probe_count)?;
    let mut plans = Vec::with_capacity(segments.len());
    for seg in segments {
        let lambda = n.integrate(seg.t_start, seg.t_end)?;
        plans.push(SegmentPlan {
            transform: Transform::for_class(seg.class),
            segment: seg,
            lambda,
        });
    }

    let side = |sign: Sign| plans.iter().filter(move |p| p.segment.class.sign() == Some(sign));
    let reach_pos = tail_reach(side(Sign::Positive), n)?;
    let reach_neg = tail_reach(side(Sign::Negative), n)?;
    let has_negative = side(Sign::Negative).next().is_some();

    let output = if has_negative {
        Mesh::lattice(cfg.delta, -top, top)?
    } else {
        Mesh::lattice(cfg.delta, 0, top)?
    };
    let cells_for = |reach: f64| top + (reach / cfg.delta).ceil() as i64;
    let pos_mesh = Mesh::lattice(cfg.delta, 0, cells_for(reach_neg))?;
    let neg_mesh = Mesh::lattice(cfg.delta, 0, cells_for(reach_pos))?;

    // intermediate meshes are oversized on purpose, so their leak checks are moot
    let chain = |sign: Sign, mesh: Mesh| -> Result<(Option<CdfGrid>, usize)> {
        let mut acc: Option<CdfGrid> = None;
        let mut steps = 0;
        for plan in side(sign) {
            let seg = &plan.segment;
            if matches!(seg.class, KernelClass::Flat(_)) {
                continue;
            }
            let (a, b) = (seg.t_start, seg.t_end);
            let base = match sign {
                Sign::Positive => seg.expression.clone(),
                Sign::Negative => seg.expression.clone().negate(),
            };
            let reversed = matches!(
                plan.transform,
                Transform::TimeReversal | Transform::ReflectionAndTimeReversal
            );
            let init = match acc.take() {
                Some(grid) => InitialCondition::Grid(grid),
                None => InitialCondition::PointMassAtZero,
            };
            let mut scfg = SolveConfig::new(mesh, cfg.h);
            scfg.atom_pinning = cfg.atom_pinning;
            let sol = if reversed {
                let (gr, nr) = reverse_time(&base, n, a, b)?;
                solve_segment(&gr, &nr, a, b, &init, &scfg)?
            } else {
                solve_segment(&base, n, a, b, &init, &scfg)?
            };
            steps += sol.steps;
            acc = Some(sol.grid);
        }
        Ok((acc, steps))
    };

    let (pos, neg) = rayon::join(
        || chain(Sign::Positive, pos_mesh),
        || chain(Sign::Negative, neg_mesh),
    );
    let (pos, pos_steps) = pos?;
    let (neg, neg_steps) = neg?;

    let mut parts: Vec<CdfGrid> = Vec::new();
    parts.extend(pos);
    parts.extend(neg.map(|g| reflect(&g)));
    for plan in &plans {
        if let KernelClass::Flat(level) = plan.segment.class {
            if level.abs() <= FLAT_TOL {
                continue;
            }
            let k_max = poisson_pmf(plan.lambda).len() as f64;
            let base = if level > 0.0 { pos_mesh } else { neg_mesh };
            let hi = (base.len() as i64 - 1).max((k_max * level.abs() / cfg.delta).ceil() as i64 + 1);
            let mesh = Mesh::lattice(cfg.delta, 0, hi)?;
            let grid = flat_segment_cdf(level.abs(), plan.lambda, &mesh)?;
            parts.push(if level > 0.0 { grid } else { reflect(&grid) });
        }
    }

    let combined = match parts.len() {
        0 => CdfGrid::point_mass(Mesh::lattice(cfg.delta, 0, 0)?, 0.0)?,
        _ => {
            let mut it = parts.into_iter();
            let first = it.next().expect("non-empty");
            it.try_fold(first, |acc, next| convolve(&acc, &next))?
        }
    };
    let grid = restrict(&combined, &output)?;

    let mut warnings = Vec::new();
    if grid.mass_captured() < MASS_LEAK_THRESHOLD {
        warnings.push(SolveWarning::MassLeak {
            mass_captured: grid.mass_captured(),
        });
    }
    Ok(Composed {
        grid,
        report: ComposeReport {
            plans,
            warnings,
            stability_margin: margin,
            steps: pos_steps + neg_steps,
            elapsed: started.elapsed(),
        },
    })
}

/// `mean + TAIL_SDS * sd` of the part of the integral carried by `plans`,
/// never less than the largest `|g|` there. Zero when `plans` is empty.
fn tail_reach<'a>(plans: impl Iterator<Item = &'a SegmentPlan>, n: &ControlDensity) -> Result<f64> {
    let (mut mean, mut var, mut peak) = (0.0, 0.0, 0.0f64);
    for plan in plans {
        let seg = &plan.segment;
        let w = (seg.t_end - seg.t_start) / MOMENT_PANELS as f64;
        for k in 0..=MOMENT_PANELS {
            let s = seg.t_start + k as f64 * w;
            let weight = if k == 0 || k == MOMENT_PANELS {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let gv = seg.expression.evaluate(s)?.abs();
            let nv = n.value(s)?;
            mean += weight * w / 3.0 * gv * nv;
            var += weight * w / 3.0 * gv * gv * nv;
            peak = peak.max(gv);
        }
    }
    Ok((mean + TAIL_SDS * var.sqrt()).max(peak))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn poisson_atoms(level: f64, lambda: f64, x_max: f64, delta: f64) -> CdfGrid {
        flat_segment_cdf(level, lambda, &Mesh::from_origin(delta, x_max).unwrap()).unwrap()
    }

    #[test]
    fn reversal_substitutes() {
        let n = ControlDensity::on_horizon(Expression::Num(1.0), 2.0).unwrap();
        let (g, _) = reverse_time(&Expression::parse("exp(-s)").unwrap(), &n, 0.0, 2.0).unwrap();
        for s in [0.0, 0.3, 1.7, 2.0] {
            assert_abs_diff_eq!(g.evaluate(s).unwrap(), (s - 2.0f64).exp(), epsilon = 1e-15);
        }
    }

    #[test]
    fn flat_poisson_atoms() {
        let g = poisson_atoms(2.0, 1.0, 40.0, 0.5);
        let e = (-1.0f64).exp();
        let atoms = g.atoms();
        assert_eq!(atoms[0].x, 0.0);
        assert_abs_diff_eq!(atoms[0].mass, e, epsilon = 1e-15);
        assert_eq!(atoms[1].x, 2.0);
        assert_abs_diff_eq!(atoms[1].mass, e, epsilon = 1e-15);
        assert_abs_diff_eq!(atoms[2].mass, e / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.value_at(4.0), 2.5 * e, epsilon = 1e-15);
        assert_abs_diff_eq!(g.value_at(3.9), 2.0 * e, epsilon = 1e-15);

        let zero = poisson_atoms(2.0, 0.0, 4.0, 0.5);
        assert_eq!(zero.atoms(), &[Atom { x: 0.0, mass: 1.0 }]);
        assert!(zero.values().iter().all(|&v| v == 1.0));

        let err = flat_segment_cdf(2.0, 1.0, &Mesh::from_origin(0.5, 4.0).unwrap()).unwrap_err();
        assert!(matches!(err, Error::MeshTooShort(_)));
    }

    #[test]
    fn poisson_tail_is_small() {
        for lambda in [0.3, 1.0, 7.5, 800.0] {
            let p = poisson_pmf(lambda);
            let total: f64 = p.iter().sum();
            assert!((1.0 - total).abs() < 1e-11, "lambda {lambda}: {total}");
        }
    }

    #[test]
    fn reflect_examples() {
        let mesh = Mesh::new(0.5, 0.0, 2.0).unwrap();
        let pm = CdfGrid::point_mass(mesh, 0.0).unwrap();
        let r = reflect(&pm);
        assert_eq!(r.mesh().x_min(), -2.0);
        assert_eq!(r.mesh().x_max(), 0.0);
        assert_eq!(r.values(), &[0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(r.atoms(), &[Atom { x: 0.0, mass: 1.0 }]);

        let p = poisson_atoms(1.0, 1.0, 30.0, 0.5);
        let r = reflect(&p);
        // P(I <= -k) = P(-I >= k)
        for k in 0..5 {
            let tail = 1.0 - p.value_at(k as f64) + p.atom_mass_at_node(2 * k);
            assert_abs_diff_eq!(r.value_at(-(k as f64)), tail, epsilon = 1e-15);
        }
        assert!(r.validate().is_ok());
        let back = reflect(&r);
        assert_eq!(back.mesh(), p.mesh());
        for (u, v) in back.values().iter().zip(p.values()) {
            assert_abs_diff_eq!(u, v, epsilon = 1e-15);
        }
        assert_eq!(back.atoms().len(), p.atoms().len());
    }

    #[test]
    fn convolve_identity_and_poisson_sum() {
        let p = poisson_atoms(1.0, 1.0, 30.0, 0.5);
        let id = CdfGrid::point_mass(Mesh::from_origin(0.5, 1.0).unwrap(), 0.0).unwrap();
        let c = convolve(&p, &id).unwrap();
        let back = restrict(&c, p.mesh()).unwrap();
        assert_eq!(back.values(), p.values());

        let two = convolve(&p, &p).unwrap();
        let exact = poisson_pmf(2.0);
        for (k, &m) in exact.iter().enumerate().take(15) {
            let got: f64 = two.atoms().iter().filter(|a| a.x == k as f64).map(|a| a.mass).sum();
            assert_abs_diff_eq!(got, m, epsilon = 1e-10);
        }
    }

    #[test]
    fn convolve_rejects_mismatch() {
        let a = CdfGrid::point_mass(Mesh::from_origin(0.5, 1.0).unwrap(), 0.0).unwrap();
        let b = CdfGrid::point_mass(Mesh::from_origin(0.25, 1.0).unwrap(), 0.0).unwrap();
        assert!(matches!(convolve(&a, &b), Err(Error::MeshMismatch(_))));
    }

    #[test]
    fn zero_kernel_is_point_mass() {
        let n = ControlDensity::on_horizon(Expression::Num(1.0), 1.0).unwrap();
        let out = compose_piecewise(&Expression::Num(0.0), &n, &ComposeConfig::new(0.01, 0.01, 1.0)).unwrap();
        assert_eq!(out.grid.atoms(), &[Atom { x: 0.0, mass: 1.0 }]);
        assert!(out.grid.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn flat_kernel_is_scaled_poisson() {
        let n = ControlDensity::on_horizon(Expression::Num(1.0), 1.0).unwrap();
        let out = compose_piecewise(&Expression::Num(0.5), &n, &ComposeConfig::new(0.01, 0.01, 3.0)).unwrap();
        let e = (-1.0f64).exp();
        assert_abs_diff_eq!(out.grid.value_at(0.0), e, epsilon = 1e-12);
        assert_abs_diff_eq!(out.grid.value_at(0.5), 2.0 * e, epsilon = 1e-12);
        assert_abs_diff_eq!(out.grid.value_at(1.0), 2.5 * e, epsilon = 1e-12);
    }

    #[test]
    fn negative_flat_kernel_mirrors() {
        let n = ControlDensity::on_horizon(Expression::Num(1.0), 1.0).unwrap();
        let out = compose_piecewise(&Expression::Num(-0.5), &n, &ComposeConfig::new(0.01, 0.01, 3.0)).unwrap();
        let e = (-1.0f64).exp();
        assert_eq!(out.grid.mesh().x_min(), -3.0);
        assert_abs_diff_eq!(out.grid.value_at(0.0), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.grid.left_limit_at(0.0), 1.0 - e, epsilon = 1e-12);
        assert_abs_diff_eq!(out.grid.value_at(-0.5), 1.0 - 2.0 * e + e, epsilon = 1e-12);
    }

    #[test]
    fn unstable_horizon_rejected() {
        let n = ControlDensity::on_horizon(Expression::Num(3.0), 1.0).unwrap();
        let err = compose_piecewise(&Expression::Var, &n, &ComposeConfig::new(0.5, 0.5, 1.0)).unwrap_err();
        match err {
            Error::StabilityViolation { margin, .. } => assert!(margin < 0.0),
            other => panic!("{other:?}"),
        }
    }
}
