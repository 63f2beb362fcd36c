//! Independent ground truths: the exact series for `g(s) = s`, Monte Carlo
//! simulation of the integral, and characteristic-function inversion.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::model::{Atom, CdfGrid, ControlDensity, Mesh};

/// Terms of the exact series used by default.
pub const SERIES_TERMS: usize = 11;

/// Sampling law of one arrival time on `[start, t]`: density `n(s) / ∫ n`,
/// drawn by inverting the tabulated cumulative integral.
#[derive(Debug, Clone)]
pub struct ArrivalLaw {
    start: f64,
    t: f64,
    normalizer: f64,
    /// Cumulative integral at `start + k (t - start) / cells`.
    table: Vec<f64>,
}

impl ArrivalLaw {
    pub fn new(n: &ControlDensity) -> ArrivalLaw {
        let table = n.cumulative_table().to_vec();
        ArrivalLaw {
            start: n.start(),
            t: n.end(),
            normalizer: *table.last().unwrap_or(&0.0),
            table,
        }
    }

    /// `∫ n` over the horizon.
    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    /// Time `s` with `∫_start^s n = u ∫ n`, linear within a table cell.
    pub fn inverse_cdf(&self, u: f64) -> f64 {
        let target = u.clamp(0.0, 1.0) * self.normalizer;
        let cells = self.table.len() - 1;
        let k = self.table.partition_point(|&c| c < target).clamp(1, cells);
        let (lo, hi) = (self.table[k - 1], self.table[k]);
        let frac = if hi > lo { (target - lo) / (hi - lo) } else { 0.0 };
        let w = (self.t - self.start) / cells as f64;
        (self.start + (k - 1) as f64 * w + frac * w).min(self.t)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.inverse_cdf(rng.random::<f64>())
    }
}

fn binomial(k: usize, m: usize) -> f64 {
    (0..m).fold(1.0, |acc, i| acc * (k - i) as f64 / (i + 1) as f64)
}

/// CDF of the sum of `k` independent `U(0, 1)` variables.
pub fn irwin_hall_k(k: usize, x: f64) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    if k == 0 || x >= k as f64 {
        return 1.0;
    }
    let fact: f64 = (1..=k).map(|i| i as f64).product();
    let mut sum = 0.0;
    for m in 0..=(x.floor() as usize) {
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * binomial(k, m) * (x - m as f64).powi(k as i32);
    }
    (sum / fact).clamp(0.0, 1.0)
}

/// Exact CDF of `∫_0^1 s N(ds)` under unit intensity, truncated to `terms`
/// Poisson counts: `Σ_k e^{-1} / k! P_k(x)`.
pub fn irwin_hall_cdf(x: f64, terms: usize) -> f64 {
    let e = (-1.0f64).exp();
    let mut weight = e;
    let mut total = 0.0;
    for k in 0..terms.max(1) {
        if k > 0 {
            weight /= k as f64;
        }
        total += weight * irwin_hall_k(k, x);
    }
    total
}

/// [`irwin_hall_cdf`] on every node of `mesh`, with the atom `(0, e^{-1})`.
pub fn irwin_hall_grid(mesh: &Mesh, terms: usize) -> Result<CdfGrid> {
    let values = mesh.nodes().map(|x| irwin_hall_cdf(x, terms)).collect();
    let atoms = if mesh.nearest_index(0.0).is_some() {
        vec![Atom {
            x: 0.0,
            mass: (-1.0f64).exp(),
        }]
    } else {
        vec![]
    };
    CdfGrid::new(*mesh, values, atoms)
}

/// One replicate's generator: the seed picks the key, the replicate index the
/// stream, so results do not depend on how replicates are spread over threads.
pub fn replicate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// `count` independent draws of `∫ g dN` over the horizon of `n`, sorted.
pub fn mc_sample(g: &Expression, n: &ControlDensity, count: usize, seed: u64) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::InvalidInput("sample count must be at least 1".into()));
    }
    let law = ArrivalLaw::new(n);
    let lambda = law.normalizer();
    let poisson = if lambda > 0.0 {
        Some(Poisson::new(lambda).map_err(|e| Error::InvalidInput(format!("Poisson mean {lambda}: {e}")))?)
    } else {
        None
    };
    let mut out = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = replicate_rng(seed, i);
            let arrivals = match &poisson {
                Some(p) => p.sample(&mut rng) as u64,
                None => 0,
            };
            let mut total = 0.0;
            for _ in 0..arrivals {
                total += g.evaluate(law.sample(&mut rng))?;
            }
            Ok(total)
        })
        .collect::<Result<Vec<f64>>>()?;
    out.par_sort_unstable_by(f64::total_cmp);
    Ok(out)
}

/// Kolmogorov-Smirnov distance between sorted `samples` and `grid`, checked
/// on both sides of every distinct sample value.
pub fn ecdf_distance(samples: &[f64], grid: &CdfGrid) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("no samples".into()));
    }
    if grid.values().is_empty() {
        return Err(Error::InvalidGrid("empty grid".into()));
    }
    let m = samples.len() as f64;
    let mut worst = 0.0f64;
    let mut i = 0;
    while i < samples.len() {
        let v = samples[i];
        let mut j = i;
        while j < samples.len() && samples[j] == v {
            j += 1;
        }
        let below = i as f64 / m;
        let at = j as f64 / m;
        worst = worst
            .max((at - grid.value_at(v)).abs())
            .max((below - grid.left_limit_at(v)).abs());
        i = j;
    }
    Ok(worst)
}

/// Settings of the characteristic-function inversion: trapezoid rule on
/// `[0, t_i]` with step `eta`.
#[derive(Debug, Clone)]
pub struct CfSpec {
    pub g: Expression,
    pub n: ControlDensity,
    pub t_i: f64,
    pub eta: f64,
    /// Absolute tolerance of each inner integral.
    pub tol: f64,
    /// Function evaluations allowed per inner integral.
    pub budget: usize,
}

impl CfSpec {
    pub fn new(g: Expression, n: ControlDensity, t_i: f64, eta: f64) -> Result<CfSpec> {
        let spec = CfSpec {
            g,
            n,
            t_i,
            eta,
            tol: 1e-8,
            budget: 2_000_000,
        };
        spec.nodes()?;
        Ok(spec)
    }

    /// `K = t_i / eta`.
    pub fn nodes(&self) -> Result<usize> {
        if !(self.eta > 0.0 && self.t_i > 0.0) {
            return Err(Error::InvalidInput("t_i and eta must be positive".into()));
        }
        let k = self.t_i / self.eta;
        if (k - k.round()).abs() > 1e-9 * k.round().max(1.0) {
            return Err(Error::InvalidInput(format!("t_i / eta = {k} is not an integer")));
        }
        Ok(k.round() as usize)
    }
}

/// Tabulated `Re φ̄(u_j)` on the trapezoid nodes, reusable for many `x`.
#[derive(Debug, Clone)]
pub struct CfInverter {
    eta: f64,
    atom: f64,
    re_phi_bar: Vec<f64>,
}

impl CfInverter {
    pub fn new(spec: &CfSpec) -> Result<CfInverter> {
        let k = spec.nodes()?;
        let (a, b) = (spec.n.start(), spec.n.end());
        let lambda = spec.n.integrate(a, b)?;
        let atom = (-lambda).exp();
        let range = kernel_range(&spec.g, a, b)?;
        let mut re_phi_bar = Vec::with_capacity(k + 1);
        for j in 0..=k {
            let theta = j as f64 * spec.eta;
            let inner = inner_integral(spec, theta, range)?;
            re_phi_bar.push((inner.exp() - atom).re);
        }
        Ok(CfInverter {
            eta: spec.eta,
            atom,
            re_phi_bar,
        })
    }

    /// `F(x) = e^{-Λ} + (2/π) Σ_j w_j Re φ̄(u_j) sin(x u_j) / u_j`, the `j = 0`
    /// term taking the limit `x`.
    pub fn cdf(&self, x: f64) -> f64 {
        let last = self.re_phi_bar.len() - 1;
        let mut sum = 0.0;
        for (j, &re) in self.re_phi_bar.iter().enumerate() {
            let w = if j == 0 || j == last { 0.5 } else { 1.0 };
            let kernel = if j == 0 {
                x
            } else {
                let u = j as f64 * self.eta;
                (x * u).sin() / u
            };
            sum += w * re * kernel;
        }
        self.atom + 2.0 / std::f64::consts::PI * self.eta * sum
    }

    /// `Re φ̄` at the trapezoid nodes.
    pub fn re_phi_bar(&self) -> &[f64] {
        &self.re_phi_bar
    }
}

/// CDF at `x > 0` by characteristic-function inversion. Use [`CfInverter`]
/// to evaluate several points from one table.
pub fn cf_inversion_cdf(spec: &CfSpec, x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::InvalidInput(format!("inversion needs x > 0, got {x}")));
    }
    Ok(CfInverter::new(spec)?.cdf(x))
}

fn kernel_range(g: &Expression, a: f64, b: f64) -> Result<f64> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for k in 0..=1024 {
        let v = g.evaluate(a + (b - a) * k as f64 / 1024.0)?;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok(hi - lo)
}

/// `∫ (e^{iθ g(s)} - 1) n(s) ds` by adaptive Simpson over
/// `4 (1 + θ range(g))` starting panels.
fn inner_integral(spec: &CfSpec, theta: f64, range: f64) -> Result<Complex64> {
    if theta == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let f = |s: f64| -> Result<Complex64> {
        let gv = spec.g.evaluate(s)?;
        let nv = spec.n.value(s)?;
        Ok((Complex64::new(0.0, theta * gv).exp() - 1.0) * nv)
    };
    let (a, b) = (spec.n.start(), spec.n.end());
    let panels = (4.0 * (1.0 + theta * range)).ceil() as usize;
    let w = (b - a) / panels as f64;
    let mut evals = 0usize;
    let mut total = Complex64::new(0.0, 0.0);
    let mut left = f(a)?;
    for p in 0..panels {
        let lo = a + p as f64 * w;
        let hi = if p + 1 == panels { b } else { lo + w };
        let mid = f(0.5 * (lo + hi))?;
        let right = f(hi)?;
        evals += 2;
        let whole = (hi - lo) / 6.0 * (left + 4.0 * mid + right);
        let tol = spec.tol * (hi - lo) / (b - a);
        total += adaptive(&f, lo, hi, left, mid, right, whole, tol, 40, &mut evals, spec.budget)?;
        left = right;
    }
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn adaptive<F>(
    f: &F,
    a: f64,
    b: f64,
    fa: Complex64,
    fm: Complex64,
    fb: Complex64,
    whole: Complex64,
    tol: f64,
    depth: u32,
    evals: &mut usize,
    budget: usize,
) -> Result<Complex64>
where
    F: Fn(f64) -> Result<Complex64>,
{
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let flm = f(lm)?;
    let frm = f(rm)?;
    *evals += 2;
    if *evals > budget {
        return Err(Error::QuadratureFailure(format!(
            "inner integral exceeded {budget} evaluations"
        )));
    }
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if depth == 0 || diff.norm() <= 15.0 * tol {
        return Ok(left + right + diff / 15.0);
    }
    Ok(adaptive(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, evals, budget)?
        + adaptive(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, evals, budget)?)
}
