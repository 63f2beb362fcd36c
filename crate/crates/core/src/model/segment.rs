use crate::error::{Error, Result};
use crate::expr::Expression;

/// A segment is flat when its sampled range is below this.
pub const FLAT_TOL: f64 = 1e-10;

const BISECT_TOL: f64 = 1e-10;
const CLASSIFY_SAMPLES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelClass {
    IncreasingPositive,
    DecreasingPositive,
    IncreasingNegative,
    DecreasingNegative,
    Flat(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Positive,
    Negative,
}

impl KernelClass {
    /// Sign of the kernel on the segment; `None` for a flat zero level.
    pub fn sign(&self) -> Option<Sign> {
        match *self {
            KernelClass::IncreasingPositive | KernelClass::DecreasingPositive => Some(Sign::Positive),
            KernelClass::IncreasingNegative | KernelClass::DecreasingNegative => Some(Sign::Negative),
            KernelClass::Flat(level) if level > FLAT_TOL => Some(Sign::Positive),
            KernelClass::Flat(level) if level < -FLAT_TOL => Some(Sign::Negative),
            KernelClass::Flat(_) => None,
        }
    }
}

/// Sub-interval of the time axis on which the kernel is monotone with a fixed
/// sign, or flat.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSegment {
    pub t_start: f64,
    pub t_end: f64,
    pub expression: Expression,
    pub class: KernelClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dir {
    Up,
    Down,
    Flat,
}

/// Splits `[start, end]` into monotone, single-signed pieces of `g`.
///
/// Explicit `breakpoints` are used verbatim. Otherwise `g` is sampled on
/// `probe_count` uniform cells; changes of direction and of sign are located
/// and refined by bisection to `1e-10`.
pub fn segment_kernel(
    g: &Expression,
    start: f64,
    end: f64,
    breakpoints: Option<&[f64]>,
    probe_count: usize,
) -> Result<Vec<KernelSegment>> {
    if !(start.is_finite() && end.is_finite() && end > start) {
        return Err(Error::InvalidInput(format!("segment interval [{start}, {end}] is empty")));
    }
    if probe_count < 64 {
        return Err(Error::InvalidInput(format!("probe_count must be >= 64, got {probe_count}")));
    }
    let cuts = match breakpoints {
        Some(bps) => {
            let mut prev = start;
            for &b in bps {
                if !(b > prev && b < end) {
                    return Err(Error::InvalidInput(format!(
                        "breakpoint {b} must be increasing and inside ({start}, {end})"
                    )));
                }
                prev = b;
            }
            bps.to_vec()
        }
        None => detect_breakpoints(g, start, end, probe_count)?,
    };
    if cuts.len() > probe_count / 4 {
        return Err(Error::SegmentationFailure(format!(
            "{} boundaries detected with {probe_count} probes; the kernel oscillates too fast",
            cuts.len()
        )));
    }
    let mut edges = Vec::with_capacity(cuts.len() + 2);
    edges.push(start);
    edges.extend_from_slice(&cuts);
    edges.push(end);
    edges
        .windows(2)
        .map(|w| {
            Ok(KernelSegment {
                t_start: w[0],
                t_end: w[1],
                expression: g.clone(),
                class: classify(g, w[0], w[1])?,
            })
        })
        .collect()
}

fn classify(g: &Expression, a: f64, b: f64) -> Result<KernelClass> {
    let vals = (0..=CLASSIFY_SAMPLES)
        .map(|k| {
            let t = if k == CLASSIFY_SAMPLES {
                b
            } else {
                a + (b - a) * k as f64 / CLASSIFY_SAMPLES as f64
            };
            g.evaluate(t)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < FLAT_TOL {
        return Ok(KernelClass::Flat(g.evaluate(0.5 * (a + b))?));
    }
    let increasing = vals[CLASSIFY_SAMPLES] > vals[0];
    let slack = 1e-9 + 1e-6 * (hi - lo);
    let monotone = vals.windows(2).all(|w| {
        if increasing {
            w[1] >= w[0] - slack
        } else {
            w[1] <= w[0] + slack
        }
    });
    if !monotone {
        return Err(Error::SegmentationFailure(format!(
            "kernel is not monotone on [{a}, {b}]"
        )));
    }
    let sign_tol = 1e-7 * hi.abs().max(lo.abs()).max(1.0);
    let positive = lo >= -sign_tol;
    let negative = hi <= sign_tol;
    Ok(match (positive, negative, increasing) {
        (true, _, true) => KernelClass::IncreasingPositive,
        (true, _, false) => KernelClass::DecreasingPositive,
        (false, true, true) => KernelClass::IncreasingNegative,
        (false, true, false) => KernelClass::DecreasingNegative,
        (false, false, _) => {
            return Err(Error::SegmentationFailure(format!(
                "kernel changes sign inside [{a}, {b}]"
            )))
        }
    })
}

fn detect_breakpoints(g: &Expression, start: f64, end: f64, probes: usize) -> Result<Vec<f64>> {
    let cell = (end - start) / probes as f64;
    let t = |k: usize| if k == probes { end } else { start + k as f64 * cell };
    let vals = (0..=probes)
        .map(|k| g.evaluate(t(k)))
        .collect::<Result<Vec<_>, _>>()?;

    let mut found = Vec::new();

    // direction changes between runs of equally-directed cells
    let mut runs: Vec<(Dir, usize, usize)> = Vec::new();
    for k in 0..probes {
        let d = vals[k + 1] - vals[k];
        let dir = if d > FLAT_TOL {
            Dir::Up
        } else if d < -FLAT_TOL {
            Dir::Down
        } else {
            Dir::Flat
        };
        match runs.last_mut() {
            Some(run) if run.0 == dir => run.2 = k,
            _ => runs.push((dir, k, k)),
        }
    }
    // single flat cells are sub-resolution transits (extrema or inflections)
    let mut kept: Vec<(Dir, usize, usize)> = Vec::new();
    for run in runs {
        if run.0 == Dir::Flat && run.1 == run.2 {
            continue;
        }
        match kept.last_mut() {
            Some(prev) if prev.0 == run.0 => prev.2 = run.2,
            _ => kept.push(run),
        }
    }
    for pair in kept.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let lo = t(a.2);
        let hi = t((b.1 + 1).min(probes));
        found.push(refine_direction(g, a.0, lo, hi, cell, start, end)?);
    }

    // sign changes, skipping samples that sit on zero
    let mut last: Option<(usize, bool)> = None;
    for (k, &v) in vals.iter().enumerate() {
        if v.abs() <= FLAT_TOL {
            continue;
        }
        let positive = v > 0.0;
        if let Some((p, was_positive)) = last {
            if was_positive != positive {
                found.push(refine_sign(g, was_positive, t(p), t(k))?);
            }
        }
        last = Some((k, positive));
    }

    found.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::new();
    for x in found {
        if x - start <= 1e-8 || end - x <= 1e-8 {
            continue;
        }
        if out.last().is_some_and(|&p| x - p <= 1e-8) {
            continue;
        }
        out.push(x);
    }
    Ok(out)
}

fn refine_sign(g: &Expression, left_positive: bool, mut lo: f64, mut hi: f64) -> Result<f64> {
    for _ in 0..200 {
        if hi - lo <= BISECT_TOL {
            break;
        }
        let m = 0.5 * (lo + hi);
        let v = g.evaluate(m)?;
        if v == 0.0 {
            return Ok(m);
        }
        if (v > 0.0) == left_positive {
            lo = m;
        } else {
            hi = m;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn refine_direction(
    g: &Expression,
    left: Dir,
    mut lo: f64,
    mut hi: f64,
    cell: f64,
    start: f64,
    end: f64,
) -> Result<f64> {
    let eps = (1e-7 * (end - start)).min(0.25 * cell);
    let left_like = |m: f64| -> Result<bool> {
        let a = (m - eps).max(start);
        let b = (m + eps).min(end);
        let d = g.evaluate(b)? - g.evaluate(a)?;
        let thr = 1e-14 * g.evaluate(m)?.abs().max(1.0);
        Ok(match left {
            Dir::Up => d > thr,
            Dir::Down => d < -thr,
            Dir::Flat => d.abs() <= thr,
        })
    };
    for _ in 0..200 {
        if hi - lo <= BISECT_TOL {
            break;
        }
        let m = 0.5 * (lo + hi);
        if left_like(m)? {
            lo = m;
        } else {
            hi = m;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn segments(text: &str, a: f64, b: f64) -> Vec<KernelSegment> {
        segment_kernel(&Expression::parse(text).unwrap(), a, b, None, 4096).unwrap()
    }

    fn assert_tiles(segs: &[KernelSegment], a: f64, b: f64) {
        assert_eq!(segs.first().unwrap().t_start, a);
        assert_eq!(segs.last().unwrap().t_end, b);
        for w in segs.windows(2) {
            assert_eq!(w[0].t_end, w[1].t_start);
            assert!(w[0].t_start < w[0].t_end);
        }
    }

    #[test]
    fn parabola_splits_at_its_maximum() {
        let segs = segments("1-(1-s)^2", 0.0, 2.0);
        assert_tiles(&segs, 0.0, 2.0);
        assert_eq!(segs.len(), 2);
        assert!((segs[0].t_end - 1.0).abs() < 1e-6);
        assert_eq!(segs[0].class, KernelClass::IncreasingPositive);
        assert_eq!(segs[1].class, KernelClass::DecreasingPositive);
    }

    #[test]
    fn identity_is_one_segment() {
        let segs = segments("s", 0.0, 1.0);
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].class, KernelClass::IncreasingPositive);
    }

    #[test]
    fn sine_has_four_pieces() {
        let segs = segments("sin(2*pi*s)", 0.0, 1.0);
        assert_tiles(&segs, 0.0, 1.0);
        let bounds: Vec<f64> = segs.iter().skip(1).map(|s| s.t_start).collect();
        // oracle: dense sampling of sin(2 pi s) for direction and sign changes
        let n = 1_000_000;
        let v: Vec<f64> = (0..=n)
            .map(|k| (2.0 * std::f64::consts::PI * k as f64 / n as f64).sin())
            .collect();
        let mut oracle = Vec::new();
        for k in 1..n {
            if (v[k] - v[k - 1]) * (v[k + 1] - v[k]) < 0.0 {
                oracle.push(k as f64 / n as f64);
            }
        }
        for k in 0..n {
            let crosses = (v[k] >= 0.0 && v[k + 1] < 0.0) || (v[k] <= 0.0 && v[k + 1] > 0.0);
            if crosses && k > 0 {
                oracle.push((k as f64 + 0.5) / n as f64);
            }
        }
        oracle.sort_by(f64::total_cmp);
        oracle.dedup_by(|a, b| (*a - *b).abs() < 1e-5);
        assert_eq!(bounds.len(), 3);
        for (b, o) in bounds.iter().zip(&oracle) {
            assert!((b - o).abs() < 2e-6, "{b} vs {o}");
        }
        assert!((bounds[0] - 0.25).abs() < 1e-6);
        assert!((bounds[1] - 0.5).abs() < 1e-9);
        assert!((bounds[2] - 0.75).abs() < 1e-6);
        let classes: Vec<KernelClass> = segs.iter().map(|s| s.class).collect();
        assert_eq!(
            classes,
            vec![
                KernelClass::IncreasingPositive,
                KernelClass::DecreasingPositive,
                KernelClass::DecreasingNegative,
                KernelClass::IncreasingNegative
            ]
        );
    }

    #[test]
    fn flat_pieces() {
        let segs = segments("min(s, 0.5)", 0.0, 1.0);
        assert_eq!(segs.len(), 2);
        assert!((segs[0].t_end - 0.5).abs() < 1e-6);
        assert_eq!(segs[1].class, KernelClass::Flat(0.5));
        let segs = segments("2", 0.0, 1.0);
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].class, KernelClass::Flat(2.0));
        assert_eq!(segs[0].class.sign(), Some(Sign::Positive));
        assert_eq!(segments("0", 0.0, 1.0)[0].class.sign(), None);
    }

    #[test]
    fn explicit_breakpoints_are_honored() {
        let g = Expression::parse("sin(2*pi*s)").unwrap();
        let segs = segment_kernel(&g, 0.0, 1.0, Some(&[0.25, 0.5, 0.75]), 64).unwrap();
        assert_eq!(segs[1].t_start, 0.25);
        assert_eq!(segs[2].t_start, 0.5);
        assert_eq!(segs[3].class, KernelClass::IncreasingNegative);
        assert!(segment_kernel(&g, 0.0, 1.0, Some(&[0.5]), 64).is_err());
        assert!(segment_kernel(&g, 0.0, 1.0, Some(&[0.5, 0.25]), 64).is_err());
    }

    #[test]
    fn fast_oscillation_fails() {
        let g = Expression::parse("sin(40*pi*s)").unwrap();
        let err = segment_kernel(&g, 0.0, 1.0, None, 64).unwrap_err();
        assert!(matches!(err, Error::SegmentationFailure(_)), "{err:?}");
        assert!(segment_kernel(&g, 0.0, 1.0, None, 32).is_err());
    }
}
