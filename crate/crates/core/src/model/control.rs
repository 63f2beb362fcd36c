use crate::error::{Error, Result};
use crate::expr::Expression;

/// Cells in the cached cumulative-integral table.
pub const CUMULATIVE_CELLS: usize = 8192;

const SUP_POINTS: usize = 4096;
const SUP_MARGIN: f64 = 1e-6;
const MIN_PANELS: usize = 1024;
const MAX_PANELS: usize = 1 << 22;
const REL_TOL: f64 = 1e-8;

/// Density `n(s)` of the control measure on `[start, end]`.
///
/// Construction samples `n`, rejects negative or non-finite values and caches
/// its supremum and a cumulative-integral table.
#[derive(Debug, Clone)]
pub struct ControlDensity {
    expression: Expression,
    start: f64,
    end: f64,
    n_star: f64,
    cumulative: Vec<f64>,
}

impl ControlDensity {
    pub fn new(expression: Expression, start: f64, end: f64) -> Result<ControlDensity> {
        if !(start.is_finite() && end.is_finite() && end > start) {
            return Err(Error::InvalidInput(format!(
                "control density domain [{start}, {end}] is empty"
            )));
        }
        let mut n = ControlDensity {
            expression,
            start,
            end,
            n_star: 0.0,
            cumulative: Vec::new(),
        };
        n.n_star = n.sup_on(start, end)?;
        let w = (end - start) / CUMULATIVE_CELLS as f64;
        let mut cumulative = Vec::with_capacity(CUMULATIVE_CELLS + 1);
        cumulative.push(0.0);
        let mut acc = 0.0;
        let mut left = n.value(start)?;
        for k in 0..CUMULATIVE_CELLS {
            let a = start + k as f64 * w;
            let b = if k + 1 == CUMULATIVE_CELLS { end } else { a + w };
            let q1 = n.value(a + 0.25 * (b - a))?;
            let mid = n.value(0.5 * (a + b))?;
            let q3 = n.value(a + 0.75 * (b - a))?;
            let right = n.value(b)?;
            acc += (b - a) / 12.0 * (left + 4.0 * q1 + 2.0 * mid + 4.0 * q3 + right);
            cumulative.push(acc);
            left = right;
        }
        n.cumulative = cumulative;
        Ok(n)
    }

    /// Density on `[0, horizon]`.
    pub fn on_horizon(expression: Expression, horizon: f64) -> Result<ControlDensity> {
        ControlDensity::new(expression, 0.0, horizon)
    }

    pub fn expression(&self) -> &Expression {
        &self.expression
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    /// Cached `sup n` over the whole domain, margin included.
    pub fn n_star(&self) -> f64 {
        self.n_star
    }

    pub fn is_zero(&self) -> bool {
        self.n_star == 0.0
    }

    /// `n(s)`, rejecting negative and non-finite values.
    pub fn value(&self, s: f64) -> Result<f64> {
        match self.expression.evaluate(s) {
            Ok(v) if v >= 0.0 => Ok(v),
            Ok(v) => Err(Error::NonFiniteDensity { at: s, value: v }),
            Err(_) => Err(Error::NonFiniteDensity {
                at: s,
                value: f64::NAN,
            }),
        }
    }

    /// Maximum over `SUP_POINTS` uniform cells of `[a, b]`, inflated by the
    /// safety margin.
    pub fn sup_on(&self, a: f64, b: f64) -> Result<f64> {
        let mut best = 0.0f64;
        for k in 0..=SUP_POINTS {
            let s = if k == SUP_POINTS {
                b
            } else {
                a + (b - a) * k as f64 / SUP_POINTS as f64
            };
            best = best.max(self.value(s)?);
        }
        Ok(best * (1.0 + SUP_MARGIN))
    }

    /// `∫_start^t n(s) ds` from the cached table plus a Simpson correction on
    /// the partial cell.
    pub fn cumulative(&self, t: f64) -> Result<f64> {
        let t = t.clamp(self.start, self.end);
        let w = (self.end - self.start) / CUMULATIVE_CELLS as f64;
        let k = (((t - self.start) / w).floor() as usize).min(CUMULATIVE_CELLS - 1);
        let a = self.start + k as f64 * w;
        if t <= a {
            return Ok(self.cumulative[k]);
        }
        let m = 0.5 * (a + t);
        let part = (t - a) / 6.0 * (self.value(a)? + 4.0 * self.value(m)? + self.value(t)?);
        Ok(self.cumulative[k] + part)
    }

    /// The cumulative table: entry `k` is the integral up to
    /// `start + k * (end - start) / CUMULATIVE_CELLS`.
    pub fn cumulative_table(&self) -> &[f64] {
        &self.cumulative
    }

    /// `∫_a^b n(s) ds` by composite Simpson, doubling the panel count from 1024
    /// until it agrees with the half-panel estimate to `1e-8` relative.
    pub fn integrate(&self, a: f64, b: f64) -> Result<f64> {
        let slack = 1e-12 * (self.end - self.start).max(1.0);
        if a < self.start - slack || b > self.end + slack || a > b {
            return Err(Error::InvalidInput(format!(
                "integration range [{a}, {b}] outside [{}, {}]",
                self.start, self.end
            )));
        }
        if a == b {
            return Ok(0.0);
        }
        let mut coarse = self.simpson(a, b, MIN_PANELS / 2)?;
        let mut panels = MIN_PANELS;
        loop {
            let fine = self.simpson(a, b, panels)?;
            if (fine - coarse).abs() <= REL_TOL * fine.abs() + 1e-15 {
                return Ok(fine);
            }
            if panels >= MAX_PANELS {
                return Err(Error::QuadratureFailure(format!(
                    "Simpson rule for the control density on [{a}, {b}] did not settle"
                )));
            }
            coarse = fine;
            panels *= 2;
        }
    }

    fn simpson(&self, a: f64, b: f64, panels: usize) -> Result<f64> {
        let w = (b - a) / panels as f64;
        let mut sum = self.value(a)? + self.value(b)?;
        for k in 1..panels {
            let weight = if k % 2 == 1 { 4.0 } else { 2.0 };
            sum += weight * self.value(a + k as f64 * w)?;
        }
        Ok(sum * w / 3.0)
    }

    /// The density viewed on the reversed clock: `s -> n(a + b - s)` on `[a, b]`.
    pub fn reversed(&self, a: f64, b: f64) -> Result<ControlDensity> {
        let flip = crate::expr::Expression::binary(
            crate::expr::BinOp::Sub,
            Expression::Num(a + b),
            Expression::Var,
        );
        ControlDensity::new(self.expression.substitute(&flip), a, b)
    }

    /// Same density restricted to a sub-interval.
    pub fn restricted(&self, a: f64, b: f64) -> Result<ControlDensity> {
        ControlDensity::new(self.expression.clone(), a, b)
    }
}

/// `∫_a^b n(s) ds`.
pub fn integrate_control(n: &ControlDensity, a: f64, b: f64) -> Result<f64> {
    n.integrate(a, b)
}

/// `n*_T = sup_{start <= s <= t} n(s)`, margin included.
pub fn sup_control(n: &ControlDensity, t: f64) -> Result<f64> {
    n.sup_on(n.start(), t)
}
