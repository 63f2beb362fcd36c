//! The problem description shared by the command line and the HTTP service.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::expr::Expression;
use crate::io::RunMeta;
use crate::model::ControlDensity;
use crate::solver::stability_check;
use crate::transforms::{compose_piecewise, ComposeConfig, Composed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub g: String,
    pub n: String,
    #[serde(rename = "T")]
    pub t: f64,
    pub delta: f64,
    pub h: f64,
    pub x_max: f64,
    #[serde(default)]
    pub atom_pinning: bool,
}

/// A problem with one input field, with the byte offset for parse errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offset: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("invalid input: {}", describe(.0))]
    Fields(Vec<FieldError>),
    #[error("stability violation: h * n* = {product} >= 1 (margin {margin})")]
    Stability { margin: f64, product: f64 },
}

fn describe(errors: &[FieldError]) -> String {
    errors
        .iter()
        .map(|e| format!("{}: {}", e.field, e.message))
        .collect::<Vec<_>>()
        .join("; ")
}

/// A validated problem, ready to solve.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub g: Expression,
    pub n: ControlDensity,
    pub compose: ComposeConfig,
    pub meta: RunMeta,
    pub stability_margin: f64,
}

impl Prepared {
    pub fn solve(&self) -> crate::Result<Composed> {
        compose_piecewise(&self.g, &self.n, &self.compose)
    }
}

fn field(field: &str, message: impl Into<String>) -> FieldError {
    FieldError {
        field: field.into(),
        message: message.into(),
        offset: None,
    }
}

impl RunConfig {
    /// Parses both expressions, checks the numbers and runs the stability
    /// gate, all before any time step.
    pub fn prepare(&self) -> Result<Prepared, ConfigError> {
        let mut errors = Vec::new();
        let mut parse = |name: &str, text: &str| match Expression::parse(text) {
            Ok(e) => Some(e),
            Err(e) => {
                errors.push(FieldError {
                    field: name.into(),
                    message: e.to_string(),
                    offset: Some(e.offset()),
                });
                None
            }
        };
        let g = parse("g", &self.g);
        let n = parse("n", &self.n);
        for (name, v) in [("T", self.t), ("delta", self.delta), ("h", self.h), ("x_max", self.x_max)] {
            if !(v.is_finite() && v > 0.0) {
                errors.push(field(name, format!("must be a positive number, got {v}")));
            }
        }
        if errors.is_empty() {
            let cells = self.x_max / self.delta;
            if (cells - cells.round()).abs() > 1e-9 * cells.round().max(1.0) {
                errors.push(field("x_max", format!("must be a multiple of delta; x_max / delta = {cells}")));
            }
        }
        let (Some(g), Some(n), true) = (g, n, errors.is_empty()) else {
            return Err(ConfigError::Fields(errors));
        };
        let n = ControlDensity::on_horizon(n, self.t).map_err(|e| match e {
            Error::NonFiniteDensity { at, value } => ConfigError::Fields(vec![field(
                "n",
                format!("density must be finite and non-negative; n({at}) = {value}"),
            )]),
            other => ConfigError::Fields(vec![field("n", other.to_string())]),
        })?;
        let margin = stability_check(self.h, n.n_star());
        if margin <= 0.0 {
            return Err(ConfigError::Stability {
                margin,
                product: self.h * n.n_star(),
            });
        }
        let mut compose = ComposeConfig::new(self.delta, self.h, self.x_max);
        compose.atom_pinning = self.atom_pinning;
        Ok(Prepared {
            g,
            n,
            compose,
            meta: RunMeta {
                g: self.g.clone(),
                n: self.n.clone(),
                t: self.t,
                delta: self.delta,
                h: self.h,
            },
            stability_margin: margin,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_one() -> RunConfig {
        RunConfig {
            g: "s".into(),
            n: "1".into(),
            t: 1.0,
            delta: 0.01,
            h: 0.01,
            x_max: 3.0,
            atom_pinning: false,
        }
    }

    #[test]
    fn accepts_valid_config() {
        let p = example_one().prepare().unwrap();
        assert!((p.stability_margin - (1.0 - 0.01 * 1.000001)).abs() < 1e-15);
    }

    #[test]
    fn reports_parse_offsets() {
        let cfg = RunConfig {
            g: "s^".into(),
            n: "q".into(),
            ..example_one()
        };
        match cfg.prepare().unwrap_err() {
            ConfigError::Fields(errs) => {
                assert_eq!(errs[0].field, "g");
                assert_eq!(errs[0].offset, Some(2));
                assert_eq!(errs[1].field, "n");
                assert_eq!(errs[1].offset, Some(0));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_numbers_and_densities() {
        let cfg = RunConfig { x_max: 3.005, delta: 0.01, ..example_one() };
        assert!(matches!(cfg.prepare(), Err(ConfigError::Fields(_))));
        let cfg = RunConfig { h: -1.0, ..example_one() };
        assert!(matches!(cfg.prepare(), Err(ConfigError::Fields(_))));
        let cfg = RunConfig { n: "s-0.5".into(), ..example_one() };
        assert!(matches!(cfg.prepare(), Err(ConfigError::Fields(_))));
    }

    #[test]
    fn stability_gate() {
        let cfg = RunConfig { h: 2.0, ..example_one() };
        match cfg.prepare().unwrap_err() {
            ConfigError::Stability { margin, product } => {
                assert!(margin < 0.0);
                assert!(product >= 2.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn json_field_names() {
        let cfg: RunConfig =
            serde_json::from_str(r#"{"g":"s","n":"1","T":1,"delta":0.01,"h":0.01,"x_max":3}"#).unwrap();
        assert_eq!(cfg, example_one());
    }
}
