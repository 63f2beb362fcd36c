//! CSV and JSON forms of [`CdfGrid`] and [`DensityGrid`].
//!
//! CSV: a header (`x,F` or `x,f`), one row per node with 17 significant
//! digits, then `# mesh,<delta>,<x_min>,<x_max>` and one `# atom,<x>,<mass>`
//! line per atom. Parsing the output reproduces the grid bit for bit.

use serde::{Deserialize, Serialize};

use crate::density::DensityGrid;
use crate::error::{Error, Result};
use crate::model::{Atom, CdfGrid, Mesh};

/// Problem description stored next to a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub g: String,
    pub n: String,
    #[serde(rename = "T")]
    pub t: f64,
    pub delta: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDocument {
    pub mesh: Mesh,
    pub values: Vec<f64>,
    pub atoms: Vec<Atom>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<RunMeta>,
}

fn write_csv(header: &str, mesh: &Mesh, values: &[f64], atoms: &[Atom]) -> String {
    let mut out = String::with_capacity(48 * values.len() + 64);
    out.push_str(header);
    out.push('\n');
    for (j, v) in values.iter().enumerate() {
        out.push_str(&format!("{:.16e},{:.16e}\n", mesh.x(j), v));
    }
    out.push_str(&format!(
        "# mesh,{:.16e},{:.16e},{:.16e}\n",
        mesh.delta(),
        mesh.x_min(),
        mesh.x_max()
    ));
    for a in atoms {
        out.push_str(&format!("# atom,{:.16e},{:.16e}\n", a.x, a.mass));
    }
    out
}

fn parse_number(field: &str, line: usize) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::InvalidInput(format!("line {line}: cannot parse '{field}' as a number")))
}

fn read_csv(text: &str, header: &str) -> Result<(Mesh, Vec<f64>, Vec<Atom>)> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == header => {}
        other => {
            return Err(Error::InvalidInput(format!(
                "expected header '{header}', found '{}'",
                other.map(|(_, h)| h).unwrap_or("")
            )))
        }
    }
    let mut xs = Vec::new();
    let mut values = Vec::new();
    let mut atoms = Vec::new();
    let mut mesh = None;
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let fields: Vec<&str> = rest.trim().split(',').collect();
            match fields.as_slice() {
                ["mesh", d, lo, hi] => {
                    mesh = Some(Mesh::new(
                        parse_number(d, lineno)?,
                        parse_number(lo, lineno)?,
                        parse_number(hi, lineno)?,
                    )?)
                }
                ["atom", x, m] => atoms.push(Atom {
                    x: parse_number(x, lineno)?,
                    mass: parse_number(m, lineno)?,
                }),
                _ => {}
            }
            continue;
        }
        let mut fields = line.split(',');
        match (fields.next(), fields.next(), fields.next()) {
            (Some(x), Some(v), None) => {
                xs.push(parse_number(x, lineno)?);
                values.push(parse_number(v, lineno)?);
            }
            _ => return Err(Error::InvalidInput(format!("line {lineno}: expected two columns"))),
        }
    }
    let mesh = match mesh {
        Some(m) => m,
        None if xs.len() >= 2 => Mesh::new(xs[1] - xs[0], xs[0], *xs.last().unwrap())?,
        None => return Err(Error::InvalidInput("need a mesh line or at least two rows".into())),
    };
    Ok((mesh, values, atoms))
}

pub fn cdf_to_csv(grid: &CdfGrid) -> String {
    write_csv("x,F", grid.mesh(), grid.values(), grid.atoms())
}

pub fn cdf_from_csv(text: &str) -> Result<CdfGrid> {
    let (mesh, values, atoms) = read_csv(text, "x,F")?;
    CdfGrid::new(mesh, values, atoms)
}

pub fn density_to_csv(density: &DensityGrid) -> String {
    write_csv("x,f", &density.mesh, &density.values, &density.atoms)
}

pub fn cdf_to_json(grid: &CdfGrid, meta: Option<RunMeta>) -> String {
    let doc = GridDocument {
        mesh: *grid.mesh(),
        values: grid.values().to_vec(),
        atoms: grid.atoms().to_vec(),
        meta,
    };
    serde_json::to_string(&doc).expect("grid documents always serialize")
}

pub fn cdf_from_json(text: &str) -> Result<(CdfGrid, Option<RunMeta>)> {
    let doc: GridDocument =
        serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("bad grid JSON: {e}")))?;
    Ok((CdfGrid::new(doc.mesh, doc.values, doc.atoms)?, doc.meta))
}

pub fn density_to_json(density: &DensityGrid, meta: Option<RunMeta>) -> String {
    let doc = GridDocument {
        mesh: density.mesh,
        values: density.values.clone(),
        atoms: density.atoms.clone(),
        meta,
    };
    serde_json::to_string(&doc).expect("grid documents always serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transforms::flat_segment_cdf;
    use proptest::prelude::*;

    fn sample_grid() -> CdfGrid {
        flat_segment_cdf(0.3, 1.7, &Mesh::from_origin(0.1, 9.0).unwrap()).unwrap()
    }

    #[test]
    fn csv_layout() {
        let g = CdfGrid::point_mass(Mesh::from_origin(0.5, 1.0).unwrap(), 0.0).unwrap();
        let text = cdf_to_csv(&g);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x,F"));
        assert_eq!(lines.next(), Some("0.0000000000000000e0,1.0000000000000000e0"));
        assert!(text.contains("# atom,0.0000000000000000e0,1.0000000000000000e0"));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let g = sample_grid();
        assert_eq!(cdf_from_csv(&cdf_to_csv(&g)).unwrap(), g);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let g = sample_grid();
        let meta = RunMeta {
            g: "0.3".into(),
            n: "1".into(),
            t: 1.7,
            delta: 0.1,
            h: 0.01,
        };
        let text = cdf_to_json(&g, Some(meta.clone()));
        assert!(text.contains("\"T\":1.7"));
        let (back, m) = cdf_from_json(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(m, Some(meta));
    }

    #[test]
    fn rejects_garbage() {
        assert!(cdf_from_csv("x,G\n").is_err());
        assert!(cdf_from_csv("x,F\n0,abc\n1,1\n").is_err());
        assert!(cdf_from_json("{}").is_err());
    }

    proptest! {
        #[test]
        fn csv_round_trips_random_grids(raw in proptest::collection::vec(0.0f64..1.0, 2..60)) {
            let mut values = raw;
            values.sort_by(f64::total_cmp);
            let mesh = Mesh::new(0.37, -1.11, -1.11 + 0.37 * (values.len() - 1) as f64).unwrap();
            let g = CdfGrid::new(mesh, values, vec![]).unwrap();
            prop_assert_eq!(cdf_from_csv(&cdf_to_csv(&g)).unwrap(), g);
        }
    }
}
