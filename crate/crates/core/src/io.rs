//! JSON and CSV formats for problems, boundary conditions, spectral data and
//! reconstructions. Matrices are row-major arrays of `[re, im]` pairs.

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SlqError};
use crate::inverse::ReconstructionResult;
use crate::linalg::{self, CMat};
use crate::model::ModelConstants;
use crate::problem::{ProblemSpec, Sigma, SpectralIndex};
use crate::spectral::{SpectralDataSet, DEFAULT_CLUSTER_TOL};

pub type MatrixJson = Vec<Vec<[f64; 2]>>;

pub fn matrix_to_json(a: &CMat) -> MatrixJson {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| [a[(i, j)].re, a[(i, j)].im]).collect())
        .collect()
}

pub fn matrix_from_json(rows: &MatrixJson, m: usize, what: &str) -> Result<CMat> {
    if rows.len() != m || rows.iter().any(|r| r.len() != m) {
        return Err(SlqError::Parse(format!("{what} must be {m}x{m}")));
    }
    Ok(CMat::from_fn(m, m, |i, j| Complex64::new(rows[i][j][0], rows[i][j][1])))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SigmaJson {
    Grid { x: Vec<f64>, values: Vec<MatrixJson> },
    Constant { value: MatrixJson },
    /// `coeffs[j]` multiplies `cos(j x)`, `sin_coeffs[j]` multiplies `sin(j x)`.
    Trig {
        coeffs: Vec<MatrixJson>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        sin_coeffs: Vec<MatrixJson>,
    },
    Zero,
}

impl SigmaJson {
    pub fn from_sigma(s: &Sigma, grid_nodes: usize) -> SigmaJson {
        match s {
            Sigma::Grid { x, values } => SigmaJson::Grid { x: x.clone(), values: values.iter().map(matrix_to_json).collect() },
            Sigma::Constant(v) => SigmaJson::Constant { value: matrix_to_json(v) },
            Sigma::Trig { cos, sin } => SigmaJson::Trig {
                coeffs: cos.iter().map(matrix_to_json).collect(),
                sin_coeffs: sin.iter().map(matrix_to_json).collect(),
            },
            Sigma::Function(_) => SigmaJson::from_sigma(&s.to_grid(&crate::problem::uniform_grid(grid_nodes)), grid_nodes),
        }
    }

    pub fn to_sigma(&self, m: usize) -> Result<Sigma> {
        let mats = |v: &[MatrixJson], what: &str| v.iter().map(|a| matrix_from_json(a, m, what)).collect::<Result<Vec<_>>>();
        Ok(match self {
            SigmaJson::Grid { x, values } => Sigma::Grid { x: x.clone(), values: mats(values, "sigma sample")? },
            SigmaJson::Constant { value } => Sigma::Constant(matrix_from_json(value, m, "sigma value")?),
            SigmaJson::Trig { coeffs, sin_coeffs } => {
                Sigma::Trig { cos: mats(coeffs, "sigma coefficient")?, sin: mats(sin_coeffs, "sigma coefficient")? }
            }
            SigmaJson::Zero => Sigma::zero(m),
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProblemJson {
    pub m: usize,
    #[serde(rename = "T1")]
    pub t1: MatrixJson,
    #[serde(rename = "T2")]
    pub t2: MatrixJson,
    #[serde(rename = "H2", default, skip_serializing_if = "Option::is_none")]
    pub h2: Option<MatrixJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<SigmaJson>,
}

impl ProblemJson {
    pub fn from_spec(spec: &ProblemSpec) -> Self {
        ProblemJson {
            m: spec.m,
            t1: matrix_to_json(&spec.t1),
            t2: matrix_to_json(&spec.t2),
            h2: Some(matrix_to_json(&spec.h2)),
            sigma: Some(SigmaJson::from_sigma(&spec.sigma, 501)),
        }
    }

    /// Missing `H2` and `sigma` default to zero, so a boundary-condition file
    /// parses as the model problem.
    pub fn to_spec(&self) -> Result<ProblemSpec> {
        let m = self.m;
        if m == 0 {
            return Err(SlqError::Parse("m must be positive".into()));
        }
        let t1 = matrix_from_json(&self.t1, m, "T1")?;
        let t2 = matrix_from_json(&self.t2, m, "T2")?;
        let h2 = match &self.h2 {
            Some(h) => matrix_from_json(h, m, "H2")?,
            None => linalg::zeros(m),
        };
        let sigma = match &self.sigma {
            Some(s) => s.to_sigma(m)?,
            None => Sigma::zero(m),
        };
        Ok(ProblemSpec::new(t1, t2, h2, sigma))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EntryJson {
    pub n: usize,
    pub k: usize,
    pub lambda: f64,
    pub alpha: MatrixJson,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralJson {
    pub m: usize,
    #[serde(default)]
    pub shift: f64,
    pub entries: Vec<EntryJson>,
}

impl SpectralJson {
    /// Entries in index order.
    pub fn from_data(d: &SpectralDataSet) -> Self {
        SpectralJson {
            m: d.m,
            shift: d.shift,
            entries: d
                .by_index()
                .into_iter()
                .map(|e| EntryJson { n: e.index.n, k: e.index.k, lambda: e.lambda, alpha: matrix_to_json(&e.alpha) })
                .collect(),
        }
    }

    pub fn to_data(&self, cluster_tol: f64) -> Result<SpectralDataSet> {
        let records = self
            .entries
            .iter()
            .map(|e| {
                if e.k == 0 || e.k > self.m {
                    return Err(SlqError::Parse(format!("branch k = {} outside 1..={}", e.k, self.m)));
                }
                Ok((SpectralIndex::new(e.n, e.k), e.lambda, matrix_from_json(&e.alpha, self.m, "alpha")?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SpectralDataSet::from_records(self.m, self.shift, records, cluster_tol))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelJson {
    pub r: Vec<f64>,
    /// Branches of each shift class, 1-based.
    pub classes: Vec<Vec<usize>>,
    #[serde(rename = "A")]
    pub a: Vec<MatrixJson>,
    pub p_perp: usize,
}

/// Model constants together with the model data in the spectral-data layout.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelOutputJson {
    #[serde(flatten)]
    pub data: SpectralJson,
    pub model: ModelJson,
}

impl ModelOutputJson {
    pub fn new(consts: &ModelConstants, data: &SpectralDataSet) -> Self {
        ModelOutputJson {
            data: SpectralJson::from_data(data),
            model: ModelJson {
                r: consts.rk.clone(),
                classes: consts.classes.clone(),
                a: consts.ak.iter().map(matrix_to_json).collect(),
                p_perp: consts.p_perp,
            },
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridJson {
    pub x: Vec<f64>,
    pub values: Vec<MatrixJson>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReconDiagnosticsJson {
    pub max_cond: f64,
    pub max_residual: f64,
    pub sigma_anti_hermitian: f64,
    pub h2_anti_hermitian: f64,
    pub big_xi: f64,
    pub cond: Vec<f64>,
    pub residual: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReconJson {
    pub sigma: GridJson,
    #[serde(rename = "H2")]
    pub h2: MatrixJson,
    #[serde(rename = "CN")]
    pub cn: MatrixJson,
    #[serde(rename = "gN")]
    pub g_n: usize,
    pub n0: usize,
    pub shift: f64,
    pub diagnostics: ReconDiagnosticsJson,
}

impl ReconJson {
    pub fn from_result(r: &ReconstructionResult) -> Self {
        let (x, values) = match &r.sigma {
            Sigma::Grid { x, values } => (x.clone(), values.iter().map(matrix_to_json).collect()),
            other => {
                let x = crate::problem::uniform_grid(501);
                let values = x.iter().map(|&t| matrix_to_json(&other.eval(t))).collect();
                (x, values)
            }
        };
        let d = &r.diagnostics;
        ReconJson {
            sigma: GridJson { x, values },
            h2: matrix_to_json(&r.h2),
            cn: matrix_to_json(&r.cn),
            g_n: r.g_n,
            n0: r.n0,
            shift: r.shift,
            diagnostics: ReconDiagnosticsJson {
                max_cond: d.max_cond,
                max_residual: d.max_residual,
                sigma_anti_hermitian: d.sigma_anti_hermitian,
                h2_anti_hermitian: d.h2_anti_hermitian,
                big_xi: d.big_xi,
                cond: d.cond.clone(),
                residual: d.residual.clone(),
            },
        }
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Pretty JSON. Floats use the shortest decimal form that parses back to the
/// same double.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    Ok(fs::write(path, to_json_string(value)?)?)
}

pub fn read_problem(path: &Path) -> Result<ProblemSpec> {
    read_json::<ProblemJson>(path)?.to_spec()
}

pub fn read_spectral_data(path: &Path) -> Result<SpectralDataSet> {
    read_json::<SpectralJson>(path)?.to_data(DEFAULT_CLUSTER_TOL)
}

/// Header `x,s11_re,s11_im,s12_re,...` and one row per sample.
pub fn sigma_csv(x: &[f64], values: &[CMat]) -> String {
    let m = values.first().map_or(0, |a| a.nrows());
    let mut out = String::from("x");
    for i in 1..=m {
        for j in 1..=m {
            out.push_str(&format!(",s{i}{j}_re,s{i}{j}_im"));
        }
    }
    out.push('\n');
    for (t, v) in x.iter().zip(values) {
        out.push_str(&format!("{t:e}"));
        for i in 0..m {
            for j in 0..m {
                out.push_str(&format!(",{:e},{:e}", v[(i, j)].re, v[(i, j)].im));
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::diag;
    use crate::problem::hermitian_from_parts;

    #[test]
    fn matrix_round_trip_is_exact() {
        let a = hermitian_from_parts(&[&[0.1, 1.0 / 3.0], &[1.0 / 3.0, -2e-17]], &[&[0.0, 0.7], &[-0.7, 0.0]]);
        let text = serde_json::to_string(&matrix_to_json(&a)).unwrap();
        let back: MatrixJson = serde_json::from_str(&text).unwrap();
        assert_eq!(matrix_from_json(&back, 2, "a").unwrap(), a);
    }

    #[test]
    fn problem_json_parses_all_sigma_kinds() {
        let text = r#"{"m":1,"T1":[[[1,0]]],"T2":[[[0,0]]],"H2":[[[0,0]]],
            "sigma":{"kind":"trig","coeffs":[[[[0.5,0]]],[[[1,0]]]],"sin_coeffs":[[[[0,0]]],[[[2,0]]]]}}"#;
        let spec = serde_json::from_str::<ProblemJson>(text).unwrap().to_spec().unwrap();
        let x = 0.4f64;
        assert!((spec.sigma.eval(x)[(0, 0)].re - (0.5 + x.cos() + 2.0 * x.sin())).abs() < 1e-15);
        let text = r#"{"m":1,"T1":[[[1,0]]],"T2":[[[1,0]]],"sigma":{"kind":"grid","x":[0,3.141592653589793],"values":[[[[0,0]]],[[[1,0]]]]}}"#;
        let spec = serde_json::from_str::<ProblemJson>(text).unwrap().to_spec().unwrap();
        assert!((spec.sigma.eval(std::f64::consts::FRAC_PI_2)[(0, 0)].re - 0.5).abs() < 1e-15);
        let text = r#"{"m":2,"T1":[[[1,0],[0,0]],[[0,0],[0,0]]],"T2":[[[1,0],[0,0]],[[0,0],[1,0]]]}"#;
        let spec = serde_json::from_str::<ProblemJson>(text).unwrap().to_spec().unwrap();
        assert_eq!(spec.sigma.eval(1.0), linalg::zeros(2));
    }

    #[test]
    fn wrong_shape_is_a_parse_error() {
        let text = r#"{"m":2,"T1":[[[1,0]]],"T2":[[[1,0]]]}"#;
        let err = serde_json::from_str::<ProblemJson>(text).unwrap().to_spec().unwrap_err();
        assert!(matches!(err, SlqError::Parse(_)));
    }

    #[test]
    fn spectral_json_round_trip() {
        let d = SpectralDataSet::from_records(
            1,
            0.25,
            vec![(SpectralIndex::new(1, 1), 1.25, diag(&[0.6])), (SpectralIndex::new(0, 1), 0.25, diag(&[0.3]))],
            1e-8,
        );
        let j = SpectralJson::from_data(&d);
        assert_eq!((j.entries[0].n, j.entries[1].n), (0, 1));
        let text = to_json_string(&j).unwrap();
        let back = serde_json::from_str::<SpectralJson>(&text).unwrap().to_data(1e-8).unwrap();
        assert_eq!(back.shift, 0.25);
        assert_eq!(back.get(SpectralIndex::new(1, 1)).unwrap().alpha, diag(&[0.6]));
        assert_eq!(to_json_string(&SpectralJson::from_data(&back)).unwrap(), text);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let csv = sigma_csv(&[0.0, 1.0], &[diag(&[1.0]), diag(&[2.0])]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "x,s11_re,s11_im");
        assert_eq!(lines.len(), 3);
    }
}
