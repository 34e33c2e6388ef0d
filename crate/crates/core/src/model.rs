//! CSVIU system models, analysis configuration, and their JSON file formats.
//!
//! A model file is one JSON object:
//!
//! ```json
//! { "n": 1, "r": 1, "p": 1, "m": 0,
//!   "A": [[0.5]], "sigma_x": [[0.2]], "sigma_bar_x": [[0.3]],
//!   "sigma": [[0.1]], "C": [[1.0]] }
//! ```
//!
//! `m` defaults to 0; `B` (n×m) and `D` (p×m) are required exactly when
//! `m > 0`. Entries are finite doubles. The strings `"NaN"`, `"Infinity"`
//! and `"-Infinity"` are accepted by the parser only so that they can be
//! rejected with a value error rather than a parse error.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CsviuError, Result};
use crate::linalg::{matrix_to_rows, SymMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum Entry {
    Number(f64),
    Text(String),
}

impl Entry {
    fn to_f64(&self) -> std::result::Result<f64, String> {
        match self {
            Entry::Number(v) => Ok(*v),
            Entry::Text(s) => match s.trim().to_ascii_lowercase().as_str() {
                "nan" => Ok(f64::NAN),
                "inf" | "+inf" | "infinity" | "+infinity" => Ok(f64::INFINITY),
                "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
                _ => Err(format!("unrecognized matrix entry {s:?}")),
            },
        }
    }
}

type RawMatrix = Vec<Vec<Entry>>;

fn raw_to_rows(raw: &RawMatrix) -> std::result::Result<Vec<Vec<f64>>, String> {
    raw.iter()
        .map(|row| row.iter().map(Entry::to_f64).collect())
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    n: usize,
    r: usize,
    p: usize,
    #[serde(default)]
    m: usize,
    #[serde(rename = "A")]
    a: RawMatrix,
    sigma_x: RawMatrix,
    sigma_bar_x: RawMatrix,
    sigma: RawMatrix,
    #[serde(rename = "C")]
    c: RawMatrix,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    b: Option<RawMatrix>,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    d: Option<RawMatrix>,
}

/// Unvalidated model data as it appears in a model file.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ModelDescription {
    pub n: usize,
    pub r: usize,
    pub p: usize,
    pub m: usize,
    pub a: Vec<Vec<f64>>,
    pub sigma_x: Vec<Vec<f64>>,
    pub sigma_bar_x: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub b: Option<Vec<Vec<f64>>>,
    pub d: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ViolationKind {
    Dimension,
    Value,
}

struct Violation {
    kind: ViolationKind,
    message: String,
}

impl ModelDescription {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_str(s).map_err(|e| CsviuError::Parse(e.to_string()))?;
        let conv = |m: &RawMatrix| raw_to_rows(m).map_err(CsviuError::Parse);
        Ok(ModelDescription {
            n: file.n,
            r: file.r,
            p: file.p,
            m: file.m,
            a: conv(&file.a)?,
            sigma_x: conv(&file.sigma_x)?,
            sigma_bar_x: conv(&file.sigma_bar_x)?,
            sigma: conv(&file.sigma)?,
            c: conv(&file.c)?,
            b: file.b.as_ref().map(conv).transpose()?,
            d: file.d.as_ref().map(conv).transpose()?,
        })
    }

    pub fn to_json_string(&self) -> Result<String> {
        let to_raw = |rows: &Vec<Vec<f64>>| -> RawMatrix {
            rows.iter()
                .map(|r| r.iter().map(|&v| Entry::Number(v)).collect())
                .collect()
        };
        let file = ModelFile {
            n: self.n,
            r: self.r,
            p: self.p,
            m: self.m,
            a: to_raw(&self.a),
            sigma_x: to_raw(&self.sigma_x),
            sigma_bar_x: to_raw(&self.sigma_bar_x),
            sigma: to_raw(&self.sigma),
            c: to_raw(&self.c),
            b: self.b.as_ref().map(to_raw),
            d: self.d.as_ref().map(to_raw),
        };
        serde_json::to_string_pretty(&file).map_err(|e| CsviuError::Parse(e.to_string()))
    }

    fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut dim = |message: String| {
            out.push(Violation {
                kind: ViolationKind::Dimension,
                message,
            })
        };
        for (name, v) in [("n", self.n), ("r", self.r), ("p", self.p)] {
            if v == 0 {
                dim(format!("{name} must be positive"));
            }
        }
        let shapes: [(&str, Option<&Vec<Vec<f64>>>, usize, usize, &str, &str); 7] = [
            ("A", Some(&self.a), self.n, self.n, "n", "n"),
            ("sigma_x", Some(&self.sigma_x), self.n, self.n, "n", "n"),
            ("sigma_bar_x", Some(&self.sigma_bar_x), self.n, self.n, "n", "n"),
            ("sigma", Some(&self.sigma), self.n, self.r, "n", "r"),
            ("C", Some(&self.c), self.p, self.n, "p", "n"),
            ("B", self.b.as_ref(), self.n, self.m, "n", "m"),
            ("D", self.d.as_ref(), self.p, self.m, "p", "m"),
        ];
        for (name, mat, rows, cols, rname, cname) in shapes {
            let Some(mat) = mat else { continue };
            if mat.len() != rows {
                dim(format!("{name} row count ≠ {rname}"));
            }
            if mat.iter().any(|row| row.len() != cols) {
                dim(format!("{name} column count ≠ {cname}"));
            }
        }
        match (self.m > 0, self.b.is_some()) {
            (true, false) => dim("B required when m>0".into()),
            (false, true) => dim("B must be absent when m=0".into()),
            _ => {}
        }
        match (self.m > 0, self.d.is_some()) {
            (true, false) => dim("D required when m>0".into()),
            (false, true) => dim("D must be absent when m=0".into()),
            _ => {}
        }
        let finite: [(&str, Option<&Vec<Vec<f64>>>); 7] = [
            ("A", Some(&self.a)),
            ("sigma_x", Some(&self.sigma_x)),
            ("sigma_bar_x", Some(&self.sigma_bar_x)),
            ("sigma", Some(&self.sigma)),
            ("C", Some(&self.c)),
            ("B", self.b.as_ref()),
            ("D", self.d.as_ref()),
        ];
        for (name, mat) in finite {
            let Some(mat) = mat else { continue };
            for (i, row) in mat.iter().enumerate() {
                if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                    out.push(Violation {
                        kind: ViolationKind::Value,
                        message: format!("{name} has a non-finite entry at ({i},{j})"),
                    });
                }
            }
        }
        out
    }
}

/// Lists every invariant the description breaks; empty iff it describes a
/// valid model.
pub fn validate(desc: &ModelDescription) -> Vec<String> {
    desc.violations().into_iter().map(|v| v.message).collect()
}

/// A validated CSVIU system
///
/// `x_{k+1} = A x_k + B ℓ_k + (σ_x + σ̄_x diag|x_k|) ε_k + σ ω_k`,
/// `y_k = C x_k + D ℓ_k`,
///
/// where `B`, `D` are present only for the exogenous-input variant.
#[derive(Clone, Debug, PartialEq)]
pub struct CsviuModel {
    a: DMatrix<f64>,
    sigma_x: DMatrix<f64>,
    sigma_bar_x: DMatrix<f64>,
    sigma: DMatrix<f64>,
    c: DMatrix<f64>,
    input: Option<(DMatrix<f64>, DMatrix<f64>)>,
}

impl CsviuModel {
    pub fn from_description(desc: &ModelDescription) -> Result<Self> {
        let violations = desc.violations();
        if let Some(first) = violations.first() {
            let msg = violations
                .iter()
                .map(|v| v.message.as_str())
                .collect::<Vec<_>>()
                .join("; ");
            return Err(match first.kind {
                ViolationKind::Dimension => CsviuError::Dimension(msg),
                ViolationKind::Value => CsviuError::Value(msg),
            });
        }
        let mat = |rows: &Vec<Vec<f64>>, nr: usize, nc: usize| {
            DMatrix::from_fn(nr, nc, |i, j| rows[i][j])
        };
        let input = match (&desc.b, &desc.d) {
            (Some(b), Some(d)) if desc.m > 0 => Some((
                mat(b, desc.n, desc.m),
                mat(d, desc.p, desc.m),
            )),
            _ => None,
        };
        Ok(CsviuModel {
            a: mat(&desc.a, desc.n, desc.n),
            sigma_x: mat(&desc.sigma_x, desc.n, desc.n),
            sigma_bar_x: mat(&desc.sigma_bar_x, desc.n, desc.n),
            sigma: mat(&desc.sigma, desc.n, desc.r),
            c: mat(&desc.c, desc.p, desc.n),
            input,
        })
    }

    /// Model without exogenous input.
    pub fn new(
        a: DMatrix<f64>,
        sigma_x: DMatrix<f64>,
        sigma_bar_x: DMatrix<f64>,
        sigma: DMatrix<f64>,
        c: DMatrix<f64>,
    ) -> Result<Self> {
        Self::with_input(a, sigma_x, sigma_bar_x, sigma, c, None)
    }

    /// Model with optional exogenous input matrices `(B, D)`.
    pub fn with_input(
        a: DMatrix<f64>,
        sigma_x: DMatrix<f64>,
        sigma_bar_x: DMatrix<f64>,
        sigma: DMatrix<f64>,
        c: DMatrix<f64>,
        input: Option<(DMatrix<f64>, DMatrix<f64>)>,
    ) -> Result<Self> {
        let desc = ModelDescription {
            n: a.nrows(),
            r: sigma.ncols(),
            p: c.nrows(),
            m: input.as_ref().map_or(0, |(b, _)| b.ncols()),
            a: matrix_to_rows(&a),
            sigma_x: matrix_to_rows(&sigma_x),
            sigma_bar_x: matrix_to_rows(&sigma_bar_x),
            sigma: matrix_to_rows(&sigma),
            c: matrix_to_rows(&c),
            b: input.as_ref().map(|(b, _)| matrix_to_rows(b)),
            d: input.as_ref().map(|(_, d)| matrix_to_rows(d)),
        };
        Self::from_description(&desc)
    }

    /// One-dimensional model with `C = [c]`.
    pub fn scalar(a: f64, sigma_x: f64, sigma_bar_x: f64, sigma: f64, c: f64) -> Self {
        let m = |v| DMatrix::from_element(1, 1, v);
        Self::new(m(a), m(sigma_x), m(sigma_bar_x), m(sigma), m(c))
            .expect("finite scalar model data")
    }

    pub fn description(&self) -> ModelDescription {
        ModelDescription {
            n: self.n(),
            r: self.r(),
            p: self.p(),
            m: self.m(),
            a: matrix_to_rows(&self.a),
            sigma_x: matrix_to_rows(&self.sigma_x),
            sigma_bar_x: matrix_to_rows(&self.sigma_bar_x),
            sigma: matrix_to_rows(&self.sigma),
            c: matrix_to_rows(&self.c),
            b: self.input.as_ref().map(|(b, _)| matrix_to_rows(b)),
            d: self.input.as_ref().map(|(_, d)| matrix_to_rows(d)),
        }
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    pub fn r(&self) -> usize {
        self.sigma.ncols()
    }
    pub fn p(&self) -> usize {
        self.c.nrows()
    }
    pub fn m(&self) -> usize {
        self.input.as_ref().map_or(0, |(b, _)| b.ncols())
    }
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn sigma_x(&self) -> &DMatrix<f64> {
        &self.sigma_x
    }
    pub fn sigma_bar_x(&self) -> &DMatrix<f64> {
        &self.sigma_bar_x
    }
    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn b(&self) -> Option<&DMatrix<f64>> {
        self.input.as_ref().map(|(b, _)| b)
    }
    pub fn d(&self) -> Option<&DMatrix<f64>> {
        self.input.as_ref().map(|(_, d)| d)
    }

    /// `σσᵀ + σ_xσ_xᵀ`, the state-independent noise covariance.
    pub fn additive_noise_covariance(&self) -> DMatrix<f64> {
        &self.sigma * self.sigma.transpose() + &self.sigma_x * self.sigma_x.transpose()
    }

    /// Default energy weight `CᵀC`.
    pub fn output_weight(&self) -> SymMatrix {
        SymMatrix::gram(&self.c)
    }

    /// True when the cross operator 𝒲 vanishes identically, i.e. for every
    /// state coordinate either the σ_x column or the σ̄_x column is zero.
    /// Exactly then the second moments obey a closed linear recursion.
    pub fn cross_operator_vanishes(&self) -> bool {
        (0..self.n()).all(|i| {
            self.sigma_x.column(i).iter().all(|&v| v == 0.0)
                || self.sigma_bar_x.column(i).iter().all(|&v| v == 0.0)
        })
    }

    pub fn output(&self, x: &DVector<f64>, input: Option<&DVector<f64>>) -> DVector<f64> {
        let mut y = &self.c * x;
        if let (Some(d), Some(l)) = (self.d(), input) {
            y += d * l;
        }
        y
    }

    pub fn to_json_string(&self) -> Result<String> {
        self.description().to_json_string()
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Self::from_description(&ModelDescription::from_json_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json_string()?)?;
        Ok(())
    }
}

/// Reads and validates a model file.
pub fn load_model(path: impl AsRef<Path>) -> Result<CsviuModel> {
    let text = fs::read_to_string(path)?;
    CsviuModel::from_json_str(&text)
}

fn default_solver_tol() -> f64 {
    1e-12
}

fn default_max_iter() -> usize {
    100_000
}

/// Analysis parameters. `q = None` means the default weight `CᵀC`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub alpha: f64,
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    pub q: Option<SymMatrix>,
    pub x0: Vec<f64>,
    #[serde(default = "default_solver_tol")]
    pub solver_tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

impl AnalysisConfig {
    pub fn new(alpha: f64, n: usize) -> Self {
        AnalysisConfig {
            alpha,
            q: None,
            x0: vec![0.0; n],
            solver_tol: default_solver_tol(),
            max_iter: default_max_iter(),
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| CsviuError::Parse(e.to_string()))
    }

    /// Checks the configuration against a model.
    pub fn validate_for(&self, model: &CsviuModel) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(CsviuError::Domain("alpha must be positive".into()));
        }
        if !(self.solver_tol.is_finite() && self.solver_tol > 0.0) {
            return Err(CsviuError::Domain("solver_tol must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(CsviuError::Domain("max_iter must be positive".into()));
        }
        if self.x0.len() != model.n() {
            return Err(CsviuError::Dimension(format!(
                "x0 has length {}, expected {}",
                self.x0.len(),
                model.n()
            )));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(CsviuError::Value("x0 has non-finite entries".into()));
        }
        if let Some(q) = &self.q {
            if q.n() != model.n() {
                return Err(CsviuError::Dimension(format!(
                    "Q is {}x{}, expected {}x{}",
                    q.n(),
                    q.n(),
                    model.n(),
                    model.n()
                )));
            }
            if !q.is_psd() {
                return Err(CsviuError::Value("Q must be positive semidefinite".into()));
            }
        }
        Ok(())
    }

    pub fn weight(&self, model: &CsviuModel) -> SymMatrix {
        self.q.clone().unwrap_or_else(|| model.output_weight())
    }

    pub fn x0_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x0)
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<AnalysisConfig> {
    AnalysisConfig::from_json_str(&fs::read_to_string(path)?)
}
