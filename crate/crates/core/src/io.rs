//! JSON model files.
//!
//! ```json
//! {"n": 3, "A": [[0, 0.2, 0], [0.2, 0, 0.1], [0, 0.1, 0]], "h": [0, 0, 0.5], "label": "path"}
//! ```
//!
//! `A` may also be a flat row-major array of `n²` numbers or
//! `{"sparse": [{"i": 0, "j": 1, "value": 0.2}, ...]}`, where each triplet
//! sets both `A_ij` and `A_ji`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_dense, IsingModel, SYMMETRY_TOL};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Triplet {
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixRepr {
    Nested(Vec<Vec<f64>>),
    Flat(Vec<f64>),
    Sparse { sparse: Vec<Triplet> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub n: usize,
    #[serde(rename = "A")]
    pub a: MatrixRepr,
    pub h: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl ModelFile {
    pub fn from_model(model: &IsingModel) -> Self {
        ModelFile {
            n: model.n(),
            a: MatrixRepr::Nested(model.interaction_rows()),
            h: model.field().to_vec(),
            label: model.label().map(str::to_owned),
        }
    }

    pub fn into_model(self) -> Result<IsingModel> {
        let n = self.n;
        if self.h.len() != n {
            return Err(Error::Dimension(format!(
                "n = {n} but h has length {}",
                self.h.len()
            )));
        }
        let flat = match self.a {
            MatrixRepr::Nested(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::Dimension(format!("A must be {n}×{n}")));
                }
                rows.into_iter().flatten().collect()
            }
            MatrixRepr::Flat(v) => v,
            MatrixRepr::Sparse { sparse } => {
                let mut a = vec![0.0; n * n];
                let mut set = vec![false; n * n];
                for Triplet { i, j, value } in sparse {
                    if i >= n || j >= n {
                        return Err(Error::SiteOutOfRange { index: i.max(j), n });
                    }
                    for (p, q) in [(i, j), (j, i)] {
                        let diff = (a[p * n + q] - value).abs();
                        if set[p * n + q] && diff > SYMMETRY_TOL {
                            return Err(Error::Asymmetric { i: p, j: q, diff });
                        }
                        a[p * n + q] = value;
                        set[p * n + q] = true;
                    }
                }
                a
            }
        };
        let model = validate_dense(n, &flat, &self.h)?;
        Ok(match self.label {
            Some(label) => model.with_label(label),
            None => model,
        })
    }
}

pub fn parse_model(text: &str) -> Result<IsingModel> {
    let file: ModelFile =
        serde_json::from_str(text).map_err(|e| Error::ModelFile(e.to_string()))?;
    file.into_model()
}

pub fn read_model(path: impl AsRef<Path>) -> Result<IsingModel> {
    parse_model(&fs::read_to_string(path)?)
}

pub fn model_to_json(model: &IsingModel) -> String {
    serde_json::to_string_pretty(&ModelFile::from_model(model))
        .expect("model files always serialize")
}

pub fn write_model(model: &IsingModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, model_to_json(model) + "\n")?;
    Ok(())
}
