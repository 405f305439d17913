//! Model files: JSON and a Matrix Market directory layout.
//!
//! JSON model:
//!
//! ```json
//! {"n": 2, "m": 1, "p": 1,
//!  "A": [[-1.0, 0.0], [0.0, -2.0]], "B": [[1.0], [1.0]], "C": [[1.0, 0.0]],
//!  "labels": ["x0", "x1"]}
//! ```
//!
//! `labels` is optional. Reduced models add `"D"` and optionally
//! `"projection": {"P": ..., "Q": ...}`. Floats are written in shortest
//! round-trip form, so save/load is bitwise exact.
//!
//! Matrix Market layout: a directory holding `A.mtx`, `B.mtx`, `C.mtx` in
//! `coordinate real general` format and a `dims` file with `n m p`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{ReducedModel, StateSpaceModel};
use crate::sp::ProjectionPair;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelFormat {
    Json,
    MatrixMarket,
}

impl ModelFormat {
    /// Directories are Matrix Market, everything else JSON.
    pub fn infer(path: &Path) -> Self {
        if path.is_dir() {
            ModelFormat::MatrixMarket
        } else {
            ModelFormat::Json
        }
    }
}

pub fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn serialize_matrix<S: Serializer>(m: &Matrix, s: S) -> std::result::Result<S::Ok, S::Error> {
    matrix_to_rows(m).serialize(s)
}

fn rows_to_matrix(rows: &[Vec<f64>], nrows: usize, ncols: usize, name: &str) -> Result<Matrix> {
    if rows.len() != nrows {
        return Err(Error::DimensionMismatch(format!("{name} has {} rows, expected {nrows}", rows.len())));
    }
    let mut m = Matrix::zeros(nrows, ncols);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(Error::DimensionMismatch(format!("{name} row {i} has {} entries, expected {ncols}", row.len())));
        }
        for (j, v) in row.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    Ok(m)
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelJson {
    n: usize,
    m: usize,
    p: usize,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    c: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    labels: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ProjectionJson {
    #[serde(rename = "P")]
    p: Vec<Vec<f64>>,
    #[serde(rename = "Q")]
    q: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ReducedJson {
    n: usize,
    m: usize,
    p: usize,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    c: Vec<Vec<f64>>,
    #[serde(rename = "D")]
    d: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    projection: Option<ProjectionJson>,
    /// Free-form note on the coordinates the projection acts in.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coordinates: Option<String>,
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    l: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    h2_error: Option<f64>,
}

fn model_from_json(j: ModelJson) -> Result<StateSpaceModel> {
    let a = rows_to_matrix(&j.a, j.n, j.n, "A")?;
    let b = rows_to_matrix(&j.b, j.n, j.m, "B")?;
    let c = rows_to_matrix(&j.c, j.p, j.n, "C")?;
    StateSpaceModel::new(a, b, c)?.with_labels(j.labels)
}

pub fn model_to_json_string(model: &StateSpaceModel) -> Result<String> {
    let j = ModelJson {
        n: model.n(),
        m: model.m(),
        p: model.p(),
        a: matrix_to_rows(model.a()),
        b: matrix_to_rows(model.b()),
        c: matrix_to_rows(model.c()),
        labels: model.labels().to_vec(),
    };
    Ok(serde_json::to_string_pretty(&j)?)
}

pub fn model_from_json_str(s: &str) -> Result<StateSpaceModel> {
    let j: ModelJson = serde_json::from_str(s)?;
    model_from_json(j)
}

pub fn load_model(path: &Path, format: ModelFormat) -> Result<StateSpaceModel> {
    match format {
        ModelFormat::Json => model_from_json_str(&fs::read_to_string(path)?),
        ModelFormat::MatrixMarket => load_matrix_market_dir(path),
    }
}

pub fn save_model(model: &StateSpaceModel, path: &Path, format: ModelFormat) -> Result<()> {
    match format {
        ModelFormat::Json => Ok(fs::write(path, model_to_json_string(model)?)?),
        ModelFormat::MatrixMarket => save_matrix_market_dir(model, path),
    }
}

/// Extra context stored with a reduced model.
#[derive(Debug, Clone, Default)]
pub struct ReducedMetadata {
    pub coordinates: Option<String>,
    pub transform: Option<Matrix>,
    /// Squared H2 error against the full model, as computed when saved.
    pub h2_error: Option<f64>,
}

pub fn reduced_to_json_string(reduced: &ReducedModel, meta: &ReducedMetadata) -> Result<String> {
    let j = ReducedJson {
        n: reduced.order(),
        m: reduced.b.ncols(),
        p: reduced.c.nrows(),
        a: matrix_to_rows(&reduced.a),
        b: matrix_to_rows(&reduced.b),
        c: matrix_to_rows(&reduced.c),
        d: matrix_to_rows(&reduced.d),
        projection: reduced
            .projection
            .as_ref()
            .map(|pp| ProjectionJson { p: matrix_to_rows(pp.p()), q: matrix_to_rows(pp.q()) }),
        coordinates: meta.coordinates.clone(),
        l: meta.transform.as_ref().map(matrix_to_rows),
        h2_error: meta.h2_error,
    };
    Ok(serde_json::to_string_pretty(&j)?)
}

pub fn reduced_from_json_str(s: &str) -> Result<ReducedModel> {
    Ok(reduced_with_metadata_from_json_str(s)?.0)
}

pub fn reduced_with_metadata_from_json_str(s: &str) -> Result<(ReducedModel, ReducedMetadata)> {
    let j: ReducedJson = serde_json::from_str(s)?;
    let a = rows_to_matrix(&j.a, j.n, j.n, "A")?;
    let b = rows_to_matrix(&j.b, j.n, j.m, "B")?;
    let c = rows_to_matrix(&j.c, j.p, j.n, "C")?;
    let d = rows_to_matrix(&j.d, j.p, j.m, "D")?;
    for (name, m) in [("A", &a), ("B", &b), ("C", &c), ("D", &d)] {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse(format!("{name} contains non-finite entries")));
        }
    }
    let projection = match j.projection {
        None => None,
        Some(pj) => {
            let full_n = pj.p.first().map_or(0, |r| r.len());
            let p = rows_to_matrix(&pj.p, pj.p.len(), full_n, "P")?;
            let q = rows_to_matrix(&pj.q, pj.q.len(), full_n, "Q")?;
            Some(ProjectionPair::new(p, q)?)
        }
    };
    let transform = match &j.l {
        Some(rows) => Some(rows_to_matrix(rows, rows.len(), rows.len(), "L")?),
        None => None,
    };
    let meta = ReducedMetadata { coordinates: j.coordinates, transform, h2_error: j.h2_error };
    Ok((ReducedModel { a, b, c, d, projection }, meta))
}

pub fn save_reduced(reduced: &ReducedModel, meta: &ReducedMetadata, path: &Path) -> Result<()> {
    Ok(fs::write(path, reduced_to_json_string(reduced, meta)?)?)
}

pub fn load_reduced(path: &Path) -> Result<ReducedModel> {
    reduced_from_json_str(&fs::read_to_string(path)?)
}

pub fn load_reduced_with_metadata(path: &Path) -> Result<(ReducedModel, ReducedMetadata)> {
    reduced_with_metadata_from_json_str(&fs::read_to_string(path)?)
}

/// `%%MatrixMarket matrix coordinate real general`; zeros are not stored.
pub fn write_matrix_market(m: &Matrix) -> String {
    let entries: Vec<(usize, usize, f64)> = (0..m.nrows())
        .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
        .map(|(i, j)| (i, j, m[(i, j)]))
        .filter(|&(_, _, v)| v != 0.0)
        .collect();
    let mut s = String::from("%%MatrixMarket matrix coordinate real general\n");
    s.push_str(&format!("{} {} {}\n", m.nrows(), m.ncols(), entries.len()));
    for (i, j, v) in entries {
        s.push_str(&format!("{} {} {:?}\n", i + 1, j + 1, v));
    }
    s
}

pub fn read_matrix_market(text: &str) -> Result<Matrix> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty Matrix Market file".into()))?;
    let h: Vec<String> = header.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
    if h.len() < 5 || h[0] != "%%matrixmarket" || h[1] != "matrix" {
        return Err(Error::Parse(format!("bad Matrix Market header: {header}")));
    }
    if h[3] != "real" && h[3] != "integer" {
        return Err(Error::Parse(format!("unsupported field type {}", h[3])));
    }
    if h[4] != "general" {
        return Err(Error::Parse(format!("unsupported symmetry {}", h[4])));
    }
    let mut body = lines.map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('%'));
    let size = body.next().ok_or_else(|| Error::Parse("missing size line".into()))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::Parse(format!("bad size line: {size}"))))
        .collect::<Result<_>>()?;
    let num = |t: &str| t.parse::<f64>().map_err(|_| Error::Parse(format!("bad number {t}")));
    match h[2].as_str() {
        "coordinate" => {
            if dims.len() != 3 {
                return Err(Error::Parse(format!("bad size line: {size}")));
            }
            let (r, c, nnz) = (dims[0], dims[1], dims[2]);
            let mut m = Matrix::zeros(r, c);
            let mut count = 0;
            for line in body {
                let t: Vec<&str> = line.split_whitespace().collect();
                if t.len() != 3 {
                    return Err(Error::Parse(format!("bad entry line: {line}")));
                }
                let i: usize = t[0].parse().map_err(|_| Error::Parse(format!("bad index in {line}")))?;
                let j: usize = t[1].parse().map_err(|_| Error::Parse(format!("bad index in {line}")))?;
                if i == 0 || j == 0 || i > r || j > c {
                    return Err(Error::Parse(format!("entry ({i}, {j}) outside {r}x{c}")));
                }
                m[(i - 1, j - 1)] = num(t[2])?;
                count += 1;
            }
            if count != nnz {
                return Err(Error::Parse(format!("expected {nnz} entries, found {count}")));
            }
            Ok(m)
        }
        "array" => {
            if dims.len() != 2 {
                return Err(Error::Parse(format!("bad size line: {size}")));
            }
            let (r, c) = (dims[0], dims[1]);
            let vals: Vec<f64> = body.map(num).collect::<Result<_>>()?;
            if vals.len() != r * c {
                return Err(Error::Parse(format!("expected {} values, found {}", r * c, vals.len())));
            }
            Ok(Matrix::from_column_slice(r, c, &vals))
        }
        other => Err(Error::Parse(format!("unsupported format {other}"))),
    }
}

fn save_matrix_market_dir(model: &StateSpaceModel, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("A.mtx"), write_matrix_market(model.a()))?;
    fs::write(dir.join("B.mtx"), write_matrix_market(model.b()))?;
    fs::write(dir.join("C.mtx"), write_matrix_market(model.c()))?;
    fs::write(dir.join("dims"), format!("{} {} {}\n", model.n(), model.m(), model.p()))?;
    if !model.labels().is_empty() {
        fs::write(dir.join("labels"), model.labels().join("\n") + "\n")?;
    }
    Ok(())
}

fn load_matrix_market_dir(dir: &Path) -> Result<StateSpaceModel> {
    let dims_text = fs::read_to_string(dir.join("dims"))?;
    let dims: Vec<usize> = dims_text
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::Parse(format!("bad dims file: {dims_text}"))))
        .collect::<Result<_>>()?;
    if dims.len() != 3 {
        return Err(Error::Parse(format!("dims file needs `n m p`, got {dims_text:?}")));
    }
    let (n, m, p) = (dims[0], dims[1], dims[2]);
    let load = |name: &str, r: usize, c: usize| -> Result<Matrix> {
        let mat = read_matrix_market(&fs::read_to_string(dir.join(name))?)?;
        if mat.shape() != (r, c) {
            return Err(Error::DimensionMismatch(format!("{name} is {:?}, dims file says {r}x{c}", mat.shape())));
        }
        Ok(mat)
    };
    let a = load("A.mtx", n, n)?;
    let b = load("B.mtx", n, m)?;
    let c = load("C.mtx", p, n)?;
    let labels = match fs::read_to_string(dir.join("labels")) {
        Ok(t) => t.lines().map(str::to_owned).collect(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    StateSpaceModel::new(a, b, c)?.with_labels(labels)
}
