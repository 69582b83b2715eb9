//! Builtin models, seeded random models and the JSON model format.
//!
//! File format: `{"d": 3, "b": 2, "v": [[[re, im], ...], ...]}` with `v` given
//! as `b` rows of `d*b` complex entries.

use std::fmt;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fcs::{Fcs, FcsModel, TOL_ISOMETRY};
use crate::linalg::{self, c, re, ComplexMatrix, ComplexVector};

pub const RANDOM_RETRIES: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    Builtin,
    File(PathBuf),
    RandomSeed(u64),
}

#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub name: String,
    pub model: FcsModel,
    pub provenance: Provenance,
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (d={}, b={})", self.name, self.model.d(), self.model.b())
    }
}

/// Spin-1 valence-bond solid: `V_+ = sqrt(2/3) s+`, `V_0 = -sqrt(1/3) sz`,
/// `V_- = -sqrt(2/3) s-`.
pub fn aklt() -> ModelSpec {
    let a = (2.0f64 / 3.0).sqrt();
    let z = (1.0f64 / 3.0).sqrt();
    let plus = linalg::from_real_rows(2, 2, &[0.0, a, 0.0, 0.0]);
    let zero = linalg::from_real_rows(2, 2, &[-z, 0.0, 0.0, z]);
    let minus = linalg::from_real_rows(2, 2, &[0.0, 0.0, -a, 0.0]);
    let model = FcsModel::from_slices(&[plus, zero, minus]).expect("AKLT slices are 2x2");
    ModelSpec { name: "aklt".into(), model, provenance: Provenance::Builtin }
}

/// Product state `|phi>^{⊗n}`: `b = 1`, `v = phi^dagger`.
pub fn product_model(phi: &ComplexVector) -> Result<ModelSpec> {
    let norm = phi.norm();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::NonUnitVector { norm });
    }
    let v = phi.adjoint();
    let model = FcsModel::new(phi.len(), 1, ComplexMatrix::from_row_slice(1, phi.len(), v.as_slice()))?;
    Ok(ModelSpec { name: format!("product:d={}", phi.len()), model, provenance: Provenance::Builtin })
}

pub fn product_basis(d: usize, basis: usize) -> Result<ModelSpec> {
    if basis >= d {
        return Err(Error::InvalidModelRef(format!("product:d={d},basis={basis}")));
    }
    let mut spec = product_model(&linalg::basis_vector(d, basis))?;
    spec.name = format!("product:d={d},basis={basis}");
    Ok(spec)
}

/// Seeded random pure model. Rows of a Gaussian `b x db` matrix are
/// orthonormalized; the seed is incremented until the model is pure with a
/// non-singular fixed point.
pub fn random_model(d: usize, b: usize, seed: u64) -> Result<ModelSpec> {
    if d == 0 || b == 0 {
        return Err(Error::DimensionMismatch(format!("random model needs d, b >= 1 (got d={d}, b={b})")));
    }
    let mut last_moduli = Vec::new();
    for attempt in 0..RANDOM_RETRIES {
        let s = seed.wrapping_add(attempt as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let g = linalg::random::gaussian_complex(b, d * b, &mut rng);
        let Some(v) = linalg::orthonormalize_rows(&g) else { continue };
        let model = FcsModel::new(d, b, v)?;
        match Fcs::new(model.clone()) {
            Ok(_) => {
                return Ok(ModelSpec {
                    name: format!("random:d={d},b={b},seed={seed}"),
                    model,
                    provenance: Provenance::RandomSeed(s),
                })
            }
            Err(_) => {
                last_moduli = crate::fcs::transfer_operator(&model).map(|t| t.spectrum.moduli()).unwrap_or_default();
            }
        }
    }
    Err(Error::RetriesExhausted { retries: RANDOM_RETRIES, last_moduli })
}

fn parse_kv(body: &str, reference: &str) -> Result<Vec<(String, u64)>> {
    body.split(',')
        .map(|kv| {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::InvalidModelRef(reference.to_string()))?;
            let v: u64 = v.trim().parse().map_err(|_| Error::InvalidModelRef(reference.to_string()))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

fn lookup(kv: &[(String, u64)], key: &str, reference: &str) -> Result<u64> {
    kv.iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| Error::InvalidModelRef(format!("{reference} (missing `{key}`)")))
}

/// Resolves `aklt`, `product:d=<d>,basis=<k>`, `random:d=<d>,b=<b>,seed=<s>`
/// or a path to a JSON model file.
pub fn resolve(reference: &str) -> Result<ModelSpec> {
    resolve_with(reference, true)
}

/// As [`resolve`], but model files are only checked for shape.
pub fn resolve_unchecked(reference: &str) -> Result<ModelSpec> {
    resolve_with(reference, false)
}

fn resolve_with(reference: &str, checked: bool) -> Result<ModelSpec> {
    if reference == "aklt" {
        return Ok(aklt());
    }
    if let Some(body) = reference.strip_prefix("product:") {
        let kv = parse_kv(body, reference)?;
        let d = lookup(&kv, "d", reference)? as usize;
        let basis = lookup(&kv, "basis", reference)? as usize;
        return product_basis(d, basis);
    }
    if let Some(body) = reference.strip_prefix("random:") {
        let kv = parse_kv(body, reference)?;
        let d = lookup(&kv, "d", reference)? as usize;
        let b = lookup(&kv, "b", reference)? as usize;
        let seed = lookup(&kv, "seed", reference)?;
        return random_model(d, b, seed);
    }
    if checked {
        load_model(reference)
    } else {
        let text = std::fs::read_to_string(reference)?;
        let model = from_json_unchecked(&text)?;
        Ok(ModelSpec { name: reference.to_string(), model, provenance: Provenance::File(reference.into()) })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    d: usize,
    b: usize,
    v: Vec<Vec<[f64; 2]>>,
}

pub fn to_json(model: &FcsModel) -> String {
    let v = (0..model.b())
        .map(|i| (0..model.d() * model.b()).map(|j| [model.v()[(i, j)].re, model.v()[(i, j)].im]).collect())
        .collect();
    let file = ModelFile { d: model.d(), b: model.b(), v };
    serde_json::to_string(&file).expect("model serializes")
}

/// Parses and checks shape, then the isometry condition.
pub fn from_json(text: &str) -> Result<FcsModel> {
    let model = from_json_unchecked(text)?;
    let deviation = model.isometry_deviation();
    if deviation > TOL_ISOMETRY {
        return Err(Error::NotIsometry { deviation });
    }
    Ok(model)
}

pub fn from_json_unchecked(text: &str) -> Result<FcsModel> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if file.v.len() != file.b {
        return Err(Error::Parse(format!("v has {} rows, expected b = {}", file.v.len(), file.b)));
    }
    let cols = file.d * file.b;
    if let Some((i, row)) = file.v.iter().enumerate().find(|(_, r)| r.len() != cols) {
        return Err(Error::Parse(format!("row {i} of v has {} entries, expected d*b = {cols}", row.len())));
    }
    let v = ComplexMatrix::from_fn(file.b, cols, |i, j| c(file.v[i][j][0], file.v[i][j][1]));
    FcsModel::new(file.d, file.b, v)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let model = from_json(&text)?;
    Ok(ModelSpec { name: path.display().to_string(), model, provenance: Provenance::File(path.to_path_buf()) })
}

pub fn save_model(spec: &ModelSpec, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_json(&spec.model))?;
    Ok(())
}

/// SHA-256 of the canonical JSON serialization, hex encoded.
pub fn model_hash(model: &FcsModel) -> String {
    hex::encode(Sha256::digest(to_json(model).as_bytes()))
}

/// The identity on the first `b` coordinates; not pure (every eigenvalue is 1).
pub fn identity_rows(d: usize, b: usize) -> FcsModel {
    let v = ComplexMatrix::identity(d * b, d * b).rows(0, b).into_owned();
    FcsModel::new(d, b, v).expect("shape is consistent")
}

/// AKLT with `v` scaled by `factor`; fails the isometry check unless `factor = 1`.
pub fn scaled_aklt(factor: f64) -> FcsModel {
    let m = aklt().model;
    FcsModel::new(m.d(), m.b(), m.v() * re(factor)).expect("shape is consistent")
}
