//! JSON state and witness files, and the run manifest written beside outputs.
//!
//! Matrices are stored row-major as `[re, im]` pairs. Floats are written in
//! shortest round-trip form, so parsing and re-serializing a file reproduces
//! it byte for byte.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{Sector, SectorOperator};
use crate::linalg::{CMat, C64};
use crate::states::{DensityState, StateMetadata};
use crate::witness::{ValidationReport, WitnessResult};

pub const BASIS_ORDER: &str = "lex-bitmask";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateFile {
    pub d: usize,
    pub n: usize,
    pub basis_order: String,
    pub matrix: Vec<[f64; 2]>,
    #[serde(default)]
    pub metadata: StateMetadata,
}

fn flatten(m: &CMat) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(m.len());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push([m[(r, c)].re, m[(r, c)].im]);
        }
    }
    out
}

fn unflatten(entries: &[[f64; 2]], d: usize, n: usize, basis_order: &str) -> Result<(Sector, CMat)> {
    if basis_order != BASIS_ORDER {
        return Err(Error::Parse(format!("field basis_order: expected \"{BASIS_ORDER}\", got \"{basis_order}\"")));
    }
    let sector = Sector::new(d, n).map_err(|e| Error::Parse(format!("fields d, n: {e}")))?;
    let dim = sector.dim();
    if entries.len() != dim * dim {
        return Err(Error::Parse(format!(
            "field matrix: expected {} entries for a {dim}x{dim} matrix, got {}",
            dim * dim,
            entries.len()
        )));
    }
    if let Some(k) = entries.iter().position(|e| !e[0].is_finite() || !e[1].is_finite()) {
        return Err(Error::Parse(format!("field matrix: entry ({}, {}) is not finite", k / dim, k % dim)));
    }
    Ok((sector, CMat::from_fn(dim, dim, |r, c| C64::new(entries[r * dim + c][0], entries[r * dim + c][1]))))
}

impl StateFile {
    pub fn from_state(rho: &DensityState) -> Self {
        let s = rho.sector();
        Self {
            d: s.modes,
            n: s.particles,
            basis_order: BASIS_ORDER.into(),
            matrix: flatten(rho.matrix()),
            metadata: rho.metadata.clone(),
        }
    }

    pub fn to_state(&self) -> Result<DensityState> {
        let (sector, m) = unflatten(&self.matrix, self.d, self.n, &self.basis_order)?;
        DensityState::new(sector, m, self.metadata.clone())
            .map_err(|e| Error::Parse(format!("field matrix: {e}")))
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

pub fn read_state(path: &Path) -> Result<DensityState> {
    let text = std::fs::read_to_string(path)?;
    StateFile::parse(&text).and_then(|f| f.to_state())
}

pub fn write_state(path: &Path, rho: &DensityState) -> Result<()> {
    std::fs::write(path, StateFile::from_state(rho).to_json()?)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WitnessFile {
    pub d: usize,
    pub n: usize,
    pub basis_order: String,
    pub matrix: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<WitnessReport>,
}

/// Scalar summary of a [`WitnessResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub objective: f64,
    pub robustness: f64,
    pub dual_bound: f64,
    pub method: String,
    pub backend: String,
    pub block_sizes: Vec<usize>,
    pub rounds: usize,
    pub constraints_added: usize,
    pub min_validation_value: f64,
    pub validation_samples: usize,
    pub min_search_value: f64,
    pub shift: f64,
    pub max_eigenvalue: f64,
}

fn label<T: Serialize>(x: &T) -> String {
    match serde_json::to_value(x) {
        Ok(serde_json::Value::String(s)) => s,
        _ => String::new(),
    }
}

impl WitnessReport {
    pub fn new(r: &WitnessResult) -> Self {
        let v: &ValidationReport = &r.validation;
        Self {
            objective: r.objective,
            robustness: r.robustness,
            dual_bound: r.dual_bound,
            method: label(&r.method),
            backend: label(&r.backend),
            block_sizes: r.block_sizes.clone(),
            rounds: v.rounds,
            constraints_added: v.constraints_added,
            min_validation_value: v.min_validation_value,
            validation_samples: v.validation_samples,
            min_search_value: v.min_search_value,
            shift: v.shift,
            max_eigenvalue: v.max_eigenvalue,
        }
    }
}

impl WitnessFile {
    pub fn from_result(r: &WitnessResult) -> Self {
        let mut f = Self::from_operator(&r.witness);
        f.report = Some(WitnessReport::new(r));
        f
    }

    pub fn from_operator(w: &SectorOperator) -> Self {
        let s = w.sector();
        Self { d: s.modes, n: s.particles, basis_order: BASIS_ORDER.into(), matrix: flatten(w.matrix()), report: None }
    }

    pub fn to_operator(&self) -> Result<SectorOperator> {
        let (sector, m) = unflatten(&self.matrix, self.d, self.n, &self.basis_order)?;
        SectorOperator::hermitian(sector, m).map_err(|e| Error::Parse(format!("field matrix: {e}")))
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

pub fn read_witness(path: &Path) -> Result<SectorOperator> {
    let text = std::fs::read_to_string(path)?;
    WitnessFile::parse(&text).and_then(|f| f.to_operator())
}

/// Everything needed to repeat a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub arguments: Vec<String>,
    pub parameters: serde_json::Value,
    pub seed: u64,
    pub version: String,
    pub wall_time_seconds: f64,
}

impl RunManifest {
    /// Manifest path for an output file: `out.csv` → `out.csv.manifest.json`.
    pub fn path_for(output: &Path) -> std::path::PathBuf {
        let mut name = output.file_name().map(|s| s.to_os_string()).unwrap_or_default();
        name.push(".manifest.json");
        output.with_file_name(name)
    }

    pub fn write(&self, output: &Path) -> Result<()> {
        std::fs::write(Self::path_for(output), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{max_entangled, random_mixed};

    #[test]
    fn state_round_trip_is_byte_identical() {
        for rho in [random_mixed(4, 2, 3, 11).unwrap(), max_entangled(2).unwrap()] {
            let a = StateFile::from_state(&rho).to_json().unwrap();
            let back = StateFile::parse(&a).unwrap().to_state().unwrap();
            assert_eq!(back.matrix(), rho.matrix());
            assert_eq!(StateFile::from_state(&back).to_json().unwrap(), a);
        }
    }

    #[test]
    fn witness_round_trip_is_byte_identical() {
        let w = SectorOperator::identity(Sector::new(4, 2).unwrap());
        let a = WitnessFile::from_operator(&w).to_json().unwrap();
        let back = WitnessFile::parse(&a).unwrap().to_operator().unwrap();
        assert_eq!(WitnessFile::from_operator(&back).to_json().unwrap(), a);
    }

    #[test]
    fn diagnostics_name_the_field() {
        let rho = max_entangled(2).unwrap();
        let mut f = StateFile::from_state(&rho);
        f.matrix.pop();
        assert!(f.to_state().unwrap_err().to_string().contains("field matrix"));
        let mut g = StateFile::from_state(&rho);
        g.basis_order = "other".into();
        assert!(g.to_state().unwrap_err().to_string().contains("basis_order"));
        let mut h = StateFile::from_state(&rho);
        h.matrix[0][0] = 2.0;
        assert!(h.to_state().unwrap_err().to_string().contains("trace"));
        let e = StateFile::parse("{\n \"d\": 4,\n \"n\": }").unwrap_err().to_string();
        assert!(e.contains("line 3"), "{e}");
    }

    #[test]
    fn manifest_sits_beside_output() {
        let p = RunManifest::path_for(Path::new("/tmp/out.csv"));
        assert_eq!(p, Path::new("/tmp/out.csv.manifest.json"));
    }
}
