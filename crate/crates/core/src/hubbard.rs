//! Extended Hubbard chain: Hamiltonian in an occupation sector, ground
//! states, and the robustness phase-diagram sweep.
//!
//! Site `j` with spin `σ` is mode `2j + σ` (`↑ = 0`, `↓ = 1`).

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{hop_on, Sector, SectorBasis, SectorOperator};
use crate::linalg::{derive_seed, CMat, HermitianEigen, C64};
use crate::sdp::SdpStatus;
use crate::states::{DensityState, StateMetadata};
use crate::witness::{optimal_witness, WitnessConfig, WitnessResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spin {
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    #[default]
    Periodic,
    Open,
}

impl std::str::FromStr for Boundary {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "periodic" => Ok(Self::Periodic),
            "open" => Ok(Self::Open),
            o => Err(format!("unknown boundary '{o}' (expected periodic or open)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EhmParams {
    pub sites: usize,
    pub particles: usize,
    pub hopping: f64,
    pub u: f64,
    pub v: f64,
    pub boundary: Boundary,
}

impl EhmParams {
    /// Half filling with unit hopping and periodic boundary.
    pub fn half_filled(sites: usize, u: f64, v: f64) -> Self {
        Self { sites, particles: sites, hopping: 1.0, u, v, boundary: Boundary::Periodic }
    }

    pub fn validate(&self) -> Result<Sector> {
        if self.sites < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 sites, got {}", self.sites)));
        }
        if self.particles > 2 * self.sites {
            return Err(Error::InvalidInput(format!(
                "{} particles do not fit on {} sites",
                self.particles, self.sites
            )));
        }
        if !(self.hopping > 0.0) || !self.hopping.is_finite() {
            return Err(Error::InvalidInput(format!("hopping must be positive, got {}", self.hopping)));
        }
        if !self.u.is_finite() || !self.v.is_finite() {
            return Err(Error::InvalidInput("interaction strengths must be finite".into()));
        }
        Sector::new(2 * self.sites, self.particles)
    }

    fn bonds(&self) -> Vec<(usize, usize)> {
        let l = self.sites;
        match self.boundary {
            Boundary::Periodic => (0..l).map(|j| (j, (j + 1) % l)).collect(),
            Boundary::Open => (0..l - 1).map(|j| (j, j + 1)).collect(),
        }
    }
}

pub fn mode_index(site: usize, spin: Spin, sites: usize) -> Result<usize> {
    if site >= sites {
        return Err(Error::InvalidInput(format!("site {site} out of range for {sites} sites")));
    }
    Ok(2 * site + usize::from(spin == Spin::Down))
}

fn occ(mask: u32, mode: usize) -> f64 {
    f64::from((mask >> mode) & 1)
}

pub fn build_hamiltonian(p: &EhmParams) -> Result<SectorOperator> {
    let sector = p.validate()?;
    let basis = SectorBasis::new(sector);
    let dim = basis.dim();
    let bonds = p.bonds();
    let mut h = CMat::zeros(dim, dim);
    for (col, &mask) in basis.states().iter().enumerate() {
        let n_site = |j: usize| occ(mask, 2 * j) + occ(mask, 2 * j + 1);
        let mut diag = 0.0;
        for j in 0..p.sites {
            diag += p.u * occ(mask, 2 * j) * occ(mask, 2 * j + 1);
        }
        for &(a, b) in &bonds {
            diag += p.v * n_site(a) * n_site(b);
        }
        h[(col, col)] += C64::new(diag, 0.0);
        for &(a, b) in &bonds {
            for s in 0..2 {
                let (ma, mb) = (2 * a + s, 2 * b + s);
                for (to, from) in [(ma, mb), (mb, ma)] {
                    if let Some((target, sign)) = hop_on(mask, to, from) {
                        let row = basis.index_of(target).expect("hopping stays in the sector");
                        h[(row, col)] -= C64::new(p.hopping * sign, 0.0);
                    }
                }
            }
        }
    }
    SectorOperator::hermitian(sector, h)
}

#[derive(Debug, Clone)]
pub struct GroundState {
    pub energy: f64,
    pub state: DensityState,
    pub degenerate: bool,
    pub degeneracy: usize,
}

/// Lowest eigenpair. Eigenvalues within `tol` of the lowest (default
/// `1e-8·‖H‖`) form the ground space, returned as an equal-weight mixture.
pub fn ground_state(h: &SectorOperator, tol: Option<f64>) -> Result<GroundState> {
    let eig = HermitianEigen::new(h.matrix());
    if eig.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("eigensolver returned non-finite values".into()));
    }
    let norm = eig.min().abs().max(eig.max().abs());
    let tol = tol.unwrap_or(1e-8 * norm.max(1e-300));
    let e0 = eig.min();
    let k = eig.values.iter().take_while(|&&v| v - e0 < tol).count().max(1);
    let dim = h.dim();
    let mut rho = CMat::zeros(dim, dim);
    for c in 0..k {
        let v = eig.vectors.column(c);
        rho += &v * v.adjoint();
    }
    rho /= C64::new(k as f64, 0.0);
    let meta = StateMetadata::new("ground-state").with("energy", e0).with("degeneracy", k as f64);
    let state = DensityState::normalized(h.sector(), rho, meta)?;
    Ok(GroundState { energy: e0, state, degenerate: k > 1, degeneracy: k })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub u_over_t: Vec<f64>,
    pub v_over_t: Vec<f64>,
    pub witness: WitnessConfig,
}

impl SweepGrid {
    /// `n × m` evenly spaced points on `[lo, hi]²`.
    pub fn square(lo: f64, hi: f64, nu: usize, nv: usize, witness: WitnessConfig) -> Self {
        Self { u_over_t: linspace(lo, hi, nu), v_over_t: linspace(lo, hi, nv), witness }
    }

    pub fn validate(&self) -> Result<()> {
        if self.u_over_t.is_empty() || self.v_over_t.is_empty() {
            return Err(Error::InvalidInput("empty sweep grid".into()));
        }
        if self.u_over_t.iter().chain(&self.v_over_t).any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite grid value".into()));
        }
        self.witness.validate()
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseRow {
    pub iu: usize,
    pub iv: usize,
    pub u_over_t: f64,
    pub v_over_t: f64,
    pub energy: f64,
    pub degenerate: bool,
    pub robustness: f64,
    pub validation_min: f64,
    pub status: String,
}

pub const CSV_HEADER: [&str; 7] =
    ["u_over_t", "v_over_t", "energy", "degenerate", "robustness", "validation_min", "status"];

/// Decimal with 12 significant digits.
pub fn sig12(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return format!("{:.11}", 0.0);
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = (11 - mag).clamp(0, 340) as usize;
    let s = format!("{x:.decimals$}");
    // rounding can carry into a new leading digit
    let digits = s.chars().filter(|c| c.is_ascii_digit()).skip_while(|&c| c == '0').count();
    if digits > 12 && decimals > 0 {
        format!("{x:.prec$}", prec = decimals - 1)
    } else {
        s
    }
}

impl PhaseRow {
    fn record(&self) -> [String; 7] {
        [
            sig12(self.u_over_t),
            sig12(self.v_over_t),
            sig12(self.energy),
            self.degenerate.to_string(),
            sig12(self.robustness),
            sig12(self.validation_min),
            self.status.clone(),
        ]
    }
}

fn status_label(s: SdpStatus) -> &'static str {
    match s {
        SdpStatus::Optimal => "ok",
        SdpStatus::MaxIter => "max-iter",
        SdpStatus::Stalled => "stalled",
        SdpStatus::InfeasibleDetected => "infeasible",
    }
}

/// Evaluates one grid point; solver failures land in the status column.
pub fn phase_point(grid: &SweepGrid, base: &EhmParams, iu: usize, iv: usize) -> PhaseRow {
    evaluate_point(grid, base, iu, iv).0
}

/// [`phase_point`] that also hands back the witness when one was found.
pub fn evaluate_point(grid: &SweepGrid, base: &EhmParams, iu: usize, iv: usize) -> (PhaseRow, Option<WitnessResult>) {
    let u = grid.u_over_t[iu];
    let v = grid.v_over_t[iv];
    let params = EhmParams { u: u * base.hopping, v: v * base.hopping, ..*base };
    let mut row = PhaseRow {
        iu,
        iv,
        u_over_t: u,
        v_over_t: v,
        energy: f64::NAN,
        degenerate: false,
        robustness: f64::NAN,
        validation_min: f64::NAN,
        status: String::new(),
    };
    let gs = match build_hamiltonian(&params).and_then(|h| ground_state(&h, None)) {
        Ok(g) => g,
        Err(e) => {
            row.status = format!("error: {e}");
            return (row, None);
        }
    };
    row.energy = gs.energy;
    row.degenerate = gs.degenerate;
    let cfg = WitnessConfig { seed: derive_seed(grid.witness.seed, &[iu as u64, iv as u64]), ..grid.witness };
    match optimal_witness(&gs.state, &cfg) {
        Ok(r) => {
            row.robustness = r.robustness;
            row.validation_min = r.validation.min_validation_value;
            row.status = r.rounds.last().map_or("ok", |x| status_label(x.status)).to_string();
            (row, Some(r))
        }
        Err(e) => {
            row.status = format!("error: {e}");
            (row, None)
        }
    }
}

fn parse_row(rec: &csv::StringRecord, grid: &SweepGrid) -> Option<PhaseRow> {
    let f = |i: usize| rec.get(i)?.parse::<f64>().ok();
    let u = f(0)?;
    let v = f(1)?;
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + b.abs());
    let iu = grid.u_over_t.iter().position(|&x| close(u, x))?;
    let iv = grid.v_over_t.iter().position(|&x| close(v, x))?;
    Some(PhaseRow {
        iu,
        iv,
        u_over_t: grid.u_over_t[iu],
        v_over_t: grid.v_over_t[iv],
        energy: f(2)?,
        degenerate: rec.get(3)?.parse().ok()?,
        robustness: f(4)?,
        validation_min: f(5)?,
        status: rec.get(6)?.to_string(),
    })
}

/// Rows already present in a partial output, keyed by grid indices.
pub fn read_completed(path: &Path, grid: &SweepGrid) -> Result<BTreeMap<(usize, usize), PhaseRow>> {
    let mut out = BTreeMap::new();
    if !path.exists() {
        return Ok(out);
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_path(path)?;
    for rec in rdr.records() {
        // a truncated trailing line from an interrupted run is skipped and recomputed
        let Ok(rec) = rec else { continue };
        if let Some(row) = parse_row(&rec, grid) {
            out.insert((row.iu, row.iv), row);
        }
    }
    Ok(out)
}

fn write_sorted(path: &Path, rows: &BTreeMap<(usize, usize), PhaseRow>) -> Result<()> {
    let tmp = path.with_extension("csv.tmp");
    {
        let mut w = csv::Writer::from_path(&tmp)?;
        w.write_record(CSV_HEADER)?;
        for row in rows.values() {
            w.write_record(row.record())?;
        }
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Runs the sweep. With `output`, rows are appended and flushed as they
/// finish, completed rows are skipped when `resume` is set, and the file is
/// rewritten in grid order at the end. Rows come back in grid order.
pub fn phase_diagram(
    grid: &SweepGrid,
    base: &EhmParams,
    output: Option<&Path>,
    resume: bool,
) -> Result<Vec<PhaseRow>> {
    grid.validate()?;
    base.validate()?;
    let mut done = match (output, resume) {
        (Some(p), true) => read_completed(p, grid)?,
        _ => BTreeMap::new(),
    };
    let sink: Option<Mutex<csv::Writer<File>>> = match output {
        Some(p) => {
            if !resume || done.is_empty() {
                let mut w = csv::Writer::from_path(p)?;
                w.write_record(CSV_HEADER)?;
                w.flush()?;
                drop(w);
            } else {
                // rewrite cleanly so a truncated last line cannot corrupt appended rows
                write_sorted(p, &done)?;
            }
            let f = OpenOptions::new().append(true).open(p)?;
            Some(Mutex::new(csv::WriterBuilder::new().has_headers(false).from_writer(f)))
        }
        None => None,
    };
    let todo: Vec<(usize, usize)> = (0..grid.u_over_t.len())
        .flat_map(|iu| (0..grid.v_over_t.len()).map(move |iv| (iu, iv)))
        .filter(|k| !done.contains_key(k))
        .collect();
    let fresh: Vec<PhaseRow> = todo
        .par_iter()
        .map(|&(iu, iv)| {
            let row = phase_point(grid, base, iu, iv);
            if let Some(s) = &sink {
                let mut w = s.lock().expect("csv sink poisoned");
                w.write_record(row.record())?;
                w.flush()?;
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    drop(sink);
    for row in fresh {
        done.insert((row.iu, row.iv), row);
    }
    if let Some(p) = output {
        write_sorted(p, &done)?;
    }
    Ok(done.into_values().collect())
}

/// Writes rows (already in grid order) as CSV.
pub fn write_rows(w: impl Write, rows: &[PhaseRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}
