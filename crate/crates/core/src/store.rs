//! On-disk result trees and the plot-ready tables rendered from them.
//!
//! ```text
//! <root>/<config-hash>/
//!     config.toml
//!     <state>/<omega>/realisation-<k>.json
//!     <state>/<omega>/ensemble.json      (ensemble mode)
//!     <state>/<omega>/failures.json      (incomplete cells)
//!     coverage/<state>_<omega>.csv
//!     summary.csv
//!     calibration.json, calibration.csv, spectra.csv   (calibration mode)
//!     manifest.json
//! ```
//!
//! The manifest lists every other file with its SHA-256 and carries no
//! timestamps, so identical runs produce identical manifests.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::experiments::{
    CalibrationPoint, CellResult, CellStats, EnsembleResult, RealisationResult, RunConfig, RunMode, Stat, SweepResult,
    TaskFailure,
};
use crate::state::catalog_state;
use crate::topology::{coverage_csv, TopologyReport};
use crate::witness::WitnessReport;

pub const MANIFEST: &str = "manifest.json";
/// Placeholder for values that are missing from the tree.
pub const GAP: &str = "NA";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: Option<String>,
    pub artifacts: Vec<Artifact>,
}

/// Directory name of a turbulence strength, its shortest exact decimal.
pub fn omega_label(omega: f64) -> String {
    format!("{omega}")
}

pub fn cell_dir(state_id: &str, omega: f64) -> PathBuf {
    PathBuf::from(state_id).join(omega_label(omega))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes `result` below `root/<config-hash>` and returns that directory.
pub fn write_results(root: &Path, result: &SweepResult) -> Result<PathBuf> {
    let dir = root.join(&result.config_hash);
    fs::create_dir_all(&dir)?;
    write_text(&dir.join("config.toml"), &result.config.to_toml_string())?;
    for cell in &result.cells {
        let cdir = dir.join(cell_dir(&cell.state_id, cell.omega));
        fs::create_dir_all(&cdir)?;
        for r in &cell.realisations {
            write_json(&cdir.join(format!("realisation-{}.json", r.k)), r)?;
        }
        if let Some(e) = &cell.ensemble {
            write_json(&cdir.join("ensemble.json"), e)?;
        }
        if !cell.failures.is_empty() {
            write_json(&cdir.join("failures.json"), &cell.failures)?;
        }
        if !cell.coverage.is_empty() {
            let name = format!("{}_{}.csv", cell.state_id, omega_label(cell.omega));
            write_text(&dir.join("coverage").join(name), &coverage_csv(&cell.coverage))?;
        }
    }
    if result.config.mode == RunMode::Calibration {
        write_json(&dir.join("calibration.json"), &result.calibration)?;
        write_text(&dir.join("calibration.csv"), &p0_table(&result.calibration).to_csv())?;
        write_text(&dir.join("spectra.csv"), &spectra_table(&result.calibration).to_csv())?;
    } else {
        write_text(&dir.join("summary.csv"), &summary_table(&result.cells).to_csv())?;
    }
    write_manifest(&dir, Some(&result.config_hash))?;
    Ok(dir)
}

/// Hashes every file under `dir` except the manifest itself and writes
/// `manifest.json`, sorted by relative path.
pub fn write_manifest(dir: &Path, config_hash: Option<&str>) -> Result<Manifest> {
    let mut files = Vec::new();
    collect_files(dir, dir, &mut files)?;
    files.sort();
    let artifacts = files
        .into_iter()
        .filter(|p| p != MANIFEST)
        .map(|p| {
            let bytes = fs::read(dir.join(&p))?;
            Ok(Artifact { sha256: hex::encode(Sha256::digest(&bytes)), path: p })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest { config_hash: config_hash.map(str::to_owned), artifacts };
    write_json(&dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

fn collect_files(base: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(base, &path, out)?;
        } else {
            let rel = path.strip_prefix(base).expect("walked below base");
            let parts: Vec<_> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
            out.push(parts.join("/"));
        }
    }
    Ok(())
}

/// A result tree read back from disk, with the files that were expected
/// from its config but absent.
#[derive(Clone, Debug)]
pub struct LoadedResults {
    pub result: SweepResult,
    pub missing: Vec<String>,
}

pub fn load_results(dir: &Path) -> Result<LoadedResults> {
    if !dir.is_dir() {
        return Err(Error::InvalidArgument(format!("results directory {} does not exist", dir.display())));
    }
    let config_path = dir.join("config.toml");
    if !config_path.is_file() {
        return Err(Error::InvalidArgument(format!("{} holds no results (config.toml not found)", dir.display())));
    }
    let config = RunConfig::load(&config_path)?;
    let mut missing = Vec::new();
    let mut cells = Vec::new();
    let mut calibration = Vec::new();
    if config.mode == RunMode::Calibration {
        let p = dir.join("calibration.json");
        if p.is_file() {
            calibration = read_json::<Vec<CalibrationPoint>>(&p)?;
        } else {
            missing.push("calibration.json".to_string());
        }
    } else {
        for id in &config.states {
            let target = catalog_state::<f64>(id)?.skyrmion_number;
            for (i, &omega) in config.omegas.iter().enumerate() {
                let rel = cell_dir(id, omega);
                let cdir = dir.join(&rel);
                let rel = rel.to_string_lossy().replace('\\', "/");
                let mut realisations = Vec::new();
                let failures: Vec<TaskFailure> = if cdir.join("failures.json").is_file() {
                    read_json(&cdir.join("failures.json"))?
                } else {
                    Vec::new()
                };
                for k in 0..config.realisations {
                    let p = cdir.join(format!("realisation-{k}.json"));
                    if p.is_file() {
                        realisations.push(read_json::<RealisationResult>(&p)?);
                    } else if !failures.iter().any(|f| f.k == k) {
                        missing.push(format!("{rel}/realisation-{k}.json"));
                    }
                }
                let ensemble = if config.mode == RunMode::Ensemble {
                    let p = cdir.join("ensemble.json");
                    if p.is_file() {
                        Some(read_json::<EnsembleResult>(&p)?)
                    } else {
                        missing.push(format!("{rel}/ensemble.json"));
                        None
                    }
                } else {
                    None
                };
                let stats = CellStats::of(&realisations);
                cells.push(CellResult {
                    state_id: id.clone(),
                    omega,
                    omega_index: i,
                    target,
                    realisations,
                    failures,
                    stats,
                    ensemble,
                    coverage: Vec::new(),
                });
            }
        }
    }
    let config_hash = config.hash();
    Ok(LoadedResults { result: SweepResult { config, config_hash, cells, calibration }, missing })
}

/// A rectangular table of preformatted cells.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for row in &self.rows {
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }

    /// Rows as objects keyed by column name; cells stay strings.
    pub fn to_json(&self) -> serde_json::Value {
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let obj = self.header.iter().cloned().zip(r.iter().map(|c| serde_json::Value::String(c.clone())));
                serde_json::Value::Object(obj.collect())
            })
            .collect();
        serde_json::Value::Array(rows)
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_else(|| GAP.into())
}

/// Mean, then standard deviation; the latter is empty for single values.
fn stat_cells(s: Option<&Stat>) -> [String; 3] {
    match s {
        Some(s) => [s.n.to_string(), num(s.mean), s.std.map(num).unwrap_or_default()],
        None => ["0".into(), GAP.into(), GAP.into()],
    }
}

/// Per-realisation witness table plus one row per ensemble state.
pub fn summary_table(cells: &[CellResult]) -> Table {
    let mut t = Table::new(
        "summary",
        &[
            "state",
            "omega",
            "realisation",
            "concurrence",
            "fidelity",
            "purity",
            "mutual_information",
            "classical_correlation",
            "discord",
            "skyrmion_number",
        ],
    );
    for c in cells {
        let mut push = |label: String, w: &WitnessReport<f64>, n: Option<f64>| {
            t.rows.push(vec![
                c.state_id.clone(),
                num(c.omega),
                label,
                num(w.concurrence),
                opt(w.fidelity_to_reference),
                num(w.purity),
                num(w.mutual_information),
                num(w.classical_correlation),
                num(w.discord),
                opt(n),
            ]);
        };
        for r in &c.realisations {
            push(r.k.to_string(), &r.witness, r.topology.as_ref().map(|t| t.skyrmion_number));
        }
        if let Some(e) = &c.ensemble {
            push("ensemble".into(), &e.witness, e.topology.as_ref().map(|t| t.skyrmion_number));
        }
    }
    t
}

/// Ensemble column: a gap when an ensemble run lacks the value, empty for
/// static runs.
fn ensemble_value(c: &CellResult, mode: RunMode, f: impl Fn(&EnsembleResult) -> Option<f64>) -> String {
    match (&c.ensemble, mode) {
        (Some(e), _) => opt(f(e)),
        (None, RunMode::Ensemble) => GAP.into(),
        (None, _) => String::new(),
    }
}

pub fn skyrmion_table(cells: &[CellResult], mode: RunMode) -> Table {
    let mut t = Table::new("n_vs_omega", &["state", "omega", "target", "n", "mean", "std", "ensemble", "failed"]);
    for c in cells {
        let [n, m, s] = stat_cells(c.stats.skyrmion_number.as_ref());
        let e = ensemble_value(c, mode, |e| e.topology.as_ref().map(|t| t.skyrmion_number));
        t.rows.push(vec![
            c.state_id.clone(),
            num(c.omega),
            c.target.to_string(),
            n,
            m,
            s,
            e,
            c.failures.len().to_string(),
        ]);
    }
    t
}

pub fn purity_table(cells: &[CellResult], mode: RunMode) -> Table {
    let mut t =
        Table::new("purity_vs_omega", &["state", "omega", "n", "mean", "std", "ensemble", "bound_lo", "bound_hi"]);
    for c in cells {
        let [n, m, s] = stat_cells(c.stats.purity.as_ref());
        let e = ensemble_value(c, mode, |e| Some(e.witness.purity));
        let lo = ensemble_value(c, mode, |e| e.bounds.as_ref().map(|b| b.purity.lo));
        let hi = ensemble_value(c, mode, |e| e.bounds.as_ref().map(|b| b.purity.hi));
        t.rows.push(vec![c.state_id.clone(), num(c.omega), n, m, s, e, lo, hi]);
    }
    t
}

pub fn discord_table(cells: &[CellResult], mode: RunMode) -> Table {
    let mut t = Table::new(
        "discord_vs_omega",
        &["state", "omega", "n", "mean", "std", "normalized_mean", "ensemble", "bound_lo", "bound_hi"],
    );
    for c in cells {
        let [n, m, s] = stat_cells(c.stats.discord.as_ref());
        let normalized: Vec<f64> = c.realisations.iter().filter_map(|r| r.witness.discord_normalized).collect();
        let nm = Stat::of(&normalized).map(|s| num(s.mean)).unwrap_or_else(|| GAP.into());
        let e = ensemble_value(c, mode, |e| Some(e.witness.discord));
        let lo = ensemble_value(c, mode, |e| e.bounds.as_ref().map(|b| b.discord.lo));
        let hi = ensemble_value(c, mode, |e| e.bounds.as_ref().map(|b| b.discord.hi));
        t.rows.push(vec![c.state_id.clone(), num(c.omega), n, m, s, nm, e, lo, hi]);
    }
    t
}

pub fn contrast_table(cells: &[CellResult]) -> Table {
    let mut t = Table::new("qc_vs_omega", &["state", "omega", "n", "mean", "std"]);
    for c in cells {
        let [n, m, s] = stat_cells(c.stats.quantum_contrast.as_ref());
        t.rows.push(vec![c.state_id.clone(), num(c.omega), n, m, s]);
    }
    t
}

pub fn p0_table(points: &[CalibrationPoint]) -> Table {
    let mut t = Table::new(
        "p0_vs_omega",
        &["omega", "n", "mean", "std", "lg0_mean", "analytic", "captured_mean", "captured_min", "ell_variance"],
    );
    for p in points {
        let [n, m, s] = stat_cells(Some(&p.p0));
        t.rows.push(vec![
            num(p.omega),
            n,
            m,
            s,
            num(p.p0_lg0.mean),
            num(p.analytic),
            num(p.captured.mean),
            num(p.captured_min),
            num(p.ell_variance.mean),
        ]);
    }
    t
}

pub fn spectra_table(points: &[CalibrationPoint]) -> Table {
    let mut t = Table::new("oam_spectra", &["omega", "ell", "mean", "std"]);
    for p in points {
        for (i, ell) in (p.ell_min..=p.ell_max).enumerate() {
            t.rows.push(vec![num(p.omega), ell.to_string(), num(p.spectrum_mean[i]), num(p.spectrum_std[i])]);
        }
    }
    t
}

/// One row per labelled witness report.
pub fn witness_table(reports: &[(String, &WitnessReport<f64>)]) -> Table {
    let mut t = Table::new(
        "witness",
        &[
            "label",
            "concurrence",
            "fidelity",
            "purity",
            "mutual_information",
            "classical_correlation",
            "discord",
            "discord_normalized",
        ],
    );
    for (label, w) in reports {
        t.rows.push(vec![
            label.clone(),
            num(w.concurrence),
            opt(w.fidelity_to_reference),
            num(w.purity),
            num(w.mutual_information),
            num(w.classical_correlation),
            num(w.discord),
            opt(w.discord_normalized),
        ]);
    }
    t
}

pub fn topology_table(reports: &[(String, &TopologyReport<f64>)]) -> Table {
    let mut t = Table::new(
        "topology",
        &[
            "label",
            "skyrmion_number",
            "aperture_number",
            "aperture_radius",
            "epsilon",
            "excluded_pixels",
            "aperture_pixels",
            "closed",
        ],
    );
    for (label, r) in reports {
        t.rows.push(vec![
            label.clone(),
            num(r.skyrmion_number),
            num(r.aperture_number),
            num(r.aperture_radius),
            num(r.epsilon),
            r.excluded_pixels.to_string(),
            r.aperture_pixels.to_string(),
            r.closed.to_string(),
        ]);
    }
    t
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }

    pub fn render(self, table: &Table) -> String {
        match self {
            Format::Csv => table.to_csv(),
            Format::Json => {
                let mut s = serde_json::to_string_pretty(&table.to_json()).expect("string table serializes");
                s.push('\n');
                s
            }
        }
    }
}

/// Writes each table to `dir/<name>.<ext>` and returns the file paths.
pub fn write_tables(dir: &Path, tables: &[Table], format: Format) -> Result<Vec<PathBuf>> {
    tables
        .iter()
        .map(|t| {
            let path = dir.join(format!("{}.{}", t.name, format.extension()));
            write_text(&path, &format.render(t))?;
            Ok(path)
        })
        .collect()
}

/// Tables rendered from a loaded tree.
#[derive(Clone, Debug)]
pub struct Report {
    pub tables: Vec<Table>,
    pub missing: Vec<String>,
}

pub fn report(loaded: &LoadedResults) -> Report {
    let r = &loaded.result;
    let tables = if r.config.mode == RunMode::Calibration {
        vec![p0_table(&r.calibration), spectra_table(&r.calibration)]
    } else {
        vec![
            summary_table(&r.cells),
            skyrmion_table(&r.cells, r.config.mode),
            purity_table(&r.cells, r.config.mode),
            discord_table(&r.cells, r.config.mode),
            contrast_table(&r.cells),
        ]
    };
    Report { tables, missing: loaded.missing.clone() }
}
