//! Sweep protocols: static per-realisation runs, ensemble-averaged runs and
//! the single-photon calibration experiment.
//!
//! Every random draw is seeded from the run seed and the task key, so a
//! [`SweepResult`] is a pure function of its [`RunConfig`]. Tasks run on the
//! rayon pool and are merged in task-key order.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{apply_screen, survival_probability_analytic, CountModel, ModePair, ModeTransfer};
use crate::error::{Error, Result};
use crate::linalg::Mat4;
use crate::optics::{lg_field, Grid2D, LgMode, OamAnalyzer};
use crate::state::{catalog, catalog_state, BipartitePureState, DensityMatrix4, DEFAULT_W0};
use crate::tomography::{
    reconstruct_density_with, simulate_with_transfer, FitModel, Reconstruction, ReconstructionOptions, TomographyRecord,
};
use crate::topology::{mode_map_of, topology_report, CoverageSample, TopologyOptions, TopologyReport, DEFAULT_EPSILON};
use crate::turbulence::{generate_screen, omega_to_fried, PhaseScreen, TurbulenceSpec, DEFAULT_SUBHARMONICS};
use crate::witness::{concurrence, discord, fidelity, purity, witness_report, WitnessReport};

/// Environment variable that replaces the configured seed.
pub const SEED_ENV: &str = "SKYSIM_SEED";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    #[default]
    Static,
    Ensemble,
    Calibration,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    /// Side length in meters.
    pub extent: f64,
}

impl GridConfig {
    pub fn grid(&self) -> Result<Grid2D<f64>> {
        Grid2D::new(self.n, self.extent)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: RunMode,
    /// Catalog ids; defaults to the whole catalog.
    pub states: Vec<String>,
    pub omegas: Vec<f64>,
    pub realisations: usize,
    pub seed: u64,
    pub w0: f64,
    /// Grid carrying the photon-B modes through the screen.
    pub grid: GridConfig,
    /// Grid on which the Bloch field is sampled.
    pub topology_grid: GridConfig,
    pub n_subharmonics: u32,
    pub counts: Option<CountModel<f64>>,
    pub fit_model: FitModel,
    pub epsilon: f64,
    /// Coverage samples per side in exported textures; zero disables export.
    pub coverage_per_side: usize,
    /// OAM window `±window` of the calibration spectra.
    pub calibration_window: i32,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: RunMode::Static,
            states: catalog::<f64>().into_iter().map(|e| e.id.to_string()).collect(),
            omegas: (1..=8).map(|i| i as f64 * 0.25).collect(),
            realisations: 10,
            seed: 1,
            w0: DEFAULT_W0,
            grid: GridConfig { n: 256, extent: 0.024 },
            topology_grid: GridConfig { n: 256, extent: 0.016 },
            n_subharmonics: DEFAULT_SUBHARMONICS,
            counts: None,
            fit_model: FitModel::Full,
            epsilon: DEFAULT_EPSILON,
            coverage_per_side: 32,
            calibration_window: 10,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config is representable in TOML")
    }

    /// Replaces the seed with `SKYSIM_SEED` when that variable is set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV} must be an unsigned integer, got '{v}'")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.omegas.is_empty() {
            return bad("omega ladder must not be empty".into());
        }
        if let Some(w) = self.omegas.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return bad(format!("turbulence strengths must be finite and nonnegative, got {w}"));
        }
        if self.omegas.windows(2).any(|w| w[1] <= w[0]) {
            return bad("omega ladder must be strictly increasing".into());
        }
        if self.realisations == 0 {
            return bad("at least one realisation is required".into());
        }
        if !(self.w0 > 0.0) || !self.w0.is_finite() {
            return bad(format!("beam waist must be positive, got {}", self.w0));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon must lie in (0, 1), got {}", self.epsilon));
        }
        if self.calibration_window < 0 {
            return bad("calibration window must be nonnegative".into());
        }
        self.grid.grid()?;
        self.topology_grid.grid()?;
        if let Some(c) = &self.counts {
            c.validate()?;
        }
        if self.mode != RunMode::Calibration {
            if self.states.is_empty() {
                return bad("state selection must not be empty".into());
            }
            for (i, id) in self.states.iter().enumerate() {
                catalog_state::<f64>(id)?;
                if self.states[..i].contains(id) {
                    return bad(format!("state '{id}' is selected twice"));
                }
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the JSON encoding, truncated to 16 characters.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("run config serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }
}

/// Deterministic 64-bit seed for a tagged task key.
pub fn derive_seed(base: u64, tag: &str, key: &[u64]) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update(tag.as_bytes());
    for k in key {
        h.update(k.to_le_bytes());
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// Seed of screen `k` at ladder index `omega_index`; shared by all states.
pub fn screen_seed(base: u64, omega_index: usize, k: usize) -> u64 {
    derive_seed(base, "screen", &[omega_index as u64, k as u64])
}

/// The screen used by realisation `k` at ladder index `omega_index`, or
/// `None` at zero strength.
pub fn realisation_screen(config: &RunConfig, omega_index: usize, k: usize) -> Result<Option<PhaseScreen<f64>>> {
    let omega = config.omegas[omega_index];
    if omega == 0.0 {
        return Ok(None);
    }
    let r0 = omega_to_fried(omega, 0, config.w0)?;
    let spec = TurbulenceSpec::new(r0, config.grid.grid()?, screen_seed(config.seed, omega_index, k))
        .with_subharmonics(config.n_subharmonics);
    generate_screen(&spec).map(Some)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; absent for fewer than two values.
    pub std: Option<f64>,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = (n > 1).then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
        Some(Self { n, mean, std })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealisationResult {
    pub k: usize,
    pub screen_seed: Option<u64>,
    pub count_seed: Option<u64>,
    pub screen_hash: Option<String>,
    pub record: TomographyRecord<f64>,
    pub reconstruction: Reconstruction<f64>,
    pub witness: WitnessReport<f64>,
    pub topology: Option<TopologyReport<f64>>,
    pub topology_error: Option<String>,
    pub quantum_contrast: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskFailure {
    pub k: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub skyrmion_number: Option<Stat>,
    pub purity: Option<Stat>,
    pub concurrence: Option<Stat>,
    pub fidelity: Option<Stat>,
    pub discord: Option<Stat>,
    pub quantum_contrast: Option<Stat>,
}

impl CellStats {
    pub(crate) fn of(rs: &[RealisationResult]) -> Self {
        let collect =
            |f: &dyn Fn(&RealisationResult) -> Option<f64>| Stat::of(&rs.iter().filter_map(f).collect::<Vec<_>>());
        Self {
            skyrmion_number: collect(&|r| r.topology.as_ref().map(|t| t.skyrmion_number)),
            purity: collect(&|r| Some(r.witness.purity)),
            concurrence: collect(&|r| Some(r.witness.concurrence)),
            fidelity: collect(&|r| r.witness.fidelity_to_reference),
            discord: collect(&|r| Some(r.witness.discord)),
            quantum_contrast: collect(&|r| r.quantum_contrast),
        }
    }
}

/// Lower and upper values of a quantity over the element-wise envelopes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluctuationReport {
    /// Envelopes are projected onto valid states before evaluation.
    pub projected: bool,
    pub purity: Bounds,
    pub concurrence: Bounds,
    pub discord: Bounds,
    pub fidelity: Option<Bounds>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub rho: DensityMatrix4<f64>,
    pub witness: WitnessReport<f64>,
    pub topology: Option<TopologyReport<f64>>,
    pub topology_error: Option<String>,
    pub bounds: Option<FluctuationReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub state_id: String,
    pub omega: f64,
    pub omega_index: usize,
    pub target: i32,
    pub realisations: Vec<RealisationResult>,
    pub failures: Vec<TaskFailure>,
    pub stats: CellStats,
    pub ensemble: Option<EnsembleResult>,
    /// Sampled raw Bloch texture (ensemble state, or the first realisation).
    #[serde(skip)]
    pub coverage: Vec<CoverageSample<f64>>,
}

impl CellResult {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub omega: f64,
    pub omega_index: usize,
    pub ell_min: i32,
    pub ell_max: i32,
    /// Power left in `ℓ = 0`.
    pub p0: Stat,
    /// Radial-order-zero overlap `|⟨LG₀⁰|field⟩|²`.
    pub p0_lg0: Stat,
    pub analytic: f64,
    /// Power captured by the ±window spectrum.
    pub captured: Stat,
    pub captured_min: f64,
    pub ell_variance: Stat,
    pub spectrum_mean: Vec<f64>,
    pub spectrum_std: Vec<f64>,
    pub screen_hashes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: RunConfig,
    pub config_hash: String,
    pub cells: Vec<CellResult>,
    pub calibration: Vec<CalibrationPoint>,
}

impl SweepResult {
    pub fn cell(&self, state_id: &str, omega_index: usize) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.state_id == state_id && c.omega_index == omega_index)
    }

    pub fn is_complete(&self) -> bool {
        self.cells.iter().all(CellResult::is_complete)
    }
}

/// Runs the protocol selected by `config.mode`.
pub fn run(config: &RunConfig) -> Result<SweepResult> {
    match config.mode {
        RunMode::Static => run_static(config),
        RunMode::Ensemble => run_ensemble(config),
        RunMode::Calibration => run_calibration(config),
    }
}

pub fn run_static(config: &RunConfig) -> Result<SweepResult> {
    expect_mode(config, RunMode::Static)?;
    sweep(config, false)
}

pub fn run_ensemble(config: &RunConfig) -> Result<SweepResult> {
    expect_mode(config, RunMode::Ensemble)?;
    sweep(config, true)
}

fn expect_mode(config: &RunConfig, mode: RunMode) -> Result<()> {
    config.validate()?;
    if config.mode != mode {
        return Err(Error::Config(format!("expected mode {mode:?}, config has {:?}", config.mode)));
    }
    Ok(())
}

struct Prepared {
    /// Position in the full catalog; keys the count and fit seeds.
    catalog_index: usize,
    state: BipartitePureState<f64>,
    target: i32,
    modes: ModePair<f64>,
    reference: DensityMatrix4<f64>,
    reference_discord: f64,
}

fn prepare(config: &RunConfig, ids: &[String]) -> Result<Vec<Prepared>> {
    let grid = config.grid.grid()?;
    let all = catalog::<f64>();
    ids.iter()
        .map(|id| {
            let catalog_index = all
                .iter()
                .position(|e| e.id == id.as_str())
                .ok_or_else(|| Error::InvalidArgument(format!("unknown catalog state '{id}'")))?;
            let entry = &all[catalog_index];
            let state = entry.state.clone().with_waist(config.w0);
            let modes = ModePair::new(state.basis_map.b, config.w0, &grid)?;
            let reference = state.density();
            let reference_discord = discord(&reference).value;
            Ok(Prepared { catalog_index, target: entry.skyrmion_number, state, modes, reference, reference_discord })
        })
        .collect()
}

/// Recomputes realisation `k` of one state at ladder index `omega_index`
/// exactly as a sweep over `config` would.
pub fn single_realisation(
    config: &RunConfig,
    state_id: &str,
    omega_index: usize,
    k: usize,
) -> Result<RealisationResult> {
    config.validate()?;
    if omega_index >= config.omegas.len() {
        return Err(Error::InvalidArgument(format!("ladder has no index {omega_index}")));
    }
    let p = prepare(config, &[state_id.to_string()])?.remove(0);
    let screen = realisation_screen(config, omega_index, k)?;
    let hash = screen.as_ref().map(PhaseScreen::hash);
    realise(config, &p, omega_index, k, screen.as_ref(), hash.as_ref())
}

fn topology_options(config: &RunConfig, coverage: bool) -> TopologyOptions<f64> {
    TopologyOptions {
        epsilon: config.epsilon,
        coverage_per_side: if coverage { config.coverage_per_side } else { 0 },
        ..TopologyOptions::default()
    }
}

fn realise(
    config: &RunConfig,
    p: &Prepared,
    omega_index: usize,
    k: usize,
    screen: Option<&PhaseScreen<f64>>,
    screen_hash: Option<&String>,
) -> Result<RealisationResult> {
    let transfer = match screen {
        Some(s) => ModeTransfer::from_modes(&p.modes, s)?,
        None => ModeTransfer::identity(p.state.basis_map.b),
    };
    let key = [p.catalog_index as u64, omega_index as u64, k as u64];
    let count_seed = config.counts.map(|_| derive_seed(config.seed, "counts", &key));
    let counts = config.counts.as_ref().zip(count_seed);
    let mut record = simulate_with_transfer(&p.state, &transfer, counts)?;
    record.provenance.omega = config.omegas[omega_index];
    record.provenance.seed = screen.and_then(|s| s.spec.map(|sp| sp.seed));
    record.provenance.screen_hash = screen_hash.cloned();

    let options = ReconstructionOptions {
        model: config.fit_model,
        seed: derive_seed(config.seed, "fit", &key),
        ..ReconstructionOptions::default()
    };
    let mut reconstruction = reconstruct_density_with(&record, &options)?;
    reconstruction.rho = reconstruction.rho.with_basis(Some(p.state.basis_map));
    let rho = &reconstruction.rho;
    let witness = witness_report(rho, Some(&p.reference), Some(p.reference_discord));
    let mode_map = mode_map_of(&p.state.basis_map, config.w0);
    let (topology, topology_error) =
        match topology_report(rho, &mode_map, &config.topology_grid.grid()?, &topology_options(config, false)) {
            Ok(t) => (Some(t), None),
            Err(e) => (None, Some(e.to_string())),
        };
    let quantum_contrast = config.counts.as_ref().and_then(|m| record.mean_quantum_contrast(m));
    Ok(RealisationResult {
        k,
        screen_seed: record.provenance.seed,
        count_seed,
        screen_hash: screen_hash.cloned(),
        record,
        reconstruction,
        witness,
        topology,
        topology_error,
        quantum_contrast,
    })
}

fn sweep(config: &RunConfig, ensemble: bool) -> Result<SweepResult> {
    let prepared = prepare(config, &config.states)?;
    let n = config.realisations;
    let tasks: Vec<(usize, usize)> = (0..config.omegas.len()).flat_map(|i| (0..n).map(move |k| (i, k))).collect();

    // One task per screen; each screen serves every selected state.
    let outputs: Vec<Vec<std::result::Result<RealisationResult, String>>> = tasks
        .par_iter()
        .map(|&(i, k)| {
            let screen = match realisation_screen(config, i, k) {
                Ok(s) => s,
                Err(e) => return vec![Err(format!("screen generation: {e}")); prepared.len()],
            };
            let hash = screen.as_ref().map(PhaseScreen::hash);
            prepared
                .iter()
                .map(|p| realise(config, p, i, k, screen.as_ref(), hash.as_ref()).map_err(|e| e.to_string()))
                .collect()
        })
        .collect();

    let mut cells = Vec::with_capacity(prepared.len() * config.omegas.len());
    for (si, p) in prepared.iter().enumerate() {
        for (i, &omega) in config.omegas.iter().enumerate() {
            let mut realisations = Vec::with_capacity(n);
            let mut failures = Vec::new();
            for k in 0..n {
                match &outputs[i * n + k][si] {
                    Ok(r) => realisations.push(r.clone()),
                    Err(message) => failures.push(TaskFailure { k, message: message.clone() }),
                }
            }
            let stats = CellStats::of(&realisations);
            cells.push(CellResult {
                state_id: p.state.id.clone(),
                omega,
                omega_index: i,
                target: p.target,
                realisations,
                failures,
                stats,
                ensemble: None,
                coverage: Vec::new(),
            });
        }
    }

    // Cell-level work: ensembles, bounds and coverage textures.
    let topo_grid = config.topology_grid.grid()?;
    let finals: Vec<(Option<EnsembleResult>, Vec<CoverageSample<f64>>, Option<String>)> = cells
        .par_iter()
        .map(|cell| {
            let p = prepared.iter().find(|p| p.state.id == cell.state_id).expect("cell state is prepared");
            let mode_map = mode_map_of(&p.state.basis_map, config.w0);
            let rhos: Vec<DensityMatrix4<f64>> = cell.realisations.iter().map(|r| r.reconstruction.rho).collect();
            let target = if ensemble {
                match ensemble_result(&rhos, p, config, &topo_grid) {
                    Ok(e) => Some(e),
                    Err(e) => return (None, Vec::new(), Some(e.to_string())),
                }
            } else {
                None
            };
            let coverage_rho = target.as_ref().map(|e| e.rho).or_else(|| rhos.first().copied());
            let coverage = match (config.coverage_per_side, coverage_rho) {
                (0, _) | (_, None) => Vec::new(),
                (_, Some(rho)) => topology_report(&rho, &mode_map, &topo_grid, &topology_options(config, true))
                    .map(|t| t.coverage)
                    .unwrap_or_default(),
            };
            (target, coverage, None)
        })
        .collect();
    for (cell, (ens, coverage, err)) in cells.iter_mut().zip(finals) {
        cell.ensemble = ens;
        cell.coverage = coverage;
        if let Some(message) = err {
            cell.failures.push(TaskFailure { k: n, message: format!("ensemble: {message}") });
        }
    }

    Ok(SweepResult { config: config.clone(), config_hash: config.hash(), cells, calibration: Vec::new() })
}

fn ensemble_result(
    rhos: &[DensityMatrix4<f64>],
    p: &Prepared,
    config: &RunConfig,
    grid: &Grid2D<f64>,
) -> Result<EnsembleResult> {
    let rho = crate::state::ensemble_average(rhos)?;
    let witness = witness_report(&rho, Some(&p.reference), Some(p.reference_discord));
    let mode_map = mode_map_of(&p.state.basis_map, config.w0);
    let (topology, topology_error) = match topology_report(&rho, &mode_map, grid, &topology_options(config, false)) {
        Ok(t) => (Some(t), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let bounds = if rhos.len() >= 2 {
        let reference = p.reference;
        Some(FluctuationReport {
            projected: true,
            purity: fluctuation_bounds(rhos, |r| Ok(purity(r)))?,
            concurrence: fluctuation_bounds(rhos, |r| Ok(concurrence(r)))?,
            discord: fluctuation_bounds(rhos, |r| Ok(discord(r).value))?,
            fidelity: Some(fluctuation_bounds(rhos, |r| Ok(fidelity(r, &reference)))?),
        })
    } else {
        None
    };
    Ok(EnsembleResult { rho, witness, topology, topology_error, bounds })
}

/// Element-wise lower and upper envelopes of the real and imaginary parts,
/// each projected to the nearest valid density matrix.
pub fn envelopes(rhos: &[DensityMatrix4<f64>]) -> Result<(DensityMatrix4<f64>, DensityMatrix4<f64>)> {
    if rhos.len() < 2 {
        return Err(Error::InvalidArgument(format!("fluctuation bounds need at least two states, got {}", rhos.len())));
    }
    let basis = rhos[0].basis();
    let pick = |f: fn(f64, f64) -> f64| {
        Mat4::from_fn(|i, j| {
            let re = rhos.iter().map(|r| r.matrix()[(i, j)].re).reduce(f).expect("nonempty");
            let im = rhos.iter().map(|r| r.matrix()[(i, j)].im).reduce(f).expect("nonempty");
            num_complex::Complex::new(re, im)
        })
        .hermitian_part()
    };
    let lo = DensityMatrix4::project(&pick(f64::min))?.with_basis(basis);
    let hi = DensityMatrix4::project(&pick(f64::max))?.with_basis(basis);
    Ok((lo, hi))
}

/// `quantity` evaluated on both projected envelopes, ordered `lo ≤ hi`.
pub fn fluctuation_bounds<F>(rhos: &[DensityMatrix4<f64>], quantity: F) -> Result<Bounds>
where
    F: Fn(&DensityMatrix4<f64>) -> Result<f64>,
{
    let (lo, hi) = envelopes(rhos)?;
    let (a, b) = (quantity(&lo)?, quantity(&hi)?);
    Ok(Bounds { lo: a.min(b), hi: a.max(b) })
}

pub fn run_calibration(config: &RunConfig) -> Result<SweepResult> {
    expect_mode(config, RunMode::Calibration)?;
    let grid = config.grid.grid()?;
    let w = config.calibration_window;
    let analyzer = OamAnalyzer::new(grid, config.w0, -w, w)?;
    let input = lg_field(&LgMode::new(0, config.w0)?, &grid)?;
    let n = config.realisations;
    let mut calibration = Vec::with_capacity(config.omegas.len());
    for (i, &omega) in config.omegas.iter().enumerate() {
        let spectra: Vec<(crate::optics::OamSpectrum<f64>, Option<String>)> = (0..n)
            .into_par_iter()
            .map(|k| {
                let screen = realisation_screen(config, i, k)?;
                let out = match &screen {
                    Some(s) => apply_screen(&input, s)?,
                    None => input.clone(),
                };
                Ok((analyzer.analyze(&out)?, screen.map(|s| s.hash())))
            })
            .collect::<Result<_>>()?;
        let width = (2 * w + 1) as usize;
        let column = |l: usize| spectra.iter().map(|(s, _)| s.power[l]).collect::<Vec<_>>();
        let per_ell: Vec<Stat> = (0..width).map(|l| Stat::of(&column(l)).expect("n >= 1")).collect();
        let totals: Vec<f64> = spectra.iter().map(|(s, _)| s.total()).collect();
        let centre = w as usize;
        calibration.push(CalibrationPoint {
            omega,
            omega_index: i,
            ell_min: -w,
            ell_max: w,
            p0: per_ell[centre],
            p0_lg0: Stat::of(&spectra.iter().map(|(s, _)| s.lg0_power[centre]).collect::<Vec<_>>()).expect("n >= 1"),
            analytic: survival_probability_analytic(omega)?,
            captured: Stat::of(&totals).expect("n >= 1"),
            captured_min: totals.iter().copied().fold(f64::INFINITY, f64::min),
            ell_variance: Stat::of(&spectra.iter().map(|(s, _)| s.ell_variance()).collect::<Vec<_>>()).expect("n >= 1"),
            spectrum_mean: per_ell.iter().map(|s| s.mean).collect(),
            spectrum_std: per_ell.iter().map(|s| s.std.unwrap_or(0.0)).collect(),
            screen_hashes: spectra.into_iter().filter_map(|(_, h)| h).collect(),
        });
    }
    Ok(SweepResult { config: config.clone(), config_hash: config.hash(), cells: Vec::new(), calibration })
}
