//! Argument parsing and dispatch for the `skysim` binary.
//!
//! Every command is a thin wrapper over `skysim` library calls; [`run`]
//! returns the process exit code (0 success, 1 usage, 2 runtime failure).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use skysim::experiments::{self, RunConfig, RunMode};
use skysim::state::DensityMatrix4;
use skysim::store::{self, Format, Table};
use skysim::topology::{coverage_csv, mode_map_of, topology_report, TopologyOptions};
use skysim::turbulence::{generate_screen, omega_to_fried, TurbulenceSpec};
use skysim::witness::witness_report;
use skysim::{Counts, Error};

#[derive(Debug, Parser)]
#[command(name = "skysim", version, about = "OAM entanglement and skyrmion topology through simulated turbulence")]
pub struct Cli {
    /// Base seed; overrides the config file and SKYSIM_SEED.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, created if absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// TOML run config used as the base for every command.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker thread cap.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: Option<u16>,
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Csv)]
    pub format: FormatArg,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Static,
    Ensemble,
    Calibration,
}

impl From<ModeArg> for RunMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Static => RunMode::Static,
            ModeArg::Ensemble => RunMode::Ensemble,
            ModeArg::Calibration => RunMode::Calibration,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate phase screens as SKYP files.
    Screens(ScreensArgs),
    /// Mean OAM spectrum of an ℓ = 0 photon against the analytic P(0) curve.
    Calibrate(CalibrateArgs),
    /// Run a static, ensemble or calibration sweep into a results tree.
    Run(RunArgs),
    /// Skyrmion number of one reconstructed state.
    Topology(TopologyArgs),
    /// Entanglement witnesses of one reconstructed or stored state.
    Witness(WitnessArgs),
    /// Render plot-ready tables from a results tree.
    Report(ReportArgs),
}

#[derive(Debug, Args, Default)]
pub struct GridArgs {
    /// Samples per side of the propagation grid.
    #[arg(long)]
    pub n: Option<usize>,
    /// Side length of the propagation grid (m).
    #[arg(long, value_parser = positive)]
    pub extent: Option<f64>,
    /// Beam waist (m).
    #[arg(long, value_parser = positive)]
    pub w0: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ScreensArgs {
    #[arg(long, allow_negative_numbers = true, value_parser = positive)]
    pub omega: f64,
    /// OAM index whose effective radius sets the Fried parameter.
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    pub ell: i32,
    #[arg(long = "n-screens", default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub n_screens: u32,
    #[arg(long)]
    pub subharmonics: Option<u32>,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, value_parser = nonnegative)]
    pub omegas: Vec<f64>,
    #[arg(long = "n-screens", value_parser = clap::value_parser!(u32).range(1..))]
    pub n_screens: Option<u32>,
    /// Spectrum window ±window.
    #[arg(long, value_parser = clap::value_parser!(i32).range(0..))]
    pub window: Option<i32>,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Comma-separated catalog ids.
    #[arg(long, value_delimiter = ',')]
    pub states: Vec<String>,
    /// Turbulence strengths, comma separated or repeated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, value_parser = nonnegative)]
    pub omega: Vec<f64>,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub realisations: Option<u32>,
    /// Poissonize records with the default count model.
    #[arg(long)]
    pub counts: bool,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args)]
pub struct TopologyArgs {
    #[arg(long)]
    pub state: String,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true, value_parser = nonnegative)]
    pub omega: f64,
    #[arg(long, default_value_t = 0)]
    pub realisation: usize,
    /// Samples per side of the Bloch-field grid.
    #[arg(long = "field-n")]
    pub field_n: Option<usize>,
    /// Side length of the Bloch-field grid (m).
    #[arg(long = "field-extent", value_parser = positive)]
    pub field_extent: Option<f64>,
    #[arg(long, value_parser = positive)]
    pub epsilon: Option<f64>,
    /// Coverage samples per side; 0 disables the texture export.
    #[arg(long)]
    pub coverage: Option<usize>,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["state", "rho"])))]
pub struct WitnessArgs {
    #[arg(long)]
    pub state: Option<String>,
    /// JSON density matrix (rows of [re, im] pairs).
    #[arg(long)]
    pub rho: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true, value_parser = nonnegative)]
    pub omega: f64,
    #[arg(long, default_value_t = 0)]
    pub realisation: usize,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Results directory `<root>/<config-hash>`.
    #[arg(long = "in")]
    pub input: PathBuf,
}

fn parse_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("'{s}' is not a number"))?;
    if !v.is_finite() {
        return Err(format!("'{s}' is not finite"));
    }
    Ok(v)
}

fn nonnegative(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v < 0.0 {
        return Err(format!("must be nonnegative, got {v}"));
    }
    Ok(v)
}

fn positive(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v <= 0.0 {
        return Err(format!("must be positive, got {v}"));
    }
    Ok(v)
}

/// Failure of a command, mapped onto the exit code.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidArgument(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.threads {
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t as usize).build() {
            Ok(pool) => pool.install(|| dispatch(&cli)),
            Err(e) => Err(Failure::Runtime(format!("cannot start worker pool: {e}"))),
        },
        None => dispatch(&cli),
    };
    match outcome {
        Ok(()) => 0,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}\n\n{}", Cli::command().render_usage());
            1
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            2
        }
    }
}

fn dispatch(cli: &Cli) -> CmdResult {
    match &cli.command {
        Command::Screens(a) => screens(cli, a),
        Command::Calibrate(a) => calibrate(cli, a),
        Command::Run(a) => run_sweep(cli, a),
        Command::Topology(a) => topology(cli, a),
        Command::Witness(a) => witness(cli, a),
        Command::Report(a) => report(cli, a),
    }
}

/// Config file (or defaults), then SKYSIM_SEED, then `--seed`.
fn base_config(cli: &Cli, grid: &GridArgs) -> Result<RunConfig, Failure> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    config.apply_env()?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(n) = grid.n {
        config.grid.n = n;
    }
    if let Some(e) = grid.extent {
        config.grid.extent = e;
    }
    if let Some(w0) = grid.w0 {
        config.w0 = w0;
    }
    Ok(config)
}

fn out_dir(cli: &Cli, default: &str) -> Result<PathBuf, Failure> {
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from(default));
    fs::create_dir_all(&dir).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn finish(dir: &Path, config_hash: Option<&str>) -> CmdResult {
    store::write_manifest(dir, config_hash)?;
    Ok(())
}

fn screens(cli: &Cli, a: &ScreensArgs) -> CmdResult {
    let config = base_config(cli, &a.grid)?;
    let grid = config.grid.grid()?;
    let r0 = omega_to_fried(a.omega, a.ell, config.w0)?;
    let dir = out_dir(cli, "screens")?;
    let mut table = Table {
        name: "screens".into(),
        header: ["k", "seed", "r0", "sha256"].map(String::from).to_vec(),
        rows: Vec::new(),
    };
    for k in 0..a.n_screens as usize {
        let seed = experiments::screen_seed(config.seed, 0, k);
        let spec =
            TurbulenceSpec::new(r0, grid, seed).with_subharmonics(a.subharmonics.unwrap_or(config.n_subharmonics));
        let screen = generate_screen(&spec)?;
        let mut bytes = Vec::new();
        screen.write_skyp(&mut bytes)?;
        fs::write(dir.join(format!("screen-{k:04}.skyp")), &bytes)?;
        table.rows.push(vec![k.to_string(), seed.to_string(), format!("{r0}"), screen.hash()]);
    }
    store::write_tables(&dir, &[table], cli.format.into())?;
    println!("{}", dir.display());
    finish(&dir, None)
}

/// Run config for the calibration command.
pub fn calibration_config(
    mut config: RunConfig,
    omegas: &[f64],
    n_screens: Option<u32>,
    window: Option<i32>,
) -> RunConfig {
    config.mode = RunMode::Calibration;
    if !omegas.is_empty() {
        config.omegas = omegas.to_vec();
    }
    if let Some(n) = n_screens {
        config.realisations = n as usize;
    }
    if let Some(w) = window {
        config.calibration_window = w;
    }
    config
}

fn calibrate(cli: &Cli, a: &CalibrateArgs) -> CmdResult {
    let config = calibration_config(base_config(cli, &a.grid)?, &a.omegas, a.n_screens, a.window);
    let result = experiments::run_calibration(&config)?;
    let dir = out_dir(cli, "calibration")?;
    let p0 = store::p0_table(&result.calibration);
    let format: Format = cli.format.into();
    store::write_tables(&dir, &[p0.clone(), store::spectra_table(&result.calibration)], format)?;
    print!("{}", format.render(&p0));
    finish(&dir, Some(&result.config_hash))
}

fn run_sweep(cli: &Cli, a: &RunArgs) -> CmdResult {
    let mut config = base_config(cli, &a.grid)?;
    if let Some(m) = a.mode {
        config.mode = m.into();
    }
    if !a.states.is_empty() {
        config.states = a.states.clone();
    }
    if !a.omega.is_empty() {
        config.omegas = a.omega.clone();
    }
    if let Some(n) = a.realisations {
        config.realisations = n as usize;
    }
    if a.counts {
        config.counts = Some(Counts::default());
    }
    config.validate()?;
    let result = experiments::run(&config)?;
    let root = out_dir(cli, "results")?;
    let dir = store::write_results(&root, &result)?;
    for cell in result.cells.iter().filter(|c| !c.is_complete()) {
        for f in &cell.failures {
            eprintln!("warning: {} at omega {} realisation {}: {}", cell.state_id, cell.omega, f.k, f.message);
        }
    }
    println!("{}", dir.display());
    Ok(())
}

/// Run config with a single state and strength covering realisation `k`.
pub fn single_state_config(mut config: RunConfig, state: &str, omega: f64, k: usize) -> RunConfig {
    config.mode = RunMode::Static;
    config.states = vec![state.to_string()];
    config.omegas = vec![omega];
    config.realisations = k + 1;
    config
}

fn topology(cli: &Cli, a: &TopologyArgs) -> CmdResult {
    let mut config = single_state_config(base_config(cli, &a.grid)?, &a.state, a.omega, a.realisation);
    if let Some(n) = a.field_n {
        config.topology_grid.n = n;
    }
    if let Some(e) = a.field_extent {
        config.topology_grid.extent = e;
    }
    if let Some(e) = a.epsilon {
        config.epsilon = e;
    }
    if let Some(c) = a.coverage {
        config.coverage_per_side = c;
    }
    let r = experiments::single_realisation(&config, &a.state, 0, a.realisation)?;
    let rho = r.reconstruction.rho;
    let basis = rho.basis().ok_or_else(|| Failure::Runtime("reconstruction carries no basis map".into()))?;
    let options = TopologyOptions {
        epsilon: config.epsilon,
        coverage_per_side: config.coverage_per_side,
        ..TopologyOptions::default()
    };
    let report = topology_report(&rho, &mode_map_of(&basis, config.w0), &config.topology_grid.grid()?, &options)?;
    let dir = out_dir(cli, "topology")?;
    match Format::from(cli.format) {
        Format::Json => store::write_json(&dir.join("topology.json"), &report.without_coverage())?,
        f => {
            let table = store::topology_table(&[(a.state.clone(), &report)]);
            store::write_tables(&dir, &[table], f)?;
        }
    }
    if !report.coverage.is_empty() {
        store::write_text(&dir.join("coverage.csv"), &coverage_csv(&report.coverage))?;
    }
    println!("{}", report.skyrmion_number);
    finish(&dir, Some(&config.hash()))
}

fn load_density(path: &Path) -> Result<DensityMatrix4<f64>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    let raw: DensityMatrix4<f64> = serde_json::from_str(&text)
        .map_err(|e| Failure::Usage(format!("{} is not a density matrix: {e}", path.display())))?;
    Ok(DensityMatrix4::new(*raw.matrix())?.with_basis(raw.basis()))
}

fn witness(cli: &Cli, a: &WitnessArgs) -> CmdResult {
    let (label, report, hash) = match (&a.state, &a.rho) {
        (Some(state), _) => {
            let config = single_state_config(base_config(cli, &a.grid)?, state, a.omega, a.realisation);
            let r = experiments::single_realisation(&config, state, 0, a.realisation)?;
            (state.clone(), r.witness, Some(config.hash()))
        }
        (None, Some(path)) => {
            let rho = load_density(path)?;
            (path.display().to_string(), witness_report(&rho, None, None), None)
        }
        (None, None) => return Err(Failure::Usage("one of --state or --rho is required".into())),
    };
    let dir = out_dir(cli, "witness")?;
    match Format::from(cli.format) {
        Format::Json => store::write_json(&dir.join("witness.json"), &report)?,
        f => {
            store::write_tables(&dir, &[store::witness_table(&[(label, &report)])], f)?;
        }
    }
    println!("{}", report.concurrence);
    finish(&dir, hash.as_deref())
}

fn report(cli: &Cli, a: &ReportArgs) -> CmdResult {
    let loaded = store::load_results(&a.input)?;
    let rendered = store::report(&loaded);
    let dir = match &cli.out {
        Some(_) => out_dir(cli, "")?,
        None => {
            let d = a.input.join("report");
            fs::create_dir_all(&d)?;
            d
        }
    };
    store::write_tables(&dir, &rendered.tables, cli.format.into())?;
    finish(&dir, Some(&loaded.result.config_hash))?;
    println!("{}", dir.display());
    if rendered.missing.is_empty() {
        return Ok(());
    }
    for m in &rendered.missing {
        eprintln!("missing: {m}");
    }
    Err(Failure::Runtime(format!(
        "{} records missing from {}; partial tables written with '{}' gaps",
        rendered.missing.len(),
        a.input.display(),
        store::GAP
    )))
}
