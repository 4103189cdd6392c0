//! Command-line front end: JSON run configuration, subcommand
//! orchestration, and deterministic artifact emission.
//!
//! Every run resolves one [`RunConfig`] (from `--config`, with CLI
//! overrides applied), echoes it to `resolved_config.json` in the
//! output directory so artifacts are self-describing, and writes
//! curves/tables as headered CSV and structured results as JSON. All
//! randomness flows from the single config seed through fixed
//! per-task streams, so rerunning a command reproduces its outputs
//! byte for byte.
//!
//! Exit codes: 0 success, 2 configuration/input error, 3 numerical
//! failure, 4 ill-conditioned measurement design.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conditioning::{
    condition_number, minimal_even_detectors, mix_seed, optimize_dz, optimize_free_positions,
    sweep_beta, sweep_detectors, SweepPoint,
};
use crate::coupler::{CouplerParams, Waveguide};
use crate::error::{Error, Result};
use crate::fluorescence::{
    device_coupler, load_trace, save_trace, simulate_trace, sweep_windows, write_trajectory_csv,
    IntensityTrace, DEFAULT_SAMPLE_SPACING_MM, DEVICE_LENGTH_MM,
};
use crate::measurement::{
    build_b, gamma_tensor, sample_counts, CorrelationVector, Detector, DetectorLayout,
};
use crate::reconstruction::{linear_reconstruct, ml_reconstruct, Likelihood, Method, MlOptions};
use crate::state::{fidelity, make_noon, make_product, DensityMatrix, PhotonNumber, SymPauliBasis};

/// Per-task seed streams split off the one config seed.
const STREAM_COUNTS: u64 = 1;
const STREAM_STATE: u64 = 2;
const STREAM_TRACE: u64 = 3;
const STREAM_OPTIMIZE: u64 = 4;

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

/// Fully-resolved run configuration. Loaded from JSON (unknown fields
/// rejected) with every omitted field taking the documented default,
/// then echoed verbatim to `resolved_config.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub coupler: CouplerConfig,
    /// Photon number N.
    #[serde(rename = "N")]
    pub photons: usize,
    pub layout: LayoutConfig,
    /// Input state for simulation and truth scoring.
    pub state: StateConfig,
    pub noise: NoiseConfig,
    pub seed: u64,
    /// Output directory for all artifacts.
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            coupler: CouplerConfig::default(),
            photons: 1,
            layout: LayoutConfig::Symmetric { detectors: 6, z1: 0.0 },
            state: StateConfig::default(),
            noise: NoiseConfig::default(),
            seed: 0,
            out: PathBuf::from("."),
        }
    }
}

/// Coupler constants in 1/mm. Defaults to C=1 at the optimal detuning
/// ratio β/C = 1/√2.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CouplerConfig {
    #[serde(rename = "C")]
    pub c: f64,
    pub beta: f64,
}

impl Default for CouplerConfig {
    fn default() -> Self {
        CouplerConfig { c: 1.0, beta: std::f64::consts::FRAC_1_SQRT_2 }
    }
}

impl TryFrom<CouplerConfig> for CouplerParams {
    type Error = Error;

    fn try_from(c: CouplerConfig) -> Result<Self> {
        CouplerParams::new(c.c, c.beta)
    }
}

/// Detector arrangement. `z1`/`dz`/`z` are in mm.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum LayoutConfig {
    /// Detector pairs every L/M starting at z1.
    Symmetric {
        detectors: usize,
        #[serde(default)]
        z1: f64,
    },
    /// Symmetric pairs with waveguide-2 detectors shifted by dz.
    Shifted {
        detectors: usize,
        #[serde(default)]
        dz: f64,
    },
    /// Arbitrary positions; `waveguide` is 1 or 2.
    Explicit { detectors: Vec<DetectorConfig> },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    pub waveguide: Waveguide,
    pub z: f64,
}

/// Input state specification. Amplitudes are normalized on ingestion;
/// `product` puts every photon in the same single-mode superposition
/// c1·|wg1⟩ + c2·|wg2⟩, and for N=1 is the general pure state.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum StateConfig {
    Product {
        c1: Amplitude,
        c2: Amplitude,
    },
    Noon,
    /// Seeded random mixed state in the symmetric sector.
    Random,
}

impl Default for StateConfig {
    fn default() -> Self {
        StateConfig::Product {
            c1: Amplitude { re: std::f64::consts::FRAC_1_SQRT_2, im: 0.0 },
            c2: Amplitude { re: std::f64::consts::FRAC_1_SQRT_2, im: 0.0 },
        }
    }
}

/// A complex amplitude as `{re, im}`; `im` defaults to 0.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Amplitude {
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

impl From<Amplitude> for C64 {
    fn from(a: Amplitude) -> Self {
        C64::new(a.re, a.im)
    }
}

/// Noise model: `events` switches simulated correlations to Poisson
/// counts with that many total events; `sigma` is the relative
/// Gaussian width applied to synthetic intensity traces.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub events: Option<u64>,
    pub sigma: f64,
}

impl RunConfig {
    fn photon_number(&self) -> Result<PhotonNumber> {
        PhotonNumber::new(self.photons)
    }

    fn coupler(&self) -> Result<CouplerParams> {
        self.coupler.try_into()
    }

    fn detector_count(&self) -> usize {
        match &self.layout {
            LayoutConfig::Symmetric { detectors, .. } | LayoutConfig::Shifted { detectors, .. } => {
                *detectors
            }
            LayoutConfig::Explicit { detectors } => detectors.len(),
        }
    }

    fn build_layout(&self) -> Result<DetectorLayout> {
        let coupler = self.coupler()?;
        match &self.layout {
            LayoutConfig::Symmetric { detectors, z1 } => {
                DetectorLayout::symmetric(coupler, *detectors, *z1)
            }
            LayoutConfig::Shifted { detectors, dz } => {
                DetectorLayout::shifted(coupler, *detectors, *dz)
            }
            LayoutConfig::Explicit { detectors } => DetectorLayout::new(
                coupler,
                detectors.iter().map(|d| Detector { waveguide: d.waveguide, z: d.z }).collect(),
            ),
        }
    }

    fn build_state(&self) -> Result<DensityMatrix> {
        let n = self.photon_number()?;
        match &self.state {
            StateConfig::Product { c1, c2 } => {
                let (a1, a2) = normalized_pair((*c1).into(), (*c2).into())?;
                make_product(a1, a2, n)
            }
            StateConfig::Noon => Ok(make_noon(n)),
            StateConfig::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed, STREAM_STATE));
                Ok(DensityMatrix::random(n, &mut rng))
            }
        }
    }

    /// Pure single-photon amplitudes, required by the trace pipeline.
    fn pure_amplitudes(&self) -> Result<(C64, C64)> {
        match &self.state {
            StateConfig::Product { c1, c2 } => normalized_pair((*c1).into(), (*c2).into()),
            StateConfig::Noon => {
                let a = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
                Ok((a, a))
            }
            StateConfig::Random => Err(Error::InvalidParameter(
                "trace synthesis needs a pure input state (product or noon)".into(),
            )),
        }
    }
}

fn normalized_pair(c1: C64, c2: C64) -> Result<(C64, C64)> {
    let norm = (c1.norm_sqr() + c2.norm_sqr()).sqrt();
    if !norm.is_finite() || norm <= 0.0 {
        return Err(Error::InvalidParameter(
            "state amplitudes must be finite and not both zero".into(),
        ));
    }
    Ok((c1 / norm, c2 / norm))
}

// ---------------------------------------------------------------------------
// Argument grammar
// ---------------------------------------------------------------------------

#[derive(Debug, Parser)]
#[command(
    name = "inline-tomo",
    version,
    about = "Simulate and reconstruct multi-photon two-mode states measured in-line in a detuned coupler"
)]
struct Cli {
    /// JSON run configuration (defaults apply when omitted)
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override the config seed
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the output directory
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads for sweeps and window fits (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write coincidence rates or sampled counts for the configured
    /// layout and input state
    Simulate,
    /// Fit a state to a correlation CSV taken with the configured
    /// layout
    Reconstruct(ReconstructArgs),
    /// Trace a conditioning curve as CSV
    Sweep {
        #[command(subcommand)]
        curve: SweepCurve,
    },
    /// Search for well-conditioned detector placements
    Optimize {
        #[command(subcommand)]
        target: OptimizeTarget,
    },
    /// Window-by-window single-photon readout from an intensity trace
    Fluorescence(FluorescenceArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Linear,
    Ml,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LikelihoodArg {
    Poisson,
    Gaussian,
}

impl From<LikelihoodArg> for Likelihood {
    fn from(l: LikelihoodArg) -> Self {
        match l {
            LikelihoodArg::Poisson => Likelihood::Poisson,
            LikelihoodArg::Gaussian => Likelihood::Gaussian,
        }
    }
}

#[derive(Debug, Args)]
struct ReconstructArgs {
    /// Correlation CSV (`gamma` or `count` column)
    counts: PathBuf,

    /// Estimator
    #[arg(long, value_enum, default_value_t = MethodArg::Ml)]
    method: MethodArg,

    /// Noise model for the ml estimator
    #[arg(long, value_enum, default_value_t = LikelihoodArg::Poisson)]
    likelihood: LikelihoodArg,

    /// True state JSON (as written by `simulate`); adds a fidelity
    /// score to the report
    #[arg(long, value_name = "PATH")]
    truth: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum SweepCurve {
    /// κ⁻¹ versus detuning ratio β/C at the configured detector count
    Beta {
        #[arg(long, default_value_t = 0.0)]
        min: f64,
        #[arg(long, default_value_t = 2.0)]
        max: f64,
        #[arg(long, default_value_t = 0.01)]
        step: f64,
        /// First-pair offset as a fraction of the revival length
        #[arg(long, default_value_t = 0.0)]
        z1_frac: f64,
    },
    /// κ⁻¹ versus detector count at the configured β/C
    Detectors {
        /// Smallest even count (default: fewest informationally
        /// overcomplete detectors for N)
        #[arg(long)]
        min: Option<usize>,
        #[arg(long, default_value_t = 16)]
        max: usize,
    },
    /// κ⁻¹ versus pairwise shift (as a fraction of the pair spacing)
    /// at the configured detector count and β/C
    Dz {
        #[arg(long, default_value_t = 128)]
        points: usize,
    },
}

#[derive(Debug, Subcommand)]
enum OptimizeTarget {
    /// Best pairwise shift at the minimal detector count M = N+3
    Dz,
    /// Seeded multi-restart search over free detector positions
    Free {
        /// Detector count (default: from the configured layout)
        #[arg(long)]
        detectors: Option<usize>,
        #[arg(long, default_value_t = 24)]
        restarts: usize,
    },
}

#[derive(Debug, Args)]
struct FluorescenceArgs {
    /// Measured trace CSV with columns z_mm,p1,p2 (omit with
    /// --synthetic)
    trace: Option<PathBuf>,

    /// Synthesize the trace from the configured coupler and state
    /// (reference-device constants when no config is given)
    #[arg(long)]
    synthetic: bool,

    /// Sample spacing for --synthetic, mm
    #[arg(long, default_value_t = DEFAULT_SAMPLE_SPACING_MM)]
    sample_mm: f64,

    /// Device length for --synthetic, mm
    #[arg(long, default_value_t = DEVICE_LENGTH_MM)]
    length_mm: f64,

    /// Window start increment, mm
    #[arg(long, default_value_t = 1.0)]
    window_mm: f64,

    /// Rescale each ingested sample to p1 + p2 = 1
    #[arg(long)]
    normalize: bool,
}

// ---------------------------------------------------------------------------
// Entry point and dispatch
// ---------------------------------------------------------------------------

/// Parse arguments from the environment, run the selected command,
/// and map errors onto the stable exit-code contract.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Numerical(_) => 3,
        Error::IllConditioned(_) => 4,
        _ => 2,
    }
}

fn execute(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => {
            let file = fs::File::open(path)?;
            serde_json::from_reader(file)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = cli.out {
        config.out = out;
    }
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Simulate => cmd_simulate(&config),
        Command::Reconstruct(args) => cmd_reconstruct(&config, &args),
        Command::Sweep { curve } => cmd_sweep(&config, &curve),
        Command::Optimize { target } => cmd_optimize(&config, &target),
        Command::Fluorescence(args) => cmd_fluorescence(config, &args, cli.config.is_some()),
    }
}

fn prepare_out(config: &RunConfig) -> Result<PathBuf> {
    fs::create_dir_all(&config.out)?;
    let echo = fs::File::create(config.out.join("resolved_config.json"))?;
    serde_json::to_writer_pretty(echo, config)?;
    Ok(config.out.clone())
}

fn create(out: &Path, name: &str) -> Result<fs::File> {
    Ok(fs::File::create(out.join(name))?)
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn cmd_simulate(config: &RunConfig) -> Result<()> {
    let layout = config.build_layout()?;
    let state = config.build_state()?;
    let gamma = gamma_tensor(&state, &layout)?;
    let data = match config.noise.events {
        Some(events) => sample_counts(&gamma, events, mix_seed(config.seed, STREAM_COUNTS))?,
        None => gamma,
    };
    let out = prepare_out(config)?;
    data.write_csv(create(&out, "gamma.csv")?)?;
    layout.write_json(create(&out, "layout.json")?)?;
    state.write_json(create(&out, "state.json")?)?;
    println!(
        "simulate: N={}, M={}, {} correlation channels -> {}",
        config.photons,
        layout.len(),
        data.len(),
        out.join("gamma.csv").display()
    );
    Ok(())
}

/// Flat JSON report for one reconstruction run.
#[derive(Serialize)]
struct ReconstructionJson {
    method: Method,
    #[serde(rename = "N")]
    photons: usize,
    mu_hat: f64,
    residual: f64,
    positive: bool,
    iterations: usize,
    converged: bool,
    parameters: Vec<f64>,
    rho: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    fidelity: Option<f64>,
}

fn cmd_reconstruct(config: &RunConfig, args: &ReconstructArgs) -> Result<()> {
    let n = config.photon_number()?;
    let layout = config.build_layout()?;
    let basis = SymPauliBasis::new(n);
    let b = build_b(&layout, n, &basis)?;
    let data = CorrelationVector::read_csv(n, fs::File::open(&args.counts)?)?;
    let result = match args.method {
        MethodArg::Linear => linear_reconstruct(&data, &b)?,
        MethodArg::Ml => {
            let options = MlOptions { likelihood: args.likelihood.into(), ..MlOptions::default() };
            ml_reconstruct(&data, &b, &options)?
        }
    };
    let truth = match &args.truth {
        Some(path) => Some(DensityMatrix::read_json(fs::File::open(path)?)?),
        None => None,
    };
    let fid = match &truth {
        Some(t) => Some(fidelity(&result.rho_hat, t)?),
        None => None,
    };

    let mut rho_buf = Vec::new();
    result.rho_hat.write_json(&mut rho_buf)?;
    let report = ReconstructionJson {
        method: result.method,
        photons: config.photons,
        mu_hat: result.mu_hat,
        residual: result.residual,
        positive: result.positive,
        iterations: result.iterations,
        converged: result.converged,
        parameters: result.r_hat.values().iter().copied().collect(),
        rho: serde_json::from_slice(&rho_buf)?,
        fidelity: fid,
    };
    let out = prepare_out(config)?;
    serde_json::to_writer_pretty(create(&out, "reconstruction.json")?, &report)?;
    match fid {
        Some(f) => println!("reconstruct: fidelity vs truth {f:.6}"),
        None => {
            println!("reconstruct: residual {:.6e}, scale {:.6e}", result.residual, result.mu_hat)
        }
    }
    Ok(())
}

fn write_sweep_csv<W: std::io::Write>(points: &[SweepPoint], x_name: &str, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([x_name, "kappa_inv", "sigma_min", "sigma_max"])?;
    for p in points {
        // Singular values are stored in descending order.
        let sigma_max = p.singular_values.first().copied().unwrap_or(0.0);
        let sigma_min = p.singular_values.last().copied().unwrap_or(0.0);
        w.write_record([
            format!("{:.17e}", p.x),
            format!("{:.17e}", p.kappa_inv),
            format!("{sigma_min:.17e}"),
            format!("{sigma_max:.17e}"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn report_peak(points: &[SweepPoint], x_name: &str, file: &Path) {
    if let Some(best) = points.iter().max_by(|a, b| a.kappa_inv.total_cmp(&b.kappa_inv)) {
        println!(
            "sweep: {} points -> {}; peak kappa_inv {:.6} at {x_name} = {:.4}",
            points.len(),
            file.display(),
            best.kappa_inv,
            best.x
        );
    }
}

fn cmd_sweep(config: &RunConfig, curve: &SweepCurve) -> Result<()> {
    let n = config.photon_number()?;
    let out = prepare_out(config)?;
    match curve {
        SweepCurve::Beta { min, max, step, z1_frac } => {
            if !(step.is_finite() && *step > 0.0) || max < min {
                return Err(Error::InvalidParameter(format!(
                    "bad ratio grid: min {min}, max {max}, step {step}"
                )));
            }
            let count = ((max - min) / step).round() as usize;
            let ratios: Vec<f64> = (0..=count).map(|k| min + k as f64 * step).collect();
            let points = sweep_beta(n, config.detector_count(), &ratios, *z1_frac)?;
            let file = out.join("sweep_beta.csv");
            write_sweep_csv(&points, "beta_over_c", fs::File::create(&file)?)?;
            report_peak(&points, "beta_over_c", &file);
        }
        SweepCurve::Detectors { min, max } => {
            let lo = match min {
                Some(m) => m + m % 2,
                None => minimal_even_detectors(n),
            };
            if *max < lo {
                return Err(Error::InvalidParameter(format!(
                    "detector range is empty: {lo}..={max}"
                )));
            }
            let counts: Vec<usize> = (lo..=*max).step_by(2).collect();
            let ratio = ratio_of(config)?;
            let points = sweep_detectors(n, &counts, ratio)?;
            let file = out.join("sweep_detectors.csv");
            write_sweep_csv(&points, "detectors", fs::File::create(&file)?)?;
            report_peak(&points, "detectors", &file);
        }
        SweepCurve::Dz { points: grid } => {
            if *grid < 2 {
                return Err(Error::InvalidParameter(format!(
                    "shift sweep needs at least 2 points, got {grid}"
                )));
            }
            let coupler = config.coupler()?;
            let m = config.detector_count();
            let m_even = m + m % 2;
            let spacing = coupler.revival_length() / m_even as f64;
            let basis = SymPauliBasis::new(n);
            let points: Vec<SweepPoint> = (0..*grid)
                .map(|k| {
                    let frac = k as f64 / *grid as f64;
                    let layout = DetectorLayout::shifted(coupler, m, frac * spacing)?;
                    let report = condition_number(&build_b(&layout, n, &basis)?)?;
                    Ok(SweepPoint {
                        x: frac,
                        kappa_inv: report.kappa_inv,
                        singular_values: report.singular_values,
                    })
                })
                .collect::<Result<_>>()?;
            let file = out.join("sweep_dz.csv");
            write_sweep_csv(&points, "dz_frac", fs::File::create(&file)?)?;
            report_peak(&points, "dz_frac", &file);
        }
    }
    Ok(())
}

fn ratio_of(config: &RunConfig) -> Result<f64> {
    let coupler = config.coupler()?;
    Ok(coupler.detuning() / coupler.coupling())
}

fn cmd_optimize(config: &RunConfig, target: &OptimizeTarget) -> Result<()> {
    let n = config.photon_number()?;
    let out = prepare_out(config)?;
    match target {
        OptimizeTarget::Dz => {
            let best = optimize_dz(n, ratio_of(config)?)?;
            serde_json::to_writer_pretty(create(&out, "dz_optimum.json")?, &best)?;
            println!(
                "optimize dz: M={}, best shift {:.4} of spacing -> kappa_inv {:.6}",
                best.m, best.frac_spacing, best.kappa_inv
            );
        }
        OptimizeTarget::Free { detectors, restarts } => {
            let m = detectors.unwrap_or_else(|| config.detector_count());
            let seed = mix_seed(config.seed, STREAM_OPTIMIZE);
            let best = optimize_free_positions(n, m, *restarts, seed)?;
            serde_json::to_writer_pretty(create(&out, "free_optimum.json")?, &best)?;
            println!(
                "optimize free: M={m}, {} restarts -> kappa_inv {:.6} (restart {})",
                best.restarts, best.kappa_inv, best.best_restart
            );
        }
    }
    Ok(())
}

fn cmd_fluorescence(
    mut config: RunConfig,
    args: &FluorescenceArgs,
    explicit_config: bool,
) -> Result<()> {
    if config.photons != 1 {
        return Err(Error::InvalidParameter(format!(
            "the trace pipeline reads single-photon states; config has N={}",
            config.photons
        )));
    }
    // Without an explicit config the reference-device constants apply,
    // and the echoed config is patched to record what actually ran.
    let coupler = if explicit_config { config.coupler()? } else { device_coupler() };
    config.coupler = CouplerConfig { c: coupler.coupling(), beta: coupler.detuning() };

    let (trace, reference) = match (&args.trace, args.synthetic) {
        (Some(_), true) | (None, false) => {
            return Err(Error::InvalidParameter(
                "give a trace CSV or --synthetic, but not both".into(),
            ))
        }
        (Some(path), false) => {
            let trace = load_trace(fs::File::open(path)?, args.normalize)?;
            if trace.clipped_samples() > 0 {
                eprintln!(
                    "warning: clipped {} negative power samples to zero",
                    trace.clipped_samples()
                );
            }
            (trace, None)
        }
        (None, true) => {
            if !(args.sample_mm > 0.0 && args.length_mm > args.sample_mm) {
                return Err(Error::InvalidParameter(format!(
                    "bad synthetic grid: {} mm samples over {} mm",
                    args.sample_mm, args.length_mm
                )));
            }
            let (c1, c2) = config.pure_amplitudes()?;
            let steps = (args.length_mm / args.sample_mm).floor() as usize;
            let grid: Vec<f64> = (0..=steps).map(|k| k as f64 * args.sample_mm).collect();
            let seed = mix_seed(config.seed, STREAM_TRACE);
            let trace = simulate_trace(coupler, c1, c2, &grid, config.noise.sigma, seed)?;
            (trace, Some((c1, c2)))
        }
    };

    let (lo, hi) = trace.span();
    let revival = coupler.revival_length();
    if hi - lo + 1e-9 < revival {
        return Err(Error::InvalidParameter(format!(
            "trace spans {:.2} mm but window sweeps need at least one revival length \
             ({revival:.2} mm)",
            hi - lo
        )));
    }
    if !(args.window_mm.is_finite() && args.window_mm > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "window increment must be positive, got {} mm",
            args.window_mm
        )));
    }

    // States repeat after one observable period, so window starts tile
    // exactly one period; the span gate above guarantees they all fit.
    let period = coupler.projector_period();
    let count = (period / args.window_mm).floor() as usize;
    let starts: Vec<f64> = (0..count.max(1)).map(|k| lo + k as f64 * args.window_mm).collect();

    let sweep = sweep_windows(&trace, &starts, coupler, reference)?;

    let out = prepare_out(&config)?;
    if args.synthetic {
        save_trace(&trace, create(&out, "trace.csv")?)?;
    }
    serde_json::to_writer_pretty(create(&out, "windows.json")?, &sweep.reports)?;
    write_trajectory_csv(&sweep, create(&out, "trajectory.csv")?)?;
    summarize_sweep(&trace, &sweep.reports, sweep.mean_fidelity);
    Ok(())
}

fn summarize_sweep(
    trace: &IntensityTrace,
    reports: &[crate::fluorescence::WindowReport],
    mean_fidelity: Option<f64>,
) {
    let mean_residual =
        reports.iter().map(|r| r.residual).sum::<f64>() / reports.len().max(1) as f64;
    match mean_fidelity {
        Some(f) => println!(
            "fluorescence: {} samples, {} windows, mean fidelity {f:.6}",
            trace.len(),
            reports.len()
        ),
        None => println!(
            "fluorescence: {} samples, {} windows, mean residual {mean_residual:.6e}",
            trace.len(),
            reports.len()
        ),
    }
}
