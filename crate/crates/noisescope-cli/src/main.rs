//! Command-line interface for the noisescope library.
//!
//! Subcommands map one-to-one onto the library's entry points: `fisher`
//! tabulates information curves, `simulate` runs precision ensembles,
//! `fit` runs the least-squares baseline, `reproduce` emits the standard
//! dataset families, and `demo-omega` illustrates the periodic frequency
//! posterior. Every flag has a config-file equivalent (flat `key=value`
//! lines, `--config FILE`); a flag given on the command line overrides
//! the file.
//!
//! Exit status: 0 success, 2 usage error (bad flags or unparseable
//! config), 3 validation error (values outside a module's domain),
//! 4 fit failure.

mod config;

use clap::{Parser, Subcommand, ValueEnum};
use noisescope::bayes_estimation::{PosteriorGrid, PriorKind};
use noisescope::fisher_info::ModelParam;
use noisescope::noise_model::OuNoiseParams;
use noisescope::sensing_schemes::{CandidateGrid, PriorSpec, Scheme, SchemeConfig};
use noisescope::sim_harness::{
    reproduce, simulate_precision_curve, sweep_fisher, FigureId, FisherCurve, ReproduceConfig,
};
use noisescope::spin_dynamics::{trial_rng, Protocol};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use config::ConfigFile;

const DEFAULT_OMEGA: f64 = 400.0 * std::f64::consts::PI / 3.0;

#[derive(Parser)]
#[command(name = "noisescope", version, about = "Spin-based noise sensing simulations")]
struct Cli {
    /// Flat key=value config file; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory for CSV datasets and run manifests.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate a Fisher-information curve over evolution time.
    Fisher {
        #[arg(long, value_enum)]
        protocol: Option<ProtocolArg>,
        /// Which parameter the information is about.
        #[arg(long, value_enum)]
        about: Option<AboutArg>,
        #[arg(long, allow_negative_numbers = true)]
        t_phi: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        omega: Option<f64>,
        /// Noise amplitude (for --about b / tau-c curves).
        #[arg(long, allow_negative_numbers = true)]
        b: Option<f64>,
        /// Noise correlation time (for --about b / tau-c curves).
        #[arg(long, allow_negative_numbers = true)]
        tau_c: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        tau_max: Option<f64>,
        /// Number of tabulation points.
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Run an ensemble of sensing trials and report precision vs N.
    Simulate {
        #[arg(long, value_enum)]
        scheme: Option<SchemeArg>,
        #[arg(long, value_enum)]
        protocol: Option<ProtocolArg>,
        /// Fixed evolution time (repeated scheme).
        #[arg(long, allow_negative_numbers = true)]
        tau: Option<f64>,
        /// Longest evolution time (LSQ scheme).
        #[arg(long, allow_negative_numbers = true)]
        tau_max: Option<f64>,
        /// Posterior grid resolution.
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        n_max: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, allow_negative_numbers = true)]
        omega: Option<f64>,
        /// True dephasing time of the simulated system.
        #[arg(long, allow_negative_numbers = true)]
        t_phi: Option<f64>,
        /// LSQ grid count M.
        #[arg(long)]
        m: Option<usize>,
        /// LSQ samples per grid point.
        #[arg(long)]
        nu: Option<u32>,
        /// LSQ independent repetitions.
        #[arg(long)]
        q: Option<u32>,
    },
    /// Least-squares decay fit over a uniform evolution-time grid.
    Fit {
        #[arg(long, value_enum)]
        protocol: Option<ProtocolArg>,
        #[arg(long, allow_negative_numbers = true)]
        tau_max: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        t_phi: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        omega: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Grid count M.
        #[arg(long)]
        m: Option<usize>,
        /// Samples per grid point.
        #[arg(long)]
        nu: Option<u32>,
        /// Independent repetitions.
        #[arg(long)]
        q: Option<u32>,
    },
    /// Regenerate one of the standard dataset families.
    Reproduce {
        /// One of: qfi_curves, cfi_curves, echo_precision, free_precision,
        /// tau_trajectories.
        figure: String,
        #[arg(long, allow_negative_numbers = true)]
        t_phi: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        omega: Option<f64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        n_max: Option<usize>,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Frequency posterior after a few Ramsey outcomes: the likelihood is
    /// periodic in omega, so the maximum is not unique.
    DemoOmega {
        /// Outcome string, one '+' or '-' per measurement.
        #[arg(long)]
        outcomes: Option<String>,
        /// Evolution time of every measurement.
        #[arg(long, allow_negative_numbers = true)]
        tau: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        t_phi: Option<f64>,
        /// Upper edge of the omega grid (default 20 pi / tau).
        #[arg(long, allow_negative_numbers = true)]
        omega_max: Option<f64>,
        #[arg(long)]
        grid: Option<usize>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum ProtocolArg {
    Echo,
    Free,
}

impl FromStr for ProtocolArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        <Self as ValueEnum>::from_str(s, true)
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum SchemeArg {
    Repeated,
    AdaptiveCfi,
    AdaptiveLo,
    Lsq,
}

impl FromStr for SchemeArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        <Self as ValueEnum>::from_str(s, true)
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum AboutArg {
    /// Dephasing time (classical information of the sigma_x readout).
    TPhi,
    /// Noise amplitude (quantum information).
    B,
    /// Noise correlation time (quantum information).
    TauC,
}

impl FromStr for AboutArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        <Self as ValueEnum>::from_str(s, true)
    }
}

/// CLI failure with its exit status.
enum CliError {
    /// Unparseable config file (exit 2).
    Usage(String),
    /// Arguments outside a module's domain (exit 3).
    Validation(String),
    /// Least-squares fit failed beyond the retry budget (exit 4).
    Fit(String),
    /// Filesystem problem (exit 1).
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Fit(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Validation(m) | CliError::Fit(m) | CliError::Io(m) => m,
        }
    }
}

impl From<noisescope::Error> for CliError {
    fn from(e: noisescope::Error) -> Self {
        match e {
            noisescope::Error::FitFailure(_) => CliError::Fit(e.to_string()),
            noisescope::Error::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// JSON provenance record written next to every dataset.
#[derive(Serialize)]
struct RunManifest {
    command: String,
    parameters: BTreeMap<String, String>,
    files: Vec<String>,
}

impl RunManifest {
    fn new(command: &str) -> Self {
        Self { command: command.to_string(), parameters: BTreeMap::new(), files: Vec::new() }
    }

    fn param(&mut self, key: &str, value: impl Display) -> &mut Self {
        self.parameters.insert(key.to_string(), value.to_string());
        self
    }

    fn write(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join(format!("{}_manifest.json", self.command));
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Io(format!("manifest serialization: {e}")))?;
        std::fs::write(path, json + "\n")?;
        Ok(())
    }
}

/// Merges command-line flags with config-file values; the flag wins.
struct Resolved {
    file: ConfigFile,
}

impl Resolved {
    fn get<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|e| CliError::Usage(format!("config key '{key}': {e}"))),
        }
    }
}

fn positive(value: f64, what: &str) -> Result<f64, CliError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(CliError::Validation(format!("{what} must be > 0, got {value}")))
    }
}

fn build_protocol(arg: ProtocolArg, omega: f64) -> Result<Protocol, CliError> {
    Ok(match arg {
        ProtocolArg::Echo => Protocol::SpinEcho,
        ProtocolArg::Free => Protocol::free_evolution(omega)?,
    })
}

fn init_thread_pool() -> Result<(), CliError> {
    if let Ok(raw) = std::env::var("NOISESCOPE_THREADS") {
        let n: usize = raw
            .parse()
            .map_err(|_| CliError::Validation(format!("NOISESCOPE_THREADS must be a positive integer, got '{raw}'")))?;
        if n == 0 {
            return Err(CliError::Validation("NOISESCOPE_THREADS must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_thread_pool()?;
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path).map_err(CliError::Usage)?,
        None => ConfigFile::default(),
    };
    let r = Resolved { file };
    let out = r
        .get(cli.out, "out")?
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out)?;

    match cli.command {
        Command::Fisher { protocol, about, t_phi, omega, b, tau_c, tau_max, grid } => {
            let protocol = r.get(protocol, "protocol")?.unwrap_or(ProtocolArg::Echo);
            let about = r.get(about, "about")?.unwrap_or(AboutArg::TPhi);
            let t_phi = positive(r.get(t_phi, "t-phi")?.unwrap_or(1.0), "t-phi")?;
            let omega = positive(r.get(omega, "omega")?.unwrap_or(DEFAULT_OMEGA), "omega")?;
            let b = positive(r.get(b, "b")?.unwrap_or(1.0), "b")?;
            let tau_c = positive(r.get(tau_c, "tau-c")?.unwrap_or(0.1), "tau-c")?;
            let tau_max = positive(r.get(tau_max, "tau-max")?.unwrap_or(10.0), "tau-max")?;
            let grid = r.get(grid, "grid")?.unwrap_or(500);

            let curve = match about {
                AboutArg::TPhi => {
                    FisherCurve::TphiCfi { protocol: build_protocol(protocol, omega)?, t_phi }
                }
                AboutArg::B => FisherCurve::ModelQfi {
                    param: ModelParam::Amplitude,
                    noise: OuNoiseParams::new(b, tau_c)?,
                },
                AboutArg::TauC => FisherCurve::ModelQfi {
                    param: ModelParam::MemoryTime,
                    noise: OuNoiseParams::new(b, tau_c)?,
                },
            };
            let sweep = sweep_fisher(&curve, 0.0, tau_max, grid)?;

            let name = "fisher.csv";
            let mut w = std::io::BufWriter::new(std::fs::File::create(out.join(name))?);
            let meta = [
                ("about", format!("{about:?}")),
                ("protocol", format!("{protocol:?}")),
                ("t_phi", format!("{t_phi}")),
                ("tau_max", format!("{tau_max}")),
            ];
            sweep.write_csv(&mut w, &meta)?;
            w.flush()?;

            let mut manifest = RunManifest::new("fisher");
            manifest
                .param("about", format!("{about:?}"))
                .param("protocol", format!("{protocol:?}"))
                .param("t_phi", t_phi)
                .param("omega", omega)
                .param("b", b)
                .param("tau_c", tau_c)
                .param("tau_max", tau_max)
                .param("grid", grid);
            manifest.files.push(name.to_string());
            manifest.write(&out)?;

            println!(
                "fisher: peak {:.6} at tau = {:.6} ({} points -> {})",
                sweep.peak_value,
                sweep.peak_tau,
                grid,
                out.join(name).display()
            );
        }
        Command::Simulate {
            scheme,
            protocol,
            tau,
            tau_max,
            grid,
            trials,
            n_max,
            seed,
            omega,
            t_phi,
            m,
            nu,
            q,
        } => {
            let scheme_arg = r.get(scheme, "scheme")?.unwrap_or(SchemeArg::AdaptiveCfi);
            let protocol = r.get(protocol, "protocol")?.unwrap_or(ProtocolArg::Echo);
            let t_phi = positive(r.get(t_phi, "t-phi")?.unwrap_or(1.0), "t-phi")?;
            let omega = positive(r.get(omega, "omega")?.unwrap_or(DEFAULT_OMEGA), "omega")?;
            let tau_max = positive(r.get(tau_max, "tau-max")?.unwrap_or(10.0), "tau-max")?;
            let grid = r.get(grid, "grid")?.unwrap_or(2000);
            let trials = r.get(trials, "trials")?.unwrap_or(100);
            let n_max = r.get(n_max, "n-max")?.unwrap_or(1000);
            let seed = r.get(seed, "seed")?.unwrap_or(0);
            let m = r.get(m, "m")?.unwrap_or(100);
            let nu = r.get(nu, "nu")?.unwrap_or(100);
            let q = r.get(q, "q")?.unwrap_or(100);

            let scheme = match scheme_arg {
                SchemeArg::Repeated => {
                    let tau = positive(
                        r.get(tau, "tau")?.unwrap_or(0.8 * t_phi),
                        "tau",
                    )?;
                    Scheme::Repeated { tau }
                }
                SchemeArg::AdaptiveCfi => Scheme::AdaptiveCfi,
                SchemeArg::AdaptiveLo => {
                    Scheme::AdaptiveLocallyOptimal { candidates: CandidateGrid::default() }
                }
                SchemeArg::Lsq => Scheme::Lsq { tau_max, m, nu, q },
            };
            let cfg = SchemeConfig {
                scheme,
                protocol: build_protocol(protocol, omega)?,
                prior: PriorSpec { grid_size: grid, ..PriorSpec::default_tphi() },
                n_max,
            };
            let curve = simulate_precision_curve(&cfg, t_phi, trials, seed)?;

            let name = "precision.csv";
            let mut w = std::io::BufWriter::new(std::fs::File::create(out.join(name))?);
            let meta = [
                ("scheme", format!("{scheme_arg:?}")),
                ("protocol", format!("{protocol:?}")),
                ("t_phi", format!("{t_phi}")),
            ];
            curve.write_csv(&mut w, &meta)?;
            w.flush()?;

            let mut manifest = RunManifest::new("simulate");
            manifest
                .param("scheme", format!("{scheme_arg:?}"))
                .param("protocol", format!("{protocol:?}"))
                .param("t_phi", t_phi)
                .param("omega", omega)
                .param("grid", grid)
                .param("trials", trials)
                .param("n_max", n_max)
                .param("seed", seed);
            manifest.files.push(name.to_string());
            manifest.write(&out)?;

            let last = curve.n_values.len() - 1;
            println!(
                "simulate: N = {} -> rms error {:.6}, posterior spread {:.6} ({} trials -> {})",
                curve.n_values[last],
                curve.rms_error[last],
                curve.mean_posterior_uncertainty[last],
                trials,
                out.join(name).display()
            );
        }
        Command::Fit { protocol, tau_max, t_phi, omega, seed, m, nu, q } => {
            let protocol = r.get(protocol, "protocol")?.unwrap_or(ProtocolArg::Echo);
            let t_phi = positive(r.get(t_phi, "t-phi")?.unwrap_or(1.0), "t-phi")?;
            let omega = positive(r.get(omega, "omega")?.unwrap_or(DEFAULT_OMEGA), "omega")?;
            let tau_max = positive(r.get(tau_max, "tau-max")?.unwrap_or(10.0), "tau-max")?;
            let seed = r.get(seed, "seed")?.unwrap_or(0);
            let m = r.get(m, "m")?.unwrap_or(100);
            let nu = r.get(nu, "nu")?.unwrap_or(100);
            let q = r.get(q, "q")?.unwrap_or(100);

            let cfg = SchemeConfig {
                scheme: Scheme::Lsq { tau_max, m, nu, q },
                protocol: build_protocol(protocol, omega)?,
                prior: PriorSpec::default_tphi(),
                n_max: 0,
            };
            let mut rng = trial_rng(seed, 0);
            let outcome = noisescope::sensing_schemes::run_lsq(&cfg, t_phi, &mut rng)?;

            let name = "lsq_fits.csv";
            let mut w = std::io::BufWriter::new(std::fs::File::create(out.join(name))?);
            writeln!(w, "# protocol = {protocol:?}")?;
            writeln!(w, "# t_phi = {t_phi}, tau_max = {tau_max}, m = {m}, nu = {nu}, q = {q}")?;
            writeln!(w, "# seed = {seed}")?;
            writeln!(w, "# mean = {:.12e}", outcome.mean)?;
            writeln!(w, "# precision = {:.12e}", outcome.precision)?;
            writeln!(w, "# failures = {}", outcome.failures)?;
            writeln!(w, "# columns: repetition,estimate")?;
            for (k, est) in outcome.estimates.iter().enumerate() {
                writeln!(w, "{},{:.12e}", k, est)?;
            }
            w.flush()?;

            let mut manifest = RunManifest::new("fit");
            manifest
                .param("protocol", format!("{protocol:?}"))
                .param("t_phi", t_phi)
                .param("omega", omega)
                .param("tau_max", tau_max)
                .param("m", m)
                .param("nu", nu)
                .param("q", q)
                .param("seed", seed);
            manifest.files.push(name.to_string());
            manifest.write(&out)?;

            println!(
                "fit: T = {:.6} +/- {:.6} ({} fits, {} failures -> {})",
                outcome.mean,
                outcome.precision,
                outcome.estimates.len(),
                outcome.failures,
                out.join(name).display()
            );
        }
        Command::Reproduce { figure, t_phi, omega, trials, n_max, grid, seed } => {
            let figure: FigureId = figure
                .parse()
                .map_err(|e: noisescope::Error| CliError::Usage(e.to_string()))?;
            let defaults = ReproduceConfig::default();
            let cfg = ReproduceConfig {
                t_phi: positive(r.get(t_phi, "t-phi")?.unwrap_or(defaults.t_phi), "t-phi")?,
                omega: positive(r.get(omega, "omega")?.unwrap_or(defaults.omega), "omega")?,
                trials: r.get(trials, "trials")?.unwrap_or(defaults.trials),
                n_max: r.get(n_max, "n-max")?.unwrap_or(defaults.n_max),
                grid_size: r.get(grid, "grid")?.unwrap_or(defaults.grid_size),
            };
            let seed = r.get(seed, "seed")?.unwrap_or(0);
            let paths = reproduce(figure, &cfg, &out, seed)?;
            println!("reproduce {figure}: {} files in {}", paths.len(), out.display());
        }
        Command::DemoOmega { outcomes, tau, t_phi, omega_max, grid } => {
            let outcomes = r.get(outcomes, "outcomes")?.unwrap_or_else(|| "++".to_string());
            let tau = positive(r.get(tau, "tau")?.unwrap_or(1.0), "tau")?;
            let t_phi = positive(r.get(t_phi, "t-phi")?.unwrap_or(1.0), "t-phi")?;
            let omega_max = positive(
                r.get(omega_max, "omega-max")?
                    .unwrap_or(20.0 * std::f64::consts::PI / tau),
                "omega-max",
            )?;
            let grid = r.get(grid, "grid")?.unwrap_or(4000);

            let mut signs = Vec::with_capacity(outcomes.len());
            for c in outcomes.chars() {
                match c {
                    '+' => signs.push(1.0f64),
                    '-' => signs.push(-1.0),
                    other => {
                        return Err(CliError::Validation(format!(
                            "outcomes must be '+' or '-' characters, got '{other}'"
                        )))
                    }
                }
            }
            if signs.is_empty() {
                return Err(CliError::Validation("outcomes must not be empty".into()));
            }

            let mut posterior = PosteriorGrid::init_prior(0.0, omega_max, grid, PriorKind::Flat)?;
            let contrast = (-tau / t_phi).exp();
            for &sign in &signs {
                posterior
                    .bayes_update(move |omega| 0.5 * (1.0 + sign * (omega * tau).cos() * contrast))?;
            }

            // count near-degenerate maxima: the likelihood is periodic in
            // omega, so every 2 pi / tau shift of a peak is another peak
            let masses = posterior.masses();
            let peak = masses.iter().cloned().fold(f64::MIN, f64::max);
            let mut peaks = 0usize;
            for i in 1..masses.len() - 1 {
                if masses[i] >= masses[i - 1]
                    && masses[i] > masses[i + 1]
                    && masses[i] > 0.99 * peak
                {
                    peaks += 1;
                }
            }

            let name = "demo_omega.csv";
            let mut w = std::io::BufWriter::new(std::fs::File::create(out.join(name))?);
            writeln!(w, "# outcomes = {outcomes}")?;
            writeln!(w, "# tau = {tau}, t_phi = {t_phi}")?;
            writeln!(w, "# period = {:.12e}", 2.0 * std::f64::consts::PI / tau)?;
            writeln!(w, "# near_degenerate_peaks = {peaks}")?;
            posterior.write_csv(&mut w)?;
            w.flush()?;

            let mut manifest = RunManifest::new("demo-omega");
            manifest
                .param("outcomes", &outcomes)
                .param("tau", tau)
                .param("t_phi", t_phi)
                .param("omega_max", omega_max)
                .param("grid", grid);
            manifest.files.push(name.to_string());
            manifest.write(&out)?;

            println!(
                "demo-omega: {} near-degenerate posterior peaks spaced 2 pi/tau = {:.6}; \
                 the maximum-likelihood frequency is not unique ({})",
                peaks,
                2.0 * std::f64::consts::PI / tau,
                out.join(name).display()
            );
        }
    }
    Ok(())
}
