//! Monte Carlo orchestration: precision-vs-N curves over trial ensembles,
//! Fisher-information sweeps, CFI averages, and figure-reproduction
//! datasets.
//!
//! All randomness flows through per-trial substreams of one master seed
//! (see [`crate::spin_dynamics::trial_rng`]), so every dataset is
//! bit-reproducible and independent of trial execution order.

use crate::bayes_estimation::crb_precision;
use crate::error::{Error, Result};
use crate::fisher_info::{cfi_model, cfi_tphi, qfi_model, FisherValue, ModelParam};
use crate::noise_model::OuNoiseParams;
use crate::numeric::{gauss16, golden_max, simpson};
use crate::sensing_schemes::{
    is_log_checkpoint, run_adaptive, run_lsq, run_repeated, AdaptiveVariant, CandidateGrid,
    PriorSpec, RecordMode, Scheme, SchemeConfig, TrialRecord,
};
use crate::spin_dynamics::{trial_rng, MeasurementAxis, Protocol};
use rayon::prelude::*;
use serde::Serialize;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Estimation precision versus measurement count, aggregated over an
/// ensemble of independent trials at 1-2-5 log-spaced checkpoints.
#[derive(Debug, Clone)]
pub struct PrecisionCurve {
    /// Checkpoint measurement counts.
    pub n_values: Vec<usize>,
    /// Ensemble RMS error of the point estimate about the true value.
    pub rms_error: Vec<f64>,
    /// Trial-averaged posterior spread (for LSQ: sample spread of fits).
    pub mean_posterior_uncertainty: Vec<f64>,
    /// Median evolution time used at each checkpoint cycle.
    pub median_tau: Vec<f64>,
    /// Optimal-precision reference 2.5 T_phi / sqrt(N).
    pub opt_reference: Vec<f64>,
    /// Trial-averaged Cramér-Rao bound from each trial's actual tau
    /// sequence.
    pub crb_reference: Vec<f64>,
    pub n_trials: usize,
    pub master_seed: u64,
}

impl PrecisionCurve {
    /// Serialize with a `#` header block carrying the run provenance.
    pub fn write_csv<W: Write>(&self, w: &mut W, meta: &[(&str, String)]) -> Result<()> {
        for (key, value) in meta {
            writeln!(w, "# {key} = {value}")?;
        }
        writeln!(w, "# trials = {}", self.n_trials)?;
        writeln!(w, "# seed = {}", self.master_seed)?;
        writeln!(
            w,
            "# columns: n,rms_error,mean_posterior_uncertainty,median_tau,opt_reference,crb_reference"
        )?;
        for i in 0..self.n_values.len() {
            writeln!(
                w,
                "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
                self.n_values[i],
                self.rms_error[i],
                self.mean_posterior_uncertainty[i],
                self.median_tau[i],
                self.opt_reference[i],
                self.crb_reference[i],
            )?;
        }
        Ok(())
    }
}

/// Checkpoint counts {1, 2, 5} x 10^k up to and including n_max.
pub fn checkpoints(n_max: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (1..=n_max).filter(|&n| is_log_checkpoint(n)).collect();
    if v.last() != Some(&n_max) && n_max > 0 {
        v.push(n_max);
    }
    v
}

struct TrialSummary {
    points: Vec<f64>,
    spreads: Vec<f64>,
    taus: Vec<f64>,
    crbs: Vec<f64>,
}

fn summarize_trial(
    rec: &TrialRecord,
    marks: &[usize],
    protocol: &Protocol,
    true_t_phi: f64,
) -> Result<TrialSummary> {
    let mut s = TrialSummary {
        points: Vec::with_capacity(marks.len()),
        spreads: Vec::with_capacity(marks.len()),
        taus: Vec::with_capacity(marks.len()),
        crbs: Vec::with_capacity(marks.len()),
    };
    let mut cum_fisher = 0.0;
    let mut next = 0;
    for row in &rec.rows {
        cum_fisher += cfi_tphi(protocol, row.tau, true_t_phi)?.value();
        if next < marks.len() && row.cycle == marks[next] {
            let est = row
                .estimate
                .ok_or_else(|| Error::Config("missing estimate at checkpoint".into()))?;
            s.points.push(est.point);
            s.spreads.push(est.uncertainty);
            s.taus.push(row.tau);
            s.crbs.push(if cum_fisher > 0.0 { 1.0 / cum_fisher.sqrt() } else { f64::INFINITY });
            next += 1;
        }
    }
    Ok(s)
}

fn median(sorted_scratch: &mut Vec<f64>) -> f64 {
    sorted_scratch.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted_scratch.len();
    if n % 2 == 1 {
        sorted_scratch[n / 2]
    } else {
        0.5 * (sorted_scratch[n / 2 - 1] + sorted_scratch[n / 2])
    }
}

/// Run `n_trials` independent trials of the configured scheme and
/// aggregate precision at log-spaced checkpoints.
///
/// Trials run in parallel on independent RNG substreams; aggregation is
/// in trial-index order, so results are bitwise reproducible.
pub fn simulate_precision_curve(
    cfg: &SchemeConfig,
    true_t_phi: f64,
    n_trials: usize,
    seed: u64,
) -> Result<PrecisionCurve> {
    cfg.validate()?;
    if n_trials < 2 {
        return Err(Error::Config(format!(
            "ensemble statistics need at least 2 trials, got {n_trials}"
        )));
    }
    if let Scheme::Lsq { .. } = cfg.scheme {
        return lsq_precision_curve(cfg, true_t_phi, n_trials, seed);
    }
    let marks = checkpoints(cfg.n_max);
    let summaries: Vec<TrialSummary> = (0..n_trials)
        .into_par_iter()
        .map(|i| -> Result<TrialSummary> {
            let mut rng = trial_rng(seed, i as u64);
            let rec = match cfg.scheme {
                Scheme::Repeated { .. } => {
                    run_repeated(cfg, true_t_phi, &mut rng, RecordMode::Checkpoints)?
                }
                Scheme::AdaptiveCfi => run_adaptive(
                    cfg,
                    AdaptiveVariant::Cfi,
                    true_t_phi,
                    &mut rng,
                    RecordMode::Checkpoints,
                )?,
                Scheme::AdaptiveLocallyOptimal { .. } => run_adaptive(
                    cfg,
                    AdaptiveVariant::LocallyOptimal,
                    true_t_phi,
                    &mut rng,
                    RecordMode::Checkpoints,
                )?,
                Scheme::Lsq { .. } => unreachable!("handled above"),
            };
            summarize_trial(&rec, &marks, &cfg.protocol, true_t_phi)
        })
        .collect::<Result<_>>()?;

    let mut curve = PrecisionCurve {
        n_values: marks.clone(),
        rms_error: Vec::with_capacity(marks.len()),
        mean_posterior_uncertainty: Vec::with_capacity(marks.len()),
        median_tau: Vec::with_capacity(marks.len()),
        opt_reference: Vec::with_capacity(marks.len()),
        crb_reference: Vec::with_capacity(marks.len()),
        n_trials,
        master_seed: seed,
    };
    for (k, &n) in marks.iter().enumerate() {
        let mut sq_sum = 0.0;
        let mut spread_sum = 0.0;
        let mut crb_sum = 0.0;
        let mut taus: Vec<f64> = Vec::with_capacity(n_trials);
        for s in &summaries {
            let err = s.points[k] - true_t_phi;
            sq_sum += err * err;
            spread_sum += s.spreads[k];
            crb_sum += s.crbs[k];
            taus.push(s.taus[k]);
        }
        curve.rms_error.push((sq_sum / n_trials as f64).sqrt());
        curve.mean_posterior_uncertainty.push(spread_sum / n_trials as f64);
        curve.median_tau.push(median(&mut taus));
        curve.opt_reference.push(2.5 * true_t_phi / (n as f64).sqrt());
        curve.crb_reference.push(crb_sum / n_trials as f64);
    }
    Ok(curve)
}

/// LSQ has no per-cycle refinement: its "curve" is the single point at
/// N = nu x (grid count), with the fit ensemble providing the statistics.
fn lsq_precision_curve(
    cfg: &SchemeConfig,
    true_t_phi: f64,
    _n_trials: usize,
    seed: u64,
) -> Result<PrecisionCurve> {
    let (tau_max, nu) = match cfg.scheme {
        Scheme::Lsq { tau_max, nu, .. } => (tau_max, nu),
        _ => unreachable!(),
    };
    let mut rng = trial_rng(seed, 0);
    let out = run_lsq(cfg, true_t_phi, &mut rng)?;
    // grid count from the realized fit inputs: tau_max / dt points
    let grid_count = match cfg.protocol {
        Protocol::SpinEcho => match cfg.scheme {
            Scheme::Lsq { m, .. } => m,
            _ => unreachable!(),
        },
        Protocol::FreeEvolution { omega } => {
            let half_period = std::f64::consts::PI / omega;
            let dt = match cfg.scheme {
                Scheme::Lsq { m, .. } => {
                    (tau_max / (m as f64 * half_period)).round().max(1.0) * half_period
                }
                _ => unreachable!(),
            };
            (tau_max / dt).floor() as usize
        }
    };
    let n = nu as usize * grid_count;
    let rms = (out
        .estimates
        .iter()
        .map(|e| (e - true_t_phi) * (e - true_t_phi))
        .sum::<f64>()
        / out.estimates.len() as f64)
        .sqrt();
    let f_ave = average_cfi(&cfg.protocol, tau_max, true_t_phi)?;
    Ok(PrecisionCurve {
        n_values: vec![n],
        rms_error: vec![rms],
        mean_posterior_uncertainty: vec![out.precision],
        median_tau: vec![0.5 * tau_max],
        opt_reference: vec![2.5 * true_t_phi / (n as f64).sqrt()],
        crb_reference: vec![crb_precision(f_ave, n as u64)?],
        n_trials: out.estimates.len(),
        master_seed: seed,
    })
}

/// Which information curve [`sweep_fisher`] tabulates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FisherCurve {
    /// CFI about T_phi of the sigma_x measurement.
    TphiCfi { protocol: Protocol, t_phi: f64 },
    /// QFI about one model parameter, initial angle pi/2.
    ModelQfi { param: ModelParam, noise: OuNoiseParams },
    /// CFI of a fixed measurement axis about one model parameter.
    ModelCfi { param: ModelParam, noise: OuNoiseParams, omega: f64, axis: MeasurementAxis },
}

impl FisherCurve {
    fn eval(&self, tau: f64) -> Result<f64> {
        let half_pi = std::f64::consts::FRAC_PI_2;
        Ok(match self {
            FisherCurve::TphiCfi { protocol, t_phi } => cfi_tphi(protocol, tau, *t_phi)?.value(),
            FisherCurve::ModelQfi { param, noise } => {
                qfi_model(*param, half_pi, tau, noise)?.value()
            }
            FisherCurve::ModelCfi { param, noise, omega, axis } => {
                cfi_model(*param, half_pi, tau, axis, noise, *omega)?.value()
            }
        })
    }
}

/// Fisher information tabulated over a tau grid, with its peak annotated.
#[derive(Debug, Clone)]
pub struct FisherSweep {
    pub taus: Vec<f64>,
    pub values: Vec<f64>,
    pub peak_tau: f64,
    pub peak_value: f64,
}

impl FisherSweep {
    pub fn write_csv<W: Write>(&self, w: &mut W, meta: &[(&str, String)]) -> Result<()> {
        for (key, value) in meta {
            writeln!(w, "# {key} = {value}")?;
        }
        writeln!(w, "# peak_tau = {:.12e}", self.peak_tau)?;
        writeln!(w, "# peak_value = {:.12e}", self.peak_value)?;
        writeln!(w, "# columns: tau,fisher")?;
        for (&tau, &value) in self.taus.iter().zip(&self.values) {
            writeln!(w, "{:.12e},{:.12e}", tau, value)?;
        }
        Ok(())
    }
}

/// Tabulate a Fisher-information curve on a uniform tau grid and refine
/// its peak by golden-section search between the neighboring grid points.
pub fn sweep_fisher(
    curve: &FisherCurve,
    tau_min: f64,
    tau_max: f64,
    resolution: usize,
) -> Result<FisherSweep> {
    if resolution < 2 {
        return Err(Error::InvalidParameter(format!(
            "sweep needs at least 2 points, got {resolution}"
        )));
    }
    if !(tau_min >= 0.0 && tau_max > tau_min) {
        return Err(Error::InvalidParameter(format!(
            "invalid tau range [{tau_min}, {tau_max}]"
        )));
    }
    let step = (tau_max - tau_min) / (resolution - 1) as f64;
    let taus: Vec<f64> = (0..resolution).map(|k| tau_min + k as f64 * step).collect();
    let mut values = Vec::with_capacity(resolution);
    for &tau in &taus {
        values.push(curve.eval(tau)?);
    }
    let k_max = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(k, _)| k)
        .unwrap();
    let (peak_tau, peak_value) = if k_max > 0 && k_max < resolution - 1 {
        golden_max(|t| curve.eval(t).unwrap_or(0.0), taus[k_max - 1], taus[k_max + 1], 1e-10)
    } else {
        (taus[k_max], values[k_max])
    };
    Ok(FisherSweep { taus, values, peak_tau, peak_value })
}

/// CFI about T_phi averaged over evolution times [0, tau_max].
///
/// The free-evolution integrand oscillates at the Larmor frequency, so
/// the integral is split at the half-period lattice n pi/omega with a
/// fixed-order Gauss rule per segment; the echo integrand is smooth and a
/// composite Simpson rule suffices.
pub fn average_cfi(protocol: &Protocol, tau_max: f64, t_phi: f64) -> Result<FisherValue> {
    if !(tau_max > 0.0 && tau_max.is_finite()) {
        return Err(Error::InvalidParameter(format!("tau_max must be > 0, got {tau_max}")));
    }
    if !(t_phi > 0.0 && t_phi.is_finite()) {
        return Err(Error::InvalidParameter(format!("T_phi must be > 0, got {t_phi}")));
    }
    let f = |tau: f64| cfi_tphi(protocol, tau, t_phi).map(|v| v.value()).unwrap_or(0.0);
    let integral = match protocol {
        Protocol::SpinEcho => simpson(f, 0.0, tau_max, 2000),
        Protocol::FreeEvolution { omega } => {
            let half_period = std::f64::consts::PI / omega;
            let full_segments = (tau_max / half_period).floor() as usize;
            let mut sum = 0.0;
            for k in 0..full_segments {
                sum += gauss16(f, k as f64 * half_period, (k + 1) as f64 * half_period);
            }
            let tail_start = full_segments as f64 * half_period;
            if tau_max > tail_start {
                sum += gauss16(f, tail_start, tau_max);
            }
            sum
        }
    };
    FisherValue::new(integral / tau_max)
}

/// Dataset families that [`reproduce`] can emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureId {
    QfiCurves,
    CfiCurves,
    EchoPrecision,
    FreePrecision,
    TauTrajectories,
}

impl FigureId {
    pub const ALL: [FigureId; 5] = [
        FigureId::QfiCurves,
        FigureId::CfiCurves,
        FigureId::EchoPrecision,
        FigureId::FreePrecision,
        FigureId::TauTrajectories,
    ];
}

impl FromStr for FigureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qfi_curves" => Ok(FigureId::QfiCurves),
            "cfi_curves" => Ok(FigureId::CfiCurves),
            "echo_precision" => Ok(FigureId::EchoPrecision),
            "free_precision" => Ok(FigureId::FreePrecision),
            "tau_trajectories" => Ok(FigureId::TauTrajectories),
            other => Err(Error::UnknownFigure(other.to_string())),
        }
    }
}

impl fmt::Display for FigureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FigureId::QfiCurves => "qfi_curves",
            FigureId::CfiCurves => "cfi_curves",
            FigureId::EchoPrecision => "echo_precision",
            FigureId::FreePrecision => "free_precision",
            FigureId::TauTrajectories => "tau_trajectories",
        };
        f.write_str(s)
    }
}

/// Shared parameters of the reproduction datasets. Defaults follow the
/// standard scenario: T_phi = 1, omega = 400 pi / 3, Markovian noise
/// (b = 1, tau_c = 0.1) and non-Markovian noise (b = 1, tau_c = 2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReproduceConfig {
    pub t_phi: f64,
    pub omega: f64,
    pub trials: usize,
    pub n_max: usize,
    pub grid_size: usize,
}

impl Default for ReproduceConfig {
    fn default() -> Self {
        Self {
            t_phi: 1.0,
            omega: 400.0 * std::f64::consts::PI / 3.0,
            trials: 200,
            n_max: 1000,
            grid_size: 800,
        }
    }
}

#[derive(Serialize)]
struct RunManifest<'a> {
    figure: String,
    seed: u64,
    config: &'a ReproduceConfig,
    files: Vec<String>,
}

fn create_file(dir: &Path, name: &str) -> Result<std::io::BufWriter<std::fs::File>> {
    Ok(std::io::BufWriter::new(std::fs::File::create(dir.join(name))?))
}

/// Write the CSV datasets for one figure family into `out_dir` and a JSON
/// run-manifest next to them. Returns the paths written.
///
/// Identical (figure, config, seed) always produce byte-identical files.
pub fn reproduce(
    figure: FigureId,
    cfg: &ReproduceConfig,
    out_dir: &Path,
    seed: u64,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut files: Vec<String> = Vec::new();
    match figure {
        FigureId::QfiCurves => {
            let markovian = OuNoiseParams::new(1.0, 0.1)?;
            let non_markovian = OuNoiseParams::new(1.0, 2.0)?;
            let name = "qfi_curves.csv";
            let mut w = create_file(out_dir, name)?;
            writeln!(w, "# figure = {figure}")?;
            writeln!(w, "# markovian: b = 1, tau_c = 0.1; non_markovian: b = 1, tau_c = 2")?;
            writeln!(
                w,
                "# columns: tau,amplitude_markovian,memory_markovian,amplitude_nonmarkovian,memory_nonmarkovian"
            )?;
            // log grid wide enough to show all three growth stages
            let (lo, hi) = (1e-3f64.ln(), 50f64.ln());
            for k in 0..500 {
                let tau = (lo + k as f64 / 499.0 * (hi - lo)).exp();
                let half_pi = std::f64::consts::FRAC_PI_2;
                let row: Vec<f64> = [
                    (ModelParam::Amplitude, &markovian),
                    (ModelParam::MemoryTime, &markovian),
                    (ModelParam::Amplitude, &non_markovian),
                    (ModelParam::MemoryTime, &non_markovian),
                ]
                .iter()
                .map(|(p, n)| qfi_model(*p, half_pi, tau, n).map(|v| v.value()))
                .collect::<Result<_>>()?;
                writeln!(
                    w,
                    "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
                    tau, row[0], row[1], row[2], row[3]
                )?;
            }
            files.push(name.to_string());
        }
        FigureId::CfiCurves => {
            let echo = sweep_fisher(
                &FisherCurve::TphiCfi { protocol: Protocol::SpinEcho, t_phi: cfg.t_phi },
                0.0,
                5.0 * cfg.t_phi,
                2000,
            )?;
            let free_protocol = Protocol::free_evolution(cfg.omega)?;
            let free = sweep_fisher(
                &FisherCurve::TphiCfi { protocol: free_protocol, t_phi: cfg.t_phi },
                0.0,
                5.0 * cfg.t_phi,
                2000,
            )?;
            let name = "cfi_curves.csv";
            let mut w = create_file(out_dir, name)?;
            writeln!(w, "# figure = {figure}")?;
            writeln!(w, "# t_phi = {}, omega = {:.12e}", cfg.t_phi, cfg.omega)?;
            writeln!(w, "# echo_peak_tau = {:.12e}", echo.peak_tau)?;
            writeln!(w, "# echo_peak_value = {:.12e}", echo.peak_value)?;
            writeln!(w, "# columns: tau,cfi_echo,cfi_free")?;
            for i in 0..echo.taus.len() {
                writeln!(
                    w,
                    "{:.12e},{:.12e},{:.12e}",
                    echo.taus[i], echo.values[i], free.values[i]
                )?;
            }
            files.push(name.to_string());
        }
        FigureId::EchoPrecision | FigureId::FreePrecision => {
            let protocol = if figure == FigureId::EchoPrecision {
                Protocol::SpinEcho
            } else {
                Protocol::free_evolution(cfg.omega)?
            };
            let prior = PriorSpec {
                grid_size: cfg.grid_size,
                ..PriorSpec::default_tphi()
            };
            let fixed_tau = crate::fisher_info::optimal_tau(&protocol, cfg.t_phi)?;
            let schemes: [(&str, Scheme); 4] = [
                ("repeated", Scheme::Repeated { tau: fixed_tau }),
                ("adaptive_cfi", Scheme::AdaptiveCfi),
                (
                    "adaptive_lo",
                    Scheme::AdaptiveLocallyOptimal { candidates: CandidateGrid::default() },
                ),
                (
                    "lsq",
                    Scheme::Lsq { tau_max: 10.0 * cfg.t_phi, m: 100, nu: 100, q: 100 },
                ),
            ];
            for (label, scheme) in schemes {
                let run_cfg = SchemeConfig { scheme, protocol, prior, n_max: cfg.n_max };
                let curve = simulate_precision_curve(&run_cfg, cfg.t_phi, cfg.trials, seed)?;
                let name = format!("{figure}_{label}.csv");
                let mut w = create_file(out_dir, &name)?;
                curve.write_csv(
                    &mut w,
                    &[
                        ("figure", figure.to_string()),
                        ("scheme", label.to_string()),
                        ("t_phi", format!("{}", cfg.t_phi)),
                        ("omega", format!("{:.12e}", cfg.omega)),
                    ],
                )?;
                files.push(name);
            }
        }
        FigureId::TauTrajectories => {
            // per-cycle medians of the CFI-adaptive evolution time
            let name = "tau_trajectories.csv";
            let mut w = create_file(out_dir, name)?;
            writeln!(w, "# figure = {figure}")?;
            writeln!(w, "# trials = {}, n_max = {}", cfg.trials, cfg.n_max)?;
            writeln!(w, "# columns: cycle,median_tau_echo,median_tau_free")?;
            let mut columns: Vec<Vec<f64>> = Vec::new();
            for protocol in [Protocol::SpinEcho, Protocol::free_evolution(cfg.omega)?] {
                let run_cfg = SchemeConfig {
                    scheme: Scheme::AdaptiveCfi,
                    protocol,
                    prior: PriorSpec {
                        grid_size: cfg.grid_size,
                        ..PriorSpec::default_tphi()
                    },
                    n_max: cfg.n_max,
                };
                let all_taus: Vec<Vec<f64>> = (0..cfg.trials)
                    .into_par_iter()
                    .map(|i| -> Result<Vec<f64>> {
                        let mut rng = trial_rng(seed, i as u64);
                        let rec = run_adaptive(
                            &run_cfg,
                            AdaptiveVariant::Cfi,
                            cfg.t_phi,
                            &mut rng,
                            RecordMode::Checkpoints,
                        )?;
                        Ok(rec.rows.iter().map(|r| r.tau).collect())
                    })
                    .collect::<Result<_>>()?;
                let medians: Vec<f64> = (0..cfg.n_max)
                    .map(|c| {
                        let mut at_cycle: Vec<f64> =
                            all_taus.iter().map(|t| t[c]).collect();
                        median(&mut at_cycle)
                    })
                    .collect();
                columns.push(medians);
            }
            for c in 0..cfg.n_max {
                writeln!(w, "{},{:.12e},{:.12e}", c + 1, columns[0][c], columns[1][c])?;
            }
            files.push(name.to_string());
        }
    }
    let manifest_name = format!("{figure}_manifest.json");
    let manifest = RunManifest { figure: figure.to_string(), seed, config: cfg, files };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Config(format!("manifest serialization: {e}")))?;
    std::fs::write(out_dir.join(&manifest_name), json + "\n")?;
    let mut paths: Vec<PathBuf> = manifest.files.iter().map(|f| out_dir.join(f)).collect();
    paths.push(out_dir.join(manifest_name));
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    const OMEGA: f64 = 400.0 * PI / 3.0;

    #[test]
    fn checkpoint_list() {
        assert_eq!(checkpoints(1000), vec![1, 2, 5, 10, 20, 50, 100, 200, 500, 1000]);
        assert_eq!(checkpoints(7), vec![1, 2, 5, 7]);
        assert!(checkpoints(0).is_empty());
    }

    #[test]
    fn echo_sweep_peak() {
        let sweep = sweep_fisher(
            &FisherCurve::TphiCfi { protocol: Protocol::SpinEcho, t_phi: 1.0 },
            0.0,
            5.0,
            500,
        )
        .unwrap();
        assert!((0.78..=0.82).contains(&sweep.peak_tau), "peak at {}", sweep.peak_tau);
        assert!((sweep.peak_value - 0.1620).abs() < 1e-3, "peak {}", sweep.peak_value);
    }

    #[test]
    fn omega_qfi_sweep_peak() {
        let noise = OuNoiseParams::new(1.0, 0.1).unwrap();
        let sweep = sweep_fisher(
            &FisherCurve::ModelQfi { param: ModelParam::Omega, noise },
            0.1,
            30.0,
            600,
        )
        .unwrap();
        assert!((sweep.peak_tau - 10.0).abs() < 0.05, "peak at {}", sweep.peak_tau);
        // nominal ideal-Markovian value T^2/e^2 = 13.53, reached up to the
        // finite-memory offset of the OU exponent
        assert!((sweep.peak_value - 13.53).abs() < 0.35, "peak {}", sweep.peak_value);
    }

    #[test]
    fn free_sweep_equals_echo_on_lattice() {
        let free = Protocol::free_evolution(OMEGA).unwrap();
        for n in [50u32, 107, 400] {
            let tau = n as f64 * PI / OMEGA;
            let echo_val = FisherCurve::TphiCfi { protocol: Protocol::SpinEcho, t_phi: 1.0 }
                .eval(tau)
                .unwrap();
            let free_val =
                FisherCurve::TphiCfi { protocol: free, t_phi: 1.0 }.eval(tau).unwrap();
            assert_relative_eq!(free_val, echo_val, max_relative = 1e-10);
        }
    }

    #[test]
    fn average_cfi_values() {
        // frozen quadrature oracle: integral of x^2/(e^{2x}-1) on [0, 10]
        let echo = average_cfi(&Protocol::SpinEcho, 10.0, 1.0).unwrap().value();
        assert_relative_eq!(echo, 0.030051411191105, max_relative = 1e-8);
        assert!((0.0285..=0.0315).contains(&echo));

        let free_protocol = Protocol::free_evolution(OMEGA).unwrap();
        let free = average_cfi(&free_protocol, 10.0, 1.0).unwrap().value();
        assert_relative_eq!(free, 0.014194, max_relative = 1e-3);
        assert!((0.0126..=0.0154).contains(&free));
        // about half of the echo average
        assert!((free / echo - 0.47).abs() < 0.05);
    }

    #[test]
    fn average_cfi_small_range_is_midpoint() {
        let avg = average_cfi(&Protocol::SpinEcho, 0.01, 1.0).unwrap().value();
        let mid = cfi_tphi(&Protocol::SpinEcho, 0.005, 1.0).unwrap().value();
        assert!((avg - mid).abs() < 0.01 * mid);
    }

    #[test]
    fn repeated_curve_tracks_crb() {
        let cfg = SchemeConfig {
            scheme: Scheme::Repeated { tau: 0.8 },
            protocol: Protocol::SpinEcho,
            prior: PriorSpec { grid_size: 800, ..PriorSpec::default_tphi() },
            n_max: 1000,
        };
        let curve = simulate_precision_curve(&cfg, 1.0, 50, 7).unwrap();
        let last = curve.n_values.len() - 1;
        assert_eq!(curve.n_values[last], 1000);
        // reference columns: exact 2.5/sqrt(N) and 1/sqrt(N F(0.8))
        assert_relative_eq!(curve.opt_reference[last], 2.5 / 1000f64.sqrt());
        let f = cfi_tphi(&Protocol::SpinEcho, 0.8, 1.0).unwrap().value();
        assert_relative_eq!(curve.crb_reference[last], 1.0 / (1000.0 * f).sqrt(), max_relative = 1e-12);
        // 50 trials: RMS within ~30% of the bound
        let bound = curve.crb_reference[last];
        assert!(
            (curve.rms_error[last] - bound).abs() < 0.3 * bound,
            "rms {} vs bound {}",
            curve.rms_error[last],
            bound
        );
        assert_relative_eq!(curve.median_tau[last], 0.8);
    }

    #[test]
    fn curve_requires_trials() {
        let cfg = SchemeConfig {
            scheme: Scheme::Repeated { tau: 0.8 },
            protocol: Protocol::SpinEcho,
            prior: PriorSpec::default_tphi(),
            n_max: 10,
        };
        assert!(simulate_precision_curve(&cfg, 1.0, 1, 0).is_err());
    }

    #[test]
    fn simulation_is_deterministic() {
        let cfg = SchemeConfig {
            scheme: Scheme::AdaptiveCfi,
            protocol: Protocol::SpinEcho,
            prior: PriorSpec { grid_size: 400, ..PriorSpec::default_tphi() },
            n_max: 50,
        };
        let a = simulate_precision_curve(&cfg, 1.0, 20, 99).unwrap();
        let b = simulate_precision_curve(&cfg, 1.0, 20, 99).unwrap();
        assert_eq!(a.rms_error, b.rms_error);
        assert_eq!(a.median_tau, b.median_tau);
        assert_eq!(a.mean_posterior_uncertainty, b.mean_posterior_uncertainty);
    }

    #[test]
    fn figure_ids_roundtrip() {
        for id in FigureId::ALL {
            assert_eq!(id.to_string().parse::<FigureId>().unwrap(), id);
        }
        assert!(matches!("nope".parse::<FigureId>(), Err(Error::UnknownFigure(_))));
    }

    #[test]
    fn reproduce_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ReproduceConfig { trials: 10, n_max: 40, grid_size: 300, ..Default::default() };
        let run = |sub: &str| -> Vec<(String, Vec<u8>)> {
            let out = dir.path().join(sub);
            let paths =
                reproduce(FigureId::TauTrajectories, &cfg, &out, 42).unwrap();
            paths
                .iter()
                .map(|p| {
                    (
                        p.file_name().unwrap().to_string_lossy().into_owned(),
                        std::fs::read(p).unwrap(),
                    )
                })
                .collect()
        };
        assert_eq!(run("a"), run("b"));
    }

    #[test]
    fn reproduce_static_figures() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ReproduceConfig::default();
        for figure in [FigureId::QfiCurves, FigureId::CfiCurves] {
            let paths = reproduce(figure, &cfg, dir.path(), 0).unwrap();
            assert!(paths.iter().all(|p| p.exists()));
            // every data file starts with a '#' header block
            let csv = std::fs::read_to_string(&paths[0]).unwrap();
            assert!(csv.starts_with('#'));
            assert!(!csv.contains('\r'));
        }
    }
}
