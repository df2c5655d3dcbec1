//! Estimation strategies for the dephasing time: repeated fixed-time
//! measurements, two adaptive schemes (CFI-guided and locally optimal),
//! and least-squares curve fitting.
//!
//! Every scheme consumes one RNG substream per trial (see
//! [`crate::spin_dynamics::trial_rng`]), so trials are reproducible and
//! order-independent.

use crate::bayes_estimation::{
    outcome_likelihood, Estimate, EstimatorKind, PosteriorGrid, PriorKind,
};
use crate::error::{Error, Result};
use crate::fisher_info::optimal_tau;
use crate::numeric::golden_min;
use crate::spin_dynamics::{sample_outcome, tphi_outcome_probs, Protocol};
use rand::Rng;
use rand_distr::{Binomial, Distribution};

/// Prior specification: range, grid resolution, and shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSpec {
    pub t_min: f64,
    pub t_max: f64,
    pub grid_size: usize,
    pub kind: PriorKind,
}

impl PriorSpec {
    /// Flat prior on [0.05, 10] with 2000 grid points.
    pub fn default_tphi() -> Self {
        Self { t_min: 0.05, t_max: 10.0, grid_size: 2000, kind: PriorKind::Flat }
    }

    pub fn build(&self) -> Result<PosteriorGrid> {
        PosteriorGrid::init_prior(self.t_min, self.t_max, self.grid_size, self.kind)
    }
}

/// Log-spaced candidate evolution times for the locally optimal scheme,
/// expressed as multiples of the current estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateGrid {
    pub count: usize,
    pub lo_factor: f64,
    pub hi_factor: f64,
}

impl Default for CandidateGrid {
    fn default() -> Self {
        Self { count: 60, lo_factor: 0.05, hi_factor: 5.0 }
    }
}

impl CandidateGrid {
    /// Candidate times around the working estimate `t_m`. For free
    /// evolution each candidate snaps to the n pi/omega lattice (n >= 1),
    /// with duplicates removed.
    pub fn taus(&self, protocol: &Protocol, t_m: f64) -> Vec<f64> {
        let lo = (self.lo_factor * t_m).ln();
        let hi = (self.hi_factor * t_m).ln();
        let mut out = Vec::with_capacity(self.count);
        for k in 0..self.count {
            let frac = k as f64 / (self.count - 1).max(1) as f64;
            let mut tau = (lo + frac * (hi - lo)).exp();
            if let Protocol::FreeEvolution { omega } = protocol {
                let half_period = std::f64::consts::PI / omega;
                tau = (tau / half_period).round().max(1.0) * half_period;
            }
            if out.last().map_or(true, |&prev: &f64| tau > prev) {
                out.push(tau);
            }
        }
        out
    }
}

/// Estimation strategy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    /// Fixed evolution time for the whole run.
    Repeated { tau: f64 },
    /// Each cycle sets tau by the 0.8 T rule at the current estimate.
    AdaptiveCfi,
    /// Each cycle minimizes the expected posterior uncertainty over a
    /// candidate set.
    AdaptiveLocallyOptimal { candidates: CandidateGrid },
    /// Fit the mean signal over a uniform tau grid: M grid points, nu
    /// samples per point, q independent repetitions.
    Lsq { tau_max: f64, m: usize, nu: u32, q: u32 },
}

/// Which adaptive rule [`run_adaptive`] applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdaptiveVariant {
    Cfi,
    LocallyOptimal,
}

/// Full configuration of a sensing run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    pub protocol: Protocol,
    pub prior: PriorSpec,
    pub n_max: usize,
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<()> {
        match self.scheme {
            Scheme::Repeated { tau } => {
                if !(tau > 0.0 && tau.is_finite()) {
                    return Err(Error::Config(format!("repeated scheme needs tau > 0, got {tau}")));
                }
            }
            Scheme::AdaptiveCfi => {}
            Scheme::AdaptiveLocallyOptimal { candidates } => {
                if candidates.count < 2
                    || !(candidates.lo_factor > 0.0)
                    || candidates.hi_factor <= candidates.lo_factor
                {
                    return Err(Error::Config("invalid candidate grid".into()));
                }
            }
            Scheme::Lsq { tau_max, m, nu, q } => {
                if !(tau_max > 0.0 && tau_max.is_finite()) {
                    return Err(Error::Config(format!("LSQ needs tau_max > 0, got {tau_max}")));
                }
                if m < 2 || nu < 1 || q < 2 {
                    return Err(Error::Config(format!(
                        "LSQ needs M >= 2, nu >= 1, q >= 2; got M={m}, nu={nu}, q={q}"
                    )));
                }
            }
        }
        if self.n_max > 0 || matches!(self.scheme, Scheme::Lsq { .. }) {
            Ok(())
        } else {
            Ok(()) // N = 0 is allowed: prior-only record
        }
    }
}

/// How much per-cycle detail a trial records.
///
/// Estimating the MLE and spread every cycle dominates the runtime of long
/// trials; checkpoint mode records them only at 1-2-5 log-spaced cycles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordMode {
    EveryCycle,
    Checkpoints,
}

/// True if n is in the 1-2-5 log-spaced checkpoint series.
pub fn is_log_checkpoint(n: usize) -> bool {
    let mut lead = n;
    let mut pow = 1usize;
    while lead >= 10 {
        if lead % 10 != 0 {
            return false;
        }
        lead /= 10;
        pow *= 10;
    }
    let _ = pow;
    matches!(lead, 1 | 2 | 5)
}

/// One measurement cycle of a trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleRow {
    /// 1-based cycle index.
    pub cycle: usize,
    pub tau: f64,
    pub outcome: i8,
    /// Current MLE with posterior spread, when recorded.
    pub estimate: Option<Estimate>,
}

/// Complete record of one trial: the cycle log and the final posterior.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub rows: Vec<CycleRow>,
    pub posterior: PosteriorGrid,
}

impl TrialRecord {
    /// Rows that carry an estimate, as (cycle, estimate) pairs.
    pub fn recorded_estimates(&self) -> impl Iterator<Item = (usize, Estimate)> + '_ {
        self.rows.iter().filter_map(|r| r.estimate.map(|e| (r.cycle, e)))
    }

    /// Serialize as CSV rows `cycle,tau,outcome,estimate,uncertainty`;
    /// estimate fields are empty on cycles without a recorded estimate.
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "# columns: cycle,tau,outcome,estimate,uncertainty")?;
        for r in &self.rows {
            match r.estimate {
                Some(e) => writeln!(
                    w,
                    "{},{:.12e},{},{:.12e},{:.12e}",
                    r.cycle, r.tau, r.outcome, e.point, e.uncertainty
                )?,
                None => writeln!(w, "{},{:.12e},{},,", r.cycle, r.tau, r.outcome)?,
            }
        }
        Ok(())
    }
}

fn record_estimate(posterior: &PosteriorGrid) -> Option<Estimate> {
    match posterior.mle() {
        Ok(e) => Some(e),
        // a still-flat posterior has no peak; fall back to the mean
        Err(_) => Some(posterior.posterior_mean()),
    }
}

/// Fixed-tau scheme: n_max cycles at the configured evolution time.
pub fn run_repeated(
    cfg: &SchemeConfig,
    true_t_phi: f64,
    rng: &mut impl Rng,
    mode: RecordMode,
) -> Result<TrialRecord> {
    cfg.validate()?;
    let tau = match cfg.scheme {
        Scheme::Repeated { tau } => tau,
        _ => return Err(Error::Config("run_repeated needs the Repeated scheme".into())),
    };
    let mut posterior = cfg.prior.build()?;
    let dist = tphi_outcome_probs(&cfg.protocol, tau, true_t_phi)?;
    // tau never changes, so the two log-likelihood tables can be built
    // once; per-cycle updates are then plain additions
    let log_table = |plus: bool| -> Vec<f64> {
        posterior
            .values()
            .iter()
            .map(|&t| {
                let d = tphi_outcome_probs(&cfg.protocol, tau, t)
                    .expect("grid values are positive");
                (if plus { d.p_plus() } else { d.p_minus() }).ln()
            })
            .collect()
    };
    let (ln_plus, ln_minus) = (log_table(true), log_table(false));
    let mut rows = Vec::with_capacity(cfg.n_max);
    let mut dirty = false;
    for n in 1..=cfg.n_max {
        let outcome = sample_outcome(&dist, rng);
        posterior.add_log_likelihood(if outcome > 0 { &ln_plus } else { &ln_minus });
        dirty = true;
        let estimate = if mode == RecordMode::EveryCycle || is_log_checkpoint(n) || n == cfg.n_max {
            posterior.renormalize()?;
            dirty = false;
            record_estimate(&posterior)
        } else {
            None
        };
        rows.push(CycleRow { cycle: n, tau, outcome, estimate });
    }
    if dirty {
        posterior.renormalize()?;
    }
    Ok(TrialRecord { rows, posterior })
}

/// Adaptive scheme: each cycle re-estimates T and picks the next tau by
/// the variant's rule.
///
/// The first cycle's working estimate is the prior MLE when the prior is
/// informative, and a uniform random draw from the prior range when it is
/// flat (an MLE of a flat prior is undefined).
pub fn run_adaptive(
    cfg: &SchemeConfig,
    variant: AdaptiveVariant,
    true_t_phi: f64,
    rng: &mut impl Rng,
    mode: RecordMode,
) -> Result<TrialRecord> {
    cfg.validate()?;
    let candidates = match (cfg.scheme, variant) {
        (Scheme::AdaptiveCfi, AdaptiveVariant::Cfi) => None,
        (Scheme::AdaptiveLocallyOptimal { candidates }, AdaptiveVariant::LocallyOptimal) => {
            Some(candidates)
        }
        _ => return Err(Error::Config("scheme does not match the adaptive variant".into())),
    };
    let mut posterior = cfg.prior.build()?;
    let mut rows = Vec::with_capacity(cfg.n_max);
    let mut t_m = match posterior.mle() {
        Ok(e) => e.point,
        Err(_) => rng.gen_range(cfg.prior.t_min..cfg.prior.t_max),
    };
    for n in 1..=cfg.n_max {
        let tau = match candidates {
            None => optimal_tau(&cfg.protocol, t_m)?,
            Some(grid) => {
                let masses = posterior.masses();
                let mut best = (f64::INFINITY, 0.0);
                for cand in grid.taus(&cfg.protocol, t_m) {
                    let risk =
                        expected_uncertainty_core(posterior.values(), &masses, &cfg.protocol, cand);
                    if risk < best.0 {
                        best = (risk, cand);
                    }
                }
                best.1
            }
        };
        let dist = tphi_outcome_probs(&cfg.protocol, tau, true_t_phi)?;
        let outcome = sample_outcome(&dist, rng);
        posterior.bayes_update(outcome_likelihood(cfg.protocol, tau, outcome))?;
        let est = record_estimate(&posterior).expect("posterior has an estimate");
        t_m = est.point;
        let estimate = if mode == RecordMode::EveryCycle || is_log_checkpoint(n) || n == cfg.n_max {
            Some(est)
        } else {
            None
        };
        rows.push(CycleRow { cycle: n, tau, outcome, estimate });
    }
    Ok(TrialRecord { rows, posterior })
}

/// Outcome-averaged posterior spread after one hypothetical measurement
/// at evolution time `tau`.
///
/// For each outcome the posterior is hypothetically updated and its
/// standard deviation (spread about its own mean) computed; the two
/// spreads are weighted by the marginal outcome probabilities under the
/// current posterior. Centering each branch on its own mean and weighting
/// by the marginals keeps the criterion well-behaved when the posterior
/// is still broad: the density maximum of a near-flat posterior is
/// degenerate, and a spread centered on it rewards measurements that
/// merely move the peak instead of measurements that narrow the
/// distribution. In the sharp-posterior limit both choices coincide with
/// weighting by the outcome probabilities at the point estimate.
pub fn expected_uncertainty(post: &PosteriorGrid, tau: f64, protocol: &Protocol) -> Result<f64> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter(format!("tau must be > 0, got {tau}")));
    }
    Ok(expected_uncertainty_core(post.values(), &post.masses(), protocol, tau))
}

/// Hot path shared by [`expected_uncertainty`] and the locally optimal
/// scheme: one exp per grid point, both outcome branches accumulated in
/// the same pass.
fn expected_uncertainty_core(values: &[f64], masses: &[f64], protocol: &Protocol, tau: f64) -> f64 {
    let c_tau = match protocol {
        Protocol::FreeEvolution { omega } => (omega * tau).cos(),
        Protocol::SpinEcho => 1.0,
    };
    // unnormalized moments of the two hypothetical posteriors
    let (mut s0p, mut s1p, mut s2p) = (0.0, 0.0, 0.0);
    let (mut s0m, mut s1m, mut s2m) = (0.0, 0.0, 0.0);
    for (&x, &w) in values.iter().zip(masses) {
        let signal = (-tau / x).exp() * c_tau;
        let wp = w * 0.5 * (1.0 + signal);
        let wm = w - wp;
        s0p += wp;
        s1p += wp * x;
        s2p += wp * x * x;
        s0m += wm;
        s1m += wm * x;
        s2m += wm * x * x;
    }
    let spread = |s0: f64, s1: f64, s2: f64| -> f64 {
        if s0 <= 0.0 {
            return 0.0;
        }
        let mean = s1 / s0;
        (s2 / s0 - mean * mean).max(0.0).sqrt()
    };
    let delta_p = spread(s0p, s1p, s2p);
    let delta_m = spread(s0m, s1m, s2m);
    // branch masses are the marginal outcome probabilities (up to the
    // total mass, which is 1 for a normalized posterior)
    (s0p * delta_p + s0m * delta_m) / (s0p + s0m)
}

/// Least-squares fit of the mean signal to the protocol's decay model
/// (e^{-tau/T} for spin echo, cos(omega tau) e^{-tau/T} for free
/// evolution) by bracketed one-dimensional minimization over T.
pub fn fit_decay(protocol: &Protocol, samples: &[(f64, f64)]) -> Result<Estimate> {
    if samples.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "fit needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    for &(tau, mean) in samples {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("sample times must be > 0, got {tau}")));
        }
        if !(-1.0..=1.0).contains(&mean) {
            return Err(Error::InvalidParameter(format!(
                "mean outcomes must lie in [-1, 1], got {mean}"
            )));
        }
    }
    let model_factor = |tau: f64| match protocol {
        Protocol::FreeEvolution { omega } => (omega * tau).cos(),
        Protocol::SpinEcho => 1.0,
    };
    let sse = |t: f64| -> f64 {
        samples
            .iter()
            .map(|&(tau, mean)| {
                let r = mean - model_factor(tau) * (-tau / t).exp();
                r * r
            })
            .sum()
    };
    // coarse log-spaced scan to bracket the minimum, then golden section
    let tau_max = samples.iter().map(|s| s.0).fold(0.0, f64::max);
    let tau_min = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let (t_lo, t_hi) = (tau_min / 50.0, tau_max * 50.0);
    const SCAN: usize = 256;
    let log_t = |k: usize| {
        (t_lo.ln() + k as f64 / (SCAN - 1) as f64 * (t_hi.ln() - t_lo.ln())).exp()
    };
    let errs: Vec<f64> = (0..SCAN).map(|k| sse(log_t(k))).collect();
    let k_min = errs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(k, _)| k)
        .unwrap();
    if k_min == 0 || k_min == SCAN - 1 {
        return Err(Error::FitFailure(format!(
            "objective has no interior minimum in T range [{t_lo:.3e}, {t_hi:.3e}]"
        )));
    }
    let (point, _) = golden_min(sse, log_t(k_min - 1), log_t(k_min + 1), 1e-10 * log_t(k_min));
    Ok(Estimate { point, uncertainty: 0.0, kind: EstimatorKind::LeastSquares })
}

/// Result of a least-squares run: the ensemble over the q repetitions.
#[derive(Debug, Clone)]
pub struct LsqOutcome {
    /// Successful per-repetition fits.
    pub estimates: Vec<f64>,
    /// Mean of the successful fits.
    pub mean: f64,
    /// Sample standard deviation of the successful fits.
    pub precision: f64,
    /// Repetitions whose fit had no bracketable minimum.
    pub failures: u32,
}

/// Least-squares scheme: q repetitions of (sample nu outcomes at each of
/// the M grid times, average, fit), reporting the spread across fits.
///
/// For free evolution the grid spacing snaps to an integer multiple of
/// pi/omega so every grid point samples the envelope.
pub fn run_lsq(cfg: &SchemeConfig, true_t_phi: f64, rng: &mut impl Rng) -> Result<LsqOutcome> {
    cfg.validate()?;
    let (tau_max, m, nu, q) = match cfg.scheme {
        Scheme::Lsq { tau_max, m, nu, q } => (tau_max, m, nu, q),
        _ => return Err(Error::Config("run_lsq needs the LSQ scheme".into())),
    };
    let dt = match cfg.protocol {
        Protocol::SpinEcho => tau_max / m as f64,
        Protocol::FreeEvolution { omega } => {
            let half_period = std::f64::consts::PI / omega;
            (tau_max / (m as f64 * half_period)).round().max(1.0) * half_period
        }
    };
    let taus: Vec<f64> = (1..)
        .map(|k| k as f64 * dt)
        .take_while(|&t| t <= tau_max * (1.0 + 1e-12))
        .collect();
    let mut estimates = Vec::with_capacity(q as usize);
    let mut failures = 0u32;
    for _ in 0..q {
        let mut samples = Vec::with_capacity(taus.len());
        for &tau in &taus {
            let p = tphi_outcome_probs(&cfg.protocol, tau, true_t_phi)?.p_plus();
            let n_plus = Binomial::new(nu as u64, p)
                .map_err(|e| Error::Config(format!("binomial sampling: {e}")))?
                .sample(rng);
            let mean = (2.0 * n_plus as f64 - nu as f64) / nu as f64;
            samples.push((tau, mean));
        }
        match fit_decay(&cfg.protocol, &samples) {
            Ok(est) => estimates.push(est.point),
            Err(Error::FitFailure(_)) => failures += 1,
            Err(e) => return Err(e),
        }
    }
    if estimates.len() < 2 {
        return Err(Error::FitFailure(format!(
            "only {} of {q} repetitions produced a fit",
            estimates.len()
        )));
    }
    let mean = estimates.iter().sum::<f64>() / estimates.len() as f64;
    let var = estimates.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>()
        / (estimates.len() - 1) as f64;
    Ok(LsqOutcome { mean, precision: var.sqrt(), failures, estimates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fisher_info::cfi_tphi;
    use crate::spin_dynamics::trial_rng;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    const OMEGA: f64 = 400.0 * PI / 3.0;

    fn echo_cfg(scheme: Scheme, n_max: usize) -> SchemeConfig {
        SchemeConfig {
            scheme,
            protocol: Protocol::SpinEcho,
            prior: PriorSpec::default_tphi(),
            n_max,
        }
    }

    #[test]
    fn checkpoint_series() {
        let hits: Vec<usize> = (1..=1200).filter(|&n| is_log_checkpoint(n)).collect();
        assert_eq!(hits, vec![1, 2, 5, 10, 20, 50, 100, 200, 500, 1000]);
    }

    #[test]
    fn repeated_zero_cycles_is_prior() {
        let cfg = echo_cfg(Scheme::Repeated { tau: 0.8 }, 0);
        let mut rng = trial_rng(1, 0);
        let rec = run_repeated(&cfg, 1.0, &mut rng, RecordMode::EveryCycle).unwrap();
        assert!(rec.rows.is_empty());
        assert_eq!(rec.posterior, cfg.prior.build().unwrap());
    }

    #[test]
    fn repeated_converges_to_truth() {
        let cfg = echo_cfg(Scheme::Repeated { tau: 0.8 }, 1000);
        let mut rng = trial_rng(11, 0);
        let rec = run_repeated(&cfg, 1.0, &mut rng, RecordMode::Checkpoints).unwrap();
        let (n, est) = rec.recorded_estimates().last().unwrap();
        assert_eq!(n, 1000);
        // 5 sigma of the Cramér-Rao prediction 1/sqrt(1000 * 0.162)
        assert!((est.point - 1.0).abs() < 5.0 * 0.079, "estimate {}", est.point);
        // checkpoint mode only records the 1-2-5 series
        assert_eq!(rec.recorded_estimates().count(), 10);
    }

    #[test]
    fn repeated_validates_scheme() {
        let cfg = echo_cfg(Scheme::Repeated { tau: -1.0 }, 10);
        assert!(run_repeated(&cfg, 1.0, &mut trial_rng(0, 0), RecordMode::EveryCycle).is_err());
        let cfg = echo_cfg(Scheme::AdaptiveCfi, 10);
        assert!(run_repeated(&cfg, 1.0, &mut trial_rng(0, 0), RecordMode::EveryCycle).is_err());
    }

    #[test]
    fn adaptive_cfi_replays_the_tau_rule() {
        let cfg = echo_cfg(Scheme::AdaptiveCfi, 200);
        let mut rng = trial_rng(3, 7);
        let rec = run_adaptive(&cfg, AdaptiveVariant::Cfi, 1.0, &mut rng, RecordMode::EveryCycle)
            .unwrap();
        for pair in rec.rows.windows(2) {
            let t_m = pair[0].estimate.unwrap().point;
            let expected = optimal_tau(&Protocol::SpinEcho, t_m).unwrap();
            assert_eq!(pair[1].tau, expected, "cycle {}", pair[1].cycle);
        }
        // after a few hundred cycles tau has settled near 0.8
        let final_tau = rec.rows.last().unwrap().tau;
        assert!((final_tau - 0.8).abs() < 0.2, "final tau {final_tau}");
    }

    #[test]
    fn adaptive_free_stays_on_lattice() {
        let cfg = SchemeConfig {
            scheme: Scheme::AdaptiveCfi,
            protocol: Protocol::free_evolution(OMEGA).unwrap(),
            prior: PriorSpec::default_tphi(),
            n_max: 150,
        };
        let mut rng = trial_rng(5, 1);
        let rec = run_adaptive(&cfg, AdaptiveVariant::Cfi, 1.0, &mut rng, RecordMode::Checkpoints)
            .unwrap();
        for row in &rec.rows {
            let n = row.tau * OMEGA / PI;
            assert!((n - n.round()).abs() < 1e-9, "tau {} is off-lattice", row.tau);
            assert!(n.round() >= 1.0);
        }
    }

    #[test]
    fn delta_prior_gives_optimal_tau_immediately() {
        // near-delta prior centered exactly on a grid point at the truth
        let cfg = SchemeConfig {
            scheme: Scheme::AdaptiveCfi,
            protocol: Protocol::SpinEcho,
            prior: PriorSpec {
                t_min: 0.5,
                t_max: 1.5,
                grid_size: 1001,
                kind: PriorKind::Gaussian { center: 1.0, sigma: 1e-4 },
            },
            n_max: 3,
        };
        let mut rng = trial_rng(9, 0);
        let rec = run_adaptive(&cfg, AdaptiveVariant::Cfi, 1.0, &mut rng, RecordMode::EveryCycle)
            .unwrap();
        assert_eq!(rec.rows[0].tau, 0.8);
    }

    #[test]
    fn locally_optimal_runs_and_converges() {
        let cfg = echo_cfg(
            Scheme::AdaptiveLocallyOptimal { candidates: CandidateGrid::default() },
            300,
        );
        let mut rng = trial_rng(21, 4);
        let rec = run_adaptive(
            &cfg,
            AdaptiveVariant::LocallyOptimal,
            1.0,
            &mut rng,
            RecordMode::Checkpoints,
        )
        .unwrap();
        let (_, est) = rec.recorded_estimates().last().unwrap();
        assert!((est.point - 1.0).abs() < 0.5, "estimate {}", est.point);
    }

    #[test]
    fn expected_uncertainty_sharp_prior_matches_cfi_peak() {
        let post = PosteriorGrid::init_prior(
            0.5,
            1.5,
            2001,
            PriorKind::Gaussian { center: 1.0, sigma: 0.01 },
        )
        .unwrap();
        let candidates: Vec<f64> = (0..200).map(|k| 0.05 + 4.95 * k as f64 / 199.0).collect();
        let best = candidates
            .iter()
            .copied()
            .min_by(|a, b| {
                let ra = expected_uncertainty(&post, *a, &Protocol::SpinEcho).unwrap();
                let rb = expected_uncertainty(&post, *b, &Protocol::SpinEcho).unwrap();
                ra.partial_cmp(&rb).unwrap()
            })
            .unwrap();
        assert!((0.78..=0.82).contains(&best), "argmin {best}");
    }

    #[test]
    fn expected_uncertainty_small_tau_is_current_spread() {
        let post = PosteriorGrid::init_prior(
            0.5,
            1.5,
            2001,
            PriorKind::Gaussian { center: 1.0, sigma: 0.05 },
        )
        .unwrap();
        let current = post.uncertainty(post.mle().unwrap().point);
        let risk = expected_uncertainty(&post, 1e-6, &Protocol::SpinEcho).unwrap();
        assert_relative_eq!(risk, current, max_relative = 1e-4);
    }

    #[test]
    fn sharp_prior_risk_expansion() {
        // delta-bar(tau) = sigma - (sigma^3/2) F(tau): check the correction
        // term itself, which is tiny relative to sigma
        let sigma = 0.01;
        let post = PosteriorGrid::init_prior(
            0.9,
            1.1,
            4001,
            PriorKind::Gaussian { center: 1.0, sigma },
        )
        .unwrap();
        for tau in [0.3, 0.8, 1.5, 3.0] {
            let risk = expected_uncertainty(&post, tau, &Protocol::SpinEcho).unwrap();
            let f = cfi_tphi(&Protocol::SpinEcho, tau, 1.0).unwrap().value();
            let correction = 0.5 * sigma.powi(3) * f;
            let observed = sigma - risk;
            assert!(
                (observed - correction).abs() < 0.05 * correction,
                "tau {tau}: observed {observed:.3e} vs {correction:.3e}"
            );
        }
    }

    #[test]
    fn candidate_grid_dedupes_on_lattice() {
        let free = Protocol::free_evolution(OMEGA).unwrap();
        let grid = CandidateGrid::default();
        let taus = grid.taus(&free, 1.0);
        assert!(taus.len() >= 2);
        for pair in taus.windows(2) {
            assert!(pair[1] > pair[0]);
        }
        for &tau in &taus {
            let n = tau * OMEGA / PI;
            assert!((n - n.round()).abs() < 1e-9);
        }
    }

    #[test]
    fn fit_recovers_noiseless_decay() {
        let samples: Vec<(f64, f64)> =
            (1..=100).map(|k| (0.1 * k as f64, (-0.1 * k as f64).exp())).collect();
        let est = fit_decay(&Protocol::SpinEcho, &samples).unwrap();
        assert!((est.point - 1.0).abs() < 1e-6, "fit {}", est.point);
        assert_eq!(est.kind, EstimatorKind::LeastSquares);

        let free = Protocol::free_evolution(OMEGA).unwrap();
        let dt = PI / OMEGA;
        let samples: Vec<(f64, f64)> = (1..=100)
            .map(|k| {
                let tau = k as f64 * dt;
                (tau, (OMEGA * tau).cos() * (-tau).exp())
            })
            .collect();
        let est = fit_decay(&free, &samples).unwrap();
        assert!((est.point - 1.0).abs() < 1e-6, "fit {}", est.point);
    }

    #[test]
    fn fit_rejects_unbracketable_data() {
        // all-negative means cannot come from a positive decay model; the
        // objective decreases monotonically toward T = 0
        let samples: Vec<(f64, f64)> = (1..=20).map(|k| (0.5 * k as f64, -0.5)).collect();
        assert!(matches!(
            fit_decay(&Protocol::SpinEcho, &samples),
            Err(Error::FitFailure(_))
        ));
        assert!(fit_decay(&Protocol::SpinEcho, &[(1.0, 0.5)]).is_err());
    }

    #[test]
    fn lsq_smoke_run() {
        let cfg = echo_cfg(Scheme::Lsq { tau_max: 10.0, m: 20, nu: 50, q: 10 }, 0);
        let mut rng = trial_rng(33, 0);
        let out = run_lsq(&cfg, 1.0, &mut rng).unwrap();
        assert_eq!(out.estimates.len() + out.failures as usize, 10);
        assert!((out.mean - 1.0).abs() < 0.3, "mean {}", out.mean);
        assert!(out.precision > 0.0);
    }

    #[test]
    fn lsq_validates_config() {
        let bad = echo_cfg(Scheme::Lsq { tau_max: 10.0, m: 1, nu: 100, q: 100 }, 0);
        assert!(run_lsq(&bad, 1.0, &mut trial_rng(0, 0)).is_err());
        let bad = echo_cfg(Scheme::Lsq { tau_max: 10.0, m: 100, nu: 100, q: 1 }, 0);
        assert!(run_lsq(&bad, 1.0, &mut trial_rng(0, 0)).is_err());
    }

    #[test]
    fn trial_record_csv_shape() {
        let cfg = echo_cfg(Scheme::Repeated { tau: 0.8 }, 7);
        let rec =
            run_repeated(&cfg, 1.0, &mut trial_rng(2, 0), RecordMode::Checkpoints).unwrap();
        let mut buf = Vec::new();
        rec.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 8);
        assert!(lines[0].starts_with('#'));
        // cycle 3 is not a checkpoint: estimate fields are empty
        assert!(lines[3].ends_with(",,"));
        // cycle 7 is the final cycle: estimate recorded
        assert!(!lines[7].ends_with(",,"));
    }
}
