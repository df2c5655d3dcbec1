//! Spin-1/2 evolution under dephasing, projective measurement outcome
//! distributions, and seeded outcome sampling.
//!
//! Two protocols are supported. Free evolution keeps the Larmor precession
//! cos(omega tau) in the signal; spin echo inserts a perfect midpoint
//! pi-pulse, which cancels the Larmor phase and leaves a pure exponential
//! decay e^{-tau/T_phi} of the transverse spin.

use crate::error::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Measurement protocol for one initialization-evolution-measurement cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Protocol {
    /// Uninterrupted precession at Larmor frequency omega.
    FreeEvolution { omega: f64 },
    /// Midpoint pi-pulse; the final state is independent of omega.
    SpinEcho,
}

impl Protocol {
    pub fn free_evolution(omega: f64) -> Result<Self> {
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "free evolution requires omega > 0, got {omega}"
            )));
        }
        Ok(Protocol::FreeEvolution { omega })
    }

    /// Larmor frequency, if the protocol depends on one.
    pub fn omega(&self) -> Option<f64> {
        match self {
            Protocol::FreeEvolution { omega } => Some(*omega),
            Protocol::SpinEcho => None,
        }
    }
}

/// Bloch-vector representation n = Tr(sigma rho) of a two-level state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochState(pub [f64; 3]);

impl BlochState {
    pub fn norm_squared(&self) -> f64 {
        let [x, y, z] = self.0;
        x * x + y * y + z * z
    }
}

/// Projective measurement axis with polar angle theta and azimuth varphi.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementAxis {
    theta: f64,
    varphi: f64,
}

impl MeasurementAxis {
    pub fn new(theta: f64, varphi: f64) -> Result<Self> {
        if !(0.0..=std::f64::consts::PI).contains(&theta) {
            return Err(Error::InvalidParameter(format!(
                "polar angle must lie in [0, pi], got {theta}"
            )));
        }
        Ok(Self { theta, varphi })
    }

    /// sigma_x measurement.
    pub fn x_axis() -> Self {
        Self { theta: std::f64::consts::FRAC_PI_2, varphi: 0.0 }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn varphi(&self) -> f64 {
        self.varphi
    }

    /// Axis flipped to the antipodal direction.
    pub fn antipodal(&self) -> Self {
        Self {
            theta: std::f64::consts::PI - self.theta,
            varphi: self.varphi + std::f64::consts::PI,
        }
    }

    pub fn unit_vector(&self) -> [f64; 3] {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.varphi.sin_cos();
        [st * cp, st * sp, ct]
    }
}

/// Probabilities of the +1 / -1 outcomes of a projective spin measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutcomeDistribution {
    p_plus: f64,
    p_minus: f64,
}

impl OutcomeDistribution {
    pub fn new(p_plus: f64, p_minus: f64) -> Result<Self> {
        let ok = (0.0..=1.0).contains(&p_plus)
            && (0.0..=1.0).contains(&p_minus)
            && (p_plus + p_minus - 1.0).abs() <= 1e-12;
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "outcome probabilities must be in [0,1] and sum to 1, got ({p_plus}, {p_minus})"
            )));
        }
        Ok(Self { p_plus, p_minus })
    }

    fn from_expectation(mean: f64) -> Self {
        // mean = <sigma . m> in [-1, 1]; clamp away rounding overshoot
        let mean = mean.clamp(-1.0, 1.0);
        Self { p_plus: 0.5 * (1.0 + mean), p_minus: 0.5 * (1.0 - mean) }
    }

    pub fn p_plus(&self) -> f64 {
        self.p_plus
    }

    pub fn p_minus(&self) -> f64 {
        self.p_minus
    }
}

/// Final Bloch vector after evolving the initial state
/// cos(Theta/2)|up> + sin(Theta/2)|down> for a time tau with decoherence
/// exponent chi.
pub fn final_bloch(protocol: &Protocol, theta_init: f64, chi: f64, tau: f64) -> Result<BlochState> {
    if chi < 0.0 {
        return Err(Error::InvalidParameter(format!("chi must be >= 0, got {chi}")));
    }
    if tau < 0.0 {
        return Err(Error::NegativeTime(tau));
    }
    let decay = (-chi).exp();
    let (s, c) = theta_init.sin_cos();
    Ok(match protocol {
        Protocol::FreeEvolution { omega } => {
            let (sw, cw) = (omega * tau).sin_cos();
            BlochState([decay * s * cw, decay * s * sw, c])
        }
        // the pi-pulse cancels the Larmor phase entirely
        Protocol::SpinEcho => BlochState([decay * s, 0.0, c]),
    })
}

/// Outcome distribution P(+-1) = (1 +- n.m)/2 of a projective measurement
/// along `axis` on the final state.
pub fn outcome_probs(
    protocol: &Protocol,
    theta_init: f64,
    chi: f64,
    tau: f64,
    axis: &MeasurementAxis,
) -> Result<OutcomeDistribution> {
    let n = final_bloch(protocol, theta_init, chi, tau)?;
    let m = axis.unit_vector();
    let mean = n.0[0] * m[0] + n.0[1] * m[1] + n.0[2] * m[2];
    Ok(OutcomeDistribution::from_expectation(mean))
}

/// Outcome distribution of the sigma_x measurement used for T_phi sensing,
/// with Theta = pi/2 and Markovian decay chi = tau/T_phi.
///
/// Spin echo: P(+-1) = (1 +- e^{-tau/T_phi})/2.
/// Free evolution: P(+-1) = (1 +- e^{-tau/T_phi} cos(omega tau))/2.
pub fn tphi_outcome_probs(protocol: &Protocol, tau: f64, t_phi: f64) -> Result<OutcomeDistribution> {
    if tau < 0.0 {
        return Err(Error::NegativeTime(tau));
    }
    if !(t_phi > 0.0) {
        return Err(Error::InvalidParameter(format!("T_phi must be > 0, got {t_phi}")));
    }
    let decay = (-tau / t_phi).exp();
    let mean = match protocol {
        Protocol::SpinEcho => decay,
        Protocol::FreeEvolution { omega } => decay * (omega * tau).cos(),
    };
    Ok(OutcomeDistribution::from_expectation(mean))
}

/// Draw one outcome (+1 or -1) from the distribution.
pub fn sample_outcome(dist: &OutcomeDistribution, rng: &mut impl Rng) -> i8 {
    if rng.gen::<f64>() < dist.p_plus {
        1
    } else {
        -1
    }
}

/// Independent, reproducible random stream for one Monte Carlo trial.
///
/// Streams derived from the same master seed but different trial indices
/// never overlap, so trials can run in any order (or concurrently) and
/// still give bitwise-identical ensembles.
pub fn trial_rng(master_seed: u64, trial_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial_index);
    rng
}
