//! Ornstein-Uhlenbeck dephasing: the closed-form decoherence exponent
//! chi(tau), its parameter derivatives, and the derived dephasing time.
//!
//! The noise is Gaussian with autocorrelation b^2 e^{-|t-t'|/tau_c}, which
//! gives
//!
//! ```text
//! chi(tau) = b^2 tau_c^2 (tau/tau_c + e^{-tau/tau_c} - 1)
//! ```
//!
//! Short times dephase quadratically (chi ~ b^2 tau^2 / 2), long times
//! exponentially on the scale T_phi = 1/(b^2 tau_c).

use crate::error::{Error, Result};
use crate::numeric::x_plus_expm1_neg;

/// Which Ornstein-Uhlenbeck parameter a derivative is taken with respect to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseParam {
    /// Noise amplitude b (angular frequency units).
    Amplitude,
    /// Noise memory time tau_c.
    MemoryTime,
}

/// Amplitude and memory time of an Ornstein-Uhlenbeck magnetic noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuNoiseParams {
    b: f64,
    tau_c: f64,
}

impl OuNoiseParams {
    /// Both parameters must be strictly positive and finite.
    pub fn new(b: f64, tau_c: f64) -> Result<Self> {
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise amplitude b must be positive, got {b}"
            )));
        }
        if !(tau_c > 0.0 && tau_c.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise memory time tau_c must be positive, got {tau_c}"
            )));
        }
        Ok(Self { b, tau_c })
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn tau_c(&self) -> f64 {
        self.tau_c
    }

    /// Dephasing time T_phi = 1/(b^2 tau_c) of the long-time exponential decay.
    pub fn dephasing_time(&self) -> f64 {
        1.0 / (self.b * self.b * self.tau_c)
    }

    /// Decoherence exponent chi(tau) >= 0; monotone nondecreasing in tau.
    pub fn decoherence_exponent(&self, tau: f64) -> Result<f64> {
        if tau < 0.0 {
            return Err(Error::NegativeTime(tau));
        }
        let x = tau / self.tau_c;
        Ok(self.b * self.b * self.tau_c * self.tau_c * x_plus_expm1_neg(x))
    }

    /// Partial derivative of chi with respect to one noise parameter.
    ///
    /// d chi / d b = 2 chi / b and d chi / d tau_c = g(tau/tau_c) chi / tau_c.
    pub fn dchi_dparam(&self, tau: f64, which: NoiseParam) -> Result<f64> {
        let chi = self.decoherence_exponent(tau)?;
        Ok(match which {
            NoiseParam::Amplitude => 2.0 * chi / self.b,
            NoiseParam::MemoryTime => g_function(tau / self.tau_c) * chi / self.tau_c,
        })
    }
}

/// The saturation function g(x) = [x - 2 + e^{-x}(x + 2)] / [x + e^{-x} - 1].
///
/// Monotone nondecreasing, g(0) = 0, g -> 1 as x -> infinity (approached as
/// 1 - 1/x). Numerator and denominator are both O(x^2) at the origin, so a
/// series branch takes over for small x.
pub fn g_function(x: f64) -> f64 {
    debug_assert!(x >= 0.0, "g_function argument must be nonnegative");
    if x < 1e-4 {
        // g(x) = (x/3)(1 - x/6 + x^2/90 - ...)
        (x / 3.0) * (1.0 - x / 6.0 + x * x / 90.0)
    } else {
        // numerator rewritten as 2x + (x+2)(e^{-x} - 1): the naive form
        // cancels to O(x^3) and loses ~4 digits near the series joint
        let num = 2.0 * x + (x + 2.0) * (-x).exp_m1();
        num / x_plus_expm1_neg(x)
    }
}
