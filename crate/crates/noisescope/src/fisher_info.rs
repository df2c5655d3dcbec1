//! Quantum and classical Fisher information for the dephasing spin-1/2.
//!
//! Two independent routes compute the QFI: the Bloch-vector formula
//! (`qfi_bloch`) and the spectral-decomposition formula
//! (`qfi_spectral_2level`). The latter serves as an oracle for the former.
//! Model-specific closed forms (`qfi_model`, `cfi_model`, `cfi_tphi`) cover
//! the Ornstein-Uhlenbeck noise and the two T_phi sensing protocols.

use crate::error::{Error, Result};
use crate::noise_model::{g_function, NoiseParam, OuNoiseParams};
use crate::numeric::{chi_ratio, golden_max};
use crate::spin_dynamics::{BlochState, MeasurementAxis, Protocol};
use num_complex::Complex64;

/// Nonnegative, finite Fisher information value (units 1/param^2).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct FisherValue(f64);

impl FisherValue {
    pub fn new(value: f64) -> Result<Self> {
        if !(value >= 0.0 && value.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "Fisher information must be nonnegative and finite, got {value}"
            )));
        }
        Ok(Self(value))
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

/// Parameter the Fisher information refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelParam {
    /// Larmor frequency omega.
    Omega,
    /// Noise amplitude b.
    Amplitude,
    /// Noise memory time tau_c.
    MemoryTime,
}

/// QFI of a two-level state from its Bloch vector and derivative:
/// F = |dn|^2 + (d|n|^2)^2 / (4 (1 - |n|^2)), second term absent for pure
/// states.
pub fn qfi_bloch(n: &BlochState, dn: [f64; 3]) -> Result<FisherValue> {
    let ns = n.norm_squared();
    if ns > 1.0 + 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "Bloch vector norm exceeds 1: |n|^2 = {ns}"
        )));
    }
    let dn_sq = dn[0] * dn[0] + dn[1] * dn[1] + dn[2] * dn[2];
    let d_ns = 2.0 * (n.0[0] * dn[0] + n.0[1] * dn[1] + n.0[2] * dn[2]);
    let mixed_term = if 1.0 - ns <= 1e-12 {
        0.0
    } else {
        d_ns * d_ns / (4.0 * (1.0 - ns))
    };
    FisherValue::new(dn_sq + mixed_term)
}

/// Density matrix (1 + n.sigma)/2 of a Bloch vector.
pub fn density_matrix(n: &BlochState) -> [[Complex64; 2]; 2] {
    let [x, y, z] = n.0;
    [
        [
            Complex64::new(0.5 * (1.0 + z), 0.0),
            Complex64::new(0.5 * x, -0.5 * y),
        ],
        [
            Complex64::new(0.5 * x, 0.5 * y),
            Complex64::new(0.5 * (1.0 - z), 0.0),
        ],
    ]
}

/// Derivative of the density matrix for a Bloch-vector derivative dn.
pub fn density_matrix_derivative(dn: [f64; 3]) -> [[Complex64; 2]; 2] {
    let [x, y, z] = dn;
    [
        [
            Complex64::new(0.5 * z, 0.0),
            Complex64::new(0.5 * x, -0.5 * y),
        ],
        [
            Complex64::new(0.5 * x, 0.5 * y),
            Complex64::new(-0.5 * z, 0.0),
        ],
    ]
}

fn frobenius_norm(m: &[[Complex64; 2]; 2]) -> f64 {
    m.iter()
        .flatten()
        .map(|c| c.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// QFI of a two-level mixed state via the spectral-decomposition formula:
/// eigenvalue term + weighted pure-state QFI term - cross term, restricted
/// to the nonzero-eigenvalue support.
///
/// Independent of `qfi_bloch`; used as its oracle. Eigenvector derivatives
/// come from first-order perturbation theory, which requires a
/// nondegenerate spectrum whenever the derivative is nonzero.
pub fn qfi_spectral_2level(
    rho: &[[Complex64; 2]; 2],
    drho: &[[Complex64; 2]; 2],
) -> Result<FisherValue> {
    const TOL: f64 = 1e-9;
    let a = rho[0][0];
    let d = rho[1][1];
    let c = rho[0][1];
    if a.im.abs() > TOL
        || d.im.abs() > TOL
        || (rho[1][0] - c.conj()).norm() > TOL
        || (drho[1][0] - drho[0][1].conj()).norm() > TOL
    {
        return Err(Error::InvalidParameter("rho/drho not Hermitian".into()));
    }
    if (a.re + d.re - 1.0).abs() > TOL {
        return Err(Error::InvalidParameter(format!(
            "rho must have unit trace, got {}",
            a.re + d.re
        )));
    }
    let mean = 0.5 * (a.re + d.re);
    let gap = ((0.5 * (a.re - d.re)).powi(2) + c.norm_sqr()).sqrt();
    let p1 = mean + gap;
    let p2 = mean - gap;
    if p2 < -TOL {
        return Err(Error::InvalidParameter(format!(
            "rho is not positive semidefinite: eigenvalue {p2}"
        )));
    }
    if 2.0 * gap < TOL {
        // degenerate spectrum: the QFI is zero iff the state does not move
        if frobenius_norm(drho) < TOL {
            return FisherValue::new(0.0);
        }
        return Err(Error::InvalidParameter(
            "degenerate spectrum with nonzero derivative is outside the perturbative oracle".into(),
        ));
    }

    // eigenvectors: pick the better-conditioned component form
    let eigvec = |p: f64| -> [Complex64; 2] {
        let v1 = [c, Complex64::new(p - a.re, 0.0)];
        let v2 = [Complex64::new(p - d.re, 0.0), c.conj()];
        let n1 = v1[0].norm_sqr() + v1[1].norm_sqr();
        let n2 = v2[0].norm_sqr() + v2[1].norm_sqr();
        let (v, n) = if n1 >= n2 { (v1, n1) } else { (v2, n2) };
        let inv = 1.0 / n.sqrt();
        [v[0] * inv, v[1] * inv]
    };
    let phi1 = eigvec(p1);
    let phi2 = eigvec(p2);

    let sandwich = |u: &[Complex64; 2], v: &[Complex64; 2]| -> Complex64 {
        let mut s = Complex64::new(0.0, 0.0);
        for i in 0..2 {
            for j in 0..2 {
                s += u[i].conj() * drho[i][j] * v[j];
            }
        }
        s
    };
    let dp1 = sandwich(&phi1, &phi1).re;
    let dp2 = sandwich(&phi2, &phi2).re;
    let cross_amp = sandwich(&phi1, &phi2).norm_sqr();
    let gap_sq = (p1 - p2) * (p1 - p2);

    let in_support = |p: f64| p > 1e-12;
    let mut total = 0.0;
    // classical (eigenvalue) term
    for (p, dp) in [(p1, dp1), (p2, dp2)] {
        if in_support(p) {
            total += dp * dp / p;
        }
    }
    // weighted pure-state QFI term; each eigenstate's pure QFI is
    // 4 |<phi_m|drho|phi_n>|^2 / (p_n - p_m)^2 in two dimensions
    let pure_qfi = 4.0 * cross_amp / gap_sq;
    for p in [p1, p2] {
        if in_support(p) {
            total += p * pure_qfi;
        }
    }
    // cross term over both ordered pairs in the support
    if in_support(p1) && in_support(p2) {
        total -= 16.0 * p1 * p2 / (p1 + p2) * cross_amp / gap_sq;
    }
    FisherValue::new(total.max(0.0))
}

/// CFI of a binary-outcome measurement: F = (dp)^2 / (p (1 - p)).
pub fn cfi_binary(p_plus: f64, dp_plus: f64) -> Result<FisherValue> {
    if !(0.0..=1.0).contains(&p_plus) {
        return Err(Error::InvalidParameter(format!(
            "p_plus must be in [0,1], got {p_plus}"
        )));
    }
    let var = p_plus * (1.0 - p_plus);
    if var == 0.0 {
        if dp_plus == 0.0 {
            return FisherValue::new(0.0);
        }
        return Err(Error::SingularInformation { p_plus, dp_plus });
    }
    FisherValue::new(dp_plus * dp_plus / var)
}

/// QFI of the Ornstein-Uhlenbeck dephasing model about one parameter:
/// F_omega = tau^2 e^{-2 chi} sin^2 Theta,
/// F_zeta  = (d_zeta chi)^2 / (e^{2 chi} - 1) sin^2 Theta.
pub fn qfi_model(
    param: ModelParam,
    theta_init: f64,
    tau: f64,
    noise: &OuNoiseParams,
) -> Result<FisherValue> {
    let chi = noise.decoherence_exponent(tau)?;
    let sin_sq = theta_init.sin().powi(2);
    let value = match param {
        ModelParam::Omega => tau * tau * (-2.0 * chi).exp() * sin_sq,
        // (d_zeta chi)^2/(e^{2chi}-1) = (d_zeta chi / chi)^2 * chi^2/(e^{2chi}-1);
        // the prefactor has an analytic form, so the tau -> 0 limit is exact
        ModelParam::Amplitude => {
            let pref = 2.0 / noise.b();
            pref * pref * chi_ratio(chi) * sin_sq
        }
        ModelParam::MemoryTime => {
            let pref = g_function(tau / noise.tau_c()) / noise.tau_c();
            pref * pref * chi_ratio(chi) * sin_sq
        }
    };
    FisherValue::new(value)
}

/// CFI of a projective measurement along `axis` for the same model.
///
/// Attains the QFI at theta = pi/2 with azimuth omega*tau + pi/2 (for
/// omega) or omega*tau (for noise parameters).
pub fn cfi_model(
    param: ModelParam,
    theta_init: f64,
    tau: f64,
    axis: &MeasurementAxis,
    noise: &OuNoiseParams,
    omega: f64,
) -> Result<FisherValue> {
    let chi = noise.decoherence_exponent(tau)?;
    let decay = (-chi).exp();
    let (s_init, c_init) = theta_init.sin_cos();
    let (s_ax, c_ax) = axis.theta().sin_cos();
    let phase = omega * tau - axis.varphi();
    // mean outcome n.m for the general initial angle and axis
    let mean = c_init * c_ax + decay * s_init * s_ax * phase.cos();
    let p_plus = 0.5 * (1.0 + mean.clamp(-1.0, 1.0));
    let dp_plus = match param {
        ModelParam::Omega => -0.5 * tau * decay * s_init * s_ax * phase.sin(),
        ModelParam::Amplitude | ModelParam::MemoryTime => {
            let which = match param {
                ModelParam::Amplitude => NoiseParam::Amplitude,
                _ => NoiseParam::MemoryTime,
            };
            let dchi = noise.dchi_dparam(tau, which)?;
            -0.5 * dchi * decay * s_init * s_ax * phase.cos()
        }
    };
    cfi_binary(p_plus, dp_plus)
}

/// CFI about T_phi per outcome of the sigma_x measurement.
///
/// Spin echo: F = (tau/T^2)^2 / (e^{2 tau/T} - 1).
/// Free evolution: the same envelope modulated by cos^2(omega tau).
pub fn cfi_tphi(protocol: &Protocol, tau: f64, t_phi: f64) -> Result<FisherValue> {
    if tau < 0.0 {
        return Err(Error::NegativeTime(tau));
    }
    if !(t_phi > 0.0 && t_phi.is_finite()) {
        return Err(Error::InvalidParameter(format!("T_phi must be > 0, got {t_phi}")));
    }
    let x = tau / t_phi;
    let value = match protocol {
        Protocol::SpinEcho => chi_ratio(x) / (t_phi * t_phi),
        Protocol::FreeEvolution { omega } => {
            if tau == 0.0 {
                0.0
            } else {
                let c2 = (omega * tau).cos().powi(2);
                (x * x / (t_phi * t_phi)) * c2 / ((2.0 * x).exp() - c2)
            }
        }
    };
    FisherValue::new(value)
}

/// Evolution time maximizing the per-measurement CFI for an estimated
/// dephasing time, following the 0.8 T rule.
///
/// Free evolution is restricted to the lattice n pi/omega (n >= 1) closest
/// to 0.8 T.
pub fn optimal_tau(protocol: &Protocol, t_est: f64) -> Result<f64> {
    if !(t_est > 0.0 && t_est.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "estimated dephasing time must be > 0, got {t_est}"
        )));
    }
    Ok(match protocol {
        Protocol::SpinEcho => 0.8 * t_est,
        Protocol::FreeEvolution { omega } => {
            let half_period = std::f64::consts::PI / omega;
            let n = (0.8 * t_est / half_period).round().max(1.0);
            n * half_period
        }
    })
}

/// Exact maximizer of x^2/(e^{2x} - 1), i.e. the optimal tau/T_phi ratio
/// before rounding to 0.8 (~0.79681).
pub fn optimal_tau_ratio_exact() -> f64 {
    golden_max(chi_ratio, 0.5, 1.2, 1e-12).0
}
