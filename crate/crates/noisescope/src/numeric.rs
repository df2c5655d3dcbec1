//! Small numerical primitives shared across the crate.

/// x + e^{-x} - 1, stable for small x.
///
/// The naive form loses all significant digits for x << 1 because the
/// leading terms cancel; the result is O(x^2).
pub fn x_plus_expm1_neg(x: f64) -> f64 {
    if x < 1e-4 {
        // x + e^{-x} - 1 = x^2/2 - x^3/6 + x^4/24 - ...
        x * x * (0.5 - x / 6.0 + x * x / 24.0)
    } else {
        x + (-x).exp_m1()
    }
}

/// chi^2 / (e^{2 chi} - 1) with the analytic chi -> 0 limit.
pub fn chi_ratio(chi: f64) -> f64 {
    if chi < 1e-6 {
        // chi^2/(2chi + 2chi^2 + ...) = (chi/2)(1 - chi + ...)
        0.5 * chi * (1.0 - chi)
    } else {
        chi * chi / (2.0 * chi).exp_m1()
    }
}

/// Golden-section search for the minimum of a unimodal function on [a, b].
///
/// Returns (argmin, min value).
pub fn golden_min(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    (x, fx)
}

/// Golden-section search for the maximum of a unimodal function on [a, b].
pub fn golden_max(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> (f64, f64) {
    let (x, fx) = golden_min(|t| -f(t), a, b, tol);
    (x, -fx)
}

/// Composite Simpson quadrature with n (even) panels.
pub fn simpson(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = if n % 2 == 0 { n } else { n + 1 };
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + k as f64 * h);
    }
    sum * h / 3.0
}

/// 16-point Gauss-Legendre nodes and weights on [-1, 1].
const GL16_NODES: [f64; 8] = [
    0.095_012_509_837_637_44,
    0.281_603_550_779_258_9,
    0.458_016_777_657_227_4,
    0.617_876_244_402_643_7,
    0.755_404_408_355_003,
    0.865_631_202_387_831_7,
    0.944_575_023_073_232_6,
    0.989_400_934_991_649_9,
];
const GL16_WEIGHTS: [f64; 8] = [
    0.189_450_610_455_068_5,
    0.182_603_415_044_923_6,
    0.169_156_519_395_002_54,
    0.149_595_988_816_576_73,
    0.124_628_971_255_533_87,
    0.095_158_511_682_492_78,
    0.062_253_523_938_647_89,
    0.027_152_459_411_754_095,
];

/// 16-point Gauss-Legendre quadrature on [a, b].
pub fn gauss16(mut f: impl FnMut(f64) -> f64, a: f64, b: f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut sum = 0.0;
    for i in 0..8 {
        let dx = half * GL16_NODES[i];
        sum += GL16_WEIGHTS[i] * (f(mid - dx) + f(mid + dx));
    }
    sum * half
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn stable_expm1_matches_series_and_naive() {
        // naive region
        assert_relative_eq!(x_plus_expm1_neg(1.0), 1.0 + (-1.0f64).exp() - 1.0, max_relative = 1e-15);
        // series region: compare against the quadratic leading term
        let x = 1e-6;
        assert_relative_eq!(x_plus_expm1_neg(x), x * x / 2.0, max_relative = 1e-6);
    }

    #[test]
    fn chi_ratio_limit() {
        assert_eq!(chi_ratio(0.0), 0.0);
        assert_relative_eq!(chi_ratio(1e-7), 0.5e-7, max_relative = 1e-6);
        assert_relative_eq!(chi_ratio(1.0), 1.0 / (2.0f64.exp() - 1.0), max_relative = 1e-14);
    }

    #[test]
    fn golden_finds_parabola_min() {
        let (x, fx) = golden_min(|t| (t - 0.3) * (t - 0.3) + 1.0, -1.0, 2.0, 1e-12);
        // argmin accuracy is limited to ~sqrt(eps) by the flat minimum
        assert_relative_eq!(x, 0.3, epsilon = 1e-7);
        assert_relative_eq!(fx, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn quadrature_on_exponential() {
        let exact = 1.0 - (-2.0f64).exp();
        assert_relative_eq!(simpson(|x| (-x).exp(), 0.0, 2.0, 200), exact, max_relative = 1e-10);
        assert_relative_eq!(gauss16(|x| (-x).exp(), 0.0, 2.0), exact, max_relative = 1e-14);
    }
}
