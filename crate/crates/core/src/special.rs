//! Numeric primitives: log-Gamma on the real line and the complex strip,
//! the Gaussian tail, and adaptive quadrature on `[a, b]` and `(0, inf)`.
//!
//! Everything here is a pure function; safe to call from any number of
//! threads.

use num_complex::Complex64;
use std::collections::BinaryHeap;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SpecialError {
    /// `z` is within the pole-proximity tolerance of a non-positive integer.
    #[error("argument {0} is within {POLE_TOLERANCE:e} of a Gamma pole")]
    NearPole(Complex64),
    /// The adaptive scheme could not reach the requested tolerance.
    #[error("quadrature did not converge: error estimate {achieved:e} after {evaluations} evaluations (tol {tol:e})")]
    NonConvergence {
        achieved: f64,
        tol: f64,
        evaluations: u64,
    },
    #[error("domain error: {0}")]
    Domain(String),
}

/// Distance below which an argument counts as sitting on a Gamma pole.
pub const POLE_TOLERANCE: f64 = 1e-8;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_74;
const SQRT_2: f64 = std::f64::consts::SQRT_2;

// Lanczos coefficients, g = 7, n = 9 (the GSL set).
const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// sin(pi x) with argument reduction, accurate for large |x|.
fn sin_pi(x: f64) -> f64 {
    let r = x - x.round();
    let s = (std::f64::consts::PI * r).sin();
    if (x.round() as i64) % 2 == 0 {
        s
    } else {
        -s
    }
}

fn cos_pi(x: f64) -> f64 {
    let r = x - x.round();
    let c = (std::f64::consts::PI * r).cos();
    if (x.round() as i64) % 2 == 0 {
        c
    } else {
        -c
    }
}

/// A logarithm of sin(pi z), stable for large |Im z|.
///
/// `exp` of the result equals sin(pi z); the imaginary part is not
/// guaranteed to be the principal branch.
fn log_sin_pi(z: Complex64) -> Complex64 {
    let (x, y) = (z.re, z.im);
    let ay = y.abs();
    if ay < 20.0 {
        // cosh(20 pi) is far below overflow.
        let s = Complex64::new(
            sin_pi(x) * (std::f64::consts::PI * y).cosh(),
            cos_pi(x) * (std::f64::consts::PI * y).sinh(),
        );
        s.ln()
    } else {
        // |sin(pi z)|^2 = sin^2(pi x) + sinh^2(pi y)
        //              = e^{2 pi |y|}/4 * [(1-u)^2 + 4 u sin^2(pi x)], u = e^{-2 pi |y|}
        let u = (-2.0 * std::f64::consts::PI * ay).exp();
        let re = std::f64::consts::PI * ay - std::f64::consts::LN_2
            + 0.5 * ((1.0 - u) * (1.0 - u) + 4.0 * u * sin_pi(x) * sin_pi(x)).ln();
        let im = f64::atan2(cos_pi(x) * y.signum() * (1.0 - u), sin_pi(x) * (1.0 + u));
        Complex64::new(re, im)
    }
}

fn log_gamma_lanczos(z: Complex64) -> Complex64 {
    let zm1 = z - 1.0;
    let mut acc = Complex64::new(LANCZOS[0], 0.0);
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (zm1 + i as f64);
    }
    let t = zm1 + LANCZOS_G + 0.5;
    LN_SQRT_2PI + (zm1 + 0.5) * t.ln() - t + acc.ln()
}

/// Branch-consistent log Gamma on the complex plane minus the poles.
///
/// Uses the Lanczos approximation for `Re z >= 0.5` and the reflection
/// formula elsewhere, which covers the strip `-1 < Re z < 0` needed by the
/// Lamperti spectral density. `exp(log_gamma(z))` equals `Gamma(z)`;
/// the imaginary part may differ from the principal branch by `2 pi k`.
pub fn log_gamma(z: Complex64) -> Result<Complex64, SpecialError> {
    if z.re <= 0.5 {
        let nearest = z.re.round().min(0.0);
        let dist = ((z.re - nearest).powi(2) + z.im * z.im).sqrt();
        if dist < POLE_TOLERANCE {
            return Err(SpecialError::NearPole(z));
        }
        // Gamma(z) Gamma(1-z) = pi / sin(pi z)
        let lg = std::f64::consts::PI.ln() - log_sin_pi(z) - log_gamma_lanczos(Complex64::new(1.0, 0.0) - z);
        Ok(lg)
    } else {
        Ok(log_gamma_lanczos(z))
    }
}

/// log Gamma(x) for real x > 0.
pub fn log_gamma_real(x: f64) -> Result<f64, SpecialError> {
    if !(x > 0.0) {
        return Err(SpecialError::Domain(format!(
            "log_gamma_real requires x > 0, got {x}"
        )));
    }
    if x < 0.5 {
        // Gamma(x) = Gamma(x+1)/x
        Ok(log_gamma_lanczos(Complex64::new(x + 1.0, 0.0)).re - x.ln())
    } else {
        Ok(log_gamma_lanczos(Complex64::new(x, 0.0)).re)
    }
}

/// |Gamma(-H + i lambda)|^2; even in lambda, strictly positive for H in (0,1).
pub fn gamma_strip_abs_sq(h: f64, lambda: f64) -> Result<f64, SpecialError> {
    let lg = log_gamma(Complex64::new(-h, lambda))?;
    Ok((2.0 * lg.re).exp())
}

// ---------------------------------------------------------------------------
// Gaussian tail
// ---------------------------------------------------------------------------

/// erf by its confluent power series; all terms positive, used for |t| <= 2.
fn erf_series(t: f64) -> f64 {
    // erf(t) = 2/sqrt(pi) e^{-t^2} sum_{k>=0} t^{2k+1} 2^k / (1*3*...*(2k+1))
    let t2 = t * t;
    let mut term = t;
    let mut sum = t;
    let mut k = 0u32;
    loop {
        k += 1;
        term *= 2.0 * t2 / (2.0 * k as f64 + 1.0);
        sum += term;
        if term.abs() < 1e-18 * sum.abs() || k > 200 {
            break;
        }
    }
    (2.0 / std::f64::consts::PI.sqrt()) * (-t2).exp() * sum
}

/// Scaled complementary error function erfcx(t) = e^{t^2} erfc(t) for t > 0,
/// by the Laplace continued fraction (modified Lentz).
fn erfcx_cf(t: f64) -> f64 {
    // erfcx(t) = 1/sqrt(pi) * [1/(t + (1/2)/(t + 1/(t + (3/2)/(t + ...))))]
    // evaluated with the modified Lentz algorithm; partial numerators are
    // a_1 = 1, a_{n} = (n-1)/2 for n >= 2, all partial denominators are t.
    let tiny = 1e-300;
    let mut f = tiny;
    let mut c = tiny;
    let mut d = 0.0;
    for n in 1..300 {
        let a = if n == 1 { 1.0 } else { (n - 1) as f64 / 2.0 };
        d = t + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = t + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    f / std::f64::consts::PI.sqrt()
}

/// Complementary error function.
pub fn erfc(t: f64) -> f64 {
    if t < 0.0 {
        return 2.0 - erfc(-t);
    }
    if t <= 2.0 {
        1.0 - erf_series(t)
    } else {
        (-t * t).exp() * erfcx_cf(t)
    }
}

/// Scaled complementary error function e^{t^2} erfc(t).
pub fn erfcx(t: f64) -> f64 {
    if t < 0.0 {
        return 2.0 * (t * t).exp() - erfcx(-t);
    }
    if t <= 2.0 {
        (t * t).exp() * (1.0 - erf_series(t))
    } else {
        erfcx_cf(t)
    }
}

/// Upper Gaussian tail Psi(x) = 1 - Phi(x) = P(N(0,1) > x).
pub fn gaussian_tail(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// Standard Gaussian cdf Phi(x).
pub fn gaussian_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// e^{x^2/2} Psi(x): the Gaussian tail with the exponential factor removed,
/// finite far beyond the underflow point of Psi itself.
pub fn scaled_gaussian_tail(x: f64) -> f64 {
    0.5 * erfcx(x / SQRT_2)
}

/// Standard Gaussian density.
pub fn gaussian_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

/// Result of an adaptive quadrature, with the scheme's own error bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureResult {
    pub value: f64,
    pub abs_error_estimate: f64,
    pub evaluations: u64,
}

// Gauss-Kronrod 7-15 nodes and weights (QUADPACK dqk15).
const XGK: [f64; 8] = [
    0.991_455_371_120_813,
    0.949_107_912_342_759,
    0.864_864_423_359_769,
    0.741_531_185_599_394,
    0.586_087_235_467_691,
    0.405_845_151_377_397,
    0.207_784_955_007_898,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529,
    0.063_092_092_629_979,
    0.104_790_010_322_250,
    0.140_653_259_715_525,
    0.169_004_726_639_267,
    0.190_350_578_064_785,
    0.204_432_940_075_298,
    0.209_482_141_084_728,
];
const WG: [f64; 4] = [
    0.129_484_966_168_870,
    0.279_705_391_489_277,
    0.381_830_050_505_119,
    0.417_959_183_673_469,
];

/// One Gauss-Kronrod 7-15 panel: (value, |K15 - G7|).
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut resk = WGK[7] * fc;
    let mut resg = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let v = f(c - x) + f(c + x);
        resk += WGK[j] * v;
        if j % 2 == 1 {
            resg += WG[j / 2] * v;
        }
    }
    (resk * h, ((resk - resg) * h).abs())
}

#[derive(PartialEq)]
struct Segment {
    err: f64,
    a: f64,
    b: f64,
    value: f64,
}

impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err.partial_cmp(&other.err).unwrap_or(std::cmp::Ordering::Equal)
    }
}

/// Globally adaptive Gauss-Kronrod integration on a finite interval.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<QuadratureResult, SpecialError> {
    if !(tol > 0.0) {
        return Err(SpecialError::Domain(format!("tol must be > 0, got {tol}")));
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(SpecialError::Domain("bounds must be finite".into()));
    }
    let mut evals: u64 = 15;
    let (v, e) = gk15(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment { err: e, a, b, value: v });
    let mut total_err = e;
    const MAX_EVALS: u64 = 2_000_000;
    while total_err > tol {
        if evals >= MAX_EVALS || heap.len() > 100_000 {
            return Err(SpecialError::NonConvergence {
                achieved: total_err,
                tol,
                evaluations: evals,
            });
        }
        let worst = heap.pop().expect("heap cannot be empty while err > 0");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval no longer splittable in f64; keep as-is
            total_err -= worst.err;
            heap.push(Segment { err: 0.0, ..worst });
            continue;
        }
        let (v1, e1) = gk15(&f, worst.a, mid);
        let (v2, e2) = gk15(&f, mid, worst.b);
        evals += 30;
        total_err += e1 + e2 - worst.err;
        heap.push(Segment { err: e1, a: worst.a, b: mid, value: v1 });
        heap.push(Segment { err: e2, a: mid, b: worst.b, value: v2 });
    }
    let value: f64 = heap.iter().map(|s| s.value).sum();
    Ok(QuadratureResult {
        value,
        abs_error_estimate: total_err,
        evaluations: evals,
    })
}

/// Default tolerance for semi-infinite quadrature.
pub const DEFAULT_QUAD_TOL: f64 = 1e-10;

/// Adaptive quadrature of `f` over `(0, inf)`.
///
/// Interval-doubling: panels `[0,1], [1,2], [2,4], ...` are geometric, i.e.
/// uniform in the substituted variable `u = -ln t`; each panel is integrated
/// adaptively. The remaining tail is extrapolated geometrically once the
/// panel-mass ratio has stabilised (exact for exponential and power-law
/// decay), and its uncertainty is charged to the error estimate. Integrands
/// whose panel masses do not eventually decay produce `NonConvergence`,
/// never a silent value.
pub fn integrate_semi_infinite<F: Fn(f64) -> f64>(
    f: F,
    tol: f64,
) -> Result<QuadratureResult, SpecialError> {
    if !(tol > 0.0) {
        return Err(SpecialError::Domain(format!("tol must be > 0, got {tol}")));
    }
    let panel_tol = tol / 16.0;
    let mut value = 0.0;
    let mut err = 0.0;
    let mut evals: u64 = 0;
    let mut masses: Vec<f64> = Vec::new();

    let first = integrate_adaptive(&f, 0.0, 1.0, panel_tol)?;
    value += first.value;
    err += first.abs_error_estimate;
    evals += first.evaluations;

    const MAX_PANELS: u32 = 160;
    for k in 0..MAX_PANELS {
        let a = 2f64.powi(k as i32);
        let b = 2.0 * a;
        let p = integrate_adaptive(&f, a, b, panel_tol)?;
        value += p.value;
        err += p.abs_error_estimate;
        evals += p.evaluations;
        masses.push(p.value);

        if masses.len() >= 4 {
            let m = &masses[masses.len() - 4..];
            // ratios of consecutive signed panel masses
            if m.iter().all(|&x| x != 0.0) && m.iter().all(|&x| x.signum() == m[0].signum()) {
                let q: Vec<f64> = (1..4).map(|i| m[i] / m[i - 1]).collect();
                let qbar = (q[0] + q[1] + q[2]) / 3.0;
                let spread = q
                    .iter()
                    .cloned()
                    .fold(f64::NEG_INFINITY, f64::max)
                    - q.iter().cloned().fold(f64::INFINITY, f64::min);
                if qbar > 0.0 && qbar < 0.995 && spread < 0.02 * (1.0 - qbar) {
                    // geometric regime: extrapolate the remaining tail
                    let tail = m[3] * qbar / (1.0 - qbar);
                    let tail_err =
                        tail.abs() * (4.0 * spread / (1.0 - qbar) + 1e-12) + panel_tol;
                    if err + tail_err <= tol {
                        return Ok(QuadratureResult {
                            value: value + tail,
                            abs_error_estimate: err + tail_err,
                            evaluations: evals,
                        });
                    }
                }
            }
            // rapidly-decaying regime: the last panels are all below tolerance
            let small = m.iter().all(|&x| x.abs() <= tol / 4.0);
            let decreasing = m[3].abs() <= m[2].abs() && m[2].abs() <= m[1].abs();
            let halved = m[3].abs() <= 0.5 * m[0].abs();
            if small && decreasing && halved {
                let tail_err = m[3].abs();
                return Ok(QuadratureResult {
                    value,
                    abs_error_estimate: err + tail_err,
                    evaluations: evals,
                });
            }
        }
    }
    Err(SpecialError::NonConvergence {
        achieved: f64::INFINITY,
        tol,
        evaluations: evals,
    })
}
