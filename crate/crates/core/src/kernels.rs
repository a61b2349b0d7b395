//! Correlation kernels and spectral densities for the process families in
//! play, plus the leadership constants `d_H` and `d_0` computed by three
//! independent routes (closed form, time-domain quadrature, spectral).

use crate::special::{
    integrate_semi_infinite, log_gamma, log_gamma_real, QuadratureResult, SpecialError,
};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;
use std::sync::{Mutex, OnceLock};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("self-similarity index H must lie in (0,1), got {0}")]
    InvalidIndex(f64),
    #[error("kernel is not stationary: {0}")]
    NotStationary(String),
    #[error("invalid correlation table: {0}")]
    InvalidTable(String),
    #[error("reading correlation table: {0}")]
    TableIo(#[from] std::io::Error),
    #[error(transparent)]
    Special(#[from] SpecialError),
}

/// A process family descriptor with its correlation structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelSpec {
    /// Fractional Brownian motion with index H: E(B(t)-B(s))^2 = |t-s|^{2H}.
    Fbm { h: f64 },
    /// The stationary Lamperti transform of FBM with index H, unit variance.
    LampertiFbm { h: f64 },
    /// A stationary correlation tabulated on a uniform lag grid, interpolated
    /// linearly between samples and extrapolated as zero past the last one.
    TabulatedStationary { step: f64, values: Vec<f64> },
}

impl KernelSpec {
    pub fn fbm(h: f64) -> Result<Self, KernelError> {
        check_index(h)?;
        Ok(KernelSpec::Fbm { h })
    }

    pub fn lamperti_fbm(h: f64) -> Result<Self, KernelError> {
        check_index(h)?;
        Ok(KernelSpec::LampertiFbm { h })
    }

    pub fn tabulated(step: f64, values: Vec<f64>) -> Result<Self, KernelError> {
        if !(step > 0.0) {
            return Err(KernelError::InvalidTable(format!(
                "lag step must be positive, got {step}"
            )));
        }
        if values.len() < 2 {
            return Err(KernelError::InvalidTable(
                "need at least two correlation samples".into(),
            ));
        }
        if (values[0] - 1.0).abs() > 1e-12 {
            return Err(KernelError::InvalidTable(format!(
                "r(0) must equal 1, got {}",
                values[0]
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || v.abs() > 1.0 + 1e-12) {
            return Err(KernelError::InvalidTable(format!(
                "correlation values must satisfy |r| <= 1, got {bad}"
            )));
        }
        Ok(KernelSpec::TabulatedStationary { step, values })
    }

    /// Load a tabulated stationary kernel from a two-column text file
    /// (lag, correlation). An optional single header line is skipped; lags
    /// must start at 0 and be strictly increasing with uniform spacing.
    pub fn tabulated_from_file<P: AsRef<Path>>(path: P) -> Result<Self, KernelError> {
        let text = std::fs::read_to_string(path)?;
        let mut lags = Vec::new();
        let mut vals = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let a = it.next().map(str::parse::<f64>);
            let b = it.next().map(str::parse::<f64>);
            match (a, b) {
                (Some(Ok(lag)), Some(Ok(r))) => {
                    lags.push(lag);
                    vals.push(r);
                }
                _ if lags.is_empty() && lineno == 0 => continue, // header line
                _ => {
                    return Err(KernelError::InvalidTable(format!(
                        "line {}: expected two numeric columns, got {line:?}",
                        lineno + 1
                    )))
                }
            }
        }
        if lags.len() < 2 {
            return Err(KernelError::InvalidTable(
                "table needs at least two rows".into(),
            ));
        }
        if lags[0].abs() > 1e-12 {
            return Err(KernelError::InvalidTable(format!(
                "first lag must be 0, got {}",
                lags[0]
            )));
        }
        let step = lags[1] - lags[0];
        if !(step > 0.0) {
            return Err(KernelError::InvalidTable(
                "lags must be strictly increasing".into(),
            ));
        }
        for i in 1..lags.len() {
            let d = lags[i] - lags[i - 1];
            if d <= 0.0 {
                return Err(KernelError::InvalidTable(format!(
                    "lags must be strictly increasing (row {})",
                    i + 1
                )));
            }
            if (d - step).abs() > 1e-9 * step.max(1.0) {
                return Err(KernelError::InvalidTable(format!(
                    "lag spacing must be uniform: step {step} vs {d} at row {}",
                    i + 1
                )));
            }
        }
        Self::tabulated(step, vals)
    }

    pub fn is_stationary(&self) -> bool {
        !matches!(self, KernelSpec::Fbm { .. })
    }

    /// Self-similarity index, where the family has one.
    pub fn index(&self) -> Option<f64> {
        match self {
            KernelSpec::Fbm { h } | KernelSpec::LampertiFbm { h } => Some(*h),
            KernelSpec::TabulatedStationary { .. } => None,
        }
    }

    /// Short human-readable tag used in CSV output.
    pub fn tag(&self) -> String {
        match self {
            KernelSpec::Fbm { h } => format!("fbm(h={h})"),
            KernelSpec::LampertiFbm { h } => format!("lamperti_fbm(h={h})"),
            KernelSpec::TabulatedStationary { step, values } => {
                format!("tabulated(step={step},len={})", values.len())
            }
        }
    }

    /// Stationary correlation r(tau); error for non-stationary families.
    pub fn correlation(&self, tau: f64) -> Result<f64, KernelError> {
        match self {
            KernelSpec::Fbm { .. } => Err(KernelError::NotStationary(self.tag())),
            KernelSpec::LampertiFbm { h } => Ok(lamperti_corr(tau, *h)?),
            KernelSpec::TabulatedStationary { step, values } => {
                let t = tau.abs() / step;
                let last = (values.len() - 1) as f64;
                if t >= last {
                    // zero extrapolation past the last sample
                    return Ok(if t == last { values[values.len() - 1] } else { 0.0 });
                }
                let i = t.floor() as usize;
                let w = t - i as f64;
                Ok(values[i] * (1.0 - w) + values[i + 1] * w)
            }
        }
    }
}

fn check_index(h: f64) -> Result<(), KernelError> {
    if h.is_finite() && h > 0.0 && h < 1.0 {
        Ok(())
    } else {
        Err(KernelError::InvalidIndex(h))
    }
}

/// FBM covariance E[B_H(s) B_H(t)] = (s^{2H} + t^{2H} - |t-s|^{2H}) / 2.
pub fn fbm_cov(s: f64, t: f64, h: f64) -> Result<f64, KernelError> {
    check_index(h)?;
    if s < 0.0 || t < 0.0 {
        return Err(KernelError::NotStationary(format!(
            "fbm_cov needs s, t >= 0, got ({s}, {t})"
        )));
    }
    Ok(0.5 * (s.powf(2.0 * h) + t.powf(2.0 * h) - (t - s).abs().powf(2.0 * h)))
}

/// Correlation of the Lamperti transform of FBM:
/// r_H(tau) = [e^{tau H} + e^{-tau H} - (e^{tau/2} - e^{-tau/2})^{2H}] / 2.
///
/// Evaluated in the cancellation-free form
/// r_H = [e^{-tau H} - e^{tau H} expm1(2H ln1p(-e^{-tau}))] / 2,
/// which stays accurate at large lags where the textbook form loses every
/// significant digit.
pub fn lamperti_corr(tau: f64, h: f64) -> Result<f64, KernelError> {
    check_index(h)?;
    let t = tau.abs();
    if t == 0.0 {
        return Ok(1.0);
    }
    if t > 600.0 {
        // r = e^{-tH}/2 + H e^{-t(1-H)} + O(e^{-t(2-H)}); both terms below 1e-130 here
        return Ok(0.5 * (-t * h).exp() + h * (-t * (1.0 - h)).exp());
    }
    let inner = 2.0 * h * (-(-t).exp()).ln_1p();
    Ok(0.5 * ((-t * h).exp() - (t * h).exp() * inner.exp_m1()))
}

/// ln[cosh(pi lambda) |Gamma(-H + i lambda)|^2], stable for all lambda.
///
/// For |lambda| > 32 the exponentially large pieces of the two factors are
/// cancelled symbolically via the Stirling series; computing them separately
/// would lose all precision beyond lambda ~ 1e12.
pub fn log_spectral_weight(h: f64, lambda: f64) -> Result<f64, KernelError> {
    check_index(h)?;
    let lam = lambda.abs();
    if lam <= 32.0 {
        let lc = std::f64::consts::PI * lam
            + (-2.0 * std::f64::consts::PI * lam).exp().ln_1p()
            - std::f64::consts::LN_2;
        let lg = log_gamma(Complex64::new(-h, lam))?;
        Ok(lc + 2.0 * lg.re)
    } else {
        let z = Complex64::new(-h, lam);
        let az = z.norm();
        let zi = 1.0 / z;
        let zi2 = zi * zi;
        // Stirling correction series B_2/(2z) - B_4/(4*3 z^3) + ...
        let series = (zi * (1.0 / 12.0
            + zi2 * (-1.0 / 360.0 + zi2 * (1.0 / 1260.0 + zi2 * (-1.0 / 1680.0)))))
        .re;
        // Re lnGamma(-H+i lam) = (-H-1/2) ln|z| - lam (pi/2 + atan(H/lam)) + H
        //                        + ln(2 pi)/2 + series;
        // ln cosh(pi lam) = pi lam - ln 2 + ln1p(e^{-2 pi lam});
        // the +/- pi*lam cancel exactly below.
        let re_lg_rest = (-h - 0.5) * az.ln() - lam * f64::atan2(h, lam)
            + h
            + 0.5 * (2.0 * std::f64::consts::PI).ln()
            + series;
        Ok(-std::f64::consts::LN_2
            + (-2.0 * std::f64::consts::PI * lam).exp().ln_1p()
            + 2.0 * re_lg_rest)
    }
}

static CH_CACHE: OnceLock<Mutex<HashMap<u64, f64>>> = OnceLock::new();

/// Normalization constant c_H with int_R f_H = 1, cached per H.
///
/// The fill is idempotent: concurrent first calls compute the same value and
/// the last insert wins harmlessly.
pub fn lamperti_spectral_normalization(h: f64) -> Result<f64, KernelError> {
    check_index(h)?;
    let key = h.to_bits();
    let cache = CH_CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(&c) = cache.lock().unwrap().get(&key) {
        return Ok(c);
    }
    let w0 = log_spectral_weight(h, 0.0)?.exp();
    let tol = 1e-9 * w0.max(1.0);
    let q = integrate_semi_infinite(|lam| log_spectral_weight(h, lam).map_or(f64::NAN, f64::exp), tol)?;
    let c = 1.0 / (2.0 * q.value);
    cache.lock().unwrap().insert(key, c);
    Ok(c)
}

/// Spectral density f_H(lambda) = c_H cosh(pi lambda) |Gamma(-H+i lambda)|^2
/// of the Lamperti transform of FBM, normalized to unit variance.
pub fn lamperti_spectral_density(lambda: f64, h: f64) -> Result<f64, KernelError> {
    let c = lamperti_spectral_normalization(h)?;
    Ok(c * log_spectral_weight(h, lambda)?.exp())
}

/// Which route produced a leadership constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DSource {
    ClosedForm,
    Quadrature,
    Spectral,
}

/// The leadership constant d: the full-line integral of the leader's
/// stationary correlation, equal to 2 pi times its spectral density at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeadershipConstant {
    pub d: f64,
    pub source: DSource,
}

/// d_H = 2 Gamma(1-H) Gamma(2H) / Gamma(1+H).
pub fn d_closed_form(h: f64) -> Result<LeadershipConstant, KernelError> {
    check_index(h)?;
    let lg = log_gamma_real(1.0 - h)? + log_gamma_real(2.0 * h)? - log_gamma_real(1.0 + h)?;
    Ok(LeadershipConstant {
        d: 2.0 * lg.exp(),
        source: DSource::ClosedForm,
    })
}

/// d = int_R r(t) dt = 2 int_0^inf r(t) dt for an even stationary correlation.
pub fn d_quadrature(kernel: &KernelSpec) -> Result<LeadershipConstant, KernelError> {
    match kernel {
        KernelSpec::Fbm { .. } => Err(KernelError::NotStationary(kernel.tag())),
        KernelSpec::LampertiFbm { h } => {
            let h = *h;
            let q: QuadratureResult =
                integrate_semi_infinite(move |t| lamperti_corr(t, h).unwrap_or(f64::NAN), 1e-10)?;
            Ok(LeadershipConstant {
                d: 2.0 * q.value,
                source: DSource::Quadrature,
            })
        }
        KernelSpec::TabulatedStationary { step, values } => {
            // the kernel is, by definition, the piecewise-linear interpolant
            // with zero tail, so the trapezoid rule integrates it exactly;
            // whatever true tail the table cut off is bounded by |r_last|*step
            // per retained decay step and is the caller's responsibility
            let half: f64 = values.windows(2).map(|w| 0.5 * (w[0] + w[1]) * step).sum();
            Ok(LeadershipConstant {
                d: 2.0 * half,
                source: DSource::Quadrature,
            })
        }
    }
}

/// 2 pi f_H(0) with f_H normalized to unit variance: the spectral route to d.
pub fn d_spectral(h: f64) -> Result<LeadershipConstant, KernelError> {
    Ok(LeadershipConstant {
        d: 2.0 * std::f64::consts::PI * lamperti_spectral_density(0.0, h)?,
        source: DSource::Spectral,
    })
}

/// Stationary kernel of the scaled heterogeneous pursuer t^{H-H_i} B_{H_i}(t):
/// its Lamperti transform is the Lamperti-FBM kernel of index H_i, unit
/// variance regardless of the leader's index.
pub fn hetero_pursuer_kernel(h_leader: f64, h_i: f64) -> Result<KernelSpec, KernelError> {
    check_index(h_leader)?;
    KernelSpec::lamperti_fbm(h_i)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(actual: f64, expected: f64, rel: f64, what: &str) {
        let scale = expected.abs().max(1e-300);
        assert!(
            (actual - expected).abs() <= rel * scale,
            "{what}: got {actual:.17e}, want {expected:.17e} (rel {:.2e})",
            (actual - expected).abs() / scale
        );
    }

    #[test]
    fn fbm_cov_examples() {
        assert_close(fbm_cov(1.0, 1.0, 0.5).unwrap(), 1.0, 1e-15, "BM var at 1");
        assert_close(fbm_cov(1.0, 2.0, 0.5).unwrap(), 1.0, 1e-15, "BM independent increments");
        // (1 + 2^{1.5} - 1)/2 = 2^{0.5}
        assert_close(fbm_cov(1.0, 2.0, 0.75).unwrap(), std::f64::consts::SQRT_2, 1e-14, "H=0.75 cov");
        // symmetry
        assert_close(
            fbm_cov(0.7, 2.3, 0.3).unwrap(),
            fbm_cov(2.3, 0.7, 0.3).unwrap(),
            1e-15,
            "symmetry",
        );
        assert!(fbm_cov(-1.0, 1.0, 0.5).is_err());
        assert!(fbm_cov(1.0, 1.0, 1.5).is_err());
    }

    #[test]
    fn lamperti_corr_examples() {
        for h in [0.2f64, 0.5, 0.8] {
            assert_close(lamperti_corr(0.0, h).unwrap(), 1.0, 1e-15, "unit variance");
        }
        // H = 1/2 collapses to e^{-tau/2}
        for tau in [0.1, 1.3, 7.0, 40.0] {
            assert_close(
                lamperti_corr(tau, 0.5).unwrap(),
                (-tau / 2.0).exp(),
                1e-13,
                "OU at H=1/2",
            );
        }
        // oracle spot values (mpmath)
        assert_close(lamperti_corr(0.5, 0.3).unwrap(), 0.679_330_249_522_566_07, 1e-13, "r_0.3(0.5)");
        assert_close(lamperti_corr(1.0, 0.75).unwrap(), 0.762_708_878_049_244_13, 1e-13, "r_0.75(1)");
        assert_close(lamperti_corr(2.0, 0.6).unwrap(), 0.416_405_520_324_349, 1e-13, "r_0.6(2)");
        // small-tau expansion 1 - r = tau^{2H}/2 + O(tau^2)
        for h in [0.3f64, 0.6, 0.9] {
            let tau = 1e-4f64;
            let lhs = 1.0 - lamperti_corr(tau, h).unwrap();
            let lead = 0.5 * tau.powf(2.0 * h);
            assert!(
                (lhs - lead).abs() <= 1.0 * tau * tau + 1e-12 * lead,
                "small-tau expansion at H={h}: lhs={lhs:e} lead={lead:e}"
            );
        }
    }

    #[test]
    fn lamperti_corr_positive_and_decaying() {
        for h in [0.1, 0.4, 0.5, 0.7, 0.95] {
            let mut prev = 1.0;
            let mut tau = 0.25;
            while tau <= 60.0 {
                let r = lamperti_corr(tau, h).unwrap();
                assert!(r > 0.0, "positivity at tau={tau}, H={h}");
                assert!(r < prev, "monotone decay at tau={tau}, H={h}");
                prev = r;
                tau += 0.25;
            }
        }
    }

    #[test]
    fn lamperti_large_lag_asymptotics() {
        // r_H(tau) e^{tau min(H, 1-H)} stays bounded on [5, 50]
        for h in [0.2f64, 0.5, 0.8] {
            let rate = h.min(1.0 - h);
            let mut tau = 5.0;
            while tau <= 50.0 {
                let v = lamperti_corr(tau, h).unwrap() * (tau * rate).exp();
                assert!(v > 0.0 && v < 2.0, "H={h} tau={tau}: {v}");
                tau += 2.5;
            }
        }
    }

    #[test]
    fn lamperti_consistency_with_fbm_cov() {
        // r_H(tau) = e^{-tau H} Cov(B_H(e^tau), B_H(1)); direct evaluation of
        // the right side is well conditioned only for moderate tau
        for &(tau, h) in &[(0.3, 0.2), (1.0, 0.5), (2.5, 0.7), (6.0, 0.35), (8.0, 0.9)] {
            let lhs = lamperti_corr(tau, h).unwrap();
            let rhs = (-tau * h).exp() * fbm_cov(tau.exp(), 1.0, h).unwrap();
            assert_close(lhs, rhs, 1e-9, "Lamperti consistency");
        }
    }

    #[test]
    fn d_closed_form_values() {
        assert_close(d_closed_form(0.5).unwrap().d, 4.0, 1e-13, "d_{1/2}");
        // oracle: mpmath 2 Gamma(1-H) Gamma(2H) / Gamma(1+H)
        assert_close(d_closed_form(0.75).unwrap().d, 6.992_153_478_112_319_5, 1e-12, "d_{3/4}");
        assert_close(d_closed_form(0.1).unwrap().d, 10.313_561_544_229_212, 1e-12, "d_{0.1}");
        assert_close(d_closed_form(0.9).unwrap().d, 18.425_954_388_633_123, 1e-12, "d_{0.9}");
        for h in [0.45, 0.5, 0.55] {
            assert!(d_closed_form(h).unwrap().d > 0.0);
        }
    }

    #[test]
    fn d_quadrature_matches_closed_form() {
        for h in [0.1, 0.3, 0.5, 0.75, 0.9] {
            let k = KernelSpec::lamperti_fbm(h).unwrap();
            let dq = d_quadrature(&k).unwrap();
            let dc = d_closed_form(h).unwrap();
            assert_close(dq.d, dc.d, 1e-7, "quadrature route");
            assert_eq!(dq.source, DSource::Quadrature);
        }
    }

    #[test]
    fn d_quadrature_tabulated_exponential() {
        // r(t) = e^{-|t|} tabulated densely out to t = 40: integral 2
        let step = 0.005;
        let values: Vec<f64> = (0..8001).map(|k| (-(k as f64) * step).exp()).collect();
        let k = KernelSpec::tabulated(step, values).unwrap();
        assert_close(d_quadrature(&k).unwrap().d, 2.0, 1e-5, "tabulated e^{-|t|}");
    }

    #[test]
    fn spectral_normalization_oracle_values() {
        // oracle: stable log-weight + log-grid trapezoid with analytic tail
        for (h, want) in [
            (0.1, 1.437_391_680_431_20e-2),
            (0.3, 3.662_097_653_219_91e-2),
            (0.5, 5.066_059_182_116_89e-2), // exactly 1/(2 pi^2)
            (0.7, 5.091_065_805_458_57e-2),
            (0.9, 2.624_543_615_320_51e-2),
        ] {
            let c = lamperti_spectral_normalization(h).unwrap();
            assert_close(c, want, 1e-6, "c_H");
        }
    }

    #[test]
    fn spectral_route_agreement() {
        // closed form, quadrature, and 2 pi f_H(0) agree to 1e-4 relative
        for i in 1..=9 {
            let h = i as f64 / 10.0;
            let dc = d_closed_form(h).unwrap().d;
            let dq = d_quadrature(&KernelSpec::lamperti_fbm(h).unwrap()).unwrap().d;
            let ds = d_spectral(h).unwrap().d;
            assert_close(dq, dc, 1e-6, "quadrature vs closed");
            assert_close(ds, dc, 1e-4, "spectral vs closed");
        }
    }

    #[test]
    fn spectral_density_shape() {
        for h in [0.3, 0.5] {
            let f0 = lamperti_spectral_density(0.0, h).unwrap();
            let mut lam = 0.0;
            while lam <= 20.0 {
                let f = lamperti_spectral_density(lam, h).unwrap();
                assert!(f > 0.0);
                assert!(f <= f0 * (1.0 + 1e-12), "f({lam}) <= f(0) at H={h}");
                assert_close(
                    f,
                    lamperti_spectral_density(-lam, h).unwrap(),
                    1e-12,
                    "even in lambda",
                );
                lam += 0.37;
            }
        }
    }

    #[test]
    fn hetero_pursuer_maps_to_lamperti() {
        let k = hetero_pursuer_kernel(0.5, 0.5).unwrap();
        assert_eq!(k, KernelSpec::lamperti_fbm(0.5).unwrap());
        let k = hetero_pursuer_kernel(0.3, 0.8).unwrap();
        assert_eq!(k, KernelSpec::lamperti_fbm(0.8).unwrap());
        // unit variance at tau = 0 irrespective of the leader index
        assert_close(k.correlation(0.0).unwrap(), 1.0, 1e-15, "unit variance");
        assert!(hetero_pursuer_kernel(1.2, 0.5).is_err());
    }

    #[test]
    fn positive_definiteness_proxy() {
        // the Gram matrix of r_H on a scattered grid must be (numerically) PSD
        fn cholesky_ok(a: &[Vec<f64>]) -> bool {
            let n = a.len();
            let mut l = vec![vec![0.0f64; n]; n];
            for i in 0..n {
                for j in 0..=i {
                    let mut s = a[i][j];
                    for k in 0..j {
                        s -= l[i][k] * l[j][k];
                    }
                    if i == j {
                        if s <= 0.0 {
                            return false;
                        }
                        l[i][j] = s.sqrt();
                    } else {
                        l[i][j] = s / l[j][j];
                    }
                }
            }
            true
        }
        let taus: Vec<f64> = (0..24).map(|i| 0.13 * (i as f64) * (i as f64).sqrt()).collect();
        for h in [0.2, 0.5, 0.85] {
            let n = taus.len();
            let mut norm: f64 = 0.0;
            let mut a = vec![vec![0.0f64; n]; n];
            for i in 0..n {
                let mut row: f64 = 0.0;
                for j in 0..n {
                    a[i][j] = lamperti_corr((taus[i] - taus[j]).abs(), h).unwrap();
                    row += a[i][j].abs();
                }
                norm = norm.max(row);
            }
            let eps = 1e-8 * norm;
            for i in 0..n {
                a[i][i] += eps;
            }
            assert!(cholesky_ok(&a), "Gram matrix + 1e-8*norm not PSD at H={h}");
        }
    }

    #[test]
    fn tabulated_interpolation_and_tail() {
        let k = KernelSpec::tabulated(0.5, vec![1.0, 0.5, 0.25]).unwrap();
        assert_close(k.correlation(0.0).unwrap(), 1.0, 1e-15, "r(0)");
        assert_close(k.correlation(0.25).unwrap(), 0.75, 1e-15, "midpoint");
        assert_close(k.correlation(0.75).unwrap(), 0.375, 1e-15, "second segment");
        assert_close(k.correlation(-0.25).unwrap(), 0.75, 1e-15, "even");
        assert_close(k.correlation(1.0).unwrap(), 0.25, 1e-15, "last sample");
        // zero extrapolation past the last sample
        assert_close(k.correlation(1.25).unwrap(), 0.0, 1e-15, "zero tail");
        assert_close(k.correlation(10.0).unwrap(), 0.0, 1e-15, "zero tail far");
    }

    #[test]
    fn tabulated_file_validation() {
        let dir = std::env::temp_dir().join("leadlab-kernel-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let good = dir.join("good.txt");
        std::fs::write(&good, "lag corr\n0 1\n0.5 0.6\n1.0 0.3\n").unwrap();
        let k = KernelSpec::tabulated_from_file(&good).unwrap();
        assert_close(k.correlation(0.5).unwrap(), 0.6, 1e-15, "loaded value");

        let bad = dir.join("bad.txt");
        std::fs::write(&bad, "0 1\n1.0 0.6\n1.5 0.3\n").unwrap(); // non-uniform
        assert!(matches!(
            KernelSpec::tabulated_from_file(&bad),
            Err(KernelError::InvalidTable(_))
        ));

        let decreasing = dir.join("dec.txt");
        std::fs::write(&decreasing, "0 1\n1.0 0.6\n0.5 0.3\n").unwrap();
        assert!(KernelSpec::tabulated_from_file(&decreasing).is_err());
    }
}
