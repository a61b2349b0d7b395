//! Leadership-exponent estimation: normalized log-survival ratios, power-law
//! fits over T-sweeps, and admissible-domain (T, n) sweeps compared against
//! the kernel prediction 1/d.

use crate::kernels::{d_closed_form, d_quadrature, KernelError, KernelSpec};
use crate::pursuit::{
    estimate_survival_prefixes, EnsembleConfig, Formulation, MCEstimate, PursuitError,
};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExponentError {
    #[error("zero survivors: the ratio only has a one-sided lower bound {lower_bound}")]
    ZeroSurvivors { lower_bound: f64 },
    #[error("invalid sweep plan: {0}")]
    InvalidPlan(String),
    #[error("invalid fit input: {0}")]
    InvalidFit(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Pursuit(#[from] PursuitError),
}

/// -ln p normalized by the formulation's scale, with a CI mapped through the
/// monotone transform of the estimate's score interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioEstimate {
    pub ratio: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// The normalizer of -ln p: T ln n for stationary ensembles, ln T ln n for
/// self-similar ones.
pub fn ratio_normalizer(t: f64, n: usize, formulation: Formulation) -> f64 {
    let lnn = (n as f64).ln();
    match formulation {
        Formulation::Stationary0T => t * lnn,
        Formulation::SelfSimilar0T | Formulation::SelfSimilar1T => t.ln() * lnn,
    }
}

/// Leadership ratio -ln p_hat / normalizer with propagated CI.
///
/// Zero survivors produce `ZeroSurvivors` carrying the one-sided lower bound
/// obtained from the rule-of-three upper probability bound.
pub fn leadership_ratio(
    est: &MCEstimate,
    t: f64,
    n: usize,
    formulation: Formulation,
) -> Result<RatioEstimate, ExponentError> {
    let norm = ratio_normalizer(t, n, formulation);
    if !(norm > 0.0) {
        return Err(ExponentError::InvalidFit(format!(
            "normalizer must be positive, got {norm} (T={t}, n={n})"
        )));
    }
    if est.survivors == 0 {
        return Err(ExponentError::ZeroSurvivors {
            lower_bound: -est.ci_high.ln() / norm,
        });
    }
    let ratio = -est.p_hat.ln() / norm;
    // p -> -ln p / norm is decreasing: the CI endpoints swap
    let ci_low = -est.ci_high.ln() / norm;
    let ci_high = if est.ci_low > 0.0 {
        -est.ci_low.ln() / norm
    } else {
        f64::INFINITY
    };
    Ok(RatioEstimate { ratio, ci_low, ci_high })
}

/// The paper-side prediction 1/d for a leader kernel.
pub fn prediction(kernel: &KernelSpec) -> Result<f64, ExponentError> {
    let d = match kernel {
        KernelSpec::Fbm { h } | KernelSpec::LampertiFbm { h } => d_closed_form(*h)?.d,
        tab @ KernelSpec::TabulatedStationary { .. } => d_quadrature(tab)?.d,
    };
    Ok(1.0 / d)
}

/// One fitted point: (ln T, ln p_hat, inverse-variance weight).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitPoint {
    pub abscissa: f64,
    pub log_p: f64,
    pub weight: f64,
}

/// Weighted least-squares fit of ln p against ln T.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentFit {
    /// Slope of ln p vs ln T; the exponent estimate is -slope.
    pub slope: f64,
    pub slope_std_error: f64,
    pub intercept: f64,
    pub points: Vec<FitPoint>,
    pub residual_rms: f64,
    /// 1/d of the leader kernel.
    pub prediction: f64,
    /// Whether every (T, n) of the sweep satisfied the declared admissible
    /// domain; fixed-n T-sweeps normally report false here, honestly.
    pub grid_domain_ok: bool,
}

impl ExponentFit {
    pub fn gamma_hat(&self) -> f64 {
        -self.slope
    }
}

/// Default admissible-domain constants: Theorem-type bounds need c > 1, and
/// the smallest legal margin maximizes the feasible desk-scale grid.
pub const DEFAULT_DOMAIN_C: f64 = 1.1;
pub const DEFAULT_DOMAIN_BIG_C: f64 = 5.0;

fn domain_ok(t: f64, n: usize, formulation: Formulation, c: f64, big_c: f64) -> bool {
    let lnn = (n as f64).ln();
    match formulation {
        Formulation::Stationary0T => c * t.ln() < lnn && lnn < big_c * t,
        Formulation::SelfSimilar0T | Formulation::SelfSimilar1T => {
            t > 1.0 && c * t.ln().ln() < lnn && lnn <= big_c * t.ln()
        }
    }
}

/// Weighted least squares of ln p_hat on ln T at fixed n.
///
/// Preconditions: at least three T values spanning a decade, every estimate
/// with survivors. Weights are inverse delta-method variances of ln p_hat.
pub fn fit_gamma_n(
    tsweep: &[(f64, MCEstimate)],
    n: usize,
    leader: &KernelSpec,
    formulation: Formulation,
) -> Result<ExponentFit, ExponentError> {
    if tsweep.len() < 3 {
        return Err(ExponentError::InvalidFit(format!(
            "need at least 3 T values, got {}",
            tsweep.len()
        )));
    }
    let tmin = tsweep.iter().map(|(t, _)| *t).fold(f64::INFINITY, f64::min);
    let tmax = tsweep.iter().map(|(t, _)| *t).fold(f64::NEG_INFINITY, f64::max);
    if !(tmax / tmin >= 10.0) {
        return Err(ExponentError::InvalidFit(format!(
            "T values must span at least one decade, got [{tmin}, {tmax}]"
        )));
    }
    let mut points = Vec::with_capacity(tsweep.len());
    for (t, est) in tsweep {
        if est.survivors == 0 {
            return Err(ExponentError::ZeroSurvivors {
                lower_bound: -est.ci_high.ln() / ratio_normalizer(*t, n.max(2), formulation),
            });
        }
        let p = est.p_hat;
        // delta method: var(ln p_hat) = (1 - p) / (N p)
        let var = (1.0 - p).max(1e-12) / (est.samples as f64 * p);
        points.push(FitPoint {
            abscissa: t.ln(),
            log_p: p.ln(),
            weight: 1.0 / var,
        });
    }
    let sw: f64 = points.iter().map(|p| p.weight).sum();
    let xbar: f64 = points.iter().map(|p| p.weight * p.abscissa).sum::<f64>() / sw;
    let ybar: f64 = points.iter().map(|p| p.weight * p.log_p).sum::<f64>() / sw;
    let sxx: f64 = points
        .iter()
        .map(|p| p.weight * (p.abscissa - xbar) * (p.abscissa - xbar))
        .sum();
    if sxx <= 0.0 {
        return Err(ExponentError::InvalidFit("degenerate abscissae".into()));
    }
    let sxy: f64 = points
        .iter()
        .map(|p| p.weight * (p.abscissa - xbar) * (p.log_p - ybar))
        .sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let ss_res: f64 = points
        .iter()
        .map(|p| {
            let r = p.log_p - (intercept + slope * p.abscissa);
            p.weight * r * r
        })
        .sum();
    let residual_rms = (ss_res / sw).sqrt();
    let grid_domain_ok = tsweep
        .iter()
        .all(|(t, _)| domain_ok(*t, n, formulation, DEFAULT_DOMAIN_C, DEFAULT_DOMAIN_BIG_C));
    Ok(ExponentFit {
        slope,
        slope_std_error: (1.0 / sxx).sqrt(),
        intercept,
        points,
        residual_rms,
        prediction: prediction(leader)?,
        grid_domain_ok,
    })
}

/// A validated (T, n) sweep inside the admissible joint-growth domain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPlan {
    pub cells: Vec<(f64, usize)>,
    pub c: f64,
    pub big_c: f64,
    pub formulation: Formulation,
}

impl SweepPlan {
    /// Validates every (T, n) pair against the domain inequalities
    /// (stationary: c ln T < ln n < C T; self-similar:
    /// c ln ln T < ln n <= C ln T); the error names the offending pair.
    pub fn new(
        cells: Vec<(f64, usize)>,
        c: f64,
        big_c: f64,
        formulation: Formulation,
    ) -> Result<SweepPlan, ExponentError> {
        if !(c > 1.0) {
            return Err(ExponentError::InvalidPlan(format!("need c > 1, got {c}")));
        }
        if !(big_c > 0.0) {
            return Err(ExponentError::InvalidPlan(format!("need C > 0, got {big_c}")));
        }
        if cells.is_empty() {
            return Err(ExponentError::InvalidPlan("empty sweep".into()));
        }
        for &(t, n) in &cells {
            if !domain_ok(t, n, formulation, c, big_c) {
                return Err(ExponentError::InvalidPlan(format!(
                    "(T, n) = ({t}, {n}) violates the {} admissible domain with c = {c}, C = {big_c}",
                    formulation.as_str()
                )));
            }
        }
        Ok(SweepPlan { cells, c, big_c, formulation })
    }
}

/// One sweep cell result.
#[derive(Debug, Clone, Serialize)]
pub struct SweepCell {
    pub t: f64,
    pub n: usize,
    pub estimate: Option<MCEstimate>,
    pub ratio: Option<RatioEstimate>,
    /// One-sided lower bound when the cell had zero survivors.
    pub ratio_lower_bound: Option<f64>,
    pub prediction: f64,
    pub domain_ok: bool,
    /// Per-cell failure recorded instead of aborting the sweep.
    pub error: Option<String>,
}

/// Runs a sweep: cells sharing a T value are coupled (pursuer stream j
/// depends only on (group seed, j, sample)), which makes p_hat exactly
/// nonincreasing in n at fixed T; distinct T groups use independently
/// derived seeds so their rows stay independent.
pub fn sweep(
    plan: &SweepPlan,
    base: &EnsembleConfig,
    seed: u64,
    samples_per_cell: u64,
) -> Result<Vec<SweepCell>, ExponentError> {
    if base.pursuer_kernels.len() != 1 {
        return Err(ExponentError::InvalidPlan(
            "sweeps need a single pursuer kernel group; run heterogeneous cells individually".into(),
        ));
    }
    let pursuer_kernel = base.pursuer_kernels[0].0.clone();
    let pred = prediction(&base.leader_kernel)?;

    // group cells by T, ascending n within each group
    let mut ts: Vec<f64> = plan.cells.iter().map(|&(t, _)| t).collect();
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ts.dedup();
    let mut out: Vec<SweepCell> = Vec::with_capacity(plan.cells.len());
    for (group_idx, &t) in ts.iter().enumerate() {
        let mut ns: Vec<usize> = plan
            .cells
            .iter()
            .filter(|&&(ct, _)| ct == t)
            .map(|&(_, n)| n)
            .collect();
        ns.sort_unstable();
        ns.dedup();
        let group_seed = crate::rng::derive_seed(seed, 1 << 60, group_idx as u64);
        let n_max = *ns.last().unwrap();
        let config = EnsembleConfig {
            leader_kernel: base.leader_kernel.clone(),
            pursuer_kernels: vec![(pursuer_kernel.clone(), n_max)],
            horizon: t,
            level: base.level,
            formulation: plan.formulation,
            grid_per_unit: base.grid_per_unit,
            bridge_correction: false,
        };
        match estimate_survival_prefixes(&config, group_seed, samples_per_cell, &ns) {
            Ok(ests) => {
                for (j, &n) in ns.iter().enumerate() {
                    let est = ests[j];
                    let (ratio, lower) = match leadership_ratio(&est, t, n, plan.formulation) {
                        Ok(r) => (Some(r), None),
                        Err(ExponentError::ZeroSurvivors { lower_bound }) => {
                            (None, Some(lower_bound))
                        }
                        Err(e) => {
                            out.push(SweepCell {
                                t,
                                n,
                                estimate: Some(est),
                                ratio: None,
                                ratio_lower_bound: None,
                                prediction: pred,
                                domain_ok: domain_ok(t, n, plan.formulation, plan.c, plan.big_c),
                                error: Some(e.to_string()),
                            });
                            continue;
                        }
                    };
                    out.push(SweepCell {
                        t,
                        n,
                        estimate: Some(est),
                        ratio,
                        ratio_lower_bound: lower,
                        prediction: pred,
                        domain_ok: domain_ok(t, n, plan.formulation, plan.c, plan.big_c),
                        error: None,
                    });
                }
            }
            Err(e) => {
                let msg = e.to_string();
                for &n in &ns {
                    out.push(SweepCell {
                        t,
                        n,
                        estimate: None,
                        ratio: None,
                        ratio_lower_bound: None,
                        prediction: pred,
                        domain_ok: domain_ok(t, n, plan.formulation, plan.c, plan.big_c),
                        error: Some(msg.clone()),
                    });
                }
            }
        }
    }
    Ok(out)
}
