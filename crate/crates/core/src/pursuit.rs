//! Monte Carlo estimation of leader-survival probabilities and capture-time
//! distributions for configurable pursuit ensembles.
//!
//! Sample i of a run is a pure function of `(seed, stream, i)`: the leader
//! uses stream 0, pursuer j uses stream j, bridge uniforms use a reserved
//! stream. Chunking and worker count therefore never change any count.

use crate::kernels::{KernelError, KernelSpec};
use crate::rng::{self, BRIDGE_STREAM, LEADER_STREAM};
use crate::sampling::{FbmSampler, GridSpec, PathBatch, SamplerScratch, SamplingError, StationarySampler};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PursuitError {
    #[error("invalid ensemble: {0}")]
    InvalidConfig(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Which survival problem is being estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    /// Stationary processes on [0, T], level 0 in the paper.
    Stationary0T,
    /// H-self-similar processes pinned at 0, on [0, T], level 1 in the paper.
    SelfSimilar0T,
    /// H-self-similar processes on [1, T] at level 0, computed exactly as the
    /// stationary Lamperti problem on [0, ln T] with a uniform log-time grid.
    SelfSimilar1T,
}

impl Formulation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Formulation::Stationary0T => "stationary_0t",
            Formulation::SelfSimilar0T => "self_similar_0t",
            Formulation::SelfSimilar1T => "self_similar_1t",
        }
    }
}

/// One pursuit experiment: leader kernel, pursuer kernels with
/// multiplicities, horizon, level, formulation, and grid density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub leader_kernel: KernelSpec,
    /// (kernel, multiplicity) pairs; multiplicities sum to n. Pursuer stream
    /// j takes the j-th kernel of the expansion, in the order given.
    pub pursuer_kernels: Vec<(KernelSpec, usize)>,
    pub horizon: f64,
    pub level: f64,
    pub formulation: Formulation,
    /// Grid points per unit time (per unit log-time for SelfSimilar1T).
    pub grid_per_unit: usize,
    /// Exact Brownian-bridge crossing correction between grid points.
    /// Only valid for SelfSimilar0T with n = 1 and H = 1/2 everywhere, where
    /// the gap is exactly a Brownian motion; removes discretization bias.
    #[serde(default)]
    pub bridge_correction: bool,
}

/// Default grid density per unit (log-)time.
pub const DEFAULT_GRID_PER_UNIT: usize = 64;

impl EnsembleConfig {
    pub fn n(&self) -> usize {
        self.pursuer_kernels.iter().map(|(_, m)| m).sum()
    }

    pub fn validate(&self) -> Result<(), PursuitError> {
        let n = self.n();
        if n < 1 {
            return Err(PursuitError::InvalidConfig("need at least one pursuer".into()));
        }
        if self.grid_per_unit < 1 {
            return Err(PursuitError::InvalidConfig("grid_per_unit must be >= 1".into()));
        }
        if !self.horizon.is_finite() || self.horizon < 0.0 {
            return Err(PursuitError::InvalidConfig(format!(
                "horizon must be finite and nonnegative, got {}",
                self.horizon
            )));
        }
        let kernels: Vec<&KernelSpec> = std::iter::once(&self.leader_kernel)
            .chain(self.pursuer_kernels.iter().map(|(k, _)| k))
            .collect();
        match self.formulation {
            Formulation::Stationary0T => {
                if self.horizon <= 0.0 {
                    return Err(PursuitError::InvalidConfig(
                        "stationary formulation needs T > 0".into(),
                    ));
                }
                for k in &kernels {
                    if !k.is_stationary() {
                        return Err(PursuitError::InvalidConfig(format!(
                            "stationary formulation needs stationary kernels, got {}",
                            k.tag()
                        )));
                    }
                }
            }
            Formulation::SelfSimilar0T => {
                for k in &kernels {
                    if !matches!(k, KernelSpec::Fbm { .. }) {
                        return Err(PursuitError::InvalidConfig(format!(
                            "self-similar formulations are restricted to families with X(0) = 0 (FBM), got {}",
                            k.tag()
                        )));
                    }
                }
            }
            Formulation::SelfSimilar1T => {
                if self.horizon <= 1.0 {
                    return Err(PursuitError::InvalidConfig(
                        "the [1, T] formulation needs T > 1".into(),
                    ));
                }
                if self.level != 0.0 {
                    return Err(PursuitError::InvalidConfig(
                        "the [1, T] formulation is defined at level 0".into(),
                    ));
                }
                for k in &kernels {
                    if !matches!(k, KernelSpec::Fbm { .. }) {
                        return Err(PursuitError::InvalidConfig(format!(
                            "the [1, T] formulation is restricted to FBM ensembles, got {}",
                            k.tag()
                        )));
                    }
                }
            }
        }
        if self.bridge_correction {
            let brownian = kernels
                .iter()
                .all(|k| matches!(k, KernelSpec::Fbm { h } if *h == 0.5));
            if !(self.formulation == Formulation::SelfSimilar0T && n == 1 && brownian) {
                return Err(PursuitError::InvalidConfig(
                    "bridge_correction requires SelfSimilar0T, n = 1, and H = 1/2 kernels".into(),
                ));
            }
        }
        Ok(())
    }

    /// Expanded pursuer kernels, one per stream.
    fn expanded(&self) -> Vec<KernelSpec> {
        let mut out = Vec::with_capacity(self.n());
        for (k, m) in &self.pursuer_kernels {
            for _ in 0..*m {
                out.push(k.clone());
            }
        }
        out
    }
}

/// Estimated probability with Wilson score interval at 95%.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub p_hat: f64,
    pub samples: u64,
    pub survivors: u64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// True when the upper bound is the zero-survivor rule-of-three bound.
    pub rule_of_three: bool,
}

/// 97.5% standard normal quantile: the 95% two-sided score interval.
pub const Z_95: f64 = 1.959_963_984_540_054;

impl MCEstimate {
    pub fn from_counts(survivors: u64, samples: u64) -> MCEstimate {
        assert!(samples >= 1, "estimates need at least one sample");
        assert!(survivors <= samples);
        let n = samples as f64;
        let p = survivors as f64 / n;
        let std_error = (p * (1.0 - p) / n).sqrt();
        if survivors == 0 {
            return MCEstimate {
                p_hat: 0.0,
                samples,
                survivors,
                std_error,
                ci_low: 0.0,
                ci_high: (3.0 / n).min(1.0),
                rule_of_three: true,
            };
        }
        if survivors == samples {
            return MCEstimate {
                p_hat: 1.0,
                samples,
                survivors,
                std_error,
                ci_low: (1.0 - 3.0 / n).max(0.0),
                ci_high: 1.0,
                rule_of_three: true,
            };
        }
        let z2 = Z_95 * Z_95;
        let denom = 1.0 + z2 / n;
        let center = (p + z2 / (2.0 * n)) / denom;
        let half = Z_95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
        MCEstimate {
            p_hat: p,
            samples,
            survivors,
            std_error,
            ci_low: (center - half).max(0.0),
            ci_high: (center + half).min(1.0),
            rule_of_three: false,
        }
    }
}

enum PathSampler {
    Stationary(StationarySampler),
    Fbm(FbmSampler),
}

impl PathSampler {
    fn sample_into(&self, rng: &mut rand_chacha::ChaCha8Rng, scratch: &mut SamplerScratch, out: &mut [f64]) {
        match self {
            PathSampler::Stationary(s) => s.sample_into(rng, scratch, out),
            PathSampler::Fbm(s) => s.sample_into(rng, scratch, out),
        }
    }
}

/// Resolved simulation: samplers per stream plus the evaluation rule.
pub struct Engine {
    grid: GridSpec,
    level: f64,
    /// First grid index included in the survival event.
    eval_from: usize,
    leader: PathSampler,
    pursuers: Vec<PathSampler>,
    leader_stream: u64,
    pursuer_streams: Vec<u64>,
    bridge: bool,
    /// Degenerate T = 0 case: the event is evaluated at the single point 0.
    single_point: Option<bool>,
}

impl Engine {
    pub fn new(config: &EnsembleConfig) -> Result<Engine, PursuitError> {
        let n = config.n();
        let streams: Vec<u64> = (1..=n as u64).collect();
        Self::with_streams(config, LEADER_STREAM, streams)
    }

    /// Same engine with explicit noise-stream assignment; exists so tests can
    /// exercise permutation and leader-swap invariance.
    #[doc(hidden)]
    pub fn with_streams(
        config: &EnsembleConfig,
        leader_stream: u64,
        pursuer_streams: Vec<u64>,
    ) -> Result<Engine, PursuitError> {
        config.validate()?;
        assert_eq!(pursuer_streams.len(), config.n());
        if config.horizon == 0.0 {
            // single-point proxy: FBM gaps are exactly 0 at t = 0
            let survive = 0.0 < config.level;
            let grid = GridSpec::new(0.0, 1.0, 2)?;
            let sampler = FbmSampler::new(0.5, grid)?;
            return Ok(Engine {
                grid,
                level: config.level,
                eval_from: 0,
                leader: PathSampler::Fbm(sampler),
                pursuers: Vec::new(),
                leader_stream,
                pursuer_streams,
                bridge: false,
                single_point: Some(survive),
            });
        }
        let (grid, eval_from, leader_kernel, pursuer_kernels) = match config.formulation {
            Formulation::Stationary0T | Formulation::SelfSimilar0T => {
                let steps = (config.horizon * config.grid_per_unit as f64).ceil() as usize;
                let grid = GridSpec::new(0.0, config.horizon, steps + 1)?;
                (grid, 0usize, config.leader_kernel.clone(), config.expanded())
            }
            Formulation::SelfSimilar1T => {
                // exact Lamperti reduction: gaps on [1, T] keep their sign under
                // the t^{-H} rescaling, so the level-0 event equals the
                // stationary level-0 event on [0, ln T]
                let horizon = config.horizon.ln();
                let steps = (horizon * config.grid_per_unit as f64).ceil() as usize;
                let grid = GridSpec::new(0.0, horizon, (steps + 1).max(2))?;
                let map = |k: &KernelSpec| -> Result<KernelSpec, PursuitError> {
                    match k {
                        KernelSpec::Fbm { h } => Ok(KernelSpec::LampertiFbm { h: *h }),
                        other => Err(PursuitError::InvalidConfig(format!(
                            "cannot Lamperti-reduce {}",
                            other.tag()
                        ))),
                    }
                };
                let leader = map(&config.leader_kernel)?;
                let pursuers: Result<Vec<_>, _> = config.expanded().iter().map(map).collect();
                (grid, 0usize, leader, pursuers?)
            }
        };
        let make = |k: &KernelSpec| -> Result<PathSampler, PursuitError> {
            Ok(match k {
                KernelSpec::Fbm { h } => PathSampler::Fbm(FbmSampler::new(*h, grid)?),
                stationary => PathSampler::Stationary(StationarySampler::new(stationary, grid)?),
            })
        };
        let leader = make(&leader_kernel)?;
        let pursuers: Result<Vec<_>, _> = pursuer_kernels.iter().map(make).collect();
        Ok(Engine {
            grid,
            level: config.level,
            eval_from,
            leader,
            pursuers: pursuers?,
            leader_stream,
            pursuer_streams,
            bridge: config.bridge_correction,
            single_point: None,
        })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    /// First grid index at which some pursuer gap reaches the level, or None
    /// if the sample survives the whole horizon.
    ///
    /// With the bridge correction on, a between-grid crossing of the (exactly
    /// Brownian) gap is attributed to the right endpoint of its interval.
    pub fn first_crossing(&self, seed: u64, sample: u64, ws: &mut Workspace) -> Option<usize> {
        if let Some(survive) = self.single_point {
            return if survive { None } else { Some(0) };
        }
        let points = self.grid.points;
        ws.leader.resize(points, 0.0);
        ws.pursuer.resize(points, 0.0);
        let mut rng = rng::rng_for(seed, self.leader_stream, sample);
        self.leader.sample_into(&mut rng, &mut ws.scratch, &mut ws.leader);
        let mut best: Option<usize> = None;
        for (j, p) in self.pursuers.iter().enumerate() {
            let mut rng = rng::rng_for(seed, self.pursuer_streams[j], sample);
            p.sample_into(&mut rng, &mut ws.scratch, &mut ws.pursuer);
            let limit = best.unwrap_or(points);
            for k in self.eval_from..limit {
                if ws.pursuer[k] - ws.leader[k] >= self.level {
                    best = Some(k);
                    break;
                }
            }
            if best == Some(self.eval_from) {
                break; // cannot cross earlier
            }
        }
        if self.bridge {
            debug_assert_eq!(self.pursuers.len(), 1);
            // gap g = pursuer - leader is Brownian with variance rate 2;
            // P(bridge over [t_k, t_{k+1}] reaches b | endpoints below b)
            //   = exp(-2 (b-g_k)(b-g_{k+1}) / (2 dt))
            let dt = self.grid.spacing();
            let limit = best.unwrap_or(points);
            let mut bridge_rng = rng::rng_for(seed, BRIDGE_STREAM, sample);
            for k in self.eval_from..limit.saturating_sub(1).max(self.eval_from) {
                let a = self.level - (ws.pursuer[k] - ws.leader[k]);
                let b = self.level - (ws.pursuer[k + 1] - ws.leader[k + 1]);
                let expo = a * b / dt;
                // skipping negligible crossing probabilities consumes no
                // uniforms, keeping the draw sequence deterministic
                if expo < 40.0 {
                    let q = (-expo).exp();
                    let u: f64 = bridge_rng.gen();
                    if u < q {
                        return Some(k + 1);
                    }
                }
            }
        }
        best
    }

    /// Per-sample survival for every prefix ensemble `n in prefix_ns`
    /// (ascending): prefix j survives iff pursuers 1..=prefix_ns[j] all stay
    /// below the level on the whole grid. Used for coupled-seed sweeps over n.
    fn prefix_survival_one(
        &self,
        seed: u64,
        sample: u64,
        prefix_ns: &[usize],
        ws: &mut Workspace,
        out: &mut [bool],
    ) {
        debug_assert_eq!(out.len(), prefix_ns.len());
        if let Some(survive) = self.single_point {
            out.iter_mut().for_each(|o| *o = survive);
            return;
        }
        let points = self.grid.points;
        ws.leader.resize(points, 0.0);
        ws.pursuer.resize(points, 0.0);
        let mut rng = rng::rng_for(seed, self.leader_stream, sample);
        self.leader.sample_into(&mut rng, &mut ws.scratch, &mut ws.leader);
        let mut alive = true;
        let mut next_pursuer = 0usize;
        for (j, &n_j) in prefix_ns.iter().enumerate() {
            while alive && next_pursuer < n_j {
                let mut rng = rng::rng_for(seed, self.pursuer_streams[next_pursuer], sample);
                self.pursuers[next_pursuer].sample_into(&mut rng, &mut ws.scratch, &mut ws.pursuer);
                for k in self.eval_from..points {
                    if ws.pursuer[k] - ws.leader[k] >= self.level {
                        alive = false;
                        break;
                    }
                }
                next_pursuer += 1;
            }
            out[j] = alive;
            // once a prefix is dead every larger prefix is dead; remaining
            // pursuer streams are independent so skipping them changes nothing
            if !alive {
                out[j..].iter_mut().for_each(|o| *o = false);
                return;
            }
        }
    }
}

/// Per-thread workspace for the engine.
#[derive(Default)]
pub struct Workspace {
    leader: Vec<f64>,
    pursuer: Vec<f64>,
    scratch: SamplerScratch,
}

/// Deterministic block size for parallel sample partitioning; fixed so that
/// aggregation order never depends on the worker count.
const BLOCK: u64 = 512;

fn block_ranges(samples: u64) -> Vec<(u64, u64)> {
    let mut v = Vec::new();
    let mut s = 0;
    while s < samples {
        let e = (s + BLOCK).min(samples);
        v.push((s, e));
        s = e;
    }
    v
}

/// Estimate the survival probability of the configured ensemble.
pub fn estimate_survival(
    config: &EnsembleConfig,
    seed: u64,
    samples: u64,
) -> Result<MCEstimate, PursuitError> {
    if samples < 1 {
        return Err(PursuitError::InvalidConfig("samples must be >= 1".into()));
    }
    let engine = Engine::new(config)?;
    let blocks = block_ranges(samples);
    let counts: Vec<u64> = blocks
        .par_iter()
        .map(|&(s, e)| {
            let mut ws = Workspace::default();
            let mut c = 0u64;
            for i in s..e {
                if engine.first_crossing(seed, i, &mut ws).is_none() {
                    c += 1;
                }
            }
            c
        })
        .collect();
    let survivors: u64 = counts.iter().sum();
    Ok(MCEstimate::from_counts(survivors, samples))
}

/// Survival estimates for nested prefix ensembles on coupled seeds: one pass
/// with the largest n, evaluating every prefix. Identical in distribution
/// (and in realization) to independent runs that share the master seed,
/// because pursuer stream j depends only on (seed, j, sample).
pub fn estimate_survival_prefixes(
    config: &EnsembleConfig,
    seed: u64,
    samples: u64,
    prefix_ns: &[usize],
) -> Result<Vec<MCEstimate>, PursuitError> {
    if samples < 1 {
        return Err(PursuitError::InvalidConfig("samples must be >= 1".into()));
    }
    let n = config.n();
    if prefix_ns.is_empty()
        || prefix_ns.windows(2).any(|w| w[0] >= w[1])
        || *prefix_ns.last().unwrap() != n
        || prefix_ns[0] < 1
    {
        return Err(PursuitError::InvalidConfig(format!(
            "prefix list must be ascending and end at n = {n}, got {prefix_ns:?}"
        )));
    }
    let engine = Engine::new(config)?;
    let blocks = block_ranges(samples);
    let counts: Vec<Vec<u64>> = blocks
        .par_iter()
        .map(|&(s, e)| {
            let mut ws = Workspace::default();
            let mut alive = vec![false; prefix_ns.len()];
            let mut c = vec![0u64; prefix_ns.len()];
            for i in s..e {
                engine.prefix_survival_one(seed, i, prefix_ns, &mut ws, &mut alive);
                for (cj, &a) in c.iter_mut().zip(alive.iter()) {
                    *cj += a as u64;
                }
            }
            c
        })
        .collect();
    let mut survivors = vec![0u64; prefix_ns.len()];
    for c in counts {
        for (s, v) in survivors.iter_mut().zip(c) {
            *s += v;
        }
    }
    Ok(survivors.into_iter().map(|s| MCEstimate::from_counts(s, samples)).collect())
}

/// Empirical capture-time distribution on the evaluation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptureCdf {
    pub times: Vec<f64>,
    /// counts[k] = number of samples whose first crossing is grid index k.
    pub counts: Vec<u64>,
    /// Samples that never crossed within the horizon (tau = +inf mass).
    pub never: u64,
    pub samples: u64,
}

impl CaptureCdf {
    /// Right-continuous empirical CDF value at time t.
    pub fn cdf(&self, t: f64) -> f64 {
        let mut acc = 0u64;
        for (time, c) in self.times.iter().zip(self.counts.iter()) {
            if *time <= t {
                acc += c;
            } else {
                break;
            }
        }
        acc as f64 / self.samples as f64
    }

    /// Survival at the horizon: P(tau > T) = never / samples.
    pub fn survival(&self) -> MCEstimate {
        MCEstimate::from_counts(self.never, self.samples)
    }

    /// Smallest grid time with CDF >= q, if reached.
    pub fn quantile(&self, q: f64) -> Option<f64> {
        let target = q * self.samples as f64;
        let mut acc = 0u64;
        for (time, c) in self.times.iter().zip(self.counts.iter()) {
            acc += c;
            if acc as f64 >= target {
                return Some(*time);
            }
        }
        None
    }
}

/// Estimate the capture-time CDF; shares the per-sample crossing logic with
/// `estimate_survival`, so survival at T equals 1 - CDF(T) exactly on the
/// same seed.
pub fn capture_time_cdf(
    config: &EnsembleConfig,
    seed: u64,
    samples: u64,
) -> Result<CaptureCdf, PursuitError> {
    if samples < 1 {
        return Err(PursuitError::InvalidConfig("samples must be >= 1".into()));
    }
    let engine = Engine::new(config)?;
    let points = engine.grid().points;
    let blocks = block_ranges(samples);
    let hists: Vec<(Vec<u64>, u64)> = blocks
        .par_iter()
        .map(|&(s, e)| {
            let mut ws = Workspace::default();
            let mut hist = vec![0u64; points];
            let mut never = 0u64;
            for i in s..e {
                match engine.first_crossing(seed, i, &mut ws) {
                    Some(k) => hist[k] += 1,
                    None => never += 1,
                }
            }
            (hist, never)
        })
        .collect();
    let mut counts = vec![0u64; points];
    let mut never = 0u64;
    for (h, nv) in hists {
        for (c, v) in counts.iter_mut().zip(h) {
            *c += v;
        }
        never += nv;
    }
    Ok(CaptureCdf {
        times: engine.grid().times(),
        counts,
        never,
        samples,
    })
}

/// Paired estimates of P(M_n([1,T]) <= 0) and P(M_n([0,T]) <= 1) from the
/// same FBM paths (coupled seeds), plus exact per-sample monotonicity
/// violation counters (all must be zero).
#[derive(Debug, Clone, PartialEq)]
pub struct FormulationComparison {
    /// P(M_n([1, T]) < 0), evaluated on the shared uniform grid.
    pub on_1t_level0: MCEstimate,
    /// P(M_n([0, T]) < 1).
    pub on_0t_level1: MCEstimate,
    /// Samples violating level monotonicity: {M([0,T]) < 0} not subset of
    /// {M([0,T]) < 1}.
    pub level_violations: u64,
    /// Samples violating interval monotonicity: {M([0,T]) < 0} not subset of
    /// {M([1,T]) < 0}.
    pub interval_violations: u64,
    /// Samples violating interval restriction at level 1: {M([0,T]) < 1} not
    /// subset of {M([1,T]) < 1}.
    pub restriction_violations: u64,
}

/// Couples the two self-similar formulations on shared paths: the FBM
/// ensemble is sampled once on the uniform [0, T] grid and both events are
/// read off the same trajectories.
pub fn compare_formulations(
    config: &EnsembleConfig,
    seed: u64,
    samples: u64,
) -> Result<FormulationComparison, PursuitError> {
    if samples < 1 {
        return Err(PursuitError::InvalidConfig("samples must be >= 1".into()));
    }
    if config.horizon <= 1.0 {
        return Err(PursuitError::InvalidConfig("comparison needs T > 1".into()));
    }
    let mut cfg = config.clone();
    cfg.formulation = Formulation::SelfSimilar0T;
    cfg.level = 1.0;
    cfg.bridge_correction = false;
    cfg.validate()?;
    let engine = Engine::new(&cfg)?;
    let grid = engine.grid();
    let i1 = (0..grid.points)
        .find(|&k| grid.time(k) >= 1.0 - 1e-12)
        .expect("T > 1 puts t = 1 inside the grid");
    let n = cfg.n();
    let blocks = block_ranges(samples);
    #[derive(Default, Clone)]
    struct Acc {
        a: u64,            // M([0,T]) < 1
        b: u64,            // M([1,T]) < 0
        level_viol: u64,
        interval_viol: u64,
        restrict_viol: u64,
    }
    let parts: Vec<Acc> = blocks
        .par_iter()
        .map(|&(s, e)| {
            let mut ws = Workspace::default();
            let mut gap_max = vec![f64::NEG_INFINITY; grid.points];
            let mut acc = Acc::default();
            for i in s..e {
                ws.leader.resize(grid.points, 0.0);
                ws.pursuer.resize(grid.points, 0.0);
                let mut rng = rng::rng_for(seed, LEADER_STREAM, i);
                engine.leader.sample_into(&mut rng, &mut ws.scratch, &mut ws.leader);
                gap_max.iter_mut().for_each(|g| *g = f64::NEG_INFINITY);
                for j in 0..n {
                    let mut rng = rng::rng_for(seed, engine.pursuer_streams[j], i);
                    engine.pursuers[j].sample_into(&mut rng, &mut ws.scratch, &mut ws.pursuer);
                    for k in 0..grid.points {
                        let g = ws.pursuer[k] - ws.leader[k];
                        if g > gap_max[k] {
                            gap_max[k] = g;
                        }
                    }
                }
                let a = gap_max.iter().all(|&g| g < 1.0);
                let b = gap_max[i1..].iter().all(|&g| g < 0.0);
                let b1 = gap_max[i1..].iter().all(|&g| g < 1.0);
                let c = gap_max.iter().all(|&g| g < 0.0);
                acc.a += a as u64;
                acc.b += b as u64;
                if c && !a {
                    acc.level_viol += 1;
                }
                if c && !b {
                    acc.interval_viol += 1;
                }
                if a && !b1 {
                    acc.restrict_viol += 1;
                }
            }
            acc
        })
        .collect();
    let mut total = Acc::default();
    for p in parts {
        total.a += p.a;
        total.b += p.b;
        total.level_viol += p.level_viol;
        total.interval_viol += p.interval_viol;
        total.restrict_viol += p.restrict_viol;
    }
    Ok(FormulationComparison {
        on_1t_level0: MCEstimate::from_counts(total.b, samples),
        on_0t_level1: MCEstimate::from_counts(total.a, samples),
        level_violations: total.level_viol,
        interval_violations: total.interval_viol,
        restriction_violations: total.restrict_viol,
    })
}

/// One row of the grid-refinement report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RefinementRow {
    pub grid_per_unit: usize,
    pub stride: usize,
    pub estimate: MCEstimate,
}

/// Discretization-bias study: paths are sampled once at the configured
/// density and the survival event is re-evaluated on dyadic subgrids
/// (stride 2^j). Coarser grids are subsets of finer ones, so survival counts
/// are nonincreasing in density, exactly, per sample.
pub fn refinement_study(
    config: &EnsembleConfig,
    seed: u64,
    samples: u64,
    levels: usize,
) -> Result<Vec<RefinementRow>, PursuitError> {
    if samples < 1 {
        return Err(PursuitError::InvalidConfig("samples must be >= 1".into()));
    }
    if config.bridge_correction {
        return Err(PursuitError::InvalidConfig(
            "refinement study measures grid bias; disable bridge_correction".into(),
        ));
    }
    let engine = Engine::new(config)?;
    let points = engine.grid().points;
    let strides: Vec<usize> = (0..=levels).map(|j| 1usize << j).collect();
    let n = config.n();
    let blocks = block_ranges(samples);
    let counts: Vec<Vec<u64>> = blocks
        .par_iter()
        .map(|&(s, e)| {
            let mut ws = Workspace::default();
            let mut gap_max = vec![f64::NEG_INFINITY; points];
            let mut c = vec![0u64; strides.len()];
            for i in s..e {
                ws.leader.resize(points, 0.0);
                ws.pursuer.resize(points, 0.0);
                let mut rng = rng::rng_for(seed, LEADER_STREAM, i);
                engine.leader.sample_into(&mut rng, &mut ws.scratch, &mut ws.leader);
                gap_max.iter_mut().for_each(|g| *g = f64::NEG_INFINITY);
                for j in 0..n {
                    let mut rng = rng::rng_for(seed, engine.pursuer_streams[j], i);
                    engine.pursuers[j].sample_into(&mut rng, &mut ws.scratch, &mut ws.pursuer);
                    for k in engine.eval_from..points {
                        let g = ws.pursuer[k] - ws.leader[k];
                        if g > gap_max[k] {
                            gap_max[k] = g;
                        }
                    }
                }
                for (jc, &stride) in c.iter_mut().zip(strides.iter()) {
                    let crossed = gap_max[engine.eval_from..]
                        .iter()
                        .step_by(stride)
                        .any(|&g| g >= config.level);
                    if !crossed {
                        *jc += 1;
                    }
                }
            }
            c
        })
        .collect();
    let mut survivors = vec![0u64; strides.len()];
    for c in counts {
        for (s, v) in survivors.iter_mut().zip(c) {
            *s += v;
        }
    }
    Ok(strides
        .iter()
        .zip(survivors)
        .map(|(&stride, s)| RefinementRow {
            grid_per_unit: config.grid_per_unit / stride.max(1),
            stride,
            estimate: MCEstimate::from_counts(s, samples),
        })
        .collect())
}

/// Elementwise leader gap M_n(t) = max_i (pursuer_i(t) - leader(t)) for
/// aligned path batches; shape batch x points.
pub fn leader_gap(leader: &PathBatch, pursuers: &[&PathBatch]) -> Result<Vec<f64>, PursuitError> {
    if pursuers.is_empty() {
        return Err(PursuitError::InvalidConfig("need at least one pursuer batch".into()));
    }
    for p in pursuers {
        if p.grid != leader.grid {
            return Err(PursuitError::GridMismatch(format!(
                "pursuer grid {:?} != leader grid {:?}",
                p.grid, leader.grid
            )));
        }
        if p.batch != leader.batch {
            return Err(PursuitError::GridMismatch(format!(
                "pursuer batch {} != leader batch {}",
                p.batch, leader.batch
            )));
        }
    }
    let points = leader.grid.points;
    let mut out = vec![f64::NEG_INFINITY; leader.batch * points];
    for i in 0..leader.batch {
        let l = leader.row(i);
        let row = &mut out[i * points..(i + 1) * points];
        for p in pursuers {
            for (k, (o, (pv, lv))) in row
                .iter_mut()
                .zip(p.row(i).iter().zip(l.iter()))
                .enumerate()
            {
                let _ = k;
                let g = pv - lv;
                if g > *o {
                    *o = g;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::sample_fbm;

    fn brownian_pair(horizon: f64, level: f64, bridge: bool) -> EnsembleConfig {
        EnsembleConfig {
            leader_kernel: KernelSpec::Fbm { h: 0.5 },
            pursuer_kernels: vec![(KernelSpec::Fbm { h: 0.5 }, 1)],
            horizon,
            level,
            formulation: Formulation::SelfSimilar0T,
            grid_per_unit: 64,
            bridge_correction: bridge,
        }
    }

    #[test]
    fn wilson_interval_sanity() {
        let e = MCEstimate::from_counts(50, 100);
        assert!(e.ci_low < 0.5 && 0.5 < e.ci_high);
        assert!(!e.rule_of_three);
        let e = MCEstimate::from_counts(0, 1000);
        assert_eq!(e.p_hat, 0.0);
        assert!(e.rule_of_three);
        assert!((e.ci_high - 0.003).abs() < 1e-15);
        let e = MCEstimate::from_counts(1000, 1000);
        assert!(e.rule_of_three);
        assert!((e.ci_low - 0.997).abs() < 1e-15);
        // invariant 0 <= ci_low <= p_hat <= ci_high <= 1
        for (k, n) in [(1u64, 10u64), (3, 17), (999, 1000)] {
            let e = MCEstimate::from_counts(k, n);
            assert!(0.0 <= e.ci_low && e.ci_low <= e.p_hat);
            assert!(e.p_hat <= e.ci_high && e.ci_high <= 1.0);
            assert_eq!(e.p_hat, k as f64 / n as f64);
        }
    }

    #[test]
    fn leader_gap_trivial_cases() {
        let grid = GridSpec::new(0.0, 1.0, 5).unwrap();
        let leader = sample_fbm(0.5, grid, 1, 3).unwrap();
        // pursuer identical to leader: gap identically zero
        let gaps = leader_gap(&leader, &[&leader]).unwrap();
        assert!(gaps.iter().all(|&g| g == 0.0));
        // constant paths 0, +a, -a: M = a
        let mk = |v: f64| PathBatch {
            grid,
            kernel: None,
            seed: 0,
            batch_index: 0,
            batch: 1,
            paths: vec![v; 5],
        };
        let zero = mk(0.0);
        let plus = mk(0.7);
        let minus = mk(-0.7);
        let gaps = leader_gap(&zero, &[&plus, &minus]).unwrap();
        assert!(gaps.iter().all(|&g| (g - 0.7).abs() < 1e-15));
        // adding a pursuer never decreases the max
        let g1 = leader_gap(&zero, &[&minus]).unwrap();
        let g2 = leader_gap(&zero, &[&minus, &plus]).unwrap();
        for (a, b) in g1.iter().zip(g2.iter()) {
            assert!(b >= a);
        }
        // grid mismatch is an error
        let other = sample_fbm(0.5, GridSpec::new(0.0, 1.0, 9).unwrap(), 1, 3).unwrap();
        assert!(matches!(
            leader_gap(&leader, &[&other]),
            Err(PursuitError::GridMismatch(_))
        ));
    }

    #[test]
    fn zero_horizon_proxy() {
        let mut cfg = brownian_pair(0.0, 1.0, false);
        cfg.grid_per_unit = 64;
        let e = estimate_survival(&cfg, 5, 200).unwrap();
        assert_eq!(e.p_hat, 1.0, "B(0) = 0 < 1 always");
        cfg.level = 0.0;
        let e = estimate_survival(&cfg, 5, 200).unwrap();
        assert_eq!(e.p_hat, 0.0, "gap 0 is not strictly below level 0");
    }

    #[test]
    fn brownian_reflection_oracle_small() {
        // p = P(sup_{[0,T]} sqrt(2) B < 1) = 1 - 2 Psi(1/sqrt(2T));
        // the bridge correction removes discretization bias, so the Wilson CI
        // should cover the closed form
        for (t, want) in [(1.0, 0.520_499_877_813_046_5), (4.0, 0.276_326_390_168_236_9)] {
            let cfg = brownian_pair(t, 1.0, true);
            let e = estimate_survival(&cfg, 20_260_809, 20_000).unwrap();
            assert!(
                e.ci_low <= want && want <= e.ci_high,
                "T={t}: CI [{}, {}] misses {want}",
                e.ci_low,
                e.ci_high
            );
        }
    }

    #[test]
    fn survival_matches_capture_cdf() {
        let cfg = brownian_pair(2.0, 1.0, true);
        let seed = 77;
        let surv = estimate_survival(&cfg, seed, 4_000).unwrap();
        let cdf = capture_time_cdf(&cfg, seed, 4_000).unwrap();
        assert_eq!(surv.survivors, cdf.never, "shared seed, shared crossing logic");
        assert!((surv.p_hat - (1.0 - cdf.cdf(2.0))).abs() < 1e-15);
        // CDF is monotone nondecreasing by construction; quantile sanity
        let med = cdf.quantile(0.5);
        if let Some(m) = med {
            assert!(m > 0.0 && m <= 2.0);
        }
    }

    #[test]
    fn capture_median_matches_hitting_time() {
        // median of tau_1 for level 1: 0.5 / Phi^{-1}(0.75)^2 = 1.09905...
        let cfg = brownian_pair(8.0, 1.0, true);
        let n = 20_000u64;
        let cdf = capture_time_cdf(&cfg, 424_242, n).unwrap();
        let t_star = 1.099_054_669_158_866_2;
        let at_star = cdf.cdf(t_star);
        let se = 0.5 / (n as f64).sqrt();
        assert!(
            (at_star - 0.5).abs() < 5.0 * se + 0.01,
            "CDF at closed-form median: {at_star}"
        );
    }

    #[test]
    fn prefix_survival_equals_standalone() {
        let kernel = KernelSpec::LampertiFbm { h: 0.5 };
        let mk = |n: usize| EnsembleConfig {
            leader_kernel: kernel.clone(),
            pursuer_kernels: vec![(kernel.clone(), n)],
            horizon: 2.0,
            level: 0.0,
            formulation: Formulation::Stationary0T,
            grid_per_unit: 16,
            bridge_correction: false,
        };
        let seed = 9;
        let samples = 3_000;
        let joint = estimate_survival_prefixes(&mk(4), seed, samples, &[1, 2, 4]).unwrap();
        for (j, n) in [(0usize, 1usize), (1, 2), (2, 4)] {
            let solo = estimate_survival(&mk(n), seed, samples).unwrap();
            assert_eq!(
                joint[j].survivors, solo.survivors,
                "prefix n={n} must replay the standalone run"
            );
        }
        // monotone nonincreasing in n on coupled seeds
        assert!(joint[0].survivors >= joint[1].survivors);
        assert!(joint[1].survivors >= joint[2].survivors);
    }

    #[test]
    fn determinism_across_worker_counts() {
        let cfg = brownian_pair(1.0, 1.0, false);
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| estimate_survival(&cfg, 31, 2_000).unwrap());
        let four = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| estimate_survival(&cfg, 31, 2_000).unwrap());
        assert_eq!(one, four);
    }

    #[test]
    fn pursuer_stream_permutation_invariance() {
        // permuting which stream feeds which pursuer is a relabeling of
        // i.i.d. noise sources: the count distribution is identical; with
        // distinct streams the realized counts differ but must agree within
        // combined CI
        let kernel = KernelSpec::LampertiFbm { h: 0.5 };
        let cfg = EnsembleConfig {
            leader_kernel: kernel.clone(),
            pursuer_kernels: vec![(kernel.clone(), 3)],
            horizon: 2.0,
            level: 0.0,
            formulation: Formulation::Stationary0T,
            grid_per_unit: 16,
            bridge_correction: false,
        };
        let seed = 13;
        let samples = 20_000u64;
        let base = estimate_survival(&cfg, seed, samples).unwrap();
        let engine = Engine::with_streams(&cfg, LEADER_STREAM, vec![3, 1, 2]).unwrap();
        let blocks = block_ranges(samples);
        let survivors: u64 = blocks
            .iter()
            .map(|&(s, e)| {
                let mut ws = Workspace::default();
                (s..e)
                    .filter(|&i| engine.first_crossing(seed, i, &mut ws).is_none())
                    .count() as u64
            })
            .sum();
        let permuted = MCEstimate::from_counts(survivors, samples);
        // identical multiset of streams => identical counts
        assert_eq!(permuted.survivors, base.survivors);

        // genuinely different streams: agreement within combined 5 sigma
        let engine = Engine::with_streams(&cfg, LEADER_STREAM, vec![7, 8, 9]).unwrap();
        let survivors: u64 = blocks
            .iter()
            .map(|&(s, e)| {
                let mut ws = Workspace::default();
                (s..e)
                    .filter(|&i| engine.first_crossing(seed, i, &mut ws).is_none())
                    .count() as u64
            })
            .sum();
        let fresh = MCEstimate::from_counts(survivors, samples);
        let se = (base.std_error.powi(2) + fresh.std_error.powi(2)).sqrt();
        assert!(
            (fresh.p_hat - base.p_hat).abs() < 5.0 * se,
            "distributional invariance: {} vs {}",
            fresh.p_hat,
            base.p_hat
        );
    }

    #[test]
    fn leader_pursuer_swap_symmetry() {
        // level 0, n = 1, identical kernels: the gap is sign-symmetric, so
        // swapping which stream is the leader leaves the estimate distribution
        // unchanged
        let kernel = KernelSpec::LampertiFbm { h: 0.5 };
        let cfg = EnsembleConfig {
            leader_kernel: kernel.clone(),
            pursuer_kernels: vec![(kernel.clone(), 1)],
            horizon: 4.0,
            level: 0.0,
            formulation: Formulation::Stationary0T,
            grid_per_unit: 16,
            bridge_correction: false,
        };
        let seed = 17;
        let samples = 20_000u64;
        let base = estimate_survival(&cfg, seed, samples).unwrap();
        let engine = Engine::with_streams(&cfg, 1, vec![LEADER_STREAM]).unwrap();
        let survivors: u64 = block_ranges(samples)
            .iter()
            .map(|&(s, e)| {
                let mut ws = Workspace::default();
                (s..e)
                    .filter(|&i| engine.first_crossing(seed, i, &mut ws).is_none())
                    .count() as u64
            })
            .sum();
        let swapped = MCEstimate::from_counts(survivors, samples);
        let se = (base.std_error.powi(2) + swapped.std_error.powi(2)).sqrt();
        assert!(
            (swapped.p_hat - base.p_hat).abs() < 5.0 * se,
            "swap symmetry: {} vs {}",
            swapped.p_hat,
            base.p_hat
        );
    }

    #[test]
    fn compare_formulations_monotonicity_exact() {
        let cfg = EnsembleConfig {
            leader_kernel: KernelSpec::Fbm { h: 0.5 },
            pursuer_kernels: vec![(KernelSpec::Fbm { h: 0.5 }, 2)],
            horizon: 4.0,
            level: 1.0,
            formulation: Formulation::SelfSimilar0T,
            grid_per_unit: 32,
            bridge_correction: false,
        };
        let cmp = compare_formulations(&cfg, 3, 4_000).unwrap();
        assert_eq!(cmp.level_violations, 0);
        assert_eq!(cmp.interval_violations, 0);
        assert_eq!(cmp.restriction_violations, 0);
        assert!(cmp.on_0t_level1.samples == 4_000);
    }

    #[test]
    fn refinement_is_monotone_in_density() {
        let cfg = brownian_pair(1.0, 1.0, false);
        let rows = refinement_study(&cfg, 11, 4_000, 2).unwrap();
        assert_eq!(rows.len(), 3);
        // stride 1 = finest: survival counts nonincreasing in density, exactly
        assert!(rows[0].estimate.survivors <= rows[1].estimate.survivors);
        assert!(rows[1].estimate.survivors <= rows[2].estimate.survivors);
    }

    #[test]
    fn config_validation_errors() {
        let mut cfg = brownian_pair(4.0, 1.0, false);
        cfg.pursuer_kernels.clear();
        assert!(matches!(cfg.validate(), Err(PursuitError::InvalidConfig(_))));

        let cfg = EnsembleConfig {
            leader_kernel: KernelSpec::Fbm { h: 0.5 },
            pursuer_kernels: vec![(KernelSpec::Fbm { h: 0.5 }, 1)],
            horizon: 4.0,
            level: 0.0,
            formulation: Formulation::Stationary0T,
            grid_per_unit: 64,
            bridge_correction: false,
        };
        assert!(cfg.validate().is_err(), "FBM is not stationary");

        let cfg = EnsembleConfig {
            leader_kernel: KernelSpec::LampertiFbm { h: 0.5 },
            pursuer_kernels: vec![(KernelSpec::LampertiFbm { h: 0.5 }, 1)],
            horizon: 4.0,
            level: 0.0,
            formulation: Formulation::SelfSimilar1T,
            grid_per_unit: 64,
            bridge_correction: false,
        };
        assert!(cfg.validate().is_err(), "1T formulation needs FBM families");

        let mut cfg = brownian_pair(4.0, 1.0, true);
        cfg.pursuer_kernels = vec![(KernelSpec::Fbm { h: 0.5 }, 2)];
        assert!(cfg.validate().is_err(), "bridge correction is n = 1 only");
        let mut cfg = brownian_pair(4.0, 1.0, true);
        cfg.leader_kernel = KernelSpec::Fbm { h: 0.7 };
        assert!(cfg.validate().is_err(), "bridge correction is H = 1/2 only");
    }

    #[test]
    fn self_similar_1t_reduces_to_lamperti() {
        // the [1,T] level-0 event equals the stationary Lamperti event on
        // [0, ln T]; check the engine wiring by comparing against an explicit
        // stationary run with the same seed and grid
        let cfg = EnsembleConfig {
            leader_kernel: KernelSpec::Fbm { h: 0.5 },
            pursuer_kernels: vec![(KernelSpec::Fbm { h: 0.5 }, 2)],
            horizon: 8.0,
            level: 0.0,
            formulation: Formulation::SelfSimilar1T,
            grid_per_unit: 32,
            bridge_correction: false,
        };
        let a = estimate_survival(&cfg, 5, 2_000).unwrap();
        let horizon = 8.0f64.ln();
        let steps = (horizon * 32.0).ceil() as usize;
        let stat = EnsembleConfig {
            leader_kernel: KernelSpec::LampertiFbm { h: 0.5 },
            pursuer_kernels: vec![(KernelSpec::LampertiFbm { h: 0.5 }, 2)],
            horizon,
            level: 0.0,
            formulation: Formulation::Stationary0T,
            grid_per_unit: 32,
            bridge_correction: false,
        };
        // the stationary engine builds the same grid: ceil(ln 8 * 32) + 1 points
        let b = estimate_survival(&stat, 5, 2_000).unwrap();
        let _ = steps;
        assert_eq!(a.survivors, b.survivors, "identical reduction, identical draws");
    }
}
