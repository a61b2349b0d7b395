//! Exact synthesis of Gaussian path batches on uniform grids.
//!
//! Stationary sequences go through the minimal circulant embedding of their
//! Toeplitz covariance (eigenvalues by FFT, exact in distribution up to
//! floating point); FBM goes through its increment process. Two kernels admit
//! equally exact shortcuts that bypass the FFT: the H = 1/2 Lamperti kernel
//! is Markov (AR(1) recursion) and H = 1/2 fractional Gaussian noise is white.
//! A dense Cholesky factorization serves as the fallback for embeddings that
//! fail and for arbitrary covariance matrices.

use crate::kernels::{KernelError, KernelSpec};
use crate::rng::{self, BATCH_STREAM};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SamplingError {
    /// The circulant embedding produced an eigenvalue below -tolerance.
    #[error("circulant embedding failed: minimum eigenvalue {0:e}")]
    NegativeEigenvalue(f64),
    #[error("covariance is not positive definite (pivot {pivot:e} at index {index})")]
    NotPositiveDefinite { pivot: f64, index: usize },
    #[error("covariance dimension {0} exceeds the Cholesky cap {MAX_CHOLESKY_DIM}")]
    DimensionTooLarge(usize),
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("path dump i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("path dump parse: {0}")]
    Parse(String),
}

/// Dimension cap for the dense Cholesky route.
pub const MAX_CHOLESKY_DIM: usize = 4096;

/// Eigenvalues in [-NEG_EIG_TOL * max, 0) are clipped to zero; anything more
/// negative is a hard embedding failure.
pub const NEG_EIG_TOL: f64 = 1e-10;

/// A closed uniform time grid, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub t_start: f64,
    pub t_end: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn new(t_start: f64, t_end: f64, points: usize) -> Result<Self, SamplingError> {
        if !(t_end > t_start) || !t_start.is_finite() || !t_end.is_finite() {
            return Err(SamplingError::Grid(format!(
                "need finite t_end > t_start, got [{t_start}, {t_end}]"
            )));
        }
        if points < 2 {
            return Err(SamplingError::Grid(format!(
                "need at least 2 grid points, got {points}"
            )));
        }
        Ok(GridSpec { t_start, t_end, points })
    }

    pub fn spacing(&self) -> f64 {
        (self.t_end - self.t_start) / (self.points - 1) as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        if i + 1 == self.points {
            self.t_end
        } else {
            self.t_start + self.spacing() * i as f64
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.time(i)).collect()
    }
}

/// A batch of sampled paths, row-major `batch x points`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch {
    pub grid: GridSpec,
    /// Kernel the batch was drawn from; `None` for raw-covariance sampling.
    pub kernel: Option<KernelSpec>,
    pub seed: u64,
    /// Global index of the first path in this batch (chunked generation).
    pub batch_index: u64,
    pub batch: usize,
    pub paths: Vec<f64>,
}

impl PathBatch {
    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.grid.points;
        &self.paths[i * p..(i + 1) * p]
    }

    /// Concatenate chunked batches (in index order) into one batch.
    pub fn concat(mut parts: Vec<PathBatch>) -> Option<PathBatch> {
        parts.sort_by_key(|b| b.batch_index);
        let mut it = parts.into_iter();
        let mut acc = it.next()?;
        for b in it {
            debug_assert_eq!(b.batch_index, acc.batch_index + acc.batch as u64);
            acc.paths.extend_from_slice(&b.paths);
            acc.batch += b.batch;
        }
        Some(acc)
    }
}

/// Eigenvalues of the minimal circulant embedding of the Toeplitz covariance
/// defined by `correlations[k] = r(k * spacing)`, `k = 0..=L`; the embedding
/// has length `2L`. Tiny negative eigenvalues (rounding) are clipped to zero;
/// genuine negatives are an error the caller handles by enlarging the
/// embedding or falling back to Cholesky.
pub fn circulant_spectrum(correlations: &[f64]) -> Result<Vec<f64>, SamplingError> {
    let l = correlations.len() - 1;
    if l < 1 {
        return Err(SamplingError::Grid("need at least two correlation values".into()));
    }
    let m = 2 * l;
    let mut buf: Vec<Complex64> = (0..m)
        .map(|j| Complex64::new(correlations[j.min(m - j)], 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let mut eig: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -NEG_EIG_TOL * max.max(1e-300) {
        return Err(SamplingError::NegativeEigenvalue(min));
    }
    for e in &mut eig {
        if *e < 0.0 {
            *e = 0.0;
        }
    }
    Ok(eig)
}

fn next_pow2(n: usize) -> usize {
    n.next_power_of_two().max(2)
}

enum Route {
    /// Spectral square roots of the embedding eigenvalues, scaled by 1/sqrt(M).
    Circulant {
        scaled_sqrt_eig: Arc<Vec<f64>>,
        fft: Arc<dyn Fft<f64>>,
    },
    /// Exact Markov recursion for the exponential (H = 1/2 Lamperti) kernel.
    Ar1 { rho: f64, innovation: f64 },
}

/// Draws stationary paths with the exact Toeplitz covariance of a kernel on a
/// uniform grid. Stateless after construction; one instance serves any number
/// of threads.
pub struct StationarySampler {
    grid: GridSpec,
    kernel: KernelSpec,
    route: Route,
}

/// Reusable per-thread scratch for path synthesis.
#[derive(Default)]
pub struct SamplerScratch {
    spectral: Vec<Complex64>,
    fft_scratch: Vec<Complex64>,
}

impl StationarySampler {
    pub fn new(kernel: &KernelSpec, grid: GridSpec) -> Result<Self, SamplingError> {
        if !kernel.is_stationary() {
            return Err(KernelError::NotStationary(kernel.tag()).into());
        }
        let dt = grid.spacing();
        if let KernelSpec::LampertiFbm { h } = kernel {
            if *h == 0.5 {
                // r(k dt) = e^{-k dt / 2} exactly: the sequence is AR(1)
                let rho = (-dt / 2.0).exp();
                return Ok(StationarySampler {
                    grid,
                    kernel: kernel.clone(),
                    route: Route::Ar1 { rho, innovation: (1.0 - rho * rho).sqrt() },
                });
            }
        }
        // embedding length: smallest power of two >= 2 (points - 1), doubled
        // on failure up to 3 times
        let mut l = next_pow2(grid.points - 1);
        let mut last_err = None;
        for _ in 0..4 {
            let corr: Result<Vec<f64>, KernelError> =
                (0..=l).map(|k| kernel.correlation(k as f64 * dt)).collect();
            match circulant_spectrum(&corr?) {
                Ok(eig) => {
                    let m = 2 * l;
                    let scale = 1.0 / (m as f64).sqrt();
                    let scaled: Vec<f64> =
                        eig.iter().map(|&e| e.sqrt() * scale).collect();
                    let fft = FftPlanner::new().plan_fft_forward(m);
                    return Ok(StationarySampler {
                        grid,
                        kernel: kernel.clone(),
                        route: Route::Circulant {
                            scaled_sqrt_eig: Arc::new(scaled),
                            fft,
                        },
                    });
                }
                Err(e @ SamplingError::NegativeEigenvalue(_)) => {
                    last_err = Some(e);
                    l *= 2;
                }
                Err(e) => return Err(e),
            }
        }
        Err(last_err.expect("loop ran at least once"))
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    /// Fill `out` (length = grid.points) with one path drawn from `rng`.
    pub fn sample_into(&self, rng: &mut ChaCha8Rng, scratch: &mut SamplerScratch, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.grid.points);
        match &self.route {
            Route::Ar1 { rho, innovation } => {
                let mut x: f64 = rng.sample(StandardNormal);
                out[0] = x;
                for o in out.iter_mut().skip(1) {
                    let g: f64 = rng.sample(StandardNormal);
                    x = rho * x + innovation * g;
                    *o = x;
                }
            }
            Route::Circulant { scaled_sqrt_eig, fft } => {
                let m = scaled_sqrt_eig.len();
                let half = m / 2;
                let buf = &mut scratch.spectral;
                buf.resize(m, Complex64::new(0.0, 0.0));
                let g0: f64 = rng.sample(StandardNormal);
                let gh: f64 = rng.sample(StandardNormal);
                buf[0] = Complex64::new(scaled_sqrt_eig[0] * g0, 0.0);
                buf[half] = Complex64::new(scaled_sqrt_eig[half] * gh, 0.0);
                for k in 1..half {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    let a = scaled_sqrt_eig[k] * std::f64::consts::FRAC_1_SQRT_2;
                    buf[k] = Complex64::new(a * re, a * im);
                    buf[m - k] = buf[k].conj();
                }
                scratch
                    .fft_scratch
                    .resize(fft.get_inplace_scratch_len(), Complex64::new(0.0, 0.0));
                fft.process_with_scratch(buf, &mut scratch.fft_scratch);
                for (o, c) in out.iter_mut().zip(buf.iter()) {
                    *o = c.re;
                }
            }
        }
    }
}

/// Draws FBM paths pinned to zero at t = 0 by cumulative summation of the
/// stationary fractional-Gaussian-noise increment sequence.
pub struct FbmSampler {
    grid: GridSpec,
    h: f64,
    route: Route,
}

impl FbmSampler {
    pub fn new(h: f64, grid: GridSpec) -> Result<Self, SamplingError> {
        KernelSpec::fbm(h)?; // validates H
        if grid.t_start != 0.0 {
            return Err(SamplingError::Grid(format!(
                "FBM grids start at 0, got t_start = {}",
                grid.t_start
            )));
        }
        let dt = grid.spacing();
        let sigma = dt.powf(h);
        if h == 0.5 {
            // increments are white
            return Ok(FbmSampler {
                grid,
                h,
                route: Route::Ar1 { rho: 0.0, innovation: sigma },
            });
        }
        let increments = grid.points - 1;
        let mut l = next_pow2(increments);
        let mut last_err = None;
        for _ in 0..4 {
            // fGn autocovariance: sigma^2 (|k+1|^{2H} - 2|k|^{2H} + |k-1|^{2H}) / 2
            let corr: Vec<f64> = (0..=l)
                .map(|k| {
                    let k = k as f64;
                    0.5 * sigma
                        * sigma
                        * ((k + 1.0).powf(2.0 * h) - 2.0 * k.powf(2.0 * h)
                            + (k - 1.0).abs().powf(2.0 * h))
                })
                .collect();
            match circulant_spectrum(&corr) {
                Ok(eig) => {
                    let m = 2 * l;
                    let scale = 1.0 / (m as f64).sqrt();
                    let scaled: Vec<f64> = eig.iter().map(|&e| e.sqrt() * scale).collect();
                    let fft = FftPlanner::new().plan_fft_forward(m);
                    return Ok(FbmSampler {
                        grid,
                        h,
                        route: Route::Circulant { scaled_sqrt_eig: Arc::new(scaled), fft },
                    });
                }
                Err(e @ SamplingError::NegativeEigenvalue(_)) => {
                    last_err = Some(e);
                    l *= 2;
                }
                Err(e) => return Err(e),
            }
        }
        Err(last_err.expect("loop ran at least once"))
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn hurst(&self) -> f64 {
        self.h
    }

    pub fn sample_into(&self, rng: &mut ChaCha8Rng, scratch: &mut SamplerScratch, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.grid.points);
        let n_inc = self.grid.points - 1;
        match &self.route {
            Route::Ar1 { innovation, .. } => {
                // white increments, sigma = dt^H
                let mut acc = 0.0;
                out[0] = 0.0;
                for o in out.iter_mut().skip(1) {
                    let g: f64 = rng.sample(StandardNormal);
                    acc += innovation * g;
                    *o = acc;
                }
            }
            Route::Circulant { scaled_sqrt_eig, fft } => {
                let m = scaled_sqrt_eig.len();
                let half = m / 2;
                let buf = &mut scratch.spectral;
                buf.resize(m, Complex64::new(0.0, 0.0));
                let g0: f64 = rng.sample(StandardNormal);
                let gh: f64 = rng.sample(StandardNormal);
                buf[0] = Complex64::new(scaled_sqrt_eig[0] * g0, 0.0);
                buf[half] = Complex64::new(scaled_sqrt_eig[half] * gh, 0.0);
                for k in 1..half {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    let a = scaled_sqrt_eig[k] * std::f64::consts::FRAC_1_SQRT_2;
                    buf[k] = Complex64::new(a * re, a * im);
                    buf[m - k] = buf[k].conj();
                }
                scratch
                    .fft_scratch
                    .resize(fft.get_inplace_scratch_len(), Complex64::new(0.0, 0.0));
                fft.process_with_scratch(buf, &mut scratch.fft_scratch);
                let mut acc = 0.0;
                out[0] = 0.0;
                for (o, c) in out.iter_mut().skip(1).zip(buf.iter().take(n_inc)) {
                    acc += c.re;
                    *o = acc;
                }
            }
        }
    }
}

fn batch_from_sampler<F>(
    grid: GridSpec,
    kernel: Option<KernelSpec>,
    seed: u64,
    first: u64,
    count: usize,
    sample_one: F,
) -> PathBatch
where
    F: Fn(&mut ChaCha8Rng, &mut SamplerScratch, &mut [f64]) + Sync,
{
    let points = grid.points;
    let mut paths = vec![0.0f64; count * points];
    paths
        .par_chunks_mut(points)
        .enumerate()
        .for_each(|(i, row)| {
            let mut rng = rng::rng_for(seed, BATCH_STREAM, first + i as u64);
            let mut scratch = SamplerScratch::default();
            sample_one(&mut rng, &mut scratch, row);
        });
    PathBatch { grid, kernel, seed, batch_index: first, batch: count, paths }
}

/// Sample `batch` independent stationary paths; rows are deterministic
/// functions of `(seed, global path index)`, so chunked generation matches.
pub fn sample_stationary(
    kernel: &KernelSpec,
    grid: GridSpec,
    seed: u64,
    batch: usize,
) -> Result<PathBatch, SamplingError> {
    sample_stationary_chunk(kernel, grid, seed, 0, batch)
}

/// Chunked variant: produces paths with global indices `first..first+count`.
pub fn sample_stationary_chunk(
    kernel: &KernelSpec,
    grid: GridSpec,
    seed: u64,
    first: u64,
    count: usize,
) -> Result<PathBatch, SamplingError> {
    let sampler = StationarySampler::new(kernel, grid)?;
    Ok(batch_from_sampler(
        grid,
        Some(kernel.clone()),
        seed,
        first,
        count,
        |rng, scratch, row| sampler.sample_into(rng, scratch, row),
    ))
}

/// Sample `batch` independent FBM paths on a grid starting at 0; column 0 is
/// exactly zero.
pub fn sample_fbm(
    h: f64,
    grid: GridSpec,
    seed: u64,
    batch: usize,
) -> Result<PathBatch, SamplingError> {
    sample_fbm_chunk(h, grid, seed, 0, batch)
}

pub fn sample_fbm_chunk(
    h: f64,
    grid: GridSpec,
    seed: u64,
    first: u64,
    count: usize,
) -> Result<PathBatch, SamplingError> {
    let sampler = FbmSampler::new(h, grid)?;
    Ok(batch_from_sampler(
        grid,
        Some(KernelSpec::Fbm { h }),
        seed,
        first,
        count,
        |rng, scratch, row| sampler.sample_into(rng, scratch, row),
    ))
}

/// Lower-triangular Cholesky factor with escalating diagonal jitter.
pub struct CholeskyFactor {
    pub dim: usize,
    /// Row-major lower triangle, full dim x dim storage.
    pub l: Vec<f64>,
}

impl CholeskyFactor {
    /// Factor a symmetric covariance given as row-major `dim x dim` values.
    pub fn new(cov: &[f64], dim: usize) -> Result<Self, SamplingError> {
        if dim == 0 || cov.len() != dim * dim {
            return Err(SamplingError::Grid(format!(
                "covariance must be dim x dim, got len {} for dim {dim}",
                cov.len()
            )));
        }
        if dim > MAX_CHOLESKY_DIM {
            return Err(SamplingError::DimensionTooLarge(dim));
        }
        let mean_diag =
            (0..dim).map(|i| cov[i * dim + i].abs()).sum::<f64>() / dim as f64;
        let mut jitter = 0.0;
        let mut last = SamplingError::NotPositiveDefinite { pivot: f64::NAN, index: 0 };
        for attempt in 0..4 {
            match Self::factor(cov, dim, jitter) {
                Ok(l) => return Ok(CholeskyFactor { dim, l }),
                Err(e) => {
                    last = e;
                    jitter = if attempt == 0 {
                        1e-12 * mean_diag.max(1e-300)
                    } else {
                        jitter * 100.0
                    };
                }
            }
        }
        Err(last)
    }

    fn factor(cov: &[f64], n: usize, jitter: f64) -> Result<Vec<f64>, SamplingError> {
        let mut l = vec![0.0f64; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = cov[i * n + j] + if i == j { jitter } else { 0.0 };
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if s <= 0.0 || !s.is_finite() {
                        return Err(SamplingError::NotPositiveDefinite { pivot: s, index: i });
                    }
                    l[i * n + j] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Ok(l)
    }

    pub fn sample_into(&self, rng: &mut ChaCha8Rng, z: &mut Vec<f64>, out: &mut [f64]) {
        let n = self.dim;
        z.clear();
        z.extend((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        for i in 0..n {
            let mut acc = 0.0;
            for k in 0..=i {
                acc += self.l[i * n + k] * z[k];
            }
            out[i] = acc;
        }
    }
}

/// Exact sampling from an arbitrary covariance matrix via its triangular
/// factor; the fallback for grids the circulant embedding cannot handle.
pub fn cholesky_sample(
    cov: &[f64],
    dim: usize,
    seed: u64,
    batch: usize,
) -> Result<PathBatch, SamplingError> {
    let factor = CholeskyFactor::new(cov, dim)?;
    let grid = GridSpec::new(0.0, (dim.max(2) - 1) as f64, dim.max(2))?;
    let grid = GridSpec { points: dim, ..grid };
    let mut paths = vec![0.0f64; batch * dim];
    paths.par_chunks_mut(dim).enumerate().for_each(|(i, row)| {
        let mut rng = rng::rng_for(seed, BATCH_STREAM, i as u64);
        let mut z = Vec::new();
        factor.sample_into(&mut rng, &mut z, row);
    });
    Ok(PathBatch {
        grid,
        kernel: None,
        seed,
        batch_index: 0,
        batch,
        paths,
    })
}

// ---------------------------------------------------------------------------
// Path dump
// ---------------------------------------------------------------------------

use crate::textio::fmt_f64;

impl PathBatch {
    /// Write the batch as a stable text matrix with a small header.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<(), SamplingError> {
        writeln!(w, "# leadlab-paths-v1")?;
        let kernel_json = match &self.kernel {
            Some(k) => serde_json::to_string(k).expect("kernel serializes"),
            None => "null".to_string(),
        };
        writeln!(w, "# kernel: {kernel_json}")?;
        writeln!(
            w,
            "# grid: {} {} {}",
            fmt_f64(self.grid.t_start),
            fmt_f64(self.grid.t_end),
            self.grid.points
        )?;
        writeln!(w, "# seed: {}", self.seed)?;
        writeln!(w, "# batch_index: {}", self.batch_index)?;
        writeln!(w, "# batch: {}", self.batch)?;
        for i in 0..self.batch {
            let row: Vec<String> = self.row(i).iter().map(|&v| fmt_f64(v)).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<PathBatch, SamplingError> {
        let mut lines = r.lines();
        let magic = lines
            .next()
            .ok_or_else(|| SamplingError::Parse("empty file".into()))??;
        if magic.trim() != "# leadlab-paths-v1" {
            return Err(SamplingError::Parse(format!("bad magic line {magic:?}")));
        }
        let mut kernel = None;
        let mut grid = None;
        let mut seed = 0u64;
        let mut batch_index = 0u64;
        let mut batch = 0usize;
        let mut paths: Vec<f64> = Vec::new();
        for line in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(v) = rest.strip_prefix("kernel:") {
                    let v = v.trim();
                    if v != "null" {
                        kernel = Some(
                            serde_json::from_str::<KernelSpec>(v)
                                .map_err(|e| SamplingError::Parse(e.to_string()))?,
                        );
                    }
                } else if let Some(v) = rest.strip_prefix("grid:") {
                    let parts: Vec<&str> = v.split_whitespace().collect();
                    if parts.len() != 3 {
                        return Err(SamplingError::Parse(format!("bad grid line {line:?}")));
                    }
                    let t0: f64 = parts[0].parse().map_err(|_| {
                        SamplingError::Parse(format!("bad grid start {:?}", parts[0]))
                    })?;
                    let t1: f64 = parts[1].parse().map_err(|_| {
                        SamplingError::Parse(format!("bad grid end {:?}", parts[1]))
                    })?;
                    let p: usize = parts[2].parse().map_err(|_| {
                        SamplingError::Parse(format!("bad grid points {:?}", parts[2]))
                    })?;
                    grid = Some(GridSpec::new(t0, t1, p)?);
                } else if let Some(v) = rest.strip_prefix("seed:") {
                    seed = v.trim().parse().map_err(|_| {
                        SamplingError::Parse(format!("bad seed {v:?}"))
                    })?;
                } else if let Some(v) = rest.strip_prefix("batch_index:") {
                    batch_index = v.trim().parse().map_err(|_| {
                        SamplingError::Parse(format!("bad batch_index {v:?}"))
                    })?;
                } else if let Some(v) = rest.strip_prefix("batch:") {
                    batch = v.trim().parse().map_err(|_| {
                        SamplingError::Parse(format!("bad batch {v:?}"))
                    })?;
                }
                continue;
            }
            for tok in line.split_whitespace() {
                paths.push(tok.parse().map_err(|_| {
                    SamplingError::Parse(format!("bad value {tok:?}"))
                })?);
            }
        }
        let grid = grid.ok_or_else(|| SamplingError::Parse("missing grid header".into()))?;
        if paths.len() != batch * grid.points {
            return Err(SamplingError::Parse(format!(
                "expected {} values, found {}",
                batch * grid.points,
                paths.len()
            )));
        }
        Ok(PathBatch { grid, kernel, seed, batch_index, batch, paths })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_basics() {
        let g = GridSpec::new(0.0, 2.0, 5).unwrap();
        assert_eq!(g.spacing(), 0.5);
        assert_eq!(g.times(), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert!(GridSpec::new(0.0, 0.0, 5).is_err());
        assert!(GridSpec::new(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn circulant_spectrum_white_noise() {
        let mut r = vec![0.0; 9];
        r[0] = 1.0;
        let eig = circulant_spectrum(&r).unwrap();
        assert_eq!(eig.len(), 16);
        for e in &eig {
            assert!((e - 1.0).abs() < 1e-12, "flat spectrum, got {e}");
        }
    }

    #[test]
    fn circulant_spectrum_vs_direct_dft() {
        // independent oracle: direct O(M^2) DFT of the embedded sequence
        let dt = 0.1;
        let l = 256;
        let r: Vec<f64> = (0..=l).map(|k| (-(k as f64) * dt / 2.0).exp()).collect();
        let eig = circulant_spectrum(&r).unwrap();
        let m = 2 * l;
        for &j in &[0usize, 1, 7, 100, 255, 256, 400] {
            let mut acc = 0.0;
            for k in 0..m {
                let c = r[k.min(m - k)];
                acc += c * (2.0 * std::f64::consts::PI * (j * k) as f64 / m as f64).cos();
            }
            assert!(
                (eig[j] - acc).abs() < 1e-9 * acc.abs().max(1.0),
                "eig[{j}] = {} vs direct {acc}",
                eig[j]
            );
            assert!(eig[j] > 0.0);
        }
        // trace identity: sum of eigenvalues = M * r(0)
        let sum: f64 = eig.iter().sum();
        assert!((sum - m as f64).abs() < 1e-8 * m as f64);
    }

    #[test]
    fn stationary_batch_deterministic_and_chunkable() {
        let kernel = KernelSpec::lamperti_fbm(0.7).unwrap();
        let grid = GridSpec::new(0.0, 2.0, 33).unwrap();
        let full = sample_stationary(&kernel, grid, 99, 10).unwrap();
        let again = sample_stationary(&kernel, grid, 99, 10).unwrap();
        assert_eq!(full, again, "fixed seed must reproduce bit-identical batches");
        let a = sample_stationary_chunk(&kernel, grid, 99, 0, 3).unwrap();
        let b = sample_stationary_chunk(&kernel, grid, 99, 3, 4).unwrap();
        let c = sample_stationary_chunk(&kernel, grid, 99, 7, 3).unwrap();
        let glued = PathBatch::concat(vec![c, a, b]).unwrap();
        assert_eq!(glued.paths, full.paths, "chunked generation must concatenate exactly");
    }

    #[test]
    fn empty_batch_is_fine() {
        let kernel = KernelSpec::lamperti_fbm(0.5).unwrap();
        let grid = GridSpec::new(0.0, 1.0, 3).unwrap();
        let b = sample_stationary(&kernel, grid, 1, 0).unwrap();
        assert_eq!(b.batch, 0);
        assert!(b.paths.is_empty());
    }

    #[test]
    fn stationary_lag1_correlation() {
        // empirical lag-1 correlation within 5 standard errors of r(dt)
        let kernel = KernelSpec::lamperti_fbm(0.3).unwrap();
        let grid = GridSpec::new(0.0, 3.0, 31).unwrap();
        let n = 10_000;
        let b = sample_stationary(&kernel, grid, 7, n).unwrap();
        let want = kernel.correlation(grid.spacing()).unwrap();
        let mut acc = 0.0;
        for i in 0..n {
            let row = b.row(i);
            acc += row[4] * row[5];
        }
        let est = acc / n as f64;
        // var(XY) = 1 + r^2 for unit-variance jointly Gaussian X, Y
        let se = ((1.0 + want * want) / n as f64).sqrt();
        assert!(
            (est - want).abs() < 5.0 * se,
            "lag-1 corr {est} vs {want} (se {se})"
        );
    }

    #[test]
    fn ar1_route_matches_kernel_covariance() {
        // H = 1/2 goes through the Markov recursion; check lag-k covariance
        let kernel = KernelSpec::lamperti_fbm(0.5).unwrap();
        let grid = GridSpec::new(0.0, 4.0, 65).unwrap();
        let n = 20_000;
        let b = sample_stationary(&kernel, grid, 21, n).unwrap();
        for lag in [0usize, 1, 8, 32] {
            let want = kernel.correlation(lag as f64 * grid.spacing()).unwrap();
            let mut acc = 0.0;
            for i in 0..n {
                let row = b.row(i);
                acc += row[10] * row[10 + lag];
            }
            let est = acc / n as f64;
            let var = if lag == 0 { 2.0 } else { 1.0 + want * want };
            let se = (var / n as f64).sqrt();
            assert!(
                (est - want).abs() < 5.0 * se,
                "lag {lag}: {est} vs {want} (se {se})"
            );
        }
    }

    #[test]
    fn fbm_pinned_and_variance() {
        let grid = GridSpec::new(0.0, 2.0, 129).unwrap();
        let n = 10_000;
        let b = sample_fbm(0.5, grid, 3, n).unwrap();
        for i in 0..n {
            assert_eq!(b.row(i)[0], 0.0, "FBM starts at exactly 0");
        }
        // Var(B(t)) = t at H = 1/2, tested at the endpoint
        let mut acc = 0.0;
        for i in 0..n {
            let v = b.row(i)[128];
            acc += v * v;
        }
        let est = acc / n as f64;
        let se = 2.0 * (2.0f64 / n as f64).sqrt(); // var(X^2) = 2 t^2
        assert!((est - 2.0).abs() < 5.0 * se, "Var(B(2)) = {est} (se {se})");
        // Cov(B(1), B(2)) = 1 by independent increments
        let i1 = 64;
        let mut acc = 0.0;
        for i in 0..n {
            acc += b.row(i)[i1] * b.row(i)[128];
        }
        let est = acc / n as f64;
        // var(B1 B2) = cov^2 + var var = 1 + 2
        let se = (3.0f64 / n as f64).sqrt();
        assert!((est - 1.0).abs() < 5.0 * se, "Cov(B(1),B(2)) = {est}");
    }

    #[test]
    fn fbm_increment_law_h075() {
        let grid = GridSpec::new(0.0, 2.0, 129).unwrap();
        let n = 10_000;
        let b = sample_fbm(0.75, grid, 5, n).unwrap();
        // E (B(t) - B(s))^2 = |t-s|^{2H} at (s,t) = (0.5, 1.5)
        let (i_s, i_t) = (32, 96);
        let want = 1.0f64; // |1|^{1.5}
        let mut acc = 0.0;
        for i in 0..n {
            let d = b.row(i)[i_t] - b.row(i)[i_s];
            acc += d * d;
        }
        let est = acc / n as f64;
        let se = want * (2.0f64 / n as f64).sqrt();
        assert!((est - want).abs() < 5.0 * se, "increment variance {est} vs {want}");
    }

    #[test]
    fn cholesky_identity_and_correlated() {
        // identity covariance: i.i.d. standard normals
        let dim = 3;
        let mut cov = vec![0.0; 9];
        for i in 0..3 {
            cov[i * 3 + i] = 1.0;
        }
        let n = 20_000;
        let b = cholesky_sample(&cov, dim, 11, n).unwrap();
        let mut mean = 0.0;
        let mut var = 0.0;
        for i in 0..n {
            let v = b.row(i)[1];
            mean += v;
            var += v * v;
        }
        mean /= n as f64;
        var /= n as f64;
        assert!(mean.abs() < 5.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() < 5.0 * (2.0f64 / n as f64).sqrt());

        // 2x2 with correlation 0.9
        let cov = vec![1.0, 0.9, 0.9, 1.0];
        let b = cholesky_sample(&cov, 2, 12, n).unwrap();
        let mut acc = 0.0;
        for i in 0..n {
            acc += b.row(i)[0] * b.row(i)[1];
        }
        let est = acc / n as f64;
        let se = ((1.0 + 0.81) / n as f64).sqrt();
        assert!((est - 0.9).abs() < 5.0 * se, "corr {est}");

        // dimension 1: plain scaling
        let b = cholesky_sample(&[4.0], 1, 13, n).unwrap();
        let mut var = 0.0;
        for i in 0..n {
            var += b.paths[i] * b.paths[i];
        }
        var /= n as f64;
        assert!((var - 4.0).abs() < 5.0 * 4.0 * (2.0f64 / n as f64).sqrt());
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        // eigenvalues 1 +/- 2: genuinely indefinite
        let cov = vec![1.0, 2.0, 2.0, 1.0];
        assert!(matches!(
            cholesky_sample(&cov, 2, 1, 4),
            Err(SamplingError::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn path_dump_roundtrip() {
        let kernel = KernelSpec::lamperti_fbm(0.6).unwrap();
        let grid = GridSpec::new(0.0, 1.0, 9).unwrap();
        let b = sample_stationary(&kernel, grid, 5, 4).unwrap();
        let mut buf = Vec::new();
        b.write_text(&mut buf).unwrap();
        let back = PathBatch::read_text(&buf[..]).unwrap();
        assert_eq!(b, back, "text dump must round-trip exactly");
    }
}
