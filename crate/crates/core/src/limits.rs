//! Samplers for the joint asymptotic distribution of the normalized
//! estimator and the three variance estimators, driven by truncated
//! coefficient arrays ν indexed by triples `(k1, k2, k3)`.
//!
//! With `(Z_k)` i.i.d. standard normal and the partition K1 (`k1>0` only),
//! K2 (`k2>0` only), K3 (`k1,k2>0, k3=0`), K4 (`k3>0`):
//!
//! ```text
//! L   = Σ_{K1} ν Z + Σ_{K2} ν Z + Σ_{K3} ν Z_{k1,0,0} Z_{0,k2,0} + Σ_{K4} ν Z
//! V1  = Σ_{K4} ν⊗² + Σ_{k1>0} (ν_{k1,0,0} + Σ_{k2>0} ν_{k1,k2,0} Z_{0,k2,0})⊗²
//! V2  = Σ_{K4} ν⊗² + Σ_{k2>0} (ν_{0,k2,0} + Σ_{k1>0} ν_{k1,k2,0} Z_{k1,0,0})⊗²
//! V12 = Σ_{K3∪K4} ν⊗²          (deterministic)
//! ```
//!
//! On top of the generic sampler this module drives three experiments: the
//! interaction-strength sweep where the max-of-three t-test overrejects, the
//! bivariate counterexample with asymptotically singular one-way variance
//! matrices, and the confidence-interval power-loss study.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngExt};
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::inference::{f_ddg, normal_quantile};
use crate::linalg::{self, SymMatrix};
use crate::rng::stream_rng;
use crate::variance::GridAccumulator;

/// Default truncation: indices above this are rejected by
/// [`LimitCoefficients::new`].
pub const DEFAULT_K_MAX: u16 = 10;

/// Which partition class a triple belongs to.
fn class_of(k: (u16, u16, u16)) -> u8 {
    match k {
        (k1, 0, 0) if k1 > 0 => 1,
        (0, k2, 0) if k2 > 0 => 2,
        (k1, k2, 0) if k1 > 0 && k2 > 0 => 3,
        _ => 4, // k3 > 0 (the zero triple is rejected at construction)
    }
}

/// Truncated coefficient array driving the limit sampler.
#[derive(Debug, Clone)]
pub struct LimitCoefficients {
    d: usize,
    k_max: u16,
    nu: BTreeMap<(u16, u16, u16), DVector<f64>>,
}

impl LimitCoefficients {
    pub fn new(
        d: usize,
        entries: impl IntoIterator<Item = ((u16, u16, u16), DVector<f64>)>,
    ) -> Result<Self> {
        Self::with_truncation(d, entries, DEFAULT_K_MAX)
    }

    pub fn with_truncation(
        d: usize,
        entries: impl IntoIterator<Item = ((u16, u16, u16), DVector<f64>)>,
        k_max: u16,
    ) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        let mut nu = BTreeMap::new();
        for (k, v) in entries {
            if k == (0, 0, 0) {
                return Err(Error::InvalidInput(
                    "the zero triple carries no coefficient".into(),
                ));
            }
            if k.0 > k_max || k.1 > k_max || k.2 > k_max {
                return Err(Error::InvalidInput(format!(
                    "index {k:?} exceeds the truncation bound {k_max}"
                )));
            }
            if v.len() != d || v.iter().any(|c| !c.is_finite()) {
                return Err(Error::ContractViolation(
                    "coefficients must be finite d-vectors".into(),
                ));
            }
            nu.insert(k, v);
        }
        Ok(Self { d, k_max, nu })
    }

    /// Scalar coefficients `(c1, c2, c3, c4)` on the triples `(1,0,0)`,
    /// `(0,1,0)`, `(1,1,0)`, `(0,0,1)`; zero coefficients are dropped from
    /// the support.
    pub fn scalar(c: [f64; 4]) -> Result<Self> {
        let keys = [(1, 0, 0), (0, 1, 0), (1, 1, 0), (0, 0, 1)];
        let entries = keys
            .into_iter()
            .zip(c)
            .filter(|&(_, coef)| coef != 0.0)
            .map(|(k, coef)| (k, DVector::from_column_slice(&[coef])));
        Self::new(1, entries)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn k_max(&self) -> u16 {
        self.k_max
    }

    /// Σ‖ν‖² over the whole support.
    pub fn total_norm_sq(&self) -> f64 {
        self.nu.values().map(|v| v.norm_squared()).sum()
    }

    /// The deterministic limit `V12 = Σ_{K3∪K4} ν⊗²`.
    pub fn v12(&self) -> Result<SymMatrix> {
        let mut m = DMatrix::<f64>::zeros(self.d, self.d);
        for (&k, v) in &self.nu {
            if class_of(k) >= 3 {
                m += v * v.transpose();
            }
        }
        SymMatrix::new(m)
    }
}

/// One joint draw of `(L, V1, V2, V12)`.
#[derive(Debug, Clone)]
pub struct LimitDraw {
    pub l: DVector<f64>,
    pub v1: SymMatrix,
    pub v2: SymMatrix,
    pub v12: SymMatrix,
}

/// Draws from the limit distribution.
///
/// Normal variates are drawn only for indices in the support (row indices in
/// ascending order, then column indices, then the K4 triples in
/// lexicographic order), so enlarging the truncation bound beyond the
/// support changes nothing.
pub fn draw_limit<R: Rng>(coeffs: &LimitCoefficients, rng: &mut R) -> Result<LimitDraw> {
    let d = coeffs.d;
    let mut row_support: BTreeSet<u16> = BTreeSet::new();
    let mut col_support: BTreeSet<u16> = BTreeSet::new();
    for &k in coeffs.nu.keys() {
        match class_of(k) {
            1 => {
                row_support.insert(k.0);
            }
            2 => {
                col_support.insert(k.1);
            }
            3 => {
                row_support.insert(k.0);
                col_support.insert(k.1);
            }
            _ => {}
        }
    }
    let z_row: BTreeMap<u16, f64> = row_support
        .iter()
        .map(|&k| (k, rng.sample(StandardNormal)))
        .collect();
    let z_col: BTreeMap<u16, f64> = col_support
        .iter()
        .map(|&k| (k, rng.sample(StandardNormal)))
        .collect();
    let z4: BTreeMap<(u16, u16, u16), f64> = coeffs
        .nu
        .keys()
        .filter(|&&k| class_of(k) == 4)
        .map(|&k| (k, rng.sample(StandardNormal)))
        .collect();

    let mut l = DVector::<f64>::zeros(d);
    let mut k4_sum = DMatrix::<f64>::zeros(d, d);
    for (&k, v) in &coeffs.nu {
        match class_of(k) {
            1 => l += v * z_row[&k.0],
            2 => l += v * z_col[&k.1],
            3 => l += v * (z_row[&k.0] * z_col[&k.1]),
            _ => {
                l += v * z4[&k];
                k4_sum += v * v.transpose();
            }
        }
    }

    let mut v1 = k4_sum.clone();
    for &k1 in &row_support {
        let mut a = coeffs
            .nu
            .get(&(k1, 0, 0))
            .cloned()
            .unwrap_or_else(|| DVector::zeros(d));
        for &k2 in &col_support {
            if let Some(v) = coeffs.nu.get(&(k1, k2, 0)) {
                a += v * z_col[&k2];
            }
        }
        v1 += &a * a.transpose();
    }
    let mut v2 = k4_sum;
    for &k2 in &col_support {
        let mut a = coeffs
            .nu
            .get(&(0, k2, 0))
            .cloned()
            .unwrap_or_else(|| DVector::zeros(d));
        for &k1 in &row_support {
            if let Some(v) = coeffs.nu.get(&(k1, k2, 0)) {
                a += v * z_row[&k1];
            }
        }
        v2 += &a * a.transpose();
    }

    Ok(LimitDraw {
        l,
        v1: SymMatrix::new(v1)?,
        v2: SymMatrix::new(v2)?,
        v12: coeffs.v12()?,
    })
}

/// Normalized scalar coefficients `(1, 1, ζ, 0)/√(2 + ζ²)` of the
/// interaction sweep; their squared norm is 1.
pub fn zeta_coefficients(zeta: f64) -> [f64; 4] {
    let norm = (2.0 + zeta * zeta).sqrt();
    [1.0 / norm, 1.0 / norm, zeta / norm, 0.0]
}

/// Fast scalar draw of `(l, v1, v2, v12)` for coefficients `(c1..c4)`.
///
/// Matches [`draw_limit`] on the same stream: `z1` (row), `z2` (column),
/// then `z4` only when `c4 ≠ 0`.
fn draw_scalar<R: Rng>(c: [f64; 4], rng: &mut R) -> (f64, f64, f64, f64) {
    let [c1, c2, c3, c4] = c;
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    let z4: f64 = if c4 != 0.0 {
        rng.sample(StandardNormal)
    } else {
        0.0
    };
    let l = c1 * z1 + c2 * z2 + c3 * z1 * z2 + c4 * z4;
    let v1 = c4 * c4 + (c1 + c3 * z2) * (c1 + c3 * z2);
    let v2 = c4 * c4 + (c2 + c3 * z1) * (c2 + c3 * z1);
    let v12 = c4 * c4 + c3 * c3;
    (l, v1, v2, v12)
}

/// The max-of-three t statistic in the scalar limit.
fn scalar_t(l: f64, v1: f64, v2: f64, v12: f64) -> f64 {
    let se = v1
        .max(0.0)
        .sqrt()
        .max(v2.max(0.0).sqrt())
        .max((v1 + v2 - v12).max(0.0).sqrt());
    if se > 0.0 {
        (l / se).abs()
    } else if l == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

const SWEEP_CHUNK: usize = 8192;

/// Asymptotic level of the max-of-three t-test at nominal 5% for each ζ,
/// under coefficients `(1, 1, ζ, 0)/√(2 + ζ²)`.
pub fn zeta_sweep(zetas: &[f64], draws: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
    if draws == 0 {
        return Err(Error::InvalidInput("draws must be positive".into()));
    }
    if zetas.iter().any(|z| !(z.is_finite() && *z >= 0.0)) {
        return Err(Error::InvalidInput(
            "ζ values must be finite and ≥ 0".into(),
        ));
    }
    let crit = normal_quantile(0.975)?;
    let mut out = Vec::with_capacity(zetas.len());
    for (zi, &zeta) in zetas.iter().enumerate() {
        let c = zeta_coefficients(zeta);
        let n_chunks = draws.div_ceil(SWEEP_CHUNK);
        let rejections: usize = (0..n_chunks)
            .into_par_iter()
            .map(|chunk| {
                let lo = chunk * SWEEP_CHUNK;
                let hi = ((chunk + 1) * SWEEP_CHUNK).min(draws);
                let stream = (zi as u64) << 32 | chunk as u64;
                let mut rng = stream_rng(seed, stream);
                let mut count = 0usize;
                for _ in lo..hi {
                    let (l, v1, v2, v12) = draw_scalar(c, &mut rng);
                    if scalar_t(l, v1, v2, v12) > crit {
                        count += 1;
                    }
                }
                count
            })
            .sum();
        out.push((zeta, rejections as f64 / draws as f64));
    }
    Ok(out)
}

/// `(ζ, level)` pairs as CSV.
pub fn zeta_sweep_csv(levels: &[(f64, f64)]) -> String {
    let mut s = String::from("zeta,level\n");
    for (z, l) in levels {
        s.push_str(&format!("{z},{l}\n"));
    }
    s
}

/// Outcome of the bivariate counterexample simulation.
#[derive(Debug, Clone)]
pub struct CounterexampleReport {
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    /// Rejection rate of the min-of-three F-test at nominal 5%.
    pub level: f64,
    /// Median over draws of `λ_min(n·V̂1)`, which collapses to 0 as the
    /// one-way variance limit becomes singular.
    pub median_lambda_min_scaled: f64,
    /// Whether the second component was replaced by independent cell noise
    /// (which restores a non-degenerate limit).
    pub cell_noise_restored: bool,
}

/// Finite-sample level of the bivariate F-test for the mean of
/// `Y_ij = (U_i0 + U_0j + U_ij, U_i0·U_0j)`, whose one-way variance limits
/// are singular. With `restore_cell_noise` the second component becomes an
/// independent cell shock and the test is asymptotically exact.
pub fn multivariate_counterexample_level(
    n: usize,
    reps: usize,
    seed: u64,
    restore_cell_noise: bool,
) -> Result<CounterexampleReport> {
    if n < 2 || reps == 0 {
        return Err(Error::InvalidInput("need n ≥ 2 and reps ≥ 1".into()));
    }
    let zero = DVector::zeros(2);
    let outcomes: Vec<Result<(bool, f64)>> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream_rng(seed, rep);
            let u_row: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let u_col: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            // Stream the grid; at n = 400 it is too large to materialize
            // per replication.
            let mut acc = GridAccumulator::new(n, n, 2);
            let mut y = DVector::<f64>::zeros(2);
            for i in 0..n {
                for j in 0..n {
                    let u_cell: f64 = rng.sample(StandardNormal);
                    y[0] = u_row[i] + u_col[j] + u_cell;
                    y[1] = if restore_cell_noise {
                        rng.sample(StandardNormal)
                    } else {
                        u_row[i] * u_col[j]
                    };
                    acc.push(i, j, &y);
                }
            }
            // The estimator is the grid mean; the variance estimators are
            // demeaning-invariant, so raw draws can be pushed directly.
            let mean = acc.grid_mean();
            let v = acc.finish()?;
            let report = f_ddg(&mean, &zero, &v, 0.05)?;
            let scaled = v.v1.scale(n as f64);
            let dec = linalg::eigh(&scaled)?;
            Ok((report.reject, dec.eigenvalues[1]))
        })
        .collect();

    let mut rejects = 0usize;
    let mut lambdas = Vec::with_capacity(reps);
    for o in outcomes {
        let (r, lam) = o?;
        rejects += usize::from(r);
        lambdas.push(lam);
    }
    lambdas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(CounterexampleReport {
        n,
        reps,
        seed,
        level: rejects as f64 / reps as f64,
        median_lambda_min_scaled: lambdas[reps / 2],
        cell_noise_restored: restore_cell_noise,
    })
}

/// Summary of the power-loss study: the distribution over designs of the
/// ratio `R = E[se]/E[se1]` of mean confidence-interval lengths.
#[derive(Debug, Clone)]
pub struct PowerLossSummary {
    pub outer: usize,
    pub inner: usize,
    pub seed: u64,
    pub mean_ratio: f64,
    pub max_ratio: f64,
    pub min_ratio: f64,
    /// 100 histogram bins on `[1, 1.3]`: `(bin left edge, density)`.
    pub histogram: Vec<(f64, f64)>,
}

impl PowerLossSummary {
    pub fn histogram_csv(&self) -> String {
        let mut s = String::from("bin,density\n");
        for (left, dens) in &self.histogram {
            s.push_str(&format!("{left},{dens}\n"));
        }
        s
    }
}

const POWER_LOSS_GRID: usize = 10;
const HIST_BINS: usize = 100;
const HIST_LO: f64 = 1.0;
const HIST_HI: f64 = 1.3;

/// Draws designs with no row/column effects and unit total variance: the
/// interaction weight `Ω3 = 1 − Ω4` spread uniformly over a 10×10 grid of
/// interaction coefficients (a uniform point on the sphere of radius √Ω3),
/// `Ω4 ~ U(0,1)`. For each design, inner draws of the limit give
/// `R = E[max(se1, se2, se_u)]/E[se1]`.
pub fn power_loss_experiment(outer: usize, inner: usize, seed: u64) -> Result<PowerLossSummary> {
    if outer == 0 || inner == 0 {
        return Err(Error::InvalidInput("need outer ≥ 1 and inner ≥ 1".into()));
    }
    let ratios: Vec<f64> = (0..outer as u64)
        .into_par_iter()
        .map(|o| {
            let mut rng = stream_rng(seed, o);
            let omega4: f64 = rng.random();
            let omega3 = 1.0 - omega4;
            let g: Vec<f64> = (0..POWER_LOSS_GRID * POWER_LOSS_GRID)
                .map(|_| rng.sample(StandardNormal))
                .collect();
            let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            let scale = omega3.sqrt() / norm;
            let mu = DMatrix::from_fn(POWER_LOSS_GRID, POWER_LOSS_GRID, |r, c| {
                g[r * POWER_LOSS_GRID + c] * scale
            });

            let mut sum_se = 0.0;
            let mut sum_se1 = 0.0;
            let mut z_col = DVector::<f64>::zeros(POWER_LOSS_GRID);
            let mut z_row = DVector::<f64>::zeros(POWER_LOSS_GRID);
            for _ in 0..inner {
                for k in 0..POWER_LOSS_GRID {
                    z_col[k] = rng.sample(StandardNormal);
                }
                for k in 0..POWER_LOSS_GRID {
                    z_row[k] = rng.sample(StandardNormal);
                }
                let v1 = omega4 + (&mu * &z_col).norm_squared();
                let v2 = omega4 + (mu.transpose() * &z_row).norm_squared();
                // V12 = Ω3 + Ω4 = 1.
                let se1 = v1.sqrt();
                let se = se1.max(v2.sqrt()).max((v1 + v2 - 1.0).max(0.0).sqrt());
                sum_se += se;
                sum_se1 += se1;
            }
            sum_se / sum_se1
        })
        .collect();

    let mut counts = vec![0usize; HIST_BINS];
    let width = (HIST_HI - HIST_LO) / HIST_BINS as f64;
    let (mut min_r, mut max_r, mut sum_r) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for &r in &ratios {
        min_r = min_r.min(r);
        max_r = max_r.max(r);
        sum_r += r;
        let idx = (((r - HIST_LO) / width).floor() as isize).clamp(0, HIST_BINS as isize - 1);
        counts[idx as usize] += 1;
    }
    let histogram = counts
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            (
                HIST_LO + k as f64 * width,
                c as f64 / (outer as f64 * width),
            )
        })
        .collect();
    Ok(PowerLossSummary {
        outer,
        inner,
        seed,
        mean_ratio: sum_r / outer as f64,
        max_ratio: max_r,
        min_ratio: min_r,
        histogram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::normal_cdf;

    #[test]
    fn k4_only_support_collapses_to_constants() {
        let coeffs = LimitCoefficients::new(
            1,
            [
                ((0u16, 0u16, 1u16), DVector::from_column_slice(&[0.6])),
                ((0, 0, 2), DVector::from_column_slice(&[0.8])),
            ],
        )
        .unwrap();
        // Σ4 = 0.36 + 0.64 = 1.
        let mut rng = stream_rng(5, 0);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let draws = 20_000;
        for _ in 0..draws {
            let d = draw_limit(&coeffs, &mut rng).unwrap();
            assert!((d.v1.get(0, 0) - 1.0).abs() < 1e-12);
            assert!((d.v2.get(0, 0) - 1.0).abs() < 1e-12);
            assert!((d.v12.get(0, 0) - 1.0).abs() < 1e-12);
            sum += d.l[0];
            sum_sq += d.l[0] * d.l[0];
        }
        let mean = sum / draws as f64;
        let var = sum_sq / draws as f64 - mean * mean;
        assert!(mean.abs() < 0.03, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn scalar_fast_path_matches_generic_sampler() {
        for c in [[0.3, -0.2, 0.5, 0.4], [0.5, 0.5, 0.7, 0.0]] {
            let coeffs = LimitCoefficients::scalar(c).unwrap();
            let mut rng_a = stream_rng(11, 3);
            let mut rng_b = stream_rng(11, 3);
            for _ in 0..200 {
                let gen = draw_limit(&coeffs, &mut rng_a).unwrap();
                let (l, v1, v2, v12) = draw_scalar(c, &mut rng_b);
                assert!((gen.l[0] - l).abs() < 1e-12);
                assert!((gen.v1.get(0, 0) - v1).abs() < 1e-12);
                assert!((gen.v2.get(0, 0) - v2).abs() < 1e-12);
                assert!((gen.v12.get(0, 0) - v12).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn v12_is_deterministic() {
        let c = [0.5, 0.5, 0.6, 0.3];
        let coeffs = LimitCoefficients::scalar(c).unwrap();
        let v12 = coeffs.v12().unwrap().get(0, 0);
        assert!((v12 - (0.36 + 0.09)).abs() < 1e-12);
    }

    #[test]
    fn truncation_is_inert_beyond_support() {
        let entries = vec![
            ((1u16, 0u16, 0u16), DVector::from_column_slice(&[0.4])),
            ((1, 2, 0), DVector::from_column_slice(&[0.7])),
            ((0, 0, 3), DVector::from_column_slice(&[0.2])),
        ];
        let small = LimitCoefficients::new(1, entries.clone()).unwrap();
        let large = LimitCoefficients::with_truncation(1, entries, 20).unwrap();
        let mut rng_a = stream_rng(42, 7);
        let mut rng_b = stream_rng(42, 7);
        for _ in 0..100 {
            let a = draw_limit(&small, &mut rng_a).unwrap();
            let b = draw_limit(&large, &mut rng_b).unwrap();
            assert_eq!(a.l[0], b.l[0]);
            assert_eq!(a.v1.get(0, 0), b.v1.get(0, 0));
            assert_eq!(a.v2.get(0, 0), b.v2.get(0, 0));
        }
    }

    #[test]
    fn rejects_out_of_range_indices() {
        let res = LimitCoefficients::new(
            1,
            [((11u16, 0u16, 0u16), DVector::from_column_slice(&[1.0]))],
        );
        assert!(res.is_err());
        assert!(LimitCoefficients::new(
            1,
            [((0u16, 0u16, 0u16), DVector::from_column_slice(&[1.0]))]
        )
        .is_err());
    }

    #[test]
    fn zeta_coefficients_are_normalized() {
        for zeta in [0.0, 0.3, 0.65, 1.16, 1.5, 4.0] {
            let c = zeta_coefficients(zeta);
            let norm_sq: f64 = c.iter().map(|x| x * x).sum();
            assert!((norm_sq - 1.0).abs() < 1e-12, "zeta {zeta}");
        }
    }

    #[test]
    fn zeta_zero_is_exact_gaussian_case() {
        let levels = zeta_sweep(&[0.0], 20_000, 77).unwrap();
        assert!(
            (levels[0].1 - 0.05).abs() < 0.01,
            "level at ζ=0: {}",
            levels[0].1
        );
    }

    #[test]
    fn zeta_sweep_is_deterministic() {
        let a = zeta_sweep(&[0.0, 0.65], 5000, 3).unwrap();
        let b = zeta_sweep(&[0.0, 0.65], 5000, 3).unwrap();
        assert_eq!(zeta_sweep_csv(&a), zeta_sweep_csv(&b));
    }

    // With c2 = 0, L | Z_col is centered Gaussian with variance V1, so
    // L/√V1 is standard normal. The Kolmogorov-Smirnov statistic against
    // N(0,1) stays small.
    #[test]
    fn conditional_gaussianity_ks_check() {
        let c = [0.6, 0.0, 0.48, 0.64];
        let draws = 10_000;
        let mut rng = stream_rng(2024, 0);
        let mut samples: Vec<f64> = (0..draws)
            .map(|_| {
                let (l, v1, _, _) = draw_scalar(c, &mut rng);
                l / v1.sqrt()
            })
            .collect();
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = draws as f64;
        let mut ks: f64 = 0.0;
        for (i, x) in samples.iter().enumerate() {
            let cdf = normal_cdf(*x);
            ks = ks
                .max((cdf - i as f64 / n).abs())
                .max(((i + 1) as f64 / n - cdf).abs());
        }
        assert!(ks <= 0.02, "KS statistic {ks}");
    }

    #[test]
    fn counterexample_is_deterministic_and_degenerate() {
        let a = multivariate_counterexample_level(40, 200, 5, false).unwrap();
        let b = multivariate_counterexample_level(40, 200, 5, false).unwrap();
        assert_eq!(a.level, b.level);
        assert_eq!(a.median_lambda_min_scaled, b.median_lambda_min_scaled);

        // The rank-1 limit: λ_min(n·V̂1) shrinks with n.
        let small = multivariate_counterexample_level(50, 300, 6, false).unwrap();
        let large = multivariate_counterexample_level(150, 300, 6, false).unwrap();
        assert!(
            large.median_lambda_min_scaled < small.median_lambda_min_scaled,
            "{} !< {}",
            large.median_lambda_min_scaled,
            small.median_lambda_min_scaled
        );
    }

    // Independent cell noise in the second component restores a
    // non-degenerate limit, so the F-test is close to exact again.
    #[test]
    fn restored_cell_noise_is_nearly_exact() {
        let restored = multivariate_counterexample_level(400, 1000, 13, true).unwrap();
        assert!(
            restored.level <= 0.07,
            "restored level {} should be ≤ 0.07",
            restored.level
        );
    }

    #[test]
    fn power_loss_ratios_dominate_one() {
        let s = power_loss_experiment(50, 2000, 12).unwrap();
        assert!(s.min_ratio >= 1.0 - 1e-9, "min {}", s.min_ratio);
        assert!(
            s.mean_ratio >= 1.0 && s.mean_ratio < 1.2,
            "mean {}",
            s.mean_ratio
        );
        assert_eq!(s.histogram.len(), 100);
        let mass: f64 = s.histogram.iter().map(|(_, d)| d * 0.003).sum();
        assert!((mass - 1.0).abs() < 1e-9);
    }
}
