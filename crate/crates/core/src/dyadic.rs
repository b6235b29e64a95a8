//! Variance estimators for dyadic (pair-indexed) data and the demonstration
//! that both the usual estimator and the one-way fallback fail there.
//!
//! For observations `Y_ij`, `i ≠ j`, drawn from a jointly exchangeable
//! array, the common estimator symmetrizes residuals:
//!
//! ```text
//! V̂1  = (2C²)⁻¹ Σ_i ((C−1)⁻¹ Σ_{j≠i} (Ŷ_ij + Ŷ_ji) − 2Ȳ)⊗²
//! V̂12 = (2(C(C−1))²)⁻¹ Σ_{i≠j} (Ŷ_ij + Ŷ_ji − 2Ȳ)⊗²
//! V̂u  = V̂1 − V̂12
//! ```
//!
//! Under `Y_ij = U_i·U_j` the scaled estimator `n·V̂u` converges to
//! `2(χ²(1) − 1)`, so `V̂u` is negative with probability ≈ 0.68, and the
//! t-test based on `V̂1` alone converges to `(Z²−1)/(√2|Z|)`, rejecting a 5%
//! test about 25.5% of the time. No repaired dyadic test is offered here.

use nalgebra::{DMatrix, DVector};
use rand::RngExt;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::inference::normal_quantile;
use crate::linalg::SymMatrix;
use crate::rng::stream_rng;

/// Observations on the complete off-diagonal C×C grid.
#[derive(Debug, Clone)]
pub struct DyadicSample {
    c: usize,
    d: usize,
    /// Row-major C×C storage; diagonal slots exist but are ignored.
    values: Vec<DVector<f64>>,
}

impl DyadicSample {
    pub fn new(c: usize, d: usize, values: Vec<DVector<f64>>) -> Result<Self> {
        if c < 2 || d == 0 {
            return Err(Error::InvalidInput("need C ≥ 2 and d ≥ 1".into()));
        }
        if values.len() != c * c {
            return Err(Error::DimensionMismatch(format!(
                "expected a full {c}×{c} grid with unused diagonal, got {} values",
                values.len()
            )));
        }
        if values
            .iter()
            .any(|v| v.len() != d || v.iter().any(|x| !x.is_finite()))
        {
            return Err(Error::ContractViolation(
                "dyadic values must be finite d-vectors".into(),
            ));
        }
        Ok(Self { c, d, values })
    }

    /// Builds a scalar sample from `f(i, j)` over `i ≠ j`.
    pub fn from_fn(c: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let values = (0..c)
            .flat_map(|i| (0..c).map(move |j| (i, j)))
            .map(|(i, j)| {
                if i == j {
                    DVector::zeros(1)
                } else {
                    DVector::from_column_slice(&[f(i, j)])
                }
            })
            .collect();
        Self::new(c, 1, values)
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn value(&self, i: usize, j: usize) -> &DVector<f64> {
        &self.values[i * self.c + j]
    }

    /// Mean over the off-diagonal cells.
    pub fn mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.d);
        for i in 0..self.c {
            for j in 0..self.c {
                if i != j {
                    m += self.value(i, j);
                }
            }
        }
        m / (self.c * (self.c - 1)) as f64
    }
}

/// The dyadic variance estimators; `vu = v1 − v12` may be indefinite.
#[derive(Debug, Clone)]
pub struct DyadicVariance {
    pub v1: SymMatrix,
    pub v12: SymMatrix,
    pub vu: SymMatrix,
}

/// Evaluates the two symmetrized sums exactly.
pub fn dyadic_variance(y: &DyadicSample) -> Result<DyadicVariance> {
    let (c, d) = (y.c(), y.dim());
    let mean2 = y.mean() * 2.0;

    let mut v1 = DMatrix::<f64>::zeros(d, d);
    for i in 0..c {
        let mut acc = DVector::<f64>::zeros(d);
        for j in 0..c {
            if j != i {
                acc += y.value(i, j);
                acc += y.value(j, i);
            }
        }
        let dev = acc / (c - 1) as f64 - &mean2;
        v1 += &dev * dev.transpose();
    }
    v1 /= 2.0 * (c * c) as f64;

    let mut v12 = DMatrix::<f64>::zeros(d, d);
    for i in 0..c {
        for j in 0..c {
            if i != j {
                let dev = y.value(i, j) + y.value(j, i) - &mean2;
                v12 += &dev * dev.transpose();
            }
        }
    }
    let pairs = (c * (c - 1)) as f64;
    v12 /= 2.0 * pairs * pairs;

    let v1 = SymMatrix::new(v1)?;
    let v12 = SymMatrix::new(v12)?;
    let vu = v1.sub(&v12)?;
    Ok(DyadicVariance { v1, v12, vu })
}

/// Monte Carlo estimates for the failure demonstration.
#[derive(Debug, Clone)]
pub struct DyadicDemoReport {
    pub c: usize,
    pub reps: usize,
    pub seed: u64,
    /// Share of draws with `V̂u < 0` (theory: ≈ 0.6827 as C grows).
    pub p_vu_negative: f64,
    pub p_vu_negative_se: f64,
    /// Level of the nominal-5% t-test based on `V̂1` (theory: ≈ 0.255).
    pub v1_test_level: f64,
    pub v1_test_level_se: f64,
}

impl DyadicDemoReport {
    pub fn to_csv(&self) -> String {
        format!(
            "quantity,estimate,mc_se,c,reps,seed\n\
             p_vu_negative,{},{},{},{},{}\n\
             v1_test_level,{},{},{},{},{}\n",
            self.p_vu_negative,
            self.p_vu_negative_se,
            self.c,
            self.reps,
            self.seed,
            self.v1_test_level,
            self.v1_test_level_se,
            self.c,
            self.reps,
            self.seed,
        )
    }
}

/// Simulates `Y_ij = U_i·U_j` at size `c` and reports `P(V̂u < 0)` and the
/// level of the `V̂1`-based t-test of the (true) zero mean.
pub fn dyadic_demo(c: usize, reps: usize, seed: u64) -> Result<DyadicDemoReport> {
    if c < 2 || reps == 0 {
        return Err(Error::InvalidInput("need C ≥ 2 and reps ≥ 1".into()));
    }
    let crit = normal_quantile(0.975)?;
    let outcomes: Vec<Result<(bool, bool)>> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream_rng(seed, rep);
            let u: Vec<f64> = (0..c).map(|_| rng.sample(StandardNormal)).collect();
            let y = DyadicSample::from_fn(c, |i, j| u[i] * u[j])?;
            let v = dyadic_variance(&y)?;
            let vu_negative = v.vu.get(0, 0) < 0.0;
            let v1 = v.v1.get(0, 0);
            let mean = y.mean()[0];
            let reject = if v1 > 0.0 {
                (mean / v1.sqrt()).abs() > crit
            } else {
                mean != 0.0
            };
            Ok((vu_negative, reject))
        })
        .collect();

    let mut neg = 0usize;
    let mut rej = 0usize;
    for o in outcomes {
        let (n, r) = o?;
        neg += usize::from(n);
        rej += usize::from(r);
    }
    let nf = reps as f64;
    let p_neg = neg as f64 / nf;
    let p_rej = rej as f64 / nf;
    Ok(DyadicDemoReport {
        c,
        reps,
        seed,
        p_vu_negative: p_neg,
        p_vu_negative_se: (p_neg * (1.0 - p_neg) / nf).sqrt(),
        v1_test_level: p_rej,
        v1_test_level_se: (p_rej * (1.0 - p_rej) / nf).sqrt(),
    })
}

/// Samples the closed-form limit `(Z²−1)/(√2·|Z|)` of the `V̂1`-based t
/// statistic directly and returns the two-sided rejection rate at `alpha`.
pub fn limit_rejection_rate(draws: usize, seed: u64, alpha: f64) -> Result<f64> {
    if draws == 0 {
        return Err(Error::InvalidInput("draws must be positive".into()));
    }
    let crit = normal_quantile(1.0 - alpha / 2.0)?;
    let mut rng = stream_rng(seed, 0);
    let mut count = 0usize;
    for _ in 0..draws {
        let z: f64 = rng.sample(StandardNormal);
        let stat = (z * z - 1.0) / (2.0f64.sqrt() * z.abs());
        if stat.abs() > crit {
            count += 1;
        }
    }
    Ok(count as f64 / draws as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_sample_gives_zero_variances() {
        let y = DyadicSample::from_fn(5, |_, _| 2.5).unwrap();
        let v = dyadic_variance(&y).unwrap();
        assert!(v.v1.get(0, 0).abs() < 1e-14);
        assert!(v.v12.get(0, 0).abs() < 1e-14);
        assert!(v.vu.get(0, 0).abs() < 1e-14);
    }

    #[test]
    fn antisymmetric_pair_cancels() {
        // C = 2 with Y12 = 1, Y21 = -1: symmetrized residuals vanish.
        let y = DyadicSample::from_fn(2, |i, _| if i == 0 { 1.0 } else { -1.0 }).unwrap();
        let v = dyadic_variance(&y).unwrap();
        assert_eq!(v.v1.get(0, 0), 0.0);
        assert_eq!(v.v12.get(0, 0), 0.0);
    }

    #[test]
    fn integer_fixture_matches_loop_oracle() {
        // C = 3 fixture; the oracle below is a literal transcription of the
        // two sums.
        let vals = [[0.0, 2.0, -1.0], [4.0, 0.0, 3.0], [-2.0, 1.0, 0.0f64]];
        let y = DyadicSample::from_fn(3, |i, j| vals[i][j]).unwrap();
        let v = dyadic_variance(&y).unwrap();

        let c = 3usize;
        let mut mean = 0.0;
        for i in 0..c {
            for j in 0..c {
                if i != j {
                    mean += vals[i][j];
                }
            }
        }
        mean /= (c * (c - 1)) as f64;
        let mut v1 = 0.0;
        for i in 0..c {
            let mut acc = 0.0;
            for j in 0..c {
                if j != i {
                    acc += vals[i][j] + vals[j][i];
                }
            }
            let dev = acc / (c - 1) as f64 - 2.0 * mean;
            v1 += dev * dev;
        }
        v1 /= 2.0 * (c * c) as f64;
        let mut v12 = 0.0;
        for i in 0..c {
            for j in 0..c {
                if i != j {
                    let dev = vals[i][j] + vals[j][i] - 2.0 * mean;
                    v12 += dev * dev;
                }
            }
        }
        v12 /= 2.0 * ((c * (c - 1)) * (c * (c - 1))) as f64;

        assert!((v.v1.get(0, 0) - v1).abs() <= 1e-12 * v1.abs().max(1.0));
        assert!((v.v12.get(0, 0) - v12).abs() <= 1e-12 * v12.abs().max(1.0));
        assert!((v.vu.get(0, 0) - (v1 - v12)).abs() <= 1e-12);
    }

    #[test]
    fn joint_relabeling_invariance() {
        let vals = [
            [0.0, 2.0, -1.0, 0.5],
            [4.0, 0.0, 3.0, -1.5],
            [-2.0, 1.0, 0.0, 2.5],
            [0.7, -0.3, 1.9, 0.0f64],
        ];
        let y = DyadicSample::from_fn(4, |i, j| vals[i][j]).unwrap();
        let v = dyadic_variance(&y).unwrap();
        // Relabel via the permutation (0 1 2 3) -> (2 0 3 1).
        let perm = [2usize, 0, 3, 1];
        let yp = DyadicSample::from_fn(4, |i, j| vals[perm[i]][perm[j]]).unwrap();
        let vp = dyadic_variance(&yp).unwrap();
        assert!((v.v1.get(0, 0) - vp.v1.get(0, 0)).abs() < 1e-13);
        assert!((v.v12.get(0, 0) - vp.v12.get(0, 0)).abs() < 1e-13);
    }

    #[test]
    fn demo_is_deterministic() {
        let a = dyadic_demo(30, 100, 8).unwrap();
        let b = dyadic_demo(30, 100, 8).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn scaled_vu_mean_matches_chi_square_limit() {
        // n·V̂u converges to 2(χ²(1) − 1), whose mean is 0.
        let c = 100usize;
        let reps = 2000usize;
        let scaled: Vec<f64> = (0..reps as u64)
            .map(|rep| {
                let mut rng = stream_rng(17, rep);
                let u: Vec<f64> = (0..c).map(|_| rng.sample(StandardNormal)).collect();
                let y = DyadicSample::from_fn(c, |i, j| u[i] * u[j]).unwrap();
                let v = dyadic_variance(&y).unwrap();
                c as f64 * v.vu.get(0, 0)
            })
            .collect();
        let nf = reps as f64;
        let mean = scaled.iter().sum::<f64>() / nf;
        let var = scaled.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / nf;
        let se = (var / nf).sqrt();
        assert!(mean.abs() <= 4.0 * se + 0.05, "mean {mean}, se {se}");
    }

    #[test]
    fn limit_sampler_matches_hand_computation() {
        // P(|(Z²−1)/(√2|Z|)| > 1.96) ≈ 0.2554 from solving the two
        // quadratics z² ∓ 2.772z − 1 = 0.
        let rate = limit_rejection_rate(100_000, 3, 0.05).unwrap();
        assert!((rate - 0.2554).abs() < 0.006, "rate {rate}");
    }
}
