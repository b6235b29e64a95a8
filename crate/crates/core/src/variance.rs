//! The two-way cluster variance estimators and the PSD diagnostic on the
//! usual estimator.
//!
//! From an influence grid `Ŷ_ij` with grid mean `Ȳ`:
//!
//! ```text
//! V̂1  = C1⁻² Σ_i (C2⁻¹ Σ_j Ŷ_ij − Ȳ)⊗²
//! V̂2  = C2⁻² Σ_j (C1⁻¹ Σ_i Ŷ_ij − Ȳ)⊗²
//! V̂12 = (C1C2)⁻² Σ_ij (Ŷ_ij − Ȳ)⊗²
//! V̂u  = V̂1 + V̂2 − V̂12
//! ```
//!
//! `V̂1`, `V̂2`, `V̂12` are PSD by construction; `V̂u` may be indefinite, which
//! is exactly what [`diagnose_psd`] reports.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, SymMatrix};
use crate::moments::InfluenceMatrix;

/// The triple `(V̂1, V̂2, V̂12)` plus `V̂u = V̂1 + V̂2 − V̂12`.
#[derive(Debug, Clone)]
pub struct VarianceSet {
    pub v1: SymMatrix,
    pub v2: SymMatrix,
    pub v12: SymMatrix,
    pub vu: SymMatrix,
    pub c1: usize,
    pub c2: usize,
    pub dof_corrected: bool,
}

impl VarianceSet {
    pub fn dim(&self) -> usize {
        self.v1.dim()
    }

    /// Builds a set directly from the three matrices (for callers that
    /// already have them, e.g. limit simulators); `vu` is computed as
    /// `v1 + v2 − v12`.
    pub fn from_parts(v1: SymMatrix, v2: SymMatrix, v12: SymMatrix) -> Result<Self> {
        let vu = v1.add(&v2)?.sub(&v12)?;
        Ok(Self {
            c1: 0,
            c2: 0,
            dof_corrected: false,
            v1,
            v2,
            v12,
            vu,
        })
    }

    /// Scalar (1×1) convenience constructor.
    pub fn from_scalars(v1: f64, v2: f64, v12: f64) -> Result<Self> {
        Self::from_parts(
            SymMatrix::scalar(v1)?,
            SymMatrix::scalar(v2)?,
            SymMatrix::scalar(v12)?,
        )
    }

    /// The 1×1 variance set of coordinate `k` (diagonal entries).
    pub fn coordinate(&self, k: usize) -> Result<Self> {
        if k >= self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "coordinate {k} out of range for dimension {}",
                self.dim()
            )));
        }
        let mut set = Self::from_scalars(self.v1.get(k, k), self.v2.get(k, k), self.v12.get(k, k))?;
        set.c1 = self.c1;
        set.c2 = self.c2;
        set.dof_corrected = self.dof_corrected;
        Ok(set)
    }
}

/// Computes the variance set from an influence grid.
///
/// Empty cells participate like any other (their influence value is the one
/// implied by an empty cell moment) and the `C1C2` denominators always count
/// the full grid. The optional degrees-of-freedom correction multiplies `V̂1`
/// by `C1/(C1−1)`, `V̂2` by `C2/(C2−1)` and `V̂12` by `C1C2/((C1−1)(C2−1))`;
/// it requires at least two clusters per dimension.
pub fn variance_set(y: &InfluenceMatrix, dof_correction: bool) -> Result<VarianceSet> {
    let (c1, c2, d) = (y.c1(), y.c2(), y.dim());
    if dof_correction && (c1 < 2 || c2 < 2) {
        return Err(Error::InvalidInput(
            "degrees-of-freedom correction requires C1 ≥ 2 and C2 ≥ 2".into(),
        ));
    }
    let mean = y.grid_mean();

    let mut v1 = DMatrix::<f64>::zeros(d, d);
    for i in 0..c1 {
        let mut row = DVector::<f64>::zeros(d);
        for j in 0..c2 {
            row += y.value(i, j);
        }
        row /= c2 as f64;
        row -= &mean;
        v1 += &row * row.transpose();
    }
    v1 /= (c1 * c1) as f64;

    let mut v2 = DMatrix::<f64>::zeros(d, d);
    for j in 0..c2 {
        let mut col = DVector::<f64>::zeros(d);
        for i in 0..c1 {
            col += y.value(i, j);
        }
        col /= c1 as f64;
        col -= &mean;
        v2 += &col * col.transpose();
    }
    v2 /= (c2 * c2) as f64;

    let mut v12 = DMatrix::<f64>::zeros(d, d);
    for i in 0..c1 {
        for j in 0..c2 {
            let dev = y.value(i, j) - &mean;
            v12 += &dev * dev.transpose();
        }
    }
    v12 /= ((c1 * c2) * (c1 * c2)) as f64;

    if dof_correction {
        v1 *= c1 as f64 / (c1 - 1) as f64;
        v2 *= c2 as f64 / (c2 - 1) as f64;
        v12 *= (c1 * c2) as f64 / ((c1 - 1) * (c2 - 1)) as f64;
    }

    let v1 = SymMatrix::new(v1)?;
    let v2 = SymMatrix::new(v2)?;
    let v12 = SymMatrix::new(v12)?;
    let vu = v1.add(&v2)?.sub(&v12)?;
    Ok(VarianceSet {
        v1,
        v2,
        v12,
        vu,
        c1,
        c2,
        dof_corrected: dof_correction,
    })
}

/// Streaming computation of the variance set from per-cell values, for
/// grids too large to materialize. Push every cell exactly once; the result
/// agrees with [`variance_set`] on the same grid.
///
/// Uses the sufficient statistics: row sums, column sums, the total, and
/// `Σ_ij y y'`, from which `Σ_ij (y − ȳ)⊗² = Σ y y' − C1C2·ȳ⊗²`.
#[derive(Debug, Clone)]
pub struct GridAccumulator {
    c1: usize,
    c2: usize,
    d: usize,
    row_sums: Vec<DVector<f64>>,
    col_sums: Vec<DVector<f64>>,
    total: DVector<f64>,
    cross: DMatrix<f64>,
    pushed: usize,
}

impl GridAccumulator {
    pub fn new(c1: usize, c2: usize, d: usize) -> Self {
        Self {
            c1,
            c2,
            d,
            row_sums: vec![DVector::zeros(d); c1],
            col_sums: vec![DVector::zeros(d); c2],
            total: DVector::zeros(d),
            cross: DMatrix::zeros(d, d),
            pushed: 0,
        }
    }

    pub fn push(&mut self, i: usize, j: usize, y: &DVector<f64>) {
        self.row_sums[i] += y;
        self.col_sums[j] += y;
        self.total += y;
        self.cross += y * y.transpose();
        self.pushed += 1;
    }

    /// Grid mean of the values pushed so far.
    pub fn grid_mean(&self) -> DVector<f64> {
        &self.total / (self.c1 * self.c2) as f64
    }

    pub fn finish(self) -> Result<VarianceSet> {
        if self.pushed != self.c1 * self.c2 {
            return Err(Error::InvalidInput(format!(
                "expected {} cell values, got {}",
                self.c1 * self.c2,
                self.pushed
            )));
        }
        let (c1, c2, d) = (self.c1, self.c2, self.d);
        let cells = (c1 * c2) as f64;
        let mean = &self.total / cells;

        let mut v1 = DMatrix::<f64>::zeros(d, d);
        for r in &self.row_sums {
            let dev = r / c2 as f64 - &mean;
            v1 += &dev * dev.transpose();
        }
        v1 /= (c1 * c1) as f64;
        let mut v2 = DMatrix::<f64>::zeros(d, d);
        for c in &self.col_sums {
            let dev = c / c1 as f64 - &mean;
            v2 += &dev * dev.transpose();
        }
        v2 /= (c2 * c2) as f64;
        let v12 = (self.cross - &mean * mean.transpose() * cells) / (cells * cells);

        let v1 = SymMatrix::new(v1)?;
        let v2 = SymMatrix::new(v2)?;
        let v12 = SymMatrix::new(v12)?;
        let vu = v1.add(&v2)?.sub(&v12)?;
        Ok(VarianceSet {
            v1,
            v2,
            v12,
            vu,
            c1,
            c2,
            dof_corrected: false,
        })
    }
}

/// PSD diagnostic of `V̂u`: its spectrum and the per-coordinate
/// `se_u = 0` events (non-positive diagonal entries).
#[derive(Debug, Clone)]
pub struct PsdDiagnostic {
    pub min_eigenvalue: f64,
    pub eigenvalues: Vec<f64>,
    pub negative_count: usize,
    /// `true` where `V̂u[k][k] ≤ 0`, i.e. the usual standard error of
    /// coordinate `k` degenerates to zero.
    pub zero_se_flags: Vec<bool>,
}

pub fn diagnose_psd(v: &VarianceSet) -> PsdDiagnostic {
    let dec = linalg::eigh(&v.vu).expect("variance matrices are finite");
    let eigenvalues: Vec<f64> = dec.eigenvalues.iter().copied().collect();
    let min_eigenvalue = *eigenvalues.last().expect("dim ≥ 1");
    let negative_count = eigenvalues.iter().filter(|&&l| l < 0.0).count();
    let zero_se_flags = v.vu.diagonal().iter().map(|&x| x <= 0.0).collect();
    PsdDiagnostic {
        min_eigenvalue,
        eigenvalues,
        negative_count,
        zero_se_flags,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_grid(rows: &[Vec<f64>]) -> InfluenceMatrix {
        InfluenceMatrix::from_scalar_grid(rows).unwrap()
    }

    /// Literal quadruple-loop re-implementation used as the oracle.
    fn naive_variance(y: &InfluenceMatrix) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let (c1, c2, d) = (y.c1(), y.c2(), y.dim());
        let mut mean = DVector::<f64>::zeros(d);
        for i in 0..c1 {
            for j in 0..c2 {
                mean += y.value(i, j);
            }
        }
        mean /= (c1 * c2) as f64;

        let mut v1 = DMatrix::<f64>::zeros(d, d);
        for i in 0..c1 {
            let mut acc = DVector::<f64>::zeros(d);
            for j in 0..c2 {
                acc += y.value(i, j);
            }
            let dev = acc / c2 as f64 - &mean;
            for a in 0..d {
                for b in 0..d {
                    v1[(a, b)] += dev[a] * dev[b] / (c1 * c1) as f64;
                }
            }
        }
        let mut v2 = DMatrix::<f64>::zeros(d, d);
        for j in 0..c2 {
            let mut acc = DVector::<f64>::zeros(d);
            for i in 0..c1 {
                acc += y.value(i, j);
            }
            let dev = acc / c1 as f64 - &mean;
            for a in 0..d {
                for b in 0..d {
                    v2[(a, b)] += dev[a] * dev[b] / (c2 * c2) as f64;
                }
            }
        }
        let mut v12 = DMatrix::<f64>::zeros(d, d);
        for i in 0..c1 {
            for j in 0..c2 {
                let dev = y.value(i, j) - &mean;
                for a in 0..d {
                    for b in 0..d {
                        v12[(a, b)] += dev[a] * dev[b] / ((c1 * c2) * (c1 * c2)) as f64;
                    }
                }
            }
        }
        (v1, v2, v12)
    }

    #[test]
    fn constant_grid_gives_zero() {
        let y = scalar_grid(&[vec![3.0, 3.0], vec![3.0, 3.0]]);
        let v = variance_set(&y, false).unwrap();
        for m in [&v.v1, &v.v2, &v.v12, &v.vu] {
            assert_eq!(m.get(0, 0), 0.0);
        }
    }

    #[test]
    fn checkerboard_grid() {
        let y = scalar_grid(&[vec![1.0, -1.0], vec![-1.0, 1.0]]);
        let v = variance_set(&y, false).unwrap();
        assert!((v.v1.get(0, 0) - 0.0).abs() < 1e-15);
        assert!((v.v2.get(0, 0) - 0.0).abs() < 1e-15);
        assert!((v.v12.get(0, 0) - 0.25).abs() < 1e-15);
        assert!((v.vu.get(0, 0) + 0.25).abs() < 1e-15);
    }

    #[test]
    fn row_pattern_grid() {
        let y = scalar_grid(&[vec![1.0, 1.0], vec![-1.0, -1.0]]);
        let v = variance_set(&y, false).unwrap();
        assert!((v.v1.get(0, 0) - 0.5).abs() < 1e-15);
        assert!((v.v2.get(0, 0) - 0.0).abs() < 1e-15);
        assert!((v.v12.get(0, 0) - 0.25).abs() < 1e-15);
        assert!((v.vu.get(0, 0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn dof_correction_scales_terms() {
        let y = scalar_grid(&[vec![1.0, 2.0], vec![4.0, -1.0]]);
        let plain = variance_set(&y, false).unwrap();
        let corrected = variance_set(&y, true).unwrap();
        assert!((corrected.v1.get(0, 0) - 2.0 * plain.v1.get(0, 0)).abs() < 1e-15);
        assert!((corrected.v2.get(0, 0) - 2.0 * plain.v2.get(0, 0)).abs() < 1e-15);
        assert!((corrected.v12.get(0, 0) - 4.0 * plain.v12.get(0, 0)).abs() < 1e-15);
        let expected_vu = corrected
            .v1
            .add(&corrected.v2)
            .unwrap()
            .sub(&corrected.v12)
            .unwrap();
        assert!((corrected.vu.get(0, 0) - expected_vu.get(0, 0)).abs() < 1e-15);
    }

    #[test]
    fn dof_correction_needs_two_clusters() {
        let y = scalar_grid(&[vec![1.0, 2.0]]);
        assert!(variance_set(&y, true).is_err());
    }

    #[test]
    fn diagnose_flags_negative_scalar() {
        let y = scalar_grid(&[vec![1.0, -1.0], vec![-1.0, 1.0]]);
        let v = variance_set(&y, false).unwrap();
        let diag = diagnose_psd(&v);
        assert_eq!(diag.negative_count, 1);
        assert_eq!(diag.zero_se_flags, vec![true]);
    }

    #[test]
    fn diagnose_psd_and_indefinite() {
        let mut v = VarianceSet::from_scalars(1.0, 1.0, 0.5).unwrap();
        v.vu = SymMatrix::from_diagonal(&[1.0, -1.0]).unwrap();
        let diag = diagnose_psd(&v);
        assert_eq!(diag.negative_count, 1);
        assert!((diag.min_eigenvalue + 1.0).abs() < 1e-12);
        assert_eq!(diag.zero_se_flags, vec![false, true]);

        let ok = VarianceSet::from_scalars(2.0, 1.0, 0.5).unwrap();
        assert_eq!(diagnose_psd(&ok).negative_count, 0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn grid() -> impl Strategy<Value = InfluenceMatrix> {
            (1usize..=6, 1usize..=6, 1usize..=3).prop_flat_map(|(c1, c2, d)| {
                proptest::collection::vec(-3.0f64..3.0, c1 * c2 * d).prop_map(move |vals| {
                    let values = vals.chunks(d).map(DVector::from_column_slice).collect();
                    InfluenceMatrix::new(c1, c2, d, values).unwrap()
                })
            })
        }

        proptest! {
            #[test]
            fn matches_naive_oracle(y in grid()) {
                let v = variance_set(&y, false).unwrap();
                let (n1, n2, n12) = naive_variance(&y);
                let scale = n1.norm().max(n2.norm()).max(n12.norm()).max(1.0);
                prop_assert!((v.v1.as_matrix() - &n1).norm() <= 1e-12 * scale);
                prop_assert!((v.v2.as_matrix() - &n2).norm() <= 1e-12 * scale);
                prop_assert!((v.v12.as_matrix() - &n12).norm() <= 1e-12 * scale);
            }

            // Equality up to summation-order rounding (the sums themselves
            // are term-for-term identical).
            #[test]
            fn swap_and_relabel_invariance(y in grid()) {
                let v = variance_set(&y, false).unwrap();
                let t = variance_set(&y.transposed(), false).unwrap();
                let tol = |m: &SymMatrix| 1e-13 * m.frobenius_norm().max(1.0);
                prop_assert!(v.v1.sub(&t.v2).unwrap().frobenius_norm() <= tol(&v.v1));
                prop_assert!(v.v2.sub(&t.v1).unwrap().frobenius_norm() <= tol(&v.v2));
                prop_assert!(v.v12.sub(&t.v12).unwrap().frobenius_norm() <= tol(&v.v12));
                prop_assert!(v.vu.sub(&t.vu).unwrap().frobenius_norm() <= tol(&v.v12));

                // Reverse the row order: nothing changes.
                let (c1, c2, d) = (y.c1(), y.c2(), y.dim());
                let values: Vec<_> = (0..c1)
                    .rev()
                    .flat_map(|i| (0..c2).map(move |j| (i, j)))
                    .map(|(i, j)| y.value(i, j).clone())
                    .collect();
                let permuted = InfluenceMatrix::new(c1, c2, d, values).unwrap();
                let pv = variance_set(&permuted, false).unwrap();
                prop_assert!(v.v1.sub(&pv.v1).unwrap().frobenius_norm() <= tol(&v.v1));
                prop_assert!(v.v2.sub(&pv.v2).unwrap().frobenius_norm() <= tol(&v.v2));
                prop_assert!(v.v12.sub(&pv.v12).unwrap().frobenius_norm() <= tol(&v.v12));
                prop_assert!(v.vu.sub(&pv.vu).unwrap().frobenius_norm() <= tol(&v.v12));
            }

            #[test]
            fn streaming_accumulator_matches_variance_set(y in grid()) {
                let v = variance_set(&y, false).unwrap();
                let mut acc = GridAccumulator::new(y.c1(), y.c2(), y.dim());
                for i in 0..y.c1() {
                    for j in 0..y.c2() {
                        acc.push(i, j, y.value(i, j));
                    }
                }
                let s = acc.finish().unwrap();
                let tol = 1e-12 * (v.v1.frobenius_norm() + v.v2.frobenius_norm() + v.v12.frobenius_norm()).max(1.0);
                prop_assert!(v.v1.sub(&s.v1).unwrap().frobenius_norm() <= tol);
                prop_assert!(v.v2.sub(&s.v2).unwrap().frobenius_norm() <= tol);
                prop_assert!(v.v12.sub(&s.v12).unwrap().frobenius_norm() <= tol);
            }

            #[test]
            fn components_are_psd_and_vu_is_the_sum(y in grid()) {
                let v = variance_set(&y, false).unwrap();
                let scale = v.v1.trace() + v.v2.trace() + v.v12.trace();
                for m in [&v.v1, &v.v2, &v.v12] {
                    let dec = crate::linalg::eigh(m).unwrap();
                    prop_assert!(dec.eigenvalues[m.dim() - 1] >= -1e-9 * scale.max(1e-30));
                }
                let direct = v.v1.add(&v.v2).unwrap().sub(&v.v12).unwrap();
                let err = v.vu.sub(&direct).unwrap().frobenius_norm();
                prop_assert!(err <= 1e-12 * direct.frobenius_norm().max(1e-30));
            }
        }
    }
}
