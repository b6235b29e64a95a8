//! Dense symmetric-matrix primitives: eigendecomposition, PSD clipping,
//! matrix absolute value and maximum, and the λ↓0 limit of regularized
//! quadratic forms used by the F-tests.
//!
//! All matrices here are small (the parameter dimension of a test), so plain
//! O(d³) dense algorithms are used throughout.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance below which an eigenvalue counts as zero when taking
/// λ↓0 limits: `tau = dim * lambda_max * RANK_TOL_REL`.
pub const RANK_TOL_REL: f64 = 1e-12;

/// Relative tolerance on `||x - proj_range(V) x|| / ||x||` when deciding
/// whether a quadratic form diverges.
pub const RANGE_TOL: f64 = 1e-8;

/// How negative an eigenvalue may be (relative to `max(1, lambda_max)`)
/// before a matrix that must be PSD is rejected.
pub const PSD_TOL: f64 = 1e-8;

/// A real symmetric matrix with finite entries.
///
/// Symmetry is enforced at construction by averaging `a` and `a'`, so stored
/// entries satisfy `m[(i, j)] == m[(j, i)]` exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    m: DMatrix<f64>,
}

impl SymMatrix {
    /// Builds a symmetric matrix from a square matrix, symmetrizing it.
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() == 0 || a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "expected a nonempty square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::ContractViolation(
                "matrix entries must be finite".into(),
            ));
        }
        let mut m = a.clone();
        for i in 0..a.nrows() {
            for j in 0..i {
                let v = 0.5 * (a[(i, j)] + a[(j, i)]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Ok(Self { m })
    }

    /// Builds from rows given as slices; errors if they do not form a square
    /// matrix.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch(
                "rows do not form a square matrix".into(),
            ));
        }
        Self::new(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            m: DMatrix::zeros(dim, dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            m: DMatrix::identity(dim, dim),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    /// 1×1 convenience constructor.
    pub fn scalar(v: f64) -> Result<Self> {
        Self::from_diagonal(&[v])
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.m.diagonal().iter().copied().collect()
    }

    pub fn trace(&self) -> f64 {
        self.m.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.m.norm()
    }

    /// Entrywise sum; dimensions must match.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        Ok(Self {
            m: &self.m + &other.m,
        })
    }

    /// Entrywise difference; dimensions must match.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        Ok(Self {
            m: &self.m - &other.m,
        })
    }

    pub fn scale(&self, c: f64) -> Self {
        Self { m: &self.m * c }
    }

    fn check_same_dim(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(format!(
                "matrix dimensions {} and {} differ",
                self.dim(),
                other.dim()
            )));
        }
        Ok(())
    }
}

/// Eigendecomposition of a symmetric matrix, `A = P Δ P'`.
///
/// Eigenvalues are sorted in descending order; `eigenvectors` holds the
/// corresponding orthonormal eigenvectors as columns. The ordering is made
/// deterministic: ties are broken by lexicographic comparison of the
/// eigenvectors, and each eigenvector's first non-negligible component is
/// made positive.
#[derive(Debug, Clone)]
pub struct EigenDecomp {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl EigenDecomp {
    /// Reconstructs `P Δ P'`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let p = &self.eigenvectors;
        let delta = DMatrix::from_diagonal(&self.eigenvalues);
        p * delta * p.transpose()
    }
}

/// Symmetric eigendecomposition with a deterministic ordering.
pub fn eigh(a: &SymMatrix) -> Result<EigenDecomp> {
    let d = a.dim();
    let se = a
        .m
        .clone()
        .try_symmetric_eigen(f64::EPSILON, 10_000)
        .ok_or_else(|| Error::ContractViolation("eigendecomposition did not converge".into()))?;

    let mut cols: Vec<(f64, DVector<f64>)> = (0..d)
        .map(|k| {
            let mut v: DVector<f64> = se.eigenvectors.column(k).into_owned();
            // Fix the sign so the first non-negligible component is positive.
            if let Some(&lead) = v.iter().find(|c| c.abs() > 1e-12) {
                if lead < 0.0 {
                    v.neg_mut();
                }
            }
            (se.eigenvalues[k], v)
        })
        .collect();
    cols.sort_by(|(la, va), (lb, vb)| {
        lb.partial_cmp(la)
            .unwrap()
            .then_with(|| compare_lex(va, vb))
    });

    let eigenvalues = DVector::from_iterator(d, cols.iter().map(|(l, _)| *l));
    let eigenvectors = DMatrix::from_fn(d, d, |i, k| cols[k].1[i]);
    Ok(EigenDecomp {
        eigenvalues,
        eigenvectors,
    })
}

fn compare_lex(a: &DVector<f64>, b: &DVector<f64>) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.partial_cmp(y).unwrap() {
            std::cmp::Ordering::Equal => continue,
            ord => return ord,
        }
    }
    std::cmp::Ordering::Equal
}

/// Matrix absolute value `|A| = P |Δ| P'`: same eigenvectors, absolute
/// eigenvalues.
pub fn matrix_abs(a: &SymMatrix) -> Result<SymMatrix> {
    let dec = eigh(a)?;
    let abs = DVector::from_iterator(a.dim(), dec.eigenvalues.iter().map(|l| l.abs()));
    let p = &dec.eigenvectors;
    SymMatrix::new(p * DMatrix::from_diagonal(&abs) * p.transpose())
}

/// Matrix maximum `max(A, B) = (A + B + |A - B|) / 2`.
///
/// The result dominates both arguments: `max(A, B) - A` and `max(A, B) - B`
/// are PSD up to numerical tolerance.
pub fn matrix_max(a: &SymMatrix, b: &SymMatrix) -> Result<SymMatrix> {
    let diff = a.sub(b)?;
    let abs = matrix_abs(&diff)?;
    Ok(a.add(b)?.add(&abs)?.scale(0.5))
}

/// Replaces negative eigenvalues by zero, projecting onto the PSD cone.
///
/// Already-PSD inputs are returned unchanged.
pub fn clip_negative_eigs(a: &SymMatrix) -> Result<SymMatrix> {
    let dec = eigh(a)?;
    if dec.eigenvalues.iter().all(|&l| l >= 0.0) {
        return Ok(a.clone());
    }
    let clipped = DVector::from_iterator(a.dim(), dec.eigenvalues.iter().map(|l| l.max(0.0)));
    let p = &dec.eigenvectors;
    SymMatrix::new(p * DMatrix::from_diagonal(&clipped) * p.transpose())
}

/// Computes `lim_{λ↓0} x'(λI + V)⁻¹x` for a PSD matrix `V`.
///
/// Writing `V = Σ λᵢ vᵢvᵢ'`, the limit is `Σ_{λᵢ>τ} (vᵢ'x)²/λᵢ` when `x` lies
/// in the range of `V` (up to [`RANGE_TOL`]) and `+∞` otherwise. For
/// invertible `V` this is `x'V⁻¹x`. Rank is decided by the cutoff
/// `τ = dim · λ_max · RANK_TOL_REL`.
pub fn limit_quadform(x: &DVector<f64>, v: &SymMatrix) -> Result<f64> {
    if x.len() != v.dim() {
        return Err(Error::DimensionMismatch(format!(
            "vector length {} does not match matrix dimension {}",
            x.len(),
            v.dim()
        )));
    }
    if x.iter().any(|c| !c.is_finite()) {
        return Err(Error::ContractViolation(
            "vector entries must be finite".into(),
        ));
    }
    let dec = eigh(v)?;
    let lam_max = dec.eigenvalues[0].max(0.0);
    let lam_min = dec.eigenvalues[v.dim() - 1];
    if lam_min < -PSD_TOL * lam_max.max(1.0) {
        return Err(Error::ContractViolation(format!(
            "matrix is not PSD within tolerance (min eigenvalue {lam_min:.3e})"
        )));
    }

    let tau = v.dim() as f64 * lam_max * RANK_TOL_REL;
    let mut quad = 0.0;
    // Subtract the retained components vector-wise; the squared-norm route
    // cancels catastrophically right at the tolerance.
    let mut residual = x.clone();
    for k in 0..v.dim() {
        let lam = dec.eigenvalues[k];
        if lam > tau {
            let col = dec.eigenvectors.column(k);
            let w = col.dot(x);
            quad += w * w / lam;
            residual -= col * w;
        }
    }
    if residual.norm() <= RANGE_TOL * x.norm() {
        Ok(quad)
    } else {
        Ok(f64::INFINITY)
    }
}
