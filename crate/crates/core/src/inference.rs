//! Inference procedures: the max-of-three t-test and min-of-three F-test,
//! the usual tests, the eigenvalue-clipping fix, an adaptive t-test, the
//! Bonferroni test, confidence intervals and confidence regions.
//!
//! Conventions shared by all tests: `se_u = max(0, V̂u)^{1/2}`; a degenerate
//! standard error with a nonzero estimate yields statistic `+∞` (reject,
//! p-value 0) while a degenerate standard error at the null yields
//! statistic 0; the usual tests auto-reject whenever `V̂u ≤ 0` (univariate)
//! or the usual quadratic form turns negative (multivariate).

use nalgebra::DVector;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg::{self, SymMatrix};
use crate::variance::VarianceSet;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").cdf(x)
}

/// Standard normal quantile, `p ∈ (0, 1)`.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&p) || p == 0.0 {
        return Err(Error::InvalidInput(format!(
            "quantile level must lie in (0,1), got {p}"
        )));
    }
    Ok(Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(p))
}

/// χ²(d) CDF.
pub fn chi2_cdf(x: f64, d: usize) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    ChiSquared::new(d as f64).expect("positive dof").cdf(x)
}

/// χ²(d) quantile, `p ∈ (0, 1)`.
pub fn chi2_quantile(p: f64, d: usize) -> Result<f64> {
    if !(0.0..1.0).contains(&p) || p == 0.0 {
        return Err(Error::InvalidInput(format!(
            "quantile level must lie in (0,1), got {p}"
        )));
    }
    if d == 0 {
        return Err(Error::InvalidInput("χ² needs d ≥ 1".into()));
    }
    Ok(ChiSquared::new(d as f64)
        .expect("positive dof")
        .inverse_cdf(p))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!(
            "alpha must lie in (0,1), got {alpha}"
        )));
    }
    Ok(())
}

fn require_scalar(v: &VarianceSet) -> Result<()> {
    if v.dim() != 1 {
        return Err(Error::DimensionMismatch(format!(
            "scalar test needs a 1×1 variance set, got dimension {}",
            v.dim()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    DdgT,
    UsualT,
    CgmT,
    AdaptiveT,
    DdgF,
    UsualF,
    Bonferroni,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::DdgT => "ddg_t",
            Method::UsualT => "usual_t",
            Method::CgmT => "cgm_t",
            Method::AdaptiveT => "adaptive_t",
            Method::DdgF => "ddg_f",
            Method::UsualF => "usual_f",
            Method::Bonferroni => "bonferroni",
        }
    }
}

/// Which statistic the adaptive test selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdaptiveBranch {
    /// `t_u`, picked when `V̂1 + V̂2 > s·V̂12`.
    Usual,
    /// `t_1`, based on the first clustering dimension alone.
    RowCluster,
}

/// Method-specific pieces backing the reported statistic.
#[derive(Debug, Clone)]
pub enum Components {
    /// Signed t plus the three standard errors and their maximum.
    T {
        t: f64,
        se1: f64,
        se2: f64,
        se_u: f64,
        se: f64,
    },
    Cgm {
        t: f64,
        se: f64,
    },
    Adaptive {
        t: f64,
        se: f64,
        branch: AdaptiveBranch,
    },
    /// The three F forms; `negative_form` records the `F_u < 0` event.
    F {
        f1: f64,
        f2: f64,
        f_u: f64,
        negative_form: bool,
    },
    FUsual {
        f_u: f64,
        negative_form: bool,
    },
    /// Per-coordinate signed t statistics and standard errors.
    Bonferroni {
        t: Vec<f64>,
        se: Vec<f64>,
    },
}

/// A completed hypothesis test.
///
/// `statistic` is the comparable quantity (`|t|` or `F`, possibly `+∞`);
/// `reject` holds exactly when `statistic > critical_value`.
#[derive(Debug, Clone)]
pub struct TestReport {
    pub method: Method,
    pub statistic: f64,
    pub critical_value: f64,
    pub reject: bool,
    pub p_value: f64,
    pub components: Components,
}

/// Signed t, absolute statistic and p-value under the degenerate-se rules.
fn t_pieces(diff: f64, se: f64) -> (f64, f64, f64) {
    if se > 0.0 {
        let t = diff / se;
        (t, t.abs(), 2.0 * (1.0 - normal_cdf(t.abs())))
    } else if diff == 0.0 {
        (0.0, 0.0, 1.0)
    } else {
        (diff.signum() * f64::INFINITY, f64::INFINITY, 0.0)
    }
}

/// t-test with `se = max(se1, se2, se_u)`.
pub fn t_ddg(theta_hat: f64, theta0: f64, v: &VarianceSet, alpha: f64) -> Result<TestReport> {
    check_alpha(alpha)?;
    require_scalar(v)?;
    let se1 = v.v1.get(0, 0).max(0.0).sqrt();
    let se2 = v.v2.get(0, 0).max(0.0).sqrt();
    let se_u = v.vu.get(0, 0).max(0.0).sqrt();
    let se = se1.max(se2).max(se_u);
    let crit = normal_quantile(1.0 - alpha / 2.0)?;
    let (t, statistic, p_value) = t_pieces(theta_hat - theta0, se);
    Ok(TestReport {
        method: Method::DdgT,
        statistic,
        critical_value: crit,
        reject: statistic > crit,
        p_value,
        components: Components::T {
            t,
            se1,
            se2,
            se_u,
            se,
        },
    })
}

/// The usual t-test on `V̂u` alone, auto-rejecting when `V̂u ≤ 0` and the
/// estimate differs from the null.
pub fn t_usual(theta_hat: f64, theta0: f64, v: &VarianceSet, alpha: f64) -> Result<TestReport> {
    check_alpha(alpha)?;
    require_scalar(v)?;
    let vu = v.vu.get(0, 0);
    let se_u = vu.max(0.0).sqrt();
    let crit = normal_quantile(1.0 - alpha / 2.0)?;
    let (t, statistic, p_value) = t_pieces(theta_hat - theta0, se_u);
    Ok(TestReport {
        method: Method::UsualT,
        statistic,
        critical_value: crit,
        reject: statistic > crit,
        p_value,
        components: Components::T {
            t,
            se1: v.v1.get(0, 0).max(0.0).sqrt(),
            se2: v.v2.get(0, 0).max(0.0).sqrt(),
            se_u,
            se: se_u,
        },
    })
}

/// The eigenvalue-clipping fix: clip the full parameter covariance to the
/// PSD cone, then run the usual test on the `coord`-th diagonal entry.
///
/// `coord` is 0-based. This construction is not invariant to affine
/// reparametrizations of the regressors.
pub fn t_cgm_fix(
    beta_hat: &DVector<f64>,
    v_beta_u: &SymMatrix,
    coord: usize,
    theta0: f64,
    alpha: f64,
) -> Result<TestReport> {
    check_alpha(alpha)?;
    if beta_hat.len() != v_beta_u.dim() {
        return Err(Error::DimensionMismatch(format!(
            "beta has length {}, covariance is {}x{}",
            beta_hat.len(),
            v_beta_u.dim(),
            v_beta_u.dim()
        )));
    }
    if coord >= beta_hat.len() {
        return Err(Error::DimensionMismatch(format!(
            "coordinate {coord} out of range for dimension {}",
            beta_hat.len()
        )));
    }
    let clipped = linalg::clip_negative_eigs(v_beta_u)?;
    let se = clipped.get(coord, coord).max(0.0).sqrt();
    let crit = normal_quantile(1.0 - alpha / 2.0)?;
    let (t, statistic, p_value) = t_pieces(beta_hat[coord] - theta0, se);
    Ok(TestReport {
        method: Method::CgmT,
        statistic,
        critical_value: crit,
        reject: statistic > crit,
        p_value,
        components: Components::Cgm { t, se },
    })
}

/// Adaptive t-test: the usual statistic when `V̂1 + V̂2 > s·V̂12`, else the
/// one-way statistic `t_1`. With `s = None` the threshold defaults to
/// `ln(min(C1, C2))`; a tie at the threshold routes to `t_1`.
pub fn t_adaptive(
    theta_hat: f64,
    theta0: f64,
    v: &VarianceSet,
    alpha: f64,
    s: Option<f64>,
) -> Result<TestReport> {
    check_alpha(alpha)?;
    require_scalar(v)?;
    let s = match s {
        Some(s) => {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::InvalidInput(
                    "adaptive threshold must be positive and finite".into(),
                ));
            }
            s
        }
        None => {
            let c_min = v.c1.min(v.c2);
            if c_min < 2 {
                return Err(Error::InvalidInput(
                    "default adaptive threshold needs C1, C2 ≥ 2; pass an explicit s".into(),
                ));
            }
            (c_min as f64).ln()
        }
    };
    let (v1, v2, v12) = (v.v1.get(0, 0), v.v2.get(0, 0), v.v12.get(0, 0));
    let crit = normal_quantile(1.0 - alpha / 2.0)?;
    let diff = theta_hat - theta0;
    let (branch, se) = if v1 + v2 > s * v12 {
        (AdaptiveBranch::Usual, v.vu.get(0, 0).max(0.0).sqrt())
    } else {
        (AdaptiveBranch::RowCluster, v1.max(0.0).sqrt())
    };
    let (t, statistic, p_value) = t_pieces(diff, se);
    Ok(TestReport {
        method: Method::AdaptiveT,
        statistic,
        critical_value: crit,
        reject: statistic > crit,
        p_value,
        components: Components::Adaptive { t, se, branch },
    })
}

/// The usual quadratic form `lim_{λ↓0} x'(λI + V̂u)⁻¹x` with sign tracking,
/// for a possibly indefinite `V̂u`.
///
/// Read off the spectrum: with the rank cutoff `τ = d·max|λᵢ|·RANK_TOL_REL`,
/// weight of `x` outside the span of the retained eigenvalues makes the
/// form diverge to `+∞`; otherwise the limit is the signed sum
/// `Σ_{|λᵢ|>τ} (vᵢ'x)²/λᵢ`, i.e. `x'V̂u⁻¹x` on the regular part. A negative
/// limit is the `F_u < 0` event: the test statistic becomes `+∞` (rejection)
/// and the flag is raised. Intermediate λ values where the regularized form
/// transiently changes sign do not matter: only the small-λ behavior
/// defines the limit.
fn usual_quadform(x: &DVector<f64>, vu: &SymMatrix) -> Result<(f64, bool)> {
    if x.len() != vu.dim() {
        return Err(Error::DimensionMismatch(
            "vector length does not match V̂u".into(),
        ));
    }
    if x.iter().all(|&c| c == 0.0) {
        // Convention 0 × ∞ = 0.
        return Ok((0.0, false));
    }
    let dec = linalg::eigh(vu)?;
    let d = vu.dim();
    let lam_abs_max = dec.eigenvalues.iter().fold(0.0f64, |a, l| a.max(l.abs()));
    if lam_abs_max == 0.0 {
        // V̂u is exactly zero: x'(λI)⁻¹x = ‖x‖²/λ → +∞ through positive
        // values.
        return Ok((f64::INFINITY, false));
    }
    let tau = d as f64 * lam_abs_max * crate::linalg::RANK_TOL_REL;
    let mut limit = 0.0;
    let mut residual = x.clone();
    for k in 0..d {
        let lam = dec.eigenvalues[k];
        if lam.abs() > tau {
            let col = dec.eigenvectors.column(k);
            let w = col.dot(x);
            limit += w * w / lam;
            residual -= col * w;
        }
    }
    if residual.norm() > linalg::RANGE_TOL * x.norm() {
        // Mass on the (numerical) null space: the form blows up to +∞.
        return Ok((f64::INFINITY, false));
    }
    if limit < 0.0 {
        Ok((f64::INFINITY, true))
    } else {
        Ok((limit, false))
    }
}

fn f_pieces(
    v: &VarianceSet,
    theta_hat: &DVector<f64>,
    theta0: &DVector<f64>,
) -> Result<(f64, f64, f64, bool)> {
    let d = v.dim();
    if theta_hat.len() != d || theta0.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "theta vectors must have length {d}"
        )));
    }
    let x = theta_hat - theta0;
    let f1 = linalg::limit_quadform(&x, &v.v1)?;
    let f2 = linalg::limit_quadform(&x, &v.v2)?;
    let (f_u, negative_form) = usual_quadform(&x, &v.vu)?;
    Ok((f1, f2, f_u, negative_form))
}

/// F-test taking the minimum of the three statistics, with `F̃u = +∞` when
/// the usual form is negative. Rejects when `F > χ²_{1-α}(d)`.
///
/// The reported p-value is the χ²(d) upper tail of `F`; since `F` is a
/// minimum of statistics it is conservative.
pub fn f_ddg(
    theta_hat: &DVector<f64>,
    theta0: &DVector<f64>,
    v: &VarianceSet,
    alpha: f64,
) -> Result<TestReport> {
    check_alpha(alpha)?;
    let (f1, f2, f_u, negative_form) = f_pieces(v, theta_hat, theta0)?;
    let statistic = f1.min(f2).min(f_u);
    let crit = chi2_quantile(1.0 - alpha, v.dim())?;
    let p_value = if statistic.is_finite() {
        1.0 - chi2_cdf(statistic, v.dim())
    } else {
        0.0
    };
    Ok(TestReport {
        method: Method::DdgF,
        statistic,
        critical_value: crit,
        reject: statistic > crit,
        p_value,
        components: Components::F {
            f1,
            f2,
            f_u,
            negative_form,
        },
    })
}

/// The usual F-test on `V̂u` alone.
pub fn f_usual(
    theta_hat: &DVector<f64>,
    theta0: &DVector<f64>,
    v: &VarianceSet,
    alpha: f64,
) -> Result<TestReport> {
    check_alpha(alpha)?;
    let d = v.dim();
    if theta_hat.len() != d || theta0.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "theta vectors must have length {d}"
        )));
    }
    let x = theta_hat - theta0;
    let (f_u, negative_form) = usual_quadform(&x, &v.vu)?;
    let crit = chi2_quantile(1.0 - alpha, d)?;
    let p_value = if f_u.is_finite() {
        1.0 - chi2_cdf(f_u, d)
    } else {
        0.0
    };
    Ok(TestReport {
        method: Method::UsualF,
        statistic: f_u,
        critical_value: crit,
        reject: f_u > crit,
        p_value,
        components: Components::FUsual { f_u, negative_form },
    })
}

/// Bonferroni test: per-coordinate max-of-three t-tests at level `α/d`.
///
/// The reported statistic is `max_ℓ |t^ℓ|` against `z_{1-α/(2d)}`.
pub fn bonferroni_test(
    theta_hat: &DVector<f64>,
    theta0: &DVector<f64>,
    v: &VarianceSet,
    alpha: f64,
) -> Result<TestReport> {
    check_alpha(alpha)?;
    let d = v.dim();
    if theta_hat.len() != d || theta0.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "theta vectors must have length {d}"
        )));
    }
    let crit = normal_quantile(1.0 - alpha / (2.0 * d as f64))?;
    let mut ts = Vec::with_capacity(d);
    let mut ses = Vec::with_capacity(d);
    let mut statistic: f64 = 0.0;
    for k in 0..d {
        let se1 = v.v1.get(k, k).max(0.0).sqrt();
        let se2 = v.v2.get(k, k).max(0.0).sqrt();
        let se_u = v.vu.get(k, k).max(0.0).sqrt();
        let se = se1.max(se2).max(se_u);
        let (t, stat, _) = t_pieces(theta_hat[k] - theta0[k], se);
        statistic = statistic.max(stat);
        ts.push(t);
        ses.push(se);
    }
    let p_value = if statistic.is_finite() {
        (d as f64 * 2.0 * (1.0 - normal_cdf(statistic))).min(1.0)
    } else {
        0.0
    };
    Ok(TestReport {
        method: Method::Bonferroni,
        statistic,
        critical_value: crit,
        reject: statistic > crit,
        p_value,
        components: Components::Bonferroni { t: ts, se: ses },
    })
}

/// Two-sided confidence interval `θ̂ ± z_{1-α/2}·se` with the max-of-three
/// standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceInterval {
    pub center: f64,
    pub half_width: f64,
    pub lower: f64,
    pub upper: f64,
    pub alpha: f64,
}

pub fn confidence_interval(
    theta_hat: f64,
    v: &VarianceSet,
    alpha: f64,
) -> Result<ConfidenceInterval> {
    check_alpha(alpha)?;
    require_scalar(v)?;
    let se1 = v.v1.get(0, 0).max(0.0).sqrt();
    let se2 = v.v2.get(0, 0).max(0.0).sqrt();
    let se_u = v.vu.get(0, 0).max(0.0).sqrt();
    let se = se1.max(se2).max(se_u);
    let half_width = normal_quantile(1.0 - alpha / 2.0)? * se;
    Ok(ConfidenceInterval {
        center: theta_hat,
        half_width,
        lower: theta_hat - half_width,
        upper: theta_hat + half_width,
        alpha,
    })
}

/// Ellipsoidal confidence region built on
/// `V̂ = max(V̂u, max(V̂1, V̂2))` (always PSD).
#[derive(Debug, Clone)]
pub struct EllipsoidRegion {
    pub center: DVector<f64>,
    pub shape: SymMatrix,
    /// χ²(d) quantile bounding the quadratic form.
    pub radius_sq: f64,
    pub alpha: f64,
}

impl EllipsoidRegion {
    /// Membership: `lim_{λ↓0} (θ̂−θ)'(λI+V̂)⁻¹(θ̂−θ) ≤ radius²`.
    pub fn contains(&self, theta: &DVector<f64>) -> Result<bool> {
        if theta.len() != self.center.len() {
            return Err(Error::DimensionMismatch(
                "point dimension does not match region".into(),
            ));
        }
        let x = &self.center - theta;
        Ok(linalg::limit_quadform(&x, &self.shape)? <= self.radius_sq)
    }
}

pub fn ellipsoid_region(
    theta_hat: &DVector<f64>,
    v: &VarianceSet,
    alpha: f64,
) -> Result<EllipsoidRegion> {
    check_alpha(alpha)?;
    let d = v.dim();
    if theta_hat.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "theta must have length {d}"
        )));
    }
    let shape = linalg::matrix_max(&v.vu, &linalg::matrix_max(&v.v1, &v.v2)?)?;
    Ok(EllipsoidRegion {
        center: theta_hat.clone(),
        shape,
        radius_sq: chi2_quantile(1.0 - alpha, d)?,
        alpha,
    })
}

/// Star-shaped confidence region from inverting the min-of-three F-test.
///
/// Membership is `F(θ) ≤ q_{1-α}(d)`. Because the variance set does not
/// depend on θ, membership is monotone along rays from the center, so the
/// boundary in a direction can be found by bisection.
#[derive(Debug, Clone)]
pub struct StarRegion {
    center: DVector<f64>,
    v: VarianceSet,
    threshold: f64,
    alpha: f64,
}

pub fn star_region(theta_hat: &DVector<f64>, v: &VarianceSet, alpha: f64) -> Result<StarRegion> {
    check_alpha(alpha)?;
    if theta_hat.len() != v.dim() {
        return Err(Error::DimensionMismatch(format!(
            "theta must have length {}",
            v.dim()
        )));
    }
    Ok(StarRegion {
        center: theta_hat.clone(),
        threshold: chi2_quantile(1.0 - alpha, v.dim())?,
        v: v.clone(),
        alpha,
    })
}

impl StarRegion {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    fn statistic_at(&self, theta: &DVector<f64>) -> Result<f64> {
        let (f1, f2, f_u, _) = f_pieces(&self.v, &self.center, theta)?;
        Ok(f1.min(f2).min(f_u))
    }

    pub fn contains(&self, theta: &DVector<f64>) -> Result<bool> {
        if theta.len() != self.center.len() {
            return Err(Error::DimensionMismatch(
                "point dimension does not match region".into(),
            ));
        }
        Ok(self.statistic_at(theta)? <= self.threshold)
    }

    /// Distance from the center to the region boundary along the unit
    /// direction `u`; `+∞` when the ray never leaves the region.
    pub fn boundary_ray(&self, u: &DVector<f64>) -> Result<f64> {
        if u.len() != self.center.len() {
            return Err(Error::DimensionMismatch(
                "direction dimension does not match region".into(),
            ));
        }
        if (u.norm() - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidInput(
                "direction must be a unit vector".into(),
            ));
        }
        let f_at = |r: f64| -> Result<f64> { self.statistic_at(&(&self.center + u * r)) };

        let mut hi = 1.0;
        while f_at(hi)? <= self.threshold {
            hi *= 2.0;
            if hi > 1e12 {
                return Ok(f64::INFINITY);
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f_at(mid)? <= self.threshold {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-12 * hi.max(1.0) {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn vset(v1: f64, v2: f64, v12: f64) -> VarianceSet {
        VarianceSet::from_scalars(v1, v2, v12).unwrap()
    }

    #[test]
    fn quantiles_match_reference_values() {
        assert!((normal_quantile(0.975).unwrap() - 1.959964).abs() < 1e-6);
        assert!((normal_quantile(0.9875).unwrap() - 2.241403).abs() < 1e-6);
        assert!((chi2_quantile(0.95, 2).unwrap() - 5.991465).abs() < 1e-6);
    }

    #[test]
    fn t_ddg_takes_max_standard_error() {
        // Vu = 4 + 1 - 2 = 3, se = max(2, 1, √3) = 2.
        let v = vset(4.0, 1.0, 2.0);
        let r = t_ddg(1.0, 0.0, &v, 0.05).unwrap();
        match r.components {
            Components::T {
                se, se1, se2, se_u, ..
            } => {
                assert!((se - 2.0).abs() < 1e-12);
                assert!((se1 - 2.0).abs() < 1e-12);
                assert!((se2 - 1.0).abs() < 1e-12);
                assert!((se_u - 3.0f64.sqrt()).abs() < 1e-12);
            }
            _ => panic!("wrong components"),
        }
        assert!((r.statistic - 0.5).abs() < 1e-12);
        assert!(!r.reject);
    }

    #[test]
    fn t_ddg_null_estimate_never_rejects() {
        let v = vset(4.0, 1.0, 2.0);
        let r = t_ddg(1.5, 1.5, &v, 0.5).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!(!r.reject);
    }

    #[test]
    fn t_ddg_negative_vu_clips_se_u() {
        // Vu = -0.25 < 0, so se = max(se1, se2).
        let v = vset(0.05, 0.2, 0.5);
        assert!(v.vu.get(0, 0) < 0.0);
        let r = t_ddg(1.0, 0.0, &v, 0.05).unwrap();
        match r.components {
            Components::T { se, se_u, .. } => {
                assert_eq!(se_u, 0.0);
                assert!((se - 0.2f64.sqrt()).abs() < 1e-12);
            }
            _ => panic!("wrong components"),
        }
    }

    #[test]
    fn t_usual_examples() {
        let v = vset(4.0, 1.0, 2.0); // Vu = 3
        let r = t_usual(3.46, 0.0, &v, 0.05).unwrap();
        assert!((r.statistic - 3.46 / 3.0f64.sqrt()).abs() < 1e-12);
        assert!(r.reject);

        let v_neg = vset(0.05, 0.2, 0.5); // Vu = -0.25
        let r = t_usual(0.3, 0.0, &v_neg, 0.05).unwrap();
        assert!(r.statistic.is_infinite());
        assert!(r.reject);
        assert_eq!(r.p_value, 0.0);

        let r = t_usual(1.0, 1.0, &v, 0.05).unwrap();
        assert!(!r.reject);
    }

    #[test]
    fn cgm_matches_usual_when_psd() {
        let v = vset(4.0, 1.0, 2.0);
        let beta = DVector::from_column_slice(&[3.46]);
        let cgm = t_cgm_fix(&beta, &v.vu, 0, 0.0, 0.05).unwrap();
        let usual = t_usual(3.46, 0.0, &v, 0.05).unwrap();
        assert!((cgm.statistic - usual.statistic).abs() < 1e-12);
        assert_eq!(cgm.reject, usual.reject);
    }

    #[test]
    fn cgm_scalar_negative_auto_rejects() {
        let beta = DVector::from_column_slice(&[1.0]);
        let vu = SymMatrix::scalar(-0.25).unwrap();
        let r = t_cgm_fix(&beta, &vu, 0, 0.0, 0.05).unwrap();
        assert!(r.statistic.is_infinite());
        assert!(r.reject);
    }

    #[test]
    fn cgm_clips_spectrum() {
        // [[1,2],[2,1]] has eigenvalues 3 and -1; clipping keeps
        // 3·(1,1)(1,1)'/2, whose diagonal is 1.5.
        let vu = SymMatrix::from_rows(&[&[1.0, 2.0], &[2.0, 1.0]]).unwrap();
        let beta = DVector::from_column_slice(&[0.0, 1.0]);
        let r = t_cgm_fix(&beta, &vu, 1, 0.0, 0.05).unwrap();
        match r.components {
            Components::Cgm { se, .. } => assert!((se * se - 1.5).abs() < 1e-10),
            _ => panic!("wrong components"),
        }
    }

    #[test]
    fn adaptive_branches() {
        // V1 + V2 = 100·V12 with a small threshold: usual branch.
        let v = vset(50.0, 50.0, 1.0);
        let r = t_adaptive(1.0, 0.0, &v, 0.05, Some(3.0)).unwrap();
        assert!(matches!(
            r.components,
            Components::Adaptive {
                branch: AdaptiveBranch::Usual,
                ..
            }
        ));

        // Pure cell noise: V1 = V2 = 0 routes to t1.
        let v = vset(0.0, 0.0, 1.0);
        let r = t_adaptive(1.0, 0.0, &v, 0.05, Some(3.0)).unwrap();
        assert!(matches!(
            r.components,
            Components::Adaptive {
                branch: AdaptiveBranch::RowCluster,
                ..
            }
        ));

        // Exact tie routes to t1.
        let v = vset(1.0, 2.0, 1.0);
        let r = t_adaptive(1.0, 0.0, &v, 0.05, Some(3.0)).unwrap();
        assert!(matches!(
            r.components,
            Components::Adaptive {
                branch: AdaptiveBranch::RowCluster,
                ..
            }
        ));
    }

    #[test]
    fn adaptive_default_threshold_needs_cluster_counts() {
        let v = vset(1.0, 1.0, 0.1);
        assert!(t_adaptive(1.0, 0.0, &v, 0.05, None).is_err());
    }

    #[test]
    fn f_identity_example() {
        let id = SymMatrix::identity(2);
        let v = VarianceSet::from_parts(id.clone(), id.clone(), id).unwrap();
        let theta = DVector::from_column_slice(&[1.0, 1.0]);
        let zero = DVector::zeros(2);
        let r = f_ddg(&theta, &zero, &v, 0.05).unwrap();
        assert!((r.statistic - 2.0).abs() < 1e-10);
        assert!((r.critical_value - 5.991465).abs() < 1e-5);
        assert!(!r.reject);

        let ru = f_usual(&theta, &zero, &v, 0.05).unwrap();
        assert!((ru.statistic - 2.0).abs() < 1e-10);
    }

    #[test]
    fn f_negative_direction_gives_infinite_usual_form() {
        // Vu = diag(1, -1): x along the negative eigendirection.
        let v = VarianceSet::from_parts(
            SymMatrix::from_diagonal(&[2.0, 0.5]).unwrap(),
            SymMatrix::from_diagonal(&[2.0, 0.5]).unwrap(),
            SymMatrix::from_diagonal(&[3.0, 2.0]).unwrap(),
        )
        .unwrap();
        let theta = DVector::from_column_slice(&[0.0, 1.0]);
        let zero = DVector::zeros(2);
        let r = f_ddg(&theta, &zero, &v, 0.05).unwrap();
        match r.components {
            Components::F {
                f1,
                f2,
                f_u,
                negative_form,
            } => {
                assert!(f_u.is_infinite());
                assert!(negative_form);
                assert!((r.statistic - f1.min(f2)).abs() < 1e-12);
                assert!((f1 - 2.0).abs() < 1e-10);
                assert!((f2 - 2.0).abs() < 1e-10);
            }
            _ => panic!("wrong components"),
        }

        let ru = f_usual(&theta, &zero, &v, 0.05).unwrap();
        assert!(ru.reject);
        assert_eq!(ru.p_value, 0.0);
    }

    #[test]
    fn f_at_null_is_zero() {
        let v = VarianceSet::from_parts(
            SymMatrix::identity(2),
            SymMatrix::identity(2),
            SymMatrix::identity(2),
        )
        .unwrap();
        let theta = DVector::from_column_slice(&[1.0, 2.0]);
        let r = f_usual(&theta, &theta, &v, 0.05).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!(!r.reject);
    }

    #[test]
    fn scalar_f_equals_t_squared() {
        let cases = [
            (4.0, 1.0, 2.0, 1.3),
            (0.3, 0.9, 0.4, -0.7),
            (0.05, 0.2, 0.5, 0.4), // negative Vu
            (1.0, 1.0, 0.0, 2.2),
        ];
        for (v1, v2, v12, diff) in cases {
            let v = vset(v1, v2, v12);
            let t = t_ddg(diff, 0.0, &v, 0.05).unwrap();
            let f = f_ddg(
                &DVector::from_column_slice(&[diff]),
                &DVector::zeros(1),
                &v,
                0.05,
            )
            .unwrap();
            if t.statistic.is_finite() {
                let rel = (f.statistic - t.statistic * t.statistic).abs()
                    / (t.statistic * t.statistic).max(1e-12);
                assert!(rel < 1e-10, "case {v1},{v2},{v12}: rel {rel:.2e}");
            } else {
                assert!(f.statistic.is_infinite());
            }
            let fu = f_usual(
                &DVector::from_column_slice(&[diff]),
                &DVector::zeros(1),
                &v,
                0.05,
            )
            .unwrap();
            let tu = t_usual(diff, 0.0, &v, 0.05).unwrap();
            assert_eq!(fu.reject, tu.reject);
        }
    }

    #[test]
    fn bonferroni_examples() {
        // d = 1: identical to the ddg t-test.
        let v = vset(4.0, 1.0, 2.0);
        let b = bonferroni_test(
            &DVector::from_column_slice(&[1.0]),
            &DVector::zeros(1),
            &v,
            0.05,
        )
        .unwrap();
        let t = t_ddg(1.0, 0.0, &v, 0.05).unwrap();
        assert!((b.statistic - t.statistic).abs() < 1e-12);
        assert!((b.critical_value - t.critical_value).abs() < 1e-12);

        let id = SymMatrix::identity(2);
        let v2 = VarianceSet::from_parts(id.clone(), id.clone(), id).unwrap();
        let b2 = bonferroni_test(
            &DVector::from_column_slice(&[1.0, 1.0]),
            &DVector::zeros(2),
            &v2,
            0.05,
        )
        .unwrap();
        assert!((b2.critical_value - 2.241403).abs() < 1e-5);

        let b3 = bonferroni_test(
            &DVector::from_column_slice(&[0.5, -0.5]),
            &DVector::from_column_slice(&[0.5, -0.5]),
            &v2,
            0.05,
        )
        .unwrap();
        assert!(!b3.reject);
        assert_eq!(b3.statistic, 0.0);
    }

    #[test]
    fn confidence_interval_examples() {
        // se = 2 comes out of V1 = 4.
        let v = vset(4.0, 1.0, 2.0);
        let ci = confidence_interval(1.0, &v, 0.05).unwrap();
        assert!((ci.half_width - 3.919928).abs() < 1e-5);

        let degenerate = vset(0.0, 0.0, 0.0);
        let ci0 = confidence_interval(2.5, &degenerate, 0.05).unwrap();
        assert_eq!(ci0.lower, 2.5);
        assert_eq!(ci0.upper, 2.5);
    }

    #[test]
    fn confidence_interval_test_duality() {
        let v = vset(4.0, 1.0, 2.0);
        let ci = confidence_interval(1.0, &v, 0.05).unwrap();
        for theta0 in [-4.0, -2.91, 0.0, 1.0, 4.91, 6.0] {
            let inside = theta0 >= ci.lower && theta0 <= ci.upper;
            let t = t_ddg(1.0, theta0, &v, 0.05).unwrap();
            assert_eq!(inside, !t.reject, "theta0 = {theta0}");
        }
    }

    #[test]
    fn ellipsoid_scalar_equals_ci() {
        let v = vset(4.0, 1.0, 2.0);
        let ci = confidence_interval(1.0, &v, 0.05).unwrap();
        let region = ellipsoid_region(&DVector::from_column_slice(&[1.0]), &v, 0.05).unwrap();
        // max(Vu, V1, V2) = 4 = se², so the region is the CI.
        for (theta, inside) in [
            (ci.lower + 1e-6, true),
            (ci.upper - 1e-6, true),
            (ci.lower - 1e-3, false),
            (ci.upper + 1e-3, false),
            (1.0, true),
        ] {
            assert_eq!(
                region
                    .contains(&DVector::from_column_slice(&[theta]))
                    .unwrap(),
                inside,
                "theta = {theta}"
            );
        }
    }

    #[test]
    fn ellipsoid_center_membership_and_oracle() {
        let v = VarianceSet::from_parts(
            SymMatrix::from_rows(&[&[2.0, 0.3], &[0.3, 1.0]]).unwrap(),
            SymMatrix::from_rows(&[&[1.5, -0.2], &[-0.2, 0.8]]).unwrap(),
            SymMatrix::from_rows(&[&[1.0, 0.1], &[0.1, 0.9]]).unwrap(),
        )
        .unwrap();
        let center = DVector::from_column_slice(&[0.4, -0.2]);
        let region = ellipsoid_region(&center, &v, 0.05).unwrap();
        assert!(region.contains(&center).unwrap());

        // Direct λ = 1e-12 regularized evaluation as the oracle.
        let d = 2;
        let lam = 1e-12;
        let reg = region.shape.as_matrix() + DMatrix::<f64>::identity(d, d) * lam;
        let lu = reg.lu();
        for point in [[0.4, -0.2], [1.5, 0.5], [5.0, 5.0], [-2.0, 1.0], [0.0, 0.0]] {
            let theta = DVector::from_column_slice(&point);
            let x = &center - &theta;
            let q = x.dot(&lu.solve(&x).unwrap());
            assert_eq!(
                region.contains(&theta).unwrap(),
                q <= region.radius_sq,
                "point {point:?}"
            );
        }
    }

    #[test]
    fn star_region_scalar_radii_match_ci() {
        let v = vset(4.0, 1.0, 2.0);
        let ci = confidence_interval(1.0, &v, 0.05).unwrap();
        let star = star_region(&DVector::from_column_slice(&[1.0]), &v, 0.05).unwrap();
        assert!(star.contains(&DVector::from_column_slice(&[1.0])).unwrap());
        for dir in [1.0, -1.0] {
            let r = star
                .boundary_ray(&DVector::from_column_slice(&[dir]))
                .unwrap();
            assert!(
                (r - ci.half_width).abs() < 1e-6,
                "direction {dir}: {r} vs {}",
                ci.half_width
            );
        }
    }

    #[test]
    fn star_region_bisection_matches_grid_scan() {
        let v = VarianceSet::from_parts(
            SymMatrix::from_rows(&[&[2.0, 0.3], &[0.3, 1.0]]).unwrap(),
            SymMatrix::from_rows(&[&[1.5, -0.2], &[-0.2, 0.8]]).unwrap(),
            SymMatrix::from_rows(&[&[1.0, 0.1], &[0.1, 0.9]]).unwrap(),
        )
        .unwrap();
        let center = DVector::from_column_slice(&[0.4, -0.2]);
        let star = star_region(&center, &v, 0.05).unwrap();
        let u = DVector::from_column_slice(&[3.0f64.sqrt() / 2.0, 0.5]);
        let r = star.boundary_ray(&u).unwrap();

        // 10⁴-point scan of the statistic along the ray.
        let r_max = 2.0 * r;
        let mut scan = 0.0;
        for k in 0..10_000 {
            let radius = r_max * (k as f64) / 10_000.0;
            let theta = &center + &u * radius;
            if star.contains(&theta).unwrap() {
                scan = radius;
            }
        }
        assert!((r - scan).abs() < 1e-4 * r.max(1.0), "{r} vs scan {scan}");
    }

    #[test]
    fn dominance_and_alpha_monotonicity() {
        let grids = [
            (4.0, 1.0, 2.0, 2.5),
            (0.05, 0.2, 0.5, 0.4),
            (1.0, 1.0, 1.0, 1.2),
            (0.3, 0.9, 0.4, -1.4),
        ];
        for (v1, v2, v12, diff) in grids {
            let v = vset(v1, v2, v12);
            let t = t_ddg(diff, 0.0, &v, 0.05).unwrap();
            if let Components::T {
                se, se1, se2, se_u, ..
            } = t.components
            {
                assert!(se >= se1 && se >= se2 && se >= se_u);
            }
            let f = f_ddg(
                &DVector::from_column_slice(&[diff]),
                &DVector::zeros(1),
                &v,
                0.05,
            )
            .unwrap();
            if let Components::F { f1, f2, f_u, .. } = f.components {
                assert!(f.statistic <= f1 && f.statistic <= f2 && f.statistic <= f_u);
            }

            let mut rejected = false;
            for alpha in [0.01, 0.05, 0.10, 0.25, 0.5] {
                let r = t_ddg(diff, 0.0, &v, alpha).unwrap();
                assert_eq!(r.reject, r.statistic > r.critical_value);
                assert!(r.reject || !rejected, "rejection must be monotone in α");
                rejected = r.reject;
            }
            assert_eq!(t.reject, t.statistic > t.critical_value);
            assert_eq!(f.reject, f.statistic > f.critical_value);
        }
    }
}
