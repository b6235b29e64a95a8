//! Moment models, the GMM fitting procedure, and influence-function
//! extraction.
//!
//! A model contributes a per-unit moment function `psi(w, β) ∈ ℝ^q` with
//! `q ≥ p` parameters. Cell moments are `ψ_ij(β) = Σ_ℓ psi(w_ijℓ, β)` (zero
//! for empty cells) and the estimator minimizes `m̄(β)' Υ m̄(β)` over the cell
//! average `m̄(β) = (C1C2)⁻¹ Σ_ij ψ_ij(β)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::data::ClusteredSample;
use crate::error::{Error, Result};
use crate::linalg::{self, SymMatrix};
use crate::rng::stream_rng;

type MomentFn = Arc<dyn Fn(&[f64], &DVector<f64>) -> DVector<f64> + Send + Sync>;
type JacobianFn = Arc<dyn Fn(&[f64], &DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// A moment model: built-in mean/regression kinds or a custom moment
/// function.
///
/// Record conventions for built-in kinds: `Mean` treats the whole numeric
/// record as the observed vector; the regression kinds expect
/// `[outcome, regressor_1, ..., regressor_k]`, with any constant included as
/// an explicit regressor column.
#[derive(Clone)]
pub enum MomentModel {
    /// `psi(w, β) = w − β`.
    Mean { dim: usize },
    /// Least-squares moments `psi = x (y − x'β)`.
    Ols { n_regressors: usize },
    /// Probit maximum-likelihood score.
    Probit { n_regressors: usize },
    /// Logit maximum-likelihood score.
    Logit { n_regressors: usize },
    /// Poisson regression score.
    Poisson { n_regressors: usize },
    /// User-supplied moments; the Jacobian falls back to central finite
    /// differences when not provided.
    Custom {
        p: usize,
        q: usize,
        psi: MomentFn,
        jacobian: Option<JacobianFn>,
    },
}

impl fmt::Debug for MomentModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "MomentModel::{}(p={}, q={})",
            self.kind(),
            self.p(),
            self.q()
        )
    }
}

impl MomentModel {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Mean { .. } => "mean",
            Self::Ols { .. } => "ols",
            Self::Probit { .. } => "probit",
            Self::Logit { .. } => "logit",
            Self::Poisson { .. } => "poisson",
            Self::Custom { .. } => "custom",
        }
    }

    /// Parameter dimension.
    pub fn p(&self) -> usize {
        match self {
            Self::Mean { dim } => *dim,
            Self::Ols { n_regressors }
            | Self::Probit { n_regressors }
            | Self::Logit { n_regressors }
            | Self::Poisson { n_regressors } => *n_regressors,
            Self::Custom { p, .. } => *p,
        }
    }

    /// Moment dimension (`q ≥ p`).
    pub fn q(&self) -> usize {
        match self {
            Self::Custom { q, .. } => *q,
            _ => self.p(),
        }
    }

    /// Expected numeric record arity, when the model pins one down.
    pub fn record_len(&self) -> Option<usize> {
        match self {
            Self::Mean { dim } => Some(*dim),
            Self::Ols { n_regressors }
            | Self::Probit { n_regressors }
            | Self::Logit { n_regressors }
            | Self::Poisson { n_regressors } => Some(n_regressors + 1),
            Self::Custom { .. } => None,
        }
    }

    /// The GMM objective is convex quadratic for these kinds, so a single
    /// solver start suffices.
    fn is_linear(&self) -> bool {
        matches!(self, Self::Mean { .. } | Self::Ols { .. })
    }

    /// Per-unit moment `psi(w, β)`.
    pub fn psi(&self, w: &[f64], beta: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Mean { dim } => DVector::from_fn(*dim, |i, _| w[i] - beta[i]),
            Self::Ols { n_regressors } => {
                let (y, x) = split_record(w, *n_regressors);
                let resid = y - x.dot(beta);
                x * resid
            }
            Self::Probit { n_regressors } => {
                let (y, x) = split_record(w, *n_regressors);
                let eta = x.dot(beta);
                x * probit_score_factor(y, eta)
            }
            Self::Logit { n_regressors } => {
                let (y, x) = split_record(w, *n_regressors);
                let eta = x.dot(beta);
                x * (y - logistic(eta))
            }
            Self::Poisson { n_regressors } => {
                let (y, x) = split_record(w, *n_regressors);
                let eta = x.dot(beta);
                x * (y - eta.exp())
            }
            Self::Custom { psi, .. } => psi(w, beta),
        }
    }

    /// Per-unit Jacobian `∂psi/∂β'` (q×p), analytic for built-in kinds.
    pub fn jacobian(&self, w: &[f64], beta: &DVector<f64>) -> DMatrix<f64> {
        match self {
            Self::Mean { dim } => -DMatrix::identity(*dim, *dim),
            Self::Ols { n_regressors } => {
                let (_, x) = split_record(w, *n_regressors);
                -outer(&x, &x)
            }
            Self::Probit { n_regressors } => {
                let (y, x) = split_record(w, *n_regressors);
                let eta = x.dot(beta);
                outer(&x, &x) * probit_score_slope(y, eta)
            }
            Self::Logit { n_regressors } => {
                let (_, x) = split_record(w, *n_regressors);
                let eta = x.dot(beta);
                let s = logistic(eta);
                outer(&x, &x) * (-s * (1.0 - s))
            }
            Self::Poisson { n_regressors } => {
                let (_, x) = split_record(w, *n_regressors);
                let eta = x.dot(beta);
                outer(&x, &x) * (-eta.exp())
            }
            Self::Custom { jacobian, .. } => match jacobian {
                Some(j) => j(w, beta),
                None => self.numeric_jacobian(w, beta),
            },
        }
    }

    /// Central finite differences with step `1e-6·(1+|β_k|)`.
    pub fn numeric_jacobian(&self, w: &[f64], beta: &DVector<f64>) -> DMatrix<f64> {
        let (p, q) = (self.p(), self.q());
        let mut jac = DMatrix::zeros(q, p);
        for k in 0..p {
            let h = 1e-6 * (1.0 + beta[k].abs());
            let mut up = beta.clone();
            up[k] += h;
            let mut down = beta.clone();
            down[k] -= h;
            let diff = (self.psi(w, &up) - self.psi(w, &down)) / (2.0 * h);
            jac.set_column(k, &diff);
        }
        jac
    }
}

fn split_record(w: &[f64], n_regressors: usize) -> (f64, DVector<f64>) {
    (w[0], DVector::from_column_slice(&w[1..=n_regressors]))
}

fn outer(a: &DVector<f64>, b: &DVector<f64>) -> DMatrix<f64> {
    a * b.transpose()
}

fn logistic(eta: f64) -> f64 {
    1.0 / (1.0 + (-eta).exp())
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Probit score factor `φ(η)(y − Φ(η)) / (Φ(η)(1 − Φ(η)))`.
fn probit_score_factor(y: f64, eta: f64) -> f64 {
    let n = std_normal();
    let phi = n.pdf(eta);
    let cdf = n.cdf(eta).clamp(1e-300, 1.0 - 1e-16);
    phi * (y - cdf) / (cdf * (1.0 - cdf))
}

/// Derivative of the probit score factor with respect to η.
fn probit_score_slope(y: f64, eta: f64) -> f64 {
    let n = std_normal();
    let phi = n.pdf(eta);
    let cdf = n.cdf(eta).clamp(1e-300, 1.0 - 1e-16);
    let denom = cdf * (1.0 - cdf);
    let g = phi * (y - cdf) / denom;
    -eta * g - phi * phi / denom - g * phi * (1.0 - 2.0 * cdf) / denom
}

/// Options for the damped Gauss-Newton solver.
#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Converged when `‖∇(m̄'Υm̄)‖ ≤ tol_grad · (1 + |objective|)`.
    pub tol_grad: f64,
    /// Deterministic multistarts: the origin plus up to four fixed
    /// perturbations of size `start_scale`.
    pub multistarts: usize,
    pub start_scale: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol_grad: 1e-10,
            multistarts: 5,
            start_scale: 0.5,
        }
    }
}

/// Output of [`gmm_fit`].
#[derive(Debug, Clone)]
pub struct FitResult {
    pub beta_hat: DVector<f64>,
    /// `Ĵ`: mean over cells of `∂ψ_ij/∂β` at `β̂` (q×p).
    pub j_hat: DMatrix<f64>,
    /// The weight `Υ_n` used (q×q, positive definite).
    pub weight: SymMatrix,
    pub objective: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub multistart_index: usize,
}

struct Evaluated {
    m_bar: DVector<f64>,
    j_bar: DMatrix<f64>,
    objective: f64,
}

fn evaluate(
    sample: &ClusteredSample,
    model: &MomentModel,
    weight: &DMatrix<f64>,
    beta: &DVector<f64>,
) -> Evaluated {
    let (p, q) = (model.p(), model.q());
    let mut m = DVector::zeros(q);
    let mut j = DMatrix::zeros(q, p);
    for i in 0..sample.c1() {
        for jj in 0..sample.c2() {
            for unit in sample.cell(i, jj) {
                m += model.psi(unit, beta);
                j += model.jacobian(unit, beta);
            }
        }
    }
    let scale = 1.0 / (sample.c1() * sample.c2()) as f64;
    m *= scale;
    j *= scale;
    let objective = (weight * &m).dot(&m);
    Evaluated {
        m_bar: m,
        j_bar: j,
        objective,
    }
}

fn start_points(p: usize, opts: &SolverOptions) -> Vec<DVector<f64>> {
    let mut starts = vec![DVector::zeros(p)];
    let patterns: [fn(usize) -> f64; 4] = [
        |_| 1.0,
        |_| -1.0,
        |k| if k % 2 == 0 { 1.0 } else { -1.0 },
        |k| if k % 2 == 0 { -1.0 } else { 1.0 },
    ];
    for pat in patterns.iter().take(opts.multistarts.saturating_sub(1)) {
        starts.push(DVector::from_fn(p, |k, _| opts.start_scale * pat(k)));
    }
    starts
}

/// Fits the model by minimizing `m̄(β)'Υ m̄(β)` with damped Gauss-Newton.
///
/// `weight` defaults to the identity; it must be symmetric positive definite
/// when given. Multistarts are deterministic and the best converged iterate
/// wins; failure on all starts yields [`Error::NonConvergence`] carrying the
/// best iterate.
pub fn gmm_fit(
    sample: &ClusteredSample,
    model: &MomentModel,
    weight: Option<&SymMatrix>,
    opts: &SolverOptions,
) -> Result<FitResult> {
    let (p, q) = (model.p(), model.q());
    if q < p {
        return Err(Error::InvalidInput(format!(
            "moment dimension q={q} must be at least the parameter dimension p={p}"
        )));
    }
    if sample.n_units() == 0 {
        return Err(Error::InvalidInput("sample has no unit records".into()));
    }
    if let Some(len) = model.record_len() {
        if sample.numeric_columns().len() != len {
            return Err(Error::DimensionMismatch(format!(
                "model expects records of length {len}, sample has {}",
                sample.numeric_columns().len()
            )));
        }
    }
    let upsilon = match weight {
        Some(w) => {
            if w.dim() != q {
                return Err(Error::DimensionMismatch(format!(
                    "weight must be {q}x{q}, got {}x{}",
                    w.dim(),
                    w.dim()
                )));
            }
            let dec = linalg::eigh(w)?;
            if dec.eigenvalues[q - 1] <= 0.0 {
                return Err(Error::ContractViolation(
                    "weight matrix must be positive definite".into(),
                ));
            }
            w.clone()
        }
        None => SymMatrix::identity(q),
    };
    let w_mat = upsilon.as_matrix().clone();

    let starts = if model.is_linear() {
        start_points(p, opts).into_iter().take(1).collect()
    } else {
        start_points(p, opts)
    };
    let n_starts = starts.len();

    struct Candidate {
        beta: DVector<f64>,
        objective: f64,
        grad_norm: f64,
        iterations: usize,
        start: usize,
        converged: bool,
    }
    let mut best: Option<Candidate> = None;

    for (start_idx, start) in starts.into_iter().enumerate() {
        let mut beta = start;
        let mut ev = evaluate(sample, model, &w_mat, &beta);
        let mut damping = 1e-3;
        let mut iterations = 0;
        let mut converged = false;
        let mut grad_norm;

        loop {
            let grad = 2.0 * ev.j_bar.transpose() * &w_mat * &ev.m_bar;
            grad_norm = grad.norm();
            if grad_norm <= opts.tol_grad * (1.0 + ev.objective.abs()) {
                converged = true;
                break;
            }
            if iterations >= opts.max_iter {
                break;
            }
            let h = ev.j_bar.transpose() * &w_mat * &ev.j_bar;
            let rhs = -(ev.j_bar.transpose() * &w_mat * &ev.m_bar);

            let mut stepped = false;
            let mut stalled = false;
            // Try the exact Gauss-Newton step first; it lands on the
            // minimizer in one move when the objective is quadratic.
            let mut trial = 0.0f64;
            loop {
                let lhs = &h + DMatrix::<f64>::identity(p, p) * trial;
                if let Some(step) = lhs.lu().solve(&rhs) {
                    let candidate = &beta + &step;
                    let cand_ev = evaluate(sample, model, &w_mat, &candidate);
                    if cand_ev.objective.is_finite() && cand_ev.objective <= ev.objective {
                        stalled = step.norm() <= 1e-14 * (1.0 + beta.norm());
                        beta = candidate;
                        ev = cand_ev;
                        if trial > 0.0 {
                            damping = (trial * 0.2).max(1e-12);
                        }
                        stepped = true;
                        break;
                    }
                }
                trial = if trial == 0.0 { damping } else { trial * 10.0 };
                if trial > 1e12 {
                    break;
                }
            }
            iterations += 1;
            if !stepped || stalled {
                // One final gradient check happens at the top of the loop.
                if stalled {
                    continue;
                }
                break;
            }
        }

        let replace = match &best {
            None => true,
            Some(b) => match (converged, b.converged) {
                (true, false) => true,
                (false, true) => false,
                _ => ev.objective < b.objective,
            },
        };
        if replace {
            best = Some(Candidate {
                beta: beta.clone(),
                objective: ev.objective,
                grad_norm,
                iterations,
                start: start_idx,
                converged,
            });
        }
    }

    let best = best.expect("at least one start");
    if !best.converged {
        return Err(Error::NonConvergence {
            best_beta: best.beta.iter().copied().collect(),
            best_objective: best.objective,
            grad_norm: best.grad_norm,
            iterations: best.iterations,
            multistarts: n_starts,
        });
    }

    let ev = evaluate(sample, model, &w_mat, &best.beta);
    let h = ev.j_bar.transpose() * &w_mat * &ev.j_bar;
    check_invertible(&h, "J'ΥJ at the optimum")?;

    Ok(FitResult {
        beta_hat: best.beta,
        j_hat: ev.j_bar,
        weight: upsilon,
        objective: ev.objective,
        grad_norm: best.grad_norm,
        iterations: best.iterations,
        multistart_index: best.start,
    })
}

fn check_invertible(h: &DMatrix<f64>, what: &str) -> Result<()> {
    let sym = SymMatrix::new(h.clone())?;
    let dec = linalg::eigh(&sym)?;
    let max = dec.eigenvalues[0]
        .abs()
        .max(dec.eigenvalues[h.nrows() - 1].abs());
    if dec.eigenvalues[h.nrows() - 1] <= 1e-12 * max.max(1e-300) {
        return Err(Error::RankDeficient(format!("{what} is singular")));
    }
    Ok(())
}

/// Estimated influence contributions on the full C1×C2 grid.
///
/// Empty cells carry the zero vector (their cell moment is an empty sum).
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceMatrix {
    c1: usize,
    c2: usize,
    d: usize,
    values: Vec<DVector<f64>>,
}

impl InfluenceMatrix {
    pub fn new(c1: usize, c2: usize, d: usize, values: Vec<DVector<f64>>) -> Result<Self> {
        if c1 == 0 || c2 == 0 || d == 0 {
            return Err(Error::InvalidInput(
                "grid dimensions must be positive".into(),
            ));
        }
        if values.len() != c1 * c2 {
            return Err(Error::DimensionMismatch(format!(
                "expected {} grid values, got {}",
                c1 * c2,
                values.len()
            )));
        }
        if values
            .iter()
            .any(|v| v.len() != d || v.iter().any(|c| !c.is_finite()))
        {
            return Err(Error::ContractViolation(
                "influence values must be finite d-vectors".into(),
            ));
        }
        Ok(Self { c1, c2, d, values })
    }

    /// Builds a scalar (d=1) grid from row-major values.
    pub fn from_scalar_grid(rows: &[Vec<f64>]) -> Result<Self> {
        let c1 = rows.len();
        let c2 = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != c2) {
            return Err(Error::DimensionMismatch("ragged scalar grid".into()));
        }
        let values = rows
            .iter()
            .flatten()
            .map(|&v| DVector::from_column_slice(&[v]))
            .collect();
        Self::new(c1, c2, 1, values)
    }

    pub fn c1(&self) -> usize {
        self.c1
    }

    pub fn c2(&self) -> usize {
        self.c2
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn value(&self, i: usize, j: usize) -> &DVector<f64> {
        &self.values[i * self.c2 + j]
    }

    /// Grid average `(C1C2)⁻¹ Σ_ij Ŷ_ij`.
    pub fn grid_mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.d);
        for v in &self.values {
            m += v;
        }
        m / (self.c1 * self.c2) as f64
    }

    /// Swaps the two clustering dimensions.
    pub fn transposed(&self) -> Self {
        let values = (0..self.c2)
            .flat_map(|j| (0..self.c1).map(move |i| (i, j)))
            .map(|(i, j)| self.values[i * self.c2 + j].clone())
            .collect();
        Self {
            c1: self.c2,
            c2: self.c1,
            d: self.d,
            values,
        }
    }

    /// The scalar grid of component `k`.
    pub fn component(&self, k: usize) -> Result<Self> {
        if k >= self.d {
            return Err(Error::DimensionMismatch(format!(
                "component {k} out of range for dimension {}",
                self.d
            )));
        }
        let values = self
            .values
            .iter()
            .map(|v| DVector::from_column_slice(&[v[k]]))
            .collect();
        Self::new(self.c1, self.c2, 1, values)
    }
}

/// Computes `Ŷ_ij = −B (Ĵ'Υ_n Ĵ)⁻¹ Ĵ'Υ_n ψ_ij(β̂)` for every grid cell.
///
/// `b` is a d×p contrast of full row rank selecting the tested linear
/// combination of parameters.
pub fn influence_matrix(
    fit: &FitResult,
    sample: &ClusteredSample,
    model: &MomentModel,
    b: &DMatrix<f64>,
) -> Result<InfluenceMatrix> {
    let (p, q) = (model.p(), model.q());
    if b.nrows() == 0 || b.ncols() != p {
        return Err(Error::DimensionMismatch(format!(
            "contrast must be d×{p} with d ≥ 1, got {}x{}",
            b.nrows(),
            b.ncols()
        )));
    }
    check_invertible(&(b * b.transpose()), "BB' (contrast row rank)")
        .map_err(|_| Error::RankDeficient("contrast matrix B is not full row rank".into()))?;

    let w = fit.weight.as_matrix();
    let h = fit.j_hat.transpose() * w * &fit.j_hat;
    check_invertible(&h, "J'ΥJ")?;
    let jw = fit.j_hat.transpose() * w; // p×q
    let solved = h
        .lu()
        .solve(&jw)
        .ok_or_else(|| Error::RankDeficient("J'ΥJ is singular".into()))?;
    let k_map = -(b * solved); // d×q

    let d = b.nrows();
    let mut values = Vec::with_capacity(sample.n_cells());
    for i in 0..sample.c1() {
        for j in 0..sample.c2() {
            let mut psi = DVector::zeros(q);
            for unit in sample.cell(i, j) {
                psi += model.psi(unit, &fit.beta_hat);
            }
            values.push(&k_map * psi);
        }
    }
    InfluenceMatrix::new(sample.c1(), sample.c2(), d, values)
}

/// Two-step weight: the inverse of the clustered covariance of the cell
/// moments at a first-step estimate, clipped to the PSD cone and ridged so
/// the result is positive definite.
pub fn two_step_weight(
    sample: &ClusteredSample,
    model: &MomentModel,
    first: &FitResult,
) -> Result<SymMatrix> {
    let q = model.q();
    let mut values = Vec::with_capacity(sample.n_cells());
    for i in 0..sample.c1() {
        for j in 0..sample.c2() {
            let mut psi = DVector::zeros(q);
            for unit in sample.cell(i, j) {
                psi += model.psi(unit, &first.beta_hat);
            }
            values.push(psi);
        }
    }
    let grid = InfluenceMatrix::new(sample.c1(), sample.c2(), q, values)?;
    let v = crate::variance::variance_set(&grid, false)?;
    let cells = (sample.c1() * sample.c2()) as f64;
    let clipped = linalg::clip_negative_eigs(&v.vu.scale(cells))?;
    let ridge = 1e-10 * (1.0 + clipped.trace() / q as f64);
    let s = clipped.add(&SymMatrix::identity(q).scale(ridge))?;
    let inv =
        s.as_matrix().clone().lu().try_inverse().ok_or_else(|| {
            Error::RankDeficient("clustered moment covariance is singular".into())
        })?;
    // Scalar rescaling leaves the estimator unchanged but keeps the solver's
    // gradient threshold meaningful when the covariance is tiny.
    let w = SymMatrix::new(inv)?;
    Ok(w.scale(q as f64 / w.trace()))
}

/// Rejection rates for the regression DGP in which the two moment
/// combinations converge at different rates (`X_ij = U_i0`,
/// `ε_ij = U_0j + U_ij`), where the usual test on the slope is distorted.
#[derive(Debug, Clone)]
pub struct RateMismatchReport {
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub usual_level: f64,
    pub ddg_level: f64,
}

impl RateMismatchReport {
    pub fn to_csv(&self) -> String {
        format!(
            "method,level,n,reps,seed\nusual,{},{},{},{}\nddg,{},{},{},{}\n",
            self.usual_level,
            self.n,
            self.reps,
            self.seed,
            self.ddg_level,
            self.n,
            self.reps,
            self.seed
        )
    }
}

/// Simulates the rate-mismatch regression and reports usual vs max-of-three
/// rejection rates for the slope at nominal level 5%.
pub fn rate_mismatch_demo(n: usize, reps: usize, seed: u64) -> Result<RateMismatchReport> {
    if n < 10 {
        return Err(Error::InvalidInput("n must be at least 10".into()));
    }
    if reps == 0 {
        return Err(Error::InvalidInput("reps must be positive".into()));
    }
    let outcomes: Vec<Result<(bool, bool)>> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream_rng(seed, rep);
            let sample = crate::simulate::rate_mismatch_sample(n, &mut rng)?;
            let model = MomentModel::Ols { n_regressors: 2 };
            let fit = gmm_fit(&sample, &model, None, &SolverOptions::default())?;
            let b = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
            let infl = influence_matrix(&fit, &sample, &model, &b)?;
            let v = crate::variance::variance_set(&infl, false)?;
            let theta = fit.beta_hat[1];
            let ddg = crate::inference::t_ddg(theta, 0.0, &v, 0.05)?;
            let usual = crate::inference::t_usual(theta, 0.0, &v, 0.05)?;
            Ok((usual.reject, ddg.reject))
        })
        .collect();

    let mut usual_count = 0usize;
    let mut ddg_count = 0usize;
    for o in outcomes {
        let (u, d) = o?;
        usual_count += usize::from(u);
        ddg_count += usize::from(d);
    }
    Ok(RateMismatchReport {
        n,
        reps,
        seed,
        usual_level: usual_count as f64 / reps as f64,
        ddg_level: ddg_count as f64 / reps as f64,
    })
}
