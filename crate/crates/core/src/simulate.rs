//! Built-in data generating processes on the C1×C2 grid and the Monte Carlo
//! harness that produces rejection-rate tables.
//!
//! All shocks are i.i.d. standard normal. Replication `r` of a run draws
//! from substream `r` of the master seed, and per-replication outcomes are
//! reduced in replication order, so tables are a pure function of
//! `(specs, methods, reps, seed)` regardless of the parallelism degree.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngExt};
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::data::ClusteredSample;
use crate::dyadic::DyadicSample;
use crate::error::{Error, Result};
use crate::inference::{
    bonferroni_test, f_ddg, f_usual, t_cgm_fix, t_ddg, t_usual, Components, TestReport,
};
use crate::linalg::SymMatrix;
use crate::moments::{gmm_fit, influence_matrix, InfluenceMatrix, MomentModel, SolverOptions};
use crate::rng::stream_rng;
use crate::variance::{variance_set, VarianceSet};

/// Nominal level of all table cells.
pub const TABLE_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DgpFamily {
    UnivariateMean,
    MultivariateMean,
    Regression,
    DyadicDemo,
    RateMismatch,
}

impl DgpFamily {
    pub fn tag(&self) -> &'static str {
        match self {
            DgpFamily::UnivariateMean => "univariate_mean",
            DgpFamily::MultivariateMean => "multivariate_mean",
            DgpFamily::Regression => "regression",
            DgpFamily::DyadicDemo => "dyadic_demo",
            DgpFamily::RateMismatch => "rate_mismatch",
        }
    }
}

/// One simulation design: a family, a DGP index within the family, the grid
/// size (`C1 = C2 = n`), and an optional alternative shift for power.
#[derive(Debug, Clone)]
pub struct DgpSpec {
    pub family: DgpFamily,
    pub dgp_index: u8,
    pub n: usize,
    /// Null value tested for power; `None` means the family default.
    pub shift: Option<DVector<f64>>,
}

impl DgpSpec {
    pub fn new(family: DgpFamily, dgp_index: u8, n: usize) -> Result<Self> {
        let spec = Self {
            family,
            dgp_index,
            n,
            shift: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidInput("n must be at least 2".into()));
        }
        let max_index = match self.family {
            DgpFamily::UnivariateMean | DgpFamily::MultivariateMean | DgpFamily::Regression => 4,
            DgpFamily::DyadicDemo | DgpFamily::RateMismatch => 1,
        };
        if self.dgp_index < 1 || self.dgp_index > max_index {
            return Err(Error::InvalidInput(format!(
                "dgp index {} out of range 1..={max_index} for family {}",
                self.dgp_index,
                self.family.tag()
            )));
        }
        if let Some(shift) = &self.shift {
            if shift.len() != self.dim() {
                return Err(Error::DimensionMismatch(format!(
                    "shift must have length {}",
                    self.dim()
                )));
            }
        }
        Ok(())
    }

    /// Dimension of the tested parameter.
    pub fn dim(&self) -> usize {
        match self.family {
            DgpFamily::MultivariateMean => 2,
            _ => 1,
        }
    }

    /// `(δ_1n, δ_2n)` for the mean and regression families.
    pub fn deltas(&self) -> (f64, f64) {
        let root = 1.0 / (self.n as f64).sqrt();
        match self.dgp_index {
            1 => (1.0, 1.0),
            2 => match self.family {
                // Regression DGP2 drops the row effect only.
                DgpFamily::Regression => (0.0, 1.0),
                _ => (0.0, 0.0),
            },
            3 => match self.family {
                DgpFamily::Regression => (root, root),
                _ => (root, 0.0),
            },
            _ => (root, root),
        }
    }

    /// The alternative shift used for the power columns.
    pub fn power_shift(&self) -> Option<DVector<f64>> {
        if let Some(s) = &self.shift {
            return Some(s.clone());
        }
        match self.family {
            DgpFamily::UnivariateMean => {
                Some(DVector::from_column_slice(&[if self.dgp_index == 1 {
                    0.5
                } else {
                    0.15
                }]))
            }
            DgpFamily::MultivariateMean => {
                let v = if self.dgp_index == 1 { 0.3 } else { 0.125 };
                Some(DVector::from_column_slice(&[v, v]))
            }
            DgpFamily::Regression => Some(DVector::from_column_slice(&[match self.dgp_index {
                1 => 0.3,
                4 => 0.13,
                _ => 0.15,
            }])),
            DgpFamily::DyadicDemo | DgpFamily::RateMismatch => None,
        }
    }
}

/// One draw of a design: a raw value grid for the mean families, a
/// clustered sample for the regression-style families, a dyadic array for
/// the dyadic demo.
#[derive(Debug, Clone)]
pub enum SampleDraw {
    Grid(InfluenceMatrix),
    Clustered(ClusteredSample),
    Dyadic(DyadicSample),
}

fn draw_normals<R: Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

fn univariate_grid_from_shocks(
    n: usize,
    deltas: (f64, f64),
    u_row: &[f64],
    u_col: &[f64],
    u_cell: &[f64],
) -> InfluenceMatrix {
    let (d1, d2) = deltas;
    let values = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| {
            let z = d1 * u_row[i] + d2 * u_col[j] + u_row[i] * u_col[j] + 0.5 * u_cell[i * n + j];
            DVector::from_column_slice(&[z])
        })
        .collect();
    InfluenceMatrix::new(n, n, 1, values).expect("well-formed grid")
}

fn multivariate_grid_from_shocks(
    n: usize,
    deltas: (f64, f64),
    u_row: &[f64],
    w_row: &[f64],
    w_col: &[f64],
    w_cell: &[f64],
) -> InfluenceMatrix {
    let (d1, d2) = deltas;
    let values = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| {
            let second =
                d1 * w_row[i] + d2 * w_col[j] + w_row[i] * w_col[j] + 0.5 * w_cell[i * n + j];
            DVector::from_column_slice(&[u_row[i], second])
        })
        .collect();
    InfluenceMatrix::new(n, n, 2, values).expect("well-formed grid")
}

/// Draws one sample of the design from the given stream.
pub fn generate_sample<R: Rng>(spec: &DgpSpec, rng: &mut R) -> Result<SampleDraw> {
    spec.validate()?;
    let n = spec.n;
    match spec.family {
        DgpFamily::UnivariateMean => {
            let u_row = draw_normals(rng, n);
            let u_col = draw_normals(rng, n);
            let u_cell = draw_normals(rng, n * n);
            Ok(SampleDraw::Grid(univariate_grid_from_shocks(
                n,
                spec.deltas(),
                &u_row,
                &u_col,
                &u_cell,
            )))
        }
        DgpFamily::MultivariateMean => {
            let u_row = draw_normals(rng, n);
            let w_row = draw_normals(rng, n);
            let w_col = draw_normals(rng, n);
            let w_cell = draw_normals(rng, n * n);
            Ok(SampleDraw::Grid(multivariate_grid_from_shocks(
                n,
                spec.deltas(),
                &u_row,
                &w_row,
                &w_col,
                &w_cell,
            )))
        }
        DgpFamily::Regression => {
            let sample = if spec.dgp_index <= 3 {
                let (d1, d2) = spec.deltas();
                let u_row = draw_normals(rng, n);
                let w_row = draw_normals(rng, n);
                let w_col = draw_normals(rng, n);
                let mut cells = Vec::with_capacity(n * n);
                for i in 0..n {
                    for j in 0..n {
                        let w_cell: f64 = rng.sample(StandardNormal);
                        let eps =
                            d1 * w_row[i] + d2 * w_col[j] + w_row[i] * w_col[j] + 0.5 * w_cell;
                        cells.push(vec![vec![eps, 1.0, u_row[i]]]);
                    }
                }
                ClusteredSample::from_cells(
                    n,
                    n,
                    vec!["y".into(), "const".into(), "x".into()],
                    cells,
                )?
            } else {
                let u_row = draw_normals(rng, n);
                let w_col = draw_normals(rng, n);
                let mut cells = Vec::with_capacity(n * n);
                for i in 0..n {
                    for j in 0..n {
                        let u_cell: f64 = rng.sample(StandardNormal);
                        let w_cell: f64 = rng.sample(StandardNormal);
                        let eps = w_col[j] + 0.1 * w_cell;
                        cells.push(vec![vec![eps, 1.0, u_row[i], u_cell]]);
                    }
                }
                ClusteredSample::from_cells(
                    n,
                    n,
                    vec!["y".into(), "const".into(), "x".into(), "z".into()],
                    cells,
                )?
            };
            Ok(SampleDraw::Clustered(sample))
        }
        DgpFamily::RateMismatch => Ok(SampleDraw::Clustered(rate_mismatch_sample(n, rng)?)),
        DgpFamily::DyadicDemo => {
            let u = draw_normals(rng, n);
            let values = (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .map(|(i, j)| {
                    if i == j {
                        DVector::zeros(1)
                    } else {
                        DVector::from_column_slice(&[u[i] * u[j]])
                    }
                })
                .collect();
            Ok(SampleDraw::Dyadic(DyadicSample::new(n, 1, values)?))
        }
    }
}

/// Sample for the rate-mismatch regression: `X_ij = U_i0`,
/// `ε_ij = U_0j + U_ij`, outcome `ε` (both true coefficients are zero),
/// records `[y, 1, x]`.
pub fn rate_mismatch_sample<R: Rng>(n: usize, rng: &mut R) -> Result<ClusteredSample> {
    let u_row = draw_normals(rng, n);
    let u_col = draw_normals(rng, n);
    let mut cells = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let u_cell: f64 = rng.sample(StandardNormal);
            cells.push(vec![vec![u_col[j] + u_cell, 1.0, u_row[i]]]);
        }
    }
    ClusteredSample::from_cells(n, n, vec!["y".into(), "const".into(), "x".into()], cells)
}

/// Closed-form variance components `(Ω1, Ω2, Ω3, Ω4)` of the mean-family
/// designs.
pub fn theoretical_omegas(spec: &DgpSpec) -> Result<[SymMatrix; 4]> {
    spec.validate()?;
    let (d1, d2) = spec.deltas();
    match spec.family {
        DgpFamily::UnivariateMean => Ok([
            SymMatrix::scalar(d1 * d1)?,
            SymMatrix::scalar(d2 * d2)?,
            SymMatrix::scalar(1.0)?,
            SymMatrix::scalar(0.25)?,
        ]),
        DgpFamily::MultivariateMean => Ok([
            SymMatrix::from_diagonal(&[1.0, d1 * d1])?,
            SymMatrix::from_diagonal(&[0.0, d2 * d2])?,
            SymMatrix::from_diagonal(&[0.0, 1.0])?,
            SymMatrix::from_diagonal(&[0.0, 0.25])?,
        ]),
        _ => Err(Error::UnsupportedFamily(format!(
            "closed-form components exist for the mean families only, not {}",
            spec.family.tag()
        ))),
    }
}

/// Test methods the harness can tabulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum McMethod {
    Ddg,
    Usual,
    Cgm,
    Bonferroni,
}

impl McMethod {
    pub fn tag(&self) -> &'static str {
        match self {
            McMethod::Ddg => "ddg",
            McMethod::Usual => "usual",
            McMethod::Cgm => "cgm",
            McMethod::Bonferroni => "ddg_b",
        }
    }
}

/// Rates for one (design, method) table cell.
#[derive(Debug, Clone)]
pub struct CellRates {
    pub family: DgpFamily,
    pub dgp_index: u8,
    pub n: usize,
    pub method: McMethod,
    pub level: f64,
    pub power: Option<f64>,
    /// Univariate families: share of draws with `V̂u ≤ 0`.
    pub p_se_u_zero: Option<f64>,
    /// Multivariate family: share of draws with a negative usual form.
    pub p_f_u_negative: Option<f64>,
}

/// Rejection rates for a set of designs, reproducible from `(specs,
/// methods, reps, seed)`.
#[derive(Debug, Clone)]
pub struct RejectionTable {
    pub rows: Vec<CellRates>,
    pub reps: usize,
    pub seed: u64,
}

struct RepOutcome {
    reject_null: Vec<bool>,
    reject_alt: Vec<bool>,
    se_u_zero: Option<bool>,
    f_u_negative: Option<bool>,
}

fn reject_of(report: &TestReport) -> bool {
    report.reject
}

fn scalar_tests(
    method: McMethod,
    theta_hat: f64,
    theta0: f64,
    v: &VarianceSet,
    beta_hat: Option<&DVector<f64>>,
    full_vu: Option<&SymMatrix>,
    coord: usize,
) -> Result<bool> {
    let report = match method {
        McMethod::Ddg => t_ddg(theta_hat, theta0, v, TABLE_ALPHA)?,
        McMethod::Usual => t_usual(theta_hat, theta0, v, TABLE_ALPHA)?,
        McMethod::Cgm => {
            let (beta, vu) = match (beta_hat, full_vu) {
                (Some(b), Some(m)) => (b.clone(), m.clone()),
                _ => (DVector::from_column_slice(&[theta_hat]), v.vu.clone()),
            };
            t_cgm_fix(&beta, &vu, coord, theta0, TABLE_ALPHA)?
        }
        McMethod::Bonferroni => bonferroni_test(
            &DVector::from_column_slice(&[theta_hat]),
            &DVector::from_column_slice(&[theta0]),
            v,
            TABLE_ALPHA,
        )?,
    };
    Ok(reject_of(&report))
}

fn run_rep(spec: &DgpSpec, methods: &[McMethod], seed: u64, rep: u64) -> Result<RepOutcome> {
    let mut rng = stream_rng(seed, rep);
    let shift = spec.power_shift();
    match spec.family {
        DgpFamily::UnivariateMean => {
            let SampleDraw::Grid(grid) = generate_sample(spec, &mut rng)? else {
                unreachable!("univariate family draws grids")
            };
            let theta_hat = grid.grid_mean()[0];
            let infl = demeaned(&grid);
            let v = variance_set(&infl, false)?;
            let se_u_zero = v.vu.get(0, 0) <= 0.0;
            let alt = shift.as_ref().map(|s| s[0]).unwrap_or(0.0);
            let mut reject_null = Vec::with_capacity(methods.len());
            let mut reject_alt = Vec::with_capacity(methods.len());
            for &m in methods {
                reject_null.push(scalar_tests(m, theta_hat, 0.0, &v, None, None, 0)?);
                reject_alt.push(scalar_tests(m, theta_hat, alt, &v, None, None, 0)?);
            }
            Ok(RepOutcome {
                reject_null,
                reject_alt,
                se_u_zero: Some(se_u_zero),
                f_u_negative: None,
            })
        }
        DgpFamily::MultivariateMean => {
            let SampleDraw::Grid(grid) = generate_sample(spec, &mut rng)? else {
                unreachable!("multivariate family draws grids")
            };
            let theta_hat = grid.grid_mean();
            let infl = demeaned(&grid);
            let v = variance_set(&infl, false)?;
            let zero = DVector::zeros(2);
            let alt = shift.clone().unwrap_or_else(|| DVector::zeros(2));
            let usual_null = f_usual(&theta_hat, &zero, &v, TABLE_ALPHA)?;
            let f_u_negative = match usual_null.components {
                Components::FUsual { negative_form, .. } => negative_form,
                _ => false,
            };
            let mut reject_null = Vec::with_capacity(methods.len());
            let mut reject_alt = Vec::with_capacity(methods.len());
            for &m in methods {
                let (nul, alt_rej) =
                    match m {
                        McMethod::Ddg => (
                            f_ddg(&theta_hat, &zero, &v, TABLE_ALPHA)?.reject,
                            f_ddg(&theta_hat, &alt, &v, TABLE_ALPHA)?.reject,
                        ),
                        McMethod::Usual => (
                            usual_null.reject,
                            f_usual(&theta_hat, &alt, &v, TABLE_ALPHA)?.reject,
                        ),
                        McMethod::Bonferroni => (
                            bonferroni_test(&theta_hat, &zero, &v, TABLE_ALPHA)?.reject,
                            bonferroni_test(&theta_hat, &alt, &v, TABLE_ALPHA)?.reject,
                        ),
                        McMethod::Cgm => return Err(Error::UnsupportedFamily(
                            "the eigenvalue-clipping fix applies to coordinates of a parameter \
                             vector, not to joint mean tests"
                                .into(),
                        )),
                    };
                reject_null.push(nul);
                reject_alt.push(alt_rej);
            }
            Ok(RepOutcome {
                reject_null,
                reject_alt,
                se_u_zero: None,
                f_u_negative: Some(f_u_negative),
            })
        }
        DgpFamily::Regression | DgpFamily::RateMismatch => {
            let SampleDraw::Clustered(sample) = generate_sample(spec, &mut rng)? else {
                unreachable!("regression families draw clustered samples")
            };
            let p = sample.numeric_columns().len() - 1;
            let model = MomentModel::Ols { n_regressors: p };
            let fit = gmm_fit(&sample, &model, None, &SolverOptions::default())?;
            let full_infl = influence_matrix(&fit, &sample, &model, &DMatrix::identity(p, p))?;
            let full_v = variance_set(&full_infl, false)?;
            // Tested coefficient: the first non-constant regressor.
            let coord = 1;
            let slope_v = full_v.coordinate(coord)?;
            let theta_hat = fit.beta_hat[coord];
            let se_u_zero = slope_v.vu.get(0, 0) <= 0.0;
            let alt = shift.as_ref().map(|s| s[0]).unwrap_or(0.0);
            let mut reject_null = Vec::with_capacity(methods.len());
            let mut reject_alt = Vec::with_capacity(methods.len());
            for &m in methods {
                reject_null.push(scalar_tests(
                    m,
                    theta_hat,
                    0.0,
                    &slope_v,
                    Some(&fit.beta_hat),
                    Some(&full_v.vu),
                    coord,
                )?);
                reject_alt.push(scalar_tests(
                    m,
                    theta_hat,
                    alt,
                    &slope_v,
                    Some(&fit.beta_hat),
                    Some(&full_v.vu),
                    coord,
                )?);
            }
            Ok(RepOutcome {
                reject_null,
                reject_alt,
                se_u_zero: Some(se_u_zero),
                f_u_negative: None,
            })
        }
        DgpFamily::DyadicDemo => Err(Error::UnsupportedFamily(
            "the dyadic demonstration has its own driver; see the dyadic module".into(),
        )),
    }
}

fn demeaned(grid: &InfluenceMatrix) -> InfluenceMatrix {
    let mean = grid.grid_mean();
    let values = (0..grid.c1())
        .flat_map(|i| (0..grid.c2()).map(move |j| (i, j)))
        .map(|(i, j)| grid.value(i, j) - &mean)
        .collect();
    InfluenceMatrix::new(grid.c1(), grid.c2(), grid.dim(), values).expect("same shape")
}

/// Runs the Monte Carlo harness.
///
/// `parallelism` caps the worker threads (`None` uses the global pool); it
/// cannot change the resulting table.
pub fn run_monte_carlo(
    specs: &[DgpSpec],
    methods: &[McMethod],
    reps: usize,
    seed: u64,
    parallelism: Option<usize>,
) -> Result<RejectionTable> {
    if reps == 0 {
        return Err(Error::InvalidInput("reps must be at least 1".into()));
    }
    if methods.is_empty() {
        return Err(Error::InvalidInput("no methods requested".into()));
    }
    let run = || -> Result<RejectionTable> {
        let mut rows = Vec::new();
        for spec in specs {
            spec.validate()?;
            let outcomes: Vec<Result<RepOutcome>> = (0..reps as u64)
                .into_par_iter()
                .map(|rep| run_rep(spec, methods, seed, rep))
                .collect();
            let mut null_counts = vec![0usize; methods.len()];
            let mut alt_counts = vec![0usize; methods.len()];
            let mut se_u_zero_count = 0usize;
            let mut f_u_neg_count = 0usize;
            let mut have_se_flag = false;
            let mut have_f_flag = false;
            for outcome in outcomes {
                let o = outcome?;
                for (k, &r) in o.reject_null.iter().enumerate() {
                    null_counts[k] += usize::from(r);
                }
                for (k, &r) in o.reject_alt.iter().enumerate() {
                    alt_counts[k] += usize::from(r);
                }
                if let Some(z) = o.se_u_zero {
                    have_se_flag = true;
                    se_u_zero_count += usize::from(z);
                }
                if let Some(z) = o.f_u_negative {
                    have_f_flag = true;
                    f_u_neg_count += usize::from(z);
                }
            }
            let denom = reps as f64;
            let has_power = spec.power_shift().is_some();
            for (k, &method) in methods.iter().enumerate() {
                rows.push(CellRates {
                    family: spec.family,
                    dgp_index: spec.dgp_index,
                    n: spec.n,
                    method,
                    level: null_counts[k] as f64 / denom,
                    power: has_power.then(|| alt_counts[k] as f64 / denom),
                    p_se_u_zero: have_se_flag.then(|| se_u_zero_count as f64 / denom),
                    p_f_u_negative: have_f_flag.then(|| f_u_neg_count as f64 / denom),
                });
            }
        }
        Ok(RejectionTable { rows, reps, seed })
    };
    match parallelism {
        Some(threads) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::InvalidInput(format!("cannot build thread pool: {e}")))?;
            pool.install(run)
        }
        None => run(),
    }
}

impl RejectionTable {
    /// Finds the cell for `(family, dgp, n, method)`.
    pub fn cell(
        &self,
        family: DgpFamily,
        dgp_index: u8,
        n: usize,
        method: McMethod,
    ) -> Option<&CellRates> {
        self.rows.iter().find(|r| {
            r.family == family && r.dgp_index == dgp_index && r.n == n && r.method == method
        })
    }

    /// CSV emission (RFC quoting), with a footer row carrying the
    /// replication count and master seed.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .flexible(true)
            .from_writer(Vec::new());
        w.write_record([
            "family",
            "dgp",
            "n",
            "method",
            "level",
            "power",
            "p_se_u_zero",
            "p_f_u_negative",
        ])
        .expect("in-memory write");
        let fmt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.family.tag().to_string(),
                r.dgp_index.to_string(),
                r.n.to_string(),
                r.method.tag().to_string(),
                format!("{}", r.level),
                fmt(r.power),
                fmt(r.p_se_u_zero),
                fmt(r.p_f_u_negative),
            ])
            .expect("in-memory write");
        }
        w.write_record([
            "footer",
            &format!("reps={}", self.reps),
            &format!("seed={}", self.seed),
        ])
        .expect("in-memory write");
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("valid UTF-8")
    }

    /// Aligned markdown table with a footer line.
    pub fn to_markdown(&self) -> String {
        let header = [
            "family",
            "dgp",
            "n",
            "method",
            "level",
            "power",
            "P(se_u=0)",
            "P(F_u<0)",
        ];
        let mut cells: Vec<[String; 8]> = Vec::with_capacity(self.rows.len());
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
        for r in &self.rows {
            cells.push([
                r.family.tag().to_string(),
                r.dgp_index.to_string(),
                r.n.to_string(),
                r.method.tag().to_string(),
                format!("{:.4}", r.level),
                fmt(r.power),
                fmt(r.p_se_u_zero),
                fmt(r.p_f_u_negative),
            ]);
        }
        let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
        for row in &cells {
            for (k, cell) in row.iter().enumerate() {
                widths[k] = widths[k].max(cell.len());
            }
        }
        let mut out = String::new();
        let write_row = |out: &mut String, row: &[String]| {
            out.push('|');
            for (k, cell) in row.iter().enumerate() {
                out.push_str(&format!(" {cell:width$} |", width = widths[k]));
            }
            out.push('\n');
        };
        write_row(
            &mut out,
            &header.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
        );
        out.push('|');
        for w in &widths {
            out.push_str(&format!("{:-<width$}|", "", width = w + 2));
        }
        out.push('\n');
        for row in &cells {
            write_row(&mut out, row);
        }
        out.push_str(&format!(
            "\nreplications: {}, master seed: {}\n",
            self.reps, self.seed
        ));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_shocks_give_zero_grid() {
        let n = 4;
        let zeros_row = vec![0.0; n];
        let zeros_cell = vec![0.0; n * n];
        let grid = univariate_grid_from_shocks(n, (1.0, 1.0), &zeros_row, &zeros_row, &zeros_cell);
        for i in 0..n {
            for j in 0..n {
                assert_eq!(grid.value(i, j)[0], 0.0);
            }
        }
    }

    #[test]
    fn delta_table_matches_designs() {
        let n = 25;
        let root = 1.0 / 5.0;
        let d = |family, idx| DgpSpec::new(family, idx, n).unwrap().deltas();
        assert_eq!(d(DgpFamily::UnivariateMean, 1), (1.0, 1.0));
        assert_eq!(d(DgpFamily::UnivariateMean, 2), (0.0, 0.0));
        assert_eq!(d(DgpFamily::UnivariateMean, 3), (root, 0.0));
        assert_eq!(d(DgpFamily::UnivariateMean, 4), (root, root));
        assert_eq!(d(DgpFamily::Regression, 2), (0.0, 1.0));
        assert_eq!(d(DgpFamily::Regression, 3), (root, root));
    }

    #[test]
    fn univariate_dgp1_variance_matches_moments() {
        // Var(Z) = δ1² + δ2² + 1 + 1/4 = 3.25 for DGP1.
        let spec = DgpSpec::new(DgpFamily::UnivariateMean, 1, 2).unwrap();
        let draws = 100_000 / 4;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut count = 0usize;
        for rep in 0..draws {
            let mut rng = stream_rng(7, rep as u64);
            let SampleDraw::Grid(grid) = generate_sample(&spec, &mut rng).unwrap() else {
                unreachable!()
            };
            for i in 0..2 {
                for j in 0..2 {
                    let z = grid.value(i, j)[0];
                    sum += z;
                    sum_sq += z * z;
                    count += 1;
                }
            }
        }
        let mean = sum / count as f64;
        let var = sum_sq / count as f64 - mean * mean;
        // Cells within a grid are correlated; bound the error loosely at
        // 3 s.e. computed as if independent times a safety factor.
        let se = (2.0 * 3.25f64 * 3.25 / count as f64).sqrt() * 3.0;
        assert!((var - 3.25).abs() < 6.0 * se.max(0.02), "var {var} vs 3.25");
    }

    #[test]
    fn theoretical_omegas_examples() {
        let spec2 = DgpSpec::new(DgpFamily::UnivariateMean, 2, 10).unwrap();
        let om2 = theoretical_omegas(&spec2).unwrap();
        assert_eq!(om2[0].get(0, 0), 0.0);
        assert_eq!(om2[1].get(0, 0), 0.0);

        let spec1 = DgpSpec::new(DgpFamily::UnivariateMean, 1, 10).unwrap();
        let om1 = theoretical_omegas(&spec1).unwrap();
        assert_eq!(
            [
                om1[0].get(0, 0),
                om1[1].get(0, 0),
                om1[2].get(0, 0),
                om1[3].get(0, 0)
            ],
            [1.0, 1.0, 1.0, 0.25]
        );
        // Sum identity: Σ Ω_k = V(Z_11).
        let total: f64 = om1.iter().map(|m| m.get(0, 0)).sum();
        assert!((total - 3.25).abs() < 1e-12);

        let reg = DgpSpec::new(DgpFamily::Regression, 1, 10).unwrap();
        assert!(matches!(
            theoretical_omegas(&reg),
            Err(Error::UnsupportedFamily(_))
        ));
    }

    #[test]
    fn empirical_omegas_match_covariance_identities() {
        // Ω1 = Cov(Y11, Y12), Ω2 = Cov(Y11, Y21): estimate both from 10⁵
        // joint draws for every mean-family design.
        for family in [DgpFamily::UnivariateMean, DgpFamily::MultivariateMean] {
            for idx in 1..=4u8 {
                let spec = DgpSpec::new(family, idx, 16).unwrap();
                let (d1, d2) = spec.deltas();
                let dim = spec.dim();
                let omegas = theoretical_omegas(&spec).unwrap();
                let draws = 100_000usize;
                let mut rng = stream_rng(1000 + idx as u64, family.tag().len() as u64);
                let mut sum1 = DMatrix::<f64>::zeros(dim, dim);
                let mut sum1_sq = DMatrix::<f64>::zeros(dim, dim);
                let mut sum2 = DMatrix::<f64>::zeros(dim, dim);
                let mut sum2_sq = DMatrix::<f64>::zeros(dim, dim);
                for _ in 0..draws {
                    // Shared shocks: row 1, rows 2; columns 1, 2; cells.
                    let (y11, y12, y21) = if family == DgpFamily::UnivariateMean {
                        let (u10, u20, u01, u02): (f64, f64, f64, f64) = (
                            rng.sample(StandardNormal),
                            rng.sample(StandardNormal),
                            rng.sample(StandardNormal),
                            rng.sample(StandardNormal),
                        );
                        let (e11, e12, e21): (f64, f64, f64) = (
                            rng.sample(StandardNormal),
                            rng.sample(StandardNormal),
                            rng.sample(StandardNormal),
                        );
                        let z = |ur: f64, uc: f64, e: f64| d1 * ur + d2 * uc + ur * uc + 0.5 * e;
                        (
                            DVector::from_column_slice(&[z(u10, u01, e11)]),
                            DVector::from_column_slice(&[z(u10, u02, e12)]),
                            DVector::from_column_slice(&[z(u20, u01, e21)]),
                        )
                    } else {
                        let (u10, u20): (f64, f64) =
                            (rng.sample(StandardNormal), rng.sample(StandardNormal));
                        let (w10, w20, w01, w02): (f64, f64, f64, f64) = (
                            rng.sample(StandardNormal),
                            rng.sample(StandardNormal),
                            rng.sample(StandardNormal),
                            rng.sample(StandardNormal),
                        );
                        let (e11, e12, e21): (f64, f64, f64) = (
                            rng.sample(StandardNormal),
                            rng.sample(StandardNormal),
                            rng.sample(StandardNormal),
                        );
                        let z = |u: f64, wr: f64, wc: f64, e: f64| {
                            DVector::from_column_slice(&[u, d1 * wr + d2 * wc + wr * wc + 0.5 * e])
                        };
                        (
                            z(u10, w10, w01, e11),
                            z(u10, w10, w02, e12),
                            z(u20, w20, w01, e21),
                        )
                    };
                    let p1 = &y11 * y12.transpose();
                    let p2 = &y11 * y21.transpose();
                    sum1 += &p1;
                    sum2 += &p2;
                    sum1_sq += p1.map(|v| v * v);
                    sum2_sq += p2.map(|v| v * v);
                }
                let nf = draws as f64;
                for (sum, sum_sq, target, name) in [
                    (&sum1, &sum1_sq, &omegas[0], "omega1"),
                    (&sum2, &sum2_sq, &omegas[1], "omega2"),
                ] {
                    for a in 0..dim {
                        for b in 0..dim {
                            let mean = sum[(a, b)] / nf;
                            let var = (sum_sq[(a, b)] / nf - mean * mean).max(0.0);
                            let se = (var / nf).sqrt();
                            let want = target.get(a, b);
                            assert!(
                                (mean - want).abs() <= 4.0 * se + 1e-9,
                                "{} {:?} dgp {idx} entry ({a},{b}): {mean} vs {want} (se {se})",
                                name,
                                family
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn tables_are_deterministic_and_thread_invariant() {
        let spec = DgpSpec::new(DgpFamily::UnivariateMean, 1, 10).unwrap();
        let methods = [McMethod::Ddg, McMethod::Usual];
        let a = run_monte_carlo(&[spec.clone()], &methods, 60, 99, Some(1)).unwrap();
        let b = run_monte_carlo(&[spec.clone()], &methods, 60, 99, Some(3)).unwrap();
        let c = run_monte_carlo(&[spec], &methods, 60, 99, None).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.to_csv(), c.to_csv());
        assert!(a.to_markdown().contains("master seed: 99"));
    }

    #[test]
    fn power_dominates_level_at_paper_shifts() {
        let mut specs = Vec::new();
        for idx in 1..=4u8 {
            specs.push(DgpSpec::new(DgpFamily::UnivariateMean, idx, 10).unwrap());
            specs.push(DgpSpec::new(DgpFamily::MultivariateMean, idx, 10).unwrap());
            specs.push(DgpSpec::new(DgpFamily::Regression, idx, 10).unwrap());
        }
        for spec in specs {
            let methods: Vec<McMethod> = match spec.family {
                DgpFamily::MultivariateMean => {
                    vec![McMethod::Ddg, McMethod::Usual, McMethod::Bonferroni]
                }
                _ => vec![McMethod::Ddg, McMethod::Usual, McMethod::Cgm],
            };
            let table = run_monte_carlo(&[spec.clone()], &methods, 2000, 31, None).unwrap();
            for row in &table.rows {
                let power = row.power.expect("table families have power shifts");
                assert!(
                    power >= row.level,
                    "{:?} dgp {} method {:?}: power {} < level {}",
                    row.family,
                    row.dgp_index,
                    row.method,
                    power,
                    row.level
                );
            }
        }
    }

    #[test]
    fn cgm_rejected_for_joint_mean_tests() {
        let spec = DgpSpec::new(DgpFamily::MultivariateMean, 1, 10).unwrap();
        let res = run_monte_carlo(&[spec], &[McMethod::Cgm], 5, 1, None);
        assert!(matches!(res, Err(Error::UnsupportedFamily(_))));
    }
}
