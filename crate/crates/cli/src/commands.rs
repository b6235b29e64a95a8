//! Drivers for the subcommands: build the pipeline out of the library,
//! then emit markdown + CSV reports and a JSON summary per run.

use std::fs;
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use serde_json::{json, Map, Value};

use twoway_core::data::{build_sample, ingest_csv, ClusteredSample, CsvSchema};
use twoway_core::dyadic;
use twoway_core::inference::{
    bonferroni_test, confidence_interval, ellipsoid_region, f_ddg, f_usual, star_region,
    t_adaptive, t_cgm_fix, t_ddg, t_usual, Components, TestReport,
};
use twoway_core::limits::{power_loss_experiment, zeta_sweep, zeta_sweep_csv};
use twoway_core::linalg::SymMatrix;
use twoway_core::moments::{
    gmm_fit, influence_matrix, two_step_weight, FitResult, MomentModel, SolverOptions,
};
use twoway_core::simulate::{run_monte_carlo, DgpFamily, DgpSpec, McMethod};
use twoway_core::variance::{diagnose_psd, variance_set, PsdDiagnostic, VarianceSet};

use crate::args::{
    DyadicArgs, FamilyFlag, InferArgs, LimitArgs, MethodFlag, ModelKind, PowerLossArgs,
    SimulateArgs, WeightFlag,
};
use crate::fail::{CliError, CliResult};

fn out_dir(requested: &Option<PathBuf>) -> PathBuf {
    requested
        .clone()
        .or_else(|| std::env::var_os("TWOWAY_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn timestamp(no_timestamp: bool) -> Option<String> {
    if no_timestamp {
        return None;
    }
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    Some(format!("unix:{secs}"))
}

fn write_file(dir: &PathBuf, name: &str, contents: &str) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::from_io(e, "cannot create output directory"))?;
    let path = dir.join(name);
    fs::write(&path, contents)
        .map_err(|e| CliError::from_io(e, &format!("cannot write {}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

/// JSON-safe float: JSON has no ±∞/NaN, so those become strings.
fn jf(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else if x.is_nan() {
        Value::String("NaN".into())
    } else if x > 0.0 {
        Value::String("Infinity".into())
    } else {
        Value::String("-Infinity".into())
    }
}

fn jvec(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| jf(x)).collect())
}

fn jmatrix(m: &SymMatrix) -> Value {
    let d = m.dim();
    Value::Array(
        (0..d)
            .map(|i| Value::Array((0..d).map(|j| jf(m.get(i, j))).collect()))
            .collect(),
    )
}

fn report_json(r: &TestReport) -> Value {
    let components = match &r.components {
        Components::T {
            t,
            se1,
            se2,
            se_u,
            se,
        } => {
            json!({"t": jf(*t), "se1": jf(*se1), "se2": jf(*se2), "se_u": jf(*se_u), "se": jf(*se)})
        }
        Components::Cgm { t, se } => json!({"t": jf(*t), "se": jf(*se)}),
        Components::Adaptive { t, se, branch } => json!({
            "t": jf(*t), "se": jf(*se),
            "branch": match branch {
                twoway_core::inference::AdaptiveBranch::Usual => "usual",
                twoway_core::inference::AdaptiveBranch::RowCluster => "t1",
            }
        }),
        Components::F {
            f1,
            f2,
            f_u,
            negative_form,
        } => json!({"f1": jf(*f1), "f2": jf(*f2), "f_u": jf(*f_u), "negative_form": negative_form}),
        Components::FUsual { f_u, negative_form } => {
            json!({"f_u": jf(*f_u), "negative_form": negative_form})
        }
        Components::Bonferroni { t, se } => json!({"t": jvec(t), "se": jvec(se)}),
    };
    json!({
        "method": r.method.tag(),
        "statistic": jf(r.statistic),
        "critical_value": jf(r.critical_value),
        "reject": r.reject,
        "p_value": jf(r.p_value),
        "components": components,
    })
}

fn diag_json(d: &PsdDiagnostic) -> Value {
    json!({
        "min_eigenvalue": jf(d.min_eigenvalue),
        "eigenvalues": jvec(&d.eigenvalues),
        "negative_count": d.negative_count,
        "zero_se_flags": d.zero_se_flags,
    })
}

fn fmt_stat(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.6}")
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

struct InferPipeline {
    sample: ClusteredSample,
    model: MomentModel,
    fit: FitResult,
    /// Names of all parameters (regressors, or outcome components).
    param_names: Vec<String>,
    /// Indices of the tested coefficients.
    coef_idx: Vec<usize>,
    /// Variance set of the tested coefficients.
    v_sel: VarianceSet,
    /// Variance set of the full parameter vector.
    v_full: VarianceSet,
    theta_hat: DVector<f64>,
    null: DVector<f64>,
}

fn build_pipeline(args: &InferArgs) -> CliResult<InferPipeline> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(CliError::Usage(format!(
            "alpha must lie in (0,1), got {}",
            args.alpha
        )));
    }
    let (numeric_cols, param_names): (Vec<String>, Vec<String>) = match args.model {
        ModelKind::Mean => {
            if args.y.is_empty() {
                return Err(CliError::Usage("the mean model needs --y".into()));
            }
            if !args.x.is_empty() {
                return Err(CliError::Usage(
                    "the mean model takes no regressors; drop --x".into(),
                ));
            }
            (args.y.clone(), args.y.clone())
        }
        _ => {
            if args.y.len() != 1 {
                return Err(CliError::Usage(
                    "regression models need exactly one --y column".into(),
                ));
            }
            if args.x.is_empty() {
                return Err(CliError::Usage("regression models need --x".into()));
            }
            let mut numeric = vec![args.y[0].clone()];
            numeric.extend(args.x.iter().cloned());
            let mut params = Vec::new();
            if !args.no_intercept {
                params.push("_cons".to_string());
            }
            params.extend(args.x.iter().cloned());
            (numeric, params)
        }
    };

    let schema = CsvSchema::new([args.g1.clone(), args.g2.clone()], numeric_cols.clone());
    let file = fs::File::open(&args.data)
        .map_err(|e| CliError::from_io(e, &format!("cannot open {}", args.data.display())))?;
    let table = ingest_csv(file, &schema).map_err(CliError::from_data)?;
    let raw = build_sample(&table, &args.g1, &args.g2).map_err(CliError::from_data)?;

    let (sample, model) = match args.model {
        ModelKind::Mean => (raw, MomentModel::Mean { dim: args.y.len() }),
        _ => {
            // Regression record layout is [y, regressors...]; inject the
            // constant column unless suppressed.
            let sample = if args.no_intercept {
                raw
            } else {
                let mut cells = Vec::with_capacity(raw.n_cells());
                for i in 0..raw.c1() {
                    for j in 0..raw.c2() {
                        cells.push(
                            raw.cell(i, j)
                                .iter()
                                .map(|rec| {
                                    let mut out = Vec::with_capacity(rec.len() + 1);
                                    out.push(rec[0]);
                                    out.push(1.0);
                                    out.extend_from_slice(&rec[1..]);
                                    out
                                })
                                .collect(),
                        );
                    }
                }
                let mut cols = vec![numeric_cols[0].clone(), "_cons".to_string()];
                cols.extend(numeric_cols[1..].iter().cloned());
                ClusteredSample::from_cells(raw.c1(), raw.c2(), cols, cells)
                    .map_err(CliError::from_data)?
            };
            let k = param_names.len();
            let model = match args.model {
                ModelKind::Ols => MomentModel::Ols { n_regressors: k },
                ModelKind::Probit => MomentModel::Probit { n_regressors: k },
                ModelKind::Logit => MomentModel::Logit { n_regressors: k },
                ModelKind::Poisson => MomentModel::Poisson { n_regressors: k },
                ModelKind::Mean => unreachable!(),
            };
            (sample, model)
        }
    };

    let coef_names: Vec<String> = if args.coef.is_empty() {
        match args.model {
            ModelKind::Mean => param_names.clone(),
            _ => vec![param_names
                .iter()
                .find(|n| n.as_str() != "_cons")
                .cloned()
                .expect("at least one regressor")],
        }
    } else {
        args.coef.clone()
    };
    let coef_idx: Vec<usize> = coef_names
        .iter()
        .map(|name| {
            param_names
                .iter()
                .position(|p| p == name)
                .ok_or_else(|| CliError::Usage(format!("unknown coefficient `{name}`")))
        })
        .collect::<CliResult<_>>()?;
    let d = coef_idx.len();
    let null = if args.null.is_empty() {
        DVector::zeros(d)
    } else if args.null.len() == d {
        DVector::from_column_slice(&args.null)
    } else {
        return Err(CliError::Usage(format!(
            "--null needs {d} value(s), got {}",
            args.null.len()
        )));
    };

    let opts = SolverOptions {
        max_iter: args.max_iter,
        ..SolverOptions::default()
    };
    let fit = match args.weight {
        WeightFlag::Identity => gmm_fit(&sample, &model, None, &opts),
        WeightFlag::TwoStep => {
            let first = gmm_fit(&sample, &model, None, &opts).map_err(CliError::from_model)?;
            let w = two_step_weight(&sample, &model, &first).map_err(CliError::from_model)?;
            gmm_fit(&sample, &model, Some(&w), &opts)
        }
    }
    .map_err(CliError::from_model)?;

    let p = model.p();
    let mut b_sel = DMatrix::<f64>::zeros(d, p);
    for (row, &k) in coef_idx.iter().enumerate() {
        b_sel[(row, k)] = 1.0;
    }
    let infl_sel = influence_matrix(&fit, &sample, &model, &b_sel).map_err(CliError::from_model)?;
    let v_sel = variance_set(&infl_sel, args.dof).map_err(CliError::from_model)?;
    let infl_full = influence_matrix(&fit, &sample, &model, &DMatrix::identity(p, p))
        .map_err(CliError::from_model)?;
    let v_full = variance_set(&infl_full, args.dof).map_err(CliError::from_model)?;
    let theta_hat = &b_sel * &fit.beta_hat;

    Ok(InferPipeline {
        sample,
        model,
        fit,
        param_names,
        coef_idx,
        v_sel,
        v_full,
        theta_hat,
        null,
    })
}

pub fn run_infer(args: InferArgs) -> CliResult<()> {
    let pipe = build_pipeline(&args)?;
    let d = pipe.coef_idx.len();
    let alpha = args.alpha;

    let mut reports: Vec<TestReport> = Vec::new();
    for m in &args.methods {
        match (m, d) {
            (MethodFlag::Ddg, 1) => reports.push(
                t_ddg(pipe.theta_hat[0], pipe.null[0], &pipe.v_sel, alpha)
                    .map_err(CliError::from_model)?,
            ),
            (MethodFlag::Ddg, _) => reports.push(
                f_ddg(&pipe.theta_hat, &pipe.null, &pipe.v_sel, alpha)
                    .map_err(CliError::from_model)?,
            ),
            (MethodFlag::Usual, 1) => reports.push(
                t_usual(pipe.theta_hat[0], pipe.null[0], &pipe.v_sel, alpha)
                    .map_err(CliError::from_model)?,
            ),
            (MethodFlag::Usual, _) => reports.push(
                f_usual(&pipe.theta_hat, &pipe.null, &pipe.v_sel, alpha)
                    .map_err(CliError::from_model)?,
            ),
            (MethodFlag::Cgm, _) => {
                for (row, &k) in pipe.coef_idx.iter().enumerate() {
                    reports.push(
                        t_cgm_fix(
                            &pipe.fit.beta_hat,
                            &pipe.v_full.vu,
                            k,
                            pipe.null[row],
                            alpha,
                        )
                        .map_err(CliError::from_model)?,
                    );
                }
            }
            (MethodFlag::Bonferroni, _) => reports.push(
                bonferroni_test(&pipe.theta_hat, &pipe.null, &pipe.v_sel, alpha)
                    .map_err(CliError::from_model)?,
            ),
            (MethodFlag::Adaptive, 1) => reports.push(
                t_adaptive(
                    pipe.theta_hat[0],
                    pipe.null[0],
                    &pipe.v_sel,
                    alpha,
                    args.adaptive_s,
                )
                .map_err(CliError::from_model)?,
            ),
            (MethodFlag::Adaptive, _) => {
                return Err(CliError::Usage(
                    "the adaptive test is univariate; pick a single --coef".into(),
                ))
            }
        }
    }

    let ci = if d == 1 {
        Some(
            confidence_interval(pipe.theta_hat[0], &pipe.v_sel, alpha)
                .map_err(CliError::from_model)?,
        )
    } else {
        None
    };
    let ellipsoid =
        ellipsoid_region(&pipe.theta_hat, &pipe.v_sel, alpha).map_err(CliError::from_model)?;
    let star = star_region(&pipe.theta_hat, &pipe.v_sel, alpha).map_err(CliError::from_model)?;
    let mut star_radii: Vec<(Vec<f64>, f64)> = Vec::new();
    for k in 0..d {
        for sign in [1.0, -1.0] {
            let mut u = DVector::zeros(d);
            u[k] = sign;
            let r = star.boundary_ray(&u).map_err(CliError::from_model)?;
            star_radii.push((u.iter().copied().collect(), r));
        }
    }
    let diagnostic = diagnose_psd(&pipe.v_full);

    // ---- emission ----
    let dir = out_dir(&args.out.out);
    let stamp = timestamp(args.out.no_timestamp);

    let mut csv = String::from("method,statistic,critical_value,reject,p_value\n");
    for r in &reports {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.method.tag(),
            fmt_stat(r.statistic),
            r.critical_value,
            r.reject,
            r.p_value
        ));
    }
    write_file(&dir, "report.csv", &csv)?;

    let coef_labels: Vec<&str> = pipe
        .coef_idx
        .iter()
        .map(|&k| pipe.param_names[k].as_str())
        .collect();
    let mut md = String::new();
    md.push_str(&format!(
        "# Inference report\n\nmodel: {} | clusters: {} × {} | units: {} | alpha: {}\n",
        pipe.model.kind(),
        pipe.sample.c1(),
        pipe.sample.c2(),
        pipe.sample.n_units(),
        alpha
    ));
    if let Some(s) = &stamp {
        md.push_str(&format!("generated: {s}\n"));
    }
    md.push_str(&format!(
        "\ntested coefficient(s): {} | null: {:?}\n\n",
        coef_labels.join(", "),
        pipe.null.iter().copied().collect::<Vec<_>>()
    ));
    md.push_str("| method | statistic | critical | reject | p-value |\n");
    md.push_str("|--------|-----------|----------|--------|---------|\n");
    for r in &reports {
        md.push_str(&format!(
            "| {} | {} | {:.6} | {} | {:.6} |\n",
            r.method.tag(),
            fmt_stat(r.statistic),
            r.critical_value,
            r.reject,
            r.p_value
        ));
    }
    if let Some(ci) = &ci {
        md.push_str(&format!(
            "\nconfidence interval: [{:.6}, {:.6}] (half-width {:.6})\n",
            ci.lower, ci.upper, ci.half_width
        ));
    }
    md.push_str(&format!(
        "\nusual-variance diagnostic: min eigenvalue {:.3e}, {} negative, zero-se flags {:?}\n",
        diagnostic.min_eigenvalue, diagnostic.negative_count, diagnostic.zero_se_flags
    ));
    write_file(&dir, "report.md", &md)?;

    let mut summary = Map::new();
    summary.insert("command".into(), json!("infer"));
    if let Some(s) = &stamp {
        summary.insert("timestamp".into(), json!(s));
    }
    summary.insert("seed".into(), json!(args.seed));
    summary.insert("data".into(), json!(args.data.display().to_string()));
    summary.insert("model".into(), json!(pipe.model.kind()));
    summary.insert("g1".into(), json!(args.g1));
    summary.insert("g2".into(), json!(args.g2));
    summary.insert("c1".into(), json!(pipe.sample.c1()));
    summary.insert("c2".into(), json!(pipe.sample.c2()));
    summary.insert("n_units".into(), json!(pipe.sample.n_units()));
    summary.insert("alpha".into(), json!(alpha));
    summary.insert("dof_correction".into(), json!(args.dof));
    summary.insert("parameters".into(), json!(pipe.param_names));
    summary.insert(
        "beta_hat".into(),
        jvec(&pipe.fit.beta_hat.iter().copied().collect::<Vec<_>>()),
    );
    summary.insert("coefficients".into(), json!(coef_labels));
    summary.insert(
        "theta_hat".into(),
        jvec(&pipe.theta_hat.iter().copied().collect::<Vec<_>>()),
    );
    summary.insert(
        "null".into(),
        jvec(&pipe.null.iter().copied().collect::<Vec<_>>()),
    );
    summary.insert(
        "variance".into(),
        json!({
            "v1": jmatrix(&pipe.v_sel.v1),
            "v2": jmatrix(&pipe.v_sel.v2),
            "v12": jmatrix(&pipe.v_sel.v12),
            "vu": jmatrix(&pipe.v_sel.vu),
        }),
    );
    summary.insert("diagnostic".into(), diag_json(&diagnostic));
    summary.insert(
        "tests".into(),
        Value::Array(reports.iter().map(report_json).collect()),
    );
    if let Some(ci) = &ci {
        summary.insert(
            "confidence_interval".into(),
            json!({
                "center": jf(ci.center),
                "half_width": jf(ci.half_width),
                "lower": jf(ci.lower),
                "upper": jf(ci.upper),
            }),
        );
    }
    summary.insert(
        "ellipsoid".into(),
        json!({"shape": jmatrix(&ellipsoid.shape), "radius_sq": jf(ellipsoid.radius_sq)}),
    );
    summary.insert(
        "star_boundary".into(),
        Value::Array(
            star_radii
                .iter()
                .map(|(u, r)| json!({"direction": jvec(u), "radius": jf(*r)}))
                .collect(),
        ),
    );
    write_file(
        &dir,
        "summary.json",
        &format!(
            "{}\n",
            serde_json::to_string_pretty(&Value::Object(summary)).unwrap()
        ),
    )
}

pub fn run_diagnose(args: InferArgs) -> CliResult<()> {
    let pipe = build_pipeline(&args)?;
    let diagnostic = diagnose_psd(&pipe.v_full);
    let dir = out_dir(&args.out.out);
    let stamp = timestamp(args.out.no_timestamp);

    let mut csv = String::from("coordinate,vu_diagonal,zero_se\n");
    for (k, flag) in diagnostic.zero_se_flags.iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{}\n",
            pipe.param_names[k],
            pipe.v_full.vu.get(k, k),
            flag
        ));
    }
    csv.push_str(&format!(
        "min_eigenvalue,{},\nnegative_count,{},\n",
        diagnostic.min_eigenvalue, diagnostic.negative_count
    ));
    write_file(&dir, "diagnosis.csv", &csv)?;

    let mut md = format!(
        "# Usual-variance diagnostic\n\nmodel: {} | clusters: {} × {}\n",
        pipe.model.kind(),
        pipe.sample.c1(),
        pipe.sample.c2()
    );
    if let Some(s) = &stamp {
        md.push_str(&format!("generated: {s}\n"));
    }
    md.push_str(&format!(
        "\neigenvalues of the usual variance matrix: {:?}\nnegative eigenvalues: {}\n",
        diagnostic.eigenvalues, diagnostic.negative_count
    ));
    for (k, flag) in diagnostic.zero_se_flags.iter().enumerate() {
        if *flag {
            md.push_str(&format!(
                "- `{}`: usual standard error degenerates to zero\n",
                pipe.param_names[k]
            ));
        }
    }
    write_file(&dir, "diagnosis.md", &md)?;

    let mut summary = Map::new();
    summary.insert("command".into(), json!("diagnose"));
    if let Some(s) = &stamp {
        summary.insert("timestamp".into(), json!(s));
    }
    summary.insert("model".into(), json!(pipe.model.kind()));
    summary.insert("parameters".into(), json!(pipe.param_names));
    summary.insert("diagnostic".into(), diag_json(&diagnostic));
    summary.insert("vu".into(), jmatrix(&pipe.v_full.vu));
    write_file(
        &dir,
        "summary.json",
        &format!(
            "{}\n",
            serde_json::to_string_pretty(&Value::Object(summary)).unwrap()
        ),
    )
}

fn to_mc_method(m: MethodFlag) -> CliResult<McMethod> {
    match m {
        MethodFlag::Ddg => Ok(McMethod::Ddg),
        MethodFlag::Usual => Ok(McMethod::Usual),
        MethodFlag::Cgm => Ok(McMethod::Cgm),
        MethodFlag::Bonferroni => Ok(McMethod::Bonferroni),
        MethodFlag::Adaptive => Err(CliError::Usage(
            "the adaptive test is not tabulated by the simulation harness".into(),
        )),
    }
}

pub fn run_simulate(args: SimulateArgs) -> CliResult<()> {
    let family = match args.family {
        FamilyFlag::UnivariateMean => DgpFamily::UnivariateMean,
        FamilyFlag::MultivariateMean => DgpFamily::MultivariateMean,
        FamilyFlag::Regression => DgpFamily::Regression,
        FamilyFlag::RateMismatch => DgpFamily::RateMismatch,
    };
    let methods: Vec<McMethod> = args
        .methods
        .iter()
        .map(|&m| to_mc_method(m))
        .collect::<CliResult<_>>()?;
    let mut specs = Vec::new();
    for &dgp in &args.dgp {
        for &n in &args.n {
            let mut spec =
                DgpSpec::new(family, dgp, n).map_err(|e| CliError::Usage(e.to_string()))?;
            if !args.shift.is_empty() {
                spec.shift = Some(DVector::from_column_slice(&args.shift));
                spec.validate()
                    .map_err(|e| CliError::Usage(e.to_string()))?;
            }
            specs.push(spec);
        }
    }
    let table = run_monte_carlo(&specs, &methods, args.reps, args.seed, args.threads)
        .map_err(CliError::from_model)?;

    let dir = out_dir(&args.out.out);
    let stamp = timestamp(args.out.no_timestamp);
    write_file(&dir, "table.csv", &table.to_csv())?;
    let mut md = table.to_markdown();
    if let Some(s) = &stamp {
        md.push_str(&format!("generated: {s}\n"));
    }
    write_file(&dir, "table.md", &md)?;

    let rows: Vec<Value> = table
        .rows
        .iter()
        .map(|r| {
            json!({
                "family": r.family.tag(),
                "dgp": r.dgp_index,
                "n": r.n,
                "method": r.method.tag(),
                "level": jf(r.level),
                "power": r.power.map(jf).unwrap_or(Value::Null),
                "p_se_u_zero": r.p_se_u_zero.map(jf).unwrap_or(Value::Null),
                "p_f_u_negative": r.p_f_u_negative.map(jf).unwrap_or(Value::Null),
            })
        })
        .collect();
    let mut summary = Map::new();
    summary.insert("command".into(), json!("simulate"));
    if let Some(s) = &stamp {
        summary.insert("timestamp".into(), json!(s));
    }
    summary.insert("family".into(), json!(family.tag()));
    summary.insert("reps".into(), json!(table.reps));
    summary.insert("seed".into(), json!(table.seed));
    summary.insert("rows".into(), Value::Array(rows));
    write_file(
        &dir,
        "summary.json",
        &format!(
            "{}\n",
            serde_json::to_string_pretty(&Value::Object(summary)).unwrap()
        ),
    )
}

pub fn run_limit(args: LimitArgs) -> CliResult<()> {
    let zetas = if args.zetas.is_empty() {
        let mut z = vec![0.0];
        for k in 1..=24 {
            z.push(k as f64 * 0.05);
        }
        z.push(1.5);
        z
    } else {
        args.zetas.clone()
    };
    let levels = zeta_sweep(&zetas, args.draws, args.seed).map_err(CliError::from_model)?;

    let dir = out_dir(&args.out.out);
    let stamp = timestamp(args.out.no_timestamp);
    write_file(&dir, "zeta_levels.csv", &zeta_sweep_csv(&levels))?;

    let mut summary = Map::new();
    summary.insert("command".into(), json!("limit"));
    if let Some(s) = &stamp {
        summary.insert("timestamp".into(), json!(s));
    }
    summary.insert("draws".into(), json!(args.draws));
    summary.insert("seed".into(), json!(args.seed));
    summary.insert(
        "levels".into(),
        Value::Array(
            levels
                .iter()
                .map(|(z, l)| json!({"zeta": jf(*z), "level": jf(*l)}))
                .collect(),
        ),
    );
    write_file(
        &dir,
        "summary.json",
        &format!(
            "{}\n",
            serde_json::to_string_pretty(&Value::Object(summary)).unwrap()
        ),
    )
}

pub fn run_power_loss(args: PowerLossArgs) -> CliResult<()> {
    let summary_data =
        power_loss_experiment(args.outer, args.inner, args.seed).map_err(CliError::from_model)?;
    let dir = out_dir(&args.out.out);
    let stamp = timestamp(args.out.no_timestamp);
    write_file(&dir, "histogram.csv", &summary_data.histogram_csv())?;

    let mut summary = Map::new();
    summary.insert("command".into(), json!("power-loss"));
    if let Some(s) = &stamp {
        summary.insert("timestamp".into(), json!(s));
    }
    summary.insert("outer".into(), json!(summary_data.outer));
    summary.insert("inner".into(), json!(summary_data.inner));
    summary.insert("seed".into(), json!(summary_data.seed));
    summary.insert("mean_ratio".into(), jf(summary_data.mean_ratio));
    summary.insert("max_ratio".into(), jf(summary_data.max_ratio));
    summary.insert("min_ratio".into(), jf(summary_data.min_ratio));
    write_file(
        &dir,
        "summary.json",
        &format!(
            "{}\n",
            serde_json::to_string_pretty(&Value::Object(summary)).unwrap()
        ),
    )
}

pub fn run_dyadic(args: DyadicArgs) -> CliResult<()> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(CliError::Usage(format!(
            "alpha must lie in (0,1), got {}",
            args.alpha
        )));
    }
    let report = dyadic::dyadic_demo(args.cluster_count, args.reps, args.seed)
        .map_err(CliError::from_model)?;
    let limit =
        dyadic::limit_rejection_rate(args.limit_draws, args.seed.wrapping_add(1), args.alpha)
            .map_err(CliError::from_model)?;

    let dir = out_dir(&args.out.out);
    let stamp = timestamp(args.out.no_timestamp);
    let mut csv = report.to_csv();
    csv.push_str(&format!(
        "limit_rejection,{},,{},{},{}\n",
        limit, args.cluster_count, args.limit_draws, args.seed
    ));
    write_file(&dir, "dyadic.csv", &csv)?;

    let mut summary = Map::new();
    summary.insert("command".into(), json!("dyadic"));
    if let Some(s) = &stamp {
        summary.insert("timestamp".into(), json!(s));
    }
    summary.insert("cluster_count".into(), json!(report.c));
    summary.insert("reps".into(), json!(report.reps));
    summary.insert("seed".into(), json!(report.seed));
    summary.insert("p_vu_negative".into(), jf(report.p_vu_negative));
    summary.insert("p_vu_negative_se".into(), jf(report.p_vu_negative_se));
    summary.insert("v1_test_level".into(), jf(report.v1_test_level));
    summary.insert("v1_test_level_se".into(), jf(report.v1_test_level_se));
    summary.insert("limit_rejection".into(), jf(limit));
    summary.insert("limit_draws".into(), json!(args.limit_draws));
    summary.insert("alpha".into(), json!(args.alpha));
    write_file(
        &dir,
        "summary.json",
        &format!(
            "{}\n",
            serde_json::to_string_pretty(&Value::Object(summary)).unwrap()
        ),
    )
}
