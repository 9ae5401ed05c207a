//! Configuration, orchestration and report writing for the `wcl` binary.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use wcl_core::arcs;
use wcl_core::arith;
use wcl_core::counter::{self, PredictConfig, Region, TargetMode};
use wcl_core::error::ErrorKind;
use wcl_core::expsums::{self, ExpSumConfig};
use wcl_core::forms::FormSpec;
use wcl_core::localdens;
use wcl_core::realdens;
use wcl_core::weights::{self, WeightKind};
use wcl_core::{QuadraticForm, WeightModel, SCHEMA_VERSION};

pub const EXIT_OK: i32 = 0;
pub const EXIT_BUDGET: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_INVALID: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Core(#[from] wcl_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_INVALID,
            CliError::Io { .. } => EXIT_INVALID,
            CliError::Core(e) => kind_code(e.kind()),
        }
    }
}

fn kind_code(kind: ErrorKind) -> i32 {
    match kind {
        ErrorKind::Budget => EXIT_BUDGET,
        ErrorKind::Infeasible => EXIT_INFEASIBLE,
        ErrorKind::InvalidInput => EXIT_INVALID,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    CheckConditions,
    SingularSeries,
    LocalDensity,
    RealDensity,
    Count,
    Predict,
    Weyl,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::CheckConditions => "check-conditions",
            Command::SingularSeries => "singular-series",
            Command::LocalDensity => "local-density",
            Command::RealDensity => "real-density",
            Command::Count => "count",
            Command::Predict => "predict",
            Command::Weyl => "weyl",
        }
    }
}

/// A form given inline or as a path to a JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FormSource {
    Inline(FormSpec),
    Path(PathBuf),
}

/// Evaluation points for `weyl`: a count of seeded minor-arc samples, an
/// explicit list, or a file holding a JSON list or whitespace-separated values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaSource {
    Count(usize),
    List(Vec<f64>),
    Path(PathBuf),
}

/// Counting region for `count`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum RegionSpec {
    Cube,
    Box { lo: Vec<i64>, hi: Vec<i64> },
}

fn d_weights() -> String {
    "unit".into()
}
fn d_order() -> u32 {
    weights::DEFAULT_SMOOTH_ORDER
}
fn d_p_max() -> u64 {
    30
}
fn d_depth() -> u32 {
    3
}
fn d_mmax() -> u32 {
    4
}
fn d_primes() -> Vec<u64> {
    vec![2, 3, 5]
}
fn d_x_grid() -> Vec<f64> {
    vec![10.0, 14.0, 20.0]
}
fn d_samples() -> u64 {
    200_000
}
fn d_seed() -> u64 {
    1
}
fn d_count_cap() -> f64 {
    counter::DEFAULT_COUNT_CAP as f64
}
fn d_residue_cap() -> f64 {
    ExpSumConfig::default().residue_cap as f64
}
fn d_alpha_cap() -> f64 {
    ExpSumConfig::default().alpha_cap as f64
}
fn d_kappa_qmax() -> u64 {
    60
}
fn d_kappa_table() -> u64 {
    12
}
fn d_dist_moduli() -> Vec<u64> {
    vec![3, 4, 5, 6]
}
fn d_dist_grid() -> Vec<f64> {
    vec![1e3, 1e4, 1e5]
}
fn d_witness_k() -> u32 {
    2
}
fn d_witness_budget() -> u64 {
    1000
}
fn d_alphas() -> AlphaSource {
    AlphaSource::Count(arcs::DEFAULT_MAX_SAMPLES)
}
fn d_arc_exp() -> f64 {
    1.0
}
fn d_region() -> RegionSpec {
    RegionSpec::Cube
}

/// Everything a run needs. Only `form` lacks a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub form: FormSource,
    /// `unit`, `primes`, `kfree`, `kfree:k` or `custom:path`.
    #[serde(default = "d_weights")]
    pub weights: String,
    /// Order of the smooth approximant.
    #[serde(default = "d_order")]
    pub order: u32,
    #[serde(default = "d_p_max")]
    pub p_max: u64,
    #[serde(default = "d_depth")]
    pub prime_depth: u32,
    #[serde(default = "d_mmax")]
    pub mmax: u32,
    /// Primes for `local-density`.
    #[serde(default = "d_primes")]
    pub primes: Vec<u64>,
    #[serde(default = "d_x_grid")]
    pub x_grid: Vec<f64>,
    /// Real zero of `f` to build boxes around; found by search when absent.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub eta: Option<f64>,
    /// Direction for anchored boxes; switches `predict` and `real-density`
    /// to snapping the box center onto the weight support.
    #[serde(default)]
    pub anchor: Option<Vec<f64>>,
    #[serde(default)]
    pub eta_fraction: Option<f64>,
    #[serde(default = "d_samples")]
    pub samples: u64,
    #[serde(default = "d_seed")]
    pub seed: u64,
    #[serde(default = "d_count_cap")]
    pub count_cap: f64,
    #[serde(default = "d_residue_cap")]
    pub residue_cap: f64,
    #[serde(default = "d_alpha_cap")]
    pub alpha_cap: f64,
    #[serde(default = "d_kappa_qmax")]
    pub kappa_qmax: u64,
    /// κ rows written out for `q ≤ kappa_table`.
    #[serde(default = "d_kappa_table")]
    pub kappa_table: u64,
    #[serde(default = "d_dist_moduli")]
    pub distribution_moduli: Vec<u64>,
    #[serde(default = "d_dist_grid")]
    pub distribution_grid: Vec<f64>,
    #[serde(default = "d_witness_k")]
    pub witness_k: u32,
    #[serde(default = "d_witness_budget")]
    pub witness_budget: u64,
    #[serde(default = "d_alphas")]
    pub alphas: AlphaSource,
    /// Exponents `B` and `K` of the arc schedule used for minor-arc samples.
    #[serde(default = "d_arc_exp")]
    pub arc_b: f64,
    #[serde(default = "d_arc_exp")]
    pub arc_k: f64,
    #[serde(default = "d_region")]
    pub region: RegionSpec,
    /// Worker threads; `None` defers to `WCL_THREADS`, then to rayon's default.
    #[serde(default)]
    pub threads: Option<usize>,
    /// Report directory; `None` writes the JSON report to stdout.
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Keep wall-clock fields in the report (they break byte-identity).
    #[serde(default)]
    pub timings: bool,
}

impl RunConfig {
    /// Layers `overrides` (a config file) over `flags`, then fills defaults.
    pub fn merge(flags: Map<String, Value>, overrides: Option<Value>) -> Result<Self, CliError> {
        let mut merged = flags;
        match overrides {
            None => {}
            Some(Value::Object(o)) => merged.extend(o),
            Some(_) => return Err(CliError::Config("config file must hold a JSON object".into())),
        }
        if !merged.contains_key("form") {
            return Err(CliError::Config("no form given (use --form or a config file)".into()));
        }
        serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let v: Value = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        Self::merge(Map::new(), Some(v))
    }

    pub fn load_form(&self) -> Result<QuadraticForm, CliError> {
        let spec = match &self.form {
            FormSource::Inline(s) => s.clone(),
            FormSource::Path(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read form {}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("form {}: {e}", p.display())))?
            }
        };
        Ok(QuadraticForm::from_spec(spec)?)
    }

    pub fn load_model(&self) -> Result<WeightModel, CliError> {
        Ok(WeightModel::parse(&self.weights)?.with_order(self.order))
    }

    fn expsums(&self) -> ExpSumConfig {
        ExpSumConfig {
            residue_cap: cap(self.residue_cap),
            alpha_cap: cap(self.alpha_cap),
            ..ExpSumConfig::default()
        }
    }

    fn thread_count(&self) -> Option<usize> {
        self.threads.or_else(|| std::env::var("WCL_THREADS").ok()?.trim().parse().ok())
    }
}

fn cap(v: f64) -> u128 {
    if v.is_finite() && v > 0.0 {
        v as u128
    } else {
        0
    }
}

/// A pipeline's outcome: the JSON payload, an optional CSV table, and the
/// errors met along the way.
#[derive(Debug, Clone, Default)]
pub struct Results {
    pub payload: Map<String, Value>,
    pub csv: Option<String>,
    pub errors: Vec<Value>,
}

impl Results {
    fn put<T: Serialize>(&mut self, key: &str, v: &T) {
        let v = serde_json::to_value(v).expect("report values serialize");
        self.payload.insert(key.into(), v);
    }

    fn error(&mut self, stage: &str, e: &CliError) {
        self.errors.push(error_value(stage, e));
    }

    /// Runs `f`, storing its value under `key` or recording its error.
    fn attempt<T: Serialize>(&mut self, key: &str, f: impl FnOnce() -> Result<T, CliError>) -> Option<T> {
        match f() {
            Ok(v) => {
                self.put(key, &v);
                Some(v)
            }
            Err(e) => {
                self.error(key, &e);
                None
            }
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.errors
            .first()
            .and_then(|e| e.get("exit_code"))
            .and_then(Value::as_i64)
            .map_or(EXIT_OK, |c| c as i32)
    }
}

fn error_value(stage: &str, e: &CliError) -> Value {
    let kind = match e.exit_code() {
        EXIT_BUDGET => "budget",
        EXIT_INFEASIBLE => "infeasible",
        _ => "invalid_input",
    };
    let mut v = json!({
        "stage": stage,
        "kind": kind,
        "exit_code": e.exit_code(),
        "message": e.to_string(),
    });
    let detail = match e {
        CliError::Core(wcl_core::Error::Budget { parameter, required, cap }) => {
            json!({ "parameter": parameter, "required": required.to_string(), "cap": cap.to_string() })
        }
        CliError::Core(wcl_core::Error::Asymmetric { row, col, upper, lower }) => {
            json!({ "entry": [row, col], "upper": upper, "lower": lower })
        }
        CliError::Core(wcl_core::Error::DimensionMismatch { expected, got }) => {
            json!({ "expected": expected, "got": got })
        }
        _ => Value::Null,
    };
    if !detail.is_null() {
        v["detail"] = detail;
    }
    v
}

/// Exit status plus the files that were written.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub report: String,
    pub written: Vec<PathBuf>,
}

/// Dispatches `command`, writes the report and returns the exit status.
pub fn run(command: Command, config: &RunConfig) -> RunOutcome {
    let results = match config.thread_count() {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(command, config)),
            Err(e) => failed("threads", CliError::Config(e.to_string())),
        },
        None => dispatch(command, config),
    };
    let exit_code = results.exit_code();
    let report = render_report(command, Some(config), &results, config.timings);
    let mut written = Vec::new();
    let mut code = exit_code;
    if let Some(dir) = &config.out {
        match emit_report(dir, command, &report, results.csv.as_deref()) {
            Ok(w) => written = w,
            Err(e) => {
                eprintln!("{e}");
                if code == EXIT_OK {
                    code = e.exit_code();
                }
            }
        }
    }
    RunOutcome {
        exit_code: code,
        report,
        written,
    }
}

fn failed(stage: &str, e: CliError) -> Results {
    let mut r = Results::default();
    r.error(stage, &e);
    r
}

fn dispatch(command: Command, cfg: &RunConfig) -> Results {
    let inputs = cfg.load_form().and_then(|f| Ok((f, cfg.load_model()?)));
    let (form, model) = match inputs {
        Ok(v) => v,
        Err(e) => return failed("input", e),
    };
    let mut r = Results::default();
    match command {
        Command::CheckConditions => check_conditions(&mut r, &form, &model, cfg),
        Command::SingularSeries => {
            if let Some(rep) = r.attempt("singular_series", || {
                Ok(expsums::singular_series(&form, &model, cfg.p_max, cfg.prime_depth, &cfg.expsums())?)
            }) {
                r.csv = Some(series_csv(&rep));
            }
        }
        Command::LocalDensity => {
            let mut seqs = Vec::new();
            for &p in &cfg.primes {
                match localdens::chi_p(&form, &model, p, cfg.mmax, &cfg.expsums()) {
                    Ok(s) => seqs.push(s),
                    Err(e) => r.error(&format!("chi_{p}"), &e.into()),
                }
            }
            r.put("local_densities", &seqs);
            r.csv = Some(density_csv(&seqs));
        }
        Command::RealDensity => real_density(&mut r, &form, &model, cfg),
        Command::Count => count(&mut r, &form, &model, cfg),
        Command::Predict => {
            if let Some(suite) = r.attempt("prediction", || predict(&form, &model, cfg)) {
                r.csv = Some(counter::prediction_csv(&suite));
            }
        }
        Command::Weyl => weyl(&mut r, &form, &model, cfg),
    }
    r
}

fn check_conditions(r: &mut Results, form: &QuadraticForm, model: &WeightModel, cfg: &RunConfig) {
    r.put(
        "form",
        &json!({
            "s": form.dim(),
            "F": form.matrix(),
            "t": form.target(),
            "det": form.determinant().to_string(),
            "components": form.components(),
        }),
    );
    r.attempt("l1", || Ok(form.check_l1()?));
    r.put("model", &json!({ "name": model.name(), "order": model.order(), "indicator": model.is_indicator() }));
    r.attempt("smooth_approximant", || {
        let a = model.smooth_approx()?;
        Ok(json!({ "order": a.order(), "threshold": a.threshold() }))
    });
    r.attempt("kappa", || {
        let mut rows = Map::new();
        for q in 1..=cfg.kappa_table {
            let row: Vec<String> = model.kappa_row(q)?.iter().map(arith::format_rational).collect();
            rows.insert(q.to_string(), json!(row));
        }
        Ok(rows)
    });
    if let Some(audit) = r.attempt("kappa_audit", || Ok(weights::audit_kappa(model, cfg.kappa_qmax)?)) {
        r.put("exact_audits_passed", &audit.all_passed());
    }
    r.attempt("distribution_audit", || {
        Ok(weights::audit_distribution(model, &cfg.distribution_moduli, &cfg.distribution_grid)?)
    });
    if let WeightKind::KFree(_) = model.kind() {
        r.attempt("condition_b", || {
            let res = localdens::search_condition_b(form, cfg.witness_k, cfg.witness_budget, cfg.seed)?;
            let verified = if res.found() { Some(localdens::verify_condition_b(form, &res)?) } else { None };
            Ok(json!({ "search": res, "verified": verified }))
        });
    }
}

fn grid_point(x: f64) -> Result<u64, CliError> {
    if x.is_finite() && x >= 1.0 && x.fract() == 0.0 {
        Ok(x as u64)
    } else {
        Err(CliError::Config(format!("X = {x} must be a positive integer here")))
    }
}

fn first_x(cfg: &RunConfig) -> Result<f64, CliError> {
    cfg.x_grid.first().copied().ok_or_else(|| CliError::Config("x_grid is empty".into()))
}

fn real_density(r: &mut Results, form: &QuadraticForm, model: &WeightModel, cfg: &RunConfig) {
    let built = (|| -> Result<_, CliError> {
        let x = first_x(cfg)?;
        if let Some(anchor) = &cfg.anchor {
            let frac = cfg.eta_fraction.unwrap_or(0.5);
            let (bx, m, t) = realdens::anchored_box(form, model, x, anchor, frac)?;
            return Ok((x, form.with_target(t), bx, Some(m)));
        }
        let x0 = match &cfg.x0 {
            Some(v) => v.clone(),
            None => realdens::find_positive_zero(form, cfg.seed)?,
        };
        let eta = cfg.eta.unwrap_or_else(|| realdens::default_eta(&x0));
        let bx = realdens::build_box(form, form.target() as f64, x, eta, &x0)?;
        Ok((x, form.clone(), bx, None))
    })();
    let (x, form, bx, support_point) = match built {
        Ok(v) => v,
        Err(e) => return r.error("box", &e),
    };
    r.put("x", &x);
    r.put("t", &form.target());
    if let Some(m) = &support_point {
        r.put("support_point", m);
    }
    r.put("box", &bx);
    if let Some(sigma) = r.attempt("sigma_infinity", || {
        Ok(realdens::sigma_infinity(&form, model, &bx, x, cfg.samples, cfg.seed)?)
    }) {
        let mt = realdens::main_term_integral(&form, model, &sigma, x);
        r.put("main_term_integral", &mt);
        let f = wcl_core::numeric::format_f64;
        r.csv = Some(format!(
            "estimator,value,stderr\nslab,{},{}\ncoarea,{},{}\nmain_term,{},{}\n",
            f(sigma.slab.value),
            f(sigma.slab.stderr),
            f(sigma.coarea.value),
            f(sigma.coarea.stderr),
            f(mt.value),
            f(mt.stderr),
        ));
    }
}

fn count(r: &mut Results, form: &QuadraticForm, model: &WeightModel, cfg: &RunConfig) {
    let region = match &cfg.region {
        RegionSpec::Cube => Region::Cube,
        RegionSpec::Box { lo, hi } => Region::Box {
            lo: lo.clone(),
            hi: hi.clone(),
        },
    };
    let mut rows = Vec::new();
    let mut csv = String::from("X,count,exact,work\n");
    for &x in &cfg.x_grid {
        let res = grid_point(x)
            .and_then(|xi| Ok(counter::brute_count(form, model, xi, &region, cap(cfg.count_cap))?));
        match res {
            Ok(c) => {
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    x,
                    wcl_core::numeric::format_f64(c.value),
                    c.exact.map_or(String::new(), |e| e.to_string()),
                    c.work
                ));
                rows.push(json!({ "x": x, "count": c }));
            }
            Err(e) => r.error(&format!("count_X={x}"), &e),
        }
    }
    r.put("region", &region);
    r.put("counts", &rows);
    r.csv = Some(csv);
}

fn predict(form: &QuadraticForm, model: &WeightModel, cfg: &RunConfig) -> Result<counter::PredictionSuite, CliError> {
    let x_grid = cfg.x_grid.iter().map(|&x| grid_point(x)).collect::<Result<_, _>>()?;
    let target = match &cfg.anchor {
        Some(anchor) => TargetMode::Anchored {
            anchor: anchor.clone(),
            eta_fraction: cfg.eta_fraction.unwrap_or(0.5),
        },
        None => TargetMode::Fixed {
            x0: cfg.x0.clone(),
            eta: cfg.eta,
        },
    };
    let pc = PredictConfig {
        x_grid,
        p_max: cfg.p_max,
        prime_depth: cfg.prime_depth,
        samples: cfg.samples,
        seed: cfg.seed,
        target,
        count_cap: cap(cfg.count_cap),
        expsums: cfg.expsums(),
    };
    Ok(counter::predict_compare(form, model, &pc)?)
}

fn load_alphas(cfg: &RunConfig, x: f64) -> Result<Vec<f64>, CliError> {
    match &cfg.alphas {
        AlphaSource::List(v) => Ok(v.clone()),
        AlphaSource::Count(n) => {
            let sched = arcs::arc_schedule(x, cfg.arc_b, cfg.arc_k)?;
            let per = arcs::DEFAULT_PER_STRATUM.max(n.div_ceil(8));
            Ok(arcs::minor_arc_samples(&sched, per, *n, cfg.seed).iter().map(|m| m.alpha).collect())
        }
        AlphaSource::Path(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read alphas {}: {e}", p.display())))?;
            if let Ok(v) = serde_json::from_str::<Vec<f64>>(&text) {
                return Ok(v);
            }
            text.split_whitespace()
                .map(|w| w.parse::<f64>().map_err(|_| CliError::Config(format!("bad alpha {w:?}"))))
                .collect()
        }
    }
}

fn weyl(r: &mut Results, form: &QuadraticForm, model: &WeightModel, cfg: &RunConfig) {
    // Seeded samples come from the schedule at the largest X so that every
    // grid point sees the same α.
    let xmax = cfg.x_grid.iter().copied().fold(f64::NAN, f64::max);
    let alphas = match load_alphas(cfg, xmax) {
        Ok(a) => a,
        Err(e) => return r.error("alphas", &e),
    };
    r.put("alphas", &alphas);
    let mut reports = Vec::new();
    let mut csv = String::new();
    for &x in &cfg.x_grid {
        match arcs::weyl_check(form, model, x, &alphas, &cfg.expsums()) {
            Ok(rep) => {
                let body = arcs::weyl_csv(&rep);
                let mut lines = body.lines();
                let header = lines.next().unwrap_or_default();
                if csv.is_empty() {
                    csv = format!("X,{header}\n");
                }
                for l in lines {
                    csv.push_str(&format!("{x},{l}\n"));
                }
                reports.push(rep);
            }
            Err(e) => r.error(&format!("weyl_X={x}"), &e.into()),
        }
    }
    r.put("reports", &reports);
    r.csv = Some(csv);
}

fn series_csv(rep: &expsums::SingularSeriesReport) -> String {
    let f = wcl_core::numeric::format_f64;
    let mut out = String::from("q,re_b,im_b,imag_residual\n");
    for row in &rep.per_q {
        out.push_str(&format!("{},{},{},{}\n", row.q, f(row.b.re), f(row.b.im), f(row.imag_residual)));
    }
    out
}

fn density_csv(seqs: &[localdens::LocalDensitySequence]) -> String {
    let f = |v: Option<f64>| v.map_or(String::new(), wcl_core::numeric::format_f64);
    let mut out = String::from("p,m,scaled,b_partial,discrepancy\n");
    for s in seqs {
        for row in &s.rows {
            out.push_str(&format!("{},{},{},{},{}\n", s.p, row.m, f(row.scaled), f(row.b_partial), f(row.discrepancy)));
        }
    }
    out
}

/// Removes wall-clock fields, which would make reruns differ.
fn strip_timings(v: &mut Value) {
    match v {
        Value::Object(m) => {
            m.retain(|k, _| !k.ends_with("_seconds"));
            m.values_mut().for_each(strip_timings);
        }
        Value::Array(a) => a.iter_mut().for_each(strip_timings),
        _ => {}
    }
}

/// Builds the report document: schema version, command, the config echo,
/// results and structured errors, in that order.
pub fn render_report(command: Command, config: Option<&RunConfig>, results: &Results, timings: bool) -> String {
    let mut payload = Value::Object(results.payload.clone());
    if !timings {
        strip_timings(&mut payload);
    }
    let status = if results.errors.is_empty() { "ok" } else { "error" };
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "command": command.name(),
        "status": status,
        "exit_code": results.exit_code(),
        "config": config,
        "results": payload,
        "errors": results.errors,
    });
    to_json_string(&doc)
}

/// Pretty JSON with every float written as `{:.16e}` (17 significant digits)
/// and non-finite values as `null`.
pub fn to_json_string(v: &Value) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Fmt17::default());
    v.serialize(&mut ser).expect("in-memory JSON write");
    buf.push(b'\n');
    String::from_utf8(buf).expect("JSON is UTF-8")
}

#[derive(Default)]
struct Fmt17(serde_json::ser::PrettyFormatter<'static>);

impl serde_json::ser::Formatter for Fmt17 {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        if v.is_finite() {
            write!(w, "{}", wcl_core::numeric::format_f64(v))
        } else {
            w.write_all(b"null")
        }
    }
    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        self.write_f64(w, v as f64)
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Writes `<command>.json` and, when present, `<command>.csv` into `dir`.
pub fn emit_report(dir: &Path, command: Command, report: &str, csv: Option<&str>) -> Result<Vec<PathBuf>, CliError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CliError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    let json_path = dir.join(format!("{}.json", command.name()));
    fs::write(&json_path, report).map_err(io_err(&json_path))?;
    written.push(json_path);
    if let Some(csv) = csv {
        let csv_path = dir.join(format!("{}.csv", command.name()));
        fs::write(&csv_path, csv).map_err(io_err(&csv_path))?;
        written.push(csv_path);
    }
    Ok(written)
}

/// Report for a run that never got a valid config.
pub fn config_failure(command: Command, e: &CliError) -> RunOutcome {
    let results = failed("config", CliError::Config(e.to_string()));
    RunOutcome {
        exit_code: e.exit_code(),
        report: render_report(command, None, &results, false),
        written: Vec::new(),
    }
}
