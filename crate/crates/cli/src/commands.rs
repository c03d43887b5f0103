use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use selfsel::coarse::{coarse_gradient, estimate_coarse_mean, localize, CoarseConfig, CoarseTrace};
use selfsel::dataset::{read_dataset, write_dataset, DatasetHeader, ModelTag, Observations};
use selfsel::diagnostics::{
    fd_gradient_check, growth_probe, growth_report, hessian_min_eig_estimate, mean_se, render_table,
    scaling_report, second_moment_scaling, stationarity_test, DiagnosticReport, MAX_HESSIAN_DIM,
};
use selfsel::experiment::{boosted_psgd, oracle_warm_start, random_instance, RecoveryConfig, RepOutcome};
use selfsel::likelihood::{MaxSelection, SecondPrice, SelectionModel};
use selfsel::models::{gen_coarse_observations, validate_assumptions, InstanceSpec, RegressorMatrix};
use selfsel::optimizer::{permutation_distance, PsgdConfig, PsgdOptions, Schedule};
use selfsel::stats::DEFAULT_TAIL_TV;
use selfsel::SimRng;

use crate::config::RunConfig;
use crate::output::{columns, write_json, write_trace};
use crate::{CliError, VERSION};

// generator streams derived from the run seed
const STREAM_INSTANCE: u64 = 1;
const STREAM_DATA: u64 = 2;
const STREAM_WARM: u64 = 3;
const STREAM_PSGD: u64 = 4;
const STREAM_DIAGNOSE: u64 = 5;
const STREAM_BENCH: u64 = 6;

/// A validated configuration plus the command-line overrides.
#[derive(Clone, Debug)]
pub struct Context {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub trace: bool,
    pub trace_every: usize,
    pub hash: String,
}

impl Context {
    pub fn new(cfg: RunConfig, out: Option<PathBuf>, trace: bool, trace_every: usize) -> Result<Self, CliError> {
        cfg.validate()?;
        let out = out
            .or_else(|| cfg.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        let hash = cfg.hash();
        Ok(Self {
            cfg,
            out,
            trace,
            trace_every: trace_every.max(1),
            hash,
        })
    }

    fn root(&self) -> SimRng {
        SimRng::new(self.cfg.seed)
    }
}

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

/// `W*` from the configuration: explicit columns or a random separable draw.
pub fn build_instance(ctx: &Context) -> Result<InstanceSpec, CliError> {
    let inst = ctx
        .cfg
        .instance
        .as_ref()
        .ok_or_else(|| CliError::Config("[instance] missing".into()))?;
    match &inst.w_star {
        Some(cols) => {
            let spec = InstanceSpec {
                w_star: RegressorMatrix::from_columns(cols).map_err(|e| CliError::Config(e.to_string()))?,
                c: inst.c,
                big_c: inst.big_c,
            };
            let violations = validate_assumptions(&spec);
            if !violations.is_empty() {
                let report = serde_json::to_string(&violations).map_err(runtime)?;
                return Err(CliError::Config(format!("instance violates assumptions: {report}")));
            }
            Ok(spec)
        }
        None => random_instance(inst.d, inst.k, inst.c, inst.big_c, &mut ctx.root().split(STREAM_INSTANCE))
            .map_err(|e| CliError::Config(e.to_string())),
    }
}

fn header(ctx: &Context, d: usize, k: Option<usize>, n: usize) -> DatasetHeader {
    DatasetHeader {
        model: ctx.cfg.model,
        d,
        k,
        n,
        seed: ctx.cfg.seed,
        version: VERSION.to_string(),
        config_hash: ctx.hash.clone(),
    }
}

fn generate(ctx: &Context) -> Result<(DatasetHeader, Observations), CliError> {
    let n = ctx.cfg.n;
    let mut rng = ctx.root().split(STREAM_DATA);
    match ctx.cfg.model {
        ModelTag::Max | ModelTag::SecondPrice => {
            let spec = build_instance(ctx)?;
            let (d, k) = (spec.w_star.dim(), spec.w_star.k());
            let data = if ctx.cfg.model == ModelTag::Max {
                Observations::Max(MaxSelection::generate(&spec.w_star, n, &mut rng).map_err(runtime)?)
            } else {
                Observations::SecondPrice(SecondPrice::generate(&spec.w_star, n, &mut rng).map_err(runtime)?)
            };
            Ok((header(ctx, d, Some(k), n), data))
        }
        ModelTag::Coarse => {
            let c = ctx.cfg.coarse.as_ref().expect("validated");
            let mu = DVector::from_column_slice(&c.mu_star);
            let data = gen_coarse_observations(&mu, &c.partition, n, &mut rng).map_err(runtime)?;
            Ok((header(ctx, mu.len(), None, n), Observations::Coarse(data)))
        }
    }
}

fn load_or_generate(ctx: &Context) -> Result<(DatasetHeader, Observations), CliError> {
    match &ctx.cfg.data {
        Some(path) => {
            let file = fs::File::open(path)?;
            let (h, data) = read_dataset(BufReader::new(file))
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            if h.model != ctx.cfg.model {
                return Err(CliError::Config(format!(
                    "dataset model {} does not match config model {}",
                    h.model.as_str(),
                    ctx.cfg.model.as_str()
                )));
            }
            Ok((h, data))
        }
        None => generate(ctx),
    }
}

/// Write `dataset.ndjson` into the output directory.
pub fn cmd_simulate(ctx: &Context) -> Result<PathBuf, CliError> {
    let (h, data) = generate(ctx)?;
    fs::create_dir_all(&ctx.out)?;
    let path = ctx.out.join("dataset.ndjson");
    let mut out = BufWriter::new(fs::File::create(&path)?);
    write_dataset(&mut out, &h, &data).map_err(runtime)?;
    out.flush()?;
    Ok(path)
}

#[derive(Clone, Debug, Serialize)]
pub struct StageSummary {
    pub schedule: Schedule,
    pub reps: Vec<RepOutcome>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SelfSelectionResult {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub model: ModelTag,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub estimate: Vec<Vec<f64>>,
    pub w_star: Vec<Vec<f64>>,
    pub warm_start: Vec<Vec<f64>>,
    /// Permutation-matched Frobenius distance to `W*`.
    pub error: f64,
    pub permutation: Vec<usize>,
    pub g: f64,
    pub eps0: f64,
    pub chosen: usize,
    pub support: usize,
    pub reps: Vec<RepOutcome>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CoarseResult {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub n: usize,
    pub d: usize,
    pub mu_hat: Vec<f64>,
    pub mu_star: Vec<f64>,
    pub error: f64,
    pub non_identifiable: bool,
    pub trace: CoarseTrace,
}

#[derive(Clone, Debug, Serialize)]
#[serde(untagged)]
pub enum EstimateResult {
    SelfSelection(SelfSelectionResult),
    Coarse(CoarseResult),
}

impl EstimateResult {
    pub fn error(&self) -> f64 {
        match self {
            EstimateResult::SelfSelection(r) => r.error,
            EstimateResult::Coarse(r) => r.error,
        }
    }
}

fn warm_start(ctx: &Context, w_star: &DMatrix<f64>) -> Result<DMatrix<f64>, CliError> {
    let ws = ctx
        .cfg
        .warm_start
        .as_ref()
        .ok_or_else(|| CliError::Config("[warm_start] missing".into()))?;
    match &ws.file {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            let cols: Vec<Vec<f64>> = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let m = RegressorMatrix::from_columns(&cols).map_err(|e| CliError::Config(e.to_string()))?;
            if m.as_matrix().shape() != w_star.shape() {
                return Err(CliError::Config("warm start shape does not match the instance".into()));
            }
            Ok(m.into_inner())
        }
        None => Ok(oracle_warm_start(w_star, ws.radius, &mut ctx.root().split(STREAM_WARM))),
    }
}

fn recovery_config(ctx: &Context) -> Result<RecoveryConfig, CliError> {
    let p = ctx.cfg.resolved_psgd();
    let ws = ctx
        .cfg
        .warm_start
        .as_ref()
        .ok_or_else(|| CliError::Config("[warm_start] missing".into()))?;
    let inst = ctx.cfg.instance.as_ref().expect("validated");
    let mut rc = RecoveryConfig::desk(ws.radius, inst.big_c, p.eps, p.eta, ctx.root().split(STREAM_PSGD).seed());
    rc.g = p.g;
    rc.t_multiplier = p.t_multiplier;
    rc.gamma_divisor = p.gamma_divisor;
    rc.t_cap = p.t_cap;
    rc.feasible_radius = ctx.cfg.psgd.feasible_radius;
    rc.reps = ctx.cfg.boost.reps;
    rc.boost_radius = ctx.cfg.boost.radius;
    PsgdConfig {
        eps0: p.eps,
        eps: p.eps,
        eta: p.eta,
        g: p.g.unwrap_or(1.0),
        t_multiplier: p.t_multiplier,
        gamma_divisor: p.gamma_divisor,
        t_cap: p.t_cap,
        seed: 0,
    }
    .validate()
    .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(rc)
}

fn estimate_selfsel<M: SelectionModel>(
    ctx: &Context,
    data: &[M::Obs],
    h: &DatasetHeader,
) -> Result<(SelfSelectionResult, Vec<selfsel::optimizer::TraceRow>), CliError> {
    let spec = build_instance(ctx)?;
    let w_star = spec.w_star.as_matrix();
    if h.d != w_star.nrows() || h.k != Some(w_star.ncols()) {
        return Err(CliError::Config("dataset dimensions do not match the instance".into()));
    }
    let w0 = warm_start(ctx, w_star)?;
    let rc = recovery_config(ctx)?;
    let opts = if ctx.trace {
        PsgdOptions::traced(ctx.trace_every)
    } else {
        PsgdOptions::default()
    };
    let run = boosted_psgd::<M>(data, &w0, &rc, Some(w_star), &opts).map_err(|e| match e {
        selfsel::OptimError::Config(m) => CliError::Config(m),
        other => runtime(other),
    })?;
    let m = permutation_distance(&run.estimate, w_star).map_err(runtime)?;
    Ok((
        SelfSelectionResult {
            version: VERSION.to_string(),
            config_hash: ctx.hash.clone(),
            seed: ctx.cfg.seed,
            model: ctx.cfg.model,
            n: data.len(),
            d: w_star.nrows(),
            k: w_star.ncols(),
            estimate: columns(&run.estimate),
            w_star: columns(w_star),
            warm_start: columns(&w0),
            error: m.distance,
            permutation: m.perm,
            g: run.g,
            eps0: run.eps0,
            chosen: run.chosen,
            support: run.support,
            reps: run.reps,
        },
        run.rows,
    ))
}

fn estimate_coarse(
    ctx: &Context,
    data: &[selfsel::models::CoarseObservation],
) -> Result<(CoarseResult, Vec<selfsel::optimizer::TraceRow>), CliError> {
    let c = ctx.cfg.coarse.as_ref().expect("validated");
    let p = ctx.cfg.resolved_psgd();
    let psgd = PsgdConfig {
        eps0: 1.0,
        eps: p.eps,
        eta: 1.0,
        g: p.g.unwrap_or(1.0),
        t_multiplier: p.t_multiplier,
        gamma_divisor: p.gamma_divisor,
        t_cap: p.t_cap,
        seed: ctx.root().split(STREAM_PSGD).seed(),
    };
    let mut cc = CoarseConfig::new(c.radius, c.alpha_hint, psgd);
    cc.localization = c.localization;
    cc.delta = c.delta;
    cc.stage_a_eps = c.stage_a_eps;
    cc.pilot_g = p.g.is_none();
    let opts = if ctx.trace {
        PsgdOptions::traced(ctx.trace_every)
    } else {
        PsgdOptions::default()
    };
    let est = estimate_coarse_mean(data, &cc, &opts).map_err(|e| match e {
        selfsel::CoarseError::Optim(selfsel::OptimError::Config(m)) => CliError::Config(m),
        other => runtime(other),
    })?;
    let mu_star = DVector::from_column_slice(&c.mu_star);
    let rows = est.trace.rows.clone();
    Ok((
        CoarseResult {
            version: VERSION.to_string(),
            config_hash: ctx.hash.clone(),
            seed: ctx.cfg.seed,
            n: data.len(),
            d: mu_star.len(),
            mu_hat: est.mu_hat.as_slice().to_vec(),
            mu_star: c.mu_star.clone(),
            error: (&est.mu_hat - &mu_star).norm(),
            non_identifiable: est.trace.non_identifiable,
            trace: est.trace,
        },
        rows,
    ))
}

/// Run the estimator; writes `result.json` and, with tracing, `trace.csv`.
pub fn cmd_estimate(ctx: &Context) -> Result<EstimateResult, CliError> {
    let (h, data) = load_or_generate(ctx)?;
    let (result, rows) = match &data {
        Observations::Max(v) => {
            let (r, rows) = estimate_selfsel::<MaxSelection>(ctx, v, &h)?;
            (EstimateResult::SelfSelection(r), rows)
        }
        Observations::SecondPrice(v) => {
            let (r, rows) = estimate_selfsel::<SecondPrice>(ctx, v, &h)?;
            (EstimateResult::SelfSelection(r), rows)
        }
        Observations::Coarse(v) => {
            let (r, rows) = estimate_coarse(ctx, v)?;
            (EstimateResult::Coarse(r), rows)
        }
    };
    write_json(&ctx.out, "result.json", &result)?;
    if ctx.trace {
        write_trace(&ctx.out, "trace.csv", VERSION, &ctx.hash, &rows)?;
    }
    Ok(result)
}

#[derive(Clone, Debug, Serialize)]
pub struct DiagnoseOutput {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub reports: Vec<DiagnosticReport>,
}

fn diagnose_selfsel<M: SelectionModel>(ctx: &Context) -> Result<Vec<DiagnosticReport>, CliError> {
    let dc = &ctx.cfg.diagnose;
    let spec = build_instance(ctx)?;
    let w_star = spec.w_star.as_matrix();
    let seed = ctx.root().split(STREAM_DIAGNOSE).seed();
    let root = SimRng::new(seed);
    let mut reports = Vec::new();

    let r = stationarity_test::<M>(&spec.w_star, dc.n, &mut root.split(0)).map_err(runtime)?;
    reports.push(r);

    if w_star.len() <= MAX_HESSIAN_DIM {
        let mut rng = root.split(1);
        let at_truth = hessian_min_eig_estimate::<M>(w_star, &spec.w_star, dc.hessian_obs, &mut rng)
            .map_err(runtime)?;
        reports.push(
            DiagnosticReport::new(format!("hessian_min_eig[{}]@truth", M::NAME), -at_truth, dc.hessian_floor)
                .with_samples("observations", dc.hessian_obs)
                .with_seed(seed),
        );
        let w = oracle_warm_start(w_star, dc.hessian_perturbation, &mut rng);
        let near = hessian_min_eig_estimate::<M>(&w, &spec.w_star, dc.hessian_obs, &mut rng).map_err(runtime)?;
        reports.push(
            DiagnosticReport::new(format!("hessian_min_eig[{}]@near", M::NAME), -near, dc.hessian_floor)
                .with_samples("observations", dc.hessian_obs)
                .with_seed(seed),
        );
    }

    let rows = growth_probe::<M>(&spec.w_star, &dc.growth_radii, dc.n, dc.growth_directions, &mut root.split(2))
        .map_err(runtime)?;
    reports.push(growth_report(&rows, seed, dc.n));

    let mut rng = root.split(3);
    let obs = M::generate(&spec.w_star, dc.fd_pairs, &mut rng).map_err(runtime)?;
    let mut worst = DiagnosticReport::new(format!("fd_gradient[{}]", M::NAME), 0.0, 1e-4);
    for o in &obs {
        let w = oracle_warm_start(w_star, 0.3, &mut rng);
        let r = fd_gradient_check(
            &worst.name,
            |w| M::nll(w, o),
            |w| M::exact_gradient(w, o),
            &w,
            1e-5,
            1e-4,
        );
        if !(r.statistic <= worst.statistic) {
            worst = r;
        }
    }
    reports.push(worst.with_samples("pairs", dc.fd_pairs).with_seed(seed));

    if !dc.scaling_dims.is_empty() {
        let k = w_star.ncols();
        let rows = second_moment_scaling::<M>(&dc.scaling_dims, k, dc.n, DEFAULT_TAIL_TV, &mut root.split(4))
            .map_err(runtime)?;
        reports.push(scaling_report(&rows, seed).with_samples("observations", dc.n));
    }
    Ok(reports)
}

fn diagnose_coarse(ctx: &Context) -> Result<Vec<DiagnosticReport>, CliError> {
    let c = ctx.cfg.coarse.as_ref().expect("validated");
    let dc = &ctx.cfg.diagnose;
    let seed = ctx.root().split(STREAM_DIAGNOSE).seed();
    let mut rng = SimRng::new(seed);
    let mu = DVector::from_column_slice(&c.mu_star);
    let data = gen_coarse_observations(&mu, &c.partition, dc.n, &mut rng).map_err(runtime)?;
    let d = mu.len();
    let cc = CoarseConfig {
        localization: c.localization,
        delta: c.delta,
        ..CoarseConfig::new(c.radius, c.alpha_hint, PsgdConfig::desk(1.0, 1.0, 1.0, 1.0, 0))
    };
    let r = cc.localization_radius(data.len(), d);
    let mut per_coord: Vec<Vec<f64>> = vec![Vec::with_capacity(data.len()); d];
    let mut altered = 0usize;
    for o in &data {
        if localize(&o.set, r) != o.set {
            altered += 1;
        }
        let g = coarse_gradient(&mu, o, r, &mut rng).map_err(runtime)?;
        for (j, v) in g.iter().enumerate() {
            per_coord[j].push(*v);
        }
    }
    let mut worst: f64 = 0.0;
    for xs in &per_coord {
        let (m, se) = mean_se(xs);
        worst = worst.max(m.abs() / se);
    }
    Ok(vec![
        DiagnosticReport::new("stationarity[coarse]", worst, 4.0)
            .with_samples("observations", dc.n)
            .with_seed(seed),
        DiagnosticReport::new("localization_altered_fraction", altered as f64 / data.len() as f64, c.delta)
            .with_samples("observations", dc.n)
            .with_seed(seed),
    ])
}

/// Run the diagnostic suite; writes `diagnostics.json`. Fails with
/// [`CliError::Failed`] when any report fails.
pub fn cmd_diagnose(ctx: &Context) -> Result<DiagnoseOutput, CliError> {
    let reports = match ctx.cfg.model {
        ModelTag::Max => diagnose_selfsel::<MaxSelection>(ctx)?,
        ModelTag::SecondPrice => diagnose_selfsel::<SecondPrice>(ctx)?,
        ModelTag::Coarse => diagnose_coarse(ctx)?,
    };
    let out = DiagnoseOutput {
        version: VERSION.to_string(),
        config_hash: ctx.hash.clone(),
        seed: ctx.cfg.seed,
        reports,
    };
    write_json(&ctx.out, "diagnostics.json", &out)?;
    print!("{}", render_table(&out.reports));
    let failed: Vec<&str> = out.reports.iter().filter(|r| !r.pass).map(|r| r.name.as_str()).collect();
    if !failed.is_empty() {
        return Err(CliError::Failed(failed.join(", ")));
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchOutput {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub model: ModelTag,
    pub steps: usize,
    pub seconds: f64,
    pub steps_per_second: f64,
}

fn bench_selfsel<M: SelectionModel>(ctx: &Context, steps: usize) -> Result<f64, CliError> {
    let spec = build_instance(ctx)?;
    let mut rng = ctx.root().split(STREAM_BENCH);
    let data = M::generate(&spec.w_star, ctx.cfg.n.clamp(1, 10_000), &mut rng).map_err(runtime)?;
    let w = spec.w_star.as_matrix();
    let t = Instant::now();
    let mut acc = 0.0;
    for i in 0..steps {
        acc += M::stochastic_gradient(w, &data[i % data.len()], DEFAULT_TAIL_TV, &mut rng)[0];
    }
    std::hint::black_box(acc);
    Ok(t.elapsed().as_secs_f64())
}

/// Time stochastic-gradient evaluations; writes `bench.json`.
pub fn cmd_bench(ctx: &Context, steps: usize) -> Result<BenchOutput, CliError> {
    let seconds = match ctx.cfg.model {
        ModelTag::Max => bench_selfsel::<MaxSelection>(ctx, steps)?,
        ModelTag::SecondPrice => bench_selfsel::<SecondPrice>(ctx, steps)?,
        ModelTag::Coarse => {
            let c = ctx.cfg.coarse.as_ref().expect("validated");
            let mu = DVector::from_column_slice(&c.mu_star);
            let mut rng = ctx.root().split(STREAM_BENCH);
            let data = gen_coarse_observations(&mu, &c.partition, ctx.cfg.n.clamp(1, 10_000), &mut rng)
                .map_err(runtime)?;
            let t = Instant::now();
            let mut acc = 0.0;
            for i in 0..steps {
                acc += coarse_gradient(&mu, &data[i % data.len()], 50.0, &mut rng).map_err(runtime)?[0];
            }
            std::hint::black_box(acc);
            t.elapsed().as_secs_f64()
        }
    };
    let out = BenchOutput {
        version: VERSION.to_string(),
        config_hash: ctx.hash.clone(),
        seed: ctx.cfg.seed,
        model: ctx.cfg.model,
        steps,
        seconds,
        steps_per_second: steps as f64 / seconds,
    };
    write_json(&ctx.out, "bench.json", &out)?;
    Ok(out)
}
