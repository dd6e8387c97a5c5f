//! The end-to-end experiment: corpus, abduction, training of every solution,
//! logical and oracle evaluation, improvement tables and reports.

mod config;
mod report;
mod stats;

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use config::{
    default_solutions, BaselineParams, CorpusConfig, ExperimentConfig, Method, ObjectiveConfig, ReportConfig, Solution,
};
pub use report::{cmd_report, overlay, OVERLAY_LFN, OVERLAY_LFP, OVERLAY_LTP};
pub use stats::bootstrap_ci;

use crate::baselines::{estimate_transition_many, NoiseTransition};
use crate::imaging::io::{save_gray_png, save_mask_png};
use crate::imaging::{abduce_targets, AbductionParams, BinaryMask, GrayImage, TargetSet};
use crate::laf::{aggregate_laf, aggregate_laf_macro, aggregate_oracle, binarize, laf_counts, laf_metrics, oracle_metrics};
use crate::laf::{LafCounts, LafReport, OracleReport};
use crate::logic::{require_all_valid, run_shipped_suite};
use crate::mtl::{
    save_checkpoint, variance_term, write_loss_trace, BaseLoss, LossKind, LossTraceRow, MultiTarget, Objective,
    PixelClassifier, TargetRegime, TrainingSample,
};
use crate::synthgen::{Corpus, CorpusItem};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error("{stage}: {message}")]
    Stage { stage: &'static str, message: String },
    #[error("proof gate: {0}")]
    Gate(String),
    #[error("nothing to report")]
    NothingToReport,
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

fn stage<E: std::fmt::Display>(stage: &'static str) -> impl Fn(E) -> ExperimentError {
    move |e| ExperimentError::Stage { stage, message: e.to_string() }
}

/// Fails unless every shipped reasoning validates.
pub fn proof_gate() -> Result<(), ExperimentError> {
    require_all_valid(&run_shipped_suite()).map_err(|e| ExperimentError::Gate(e.to_string()))
}

/// A corpus patch with its abduced targets.
#[derive(Clone, Debug)]
pub struct PreparedPatch {
    pub index: u64,
    pub image: GrayImage,
    pub true_mask: BinaryMask,
    pub targets: TargetSet,
}

#[derive(Clone, Debug)]
pub struct PreparedData {
    pub train: Vec<PreparedPatch>,
    pub val: Vec<PreparedPatch>,
    pub test: Vec<PreparedPatch>,
    pub transition: NoiseTransition,
}

pub fn abduce_items(items: &[CorpusItem], params: &AbductionParams, alphas: &[f64]) -> Result<Vec<PreparedPatch>, ExperimentError> {
    items
        .par_iter()
        .map(|it| {
            let t = abduce_targets(&it.image, &it.polygons, params).map_err(stage("abduce"))?;
            let targets = TargetSet::new(t.target1, t.target2, alphas.to_vec()).map_err(stage("abduce"))?;
            Ok(PreparedPatch { index: it.index, image: it.image.clone(), true_mask: it.true_mask.clone(), targets })
        })
        .collect()
}

pub fn load_corpus(config: &ExperimentConfig) -> Result<Corpus, ExperimentError> {
    let c = &config.corpus;
    match &c.dir {
        Some(dir) => Corpus::load(dir).map_err(stage("corpus")),
        None => Corpus::generate(&c.params, c.n_train, c.n_val, c.n_test).map_err(stage("corpus")),
    }
}

/// Proof gate, corpus and target abduction.
pub fn prepare(config: &ExperimentConfig) -> Result<PreparedData, ExperimentError> {
    config.validate()?;
    proof_gate()?;
    let corpus = load_corpus(config)?;
    let alphas = &config.objective.alphas;
    let train = abduce_items(&corpus.train, &config.abduction, alphas)?;
    let val = abduce_items(&corpus.val, &config.abduction, alphas)?;
    let test = abduce_items(&corpus.test, &config.abduction, alphas)?;
    let transition = match config.baselines.transition {
        Some(t) => t,
        None => estimate_transition_many(train.iter().map(|p| (&p.targets.target1, &p.targets.target2))).map_err(stage("transition"))?,
    };
    Ok(PreparedData { train, val, test, transition })
}

pub fn objective_for(config: &ExperimentConfig, solution: Solution, transition: NoiseTransition) -> Result<Objective, ExperimentError> {
    Objective::new(solution.regime, config.loss_kind(solution.method, transition), config.objective.alphas.clone()).map_err(stage("objective"))
}

/// Per-image evaluation of a trained model.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub counts: Vec<LafCounts>,
    pub oracle: Vec<OracleReport>,
    pub predictions: Vec<BinaryMask>,
}

pub fn evaluate_model(model: &PixelClassifier, patches: &[PreparedPatch], threshold: f64) -> Result<Evaluation, ExperimentError> {
    let per: Vec<(LafCounts, OracleReport, BinaryMask)> = patches
        .par_iter()
        .map(|p| {
            let (tf, tb) = binarize(&model.predict(&p.image), threshold).map_err(stage("evaluate"))?;
            let c = laf_counts(&tf, &tb, &p.targets.target1, &p.targets.target2).map_err(stage("evaluate"))?;
            let o = oracle_metrics(&tf, &p.true_mask).map_err(stage("evaluate"))?;
            Ok((c, o, tf))
        })
        .collect::<Result<_, ExperimentError>>()?;
    let mut e = Evaluation { counts: Vec::new(), oracle: Vec::new(), predictions: Vec::new() };
    for (c, o, m) in per {
        e.counts.push(c);
        e.oracle.push(o);
        e.predictions.push(m);
    }
    Ok(e)
}

#[derive(Clone, Debug)]
pub struct SolutionResult {
    pub solution: Solution,
    pub laf: LafReport,
    pub macro_laf: LafReport,
    pub oracle: OracleReport,
    pub evaluation: Evaluation,
    pub model: PixelClassifier,
    pub best_epoch: usize,
    pub trace: Vec<LossTraceRow>,
    pub runtime_secs: f64,
}

fn samples(config: &ExperimentConfig, patches: &[PreparedPatch]) -> Result<Vec<TrainingSample>, ExperimentError> {
    patches
        .par_iter()
        .map(|p| TrainingSample::new(config.train.architecture, &p.image, p.targets.clone()).map_err(stage("train")))
        .collect()
}

pub fn run_solution(
    config: &ExperimentConfig,
    data: &PreparedData,
    train_samples: &[TrainingSample],
    val_samples: &[TrainingSample],
    solution: Solution,
) -> Result<SolutionResult, ExperimentError> {
    let start = Instant::now();
    let objective = objective_for(config, solution, data.transition)?;
    let outcome = crate::mtl::train(train_samples, val_samples, &objective, &config.train)
        .map_err(|e| ExperimentError::Stage { stage: "train", message: format!("{solution}: {e}") })?;
    let evaluation = evaluate_model(&outcome.model, &data.test, config.train.threshold)?;
    Ok(SolutionResult {
        solution,
        laf: aggregate_laf(&evaluation.counts).map_err(stage("evaluate"))?,
        macro_laf: aggregate_laf_macro(&evaluation.counts).map_err(stage("evaluate"))?,
        oracle: aggregate_oracle(&evaluation.oracle).map_err(stage("evaluate"))?,
        evaluation,
        model: outcome.model,
        best_epoch: outcome.best_epoch,
        trace: outcome.trace,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

/// Number of solutions trained at once, from `OSAMTL_THREADS`.
pub fn thread_cap() -> Option<usize> {
    std::env::var("OSAMTL_THREADS").ok().and_then(|v| v.trim().parse().ok()).filter(|n| *n > 0)
}

#[derive(Clone, Debug)]
pub struct ResultTable {
    pub rows: Vec<SolutionResult>,
    pub transition: NoiseTransition,
    pub improvements: Vec<Improvement>,
    pub theorem_checks: Vec<TheoremCheck>,
}

impl ResultTable {
    pub fn row(&self, name: &str) -> Option<&SolutionResult> {
        self.rows.iter().find(|r| r.solution.to_string() == name)
    }
}

/// Change of a multi-target solution over a single-target anchor.
#[derive(Clone, Debug, PartialEq)]
pub struct Improvement {
    pub solution: Solution,
    pub anchor: Solution,
    pub d_lprecision: f64,
    pub d_lrecall: f64,
    pub d_lf1: f64,
    pub d_lfiou: f64,
    /// Bootstrap interval of the mean per-image LfIoU change.
    pub ci: (f64, f64),
}

fn improvements(config: &ExperimentConfig, rows: &[SolutionResult]) -> Result<Vec<Improvement>, ExperimentError> {
    let mut out = Vec::new();
    for r in rows.iter().filter(|r| r.solution.regime == TargetRegime::Joint) {
        for anchor_regime in [TargetRegime::T1, TargetRegime::T2] {
            let anchor = r.solution.anchor(anchor_regime);
            let Some(a) = rows.iter().find(|x| x.solution == anchor) else { continue };
            let deltas: Vec<f64> = r
                .evaluation
                .counts
                .iter()
                .zip(&a.evaluation.counts)
                .map(|(x, y)| laf_metrics(*x).lfiou - laf_metrics(*y).lfiou)
                .collect();
            let seed = config.seed ^ (out.len() as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let ci = bootstrap_ci(&deltas, config.bootstrap_resamples, config.ci_level, seed).map_err(stage("bootstrap"))?;
            out.push(Improvement {
                solution: r.solution,
                anchor,
                d_lprecision: r.laf.lprecision - a.laf.lprecision,
                d_lrecall: r.laf.lrecall - a.laf.lrecall,
                d_lf1: r.laf.lf1 - a.laf.lf1,
                d_lfiou: r.laf.lfiou - a.laf.lfiou,
                ci,
            });
        }
    }
    Ok(out)
}

/// The multi-target objective against its single-target form at one model.
#[derive(Clone, Debug, PartialEq)]
pub struct TheoremCheck {
    pub checkpoint: usize,
    pub joint: f64,
    pub single_target: f64,
    pub max_residual: f64,
}

pub const THEOREM_TOLERANCE: f64 = 1e-9;

/// Evaluates the None_OSAMTLF objective at `checkpoints` random models.
pub fn theorem_checks(config: &ExperimentConfig, samples: &[TrainingSample], checkpoints: usize) -> Result<Vec<TheoremCheck>, ExperimentError> {
    let base = config.objective.base_loss;
    let objective = Objective::new(TargetRegime::Joint, LossKind::Base(base), config.objective.alphas.clone()).map_err(stage("theorem check"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = Vec::new();
    for checkpoint in 0..checkpoints {
        let mut model = PixelClassifier::init(config.train.architecture, rng.random());
        for p in model.params.iter_mut() {
            *p += rng.random_range(-1.0..1.0);
        }
        let per: Vec<(f64, f64)> = samples
            .par_iter()
            .map(|s| {
                let t = model.predict_input(&s.input);
                let joint = objective.loss(&t, &s.targets)?;
                let mt = MultiTarget::new(vec![(&s.targets.target1).into(), (&s.targets.target2).into()], config.objective.alphas.clone())?;
                let single = base.eval(&t, &mt.blend())? + if base == BaseLoss::Mse { variance_term(&mt) } else { 0.0 };
                Ok((joint, single))
            })
            .collect::<Result<_, crate::mtl::MtlError>>()
            .map_err(stage("theorem check"))?;
        let n = per.len().max(1) as f64;
        out.push(TheoremCheck {
            checkpoint,
            joint: per.iter().map(|p| p.0).sum::<f64>() / n,
            single_target: per.iter().map(|p| p.1).sum::<f64>() / n,
            max_residual: per.iter().map(|p| (p.0 - p.1).abs()).fold(0.0, f64::max),
        });
    }
    Ok(out)
}

/// Oracle quality of the abduced targets themselves.
pub fn target_quality(patches: &[PreparedPatch]) -> Result<[OracleReport; 2], ExperimentError> {
    let t1: Vec<OracleReport> = patches.iter().map(|p| oracle_metrics(&p.targets.target1, &p.true_mask)).collect::<Result<_, _>>().map_err(stage("abduce"))?;
    let t2: Vec<OracleReport> = patches.iter().map(|p| oracle_metrics(&p.targets.target2, &p.true_mask)).collect::<Result<_, _>>().map_err(stage("abduce"))?;
    Ok([aggregate_oracle(&t1).map_err(stage("abduce"))?, aggregate_oracle(&t2).map_err(stage("abduce"))?])
}

pub const RESULTS_CSV: &str = "results.csv";

fn laf_header() -> &'static str {
    "solution,ltp,lfp,lfn,lprecision,lrecall,lf1,lfiou,oracle_precision,oracle_recall,oracle_f1,oracle_iou"
}

fn results_csv(rows: &[SolutionResult], pick: fn(&SolutionResult) -> &LafReport) -> String {
    let mut s = String::from(laf_header());
    s.push('\n');
    for r in rows {
        let l = pick(r);
        let o = &r.oracle;
        writeln!(
            s,
            "{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}",
            r.solution, l.counts.ltp, l.counts.lfp, l.counts.lfn, l.lprecision, l.lrecall, l.lf1, l.lfiou, o.precision, o.recall, o.f1, o.iou
        )
        .unwrap();
    }
    s
}

fn improvements_csv(rows: &[Improvement]) -> String {
    let mut s = String::from("solution,anchor,d_lprecision,d_lrecall,d_lf1,d_lfiou,lfiou_ci_low,lfiou_ci_high\n");
    for i in rows {
        writeln!(
            s,
            "{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}",
            i.solution, i.anchor, i.d_lprecision, i.d_lrecall, i.d_lf1, i.d_lfiou, i.ci.0, i.ci.1
        )
        .unwrap();
    }
    s
}

/// Trains and evaluates every configured solution and writes all artifacts
/// into `out_dir`.
pub fn cmd_run(config: &ExperimentConfig, out_dir: &Path) -> Result<ResultTable, ExperimentError> {
    let data = prepare(config)?;
    let solutions = config.parsed_solutions()?;
    std::fs::create_dir_all(out_dir)?;
    for sub in ["models", "traces", "test_patches", "predictions"] {
        std::fs::create_dir_all(out_dir.join(sub))?;
    }
    std::fs::write(out_dir.join("config.toml"), config.to_toml())?;

    let train_samples = samples(config, &data.train)?;
    let val_samples = samples(config, &data.val)?;

    let checks = theorem_checks(config, &train_samples, 3)?;
    if let Some(bad) = checks.iter().find(|c| c.max_residual > THEOREM_TOLERANCE) {
        return Err(ExperimentError::Stage {
            stage: "theorem check",
            message: format!("checkpoint {} residual {:e}", bad.checkpoint, bad.max_residual),
        });
    }

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap() {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(stage("threads"))?;
    let rows: Vec<SolutionResult> = pool.install(|| {
        solutions.par_iter().map(|s| run_solution(config, &data, &train_samples, &val_samples, *s)).collect::<Result<_, _>>()
    })?;

    let improvements = improvements(config, &rows)?;
    write_outputs(config, &data, &rows, &improvements, &checks, out_dir)?;
    cmd_report(out_dir)?;
    Ok(ResultTable { rows, transition: data.transition, improvements, theorem_checks: checks })
}

fn write_outputs(
    config: &ExperimentConfig,
    data: &PreparedData,
    rows: &[SolutionResult],
    improvements: &[Improvement],
    checks: &[TheoremCheck],
    out_dir: &Path,
) -> Result<(), ExperimentError> {
    std::fs::write(out_dir.join(RESULTS_CSV), results_csv(rows, |r| &r.laf))?;
    std::fs::write(out_dir.join("results_macro.csv"), results_csv(rows, |r| &r.macro_laf))?;
    std::fs::write(out_dir.join("improvements.csv"), improvements_csv(improvements))?;

    let mut s = String::from("checkpoint,joint_objective,single_target_objective,max_residual\n");
    for c in checks {
        writeln!(s, "{},{:.10},{:.10},{:.3e}", c.checkpoint, c.joint, c.single_target, c.max_residual).unwrap();
    }
    std::fs::write(out_dir.join("theorem_check.csv"), s)?;

    let [q1, q2] = target_quality(&data.test)?;
    let mut s = String::from("target,precision,recall,f1,iou\n");
    for (name, q) in [("target1", q1), ("target2", q2)] {
        writeln!(s, "{name},{:.4},{:.4},{:.4},{:.4}", q.precision, q.recall, q.f1, q.iou).unwrap();
    }
    std::fs::write(out_dir.join("abduction.csv"), s)?;

    let m = data.transition.matrix();
    std::fs::write(
        out_dir.join("transition.csv"),
        format!("clean,noisy0,noisy1\n0,{:.6},{:.6}\n1,{:.6},{:.6}\n", m[0][0], m[0][1], m[1][0], m[1][1]),
    )?;

    let n_overlay = config.report.overlays.min(data.test.len());
    for p in &data.test[..n_overlay] {
        let base = out_dir.join("test_patches");
        save_gray_png(&p.image, &base.join(format!("{:05}_image.png", p.index))).map_err(stage("write results"))?;
        save_mask_png(&p.targets.target1, &base.join(format!("{:05}_t1.png", p.index))).map_err(stage("write results"))?;
        save_mask_png(&p.targets.target2, &base.join(format!("{:05}_t2.png", p.index))).map_err(stage("write results"))?;
    }
    let mut timings = serde_json::Map::new();
    for r in rows {
        let name = r.solution.to_string();
        save_checkpoint(&r.model, &out_dir.join("models").join(format!("{name}.json"))).map_err(stage("write results"))?;
        write_loss_trace(&r.trace, &out_dir.join("traces").join(format!("{name}.csv"))).map_err(stage("write results"))?;
        let dir = out_dir.join("predictions").join(&name);
        std::fs::create_dir_all(&dir)?;
        for (p, m) in data.test.iter().zip(&r.evaluation.predictions).take(n_overlay) {
            save_mask_png(m, &dir.join(format!("{:05}.png", p.index))).map_err(stage("write results"))?;
        }
        timings.insert(name, serde_json::json!({ "seconds": r.runtime_secs, "best_epoch": r.best_epoch }));
    }
    std::fs::write(out_dir.join("timings.json"), serde_json::to_string_pretty(&timings).map_err(stage("write results"))? + "\n")?;
    Ok(())
}

/// Trains one solution and writes its checkpoint and loss trace.
pub fn cmd_train(config: &ExperimentConfig, solution: Solution, out_dir: &Path) -> Result<SolutionResult, ExperimentError> {
    let data = prepare(config)?;
    let train_samples = samples(config, &data.train)?;
    let val_samples = samples(config, &data.val)?;
    let r = run_solution(config, &data, &train_samples, &val_samples, solution)?;
    std::fs::create_dir_all(out_dir.join("models"))?;
    std::fs::create_dir_all(out_dir.join("traces"))?;
    let name = solution.to_string();
    save_checkpoint(&r.model, &out_dir.join("models").join(format!("{name}.json"))).map_err(stage("write results"))?;
    write_loss_trace(&r.trace, &out_dir.join("traces").join(format!("{name}.csv"))).map_err(stage("write results"))?;
    Ok(r)
}

/// Evaluates a saved checkpoint on the test split; writes `eval.csv` with
/// micro and macro rows.
pub fn cmd_eval(config: &ExperimentConfig, model: &Path, out_dir: &Path) -> Result<(LafReport, OracleReport), ExperimentError> {
    let model = crate::mtl::load_checkpoint(model).map_err(stage("load model"))?;
    let data = prepare(config)?;
    let e = evaluate_model(&model, &data.test, config.train.threshold)?;
    let micro = aggregate_laf(&e.counts).map_err(stage("evaluate"))?;
    let macro_ = aggregate_laf_macro(&e.counts).map_err(stage("evaluate"))?;
    let oracle = aggregate_oracle(&e.oracle).map_err(stage("evaluate"))?;
    let mut s = String::from("aggregation,ltp,lfp,lfn,lprecision,lrecall,lf1,lfiou,oracle_precision,oracle_recall,oracle_f1,oracle_iou\n");
    for (name, l) in [("micro", &micro), ("macro", &macro_)] {
        writeln!(
            s,
            "{name},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}",
            l.counts.ltp, l.counts.lfp, l.counts.lfn, l.lprecision, l.lrecall, l.lf1, l.lfiou, oracle.precision, oracle.recall, oracle.f1, oracle.iou
        )
        .unwrap();
    }
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("eval.csv"), s)?;
    Ok((micro, oracle))
}

/// Abduces both targets for every patch of the corpus at `corpus_dir`; writes
/// `targets/<index>_t1.png`, `targets/<index>_t2.png` and `abduction.csv`.
pub fn cmd_abduce(corpus_dir: &Path, params: &AbductionParams, alphas: &[f64], out_dir: &Path) -> Result<[OracleReport; 2], ExperimentError> {
    params.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
    proof_gate()?;
    let corpus = Corpus::load(corpus_dir).map_err(stage("corpus"))?;
    let dir = out_dir.join("targets");
    std::fs::create_dir_all(&dir)?;
    let mut all = Vec::new();
    for items in [&corpus.train, &corpus.val, &corpus.test] {
        all.extend(abduce_items(items, params, alphas)?);
    }
    for p in &all {
        save_mask_png(&p.targets.target1, &dir.join(format!("{:05}_t1.png", p.index))).map_err(stage("write results"))?;
        save_mask_png(&p.targets.target2, &dir.join(format!("{:05}_t2.png", p.index))).map_err(stage("write results"))?;
    }
    let q = target_quality(&all)?;
    let mut s = String::from("target,precision,recall,f1,iou\n");
    for (name, q) in [("target1", q[0]), ("target2", q[1])] {
        writeln!(s, "{name},{:.4},{:.4},{:.4},{:.4}", q.precision, q.recall, q.f1, q.iou).unwrap();
    }
    std::fs::write(out_dir.join("abduction.csv"), s)?;
    Ok(q)
}
