//! The four subcommands. Each reads and writes under an experiment
//! directory laid out by [`Paths`](crate::config::Paths).

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use trustsup::decision::{metrics_table_csv, TrustedMetrics};
use trustsup::descriptor::DescriptorShape;
use trustsup::ensemble::io::{load_features, load_samples, save_features, save_samples, Sidecar};
use trustsup::ensemble::{
    correct_count_histogram, synth_generate, FeatureSample, FeatureWorld, LabeledSample, Split, ToyEnsemble,
};
use trustsup::loops::{order_stream, run_active, run_maximal, run_online, run_predicted, LoopResult, Mode};
use trustsup::pipeline::{train_supervisor, TrainedSupervisor};

use crate::config::ExperimentConfig;
use crate::exit::ConfigError;
use crate::report::{loss_trace_csv, memory_trace_csv, records_csv, tt_trace_csv, write_json, write_text};

pub const TRAIN_CSV: &str = "train.csv";
pub const TEST_CSV: &str = "test.csv";
pub const TOY_TRAIN_CSV: &str = "toy_train.csv";
pub const TOY_SUPERVISOR_CSV: &str = "toy_supervisor.csv";
pub const TOY_STREAM_CSV: &str = "toy_stream.csv";
pub const SUPERVISOR_JSON: &str = "supervisor.json";
pub const TOY_ENSEMBLE_JSON: &str = "toy_ensemble.json";
pub const TOY_SUPERVISOR_JSON: &str = "toy_supervisor.json";

/// Which test data an evaluation runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    /// Generated activations and the main supervisor.
    Synth,
    /// Drift stream through the toy ensemble and its own supervisor.
    Toy,
}

/// One evaluation column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub mode: Mode,
    pub budget: f64,
}

impl RunSpec {
    pub fn column(&self) -> String {
        self.mode.column(self.budget)
    }

    /// File-name stem for per-run artifacts.
    pub fn stem(&self) -> String {
        match self.mode {
            Mode::Active => format!("active_{}", self.budget),
            m => m.as_str().to_string(),
        }
    }
}

fn dir(out: &Path, rel: &Path) -> PathBuf {
    out.join(rel)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSummary {
    pub train_histogram: Vec<usize>,
    pub test_histogram: Vec<usize>,
}

pub fn gen(cfg: &ExperimentConfig, out: &Path) -> Result<GenSummary> {
    let data = dir(out, &cfg.paths.data);
    std::fs::create_dir_all(&data).map_err(|e| trustsup::Error::io(&data, e))?;
    let sidecar = Sidecar::new(cfg.synth.models, cfg.synth.classes);
    let train = synth_generate(&cfg.synth, Split::Train)?;
    let test = synth_generate(&cfg.synth, Split::Test)?;
    save_samples(&data.join(TRAIN_CSV), &train, &sidecar)?;
    save_samples(&data.join(TEST_CSV), &test, &sidecar)?;

    let world = FeatureWorld::new(cfg.toy.world.clone())?;
    let f = world.features();
    save_features(
        &data.join(TOY_TRAIN_CSV),
        &world.sample(cfg.toy.train_samples, "toy-train", 1),
        f,
    )?;
    save_features(
        &data.join(TOY_SUPERVISOR_CSV),
        &world.sample(cfg.toy.supervisor_samples, "toy-sup", 2),
        f,
    )?;
    save_features(
        &data.join(TOY_STREAM_CSV),
        &world.drift_stream(cfg.toy.stream_samples, cfg.toy.drift_at, 3),
        f,
    )?;

    let summary = GenSummary {
        train_histogram: correct_count_histogram(&train, cfg.synth.models),
        test_histogram: correct_count_histogram(&test, cfg.synth.models),
    };
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisorSummary {
    pub samples: usize,
    pub memory_capacity: usize,
    pub memory_len: usize,
    pub final_loss: Option<f64>,
    pub final_tt: f64,
    /// Exact minimiser of the memory's threshold loss over `[0, M]`,
    /// reported for diagnosis only.
    pub scan_optimal_tt: f64,
    pub scan_optimal_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainManifest {
    pub config: ExperimentConfig,
    pub synth: SupervisorSummary,
    pub toy: SupervisorSummary,
}

fn check_shape(sidecar: &Sidecar, models: usize, classes: usize, what: &str) -> Result<DescriptorShape> {
    if sidecar.models != models || sidecar.classes != classes {
        return Err(trustsup::Error::Shape(format!(
            "{what} is {}x{} but the config expects {models}x{classes}",
            sidecar.models, sidecar.classes
        ))
        .into());
    }
    Ok(DescriptorShape { models, classes })
}

fn fit_and_save(
    cfg: &ExperimentConfig,
    samples: &[LabeledSample],
    shape: DescriptorShape,
    model: &Path,
    prefix: &str,
    checkpoint: &str,
) -> Result<SupervisorSummary> {
    let (sup, report) = train_supervisor(samples, shape, &cfg.train, &cfg.trust)?;
    sup.save(&model.join(checkpoint))?;
    write_text(
        &model.join(format!("{prefix}loss_trace.csv")),
        &loss_trace_csv(&report.loss_trace),
    )?;
    write_text(
        &model.join(format!("{prefix}tt_trace.csv")),
        &memory_trace_csv(sup.memory.trace()),
    )?;
    let (scan_tt, scan_loss) = sup.memory.scan_optimal_tt(0.0, shape.models as f64)?;
    Ok(SupervisorSummary {
        samples: samples.len(),
        memory_capacity: sup.memory.capacity(),
        memory_len: sup.memory.len(),
        final_loss: report.loss_trace.last().copied(),
        final_tt: sup.memory.threshold(),
        scan_optimal_tt: scan_tt,
        scan_optimal_loss: scan_loss,
    })
}

pub fn train(cfg: &ExperimentConfig, out: &Path) -> Result<TrainManifest> {
    let data = dir(out, &cfg.paths.data);
    let model = dir(out, &cfg.paths.model);
    std::fs::create_dir_all(&model).map_err(|e| trustsup::Error::io(&model, e))?;

    let (samples, sidecar) = load_samples(&data.join(TRAIN_CSV)).context("loading training data")?;
    let shape = check_shape(&sidecar, cfg.synth.models, cfg.synth.classes, "training data")?;
    let synth = fit_and_save(cfg, &samples, shape, &model, "", SUPERVISOR_JSON)?;

    let toy_train = load_features(&data.join(TOY_TRAIN_CSV)).context("loading toy training data")?;
    let toy_sup = load_features(&data.join(TOY_SUPERVISOR_CSV)).context("loading toy supervisor data")?;
    let mut ensemble = ToyEnsemble::new(cfg.toy.ensemble.clone())?;
    ensemble.train(&toy_train, cfg.toy.ensemble.epochs)?;
    ensemble.save(&model.join(TOY_ENSEMBLE_JSON))?;
    let labeled = ensemble.label(&toy_sup)?;
    let toy_shape = DescriptorShape {
        models: cfg.toy.ensemble.models,
        classes: cfg.toy.ensemble.classes,
    };
    let toy = fit_and_save(cfg, &labeled, toy_shape, &model, "toy_", TOY_SUPERVISOR_JSON)?;

    let manifest = TrainManifest {
        config: cfg.clone(),
        synth,
        toy,
    };
    write_json(&model.join("train_manifest.json"), &manifest)?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: Mode,
    pub column: String,
    pub metrics: TrustedMetrics,
    pub oracle_calls: usize,
    pub oracle_budget: usize,
    pub final_tt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalManifest {
    pub config: ExperimentConfig,
    pub source: Source,
    pub stream_len: usize,
    pub runs: Vec<RunSummary>,
}

fn table(runs: &[RunSummary]) -> String {
    let columns: Vec<(String, TrustedMetrics)> = runs.iter().map(|r| (r.column.clone(), r.metrics.clone())).collect();
    metrics_table_csv(&columns)
}

impl EvalManifest {
    /// The metrics table as written to `metrics.csv`.
    pub fn table(&self) -> String {
        table(&self.runs)
    }
}

enum Stream {
    Labeled(Vec<LabeledSample>),
    Features {
        samples: Vec<FeatureSample>,
        ensemble: ToyEnsemble,
    },
}

pub fn eval(cfg: &ExperimentConfig, out: &Path, source: Source, runs: &[RunSpec]) -> Result<EvalManifest> {
    let data = dir(out, &cfg.paths.data);
    let model = dir(out, &cfg.paths.model);
    let target = dir(out, &cfg.paths.eval).join(match source {
        Source::Synth => "synth",
        Source::Toy => "toy",
    });
    let order = cfg.loop_cfg.stream_order;
    let seed = cfg.loop_cfg.seed;

    let (sup, stream) = match source {
        Source::Synth => {
            if runs.iter().any(|r| r.mode == Mode::Active) {
                return Err(ConfigError("active mode needs the toy ensemble; use --source toy".into()).into());
            }
            let sup = TrainedSupervisor::load(&model.join(SUPERVISOR_JSON)).context("loading supervisor")?;
            let (samples, sidecar) = load_samples(&data.join(TEST_CSV)).context("loading test data")?;
            check_shape(&sidecar, sup.shape.models, sup.shape.classes, "test data")?;
            let samples = order_stream(&samples, |s| s.group_id.as_deref(), order, seed);
            (sup, Stream::Labeled(samples))
        }
        Source::Toy => {
            let sup = TrainedSupervisor::load(&model.join(TOY_SUPERVISOR_JSON)).context("loading toy supervisor")?;
            let ensemble = ToyEnsemble::load(&model.join(TOY_ENSEMBLE_JSON)).context("loading toy ensemble")?;
            let samples = load_features(&data.join(TOY_STREAM_CSV)).context("loading toy stream")?;
            let samples = order_stream(&samples, |s| s.group_id.as_deref(), order, seed);
            (sup, Stream::Features { samples, ensemble })
        }
    };

    let labeled = match &stream {
        Stream::Labeled(s) => s.clone(),
        Stream::Features { samples, ensemble } => ensemble.label(samples)?,
    };

    let mut summaries = Vec::with_capacity(runs.len());
    for spec in runs {
        let result: LoopResult = match spec.mode {
            Mode::Maximal => run_maximal(&sup.net, &sup.memory, &labeled)?,
            Mode::Predicted => run_predicted(&sup.net, &sup.memory, &labeled)?,
            Mode::Online => {
                let mut net = sup.net.clone();
                let mut memory = sup.memory.clone();
                run_online(
                    &mut net,
                    &mut memory,
                    &sup.reference,
                    &labeled,
                    &cfg.loop_cfg,
                    &cfg.train,
                )?
            }
            Mode::Active => {
                let Stream::Features { samples, ensemble } = &stream else {
                    unreachable!("checked above")
                };
                let mut live = ensemble.clone();
                let loop_cfg = trustsup::loops::LoopConfig {
                    oracle_budget: spec.budget,
                    ..cfg.loop_cfg.clone()
                };
                run_active(&mut live, &sup.net, &sup.memory, samples, &loop_cfg)?
            }
        };
        let stem = spec.stem();
        write_text(
            &target.join(format!("records_{stem}.csv")),
            &records_csv(&result.records),
        )?;
        write_text(
            &target.join(format!("tt_trace_{stem}.csv")),
            &tt_trace_csv(&result.tt_trace),
        )?;
        summaries.push(RunSummary {
            mode: spec.mode,
            column: spec.column(),
            metrics: result.metrics,
            oracle_calls: result.oracle_calls,
            oracle_budget: result.oracle_budget,
            final_tt: result.tt_trace.last().map(|p| p.1).unwrap_or(f64::NAN),
        });
    }
    let manifest = EvalManifest {
        config: cfg.clone(),
        source,
        stream_len: labeled.len(),
        runs: summaries,
    };
    write_text(&target.join("metrics.csv"), &manifest.table())?;
    write_json(&target.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub config: ExperimentConfig,
    pub generated: GenSummary,
    pub synth: EvalManifestBrief,
    pub toy: EvalManifestBrief,
}

/// Evaluation results without the repeated config echo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalManifestBrief {
    pub stream_len: usize,
    pub runs: Vec<RunSummary>,
}

impl EvalManifestBrief {
    pub fn table(&self) -> String {
        table(&self.runs)
    }
}

impl From<EvalManifest> for EvalManifestBrief {
    fn from(m: EvalManifest) -> Self {
        Self {
            stream_len: m.stream_len,
            runs: m.runs,
        }
    }
}

/// Default columns for a source.
pub fn default_runs(source: Source, budgets: &[f64]) -> Vec<RunSpec> {
    let mut runs: Vec<RunSpec> = [Mode::Maximal, Mode::Predicted, Mode::Online]
        .into_iter()
        .map(|mode| RunSpec { mode, budget: 0.0 })
        .collect();
    if source == Source::Toy {
        runs.extend(budgets.iter().map(|&budget| RunSpec {
            mode: Mode::Active,
            budget,
        }));
    }
    runs
}

pub fn bench(cfg: &ExperimentConfig, out: &Path) -> Result<BenchSummary> {
    let generated = gen(cfg, out)?;
    train(cfg, out)?;
    let synth = eval(cfg, out, Source::Synth, &default_runs(Source::Synth, &[]))?;
    let toy = eval(cfg, out, Source::Toy, &default_runs(Source::Toy, &cfg.bench.budgets))?;
    let summary = BenchSummary {
        config: cfg.clone(),
        generated,
        synth: synth.into(),
        toy: toy.into(),
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}
