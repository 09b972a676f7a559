use std::path::Path;
use std::time::Instant;

use ltlab::analysis::NormSource;
use ltlab::baselines::{build_network, decouple_grid_seed, evaluate, train_manner_observed, Manner, Rebalance};
use ltlab::bbn::{evaluate_bbn, save_model, train_bbn_observed, BbnModel};
use ltlab::data::save_dataset;
use ltlab::experiment::{rows_to_csv, BenchmarkConfig, ResultRow, SeedRun};
use ltlab::sampling::SamplerKind;

use crate::registry::{MetricsLog, RunDir, RunRecord, Status, TableKind, Timing, METRICS_FILE, RECORD_FILE, TIMING_FILE};
use crate::Result;

/// Number of largest classes averaged in the compactness table.
pub const HEAD_CLASSES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Job {
    GenData,
    TrainManner(Manner),
    TrainBbn,
    DecoupleGrid,
    TwoStage(Rebalance),
    AblateSampler,
    AblateAdaptor,
    FeatureQuality,
    Ensemble,
    AnalyzeNorms,
    AnalyzeCompactness,
}

impl Job {
    /// Command line spelling; part of the run id.
    pub fn tag(self) -> String {
        match self {
            Job::GenData => "gen-data".into(),
            Job::TrainManner(m) => format!("train-manner {m}"),
            Job::TrainBbn => "train-bbn".into(),
            Job::DecoupleGrid => "decouple-grid".into(),
            Job::TwoStage(r) => format!("two-stage {}", r.method_name()),
            Job::AblateSampler => "ablate-sampler".into(),
            Job::AblateAdaptor => "ablate-adaptor".into(),
            Job::FeatureQuality => "feature-quality".into(),
            Job::Ensemble => "ensemble".into(),
            Job::AnalyzeNorms => "analyze-norms".into(),
            Job::AnalyzeCompactness => "analyze-compactness".into(),
        }
    }

    pub fn table(self) -> Option<TableKind> {
        match self {
            Job::GenData => None,
            Job::TrainManner(_) | Job::TrainBbn | Job::TwoStage(_) => Some(TableKind::Methods),
            Job::DecoupleGrid => Some(TableKind::Decoupling),
            Job::AblateSampler => Some(TableKind::Samplers),
            Job::AblateAdaptor => Some(TableKind::Adaptors),
            Job::FeatureQuality => Some(TableKind::FeatureQuality),
            Job::Ensemble => Some(TableKind::Ensembles),
            Job::AnalyzeNorms => Some(TableKind::Norms),
            Job::AnalyzeCompactness => Some(TableKind::Compactness),
        }
    }

    fn logs_epochs(self) -> bool {
        matches!(self, Job::TrainManner(_) | Job::TrainBbn | Job::TwoStage(_))
    }
}

struct Output {
    rows: Vec<ResultRow>,
    artifacts: Vec<String>,
}

/// Runs `job` for one seed in a new directory under `root`.
///
/// The record is written whether or not the job succeeds; on failure it
/// carries the error and the metrics written so far stay on disk.
pub fn execute(job: Job, config: &BenchmarkConfig, seed: u64, root: &Path) -> Result<RunRecord> {
    config.validate()?;
    let dir = RunDir::create(root, &job.tag(), config, seed)?;
    let start = Instant::now();
    let mut log = if job.logs_epochs() {
        Some(MetricsLog::create(&dir.file(METRICS_FILE))?)
    } else {
        None
    };
    let outcome = run_job(job, config, seed, &dir, log.as_mut());
    let timing = Timing {
        total_ms: start.elapsed().as_millis(),
        epoch_ms: log.map(MetricsLog::into_epoch_ms).unwrap_or_default(),
    };
    dir.write(TIMING_FILE, serde_json::to_string_pretty(&timing)?)?;

    let (status, rows, mut artifacts) = match &outcome {
        Ok(out) => (Status::Complete, out.rows.clone(), out.artifacts.clone()),
        Err(e) => (Status::Failed(e.to_string()), Vec::new(), Vec::new()),
    };
    if job.logs_epochs() {
        artifacts.insert(0, METRICS_FILE.into());
    }
    artifacts.push(TIMING_FILE.into());
    let record = RunRecord {
        run_id: dir.id.clone(),
        command: job.tag(),
        seed,
        config: config.clone(),
        status,
        table: job.table(),
        rows,
        artifacts,
    };
    dir.write(RECORD_FILE, serde_json::to_string_pretty(&record)?)?;
    outcome.map(|_| record)
}

fn table_output(dir: &RunDir, name: &str, rows: Vec<ResultRow>) -> Result<Output> {
    dir.write(name, rows_to_csv(&rows))?;
    Ok(Output {
        rows,
        artifacts: vec![name.into()],
    })
}

fn run_job(job: Job, config: &BenchmarkConfig, seed: u64, dir: &RunDir, log: Option<&mut MetricsLog>) -> Result<Output> {
    let mut run = SeedRun::new(config, seed)?;
    let mut log = log;
    let mut observe = |row: &ltlab::EpochMetrics| match log.as_deref_mut() {
        Some(l) => l.log(row),
        None => Ok(()),
    };
    match job {
        Job::GenData => {
            save_dataset(&run.train, dir.file("train.bin"))?;
            save_dataset(&run.test, dir.file("test.bin"))?;
            let mut counts = String::from("class,count\n");
            for (c, n) in run.train.class_counts().iter().enumerate() {
                counts.push_str(&format!("{c},{n}\n"));
            }
            dir.write("counts.csv", counts)?;
            Ok(Output {
                rows: Vec::new(),
                artifacts: vec!["train.bin".into(), "test.bin".into(), "counts.csv".into()],
            })
        }
        Job::TrainManner(m) => {
            let mut net = build_network(&config.arch, run.train.dim(), run.train.num_classes(), seed)?;
            train_manner_observed(&mut net, &run.train, m, &config.train, seed, Some(&run.test), &mut observe)?;
            let rows = vec![ResultRow::new(m.name(), evaluate(&net, &run.test)?)];
            table_output(dir, "errors.csv", rows)
        }
        Job::TrainBbn => {
            let mut model = BbnModel::new(&config.arch, run.train.dim(), run.train.num_classes(), seed)?;
            let bbn = config.bbn_config(config.schedule, SamplerKind::Reversed);
            train_bbn_observed(&mut model, &run.train, &bbn, seed, Some(&run.test), &mut observe)?;
            save_model(&model, dir.file("model.bin"))?;
            let rows = vec![ResultRow::new("BBN", evaluate_bbn(&model, &run.test)?)];
            let mut out = table_output(dir, "errors.csv", rows)?;
            out.artifacts.push("model.bin".into());
            Ok(out)
        }
        Job::TwoStage(r) => {
            let net = run.two_stage_observed(r, Some(&run.test), &mut observe)?;
            let rows = vec![ResultRow::new(r.method_name(), evaluate(&net, &run.test)?)];
            table_output(dir, "errors.csv", rows)
        }
        Job::DecoupleGrid => {
            let grid = decouple_grid_seed(&run.train, &run.test, &config.decouple_config(), seed)?;
            let mut csv = String::from("representation,CE,RW,RS\n");
            let mut rows = Vec::new();
            for (r, rep) in Manner::ALL.iter().enumerate() {
                csv.push_str(&format!("{rep},{},{},{}\n", grid[r][0], grid[r][1], grid[r][2]));
                for (c, cls) in Manner::ALL.iter().enumerate() {
                    rows.push(ResultRow::new(format!("{rep}/{cls}"), grid[r][c]));
                }
            }
            dir.write("grid.csv", csv)?;
            Ok(Output {
                rows,
                artifacts: vec!["grid.csv".into()],
            })
        }
        Job::AblateSampler => table_output(dir, "samplers.csv", run.sampler_ablation()?),
        Job::AblateAdaptor => table_output(dir, "adaptors.csv", run.adaptor_ablation()?),
        Job::FeatureQuality => table_output(dir, "feature_quality.csv", run.feature_quality()?),
        Job::Ensemble => table_output(dir, "ensembles.csv", run.ensembles()?),
        Job::AnalyzeNorms => {
            let analysis = run.norms()?;
            let counts = run.train.class_counts();
            let mut csv = String::from("class,count");
            for r in &analysis.reports {
                csv.push_str(&format!(",{}", r.source.label()));
            }
            csv.push('\n');
            for (c, n) in counts.iter().enumerate() {
                csv.push_str(&format!("{c},{n}"));
                for r in &analysis.reports {
                    csv.push_str(&format!(",{}", r.per_class_norm[c]));
                }
                csv.push('\n');
            }
            dir.write("class_norms.csv", csv)?;
            let mut rows: Vec<ResultRow> = analysis
                .reports
                .iter()
                .map(|r| ResultRow::new(format!("sigma {}", r.source.label()), r.sigma))
                .collect();
            rows.push(ResultRow::new(
                format!("spearman {} norm vs count", NormSource::CE.label()),
                analysis.ce_count_spearman,
            ));
            let mut out = table_output(dir, "norm_summary.csv", rows)?;
            out.artifacts.insert(0, "class_norms.csv".into());
            Ok(out)
        }
        Job::AnalyzeCompactness => table_output(dir, "compactness.csv", run.compactness(HEAD_CLASSES)?),
    }
}
