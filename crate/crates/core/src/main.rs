use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use alarm_monitor::alarm_engine::{reasonable, roi_feasible, AlarmPolicy, PredictionCache};
use alarm_monitor::cost_model::compile;
use alarm_monitor::estimator::Estimator;
use alarm_monitor::event_log::{write_log, EventLog, LogSchema};
use alarm_monitor::experiment::{
    evaluate_policies, format_summary, generate_synthetic, prefix_auc, prepare, run_sweep_cached, synthetic_schema,
    train_estimator, DataSource, ExperimentConfig, ExperimentError, PreparedLogs, ResearchQuestion,
};
use alarm_monitor::thresholding::{find_global_threshold_cached, find_per_length_thresholds_cached};

type Result<T> = std::result::Result<T, ExperimentError>;

#[derive(Parser)]
#[command(name = "alarm-monitor", version, about = "Cost-aware alarms for running business process cases")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic log described by the config as CSV.
    Generate(Common),
    /// Preprocess and split the log into train/thres/test CSVs.
    Prepare(Common),
    /// Train the outcome estimator and write model.json.
    Train(Common),
    /// Fit the alarm threshold on the thresholding log.
    Threshold {
        #[command(flatten)]
        common: Common,
        /// Fit one threshold per prefix length instead of a global one.
        #[arg(long)]
        per_length: bool,
    },
    /// Cost the fitted policy and the baselines on the test log.
    Evaluate(Common),
    /// Re-fit thresholds and evaluate over a grid of cost configurations.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// rq1, rq2, rq3 or all.
        #[arg(long, default_value = "all")]
        rq: String,
    },
    /// Return on investment of the fitted policy on the test log.
    Roi(Common),
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable")
}

struct Context {
    config: ExperimentConfig,
    out_dir: PathBuf,
}

impl Context {
    fn new(common: &Common) -> Result<Self> {
        let mut config = ExperimentConfig::load(&common.config)?;
        if let Some(seed) = common.seed {
            config = config.with_seed(seed);
        }
        fs::create_dir_all(&common.out_dir).map_err(|source| ExperimentError::Io {
            path: common.out_dir.clone(),
            source,
        })?;
        Ok(Self {
            config,
            out_dir: common.out_dir.clone(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn log_schema(&self) -> LogSchema {
        match &self.config.data {
            DataSource::Synthetic(_) => synthetic_schema(),
            DataSource::Csv { schema, .. } => schema.clone(),
        }
    }

    fn write_log(&self, name: &str, log: &EventLog) -> Result<()> {
        let mut buf = Vec::new();
        write_log(log, &self.log_schema(), &mut buf)?;
        write(&self.path(name), buf)
    }

    /// Model from the output directory, or a freshly trained one (which is saved).
    fn estimator(&self, prepared: &PreparedLogs) -> Result<Estimator> {
        let path = self.path("model.json");
        if path.exists() {
            return Ok(Estimator::load(&path)?);
        }
        self.train(prepared)
    }

    fn train(&self, prepared: &PreparedLogs) -> Result<Estimator> {
        let estimator = train_estimator(&self.config, &prepared.train)?;
        estimator.save(&self.path("model.json"))?;
        write(&self.path("encoding.json"), estimator.schema.to_json())?;
        write(&self.path("training.json"), to_json(&estimator.metadata))?;
        Ok(estimator)
    }

    /// Policy from the output directory, or a freshly fitted global one.
    fn policy(&self, prepared: &PreparedLogs, thres_cache: &PredictionCache) -> Result<AlarmPolicy> {
        let path = self.path("policy.json");
        if path.exists() {
            return serde_json::from_str(&read(&path)?)
                .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())));
        }
        self.threshold(prepared, thres_cache, false)
    }

    fn threshold(&self, prepared: &PreparedLogs, cache: &PredictionCache, per_length: bool) -> Result<AlarmPolicy> {
        let cm = compile(self.config.cost.clone())?;
        let result = if per_length {
            find_per_length_thresholds_cached(&prepared.thres, cache, &cm, self.config.resolution)?
        } else {
            find_global_threshold_cached(&prepared.thres, cache, &cm, self.config.resolution)?
        };
        write(&self.path("policy.json"), to_json(&result.best_policy))?;
        let mut csv = Vec::new();
        result.write_csv(&mut csv)?;
        write(&self.path("thresholds.csv"), csv)?;
        println!("{} with cost {} on the thresholding log", result.best_policy.label(), result.best_cost);
        Ok(result.best_policy)
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate(common) => {
            let ctx = Context::new(&common)?;
            let DataSource::Synthetic(spec) = &ctx.config.data else {
                return Err(ExperimentError::Config("generate needs a synthetic data source".into()));
            };
            let log = generate_synthetic(spec)?;
            ctx.write_log("log.csv", &log)?;
            write(&ctx.path("log_schema.toml"), synthetic_schema().to_toml_string())?;
            println!("{}", to_json(&log.stats()));
        }
        Command::Prepare(common) => {
            let ctx = Context::new(&common)?;
            let prepared = prepare(&ctx.config)?;
            ctx.write_log("train.csv", &prepared.train)?;
            ctx.write_log("thres.csv", &prepared.thres)?;
            ctx.write_log("test.csv", &prepared.test)?;
            write(&ctx.path("log_schema.toml"), ctx.log_schema().to_toml_string())?;
            let summary = serde_json::json!({
                "stats": prepared.stats,
                "train_cases": prepared.train.len(),
                "thres_cases": prepared.thres.len(),
                "test_cases": prepared.test.len(),
                "test_start": prepared.test_start,
                "warnings": prepared.warnings,
            });
            write(&ctx.path("prepare.json"), to_json(&summary))?;
            println!("{}", to_json(&summary));
        }
        Command::Train(common) => {
            let ctx = Context::new(&common)?;
            let prepared = prepare(&ctx.config)?;
            let estimator = ctx.train(&prepared)?;
            let cache = PredictionCache::build(&prepared.thres, &estimator);
            if let Some(auc) = prefix_auc(&prepared.thres, &cache) {
                println!("thresholding-log prefix AUC: {auc:.4}");
            }
        }
        Command::Threshold { common, per_length } => {
            let ctx = Context::new(&common)?;
            let prepared = prepare(&ctx.config)?;
            let estimator = ctx.estimator(&prepared)?;
            let cache = PredictionCache::build(&prepared.thres, &estimator);
            ctx.threshold(&prepared, &cache, per_length)?;
        }
        Command::Evaluate(common) => {
            let ctx = Context::new(&common)?;
            let prepared = prepare(&ctx.config)?;
            let estimator = ctx.estimator(&prepared)?;
            let thres_cache = PredictionCache::build(&prepared.thres, &estimator);
            let test_cache = PredictionCache::build(&prepared.test, &estimator);
            let policy = ctx.policy(&prepared, &thres_cache)?;
            let (evaluations, report) =
                evaluate_policies(&prepared, &thres_cache, &test_cache, &ctx.config.cost, &policy)?;
            let mut cases = Vec::new();
            report.write_cases_csv(&mut cases)?;
            write(&ctx.path("cases.csv"), cases)?;
            write(&ctx.path("summary.json"), to_json(&evaluations))?;
            let text = format_summary(&evaluations, prefix_auc(&prepared.test, &test_cache));
            write(&ctx.path("summary.txt"), &text)?;
            print!("{text}");
        }
        Command::Sweep { common, rq } => {
            let ctx = Context::new(&common)?;
            let questions = if rq.eq_ignore_ascii_case("all") {
                ResearchQuestion::ALL.to_vec()
            } else {
                vec![rq.parse()?]
            };
            let prepared = prepare(&ctx.config)?;
            let estimator = ctx.estimator(&prepared)?;
            let thres_cache = PredictionCache::build(&prepared.thres, &estimator);
            let test_cache = PredictionCache::build(&prepared.test, &estimator);
            for q in questions {
                let report = run_sweep_cached(&ctx.config, &prepared, &thres_cache, &test_cache, q)?;
                let name = format!("sweep_{q}.csv");
                write(&ctx.path(&name), report.to_csv())?;
                println!("{name}: {} rows", report.rows.len());
            }
        }
        Command::Roi(common) => {
            let ctx = Context::new(&common)?;
            let prepared = prepare(&ctx.config)?;
            let estimator = ctx.estimator(&prepared)?;
            let thres_cache = PredictionCache::build(&prepared.thres, &estimator);
            let test_cache = PredictionCache::build(&prepared.test, &estimator);
            let policy = ctx.policy(&prepared, &thres_cache)?;
            let (evaluations, report) =
                evaluate_policies(&prepared, &thres_cache, &test_cache, &ctx.config.cost, &policy)?;
            let s = &report.summary;
            let mut text = format!(
                "policy: {}\ncases: {}\nas-is cost: {}\ncost with alarms: {}\nROI: {}\nbenefit per case: {}\n\
                 undesired&alarmed: {}\ndesired&alarmed: {}\nundesired&not alarmed: {}\ndesired&not alarmed: {}\n",
                policy.label(),
                s.n_cases,
                s.as_is_cost,
                s.total_cost,
                s.roi,
                s.benefit,
                s.counts.undesired_alarmed,
                s.counts.desired_alarmed,
                s.counts.undesired_not_alarmed,
                s.counts.desired_not_alarmed
            );
            match ctx.config.cost.constants() {
                Some(costs) => text.push_str(&format!(
                    "alarms can pay off (eff*c_out > c_in): {}\nthese counts pay off: {}\n",
                    reasonable(&costs),
                    roi_feasible(&s.counts, &costs)
                )),
                None => text.push_str("cost model is not constant; feasibility check skipped\n"),
            }
            write(&ctx.path("roi.txt"), &text)?;
            write(&ctx.path("summary.json"), to_json(&evaluations))?;
            print!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
