use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use emfe::bench::{self, BenchReport, Host, Samples};
use emfe::dataset::{
    self, kfold_indices, load_table, save_table, split_table, FeatureSet, FeatureTable, IngestOptions, Label,
    SplitAssignment,
};
use emfe::evaluation::{self, ConfusionMatrix};
use emfe::imaging::{self, PolarityMode};
use emfe::learners::codec::{load_model, save_model, sidecar};
use emfe::learners::{EnsembleParams, Model, ModelKind, ModelSpec};
use emfe::morphology::Connectivity;
use emfe::{Error, Matrix};

const EXIT_USAGE: u8 = 64;
const EXIT_DATA: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "emfe", version, about = "Morphological feature pipeline for malaria cell images")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Serialize)]
struct Common {
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, default_value_t = dataset::DEFAULT_SEED)]
    seed: u64,
    #[arg(long, global = true, default_value_t = 0.2)]
    test_fraction: f64,
    #[arg(long, global = true, default_value_t = PolarityMode::Paper)]
    polarity: PolarityMode,
    #[arg(long, global = true, default_value_t = Connectivity::Eight)]
    connectivity: Connectivity,
    #[arg(long, global = true, default_value = "two")]
    features: FeatureSet,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    #[serde(skip)]
    verbose: bool,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(tag = "command", rename_all = "lowercase")]
enum Command {
    /// Extract morphological features from a Parasitized/Uninfected image tree.
    Extract {
        /// Dataset root holding Parasitized/ and Uninfected/.
        #[arg(long)]
        data: PathBuf,
        /// Write grayscale PGM and mask PBM files for the first images.
        #[arg(long)]
        dump_masks: Option<PathBuf>,
        #[arg(long, default_value_t = 16)]
        dump_limit: usize,
    },
    /// Train one model family on the training split.
    Train {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        model: ModelKind,
        /// Hyperparameters as a JSON object; missing keys take defaults.
        #[arg(long)]
        params: Option<String>,
    },
    /// Randomized hyperparameter search with stratified k-fold CV.
    Tune {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        model: ModelKind,
        #[arg(long, default_value_t = evaluation::DEFAULT_SEARCH_SAMPLES)]
        n_samples: usize,
        #[arg(long, default_value_t = 5)]
        folds: usize,
    },
    /// Evaluate a saved model on the held-out split.
    Eval {
        #[arg(long)]
        model_file: PathBuf,
        #[arg(long)]
        csv: PathBuf,
        #[arg(long, default_value_t = 0.95)]
        threshold_target: f64,
    },
    /// Train and validate the two-stage ensemble.
    Ensemble {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        params: Option<String>,
        #[arg(long, default_value_t = 10)]
        folds: usize,
    },
    /// Training time, inference latency and model size.
    Bench {
        #[arg(long)]
        model_file: PathBuf,
        #[arg(long)]
        csv: PathBuf,
        /// Image root; enables end-to-end latency.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        /// Hyperparameters used to time training, JSON.
        #[arg(long)]
        params: Option<String>,
    },
    /// Coefficients and their stability for a logistic model.
    Explain {
        #[arg(long)]
        model_file: PathBuf,
        /// Feature table for the stability runs.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        runs: usize,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Extract { .. } => "extract",
            Command::Train { .. } => "train",
            Command::Tune { .. } => "tune",
            Command::Eval { .. } => "eval",
            Command::Ensemble { .. } => "ensemble",
            Command::Bench { .. } => "bench",
            Command::Explain { .. } => "explain",
        }
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(msg) => CliError::Usage(msg),
            other => CliError::Core(other),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn report_error(err: &CliError) -> ExitCode {
    let (kind, message, code) = match err {
        CliError::Usage(msg) => ("UsageError", msg.clone(), EXIT_USAGE),
        CliError::Core(e) => {
            let code = match e {
                Error::Io { .. } => EXIT_IO,
                Error::Fold { source, .. } if matches!(**source, Error::Io { .. }) => EXIT_IO,
                _ => EXIT_DATA,
            };
            (e.kind(), e.to_string(), code)
        }
    };
    eprintln!("{}", json!({ "error": kind, "message": message, "exit_code": code }));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            return report_error(&CliError::Usage(e.to_string().trim().to_string()));
        }
    };
    let level = if cli.common.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = std::env::var("EMFE_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("could not size thread pool: {e}");
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report_error(&e),
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    let c = &cli.common;
    if !(c.test_fraction > 0.0 && c.test_fraction < 1.0) {
        return Err(CliError::Usage(format!("--test-fraction must lie in (0, 1), got {}", c.test_fraction)));
    }
    std::fs::create_dir_all(&c.out).map_err(|e| Error::io(&c.out, e))?;
    write_json(
        &c.out.join(format!("run_config.{}.json", cli.command.name())),
        &json!({ "common": c, "command": &cli.command }),
    )?;
    match &cli.command {
        Command::Extract {
            data,
            dump_masks,
            dump_limit,
        } => cmd_extract(c, data, dump_masks.as_deref(), *dump_limit),
        Command::Train { csv, model, params } => cmd_train(c, csv, *model, params.as_deref()),
        Command::Tune {
            csv,
            model,
            n_samples,
            folds,
        } => cmd_tune(c, csv, *model, *n_samples, *folds),
        Command::Eval {
            model_file,
            csv,
            threshold_target,
        } => cmd_eval(c, model_file, csv, *threshold_target),
        Command::Ensemble { csv, params, folds } => cmd_ensemble(c, csv, params.as_deref(), *folds),
        Command::Bench {
            model_file,
            csv,
            data,
            iterations,
            repeats,
            params,
        } => cmd_bench(c, model_file, csv, data.as_deref(), *iterations, *repeats, params.as_deref()),
        Command::Explain { model_file, csv, runs } => cmd_explain(c, model_file, csv.as_deref(), *runs),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e).into())
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e).into())
}

fn parse_params(kind: ModelKind, params: Option<&str>) -> CliResult<ModelSpec> {
    match params {
        None => Ok(ModelSpec::default_for(kind)),
        Some(raw) => {
            let value: Value =
                serde_json::from_str(raw).map_err(|e| CliError::Usage(format!("--params is not JSON: {e}")))?;
            Ok(ModelSpec::from_json(kind, &value)?)
        }
    }
}

struct Prepared {
    table: FeatureTable,
    x: Matrix,
    y: Vec<u8>,
    split: SplitAssignment,
}

impl Prepared {
    fn load(c: &Common, csv: &Path) -> CliResult<Self> {
        let table = load_table(csv)?;
        let split = split_table(&table, c.test_fraction, c.seed)?;
        Ok(Self {
            x: table.matrix(c.features),
            y: table.label_bytes(),
            table,
            split,
        })
    }

    fn train(&self) -> (Matrix, Vec<u8>) {
        (self.x.select(&self.split.train), emfe::matrix::select(&self.y, &self.split.train))
    }

    fn test(&self) -> (Matrix, Vec<u8>) {
        (self.x.select(&self.split.test), emfe::matrix::select(&self.y, &self.split.test))
    }
}

fn save_with_sidecar(c: &Common, model: &Model, stem: &str) -> CliResult<PathBuf> {
    let path = c.out.join(format!("{stem}.emfe"));
    save_model(model, &path)?;
    write_json(&c.out.join(format!("{stem}.json")), &sidecar(model, c.features.names()))?;
    Ok(path)
}

fn feature_set_for(model: &Model) -> CliResult<FeatureSet> {
    match model.n_features() {
        2 => Ok(FeatureSet::Two),
        3 => Ok(FeatureSet::Three),
        n => Err(CliError::Usage(format!("model expects {n} features"))),
    }
}

fn cmd_extract(c: &Common, data: &Path, dump: Option<&Path>, dump_limit: usize) -> CliResult<()> {
    let opts = IngestOptions {
        polarity: c.polarity,
        connectivity: c.connectivity,
        seed: c.seed,
    };
    let ingested = dataset::ingest(data, &opts)?;
    let table = &ingested.table;
    let csv = c.out.join("features.csv");
    save_table(table, &csv)?;
    write_json(&c.out.join("extraction_failures.json"), &ingested.failures)?;
    if let Some(dir) = dump {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for s in table.samples().iter().take(dump_limit) {
            let img = imaging::load_rgb(data.join(&s.path))?;
            let gray = imaging::to_gray(&imaging::resize_antialiased(&img));
            let mask = imaging::binarize_and_invert(&gray, imaging::otsu_threshold(&gray)?, c.polarity);
            let stem = s.path.replace(['/', '\\'], "_");
            let stem = stem.trim_end_matches(".png");
            let pgm = dir.join(format!("{stem}.pgm"));
            std::fs::write(&pgm, imaging::encode_pgm(&gray)).map_err(|e| Error::io(&pgm, e))?;
            let pbm = dir.join(format!("{stem}.pbm"));
            std::fs::write(&pbm, imaging::encode_pbm(&mask)).map_err(|e| Error::io(&pbm, e))?;
        }
    }
    let [uninfected, parasitized] = table.class_counts();
    println!(
        "extracted {} images ({} {}, {} {}), {} failures -> {}",
        table.len(),
        parasitized,
        Label::Parasitized,
        uninfected,
        Label::Uninfected,
        ingested.failures.len(),
        csv.display()
    );
    Ok(())
}

fn cmd_train(c: &Common, csv: &Path, kind: ModelKind, params: Option<&str>) -> CliResult<()> {
    let spec = parse_params(kind, params)?;
    let data = Prepared::load(c, csv)?;
    let (x, y) = data.train();
    let model = spec.fit(&x, &y, c.seed)?;
    let path = save_with_sidecar(c, &model, kind.name())?;
    println!("trained {} on {} rows -> {}", kind.display_name(), x.rows(), path.display());
    Ok(())
}

fn cmd_tune(c: &Common, csv: &Path, kind: ModelKind, n_samples: usize, k: usize) -> CliResult<()> {
    let data = Prepared::load(c, csv)?;
    let folds = kfold_indices(&data.table.labels(), &data.split.train, k, c.seed)?;
    let space = evaluation::search_space(kind);
    let result = evaluation::random_search(&space, n_samples, &data.x, &data.y, &folds, c.seed)?;
    write_json(&c.out.join(format!("search_{}.json", kind.name())), &result)?;
    let best = result.best_trial();
    let (x, y) = data.train();
    let model = best.spec.fit(&x, &y, c.seed)?;
    let path = save_with_sidecar(c, &model, &format!("{}_tuned", kind.name()))?;
    let name = kind.display_name();
    print!("{}", evaluation::cv_table(&[(name, &best.cv)]));
    println!("best params: {}", best.spec.params_json());
    println!("model -> {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct EvalReport {
    model_kind: ModelKind,
    test_rows: usize,
    confusion: ConfusionMatrix,
    report: evaluation::ClassificationReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    threshold_sweep: Option<evaluation::ThresholdSweep>,
}

fn cmd_eval(c: &Common, model_file: &Path, csv: &Path, target: f64) -> CliResult<()> {
    let model = load_model(model_file)?;
    let c = &Common {
        features: feature_set_for(&model)?,
        ..c.clone()
    };
    let data = Prepared::load(c, csv)?;
    let (x, y) = data.test();
    let (confusion, report) = evaluation::evaluate(&model, &x, &y)?;
    let threshold_sweep = match &model {
        Model::LogReg(lr) => Some(evaluation::threshold_sweep(lr, &x, &y, target)),
        _ => None,
    };
    let name = model.kind().display_name();
    let mut text = evaluation::confusion_table(&[(name, confusion)]);
    text.push('\n');
    text.push_str(&evaluation::report_table(&[(name, report.clone())]));
    if let Some(sweep) = &threshold_sweep {
        match sweep.selected {
            Some(p) => text.push_str(&format!(
                "threshold {:.4} reaches Parasitized recall {:.2}% (precision {:.2}%)\n",
                p.threshold,
                100.0 * p.recall,
                100.0 * p.precision
            )),
            None => text.push_str(&format!("no threshold reaches recall {:.2}%\n", 100.0 * target)),
        }
        log::warn!("{}", sweep.warning);
    }
    print!("{text}");
    let stem = model.kind().name();
    write_text(&c.out.join(format!("eval_{stem}.txt")), &text)?;
    write_json(
        &c.out.join(format!("eval_{stem}.json")),
        &EvalReport {
            model_kind: model.kind(),
            test_rows: y.len(),
            confusion,
            report,
            threshold_sweep,
        },
    )
}

#[derive(Serialize)]
struct EnsembleReport {
    params: EnsembleParams,
    cross_validation: evaluation::EnsembleCv,
    test_confusion: ConfusionMatrix,
    test_report: evaluation::ClassificationReport,
}

fn cmd_ensemble(c: &Common, csv: &Path, params: Option<&str>, k: usize) -> CliResult<()> {
    let ModelSpec::Ensemble(params) = parse_params(ModelKind::Ensemble, params)? else {
        unreachable!("ensemble spec");
    };
    let data = Prepared::load(c, csv)?;
    let folds = kfold_indices(&data.table.labels(), &data.split.train, k, c.seed)?;
    let cv = evaluation::evaluate_ensemble_cv(&data.x, &data.y, &folds, &params, c.seed)?;
    let (x, y) = data.train();
    let model = ModelSpec::Ensemble(params).fit(&x, &y, c.seed)?;
    let path = save_with_sidecar(c, &model, "ensemble")?;
    let (xt, yt) = data.test();
    let (test_confusion, test_report) = evaluation::evaluate(&model, &xt, &yt)?;

    let mut text = evaluation::cv_table(&[
        (ModelKind::LogReg.display_name(), &cv.logreg),
        (ModelKind::Rf.display_name(), &cv.forest),
        (ModelKind::Ensemble.display_name(), &cv.ensemble),
    ]);
    text.push_str(&format!(
        "paired t-test vs {}: t = {:.3}, p = {:.4}\nMcNemar: b = {}, c = {}, chi2 = {:.3}, p = {:.4}\n\n",
        cv.best_single.display_name(),
        cv.t_test.t,
        cv.t_test.p_value,
        cv.mcnemar.b,
        cv.mcnemar.c,
        cv.mcnemar.statistic,
        cv.mcnemar.p_value
    ));
    text.push_str(&evaluation::confusion_table(&[
        ("Ensemble (CV pooled)", cv.pooled_confusion),
        ("Ensemble (test)", test_confusion),
    ]));
    print!("{text}");
    println!("model -> {}", path.display());
    write_text(&c.out.join("ensemble_report.txt"), &text)?;
    write_json(
        &c.out.join("ensemble_report.json"),
        &EnsembleReport {
            params,
            cross_validation: cv,
            test_confusion,
            test_report,
        },
    )
}

#[allow(clippy::too_many_arguments)]
fn cmd_bench(
    c: &Common,
    model_file: &Path,
    csv: &Path,
    data_root: Option<&Path>,
    iterations: usize,
    repeats: usize,
    params: Option<&str>,
) -> CliResult<()> {
    let model_bytes = bench::bench_size(model_file)?;
    let model = load_model(model_file)?;
    let features = feature_set_for(&model)?;
    let c = &Common { features, ..c.clone() };
    let data = Prepared::load(c, csv)?;
    let (x, y) = data.train();
    let spec = parse_params(model.kind(), params)?;
    let training_seconds = Some(bench::bench_training(&spec, &x, &y, c.seed, repeats)?);
    let (xt, _) = data.test();
    let (_, model_only) = bench::bench_inference(&model, &Samples::Features(&xt), iterations)?;
    let end_to_end = match data_root {
        Some(root) => {
            let paths: Vec<PathBuf> = data
                .split
                .test
                .iter()
                .take(iterations)
                .map(|&i| root.join(&data.table.samples()[i].path))
                .collect();
            let samples = Samples::Files {
                paths: &paths,
                options: IngestOptions {
                    polarity: data.table.metadata.polarity,
                    connectivity: data.table.metadata.connectivity,
                    seed: c.seed,
                },
                features,
            };
            Some(bench::bench_inference(&model, &samples, iterations)?.1)
        }
        None => None,
    };
    let report = BenchReport {
        model_kind: model.kind(),
        training_seconds,
        model_only,
        end_to_end,
        model_bytes,
        host: Host::detect(),
    };
    let text = bench::bench_table(std::slice::from_ref(&report));
    print!("{text}");
    let stem = model.kind().name();
    write_text(&c.out.join(format!("bench_{stem}.txt")), &text)?;
    write_json(&c.out.join(format!("bench_{stem}.json")), &report)
}

fn cmd_explain(c: &Common, model_file: &Path, csv: Option<&Path>, runs: usize) -> CliResult<()> {
    let model = load_model(model_file)?;
    let Some(lr) = model.as_logreg() else {
        return Err(CliError::Usage(format!("explain needs a logistic model, got {}", model.kind())));
    };
    let features = feature_set_for(&model)?;
    let mut text = format!("{:<14}{:>14}\n", "Feature", "Coefficient");
    text.push_str(&"-".repeat(28));
    text.push('\n');
    for (name, w) in features.names().iter().zip(&lr.weights) {
        text.push_str(&format!("{name:<14}{w:>+14.4}\n"));
    }
    text.push_str(&format!("{:<14}{:>+14.4}\n", "(intercept)", lr.bias));
    let stability = match csv {
        Some(csv) => {
            let c = &Common { features, ..c.clone() };
            let data = Prepared::load(c, csv)?;
            let (x, y) = data.train();
            let params = emfe::learners::LogRegParams {
                penalty: lr.penalty,
                c: lr.c,
                ..Default::default()
            };
            let s = evaluation::coefficient_stability(&x, &y, &params, runs, c.seed)?;
            text.push_str(&format!("\nstability over {runs} reshuffled runs\n"));
            for (j, name) in features.names().iter().enumerate() {
                text.push_str(&format!(
                    "{name:<14} mean {:+.4}  max deviation {:.2e}\n",
                    s.mean[j], s.max_deviation[j]
                ));
            }
            text.push_str(&format!("all coefficients positive in every run: {}\n", s.all_positive));
            Some(s)
        }
        None => None,
    };
    print!("{text}");
    write_text(&c.out.join("explain.txt"), &text)?;
    write_json(
        &c.out.join("explain.json"),
        &json!({
            "features": features.names(),
            "weights": lr.weights,
            "bias": lr.bias,
            "units": "standardized",
            "stability": stability,
        }),
    )
}
