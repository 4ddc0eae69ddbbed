//! Command-line surface: train, k-fold evaluation, fine-tuning, parameter
//! counting, metrics-from-CSV and curve export.
//!
//! Every subcommand is deterministic given its flags (stochastic paths take a
//! mandatory seed). Artifacts are staged in a temporary directory and moved
//! into `--out` only on success, so failed runs leave no partial files.

use crate::data::{self, LabelScheme};
use crate::error::{Error, Result};
use crate::history;
use crate::metrics::{self, ConfusionMatrix};
use crate::model::{self, ArchitectureConfig, Variant};
use crate::train::{self, TrainConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(
    name = "coronet",
    about = "Chest X-ray CNN toolkit: training, cross-validation and metrics",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model on a manifest; writes weights.bin and history.csv
    Train(TrainArgs),
    /// Stratified 4-fold cross-validation; writes per-fold confusion
    /// matrices, reports and the fold-averaged summary
    Kfold(KfoldArgs),
    /// Load weights, swap the classification head for a new scheme and train
    Finetune(FinetuneArgs),
    /// Print the layer table and parameter totals
    CountParams(CountParamsArgs),
    /// Full metrics report from a confusion-matrix CSV
    Metrics(MetricsArgs),
    /// Convert a history CSV into per-epoch plot tables and an SVG chart
    Curves(CurvesArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VariantArg {
    Full,
    Mini,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Variant {
        match v {
            VariantArg::Full => Variant::Full,
            VariantArg::Mini => Variant::Mini,
        }
    }
}

fn scheme_for(classes: u8) -> Result<LabelScheme> {
    match classes {
        2 => Ok(LabelScheme::Two),
        3 => Ok(LabelScheme::Three),
        4 => Ok(LabelScheme::Four),
        other => Err(Error::input(format!("--classes must be 2, 3 or 4, got {other}"))),
    }
}

#[derive(Debug, Args)]
struct ModelFlags {
    /// Backbone scale
    #[arg(long, value_enum, default_value = "full")]
    variant: VariantArg,
    /// Classification scheme arity
    #[arg(long, default_value_t = 4)]
    classes: u8,
    /// Square input size in pixels
    #[arg(long, default_value_t = 224)]
    input: usize,
}

impl ModelFlags {
    fn config(&self) -> Result<ArchitectureConfig> {
        let scheme = scheme_for(self.classes)?;
        Ok(
            ArchitectureConfig::new(self.variant.into(), scheme.num_classes())
                .with_input(self.input, self.input),
        )
    }
}

#[derive(Debug, Args)]
struct TrainFlags {
    /// RNG seed (required: every stochastic path is reproducible)
    #[arg(long)]
    seed: u64,
    /// Adam learning rate
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    /// Mini-batch size
    #[arg(long, default_value_t = 10)]
    batch: usize,
    /// Training epochs
    #[arg(long, default_value_t = 80)]
    epochs: usize,
}

impl TrainFlags {
    fn config(&self, freeze_backbone: bool) -> TrainConfig {
        TrainConfig {
            learning_rate: self.lr,
            batch_size: self.batch,
            epochs: self.epochs,
            shuffle_each_epoch: true,
            rng_seed: self.seed,
            freeze_backbone,
        }
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Dataset manifest CSV (path,label)
    #[arg(long)]
    manifest: PathBuf,
    /// Initial weights to load before training
    #[arg(long)]
    weights: Option<PathBuf>,
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    train: TrainFlags,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct KfoldArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    train: TrainFlags,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FinetuneArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Weights of the source model (full file or backbone-only)
    #[arg(long)]
    weights: PathBuf,
    /// Freeze everything below the classification head
    #[arg(long)]
    freeze_backbone: bool,
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    train: TrainFlags,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CountParamsArgs {
    #[command(flatten)]
    model: ModelFlags,
    /// Print every layer instead of the rolled-up backbone row
    #[arg(long)]
    per_layer: bool,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    /// Confusion-matrix CSV
    #[arg(long)]
    cm: PathBuf,
    /// Optional output directory for report.json and report.txt
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CurvesArgs {
    /// History CSV produced by train/finetune/kfold
    #[arg(long)]
    history: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// Parse and execute; returns the process exit code. Reports go to `out`,
/// diagnostics to stderr.
pub fn run_with_writer<I>(argv: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = String>,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders --help/--version through the error path too
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => 0,
        // a downstream consumer (e.g. `| head`) closing the pipe is not a failure
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn run<I>(argv: I) -> i32
where
    I: IntoIterator<Item = String>,
{
    let mut stdout = std::io::stdout();
    run_with_writer(argv, &mut stdout)
}

fn execute(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Train(args) => cmd_train(args, out),
        Command::Kfold(args) => cmd_kfold(args, out),
        Command::Finetune(args) => cmd_finetune(args, out),
        Command::CountParams(args) => cmd_count_params(args, out),
        Command::Metrics(args) => cmd_metrics(args, out),
        Command::Curves(args) => cmd_curves(args, out),
    }
}

/// Staging area for output artifacts: files accumulate in a temp directory
/// next to the target and move into place only when the command succeeded.
struct OutputStage {
    tmp: tempfile::TempDir,
    target: PathBuf,
}

impl OutputStage {
    fn new(target: &Path) -> Result<Self> {
        let parent = target.parent().filter(|p| !p.as_os_str().is_empty());
        let tmp = match parent {
            Some(p) => {
                fs::create_dir_all(p)?;
                tempfile::TempDir::with_prefix_in(".staging-", p)?
            }
            None => tempfile::TempDir::with_prefix(".staging-")?,
        };
        Ok(OutputStage {
            tmp,
            target: target.to_path_buf(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.tmp.path().join(name)
    }

    fn write(&self, name: &str, contents: &str) -> Result<()> {
        fs::write(self.path(name), contents)?;
        Ok(())
    }

    fn commit(self) -> Result<()> {
        fs::create_dir_all(&self.target)?;
        for entry in fs::read_dir(self.tmp.path())? {
            let entry = entry?;
            let dest = self.target.join(entry.file_name());
            if fs::rename(entry.path(), &dest).is_err() {
                fs::copy(entry.path(), &dest)?;
                fs::remove_file(entry.path())?;
            }
        }
        Ok(())
    }
}

fn manifest_base(manifest_path: &Path) -> PathBuf {
    manifest_path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn cmd_train(args: TrainArgs, out: &mut dyn Write) -> Result<()> {
    let scheme = scheme_for(args.model.classes)?;
    let config = args.model.config()?;
    let manifest = data::load_manifest(&args.manifest)?;
    let manifest = data::merge_labels(&manifest, scheme);
    let dataset = data::load_images(
        &manifest,
        scheme,
        config.input_height,
        config.input_width,
        &manifest_base(&args.manifest),
    )?;
    let stage = OutputStage::new(&args.out)?;
    let (graph, mut store) = model::build_coronet(&config, args.train.seed)?;
    if let Some(weights) = &args.weights {
        model::load_weights(&graph, &mut store, weights)?;
    }
    let train_config = args.train.config(false);
    let hist = train::fit(
        &graph,
        &mut store,
        &dataset.images,
        &dataset.labels,
        None,
        &train_config,
    )?;
    model::save_weights(&graph, &store, &stage.path("weights.bin"))?;
    stage.write("history.csv", &history::render_history_csv(&hist))?;
    stage.commit()?;
    if let Some(last) = hist.last() {
        writeln!(
            out,
            "trained {} epochs: loss {:.4}, accuracy {:.2}%",
            last.epoch,
            last.train_loss,
            last.train_acc * 100.0
        )?;
    }
    writeln!(out, "artifacts written to {}", args.out.display())?;
    Ok(())
}

fn cmd_kfold(args: KfoldArgs, out: &mut dyn Write) -> Result<()> {
    const K: usize = 4;
    let scheme = scheme_for(args.model.classes)?;
    let config = args.model.config()?;
    let manifest = data::load_manifest(&args.manifest)?;
    let manifest = data::merge_labels(&manifest, scheme);
    // per-fold per-class metrics need every class present in every fold
    for (label, n) in manifest.class_counts() {
        if n < K {
            return Err(Error::input(format!(
                "class {label} has {n} records, fewer than the {K} folds"
            )));
        }
    }
    let folds = data::kfold_split(&manifest, K, args.train.seed)?;
    let base = manifest_base(&args.manifest);
    let stage = OutputStage::new(&args.out)?;

    let class_names = scheme.class_names();
    let mut reports = Vec::with_capacity(K);
    for held_out in 0..K {
        let mut train_manifest = data::DatasetManifest::default();
        for (i, fold) in folds.iter().enumerate() {
            if i != held_out {
                train_manifest.records.extend(fold.records.iter().cloned());
            }
        }
        let train_set = data::load_images(
            &train_manifest,
            scheme,
            config.input_height,
            config.input_width,
            &base,
        )?;
        let val_set = data::load_images(
            &folds[held_out],
            scheme,
            config.input_height,
            config.input_width,
            &base,
        )?;
        // fresh model per fold, identical seed-derived initialization
        let (graph, mut store) = model::build_coronet(&config, args.train.seed)?;
        let train_config = args.train.config(false);
        let hist = train::fit(
            &graph,
            &mut store,
            &train_set.images,
            &train_set.labels,
            Some((&val_set.images, &val_set.labels)),
            &train_config,
        )?;
        let (_, predicted) = model::predict(&graph, &store, &val_set.images)?;
        let cm = ConfusionMatrix::from_predictions(
            class_names.clone(),
            &val_set.labels,
            &predicted,
        )?;
        let fold_no = held_out + 1;
        stage.write(&format!("fold{fold_no}_cm.csv"), &cm.to_csv())?;
        let report = cm.report()?;
        stage.write(&format!("fold{fold_no}_report.json"), &report.to_json())?;
        stage.write(&format!("fold{fold_no}_report.txt"), &report.to_string())?;
        stage.write(
            &format!("fold{fold_no}_history.csv"),
            &history::render_history_csv(&hist),
        )?;
        writeln!(
            out,
            "fold {fold_no}: accuracy {:.2}%",
            report.accuracy * 100.0
        )?;
        reports.push(report);
    }
    let cv = metrics::fold_average(&reports)?;
    stage.write(
        "cv_report.json",
        &serde_json::to_string_pretty(&cv).expect("summary serializes"),
    )?;
    stage.write("cv_report.txt", &cv.to_string())?;
    stage.commit()?;
    writeln!(out, "mean accuracy {:.2}%", cv.mean.accuracy * 100.0)?;
    writeln!(out, "artifacts written to {}", args.out.display())?;
    Ok(())
}

fn cmd_finetune(args: FinetuneArgs, out: &mut dyn Write) -> Result<()> {
    let scheme = scheme_for(args.model.classes)?;
    let target_classes = scheme.num_classes();
    // the weights file fixes the source head arity; fall back to the target
    // arity for backbone-only files
    let source_classes = model::weights_file_head_arity(&args.weights)?.unwrap_or(target_classes);
    let mut config = args.model.config()?;
    config.num_classes = source_classes;
    let (mut graph, mut store) = model::build_coronet(&config, args.train.seed)?;
    model::load_weights(&graph, &mut store, &args.weights)?;

    let train_config = args.train.config(args.freeze_backbone);
    train::fine_tune(&mut graph, &mut store, target_classes, &train_config)?;

    let manifest = data::load_manifest(&args.manifest)?;
    let manifest = data::merge_labels(&manifest, scheme);
    let dataset = data::load_images(
        &manifest,
        scheme,
        config.input_height,
        config.input_width,
        &manifest_base(&args.manifest),
    )?;
    let stage = OutputStage::new(&args.out)?;
    let hist = train::fit(
        &graph,
        &mut store,
        &dataset.images,
        &dataset.labels,
        None,
        &train_config,
    )?;
    model::save_weights(&graph, &store, &stage.path("weights.bin"))?;
    stage.write("history.csv", &history::render_history_csv(&hist))?;
    stage.commit()?;
    writeln!(
        out,
        "fine-tuned {source_classes}-class model to {target_classes} classes"
    )?;
    writeln!(out, "artifacts written to {}", args.out.display())?;
    Ok(())
}

fn group_thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut grouped = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            grouped.push(',');
        }
        grouped.push(ch);
    }
    grouped
}

fn format_output_shape(dims: &[usize]) -> String {
    dims.iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join(" x ")
}

fn cmd_count_params(args: CountParamsArgs, out: &mut dyn Write) -> Result<()> {
    let config = args.model.config()?;
    let graph = model::build_coronet_graph(&config)?;
    let (count, rows) = if args.per_layer {
        model::count_parameters(&graph)?
    } else {
        model::count_parameters_summary(&graph)?
    };
    writeln!(out, "{:<28} {:>-18} {:>12}", "Layer (type)", "Output Shape", "Param #")?;
    for row in &rows {
        writeln!(
            out,
            "{:<28} {:>-18} {:>12}",
            row.name,
            format_output_shape(&row.output),
            row.params
        )?;
    }
    writeln!(out, "Total Parameters: {}", group_thousands(count.total))?;
    writeln!(out, "Trainable Parameters: {}", group_thousands(count.trainable))?;
    writeln!(
        out,
        "Non-trainable Parameters: {}",
        group_thousands(count.non_trainable)
    )?;
    Ok(())
}

fn cmd_metrics(args: MetricsArgs, out: &mut dyn Write) -> Result<()> {
    let cm = metrics::parse_cm_csv(&args.cm)?;
    let report = cm.report()?;
    write!(out, "{report}")?;
    if let Some(dir) = &args.out {
        let stage = OutputStage::new(dir)?;
        stage.write("report.json", &report.to_json())?;
        stage.write("report.txt", &report.to_string())?;
        stage.commit()?;
        writeln!(out, "report written to {}", dir.display())?;
    }
    Ok(())
}

fn cmd_curves(args: CurvesArgs, out: &mut dyn Write) -> Result<()> {
    let hist = history::parse_history_csv(&args.history)?;
    if hist.is_empty() {
        return Err(Error::input("history has no epochs".to_string()));
    }
    let stage = OutputStage::new(&args.out)?;
    let (acc, loss) = history::curve_tables(&hist);
    stage.write("accuracy_curve.csv", &acc)?;
    stage.write("loss_curve.csv", &loss)?;
    stage.write("curves.svg", &history::render_curves_svg(&hist)?)?;
    stage.commit()?;
    writeln!(
        out,
        "curve data for {} epochs written to {}",
        hist.len(),
        args.out.display()
    )?;
    Ok(())
}
