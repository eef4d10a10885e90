//! `somrules`: train, tune, and apply fuzzy rule-based classifiers.
//!
//! Single binary, subcommand style. All randomness flows from `--seed`, and
//! every command echoes its fully resolved configuration so a run can be
//! reproduced from its log alone.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use somrules::dataset::{
    load_dataset, load_feature_planes, load_image_planes, load_unlabeled, Dataset, Delimiter,
    ImageLayout, PartitionSpec, PlaneFormat,
};
use somrules::eval::{confusion_matrix, render_report, ConfusionMatrix};
use somrules::inference::{classify_batch, classify_features, Classification, Prediction};
use somrules::pgm::write_classified_pgm;
use somrules::prototype::{generate_prototypes, Refined, RefineConfig};
use somrules::rulebase::{
    load_rulebase, rules_from_prototypes, save_rulebase, RuleBase, RuleGenConfig, SigmaFormula,
    TNorm,
};
use somrules::seeded_rng;
use somrules::sofm::{init_sofm, train_sofm, SofmSchedule};
use somrules::tuning::{context_tune, error_e, misclassification_count, q_tune, TuningConfig};
use somrules::{Error, Result};

#[derive(Parser)]
#[command(
    name = "somrules",
    version,
    about = "Fuzzy rule-based classifier: map-seeded prototypes, Gaussian rules, gradient tuning"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train prototypes on labeled data and write a rulebase
    Train(TrainArgs),
    /// Tune rule centers and spreads against training data
    Tune(TuneArgs),
    /// Tune per-rule softmin exponents against training data
    Qtune(QtuneArgs),
    /// Score a rulebase on labeled data and render a report
    Evaluate(EvaluateArgs),
    /// Classify unlabeled rows or image planes
    Classify(ClassifyArgs),
    /// Print a rulebase, prototype dump, or trained map grid
    Inspect(InspectArgs),
    /// Run a built-in end-to-end benchmark recipe
    Bench(BenchArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DelimiterArg {
    Auto,
    Comma,
    Whitespace,
}

impl From<DelimiterArg> for Delimiter {
    fn from(d: DelimiterArg) -> Self {
        match d {
            DelimiterArg::Auto => Delimiter::Auto,
            DelimiterArg::Comma => Delimiter::Comma,
            DelimiterArg::Whitespace => Delimiter::Whitespace,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PlaneFormatArg {
    Auto,
    U8,
    Text,
}

impl From<PlaneFormatArg> for PlaneFormat {
    fn from(f: PlaneFormatArg) -> Self {
        match f {
            PlaneFormatArg::Auto => PlaneFormat::Auto,
            PlaneFormatArg::U8 => PlaneFormat::U8,
            PlaneFormatArg::Text => PlaneFormat::Text,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TNormArg {
    Product,
    Softmin,
    Min,
}

impl From<TNormArg> for TNorm {
    fn from(t: TNormArg) -> Self {
        match t {
            TNormArg::Product => TNorm::Product,
            TNormArg::Softmin => TNorm::Softmin,
            TNormArg::Min => TNorm::Min,
        }
    }
}

impl TNormArg {
    fn name(self) -> &'static str {
        match self {
            TNormArg::Product => "product",
            TNormArg::Softmin => "softmin",
            TNormArg::Min => "min",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SigmaFormulaArg {
    Scaled,
    Rms,
}

impl From<SigmaFormulaArg> for SigmaFormula {
    fn from(f: SigmaFormulaArg) -> Self {
        match f {
            SigmaFormulaArg::Scaled => SigmaFormula::Scaled,
            SigmaFormulaArg::Rms => SigmaFormula::Rms,
        }
    }
}

/// Labeled data source shared by train/tune/qtune/evaluate: a delimited
/// text file or a stack of image planes, optional feature selection, and an
/// optional stratified train/test split.
#[derive(Args)]
struct DataArgs {
    /// Delimited text dataset with an integer label column
    #[arg(long, value_name = "FILE")]
    data: Option<PathBuf>,
    /// Field delimiter for text datasets
    #[arg(long, value_enum, default_value_t = DelimiterArg::Auto)]
    delimiter: DelimiterArg,
    /// Zero-based label column (default: last)
    #[arg(long, value_name = "COL")]
    label_column: Option<usize>,
    /// Per-band image planes, comma separated
    #[arg(long, value_delimiter = ',', value_name = "FILES")]
    image_bands: Vec<PathBuf>,
    /// Label plane matching the band planes
    #[arg(long, value_name = "FILE")]
    image_labels: Option<PathBuf>,
    /// Image width in pixels (with --image-bands)
    #[arg(long, value_name = "W")]
    width: Option<usize>,
    /// Image height in pixels (with --image-bands)
    #[arg(long, value_name = "H")]
    height: Option<usize>,
    /// Plane encoding: auto picks u8 when the file size matches WxH
    #[arg(long, value_enum, default_value_t = PlaneFormatArg::Auto)]
    plane_format: PlaneFormatArg,
    /// Zero-based feature columns to keep, comma separated
    #[arg(long, value_delimiter = ',', value_name = "COLS")]
    features: Vec<usize>,
    /// Per-class training counts for a stratified split; the rest is test
    #[arg(long, value_delimiter = ',', value_name = "COUNTS")]
    train_counts: Vec<usize>,
    /// RNG seed for partitioning and map training
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        let ds = if !self.image_bands.is_empty() {
            let labels = self.image_labels.as_ref().ok_or_else(|| {
                Error::invalid("--image-labels is required with --image-bands")
            })?;
            load_image_planes(&self.image_bands, labels, self.layout()?, self.plane_format.into())?
        } else if let Some(path) = &self.data {
            load_dataset(path, self.delimiter.into(), self.label_column)?
        } else {
            return Err(Error::invalid("provide --data or --image-bands"));
        };
        if self.features.is_empty() {
            Ok(ds)
        } else {
            ds.select_features(&self.features)
        }
    }

    fn layout(&self) -> Result<ImageLayout> {
        match (self.width, self.height) {
            (Some(width), Some(height)) => Ok(ImageLayout { width, height }),
            _ => Err(Error::invalid("--width and --height are required with --image-bands")),
        }
    }

    /// Training split plus the held-out remainder when counts are given.
    fn load_split(&self) -> Result<(Dataset, Option<Dataset>)> {
        let ds = self.load()?;
        if self.train_counts.is_empty() {
            return Ok((ds, None));
        }
        let spec = PartitionSpec { train_counts: self.train_counts.clone(), seed: self.seed };
        let (train, test) = ds.stratified_partition(&spec)?;
        Ok((train, Some(test)))
    }

    fn echo(&self) {
        let source = if self.image_bands.is_empty() {
            self.data.as_deref().map(Path::display).map(|d| d.to_string()).unwrap_or_default()
        } else {
            format!(
                "{} bands + {}",
                self.image_bands.len(),
                self.image_labels.as_deref().map(Path::display).map(|d| d.to_string()).unwrap_or_default()
            )
        };
        println!(
            "config: data={source} features={} train-counts={} seed={}",
            join_list(&self.features),
            join_list(&self.train_counts),
            self.seed
        );
    }
}

fn join_list<T: std::fmt::Display>(v: &[T]) -> String {
    if v.is_empty() {
        "all".to_string()
    } else {
        v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
    }
}

/// Map-training and refinement knobs for commands that build prototypes.
#[derive(Args)]
struct TrainKnobs {
    /// Map training epochs (default: scales with map size over data size)
    #[arg(long)]
    epochs: Option<usize>,
    /// Initial map learning rate
    #[arg(long, default_value_t = 0.5)]
    alpha0: f64,
    /// Initial neighborhood width (default: half the node count)
    #[arg(long)]
    sigma0: Option<f64>,
    /// Initial hard update radius (default: half the node count)
    #[arg(long)]
    radius0: Option<f64>,
    /// Per-epoch learning-rate decay factor
    #[arg(long, default_value_t = 0.8)]
    alpha_decay: f64,
    /// Per-epoch neighborhood decay factor
    #[arg(long, default_value_t = 0.8)]
    sigma_decay: f64,
    /// Minimum samples a prototype must win (default: n/(10c))
    #[arg(long)]
    min_support: Option<usize>,
    /// Purity below which a prototype is split
    #[arg(long, default_value_t = 0.5)]
    purity: f64,
    /// Merge same-class prototypes closer than this times the mean spread
    #[arg(long, default_value_t = 0.5)]
    merge_factor: f64,
    /// Maximum delete/split/merge rounds
    #[arg(long, default_value_t = 10)]
    max_rounds: usize,
}

impl TrainKnobs {
    fn schedule(&self, m: usize, n: usize) -> SofmSchedule {
        let mut s = SofmSchedule::defaults(m, n);
        if let Some(e) = self.epochs {
            s.epochs = e;
        }
        s.alpha0 = self.alpha0;
        if let Some(v) = self.sigma0 {
            s.sigma0 = v;
        }
        if let Some(v) = self.radius0 {
            s.radius0 = v;
        }
        s.alpha_decay = self.alpha_decay;
        s.sigma_decay = self.sigma_decay;
        s
    }

    fn refine(&self, n: usize, c: usize) -> RefineConfig {
        let mut r = RefineConfig::defaults(n, c);
        if let Some(v) = self.min_support {
            r.min_support = v;
        }
        r.purity_threshold = self.purity;
        r.merge_distance_factor = self.merge_factor;
        r.max_rounds = self.max_rounds;
        r
    }

    fn echo(&self, schedule: &SofmSchedule, refine: &RefineConfig) {
        println!(
            "config: sofm epochs={} alpha0={} sigma0={} radius0={} alpha-decay={} sigma-decay={}",
            schedule.epochs,
            schedule.alpha0,
            schedule.sigma0,
            schedule.radius0,
            schedule.alpha_decay,
            schedule.sigma_decay
        );
        println!(
            "config: refine min-support={} purity={} merge-factor={} max-rounds={}",
            refine.min_support, refine.purity_threshold, refine.merge_distance_factor, refine.max_rounds
        );
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    knobs: TrainKnobs,
    /// Spread scale factor k_w
    #[arg(long, default_value_t = 5.0)]
    kw: f64,
    /// Spread formula: scaled = k_w*sqrt(sum d^2)/n, rms = k_w*sqrt(mean d^2)
    #[arg(long, value_enum, default_value_t = SigmaFormulaArg::Scaled)]
    sigma_formula: SigmaFormulaArg,
    /// Spread floor as a fraction of each feature's range
    #[arg(long, default_value_t = 1e-3)]
    sigma_floor_factor: f64,
    /// Initial exponent for every rule
    #[arg(long, default_value_t = -10.0)]
    q: f64,
    /// Conjunction stored in the rulebase
    #[arg(long, value_enum, default_value_t = TNormArg::Product)]
    tnorm: TNormArg,
    /// Outlier threshold: max firing below this refuses to classify
    #[arg(long, default_value_t = 0.01)]
    firing_threshold: f64,
    /// Output rulebase file
    #[arg(long, default_value = "rules.json")]
    out: PathBuf,
    /// Also dump prototypes as delimited text
    #[arg(long)]
    proto_out: Option<PathBuf>,
    /// Also write an evaluation report for the train (and test) split
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Input rulebase
    #[arg(long, value_name = "FILE")]
    rules: PathBuf,
    /// Conjunction to tune under
    #[arg(long, value_enum, default_value_t = TNormArg::Product)]
    tnorm: TNormArg,
    /// Center learning rate (default: 0.1 x squared mean feature range)
    #[arg(long)]
    eta_m: Option<f64>,
    /// Spread learning rate (default: same as --eta-m's default)
    #[arg(long)]
    eta_s: Option<f64>,
    /// Learning-rate reduction factor on rollback
    #[arg(long, default_value_t = 0.1)]
    eps_reduce: f64,
    /// Maximum tuning epochs
    #[arg(long, default_value_t = 200)]
    maxiter: usize,
    /// Spread floor as a fraction of each feature's range
    #[arg(long, default_value_t = 1e-3)]
    sigma_floor_factor: f64,
    /// Output rulebase file
    #[arg(long, default_value = "tuned.json")]
    out: PathBuf,
    /// Write the epoch trace as delimited text
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct QtuneArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Input rulebase
    #[arg(long, value_name = "FILE")]
    rules: PathBuf,
    /// Reset every rule to this exponent before tuning
    #[arg(long)]
    q: Option<f64>,
    /// Exponent learning rate
    #[arg(long, default_value_t = 500.0)]
    eta_q: f64,
    /// Learning-rate reduction factor on rollback
    #[arg(long, default_value_t = 0.1)]
    eps_reduce: f64,
    /// Maximum tuning epochs
    #[arg(long, default_value_t = 200)]
    maxiter: usize,
    /// Keep exponents at least this far from zero
    #[arg(long, default_value_t = 0.1)]
    q_min: f64,
    /// Use the descent sign for the wrong-class exponent update instead of
    /// the printed sign
    #[arg(long)]
    qtune_sign_corrected: bool,
    /// Output rulebase file
    #[arg(long, default_value = "qtuned.json")]
    out: PathBuf,
    /// Write the epoch trace as delimited text
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Rulebase to score
    #[arg(long, value_name = "FILE")]
    rules: PathBuf,
    /// Override the rulebase conjunction
    #[arg(long, value_enum)]
    tnorm: Option<TNormArg>,
    /// Override the rulebase outlier threshold
    #[arg(long)]
    firing_threshold: Option<f64>,
    /// Write the report here as well as stdout
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct ClassifyArgs {
    /// Rulebase to apply
    #[arg(long, value_name = "FILE")]
    rules: PathBuf,
    /// Delimited text rows to classify (labels, if present, are ignored)
    #[arg(long, value_name = "FILE")]
    data: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = DelimiterArg::Auto)]
    delimiter: DelimiterArg,
    /// Column to drop when the file still carries labels (default: last)
    #[arg(long, value_name = "COL")]
    label_column: Option<usize>,
    /// Zero-based feature columns to keep, comma separated
    #[arg(long, value_delimiter = ',', value_name = "COLS")]
    features: Vec<usize>,
    /// Per-band image planes, comma separated (no label plane needed)
    #[arg(long, value_delimiter = ',', value_name = "FILES")]
    image_bands: Vec<PathBuf>,
    /// Image width in pixels (with --image-bands)
    #[arg(long, value_name = "W")]
    width: Option<usize>,
    /// Image height in pixels (with --image-bands)
    #[arg(long, value_name = "H")]
    height: Option<usize>,
    /// Plane encoding: auto picks u8 when the file size matches WxH
    #[arg(long, value_enum, default_value_t = PlaneFormatArg::Auto)]
    plane_format: PlaneFormatArg,
    /// Override the rulebase conjunction
    #[arg(long, value_enum)]
    tnorm: Option<TNormArg>,
    /// Override the rulebase outlier threshold
    #[arg(long)]
    firing_threshold: Option<f64>,
    /// Predictions file (index, class, rule, firing)
    #[arg(long, default_value = "predictions.tsv")]
    out: PathBuf,
    /// Also write a gray-level class map of the given size
    #[arg(long, num_args = 2, value_names = ["W", "H"])]
    emit_map: Option<Vec<usize>>,
    /// Class map path (default: predictions path with .pgm extension)
    #[arg(long)]
    map_out: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    /// Print the rule table of a rulebase file
    #[arg(long, value_name = "FILE")]
    rules: Option<PathBuf>,
    /// Recompute and dump prototypes (needs the data flags)
    #[arg(long)]
    prototypes: bool,
    /// Train and dump the raw map grid (needs the data flags)
    #[arg(long)]
    grid: bool,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    knobs: TrainKnobs,
}

#[derive(Args)]
struct BenchArgs {
    /// Benchmark recipe name (only "satimage")
    recipe: String,
    /// Dataset file (36 gray features + raw class label per row)
    #[arg(long, default_value = "data/satimage.dat")]
    data: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Directory for rulebases, traces, and reports
    #[arg(long, default_value = "bench-out")]
    out_dir: PathBuf,
    /// Maximum tuning epochs
    #[arg(long, default_value_t = 200)]
    maxiter: usize,
    /// Also run the exponent tuner after context tuning
    #[arg(long)]
    qtune: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = match cli.cmd {
        Cmd::Train(a) => cmd_train(&a),
        Cmd::Tune(a) => cmd_tune(&a),
        Cmd::Qtune(a) => cmd_qtune(&a),
        Cmd::Evaluate(a) => cmd_evaluate(&a),
        Cmd::Classify(a) => cmd_classify(&a),
        Cmd::Inspect(a) => cmd_inspect(&a),
        Cmd::Bench(a) => cmd_bench(&a),
    };
    match run {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn split_confusions(
    rb: &RuleBase,
    train: Option<&Dataset>,
    test: Option<&Dataset>,
) -> Result<(Option<ConfusionMatrix>, Option<ConfusionMatrix>)> {
    let cm = |d: &Dataset| -> Result<ConfusionMatrix> {
        let results = classify_batch(rb, d)?;
        let labels: Vec<usize> = d.samples().iter().map(|s| s.y).collect();
        confusion_matrix(&results, &labels, d.c())
    };
    Ok((train.map(cm).transpose()?, test.map(cm).transpose()?))
}

fn print_split_errors(tag: &str, train: Option<&ConfusionMatrix>, test: Option<&ConfusionMatrix>) {
    for (name, cm) in [("train", train), ("test", test)] {
        if let Some(cm) = cm {
            let rate = cm.error_rate().unwrap_or(0.0);
            println!(
                "{tag}: {name} error {rate:.2}% ({}/{}), outliers {}",
                cm.total() - cm.correct(),
                cm.total(),
                cm.outliers()
            );
        }
    }
}

fn echo_label_map(data: &Dataset) {
    let map: Vec<String> = data
        .raw_labels()
        .iter()
        .enumerate()
        .map(|(k, raw)| format!("{k}->{raw}"))
        .collect();
    println!("config: label-map {}", map.join(" "));
}

fn train_prototypes(data: &Dataset, knobs: &TrainKnobs, seed: u64, echo: bool) -> Result<Refined> {
    let schedule = knobs.schedule(data.c(), data.len());
    let refine = knobs.refine(data.len(), data.c());
    if echo {
        knobs.echo(&schedule, &refine);
    }
    let mut rng = seeded_rng(seed);
    let refined = generate_prototypes(data, &refine, &schedule, &mut rng)?;
    if !refined.converged {
        println!(
            "note: refinement stopped after {} rounds without meeting its thresholds",
            refined.rounds
        );
    }
    Ok(refined)
}

fn prototype_dump(refined: &Refined, data: &Dataset) -> String {
    let mut out = String::from("id\tclass\traw_label\tsupport\tpurity");
    let p = refined.prototypes.first().map_or(0, |pr| pr.center.len());
    for j in 0..p {
        out.push_str(&format!("\tcenter{j}"));
    }
    out.push('\n');
    for (i, proto) in refined.prototypes.iter().enumerate() {
        out.push_str(&format!(
            "{i}\t{}\t{}\t{}\t{}",
            proto.class,
            data.raw_labels()[proto.class],
            proto.support,
            proto.purity
        ));
        for v in &proto.center {
            out.push_str(&format!("\t{v}"));
        }
        out.push('\n');
    }
    out
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    println!("somrules train");
    a.data.echo();
    println!(
        "config: kw={} sigma-formula={} sigma-floor-factor={} q={} tnorm={} firing-threshold={}",
        a.kw,
        match a.sigma_formula {
            SigmaFormulaArg::Scaled => "scaled",
            SigmaFormulaArg::Rms => "rms",
        },
        a.sigma_floor_factor,
        a.q,
        a.tnorm.name(),
        a.firing_threshold
    );
    let (train, test) = a.data.load_split()?;
    echo_label_map(&train);
    println!("data: {} training samples, {} features, {} classes", train.len(), train.p(), train.c());

    let refined = train_prototypes(&train, &a.knobs, a.data.seed, true)?;
    if let Some(path) = &a.proto_out {
        write_text(path, &prototype_dump(&refined, &train))?;
        println!("prototypes: wrote {}", path.display());
    }

    let gen_cfg = RuleGenConfig {
        k_w: a.kw,
        sigma_floor_factor: a.sigma_floor_factor,
        sigma_formula: a.sigma_formula.into(),
    };
    let mut rb = rules_from_prototypes(&refined.prototypes, &train, &gen_cfg)?;
    rb.tnorm = a.tnorm.into();
    if !(0.0..1.0).contains(&a.firing_threshold) {
        return Err(Error::invalid(format!(
            "firing threshold {} outside [0, 1)",
            a.firing_threshold
        )));
    }
    rb.firing_threshold = a.firing_threshold;
    rb.set_uniform_q(a.q)?;
    rb.validate()?;
    save_rulebase(&rb, &a.out)?;
    println!("rules: {} (saved to {})", rb.rules.len(), a.out.display());

    let (cm_train, cm_test) = split_confusions(&rb, Some(&train), test.as_ref())?;
    print_split_errors("initial", cm_train.as_ref(), cm_test.as_ref());
    if let Some(path) = &a.report {
        write_text(path, &render_report(&rb, cm_train.as_ref(), cm_test.as_ref()))?;
        println!("report: wrote {}", path.display());
    }
    Ok(())
}

fn cmd_tune(a: &TuneArgs) -> Result<()> {
    println!("somrules tune");
    a.data.echo();
    println!(
        "config: rules={} tnorm={} eta-m={} eta-s={} eps-reduce={} maxiter={} sigma-floor-factor={}",
        a.rules.display(),
        a.tnorm.name(),
        a.eta_m.map_or("auto".into(), |v| v.to_string()),
        a.eta_s.map_or("auto".into(), |v| v.to_string()),
        a.eps_reduce,
        a.maxiter,
        a.sigma_floor_factor
    );
    let (train, test) = a.data.load_split()?;
    let rb = load_rulebase(&a.rules)?;
    let mut cfg = TuningConfig::defaults(a.tnorm.into());
    cfg.eta_m = a.eta_m;
    cfg.eta_s = a.eta_s;
    cfg.eps_reduce = a.eps_reduce;
    cfg.maxiter = a.maxiter;
    cfg.sigma_floor_factor = a.sigma_floor_factor;
    let (em, es) = cfg.resolve_rates(&train)?;
    println!("config: resolved eta-m={em} eta-s={es}");

    let (tuned, trace) = context_tune(&rb, &train, &cfg)?;
    let rollbacks = trace.records.iter().filter(|r| r.rolled_back).count();
    println!(
        "tuned: E {} -> {}, misclassified {} -> {}, {} epochs ({} rolled back)",
        trace.initial_error,
        error_e(&tuned, &train)?,
        trace.initial_misclassified,
        misclassification_count(&tuned, &train)?,
        trace.records.len(),
        rollbacks
    );
    save_rulebase(&tuned, &a.out)?;
    println!("rules: saved to {}", a.out.display());
    if let Some(path) = &a.trace {
        write_text(path, &trace.to_delimited())?;
        println!("trace: wrote {}", path.display());
    }
    let (cm_train, cm_test) = split_confusions(&tuned, Some(&train), test.as_ref())?;
    print_split_errors("tuned", cm_train.as_ref(), cm_test.as_ref());
    Ok(())
}

fn cmd_qtune(a: &QtuneArgs) -> Result<()> {
    println!("somrules qtune");
    a.data.echo();
    println!(
        "config: rules={} q={} eta-q={} eps-reduce={} maxiter={} q-min={} sign-corrected={}",
        a.rules.display(),
        a.q.map_or("keep".into(), |v| v.to_string()),
        a.eta_q,
        a.eps_reduce,
        a.maxiter,
        a.q_min,
        a.qtune_sign_corrected
    );
    let (train, test) = a.data.load_split()?;
    let mut rb = load_rulebase(&a.rules)?;
    if let Some(q) = a.q {
        rb.set_uniform_q(q)?;
    }
    let mut cfg = TuningConfig::defaults(TNorm::Softmin);
    cfg.eta_q = a.eta_q;
    cfg.eps_reduce = a.eps_reduce;
    cfg.maxiter = a.maxiter;
    cfg.q_min = a.q_min;
    cfg.qtune_sign_corrected = a.qtune_sign_corrected;

    let (tuned, trace) = q_tune(&rb, &train, &cfg)?;
    let rollbacks = trace.records.iter().filter(|r| r.rolled_back).count();
    let negative = tuned.rules.iter().filter(|r| r.q < 0.0).count();
    println!(
        "tuned: E {} -> {}, {} epochs ({} rolled back), {}/{} rules with q < 0",
        trace.initial_error,
        error_e(&tuned, &train)?,
        trace.records.len(),
        rollbacks,
        negative,
        tuned.rules.len()
    );
    save_rulebase(&tuned, &a.out)?;
    println!("rules: saved to {}", a.out.display());
    if let Some(path) = &a.trace {
        write_text(path, &trace.to_delimited())?;
        println!("trace: wrote {}", path.display());
    }
    let (cm_train, cm_test) = split_confusions(&tuned, Some(&train), test.as_ref())?;
    print_split_errors("tuned", cm_train.as_ref(), cm_test.as_ref());
    Ok(())
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    println!("somrules evaluate");
    a.data.echo();
    println!("config: rules={}", a.rules.display());
    let (first, second) = a.data.load_split().map_err(|e| match e {
        Error::Parse { path, line, message } if message.contains("label") => Error::Parse {
            path,
            line,
            message: format!("{message}; for unlabeled data use `somrules classify`"),
        },
        e => e,
    })?;
    echo_label_map(&first);
    let mut rb = load_rulebase(&a.rules)?;
    if let Some(t) = a.tnorm {
        rb.tnorm = t.into();
    }
    if let Some(f) = a.firing_threshold {
        rb.firing_threshold = f;
        rb.validate()?;
    }
    // without a split the whole file scores as the test section
    let (train, test) = match &second {
        Some(test) => (Some(&first), Some(test)),
        None => (None, Some(&first)),
    };
    let (cm_train, cm_test) = split_confusions(&rb, train, test)?;
    let report = render_report(&rb, cm_train.as_ref(), cm_test.as_ref());
    print!("{report}");
    if let Some(path) = &a.report {
        write_text(path, &report)?;
        println!("report: wrote {}", path.display());
    }
    Ok(())
}

/// Feature rows for classification from either a text matrix or band
/// planes. Text rows may carry a label column, which is dropped.
fn classify_inputs(a: &ClassifyArgs, p: usize) -> Result<(Vec<Vec<f64>>, Option<ImageLayout>)> {
    if !a.image_bands.is_empty() {
        let layout = match (a.width, a.height) {
            (Some(width), Some(height)) => ImageLayout { width, height },
            _ => {
                return Err(Error::invalid("--width and --height are required with --image-bands"))
            }
        };
        let rows = load_feature_planes(&a.image_bands, layout, a.plane_format.into())?;
        return Ok((rows, Some(layout)));
    }
    let path = a
        .data
        .as_ref()
        .ok_or_else(|| Error::invalid("provide --data or --image-bands"))?;
    let (rows, w) = load_unlabeled(path, a.delimiter.into())?;
    let rows = if !a.features.is_empty() {
        select_columns(rows, &a.features, w)?
    } else if w == p {
        rows
    } else if w == p + 1 {
        let drop = a.label_column.unwrap_or(w - 1);
        if drop >= w {
            return Err(Error::invalid(format!("label column {drop} out of range for {w} fields")));
        }
        println!("note: dropping column {drop} as the label column");
        rows.into_iter()
            .map(|r| {
                r.into_iter()
                    .enumerate()
                    .filter_map(|(i, v)| (i != drop).then_some(v))
                    .collect()
            })
            .collect()
    } else {
        return Err(Error::invalid(format!(
            "file has {w} columns but the rulebase expects {p} features; use --features"
        )));
    };
    Ok((rows, None))
}

fn select_columns(rows: Vec<Vec<f64>>, cols: &[usize], w: usize) -> Result<Vec<Vec<f64>>> {
    for &c in cols {
        if c >= w {
            return Err(Error::invalid(format!("feature column {c} out of range for {w} fields")));
        }
    }
    Ok(rows.iter().map(|r| cols.iter().map(|&c| r[c]).collect()).collect())
}

fn predictions_text(results: &[Classification]) -> String {
    let mut out = String::from("index\tclass\trule\tfiring\n");
    for (i, r) in results.iter().enumerate() {
        let class = match r.prediction {
            Prediction::Class(k) => k.to_string(),
            Prediction::Outlier => "outlier".to_string(),
        };
        out.push_str(&format!("{i}\t{class}\t{}\t{}\n", r.rule_id, r.firing));
    }
    out
}

fn cmd_classify(a: &ClassifyArgs) -> Result<()> {
    println!("somrules classify");
    println!(
        "config: rules={} out={} features={}",
        a.rules.display(),
        a.out.display(),
        join_list(&a.features)
    );
    let mut rb = load_rulebase(&a.rules)?;
    if let Some(t) = a.tnorm {
        rb.tnorm = t.into();
    }
    if let Some(f) = a.firing_threshold {
        rb.firing_threshold = f;
        rb.validate()?;
    }
    let (rows, input_layout) = classify_inputs(a, rb.p)?;
    let results = classify_features(&rb, &rows)?;
    let outliers = results.iter().filter(|r| r.prediction == Prediction::Outlier).count();
    println!("classified: {} rows, {} outliers", results.len(), outliers);
    write_text(&a.out, &predictions_text(&results))?;
    println!("predictions: wrote {}", a.out.display());

    let map_layout = match &a.emit_map {
        Some(dims) => Some(ImageLayout { width: dims[0], height: dims[1] }),
        None => input_layout.filter(|_| a.map_out.is_some()),
    };
    if let Some(layout) = map_layout {
        let map_path = a.map_out.clone().unwrap_or_else(|| a.out.with_extension("pgm"));
        write_classified_pgm(&map_path, &results, layout, rb.c, None)?;
        println!("map: wrote {} and its legend", map_path.display());
    }
    Ok(())
}

fn cmd_inspect(a: &InspectArgs) -> Result<()> {
    if a.rules.is_none() && !a.prototypes && !a.grid {
        return Err(Error::invalid("inspect needs --rules, --prototypes, or --grid"));
    }
    if let Some(path) = &a.rules {
        let rb = load_rulebase(path)?;
        println!(
            "rulebase: {} rules, {} features, {} classes, tnorm={}, firing-threshold={}, k_w={}",
            rb.rules.len(),
            rb.p,
            rb.c,
            rb.tnorm,
            rb.firing_threshold,
            rb.k_w
        );
        let mut header = String::from("id\tclass\tq");
        for j in 0..rb.p {
            header.push_str(&format!("\tcenter{j}\tsigma{j}"));
        }
        println!("{header}");
        for r in &rb.rules {
            let mut line = format!("{}\t{}\t{}", r.id, r.class, r.q);
            for cl in &r.clauses {
                line.push_str(&format!("\t{}\t{}", cl.center, cl.sigma));
            }
            println!("{line}");
        }
    }
    if a.prototypes || a.grid {
        let (train, _) = a.data.load_split()?;
        if a.grid {
            let schedule = a.knobs.schedule(train.c(), train.len());
            let mut rng = seeded_rng(a.data.seed);
            let grid = init_sofm(train.c(), &train, &mut rng)?;
            let grid = train_sofm(&grid, &train, &schedule, &mut rng)?;
            let mut header = String::from("node");
            for j in 0..train.p() {
                header.push_str(&format!("\tw{j}"));
            }
            println!("{header}");
            for (i, w) in grid.weights.iter().enumerate() {
                let mut line = i.to_string();
                for v in w {
                    line.push_str(&format!("\t{v}"));
                }
                println!("{line}");
            }
        }
        if a.prototypes {
            let refined = train_prototypes(&train, &a.knobs, a.data.seed, false)?;
            print!("{}", prototype_dump(&refined, &train));
        }
    }
    Ok(())
}

fn cmd_bench(a: &BenchArgs) -> Result<()> {
    if a.recipe != "satimage" {
        return Err(Error::invalid(format!(
            "unknown bench recipe '{}' (only 'satimage')",
            a.recipe
        )));
    }
    println!("somrules bench satimage");
    println!(
        "config: data={} seed={} out-dir={} maxiter={}",
        a.data.display(),
        a.seed,
        a.out_dir.display(),
        a.maxiter
    );
    fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    let started = Instant::now();

    // the published protocol: center-pixel bands, fixed per-class counts
    let features = vec![16, 17, 18, 19];
    let counts = vec![104, 68, 108, 47, 58, 115];
    println!(
        "config: features={} train-counts={}",
        join_list(&features),
        join_list(&counts)
    );
    let ds = load_dataset(&a.data, Delimiter::Auto, None)?.select_features(&features)?;
    let (train, test) = ds
        .stratified_partition(&PartitionSpec { train_counts: counts, seed: a.seed })?;
    echo_label_map(&train);
    println!("data: {} train / {} test", train.len(), test.len());

    // Recipe hyperparameters: min-support 4 keeps the rarest class (47 train
    // samples) splittable, and the rms spread formula keeps rule widths
    // proportional to cluster extent regardless of cluster size.
    let knobs = TrainKnobs {
        epochs: None,
        alpha0: 0.5,
        sigma0: None,
        radius0: None,
        alpha_decay: 0.8,
        sigma_decay: 0.8,
        min_support: Some(4),
        purity: 0.5,
        merge_factor: 0.5,
        max_rounds: 10,
    };
    let gen_cfg = RuleGenConfig { sigma_formula: SigmaFormula::Rms, ..RuleGenConfig::default() };
    println!("config: min-support=4 sigma-formula=rms kw={}", gen_cfg.k_w);
    let refined = train_prototypes(&train, &knobs, a.seed, true)?;
    let rb = rules_from_prototypes(&refined.prototypes, &train, &gen_cfg)?;
    save_rulebase(&rb, &a.out_dir.join("initial.json"))?;
    println!("rules: {}", rb.rules.len());
    let (cm_train, cm_test) = split_confusions(&rb, Some(&train), Some(&test))?;
    print_split_errors("initial", cm_train.as_ref(), cm_test.as_ref());

    for tnorm in [TNormArg::Product, TNormArg::Softmin] {
        let mut cfg = TuningConfig::defaults(tnorm.into());
        cfg.maxiter = a.maxiter;
        let (tuned, trace) = context_tune(&rb, &train, &cfg)?;
        let name = tnorm.name();
        save_rulebase(&tuned, &a.out_dir.join(format!("tuned-{name}.json")))?;
        write_text(&a.out_dir.join(format!("trace-{name}.tsv")), &trace.to_delimited())?;
        let (cm_train, cm_test) = split_confusions(&tuned, Some(&train), Some(&test))?;
        write_text(
            &a.out_dir.join(format!("report-{name}.txt")),
            &render_report(&tuned, cm_train.as_ref(), cm_test.as_ref()),
        )?;
        println!(
            "{name}: E {} -> {} in {} epochs",
            trace.initial_error,
            trace.accepted_errors().last().copied().unwrap_or(trace.initial_error),
            trace.records.len()
        );
        print_split_errors(name, cm_train.as_ref(), cm_test.as_ref());

        if a.qtune && tnorm == TNormArg::Softmin {
            let mut qcfg = TuningConfig::defaults(TNorm::Softmin);
            qcfg.maxiter = a.maxiter;
            qcfg.qtune_sign_corrected = true;
            for start in [-10.0, 1.0, 5.0] {
                let mut rb_q = tuned.clone();
                rb_q.set_uniform_q(start)?;
                let (qt, qtrace) = q_tune(&rb_q, &train, &qcfg)?;
                let negative = qt.rules.iter().filter(|r| r.q < 0.0).count();
                let (cm_tr, cm_te) = split_confusions(&qt, Some(&train), Some(&test))?;
                println!(
                    "qtune(q0={start}): E {} -> {}, {}/{} rules q<0",
                    qtrace.initial_error,
                    qtrace.accepted_errors().last().copied().unwrap_or(qtrace.initial_error),
                    negative,
                    qt.rules.len()
                );
                print_split_errors(&format!("qtune(q0={start})"), cm_tr.as_ref(), cm_te.as_ref());
                save_rulebase(&qt, &a.out_dir.join(format!("qtuned-{start}.json")))?;
            }
        }
    }
    println!("bench: finished in {:.1}s", started.elapsed().as_secs_f64());
    Ok(())
}
