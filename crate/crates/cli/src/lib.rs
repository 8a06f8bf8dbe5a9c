//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 disagreement
//! between the analytic certifier and the brute-force oracle.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use fcert::agreement::{compare, random_instance};
use fcert::attack::DEFAULT_FAR_SCALE;
use fcert::dataio::{load_dataset, report_to_csv, report_to_json, synth_gaussian, FeatureDataset, Prng, SynthConfig};
use fcert::eval::{attack_seed, predict_with};
use fcert::{
    attack, certify, class_distances, flip_check_distances, robust_score, run_benchmark, sample_episodes, AttackModel,
    AttackSpec, DistanceMetric, EvalConfig, FewShotConfig, Method, OracleConfig, Strategy,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_DISAGREEMENT: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "fcert", version, about = "Certified few-shot classification under support-set poisoning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Predict every sampled query with every method.
    Predict(EpisodeArgs),
    /// Certified poisoning size of every sampled query.
    Certify(CertifyArgs),
    /// Certified and empirical accuracy curves.
    Eval(EvalArgs),
    /// Attack every sampled query once and report the outcome.
    Attack(AttackArgs),
    /// Compare the analytic certifier with the exhaustive oracle.
    OracleCheck(OracleArgs),
    /// Write a synthetic Gaussian-cluster dataset.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AttackChoice {
    Individual,
    Group,
    Both,
}

impl AttackChoice {
    fn models(self) -> Vec<AttackModel> {
        match self {
            AttackChoice::Individual => vec![AttackModel::Individual],
            AttackChoice::Group => vec![AttackModel::Group],
            AttackChoice::Both => AttackModel::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Args)]
struct Output {
    /// Seed for every random choice.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write results here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EpisodeArgs {
    /// JSON Lines feature dataset.
    #[arg(long)]
    dataset: PathBuf,
    /// Classes per episode (C).
    #[arg(long, default_value_t = 5)]
    ways: usize,
    /// Support samples per class (K).
    #[arg(long, default_value_t = 5)]
    shots: usize,
    /// Distances trimmed from each end (K'); defaults to floor((K-1)/2).
    #[arg(long)]
    kprime: Option<usize>,
    #[arg(long, default_value_t = DistanceMetric::SquaredL2)]
    metric: DistanceMetric,
    /// Number of sampled episodes.
    #[arg(long, default_value_t = 20)]
    batches: usize,
    /// Queries per class in each episode.
    #[arg(long, default_value_t = 1)]
    queries: usize,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(flatten)]
    out: Output,
}

#[derive(Debug, Args)]
struct CertifyArgs {
    #[command(flatten)]
    episodes: EpisodeArgs,
    #[arg(long, value_enum, default_value_t = AttackChoice::Both)]
    attack: AttackChoice,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    episodes: EpisodeArgs,
    #[arg(long, value_enum, default_value_t = AttackChoice::Both)]
    attack: AttackChoice,
    #[arg(long, default_value_t = Strategy::FarPoint)]
    strategy: Strategy,
    /// Comma-separated subset of fcert, fcert-weighted, protonet, knn.
    #[arg(long, value_delimiter = ',', default_value = "fcert,fcert-weighted,protonet,knn")]
    methods: Vec<Method>,
    /// Neighbour count of the k-NN baseline; defaults to K.
    #[arg(long)]
    knn_k: Option<usize>,
}

#[derive(Debug, Args)]
struct AttackArgs {
    #[command(flatten)]
    episodes: EpisodeArgs,
    #[arg(long, value_enum, default_value_t = AttackChoice::Individual)]
    attack: AttackChoice,
    #[arg(long, default_value_t = Strategy::FarPoint)]
    strategy: Strategy,
    /// Poisoned samples (per class or in total); defaults to K'.
    #[arg(long)]
    budget: Option<usize>,
}

#[derive(Debug, Args)]
struct OracleArgs {
    /// Largest K of the random instances (at least 3).
    #[arg(long, default_value_t = 7)]
    max_k: usize,
    #[arg(long, default_value_t = 500)]
    instances: usize,
    /// Largest number of classes per instance (at least 2).
    #[arg(long, default_value_t = 4)]
    max_classes: usize,
    #[command(flatten)]
    out: Output,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 5)]
    classes: usize,
    #[arg(long, default_value_t = 20)]
    per_class: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 10.0)]
    separation: f64,
    #[arg(long, default_value_t = 0.1)]
    sigma: f64,
    #[command(flatten)]
    out: Output,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
    Disagreement(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Data(_) => EXIT_DATA,
            Failure::Disagreement(_) => EXIT_DISAGREEMENT,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Disagreement(m) => m,
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Classifies a library error raised while working on `context`.
fn fail(context: &str, err: fcert::Error) -> Failure {
    let msg = format!("{context}: {err}");
    match err {
        fcert::Error::InvalidConfig(_) | fcert::Error::BudgetTooLarge { .. } | fcert::Error::NeighborCount { .. } => {
            Failure::Usage(msg)
        }
        _ => Failure::Data(msg),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(stdout, "{text}");
                EXIT_OK
            };
        }
    };
    match dispatch(cli.command, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message());
            f.code()
        }
    }
}

fn dispatch(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    match command {
        Command::Predict(a) => predict_cmd(&a, stdout),
        Command::Certify(a) => certify_cmd(&a, stdout),
        Command::Eval(a) => eval_cmd(&a, stdout, stderr),
        Command::Attack(a) => attack_cmd(&a, stdout),
        Command::OracleCheck(a) => oracle_cmd(&a, stdout, stderr),
        Command::Synth(a) => synth_cmd(&a, stdout),
    }
}

fn emit(out: &Output, text: &str, stdout: &mut dyn Write) -> CliResult<()> {
    match &out.output {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| Failure::Data(format!("--output {}: {e}", path.display())))
        }
        None => stdout.write_all(text.as_bytes()).map_err(|e| Failure::Data(format!("standard output: {e}"))),
    }
}

impl EpisodeArgs {
    fn few_shot(&self) -> CliResult<FewShotConfig> {
        if self.ways < 2 {
            return Err(Failure::Usage(format!("--ways {} must be at least 2", self.ways)));
        }
        if self.shots == 0 {
            return Err(Failure::Usage("--shots must be at least 1".into()));
        }
        let max = FewShotConfig::max_trim(self.shots);
        let trim = self.kprime.unwrap_or(max);
        if trim > max {
            return Err(Failure::Usage(format!(
                "--kprime {trim} exceeds floor((K-1)/2) = {max} for --shots {}",
                self.shots
            )));
        }
        FewShotConfig::new(self.ways, self.shots, trim, self.metric).map_err(|e| fail("--kprime", e))
    }

    fn eval_config(&self) -> CliResult<EvalConfig> {
        let fs = self.few_shot()?;
        if self.batches == 0 {
            return Err(Failure::Usage("--batches must be at least 1".into()));
        }
        if self.queries == 0 {
            return Err(Failure::Usage("--queries must be at least 1".into()));
        }
        Ok(EvalConfig {
            batches: self.batches,
            ways: fs.ways(),
            shots: fs.shots(),
            queries_per_class: self.queries,
            trim: fs.trim(),
            metric: fs.metric(),
            seed: self.out.seed,
            methods: Method::ALL.to_vec(),
            attack_models: AttackModel::ALL.to_vec(),
            strategy: Strategy::FarPoint,
            knn_k: fs.shots(),
            far_scale: DEFAULT_FAR_SCALE,
        })
    }

    fn dataset(&self) -> CliResult<FeatureDataset> {
        load_dataset(&self.dataset).map_err(|e| Failure::Data(format!("--dataset: {e}")))
    }

    fn context(&self) -> String {
        format!("--dataset {}", self.dataset.display())
    }
}

fn load_episodes(a: &EpisodeArgs) -> CliResult<(FeatureDataset, EvalConfig, Vec<fcert::Episode64>)> {
    let cfg = a.eval_config()?;
    let dataset = a.dataset()?;
    let episodes = sample_episodes(&dataset, &cfg).map_err(|e| fail(&a.context(), e))?;
    Ok((dataset, cfg, episodes))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serialisable output");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct PredictionRow {
    episode: usize,
    query: usize,
    label: usize,
    method: Method,
    predicted: usize,
    correct: bool,
}

fn predict_cmd(a: &EpisodeArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let (_, cfg, episodes) = load_episodes(a)?;
    let fs = cfg.few_shot().map_err(|e| fail("--kprime", e))?;
    let mut rows = Vec::new();
    for (e, ep) in episodes.iter().enumerate() {
        for (q, (x, label)) in ep.queries().iter().enumerate() {
            for &method in &cfg.methods {
                let predicted = predict_with(method, ep, x, &fs, cfg.knn_k).map_err(|err| fail(&a.context(), err))?;
                rows.push(PredictionRow {
                    episode: e,
                    query: q,
                    label: *label,
                    method,
                    predicted,
                    correct: predicted == *label,
                });
            }
        }
    }
    let text = match a.format {
        Format::Json => to_json(&rows),
        Format::Csv => {
            let mut s = String::from("episode,query,label,method,predicted,correct\n");
            for r in &rows {
                let _ = writeln!(s, "{},{},{},{},{},{}", r.episode, r.query, r.label, r.method, r.predicted, r.correct);
            }
            s
        }
    };
    emit(&a.out, &text, stdout)
}

#[derive(Serialize)]
struct CertificateRow {
    episode: usize,
    query: usize,
    label: usize,
    predicted: usize,
    correct: bool,
    attack_model: AttackModel,
    certified_size: usize,
    tied_at_zero: bool,
}

fn certify_cmd(a: &CertifyArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let (_, cfg, episodes) = load_episodes(&a.episodes)?;
    let fs = cfg.few_shot().map_err(|e| fail("--kprime", e))?;
    let ctx = a.episodes.context();
    let mut rows = Vec::new();
    for (e, ep) in episodes.iter().enumerate() {
        for (q, (x, label)) in ep.queries().iter().enumerate() {
            let d = class_distances(ep, x, &fs).map_err(|err| fail(&ctx, err))?;
            let predicted = robust_score(&d, &fs).map_err(|err| fail(&ctx, err))?.argmin();
            for model in a.attack.models() {
                let cert = certify(&d, predicted, &fs, model).map_err(|err| fail(&ctx, err))?;
                rows.push(CertificateRow {
                    episode: e,
                    query: q,
                    label: *label,
                    predicted,
                    correct: predicted == *label,
                    attack_model: model,
                    certified_size: cert.certified_size,
                    tied_at_zero: cert.tied_at_zero,
                });
            }
        }
    }
    let text = match a.episodes.format {
        Format::Json => to_json(&rows),
        Format::Csv => {
            let mut s =
                String::from("episode,query,label,predicted,correct,attack_model,certified_size,tied_at_zero\n");
            for r in &rows {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{}",
                    r.episode,
                    r.query,
                    r.label,
                    r.predicted,
                    r.correct,
                    r.attack_model,
                    r.certified_size,
                    r.tied_at_zero
                );
            }
            s
        }
    };
    emit(&a.episodes.out, &text, stdout)
}

fn eval_cmd(a: &EvalArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    let mut cfg = a.episodes.eval_config()?;
    if a.methods.is_empty() {
        return Err(Failure::Usage("--methods must name at least one method".into()));
    }
    let mut methods = a.methods.clone();
    methods.sort();
    methods.dedup();
    cfg.methods = methods;
    cfg.attack_models = a.attack.models();
    cfg.strategy = a.strategy;
    cfg.knn_k = a.knn_k.unwrap_or(cfg.shots);
    if cfg.methods.contains(&Method::Knn) && (cfg.knn_k == 0 || cfg.knn_k > cfg.ways * cfg.shots) {
        return Err(Failure::Usage(format!("--knn-k {} must lie in 1..={} (C*K)", cfg.knn_k, cfg.ways * cfg.shots)));
    }
    let _ = writeln!(
        stderr,
        "config: ways={} shots={} kprime={} metric={} batches={} seed={}",
        cfg.ways, cfg.shots, cfg.trim, cfg.metric, cfg.batches, cfg.seed
    );
    let dataset = a.episodes.dataset()?;
    let report = run_benchmark(&dataset, &cfg).map_err(|e| fail(&a.episodes.context(), e))?;
    let text = match a.episodes.format {
        Format::Csv => report_to_csv(&report),
        Format::Json => report_to_json(&report),
    };
    emit(&a.episodes.out, &text, stdout)
}

#[derive(Serialize)]
struct AttackRow {
    episode: usize,
    query: usize,
    label: usize,
    attack_model: AttackModel,
    budget: usize,
    strategy: Strategy,
    clean: usize,
    attacked: usize,
    certified_size: usize,
    /// Whether the bound-attaining distance attack flips the prediction;
    /// absent when the budget exceeds K'.
    tightness_flip: Option<bool>,
}

fn attack_cmd(a: &AttackArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let (dataset, cfg, episodes) = load_episodes(&a.episodes)?;
    let fs = cfg.few_shot().map_err(|e| fail("--kprime", e))?;
    let budget = a.budget.unwrap_or(fs.trim());
    if budget > fs.shots() {
        return Err(Failure::Usage(format!("--budget {budget} exceeds --shots {}", fs.shots())));
    }
    let ctx = a.episodes.context();
    let diameter = dataset.diameter_bound();
    let mut rows = Vec::new();
    for (e, ep) in episodes.iter().enumerate() {
        for (q, (x, label)) in ep.queries().iter().enumerate() {
            let d = class_distances(ep, x, &fs).map_err(|err| fail(&ctx, err))?;
            let clean = robust_score(&d, &fs).map_err(|err| fail(&ctx, err))?.argmin();
            for model in a.attack.models() {
                let spec = AttackSpec::new(model, budget, a.strategy, attack_seed(cfg.seed, e, q, model, budget))
                    .with_metric(fs.metric())
                    .with_diameter(diameter);
                let poisoned = attack(ep, x, *label, &spec).map_err(|err| fail(&ctx, err))?;
                let attacked = fcert::fcert_predict(&poisoned, x, &fs).map_err(|err| fail(&ctx, err))?;
                let certified_size = certify(&d, clean, &fs, model).map_err(|err| fail(&ctx, err))?.certified_size;
                let tightness_flip = if budget <= fs.trim() {
                    Some(flip_check_distances(&d, clean, fs.trim(), model, budget).map_err(|err| fail(&ctx, err))?)
                } else {
                    None
                };
                rows.push(AttackRow {
                    episode: e,
                    query: q,
                    label: *label,
                    attack_model: model,
                    budget,
                    strategy: a.strategy,
                    clean,
                    attacked,
                    certified_size,
                    tightness_flip,
                });
            }
        }
    }
    let text = match a.episodes.format {
        Format::Json => to_json(&rows),
        Format::Csv => {
            let mut s = String::from(
                "episode,query,label,attack_model,T,strategy,clean_prediction,attacked_prediction,certified_size,tightness_flip\n",
            );
            for r in &rows {
                let flip = r.tightness_flip.map(|f| f.to_string()).unwrap_or_default();
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},{},{}",
                    r.episode,
                    r.query,
                    r.label,
                    r.attack_model,
                    r.budget,
                    r.strategy,
                    r.clean,
                    r.attacked,
                    r.certified_size,
                    flip
                );
            }
            s
        }
    };
    emit(&a.episodes.out, &text, stdout)
}

fn oracle_cmd(a: &OracleArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    if a.max_k < 3 {
        return Err(Failure::Usage(format!("--max-k {} must be at least 3", a.max_k)));
    }
    if a.max_classes < 2 {
        return Err(Failure::Usage(format!("--max-classes {} must be at least 2", a.max_classes)));
    }
    let cfg = OracleConfig { max_k: a.max_k, max_classes: a.max_classes, ..OracleConfig::default() };
    let mut rng = Prng::derive(a.out.seed, "oracle-check");
    let mut disagreements = 0usize;
    for i in 0..a.instances {
        let inst = random_instance(&mut rng, a.max_k, a.max_classes);
        let found = compare(&inst, &cfg).map_err(|e| fail(&format!("instance {i}"), e))?;
        for d in &found {
            let _ = writeln!(stderr, "instance {i}: {d}");
        }
        disagreements += found.len();
    }
    let summary = format!("{} instances, {disagreements} disagreements\n", a.instances);
    emit(&a.out, &summary, stdout)?;
    if disagreements > 0 {
        return Err(Failure::Disagreement(format!("{disagreements} disagreements with the oracle")));
    }
    Ok(())
}

fn synth_cmd(a: &SynthArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let cfg = SynthConfig {
        classes: a.classes,
        per_class: a.per_class,
        dim: a.dim,
        separation: a.separation,
        sigma: a.sigma,
        seed: a.out.seed,
    };
    let dataset =
        synth_gaussian(&cfg).map_err(|e| fail("synth (--classes/--per-class/--dim/--separation/--sigma)", e))?;
    emit(&a.out, &dataset.to_jsonl_string(), stdout)
}

/// Runs the binary's `main` logic against the process streams.
pub fn main_with_os_args() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
