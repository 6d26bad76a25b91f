//! The `mplr` command line: `stats`, `indicators`, `train`, `eval` and `rules`.
//!
//! Settings come from defaults, then an optional flat `key = value` config
//! file, then command-line flags. Every subcommand computes all of its outputs
//! before touching the output directory, refuses to replace existing files
//! unless `--overwrite` is set, and writes a `manifest_<command>.txt` echoing
//! the settings and conventions it ran with.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::indicators::{
    bifurcation, bifurcation_table, bifurcation_tsv, sample_subgraph, saturation_cost, saturation_report, DirectEdge,
};
use crate::kg::{load_dataset_dir, Dataset, Direction, GraphSource, KnowledgeGraph, LoadOptions};
use crate::model::{extract_rules, load_checkpoint, rules_table, rules_tsv, Checkpoint};
use crate::ops::build_operators;
use crate::train::{evaluate, hit_upper_bound, train, EvalReport, TrainConfig};

const CHECKPOINT_FILE: &str = "model.ckpt";
const EVAL_KS: [usize; 3] = [1, 3, 10];

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Lib(#[from] Error),

    #[error("saturation cost {cost:.3e} exceeds the budget {budget:.3e}; pass --sample N or --force")]
    Budget { cost: f64, budget: f64 },

    #[error("{0} already exists; pass --overwrite to replace it")]
    Exists(PathBuf),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Budget { .. } => 2,
            _ => 1,
        }
    }
}

/// Everything a subcommand may read, after merging defaults, the config file
/// and flags.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub dataset_dir: Option<PathBuf>,
    pub out: PathBuf,
    pub train: TrainConfig,
    pub graph_source: GraphSource,
    pub inverse_relations: bool,
    pub direct_edge: DirectEdge,
    /// Number of triples to sample before computing saturations.
    pub sample: Option<usize>,
    pub cost_budget: f64,
    /// Run full saturation even above `cost_budget`.
    pub force: bool,
    /// Saturation rows per predicate; rules per predicate.
    pub top_n: usize,
    pub lambda_max: usize,
    /// Restrict `rules` to one predicate name.
    pub predicate: Option<String>,
    pub checkpoint: Option<PathBuf>,
    pub overwrite: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset_dir: None,
            out: PathBuf::from("mplr-out"),
            train: TrainConfig::default(),
            graph_source: GraphSource::default(),
            inverse_relations: false,
            direct_edge: DirectEdge::Exclude,
            sample: None,
            cost_budget: 1e10,
            force: false,
            top_n: 10,
            lambda_max: 7,
            predicate: None,
            checkpoint: None,
            overwrite: false,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("bad value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::InvalidArgument(format!("bad value `{value}` for `{key}`"))),
    }
}

fn parse_graph_source(value: &str) -> Result<GraphSource> {
    let mut source = GraphSource {
        train: false,
        valid: false,
        test: false,
    };
    for part in value.split('+') {
        match part.trim() {
            "train" => source.train = true,
            "valid" => source.valid = true,
            "test" => source.test = true,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "graph_source parts are train, valid and test, got `{other}`"
                )))
            }
        }
    }
    if !source.train {
        return Err(Error::InvalidArgument("graph_source must include train".into()));
    }
    Ok(source)
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "dataset_dir" => self.dataset_dir = Some(PathBuf::from(value)),
            "out" => self.out = PathBuf::from(value),
            "graph_source" => self.graph_source = parse_graph_source(value)?,
            "inverse_relations" => self.inverse_relations = parse_bool(key, value)?,
            "direct_edge" => self.direct_edge = value.parse()?,
            "sample" => self.sample = Some(parse(key, value)?),
            "cost_budget" => self.cost_budget = parse(key, value)?,
            "force" => self.force = parse_bool(key, value)?,
            "top_n" => self.top_n = parse(key, value)?,
            "lambda_max" => self.lambda_max = parse(key, value)?,
            "predicate" => self.predicate = Some(value.to_string()),
            "checkpoint" => self.checkpoint = Some(PathBuf::from(value)),
            "overwrite" => self.overwrite = parse_bool(key, value)?,
            other => self.train.set(other, value)?,
        }
        Ok(())
    }

    /// Applies a flat `key = value` file; `#` starts a comment.
    pub fn apply_config_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidArgument(format!("{}:{}: expected `key = value`", origin.display(), i + 1))
            })?;
            self.set(key, value)
                .map_err(|e| Error::InvalidArgument(format!("{}:{}: {e}", origin.display(), i + 1)))?;
        }
        Ok(())
    }

    pub fn to_map(&self) -> BTreeMap<String, String> {
        let mut map = self.train.to_map();
        let opt = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        map.insert("dataset_dir".into(), opt(&self.dataset_dir));
        map.insert("out".into(), self.out.display().to_string());
        map.insert("graph_source".into(), self.graph_source.describe());
        map.insert("inverse_relations".into(), self.inverse_relations.to_string());
        map.insert("direct_edge".into(), self.direct_edge.as_str().into());
        map.insert("sample".into(), self.sample.map(|s| s.to_string()).unwrap_or_default());
        map.insert("cost_budget".into(), self.cost_budget.to_string());
        map.insert("force".into(), self.force.to_string());
        map.insert("top_n".into(), self.top_n.to_string());
        map.insert("lambda_max".into(), self.lambda_max.to_string());
        map.insert("predicate".into(), self.predicate.clone().unwrap_or_default());
        map.insert("checkpoint".into(), opt(&self.checkpoint));
        map.insert("overwrite".into(), self.overwrite.to_string());
        map
    }

    fn load_options(&self) -> LoadOptions {
        LoadOptions {
            graph_source: self.graph_source,
            inverse_relations: self.inverse_relations,
        }
    }

    fn load(&self) -> Result<Dataset> {
        let dir = self
            .dataset_dir
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("no dataset directory; pass --dataset-dir".into()))?;
        load_dataset_dir(dir, &self.load_options())
    }

    fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint
            .clone()
            .unwrap_or_else(|| self.out.join(CHECKPOINT_FILE))
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "mplr",
    version,
    about = "Multi-target differentiable rule learning over knowledge graphs"
)]
pub struct Cli {
    #[command(flatten)]
    pub flags: Flags,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Dataset sizes and per-predicate degree statistics.
    Stats,
    /// Saturation and bifurcation reports.
    Indicators,
    /// Train a model and save the best-validation checkpoint.
    Train,
    /// Link-prediction metrics of a checkpoint on the test split.
    Eval,
    /// Ranked rules extracted from a checkpoint.
    Rules,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Stats => "stats",
            Command::Indicators => "indicators",
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Rules => "rules",
        }
    }
}

#[derive(Debug, Args, Default)]
pub struct Flags {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory holding train.txt, valid.txt and test.txt.
    #[arg(long, global = true)]
    pub dataset_dir: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub max_rule_len: Option<usize>,
    #[arg(long, global = true)]
    pub rank: Option<usize>,
    /// Saturations on a uniform sample of this many triples.
    #[arg(long, global = true)]
    pub sample: Option<usize>,
    /// `exclude` or `include`.
    #[arg(long, global = true)]
    pub direct_edge: Option<String>,
    /// `corrected` or `literal`.
    #[arg(long, global = true)]
    pub epsilon_mode: Option<String>,
    /// `l1`, `l2` or `none`.
    #[arg(long, global = true)]
    pub normalization: Option<String>,
    #[arg(long, global = true)]
    pub max_epochs: Option<usize>,
    #[arg(long, global = true)]
    pub patience: Option<usize>,
    #[arg(long, global = true)]
    pub top_n: Option<usize>,
    #[arg(long, global = true)]
    pub lambda_max: Option<usize>,
    /// Only this predicate (rules).
    #[arg(long, global = true)]
    pub predicate: Option<String>,
    /// Checkpoint read by `eval` and `rules`; defaults to `<out>/model.ckpt`.
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    /// Run full saturation above the cost budget.
    #[arg(long, global = true)]
    pub force: bool,
    /// Replace existing output files.
    #[arg(long, global = true)]
    pub overwrite: bool,
    /// Any config key, e.g. `--set learning_rate=0.005`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl Flags {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            cfg.apply_config_text(&text, path)?;
        }
        for kv in &self.set {
            let (key, value) = kv
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            cfg.set(key, value)?;
        }
        let paths = [
            ("dataset_dir", self.dataset_dir.as_ref()),
            ("out", self.out.as_ref()),
            ("checkpoint", self.checkpoint.as_ref()),
        ];
        for (key, value) in paths {
            if let Some(v) = value {
                cfg.set(key, &v.to_string_lossy())?;
            }
        }
        let values = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("max_rule_len", self.max_rule_len.map(|v| v.to_string())),
            ("rank", self.rank.map(|v| v.to_string())),
            ("sample", self.sample.map(|v| v.to_string())),
            ("direct_edge", self.direct_edge.clone()),
            ("epsilon_mode", self.epsilon_mode.clone()),
            ("normalization", self.normalization.clone()),
            ("max_epochs", self.max_epochs.map(|v| v.to_string())),
            ("patience", self.patience.map(|v| v.to_string())),
            ("top_n", self.top_n.map(|v| v.to_string())),
            ("lambda_max", self.lambda_max.map(|v| v.to_string())),
            ("predicate", self.predicate.clone()),
        ];
        for (key, value) in values {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        if self.force {
            cfg.force = true;
        }
        if self.overwrite {
            cfg.overwrite = true;
        }
        Ok(cfg)
    }
}

/// Files produced by one subcommand, written together at the end.
struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    fn new() -> Self {
        Outputs { files: Vec::new() }
    }

    fn add(&mut self, name: &str, content: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), content.into()));
    }

    fn write(self, dir: &Path, overwrite: bool) -> std::result::Result<Vec<PathBuf>, CliError> {
        let paths: Vec<PathBuf> = self.files.iter().map(|(n, _)| dir.join(n)).collect();
        if !overwrite {
            if let Some(p) = paths.iter().find(|p| p.exists()) {
                return Err(CliError::Exists(p.clone()));
            }
        }
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (path, (_, content)) in paths.iter().zip(&self.files) {
            fs::write(path, content).map_err(|e| Error::io(path, e))?;
        }
        Ok(paths)
    }
}

fn manifest(command: Command, cfg: &RunConfig, extra: &[(&str, String)], files: &[&str]) -> String {
    let mut out = format!(
        "command = {}\nversion = {}\n",
        command.name(),
        env!("CARGO_PKG_VERSION")
    );
    for (k, v) in cfg.to_map() {
        let _ = writeln!(out, "{k} = {v}");
    }
    for (k, v) in extra {
        let _ = writeln!(out, "{k} = {v}");
    }
    let _ = writeln!(out, "files = {}", files.join(", "));
    out
}

/// Runs one parsed invocation and returns the written paths.
pub fn run(cli: &Cli) -> std::result::Result<Vec<PathBuf>, CliError> {
    let cfg = cli.flags.resolve()?;
    let outputs = match cli.command {
        Command::Stats => cmd_stats(&cfg)?,
        Command::Indicators => cmd_indicators(&cfg)?,
        Command::Train => cmd_train(&cfg)?,
        Command::Eval => cmd_eval(&cfg)?,
        Command::Rules => cmd_rules(&cfg)?,
    };
    outputs.write(&cfg.out, cfg.overwrite)
}

/// Entry point for the binary.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(paths) => {
            for p in paths {
                eprintln!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn stats_tsv(kg: &KnowledgeGraph) -> String {
    let mut out = String::from(
        "predicate\ttriples\theads\ttails\tmean_fw_degree\tmax_fw_degree\tmean_bw_degree\tmax_bw_degree\n",
    );
    for q in 0..kg.num_predicates() {
        let fw = kg.degree_table(q, Direction::Forward);
        let bw = kg.degree_table(q, Direction::Backward);
        let n = kg.predicate_count(q);
        let mean = |len: usize| if len == 0 { 0.0 } else { n as f64 / len as f64 };
        let _ = writeln!(
            out,
            "{}\t{n}\t{}\t{}\t{:.4}\t{}\t{:.4}\t{}",
            kg.predicate_name(q),
            fw.len(),
            bw.len(),
            mean(fw.len()),
            fw.values().max().copied().unwrap_or(0),
            mean(bw.len()),
            bw.values().max().copied().unwrap_or(0),
        );
    }
    out
}

fn cmd_stats(cfg: &RunConfig) -> std::result::Result<Outputs, CliError> {
    let data = cfg.load()?;
    let summary = data.summary.to_kv_text();
    let table = stats_tsv(&data.kg);
    print!("{summary}");
    let mut out = Outputs::new();
    out.add("summary.txt", summary);
    out.add("stats.tsv", table);
    out.add(
        "manifest_stats.txt",
        manifest(Command::Stats, cfg, &[], &["summary.txt", "stats.tsv"]),
    );
    Ok(out)
}

fn cmd_indicators(cfg: &RunConfig) -> std::result::Result<Outputs, CliError> {
    let data = cfg.load()?;
    let max_len = cfg.train.max_len;
    let kg = match cfg.sample {
        Some(n) => sample_subgraph(&data.kg, cfg.train.seed, n)?,
        None => {
            let cost = saturation_cost(&data.kg, max_len);
            if cost > cfg.cost_budget && !cfg.force {
                return Err(CliError::Budget {
                    cost,
                    budget: cfg.cost_budget,
                });
            }
            data.kg
        }
    };
    let report = saturation_report(&kg, max_len, cfg.top_n, cfg.direct_edge)?;
    let mut bifur = Vec::new();
    for q in (0..kg.num_predicates()).filter(|&q| kg.predicate_count(q) > 0) {
        for dir in [Direction::Forward, Direction::Backward] {
            bifur.push(bifurcation(&kg, q, dir, cfg.lambda_max.max(1))?);
        }
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let mut out = Outputs::new();
    out.add("saturation.tsv", report.to_tsv(&kg));
    out.add("saturation.txt", report.to_table(&kg));
    out.add("bifurcation.tsv", bifurcation_tsv(&kg, &bifur));
    out.add("bifurcation.txt", bifurcation_table(&kg, &bifur));
    let extra = [
        ("graph_triples_used", kg.len().to_string()),
        ("saturation_cost", format!("{:.6e}", saturation_cost(&kg, max_len))),
    ];
    out.add(
        "manifest_indicators.txt",
        manifest(
            Command::Indicators,
            cfg,
            &extra,
            &["saturation.tsv", "saturation.txt", "bifurcation.tsv", "bifurcation.txt"],
        ),
    );
    Ok(out)
}

fn cmd_train(cfg: &RunConfig) -> std::result::Result<Outputs, CliError> {
    let data = cfg.load()?;
    let ops = build_operators(&data.kg);
    let outcome = train(&ops, &data.splits.train, &data.splits.valid, &cfg.train, |e| {
        eprintln!(
            "epoch {:>4}  loss {:.6}  valid_mrr {}",
            e.epoch,
            e.train_loss,
            e.valid_mrr.map(|m| format!("{m:.4}")).unwrap_or_else(|| "-".into())
        );
    })?;
    let mut hyper = cfg.train.to_map();
    hyper.insert("graph_source".into(), cfg.graph_source.describe());
    hyper.insert("inverse_relations".into(), cfg.inverse_relations.to_string());
    let ckpt = Checkpoint {
        params: outcome.params.clone(),
        seed: cfg.train.seed,
        options: cfg.train.options,
        hyperparameters: hyper,
        predicates: data.kg.predicates().iter().cloned().collect(),
    };
    let mut out = Outputs::new();
    out.add(CHECKPOINT_FILE, ckpt.to_bytes());
    out.add("train_log.tsv", outcome.log_text());
    let extra = [
        ("best_epoch", outcome.best_epoch.to_string()),
        (
            "best_valid_mrr",
            outcome.best_valid_mrr.map(|m| m.to_string()).unwrap_or_default(),
        ),
    ];
    out.add(
        "manifest_train.txt",
        manifest(Command::Train, cfg, &extra, &[CHECKPOINT_FILE, "train_log.tsv"]),
    );
    Ok(out)
}

fn load_matching_checkpoint(cfg: &RunConfig, kg: &KnowledgeGraph) -> Result<Checkpoint> {
    let ckpt = load_checkpoint(cfg.checkpoint_path())?;
    let names: Vec<&str> = kg.predicates().iter().map(String::as_str).collect();
    if ckpt.predicates.iter().map(String::as_str).ne(names.iter().copied()) {
        return Err(Error::Checkpoint(
            "predicate vocabulary differs from the dataset; load with the same dataset and inverse_relations".into(),
        ));
    }
    Ok(ckpt)
}

fn upper_bounds_tsv(data: &Dataset, report: &EvalReport) -> Result<String> {
    let test_kg = data.kg.with_triples(data.splits.test.iter().copied())?;
    let lambda_max = EVAL_KS.iter().max().copied().unwrap_or(1) + 1;
    let mut out = String::from("predicate\tk\tmeasured_hit\tupper_bound\n");
    for (&q, metrics) in &report.per_predicate {
        let record = bifurcation(&test_kg, q, Direction::Forward, lambda_max)?;
        for &k in &EVAL_KS {
            let _ = writeln!(
                out,
                "{}\t{k}\t{}\t{}",
                data.kg.predicate_name(q),
                metrics.hit(k).unwrap_or(0.0),
                hit_upper_bound(&record, k)?
            );
        }
    }
    Ok(out)
}

fn cmd_eval(cfg: &RunConfig) -> std::result::Result<Outputs, CliError> {
    let data = cfg.load()?;
    let ckpt = load_matching_checkpoint(cfg, &data.kg)?;
    let ops = build_operators(&data.kg);
    let report = evaluate(&ops, &ckpt.params, ckpt.options, &data.splits.test, &EVAL_KS)?;
    let text = report.to_kv_text();
    print!("{text}");
    let mut out = Outputs::new();
    out.add("eval.txt", text);
    out.add("eval.tsv", report.to_tsv(&data.kg));
    out.add("upper_bounds.tsv", upper_bounds_tsv(&data, &report)?);
    let extra = [
        ("checkpoint_path", cfg.checkpoint_path().display().to_string()),
        ("model_epsilon_mode", ckpt.options.epsilon_mode.as_str().to_string()),
        ("model_normalization", ckpt.options.normalization.as_str().to_string()),
        ("model_seed", ckpt.seed.to_string()),
    ];
    out.add(
        "manifest_eval.txt",
        manifest(
            Command::Eval,
            cfg,
            &extra,
            &["eval.txt", "eval.tsv", "upper_bounds.tsv"],
        ),
    );
    Ok(out)
}

fn cmd_rules(cfg: &RunConfig) -> std::result::Result<Outputs, CliError> {
    let data = cfg.load()?;
    let ckpt = load_matching_checkpoint(cfg, &data.kg)?;
    let predicates: Vec<usize> = match &cfg.predicate {
        Some(name) => vec![data
            .kg
            .predicate_index(name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown predicate `{name}`")))?],
        None => (0..data.kg.num_predicates()).collect(),
    };
    let mut rules = Vec::new();
    for q in predicates {
        rules.extend(extract_rules(&ckpt.params, q, cfg.top_n)?);
    }
    let table = rules_table(&data.kg, &rules);
    print!("{table}");
    let mut out = Outputs::new();
    out.add("rules.tsv", rules_tsv(&data.kg, &rules));
    out.add("rules.txt", table);
    let extra = [("checkpoint_path", cfg.checkpoint_path().display().to_string())];
    out.add(
        "manifest_rules.txt",
        manifest(Command::Rules, cfg, &extra, &["rules.tsv", "rules.txt"]),
    );
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_text_then_flags() {
        let mut cfg = RunConfig::default();
        let text = "# comment\nrank = 2\nlearning_rate=0.01  # inline\n\ndirect_edge = include\ngraph_source = train\n";
        cfg.apply_config_text(text, Path::new("run.cfg")).unwrap();
        assert_eq!(cfg.train.rank, 2);
        assert_eq!(cfg.train.learning_rate, 0.01);
        assert_eq!(cfg.direct_edge, DirectEdge::Include);
        assert_eq!(cfg.graph_source, GraphSource::train_only());

        let flags = Flags {
            rank: Some(5),
            set: vec!["top_n=3".into()],
            ..Flags::default()
        };
        let merged = flags.resolve().unwrap();
        assert_eq!(merged.train.rank, 5);
        assert_eq!(merged.top_n, 3);
    }

    #[test]
    fn bad_config_lines_report_their_position() {
        let mut cfg = RunConfig::default();
        let err = cfg
            .apply_config_text("rank = 2\nnonsense\n", Path::new("x.cfg"))
            .unwrap_err();
        assert!(err.to_string().contains("x.cfg:2"), "{err}");
        let err = cfg.apply_config_text("colour = red\n", Path::new("x.cfg")).unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
    }

    #[test]
    fn map_round_trips_through_set() {
        let mut cfg = RunConfig::default();
        cfg.set("seed", "9").unwrap();
        cfg.set("sample", "100").unwrap();
        cfg.set("epsilon_mode", "literal").unwrap();
        let mut back = RunConfig::default();
        for (k, v) in cfg.to_map() {
            if !v.is_empty() {
                back.set(&k, &v).unwrap();
            }
        }
        assert_eq!(back.to_map(), cfg.to_map());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Budget { cost: 2.0, budget: 1.0 }.exit_code(), 2);
        assert_eq!(CliError::Lib(Error::EmptyTrainSplit).exit_code(), 1);
        assert_eq!(CliError::Exists(PathBuf::from("a")).exit_code(), 1);
    }
}
