//! The `winoprobe` command line.

use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use winoprobe_core::bridge::toy::ToyModel;
use winoprobe_core::bridge::Locator;
use winoprobe_core::perturb::perturb_dataset;
use winoprobe_core::pmi::{associativity_delta, dataset_divergence, PmiConfig, Scope};
use winoprobe_core::schema::{validate_pairs, Dataset, PerturbationKind, Severity};
use winoprobe_core::scoring::{batch_score, perturbed_scorables, scorables, Backend, Strategy};

use crate::adapter::{open_adapter, serve};
use crate::config::{MetricName, RunConfig};
use crate::dataset::{load_dataset, load_perturbed, read_instances, save_perturbed};
use crate::error::{Error, ExitStatus, Result};
use crate::lexicon;
use crate::pipeline::{self, Derived, Inputs};
use crate::pmi_file::{build_from_files, load_table_checked, save_table};
use crate::report::{fmt6, write_atomic, Cell, OutputLock, Table};
use crate::scores::{canonicalize, save_scores};

#[derive(Debug, Parser)]
#[command(name = "winoprobe", version, about = "Perturbation probes for Winograd-style coreference")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct Global {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// `builtin:toy[?layers=L&heads=H&hidden=D]` or `cmd:<program args>`.
    #[arg(long, global = true)]
    pub adapter: Option<String>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// mask_substitution, context_option or pmi_baseline; comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    pub strategy: Vec<Strategy>,
}

#[derive(Debug, Args, Default)]
pub struct RunArgs {
    /// Original dataset; required without --config.
    pub dataset: Option<PathBuf>,
    /// Perturbed files; all seven kinds are generated when none are given.
    #[arg(long)]
    pub perturbed: Vec<PathBuf>,
    /// Precomputed score files.
    #[arg(long)]
    pub scores: Vec<PathBuf>,
    #[arg(long)]
    pub pmi_table: Option<PathBuf>,
    /// Settings the PMI table was built with; default 200.
    #[arg(long)]
    pub min_count: Option<u64>,
    /// Default 6.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub no_dynamic: bool,
    #[arg(long)]
    pub no_positional: bool,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Add the human reference rows.
    #[arg(long)]
    pub human: bool,
    #[arg(long, value_delimiter = ',')]
    pub metrics: Vec<MetricName>,
}

#[derive(Debug, Args, Clone, Copy)]
pub struct PmiArgs {
    #[arg(long, default_value_t = PmiConfig::default().min_count)]
    pub min_count: u64,
    #[arg(long, default_value_t = PmiConfig::default().window)]
    pub window: usize,
    #[arg(long)]
    pub no_dynamic: bool,
    #[arg(long)]
    pub no_positional: bool,
}

impl PmiArgs {
    fn config(self) -> PmiConfig {
        PmiConfig { min_count: self.min_count, window: self.window, dynamic_windows: !self.no_dynamic, positional_contexts: !self.no_positional }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Variant {
    Original,
    Masked,
    MaskedSwitched,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a dataset or perturbed file.
    Validate {
        file: PathBuf,
        /// Original dataset, to check a perturbed file's origin links.
        #[arg(long)]
        origin: Option<PathBuf>,
    },
    /// Write perturbed files and a count summary.
    Perturb {
        dataset: PathBuf,
        /// A kind code (TEN, NUM, GEN, VC, RC, ADV, SYNNA) or `all`.
        #[arg(long, default_value = "all")]
        kind: String,
        #[arg(long)]
        lexicon: Option<PathBuf>,
    },
    /// Score one dataset (or perturbed file) into a score file.
    Score {
        dataset: PathBuf,
        /// Score this perturbed file of `dataset` instead.
        #[arg(long)]
        perturbed: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "original")]
        variant: Variant,
        #[arg(long)]
        pmi_table: Option<PathBuf>,
        #[command(flatten)]
        pmi: PmiArgs,
        /// Output file.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Score everything and write the metric report.
    Eval(RunArgs),
    /// Count a corpus (one document per line) into a table file.
    PmiBuild {
        #[arg(required = true)]
        corpus: Vec<PathBuf>,
        #[command(flatten)]
        pmi: PmiArgs,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Look up PMI values; refuses tables built with other settings.
    PmiQuery {
        table: PathBuf,
        word: String,
        context: String,
        #[arg(long)]
        offset: Option<i32>,
        #[command(flatten)]
        pmi: PmiArgs,
    },
    /// Per-instance associativity deltas and, with --perturbed, divergences.
    Assoc {
        dataset: PathBuf,
        #[arg(long)]
        pmi_table: PathBuf,
        #[arg(long)]
        perturbed: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "segment")]
        scope: ScopeArg,
        #[command(flatten)]
        pmi: PmiArgs,
    },
    /// Attention maps, head importance and masking curves.
    Attn(RunArgs),
    /// Rebuild the report from score files alone.
    Report(RunArgs),
    #[command(hide = true)]
    ServeToy {
        #[arg(long, default_value = "builtin:toy")]
        locator: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ScopeArg {
    Segment,
    Full,
}

impl From<ScopeArg> for Scope {
    fn from(s: ScopeArg) -> Self {
        match s {
            ScopeArg::Segment => Scope::Segment,
            ScopeArg::Full => Scope::Full,
        }
    }
}

/// Builds the run configuration from --config and the flags, flags winning.
pub fn run_config(g: &Global, a: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match (&g.config, &a.dataset) {
        (Some(p), _) => RunConfig::load(p)?,
        (None, Some(d)) => RunConfig::for_dataset(d.clone()),
        (None, None) => return Err(Error::Config("give a dataset or --config".into())),
    };
    if g.config.is_some() {
        if let Some(d) = &a.dataset {
            cfg.dataset = d.clone();
        }
    }
    if !a.perturbed.is_empty() {
        cfg.perturbed = a.perturbed.clone();
    }
    if !a.scores.is_empty() {
        cfg.scores = a.scores.clone();
    }
    if a.pmi_table.is_some() {
        cfg.pmi.table = a.pmi_table.clone();
    }
    if let Some(n) = a.min_count {
        cfg.pmi.config.min_count = n;
    }
    if let Some(w) = a.window {
        cfg.pmi.config.window = w;
    }
    if a.no_dynamic {
        cfg.pmi.config.dynamic_windows = false;
    }
    if a.no_positional {
        cfg.pmi.config.positional_contexts = false;
    }
    if a.lexicon.is_some() {
        cfg.lexicon = a.lexicon.clone();
    }
    if a.human {
        cfg.human_reference = true;
    }
    if !a.metrics.is_empty() {
        cfg.metrics = a.metrics.clone();
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if g.adapter.is_some() {
        cfg.adapter = g.adapter.clone();
    }
    if let Some(o) = &g.out {
        cfg.out = o.clone();
    }
    if !g.strategy.is_empty() {
        cfg.strategies = g.strategy.clone();
    }
    Ok(cfg)
}

fn print(out: &mut dyn Write, s: &str) -> Result<()> {
    out.write_all(s.as_bytes()).map_err(|e| Error::io("<stdout>", e))
}

fn validate(file: &Path, origin: Option<&Path>, out: &mut dyn Write) -> Result<ExitStatus> {
    let f = std::fs::File::open(file).map_err(|e| Error::io(file, e))?;
    let source = file.display().to_string();
    let (kind, records) = read_instances(BufReader::new(f), &source)?;
    let mut violations = Vec::new();
    let mut warnings = Vec::new();
    let mut valid = Vec::new();
    for (line, inst) in records {
        match inst.validate() {
            Ok(()) => valid.push(inst),
            Err(e) => violations.push(format!("{source}:{line}: {e}")),
        }
    }
    let n = valid.len() + violations.len();
    match Dataset::new(valid) {
        Ok(d) => {
            for issue in validate_pairs(&d) {
                let at = issue.position.map(|p| format!(" at token {p}")).unwrap_or_default();
                let msg = format!("pair {}{at}: {}", issue.pair_id, issue.message);
                match issue.severity {
                    Severity::Violation if kind.is_none() => violations.push(msg),
                    _ => warnings.push(msg),
                }
            }
        }
        Err(e) => violations.push(e.to_string()),
    }
    if let (Some(_), Some(o)) = (kind, origin) {
        let orig = load_dataset(o)?;
        if let Err(e) = load_perturbed(file, Some(&orig)) {
            violations.push(e.to_string());
        }
    }
    let what = kind.map_or("dataset".to_string(), |k| format!("perturbed ({k})"));
    let mut text = format!("{source}: {what}, {n} instances, {} warnings, {} violations\n", warnings.len(), violations.len());
    for w in &warnings {
        text.push_str(&format!("warning: {w}\n"));
    }
    for v in &violations {
        text.push_str(&format!("violation: {v}\n"));
    }
    print(out, &text)?;
    Ok(if violations.is_empty() { ExitStatus::Success } else { ExitStatus::Violations })
}

fn perturbed_path(dir: &Path, dataset: &Path, kind: PerturbationKind) -> PathBuf {
    let stem = dataset.file_stem().map_or("dataset".into(), |s| s.to_string_lossy().into_owned());
    dir.join(format!("{stem}.{}.jsonl", kind.suffix()))
}

fn perturb(g: &Global, dataset: &Path, kind: &str, lex_dir: Option<&Path>, out: &mut dyn Write) -> Result<ExitStatus> {
    let kinds: Vec<PerturbationKind> = if kind.eq_ignore_ascii_case("all") {
        PerturbationKind::ALL.to_vec()
    } else {
        vec![PerturbationKind::from_code(&kind.to_uppercase()).ok_or_else(|| Error::Config(format!("unknown perturbation kind {kind:?}")))?]
    };
    let d = load_dataset(dataset)?;
    let lex = lexicon::bundle(lex_dir)?;
    let seed = g.seed.unwrap_or(0);
    let dir = g.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let _lock = OutputLock::acquire(&dir)?;
    let mut t = Table::new(&["kind", "written", "skipped", "file"]);
    for k in kinds {
        let p = perturb_dataset(&d, k, &lex, seed);
        let path = perturbed_path(&dir, dataset, k);
        save_perturbed(&path, &p)?;
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        t.push(vec![k.code().into(), p.instances.len().into(), p.skipped.len().into(), name.into()]);
    }
    let fp = winoprobe_core::seed::fnv1a64(&crate::dataset::dataset_bytes(&d));
    let text = t.render(&format!("{fp:016x}"), seed);
    write_atomic(&dir.join("perturb_summary.tsv"), text.as_bytes())?;
    print(out, &text)?;
    Ok(ExitStatus::Success)
}

#[allow(clippy::too_many_arguments)]
fn score(
    g: &Global,
    dataset: &Path,
    perturbed: Option<&Path>,
    variant: Variant,
    table: Option<&Path>,
    pmi: PmiArgs,
    output: &Path,
    out: &mut dyn Write,
) -> Result<ExitStatus> {
    let strategy = match g.strategy.as_slice() {
        [] => Strategy::MaskSubstitution,
        [s] => *s,
        _ => return Err(Error::Config("score takes a single --strategy".into())),
    };
    let seed = g.seed.unwrap_or(0);
    let d = load_dataset(dataset)?;
    let pert = perturbed.map(|p| load_perturbed(p, Some(&d))).transpose()?;
    let derived = Derived::new(&d)?;
    let (name, items) = match (&pert, variant) {
        (Some(p), Variant::Original) => (p.kind.code().to_string(), perturbed_scorables(p)),
        (Some(_), _) => return Err(Error::Config("--variant applies to the original dataset only".into())),
        (None, Variant::Original) => (pipeline::ORIGINAL.to_string(), scorables(&d)),
        (None, Variant::Masked) => (pipeline::MASKED.to_string(), scorables(&derived.masked)),
        (None, Variant::MaskedSwitched) => (pipeline::MASKED_SWITCHED.to_string(), scorables(&derived.masked_switched)),
    };
    let mut opts = winoprobe_core::scoring::ScoreOptions::default();
    if let Some(c) = &g.config {
        opts = RunConfig::load(c)?.scoring;
    }
    let mut set = if strategy == Strategy::PmiBaseline {
        let path = table.ok_or_else(|| Error::Missing("pmi_baseline needs --pmi-table".into()))?;
        let t = load_table_checked(path, &pmi.config())?;
        batch_score(&name, &items, &mut Backend::Pmi(&t), strategy, &opts, seed)
    } else {
        let loc = g.adapter.as_deref().ok_or_else(|| Error::Missing(format!("{strategy} needs --adapter")))?;
        let mut m = open_adapter(loc)?;
        batch_score(&name, &items, &mut Backend::Model(m.as_mut()), strategy, &opts, seed)
    }
    .map_err(|e| Error::Adapter(e.to_string()))?;
    canonicalize(&mut set);
    save_scores(output, &set)?;
    let acc = winoprobe_core::metrics::accuracy(&set, None).map(|m| fmt6(m.value)).unwrap_or_else(|_| "NA".into());
    print(out, &format!("{}: {name} {strategy} {} predictions, accuracy {acc}\n", output.display(), set.len()))?;
    Ok(ExitStatus::Success)
}

fn pmi_query(table: &Path, word: &str, context: &str, offset: Option<i32>, pmi: PmiArgs, out: &mut dyn Write) -> Result<ExitStatus> {
    let t = load_table_checked(table, &pmi.config())?;
    let v = match offset {
        Some(o) => t.pmi_at(word, context, o),
        None => t.pmi(word, context),
    };
    let shown = v.map_or_else(|| "undefined".to_string(), fmt6);
    print(out, &format!("{word}\t{context}\t{}\t{shown}\n", offset.map_or("*".into(), |o| o.to_string())))?;
    Ok(ExitStatus::Success)
}

fn assoc(dataset: &Path, table: &Path, perturbed: &[PathBuf], scope: Scope, pmi: PmiArgs, out: &mut dyn Write) -> Result<ExitStatus> {
    let t = load_table_checked(table, &pmi.config())?;
    let d = load_dataset(dataset)?;
    let mut rows = Table::new(&["set", "id", "delta", "undefined_correct", "undefined_incorrect"]);
    let mut push = |set: &str, inst: &winoprobe_core::schema::SchemaInstance| {
        let x = associativity_delta(inst, &t, scope);
        rows.push(vec![set.into(), inst.id.clone().into(), x.value.into(), Cell::from(usize::from(x.undefined[0])), Cell::from(usize::from(x.undefined[1]))]);
    };
    for inst in d.instances() {
        push(pipeline::ORIGINAL, inst);
    }
    let mut pds = Vec::new();
    for p in perturbed {
        let pd = load_perturbed(p, Some(&d))?;
        for (_, inst) in &pd.instances {
            push(pd.kind.code(), inst);
        }
        pds.push(pd);
    }
    let mut div = Table::new(&["perturbation", "divergence"]);
    for pd in &pds {
        div.push(vec![pd.kind.code().into(), dataset_divergence(&d, pd, &t, scope).ok().into()]);
    }
    let fp = t.config().fingerprint();
    print(out, &rows.render(&fp, 0))?;
    if !pds.is_empty() {
        print(out, &div.render(&fp, 0))?;
    }
    Ok(ExitStatus::Success)
}

fn report(g: &Global, a: &RunArgs, out: &mut dyn Write) -> Result<ExitStatus> {
    let mut cfg = run_config(g, a)?;
    if cfg.scores.is_empty() {
        return Err(Error::Missing("report needs --scores files".into()));
    }
    if g.strategy.is_empty() {
        let mut seen: Vec<Strategy> = Vec::new();
        for p in &cfg.scores {
            let s = crate::scores::load_scores(p)?.strategy;
            if !seen.contains(&s) {
                seen.push(s);
            }
        }
        seen.sort();
        cfg.strategies = seen;
    }
    let inputs = Inputs::load(&cfg)?;
    let derived = Derived::new(&inputs.dataset)?;
    let sets = pipeline::score_sets(&cfg, &inputs, &derived, None, false)?;
    let r = pipeline::evaluate(&cfg, &inputs, &sets, None);
    r.write(&cfg.out)?;
    print(out, &r.tables_text())?;
    Ok(ExitStatus::Success)
}

/// Runs a parsed command line, writing human-readable output to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<ExitStatus> {
    let g = &cli.global;
    match &cli.command {
        Command::Validate { file, origin } => validate(file, origin.as_deref(), out),
        Command::Perturb { dataset, kind, lexicon } => perturb(g, dataset, kind, lexicon.as_deref(), out),
        Command::Score { dataset, perturbed, variant, pmi_table, pmi, output } => {
            score(g, dataset, perturbed.as_deref(), *variant, pmi_table.as_deref(), *pmi, output, out)
        }
        Command::Eval(a) => {
            let cfg = run_config(g, a)?;
            let r = pipeline::run_eval(&cfg)?;
            print(out, &r.tables_text())?;
            for n in &r.notes {
                print(out, &format!("note: {n}\n"))?;
            }
            Ok(ExitStatus::Success)
        }
        Command::PmiBuild { corpus, pmi, workers, output } => {
            let paths: Vec<&Path> = corpus.iter().map(PathBuf::as_path).collect();
            let t = build_from_files(&paths, pmi.config(), *workers)?;
            save_table(output, &t)?;
            print(out, &format!("{}: {} words, {} pair rows, config {}\n", output.display(), t.vocabulary().len(), t.pair_rows(), t.config().fingerprint()))?;
            Ok(ExitStatus::Success)
        }
        Command::PmiQuery { table, word, context, offset, pmi } => pmi_query(table, word, context, *offset, *pmi, out),
        Command::Assoc { dataset, pmi_table, perturbed, scope, pmi } => assoc(dataset, pmi_table, perturbed, (*scope).into(), *pmi, out),
        Command::Attn(a) => {
            let cfg = run_config(g, a)?;
            let r = pipeline::run_attn(&cfg)?;
            let k0: Vec<String> = r.curves.iter().map(|c| format!("{} k=0 {}", c.order, fmt6(c.points[0]))).collect();
            print(out, &format!("{}: {} curves ({})\n", cfg.out.display(), r.curves.len(), k0.join(", ")))?;
            Ok(ExitStatus::Success)
        }
        Command::Report(a) => report(g, a, out),
        Command::ServeToy { locator } => {
            let Locator::Toy(cfg) = Locator::parse(locator)? else {
                return Err(Error::Config("serve-toy takes a builtin:toy locator".into()));
            };
            let mut m = ToyModel::builtin(cfg);
            let stdin = std::io::stdin();
            serve(&mut m, stdin.lock(), std::io::stdout().lock()).map_err(|e| Error::io("<stdio>", e))?;
            Ok(ExitStatus::Success)
        }
    }
}
