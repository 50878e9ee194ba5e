use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use dstdoctor::bias::{self, BiasScore, CountingPolicy};
use dstdoctor::canonicalize::SynonymTable;
use dstdoctor::consistency::{self, Checker, CorrectionStats, DetectionConfig, SideFilter};
use dstdoctor::eval::{self, EvalConfig, EvalResult, FuzzyMode};
use dstdoctor::io::{self, Format, LoadOptions};
use dstdoctor::substitute::{self, ReplacementLexicon, SubstitutionConfig};
use dstdoctor::{par, Corpus, Ontology, Split};

mod config;
mod output;

use config::{RunConfig, DEFAULT_OUT_DIR, DEFAULT_SEED};
use output::{require_exists, usage, Run, UsageError};

#[derive(Parser)]
#[command(
    name = "dstdoctor",
    version,
    about = "Consistency, bias and evaluation tooling for DST corpora"
)]
struct Cli {
    /// TOML run configuration (falls back to $DSTDOCTOR_CONFIG)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Input format for corpora, ontologies and databases
    #[arg(long, global = true)]
    format: Option<Format>,
    /// Keep every listed value of multi-value slots
    #[arg(long, global = true)]
    multi_value: bool,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Propose missing annotations without changing the corpus. Exits 1 when
    /// there are proposals.
    Check(CheckArgs),
    /// Apply proposals and write corrected corpora with statistics
    Fix(FixArgs),
    /// Entity-bias table per slot
    Bias(BiasArgs),
    /// Build an unseen-entity test set
    Substitute(SubstituteArgs),
    /// Score predictions against a gold corpus
    Eval(EvalArgs),
    /// Sample or score a manual verification worksheet
    #[command(subcommand)]
    Verify(VerifyCommand),
    /// Render tables from earlier artifacts
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Sides {
    User,
    System,
    Both,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    ontology: Option<PathBuf>,
    #[arg(long)]
    database: Option<PathBuf>,
    /// Correction rules (default: the shipped rule set)
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long)]
    synonyms: Option<PathBuf>,
    #[arg(long, value_enum)]
    sides: Option<Sides>,
    /// Also propose replacing a different existing value
    #[arg(long)]
    allow_overwrite: bool,
    #[arg(long)]
    strip_diacritics: bool,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Picks the corpus from the config when --corpus is absent
    #[arg(long, default_value = "test")]
    split: Split,
    #[command(flatten)]
    detect: DetectArgs,
}

#[derive(Args)]
struct FixArgs {
    /// Repeatable; defaults to every split named in the config
    #[arg(long)]
    corpus: Vec<PathBuf>,
    /// Apply this proposal file instead of running detection
    #[arg(long)]
    proposals: Option<PathBuf>,
    #[command(flatten)]
    detect: DetectArgs,
}

#[derive(Args)]
struct BiasArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, default_value = "train")]
    split: Split,
    #[arg(long)]
    policy: Option<CountingPolicy>,
}

#[derive(Args)]
struct SubstituteArgs {
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    synonyms: Option<PathBuf>,
    /// Substituted corpus (default: <out-dir>/substituted.jsonl)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the replacement map (default: <out-dir>/replacement_map.tsv)
    #[arg(long, num_args = 0..=1)]
    emit_map: Option<Option<PathBuf>>,
    /// Also replace time and count slots
    #[arg(long)]
    perturb_numeric: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportKind {
    Summary,
    PerSlot,
    PerTurn,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    /// Restricts prediction slots and widens the slot-accuracy universe
    #[arg(long)]
    ontology: Option<PathBuf>,
    #[arg(long, value_parser = parse_threshold)]
    fuzzy_threshold: Option<f64>,
    #[arg(long)]
    fuzzy_mode: Option<FuzzyMode>,
    #[arg(long, value_enum, default_value = "summary")]
    report: ReportKind,
}

#[derive(Subcommand)]
enum VerifyCommand {
    /// Draw a stratified worksheet of modified and unchanged dialogs
    Sample {
        #[arg(long)]
        before: PathBuf,
        #[arg(long)]
        after: PathBuf,
        #[arg(long, default_value_t = 100)]
        n_modified: usize,
        #[arg(long, default_value_t = 100)]
        n_unchanged: usize,
    },
    /// Precision, recall and F1 from a labeled worksheet
    Score {
        #[arg(long)]
        worksheet: PathBuf,
    },
}

#[derive(Args)]
struct ReportArgs {
    /// stats.json written by `fix`
    #[arg(long)]
    stats: Option<PathBuf>,
    /// bias.json written by `bias`
    #[arg(long)]
    bias: Option<PathBuf>,
    /// eval.json written by `eval`
    #[arg(long)]
    eval: Option<PathBuf>,
    /// Earlier eval.json to compare --eval against
    #[arg(long, requires = "eval")]
    baseline: Option<PathBuf>,
}

fn parse_threshold(s: &str) -> Result<f64, String> {
    let t: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    EvalConfig::new(t, FuzzyMode::default())
        .map(|_| t)
        .map_err(|e| e.to_string())
}

#[derive(Serialize, Deserialize)]
struct BiasArtifact {
    policy: CountingPolicy,
    split: Split,
    scores: Vec<BiasScore>,
}

struct Ctx {
    cfg: RunConfig,
    config_path: Option<PathBuf>,
    seed: u64,
    out_dir: PathBuf,
    load: LoadOptions,
}

impl Ctx {
    fn run(&self, command: &str) -> Run {
        Run::new(command, self.out_dir.clone(), self.seed, self.config_path.clone())
    }

    fn split_path(&self, split: Split) -> Option<PathBuf> {
        let p = &self.cfg.paths;
        match split {
            Split::Train => p.train.clone(),
            Split::Valid => p.valid.clone(),
            Split::Test => p.test.clone(),
        }
    }

    fn load_corpus(&self, run: &mut Run, path: &Path, split: Option<Split>) -> anyhow::Result<Corpus> {
        run.input(path);
        let opts = LoadOptions {
            split,
            ..self.load.clone()
        };
        Ok(io::load_corpus(path, &opts)?)
    }
}

fn pick<T>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}

fn build_checker(ctx: &Ctx, run: &mut Run, args: &DetectArgs) -> anyhow::Result<(Checker, Ontology, SideFilter)> {
    let paths = &ctx.cfg.paths;
    let ontology_path = pick(args.ontology.clone(), paths.ontology.clone())
        .ok_or_else(|| usage("an ontology is required (--ontology or paths.ontology)"))?;
    let database_path = pick(args.database.clone(), paths.database.clone());
    let rules_path = pick(args.rules.clone(), paths.rules.clone());
    let synonyms_path = pick(args.synonyms.clone(), paths.synonyms.clone());
    require_exists("ontology", &ontology_path)?;
    for (what, p) in [
        ("database", &database_path),
        ("rules", &rules_path),
        ("synonyms", &synonyms_path),
    ] {
        if let Some(p) = p {
            require_exists(what, p)?;
        }
    }

    run.input(&ontology_path);
    let ontology = io::load_ontology(&ontology_path, &ctx.load)?;
    let database = match &database_path {
        Some(p) => {
            run.input(p);
            let db = io::load_database(p, &ctx.load)?;
            for d in db.mismatches(&ontology) {
                log::warn!("database: {d}");
            }
            db
        }
        None => Default::default(),
    };
    let rules = match &rules_path {
        Some(p) => {
            run.input(p);
            consistency::load_rules(p)?
        }
        None => consistency::default_rules(),
    };
    let mut detection = DetectionConfig::default();
    if let Some(p) = &synonyms_path {
        run.input(p);
        let table = SynonymTable::load(p)?;
        table.check_targets(&ontology)?;
        detection.normalization.synonyms = table;
    }
    let check = &ctx.cfg.check;
    detection.allow_overwrite = args.allow_overwrite || check.allow_overwrite.unwrap_or(false);
    detection.normalization.strip_diacritics = args.strip_diacritics || check.strip_diacritics.unwrap_or(false);
    let sides = match args.sides {
        Some(Sides::User) => SideFilter::User,
        Some(Sides::System) => SideFilter::System,
        Some(Sides::Both) => SideFilter::Both,
        None => match check.sides.as_deref() {
            None | Some("both") => SideFilter::Both,
            Some("user") => SideFilter::User,
            Some("system") => SideFilter::System,
            Some(other) => return Err(usage(format!("config check.sides: unknown value `{other}`"))),
        },
    };
    Ok((Checker::new(&ontology, &database, rules, &detection), ontology, sides))
}

fn cmd_check(ctx: &Ctx, args: &CheckArgs) -> anyhow::Result<ExitCode> {
    let mut run = ctx.run("check");
    let path = pick(args.corpus.clone(), ctx.split_path(args.split))
        .ok_or_else(|| usage(format!("no corpus given (--corpus or paths.{})", args.split)))?;
    require_exists("corpus", &path)?;
    let (checker, ontology, sides) = build_checker(ctx, &mut run, &args.detect)?;
    let corpus = ctx.load_corpus(&mut run, &path, args.corpus.is_none().then_some(args.split))?;
    ontology.check_corpus(&corpus)?;

    let records = consistency::check_corpus(&checker, &corpus, sides);
    let dialogs: BTreeSet<&str> = records.iter().map(|r| r.dialog_id.as_str()).collect();
    run.output("proposals.tsv", consistency::records_to_tsv(&records));
    run.count("dialogs", corpus.len());
    run.count("proposals", records.len());
    run.count("dialogs_with_proposals", dialogs.len());
    run.commit()?;
    println!(
        "{} proposal(s) in {} of {} dialog(s)",
        records.len(),
        dialogs.len(),
        corpus.len()
    );
    Ok(if records.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_fix(ctx: &Ctx, args: &FixArgs) -> anyhow::Result<ExitCode> {
    let mut run = ctx.run("fix");
    let mut inputs: Vec<(PathBuf, Option<Split>)> = args.corpus.iter().map(|p| (p.clone(), None)).collect();
    if inputs.is_empty() {
        inputs = Split::ALL
            .iter()
            .filter_map(|s| ctx.split_path(*s).map(|p| (p, Some(*s))))
            .collect();
    }
    if inputs.is_empty() {
        return Err(usage("no corpus given (--corpus or paths.train/valid/test)"));
    }
    if args.proposals.is_some() && inputs.len() != 1 {
        return Err(usage("--proposals needs exactly one corpus"));
    }
    for (p, _) in &inputs {
        require_exists("corpus", p)?;
    }
    if let Some(p) = &args.proposals {
        require_exists("proposals", p)?;
    }
    let (checker, ontology, sides) = build_checker(ctx, &mut run, &args.detect)?;

    let mut stats: Option<CorrectionStats> = None;
    let mut seen = BTreeSet::new();
    let mut total_applied = 0;
    for (path, split) in &inputs {
        let corpus = ctx.load_corpus(&mut run, path, *split)?;
        ontology.check_corpus(&corpus)?;
        if !seen.insert(corpus.split) {
            return Err(usage(format!("two corpora for split {}", corpus.split)));
        }
        let records = match &args.proposals {
            Some(p) => {
                run.input(p);
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                consistency::parse_records(&text)?
            }
            None => consistency::check_corpus(&checker, &corpus, sides),
        };
        let (fixed, applied) = consistency::apply_corrections(&corpus, &records)?;
        let split_stats = consistency::correction_stats(&corpus, &fixed, &applied)?;
        stats = Some(match stats {
            None => split_stats,
            Some(s) => s.merge(split_stats)?,
        });
        total_applied += applied.len();
        run.count(&format!("{}_dialogs", corpus.split), corpus.len());
        run.count(&format!("{}_applied", corpus.split), applied.len());
        run.output(
            format!("corrected/{}.jsonl", corpus.split),
            io::corpus_to_string(&fixed),
        );
        run.output(
            format!("applied.{}.tsv", corpus.split),
            consistency::records_to_tsv(&applied),
        );
    }
    let stats = stats.expect("at least one corpus");
    run.output("stats.json", format!("{}\n", serde_json::to_string_pretty(&stats)?));
    run.output("stats.tsv", stats.render_table());
    run.output("sources.tsv", stats.render_sources());
    run.count("applied", total_applied);
    let out_dir = run.out_dir().display().to_string();
    run.commit()?;
    print!("{}", stats.render_table());
    println!("{total_applied} correction(s) applied; corrected corpora in {out_dir}/corrected");
    Ok(ExitCode::SUCCESS)
}

fn cmd_bias(ctx: &Ctx, args: &BiasArgs) -> anyhow::Result<ExitCode> {
    let mut run = ctx.run("bias");
    let path = pick(args.corpus.clone(), ctx.split_path(args.split))
        .ok_or_else(|| usage(format!("no corpus given (--corpus or paths.{})", args.split)))?;
    require_exists("corpus", &path)?;
    let policy = pick(args.policy, ctx.cfg.bias.policy).unwrap_or_default();
    let corpus = ctx.load_corpus(&mut run, &path, Some(args.split))?;
    let scores = bias::bias_report(&corpus, policy);
    let table = bias::render_report(&scores, policy, Some(args.split.as_str()));
    run.count("dialogs", corpus.len());
    run.count("slots", scores.len());
    run.count("degenerate_slots", scores.iter().filter(|s| s.degenerate).count());
    let artifact = BiasArtifact {
        policy,
        split: args.split,
        scores,
    };
    run.output("bias.tsv", table.clone());
    run.output("bias.json", format!("{}\n", serde_json::to_string_pretty(&artifact)?));
    run.commit()?;
    print!("{table}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_substitute(ctx: &Ctx, args: &SubstituteArgs) -> anyhow::Result<ExitCode> {
    let mut run = ctx.run("substitute");
    let paths = &ctx.cfg.paths;
    let train = pick(args.train.clone(), paths.train.clone())
        .ok_or_else(|| usage("no training corpus given (--train or paths.train)"))?;
    let test = pick(args.test.clone(), paths.test.clone())
        .ok_or_else(|| usage("no test corpus given (--test or paths.test)"))?;
    let lexicon_path = pick(args.lexicon.clone(), paths.lexicon.clone())
        .ok_or_else(|| usage("no lexicon given (--lexicon or paths.lexicon)"))?;
    let synonyms = pick(args.synonyms.clone(), paths.synonyms.clone());
    for (what, p) in [
        ("training corpus", &train),
        ("test corpus", &test),
        ("lexicon", &lexicon_path),
    ] {
        require_exists(what, p)?;
    }
    if let Some(p) = &synonyms {
        require_exists("synonyms", p)?;
    }

    let train = ctx.load_corpus(&mut run, &train, Some(Split::Train))?;
    let test = ctx.load_corpus(&mut run, &test, Some(Split::Test))?;
    run.input(&lexicon_path);
    let lexicon = ReplacementLexicon::load(&lexicon_path)?;
    let mut config = SubstitutionConfig {
        perturb_numeric: args.perturb_numeric || ctx.cfg.substitute.perturb_numeric.unwrap_or(false),
        ..SubstitutionConfig::default()
    };
    if let Some(p) = &synonyms {
        run.input(p);
        config.normalization.synonyms = SynonymTable::load(p)?;
    }

    let map = substitute::build_replacement_map(&test, &train, &lexicon, &config, ctx.seed)?;
    let out = substitute::apply_replacements(&test, &map, &config)?;
    let leaks = substitute::leakage_audit(&out, &train, &lexicon, &config);
    if !leaks.is_empty() {
        anyhow::bail!(
            "{} replaced value(s) still occur in the training corpus:\n{}",
            leaks.len(),
            substitute::render_leakage(&leaks)
        );
    }
    let replaced: usize = map.dialogs.values().map(|m| m.len()).sum();
    run.count("dialogs", test.len());
    run.count("dialogs_changed", map.dialogs.len());
    run.count("replacements", replaced);
    run.count("leaks", 0);
    let out_path = args.out.clone().unwrap_or_else(|| PathBuf::from("substituted.jsonl"));
    let written = run.output(out_path, io::corpus_to_string(&out));
    if let Some(map_path) = &args.emit_map {
        let p = map_path.clone().unwrap_or_else(|| PathBuf::from("replacement_map.tsv"));
        run.output(p, map.to_tsv());
    }
    run.output("leakage.tsv", substitute::render_leakage(&leaks));
    run.commit()?;
    println!(
        "{replaced} replacement(s) in {} dialog(s); wrote {}",
        map.dialogs.len(),
        written.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(ctx: &Ctx, args: &EvalArgs) -> anyhow::Result<ExitCode> {
    let mut run = ctx.run("eval");
    require_exists("gold corpus", &args.gold)?;
    require_exists("predictions", &args.pred)?;
    let ontology_path = pick(args.ontology.clone(), ctx.cfg.paths.ontology.clone());
    if let Some(p) = &ontology_path {
        require_exists("ontology", p)?;
    }
    let threshold = pick(args.fuzzy_threshold, ctx.cfg.eval.fuzzy_threshold).unwrap_or(0.9);
    let mode = pick(args.fuzzy_mode, ctx.cfg.eval.fuzzy_mode).unwrap_or_default();
    let config = EvalConfig::new(threshold, mode).map_err(|e| usage(e.to_string()))?;

    let gold = ctx.load_corpus(&mut run, &args.gold, None)?;
    let ontology = match &ontology_path {
        Some(p) => {
            run.input(p);
            Some(io::load_ontology(p, &ctx.load)?)
        }
        None => None,
    };
    run.input(&args.pred);
    let preds = io::load_predictions(&args.pred, &gold, ontology.as_ref())?;
    let slots = ontology
        .as_ref()
        .map(|o| o.slots().cloned().collect())
        .unwrap_or_default();
    let (result, turns) = eval::evaluate_detailed(&gold, &preds, &slots, &config)?;

    run.count("turns", result.turn_total);
    run.count("missing_predictions", result.missing_predictions);
    run.output("eval.json", format!("{}\n", serde_json::to_string_pretty(&result)?));
    run.output("eval_summary.tsv", eval::render_summary(&result));
    run.output("eval_per_slot.tsv", eval::render_per_slot(&result));
    run.output("eval_per_turn.tsv", eval::render_per_turn(&turns));
    run.commit()?;
    match args.report {
        ReportKind::Summary => print!("{}", eval::render_summary(&result)),
        ReportKind::PerSlot => print!("{}", eval::render_per_slot(&result)),
        ReportKind::PerTurn => print!("{}", eval::render_per_turn(&turns)),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(ctx: &Ctx, cmd: &VerifyCommand) -> anyhow::Result<ExitCode> {
    let mut run = ctx.run("verify");
    match cmd {
        VerifyCommand::Sample {
            before,
            after,
            n_modified,
            n_unchanged,
        } => {
            require_exists("corpus", before)?;
            require_exists("corpus", after)?;
            let b = ctx.load_corpus(&mut run, before, None)?;
            let a = ctx.load_corpus(&mut run, after, None)?;
            let sheet = consistency::sample_verification(&b, &a, *n_modified, *n_unchanged, ctx.seed)?;
            run.count("rows", sheet.rows.len());
            let path = run.output("worksheet.tsv", sheet.to_tsv());
            run.commit()?;
            println!("wrote {} row(s) to {}", sheet.rows.len(), path.display());
        }
        VerifyCommand::Score { worksheet } => {
            require_exists("worksheet", worksheet)?;
            run.input(worksheet);
            let text =
                std::fs::read_to_string(worksheet).with_context(|| format!("reading {}", worksheet.display()))?;
            let counts = consistency::parse_worksheet(&text)?.counts();
            if counts.unlabeled > 0 {
                log::warn!("{} unlabeled row(s) ignored", counts.unlabeled);
            }
            let m = consistency::verification_metrics(counts.tp, counts.fp, counts.fn_, counts.tn);
            run.count("counts", counts);
            let body = serde_json::json!({ "counts": counts, "metrics": m });
            run.output(
                "verification.json",
                format!("{}\n", serde_json::to_string_pretty(&body)?),
            );
            run.commit()?;
            println!("tp\tfp\tfn\ttn\tprecision\trecall\tf1");
            println!(
                "{}\t{}\t{}\t{}\t{:.3}\t{:.3}\t{:.3}",
                counts.tp, counts.fp, counts.fn_, counts.tn, m.precision, m.recall, m.f1
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    require_exists("artifact", path)?;
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn cmd_report(ctx: &Ctx, args: &ReportArgs) -> anyhow::Result<ExitCode> {
    if args.stats.is_none() && args.bias.is_none() && args.eval.is_none() {
        return Err(usage("nothing to report: give --stats, --bias or --eval"));
    }
    let mut run = ctx.run("report");
    let mut out = String::new();
    if let Some(p) = &args.stats {
        run.input(p);
        let stats: CorrectionStats = read_json(p)?;
        out.push_str("## modified dialogs\n");
        out.push_str(&stats.render_table());
        out.push_str("\n## correction sources\n");
        out.push_str(&stats.render_sources());
        out.push('\n');
    }
    if let Some(p) = &args.bias {
        run.input(p);
        let a: BiasArtifact = read_json(p)?;
        out.push_str("## entity bias\n");
        out.push_str(&bias::render_report(&a.scores, a.policy, Some(a.split.as_str())));
        out.push('\n');
    }
    if let Some(p) = &args.eval {
        run.input(p);
        let r: EvalResult = read_json(p)?;
        out.push_str("## evaluation\n");
        out.push_str(&eval::render_summary(&r));
        out.push('\n');
        out.push_str(&eval::render_per_slot(&r));
        if let Some(b) = &args.baseline {
            run.input(b);
            let base: EvalResult = read_json(b)?;
            let delta = eval::compare_evals(&base, &r)?;
            out.push_str("\n## change against baseline\n");
            out.push_str(&eval::render_delta(&delta));
        }
    }
    run.output("report.txt", out.clone());
    run.commit()?;
    print!("{out}");
    Ok(ExitCode::SUCCESS)
}

fn dispatch(cli: Cli) -> anyhow::Result<ExitCode> {
    let (cfg, config_path) = RunConfig::load(cli.config.as_deref()).map_err(|e| usage(format!("{e:#}")))?;
    par::init_workers(pick(cli.jobs, cfg.jobs));
    let load = LoadOptions {
        format: pick(cli.format, cfg.format).unwrap_or_default(),
        split: None,
        multi_value: cli.multi_value || cfg.multi_value.unwrap_or(false),
        categorical_cap: None,
    };
    let ctx = Ctx {
        seed: pick(cli.seed, cfg.seed).unwrap_or(DEFAULT_SEED),
        out_dir: pick(cli.out_dir.clone(), cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR)),
        cfg,
        config_path,
        load,
    };
    match &cli.command {
        Command::Check(a) => cmd_check(&ctx, a),
        Command::Fix(a) => cmd_fix(&ctx, a),
        Command::Bias(a) => cmd_bias(&ctx, a),
        Command::Substitute(a) => cmd_substitute(&ctx, a),
        Command::Eval(a) => cmd_eval(&ctx, a),
        Command::Verify(c) => cmd_verify(&ctx, c),
        Command::Report(a) => cmd_report(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
