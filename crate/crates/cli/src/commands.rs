use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use newsxlt::corpus::{
    parse_behaviors_tsv, parse_news_jsonl, parse_parallel_jsonl, write_behaviors_tsv, write_news_jsonl,
    write_parallel_jsonl, write_seq2seq_jsonl, SourcePolicy,
};
use newsxlt::eval::{
    checkpoint_select, coverage_gaps, fewshot_export, run_xlt_eval, split_by_day, write_training_samples, Checkpoint,
    EvalError, EvalOptions, EvalReport, MetricSet, DEFAULT_NEGATIVES_PER_POSITIVE,
};
use newsxlt::pipeline::{run_parallel_pipeline, run_pipeline, LidLabels};
use newsxlt::sampler::schedule_examples;
use newsxlt::scoring::{load_embeddings, EmbeddingTable};
use newsxlt::{Corpus, Impression, ParallelPair};
use serde::Serialize;

use crate::config::AppConfig;
use crate::{
    BuildCorpusArgs, Cli, Command, CorpusStatsArgs, EmbeddingArgs, EvaluateArgs, FewshotArgs, SampleExportArgs,
    ScoringArgs, SelectArgs, ValidateArgs,
};

/// Exit status for an error: 2 for missing embeddings, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    let coverage = err
        .chain()
        .any(|e| e.downcast_ref::<EvalError>().is_some_and(EvalError::is_coverage));
    if coverage {
        2
    } else {
        1
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = AppConfig::load(cli.common.config.as_deref())?;
    if cli.common.seed.is_some() {
        cfg.seed = cli.common.seed;
    }
    cfg.apply_seed();
    if let Some(n) = cli.common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .with_context(|| format!("starting a pool of {n} threads"))?;
    }
    let dry_run = cli.common.dry_run;
    match cli.command {
        Command::BuildCorpus(a) => build_corpus(cfg, a, dry_run),
        Command::CorpusStats(a) => corpus_stats(cfg, a),
        Command::SampleExport(a) => sample_export(cfg, a, dry_run),
        Command::ValidateEmbeddings(a) => validate_embeddings(cfg, a),
        Command::Evaluate(a) => evaluate(cfg, a, dry_run),
        Command::SelectCheckpoint(a) => select_checkpoint(cfg, a, dry_run),
        Command::FewshotExport(a) => fewshot(cfg, a, dry_run),
    }
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn set_path(slot: &mut Option<PathBuf>, flag: Option<PathBuf>) {
    if flag.is_some() {
        *slot = flag;
    }
}

fn required<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| anyhow!("missing {what} path (flag or io.{what} in config)"))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match path {
        Some(p) => {
            let mut w = create(p)?;
            w.write_all(text.as_bytes())?;
            w.flush()?;
        }
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn source_policy(cfg: &AppConfig) -> SourcePolicy {
    match &cfg.sources {
        Some(list) => SourcePolicy::Only(list.iter().cloned().collect()),
        None => SourcePolicy::Any,
    }
}

fn read_corpus(path: &Path, policy: &SourcePolicy) -> Result<Corpus> {
    parse_news_jsonl(open(path)?, policy).with_context(|| format!("reading {}", path.display()))
}

fn read_parallel(path: &Path, policy: &SourcePolicy) -> Result<Vec<ParallelPair>> {
    parse_parallel_jsonl(open(path)?, policy).with_context(|| format!("reading {}", path.display()))
}

fn read_behaviors(path: &Path) -> Result<Vec<Impression>> {
    parse_behaviors_tsv(open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn stats_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".stats.json");
    PathBuf::from(s)
}

fn build_corpus(mut cfg: AppConfig, a: BuildCorpusArgs, dry_run: bool) -> Result<()> {
    set_path(&mut cfg.io.input, a.input);
    set_path(&mut cfg.io.output, a.output);
    set_path(&mut cfg.io.stats, a.stats);
    set_path(&mut cfg.io.lid_labels, a.lid_labels);
    let p = &mut cfg.pipeline;
    for (source, k) in a.k_percent {
        let k: f64 = k.parse().with_context(|| format!("K for source {source}"))?;
        p.k_percent.insert(source, k);
    }
    set(&mut p.default_k_percent, a.default_k);
    set(&mut p.near_dup_threshold, a.threshold);
    set(&mut p.minhash_permutations, a.permutations);
    set(&mut p.lsh_bands, a.bands);
    set(&mut p.lsh_rows, a.rows);
    set(&mut p.shingle_n, a.shingle_n);
    set(&mut p.min_letters, a.min_letters);
    if a.sources.is_some() {
        cfg.sources = a.sources;
    }
    cfg.validate()?;
    cfg.pipeline.validate()?;

    let input = required(&cfg.io.input, "input")?;
    let output = if dry_run {
        None
    } else {
        Some(required(&cfg.io.output, "output")?)
    };
    let policy = source_policy(&cfg);

    if a.parallel {
        let pairs = read_parallel(input, &policy)?;
        let (kept, stats) = run_parallel_pipeline(&pairs, &cfg.pipeline)?;
        log::info!("parallel corpus: {} -> {} pairs", pairs.len(), kept.len());
        if let Some(out) = output {
            let mut w = create(out)?;
            write_parallel_jsonl(&kept, &mut w)?;
        }
        let stats_out = cfg.io.stats.clone().or_else(|| output.map(stats_path));
        return write_json(&stats, stats_out.as_deref());
    }

    let labels = match &cfg.io.lid_labels {
        Some(p) => Some(LidLabels::parse_tsv(open(p)?).with_context(|| format!("reading {}", p.display()))?),
        None => None,
    };
    let corpus = read_corpus(input, &policy)?;
    let (clean, stats) = run_pipeline(&corpus, &cfg.pipeline, labels.as_ref())?;
    log::info!("corpus: {} -> {} texts", corpus.len(), clean.len());
    if let Some(out) = output {
        let mut w = create(out)?;
        write_news_jsonl(clean.items(), &mut w)?;
    }
    let stats_out = cfg.io.stats.clone().or_else(|| output.map(stats_path));
    write_json(&stats, stats_out.as_deref())
}

#[derive(Serialize)]
struct KeyStats {
    count: usize,
    char_len_min: usize,
    char_len_mean: f64,
    char_len_max: usize,
    by_source: BTreeMap<String, usize>,
}

#[derive(Serialize)]
struct CorpusSummary {
    total: usize,
    languages: BTreeMap<String, KeyStats>,
}

fn summarize<'a>(items: impl Iterator<Item = (String, &'a newsxlt::NewsText)>) -> CorpusSummary {
    let mut groups: BTreeMap<String, Vec<&newsxlt::NewsText>> = BTreeMap::new();
    let mut total = 0;
    for (tag, t) in items {
        groups.entry(tag).or_default().push(t);
        total += 1;
    }
    let languages = groups
        .into_iter()
        .map(|(tag, texts)| {
            let lens: Vec<usize> = texts.iter().map(|t| t.char_len()).collect();
            let mut by_source = BTreeMap::new();
            for t in &texts {
                *by_source.entry(t.source().to_string()).or_insert(0) += 1;
            }
            let stats = KeyStats {
                count: texts.len(),
                char_len_min: lens.iter().copied().min().unwrap_or(0),
                char_len_mean: lens.iter().sum::<usize>() as f64 / lens.len() as f64,
                char_len_max: lens.iter().copied().max().unwrap_or(0),
                by_source,
            };
            (tag, stats)
        })
        .collect();
    CorpusSummary { total, languages }
}

fn corpus_stats(mut cfg: AppConfig, a: CorpusStatsArgs) -> Result<()> {
    set_path(&mut cfg.io.input, a.input);
    cfg.validate()?;
    let input = required(&cfg.io.input, "input")?;
    let policy = source_policy(&cfg);
    let summary = if a.parallel {
        let pairs = read_parallel(input, &policy)?;
        summarize(pairs.iter().map(|p| {
            let (s, t) = p.pair_key();
            (format!("{s}-{t}"), p.src())
        }))
    } else {
        let corpus = read_corpus(input, &policy)?;
        summarize(corpus.items().iter().map(|t| (t.key().to_string(), t)))
    };
    write_json(&summary, a.output.as_deref())
}

fn sample_export(mut cfg: AppConfig, a: SampleExportArgs, dry_run: bool) -> Result<()> {
    set_path(&mut cfg.io.mono, a.mono);
    set_path(&mut cfg.io.parallel, a.parallel);
    set_path(&mut cfg.io.output, a.output);
    let s = &mut cfg.sampler;
    set(&mut s.mode, a.mode);
    set(&mut s.n_examples, a.n);
    set(&mut s.alpha, a.alpha);
    set(&mut s.deletion_ratio, a.ratio);
    set(&mut s.min_count, a.min_count);
    set(&mut s.phase_split, a.phase_split);
    set(&mut s.batch_size, a.batch_size);
    cfg.validate()?;
    cfg.sampler.validate()?;

    let policy = source_policy(&cfg);
    let mono = match &cfg.io.mono {
        Some(p) => read_corpus(p, &policy)?,
        None => Corpus::new(Vec::new())?,
    };
    let parallel = match &cfg.io.parallel {
        Some(p) => read_parallel(p, &policy)?,
        None => Vec::new(),
    };
    let examples = schedule_examples(&mono, &parallel, &cfg.sampler)?;
    if dry_run {
        println!(
            "{} examples ({} mode); nothing written",
            examples.len(),
            cfg.sampler.mode
        );
        return Ok(());
    }
    let out = required(&cfg.io.output, "output")?;
    let mut w = create(out)?;
    write_seq2seq_jsonl(&examples, &mut w)?;
    log::info!("wrote {} examples to {}", examples.len(), out.display());
    Ok(())
}

fn apply_embedding_args(cfg: &mut AppConfig, a: EmbeddingArgs) {
    set_path(&mut cfg.io.behaviors, a.behaviors);
    if !a.embeddings.is_empty() {
        cfg.io.embeddings = a.embeddings.into_iter().map(|(l, p)| (l, PathBuf::from(p))).collect();
    }
}

fn apply_scoring_args(cfg: &mut AppConfig, a: ScoringArgs) {
    set(&mut cfg.eval.source_language, a.source_language);
    set(&mut cfg.eval.max_history, a.max_history);
    set(&mut cfg.eval.cold_policy, a.cold_policy);
    cfg.eval.l2_normalize |= a.l2_normalize;
}

fn normalize_tables(tables: BTreeMap<String, EmbeddingTable>) -> Result<BTreeMap<String, EmbeddingTable>> {
    tables
        .into_iter()
        .map(|(lang, t)| {
            Ok((
                lang.clone(),
                t.l2_normalize().with_context(|| format!("normalizing {lang}"))?,
            ))
        })
        .collect()
}

fn load_tables(paths: &BTreeMap<String, PathBuf>) -> Result<BTreeMap<String, EmbeddingTable>> {
    if paths.is_empty() {
        bail!("no embedding tables given (--embeddings LANG=PATH)");
    }
    paths
        .iter()
        .map(|(lang, p)| {
            let table =
                load_embeddings(p).with_context(|| format!("loading {lang} embeddings from {}", p.display()))?;
            Ok((lang.clone(), table))
        })
        .collect()
}

fn validate_embeddings(mut cfg: AppConfig, a: ValidateArgs) -> Result<()> {
    apply_embedding_args(&mut cfg, a.inputs);
    cfg.validate()?;
    let behaviors = read_behaviors(required(&cfg.io.behaviors, "behaviors")?)?;
    let tables = load_tables(&cfg.io.embeddings)?;
    let gaps = coverage_gaps(&behaviors, &tables);
    let missing: BTreeMap<&str, usize> = gaps.iter().map(|g| (g.language.as_str(), g.missing.len())).collect();
    let mut out = std::io::stdout().lock();
    for (lang, table) in &tables {
        let m = missing.get(lang.as_str()).copied().unwrap_or(0);
        writeln!(
            out,
            "{lang}: {} vectors (dim {}), {m} missing",
            table.len(),
            table.dim()
        )?;
    }
    let total: usize = missing.values().sum();
    writeln!(out, "{total} missing")?;
    drop(out);
    if !gaps.is_empty() {
        return Err(EvalError::Coverage(gaps).into());
    }
    Ok(())
}

fn eval_options(cfg: &AppConfig) -> EvalOptions {
    EvalOptions {
        max_history: cfg.eval.max_history,
        cold_policy: cfg.eval.cold_policy,
    }
}

fn restrict_languages(cfg: &AppConfig, tables: &mut BTreeMap<String, EmbeddingTable>) -> Result<()> {
    if cfg.eval.target_languages.is_empty() {
        return Ok(());
    }
    for t in &cfg.eval.target_languages {
        if !tables.contains_key(t) {
            bail!("target language {t:?} has no embedding table");
        }
    }
    let keep: BTreeSet<&String> = cfg
        .eval
        .target_languages
        .iter()
        .chain(std::iter::once(&cfg.eval.source_language))
        .collect();
    tables.retain(|l, _| keep.contains(l));
    Ok(())
}

fn evaluate(mut cfg: AppConfig, a: EvaluateArgs, dry_run: bool) -> Result<()> {
    apply_embedding_args(&mut cfg, a.inputs);
    apply_scoring_args(&mut cfg, a.scoring);
    if let Some(t) = a.targets {
        cfg.eval.target_languages = t;
    }
    set_path(&mut cfg.io.report_json, a.report_json);
    set_path(&mut cfg.io.report_csv, a.report_csv);
    cfg.validate()?;

    let mut behaviors = read_behaviors(required(&cfg.io.behaviors, "behaviors")?)?;
    if a.validation_day {
        behaviors = split_by_day(&behaviors)?.1;
    }
    let mut tables = load_tables(&cfg.io.embeddings)?;
    restrict_languages(&cfg, &mut tables)?;
    if cfg.eval.l2_normalize {
        tables = normalize_tables(tables)?;
    }
    let report = run_xlt_eval(&behaviors, &tables, &cfg.eval.source_language, &eval_options(&cfg))?;
    print_report(&report)?;

    if !dry_run {
        if let Some(p) = &cfg.io.report_json {
            let mut w = create(p)?;
            report.write_json(&mut w)?;
        }
        if let Some(p) = &cfg.io.report_csv {
            let mut w = create(p)?;
            report.write_csv(&mut w)?;
        }
    }
    Ok(())
}

fn fmt_metric(v: Option<f64>, scale: f64) -> String {
    match v {
        Some(v) => format!("{:.2}", newsxlt::eval::round2(v * scale)),
        None => "-".into(),
    }
}

fn print_row(out: &mut impl Write, label: &str, m: &MetricSet<Option<f64>>, scale: f64, tail: &str) -> Result<()> {
    writeln!(
        out,
        "{label:<10} {:>8} {:>8} {:>8} {:>8}{tail}",
        fmt_metric(m.auc, scale),
        fmt_metric(m.mrr, scale),
        fmt_metric(m.ndcg5, scale),
        fmt_metric(m.ndcg10, scale),
    )?;
    Ok(())
}

/// Metric means are shown x100, as percentages.
fn print_report(report: &EvalReport) -> Result<()> {
    let mut out = std::io::stdout().lock();
    writeln!(
        out,
        "{:<10} {:>8} {:>8} {:>8} {:>8} {:>12}",
        "language", "AUC", "MRR", "nDCG@5", "nDCG@10", "impressions"
    )?;
    for (lang, res) in &report.per_language {
        print_row(
            &mut out,
            lang,
            &res.means(),
            100.0,
            &format!(" {:>12}", res.impressions),
        )?;
    }
    print_row(&mut out, "ENG", &report.eng, 100.0, "")?;
    if let Some(avg) = &report.avg {
        print_row(&mut out, "AVG", avg, 100.0, "")?;
    }
    if let Some(delta) = &report.delta_percent {
        print_row(&mut out, "%Δ", delta, 1.0, "")?;
    }
    if report.cold_count > 0 || report.auc_skipped_count > 0 {
        writeln!(
            out,
            "cold impressions: {}; AUC undefined (single-class): {}",
            report.cold_count, report.auc_skipped_count
        )?;
    }
    Ok(())
}

fn select_checkpoint(mut cfg: AppConfig, a: SelectArgs, dry_run: bool) -> Result<()> {
    set_path(&mut cfg.io.behaviors, a.behaviors);
    if !a.checkpoints.is_empty() {
        cfg.io.checkpoints = a.checkpoints;
    }
    apply_scoring_args(&mut cfg, a.scoring);
    if let Some(l) = a.languages {
        cfg.eval.target_languages = l;
    }
    set_path(&mut cfg.io.output, a.output);
    cfg.validate()?;

    let behaviors = read_behaviors(required(&cfg.io.behaviors, "behaviors")?)?;
    if cfg.io.checkpoints.is_empty() {
        bail!("no checkpoints given (--checkpoint DIR)");
    }
    let languages: Option<Vec<String>> = (!cfg.eval.target_languages.is_empty()).then(|| {
        let mut l = cfg.eval.target_languages.clone();
        if !l.contains(&cfg.eval.source_language) {
            l.push(cfg.eval.source_language.clone());
        }
        l
    });
    let checkpoints = cfg.io.checkpoints.iter().map(|dir| -> Result<Checkpoint, EvalError> {
        let mut ckpt = Checkpoint::load_dir(dir, languages.as_deref())?;
        if cfg.eval.l2_normalize {
            ckpt.tables = std::mem::take(&mut ckpt.tables)
                .into_iter()
                .map(|(lang, t)| t.l2_normalize().map(|t| (lang, t)))
                .collect::<Result<_, _>>()?;
        }
        Ok(ckpt)
    });
    let selection = checkpoint_select(checkpoints, &behaviors, &cfg.eval.source_language, &eval_options(&cfg))?;

    let mut out = std::io::stdout().lock();
    writeln!(out, "{:<24} {:>12}", "checkpoint", "nDCG@10")?;
    for (id, score) in &selection.scores {
        writeln!(out, "{id:<24} {:>12.6}", score)?;
    }
    writeln!(out, "best: {}", selection.best)?;
    drop(out);
    if !dry_run {
        if let Some(p) = &cfg.io.output {
            write_json(&selection, Some(p))?;
        }
    }
    Ok(())
}

fn fewshot(mut cfg: AppConfig, a: FewshotArgs, dry_run: bool) -> Result<()> {
    set_path(&mut cfg.io.behaviors, a.behaviors);
    set_path(&mut cfg.io.output, a.output);
    set_path(&mut cfg.io.samples_output, a.samples_output);
    cfg.validate()?;

    let mut behaviors = read_behaviors(required(&cfg.io.behaviors, "behaviors")?)?;
    if a.train_split {
        behaviors = split_by_day(&behaviors)?.0;
    }
    let negatives = match (&cfg.io.samples_output, a.negatives) {
        (Some(_), k) => Some(k.unwrap_or(DEFAULT_NEGATIVES_PER_POSITIVE)),
        (None, Some(_)) => bail!("--negatives needs --samples-output"),
        (None, None) => None,
    };
    let export = fewshot_export(&behaviors, a.n, cfg.fewshot_seed(), negatives)?;
    if dry_run {
        println!("{} impressions selected; nothing written", export.impressions.len());
        return Ok(());
    }
    let out = required(&cfg.io.output, "output")?;
    let mut w = create(out)?;
    write_behaviors_tsv(&export.impressions, &mut w)?;
    if let (Some(p), Some(samples)) = (&cfg.io.samples_output, &export.samples) {
        let mut w = create(p)?;
        write_training_samples(samples, &mut w)?;
    }
    log::info!("wrote {} impressions to {}", export.impressions.len(), out.display());
    Ok(())
}
