//! Argument parsing and command dispatch for the `mvr` binary.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mvr_core::eval::{budget_sweep, metric_registry, pooler_registry, sweep_to_csv, Metric, Qrels, SweepOptions};
use mvr_core::index::{read_embeddings, Searcher};
use mvr_core::lateint::{kernel_registry, ScoringKernel, DEFAULT_BATCH_SIZE, DEFAULT_KERNEL};
use mvr_core::train::{history_to_csv, train_toy, TrainConfig};
use mvr_core::{
    build_index, load_index, memory_report, save_index, scoring_flops, truncate_index, Budget, BudgetLadder, Dtype,
    Error, ErrorClass, MemoryReport, MetaEmbeddingSet, NestedIndex, Result, Side,
};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_FORMAT: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_DIVERGENCE: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "mvr", version, about = "Prefix-nested multi-vector retrieval")]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate an embedding file and report its shape.
    IngestCheck(IngestCheckArgs),
    /// Build a nested index from candidate embeddings.
    BuildIndex(BuildIndexArgs),
    /// Keep the first r_c rows of every candidate.
    Truncate(TruncateArgs),
    /// Rank all candidates for each query; writes TSV.
    Search(SearchArgs),
    /// Score a ranking metric at one budget.
    Eval(EvalArgs),
    /// Score a ranking metric at every ladder budget; writes CSV or JSON.
    Sweep(SweepArgs),
    /// Analytic scoring cost and index memory for a budget.
    Flops(FlopsArgs),
    /// Time scoring over repeated runs.
    Bench(BenchArgs),
    /// Train the toy encoder on synthetic data.
    TrainToy(TrainToyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SideArg {
    Query,
    Candidate,
}

impl From<SideArg> for Side {
    fn from(s: SideArg) -> Self {
        match s {
            SideArg::Query => Side::Query,
            SideArg::Candidate => Side::Candidate,
        }
    }
}

#[derive(Debug, Args)]
pub struct IngestCheckArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "candidate")]
    pub side: SideArg,
    /// Treat each record as a token matrix and pool it (e.g. `split@16`).
    #[arg(long)]
    pub pool: Option<String>,
}

#[derive(Debug, Args)]
pub struct BuildIndexArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Rows kept per candidate; defaults to all rows in the input.
    #[arg(long)]
    pub r_c: Option<usize>,
    #[arg(long, default_value = "bf16")]
    pub dtype: Dtype,
    #[arg(long)]
    pub pool: Option<String>,
}

#[derive(Debug, Args)]
pub struct TruncateArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub r_c: usize,
    #[arg(long)]
    pub output: PathBuf,
}

/// Flags shared by every command that scores queries against an index.
#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
    pub batch_size: usize,
    #[arg(long, default_value = DEFAULT_KERNEL)]
    pub kernel: String,
    /// Pool query records before scoring.
    #[arg(long)]
    pub pool: Option<String>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub query: QueryArgs,
    /// `rq:rc`; defaults to all query rows and all stored candidate rows.
    #[arg(long)]
    pub budget: Option<Budget>,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub query: QueryArgs,
    #[arg(long)]
    pub qrels: PathBuf,
    #[arg(long)]
    pub budget: Option<Budget>,
    /// Metric names, comma separated (`precision@1`, `ndcg@5`, ...).
    #[arg(long, default_value = "precision@1,ndcg@5")]
    pub metric: String,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub query: QueryArgs,
    #[arg(long)]
    pub qrels: PathBuf,
    #[arg(long, default_value = "1:1,2:4,4:8,8:16,16:64")]
    pub ladder: BudgetLadder,
    #[arg(long, default_value = "ndcg@5")]
    pub metric: String,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: OutputFormat,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FlopsArgs {
    #[arg(long)]
    pub budget: Budget,
    #[arg(long)]
    pub dim: usize,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value = "bf16")]
    pub dtype: Dtype,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub query: QueryArgs,
    #[arg(long)]
    pub budget: Option<Budget>,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
}

#[derive(Debug, Args)]
pub struct TrainToyArgs {
    /// `key = value` file; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub ladder: Option<BudgetLadder>,
    /// Directory for `params.json`, `history.csv` and `sweep.csv`.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

pub fn parse_args<I, T>(argv: I) -> std::result::Result<RunConfig, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    RunConfig::try_parse_from(argv)
}

pub fn exit_code(err: &Error) -> i32 {
    match err.class() {
        ErrorClass::Usage => EXIT_USAGE,
        ErrorClass::Format => EXIT_FORMAT,
        ErrorClass::Numeric => EXIT_NUMERIC,
        ErrorClass::Divergence => EXIT_DIVERGENCE,
    }
}

/// Execute a parsed command, writing its report to `out`.
pub fn run(config: RunConfig, out: &mut dyn Write) -> Result<()> {
    match config.command {
        Command::IngestCheck(a) => ingest_check(a, out),
        Command::BuildIndex(a) => build(a, out),
        Command::Truncate(a) => truncate(a, out),
        Command::Search(a) => search(a, out),
        Command::Eval(a) => eval(a, out),
        Command::Sweep(a) => sweep(a, out),
        Command::Flops(a) => flops(a, out),
        Command::Bench(a) => bench(a, out),
        Command::TrainToy(a) => train(a, out),
    }
}

fn load_sets(path: &Path, side: Side, pool: Option<&str>) -> Result<Vec<(u64, MetaEmbeddingSet)>> {
    let file = read_embeddings(path)?;
    if file.records.is_empty() {
        return Err(Error::EmptyInput);
    }
    match pool {
        None => file.into_sets(side),
        Some(selector) => {
            let pooler = pooler_registry().create(selector)?;
            file.records
                .iter()
                .map(|(id, tokens)| Ok((*id, pooler.pool(tokens, file.dim, side)?)))
                .collect()
        }
    }
}

struct Loaded {
    index: NestedIndex,
    ids: Vec<u64>,
    queries: Vec<MetaEmbeddingSet>,
    kernel: Box<dyn ScoringKernel>,
}

impl Loaded {
    fn open(a: &QueryArgs) -> Result<Self> {
        if a.batch_size == 0 {
            return Err(Error::Config("--batch-size must be at least 1".into()));
        }
        let kernel = kernel_registry().create(&a.kernel)?;
        let index = load_index(&a.index)?;
        let (ids, queries) = load_sets(&a.queries, Side::Query, a.pool.as_deref())?.into_iter().unzip();
        Ok(Self {
            index,
            ids,
            queries,
            kernel,
        })
    }

    fn searcher(&self, batch_size: usize) -> Searcher<'_> {
        Searcher::new(&self.index)
            .kernel(self.kernel.as_ref())
            .batch_size(batch_size)
            .query_ids(&self.ids)
    }

    fn full_budget(&self, requested: Option<Budget>) -> Result<Budget> {
        match requested {
            Some(b) => Ok(b),
            None => Budget::new(self.queries[0].rows(), self.index.r_c()),
        }
    }
}

fn writer(path: Option<&Path>, out: &mut dyn Write, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            f(&mut w)?;
            w.flush()?;
            Ok(())
        }
        None => f(out),
    }
}

fn ingest_check(a: IngestCheckArgs, out: &mut dyn Write) -> Result<()> {
    let sets = load_sets(&a.input, a.side.into(), a.pool.as_deref())?;
    let mut seen = std::collections::HashSet::with_capacity(sets.len());
    for (id, _) in &sets {
        if !seen.insert(*id) {
            return Err(Error::DuplicateDocId(*id));
        }
    }
    let first = &sets[0].1;
    writeln!(out, "ok {} records, {} rows x {} dims", sets.len(), first.rows(), first.dim())?;
    Ok(())
}

fn build(a: BuildIndexArgs, out: &mut dyn Write) -> Result<()> {
    let sets = load_sets(&a.input, Side::Candidate, a.pool.as_deref())?;
    let r_c = a.r_c.unwrap_or(sets[0].1.rows());
    let index = build_index(&sets, r_c, a.dtype)?;
    save_index(&index, &a.output)?;
    let mem = memory_report(&index);
    writeln!(
        out,
        "wrote {} candidates, r_c {}, dim {}, {}: {} bytes ({} GiB)",
        index.len(),
        index.r_c(),
        index.dim(),
        index.dtype(),
        mem.bytes,
        mem.gib_string()
    )?;
    Ok(())
}

fn truncate(a: TruncateArgs, out: &mut dyn Write) -> Result<()> {
    let index = truncate_index(&load_index(&a.index)?, a.r_c)?;
    save_index(&index, &a.output)?;
    writeln!(out, "wrote {} candidates, r_c {}", index.len(), index.r_c())?;
    Ok(())
}

fn search(a: SearchArgs, out: &mut dyn Write) -> Result<()> {
    let loaded = Loaded::open(&a.query)?;
    let budget = loaded.full_budget(a.budget)?;
    let lists = loaded.searcher(a.query.batch_size).search(&loaded.queries, budget, a.k)?;
    writer(a.output.as_deref(), out, |w| {
        for list in &lists {
            for (rank, e) in list.entries.iter().enumerate() {
                writeln!(w, "{}\t{}\t{}\t{:.6}", list.query_id, rank + 1, e.doc_id, e.score)?;
            }
        }
        Ok(())
    })
}

fn parse_metrics(spec: &str) -> Result<Vec<Box<dyn Metric>>> {
    spec.split(',')
        .map(|m| metric_registry().create(m.trim()))
        .collect()
}

fn eval(a: EvalArgs, out: &mut dyn Write) -> Result<()> {
    let metrics = parse_metrics(&a.metric)?;
    let loaded = Loaded::open(&a.query)?;
    let qrels = Qrels::read_tsv(&a.qrels)?;
    let budget = loaded.full_budget(a.budget)?;
    let depth = metrics.iter().map(|m| m.depth()).max().unwrap_or(1).min(loaded.index.len());
    let lists = loaded.searcher(a.query.batch_size).search(&loaded.queries, budget, depth)?;
    for m in &metrics {
        writeln!(out, "{}\t{}\t{:.6}", budget, m.name(), m.evaluate(&lists, &qrels)?)?;
    }
    Ok(())
}

fn sweep(a: SweepArgs, out: &mut dyn Write) -> Result<()> {
    let metric = metric_registry().create(&a.metric)?;
    let loaded = Loaded::open(&a.query)?;
    let qrels = Qrels::read_tsv(&a.qrels)?;
    let options = SweepOptions {
        kernel: loaded.kernel.as_ref(),
        batch_size: a.query.batch_size,
    };
    let points = budget_sweep(
        &loaded.index,
        &loaded.queries,
        &loaded.ids,
        &qrels,
        &a.ladder,
        metric.as_ref(),
        &options,
    )?;
    let text = match a.format {
        OutputFormat::Csv => sweep_to_csv(&points),
        OutputFormat::Json => {
            let mut s = serde_json::to_string_pretty(&points).map_err(|e| Error::Parse(e.to_string()))?;
            s.push('\n');
            s
        }
    };
    writer(a.output.as_deref(), out, |w| Ok(w.write_all(text.as_bytes())?))
}

fn flops(a: FlopsArgs, out: &mut dyn Write) -> Result<()> {
    let f = scoring_flops(a.budget, a.dim, a.n);
    let mem = MemoryReport::from_shape(a.n, a.budget.r_c(), a.dim, a.dtype);
    writeln!(out, "budget\t{}", a.budget)?;
    writeln!(out, "flops\t{f}\t{:.3e}\t{:.2} G", f as f64, f as f64 / 1e9)?;
    writeln!(out, "memory\t{}\t{} GiB\t{}", mem.bytes, mem.gib_string(), a.dtype)?;
    Ok(())
}

fn bench(a: BenchArgs, out: &mut dyn Write) -> Result<()> {
    if a.repeats == 0 {
        return Err(Error::Config("--repeats must be at least 1".into()));
    }
    let loaded = Loaded::open(&a.query)?;
    let budget = loaded.full_budget(a.budget)?;
    let searcher = loaded.searcher(a.query.batch_size);
    searcher.score(&loaded.queries, budget)?;
    let mut ms = Vec::with_capacity(a.repeats);
    for _ in 0..a.repeats {
        let start = Instant::now();
        searcher.score(&loaded.queries, budget)?;
        ms.push(start.elapsed().as_secs_f64() * 1e3);
    }
    let mean = ms.iter().sum::<f64>() / ms.len() as f64;
    let std = (ms.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / ms.len() as f64).sqrt();
    writeln!(
        out,
        "{} queries x {} candidates at {budget} ({}): {mean:.3} ms ± {std:.3} ms over {} runs",
        loaded.queries.len(),
        loaded.index.len(),
        loaded.kernel.name(),
        a.repeats
    )?;
    Ok(())
}

fn train(a: TrainToyArgs, out: &mut dyn Write) -> Result<()> {
    let mut config = match &a.config {
        Some(p) => TrainConfig::read(p)?,
        None => TrainConfig::default(),
    };
    if let Some(v) = a.seed {
        config.seed = v;
    }
    if let Some(v) = a.steps {
        config.steps = v;
    }
    if let Some(v) = a.tau {
        config.tau = v;
    }
    if let Some(v) = a.lr {
        config.lr = v;
    }
    if let Some(v) = a.batch_size {
        config.batch_size = v;
    }
    if let Some(v) = a.ladder {
        config.weights = vec![1.0; v.len()];
        config.ladder = v;
    }
    let outcome = train_toy(&config)?;

    std::fs::create_dir_all(&a.out_dir)?;
    let params = serde_json::json!({
        "config": config.to_kv(),
        "query": outcome.params_q,
        "candidate": outcome.params_c,
    });
    let params = serde_json::to_string_pretty(&params).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(a.out_dir.join("params.json"), params + "\n")?;
    std::fs::write(a.out_dir.join("history.csv"), history_to_csv(&outcome.history))?;
    let mut points = outcome.precision.clone();
    points.extend(outcome.ndcg.iter().cloned());
    std::fs::write(a.out_dir.join("sweep.csv"), sweep_to_csv(&points))?;

    writeln!(
        out,
        "loss {:.6} -> {:.6} over {} steps",
        outcome.initial_loss(),
        outcome.final_loss(),
        config.steps
    )?;
    for p in &points {
        writeln!(out, "{}\t{}\t{:.6}", p.budget, p.metric, p.value)?;
    }
    Ok(())
}
