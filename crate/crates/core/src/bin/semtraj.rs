use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::LevelFilter;

use semtraj::corpus::load_corpus;
use semtraj::divergence::BackgroundMode;
use semtraj::embedding::{fetch_embeddings, BandwidthRule, FetchConfig, KernelMode};
use semtraj::pipeline::{self, RunConfig, RunManifest, Stage};
use semtraj::report::read_kld_report_csv;
use semtraj::Error;

/// Diachronic divergence of a cohort's publications from their field.
#[derive(Parser, Debug)]
#[command(name = "semtraj", version)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a corpus file and report skipped records.
    Validate {
        /// JSON Lines corpus file.
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Per-slice document and token counts for cohort and field (CSV to stdout).
    SliceStats(Analysis),
    /// Cohort vs field relative entropy within each slice.
    KldSync(Analysis),
    /// Cohort slices against field slices of every period.
    KldAsync(Analysis),
    /// Most divergent significant terms of one slice from a previous kld-sync run.
    KldTerms {
        /// Output directory of the kld-sync run.
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Slice label, e.g. 1999-2000.
        #[arg(long)]
        slice: String,
        /// Number of terms to list.
        #[arg(long, default_value_t = 10)]
        top: usize,
        /// List the terms most typical of the field instead of the cohort.
        #[arg(long)]
        field_side: bool,
    },
    /// Embedding density trajectories around the cohort's documents.
    Ede {
        #[command(flatten)]
        analysis: Analysis,
        #[command(flatten)]
        ede: EdeArgs,
    },
    /// Relative frequency of the cohort's most used terms per slice.
    Trends {
        #[command(flatten)]
        analysis: Analysis,
        #[command(flatten)]
        trends: TrendArgs,
    },
    /// Download document embeddings into a local file.
    FetchEmbeddings {
        /// JSON Lines corpus file.
        #[arg(long)]
        corpus: PathBuf,
        /// Embedding file to write.
        #[arg(long, default_value = "embeddings.tsv")]
        output: PathBuf,
        /// Embedding service URL.
        #[arg(long, env = "EMBED_ENDPOINT")]
        endpoint: String,
        #[arg(long, default_value = "text-embedding-3-large")]
        model: String,
        #[arg(long, default_value_t = 100)]
        batch_size: usize,
        /// Maximum requests in flight.
        #[arg(long, default_value_t = 4)]
        concurrency: usize,
        /// Per-document vector cache.
        #[arg(long, default_value = ".embedding-cache")]
        cache_dir: PathBuf,
    },
    /// Run every stage whose inputs are available.
    Report {
        #[command(flatten)]
        analysis: Analysis,
        #[command(flatten)]
        ede: EdeArgs,
        #[command(flatten)]
        trends: TrendArgs,
    },
}

/// Flags shared by the analysis subcommands. Unset flags fall back to the
/// config file, then to the defaults shown.
#[derive(Args, Debug)]
struct Analysis {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// JSON Lines corpus file.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Cohort author id, exactly as in the corpus; repeatable.
    #[arg(long = "cohort-authors", value_name = "ID", num_args = 1..)]
    cohort_authors: Vec<String>,
    /// File with one cohort author id per line.
    #[arg(long)]
    cohort_file: Option<PathBuf>,
    /// Slice width in years [default: 2].
    #[arg(long)]
    window: Option<u32>,
    /// First year of the first slice [default: 1957].
    #[arg(long)]
    start_year: Option<i32>,
    /// Background weight of Jelinek-Mercer smoothing [default: 0.05].
    #[arg(long)]
    lambda: Option<f64>,
    /// Welch t-test significance level [default: 0.05].
    #[arg(long)]
    alpha: Option<f64>,
    /// Smoothing background [default: pair-union].
    #[arg(long, value_enum)]
    background: Option<Background>,
    /// Replacement stopword list, one word per line.
    #[arg(long)]
    stopwords: Option<PathBuf>,
    /// Tab-separated term/lemma table used instead of the stemmer.
    #[arg(long)]
    lemma_table: Option<PathBuf>,
    /// Keep word forms as they are.
    #[arg(long)]
    no_stem: bool,
    /// Output directory [default: out].
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Cache directory [default: <out-dir>/.cache].
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Worker threads [default: all cores].
    #[arg(short = 'j', long)]
    parallelism: Option<usize>,
}

#[derive(Args, Debug)]
struct EdeArgs {
    /// Embedding file (`id<TAB>v1,v2,...` under a `# dim=` header).
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Embedding service used when no file is given.
    #[arg(long, env = "EMBED_ENDPOINT")]
    endpoint: Option<String>,
    /// KDE bandwidth: scott, global or fixed:<h> [default: scott].
    #[arg(long)]
    bandwidth: Option<BandwidthRule>,
    /// Kernel normalization [default: as-written].
    #[arg(long, value_enum)]
    kernel_mode: Option<Kernel>,
    /// Reference document id; repeatable [default: every cohort document].
    #[arg(long = "reference", value_name = "ID")]
    references: Vec<String>,
}

#[derive(Args, Debug)]
struct TrendArgs {
    /// Number of terms to track [default: 20].
    #[arg(long)]
    top_k: Option<usize>,
    /// Slices with fewer cohort tokens are excluded [default: 50].
    #[arg(long)]
    min_tokens: Option<u64>,
    /// Plot smoothing bandwidth in slices [default: 1.0].
    #[arg(long)]
    smoothing: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Background {
    PairUnion,
    WholeCorpus,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kernel {
    AsWritten,
    MultivariateNormalized,
}

impl Analysis {
    fn resolve(&self) -> Result<RunConfig, Error> {
        let mut c = match &self.config {
            Some(p) => RunConfig::from_toml_file(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.corpus {
            c.corpus = v.clone();
        }
        if !self.cohort_authors.is_empty() {
            c.cohort_authors = self.cohort_authors.clone();
        }
        if self.cohort_file.is_some() {
            c.cohort_file = self.cohort_file.clone();
        }
        if let Some(v) = self.window {
            c.window = v;
        }
        if let Some(v) = self.start_year {
            c.start_year = v;
        }
        if let Some(v) = self.lambda {
            c.lambda = v;
        }
        if let Some(v) = self.alpha {
            c.alpha = v;
        }
        if let Some(v) = self.background {
            c.background = match v {
                Background::PairUnion => BackgroundMode::PairUnion,
                Background::WholeCorpus => BackgroundMode::WholeCorpus,
            };
        }
        if self.stopwords.is_some() {
            c.normalization.stopwords = self.stopwords.clone();
        }
        if self.lemma_table.is_some() {
            c.normalization.lemma_table = self.lemma_table.clone();
        }
        if self.no_stem {
            c.normalization.stem = false;
        }
        if let Some(v) = &self.out_dir {
            c.out_dir = v.clone();
        }
        if self.cache_dir.is_some() {
            c.cache_dir = self.cache_dir.clone();
        }
        if self.parallelism.is_some() {
            c.parallelism = self.parallelism;
        }
        if c.corpus.as_os_str().is_empty() {
            return Err(Error::InvalidArgument("no corpus given (--corpus or config file)".into()));
        }
        if c.cohort_authors.is_empty() && c.cohort_file.is_none() {
            return Err(Error::InvalidArgument("no cohort given (--cohort-authors or --cohort-file)".into()));
        }
        Ok(c)
    }
}

impl EdeArgs {
    fn apply(&self, c: &mut RunConfig) {
        if self.embeddings.is_some() {
            c.embeddings = self.embeddings.clone();
        }
        if self.endpoint.is_some() {
            c.embed_endpoint = self.endpoint.clone();
        }
        c.embed_api_key = std::env::var("EMBED_API_KEY").ok();
        if let Some(b) = self.bandwidth {
            c.bandwidth = b;
        }
        if let Some(k) = self.kernel_mode {
            c.kernel_mode = match k {
                Kernel::AsWritten => KernelMode::AsWritten,
                Kernel::MultivariateNormalized => KernelMode::MultivariateNormalized,
            };
        }
        if !self.references.is_empty() {
            c.references = self.references.clone();
        }
    }

    fn available(&self, c: &RunConfig) -> bool {
        c.embeddings.is_some() || c.embed_endpoint.is_some()
    }
}

impl TrendArgs {
    fn apply(&self, c: &mut RunConfig) {
        if let Some(v) = self.top_k {
            c.top_k = v;
        }
        if let Some(v) = self.min_tokens {
            c.min_tokens = v;
        }
        if let Some(v) = self.smoothing {
            c.smoothing_bandwidth = v;
        }
    }
}

fn summarize(manifest: &RunManifest, out_dir: &Path) {
    for s in &manifest.stages {
        println!(
            "{:<13} {:>8.3}s  cache {} hit / {} miss",
            s.stage.name(),
            s.seconds,
            s.cache_hits,
            s.cache_misses
        );
    }
    println!("{} files written to {}", manifest.outputs.len(), out_dir.display());
}

fn run_stages(config: &RunConfig, stages: &[Stage]) -> Result<(), Error> {
    let manifest = pipeline::run(config, stages)?;
    summarize(&manifest, &config.out_dir);
    Ok(())
}

fn kld_terms(out_dir: &Path, slice: &str, top: usize, field_side: bool) -> Result<(), Error> {
    let slice: semtraj::corpus::SliceId = slice.parse()?;
    let path = out_dir.join("terms").join(format!("{slice}.csv"));
    let text = std::fs::read_to_string(&path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
    let report = read_kld_report_csv(&text)?;
    let mut rows: Vec<_> = report.contributions.iter().filter(|c| c.significant).collect();
    if field_side {
        rows.reverse();
    }
    println!("{:>4}  {:<24} {:>12} {:>12} {:>12} {:>10}", "rank", "term", "kld_bits", "p_d", "p_q", "p_value");
    for (i, c) in rows.iter().take(top).enumerate() {
        println!(
            "{:>4}  {:<24} {:>12.6} {:>12.6} {:>12.6} {:>10.2e}",
            i + 1,
            c.term,
            c.kld_bits,
            c.p_d,
            c.p_q,
            c.p_value
        );
    }
    Ok(())
}

fn validate(corpus: &Path) -> Result<(), Error> {
    let (corpus, stats) = load_corpus(corpus, &Default::default())?;
    for r in &stats.rejections {
        eprintln!("line {}: skipped {:?}: {}", r.line, r.id, r.reason);
    }
    println!(
        "{} documents accepted, {} skipped, years {}-{}",
        stats.accepted,
        stats.rejections.len(),
        corpus.year_min,
        corpus.year_max
    );
    Ok(())
}

fn slice_stats(config: &RunConfig) -> Result<(), Error> {
    println!("slice,partial,cohort_docs,field_docs,cohort_tokens,field_tokens");
    for s in pipeline::slice_stats(config)? {
        println!(
            "{},{},{},{},{},{}",
            s.slice, s.partial, s.cohort_docs, s.field_docs, s.cohort_tokens, s.field_tokens
        );
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn fetch(corpus: &Path, output: &Path, endpoint: &str, model: &str, batch_size: usize, concurrency: usize, cache_dir: &Path) -> Result<(), Error> {
    let key = std::env::var("EMBED_API_KEY").map_err(|_| Error::MissingPrerequisite("EMBED_API_KEY is not set".into()))?;
    let (corpus, _) = load_corpus(corpus, &Default::default())?;
    let mut config = FetchConfig::new(endpoint, key, cache_dir);
    config.model = model.to_string();
    config.batch_size = batch_size;
    config.concurrency = concurrency;
    let outcome = fetch_embeddings(corpus.documents(), &config)?;
    outcome.store.write(output)?;
    println!(
        "{} vectors (dim {}) written to {}: {} from cache, {} fetched in {} requests",
        outcome.store.len(),
        outcome.store.dim,
        output.display(),
        outcome.cache_hits,
        outcome.fetched,
        outcome.requests
    );
    Ok(())
}

fn dispatch(command: Command) -> Result<(), Error> {
    match command {
        Command::Validate { corpus } => validate(&corpus),
        Command::SliceStats(a) => slice_stats(&a.resolve()?),
        Command::KldSync(a) => run_stages(&a.resolve()?, &[Stage::KldSync]),
        Command::KldAsync(a) => run_stages(&a.resolve()?, &[Stage::KldAsync]),
        Command::KldTerms {
            out_dir,
            slice,
            top,
            field_side,
        } => kld_terms(&out_dir, &slice, top, field_side),
        Command::Ede { analysis, ede } => {
            let mut c = analysis.resolve()?;
            ede.apply(&mut c);
            run_stages(&c, &[Stage::Ede])
        }
        Command::Trends { analysis, trends } => {
            let mut c = analysis.resolve()?;
            trends.apply(&mut c);
            run_stages(&c, &[Stage::TokenTrends])
        }
        Command::FetchEmbeddings {
            corpus,
            output,
            endpoint,
            model,
            batch_size,
            concurrency,
            cache_dir,
        } => fetch(&corpus, &output, &endpoint, &model, batch_size, concurrency, &cache_dir),
        Command::Report { analysis, ede, trends } => {
            let mut c = analysis.resolve()?;
            ede.apply(&mut c);
            trends.apply(&mut c);
            let mut stages = vec![Stage::KldSync, Stage::KldAsync, Stage::TokenTrends];
            if ede.available(&c) {
                stages.push(Stage::Ede);
            }
            run_stages(&c, &stages)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => LevelFilter::Warn,
        1 => LevelFilter::Info,
        _ => LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();

    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidArgument(_) | Error::MissingPrerequisite(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
