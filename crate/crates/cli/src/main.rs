//! `hetembed`: train content-aware network embeddings, add vectors for new
//! nodes, evaluate, search and export.
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration error, 3 data
//! error, 4 numeric failure.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hetembed_core::{Variant, WalkMode};

use crate::config::RunConfig;
use crate::error::{Failure, Kind, Result};

#[derive(Parser, Debug)]
#[command(name = "hetembed", version, about = "Content-aware heterogeneous network embedding")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (1 gives byte-reproducible output on any machine).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Print the effective configuration (file plus flags) as TOML and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Learn node vectors (and a text encoder) from a graph.
    Train(TrainArgs),
    /// Add vectors for nodes that arrived after training.
    Update(UpdateArgs),
    /// Run an evaluation protocol.
    Eval {
        #[command(subcommand)]
        task: EvalTask,
    },
    /// Most similar nodes of a type to a query node.
    Search(SearchArgs),
    /// Write a planted-community fixture.
    Synth(SynthArgs),
    /// Write embeddings or embedding-projector files.
    Export(ExportArgs),
}

#[derive(Args, Debug, Default)]
struct TrainArgs {
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long)]
    words: Option<PathBuf>,
    /// Output model file.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Output per-epoch loss log (CSV); defaults to the model path with `.log.csv`.
    #[arg(long)]
    log: Option<PathBuf>,
    /// hsg, hsg-sr or se-hsg.
    #[arg(long)]
    variant: Option<Variant>,
    /// Embedding dimension.
    #[arg(long = "d", alias = "dim")]
    dim: Option<usize>,
    /// Context window.
    #[arg(long, alias = "window")]
    tau: Option<usize>,
    /// Walks per start node.
    #[arg(long)]
    walks: Option<usize>,
    /// Walk length in nodes.
    #[arg(long)]
    len: Option<usize>,
    /// Comma-separated meta-path schemes, e.g. APA,APPA,APVPA.
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<String>>,
    /// Use uniform random walks instead of meta-path walks.
    #[arg(long)]
    random_walks: bool,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    /// Relative loss change that stops training; 0 disables early stopping.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Semantic regularizer weight (hsg-sr).
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    negatives: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct UpdateArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    /// The graph the model was trained on.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Directory with the delta's nodes.tsv, edges.tsv and content.tsv.
    #[arg(long)]
    delta: Option<PathBuf>,
    #[arg(long)]
    words: Option<PathBuf>,
    /// Embeddings export to append to; created with all trained vectors if absent.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Meta-path for the rooted walks.
    #[arg(long)]
    scheme: Option<String>,
    /// Rooted walks per new node.
    #[arg(long = "online-walks")]
    walks: Option<usize>,
    #[arg(long, alias = "window")]
    tau: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum EvalTask {
    /// New-collaboration prediction (accuracy, F1).
    Linkpred(LinkpredArgs),
    /// Co-cited paper retrieval (HitRatio@k).
    Retrieval(RankingArgs),
    /// Venue recommendation (Recall@k).
    Recommend(RankingArgs),
    /// Same as the top-level search command.
    Search(SearchArgs),
}

#[derive(Args, Debug, Default)]
struct LinkpredArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long)]
    events: Option<PathBuf>,
    /// Report CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct RankingArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    events: Option<PathBuf>,
    /// Comma-separated cut-offs.
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    /// Negatives per query (retrieval).
    #[arg(long)]
    negatives: Option<usize>,
    /// One shared negative draw for all queries (retrieval).
    #[arg(long)]
    shared_negatives: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct SearchArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    /// Label of the query node.
    #[arg(long)]
    query: String,
    /// Node type to return.
    #[arg(long = "type")]
    target: String,
    #[arg(long, default_value_t = 10)]
    k: usize,
}

#[derive(Args, Debug, Default)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    communities: Option<usize>,
    /// Authors per community.
    #[arg(long)]
    authors: Option<usize>,
    /// Papers per community.
    #[arg(long)]
    papers: Option<usize>,
    /// Venues per community.
    #[arg(long)]
    venues: Option<usize>,
    #[arg(long)]
    cross_prob: Option<f64>,
    #[arg(long)]
    venue_cross_prob: Option<f64>,
    #[arg(long)]
    citation_cross_prob: Option<f64>,
    #[arg(long)]
    authors_per_paper: Option<usize>,
    #[arg(long)]
    citations_per_paper: Option<usize>,
    #[arg(long)]
    tokens_per_paper: Option<usize>,
    #[arg(long)]
    word_dim: Option<usize>,
    #[arg(long)]
    holdout: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct ExportArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    /// Projector vectors file (tab-separated floats).
    #[arg(long)]
    vectors: Option<PathBuf>,
    /// Projector metadata file (label, type, category).
    #[arg(long)]
    metadata: Option<PathBuf>,
    /// `label<TAB>category` lines for the metadata file.
    #[arg(long)]
    categories: Option<PathBuf>,
    /// Plain embeddings file (`label<TAB>v_1 … v_d`).
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_opt<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

impl TrainArgs {
    fn apply(self, cfg: &mut RunConfig) {
        set_opt(&mut cfg.paths.graph, self.graph);
        set_opt(&mut cfg.paths.words, self.words);
        set_opt(&mut cfg.paths.model, self.model);
        set_opt(&mut cfg.paths.log, self.log);
        set(&mut cfg.train.variant, self.variant);
        set(&mut cfg.train.dim, self.dim);
        set(&mut cfg.walk.window, self.tau);
        set(&mut cfg.walk.walks_per_node, self.walks);
        set(&mut cfg.walk.walk_length, self.len);
        set(&mut cfg.walk.schemes, self.schemes);
        if self.random_walks {
            cfg.walk.mode = WalkMode::Random;
        }
        set(&mut cfg.train.max_epochs, self.epochs);
        set(&mut cfg.train.adam.learning_rate, self.lr);
        set(&mut cfg.train.batch_size, self.batch);
        set(&mut cfg.train.tolerance, self.tolerance);
        set(&mut cfg.train.gamma, self.gamma);
        set(&mut cfg.train.negatives, self.negatives);
    }
}

impl UpdateArgs {
    fn apply(self, cfg: &mut RunConfig) {
        set_opt(&mut cfg.paths.model, self.model);
        set_opt(&mut cfg.paths.graph, self.graph);
        set_opt(&mut cfg.paths.delta, self.delta);
        set_opt(&mut cfg.paths.words, self.words);
        set_opt(&mut cfg.paths.embeddings, self.embeddings);
        set_opt(&mut cfg.online.scheme, self.scheme);
        set(&mut cfg.online.walks, self.walks);
        set_opt(&mut cfg.online.window, self.tau);
        set(&mut cfg.online.learning_rate, self.lr);
        set(&mut cfg.online.max_iterations, self.iterations);
        set(&mut cfg.online.tolerance, self.tolerance);
    }
}

impl LinkpredArgs {
    fn apply(&mut self, cfg: &mut RunConfig) {
        set_opt(&mut cfg.paths.model, self.model.take());
        set_opt(&mut cfg.paths.graph, self.graph.take());
        set_opt(&mut cfg.paths.events, self.events.take());
    }
}

impl RankingArgs {
    fn apply(&mut self, cfg: &mut RunConfig) {
        set_opt(&mut cfg.paths.model, self.model.take());
        set_opt(&mut cfg.paths.events, self.events.take());
        set(&mut cfg.eval.k, self.k.take());
        set(&mut cfg.eval.negatives, self.negatives);
        if self.shared_negatives {
            cfg.eval.shared_negatives = true;
        }
    }
}

impl SynthArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let s = &mut cfg.synth;
        set(&mut s.communities, self.communities);
        set(&mut s.authors, self.authors);
        set(&mut s.papers, self.papers);
        set(&mut s.venues, self.venues);
        set(&mut s.cross_prob, self.cross_prob);
        set_opt(&mut s.venue_cross_prob, self.venue_cross_prob);
        set_opt(&mut s.citation_cross_prob, self.citation_cross_prob);
        set(&mut s.authors_per_paper, self.authors_per_paper);
        set(&mut s.citations_per_paper, self.citations_per_paper);
        set(&mut s.tokens_per_paper, self.tokens_per_paper);
        set(&mut s.word_dim, self.word_dim);
        set(&mut s.holdout, self.holdout);
    }
}

/// A subcommand with its flags already folded into the config.
enum Job {
    Train,
    Update,
    Linkpred(Option<PathBuf>),
    Retrieval(Option<PathBuf>),
    Recommend(Option<PathBuf>),
    Search { query: String, target: String, k: usize },
    Synth(PathBuf),
    Export { vectors: Option<PathBuf>, metadata: Option<PathBuf> },
}

fn search_job(cfg: &mut RunConfig, a: SearchArgs) -> Job {
    set_opt(&mut cfg.paths.model, a.model);
    Job::Search {
        query: a.query,
        target: a.target,
        k: a.k,
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    set_opt(&mut cfg.seed, cli.seed);
    set_opt(&mut cfg.workers, cli.workers);
    let job = match cli.command {
        Command::Train(a) => {
            a.apply(&mut cfg);
            Job::Train
        }
        Command::Update(a) => {
            a.apply(&mut cfg);
            Job::Update
        }
        Command::Eval { task } => match task {
            EvalTask::Linkpred(mut a) => {
                a.apply(&mut cfg);
                Job::Linkpred(a.out)
            }
            EvalTask::Retrieval(mut a) => {
                a.apply(&mut cfg);
                Job::Retrieval(a.out)
            }
            EvalTask::Recommend(mut a) => {
                a.apply(&mut cfg);
                Job::Recommend(a.out)
            }
            EvalTask::Search(a) => search_job(&mut cfg, a),
        },
        Command::Search(a) => search_job(&mut cfg, a),
        Command::Synth(a) => {
            a.apply(&mut cfg);
            Job::Synth(a.out)
        }
        Command::Export(a) => {
            set_opt(&mut cfg.paths.model, a.model);
            set_opt(&mut cfg.paths.categories, a.categories);
            set_opt(&mut cfg.paths.embeddings, a.embeddings);
            Job::Export {
                vectors: a.vectors,
                metadata: a.metadata,
            }
        }
    };
    cfg.apply_seed();
    if cli.print_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    if let Some(n) = cfg.workers {
        if n == 0 {
            return Err(Failure::config("--workers must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::new(Kind::Other, e))?;
    }
    match job {
        Job::Train => commands::train(&cfg),
        Job::Update => commands::update(&cfg),
        Job::Linkpred(out) => commands::linkpred(&cfg, out.as_deref()),
        Job::Retrieval(out) => commands::retrieval(&cfg, out.as_deref()),
        Job::Recommend(out) => commands::recommend(&cfg, out.as_deref()),
        Job::Search { query, target, k } => commands::search(&cfg, &query, &target, k),
        Job::Synth(out) => commands::synth(&cfg, &out),
        Job::Export { vectors, metadata } => commands::export(&cfg, vectors.as_deref(), metadata.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HETEMBED_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            f.kind.exit_code()
        }
    }
}
