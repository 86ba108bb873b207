use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "concomp",
    version,
    about = "Exact privacy accounting for concurrent composition of interactive DP mechanisms"
)]
pub struct Cli {
    /// Seed for sampled experiments.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,

    /// Write the result here instead of standard output.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,

    /// Output format; tabular experiment output defaults to csv, everything
    /// else to json.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Composition bounds for (ε, δ) parameters.
    #[command(subcommand)]
    Bound(BoundCommand),

    /// Exact privacy loss of a mechanism file: the least ε such that every
    /// deterministic adversary's views are (ε, δ)-indistinguishable.
    Privloss(PrivlossArgs),

    /// Concurrent composition of mechanism files, free-order or ordered
    /// round-robin.
    Concomp(ConcompArgs),

    /// Build the randomized-response simulator of a pure-DP interactive
    /// mechanism (interactive post-processing of one RR bit reproducing
    /// every adversary's view), optionally verifying it exactly.
    SimulateRr(SimulateArgs),

    /// Decide by exact simplex whether a binary 2-round mechanism is an
    /// interactive post-processing of approximate randomized response.
    LpCheck(LpArgs),

    /// Seeded experiments.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
}

#[derive(Subcommand, Debug)]
pub enum BoundCommand {
    /// Basic composition theorem for pure DP: ε_g = Σ ε_i, δ_g = 0.
    Basic {
        /// Comma-separated ε values.
        #[arg(long, value_delimiter = ',', required = true)]
        eps: Vec<f64>,
    },
    /// Hybrid-argument bound for approximate DP: ε_g = Σ ε_i with δ_g
    /// minimized over the order of the components.
    Hybrid {
        /// Comma-separated ε:δ pairs.
        #[arg(long, value_delimiter = ',', required = true)]
        params: Vec<String>,
    },
    /// Optimal composition theorem: least ε_g whose randomized-response
    /// product meets δ_g. Exact for concurrent composition of pure
    /// mechanisms; with --noninteractive-delta it is the noninteractive
    /// approximate-DP form.
    Optimal {
        #[arg(long, value_delimiter = ',', required = true)]
        eps: Vec<f64>,
        #[arg(long)]
        delta_g: f64,
        /// Per-component δ_i (noninteractive mechanisms only).
        #[arg(long, value_delimiter = ',')]
        noninteractive_delta: Option<Vec<f64>>,
    },
    /// Basic and optimal composition bounds for k = 1..=k-max copies of an
    /// (ε, 0) mechanism.
    Compare {
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        k_max: usize,
        #[arg(long)]
        delta_g: f64,
    },
}

#[derive(Args, Debug, Clone)]
pub struct LimitArgs {
    /// Maximum number of rounds.
    #[arg(long)]
    pub max_rounds: Option<usize>,
    /// Maximum query or answer alphabet size per round.
    #[arg(long)]
    pub max_alphabet: Option<usize>,
    /// Maximum number of deterministic adversaries to enumerate.
    #[arg(long)]
    pub max_strategies: Option<u128>,
    /// Use the wide preset (8 rounds, alphabet 8, 2^22 adversaries), enough
    /// for compositions of two 2-round mechanisms.
    #[arg(long)]
    pub wide: bool,
}

#[derive(Args, Debug)]
pub struct PrivlossArgs {
    /// Mechanism file, or `-` for standard input.
    #[arg(long)]
    pub mechanism: String,
    /// δ as a fraction or decimal, e.g. 1/20 or 0.05.
    #[arg(long)]
    pub delta: String,
    #[command(flatten)]
    pub limits: LimitArgs,
}

#[derive(Args, Debug)]
pub struct ConcompArgs {
    /// Comma-separated mechanism files.
    #[arg(long, value_delimiter = ',', required = true)]
    pub mechanisms: Vec<String>,
    /// Where to write the composed mechanism.
    #[arg(long)]
    pub out: PathBuf,
    /// Round-robin order instead of adversary-chosen interleaving.
    #[arg(long)]
    pub ordered: bool,
    #[command(flatten)]
    pub limits: LimitArgs,
}

#[derive(Args, Debug, Clone)]
pub struct ScaleArgs {
    /// Scale u = e^ε as a fraction or decimal.
    #[arg(long, conflicts_with = "eps")]
    pub scale: Option<String>,
    /// ε as a decimal; e^ε is rounded to the nearest fraction with
    /// denominator at most 10^6 and the conversion is reported.
    #[arg(long)]
    pub eps: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub mechanism: String,
    /// Defaults to the mechanism's own pure privacy loss.
    #[command(flatten)]
    pub scale: ScaleArgs,
    /// Check the simulator against every deterministic adversary.
    #[arg(long)]
    pub verify: bool,
    /// Write the simulator here (inputs keyed rr0/rr1).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub limits: LimitArgs,
}

#[derive(Args, Debug)]
pub struct LpArgs {
    #[arg(long)]
    pub mechanism: String,
    #[arg(long)]
    pub delta: String,
    /// Defaults to the mechanism's privacy loss at δ.
    #[command(flatten)]
    pub scale: ScaleArgs,
    /// Also write the system as `coeff*var + … = rhs` rows.
    #[arg(long)]
    pub system_out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum ExperimentCommand {
    /// Randomized-response simulation study: sample 2-round mechanisms,
    /// compute ε at δ and solve the feasibility LP for each.
    RrFeasibility {
        #[arg(long, default_value_t = 2000)]
        trials: usize,
        #[arg(long, default_value = "1/20")]
        delta: String,
        /// Run the full 10,000-trial study.
        #[arg(long, conflicts_with = "trials")]
        full: bool,
        /// Build each LP at (1+u)/2 instead of u, a control that should be
        /// infeasible.
        #[arg(long)]
        midpoint: bool,
        /// Leave runtime_ms empty for byte-stable output.
        #[arg(long)]
        no_runtime: bool,
        /// Also write the per-trial table here.
        #[arg(long)]
        trials_out: Option<PathBuf>,
    },
    /// Basic versus optimal composition curves with an empty eps_advanced
    /// column.
    CompareBounds {
        #[arg(long, default_value_t = 0.005)]
        eps: f64,
        #[arg(long, default_value_t = 1000)]
        k_max: usize,
        #[arg(long, default_value_t = 1e-5)]
        delta_g: f64,
    },
}
