use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use stubborn_core::bench::{run_bench, BenchConfig};
use stubborn_core::dense::DENSE_CAP;
use stubborn_core::dynamics::{CenteringRule, DEFAULT_SPECTRAL_TOL};
use stubborn_core::generate::{self, GraphFamily, OpinionDistribution};
use stubborn_core::io as textio;
use stubborn_core::run::{self, Mode, OpinionSource, RunConfig, StubbornnessSource};
use stubborn_core::verify::{run_verify, Fault, Scale};
use stubborn_core::{Error, Result};

/// Friedkin-Johnsen opinion dynamics with heterogeneous stubbornness:
/// equilibria, convergence, and conflict/disagreement/polarization metrics.
#[derive(Debug, Parser)]
#[command(name = "stubborn", version)]
struct Cli {
    /// Worker threads; 1 gives bit-reproducible output.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute C, D, P and I_pd exactly or with the certified solver.
    Metrics(MetricsArgs),
    /// Iterate the dynamics until the error falls below --eps.
    Simulate(SimulateArgs),
    /// Estimate the spectral radius of the iteration matrix.
    Spectrum(SpectrumArgs),
    /// Run the randomized invariant sweeps.
    Verify(VerifyArgs),
    /// Time exact against approximate metrics on synthetic graphs.
    Bench(BenchArgs),
    /// Write generated innate opinions as `node value` lines.
    GenOpinions(GenOpinionsArgs),
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Edge list, one `u v [w]` per line.
    #[arg(long)]
    graph: PathBuf,
    /// A constant, `random:LO:HI`, or a `node k` file.
    #[arg(long, default_value = "random:0.5:2")]
    stubbornness: String,
    /// `node s` file; overrides --dist.
    #[arg(long)]
    opinions: Option<PathBuf>,
    /// Opinion distribution when no file is given.
    #[arg(long, default_value = "uniform")]
    dist: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Nodes above which dense computations refuse to run.
    #[arg(long, default_value_t = DENSE_CAP)]
    dense_cap: usize,
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// Write the JSON report line to this file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the JSON report line on stdout instead of the table.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 1e-6)]
    eps: f64,
    /// `exact` or `approx`.
    #[arg(long, default_value = "approx")]
    mode: String,
    /// `weighted` (1ᵀKs / 1ᵀK1) or `uniform` (1ᵀKs / n).
    #[arg(long, default_value = "weighted")]
    centering: String,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 1e-6)]
    eps: f64,
    /// Also write the final expressed opinions as `node value` lines.
    #[arg(long)]
    opinions_out: Option<PathBuf>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct SpectrumArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = DEFAULT_SPECTRAL_TOL)]
    tol: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// `small` or `full`.
    #[arg(long, default_value = "small")]
    scale: String,
    /// Inject a known defect (`phi-row-sum`) to check the harness.
    #[arg(long)]
    fault: Option<String>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Comma-separated target edge counts.
    #[arg(long, value_delimiter = ',', default_values_t = BenchConfig::default().sizes)]
    sizes: Vec<usize>,
    /// `regular` or `preferential`.
    #[arg(long, default_value = "regular")]
    family: String,
    #[arg(long, default_value_t = 10)]
    degree: usize,
    #[arg(long, default_value = "uniform")]
    dist: String,
    #[arg(long, default_value_t = 1e-6)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value_t = DENSE_CAP)]
    exact_cap: usize,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct GenOpinionsArgs {
    /// Take node ids from this edge list.
    #[arg(long, conflicts_with = "n")]
    graph: Option<PathBuf>,
    /// Generate for nodes 0..n.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value = "uniform")]
    dist: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Destination file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run_config(input: &InputArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::new(&input.graph);
    cfg.stubbornness = input.stubbornness.parse::<StubbornnessSource>()?;
    cfg.opinions = match &input.opinions {
        Some(path) => OpinionSource::File(path.clone()),
        None => OpinionSource::Generated(input.dist.parse()?),
    };
    cfg.seed = input.seed;
    cfg.dense_cap = input.dense_cap;
    Ok(cfg)
}

fn json_line<T: Serialize>(doc: &T) -> Result<String> {
    serde_json::to_string(doc).map_err(|e| Error::Numerical(format!("serializing report: {e}")))
}

/// Writes the JSON line to `--out` and either the line or `table` to stdout.
fn emit<T: Serialize>(output: &OutputArgs, doc: &T, table: impl FnOnce() -> String) -> Result<()> {
    let line = json_line(doc)?;
    if let Some(path) = &output.out {
        let mut f = File::create(path)?;
        writeln!(f, "{line}")?;
    }
    let mut stdout = io::stdout().lock();
    if output.json {
        writeln!(stdout, "{line}")?;
    } else {
        writeln!(stdout, "{}", table())?;
    }
    Ok(())
}

fn metrics(args: &MetricsArgs) -> Result<bool> {
    let mut cfg = run_config(&args.input)?;
    cfg.eps = args.eps;
    cfg.mode = args.mode.parse::<Mode>()?;
    cfg.centering = match args.centering.as_str() {
        "weighted" => CenteringRule::Weighted,
        "uniform" => CenteringRule::Uniform,
        other => return Err(Error::InvalidParameter(format!("unknown centering rule {other:?}"))),
    };
    let doc = run::run_metrics(&cfg)?;
    if doc.report.centered {
        eprintln!("note: innate opinions were centered so that 1ᵀKs = 0");
    }
    emit(&args.output, &doc, || {
        let r = &doc.report;
        let mut t = format!(
            "graph        n = {}, m = {}, fingerprint {}\nmode         {:?}\n",
            doc.graph.n, doc.graph.m, doc.graph.fingerprint, r.mode
        );
        let rows = [("C", r.conflict), ("D", r.disagreement), ("P", r.polarization), ("I_pd", r.pd_index)];
        for (name, value) in rows {
            t += &format!("{name:<12} {value:.12e}\n");
        }
        if let (Some(delta), Some(bounds)) = (r.delta_used, r.error_bounds) {
            t += &format!("delta        {delta:.3e}\nmax rel. err {:.3e}\n", bounds.max());
        }
        t += &format!(
            "conservation {:.3e}\ncertified    {}\ntime (s)     load {:.4}, solve {:.4}, norms {:.4}",
            r.conservation_residual,
            r.certified,
            doc.timings.load_seconds,
            doc.timings.solve_seconds,
            doc.timings.norms_seconds
        );
        t
    })?;
    Ok(true)
}

fn simulate(args: &SimulateArgs) -> Result<bool> {
    let cfg = run_config(&args.input)?;
    let doc = run::run_simulate(&cfg, args.eps)?;
    if let Some(path) = &args.opinions_out {
        textio::write_node_values(BufWriter::new(File::create(path)?), &doc.node_ids, &doc.expressed)?;
    }
    emit(&args.output, &doc, || {
        format!(
            "graph        n = {}, m = {}\nrho          {:.12} (upper {:.12})\n|f(0)|       {:.6e}\n|f(T)|       {:.6e}\nstop time    {}\nbound        {}\ntime (s)     {:.4}",
            doc.graph.n,
            doc.graph.m,
            doc.rho,
            doc.rho_upper,
            doc.f_norms.first().copied().unwrap_or(0.0),
            doc.f_norms.last().copied().unwrap_or(0.0),
            doc.stop_time,
            doc.bound,
            doc.total_seconds
        )
    })?;
    Ok(true)
}

fn spectrum(args: &SpectrumArgs) -> Result<bool> {
    let cfg = run_config(&args.input)?;
    let doc = run::run_spectrum(&cfg, args.tol)?;
    emit(&args.output, &doc, || {
        format!(
            "graph        n = {}, m = {}\nrho          {:.12}\nresidual     {:.3e} after {} iterations (converged: {})\nmax row sum  {:.12}\nL+K spectrum [{}, min({}, {})]",
            doc.graph.n,
            doc.graph.m,
            doc.rho,
            doc.residual,
            doc.iterations,
            doc.converged,
            doc.max_row_sum,
            doc.bounds.lower,
            doc.bounds.upper_degree,
            doc.bounds.upper_paper
        )
    })?;
    Ok(doc.converged)
}

fn verify(args: &VerifyArgs) -> Result<bool> {
    let scale = args.scale.parse::<Scale>()?;
    let fault = args.fault.as_deref().map(str::parse::<Fault>).transpose()?;
    let start = Instant::now();
    let summary = run_verify(scale, fault)?;
    emit(&args.output, &summary, || format!("{summary}\ntime (s) {:.2}", start.elapsed().as_secs_f64()))?;
    Ok(summary.passed())
}

fn bench(args: &BenchArgs) -> Result<bool> {
    let cfg = BenchConfig {
        sizes: args.sizes.clone(),
        family: args.family.parse::<GraphFamily>()?,
        degree: args.degree,
        distribution: args.dist.parse::<OpinionDistribution>()?,
        eps: args.eps,
        seed: args.seed,
        exact_cap: args.exact_cap,
        repeats: args.repeats,
    };
    let table = run_bench(&cfg)?;
    emit(&args.output, &table, || table.to_string())?;
    Ok(true)
}

fn gen_opinions(args: &GenOpinionsArgs) -> Result<bool> {
    let ids: Vec<u64> = match (&args.graph, args.n) {
        (Some(path), _) => textio::read_edge_list(path)?.graph.ids().to_vec(),
        (None, Some(n)) => (0..n as u64).collect(),
        (None, None) => return Err(Error::InvalidParameter("give --graph or --n".into())),
    };
    let dist = args.dist.parse::<OpinionDistribution>()?;
    let values = generate::generate_opinions(ids.len(), dist, args.seed)?;
    match &args.out {
        Some(path) => textio::write_node_values(BufWriter::new(File::create(path)?), &ids, &values)?,
        None => textio::write_node_values(io::stdout().lock(), &ids, &values)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let outcome = match &cli.command {
        Command::Metrics(a) => metrics(a),
        Command::Simulate(a) => simulate(a),
        Command::Spectrum(a) => spectrum(a),
        Command::Verify(a) => verify(a),
        Command::Bench(a) => bench(a),
        Command::GenOpinions(a) => gen_opinions(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
