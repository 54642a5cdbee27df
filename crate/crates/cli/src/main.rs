//! `bibt`: fit, simulate, decompose and report.
//!
//! Exit codes: 0 success, 1 usage, 2 data or I/O, 3 numerical failure.
//! Failures print a single `error kind=<kind>: <message>` line to stderr.

mod render;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use bibt_core::io::{
    load_games, read_draws, read_edge_flow, write_operators, write_study_csv, write_study_json,
    write_summaries, write_sweep_csv, InputFormat,
};
use bibt_core::measures::{summarize_all, DEFAULT_LEVELS};
use bibt_core::sim::{run_sparsity_sweep, DEFAULT_DETECTION_LEVELS};
use bibt_core::{
    global_intransitivity, run_baseline_chain, run_chain, run_study, Error, Hyperparams,
    ModelKind, OperatorSet, PgMethod, SimConfig, Trials,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "bibt", version, about = "Bayesian intransitive Bradley-Terry model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit BIBT or the transitive baseline to comparison data
    Fit(FitArgs),
    /// Run a synthetic replication study (or a sparsity sweep)
    Simulate(SimulateArgs),
    /// Split an edge flow into gradient and curl parts
    Decompose(DecomposeArgs),
    /// Recompute summaries from stored draws
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct McmcArgs {
    /// Master seed (falls back to $BIBT_SEED, then 0)
    #[arg(long, env = "BIBT_SEED", default_value_t = 0)]
    seed: u64,
    /// Total Gibbs iterations
    #[arg(long, default_value_t = 10_000)]
    iters: usize,
    /// Iterations discarded before retaining draws
    #[arg(long, default_value_t = 2_000)]
    burnin: usize,
    /// Keep every `thin`-th post-burn-in draw
    #[arg(long, default_value_t = 1)]
    thin: usize,
    /// Shape of the inverse-gamma prior on the score variance
    #[arg(long, default_value_t = 0.5)]
    a_sigma: f64,
    /// Scale of the inverse-gamma prior on the score variance
    #[arg(long, default_value_t = 0.5)]
    b_sigma: f64,
    /// Use a moment-matched Gaussian for Pólya-Gamma draws with more than this many trials
    #[arg(long)]
    pg_gaussian_above: Option<u32>,
}

impl McmcArgs {
    fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            a_sigma: self.a_sigma,
            b_sigma: self.b_sigma,
            n_iterations: self.iters,
            burn_in: self.burnin,
            thin: self.thin,
            seed: self.seed,
            pg_method: self
                .pg_gaussian_above
                .map_or(PgMethod::Exact, PgMethod::GaussianAbove),
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DataFormat {
    GameLog,
    Aggregated,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Model {
    Bibt,
    Baseline,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Comparison data (CSV)
    #[arg(long)]
    data: PathBuf,
    /// Layout of the data file
    #[arg(long, value_enum, default_value_t = DataFormat::GameLog)]
    format: DataFormat,
    /// `baseline` fits scores only, without the curl part
    #[arg(long, value_enum, default_value_t = Model::Bibt)]
    model: Model,
    /// Quantile levels reported in the summary
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_LEVELS)]
    levels: Vec<f64>,
    /// Output prefix; files are named <out>_draws.csv, <out>_summary.json, ...
    #[arg(long, default_value = "bibt")]
    out: PathBuf,
    #[command(flatten)]
    mcmc: McmcArgs,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Entities per synthetic league
    #[arg(long, default_value_t = 10)]
    n_entities: usize,
    /// Games per pair
    #[arg(long, default_value_t = 100, conflicts_with = "trials_range")]
    trials: u32,
    /// Games per pair drawn uniformly from LO..=HI
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    trials_range: Option<Vec<u32>>,
    /// Fraction of zero curl weights; several values run a sweep
    #[arg(long, value_delimiter = ',', default_values_t = [0.5])]
    sparsity: Vec<f64>,
    /// Independent truths, each fitted once
    #[arg(long, default_value_t = 100)]
    replications: usize,
    /// Standard deviation of the true scores
    #[arg(long, default_value_t = 1.0)]
    score_scale: f64,
    /// Standard deviation of the nonzero true curl weights
    #[arg(long, default_value_t = 1.0)]
    curl_scale: f64,
    /// Skip fitting the transitive baseline
    #[arg(long)]
    no_baseline: bool,
    /// Credible levels for curl detection
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_DETECTION_LEVELS)]
    detection_levels: Vec<f64>,
    /// Worker threads (default: available parallelism)
    #[arg(long)]
    jobs: Option<usize>,
    /// Output prefix
    #[arg(long, default_value = "study")]
    out: PathBuf,
    #[command(flatten)]
    mcmc: McmcArgs,
}

#[derive(Args, Debug)]
struct DecomposeArgs {
    /// Edge flow with columns i,j,value (1-based entity indices)
    #[arg(long, required_unless_present = "dump_operators")]
    flow_csv: Option<PathBuf>,
    /// Entity count (default: inferred from the flow file)
    #[arg(long)]
    n_entities: Option<usize>,
    /// Also write grad, curl and curl-basis matrices as CSV
    #[arg(long)]
    dump_operators: bool,
    /// Output prefix for written files
    #[arg(long, default_value = "decompose")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Draws file written by `fit`
    #[arg(long)]
    draws: PathBuf,
    /// Quantile levels reported in the summary
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_LEVELS)]
    levels: Vec<f64>,
    /// Output prefix (default: the draws path without `_draws.csv`)
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        "usage" => 1,
        "numerical" => 3,
        _ => 2,
    }
}

fn one_line(msg: &str) -> String {
    msg.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("error kind=usage: {}", one_line(first.trim_start_matches("error: ")));
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Fit(a) => fit(a),
        Command::Simulate(a) => simulate(a),
        Command::Decompose(a) => decompose(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error kind={}: {}", e.kind(), one_line(&e.to_string()));
            ExitCode::from(exit_code(&e))
        }
    }
}

fn check_levels(levels: &[f64]) -> Result<(), Error> {
    match levels.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        Some(l) => Err(Error::InvalidInput(format!("level {l} outside [0, 1]"))),
        None => Ok(()),
    }
}

fn fit(a: FitArgs) -> Result<(), Error> {
    let hp = a.mcmc.hyperparams();
    hp.validate()?;
    check_levels(&a.levels)?;
    let format = match a.format {
        DataFormat::GameLog => InputFormat::GameLog,
        DataFormat::Aggregated => InputFormat::Aggregated,
    };
    let data = load_games(&a.data, format)?;
    let ops = OperatorSet::new(data.n_entities())?;
    let draws = match a.model {
        Model::Bibt => run_chain(&data, &hp, &ops)?,
        Model::Baseline => run_baseline_chain(&data, &hp, &ops)?,
    };
    let summaries = summarize_all(&draws, &ops, &a.levels)?;
    let files = write_summaries(&draws, &summaries, &ops, &a.out)?;
    print!("{}", render::fit_summary(&draws, &summaries, &data));
    for p in files.all() {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<(), Error> {
    let trials = match &a.trials_range {
        Some(r) => Trials::Range { lo: r[0], hi: r[1] },
        None => Trials::Constant(a.trials),
    };
    let cfg = SimConfig {
        n_entities: a.n_entities,
        trials,
        sparsity: a.sparsity[0],
        score_scale: a.score_scale,
        curl_scale: a.curl_scale,
        replications: a.replications,
        master_seed: a.mcmc.seed,
        mcmc: a.mcmc.hyperparams(),
        fit_baseline: !a.no_baseline,
        detection_levels: a.detection_levels.clone(),
    };
    for &sp in &a.sparsity {
        SimConfig { sparsity: sp, ..cfg.clone() }.validate()?;
    }
    if a.jobs == Some(0) {
        return Err(Error::InvalidInput("--jobs must be at least 1".into()));
    }

    let start = Instant::now();
    if a.sparsity.len() == 1 {
        let report = run_study(&cfg, a.jobs)?;
        let elapsed = start.elapsed().as_secs_f64();
        let csv = suffixed(&a.out, "_study.csv");
        let json = suffixed(&a.out, "_study.json");
        write_study_csv(&csv, &report)?;
        write_study_json(&json, &report, elapsed)?;
        print!("{}", render::study_table(&report));
        println!("wrote {}", csv.display());
        println!("wrote {}", json.display());
    } else {
        let reports = run_sparsity_sweep(&cfg, &a.sparsity, a.jobs)?;
        let elapsed = start.elapsed().as_secs_f64();
        let sweep = suffixed(&a.out, "_sweep.csv");
        write_sweep_csv(&sweep, &reports)?;
        for r in &reports {
            let tag = format!("_sparsity-{}", r.config.sparsity);
            let csv = suffixed(&a.out, &format!("{tag}_study.csv"));
            write_study_csv(&csv, r)?;
            write_study_json(&suffixed(&a.out, &format!("{tag}_study.json")), r, elapsed)?;
            print!("{}", render::study_table(r));
        }
        println!("wrote {}", sweep.display());
    }
    Ok(())
}

fn decompose(a: DecomposeArgs) -> Result<(), Error> {
    if let Some(path) = &a.flow_csv {
        let m = read_edge_flow(path, a.n_entities)?;
        let n = m.len();
        // |E| = N (N - 1) / 2
        let n_entities = a
            .n_entities
            .unwrap_or(((1.0 + (1.0 + 8.0 * n as f64).sqrt()) / 2.0).round() as usize);
        let ops = OperatorSet::new(n_entities)?;
        let p = ops.hodge_project(&m)?;
        let out = suffixed(&a.out, "_decomposition.csv");
        bibt_core::io::write_atomic(&out, |w| render::decomposition_csv(w, &ops, &m, &p))?;
        println!("grad_norm_sq={}", p.grad.norm_squared());
        println!("curl_norm_sq={}", p.curl.norm_squared());
        println!("curl_max_abs={}", p.curl.0.amax());
        println!("residual={}", p.residual);
        println!("global_intransitivity={}", global_intransitivity(&p.grad, &p.curl));
        let scores: Vec<String> = p.scores.iter().map(|v| format!("{v}")).collect();
        println!("scores={}", scores.join(","));
        println!("wrote {}", out.display());
        if a.dump_operators {
            dump(&a.out, &ops)?;
        }
    } else {
        let n = a.n_entities.ok_or_else(|| {
            Error::InvalidInput("--dump-operators without --flow-csv needs --n-entities".into())
        })?;
        dump(&a.out, &OperatorSet::new(n)?)?;
    }
    Ok(())
}

fn dump(prefix: &Path, ops: &OperatorSet) -> Result<(), Error> {
    for p in write_operators(prefix, ops)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn report(a: ReportArgs) -> Result<(), Error> {
    check_levels(&a.levels)?;
    let (draws, ops) = read_draws(&a.draws)?;
    let prefix = match a.out {
        Some(p) => p,
        None => {
            let s = a.draws.to_string_lossy();
            PathBuf::from(s.strip_suffix("_draws.csv").unwrap_or(&s).to_string())
        }
    };
    let summaries = summarize_all(&draws, &ops, &a.levels)?;
    let files = write_summaries(&draws, &summaries, &ops, &prefix)?;
    println!("model={} draws={}", draws.model.as_str(), draws.n_draws());
    if draws.model == ModelKind::Bibt {
        print!("{}", render::global_line(&summaries));
    }
    for p in files.all() {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn suffixed(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}
