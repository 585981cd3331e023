use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use flexmm::construct::{build_plan, compute_tasks, generate_shares, RecoveryProfile, SchemePlan};
use flexmm::cost::{expected_load, CommModel, LoadProfile, ProblemDims, StragglerDist};
use flexmm::decode::decode_detailed;
use flexmm::epcode::PartitionParams;
use flexmm::gf::{FieldMatrix, PrimeField};
use flexmm::io;
use flexmm::latsim::{cdf_at, simulate_coupled, uniform_grid, LatencyModel, TaskSchedule};
use flexmm::optimizer::{
    integer_search, storage_grid, storage_sweep, Decision, OptimizationReport, SearchInput,
};
use flexmm::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(
    name = "flexmm",
    version,
    about = "Flexible straggler-tolerant coded matrix multiplication"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Choose partitions and a recovery profile for a storage budget.
    Plan(PlanArgs),
    /// Write a uniformly random matrix.
    Random(RandomArgs),
    /// Encode A and B into one share file per server.
    Encode(EncodeArgs),
    /// Run the first tasks of one server's share.
    Compute(ComputeArgs),
    /// Recover A*B from the results of the responding servers.
    Decode(DecodeArgs),
    /// Monte Carlo latency of a flexible plan against a fixed EP code.
    Simulate(SimulateArgs),
    /// Expected loads over a storage sweep, or of a single plan.
    Report(ReportArgs),
}

#[derive(Args, Clone)]
struct ModelArgs {
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    #[arg(long, default_value_t = 1.0)]
    mu: f64,
    #[arg(long, default_value = "one-round")]
    model: CommModel,
    /// Per-server straggling probability (truncated binomial).
    #[arg(long, conflicts_with = "dist_file")]
    epsilon: Option<f64>,
    /// File with probabilities of 0, 1, ..., N-R stragglers.
    #[arg(long)]
    dist_file: Option<PathBuf>,
    /// Largest number of layers to consider.
    #[arg(long)]
    layers: Option<usize>,
}

impl ModelArgs {
    fn input(&self, n: usize, r: usize, storage: f64) -> Result<SearchInput> {
        let dist = match (&self.epsilon, &self.dist_file) {
            (Some(e), _) => StragglerDist::truncated_binomial(n, r, *e)?,
            (None, Some(path)) => read_dist(path, n, r)?,
            (None, None) => StragglerDist::point_mass(n, r, 0)?,
        };
        Ok(SearchInput {
            dims: ProblemDims::new(self.lambda, self.kappa, self.mu)?,
            n_servers: n,
            min_available: r,
            storage,
            model: self.model,
            dist,
            max_layers: self.layers,
        })
    }
}

#[derive(Args)]
struct PlanArgs {
    /// Number of servers.
    #[arg(long)]
    n: usize,
    /// Servers that always respond (smallest recovery threshold).
    #[arg(long)]
    r: usize,
    #[command(flatten)]
    problem: ModelArgs,
    /// Storage budget per server, as a multiple of one full matrix entry count.
    #[arg(long)]
    storage: f64,
    /// Plan file to write (requires integral dimensions).
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON optimization report to write.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Field modulus for the plan; defaults to the smallest usable prime.
    #[arg(long)]
    modulus: Option<u64>,
}

#[derive(Args)]
struct RandomArgs {
    #[arg(long)]
    rows: usize,
    #[arg(long)]
    cols: usize,
    #[arg(long)]
    modulus: u64,
    #[arg(long, env = "FLEXMM_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Write the binary form.
    #[arg(long)]
    binary: bool,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    /// Directory receiving `share_<id>.json`.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ComputeArgs {
    #[arg(long)]
    share: PathBuf,
    /// Expected server id; checked against the share.
    #[arg(long)]
    server_id: Option<usize>,
    /// Number of tasks to run, in order.
    #[arg(long)]
    tasks: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    plan: PathBuf,
    /// Comma-separated ids of the responding servers.
    #[arg(long, value_delimiter = ',', required = true)]
    available: Vec<usize>,
    /// Result files.
    #[arg(long, num_args = 1.., required = true)]
    results: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    binary: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// Flexible plan; defaults to the (5,3) example on 6x6 matrices.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// EP partition `p,m,n` for the comparison code.
    #[arg(long, default_value = "2,1,1")]
    ep: String,
    /// Edge of the unit block.
    #[arg(long, default_value_t = 1)]
    granule: usize,
    /// Mean seconds per unit multiplication.
    #[arg(long, default_value_t = 0.1)]
    unit_mean: f64,
    #[arg(long, default_value_t = 100_000)]
    trials: usize,
    #[arg(long, env = "FLEXMM_SEED", default_value_t = 0)]
    seed: u64,
    /// Rows of the CDF table.
    #[arg(long, default_value_t = 200)]
    resolution: usize,
    #[arg(long, default_value = "fig2.csv")]
    out: PathBuf,
    /// Also write per-trial samples as `<prefix>_ep.csv` and `<prefix>_flexible.csv`.
    #[arg(long)]
    samples: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Number of servers.
    #[arg(long, required_unless_present = "plan")]
    n: Option<usize>,
    /// Servers that always respond (smallest recovery threshold).
    #[arg(long, required_unless_present = "plan")]
    r: Option<usize>,
    #[command(flatten)]
    problem: ModelArgs,
    #[arg(long, default_value_t = 0.33)]
    storage_from: f64,
    #[arg(long, default_value_t = 1.0)]
    storage_to: f64,
    #[arg(long, default_value_t = 0.01)]
    storage_step: f64,
    #[arg(long, default_value = "fig5.csv")]
    out: PathBuf,
    /// Report loads of this plan instead of sweeping.
    #[arg(long, conflicts_with = "n")]
    plan: Option<PathBuf>,
    /// Straggling probability used with `--plan`.
    #[arg(long, requires = "plan")]
    plan_epsilon: Option<f64>,
}

fn read_dist(path: &Path, n: usize, r: usize) -> Result<StragglerDist> {
    let text = fs::read_to_string(path)?;
    let probs = text
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::Format(format!("bad probability {t:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    StragglerDist::new(n, r, probs)
}

fn parse_triple(text: &str) -> Result<PartitionParams> {
    let parts = text
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidArgument(format!("bad partition {text:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    match parts[..] {
        [p, m, n] => PartitionParams::new(p, m, n),
        _ => Err(Error::InvalidArgument(format!(
            "partition must be p,m,n, got {text:?}"
        ))),
    }
}

fn integral(x: f64, name: &str) -> Result<usize> {
    if x >= 1.0 && x.fract() == 0.0 {
        Ok(x as usize)
    } else {
        Err(Error::InvalidArgument(format!(
            "--{name} must be a positive integer to write a plan, got {x}"
        )))
    }
}

fn describe(report: &OptimizationReport) -> String {
    let mut out = String::new();
    let input = &report.input;
    out.push_str(&format!(
        "N = {}, R = {}, C = {}, model = {}\n",
        input.n_servers, input.min_available, input.storage, input.model
    ));
    match &report.decision {
        Decision::Infeasible { min_storage } => {
            out.push_str(&format!(
                "decision: infeasible, need C >= {min_storage:.6}\n"
            ));
            return out;
        }
        Decision::FixedEp => out.push_str("decision: fixed EP\n"),
        Decision::Flexible { r1 } => out.push_str(&format!("decision: flexible, R1 = {r1}\n")),
    }
    if let Some(best) = &report.best {
        let parts: Vec<String> = best.partitions.iter().map(|p| p.to_string()).collect();
        out.push_str(&format!(
            "profile {} partitions {}\nexpected load {:.6}, load without stragglers {:.6}, storage {:.6}\n",
            best.profile,
            parts.join(" "),
            best.expected_load,
            best.approx_load,
            best.storage
        ));
    }
    if let Some(ep) = &report.fixed_ep {
        out.push_str(&format!(
            "best fixed EP {} load {:.6}\n",
            ep.partitions[0], ep.expected_load
        ));
    }
    if let (Some(real), Some(gap)) = (&report.real_optimum, report.relaxation_gap) {
        out.push_str(&format!(
            "relaxed optimum load {:.6} (gap {:.6})\n",
            real.load, gap
        ));
    }
    if !report.binding_constraints.is_empty() {
        out.push_str(&format!(
            "binding: {}\n",
            report.binding_constraints.join(", ")
        ));
    }
    out
}

fn cmd_plan(args: &PlanArgs) -> Result<()> {
    let report = integer_search(&args.problem.input(args.n, args.r, args.storage)?)?;
    if let Some(path) = &args.report {
        io::write_report(path, &report)?;
    }
    print!("{}", describe(&report));
    let Some(best) = &report.best else {
        let required = match report.decision {
            Decision::Infeasible { min_storage } => min_storage,
            _ => f64::NAN,
        };
        return Err(Error::Infeasible { required });
    };
    if let Some(out) = &args.out {
        let p = &args.problem;
        let dims = (
            integral(p.lambda, "lambda")?,
            integral(p.kappa, "kappa")?,
            integral(p.mu, "mu")?,
        );
        let needed = args.n + best.profile.top() - best.profile.bottom();
        let field = match args.modulus {
            Some(m) => PrimeField::new(m)?,
            None => PrimeField::smallest_at_least(needed as u64)?,
        };
        let plan = build_plan(args.n, best.profile.clone(), &best.partitions, dims, field)?;
        io::write_plan(out, &plan)?;
        println!("plan written to {}", out.display());
    }
    Ok(())
}

fn cmd_random(args: &RandomArgs) -> Result<()> {
    let field = PrimeField::new(args.modulus)?;
    let m = FieldMatrix::random(
        field,
        args.rows,
        args.cols,
        &mut ChaCha8Rng::seed_from_u64(args.seed),
    );
    io::write_matrix(&args.out, &m, args.binary)
}

fn cmd_encode(args: &EncodeArgs) -> Result<()> {
    let plan = io::read_plan(&args.plan)?;
    let a = io::read_matrix(&args.a)?;
    let b = io::read_matrix(&args.b)?;
    let (shares, _) = generate_shares(&plan, &a, &b)?;
    fs::create_dir_all(&args.out_dir)?;
    for share in &shares {
        io::write_share(
            &args.out_dir.join(format!("share_{}.json", share.server_id)),
            share,
        )?;
    }
    println!(
        "wrote {} shares of {} tasks each",
        shares.len(),
        plan.total_tasks()
    );
    Ok(())
}

fn cmd_compute(args: &ComputeArgs) -> Result<()> {
    let share = io::read_share(&args.share)?;
    if let Some(id) = args.server_id {
        if id != share.server_id {
            return Err(Error::InvalidArgument(format!(
                "share belongs to server {}, not {id}",
                share.server_id
            )));
        }
    }
    let (results, mults) = compute_tasks(&share, args.tasks)?;
    io::write_results(&args.out, &results)?;
    println!(
        "server {}: {} tasks, {mults} multiplications",
        share.server_id,
        results.len()
    );
    Ok(())
}

fn cmd_decode(args: &DecodeArgs) -> Result<()> {
    let plan = io::read_plan(&args.plan)?;
    let mut results = Vec::new();
    for path in &args.results {
        results.extend(io::read_results(path)?);
    }
    let outcome = decode_detailed(&plan, &results, &args.available)?;
    io::write_matrix(&args.out, &outcome.product, args.binary)?;
    println!(
        "decoded with {} servers, {} tasks each, layers 1..={} used",
        args.available.len(),
        outcome.tasks_per_server,
        outcome.deepest_layer
    );
    Ok(())
}

fn default_flexible_plan() -> Result<SchemePlan> {
    build_plan(
        5,
        RecoveryProfile::new(vec![5, 3])?,
        &[
            PartitionParams::new(3, 1, 1)?,
            PartitionParams::new(2, 1, 1)?,
        ],
        (6, 6, 6),
        PrimeField::smallest_at_least(7)?,
    )
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let flex_plan = match &args.plan {
        Some(path) => io::read_plan(path)?,
        None => default_flexible_plan()?,
    };
    let ep = parse_triple(&args.ep)?;
    let r = flex_plan.profile.bottom();
    if ep.recovery_threshold() != r {
        return Err(Error::InvalidArgument(format!(
            "EP partition {ep} has threshold {}, the plan needs {r}",
            ep.recovery_threshold()
        )));
    }
    let ep_plan = build_plan(
        flex_plan.n_servers,
        RecoveryProfile::new(vec![r])?,
        &[ep],
        flex_plan.dims,
        PrimeField::smallest_at_least(flex_plan.n_servers as u64)?,
    )?;
    let schedules = [
        TaskSchedule::from_plan(&ep_plan, args.granule)?,
        TaskSchedule::from_plan(&flex_plan, args.granule)?,
    ];
    let model = LatencyModel::new(args.granule, args.unit_mean, args.trials, args.seed)?;
    let reports = simulate_coupled(&schedules, &model)?;
    let (lo, hi) = reports
        .iter()
        .flat_map(|r| r.samples.iter().copied())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| {
            (a.min(x), b.max(x))
        });
    let grid = uniform_grid(lo, hi, args.resolution);
    let cdf_ep = cdf_at(&reports[0], &grid)?;
    let cdf_flex = cdf_at(&reports[1], &grid)?;
    let mut w = csv::Writer::from_path(&args.out).map_err(csv_error)?;
    w.write_record([
        "latency",
        "cdf_ep",
        "cdf_flexible",
        "mean_ep",
        "mean_flexible",
    ])
    .map_err(csv_error)?;
    for i in 0..grid.len() {
        w.write_record([
            grid[i].to_string(),
            cdf_ep[i].to_string(),
            cdf_flex[i].to_string(),
            reports[0].mean.to_string(),
            reports[1].mean.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    if let Some(prefix) = &args.samples {
        for (report, tag) in reports.iter().zip(["ep", "flexible"]) {
            let path = PathBuf::from(format!("{}_{tag}.csv", prefix.display()));
            flexmm::latsim::write_samples_csv(report, fs::File::create(path)?)?;
        }
    }
    let saving = 1.0 - reports[1].mean / reports[0].mean;
    println!(
        "mean latency: EP {:.4}, flexible {:.4}, saving {:.1}%",
        reports[0].mean,
        reports[1].mean,
        100.0 * saving
    );
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> Result<()> {
    if let Some(path) = &args.plan {
        let plan = io::read_plan(path)?;
        let (l, k, m) = plan.dims;
        let dims = ProblemDims::new(l as f64, k as f64, m as f64)?;
        let partitions: Vec<PartitionParams> = plan.layers.iter().map(|s| s.partition).collect();
        let loads = LoadProfile::build(&dims, plan.n_servers, &plan.profile, &partitions)?;
        for &(avail, load) in &loads.by_available {
            println!("{avail} servers: load {load}");
        }
        println!(
            "storage: one-round {}, multi-round {}",
            loads.one_round_storage, loads.multi_round_storage
        );
        if let Some(eps) = args.plan_epsilon {
            let dist =
                StragglerDist::truncated_binomial(plan.n_servers, plan.profile.bottom(), eps)?;
            println!("expected load: {}", expected_load(&loads, &dist)?);
        }
        return Ok(());
    }
    let (Some(n), Some(r)) = (args.n, args.r) else {
        return Err(Error::InvalidArgument(
            "give either --plan or --n/--r".into(),
        ));
    };
    let grid = storage_grid(args.storage_from, args.storage_to, args.storage_step)?;
    let rows = storage_sweep(&args.problem.input(n, r, 1.0)?, &grid)?;
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    let mut w = csv::Writer::from_path(&args.out).map_err(csv_error)?;
    w.write_record(["C", "L_EP", "L_flex_expected", "L_flex_approx"])
        .map_err(csv_error)?;
    for row in &rows {
        w.write_record([
            row.storage.to_string(),
            opt(row.ep_load),
            opt(row.flex_expected),
            opt(row.flex_approx),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    let first_flexible = rows
        .iter()
        .find(|r| matches!(r.decision, Decision::Flexible { .. }));
    let first_feasible = rows
        .iter()
        .find(|r| !matches!(r.decision, Decision::Infeasible { .. }));
    println!(
        "{} grid points; first feasible C = {}; flexible from C = {}",
        rows.len(),
        first_feasible
            .map(|r| r.storage.to_string())
            .unwrap_or("-".into()),
        first_flexible
            .map(|r| r.storage.to_string())
            .unwrap_or("-".into())
    );
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) => 2,
        Error::Infeasible { .. } => 3,
        Error::InsufficientServers { .. }
        | Error::MissingTask { .. }
        | Error::InsufficientEvaluations { .. } => 4,
        Error::Inconsistent { .. } => 5,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Plan(a) => cmd_plan(a),
        Command::Random(a) => cmd_random(a),
        Command::Encode(a) => cmd_encode(a),
        Command::Compute(a) => cmd_compute(a),
        Command::Decode(a) => cmd_decode(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Report(a) => cmd_report(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
