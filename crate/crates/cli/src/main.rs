use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use constrained_glm::analysis::{dic, summarize, SummaryReport};
use constrained_glm::io::{
    heady_problem, ingest_table, read_prior, read_tmvn, scram_problem, write_json, write_matrix_csv,
    write_samples_csv, CsvTable, HeadyColumns, IngestOptions, ScramColumns, ScramModel,
};
use constrained_glm::scenario::{run_scenario, simulate_scenario, ScenarioId, ScenarioSpec};
use constrained_glm::shape::{BernsteinSpec, ShapeMode};
use constrained_glm::{
    estimate_ergodicity_bound, fit_glm, fit_lm, gibbs_sample, ConstraintSet, Dataset, Error, ErrorKind,
    GlmFamily, PosteriorSamples, Precision, PriorSpec, Result, SamplerConfig,
};

#[derive(Parser, Debug)]
#[command(name = "cglm", version, about = "Bayesian regression under linear inequality constraints")]
struct Cli {
    /// Base seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for chains and replicates (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory receiving output files.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Gaussian linear model with a Gamma prior on the error precision.
    FitLm(FitArgs),
    /// Canonical GLM through the product slice sampler.
    FitGlm(FitArgs),
    /// Draws from a truncated multivariate normal given as JSON.
    SampleTmvn(TmvnArgs),
    /// Builds a Bernstein design and its shape constraints.
    DesignBernstein(BernsteinArgs),
    /// Writes simulated replicates of a scenario.
    Simulate(ScenarioArgs),
    /// Fits every replicate of a scenario and reports efficiency ratios.
    RunScenario(ScenarioArgs),
}

#[derive(Args, Debug, Clone)]
struct ChainArgs {
    #[arg(long, default_value_t = 12_000)]
    iters: usize,
    #[arg(long, default_value_t = 2_000)]
    burnin: usize,
    #[arg(long, default_value_t = 2)]
    thin: usize,
    #[arg(long, default_value_t = 2)]
    chains: usize,
    /// TMVN sweeps per outer iteration.
    #[arg(long, default_value_t = 1)]
    inner_sweeps: usize,
}

impl ChainArgs {
    fn config(&self, seed: u64) -> SamplerConfig {
        SamplerConfig {
            n_iter: self.iters,
            burn_in: self.burnin,
            thin: self.thin,
            seed,
            n_chains: self.chains,
            inner_sweeps: self.inner_sweeps,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PriorKind {
    Vague,
    Empirical,
    File,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Design {
    /// Columns of the CSV as they are.
    Plain,
    /// Plant intercepts and year effects for scram counts.
    ScramYear,
    /// Plant intercepts and a quadratic year trend for scram counts.
    ScramQuadratic,
    /// Square-root response surface for corn yield.
    Heady,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "y")]
    response: String,
    /// Offset column, `log(col)` or `log(col/K)`.
    #[arg(long)]
    offset: Option<String>,
    /// Comma-separated covariate columns (default: all other columns).
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
    #[arg(long)]
    add_intercept: bool,
    /// Constraint JSON `{"R": [[..]], "b": [..], "num_equality": k}`.
    #[arg(long)]
    constraints: Option<PathBuf>,
    #[arg(long, default_value = "gaussian")]
    family: GlmFamily,
    #[arg(long, value_enum, default_value_t = Design::Plain)]
    design: Design,
    #[arg(long, value_enum, default_value_t = PriorKind::Vague)]
    prior: PriorKind,
    #[arg(long, required_if_eq("prior", "file"))]
    prior_file: Option<PathBuf>,
    /// Holds the error variance fixed instead of sampling it.
    #[arg(long)]
    sigma2: Option<f64>,
    /// Monte-Carlo draws for the geometric-ergodicity bound.
    #[arg(long)]
    ergodicity_mc: Option<usize>,
    /// Also write every retained draw with its chain index to trace.csv.
    #[arg(long)]
    trace: bool,
    #[command(flatten)]
    chain: ChainArgs,
}

#[derive(Args, Debug)]
struct TmvnArgs {
    /// JSON `{"mu", "sigma", "R", "lower", "upper"}`; null bounds are infinite.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    iters: usize,
    #[arg(long, default_value_t = 1_000)]
    burnin: usize,
    #[arg(long, default_value_t = 1)]
    thin: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    MonoInc,
    MonoDec,
    Bimono,
}

impl From<ModeArg> for ShapeMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::MonoInc => ShapeMode::MonotoneIncreasing,
            ModeArg::MonoDec => ShapeMode::MonotoneDecreasing,
            ModeArg::Bimono => ShapeMode::TensorBimonotoneIncreasing,
        }
    }
}

#[derive(Args, Debug)]
struct BernsteinArgs {
    #[arg(long)]
    degree: usize,
    #[arg(long, value_enum)]
    mode: ModeArg,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    cols: Vec<String>,
    #[arg(long, default_value = "y")]
    response: String,
}

#[derive(Args, Debug)]
struct ScenarioArgs {
    #[arg(long)]
    scenario: ScenarioId,
    #[arg(long, default_value_t = 100)]
    replicates: usize,
    /// Sample size (default: the scenario's own).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[command(flatten)]
    chain: ChainArgs,
}

impl ScenarioArgs {
    fn spec(&self, seed: u64) -> Result<ScenarioSpec> {
        let mut spec = ScenarioSpec::new(self.scenario, self.replicates, seed);
        if let Some(n) = self.n {
            spec.n = n;
        }
        if let Some(rho) = self.rho {
            spec.rho = rho;
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Infeasible => 2,
        ErrorKind::Input | ErrorKind::Io => 3,
        ErrorKind::Numerical => 4,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    }
    std::fs::create_dir_all(&cli.out_dir)?;
    let out = cli.out_dir.as_path();
    match cli.command {
        Command::FitLm(args) => fit(args, true, cli.seed, out),
        Command::FitGlm(args) => fit(args, false, cli.seed, out),
        Command::SampleTmvn(args) => sample_tmvn(args, cli.seed, out),
        Command::DesignBernstein(args) => design_bernstein(args, out),
        Command::Simulate(args) => simulate(args, cli.seed, out),
        Command::RunScenario(args) => {
            let report = run_scenario(&args.spec(cli.seed)?, &args.chain.config(cli.seed))?;
            std::fs::write(out.join("scenario_report.json"), report.to_json() + "\n")?;
            Ok(())
        }
    }
}

fn load_problem(args: &FitArgs) -> Result<(Dataset, ConstraintSet)> {
    let table = CsvTable::read(&args.data)?;
    let (data, built) = match args.design {
        Design::Plain => {
            let opts = IngestOptions {
                response: args.response.clone(),
                offset: args.offset.clone(),
                covariates: args.covariates.clone(),
                add_intercept: args.add_intercept,
            };
            let data = ingest_table(&table, &opts)?;
            let p = data.p();
            (data, ConstraintSet::unconstrained(p))
        }
        Design::ScramYear => scram_problem(&table, ScramModel::YearEffects, &ScramColumns::default())?,
        Design::ScramQuadratic => scram_problem(&table, ScramModel::Quadratic, &ScramColumns::default())?,
        Design::Heady => heady_problem(&table, &HeadyColumns::default())?,
    };
    let cs = match &args.constraints {
        Some(path) => ConstraintSet::from_json_with_dim(&std::fs::read_to_string(path)?, data.p())?,
        None => built,
    };
    Ok((data, cs))
}

fn fit(args: FitArgs, linear: bool, seed: u64, out: &Path) -> Result<()> {
    let (data, cs) = load_problem(&args)?;
    let family = if linear { GlmFamily::Gaussian } else { args.family };
    let mut prior = match args.prior {
        PriorKind::Vague => PriorSpec::vague(data.p()),
        PriorKind::Empirical => PriorSpec::empirical_bayes(family, &data)?,
        PriorKind::File => read_prior(args.prior_file.as_ref().expect("required by clap"))?,
    };
    if let Some(sigma2) = args.sigma2 {
        prior = prior.with_precision(Precision::Fixed { sigma2 });
    }
    let cfg = args.chain.config(seed);
    let samples = if linear {
        fit_lm(&data, &cs, &prior, &cfg)?
    } else {
        fit_glm(&data, family, &cs, &prior, &cfg)?
    };
    write_samples_csv(out.join("samples.csv"), &samples)?;
    if args.trace {
        write_trace(&out.join("trace.csv"), &samples)?;
    }

    let mut summary: SummaryReport = summarize(&samples, None)?;
    let d = dic(&samples, &data, family)?;
    if d.p_d < 0.0 {
        eprintln!("warning: negative effective number of parameters (p_D = {:.4})", d.p_d);
    }
    summary.dic = Some(d.dic);
    if let Some(n_mc) = args.ergodicity_mc {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX);
        summary.ergodicity = Some(estimate_ergodicity_bound(&data, family, &cs, &prior, n_mc, &mut rng)?);
    }
    write_json(out.join("summary.json"), &summary)
}

fn write_trace(path: &Path, samples: &PosteriorSamples) -> Result<()> {
    let per_chain = samples.meta.draws_per_chain;
    let extra = usize::from(samples.sigma2_draws.is_some());
    let p = samples.dim();
    let m = DMatrix::from_fn(samples.num_draws(), p + 2 + extra, |i, j| match j {
        0 => (i / per_chain) as f64,
        1 => (i % per_chain) as f64,
        j if j < p + 2 => samples.draws[(i, j - 2)],
        _ => samples.sigma2_draws.as_ref().map_or(f64::NAN, |s| s[i]),
    });
    let mut names = vec!["chain".to_string(), "draw".to_string()];
    names.extend(samples.names.iter().cloned());
    if extra == 1 {
        names.push("sigma2".into());
    }
    write_matrix_csv(path, &names, &m)
}

fn sample_tmvn(args: TmvnArgs, seed: u64, out: &Path) -> Result<()> {
    if args.thin == 0 || args.iters <= args.burnin {
        return Err(Error::InvalidConfig("need thin >= 1 and iters > burnin".into()));
    }
    let spec = read_tmvn(&args.spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all = gibbs_sample(&spec, &spec.feasible_point().clone(), args.iters, &mut rng)?;
    let keep: Vec<usize> = (args.burnin..args.iters).step_by(args.thin).collect();
    let draws = all.select_rows(&keep);
    let names: Vec<String> = (1..=spec.dim()).map(|j| format!("x{j}")).collect();
    write_matrix_csv(out.join("samples.csv"), &names, &draws)
}

fn design_bernstein(args: BernsteinArgs, out: &Path) -> Result<()> {
    let table = CsvTable::read(&args.data)?;
    let columns = args
        .cols
        .iter()
        .map(|c| table.numeric(c))
        .collect::<Result<Vec<DVector<f64>>>>()?;
    let covariates = DMatrix::from_columns(&columns);
    let y = table.numeric(&args.response)?;
    let spec = BernsteinSpec::from_data(&covariates, &args.cols, args.degree, args.mode.into())?;
    let (data, cs) = spec.problem(&covariates, &y)?;

    let mut names = vec![args.response.clone()];
    names.extend(data.names.iter().cloned());
    let m = DMatrix::from_fn(data.n(), data.p() + 1, |i, j| if j == 0 { data.y[i] } else { data.x[(i, j - 1)] });
    write_matrix_csv(out.join("design.csv"), &names, &m)?;
    std::fs::write(out.join("constraints.json"), cs.to_json() + "\n")?;
    write_json(out.join("bernstein.json"), &spec)
}

fn simulate(args: ScenarioArgs, seed: u64, out: &Path) -> Result<()> {
    let spec = args.spec(seed)?;
    let reps = simulate_scenario(&spec)?;
    let first = &reps[0];
    std::fs::write(out.join("constraints.json"), first.constraints.to_json() + "\n")?;
    write_json(
        out.join("truth.json"),
        &serde_json::json!({
            "names": first.data.names,
            "truth": first.truth.as_slice(),
        }),
    )?;
    for (r, rep) in reps.iter().enumerate() {
        let d = &rep.data;
        let mut names = vec!["y".to_string()];
        names.extend(d.names.iter().cloned());
        let m = DMatrix::from_fn(d.n(), d.p() + 1, |i, j| if j == 0 { d.y[i] } else { d.x[(i, j - 1)] });
        write_matrix_csv(out.join(format!("replicate_{:03}.csv", r + 1)), &names, &m)?;
    }
    Ok(())
}
