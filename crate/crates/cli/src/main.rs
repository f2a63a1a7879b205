//! `prfgame`: simulations, sweeps and audits for publishers' games under
//! proportional ranking.
//!
//! Every subcommand accepts `--seed`, `--out`, `--config` and `--jobs`.
//! Settings resolve as command-line flag, then the JSON config file, then
//! the built-in default. Exit status is 0 on success, 1 on any error and 2
//! when a simulation stops without converging.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use prfgame::analysis::{
    audit_concavity, build_counterexample, counterexample_second_derivative, curvature_argmax,
    symmetric_equilibrium, SymmetricInstance,
};
use prfgame::dynamics::{run_dynamics, DynamicsConfig};
use prfgame::experiments::{
    log_checkpoints, reference_instance, regret_audit, run_sweep, sample_instance,
    softmax_regret_trace, EcosystemSampler, InstanceShape, SweepSpec, SweptParameter,
    REGRET_AUDIT_ROUNDS,
};
use prfgame::{
    Activation, ActivationFamily, LearnerKind, LearnerSpec, PublishersGame, StepSchedule,
};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Map, Value};

#[derive(Args, Debug, Clone)]
struct Common {
    /// Master seed [default: 0]
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory [default: out]
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON file with settings; keys are the long flag names with `_`
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads [default: available parallelism]
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct GameFlags {
    /// linear, root, log or exponential [default: linear]
    #[arg(long)]
    activation: Option<String>,
    /// Activation hyperparameter (b, a, c or beta) [default: family default]
    #[arg(long, allow_hyphen_values = true)]
    param: Option<f64>,
    /// Publishers [default: 3]
    #[arg(long)]
    n: Option<usize>,
    /// Information needs [default: 3]
    #[arg(long)]
    s: Option<usize>,
    /// Embedding dimension [default: 3]
    #[arg(long)]
    k: Option<usize>,
    /// Integrity parameter shared by all publishers [default: 0.5]
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<f64>,
    /// uniform-iid or truncated-normal [default: uniform-iid]
    #[arg(long)]
    sampler: Option<String>,
    /// Correlation of the initial documents (truncated-normal) [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    rho1: Option<f64>,
    /// Correlation of the information needs (truncated-normal) [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    rho2: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct LearnerFlags {
    /// pga or optimistic [default: pga]
    #[arg(long)]
    learner: Option<String>,
    /// constant or inverse-sqrt [default: inverse-sqrt]
    #[arg(long)]
    schedule: Option<String>,
    /// Base step size [default: 0.5]
    #[arg(long, allow_hyphen_values = true)]
    rate: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct DynamicsFlags {
    /// Target equilibrium gap [default: 1e-4]
    #[arg(long, allow_hyphen_values = true)]
    epsilon: Option<f64>,
    /// Rounds between certifications [default: 10]
    #[arg(long)]
    check_every: Option<usize>,
    /// Round limit [default: 200000]
    #[arg(long)]
    max_rounds: Option<usize>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    game: GameFlags,
    #[command(flatten)]
    learner: LearnerFlags,
    #[command(flatten)]
    dynamics: DynamicsFlags,
    /// Game JSON to load instead of sampling one
    #[arg(long)]
    game_file: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// lambda, n, s, k or activation-hyperparameter [default: lambda]
    #[arg(long)]
    parameter: Option<String>,
    /// Comma-separated grid values [default: 0.1,0.5,1,2]
    #[arg(long)]
    grid: Option<String>,
    /// Comma-separated activation families [default: linear,root,log]
    #[arg(long)]
    activations: Option<String>,
    /// Instances per grid point [default: 500]
    #[arg(long)]
    instances: Option<usize>,
    /// Bootstrap resamples [default: 500]
    #[arg(long)]
    bootstrap: Option<usize>,
    /// Confidence level [default: 0.95]
    #[arg(long)]
    confidence: Option<f64>,
    #[command(flatten)]
    game: GameFlags,
    #[command(flatten)]
    learner: LearnerFlags,
    #[command(flatten)]
    dynamics: DynamicsFlags,
}

#[derive(Args, Debug)]
struct RegretAuditArgs {
    #[command(flatten)]
    sweep: SweepArgs,
    /// Rounds per run [default: 100]
    #[arg(long)]
    rounds: Option<usize>,
    /// Oracle tolerance [default: 1e-7]
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Args, Debug)]
struct ConcavityArgs {
    #[command(flatten)]
    game: GameFlags,
    /// Random midpoint tests [default: 10000]
    #[arg(long)]
    samples: Option<usize>,
    /// Audit the counterexample game of the activation instead of a sampled one
    #[arg(long)]
    counterexample: bool,
    /// Evaluation point of the counterexample [default: argmax of g'']
    #[arg(long)]
    ahat: Option<f64>,
}

#[derive(Args, Debug)]
struct EquilibriumArgs {
    /// linear, root or log [default: linear]
    #[arg(long)]
    activation: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    param: Option<f64>,
    /// Publishers [default: 2]
    #[arg(long)]
    n: Option<usize>,
    /// Distance of the shared initial document from the information need [default: 0.25]
    #[arg(long)]
    c1: Option<f64>,
    /// Integrity parameter [default: 0.5]
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<f64>,
    /// Residual tolerance of the root [default: 1e-10]
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Args, Debug)]
struct CounterexampleArgs {
    /// Activation that is convex somewhere [default: exponential]
    #[arg(long)]
    activation: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    param: Option<f64>,
    /// Evaluation point [default: argmax of g'']
    #[arg(long)]
    ahat: Option<f64>,
}

#[derive(Args, Debug)]
struct SoftmaxArgs {
    /// Inverse temperature [default: 10]
    #[arg(long)]
    beta: Option<f64>,
    /// Last round [default: 5000]
    #[arg(long)]
    horizon: Option<usize>,
    /// Number of logarithmic checkpoints [default: 12]
    #[arg(long)]
    checkpoints: Option<usize>,
    /// Oracle tolerance [default: 1e-7]
    #[arg(long)]
    tolerance: Option<f64>,
    /// Sample the instance from --seed instead of using the fixed reference instance
    #[arg(long)]
    sampled: bool,
    #[command(flatten)]
    game: GameFlags,
    #[command(flatten)]
    learner: LearnerFlags,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one dynamics instance to a certified equilibrium
    Simulate(SimulateArgs),
    /// Sweep one parameter and aggregate welfare and convergence rounds
    Sweep(SweepArgs),
    /// Audit concavity of an instance
    Concavity(ConcavityArgs),
    /// Solve the symmetric one-hot equilibrium
    Equilibrium(EquilibriumArgs),
    /// Build the counterexample game for a non-concave activation
    Counterexample(CounterexampleArgs),
    /// Average regret after a fixed number of rounds across a sweep
    RegretAudit(RegretAuditArgs),
    /// Regret over time under softmax ranking with a linear companion
    SoftmaxTrace(SoftmaxArgs),
}

#[derive(Parser, Debug)]
#[command(name = "prfgame", version, about = "Publishers' games under proportional ranking")]
struct Wrapper {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Flag, then config file, then default.
struct Resolver {
    config: Map<String, Value>,
    used: Map<String, Value>,
}

impl Resolver {
    fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let config = match path {
            None => Map::new(),
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                match serde_json::from_str::<Value>(&text)
                    .with_context(|| format!("parsing config {}", p.display()))?
                {
                    Value::Object(m) => m,
                    _ => bail!("config {} must hold a JSON object", p.display()),
                }
            }
        };
        Ok(Self {
            config,
            used: Map::new(),
        })
    }

    fn get<T: DeserializeOwned + Serialize + Clone>(
        &mut self,
        key: &str,
        flag: Option<T>,
        default: T,
    ) -> anyhow::Result<T> {
        let v = match flag {
            Some(v) => v,
            None => match self.config.get(key) {
                Some(raw) => serde_json::from_value(raw.clone())
                    .map_err(|e| anyhow!("config field {key}: {e}"))?,
                None => default,
            },
        };
        self.used.insert(key.to_string(), serde_json::to_value(&v)?);
        Ok(v)
    }

    fn optional<T: DeserializeOwned + Serialize + Clone>(
        &mut self,
        key: &str,
        flag: Option<T>,
    ) -> anyhow::Result<Option<T>> {
        let v = match flag {
            Some(v) => Some(v),
            None => match self.config.get(key) {
                Some(raw) => Some(
                    serde_json::from_value(raw.clone()).map_err(|e| anyhow!("config field {key}: {e}"))?,
                ),
                None => None,
            },
        };
        if let Some(v) = &v {
            self.used.insert(key.to_string(), serde_json::to_value(v)?);
        }
        Ok(v)
    }
}

fn family(name: &str) -> anyhow::Result<ActivationFamily> {
    name.parse::<ActivationFamily>()
        .map_err(|e| anyhow!("activation: {e}"))
}

fn activation(r: &mut Resolver, flag_name: Option<String>, flag_param: Option<f64>, default: &str) -> anyhow::Result<Activation> {
    let fam = family(&r.get("activation", flag_name, default.to_string())?)?;
    let param = r.get("param", flag_param, fam.default_param())?;
    Activation::new(fam, param).map_err(|e| anyhow!("param: {e}"))
}

fn positive(name: &str, v: f64) -> anyhow::Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        bail!("{name} = {v}; must be > 0")
    }
}

fn at_least(name: &str, v: usize, min: usize) -> anyhow::Result<usize> {
    if v >= min {
        Ok(v)
    } else {
        bail!("{name} = {v}; must be >= {min}")
    }
}

struct GameSettings {
    shape: InstanceShape,
    sampler: EcosystemSampler,
}

fn game_settings(r: &mut Resolver, f: GameFlags, default_activation: &str) -> anyhow::Result<GameSettings> {
    let act = activation(r, f.activation, f.param, default_activation)?;
    let shape = InstanceShape {
        n: at_least("n", r.get("n", f.n, 3)?, 2)?,
        s: at_least("s", r.get("s", f.s, 3)?, 1)?,
        k: at_least("k", r.get("k", f.k, 3)?, 1)?,
        lambda: positive("lambda", r.get("lambda", f.lambda, 0.5)?)?,
        activation: act,
    };
    let sampler = match r.get("sampler", f.sampler, "uniform-iid".to_string())?.as_str() {
        "uniform-iid" | "uniform" => EcosystemSampler::UniformIid,
        "truncated-normal" => EcosystemSampler::truncated_normal(
            r.get("rho1", f.rho1, 0.0)?,
            r.get("rho2", f.rho2, 0.0)?,
        ),
        other => bail!("sampler: unknown sampler {other:?}"),
    };
    Ok(GameSettings { shape, sampler })
}

fn learner_spec(r: &mut Resolver, f: LearnerFlags, default: LearnerSpec) -> anyhow::Result<LearnerSpec> {
    let default_kind = match default.kind {
        LearnerKind::ProjectedGradientAscent => "pga",
        LearnerKind::OptimisticGradientAscent => "optimistic",
    };
    let default_schedule = match default.schedule {
        StepSchedule::Constant => "constant",
        StepSchedule::InverseSqrt => "inverse-sqrt",
    };
    let kind = match r.get("learner", f.learner, default_kind.to_string())?.as_str() {
        "pga" | "projected-gradient-ascent" => LearnerKind::ProjectedGradientAscent,
        "optimistic" | "optimistic-gradient-ascent" => LearnerKind::OptimisticGradientAscent,
        other => bail!("learner: unknown learner {other:?}"),
    };
    let schedule = match r.get("schedule", f.schedule, default_schedule.to_string())?.as_str() {
        "constant" => StepSchedule::Constant,
        "inverse-sqrt" => StepSchedule::InverseSqrt,
        other => bail!("schedule: unknown schedule {other:?}"),
    };
    Ok(LearnerSpec {
        kind,
        schedule,
        base_rate: positive("rate", r.get("rate", f.rate, default.base_rate)?)?,
    })
}

fn dynamics_config(r: &mut Resolver, f: DynamicsFlags) -> anyhow::Result<DynamicsConfig> {
    let d = DynamicsConfig::default();
    Ok(DynamicsConfig {
        epsilon: positive("epsilon", r.get("epsilon", f.epsilon, d.epsilon)?)?,
        check_every: at_least("check_every", r.get("check_every", f.check_every, d.check_every)?, 1)?,
        max_rounds: at_least("max_rounds", r.get("max_rounds", f.max_rounds, d.max_rounds)?, 1)?,
    })
}

struct Output {
    dir: PathBuf,
}

impl Output {
    fn new(dir: PathBuf) -> anyhow::Result<Self> {
        fs::create_dir_all(&dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Self { dir })
    }

    fn create(&self, name: &str) -> anyhow::Result<BufWriter<File>> {
        let path = self.dir.join(name);
        let f = File::create(&path).with_context(|| format!("writing {}", path.display()))?;
        Ok(BufWriter::new(f))
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> anyhow::Result<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        use std::io::Write;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    fn path(&self, name: &str) -> String {
        self.dir.join(name).display().to_string()
    }
}

fn parse_list<T: std::str::FromStr>(name: &str, text: &str) -> anyhow::Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| anyhow!("{name}: {s:?}: {e}")))
        .collect()
}

fn sweep_spec(r: &mut Resolver, a: SweepArgs, seed: u64) -> anyhow::Result<SweepSpec> {
    let param: SweptParameter = r
        .get("parameter", a.parameter, "lambda".to_string())?
        .parse()
        .map_err(|e| anyhow!("parameter: {e}"))?;
    let grid: Vec<f64> = parse_list("grid", &r.get("grid", a.grid, "0.1,0.5,1,2".to_string())?)?;
    let families: Vec<ActivationFamily> =
        parse_list("activations", &r.get("activations", a.activations, "linear,root,log".to_string())?)?;
    let settings = game_settings(r, a.game, "linear")?;
    let mut spec = SweepSpec::new(param, grid);
    spec.fixed.n = settings.shape.n;
    spec.fixed.s = settings.shape.s;
    spec.fixed.k = settings.shape.k;
    spec.fixed.lambda = settings.shape.lambda;
    spec.sampler = settings.sampler;
    spec.activations = families.into_iter().map(Activation::with_default).collect();
    spec.instances_per_point = r.get("instances", a.instances, spec.instances_per_point)?;
    spec.bootstrap_resamples = r.get("bootstrap", a.bootstrap, spec.bootstrap_resamples)?;
    spec.confidence = r.get("confidence", a.confidence, spec.confidence)?;
    spec.learner = learner_spec(r, a.learner, LearnerSpec::default())?;
    spec.dynamics = dynamics_config(r, a.dynamics)?;
    spec.seed = seed;
    spec.validate().map_err(|e| anyhow!("{e}"))?;
    Ok(spec)
}

fn simulate(r: &mut Resolver, a: SimulateArgs, seed: u64, out: &Output) -> anyhow::Result<ExitCode> {
    let game_file = r.optional("game_file", a.game_file)?;
    let settings = game_settings(r, a.game, "linear")?;
    let learner = learner_spec(r, a.learner, LearnerSpec::default())?;
    let cfg = dynamics_config(r, a.dynamics)?;
    let game: PublishersGame = match game_file {
        Some(p) => {
            let text = fs::read_to_string(&p).with_context(|| format!("reading game {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing game {}", p.display()))?
        }
        None => sample_instance(&settings.sampler, &settings.shape, seed)?,
    };
    let run = run_dynamics(&game, &learner, &cfg, seed)?;
    out.json("game.json", &game)?;
    run.trajectory.write_csv(out.create("trajectory.csv")?)?;
    run.report.write_json(out.create("report.json")?)?;
    println!(
        "simulate: converged={} rounds={} gap={:.3e} publishers={:.6} users={:.6} -> {}",
        run.report.converged,
        run.report.rounds,
        run.report.certified_epsilon,
        run.report.welfare.publishers,
        run.report.welfare.users,
        out.path("report.json")
    );
    Ok(if run.report.converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn sweep(r: &mut Resolver, a: SweepArgs, seed: u64, out: &Output) -> anyhow::Result<ExitCode> {
    let spec = sweep_spec(r, a, seed)?;
    let result = run_sweep(&spec)?;
    result.write_csv(out.create("sweep.csv")?)?;
    result.write_manifest(out.create("manifest.json")?)?;
    let failed: usize = result.instances.iter().filter(|i| !i.converged).count();
    println!(
        "sweep: {} over {} values x {} activations, {} instances, {} not converged, {} flagged -> {}",
        spec.swept_parameter.name(),
        spec.grid.len(),
        spec.activations.len(),
        result.instances.len(),
        failed,
        result.flagged.len(),
        out.path("sweep.csv")
    );
    Ok(ExitCode::SUCCESS)
}

fn regret(r: &mut Resolver, a: RegretAuditArgs, seed: u64, out: &Output) -> anyhow::Result<ExitCode> {
    let rounds = at_least("rounds", r.get("rounds", a.rounds, REGRET_AUDIT_ROUNDS)?, 1)?;
    let tolerance = positive("tolerance", r.get("tolerance", a.tolerance, 1e-7)?)?;
    let spec = sweep_spec(r, a.sweep, seed)?;
    let result = regret_audit(&spec, rounds, tolerance)?;
    result.write_csv(out.create("regret.csv")?)?;
    result.write_manifest(out.create("manifest.json")?)?;
    println!(
        "regret-audit: {} over {} values x {} activations at T={} -> {}",
        spec.swept_parameter.name(),
        spec.grid.len(),
        spec.activations.len(),
        rounds,
        out.path("regret.csv")
    );
    Ok(ExitCode::SUCCESS)
}

fn concavity(r: &mut Resolver, a: ConcavityArgs, seed: u64, out: &Output) -> anyhow::Result<ExitCode> {
    let samples = r.get("samples", a.samples, 10_000)?;
    let counter = r.get("counterexample", Some(a.counterexample).filter(|b| *b), false)?;
    let ahat = r.optional("ahat", a.ahat)?;
    let settings = game_settings(r, a.game, "linear")?;
    let game = if counter {
        build_counterexample(&settings.shape.activation, ahat)?
    } else {
        sample_instance(&settings.sampler, &settings.shape, seed)?
    };
    let verdict = audit_concavity(&game, samples, seed);
    verdict.write_json(out.create("verdict.json")?)?;
    println!(
        "concavity: activation_concave={} own_violations={} opponent_violations={} -> {}",
        verdict.activation_concave,
        verdict.own_concavity_violations,
        verdict.opponent_convexity_violations,
        out.path("verdict.json")
    );
    Ok(ExitCode::SUCCESS)
}

fn equilibrium(r: &mut Resolver, a: EquilibriumArgs, out: &Output) -> anyhow::Result<ExitCode> {
    let act = activation(r, a.activation, a.param, "linear")?;
    let inst = SymmetricInstance {
        n: at_least("n", r.get("n", a.n, 2)?, 2)?,
        c1: r.get("c1", a.c1, 0.25)?,
        lambda: positive("lambda", r.get("lambda", a.lambda, 0.5)?)?,
        activation: act,
    };
    inst.validate()?;
    let tolerance = positive("tolerance", r.get("tolerance", a.tolerance, 1e-10)?)?;
    let eq = symmetric_equilibrium(&inst, tolerance)?;
    out.json("equilibrium.json", &json!({ "instance": inst, "equilibrium": eq }))?;
    println!(
        "equilibrium: alpha={:.6} users_welfare={:.6} -> {}",
        eq.alpha,
        eq.users_welfare,
        out.path("equilibrium.json")
    );
    Ok(ExitCode::SUCCESS)
}

fn counterexample(r: &mut Resolver, a: CounterexampleArgs, out: &Output) -> anyhow::Result<ExitCode> {
    let act = activation(r, a.activation, a.param, "exponential")?;
    let a_hat = match r.optional("ahat", a.ahat)? {
        Some(v) => v,
        None => curvature_argmax(&act),
    };
    let game = build_counterexample(&act, Some(a_hat))?;
    let f2 = counterexample_second_derivative(&act, game.n(), a_hat);
    out.json(
        "counterexample.json",
        &json!({ "game": game, "a_hat": a_hat, "n": game.n(), "second_derivative": f2 }),
    )?;
    println!(
        "counterexample: n={} a_hat={} f''={:.6} -> {}",
        game.n(),
        a_hat,
        f2,
        out.path("counterexample.json")
    );
    Ok(ExitCode::SUCCESS)
}

fn softmax(r: &mut Resolver, a: SoftmaxArgs, seed: u64, out: &Output) -> anyhow::Result<ExitCode> {
    let beta = positive("beta", r.get("beta", a.beta, 10.0)?)?;
    let horizon = at_least("horizon", r.get("horizon", a.horizon, 5000)?, 2)?;
    let count = at_least("checkpoints", r.get("checkpoints", a.checkpoints, 12)?, 2)?;
    let tolerance = positive("tolerance", r.get("tolerance", a.tolerance, 1e-7)?)?;
    let sampled = r.get("sampled", Some(a.sampled).filter(|b| *b), false)?;
    let settings = game_settings(r, a.game, "linear")?;
    let learner = learner_spec(
        r,
        a.learner,
        LearnerSpec {
            kind: LearnerKind::OptimisticGradientAscent,
            base_rate: 0.5,
            schedule: StepSchedule::Constant,
        },
    )?;
    let game = if sampled {
        sample_instance(&settings.sampler, &settings.shape, seed)?
    } else {
        reference_instance(settings.shape.activation)
    };
    let checkpoints = log_checkpoints(10.min(horizon), horizon, count);
    let trace = softmax_regret_trace(&game, beta, &learner, &checkpoints, tolerance)?;
    trace.write_csv(out.create("softmax.csv")?)?;
    out.json("softmax.json", &trace)?;
    let max_slope = trace.softmax.slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let comp_slope = trace.companion.slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    println!(
        "softmax-trace: beta={beta} T={horizon} max softmax slope={max_slope:.4e} max linear slope={comp_slope:.4e} -> {}",
        out.path("softmax.csv")
    );
    Ok(ExitCode::SUCCESS)
}

fn run(w: Wrapper) -> anyhow::Result<ExitCode> {
    let mut r = Resolver::load(w.common.config.as_deref())?;
    let seed = r.get("seed", w.common.seed, 0u64)?;
    let jobs = r.optional("jobs", w.common.jobs)?;
    if let Some(j) = jobs {
        if j == 0 {
            bail!("jobs must be >= 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .context("configuring worker threads")?;
    }
    let out_dir = r.get("out", w.common.out, PathBuf::from("out"))?;
    let out = Output::new(out_dir)?;
    let code = match w.command {
        Command::Simulate(a) => simulate(&mut r, a, seed, &out)?,
        Command::Sweep(a) => sweep(&mut r, a, seed, &out)?,
        Command::Concavity(a) => concavity(&mut r, a, seed, &out)?,
        Command::Equilibrium(a) => equilibrium(&mut r, a, &out)?,
        Command::Counterexample(a) => counterexample(&mut r, a, &out)?,
        Command::RegretAudit(a) => regret(&mut r, a, seed, &out)?,
        Command::SoftmaxTrace(a) => softmax(&mut r, a, seed, &out)?,
    };
    out.json("config.json", &Value::Object(r.used))?;
    Ok(code)
}

fn main() -> ExitCode {
    let parsed = match Wrapper::try_parse() {
        Ok(p) => p,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(parsed) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
