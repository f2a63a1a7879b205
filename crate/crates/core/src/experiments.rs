//! Random ecosystems, parameter sweeps with bootstrap intervals, the
//! fixed-horizon regret audit and the softmax regret trace.

use std::io::Write;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{run_dynamics, run_fixed_rounds, DynamicsConfig};
use crate::error::{invalid, Error, Result};
use crate::learners::{average_regret_at, hindsight_regret, LearnerSpec};
use crate::model::{
    Activation, ActivationFamily, DemandDistribution, Point, PublishersGame, SemiMetric,
};

/// Attempts per truncated-normal draw before giving up.
pub const REJECTION_BUDGET: usize = 10_000;

/// Mixes a master seed with indices into an independent stream seed.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    let mut z = master ^ 0x243F_6A88_85A3_08D3;
    for p in parts {
        z = splitmix(z ^ splitmix(*p));
    }
    z
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EcosystemSampler {
    #[default]
    UniformIid,
    /// Per coordinate, the three initial documents and the three demand
    /// atoms are jointly normal around 0.5 with covariance
    /// `sigma^2 [[1, rho, rho^2], [rho, 1, rho], [rho^2, rho, 1]]`,
    /// conditioned on the unit interval.
    TruncatedNormal {
        sigma1: f64,
        sigma2: f64,
        rho1: f64,
        rho2: f64,
    },
}

impl EcosystemSampler {
    pub fn truncated_normal(rho1: f64, rho2: f64) -> Self {
        Self::TruncatedNormal {
            sigma1: 0.2,
            sigma2: 0.2,
            rho1,
            rho2,
        }
    }

    fn validate(&self) -> Result<()> {
        if let Self::TruncatedNormal {
            sigma1,
            sigma2,
            rho1,
            rho2,
        } = *self
        {
            for (name, s) in [("sigma1", sigma1), ("sigma2", sigma2)] {
                if !(s.is_finite() && s > 0.0) {
                    return Err(invalid(format!("{name} = {s}; must be > 0")));
                }
            }
            for (name, r) in [("rho1", rho1), ("rho2", rho2)] {
                if !(r > -1.0 && r < 1.0) {
                    return Err(invalid(format!("{name} = {r}; must lie in (-1, 1)")));
                }
            }
        }
        Ok(())
    }
}

/// Shape and payoff parameters of a sampled instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceShape {
    pub n: usize,
    pub s: usize,
    pub k: usize,
    pub lambda: f64,
    pub activation: Activation,
}

impl InstanceShape {
    pub fn defaults(activation: Activation) -> Self {
        Self {
            n: 3,
            s: 3,
            k: 3,
            lambda: 0.5,
            activation,
        }
    }
}

fn pattern_factor(sigma: f64, rho: f64) -> Result<Matrix3<f64>> {
    let cov = Matrix3::new(1.0, rho, rho * rho, rho, 1.0, rho, rho * rho, rho, 1.0) * (sigma * sigma);
    cov.cholesky()
        .map(|c| c.l())
        .ok_or_else(|| invalid(format!("covariance with rho = {rho} is not positive definite")))
}

/// Three jointly normal values per coordinate, each triple conditioned on
/// `[0,1]^3` by rejection. Returns `3` points of dimension `k`.
fn truncated_triples(rng: &mut ChaCha8Rng, factor: &Matrix3<f64>, k: usize) -> Result<Vec<Vec<f64>>> {
    let mut out = vec![vec![0.0; k]; 3];
    for j in 0..k {
        let mut accepted = None;
        for _ in 0..REJECTION_BUDGET {
            let z = Vector3::new(
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
            );
            let v = factor * z + Vector3::repeat(0.5);
            if v.iter().all(|c| (0.0..=1.0).contains(c)) {
                accepted = Some(v);
                break;
            }
        }
        let v = accepted.ok_or_else(|| {
            Error::Sampling(format!("no in-cube draw after {REJECTION_BUDGET} attempts"))
        })?;
        for (p, c) in out.iter_mut().zip(v.iter()) {
            p[j] = *c;
        }
    }
    Ok(out)
}

/// Draws initial documents and `s` demand atoms (uniform weights).
pub fn sample_instance(
    sampler: &EcosystemSampler,
    shape: &InstanceShape,
    seed: u64,
) -> Result<PublishersGame> {
    sampler.validate()?;
    let InstanceShape {
        n, s, k, lambda, ..
    } = *shape;
    if n < 2 || s == 0 || k == 0 {
        return Err(invalid(format!("need n >= 2, s >= 1, k >= 1; got n={n}, s={s}, k={k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (docs, atoms) = match *sampler {
        EcosystemSampler::UniformIid => {
            let mut draw = |count: usize| -> Vec<Vec<f64>> {
                (0..count).map(|_| (0..k).map(|_| rng.gen::<f64>()).collect()).collect()
            };
            let docs = draw(n);
            let atoms = draw(s);
            (docs, atoms)
        }
        EcosystemSampler::TruncatedNormal {
            sigma1,
            sigma2,
            rho1,
            rho2,
        } => {
            if n != 3 || s != 3 {
                return Err(invalid(format!(
                    "truncated-normal sampler needs n = s = 3; got n={n}, s={s}"
                )));
            }
            let docs = truncated_triples(&mut rng, &pattern_factor(sigma1, rho1)?, k)?;
            let atoms = truncated_triples(&mut rng, &pattern_factor(sigma2, rho2)?, k)?;
            (docs, atoms)
        }
    };
    let to_points = |v: Vec<Vec<f64>>| v.into_iter().map(Point::new).collect::<Result<Vec<_>>>();
    PublishersGame::new(
        SemiMetric::ScaledSquaredEuclidean,
        shape.activation,
        DemandDistribution::uniform(to_points(atoms)?)?,
        to_points(docs)?,
        vec![lambda; n],
    )
}

/// Percentile bootstrap interval for the mean: `(low, mean, high)`. The
/// bounds are widened to contain the sample mean when resampling skews them.
pub fn bootstrap_ci(values: &[f64], resamples: usize, confidence: f64, seed: u64) -> Result<(f64, f64, f64)> {
    if values.len() < 2 {
        return Err(invalid(format!(
            "bootstrap needs at least 2 values, got {}",
            values.len()
        )));
    }
    if resamples == 0 {
        return Err(invalid("bootstrap needs at least one resample"));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(invalid(format!("confidence = {confidence}; must lie in (0, 1)")));
    }
    let m = values.len();
    // shifted sums keep constant samples exact
    let shift = values[0];
    let mean = shift + values.iter().map(|v| v - shift).sum::<f64>() / m as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| shift + (0..m).map(|_| values[rng.gen_range(0..m)] - shift).sum::<f64>() / m as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - confidence) / 2.0;
    let low = quantile_sorted(&means, tail).min(mean);
    let high = quantile_sorted(&means, 1.0 - tail).max(mean);
    Ok((low, mean, high))
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweptParameter {
    Lambda,
    N,
    S,
    K,
    ActivationHyperparameter,
}

impl SweptParameter {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Lambda => "lambda",
            Self::N => "n",
            Self::S => "s",
            Self::K => "k",
            Self::ActivationHyperparameter => "activation-hyperparameter",
        }
    }
}

impl std::str::FromStr for SweptParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "lambda" => Self::Lambda,
            "n" => Self::N,
            "s" => Self::S,
            "k" => Self::K,
            "activation-hyperparameter" | "param" | "hyperparameter" => Self::ActivationHyperparameter,
            other => return Err(invalid(format!("unknown swept parameter {other:?}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedParameters {
    pub lambda: f64,
    pub n: usize,
    pub s: usize,
    pub k: usize,
}

impl Default for FixedParameters {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            n: 3,
            s: 3,
            k: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub swept_parameter: SweptParameter,
    pub grid: Vec<f64>,
    pub fixed: FixedParameters,
    /// Activations compared at every grid point. For a hyperparameter sweep
    /// only the family matters; the grid supplies the parameter.
    pub activations: Vec<Activation>,
    pub instances_per_point: usize,
    pub bootstrap_resamples: usize,
    pub confidence: f64,
    pub seed: u64,
    pub sampler: EcosystemSampler,
    pub learner: LearnerSpec,
    pub dynamics: DynamicsConfig,
}

impl SweepSpec {
    /// Spec with the documented defaults for everything but the swept
    /// parameter and its grid.
    pub fn new(swept_parameter: SweptParameter, grid: Vec<f64>) -> Self {
        Self {
            swept_parameter,
            grid,
            fixed: FixedParameters::default(),
            activations: ActivationFamily::CONCAVE
                .iter()
                .map(|f| Activation::with_default(*f))
                .collect(),
            instances_per_point: 500,
            bootstrap_resamples: 500,
            confidence: 0.95,
            seed: 0,
            sampler: EcosystemSampler::UniformIid,
            learner: LearnerSpec::default(),
            dynamics: DynamicsConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(invalid("grid must not be empty"));
        }
        if self.activations.is_empty() {
            return Err(invalid("activations must not be empty"));
        }
        if self.instances_per_point < 2 {
            return Err(invalid(format!(
                "instances_per_point = {}; need at least 2",
                self.instances_per_point
            )));
        }
        if self.bootstrap_resamples == 0 {
            return Err(invalid("bootstrap_resamples must be >= 1"));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(invalid(format!("confidence = {}; must lie in (0, 1)", self.confidence)));
        }
        self.learner.validate()?;
        self.dynamics.validate()?;
        self.sampler.validate()?;
        for &v in &self.grid {
            for act in &self.activations {
                self.shape_at(v, act)?;
            }
        }
        Ok(())
    }

    fn count(v: f64, name: &str) -> Result<usize> {
        if v.fract() != 0.0 || v < 1.0 {
            return Err(invalid(format!("{name} grid value {v} is not a positive integer")));
        }
        Ok(v as usize)
    }

    /// Instance shape at grid value `v` for activation `act`.
    pub fn shape_at(&self, v: f64, act: &Activation) -> Result<InstanceShape> {
        let f = &self.fixed;
        let mut shape = InstanceShape {
            n: f.n,
            s: f.s,
            k: f.k,
            lambda: f.lambda,
            activation: *act,
        };
        match self.swept_parameter {
            SweptParameter::Lambda => shape.lambda = v,
            SweptParameter::N => shape.n = Self::count(v, "n")?,
            SweptParameter::S => shape.s = Self::count(v, "s")?,
            SweptParameter::K => shape.k = Self::count(v, "k")?,
            SweptParameter::ActivationHyperparameter => {
                shape.activation = Activation::new(act.family(), v)?;
            }
        }
        if !(shape.lambda.is_finite() && shape.lambda > 0.0) {
            return Err(invalid(format!("lambda = {}; must be > 0", shape.lambda)));
        }
        if shape.n < 2 {
            return Err(invalid(format!("n = {}; need at least 2", shape.n)));
        }
        Ok(shape)
    }

    /// Seed of instance `index`. Instances are paired across grid points
    /// and activations.
    pub fn instance_seed(&self, index: usize) -> u64 {
        derive_seed(self.seed, &[index as u64])
    }

    fn cells(&self) -> Vec<(usize, usize)> {
        (0..self.grid.len())
            .flat_map(|g| (0..self.activations.len()).map(move |a| (g, a)))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    PublishersWelfare,
    UsersWelfare,
    ConvergenceRounds,
    AverageRegret,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Self::PublishersWelfare => "publishers-welfare",
            Self::UsersWelfare => "users-welfare",
            Self::ConvergenceRounds => "convergence-rounds",
            Self::AverageRegret => "average-regret",
        }
    }
}

/// Outcome of one instance at one grid cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub value: f64,
    pub activation: ActivationFamily,
    pub index: usize,
    pub converged: bool,
    pub rounds: usize,
    pub publishers_welfare: f64,
    pub users_welfare: f64,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub swept_parameter: String,
    pub value: f64,
    pub activation: ActivationFamily,
    pub metric: Metric,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_instances: usize,
    pub n_failed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub spec: SweepSpec,
    pub rows: Vec<SweepRow>,
    /// Cells where more than half of the instances failed.
    pub flagged: Vec<(f64, ActivationFamily)>,
    pub instances: Vec<InstanceRecord>,
}

impl SweepResult {
    pub fn row(&self, value: f64, activation: ActivationFamily, metric: Metric) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.value == value && r.activation == activation && r.metric == metric)
    }

    /// Rows for one activation and metric in grid order.
    pub fn series(&self, activation: ActivationFamily, metric: Metric) -> Vec<&SweepRow> {
        self.rows
            .iter()
            .filter(|r| r.activation == activation && r.metric == metric)
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "swept_parameter",
            "value",
            "activation",
            "metric",
            "mean",
            "ci_low",
            "ci_high",
            "n_instances",
            "n_failed",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.swept_parameter.clone(),
                r.value.to_string(),
                r.activation.name().to_string(),
                r.metric.name().to_string(),
                r.mean.to_string(),
                r.ci_low.to_string(),
                r.ci_high.to_string(),
                r.n_instances.to_string(),
                r.n_failed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Manifest recording the full spec.
    pub fn write_manifest<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, &self.spec)?;
        Ok(())
    }
}

fn run_instance(spec: &SweepSpec, g: usize, a: usize, index: usize) -> InstanceRecord {
    let value = spec.grid[g];
    let act = spec.activations[a];
    let seed = spec.instance_seed(index);
    let outcome = spec.shape_at(value, &act).and_then(|shape| {
        let game = sample_instance(&spec.sampler, &shape, seed)?;
        run_dynamics(&game, &spec.learner, &spec.dynamics, seed)
    });
    let mut rec = InstanceRecord {
        value,
        activation: act.family(),
        index,
        converged: false,
        rounds: 0,
        publishers_welfare: f64::NAN,
        users_welfare: f64::NAN,
        error: None,
    };
    match outcome {
        Ok(run) => {
            rec.converged = run.report.converged;
            rec.rounds = run.report.rounds;
            rec.publishers_welfare = run.report.welfare.publishers;
            rec.users_welfare = run.report.welfare.users;
        }
        Err(e) => rec.error = Some(e.to_string()),
    }
    rec
}

fn summarize(
    spec: &SweepSpec,
    cell: (usize, usize),
    metrics: &[(Metric, Vec<f64>)],
    failed: usize,
) -> Result<Vec<SweepRow>> {
    let (g, a) = cell;
    metrics
        .iter()
        .enumerate()
        .map(|(m, (metric, values))| {
            let (ci_low, mean, ci_high) = if values.len() >= 2 {
                let seed = derive_seed(spec.seed, &[0xB007, g as u64, a as u64, m as u64]);
                bootstrap_ci(values, spec.bootstrap_resamples, spec.confidence, seed)?
            } else {
                let v = values.first().copied().unwrap_or(f64::NAN);
                (v, v, v)
            };
            Ok(SweepRow {
                swept_parameter: spec.swept_parameter.name().to_string(),
                value: spec.grid[g],
                activation: spec.activations[a].family(),
                metric: *metric,
                mean,
                ci_low,
                ci_high,
                n_instances: values.len(),
                n_failed: failed,
            })
        })
        .collect()
}

/// Runs every (grid value, activation, instance) triple to convergence and
/// aggregates welfare at the certified average and convergence rounds.
/// Non-converged or failed instances are counted in `n_failed` and left out
/// of the statistics.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let cells = spec.cells();
    let jobs: Vec<(usize, usize, usize)> = cells
        .iter()
        .flat_map(|&(g, a)| (0..spec.instances_per_point).map(move |i| (g, a, i)))
        .collect();
    let instances: Vec<InstanceRecord> = jobs
        .par_iter()
        .map(|&(g, a, i)| run_instance(spec, g, a, i))
        .collect();

    let mut rows = Vec::new();
    let mut flagged = Vec::new();
    for (c, &cell) in cells.iter().enumerate() {
        let recs = &instances[c * spec.instances_per_point..(c + 1) * spec.instances_per_point];
        let ok: Vec<&InstanceRecord> = recs.iter().filter(|r| r.converged).collect();
        let failed = recs.len() - ok.len();
        if 2 * failed > recs.len() {
            flagged.push((spec.grid[cell.0], spec.activations[cell.1].family()));
        }
        let metrics = [
            (Metric::PublishersWelfare, ok.iter().map(|r| r.publishers_welfare).collect()),
            (Metric::UsersWelfare, ok.iter().map(|r| r.users_welfare).collect()),
            (Metric::ConvergenceRounds, ok.iter().map(|r| r.rounds as f64).collect()),
        ];
        rows.extend(summarize(spec, cell, &metrics, failed)?);
    }
    Ok(SweepResult {
        spec: spec.clone(),
        rows,
        flagged,
        instances,
    })
}

/// Horizon of the regret audit.
pub const REGRET_AUDIT_ROUNDS: usize = 100;

/// Plays exactly `rounds` rounds per instance and reports the average
/// normalized regret `(1/(T n)) sum_j Reg_j^T` with bootstrap intervals.
pub fn regret_audit(spec: &SweepSpec, rounds: usize, tolerance: f64) -> Result<SweepResult> {
    spec.validate()?;
    if rounds == 0 {
        return Err(invalid("rounds must be >= 1"));
    }
    let cells = spec.cells();
    let jobs: Vec<(usize, usize, usize)> = cells
        .iter()
        .flat_map(|&(g, a)| (0..spec.instances_per_point).map(move |i| (g, a, i)))
        .collect();
    let outcomes: Vec<Result<f64>> = jobs
        .par_iter()
        .map(|&(g, a, i)| {
            let shape = spec.shape_at(spec.grid[g], &spec.activations[a])?;
            let game = sample_instance(&spec.sampler, &shape, spec.instance_seed(i))?;
            let (_, ledger) = run_fixed_rounds(&game, &spec.learner, rounds)?;
            average_regret_at(&game, &ledger, rounds, tolerance)
        })
        .collect();

    let mut rows = Vec::new();
    let mut flagged = Vec::new();
    let mut instances = Vec::with_capacity(jobs.len());
    for (c, &cell) in cells.iter().enumerate() {
        let slice = &outcomes[c * spec.instances_per_point..(c + 1) * spec.instances_per_point];
        let values: Vec<f64> = slice.iter().filter_map(|r| r.as_ref().ok().copied()).collect();
        let failed = slice.len() - values.len();
        if 2 * failed > slice.len() {
            flagged.push((spec.grid[cell.0], spec.activations[cell.1].family()));
        }
        for (index, r) in slice.iter().enumerate() {
            instances.push(InstanceRecord {
                value: spec.grid[cell.0],
                activation: spec.activations[cell.1].family(),
                index,
                converged: r.is_ok(),
                rounds,
                publishers_welfare: f64::NAN,
                users_welfare: f64::NAN,
                error: r.as_ref().err().map(|e| e.to_string()),
            });
        }
        rows.extend(summarize(spec, cell, &[(Metric::AverageRegret, values)], failed)?);
    }
    Ok(SweepResult {
        spec: spec.clone(),
        rows,
        flagged,
        instances,
    })
}

/// Logarithmically spaced integer checkpoints in `[first, last]`, always
/// including both ends.
pub fn log_checkpoints(first: usize, last: usize, count: usize) -> Vec<usize> {
    let first = first.max(1).min(last);
    let mut out: Vec<usize> = (0..count.max(2))
        .map(|j| {
            let f = j as f64 / (count.max(2) - 1) as f64;
            ((first as f64).ln() * (1.0 - f) + (last as f64).ln() * f).exp().round() as usize
        })
        .collect();
    out[0] = first;
    *out.last_mut().expect("count >= 2") = last;
    out.dedup();
    out
}

/// Least-squares slope of `y` against `x`.
pub fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    pub activation: Activation,
    pub checkpoints: Vec<usize>,
    /// `regret[c][i]`: player `i`'s regret over the first `checkpoints[c]`
    /// rounds.
    pub regret: Vec<Vec<f64>>,
    /// Per-player least-squares slope of regret against rounds.
    pub slopes: Vec<f64>,
    /// True when the regrets are lower bounds (non-concave activation).
    pub lower_bounds: bool,
}

impl RegretTrace {
    /// `Reg_i^t / t` at checkpoint index `c`.
    pub fn normalized(&self, c: usize, i: usize) -> f64 {
        self.regret[c][i] / self.checkpoints[c] as f64
    }

    pub fn checkpoint_index(&self, t: usize) -> Option<usize> {
        self.checkpoints.iter().position(|c| *c == t)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxTrace {
    pub softmax: RegretTrace,
    /// Same instance and learner under the linear activation.
    pub companion: RegretTrace,
}

impl SoftmaxTrace {
    /// CSV with columns `activation, round, player, regret`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["activation", "round", "player", "regret"])?;
        for trace in [&self.softmax, &self.companion] {
            for (c, t) in trace.checkpoints.iter().enumerate() {
                for (i, r) in trace.regret[c].iter().enumerate() {
                    w.write_record([
                        trace.activation.family().name().to_string(),
                        t.to_string(),
                        i.to_string(),
                        r.to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn regret_trace(
    game: &PublishersGame,
    learner: &LearnerSpec,
    checkpoints: &[usize],
    tolerance: f64,
) -> Result<RegretTrace> {
    let horizon = *checkpoints.last().ok_or_else(|| invalid("no checkpoints"))?;
    let (_, ledger) = run_fixed_rounds(game, learner, horizon)?;
    let regret: Vec<Vec<f64>> = checkpoints
        .par_iter()
        .map(|&t| {
            let prefix = ledger.prefix(t)?;
            (0..game.n())
                .map(|i| hindsight_regret(game, &prefix, i, tolerance))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let x: Vec<f64> = checkpoints.iter().map(|t| *t as f64).collect();
    let slopes = (0..game.n())
        .map(|i| {
            let y: Vec<f64> = regret.iter().map(|r| r[i]).collect();
            least_squares_slope(&x, &y)
        })
        .collect();
    Ok(RegretTrace {
        activation: *game.activation(),
        checkpoints: checkpoints.to_vec(),
        regret,
        slopes,
        lower_bounds: !game.activation().is_concave(),
    })
}

/// Regret over time under the exponential activation with inverse
/// temperature `beta`, plus the same run under the default linear activation.
pub fn softmax_regret_trace(
    game: &PublishersGame,
    beta: f64,
    learner: &LearnerSpec,
    checkpoints: &[usize],
    tolerance: f64,
) -> Result<SoftmaxTrace> {
    if game.k() > crate::oracle::GLOBAL_MAX_DIM && game.demand().single_atom().is_none() {
        return Err(Error::Unsupported(format!(
            "softmax regret trace needs k <= {}, got k = {}",
            crate::oracle::GLOBAL_MAX_DIM,
            game.k()
        )));
    }
    if checkpoints.is_empty() || checkpoints.windows(2).any(|w| w[0] >= w[1]) || checkpoints[0] == 0 {
        return Err(invalid("checkpoints must be positive and strictly increasing"));
    }
    let softmax_game = game.with_activation(Activation::exponential(beta)?);
    let linear_game = game.with_activation(Activation::with_default(ActivationFamily::Linear));
    Ok(SoftmaxTrace {
        softmax: regret_trace(&softmax_game, learner, checkpoints, tolerance)?,
        companion: regret_trace(&linear_game, learner, checkpoints, tolerance)?,
    })
}

/// The three-publisher instance with fixed documents and demand used for
/// regret traces.
pub fn reference_instance(activation: Activation) -> PublishersGame {
    let p = |v: [f64; 3]| Point::new(v.to_vec()).expect("unit cube");
    PublishersGame::new(
        SemiMetric::ScaledSquaredEuclidean,
        activation,
        DemandDistribution::uniform(vec![
            p([0.55, 0.72, 0.60]),
            p([0.54, 0.42, 0.65]),
            p([0.44, 0.89, 0.96]),
        ])
        .expect("three atoms"),
        vec![p([0.38, 0.79, 0.59]), p([0.57, 0.93, 0.07]), p([0.09, 0.02, 0.83])],
        vec![0.5; 3],
    )
    .expect("valid instance")
}
