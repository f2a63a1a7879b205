//! Repeated play under gradient feedback, certification of the running
//! average as an approximate Nash equilibrium, and the regret-based
//! certificates for the average profile and for players who stop learning at
//! different times.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::learners::{
    hindsight_regret, write_rounds_csv, LearnerSpec, LearnerState, RegretLedger, RoundLog,
};
use crate::model::{Point, Profile, PublishersGame};
use crate::oracle::{self, OwnObjective, Search};

#[derive(Clone, Debug)]
pub struct BestResponse {
    pub action: Point,
    pub value: f64,
    /// Certified upper bound on the best achievable utility, when the
    /// activation is concave.
    pub upper_bound: Option<f64>,
}

fn player_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64 + 1)
}

/// Maximizer of `u_i(., x_-i)` for a concave activation; `x_i` itself is
/// ignored.
pub fn best_response(game: &PublishersGame, x: &Profile, i: usize, tolerance: f64) -> Result<BestResponse> {
    if !game.activation().is_concave() {
        return Err(Error::Unsupported(format!(
            "{} activation is not concave; use best_response_global",
            game.activation().family()
        )));
    }
    respond(game, x, i, tolerance, Search::Concave, 0)
}

/// Multi-start plus coarse-grid search for non-concave activations. The
/// value is a lower bound on the true best response.
pub fn best_response_global(
    game: &PublishersGame,
    x: &Profile,
    i: usize,
    tolerance: f64,
) -> Result<BestResponse> {
    respond(game, x, i, tolerance, Search::Global, 0)
}

fn respond(
    game: &PublishersGame,
    x: &Profile,
    i: usize,
    tolerance: f64,
    search: Search,
    seed: u64,
) -> Result<BestResponse> {
    game.check_profile(x)?;
    if i >= game.n() {
        return Err(invalid(format!("player {i} out of range for n = {}", game.n())));
    }
    let obj = OwnObjective::at_profile(game, x, i);
    let warm = [x.doc(i).coords().to_vec()];
    let m = oracle::maximize(&obj, search, tolerance, &warm, player_seed(seed, i))?;
    Ok(BestResponse {
        action: oracle::to_point(m.point),
        value: m.value,
        upper_bound: m.upper_bound,
    })
}

fn search_for(game: &PublishersGame) -> Search {
    if game.activation().is_concave() {
        Search::Concave
    } else {
        Search::Global
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GapReport {
    /// `max(0, BR_i - u_i)` per player.
    pub gains: Vec<f64>,
    pub gap: f64,
    /// Upper bound on the true gap from the concave certificates; `None`
    /// for non-concave activations.
    pub gap_upper_bound: Option<f64>,
}

/// `max_i [BR_i(x_-i) - u_i(x)]`, clipped at 0. The n best responses are
/// independent and run in parallel.
pub fn epsilon_gap(game: &PublishersGame, x: &Profile, tolerance: f64) -> Result<f64> {
    if !game.activation().is_concave() {
        return Err(Error::Unsupported(format!(
            "{} activation is not concave; use epsilon_gap_report with a global search",
            game.activation().family()
        )));
    }
    gap_report(game, x, tolerance, 0).map(|r| r.gap)
}

/// Like [`epsilon_gap`] but also accepts non-concave activations (giving a
/// lower bound) and returns the per-player detail.
pub fn epsilon_gap_report(game: &PublishersGame, x: &Profile, tolerance: f64) -> Result<GapReport> {
    gap_report(game, x, tolerance, 0)
}

fn gap_report(game: &PublishersGame, x: &Profile, tolerance: f64, seed: u64) -> Result<GapReport> {
    game.check_profile(x)?;
    let search = search_for(game);
    let utilities = game.utilities(x);
    let responses: Vec<BestResponse> = (0..game.n())
        .into_par_iter()
        .map(|i| respond(game, x, i, tolerance, search, seed))
        .collect::<Result<_>>()?;
    let gains: Vec<f64> = responses
        .iter()
        .zip(&utilities)
        .map(|(br, u)| (br.value - u).max(0.0))
        .collect();
    let gap = gains.iter().copied().fold(0.0, f64::max);
    let gap_upper_bound = responses
        .iter()
        .zip(&utilities)
        .map(|(br, u)| br.upper_bound.map(|ub| (ub - u).max(0.0)))
        .try_fold(0.0f64, |acc, v| v.map(|v| acc.max(v)));
    Ok(GapReport {
        gains,
        gap,
        gap_upper_bound,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsConfig {
    pub epsilon: f64,
    pub check_every: usize,
    pub max_rounds: usize,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            check_every: 10,
            max_rounds: 200_000,
        }
    }
}

impl DynamicsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(invalid(format!("epsilon = {}; must be > 0", self.epsilon)));
        }
        if self.check_every == 0 {
            return Err(invalid("check_every must be >= 1"));
        }
        if self.max_rounds == 0 {
            return Err(invalid("max_rounds must be >= 1"));
        }
        Ok(())
    }

    /// Oracle tolerance used at checkpoints.
    pub fn oracle_tolerance(&self) -> f64 {
        self.epsilon / 10.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Welfare {
    pub publishers: f64,
    pub users: f64,
}

impl Welfare {
    pub fn at(game: &PublishersGame, x: &Profile) -> Self {
        Self {
            publishers: game.publishers_welfare(x),
            users: game.users_welfare(x),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub converged: bool,
    pub rounds: usize,
    /// Measured gap at the final average (the last checkpoint's value).
    pub certified_epsilon: f64,
    pub oracle_tolerance: f64,
    /// True when the gap came from the global search and only bounds the
    /// true gap from below.
    pub gap_is_lower_bound: bool,
    pub final_average: Profile,
    pub welfare: Welfare,
    /// Gap of the last iterate, recorded as a diagnostic.
    pub last_iterate_gap: f64,
}

impl ConvergenceReport {
    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }
}

/// Rounds of play with their running average.
#[derive(Clone, Debug)]
pub struct Trajectory {
    log: Arc<RoundLog>,
    running_average: Profile,
    last_iterate: Profile,
}

impl Trajectory {
    pub fn profiles(&self) -> &[Profile] {
        self.log.profiles()
    }

    pub fn utilities(&self) -> &[Vec<f64>] {
        self.log.utilities()
    }

    pub fn running_average(&self) -> &Profile {
        &self.running_average
    }

    pub fn last_iterate(&self) -> &Profile {
        &self.last_iterate
    }

    pub fn rounds_completed(&self) -> usize {
        self.log.len()
    }

    /// CSV with columns `round, player, x_0 .. x_{k-1}, utility`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_rounds_csv(self.profiles(), self.utilities(), out)
    }
}

#[derive(Clone, Debug)]
pub struct DynamicsRun {
    pub trajectory: Trajectory,
    pub report: ConvergenceReport,
    pub ledger: RegretLedger,
}

/// Running coordinate sums of all played profiles.
struct Accumulator {
    n: usize,
    k: usize,
    sum: Vec<f64>,
    rounds: usize,
}

impl Accumulator {
    fn new(n: usize, k: usize) -> Self {
        Self {
            n,
            k,
            sum: vec![0.0; n * k],
            rounds: 0,
        }
    }

    fn add(&mut self, x: &Profile) {
        for (i, d) in x.docs().iter().enumerate() {
            for (j, c) in d.coords().iter().enumerate() {
                self.sum[i * self.k + j] += c;
            }
        }
        self.rounds += 1;
    }

    fn mean(&self) -> Profile {
        let t = self.rounds as f64;
        let flat: Vec<f64> = self.sum.iter().map(|v| v / t).collect();
        Profile::from_flat(&flat, self.n, self.k)
    }
}

/// Curvature `2 lambda / k` of the integrity penalty along any direction.
fn penalty_curvature(lambda: f64, k: usize) -> f64 {
    2.0 * lambda / k as f64
}

fn profile_of(learners: &[LearnerState]) -> Profile {
    Profile::new(learners.iter().map(|l| l.action()).collect()).expect("learners share a dimension")
}

fn gradients_checked(game: &PublishersGame, x: &Profile, round: usize) -> Result<Vec<Vec<f64>>> {
    let grads = game.utility_gradients(x)?;
    for (i, g) in grads.iter().enumerate() {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::AbortedRun {
                round,
                reason: format!("non-finite gradient {g:?} for player {i} at {:?}", x.doc(i).coords()),
            });
        }
    }
    Ok(grads)
}

/// Cheap necessary test for `gap <= epsilon`: one warm-started ascent per
/// player. A found improvement above `epsilon` already refutes convergence.
fn refuted_quickly(game: &PublishersGame, x: &Profile, epsilon: f64, tolerance: f64) -> bool {
    let utilities = game.utilities(x);
    (0..game.n()).any(|i| {
        let obj = OwnObjective::at_profile(game, x, i);
        let found = if game.demand().single_atom().is_some() {
            oracle::maximize(&obj, search_for(game), tolerance, &[], 0).map(|m| m.value)
        } else {
            Ok(oracle::local_ascent(&obj, x.doc(i).coords(), 0.1 * tolerance).value)
        };
        found.is_ok_and(|v| v - utilities[i] > epsilon)
    })
}

/// Runs the dynamics from the initial documents until the running average is
/// certified as an `epsilon`-NE or `max_rounds` is reached.
pub fn run_dynamics(
    game: &PublishersGame,
    learner: &LearnerSpec,
    config: &DynamicsConfig,
    seed: u64,
) -> Result<DynamicsRun> {
    config.validate()?;
    learner.validate()?;
    let tolerance = config.oracle_tolerance();
    let mut learners: Vec<LearnerState> = game
        .initial_docs()
        .iter()
        .zip(game.lambdas())
        .map(|(x0, l)| {
            LearnerState::init(*learner, x0).map(|s| s.with_curvature_cap(penalty_curvature(*l, game.k())))
        })
        .collect::<Result<_>>()?;
    let mut log = RoundLog::default();
    let mut acc = Accumulator::new(game.n(), game.k());
    let mut converged = false;
    let mut last_gap = f64::INFINITY;
    let mut average = game.initial_profile();

    for round in 1..=config.max_rounds {
        let x = profile_of(&learners);
        let grads = gradients_checked(game, &x, round)?;
        acc.add(&x);
        let u = game.utilities(&x);
        log.push(x, u);

        let due = round % config.check_every == 0 || round == config.max_rounds;
        if due {
            average = acc.mean();
            if !refuted_quickly(game, &average, config.epsilon, tolerance) {
                let report = gap_report(game, &average, tolerance, seed ^ round as u64)?;
                last_gap = report.gap;
                if report.gap <= config.epsilon {
                    converged = true;
                    break;
                }
            } else {
                last_gap = f64::INFINITY;
            }
        }
        for (l, g) in learners.iter_mut().zip(&grads) {
            l.step(g)?;
        }
    }

    let rounds = log.len();
    if !last_gap.is_finite() {
        // the final checkpoint was refuted cheaply; measure it for the report
        last_gap = gap_report(game, &average, tolerance, seed)?.gap;
    }
    let last_iterate = log.profiles().last().cloned().unwrap_or_else(|| game.initial_profile());
    let last_iterate_gap = gap_report(game, &last_iterate, tolerance, seed)?.gap;
    let report = ConvergenceReport {
        converged,
        rounds,
        certified_epsilon: last_gap,
        oracle_tolerance: tolerance,
        gap_is_lower_bound: !game.activation().is_concave(),
        welfare: Welfare::at(game, &average),
        final_average: average.clone(),
        last_iterate_gap,
    };
    let log = Arc::new(log);
    Ok(DynamicsRun {
        trajectory: Trajectory {
            log: Arc::clone(&log),
            running_average: average,
            last_iterate,
        },
        report,
        ledger: RegretLedger::new(log),
    })
}

/// Plays exactly `rounds` rounds with no certification.
pub fn run_fixed_rounds(
    game: &PublishersGame,
    learner: &LearnerSpec,
    rounds: usize,
) -> Result<(Trajectory, RegretLedger)> {
    learner.validate()?;
    if rounds == 0 {
        return Err(invalid("rounds must be >= 1"));
    }
    let mut learners: Vec<LearnerState> = game
        .initial_docs()
        .iter()
        .zip(game.lambdas())
        .map(|(x0, l)| {
            LearnerState::init(*learner, x0).map(|s| s.with_curvature_cap(penalty_curvature(*l, game.k())))
        })
        .collect::<Result<_>>()?;
    let mut log = RoundLog::default();
    let mut acc = Accumulator::new(game.n(), game.k());
    for round in 1..=rounds {
        let x = profile_of(&learners);
        let grads = gradients_checked(game, &x, round)?;
        acc.add(&x);
        let u = game.utilities(&x);
        log.push(x, u);
        for (l, g) in learners.iter_mut().zip(&grads) {
            l.step(g)?;
        }
    }
    let last_iterate = log.profiles().last().cloned().expect("rounds >= 1");
    let log = Arc::new(log);
    Ok((
        Trajectory {
            log: Arc::clone(&log),
            running_average: acc.mean(),
            last_iterate,
        },
        RegretLedger::new(log),
    ))
}

/// Regret certificate for the average profile after `horizon` rounds:
/// `sum_j max(Reg_j^T, 0) / T` (equal social-concavity weights `1/n`).
pub fn theorem_epsilon(
    game: &PublishersGame,
    ledger: &RegretLedger,
    horizon: usize,
    tolerance: f64,
) -> Result<f64> {
    let prefix = ledger.prefix(horizon)?;
    if horizon == 0 {
        return Err(invalid("horizon must be >= 1"));
    }
    let regrets: Vec<f64> = (0..game.n())
        .into_par_iter()
        .map(|i| hindsight_regret(game, &prefix, i, tolerance))
        .collect::<Result<_>>()?;
    Ok(epsilon_from_regrets(&regrets, horizon))
}

/// `sum_j max(Reg_j, 0) / T`.
pub fn epsilon_from_regrets(regrets: &[f64], horizon: usize) -> f64 {
    regrets.iter().map(|r| r.max(0.0)).sum::<f64>() / horizon as f64
}

/// `(1/T_max) sum_j [max(Reg_j^{T_j}, 0) + (1 + lambda_j)(T_max - T_j)]`.
pub fn heterogeneous_stop_bound(regrets: &[f64], stop_times: &[usize], lambdas: &[f64]) -> f64 {
    let t_max = stop_times.iter().copied().max().unwrap_or(1).max(1);
    regrets
        .iter()
        .zip(stop_times)
        .zip(lambdas)
        .map(|((r, t), l)| r.max(0.0) + (1.0 + l) * (t_max - t) as f64)
        .sum::<f64>()
        / t_max as f64
}

#[derive(Clone, Debug)]
pub struct HeterogeneousStops {
    /// Each player's average over her own learning phase.
    pub committed: Profile,
    pub certified_gap: f64,
    pub bound: f64,
    /// `Reg_j^{T_j}` per player.
    pub regrets: Vec<f64>,
    pub ledger: RegretLedger,
}

/// Player `i` learns for `stop_times[i]` rounds and then commits to the
/// average of her own actions until the last player stops.
pub fn run_heterogeneous_stops(
    game: &PublishersGame,
    learner: &LearnerSpec,
    stop_times: &[usize],
    tolerance: f64,
    seed: u64,
) -> Result<HeterogeneousStops> {
    learner.validate()?;
    if stop_times.len() != game.n() {
        return Err(invalid(format!(
            "{} stop times for {} players",
            stop_times.len(),
            game.n()
        )));
    }
    if stop_times.contains(&0) {
        return Err(invalid("every stop time must be >= 1"));
    }
    let (n, k) = (game.n(), game.k());
    let t_max = *stop_times.iter().max().expect("n >= 2");
    let mut learners: Vec<LearnerState> = game
        .initial_docs()
        .iter()
        .zip(game.lambdas())
        .map(|(x0, l)| {
            LearnerState::init(*learner, x0).map(|s| s.with_curvature_cap(penalty_curvature(*l, game.k())))
        })
        .collect::<Result<_>>()?;
    let mut own_sums = vec![vec![0.0; k]; n];
    let mut committed: Vec<Option<Point>> = vec![None; n];
    let mut log = RoundLog::default();

    for round in 1..=t_max {
        let docs: Vec<Point> = (0..n)
            .map(|i| committed[i].clone().unwrap_or_else(|| learners[i].action()))
            .collect();
        let x = Profile::new(docs)?;
        let grads = gradients_checked(game, &x, round)?;
        let u = game.utilities(&x);
        for i in 0..n {
            if committed[i].is_some() {
                continue;
            }
            for (s, c) in own_sums[i].iter_mut().zip(x.doc(i).coords()) {
                *s += c;
            }
            if round == stop_times[i] {
                let t = stop_times[i] as f64;
                committed[i] = Some(Point::clamped(own_sums[i].iter().map(|s| s / t).collect()));
            } else {
                learners[i].step(&grads[i])?;
            }
        }
        log.push(x, u);
    }

    let ledger = RegretLedger::from_log(log);
    let regrets: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| hindsight_regret(game, &ledger.prefix(stop_times[i])?, i, tolerance))
        .collect::<Result<_>>()?;
    let committed = Profile::new(committed.into_iter().map(|p| p.expect("all committed")).collect())?;
    let certified_gap = gap_report(game, &committed, tolerance, seed)?.gap;
    let bound = heterogeneous_stop_bound(&regrets, stop_times, game.lambdas());
    Ok(HeterogeneousStops {
        committed,
        certified_gap,
        bound,
        regrets,
        ledger,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Activation, DemandDistribution, SemiMetric};

    fn pt(v: &[f64]) -> Point {
        Point::new(v.to_vec()).unwrap()
    }

    fn small_game(lambda: f64) -> PublishersGame {
        PublishersGame::new(
            SemiMetric::ScaledSquaredEuclidean,
            Activation::linear(2.0).unwrap(),
            DemandDistribution::uniform(vec![pt(&[0.1, 0.8]), pt(&[0.7, 0.3])]).unwrap(),
            vec![pt(&[0.9, 0.9]), pt(&[0.2, 0.1]), pt(&[0.5, 0.6])],
            vec![lambda; 3],
        )
        .unwrap()
    }

    #[test]
    fn heavy_penalty_best_response_stays_home() {
        let game = small_game(1e6);
        let x = game.initial_profile();
        for i in 0..3 {
            let br = best_response(&game, &x, i, 1e-9).unwrap();
            for (a, b) in br.action.coords().iter().zip(game.initial_docs()[i].coords()) {
                assert!((a - b).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn one_dimensional_best_response_matches_grid() {
        let game = PublishersGame::new(
            SemiMetric::ScaledSquaredEuclidean,
            Activation::log(2.5).unwrap(),
            DemandDistribution::uniform(vec![pt(&[0.15]), pt(&[0.8])]).unwrap(),
            vec![pt(&[0.5]), pt(&[0.95])],
            vec![0.3, 0.3],
        )
        .unwrap();
        let x = game.initial_profile();
        let br = best_response(&game, &x, 0, 1e-10).unwrap();
        let grid_best = (0..=100_000)
            .map(|j| game.utility(&x.with_doc(0, pt(&[j as f64 / 100_000.0])), 0))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((br.value - grid_best).abs() < 1e-6, "{} vs {}", br.value, grid_best);
        assert!(br.upper_bound.unwrap() >= grid_best - 1e-12);
    }

    #[test]
    fn best_response_refuses_softmax() {
        let game = small_game(0.5).with_activation(Activation::exponential(3.0).unwrap());
        let x = game.initial_profile();
        assert!(matches!(best_response(&game, &x, 0, 1e-6), Err(Error::Unsupported(_))));
        assert!(best_response_global(&game, &x, 0, 1e-6).is_ok());
        assert!(epsilon_gap(&game, &x, 1e-6).is_err());
        assert!(epsilon_gap_report(&game, &x, 1e-6).is_ok());
    }

    #[test]
    fn gap_detects_a_known_deviation() {
        // one-hot need at 0 in 1-d; player 0 sits at 1 although moving to 0
        // is free of penalty because x0 = 0
        let game = PublishersGame::new(
            SemiMetric::ScaledSquaredEuclidean,
            Activation::linear(2.0).unwrap(),
            DemandDistribution::one_hot(pt(&[0.0])),
            vec![pt(&[0.0]), pt(&[0.0])],
            vec![0.5, 0.5],
        )
        .unwrap();
        let x = Profile::new(vec![pt(&[1.0]), pt(&[0.0])]).unwrap();
        let stay = game.utility(&x, 0);
        let home = game.utility(&x.with_doc(0, pt(&[0.0])), 0);
        assert!(home - stay > 0.1);
        let gap = epsilon_gap(&game, &x, 1e-8).unwrap();
        assert!(gap >= home - stay - 1e-8);
        assert!(epsilon_gap(&game, &game.initial_profile(), 1e-8).unwrap() >= 0.0);
    }

    #[test]
    fn dynamics_under_heavy_penalty_stay_home() {
        let game = small_game(1e6);
        let run = run_dynamics(&game, &LearnerSpec::default(), &DynamicsConfig::default(), 1).unwrap();
        assert!(run.report.converged);
        for (d, x0) in run.report.final_average.docs().iter().zip(game.initial_docs()) {
            for (a, b) in d.coords().iter().zip(x0.coords()) {
                assert!((a - b).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn dynamics_are_deterministic_and_consistent() {
        let game = small_game(0.5);
        let cfg = DynamicsConfig::default();
        let a = run_dynamics(&game, &LearnerSpec::default(), &cfg, 9).unwrap();
        let b = run_dynamics(&game, &LearnerSpec::default(), &cfg, 9).unwrap();
        assert_eq!(a.report, b.report);
        assert!(a.report.converged);
        assert!(a.report.certified_epsilon <= cfg.epsilon);
        let mean = Profile::mean(a.trajectory.profiles()).unwrap();
        for (p, q) in mean.docs().iter().zip(a.trajectory.running_average().docs()) {
            for (u, v) in p.coords().iter().zip(q.coords()) {
                assert!((u - v).abs() < 1e-12);
            }
        }
        assert_eq!(a.ledger.rounds(), a.report.rounds);
    }

    #[test]
    fn exhausting_rounds_is_not_an_error() {
        let game = small_game(0.5);
        let cfg = DynamicsConfig {
            epsilon: 1e-14,
            check_every: 5,
            max_rounds: 20,
        };
        let run = run_dynamics(&game, &LearnerSpec::default(), &cfg, 0).unwrap();
        assert!(!run.report.converged);
        assert_eq!(run.report.rounds, 20);
        assert!(run.report.certified_epsilon > 0.0);
    }

    #[test]
    fn invalid_configs() {
        let game = small_game(0.5);
        let spec = LearnerSpec::default();
        for cfg in [
            DynamicsConfig { epsilon: 0.0, ..Default::default() },
            DynamicsConfig { check_every: 0, ..Default::default() },
            DynamicsConfig { max_rounds: 0, ..Default::default() },
        ] {
            assert!(run_dynamics(&game, &spec, &cfg, 0).is_err());
        }
    }

    #[test]
    fn certificate_arithmetic() {
        assert_eq!(epsilon_from_regrets(&[0.0, 0.0], 50), 0.0);
        assert!((epsilon_from_regrets(&[3.0, 1.0], 100) - 0.04).abs() < 1e-15);
        assert!((epsilon_from_regrets(&[3.0, -1.0], 100) - 0.03).abs() < 1e-15);
        let b = heterogeneous_stop_bound(&[2.0, 1.0], &[100, 80], &[0.5, 0.5]);
        assert!((b - 0.33).abs() < 1e-15);
        let same = heterogeneous_stop_bound(&[2.0, 1.0], &[100, 100], &[0.5, 0.5]);
        assert_eq!(same, epsilon_from_regrets(&[2.0, 1.0], 100));
    }

    #[test]
    fn heterogeneous_stops_commit_to_averages() {
        let game = small_game(0.5);
        let out = run_heterogeneous_stops(&game, &LearnerSpec::default(), &[30, 50, 40], 1e-7, 0).unwrap();
        assert_eq!(out.ledger.rounds(), 50);
        let first: Vec<Profile> = out.ledger.profiles()[..30].to_vec();
        let avg = Profile::mean(&first).unwrap();
        for (a, b) in avg.doc(0).coords().iter().zip(out.committed.doc(0).coords()) {
            assert!((a - b).abs() < 1e-12);
        }
        // after stopping, player 0 keeps her committed document
        assert_eq!(out.ledger.profiles()[45].doc(0), out.committed.doc(0));
        assert!(out.certified_gap <= out.bound + 2e-7);
        assert!(run_heterogeneous_stops(&game, &LearnerSpec::default(), &[0, 5, 5], 1e-7, 0).is_err());
        assert!(run_heterogeneous_stops(&game, &LearnerSpec::default(), &[5, 5], 1e-7, 0).is_err());
    }

    #[test]
    fn report_round_trips_as_json() {
        let game = small_game(0.5);
        let run = run_dynamics(&game, &LearnerSpec::default(), &DynamicsConfig::default(), 3).unwrap();
        let mut buf = Vec::new();
        run.report.write_json(&mut buf).unwrap();
        let back: ConvergenceReport = serde_json::from_slice(&buf).unwrap();
        assert_eq!(back, run.report);
        let mut csv = Vec::new();
        run.trajectory.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 1 + 3 * run.report.rounds);
    }
}
