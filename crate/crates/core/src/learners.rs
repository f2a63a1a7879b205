//! No-regret learners driven by gradient feedback, and the ledger of play
//! needed to evaluate external regret after the fact.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{Point, Profile, PublishersGame};
use crate::oracle::{self, OwnObjective, Search};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerKind {
    ProjectedGradientAscent,
    OptimisticGradientAscent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepSchedule {
    /// `eta_t = eta_0`.
    Constant,
    /// `eta_t = eta_0 / sqrt(t + 1)`.
    InverseSqrt,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    pub base_rate: f64,
    pub schedule: StepSchedule,
}

impl Default for LearnerSpec {
    fn default() -> Self {
        Self {
            kind: LearnerKind::ProjectedGradientAscent,
            base_rate: 0.5,
            schedule: StepSchedule::InverseSqrt,
        }
    }
}

impl LearnerSpec {
    pub fn validate(&self) -> Result<()> {
        if self.base_rate.is_finite() && self.base_rate > 0.0 {
            Ok(())
        } else {
            Err(invalid(format!("base_rate = {}; must be > 0", self.base_rate)))
        }
    }

    pub fn rate_at(&self, round: u64) -> f64 {
        match self.schedule {
            StepSchedule::Constant => self.base_rate,
            StepSchedule::InverseSqrt => self.base_rate / ((round + 1) as f64).sqrt(),
        }
    }
}

/// One player's learner between rounds.
#[derive(Clone, Debug, PartialEq)]
pub struct LearnerState {
    spec: LearnerSpec,
    action: Vec<f64>,
    gradient_sum: Vec<f64>,
    previous_gradient: Option<Vec<f64>>,
    round: u64,
    rate_cap: f64,
}

impl LearnerState {
    pub fn init(spec: LearnerSpec, start: &Point) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec,
            action: start.coords().to_vec(),
            gradient_sum: vec![0.0; start.dim()],
            previous_gradient: None,
            round: 0,
            rate_cap: f64::INFINITY,
        })
    }

    /// Caps the step so that a quadratic term of the given curvature is never
    /// overshot: `1 / curvature`, halved for the optimistic variant whose
    /// update counts the newest gradient twice.
    pub fn with_curvature_cap(mut self, curvature: f64) -> Self {
        if curvature > 0.0 {
            let factor = match self.spec.kind {
                LearnerKind::ProjectedGradientAscent => 1.0,
                LearnerKind::OptimisticGradientAscent => 0.5,
            };
            self.rate_cap = factor / curvature;
        }
        self
    }

    /// Step size used at the next update.
    pub fn current_rate(&self) -> f64 {
        self.spec.rate_at(self.round).min(self.rate_cap)
    }

    pub fn spec(&self) -> &LearnerSpec {
        &self.spec
    }

    pub fn action(&self) -> Point {
        Point::clamped(self.action.clone())
    }

    pub fn action_coords(&self) -> &[f64] {
        &self.action
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn gradient_sum(&self) -> &[f64] {
        &self.gradient_sum
    }

    /// Consumes the gradient observed at the current joint profile and moves
    /// to the next action.
    pub fn step(&mut self, gradient: &[f64]) -> Result<()> {
        if gradient.len() != self.action.len() {
            return Err(invalid(format!(
                "gradient has dimension {}, learner expects {}",
                gradient.len(),
                self.action.len()
            )));
        }
        let eta = self.current_rate();
        let optimistic = self.spec.kind == LearnerKind::OptimisticGradientAscent;
        for j in 0..self.action.len() {
            let mut delta = gradient[j];
            if optimistic {
                if let Some(prev) = &self.previous_gradient {
                    delta += gradient[j] - prev[j];
                }
            }
            self.action[j] = (self.action[j] + eta * delta).clamp(0.0, 1.0);
            self.gradient_sum[j] += gradient[j];
        }
        if optimistic {
            self.previous_gradient = Some(gradient.to_vec());
        }
        self.round += 1;
        Ok(())
    }
}

/// Profiles played and utilities realized, one entry per round.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RoundLog {
    pub(crate) profiles: Vec<Profile>,
    pub(crate) utilities: Vec<Vec<f64>>,
}

impl RoundLog {
    pub fn push(&mut self, profile: Profile, utilities: Vec<f64>) {
        self.profiles.push(profile);
        self.utilities.push(utilities);
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn profiles(&self) -> &[Profile] {
        &self.profiles
    }

    pub fn utilities(&self) -> &[Vec<f64>] {
        &self.utilities
    }
}

/// Replayable record of a run, sufficient to compute hindsight regret for
/// every player over any prefix of the rounds.
#[derive(Clone, Debug)]
pub struct RegretLedger {
    log: Arc<RoundLog>,
    rounds: usize,
}

impl RegretLedger {
    pub fn new(log: Arc<RoundLog>) -> Self {
        let rounds = log.len();
        Self { log, rounds }
    }

    pub fn from_log(log: RoundLog) -> Self {
        Self::new(Arc::new(log))
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn is_empty(&self) -> bool {
        self.rounds == 0
    }

    /// The first `rounds` rounds of this ledger.
    pub fn prefix(&self, rounds: usize) -> Result<RegretLedger> {
        if rounds > self.rounds {
            return Err(invalid(format!(
                "ledger holds {} rounds, asked for {rounds}",
                self.rounds
            )));
        }
        Ok(Self {
            log: Arc::clone(&self.log),
            rounds,
        })
    }

    pub fn profiles(&self) -> &[Profile] {
        &self.log.profiles[..self.rounds]
    }

    pub fn utilities(&self) -> &[Vec<f64>] {
        &self.log.utilities[..self.rounds]
    }

    /// `sum_t u_i(x^(t))` as recorded.
    pub fn realized_total(&self, i: usize) -> f64 {
        self.utilities().iter().map(|u| u[i]).sum()
    }

    /// CSV with columns `round, player, x_0 .. x_{k-1}, utility`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_rounds_csv(self.profiles(), self.utilities(), out)
    }
}

pub(crate) fn write_rounds_csv<W: Write>(
    profiles: &[Profile],
    utilities: &[Vec<f64>],
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let k = profiles.first().map_or(0, |p| p.k());
    let mut header = vec!["round".to_string(), "player".to_string()];
    header.extend((0..k).map(|j| format!("x{j}")));
    header.push("utility".into());
    w.write_record(&header)?;
    for (t, (x, u)) in profiles.iter().zip(utilities).enumerate() {
        for (i, doc) in x.docs().iter().enumerate() {
            let mut row = vec![(t + 1).to_string(), i.to_string()];
            row.extend(doc.coords().iter().map(|c| c.to_string()));
            row.push(u[i].to_string());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Detailed hindsight evaluation for one player.
#[derive(Clone, Debug)]
pub struct HindsightRegret {
    pub regret: f64,
    /// Best fixed document found.
    pub comparator: Point,
    /// `sum_t u_i(comparator, x_-i^(t))`.
    pub comparator_total: f64,
    pub realized_total: f64,
    /// True when the inner maximization is only a lower bound (non-concave
    /// activation), making the regret a lower bound as well.
    pub lower_bound_only: bool,
}

/// External regret of player `i` against the best fixed document in
/// hindsight. Concave activations are solved to within `T * tolerance`;
/// otherwise the global search gives a certified lower bound.
pub fn hindsight_regret_detailed(
    game: &PublishersGame,
    ledger: &RegretLedger,
    i: usize,
    tolerance: f64,
) -> Result<HindsightRegret> {
    if ledger.is_empty() {
        return Err(invalid("hindsight regret needs a non-empty ledger"));
    }
    if i >= game.n() {
        return Err(invalid(format!("player {i} out of range for n = {}", game.n())));
    }
    let search = if game.activation().is_concave() {
        Search::Concave
    } else {
        Search::Global
    };
    let obj = OwnObjective::over_profiles(game, ledger.profiles(), i);
    let played: Vec<Vec<f64>> = vec![ledger.profiles()[ledger.rounds() - 1].doc(i).coords().to_vec()];
    let best = oracle::maximize(&obj, search, tolerance, &played, 0x5eed_0000 + i as u64)?;
    let t = ledger.rounds() as f64;
    let comparator_total = best.value * t;
    let realized_total = ledger.realized_total(i);
    Ok(HindsightRegret {
        regret: comparator_total - realized_total,
        comparator: oracle::to_point(best.point),
        comparator_total,
        realized_total,
        lower_bound_only: search == Search::Global,
    })
}

pub fn hindsight_regret(
    game: &PublishersGame,
    ledger: &RegretLedger,
    i: usize,
    tolerance: f64,
) -> Result<f64> {
    hindsight_regret_detailed(game, ledger, i, tolerance).map(|r| r.regret)
}

/// `(1 / (T n)) sum_j Reg_j^T` over the first `horizon` rounds.
pub fn average_regret_at(
    game: &PublishersGame,
    ledger: &RegretLedger,
    horizon: usize,
    tolerance: f64,
) -> Result<f64> {
    if horizon == 0 || ledger.rounds() < horizon {
        return Err(invalid(format!(
            "ledger holds {} rounds, need {horizon}",
            ledger.rounds()
        )));
    }
    let prefix = ledger.prefix(horizon)?;
    let mut total = 0.0;
    for i in 0..game.n() {
        total += hindsight_regret(game, &prefix, i, tolerance)?;
    }
    Ok(total / (horizon as f64 * game.n() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Activation, DemandDistribution, SemiMetric};

    fn p(v: &[f64]) -> Point {
        Point::new(v.to_vec()).unwrap()
    }

    fn spec(kind: LearnerKind, schedule: StepSchedule) -> LearnerSpec {
        LearnerSpec {
            kind,
            base_rate: 0.5,
            schedule,
        }
    }

    #[test]
    fn init_keeps_start() {
        let start = p(&[0.1, 0.7]);
        let s = LearnerState::init(LearnerSpec::default(), &start).unwrap();
        assert_eq!(s.action(), start);
        assert_eq!(s.round(), 0);
        assert!(LearnerState::init(
            LearnerSpec {
                base_rate: 0.0,
                ..LearnerSpec::default()
            },
            &start
        )
        .is_err());
    }

    #[test]
    fn step_examples() {
        let mut s =
            LearnerState::init(spec(LearnerKind::ProjectedGradientAscent, StepSchedule::Constant), &p(&[0.5]))
                .unwrap();
        s.step(&[0.2]).unwrap();
        assert!((s.action_coords()[0] - 0.6).abs() < 1e-15);

        let mut fixed = LearnerState::init(LearnerSpec::default(), &p(&[0.3, 0.4])).unwrap();
        fixed.step(&[0.0, 0.0]).unwrap();
        assert_eq!(fixed.action_coords(), &[0.3, 0.4]);

        let mut corner = LearnerState::init(LearnerSpec::default(), &p(&[1.0, 1.0])).unwrap();
        corner.step(&[3.0, 0.1]).unwrap();
        assert_eq!(corner.action_coords(), &[1.0, 1.0]);

        assert!(corner.step(&[1.0]).is_err());
    }

    #[test]
    fn inverse_sqrt_schedule() {
        let sp = spec(LearnerKind::ProjectedGradientAscent, StepSchedule::InverseSqrt);
        assert_eq!(sp.rate_at(0), 0.5);
        assert!((sp.rate_at(3) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn optimistic_adds_prediction_term() {
        let mut s =
            LearnerState::init(spec(LearnerKind::OptimisticGradientAscent, StepSchedule::Constant), &p(&[0.5]))
                .unwrap();
        s.step(&[0.1]).unwrap();
        assert!((s.action_coords()[0] - 0.55).abs() < 1e-15);
        // 0.55 + 0.5 * (0.3 + (0.3 - 0.1))
        s.step(&[0.3]).unwrap();
        assert!((s.action_coords()[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn curvature_cap_limits_the_step() {
        let plain = LearnerState::init(spec(LearnerKind::ProjectedGradientAscent, StepSchedule::Constant), &p(&[0.5]))
            .unwrap()
            .with_curvature_cap(4.0);
        assert_eq!(plain.current_rate(), 0.25);
        let opt = LearnerState::init(spec(LearnerKind::OptimisticGradientAscent, StepSchedule::Constant), &p(&[0.5]))
            .unwrap()
            .with_curvature_cap(4.0);
        assert_eq!(opt.current_rate(), 0.125);
        let loose = LearnerState::init(spec(LearnerKind::ProjectedGradientAscent, StepSchedule::Constant), &p(&[0.5]))
            .unwrap()
            .with_curvature_cap(0.1);
        assert_eq!(loose.current_rate(), 0.5);
    }

    fn toy_game() -> PublishersGame {
        PublishersGame::new(
            SemiMetric::ScaledSquaredEuclidean,
            Activation::linear(2.0).unwrap(),
            DemandDistribution::one_hot(p(&[0.0])),
            vec![p(&[1.0]), p(&[1.0])],
            vec![0.5, 0.5],
        )
        .unwrap()
    }

    #[test]
    fn regret_of_empty_ledger_is_an_error() {
        let ledger = RegretLedger::from_log(RoundLog::default());
        assert!(hindsight_regret(&toy_game(), &ledger, 0, 1e-8).is_err());
    }

    #[test]
    fn two_round_regret_matches_dense_grid() {
        let game = toy_game();
        let rounds = [
            Profile::new(vec![p(&[0.9]), p(&[0.2])]).unwrap(),
            Profile::new(vec![p(&[0.4]), p(&[0.7])]).unwrap(),
        ];
        let mut log = RoundLog::default();
        for x in &rounds {
            log.push(x.clone(), game.utilities(x));
        }
        let ledger = RegretLedger::from_log(log);
        let reg = hindsight_regret(&game, &ledger, 0, 1e-10).unwrap();

        let grid = 10_000;
        let best = (0..=grid)
            .map(|m| {
                let y = p(&[m as f64 / grid as f64]);
                rounds.iter().map(|x| game.utility(&x.with_doc(0, y.clone()), 0)).sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let realized: f64 = rounds.iter().map(|x| game.utility(x, 0)).sum();
        assert!(reg >= best - realized - 1e-9, "{reg} vs grid {}", best - realized);
        assert!(reg <= best - realized + 1e-6);
    }

    #[test]
    fn regret_nonnegative_when_playing_best_response() {
        let game = toy_game();
        let x = game.initial_profile();
        let br = oracle::maximize(&OwnObjective::at_profile(&game, &x, 0), Search::Concave, 1e-10, &[], 0).unwrap();
        let x = x.with_doc(0, Point::clamped(br.point));
        let mut log = RoundLog::default();
        log.push(x.clone(), game.utilities(&x));
        let reg = hindsight_regret(&game, &RegretLedger::from_log(log), 0, 1e-9).unwrap();
        assert!(reg.abs() <= 1e-9, "{reg}");
    }

    #[test]
    fn average_regret_needs_enough_rounds() {
        let game = toy_game();
        let x = game.initial_profile();
        let mut log = RoundLog::default();
        log.push(x.clone(), game.utilities(&x));
        let ledger = RegretLedger::from_log(log);
        assert!(average_regret_at(&game, &ledger, 2, 1e-8).is_err());
        assert!(average_regret_at(&game, &ledger, 1, 1e-8).is_ok());
    }
}
