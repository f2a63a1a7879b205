//! Executable checks of the concavity characterization, the counterexample
//! game for activations that are convex somewhere, and the scalar equation of
//! the symmetric one-hot equilibrium.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{Activation, DemandDistribution, Point, Profile, PublishersGame, SemiMetric};

/// Points of the `g''` grid.
pub const CURVATURE_GRID: usize = 10_000;
/// Slack allowed on `g'' <= 0`.
pub const CURVATURE_TOLERANCE: f64 = 1e-12;
/// Slack of the midpoint inequalities.
pub const MIDPOINT_TOLERANCE: f64 = 1e-9;
/// Integrity parameter used by [`build_counterexample`].
pub const COUNTEREXAMPLE_LAMBDA: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    OwnConcavity,
    OpponentConvexity,
}

/// A segment `[p, q]` on which a midpoint inequality fails. For own
/// concavity the segment is player `player`'s document with the rest of
/// `profile` fixed; for opponent convexity it is the opponents' documents
/// (flattened, `player` excluded) with `profile`'s `player` document fixed
/// and `atom` as the information need.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub kind: ViolationKind,
    pub profile: Profile,
    pub player: usize,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub atom: Option<Point>,
    /// Amount by which the inequality fails.
    pub excess: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcavityVerdict {
    pub activation_concave: bool,
    pub samples: usize,
    pub own_concavity_violations: usize,
    pub opponent_convexity_violations: usize,
    pub witness: Option<Witness>,
}

impl ConcavityVerdict {
    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }
}

/// True when `g'' <= 1e-12` at every point of a uniform grid on `[0, 1]`.
pub fn activation_is_concave_on_grid(act: &Activation) -> bool {
    (0..CURVATURE_GRID).all(|j| {
        let t = j as f64 / (CURVATURE_GRID - 1) as f64;
        !(act.d2g(t) > CURVATURE_TOLERANCE)
    })
}

fn random_coords(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gen::<f64>()).collect()
}

/// Randomized audit of the three equivalent conditions: `g` concave, every
/// `u_i` concave in `x_i`, every `r_i` convex in `x_-i`.
///
/// Half of the own-concavity samples hold the opponents at their initial
/// documents, the other half at uniform points. Opponent convexity is tested
/// at every demand atom as a one-hot information need.
pub fn audit_concavity(game: &PublishersGame, samples: usize, seed: u64) -> ConcavityVerdict {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, k) = (game.n(), game.k());
    let mut own = 0;
    let mut opp = 0;
    let mut witness: Option<Witness> = None;

    for sample in 0..samples {
        let i = rng.gen_range(0..n);
        let base = if sample % 2 == 0 {
            game.initial_profile()
        } else {
            Profile::new((0..n).map(|_| Point::clamped(random_coords(&mut rng, k))).collect())
                .expect("uniform profile")
        };
        let p = random_coords(&mut rng, k);
        let q = random_coords(&mut rng, k);
        let mid: Vec<f64> = p.iter().zip(&q).map(|(a, b)| 0.5 * (a + b)).collect();
        let at = |y: &[f64]| game.utility(&base.with_doc(i, Point::clamped(y.to_vec())), i);
        let excess = 0.5 * (at(&p) + at(&q)) - at(&mid);
        if excess > MIDPOINT_TOLERANCE {
            own += 1;
            witness.get_or_insert(Witness {
                kind: ViolationKind::OwnConcavity,
                profile: base.clone(),
                player: i,
                p: p.clone(),
                q: q.clone(),
                atom: None,
                excess,
            });
        }

        let xi = Point::clamped(random_coords(&mut rng, k));
        let p = random_coords(&mut rng, (n - 1) * k);
        let q = random_coords(&mut rng, (n - 1) * k);
        let mid: Vec<f64> = p.iter().zip(&q).map(|(a, b)| 0.5 * (a + b)).collect();
        let assemble = |others: &[f64]| -> Profile {
            let mut docs = Vec::with_capacity(n);
            let mut chunks = others.chunks(k);
            for j in 0..n {
                if j == i {
                    docs.push(xi.clone());
                } else {
                    docs.push(Point::clamped(chunks.next().expect("n-1 chunks").to_vec()));
                }
            }
            Profile::new(docs).expect("same dimension")
        };
        let (xp, xq, xm) = (assemble(&p), assemble(&q), assemble(&mid));
        for atom in game.demand().atoms() {
            let r = |x: &Profile| game.rank(x, atom)[i];
            let excess = r(&xm) - 0.5 * (r(&xp) + r(&xq));
            if excess > MIDPOINT_TOLERANCE {
                opp += 1;
                witness.get_or_insert(Witness {
                    kind: ViolationKind::OpponentConvexity,
                    profile: xm.clone(),
                    player: i,
                    p: p.clone(),
                    q: q.clone(),
                    atom: Some(atom.clone()),
                    excess,
                });
            }
        }
    }

    ConcavityVerdict {
        activation_concave: activation_is_concave_on_grid(game.activation()),
        samples,
        own_concavity_violations: own,
        opponent_convexity_violations: opp,
        witness,
    }
}

/// Interior grid point maximizing `g''`.
pub fn curvature_argmax(act: &Activation) -> f64 {
    let mut best = (f64::NEG_INFINITY, 0.5);
    for j in 1..CURVATURE_GRID {
        let t = j as f64 / CURVATURE_GRID as f64;
        let v = act.d2g(t);
        if v > best.0 {
            best = (v, t);
        }
    }
    best.1
}

/// Smallest `n >= 2` with `n > 2 g'(a)^2 / (g''(a) g(0)) + 1`.
pub fn counterexample_players(act: &Activation, a_hat: f64) -> Result<usize> {
    check_a_hat(act, a_hat)?;
    let threshold = 2.0 * act.dg(a_hat).powi(2) / (act.d2g(a_hat) * act.g(0.0)) + 1.0;
    let n = threshold.floor() + 1.0;
    if !n.is_finite() || n > 1e6 {
        return Err(invalid(format!(
            "counterexample would need {n} players at a_hat = {a_hat}"
        )));
    }
    Ok((n as usize).max(2))
}

fn check_a_hat(act: &Activation, a_hat: f64) -> Result<()> {
    if !(a_hat > 0.0 && a_hat < 1.0) {
        return Err(invalid(format!("a_hat = {a_hat}; must lie in (0, 1)")));
    }
    if !(act.d2g(a_hat) > 0.0) {
        return Err(invalid(format!(
            "{}({}) has g''({a_hat}) = {} <= 0; no counterexample there",
            act.family(),
            act.param(),
            act.d2g(a_hat)
        )));
    }
    Ok(())
}

/// One-dimensional game with the information need at 0 and every initial
/// document at 1, with enough players that player 0's utility is strictly
/// convex at `a_hat` when the others stay at 1. `a_hat` defaults to
/// [`curvature_argmax`].
pub fn build_counterexample(act: &Activation, a_hat: Option<f64>) -> Result<PublishersGame> {
    let a_hat = a_hat.unwrap_or_else(|| curvature_argmax(act));
    let n = counterexample_players(act, a_hat)?;
    let one = Point::new(vec![1.0])?;
    PublishersGame::new(
        SemiMetric::Absolute1d,
        *act,
        DemandDistribution::one_hot(Point::new(vec![0.0])?),
        vec![one; n],
        vec![COUNTEREXAMPLE_LAMBDA; n],
    )
}

/// `f''(a)` for `f(x) = g(x) / (C + g(x)) - lambda (1 - x)` with
/// `C = (n - 1) g(0)`.
pub fn counterexample_second_derivative(act: &Activation, n: usize, a_hat: f64) -> f64 {
    let c = (n as f64 - 1.0) * act.g(0.0);
    let (g, dg, d2g) = (act.g(a_hat), act.dg(a_hat), act.d2g(a_hat));
    c / (c + g).powi(3) * (d2g * (c + g) - 2.0 * dg * dg)
}

/// Symmetric one-hot instance: `n` publishers share an initial document at
/// distance `c1` from the single information need, all with integrity `lambda`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetricInstance {
    pub n: usize,
    pub c1: f64,
    pub lambda: f64,
    pub activation: Activation,
}

impl SymmetricInstance {
    pub fn new(n: usize, c1: f64, lambda: f64, activation: Activation) -> Result<Self> {
        let inst = Self {
            n,
            c1,
            lambda,
            activation,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(invalid(format!("n = {}; need at least 2", self.n)));
        }
        if !(self.c1 > 0.0 && self.c1 <= 1.0) {
            return Err(invalid(format!("c1 = {}; must lie in (0, 1]", self.c1)));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(invalid(format!("lambda = {}; must be > 0", self.lambda)));
        }
        Ok(())
    }

    /// Concrete game in dimension `k`: the information need at the origin and
    /// every initial document at `sqrt(c1)` in each coordinate.
    pub fn game(&self, k: usize) -> Result<PublishersGame> {
        self.validate()?;
        if k == 0 {
            return Err(invalid("k must be >= 1"));
        }
        let x0 = Point::splat(k, self.c1.sqrt())?;
        PublishersGame::new(
            SemiMetric::ScaledSquaredEuclidean,
            self.activation,
            DemandDistribution::one_hot(Point::splat(k, 0.0)?),
            vec![x0; self.n],
            vec![self.lambda; self.n],
        )
    }

    /// Profile where everyone plays `x0 + alpha (x* - x0)`.
    pub fn profile_at(&self, k: usize, alpha: f64) -> Result<Profile> {
        let doc = Point::splat(k, (1.0 - alpha) * self.c1.sqrt())?;
        Profile::new(vec![doc; self.n])
    }
}

/// The symmetric first-order condition along the segment,
/// `((n-1)/n^2) (g'/g)((1-alpha)^2 c1) (1-alpha) + lambda alpha`.
///
/// It equals `-f'(alpha) / (2 c1)`, where `f` is one publisher's utility along
/// the segment with everyone else at the same `alpha`.
pub fn psi_eval(inst: &SymmetricInstance, alpha: f64) -> Result<f64> {
    inst.validate()?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(invalid(format!("alpha = {alpha} outside [0, 1]")));
    }
    let t = (1.0 - alpha).powi(2) * inst.c1;
    let v = inst.activation.eval(t)?;
    let n = inst.n as f64;
    Ok((n - 1.0) / (n * n) * (v.dg / v.g) * (1.0 - alpha) + inst.lambda * alpha)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetricEquilibrium {
    pub alpha: f64,
    pub users_welfare: f64,
    pub psi: f64,
}

/// Root of [`psi_eval`] by bisection, with users' welfare
/// `1 - (1 - alpha)^2 c1`.
pub fn symmetric_equilibrium(inst: &SymmetricInstance, tolerance: f64) -> Result<SymmetricEquilibrium> {
    symmetric_equilibrium_in(inst, tolerance, 0.0, 1.0)
}

/// Bisection on a caller-supplied bracket `[lo, hi]` with
/// `psi(lo) <= 0 <= psi(hi)`.
pub fn symmetric_equilibrium_in(
    inst: &SymmetricInstance,
    tolerance: f64,
    mut lo: f64,
    mut hi: f64,
) -> Result<SymmetricEquilibrium> {
    if !inst.activation.is_concave() {
        return Err(Error::Unsupported(format!(
            "{} activation is not concave; the scalar equation may have several roots",
            inst.activation.family()
        )));
    }
    if !(tolerance > 0.0) {
        return Err(invalid(format!("tolerance = {tolerance}; must be > 0")));
    }
    if !(0.0 <= lo && lo < hi && hi <= 1.0) {
        return Err(invalid(format!("bracket [{lo}, {hi}] not inside [0, 1]")));
    }
    let (plo, phi) = (psi_eval(inst, lo)?, psi_eval(inst, hi)?);
    if plo > 0.0 || phi < 0.0 {
        return Err(invalid(format!(
            "bracket [{lo}, {hi}] does not enclose a sign change ({plo}, {phi})"
        )));
    }
    // run until the bracket collapses; tolerance only gates the residual
    let mut mid = 0.5 * (lo + hi);
    let mut psi = psi_eval(inst, mid)?;
    for _ in 0..200 {
        if psi == 0.0 || hi - lo <= f64::EPSILON * 2.0 {
            break;
        }
        if psi < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        mid = 0.5 * (lo + hi);
        psi = psi_eval(inst, mid)?;
    }
    if psi.abs() > tolerance {
        return Err(invalid(format!(
            "bisection ended at alpha = {mid} with residual {psi} > {tolerance}"
        )));
    }
    Ok(SymmetricEquilibrium {
        alpha: mid,
        users_welfare: 1.0 - (1.0 - mid).powi(2) * inst.c1,
        psi,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub values: Vec<f64>,
    pub alpha: Vec<f64>,
    pub users_welfare: Vec<f64>,
}

impl Series {
    pub fn strictly_decreasing(&self) -> bool {
        self.users_welfare.windows(2).all(|w| w[1] < w[0])
    }

    pub fn spread(&self) -> f64 {
        let max = self.users_welfare.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = self.users_welfare.iter().copied().fold(f64::INFINITY, f64::min);
        max - min
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub lambda: Series,
    pub n: Series,
    /// Welfare evaluated on the concrete game of each dimension at the
    /// solved profile.
    pub k: Series,
    pub decreasing_in_lambda: bool,
    pub decreasing_in_n: bool,
    pub constant_in_k: bool,
}

impl MonotonicityReport {
    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }
}

/// Solves the symmetric equation along a grid in one parameter at a time,
/// keeping the rest of `base` fixed.
pub fn symmetric_welfare_monotonicity(
    base: &SymmetricInstance,
    lambdas: &[f64],
    ns: &[usize],
    ks: &[usize],
    tolerance: f64,
) -> Result<MonotonicityReport> {
    let solve = |inst: SymmetricInstance| symmetric_equilibrium(&inst, tolerance);
    let mut lambda = Series {
        values: lambdas.to_vec(),
        alpha: vec![],
        users_welfare: vec![],
    };
    for &l in lambdas {
        let eq = solve(SymmetricInstance { lambda: l, ..*base })?;
        lambda.alpha.push(eq.alpha);
        lambda.users_welfare.push(eq.users_welfare);
    }
    let mut n_series = Series {
        values: ns.iter().map(|n| *n as f64).collect(),
        alpha: vec![],
        users_welfare: vec![],
    };
    for &n in ns {
        let eq = solve(SymmetricInstance { n, ..*base })?;
        n_series.alpha.push(eq.alpha);
        n_series.users_welfare.push(eq.users_welfare);
    }
    let eq = solve(*base)?;
    let mut k_series = Series {
        values: ks.iter().map(|k| *k as f64).collect(),
        alpha: vec![],
        users_welfare: vec![],
    };
    for &k in ks {
        let game = base.game(k)?;
        k_series.alpha.push(eq.alpha);
        k_series
            .users_welfare
            .push(game.users_welfare(&base.profile_at(k, eq.alpha)?));
    }
    Ok(MonotonicityReport {
        decreasing_in_lambda: lambda.strictly_decreasing(),
        decreasing_in_n: n_series.strictly_decreasing(),
        constant_in_k: k_series.spread() <= 1e-14,
        lambda,
        n: n_series,
        k: k_series,
    })
}

/// Largest `|r_i - 1/n|` over random profiles and information needs.
pub fn uniformity_deviation(act: &Activation, n: usize, k: usize, samples: usize, seed: u64) -> Result<f64> {
    if n < 2 || k == 0 {
        return Err(invalid("need n >= 2 and k >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let docs: Vec<Point> = (0..n).map(|_| Point::clamped(random_coords(&mut rng, k))).collect();
        let atom = Point::clamped(random_coords(&mut rng, k));
        let game = PublishersGame::new(
            SemiMetric::ScaledSquaredEuclidean,
            *act,
            DemandDistribution::one_hot(atom.clone()),
            docs.clone(),
            vec![1.0; n],
        )?;
        let shares = game.rank(&Profile::new(docs)?, &atom);
        for r in shares {
            worst = worst.max((r - 1.0 / n as f64).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn concave_families_pass_grid() {
        for act in [
            Activation::linear(2.0).unwrap(),
            Activation::root(0.5).unwrap(),
            Activation::log(3.0).unwrap(),
        ] {
            assert!(activation_is_concave_on_grid(&act));
        }
        assert!(!activation_is_concave_on_grid(&Activation::exponential(10.0).unwrap()));
    }

    #[test]
    fn counterexample_size_for_softmax() {
        let act = Activation::exponential(10.0).unwrap();
        let ratio = 2.0 * act.dg(0.5).powi(2) / (act.d2g(0.5) * act.g(0.0));
        assert_relative_eq!(ratio, 2.0 * (-5.0f64).exp(), max_relative = 1e-12);
        assert_eq!(counterexample_players(&act, 0.5).unwrap(), 2);
        let game = build_counterexample(&act, Some(0.5)).unwrap();
        assert_eq!(game.n(), 2);
        assert_eq!(game.metric(), SemiMetric::Absolute1d);
    }

    #[test]
    fn counterexample_rejects_concave() {
        assert!(build_counterexample(&Activation::linear(2.0).unwrap(), Some(0.5)).is_err());
        assert!(build_counterexample(&Activation::root(0.5).unwrap(), None).is_err());
    }

    #[test]
    fn second_derivative_closed_form() {
        let act = Activation::exponential(10.0).unwrap();
        let e = (-5.0f64).exp();
        let expected = 1.0 / (1.0 + e).powi(3) * (100.0 * e * (1.0 + e) - 2.0 * 100.0 * e * e);
        assert_relative_eq!(counterexample_second_derivative(&act, 2, 0.5), expected, max_relative = 1e-14);
        assert!((expected - 0.656).abs() < 1e-3);
        let lin = Activation::linear(2.0).unwrap();
        let c: f64 = 4.0;
        let g = 1.5;
        assert_relative_eq!(
            counterexample_second_derivative(&lin, 3, 0.5),
            -c * 2.0 / (c + g).powi(3),
            max_relative = 1e-14
        );
    }

    #[test]
    fn psi_endpoints() {
        let inst = SymmetricInstance::new(2, 0.25, 0.5, Activation::linear(2.0).unwrap()).unwrap();
        assert_relative_eq!(psi_eval(&inst, 1.0).unwrap(), 0.5);
        assert_relative_eq!(psi_eval(&inst, 0.0).unwrap(), 0.25 * (-1.0 / 1.75));
        let half = 0.25 * (-1.0 / 1.9375) * 0.5 + 0.25;
        assert_relative_eq!(psi_eval(&inst, 0.5).unwrap(), half, max_relative = 1e-14);
        assert!(psi_eval(&inst, 1.5).is_err());
    }

    #[test]
    fn psi_matches_segment_derivative() {
        let inst = SymmetricInstance::new(3, 0.6, 0.7, Activation::root(0.4).unwrap()).unwrap();
        let game = inst.game(2).unwrap();
        let f = |alpha: f64, others: f64| {
            let mut x = inst.profile_at(2, others).unwrap();
            x.set_doc(0, inst.profile_at(2, alpha).unwrap().doc(0).clone());
            game.utility(&x, 0)
        };
        for alpha in [0.1, 0.35, 0.8] {
            let h = 1e-6;
            let df = (f(alpha + h, alpha) - f(alpha - h, alpha)) / (2.0 * h);
            assert_relative_eq!(psi_eval(&inst, alpha).unwrap(), -df / (2.0 * inst.c1), max_relative = 1e-6);
        }
    }

    #[test]
    fn equilibrium_is_psi_root() {
        let inst = SymmetricInstance::new(2, 0.25, 0.5, Activation::linear(2.0).unwrap()).unwrap();
        let eq = symmetric_equilibrium(&inst, 1e-10).unwrap();
        assert!(psi_eval(&inst, eq.alpha - 1e-6).unwrap() < 0.0);
        assert!(psi_eval(&inst, eq.alpha + 1e-6).unwrap() > 0.0);
        assert_relative_eq!(eq.users_welfare, 1.0 - (1.0 - eq.alpha).powi(2) * 0.25);
        let exp = SymmetricInstance { activation: Activation::exponential(1.0).unwrap(), ..inst };
        assert!(matches!(symmetric_equilibrium(&exp, 1e-6), Err(Error::Unsupported(_))));
    }

    #[test]
    fn heavy_penalty_pins_documents() {
        let inst = SymmetricInstance::new(3, 0.4, 1e6, Activation::log(2.5).unwrap()).unwrap();
        let eq = symmetric_equilibrium(&inst, 1e-9).unwrap();
        assert!(eq.alpha < 1e-3);
        assert!((eq.users_welfare - 0.6).abs() < 1e-3);
    }

    #[test]
    fn bad_bracket_is_rejected() {
        let inst = SymmetricInstance::new(2, 0.25, 0.5, Activation::linear(2.0).unwrap()).unwrap();
        assert!(symmetric_equilibrium_in(&inst, 1e-9, 0.9, 1.0).is_err());
    }

    #[test]
    fn root_audit_is_clean() {
        let act = Activation::root(0.5).unwrap();
        let game = PublishersGame::new(
            SemiMetric::ScaledSquaredEuclidean,
            act,
            DemandDistribution::uniform(vec![
                Point::new(vec![0.2, 0.9]).unwrap(),
                Point::new(vec![0.6, 0.1]).unwrap(),
            ])
            .unwrap(),
            vec![Point::new(vec![0.5, 0.5]).unwrap(), Point::new(vec![0.0, 1.0]).unwrap()],
            vec![0.5, 0.5],
        )
        .unwrap();
        let v = audit_concavity(&game, 500, 3);
        assert!(v.activation_concave);
        assert_eq!(v.own_concavity_violations, 0);
        assert_eq!(v.opponent_convexity_violations, 0);
        assert!(v.witness.is_none());
    }
}
