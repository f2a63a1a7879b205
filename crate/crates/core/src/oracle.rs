//! Maximization of one publisher's utility over her own document while the
//! opponents are frozen, either at a single profile (best response) or along
//! a whole recorded sequence of profiles (best fixed action in hindsight).
//!
//! Both cases share one objective: the opponents only enter through the
//! per-atom activation sums `sum_{j != i} g(d(x_j, atom))`, so a sequence of
//! `T` profiles compresses to a `T x s` table.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{Point, Profile, PublishersGame};

/// Starting points drawn uniformly from the cube in addition to the initial
/// document and the demand atoms.
pub const RANDOM_RESTARTS: usize = 8;
/// Iteration cap of a single local ascent.
pub const MAX_ITERATIONS: usize = 5000;
/// Resolution per axis of the coarse grid used by the global search.
pub const GLOBAL_GRID_PER_AXIS: usize = 32;
/// Largest dimension the global search accepts.
pub const GLOBAL_MAX_DIM: usize = 3;

const SEGMENT_GRID: usize = 4096;
const ARMIJO: f64 = 1e-4;

/// Whether the objective is known to be concave in the player's own action.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Search {
    /// Local methods are exact; the result carries a certified upper bound.
    Concave,
    /// Multi-start plus a coarse grid; the result is a lower bound on the
    /// true maximum.
    Global,
}

#[derive(Clone, Debug)]
pub struct Maximum {
    pub point: Vec<f64>,
    pub value: f64,
    /// Upper bound on the true maximum (concave search only).
    pub upper_bound: Option<f64>,
}

/// Player `i`'s utility as a function of her own document, averaged over one
/// or more frozen opponent configurations.
pub struct OwnObjective<'a> {
    game: &'a PublishersGame,
    player: usize,
    rounds: usize,
    /// Opponent activation sums, `rounds x s`, row-major.
    opp: Vec<f64>,
}

impl<'a> OwnObjective<'a> {
    pub fn at_profile(game: &'a PublishersGame, x: &Profile, i: usize) -> Self {
        Self::over_profiles(game, std::slice::from_ref(x), i)
    }

    /// Time-averaged utility over `profiles` (only the opponents' documents
    /// are read).
    pub fn over_profiles(game: &'a PublishersGame, profiles: &[Profile], i: usize) -> Self {
        assert!(i < game.n(), "player index out of range");
        let atoms = game.demand().atoms();
        let act = game.activation();
        let mut opp = Vec::with_capacity(profiles.len() * atoms.len());
        for x in profiles {
            for atom in atoms {
                let sum: f64 = x
                    .docs()
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, d)| act.g(game.dist(d.coords(), atom.coords())))
                    .sum();
                opp.push(sum);
            }
        }
        Self {
            game,
            player: i,
            rounds: profiles.len(),
            opp,
        }
    }

    pub fn game(&self) -> &PublishersGame {
        self.game
    }

    pub fn player(&self) -> usize {
        self.player
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    fn anchor(&self) -> &[f64] {
        self.game.initial_docs()[self.player].coords()
    }

    pub fn value(&self, y: &[f64]) -> f64 {
        let game = self.game;
        let act = game.activation();
        let s = game.demand().len();
        let inv_t = 1.0 / self.rounds as f64;
        let uniform = 1.0 / game.n() as f64;
        let mut exposure = 0.0;
        for (a, (atom, w)) in game
            .demand()
            .atoms()
            .iter()
            .zip(game.demand().weights())
            .enumerate()
        {
            let gy = act.g(game.dist(y, atom.coords()));
            let mut acc = 0.0;
            for t in 0..self.rounds {
                let total = gy + self.opp[t * s + a];
                acc += if total > 0.0 { gy / total } else { uniform };
            }
            exposure += w * acc * inv_t;
        }
        exposure - game.lambda(self.player) * game.dist(y, self.anchor())
    }

    /// Value and gradient; requires a differentiable metric.
    pub fn value_and_gradient(&self, y: &[f64], grad: &mut [f64]) -> f64 {
        let game = self.game;
        let act = game.activation();
        let s = game.demand().len();
        let k = game.k();
        let scale = 2.0 / k as f64;
        let inv_t = 1.0 / self.rounds as f64;
        let uniform = 1.0 / game.n() as f64;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut exposure = 0.0;
        for (a, (atom, w)) in game
            .demand()
            .atoms()
            .iter()
            .zip(game.demand().weights())
            .enumerate()
        {
            let d = game.dist(y, atom.coords());
            let gy = act.g(d);
            let (mut share, mut slope) = (0.0, 0.0);
            for t in 0..self.rounds {
                let o = self.opp[t * s + a];
                let total = gy + o;
                if total > 0.0 {
                    share += gy / total;
                    slope += o / (total * total);
                } else {
                    share += uniform;
                }
            }
            exposure += w * share * inv_t;
            let coef = w * act.dg(d) * slope * inv_t * scale;
            if coef != 0.0 && coef.is_finite() {
                for ((g, yj), aj) in grad.iter_mut().zip(y).zip(atom.coords()) {
                    *g += coef * (yj - aj);
                }
            }
        }
        let pen = game.lambda(self.player);
        for ((g, yj), oj) in grad.iter_mut().zip(y).zip(self.anchor()) {
            *g -= pen * scale * (yj - oj);
        }
        exposure - pen * game.dist(y, self.anchor())
    }

    /// Derivative along `direction` at `y`.
    fn directional(&self, y: &[f64], direction: &[f64], scratch: &mut [f64]) -> (f64, f64) {
        let v = self.value_and_gradient(y, scratch);
        (v, dot(scratch, direction))
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `max_{z in cube} grad . (z - y)`: an upper bound on the possible gain of
/// a concave function over its linearization at `y`.
#[inline]
pub fn frank_wolfe_gap(y: &[f64], grad: &[f64]) -> f64 {
    y.iter()
        .zip(grad)
        .map(|(yj, gj)| if *gj > 0.0 { gj * (1.0 - yj) } else { -gj * yj })
        .sum()
}

/// Result of one projected gradient ascent.
#[derive(Clone, Debug)]
pub struct LocalAscent {
    pub point: Vec<f64>,
    pub value: f64,
    /// Frank-Wolfe gap at the final point.
    pub gap: f64,
    pub iterations: usize,
}

/// Projected gradient ascent with backtracking from `start`, stopping once
/// the Frank-Wolfe gap falls to `target` or progress stalls.
pub fn local_ascent(obj: &OwnObjective<'_>, start: &[f64], target: f64) -> LocalAscent {
    let k = start.len();
    let mut x: Vec<f64> = start.iter().map(|c| c.clamp(0.0, 1.0)).collect();
    let mut grad = vec![0.0; k];
    let mut f = obj.value_and_gradient(&x, &mut grad);
    let mut y = vec![0.0; k];
    let mut grad_y = vec![0.0; k];
    let mut step = 1.0;
    let mut iterations = 0;
    let mut gap = frank_wolfe_gap(&x, &grad);
    while iterations < MAX_ITERATIONS && gap > target {
        iterations += 1;
        let mut accepted = false;
        while step > 1e-18 {
            for j in 0..k {
                y[j] = (x[j] + step * grad[j]).clamp(0.0, 1.0);
            }
            let ascent: f64 = grad.iter().zip(&y).zip(&x).map(|((g, a), b)| g * (a - b)).sum();
            if ascent <= 0.0 {
                break;
            }
            let fy = obj.value_and_gradient(&y, &mut grad_y);
            if fy >= f + ARMIJO * ascent {
                std::mem::swap(&mut x, &mut y);
                std::mem::swap(&mut grad, &mut grad_y);
                f = fy;
                accepted = true;
                step = (step * 2.0).min(1e8);
                break;
            }
            step *= 0.5;
        }
        gap = frank_wolfe_gap(&x, &grad);
        if !accepted {
            break;
        }
    }
    LocalAscent {
        point: x,
        value: f,
        gap,
        iterations,
    }
}

fn require_gradients(game: &PublishersGame) -> Result<()> {
    if game.metric().is_differentiable() {
        Ok(())
    } else {
        Err(Error::Unsupported(format!(
            "best responses need a differentiable metric, got {}",
            game.metric().name()
        )))
    }
}

/// Maximizes `obj` over the cube to within `tolerance`.
///
/// One-hot demand reduces the search to the segment between the player's
/// initial document and the information need. Otherwise projected gradient
/// ascent runs from the initial document, every demand atom, `extra_starts`
/// and [`RANDOM_RESTARTS`] uniform points drawn from `seed`.
pub fn maximize(
    obj: &OwnObjective<'_>,
    search: Search,
    tolerance: f64,
    extra_starts: &[Vec<f64>],
    seed: u64,
) -> Result<Maximum> {
    let game = obj.game();
    require_gradients(game)?;
    if !(tolerance > 0.0) {
        return Err(Error::InvalidInput(format!("oracle tolerance {tolerance} must be > 0")));
    }
    if search == Search::Global && game.demand().single_atom().is_none() && game.k() > GLOBAL_MAX_DIM {
        return Err(Error::Unsupported(format!(
            "global search needs k <= {GLOBAL_MAX_DIM}, got k = {}",
            game.k()
        )));
    }
    if let Some(atom) = game.demand().single_atom() {
        let anchor = game.initial_docs()[obj.player()].coords();
        return Ok(match search {
            Search::Concave => segment_bisection(obj, anchor, atom.coords(), tolerance),
            Search::Global => segment_scan(obj, anchor, atom.coords(), tolerance),
        });
    }

    let k = game.k();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts: Vec<Vec<f64>> = Vec::with_capacity(1 + game.demand().len() + RANDOM_RESTARTS);
    starts.push(game.initial_docs()[obj.player()].coords().to_vec());
    starts.extend(game.demand().atoms().iter().map(|a| a.coords().to_vec()));
    starts.extend(extra_starts.iter().cloned());
    for _ in 0..RANDOM_RESTARTS {
        starts.push((0..k).map(|_| rng.gen::<f64>()).collect());
    }
    if search == Search::Global {
        starts.extend(grid_leaders(obj, 4));
    }

    let target = 0.1 * tolerance;
    let mut best: Option<LocalAscent> = None;
    let mut upper = f64::INFINITY;
    for start in &starts {
        let run = local_ascent(obj, start, target);
        upper = upper.min(run.value + run.gap);
        if best.as_ref().is_none_or(|b| run.value > b.value) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one start");
    Ok(Maximum {
        point: best.point,
        value: best.value,
        upper_bound: (search == Search::Concave).then_some(upper.max(best.value)),
    })
}

/// Best `count` points of the coarse grid, by value.
fn grid_leaders(obj: &OwnObjective<'_>, count: usize) -> Vec<Vec<f64>> {
    let k = obj.game().k();
    let m = GLOBAL_GRID_PER_AXIS;
    let total = m.pow(k as u32);
    let mut scored: Vec<(f64, Vec<f64>)> = Vec::with_capacity(count + 1);
    let mut y = vec![0.0; k];
    for idx in 0..total {
        let mut r = idx;
        for c in y.iter_mut() {
            *c = (r % m) as f64 / (m - 1) as f64;
            r /= m;
        }
        let v = obj.value(&y);
        if scored.len() < count || v > scored.last().map_or(f64::NEG_INFINITY, |s| s.0) {
            scored.push((v, y.clone()));
            scored.sort_by(|a, b| b.0.total_cmp(&a.0));
            scored.truncate(count);
        }
    }
    scored.into_iter().map(|(_, p)| p).collect()
}

fn on_segment(anchor: &[f64], target: &[f64], alpha: f64) -> Vec<f64> {
    anchor
        .iter()
        .zip(target)
        .map(|(a, t)| (a + alpha * (t - a)).clamp(0.0, 1.0))
        .collect()
}

/// Concave one-dimensional maximization along `anchor -> target` by
/// bisection on the sign of the directional derivative.
fn segment_bisection(obj: &OwnObjective<'_>, anchor: &[f64], target: &[f64], tol: f64) -> Maximum {
    let direction: Vec<f64> = target.iter().zip(anchor).map(|(t, a)| t - a).collect();
    let mut scratch = vec![0.0; anchor.len()];
    if direction.iter().all(|d| *d == 0.0) {
        let v = obj.value(anchor);
        return Maximum {
            point: anchor.to_vec(),
            value: v,
            upper_bound: Some(v),
        };
    }
    let (v0, d0) = obj.directional(anchor, &direction, &mut scratch);
    if d0 <= 0.0 {
        return Maximum {
            point: anchor.to_vec(),
            value: v0,
            upper_bound: Some(v0),
        };
    }
    let (v1, d1) = obj.directional(target, &direction, &mut scratch);
    if d1 >= 0.0 {
        return Maximum {
            point: target.to_vec(),
            value: v1,
            upper_bound: Some(v1),
        };
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let target_gap = 0.01 * tol;
    loop {
        let mid = 0.5 * (lo + hi);
        let p = on_segment(anchor, target, mid);
        let (v, d) = obj.directional(&p, &direction, &mut scratch);
        if d > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        // phi(alpha*) <= phi(mid) + |phi'(mid)| * (hi - lo) by concavity
        let slack = d.abs() * (hi - lo);
        if slack <= target_gap || hi - lo <= 1e-15 || d == 0.0 {
            return Maximum {
                point: p,
                value: v,
                upper_bound: Some(v + slack),
            };
        }
    }
}

/// Non-concave segment search: dense scan plus golden-section refinement of
/// the best cell.
fn segment_scan(obj: &OwnObjective<'_>, anchor: &[f64], target: &[f64], tol: f64) -> Maximum {
    let mut best = (f64::NEG_INFINITY, 0.0);
    for step in 0..=SEGMENT_GRID {
        let alpha = step as f64 / SEGMENT_GRID as f64;
        let v = obj.value(&on_segment(anchor, target, alpha));
        if v > best.0 {
            best = (v, alpha);
        }
    }
    let h = 1.0 / SEGMENT_GRID as f64;
    let (mut a, mut b) = ((best.1 - h).max(0.0), (best.1 + h).min(1.0));
    let phi = |t: f64| obj.value(&on_segment(anchor, target, t));
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    while b - a > tol.min(1e-9) {
        let c = b - ratio * (b - a);
        let d = a + ratio * (b - a);
        if phi(c) >= phi(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let alpha = 0.5 * (a + b);
    let v = phi(alpha);
    let (value, alpha) = if v >= best.0 { (v, alpha) } else { best };
    Maximum {
        point: on_segment(anchor, target, alpha),
        value,
        upper_bound: None,
    }
}

/// Convenience: maximizer as a [`Point`].
pub(crate) fn to_point(v: Vec<f64>) -> Point {
    Point::clamped(v)
}
