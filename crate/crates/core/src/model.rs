//! Game objects: points in the unit cube, semi-metrics, activation functions,
//! proportional ranking, utilities with their analytic gradients, and the two
//! welfare measures.
//!
//! Everything here is a pure function of its inputs. Methods that take a
//! [`Profile`] assume it was built for the same game (same `n` and `k`) and
//! panic otherwise; use [`PublishersGame::check_profile`] on untrusted input.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Margin added to the activation lower bounds (`b > 1`, `c > 2`) by the
/// default hyperparameters.
pub const DEFAULT_DELTA: f64 = 1e-5;

/// A document or an information need: `k` coordinates in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(invalid("point must have at least one coordinate"));
        }
        if let Some((j, c)) = coords
            .iter()
            .enumerate()
            .find(|(_, c)| !(0.0..=1.0).contains(*c))
        {
            return Err(invalid(format!("coordinate {j} = {c} lies outside [0, 1]")));
        }
        Ok(Self(coords))
    }

    /// Truncates every coordinate into `[0, 1]`; NaN maps to 0.
    pub fn clamped(mut coords: Vec<f64>) -> Self {
        for c in &mut coords {
            *c = if c.is_nan() { 0.0 } else { c.clamp(0.0, 1.0) };
        }
        Self(coords)
    }

    pub fn splat(k: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; k])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// `self + t * (other - self)`; stays in the cube for `t` in `[0, 1]`.
    pub fn lerp(&self, other: &Point, t: f64) -> Point {
        Point::clamped(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + t * (b - a))
                .collect(),
        )
    }

    pub fn midpoint(&self, other: &Point) -> Point {
        Point::clamped(self.0.iter().zip(&other.0).map(|(a, b)| 0.5 * (a + b)).collect())
    }
}

impl TryFrom<Vec<f64>> for Point {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Point::new(v)
    }
}

impl From<Point> for Vec<f64> {
    fn from(p: Point) -> Self {
        p.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SemiMetric {
    /// `(1/k) * |a - b|^2`.
    ScaledSquaredEuclidean,
    /// `|a - b|`, one-dimensional only.
    #[serde(rename = "absolute-1d")]
    Absolute1d,
}

impl SemiMetric {
    pub fn distance(&self, a: &Point, b: &Point) -> Result<f64> {
        if a.dim() != b.dim() {
            return Err(invalid(format!(
                "dimension mismatch: {} vs {}",
                a.dim(),
                b.dim()
            )));
        }
        if *self == SemiMetric::Absolute1d && a.dim() != 1 {
            return Err(invalid("absolute-1d metric requires k = 1"));
        }
        Ok(self.raw(a.coords(), b.coords()))
    }

    #[inline]
    pub(crate) fn raw(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            SemiMetric::ScaledSquaredEuclidean => {
                let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                sq / a.len() as f64
            }
            SemiMetric::Absolute1d => (a[0] - b[0]).abs(),
        }
    }

    pub fn is_differentiable(&self) -> bool {
        matches!(self, SemiMetric::ScaledSquaredEuclidean)
    }

    pub fn name(&self) -> &'static str {
        match self {
            SemiMetric::ScaledSquaredEuclidean => "scaled-squared-euclidean",
            SemiMetric::Absolute1d => "absolute-1d",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationFamily {
    /// `b - t`, `b > 1`.
    Linear,
    /// `(1 - t)^a`, `0 < a < 1`.
    Root,
    /// `ln(c - t)`, `c > 2`.
    Log,
    /// `exp(-beta * t)`, `beta > 0`.
    Exponential,
}

impl ActivationFamily {
    pub const CONCAVE: [ActivationFamily; 3] = [
        ActivationFamily::Linear,
        ActivationFamily::Root,
        ActivationFamily::Log,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ActivationFamily::Linear => "linear",
            ActivationFamily::Root => "root",
            ActivationFamily::Log => "log",
            ActivationFamily::Exponential => "exponential",
        }
    }

    /// Hyperparameter used when none is given: `b = 1 + δ`, `a = 1/2`,
    /// `c = 2 + δ`, `β = 1`.
    pub fn default_param(&self) -> f64 {
        match self {
            ActivationFamily::Linear => 1.0 + DEFAULT_DELTA,
            ActivationFamily::Root => 0.5,
            ActivationFamily::Log => 2.0 + DEFAULT_DELTA,
            ActivationFamily::Exponential => 1.0,
        }
    }

    pub fn is_concave(&self) -> bool {
        !matches!(self, ActivationFamily::Exponential)
    }
}

impl std::str::FromStr for ActivationFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" | "lin" => Ok(ActivationFamily::Linear),
            "root" => Ok(ActivationFamily::Root),
            "log" | "logarithmic" => Ok(ActivationFamily::Log),
            "exponential" | "exp" | "softmax" => Ok(ActivationFamily::Exponential),
            other => Err(invalid(format!("unknown activation family `{other}`"))),
        }
    }
}

impl std::fmt::Display for ActivationFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Value and first two derivatives of an activation at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActivationValue {
    pub g: f64,
    pub dg: f64,
    pub d2g: f64,
}

/// The scalar function `g` defining a proportional ranking function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ActivationDoc", into = "ActivationDoc")]
pub struct Activation {
    family: ActivationFamily,
    param: f64,
}

#[derive(Serialize, Deserialize)]
struct ActivationDoc {
    family: ActivationFamily,
    param: f64,
}

impl TryFrom<ActivationDoc> for Activation {
    type Error = Error;
    fn try_from(d: ActivationDoc) -> Result<Self> {
        Activation::new(d.family, d.param)
    }
}

impl From<Activation> for ActivationDoc {
    fn from(a: Activation) -> Self {
        ActivationDoc {
            family: a.family,
            param: a.param,
        }
    }
}

const VALIDATION_GRID: usize = 1000;

impl Activation {
    /// Builds and validates an activation. Besides the family's parameter
    /// range, `g` must be positive and strictly decreasing on a grid over
    /// `[0, 1]`. The root family is the one exception at the endpoint: it has
    /// `g(1) = 0`, which only matters when every document sits at distance
    /// exactly 1 from an information need.
    pub fn new(family: ActivationFamily, param: f64) -> Result<Self> {
        if !param.is_finite() {
            return Err(invalid(format!("{family} hyperparameter must be finite")));
        }
        let ok = match family {
            ActivationFamily::Linear => param > 1.0,
            ActivationFamily::Root => param > 0.0 && param < 1.0,
            ActivationFamily::Log => param > 2.0,
            ActivationFamily::Exponential => param > 0.0,
        };
        if !ok {
            let range = match family {
                ActivationFamily::Linear => "b > 1",
                ActivationFamily::Root => "0 < a < 1",
                ActivationFamily::Log => "c > 2",
                ActivationFamily::Exponential => "beta > 0",
            };
            return Err(invalid(format!(
                "{family} hyperparameter {param} violates {range}"
            )));
        }
        let act = Activation { family, param };
        for step in 0..=VALIDATION_GRID {
            let t = step as f64 / VALIDATION_GRID as f64;
            let g = act.g(t);
            let positive = g > 0.0 || (t == 1.0 && family == ActivationFamily::Root);
            if !positive {
                return Err(invalid(format!(
                    "{family}({param}) is not strictly positive at t = {t}"
                )));
            }
            if !(act.dg(t) < 0.0) {
                return Err(invalid(format!(
                    "{family}({param}) is not strictly decreasing at t = {t}"
                )));
            }
        }
        Ok(act)
    }

    pub fn with_default(family: ActivationFamily) -> Self {
        Self::new(family, family.default_param()).expect("default hyperparameters are valid")
    }

    pub fn linear(b: f64) -> Result<Self> {
        Self::new(ActivationFamily::Linear, b)
    }

    pub fn root(a: f64) -> Result<Self> {
        Self::new(ActivationFamily::Root, a)
    }

    pub fn log(c: f64) -> Result<Self> {
        Self::new(ActivationFamily::Log, c)
    }

    pub fn exponential(beta: f64) -> Result<Self> {
        Self::new(ActivationFamily::Exponential, beta)
    }

    pub fn family(&self) -> ActivationFamily {
        self.family
    }

    pub fn param(&self) -> f64 {
        self.param
    }

    pub fn is_concave(&self) -> bool {
        self.family.is_concave()
    }

    /// Checked evaluation of `(g, g', g'')` at `t` in `[0, 1]`.
    pub fn eval(&self, t: f64) -> Result<ActivationValue> {
        if !(0.0..=1.0).contains(&t) {
            return Err(invalid(format!("activation argument {t} outside [0, 1]")));
        }
        Ok(ActivationValue {
            g: self.g(t),
            dg: self.dg(t),
            d2g: self.d2g(t),
        })
    }

    #[inline]
    pub fn g(&self, t: f64) -> f64 {
        let p = self.param;
        match self.family {
            ActivationFamily::Linear => p - t,
            ActivationFamily::Root => (1.0 - t).max(0.0).powf(p),
            ActivationFamily::Log => (p - t).ln(),
            ActivationFamily::Exponential => (-p * t).exp(),
        }
    }

    #[inline]
    pub fn dg(&self, t: f64) -> f64 {
        let p = self.param;
        match self.family {
            ActivationFamily::Linear => -1.0,
            ActivationFamily::Root => -p * (1.0 - t).max(0.0).powf(p - 1.0),
            ActivationFamily::Log => -1.0 / (p - t),
            ActivationFamily::Exponential => -p * (-p * t).exp(),
        }
    }

    #[inline]
    pub fn d2g(&self, t: f64) -> f64 {
        let p = self.param;
        match self.family {
            ActivationFamily::Linear => 0.0,
            ActivationFamily::Root => p * (p - 1.0) * (1.0 - t).max(0.0).powf(p - 2.0),
            ActivationFamily::Log => -1.0 / ((p - t) * (p - t)),
            ActivationFamily::Exponential => p * p * (-p * t).exp(),
        }
    }
}

/// Finite demand distribution over information needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DemandDoc", into = "DemandDoc")]
pub struct DemandDistribution {
    atoms: Vec<Point>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DemandDoc {
    atoms: Vec<Point>,
    weights: Vec<f64>,
}

impl TryFrom<DemandDoc> for DemandDistribution {
    type Error = Error;
    fn try_from(d: DemandDoc) -> Result<Self> {
        DemandDistribution::new(d.atoms, d.weights)
    }
}

impl From<DemandDistribution> for DemandDoc {
    fn from(d: DemandDistribution) -> Self {
        DemandDoc {
            atoms: d.atoms,
            weights: d.weights,
        }
    }
}

impl DemandDistribution {
    pub fn new(atoms: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(invalid("demand distribution needs at least one atom"));
        }
        if atoms.len() != weights.len() {
            return Err(invalid(format!(
                "{} atoms but {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        let k = atoms[0].dim();
        if atoms.iter().any(|a| a.dim() != k) {
            return Err(invalid("demand atoms have inconsistent dimensions"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(invalid("demand weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("demand weights sum to {total}, not 1")));
        }
        Ok(Self { atoms, weights })
    }

    pub fn uniform(atoms: Vec<Point>) -> Result<Self> {
        let s = atoms.len().max(1);
        let weights = vec![1.0 / s as f64; atoms.len()];
        Self::new(atoms, weights)
    }

    pub fn one_hot(atom: Point) -> Self {
        Self {
            atoms: vec![atom],
            weights: vec![1.0],
        }
    }

    pub fn atoms(&self) -> &[Point] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// The single atom carrying all the mass, if any.
    pub fn single_atom(&self) -> Option<&Point> {
        let mut it = self.atoms.iter().zip(&self.weights).filter(|(_, w)| **w > 0.0);
        match (it.next(), it.next()) {
            (Some((a, _)), None) => Some(a),
            _ => None,
        }
    }
}

/// One document per publisher.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Profile {
    docs: Vec<Point>,
}

impl Profile {
    pub fn new(docs: Vec<Point>) -> Result<Self> {
        if docs.is_empty() {
            return Err(invalid("profile must contain at least one document"));
        }
        let k = docs[0].dim();
        if docs.iter().any(|d| d.dim() != k) {
            return Err(invalid("profile documents have inconsistent dimensions"));
        }
        Ok(Self { docs })
    }

    pub fn n(&self) -> usize {
        self.docs.len()
    }

    pub fn k(&self) -> usize {
        self.docs[0].dim()
    }

    pub fn docs(&self) -> &[Point] {
        &self.docs
    }

    pub fn doc(&self, i: usize) -> &Point {
        &self.docs[i]
    }

    pub fn set_doc(&mut self, i: usize, doc: Point) {
        assert_eq!(doc.dim(), self.k(), "document dimension");
        self.docs[i] = doc;
    }

    /// Copy of the profile with player `i`'s document replaced.
    pub fn with_doc(&self, i: usize, doc: Point) -> Profile {
        let mut p = self.clone();
        p.set_doc(i, doc);
        p
    }

    /// Coordinatewise mean of a non-empty slice of profiles.
    pub fn mean(profiles: &[Profile]) -> Result<Profile> {
        let first = profiles
            .first()
            .ok_or_else(|| invalid("cannot average zero profiles"))?;
        let (n, k) = (first.n(), first.k());
        let mut acc = vec![0.0; n * k];
        for p in profiles {
            if p.n() != n || p.k() != k {
                return Err(invalid("profiles have inconsistent shapes"));
            }
            for (i, d) in p.docs.iter().enumerate() {
                for (j, c) in d.coords().iter().enumerate() {
                    acc[i * k + j] += c;
                }
            }
        }
        let t = profiles.len() as f64;
        Ok(Profile::from_flat(&acc.iter().map(|v| v / t).collect::<Vec<_>>(), n, k))
    }

    pub(crate) fn from_flat(flat: &[f64], n: usize, k: usize) -> Profile {
        Profile {
            docs: (0..n)
                .map(|i| Point::clamped(flat[i * k..(i + 1) * k].to_vec()))
                .collect(),
        }
    }
}

/// A publishers' game: players, embedding dimension, semi-metric, ranking
/// activation, demand, initial documents and integrity parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GameDoc", into = "GameDoc")]
pub struct PublishersGame {
    n: usize,
    k: usize,
    metric: SemiMetric,
    activation: Activation,
    demand: DemandDistribution,
    initial_docs: Vec<Point>,
    lambdas: Vec<f64>,
}

/// On-disk layout of a game instance.
#[derive(Serialize, Deserialize)]
struct GameDoc {
    n: usize,
    k: usize,
    metric: SemiMetric,
    activation: Activation,
    demand: DemandDistribution,
    initial_docs: Vec<Point>,
    lambdas: Vec<f64>,
}

impl TryFrom<GameDoc> for PublishersGame {
    type Error = Error;
    fn try_from(d: GameDoc) -> Result<Self> {
        let game = PublishersGame::new(d.metric, d.activation, d.demand, d.initial_docs, d.lambdas)?;
        if game.n != d.n || game.k != d.k {
            return Err(invalid(format!(
                "declared n = {}, k = {} but documents give n = {}, k = {}",
                d.n, d.k, game.n, game.k
            )));
        }
        Ok(game)
    }
}

impl From<PublishersGame> for GameDoc {
    fn from(g: PublishersGame) -> Self {
        GameDoc {
            n: g.n,
            k: g.k,
            metric: g.metric,
            activation: g.activation,
            demand: g.demand,
            initial_docs: g.initial_docs,
            lambdas: g.lambdas,
        }
    }
}

/// Per-(player, atom) activation values at a profile, shared by the
/// all-player evaluations.
struct Scores {
    s: usize,
    /// `d(x_j, atom_s)` at `[j * s + s]`.
    dist: Vec<f64>,
    /// `g(d)` at `[j * s + s]`.
    g: Vec<f64>,
    /// `sum_j g(d(x_j, atom_s))`.
    sums: Vec<f64>,
}

impl Scores {
    #[inline]
    fn share(&self, j: usize, a: usize) -> f64 {
        let total = self.sums[a];
        if total > 0.0 {
            self.g[j * self.s + a] / total
        } else {
            1.0 / (self.g.len() / self.s) as f64
        }
    }
}

impl PublishersGame {
    pub fn new(
        metric: SemiMetric,
        activation: Activation,
        demand: DemandDistribution,
        initial_docs: Vec<Point>,
        lambdas: Vec<f64>,
    ) -> Result<Self> {
        let n = initial_docs.len();
        if n < 2 {
            return Err(invalid(format!("n = {n}; a game needs at least 2 publishers")));
        }
        let k = initial_docs[0].dim();
        if initial_docs.iter().any(|d| d.dim() != k) {
            return Err(invalid("initial documents have inconsistent dimensions"));
        }
        if demand.atoms().iter().any(|a| a.dim() != k) {
            return Err(invalid(format!("demand atoms must have dimension k = {k}")));
        }
        if lambdas.len() != n {
            return Err(invalid(format!("{} lambdas for {n} publishers", lambdas.len())));
        }
        if let Some(l) = lambdas.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(invalid(format!("lambda = {l}; integrity parameters must be > 0")));
        }
        if metric == SemiMetric::Absolute1d && k != 1 {
            return Err(invalid("absolute-1d metric requires k = 1"));
        }
        Ok(Self {
            n,
            k,
            metric,
            activation,
            demand,
            initial_docs,
            lambdas,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn metric(&self) -> SemiMetric {
        self.metric
    }

    pub fn activation(&self) -> &Activation {
        &self.activation
    }

    pub fn demand(&self) -> &DemandDistribution {
        &self.demand
    }

    pub fn initial_docs(&self) -> &[Point] {
        &self.initial_docs
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn lambda(&self, i: usize) -> f64 {
        self.lambdas[i]
    }

    /// Same game with a different activation.
    pub fn with_activation(&self, activation: Activation) -> PublishersGame {
        PublishersGame {
            activation,
            ..self.clone()
        }
    }

    /// The profile where every publisher plays her initial document.
    pub fn initial_profile(&self) -> Profile {
        Profile {
            docs: self.initial_docs.clone(),
        }
    }

    pub fn check_profile(&self, x: &Profile) -> Result<()> {
        if x.n() != self.n || x.k() != self.k {
            return Err(invalid(format!(
                "profile has shape {}x{}, game expects {}x{}",
                x.n(),
                x.k(),
                self.n,
                self.k
            )));
        }
        Ok(())
    }

    pub fn distance(&self, a: &Point, b: &Point) -> Result<f64> {
        self.metric.distance(a, b)
    }

    #[inline]
    pub(crate) fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        self.metric.raw(a, b)
    }

    fn assert_shape(&self, x: &Profile) {
        assert!(
            x.n() == self.n && x.k() == self.k,
            "profile shape {}x{} does not match game {}x{}",
            x.n(),
            x.k(),
            self.n,
            self.k
        );
    }

    fn scores(&self, x: &Profile) -> Scores {
        self.assert_shape(x);
        let s = self.demand.len();
        let mut dist = Vec::with_capacity(self.n * s);
        let mut g = Vec::with_capacity(self.n * s);
        let mut sums = vec![0.0; s];
        for doc in x.docs() {
            for (a, atom) in self.demand.atoms().iter().enumerate() {
                let d = self.dist(doc.coords(), atom.coords());
                let gv = self.activation.g(d);
                dist.push(d);
                g.push(gv);
                sums[a] += gv;
            }
        }
        Scores { s, dist, g, sums }
    }

    /// Exposure shares `r_i(x; x*)` of all publishers for one information need.
    pub fn rank(&self, x: &Profile, xstar: &Point) -> Vec<f64> {
        self.assert_shape(x);
        assert_eq!(xstar.dim(), self.k, "information need dimension");
        let g: Vec<f64> = x
            .docs()
            .iter()
            .map(|d| self.activation.g(self.dist(d.coords(), xstar.coords())))
            .collect();
        let total: f64 = g.iter().sum();
        if total > 0.0 {
            g.iter().map(|v| v / total).collect()
        } else {
            vec![1.0 / self.n as f64; self.n]
        }
    }

    /// Expected exposure of every publisher under the demand distribution.
    pub fn exposures(&self, x: &Profile) -> Vec<f64> {
        let sc = self.scores(x);
        let w = self.demand.weights();
        (0..self.n)
            .map(|j| (0..sc.s).map(|a| w[a] * sc.share(j, a)).sum())
            .collect()
    }

    pub fn expected_exposure(&self, x: &Profile, i: usize) -> f64 {
        self.exposures(x)[i]
    }

    pub fn penalty(&self, x: &Profile, i: usize) -> f64 {
        self.lambdas[i] * self.dist(x.doc(i).coords(), self.initial_docs[i].coords())
    }

    /// `u_i(x) = E[r_i(x; x*)] - lambda_i d(x_i, x0_i)`.
    pub fn utility(&self, x: &Profile, i: usize) -> f64 {
        self.expected_exposure(x, i) - self.penalty(x, i)
    }

    pub fn utilities(&self, x: &Profile) -> Vec<f64> {
        self.exposures(x)
            .into_iter()
            .enumerate()
            .map(|(i, e)| e - self.penalty(x, i))
            .collect()
    }

    fn require_differentiable(&self) -> Result<()> {
        if self.metric.is_differentiable() {
            Ok(())
        } else {
            Err(Error::Unsupported(format!(
                "gradients are not defined for the {} metric",
                self.metric.name()
            )))
        }
    }

    /// Analytic gradient of `u_i` with respect to `x_i`.
    pub fn utility_gradient(&self, x: &Profile, i: usize) -> Result<Vec<f64>> {
        self.require_differentiable()?;
        let sc = self.scores(x);
        Ok(self.gradient_from_scores(x, &sc, i))
    }

    /// Gradients of all publishers at once.
    pub fn utility_gradients(&self, x: &Profile) -> Result<Vec<Vec<f64>>> {
        self.require_differentiable()?;
        let sc = self.scores(x);
        Ok((0..self.n).map(|i| self.gradient_from_scores(x, &sc, i)).collect())
    }

    fn gradient_from_scores(&self, x: &Profile, sc: &Scores, i: usize) -> Vec<f64> {
        let k = self.k;
        let scale = 2.0 / k as f64;
        let xi = x.doc(i).coords();
        let mut grad = vec![0.0; k];
        for (a, (atom, w)) in self
            .demand
            .atoms()
            .iter()
            .zip(self.demand.weights())
            .enumerate()
        {
            let total = sc.sums[a];
            if total <= 0.0 || *w == 0.0 {
                continue;
            }
            let idx = i * sc.s + a;
            let gi = sc.g[idx];
            let coef = w * self.activation.dg(sc.dist[idx]) * (total - gi) / (total * total) * scale;
            for ((gj, xj), aj) in grad.iter_mut().zip(xi).zip(atom.coords()) {
                *gj += coef * (xj - aj);
            }
        }
        let pen = self.lambdas[i] * scale;
        for ((gj, xj), oj) in grad.iter_mut().zip(xi).zip(self.initial_docs[i].coords()) {
            *gj -= pen * (xj - oj);
        }
        grad
    }

    /// Sum of publisher utilities.
    pub fn publishers_welfare(&self, x: &Profile) -> f64 {
        self.utilities(x).iter().sum()
    }

    /// One minus the exposure-weighted expected distance of the documents
    /// from the information needs.
    pub fn users_welfare(&self, x: &Profile) -> f64 {
        let sc = self.scores(x);
        let w = self.demand.weights();
        let mut expected = 0.0;
        for (a, wa) in w.iter().enumerate() {
            let inner: f64 = (0..self.n)
                .map(|j| sc.dist[j * sc.s + a] * sc.share(j, a))
                .sum();
            expected += wa * inner;
        }
        1.0 - expected
    }

    /// `(1/n) sum_i u_i(x)`: the weighted social objective with equal weights.
    pub fn social_objective(&self, x: &Profile) -> f64 {
        self.publishers_welfare(x) / self.n as f64
    }
}
