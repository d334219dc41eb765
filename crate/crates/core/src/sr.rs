//! Genetic-programming symbolic regression.
//!
//! Steady-state tournament evolution over [`Expression`] trees. Every iteration
//! breeds `offspring_per_iteration` children in parallel, each from its own
//! random stream keyed by `(seed, iteration, slot)`, and merges them in slot
//! order by replacing the oldest members of the population. Constants of every
//! child are refined with a few Levenberg-Marquardt steps on the training rows.
//!
//! A hall of fame keeps, per complexity, the expression with the lowest
//! validation loss seen so far. The returned [`ParetoFront`] is its
//! non-dominated subset, so the best front loss can only improve with more
//! iterations.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{random_expr, random_leaf, Expression, OperatorSet, TreeLimits};
use crate::linalg::lstsq_min_norm;
use crate::rng::{derive_seed, stream, StreamRng, DEFAULT_SEED};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SrConfig {
    pub iterations: usize,
    pub max_size: usize,
    pub max_depth: usize,
    pub population_size: usize,
    pub offspring_per_iteration: usize,
    pub operators: OperatorSet,
    pub parsimony_coefficient: f64,
    pub tournament_size: usize,
    pub mutation_prob: f64,
    pub crossover_prob: f64,
    pub constant_optimizer_steps: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for SrConfig {
    fn default() -> Self {
        Self {
            iterations: 5000,
            max_size: 10,
            max_depth: 10,
            population_size: 64,
            offspring_per_iteration: 8,
            operators: OperatorSet::default(),
            parsimony_coefficient: 0.0,
            tournament_size: 5,
            mutation_prob: 0.7,
            crossover_prob: 0.3,
            constant_optimizer_steps: 8,
            validation_fraction: 0.2,
            seed: DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SrError {
    #[error("invalid SR config: {field} {reason}")]
    InvalidConfig {
        field: &'static str,
        reason: &'static str,
    },
    #[error("need at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("feature rows and targets differ in length ({rows} vs {targets})")]
    LengthMismatch { rows: usize, targets: usize },
    #[error("feature rows are empty or ragged")]
    BadFeatures,
    #[error("target {index} is not finite")]
    NonFiniteTarget { index: usize },
    #[error("feature value in row {row} is not finite")]
    NonFiniteFeature { row: usize },
    #[error("every candidate in the initial population is invalid on the data")]
    AllInvalid,
    #[error("empty Pareto front")]
    EmptyFront,
}

impl SrConfig {
    pub fn validate(&self) -> Result<(), SrError> {
        let bad = |field, reason| Err(SrError::InvalidConfig { field, reason });
        if self.iterations < 1 {
            return bad("iterations", "must be >= 1");
        }
        if self.population_size < 2 {
            return bad("population_size", "must be >= 2");
        }
        if self.offspring_per_iteration < 1 {
            return bad("offspring_per_iteration", "must be >= 1");
        }
        if self.offspring_per_iteration > self.population_size {
            return bad("offspring_per_iteration", "must not exceed population_size");
        }
        if self.max_size < 1 {
            return bad("max_size", "must be >= 1");
        }
        if self.max_depth < 1 {
            return bad("max_depth", "must be >= 1");
        }
        if self.tournament_size < 1 {
            return bad("tournament_size", "must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.mutation_prob) {
            return bad("mutation_prob", "must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.crossover_prob) {
            return bad("crossover_prob", "must lie in [0, 1]");
        }
        if self.mutation_prob + self.crossover_prob <= 0.0 {
            return bad("mutation_prob", "mutation and crossover cannot both be 0");
        }
        if !(self.parsimony_coefficient >= 0.0 && self.parsimony_coefficient.is_finite()) {
            return bad("parsimony_coefficient", "must be finite and >= 0");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation_fraction", "must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn limits(&self) -> TreeLimits {
        TreeLimits {
            max_size: self.max_size,
            max_depth: self.max_depth,
        }
    }
}

/// An expression with its loss (mean-squared error) and node count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ScoredExpr<T> {
    pub expr: Expression<T>,
    pub loss: T,
    pub complexity: usize,
}

/// Non-dominated expressions sorted by complexity ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ParetoFront<T> {
    pub entries: Vec<ScoredExpr<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionPolicy {
    BestLoss,
    /// Largest drop in log-loss per added node relative to the previous entry.
    #[default]
    Score,
}

impl<T: Scalar> ParetoFront<T> {
    /// Keeps the non-dominated subset of `candidates`. For equal complexity and
    /// loss the earliest candidate wins.
    pub fn from_candidates(candidates: impl IntoIterator<Item = ScoredExpr<T>>) -> Self {
        let mut best: BTreeMap<usize, ScoredExpr<T>> = BTreeMap::new();
        for c in candidates {
            if !c.loss.is_finite() {
                continue;
            }
            match best.get(&c.complexity) {
                Some(old) if old.loss <= c.loss => {}
                _ => {
                    best.insert(c.complexity, c);
                }
            }
        }
        let mut entries: Vec<ScoredExpr<T>> = Vec::new();
        for (_, c) in best {
            if entries.last().is_none_or(|last| c.loss < last.loss) {
                entries.push(c);
            }
        }
        Self { entries }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Lowest loss on the front.
    pub fn best_loss(&self) -> Option<T> {
        self.entries.last().map(|e| e.loss)
    }

    /// Strictly increasing complexity, strictly decreasing finite loss,
    /// stored complexity matching the tree.
    pub fn validate(&self) -> Result<(), String> {
        for (i, e) in self.entries.iter().enumerate() {
            if e.complexity != e.expr.complexity() {
                return Err(format!("entry {i}: stored complexity {} != tree {}", e.complexity, e.expr.complexity()));
            }
            if !(e.loss >= T::zero() && e.loss.is_finite()) {
                return Err(format!("entry {i}: loss {} is not finite and >= 0", e.loss));
            }
            if i > 0 {
                let p = &self.entries[i - 1];
                if e.complexity <= p.complexity {
                    return Err(format!("entry {i}: complexity not increasing"));
                }
                if e.loss >= p.loss {
                    return Err(format!("entry {i}: dominated by entry {}", i - 1));
                }
            }
        }
        Ok(())
    }

    /// `complexity,loss,expression_text` with a header row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("complexity,loss,expression_text\n");
        for e in &self.entries {
            let _ = writeln!(s, "{},{:e},\"{}\"", e.complexity, e.loss, e.expr.to_text());
        }
        s
    }

    pub fn select(&self, policy: SelectionPolicy) -> Result<&ScoredExpr<T>, SrError> {
        select_model(self, policy)
    }
}

/// Picks one entry of a non-empty front.
///
/// `Score` floors losses at `(sqrt(eps))^2` relative scale so that entries
/// already at round-off level do not produce spurious log-loss gains; ties go
/// to the simpler entry.
pub fn select_model<T: Scalar>(
    front: &ParetoFront<T>,
    policy: SelectionPolicy,
) -> Result<&ScoredExpr<T>, SrError> {
    let first = front.entries.first().ok_or(SrError::EmptyFront)?;
    match policy {
        SelectionPolicy::BestLoss => {
            let mut best = first;
            for e in &front.entries[1..] {
                if e.loss < best.loss {
                    best = e;
                }
            }
            Ok(best)
        }
        SelectionPolicy::Score => {
            let scale = front
                .entries
                .iter()
                .map(|e| e.loss)
                .fold(T::zero(), |a, b| a.max(b));
            let floor = (scale * T::epsilon()).max(T::min_positive_value());
            let mut best = first;
            let mut best_score = T::zero();
            for w in front.entries.windows(2) {
                let (p, e) = (&w[0], &w[1]);
                let lp = p.loss.max(floor).ln();
                let le = e.loss.max(floor).ln();
                let score = -(le - lp) / T::from_usize_lossy(e.complexity - p.complexity);
                if score > best_score {
                    best_score = score;
                    best = e;
                }
            }
            Ok(best)
        }
    }
}

/// Deterministic `(train, validation)` row split keyed by `seed`.
///
/// Rows are ordered by a per-row hash; the first `round(fraction * n)` (at
/// least one) go to validation. With fewer than 5 rows, or a zero fraction,
/// both sets are all rows.
pub fn split_rows(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let all: Vec<usize> = (0..n).collect();
    if n < 5 || fraction <= 0.0 {
        return (all.clone(), all);
    }
    let n_val = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut order = all;
    order.sort_by_key(|&i| (derive_seed(seed, &[0x5711, i as u64]), i));
    let mut val = order[..n_val].to_vec();
    let mut train = order[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    (train, val)
}

/// Mean-squared error of `expr` on `(x, y)`; infinite if any row is invalid.
pub fn mse_loss<T: Scalar>(expr: &Expression<T>, x: &[Vec<T>], y: &[T]) -> T {
    let mut sum = T::zero();
    for (row, &t) in x.iter().zip(y) {
        match expr.eval_row(row) {
            Some(v) => sum = sum + (v - t) * (v - t),
            None => return T::infinity(),
        }
    }
    let loss = sum / T::from_usize_lossy(y.len().max(1));
    if loss.is_finite() {
        loss
    } else {
        T::infinity()
    }
}

/// Extra inputs to [`fit_with`].
#[derive(Debug, Clone, Default)]
pub struct FitOptions<T> {
    /// Expressions placed in the initial population ahead of random ones.
    pub initial: Vec<Expression<T>>,
    /// Iteration counts at which a snapshot of the front is recorded.
    pub checkpoints: Vec<usize>,
}

/// Result of [`fit_with`].
#[derive(Debug, Clone)]
pub struct FitReport<T> {
    pub front: ParetoFront<T>,
    pub snapshots: Vec<(usize, ParetoFront<T>)>,
    pub train_rows: Vec<usize>,
    pub validation_rows: Vec<usize>,
}

/// Evolves expressions for `y ~ f(x)` and returns the validation-loss front.
pub fn fit<T: Scalar>(x: &[Vec<T>], y: &[T], cfg: &SrConfig) -> Result<ParetoFront<T>, SrError> {
    fit_with(x, y, cfg, FitOptions::default()).map(|r| r.front)
}

struct Data<T> {
    cols: Vec<Vec<T>>,
    y: Vec<T>,
}

impl<T: Scalar> Data<T> {
    fn subset(x: &[Vec<T>], y: &[T], rows: &[usize], features: usize) -> Self {
        Self {
            cols: (0..features)
                .map(|j| rows.iter().map(|&i| x[i][j]).collect())
                .collect(),
            y: rows.iter().map(|&i| y[i]).collect(),
        }
    }

    fn n(&self) -> usize {
        self.y.len()
    }

    fn loss_of_pred(&self, pred: &[T]) -> T {
        let mut sum = T::zero();
        for (&p, &t) in pred.iter().zip(&self.y) {
            if !p.is_finite() {
                return T::infinity();
            }
            sum = sum + (p - t) * (p - t);
        }
        let l = sum / T::from_usize_lossy(self.n());
        if l.is_finite() {
            l
        } else {
            T::infinity()
        }
    }

    fn loss(&self, e: &Expression<T>) -> T {
        self.loss_of_pred(&e.eval_columns(&self.cols, self.n()))
    }
}

#[derive(Clone)]
struct Member<T> {
    expr: Expression<T>,
    fitness: T,
    birth: u64,
}

struct Child<T> {
    expr: Expression<T>,
    train_loss: T,
    val_loss: T,
}

/// Per-complexity best-validation-loss archive.
struct Hall<T> {
    best: BTreeMap<usize, ScoredExpr<T>>,
}

impl<T: Scalar> Hall<T> {
    fn offer(&mut self, expr: &Expression<T>, val_loss: T) {
        if !val_loss.is_finite() {
            return;
        }
        let c = expr.complexity();
        let better = self.best.get(&c).is_none_or(|old| val_loss < old.loss);
        if better {
            self.best.insert(
                c,
                ScoredExpr {
                    expr: expr.clone(),
                    loss: val_loss,
                    complexity: c,
                },
            );
        }
    }

    fn front(&self) -> ParetoFront<T> {
        ParetoFront::from_candidates(self.best.values().cloned())
    }
}

/// [`fit`] with injected starting expressions and front snapshots.
pub fn fit_with<T: Scalar>(
    x: &[Vec<T>],
    y: &[T],
    cfg: &SrConfig,
    opts: FitOptions<T>,
) -> Result<FitReport<T>, SrError> {
    cfg.validate()?;
    if x.len() != y.len() {
        return Err(SrError::LengthMismatch {
            rows: x.len(),
            targets: y.len(),
        });
    }
    if y.len() < 2 {
        return Err(SrError::TooFewRows(y.len()));
    }
    let features = x[0].len();
    if features == 0 || x.iter().any(|r| r.len() != features) {
        return Err(SrError::BadFeatures);
    }
    if let Some(index) = y.iter().position(|v| !v.is_finite()) {
        return Err(SrError::NonFiniteTarget { index });
    }
    if let Some(row) = x.iter().position(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(SrError::NonFiniteFeature { row });
    }

    let (train_rows, validation_rows) = split_rows(y.len(), cfg.validation_fraction, cfg.seed);
    let train = Data::subset(x, y, &train_rows, features);
    let val = Data::subset(x, y, &validation_rows, features);
    let limits = cfg.limits();
    let ops = &cfg.operators;

    let mut hall = Hall {
        best: BTreeMap::new(),
    };
    let n_all = T::from_usize_lossy(y.len());
    let mean_all = y.iter().copied().sum::<T>() / n_all;
    let mean_train = train.y.iter().copied().sum::<T>() / T::from_usize_lossy(train.n());
    for c in [mean_train, mean_all] {
        let e = Expression::Constant(c);
        hall.offer(&e, val.loss(&e));
    }

    let fitness = |e: &Expression<T>, loss: T| -> T {
        if cfg.parsimony_coefficient == 0.0 {
            loss
        } else {
            loss * (T::one() + T::lit(cfg.parsimony_coefficient) * T::from_usize_lossy(e.complexity()))
        }
    };

    // initial population
    let initial: Vec<Child<T>> = (0..cfg.population_size)
        .into_par_iter()
        .map(|slot| {
            let expr = match opts.initial.get(slot) {
                Some(e) => e.fold_constants(),
                None => {
                    let mut rng = stream(cfg.seed, &[0, slot as u64]);
                    random_expr(&mut rng, limits, features, ops).fold_constants()
                }
            };
            evaluate_child(expr, &train, &val, cfg.constant_optimizer_steps)
        })
        .collect();
    let mut population: Vec<Member<T>> = Vec::with_capacity(cfg.population_size);
    for (slot, c) in initial.into_iter().enumerate() {
        hall.offer(&c.expr, c.val_loss);
        population.push(Member {
            fitness: fitness(&c.expr, c.train_loss),
            expr: c.expr,
            birth: slot as u64,
        });
    }
    if population.iter().all(|m| !m.fitness.is_finite()) {
        return Err(SrError::AllInvalid);
    }

    let mut snapshots = Vec::new();
    let mut clock = cfg.population_size as u64;
    for iteration in 1..=cfg.iterations {
        let hall_exprs: Vec<&Expression<T>> = hall.best.values().map(|s| &s.expr).collect();
        let pop = &population;
        let children: Vec<Child<T>> = (0..cfg.offspring_per_iteration)
            .into_par_iter()
            .map(|slot| {
                let mut rng = stream(cfg.seed, &[1, iteration as u64, slot as u64]);
                let expr = breed(&mut rng, pop, &hall_exprs, cfg, features);
                evaluate_child(expr, &train, &val, cfg.constant_optimizer_steps)
            })
            .collect();
        for c in children {
            hall.offer(&c.expr, c.val_loss);
            let oldest = population
                .iter()
                .enumerate()
                .min_by_key(|(_, m)| m.birth)
                .map(|(i, _)| i)
                .expect("population is non-empty");
            population[oldest] = Member {
                fitness: fitness(&c.expr, c.train_loss),
                expr: c.expr,
                birth: clock,
            };
            clock += 1;
        }
        if opts.checkpoints.contains(&iteration) {
            snapshots.push((iteration, hall.front()));
        }
    }

    let front = hall.front();
    if front.is_empty() {
        return Err(SrError::EmptyFront);
    }
    Ok(FitReport {
        front,
        snapshots,
        train_rows,
        validation_rows,
    })
}

fn evaluate_child<T: Scalar>(expr: Expression<T>, train: &Data<T>, val: &Data<T>, steps: usize) -> Child<T> {
    let (expr, train_loss) = refine_constants(&expr, train, steps);
    let val_loss = if train_loss.is_finite() {
        val.loss(&expr)
    } else {
        T::infinity()
    };
    Child {
        expr,
        train_loss,
        val_loss,
    }
}

fn tournament<'a, T: Scalar>(rng: &mut StreamRng, pop: &'a [Member<T>], k: usize) -> &'a Member<T> {
    let mut best = rng.random_range(0..pop.len());
    for _ in 1..k {
        let i = rng.random_range(0..pop.len());
        let (a, b) = (pop[i].fitness, pop[best].fitness);
        if a < b || (a == b && i < best) || (!b.is_finite() && a.is_finite()) {
            best = i;
        }
    }
    &pop[best]
}

fn breed<T: Scalar>(
    rng: &mut StreamRng,
    pop: &[Member<T>],
    hall: &[&Expression<T>],
    cfg: &SrConfig,
    features: usize,
) -> Expression<T> {
    let limits = cfg.limits();
    let pick_parent = |rng: &mut StreamRng| -> Expression<T> {
        if !hall.is_empty() && rng.random_bool(0.1) {
            hall[rng.random_range(0..hall.len())].clone()
        } else {
            tournament(rng, pop, cfg.tournament_size).expr.clone()
        }
    };
    let p_cross = cfg.crossover_prob / (cfg.crossover_prob + cfg.mutation_prob);
    for _attempt in 0..8 {
        let parent = pick_parent(rng);
        let child = if rng.random_bool(p_cross) {
            let donor = pick_parent(rng);
            crossover(rng, &parent, &donor)
        } else {
            match rng.random_range(0..3) {
                0 => subtree_mutation(rng, &parent, limits, features, &cfg.operators),
                1 => point_mutation(rng, &parent, features, &cfg.operators),
                _ => perturb_constant(rng, &parent, features, &cfg.operators),
            }
        };
        let child = child.fold_constants();
        if limits.admits(&child) {
            return child;
        }
    }
    random_expr(rng, limits, features, &cfg.operators).fold_constants()
}

fn subtree_mutation<T: Scalar>(
    rng: &mut StreamRng,
    e: &Expression<T>,
    limits: TreeLimits,
    features: usize,
    ops: &OperatorSet,
) -> Expression<T> {
    let size = e.complexity();
    let idx = rng.random_range(0..size);
    let sub = e.node(idx).expect("index within tree");
    let depth = e.node_depth(idx).expect("index within tree");
    let room = TreeLimits {
        max_size: (limits.max_size + sub.complexity()).saturating_sub(size).max(1),
        max_depth: (limits.max_depth + 1).saturating_sub(depth).max(1),
    };
    e.replace_node(idx, random_expr(rng, room, features, ops))
}

fn point_mutation<T: Scalar>(
    rng: &mut StreamRng,
    e: &Expression<T>,
    features: usize,
    ops: &OperatorSet,
) -> Expression<T> {
    let idx = rng.random_range(0..e.complexity());
    let node = e.node(idx).expect("index within tree");
    let replacement = match node {
        Expression::Unary(_, c) if !ops.unary.is_empty() => {
            Expression::Unary(ops.unary[rng.random_range(0..ops.unary.len())], c.clone())
        }
        Expression::Binary(_, l, r) if !ops.binary.is_empty() => Expression::Binary(
            ops.binary[rng.random_range(0..ops.binary.len())],
            l.clone(),
            r.clone(),
        ),
        Expression::Constant(_) | Expression::Variable(_) => random_leaf(rng, features),
        other => other.clone(),
    };
    e.replace_node(idx, replacement)
}

fn perturb_constant<T: Scalar>(
    rng: &mut StreamRng,
    e: &Expression<T>,
    features: usize,
    ops: &OperatorSet,
) -> Expression<T> {
    let mut c = e.constants();
    if c.is_empty() {
        return point_mutation(rng, e, features, ops);
    }
    let j = rng.random_range(0..c.len());
    let z: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(rng);
    let v = c[j].as_f64();
    c[j] = T::lit(v * (1.0 + 0.5 * z) + 0.1 * z);
    e.with_constants(&c)
}

fn crossover<T: Scalar>(rng: &mut StreamRng, a: &Expression<T>, b: &Expression<T>) -> Expression<T> {
    let ia = rng.random_range(0..a.complexity());
    let ib = rng.random_range(0..b.complexity());
    let donor = b.node(ib).expect("index within tree").clone();
    a.replace_node(ia, donor)
}

/// Levenberg-Marquardt refinement of the constants of `e` on `data`, with a
/// forward-difference Jacobian. Returns the refined tree and its loss.
fn refine_constants<T: Scalar>(e: &Expression<T>, data: &Data<T>, steps: usize) -> (Expression<T>, T) {
    let n = data.n();
    let mut pred = e.eval_columns(&data.cols, n);
    let mut loss = data.loss_of_pred(&pred);
    let mut c = e.constants();
    if c.is_empty() || steps == 0 || !loss.is_finite() {
        return (e.clone(), loss);
    }
    let k = c.len();
    let mut cur = e.clone();
    let mut lambda = T::lit(1e-3);
    let fd = T::epsilon().sqrt();
    for _ in 0..steps {
        if loss == T::zero() {
            break;
        }
        let mut jac: Vec<Vec<T>> = Vec::with_capacity(k);
        for j in 0..k {
            let h = fd * c[j].abs().max(T::one());
            let mut cp = c.clone();
            cp[j] = cp[j] + h;
            let p = cur.with_constants(&cp).eval_columns(&data.cols, n);
            let col: Vec<T> = p
                .iter()
                .zip(&pred)
                .map(|(&a, &b)| {
                    let d = (a - b) / h;
                    if d.is_finite() {
                        d
                    } else {
                        T::zero()
                    }
                })
                .collect();
            jac.push(col);
        }
        let diag: Vec<T> = jac
            .iter()
            .map(|col| col.iter().fold(T::zero(), |s, &v| s + v * v))
            .collect();
        let mut rows: Vec<Vec<T>> = (0..n).map(|i| (0..k).map(|j| jac[j][i]).collect()).collect();
        let mut rhs: Vec<T> = (0..n).map(|i| data.y[i] - pred[i]).collect();
        for j in 0..k {
            let mut r = vec![T::zero(); k];
            r[j] = (lambda * diag[j].max(T::lit(1e-12))).sqrt();
            rows.push(r);
            rhs.push(T::zero());
        }
        let step = lstsq_min_norm(&rows, &rhs).coef;
        let trial: Vec<T> = c.iter().zip(&step).map(|(&a, &d)| a + d).collect();
        if trial.iter().all(|v| v.is_finite()) {
            let cand = cur.with_constants(&trial);
            let p = cand.eval_columns(&data.cols, n);
            let l = data.loss_of_pred(&p);
            if l < loss {
                c = trial;
                cur = cand;
                pred = p;
                loss = l;
                lambda = (lambda / T::lit(3.0)).max(T::lit(1e-12));
                continue;
            }
        }
        lambda = lambda * T::lit(4.0);
        if lambda > T::lit(1e12) {
            break;
        }
    }
    (cur, loss)
}
