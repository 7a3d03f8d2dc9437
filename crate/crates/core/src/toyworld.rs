//! Asymmetric shortest-path toy world and supervised regression onto its
//! distance.
//!
//! The unit square is discretized into `grid_n × grid_n` nodes. Nodes within
//! `eta` of any border are white and allow free movement. Interior nodes are
//! indigo: moves out of them may not decrease height (the vertical
//! coordinate). Edges connect the 8 neighbors of a node with Euclidean cost.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::diff::{Adam, DiffError, Tape, Tensor};
use crate::nets::{Critic, CriticDims, CriticVariant, Module, Sizing};
use crate::quasimetric::DistanceTable;

pub const DEFAULT_GRID_N: usize = 64;
pub const TRAIN_PAIRS: usize = 20;
pub const EVAL_PAIRS: usize = 10_000;
pub const CSV_HEADER: &str = "arch,eta,K,seed,iteration,train_mse,gen_mse";

/// Tolerance for classifying nodes on the frame boundary as white.
const FRAME_EPS: f64 = 1e-12;
const EVAL_CHUNK: usize = 2048;

/// Toy regression inputs carry no state, only a start and a goal point.
pub const TOY_DIMS: CriticDims = CriticDims { state: 0, action: 2, goal: 2 };

#[derive(Debug, Error)]
pub enum ToyError {
    #[error("eta must lie in (0, 1], got {0}")]
    Eta(f64),
    #[error("grid needs at least 2 nodes per side, got {0}")]
    Grid(usize),
    #[error("point ({0}, {1}) lies outside the unit square")]
    OutOfBounds(f64, f64),
    #[error("target for pair {0} is not finite")]
    NonFiniteTarget(usize),
    #[error("training and evaluation pairs overlap at node pair ({0}, {1})")]
    Overlap(usize, usize),
    #[error("dataset has no {0} pairs")]
    Empty(&'static str),
    #[error("K values must be strictly ascending")]
    UnsortedK,
    #[error("regression diverged at iteration {iteration}: train loss {loss}")]
    Diverged { iteration: usize, loss: f64 },
    #[error(transparent)]
    Diff(#[from] DiffError),
}

#[derive(Debug, Clone)]
pub struct ToyWorld {
    eta: f64,
    grid_n: usize,
    white: Vec<bool>,
}

const STEPS: [(isize, isize); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];

impl ToyWorld {
    pub fn new(eta: f64, grid_n: usize) -> Result<Self, ToyError> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(ToyError::Eta(eta));
        }
        if grid_n < 2 {
            return Err(ToyError::Grid(grid_n));
        }
        let h = 1.0 / (grid_n - 1) as f64;
        let white = (0..grid_n * grid_n)
            .map(|i| {
                let (x, y) = ((i % grid_n) as f64 * h, (i / grid_n) as f64 * h);
                x.min(1.0 - x).min(y).min(1.0 - y) <= eta + FRAME_EPS
            })
            .collect();
        Ok(Self { eta, grid_n, white })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn grid_n(&self) -> usize {
        self.grid_n
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.grid_n - 1) as f64
    }

    pub fn node_count(&self) -> usize {
        self.grid_n * self.grid_n
    }

    pub fn is_white(&self, node: usize) -> bool {
        self.white[node]
    }

    pub fn white_fraction(&self) -> f64 {
        self.white.iter().filter(|&&w| w).count() as f64 / self.white.len() as f64
    }

    /// Node `(column, row)`; row is the height.
    pub fn cell(&self, node: usize) -> (usize, usize) {
        (node % self.grid_n, node / self.grid_n)
    }

    pub fn coords(&self, node: usize) -> [f64; 2] {
        let (c, r) = self.cell(node);
        [c as f64 * self.spacing(), r as f64 * self.spacing()]
    }

    /// Nearest grid node.
    pub fn snap(&self, p: [f64; 2]) -> Result<usize, ToyError> {
        if !(0.0..=1.0).contains(&p[0]) || !(0.0..=1.0).contains(&p[1]) {
            return Err(ToyError::OutOfBounds(p[0], p[1]));
        }
        let scale = (self.grid_n - 1) as f64;
        let c = (p[0] * scale).round() as usize;
        let r = (p[1] * scale).round() as usize;
        Ok(r * self.grid_n + c)
    }

    /// Outgoing edges of `u` with their lengths.
    pub fn edges(&self, u: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (c, r) = self.cell(u);
        let n = self.grid_n as isize;
        let h = self.spacing();
        STEPS.iter().filter_map(move |&(dc, dr)| {
            let (nc, nr) = (c as isize + dc, r as isize + dr);
            if nc < 0 || nr < 0 || nc >= n || nr >= n {
                return None;
            }
            if !self.white[u] && dr < 0 {
                return None;
            }
            let cost = if dc != 0 && dr != 0 { h * std::f64::consts::SQRT_2 } else { h };
            Some((nr as usize * self.grid_n + nc as usize, cost))
        })
    }

    /// Shortest-path lengths from `source` to every node; `+∞` when
    /// unreachable.
    pub fn distances_from(&self, source: usize) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.node_count()];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(Entry(0.0, source));
        while let Some(Entry(d, u)) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for (v, w) in self.edges(u) {
                let nd = d + w;
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push(Entry(nd, v));
                }
            }
        }
        dist
    }

    pub fn node_distance(&self, from: usize, to: usize) -> f64 {
        self.distances_from(from)[to]
    }

    /// `d*(x0, xg)` between the grid nodes nearest to the two points.
    pub fn oracle_distance(&self, x0: [f64; 2], xg: [f64; 2]) -> Result<f64, ToyError> {
        let (a, b) = (self.snap(x0)?, self.snap(xg)?);
        Ok(self.node_distance(a, b))
    }

    /// Distances between every ordered pair of `nodes`.
    pub fn distance_table(&self, nodes: &[usize]) -> DistanceTable {
        let rows: Vec<Vec<f64>> = nodes
            .iter()
            .map(|&a| {
                let all = self.distances_from(a);
                nodes.iter().map(|&b| all[b]).collect()
            })
            .collect();
        DistanceTable::from_fn(nodes.len(), |i, j| rows[i][j])
    }

    /// Fills in targets for `(source, goal)` node pairs, running Dijkstra
    /// once per distinct source.
    pub fn distances_for(&self, pairs: &[(usize, usize)]) -> Vec<f64> {
        let mut by_source: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &(a, _)) in pairs.iter().enumerate() {
            by_source.entry(a).or_default().push(i);
        }
        let mut out = vec![0.0; pairs.len()];
        for (src, idx) in by_source {
            let d = self.distances_from(src);
            for i in idx {
                out[i] = d[pairs[i].1];
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    // min-heap on distance, ties by node index
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// One supervised example; coordinates are those of the snapped nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyPair {
    pub start: usize,
    pub goal: usize,
    pub x0: [f64; 2],
    pub xg: [f64; 2],
    pub target: f64,
}

#[derive(Debug, Clone)]
pub struct ToyDataset {
    pub train: Vec<ToyPair>,
    pub eval: Vec<ToyPair>,
}

impl ToyDataset {
    /// Checks finiteness of the targets and that no node pair occurs in
    /// both splits.
    pub fn new(train: Vec<ToyPair>, eval: Vec<ToyPair>) -> Result<Self, ToyError> {
        if train.is_empty() {
            return Err(ToyError::Empty("training"));
        }
        if let Some(i) = train.iter().chain(&eval).position(|p| !p.target.is_finite()) {
            return Err(ToyError::NonFiniteTarget(i));
        }
        let seen: HashSet<(usize, usize)> = train.iter().map(|p| (p.start, p.goal)).collect();
        if let Some(p) = eval.iter().find(|p| seen.contains(&(p.start, p.goal))) {
            return Err(ToyError::Overlap(p.start, p.goal));
        }
        Ok(Self { train, eval })
    }

    /// Uniform random start/goal points, snapped to the grid. Evaluation
    /// draws that collide with a training node pair are redrawn.
    pub fn sample<R: Rng + ?Sized>(world: &ToyWorld, n_train: usize, n_eval: usize, rng: &mut R) -> Result<Self, ToyError> {
        let draw = |rng: &mut R| -> Result<(usize, usize), ToyError> {
            let p = [rng.gen::<f64>(), rng.gen::<f64>()];
            let q = [rng.gen::<f64>(), rng.gen::<f64>()];
            Ok((world.snap(p)?, world.snap(q)?))
        };
        let train_nodes: Vec<(usize, usize)> = (0..n_train).map(|_| draw(rng)).collect::<Result<_, _>>()?;
        let seen: HashSet<(usize, usize)> = train_nodes.iter().copied().collect();
        let mut eval_nodes = Vec::with_capacity(n_eval);
        while eval_nodes.len() < n_eval {
            let pair = draw(rng)?;
            if !seen.contains(&pair) {
                eval_nodes.push(pair);
            }
        }
        Self::new(Self::label(world, &train_nodes), Self::label(world, &eval_nodes))
    }

    /// Builds pairs with oracle targets.
    pub fn label(world: &ToyWorld, nodes: &[(usize, usize)]) -> Vec<ToyPair> {
        let targets = world.distances_for(nodes);
        nodes
            .iter()
            .zip(targets)
            .map(|(&(a, b), target)| ToyPair {
                start: a,
                goal: b,
                x0: world.coords(a),
                xg: world.coords(b),
                target,
            })
            .collect()
    }
}

fn batch(pairs: &[ToyPair]) -> Result<(Tensor, Tensor, Tensor), DiffError> {
    let n = pairs.len();
    let x0 = Tensor::new(n, 2, pairs.iter().flat_map(|p| p.x0).collect())?;
    let xg = Tensor::new(n, 2, pairs.iter().flat_map(|p| p.xg).collect())?;
    let y = Tensor::new(n, 1, pairs.iter().map(|p| p.target).collect())?;
    Ok((x0, xg, y))
}

/// Mean squared error of `d_θ = -Q` on `pairs`, evaluated without a graph.
pub fn mse(critic: &Critic, pairs: &[ToyPair]) -> Result<f64, ToyError> {
    if pairs.is_empty() {
        return Err(ToyError::Empty("evaluation"));
    }
    let mut total = 0.0;
    for chunk in pairs.chunks(EVAL_CHUNK) {
        let (x0, xg, y) = batch(chunk)?;
        let q = critic.evaluate(None, &x0, &xg)?;
        total += q.data().iter().zip(y.data()).map(|(q, t)| (-q - t).powi(2)).sum::<f64>();
    }
    Ok(total / pairs.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub iterations: usize,
    pub lr: f64,
    /// Generalization error is measured every `eval_every` iterations and at
    /// the last one.
    pub eval_every: usize,
    pub sizing: Sizing,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            lr: 1e-3,
            eval_every: 25,
            sizing: Sizing::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub iteration: usize,
    pub train_mse: f64,
    /// `None` when the evaluation split is empty.
    pub gen_mse: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub critic: Critic,
    pub curve: Vec<CurvePoint>,
    pub best_gen_mse: Option<f64>,
    pub best_iteration: usize,
    /// Lowest training loss seen at any iteration.
    pub best_train_mse: f64,
    pub final_train_mse: f64,
}

/// Full-batch Adam regression of `-Q(x0, xg)` onto `d*` over the training
/// split, starting from a fresh critic seeded by `cfg.seed`.
pub fn fit_regression(variant: CriticVariant, data: &ToyDataset, cfg: &FitConfig) -> Result<FitResult, ToyError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let critic = Critic::new(variant, TOY_DIMS, &cfg.sizing, &mut rng);
    fit_critic(critic, data, cfg)
}

/// Regression from a given initial critic.
pub fn fit_critic(mut critic: Critic, data: &ToyDataset, cfg: &FitConfig) -> Result<FitResult, ToyError> {
    let (x0, xg, y) = batch(&data.train)?;
    let mut adam = Adam::new(cfg.lr);
    let eval_every = cfg.eval_every.max(1);
    let mut curve = Vec::new();
    let mut best_gen: Option<f64> = None;
    let mut best_iteration = 0;
    let mut best_train = f64::INFINITY;
    let mut last_train = f64::NAN;
    for it in 0..=cfg.iterations {
        let mut tape = Tape::new();
        let (a, g, t) = (tape.constant(x0.clone()), tape.constant(xg.clone()), tape.constant(y.clone()));
        let q = critic.forward(&mut tape, None, a, g)?;
        let d = tape.neg(q)?;
        let err = tape.sub(d, t)?;
        let sq = tape.square(err)?;
        let loss = tape.mean(sq)?;
        let train = tape.value(loss).item()?;
        if !train.is_finite() {
            return Err(ToyError::Diverged { iteration: it, loss: train });
        }
        best_train = best_train.min(train);
        last_train = train;
        if it % eval_every == 0 || it == cfg.iterations {
            let gen = if data.eval.is_empty() { None } else { Some(mse(&critic, &data.eval)?) };
            if let Some(gv) = gen {
                if best_gen.is_none_or(|b| gv < b) {
                    best_gen = Some(gv);
                    best_iteration = it;
                }
            }
            curve.push(CurvePoint { iteration: it, train_mse: train, gen_mse: gen });
        }
        if it == cfg.iterations {
            break;
        }
        tape.backward(loss)?;
        critic.collect_grads(&tape);
        adam.step(critic.params_mut());
    }
    Ok(FitResult {
        critic,
        curve,
        best_gen_mse: best_gen,
        best_iteration,
        best_train_mse: best_train,
        final_train_mse: last_train,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KRow {
    pub k: usize,
    pub best_train_mse: f64,
    pub iteration: usize,
}

/// Best training error for each asymmetric width `K` under the same budget.
/// `K = 0` is the symmetric-only head with the unwidened hidden layer, so
/// that model classes are nested.
pub fn approximation_vs_k(ks: &[usize], data: &ToyDataset, cfg: &FitConfig) -> Result<Vec<KRow>, ToyError> {
    if ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ToyError::UnsortedK);
    }
    let train_only = ToyDataset { train: data.train.clone(), eval: Vec::new() };
    ks.iter()
        .map(|&k| {
            let mut c = cfg.clone();
            let variant = if k == 0 {
                c.sizing.ablation_head_hidden = c.sizing.head_hidden;
                CriticVariant::MrnSymOnly
            } else {
                c.sizing.asym_k = k;
                CriticVariant::Mrn
            };
            let fit = fit_regression(variant, &train_only, &c)?;
            let (iteration, _) = fit
                .curve
                .iter()
                .map(|p| (p.iteration, p.train_mse))
                .fold((0, f64::INFINITY), |acc, p| if p.1 < acc.1 { p } else { acc });
            Ok(KRow { k, best_train_mse: fit.best_train_mse, iteration })
        })
        .collect()
}

/// CSV rows (no header) for one regression curve.
pub fn curve_csv(arch: &str, eta: f64, k: usize, seed: u64, curve: &[CurvePoint]) -> String {
    let mut out = String::new();
    for p in curve {
        let gen = p.gen_mse.map(|g| g.to_string()).unwrap_or_default();
        out.push_str(&format!("{arch},{eta},{k},{seed},{},{},{gen}\n", p.iteration, p.train_mse));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quasimetric::{check_axioms, CheckOptions};

    #[test]
    fn frame_geometry() {
        let w = ToyWorld::new(1.0, 16).unwrap();
        assert_eq!(w.white_fraction(), 1.0);
        let mut last = 0.0;
        for eta in [0.05, 0.1, 0.25, 0.5, 1.0] {
            let f = ToyWorld::new(eta, 32).unwrap().white_fraction();
            assert!(f >= last);
            last = f;
        }
        assert!(ToyWorld::new(0.0, 8).is_err());
        assert!(ToyWorld::new(0.3, 1).is_err());
    }

    #[test]
    fn identical_points_are_at_distance_zero() {
        let w = ToyWorld::new(0.1, 32).unwrap();
        assert_eq!(w.oracle_distance([0.4, 0.6], [0.4, 0.6]).unwrap(), 0.0);
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn free_diagonal_matches_octile_bound() {
        let w = ToyWorld::new(1.0, 64).unwrap();
        let d = w.oracle_distance([0.0, 0.0], [1.0, 1.0]).unwrap();
        assert!((1.4142..=1.5307).contains(&d), "{d}");
    }

    #[test]
    fn descending_through_indigo_costs_more() {
        let w = ToyWorld::new(0.1, 32).unwrap();
        let high = [0.5, 0.8];
        let low = [0.5, 0.2];
        let down = w.oracle_distance(high, low).unwrap();
        let up = w.oracle_distance(low, high).unwrap();
        assert!(down > up, "{down} vs {up}");
        assert!((up - 0.6).abs() < 0.05);
    }

    #[test]
    fn every_node_is_reachable() {
        let w = ToyWorld::new(0.05, 24).unwrap();
        for s in [0, 300, 575] {
            assert!(w.distances_from(s).iter().all(|d| d.is_finite()));
        }
    }

    #[test]
    fn oracle_is_a_quasipseudometric() {
        let w = ToyWorld::new(0.1, 12).unwrap();
        let nodes: Vec<usize> = (0..w.node_count()).collect();
        let r = check_axioms(&w.distance_table(&nodes), CheckOptions::new(1e-12)).unwrap();
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn outside_points_are_rejected() {
        let w = ToyWorld::new(0.5, 8).unwrap();
        assert!(matches!(w.oracle_distance([1.2, 0.0], [0.0, 0.0]), Err(ToyError::OutOfBounds(..))));
    }

    #[test]
    fn dataset_splits_are_disjoint() {
        let w = ToyWorld::new(0.25, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = ToyDataset::sample(&w, 20, 500, &mut rng).unwrap();
        let train: HashSet<_> = d.train.iter().map(|p| (p.start, p.goal)).collect();
        assert!(d.eval.iter().all(|p| !train.contains(&(p.start, p.goal))));
        let dup = d.train[0];
        assert!(matches!(ToyDataset::new(d.train.clone(), vec![dup]), Err(ToyError::Overlap(..))));
    }

    #[test]
    fn regression_reduces_training_error() {
        let w = ToyWorld::new(0.25, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = ToyDataset::sample(&w, 20, 200, &mut rng).unwrap();
        let cfg = FitConfig { iterations: 200, eval_every: 20, sizing: Sizing::small(32, 8), ..FitConfig::default() };
        let fit = fit_regression(CriticVariant::Mrn, &d, &cfg).unwrap();
        assert!(fit.final_train_mse < fit.curve[0].train_mse);
        assert_eq!(fit.curve.len(), 11);
        let best = fit.curve.iter().filter_map(|p| p.gen_mse).fold(f64::INFINITY, f64::min);
        assert_eq!(fit.best_gen_mse, Some(best));
    }

    #[test]
    fn divergence_is_reported() {
        let w = ToyWorld::new(0.25, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = ToyDataset::sample(&w, 5, 5, &mut rng).unwrap();
        let cfg = FitConfig { iterations: 50, lr: 1e300, sizing: Sizing::small(8, 4), ..FitConfig::default() };
        let r = fit_regression(CriticVariant::Monolithic, &d, &cfg);
        assert!(matches!(r, Err(ToyError::Diverged { .. }) | Err(ToyError::Diff(_))), "{r:?}");
    }

    #[test]
    fn k_must_ascend() {
        let w = ToyWorld::new(0.25, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = ToyDataset::sample(&w, 5, 5, &mut rng).unwrap();
        assert!(matches!(approximation_vs_k(&[8, 1], &d, &FitConfig::default()), Err(ToyError::UnsortedK)));
    }

    #[test]
    fn csv_rows() {
        let rows = curve_csv(
            "mrn",
            0.1,
            16,
            3,
            &[CurvePoint { iteration: 0, train_mse: 0.5, gen_mse: Some(0.25) }],
        );
        assert_eq!(rows, "mrn,0.1,16,3,0,0.5,0.25\n");
    }
}
