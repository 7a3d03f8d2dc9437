//! Exact optimal goal-conditioned values on tiny deterministic MDPs.
//!
//! Points of `X = S × A` are indexed `x = s·|A| + a`. Rewards follow the
//! sparse convention: `0` when the current pair achieves the goal, `-1`
//! otherwise, and episodes never terminate.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub const DEFAULT_TOL: f64 = 1e-10;
/// Inequality checks accept violations up to `SLACK_FACTOR · tol`.
pub const SLACK_FACTOR: f64 = 10.0;
const ITERATION_MARGIN: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExactError {
    #[error("value iteration did not converge within {cap} sweeps (residual {residual:e})")]
    NoConvergence { cap: usize, residual: f64 },
    #[error("gamma must lie in (0, 1), got {0}")]
    Gamma(f64),
    #[error("tolerance must be positive, got {0}")]
    Tolerance(f64),
    #[error("goal map is not onto: goal {0} has no preimage")]
    NotOnto(usize),
    #[error("goal map is not the identity on S×A")]
    NotIdentity,
    #[error("invalid MDP: {0}")]
    Invalid(String),
    #[error("mdp text line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Deterministic goal-conditioned MDP with goal map `M: S×A → G`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteGcMdp {
    n_states: usize,
    n_actions: usize,
    n_goals: usize,
    /// `next[x]` for every pair `x`.
    next: Vec<usize>,
    /// `goal_map[x] = M(x)`.
    goal_map: Vec<usize>,
    gamma: f64,
}

impl DiscreteGcMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        n_goals: usize,
        next: Vec<usize>,
        goal_map: Vec<usize>,
        gamma: f64,
    ) -> Result<Self, ExactError> {
        let nx = n_states * n_actions;
        if n_states == 0 || n_actions == 0 || n_goals == 0 {
            return Err(ExactError::Invalid("state, action and goal counts must be positive".into()));
        }
        if next.len() != nx || goal_map.len() != nx {
            return Err(ExactError::Invalid(format!("tables must have {nx} entries")));
        }
        if let Some(&s) = next.iter().find(|&&s| s >= n_states) {
            return Err(ExactError::Invalid(format!("next state {s} out of range")));
        }
        if let Some(&g) = goal_map.iter().find(|&&g| g >= n_goals) {
            return Err(ExactError::Invalid(format!("goal {g} out of range")));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(ExactError::Gamma(gamma));
        }
        Ok(Self {
            n_states,
            n_actions,
            n_goals,
            next,
            goal_map,
            gamma,
        })
    }

    /// MDP with `G ≡ S×A` and `M` the identity.
    pub fn with_identity_goals(n_states: usize, n_actions: usize, next: Vec<usize>, gamma: f64) -> Result<Self, ExactError> {
        let nx = n_states * n_actions;
        Self::new(n_states, n_actions, nx, next, (0..nx).collect(), gamma)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }

    pub fn n_goals(&self) -> usize {
        self.n_goals
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn pair(&self, s: usize, a: usize) -> usize {
        s * self.n_actions + a
    }

    pub fn next_state(&self, x: usize) -> usize {
        self.next[x]
    }

    pub fn goal_of(&self, x: usize) -> usize {
        self.goal_map[x]
    }

    pub fn is_identity_goal_map(&self) -> bool {
        self.n_goals == self.n_pairs() && self.goal_map.iter().enumerate().all(|(x, &g)| x == g)
    }

    /// First goal without a preimage, if any.
    pub fn missing_goal(&self) -> Option<usize> {
        let mut hit = vec![false; self.n_goals];
        for &g in &self.goal_map {
            hit[g] = true;
        }
        hit.iter().position(|h| !h)
    }

    pub fn preimage(&self, g: usize) -> Vec<usize> {
        (0..self.n_pairs()).filter(|&x| self.goal_map[x] == g).collect()
    }

    /// Serializes to the plain-text instance format read by [`FromStr`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "gc-mdp 1");
        let _ = writeln!(out, "states {}", self.n_states);
        let _ = writeln!(out, "actions {}", self.n_actions);
        let _ = writeln!(out, "goals {}", self.n_goals);
        let _ = writeln!(out, "gamma {}", self.gamma);
        for (label, table) in [("next", &self.next), ("goal_map", &self.goal_map)] {
            let _ = writeln!(out, "{label}");
            for row in table.chunks(self.n_actions) {
                let cells: Vec<String> = row.iter().map(usize::to_string).collect();
                let _ = writeln!(out, "{}", cells.join(" "));
            }
        }
        out
    }
}

/// ```text
/// gc-mdp 1
/// states <n>
/// actions <n>
/// goals <n>
/// gamma <real>
/// next
/// <one row per state: next state for each action>
/// goal_map
/// <one row per state: goal for each action>
/// ```
/// Blank lines and `#` comments are ignored.
impl FromStr for DiscreteGcMdp {
    type Err = ExactError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let mut take = |what: &str| {
            lines.next().ok_or(ExactError::Parse {
                line: 0,
                msg: format!("unexpected end of input, expected {what}"),
            })
        };
        let (ln, header) = take("header")?;
        if header != "gc-mdp 1" {
            return Err(ExactError::Parse { line: ln, msg: format!("expected `gc-mdp 1`, found `{header}`") });
        }
        let mut field = |key: &str| -> Result<(usize, String), ExactError> {
            let (ln, l) = take(key)?;
            match l.split_once(' ') {
                Some((k, v)) if k == key => Ok((ln, v.trim().to_string())),
                _ => Err(ExactError::Parse { line: ln, msg: format!("expected `{key} <value>`") }),
            }
        };
        let int = |(ln, v): (usize, String)| {
            v.parse::<usize>().map_err(|_| ExactError::Parse { line: ln, msg: format!("`{v}` is not an integer") })
        };
        let n_states = int(field("states")?)?;
        let n_actions = int(field("actions")?)?;
        let n_goals = int(field("goals")?)?;
        let (ln, g) = field("gamma")?;
        let gamma: f64 = g.parse().map_err(|_| ExactError::Parse { line: ln, msg: format!("`{g}` is not a real") })?;
        let mut table = |label: &str| -> Result<Vec<usize>, ExactError> {
            let (ln, l) = take(label)?;
            if l != label {
                return Err(ExactError::Parse { line: ln, msg: format!("expected `{label}`") });
            }
            let mut out = Vec::with_capacity(n_states * n_actions);
            for _ in 0..n_states {
                let (ln, row) = take("table row")?;
                let cells: Vec<usize> = row
                    .split_whitespace()
                    .map(str::parse)
                    .collect::<Result<_, _>>()
                    .map_err(|_| ExactError::Parse { line: ln, msg: "malformed integer".into() })?;
                if cells.len() != n_actions {
                    return Err(ExactError::Parse {
                        line: ln,
                        msg: format!("expected {n_actions} entries, found {}", cells.len()),
                    });
                }
                out.extend(cells);
            }
            Ok(out)
        };
        let next = table("next")?;
        let goal_map = table("goal_map")?;
        DiscreteGcMdp::new(n_states, n_actions, n_goals, next, goal_map, gamma)
    }
}

/// Optimal values for one goal, over every pair `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct QStarSlice {
    pub values: Vec<f64>,
    pub iterations: usize,
    /// Sup-norm change of each sweep.
    pub residuals: Vec<f64>,
    pub tol: f64,
}

/// Sweep bound for reaching `tol` from a zero start.
pub fn iteration_bound(gamma: f64, tol: f64) -> usize {
    ((tol * (1.0 - gamma)).ln() / gamma.ln()).ceil() as usize + ITERATION_MARGIN
}

/// Value iteration for `Q(x) = r(x) + γ·max_a' Q(next(x), a')` where
/// `r(x) = 0` iff `achieved(x)`. Stops when the sweep change guarantees
/// `‖Q - Q*‖∞ ≤ tol`.
pub fn value_iteration_with(
    mdp: &DiscreteGcMdp,
    achieved: impl Fn(usize) -> bool,
    tol: f64,
) -> Result<QStarSlice, ExactError> {
    if !(tol > 0.0) {
        return Err(ExactError::Tolerance(tol));
    }
    let gamma = mdp.gamma;
    let nx = mdp.n_pairs();
    let na = mdp.n_actions;
    let reward: Vec<f64> = (0..nx).map(|x| if achieved(x) { 0.0 } else { -1.0 }).collect();
    let stop = tol * (1.0 - gamma) / gamma;
    let cap = iteration_bound(gamma, tol);
    let mut q = vec![0.0; nx];
    let mut v = vec![0.0; mdp.n_states];
    let mut residuals = Vec::new();
    for it in 1..=cap {
        for (s, vs) in v.iter_mut().enumerate() {
            *vs = q[s * na..(s + 1) * na].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        }
        let mut delta: f64 = 0.0;
        for x in 0..nx {
            let updated = reward[x] + gamma * v[mdp.next[x]];
            delta = delta.max((updated - q[x]).abs());
            q[x] = updated;
        }
        residuals.push(delta);
        if delta <= stop {
            return Ok(QStarSlice {
                values: q,
                iterations: it,
                residuals,
                tol,
            });
        }
    }
    Err(ExactError::NoConvergence {
        cap,
        residual: residuals.last().copied().unwrap_or(f64::INFINITY),
    })
}

/// `Q*(·, g)` for a goal `g ∈ G`, rewarding every pair with `M(x) = g`.
pub fn value_iteration(mdp: &DiscreteGcMdp, goal: usize, tol: f64) -> Result<QStarSlice, ExactError> {
    value_iteration_with(mdp, |x| mdp.goal_map[x] == goal, tol)
}

/// `Q*(·, x_g)` for an exact pair goal, rewarding only `x = x_g`.
pub fn pair_value_iteration(mdp: &DiscreteGcMdp, target: usize, tol: f64) -> Result<QStarSlice, ExactError> {
    value_iteration_with(mdp, |x| x == target, tol)
}

/// Dense `Q*(x, goal)` over all pairs and all goals of some goal space.
#[derive(Debug, Clone, PartialEq)]
pub struct QStarTable {
    pub n_pairs: usize,
    pub n_goals: usize,
    values: Vec<f64>,
    pub tol: f64,
    pub gamma: f64,
}

impl QStarTable {
    pub fn get(&self, x: usize, goal: usize) -> f64 {
        self.values[x * self.n_goals + goal]
    }

    pub fn set(&mut self, x: usize, goal: usize, v: f64) {
        self.values[x * self.n_goals + goal] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn from_slices(n_pairs: usize, slices: Vec<QStarSlice>, tol: f64, gamma: f64) -> Self {
        let n_goals = slices.len();
        let mut values = vec![0.0; n_pairs * n_goals];
        for (g, s) in slices.iter().enumerate() {
            for x in 0..n_pairs {
                values[x * n_goals + g] = s.values[x];
            }
        }
        Self { n_pairs, n_goals, values, tol, gamma }
    }
}

/// `Q*(x, g)` for every goal of the MDP's goal space.
pub fn solve_goals(mdp: &DiscreteGcMdp, tol: f64) -> Result<QStarTable, ExactError> {
    let slices = (0..mdp.n_goals).map(|g| value_iteration(mdp, g, tol)).collect::<Result<_, _>>()?;
    Ok(QStarTable::from_slices(mdp.n_pairs(), slices, tol, mdp.gamma))
}

/// `Q*(x, x')` for every pair goal `x' ∈ S×A`.
pub fn solve_pairs(mdp: &DiscreteGcMdp, tol: f64) -> Result<QStarTable, ExactError> {
    let slices = (0..mdp.n_pairs()).map(|t| pair_value_iteration(mdp, t, tol)).collect::<Result<_, _>>()?;
    Ok(QStarTable::from_slices(mdp.n_pairs(), slices, tol, mdp.gamma))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleReport {
    pub triples: usize,
    pub violations: usize,
    /// Largest `Q*(x¹,x²) + Q*(x²,x³) - Q*(x¹,x³)`.
    pub worst_margin: f64,
    pub witness: Option<[usize; 3]>,
    pub slack: f64,
}

impl TriangleReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Checks `Q*(x¹,x²) + Q*(x²,x³) ≤ Q*(x¹,x³) + slack` over all triples of
/// a pair-goal table.
pub fn check_triangle(q: &QStarTable, slack: f64) -> TriangleReport {
    let n = q.n_pairs;
    let mut report = TriangleReport {
        triples: 0,
        violations: 0,
        worst_margin: f64::NEG_INFINITY,
        witness: None,
        slack,
    };
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                let margin = q.get(a, b) + q.get(b, c) - q.get(a, c);
                report.triples += 1;
                if margin > slack {
                    report.violations += 1;
                }
                if margin > report.worst_margin {
                    report.worst_margin = margin;
                    report.witness = Some([a, b, c]);
                }
            }
        }
    }
    report
}

/// Exhaustive triangle check of exact `Q*` on an MDP with `G ≡ S×A`.
pub fn verify_triangle(mdp: &DiscreteGcMdp, tol: f64) -> Result<(QStarTable, TriangleReport), ExactError> {
    if !mdp.is_identity_goal_map() {
        return Err(ExactError::NotIdentity);
    }
    let q = solve_pairs(mdp, tol)?;
    let report = check_triangle(&q, SLACK_FACTOR * tol);
    Ok((q, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupIdentityReport {
    pub checked: usize,
    pub max_discrepancy: f64,
    /// `(x, g)` attaining the largest discrepancy.
    pub witness: Option<(usize, usize)>,
    pub bound: f64,
    /// Number of `(x, g)` where `Q*(x, g)` fell below the best pair value.
    /// Always zero: a pair goal rewards a subset of what its goal rewards.
    pub lower_side_violations: usize,
}

impl SupIdentityReport {
    pub fn passed(&self) -> bool {
        self.max_discrepancy <= self.bound
    }
}

/// Compares `Q*(x, g)` with `max_{x': M(x') = g} Q*(x, x')` for every pair
/// and goal.
pub fn verify_sup_identity(mdp: &DiscreteGcMdp, tol: f64) -> Result<SupIdentityReport, ExactError> {
    if let Some(g) = mdp.missing_goal() {
        return Err(ExactError::NotOnto(g));
    }
    let goals = solve_goals(mdp, tol)?;
    let pairs = solve_pairs(mdp, tol)?;
    let bound = SLACK_FACTOR * tol;
    let mut report = SupIdentityReport {
        checked: 0,
        max_discrepancy: 0.0,
        witness: None,
        bound,
        lower_side_violations: 0,
    };
    for g in 0..mdp.n_goals {
        let pre = mdp.preimage(g);
        for x in 0..mdp.n_pairs() {
            let sup = pre.iter().map(|&t| pairs.get(x, t)).fold(f64::NEG_INFINITY, f64::max);
            let qg = goals.get(x, g);
            if qg < sup - bound {
                report.lower_side_violations += 1;
            }
            let d = (qg - sup).abs();
            report.checked += 1;
            if report.witness.is_none() || d > report.max_discrepancy {
                report.max_discrepancy = d;
                report.witness = Some((x, g));
            }
        }
    }
    Ok(report)
}

/// How a random instance's goal map is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GoalMapKind {
    Identity,
    /// Uniform map onto `n_goals` goals, resampled until onto.
    Onto { n_goals: usize },
    /// Exactly two pairs per goal (requires an even pair count).
    TwoToOne,
}

pub fn random_mdp<R: Rng + ?Sized>(
    rng: &mut R,
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    goals: GoalMapKind,
) -> Result<DiscreteGcMdp, ExactError> {
    let nx = n_states * n_actions;
    let next: Vec<usize> = (0..nx).map(|_| rng.gen_range(0..n_states)).collect();
    let (n_goals, goal_map) = match goals {
        GoalMapKind::Identity => (nx, (0..nx).collect()),
        GoalMapKind::Onto { n_goals } => {
            if n_goals == 0 || n_goals > nx {
                return Err(ExactError::Invalid(format!("cannot map {nx} pairs onto {n_goals} goals")));
            }
            loop {
                let m: Vec<usize> = (0..nx).map(|_| rng.gen_range(0..n_goals)).collect();
                let mut hit = vec![false; n_goals];
                m.iter().for_each(|&g| hit[g] = true);
                if hit.iter().all(|&h| h) {
                    break (n_goals, m);
                }
            }
        }
        GoalMapKind::TwoToOne => {
            if !nx.is_multiple_of(2) {
                return Err(ExactError::Invalid(format!("{nx} pairs cannot be split 2-to-1")));
            }
            let mut m: Vec<usize> = (0..nx).map(|x| x / 2).collect();
            m.shuffle(rng);
            (nx / 2, m)
        }
    };
    DiscreteGcMdp::new(n_states, n_actions, n_goals, next, goal_map, gamma)
}

/// Parameters of a reproducible instance corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusParams {
    pub seed: u64,
    pub count: usize,
    pub max_states: usize,
    pub max_actions: usize,
    pub gammas: Vec<f64>,
}

impl Default for CorpusParams {
    fn default() -> Self {
        Self {
            seed: 7,
            count: 50,
            max_states: 6,
            max_actions: 3,
            gammas: vec![0.9, 0.98],
        }
    }
}

/// Identity-goal instances with `2 ≤ |S| ≤ max_states`,
/// `1 ≤ |A| ≤ max_actions`, γ cycling through `gammas`.
pub fn identity_corpus(params: &CorpusParams) -> Vec<DiscreteGcMdp> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    (0..params.count)
        .map(|i| {
            let ns = rng.gen_range(2..=params.max_states);
            let na = rng.gen_range(1..=params.max_actions);
            let gamma = params.gammas[i % params.gammas.len()];
            random_mdp(&mut rng, ns, na, gamma, GoalMapKind::Identity).expect("valid sizes")
        })
        .collect()
}

/// Instances whose goal map is onto and not injective: at least one goal
/// has two or more preimages.
pub fn many_to_one_corpus(params: &CorpusParams) -> Vec<DiscreteGcMdp> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x005e_ed0f_90a1);
    (0..params.count)
        .map(|i| {
            let gamma = params.gammas[i % params.gammas.len()];
            loop {
                let ns = rng.gen_range(2..=params.max_states);
                let na = rng.gen_range(1..=params.max_actions);
                let nx = ns * na;
                if nx < 2 {
                    continue;
                }
                let n_goals = rng.gen_range(1..nx);
                break random_mdp(&mut rng, ns, na, gamma, GoalMapKind::Onto { n_goals }).expect("valid sizes");
            }
        })
        .collect()
}
