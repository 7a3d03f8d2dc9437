//! Quasipseudometric axiom checks and the lift of `Q*` onto a doubled point
//! set.
//!
//! A quasipseudometric `d` satisfies `d(x,x) = 0`, `d(x,y) ≥ 0` and
//! `d(x,z) ≤ d(x,y) + d(y,z)`; symmetry is not required. Tables may hold
//! `+∞`, and `∞ + anything = ∞` on the right-hand side of the triangle
//! check, so an infinite leg never counts as a violation.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Above this many points, triangle checks sample triples instead of
/// enumerating all `n³`.
pub const EXHAUSTIVE_MAX_POINTS: usize = 64;
pub const SAMPLED_TRIPLES: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuasimetricError {
    #[error("d({i}, {j}) is NaN")]
    NaN { i: usize, j: usize },
    #[error("d({i}, {j}) is infinite where a finite value is expected")]
    Infinite { i: usize, j: usize },
    #[error("Q*({i}, {j}) = {value} is positive; optimal values under -1/0 rewards are non-positive")]
    PositiveQ { i: usize, j: usize, value: f64 },
    #[error("table of {len} values is not square")]
    NotSquare { len: usize },
}

/// Dense `n × n` table of extended non-negative reals.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceTable {
    n: usize,
    values: Vec<f64>,
}

impl DistanceTable {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self, QuasimetricError> {
        if values.len() != n * n {
            return Err(QuasimetricError::NotSquare { len: values.len() });
        }
        Ok(Self { n, values })
    }

    pub fn from_fn(n: usize, mut d: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                values.push(d(i, j));
            }
        }
        Self { n, values }
    }

    pub fn try_from_fn<E>(n: usize, mut d: impl FnMut(usize, usize) -> Result<f64, E>) -> Result<Self, E> {
        let mut values = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                values.push(d(i, j)?);
            }
        }
        Ok(Self { n, values })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.n + j] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Outcome for one axiom. A margin above zero is a violation amount; the
/// worst margin may be negative when every instance holds with slack.
#[derive(Debug, Clone, PartialEq)]
pub struct AxiomResult {
    pub checked: usize,
    pub violations: usize,
    pub worst_margin: f64,
    /// Indices of the worst instance: `[i, j]` or `[x, y, z]`.
    pub witness: Option<Vec<usize>>,
}

impl AxiomResult {
    fn new() -> Self {
        Self {
            checked: 0,
            violations: 0,
            worst_margin: f64::NEG_INFINITY,
            witness: None,
        }
    }

    fn observe(&mut self, margin: f64, tol: f64, at: &[usize]) {
        self.checked += 1;
        if margin > tol {
            self.violations += 1;
        }
        if self.witness.is_none() || margin > self.worst_margin {
            self.worst_margin = margin;
            self.witness = Some(at.to_vec());
        }
    }

    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxiomReport {
    pub points: usize,
    pub tol: f64,
    pub exhaustive: bool,
    pub non_negativity: AxiomResult,
    pub identity: AxiomResult,
    pub triangle: AxiomResult,
}

impl AxiomReport {
    pub fn passed(&self) -> bool {
        self.non_negativity.holds() && self.identity.holds() && self.triangle.holds()
    }

    pub fn total_violations(&self) -> usize {
        self.non_negativity.violations + self.identity.violations + self.triangle.violations
    }

    /// `axiom,count,worst_margin,witness` with `;`-joined witness indices.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("axiom,count,worst_margin,witness\n");
        for (name, r) in [
            ("non_negativity", &self.non_negativity),
            ("identity", &self.identity),
            ("triangle", &self.triangle),
        ] {
            let witness = r
                .witness
                .as_ref()
                .map(|w| w.iter().map(usize::to_string).collect::<Vec<_>>().join(";"))
                .unwrap_or_default();
            let _ = writeln!(out, "{name},{},{:e},{witness}", r.violations, r.worst_margin);
        }
        out
    }
}

/// How triples are chosen for the triangle check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TripleMode {
    /// All triples when `n ≤ EXHAUSTIVE_MAX_POINTS`, otherwise
    /// `SAMPLED_TRIPLES` random triples from the given seed.
    Auto { seed: u64 },
    Exhaustive,
    Sampled { count: usize, seed: u64 },
}

impl Default for TripleMode {
    fn default() -> Self {
        TripleMode::Auto { seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckOptions {
    pub tol: f64,
    /// When set, `+∞` entries are errors instead of extended values.
    pub finite_expected: bool,
    pub triples: TripleMode,
}

impl CheckOptions {
    pub fn new(tol: f64) -> Self {
        assert!(tol >= 0.0, "tolerance must be non-negative");
        Self {
            tol,
            finite_expected: false,
            triples: TripleMode::default(),
        }
    }

    pub fn finite(mut self) -> Self {
        self.finite_expected = true;
        self
    }

    pub fn triples(mut self, mode: TripleMode) -> Self {
        self.triples = mode;
        self
    }
}

/// `d(x,z) - (d(x,y) + d(y,z))` under `∞ + anything = ∞`.
pub fn triangle_margin(dxz: f64, dxy: f64, dyz: f64) -> f64 {
    if dxy == f64::INFINITY || dyz == f64::INFINITY {
        return f64::NEG_INFINITY;
    }
    if dxz == f64::INFINITY {
        return f64::INFINITY;
    }
    dxz - (dxy + dyz)
}

pub fn check_axioms(d: &DistanceTable, opts: CheckOptions) -> Result<AxiomReport, QuasimetricError> {
    let n = d.len();
    for i in 0..n {
        for j in 0..n {
            let v = d.get(i, j);
            if v.is_nan() {
                return Err(QuasimetricError::NaN { i, j });
            }
            if opts.finite_expected && v.is_infinite() {
                return Err(QuasimetricError::Infinite { i, j });
            }
        }
    }
    let tol = opts.tol;
    let mut non_negativity = AxiomResult::new();
    let mut identity = AxiomResult::new();
    for i in 0..n {
        identity.observe(d.get(i, i).abs(), tol, &[i, i]);
        for j in 0..n {
            non_negativity.observe(-d.get(i, j), tol, &[i, j]);
        }
    }

    let mut triangle = AxiomResult::new();
    let mut visit = |x: usize, y: usize, z: usize| {
        let m = triangle_margin(d.get(x, z), d.get(x, y), d.get(y, z));
        triangle.observe(m, tol, &[x, y, z]);
    };
    let exhaustive = match opts.triples {
        TripleMode::Exhaustive => true,
        TripleMode::Auto { .. } => n <= EXHAUSTIVE_MAX_POINTS,
        TripleMode::Sampled { .. } => false,
    };
    if exhaustive {
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    visit(x, y, z);
                }
            }
        }
    } else if n > 0 {
        let (count, seed) = match opts.triples {
            TripleMode::Sampled { count, seed } => (count, seed),
            TripleMode::Auto { seed } => (SAMPLED_TRIPLES, seed),
            TripleMode::Exhaustive => unreachable!(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..count {
            visit(rng.gen_range(0..n), rng.gen_range(0..n), rng.gen_range(0..n));
        }
    }

    Ok(AxiomReport {
        points: n,
        tol,
        exhaustive,
        non_negativity,
        identity,
        triangle,
    })
}

/// `Q̂*` over `Y = X ∪ X̂`. Indices `0..n` are points of `X`; `n..2n` are
/// their marked copies, `x̂ = x + n`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedTable {
    n: usize,
    q_hat: Vec<f64>,
}

impl LiftedTable {
    /// Number of base points `|X|`.
    pub fn base_len(&self) -> usize {
        self.n
    }

    pub fn hat(&self, x: usize) -> usize {
        x + self.n
    }

    pub fn q_hat(&self, a: usize, b: usize) -> f64 {
        self.q_hat[a * 2 * self.n + b]
    }

    /// Index in `Y` representing goal `y` when starting from `x`: `ŷ` if the
    /// two coincide, `y` otherwise.
    pub fn embed_goal(&self, x: usize, y: usize) -> usize {
        if x == y {
            self.hat(y)
        } else {
            y
        }
    }

    /// `-Q̂*` with `-(-∞) = +∞`.
    pub fn to_distance(&self) -> DistanceTable {
        DistanceTable {
            n: 2 * self.n,
            values: self.q_hat.iter().map(|&q| if q == 0.0 { 0.0 } else { -q }).collect(),
        }
    }
}

/// Builds `Q̂*` from a table of `-Q*` (non-negative entries):
///
/// - `Q̂*(a, a) = 0`
/// - `Q̂*(a, â) = Q*(a, a)` for `a ∈ X`
/// - `Q̂*(a, b) = Q*(a, b)` for distinct `a, b ∈ X`
/// - `-∞` otherwise
pub fn lift_qstar(neg_qstar: &DistanceTable) -> Result<LiftedTable, QuasimetricError> {
    let n = neg_qstar.len();
    for i in 0..n {
        for j in 0..n {
            let v = neg_qstar.get(i, j);
            if v.is_nan() {
                return Err(QuasimetricError::NaN { i, j });
            }
            if v < 0.0 {
                return Err(QuasimetricError::PositiveQ { i, j, value: -v });
            }
        }
    }
    let m = 2 * n;
    let mut q_hat = vec![f64::NEG_INFINITY; m * m];
    for a in 0..m {
        q_hat[a * m + a] = 0.0;
    }
    for a in 0..n {
        q_hat[a * m + a + n] = -neg_qstar.get(a, a);
        for b in 0..n {
            if a != b {
                q_hat[a * m + b] = -neg_qstar.get(a, b);
            }
        }
    }
    Ok(LiftedTable { n, q_hat })
}

/// Shortest-path closure: `d'(a, c) = min over paths of summed d`, with
/// `∞` for unreachable pairs. For non-negative `d` with zero diagonal the
/// result is a quasipseudometric, and entries already satisfying every
/// triangle through other points are unchanged.
pub fn path_closure(d: &DistanceTable) -> DistanceTable {
    let n = d.len();
    let mut out = d.clone();
    for k in 0..n {
        for i in 0..n {
            let dik = out.get(i, k);
            if dik == f64::INFINITY {
                continue;
            }
            for j in 0..n {
                let via = dik + out.get(k, j);
                if via < out.get(i, j) {
                    out.set(i, j, via);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn euclid(points: &[(f64, f64)]) -> DistanceTable {
        DistanceTable::from_fn(points.len(), |i, j| {
            let (a, b) = (points[i], points[j]);
            ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
        })
    }

    #[test]
    fn euclidean_points_have_no_violations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<(f64, f64)> = (0..10).map(|_| (rng.gen(), rng.gen())).collect();
        let r = check_axioms(&euclid(&pts), CheckOptions::new(1e-12)).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(r.exhaustive);
        assert_eq!(r.triangle.checked, 1000);
    }

    #[test]
    fn antisymmetric_difference_violates_non_negativity_only() {
        let h = [0.0, 1.0, 3.0, -2.0];
        let d = DistanceTable::from_fn(4, |i, j| h[i] - h[j]);
        let r = check_axioms(&d, CheckOptions::new(1e-12)).unwrap();
        assert!(r.identity.holds());
        assert!(!r.non_negativity.holds());
        // worst: h[3] - h[2] = -5
        assert_eq!(r.non_negativity.worst_margin, 5.0);
        assert_eq!(r.non_negativity.witness, Some(vec![3, 2]));
        // h(x)-h(z) = (h(x)-h(y)) + (h(y)-h(z)): the triangle is tight
        assert!(r.triangle.holds());
    }

    #[test]
    fn injected_violation_is_found() {
        let pts = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
        let mut d = euclid(&pts);
        d.set(0, 2, 3.0);
        let r = check_axioms(&d, CheckOptions::new(1e-9)).unwrap();
        assert!(!r.triangle.holds());
        assert_eq!(r.triangle.witness, Some(vec![0, 1, 2]));
        assert!((r.triangle.worst_margin - 1.0).abs() < 1e-12);
    }

    #[test]
    fn infinite_legs_do_not_produce_nan() {
        assert_eq!(triangle_margin(f64::INFINITY, f64::INFINITY, 1.0), f64::NEG_INFINITY);
        assert_eq!(triangle_margin(f64::INFINITY, 1.0, 2.0), f64::INFINITY);
        assert_eq!(triangle_margin(3.0, 1.0, 2.0), 0.0);
    }

    #[test]
    fn nan_and_unexpected_infinity_are_errors() {
        let d = DistanceTable::new(2, vec![0.0, f64::NAN, 1.0, 0.0]).unwrap();
        assert_eq!(check_axioms(&d, CheckOptions::new(0.0)), Err(QuasimetricError::NaN { i: 0, j: 1 }));
        let d = DistanceTable::new(2, vec![0.0, f64::INFINITY, 1.0, 0.0]).unwrap();
        assert!(check_axioms(&d, CheckOptions::new(0.0)).unwrap().passed());
        assert_eq!(
            check_axioms(&d, CheckOptions::new(0.0).finite()),
            Err(QuasimetricError::Infinite { i: 0, j: 1 })
        );
    }

    #[test]
    fn large_tables_are_sampled() {
        let pts: Vec<(f64, f64)> = (0..80).map(|i| (i as f64, 0.0)).collect();
        let r = check_axioms(&euclid(&pts), CheckOptions::new(1e-12)).unwrap();
        assert!(!r.exhaustive);
        assert_eq!(r.triangle.checked, SAMPLED_TRIPLES);
        assert!(r.passed());
    }

    #[test]
    fn lift_follows_the_four_cases() {
        // -Q* for a 2-point X with Q*(0,0) = -0.5
        let neg_q = DistanceTable::new(2, vec![0.5, 2.0, 1.0, 0.0]).unwrap();
        let l = lift_qstar(&neg_q).unwrap();
        for a in 0..4 {
            assert_eq!(l.q_hat(a, a), 0.0);
        }
        assert_eq!(l.q_hat(0, l.hat(0)), -0.5);
        assert_eq!(l.q_hat(1, l.hat(1)), 0.0);
        assert_eq!(l.q_hat(0, 1), -2.0);
        assert_eq!(l.q_hat(1, 0), -1.0);
        assert_eq!(l.q_hat(l.hat(0), 1), f64::NEG_INFINITY);
        assert_eq!(l.q_hat(0, l.hat(1)), f64::NEG_INFINITY);
        assert_eq!(l.to_distance().get(2, 1), f64::INFINITY);
        // Q̂*(x, e(y)) = Q*(x, y)
        for x in 0..2 {
            for y in 0..2 {
                assert_eq!(l.q_hat(x, l.embed_goal(x, y)), -neg_q.get(x, y));
            }
        }
    }

    #[test]
    fn lift_rejects_positive_q() {
        let neg_q = DistanceTable::new(1, vec![-0.1]).unwrap();
        assert!(matches!(lift_qstar(&neg_q), Err(QuasimetricError::PositiveQ { .. })));
    }

    #[test]
    fn csv_has_one_row_per_axiom() {
        let d = DistanceTable::new(2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let csv = check_axioms(&d, CheckOptions::new(0.0)).unwrap().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "axiom,count,worst_margin,witness");
        assert!(lines[3].starts_with("triangle,0,"));
    }

    #[test]
    fn literal_lift_breaks_the_triangle_and_closure_repairs_it() {
        // d(0, 1̂) = ∞ while d(0, 1) + d(1, 1̂) is finite
        let neg_q = DistanceTable::new(2, vec![0.5, 2.0, 1.0, 0.25]).unwrap();
        let l = lift_qstar(&neg_q).unwrap();
        let d = l.to_distance();
        let r = check_axioms(&d, CheckOptions::new(1e-12).triples(TripleMode::Exhaustive)).unwrap();
        assert!(!r.triangle.holds());
        assert_eq!(r.triangle.worst_margin, f64::INFINITY);
        let c = path_closure(&d);
        assert!(check_axioms(&c, CheckOptions::new(1e-12).triples(TripleMode::Exhaustive)).unwrap().passed());
        assert_eq!(c.get(0, l.hat(1)), 2.25);
        assert_eq!(c.get(l.hat(0), 1), f64::INFINITY);
        for x in 0..2 {
            for y in 0..2 {
                assert_eq!(c.get(x, l.embed_goal(x, y)), d.get(x, l.embed_goal(x, y)));
            }
        }
    }

}
