//! Experiment suites shared by the command line and the acceptance tests.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rayon::ThreadPool;
use thiserror::Error;

use super::config::{ConfigError, GradcheckConfig, TheoryConfig, ToyConfig, TrainSection};
use crate::diff::{DiffError, Tensor};
use crate::exact::{self, ExactError};
use crate::gcrl::{self, DdpgAgent, EpochRow, GcrlError, TrainConfig};
use crate::nets::{param_grad_check, Actor, Critic, CriticDims, CriticVariant, MrnHead, NetError, Sizing};
use crate::quasimetric::{check_axioms, lift_qstar, path_closure, CheckOptions, DistanceTable, QuasimetricError, TripleMode};
use crate::toyworld::{self, CurvePoint, KRow, ToyDataset, ToyError, ToyWorld};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Exact(#[from] ExactError),
    #[error(transparent)]
    Quasimetric(#[from] QuasimetricError),
    #[error(transparent)]
    Toy(#[from] ToyError),
    #[error(transparent)]
    Gcrl(#[from] GcrlError),
    #[error("summary: {0}")]
    Summary(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

// ---------------------------------------------------------------- gradcheck

pub const GRADCHECK_HEADER: &str = "parameterization,target,checked,skipped_kinks,max_rel_err,passed";

#[derive(Debug, Clone, PartialEq)]
pub struct GradRow {
    pub parameterization: usize,
    /// Critic variant name, or `actor-loss`.
    pub target: String,
    pub checked: usize,
    pub skipped_kinks: usize,
    pub max_rel_err: f64,
    pub passed: bool,
}

const GRAD_DIMS: CriticDims = CriticDims { state: 2, action: 2, goal: 2 };

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Result<Tensor, DiffError> {
    Tensor::new(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

/// Parameter gradients of every critic's mean `Q` and of the actor loss
/// `-mean Q(s, π(s, g), g)` against central differences.
pub fn gradcheck_suite(cfg: &GradcheckConfig, pool: &ThreadPool) -> Result<Vec<GradRow>, RunError> {
    let sets: Vec<Result<Vec<GradRow>, RunError>> = pool.install(|| {
        (0..cfg.parameterizations)
            .into_par_iter()
            .map(|i| gradcheck_one(cfg, i))
            .collect()
    });
    Ok(sets.into_iter().collect::<Result<Vec<_>, _>>()?.concat())
}

fn gradcheck_one(cfg: &GradcheckConfig, i: usize) -> Result<Vec<GradRow>, RunError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(i as u64));
    let sizing = Sizing::small(cfg.width, cfg.embed);
    let mut rows = Vec::with_capacity(CriticVariant::ALL.len() + 1);
    let row = |target: String, r: crate::diff::GradCheckReport| GradRow {
        parameterization: i,
        target,
        checked: r.checked,
        skipped_kinks: r.skipped_kinks,
        max_rel_err: r.max_rel_err,
        passed: r.passed && r.checked > r.skipped_kinks,
    };
    for v in CriticVariant::ALL {
        let mut critic = Critic::new(v, GRAD_DIMS, &sizing, &mut rng);
        let (s, a, g) = (uniform(&mut rng, cfg.batch, 2)?, uniform(&mut rng, cfg.batch, 2)?, uniform(&mut rng, cfg.batch, 2)?);
        let r = param_grad_check(
            &mut critic,
            |c, t| {
                let (sv, av, gv) = (t.constant(s.clone()), t.constant(a.clone()), t.constant(g.clone()));
                let q = c.forward(t, Some(sv), av, gv)?;
                t.mean(q)
            },
            None,
            cfg.step,
            cfg.tol,
        )?;
        rows.push(row(v.name().to_string(), r));
    }
    let critic = Critic::new(CriticVariant::Mrn, GRAD_DIMS, &sizing, &mut rng);
    let mut actor = Actor::new(2, 2, vec![-0.5; 2], vec![0.5; 2], cfg.width, 2, &mut rng);
    let (s, g) = (uniform(&mut rng, cfg.batch, 2)?, uniform(&mut rng, cfg.batch, 2)?);
    let r = param_grad_check(
        &mut actor,
        |actor, t| {
            let (sv, gv) = (t.constant(s.clone()), t.constant(g.clone()));
            let a = actor.forward(t, sv, gv)?;
            t.set_frozen(true);
            let q = critic.forward(t, Some(sv), a, gv)?;
            let m = t.mean(q)?;
            t.neg(m)
        },
        None,
        cfg.step,
        cfg.tol,
    )?;
    rows.push(row("actor-loss".into(), r));
    Ok(rows)
}

pub fn gradcheck_csv(rows: &[GradRow]) -> String {
    let mut out = format!("{GRADCHECK_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.parameterization, r.target, r.checked, r.skipped_kinks, r.max_rel_err, r.passed
        ));
    }
    out
}

// ------------------------------------------------------------------- theory

pub const THEORY_HEADER: &str = "check,instance,checked,violations,worst,passed";

/// One check on one instance. `worst` is the largest triangle margin or
/// absolute discrepancy seen, whichever the check measures.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryRow {
    pub check: &'static str,
    pub instance: usize,
    pub checked: usize,
    pub violations: usize,
    pub worst: f64,
    pub passed: bool,
}

impl TheoryRow {
    fn new(check: &'static str, instance: usize, checked: usize, violations: usize, worst: f64) -> Self {
        Self { check, instance, checked, violations, worst, passed: violations == 0 }
    }
}

#[derive(Debug, Clone, Default)]
pub struct TheoryReport {
    pub rows: Vec<TheoryRow>,
}

impl TheoryReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn rows_for<'a>(&'a self, check: &'a str) -> impl Iterator<Item = &'a TheoryRow> + 'a {
        self.rows.iter().filter(move |r| r.check == check)
    }

    /// `(instances, failing instances, total violations, worst)` per check.
    pub fn totals(&self, check: &str) -> (usize, usize, usize, f64) {
        self.rows_for(check).fold((0, 0, 0, f64::NEG_INFINITY), |(n, f, v, w), r| {
            (n + 1, f + usize::from(!r.passed), v + r.violations, w.max(r.worst))
        })
    }

    pub fn checks(&self) -> Vec<&'static str> {
        let mut seen = Vec::new();
        for r in &self.rows {
            if !seen.contains(&r.check) {
                seen.push(r.check);
            }
        }
        seen
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{THEORY_HEADER}\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{},{},{}\n", r.check, r.instance, r.checked, r.violations, r.worst, r.passed));
        }
        out
    }
}

pub fn theory_suite(cfg: &TheoryConfig, pool: &ThreadPool) -> Result<TheoryReport, RunError> {
    let corpus = cfg.corpus();
    let mut report = TheoryReport::default();
    if cfg.enabled("triangle") || cfg.enabled("lift") {
        let mdps = exact::identity_corpus(&corpus);
        let per: Vec<Result<Vec<TheoryRow>, RunError>> =
            pool.install(|| mdps.par_iter().enumerate().map(|(i, m)| theory_identity_instance(cfg, i, m)).collect());
        for rows in per {
            report.rows.extend(rows?);
        }
    }
    if cfg.enabled("sup-identity") {
        let mdps = exact::many_to_one_corpus(&corpus);
        for (i, m) in mdps.iter().enumerate() {
            let r = exact::verify_sup_identity(m, cfg.tol)?;
            report.rows.push(TheoryRow::new("sup-identity", i, r.checked, usize::from(!r.passed()), r.max_discrepancy));
            report.rows.push(TheoryRow::new("sup-lower-bound", i, r.checked, r.lower_side_violations, 0.0));
        }
    }
    if cfg.enabled("mrn-head") {
        let per: Vec<Result<Vec<TheoryRow>, RunError>> =
            pool.install(|| (0..cfg.heads).into_par_iter().map(|i| head_instance(cfg, i)).collect());
        for rows in per {
            report.rows.extend(rows?);
        }
    }
    Ok(report)
}

fn theory_identity_instance(cfg: &TheoryConfig, i: usize, mdp: &exact::DiscreteGcMdp) -> Result<Vec<TheoryRow>, RunError> {
    let mut rows = Vec::new();
    let (q, tri) = exact::verify_triangle(mdp, cfg.tol)?;
    if cfg.enabled("triangle") {
        rows.push(TheoryRow::new("triangle", i, tri.triples, tri.violations, tri.worst_margin));
    }
    if cfg.enabled("lift") {
        let n = mdp.n_pairs();
        let neg = DistanceTable::from_fn(n, |a, b| -q.get(a, b));
        let lifted = lift_qstar(&neg)?;
        let ax = check_axioms(&lifted.to_distance(), CheckOptions::new(cfg.axiom_tol).triples(TripleMode::Exhaustive))?;
        rows.push(TheoryRow::new(
            "lift-axioms",
            i,
            ax.triangle.checked,
            ax.total_violations(),
            ax.triangle.worst_margin,
        ));
        let mismatches = (0..n)
            .flat_map(|x| (0..n).map(move |y| (x, y)))
            .filter(|&(x, y)| lifted.q_hat(x, lifted.embed_goal(x, y)) != q.get(x, y))
            .count();
        rows.push(TheoryRow::new("lift-embed", i, n * n, mismatches, 0.0));
        // the literal table has d(a, b̂) = ∞ next to finite d(a, b) + d(b, b̂);
        // its path closure is the smallest quasipseudometric above it
        let closed = path_closure(&lifted.to_distance());
        let cax = check_axioms(&closed, CheckOptions::new(cfg.axiom_tol).triples(TripleMode::Exhaustive))?;
        rows.push(TheoryRow::new(
            "lift-closure-axioms",
            i,
            cax.triangle.checked,
            cax.total_violations(),
            cax.triangle.worst_margin,
        ));
        let moved = (0..n)
            .flat_map(|x| (0..n).map(move |y| (x, y)))
            .filter(|&(x, y)| -closed.get(x, lifted.embed_goal(x, y)) != q.get(x, y))
            .count();
        rows.push(TheoryRow::new("lift-closure-embed", i, n * n, moved, 0.0));
    }
    Ok(rows)
}

/// Axioms of one randomly initialized MRN head on random latents, plus a
/// fault injected into its distance table that the checker must catch.
fn head_instance(cfg: &TheoryConfig, i: usize) -> Result<Vec<TheoryRow>, RunError> {
    let seed = cfg.head_seed.wrapping_add(i as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let head = MrnHead::new(
        cfg.head_latent,
        Some((cfg.head_hidden, cfg.head_embed)),
        Some((cfg.head_hidden, cfg.head_embed)),
        cfg.reduce()?,
        &mut rng,
    );
    let n = cfg.head_points;
    let pts = uniform(&mut rng, n, cfg.head_latent)?;
    let mut table = head.pairwise(&pts)?;
    let opts = CheckOptions::new(cfg.axiom_tol).finite().triples(TripleMode::Sampled { count: cfg.head_triples, seed });
    let ax = check_axioms(&table, opts)?;
    let exact_zero = (0..n).filter(|&k| table.get(k, k) != 0.0).count();
    let mut rows = vec![
        TheoryRow::new("head-identity", i, n, exact_zero, 0.0),
        TheoryRow::new("head-nonneg", i, ax.non_negativity.checked, ax.non_negativity.violations, ax.non_negativity.worst_margin),
        TheoryRow::new("head-triangle", i, ax.triangle.checked, ax.triangle.violations, ax.triangle.worst_margin),
    ];
    // raise d(a, c) above d(a, b) + d(b, c) and require a reported violation
    let (a, b, c) = (0, 1 + rng.gen_range(0..n - 2), n - 1);
    let bumped = table.get(a, b) + table.get(b, c) + 0.5;
    table.set(a, c, bumped);
    let faulty = check_axioms(&table, CheckOptions::new(cfg.axiom_tol).triples(TripleMode::Exhaustive))?;
    rows.push(TheoryRow::new("head-fault-caught", i, 1, usize::from(faulty.passed()), 0.0));
    Ok(rows)
}

// ---------------------------------------------------------------------- toy

#[derive(Debug, Clone)]
pub struct ToyRun {
    pub arch: String,
    pub eta: f64,
    pub seed: u64,
    pub k: usize,
    pub curve: Vec<CurvePoint>,
    pub best_gen_mse: f64,
    pub best_iteration: usize,
}

#[derive(Debug, Clone)]
pub struct ToyStudy {
    pub runs: Vec<ToyRun>,
    /// Approximation study rows per seed.
    pub k_rows: Vec<(u64, KRow)>,
}

pub const TOY_BEST_HEADER: &str = "arch,eta,seed,best_gen_mse,best_iteration";
pub const TOY_K_HEADER: &str = "k,seed,best_train_mse,iteration";
pub const TOY_SUMMARY_HEADER: &str = "study,arch,setting,median";

impl ToyStudy {
    pub fn median_best_gen(&self, arch: &str, eta: f64) -> Option<f64> {
        let v: Vec<f64> = self.runs.iter().filter(|r| r.arch == arch && r.eta == eta).map(|r| r.best_gen_mse).collect();
        median(&v)
    }

    pub fn median_k_train(&self, k: usize) -> Option<f64> {
        let v: Vec<f64> = self.k_rows.iter().filter(|(_, r)| r.k == k).map(|(_, r)| r.best_train_mse).collect();
        median(&v)
    }

    pub fn curves_csv(&self) -> String {
        let mut out = format!("{}\n", toyworld::CSV_HEADER);
        for r in &self.runs {
            out.push_str(&toyworld::curve_csv(&r.arch, r.eta, r.k, r.seed, &r.curve));
        }
        out
    }

    pub fn best_csv(&self) -> String {
        let mut out = format!("{TOY_BEST_HEADER}\n");
        for r in &self.runs {
            out.push_str(&format!("{},{},{},{},{}\n", r.arch, r.eta, r.seed, r.best_gen_mse, r.best_iteration));
        }
        out
    }

    pub fn k_csv(&self) -> String {
        let mut out = format!("{TOY_K_HEADER}\n");
        for (seed, r) in &self.k_rows {
            out.push_str(&format!("{},{},{},{}\n", r.k, seed, r.best_train_mse, r.iteration));
        }
        out
    }

    /// Medians over seeds: generalization per `(arch, eta)` and training
    /// error per `K`.
    pub fn summary_csv(&self, cfg: &ToyConfig) -> String {
        let mut out = format!("{TOY_SUMMARY_HEADER}\n");
        let mut archs: Vec<&str> = Vec::new();
        for r in &self.runs {
            if !archs.contains(&r.arch.as_str()) {
                archs.push(&r.arch);
            }
        }
        for arch in archs {
            for &eta in &cfg.etas {
                if let Some(m) = self.median_best_gen(arch, eta) {
                    out.push_str(&format!("gen,{arch},eta={eta},{m}\n"));
                }
            }
        }
        for &k in &cfg.ks {
            if let Some(m) = self.median_k_train(k) {
                out.push_str(&format!("train,mrn,K={k},{m}\n"));
            }
        }
        out
    }
}

/// Generalization runs over `etas × seeds × variants`, then the training
/// error study over `ks`. Each `(eta, seed)` shares one dataset across
/// variants.
pub fn toy_study(cfg: &ToyConfig, pool: &ThreadPool) -> Result<ToyStudy, RunError> {
    let variants = cfg.variants()?;
    let jobs: Vec<(f64, u64)> = cfg.etas.iter().flat_map(|&e| cfg.seeds.iter().map(move |&s| (e, s))).collect();
    let per: Vec<Result<Vec<ToyRun>, RunError>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(eta, seed)| {
                let world = ToyWorld::new(eta, cfg.grid_n)?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let data = ToyDataset::sample(&world, cfg.n_train, cfg.n_eval, &mut rng)?;
                let fit_cfg = cfg.fit_config(seed)?;
                variants
                    .iter()
                    .map(|&v| {
                        let fit = toyworld::fit_regression(v, &data, &fit_cfg)?;
                        Ok(ToyRun {
                            arch: v.name().to_string(),
                            eta,
                            seed,
                            k: if v.is_mrn() { fit_cfg.sizing.asym_k } else { 0 },
                            best_gen_mse: fit.best_gen_mse.unwrap_or(f64::NAN),
                            best_iteration: fit.best_iteration,
                            curve: fit.curve,
                        })
                    })
                    .collect()
            })
            .collect()
    });
    let mut runs = Vec::new();
    for r in per {
        runs.extend(r?);
    }
    let k_per: Vec<Result<Vec<(u64, KRow)>, RunError>> = if cfg.ks.is_empty() {
        Vec::new()
    } else {
        pool.install(|| {
            cfg.seeds
                .par_iter()
                .map(|&seed| {
                    let world = ToyWorld::new(cfg.k_eta, cfg.grid_n)?;
                    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x006b_5f73_7475_6479);
                    let data = ToyDataset::sample(&world, cfg.k_train, 0, &mut rng)?;
                    let mut fit_cfg = cfg.fit_config(seed)?;
                    fit_cfg.iterations = cfg.k_iterations;
                    let rows = toyworld::approximation_vs_k(&cfg.ks, &data, &fit_cfg)?;
                    Ok(rows.into_iter().map(|r| (seed, r)).collect())
                })
                .collect()
        })
    };
    let mut k_rows = Vec::new();
    for r in k_per {
        k_rows.extend(r?);
    }
    Ok(ToyStudy { runs, k_rows })
}

// -------------------------------------------------------------------- train

pub const SUMMARY_HEADER: &str = "arch,epoch,runs,mean_success,std_success";

/// One finished training run.
#[derive(Debug, Clone)]
pub struct RunCurve {
    pub arch: String,
    pub seed: u64,
    /// Settings shared by runs that may be aggregated together.
    pub config_key: String,
    pub rows: Vec<EpochRow>,
    pub wall_secs: f64,
}

impl RunCurve {
    pub fn csv(&self) -> String {
        format!("{}\n{}", gcrl::CSV_HEADER, gcrl::curve_csv(&self.arch, self.seed, &self.rows))
    }

    pub fn final_success(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.success_rate)
    }

    pub fn epochs_to(&self, threshold: f64) -> Option<usize> {
        gcrl::epochs_to(&self.rows, threshold)
    }
}

/// Everything in a run's settings except its variant and seed.
pub fn config_key(cfg: &TrainConfig) -> String {
    let mut c = cfg.clone();
    c.seed = 0;
    c.agent.variant = CriticVariant::Mrn;
    format!("{c:?}")
}

pub fn train_run(cfg: &TrainConfig) -> Result<(RunCurve, DdpgAgent), RunError> {
    let start = Instant::now();
    let result = gcrl::train(cfg)?;
    let curve = RunCurve {
        arch: cfg.agent.variant.name().to_string(),
        seed: cfg.seed,
        config_key: config_key(cfg),
        rows: result.curve,
        wall_secs: start.elapsed().as_secs_f64(),
    };
    Ok((curve, result.agent))
}

/// All `variants × seeds` runs of a training section, in that order.
pub fn train_grid(section: &TrainSection, pool: &ThreadPool) -> Result<Vec<(RunCurve, DdpgAgent)>, RunError> {
    let mut specs = Vec::new();
    for v in section.variants()? {
        for &seed in &section.seeds {
            specs.push(section.run_config(v, seed)?);
        }
    }
    let runs: Vec<Result<(RunCurve, DdpgAgent), RunError>> = pool.install(|| specs.par_iter().map(train_run).collect());
    runs.into_iter().collect()
}

/// Per-`(arch, epoch)` mean and population standard deviation of the
/// success rate across seeds. Architectures appear in name order.
pub fn emit_summary(curves: &[RunCurve]) -> Result<String, RunError> {
    let first = curves.first().ok_or_else(|| RunError::Summary("no runs".into()))?;
    if let Some(other) = curves.iter().find(|c| c.config_key != first.config_key) {
        return Err(RunError::Summary(format!(
            "runs {}/{} and {}/{} were produced with different settings",
            first.arch, first.seed, other.arch, other.seed
        )));
    }
    let mut by_arch: BTreeMap<&str, Vec<&RunCurve>> = BTreeMap::new();
    for c in curves {
        by_arch.entry(c.arch.as_str()).or_default().push(c);
    }
    let mut out = format!("{SUMMARY_HEADER}\n");
    for (arch, runs) in by_arch {
        let epochs = runs[0].rows.len();
        if runs.iter().any(|r| r.rows.len() != epochs) {
            return Err(RunError::Summary(format!("{arch}: runs have different epoch counts")));
        }
        for e in 0..epochs {
            let v: Vec<f64> = runs.iter().map(|r| r.rows[e].success_rate).collect();
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            out.push_str(&format!("{arch},{},{},{mean},{}\n", runs[0].rows[e].epoch, v.len(), var.sqrt()));
        }
    }
    Ok(out)
}
