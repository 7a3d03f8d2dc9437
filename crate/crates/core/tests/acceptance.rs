//! Acceptance criteria 1 to 10. Each criterion is one test that prints a
//! single `PASS`/`FAIL` line, plus indented detail lines, and then asserts.
//!
//! Criteria run one at a time behind a lock so the wall-clock limits are
//! measured on an otherwise idle machine.

use std::io::Write;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::Instant;

use mrn::cli::config::{GradcheckConfig, TheoryConfig, ToyConfig, TrainSection};
use mrn::cli::runners::{self, median, RunCurve};
use mrn::gcrl::CSV_HEADER;
use mrn::nets::CriticVariant;
use mrn::quasimetric::{check_axioms, CheckOptions, TripleMode};
use mrn::toyworld::ToyWorld;
use rayon::{ThreadPool, ThreadPoolBuilder};

const GCRL_SEEDS: [u64; 5] = [100, 200, 300, 400, 500];
/// Epochs per point-mass run; the threshold itself is 50.
const GCRL_EPOCHS: usize = 25;
const GCRL_EPOCH_LIMIT: usize = 50;
const GCRL_RUN_SECS: f64 = 15.0 * 60.0;
const ABLATION_SEEDS: [u64; 3] = [100, 200, 300];
const ABLATION_EPOCHS: usize = 20;
const ABLATION_LRS: [f64; 2] = [0.001, 0.002];
/// Floor on the seed-to-seed noise band for final success rates.
const SUCCESS_NOISE_FLOOR: f64 = 0.05;

fn serial() -> MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn pool() -> ThreadPool {
    ThreadPoolBuilder::new().num_threads(1).build().unwrap()
}

/// Writes to the process stdout directly so the lines survive the test
/// harness's output capture.
fn report(n: usize, passed: bool, headline: &str, details: &[String]) {
    let status = if passed { "PASS" } else { "FAIL" };
    let mut text = format!("criterion {n:>2} {status}: {headline}\n");
    for d in details {
        text.push_str(&format!("    {d}\n"));
    }
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes()).unwrap();
    out.flush().unwrap();
}

fn theory(checks: &[&str], sym_reduce: &str) -> runners::TheoryReport {
    let cfg = TheoryConfig {
        checks: checks.iter().map(|s| s.to_string()).collect(),
        sym_reduce: sym_reduce.into(),
        ..TheoryConfig::default()
    };
    runners::theory_suite(&cfg, &pool()).unwrap()
}

fn totals_line(report: &runners::TheoryReport, check: &str) -> String {
    let (n, bad, v, worst) = report.totals(check);
    format!("{check}: {n} instances, {bad} failing, {v} violations, worst {worst:.3e}")
}

#[test]
fn criterion_01_triangle_on_exact_qstar() {
    let _g = serial();
    let start = Instant::now();
    let r = theory(&["triangle"], "mean");
    let secs = start.elapsed().as_secs_f64();
    let (n, _, violations, worst) = r.totals("triangle");
    let passed = n >= 50 && violations == 0 && secs < 60.0;
    report(
        1,
        passed,
        &format!("{n} MDPs, {violations} triangle violations at slack 1e-9, {secs:.1}s"),
        &[format!("worst margin {worst:.3e}")],
    );
    assert!(passed);
}

#[test]
fn criterion_02_lifted_qstar() {
    let _g = serial();
    let r = theory(&["lift"], "mean");
    let (n, axiom_bad, _, _) = r.totals("lift-axioms");
    let (_, embed_bad, _, _) = r.totals("lift-embed");
    let (_, closure_bad, _, _) = r.totals("lift-closure-axioms");
    let (_, closure_embed_bad, _, _) = r.totals("lift-closure-embed");
    let passed = n >= 50 && axiom_bad == 0 && embed_bad == 0;
    report(
        2,
        passed,
        &format!("{n} MDPs, axioms fail on {axiom_bad}, embedding mismatches on {embed_bad}"),
        &[
            totals_line(&r, "lift-axioms"),
            totals_line(&r, "lift-embed"),
            format!(
                "info: path closure of the lifted table: axioms fail on {closure_bad}, embedding mismatches on {closure_embed_bad}"
            ),
        ],
    );
    assert!(passed);
}

#[test]
fn criterion_03_sup_identity() {
    let _g = serial();
    let r = theory(&["sup-identity"], "mean");
    let (n, bad, _, worst) = r.totals("sup-identity");
    let (_, lower_bad, _, _) = r.totals("sup-lower-bound");
    let passed = n >= 20 && bad == 0;
    report(
        3,
        passed,
        &format!("{n} onto non-injective MDPs, {bad} with discrepancy above 1e-9, max {worst:.3e}"),
        &[format!("info: Q*(x,g) >= max over preimages is violated on {lower_bad} instances")],
    );
    assert!(passed);
}

#[test]
fn criterion_04_mrn_head_properties() {
    let _g = serial();
    let r = theory(&["mrn-head"], "mean");
    let (heads, id_bad, _, _) = r.totals("head-identity");
    let (_, neg_bad, _, _) = r.totals("head-nonneg");
    let (_, tri_bad, _, _) = r.totals("head-triangle");
    let (_, fault_missed, _, _) = r.totals("head-fault-caught");
    let passed = heads >= 100 && id_bad + neg_bad + tri_bad + fault_missed == 0;
    let norm = theory(&["mrn-head"], "norm");
    let norm_bad: usize = ["head-identity", "head-nonneg", "head-triangle", "head-fault-caught"]
        .iter()
        .map(|c| norm.totals(c).1)
        .sum();
    report(
        4,
        passed,
        &format!(
            "{heads} heads: identity fails {id_bad}, non-negativity fails {neg_bad}, triangle fails {tri_bad}, faults missed {fault_missed}"
        ),
        &[
            totals_line(&r, "head-triangle"),
            format!("info: with the plain L2 symmetric term, {norm_bad} head checks fail"),
            totals_line(&norm, "head-triangle"),
        ],
    );
    assert!(passed);
}

#[test]
fn criterion_05_gradients() {
    let _g = serial();
    let cfg = GradcheckConfig::default();
    let rows = runners::gradcheck_suite(&cfg, &pool()).unwrap();
    let failed = rows.iter().filter(|r| !r.passed).count();
    let worst = rows.iter().map(|r| r.max_rel_err).fold(0.0, f64::max);
    let mut targets: Vec<&str> = rows.iter().map(|r| r.target.as_str()).collect();
    targets.sort_unstable();
    targets.dedup();
    let passed = cfg.parameterizations >= 100 && failed == 0 && worst <= 1e-4 && targets.len() == 7;
    report(
        5,
        passed,
        &format!("{} parameterizations x {} targets, {failed} failed, max rel err {worst:.3e}", cfg.parameterizations, targets.len()),
        &[format!("targets: {}", targets.join(" "))],
    );
    assert!(passed);
}

#[test]
fn criterion_06_toy_oracle() {
    let _g = serial();
    let mut details = Vec::new();
    let mut passed = true;
    for eta in [0.1, 0.2, 0.5, 1.0] {
        let world = ToyWorld::new(eta, mrn::toyworld::DEFAULT_GRID_N).unwrap();
        // every 9th row and column, corners included
        let n = world.grid_n();
        let nodes: Vec<usize> = (0..n).step_by(9).flat_map(|r| (0..n).step_by(9).map(move |c| r * n + c)).collect();
        let table = world.distance_table(&nodes);
        let ax = check_axioms(&table, CheckOptions::new(1e-12).finite().triples(TripleMode::Exhaustive)).unwrap();
        let k = nodes.len();
        let gaps: Vec<f64> = (0..k).flat_map(|i| (0..k).map(move |j| (i, j))).map(|(i, j)| (table.get(i, j) - table.get(j, i)).abs()).collect();
        let max_gap = gaps.iter().cloned().fold(0.0, f64::max);
        let witnesses = gaps.iter().filter(|&&g| g > 1e-9).count();
        let ok = ax.passed()
            && if eta == 1.0 {
                max_gap == 0.0
            } else if eta <= 0.2 {
                witnesses > 0
            } else {
                true
            };
        passed &= ok;
        details.push(format!(
            "eta {eta}: {k} nodes, axiom violations {} at tol 1e-12, max |d(a,b)-d(b,a)| {max_gap:.4}, {witnesses} asymmetric ordered pairs",
            ax.total_violations()
        ));
    }
    report(6, passed, "Dijkstra oracle axioms, symmetry at eta 1, asymmetry at eta <= 0.2", &details);
    assert!(passed);
}

#[test]
fn criterion_07_toy_trends() {
    let _g = serial();
    let cfg = ToyConfig::default();
    let start = Instant::now();
    let study = runners::toy_study(&cfg, &pool()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let gen: Vec<f64> = cfg.etas.iter().map(|&e| study.median_best_gen("mrn", e).unwrap()).collect();
    let sym = study.median_best_gen("mrn-sym", 0.1).unwrap();
    let train: Vec<f64> = cfg.ks.iter().map(|&k| study.median_k_train(k).unwrap()).collect();
    let non_increasing = |v: &[f64]| v.windows(2).all(|w| w[1] <= w[0] * 1.1);
    let a = non_increasing(&gen);
    let b = gen[0] < sym;
    let c = non_increasing(&train);
    let passed = a && b && c && secs < 600.0 && cfg.seeds.len() == 5;
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ");
    report(
        7,
        passed,
        &format!("(a) {} (b) {} (c) {}, {secs:.0}s", ok(a), ok(b), ok(c)),
        &[
            format!("median min gen MSE over eta {:?}: {}", cfg.etas, fmt(&gen)),
            format!("eta 0.1: mrn {:.4} vs mrn-sym {sym:.4}", gen[0]),
            format!("median train MSE over K {:?}: {}", cfg.ks, fmt(&train)),
        ],
    );
    assert!(passed);
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "violated"
    }
}

fn gcrl_section(variants: &[&str], seeds: &[u64], epochs: usize, lr: f64) -> TrainSection {
    TrainSection {
        variants: variants.iter().map(|s| s.to_string()).collect(),
        seeds: seeds.to_vec(),
        epochs,
        lr,
        ..TrainSection::default()
    }
}

fn train(variants: &[&str], seeds: &[u64], epochs: usize, lr: f64) -> Vec<RunCurve> {
    let section = gcrl_section(variants, seeds, epochs, lr);
    runners::train_grid(&section, &pool()).unwrap().into_iter().map(|(c, _)| c).collect()
}

/// MRN and monolithic point-mass runs shared by criteria 8 and 9.
fn main_runs() -> &'static Vec<RunCurve> {
    static RUNS: OnceLock<Vec<RunCurve>> = OnceLock::new();
    RUNS.get_or_init(|| train(&["mrn", "monolithic"], &GCRL_SEEDS, GCRL_EPOCHS, ABLATION_LRS[0]))
}

fn epochs_to_90(c: &RunCurve) -> f64 {
    c.epochs_to(0.9).map_or(f64::INFINITY, |e| e as f64)
}

#[test]
fn criterion_08_gcrl_trend() {
    let _g = serial();
    let runs = main_runs();
    let of = |arch: &str| runs.iter().filter(|c| c.arch == arch).collect::<Vec<_>>();
    let (mrn, mono) = (of("mrn"), of("monolithic"));
    let mrn_to = median(&mrn.iter().map(|c| epochs_to_90(c)).collect::<Vec<_>>()).unwrap();
    let mono_to = median(&mono.iter().map(|c| epochs_to_90(c)).collect::<Vec<_>>()).unwrap();
    let mrn_final = median(&mrn.iter().map(|c| c.final_success()).collect::<Vec<_>>()).unwrap();
    let slowest = runs.iter().map(|c| c.wall_secs).fold(0.0, f64::max);
    let within = mrn_final >= 0.9 && mrn_to <= GCRL_EPOCH_LIMIT as f64;
    let passed = mrn_to <= mono_to && within && slowest < GCRL_RUN_SECS;
    let mut details = vec![format!(
        "median final success: mrn {mrn_final:.2} after {GCRL_EPOCHS} epochs; slowest run {slowest:.0}s"
    )];
    for c in runs {
        details.push(format!(
            "{} seed {}: 90% at epoch {}, final {:.2}, {:.0}s",
            c.arch,
            c.seed,
            c.epochs_to(0.9).map_or("never".into(), |e| e.to_string()),
            c.final_success(),
            c.wall_secs
        ));
    }
    report(8, passed, &format!("median epochs to 90%: mrn {mrn_to} vs monolithic {mono_to}"), &details);
    assert!(passed);
}

#[test]
fn criterion_09_ablations() {
    let _g = serial();
    let mut passed = true;
    let mut details = Vec::new();
    for lr in ABLATION_LRS {
        let mut curves = train(&["mrn-sym", "mrn-asym", "mrn-sag"], &ABLATION_SEEDS, ABLATION_EPOCHS, lr);
        if lr == ABLATION_LRS[0] {
            // the shared runs are longer; their prefix is the same run
            curves.extend(main_runs().iter().filter(|c| c.arch == "mrn" && ABLATION_SEEDS.contains(&c.seed)).map(|c| {
                let mut c = c.clone();
                c.rows.truncate(ABLATION_EPOCHS);
                c
            }));
        } else {
            curves.extend(train(&["mrn"], &ABLATION_SEEDS, ABLATION_EPOCHS, lr));
        }
        let finite = curves
            .iter()
            .all(|c| c.rows.len() == ABLATION_EPOCHS && c.rows.iter().all(|r| r.critic_loss.is_finite() && r.actor_loss.is_finite()));
        let finals = |arch: &str| curves.iter().filter(|c| c.arch == arch).map(|c| c.final_success()).collect::<Vec<_>>();
        let mrn = finals("mrn");
        let mrn_med = median(&mrn).unwrap();
        let mean = mrn.iter().sum::<f64>() / mrn.len() as f64;
        let spread = (mrn.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / mrn.len() as f64).sqrt();
        let noise = spread.max(SUCCESS_NOISE_FLOOR);
        let mut line = format!("lr {lr}: no numeric failure {}, mrn median {mrn_med:.2}, noise {noise:.2}", ok(finite));
        let mut ok_lr = finite;
        for arch in ["mrn-sym", "mrn-asym", "mrn-sag"] {
            let m = median(&finals(arch)).unwrap();
            if arch != "mrn-sag" && m > mrn_med + noise {
                ok_lr = false;
            }
            line.push_str(&format!(", {arch} {m:.2}"));
        }
        passed &= ok_lr;
        details.push(line);
    }
    report(9, passed, "ablations train cleanly and neither single term beats MRN beyond noise", &details);
    assert!(passed);
}

#[test]
fn criterion_10_determinism() {
    let _g = serial();
    let gcrl = gcrl_section(&["mrn"], &[7], 2, 0.001);
    let gcrl = TrainSection { cycles_per_epoch: 1, episodes_per_cycle: 10, eval_rollouts: 20, ..gcrl };
    let once = || {
        let curves: Vec<RunCurve> = runners::train_grid(&gcrl, &pool()).unwrap().into_iter().map(|(c, _)| c).collect();
        (curves[0].csv(), runners::emit_summary(&curves).unwrap())
    };
    let (a, b) = (once(), once());
    let toy = ToyConfig { etas: vec![0.1], seeds: vec![7], iterations: 30, n_eval: 200, ks: vec![0, 4], k_iterations: 30, k_train: 30, ..ToyConfig::default() };
    let toy_once = || {
        let s = runners::toy_study(&toy, &pool()).unwrap();
        (s.curves_csv(), s.best_csv(), s.k_csv(), s.summary_csv(&toy))
    };
    let (c, d) = (toy_once(), toy_once());
    let theory_once = || theory(&["triangle", "sup-identity"], "mean").to_csv();
    let grad = GradcheckConfig { parameterizations: 3, ..GradcheckConfig::default() };
    let grad_once = || runners::gradcheck_csv(&runners::gradcheck_suite(&grad, &pool()).unwrap());
    let checks = [
        ("train curve + summary", a == b && a.0.starts_with(CSV_HEADER)),
        ("toy csvs", c == d),
        ("theory csv", theory_once() == theory_once()),
        ("gradcheck csv", grad_once() == grad_once()),
    ];
    let passed = checks.iter().all(|(_, same)| *same);
    let details: Vec<String> = checks.iter().map(|(what, same)| format!("{what}: {}", if *same { "identical" } else { "differs" })).collect();
    report(10, passed, "repeated seeded runs give byte-identical CSVs", &details);
    assert!(passed);
}

#[test]
fn mrn_variant_names_are_stable() {
    for v in ["mrn", "monolithic", "mrn-sym", "mrn-asym", "mrn-sag"] {
        let parsed: CriticVariant = v.parse().unwrap();
        assert_eq!(parsed.name(), v);
    }
}
