//! Quantitative acceptance checks. Each test prints one PASS/FAIL line to
//! stderr (uncaptured) and runs under a shared lock so wall-clock limits
//! are measured without interference from the other checks.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand_distr::{Distribution, StandardNormal};
use rdslab::config::{DrivingConfig, ExperimentConfig};
use rdslab::decomposition::{breve_bound_diagnostic, breve_decomposition, system_for, DecompositionSetup, DecompositionStream};
use rdslab::experiment::rate_report;
use rdslab::invariants::run_suite;
use rdslab::observable::Observable;
use rdslab::processes::{ensemble_functionals, mda_diagnostics, trend_ratio, v_statistics, ProcessKind, QuenchedTables};
use rdslab::random_system::{DrivingKind, DrivingSpec, MapFamily, RandomSystem};
use rdslab::rng::{self, Domain};
use rdslab::tower_sim::{renewal_check, tail_diagnostics, FiberLaws, TailSpec, TowerSpec};
use rdslab::transfer::{bin_centers, duality_residual, FiberSweep, UlamCache};
use rdslab::wasserstein::{rate_fit, w_p_1d, FunctionalSpec};

static LOCK: Mutex<()> = Mutex::new(());

const ALPHA: (f64, f64) = (0.35, 0.65);
const SEED: u64 = 1;

fn report(id: u32, ok: bool, elapsed: Duration, limit: Duration, detail: String) {
    let within = elapsed <= limit;
    let tag = if ok && within { "PASS" } else { "FAIL" };
    let line = format!(
        "{tag} criterion {id:>2}: {detail} [{:.1}s, limit {}s]\n",
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(ok, "criterion {id} failed: {detail}");
    assert!(within, "criterion {id} exceeded its runtime limit");
}

fn driving(kind: DrivingKind) -> DrivingSpec {
    match kind {
        DrivingKind::Iid => DrivingSpec::iid(ALPHA.0, ALPHA.1, SEED),
        DrivingKind::Rotation => DrivingSpec::rotation(ALPHA.0, ALPHA.1, SEED),
    }
}

fn expanding(kind: DrivingKind, setup: DecompositionSetup, n: usize) -> RandomSystem {
    system_for(MapFamily::Expanding, driving(kind), setup, 0, n).unwrap()
}

fn doubling(setup: DecompositionSetup, n: usize) -> RandomSystem {
    system_for(MapFamily::Expanding, DrivingSpec::constant(0.5), setup, 0, n).unwrap()
}

#[test]
fn criterion_01_operator_duality() {
    let _g = LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let t0 = Instant::now();
    let n = 1024;
    let setup = DecompositionSetup::new(n, 200, 0);
    let sys = expanding(DrivingKind::Iid, setup, 16);
    let cache = UlamCache::default();
    let trig: [(f64, bool); 4] = [(1.0, true), (1.0, false), (2.0, true), (3.0, false)];
    let table = |k: f64, c: bool| -> Vec<f64> {
        bin_centers(n)
            .map(|x| if c { (2.0 * PI * k * x).cos() } else { (2.0 * PI * k * x).sin() })
            .collect()
    };
    let mut worst = 0.0f64;
    for op in FiberSweep::new(&sys, &cache, setup.transfer(), 0, 16).unwrap() {
        let op = op.unwrap();
        for &(kp, cp) in &trig {
            let psi = table(kp, cp);
            for &(kf, cf) in &trig {
                let phi = move |x: f64| if cf { (2.0 * PI * kf * x).cos() } else { (2.0 * PI * kf * x).sin() };
                worst = worst.max(duality_residual(&op, &psi, phi));
            }
        }
    }
    let bound = 5.0 / n as f64;
    report(
        1,
        worst <= bound,
        t0.elapsed(),
        Duration::from_secs(10),
        format!("max duality residual {worst:.3e} <= {bound:.3e} over 16 fibers x 16 trig pairs"),
    );
}

#[test]
fn criterion_02_kernel_residual() {
    let _g = LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let t0 = Instant::now();
    let n = 2048;
    let setup = DecompositionSetup::new(n, 200, 30);
    let cache = UlamCache::default();
    let sys = expanding(DrivingKind::Iid, setup, 32);
    let obs = Observable::cos();
    let random = DecompositionStream::new(&sys, &cache, &obs, setup, 0, 32)
        .unwrap()
        .map(|s| s.unwrap().residual)
        .fold(0.0f64, f64::max);
    let dsys = doubling(setup, 4);
    let analytic = DecompositionStream::new(&dsys, &cache, &obs, setup, 0, 4)
        .unwrap()
        .map(|s| s.unwrap().residual)
        .fold(0.0f64, f64::max);
    let bound = 10.0 / n as f64;
    report(
        2,
        random <= 1e-3 && analytic <= bound,
        t0.elapsed(),
        Duration::from_secs(60),
        format!("max ||P psi||_1 {random:.3e} <= 1e-3 over 32 fibers; doubling {analytic:.3e} <= {bound:.3e}"),
    );
}

#[test]
fn criterion_03_variance_growth() {
    let _g = LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let t0 = Instant::now();
    let n = 1 << 13;
    let bins = 1024;
    let setup = DecompositionSetup::new(bins, 200, 0);
    let cache = UlamCache::default();
    let sys = doubling(setup, n);
    let tables = QuenchedTables::build(&sys, &cache, &Observable::cos(), setup, n, false).unwrap();
    let ratio = tables.sigma2.values[n] / n as f64;

    // Fourier oracle: Σ_n²/n = c_0 + 2 Σ_k (1 − k/n) c_k with
    // c_k = ∫ cos(2πx) cos(2π 2^k x) dx by fine quadrature.
    let q = 1 << 16;
    let c = |k: u32| -> f64 {
        (0..q)
            .map(|i| {
                let x = (i as f64 + 0.5) / q as f64;
                (2.0 * PI * x).cos() * (2.0 * PI * (1u64 << k) as f64 * x).cos()
            })
            .sum::<f64>()
            / q as f64
    };
    let oracle = c(0) + 2.0 * (1..12).map(|k| (1.0 - k as f64 / n as f64) * c(k)).sum::<f64>();

    let cob = Observable::coboundary(Observable::Polynomial { coeffs: vec![0.0, 0.0, 1.0] });
    let csetup = DecompositionSetup::new(bins, 200, 0);
    let csys = expanding(DrivingKind::Iid, csetup, n);
    let ctables = QuenchedTables::build(&csys, &cache, &cob, csetup, n, false).unwrap();
    let cob_ratio = ctables.sigma2.values[n] / n as f64;
    report(
        3,
        (0.45..=0.55).contains(&ratio) && (ratio - oracle).abs() <= 0.01 && cob_ratio <= 1e-2,
        t0.elapsed(),
        Duration::from_secs(60),
        format!("doubling Sigma_n^2/n = {ratio:.5} (oracle {oracle:.5}); coboundary {cob_ratio:.3e} <= 1e-2"),
    );
}

fn endpoint_clt(kind: DrivingKind, n: usize, paths: usize) -> f64 {
    let setup = DecompositionSetup::new(1024, 200, 0);
    let cache = UlamCache::default();
    let sys = expanding(kind, setup, n);
    let tables = QuenchedTables::build(&sys, &cache, &Observable::cos(), setup, n, false).unwrap();
    let sigma = tables.sigma2.values[n].sqrt();
    let raw = ensemble_functionals(&sys, &tables, ProcessKind::Raw, paths, SEED, &[FunctionalSpec::ENDPOINT]).unwrap();
    // raw endpoints are S_n/√n
    let scale = (n as f64).sqrt() / sigma;
    let z: Vec<f64> = raw[0].iter().map(|v| v * scale).collect();
    let mut g = rng::stream(SEED, Domain::Synthetic, kind as u64);
    let normal: Vec<f64> = (0..paths).map(|_| StandardNormal.sample(&mut g)).collect();
    w_p_1d(&z, &normal, 1.0).unwrap()
}

#[test]
fn criterion_04_quenched_clt() {
    let _g = LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let t0 = Instant::now();
    let (n, m) = (1 << 14, 5000);
    let iid = endpoint_clt(DrivingKind::Iid, n, m);
    let rot = endpoint_clt(DrivingKind::Rotation, n, m);
    report(
        4,
        iid <= 0.05 && rot <= 0.05,
        t0.elapsed(),
        Duration::from_secs(300),
        format!("W1(S_n/Sigma_n, N(0,1)) iid {iid:.4}, rotation {rot:.4} <= 0.05 at n = {n}, M = {m}"),
    );
}

fn v_tables(n: usize) -> (RandomSystem, QuenchedTables) {
    let setup = DecompositionSetup::new(1024, 200, 30);
    let sys = expanding(DrivingKind::Iid, setup, n);
    let tables = QuenchedTables::build(&sys, &UlamCache::default(), &Observable::cos(), setup, n, true).unwrap();
    (sys, tables)
}

const V_GRID: [usize; 6] = [256, 512, 1024, 2048, 4096, 8192];
const V_PATHS: usize = 2000;

#[test]
fn criterion_05_v_profile() {
    let _g = LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let t0 = Instant::now();
    let (sys, tables) = v_tables(8192);
    let stats = v_statistics(&sys, &tables, &V_GRID, V_PATHS, SEED).unwrap();
    let ns: Vec<f64> = V_GRID.iter().map(|&n| n as f64).collect();
    let l2: Vec<f64> = stats.iter().map(|s| s.l2_deviation).collect();
    let slope = rate_fit(&ns, &l2, None).unwrap().slope;
    report(
        5,
        slope <= -0.3,
        t0.elapsed(),
        Duration::from_secs(300),
        format!("slope of ||V_nn - 1||_2 over 2^8..2^13 = {slope:.3} <= -0.3 (values {l2:.4?})"),
    );
}

#[test]
fn criterion_06_rate() {
    let _g = LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let t0 = Instant::now();
    let mut cfg = ExperimentConfig::new(DrivingConfig {
        kind: DrivingKind::Iid,
        alpha_lo: ALPHA.0,
        alpha_hi: ALPHA.1,
        theta: None,
        phase: None,
        seed: None,
    });
    cfg.seed = SEED;
    cfg.ensemble.n_grid = (6..=13).map(|k| 1 << k).collect();
    cfg.ensemble.paths = 2000;
    let r = rate_report(&cfg).unwrap();
    let slopes: Vec<(String, f64)> = r
        .functionals
        .iter()
        .map(|f| (f.functional.clone(), f.fit.map_or(f64::NAN, |l| l.slope)))
        .collect();
    let ok = slopes.iter().all(|(_, s)| (-0.40..=-0.12).contains(s));
    report(
        6,
        ok,
        t0.elapsed(),
        Duration::from_secs(900),
        format!(
            "slopes {} in [-0.40, -0.12]; theoretical band [{:.3}, {:.3}]",
            slopes.iter().map(|(n, s)| format!("{n} {s:+.3}")).collect::<Vec<_>>().join(", "),
            r.band.0,
            r.band.1
        ),
    );
}

#[test]
fn criterion_07_secondary_decomposition() {
    let _g = LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let t0 = Instant::now();
    let setup = DecompositionSetup::new(1024, 200, 30);
    let sys = system_for(MapFamily::Expanding, driving(DrivingKind::Iid), setup, 64, 1).unwrap();
    let cache = UlamCache::default();
    let obs = Observable::cos();
    let b = breve_bound_diagnostic(&sys, &cache, &obs, setup, &[8, 16, 32, 64]).unwrap();
    let ratio = trend_ratio(&b);
    let gap = breve_decomposition(&sys, &cache, &obs, setup, 64).unwrap().stability_gap;
    report(
        7,
        ratio <= 2.0 && gap <= 1e-2,
        t0.elapsed(),
        Duration::from_secs(120),
        format!("b_n max/min {ratio:.4} <= 2; Cesaro gap at n_c = 64 {gap:.3e} <= 1e-2"),
    );
}

#[test]
fn criterion_08_martingale_array() {
    let _g = LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let t0 = Instant::now();
    let n = 8192;
    let (sys, tables) = v_tables(n);
    let mda = mda_diagnostics(&sys, &tables, n, V_PATHS, SEED + 1, &[0.5]).unwrap();
    let lindeberg = mda.lindeberg[0].1;
    // independent paths for the V-profile at the same n
    let v = &v_statistics(&sys, &tables, &[n], V_PATHS, SEED).unwrap()[0];
    let mda_l2 = (mda.v_variance + (mda.v_mean - 1.0).powi(2)).sqrt();
    let consistent = (mda_l2 - v.l2_deviation).abs() <= 0.25 * v.l2_deviation && mda_l2 <= 0.1;
    report(
        8,
        lindeberg <= 1e-3 && consistent,
        t0.elapsed(),
        Duration::from_secs(180),
        format!(
            "Lindeberg sum at eps = 0.5: {lindeberg:.3e} <= 1e-3; ||V_nn - 1||_2 {mda_l2:.4} vs {:.4} from independent paths",
            v.l2_deviation
        ),
    );
}

#[test]
fn criterion_09_tower_tails() {
    let _g = LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let t0 = Instant::now();
    let spec = TowerSpec::new(TailSpec::polynomial(6.0, 8f64.powi(6)));
    let laws = FiberLaws::new(spec).unwrap();
    let law = laws.law(0).unwrap();
    let mut g = rng::stream(SEED, Domain::Tower, 0);
    let samples: Vec<usize> = (0..1_000_000).map(|_| law.sample(&mut g)).collect();
    let fit = tail_diagnostics(&samples, 0.0).unwrap();
    let renewal = renewal_check(&laws, 1_000_000, SEED).unwrap();
    report(
        9,
        (5.4..=6.6).contains(&fit.a) && renewal.consistent(),
        t0.elapsed(),
        Duration::from_secs(60),
        format!(
            "fitted a = {:.3} in [5.4, 6.6] from {} tail points; renewal {:.4} +/- {:.4}",
            fit.a,
            fit.points.len(),
            renewal.product,
            renewal.product_se
        ),
    );
}

#[test]
fn criterion_10_invariant_suite() {
    let _g = LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let t0 = Instant::now();
    let mut cfg = ExperimentConfig::new(DrivingConfig {
        kind: DrivingKind::Iid,
        alpha_lo: ALPHA.0,
        alpha_hi: ALPHA.1,
        theta: None,
        phase: None,
        seed: None,
    });
    cfg.seed = SEED;
    let results = run_suite(&cfg).unwrap();
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
    report(
        10,
        failed.is_empty(),
        t0.elapsed(),
        Duration::from_secs(120),
        format!("{} checks, failed: {failed:?}", results.len()),
    );
}
