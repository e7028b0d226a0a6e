//! Cross-module invariant checks, run as one suite.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::decomposition::telescoping_residual;
use crate::error::{Error, Result};
use crate::processes::{
    brownian_functionals, ensemble, ensemble_functionals, self_normalized_times, time_reverse_g, v_profile,
    ProcessKind, QuenchedTables,
};
use crate::rng::{self, Domain};
use crate::tower_sim::{tower_step, FiberLaws, TowerState};
use crate::transfer::{bin_centers, duality_residual, FiberSweep, UlamCache, DENSITY_FLOOR};
use crate::wasserstein::{w_p_1d, FunctionalSpec};

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// True when the check did not apply to this configuration.
    pub skipped: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        CheckResult {
            name: name.into(),
            passed,
            skipped: false,
            detail,
        }
    }

    fn skip(name: &str, why: String) -> Self {
        CheckResult {
            name: name.into(),
            passed: true,
            skipped: true,
            detail: why,
        }
    }
}

/// Sizes used by the suite, capped so it stays quick for large configs.
#[derive(Clone, Copy, Debug)]
pub struct SuiteSize {
    pub bins: usize,
    pub n: usize,
    pub paths: usize,
}

impl SuiteSize {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        SuiteSize {
            bins: cfg.system.bins.min(1024),
            n: cfg.ensemble.n_grid.last().copied().unwrap_or(64).min(512),
            paths: cfg.ensemble.paths.clamp(8, 64),
        }
    }
}

fn random_sample(g: &mut impl Rng, len: usize, shift: f64) -> Vec<f64> {
    (0..len)
        .map(|_| {
            let z: f64 = StandardNormal.sample(g);
            shift + z * g.random_range(0.5..2.0)
        })
        .collect()
}

fn wasserstein_checks(seed: u64) -> Result<Vec<CheckResult>> {
    let mut g = rng::stream(seed, Domain::Synthetic, 0xA11);
    let (mut axioms, mut scaling, mut mono) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..50 {
        let la = g.random_range(1..40);
        let lb = g.random_range(1..40);
        let lc = g.random_range(1..40);
        let a = random_sample(&mut g, la, 0.0);
        let (sb, sc) = (g.random_range(-1.0..1.0), g.random_range(-1.0..1.0));
        let b = random_sample(&mut g, lb, sb);
        let c = random_sample(&mut g, lc, sc);
        for p in [1.0, 2.0] {
            let ab = w_p_1d(&a, &b, p)?;
            let ba = w_p_1d(&b, &a, p)?;
            let bc = w_p_1d(&b, &c, p)?;
            let ac = w_p_1d(&a, &c, p)?;
            axioms = axioms
                .max(w_p_1d(&a, &a, p)?)
                .max((ab - ba).abs())
                .max(ac - ab - bc)
                .max(-ab);
            let (k, s) = (g.random_range(-3.0..3.0), g.random_range(-5.0..5.0));
            let ka: Vec<f64> = a.iter().map(|x| k * x + s).collect();
            let kb: Vec<f64> = b.iter().map(|x| k * x + s).collect();
            scaling = scaling.max((w_p_1d(&ka, &kb, p)? - k.abs() * ab).abs() / (1.0 + ab));
        }
        let w1 = w_p_1d(&a, &b, 1.0)?;
        let w2 = w_p_1d(&a, &b, 2.0)?;
        let w4 = w_p_1d(&a, &b, 4.0)?;
        mono = mono.max(w1 - w2).max(w2 - w4);
    }
    Ok(vec![
        CheckResult::new("wasserstein-metric-axioms", axioms <= 1e-12, format!("worst violation {axioms:.3e}")),
        CheckResult::new("wasserstein-scaling", scaling <= 1e-9, format!("worst relative error {scaling:.3e}")),
        CheckResult::new("wasserstein-monotone-in-p", mono <= 1e-12, format!("worst violation {mono:.3e}")),
    ])
}

fn operator_checks(cfg: &ExperimentConfig, size: SuiteSize, cache: &UlamCache) -> Result<Vec<CheckResult>> {
    let mut setup = cfg.setup();
    setup.bins = size.bins;
    let system = crate::decomposition::system_for(cfg.system.family, cfg.driving_spec(), setup, 0, 16)?;
    let (mut rows, mut ones, mut dual) = (0.0f64, 0.0f64, 0.0f64);
    let tau = std::f64::consts::TAU;
    let psi: Vec<f64> = bin_centers(size.bins).map(|x| (tau * x).cos()).collect();
    for op in FiberSweep::new(&system, cache, setup.transfer(), 0, 8)? {
        let op = op?;
        rows = op.matrix.row_sums().iter().fold(rows, |m, s| m.max((s - 1.0).abs()));
        let p1 = op.apply(&vec![1.0; size.bins]);
        ones = p1
            .iter()
            .zip(&op.target.density)
            .filter(|(_, &h)| h > DENSITY_FLOOR)
            .fold(ones, |m, (v, _)| m.max((v - 1.0).abs()));
        dual = dual.max(duality_residual(&op, &psi, |x| (tau * x).sin() + 0.5 * (2.0 * tau * x).cos()));
    }
    let tol = 5.0 / size.bins as f64;
    Ok(vec![
        CheckResult::new("ulam-row-stochastic", rows <= 1e-12, format!("max |row sum − 1| = {rows:.3e}")),
        CheckResult::new("transfer-fixes-constants", ones <= 1e-9, format!("max |P1 − 1| = {ones:.3e}")),
        CheckResult::new("transfer-duality", dual <= tol, format!("residual {dual:.3e} (bound {tol:.3e})")),
    ])
}

fn process_checks(cfg: &ExperimentConfig, size: SuiteSize, cache: &UlamCache) -> Result<Vec<CheckResult>> {
    let mut setup = cfg.setup();
    setup.bins = size.bins;
    let system = crate::decomposition::system_for(cfg.system.family, cfg.driving_spec(), setup, 0, size.n)?;
    let mut out = Vec::new();

    let x0 = 0.5f64.sqrt() - 0.3;
    let tele = telescoping_residual(&system, cache, &cfg.observable, setup, x0, size.n)?;
    let tol = 1e-12 * size.n as f64 * (1.0 + setup.truncation as f64);
    out.push(CheckResult::new(
        "telescoping-exact",
        tele <= tol,
        format!("max residual {tele:.3e} over {} steps", size.n),
    ));

    let tables = QuenchedTables::build(&system, cache, &cfg.observable, setup, size.n, true)?;
    match self_normalized_times(&tables.sigma2) {
        Ok(t) => {
            let ok = t.windows(2).all(|w| w[0] <= w[1]) && t[0] >= 0.0 && t[t.len() - 1] == 1.0;
            out.push(CheckResult::new("time-change-monotone", ok, format!("{} nodes", t.len())));
        }
        Err(Error::DegenerateVariance(m)) => out.push(CheckResult::skip("time-change-monotone", m)),
        Err(e) => return Err(e),
    }

    let orbit = system.orbit(tables.initial_point(cfg.seed, 0), size.n)?;
    match v_profile(&tables, &orbit, size.n) {
        Ok(v) => {
            let ok = v.windows(2).all(|w| w[0] <= w[1] + 1e-15);
            out.push(CheckResult::new("v-profile-monotone", ok, format!("V_(n,n) = {:.4}", v[size.n])));
        }
        Err(Error::DegenerateVariance(m)) => out.push(CheckResult::skip("v-profile-monotone", m)),
        Err(e) => return Err(e),
    }

    match ensemble(&system, &tables, ProcessKind::SelfNormalized, size.paths.min(16), cfg.seed) {
        Ok(ens) => {
            let (mut inv, mut lip) = (0.0f64, 0.0f64);
            let g: Vec<Vec<f64>> = ens.paths.iter().map(|p| time_reverse_g(&ens.times, p).1).collect();
            for (p, gp) in ens.paths.iter().zip(&g) {
                let (t2, v2) = time_reverse_g(&time_reverse_g(&ens.times, p).0, gp);
                inv = t2
                    .iter()
                    .zip(&ens.times)
                    .chain(v2.iter().zip(p))
                    .fold(inv, |m, (a, b)| m.max((a - b).abs()));
            }
            for i in 0..ens.len() {
                for j in 0..i {
                    let d = sup_dist(&ens.paths[i], &ens.paths[j]);
                    let dg = sup_dist(&g[i], &g[j]);
                    if d > 0.0 {
                        lip = lip.max(dg / d);
                    }
                }
            }
            out.push(CheckResult::new(
                "time-reversal-involution",
                inv <= 1e-12 && lip <= 2.0 + 1e-12,
                format!("max |g∘g − id| = {inv:.3e}, Lipschitz ratio {lip:.3}"),
            ));
        }
        Err(Error::DegenerateVariance(m)) => out.push(CheckResult::skip("time-reversal-involution", m)),
        Err(e) => return Err(e),
    }

    let fs = [FunctionalSpec::ENDPOINT, FunctionalSpec::SUP, FunctionalSpec::OSCILLATION];
    let run = |threads: usize| -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        pool.install(|| {
            Ok((
                ensemble_functionals(&system, &tables, ProcessKind::Raw, size.paths, cfg.seed, &fs)?,
                brownian_functionals(size.n, size.paths, cfg.seed, 1.0, &fs),
            ))
        })
    };
    let one = run(1)?;
    let four = run(4)?;
    let same = bits(&one.0) == bits(&four.0) && bits(&one.1) == bits(&four.1);
    out.push(CheckResult::new(
        "determinism-across-workers",
        same,
        format!("{} paths, 1 vs 4 workers", size.paths),
    ));
    Ok(out)
}

fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn bits(v: &[Vec<f64>]) -> Vec<u64> {
    v.iter().flatten().map(|x| x.to_bits()).collect()
}

fn tower_checks(cfg: &ExperimentConfig) -> Result<Vec<CheckResult>> {
    let laws = FiberLaws::new(cfg.tower_spec())?;
    let law = laws.law(0)?;
    let total: f64 = law.masses.iter().sum();
    let mut g = rng::stream(cfg.seed, Domain::Tower, 0x70);
    let mut s = TowerState::at_base(&laws, 0, &mut g)?;
    let mut ok = true;
    for _ in 0..20_000 {
        s = tower_step(s, &laws, &mut g)?;
        ok &= s.level < s.ret;
    }
    Ok(vec![
        CheckResult::new(
            "tower-masses-normalized",
            (total - 1.0).abs() <= 1e-10 && law.masses[0] > 0.0 && law.masses[1] > 0.0,
            format!("sum {total:.12}, P(R=1) = {:.3e}, P(R=2) = {:.3e}", law.masses[0], law.masses[1]),
        ),
        CheckResult::new("tower-level-bound", ok, "20000 steps".into()),
    ])
}

/// Runs every check at sizes derived from `cfg`.
pub fn run_suite(cfg: &ExperimentConfig) -> Result<Vec<CheckResult>> {
    run_suite_sized(cfg, SuiteSize::from_config(cfg))
}

pub fn run_suite_sized(cfg: &ExperimentConfig, size: SuiteSize) -> Result<Vec<CheckResult>> {
    let cache = UlamCache::default();
    let mut out = wasserstein_checks(cfg.seed)?;
    out.extend(operator_checks(cfg, size, &cache)?);
    out.extend(process_checks(cfg, size, &cache)?);
    out.extend(tower_checks(cfg)?);
    Ok(out)
}

pub fn all_passed(results: &[CheckResult]) -> bool {
    results.iter().all(|r| r.passed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::DrivingConfig;
    use crate::random_system::DrivingKind;

    #[test]
    fn suite_passes_on_a_small_config() {
        let mut cfg = ExperimentConfig::new(DrivingConfig {
            kind: DrivingKind::Iid,
            alpha_lo: 0.35,
            alpha_hi: 0.65,
            theta: None,
            phase: None,
            seed: None,
        });
        cfg.seed = 11;
        let size = SuiteSize {
            bins: 256,
            n: 128,
            paths: 16,
        };
        let res = run_suite_sized(&cfg, size).unwrap();
        for r in &res {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
        assert!(res.len() >= 12);
    }
}
