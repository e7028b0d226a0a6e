//! End-to-end experiments behind the command-line subcommands.
//!
//! Every file written here starts with the tool version and the config hash:
//! a `#` comment line for CSV, `tool_version` and `config_hash` keys for JSON.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use crate::config::{ExperimentConfig, OutputFormat};
use crate::decomposition::{breve_bound_diagnostic, breve_decomposition, DecompositionStream};
use crate::error::{Error, Result};
use crate::invariants::{all_passed, run_suite, CheckResult};
use crate::processes::{
    brownian_ensemble, brownian_functionals, ensemble, ensemble_functionals, PathEnsemble, ProcessKind,
    QuenchedTables,
};
use crate::rng::{self, Domain};
use crate::tower_sim::{decay_estimate, renewal_check, tail_diagnostics, write_tail_csv, FiberLaws};
use crate::transfer::{bin_centers, l1_norm, UlamCache};
use crate::wasserstein::{rate_with_bootstrap, FunctionalSamples, WassersteinReport};

/// Cesàro length and boundedness grid of the secondary-decomposition report.
pub const CESARO_LENGTH: usize = 64;
pub const BREVE_GRID: [usize; 4] = [8, 16, 32, 64];
/// Fibers whose full tables go into the decomposition CSV.
pub const EXPORTED_FIBERS: usize = 16;

/// What a command produced.
#[derive(Clone, Debug, Default)]
pub struct RunOutput {
    pub files: Vec<PathBuf>,
    /// Human-readable lines for the terminal.
    pub lines: Vec<String>,
    /// Set by the invariant suite when a check fails.
    pub failed: bool,
}

/// Process exit code for an error: 2 config, 4 numeric degeneracy, 1 other.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } => 2,
        Error::DegenerateVariance(_) => 4,
        _ => 1,
    }
}

struct Out<'a> {
    dir: &'a Path,
    hash: String,
    files: Vec<PathBuf>,
}

impl<'a> Out<'a> {
    fn new(cfg: &'a ExperimentConfig) -> Result<Self> {
        fs::create_dir_all(&cfg.out)?;
        Ok(Out {
            dir: &cfg.out,
            hash: cfg.hash(),
            files: Vec::new(),
        })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        let f = File::create(&path)?;
        self.files.push(path);
        Ok(BufWriter::new(f))
    }

    fn csv(&mut self, name: &str) -> Result<BufWriter<File>> {
        let mut w = self.create(name)?;
        writeln!(w, "# rdslab {} config {}", crate::VERSION, self.hash)?;
        Ok(w)
    }

    fn json<T: Serialize>(&mut self, name: &str, body: &T) -> Result<()> {
        let mut value = serde_json::to_value(body)?;
        if let Some(m) = value.as_object_mut() {
            m.insert("tool_version".into(), json!(crate::VERSION));
            m.insert("config_hash".into(), json!(self.hash));
        }
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, &value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    fn ensemble(&mut self, ens: &PathEnsemble, format: OutputFormat) -> Result<()> {
        let stem = format!("ensemble_{}", ens.kind.name().replace('-', "_"));
        match format {
            OutputFormat::Csv => {
                let mut w = self.create(&format!("{stem}.csv"))?;
                ens.write_csv(&mut w, &self.hash)?;
                w.flush()?;
            }
            OutputFormat::Json => self.json(&format!("{stem}.json"), ens)?,
        }
        Ok(())
    }
}

fn largest_n(cfg: &ExperimentConfig) -> usize {
    *cfg.ensemble.n_grid.last().expect("validated nonempty grid")
}

/// Raw, self-normalized and Brownian ensembles at the largest grid point,
/// plus the `Σ_n²/n` trace over the grid.
pub fn simulate(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let mut out = Out::new(cfg)?;
    let n = largest_n(cfg);
    let cache = UlamCache::default();
    let system = cfg.system(n)?;
    let tables = QuenchedTables::build(&system, &cache, &cfg.observable, cfg.setup(), n, false)?;
    let mut lines = Vec::new();
    let mut w = out.csv("sigma2_trace.csv")?;
    writeln!(w, "n,sigma2,sigma2_over_n")?;
    for &k in &cfg.ensemble.n_grid {
        let s = tables.sigma2.values[k];
        writeln!(w, "{k},{s},{}", s / k as f64)?;
        lines.push(format!("n = {k:>7}  Σ²/n = {:.6}", s / k as f64));
    }
    w.flush()?;
    let m = cfg.ensemble.paths;
    out.ensemble(&ensemble(&system, &tables, ProcessKind::Raw, m, cfg.seed)?, cfg.format)?;
    out.ensemble(&ensemble(&system, &tables, ProcessKind::SelfNormalized, m, cfg.seed)?, cfg.format)?;
    out.ensemble(&brownian_ensemble(n, m, cfg.seed, 1.0), cfg.format)?;
    Ok(RunOutput {
        files: out.files,
        lines,
        failed: false,
    })
}

#[derive(Serialize)]
struct DecompositionReport {
    n: usize,
    bins: usize,
    truncation: usize,
    max_residual: f64,
    mean_residual: f64,
    term_norms: Vec<f64>,
    cesaro_length: usize,
    breve_stability_gap: f64,
    breve_residual: f64,
    breve_mean: f64,
    breve_grid: Vec<usize>,
    breve_bounds: Vec<f64>,
}

/// Primary decomposition over fibers `0..n` with the secondary certificates.
pub fn decompose(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let mut out = Out::new(cfg)?;
    let n = largest_n(cfg);
    let setup = cfg.setup();
    let cache = UlamCache::default();
    let system = cfg.system_with_history(CESARO_LENGTH, n)?;
    let mut stream = DecompositionStream::new(&system, &cache, &cfg.observable, setup, 0, n as i64)?;
    let mut tables = out.csv("decomposition.csv")?;
    writeln!(tables, "fiber,bin_center,chi,psi")?;
    let mut per_fiber = out.csv("residuals.csv")?;
    writeln!(per_fiber, "fiber,alpha,mean,kernel_residual")?;
    let (mut worst, mut total) = (0.0f64, 0.0f64);
    let mut h0 = None;
    for step in &mut stream {
        let step = step?;
        if step.index == 0 {
            h0 = Some(step.op.source.density.clone());
        }
        if (step.index as usize) < EXPORTED_FIBERS {
            for ((x, c), p) in bin_centers(setup.bins).zip(&step.chi).zip(&step.psi) {
                writeln!(tables, "{},{x},{c},{p}", step.index)?;
            }
        }
        writeln!(per_fiber, "{},{},{},{}", step.index, step.op.fiber.alpha, step.mean, step.residual)?;
        worst = worst.max(step.residual);
        total += step.residual;
    }
    tables.flush()?;
    per_fiber.flush()?;
    let h0 = h0.expect("fiber 0 visited");
    let term_norms: Vec<f64> = stream
        .first_terms()
        .map(|ts| ts.iter().map(|t| l1_norm(t, &h0)).collect())
        .unwrap_or_default();
    let sec = breve_decomposition(&system, &cache, &cfg.observable, setup, CESARO_LENGTH)?;
    let bounds = breve_bound_diagnostic(&system, &cache, &cfg.observable, setup, &BREVE_GRID)?;
    let report = DecompositionReport {
        n,
        bins: setup.bins,
        truncation: setup.truncation,
        max_residual: worst,
        mean_residual: total / n as f64,
        term_norms,
        cesaro_length: CESARO_LENGTH,
        breve_stability_gap: sec.stability_gap,
        breve_residual: sec.residual,
        breve_mean: sec.phi_breve_mean,
        breve_grid: BREVE_GRID.to_vec(),
        breve_bounds: bounds,
    };
    out.json("decomposition_report.json", &report)?;
    let lines = vec![
        format!("kernel residual: max {worst:.3e}, mean {:.3e}", report.mean_residual),
        format!("secondary Cesàro gap at n_c = {CESARO_LENGTH}: {:.3e}", report.breve_stability_gap),
        format!("b_n over {:?}: {:?}", BREVE_GRID, report.breve_bounds),
    ];
    Ok(RunOutput {
        files: out.files,
        lines,
        failed: false,
    })
}

/// Functional samples of the self-normalized and Brownian ensembles at every
/// grid point.
pub fn rate_samples(cfg: &ExperimentConfig) -> Result<Vec<Vec<FunctionalSamples>>> {
    let fs = cfg.functionals();
    let cache = UlamCache::default();
    let system = cfg.system(largest_n(cfg))?;
    let m = cfg.ensemble.paths;
    let mut per_functional: Vec<Vec<FunctionalSamples>> = vec![Vec::new(); fs.len()];
    for &n in &cfg.ensemble.n_grid {
        let tables = QuenchedTables::build(&system, &cache, &cfg.observable, cfg.setup(), n, false)?;
        let a = ensemble_functionals(&system, &tables, ProcessKind::SelfNormalized, m, cfg.seed, &fs)?;
        let b = brownian_functionals(n, m, cfg.seed, 1.0, &fs);
        for ((dst, a), b) in per_functional.iter_mut().zip(a).zip(b) {
            dst.push(FunctionalSamples { n, a, b });
        }
    }
    Ok(per_functional)
}

/// Distances between self-normalized and Brownian functionals over the grid,
/// with fitted rates and the theoretical band.
pub fn rate_report(cfg: &ExperimentConfig) -> Result<WassersteinReport> {
    cfg.validate_rate()?;
    let fs = cfg.functionals();
    let samples = rate_samples(cfg)?;
    let rates = fs
        .iter()
        .zip(&samples)
        .map(|(&f, s)| rate_with_bootstrap(f, s, cfg.rate.p, cfg.rate.bootstrap, cfg.seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(WassersteinReport::new(cfg.rate.p, cfg.effective_q(), cfg.hash(), rates))
}

pub fn rate(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let report = rate_report(cfg)?;
    let mut out = Out::new(cfg)?;
    let mut w = out.create("rate_report.json")?;
    writeln!(w, "{}", report.to_json()?)?;
    w.flush()?;
    if cfg.format == OutputFormat::Csv {
        let mut w = out.create("rate_report.csv")?;
        report.write_csv(&mut w)?;
        w.flush()?;
    }
    let mut lines = vec![format!(
        "theoretical band for q = {}: [{:.4}, {:.4}]",
        report.q, report.band.0, report.band.1
    )];
    for f in &report.functionals {
        let slope = f.fit.map_or(f64::NAN, |l| l.slope);
        let ci = f.slope_ci.unwrap_or((f64::NAN, f64::NAN));
        lines.push(format!("{:<12} slope {slope:+.4}  95% CI [{:+.4}, {:+.4}]", f.functional, ci.0, ci.1));
    }
    Ok(RunOutput {
        files: out.files,
        lines,
        failed: false,
    })
}

pub fn invariants(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let results: Vec<CheckResult> = run_suite(cfg)?;
    let mut out = Out::new(cfg)?;
    out.json("invariants.json", &json!({ "checks": results }))?;
    let lines = results
        .iter()
        .map(|r| {
            let tag = if r.skipped { "SKIP" } else if r.passed { "PASS" } else { "FAIL" };
            format!("{tag} {:<28} {}", r.name, r.detail)
        })
        .collect();
    Ok(RunOutput {
        files: out.files,
        lines,
        failed: !all_passed(&results),
    })
}

pub fn tower(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let t = &cfg.tower;
    let laws = FiberLaws::new(cfg.tower_spec())?;
    let law = laws.law(0)?;
    let mut g = rng::stream(cfg.seed, Domain::Tower, u64::MAX - 1);
    let samples: Vec<usize> = (0..t.samples).map(|_| law.sample(&mut g)).collect();
    let fit = tail_diagnostics(&samples, t.tail.b)?;
    let renewal = renewal_check(&laws, t.renewal_steps, cfg.seed)?;
    let decay = decay_estimate(&laws, t.observable, t.observable, &t.lags, t.paths, cfg.seed)?;
    let mut out = Out::new(cfg)?;
    let mut w = out.create("tail.csv")?;
    write_tail_csv(&samples, &mut w, &out.hash)?;
    w.flush()?;
    let mut w = out.csv("decay.csv")?;
    writeln!(w, "lag,covariance,std_err")?;
    for ((l, c), s) in decay.lags.iter().zip(&decay.covariance).zip(&decay.std_err) {
        writeln!(w, "{l},{c},{s}")?;
    }
    w.flush()?;
    out.json(
        "tower_report.json",
        &json!({ "tail": fit, "renewal": renewal, "decay": decay, "analytic_mean": law.mean }),
    )?;
    let lines = vec![
        format!("fitted tail exponent a = {:.3} (spec {})", fit.a, t.tail.a),
        format!(
            "renewal: frequency × E[R] = {:.4} ± {:.4}{}",
            renewal.product,
            renewal.product_se,
            if renewal.consistent() { "" } else { "  (inconsistent)" }
        ),
        format!("decay: {} resolved lags, fit {:?}", decay.resolved.len(), decay.fit.map(|f| f.slope)),
    ];
    Ok(RunOutput {
        files: out.files,
        lines,
        failed: false,
    })
}
