//! Birkhoff sums, variance profiles and polygonal path processes.
//!
//! Everything here is quenched: a [`QuenchedTables`] is built once for a
//! fixed driving realization over fibers `0..n`, then any number of orbits
//! are sampled from `μ_0` and turned into paths.
//!
//! Path conventions: the raw process `W_n` has nodes `(k/n, S_k/√n)`; the
//! self-normalized process `W̄_n` has nodes `(R_k/R_n, S_k/√R_n)` where `R` is
//! the running maximum of the variance profile `Σ_k²`. Both start at 0 and are
//! affine between nodes.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decomposition::{DecompositionSetup, DecompositionStream};
use crate::error::{Error, Result};
use crate::observable::Observable;
use crate::random_system::{IntervalMap, RandomSystem};
use crate::rng::{self, Domain};
use crate::transfer::{bin_of, quad, FiberMeasure, UlamCache};
use crate::wasserstein::{w_p_1d, FunctionalSpec};

/// Relative size below which a variance increment counts as degenerate.
pub const DEGENERATE_INCREMENT: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileMethod {
    MonteCarlo,
    Operator,
}

/// `Σ_k²` for `k = 0..=n` (`values[0] = 0`) with its running maximum.
#[derive(Clone, Debug, Serialize)]
pub struct VarianceProfile {
    pub method: ProfileMethod,
    pub values: Vec<f64>,
    pub running_max: Vec<f64>,
    /// Monte Carlo standard errors; empty for the operator method.
    pub std_err: Vec<f64>,
    pub samples: usize,
}

impl VarianceProfile {
    pub fn from_values(method: ProfileMethod, values: Vec<f64>) -> Self {
        let mut running_max = Vec::with_capacity(values.len());
        let mut m = 0.0f64;
        for &v in &values {
            m = m.max(v);
            running_max.push(m);
        }
        VarianceProfile {
            method,
            values,
            running_max,
            std_err: Vec::new(),
            samples: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.values.len() - 1
    }

    /// The normalizing variance `R_n`.
    pub fn total(&self) -> f64 {
        *self.running_max.last().expect("nonempty profile")
    }

    /// Largest gap between the running maximum and the raw profile.
    pub fn monotonicity_gap(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.running_max)
            .fold(0.0, |m, (v, r)| m.max(r - v))
    }

    fn require_positive(&self) -> Result<f64> {
        let t = self.total();
        if t > 0.0 {
            Ok(t)
        } else {
            Err(Error::DegenerateVariance(format!(
                "variance profile vanishes up to n = {}",
                self.n()
            )))
        }
    }
}

/// `N_n(t) = min{1 ≤ k ≤ n : t·R_n ≤ R_k}` on the running maximum `R`.
pub fn time_change(profile: &VarianceProfile, t: f64) -> Result<usize> {
    let total = profile.require_positive()?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!("t = {t} outside [0, 1]")));
    }
    let r = &profile.running_max;
    let k = 1 + r[1..].partition_point(|&v| v < t * total);
    Ok(k.min(profile.n()))
}

/// `W̄_n(t)` evaluated directly from the time change and interpolation weight.
pub fn self_normalized_value(profile: &VarianceProfile, sums: &[f64], t: f64) -> Result<f64> {
    let total = profile.require_positive()?;
    let k = time_change(profile, t)?;
    let r = &profile.running_max;
    let inc = r[k] - r[k - 1];
    let v = if inc < DEGENERATE_INCREMENT * total {
        sums[k - 1]
    } else {
        let w = (t * total - r[k - 1]) / inc;
        sums[k - 1] + w * (sums[k] - sums[k - 1])
    };
    Ok(v / total.sqrt())
}

/// Per-realization tables over fibers `0..n`.
#[derive(Clone, Debug)]
pub struct QuenchedTables {
    pub n: usize,
    pub bins: usize,
    pub observable: Observable,
    pub means: Vec<f64>,
    /// `Σ_k²` by the operator recursion.
    pub sigma2: VarianceProfile,
    /// `η_k² = E(Σ_{i<k} ψ_i∘F^i)²`, present with the decomposition.
    pub eta2: Option<VarianceProfile>,
    /// `χ_k`, `k = 0..=n`, present with the decomposition.
    pub chi: Vec<Vec<f64>>,
    /// `P_k ψ_k²` on fiber `k + 1`, `k = 0..n`.
    pub cond: Vec<Vec<f64>>,
    /// `∫ψ_k² dμ_k`.
    pub cond_mean: Vec<f64>,
    pub residuals: Vec<f64>,
    pub h0: FiberMeasure,
    cdf0: Vec<f64>,
    /// Total density bins clamped by the floor rule.
    pub floored: usize,
}

impl QuenchedTables {
    /// Runs the fiber sweep once. With `decompose = false` only means and the
    /// `Σ²` profile are computed, which is much cheaper.
    pub fn build(
        system: &RandomSystem,
        cache: &UlamCache,
        obs: &Observable,
        setup: DecompositionSetup,
        n: usize,
        decompose: bool,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("need n >= 1".into()));
        }
        let setup = if decompose {
            setup
        } else {
            DecompositionSetup { truncation: 0, ..setup }
        };
        let bins = setup.bins;
        let stream = DecompositionStream::new(system, cache, obs, setup, 0, n as i64)?;
        let mut means = Vec::with_capacity(n);
        let mut sigma = vec![0.0; n + 1];
        let mut eta = vec![0.0; n + 1];
        let mut u = vec![0.0; bins];
        let mut w = vec![0.0; bins];
        let mut chi = Vec::new();
        let mut cond = Vec::new();
        let mut cond_mean = Vec::new();
        let mut residuals = Vec::with_capacity(n);
        let mut h0 = None;
        let mut floored = 0;
        for step in stream {
            let step = step?;
            let k = (step.index) as usize;
            let h = &step.op.source.density;
            if k == 0 {
                h0 = Some(step.op.source.clone());
            }
            floored += step.op.floored;
            means.push(step.mean);
            let sq: Vec<f64> = step.phi.iter().map(|v| v * v).collect();
            let cross: Vec<f64> = u.iter().zip(&step.phi).map(|(a, b)| a * b).collect();
            sigma[k + 1] = sigma[k] + quad(&sq, h) + 2.0 * quad(&cross, h);
            let acc: Vec<f64> = u.iter().zip(&step.phi).map(|(a, b)| a + b).collect();
            u = step.op.apply(&acc);
            if decompose {
                let sq: Vec<f64> = step.psi.iter().map(|v| v * v).collect();
                let m = quad(&sq, h);
                let cross: Vec<f64> = w.iter().zip(&step.psi).map(|(a, b)| a * b).collect();
                eta[k + 1] = eta[k] + m + 2.0 * quad(&cross, h);
                let acc: Vec<f64> = w.iter().zip(&step.psi).map(|(a, b)| a + b).collect();
                w = step.op.apply(&acc);
                cond.push(step.op.apply(&sq));
                cond_mean.push(m);
                chi.push(step.chi);
                if k + 1 == n {
                    chi.push(step.chi_next);
                }
            }
            residuals.push(step.residual);
        }
        let h0 = h0.expect("fiber 0 visited");
        let cdf0 = h0.cdf();
        Ok(QuenchedTables {
            n,
            bins,
            observable: obs.clone(),
            means,
            sigma2: VarianceProfile::from_values(ProfileMethod::Operator, sigma),
            eta2: decompose.then(|| VarianceProfile::from_values(ProfileMethod::Operator, eta)),
            chi,
            cond,
            cond_mean,
            residuals,
            h0,
            cdf0,
            floored,
        })
    }

    pub fn has_decomposition(&self) -> bool {
        self.eta2.is_some()
    }

    /// `φ_k(x)`.
    #[inline]
    pub fn phi(&self, system: &RandomSystem, k: usize, x: f64) -> f64 {
        self.observable.eval(system.fiber(k as i64), x) - self.means[k]
    }

    /// `ψ_k(x)` where `y = F_k x`.
    #[inline]
    pub fn psi(&self, phi: f64, k: usize, x: f64, y: f64) -> f64 {
        phi - self.chi[k + 1][bin_of(y, self.bins)] + self.chi[k][bin_of(x, self.bins)]
    }

    /// `φ̆_k(x)` where `y = F_k x`.
    #[inline]
    pub fn breve(&self, k: usize, y: f64) -> f64 {
        self.cond[k][bin_of(y, self.bins)] - self.cond_mean[k]
    }

    /// Initial point number `index` drawn from `μ_0`.
    pub fn initial_point(&self, seed: u64, index: u64) -> f64 {
        let u: f64 = rng::stream(seed, Domain::InitialPoints, index).random();
        self.h0.sample(&self.cdf0, u)
    }

    fn require_decomposition(&self) -> Result<&VarianceProfile> {
        self.eta2
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("tables were built without the decomposition".into()))
    }
}

/// `S_0..S_n` with `S_k = Σ_{i<k} φ_i(x_i)`.
pub fn birkhoff(system: &RandomSystem, tables: &QuenchedTables, x0: f64, n: usize) -> Result<Vec<f64>> {
    if n > tables.n {
        return Err(Error::InvalidArgument(format!("n = {n} exceeds table length {}", tables.n)));
    }
    if n > 0 {
        system.path.require(0, n as i64 - 1)?;
    }
    let mut s = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    let mut x = x0;
    s.push(0.0);
    for k in 0..n {
        acc += tables.phi(system, k, x);
        x = system.fiber(k as i64).eval(x);
        s.push(acc);
    }
    Ok(s)
}

/// Monte Carlo `Σ_k² = E_{μ_0} S_k²` from `paths` orbits.
pub fn variance_profile_mc(
    system: &RandomSystem,
    tables: &QuenchedTables,
    paths: usize,
    seed: u64,
) -> Result<VarianceProfile> {
    if paths < 100 {
        return Err(Error::InvalidArgument(format!("Monte Carlo profile needs >= 100 paths, got {paths}")));
    }
    let n = tables.n;
    let sums: Vec<Vec<f64>> = (0..paths)
        .into_par_iter()
        .map(|i| birkhoff(system, tables, tables.initial_point(seed, i as u64), n))
        .collect::<Result<_>>()?;
    let m = paths as f64;
    let mut values = vec![0.0; n + 1];
    let mut std_err = vec![0.0; n + 1];
    for k in 1..=n {
        let mean = sums.iter().map(|s| s[k] * s[k]).sum::<f64>() / m;
        let var = sums.iter().map(|s| (s[k] * s[k] - mean).powi(2)).sum::<f64>() / (m - 1.0);
        values[k] = mean;
        std_err[k] = (var / m).sqrt();
    }
    let mut p = VarianceProfile::from_values(ProfileMethod::MonteCarlo, values);
    p.std_err = std_err;
    p.samples = paths;
    Ok(p)
}

/// Either variance profile method on the same tables.
pub fn variance_profile(
    system: &RandomSystem,
    tables: &QuenchedTables,
    method: ProfileMethod,
    paths: usize,
    seed: u64,
) -> Result<VarianceProfile> {
    match method {
        ProfileMethod::Operator => Ok(tables.sigma2.clone()),
        ProfileMethod::MonteCarlo => variance_profile_mc(system, tables, paths, seed),
    }
}

/// Nodes of `W_n`: `(k/n, S_k/√n)`.
pub fn raw_nodes(sums: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = sums.len() - 1;
    let root = (n as f64).sqrt();
    (
        (0..=n).map(|k| k as f64 / n as f64).collect(),
        sums.iter().map(|s| s / root).collect(),
    )
}

/// Node times `R_k/R_n` of `W̄_n`.
pub fn self_normalized_times(profile: &VarianceProfile) -> Result<Vec<f64>> {
    let total = profile.require_positive()?;
    let mut t: Vec<f64> = profile.running_max.iter().map(|r| r / total).collect();
    *t.last_mut().expect("nonempty") = 1.0;
    Ok(t)
}

/// Raw polygonal path `W_n` for the orbit of `x0`.
pub fn polygonal_w(system: &RandomSystem, tables: &QuenchedTables, x0: f64, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    Ok(raw_nodes(&birkhoff(system, tables, x0, n)?))
}

/// Self-normalized path `W̄_n` for the orbit of `x0`, over the full table length.
pub fn self_normalized_w(system: &RandomSystem, tables: &QuenchedTables, x0: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let times = self_normalized_times(&tables.sigma2)?;
    let scale = 1.0 / tables.sigma2.total().sqrt();
    let s = birkhoff(system, tables, x0, tables.n)?;
    Ok((times, s.iter().map(|v| v * scale).collect()))
}

/// `g(u)(t) = u(1) − u(1 − t)` on node representations.
pub fn time_reverse_g(times: &[f64], values: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let end = *values.last().expect("nonempty path");
    (
        times.iter().rev().map(|t| 1.0 - t).collect(),
        values.iter().rev().map(|v| end - v).collect(),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProcessKind {
    Raw,
    SelfNormalized,
    Brownian,
    TimeReversed,
}

impl ProcessKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProcessKind::Raw => "raw",
            ProcessKind::SelfNormalized => "self-normalized",
            ProcessKind::Brownian => "brownian",
            ProcessKind::TimeReversed => "time-reversed",
        }
    }
}

/// `M` polygonal paths on a shared node grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathEnsemble {
    pub kind: ProcessKind,
    pub n: usize,
    pub times: Vec<f64>,
    pub paths: Vec<Vec<f64>>,
    /// Master seed of the per-path streams; path `i` uses stream index `i`.
    pub seed: u64,
    /// Seed of the driving realization, when there is one.
    pub fiber_seed: Option<u64>,
}

impl PathEnsemble {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn functional(&self, i: usize, f: FunctionalSpec) -> f64 {
        f.eval(&self.times, &self.paths[i])
    }

    pub fn functional_samples(&self, f: FunctionalSpec) -> Vec<f64> {
        (0..self.len()).map(|i| self.functional(i, f)).collect()
    }

    pub fn time_reversed(&self) -> PathEnsemble {
        let times = time_reverse_g(&self.times, &self.paths.first().cloned().unwrap_or_else(|| vec![0.0])).0;
        PathEnsemble {
            kind: ProcessKind::TimeReversed,
            n: self.n,
            times,
            paths: self.paths.iter().map(|p| time_reverse_g(&self.times, p).1).collect(),
            seed: self.seed,
            fiber_seed: self.fiber_seed,
        }
    }

    /// Writes `path,t,value` rows after a comment line with version and hash.
    pub fn write_csv<W: Write>(&self, mut w: W, config_hash: &str) -> Result<()> {
        writeln!(w, "# rdslab {} config {} kind {}", crate::VERSION, config_hash, self.kind.name())?;
        writeln!(w, "path,t,value")?;
        for (i, p) in self.paths.iter().enumerate() {
            for (t, v) in self.times.iter().zip(p) {
                writeln!(w, "{i},{t},{v}")?;
            }
        }
        Ok(())
    }
}

fn path_for(
    system: &RandomSystem,
    tables: &QuenchedTables,
    kind: ProcessKind,
    seed: u64,
    i: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let x0 = tables.initial_point(seed, i as u64);
    match kind {
        ProcessKind::Raw => polygonal_w(system, tables, x0, tables.n),
        ProcessKind::SelfNormalized => self_normalized_w(system, tables, x0),
        ProcessKind::TimeReversed => {
            let (t, v) = self_normalized_w(system, tables, x0)?;
            Ok(time_reverse_g(&t, &v))
        }
        ProcessKind::Brownian => Err(Error::InvalidArgument("use brownian_ensemble".into())),
    }
}

/// `paths` quenched paths: fixed driving realization, `x_0 ~ μ_0`.
pub fn ensemble(
    system: &RandomSystem,
    tables: &QuenchedTables,
    kind: ProcessKind,
    paths: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    let built: Vec<(Vec<f64>, Vec<f64>)> = (0..paths)
        .into_par_iter()
        .map(|i| path_for(system, tables, kind, seed, i))
        .collect::<Result<_>>()?;
    let times = built.first().map(|p| p.0.clone()).unwrap_or_default();
    Ok(PathEnsemble {
        kind,
        n: tables.n,
        times,
        paths: built.into_iter().map(|p| p.1).collect(),
        seed,
        fiber_seed: Some(system.path.spec().seed),
    })
}

/// Functional values of an ensemble without storing the paths:
/// `out[f][i]` is functional `f` of path `i`.
pub fn ensemble_functionals(
    system: &RandomSystem,
    tables: &QuenchedTables,
    kind: ProcessKind,
    paths: usize,
    seed: u64,
    functionals: &[FunctionalSpec],
) -> Result<Vec<Vec<f64>>> {
    let per_path: Vec<Vec<f64>> = (0..paths)
        .into_par_iter()
        .map(|i| {
            let (t, v) = path_for(system, tables, kind, seed, i)?;
            Ok(functionals.iter().map(|f| f.eval(&t, &v)).collect())
        })
        .collect::<Result<_>>()?;
    Ok(transpose(per_path, functionals.len()))
}

fn transpose(rows: Vec<Vec<f64>>, width: usize) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::with_capacity(rows.len()); width];
    for r in rows {
        for (o, v) in out.iter_mut().zip(r) {
            o.push(v);
        }
    }
    out
}

fn brownian_path(n: usize, seed: u64, i: usize, variance: f64) -> Vec<f64> {
    let mut g = rng::stream(seed, Domain::Brownian, i as u64);
    let scale = (variance / n as f64).sqrt();
    let mut v = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    v.push(0.0);
    for _ in 0..n {
        let z: f64 = StandardNormal.sample(&mut g);
        acc += scale * z;
        v.push(acc);
    }
    v
}

/// Polygonal Brownian paths on the uniform grid with `n` steps.
pub fn brownian_ensemble(n: usize, paths: usize, seed: u64, variance: f64) -> PathEnsemble {
    let built: Vec<Vec<f64>> = (0..paths)
        .into_par_iter()
        .map(|i| brownian_path(n, seed, i, variance))
        .collect();
    PathEnsemble {
        kind: ProcessKind::Brownian,
        n,
        times: (0..=n).map(|k| k as f64 / n as f64).collect(),
        paths: built,
        seed,
        fiber_seed: None,
    }
}

/// Functional values of a Brownian ensemble without storing the paths.
pub fn brownian_functionals(
    n: usize,
    paths: usize,
    seed: u64,
    variance: f64,
    functionals: &[FunctionalSpec],
) -> Vec<Vec<f64>> {
    let times: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
    let per_path: Vec<Vec<f64>> = (0..paths)
        .into_par_iter()
        .map(|i| {
            let v = brownian_path(n, seed, i, variance);
            functionals.iter().map(|f| f.eval(&times, &v)).collect()
        })
        .collect();
    transpose(per_path, functionals.len())
}

/// Orbit `x_0..x_n` of the `i`-th sampled initial point.
fn sampled_orbit(system: &RandomSystem, tables: &QuenchedTables, seed: u64, i: usize, n: usize) -> Result<Vec<f64>> {
    system.orbit(tables.initial_point(seed, i as u64), n)
}

/// `V_{n,l}`, `l = 0..=n`, along `orbit` (at least `n + 1` points).
pub fn v_profile(tables: &QuenchedTables, orbit: &[f64], n: usize) -> Result<Vec<f64>> {
    let eta = tables.require_decomposition()?;
    if n > tables.n || orbit.len() < n + 1 {
        return Err(Error::InvalidArgument(format!("orbit or tables shorter than n = {n}")));
    }
    let e = eta.values[n];
    if !(e > 0.0) {
        return Err(Error::DegenerateVariance(format!("η² vanishes at n = {n}")));
    }
    let mut v = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    v.push(0.0);
    for i in 1..=n {
        let k = n - i;
        acc += tables.cond[k][bin_of(orbit[k + 1], tables.bins)];
        v.push(acc / e);
    }
    Ok(v)
}

/// `V_{n,n}` for every `n` in `grid`, from one orbit.
pub fn v_terminal(tables: &QuenchedTables, orbit: &[f64], grid: &[usize]) -> Result<Vec<f64>> {
    let eta = tables.require_decomposition()?;
    let top = grid.iter().copied().max().unwrap_or(0);
    if top > tables.n || orbit.len() < top + 1 {
        return Err(Error::InvalidArgument(format!("orbit or tables shorter than n = {top}")));
    }
    let mut prefix = Vec::with_capacity(top + 1);
    let mut acc = 0.0;
    prefix.push(0.0);
    for k in 0..top {
        acc += tables.cond[k][bin_of(orbit[k + 1], tables.bins)];
        prefix.push(acc);
    }
    grid.iter()
        .map(|&n| {
            let e = eta.values[n];
            if e > 0.0 {
                Ok(prefix[n] / e)
            } else {
                Err(Error::DegenerateVariance(format!("η² vanishes at n = {n}")))
            }
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct VStatistics {
    pub n: usize,
    pub mean: f64,
    pub std_err: f64,
    pub variance: f64,
    /// `(E(V_{n,n} − 1)²)^{1/2}`.
    pub l2_deviation: f64,
}

/// Ensemble statistics of `V_{n,n}` over `grid`.
pub fn v_statistics(
    system: &RandomSystem,
    tables: &QuenchedTables,
    grid: &[usize],
    paths: usize,
    seed: u64,
) -> Result<Vec<VStatistics>> {
    if paths < 2 {
        return Err(Error::InvalidArgument("need at least two paths".into()));
    }
    let top = grid.iter().copied().max().unwrap_or(0);
    let rows: Vec<Vec<f64>> = (0..paths)
        .into_par_iter()
        .map(|i| v_terminal(tables, &sampled_orbit(system, tables, seed, i, top)?, grid))
        .collect::<Result<_>>()?;
    let m = paths as f64;
    Ok(grid
        .iter()
        .enumerate()
        .map(|(g, &n)| {
            let mean = rows.iter().map(|r| r[g]).sum::<f64>() / m;
            let variance = rows.iter().map(|r| (r[g] - mean).powi(2)).sum::<f64>() / (m - 1.0);
            let l2 = (rows.iter().map(|r| (r[g] - 1.0).powi(2)).sum::<f64>() / m).sqrt();
            VStatistics {
                n,
                mean,
                std_err: (variance / m).sqrt(),
                variance,
                l2_deviation: l2,
            }
        })
        .collect())
}

/// Scaled maximal moments at one grid point.
#[derive(Clone, Debug, Serialize)]
pub struct MomentRow {
    pub n: usize,
    /// `‖max_{k≤n} |S_k|‖_q / √n`.
    pub birkhoff_max: f64,
    /// `‖max_{k<n} |φ_k∘F^k|‖_q / n^{1/q}`.
    pub term_max: f64,
    /// `‖max_{k≤n} |Σ_{i<k} φ̆_i∘F^i|‖_{q/2} / √n`; NaN without the decomposition.
    pub breve_max: f64,
}

pub fn moment_diagnostics(
    system: &RandomSystem,
    tables: &QuenchedTables,
    grid: &[usize],
    q: f64,
    paths: usize,
    seed: u64,
) -> Result<Vec<MomentRow>> {
    let top = grid.iter().copied().max().unwrap_or(0);
    if top > tables.n {
        return Err(Error::InvalidArgument(format!("grid exceeds table length {}", tables.n)));
    }
    let with_breve = tables.has_decomposition();
    // per path, per grid point: (max |S|, max |φ|, max |S̆|)
    let rows: Vec<Vec<(f64, f64, f64)>> = (0..paths)
        .into_par_iter()
        .map(|i| {
            let orbit = sampled_orbit(system, tables, seed, i, top)?;
            let mut out = Vec::with_capacity(grid.len());
            let (mut s, mut sb) = (0.0f64, 0.0f64);
            let (mut ms, mut mt, mut mb) = (0.0f64, 0.0f64, 0.0f64);
            let mut g = 0;
            for k in 0..=top {
                while g < grid.len() && grid[g] == k {
                    out.push((ms, mt, mb));
                    g += 1;
                }
                if k == top {
                    break;
                }
                let phi = tables.phi(system, k, orbit[k]);
                mt = mt.max(phi.abs());
                s += phi;
                ms = ms.max(s.abs());
                if with_breve {
                    sb += tables.breve(k, orbit[k + 1]);
                    mb = mb.max(sb.abs());
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let m = paths as f64;
    let norm = |vals: &mut dyn Iterator<Item = f64>, p: f64| (vals.map(|v| v.powf(p)).sum::<f64>() / m).powf(1.0 / p);
    Ok(grid
        .iter()
        .enumerate()
        .map(|(g, &n)| {
            let nf = n as f64;
            MomentRow {
                n,
                birkhoff_max: norm(&mut rows.iter().map(|r| r[g].0), q) / nf.sqrt(),
                term_max: norm(&mut rows.iter().map(|r| r[g].1), q) / nf.powf(1.0 / q),
                breve_max: if with_breve {
                    norm(&mut rows.iter().map(|r| r[g].2), q / 2.0) / nf.sqrt()
                } else {
                    f64::NAN
                },
            }
        })
        .collect())
}

/// `max/min` of a positive sequence, the bounded-trend statistic.
pub fn trend_ratio(values: &[f64]) -> f64 {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    hi / lo
}

/// Martingale-array diagnostics at one `n`.
#[derive(Clone, Debug, Serialize)]
pub struct MdaReport {
    pub n: usize,
    pub paths: usize,
    /// `(ε, E Σ_j X_{n,j}² 1{|X_{n,j}| ≥ ε})` with `X_{n,j} = ψ_j∘F^j / η_n`.
    pub lindeberg: Vec<(f64, f64)>,
    pub v_mean: f64,
    pub v_variance: f64,
    /// `W₁` between `Z_n = Σ_j X_{n,j}` and a normal sample of the same size.
    pub gaussian_w1: f64,
}

pub fn mda_diagnostics(
    system: &RandomSystem,
    tables: &QuenchedTables,
    n: usize,
    paths: usize,
    seed: u64,
    eps: &[f64],
) -> Result<MdaReport> {
    let eta = tables.require_decomposition()?;
    if n > tables.n {
        return Err(Error::InvalidArgument(format!("n = {n} exceeds table length {}", tables.n)));
    }
    let e2 = eta.values[n];
    if !(e2 > 0.0) {
        return Err(Error::DegenerateVariance(format!("η² vanishes at n = {n}")));
    }
    let scale = 1.0 / e2.sqrt();
    // per path: (Z_n, V_{n,n}, Lindeberg sums per ε)
    let rows: Vec<(f64, f64, Vec<f64>)> = (0..paths)
        .into_par_iter()
        .map(|i| {
            let orbit = sampled_orbit(system, tables, seed, i, n)?;
            let mut z = 0.0;
            let mut lind = vec![0.0; eps.len()];
            for k in 0..n {
                let phi = tables.phi(system, k, orbit[k]);
                let x = scale * tables.psi(phi, k, orbit[k], orbit[k + 1]);
                z += x;
                for (l, &e) in lind.iter_mut().zip(eps) {
                    if x.abs() >= e {
                        *l += x * x;
                    }
                }
            }
            let v = v_terminal(tables, &orbit, &[n])?[0];
            Ok((z, v, lind))
        })
        .collect::<Result<_>>()?;
    let m = paths as f64;
    let v_mean = rows.iter().map(|r| r.1).sum::<f64>() / m;
    let v_variance = rows.iter().map(|r| (r.1 - v_mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
    let lindeberg = eps
        .iter()
        .enumerate()
        .map(|(j, &e)| (e, rows.iter().map(|r| r.2[j]).sum::<f64>() / m))
        .collect();
    let mut g = rng::stream(seed, Domain::Synthetic, n as u64);
    let normal: Vec<f64> = (0..paths).map(|_| StandardNormal.sample(&mut g)).collect();
    let z: Vec<f64> = rows.iter().map(|r| r.0).collect();
    Ok(MdaReport {
        n,
        paths,
        lindeberg,
        v_mean,
        v_variance,
        gaussian_w1: w_p_1d(&z, &normal, 1.0)?,
    })
}
