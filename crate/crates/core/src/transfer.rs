//! Ulam discretization of the fiber transfer operators.
//!
//! [0, 1] is cut into `N` equal bins. The Ulam matrix of a fiber map `f` is
//! `L[i][j] = m(B_i ∩ f⁻¹B_j) / m(B_i)`, computed from exact branch preimages.
//! Bin-valued functions are stored as `Vec<f64>` of length `N` and represent
//! either bin averages (densities) or bin-center samples (observables).
//!
//! Equivariant densities are obtained by pushing the uniform density forward
//! from the past; the normalized operator is
//! `P_ω g = Lᵀ(g·h_ω) / h_{σω}`, the discrete form of the duality
//! `∫ψ·(φ∘F) dμ_ω = ∫(Pψ)·φ dμ_{σω}`.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::random_system::{DrivingSpec, FiberMap, IntervalMap, MapFamily, ParameterPath, RandomSystem};

/// Densities below this value are clamped before division.
pub const DENSITY_FLOOR: f64 = 1e-12;

pub const DEFAULT_BURN: usize = 200;

/// Sparse row-stochastic matrix in compressed-row form.
#[derive(Clone, Debug, PartialEq)]
pub struct UlamMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl UlamMatrix {
    /// Builds the matrix of `map` at resolution `n` from branch preimages.
    pub fn build<M: IntervalMap>(map: &M, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Resolution(n));
        }
        let nf = n as f64;
        let mut triplets: Vec<(u32, u32, f64)> = Vec::with_capacity(4 * n);
        for (b, &(d0, d1)) in map.branch_domains().iter().enumerate() {
            if d1 <= d0 {
                continue;
            }
            // preimage breakpoints of the target grid under branch b
            let mut pre: Vec<f64> = (0..=n).map(|j| map.branch_inverse(b, j as f64 / nf)).collect();
            pre[0] = d0;
            pre[n] = d1;
            let mut i = ((d0 * nf).floor() as usize).min(n - 1);
            let mut j = 0usize;
            while i < n && j < n {
                // overlap length in units of one bin
                let lo = (i as f64).max(pre[j] * nf);
                let hi = ((i + 1) as f64).min(pre[j + 1] * nf);
                if hi > lo {
                    triplets.push((i as u32, j as u32, hi - lo));
                }
                // advance whichever cell ends first
                if (i + 1) as f64 / nf <= pre[j + 1] {
                    i += 1;
                    if i as f64 / nf >= d1 {
                        break;
                    }
                } else {
                    j += 1;
                }
            }
        }
        triplets.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(u32, u32)> = None;
        for (i, j, w) in triplets {
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += w;
            } else {
                cols.push(j);
                vals.push(w);
                row_ptr[i as usize + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(UlamMatrix {
            n,
            row_ptr,
            cols,
            vals,
        })
    }

    pub fn from_parts(n: usize, row_ptr: Vec<usize>, cols: Vec<u32>, vals: Vec<f64>) -> Result<Self> {
        if row_ptr.len() != n + 1 || cols.len() != vals.len() || row_ptr[n] != cols.len() {
            return Err(Error::Format("inconsistent sparse matrix parts".into()));
        }
        Ok(UlamMatrix {
            n,
            row_ptr,
            cols,
            vals,
        })
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn cols(&self) -> &[u32] {
        &self.cols
    }

    pub fn vals(&self) -> &[f64] {
        &self.vals
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()]
            .iter()
            .zip(&self.vals[r])
            .map(|(&j, &w)| (j as usize, w))
    }

    pub fn dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n]; self.n];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, w) in self.row(i) {
                row[j] += w;
            }
        }
        out
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(_, w)| w).sum()).collect()
    }

    /// Density pushforward: `d'_j = Σ_i d_i L[i][j]`.
    pub fn pushforward(&self, density: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (i, &d) in density.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            for (j, w) in self.row(i) {
                out[j] += d * w;
            }
        }
        out
    }

    /// Conditional expectation of `g ∘ f` on each source bin: `(Lg)_i`.
    pub fn koopman(&self, g: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).map(|(j, w)| w * g[j]).sum())
            .collect()
    }
}

/// A probability density on [0, 1], one average value per bin.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FiberMeasure {
    pub density: Vec<f64>,
}

impl FiberMeasure {
    pub fn uniform(n: usize) -> Self {
        FiberMeasure {
            density: vec![1.0; n],
        }
    }

    pub fn resolution(&self) -> usize {
        self.density.len()
    }

    /// Midpoint-rule integral of a bin-valued function against this measure.
    pub fn integrate(&self, g: &[f64]) -> f64 {
        quad(g, &self.density)
    }

    pub fn total_mass(&self) -> f64 {
        self.density.iter().sum::<f64>() / self.density.len() as f64
    }

    pub fn normalize(&mut self) {
        let m = self.total_mass();
        if m > 0.0 {
            self.density.iter_mut().for_each(|d| *d /= m);
        }
    }

    /// Inverse-CDF sample for `u ∈ [0, 1)`; uniform within the selected bin.
    pub fn sample(&self, cdf: &[f64], u: f64) -> f64 {
        let n = self.density.len();
        let k = cdf.partition_point(|&c| c <= u).min(n) .saturating_sub(1).min(n - 1);
        let lo = cdf[k];
        let mass = cdf[k + 1] - lo;
        let frac = if mass > 0.0 { ((u - lo) / mass).clamp(0.0, 1.0) } else { 0.5 };
        ((k as f64 + frac) / n as f64).clamp(0.0, 1.0)
    }

    /// Cumulative masses at bin edges, `cdf[0] = 0`, `cdf[N] = 1`.
    pub fn cdf(&self) -> Vec<f64> {
        let n = self.density.len() as f64;
        let mut out = Vec::with_capacity(self.density.len() + 1);
        let mut acc = 0.0;
        out.push(0.0);
        for d in &self.density {
            acc += d / n;
            out.push(acc);
        }
        let total = acc;
        out.iter_mut().for_each(|c| *c /= total);
        out
    }
}

/// `∫ g dμ` by the midpoint rule with bin densities `h`.
pub fn quad(g: &[f64], h: &[f64]) -> f64 {
    g.iter().zip(h).map(|(a, b)| a * b).sum::<f64>() / g.len() as f64
}

/// Quadrature `L^p(μ)` norm.
pub fn lp_norm(g: &[f64], h: &[f64], p: f64) -> f64 {
    let s = g.iter().zip(h).map(|(a, b)| a.abs().powf(p) * b).sum::<f64>() / g.len() as f64;
    s.powf(1.0 / p)
}

pub fn l1_norm(g: &[f64], h: &[f64]) -> f64 {
    g.iter().zip(h).map(|(a, b)| a.abs() * b).sum::<f64>() / g.len() as f64
}

pub fn sup_norm(g: &[f64]) -> f64 {
    g.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Bin containing `x`.
#[inline]
pub fn bin_of(x: f64, n: usize) -> usize {
    ((x * n as f64) as usize).min(n - 1)
}

pub fn bin_centers(n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |j| (j as f64 + 0.5) / n as f64)
}

/// Shared read-mostly store of Ulam matrices keyed by `(family, α, N)`.
///
/// Inserts are idempotent, so concurrent population is race-free. The store
/// is cleared when it reaches its capacity, which keeps memory bounded for
/// i.i.d. driving where fibers never repeat.
#[derive(Debug)]
pub struct UlamCache {
    map: RwLock<HashMap<(MapFamily, u64, usize), Arc<UlamMatrix>>>,
    capacity: usize,
}

impl Default for UlamCache {
    fn default() -> Self {
        Self::with_capacity(64)
    }
}

impl UlamCache {
    pub fn with_capacity(capacity: usize) -> Self {
        UlamCache {
            map: RwLock::new(HashMap::new()),
            capacity,
        }
    }

    pub fn get(&self, fiber: FiberMap, n: usize) -> Result<Arc<UlamMatrix>> {
        let key = (fiber.family, fiber.alpha.to_bits(), n);
        if let Some(m) = self.map.read().unwrap().get(&key) {
            return Ok(Arc::clone(m));
        }
        let built = Arc::new(UlamMatrix::build(&fiber, n)?);
        let mut w = self.map.write().unwrap();
        if w.len() >= self.capacity {
            w.clear();
        }
        Ok(Arc::clone(w.entry(key).or_insert(built)))
    }

    pub fn len(&self) -> usize {
        self.map.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Builds the Ulam matrix of `f_α` at resolution `n`.
pub fn ulam_matrix(family: MapFamily, alpha: f64, n: usize) -> Result<UlamMatrix> {
    UlamMatrix::build(&family.fiber(alpha), n)
}

/// The fiber operator at one index: matrix plus source/target densities.
#[derive(Clone, Debug)]
pub struct UlamOperator {
    pub index: i64,
    pub fiber: FiberMap,
    pub matrix: Arc<UlamMatrix>,
    pub source: FiberMeasure,
    pub target: FiberMeasure,
    /// Number of target bins clamped to [`DENSITY_FLOOR`].
    pub floored: usize,
}

impl UlamOperator {
    pub fn new(index: i64, fiber: FiberMap, matrix: Arc<UlamMatrix>, source: FiberMeasure) -> Self {
        let target = FiberMeasure {
            density: matrix.pushforward(&source.density),
        };
        let floored = target.density.iter().filter(|&&d| d < DENSITY_FLOOR).count();
        UlamOperator {
            index,
            fiber,
            matrix,
            source,
            target,
            floored,
        }
    }

    pub fn resolution(&self) -> usize {
        self.matrix.resolution()
    }

    /// `P_ω g = Lᵀ(g·h_ω) / h_{σω}`.
    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        let h = &self.source.density;
        let n = self.resolution();
        let mut out = vec![0.0; n];
        for i in 0..n {
            let gi = g[i] * h[i];
            if gi == 0.0 {
                continue;
            }
            for (j, w) in self.matrix.row(i) {
                out[j] += gi * w;
            }
        }
        for (o, &t) in out.iter_mut().zip(&self.target.density) {
            *o /= t.max(DENSITY_FLOOR);
        }
        out
    }

    /// `g ∘ F_ω` projected onto source bins (the adjoint of [`Self::apply`]).
    pub fn compose(&self, g: &[f64]) -> Vec<f64> {
        self.matrix.koopman(g)
    }
}

/// Shorthand for [`UlamOperator::apply`].
pub fn normalized_apply(op: &UlamOperator, g: &[f64]) -> Vec<f64> {
    op.apply(g)
}

/// `|∫ψ·(φ∘F) dμ − ∫(Pψ)·φ dμ'|`, with the exact fiber map on the left and
/// the operator on the right, both by the midpoint rule.
pub fn duality_residual(op: &UlamOperator, psi: &[f64], phi: impl Fn(f64) -> f64) -> f64 {
    let n = op.resolution();
    let lhs = bin_centers(n)
        .zip(psi)
        .zip(&op.source.density)
        .map(|((x, p), h)| p * phi(op.fiber.eval(x)) * h)
        .sum::<f64>()
        / n as f64;
    let ppsi = op.apply(psi);
    let rhs = bin_centers(n)
        .zip(&ppsi)
        .zip(&op.target.density)
        .map(|((x, p), h)| p * phi(x) * h)
        .sum::<f64>()
        / n as f64;
    (lhs - rhs).abs()
}

/// Resolution and burn-in used for all operator-level computations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct TransferSetup {
    pub bins: usize,
    pub burn: usize,
}

impl TransferSetup {
    pub fn new(bins: usize, burn: usize) -> Self {
        TransferSetup { bins, burn }
    }
}

impl Default for TransferSetup {
    fn default() -> Self {
        TransferSetup {
            bins: 1024,
            burn: DEFAULT_BURN,
        }
    }
}

/// Walks the fibers `from..to` of a system, yielding operators whose source
/// densities are pushed forward from the uniform density at `from − burn`.
pub struct FiberSweep<'a> {
    system: &'a RandomSystem,
    cache: &'a UlamCache,
    bins: usize,
    next: i64,
    end: i64,
    density: FiberMeasure,
}

impl<'a> FiberSweep<'a> {
    pub fn new(
        system: &'a RandomSystem,
        cache: &'a UlamCache,
        setup: TransferSetup,
        from: i64,
        to: i64,
    ) -> Result<Self> {
        if setup.bins < 2 {
            return Err(Error::Resolution(setup.bins));
        }
        let start = from - setup.burn as i64;
        let mut density = FiberMeasure::uniform(setup.bins);
        for k in start..from {
            let m = cache.get(system.fiber(k), setup.bins)?;
            density.density = m.pushforward(&density.density);
            density.normalize();
        }
        Ok(FiberSweep {
            system,
            cache,
            bins: setup.bins,
            next: from,
            end: to,
            density,
        })
    }

    pub fn density(&self) -> &FiberMeasure {
        &self.density
    }
}

impl Iterator for FiberSweep<'_> {
    type Item = Result<UlamOperator>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.end {
            return None;
        }
        let k = self.next;
        self.next += 1;
        let fiber = self.system.fiber(k);
        let op = self.cache.get(fiber, self.bins).map(|m| {
            let op = UlamOperator::new(k, fiber, m, self.density.clone());
            self.density = op.target.clone();
            op
        });
        Some(op)
    }
}

/// `h_ω` at index 0 from `burn` steps of the past, plus the Cauchy gap
/// `‖h^{(burn)} − h^{(burn/2)}‖₁` as a convergence certificate.
pub fn equivariant_density(
    system: &RandomSystem,
    cache: &UlamCache,
    burn: usize,
    bins: usize,
) -> Result<(FiberMeasure, f64)> {
    system.path.require(-(burn as i64), 0)?;
    let full = FiberSweep::new(system, cache, TransferSetup::new(bins, burn), 0, 0)?;
    let half = FiberSweep::new(system, cache, TransferSetup::new(bins, burn / 2), 0, 0)?;
    let (h, g) = (full.density().clone(), half.density());
    let gap = h
        .density
        .iter()
        .zip(&g.density)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / bins as f64;
    Ok((h, gap))
}

/// Result of pushing a function through a run of fibers.
#[derive(Clone, Debug)]
pub struct Chain {
    pub values: Vec<f64>,
    /// Density at the final index.
    pub density: FiberMeasure,
}

/// `P^k` applied to `g` living at fiber `i`; result lives at fiber `i + k`.
pub fn apply_chain(
    system: &RandomSystem,
    cache: &UlamCache,
    setup: TransferSetup,
    g: &[f64],
    i: i64,
    k: usize,
) -> Result<Chain> {
    system.path.require(i - setup.burn as i64, i + k as i64)?;
    let mut sweep = FiberSweep::new(system, cache, setup, i, i + k as i64)?;
    let mut values = g.to_vec();
    let mut density = sweep.density().clone();
    for op in &mut sweep {
        let op = op?;
        values = op.apply(&values);
        density = op.target;
    }
    Ok(Chain { values, density })
}

/// Quenched correlation `∫ ψ·(φ∘F^n) dμ_0 − ∫ψ dμ_0 ∫φ dμ_n` at the Ulam level,
/// for every lag in `lags`.
pub fn quenched_decay_probe(
    system: &RandomSystem,
    cache: &UlamCache,
    setup: TransferSetup,
    phi: &[f64],
    psi: &[f64],
    lags: &[usize],
) -> Result<Vec<f64>> {
    let max_lag = lags.iter().copied().max().unwrap_or(0);
    system.path.require(-(setup.burn as i64), max_lag as i64)?;
    let mut sweep = FiberSweep::new(system, cache, setup, 0, max_lag as i64)?;
    let h0 = sweep.density().clone();
    let mean = h0.integrate(psi);
    let mut g: Vec<f64> = psi.iter().map(|v| v - mean).collect();
    let mut h = h0;
    let mut out = vec![0.0; lags.len()];
    let record = |lag: usize, g: &[f64], h: &FiberMeasure, out: &mut Vec<f64>| {
        let v = quad(&g.iter().zip(phi).map(|(a, b)| a * b).collect::<Vec<_>>(), &h.density);
        for (slot, &l) in out.iter_mut().zip(lags) {
            if l == lag {
                *slot = v;
            }
        }
    };
    record(0, &g, &h, &mut out);
    for (step, op) in (&mut sweep).enumerate() {
        let op = op?;
        g = op.apply(&g);
        h = op.target;
        record(step + 1, &g, &h, &mut out);
    }
    Ok(out)
}

/// `∫ |P^n(φ − ∫φ dμ_0)| dμ_n` for one fiber sequence, for every lag.
pub fn l1_decay(
    system: &RandomSystem,
    cache: &UlamCache,
    setup: TransferSetup,
    phi: &[f64],
    lags: &[usize],
) -> Result<Vec<f64>> {
    let max_lag = lags.iter().copied().max().unwrap_or(0);
    system.path.require(-(setup.burn as i64), max_lag as i64)?;
    let mut sweep = FiberSweep::new(system, cache, setup, 0, max_lag as i64)?;
    let mut h = sweep.density().clone();
    let mean = h.integrate(phi);
    let mut g: Vec<f64> = phi.iter().map(|v| v - mean).collect();
    let mut out = vec![0.0; lags.len()];
    let mut put = |lag: usize, g: &[f64], h: &FiberMeasure| {
        for (slot, &l) in out.iter_mut().zip(lags) {
            if l == lag {
                *slot = l1_norm(g, &h.density);
            }
        }
    };
    put(0, &g, &h);
    for (step, op) in (&mut sweep).enumerate() {
        let op = op?;
        g = op.apply(&g);
        h = op.target;
        put(step + 1, &g, &h);
    }
    Ok(out)
}

/// Annealed decay estimate with its standard error.
#[derive(Clone, Debug, Serialize)]
pub struct AnnealedDecay {
    pub lags: Vec<usize>,
    pub mean: Vec<f64>,
    pub std_err: Vec<f64>,
    pub realizations: usize,
}

/// Seed of the `j`-th independent driving realization derived from `spec`.
pub fn realization_seed(seed: u64, j: u64) -> u64 {
    seed.wrapping_add(j.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Monte Carlo average over `realizations` driving sequences of
/// `∫ |P^n(φ_ω − ∫φ_ω dμ_ω)| dμ_{σⁿω}`.
pub fn annealed_decay_probe(
    spec: &DrivingSpec,
    family: MapFamily,
    setup: TransferSetup,
    phi: &[f64],
    lags: &[usize],
    realizations: usize,
) -> Result<AnnealedDecay> {
    if realizations == 0 {
        return Err(Error::InvalidArgument("need at least one realization".into()));
    }
    let max_lag = lags.iter().copied().max().unwrap_or(0) as i64;
    let cache = UlamCache::default();
    let mut rows = Vec::with_capacity(realizations);
    for j in 0..realizations {
        let mut s = spec.clone();
        s.seed = realization_seed(spec.seed, j as u64);
        let path = ParameterPath::new(s, -(setup.burn as i64), max_lag)?;
        let sys = RandomSystem::new(family, path);
        rows.push(l1_decay(&sys, &cache, setup, phi, lags)?);
    }
    let j = realizations as f64;
    let mut mean = vec![0.0; lags.len()];
    let mut std_err = vec![0.0; lags.len()];
    for l in 0..lags.len() {
        let m = rows.iter().map(|r| r[l]).sum::<f64>() / j;
        let var = if realizations > 1 {
            rows.iter().map(|r| (r[l] - m).powi(2)).sum::<f64>() / (j - 1.0)
        } else {
            0.0
        };
        mean[l] = m;
        std_err[l] = (var / j).sqrt();
    }
    Ok(AnnealedDecay {
        lags: lags.to_vec(),
        mean,
        std_err,
        realizations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random_system::make_path;
    use std::f64::consts::PI;

    struct Identity;

    impl IntervalMap for Identity {
        fn eval(&self, x: f64) -> f64 {
            x
        }
        fn branch_domains(&self) -> Vec<(f64, f64)> {
            vec![(0.0, 1.0)]
        }
        fn branch_inverse(&self, _b: usize, y: f64) -> f64 {
            y
        }
    }

    fn cos_table(n: usize, k: f64) -> Vec<f64> {
        bin_centers(n).map(|x| (2.0 * PI * k * x).cos()).collect()
    }

    fn doubling() -> RandomSystem {
        RandomSystem::new(
            MapFamily::Expanding,
            make_path(DrivingSpec::constant(0.5), -300, 300).unwrap(),
        )
    }

    #[test]
    fn identity_map_gives_identity_matrix() {
        for n in [2, 7, 64] {
            let m = UlamMatrix::build(&Identity, n).unwrap();
            let d = m.dense();
            for i in 0..n {
                for j in 0..n {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((d[i][j] - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn doubling_at_two_bins() {
        let m = ulam_matrix(MapFamily::Expanding, 0.5, 2).unwrap();
        for row in m.dense() {
            for v in row {
                assert!((v - 0.5).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn small_resolution_rejected() {
        assert!(ulam_matrix(MapFamily::Lsv, 0.3, 1).is_err());
    }

    #[test]
    fn rows_are_stochastic() {
        for fam in [MapFamily::Lsv, MapFamily::Expanding] {
            for &a in &[0.1, 0.33, 0.5, 0.77] {
                for n in [3, 100, 512] {
                    let m = ulam_matrix(fam, a, n).unwrap();
                    assert!(m.vals().iter().all(|&v| v >= 0.0));
                    for s in m.row_sums() {
                        assert!((s - 1.0).abs() < 1e-10, "{fam:?} {a} {n}: {s}");
                    }
                }
            }
        }
    }

    #[test]
    fn doubling_density_is_uniform() {
        let sys = doubling();
        let cache = UlamCache::default();
        for burn in [0, 1, 10, 100] {
            let (h, _) = equivariant_density(&sys, &cache, burn, 256).unwrap();
            assert!(h.density.iter().all(|&d| (d - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn lsv_density_converges_with_mass_near_zero() {
        let sys = RandomSystem::new(
            MapFamily::Lsv,
            make_path(DrivingSpec::iid(0.25, 0.25, 0), -200, 0).unwrap(),
        );
        let cache = UlamCache::default();
        let (h, gap) = equivariant_density(&sys, &cache, 200, 2048).unwrap();
        assert!(gap < 1e-3, "gap {gap}");
        let imax = h
            .density
            .iter()
            .enumerate()
            .fold((0, 0.0), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
            .0;
        assert_eq!(imax, 0);
        assert!((h.total_mass() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn insufficient_past_is_rejected() {
        let sys = RandomSystem::new(
            MapFamily::Lsv,
            make_path(DrivingSpec::iid(0.2, 0.3, 0), -10, 0).unwrap(),
        );
        assert!(equivariant_density(&sys, &UlamCache::default(), 50, 64).is_err());
    }

    #[test]
    fn normalized_operator_fixes_constants() {
        let sys = RandomSystem::new(
            MapFamily::Lsv,
            make_path(DrivingSpec::iid(0.2, 0.4, 3), -100, 10).unwrap(),
        );
        let cache = UlamCache::default();
        let mut sweep = FiberSweep::new(&sys, &cache, TransferSetup::new(512, 100), 0, 3).unwrap();
        let op = sweep.next().unwrap().unwrap();
        for c in [1.0, -2.5] {
            let out = op.apply(&vec![c; 512]);
            assert!(out.iter().all(|&v| (v - c).abs() < 1e-8 * c.abs().max(1.0)));
        }
    }

    #[test]
    fn doubling_duality_residual() {
        let n = 1024;
        let sys = doubling();
        let cache = UlamCache::default();
        let op = FiberSweep::new(&sys, &cache, TransferSetup::new(n, 10), 0, 1)
            .unwrap()
            .next()
            .unwrap()
            .unwrap();
        let f = op.fiber;
        let phi = |x: f64| (2.0 * PI * x).sin() + 0.5 * (4.0 * PI * x).cos();
        let psi = cos_table(n, 1.0);
        // left side with the exact map, right side with the operator
        let lhs: f64 = bin_centers(n)
            .zip(&psi)
            .zip(&op.source.density)
            .map(|((x, p), h)| p * phi(f.eval(x)) * h)
            .sum::<f64>()
            / n as f64;
        let ppsi = op.apply(&psi);
        let phit: Vec<f64> = bin_centers(n).map(phi).collect();
        let rhs = quad(
            &ppsi.iter().zip(&phit).map(|(a, b)| a * b).collect::<Vec<_>>(),
            &op.target.density,
        );
        assert!((lhs - rhs).abs() <= 5.0 / n as f64, "{lhs} vs {rhs}");
    }

    #[test]
    fn chain_examples() {
        let n = 512;
        let sys = doubling();
        let cache = UlamCache::default();
        let setup = TransferSetup::new(n, 20);
        let g = cos_table(n, 1.0);
        let c0 = apply_chain(&sys, &cache, setup, &g, 0, 0).unwrap();
        assert_eq!(c0.values, g);
        let c1 = apply_chain(&sys, &cache, setup, &g, 0, 1).unwrap();
        assert!(sup_norm(&c1.values) <= 10.0 / n as f64);
    }

    #[test]
    fn chain_contracts_and_preserves_means() {
        let n = 512;
        let sys = RandomSystem::new(
            MapFamily::Lsv,
            make_path(DrivingSpec::iid(0.2, 0.4, 11), -200, 40).unwrap(),
        );
        let cache = UlamCache::default();
        let setup = TransferSetup::new(n, 100);
        let (h0, _) = equivariant_density(&sys, &cache, 100, n).unwrap();
        let raw: Vec<f64> = bin_centers(n).map(|x| (x - 0.3).abs().sqrt()).collect();
        let m = h0.integrate(&raw);
        let g: Vec<f64> = raw.iter().map(|v| v - m).collect();
        for k in [1, 5, 30] {
            let c = apply_chain(&sys, &cache, setup, &g, 0, k).unwrap();
            assert!(sup_norm(&c.values) <= sup_norm(&g) * (1.0 + 1e-6));
            assert!(c.density.integrate(&c.values).abs() < 1e-8);
        }
    }

    #[test]
    fn quenched_probe_examples() {
        let n = 512;
        let sys = doubling();
        let cache = UlamCache::default();
        let setup = TransferSetup::new(n, 10);
        let c = cos_table(n, 1.0);
        let lags = [0, 1, 2, 5, 10];
        let v = quenched_decay_probe(&sys, &cache, setup, &c, &c, &lags).unwrap();
        assert!((v[0] - 0.5).abs() < 1e-3);
        for &x in &v[1..] {
            assert!(x.abs() <= 10.0 / n as f64);
        }
        let one = vec![1.0; n];
        let w = quenched_decay_probe(&sys, &cache, setup, &one, &c, &lags).unwrap();
        assert!(w.iter().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn annealed_probe_examples() {
        let n = 256;
        let setup = TransferSetup::new(n, 50);
        let spec = DrivingSpec::iid(0.2, 0.3, 4);
        let one = vec![1.0; n];
        let lags = [0, 4, 8];
        let a = annealed_decay_probe(&spec, MapFamily::Lsv, setup, &one, &lags, 3).unwrap();
        assert!(a.mean.iter().all(|x| x.abs() < 1e-10));

        let phi = cos_table(n, 1.0);
        let a1 = annealed_decay_probe(&spec, MapFamily::Lsv, setup, &phi, &lags, 1).unwrap();
        let path = ParameterPath::new(spec.clone(), -50, 8).unwrap();
        let sys = RandomSystem::new(MapFamily::Lsv, path);
        let q = l1_decay(&sys, &UlamCache::default(), setup, &phi, &lags).unwrap();
        assert_eq!(a1.mean, q);
    }

    #[test]
    fn sampling_follows_the_density() {
        let mut h = FiberMeasure {
            density: vec![3.0, 1.0, 0.0, 0.0],
        };
        h.normalize();
        let cdf = h.cdf();
        assert!(h.sample(&cdf, 0.0) < 0.25);
        assert!(h.sample(&cdf, 0.74) < 0.25);
        let x = h.sample(&cdf, 0.8);
        assert!((0.25..0.5).contains(&x));
        assert!(h.sample(&cdf, 0.999_999) < 0.5);
    }
}
