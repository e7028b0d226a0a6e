//! Abstract random Young towers with prescribed return-time tails.
//!
//! The base is a single atom carrying a uniform mark drawn at each return.
//! A point climbs one level per step until it reaches `R − 1`, then returns
//! to the base where a fresh return time is drawn from the law of the
//! current fiber.

use std::collections::HashMap;
use std::io::Write;
use std::sync::{Arc, RwLock};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::random_system::DrivingSpec;
use crate::rng::{self, Domain};
use crate::wasserstein::{weighted_line, LineFit};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailKind {
    /// `P(R > n) ≈ C (log n)^b / n^a`.
    Polynomial,
    /// `P(R > n) ≈ C e^{−u n}`.
    Exponential,
    /// `P(R > n) ≈ C e^{−u n^v}`.
    StretchedExponential,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailSpec {
    pub kind: TailKind,
    #[serde(default)]
    pub a: f64,
    #[serde(default)]
    pub b: f64,
    #[serde(default)]
    pub u: f64,
    #[serde(default = "one")]
    pub v: f64,
    /// Normalization constant `C`.
    pub c: f64,
    /// Largest representable return time; the remaining mass sits here.
    pub n_max: usize,
    /// Mass forced onto each of `R = 1` and `R = 2`.
    pub p_min: f64,
}

fn one() -> f64 {
    1.0
}

impl TailSpec {
    pub fn polynomial(a: f64, c: f64) -> Self {
        TailSpec {
            kind: TailKind::Polynomial,
            a,
            b: 0.0,
            u: 0.0,
            v: 1.0,
            c,
            n_max: 1 << 14,
            p_min: 0.01,
        }
    }

    pub fn exponential(u: f64, c: f64) -> Self {
        TailSpec {
            kind: TailKind::Exponential,
            u,
            ..Self::polynomial(0.0, c)
        }
    }

    pub fn stretched(u: f64, v: f64, c: f64) -> Self {
        TailSpec {
            kind: TailKind::StretchedExponential,
            u,
            v,
            ..Self::polynomial(0.0, c)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("tail spec: {m}")));
        match self.kind {
            TailKind::Polynomial if !(self.a > 1.0) => return bad("polynomial tails need a > 1"),
            TailKind::Polynomial if !(self.b >= 0.0) => return bad("b must be >= 0"),
            TailKind::Exponential | TailKind::StretchedExponential if !(self.u > 0.0) => {
                return bad("rate u must be > 0")
            }
            TailKind::StretchedExponential if !(self.v > 0.0) => return bad("exponent v must be > 0"),
            _ => {}
        }
        if !(self.c >= 0.0) || self.n_max < 2 || !(0.0..0.5).contains(&self.p_min) {
            return bad("need C >= 0, n_max >= 2 and p_min in [0, 1/2)");
        }
        Ok(())
    }

    /// The unforced survival function `G(n)`, capped at 1.
    pub fn survival(&self, n: usize) -> f64 {
        if n == 0 {
            return 1.0;
        }
        let x = n as f64;
        let g = match self.kind {
            TailKind::Polynomial => self.c * x.ln().max(1.0).powf(self.b) / x.powf(self.a),
            TailKind::Exponential => self.c * (-self.u * x).exp(),
            TailKind::StretchedExponential => self.c * (-self.u * x.powf(self.v)).exp(),
        };
        g.min(1.0)
    }

    /// The return-time law with constant `C·scale`.
    pub fn law(&self, scale: f64) -> Result<ReturnLaw> {
        self.validate()?;
        let spec = TailSpec {
            c: self.c * scale,
            ..self.clone()
        };
        let nm = spec.n_max;
        let mut masses = vec![0.0; nm];
        let mut prev = 1.0;
        for (i, m) in masses.iter_mut().enumerate() {
            let g = spec.survival(i + 1);
            *m = (1.0 - 2.0 * spec.p_min) * (prev - g).max(0.0);
            prev = g.min(prev);
        }
        // remaining tail mass folds into the last bucket
        masses[nm - 1] += (1.0 - 2.0 * spec.p_min) * prev;
        masses[0] += spec.p_min;
        masses[1] += spec.p_min;
        ReturnLaw::from_masses(masses)
    }
}

/// A distribution on `{1, …, n_max}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReturnLaw {
    /// `masses[n − 1] = P(R = n)`.
    pub masses: Vec<f64>,
    cdf: Vec<f64>,
    biased_cdf: Vec<f64>,
    pub mean: f64,
}

impl ReturnLaw {
    pub fn from_masses(masses: Vec<f64>) -> Result<Self> {
        let total: f64 = masses.iter().sum();
        if masses.iter().any(|&m| m < 0.0) || (total - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidArgument(format!("masses must be >= 0 and sum to 1, got {total}")));
        }
        let mut cdf = Vec::with_capacity(masses.len());
        let mut biased_cdf = Vec::with_capacity(masses.len());
        let (mut acc, mut bacc) = (0.0, 0.0);
        for (i, m) in masses.iter().enumerate() {
            acc += m;
            bacc += (i + 1) as f64 * m;
            cdf.push(acc);
            biased_cdf.push(bacc);
        }
        let mean = bacc;
        biased_cdf.iter_mut().for_each(|c| *c /= mean);
        Ok(ReturnLaw {
            masses,
            cdf,
            biased_cdf,
            mean,
        })
    }

    pub fn n_max(&self) -> usize {
        self.masses.len()
    }

    /// `P(R > n)`.
    pub fn survival(&self, n: usize) -> f64 {
        self.masses.iter().skip(n).sum()
    }

    fn invert(cdf: &[f64], u: f64) -> usize {
        cdf.partition_point(|&c| c <= u).min(cdf.len() - 1) + 1
    }

    pub fn sample(&self, g: &mut impl Rng) -> usize {
        Self::invert(&self.cdf, g.random::<f64>() * self.cdf[self.cdf.len() - 1])
    }

    /// Size-biased draw `P(R = n) ∝ n·p(n)`, for stationary starts.
    pub fn sample_biased(&self, g: &mut impl Rng) -> usize {
        Self::invert(&self.biased_cdf, g.random::<f64>())
    }
}

/// Draws one return time from `spec`.
pub fn sample_return_time(law: &ReturnLaw, g: &mut impl Rng) -> usize {
    law.sample(g)
}

/// Per-fiber modulation of the tail constant by the driving sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Modulation {
    pub driving: DrivingSpec,
    /// `C_k = C·(1 + amplitude·(2s_k − 1))` with `s_k ∈ [0, 1]` the
    /// normalized driving parameter, quantized to `levels` values.
    pub amplitude: f64,
    pub levels: usize,
}

/// Random threshold below which the tail bound is not enforced:
/// `P(n₁ > n) = e^{−u n^v}`. Below `n₁` a tenth of the mass is spread
/// uniformly over `1..=n₁`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub u: f64,
    pub v: f64,
    pub seed: u64,
}

impl Threshold {
    pub fn at(&self, k: i64) -> usize {
        let s: f64 = rng::uniform_at(self.seed, Domain::Tower, k);
        // inverse of the survival e^{−u n^v}
        let n = (-(1.0 - s).ln() / self.u).powf(1.0 / self.v);
        (n.ceil() as usize).max(1)
    }
}

/// Tower description: base law plus optional fiber dependence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TowerSpec {
    pub tail: TailSpec,
    #[serde(default)]
    pub modulation: Option<Modulation>,
    #[serde(default)]
    pub threshold: Option<Threshold>,
}

impl TowerSpec {
    pub fn new(tail: TailSpec) -> Self {
        TowerSpec {
            tail,
            modulation: None,
            threshold: None,
        }
    }

    pub fn is_autonomous(&self) -> bool {
        self.modulation.is_none() && self.threshold.is_none()
    }
}

/// Lazily built per-fiber laws, keyed by (modulation level, threshold).
pub struct FiberLaws {
    spec: TowerSpec,
    base: Arc<ReturnLaw>,
    cache: RwLock<HashMap<(usize, usize), Arc<ReturnLaw>>>,
}

impl FiberLaws {
    pub fn new(spec: TowerSpec) -> Result<Self> {
        let base = Arc::new(spec.tail.law(1.0)?);
        Ok(FiberLaws {
            spec,
            base,
            cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn spec(&self) -> &TowerSpec {
        &self.spec
    }

    fn key(&self, k: i64) -> (usize, usize) {
        let level = self.spec.modulation.as_ref().map_or(0, |m| {
            let d = &m.driving;
            let s = if d.alpha_hi > d.alpha_lo {
                (d.param_at(k) - d.alpha_lo) / (d.alpha_hi - d.alpha_lo)
            } else {
                0.5
            };
            ((s * m.levels as f64) as usize).min(m.levels.saturating_sub(1))
        });
        let n1 = self.spec.threshold.map_or(0, |t| t.at(k).min(self.spec.tail.n_max));
        (level, n1)
    }

    /// The return-time law of fiber `k`.
    pub fn law(&self, k: i64) -> Result<Arc<ReturnLaw>> {
        if self.spec.is_autonomous() {
            return Ok(Arc::clone(&self.base));
        }
        let key = self.key(k);
        if let Some(l) = self.cache.read().unwrap().get(&key) {
            return Ok(Arc::clone(l));
        }
        let scale = self.spec.modulation.as_ref().map_or(1.0, |m| {
            let s = (key.0 as f64 + 0.5) / m.levels.max(1) as f64;
            1.0 + m.amplitude * (2.0 * s - 1.0)
        });
        let mut law = self.spec.tail.law(scale)?;
        if key.1 > 1 {
            let w = 0.1;
            let mut masses: Vec<f64> = law.masses.iter().map(|m| (1.0 - w) * m).collect();
            for m in masses.iter_mut().take(key.1) {
                *m += w / key.1 as f64;
            }
            law = ReturnLaw::from_masses(masses)?;
        }
        let law = Arc::new(law);
        let mut w = self.cache.write().unwrap();
        Ok(Arc::clone(w.entry(key).or_insert(law)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TowerState {
    /// Number of returns so far; labels the current base point.
    pub base: u64,
    /// Mark of the current base point, uniform on [0, 1).
    pub mark: f64,
    pub level: usize,
    pub ret: usize,
    pub fiber: i64,
}

impl TowerState {
    /// A base point at `fiber` with a fresh return time.
    pub fn at_base(laws: &FiberLaws, fiber: i64, g: &mut impl Rng) -> Result<Self> {
        Ok(TowerState {
            base: 0,
            mark: g.random(),
            level: 0,
            ret: laws.law(fiber)?.sample(g),
            fiber,
        })
    }

    /// A draw from the stationary measure of the law at `fiber`.
    pub fn stationary(laws: &FiberLaws, fiber: i64, g: &mut impl Rng) -> Result<Self> {
        let r = laws.law(fiber)?.sample_biased(g);
        Ok(TowerState {
            base: 0,
            mark: g.random(),
            level: g.random_range(0..r),
            ret: r,
            fiber,
        })
    }
}

/// Climbs one level, or returns to the base with a fresh return time.
pub fn tower_step(state: TowerState, laws: &FiberLaws, g: &mut impl Rng) -> Result<TowerState> {
    let fiber = state.fiber + 1;
    let next = if state.level + 1 < state.ret {
        TowerState {
            level: state.level + 1,
            fiber,
            ..state
        }
    } else {
        TowerState {
            base: state.base + 1,
            mark: g.random(),
            level: 0,
            ret: laws.law(fiber)?.sample(g),
            fiber,
        }
    };
    debug_assert!(next.level < next.ret);
    Ok(next)
}

/// Fitted tail of an empirical survival function.
#[derive(Clone, Debug, Serialize)]
pub struct TailFit {
    pub a: f64,
    /// The log-power used in the fit (held fixed).
    pub b: f64,
    pub intercept: f64,
    pub points: Vec<(usize, f64)>,
    /// Quadratic coefficient of `log S` in `log n` and its t-statistic.
    pub curvature: f64,
    pub curvature_t: f64,
    /// True when the curvature test rejects a straight line in log-log axes.
    pub polynomial_rejected: bool,
}

/// Quarter-octave grid `⌈2^{j/4}⌉` up to `n_max`, deduplicated.
pub fn dyadic_grid(n_max: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (0..)
        .map(|j| 2f64.powf(j as f64 / 4.0).ceil() as usize)
        .take_while(|&n| n <= n_max)
        .collect();
    out.dedup();
    out
}

/// Regression of `log S(n) − b·log log n` on `log n`, weighted, with the
/// curvature test for polynomial decay.
pub fn fit_survival(points: &[(usize, f64)], weights: &[f64], b: f64) -> Result<TailFit> {
    if points.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "tail fit needs at least 3 points in the tail regime, got {}",
            points.len()
        )));
    }
    let x: Vec<f64> = points.iter().map(|&(n, _)| (n as f64).ln()).collect();
    let y: Vec<f64> = points
        .iter()
        .map(|&(n, s)| s.ln() - b * (n as f64).ln().max(1.0).ln())
        .collect();
    let LineFit { slope, intercept } = weighted_line(&x, &y, Some(weights));
    let (c2, t) = curvature(&x, &y, weights);
    Ok(TailFit {
        a: -slope,
        b,
        intercept,
        points: points.to_vec(),
        curvature: c2,
        curvature_t: t,
        polynomial_rejected: c2 < -1e-8 && t.abs() > 3.0,
    })
}

/// Weighted quadratic fit `y ≈ c0 + c1 x + c2 x²`; returns `c2` and its t-statistic.
fn curvature(x: &[f64], y: &[f64], w: &[f64]) -> (f64, f64) {
    let n = x.len();
    // normal equations in centered coordinates
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let z: Vec<f64> = x.iter().map(|v| v - mx).collect();
    let mut m = [[0.0f64; 3]; 3];
    let mut r = [0.0f64; 3];
    for i in 0..n {
        let f = [1.0, z[i], z[i] * z[i]];
        for a in 0..3 {
            r[a] += w[i] * f[a] * y[i];
            for b in 0..3 {
                m[a][b] += w[i] * f[a] * f[b];
            }
        }
    }
    let Some(inv) = invert3(m) else {
        return (0.0, 0.0);
    };
    let c: Vec<f64> = (0..3).map(|a| (0..3).map(|b| inv[a][b] * r[b]).sum()).collect();
    let rss: f64 = (0..n)
        .map(|i| w[i] * (y[i] - c[0] - c[1] * z[i] - c[2] * z[i] * z[i]).powi(2))
        .sum();
    let dof = n.saturating_sub(3).max(1) as f64;
    let se = (rss / dof * inv[2][2]).sqrt();
    let t = if se > 0.0 { c[2] / se } else if c[2] == 0.0 { 0.0 } else { c[2].signum() * f64::INFINITY };
    (c[2], t)
}

fn invert3(m: [[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    if det.abs() < 1e-300 {
        return None;
    }
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (a, b) = ((j + 1) % 3, (j + 2) % 3);
            let (c, d) = ((i + 1) % 3, (i + 2) % 3);
            out[i][j] = (m[a][c] * m[b][d] - m[a][d] * m[b][c]) / det;
        }
    }
    Some(out)
}

/// Minimum exceedance count for a grid point to enter the tail fit.
pub const MIN_TAIL_COUNT: usize = 25;

/// Fits the tail of return-time samples on the quarter-octave grid, using
/// only points in the tail regime (`S(n) ≤ 1/2` and at least
/// [`MIN_TAIL_COUNT`] exceedances), weighted by exceedance count.
pub fn tail_diagnostics(samples: &[usize], b: f64) -> Result<TailFit> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let total = sorted.len() as f64;
    let top = *sorted.last().expect("nonempty");
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for n in dyadic_grid(top) {
        let count = sorted.len() - sorted.partition_point(|&r| r <= n);
        let s = count as f64 / total;
        if s <= 0.5 && count >= MIN_TAIL_COUNT {
            points.push((n, s));
            weights.push(count as f64);
        }
    }
    fit_survival(&points, &weights, b)
}

/// Annealed tail fit: pools one return time per fiber across `realizations`
/// driving sequences of the modulated spec.
pub fn annealed_tail_diagnostics(spec: &TowerSpec, samples_per: usize, realizations: usize, seed: u64) -> Result<TailFit> {
    let mut pooled = Vec::with_capacity(samples_per * realizations);
    for j in 0..realizations {
        let mut s = spec.clone();
        if let Some(m) = s.modulation.as_mut() {
            m.driving.seed = crate::transfer::realization_seed(m.driving.seed, j as u64);
        }
        if let Some(t) = s.threshold.as_mut() {
            t.seed = crate::transfer::realization_seed(t.seed, j as u64);
        }
        let laws = FiberLaws::new(s)?;
        let mut g = rng::stream(seed, Domain::Tower, j as u64);
        for k in 0..samples_per {
            pooled.push(laws.law(k as i64)?.sample(&mut g));
        }
    }
    tail_diagnostics(&pooled, spec.tail.b)
}

/// Renewal check: base frequency times mean return time.
#[derive(Clone, Debug, Serialize)]
pub struct RenewalCheck {
    pub steps: usize,
    pub base_frequency: f64,
    pub base_frequency_se: f64,
    pub mean_return: f64,
    pub mean_return_se: f64,
    /// `frequency · mean`, which should be 1.
    pub product: f64,
    pub product_se: f64,
    pub analytic_mean: f64,
}

impl RenewalCheck {
    pub fn consistent(&self) -> bool {
        (self.product - 1.0).abs() <= 3.0 * self.product_se
    }
}

/// Runs one chain for `steps` steps from a base point at fiber 0.
pub fn renewal_check(laws: &FiberLaws, steps: usize, seed: u64) -> Result<RenewalCheck> {
    let batches = 100usize;
    if steps < batches * 10 {
        return Err(Error::InvalidArgument(format!("need at least {} steps", batches * 10)));
    }
    let mut g = rng::stream(seed, Domain::Tower, u64::MAX);
    let mut state = TowerState::at_base(laws, 0, &mut g)?;
    let per = steps / batches;
    let mut batch_freq = Vec::with_capacity(batches);
    let mut returns: Vec<f64> = Vec::new();
    for _ in 0..batches {
        let mut at_base = 0usize;
        for _ in 0..per {
            if state.level == 0 {
                at_base += 1;
                returns.push(state.ret as f64);
            }
            state = tower_step(state, laws, &mut g)?;
        }
        batch_freq.push(at_base as f64 / per as f64);
    }
    let (f, fse) = mean_se(&batch_freq);
    let (r, rse) = mean_se(&returns);
    let product = f * r;
    let product_se = product * ((fse / f).powi(2) + (rse / r).powi(2)).sqrt();
    Ok(RenewalCheck {
        steps: per * batches,
        base_frequency: f,
        base_frequency_se: fse,
        mean_return: r,
        mean_return_se: rse,
        product,
        product_se,
        analytic_mean: laws.law(0)?.mean,
    })
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let m = v.len() as f64;
    let mean = v.iter().sum::<f64>() / m;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
    (mean, (var / m).sqrt())
}

/// Observables on the tower.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TowerObservable {
    Constant { value: f64 },
    /// Indicator of the base.
    Base,
    /// `cos(2π·mark)·λ^level`, Lipschitz in the tower metric for `λ < 1`.
    Mark { lambda: f64 },
}

impl TowerObservable {
    pub fn eval(&self, s: &TowerState) -> f64 {
        match *self {
            TowerObservable::Constant { value } => value,
            TowerObservable::Base => (s.level == 0) as u8 as f64,
            TowerObservable::Mark { lambda } => (2.0 * std::f64::consts::PI * s.mark).cos() * lambda.powi(s.level as i32),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayEstimate {
    pub lags: Vec<usize>,
    pub covariance: Vec<f64>,
    pub std_err: Vec<f64>,
    /// Lags with `|cov| > 3 SE`, the ones used in the fit.
    pub resolved: Vec<usize>,
    /// Log-log slope for polynomial tails, semilog slope otherwise.
    pub fit: Option<LineFit>,
    pub semilog: bool,
}

/// Monte Carlo `Cov(ψ(X_0), φ(X_n))` over `paths` stationary chains of one
/// driving realization.
pub fn decay_estimate(
    laws: &FiberLaws,
    psi: TowerObservable,
    phi: TowerObservable,
    lags: &[usize],
    paths: usize,
    seed: u64,
) -> Result<DecayEstimate> {
    if paths < 2 {
        return Err(Error::InvalidArgument("need at least two paths".into()));
    }
    let top = lags.iter().copied().max().unwrap_or(0);
    let rows: Vec<(f64, Vec<f64>)> = (0..paths)
        .into_par_iter()
        .map(|i| {
            let mut g: ChaCha8Rng = rng::stream(seed, Domain::Tower, i as u64);
            let mut s = TowerState::stationary(laws, 0, &mut g)?;
            let a = psi.eval(&s);
            let mut vals = Vec::with_capacity(lags.len());
            let mut li = 0;
            for step in 0..=top {
                while li < lags.len() && lags[li] == step {
                    vals.push(phi.eval(&s));
                    li += 1;
                }
                if step < top {
                    s = tower_step(s, laws, &mut g)?;
                }
            }
            Ok((a, vals))
        })
        .collect::<Result<_>>()?;
    let m = paths as f64;
    let ma = rows.iter().map(|r| r.0).sum::<f64>() / m;
    let mut covariance = Vec::with_capacity(lags.len());
    let mut std_err = Vec::with_capacity(lags.len());
    for l in 0..lags.len() {
        let mb = rows.iter().map(|r| r.1[l]).sum::<f64>() / m;
        let prods: Vec<f64> = rows.iter().map(|r| (r.0 - ma) * (r.1[l] - mb)).collect();
        let (c, se) = mean_se(&prods);
        covariance.push(c);
        std_err.push(se);
    }
    let resolved: Vec<usize> = (0..lags.len())
        .filter(|&l| lags[l] > 0 && covariance[l].abs() > 3.0 * std_err[l])
        .collect();
    let semilog = laws.spec().tail.kind != TailKind::Polynomial;
    let fit = (resolved.len() >= 3).then(|| {
        let x: Vec<f64> = resolved
            .iter()
            .map(|&l| if semilog { lags[l] as f64 } else { (lags[l] as f64).ln() })
            .collect();
        let y: Vec<f64> = resolved.iter().map(|&l| covariance[l].abs().ln()).collect();
        weighted_line(&x, &y, None)
    });
    Ok(DecayEstimate {
        lags: lags.to_vec(),
        covariance,
        std_err,
        resolved: resolved.iter().map(|&l| lags[l]).collect(),
        fit,
        semilog,
    })
}

/// Writes `n,survival` rows of the empirical tail.
pub fn write_tail_csv<W: Write>(samples: &[usize], mut w: W, config_hash: &str) -> Result<()> {
    writeln!(w, "# rdslab {} config {}", crate::VERSION, config_hash)?;
    writeln!(w, "n,survival")?;
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let total = sorted.len() as f64;
    for n in dyadic_grid(*sorted.last().unwrap_or(&1)) {
        let count = sorted.len() - sorted.partition_point(|&r| r <= n);
        writeln!(w, "{n},{}", count as f64 / total)?;
    }
    Ok(())
}
