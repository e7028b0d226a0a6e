//! Empirical Wasserstein distances and rate regression.
//!
//! Path-space transport on `C[0, 1]` is out of reach, so paths are compared
//! through Lipschitz functionals (a lower bound on the path distance after
//! dividing by the Lipschitz constant) and through exact transport between
//! finite-dimensional marginals.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment;
use crate::error::{Error, Result};
use crate::processes::PathEnsemble;
use crate::rng::{self, Domain};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_BOOTSTRAP: usize = 400;
/// Largest ensemble size accepted by [`marginal_distance`].
pub const MAX_EXACT_SIZE: usize = 512;

/// `W_p` between two empirical measures on the line.
///
/// Equal sizes use the sorted coupling. Otherwise the `L^p` distance between
/// the two empirical quantile functions is integrated exactly.
pub fn w_p_1d(a: &[f64], b: &[f64], p: f64) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!("p = {p} must be >= 1")));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    Ok(w_p_sorted(&a, &b, p))
}

/// [`w_p_1d`] for inputs already sorted ascending.
pub fn w_p_sorted(a: &[f64], b: &[f64], p: f64) -> f64 {
    let cost = |x: f64, y: f64| (x - y).abs().powf(p);
    let total = if a.len() == b.len() {
        a.iter().zip(b).map(|(&x, &y)| cost(x, y)).sum::<f64>() / a.len() as f64
    } else {
        let (na, nb) = (a.len(), b.len());
        let (mut i, mut j) = (0usize, 0usize);
        let mut s = 0.0f64;
        let mut acc = 0.0;
        while i < na && j < nb {
            // next quantile breakpoint, compared as i'/na vs j'/nb without rounding
            let (ea, eb) = ((i + 1) * nb, (j + 1) * na);
            let e = ea.min(eb) as f64 / (na * nb) as f64;
            acc += (e - s) * cost(a[i], b[j]);
            s = e;
            if ea <= eb {
                i += 1;
            }
            if eb <= ea {
                j += 1;
            }
        }
        acc
    };
    total.powf(1.0 / p)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FunctionalKind {
    Endpoint,
    Sup,
    Inf,
    Value,
    Oscillation,
}

/// A Lipschitz functional of a polygonal path, w.r.t. the sup metric.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSpec {
    pub kind: FunctionalKind,
    /// Evaluation time for [`FunctionalKind::Value`].
    #[serde(default)]
    pub t: f64,
}

impl FunctionalSpec {
    pub const ENDPOINT: Self = Self::of(FunctionalKind::Endpoint);
    pub const SUP: Self = Self::of(FunctionalKind::Sup);
    pub const INF: Self = Self::of(FunctionalKind::Inf);
    pub const OSCILLATION: Self = Self::of(FunctionalKind::Oscillation);

    const fn of(kind: FunctionalKind) -> Self {
        FunctionalSpec { kind, t: 1.0 }
    }

    pub fn value_at(t: f64) -> Self {
        FunctionalSpec {
            kind: FunctionalKind::Value,
            t,
        }
    }

    pub fn name(&self) -> String {
        match self.kind {
            FunctionalKind::Endpoint => "endpoint".into(),
            FunctionalKind::Sup => "sup".into(),
            FunctionalKind::Inf => "inf".into(),
            FunctionalKind::Oscillation => "oscillation".into(),
            FunctionalKind::Value => format!("value@{}", self.t),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self.kind {
            FunctionalKind::Oscillation => 2.0,
            _ => 1.0,
        }
    }

    /// Evaluates on the polygonal path through `(times[i], values[i])`.
    pub fn eval(&self, times: &[f64], values: &[f64]) -> f64 {
        match self.kind {
            FunctionalKind::Endpoint => *values.last().expect("nonempty path"),
            FunctionalKind::Sup => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            FunctionalKind::Inf => values.iter().copied().fold(f64::INFINITY, f64::min),
            FunctionalKind::Oscillation => {
                let (lo, hi) = values
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
                hi - lo
            }
            FunctionalKind::Value => interpolate(times, values, self.t),
        }
    }
}

/// Value of the polygonal path at `t`.
pub fn interpolate(times: &[f64], values: &[f64], t: f64) -> f64 {
    let k = times.partition_point(|&s| s < t);
    if k == 0 {
        return values[0];
    }
    if k >= times.len() {
        return *values.last().expect("nonempty path");
    }
    let (t0, t1) = (times[k - 1], times[k]);
    let w = (t - t0) / (t1 - t0);
    values[k - 1] + w * (values[k] - values[k - 1])
}

/// `W_p` between the pushforwards of two ensembles under `f`.
///
/// The larger ensemble is subsampled to its leading paths so both samples
/// have the same size. Dividing by `f.lipschitz()` gives a lower bound on the
/// path-space distance.
pub fn functional_distance(a: &PathEnsemble, b: &PathEnsemble, f: FunctionalSpec, p: f64) -> Result<f64> {
    let m = a.len().min(b.len());
    let fa: Vec<f64> = (0..m).map(|i| a.functional(i, f)).collect();
    let fb: Vec<f64> = (0..m).map(|i| b.functional(i, f)).collect();
    w_p_1d(&fa, &fb, p)
}

/// Exact `W_p` between the joint laws of the values at `times`, with the
/// sup-norm ground cost, via optimal assignment.
pub fn marginal_distance(a: &PathEnsemble, b: &PathEnsemble, times: &[f64], p: f64) -> Result<f64> {
    let m = a.len().min(b.len());
    if m == 0 {
        return Err(Error::EmptySample);
    }
    if m > MAX_EXACT_SIZE {
        return Err(Error::InvalidArgument(format!(
            "exact marginal transport supports at most {MAX_EXACT_SIZE} paths, got {m}"
        )));
    }
    let cloud = |e: &PathEnsemble| -> Vec<Vec<f64>> {
        (0..m)
            .map(|i| times.iter().map(|&t| e.functional(i, FunctionalSpec::value_at(t))).collect())
            .collect()
    };
    Ok(cloud_distance(&cloud(a), &cloud(b), p))
}

/// Exact `W_p` between two equal-size point clouds with sup-norm ground cost.
pub fn cloud_distance(a: &[Vec<f64>], b: &[Vec<f64>], p: f64) -> f64 {
    let m = a.len();
    let mut cost = vec![0.0; m * m];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            let d = x.iter().zip(y).fold(0.0f64, |d, (u, v)| d.max((u - v).abs()));
            cost[i * m + j] = d.powf(p);
        }
    }
    let (_, total) = assignment::solve(&cost, m);
    (total / m as f64).powf(1.0 / p)
}

/// Lévy–Prokhorov bound `w^{p/(p+1)}` implied by a `W_p` value.
pub fn levy_prokhorov_bound(w: f64, p: f64) -> f64 {
    w.powf(p / (p + 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
}

/// Weighted least squares of `log d` on `log n`.
pub fn rate_fit(ns: &[f64], distances: &[f64], weights: Option<&[f64]>) -> Result<LineFit> {
    if ns.len() != distances.len() || weights.is_some_and(|w| w.len() != ns.len()) {
        return Err(Error::InvalidArgument("grid, distances and weights differ in length".into()));
    }
    if ns.len() < 4 {
        return Err(Error::InvalidArgument(format!("need at least 4 grid points, got {}", ns.len())));
    }
    if ns.iter().chain(distances).any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidArgument("grid values and distances must be positive".into()));
    }
    let x: Vec<f64> = ns.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = distances.iter().map(|v| v.ln()).collect();
    Ok(weighted_line(&x, &y, weights))
}

pub(crate) fn weighted_line(x: &[f64], y: &[f64], weights: Option<&[f64]>) -> LineFit {
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let sw: f64 = (0..x.len()).map(w).sum();
    let mx = (0..x.len()).map(|i| w(i) * x[i]).sum::<f64>() / sw;
    let my = (0..x.len()).map(|i| w(i) * y[i]).sum::<f64>() / sw;
    let sxy: f64 = (0..x.len()).map(|i| w(i) * (x[i] - mx) * (y[i] - my)).sum();
    let sxx: f64 = (0..x.len()).map(|i| w(i) * (x[i] - mx).powi(2)).sum();
    let slope = sxy / sxx;
    LineFit {
        slope,
        intercept: my - slope * mx,
    }
}

fn percentile_interval(mut v: Vec<f64>) -> (f64, f64) {
    v.sort_by(f64::total_cmp);
    let at = |q: f64| v[((q * (v.len() - 1) as f64).round() as usize).min(v.len() - 1)];
    (at(0.025), at(0.975))
}

/// Per-grid-point functional samples for both sides of a comparison.
#[derive(Clone, Debug)]
pub struct FunctionalSamples {
    pub n: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RateRow {
    pub n: usize,
    pub distance: f64,
    pub ci: (f64, f64),
    pub size_a: usize,
    pub size_b: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct FunctionalRate {
    pub functional: String,
    pub lipschitz: f64,
    pub rows: Vec<RateRow>,
    pub fit: Option<LineFit>,
    pub slope_ci: Option<(f64, f64)>,
}

/// Distances over an `n`-grid with bootstrap intervals and the fitted slope.
///
/// Each bootstrap replicate resamples both samples at every grid point with
/// replacement and refits the slope.
pub fn rate_with_bootstrap(
    f: FunctionalSpec,
    samples: &[FunctionalSamples],
    p: f64,
    replicates: usize,
    seed: u64,
) -> Result<FunctionalRate> {
    let mut sorted = Vec::with_capacity(samples.len());
    let mut rows = Vec::with_capacity(samples.len());
    for s in samples {
        let m = s.a.len().min(s.b.len());
        let mut a = s.a[..m].to_vec();
        let mut b = s.b[..m].to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        rows.push(RateRow {
            n: s.n,
            distance: w_p_1d(&a, &b, p)?,
            ci: (f64::NAN, f64::NAN),
            size_a: s.a.len(),
            size_b: s.b.len(),
        });
        sorted.push((a, b));
    }
    let reps: Vec<Vec<f64>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut g = rng::stream(seed, Domain::Bootstrap, r as u64);
            sorted
                .iter()
                .map(|(a, b)| {
                    let m = a.len();
                    let mut ra: Vec<f64> = (0..m).map(|_| a[g.random_range(0..m)]).collect();
                    let mut rb: Vec<f64> = (0..m).map(|_| b[g.random_range(0..m)]).collect();
                    ra.sort_by(f64::total_cmp);
                    rb.sort_by(f64::total_cmp);
                    w_p_sorted(&ra, &rb, p)
                })
                .collect()
        })
        .collect();
    if replicates > 0 {
        for (k, row) in rows.iter_mut().enumerate() {
            row.ci = percentile_interval(reps.iter().map(|r| r[k]).collect());
        }
    }
    let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let ds: Vec<f64> = rows.iter().map(|r| r.distance).collect();
    let fit = if rows.len() >= 4 { Some(rate_fit(&ns, &ds, None)?) } else { None };
    let slope_ci = if fit.is_some() && replicates > 0 {
        let slopes: Vec<f64> = reps
            .iter()
            .filter(|r| r.iter().all(|&d| d > 0.0))
            .map(|r| rate_fit(&ns, r, None).map(|l| l.slope))
            .collect::<Result<_>>()?;
        (!slopes.is_empty()).then(|| percentile_interval(slopes))
    } else {
        None
    };
    Ok(FunctionalRate {
        functional: f.name(),
        lipschitz: f.lipschitz(),
        rows,
        fit,
        slope_ci,
    })
}

/// Theoretical exponent band `[−1/4, −1/4 + 1/(2q)]`.
pub fn theoretical_band(q: f64) -> (f64, f64) {
    (-0.25, -0.25 + 0.5 / q)
}

pub const BAND_NOTE: &str = "The theory bounds the distance from above by C n^(-1/4 + 1/(2q)); no matching \
lower bound is claimed, so a measured slope steeper than the band is consistent with it.";

#[derive(Clone, Debug, Serialize)]
pub struct WassersteinReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub config_hash: String,
    pub p: f64,
    pub q: f64,
    pub band: (f64, f64),
    pub note: String,
    pub functionals: Vec<FunctionalRate>,
}

impl WassersteinReport {
    pub fn new(p: f64, q: f64, config_hash: String, functionals: Vec<FunctionalRate>) -> Self {
        WassersteinReport {
            schema_version: REPORT_SCHEMA_VERSION,
            tool_version: crate::VERSION.to_string(),
            config_hash,
            p,
            q,
            band: theoretical_band(q),
            note: BAND_NOTE.to_string(),
            functionals,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per functional and grid point.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# rdslab {} config {}", self.tool_version, self.config_hash)?;
        writeln!(w, "functional,n,distance,ci_lo,ci_hi,size_a,size_b,slope,band_lo,band_hi")?;
        for f in &self.functionals {
            let slope = f.fit.map_or(f64::NAN, |l| l.slope);
            for r in &f.rows {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{},{}",
                    f.functional, r.n, r.distance, r.ci.0, r.ci.1, r.size_a, r.size_b, slope, self.band.0, self.band.1
                )?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn w_p_examples() {
        let a = [0.3, -1.0, 2.5];
        assert_eq!(w_p_1d(&a, &a, 1.0).unwrap(), 0.0);
        assert_eq!(w_p_1d(&[0.0], &[1.0], 1.0).unwrap(), 1.0);
        // both couplings of {0,2} with {1,1} cost 1
        assert!((w_p_1d(&[0.0, 2.0], &[1.0, 1.0], 2.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(w_p_1d(&[], &[1.0], 1.0).is_err());
        assert!(w_p_1d(&[0.0], &[1.0], 0.5).is_err());
    }

    #[test]
    fn unequal_sizes_match_replicated_samples() {
        // {0, 1} vs {0, 0.5, 1}: replicate to a common size 6
        let a = [0.0, 1.0];
        let b = [0.0, 0.5, 1.0];
        let a6 = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let b6 = [0.0, 0.0, 0.5, 0.5, 1.0, 1.0];
        for p in [1.0, 2.0, 3.5] {
            let direct = w_p_1d(&a, &b, p).unwrap();
            let rep = w_p_1d(&a6, &b6, p).unwrap();
            assert!((direct - rep).abs() < 1e-12);
        }
    }

    #[test]
    fn levy_prokhorov_examples() {
        assert_eq!(levy_prokhorov_bound(0.0, 2.0), 0.0);
        assert_eq!(levy_prokhorov_bound(1.0, 3.0), 1.0);
        assert!((levy_prokhorov_bound(0.04, 1.0) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn rate_fit_examples() {
        let ns: Vec<f64> = (6..14).map(|k| 2f64.powi(k)).collect();
        let d: Vec<f64> = ns.iter().map(|n| n.powf(-0.25)).collect();
        assert!((rate_fit(&ns, &d, None).unwrap().slope + 0.25).abs() < 1e-10);
        let c = vec![0.3; ns.len()];
        assert!(rate_fit(&ns, &c, None).unwrap().slope.abs() < 1e-12);
        assert!(rate_fit(&ns[..3], &c[..3], None).is_err());
        let mut g = rng::stream(11, Domain::Synthetic, 0);
        let noisy: Vec<f64> = ns
            .iter()
            .map(|n| 3.0 * n.powf(-0.3) * (1.0 + 0.05 * (2.0 * g.random::<f64>() - 1.0)))
            .collect();
        assert!((rate_fit(&ns, &noisy, None).unwrap().slope + 0.3).abs() < 0.03);
    }

    #[test]
    fn bootstrap_interval_contains_the_point_estimate_trend() {
        let mut g = rng::stream(3, Domain::Synthetic, 1);
        let samples: Vec<FunctionalSamples> = (6..10)
            .map(|k| {
                let shift = 2f64.powi(-k / 2);
                FunctionalSamples {
                    n: 1 << k,
                    a: (0..500).map(|_| StandardNormal.sample(&mut g)).map(|z: f64| z + shift).collect(),
                    b: (0..500).map(|_| StandardNormal.sample(&mut g)).collect(),
                }
            })
            .collect();
        let r = rate_with_bootstrap(FunctionalSpec::ENDPOINT, &samples, 1.0, 50, 9).unwrap();
        let (lo, hi) = r.slope_ci.unwrap();
        assert!(lo <= hi);
        for row in &r.rows {
            assert!(row.ci.0 <= row.ci.1 && row.distance >= 0.0);
        }
        let again = rate_with_bootstrap(FunctionalSpec::ENDPOINT, &samples, 1.0, 50, 9).unwrap();
        assert_eq!(again.slope_ci, r.slope_ci);
    }

    #[test]
    fn functionals_on_a_polygon() {
        let t = [0.0, 0.25, 1.0];
        let v = [0.0, 2.0, -1.0];
        assert_eq!(FunctionalSpec::ENDPOINT.eval(&t, &v), -1.0);
        assert_eq!(FunctionalSpec::SUP.eval(&t, &v), 2.0);
        assert_eq!(FunctionalSpec::INF.eval(&t, &v), -1.0);
        assert_eq!(FunctionalSpec::OSCILLATION.eval(&t, &v), 3.0);
        assert_eq!(FunctionalSpec::value_at(0.125).eval(&t, &v), 1.0);
        assert_eq!(FunctionalSpec::value_at(0.25).eval(&t, &v), 2.0);
        assert_eq!(FunctionalSpec::value_at(0.625).eval(&t, &v), 0.5);
    }

    #[test]
    fn report_serializes_band() {
        let r = WassersteinReport::new(1.0, 8.0, "abc".into(), vec![]);
        let j = r.to_json().unwrap();
        assert!(j.contains("\"band\""));
        assert_eq!(r.band, (-0.25, -0.1875));
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("abc"));
    }

    fn sample() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-10.0f64..10.0, 1..30)
    }

    proptest! {
        #[test]
        fn metric_axioms(a in sample(), b in sample(), c in sample(), p in 1.0f64..4.0) {
            let ab = w_p_1d(&a, &b, p).unwrap();
            let ba = w_p_1d(&b, &a, p).unwrap();
            let ac = w_p_1d(&a, &c, p).unwrap();
            let cb = w_p_1d(&c, &b, p).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - ba).abs() <= 1e-10);
            prop_assert!(ab <= ac + cb + 1e-10);
        }

        #[test]
        fn scaling(a in sample(), b in sample(), c in -5.0f64..5.0) {
            let sa: Vec<f64> = a.iter().map(|x| c * x).collect();
            let sb: Vec<f64> = b.iter().map(|x| c * x).collect();
            let lhs = w_p_1d(&sa, &sb, 1.0).unwrap();
            let rhs = c.abs() * w_p_1d(&a, &b, 1.0).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs));
        }

        #[test]
        fn monotone_in_p(ab in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..30), p in 1.0f64..3.0, dq in 0.0f64..3.0) {
            let (a, b): (Vec<f64>, Vec<f64>) = ab.into_iter().unzip();
            prop_assert!(w_p_1d(&a, &b, p).unwrap() <= w_p_1d(&a, &b, p + dq).unwrap() + 1e-10);
        }

        #[test]
        fn one_dimensional_clouds_match_sorted_coupling(ab in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..20), p in 1.0f64..3.0) {
            let (a, b): (Vec<f64>, Vec<f64>) = ab.into_iter().unzip();
            let ca: Vec<Vec<f64>> = a.iter().map(|&x| vec![x]).collect();
            let cb: Vec<Vec<f64>> = b.iter().map(|&x| vec![x]).collect();
            prop_assert!((cloud_distance(&ca, &cb, p) - w_p_1d(&a, &b, p).unwrap()).abs() < 1e-10);
        }

        #[test]
        fn declared_lipschitz_constants_hold(
            u in proptest::collection::vec(-5.0f64..5.0, 9),
            v in proptest::collection::vec(-5.0f64..5.0, 9),
            t in 0.0f64..1.0,
        ) {
            let times: Vec<f64> = (0..9).map(|i| i as f64 / 8.0).collect();
            let d = u.iter().zip(&v).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            for f in [FunctionalSpec::ENDPOINT, FunctionalSpec::SUP, FunctionalSpec::INF, FunctionalSpec::OSCILLATION, FunctionalSpec::value_at(t)] {
                let gap = (f.eval(&times, &u) - f.eval(&times, &v)).abs();
                prop_assert!(gap <= f.lipschitz() * d + 1e-12);
            }
        }
    }

    #[test]
    fn three_point_clouds_match_exhaustive_pairing() {
        let mut g = rng::stream(5, Domain::Synthetic, 2);
        for _ in 0..20 {
            let mk = |g: &mut rand_chacha::ChaCha8Rng| -> Vec<Vec<f64>> {
                (0..3).map(|_| (0..2).map(|_| g.random::<f64>()).collect()).collect()
            };
            let (a, b) = (mk(&mut g), mk(&mut g));
            let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
            let d = |x: &Vec<f64>, y: &Vec<f64>| x.iter().zip(y).fold(0.0f64, |m, (u, v)| m.max((u - v).abs()));
            let best = perms
                .iter()
                .map(|p| (0..3).map(|i| d(&a[i], &b[p[i]]).powi(2)).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            let want = (best / 3.0).sqrt();
            assert!((cloud_distance(&a, &b, 2.0) - want).abs() < 1e-12);
        }
    }
}
