//! Driving sequences and fiber interval maps.
//!
//! A random system is a skew product `(ω, x) ↦ (σω, f_ω(x))`. Here `ω` is a
//! two-sided sequence of map parameters produced by a [`DrivingSpec`] and the
//! fiber maps come from a [`MapFamily`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Domain};

/// Absolute tolerance used when inverting monotone branches.
pub const BRANCH_TOL: f64 = 1e-12;

/// Inverse golden ratio, the default rotation angle.
pub const GOLDEN_ANGLE: f64 = 0.618_033_988_749_894_9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DrivingKind {
    /// Independent uniform parameters.
    Iid,
    /// Parameters read off an irrational circle rotation.
    Rotation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrivingSpec {
    pub kind: DrivingKind,
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    #[serde(default = "default_theta")]
    pub theta: f64,
    /// Initial rotation phase; drawn from the seed when absent.
    #[serde(default)]
    pub phase: Option<f64>,
    pub seed: u64,
}

fn default_theta() -> f64 {
    GOLDEN_ANGLE
}

impl DrivingSpec {
    pub fn iid(alpha_lo: f64, alpha_hi: f64, seed: u64) -> Self {
        DrivingSpec {
            kind: DrivingKind::Iid,
            alpha_lo,
            alpha_hi,
            theta: GOLDEN_ANGLE,
            phase: None,
            seed,
        }
    }

    pub fn rotation(alpha_lo: f64, alpha_hi: f64, seed: u64) -> Self {
        DrivingSpec {
            kind: DrivingKind::Rotation,
            ..Self::iid(alpha_lo, alpha_hi, seed)
        }
    }

    /// A single fixed parameter: the deterministic (autonomous) case.
    pub fn constant(alpha: f64) -> Self {
        Self::iid(alpha, alpha, 0)
    }

    pub fn with_phase(mut self, phase: f64) -> Self {
        self.phase = Some(phase);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_lo > 0.0) {
            return Err(Error::InvalidRange(format!(
                "alpha_lo = {} must be > 0",
                self.alpha_lo
            )));
        }
        if !(self.alpha_hi < 1.0) {
            return Err(Error::InvalidRange(format!(
                "alpha_hi = {} must be < 1",
                self.alpha_hi
            )));
        }
        if self.alpha_lo > self.alpha_hi {
            return Err(Error::InvalidRange(format!(
                "alpha_lo = {} exceeds alpha_hi = {}",
                self.alpha_lo, self.alpha_hi
            )));
        }
        if self.kind == DrivingKind::Rotation && !self.theta.is_finite() {
            return Err(Error::InvalidRange("rotation angle must be finite".into()));
        }
        Ok(())
    }

    fn phase(&self) -> f64 {
        self.phase
            .unwrap_or_else(|| rng::uniform_at(self.seed, Domain::Phase, 0))
    }

    /// The parameter at absolute index `i`; a pure function of `(self, i)`.
    pub fn param_at(&self, i: i64) -> f64 {
        let width = self.alpha_hi - self.alpha_lo;
        let u = match self.kind {
            DrivingKind::Iid => rng::uniform_at(self.seed, Domain::Driving, i),
            DrivingKind::Rotation => (self.phase() + i as f64 * self.theta).rem_euclid(1.0),
        };
        self.alpha_lo + width * u
    }
}

/// A finite two-sided window of the driving sequence, seen from `σ^origin ω`.
///
/// Relative index `i` in `lo..=hi` holds the parameter at absolute index
/// `origin + i`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterPath {
    spec: DrivingSpec,
    origin: i64,
    lo: i64,
    hi: i64,
    params: Vec<f64>,
}

impl ParameterPath {
    pub fn new(spec: DrivingSpec, lo: i64, hi: i64) -> Result<Self> {
        spec.validate()?;
        if lo > 0 || hi < 0 || lo > hi {
            return Err(Error::InvalidRange(format!(
                "window [{lo}, {hi}] must satisfy lo <= 0 <= hi"
            )));
        }
        Ok(Self::generate(spec, 0, lo, hi))
    }

    fn generate(spec: DrivingSpec, origin: i64, lo: i64, hi: i64) -> Self {
        let params = (lo..=hi).map(|i| spec.param_at(origin + i)).collect();
        ParameterPath {
            spec,
            origin,
            lo,
            hi,
            params,
        }
    }

    pub fn spec(&self) -> &DrivingSpec {
        &self.spec
    }

    pub fn origin(&self) -> i64 {
        self.origin
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.hi
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Parameter at relative index `i`, computed on the fly outside the window.
    pub fn param(&self, i: i64) -> f64 {
        if i >= self.lo && i <= self.hi {
            self.params[(i - self.lo) as usize]
        } else {
            self.spec.param_at(self.origin + i)
        }
    }

    pub fn covers(&self, lo: i64, hi: i64) -> bool {
        self.lo <= lo && hi <= self.hi
    }

    pub fn require(&self, lo: i64, hi: i64) -> Result<()> {
        if self.covers(lo, hi) {
            Ok(())
        } else {
            Err(Error::Window {
                lo: self.lo,
                hi: self.hi,
                need_lo: lo,
                need_hi: hi,
            })
        }
    }

    /// `σ^k ω` over the same relative window. Regeneration makes the shift exact.
    pub fn shift(&self, k: i64) -> Self {
        Self::generate(self.spec.clone(), self.origin + k, self.lo, self.hi)
    }

    /// The same `ω` over a window at least as large as `[lo, hi]`.
    pub fn extended(&self, lo: i64, hi: i64) -> Self {
        Self::generate(
            self.spec.clone(),
            self.origin,
            self.lo.min(lo).min(0),
            self.hi.max(hi).max(0),
        )
    }
}

/// Shorthand for [`ParameterPath::new`].
pub fn make_path(spec: DrivingSpec, lo: i64, hi: i64) -> Result<ParameterPath> {
    ParameterPath::new(spec, lo, hi)
}

/// Piecewise monotone map of [0, 1] with finitely many increasing full branches.
pub trait IntervalMap {
    fn eval(&self, x: f64) -> f64;

    /// Domains of the branches, left to right. Each is mapped onto [0, 1].
    fn branch_domains(&self) -> Vec<(f64, f64)>;

    /// Inverse of branch `b` at `y ∈ [0, 1]`.
    fn branch_inverse(&self, b: usize, y: f64) -> f64;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapFamily {
    /// Intermittent maps `x(1 + (2x)^α)` on [0, 1/2], `2x − 1` on (1/2, 1].
    Lsv,
    /// Two affine full branches split at `c = α`; slopes `1/α` and `1/(1 − α)`.
    ///
    /// `α = 1/2` is the doubling map. Lebesgue measure is invariant for every
    /// member, so the equivariant densities are uniform.
    Expanding,
}

impl MapFamily {
    pub fn name(&self) -> &'static str {
        match self {
            MapFamily::Lsv => "lsv",
            MapFamily::Expanding => "expanding",
        }
    }

    pub fn branch_count(&self) -> usize {
        2
    }

    pub fn fiber(self, alpha: f64) -> FiberMap {
        FiberMap {
            family: self,
            alpha,
        }
    }

    pub fn eval(&self, alpha: f64, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::OutOfDomain(x));
        }
        Ok(self.fiber(alpha).eval(x))
    }

    /// Lower bound on `|f'|` for the member with parameter `alpha`.
    ///
    /// LSV maps have a neutral fixed point, so the bound is 1; this is the
    /// backward-contraction constant `C = 1, K ≡ 1` for the family.
    pub fn min_derivative(&self, alpha: f64) -> f64 {
        match self {
            MapFamily::Lsv => 1.0,
            MapFamily::Expanding => (1.0 / alpha).min(1.0 / (1.0 - alpha)),
        }
    }

    /// Polynomial tail exponent `a` of the return times for parameters in
    /// `[alpha_lo, ·]`, or `None` when tails are exponential.
    pub fn tail_exponent(&self, alpha_lo: f64) -> Option<f64> {
        match self {
            MapFamily::Lsv => Some(1.0 / alpha_lo),
            MapFamily::Expanding => None,
        }
    }
}

/// Moment order `q = (a − 1 − δ)/(δ + 1)` admitted by tail exponent `a`.
///
/// For LSV families `a = 1/α₀`.
pub fn admissible_q(a: f64, delta: f64) -> f64 {
    (a - 1.0 - delta) / (delta + 1.0)
}

/// A single fiber map `f_α`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FiberMap {
    pub family: MapFamily,
    pub alpha: f64,
}

impl IntervalMap for FiberMap {
    fn eval(&self, x: f64) -> f64 {
        let a = self.alpha;
        let y = match self.family {
            MapFamily::Lsv => {
                if x <= 0.5 {
                    x * (1.0 + (2.0 * x).powf(a))
                } else {
                    2.0 * x - 1.0
                }
            }
            MapFamily::Expanding => {
                if x < a {
                    x / a
                } else {
                    (x - a) / (1.0 - a)
                }
            }
        };
        y.clamp(0.0, 1.0)
    }

    fn branch_domains(&self) -> Vec<(f64, f64)> {
        match self.family {
            MapFamily::Lsv => vec![(0.0, 0.5), (0.5, 1.0)],
            MapFamily::Expanding => vec![(0.0, self.alpha), (self.alpha, 1.0)],
        }
    }

    fn branch_inverse(&self, b: usize, y: f64) -> f64 {
        let a = self.alpha;
        match (self.family, b) {
            (MapFamily::Lsv, 0) => {
                if y <= 0.0 {
                    0.0
                } else if y >= 1.0 {
                    0.5
                } else {
                    bisect_increasing(|x| x * (1.0 + (2.0 * x).powf(a)), y, 0.0, 0.5, BRANCH_TOL)
                }
            }
            (MapFamily::Lsv, _) => 0.5 * (y + 1.0),
            (MapFamily::Expanding, 0) => a * y,
            (MapFamily::Expanding, _) => a + (1.0 - a) * y,
        }
    }
}

/// Solves `f(x) = y` for increasing `f` on `[lo, hi]` by bisection.
pub fn bisect_increasing<F: Fn(f64) -> f64>(f: F, y: f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if f(mid) < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Per-branch preimages of `target ⊆ [0, 1]`, one interval per branch.
pub fn branch_preimages<M: IntervalMap>(map: &M, target: (f64, f64)) -> Vec<(f64, f64)> {
    let (a, b) = (target.0.clamp(0.0, 1.0), target.1.clamp(0.0, 1.0));
    (0..map.branch_domains().len())
        .map(|k| (map.branch_inverse(k, a), map.branch_inverse(k, b)))
        .collect()
}

/// A family together with one realization of its driving sequence.
#[derive(Clone, Debug)]
pub struct RandomSystem {
    pub family: MapFamily,
    pub path: ParameterPath,
}

impl RandomSystem {
    pub fn new(family: MapFamily, path: ParameterPath) -> Self {
        RandomSystem { family, path }
    }

    /// The fiber map at relative index `i`.
    pub fn fiber(&self, i: i64) -> FiberMap {
        self.family.fiber(self.path.param(i))
    }

    pub fn shift(&self, k: i64) -> Self {
        RandomSystem {
            family: self.family,
            path: self.path.shift(k),
        }
    }

    /// `x_0 = x0`, `x_{i+1} = f_{params[i]}(x_i)` for `i < n`.
    pub fn orbit(&self, x0: f64, n: usize) -> Result<Vec<f64>> {
        if !(0.0..=1.0).contains(&x0) {
            return Err(Error::OutOfDomain(x0));
        }
        if n > 0 {
            self.path.require(0, n as i64 - 1)?;
        }
        let mut out = Vec::with_capacity(n + 1);
        let mut x = x0;
        out.push(x);
        for i in 0..n {
            x = self.fiber(i as i64).eval(x);
            debug_assert!((0.0..=1.0).contains(&x));
            out.push(x);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn degenerate_range_gives_constant_path() {
        for spec in [DrivingSpec::iid(0.3, 0.3, 5), DrivingSpec::rotation(0.3, 0.3, 5)] {
            let p = make_path(spec, -5, 5).unwrap();
            assert!(p.params().iter().all(|&a| a == 0.3));
        }
    }

    #[test]
    fn rotation_at_zero_phase_starts_at_alpha_lo() {
        let spec = DrivingSpec::rotation(0.2, 0.3, 1).with_phase(0.0);
        let p = make_path(spec, -3, 3).unwrap();
        assert_eq!(p.param(0), 0.2);
    }

    #[test]
    fn iid_paths_are_deterministic() {
        let spec = DrivingSpec::iid(0.1, 0.4, 99);
        let a = make_path(spec.clone(), -10, 10).unwrap();
        let b = make_path(spec, -10, 10).unwrap();
        assert_eq!(a, b);
        assert!(a.params().iter().all(|&x| (0.1..=0.4).contains(&x)));
    }

    #[test]
    fn invalid_ranges_are_rejected() {
        assert!(make_path(DrivingSpec::iid(0.0, 0.4, 1), -1, 1).is_err());
        assert!(make_path(DrivingSpec::iid(0.2, 1.0, 1), -1, 1).is_err());
        assert!(make_path(DrivingSpec::iid(0.5, 0.4, 1), -1, 1).is_err());
        assert!(make_path(DrivingSpec::iid(0.2, 0.4, 1), 1, 3).is_err());
    }

    #[test]
    fn shift_laws() {
        let p = make_path(DrivingSpec::iid(0.1, 0.9, 3), -8, 8).unwrap();
        assert_eq!(p.shift(0), p);
        assert_eq!(p.shift(3).shift(-3), p);
        assert_eq!(p.shift(1).param(0), p.param(1));
        assert_eq!(p.shift(2).shift(5), p.shift(7));
    }

    #[test]
    fn lsv_landmarks() {
        for &a in &[0.1, 0.25, 0.7] {
            let f = MapFamily::Lsv;
            assert_eq!(f.eval(a, 0.0).unwrap(), 0.0);
            assert_eq!(f.eval(a, 0.5).unwrap(), 1.0);
            assert_eq!(f.eval(a, 0.75).unwrap(), 0.5);
        }
        assert!(MapFamily::Lsv.eval(0.2, 1.5).is_err());
    }

    #[test]
    fn doubling_preimages() {
        let f = MapFamily::Expanding.fiber(0.5);
        let pre = branch_preimages(&f, (0.0, 1.0));
        assert_eq!(pre, vec![(0.0, 0.5), (0.5, 1.0)]);
        let g = MapFamily::Lsv.fiber(0.4);
        assert_eq!(branch_preimages(&g, (0.0, 1.0))[1], (0.5, 1.0));
    }

    #[test]
    fn lsv_first_branch_preimage_matches_independent_bisection() {
        // oracle: plain bisection on g(x) - 0.1 with a sign test
        let g = |x: f64| x * (1.0 + 2f64.powf(0.25) * x.powf(0.25)) - 0.1;
        let (mut lo, mut hi) = (0.0f64, 0.5f64);
        for _ in 0..200 {
            let m = 0.5 * (lo + hi);
            if g(m) > 0.0 {
                hi = m
            } else {
                lo = m
            }
        }
        let f = MapFamily::Lsv.fiber(0.25);
        let pre = branch_preimages(&f, (0.0, 0.1));
        assert_eq!(pre[0].0, 0.0);
        assert!((pre[0].1 - lo).abs() < 1e-12);
    }

    #[test]
    fn orbit_examples() {
        let lsv = RandomSystem::new(
            MapFamily::Lsv,
            make_path(DrivingSpec::iid(0.1, 0.5, 2), 0, 20).unwrap(),
        );
        assert!(lsv.orbit(0.0, 20).unwrap().iter().all(|&x| x == 0.0));
        assert_eq!(lsv.orbit(0.3, 0).unwrap(), vec![0.3]);
        assert!(lsv.orbit(0.3, 30).is_err());

        let dbl = RandomSystem::new(
            MapFamily::Expanding,
            make_path(DrivingSpec::constant(0.5), 0, 4).unwrap(),
        );
        let o = dbl.orbit(1.0 / 3.0, 2).unwrap();
        for (x, e) in o.iter().zip([1.0 / 3.0, 2.0 / 3.0, 1.0 / 3.0]) {
            assert!((x - e).abs() < 1e-15);
        }
    }

    #[test]
    fn admissible_q_for_lsv() {
        // a = 1/α₀ = 10, δ = 0.1 → q = 8.9/1.1
        assert!((admissible_q(10.0, 0.1) - 8.9 / 1.1).abs() < 1e-12);
        assert_eq!(MapFamily::Expanding.tail_exponent(0.3), None);
    }

    proptest! {
        #[test]
        fn shift_coherence(seed in 0u64..1000, x0 in 0.0f64..1.0, fam in 0usize..2) {
            let family = [MapFamily::Lsv, MapFamily::Expanding][fam];
            let sys = RandomSystem::new(family, make_path(DrivingSpec::iid(0.2, 0.7, seed), -2, 40).unwrap());
            let full = sys.orbit(x0, 30).unwrap();
            prop_assert!(full.iter().all(|x| (0.0..=1.0).contains(x)));
            let x1 = sys.fiber(0).eval(x0);
            let tail = sys.shift(1).orbit(x1, 29).unwrap();
            prop_assert_eq!(&full[1..], &tail[..]);
        }

        #[test]
        fn branch_preimages_tile_the_interval(alpha in 0.05f64..0.95, fam in 0usize..2) {
            let family = [MapFamily::Lsv, MapFamily::Expanding][fam];
            let f = family.fiber(alpha);
            let pre = branch_preimages(&f, (0.0, 1.0));
            prop_assert!(pre[0].0.abs() < 1e-12);
            prop_assert!((pre[0].1 - pre[1].0).abs() < 1e-12);
            prop_assert!((pre[1].1 - 1.0).abs() < 1e-12);
        }

        #[test]
        fn maps_stay_in_unit_interval(alpha in 0.01f64..0.99, x in 0.0f64..=1.0, fam in 0usize..2) {
            let family = [MapFamily::Lsv, MapFamily::Expanding][fam];
            let y = family.eval(alpha, x).unwrap();
            prop_assert!((0.0..=1.0).contains(&y));
        }
    }
}
