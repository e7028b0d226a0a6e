//! Martingale-coboundary decompositions at the Ulam level.
//!
//! For a centered observable `φ_ω` the primary decomposition is
//! `φ_ω = ψ_ω + χ_{σω}∘F_ω − χ_ω` with `χ_ω = Σ_{i≥1} P^i φ_{σ^{−i}ω}`
//! truncated at `K` terms, and `ψ_ω` in the kernel of `P_ω` up to the
//! truncation and discretization error.
//!
//! Tables are bin-valued. As a table, `χ_{σω}∘F_ω` is the Ulam conditional
//! expectation `L_ω χ_{σω}`; along an orbit the composition is taken
//! pointwise, `χ_{σω}[bin(F_ω x)]`, which makes the telescoping of Birkhoff
//! sums exact.
//!
//! The secondary decomposition applies the same construction to
//! `φ̆_ω = [P_ω(ψ_ω² − ∫ψ_ω² dμ_ω)]∘F_ω`, with the Cesàro sum
//! `Σ_{k≤n_c}(1 − k/n_c) P^k φ̆_{σ^{−k}ω}` standing in for `χ̆_ω`.

use std::collections::VecDeque;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::observable::Observable;
use crate::random_system::{DrivingSpec, IntervalMap, MapFamily, ParameterPath, RandomSystem};
use crate::transfer::{
    bin_centers, bin_of, l1_norm, lp_norm, quad, realization_seed, FiberMeasure, FiberSweep, TransferSetup,
    UlamCache, UlamOperator, DEFAULT_BURN,
};

/// Resolution, burn-in and truncation for a decomposition run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct DecompositionSetup {
    pub bins: usize,
    pub burn: usize,
    pub truncation: usize,
}

impl DecompositionSetup {
    pub fn new(bins: usize, burn: usize, truncation: usize) -> Self {
        DecompositionSetup {
            bins,
            burn,
            truncation,
        }
    }

    /// Default truncation for the family: 30 for expanding maps, 60 for LSV.
    pub fn for_family(family: MapFamily, bins: usize) -> Self {
        let truncation = match family {
            MapFamily::Expanding => 30,
            MapFamily::Lsv => 60,
        };
        Self::new(bins, DEFAULT_BURN, truncation)
    }

    pub fn transfer(&self) -> TransferSetup {
        TransferSetup::new(self.bins, self.burn)
    }
}

/// A system whose parameter window covers fibers `−history..=n` plus the
/// burn-in and truncation a decomposition with `setup` needs.
pub fn system_for(
    family: MapFamily,
    spec: DrivingSpec,
    setup: DecompositionSetup,
    history: usize,
    n: usize,
) -> Result<RandomSystem> {
    let lo = -((history + setup.truncation + setup.burn) as i64) - 1;
    Ok(RandomSystem::new(family, ParameterPath::new(spec, lo, n as i64 + 1)?))
}

/// Everything known about one fiber `k` during a sweep.
#[derive(Clone, Debug)]
pub struct FiberStep {
    pub index: i64,
    /// Operator from fiber `k` to `k + 1`, with both densities.
    pub op: UlamOperator,
    /// `∫ φ_raw dμ_k`.
    pub mean: f64,
    /// Centered observable table.
    pub phi: Vec<f64>,
    pub chi: Vec<f64>,
    /// `χ_{k+1}`.
    pub chi_next: Vec<f64>,
    pub psi: Vec<f64>,
    /// `∫ |P_k ψ_k| dμ_{k+1}`.
    pub residual: f64,
}

impl FiberStep {
    /// `φ_k(x)` for an arbitrary point, using the exact observable.
    pub fn phi_at(&self, obs: &Observable, x: f64) -> f64 {
        obs.eval(self.op.fiber, x) - self.mean
    }

    /// `ψ_k(x) = φ_k(x) − χ_{k+1}[bin(F_k x)] + χ_k[bin(x)]`.
    pub fn psi_at(&self, obs: &Observable, x: f64) -> f64 {
        let n = self.chi.len();
        let y = self.op.fiber.eval(x);
        self.phi_at(obs, x) - self.chi_next[bin_of(y, n)] + self.chi[bin_of(x, n)]
    }
}

/// Streams [`FiberStep`]s for `k = from..to`.
pub struct DecompositionStream<'a> {
    sweep: FiberSweep<'a>,
    obs: &'a Observable,
    truncation: usize,
    from: i64,
    /// `terms[i]` holds `P^{i+1} φ_{k−1−i}` at the current index `k`.
    terms: VecDeque<Vec<f64>>,
    first_terms: Option<Vec<Vec<f64>>>,
    bins: usize,
}

impl<'a> DecompositionStream<'a> {
    pub fn new(
        system: &'a RandomSystem,
        cache: &'a UlamCache,
        obs: &'a Observable,
        setup: DecompositionSetup,
        from: i64,
        to: i64,
    ) -> Result<Self> {
        obs.validate()?;
        let start = from - setup.truncation as i64;
        system
            .path
            .require(start - setup.burn as i64, (to - 1).max(start))?;
        let sweep = FiberSweep::new(system, cache, setup.transfer(), start, to)?;
        Ok(DecompositionStream {
            sweep,
            obs,
            truncation: setup.truncation,
            from,
            terms: VecDeque::with_capacity(setup.truncation),
            first_terms: None,
            bins: setup.bins,
        })
    }

    /// The individual terms `P^i φ_{from−i}`, `i = 1..K`, once the stream has
    /// reached `from`.
    pub fn first_terms(&self) -> Option<&[Vec<f64>]> {
        self.first_terms.as_deref()
    }

    fn advance(&mut self, op: &UlamOperator, phi: &[f64]) -> Vec<f64> {
        if self.truncation == 0 {
            return vec![0.0; self.bins];
        }
        let mut next = VecDeque::with_capacity(self.truncation);
        next.push_back(op.apply(phi));
        for t in self.terms.iter().take(self.truncation - 1) {
            next.push_back(op.apply(t));
        }
        self.terms = next;
        self.chi()
    }

    fn chi(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.bins];
        for t in &self.terms {
            for (o, v) in out.iter_mut().zip(t) {
                *o += v;
            }
        }
        out
    }
}

impl Iterator for DecompositionStream<'_> {
    type Item = Result<FiberStep>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let op = match self.sweep.next()? {
                Ok(op) => op,
                Err(e) => return Some(Err(e)),
            };
            let raw = self.obs.table(op.fiber, self.bins);
            let mean = op.source.integrate(&raw);
            let phi: Vec<f64> = raw.iter().map(|v| v - mean).collect();
            if op.index < self.from {
                self.advance(&op, &phi);
                continue;
            }
            if self.first_terms.is_none() {
                self.first_terms = Some(self.terms.iter().cloned().collect());
            }
            let chi = self.chi();
            let chi_next = self.advance(&op, &phi);
            let composed = op.compose(&chi_next);
            let psi: Vec<f64> = phi
                .iter()
                .zip(&composed)
                .zip(&chi)
                .map(|((p, c1), c0)| p - c1 + c0)
                .collect();
            let residual = ker_residual(&op, &psi);
            return Some(Ok(FiberStep {
                index: op.index,
                op,
                mean,
                phi,
                chi,
                chi_next,
                psi,
                residual,
            }));
        }
    }
}

/// Quadrature `L¹(μ_{k+1})` norm of `P_k ψ`.
pub fn ker_residual(op: &UlamOperator, psi: &[f64]) -> f64 {
    l1_norm(&op.apply(psi), &op.target.density)
}

/// `φ_raw − ∫φ_raw dμ_ω` as a table, with the subtracted mean.
pub fn center_observable(raw: &[f64], density: &FiberMeasure) -> (Vec<f64>, f64) {
    let m = density.integrate(raw);
    (raw.iter().map(|v| v - m).collect(), m)
}

/// Stored tables for one fiber.
#[derive(Clone, Debug, Serialize)]
pub struct FiberTables {
    pub index: i64,
    pub alpha: f64,
    pub mean: f64,
    pub density: Vec<f64>,
    pub phi: Vec<f64>,
    pub chi: Vec<f64>,
    pub psi: Vec<f64>,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Decomposition {
    pub truncation: usize,
    pub resolution: usize,
    pub from: i64,
    pub to: i64,
    pub fibers: Vec<FiberTables>,
    /// `χ_to`, needed to close the telescoping identity at the right end.
    pub chi_end: Vec<f64>,
    /// L¹ norms of the individual series terms at `from`.
    pub term_norms: Vec<f64>,
}

impl Decomposition {
    pub fn max_residual(&self) -> f64 {
        self.fibers.iter().fold(0.0, |m, f| m.max(f.residual))
    }

    pub fn mean_residual(&self) -> f64 {
        self.fibers.iter().map(|f| f.residual).sum::<f64>() / self.fibers.len().max(1) as f64
    }

    /// Writes `fiber,bin_center,chi,psi` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "fiber,bin_center,chi,psi")?;
        for f in &self.fibers {
            for ((x, c), p) in bin_centers(self.resolution).zip(&f.chi).zip(&f.psi) {
                writeln!(w, "{},{x},{c},{p}", f.index)?;
            }
        }
        Ok(())
    }
}

/// Primary decomposition for fibers `from..to`.
pub fn decompose(
    system: &RandomSystem,
    cache: &UlamCache,
    obs: &Observable,
    setup: DecompositionSetup,
    from: i64,
    to: i64,
) -> Result<Decomposition> {
    if to <= from {
        return Err(Error::InvalidArgument(format!("empty fiber range {from}..{to}")));
    }
    let mut stream = DecompositionStream::new(system, cache, obs, setup, from, to)?;
    let mut fibers = Vec::with_capacity((to - from) as usize);
    let mut chi_end = Vec::new();
    for step in &mut stream {
        let step = step?;
        chi_end = step.chi_next;
        fibers.push(FiberTables {
            index: step.index,
            alpha: step.op.fiber.alpha,
            mean: step.mean,
            density: step.op.source.density,
            phi: step.phi,
            chi: step.chi,
            psi: step.psi,
            residual: step.residual,
        });
    }
    let term_norms = match stream.first_terms() {
        Some(ts) => {
            let h = &fibers[0].density;
            ts.iter().map(|t| l1_norm(t, h)).collect()
        }
        None => Vec::new(),
    };
    Ok(Decomposition {
        truncation: setup.truncation,
        resolution: setup.bins,
        from,
        to,
        fibers,
        chi_end,
        term_norms,
    })
}

/// `χ` at fiber 0 together with its per-term L¹ norms.
pub fn chi(
    system: &RandomSystem,
    cache: &UlamCache,
    obs: &Observable,
    setup: DecompositionSetup,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = decompose(system, cache, obs, setup, 0, 1)?;
    let f = d.fibers.into_iter().next().expect("one fiber");
    Ok((f.chi, d.term_norms))
}

/// `P_k(ψ_k² − m_k)` at fiber `k + 1`, the table `φ̆_k = L_k` of it at fiber `k`,
/// and `m_k = ∫ψ_k² dμ_k`.
pub fn breve_phi(op: &UlamOperator, psi: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
    let sq: Vec<f64> = psi.iter().map(|v| v * v).collect();
    let m = quad(&sq, &op.source.density);
    let centered: Vec<f64> = sq.iter().map(|v| v - m).collect();
    let pushed = op.apply(&centered);
    let phi_breve = op.compose(&pushed);
    (pushed, phi_breve, m)
}

/// Pushed terms of the secondary series, at fibers 0 and 1.
struct BreveTerms {
    /// `at0[j − 1] = P^j φ̆_{−j}` at fiber 0.
    at0: Vec<Vec<f64>>,
    /// `at1[j − 1] = P^j φ̆_{1−j}` at fiber 1.
    at1: Vec<Vec<f64>>,
    phi_breve0: Vec<f64>,
    op0: UlamOperator,
}

fn breve_terms(
    system: &RandomSystem,
    cache: &UlamCache,
    obs: &Observable,
    setup: DecompositionSetup,
    depth: usize,
) -> Result<BreveTerms> {
    let from = -(depth as i64);
    let stream = DecompositionStream::new(system, cache, obs, setup, from, 1)?;
    // (origin, value) pairs, every value living at the current index
    let mut live: Vec<(i64, Vec<f64>)> = Vec::with_capacity(depth + 1);
    let mut at0 = Vec::new();
    let mut phi_breve0 = Vec::new();
    let mut op0 = None;
    for step in stream {
        let step = step?;
        let (_, pb, _) = breve_phi(&step.op, &step.psi);
        if step.index == 0 {
            // origin −j sits at position depth − j
            at0 = live.iter().rev().map(|(_, v)| v.clone()).collect();
            phi_breve0 = pb.clone();
        }
        live.push((step.index, pb));
        for (_, v) in live.iter_mut() {
            *v = step.op.apply(v);
        }
        if step.index == 0 {
            op0 = Some(step.op);
        }
    }
    let at1: Vec<Vec<f64>> = live.into_iter().rev().map(|(_, v)| v).collect();
    Ok(BreveTerms {
        at0,
        at1,
        phi_breve0,
        op0: op0.expect("fiber 0 visited"),
    })
}

fn cesaro(terms: &[Vec<f64>], n_c: usize, bins: usize) -> Vec<f64> {
    let mut out = vec![0.0; bins];
    for (j, t) in terms.iter().enumerate().take(n_c) {
        let w = 1.0 - (j + 1) as f64 / n_c as f64;
        for (o, v) in out.iter_mut().zip(t) {
            *o += w * v;
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct SecondaryDecomposition {
    pub cesaro_length: usize,
    pub phi_breve: Vec<f64>,
    pub chi_breve: Vec<f64>,
    pub psi_breve: Vec<f64>,
    /// `∫ φ̆_0 dμ_0`.
    pub phi_breve_mean: f64,
    /// `‖χ̆^{(n_c)} − χ̆^{(n_c/2)}‖₁`; a heuristic convergence certificate.
    pub stability_gap: f64,
    /// `∫ |P_0 ψ̆_0| dμ_1`.
    pub residual: f64,
}

/// Secondary decomposition at fiber 0 with Cesàro length `n_c`.
pub fn breve_decomposition(
    system: &RandomSystem,
    cache: &UlamCache,
    obs: &Observable,
    setup: DecompositionSetup,
    n_c: usize,
) -> Result<SecondaryDecomposition> {
    if n_c == 0 {
        return Err(Error::InvalidArgument("Cesàro length must be positive".into()));
    }
    let bt = breve_terms(system, cache, obs, setup, n_c)?;
    let n = setup.bins;
    let chi0 = cesaro(&bt.at0, n_c, n);
    let chi1 = cesaro(&bt.at1, n_c, n);
    let half = cesaro(&bt.at0, (n_c / 2).max(1), n);
    let h0 = &bt.op0.source.density;
    let gap = l1_norm(&chi0.iter().zip(&half).map(|(a, b)| a - b).collect::<Vec<_>>(), h0);
    let composed = bt.op0.compose(&chi1);
    let psi_breve: Vec<f64> = bt
        .phi_breve0
        .iter()
        .zip(&composed)
        .zip(&chi0)
        .map(|((p, c1), c0)| p - c1 + c0)
        .collect();
    Ok(SecondaryDecomposition {
        cesaro_length: n_c,
        phi_breve_mean: quad(&bt.phi_breve0, h0),
        residual: ker_residual(&bt.op0, &psi_breve),
        phi_breve: bt.phi_breve0,
        chi_breve: chi0,
        psi_breve,
        stability_gap: gap,
    })
}

/// `b_n = ‖Σ_{k≤n} P^k φ̆_{−k}‖_{L²(μ_0)}` for each `n` in `grid`.
pub fn breve_bound_diagnostic(
    system: &RandomSystem,
    cache: &UlamCache,
    obs: &Observable,
    setup: DecompositionSetup,
    grid: &[usize],
) -> Result<Vec<f64>> {
    let depth = grid.iter().copied().max().unwrap_or(0).max(1);
    let bt = breve_terms(system, cache, obs, setup, depth)?;
    let h0 = &bt.op0.source.density;
    let mut partial = vec![0.0; setup.bins];
    let mut norms = Vec::with_capacity(depth + 1);
    norms.push(0.0);
    for t in &bt.at0 {
        for (p, v) in partial.iter_mut().zip(t) {
            *p += v;
        }
        norms.push(lp_norm(&partial, h0, 2.0));
    }
    Ok(grid.iter().map(|&n| norms[n]).collect())
}

/// Estimate of `Σ² = E ∫ψ_ω² dμ_ω` with its standard error.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Sigma2 {
    pub value: f64,
    pub std_err: f64,
    pub realizations: usize,
}

/// Averages `∫ψ_0² dμ_0` over `realizations` independent driving sequences.
pub fn sigma2(
    spec: &DrivingSpec,
    family: MapFamily,
    obs: &Observable,
    setup: DecompositionSetup,
    realizations: usize,
) -> Result<Sigma2> {
    if realizations < 2 {
        return Err(Error::InvalidArgument("need at least two realizations".into()));
    }
    let cache = UlamCache::default();
    let mut vals = Vec::with_capacity(realizations);
    for j in 0..realizations {
        let mut s = spec.clone();
        s.seed = realization_seed(spec.seed, j as u64);
        let lo = -((setup.truncation + setup.burn) as i64);
        let system = RandomSystem::new(family, ParameterPath::new(s, lo, 1)?);
        let d = decompose(&system, &cache, obs, setup, 0, 1)?;
        let f = &d.fibers[0];
        vals.push(quad(&f.psi.iter().map(|v| v * v).collect::<Vec<_>>(), &f.density));
    }
    let j = realizations as f64;
    let mean = vals.iter().sum::<f64>() / j;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (j - 1.0);
    Ok(Sigma2 {
        value: mean,
        std_err: (var / j).sqrt(),
        realizations,
    })
}

/// Largest `|Σ_{k<n} φ_k(x_k) − Σ_{k<n} ψ_k(x_k) − χ_n(x_n) + χ_0(x_0)|` over
/// the prefixes of the orbit of `x0` through fibers `0..n`.
pub fn telescoping_residual(
    system: &RandomSystem,
    cache: &UlamCache,
    obs: &Observable,
    setup: DecompositionSetup,
    x0: f64,
    n: usize,
) -> Result<f64> {
    let bins = setup.bins;
    let stream = DecompositionStream::new(system, cache, obs, setup, 0, n as i64)?;
    let mut x = x0;
    let (mut sphi, mut spsi) = (0.0, 0.0);
    let mut chi0 = None;
    let mut worst = 0.0f64;
    for step in stream {
        let step = step?;
        let c0 = *chi0.get_or_insert(step.chi[bin_of(x0, bins)]);
        sphi += step.phi_at(obs, x);
        spsi += step.psi_at(obs, x);
        x = step.op.fiber.eval(x);
        let r = sphi - spsi - step.chi_next[bin_of(x, bins)] + c0;
        worst = worst.max(r.abs());
    }
    Ok(worst)
}
