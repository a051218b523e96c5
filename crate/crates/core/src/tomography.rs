// Copyright 2026 The qpt Authors
// SPDX-License-Identifier: Apache-2.0

//! Measurement simulation and maximum-likelihood chi reconstruction.
//!
//! The estimator works with the raw process matrix `X = S·χ` (trace `S`) and
//! keeps it in the form `X = f f†` where the root `f` is normalized so that
//! `Tr₂(f f†) = I_S`. Any root can be brought to that form by
//! `f = (T^{-1/2} ⊗ I) e` with `T = Tr₂(e e†)`, so every iterate is
//! completely positive and exactly trace preserving.
//!
//! Each iteration first tries the fixed-point update `e = R f` with
//! `R = Σ_r (k_r / p_r) A_r`. When that fails to raise the likelihood it
//! falls back to a backtracking gradient step `e = f + t·W f`, where `W` is
//! the likelihood gradient pulled back through the normalization. Only
//! accepted steps are recorded, so the likelihood trace never decreases.
//!
//! With a full-rank root the fixed point stalls when the optimum sits on the
//! boundary of the positive cone. Once it slows down, the remaining
//! iterations run projected gradient ascent on `X` with Barzilai-Borwein
//! steps and an Armijo search, projecting onto the CPTP set by alternating
//! projections.
//!
//! Convergence is judged on `Σ k_r ln(p_r / f_r)` with `f_r` the observed
//! frequencies. It differs from the log-likelihood by a constant but stays
//! small near the optimum, so its changes are not lost to rounding.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::channels::{Basis, ChiMatrix};
use crate::error::{Error, Result};
use crate::protocols::{pack_hermitian, unpack_hermitian, Protocol, ProtocolName};
use crate::qmatrix::{
    c, eigh, frobenius, hermitian_part, identity, partial_trace_second, real, spectral_map, tensor_product,
    ComplexMatrix,
};

/// Lower clamp on probabilities inside the log-likelihood.
pub const PROB_FLOOR: f64 = 1e-300;

/// The fixed-point phase hands over to projected gradient once a step gains
/// less than this fraction of the remaining gap to the saturated likelihood.
const SWITCH_TOLERANCE: f64 = 0.1;

/// Relative eigenvalue cutoff defining the support of a chi in the fidelity.
const SUPPORT_CUTOFF: f64 = 1e-13;

/// Outcome probabilities `p_r = S·Tr(A_r χ)` for every design row, clamped to
/// `[0, 1]`.
pub fn outcome_probabilities(chi: &ChiMatrix, protocol: &Protocol) -> Result<Vec<f64>> {
    check_chi(chi, protocol)?;
    let p = raw_probabilities(&protocol_pack(&chi.raw()), protocol);
    Ok(p.iter().map(|&x| x.clamp(0.0, 1.0)).collect())
}

fn check_chi(chi: &ChiMatrix, protocol: &Protocol) -> Result<()> {
    if chi.basis() != Basis::Natural {
        return Err(Error::InvalidParameter("probabilities need a natural-basis chi".into()));
    }
    if chi.dim() != protocol.dim {
        return Err(Error::DimensionMismatch(format!(
            "chi acts on dimension {}, protocol on {}",
            chi.dim(),
            protocol.dim
        )));
    }
    Ok(())
}

fn protocol_pack(raw: &ComplexMatrix) -> DVector<f64> {
    pack_hermitian(raw)
}

fn raw_probabilities(packed: &DVector<f64>, protocol: &Protocol) -> DVector<f64> {
    &protocol.design * packed
}

/// Outcome counts for every configuration of a protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountsRecord {
    pub protocol: ProtocolName,
    pub n_qubits: usize,
    /// Shots spent on each configuration.
    pub shots: Vec<u64>,
    /// Outcome counts per configuration, in POVM outcome order.
    pub counts: Vec<Vec<u64>>,
    pub seed: u64,
}

impl CountsRecord {
    pub fn total_shots(&self) -> u64 {
        self.shots.iter().sum()
    }

    /// Counts flattened in design-row order.
    pub fn flat(&self) -> Vec<f64> {
        self.counts.iter().flatten().map(|&k| k as f64).collect()
    }

    /// Checks the record against a protocol's configuration layout.
    pub fn validate(&self, protocol: &Protocol) -> Result<()> {
        if self.protocol != protocol.name || self.n_qubits != protocol.n_qubits {
            return Err(Error::InvalidParameter(format!(
                "counts were taken with {} on {} qubit(s), protocol is {} on {}",
                self.protocol, self.n_qubits, protocol.name, protocol.n_qubits
            )));
        }
        if self.counts.len() != protocol.configurations.len() || self.shots.len() != self.counts.len() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} configurations, got {} count rows and {} shot entries",
                protocol.configurations.len(),
                self.counts.len(),
                self.shots.len()
            )));
        }
        for (i, (row, cfg)) in self.counts.iter().zip(&protocol.configurations).enumerate() {
            if row.len() != cfg.outcomes.len() {
                return Err(Error::DimensionMismatch(format!(
                    "configuration {i} has {} outcomes, got {} counts",
                    cfg.outcomes.len(),
                    row.len()
                )));
            }
            if row.iter().sum::<u64>() != self.shots[i] {
                return Err(Error::InvalidParameter(format!(
                    "counts of configuration {i} do not sum to its {} shots",
                    self.shots[i]
                )));
            }
        }
        Ok(())
    }
}

/// Draws one multinomial sample per configuration with the protocol's shot
/// allocation. Identical seeds give identical records.
pub fn simulate_counts(chi: &ChiMatrix, protocol: &Protocol, total_shots: u64, seed: u64) -> Result<CountsRecord> {
    let probs = outcome_probabilities(chi, protocol)?;
    let shots = protocol.allocate_shots(total_shots);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = protocol
        .configurations
        .iter()
        .zip(&shots)
        .map(|(cfg, &n)| multinomial(&probs[cfg.outcomes.clone()], n, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(CountsRecord { protocol: protocol.name, n_qubits: protocol.n_qubits, shots, counts, seed })
}

/// Multinomial draw as a chain of conditional binomials.
pub fn multinomial(probs: &[f64], n: u64, rng: &mut impl rand::Rng) -> Result<Vec<u64>> {
    let mut out = vec![0u64; probs.len()];
    let mut remaining = n;
    let mut mass: f64 = probs.iter().sum();
    for (k, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if k + 1 == probs.len() {
            out[k] = remaining;
            break;
        }
        let q = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 0.0 };
        let draw = Binomial::new(remaining, q)
            .map_err(|e| Error::Numerical(format!("binomial({remaining}, {q}): {e}")))?
            .sample(rng);
        out[k] = draw;
        remaining -= draw;
        mass -= p;
    }
    Ok(out)
}

/// Noise-free counts `round(shots·p)`, with each configuration's rounding
/// residue absorbed by its most likely outcome.
pub fn expected_counts(chi: &ChiMatrix, protocol: &Protocol, total_shots: u64) -> Result<CountsRecord> {
    let probs = outcome_probabilities(chi, protocol)?;
    let shots = protocol.allocate_shots(total_shots);
    let counts = protocol
        .configurations
        .iter()
        .zip(&shots)
        .map(|(cfg, &n)| {
            let p = &probs[cfg.outcomes.clone()];
            let mut row: Vec<u64> = p.iter().map(|&x| (x * n as f64).round() as u64).collect();
            let sum: u64 = row.iter().sum();
            let top = (0..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap_or(0);
            if sum > n {
                row[top] -= (sum - n).min(row[top]);
            } else {
                row[top] += n - sum;
            }
            row
        })
        .collect();
    Ok(CountsRecord { protocol: protocol.name, n_qubits: protocol.n_qubits, shots, counts, seed: 0 })
}

/// Uhlmann fidelity `(Tr √(√χ₀ χ √χ₀))²` between unit-trace chi-matrices.
pub fn process_fidelity(chi: &ChiMatrix, chi0: &ChiMatrix) -> Result<f64> {
    if chi.dim() != chi0.dim() || chi.basis() != chi0.basis() {
        return Err(Error::DimensionMismatch(format!(
            "fidelity needs matching chis, got dim {} ({}) vs dim {} ({})",
            chi.dim(),
            chi.basis(),
            chi0.dim(),
            chi0.basis()
        )));
    }
    // Work on the support of the lower-rank argument: the expression is
    // symmetric, and restricting to a support avoids square roots of
    // round-off eigenvalues.
    let (a, b) = if chi.rank(SUPPORT_CUTOFF) < chi0.rank(SUPPORT_CUTOFF) { (chi0, chi) } else { (chi, chi0) };
    let (values, vectors) = eigh(b.matrix())?;
    let top = values.iter().cloned().fold(0.0, f64::max);
    let support: Vec<usize> = (0..values.len()).filter(|&j| values[j] > SUPPORT_CUTOFF * top).collect();
    let n = values.len();
    let mut half = ComplexMatrix::zeros(n, support.len());
    for (k, &j) in support.iter().enumerate() {
        half.set_column(k, &(vectors.column(j) * real(values[j].sqrt())));
    }
    let inner = hermitian_part(&(half.adjoint() * a.matrix() * &half));
    let (mu, _) = eigh(&inner)?;
    let tr: f64 = mu.iter().map(|&l| l.max(0.0).sqrt()).sum();
    Ok(tr * tr)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleOptions {
    pub max_iterations: usize,
    /// Stop after two consecutive steps with `|ΔL| < tolerance·max(|L − L_sat|, 1)`,
    /// where `L_sat` is the saturated log-likelihood.
    pub tolerance: f64,
    /// Columns of the root; `None` means full rank `S²`.
    pub rank: Option<usize>,
    /// Seed for the initial perturbation.
    pub seed: u64,
    /// Scale of the random Hermitian perturbation added to `I/S²`.
    pub init_noise: f64,
}

impl Default for MleOptions {
    fn default() -> Self {
        MleOptions { max_iterations: 2000, tolerance: 1e-10, rank: None, seed: 0, init_noise: 1e-3 }
    }
}

#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    pub chi_hat: ChiMatrix,
    /// Log-likelihood after initialization and after each accepted step.
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub tp_residual: f64,
    /// False when the protocol cannot identify the chi uniquely.
    pub informationally_complete: bool,
}

struct Problem<'a> {
    protocol: &'a Protocol,
    counts: Vec<f64>,
    /// Log of the observed frequency of each outcome within its setting.
    log_freq: Vec<f64>,
    /// `Σ k_r ln f_r`, the likelihood of the saturated model.
    saturated: f64,
    dim: usize,
}

impl<'a> Problem<'a> {
    fn probabilities(&self, x: &ComplexMatrix) -> DVector<f64> {
        raw_probabilities(&protocol_pack(x), self.protocol)
    }

    fn new(protocol: &'a Protocol, counts: &CountsRecord) -> Self {
        let flat = counts.flat();
        let mut log_freq = vec![0.0; flat.len()];
        for cfg in &protocol.configurations {
            let total: f64 = flat[cfg.outcomes.clone()].iter().sum();
            for r in cfg.outcomes.clone() {
                if flat[r] > 0.0 {
                    log_freq[r] = (flat[r] / total).ln();
                }
            }
        }
        let saturated = flat.iter().zip(&log_freq).map(|(k, f)| k * f).sum();
        Problem { protocol, counts: flat, log_freq, saturated, dim: protocol.dim }
    }

    /// `Σ k_r ln(p_r / f_r)`: the log-likelihood less its saturated value.
    /// Near the optimum this is small, so changes in it keep full precision.
    fn relative_log_likelihood(&self, p: &DVector<f64>) -> f64 {
        self.counts
            .iter()
            .zip(p.iter())
            .zip(&self.log_freq)
            .filter(|((&k, _), _)| k > 0.0)
            .map(|((&k, &q), &f)| k * (q.max(PROB_FLOOR).ln() - f))
            .sum()
    }

    /// `R = Σ_r (k_r / p_r) A_r`.
    fn gradient(&self, p: &DVector<f64>) -> ComplexMatrix {
        let w = DVector::from_iterator(
            p.len(),
            self.counts.iter().zip(p.iter()).map(|(&k, &q)| if k > 0.0 { k / q.max(PROB_FLOOR) } else { 0.0 }),
        );
        let packed = self.protocol.design.tr_mul(&w);
        unpack_hermitian(&packed, self.dim * self.dim)
    }

    /// Rescales the input factor of a root so that `Tr₂(f f†) = I`.
    fn normalize(&self, e: &ComplexMatrix) -> Result<ComplexMatrix> {
        let s = self.dim;
        let t = partial_trace_second(&(e * e.adjoint()), s, s)?;
        let (values, vectors) = eigh(&t)?;
        if !(values[0] > 1e-300) {
            return Err(Error::Numerical("root lost rank on the input factor".into()));
        }
        let inv_sqrt = spectral_map(&values, &vectors, |x| 1.0 / x.sqrt());
        Ok(tensor_product(&inv_sqrt, &identity(s)) * e)
    }
}

struct Iterate {
    root: ComplexMatrix,
    x: ComplexMatrix,
    p: DVector<f64>,
    ll: f64,
}

impl Problem<'_> {
    fn iterate(&self, root: ComplexMatrix) -> Iterate {
        let x = hermitian_part(&(&root * root.adjoint()));
        let p = self.probabilities(&x);
        let ll = self.relative_log_likelihood(&p);
        Iterate { root, x, p, ll }
    }
}

/// Projection onto completely positive, trace-preserving raw matrices by
/// alternating projections, finished with an exact trace-preserving rescale.
fn project_cptp(y: &ComplexMatrix, s: usize) -> Result<ComplexMatrix> {
    let n = s * s;
    let eye = identity(s);
    let mut x = hermitian_part(y);
    let mut pp = ComplexMatrix::zeros(n, n);
    let mut qq = ComplexMatrix::zeros(n, n);
    for _ in 0..500 {
        let a = &x + &pp;
        let excess = partial_trace_second(&a, s, s)? - &eye;
        let z = &a - tensor_product(&excess, &eye).unscale(s as f64);
        pp = &a - &z;
        let b = &z + &qq;
        let (values, vectors) = eigh(&hermitian_part(&b))?;
        let nx = spectral_map(&values, &vectors, |v| v.max(0.0));
        qq = &b - &nx;
        let moved = frobenius(&(&nx - &x));
        x = nx;
        let tp = frobenius(&(partial_trace_second(&x, s, s)? - &eye));
        if moved < 1e-12 * s as f64 && tp < 1e-10 {
            break;
        }
    }
    let t = partial_trace_second(&x, s, s)?;
    let (values, vectors) = eigh(&t)?;
    if !(values[0] > 1e-300) {
        return Err(Error::Numerical("projection lost rank on the input factor".into()));
    }
    let k = tensor_product(&spectral_map(&values, &vectors, |v| 1.0 / v.sqrt()), &eye);
    Ok(hermitian_part(&(&k * x * &k)))
}

fn initial_root(dim: usize, rank: usize, opts: &MleOptions) -> Result<ComplexMatrix> {
    let n = dim * dim;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let g = ComplexMatrix::from_fn(n, n, |_, _| {
        c(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    });
    let noise = hermitian_part(&g);
    let noise = noise.unscale(frobenius(&noise).max(1e-300) / (opts.init_noise * n as f64));
    // Unit-trace start I/S² plus noise, lifted to the raw normalization.
    let start = (identity(n).scale(1.0 / n as f64) + noise).scale(dim as f64);
    let (values, vectors) = eigh(&start)?;
    let mut root = ComplexMatrix::zeros(n, rank);
    for k in 0..rank {
        let j = n - 1 - k;
        let w = values[j].max(1e-12).sqrt();
        root.set_column(k, &(vectors.column(j) * real(w)));
    }
    Ok(root)
}

use rand::Rng;

/// Maximum-likelihood chi from multinomial counts.
///
/// Non-convergence within `max_iterations` is reported through
/// `converged = false` rather than an error.
pub fn mle_reconstruct(counts: &CountsRecord, protocol: &Protocol, opts: &MleOptions) -> Result<ReconstructionResult> {
    counts.validate(protocol)?;
    let flat = counts.flat();
    if flat.iter().all(|&k| k == 0.0) {
        return Err(Error::Degenerate("no counts to reconstruct from".into()));
    }
    let dim = protocol.dim;
    let n = dim * dim;
    let rank = opts.rank.unwrap_or(n).clamp(1, n);
    let problem = Problem::new(protocol, counts);

    let mut cur = problem.iterate(problem.normalize(&initial_root(dim, rank, opts)?)?);
    let mut trace = vec![problem.saturated + cur.ll];
    let mut converged = false;
    let mut iterations = 0;
    let mut step = 0.0_f64;
    let mut quiet = 0;
    let polish = rank == n;
    let switch_tol = if polish { SWITCH_TOLERANCE.max(opts.tolerance) } else { opts.tolerance };

    while iterations < opts.max_iterations {
        iterations += 1;
        let r = problem.gradient(&cur.p);

        // Fixed-point step.
        let mut next =
            problem.normalize(&(&r * &cur.root)).ok().map(|root| problem.iterate(root)).filter(|it| it.ll >= cur.ll);

        // Backtracking gradient step on the root.
        if next.is_none() {
            let s = dim;
            let sym = &cur.x * &r + &r * &cur.x;
            let h = partial_trace_second(&sym, s, s)?;
            let w = &r - tensor_product(&h, &identity(s)).scale(0.5);
            let dir = &w * &cur.root;
            let slope = 2.0 * frobenius(&dir).powi(2);
            if slope > 0.0 {
                if step <= 0.0 {
                    step = 1.0 / frobenius(&w).max(1e-300);
                }
                let mut t = 2.0 * step;
                for _ in 0..60 {
                    if let Ok(root) = problem.normalize(&(&cur.root + &dir * real(t))) {
                        let cand = problem.iterate(root);
                        if cand.ll >= cur.ll + 1e-4 * t * slope {
                            step = t;
                            next = Some(cand);
                            break;
                        }
                    }
                    t *= 0.5;
                }
            }
        }

        let Some(next) = next else {
            converged = true;
            break;
        };
        let delta = next.ll - cur.ll;
        trace.push(problem.saturated + next.ll);
        cur = next;
        if delta.abs() < switch_tol * cur.ll.abs().max(1.0) {
            quiet += 1;
            if quiet >= 2 {
                converged = !polish;
                break;
            }
        } else {
            quiet = 0;
        }
    }

    // Projected gradient on X. The optimum often sits on the boundary of the
    // positive cone where the fixed-point map slows to a crawl.
    if polish && iterations < opts.max_iterations {
        let mut x = cur.x.clone();
        let mut p = cur.p.clone();
        let mut ll = cur.ll;
        let mut g = problem.gradient(&p);
        let mut mu = frobenius(&x) / frobenius(&g).max(1e-300);
        let mut prev: Option<(ComplexMatrix, ComplexMatrix)> = None;
        quiet = 0;
        converged = false;
        while iterations < opts.max_iterations {
            iterations += 1;
            if let Some((px, pg)) = prev.take() {
                let s = &x - &px;
                let y = &g - &pg;
                let ss = s.iter().map(|z| z.norm_sqr()).sum::<f64>();
                let sy: f64 = s.iter().zip(y.iter()).map(|(a, b)| (a.conj() * b).re).sum();
                if sy < 0.0 && ss > 0.0 {
                    mu = (ss / -sy).clamp(mu * 1e-4, mu * 1e4);
                }
            }
            let target = project_cptp(&(&x + &g * real(mu)), dim)?;
            let dir = &target - &x;
            let slope: f64 = g.iter().zip(dir.iter()).map(|(a, b)| (a.conj() * b).re).sum();
            if !(slope > 0.0) {
                converged = true;
                break;
            }
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..50 {
                let cand = &x + &dir * real(t);
                let cp = problem.probabilities(&cand);
                let cl = problem.relative_log_likelihood(&cp);
                if cl >= ll + 1e-4 * t * slope {
                    accepted = Some((cand, cp, cl));
                    break;
                }
                t *= 0.5;
            }
            let Some((nx, np, nl)) = accepted else {
                converged = true;
                break;
            };
            let delta = nl - ll;
            trace.push(problem.saturated + nl);
            let ng = problem.gradient(&np);
            prev = Some((std::mem::replace(&mut x, nx), std::mem::replace(&mut g, ng)));
            p = np;
            ll = nl;
            if delta.abs() < opts.tolerance * ll.abs().max(1.0) {
                quiet += 1;
                if quiet >= 2 {
                    converged = true;
                    break;
                }
            } else {
                quiet = 0;
            }
        }
        let _ = p;
        cur.x = x;
    }

    let unit = cur.x.unscale(dim as f64);
    let chi_hat = ChiMatrix::from_unnormalized(dim, unit, Basis::Natural)?;
    let tp_residual = chi_hat.tp_residual();
    Ok(ReconstructionResult {
        chi_hat,
        log_likelihood: trace,
        iterations,
        converged,
        tp_residual,
        informationally_complete: protocol.is_informationally_complete(),
    })
}

/// Multinomial log-likelihood `Σ k_r ln p_r(χ)` of a record under a chi.
pub fn log_likelihood(chi: &ChiMatrix, counts: &CountsRecord, protocol: &Protocol) -> Result<f64> {
    check_chi(chi, protocol)?;
    counts.validate(protocol)?;
    let problem = Problem::new(protocol, counts);
    Ok(problem.saturated + problem.relative_log_likelihood(&problem.probabilities(&chi.raw())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{chi_from_kraus, chi_from_unitary, noisy_chi, random_channel, NoiseModel};
    use crate::gates::sqiswap;
    use crate::protocols::build_protocol;
    use crate::qmatrix::{testutil, vec};

    fn sqisw_chi(p: f64) -> ChiMatrix {
        noisy_chi(&NoiseModel::depolarizing(sqiswap(), p).unwrap()).unwrap()
    }

    /// Probability straight from the operator sum: Tr(M U ρ U†).
    fn direct_probability(u: &ComplexMatrix, rho: &ComplexMatrix, m: &ComplexMatrix) -> f64 {
        (m * u * rho * u.adjoint()).trace().re
    }

    #[test]
    fn probability_examples() {
        let id = chi_from_unitary(&identity(2)).unwrap();
        let p1 = build_protocol(ProtocolName::Standard, 1).unwrap();
        let probs = outcome_probabilities(&id, &p1).unwrap();
        // Input |0⟩ (index 0), POVM of |0⟩ (index 0), first outcome.
        assert!((probs[0] - 1.0).abs() < 1e-12);

        let p2 = build_protocol(ProtocolName::Standard, 2).unwrap();
        let probs = outcome_probabilities(&sqisw_chi(0.0), &p2).unwrap();
        // Input |01⟩ is index 1; the POVM built from |0⟩ on both qubits is
        // index 0 and its outcome (|0⟩⟨0|) ⊗ (I − |0⟩⟨0|) = |01⟩⟨01| is 1.
        let cfg = p2.configurations.iter().find(|c| c.input == 1 && c.povm == 0).unwrap();
        assert!((probs[cfg.outcomes.start + 1] - 0.5).abs() < 1e-12);

        let full = sqisw_chi(1.0);
        let tet = build_protocol(ProtocolName::Tetrahedron, 2).unwrap();
        for &p in &outcome_probabilities(&full, &tet).unwrap() {
            // Tetrahedral effects are rank-1 projectors scaled by 1/4 on two qubits.
            assert!((p - 0.25 * 0.25).abs() < 1e-12);
        }
        for cfg in p2.configurations.iter().take(20) {
            for r in cfg.outcomes.clone() {
                let p = outcome_probabilities(&full, &p2).unwrap()[r];
                let m = &p2.povms[cfg.povm][r - cfg.outcomes.start];
                assert!((p - m.trace().re / 4.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn probabilities_match_operator_sum() {
        let u = sqiswap().matrix;
        let chi = chi_from_unitary(&u).unwrap();
        for name in ProtocolName::ALL {
            let p = build_protocol(name, 2).unwrap();
            let probs = outcome_probabilities(&chi, &p).unwrap();
            for cfg in &p.configurations {
                for (o, m) in p.povms[cfg.povm].iter().enumerate() {
                    let d = direct_probability(&u, &p.inputs[cfg.input], m);
                    assert!((probs[cfg.outcomes.start + o] - d).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn povm_groups_sum_to_one() {
        let mut r = testutil::rng(31);
        for _ in 0..5 {
            let chi = chi_from_kraus(&random_channel(4, 6, &mut r).unwrap()).unwrap();
            for name in ProtocolName::ALL {
                let p = build_protocol(name, 2).unwrap();
                let probs = outcome_probabilities(&chi, &p).unwrap();
                for cfg in &p.configurations {
                    let s: f64 = probs[cfg.outcomes.clone()].iter().sum();
                    assert!((s - 1.0).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn probabilities_reject_mismatch() {
        let p = build_protocol(ProtocolName::Standard, 1).unwrap();
        assert!(outcome_probabilities(&sqisw_chi(0.2), &p).is_err());
    }

    #[test]
    fn simulate_examples() {
        let chi = sqisw_chi(0.5);
        let p = build_protocol(ProtocolName::Tetrahedron, 2).unwrap();
        let zero = simulate_counts(&chi, &p, 0, 1).unwrap();
        assert!(zero.counts.iter().flatten().all(|&k| k == 0));
        let a = simulate_counts(&chi, &p, 10_000, 7).unwrap();
        let b = simulate_counts(&chi, &p, 10_000, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.total_shots(), 10_000);
        a.validate(&p).unwrap();
        assert_ne!(a, simulate_counts(&chi, &p, 10_000, 8).unwrap());

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(multinomial(&[1.0, 0.0, 0.0], 500, &mut rng).unwrap(), vec![500, 0, 0]);
        assert_eq!(multinomial(&[0.0, 0.0, 1.0], 500, &mut rng).unwrap(), vec![0, 0, 500]);
    }

    #[test]
    fn multinomial_law_of_large_numbers() {
        let probs = [0.1, 0.25, 0.4, 0.25];
        let n = 200u64;
        let seeds = 1000;
        let mut mean = [0.0; 4];
        for seed in 0..seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = multinomial(&probs, n, &mut rng).unwrap();
            for i in 0..4 {
                mean[i] += k[i] as f64 / n as f64 / seeds as f64;
            }
        }
        for i in 0..4 {
            let se = (probs[i] * (1.0 - probs[i]) / (n as f64 * seeds as f64)).sqrt();
            assert!((mean[i] - probs[i]).abs() < 5.0 * se, "outcome {i}: {} vs {}", mean[i], probs[i]);
        }
    }

    #[test]
    fn fidelity_examples() {
        let chi = sqisw_chi(0.5);
        assert!((process_fidelity(&chi, &chi).unwrap() - 1.0).abs() < 1e-10);
        let ideal = sqisw_chi(0.0);
        let f = process_fidelity(&chi, &ideal).unwrap();
        assert!((f - 0.53125).abs() < 1e-10);
        let sym = process_fidelity(&ideal, &chi).unwrap();
        assert!((f - sym).abs() < 1e-10);
        // Identity and X channels have orthogonal rank-one chis.
        let a = chi_from_unitary(&identity(2)).unwrap();
        let b = chi_from_unitary(&crate::qmatrix::pauli_x()).unwrap();
        assert!(process_fidelity(&a, &b).unwrap().abs() < 1e-12);
        assert!(process_fidelity(&a, &chi).is_err());
    }

    #[test]
    fn fidelity_to_rank_one_is_overlap() {
        let mut r = testutil::rng(41);
        let u = testutil::random_unitary(&mut r, 2);
        let chi0 = chi_from_unitary(&u).unwrap();
        let v = vec(&u).scale(std::f64::consts::FRAC_1_SQRT_2);
        for _ in 0..10 {
            let chi = chi_from_kraus(&random_channel(2, 3, &mut r).unwrap()).unwrap();
            let overlap = (v.adjoint() * chi.matrix() * &v)[(0, 0)].re;
            let f = process_fidelity(&chi, &chi0).unwrap();
            assert!((f - overlap).abs() < 1e-9);
            assert!((-1e-12..=1.0 + 1e-10).contains(&f));
        }
    }

    #[test]
    fn fidelity_is_basis_independent() {
        let mut r = testutil::rng(43);
        let basis = crate::channels::pauli_basis(2).unwrap();
        let a = chi_from_kraus(&random_channel(4, 3, &mut r).unwrap()).unwrap();
        let b = chi_from_kraus(&random_channel(4, 16, &mut r).unwrap()).unwrap();
        let f = process_fidelity(&a, &b).unwrap();
        let pa = crate::channels::change_basis(&a, &basis).unwrap();
        let pb = crate::channels::change_basis(&b, &basis).unwrap();
        assert!((process_fidelity(&pa, &pb).unwrap() - f).abs() < 1e-10);
    }

    #[test]
    fn mle_recovers_identity_from_exact_counts() {
        let chi = chi_from_unitary(&identity(2)).unwrap();
        for name in ProtocolName::ALL {
            let p = build_protocol(name, 1).unwrap();
            let counts = expected_counts(&chi, &p, 1_000_000_000).unwrap();
            let res = mle_reconstruct(&counts, &p, &MleOptions::default()).unwrap();
            let f = process_fidelity(&res.chi_hat, &chi).unwrap();
            assert!(f > 1.0 - 1e-6, "{name}: F = {f}, iterations {}", res.iterations);
            assert!(res.log_likelihood.windows(2).all(|w| w[1] >= w[0]));
            assert!(res.tp_residual < 1e-6);
        }
    }

    #[test]
    fn mle_rank_one_root_stays_rank_one() {
        let chi = sqisw_chi(0.0);
        let p = build_protocol(ProtocolName::Tetrahedron, 2).unwrap();
        let counts = expected_counts(&chi, &p, 1_000_000_000).unwrap();
        let opts = MleOptions { rank: Some(1), ..MleOptions::default() };
        let res = mle_reconstruct(&counts, &p, &opts).unwrap();
        let ev = res.chi_hat.eigenvalues();
        assert!(ev[..15].iter().all(|&l| l.abs() < 1e-6));
        assert!(process_fidelity(&res.chi_hat, &chi).unwrap() > 1.0 - 1e-6);
    }

    #[test]
    fn mle_from_sampled_counts_is_close_and_valid() {
        let chi = sqisw_chi(0.5);
        let p = build_protocol(ProtocolName::Tetrahedron, 2).unwrap();
        let counts = simulate_counts(&chi, &p, 100_000, 5).unwrap();
        let res = mle_reconstruct(&counts, &p, &MleOptions::default()).unwrap();
        assert!(res.converged, "iterations {}", res.iterations);
        assert!(res.tp_residual < 1e-6);
        assert!(res.chi_hat.eigenvalues()[0] > -1e-10);
        assert!(res.log_likelihood.windows(2).all(|w| w[1] >= w[0]));
        let df = 1.0 - process_fidelity(&res.chi_hat, &chi).unwrap();
        assert!(df > 0.0 && df < 0.2, "dF = {df}");
        // The estimate beats the truth on its own data, by about half the
        // number of free parameters.
        let l_hat = log_likelihood(&res.chi_hat, &counts, &p).unwrap();
        let l_true = log_likelihood(&chi, &counts, &p).unwrap();
        assert!(l_hat >= l_true && l_hat - l_true < 240.0, "excess {}", l_hat - l_true);
    }

    #[test]
    fn mle_rejects_empty_and_mismatched_records() {
        let p = build_protocol(ProtocolName::Tetrahedron, 1).unwrap();
        let chi = chi_from_unitary(&identity(2)).unwrap();
        let empty = simulate_counts(&chi, &p, 0, 0).unwrap();
        assert!(matches!(mle_reconstruct(&empty, &p, &MleOptions::default()), Err(Error::Degenerate(_))));
        let other = build_protocol(ProtocolName::Standard, 1).unwrap();
        let counts = simulate_counts(&chi, &p, 100, 0).unwrap();
        assert!(mle_reconstruct(&counts, &other, &MleOptions::default()).is_err());
        let mut broken = counts.clone();
        broken.counts[0][0] += 1;
        assert!(mle_reconstruct(&broken, &p, &MleOptions::default()).is_err());
    }

    #[test]
    fn mle_reports_non_convergence() {
        let chi = sqisw_chi(0.5);
        let p = build_protocol(ProtocolName::Standard, 2).unwrap();
        let counts = simulate_counts(&chi, &p, 50_000, 2).unwrap();
        let opts = MleOptions { max_iterations: 2, ..MleOptions::default() };
        let res = mle_reconstruct(&counts, &p, &opts).unwrap();
        assert!(!res.converged);
        assert_eq!(res.iterations, 2);
    }
}
