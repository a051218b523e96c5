// Copyright 2026 The qpt Authors
// SPDX-License-Identifier: Apache-2.0

//! Monte Carlo fidelity-loss campaigns and the generalized chi-square
//! distribution `1 − F ≈ Σ d_j ξ_j²` used to summarize them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{noisy_chi, NoiseModel};
use crate::error::{Error, Result};
use crate::gates::gate_by_name;
use crate::protocols::{build_protocol, ProtocolName};
use crate::tomography::{expected_counts, mle_reconstruct, process_fidelity, simulate_counts, MleOptions};

/// Resamples drawn by [`compare_protocols`] for the ratio interval.
pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// One simulate, reconstruct, score experiment repeated `runs` times per
/// protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignConfig {
    pub gate: String,
    pub noise_p: f64,
    pub protocols: Vec<ProtocolName>,
    pub shots: u64,
    pub runs: usize,
    pub seed: u64,
    /// Use rounded expected counts instead of multinomial draws.
    pub exact: bool,
    pub max_iterations: usize,
    /// Worker threads; `None` leaves the choice to rayon.
    pub threads: Option<usize>,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            gate: "sqiswap".into(),
            noise_p: 0.5,
            protocols: ProtocolName::ALL.to_vec(),
            shots: 100_000,
            runs: 200,
            seed: 42,
            exact: false,
            max_iterations: MleOptions::default().max_iterations,
            threads: None,
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<()> {
        if self.shots < 1 {
            return Err(Error::InvalidParameter("shots must be at least 1".into()));
        }
        if self.runs < 1 {
            return Err(Error::InvalidParameter("runs must be at least 1".into()));
        }
        if self.protocols.is_empty() {
            return Err(Error::InvalidParameter("campaign needs at least one protocol".into()));
        }
        if !(0.0..=1.0).contains(&self.noise_p) {
            return Err(Error::InvalidParameter(format!("p must lie in [0,1], got {}", self.noise_p)));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidParameter("threads must be at least 1".into()));
        }
        Ok(())
    }

    /// Seed of run `run`; shared by all protocols.
    pub fn run_seed(&self, run: usize) -> u64 {
        self.seed.wrapping_add(run as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelitySample {
    pub run: usize,
    pub protocol: ProtocolName,
    pub seed: u64,
    pub fidelity: f64,
    pub loss: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSamples {
    pub protocol: ProtocolName,
    pub samples: Vec<FidelitySample>,
}

impl ProtocolSamples {
    pub fn losses(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.loss).collect()
    }

    pub fn mean_loss(&self) -> f64 {
        mean(&self.losses())
    }
}

/// Runs the campaign. Results are ordered by protocol (as configured) and
/// run index, and do not depend on the number of workers.
pub fn run_campaign(config: &CampaignConfig) -> Result<Vec<ProtocolSamples>> {
    config.validate()?;
    let model = NoiseModel::depolarizing(gate_by_name(&config.gate, None)?, config.noise_p)?;
    let truth = noisy_chi(&model)?;
    let n_qubits = truth.dim().trailing_zeros() as usize;
    let protocols = config.protocols.iter().map(|&name| build_protocol(name, n_qubits)).collect::<Result<Vec<_>>>()?;

    let jobs: Vec<(usize, usize)> =
        (0..protocols.len()).flat_map(|k| (0..config.runs).map(move |run| (k, run))).collect();
    let work = || -> Result<Vec<FidelitySample>> {
        jobs.par_iter()
            .map(|&(k, run)| {
                let protocol = &protocols[k];
                let seed = config.run_seed(run);
                let counts = if config.exact {
                    expected_counts(&truth, protocol, config.shots)?
                } else {
                    simulate_counts(&truth, protocol, config.shots, seed)?
                };
                let opts = MleOptions { max_iterations: config.max_iterations, seed, ..MleOptions::default() };
                let res = mle_reconstruct(&counts, protocol, &opts)?;
                let fidelity = process_fidelity(&res.chi_hat, &truth)?;
                Ok(FidelitySample {
                    run,
                    protocol: protocol.name,
                    seed,
                    fidelity,
                    loss: (1.0 - fidelity).clamp(0.0, 1.0),
                    converged: res.converged,
                    iterations: res.iterations,
                })
            })
            .collect()
    };
    let flat = match config.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("cannot start worker pool: {e}")))?
            .install(work)?,
        None => work()?,
    };

    let mut out: Vec<ProtocolSamples> =
        protocols.iter().map(|p| ProtocolSamples { protocol: p.name, samples: Vec::new() }).collect();
    for (sample, &(k, _)) in flat.into_iter().zip(&jobs) {
        out[k].samples.push(sample);
    }
    Ok(out)
}

/// Coefficients `d_j ≥ 0` of `Σ d_j ξ_j²` with `ξ_j ~ N(0, 1)` iid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gx2Coeffs {
    pub d: Vec<f64>,
}

impl Gx2Coeffs {
    pub fn new(d: Vec<f64>) -> Result<Self> {
        if let Some(bad) = d.iter().find(|&&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidParameter(format!("coefficients must be finite and non-negative, got {bad}")));
        }
        Ok(Gx2Coeffs { d })
    }

    pub fn j_max(&self) -> usize {
        self.d.len()
    }

    /// Effective degrees of freedom `(Σd)² / Σd²`.
    pub fn effective_dof(&self) -> f64 {
        let s: f64 = self.d.iter().sum();
        let q: f64 = self.d.iter().map(|x| x * x).sum();
        if q > 0.0 {
            s * s / q
        } else {
            0.0
        }
    }
}

pub fn gx2_moments(c: &Gx2Coeffs) -> (f64, f64) {
    let mean = c.d.iter().sum();
    let var = 2.0 * c.d.iter().map(|x| x * x).sum::<f64>();
    (mean, var)
}

pub fn gx2_sample(c: &Gx2Coeffs, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            c.d.iter()
                .map(|&d| {
                    let x: f64 = rng.sample(StandardNormal);
                    d * x * x
                })
                .sum()
        })
        .collect()
}

/// Moment-matching fit: `floor(ν)` equal coefficients plus one remainder
/// coefficient, where `ν = 2m²/v`. The mean is always reproduced. The
/// variance is reproduced unless `ν` exceeds `j_max`, in which case the fit
/// uses `j_max` equal coefficients (the smallest variance available).
pub fn gx2_fit(samples: &[f64], j_max: usize) -> Result<Gx2Coeffs> {
    if j_max < 1 {
        return Err(Error::InvalidParameter("j_max must be at least 1".into()));
    }
    if samples.len() < 2 {
        return Err(Error::Degenerate("need at least two samples".into()));
    }
    if let Some(bad) = samples.iter().find(|&&x| !(x >= 0.0)) {
        return Err(Error::InvalidParameter(format!("samples must be non-negative, got {bad}")));
    }
    let m = mean(samples);
    let v = variance(samples);
    if !(v > (1e-12 * m).powi(2)) || !(m > 0.0) {
        return Err(Error::Degenerate("samples have zero variance".into()));
    }
    let nu = 2.0 * m * m / v;
    if nu < 1.0 {
        return Err(Error::Degenerate(format!(
            "variance too large for non-negative coefficients (effective dof {nu:.4} < 1)"
        )));
    }
    if nu > j_max as f64 {
        return Gx2Coeffs::new(vec![m / j_max as f64; j_max]);
    }
    let n = nu.floor();
    // n a + b = m and n a² + b² = v/2.
    let disc = (n * ((n + 1.0) * v / 2.0 - m * m)).max(0.0);
    let a = (m * n + disc.sqrt()) / (n * (n + 1.0));
    let b = (m - n * a).max(0.0);
    let mut d = vec![a; n as usize];
    if b > 0.0 && d.len() < j_max {
        d.push(b);
    }
    Gx2Coeffs::new(d)
}

/// Histogram normalized to unit integral.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Density {
    pub edges: Vec<f64>,
    pub density: Vec<f64>,
}

impl Density {
    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn integral(&self) -> f64 {
        self.edges.windows(2).zip(&self.density).map(|(w, d)| (w[1] - w[0]) * d).sum()
    }
}

/// Histogram over `[0, max sample]`.
pub fn empirical_density(samples: &[f64], bins: usize) -> Result<Density> {
    let hi = samples.iter().cloned().fold(0.0, f64::max);
    density_on(samples, bins, hi)
}

/// Histogram over `[0, upper]`, so several sample sets can share bins.
pub fn density_on(samples: &[f64], bins: usize, upper: f64) -> Result<Density> {
    if bins < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 bins, got {bins}")));
    }
    if samples.is_empty() {
        return Err(Error::Degenerate("no samples to bin".into()));
    }
    if let Some(bad) = samples.iter().find(|&&x| !(0.0..=upper).contains(&x)) {
        return Err(Error::InvalidParameter(format!("sample {bad} outside [0, {upper}]")));
    }
    let upper = if upper > 0.0 { upper } else { 1.0 };
    let width = upper / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|k| if k == bins { upper } else { k as f64 * width }).collect();
    let mut counts = vec![0usize; bins];
    for &x in samples {
        let k = ((x / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let total = samples.len() as f64;
    let density = counts.iter().zip(edges.windows(2)).map(|(&k, w)| k as f64 / (total * (w[1] - w[0]))).collect();
    Ok(Density { edges, density })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub mean_std: f64,
    pub mean_tet: f64,
    pub ratio: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub resamples: usize,
}

/// Ratio of mean losses with a percentile bootstrap 95% interval.
pub fn compare_protocols(samples_std: &[f64], samples_tet: &[f64], seed: u64) -> Result<ComparisonReport> {
    if samples_std.is_empty() || samples_tet.is_empty() {
        return Err(Error::Degenerate("both sample sets must be nonempty".into()));
    }
    let mean_std = mean(samples_std);
    let mean_tet = mean(samples_tet);
    if !(mean_tet > 0.0) {
        return Err(Error::Degenerate("tetrahedron mean loss is zero".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut resample_mean =
        |xs: &[f64]| -> f64 { (0..xs.len()).map(|_| xs[rng.random_range(0..xs.len())]).sum::<f64>() / xs.len() as f64 };
    let mut ratios = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        let a = resample_mean(samples_std);
        let b = resample_mean(samples_tet);
        ratios.push(if b > 0.0 { a / b } else { f64::INFINITY });
    }
    ratios.sort_by(f64::total_cmp);
    Ok(ComparisonReport {
        mean_std,
        mean_tet,
        ratio: mean_std / mean_tet,
        ci_low: quantile(&ratios, 0.025),
        ci_high: quantile(&ratios, 0.975),
        resamples: BOOTSTRAP_RESAMPLES,
    })
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let t = pos - lo as f64;
    if t == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] * (1.0 - t) + sorted[hi] * t
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn skewness(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let n = xs.len() as f64;
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m3 = xs.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n;
    m3 / m2.powf(1.5)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let (mx, my) = (mean(&lx), mean(&ly));
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn coeffs(d: &[f64]) -> Gx2Coeffs {
        Gx2Coeffs::new(d.to_vec()).unwrap()
    }

    #[test]
    fn moments_of_small_examples() {
        assert_eq!(gx2_moments(&coeffs(&[1.0])), (1.0, 2.0));
        assert_eq!(gx2_moments(&coeffs(&[1.0, 1.0, 1.0])), (3.0, 6.0));
        assert_eq!(gx2_moments(&coeffs(&[0.5, 0.25])), (0.75, 0.625));
    }

    #[test]
    fn negative_coefficients_rejected() {
        assert!(Gx2Coeffs::new(vec![1.0, -0.1]).is_err());
    }

    #[test]
    fn sampling_matches_moments() {
        let xs = gx2_sample(&coeffs(&[1.0]), 200_000, 1);
        assert!((mean(&xs) - 1.0).abs() < 0.01);
        let xs = gx2_sample(&coeffs(&[2.0, 3.0]), 200_000, 2);
        assert!((variance(&xs) / 26.0 - 1.0).abs() < 0.03, "{}", variance(&xs));
        assert!(gx2_sample(&coeffs(&[]), 10, 0).iter().all(|&x| x == 0.0));
        assert_eq!(gx2_sample(&coeffs(&[1.0]), 5, 9), gx2_sample(&coeffs(&[1.0]), 5, 9));
    }

    #[test]
    fn fit_round_trips_dof() {
        let xs = gx2_sample(&coeffs(&[1.0; 240]), 20_000, 3);
        let fit = gx2_fit(&xs, 1000).unwrap();
        assert!((fit.effective_dof() / 240.0 - 1.0).abs() < 0.05, "{}", fit.effective_dof());
        let (m, v) = gx2_moments(&fit);
        assert!((m - mean(&xs)).abs() < 1e-9 * m);
        assert!((v / variance(&xs) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fit_caps_at_j_max() {
        let xs = gx2_sample(&coeffs(&[1.0; 50]), 5_000, 4);
        let fit = gx2_fit(&xs, 10).unwrap();
        assert_eq!(fit.j_max(), 10);
        assert!((gx2_moments(&fit).0 - mean(&xs)).abs() < 1e-9 * mean(&xs));
    }

    #[test]
    fn fit_rejects_degenerate_samples() {
        assert!(matches!(gx2_fit(&[0.3; 100], 10), Err(Error::Degenerate(_))));
        assert!(gx2_fit(&[1.0, -1.0], 10).is_err());
        // Variance beyond a single chi-square-1 term.
        assert!(gx2_fit(&[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 10.0], 10).is_err());
    }

    #[test]
    fn density_is_normalized_and_flat_for_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>()).collect();
        let d = empirical_density(&xs, 10).unwrap();
        assert!((d.integral() - 1.0).abs() < 1e-12);
        assert!(d.density.iter().all(|&v| (v - 1.0).abs() < 0.05));
        assert!(empirical_density(&[], 10).is_err());
        assert!(empirical_density(&xs, 1).is_err());
        let zeros = empirical_density(&[0.0, 0.0], 4).unwrap();
        assert!((zeros.integral() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gx2_density_is_right_skewed() {
        let xs = gx2_sample(&coeffs(&[1.0; 5]), 10_000, 6);
        assert!(skewness(&xs) > 0.0);
    }

    #[test]
    fn comparison_ratios() {
        let a = [0.1, 0.2, 0.3, 0.4];
        let r = compare_protocols(&a, &a, 0).unwrap();
        assert_eq!(r.ratio, 1.0);
        assert!(r.ci_low <= 1.0 && r.ci_high >= 1.0);
        let r = compare_protocols(&[2.0, 3.0], &[1.0, 1.0], 0).unwrap();
        assert_eq!(r.ratio, 2.5);
        assert!(compare_protocols(&[], &a, 0).is_err());
    }

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 / v).collect();
        assert!((log_log_slope(&x, &y) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_mode_campaign_is_nearly_lossless() {
        let cfg = CampaignConfig {
            protocols: vec![ProtocolName::Tetrahedron],
            shots: 1_000_000_000_000,
            runs: 1,
            exact: true,
            ..CampaignConfig::default()
        };
        let out = run_campaign(&cfg).unwrap();
        assert!(out[0].samples[0].loss < 1e-6, "{}", out[0].samples[0].loss);
    }

    #[test]
    fn campaign_is_independent_of_worker_count() {
        let base = CampaignConfig { shots: 20_000, runs: 3, seed: 7, ..CampaignConfig::default() };
        let one = run_campaign(&CampaignConfig { threads: Some(1), ..base.clone() }).unwrap();
        let two = run_campaign(&CampaignConfig { threads: Some(2), ..base }).unwrap();
        assert_eq!(one, two);
        assert_eq!(one.len(), 2);
        assert!(one.iter().all(|p| p.samples.iter().enumerate().all(|(k, s)| s.run == k && s.seed == 7 + k as u64)));
        assert!(one.iter().flat_map(|p| &p.samples).all(|s| (0.0..=1.0).contains(&s.loss)));
    }

    #[test]
    fn campaign_rejects_bad_config() {
        assert!(run_campaign(&CampaignConfig { runs: 0, ..CampaignConfig::default() }).is_err());
        assert!(run_campaign(&CampaignConfig { noise_p: 1.5, ..CampaignConfig::default() }).is_err());
        assert!(run_campaign(&CampaignConfig { gate: "toffoli".into(), ..CampaignConfig::default() }).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn moments_are_sums(d in proptest::collection::vec(0.0f64..5.0, 0..20)) {
            let (m, v) = gx2_moments(&coeffs(&d));
            prop_assert!((m - d.iter().sum::<f64>()).abs() < 1e-12);
            prop_assert!(v >= 0.0);
        }

        #[test]
        fn density_integrates_to_one(xs in proptest::collection::vec(0.0f64..10.0, 1..200), bins in 2usize..50) {
            let d = empirical_density(&xs, bins).unwrap();
            prop_assert!((d.integral() - 1.0).abs() < 1e-12);
        }
    }
}
