//! Fading statistics: intensity histograms and CDFs, speckle contrast versus
//! core count, per-block differential-phase variance, and the analytic gamma
//! law for the mean of `N` independent exponential intensities.

use std::f64::consts::PI;

use rand_distr::{Distribution, Exp1};
use statrs::function::erf::erfc;

use crate::dsp::{intensity_average, ComplexTrace, DifferentialPhaseTrace};
use crate::rng::{substream, Stream};
use crate::{Error, Result};

/// Minimum number of samples accepted by [`intensity_statistics`].
pub const MIN_STATISTICS_SAMPLES: usize = 1000;

/// Upper edge of the default histogram, in units of the mean.
pub const DEFAULT_HISTOGRAM_MAX: f64 = 8.0;
pub const DEFAULT_HISTOGRAM_BINS: usize = 160;

/// Variance assigned to bins whose phase is effectively uniform (`π²/3`).
pub const SATURATED_VARIANCE: f64 = PI * PI / 3.0;

/// Mean resultant length below which a bin counts as saturated.
pub const SATURATION_RESULTANT: f64 = 0.9;

#[derive(Clone, Debug, PartialEq)]
pub struct IntensityStats {
    /// `probabilities.len() + 1` edges; the last bin also holds everything
    /// beyond its upper edge.
    pub bin_edges: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub mean: f64,
    pub contrast: f64,
    pub n_samples: usize,
    sorted: Vec<f64>,
}

impl IntensityStats {
    /// Empirical `P(I/⟨I⟩ < t)`.
    pub fn cdf(&self, t: f64) -> f64 {
        self.sorted.partition_point(|&x| x < t) as f64 / self.n_samples as f64
    }

    /// Normalized samples in ascending order.
    pub fn sorted_samples(&self) -> &[f64] {
        &self.sorted
    }
}

/// Statistics of mean-normalized intensity. Each array is normalized by its
/// own mean (one array per trace) before pooling.
pub fn intensity_statistics(arrays: &[Vec<f64>]) -> Result<IntensityStats> {
    intensity_statistics_with(arrays, DEFAULT_HISTOGRAM_BINS, DEFAULT_HISTOGRAM_MAX)
}

pub fn intensity_statistics_with(arrays: &[Vec<f64>], n_bins: usize, max_normalized: f64) -> Result<IntensityStats> {
    let total: usize = arrays.iter().map(Vec::len).sum();
    if total == 0 {
        return Err(Error::input("no intensity samples"));
    }
    if total < MIN_STATISTICS_SAMPLES {
        return Err(Error::input(format!(
            "{total} samples given, at least {MIN_STATISTICS_SAMPLES} are required"
        )));
    }
    if n_bins == 0 || !(max_normalized > 0.0) {
        return Err(Error::param("histogram needs at least one bin and a positive range"));
    }
    let mut sorted = Vec::with_capacity(total);
    for a in arrays {
        if a.is_empty() {
            continue;
        }
        let m = a.iter().sum::<f64>() / a.len() as f64;
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::input("intensity array has non-positive or non-finite mean"));
        }
        sorted.extend(a.iter().map(|x| x / m));
    }
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let contrast = contrast(&sorted);

    let width = max_normalized / n_bins as f64;
    let bin_edges: Vec<f64> = (0..=n_bins).map(|i| i as f64 * width).collect();
    let mut counts = vec![0usize; n_bins];
    for &x in &sorted {
        let i = ((x / width).floor().max(0.0) as usize).min(n_bins - 1);
        counts[i] += 1;
    }
    let probabilities = counts.iter().map(|&c| c as f64 / n).collect();
    Ok(IntensityStats {
        bin_edges,
        probabilities,
        mean,
        contrast,
        n_samples: sorted.len(),
        sorted,
    })
}

/// Standard deviation over mean (population form). Zero for constant input.
pub fn contrast(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    if var <= 0.0 {
        return 0.0;
    }
    var.sqrt() / mean
}

/// `P(mean of N i.i.d. Exp(1) < t)`, the regularized lower incomplete gamma
/// function `P(N, N·t)`.
pub fn gamma_fading_oracle(n_cores: usize, threshold: f64) -> f64 {
    assert!(n_cores >= 1, "n_cores must be >= 1");
    if threshold <= 0.0 {
        return 0.0;
    }
    let x = n_cores as f64 * threshold;
    let n = n_cores as u32;
    // log of the first term e^{-x} x^N / N!
    let ln_fact: f64 = (1..=n).map(|k| (k as f64).ln()).sum();
    if x < n as f64 + 1.0 {
        // Tail series Σ_{k≥N} keeps full relative precision for small P.
        let mut term = (-x + n as f64 * x.ln() - ln_fact).exp();
        let mut sum = term;
        let mut k = n as f64;
        loop {
            k += 1.0;
            term *= x / k;
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
        }
        sum.min(1.0)
    } else {
        let mut term = (-x).exp();
        let mut head = term;
        for k in 1..n {
            term *= x / k as f64;
            head += term;
        }
        (1.0 - head).max(0.0)
    }
}

/// Mean of `n_cores` independent unit-mean exponential intensities,
/// `n_samples` times. Models bin-scale fully developed speckle.
pub fn synthetic_speckle_intensity(n_cores: usize, n_samples: usize, seed: u64) -> Result<Vec<f64>> {
    if n_cores == 0 {
        return Err(Error::param("n_cores must be >= 1"));
    }
    let mut acc = vec![0.0; n_samples];
    for core in 0..n_cores {
        let mut rng = substream(seed, Stream::Speckle, core as u64, 0);
        for a in acc.iter_mut() {
            let e: f64 = Exp1.sample(&mut rng);
            *a += e;
        }
    }
    let k = n_cores as f64;
    acc.iter_mut().for_each(|a| *a /= k);
    Ok(acc)
}

/// Fraction of `values` strictly below `threshold`.
pub fn fraction_below(values: &[f64], threshold: f64) -> f64 {
    values.iter().filter(|&&x| x < threshold).count() as f64 / values.len() as f64
}

/// Speckle contrast of the `N`-core intensity average for every requested
/// `N`. `realizations[r]` holds the traces of all cores of one fiber
/// realization; `skip_edge_bins` bins at each end are left out.
pub fn contrast_vs_cores(
    realizations: &[Vec<ComplexTrace>],
    core_counts: &[usize],
    skip_edge_bins: usize,
) -> Result<Vec<(usize, f64)>> {
    let available = realizations
        .iter()
        .map(Vec::len)
        .min()
        .ok_or_else(|| Error::input("no realizations given"))?;
    core_counts
        .iter()
        .map(|&n| {
            if n == 0 || n > available {
                return Err(Error::param(format!(
                    "requested {n} cores but only {available} are simulated"
                )));
            }
            let mut arrays = Vec::with_capacity(realizations.len());
            for r in realizations {
                let avg = intensity_average(&r[..n])?;
                let hi = avg.len().saturating_sub(skip_edge_bins);
                if skip_edge_bins >= hi {
                    return Err(Error::input("edge trimming removes every bin"));
                }
                let inner = &avg[skip_edge_bins..hi];
                let m = inner.iter().sum::<f64>() / inner.len() as f64;
                arrays.push(inner.iter().map(|x| x / m).collect::<Vec<_>>());
            }
            let pooled: Vec<f64> = arrays.concat();
            Ok((n, contrast(&pooled)))
        })
        .collect()
}

/// Mean differential-phase variance across sweeps within one block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockVariance {
    pub start_m: f64,
    pub variance_rad2: f64,
    /// Fraction of bins in the block whose phase was saturated.
    pub saturated_fraction: f64,
}

/// Small-angle variance `-2 ln R` from the mean resultant length `R`, or
/// `None` when `R` is too small for the approximation.
pub fn circular_variance(phases: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut c, mut s, mut n) = (0.0, 0.0, 0usize);
    for p in phases {
        let (sp, cp) = p.sin_cos();
        c += cp;
        s += sp;
        n += 1;
    }
    if n == 0 {
        return None;
    }
    let r = (c * c + s * s).sqrt() / n as f64;
    (r > SATURATION_RESULTANT).then(|| (-2.0 * r.min(1.0).ln()).max(0.0))
}

/// Per-block variance of `dphi` across sweeps. Bins are assigned to blocks
/// by their gauge-center distance; a trailing partial block is kept when it
/// holds at least half the nominal bin count.
pub fn phase_variance_profile(sweeps: &[DifferentialPhaseTrace], block_length_m: f64) -> Result<Vec<BlockVariance>> {
    let first = sweeps.first().ok_or_else(|| Error::input("no sweeps given"))?;
    if sweeps.len() < 2 {
        return Err(Error::input("phase variance needs at least two sweeps"));
    }
    if sweeps.iter().any(|s| s.dphi.len() != first.dphi.len()) {
        return Err(Error::input("differential-phase traces differ in length"));
    }
    let dz = first.bin_spacing_m;
    let per_block = block_length_m / dz;
    if !(per_block >= 10.0) {
        return Err(Error::param(format!(
            "block length {block_length_m} m spans fewer than 10 bins"
        )));
    }
    let span = first.distance(first.dphi.len().saturating_sub(1)) + 0.5 * dz;
    if block_length_m > span {
        return Err(Error::param(format!(
            "block length {block_length_m} m exceeds the trace span {span:.3} m"
        )));
    }
    let n_blocks = (span / block_length_m).ceil() as usize;
    let mut sum = vec![0.0; n_blocks];
    let mut count = vec![0usize; n_blocks];
    let mut saturated = vec![0usize; n_blocks];
    for i in 0..first.dphi.len() {
        let b = ((first.distance(i) / block_length_m).floor() as usize).min(n_blocks - 1);
        let v = match circular_variance(sweeps.iter().map(|s| s.dphi[i])) {
            Some(v) => v,
            None => {
                saturated[b] += 1;
                SATURATED_VARIANCE
            }
        };
        sum[b] += v;
        count[b] += 1;
    }
    Ok((0..n_blocks)
        .filter(|&b| count[b] as f64 >= 0.5 * per_block)
        .map(|b| BlockVariance {
            start_m: b as f64 * block_length_m,
            variance_rad2: sum[b] / count[b] as f64,
            saturated_fraction: saturated[b] as f64 / count[b] as f64,
        })
        .collect())
}

/// End of the leading run of blocks whose variance is below `threshold`;
/// zero when the first block already fails.
pub fn variance_reach(profile: &[BlockVariance], block_length_m: f64, threshold: f64) -> f64 {
    profile
        .iter()
        .take_while(|b| b.variance_rad2 < threshold)
        .last()
        .map_or(0.0, |b| b.start_m + block_length_m)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MannKendall {
    pub s: f64,
    pub z: f64,
    /// One-sided p-value against the hypothesis of no increasing trend.
    pub p_increasing: f64,
}

/// Mann–Kendall trend test with tie correction and continuity correction.
pub fn mann_kendall(values: &[f64]) -> Result<MannKendall> {
    let n = values.len();
    if n < 3 {
        return Err(Error::input("trend test needs at least three values"));
    }
    let mut s = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            s += (values[j] - values[i]).partial_cmp(&0.0).map_or(0.0, |o| o as i8 as f64);
        }
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut ties = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        ties += t * (t - 1.0) * (2.0 * t + 5.0);
        i = j + 1;
    }
    let nf = n as f64;
    let var = (nf * (nf - 1.0) * (2.0 * nf + 5.0) - ties) / 18.0;
    let z = if var <= 0.0 {
        0.0
    } else if s > 0.0 {
        (s - 1.0) / var.sqrt()
    } else if s < 0.0 {
        (s + 1.0) / var.sqrt()
    } else {
        0.0
    };
    Ok(MannKendall {
        s,
        z,
        p_increasing: 0.5 * erfc(z / std::f64::consts::SQRT_2),
    })
}

/// Kolmogorov–Smirnov statistic of `samples` against an exponential law
/// with the sample mean.
pub fn ks_exponential(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::input("no samples"));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    if !(mean > 0.0) {
        return Err(Error::input("samples must have a positive mean"));
    }
    Ok(s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = 1.0 - (-x / mean).exp();
            (f - i as f64 / n).abs().max((i as f64 + 1.0) / n - f)
        })
        .fold(0.0, f64::max))
}

/// Asymptotic 1% critical value of the one-sample KS statistic.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use statrs::distribution::{ContinuousCDF, Gamma};

    #[test]
    fn oracle_values() {
        // reference values from an independent regularized-gamma implementation
        let want = [
            (1, 0.095_162_581_964_040_44),
            (2, 0.017_523_096_306_421_77),
            (3, 0.003_599_493_183_089_472),
            (4, 0.000_776_251_376_207_015_5),
            (5, 0.000_172_115_629_955_840_7),
            (6, 3.885_607_815_132_651e-5),
        ];
        for (n, p) in want {
            let got = gamma_fading_oracle(n, 0.1);
            assert!((got / p - 1.0).abs() < 1e-10, "N={n}: {got} vs {p}");
        }
        // closed forms
        assert!((gamma_fading_oracle(1, 0.1) - (1.0 - (-0.1f64).exp())).abs() < 1e-15);
        assert!((gamma_fading_oracle(2, 0.1) - (1.0 - (-0.2f64).exp() * 1.2)).abs() < 1e-15);
    }

    #[test]
    fn oracle_agrees_with_gamma_distribution() {
        for n in 1..=6 {
            let g = Gamma::new(n as f64, n as f64).unwrap();
            for t in [0.01, 0.1, 0.5, 1.0, 2.0, 5.0] {
                let a = gamma_fading_oracle(n, t);
                let b = g.cdf(t);
                assert!((a - b).abs() < 1e-12 + 1e-9 * b, "N={n} t={t}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn constant_intensity() {
        let s = intensity_statistics(&[vec![3.0; 2000]]).unwrap();
        assert_eq!(s.contrast, 0.0);
        assert_eq!(s.cdf(0.999), 0.0);
        assert_eq!(s.cdf(1.0001), 1.0);
        assert!((s.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(intensity_statistics(&[]), Err(Error::Input(_))));
        assert!(matches!(intensity_statistics(&[vec![1.0; 10]]), Err(Error::Input(_))));
    }

    #[test]
    fn single_core_speckle() {
        let x = synthetic_speckle_intensity(1, 100_000, 3).unwrap();
        let s = intensity_statistics(std::slice::from_ref(&x)).unwrap();
        assert!((s.contrast - 1.0).abs() < 0.02, "{}", s.contrast);
        assert!((s.cdf(0.1) - 0.095).abs() < 0.005, "{}", s.cdf(0.1));
        let d = ks_exponential(&x).unwrap();
        assert!(d < ks_critical_1pct(x.len()));
        // a uniform sample is rejected
        let u: Vec<f64> = (0..100_000).map(|i| (i as f64 + 0.5) / 1e5).collect();
        assert!(ks_exponential(&u).unwrap() > ks_critical_1pct(u.len()));
    }

    #[test]
    fn cdf_non_increasing_in_cores() {
        let mut prev = 1.0;
        for n in 1..=6 {
            let x = synthetic_speckle_intensity(n, 200_000, 11).unwrap();
            let s = intensity_statistics(&[x]).unwrap();
            let p = s.cdf(0.5);
            assert!(p <= prev);
            prev = p;
        }
    }

    #[test]
    fn mann_kendall_detects_trend() {
        let up: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let mk = mann_kendall(&up).unwrap();
        assert_eq!(mk.s, 45.0);
        assert!(mk.p_increasing < 1e-3);
        let down: Vec<f64> = up.iter().rev().copied().collect();
        assert!(mann_kendall(&down).unwrap().p_increasing > 0.99);
        let flat = vec![1.0; 10];
        assert!((mann_kendall(&flat).unwrap().p_increasing - 0.5).abs() < 1e-12);
    }

    fn dphi(values: Vec<f64>) -> DifferentialPhaseTrace {
        DifferentialPhaseTrace {
            dphi: values,
            gauge_bins: 2,
            source_cores: vec![0],
            bin_spacing_m: 0.01,
        }
    }

    #[test]
    fn variance_profile_blocks() {
        let quiet: Vec<_> = (0..5).map(|_| dphi(vec![0.3; 1000])).collect();
        let prof = phase_variance_profile(&quiet, 1.0).unwrap();
        assert_eq!(prof.len(), 10);
        assert!(prof.iter().all(|b| b.variance_rad2 < 1e-12));
        assert_eq!(variance_reach(&prof, 1.0, 0.02), 10.0);
        assert!(matches!(phase_variance_profile(&quiet, 0.05), Err(Error::Parameter(_))));
        assert!(matches!(phase_variance_profile(&quiet, 20.0), Err(Error::Parameter(_))));

        // alternating ±a across sweeps: resultant cos(a), variance -2 ln cos a
        let a: f64 = 0.2;
        let alt: Vec<_> = (0..6).map(|s| dphi(vec![if s % 2 == 0 { a } else { -a }; 1000])).collect();
        let prof = phase_variance_profile(&alt, 2.5).unwrap();
        let want = -2.0 * a.cos().ln();
        assert!(prof.iter().all(|b| (b.variance_rad2 - want).abs() < 1e-12));
    }

    #[test]
    fn saturated_bins_take_uniform_variance() {
        let spread: Vec<_> = (0..4).map(|s| dphi(vec![s as f64 * PI / 2.0; 100])).collect();
        let prof = phase_variance_profile(&spread, 0.5).unwrap();
        assert!(prof
            .iter()
            .all(|b| (b.variance_rad2 - SATURATED_VARIANCE).abs() < 1e-12 && b.saturated_fraction == 1.0));
        assert_eq!(variance_reach(&prof, 0.5, 0.02), 0.0);
    }

    proptest! {
        #[test]
        fn contrast_scale_invariant(xs in proptest::collection::vec(0.01f64..10.0, 2..200), s in 0.001f64..1000.0) {
            let scaled: Vec<f64> = xs.iter().map(|x| x * s).collect();
            let a = contrast(&xs);
            let b = contrast(&scaled);
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1e-12));
        }

        #[test]
        fn histogram_conserves_mass(seed in 0u64..1000, n in 1usize..6) {
            let x = synthetic_speckle_intensity(n, 1500, seed).unwrap();
            let s = intensity_statistics(&[x]).unwrap();
            prop_assert!((s.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let mut prev = 0.0;
            for t in [0.0, 0.1, 0.5, 1.0, 2.0, 1e9] {
                let c = s.cdf(t);
                prop_assert!(c >= prev);
                prev = c;
            }
            prop_assert_eq!(prev, 1.0);
        }
    }
}
