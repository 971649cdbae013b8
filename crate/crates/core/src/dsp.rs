//! Range compression and multi-core fading suppression.
//!
//! A beat record is windowed and Fourier transformed; bin `b` of the
//! positive half maps to distance `b·c / (2·n·ΔF·P)` where `ΔF` is the sweep
//! range and `P` the zero-padding factor.
//!
//! Multi-core combination happens in two flavours:
//!
//! * [`intensity_average`] averages `|C_i(z)|²` over cores; for independent
//!   fully developed speckle the contrast falls as `1/√N`.
//! * [`rvs_differential_phase`] forms the vector sum
//!   `V(z) = Σ_i C_i(z+g)·conj(C_i(z))` and returns `arg V`. Each core's
//!   vector has length `|C_i(z+g)||C_i(z)|`, so faded cores contribute
//!   almost nothing to the rotation of the sum.
//!
//! For vibration sensing the inputs to `rvs_differential_phase` are
//! phase-change traces from [`phase_change`] (current acquisition times the
//! conjugate of a reference acquisition), which makes the result the spatial
//! derivative of the temporal phase change.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::engine::{Acquisition, BeatRecord};
use crate::{Error, Result, SPEED_OF_LIGHT};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Rectangular,
    #[default]
    Hanning,
}

impl Window {
    /// Periodic (DFT-even) coefficients of length `m`.
    pub fn coefficients(self, m: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; m],
            Window::Hanning => (0..m)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / m as f64).cos())
                .collect(),
        }
    }

    pub fn sum(self, m: usize) -> f64 {
        match self {
            Window::Rectangular => m as f64,
            Window::Hanning => 0.5 * m as f64,
        }
    }

    pub fn sum_sq(self, m: usize) -> f64 {
        match self {
            Window::Rectangular => m as f64,
            Window::Hanning => 0.375 * m as f64,
        }
    }

    /// Transform of the windowed record for a tone `x` FFT bins away:
    /// `K(x) = Σ_{m<M} w[m]·exp(j2πxm/L)` with FFT length `L = M·P`.
    pub fn response(self, x: f64, m: usize, l: usize) -> Complex64 {
        let p = (l / m) as f64;
        match self {
            Window::Rectangular => dirichlet(x, m, l),
            Window::Hanning => {
                dirichlet(x, m, l) * 0.5 - dirichlet(x + p, m, l) * 0.25 - dirichlet(x - p, m, l) * 0.25
            }
        }
    }

    /// Full width of the main lobe at half power, in unpadded bins.
    pub fn half_power_width_bins(self) -> f64 {
        let m = 1 << 16;
        let peak = self.response(0.0, m, m).norm_sqr();
        let (mut lo, mut hi) = (0.0, 1.5);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if self.response(mid, m, m).norm_sqr() > 0.5 * peak {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        2.0 * lo
    }
}

/// `Σ_{m<M} exp(j2πxm/L)`.
pub(crate) fn dirichlet(x: f64, m: usize, l: usize) -> Complex64 {
    let (mf, lf) = (m as f64, l as f64);
    let den = (PI * x / lf).sin();
    if den.abs() < 1e-13 {
        // x is a multiple of L: every term is unity.
        return Complex64::new(mf, 0.0);
    }
    let mag = (PI * x * mf / lf).sin() / den;
    Complex64::from_polar(1.0, PI * x * (mf - 1.0) / lf) * mag
}

/// Complex backscatter amplitude versus distance for one core and one
/// acquisition.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexTrace {
    pub core: usize,
    pub acquisition: Acquisition,
    pub bins: Vec<Complex64>,
    pub bin_spacing_m: f64,
    pub window: Window,
}

impl ComplexTrace {
    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn distance(&self, bin: usize) -> f64 {
        bin as f64 * self.bin_spacing_m
    }

    pub fn intensity(&self) -> Vec<f64> {
        self.bins.iter().map(|c| c.norm_sqr()).collect()
    }

    /// Keeps bins at distances up to `max_distance_m`.
    pub fn crop(mut self, max_distance_m: f64) -> Self {
        let keep = ((max_distance_m / self.bin_spacing_m).floor() as usize + 1).min(self.bins.len());
        self.bins.truncate(keep);
        self
    }

    /// Multiplies every bin by `e^{jα}`.
    pub fn rotated(mut self, alpha: f64) -> Self {
        let r = Complex64::from_polar(1.0, alpha);
        self.bins.iter_mut().for_each(|c| *c *= r);
        self
    }
}

/// Wrapped differential phase along the fiber.
#[derive(Clone, Debug, PartialEq)]
pub struct DifferentialPhaseTrace {
    /// `dphi[i]` spans bins `i..=i+gauge_bins`, values in `(-π, π]`.
    pub dphi: Vec<f64>,
    pub gauge_bins: usize,
    pub source_cores: Vec<usize>,
    pub bin_spacing_m: f64,
}

impl DifferentialPhaseTrace {
    /// Center of the gauge section represented by `dphi[i]`.
    pub fn distance(&self, i: usize) -> f64 {
        (i as f64 + 0.5 * self.gauge_bins as f64) * self.bin_spacing_m
    }

    /// Index whose gauge center is closest to `z_m`.
    pub fn index_near(&self, z_m: f64) -> Option<usize> {
        if self.dphi.is_empty() {
            return None;
        }
        let i = (z_m / self.bin_spacing_m - 0.5 * self.gauge_bins as f64).round();
        Some(i.clamp(0.0, (self.dphi.len() - 1) as f64) as usize)
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_phase(x: f64) -> f64 {
    let mut y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y -= 2.0 * PI;
    }
    y
}

/// Reusable forward FFT of a fixed length.
pub struct RangeCompressor {
    fft: Arc<dyn Fft<f64>>,
    window: Window,
    coeffs: Vec<f64>,
    zero_pad: usize,
}

impl RangeCompressor {
    pub fn new(n_samples: usize, window: Window, zero_pad: usize) -> Result<Self> {
        if n_samples == 0 {
            return Err(Error::input("beat record has no samples"));
        }
        if zero_pad == 0 {
            return Err(Error::param("zero_pad must be >= 1"));
        }
        let fft = FftPlanner::new().plan_fft_forward(n_samples * zero_pad);
        Ok(Self {
            fft,
            window,
            coeffs: window.coefficients(n_samples),
            zero_pad,
        })
    }

    /// Windowed transform of `samples`, positive-frequency half.
    pub fn compress(&self, samples: &[f64]) -> Result<Vec<Complex64>> {
        if samples.len() != self.coeffs.len() {
            return Err(Error::input(format!(
                "expected {} samples, got {}",
                self.coeffs.len(),
                samples.len()
            )));
        }
        let l = self.coeffs.len() * self.zero_pad;
        let mut buf = vec![Complex64::new(0.0, 0.0); l];
        for (b, (s, w)) in buf.iter_mut().zip(samples.iter().zip(&self.coeffs)) {
            *b = Complex64::new(s * w, 0.0);
        }
        self.fft.process(&mut buf);
        buf.truncate(l / 2 + 1);
        Ok(buf)
    }

    pub fn window(&self) -> Window {
        self.window
    }
}

/// Windowed range compression of a beat record.
pub fn to_complex_trace(beat: &BeatRecord, window: Window, group_index: f64) -> Result<ComplexTrace> {
    to_complex_trace_padded(beat, window, group_index, 1)
}

/// As [`to_complex_trace`] with zero padding by `zero_pad`, which refines the
/// distance grid without changing resolution.
pub fn to_complex_trace_padded(
    beat: &BeatRecord,
    window: Window,
    group_index: f64,
    zero_pad: usize,
) -> Result<ComplexTrace> {
    if beat.samples.is_empty() {
        return Err(Error::input("beat record has no samples"));
    }
    let rc = RangeCompressor::new(beat.samples.len(), window, zero_pad)?;
    let bins = rc.compress(&beat.samples)?;
    let l = (beat.samples.len() * zero_pad) as f64;
    let bin_spacing_m = beat.sample_rate_hz * SPEED_OF_LIGHT / (2.0 * group_index * beat.sweep_rate_hz_per_s * l);
    Ok(ComplexTrace {
        core: beat.core,
        acquisition: beat.acquisition,
        bins,
        bin_spacing_m,
        window,
    })
}

fn check_same_shape(traces: &[ComplexTrace]) -> Result<usize> {
    let first = traces.first().ok_or_else(|| Error::input("need at least one trace"))?;
    for t in traces {
        if t.len() != first.len() {
            return Err(Error::input(format!(
                "trace lengths differ ({} vs {})",
                t.len(),
                first.len()
            )));
        }
        if t.acquisition != first.acquisition {
            return Err(Error::input("traces come from different acquisitions"));
        }
    }
    Ok(first.len())
}

/// Per-bin mean of `|C_i|²` over cores of one acquisition.
pub fn intensity_average(traces: &[ComplexTrace]) -> Result<Vec<f64>> {
    let n = check_same_shape(traces)?;
    let k = traces.len() as f64;
    Ok((0..n)
        .map(|b| traces.iter().map(|t| t.bins[b].norm_sqr()).sum::<f64>() / k)
        .collect())
}

/// Per-bin mean of `|C_i|` over cores of one acquisition.
pub fn amplitude_average(traces: &[ComplexTrace]) -> Result<Vec<f64>> {
    let n = check_same_shape(traces)?;
    let k = traces.len() as f64;
    Ok((0..n)
        .map(|b| traces.iter().map(|t| t.bins[b].norm()).sum::<f64>() / k)
        .collect())
}

/// `C(z)·conj(C_ref(z))`: magnitude `|C||C_ref|`, phase equal to the phase
/// change since the reference acquisition.
pub fn phase_change(current: &ComplexTrace, reference: &ComplexTrace) -> Result<ComplexTrace> {
    if current.len() != reference.len() || current.core != reference.core {
        return Err(Error::input("reference must match the trace's core and length"));
    }
    Ok(ComplexTrace {
        bins: current
            .bins
            .iter()
            .zip(&reference.bins)
            .map(|(c, r)| c * r.conj())
            .collect(),
        ..current.clone()
    })
}

/// Vector sum `Σ_i C_i(z+g)·conj(C_i(z))` at one index.
pub fn rvs_vector(traces: &[ComplexTrace], gauge_bins: usize, index: usize) -> Complex64 {
    traces
        .iter()
        .map(|t| t.bins[index + gauge_bins] * t.bins[index].conj())
        .sum()
}

/// Amplitude-weighted differential phase across cores.
pub fn rvs_differential_phase(traces: &[ComplexTrace], gauge_bins: usize) -> Result<DifferentialPhaseTrace> {
    let n = check_same_shape(traces)?;
    if gauge_bins == 0 {
        return Err(Error::param("gauge_bins must be >= 1"));
    }
    if gauge_bins >= n {
        return Err(Error::input(format!(
            "gauge of {gauge_bins} bins does not fit a trace of {n} bins"
        )));
    }
    let dphi = (0..n - gauge_bins)
        .map(|i| wrap_phase(rvs_vector(traces, gauge_bins, i).arg()))
        .collect();
    Ok(DifferentialPhaseTrace {
        dphi,
        gauge_bins,
        source_cores: traces.iter().map(|t| t.core).collect(),
        bin_spacing_m: traces[0].bin_spacing_m,
    })
}

/// Threshold `π(1-ε)` on adjacent differential-phase differences.
pub const JUMP_THRESHOLD: f64 = PI * (1.0 - 1e-6);

/// Number of adjacent samples whose (unwrapped) difference exceeds
/// [`JUMP_THRESHOLD`], i.e. full-scale flips of the differential phase.
pub fn count_phase_jumps(dphi: &[f64]) -> usize {
    dphi.windows(2)
        .filter(|w| (w[1] - w[0]).abs() > JUMP_THRESHOLD)
        .count()
}

/// 1-D unwrapping: successive differences are wrapped into `(-π, π]` and
/// accumulated from the first sample.
pub fn unwrap_slow_time(phases: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phases.len());
    let Some(&first) = phases.first() else {
        return out;
    };
    out.push(first);
    let mut acc = first;
    for w in phases.windows(2) {
        acc += wrap_phase(w[1] - w[0]);
        out.push(acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(core: usize, bins: Vec<Complex64>) -> ComplexTrace {
        ComplexTrace {
            core,
            acquisition: Acquisition::Sweep(0),
            bins,
            bin_spacing_m: 0.01,
            window: Window::Hanning,
        }
    }

    #[test]
    fn window_response_matches_direct_sum() {
        let (m, p) = (64, 4);
        for window in [Window::Rectangular, Window::Hanning] {
            let w = window.coefficients(m);
            for x in [0.0, 0.3, 1.0, -2.7, 5.25] {
                let direct: Complex64 = w
                    .iter()
                    .enumerate()
                    .map(|(i, wi)| Complex64::from_polar(*wi, 2.0 * PI * x * i as f64 / (m * p) as f64))
                    .sum();
                let closed = window.response(x, m, m * p);
                assert!((direct - closed).norm() < 1e-9, "{window:?} {x}");
            }
            let ss: f64 = w.iter().map(|v| v * v).sum();
            assert!((ss - window.sum_sq(m)).abs() < 1e-9);
        }
    }

    #[test]
    fn hann_half_power_width() {
        let w = Window::Hanning.half_power_width_bins();
        assert!((w - 1.44).abs() < 0.005, "{w}");
        let r = Window::Rectangular.half_power_width_bins();
        assert!((r - 0.886).abs() < 0.005, "{r}");
    }

    #[test]
    fn wrap_into_half_open_interval() {
        assert_eq!(wrap_phase(PI), PI);
        assert_eq!(wrap_phase(-PI), PI);
        assert!((wrap_phase(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((wrap_phase(0.1) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn rvs_on_phase_ramp() {
        let delta = 0.7;
        let t = trace(0, (0..50).map(|b| Complex64::from_polar(1.3, delta * b as f64)).collect());
        for g in [1, 2, 5] {
            let d = rvs_differential_phase(std::slice::from_ref(&t), g).unwrap();
            assert_eq!(d.dphi.len(), 50 - g);
            let want = wrap_phase(delta * g as f64);
            assert!(d.dphi.iter().all(|x| (x - want).abs() < 1e-12));
        }
        assert!(rvs_differential_phase(std::slice::from_ref(&t), 50).is_err());
    }

    #[test]
    fn faded_core_has_no_weight() {
        let a = trace(0, (0..10).map(|b| Complex64::from_polar(1.0, 0.2 * b as f64)).collect());
        let mut bins: Vec<Complex64> = (0..10).map(|b| Complex64::from_polar(1.0, -1.1 * b as f64)).collect();
        bins[4] = Complex64::new(0.0, 0.0);
        let b = trace(1, bins);
        let both = rvs_differential_phase(&[a.clone(), b], 2).unwrap();
        let alone = rvs_differential_phase(&[a], 2).unwrap();
        // indices touching bin 4: i = 2 (i+g = 4) and i = 4
        for i in [2, 4] {
            assert!((both.dphi[i] - alone.dphi[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn jump_counting_boundaries() {
        assert_eq!(count_phase_jumps(&[0.3; 20]), 0);
        assert_eq!(count_phase_jumps(&[0.0, PI - 1e-3]), 0);
        assert_eq!(count_phase_jumps(&[0.0, PI + 1e-3]), 1);
        assert_eq!(count_phase_jumps(&[PI - 1e-3, -PI + 1e-3]), 1);
        let alt: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { 1.5 } else { -1.5 }).collect();
        assert_eq!(count_phase_jumps(&alt), 0);
        // a flip of exactly π sits above the π(1-ε) threshold
        assert_eq!(count_phase_jumps(&[PI / 2.0, -PI / 2.0]), 1);
    }

    #[test]
    fn unwrap_examples() {
        assert_eq!(unwrap_slow_time(&[0.0, 0.1, 0.2]), vec![0.0, 0.1, 0.2]);
        let slope = 0.9 * PI;
        let wrapped: Vec<f64> = (0..10).map(|i| wrap_phase(slope * i as f64)).collect();
        let un = unwrap_slow_time(&wrapped);
        for (i, v) in un.iter().enumerate() {
            assert!((v - slope * i as f64).abs() < 1e-9);
        }
        // Above π per step the ramp aliases to a negative slope.
        let fast = 1.1 * PI;
        let wrapped: Vec<f64> = (0..10).map(|i| wrap_phase(fast * i as f64)).collect();
        let un = unwrap_slow_time(&wrapped);
        assert!((un[9] - (fast - 2.0 * PI) * 9.0).abs() < 1e-9);
        assert!(unwrap_slow_time(&[]).is_empty());
    }

    #[test]
    fn intensity_average_duplicates_and_mismatch() {
        let a = trace(0, (0..8).map(|b| Complex64::new(b as f64, 1.0)).collect());
        let avg = intensity_average(&[a.clone(), a.clone(), a.clone()]).unwrap();
        assert_eq!(avg, a.intensity());
        let short = trace(1, vec![Complex64::new(1.0, 0.0); 3]);
        assert!(intensity_average(&[a, short]).is_err());
        assert!(intensity_average(&[]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn rvs_is_invariant_to_global_phase(alpha in -10.0f64..10.0, seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let traces: Vec<ComplexTrace> = (0..3)
                .map(|c| trace(c, (0..32).map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect()))
                .collect();
            let rotated: Vec<ComplexTrace> = traces.iter().cloned().map(|t| t.rotated(alpha)).collect();
            let a = rvs_differential_phase(&traces, 2).unwrap();
            let b = rvs_differential_phase(&rotated, 2).unwrap();
            for (x, y) in a.dphi.iter().zip(&b.dphi) {
                proptest::prop_assert!(wrap_phase(x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn rvs_scale_invariant_when_cores_agree(scale in 0.01f64..100.0, delta in -3.0f64..3.0) {
            let base: Vec<Complex64> = (0..16).map(|b| Complex64::from_polar(1.0 + 0.1 * b as f64, delta * b as f64)).collect();
            let a = trace(0, base.clone());
            let b = trace(1, base.iter().map(|c| c * 0.5).collect());
            let scaled = trace(1, base.iter().map(|c| c * 0.5 * scale).collect());
            let x = rvs_differential_phase(&[a.clone(), b], 3).unwrap();
            let y = rvs_differential_phase(&[a, scaled], 3).unwrap();
            for (p, q) in x.dphi.iter().zip(&y.dphi) {
                proptest::prop_assert!(wrap_phase(p - q).abs() < 1e-9);
            }
        }
    }
}
