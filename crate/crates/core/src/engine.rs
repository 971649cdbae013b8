//! Beat-signal synthesis for a linearly swept probe.
//!
//! For a sweep of rate `γ` starting at optical offset `f₀`, the scatterer at
//! round-trip delay `τ_k` produces the beat term
//!
//! ```text
//! a_k·cos(2π(γτ_k·t + f₀τ_k − ½γτ_k²) + θ_k + Δφ_vib,k + φ_L(t) − φ_L(t−τ_k))
//! ```
//!
//! where `φ_L` is a Wiener phase path with increment variance `2πΔν·dt`.
//! The receiver adds white Gaussian noise calibrated against the mean
//! backscatter level (see [`Calibration`]).
//!
//! Two synthesis paths are provided:
//!
//! * [`synthesize_beat`] builds the sampled time-domain record. Cost is
//!   `O(scatterers × samples)`, so it is meant for short fibers and for
//!   validating the fast path.
//! * [`RangeSynthesizer`] writes each scatterer's windowed spectral kernel
//!   straight into the range-domain trace, which is exact for the noiseless
//!   record up to kernel truncation. Laser phase noise enters as the mean
//!   coherent attenuation `exp(−πΔντ)` plus Gaussian smear noise whose
//!   per-bin power follows from the delayed self-heterodyne spectrum.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsp::{ComplexTrace, RangeCompressor, Window};
use crate::fiber::{effective_delays, FiberParams, MultiCoreFiber, Scatterer, VibrationEvent};
use crate::rng::{substream, Stream};
use crate::{Error, Result, SPEED_OF_LIGHT};

/// Required ratio of sample rate to the highest beat frequency
/// (Nyquist factor 2 with a 1.25× margin).
pub const SAMPLE_RATE_MARGIN: f64 = 2.5;

/// Default half-width, in FFT bins, of the spectral kernel written by the
/// fast path.
pub const DEFAULT_KERNEL_TAPS: usize = 12;

/// Power levels beyond this magnitude overflow the linear scale.
pub const MAX_ABS_DBM: f64 = 300.0;

/// Sample-rate aliases folded into the phase-noise smear profile.
const SMEAR_ALIASES: i32 = 2;
const SMEAR_GRID_POINTS: usize = 1024;

/// Which acquisition a record belongs to. The reference acquisition is taken
/// at slow time zero and serves as the phase reference for every sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Acquisition {
    Reference,
    Sweep(u32),
}

impl Acquisition {
    pub fn t_slow(self, repetition_period_s: f64) -> f64 {
        match self {
            Acquisition::Reference => 0.0,
            Acquisition::Sweep(i) => i as f64 * repetition_period_s,
        }
    }

    pub(crate) fn stream_id(self) -> u64 {
        match self {
            Acquisition::Reference => u64::MAX,
            Acquisition::Sweep(i) => i as u64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    /// Optical start frequency as an offset; enters only through `f₀τ`.
    pub start_freq_hz: f64,
    pub sweep_range_hz: f64,
    pub sweep_rate_hz_per_s: f64,
    pub sample_rate_hz: f64,
    pub repetition_period_s: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            start_freq_hz: 0.0,
            sweep_range_hz: 8e9,
            sweep_rate_hz_per_s: 160e9,
            sample_rate_hz: 4e6,
            repetition_period_s: 0.1,
        }
    }
}

impl SweepConfig {
    pub fn duration(&self) -> f64 {
        self.sweep_range_hz / self.sweep_rate_hz_per_s
    }

    /// Settle and recovery time between sweeps.
    pub fn dead_time(&self) -> f64 {
        self.repetition_period_s - self.duration()
    }

    pub fn n_samples(&self) -> usize {
        // Tolerate representation error in T·fs.
        (self.duration() * self.sample_rate_hz * (1.0 + 1e-12)).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sweep_range_hz > 0.0) {
            return Err(Error::param("sweep_range_hz must be > 0"));
        }
        if !(self.sweep_rate_hz_per_s > 0.0) {
            return Err(Error::param("sweep_rate_hz_per_s must be > 0"));
        }
        if !(self.sample_rate_hz > 0.0) {
            return Err(Error::param("sample_rate_hz must be > 0"));
        }
        if !(self.repetition_period_s > 0.0) {
            return Err(Error::param("repetition_period_s must be > 0"));
        }
        if !self.start_freq_hz.is_finite() {
            return Err(Error::param("start_freq_hz must be finite"));
        }
        if self.duration() > self.repetition_period_s * (1.0 + 1e-12) {
            return Err(Error::config(format!(
                "sweep duration {} s exceeds repetition period {} s",
                self.duration(),
                self.repetition_period_s
            )));
        }
        if self.n_samples() < 2 {
            return Err(Error::config("sweep produces fewer than two samples"));
        }
        Ok(())
    }

    /// Beat frequency of a reflector at `z_m`.
    pub fn beat_frequency(&self, z_m: f64, params: &FiberParams) -> f64 {
        self.sweep_rate_hz_per_s * params.round_trip_delay(z_m)
    }

    pub fn check_nyquist(&self, params: &FiberParams) -> Result<()> {
        let f_max = self.beat_frequency(params.length_m, params);
        let need = SAMPLE_RATE_MARGIN * f_max;
        if self.sample_rate_hz < need {
            return Err(Error::config(format!(
                "sample_rate_hz {} is too low for a {} m fiber: beat reaches {:.1} Hz, required rate is at least {:.0} Hz",
                self.sample_rate_hz, params.length_m, f_max, need
            )));
        }
        Ok(())
    }

    pub fn bin_spacing(&self, params: &FiberParams) -> f64 {
        params.bin_spacing(self.sweep_range_hz)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LaserModel {
    pub linewidth_hz: f64,
    pub enabled: bool,
}

impl Default for LaserModel {
    fn default() -> Self {
        Self {
            linewidth_hz: 5e3,
            enabled: true,
        }
    }
}

impl LaserModel {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Default::default()
        }
    }

    pub fn effective_linewidth(&self) -> f64 {
        if self.enabled {
            self.linewidth_hz
        } else {
            0.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.linewidth_hz >= 0.0 && self.linewidth_hz.is_finite()) {
            return Err(Error::param("linewidth_hz must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReceiverModel {
    /// Level of the range-compressed noise floor under Hann windowing.
    pub noise_floor_dbm: f64,
    /// Level assigned to the mean backscatter intensity.
    pub signal_reference_dbm: f64,
    pub enabled: bool,
}

impl Default for ReceiverModel {
    fn default() -> Self {
        Self {
            noise_floor_dbm: -80.0,
            signal_reference_dbm: -45.0,
            enabled: true,
        }
    }
}

impl ReceiverModel {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.signal_reference_dbm.abs() <= MAX_ABS_DBM) {
            return Err(Error::param(format!("signal_reference_dbm must lie within ±{MAX_ABS_DBM}")));
        }
        if self.enabled && !(self.noise_floor_dbm.abs() <= MAX_ABS_DBM) && self.noise_floor_dbm != f64::NEG_INFINITY {
            return Err(Error::param(format!("noise_floor_dbm must lie within ±{MAX_ABS_DBM} or be -inf")));
        }
        Ok(())
    }
}

/// Maps simulated power units to the dBm scale.
///
/// With `E|r|² = 1/density` the expected range-compressed intensity of a bin
/// is `¼·Δz·M·Σw²`; that level is pinned to `signal_reference_dbm`. The
/// per-sample receiver noise variance is chosen so that the Hann-windowed
/// noise floor sits at `noise_floor_dbm`.
#[derive(Clone, Debug, PartialEq)]
pub struct Calibration {
    pub bin_spacing_m: f64,
    pub n_samples: usize,
    pub signal_reference_dbm: f64,
    /// Receiver noise variance per time sample (0 when disabled).
    pub noise_var_per_sample: f64,
}

impl Calibration {
    pub fn new(params: &FiberParams, sweep: &SweepConfig, rx: &ReceiverModel) -> Self {
        let bin_spacing_m = sweep.bin_spacing(params);
        let n_samples = sweep.n_samples();
        let hann_signal = 0.25 * bin_spacing_m * n_samples as f64 * Window::Hanning.sum_sq(n_samples);
        let noise_var_per_sample = if rx.enabled {
            let floor = hann_signal * 10f64.powf((rx.noise_floor_dbm - rx.signal_reference_dbm) / 10.0);
            floor / Window::Hanning.sum_sq(n_samples)
        } else {
            0.0
        };
        Self {
            bin_spacing_m,
            n_samples,
            signal_reference_dbm: rx.signal_reference_dbm,
            noise_var_per_sample,
        }
    }

    /// Expected backscatter intensity per bin.
    pub fn signal_units(&self, window: Window) -> f64 {
        0.25 * self.bin_spacing_m * self.n_samples as f64 * window.sum_sq(self.n_samples)
    }

    /// Expected receiver noise intensity per bin.
    pub fn noise_units(&self, window: Window) -> f64 {
        self.noise_var_per_sample * window.sum_sq(self.n_samples)
    }

    pub fn to_dbm(&self, intensity: f64, window: Window) -> f64 {
        self.signal_reference_dbm + 10.0 * (intensity / self.signal_units(window)).log10()
    }
}

/// Sampled beat signal of one core and one acquisition.
#[derive(Clone, Debug, PartialEq)]
pub struct BeatRecord {
    pub core: usize,
    pub acquisition: Acquisition,
    pub samples: Vec<f64>,
    pub sample_rate_hz: f64,
    pub sweep_rate_hz_per_s: f64,
    pub t_slow_s: f64,
}

/// Wiener phase path sampled at `sample_rate_hz` over `duration_s`,
/// starting at zero, with increment variance `2π·linewidth/sample_rate`.
pub fn laser_phase_noise_path(linewidth_hz: f64, duration_s: f64, sample_rate_hz: f64, seed: u64) -> Result<Vec<f64>> {
    if !(duration_s > 0.0 && sample_rate_hz > 0.0) {
        return Err(Error::param("duration and sample rate must be > 0"));
    }
    if !(linewidth_hz >= 0.0) {
        return Err(Error::param("linewidth must be >= 0"));
    }
    let n = (duration_s * sample_rate_hz).floor() as usize + 1;
    let mut rng = substream(seed, Stream::Laser, 0, 0);
    Ok(wiener_path(&mut rng, linewidth_hz, 1.0 / sample_rate_hz, n))
}

fn wiener_path<R: Rng>(rng: &mut R, linewidth_hz: f64, dt: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    if linewidth_hz == 0.0 {
        out.resize(n, 0.0);
        return out;
    }
    let sigma = (2.0 * PI * linewidth_hz * dt).sqrt();
    let mut phi = 0.0;
    out.push(phi);
    for _ in 1..n {
        let g: f64 = StandardNormal.sample(rng);
        phi += sigma * g;
        out.push(phi);
    }
    out
}

/// Upper bound on laser path points in time-domain synthesis.
const MAX_LASER_PATH_POINTS: usize = 1 << 24;

struct LaserPath {
    phi: Vec<f64>,
    t0: f64,
    step: f64,
}

impl LaserPath {
    fn at(&self, t: f64) -> f64 {
        let x = (t - self.t0) / self.step;
        let i = (x.floor() as usize).min(self.phi.len() - 2);
        let f = x - i as f64;
        self.phi[i] * (1.0 - f) + self.phi[i + 1] * f
    }
}

/// Time-domain beat record of `core` for one acquisition.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_beat(
    fiber: &MultiCoreFiber,
    core: usize,
    events: &[VibrationEvent],
    sweep: &SweepConfig,
    laser: &LaserModel,
    rx: &ReceiverModel,
    acquisition: Acquisition,
    seed: u64,
) -> Result<BeatRecord> {
    let params = fiber.params();
    sweep.validate()?;
    laser.validate()?;
    rx.validate()?;
    sweep.check_nyquist(params)?;
    for e in events {
        e.validate(params)?;
    }
    let t_slow = acquisition.t_slow(sweep.repetition_period_s);
    let delays = effective_delays(fiber, core, events, t_slow)?;
    let scatterers = fiber.core(core)?;
    let m = sweep.n_samples();
    let fs = sweep.sample_rate_hz;
    let gamma = sweep.sweep_rate_hz_per_s;

    let linewidth = laser.effective_linewidth();
    let laser_path = if linewidth > 0.0 {
        let tau_max = params.round_trip_delay(params.length_m);
        let span = sweep.duration() + tau_max;
        let mut step = (1.0 / fs).min(tau_max / 64.0);
        if span / step > MAX_LASER_PATH_POINTS as f64 {
            step = span / MAX_LASER_PATH_POINTS as f64;
        }
        let n = (span / step).ceil() as usize + 2;
        let mut rng = substream(seed, Stream::Laser, acquisition.stream_id(), 0);
        Some(LaserPath {
            phi: wiener_path(&mut rng, linewidth, step, n),
            t0: -tau_max,
            step,
        })
    } else {
        None
    };

    let chunks: Vec<Vec<f64>> = scatterers
        .par_chunks(512)
        .zip(delays.par_chunks(512))
        .map(|(sc, dl)| {
            let mut acc = vec![0.0; m];
            for (s, &(tau, vib)) in sc.iter().zip(dl) {
                let amp = s.reflectivity.norm();
                let cycles = sweep.start_freq_hz * tau - 0.5 * gamma * tau * tau;
                let phase0 = 2.0 * PI * cycles.fract() + s.reflectivity.arg() + vib;
                let f_beat = gamma * tau;
                match &laser_path {
                    None => {
                        // Phasor recurrence, renormalized periodically.
                        let rot = Complex64::from_polar(1.0, 2.0 * PI * f_beat / fs);
                        let mut z = Complex64::from_polar(amp, phase0);
                        for (i, a) in acc.iter_mut().enumerate() {
                            *a += z.re;
                            z *= rot;
                            if i % 1024 == 1023 {
                                let k = (i + 1) as f64;
                                z = Complex64::from_polar(amp, phase0 + 2.0 * PI * (f_beat * k / fs).fract());
                            }
                        }
                    }
                    Some(lp) => {
                        for (i, a) in acc.iter_mut().enumerate() {
                            let t = i as f64 / fs;
                            let psi = lp.at(t) - lp.at(t - tau);
                            let arg = 2.0 * PI * (f_beat * i as f64 / fs).fract() + phase0 + psi;
                            *a += amp * arg.cos();
                        }
                    }
                }
            }
            acc
        })
        .collect();

    let mut samples = vec![0.0; m];
    for c in &chunks {
        for (s, v) in samples.iter_mut().zip(c) {
            *s += v;
        }
    }

    let calib = Calibration::new(params, sweep, rx);
    if calib.noise_var_per_sample > 0.0 {
        let mut rng = substream(seed, Stream::Receiver, acquisition.stream_id(), core as u64);
        let normal = Normal::new(0.0, calib.noise_var_per_sample.sqrt()).expect("finite sigma");
        for s in samples.iter_mut() {
            *s += normal.sample(&mut rng);
        }
    }

    Ok(BeatRecord {
        core,
        acquisition,
        samples,
        sample_rate_hz: fs,
        sweep_rate_hz_per_s: gamma,
        t_slow_s: t_slow,
    })
}

/// Beat records for `n_sweeps` acquisitions of every core, indexed
/// `[sweep][core]`.
pub fn synthesize_sweep_series(
    fiber: &MultiCoreFiber,
    events: &[VibrationEvent],
    sweep: &SweepConfig,
    laser: &LaserModel,
    rx: &ReceiverModel,
    n_sweeps: usize,
    seed: u64,
) -> Result<Vec<Vec<BeatRecord>>> {
    if n_sweeps == 0 {
        return Err(Error::param("n_sweeps must be >= 1"));
    }
    (0..n_sweeps)
        .map(|s| {
            (0..fiber.n_cores())
                .map(|c| synthesize_beat(fiber, c, events, sweep, laser, rx, Acquisition::Sweep(s as u32), seed))
                .collect()
        })
        .collect()
}

/// Continuous part of the spectrum of `exp(j[φ(t) − φ(t−τ)])` for a Wiener
/// phase with diffusion `D = 2πΔν`, normalized so that it integrates to
/// `1 − exp(−Dτ)` over frequency.
pub fn self_heterodyne_smear_psd(f_hz: f64, tau: f64, linewidth_hz: f64) -> f64 {
    let d = 2.0 * PI * linewidth_hz;
    let w = 2.0 * PI * f_hz;
    let e = (-d * tau).exp();
    if (w * tau).abs() < 1e-6 {
        return 2.0 * (1.0 - e) / d - 2.0 * tau * e;
    }
    let (s, c) = (w * tau).sin_cos();
    2.0 * (d + e * (w * s - d * c)) / (d * d + w * w) - 2.0 * e * s / w
}

/// Range-domain partial traces of one core, split at the event positions so
/// that slow-time vibration only rotates whole segments.
#[derive(Clone, Debug)]
pub struct CoreBasis {
    pub core: usize,
    boundaries: Vec<f64>,
    segments: Vec<Vec<Complex64>>,
}

impl CoreBasis {
    /// Noiseless trace at slow time `t_slow_s`.
    pub fn coherent(&self, events: &[VibrationEvent], t_slow_s: f64, params: &FiberParams) -> Vec<Complex64> {
        let mut out = self.segments[0].clone();
        for (s, seg) in self.segments.iter().enumerate().skip(1) {
            let lower = self.boundaries[s - 1];
            let off: f64 = events
                .iter()
                .filter(|e| e.position_m <= lower)
                .map(|e| crate::fiber::vibration_phase_shift(e.delta_l(t_slow_s), params))
                .sum();
            let rot = Complex64::from_polar(1.0, off);
            for (o, v) in out.iter_mut().zip(seg) {
                *o += v * rot;
            }
        }
        out
    }
}

/// Fast range-domain synthesis.
pub struct RangeSynthesizer {
    params: FiberParams,
    sweep: SweepConfig,
    linewidth_hz: f64,
    window: Window,
    zero_pad: usize,
    taps: usize,
    n_samples: usize,
    fft_len: usize,
    n_bins: usize,
    bin_spacing_m: f64,
    calibration: Calibration,
    /// Per-bin noise intensity: receiver floor plus phase-noise smear.
    noise_profile: Vec<f64>,
    compressor: RangeCompressor,
    kernel: KernelTable,
}

/// Rows of fractional offsets per bin in the kernel table.
const KERNEL_TABLE_RES: usize = 2048;

/// The window response sampled on `x = half − frac − t` for `frac` on a
/// grid of `1/KERNEL_TABLE_RES` and taps `t = 0..=2·half`, linearly
/// interpolated in `frac` (relative error below 1e-6 of the peak).
#[derive(Clone, Debug)]
struct KernelTable {
    half: usize,
    row_len: usize,
    rows: Vec<Complex64>,
}

impl KernelTable {
    fn new(window: Window, m: usize, l: usize, half: usize) -> Self {
        let row_len = 2 * half + 1;
        let res = KERNEL_TABLE_RES as f64;
        let mut rows = Vec::with_capacity((KERNEL_TABLE_RES + 1) * row_len);
        for g in 0..=KERNEL_TABLE_RES {
            let frac = g as f64 / res;
            rows.extend((0..row_len).map(|t| window.response(half as f64 - frac - t as f64, m, l)));
        }
        Self { half, row_len, rows }
    }

    /// Adds `coef·K(u − b)` to `out[b − lo]` for every tap inside `[lo, hi]`
    /// and `[0, n_bins)`.
    fn accumulate(&self, u: f64, coef: Complex64, lo: usize, hi: usize, out: &mut [Complex64]) {
        let start = u - self.half as f64;
        let b0 = start.ceil();
        let frac = b0 - start;
        let pos = frac * KERNEL_TABLE_RES as f64;
        let g = (pos.floor() as usize).min(KERNEL_TABLE_RES - 1);
        let t = pos - g as f64;
        let (c0, c1) = (coef * (1.0 - t), coef * t);
        let b_last = (u + self.half as f64).floor();
        if b_last < 0.0 {
            return;
        }
        // Taps beyond `u + half` (frac > 0 drops the last one) are outside the kernel support.
        let from = (b0.max(0.0) as usize).max(lo);
        let to = (b_last as usize).min(hi);
        if from > to {
            return;
        }
        let n = to - from + 1;
        let t0 = (from as isize - b0 as isize) as usize;
        let row = |i: usize| {
            let base = (g + i) * self.row_len + t0;
            &self.rows[base..base + n]
        };
        let dst = &mut out[from - lo..from - lo + n];
        for ((o, a), b) in dst.iter_mut().zip(row(0)).zip(row(1)) {
            *o += a * c0 + b * c1;
        }
    }
}

impl RangeSynthesizer {
    pub fn new(
        params: &FiberParams,
        sweep: &SweepConfig,
        laser: &LaserModel,
        rx: &ReceiverModel,
        window: Window,
        zero_pad: usize,
    ) -> Result<Self> {
        params.validate()?;
        sweep.validate()?;
        laser.validate()?;
        rx.validate()?;
        sweep.check_nyquist(params)?;
        let n_samples = sweep.n_samples();
        let fft_len = n_samples * zero_pad.max(1);
        let bin_spacing_m = sweep.sample_rate_hz * SPEED_OF_LIGHT
            / (2.0 * params.group_index * sweep.sweep_rate_hz_per_s * fft_len as f64);
        let n_bins = ((params.length_m / bin_spacing_m).floor() as usize + 1).min(fft_len / 2 + 1);
        let calibration = Calibration::new(params, sweep, rx);
        let compressor = RangeCompressor::new(n_samples, window, zero_pad)?;
        let mut synth = Self {
            params: params.clone(),
            sweep: sweep.clone(),
            linewidth_hz: laser.effective_linewidth(),
            window,
            zero_pad,
            taps: DEFAULT_KERNEL_TAPS,
            n_samples,
            fft_len,
            n_bins,
            bin_spacing_m,
            calibration,
            noise_profile: Vec::new(),
            compressor,
            kernel: KernelTable::new(window, n_samples, fft_len, DEFAULT_KERNEL_TAPS * zero_pad.max(1)),
        };
        synth.noise_profile = synth.compute_noise_profile();
        Ok(synth)
    }

    /// Kernel half-width in unpadded bins.
    pub fn with_taps(mut self, taps: usize) -> Self {
        self.taps = taps.max(1);
        self.kernel = KernelTable::new(self.window, self.n_samples, self.fft_len, self.taps * self.zero_pad);
        self
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn bin_spacing(&self) -> f64 {
        self.bin_spacing_m
    }

    pub fn calibration(&self) -> &Calibration {
        &self.calibration
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn params(&self) -> &FiberParams {
        &self.params
    }

    pub fn sweep(&self) -> &SweepConfig {
        &self.sweep
    }

    /// Expected noise intensity per bin (receiver plus phase-noise smear).
    pub fn noise_profile(&self) -> &[f64] {
        &self.noise_profile
    }

    /// Receiver floor plus the smear power of every scatterer, folded over
    /// the sample-rate aliases of both the beat and its mirror image. The
    /// smear profile is smooth in range, so it is evaluated on a coarse grid
    /// and interpolated.
    fn compute_noise_profile(&self) -> Vec<f64> {
        let rx = self.calibration.noise_units(self.window);
        if self.linewidth_hz <= 0.0 {
            return vec![rx; self.n_bins];
        }
        let fs = self.sweep.sample_rate_hz;
        let gamma = self.sweep.sweep_rate_hz_per_s;
        let length = self.params.length_m;
        let steps = ((length / 0.25).ceil() as usize).max(400);
        let dz = length / steps as f64;
        let taus: Vec<f64> = (0..steps)
            .map(|i| self.params.round_trip_delay((i as f64 + 0.5) * dz))
            .collect();
        let gain = 0.25 * self.window.sum_sq(self.n_samples) * fs * dz;
        let lw = self.linewidth_hz;
        let bin_hz = fs / self.fft_len as f64;
        let smear_at = |b: f64| -> f64 {
            let fb = b * bin_hz;
            taus.iter()
                .map(|&tau| {
                    let fk = gamma * tau;
                    (-SMEAR_ALIASES..=SMEAR_ALIASES)
                        .map(|k| {
                            let shift = k as f64 * fs;
                            self_heterodyne_smear_psd(fb - fk + shift, tau, lw)
                                + self_heterodyne_smear_psd(fb + fk + shift, tau, lw)
                        })
                        .sum::<f64>()
                })
                .sum()
        };
        let n_grid = self.n_bins.clamp(2, SMEAR_GRID_POINTS);
        let step = (self.n_bins - 1).max(1) as f64 / (n_grid - 1) as f64;
        let grid: Vec<f64> = (0..n_grid).into_par_iter().map(|j| smear_at(j as f64 * step)).collect();
        (0..self.n_bins)
            .map(|b| {
                let x = b as f64 / step;
                let j = (x.floor() as usize).min(n_grid - 2);
                let f = x - j as f64;
                rx + gain * (grid[j] * (1.0 - f) + grid[j + 1] * f)
            })
            .collect()
    }

    /// Splits `core` at the event positions and synthesizes each segment.
    pub fn basis(&self, fiber: &MultiCoreFiber, core: usize, events: &[VibrationEvent]) -> Result<CoreBasis> {
        for e in events {
            e.validate(fiber.params())?;
        }
        let scatterers = fiber.core(core)?;
        let mut boundaries: Vec<f64> = events.iter().map(|e| e.position_m).collect();
        boundaries.sort_by(f64::total_cmp);
        boundaries.dedup();
        let mut segments = Vec::with_capacity(boundaries.len() + 1);
        let mut start = 0;
        for s in 0..=boundaries.len() {
            let end = match boundaries.get(s) {
                Some(&b) => start + scatterers[start..].partition_point(|x| x.position_m <= b),
                None => scatterers.len(),
            };
            segments.push(self.render(&scatterers[start..end]));
            start = end;
        }
        Ok(CoreBasis {
            core,
            boundaries,
            segments,
        })
    }

    /// Noiseless range-domain trace of a set of scatterers.
    pub fn render(&self, scatterers: &[Scatterer]) -> Vec<Complex64> {
        let parts: Vec<(usize, Vec<Complex64>)> = scatterers
            .par_chunks(2048)
            .map(|chunk| self.render_chunk(chunk))
            .collect();
        let mut out = vec![Complex64::new(0.0, 0.0); self.n_bins];
        for (lo, part) in parts {
            for (o, v) in out[lo.min(self.n_bins)..].iter_mut().zip(&part) {
                *o += v;
            }
        }
        out
    }

    fn render_chunk(&self, chunk: &[Scatterer]) -> (usize, Vec<Complex64>) {
        let Some(first) = chunk.first() else {
            return (0, Vec::new());
        };
        let last = chunk.last().expect("non-empty");
        let p = self.zero_pad as f64;
        let half = self.taps as f64 * p;
        let u_of = |z: f64| self.sweep.beat_frequency(z, &self.params) * self.fft_len as f64 / self.sweep.sample_rate_hz;
        let lo = (u_of(first.position_m) - half).ceil().max(0.0) as usize;
        let hi = ((u_of(last.position_m) + half).floor().max(0.0) as usize).min(self.n_bins.saturating_sub(1));
        if lo > hi {
            return (lo, Vec::new());
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); hi - lo + 1];
        let gamma = self.sweep.sweep_rate_hz_per_s;
        let (m, l) = (self.n_samples, self.fft_len);
        let lf = l as f64;

        for s in chunk {
            let tau = self.params.round_trip_delay(s.position_m);
            let u = gamma * tau * lf / self.sweep.sample_rate_hz;
            let cycles = self.sweep.start_freq_hz * tau - 0.5 * gamma * tau * tau;
            let atten = (-PI * self.linewidth_hz * tau).exp();
            let coef = s.reflectivity * Complex64::from_polar(0.5 * atten, 2.0 * PI * cycles.fract());
            self.kernel.accumulate(u, coef, lo, hi.min(self.n_bins - 1), &mut buf);
            // Negative-frequency image near DC.
            if u < half {
                let top = ((half - u).floor() as usize).min(hi);
                for b in lo..=top {
                    let k = self.window.response(-u - b as f64, m, l);
                    buf[b - lo] += coef.conj() * k;
                }
            }
        }
        (lo, buf)
    }

    /// Receiver plus phase-noise smear for one core and acquisition.
    pub fn noise(&self, core: usize, acquisition: Acquisition, seed: u64) -> Result<Vec<Complex64>> {
        if self.noise_profile.iter().all(|&v| v == 0.0) {
            return Ok(vec![Complex64::new(0.0, 0.0); self.n_bins]);
        }
        let mut rng = substream(seed, Stream::Receiver, acquisition.stream_id(), core as u64);
        let white: Vec<f64> = (0..self.n_samples).map(|_| StandardNormal.sample(&mut rng)).collect();
        let spec = self.compressor.compress(&white)?;
        let norm = self.window.sum_sq(self.n_samples);
        Ok(spec
            .iter()
            .take(self.n_bins)
            .zip(&self.noise_profile)
            .map(|(n, v)| n * (v / norm).sqrt())
            .collect())
    }

    /// Full trace of one acquisition: coherent part plus noise.
    pub fn trace(
        &self,
        basis: &CoreBasis,
        events: &[VibrationEvent],
        acquisition: Acquisition,
        seed: u64,
    ) -> Result<ComplexTrace> {
        let t_slow = acquisition.t_slow(self.sweep.repetition_period_s);
        let mut bins = basis.coherent(events, t_slow, &self.params);
        let noise = self.noise(basis.core, acquisition, seed)?;
        for (b, n) in bins.iter_mut().zip(&noise) {
            *b += n;
        }
        Ok(ComplexTrace {
            core: basis.core,
            acquisition,
            bins,
            bin_spacing_m: self.bin_spacing_m,
            window: self.window,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::to_complex_trace;
    use crate::fiber::{generate_multicore_field_for_bin, Scatterer};

    fn desk_sweep(length_m: f64) -> SweepConfig {
        let params = FiberParams {
            length_m,
            ..Default::default()
        };
        let f_max = SweepConfig::default().beat_frequency(length_m, &params);
        SweepConfig {
            sample_rate_hz: (3.0 * f_max / 1000.0).ceil() * 1000.0,
            ..Default::default()
        }
    }

    #[test]
    fn sweep_defaults() {
        let s = SweepConfig::default();
        assert!((s.duration() - 0.05).abs() < 1e-15);
        assert!((s.dead_time() - 0.05).abs() < 1e-15);
        assert_eq!(s.n_samples(), 200_000);
        let p = FiberParams::default();
        // γ·2nz/c at 500 m
        let f = s.beat_frequency(500.0, &p);
        assert!((f - 783_475.35).abs() < 0.01, "{f}");
        assert!(s.check_nyquist(&p).is_ok());
        let slow = SweepConfig {
            sample_rate_hz: 1e6,
            ..Default::default()
        };
        match slow.check_nyquist(&p) {
            Err(Error::Config(msg)) => assert!(msg.contains("required rate is at least 1958688")),
            other => panic!("{other:?}"),
        }
        let bad = SweepConfig {
            sweep_range_hz: 0.0,
            ..Default::default()
        };
        match bad.validate() {
            Err(Error::Parameter(msg)) => assert_eq!(msg, "sweep_range_hz must be > 0"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_linewidth_path_is_flat() {
        let p = laser_phase_noise_path(0.0, 0.01, 1e5, 3).unwrap();
        assert!(p.iter().all(|&x| x == 0.0));
        assert!(laser_phase_noise_path(1.0, 0.0, 1e5, 3).is_err());
    }

    #[test]
    fn wiener_increment_variance() {
        let (lw, fs) = (5e3, 4e6);
        let path = laser_phase_noise_path(lw, 0.05, fs, 9).unwrap();
        assert_eq!(path[0], 0.0);
        let inc: Vec<f64> = path.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(inc.len() >= 200_000);
        let var = inc.iter().map(|x| x * x).sum::<f64>() / inc.len() as f64;
        let want = 2.0 * PI * lw / fs;
        assert!((var / want - 1.0).abs() < 0.05, "{var} vs {want}");
    }

    #[test]
    fn delayed_self_difference_variance() {
        // τ = 4.9 μs ≈ the round trip of 500 m, sampled at 0.1 μs.
        let (lw, fs) = (5e3, 1e7);
        let lag = 49;
        let path = laser_phase_noise_path(lw, 0.5, fs, 21).unwrap();
        let diffs: Vec<f64> = path.windows(lag + 1).step_by(lag).map(|w| w[lag] - w[0]).collect();
        let var = diffs.iter().map(|x| x * x).sum::<f64>() / diffs.len() as f64;
        let want = 2.0 * PI * lw * lag as f64 / fs;
        assert!((var / want - 1.0).abs() < 0.05, "{var} vs {want}");
    }

    #[test]
    fn smear_psd_integrates_to_lost_coherence() {
        let (tau, lw) = (2e-6, 5e4);
        let df = 50.0;
        let total: f64 = (-400_000..400_000)
            .map(|i| self_heterodyne_smear_psd((i as f64 + 0.5) * df, tau, lw) * df)
            .sum();
        let want = 1.0 - (-2.0 * PI * lw * tau).exp();
        assert!((total / want - 1.0).abs() < 0.01, "{total} vs {want}");
    }

    fn single_reflector(length_m: f64, z: f64) -> MultiCoreFiber {
        let params = FiberParams {
            length_m,
            ..Default::default()
        };
        MultiCoreFiber::from_cores(
            params,
            vec![vec![Scatterer {
                position_m: z,
                reflectivity: Complex64::new(1.0, 0.0),
            }]],
        )
        .unwrap()
    }

    #[test]
    fn single_reflector_is_a_pure_tone() {
        let f = single_reflector(600.0, 500.0);
        let sweep = SweepConfig {
            sample_rate_hz: 5e6,
            ..Default::default()
        };
        let beat = synthesize_beat(&f, 0, &[], &sweep, &LaserModel::disabled(), &ReceiverModel::disabled(), Acquisition::Sweep(0), 1).unwrap();
        let trace = to_complex_trace(&beat, Window::Hanning, 1.468).unwrap();
        let bin_hz = sweep.sample_rate_hz / beat.samples.len() as f64;
        let (peak, _) = trace
            .bins
            .iter()
            .enumerate()
            .map(|(i, c)| (i, c.norm()))
            .fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
        let f_peak = peak as f64 * bin_hz;
        assert!((f_peak - 783_475.35).abs() <= bin_hz, "{f_peak}");
        assert!((trace.distance(peak) - 500.0).abs() <= 0.5 * trace.bin_spacing_m + 1e-9);
    }

    #[test]
    fn empty_fiber_gives_silence() {
        let params = FiberParams {
            length_m: 1.0,
            ..Default::default()
        };
        let f = MultiCoreFiber::from_cores(params, vec![vec![]]).unwrap();
        let beat = synthesize_beat(&f, 0, &[], &desk_sweep(1.0), &LaserModel::disabled(), &ReceiverModel::disabled(), Acquisition::Sweep(0), 0).unwrap();
        assert!(beat.samples.iter().all(|&x| x == 0.0));
        assert_eq!(beat.samples.len(), desk_sweep(1.0).n_samples());
    }

    #[test]
    fn sweep_series_timestamps() {
        let params = FiberParams {
            length_m: 0.5,
            ..Default::default()
        };
        let sweep = desk_sweep(0.5);
        let f = generate_multicore_field_for_bin(&params, 2, 4, sweep.bin_spacing(&params)).unwrap();
        let series = synthesize_sweep_series(&f, &[], &sweep, &LaserModel::disabled(), &ReceiverModel::default(), 20, 5).unwrap();
        assert_eq!(series.len(), 20);
        for (s, row) in series.iter().enumerate() {
            assert_eq!(row.len(), 2);
            assert!((row[0].t_slow_s - 0.1 * s as f64).abs() < 1e-12);
        }
        let single = synthesize_beat(&f, 1, &[], &sweep, &LaserModel::disabled(), &ReceiverModel::default(), Acquisition::Sweep(0), 5).unwrap();
        assert_eq!(series[0][1], single);
        assert_ne!(series[0][1].samples, series[1][1].samples);
    }

    #[test]
    fn fast_path_matches_time_domain_on_ten_meters() {
        let params = FiberParams {
            length_m: 10.0,
            ..Default::default()
        };
        let sweep = desk_sweep(10.0);
        let f = generate_multicore_field_for_bin(&params, 1, 17, sweep.bin_spacing(&params)).unwrap();
        let (laser, rx) = (LaserModel::disabled(), ReceiverModel::disabled());
        let beat = synthesize_beat(&f, 0, &[], &sweep, &laser, &rx, Acquisition::Sweep(0), 0).unwrap();
        let slow = to_complex_trace(&beat, Window::Hanning, params.group_index).unwrap().crop(10.0);
        let synth = RangeSynthesizer::new(&params, &sweep, &laser, &rx, Window::Hanning, 1).unwrap();
        let fast = synth.trace(&synth.basis(&f, 0, &[]).unwrap(), &[], Acquisition::Sweep(0), 0).unwrap();
        assert_eq!(slow.len(), fast.len());
        let sq: f64 = slow
            .bins
            .iter()
            .zip(&fast.bins)
            .map(|(a, b)| (10.0 * (a.norm_sqr() / b.norm_sqr()).log10()).powi(2))
            .sum();
        let rms_db = (sq / slow.len() as f64).sqrt();
        assert!(rms_db < 0.1, "rms {rms_db} dB");
    }

    #[test]
    fn fast_kernel_matches_closed_form_with_padding() {
        // The recurrences must reproduce the closed-form window response
        // bin for bin across the kernel support.
        let params = FiberParams {
            length_m: 2.0,
            ..Default::default()
        };
        let sweep = desk_sweep(2.0);
        let z = 1.2345;
        let f = single_reflector(2.0, z);
        let (m, pad) = (sweep.n_samples(), 4);
        let l = m * pad;
        let tau = params.round_trip_delay(z);
        let u = sweep.sweep_rate_hz_per_s * tau * l as f64 / sweep.sample_rate_hz;
        let cycles = -0.5 * sweep.sweep_rate_hz_per_s * tau * tau;
        let coef = Complex64::from_polar(0.5, 2.0 * PI * cycles);
        for window in [Window::Rectangular, Window::Hanning] {
            let synth = RangeSynthesizer::new(&params, &sweep, &LaserModel::disabled(), &ReceiverModel::disabled(), window, pad).unwrap();
            let tr = synth.render(f.core(0).unwrap());
            let peak = 0.5 * window.sum(m);
            let half = (DEFAULT_KERNEL_TAPS * pad) as f64;
            let mut checked = 0;
            for (b, a) in tr.iter().enumerate() {
                let x = u - b as f64;
                if x.abs() > half {
                    assert_eq!(*a, Complex64::new(0.0, 0.0));
                    continue;
                }
                let want = coef * window.response(x, m, l);
                assert!((a - want).norm() < 1e-6 * peak, "{window:?} bin {b}: {a} vs {want}");
                checked += 1;
            }
            assert!(checked > 2 * DEFAULT_KERNEL_TAPS * pad - 2);
        }
    }

    #[test]
    fn calibration_maps_mean_to_reference() {
        let params = FiberParams {
            length_m: 50.0,
            ..Default::default()
        };
        let sweep = desk_sweep(50.0);
        let rx = ReceiverModel::default();
        let synth = RangeSynthesizer::new(&params, &sweep, &LaserModel::disabled(), &rx, Window::Hanning, 1).unwrap();
        let mut total = 0.0;
        let mut count = 0usize;
        for seed in 0..100 {
            let f = generate_multicore_field_for_bin(&params, 1, seed, synth.bin_spacing()).unwrap();
            let tr = synth.trace(&synth.basis(&f, 0, &[]).unwrap(), &[], Acquisition::Sweep(0), seed).unwrap();
            // skip the partially filled bins at both ends
            for c in &tr.bins[20..tr.len() - 20] {
                total += c.norm_sqr();
                count += 1;
            }
        }
        let dbm = synth.calibration().to_dbm(total / count as f64, Window::Hanning);
        assert!((dbm - rx.signal_reference_dbm).abs() < 0.5, "{dbm}");
        let floor = synth.calibration().to_dbm(synth.calibration().noise_units(Window::Hanning), Window::Hanning);
        assert!((floor - rx.noise_floor_dbm).abs() < 1e-9);
    }

    #[test]
    fn vibration_appears_in_slow_time_phase() {
        // Noiseless: the phase change of bins well beyond the event equals
        // 4π(n+Cε)δL/λ.
        let params = FiberParams {
            length_m: 5.0,
            ..Default::default()
        };
        let sweep = desk_sweep(5.0);
        let f = generate_multicore_field_for_bin(&params, 1, 2, sweep.bin_spacing(&params)).unwrap();
        let ev = [VibrationEvent::sinusoid(2.0, 40e-9, 2.0)];
        let (laser, rx) = (LaserModel::disabled(), ReceiverModel::disabled());
        let synth = RangeSynthesizer::new(&params, &sweep, &laser, &rx, Window::Hanning, 1).unwrap();
        let basis = synth.basis(&f, 0, &ev).unwrap();
        let r = synth.trace(&basis, &ev, Acquisition::Reference, 0).unwrap();
        let t = synth.trace(&basis, &ev, Acquisition::Sweep(1), 0).unwrap();
        let want = crate::fiber::vibration_phase_shift(ev[0].delta_l(0.1), &params);
        let b = (3.5 / synth.bin_spacing()) as usize;
        let got = (t.bins[b] * r.bins[b].conj()).arg();
        assert!((got - want).abs() < 0.01 * want.abs(), "{got} vs {want}");
        let before = (1.0 / synth.bin_spacing()) as usize;
        assert!((t.bins[before] * r.bins[before].conj()).arg().abs() < 1e-9);

        // time-domain path agrees
        let beat_r = synthesize_beat(&f, 0, &ev, &sweep, &laser, &rx, Acquisition::Reference, 0).unwrap();
        let beat_t = synthesize_beat(&f, 0, &ev, &sweep, &laser, &rx, Acquisition::Sweep(1), 0).unwrap();
        let tr = to_complex_trace(&beat_r, Window::Hanning, 1.468).unwrap();
        let tt = to_complex_trace(&beat_t, Window::Hanning, 1.468).unwrap();
        let got_slow = (tt.bins[b] * tr.bins[b].conj()).arg();
        assert!((got_slow - want).abs() < 0.01 * want.abs(), "{got_slow} vs {want}");
    }

    #[test]
    fn phase_noise_smear_matches_time_domain() {
        // Short sweep and a broad linewidth so the time-domain reference is
        // cheap; the linewidth stays well below the sample rate so the
        // unfiltered time-domain record aliases little smear power.
        let params = FiberParams {
            length_m: 200.0,
            scatterer_density_per_m: 200.0,
            ..Default::default()
        };
        let sweep = SweepConfig {
            sweep_range_hz: 8e8,
            sample_rate_hz: 1e6,
            ..Default::default()
        };
        let laser = LaserModel {
            linewidth_hz: 2e4,
            enabled: true,
        };
        let rx = ReceiverModel::disabled();
        let synth = RangeSynthesizer::new(&params, &sweep, &laser, &rx, Window::Hanning, 1).unwrap();
        let (mut resid, mut expected) = (0.0, 0.0);
        for seed in 0..3 {
            let f = generate_multicore_field_for_bin(&params, 1, seed, synth.bin_spacing()).unwrap();
            let beat = synthesize_beat(&f, 0, &[], &sweep, &laser, &rx, Acquisition::Sweep(0), seed).unwrap();
            let slow = to_complex_trace(&beat, Window::Hanning, 1.468).unwrap().crop(200.0);
            let coherent = synth.basis(&f, 0, &[]).unwrap().coherent(&[], 0.0, &params);
            for (b, (s, c)) in slow.bins.iter().zip(&coherent).enumerate().skip(15) {
                resid += (s - c).norm_sqr();
                expected += synth.noise_profile()[b];
            }
        }
        let ratio = resid / expected;
        assert!((ratio - 1.0).abs() < 0.2, "smear power ratio {ratio}");
    }
}
