//! Slow-time vibration analysis.
//!
//! Every sweep is compared against the reference acquisition
//! (`C_sweep·conj(C_ref)`), so static speckle phase cancels and only the
//! phase accumulated since the reference remains. The amplitude-weighted
//! gauge product across cores then turns those phase-change traces into a
//! differential phase per sweep, which forms the rows of a time–distance
//! map.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::dsp::{phase_change, rvs_differential_phase, unwrap_slow_time, ComplexTrace, DifferentialPhaseTrace, Window};
use crate::fiber::{length_from_phase, FiberParams};
use crate::{Error, Result};

/// Fewest sweeps accepted for spectral estimates.
pub const MIN_DEMOD_SWEEPS: usize = 8;

/// Largest reported SNR, keeping the value finite for noiseless input.
pub const MAX_SNR_DB: f64 = 300.0;

/// Reference traces plus one set of core traces per sweep.
#[derive(Clone, Debug)]
pub struct SweepSeries {
    pub reference: Vec<ComplexTrace>,
    pub sweeps: Vec<Vec<ComplexTrace>>,
    pub repetition_period_s: f64,
}

impl SweepSeries {
    pub fn n_sweeps(&self) -> usize {
        self.sweeps.len()
    }

    pub fn n_cores(&self) -> usize {
        self.reference.len()
    }

    /// Copy restricted to the first `n` cores.
    pub fn with_cores(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.n_cores() {
            return Err(Error::param(format!(
                "requested {n} cores but only {} are simulated",
                self.n_cores()
            )));
        }
        Ok(Self {
            reference: self.reference[..n].to_vec(),
            sweeps: self.sweeps.iter().map(|s| s[..n].to_vec()).collect(),
            repetition_period_s: self.repetition_period_s,
        })
    }

    /// Phase-change traces of one sweep, core by core.
    pub fn phase_changes(&self, sweep: usize) -> Result<Vec<ComplexTrace>> {
        let cores = self.sweeps.get(sweep).ok_or(Error::Index {
            what: "sweep",
            index: sweep,
            len: self.sweeps.len(),
        })?;
        if cores.len() != self.reference.len() {
            return Err(Error::input("sweep and reference hold different core counts"));
        }
        cores
            .iter()
            .zip(&self.reference)
            .map(|(c, r)| phase_change(c, r))
            .collect()
    }

    /// Differential phase of every sweep.
    pub fn differential_phase(&self, gauge_bins: usize) -> Result<Vec<DifferentialPhaseTrace>> {
        (0..self.n_sweeps())
            .map(|s| rvs_differential_phase(&self.phase_changes(s)?, gauge_bins))
            .collect()
    }
}

/// Differential phase, one row per sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeDistanceMap {
    pub rows: Vec<Vec<f64>>,
    pub t_slow_s: Vec<f64>,
    pub bin_spacing_m: f64,
    pub gauge_bins: usize,
}

impl TimeDistanceMap {
    pub fn n_columns(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// Gauge-center distance of column `i`.
    pub fn distance(&self, i: usize) -> f64 {
        (i as f64 + 0.5 * self.gauge_bins as f64) * self.bin_spacing_m
    }

    pub fn column(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(move |r| r[i])
    }

    /// Circular standard deviation of every column across sweeps.
    pub fn column_std(&self) -> Vec<f64> {
        let n = self.rows.len() as f64;
        (0..self.n_columns())
            .map(|i| {
                let z: Complex64 = self.column(i).map(|p| Complex64::from_polar(1.0, p)).sum();
                let r = (z.norm() / n).min(1.0);
                if r <= 0.0 {
                    PI
                } else {
                    (-2.0 * r.ln()).sqrt()
                }
            })
            .collect()
    }
}

pub fn time_distance_map(sweeps: &[DifferentialPhaseTrace], repetition_period_s: f64) -> Result<TimeDistanceMap> {
    if sweeps.len() < 2 {
        return Err(Error::input("a time-distance map needs at least two sweeps"));
    }
    let first = &sweeps[0];
    if sweeps
        .iter()
        .any(|s| s.dphi.len() != first.dphi.len() || s.gauge_bins != first.gauge_bins)
    {
        return Err(Error::input("differential-phase traces are ragged"));
    }
    Ok(TimeDistanceMap {
        rows: sweeps.iter().map(|s| s.dphi.clone()).collect(),
        t_slow_s: (0..sweeps.len()).map(|i| i as f64 * repetition_period_s).collect(),
        bin_spacing_m: first.bin_spacing_m,
        gauge_bins: first.gauge_bins,
    })
}

/// A run of map columns whose slow-time spread exceeds the threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct EventCluster {
    pub location_m: f64,
    pub first_column: usize,
    pub last_column: usize,
    pub peak_std_rad: f64,
}

/// Clusters of columns whose circular standard deviation exceeds
/// `threshold_sigma` times the median over all columns. Clusters closer
/// than one gauge length are merged; each is reported at its
/// variance-weighted center.
pub fn event_clusters(map: &TimeDistanceMap, threshold_sigma: f64) -> Result<Vec<EventCluster>> {
    if !(threshold_sigma > 0.0) {
        return Err(Error::param("detection threshold must be > 0"));
    }
    let std = map.column_std();
    if std.is_empty() {
        return Ok(Vec::new());
    }
    let mut sorted = std.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let level = threshold_sigma * median.max(1e-6);

    let mut runs: Vec<(usize, usize)> = Vec::new();
    for (i, &s) in std.iter().enumerate() {
        if s <= level {
            continue;
        }
        match runs.last_mut() {
            Some((_, end)) if i - *end <= map.gauge_bins.max(1) => *end = i,
            _ => runs.push((i, i)),
        }
    }
    Ok(runs
        .into_iter()
        .map(|(a, b)| {
            let (mut w, mut wz, mut peak) = (0.0, 0.0, 0.0f64);
            for (i, &s) in std.iter().enumerate().take(b + 1).skip(a) {
                let v = s * s;
                w += v;
                wz += v * map.distance(i);
                peak = peak.max(s);
            }
            EventCluster {
                location_m: wz / w,
                first_column: a,
                last_column: b,
                peak_std_rad: peak,
            }
        })
        .collect())
}

/// Locations of detected vibration events.
pub fn locate_events(map: &TimeDistanceMap, threshold_sigma: f64) -> Result<Vec<f64>> {
    Ok(event_clusters(map, threshold_sigma)?
        .into_iter()
        .map(|c| c.location_m)
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct DemodulationResult {
    pub location_m: f64,
    /// `(t_slow_s, phase_rad)` per sweep.
    pub slow_time_waveform: Vec<(f64, f64)>,
    /// One-sided `(frequency_hz, power_rad2)` with power scaled so that a
    /// sinusoid of amplitude `A` on a bin center reads `A²`.
    pub spectrum: Vec<(f64, f64)>,
    pub peak_frequency_hz: f64,
    pub amplitude_rad: f64,
    pub snr_db: f64,
    /// Median off-peak amplitude.
    pub phase_floor_rad: f64,
    pub sensitivity_m: f64,
}

/// Extracts the slow-time waveform at `location_m` and analyses its
/// spectrum.
pub fn demodulate(
    series: &SweepSeries,
    location_m: f64,
    gauge_bins: usize,
    params: &FiberParams,
) -> Result<DemodulationResult> {
    if !(location_m >= 0.0 && location_m <= params.length_m) {
        return Err(Error::param(format!(
            "location {location_m} m is outside the {} m fiber",
            params.length_m
        )));
    }
    if series.n_sweeps() < MIN_DEMOD_SWEEPS {
        return Err(Error::config(format!(
            "{} sweeps given, spectral estimates need at least {MIN_DEMOD_SWEEPS}",
            series.n_sweeps()
        )));
    }
    let dphi = series.differential_phase(gauge_bins)?;
    let idx = dphi[0]
        .index_near(location_m)
        .ok_or_else(|| Error::input("differential-phase trace is empty"))?;
    let raw: Vec<f64> = dphi.iter().map(|d| d.dphi[idx]).collect();
    let waveform = unwrap_slow_time(&raw);
    let fs_slow = 1.0 / series.repetition_period_s;
    let analysis = analyse_waveform(&waveform, fs_slow)?;
    Ok(DemodulationResult {
        location_m: dphi[0].distance(idx),
        slow_time_waveform: waveform
            .iter()
            .enumerate()
            .map(|(i, &p)| (i as f64 * series.repetition_period_s, p))
            .collect(),
        sensitivity_m: length_from_phase(analysis.phase_floor_rad, params),
        spectrum: analysis.spectrum,
        peak_frequency_hz: analysis.peak_frequency_hz,
        amplitude_rad: analysis.amplitude_rad,
        snr_db: analysis.snr_db,
        phase_floor_rad: analysis.phase_floor_rad,
    })
}

/// Spectral analysis of a slow-time phase series.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveformAnalysis {
    pub spectrum: Vec<(f64, f64)>,
    pub peak_frequency_hz: f64,
    pub amplitude_rad: f64,
    pub snr_db: f64,
    pub phase_floor_rad: f64,
}

/// Hann-windowed spectrum of a mean-removed series. The amplitude comes from
/// the energy in the main lobe, which is insensitive to where the tone falls
/// between bins.
pub fn analyse_waveform(samples: &[f64], sample_rate_hz: f64) -> Result<WaveformAnalysis> {
    let n = samples.len();
    if n < MIN_DEMOD_SWEEPS {
        return Err(Error::config(format!(
            "{n} samples given, spectral estimates need at least {MIN_DEMOD_SWEEPS}"
        )));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let w = Window::Hanning.coefficients(n);
    let mut buf: Vec<Complex64> = samples
        .iter()
        .zip(&w)
        .map(|(x, w)| Complex64::new((x - mean) * w, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let half = n / 2 + 1;
    let sw = Window::Hanning.sum(n);
    let sw2 = Window::Hanning.sum_sq(n);
    let power: Vec<f64> = buf[..half].iter().map(|x| (2.0 * x.norm() / sw).powi(2)).collect();
    let df = sample_rate_hz / n as f64;

    let peak = (1..half)
        .max_by(|&a, &b| power[a].total_cmp(&power[b]))
        .ok_or_else(|| Error::input("series too short"))?;
    // Gaussian interpolation between neighbouring bins.
    let offset = if peak + 1 < half && power[peak - 1] > 0.0 && power[peak + 1] > 0.0 && power[peak] > 0.0 {
        let (a, b, c) = (power[peak - 1].ln(), power[peak].ln(), power[peak + 1].ln());
        let den = a - 2.0 * b + c;
        if den < 0.0 {
            (0.5 * (a - c) / den).clamp(-0.5, 0.5)
        } else {
            0.0
        }
    } else {
        0.0
    };
    let lobe = peak.saturating_sub(2).max(1)..(peak + 3).min(half);
    let energy: f64 = buf[lobe.clone()].iter().map(|x| x.norm_sqr()).sum();
    let amplitude_rad = (4.0 * energy / (n as f64 * sw2)).sqrt();

    let mut off: Vec<f64> = (1..half).filter(|k| !lobe.contains(k)).map(|k| power[k]).collect();
    let floor_power = if off.is_empty() {
        0.0
    } else {
        off.sort_by(f64::total_cmp);
        off[off.len() / 2]
    };
    let snr_db = if floor_power > 0.0 {
        (10.0 * (power[peak] / floor_power).log10()).min(MAX_SNR_DB)
    } else {
        MAX_SNR_DB
    };
    Ok(WaveformAnalysis {
        spectrum: power.iter().enumerate().map(|(k, &p)| (k as f64 * df, p)).collect(),
        peak_frequency_hz: (peak as f64 + offset) * df,
        amplitude_rad,
        snr_db,
        phase_floor_rad: floor_power.sqrt(),
    })
}
