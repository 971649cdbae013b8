//! Scenario execution and product export.
//!
//! Products land in the output directory as CSV (plus the optional binary
//! archive); `summary.json` is written last and lists every product with
//! its SHA-256, so its presence marks a complete run.
//!
//! | product   | files and columns |
//! |-----------|-------------------|
//! | `trace`   | `trace_core{c}.csv`: distance_m, re, im, intensity_dbm (sweep 0) |
//! |           | `intensity_N{n}.csv`: distance_m, intensity_dbm (mean over the first n cores) |
//! | `dphi`    | `dphi_N{n}.csv`: distance_m, dphi_rad (sweep 0 against the reference) |
//! | `map`     | `map_N{n}.csv`: t_slow_s, distance_m, dphi_rad |
//! | `stats`   | `contrast.csv`: N, contrast, inverse_sqrt_n |
//! |           | `fading_cdf.csv`: threshold, N, p_empirical, p_oracle |
//! |           | `intensity_histogram.csv`: N, bin_lo, bin_hi, probability |
//! |           | `jump_counts.csv`: realization, N, jumps |
//! |           | `phase_variance.csv`: block_start_m, N, variance_rad2 (n_sweeps ≥ 2) |
//! | `demod`   | `demod_waveform.csv`: location_m, N, t_slow_s, phase_rad |
//! |           | `demod_spectrum.csv`: location_m, N, frequency_hz, power_rad2 |
//! |           | `demod_summary.csv`: location_m, N, peak_frequency_hz, amplitude_rad, snr_db, sensitivity_m |
//! | `resolve` | `resolve.csv`: separation_m, resolved, dip_db |
//! | `archive` | `traces.mcft` (see [`TraceArchive`](super::TraceArchive)) |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::demod::{demodulate, locate_events, time_distance_map};
use crate::dsp::{count_phase_jumps, intensity_average, rvs_differential_phase, DifferentialPhaseTrace};
use crate::stats::{
    gamma_fading_oracle, intensity_statistics, mann_kendall, phase_variance_profile, variance_reach,
    BlockVariance,
};
use crate::{Error, Result};

use super::resolve::{resolve_test, ResolveMode};
use super::simulate::{Simulation, Simulator};
use super::{Product, Scenario, TraceArchive};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// File name → SHA-256 of its contents.
    pub products: BTreeMap<String, String>,
    pub metrics: BTreeMap<String, Value>,
}

struct Writer<'a> {
    dir: &'a Path,
    products: BTreeMap<String, String>,
}

impl Writer<'_> {
    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        std::fs::write(self.dir.join(name), bytes)?;
        self.products.insert(name.to_string(), hex::encode(Sha256::digest(bytes)));
        Ok(())
    }

    fn csv(&mut self, name: &str, header: &str, body: String) -> Result<()> {
        let mut s = String::with_capacity(header.len() + body.len() + 1);
        s.push_str(header);
        s.push('\n');
        s.push_str(&body);
        self.put(name, s.as_bytes())
    }
}

/// Core counts reported by default: every count up to the simulated one.
fn core_counts(sc: &Scenario) -> Vec<usize> {
    (1..=sc.n_cores).collect()
}

/// Single-core negative control plus the full core count.
fn control_counts(sc: &Scenario) -> Vec<usize> {
    if sc.n_cores > 1 {
        vec![1, sc.n_cores]
    } else {
        vec![1]
    }
}

fn dphi_sweep0(sim: &Simulation, n: usize, gauge: usize) -> Result<DifferentialPhaseTrace> {
    let pc = sim.series.with_cores(n)?.phase_changes(0)?;
    let d = rvs_differential_phase(&pc, gauge)?;
    check_wrapped(&d)?;
    Ok(d)
}

fn check_wrapped(d: &DifferentialPhaseTrace) -> Result<()> {
    use std::f64::consts::PI;
    if let Some(x) = d.dphi.iter().find(|x| !(**x > -PI && **x <= PI)) {
        return Err(Error::Invariant(format!("differential phase {x} is outside (-π, π]")));
    }
    Ok(())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Runs every requested product and writes them to `out_dir`.
pub fn run_scenario(sc: &Scenario, out_dir: &Path) -> Result<RunSummary> {
    sc.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let mut w = Writer {
        dir: out_dir,
        products: BTreeMap::new(),
    };
    let mut metrics: BTreeMap<String, Value> = BTreeMap::new();
    let simulator = Simulator::new(sc)?;
    let sim = simulator.realize(0)?;
    let window = sc.processing.window;
    let calib = simulator.calibration().clone();
    let dz = simulator.bin_spacing();
    let declared = window.half_power_width_bins() * sc.sweep.bin_spacing(&sc.fiber);
    metrics.insert("bin_spacing_m".into(), json!(dz));
    metrics.insert("declared_resolution_m".into(), json!(declared));
    metrics.insert("range_resolution_factor".into(), json!(declared / sc.fiber.length_m));
    metrics.insert("n_bins".into(), json!(sim.series.reference[0].len()));
    let trim = sc.processing.edge_trim_bins;

    if sc.wants(Product::Trace) {
        for t in &sim.series.sweeps[0] {
            let mut body = String::new();
            for (i, c) in t.bins.iter().enumerate() {
                writeln!(body, "{},{},{},{}", t.distance(i), c.re, c.im, calib.to_dbm(c.norm_sqr(), window)).unwrap();
            }
            w.csv(&format!("trace_core{}.csv", t.core), "distance_m,re,im,intensity_dbm", body)?;
        }
        let mut min_db = BTreeMap::new();
        for n in core_counts(sc) {
            let avg = intensity_average(&sim.series.sweeps[0][..n])?;
            let mut body = String::new();
            for (i, v) in avg.iter().enumerate() {
                writeln!(body, "{},{}", i as f64 * dz, calib.to_dbm(*v, window)).unwrap();
            }
            w.csv(&format!("intensity_N{n}.csv"), "distance_m,intensity_dbm", body)?;
            let inner = &avg[trim..avg.len() - trim];
            let mean = inner.iter().sum::<f64>() / inner.len() as f64;
            let lowest = inner.iter().copied().fold(f64::INFINITY, f64::min);
            min_db.insert(n.to_string(), json!(10.0 * (lowest / mean).log10()));
        }
        metrics.insert("min_normalized_intensity_db".into(), json!(min_db));
        let below_floor = sim.series.sweeps[0][0]
            .bins
            .iter()
            .filter(|c| calib.to_dbm(c.norm_sqr(), window) < sc.receiver.noise_floor_dbm)
            .count();
        metrics.insert("core0_bins_below_noise_floor".into(), json!(below_floor));
    }

    if sc.wants(Product::Dphi) {
        let mut jumps = BTreeMap::new();
        for n in core_counts(sc) {
            let d = dphi_sweep0(&sim, n, sc.processing.gauge_bins)?;
            let mut body = String::new();
            for (i, v) in d.dphi.iter().enumerate() {
                writeln!(body, "{},{}", d.distance(i), v).unwrap();
            }
            w.csv(&format!("dphi_N{n}.csv"), "distance_m,dphi_rad", body)?;
            jumps.insert(n.to_string(), json!(count_phase_jumps(&d.dphi)));
        }
        metrics.insert("jump_counts".into(), json!(jumps));
    }

    if sc.wants(Product::Map) {
        let mut detected = BTreeMap::new();
        for n in control_counts(sc) {
            let series = sim.series.with_cores(n)?;
            let dphi = series.differential_phase(sc.processing.gauge_bins)?;
            dphi.iter().try_for_each(check_wrapped)?;
            let map = time_distance_map(&dphi, sc.sweep.repetition_period_s)?;
            let mut body = String::new();
            for (row, t) in map.rows.iter().zip(&map.t_slow_s) {
                for (i, v) in row.iter().enumerate() {
                    writeln!(body, "{},{},{}", t, map.distance(i), v).unwrap();
                }
            }
            w.csv(&format!("map_N{n}.csv"), "t_slow_s,distance_m,dphi_rad", body)?;
            detected.insert(n.to_string(), json!(locate_events(&map, sc.processing.detection_threshold_sigma)?));
        }
        metrics.insert("detected_events_m".into(), json!(detected));
    }

    if sc.wants(Product::Demod) {
        let (mut wave, mut spec, mut summ) = (String::new(), String::new(), String::new());
        let mut rows = Vec::new();
        for z in sc.demod_locations() {
            for n in control_counts(sc) {
                let r = demodulate(&sim.series.with_cores(n)?, z, sc.processing.demod_gauge_bins, &sc.fiber)?;
                for (t, p) in &r.slow_time_waveform {
                    writeln!(wave, "{z},{n},{t},{p}").unwrap();
                }
                for (f, p) in &r.spectrum {
                    writeln!(spec, "{z},{n},{f},{p}").unwrap();
                }
                writeln!(
                    summ,
                    "{z},{n},{},{},{},{}",
                    r.peak_frequency_hz, r.amplitude_rad, r.snr_db, r.sensitivity_m
                )
                .unwrap();
                rows.push(json!({
                    "location_m": z, "n_cores": n, "peak_frequency_hz": r.peak_frequency_hz,
                    "amplitude_rad": r.amplitude_rad, "snr_db": r.snr_db, "sensitivity_m": r.sensitivity_m,
                }));
            }
        }
        w.csv("demod_waveform.csv", "location_m,N,t_slow_s,phase_rad", wave)?;
        w.csv("demod_spectrum.csv", "location_m,N,frequency_hz,power_rad2", spec)?;
        w.csv(
            "demod_summary.csv",
            "location_m,N,peak_frequency_hz,amplitude_rad,snr_db,sensitivity_m",
            summ,
        )?;
        metrics.insert("demodulation".into(), json!(rows));
    }

    if sc.wants(Product::Stats) {
        run_stats(sc, &simulator, &sim, &mut w, &mut metrics)?;
    }

    if sc.wants(Product::Resolve) {
        let mut body = String::new();
        let mut rows = Vec::new();
        for &s in &sc.processing.resolve_separations_m {
            let r = resolve_test(s, sc, ResolveMode::PhaseAveraged)?;
            writeln!(body, "{},{},{}", s, r.resolved, r.dip_db).unwrap();
            rows.push(json!({"separation_m": s, "resolved": r.resolved, "dip_db": r.dip_db}));
        }
        w.csv("resolve.csv", "separation_m,resolved,dip_db", body)?;
        metrics.insert("resolve".into(), json!(rows));
    }

    if sc.wants(Product::Archive) {
        let archive = TraceArchive::from_simulation(sc, &sim, sc.processing.archive_scatterers)?;
        w.put("traces.mcft", &archive.to_bytes())?;
    }

    let summary = RunSummary {
        scenario: sc.name.clone(),
        scenario_hash: sc.hash(),
        seed: sc.seed,
        out_dir: out_dir.to_path_buf(),
        products: w.products,
        metrics,
    };
    let mut json = serde_json::to_vec_pretty(&summary).map_err(|e| Error::Invariant(e.to_string()))?;
    json.push(b'\n');
    std::fs::write(out_dir.join("summary.json"), json)?;
    Ok(summary)
}

fn run_stats(
    sc: &Scenario,
    simulator: &Simulator,
    first: &Simulation,
    w: &mut Writer<'_>,
    metrics: &mut BTreeMap<String, Value>,
) -> Result<()> {
    let counts = core_counts(sc);
    let trim = sc.processing.edge_trim_bins;
    let mut intensities: Vec<Vec<Vec<f64>>> = vec![Vec::new(); counts.len()];
    let mut jumps: Vec<Vec<usize>> = vec![Vec::new(); counts.len()];
    let mut profiles: Vec<Vec<Vec<BlockVariance>>> = vec![Vec::new(); counts.len()];
    for r in 0..sc.realizations {
        let owned;
        let sim = if r == 0 {
            first
        } else {
            owned = simulator.realize(r)?;
            &owned
        };
        for (k, &n) in counts.iter().enumerate() {
            let avg = intensity_average(&sim.series.sweeps[0][..n])?;
            if avg.len() <= 2 * trim {
                return Err(Error::config("edge_trim_bins removes the whole trace"));
            }
            intensities[k].push(avg[trim..avg.len() - trim].to_vec());
            jumps[k].push(count_phase_jumps(&dphi_sweep0(sim, n, sc.processing.gauge_bins)?.dphi));
            if sc.n_sweeps >= 2 {
                let dphi = sim.series.with_cores(n)?.differential_phase(sc.processing.gauge_bins)?;
                profiles[k].push(phase_variance_profile(&dphi, sc.processing.block_length_m)?);
            }
        }
    }

    let (mut c_body, mut f_body, mut h_body, mut j_body) = (String::new(), String::new(), String::new(), String::new());
    let mut contrasts = BTreeMap::new();
    let mut fading = BTreeMap::new();
    let mut median_jumps = BTreeMap::new();
    for (k, &n) in counts.iter().enumerate() {
        let st = intensity_statistics(&intensities[k])?;
        let mass: f64 = st.probabilities.iter().sum();
        if (mass - 1.0).abs() > 1e-9 {
            return Err(Error::Invariant(format!("histogram mass {mass} differs from 1")));
        }
        writeln!(c_body, "{n},{},{}", st.contrast, 1.0 / (n as f64).sqrt()).unwrap();
        contrasts.insert(n.to_string(), json!(st.contrast));
        let mut per_t = BTreeMap::new();
        for &t in &sc.processing.fading_thresholds {
            let (p, o) = (st.cdf(t), gamma_fading_oracle(n, t));
            writeln!(f_body, "{t},{n},{p},{o}").unwrap();
            per_t.insert(t.to_string(), json!({"empirical": p, "oracle": o}));
        }
        fading.insert(n.to_string(), json!(per_t));
        for (i, p) in st.probabilities.iter().enumerate() {
            writeln!(h_body, "{n},{},{},{p}", st.bin_edges[i], st.bin_edges[i + 1]).unwrap();
        }
        for (r, j) in jumps[k].iter().enumerate() {
            writeln!(j_body, "{r},{n},{j}").unwrap();
        }
        median_jumps.insert(n.to_string(), json!(median(jumps[k].iter().map(|&j| j as f64).collect())));
    }
    w.csv("contrast.csv", "N,contrast,inverse_sqrt_n", c_body)?;
    w.csv("fading_cdf.csv", "threshold,N,p_empirical,p_oracle", f_body)?;
    w.csv("intensity_histogram.csv", "N,bin_lo,bin_hi,probability", h_body)?;
    w.csv("jump_counts.csv", "realization,N,jumps", j_body)?;
    metrics.insert("contrast".into(), json!(contrasts));
    metrics.insert("fading_probability".into(), json!(fading));
    metrics.insert("median_jump_count".into(), json!(median_jumps));

    if sc.n_sweeps >= 2 {
        let mut body = String::new();
        let mut reach = BTreeMap::new();
        let mut trend = BTreeMap::new();
        for (k, &n) in counts.iter().enumerate() {
            let mean = mean_profile(&profiles[k]);
            for b in &mean {
                writeln!(body, "{},{n},{}", b.start_m, b.variance_rad2).unwrap();
            }
            reach.insert(
                n.to_string(),
                json!(variance_reach(&mean, sc.processing.block_length_m, sc.processing.variance_threshold_rad2)),
            );
            if mean.len() >= 3 {
                let v: Vec<f64> = mean.iter().map(|b| b.variance_rad2).collect();
                trend.insert(n.to_string(), json!(mann_kendall(&v)?.p_increasing));
            }
        }
        w.csv("phase_variance.csv", "block_start_m,N,variance_rad2", body)?;
        metrics.insert("variance_reach_m".into(), json!(reach));
        metrics.insert("variance_trend_p".into(), json!(trend));
    }
    Ok(())
}

/// Block-wise mean over realizations.
pub(crate) fn mean_profile(profiles: &[Vec<BlockVariance>]) -> Vec<BlockVariance> {
    let Some(first) = profiles.first() else {
        return Vec::new();
    };
    let k = profiles.len() as f64;
    first
        .iter()
        .enumerate()
        .map(|(i, b)| BlockVariance {
            start_m: b.start_m,
            variance_rad2: profiles.iter().map(|p| p[i].variance_rad2).sum::<f64>() / k,
            saturated_fraction: profiles.iter().map(|p| p[i].saturated_fraction).sum::<f64>() / k,
        })
        .collect()
}

/// Writes `diagnostic.json` describing a failed run and returns its path.
pub fn write_diagnostic_dump(out_dir: &Path, scenario: Option<&Scenario>, error: &Error) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join("diagnostic.json");
    let dump = json!({
        "error": error.to_string(),
        "error_debug": format!("{error:?}"),
        "scenario_hash": scenario.map(Scenario::hash),
        "scenario": scenario,
        "crate_version": env!("CARGO_PKG_VERSION"),
    });
    std::fs::write(&path, serde_json::to_vec_pretty(&dump).expect("json"))?;
    Ok(path)
}
