//! Scenario files, presets and the end-to-end runner.
//!
//! A scenario is a TOML document. Every key is optional and falls back to
//! the defaults below; unknown keys are rejected in strict mode and
//! reported as warnings in lax mode.
//!
//! ```toml
//! version = 1
//! name = "desk-localization"
//! seed = 7
//! n_cores = 6
//! n_sweeps = 20
//! realizations = 1          # independent fibers for statistics products
//! engine = "fast"           # or "time-domain"
//! outputs = ["trace", "dphi", "map", "stats", "demod", "resolve", "archive"]
//! memory_cap_mb = 2048
//!
//! [fiber]      # length_m, scatterer_density_per_m, group_index, strain_coeff, wavelength_m
//! [sweep]      # start_freq_hz, sweep_range_hz, sweep_rate_hz_per_s, sample_rate_hz, repetition_period_s
//! [laser]      # linewidth_hz, enabled
//! [receiver]   # noise_floor_dbm, signal_reference_dbm, enabled
//! [processing] # see `Processing`
//!
//! [[events]]   # position_m, extent_m, amplitude_m, frequency_hz, phase_rad
//! position_m = 1.46
//! amplitude_m = 100e-9
//! frequency_hz = 2.0
//! ```

mod archive;
mod resolve;
mod run;
mod simulate;

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dsp::Window;
use crate::engine::{LaserModel, ReceiverModel, SweepConfig};
use crate::fiber::{FiberParams, VibrationEvent};
use crate::{Error, Result};

pub use archive::{ArchiveHeader, ArchiveRecord, TraceArchive, ARCHIVE_MAGIC, ARCHIVE_VERSION};
pub use resolve::{resolve_test, ResolveMode, ResolveOutcome};
pub use run::{run_scenario, write_diagnostic_dump, RunSummary};
pub use simulate::{realization_seed, simulate, Simulation, Simulator};

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    /// Range-domain synthesis.
    Fast,
    /// Beat-signal synthesis followed by range compression.
    TimeDomain,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Product {
    Trace,
    Dphi,
    Map,
    Stats,
    Demod,
    Resolve,
    Archive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Processing {
    pub window: Window,
    pub zero_pad: usize,
    /// Gauge for maps, localization and jump counts.
    pub gauge_bins: usize,
    /// Gauge for quantitative demodulation; must clear the window support
    /// on both sides of the probed point.
    pub demod_gauge_bins: usize,
    pub block_length_m: f64,
    pub detection_threshold_sigma: f64,
    pub variance_threshold_rad2: f64,
    pub fading_thresholds: Vec<f64>,
    pub resolve_separations_m: Vec<f64>,
    /// Bins dropped at both trace ends before statistics.
    pub edge_trim_bins: usize,
    /// Probed locations for demodulation; event positions when empty.
    pub demod_locations_m: Vec<f64>,
    /// Store scatterer lists in the trace archive.
    pub archive_scatterers: bool,
}

impl Default for Processing {
    fn default() -> Self {
        Self {
            window: Window::Hanning,
            zero_pad: 1,
            gauge_bins: 2,
            demod_gauge_bins: 8,
            block_length_m: 50.0,
            detection_threshold_sigma: 6.0,
            variance_threshold_rad2: 0.02,
            fading_thresholds: vec![0.01, 0.1, 0.5],
            resolve_separations_m: vec![0.01, 0.02, 0.1],
            edge_trim_bins: 4,
            demod_locations_m: Vec::new(),
            archive_scatterers: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub version: u32,
    pub name: String,
    pub seed: u64,
    pub n_cores: usize,
    pub n_sweeps: usize,
    pub realizations: usize,
    pub engine: Engine,
    pub outputs: Vec<Product>,
    pub memory_cap_mb: f64,
    pub fiber: FiberParams,
    pub sweep: SweepConfig,
    pub laser: LaserModel,
    pub receiver: ReceiverModel,
    pub processing: Processing,
    pub events: Vec<VibrationEvent>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            version: SCENARIO_VERSION,
            name: "scenario".into(),
            seed: 0,
            n_cores: 1,
            n_sweeps: 1,
            realizations: 1,
            engine: Engine::Fast,
            outputs: vec![Product::Trace, Product::Dphi],
            memory_cap_mb: 2048.0,
            fiber: FiberParams::default(),
            sweep: SweepConfig::default(),
            laser: LaserModel::default(),
            receiver: ReceiverModel::default(),
            processing: Processing::default(),
            events: Vec::new(),
        }
    }
}

/// Bytes per complex bin and per stored scatterer.
const COMPLEX_BYTES: f64 = 16.0;
const SCATTERER_BYTES: f64 = 24.0;

/// Time-domain synthesis work (scatterers × samples) accepted before the
/// run is refused as a resource overrun.
pub const MAX_TIME_DOMAIN_WORK: f64 = 2e10;

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.version != SCENARIO_VERSION {
            return Err(Error::config(format!(
                "unsupported scenario version {} (expected {SCENARIO_VERSION})",
                self.version
            )));
        }
        let name_ok = !self.name.is_empty()
            && self.name != "."
            && self.name != ".."
            && self.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c));
        if !name_ok {
            return Err(Error::config(format!(
                "name {:?} must be non-empty and use only letters, digits, '-', '_' or '.'",
                self.name
            )));
        }
        if self.n_cores == 0 {
            return Err(Error::param("n_cores must be >= 1"));
        }
        if self.n_sweeps == 0 {
            return Err(Error::param("n_sweeps must be >= 1"));
        }
        if self.realizations == 0 {
            return Err(Error::param("realizations must be >= 1"));
        }
        if !(self.memory_cap_mb > 0.0) {
            return Err(Error::param("memory_cap_mb must be > 0"));
        }
        self.fiber.validate()?;
        self.sweep.validate()?;
        self.laser.validate()?;
        self.receiver.validate()?;
        self.fiber.check_density(self.sweep.bin_spacing(&self.fiber))?;
        self.sweep.check_nyquist(&self.fiber)?;
        for e in &self.events {
            e.validate(&self.fiber)?;
        }
        let p = &self.processing;
        if p.zero_pad == 0 {
            return Err(Error::param("zero_pad must be >= 1"));
        }
        if p.gauge_bins == 0 || p.demod_gauge_bins == 0 {
            return Err(Error::param("gauge_bins must be >= 1"));
        }
        if !(p.detection_threshold_sigma > 0.0) {
            return Err(Error::param("detection_threshold_sigma must be > 0"));
        }
        if !(p.variance_threshold_rad2 > 0.0) {
            return Err(Error::param("variance_threshold_rad2 must be > 0"));
        }
        if p.fading_thresholds.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::param("fading thresholds must be > 0"));
        }
        if p.resolve_separations_m.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::param("resolve separations must be > 0"));
        }
        if p.demod_locations_m.iter().any(|z| !(*z >= 0.0 && *z <= self.fiber.length_m)) {
            return Err(Error::param("demod locations must lie on the fiber"));
        }
        let has = |x: Product| self.outputs.contains(&x);
        if (has(Product::Map) || has(Product::Demod)) && self.n_sweeps < 2 {
            return Err(Error::config("map and demod products need n_sweeps >= 2"));
        }
        if has(Product::Stats) && self.n_sweeps >= 2 && !(p.block_length_m > 0.0 && p.block_length_m <= self.fiber.length_m) {
            return Err(Error::config(format!(
                "block_length_m {} must be > 0 and at most the fiber length {} m",
                p.block_length_m, self.fiber.length_m
            )));
        }
        if has(Product::Stats) {
            let per_fiber = self.n_bins().saturating_sub(2 * p.edge_trim_bins);
            let needed = crate::stats::MIN_STATISTICS_SAMPLES.div_ceil(per_fiber.max(1));
            if per_fiber == 0 || self.realizations < needed {
                return Err(Error::config(format!(
                    "stats product needs at least {} intensity samples: {per_fiber} usable bins per fiber \
                     require realizations >= {needed}",
                    crate::stats::MIN_STATISTICS_SAMPLES
                )));
            }
        }
        if has(Product::Demod) && self.n_sweeps < crate::demod::MIN_DEMOD_SWEEPS {
            return Err(Error::config(format!(
                "demod product needs n_sweeps >= {}",
                crate::demod::MIN_DEMOD_SWEEPS
            )));
        }
        self.check_resources()
    }

    /// Range bins kept per trace.
    pub fn n_bins(&self) -> usize {
        let dz = self.sweep.bin_spacing(&self.fiber) / self.processing.zero_pad as f64;
        (self.fiber.length_m / dz).floor() as usize + 1
    }

    /// Rough peak memory of one run, in megabytes.
    pub fn estimated_memory_mb(&self) -> f64 {
        let bins = self.n_bins() as f64;
        let cores = self.n_cores as f64;
        let scatterers = cores * self.fiber.length_m * self.fiber.scatterer_density_per_m;
        let traces = (self.n_sweeps as f64 + 1.0) * cores * bins * COMPLEX_BYTES;
        let segments = (self.events.len() as f64 + 1.0) * cores * bins * COMPLEX_BYTES;
        let fft = self.sweep.n_samples() as f64 * self.processing.zero_pad as f64 * COMPLEX_BYTES * 2.0;
        let map = self.n_sweeps as f64 * bins * 8.0 * 2.0;
        (scatterers * SCATTERER_BYTES + traces + segments + fft + map) / 1e6
    }

    fn check_resources(&self) -> Result<()> {
        let mb = self.estimated_memory_mb();
        if mb > self.memory_cap_mb {
            return Err(Error::Resource(format!(
                "estimated memory {mb:.0} MB exceeds memory_cap_mb = {:.0}; reduce n_sweeps, n_cores, fiber length or zero_pad, or raise memory_cap_mb",
                self.memory_cap_mb
            )));
        }
        if self.engine == Engine::TimeDomain {
            let work = self.n_cores as f64
                * self.fiber.length_m
                * self.fiber.scatterer_density_per_m
                * self.sweep.n_samples() as f64
                * (self.n_sweeps as f64 + 1.0)
                * self.realizations as f64;
            if work > MAX_TIME_DOMAIN_WORK {
                return Err(Error::Resource(format!(
                    "time-domain synthesis needs {work:.2e} scatterer-samples (limit {MAX_TIME_DOMAIN_WORK:.0e}); use engine = \"fast\" or shrink the fiber"
                )));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("scenario serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn wants(&self, product: Product) -> bool {
        self.outputs.contains(&product)
    }

    /// Probed demodulation locations.
    pub fn demod_locations(&self) -> Vec<f64> {
        if self.processing.demod_locations_m.is_empty() {
            self.events.iter().map(|e| e.position_m).collect()
        } else {
            self.processing.demod_locations_m.clone()
        }
    }
}

/// Parsed scenario and any ignored keys (lax mode only).
#[derive(Clone, Debug)]
pub struct Loaded {
    pub scenario: Scenario,
    pub warnings: Vec<String>,
}

pub fn load_scenario(path: &Path, strict: bool) -> Result<Loaded> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
    parse_scenario(&text, strict)
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str, strict: bool) -> Result<Loaded> {
    let de = toml::Deserializer::parse(text).map_err(|e| parse_error(text, &e))?;
    let mut unknown = Vec::new();
    let scenario: Scenario =
        serde_ignored::deserialize(de, |path| unknown.push(path.to_string())).map_err(|e| parse_error(text, &e))?;
    if strict && !unknown.is_empty() {
        return Err(Error::config(format!(
            "unknown key{} {} (use --lax to ignore)",
            if unknown.len() > 1 { "s" } else { "" },
            unknown.iter().map(|k| format!("`{k}`")).collect::<Vec<_>>().join(", ")
        )));
    }
    scenario.validate()?;
    Ok(Loaded {
        scenario,
        warnings: unknown.into_iter().map(|k| format!("ignored unknown key `{k}`")).collect(),
    })
}

fn parse_error(text: &str, e: &toml::de::Error) -> Error {
    let line = e
        .span()
        .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
        .unwrap_or(0);
    Error::Parse {
        line,
        message: e.message().trim().to_string(),
    }
}

/// Built-in scenario files.
pub const PRESETS: &[(&str, &str)] = &[
    ("fig2", include_str!("../../presets/fig2.toml")),
    ("fig3", include_str!("../../presets/fig3.toml")),
    ("fig3d", include_str!("../../presets/fig3d.toml")),
    ("fig4", include_str!("../../presets/fig4.toml")),
    ("fig5", include_str!("../../presets/fig5.toml")),
    ("fig6", include_str!("../../presets/fig6.toml")),
    ("resolution", include_str!("../../presets/resolution.toml")),
    ("fig5-full", include_str!("../../presets/fig5-full.toml")),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

pub fn preset_source(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, s)| *s)
        .ok_or_else(|| {
            Error::config(format!(
                "unknown preset `{name}`; available: {}",
                preset_names().collect::<Vec<_>>().join(", ")
            ))
        })
}

pub fn preset(name: &str) -> Result<Scenario> {
    Ok(parse_scenario(preset_source(name)?, true)?.scenario)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_parses_strictly() {
        for name in preset_names() {
            let s = preset(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(s.name, name);
        }
    }

    #[test]
    fn fig3_preset_shape() {
        let s = preset("fig3").unwrap();
        assert_eq!(s.fiber.length_m, 500.0);
        assert_eq!(s.n_cores, 6);
        assert_eq!(s.n_sweeps, 1);
        assert!(s.events.is_empty());
        assert_eq!(s.sweep, SweepConfig::default());
    }

    #[test]
    fn zero_sweep_range_is_named() {
        match parse_scenario("[sweep]\nsweep_range_hz = 0.0\n", true) {
            Err(Error::Parameter(m)) => assert_eq!(m, "sweep_range_hz must be > 0"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn low_density_names_minimum() {
        match parse_scenario("[fiber]\nscatterer_density_per_m = 10.0\n", true) {
            Err(Error::Config(m)) => assert!(m.contains("minimum density is 784"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_strict_and_lax() {
        let doc = "seed = 3\n[fiber]\nlength_m = 2.0\ncolour = \"red\"\n";
        match parse_scenario(doc, true) {
            Err(Error::Config(m)) => assert!(m.contains("fiber.colour"), "{m}"),
            other => panic!("{other:?}"),
        }
        let lax = parse_scenario(doc, false).unwrap();
        assert_eq!(lax.scenario.seed, 3);
        assert_eq!(lax.warnings.len(), 1);
    }

    #[test]
    fn parse_errors_carry_line() {
        match parse_scenario("seed = 1\nn_cores = \"six\"\n", true) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        match parse_scenario("seed = 1\n[fiber\n", true) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn memory_cap_is_enforced() {
        let doc = "n_cores = 6\nn_sweeps = 200\nmemory_cap_mb = 100\n";
        assert!(matches!(parse_scenario(doc, true), Err(Error::Resource(_))));
    }

    #[test]
    fn hash_tracks_content() {
        let a = Scenario::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }
}
