use num_complex::Complex64;
use serde::Serialize;

use crate::engine::{LaserModel, RangeSynthesizer, ReceiverModel};
use crate::fiber::Scatterer;
use crate::{Error, Result};

use super::Scenario;

/// Dip required between the two peaks.
pub const RESOLVE_DIP_DB: f64 = 3.0;

/// Padding used to sample the two-reflector profile finely.
const RESOLVE_ZERO_PAD: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum ResolveMode {
    /// Incoherent sum of both responses, i.e. the profile averaged over the
    /// reflectors' relative phase.
    PhaseAveraged,
    /// Coherent sum with a fixed relative phase.
    Coherent { relative_phase_rad: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResolveOutcome {
    pub separation_m: f64,
    pub resolved: bool,
    pub dip_db: f64,
    /// Positions of the two strongest peaks between the reflectors, when
    /// two exist.
    pub peaks_m: Option<(f64, f64)>,
}

/// Places two equal noiseless reflectors at mid-fiber ± `separation_m / 2`
/// and checks for two peaks separated by a dip of at least 3 dB.
pub fn resolve_test(separation_m: f64, scenario: &Scenario, mode: ResolveMode) -> Result<ResolveOutcome> {
    if !(separation_m > 0.0) {
        return Err(Error::param("separation must be > 0"));
    }
    let params = &scenario.fiber;
    let mid = 0.5 * params.length_m;
    let (z1, z2) = (mid - 0.5 * separation_m, mid + 0.5 * separation_m);
    if z1 < 0.0 || z2 > params.length_m {
        return Err(Error::param("separation does not fit on the fiber"));
    }
    let pad = scenario.processing.zero_pad.max(RESOLVE_ZERO_PAD);
    let synth = RangeSynthesizer::new(
        params,
        &scenario.sweep,
        &LaserModel::disabled(),
        &ReceiverModel::disabled(),
        scenario.processing.window,
        pad,
    )?;
    let one = |z: f64| {
        synth.render(&[Scatterer {
            position_m: z,
            reflectivity: Complex64::new(1.0, 0.0),
        }])
    };
    let (a, b) = (one(z1), one(z2));
    let profile: Vec<f64> = match mode {
        ResolveMode::PhaseAveraged => a.iter().zip(&b).map(|(x, y)| x.norm_sqr() + y.norm_sqr()).collect(),
        ResolveMode::Coherent { relative_phase_rad } => {
            let rot = Complex64::from_polar(1.0, relative_phase_rad);
            a.iter().zip(&b).map(|(x, y)| (x + y * rot).norm_sqr()).collect()
        }
    };
    let dz = synth.bin_spacing();
    let unpadded = dz * pad as f64;
    // Peaks are only sought between the reflectors widened by one
    // resolution bin, which keeps window sidelobes out of the search.
    let lo = (((z1 - unpadded) / dz).floor().max(1.0)) as usize;
    let hi = (((z2 + unpadded) / dz).ceil() as usize).min(profile.len() - 2);
    let mut maxima: Vec<usize> = (lo..=hi)
        .filter(|&i| profile[i] > profile[i - 1] && profile[i] >= profile[i + 1])
        .collect();
    maxima.sort_by(|&i, &j| profile[j].total_cmp(&profile[i]));
    let outcome = if maxima.len() >= 2 {
        let (p, q) = (maxima[0].min(maxima[1]), maxima[0].max(maxima[1]));
        let valley = profile[p..=q].iter().copied().fold(f64::INFINITY, f64::min);
        let dip_db = 10.0 * (profile[p].min(profile[q]) / valley).log10();
        ResolveOutcome {
            separation_m,
            resolved: dip_db >= RESOLVE_DIP_DB && separation_m >= unpadded,
            dip_db,
            peaks_m: Some((p as f64 * dz, q as f64 * dz)),
        }
    } else {
        ResolveOutcome {
            separation_m,
            resolved: false,
            dip_db: 0.0,
            peaks_m: None,
        }
    };
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::SweepConfig;
    use crate::fiber::FiberParams;

    fn short() -> Scenario {
        Scenario {
            fiber: FiberParams {
                length_m: 2.0,
                ..Default::default()
            },
            sweep: SweepConfig {
                sample_rate_hz: 2e4,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn well_separated_reflectors() {
        let r = resolve_test(0.10, &short(), ResolveMode::PhaseAveraged).unwrap();
        assert!(r.resolved);
        assert!(r.dip_db >= 20.0, "{}", r.dip_db);
        let (p, q) = r.peaks_m.unwrap();
        assert!((q - p - 0.10).abs() < 0.005);
    }

    #[test]
    fn sub_bin_separation_is_unresolved() {
        for mode in [ResolveMode::PhaseAveraged, ResolveMode::Coherent { relative_phase_rad: 0.0 }] {
            let r = resolve_test(0.01, &short(), mode).unwrap();
            assert!(!r.resolved, "{r:?}");
        }
    }

    #[test]
    fn rejects_bad_separation() {
        assert!(resolve_test(0.0, &short(), ResolveMode::PhaseAveraged).is_err());
        assert!(resolve_test(5.0, &short(), ResolveMode::PhaseAveraged).is_err());
    }
}
