//! Property tests for invariants that cut across modules.

use std::f64::consts::PI;

use mcf_ofdr::dsp::{count_phase_jumps, intensity_average, rvs_differential_phase, wrap_phase, ComplexTrace, Window};
use mcf_ofdr::engine::{Acquisition, SweepConfig};
use mcf_ofdr::fiber::{
    effective_delays, generate_multicore_field, length_from_phase, vibration_phase_shift, FiberParams, Scatterer,
    VibrationEvent,
};
use mcf_ofdr::scenario::{parse_scenario, ArchiveHeader, ArchiveRecord, Scenario, TraceArchive};
use mcf_ofdr::stats::{gamma_fading_oracle, mann_kendall};
use mcf_ofdr::SPEED_OF_LIGHT;
use num_complex::Complex64;
use proptest::prelude::*;

fn short_fiber(length_m: f64) -> FiberParams {
    FiberParams {
        length_m,
        ..FiberParams::default()
    }
}

fn trace(core: usize, bins: Vec<Complex64>) -> ComplexTrace {
    ComplexTrace {
        core,
        acquisition: Acquisition::Reference,
        bins,
        bin_spacing_m: 0.0127,
        window: Window::Hanning,
    }
}

fn complex_vec(len: usize) -> impl Strategy<Value = Vec<Complex64>> {
    proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3).prop_map(|(a, b)| Complex64::new(a, b)), len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn scatterers_are_ordered_and_on_the_fiber(length in 0.05f64..2.0, cores in 1usize..4, seed in any::<u64>()) {
        let params = short_fiber(length);
        let fiber = generate_multicore_field(&params, cores, seed).unwrap();
        for c in 0..cores {
            let s = fiber.core(c).unwrap();
            prop_assert!(!s.is_empty());
            prop_assert!(s.windows(2).all(|w| w[0].position_m < w[1].position_m));
            prop_assert!(s.iter().all(|x| x.position_m >= 0.0 && x.position_m <= length));
        }
        let again = generate_multicore_field(&params, cores, seed).unwrap();
        prop_assert_eq!(fiber, again);
    }

    #[test]
    fn vibration_offsets_are_core_consistent(z0 in 0.1f64..0.9, amp in 1e-9f64..1e-7, t in 0.0f64..5.0, seed in any::<u64>()) {
        let params = short_fiber(1.0);
        let fiber = generate_multicore_field(&params, 3, seed).unwrap();
        let ev = [VibrationEvent::sinusoid(z0, amp, 2.0)];
        let want = vibration_phase_shift(ev[0].delta_l(t), &params);
        let mut beyond_bits = std::collections::BTreeSet::new();
        for c in 0..3 {
            let d = effective_delays(&fiber, c, &ev, t).unwrap();
            for (s, (tau, phase)) in fiber.core(c).unwrap().iter().zip(&d) {
                prop_assert_eq!(*tau, 2.0 * params.group_index * s.position_m / SPEED_OF_LIGHT);
                if s.position_m > z0 {
                    prop_assert!(*phase == want);
                    beyond_bits.insert(phase.to_bits());
                } else {
                    prop_assert!(*phase == 0.0);
                }
            }
        }
        // Identical bits in every core, not just equal values.
        prop_assert_eq!(beyond_bits.len(), 1);
    }

    #[test]
    fn length_and_phase_conversions_invert(dl in -1e-6f64..1e-6) {
        let p = FiberParams::default();
        let back = length_from_phase(vibration_phase_shift(dl, &p), &p);
        prop_assert!((back - dl).abs() <= 1e-12 * dl.abs().max(1e-15));
    }

    #[test]
    fn wrapped_phase_is_half_open(x in -1e3f64..1e3) {
        let w = wrap_phase(x);
        prop_assert!(w > -PI && w <= PI);
        prop_assert!(((x - w) / (2.0 * PI) - ((x - w) / (2.0 * PI)).round()).abs() < 1e-9);
    }

    #[test]
    fn differential_phase_is_wrapped(bins in complex_vec(64), other in complex_vec(64), gauge in 1usize..6) {
        let d = rvs_differential_phase(&[trace(0, bins), trace(1, other)], gauge).unwrap();
        prop_assert_eq!(d.dphi.len(), 64 - gauge);
        prop_assert!(d.dphi.iter().all(|x| *x > -PI && *x <= PI));
    }

    #[test]
    fn slow_phases_never_jump(start in -PI..PI, steps in proptest::collection::vec(-1.5f64..1.5, 1..100)) {
        let mut phase = start;
        let seq: Vec<f64> = steps.iter().map(|s| { phase = wrap_phase(phase + s * 0.5); phase }).collect();
        // Wrapping can only produce jumps where the unwrapped path crosses ±π.
        let crossings = seq.windows(2).filter(|w| (w[1] - w[0]).abs() > PI).count();
        prop_assert_eq!(count_phase_jumps(&seq), crossings);
    }

    #[test]
    fn averaging_identical_cores_is_identity(bins in complex_vec(32), n in 1usize..7) {
        let traces: Vec<_> = (0..n).map(|c| trace(c, bins.clone())).collect();
        let avg = intensity_average(&traces).unwrap();
        for (a, b) in avg.iter().zip(&bins) {
            prop_assert!((a - b.norm_sqr()).abs() <= 1e-9 * b.norm_sqr().max(1.0));
        }
    }

    #[test]
    fn fading_oracle_is_a_cdf(n in 1usize..8, t in 0.0f64..4.0, dt in 0.0f64..1.0) {
        let lo = gamma_fading_oracle(n, t);
        let hi = gamma_fading_oracle(n, t + dt);
        prop_assert!((0.0..=1.0).contains(&lo));
        prop_assert!(hi >= lo);
        if t < 1.0 {
            prop_assert!(gamma_fading_oracle(n + 1, t) <= lo);
        }
    }

    #[test]
    fn mann_kendall_sees_a_rising_series(len in 8usize..40, slope in 0.01f64..1.0) {
        let up: Vec<f64> = (0..len).map(|i| i as f64 * slope).collect();
        let down: Vec<f64> = up.iter().rev().copied().collect();
        prop_assert!(mann_kendall(&up).unwrap().p_increasing < 0.05);
        prop_assert!(mann_kendall(&down).unwrap().p_increasing > 0.95);
    }

    #[test]
    fn bin_spacing_matches_sweep_range(range in 1e9f64..2e10, n in 1.3f64..1.6) {
        let params = FiberParams { group_index: n, ..FiberParams::default() };
        let sweep = SweepConfig { sweep_range_hz: range, sweep_rate_hz_per_s: range * 20.0, ..SweepConfig::default() };
        let dz = sweep.bin_spacing(&params);
        prop_assert!((dz * 2.0 * n * range / SPEED_OF_LIGHT - 1.0).abs() < 1e-9);
    }

    #[test]
    fn scenarios_survive_a_toml_round_trip(seed in any::<u64>(), cores in 1usize..7, sweeps in 1usize..30, z in 0.5f64..40.0) {
        let mut sc = Scenario {
            name: "roundtrip".into(),
            seed,
            n_cores: cores,
            n_sweeps: sweeps,
            ..Scenario::default()
        };
        sc.fiber.length_m = 50.0;
        sc.sweep.sample_rate_hz = 4e5;
        sc.events = vec![VibrationEvent::sinusoid(z, 20e-9, 2.0)];
        let text = toml::to_string(&sc).unwrap();
        let back = parse_scenario(&text, true).unwrap();
        prop_assert!(back.warnings.is_empty());
        prop_assert_eq!(back.scenario.hash(), sc.hash());
        prop_assert_eq!(back.scenario, sc);
    }

    #[test]
    fn archives_round_trip_bit_exactly(
        bins in complex_vec(20),
        spacing in 1e-3f64..1.0,
        sweep in 0u32..1000,
        pos in proptest::collection::vec(0.0f64..10.0, 0..10),
    ) {
        let archive = TraceArchive {
            header: ArchiveHeader {
                scenario_hash: "ab".repeat(32),
                scenario_name: "prop".into(),
                params: serde_json::json!({"spacing": spacing}),
            },
            records: vec![
                ArchiveRecord::Trace { core: 1, acquisition: Acquisition::Sweep(sweep), bin_spacing_m: spacing, bins },
                ArchiveRecord::Trace { core: 0, acquisition: Acquisition::Reference, bin_spacing_m: -0.0, bins: vec![] },
                ArchiveRecord::Scatterers {
                    core: 2,
                    scatterers: pos.iter().map(|&p| Scatterer { position_m: p, reflectivity: Complex64::new(p, -p) }).collect(),
                },
            ],
        };
        let bytes = archive.to_bytes();
        let back = TraceArchive::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes);
        prop_assert_eq!(back, archive);
    }
}
