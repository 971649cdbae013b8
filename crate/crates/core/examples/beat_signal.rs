//! Time-domain beat synthesis and range compression of a short fiber.
//!
//! Synthesizes the detector record of one core, compresses it with a Hann
//! window and compares a 2 m reflector's beat frequency with `γ·2nz/c`.
//!
//! Run with `cargo run --release --example beat_signal`.

use mcf_ofdr::dsp::{to_complex_trace, Window};
use mcf_ofdr::engine::{synthesize_beat, Acquisition, LaserModel, ReceiverModel, SweepConfig};
use mcf_ofdr::fiber::{FiberParams, MultiCoreFiber, Scatterer};
use num_complex::Complex64;

fn main() -> mcf_ofdr::Result<()> {
    let params = FiberParams {
        length_m: 4.0,
        ..FiberParams::default()
    };
    let sweep = SweepConfig {
        sample_rate_hz: 4e4,
        ..SweepConfig::default()
    };
    let reflector = Scatterer {
        position_m: 2.0,
        reflectivity: Complex64::new(1.0, 0.0),
    };
    let fiber = MultiCoreFiber::from_cores(params.clone(), vec![vec![reflector]])?;
    let beat = synthesize_beat(
        &fiber,
        0,
        &[],
        &sweep,
        &LaserModel::disabled(),
        &ReceiverModel::disabled(),
        Acquisition::Reference,
        1,
    )?;
    println!(
        "{} samples at {} Hz, expected beat {:.2} Hz",
        beat.samples.len(),
        beat.sample_rate_hz,
        sweep.beat_frequency(2.0, &params)
    );
    let trace = to_complex_trace(&beat, Window::Hanning, params.group_index)?;
    let intensity = trace.intensity();
    let peak = (0..intensity.len()).max_by(|&a, &b| intensity[a].total_cmp(&intensity[b])).unwrap_or(0);
    println!(
        "peak at bin {peak} = {:.4} m (bin spacing {:.4} m)",
        trace.distance(peak),
        trace.bin_spacing_m
    );
    Ok(())
}
