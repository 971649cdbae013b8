//! Fast range-domain traces of a 50 m six-core fiber and the intensity
//! average over an increasing number of cores.
//!
//! Run with `cargo run --release --example multicore_trace`.

use mcf_ofdr::dsp::{intensity_average, Window};
use mcf_ofdr::engine::{Acquisition, LaserModel, RangeSynthesizer, ReceiverModel, SweepConfig};
use mcf_ofdr::fiber::{generate_multicore_field, FiberParams};

fn main() -> mcf_ofdr::Result<()> {
    let params = FiberParams {
        length_m: 50.0,
        ..FiberParams::default()
    };
    let sweep = SweepConfig {
        sample_rate_hz: 4e5,
        ..SweepConfig::default()
    };
    let rx = ReceiverModel::default();
    let synth = RangeSynthesizer::new(&params, &sweep, &LaserModel::default(), &rx, Window::Hanning, 1)?;
    let fiber = generate_multicore_field(&params, 6, 7)?;
    let traces = (0..6)
        .map(|c| {
            let basis = synth.basis(&fiber, c, &[])?;
            synth.trace(&basis, &[], Acquisition::Reference, 7)
        })
        .collect::<mcf_ofdr::Result<Vec<_>>>()?;

    let calib = synth.calibration();
    for n in 1..=6 {
        let avg = intensity_average(&traces[..n])?;
        let mean = avg.iter().sum::<f64>() / avg.len() as f64;
        let min = avg[4..avg.len() - 4].iter().copied().fold(f64::INFINITY, f64::min);
        println!(
            "N={n}: mean {:.1} dBm, deepest dip {:.1} dB below mean",
            calib.to_dbm(mean, Window::Hanning),
            10.0 * (mean / min).log10()
        );
    }
    Ok(())
}
