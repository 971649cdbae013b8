//! Intensity contrast versus core count and the fading probability
//! against the gamma-law oracle, from independent 50 m realizations.
//!
//! Run with `cargo run --release --example fading_statistics`.

use mcf_ofdr::scenario::{Scenario, Simulator};
use mcf_ofdr::stats::{contrast_vs_cores, gamma_fading_oracle, intensity_statistics};
use mcf_ofdr::dsp::intensity_average;

fn main() -> mcf_ofdr::Result<()> {
    let mut sc = Scenario {
        name: "fading-statistics".into(),
        n_cores: 6,
        ..Scenario::default()
    };
    sc.fiber.length_m = 50.0;
    sc.sweep.sample_rate_hz = 4e5;
    let sim = Simulator::new(&sc)?;
    let realizations = (0..10)
        .map(|r| Ok(sim.realize(r)?.series.sweeps.swap_remove(0)))
        .collect::<mcf_ofdr::Result<Vec<_>>>()?;

    for (n, c) in contrast_vs_cores(&realizations, &[1, 2, 3, 4, 5, 6], 4)? {
        println!("N={n}: contrast {c:.3} (1/sqrt(N) = {:.3})", 1.0 / (n as f64).sqrt());
    }
    for n in [1, 2, 4, 6] {
        let arrays = realizations
            .iter()
            .map(|r| intensity_average(&r[..n]))
            .collect::<mcf_ofdr::Result<Vec<_>>>()?;
        let st = intensity_statistics(&arrays)?;
        println!(
            "N={n}: P(I < 0.1 mean) empirical {:.2e}, oracle {:.2e}",
            st.cdf(0.1),
            gamma_fading_oracle(n, 0.1)
        );
    }
    Ok(())
}
