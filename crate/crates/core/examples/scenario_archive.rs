//! End-to-end scenario run with CSV export, plus a bit-exact trace
//! archive round trip.
//!
//! Run with `cargo run --release --example scenario_archive [out_dir]`.

use mcf_ofdr::scenario::{parse_scenario, run_scenario, simulate, TraceArchive};

const SCENARIO: &str = r#"
version = 1
name = "archive-demo"
seed = 3
n_cores = 2
n_sweeps = 2
outputs = ["trace", "dphi", "archive"]

[fiber]
length_m = 5.0

[sweep]
sample_rate_hz = 4e4
"#;

fn main() -> mcf_ofdr::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "mcf-out/archive-demo".into());
    let sc = parse_scenario(SCENARIO, true)?.scenario;
    let summary = run_scenario(&sc, out.as_ref())?;
    for (file, hash) in &summary.products {
        println!("{file}: {hash}");
    }

    let archive = TraceArchive::read(&std::path::Path::new(&out).join("traces.mcft"))?;
    archive.verify(&sc)?;
    let again = TraceArchive::from_simulation(&sc, &simulate(&sc, 0)?, false)?;
    println!(
        "archive: {} records, {} bytes, identical on re-simulation: {}",
        archive.records.len(),
        archive.to_bytes().len(),
        archive.to_bytes() == again.to_bytes()
    );
    Ok(())
}
