//! `mcf-ofdr` command-line front end.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration or parameter
//! error, 3 resource cap exceeded, 4 internal invariant violation (a
//! `diagnostic.json` is written to the output directory).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mcf_ofdr::scenario::{self, Product, Scenario};
use mcf_ofdr::Error;

const OUT_ENV: &str = "MCF_OFDR_OUT";

#[derive(Parser, Debug)]
#[command(name = "mcf-ofdr", version, about = "Multi-core fiber φ-OFDR fading-suppression simulator")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Scenario TOML file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root; products go to `<out>/<scenario name>/`.
    #[arg(long, global = true, env = OUT_ENV, default_value = "mcf-out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Reject unknown configuration keys (default).
    #[arg(long, global = true, overrides_with = "lax")]
    strict: bool,
    /// Warn about unknown configuration keys instead of rejecting them.
    #[arg(long, global = true, overrides_with = "strict")]
    lax: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every product listed in the scenario's `outputs`.
    Simulate,
    /// Fading statistics only.
    Stats,
    /// Time-distance map, localization and waveform demodulation.
    Demod {
        /// Demodulate at these distances instead of the event positions.
        #[arg(long = "at", value_name = "METERS")]
        locations: Vec<f64>,
    },
    /// Two-reflector resolution test (defaults to the `resolution` preset).
    Resolve {
        /// Reflector separations to test.
        #[arg(long = "separation", value_name = "METERS")]
        separations: Vec<f64>,
    },
    /// Run a built-in scenario, print its TOML, or list the presets.
    Preset {
        name: Option<String>,
        /// Print the preset TOML instead of running it.
        #[arg(long)]
        print: bool,
        /// List the available presets.
        #[arg(long)]
        list: bool,
    },
}

fn load(g: &Global, fallback_preset: Option<&str>) -> Result<Scenario, Error> {
    let strict = !g.lax;
    let mut sc = match (&g.config, fallback_preset) {
        (Some(path), _) => {
            let loaded = scenario::load_scenario(path, strict)?;
            for w in &loaded.warnings {
                eprintln!("warning: {w}");
            }
            loaded.scenario
        }
        (None, Some(name)) => scenario::preset(name)?,
        (None, None) => return Err(Error::Config("this command needs --config <path>".into())),
    };
    if let Some(seed) = g.seed {
        sc.seed = seed;
    }
    Ok(sc)
}

fn resolve_scenario(cli: &Cli) -> Result<Option<Scenario>, Error> {
    let g = &cli.global;
    let sc = match &cli.command {
        Command::Simulate => load(g, None)?,
        Command::Stats => {
            let mut sc = load(g, None)?;
            sc.outputs = vec![Product::Stats];
            sc
        }
        Command::Demod { locations } => {
            let mut sc = load(g, None)?;
            sc.outputs = vec![Product::Map, Product::Demod];
            if !locations.is_empty() {
                sc.processing.demod_locations_m = locations.clone();
            }
            sc
        }
        Command::Resolve { separations } => {
            let mut sc = load(g, Some("resolution"))?;
            sc.outputs = vec![Product::Resolve];
            if !separations.is_empty() {
                sc.processing.resolve_separations_m = separations.clone();
            }
            sc
        }
        Command::Preset { name, print, list } => {
            if *list || name.is_none() {
                for n in scenario::preset_names() {
                    println!("{n}");
                }
                return Ok(None);
            }
            let name = name.as_deref().unwrap_or_default();
            if *print {
                print!("{}", scenario::preset_source(name)?);
                return Ok(None);
            }
            let mut sc = scenario::preset(name)?;
            if let Some(seed) = g.seed {
                sc.seed = seed;
            }
            sc
        }
    };
    Ok(Some(sc))
}

fn run(sc: &Scenario, dir: &Path) -> Result<(), Error> {
    let summary = scenario::run_scenario(sc, dir)?;
    println!("scenario {} (seed {}, hash {})", summary.scenario, summary.seed, summary.scenario_hash);
    for (file, hash) in &summary.products {
        println!("  {}  {}", &hash[..16], dir.join(file).display());
    }
    for (k, v) in &summary.metrics {
        println!("  {k} = {v}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(3);
        }
    }
    let sc = match resolve_scenario(&cli) {
        Ok(Some(sc)) => sc,
        Ok(None) => return ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    let dir = cli.global.out.join(&sc.name);
    match run(&sc, &dir) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = e.exit_code();
            if code == 4 {
                match scenario::write_diagnostic_dump(&dir, Some(&sc), &e) {
                    Ok(p) => eprintln!("diagnostic dump written to {}", p.display()),
                    Err(io) => eprintln!("could not write diagnostic dump: {io}"),
                }
            }
            ExitCode::from(code)
        }
    }
}
