use rayon::prelude::*;

use crate::demod::SweepSeries;
use crate::dsp::{to_complex_trace_padded, ComplexTrace};
use crate::engine::{synthesize_beat, Acquisition, Calibration, RangeSynthesizer};
use crate::fiber::{generate_multicore_field_for_bin, MultiCoreFiber};
use crate::rng::derive_seed;
use crate::{Error, Result};

use super::{Engine, Scenario};

/// Master seed of realization `index` of a scenario seeded with `seed`.
/// Realization 0 uses the scenario seed itself.
pub fn realization_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, index as u64)
}

/// One fiber realization with its reference and sweep traces.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub seed: u64,
    pub fiber: MultiCoreFiber,
    pub series: SweepSeries,
}

/// Reusable per-scenario synthesis state.
pub struct Simulator {
    scenario: Scenario,
    synth: RangeSynthesizer,
}

impl Simulator {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        let synth = RangeSynthesizer::new(
            &scenario.fiber,
            &scenario.sweep,
            &scenario.laser,
            &scenario.receiver,
            scenario.processing.window,
            scenario.processing.zero_pad,
        )?;
        Ok(Self {
            scenario: scenario.clone(),
            synth,
        })
    }

    pub fn bin_spacing(&self) -> f64 {
        self.synth.bin_spacing()
    }

    pub fn calibration(&self) -> &Calibration {
        self.synth.calibration()
    }

    pub fn realize(&self, index: usize) -> Result<Simulation> {
        let sc = &self.scenario;
        let seed = realization_seed(sc.seed, index);
        let fiber = generate_multicore_field_for_bin(&sc.fiber, sc.n_cores, seed, sc.sweep.bin_spacing(&sc.fiber))?;
        let acquisitions: Vec<Acquisition> = std::iter::once(Acquisition::Reference)
            .chain((0..sc.n_sweeps as u32).map(Acquisition::Sweep))
            .collect();
        // traces[core][acquisition]
        let traces: Vec<Vec<ComplexTrace>> = match sc.engine {
            Engine::Fast => (0..sc.n_cores)
                .map(|core| {
                    let basis = self.synth.basis(&fiber, core, &sc.events)?;
                    acquisitions
                        .par_iter()
                        .map(|&a| self.synth.trace(&basis, &sc.events, a, seed))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<_>>()?,
            Engine::TimeDomain => (0..sc.n_cores)
                .map(|core| {
                    acquisitions
                        .iter()
                        .map(|&a| {
                            let beat = synthesize_beat(&fiber, core, &sc.events, &sc.sweep, &sc.laser, &sc.receiver, a, seed)?;
                            Ok(to_complex_trace_padded(&beat, sc.processing.window, sc.fiber.group_index, sc.processing.zero_pad)?
                                .crop(sc.fiber.length_m))
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<_>>()?,
        };
        for t in traces.iter().flatten() {
            if t.bins.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
                return Err(Error::Invariant(format!(
                    "non-finite bin in core {} {:?}",
                    t.core, t.acquisition
                )));
            }
        }
        let mut reference = Vec::with_capacity(sc.n_cores);
        let mut sweeps: Vec<Vec<ComplexTrace>> = vec![Vec::with_capacity(sc.n_cores); sc.n_sweeps];
        for core_traces in traces {
            let mut it = core_traces.into_iter();
            reference.push(it.next().expect("reference acquisition"));
            for (s, t) in it.enumerate() {
                sweeps[s].push(t);
            }
        }
        Ok(Simulation {
            seed,
            fiber,
            series: SweepSeries {
                reference,
                sweeps,
                repetition_period_s: sc.sweep.repetition_period_s,
            },
        })
    }
}

/// Realization `index` of `scenario`.
pub fn simulate(scenario: &Scenario, index: usize) -> Result<Simulation> {
    Simulator::new(scenario)?.realize(index)
}
