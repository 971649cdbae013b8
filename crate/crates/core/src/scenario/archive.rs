//! Binary trace archive for regression fixtures.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! offset  size  field
//! 0       8     magic "MCFTRACE"
//! 8       4     format version (u32, currently 1)
//! 12      4     header length H (u32)
//! 16      H     header, UTF-8 JSON: {"scenario_hash", "scenario_name", "params"}
//! 16+H    8     record count R (u64)
//! 24+H    40·R  index entries:
//!                 kind u32 (0 = complex trace, 1 = scatterer list)
//!                 core u32
//!                 sweep u32 (0xFFFF_FFFF = reference acquisition; 0 for scatterers)
//!                 reserved u32 (0)
//!                 element count u64
//!                 bin spacing f64 (0 for scatterers)
//!                 payload offset u64, relative to the payload start
//! 24+H+40R      payload:
//!                 trace element     = re f64, im f64          (16 bytes)
//!                 scatterer element = z f64, re f64, im f64   (24 bytes)
//! ```

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::ComplexTrace;
use crate::engine::Acquisition;
use crate::fiber::Scatterer;
use crate::{Error, Result};

use super::{Scenario, Simulation};

pub const ARCHIVE_MAGIC: &[u8; 8] = b"MCFTRACE";
pub const ARCHIVE_VERSION: u32 = 1;

const REFERENCE_SWEEP: u32 = u32::MAX;
const INDEX_ENTRY_BYTES: usize = 40;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveHeader {
    pub scenario_hash: String,
    pub scenario_name: String,
    pub params: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ArchiveRecord {
    Trace {
        core: u32,
        acquisition: Acquisition,
        bin_spacing_m: f64,
        bins: Vec<Complex64>,
    },
    Scatterers {
        core: u32,
        scatterers: Vec<Scatterer>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceArchive {
    pub header: ArchiveHeader,
    pub records: Vec<ArchiveRecord>,
}

fn trace_record(t: &ComplexTrace) -> ArchiveRecord {
    ArchiveRecord::Trace {
        core: t.core as u32,
        acquisition: t.acquisition,
        bin_spacing_m: t.bin_spacing_m,
        bins: t.bins.clone(),
    }
}

impl TraceArchive {
    /// Reference and sweep traces of every core, optionally with the
    /// scatterer lists.
    pub fn from_simulation(scenario: &Scenario, sim: &Simulation, include_scatterers: bool) -> Result<Self> {
        let mut records = Vec::new();
        if include_scatterers {
            for core in 0..sim.fiber.n_cores() {
                records.push(ArchiveRecord::Scatterers {
                    core: core as u32,
                    scatterers: sim.fiber.core(core)?.to_vec(),
                });
            }
        }
        records.extend(sim.series.reference.iter().map(trace_record));
        for sweep in &sim.series.sweeps {
            records.extend(sweep.iter().map(trace_record));
        }
        Ok(Self {
            header: ArchiveHeader {
                scenario_hash: scenario.hash(),
                scenario_name: scenario.name.clone(),
                params: serde_json::to_value(scenario).map_err(|e| Error::Invariant(e.to_string()))?,
            },
            records,
        })
    }

    /// Checks the header hash against `scenario`.
    pub fn verify(&self, scenario: &Scenario) -> Result<()> {
        let want = scenario.hash();
        if self.header.scenario_hash != want {
            return Err(Error::input(format!(
                "archive was written for scenario {} but this scenario hashes to {want}",
                self.header.scenario_hash
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header serializes");
        let mut index = Vec::with_capacity(self.records.len() * INDEX_ENTRY_BYTES);
        let mut payload = Vec::new();
        for r in &self.records {
            let offset = payload.len() as u64;
            let (kind, core, sweep, count, spacing) = match r {
                ArchiveRecord::Trace {
                    core,
                    acquisition,
                    bin_spacing_m,
                    bins,
                } => {
                    for c in bins {
                        payload.extend_from_slice(&c.re.to_le_bytes());
                        payload.extend_from_slice(&c.im.to_le_bytes());
                    }
                    let sweep = match acquisition {
                        Acquisition::Reference => REFERENCE_SWEEP,
                        Acquisition::Sweep(i) => *i,
                    };
                    (0u32, *core, sweep, bins.len() as u64, *bin_spacing_m)
                }
                ArchiveRecord::Scatterers { core, scatterers } => {
                    for s in scatterers {
                        payload.extend_from_slice(&s.position_m.to_le_bytes());
                        payload.extend_from_slice(&s.reflectivity.re.to_le_bytes());
                        payload.extend_from_slice(&s.reflectivity.im.to_le_bytes());
                    }
                    (1u32, *core, 0, scatterers.len() as u64, 0.0)
                }
            };
            index.extend_from_slice(&kind.to_le_bytes());
            index.extend_from_slice(&core.to_le_bytes());
            index.extend_from_slice(&sweep.to_le_bytes());
            index.extend_from_slice(&0u32.to_le_bytes());
            index.extend_from_slice(&count.to_le_bytes());
            index.extend_from_slice(&spacing.to_le_bytes());
            index.extend_from_slice(&offset.to_le_bytes());
        }
        let mut out = Vec::with_capacity(24 + header.len() + index.len() + payload.len());
        out.extend_from_slice(ARCHIVE_MAGIC);
        out.extend_from_slice(&ARCHIVE_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(self.records.len() as u64).to_le_bytes());
        out.extend_from_slice(&index);
        out.extend_from_slice(&payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != ARCHIVE_MAGIC {
            return Err(Error::input("not a trace archive (bad magic)"));
        }
        let version = r.u32()?;
        if version != ARCHIVE_VERSION {
            return Err(Error::input(format!("unsupported archive version {version}")));
        }
        let header_len = r.u32()? as usize;
        let header: ArchiveHeader = serde_json::from_slice(r.take(header_len)?)
            .map_err(|e| Error::input(format!("archive header: {e}")))?;
        let count = r.u64()? as usize;
        let index_len = count
            .checked_mul(INDEX_ENTRY_BYTES)
            .filter(|&n| n <= bytes.len())
            .ok_or_else(|| Error::input("archive index is truncated"))?;
        let mut idx = Reader {
            bytes: r.take(index_len)?,
            pos: 0,
        };
        let payload = &bytes[r.pos..];
        let mut records = Vec::with_capacity(count);
        for _ in 0..count {
            let kind = idx.u32()?;
            let core = idx.u32()?;
            let sweep = idx.u32()?;
            let _reserved = idx.u32()?;
            let n = idx.u64()? as usize;
            let spacing = idx.f64()?;
            let offset = idx.u64()? as usize;
            let width = match kind {
                0 => 16,
                1 => 24,
                k => return Err(Error::input(format!("unknown archive record kind {k}"))),
            };
            let end = n
                .checked_mul(width)
                .and_then(|len| offset.checked_add(len))
                .filter(|&e| e <= payload.len())
                .ok_or_else(|| Error::input("archive record points past the payload"))?;
            let mut p = Reader {
                bytes: &payload[offset..end],
                pos: 0,
            };
            records.push(if kind == 0 {
                let bins = (0..n)
                    .map(|_| Ok(Complex64::new(p.f64()?, p.f64()?)))
                    .collect::<Result<_>>()?;
                ArchiveRecord::Trace {
                    core,
                    acquisition: if sweep == REFERENCE_SWEEP {
                        Acquisition::Reference
                    } else {
                        Acquisition::Sweep(sweep)
                    },
                    bin_spacing_m: spacing,
                    bins,
                }
            } else {
                let scatterers = (0..n)
                    .map(|_| {
                        Ok(Scatterer {
                            position_m: p.f64()?,
                            reflectivity: Complex64::new(p.f64()?, p.f64()?),
                        })
                    })
                    .collect::<Result<_>>()?;
                ArchiveRecord::Scatterers { core, scatterers }
            });
        }
        Ok(Self { header, records })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::input("archive is truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
