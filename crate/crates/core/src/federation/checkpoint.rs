//! Binary checkpoints of a running simulation.
//!
//! Layout (little endian): the magic `FLECSCKP`, a `u32` version, the `u64`
//! header `(d, n, m, k)`, a storage tag, the run flags and counters, `w`,
//! every server approximation, and finally the configuration as JSON.
//! Resuming from a checkpoint and running to the end produces the same
//! trajectory as an uninterrupted run.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{FactoredHessian, FlecsConfig, RunState, ServerHessians, Simulation};
use crate::error::{FlecsError, Result};
use crate::hessian::WorkerHessianState;
use crate::objective::{GlobalObjective, HvpCounter};
use crate::{Matrix, Vector};

pub const MAGIC: &[u8; 8] = b"FLECSCKP";
pub const VERSION: u32 = 1;

const TAG_DENSE: u8 = 0;
const TAG_FACTORED: u8 = 1;

fn put_u64(out: &mut Vec<u8>, x: u64) {
    out.extend_from_slice(&x.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Cursor<'b> {
    buf: &'b [u8],
    pos: usize,
}

impl<'b> Cursor<'b> {
    fn take(&mut self, len: usize) -> Result<&'b [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| FlecsError::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| FlecsError::Checkpoint("size does not fit in usize".into()))
    }

    fn f64s(&mut self, len: usize) -> Result<Vec<f64>> {
        let bytes = self.take(len.checked_mul(8).ok_or_else(|| FlecsError::Checkpoint("length overflow".into()))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix> {
        Ok(Matrix::from_vec(rows, cols, self.f64s(rows * cols)?))
    }
}

/// Serializes a run state together with its configuration.
pub fn encode(state: &RunState, config: &FlecsConfig) -> Result<Vec<u8>> {
    let d = state.w.len();
    let n = state.worker_hvps.len();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for x in [d as u64, n as u64, config.m as u64, state.k] {
        put_u64(&mut out, x);
    }
    out.push(match state.hessians {
        ServerHessians::Dense(_) => TAG_DENSE,
        ServerHessians::Factored(_) => TAG_FACTORED,
    });
    out.push(state.converged as u8);
    out.push(state.finished as u8);
    put_u64(&mut out, state.uplink_bits);
    put_u64(&mut out, state.downlink_bits);
    put_f64s(&mut out, &[state.wall_ms]);
    for c in &state.worker_hvps {
        put_u64(&mut out, c.0);
    }
    put_f64s(&mut out, state.w.as_slice());
    match &state.hessians {
        ServerHessians::Dense(v) => {
            for st in v {
                put_f64s(&mut out, st.b.as_slice());
            }
        }
        ServerHessians::Factored(v) => {
            for f in v {
                put_u64(&mut out, f.y_tilde.ncols() as u64);
                put_f64s(&mut out, f.y_tilde.as_slice());
                put_f64s(&mut out, f.m_pinv.as_slice());
            }
        }
    }
    let json = serde_json::to_vec(config).map_err(|e| FlecsError::Checkpoint(e.to_string()))?;
    put_u64(&mut out, json.len() as u64);
    out.extend_from_slice(&json);
    Ok(out)
}

/// Inverse of [`encode`].
pub fn decode(buf: &[u8]) -> Result<(RunState, FlecsConfig)> {
    let mut cur = Cursor { buf, pos: 0 };
    if cur.take(8)? != MAGIC {
        return Err(FlecsError::Checkpoint("bad magic".into()));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(FlecsError::Checkpoint(format!("unsupported version {version}")));
    }
    let d = cur.usize()?;
    let n = cur.usize()?;
    let m = cur.usize()?;
    let k = cur.u64()?;
    let tag = cur.u8()?;
    let converged = cur.u8()? != 0;
    let finished = cur.u8()? != 0;
    let uplink_bits = cur.u64()?;
    let downlink_bits = cur.u64()?;
    let wall_ms = cur.f64s(1)?[0];
    let worker_hvps = (0..n).map(|_| cur.u64().map(HvpCounter)).collect::<Result<Vec<_>>>()?;
    let w = Vector::from_vec(cur.f64s(d)?);
    let hessians = match tag {
        TAG_DENSE => ServerHessians::Dense(
            (0..n)
                .map(|i| Ok(WorkerHessianState::new(i, cur.matrix(d, d)?)))
                .collect::<Result<Vec<_>>>()?,
        ),
        TAG_FACTORED => ServerHessians::Factored(
            (0..n)
                .map(|_| {
                    let cols = cur.usize()?;
                    if cols > d {
                        return Err(FlecsError::Checkpoint(format!("factor width {cols} exceeds d = {d}")));
                    }
                    Ok(FactoredHessian {
                        y_tilde: cur.matrix(d, cols)?,
                        m_pinv: cur.matrix(cols, cols)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?,
        ),
        other => return Err(FlecsError::Checkpoint(format!("unknown storage tag {other}"))),
    };
    let json_len = cur.usize()?;
    let config: FlecsConfig =
        serde_json::from_slice(cur.take(json_len)?).map_err(|e| FlecsError::Checkpoint(e.to_string()))?;
    if cur.pos != buf.len() {
        return Err(FlecsError::Checkpoint(format!("{} trailing bytes", buf.len() - cur.pos)));
    }
    if config.m != m {
        return Err(FlecsError::Checkpoint(format!("header m = {m} disagrees with config m = {}", config.m)));
    }
    let state = RunState {
        k,
        w,
        hessians,
        uplink_bits,
        downlink_bits,
        worker_hvps,
        wall_ms,
        converged,
        finished,
    };
    Ok((state, config))
}

/// Writes the current state of `sim` to `path`.
pub fn save(sim: &Simulation<'_>, path: &Path) -> Result<()> {
    let bytes = encode(&sim.snapshot(), sim.config())?;
    let mut file = fs::File::create(path)?;
    file.write_all(&bytes)?;
    Ok(())
}

/// Reads a checkpoint and rebuilds the simulation around `objective`.
pub fn resume<'a>(objective: &'a GlobalObjective, path: &Path) -> Result<Simulation<'a>> {
    if !path.exists() {
        return Err(FlecsError::MissingFile(path.to_path_buf()));
    }
    let mut buf = Vec::new();
    fs::File::open(path)?.read_to_end(&mut buf)?;
    let (state, config) = decode(&buf)?;
    Simulation::from_state(objective, config, state)
}
