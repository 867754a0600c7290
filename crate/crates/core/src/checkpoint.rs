//! Binary trajectory checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! file    := magic version m kind count record*
//! magic   := b"CRFTRAJ\0"                      8 bytes
//! version := u32                               currently 1
//! m       := u32
//! kind    := u8                                0 = flow, 1 = static
//! count   := u64                               number of records
//! record  := t:f64 dt:f64 dim:u32 res:u32[dim] period:f64[dim]
//!            g:f64[nodes * dim(dim+1)/2]        node-major, upper triangle row by row
//!            p:f64[nodes]
//! ```
//!
//! Nodes are ordered row-major with the last axis fastest. Diagnostics are
//! not stored; they are recomputed on load.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::flow::{Diagnostics, FlowKind, FlowState, FlowStatus, FlowTrajectory};
use crate::geometry::Geometry;
use crate::grid::{GridError, GridSpec, ScalarField};
use crate::scalar::Real;
use crate::tensor::{GeometryError, MetricField, SymLayout, SymTensorField};

pub const MAGIC: [u8; 8] = *b"CRFTRAJ\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a trajectory checkpoint (bad magic bytes)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("invalid grid in record {record}: {source}")]
    Grid { record: usize, source: GridError },
    #[error("invalid metric in record {record}: {source}")]
    Metric { record: usize, source: GeometryError },
    #[error("inconsistent checkpoint: {0}")]
    Inconsistent(&'static str),
}

fn put_f64<W: Write>(w: &mut W, v: f64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_u32<W: Write>(w: &mut W, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn get_f64<R: Read>(r: &mut R) -> io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn get_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn write_trajectory<W: Write, T: Real>(w: &mut W, traj: &FlowTrajectory<T>) -> io::Result<()> {
    w.write_all(&MAGIC)?;
    put_u32(w, VERSION)?;
    put_u32(w, traj.m as u32)?;
    w.write_all(&[match traj.kind {
        FlowKind::Crf => 0,
        FlowKind::Static => 1,
    }])?;
    w.write_all(&(traj.states.len() as u64).to_le_bytes())?;
    for state in &traj.states {
        let grid = state.g.grid();
        put_f64(w, state.t.as_f64())?;
        put_f64(w, traj.dt.as_f64())?;
        put_u32(w, grid.dim() as u32)?;
        for &r in grid.resolution() {
            put_u32(w, r as u32)?;
        }
        for &l in grid.period() {
            put_f64(w, l.as_f64())?;
        }
        for &v in &state.g.tensor().data {
            put_f64(w, v.as_f64())?;
        }
        for &v in &state.p.values {
            put_f64(w, v.as_f64())?;
        }
    }
    Ok(())
}

pub fn read_trajectory<R: Read, T: Real>(r: &mut R) -> Result<FlowTrajectory<T>, CheckpointError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = get_u32(r)?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let m = get_u32(r)? as usize;
    let mut kind = [0u8; 1];
    r.read_exact(&mut kind)?;
    let kind = match kind[0] {
        0 => FlowKind::Crf,
        1 => FlowKind::Static,
        _ => return Err(CheckpointError::Inconsistent("unknown trajectory kind")),
    };
    let mut count = [0u8; 8];
    r.read_exact(&mut count)?;
    let count = u64::from_le_bytes(count) as usize;
    if count == 0 {
        return Err(CheckpointError::Inconsistent("empty trajectory"));
    }

    let target = T::from_usize_lossy(m * (m + 1));
    let mut states = Vec::with_capacity(count);
    let mut dt = T::zero();
    for record in 0..count {
        let t = T::lit(get_f64(r)?);
        dt = T::lit(get_f64(r)?);
        let dim = get_u32(r)? as usize;
        if dim != m + 1 {
            return Err(CheckpointError::Inconsistent("grid dimension differs from m + 1"));
        }
        let res = (0..dim)
            .map(|_| get_u32(r).map(|v| v as usize))
            .collect::<io::Result<Vec<_>>>()?;
        let period = (0..dim)
            .map(|_| get_f64(r).map(T::lit))
            .collect::<io::Result<Vec<_>>>()?;
        let grid = GridSpec::new(res, period).map_err(|source| CheckpointError::Grid { record, source })?;
        let ncomp = SymLayout::new(dim).ncomp();
        let gdata = (0..grid.nodes() * ncomp)
            .map(|_| get_f64(r).map(T::lit))
            .collect::<io::Result<Vec<_>>>()?;
        let p = ScalarField::new(
            (0..grid.nodes())
                .map(|_| get_f64(r).map(T::lit))
                .collect::<io::Result<Vec<_>>>()?,
        );
        let g = MetricField::new(grid, SymTensorField::from_data(dim, gdata))
            .map_err(|source| CheckpointError::Metric { record, source })?;
        let geo = Geometry::new(&g).map_err(|source| CheckpointError::Metric { record, source })?;
        let diagnostics = Diagnostics {
            min_p: p.min(),
            constraint_drift: geo.scalar_curvature().map(|v| v + target).sup_norm(),
            min_metric_eig: g.min_eigenvalue(),
            pressure_residual: T::zero(),
            pressure_iterations: 0,
        };
        states.push(FlowState { t, g, p, diagnostics });
    }
    if states.windows(2).any(|w| !(w[1].t > w[0].t)) {
        return Err(CheckpointError::Inconsistent("times are not strictly increasing"));
    }
    let final_time = states.last().map(|s| s.t).unwrap_or_default();
    Ok(FlowTrajectory {
        states,
        dt,
        final_time,
        m,
        kind,
        status: FlowStatus::Complete,
    })
}

pub fn save<T: Real>(path: &Path, traj: &FlowTrajectory<T>) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_trajectory(&mut w, traj)?;
    w.flush()
}

pub fn load<T: Real>(path: &Path) -> Result<FlowTrajectory<T>, CheckpointError> {
    read_trajectory(&mut BufReader::new(File::open(path)?))
}
