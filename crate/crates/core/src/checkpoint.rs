//! Field persistence: a little-endian binary checkpoint and a CSV export.
//!
//! Binary layout: magic `ONEPFLOW`, `u32` version, `u32` dimension, then per
//! axis `f64` lower, `f64` upper, `u64` cells; `f64` time, `u32` components,
//! `u64` node count, and the node-major `f64` values.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::grid::{BoxDomain, Mesh, MeshDescriptor, VectorField};

const MAGIC: &[u8; 8] = b"ONEPFLOW";
const VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(
    mut w: W,
    mesh: &MeshDescriptor,
    field: &VectorField,
) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(mesh.domain.dim() as u32).to_le_bytes())?;
    for a in 0..mesh.domain.dim() {
        w.write_all(&mesh.domain.lower[a].to_le_bytes())?;
        w.write_all(&mesh.domain.upper[a].to_le_bytes())?;
        w.write_all(&(mesh.resolution[a] as u64).to_le_bytes())?;
    }
    w.write_all(&field.time.to_le_bytes())?;
    w.write_all(&(field.components as u32).to_le_bytes())?;
    w.write_all(&(field.node_count() as u64).to_le_bytes())?;
    for v in &field.values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn take<const K: usize, R: Read>(r: &mut R) -> Result<[u8; K]> {
    let mut buf = [0u8; K];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Checkpoint(format!("truncated input: {e}")))?;
    Ok(buf)
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(MeshDescriptor, VectorField)> {
    if &take::<8, _>(&mut r)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(take(&mut r)?);
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let dim = u32::from_le_bytes(take(&mut r)?) as usize;
    if !(1..=2).contains(&dim) {
        return Err(Error::Checkpoint(format!("unsupported dimension {dim}")));
    }
    let (mut lower, mut upper, mut resolution) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..dim {
        lower.push(f64::from_le_bytes(take(&mut r)?));
        upper.push(f64::from_le_bytes(take(&mut r)?));
        resolution.push(u64::from_le_bytes(take(&mut r)?) as usize);
    }
    let time = f64::from_le_bytes(take(&mut r)?);
    let components = u32::from_le_bytes(take(&mut r)?) as usize;
    let nodes = u64::from_le_bytes(take(&mut r)?) as usize;
    let expected: usize = resolution.iter().map(|c| c + 1).product();
    if nodes != expected || components == 0 {
        return Err(Error::Checkpoint(format!(
            "node count {nodes} does not match resolution {resolution:?}"
        )));
    }
    let mut values = Vec::with_capacity(nodes * components);
    for _ in 0..nodes * components {
        values.push(f64::from_le_bytes(take(&mut r)?));
    }
    Ok((
        MeshDescriptor {
            domain: BoxDomain::new(lower, upper),
            resolution,
        },
        VectorField {
            components,
            values,
            time,
        },
    ))
}

/// CSV with header `node,x[,y],u0,...`.
pub fn write_field_csv<W: Write>(w: W, mesh: &Mesh, field: &VectorField) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["node".to_string()];
    header.extend(["x", "y"].iter().take(mesh.dim()).map(|s| s.to_string()));
    header.extend((0..field.components).map(|j| format!("u{j}")));
    out.write_record(&header)?;
    for i in 0..mesh.node_count() {
        let mut rec = vec![i.to_string()];
        rec.extend(mesh.node(i).iter().map(|v| v.to_string()));
        rec.extend(field.at(i).iter().map(|v| v.to_string()));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}
