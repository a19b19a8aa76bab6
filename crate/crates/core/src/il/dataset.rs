//! Versioned binary dataset files: a header carrying the encoder schema and record count,
//! then fixed-width records. A CSV export exists for inspection.

use super::ExpertRecord;
use crate::encoder::{StateEmbedding, EMBEDDING_DIM, SCHEMA};
use crate::error::{Error, Result};
use crate::io::{read_file, write_file, Reader, Writer};
use crate::meta_action::MetaAction;
use crate::trajectory::{Trajectory, TRAJECTORY_DIM};
use std::io::Write;
use std::path::Path;

const MAGIC: &[u8; 4] = b"DDDS";
const VERSION: u32 = 1;

pub fn dataset_to_bytes(records: &[ExpertRecord]) -> Result<Vec<u8>> {
    let mut w = Writer::new();
    w.bytes(MAGIC);
    w.u32(VERSION);
    w.str(SCHEMA);
    w.u32(EMBEDDING_DIM as u32);
    w.u32(TRAJECTORY_DIM as u32);
    w.u64(records.len() as u64);
    for r in records {
        if r.emb.dim() != EMBEDDING_DIM {
            return Err(Error::Format(format!(
                "record embedding has dimension {}",
                r.emb.dim()
            )));
        }
        w.id(&r.scenario_id)?;
        w.f64(r.emb.frame_t);
        w.f64s(&r.emb.values);
        w.u8(r.label.index() as u8);
        w.f64s(&r.expert_traj.to_flat());
    }
    Ok(w.buf)
}

pub fn dataset_from_bytes(bytes: &[u8]) -> Result<Vec<ExpertRecord>> {
    let mut r = Reader::new(bytes);
    r.expect_magic(MAGIC, "dataset")?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported dataset version {version}")));
    }
    let schema = r.str()?;
    if schema != SCHEMA {
        return Err(Error::Format(format!(
            "dataset encoder schema `{schema}` does not match this build"
        )));
    }
    let emb_dim = r.u32()? as usize;
    let traj_dim = r.u32()? as usize;
    if emb_dim != EMBEDDING_DIM || traj_dim != TRAJECTORY_DIM {
        return Err(Error::Format(format!(
            "dataset dimensions {emb_dim}/{traj_dim} do not match {EMBEDDING_DIM}/{TRAJECTORY_DIM}"
        )));
    }
    let count = r.u64()? as usize;
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let scenario_id = r.id()?;
        let frame_t = r.f64()?;
        let values = r.f64s(EMBEDDING_DIM)?;
        let label_index = r.u8()? as usize;
        let label = MetaAction::from_index(label_index)
            .ok_or_else(|| Error::Format(format!("record {i} has label index {label_index}")))?;
        let expert_traj = Trajectory::from_flat(&r.f64s(TRAJECTORY_DIM)?)?;
        out.push(ExpertRecord {
            emb: StateEmbedding { values, frame_t },
            label,
            expert_traj,
            scenario_id,
        });
    }
    r.finish()?;
    Ok(out)
}

pub fn write_dataset(path: &Path, records: &[ExpertRecord]) -> Result<()> {
    write_file(path, &dataset_to_bytes(records)?)
}

pub fn read_dataset(path: &Path) -> Result<Vec<ExpertRecord>> {
    dataset_from_bytes(&read_file(path)?)
}

/// One row per record: id, time, label, embedding columns, then trajectory columns.
pub fn write_dataset_csv<W: Write>(mut out: W, records: &[ExpertRecord]) -> std::io::Result<()> {
    write!(out, "scenario_id,frame_t,speed_label,path_label")?;
    for i in 0..EMBEDDING_DIM {
        write!(out, ",e{i}")?;
    }
    for i in 0..TRAJECTORY_DIM {
        write!(out, ",w{i}")?;
    }
    writeln!(out)?;
    for r in records {
        write!(
            out,
            "{},{},{:?},{:?}",
            r.scenario_id, r.emb.frame_t, r.label.speed, r.label.path
        )?;
        for v in r.emb.values.iter().chain(&r.expert_traj.to_flat()) {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::il::generate_dataset;
    use crate::sim::starter::starter_scenarios;

    #[test]
    fn roundtrip_is_exact() {
        let pack: Vec<_> = starter_scenarios().into_iter().take(1).collect();
        let recs = generate_dataset(&pack, 12, 1).unwrap();
        let bytes = dataset_to_bytes(&recs).unwrap();
        assert_eq!(dataset_from_bytes(&bytes).unwrap(), recs);
        let mut truncated = bytes.clone();
        truncated.pop();
        assert!(dataset_from_bytes(&truncated).is_err());
        let mut csv = Vec::new();
        write_dataset_csv(&mut csv, &recs).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 13);
    }
}
