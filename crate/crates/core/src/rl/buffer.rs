//! Versioned binary rollout buffers. Episodes are framed with their scenario id and round.

use super::{Episode, RolloutBuffer, Transition};
use crate::encoder::{StateEmbedding, EMBEDDING_DIM};
use crate::error::{Error, Result};
use crate::io::{read_file, write_file, Reader, Writer};
use crate::meta_action::MetaAction;
use crate::sim::PenaltyKind;
use std::path::Path;

const MAGIC: &[u8; 4] = b"DDRB";
const VERSION: u32 = 1;

fn kind_code(k: PenaltyKind) -> u8 {
    PenaltyKind::ALL.iter().position(|x| *x == k).expect("known kind") as u8
}

fn kind_from(code: u8) -> Result<PenaltyKind> {
    PenaltyKind::ALL
        .get(code as usize)
        .copied()
        .ok_or_else(|| Error::Format(format!("unknown penalty code {code}")))
}

fn write_kinds(w: &mut Writer, kinds: &[PenaltyKind]) {
    w.u8(kinds.len() as u8);
    for k in kinds {
        w.u8(kind_code(*k));
    }
}

fn read_kinds(r: &mut Reader) -> Result<Vec<PenaltyKind>> {
    let n = r.u8()?;
    (0..n).map(|_| kind_from(r.u8()?)).collect()
}

pub fn buffer_to_bytes(buffer: &RolloutBuffer) -> Result<Vec<u8>> {
    let mut w = Writer::new();
    w.bytes(MAGIC);
    w.u32(VERSION);
    w.u32(EMBEDDING_DIM as u32);
    w.u32(buffer.round_index);
    w.u64(buffer.episodes.len() as u64);
    for ep in &buffer.episodes {
        w.id(&ep.scenario_id)?;
        w.u32(ep.round);
        w.u8(ep.truncated as u8);
        w.f64(ep.bootstrap_value);
        w.u8(ep.success as u8);
        write_kinds(&mut w, &ep.terminal_penalties);
        write_kinds(&mut w, &ep.masked_penalties);
        w.u64(ep.transitions.len() as u64);
        for t in &ep.transitions {
            if t.emb.dim() != EMBEDDING_DIM {
                return Err(Error::Format("transition embedding has wrong dimension".into()));
            }
            w.f64(t.emb.frame_t);
            w.f64s(&t.emb.values);
            w.u8(t.action.index() as u8);
            w.f64(t.logprob);
            w.f64(t.value);
            w.i32(t.reward);
            w.u8(t.done as u8);
        }
    }
    Ok(w.buf)
}

pub fn buffer_from_bytes(bytes: &[u8]) -> Result<RolloutBuffer> {
    let mut r = Reader::new(bytes);
    r.expect_magic(MAGIC, "rollout buffer")?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported buffer version {version}")));
    }
    let dim = r.u32()? as usize;
    if dim != EMBEDDING_DIM {
        return Err(Error::Format(format!("buffer embedding dimension {dim}")));
    }
    let round_index = r.u32()?;
    let n = r.u64()? as usize;
    let mut episodes = Vec::with_capacity(n);
    for _ in 0..n {
        let scenario_id = r.id()?;
        let round = r.u32()?;
        let truncated = r.u8()? != 0;
        let bootstrap_value = r.f64()?;
        let success = r.u8()? != 0;
        let terminal_penalties = read_kinds(&mut r)?;
        let masked_penalties = read_kinds(&mut r)?;
        let len = r.u64()? as usize;
        let mut transitions = Vec::with_capacity(len);
        for _ in 0..len {
            let frame_t = r.f64()?;
            let values = r.f64s(EMBEDDING_DIM)?;
            let a = r.u8()? as usize;
            let action = MetaAction::from_index(a)
                .ok_or_else(|| Error::Format(format!("action index {a}")))?;
            transitions.push(Transition {
                emb: StateEmbedding { values, frame_t },
                action,
                logprob: r.f64()?,
                value: r.f64()?,
                reward: r.i32()?,
                done: r.u8()? != 0,
                scenario_id: scenario_id.clone(),
            });
        }
        episodes.push(Episode {
            scenario_id,
            round,
            transitions,
            truncated,
            bootstrap_value,
            success,
            terminal_penalties,
            masked_penalties,
        });
    }
    r.finish()?;
    Ok(RolloutBuffer {
        episodes,
        round_index,
    })
}

pub fn write_buffer(path: &Path, buffer: &RolloutBuffer) -> Result<()> {
    write_file(path, &buffer_to_bytes(buffer)?)
}

pub fn read_buffer(path: &Path) -> Result<RolloutBuffer> {
    buffer_from_bytes(&read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::ActionSource;
    use crate::policy::{PolicyParams, PolicyShape};
    use crate::rl::{collect, TrainerConfig};
    use crate::sim::starter::starter_scenarios;

    #[test]
    fn roundtrip_is_exact() {
        let pack: Vec<_> = starter_scenarios().into_iter().take(2).collect();
        let p = PolicyParams::new(PolicyShape::default(), 1);
        let cfg = TrainerConfig {
            workers: 1,
            episodes_per_route: 1,
            ..TrainerConfig::default()
        };
        let b = collect(&p, &ActionSource::Oracle, &pack, &cfg, 3).unwrap();
        let bytes = buffer_to_bytes(&b).unwrap();
        assert_eq!(buffer_from_bytes(&bytes).unwrap(), b);
    }
}
