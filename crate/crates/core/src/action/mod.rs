//! Maps meta-actions to executable trajectories and selects among the candidate set.

pub mod decoder;
pub mod oracle;

pub use decoder::{decode, DecoderParams, DecoderShape, LatentMode};
pub use oracle::{oracle_path, oracle_trajectory};

use crate::encoder::{encode, StateEmbedding};
use crate::error::{Error, Result};
use crate::meta_action::{MetaAction, PathAction, PATH_ACTIONS};
use crate::policy::ActionDistribution;
use crate::sim::WorldState;
use crate::trajectory::Trajectory;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// Where trajectories come from: the procedural primitives or the learned decoder.
#[derive(Debug, Clone)]
pub enum ActionSource {
    Oracle,
    Decoder(Arc<DecoderParams>),
}

impl ActionSource {
    pub fn name(&self) -> &'static str {
        match self {
            ActionSource::Oracle => "oracle",
            ActionSource::Decoder(_) => "decoder",
        }
    }

    /// Deterministic trajectory for one meta-action (decoder in mean mode).
    pub fn trajectory(
        &self,
        world: &WorldState,
        emb: &StateEmbedding,
        meta: MetaAction,
    ) -> Result<Trajectory> {
        match self {
            ActionSource::Oracle => Ok(oracle_trajectory(world, meta)),
            ActionSource::Decoder(params) => {
                let mut unused = ChaCha8Rng::seed_from_u64(0);
                decode(emb, meta, params, LatentMode::Mean, &mut unused)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub action: MetaAction,
    pub trajectory: Trajectory,
    pub feasible: bool,
}

/// One entry per joint meta-action, in joint-index order.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub entries: Vec<Candidate>,
}

/// Whether each lateral primitive is geometrically defined in the current lane layout.
pub fn path_feasibility(world: &WorldState) -> [bool; PATH_ACTIONS] {
    let scenario = &world.scenario;
    let lane = scenario.lane_index(world.ego_projection().lateral);
    let mut out = [true; PATH_ACTIONS];
    out[PathAction::ChangeLaneLeft.index()] = scenario.has_lane(lane + 1);
    out[PathAction::ChangeLaneRight.index()] = scenario.has_lane(lane - 1);
    out
}

pub fn candidate_set(world: &WorldState, source: &ActionSource) -> Result<CandidateSet> {
    let emb = encode(world);
    let feasible = path_feasibility(world);
    let entries = MetaAction::all()
        .map(|action| {
            Ok(Candidate {
                action,
                trajectory: source.trajectory(world, &emb, action)?,
                feasible: feasible[action.path.index()],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CandidateSet { entries })
}

/// Feasible joint action with the highest `p(speed)·p(path)`; ties go to the lowest index.
pub fn best_feasible(dist: &ActionDistribution, feasible: &[bool; PATH_ACTIONS]) -> Option<MetaAction> {
    let mut best: Option<(MetaAction, f64)> = None;
    for a in MetaAction::all() {
        if !feasible[a.path.index()] {
            continue;
        }
        let score = dist.prob(a);
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((a, score));
        }
    }
    best.map(|(a, _)| a)
}

pub fn select_optimal(
    cands: &CandidateSet,
    dist: &ActionDistribution,
) -> Result<(MetaAction, Trajectory)> {
    let mut best: Option<(&Candidate, f64)> = None;
    for c in cands.entries.iter().filter(|c| c.feasible) {
        let score = dist.prob(c.action);
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((c, score));
        }
    }
    best.map(|(c, _)| (c.action, c.trajectory.clone()))
        .ok_or_else(|| Error::Selection("no feasible candidate".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meta_action::SpeedAction;
    use crate::sim::{load_scenario, Category, ScenarioSpec, StartPose};

    fn single_lane() -> WorldState {
        load_scenario(
            &ScenarioSpec {
                id: "single".into(),
                category: Category::Overtaking,
                route: vec![[0.0, 0.0], [100.0, 0.0]],
                lane_width: 3.5,
                lanes_left: 0,
                lanes_right: 0,
                agents: vec![],
                controls: vec![],
                time_limit: 30.0,
                ego_start: StartPose {
                    x: 0.0,
                    y: 0.0,
                    heading: 0.0,
                },
            },
            0,
        )
        .unwrap()
    }

    #[test]
    fn single_lane_flags_lane_changes() {
        let c = candidate_set(&single_lane(), &ActionSource::Oracle).unwrap();
        assert_eq!(c.entries.len(), 42);
        let infeasible: Vec<_> = c.entries.iter().filter(|e| !e.feasible).collect();
        assert_eq!(infeasible.len(), 14);
        assert!(infeasible.iter().all(|e| matches!(
            e.action.path,
            PathAction::ChangeLaneLeft | PathAction::ChangeLaneRight
        )));
        assert_eq!(c.entries.iter().filter(|e| e.feasible).count(), 28);
    }

    #[test]
    fn infeasible_argmax_falls_back() {
        let world = single_lane();
        let c = candidate_set(&world, &ActionSource::Oracle).unwrap();
        let mut dist = ActionDistribution::one_hot(MetaAction::new(
            SpeedAction::SpeedUp,
            PathAction::ChangeLaneLeft,
        ));
        dist.path = [0.05, 0.05, 0.6, 0.1, 0.05, 0.15];
        let (a, _) = select_optimal(&c, &dist).unwrap();
        assert_eq!(a, MetaAction::new(SpeedAction::SpeedUp, PathAction::LaneFollow));
    }

    #[test]
    fn no_feasible_entry_is_an_error() {
        let mut c = candidate_set(&single_lane(), &ActionSource::Oracle).unwrap();
        c.entries.iter_mut().for_each(|e| e.feasible = false);
        assert!(matches!(
            select_optimal(&c, &ActionDistribution::uniform()),
            Err(Error::Selection(_))
        ));
    }
}
