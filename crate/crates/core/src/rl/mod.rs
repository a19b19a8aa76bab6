//! Online reinforcement stage: parallel rollout collection, TD/GAE advantages and PPO updates
//! anchored to the imitation snapshot by a KL penalty.

pub mod advantage;
pub mod buffer;
pub mod loss;

pub use advantage::{advantages, gae, td_deltas, AdvantageEstimates};
pub use buffer::{read_buffer, write_buffer};
pub use loss::{clipped_surrogate, kl_loss, ppo_loss, total_loss, value_loss, LossTerms, Sample};

use crate::action::{path_feasibility, ActionSource};
use crate::encoder::{encode, StateEmbedding};
use crate::error::{Error, Result};
use crate::meta_action::{MetaAction, PathAction};
use crate::nn::Adam;
use crate::policy::{sample, PolicyParams};
use crate::sim::{initial_world, step, PenaltyKind, PenaltySet, Scenario, ScenarioSpec, DECISION_INTERVAL};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub emb: StateEmbedding,
    pub action: MetaAction,
    /// Log-probability of `action` under the collecting policy.
    pub logprob: f64,
    pub value: f64,
    pub reward: i32,
    pub done: bool,
    pub scenario_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub scenario_id: String,
    pub round: u32,
    pub transitions: Vec<Transition>,
    /// Ended by the time limit rather than by success or a penalty.
    pub truncated: bool,
    /// `V(s_T)` of the state reached at truncation; 0 otherwise.
    pub bootstrap_value: f64,
    pub success: bool,
    /// Enabled penalties that ended the episode.
    pub terminal_penalties: Vec<PenaltyKind>,
    /// Penalties observed while masked out of the reward.
    pub masked_penalties: Vec<PenaltyKind>,
}

impl Episode {
    pub fn total_reward(&self) -> i32 {
        self.transitions.iter().map(|t| t.reward).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RolloutBuffer {
    pub episodes: Vec<Episode>,
    pub round_index: u32,
}

impl RolloutBuffer {
    pub fn transition_count(&self) -> usize {
        self.episodes.iter().map(|e| e.transitions.len()).sum()
    }

    pub fn success_rate(&self) -> f64 {
        if self.episodes.is_empty() {
            return 0.0;
        }
        self.episodes.iter().filter(|e| e.success).count() as f64 / self.episodes.len() as f64
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip_epsilon: f64,
    pub batch_size: usize,
    pub value_weight: f64,
    pub kl_weight: f64,
    pub ppo_weight: f64,
    pub entropy_coef: f64,
    pub epochs: usize,
    pub rollout_rounds: usize,
    /// Sampled episodes per selected route in each collection round.
    pub episodes_per_route: usize,
    /// Sampled attempts per route in the failed-route pre-pass.
    pub prepass_attempts: usize,
    pub workers: usize,
    pub learning_rate: f64,
    /// Decay the learning rate linearly to zero over each training call.
    pub anneal_lr: bool,
    pub seed: u64,
    pub penalties: PenaltySet,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            gamma: 0.99,
            lambda: 1.0,
            clip_epsilon: 0.2,
            batch_size: 32,
            value_weight: 0.5,
            kl_weight: 0.5,
            ppo_weight: 1.0,
            entropy_coef: 0.0,
            epochs: 10,
            rollout_rounds: 2,
            episodes_per_route: 16,
            prepass_attempts: 5,
            workers: 24,
            learning_rate: 3e-4,
            anneal_lr: true,
            seed: 0,
            penalties: PenaltySet::all(),
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let checks: [(&str, bool, &str); 12] = [
            ("rl.gamma", self.gamma > 0.0 && self.gamma <= 1.0, "must lie in (0, 1]"),
            ("rl.lambda", (0.0..=1.0).contains(&self.lambda), "must lie in [0, 1]"),
            ("rl.clip_epsilon", self.clip_epsilon > 0.0, "must be positive"),
            ("rl.batch_size", self.batch_size > 0, "must be positive"),
            ("rl.value_weight", self.value_weight >= 0.0, "must be non-negative"),
            ("rl.kl_weight", self.kl_weight >= 0.0, "must be non-negative"),
            ("rl.ppo_weight", self.ppo_weight >= 0.0, "must be non-negative"),
            ("rl.entropy_coef", self.entropy_coef >= 0.0, "must be non-negative"),
            ("rl.epochs", self.epochs > 0, "must be positive"),
            ("rl.rollout_rounds", self.rollout_rounds > 0, "must be positive"),
            ("rl.workers", self.workers > 0, "must be positive"),
            ("rl.learning_rate", self.learning_rate > 0.0, "must be positive"),
        ];
        for (field, ok, msg) in checks {
            if !ok {
                return Err(Error::validation(field, msg));
            }
        }
        if self.episodes_per_route == 0 {
            return Err(Error::validation("rl.episodes_per_route", "must be positive"));
        }
        if self.prepass_attempts == 0 {
            return Err(Error::validation("rl.prepass_attempts", "must be positive"));
        }
        Ok(())
    }
}

/// Seed of one sampled episode, independent of worker assignment.
pub fn episode_seed(seed: u64, scenario_id: &str, round: u32, episode: usize) -> u64 {
    let h = crate::io::sha256_hex(format!("rollout/{seed}/{scenario_id}/{round}/{episode}").as_bytes());
    u64::from_str_radix(&h[..16], 16).expect("hex digest")
}

/// Runs one episode with actions sampled from `policy`.
///
/// A sampled lane change toward a lane that does not exist is executed as lane following;
/// the stored action and log-probability remain the sampled ones.
pub fn run_sampled_episode(
    scenario: Arc<Scenario>,
    policy: &PolicyParams,
    source: &ActionSource,
    penalties: PenaltySet,
    sim_seed: u64,
    rng_seed: u64,
    round: u32,
) -> Result<Episode> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut world = initial_world(scenario, sim_seed);
    world.penalties = penalties;
    let id = world.scenario_id.clone();
    let mut transitions = Vec::new();
    let mut masked: Vec<PenaltyKind> = Vec::new();
    loop {
        let emb = encode(&world);
        let c = policy.forward_cached(&emb.values)?;
        let dist = c.distribution();
        let (action, logprob) = sample(&dist, &mut rng);
        let executed = if path_feasibility(&world)[action.path.index()] {
            action
        } else {
            MetaAction::new(action.speed, PathAction::LaneFollow)
        };
        let traj = source.trajectory(&world, &emb, executed)?;
        let r = step(&world, &traj, DECISION_INTERVAL)?;
        for e in &r.masked_events {
            if !masked.contains(&e.kind) {
                masked.push(e.kind);
            }
        }
        transitions.push(Transition {
            emb,
            action,
            logprob,
            value: c.value,
            reward: r.reward,
            done: r.done,
            scenario_id: id.clone(),
        });
        if r.done {
            let truncated = r.timed_out && r.events.is_empty() && !r.reached_destination;
            let bootstrap_value = if truncated {
                policy.forward_cached(&encode(&r.world).values)?.value
            } else {
                0.0
            };
            return Ok(Episode {
                scenario_id: id,
                round,
                transitions,
                truncated,
                bootstrap_value,
                success: r.reached_destination && r.events.is_empty(),
                terminal_penalties: r.events.iter().map(|e| e.kind).collect(),
                masked_penalties: masked,
            });
        }
        world = r.world;
    }
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "worker panicked".into())
}

/// Runs `jobs` on up to `workers` scoped threads and returns results in job order.
/// The first failing job (in job order) is surfaced as a worker error.
pub fn run_parallel<J, T, F>(jobs: &[J], workers: usize, id_of: impl Fn(&J) -> String, f: F) -> Result<Vec<T>>
where
    J: Sync,
    T: Send,
    F: Fn(&J) -> Result<T> + Sync,
{
    let slots: Vec<Mutex<Option<Result<T>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let threads = workers.clamp(1, jobs.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= jobs.len() {
                    break;
                }
                let out = catch_unwind(AssertUnwindSafe(|| f(&jobs[i])))
                    .unwrap_or_else(|p| Err(Error::Argument(panic_message(p))));
                *slots[i].lock().expect("result slot") = Some(out);
            });
        }
    });
    let mut out = Vec::with_capacity(jobs.len());
    for (job, slot) in jobs.iter().zip(slots) {
        match slot.into_inner().expect("result slot") {
            Some(Ok(v)) => out.push(v),
            Some(Err(Error::Worker { scenario_id, message })) => {
                return Err(Error::Worker { scenario_id, message })
            }
            Some(Err(e)) => {
                return Err(Error::Worker {
                    scenario_id: id_of(job),
                    message: e.to_string(),
                })
            }
            None => {
                return Err(Error::Worker {
                    scenario_id: id_of(job),
                    message: "job did not run".into(),
                })
            }
        }
    }
    Ok(out)
}

fn prepare(scenarios: &[ScenarioSpec]) -> Result<Vec<Arc<Scenario>>> {
    if scenarios.is_empty() {
        return Err(Error::Argument("scenario list is empty".into()));
    }
    scenarios
        .iter()
        .map(|s| Scenario::new(s.clone()).map(Arc::new))
        .collect()
}

/// One collection round: `episodes_per_route` sampled episodes on every scenario, merged in
/// (scenario, episode) order regardless of the worker count.
pub fn collect(
    policy: &PolicyParams,
    source: &ActionSource,
    scenarios: &[ScenarioSpec],
    cfg: &TrainerConfig,
    round: u32,
) -> Result<RolloutBuffer> {
    cfg.validate()?;
    let prepared = prepare(scenarios)?;
    let jobs: Vec<(Arc<Scenario>, usize)> = prepared
        .iter()
        .flat_map(|s| (0..cfg.episodes_per_route).map(move |k| (s.clone(), k)))
        .collect();
    let episodes = run_parallel(
        &jobs,
        cfg.workers,
        |(s, _)| s.id().to_string(),
        |(s, k)| {
            run_sampled_episode(
                s.clone(),
                policy,
                source,
                cfg.penalties,
                cfg.seed,
                episode_seed(cfg.seed, s.id(), round, *k),
                round,
            )
        },
    )?;
    Ok(RolloutBuffer {
        episodes,
        round_index: round,
    })
}

/// Routes the policy fails either greedily or at least once in `prepass_attempts` sampled
/// attempts.
pub fn select_failed_routes(
    policy: &PolicyParams,
    source: &ActionSource,
    scenarios: &[ScenarioSpec],
    cfg: &TrainerConfig,
) -> Result<Vec<ScenarioSpec>> {
    let probe = TrainerConfig {
        episodes_per_route: cfg.prepass_attempts,
        penalties: PenaltySet::all(),
        ..cfg.clone()
    };
    let buffer = collect(policy, source, scenarios, &probe, u32::MAX)?;
    let greedy = crate::eval::evaluate(policy, source, scenarios, cfg.seed, cfg.workers)?;
    Ok(scenarios
        .iter()
        .filter(|s| {
            let sampled_failure = buffer
                .episodes
                .iter()
                .any(|e| e.scenario_id == s.id && !e.success);
            let greedy_failure = greedy.routes.iter().any(|r| r.scenario_id == s.id && !r.success);
            sampled_failure || greedy_failure
        })
        .cloned()
        .collect())
}

/// Flattens a buffer into optimisation samples with advantages and return targets.
pub fn buffer_samples(buffer: &RolloutBuffer, cfg: &TrainerConfig) -> Vec<Sample> {
    let mut out = Vec::with_capacity(buffer.transition_count());
    for ep in &buffer.episodes {
        let adv = advantages(ep, cfg.gamma, cfg.lambda);
        for (i, t) in ep.transitions.iter().enumerate() {
            out.push(Sample {
                emb: t.emb.clone(),
                action: t.action,
                old_logprob: t.logprob,
                advantage: adv.gae[i],
                return_target: adv.return_target[i],
            });
        }
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RLEpochMetrics {
    pub round: u32,
    pub epoch: usize,
    pub ppo: f64,
    pub value: f64,
    pub kl: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub total: f64,
}

/// PPO training on one buffer for `cfg.epochs` epochs of seeded shuffled minibatches.
pub fn train_rl(
    buffer: &RolloutBuffer,
    policy: PolicyParams,
    reference: &PolicyParams,
    cfg: &TrainerConfig,
) -> Result<(PolicyParams, Vec<RLEpochMetrics>)> {
    train_rl_with(buffer, policy, reference, cfg, |_| {})
}

pub fn train_rl_with(
    buffer: &RolloutBuffer,
    mut policy: PolicyParams,
    reference: &PolicyParams,
    cfg: &TrainerConfig,
    mut on_epoch: impl FnMut(&RLEpochMetrics),
) -> Result<(PolicyParams, Vec<RLEpochMetrics>)> {
    cfg.validate()?;
    let mut samples = buffer_samples(buffer, cfg);
    if samples.is_empty() {
        return Err(Error::Argument("rollout buffer is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ ((buffer.round_index as u64) << 32));
    let mut opt = Adam::new(policy.len(), cfg.learning_rate);
    let mut grad = vec![0.0; policy.len()];
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let total_steps = cfg.epochs * samples.len().div_ceil(cfg.batch_size);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        samples.shuffle(&mut rng);
        let mut acc = LossTerms::default();
        let n = samples.len() as f64;
        for batch in samples.chunks(cfg.batch_size) {
            grad.fill(0.0);
            let t = total_loss(batch, &policy, reference, cfg, Some(&mut grad))?;
            if !t.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::TrainingDiverged {
                    epoch,
                    message: format!("reinforcement loss became {}", t.total),
                    last_finite: policy.values.clone(),
                });
            }
            if cfg.anneal_lr {
                opt.lr = cfg.learning_rate * (1.0 - step as f64 / total_steps as f64);
            }
            opt.step(&mut policy.values, &grad);
            step += 1;
            let w = batch.len() as f64 / n;
            acc.ppo += w * t.ppo;
            acc.value += w * t.value;
            acc.kl += w * t.kl;
            acc.entropy += w * t.entropy;
            acc.clip_fraction += w * t.clip_fraction;
            acc.total += w * t.total;
        }
        let m = RLEpochMetrics {
            round: buffer.round_index,
            epoch,
            ppo: acc.ppo,
            value: acc.value,
            kl: acc.kl,
            entropy: acc.entropy,
            clip_fraction: acc.clip_fraction,
            total: acc.total,
        };
        on_epoch(&m);
        metrics.push(m);
    }
    Ok((policy, metrics))
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RoundSummary {
    pub round: u32,
    pub episodes: usize,
    pub transitions: usize,
    pub rollout_success_rate: f64,
    /// Episodes ended by each enabled penalty kind's reward.
    pub penalty_terminations: Vec<(PenaltyKind, usize)>,
    /// Episodes in which each masked penalty kind occurred without affecting the reward.
    pub masked_occurrences: Vec<(PenaltyKind, usize)>,
}

impl RoundSummary {
    fn of(buffer: &RolloutBuffer) -> Self {
        let count = |f: &dyn Fn(&Episode, PenaltyKind) -> bool| {
            PenaltyKind::ALL
                .iter()
                .map(|&k| (k, buffer.episodes.iter().filter(|e| f(e, k)).count()))
                .collect()
        };
        RoundSummary {
            round: buffer.round_index,
            episodes: buffer.episodes.len(),
            transitions: buffer.transition_count(),
            rollout_success_rate: buffer.success_rate(),
            penalty_terminations: count(&|e, k| e.terminal_penalties.contains(&k)),
            masked_occurrences: count(&|e, k| e.masked_penalties.contains(&k)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OnlineOutcome {
    pub policy: PolicyParams,
    /// Routes selected by the failed-route pre-pass.
    pub selected: Vec<String>,
    pub rounds: Vec<RoundSummary>,
    pub metrics: Vec<RLEpochMetrics>,
    pub buffers: Vec<RolloutBuffer>,
}

/// Failed-route pre-pass followed by `rollout_rounds` alternations of collection and training.
/// When no route fails the pre-pass, the policy is returned unchanged.
pub fn online_rl(
    policy: &PolicyParams,
    reference: &PolicyParams,
    source: &ActionSource,
    scenarios: &[ScenarioSpec],
    cfg: &TrainerConfig,
    mut on_epoch: impl FnMut(&RLEpochMetrics),
) -> Result<OnlineOutcome> {
    cfg.validate()?;
    let selected = select_failed_routes(policy, source, scenarios, cfg)?;
    let mut current = policy.clone();
    let mut rounds = Vec::new();
    let mut metrics = Vec::new();
    let mut buffers = Vec::new();
    if !selected.is_empty() {
        for round in 0..cfg.rollout_rounds as u32 {
            let buffer = collect(&current, source, &selected, cfg, round)?;
            rounds.push(RoundSummary::of(&buffer));
            let (next, m) = train_rl_with(&buffer, current, reference, cfg, &mut on_epoch)?;
            current = next;
            metrics.extend(m);
            buffers.push(buffer);
        }
    }
    Ok(OnlineOutcome {
        policy: current,
        selected: selected.into_iter().map(|s| s.id).collect(),
        rounds,
        metrics,
        buffers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PolicyShape;
    use crate::sim::starter::starter_scenarios;

    fn tiny_cfg(workers: usize) -> TrainerConfig {
        TrainerConfig {
            workers,
            episodes_per_route: 2,
            ..TrainerConfig::default()
        }
    }

    #[test]
    fn one_route_one_episode() {
        let pack = starter_scenarios();
        let p = PolicyParams::new(PolicyShape::default(), 0);
        let cfg = TrainerConfig {
            workers: 1,
            episodes_per_route: 1,
            ..TrainerConfig::default()
        };
        let b = collect(&p, &ActionSource::Oracle, &pack[..1], &cfg, 0).unwrap();
        assert_eq!(b.episodes.len(), 1);
        let last = b.episodes[0].transitions.last().unwrap();
        assert!(last.done);
        assert!(b.episodes[0].transitions.iter().all(|t| t.logprob <= 0.0));
    }

    #[test]
    fn worker_count_does_not_change_buffer() {
        let pack: Vec<_> = starter_scenarios().into_iter().take(3).collect();
        let p = PolicyParams::new(PolicyShape::default(), 4);
        let a = collect(&p, &ActionSource::Oracle, &pack, &tiny_cfg(1), 0).unwrap();
        let b = collect(&p, &ActionSource::Oracle, &pack, &tiny_cfg(4), 0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn panicking_job_is_reported_with_its_id() {
        let jobs = vec!["a".to_string(), "b".to_string()];
        let r: Result<Vec<()>> = run_parallel(&jobs, 2, |j| j.clone(), |j| {
            if j == "b" {
                panic!("boom");
            }
            Ok(())
        });
        match r {
            Err(Error::Worker { scenario_id, message }) => {
                assert_eq!(scenario_id, "b");
                assert!(message.contains("boom"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn td_terminal_examples() {
        let ep = |r: i32, v: f64| Episode {
            scenario_id: "x".into(),
            round: 0,
            transitions: vec![Transition {
                emb: StateEmbedding {
                    values: vec![],
                    frame_t: 0.0,
                },
                action: MetaAction::from_index(0).unwrap(),
                logprob: -1.0,
                value: v,
                reward: r,
                done: true,
                scenario_id: "x".into(),
            }],
            truncated: false,
            bootstrap_value: 0.0,
            success: r > 0,
            terminal_penalties: vec![],
            masked_penalties: vec![],
        };
        assert!((td_deltas(&ep(1, 0.5), 0.99)[0] - 0.5).abs() < 1e-15);
        assert!((td_deltas(&ep(-1, -0.2), 0.99)[0] + 0.8).abs() < 1e-15);
        let mut truncated = ep(0, 0.0);
        truncated.truncated = true;
        truncated.bootstrap_value = 2.0;
        assert!((td_deltas(&truncated, 0.5)[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gae_examples() {
        let g = gae(&[1.0, 0.0, -1.0], 0.99, 1.0);
        let want = [1.0 - 0.99f64.powi(2), -0.99, -1.0];
        for (a, b) in g.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(gae(&[0.3, -0.2], 0.9, 0.0), vec![0.3, -0.2]);
    }
}
