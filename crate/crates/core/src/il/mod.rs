//! Imitation stage: expert labelling, dataset generation and supervised training of the
//! decision heads (cross-entropy) and the latent decoder (L1 behaviour cloning + VAE KL).

pub mod dataset;
pub mod expert;

pub use dataset::{read_dataset, write_dataset, write_dataset_csv};
pub use expert::expert_label;

use crate::action::{oracle_trajectory, path_feasibility, DecoderParams, LatentMode};
use crate::encoder::{encode, StateEmbedding};
use crate::error::{Error, Result};
use crate::io::params_hash;
use crate::meta_action::{MetaAction, PathAction, SpeedAction};
use crate::nn::Adam;
use crate::policy::{ce_head_gradients, PolicyParams};
use crate::sim::{load_scenario, step, ScenarioSpec, DECISION_INTERVAL};
use crate::trajectory::Trajectory;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// One labelled decision tick.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertRecord {
    pub emb: StateEmbedding,
    pub label: MetaAction,
    pub expert_traj: Trajectory,
    pub scenario_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ILConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Fraction of records held out for evaluation, in (0, 1).
    pub holdout_fraction: f64,
    pub seed: u64,
    pub vae_weight: f64,
}

impl Default for ILConfig {
    fn default() -> Self {
        ILConfig {
            learning_rate: 3e-4,
            batch_size: 32,
            epochs: 30,
            holdout_fraction: 0.1,
            seed: 0,
            vae_weight: 0.1,
        }
    }
}

impl ILConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::validation("il.learning_rate", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("il.batch_size", "must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::validation("il.epochs", "must be positive"));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::validation("il.holdout_fraction", "must lie in (0, 1)"));
        }
        if !(self.vae_weight >= 0.0 && self.vae_weight.is_finite()) {
            return Err(Error::validation("il.vae_weight", "must be non-negative"));
        }
        Ok(())
    }
}

/// Probability per tick of starting an exploratory excursion while collecting data.
const EXPLORE_PROB: f64 = 0.08;
const EXPLORE_MAX_TICKS: usize = 4;

fn episode_seed(seed: u64, scenario_id: &str, episode: u64) -> u64 {
    let h = crate::io::sha256_hex(format!("{seed}/{scenario_id}/{episode}").as_bytes());
    u64::from_str_radix(&h[..16], 16).expect("hex digest")
}

fn random_action<R: Rng>(feasible: &[bool; 6], rng: &mut R) -> MetaAction {
    let speed = SpeedAction::ALL[rng.gen_range(0..SpeedAction::ALL.len())];
    let paths: Vec<PathAction> = PathAction::ALL
        .into_iter()
        .filter(|p| feasible[p.index()])
        .collect();
    MetaAction::new(speed, *paths.choose(rng).expect("lane following is always feasible"))
}

/// Drives every scenario with the expert and records `steps_per_scenario` labelled ticks each.
///
/// The first episode of a scenario follows the expert exactly. Later episodes take short
/// random excursions (seeded per scenario and episode) so the data covers recoveries; the
/// recorded label is always the expert's choice in the visited state.
pub fn generate_dataset(
    scenarios: &[ScenarioSpec],
    steps_per_scenario: usize,
    seed: u64,
) -> Result<Vec<ExpertRecord>> {
    if scenarios.is_empty() {
        return Err(Error::Argument("scenario list is empty".into()));
    }
    let mut out = Vec::with_capacity(scenarios.len() * steps_per_scenario);
    for spec in scenarios {
        let mut recorded = 0;
        let mut episode = 0u64;
        while recorded < steps_per_scenario {
            let mut rng = ChaCha8Rng::seed_from_u64(episode_seed(seed, &spec.id, episode));
            let explore = episode > 0;
            let mut world = load_scenario(spec, seed)?;
            let mut excursion: Option<(MetaAction, usize)> = None;
            while recorded < steps_per_scenario {
                let label = expert_label(&world);
                let emb = encode(&world);
                let expert_traj = oracle_trajectory(&world, label);
                if explore && excursion.is_none() && rng.gen_bool(EXPLORE_PROB) {
                    let a = random_action(&path_feasibility(&world), &mut rng);
                    excursion = Some((a, rng.gen_range(1..=EXPLORE_MAX_TICKS)));
                }
                let executed = match excursion.as_mut() {
                    Some((a, left)) => {
                        *left -= 1;
                        let a = *a;
                        if *left == 0 {
                            excursion = None;
                        }
                        oracle_trajectory(&world, a)
                    }
                    None => expert_traj.clone(),
                };
                out.push(ExpertRecord {
                    emb,
                    label,
                    expert_traj,
                    scenario_id: spec.id.clone(),
                });
                recorded += 1;
                let r = step(&world, &executed, DECISION_INTERVAL)?;
                if r.done {
                    break;
                }
                world = r.world;
            }
            episode += 1;
        }
    }
    Ok(out)
}

/// `KL(N(μ, diag(exp(logvar))) ‖ N(0, I))`.
pub fn vae_kl(mu: &[f64], logvar: &[f64]) -> f64 {
    mu.iter()
        .zip(logvar)
        .map(|(m, lv)| 0.5 * (lv.exp() + m * m - 1.0 - lv))
        .sum()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ILEpochMetrics {
    pub epoch: usize,
    pub ce: f64,
    pub bc: f64,
    pub vae: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ILMetrics {
    pub epochs: Vec<ILEpochMetrics>,
    pub train_records: usize,
    pub heldout_records: usize,
    /// Top-1 joint meta-action accuracy on held-out records (`None` when nothing is held out).
    pub heldout_accuracy: Option<f64>,
    /// Mean per-coordinate L1 between mean-latent decodes and oracle trajectories (m).
    pub heldout_l1: Option<f64>,
    /// Hash of the reference snapshot handed to the RL stage.
    pub reference_hash: String,
}

#[derive(Debug, Clone)]
pub struct ILOutcome {
    pub policy: PolicyParams,
    pub decoder: DecoderParams,
    /// Frozen copy of the trained policy used as the KL anchor during RL.
    pub reference: PolicyParams,
    pub metrics: ILMetrics,
}

/// Behaviour-cloning term: L1 norm of the waypoint error over all trajectory coordinates.
fn l1_norm(pred: &[f64], target: &[f64]) -> f64 {
    pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum()
}

/// Loss terms for one record, with gradients accumulated at `scale`.
struct RecordLoss {
    ce: f64,
    bc: f64,
    vae: f64,
}

fn record_loss<R: Rng>(
    rec: &ExpertRecord,
    policy: &PolicyParams,
    decoder: &DecoderParams,
    vae_weight: f64,
    scale: f64,
    grads: Option<(&mut [f64], &mut [f64])>,
    rng: &mut R,
) -> Result<RecordLoss> {
    let pc = policy.forward_cached(&rec.emb.values)?;
    let ce = -pc.log_prob(rec.label);
    let dc = decoder.forward_cached(&rec.emb.values, rec.label, LatentMode::Sample, rng)?;
    let target = rec.expert_traj.to_flat();
    let bc = l1_norm(&dc.flat, &target);
    let vae = vae_kl(&dc.mu, &dc.logvar);
    if let Some((gp, gd)) = grads {
        policy.backward(&pc, &ce_head_gradients(&pc, rec.label, scale), gp);
        let d_flat: Vec<f64> = dc
            .flat
            .iter()
            .zip(&target)
            .map(|(p, t)| scale * (p - t).signum())
            .collect();
        let w = scale * vae_weight;
        let d_mu: Vec<f64> = dc.mu.iter().map(|m| w * m).collect();
        let d_lv: Vec<f64> = dc.logvar.iter().map(|lv| w * 0.5 * (lv.exp() - 1.0)).collect();
        decoder.backward(&dc, &d_flat, &d_mu, &d_lv, gd);
    }
    Ok(RecordLoss { ce, bc, vae })
}

/// Held-out top-1 accuracy and mean-latent decoder L1.
pub fn evaluate_il(
    records: &[ExpertRecord],
    policy: &PolicyParams,
    decoder: &DecoderParams,
) -> Result<(f64, f64)> {
    if records.is_empty() {
        return Err(Error::Argument("no records to evaluate".into()));
    }
    let mut correct = 0usize;
    let mut l1 = 0.0;
    let mut unused = ChaCha8Rng::seed_from_u64(0);
    for rec in records {
        let c = policy.forward_cached(&rec.emb.values)?;
        if c.distribution().argmax() == rec.label {
            correct += 1;
        }
        let traj = crate::action::decode(&rec.emb, rec.label, decoder, LatentMode::Mean, &mut unused)?;
        l1 += traj.mean_l1(&rec.expert_traj);
    }
    let n = records.len() as f64;
    Ok((correct as f64 / n, l1 / n))
}

/// Seeded train/held-out split; the held-out part takes `floor(n · fraction)` records.
pub fn split_dataset(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0017));
    let hold = ((n as f64) * fraction).floor() as usize;
    let heldout = idx.split_off(n - hold);
    (idx, heldout)
}

/// Joint imitation training. Minimises `CE + L1 + vae_weight · KL` per record with Adam.
pub fn train_il(
    dataset: &[ExpertRecord],
    policy: PolicyParams,
    decoder: DecoderParams,
    cfg: &ILConfig,
) -> Result<ILOutcome> {
    train_il_with(dataset, policy, decoder, cfg, |_| {})
}

/// [`train_il`] with a per-epoch callback for progress logging.
pub fn train_il_with(
    dataset: &[ExpertRecord],
    mut policy: PolicyParams,
    mut decoder: DecoderParams,
    cfg: &ILConfig,
    mut on_epoch: impl FnMut(&ILEpochMetrics),
) -> Result<ILOutcome> {
    if dataset.is_empty() {
        return Err(Error::Argument("imitation dataset is empty".into()));
    }
    cfg.validate()?;
    let (mut train, heldout) = split_dataset(dataset.len(), cfg.holdout_fraction, cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt_p = Adam::new(policy.len(), cfg.learning_rate);
    let mut opt_d = Adam::new(decoder.len(), cfg.learning_rate);
    let mut gp = vec![0.0; policy.len()];
    let mut gd = vec![0.0; decoder.len()];
    let mut epochs = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        train.shuffle(&mut rng);
        let (mut ce, mut bc, mut vae) = (0.0, 0.0, 0.0);
        for batch in train.chunks(cfg.batch_size) {
            gp.fill(0.0);
            gd.fill(0.0);
            let scale = 1.0 / batch.len() as f64;
            let (mut bce, mut bbc, mut bvae) = (0.0, 0.0, 0.0);
            for &i in batch {
                let l = record_loss(
                    &dataset[i],
                    &policy,
                    &decoder,
                    cfg.vae_weight,
                    scale,
                    Some((&mut gp, &mut gd)),
                    &mut rng,
                )?;
                bce += l.ce;
                bbc += l.bc;
                bvae += l.vae;
            }
            let total = bce + bbc + cfg.vae_weight * bvae;
            if !total.is_finite() || gp.iter().chain(&gd).any(|g| !g.is_finite()) {
                let mut last_finite = policy.values.clone();
                last_finite.extend_from_slice(&decoder.values);
                return Err(Error::TrainingDiverged {
                    epoch,
                    message: format!("imitation loss became {total}"),
                    last_finite,
                });
            }
            opt_p.step(&mut policy.values, &gp);
            opt_d.step(&mut decoder.values, &gd);
            ce += bce;
            bc += bbc;
            vae += bvae;
        }
        let n = train.len() as f64;
        let m = ILEpochMetrics {
            epoch,
            ce: ce / n,
            bc: bc / n,
            vae: vae / n,
            total: (ce + bc + cfg.vae_weight * vae) / n,
        };
        on_epoch(&m);
        epochs.push(m);
    }

    let held: Vec<ExpertRecord> = heldout.iter().map(|&i| dataset[i].clone()).collect();
    let (heldout_accuracy, heldout_l1) = if held.is_empty() {
        (None, None)
    } else {
        let (a, l) = evaluate_il(&held, &policy, &decoder)?;
        (Some(a), Some(l))
    };
    let reference = policy.clone();
    Ok(ILOutcome {
        metrics: ILMetrics {
            epochs,
            train_records: train.len(),
            heldout_records: held.len(),
            heldout_accuracy,
            heldout_l1,
            reference_hash: params_hash(&reference.values),
        },
        policy,
        decoder,
        reference,
    })
}

/// Unweighted per-record loss terms `(ce, bc, vae)` without sampling noise, for inspection.
pub fn il_loss_terms(
    rec: &ExpertRecord,
    policy: &PolicyParams,
    decoder: &DecoderParams,
) -> Result<(f64, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let pc = policy.forward_cached(&rec.emb.values)?;
    let dc = decoder.forward_cached(&rec.emb.values, rec.label, LatentMode::Mean, &mut rng)?;
    let bc = l1_norm(&dc.flat, &rec.expert_traj.to_flat());
    Ok((-pc.log_prob(rec.label), bc, vae_kl(&dc.mu, &dc.logvar)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::starter::starter_scenarios;

    #[test]
    fn vae_kl_closed_form() {
        assert_eq!(vae_kl(&[0.0; 4], &[0.0; 4]), 0.0);
        assert!((vae_kl(&[1.0], &[0.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn empty_scenarios_rejected() {
        assert!(matches!(generate_dataset(&[], 10, 0), Err(Error::Argument(_))));
    }

    #[test]
    fn dataset_counts_and_determinism() {
        let pack: Vec<_> = starter_scenarios().into_iter().take(2).collect();
        let a = generate_dataset(&pack, 30, 7).unwrap();
        let b = generate_dataset(&pack, 30, 7).unwrap();
        assert_eq!(a.len(), 60);
        assert_eq!(a, b);
        assert!(a.iter().all(|r| r.expert_traj.validate().is_ok()));
    }

    #[test]
    fn split_is_disjoint() {
        let (t, h) = split_dataset(100, 0.1, 1);
        assert_eq!(h.len(), 10);
        let mut all: Vec<_> = t.iter().chain(&h).copied().collect();
        all.sort();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }
}
