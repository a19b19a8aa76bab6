//! PPO, value, KL and entropy losses over a minibatch, with analytic gradients.

use super::TrainerConfig;
use crate::encoder::StateEmbedding;
use crate::error::Result;
use crate::meta_action::MetaAction;
use crate::nn;
use crate::policy::{ForwardCache, HeadGradients, PolicyParams};
use serde::{Deserialize, Serialize};

/// One transition prepared for optimisation.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub emb: StateEmbedding,
    pub action: MetaAction,
    pub old_logprob: f64,
    pub advantage: f64,
    pub return_target: f64,
}

/// Minibatch means of each term. `total` is the weighted objective that is minimised.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub ppo: f64,
    pub value: f64,
    pub kl: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub total: f64,
}

/// Per-sample clipped surrogate `min(ρA, clip(ρ, 1−ε, 1+ε)A)` and its derivative with
/// respect to the new log-probability. The derivative is exactly 0 when the clipped branch
/// is the active minimum.
pub fn clipped_surrogate(ratio: f64, advantage: f64, eps: f64) -> (f64, f64, bool) {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * advantage;
    if clipped < unclipped {
        (clipped, 0.0, true)
    } else {
        (unclipped, unclipped, false)
    }
}

/// `∂ log p(a) / ∂ logits` for one categorical head, scaled.
fn logprob_logit_grad(logits: &[f64], index: usize, scale: f64, out: &mut [f64]) {
    for (i, p) in nn::softmax(logits).iter().enumerate() {
        let onehot = if i == index { 1.0 } else { 0.0 };
        out[i] += scale * (onehot - p);
    }
}

/// Entropy of one head and `scale · ∂H/∂logits = −scale · p (log p + H)`.
fn entropy_and_grad(logits: &[f64], scale: f64, out: Option<&mut [f64]>) -> f64 {
    let lp = nn::log_softmax(logits);
    let h: f64 = -lp.iter().map(|l| l.exp() * l).sum::<f64>();
    if let Some(out) = out {
        for (o, l) in out.iter_mut().zip(&lp) {
            *o -= scale * l.exp() * (l + h);
        }
    }
    h
}

/// `KL(P_ref ‖ softmax(z))` for one head and `scale · (softmax(z) − P_ref)`.
fn kl_and_grad(ref_logits: &[f64], logits: &[f64], scale: f64, out: Option<&mut [f64]>) -> f64 {
    let kl = crate::policy::categorical_kl(ref_logits, logits);
    if let Some(out) = out {
        let pr = nn::softmax(ref_logits);
        for ((o, q), p) in out.iter_mut().zip(nn::softmax(logits)).zip(&pr) {
            *o += scale * (q - p);
        }
    }
    kl
}

/// Weighted loss `ppo_weight·L_ppo + value_weight·L_V + kl_weight·L_KL − entropy_coef·H` over
/// `batch`, accumulating its gradient into `grad` when given.
pub fn total_loss(
    batch: &[Sample],
    params: &PolicyParams,
    reference: &PolicyParams,
    cfg: &TrainerConfig,
    mut grad: Option<&mut [f64]>,
) -> Result<LossTerms> {
    let n = batch.len() as f64;
    let mut terms = LossTerms::default();
    for s in batch {
        let c = params.forward_cached(&s.emb.values)?;
        let r = reference.forward_cached(&s.emb.values)?;
        let mut up = HeadGradients::zeros();
        let want = grad.is_some();

        let new_lp = c.log_prob(s.action);
        let ratio = (new_lp - s.old_logprob).exp();
        let (obj, dobj, clipped) = clipped_surrogate(ratio, s.advantage, cfg.clip_epsilon);
        terms.ppo -= obj / n;
        if clipped {
            terms.clip_fraction += 1.0 / n;
        }
        if want && dobj != 0.0 {
            let scale = -cfg.ppo_weight * dobj / n;
            logprob_logit_grad(&c.speed_logits, s.action.speed.index(), scale, &mut up.speed_logits);
            logprob_logit_grad(&c.path_logits, s.action.path.index(), scale, &mut up.path_logits);
        }

        let resid = c.value - s.return_target;
        terms.value += resid * resid / n;
        up.value = cfg.value_weight * 2.0 * resid / n;

        let ks = cfg.kl_weight / n;
        terms.kl += kl_and_grad(&r.speed_logits, &c.speed_logits, ks, want.then_some(&mut up.speed_logits[..])) / n;
        terms.kl += kl_and_grad(&r.path_logits, &c.path_logits, ks, want.then_some(&mut up.path_logits[..])) / n;

        let es = cfg.entropy_coef / n;
        // The bonus enters the minimised loss as −coef·H.
        let mut dh_s = vec![0.0; c.speed_logits.len()];
        let mut dh_p = vec![0.0; c.path_logits.len()];
        terms.entropy += entropy_and_grad(&c.speed_logits, es, Some(&mut dh_s)) / n;
        terms.entropy += entropy_and_grad(&c.path_logits, es, Some(&mut dh_p)) / n;
        if want && cfg.entropy_coef != 0.0 {
            for (u, d) in up.speed_logits.iter_mut().zip(&dh_s) {
                *u -= d;
            }
            for (u, d) in up.path_logits.iter_mut().zip(&dh_p) {
                *u -= d;
            }
        }

        if let Some(g) = grad.as_deref_mut() {
            params.backward(&c, &up, g);
        }
    }
    terms.total = cfg.ppo_weight * terms.ppo + cfg.value_weight * terms.value
        + cfg.kl_weight * terms.kl
        - cfg.entropy_coef * terms.entropy;
    Ok(terms)
}

/// Negated mean clipped surrogate.
pub fn ppo_loss(batch: &[Sample], params: &PolicyParams, clip_epsilon: f64) -> Result<f64> {
    let n = batch.len() as f64;
    let mut total = 0.0;
    for s in batch {
        let c = params.forward_cached(&s.emb.values)?;
        let ratio = (c.log_prob(s.action) - s.old_logprob).exp();
        total -= clipped_surrogate(ratio, s.advantage, clip_epsilon).0;
    }
    Ok(total / n)
}

/// Mean squared error between the value head and the return targets.
pub fn value_loss(batch: &[Sample], params: &PolicyParams) -> Result<f64> {
    let n = batch.len() as f64;
    let mut total = 0.0;
    for s in batch {
        let v = params.forward_cached(&s.emb.values)?.value;
        total += (v - s.return_target).powi(2);
    }
    Ok(total / n)
}

/// Mean `KL(P_ref ‖ P_θ)` over the batch states, summed over both heads.
pub fn kl_loss(batch: &[Sample], params: &PolicyParams, reference: &PolicyParams) -> Result<f64> {
    let n = batch.len() as f64;
    let mut total = 0.0;
    for s in batch {
        total += crate::policy::kl_to_reference(&s.emb, params, reference)?;
    }
    Ok(total / n)
}

/// Gradient of the per-sample surrogate with respect to the new speed and path logits.
pub fn surrogate_logit_grad(c: &ForwardCache, s: &Sample, clip_epsilon: f64) -> (Vec<f64>, Vec<f64>) {
    let ratio = (c.log_prob(s.action) - s.old_logprob).exp();
    let (_, dobj, _) = clipped_surrogate(ratio, s.advantage, clip_epsilon);
    let mut gs = vec![0.0; c.speed_logits.len()];
    let mut gp = vec![0.0; c.path_logits.len()];
    if dobj != 0.0 {
        logprob_logit_grad(&c.speed_logits, s.action.speed.index(), dobj, &mut gs);
        logprob_logit_grad(&c.path_logits, s.action.path.index(), dobj, &mut gp);
    }
    (gs, gp)
}
