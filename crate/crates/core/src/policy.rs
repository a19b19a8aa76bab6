//! Decision policy: a shared tanh trunk feeding factorised speed/path softmax heads and a value head.

use crate::encoder::{StateEmbedding, EMBEDDING_DIM};
use crate::error::{Error, Result};
use crate::meta_action::{MetaAction, PathAction, SpeedAction, PATH_ACTIONS, SPEED_ACTIONS};
use crate::nn::{self, Dense, LayoutBuilder};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::ops::Range;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyShape {
    pub input: usize,
    pub hidden: usize,
    pub value_hidden: usize,
}

impl Default for PolicyShape {
    fn default() -> Self {
        PolicyShape {
            input: EMBEDDING_DIM,
            hidden: 128,
            value_hidden: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct PolicyLayers {
    trunk: [Dense; 2],
    speed: Dense,
    path: Dense,
    value: [Dense; 2],
}

impl PolicyLayers {
    fn new(shape: PolicyShape) -> (Self, usize) {
        let mut b = LayoutBuilder::new();
        let trunk = [
            b.dense(shape.input, shape.hidden),
            b.dense(shape.hidden, shape.hidden),
        ];
        let speed = b.dense(shape.hidden, SPEED_ACTIONS);
        let path = b.dense(shape.hidden, PATH_ACTIONS);
        let value = [
            b.dense(shape.hidden, shape.value_hidden),
            b.dense(shape.value_hidden, 1),
        ];
        (
            PolicyLayers {
                trunk,
                speed,
                path,
                value,
            },
            b.len(),
        )
    }
}

/// All policy parameters in one flat vector: trunk, speed head, path head, then value head.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    shape: PolicyShape,
    layers: PolicyLayers,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionDistribution {
    pub speed: [f64; SPEED_ACTIONS],
    pub path: [f64; PATH_ACTIONS],
}

impl ActionDistribution {
    pub fn from_logits(speed_logits: &[f64], path_logits: &[f64]) -> Self {
        let mut speed = [0.0; SPEED_ACTIONS];
        let mut path = [0.0; PATH_ACTIONS];
        speed.copy_from_slice(&nn::softmax(speed_logits));
        path.copy_from_slice(&nn::softmax(path_logits));
        ActionDistribution { speed, path }
    }

    pub fn uniform() -> Self {
        ActionDistribution {
            speed: [1.0 / SPEED_ACTIONS as f64; SPEED_ACTIONS],
            path: [1.0 / PATH_ACTIONS as f64; PATH_ACTIONS],
        }
    }

    /// Distribution placing all mass on one joint action.
    pub fn one_hot(action: MetaAction) -> Self {
        let mut d = ActionDistribution {
            speed: [0.0; SPEED_ACTIONS],
            path: [0.0; PATH_ACTIONS],
        };
        d.speed[action.speed.index()] = 1.0;
        d.path[action.path.index()] = 1.0;
        d
    }

    pub fn prob(&self, a: MetaAction) -> f64 {
        self.speed[a.speed.index()] * self.path[a.path.index()]
    }

    pub fn log_prob(&self, a: MetaAction) -> f64 {
        self.speed[a.speed.index()].ln() + self.path[a.path.index()].ln()
    }

    /// Sum of the two heads' entropies.
    pub fn entropy(&self) -> f64 {
        let h = |p: &[f64]| -p.iter().filter(|x| **x > 0.0).map(|x| x * x.ln()).sum::<f64>();
        h(&self.speed) + h(&self.path)
    }

    pub fn argmax(&self) -> MetaAction {
        let best = |p: &[f64]| {
            p.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if *v > acc.1 { (i, *v) } else { acc })
                .0
        };
        MetaAction::new(
            SpeedAction::ALL[best(&self.speed)],
            PathAction::ALL[best(&self.path)],
        )
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("speed", &self.speed[..]), ("path", &self.path[..])] {
            let sum: f64 = p.iter().sum();
            if p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Argument(format!("{name} probabilities do not form a simplex")));
            }
        }
        Ok(())
    }
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: Vec<f64>,
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub speed_logits: Vec<f64>,
    pub path_logits: Vec<f64>,
    pub value_hidden: Vec<f64>,
    pub value: f64,
}

impl ForwardCache {
    pub fn distribution(&self) -> ActionDistribution {
        ActionDistribution::from_logits(&self.speed_logits, &self.path_logits)
    }

    pub fn speed_log_probs(&self) -> Vec<f64> {
        nn::log_softmax(&self.speed_logits)
    }

    pub fn path_log_probs(&self) -> Vec<f64> {
        nn::log_softmax(&self.path_logits)
    }

    pub fn log_prob(&self, a: MetaAction) -> f64 {
        self.speed_log_probs()[a.speed.index()] + self.path_log_probs()[a.path.index()]
    }
}

/// Upstream gradients into the three heads.
#[derive(Debug, Clone)]
pub struct HeadGradients {
    pub speed_logits: Vec<f64>,
    pub path_logits: Vec<f64>,
    pub value: f64,
}

impl HeadGradients {
    pub fn zeros() -> Self {
        HeadGradients {
            speed_logits: vec![0.0; SPEED_ACTIONS],
            path_logits: vec![0.0; PATH_ACTIONS],
            value: 0.0,
        }
    }
}

impl PolicyParams {
    pub fn new(shape: PolicyShape, seed: u64) -> Self {
        let (layers, len) = PolicyLayers::new(shape);
        let mut values = vec![0.0; len];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for d in layers.trunk.iter().chain([&layers.speed, &layers.path]).chain(&layers.value) {
            d.init(&mut values, &mut rng);
        }
        PolicyParams {
            shape,
            layers,
            values,
        }
    }

    pub fn from_values(shape: PolicyShape, values: Vec<f64>) -> Result<Self> {
        let (layers, len) = PolicyLayers::new(shape);
        if values.len() != len {
            return Err(Error::Config(format!(
                "policy expects {len} parameters, got {}",
                values.len()
            )));
        }
        Ok(PolicyParams {
            shape,
            layers,
            values,
        })
    }

    pub fn shape(&self) -> PolicyShape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Trunk plus the two decision heads.
    pub fn policy_range(&self) -> Range<usize> {
        0..self.layers.path.end()
    }

    pub fn value_range(&self) -> Range<usize> {
        self.layers.value[0].offset..self.values.len()
    }

    pub fn speed_head_range(&self) -> Range<usize> {
        self.layers.speed.offset..self.layers.speed.end()
    }

    pub fn path_head_range(&self) -> Range<usize> {
        self.layers.path.offset..self.layers.path.end()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Mutable view of one layer's weights and bias, for hand-built test fixtures.
    pub fn speed_head_mut(&mut self) -> &mut [f64] {
        let r = self.speed_head_range();
        &mut self.values[r]
    }

    pub fn forward_cached(&self, input: &[f64]) -> Result<ForwardCache> {
        if input.len() != self.shape.input {
            return Err(Error::Config(format!(
                "embedding has dimension {}, policy expects {}",
                input.len(),
                self.shape.input
            )));
        }
        let p = &self.values;
        let l = &self.layers;
        let mut h1 = l.trunk[0].apply(p, input);
        nn::tanh_in_place(&mut h1);
        let mut h2 = l.trunk[1].apply(p, &h1);
        nn::tanh_in_place(&mut h2);
        let speed_logits = l.speed.apply(p, &h2);
        let path_logits = l.path.apply(p, &h2);
        let mut value_hidden = l.value[0].apply(p, &h2);
        nn::tanh_in_place(&mut value_hidden);
        let value = l.value[1].apply(p, &value_hidden)[0];
        Ok(ForwardCache {
            input: input.to_vec(),
            h1,
            h2,
            speed_logits,
            path_logits,
            value_hidden,
            value,
        })
    }

    /// Accumulates parameter gradients. The value gradient stops at the value head;
    /// it never reaches the shared trunk.
    pub fn backward(&self, cache: &ForwardCache, up: &HeadGradients, grad: &mut [f64]) {
        let p = &self.values;
        let l = &self.layers;
        if up.value != 0.0 {
            let mut dvh = vec![0.0; self.shape.value_hidden];
            l.value[1].backward(p, &cache.value_hidden, &[up.value], grad, Some(&mut dvh));
            let da = nn::tanh_backward(&cache.value_hidden, &dvh);
            l.value[0].backward(p, &cache.h2, &da, grad, None);
        }
        let touches_policy = up
            .speed_logits
            .iter()
            .chain(&up.path_logits)
            .any(|g| *g != 0.0);
        if !touches_policy {
            return;
        }
        let mut dh2 = vec![0.0; self.shape.hidden];
        l.speed.backward(p, &cache.h2, &up.speed_logits, grad, Some(&mut dh2));
        l.path.backward(p, &cache.h2, &up.path_logits, grad, Some(&mut dh2));
        let da2 = nn::tanh_backward(&cache.h2, &dh2);
        let mut dh1 = vec![0.0; self.shape.hidden];
        l.trunk[1].backward(p, &cache.h1, &da2, grad, Some(&mut dh1));
        let da1 = nn::tanh_backward(&cache.h1, &dh1);
        l.trunk[0].backward(p, &cache.input, &da1, grad, None);
    }
}

/// Evaluates both decision heads and the value head.
pub fn forward(emb: &StateEmbedding, params: &PolicyParams) -> Result<(ActionDistribution, f64)> {
    let c = params.forward_cached(&emb.values)?;
    Ok((c.distribution(), c.value))
}

fn sample_index<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

/// Draws speed and path independently; the log-probability is the sum of both heads'.
pub fn sample<R: Rng>(dist: &ActionDistribution, rng: &mut R) -> (MetaAction, f64) {
    let s = sample_index(&dist.speed, rng);
    let p = sample_index(&dist.path, rng);
    let a = MetaAction::new(SpeedAction::ALL[s], PathAction::ALL[p]);
    (a, dist.log_prob(a))
}

/// `KL(P‖Q)` between two categoricals given by logits.
pub fn categorical_kl(p_logits: &[f64], q_logits: &[f64]) -> f64 {
    let lp = nn::log_softmax(p_logits);
    let lq = nn::log_softmax(q_logits);
    lp.iter()
        .zip(&lq)
        .map(|(a, b)| a.exp() * (a - b))
        .sum::<f64>()
        .max(0.0)
}

/// Reference-first divergence `KL(P_ref ‖ P_θ)`, summed over the speed and path heads.
pub fn kl_to_reference(
    emb: &StateEmbedding,
    params: &PolicyParams,
    ref_params: &PolicyParams,
) -> Result<f64> {
    let c = params.forward_cached(&emb.values)?;
    let r = ref_params.forward_cached(&emb.values)?;
    Ok(kl_from_caches(&r, &c))
}

pub(crate) fn kl_from_caches(reference: &ForwardCache, current: &ForwardCache) -> f64 {
    categorical_kl(&reference.speed_logits, &current.speed_logits)
        + categorical_kl(&reference.path_logits, &current.path_logits)
}

/// Mean negative log-likelihood of the labelled meta-actions.
pub fn ce_loss(batch: &[(StateEmbedding, MetaAction)], params: &PolicyParams) -> Result<f64> {
    Ok(ce_loss_and_grad(batch, params, None)?)
}

/// Cross-entropy loss, optionally accumulating its gradient into `grad`.
pub fn ce_loss_and_grad(
    batch: &[(StateEmbedding, MetaAction)],
    params: &PolicyParams,
    mut grad: Option<&mut [f64]>,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Argument("cross-entropy batch is empty".into()));
    }
    let n = batch.len() as f64;
    let mut total = 0.0;
    for (emb, label) in batch {
        let c = params.forward_cached(&emb.values)?;
        total -= c.log_prob(*label);
        if let Some(g) = grad.as_deref_mut() {
            let up = ce_head_gradients(&c, *label, 1.0 / n);
            params.backward(&c, &up, g);
        }
    }
    Ok(total / n)
}

/// `scale · ∂(−log p(label))/∂logits` for both heads.
pub fn ce_head_gradients(c: &ForwardCache, label: MetaAction, scale: f64) -> HeadGradients {
    let mut speed = nn::softmax(&c.speed_logits);
    speed[label.speed.index()] -= 1.0;
    let mut path = nn::softmax(&c.path_logits);
    path[label.path.index()] -= 1.0;
    HeadGradients {
        speed_logits: speed.into_iter().map(|g| g * scale).collect(),
        path_logits: path.into_iter().map(|g| g * scale).collect(),
        value: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(values: Vec<f64>) -> StateEmbedding {
        StateEmbedding {
            values,
            frame_t: 0.0,
        }
    }

    #[test]
    fn zero_speed_head_is_uniform() {
        let mut p = PolicyParams::new(PolicyShape::default(), 1);
        p.speed_head_mut().fill(0.0);
        let e = emb((0..64).map(|i| (i as f64 * 0.37).sin()).collect());
        let (d, _) = forward(&e, &p).unwrap();
        for s in d.speed {
            assert!((s - 1.0 / 7.0).abs() < 1e-15);
        }
        d.validate().unwrap();
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let p = PolicyParams::new(PolicyShape::default(), 1);
        assert!(matches!(forward(&emb(vec![0.0; 10]), &p), Err(Error::Config(_))));
    }

    #[test]
    fn one_hot_sample() {
        let a = MetaAction::new(SpeedAction::Stop, PathAction::TurnLeft);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            let (s, lp) = sample(&ActionDistribution::one_hot(a), &mut rng);
            assert_eq!(s, a);
            assert_eq!(lp, 0.0);
        }
    }

    #[test]
    fn two_way_kl_closed_form() {
        let p = [0.0, 0.0];
        let q = [0.25f64.ln(), 0.75f64.ln()];
        let expected = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        assert!((categorical_kl(&p, &q) - expected).abs() < 1e-12);
        assert!((expected - 0.14384).abs() < 1e-5);
    }

    #[test]
    fn empty_ce_batch_rejected() {
        let p = PolicyParams::new(PolicyShape::default(), 1);
        assert!(matches!(ce_loss(&[], &p), Err(Error::Argument(_))));
    }
}
