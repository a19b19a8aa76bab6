//! Conditional latent decoder: (embedding ⊕ one-hot meta-action) → Gaussian latent → GRU rollout
//! emitting path headings and speed-waypoint increments.

use crate::encoder::{StateEmbedding, EMBEDDING_DIM};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::meta_action::{MetaAction, PATH_ACTIONS, SPEED_ACTIONS};
use crate::nn::{self, sigmoid, Dense, LayoutBuilder};
use crate::trajectory::{Trajectory, PATH_POINTS, PATH_SPACING, SPEED_POINTS, TRAJECTORY_DIM};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const STEPS: usize = PATH_POINTS + SPEED_POINTS;
const META_DIM: usize = SPEED_ACTIONS + PATH_ACTIONS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoderShape {
    pub embedding: usize,
    pub cond_hidden: usize,
    pub latent: usize,
    pub hidden: usize,
}

impl Default for DecoderShape {
    fn default() -> Self {
        DecoderShape {
            embedding: EMBEDDING_DIM,
            cond_hidden: 128,
            latent: 8,
            hidden: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct DecoderLayers {
    enc1: Dense,
    enc2: Dense,
    init: Dense,
    gru_x: Dense,
    gru_h: Dense,
    path_head: Dense,
    speed_head: Dense,
}

impl DecoderLayers {
    fn new(s: DecoderShape) -> (Self, usize) {
        let mut b = LayoutBuilder::new();
        let layers = DecoderLayers {
            enc1: b.dense(s.embedding + META_DIM, s.cond_hidden),
            enc2: b.dense(s.cond_hidden, 2 * s.latent),
            init: b.dense(s.latent, s.hidden),
            gru_x: b.dense(s.latent + STEPS, 3 * s.hidden),
            gru_h: b.dense(s.hidden, 3 * s.hidden),
            path_head: b.dense(s.hidden, 1),
            speed_head: b.dense(s.hidden, 2),
        };
        (layers, b.len())
    }

    fn all(&self) -> [Dense; 7] {
        [
            self.enc1,
            self.enc2,
            self.init,
            self.gru_x,
            self.gru_h,
            self.path_head,
            self.speed_head,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams {
    shape: DecoderShape,
    layers: DecoderLayers,
    pub values: Vec<f64>,
}

/// How the latent is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatentMode {
    /// `z = μ`.
    Mean,
    /// `z = μ + σ·ε`, `ε ~ N(0, I)`.
    Sample,
}

struct StepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    r: Vec<f64>,
    u: Vec<f64>,
    n: Vec<f64>,
    hn: Vec<f64>,
    h: Vec<f64>,
}

/// Activations of one decode, kept for backpropagation.
pub struct DecodeCache {
    cond_input: Vec<f64>,
    cond_hidden: Vec<f64>,
    pub mu: Vec<f64>,
    pub logvar: Vec<f64>,
    eps: Vec<f64>,
    z: Vec<f64>,
    h0: Vec<f64>,
    steps: Vec<StepCache>,
    headings: Vec<f64>,
    pub flat: Vec<f64>,
}

/// Standard normal draw by Box–Muller.
fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

impl DecoderParams {
    pub fn new(shape: DecoderShape, seed: u64) -> Self {
        let (layers, len) = DecoderLayers::new(shape);
        let mut values = vec![0.0; len];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for d in layers.all() {
            d.init(&mut values, &mut rng);
        }
        DecoderParams {
            shape,
            layers,
            values,
        }
    }

    pub fn from_values(shape: DecoderShape, values: Vec<f64>) -> Result<Self> {
        let (layers, len) = DecoderLayers::new(shape);
        if values.len() != len {
            return Err(Error::Config(format!(
                "decoder expects {len} parameters, got {}",
                values.len()
            )));
        }
        Ok(DecoderParams {
            shape,
            layers,
            values,
        })
    }

    pub fn shape(&self) -> DecoderShape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Runs the decoder, drawing `ε` from `rng` when sampling.
    pub fn forward_cached<R: Rng>(
        &self,
        emb: &[f64],
        meta: MetaAction,
        mode: LatentMode,
        rng: &mut R,
    ) -> Result<DecodeCache> {
        if emb.len() != self.shape.embedding {
            return Err(Error::Config(format!(
                "embedding has dimension {}, decoder expects {}",
                emb.len(),
                self.shape.embedding
            )));
        }
        let p = &self.values;
        let l = &self.layers;
        let hd = self.shape.hidden;
        let ld = self.shape.latent;

        let mut cond_input = emb.to_vec();
        cond_input.extend_from_slice(&meta.one_hot());
        let mut cond_hidden = l.enc1.apply(p, &cond_input);
        nn::tanh_in_place(&mut cond_hidden);
        let stats = l.enc2.apply(p, &cond_hidden);
        let mu = stats[..ld].to_vec();
        let logvar = stats[ld..].to_vec();
        let eps: Vec<f64> = match mode {
            LatentMode::Mean => vec![0.0; ld],
            LatentMode::Sample => (0..ld).map(|_| gaussian(rng)).collect(),
        };
        let z: Vec<f64> = (0..ld)
            .map(|i| mu[i] + (0.5 * logvar[i]).exp() * eps[i])
            .collect();

        let mut h0 = l.init.apply(p, &z);
        nn::tanh_in_place(&mut h0);

        let mut steps = Vec::with_capacity(STEPS);
        let mut h = h0.clone();
        let mut headings = Vec::with_capacity(PATH_POINTS);
        let mut flat = Vec::with_capacity(TRAJECTORY_DIM);
        let mut pos = Vec2::ZERO;
        let mut wp = Vec2::ZERO;
        let mut gx = vec![0.0; 3 * hd];
        let mut gh = vec![0.0; 3 * hd];
        for k in 0..STEPS {
            let mut x = z.clone();
            x.resize(ld + STEPS, 0.0);
            x[ld + k] = 1.0;
            l.gru_x.forward(p, &x, &mut gx);
            l.gru_h.forward(p, &h, &mut gh);
            let mut r = vec![0.0; hd];
            let mut u = vec![0.0; hd];
            let mut n = vec![0.0; hd];
            let mut hn = vec![0.0; hd];
            let mut h_new = vec![0.0; hd];
            for j in 0..hd {
                r[j] = sigmoid(gx[j] + gh[j]);
                u[j] = sigmoid(gx[hd + j] + gh[hd + j]);
                hn[j] = gh[2 * hd + j];
                n[j] = (gx[2 * hd + j] + r[j] * hn[j]).tanh();
                h_new[j] = (1.0 - u[j]) * n[j] + u[j] * h[j];
            }
            if k < PATH_POINTS {
                let theta = l.path_head.apply(p, &h_new)[0];
                headings.push(theta);
                pos = pos + Vec2::from_angle(theta) * PATH_SPACING;
                flat.extend_from_slice(&[pos.x, pos.y]);
            } else {
                let d = l.speed_head.apply(p, &h_new);
                wp = wp + Vec2::new(d[0], d[1]);
                flat.extend_from_slice(&[wp.x, wp.y]);
            }
            steps.push(StepCache {
                x,
                h_prev: std::mem::replace(&mut h, h_new.clone()),
                r,
                u,
                n,
                hn,
                h: h_new,
            });
        }
        Ok(DecodeCache {
            cond_input,
            cond_hidden,
            mu,
            logvar,
            eps,
            z,
            h0,
            steps,
            headings,
            flat,
        })
    }

    /// Backpropagates `d_flat` (gradient w.r.t. the flat trajectory) plus direct gradients
    /// on `μ` and log-variance into `grad`.
    pub fn backward(
        &self,
        cache: &DecodeCache,
        d_flat: &[f64],
        d_mu: &[f64],
        d_logvar: &[f64],
        grad: &mut [f64],
    ) {
        let p = &self.values;
        let l = &self.layers;
        let hd = self.shape.hidden;
        let ld = self.shape.latent;

        // Suffix sums turn per-point gradients into per-increment gradients.
        let mut dh_out = vec![vec![0.0; hd]; STEPS];
        let mut acc = Vec2::ZERO;
        for k in (PATH_POINTS..STEPS).rev() {
            acc = acc + Vec2::new(d_flat[2 * k], d_flat[2 * k + 1]);
            l.speed_head
                .backward(p, &cache.steps[k].h, &[acc.x, acc.y], grad, Some(&mut dh_out[k]));
        }
        acc = Vec2::ZERO;
        for k in (0..PATH_POINTS).rev() {
            acc = acc + Vec2::new(d_flat[2 * k], d_flat[2 * k + 1]);
            let th = cache.headings[k];
            let dtheta = PATH_SPACING * (-acc.x * th.sin() + acc.y * th.cos());
            l.path_head
                .backward(p, &cache.steps[k].h, &[dtheta], grad, Some(&mut dh_out[k]));
        }

        let mut dz = vec![0.0; ld];
        let mut dh_next = vec![0.0; hd];
        let mut dgx = vec![0.0; 3 * hd];
        let mut dgh = vec![0.0; 3 * hd];
        for k in (0..STEPS).rev() {
            let s = &cache.steps[k];
            let mut dh_prev = vec![0.0; hd];
            for j in 0..hd {
                let dh = dh_out[k][j] + dh_next[j];
                let dn = dh * (1.0 - s.u[j]);
                let du = dh * (s.h_prev[j] - s.n[j]);
                dh_prev[j] = dh * s.u[j];
                let dan = dn * (1.0 - s.n[j] * s.n[j]);
                let dr = dan * s.hn[j];
                let dar = dr * s.r[j] * (1.0 - s.r[j]);
                let dau = du * s.u[j] * (1.0 - s.u[j]);
                dgx[j] = dar;
                dgx[hd + j] = dau;
                dgx[2 * hd + j] = dan;
                dgh[j] = dar;
                dgh[hd + j] = dau;
                dgh[2 * hd + j] = dan * s.r[j];
            }
            l.gru_h.backward(p, &s.h_prev, &dgh, grad, Some(&mut dh_prev));
            let mut dx = vec![0.0; ld + STEPS];
            l.gru_x.backward(p, &s.x, &dgx, grad, Some(&mut dx));
            for i in 0..ld {
                dz[i] += dx[i];
            }
            dh_next = dh_prev;
        }
        let da0 = nn::tanh_backward(&cache.h0, &dh_next);
        l.init.backward(p, &cache.z, &da0, grad, Some(&mut dz));

        let mut dstats = vec![0.0; 2 * ld];
        for i in 0..ld {
            let sigma = (0.5 * cache.logvar[i]).exp();
            dstats[i] = dz[i] + d_mu[i];
            dstats[ld + i] = dz[i] * cache.eps[i] * 0.5 * sigma + d_logvar[i];
        }
        let mut dch = vec![0.0; self.shape.cond_hidden];
        l.enc2.backward(p, &cache.cond_hidden, &dstats, grad, Some(&mut dch));
        let da = nn::tanh_backward(&cache.cond_hidden, &dch);
        l.enc1.backward(p, &cache.cond_input, &da, grad, None);
    }
}

/// Decodes a trajectory for `meta`. With [`LatentMode::Mean`] the result is a pure function
/// of its inputs and `rng` is untouched.
pub fn decode<R: Rng>(
    emb: &StateEmbedding,
    meta: MetaAction,
    params: &DecoderParams,
    mode: LatentMode,
    rng: &mut R,
) -> Result<Trajectory> {
    if !params.is_finite() {
        return Err(Error::NumericInput("decoder parameters are not finite".into()));
    }
    let cache = params.forward_cached(&emb.values, meta, mode, rng)?;
    Trajectory::from_flat(&cache.flat)
}
