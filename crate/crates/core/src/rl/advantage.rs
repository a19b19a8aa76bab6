//! Temporal-difference residuals and generalised advantage estimates.

use super::Episode;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageEstimates {
    pub delta: Vec<f64>,
    pub gae: Vec<f64>,
    /// `gae + value`, the regression target of the value head.
    pub return_target: Vec<f64>,
}

/// `δ_t = r_t + γ·V(s_{t+1}) − V(s_t)`. The value after the last transition is 0 when the
/// episode terminated and the stored bootstrap value when it was truncated by the time limit.
pub fn td_deltas(episode: &Episode, gamma: f64) -> Vec<f64> {
    let tr = &episode.transitions;
    let tail = if episode.truncated {
        episode.bootstrap_value
    } else {
        0.0
    };
    (0..tr.len())
        .map(|t| {
            let next = tr.get(t + 1).map_or(tail, |n| n.value);
            tr[t].reward as f64 + gamma * next - tr[t].value
        })
        .collect()
}

/// Backward recursion `Ĝ_t = δ_t + γλ·Ĝ_{t+1}` with `Ĝ = 0` past the end.
pub fn gae(deltas: &[f64], gamma: f64, lambda: f64) -> Vec<f64> {
    let mut out = vec![0.0; deltas.len()];
    let mut acc = 0.0;
    for t in (0..deltas.len()).rev() {
        acc = deltas[t] + gamma * lambda * acc;
        out[t] = acc;
    }
    out
}

pub fn advantages(episode: &Episode, gamma: f64, lambda: f64) -> AdvantageEstimates {
    let delta = td_deltas(episode, gamma);
    let g = gae(&delta, gamma, lambda);
    let return_target = g
        .iter()
        .zip(&episode.transitions)
        .map(|(a, t)| a + t.value)
        .collect();
    AdvantageEstimates {
        delta,
        gae: g,
        return_target,
    }
}
