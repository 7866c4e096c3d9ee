//! Skill-learning objects: the intrinsic reward `(phi(s') - phi(s)) . z`,
//! the representation objective with its soft Lipschitz penalty, dual ascent
//! on the penalty multiplier, and the goal-to-skill inference network `psi`.
//!
//! The penalty uses the squared representation step against the raw language
//! distance, `min(eps, d_lang - |phi(s) - phi(s')|^2)`, matching the update
//! rule the trainer alternates with dual steps.

use crate::embed::{self, EmbedderConfig};
use crate::error::{Error, Result};
use crate::nn::{dot, opt_step, AdamConfig, GradBundle, Mlp, OptState};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Borrowed view of one buffered transition, the unit the representation and
/// dual updates consume.
#[derive(Clone, Copy, Debug)]
pub struct TransitionView<'a> {
    pub s: &'a [f64],
    pub s_next: &'a [f64],
    pub z: &'a [f64],
    pub d_lang: f64,
}

/// Skill sampled from the standard normal prior; fixed for one episode.
pub fn sample_skill(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Exact inner product of the representation step with the skill; no scaling
/// or clipping. Summed over an episode it telescopes to
/// `(phi(s_T) - phi(s_0)) . z`.
pub fn intrinsic_reward(phi: &Mlp, s: &[f64], s_next: &[f64], z: &[f64]) -> Result<f64> {
    let a = phi.forward(s)?;
    let b = phi.forward(s_next)?;
    if z.len() != a.len() {
        return Err(Error::Shape(format!("skill dim {} != phi output {}", z.len(), a.len())));
    }
    Ok(b.iter().zip(a.iter()).zip(z.iter()).map(|((bi, ai), zi)| (bi - ai) * zi).sum())
}

/// Lagrange multiplier state for the soft Lipschitz constraint.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DualState {
    pub lambda: f64,
    pub epsilon: f64,
    pub lr: f64,
}

impl Default for DualState {
    fn default() -> Self {
        DualState { lambda: 300.0, epsilon: 1e-3, lr: 0.01 }
    }
}

impl DualState {
    pub fn new(lambda: f64, epsilon: f64, lr: f64) -> Self {
        DualState { lambda, epsilon, lr }
    }
}

fn phi_pair(phi: &Mlp, t: &TransitionView) -> Result<(Vec<f64>, Vec<f64>)> {
    Ok((phi.forward(t.s)?, phi.forward(t.s_next)?))
}

/// Batch mean of `(phi(s') - phi(s)) . z + lambda * min(eps, d_lang -
/// |phi(s) - phi(s')|^2)`.
pub fn repr_objective(phi: &Mlp, dual: &DualState, batch: &[TransitionView]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Config("representation objective over an empty batch".into()));
    }
    let mut total = 0.0;
    for t in batch {
        let (a, b) = phi_pair(phi, t)?;
        let reward: f64 = b.iter().zip(a.iter()).zip(t.z.iter()).map(|((bi, ai), zi)| (bi - ai) * zi).sum();
        let step2: f64 = a.iter().zip(b.iter()).map(|(ai, bi)| (ai - bi) * (ai - bi)).sum();
        total += reward + dual.lambda * dual.epsilon.min(t.d_lang - step2);
    }
    Ok(total / batch.len() as f64)
}

/// Objective value and its gradient with respect to `phi` (ascent
/// direction). The `min` is inactive (zero gradient) when the slack exceeds
/// `eps`.
pub fn repr_objective_grad(
    phi: &Mlp,
    dual: &DualState,
    batch: &[TransitionView],
) -> Result<(f64, GradBundle)> {
    if batch.is_empty() {
        return Err(Error::Config("representation gradient over an empty batch".into()));
    }
    let inv_n = 1.0 / batch.len() as f64;
    let mut grads = GradBundle::zeros_like(phi);
    let mut total = 0.0;
    let d = phi.out_dim();
    let mut up_s = vec![0.0; d];
    let mut up_next = vec![0.0; d];
    for t in batch {
        let trace_s = phi.trace(t.s)?;
        let trace_next = phi.trace(t.s_next)?;
        let (a, b) = (trace_s.output(), trace_next.output());
        let reward: f64 = b.iter().zip(a.iter()).zip(t.z.iter()).map(|((bi, ai), zi)| (bi - ai) * zi).sum();
        let step2: f64 = a.iter().zip(b.iter()).map(|(ai, bi)| (ai - bi) * (ai - bi)).sum();
        let slack = t.d_lang - step2;
        total += reward + dual.lambda * dual.epsilon.min(slack);
        let active = slack < dual.epsilon;
        for j in 0..d {
            let u = a[j] - b[j];
            let penalty = if active { dual.lambda * 2.0 * u } else { 0.0 };
            up_next[j] = (t.z[j] + penalty) * inv_n;
            up_s[j] = (-t.z[j] - penalty) * inv_n;
        }
        phi.backward_from_trace(&trace_next, &up_next, &mut grads)?;
        phi.backward_from_trace(&trace_s, &up_s, &mut grads)?;
    }
    Ok((total * inv_n, grads))
}

/// One ascent step on the representation objective. Returns the objective
/// value at the pre-step parameters.
pub fn repr_step(
    phi: &mut Mlp,
    opt: &mut OptState,
    adam: &AdamConfig,
    dual: &DualState,
    batch: &[TransitionView],
) -> Result<f64> {
    let (obj, mut grads) = repr_objective_grad(phi, dual, batch)?;
    if !obj.is_finite() {
        return Err(Error::NonFinite(format!("representation objective diverged: {obj}")));
    }
    grads.scale(-1.0);
    opt_step(phi, &grads, opt, adam)?;
    Ok(obj)
}

/// Projected dual step `lambda <- max(0, lambda - lr * E[min(eps, slack)])`:
/// the multiplier grows while constraints are violated and decays slowly
/// once they hold.
pub fn dual_update(dual: &mut DualState, phi: &Mlp, batch: &[TransitionView]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Config("dual update over an empty batch".into()));
    }
    let mut mean_min_slack = 0.0;
    for t in batch {
        let (a, b) = phi_pair(phi, t)?;
        let step2: f64 = a.iter().zip(b.iter()).map(|(ai, bi)| (ai - bi) * (ai - bi)).sum();
        mean_min_slack += dual.epsilon.min(t.d_lang - step2);
    }
    mean_min_slack /= batch.len() as f64;
    dual.lambda = (dual.lambda - dual.lr * mean_min_slack).max(0.0);
    Ok(mean_min_slack)
}

/// Fraction of transitions whose squared representation step exceeds the
/// language distance by more than `tol`.
pub fn violation_fraction(phi: &Mlp, batch: &[TransitionView], tol: f64) -> Result<f64> {
    if batch.is_empty() {
        return Ok(0.0);
    }
    let mut violated = 0usize;
    for t in batch {
        let (a, b) = phi_pair(phi, t)?;
        let step2: f64 = a.iter().zip(b.iter()).map(|(ai, bi)| (ai - bi) * (ai - bi)).sum();
        if step2 > t.d_lang + tol {
            violated += 1;
        }
    }
    Ok(violated as f64 / batch.len() as f64)
}

/// Mean squared error of `psi(e)` against `z` over the pairs, plus its
/// gradient. The error is the squared L2 norm averaged over pairs.
pub fn psi_loss_and_grad(psi: &Mlp, pairs: &[(&[f64], &[f64])]) -> Result<(f64, GradBundle)> {
    if pairs.is_empty() {
        return Err(Error::Config("psi update over an empty pair set".into()));
    }
    let inv_n = 1.0 / pairs.len() as f64;
    let mut grads = GradBundle::zeros_like(psi);
    let mut loss = 0.0;
    for (e, z) in pairs {
        let trace = psi.trace(e)?;
        let out = trace.output();
        if out.len() != z.len() {
            return Err(Error::Shape(format!(
                "psi output {} != skill dim {}",
                out.len(),
                z.len()
            )));
        }
        let mut upstream = Vec::with_capacity(out.len());
        for (o, t) in out.iter().zip(z.iter()) {
            let err = o - t;
            loss += err * err * inv_n;
            upstream.push(2.0 * err * inv_n);
        }
        psi.backward_from_trace(&trace, &upstream, &mut grads)?;
    }
    Ok((loss, grads))
}

/// One optimizer step on the regression loss; returns the pre-step loss.
pub fn psi_update(
    psi: &mut Mlp,
    opt: &mut OptState,
    adam: &AdamConfig,
    pairs: &[(&[f64], &[f64])],
) -> Result<f64> {
    let (loss, grads) = psi_loss_and_grad(psi, pairs)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("psi loss diverged: {loss}")));
    }
    opt_step(psi, &grads, opt, adam)?;
    Ok(loss)
}

/// Puts a goal sentence into the same `Description: ...` form the describer
/// produces, so its embedding matches the inputs `psi` was trained on.
pub fn canonicalize_goal(text: &str) -> String {
    let trimmed = text.trim();
    let body = trimmed.strip_prefix("Description:").map(str::trim).unwrap_or(trimmed);
    format!("Description: {body}")
}

/// Maps a natural-language goal to the skill expected to reach it:
/// `z = psi(f_embd(goal))`, optionally rescaled to unit norm.
pub fn infer_skill(
    psi: &Mlp,
    goal_text: &str,
    embedder: &EmbedderConfig,
    normalize: bool,
) -> Result<Vec<f64>> {
    let canonical = canonicalize_goal(goal_text);
    let e = embed::embed_text(&canonical, embedder)?;
    let mut z = psi.forward(&e)?;
    if normalize {
        let norm = dot(&z, &z).sqrt();
        if norm == 0.0 {
            return Err(Error::Degenerate("inferred skill has zero norm".into()));
        }
        for v in &mut z {
            *v /= norm;
        }
    }
    Ok(z)
}
