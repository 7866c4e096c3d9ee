//! Skill-conditioned Gaussian policy with tanh squashing, generalized
//! advantage estimation, and the clipped-surrogate policy update.
//!
//! The policy and value networks share no parameters. Updates are
//! deterministic given the minibatch-shuffling RNG, so a whole training
//! epoch reproduces bit-for-bit on one platform.

use crate::error::{Error, Result};
use crate::nn::{opt_step, opt_step_vec, AdamConfig, GradBundle, Mlp, OptState, VecOptState};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

const LN_2PI: f64 = 1.8378770664093453;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub clip: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub entropy_coef: f64,
    pub vf_coef: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub lr: f64,
    pub normalize_advantages: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            clip: 0.2,
            epochs: 5,
            minibatch: 512,
            entropy_coef: 1e-4,
            vf_coef: 0.5,
            gamma: 0.99,
            gae_lambda: 0.95,
            lr: 1e-4,
            normalize_advantages: true,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(Error::Config(format!("ppo.clip must be in (0,1), got {}", self.clip)));
        }
        if self.epochs == 0 || self.minibatch == 0 {
            return Err(Error::Config("ppo.epochs and ppo.minibatch must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(Error::Config("ppo.gamma and ppo.gae_lambda must be in [0,1]".into()));
        }
        if self.lr <= 0.0 {
            return Err(Error::Config("ppo.lr must be positive".into()));
        }
        Ok(())
    }
}

/// Gaussian policy over `[state || skill]` with a state-independent log-std
/// vector, squashed through tanh into `[-1, 1]` per component.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Policy {
    pub mean: Mlp,
    pub log_std: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ActionSample {
    /// Squashed action fed to the environment.
    pub action: Vec<f64>,
    /// Pre-squash Gaussian draw; kept so the update can recompute densities
    /// without inverting tanh.
    pub presquash: Vec<f64>,
    /// Log density of `action` including the tanh change-of-variables term.
    pub log_prob: f64,
}

pub fn concat_input(state: &[f64], skill: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(state.len() + skill.len());
    x.extend_from_slice(state);
    x.extend_from_slice(skill);
    x
}

/// `log(1 - tanh(u)^2)` evaluated stably for large `|u|`.
#[inline]
fn log_one_minus_tanh_sq(u: f64) -> f64 {
    let a = u.abs();
    2.0 * (std::f64::consts::LN_2 - a - (-2.0 * a).exp().ln_1p())
}

impl Policy {
    pub fn new(
        input_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        act: crate::nn::Activation,
        log_std_init: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(action_dim);
        Policy {
            mean: Mlp::new(&sizes, act, rng),
            log_std: vec![log_std_init.clamp(LOG_STD_MIN, LOG_STD_MAX); action_dim],
        }
    }

    pub fn action_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.mean.validate()?;
        if self.mean.out_dim() != self.log_std.len() {
            return Err(Error::Shape("log_std length != mean net output width".into()));
        }
        if !self.log_std.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("log_std has non-finite entries".into()));
        }
        Ok(())
    }

    pub fn clamp_log_std(&mut self) {
        for v in &mut self.log_std {
            *v = v.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }

    /// Draws `a = tanh(u)`, `u ~ N(mean([s||z]), diag(exp(log_std)^2))`.
    pub fn sample(&self, state: &[f64], skill: &[f64], rng: &mut ChaCha8Rng) -> Result<ActionSample> {
        let x = concat_input(state, skill);
        let mu = self.mean.forward(&x)?;
        if !mu.iter().all(|m| m.is_finite()) {
            return Err(Error::NonFinite("policy mean output is non-finite".into()));
        }
        let mut presquash = Vec::with_capacity(mu.len());
        for (j, m) in mu.iter().enumerate() {
            let noise: f64 = rng.sample(StandardNormal);
            presquash.push(m + self.log_std[j].exp() * noise);
        }
        let action: Vec<f64> = presquash.iter().map(|u| u.tanh()).collect();
        let log_prob = self.log_prob_presquash(&mu, &presquash);
        Ok(ActionSample { action, presquash, log_prob })
    }

    /// Log density of the squashed action identified by its pre-squash draw.
    pub fn log_prob_presquash(&self, mu: &[f64], presquash: &[f64]) -> f64 {
        let mut lp = 0.0;
        for j in 0..mu.len() {
            let sigma = self.log_std[j].exp();
            let t = (presquash[j] - mu[j]) / sigma;
            lp += -0.5 * LN_2PI - self.log_std[j] - 0.5 * t * t;
            lp -= log_one_minus_tanh_sq(presquash[j]);
        }
        lp
    }

    /// Log density of an action given directly (inverts the squash).
    pub fn log_prob_action(&self, state: &[f64], skill: &[f64], action: &[f64]) -> Result<f64> {
        let x = concat_input(state, skill);
        let mu = self.mean.forward(&x)?;
        let presquash: Vec<f64> = action.iter().map(|a| a.atanh()).collect();
        if !presquash.iter().all(|u| u.is_finite()) {
            return Err(Error::Degenerate("action on the squash boundary".into()));
        }
        Ok(self.log_prob_presquash(&mu, &presquash))
    }

    /// Entropy of the underlying diagonal Gaussian (the squash correction is
    /// dropped; only the log-std gradient matters for the bonus).
    pub fn gaussian_entropy(&self) -> f64 {
        self.log_std.iter().map(|ls| ls + 0.5 * (1.0 + LN_2PI)).sum()
    }
}

/// Standard recursive GAE. `values[t]` is `V(s_t)`; the value after the last
/// row is treated as zero, and `dones` cut both bootstrap and accumulation.
/// Returns `(advantages, returns)` with `returns = advantages + values`.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    gamma: f64,
    lam: f64,
) -> (Vec<f64>, Vec<f64>) {
    assert!(rewards.len() == values.len() && values.len() == dones.len(), "aligned arrays");
    let t_max = rewards.len();
    let mut adv = vec![0.0; t_max];
    let mut acc = 0.0;
    for t in (0..t_max).rev() {
        let not_done = if dones[t] { 0.0 } else { 1.0 };
        let next_value = if t + 1 < t_max { values[t + 1] } else { 0.0 };
        let delta = rewards[t] + gamma * not_done * next_value - values[t];
        acc = delta + gamma * lam * not_done * acc;
        adv[t] = acc;
    }
    let ret: Vec<f64> = adv.iter().zip(values.iter()).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// On-policy rollout data plus computed advantages and returns.
#[derive(Clone, Debug, Default)]
pub struct RolloutBatch {
    pub states: Vec<Vec<f64>>,
    pub skills: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub presquash: Vec<Vec<f64>>,
    pub log_probs_old: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub values: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn push(
        &mut self,
        state: Vec<f64>,
        skill: Vec<f64>,
        action: Vec<f64>,
        presquash: Vec<f64>,
        log_prob: f64,
        reward: f64,
        done: bool,
    ) {
        self.states.push(state);
        self.skills.push(skill);
        self.actions.push(action);
        self.presquash.push(presquash);
        self.log_probs_old.push(log_prob);
        self.rewards.push(reward);
        self.dones.push(done);
    }

    /// Fills values with the current critic, computes GAE, and optionally
    /// normalizes advantages to zero mean and unit variance.
    pub fn prepare(&mut self, value_net: &Mlp, cfg: &PpoConfig) -> Result<()> {
        self.values.clear();
        for i in 0..self.len() {
            let x = concat_input(&self.states[i], &self.skills[i]);
            self.values.push(value_net.forward(&x)?[0]);
        }
        let (adv, ret) = gae(&self.rewards, &self.values, &self.dones, cfg.gamma, cfg.gae_lambda);
        self.advantages = adv;
        self.returns = ret;
        if cfg.normalize_advantages && self.len() > 1 {
            let n = self.len() as f64;
            let mean = self.advantages.iter().sum::<f64>() / n;
            let var = self.advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
            let std = var.sqrt().max(1e-8);
            for a in &mut self.advantages {
                *a = (*a - mean) / std;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct PpoStats {
    pub pi_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub mean_ratio: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PpoOptState {
    pub pi_mean: OptState,
    pub pi_log_std: VecOptState,
    pub value: OptState,
}

impl PpoOptState {
    pub fn new(policy: &Policy, value: &Mlp) -> Self {
        PpoOptState {
            pi_mean: OptState::new(&policy.mean),
            pi_log_std: VecOptState::new(policy.log_std.len()),
            value: OptState::new(value),
        }
    }
}

/// Mean clipped surrogate `min(r A, clip(r) A)` over the given rows, as a
/// pure function of the policy. Shared by the update (through its gradient)
/// and by finite-difference checks.
pub fn clipped_surrogate_mean(
    policy: &Policy,
    batch: &RolloutBatch,
    rows: &[usize],
    clip: f64,
) -> Result<f64> {
    let mut total = 0.0;
    for &i in rows {
        let x = concat_input(&batch.states[i], &batch.skills[i]);
        let mu = policy.mean.forward(&x)?;
        let lp = policy.log_prob_presquash(&mu, &batch.presquash[i]);
        let ratio = (lp - batch.log_probs_old[i]).exp();
        let a = batch.advantages[i];
        let surr1 = ratio * a;
        let surr2 = ratio.clamp(1.0 - clip, 1.0 + clip) * a;
        total += surr1.min(surr2);
    }
    Ok(total / rows.len() as f64)
}

struct MinibatchGrads {
    mean: GradBundle,
    log_std: Vec<f64>,
    value: GradBundle,
    pi_loss: f64,
    value_loss: f64,
    clip_hits: usize,
    ratio_sum: f64,
}

/// Loss gradients for one minibatch. The policy loss is the negated clipped
/// surrogate minus the entropy bonus; the value loss is `vf_coef * MSE` to
/// the returns.
fn minibatch_grads(
    policy: &Policy,
    value_net: &Mlp,
    batch: &RolloutBatch,
    rows: &[usize],
    cfg: &PpoConfig,
) -> Result<MinibatchGrads> {
    let m = rows.len() as f64;
    let inv_m = 1.0 / m;
    let mut g = MinibatchGrads {
        mean: GradBundle::zeros_like(&policy.mean),
        log_std: vec![0.0; policy.log_std.len()],
        value: GradBundle::zeros_like(value_net),
        pi_loss: 0.0,
        value_loss: 0.0,
        clip_hits: 0,
        ratio_sum: 0.0,
    };
    for &i in rows {
        let x = concat_input(&batch.states[i], &batch.skills[i]);
        let mean_trace = policy.mean.trace(&x)?;
        let mu = mean_trace.output();
        let lp = policy.log_prob_presquash(mu, &batch.presquash[i]);
        let ratio = (lp - batch.log_probs_old[i]).exp();
        if !ratio.is_finite() {
            return Err(Error::NonFinite(format!(
                "importance ratio diverged at row {i}: new lp {lp}, old lp {}",
                batch.log_probs_old[i]
            )));
        }
        let a = batch.advantages[i];
        let surr1 = ratio * a;
        let surr2 = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip) * a;
        g.pi_loss -= surr1.min(surr2) * inv_m;
        g.ratio_sum += ratio;
        if (ratio - 1.0).abs() > cfg.clip {
            g.clip_hits += 1;
        }
        // d min(surr1, surr2) / d lp: zero when the clipped branch is
        // strictly smaller (the ratio sits beyond the clip boundary).
        let coef = if surr1 <= surr2 { a * ratio } else { 0.0 };
        if coef != 0.0 {
            // Upstream for the mean net: -(1/M) coef * d lp/d mu.
            let mut upstream = Vec::with_capacity(mu.len());
            for j in 0..mu.len() {
                let sigma = policy.log_std[j].exp();
                let dmu = (batch.presquash[i][j] - mu[j]) / (sigma * sigma);
                upstream.push(-inv_m * coef * dmu);
                let t = (batch.presquash[i][j] - mu[j]) / sigma;
                g.log_std[j] += -inv_m * coef * (t * t - 1.0);
            }
            policy.mean.backward_from_trace(&mean_trace, &upstream, &mut g.mean)?;
        }
        // Value loss: vf_coef * (v - R)^2 averaged over the minibatch.
        let value_trace = value_net.trace(&x)?;
        let err = value_trace.output()[0] - batch.returns[i];
        g.value_loss += cfg.vf_coef * err * err * inv_m;
        value_net.backward_from_trace(
            &value_trace,
            &[cfg.vf_coef * 2.0 * err * inv_m],
            &mut g.value,
        )?;
    }
    // Entropy bonus: d entropy / d log_std_j = 1.
    for gj in &mut g.log_std {
        *gj -= cfg.entropy_coef;
    }
    Ok(g)
}

/// Runs `cfg.epochs` shuffled minibatch passes of clipped-surrogate ascent
/// plus value regression. Aborts (without applying the offending step) on a
/// non-finite loss.
pub fn ppo_update(
    policy: &mut Policy,
    value_net: &mut Mlp,
    opt: &mut PpoOptState,
    batch: &RolloutBatch,
    cfg: &PpoConfig,
    rng: &mut ChaCha8Rng,
) -> Result<PpoStats> {
    cfg.validate()?;
    if batch.is_empty() {
        return Err(Error::Config("ppo_update on an empty batch".into()));
    }
    if batch.advantages.len() != batch.len() || batch.returns.len() != batch.len() {
        return Err(Error::Config("batch not prepared: advantages/returns missing".into()));
    }
    let adam = AdamConfig::with_lr(cfg.lr);
    let mut stats = PpoStats::default();
    let mut minibatches = 0usize;
    let mut clip_hits = 0usize;
    let mut ratio_sum = 0.0;
    let mut rows_seen = 0usize;
    let mut order: Vec<usize> = (0..batch.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.minibatch) {
            let g = minibatch_grads(policy, value_net, batch, chunk, cfg)?;
            if !g.pi_loss.is_finite() || !g.value_loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "ppo loss diverged: pi {}, value {}",
                    g.pi_loss, g.value_loss
                )));
            }
            opt_step(&mut policy.mean, &g.mean, &mut opt.pi_mean, &adam)?;
            opt_step_vec(&mut policy.log_std, &g.log_std, &mut opt.pi_log_std, &adam)?;
            policy.clamp_log_std();
            opt_step(value_net, &g.value, &mut opt.value, &adam)?;
            stats.pi_loss += g.pi_loss;
            stats.value_loss += g.value_loss;
            clip_hits += g.clip_hits;
            ratio_sum += g.ratio_sum;
            rows_seen += chunk.len();
            minibatches += 1;
        }
    }
    let mb = minibatches.max(1) as f64;
    stats.pi_loss /= mb;
    stats.value_loss /= mb;
    stats.entropy = policy.gaussian_entropy();
    stats.clip_fraction = clip_hits as f64 / rows_seen.max(1) as f64;
    stats.mean_ratio = ratio_sum / rows_seen.max(1) as f64;
    Ok(stats)
}

/// Policy-loss gradient for an explicit row set; exposed for gradient
/// checks.
pub fn policy_gradient(
    policy: &Policy,
    batch: &RolloutBatch,
    rows: &[usize],
    cfg: &PpoConfig,
) -> Result<(GradBundle, Vec<f64>)> {
    let value_stub = {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Mlp::new(&[policy.mean.in_dim(), 1], crate::nn::Activation::Linear, &mut rng)
    };
    let g = minibatch_grads(policy, &value_stub, batch, rows, cfg)?;
    Ok((g.mean, g.log_std))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn tiny_policy(seed: u64) -> Policy {
        Policy::new(4, 2, &[8], Activation::Elu, -0.5, &mut rng(seed))
    }

    #[test]
    fn sample_is_reproducible_per_seed() {
        let p = tiny_policy(1);
        let s = [0.1, -0.2];
        let z = [0.5, 0.5];
        let a1 = p.sample(&s, &z, &mut rng(9)).unwrap();
        let a2 = p.sample(&s, &z, &mut rng(9)).unwrap();
        assert_eq!(a1.action, a2.action);
        assert_eq!(a1.log_prob, a2.log_prob);
        let a3 = p.sample(&s, &z, &mut rng(10)).unwrap();
        assert_ne!(a1.action, a3.action);
    }

    #[test]
    fn clamped_log_std_collapses_to_mean() {
        let mut p = tiny_policy(2);
        for v in &mut p.log_std {
            *v = -40.0;
        }
        p.clamp_log_std();
        assert!(p.log_std.iter().all(|&v| v == LOG_STD_MIN));
        let s = [0.1, -0.2];
        let z = [0.3, 0.4];
        let mu = p.mean.forward(&concat_input(&s, &z)).unwrap();
        let sample = p.sample(&s, &z, &mut rng(3)).unwrap();
        for (a, m) in sample.action.iter().zip(mu.iter()) {
            assert!((a - m.tanh()).abs() < 1e-2, "a={a}, tanh(mu)={}", m.tanh());
        }
    }

    /// Midpoint quadrature of the squashed density over (-1, 1) integrates
    /// to 1 within 1e-3.
    #[test]
    fn squashed_density_integrates_to_one() {
        let mut p = Policy::new(1, 1, &[4], Activation::Elu, -0.3, &mut rng(4));
        p.log_std[0] = -0.2;
        let s = [0.4];
        let n = 200_000;
        let h = 2.0 / n as f64;
        let mut total = 0.0;
        for i in 0..n {
            let a = -1.0 + (i as f64 + 0.5) * h;
            match p.log_prob_action(&s, &[], &[a]) {
                Ok(lp) => total += lp.exp() * h,
                Err(_) => {}
            }
        }
        assert!((total - 1.0).abs() < 1e-3, "integral {total}");
    }

    #[test]
    fn gae_with_unit_discounts_sums_future_rewards() {
        let rewards = [1.0, 2.0, 3.0, 4.0];
        let values = [0.0; 4];
        let dones = [false, false, false, true];
        let (adv, ret) = gae(&rewards, &values, &dones, 1.0, 1.0);
        assert_eq!(adv, vec![10.0, 9.0, 7.0, 4.0]);
        assert_eq!(ret, adv);
    }

    #[test]
    fn gae_single_step_episode() {
        let (adv, _) = gae(&[2.0], &[0.5], &[true], 0.99, 0.95);
        assert!((adv[0] - (2.0 - 0.5)).abs() < 1e-15);
        // Non-terminal single row bootstraps zero by construction.
        let (adv, _) = gae(&[2.0], &[0.5], &[false], 0.99, 0.95);
        assert!((adv[0] - (2.0 - 0.5)).abs() < 1e-15);
    }

    /// O(T^2) oracle: advantage as the explicit discounted sum of TD errors.
    fn gae_oracle(r: &[f64], v: &[f64], d: &[bool], gamma: f64, lam: f64) -> Vec<f64> {
        let t_max = r.len();
        let mut adv = vec![0.0; t_max];
        for t in 0..t_max {
            let mut coef = 1.0;
            for l in t..t_max {
                let not_done = if d[l] { 0.0 } else { 1.0 };
                let next_v = if l + 1 < t_max { v[l + 1] } else { 0.0 };
                let delta = r[l] + gamma * not_done * next_v - v[l];
                adv[t] += coef * delta;
                if d[l] {
                    break;
                }
                coef *= gamma * lam;
            }
        }
        adv
    }

    #[test]
    fn gae_matches_quadratic_oracle() {
        let mut r = rng(5);
        for case in 0..50 {
            let t_max = 20;
            let rewards: Vec<f64> = (0..t_max).map(|_| r.gen_range(-1.0..1.0)).collect();
            let values: Vec<f64> = (0..t_max).map(|_| r.gen_range(-1.0..1.0)).collect();
            let dones: Vec<bool> = (0..t_max).map(|i| i == t_max - 1 || r.gen_bool(0.1)).collect();
            let (adv, ret) = gae(&rewards, &values, &dones, 0.99, 0.95);
            let oracle = gae_oracle(&rewards, &values, &dones, 0.99, 0.95);
            for t in 0..t_max {
                assert!(
                    (adv[t] - oracle[t]).abs() < 1e-10,
                    "case {case}, t {t}: {} vs {}",
                    adv[t],
                    oracle[t]
                );
                assert!((ret[t] - (adv[t] + values[t])).abs() < 1e-15);
            }
        }
    }

    fn synthetic_batch(policy: &Policy, n: usize, seed: u64) -> RolloutBatch {
        let mut r = rng(seed);
        let mut batch = RolloutBatch::default();
        for i in 0..n {
            let s: Vec<f64> = (0..2).map(|_| r.gen_range(-1.0..1.0)).collect();
            let z: Vec<f64> = (0..2).map(|_| r.gen_range(-1.0..1.0)).collect();
            let sample = policy.sample(&s, &z, &mut r).unwrap();
            batch.push(
                s,
                z,
                sample.action,
                sample.presquash,
                sample.log_prob,
                r.gen_range(-1.0..1.0),
                i % 10 == 9,
            );
        }
        batch
    }

    #[test]
    fn zero_advantages_leave_policy_bit_identical() {
        let mut policy = tiny_policy(6);
        let mut value = Mlp::new(&[4, 8, 1], Activation::Elu, &mut rng(7));
        let mut batch = synthetic_batch(&policy, 40, 8);
        let cfg = PpoConfig { entropy_coef: 0.0, minibatch: 16, ..PpoConfig::default() };
        batch.prepare(&value, &cfg).unwrap();
        for a in &mut batch.advantages {
            *a = 0.0;
        }
        let before = serde_json::to_string(&policy).unwrap();
        let value_before = serde_json::to_string(&value).unwrap();
        let mut opt = PpoOptState::new(&policy, &value);
        ppo_update(&mut policy, &mut value, &mut opt, &batch, &cfg, &mut rng(9)).unwrap();
        assert_eq!(serde_json::to_string(&policy).unwrap(), before);
        // The critic still learns.
        assert_ne!(serde_json::to_string(&value).unwrap(), value_before);
    }

    #[test]
    fn default_constants() {
        let cfg = PpoConfig::default();
        assert_eq!(cfg.clip, 0.2);
        assert_eq!(cfg.epochs, 5);
        assert_eq!(cfg.gamma, 0.99);
        assert_eq!(cfg.gae_lambda, 0.95);
        assert_eq!(cfg.entropy_coef, 1e-4);
        assert_eq!(cfg.lr, 1e-4);
    }

    #[test]
    fn surrogate_gradient_vanishes_beyond_clip_boundary() {
        let policy = tiny_policy(10);
        let mut batch = synthetic_batch(&policy, 1, 11);
        batch.values = vec![0.0];
        batch.returns = vec![0.0];
        batch.advantages = vec![1.0];
        // Push the ratio to exactly 1.5 by shifting the stored old log-prob.
        let lp_now = {
            let x = concat_input(&batch.states[0], &batch.skills[0]);
            let mu = policy.mean.forward(&x).unwrap();
            policy.log_prob_presquash(&mu, &batch.presquash[0])
        };
        batch.log_probs_old[0] = lp_now - 1.5f64.ln();
        let cfg = PpoConfig { entropy_coef: 0.0, ..PpoConfig::default() };
        let (grads, log_std_grads) = policy_gradient(&policy, &batch, &[0], &cfg).unwrap();
        for l in &grads.layers {
            assert!(l.dw.iter().all(|&g| g == 0.0));
            assert!(l.db.iter().all(|&g| g == 0.0));
        }
        assert!(log_std_grads.iter().all(|&g| g == 0.0));
        // Finite-difference confirmation on one weight.
        let mut perturbed = policy.clone();
        *perturbed.mean.layers[0].weight_mut(0, 0) += 1e-5;
        let f0 = clipped_surrogate_mean(&policy, &batch, &[0], cfg.clip).unwrap();
        let f1 = clipped_surrogate_mean(&perturbed, &batch, &[0], cfg.clip).unwrap();
        assert!((f1 - f0).abs() < 1e-12, "surrogate moved across the clip plateau");
    }

    #[test]
    fn clipped_surrogate_never_exceeds_unclipped() {
        let policy = tiny_policy(12);
        let mut batch = synthetic_batch(&policy, 64, 13);
        let mut r = rng(14);
        batch.advantages = (0..64).map(|_| r.gen_range(-2.0..2.0)).collect();
        batch.returns = vec![0.0; 64];
        for i in 0..64 {
            // Random offsets move ratios off 1.
            batch.log_probs_old[i] += r.gen_range(-0.7..0.7);
            let x = concat_input(&batch.states[i], &batch.skills[i]);
            let mu = policy.mean.forward(&x).unwrap();
            let lp = policy.log_prob_presquash(&mu, &batch.presquash[i]);
            let ratio = (lp - batch.log_probs_old[i]).exp();
            let a = batch.advantages[i];
            let clipped = ratio.clamp(0.8, 1.2) * a;
            assert!((ratio * a).min(clipped) <= ratio * a + 1e-15);
        }
    }

    #[test]
    fn update_is_deterministic_given_seed() {
        let run = || {
            let mut policy = tiny_policy(20);
            let mut value = Mlp::new(&[4, 8, 1], Activation::Elu, &mut rng(21));
            let mut batch = synthetic_batch(&policy, 50, 22);
            let cfg = PpoConfig { minibatch: 16, ..PpoConfig::default() };
            batch.prepare(&value, &cfg).unwrap();
            let mut opt = PpoOptState::new(&policy, &value);
            ppo_update(&mut policy, &mut value, &mut opt, &batch, &cfg, &mut rng(23)).unwrap();
            serde_json::to_string(&policy).unwrap()
        };
        assert_eq!(run(), run());
    }
}
