//! End-to-end training loop: per epoch, collect annotated episodes with the
//! current policy and representation snapshot, then update the
//! representation, the dual multiplier, the policy (PPO), and the skill
//! inference network, in that order. Also trains the downstream
//! hierarchical controller over a frozen low-level checkpoint.

use crate::checkpoint::{
    Checkpoint, CheckpointParams, HierCheckpoint, HierParams, RngState, CHECKPOINT_VERSION,
};
use crate::config::{DescriberBackendKind, RunConfig};
use crate::describer::{Annotator, Backend, CachedDescriber, DescriptionCache, LlmClient, LlmConfig};
use crate::embed::{cosine_distance, fnv1a64};
use crate::env::{self, EnvConfig};
use crate::error::{Error, Result};
use crate::nn::{dot, Activation, AdamConfig, Mlp, OptState};
use crate::ppo::{ppo_update, Policy, PpoConfig, PpoOptState, RolloutBatch};
use crate::skill::{
    dual_update, psi_update, repr_step, sample_skill, violation_fraction, DualState,
    TransitionView,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// One buffered step of Algorithm-style collection. `r` is the intrinsic
/// reward under the representation snapshot current at collection time;
/// `e_s` is the embedding of the start state's description.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub r: f64,
    pub s_next: Vec<f64>,
    pub d_lang: f64,
    pub e_s: Vec<f64>,
    pub z: Vec<f64>,
    pub done: bool,
    pub presquash: Vec<f64>,
    pub log_prob: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Buffer {
    pub records: Vec<TransitionRecord>,
}

impl Buffer {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn views(&self) -> Vec<TransitionView<'_>> {
        self.records
            .iter()
            .map(|r| TransitionView { s: &r.s, s_next: &r.s_next, z: &r.z, d_lang: r.d_lang })
            .collect()
    }
}

/// All learned objects plus the dual multiplier.
pub struct Components {
    pub policy: Policy,
    pub value: Mlp,
    pub phi: Mlp,
    pub psi: Mlp,
    pub dual: DualState,
}

impl Components {
    /// Deterministic initialization from the init RNG stream. The policy and
    /// value nets see `[state || skill]`; the representation maps states to
    /// the skill dimension; `psi` maps description embeddings to skills.
    pub fn init(config: &RunConfig, rng: &mut ChaCha8Rng) -> Components {
        let state_dim = config.env.state_dim();
        let d = config.skill.dim;
        let hidden = &config.trainer.hidden_sizes;
        let policy = Policy::new(
            state_dim + d,
            env::ACTION_DIM,
            hidden,
            Activation::Elu,
            config.trainer.log_std_init,
            rng,
        );
        let mut sizes = vec![state_dim + d];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let value = Mlp::new(&sizes, Activation::Elu, rng);
        let mut sizes = vec![state_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(d);
        let phi = Mlp::new(&sizes, Activation::Relu, rng);
        let mut sizes = vec![config.embedder.dim];
        sizes.extend_from_slice(hidden);
        sizes.push(d);
        let psi = Mlp::new(&sizes, Activation::Relu, rng);
        let dual = DualState::new(config.skill.lambda_init, config.skill.epsilon, config.skill.dual_lr);
        Components { policy, value, phi, psi, dual }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Components> {
        ckpt.validate()?;
        Ok(Components {
            policy: ckpt.params.pi.clone(),
            value: ckpt.params.v.clone(),
            phi: ckpt.params.phi.clone(),
            psi: ckpt.params.psi.clone(),
            dual: DualState::new(
                ckpt.lambda,
                ckpt.config.skill.epsilon,
                ckpt.config.skill.dual_lr,
            ),
        })
    }
}

/// Builds the configured describer/embedder pipeline, reloading a persisted
/// cache when one exists at the configured path.
pub fn make_annotator(config: &RunConfig) -> Result<Annotator> {
    let backend = match config.describer.backend {
        DescriberBackendKind::Rule => Backend::Rule,
        DescriberBackendKind::Constant => Backend::Constant,
        DescriberBackendKind::Llm => Backend::Llm(LlmClient::new(LlmConfig::from_env()?)),
    };
    let describer = match &config.describer.cache_path {
        Some(path) if path.exists() => {
            let cache = DescriptionCache::load(path)?;
            if cache.template != config.describer.template || cache.rho != config.describer.rho {
                return Err(Error::Config(format!(
                    "cache at {} was built for template {:?} at rho {}, config wants {:?} at {}",
                    path.display(),
                    cache.template,
                    cache.rho,
                    config.describer.template,
                    config.describer.rho
                )));
            }
            CachedDescriber::with_cache(backend, cache)
        }
        _ => CachedDescriber::new(config.describer.template, config.describer.rho, backend),
    };
    Ok(Annotator::new(describer, config.embedder.clone()))
}

#[inline]
fn step_reward(phi_s: &[f64], phi_next: &[f64], z: &[f64]) -> f64 {
    phi_next.iter().zip(phi_s.iter()).zip(z.iter()).map(|((b, a), zi)| (b - a) * zi).sum()
}

/// Collects `n_episodes` full episodes under an immutable policy and
/// representation snapshot. One skill per episode; every transition is
/// annotated with its language distance, start-state embedding, and
/// intrinsic reward.
pub fn collect_epoch(
    policy: &Policy,
    phi: &Mlp,
    env_cfg: &EnvConfig,
    annot: &mut Annotator,
    n_episodes: usize,
    skill_dim: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Buffer> {
    let mut buffer = Buffer::default();
    let horizon = env_cfg.episode_len;
    buffer.records.reserve(n_episodes * horizon);
    for _ in 0..n_episodes {
        let env_seed: u64 = rng.gen();
        let z = sample_skill(skill_dim, rng);
        let mut s = env::reset(env_cfg, env_seed);
        let mut emb_s = annot.annotate(&s)?.embedding;
        let mut phi_s = phi.forward(&s)?;
        for t in 0..horizon {
            let sample = policy.sample(&s, &z, rng)?;
            let s_next = env::step(&s, &sample.action, env_cfg)?;
            let emb_next = annot.annotate(&s_next)?.embedding;
            let phi_next = phi.forward(&s_next)?;
            let d_lang = cosine_distance(&emb_s, &emb_next)?;
            let r = step_reward(&phi_s, &phi_next, &z);
            buffer.records.push(TransitionRecord {
                s: s.clone(),
                a: sample.action,
                r,
                s_next: s_next.clone(),
                d_lang,
                e_s: emb_s.clone(),
                z: z.clone(),
                done: t + 1 == horizon,
                presquash: sample.presquash,
                log_prob: sample.log_prob,
            });
            s = s_next;
            emb_s = emb_next;
            phi_s = phi_next;
        }
    }
    Ok(buffer)
}

/// Update phases in their per-epoch order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Collect,
    ReprUpdate,
    DualUpdate,
    PolicyUpdate,
    PsiUpdate,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: u64,
    pub intrinsic_return_mean: f64,
    pub d_lang_mean: f64,
    pub lambda: f64,
    pub slack_mean: f64,
    pub violation_fraction: f64,
    pub repr_objective: f64,
    pub pi_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub mean_ratio: f64,
    pub psi_loss: f64,
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub buffer_len: usize,
}

pub struct TrainOutput {
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochStats>,
}

const ROLLOUT_STREAM: &str = "rollout";
const UPDATE_STREAM: &str = "update";
const INIT_STREAM: &str = "init";

pub fn stream_rng(seed: u64, stream: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a64(stream.as_bytes()));
    rng
}

pub fn train(config: &RunConfig) -> Result<TrainOutput> {
    train_full(config, None, &mut |_| {})
}

pub fn train_observed(config: &RunConfig, observer: &mut dyn FnMut(Phase)) -> Result<TrainOutput> {
    train_full(config, None, observer)
}

/// Full training entry point. When `out_dir` is given, a non-finite loss
/// aborts the run after persisting the offending epoch's buffer there for
/// debugging.
pub fn train_full(
    config: &RunConfig,
    out_dir: Option<&Path>,
    observer: &mut dyn FnMut(Phase),
) -> Result<TrainOutput> {
    config.validate()?;
    let seed = config.trainer.seed;
    let mut init_rng = stream_rng(seed, INIT_STREAM);
    let mut rollout_rng = stream_rng(seed, ROLLOUT_STREAM);
    let mut update_rng = stream_rng(seed, UPDATE_STREAM);
    let mut c = Components::init(config, &mut init_rng);
    let mut annot = make_annotator(config)?;
    let mut opt_phi = OptState::new(&c.phi);
    let mut opt_psi = OptState::new(&c.psi);
    let mut opt_ppo = PpoOptState::new(&c.policy, &c.value);
    let adam_phi = AdamConfig::with_lr(config.skill.repr_lr);
    let adam_psi = AdamConfig::with_lr(config.skill.psi_lr);
    let mut log = Vec::with_capacity(config.trainer.epochs);

    for epoch in 0..config.trainer.epochs {
        observer(Phase::Collect);
        let buffer = collect_epoch(
            &c.policy,
            &c.phi,
            &config.env,
            &mut annot,
            config.trainer.episodes_per_epoch,
            config.skill.dim,
            &mut rollout_rng,
        )?;
        let epoch_result = run_updates(config, &mut c, &buffer, &mut opt_phi, &mut opt_psi,
            &mut opt_ppo, &adam_phi, &adam_psi, &mut update_rng, observer);
        let mut stats = match epoch_result {
            Ok(st) => st,
            Err(e) => {
                if let Some(dir) = out_dir {
                    let _ = std::fs::create_dir_all(dir);
                    let _ = std::fs::write(
                        dir.join("failed_buffer.json"),
                        serde_json::to_string(&buffer)?,
                    );
                }
                return Err(e);
            }
        };
        stats.epoch = epoch as u64;
        stats.cache_hits = annot.describer.cache.hits;
        stats.cache_misses = annot.describer.cache.misses;
        log.push(stats);
    }

    if let Some(path) = &config.describer.cache_path {
        annot.describer.cache.save(path)?;
    }

    let checkpoint = Checkpoint {
        version: CHECKPOINT_VERSION,
        config: config.clone(),
        lambda: c.dual.lambda,
        params: CheckpointParams { pi: c.policy, v: c.value, phi: c.phi, psi: c.psi },
        rng: RngState {
            seed,
            rollout_word_pos: rollout_rng.get_word_pos().to_string(),
            update_word_pos: update_rng.get_word_pos().to_string(),
        },
        epoch: config.trainer.epochs as u64,
    };
    Ok(TrainOutput { checkpoint, log })
}

#[allow(clippy::too_many_arguments)]
fn run_updates(
    config: &RunConfig,
    c: &mut Components,
    buffer: &Buffer,
    opt_phi: &mut OptState,
    opt_psi: &mut OptState,
    opt_ppo: &mut PpoOptState,
    adam_phi: &AdamConfig,
    adam_psi: &AdamConfig,
    update_rng: &mut ChaCha8Rng,
    observer: &mut dyn FnMut(Phase),
) -> Result<EpochStats> {
    let views = buffer.views();
    let n = views.len();

    observer(Phase::ReprUpdate);
    let mut repr_obj_sum = 0.0;
    let mut repr_steps = 0usize;
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..config.skill.repr_passes {
        order.shuffle(update_rng);
        for chunk in order.chunks(config.skill.repr_minibatch) {
            let mb: Vec<TransitionView> = chunk.iter().map(|&i| views[i]).collect();
            repr_obj_sum += repr_step(&mut c.phi, opt_phi, adam_phi, &c.dual, &mb)?;
            repr_steps += 1;
        }
    }

    observer(Phase::DualUpdate);
    let slack_mean = dual_update(&mut c.dual, &c.phi, &views)?;

    observer(Phase::PolicyUpdate);
    let mut batch = RolloutBatch::default();
    for rec in &buffer.records {
        batch.push(
            rec.s.clone(),
            rec.z.clone(),
            rec.a.clone(),
            rec.presquash.clone(),
            rec.log_prob,
            rec.r,
            rec.done,
        );
    }
    batch.prepare(&c.value, &config.ppo)?;
    let ppo_stats = ppo_update(&mut c.policy, &mut c.value, opt_ppo, &batch, &config.ppo, update_rng)?;

    observer(Phase::PsiUpdate);
    let mut psi_loss_sum = 0.0;
    let mut psi_steps = 0usize;
    order.shuffle(update_rng);
    for chunk in order.chunks(config.skill.psi_minibatch) {
        let pairs: Vec<(&[f64], &[f64])> = chunk
            .iter()
            .map(|&i| (buffer.records[i].e_s.as_slice(), buffer.records[i].z.as_slice()))
            .collect();
        psi_loss_sum += psi_update(&mut c.psi, opt_psi, adam_psi, &pairs)?;
        psi_steps += 1;
    }

    let episodes = config.trainer.episodes_per_epoch as f64;
    let intrinsic_return_mean = buffer.records.iter().map(|r| r.r).sum::<f64>() / episodes;
    let d_lang_mean = buffer.records.iter().map(|r| r.d_lang).sum::<f64>() / n.max(1) as f64;
    Ok(EpochStats {
        epoch: 0,
        intrinsic_return_mean,
        d_lang_mean,
        lambda: c.dual.lambda,
        slack_mean,
        violation_fraction: violation_fraction(&c.phi, &views, 1e-3)?,
        repr_objective: repr_obj_sum / repr_steps.max(1) as f64,
        pi_loss: ppo_stats.pi_loss,
        value_loss: ppo_stats.value_loss,
        entropy: ppo_stats.entropy,
        clip_fraction: ppo_stats.clip_fraction,
        mean_ratio: ppo_stats.mean_ratio,
        psi_loss: psi_loss_sum / psi_steps.max(1) as f64,
        cache_hits: 0,
        cache_misses: 0,
        buffer_len: n,
    })
}

/// Serializes the run log as JSON lines: one object per epoch.
pub fn log_to_jsonl(log: &[EpochStats]) -> Result<String> {
    let mut out = String::new();
    for row in log {
        out.push_str(&serde_json::to_string(row)?);
        out.push('\n');
    }
    Ok(out)
}

/// Writes checkpoint, run log, and the resolved-config echo into `out_dir`.
pub fn save_artifacts(out_dir: &Path, config: &RunConfig, output: &TrainOutput) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    output.checkpoint.save(&out_dir.join("checkpoint.json"))?;
    let mut f = std::fs::File::create(out_dir.join("run_log.jsonl"))?;
    f.write_all(log_to_jsonl(&output.log)?.as_bytes())?;
    std::fs::write(out_dir.join("config_resolved.json"), config.to_pretty_json()?)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Downstream hierarchical controller.
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HierEpochStats {
    pub epoch: u64,
    pub success_rate: f64,
    pub pi_loss: f64,
    pub value_loss: f64,
}

pub struct HierOutput {
    pub checkpoint: HierCheckpoint,
    pub log: Vec<HierEpochStats>,
    /// Success rate of the trained controller on a fresh evaluation set.
    pub final_success: f64,
}

fn normalize_skill(a: &[f64]) -> Vec<f64> {
    let norm = dot(a, a).sqrt().max(1e-6);
    a.iter().map(|v| v / norm).collect()
}

fn sample_goal(config: &RunConfig, rng: &mut ChaCha8Rng) -> [f64; 2] {
    let h = &config.hier;
    [
        rng.gen_range(h.goal_min[0]..=h.goal_max[0]),
        rng.gen_range(h.goal_min[1]..=h.goal_max[1]),
    ]
}

fn goal_reached(kind: crate::env::EnvKind, state: &[f64], goal: &[f64; 2], radius: f64) -> bool {
    let pos = env::relevant_position(kind, state);
    let d2 = (pos[0] - goal[0]).powi(2) + (pos[1] - goal[1]).powi(2);
    d2.sqrt() <= radius
}

/// One high-level episode: the controller emits a skill every
/// `steps_per_decision` low-level steps; reward 1 and termination on
/// reaching the goal. Returns the collected high-level transitions and
/// whether the goal was reached.
fn hier_episode(
    low_policy: &Policy,
    high_policy: &Policy,
    config: &RunConfig,
    goal: [f64; 2],
    env_seed: u64,
    rng: &mut ChaCha8Rng,
    batch: Option<&mut RolloutBatch>,
) -> Result<bool> {
    let env_cfg = &config.env;
    let mut s = env::reset(env_cfg, env_seed);
    if goal_reached(env_cfg.kind, &s, &goal, config.hier.goal_radius) {
        return Ok(true);
    }
    let mut local = RolloutBatch::default();
    let mut success = false;
    let mut low_steps = 0usize;
    'outer: while low_steps < env_cfg.episode_len {
        let sample = high_policy.sample(&s, &goal, rng)?;
        let z = normalize_skill(&sample.action);
        let s_at_decision = s.clone();
        let mut reward = 0.0;
        for _ in 0..config.hier.steps_per_decision {
            if low_steps >= env_cfg.episode_len {
                break;
            }
            let low_sample = low_policy.sample(&s, &z, rng)?;
            s = env::step(&s, &low_sample.action, env_cfg)?;
            low_steps += 1;
            if goal_reached(env_cfg.kind, &s, &goal, config.hier.goal_radius) {
                reward = 1.0;
                success = true;
                break;
            }
        }
        let done = success || low_steps >= env_cfg.episode_len;
        local.push(
            s_at_decision,
            goal.to_vec(),
            sample.action,
            sample.presquash,
            sample.log_prob,
            reward,
            done,
        );
        if done {
            break 'outer;
        }
    }
    if let Some(batch) = batch {
        batch.states.extend(local.states);
        batch.skills.extend(local.skills);
        batch.actions.extend(local.actions);
        batch.presquash.extend(local.presquash);
        batch.log_probs_old.extend(local.log_probs_old);
        batch.rewards.extend(local.rewards);
        batch.dones.extend(local.dones);
    }
    Ok(success)
}

/// Success rate of a high-level controller over fresh goals.
pub fn evaluate_hier(
    low_policy: &Policy,
    high_policy: &Policy,
    config: &RunConfig,
    episodes: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = stream_rng(seed, "hier-eval");
    let mut successes = 0usize;
    for _ in 0..episodes {
        let goal = sample_goal(config, &mut rng);
        let env_seed: u64 = rng.gen();
        if hier_episode(low_policy, high_policy, config, goal, env_seed, &mut rng, None)? {
            successes += 1;
        }
    }
    Ok(successes as f64 / episodes.max(1) as f64)
}

/// Trains the high-level controller `pi_high(z | s, g)` over the frozen
/// low-level policy from `low`, with the same PPO machinery.
pub fn train_hier(config: &RunConfig, low: &Checkpoint) -> Result<HierOutput> {
    config.validate()?;
    let low_c = Components::from_checkpoint(low)?;
    let state_dim = config.env.state_dim();
    let seed = config.trainer.seed;
    let mut init_rng = stream_rng(seed, "hier-init");
    let mut rollout_rng = stream_rng(seed, "hier-rollout");
    let mut update_rng = stream_rng(seed, "hier-update");
    let mut high_policy = Policy::new(
        state_dim + 2,
        config.skill.dim,
        &config.trainer.hidden_sizes,
        Activation::Elu,
        config.trainer.log_std_init,
        &mut init_rng,
    );
    let mut sizes = vec![state_dim + 2];
    sizes.extend_from_slice(&config.trainer.hidden_sizes);
    sizes.push(1);
    let mut high_value = Mlp::new(&sizes, Activation::Elu, &mut init_rng);
    let mut opt = PpoOptState::new(&high_policy, &high_value);
    let ppo_cfg = PpoConfig { lr: config.hier.lr, ..config.ppo };
    let mut log = Vec::with_capacity(config.hier.epochs);
    for epoch in 0..config.hier.epochs {
        let mut batch = RolloutBatch::default();
        let mut successes = 0usize;
        for _ in 0..config.hier.episodes_per_epoch {
            let goal = sample_goal(config, &mut rollout_rng);
            let env_seed: u64 = rollout_rng.gen();
            if hier_episode(
                &low_c.policy,
                &high_policy,
                config,
                goal,
                env_seed,
                &mut rollout_rng,
                Some(&mut batch),
            )? {
                successes += 1;
            }
        }
        if batch.is_empty() {
            // Every goal was satisfied at reset; nothing to learn from.
            log.push(HierEpochStats {
                epoch: epoch as u64,
                success_rate: 1.0,
                pi_loss: 0.0,
                value_loss: 0.0,
            });
            continue;
        }
        batch.prepare(&high_value, &ppo_cfg)?;
        let stats = ppo_update(&mut high_policy, &mut high_value, &mut opt, &batch, &ppo_cfg, &mut update_rng)?;
        log.push(HierEpochStats {
            epoch: epoch as u64,
            success_rate: successes as f64 / config.hier.episodes_per_epoch as f64,
            pi_loss: stats.pi_loss,
            value_loss: stats.value_loss,
        });
    }
    let final_success = evaluate_hier(&low_c.policy, &high_policy, config, 100, seed ^ 0x5eed)?;
    let checkpoint = HierCheckpoint {
        version: CHECKPOINT_VERSION,
        kind: "hier".to_string(),
        config: config.clone(),
        params: HierParams { pi_high: high_policy, v_high: high_value },
        low_checkpoint_id: low.content_id()?,
        epoch: config.hier.epochs as u64,
    };
    Ok(HierOutput { checkpoint, log, final_success })
}
