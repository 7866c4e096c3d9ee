//! Quantitative evaluation: state coverage, object moved distance, zero-shot
//! language-goal success, and trajectory/latent-trace artifacts (CSV and
//! SVG). All emitted files are byte-deterministic given (checkpoint, seed).

use crate::checkpoint::Checkpoint;
use crate::describer::Annotator;
use crate::embed::cosine_distance;
use crate::env::{self, EnvKind};
use crate::error::{Error, Result};
use crate::nn::{dot, Mlp};
use crate::ppo::Policy;
use crate::skill::{infer_skill, sample_skill};
use crate::trainer::{make_annotator, stream_rng, Components};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;
use std::fmt::Write as _;

#[derive(Clone, Debug, PartialEq)]
pub struct TraceStep {
    pub t: usize,
    pub state: Vec<f64>,
    pub reward: f64,
    pub d_lang: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeTrace {
    pub skill: Vec<f64>,
    /// Steps 0..=T; step 0 carries the reset state with zero reward.
    pub steps: Vec<TraceStep>,
}

impl EpisodeTrace {
    pub fn terminal_state(&self) -> &[f64] {
        &self.steps.last().expect("episode has at least the reset step").state
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectorySet {
    pub episodes: Vec<EpisodeTrace>,
    pub env_kind: EnvKind,
    pub skill_dim: usize,
    pub checkpoint_id: String,
    pub seed: u64,
}

/// Rolls out one episode under a fixed skill, annotating per-step language
/// distance.
pub fn rollout_with_skill(
    policy: &Policy,
    phi: &Mlp,
    env_cfg: &env::EnvConfig,
    annot: &mut Annotator,
    skill: &[f64],
    env_seed: u64,
    rng: &mut ChaCha8Rng,
) -> Result<EpisodeTrace> {
    let mut s = env::reset(env_cfg, env_seed);
    let mut emb = annot.annotate(&s)?.embedding;
    let mut phi_s = phi.forward(&s)?;
    let mut steps =
        vec![TraceStep { t: 0, state: s.clone(), reward: 0.0, d_lang: 0.0 }];
    for t in 1..=env_cfg.episode_len {
        let sample = policy.sample(&s, skill, rng)?;
        let s_next = env::step(&s, &sample.action, env_cfg)?;
        let emb_next = annot.annotate(&s_next)?.embedding;
        let phi_next = phi.forward(&s_next)?;
        let d_lang = cosine_distance(&emb, &emb_next)?;
        let reward: f64 = phi_next
            .iter()
            .zip(phi_s.iter())
            .zip(skill.iter())
            .map(|((b, a), z)| (b - a) * z)
            .sum();
        steps.push(TraceStep { t, state: s_next.clone(), reward, d_lang });
        s = s_next;
        emb = emb_next;
        phi_s = phi_next;
    }
    Ok(EpisodeTrace { skill: skill.to_vec(), steps })
}

/// Samples `n_episodes` skills from the prior and rolls each out once.
pub fn rollout_skills(ckpt: &Checkpoint, n_episodes: usize, seed: u64) -> Result<TrajectorySet> {
    let c = Components::from_checkpoint(ckpt)?;
    let mut annot = make_annotator(&ckpt.config)?;
    let mut rng = stream_rng(seed, "eval-rollout");
    let mut episodes = Vec::with_capacity(n_episodes);
    for _ in 0..n_episodes {
        let env_seed: u64 = rng.gen();
        let skill = sample_skill(ckpt.config.skill.dim, &mut rng);
        episodes.push(rollout_with_skill(
            &c.policy,
            &c.phi,
            &ckpt.config.env,
            &mut annot,
            &skill,
            env_seed,
            &mut rng,
        )?);
    }
    Ok(TrajectorySet {
        episodes,
        env_kind: ckpt.config.env.kind,
        skill_dim: ckpt.config.skill.dim,
        checkpoint_id: ckpt.content_id()?,
        seed,
    })
}

/// Uniform-random-action rollouts with the same episode budget; the
/// coverage baseline.
pub fn rollout_random(
    env_cfg: &env::EnvConfig,
    n_episodes: usize,
    skill_dim: usize,
    seed: u64,
) -> Result<TrajectorySet> {
    let mut rng = stream_rng(seed, "eval-random");
    let mut episodes = Vec::with_capacity(n_episodes);
    for _ in 0..n_episodes {
        let env_seed: u64 = rng.gen();
        let mut s = env::reset(env_cfg, env_seed);
        let mut steps =
            vec![TraceStep { t: 0, state: s.clone(), reward: 0.0, d_lang: 0.0 }];
        for t in 1..=env_cfg.episode_len {
            let a = [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)];
            s = env::step(&s, &a, env_cfg)?;
            steps.push(TraceStep { t, state: s.clone(), reward: 0.0, d_lang: 0.0 });
        }
        episodes.push(EpisodeTrace { skill: vec![0.0; skill_dim], steps });
    }
    Ok(TrajectorySet {
        episodes,
        env_kind: env_cfg.kind,
        skill_dim,
        checkpoint_id: "random-policy".to_string(),
        seed,
    })
}

fn cell_of(pos: [f64; 2], cell_size: f64) -> (i64, i64) {
    ((pos[0] / cell_size).floor() as i64, (pos[1] / cell_size).floor() as i64)
}

/// Distinct grid cells visited by the relevant position across all episodes.
pub fn coverage_cells(trajs: &TrajectorySet, cell_size: f64) -> BTreeSet<(i64, i64)> {
    assert!(cell_size > 0.0, "cell size must be positive");
    let mut cells = BTreeSet::new();
    for ep in &trajs.episodes {
        for step in &ep.steps {
            cells.insert(cell_of(env::relevant_position(trajs.env_kind, &step.state), cell_size));
        }
    }
    cells
}

pub fn coverage(trajs: &TrajectorySet, cell_size: f64) -> usize {
    coverage_cells(trajs, cell_size).len()
}

/// Mean over episodes of the object's net displacement. Pusher only.
pub fn moved_distance(trajs: &TrajectorySet) -> Result<f64> {
    if trajs.env_kind != EnvKind::Pusher {
        return Err(Error::Config("moved_distance requires pusher trajectories".into()));
    }
    if trajs.episodes.is_empty() {
        return Err(Error::Config("moved_distance over zero episodes".into()));
    }
    let mut total = 0.0;
    for ep in &trajs.episodes {
        let first = env::relevant_position(trajs.env_kind, &ep.steps[0].state);
        let last = env::relevant_position(trajs.env_kind, ep.terminal_state());
        total += ((last[0] - first[0]).powi(2) + (last[1] - first[1]).powi(2)).sqrt();
    }
    Ok(total / trajs.episodes.len() as f64)
}

/// Parses goal coordinates out of a position-template sentence such as
/// `The robot's x, y position is [0.30, 0.30]`.
pub fn parse_goal_coords(text: &str) -> Result<[f64; 2]> {
    let open = text
        .rfind('[')
        .ok_or_else(|| Error::Parse(format!("goal text has no coordinate block: {text:?}")))?;
    let close = text[open..]
        .find(']')
        .map(|i| open + i)
        .ok_or_else(|| Error::Parse(format!("unterminated coordinate block: {text:?}")))?;
    let parts: Vec<&str> = text[open + 1..close].split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(Error::Parse(format!("expected two coordinates in: {text:?}")));
    }
    let x: f64 = parts[0]
        .parse()
        .map_err(|e| Error::Parse(format!("bad x coordinate {:?}: {e}", parts[0])))?;
    let y: f64 = parts[1]
        .parse()
        .map_err(|e| Error::Parse(format!("bad y coordinate {:?}: {e}", parts[1])))?;
    Ok([x, y])
}

#[derive(Clone, Debug)]
pub struct GoalReport {
    pub goal: [f64; 2],
    pub skill: Vec<f64>,
    pub success_rate: f64,
    pub terminal_positions: Vec<[f64; 2]>,
}

/// Zero-shot goal evaluation: infer the skill from the goal text, roll out
/// `n_episodes` with it, and count episodes whose terminal relevant position
/// lies within `radius` of the goal coordinates.
pub fn zero_shot_goal(
    ckpt: &Checkpoint,
    goal_text: &str,
    radius: f64,
    n_episodes: usize,
    seed: u64,
) -> Result<GoalReport> {
    if n_episodes == 0 {
        return Err(Error::Config("zero-shot evaluation needs at least one episode".into()));
    }
    let c = Components::from_checkpoint(ckpt)?;
    let goal = parse_goal_coords(goal_text)?;
    let skill = infer_skill(
        &c.psi,
        goal_text,
        &ckpt.config.embedder,
        ckpt.config.skill.normalize_inferred,
    )?;
    let mut annot = make_annotator(&ckpt.config)?;
    let mut rng = stream_rng(seed, "goal-eval");
    let mut terminal_positions = Vec::with_capacity(n_episodes);
    let mut successes = 0usize;
    for _ in 0..n_episodes {
        let env_seed: u64 = rng.gen();
        let ep = rollout_with_skill(
            &c.policy,
            &c.phi,
            &ckpt.config.env,
            &mut annot,
            &skill,
            env_seed,
            &mut rng,
        )?;
        let pos = env::relevant_position(ckpt.config.env.kind, ep.terminal_state());
        let hit = ((pos[0] - goal[0]).powi(2) + (pos[1] - goal[1]).powi(2)).sqrt() <= radius;
        if hit {
            successes += 1;
        }
        terminal_positions.push(pos);
    }
    Ok(GoalReport {
        goal,
        skill,
        success_rate: successes as f64 / n_episodes as f64,
        terminal_positions,
    })
}

/// Mean cosine between the episode's representation displacement
/// `phi(s_T) - phi(s_0)` and its skill.
pub fn latent_alignment(phi: &Mlp, trajs: &TrajectorySet) -> Result<f64> {
    let mut total = 0.0;
    let mut counted = 0usize;
    for ep in &trajs.episodes {
        let first = phi.forward(&ep.steps[0].state)?;
        let last = phi.forward(ep.terminal_state())?;
        let delta: Vec<f64> = last.iter().zip(first.iter()).map(|(l, f)| l - f).collect();
        let dn = dot(&delta, &delta).sqrt();
        let zn = dot(&ep.skill, &ep.skill).sqrt();
        if dn == 0.0 || zn == 0.0 {
            continue;
        }
        total += dot(&delta, &ep.skill) / (dn * zn);
        counted += 1;
    }
    if counted == 0 {
        return Err(Error::Degenerate("no episodes with nonzero displacement".into()));
    }
    Ok(total / counted as f64)
}

// ---------------------------------------------------------------------------
// File artifacts.
// ---------------------------------------------------------------------------

/// Trajectory CSV: `episode,t,z0..z{D-1},s0..s{K-1},reward,d_lang`. Floats
/// use the shortest round-trip representation, so parsing the file back
/// recovers the emitted values exactly.
pub fn trajectories_to_csv(trajs: &TrajectorySet) -> String {
    let state_dim = trajs.env_kind.state_dim();
    let mut out = String::from("episode,t");
    for i in 0..trajs.skill_dim {
        let _ = write!(out, ",z{i}");
    }
    for i in 0..state_dim {
        let _ = write!(out, ",s{i}");
    }
    out.push_str(",reward,d_lang\n");
    for (e, ep) in trajs.episodes.iter().enumerate() {
        for step in &ep.steps {
            let _ = write!(out, "{e},{}", step.t);
            for z in &ep.skill {
                let _ = write!(out, ",{z}");
            }
            for s in &step.state {
                let _ = write!(out, ",{s}");
            }
            let _ = writeln!(out, ",{},{}", step.reward, step.d_lang);
        }
    }
    out
}

/// Parses a trajectory CSV produced by `trajectories_to_csv`. The state
/// width identifies the environment (2 for the point mass, 4 for the
/// pusher).
pub fn trajectories_from_csv(csv: &str) -> Result<TrajectorySet> {
    let mut lines = csv.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty trajectory CSV".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    let skill_dim = cols.iter().filter(|c| c.starts_with('z')).count();
    let state_dim = cols.iter().filter(|c| c.starts_with('s')).count();
    let env_kind = match state_dim {
        2 => EnvKind::PointMass2d,
        4 => EnvKind::Pusher,
        other => return Err(Error::Parse(format!("unsupported state width {other}"))),
    };
    if cols.len() != 2 + skill_dim + state_dim + 2 {
        return Err(Error::Parse(format!("unexpected header: {header}")));
    }
    let mut episodes: Vec<EpisodeTrace> = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(Error::Parse(format!("row {} has {} fields", ln + 2, fields.len())));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|e| Error::Parse(format!("row {}: {e}", ln + 2)))
        };
        let episode: usize = fields[0]
            .parse()
            .map_err(|e| Error::Parse(format!("row {}: bad episode: {e}", ln + 2)))?;
        let t: usize = fields[1]
            .parse()
            .map_err(|e| Error::Parse(format!("row {}: bad t: {e}", ln + 2)))?;
        let skill: Vec<f64> =
            fields[2..2 + skill_dim].iter().map(|s| parse(s)).collect::<Result<_>>()?;
        let state: Vec<f64> = fields[2 + skill_dim..2 + skill_dim + state_dim]
            .iter()
            .map(|s| parse(s))
            .collect::<Result<_>>()?;
        let reward = parse(fields[cols.len() - 2])?;
        let d_lang = parse(fields[cols.len() - 1])?;
        if episode == episodes.len() {
            episodes.push(EpisodeTrace { skill: skill.clone(), steps: Vec::new() });
        }
        let ep = episodes
            .get_mut(episode)
            .ok_or_else(|| Error::Parse(format!("row {}: episodes out of order", ln + 2)))?;
        if let Some(last) = ep.steps.last() {
            if t <= last.t {
                return Err(Error::Parse(format!("row {}: t not increasing", ln + 2)));
            }
        }
        ep.steps.push(TraceStep { t, state, reward, d_lang });
    }
    if episodes.is_empty() {
        return Err(Error::Parse("trajectory CSV has no rows".into()));
    }
    Ok(TrajectorySet {
        episodes,
        env_kind,
        skill_dim,
        checkpoint_id: String::new(),
        seed: 0,
    })
}

/// Latent trace CSV for one episode: `t,phi0..phi{D-1}`.
pub fn latent_trace_csv(phi: &Mlp, episode: &EpisodeTrace) -> Result<String> {
    let d = phi.out_dim();
    let mut out = String::from("t");
    for i in 0..d {
        let _ = write!(out, ",phi{i}");
    }
    out.push('\n');
    for step in &episode.steps {
        let latent = phi.forward(&step.state)?;
        let _ = write!(out, "{}", step.t);
        for v in &latent {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    Ok(out)
}

fn svg_coord(v: f64, min: f64, max: f64, size: f64, pad: f64) -> f64 {
    let span = (max - min).max(1e-12);
    pad + (v - min) / span * (size - 2.0 * pad)
}

/// Plain SVG 1.1 drawing of a 2-D latent path with the episode's skill
/// direction drawn as an arrow from the path start.
pub fn latent_trace_svg(phi: &Mlp, episode: &EpisodeTrace) -> Result<String> {
    if phi.out_dim() != 2 {
        return Err(Error::Config(format!(
            "latent drawing needs a 2-d representation, got {}",
            phi.out_dim()
        )));
    }
    let mut pts = Vec::with_capacity(episode.steps.len());
    for step in &episode.steps {
        let l = phi.forward(&step.state)?;
        pts.push((l[0], l[1]));
    }
    let (mut min_x, mut max_x, mut min_y, mut max_y) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    let zn = dot(&episode.skill, &episode.skill).sqrt().max(1e-9);
    let arrow = (
        pts[0].0 + episode.skill[0] / zn,
        pts[0].1 + episode.skill[1] / zn,
    );
    for &(x, y) in pts.iter().chain(std::iter::once(&arrow)) {
        min_x = min_x.min(x);
        max_x = max_x.max(x);
        min_y = min_y.min(y);
        max_y = max_y.max(y);
    }
    let (size, pad) = (480.0, 24.0);
    let map = |x: f64, y: f64| {
        (
            svg_coord(x, min_x, max_x, size, pad),
            // SVG y grows downward.
            size - svg_coord(y, min_y, max_y, size, pad),
        )
    };
    let mut path = String::new();
    for (i, &(x, y)) in pts.iter().enumerate() {
        let (px, py) = map(x, y);
        let _ = write!(path, "{}{px:.2},{py:.2}", if i == 0 { "M" } else { " L" });
    }
    let (ax0, ay0) = map(pts[0].0, pts[0].1);
    let (ax1, ay1) = map(arrow.0, arrow.1);
    Ok(format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" ",
            "width=\"{s}\" height=\"{s}\" viewBox=\"0 0 {s} {s}\">\n",
            "<rect width=\"{s}\" height=\"{s}\" fill=\"white\"/>\n",
            "<path d=\"{path}\" fill=\"none\" stroke=\"crimson\" stroke-width=\"1.5\"/>\n",
            "<line x1=\"{ax0:.2}\" y1=\"{ay0:.2}\" x2=\"{ax1:.2}\" y2=\"{ay1:.2}\" ",
            "stroke=\"black\" stroke-width=\"1.5\"/>\n",
            "<circle cx=\"{ax0:.2}\" cy=\"{ay0:.2}\" r=\"3\" fill=\"black\"/>\n",
            "</svg>\n"
        ),
        s = 480,
        path = path,
        ax0 = ax0,
        ay0 = ay0,
        ax1 = ax1,
        ay1 = ay1,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;
    use crate::trainer;

    fn init_checkpoint(cfg: &RunConfig) -> Checkpoint {
        let mut cfg = cfg.clone();
        cfg.trainer.epochs = 0;
        trainer::train(&cfg).unwrap().checkpoint
    }

    fn stationary_set() -> TrajectorySet {
        TrajectorySet {
            episodes: vec![EpisodeTrace {
                skill: vec![1.0, 0.0],
                steps: (0..5)
                    .map(|t| TraceStep { t, state: vec![0.2, 0.3], reward: 0.0, d_lang: 0.0 })
                    .collect(),
            }],
            env_kind: EnvKind::PointMass2d,
            skill_dim: 2,
            checkpoint_id: "test".into(),
            seed: 0,
        }
    }

    #[test]
    fn stationary_episode_covers_one_cell() {
        assert_eq!(coverage(&stationary_set(), 0.05), 1);
    }

    #[test]
    fn straight_line_coverage_matches_geometry() {
        let steps: Vec<TraceStep> = (0..=40)
            .map(|t| TraceStep {
                t,
                state: vec![t as f64 * 0.02, 0.0],
                reward: 0.0,
                d_lang: 0.0,
            })
            .collect();
        let set = TrajectorySet {
            episodes: vec![EpisodeTrace { skill: vec![1.0, 0.0], steps }],
            env_kind: EnvKind::PointMass2d,
            skill_dim: 2,
            checkpoint_id: "test".into(),
            seed: 0,
        };
        // Length 0.8 at cell 0.05: between 16 and 17 cells.
        let c = coverage(&set, 0.05);
        assert!((16..=17).contains(&c), "coverage {c}");
    }

    #[test]
    fn coverage_is_monotone_in_episodes() {
        let cfg = RunConfig::default();
        let ckpt = init_checkpoint(&cfg);
        let mut set = rollout_skills(&ckpt, 6, 3).unwrap();
        let mut prev = 0;
        let all = set.episodes.clone();
        set.episodes.clear();
        for ep in all {
            set.episodes.push(ep);
            let c = coverage(&set, 0.05);
            assert!(c >= prev);
            prev = c;
        }
    }

    #[test]
    fn moved_distance_zero_when_untouched_and_exact_when_pushed() {
        let mk = |obj_end: [f64; 2]| TrajectorySet {
            episodes: vec![EpisodeTrace {
                skill: vec![0.0, 0.0],
                steps: vec![
                    TraceStep { t: 0, state: vec![0.8, 0.0, 0.0, 0.0], reward: 0.0, d_lang: 0.0 },
                    TraceStep {
                        t: 1,
                        state: vec![0.5, 0.0, obj_end[0], obj_end[1]],
                        reward: 0.0,
                        d_lang: 0.0,
                    },
                ],
            }],
            env_kind: EnvKind::Pusher,
            skill_dim: 2,
            checkpoint_id: "test".into(),
            seed: 0,
        };
        assert_eq!(moved_distance(&mk([0.0, 0.0])).unwrap(), 0.0);
        assert!((moved_distance(&mk([0.3, 0.0])).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn moved_distance_ignores_arm_only_motion_and_rejects_point_env() {
        let set = stationary_set();
        assert!(moved_distance(&set).is_err());
    }

    #[test]
    fn goal_text_parsing() {
        assert_eq!(
            parse_goal_coords("The robot's x, y position is [0.30, 0.30]").unwrap(),
            [0.30, 0.30]
        );
        assert_eq!(
            parse_goal_coords("Description: The object's x, y position is [-0.20, 0.45].").unwrap(),
            [-0.20, 0.45]
        );
        assert!(parse_goal_coords("The distance is 0.50 units.").is_err());
        assert!(parse_goal_coords("position is [a, b]").is_err());
    }

    #[test]
    fn arena_spanning_radius_always_succeeds() {
        let cfg = RunConfig::default();
        let ckpt = init_checkpoint(&cfg);
        let report =
            zero_shot_goal(&ckpt, "The robot's x, y position is [0.30, 0.30]", 10.0, 4, 1).unwrap();
        assert_eq!(report.success_rate, 1.0);
        assert_eq!(report.terminal_positions.len(), 4);
    }

    #[test]
    fn zero_radius_practically_never_succeeds() {
        let cfg = RunConfig::default();
        let ckpt = init_checkpoint(&cfg);
        let report =
            zero_shot_goal(&ckpt, "The robot's x, y position is [0.30, 0.30]", 0.0, 4, 2).unwrap();
        assert_eq!(report.success_rate, 0.0);
    }

    #[test]
    fn zero_episodes_is_an_error() {
        let cfg = RunConfig::default();
        let ckpt = init_checkpoint(&cfg);
        assert!(zero_shot_goal(&ckpt, "The robot's x, y position is [0.30, 0.30]", 0.1, 0, 3)
            .is_err());
    }

    #[test]
    fn trajectory_csv_round_trips_exactly() {
        let cfg = RunConfig::default();
        let ckpt = init_checkpoint(&cfg);
        let set = rollout_skills(&ckpt, 3, 7).unwrap();
        let csv = trajectories_to_csv(&set);
        let back = trajectories_from_csv(&csv).unwrap();
        assert_eq!(back.episodes.len(), set.episodes.len());
        for (a, b) in back.episodes.iter().zip(set.episodes.iter()) {
            assert_eq!(a.skill, b.skill);
            assert_eq!(a.steps.len(), b.steps.len());
            for (sa, sb) in a.steps.iter().zip(b.steps.iter()) {
                assert_eq!(sa.state, sb.state);
                assert_eq!(sa.reward, sb.reward);
                assert_eq!(sa.d_lang, sb.d_lang);
            }
        }
    }

    #[test]
    fn emitted_artifacts_are_byte_deterministic() {
        let cfg = RunConfig::default();
        let ckpt = init_checkpoint(&cfg);
        let a = rollout_skills(&ckpt, 2, 11).unwrap();
        let b = rollout_skills(&ckpt, 2, 11).unwrap();
        assert_eq!(trajectories_to_csv(&a), trajectories_to_csv(&b));
        let c = Components::from_checkpoint(&ckpt).unwrap();
        assert_eq!(
            latent_trace_svg(&c.phi, &a.episodes[0]).unwrap(),
            latent_trace_svg(&c.phi, &b.episodes[0]).unwrap()
        );
    }

    #[test]
    fn constant_episode_has_a_single_latent_point() {
        let cfg = RunConfig::default();
        let ckpt = init_checkpoint(&cfg);
        let c = Components::from_checkpoint(&ckpt).unwrap();
        let set = stationary_set();
        let csv = latent_trace_csv(&c.phi, &set.episodes[0]).unwrap();
        let rows: Vec<&str> = csv.lines().skip(1).collect();
        let first_latent = rows[0].split_once(',').unwrap().1.to_string();
        for row in rows {
            assert_eq!(row.split_once(',').unwrap().1, first_latent);
        }
    }

    #[test]
    fn latent_svg_is_valid_and_rejects_higher_dims() {
        let cfg = RunConfig::default();
        let ckpt = init_checkpoint(&cfg);
        let c = Components::from_checkpoint(&ckpt).unwrap();
        let set = rollout_skills(&ckpt, 1, 13).unwrap();
        let svg = latent_trace_svg(&c.phi, &set.episodes[0]).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("version=\"1.1\""));
        let mut cfg3 = cfg.clone();
        cfg3.skill.dim = 3;
        let ckpt3 = init_checkpoint(&cfg3);
        let c3 = Components::from_checkpoint(&ckpt3).unwrap();
        let set3 = rollout_skills(&ckpt3, 1, 13).unwrap();
        assert!(latent_trace_svg(&c3.phi, &set3.episodes[0]).is_err());
        assert!(latent_trace_csv(&c3.phi, &set3.episodes[0]).is_ok());
    }
}
