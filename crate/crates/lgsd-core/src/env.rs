//! Deterministic toy continuous-control environments: a bounded planar point
//! mass, and a pusher whose arm transfers displacement to an object on
//! contact. States are flat `f64` vectors so the learning stack sees full
//! observations directly.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const ACTION_DIM: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    /// State `[x, y]`: agent position.
    PointMass2d,
    /// State `[arm_x, arm_y, obj_x, obj_y]`.
    Pusher,
}

impl EnvKind {
    pub fn state_dim(self) -> usize {
        match self {
            EnvKind::PointMass2d => 2,
            EnvKind::Pusher => 4,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub kind: EnvKind,
    /// Arena half-width `B`; positions live in `[-B, B]^2`.
    pub bound: f64,
    pub dt: f64,
    pub v_max: f64,
    /// Pusher only: arm-object distance below which displacement transfers.
    pub contact_radius: f64,
    pub push_gain: f64,
    /// Episode length `T`.
    pub episode_len: usize,
    /// Pusher only: arm-object separation at reset.
    pub init_separation: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            kind: EnvKind::PointMass2d,
            bound: 1.0,
            dt: 0.05,
            v_max: 1.0,
            contact_radius: 0.06,
            push_gain: 1.0,
            episode_len: 100,
            init_separation: 0.8,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let positives = [
            ("bound", self.bound),
            ("dt", self.dt),
            ("v_max", self.v_max),
            ("contact_radius", self.contact_radius),
            ("push_gain", self.push_gain),
            ("init_separation", self.init_separation),
        ];
        for (name, v) in positives {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("env.{name} must be positive, got {v}")));
            }
        }
        if self.episode_len < 1 {
            return Err(Error::Config("env.episode_len must be >= 1".into()));
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.kind.state_dim()
    }
}

/// Initial state. PointMass2d starts at the origin; Pusher places the object
/// at the origin and the arm at `init_separation` along a seed-chosen
/// direction. Equal seeds give identical states.
pub fn reset(cfg: &EnvConfig, seed: u64) -> Vec<f64> {
    match cfg.kind {
        EnvKind::PointMass2d => vec![0.0, 0.0],
        EnvKind::Pusher => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let theta = rng.gen_range(0.0..std::f64::consts::TAU);
            vec![
                cfg.init_separation * theta.cos(),
                cfg.init_separation * theta.sin(),
                0.0,
                0.0,
            ]
        }
    }
}

#[inline]
fn clamp_box(v: f64, bound: f64) -> f64 {
    v.clamp(-bound, bound)
}

/// Pure transition function. Action components are clamped to `[-1, 1]`
/// before the dynamics; positions are clamped to the arena.
pub fn step(state: &[f64], action: &[f64], cfg: &EnvConfig) -> Result<Vec<f64>> {
    if state.len() != cfg.state_dim() {
        return Err(Error::Shape(format!(
            "state length {} != expected {}",
            state.len(),
            cfg.state_dim()
        )));
    }
    if action.len() != ACTION_DIM {
        return Err(Error::Shape(format!("action length {} != {}", action.len(), ACTION_DIM)));
    }
    if !action.iter().all(|a| a.is_finite()) {
        return Err(Error::NonFinite("action has non-finite components".into()));
    }
    let scale = cfg.dt * cfg.v_max;
    let du = [
        scale * action[0].clamp(-1.0, 1.0),
        scale * action[1].clamp(-1.0, 1.0),
    ];
    match cfg.kind {
        EnvKind::PointMass2d => Ok(vec![
            clamp_box(state[0] + du[0], cfg.bound),
            clamp_box(state[1] + du[1], cfg.bound),
        ]),
        EnvKind::Pusher => {
            let arm = [state[0], state[1]];
            let obj = [state[2], state[3]];
            let arm_next = [
                clamp_box(arm[0] + du[0], cfg.bound),
                clamp_box(arm[1] + du[1], cfg.bound),
            ];
            let gap = [obj[0] - arm_next[0], obj[1] - arm_next[1]];
            let gap_norm = (gap[0] * gap[0] + gap[1] * gap[1]).sqrt();
            let mut obj_next = obj;
            if gap_norm < cfg.contact_radius && gap_norm > 0.0 {
                // Kinematic displacement transfer: the arm's motion projected
                // onto the contact normal moves the object.
                let normal = [gap[0] / gap_norm, gap[1] / gap_norm];
                let delta = [arm_next[0] - arm[0], arm_next[1] - arm[1]];
                let along = delta[0] * normal[0] + delta[1] * normal[1];
                obj_next = [
                    clamp_box(obj[0] + cfg.push_gain * along * normal[0], cfg.bound),
                    clamp_box(obj[1] + cfg.push_gain * along * normal[1], cfg.bound),
                ];
            }
            Ok(vec![arm_next[0], arm_next[1], obj_next[0], obj_next[1]])
        }
    }
}

/// The position the metrics care about: the agent for PointMass2d, the
/// object for Pusher.
pub fn relevant_position(kind: EnvKind, state: &[f64]) -> [f64; 2] {
    match kind {
        EnvKind::PointMass2d => [state[0], state[1]],
        EnvKind::Pusher => [state[2], state[3]],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn point_cfg() -> EnvConfig {
        EnvConfig::default()
    }

    fn pusher_cfg() -> EnvConfig {
        EnvConfig { kind: EnvKind::Pusher, ..EnvConfig::default() }
    }

    #[test]
    fn reset_point_is_origin() {
        assert_eq!(reset(&point_cfg(), 123), vec![0.0, 0.0]);
    }

    #[test]
    fn reset_pusher_separation_is_exact() {
        let cfg = pusher_cfg();
        for seed in 0..20 {
            let s = reset(&cfg, seed);
            let d = (s[0] * s[0] + s[1] * s[1]).sqrt();
            assert!((d - cfg.init_separation).abs() < 1e-12);
            assert_eq!(&s[2..], &[0.0, 0.0]);
        }
    }

    #[test]
    fn reset_is_deterministic_per_seed() {
        let cfg = pusher_cfg();
        assert_eq!(reset(&cfg, 7), reset(&cfg, 7));
        assert_ne!(reset(&cfg, 7), reset(&cfg, 8));
    }

    #[test]
    fn step_point_moves_by_scaled_action() {
        let cfg = EnvConfig { dt: 0.1, v_max: 1.0, ..point_cfg() };
        let s = step(&[0.0, 0.0], &[1.0, 0.0], &cfg).unwrap();
        assert_eq!(s, vec![0.1, 0.0]);
        let default = step(&[0.0, 0.0], &[1.0, 0.0], &point_cfg()).unwrap();
        assert_eq!(default, vec![0.05, 0.0]);
    }

    #[test]
    fn step_clamps_oversized_actions_and_bounds() {
        let cfg = point_cfg();
        let s = step(&[0.99, -0.99], &[100.0, -100.0], &cfg).unwrap();
        assert_eq!(s, vec![1.0, -1.0]);
    }

    #[test]
    fn step_rejects_non_finite_action() {
        let cfg = point_cfg();
        assert!(matches!(
            step(&[0.0, 0.0], &[f64::NAN, 0.0], &cfg),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn pusher_far_arm_leaves_object() {
        let cfg = pusher_cfg();
        let s = step(&[0.8, 0.0, 0.0, 0.0], &[1.0, 1.0], &cfg).unwrap();
        assert_eq!(&s[2..], &[0.0, 0.0]);
    }

    /// Hand-stepped contact trace: arm at (0.08, 0) moving with u = (-1, 0)
    /// travels to (0.03, 0); the gap 0.03 is inside the contact radius, the
    /// contact normal is (-1, 0), the arm displacement is -0.05 along x, so
    /// the object moves to (-0.05, 0).
    #[test]
    fn pusher_contact_matches_hand_trace() {
        let cfg = pusher_cfg();
        let s = step(&[0.08, 0.0, 0.0, 0.0], &[-1.0, 0.0], &cfg).unwrap();
        let arm_next = 0.08 - 0.05;
        assert!((s[0] - arm_next).abs() < 1e-15);
        assert!((s[1]).abs() < 1e-15);
        let delta = arm_next - 0.08;
        let expected_obj_x = 0.0 + 1.0 * (delta * -1.0) * -1.0;
        assert!((s[2] - expected_obj_x).abs() < 1e-15);
        assert!((s[2] - (-0.05)).abs() < 1e-12);
        assert_eq!(s[3], 0.0);
    }

    proptest! {
        #[test]
        fn states_stay_in_bounds(
            seed in 0u64..500,
            actions in proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 1..60)
        ) {
            for cfg in [point_cfg(), pusher_cfg()] {
                let mut s = reset(&cfg, seed);
                for (ax, ay) in &actions {
                    s = step(&s, &[*ax, *ay], &cfg).unwrap();
                    for v in &s {
                        prop_assert!(v.abs() <= cfg.bound + 1e-12);
                    }
                }
            }
        }

        #[test]
        fn step_is_pure(seed in 0u64..100, ax in -1.0f64..1.0, ay in -1.0f64..1.0) {
            for cfg in [point_cfg(), pusher_cfg()] {
                let s = reset(&cfg, seed);
                let a = [ax, ay];
                prop_assert_eq!(step(&s, &a, &cfg).unwrap(), step(&s, &a, &cfg).unwrap());
            }
        }

        #[test]
        fn object_fixed_without_contact(
            seed in 0u64..200,
            ax in -1.0f64..1.0,
            ay in -1.0f64..1.0,
        ) {
            let cfg = pusher_cfg();
            let s0 = reset(&cfg, seed);
            let s1 = step(&s0, &[ax, ay], &cfg).unwrap();
            let pre = ((s0[0] - s0[2]).powi(2) + (s0[1] - s0[3]).powi(2)).sqrt();
            let post = ((s1[0] - s1[2]).powi(2) + (s1[1] - s1[3]).powi(2)).sqrt();
            if pre >= cfg.contact_radius && post >= cfg.contact_radius {
                prop_assert_eq!(&s1[2..], &s0[2..]);
            }
        }
    }
}
