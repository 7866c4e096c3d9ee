//! Verification suites behind the `verify` command: pseudometric axioms and
//! the edge-to-all-pairs Lipschitz implication on random graphs, gradient
//! checks across every learned objective, the telescoping-reward identity,
//! and constraint satisfaction of a trained checkpoint.

use crate::checkpoint::Checkpoint;

use crate::embed::cosine_distance;
use crate::error::Result;
use crate::metric::{
    induced_pseudometric, project_to_premise, verify_claim1, verify_pseudometric, AdjacencyGraph,
    InducedMetric,
};
use crate::nn::{dot, grad_check, Activation, Mlp};
use crate::ppo::{clipped_surrogate_mean, policy_gradient, Policy, PpoConfig};
use crate::skill::{repr_objective, repr_objective_grad, psi_loss_and_grad, DualState, TransitionView};
use crate::trainer::{collect_epoch, make_annotator, stream_rng, Components};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Random graph with dyadic-rational weights (multiples of 1/1024): all path
/// sums are exact in f64, so shortest-path results are association-order
/// independent and comparable with zero tolerance.
pub fn random_dyadic_graph(seed: u64, max_nodes: usize) -> AdjacencyGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=max_nodes);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(0.45) {
                let w = rng.gen_range(0..=2048) as f64 / 1024.0;
                edges.push((i, j, w));
            }
        }
    }
    AdjacencyGraph::with_n_nodes(n, edges)
}

/// Exhaustive simple-path enumeration; an independent shortest-path oracle
/// for graphs small enough to enumerate.
pub fn brute_force_metric(graph: &AdjacencyGraph) -> InducedMetric {
    let n = graph.n();
    let mut adj = vec![Vec::new(); n];
    for &(i, j, w) in &graph.edges {
        adj[i].push((j, w));
        adj[j].push((i, w));
    }
    let mut d = vec![f64::INFINITY; n * n];
    for (start, _) in adj.iter().enumerate() {
        d[start * n + start] = 0.0;
        let mut visited = vec![false; n];
        visited[start] = true;
        dfs(start, 0.0, &mut visited, &adj, &mut d[start * n..(start + 1) * n]);
    }
    InducedMetric::from_matrix(n, d).expect("square by construction")
}

fn dfs(u: usize, acc: f64, visited: &mut [bool], adj: &[Vec<(usize, f64)>], row: &mut [f64]) {
    for &(v, w) in &adj[u] {
        if visited[v] {
            continue;
        }
        let cand = acc + w;
        if cand < row[v] {
            row[v] = cand;
        }
        visited[v] = true;
        dfs(v, cand, visited, adj, row);
        visited[v] = false;
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricSuiteReport {
    pub graphs_checked: usize,
    pub brute_force_mismatches: usize,
    pub axiom_violations: usize,
    pub claim1_failures: usize,
    pub counterexample: [f64; 3],
    pub counterexample_exact: bool,
    pub passed: bool,
}

/// Pseudometric axioms and the Lipschitz implication over `n_graphs` random
/// graphs, brute-force cross-checked on every instance, plus the cosine
/// triangle-inequality counterexample.
pub fn metric_suite(n_graphs: usize, seed: u64) -> Result<MetricSuiteReport> {
    let mut brute_force_mismatches = 0;
    let mut axiom_violations = 0;
    let mut claim1_failures = 0;
    for g in 0..n_graphs {
        let graph = random_dyadic_graph(seed.wrapping_add(g as u64), 12);
        let induced = induced_pseudometric(&graph)?;
        let brute = brute_force_metric(&graph);
        for i in 0..graph.n() {
            for j in 0..graph.n() {
                if induced.get(i, j) != brute.get(i, j) {
                    brute_force_mismatches += 1;
                }
            }
        }
        if !verify_pseudometric(&induced).is_valid() {
            axiom_violations += 1;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9 ^ g as u64);
        let mut phi: Vec<Vec<f64>> = (0..graph.n())
            .map(|_| (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        project_to_premise(&graph, &mut phi);
        if !verify_claim1(&graph, &phi)?.holds() {
            claim1_failures += 1;
        }
    }
    // Integer vectors at pairwise angles 60/60/120 degrees: exact cosine
    // distances (0.5, 0.5, 1.5) violating the triangle inequality.
    let a = [1.0, 1.0, 0.0];
    let b = [0.0, 1.0, 1.0];
    let c = [-1.0, 0.0, 1.0];
    let counterexample = [
        cosine_distance(&a, &b)?,
        cosine_distance(&b, &c)?,
        cosine_distance(&a, &c)?,
    ];
    let counterexample_exact = counterexample == [0.5, 0.5, 1.5]
        && counterexample[2] > counterexample[0] + counterexample[1];
    let passed = brute_force_mismatches == 0
        && axiom_violations == 0
        && claim1_failures == 0
        && counterexample_exact;
    Ok(MetricSuiteReport {
        graphs_checked: n_graphs,
        brute_force_mismatches,
        axiom_violations,
        claim1_failures,
        counterexample,
        counterexample_exact,
        passed,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GradSuiteReport {
    pub mlp_max_rel_err: f64,
    pub repr_max_rel_err: f64,
    pub ppo_max_rel_err: f64,
    pub psi_max_rel_err: f64,
    pub max_rel_err: f64,
    pub threshold: f64,
    pub passed: bool,
}

const GRAD_TOL: f64 = 1e-4;
const FD_STEP: f64 = 1e-5;

fn off_kink_input(mlp: &Mlp, rng: &mut ChaCha8Rng) -> Vec<f64> {
    'outer: loop {
        let x: Vec<f64> = (0..mlp.in_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut cur = x.clone();
        for l in &mlp.layers {
            let mut pre = Vec::with_capacity(l.rows());
            for r in 0..l.rows() {
                let mut acc = 0.0;
                for c in 0..l.cols() {
                    acc += l.weight(r, c) * cur[c];
                }
                pre.push(acc + l.bias(r));
            }
            if l.activation() == Activation::Relu && pre.iter().any(|p| p.abs() < 1e-3) {
                continue 'outer;
            }
            cur = pre.iter().map(|&p| l.activation().apply(p)).collect();
        }
        return x;
    }
}

/// Finite-difference checks over random MLPs, the representation objective,
/// the PPO surrogate away from clip boundaries, and the psi regression loss.
pub fn grad_suite(seed: u64) -> Result<GradSuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Plain MLP gradients, mixed activations and shapes.
    let mut mlp_max: f64 = 0.0;
    for case in 0..40 {
        let sizes: &[usize] = match case % 3 {
            0 => &[3, 8, 4, 2],
            1 => &[2, 6, 1],
            _ => &[4, 5, 5, 3],
        };
        let act = if case % 2 == 0 { Activation::Relu } else { Activation::Elu };
        let mlp = Mlp::new(sizes, act, &mut rng);
        let x = off_kink_input(&mlp, &mut rng);
        let up: Vec<f64> = (0..mlp.out_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (analytic, _) = mlp.backward(&x, &up)?;
        let err = grad_check(|m| dot(&m.forward(&x).unwrap(), &up), &mlp, &analytic, FD_STEP);
        mlp_max = mlp_max.max(err);
    }

    // Representation objective on a fixed mini-batch with slacks held away
    // from the min kink.
    let phi = Mlp::new(&[2, 8, 6, 2], Activation::Relu, &mut rng);
    let dual = DualState { lambda: 5.0, epsilon: 1e-3, lr: 0.01 };
    let mut storage = Vec::new();
    while storage.len() < 16 {
        let s = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let sn = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let z = crate::skill::sample_skill(2, &mut rng);
        let d_lang = rng.gen_range(0.0..0.5);
        let (a, b) = (phi.forward(&s)?, phi.forward(&sn)?);
        let step2: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
        if ((d_lang - step2) - dual.epsilon).abs() < 1e-3 {
            continue;
        }
        storage.push((s, sn, z, d_lang));
    }
    let batch: Vec<TransitionView> = storage
        .iter()
        .map(|(s, sn, z, d)| TransitionView { s, s_next: sn, z, d_lang: *d })
        .collect();
    let (_, analytic) = repr_objective_grad(&phi, &dual, &batch)?;
    let repr_max = grad_check(
        |m| repr_objective(m, &dual, &batch).unwrap(),
        &phi,
        &analytic,
        FD_STEP,
    );

    // PPO clipped surrogate away from clip boundaries.
    let policy = Policy::new(4, 2, &[8, 6], Activation::Elu, -0.5, &mut rng);
    let cfg = PpoConfig { entropy_coef: 0.0, ..PpoConfig::default() };
    let mut batch = crate::ppo::RolloutBatch::default();
    let mut kept = 0usize;
    while kept < 16 {
        let s: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let z: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sample = policy.sample(&s, &z, &mut rng)?;
        let offset = rng.gen_range(-0.15..0.15);
        let ratio = (offset as f64).exp();
        // Keep ratios clear of the clip kinks at 1 +/- clip.
        if (ratio - (1.0 - cfg.clip)).abs() < 2e-2 || (ratio - (1.0 + cfg.clip)).abs() < 2e-2 {
            continue;
        }
        batch.push(
            s,
            z,
            sample.action,
            sample.presquash,
            sample.log_prob - offset,
            0.0,
            false,
        );
        batch.advantages.push(rng.gen_range(-1.0..1.0));
        batch.returns.push(0.0);
        kept += 1;
    }
    let rows: Vec<usize> = (0..batch.len()).collect();
    let (analytic_mean, _) = policy_gradient(&policy, &batch, &rows, &cfg)?;
    // The surrogate is maximized; policy_gradient returns loss gradients.
    let ppo_max = grad_check(
        |m| {
            let p = Policy { mean: m.clone(), log_std: policy.log_std.clone() };
            -clipped_surrogate_mean(&p, &batch, &rows, cfg.clip).unwrap()
        },
        &policy.mean,
        &analytic_mean,
        FD_STEP,
    );

    // Psi regression loss.
    let psi = Mlp::new(&[6, 8, 2], Activation::Relu, &mut rng);
    let pairs_storage: Vec<(Vec<f64>, Vec<f64>)> = (0..8)
        .map(|_| {
            (
                (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            )
        })
        .collect();
    let pairs: Vec<(&[f64], &[f64])> =
        pairs_storage.iter().map(|(e, z)| (e.as_slice(), z.as_slice())).collect();
    let (_, analytic_psi) = psi_loss_and_grad(&psi, &pairs)?;
    let psi_max = grad_check(
        |m| psi_loss_and_grad(m, &pairs).unwrap().0,
        &psi,
        &analytic_psi,
        FD_STEP,
    );

    let max_rel_err = mlp_max.max(repr_max).max(ppo_max).max(psi_max);
    Ok(GradSuiteReport {
        mlp_max_rel_err: mlp_max,
        repr_max_rel_err: repr_max,
        ppo_max_rel_err: ppo_max,
        psi_max_rel_err: psi_max,
        max_rel_err,
        threshold: GRAD_TOL,
        passed: max_rel_err < GRAD_TOL,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TelescopeSuiteReport {
    pub episodes: usize,
    pub max_abs_gap: f64,
    pub threshold: f64,
    pub passed: bool,
}

/// Rolls out episodes (fresh components, or a checkpoint's) and checks that
/// summed step rewards equal the endpoint representation displacement dotted
/// with the skill.
pub fn telescope_suite(
    ckpt: Option<&Checkpoint>,
    episodes: usize,
    seed: u64,
) -> Result<TelescopeSuiteReport> {
    let config = ckpt.map(|c| c.config.clone()).unwrap_or_default();
    let c = match ckpt {
        Some(ck) => Components::from_checkpoint(ck)?,
        None => Components::init(&config, &mut stream_rng(seed, "telescope-init")),
    };
    let mut annot = make_annotator(&config)?;
    let mut rng = stream_rng(seed, "telescope");
    let mut max_gap = 0.0_f64;
    let per_epoch = episodes.max(1);
    let buffer = collect_epoch(
        &c.policy,
        &c.phi,
        &config.env,
        &mut annot,
        per_epoch,
        config.skill.dim,
        &mut rng,
    )?;
    let horizon = config.env.episode_len;
    for ep in 0..per_epoch {
        let records = &buffer.records[ep * horizon..(ep + 1) * horizon];
        let total: f64 = records.iter().map(|r| r.r).sum();
        let first = c.phi.forward(&records[0].s)?;
        let last = c.phi.forward(&records[horizon - 1].s_next)?;
        let direct: f64 = last
            .iter()
            .zip(first.iter())
            .zip(records[0].z.iter())
            .map(|((l, f), z)| (l - f) * z)
            .sum();
        max_gap = max_gap.max((total - direct).abs());
    }
    Ok(TelescopeSuiteReport {
        episodes: per_epoch,
        max_abs_gap: max_gap,
        threshold: 1e-9,
        passed: max_gap <= 1e-9,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConstraintSuiteReport {
    pub transitions: usize,
    pub violation_fraction: f64,
    pub violation_threshold: f64,
    pub same_description_pairs: usize,
    pub same_description_mean_step: f64,
    pub same_description_threshold: f64,
    pub passed: bool,
}

/// Collects a fresh buffer with a checkpoint's policy and representation and
/// measures soft-constraint satisfaction: the fraction of transitions whose
/// squared representation step exceeds the language distance, and the mean
/// step norm over transitions with identical descriptions.
pub fn constraint_suite(
    ckpt: &Checkpoint,
    episodes: usize,
    seed: u64,
) -> Result<ConstraintSuiteReport> {
    let c = Components::from_checkpoint(ckpt)?;
    let config = &ckpt.config;
    let mut annot = make_annotator(config)?;
    let mut rng = stream_rng(seed, "constraint");
    let buffer = collect_epoch(
        &c.policy,
        &c.phi,
        &config.env,
        &mut annot,
        episodes,
        config.skill.dim,
        &mut rng,
    )?;
    let views = buffer.views();
    let violation_fraction = crate::skill::violation_fraction(&c.phi, &views, 1e-3)?;
    let mut same_pairs = 0usize;
    let mut same_step_sum = 0.0;
    for v in &views {
        if v.d_lang == 0.0 {
            let a = c.phi.forward(v.s)?;
            let b = c.phi.forward(v.s_next)?;
            let step: f64 =
                a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            same_pairs += 1;
            same_step_sum += step;
        }
    }
    let same_description_mean_step =
        if same_pairs > 0 { same_step_sum / same_pairs as f64 } else { 0.0 };
    let passed = violation_fraction <= 0.05 && same_description_mean_step <= 1e-2;
    Ok(ConstraintSuiteReport {
        transitions: views.len(),
        violation_fraction,
        violation_threshold: 0.05,
        same_description_pairs: same_pairs,
        same_description_mean_step,
        same_description_threshold: 1e-2,
        passed,
    })
}

/// Builds a small adjacency graph from rollouts of a checkpoint: nodes are
/// visited state cells, edges connect consecutive cells with their language
/// distance. Used by the `verify metric --ckpt` path.
pub fn rollout_graph(ckpt: &Checkpoint, episodes: usize, seed: u64, max_nodes: usize) -> Result<AdjacencyGraph> {
    let c = Components::from_checkpoint(ckpt)?;
    let config = &ckpt.config;
    let mut annot = make_annotator(config)?;
    let mut rng = stream_rng(seed, "graph");
    let buffer = collect_epoch(
        &c.policy,
        &c.phi,
        &config.env,
        &mut annot,
        episodes,
        config.skill.dim,
        &mut rng,
    )?;
    let mut index = std::collections::BTreeMap::new();
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    let rho = config.describer.rho;
    for rec in &buffer.records {
        let ka = crate::describer::discretize(&rec.s, rho);
        let kb = crate::describer::discretize(&rec.s_next, rho);
        if ka == kb {
            continue;
        }
        let mut id_of = |k: crate::describer::StateKey| -> usize {
            *index.entry(k.clone()).or_insert_with(|| {
                nodes.push(k);
                nodes.len() - 1
            })
        };
        let ia = id_of(ka);
        let ib = id_of(kb);
        if nodes.len() > max_nodes {
            break;
        }
        let (lo, hi) = (ia.min(ib), ia.max(ib));
        if seen.insert((lo, hi)) {
            edges.push((lo, hi, rec.d_lang));
        }
    }
    Ok(AdjacencyGraph { nodes, edges })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_suite_passes() {
        let report = metric_suite(100, 42).unwrap();
        assert!(report.passed, "{report:?}");
        assert_eq!(report.counterexample, [0.5, 0.5, 1.5]);
    }

    #[test]
    fn grad_suite_passes() {
        let report = grad_suite(7).unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn telescope_suite_passes_on_fresh_components() {
        let report = telescope_suite(None, 20, 3).unwrap();
        assert!(report.passed, "{report:?}");
    }
}
