//! Dense numerical kernel: multilayer perceptrons with analytic gradients,
//! an adaptive-moment optimizer, and a finite-difference gradient checker.
//!
//! Everything runs in f64 and is deterministic: identical inputs produce
//! bit-identical outputs on one platform. Parameters are plain value types;
//! `forward`/`backward` are pure.

use crate::error::{Error, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Activation applied after a layer's affine map. Output layers are linear.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Relu,
    Elu,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp() - 1.0
                }
            }
        }
    }

    /// Derivative with respect to the pre-activation. The rectifier
    /// subgradient at exactly 0 is 0 (fixed convention so finite-difference
    /// tests are reproducible).
    #[inline]
    pub fn grad(self, x: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    x.exp()
                }
            }
        }
    }
}

/// One dense layer: `y = act(W x + b)` with `W` stored row-major.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(from = "LayerSer", into = "LayerSer")]
pub struct Layer {
    rows: usize,
    cols: usize,
    w: Vec<f64>,
    b: Vec<f64>,
    act: Activation,
}

/// Serialized form: weights as nested arrays (one row per output unit).
#[derive(Serialize, Deserialize)]
struct LayerSer {
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
    act: Activation,
}

impl From<Layer> for LayerSer {
    fn from(l: Layer) -> Self {
        let w = l
            .w
            .chunks(l.cols.max(1))
            .map(|row| row.to_vec())
            .collect();
        LayerSer { w, b: l.b, act: l.act }
    }
}

impl From<LayerSer> for Layer {
    fn from(s: LayerSer) -> Self {
        let rows = s.w.len();
        let cols = s.w.first().map_or(0, |r| r.len());
        let mut w = Vec::with_capacity(rows * cols);
        for row in &s.w {
            w.extend_from_slice(row);
        }
        Layer { rows, cols, w, b: s.b, act: s.act }
    }
}

impl Layer {
    pub fn new(rows: usize, cols: usize, act: Activation) -> Self {
        Layer { rows, cols, w: vec![0.0; rows * cols], b: vec![0.0; rows], act }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn activation(&self) -> Activation {
        self.act
    }

    pub fn weight(&self, r: usize, c: usize) -> f64 {
        self.w[r * self.cols + c]
    }

    pub fn weight_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.w[r * self.cols + c]
    }

    pub fn bias(&self, r: usize) -> f64 {
        self.b[r]
    }

    pub fn bias_mut(&mut self, r: usize) -> &mut f64 {
        &mut self.b[r]
    }

    fn affine_into(&self, x: &[f64], pre: &mut Vec<f64>) {
        pre.clear();
        for r in 0..self.rows {
            let row = &self.w[r * self.cols..(r + 1) * self.cols];
            pre.push(self.b[r] + lanes_dot(row, x));
        }
    }
}

/// A fixed-architecture MLP. Hidden layers carry a rectifier-family
/// activation; the output layer is linear.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

impl Mlp {
    /// Builds an MLP with the given layer widths (`sizes[0]` is the input
    /// dimension). Weights use uniform fan-in initialization
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`; biases start at zero.
    pub fn new(sizes: &[usize], hidden_act: Activation, rng: &mut ChaCha8Rng) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output widths");
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for i in 0..sizes.len() - 1 {
            let (cols, rows) = (sizes[i], sizes[i + 1]);
            let act = if i + 2 == sizes.len() { Activation::Linear } else { hidden_act };
            let mut layer = Layer::new(rows, cols, act);
            let scale = 1.0 / (cols as f64).sqrt();
            for w in layer.w.iter_mut() {
                *w = rng.gen_range(-scale..scale);
            }
            layers.push(layer);
        }
        Mlp { layers }
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.cols)
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.rows)
    }

    /// Checks internal consistency: chained dimensions, a linear output
    /// layer, and finite entries. Used after deserialization.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Shape("mlp has no layers".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.w.len() != l.rows * l.cols || l.b.len() != l.rows {
                return Err(Error::Shape(format!("layer {i} storage does not match dims")));
            }
            if i + 1 < self.layers.len() && self.layers[i + 1].cols != l.rows {
                return Err(Error::Shape(format!(
                    "layer {} input width {} != layer {i} output width {}",
                    i + 1,
                    self.layers[i + 1].cols,
                    l.rows
                )));
            }
            if !l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!("layer {i} has non-finite parameters")));
            }
        }
        if self.layers.last().unwrap().act != Activation::Linear {
            return Err(Error::Shape("output layer must be linear".into()));
        }
        Ok(())
    }

    /// Deterministic forward pass.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim() {
            return Err(Error::Shape(format!(
                "input length {} != expected {}",
                x.len(),
                self.in_dim()
            )));
        }
        let mut cur = x.to_vec();
        let mut pre = Vec::new();
        for layer in &self.layers {
            layer.affine_into(&cur, &mut pre);
            cur.clear();
            cur.extend(pre.iter().map(|&p| layer.act.apply(p)));
        }
        Ok(cur)
    }

    /// Forward pass that keeps per-layer pre-activations and activations so
    /// a backward pass can reuse them instead of recomputing the forward.
    pub fn trace(&self, x: &[f64]) -> Result<Trace> {
        if x.len() != self.in_dim() {
            return Err(Error::Shape(format!(
                "input length {} != expected {}",
                x.len(),
                self.in_dim()
            )));
        }
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut pres = Vec::with_capacity(self.layers.len());
        acts.push(x.to_vec());
        for layer in &self.layers {
            let mut pre = Vec::new();
            layer.affine_into(acts.last().unwrap(), &mut pre);
            let post: Vec<f64> = pre.iter().map(|&p| layer.act.apply(p)).collect();
            pres.push(pre);
            acts.push(post);
        }
        Ok(Trace { pres, acts })
    }

    /// Exact chain rule for the scalar `upstream . forward(x)`: returns the
    /// parameter gradient and the gradient with respect to `x`.
    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<(GradBundle, Vec<f64>)> {
        let mut grads = GradBundle::zeros_like(self);
        let dx = self.backward_acc(x, upstream, &mut grads)?;
        Ok((grads, dx))
    }

    /// Like `backward` but accumulates into an existing bundle (one
    /// allocation per minibatch instead of per sample).
    pub fn backward_acc(
        &self,
        x: &[f64],
        upstream: &[f64],
        grads: &mut GradBundle,
    ) -> Result<Vec<f64>> {
        let trace = self.trace(x)?;
        self.backward_from_trace(&trace, upstream, grads)
    }

    /// Backward pass over a stored forward trace.
    pub fn backward_from_trace(
        &self,
        trace: &Trace,
        upstream: &[f64],
        grads: &mut GradBundle,
    ) -> Result<Vec<f64>> {
        if upstream.len() != self.out_dim() {
            return Err(Error::Shape(format!(
                "upstream length {} != output width {}",
                upstream.len(),
                self.out_dim()
            )));
        }
        if grads.layers.len() != self.layers.len() {
            return Err(Error::Shape("gradient bundle does not mirror parameters".into()));
        }
        let mut delta = upstream.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let pre = &trace.pres[i];
            let input = &trace.acts[i];
            for (d, &p) in delta.iter_mut().zip(pre.iter()) {
                *d *= layer.act.grad(p);
            }
            let g = &mut grads.layers[i];
            for r in 0..layer.rows {
                let dr = delta[r];
                g.db[r] += dr;
                let grow = &mut g.dw[r * layer.cols..(r + 1) * layer.cols];
                for (gw, &xi) in grow.iter_mut().zip(input.iter()) {
                    *gw += dr * xi;
                }
            }
            let mut next = vec![0.0; layer.cols];
            for r in 0..layer.rows {
                let dr = delta[r];
                let row = &layer.w[r * layer.cols..(r + 1) * layer.cols];
                for (n, &wi) in next.iter_mut().zip(row.iter()) {
                    *n += dr * wi;
                }
            }
            delta = next;
        }
        Ok(delta)
    }
}

/// Stored activations from one forward pass.
pub struct Trace {
    pres: Vec<Vec<f64>>,
    acts: Vec<Vec<f64>>,
}

impl Trace {
    /// Network output for the traced input.
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("trace has at least the input row")
    }
}

/// Gradient arrays shaped like an `Mlp`'s parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GradBundle {
    pub layers: Vec<LayerGrad>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LayerGrad {
    pub dw: Vec<f64>,
    pub db: Vec<f64>,
}

impl GradBundle {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        GradBundle {
            layers: mlp
                .layers
                .iter()
                .map(|l| LayerGrad { dw: vec![0.0; l.w.len()], db: vec![0.0; l.b.len()] })
                .collect(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            for v in l.dw.iter_mut().chain(l.db.iter_mut()) {
                *v *= s;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.dw.iter().chain(l.db.iter()).all(|v| v.is_finite()))
    }

    fn shape_matches(&self, mlp: &Mlp) -> bool {
        self.layers.len() == mlp.layers.len()
            && self
                .layers
                .iter()
                .zip(mlp.layers.iter())
                .all(|(g, l)| g.dw.len() == l.w.len() && g.db.len() == l.b.len())
    }
}

/// Adaptive-moment optimizer state mirroring an `Mlp`'s parameter shapes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptState {
    pub m: GradBundle,
    pub v: GradBundle,
    pub step: u64,
}

impl OptState {
    pub fn new(mlp: &Mlp) -> Self {
        OptState { m: GradBundle::zeros_like(mlp), v: GradBundle::zeros_like(mlp), step: 0 }
    }
}

/// Update-rule constants. The moment decays and epsilon are the standard
/// defaults; only the optimizer family and learning rate are externally
/// pinned.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig { lr, ..Default::default() }
    }
}

#[inline]
fn adam_update(
    p: &mut [f64],
    g: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    cfg: &AdamConfig,
) {
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    for i in 0..p.len() {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        let mh = m[i] / bc1;
        let vh = v[i] / bc2;
        p[i] -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
    }
}

/// One descent step with bias correction. Rejects non-finite gradients and
/// increments the step counter. Zero gradients leave parameters unchanged.
pub fn opt_step(
    params: &mut Mlp,
    grads: &GradBundle,
    state: &mut OptState,
    cfg: &AdamConfig,
) -> Result<()> {
    if !grads.shape_matches(params) {
        return Err(Error::Shape("gradient bundle does not mirror parameters".into()));
    }
    if cfg.lr <= 0.0 {
        return Err(Error::Config(format!("learning rate must be positive, got {}", cfg.lr)));
    }
    if !grads.is_finite() {
        let bad = grads
            .layers
            .iter()
            .enumerate()
            .find(|(_, l)| !l.dw.iter().chain(l.db.iter()).all(|v| v.is_finite()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        return Err(Error::NonFinite(format!("gradient for layer {bad} is non-finite")));
    }
    state.step += 1;
    let t = state.step;
    for ((layer, g), (ms, vs)) in params
        .layers
        .iter_mut()
        .zip(grads.layers.iter())
        .zip(state.m.layers.iter_mut().zip(state.v.layers.iter_mut()))
    {
        adam_update(&mut layer.w, &g.dw, &mut ms.dw, &mut vs.dw, t, cfg);
        adam_update(&mut layer.b, &g.db, &mut ms.db, &mut vs.db, t, cfg);
    }
    Ok(())
}

/// Adam state for a flat parameter vector (used for the policy log-std).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VecOptState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl VecOptState {
    pub fn new(len: usize) -> Self {
        VecOptState { m: vec![0.0; len], v: vec![0.0; len], step: 0 }
    }
}

pub fn opt_step_vec(
    params: &mut [f64],
    grads: &[f64],
    state: &mut VecOptState,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::Shape("vector gradient length mismatch".into()));
    }
    if !grads.iter().all(|g| g.is_finite()) {
        return Err(Error::NonFinite("vector gradient is non-finite".into()));
    }
    state.step += 1;
    adam_update(params, grads, &mut state.m, &mut state.v, state.step, cfg);
    Ok(())
}

/// Compares an analytic gradient of a scalar function of the parameters to
/// central finite differences; returns the worst relative error. Diagnostic
/// only: never fails.
pub fn grad_check<F: FnMut(&Mlp) -> f64>(
    mut f: F,
    params: &Mlp,
    analytic: &GradBundle,
    step: f64,
) -> f64 {
    assert!(step > 0.0, "finite-difference step must be positive");
    let mut work = params.clone();
    let mut worst = 0.0_f64;
    for li in 0..params.layers.len() {
        let n_w = params.layers[li].w.len();
        for idx in 0..n_w + params.layers[li].b.len() {
            let read = |m: &Mlp| {
                let l = &m.layers[li];
                if idx < n_w {
                    l.w[idx]
                } else {
                    l.b[idx - n_w]
                }
            };
            let orig = read(&work);
            let write = |m: &mut Mlp, v: f64| {
                let l = &mut m.layers[li];
                if idx < n_w {
                    l.w[idx] = v;
                } else {
                    l.b[idx - n_w] = v;
                }
            };
            write(&mut work, orig + step);
            let fp = f(&work);
            write(&mut work, orig - step);
            let fm = f(&work);
            write(&mut work, orig);
            let numeric = (fp - fm) / (2.0 * step);
            let a = if idx < n_w {
                analytic.layers[li].dw[idx]
            } else {
                analytic.layers[li].db[idx - n_w]
            };
            let rel = (numeric - a).abs() / (numeric.abs() + a.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    worst
}

/// Dot product helper shared across the crate.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Four-lane dot product: a fixed association order that breaks the serial
/// accumulator dependency so the loop vectorizes. Deterministic (the lane
/// structure never varies with data).
#[inline]
fn lanes_dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let chunks = n / 4;
    let mut acc = [0.0f64; 4];
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in chunks * 4..n {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}
