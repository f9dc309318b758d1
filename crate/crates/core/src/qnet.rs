//! Feed-forward Q-network: affine layers with rectifier hidden activations and
//! a linear output, trained by hand-written backpropagation and Adam.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum QNetError {
    #[error("input has {got} components, network expects {expected}")]
    InputSize { expected: usize, got: usize },
    #[error("action {action} out of range for {outputs} outputs")]
    Action { action: usize, outputs: usize },
    #[error("gradient shape does not match the network")]
    Shape,
    #[error("malformed weights document: {0}")]
    Parse(String),
    #[error("layer {layer}: {reason}")]
    Layer { layer: usize, reason: String },
    #[error("architecture must have at least an input and an output size, got {0:?}")]
    Arch(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// Output size.
    pub rows: usize,
    /// Input size.
    pub cols: usize,
    /// Row-major `rows × cols`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Layer {
    fn zeros(rows: usize, cols: usize) -> Layer {
        Layer {
            rows,
            cols,
            w: vec![0.0; rows * cols],
            b: vec![0.0; rows],
        }
    }

    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.w.chunks_exact(self.cols).zip(&self.b).map(|(row, &b)| {
            row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + b
        }));
    }

    fn same_shape(&self, other: &Layer) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }
}

/// Gradients, shaped like the network they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(net: &QNetwork) -> Gradients {
        Gradients {
            layers: net.layers.iter().map(|l| Layer::zeros(l.rows, l.cols)).collect(),
        }
    }

    fn matches(&self, net: &QNetwork) -> bool {
        self.layers.len() == net.layers.len()
            && self.layers.iter().zip(&net.layers).all(|(g, l)| g.same_shape(l))
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w.iter_mut().zip(&b.w).for_each(|(x, y)| *x += y);
            a.b.iter_mut().zip(&b.b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, k: f64) {
        for l in &mut self.layers {
            l.w.iter_mut().chain(l.b.iter_mut()).for_each(|x| *x *= k);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| l.w.iter().chain(&l.b).copied())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    layers: Vec<Layer>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightsDocument {
    format_version: u32,
    arch: Vec<usize>,
    layers: Vec<Layer>,
}

impl QNetwork {
    /// Xavier-uniform weights, zero biases.
    pub fn xavier<R: Rng + ?Sized>(arch: &[usize], rng: &mut R) -> Result<QNetwork, QNetError> {
        if arch.len() < 2 || arch.contains(&0) {
            return Err(QNetError::Arch(arch.to_vec()));
        }
        let layers = arch
            .windows(2)
            .map(|w| {
                let (cols, rows) = (w[0], w[1]);
                let limit = (6.0 / (rows + cols) as f64).sqrt();
                let mut l = Layer::zeros(rows, cols);
                for x in &mut l.w {
                    *x = rng.random_range(-limit..limit);
                }
                l
            })
            .collect();
        Ok(QNetwork { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<QNetwork, QNetError> {
        check_layers(&layers)?;
        Ok(QNetwork { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn arch(&self) -> Vec<usize> {
        let mut arch = vec![self.layers[0].cols];
        arch.extend(self.layers.iter().map(|l| l.rows));
        arch
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].cols
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map_or(0, |l| l.rows)
    }

    pub fn parameters(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| l.w.iter().chain(&l.b).copied())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, QNetError> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.affine(&cur, &mut next);
            if i < last {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Squared error of output `action` against `target`, and its gradient
    /// with respect to every parameter.
    pub fn backward(&self, x: &[f64], target: f64, action: usize) -> Result<(f64, Gradients), QNetError> {
        let mut grads = Gradients::zeros_like(self);
        let loss = self.accumulate_gradient(x, target, action, &mut grads)?;
        Ok((loss, grads))
    }

    /// Like [`QNetwork::backward`] but adds the gradient into `grads`.
    pub fn accumulate_gradient(
        &self,
        x: &[f64],
        target: f64,
        action: usize,
        grads: &mut Gradients,
    ) -> Result<f64, QNetError> {
        self.check_input(x)?;
        if !grads.matches(self) {
            return Err(QNetError::Shape);
        }
        if action >= self.output_size() {
            return Err(QNetError::Action {
                action,
                outputs: self.output_size(),
            });
        }
        // activations[i] is the input to layer i; the last entry is the output.
        let last = self.layers.len() - 1;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.affine(&activations[i], &mut z);
            if i < last {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            activations.push(z);
        }
        let q = &activations[last + 1];
        let err = q[action] - target;
        let loss = err * err;

        let mut delta = vec![0.0; self.output_size()];
        delta[action] = 2.0 * err;
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let input = &activations[i];
            let g = &mut grads.layers[i];
            for (r, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.b[r] += d;
                let row = &mut g.w[r * layer.cols..(r + 1) * layer.cols];
                row.iter_mut().zip(input).for_each(|(gw, a)| *gw += d * a);
            }
            if i == 0 {
                break;
            }
            let mut prev = vec![0.0; layer.cols];
            for (r, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &layer.w[r * layer.cols..(r + 1) * layer.cols];
                prev.iter_mut().zip(row).for_each(|(p, w)| *p += d * w);
            }
            // Rectifier derivative, taken from the post-activation value.
            for (p, a) in prev.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
        Ok(loss)
    }

    fn check_input(&self, x: &[f64]) -> Result<(), QNetError> {
        if x.len() != self.input_size() {
            return Err(QNetError::InputSize {
                expected: self.input_size(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn serialize(&self) -> String {
        let doc = WeightsDocument {
            format_version: FORMAT_VERSION,
            arch: self.arch(),
            layers: self.layers.clone(),
        };
        serde_json::to_string(&doc).expect("finite weights always serialize")
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::from_str(&self.serialize()).expect("own output parses")
    }

    pub fn deserialize(text: &str) -> Result<QNetwork, QNetError> {
        let doc: WeightsDocument =
            serde_json::from_str(text).map_err(|e| QNetError::Parse(e.to_string()))?;
        Self::from_document(doc)
    }

    pub fn from_value(value: serde_json::Value) -> Result<QNetwork, QNetError> {
        let doc: WeightsDocument =
            serde_json::from_value(value).map_err(|e| QNetError::Parse(e.to_string()))?;
        Self::from_document(doc)
    }

    fn from_document(doc: WeightsDocument) -> Result<QNetwork, QNetError> {
        if doc.format_version != FORMAT_VERSION {
            return Err(QNetError::Parse(format!(
                "unsupported format_version {}",
                doc.format_version
            )));
        }
        if doc.arch.len() < 2 {
            return Err(QNetError::Arch(doc.arch));
        }
        if doc.layers.len() != doc.arch.len() - 1 {
            return Err(QNetError::Parse(format!(
                "arch {:?} implies {} layers, document has {}",
                doc.arch,
                doc.arch.len() - 1,
                doc.layers.len()
            )));
        }
        for (i, l) in doc.layers.iter().enumerate() {
            if l.cols != doc.arch[i] || l.rows != doc.arch[i + 1] {
                return Err(QNetError::Layer {
                    layer: i,
                    reason: format!(
                        "shape {}×{} does not match arch {}→{}",
                        l.rows,
                        l.cols,
                        doc.arch[i],
                        doc.arch[i + 1]
                    ),
                });
            }
        }
        Self::from_layers(doc.layers)
    }
}

fn check_layers(layers: &[Layer]) -> Result<(), QNetError> {
    if layers.is_empty() {
        return Err(QNetError::Arch(Vec::new()));
    }
    for (i, l) in layers.iter().enumerate() {
        let fail = |reason: String| Err(QNetError::Layer { layer: i, reason });
        if l.rows == 0 || l.cols == 0 {
            return fail("zero-sized layer".into());
        }
        if l.w.len() != l.rows * l.cols {
            return fail(format!("w has {} entries, expected {}", l.w.len(), l.rows * l.cols));
        }
        if l.b.len() != l.rows {
            return fail(format!("b has {} entries, expected {}", l.b.len(), l.rows));
        }
        if i > 0 && layers[i - 1].rows != l.cols {
            return fail(format!(
                "input size {} does not chain from previous output {}",
                l.cols,
                layers[i - 1].rows
            ));
        }
        if !l.w.iter().chain(&l.b).all(|v| v.is_finite()) {
            return fail("non-finite parameter".into());
        }
    }
    Ok(())
}

/// Adam with bias correction; one instance per trained network.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub fn new(net: &QNetwork, lr: f64) -> Adam {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, net: &mut QNetwork, grads: &Gradients) -> Result<(), QNetError> {
        if !grads.matches(net) || !self.m.matches(net) {
            return Err(QNetError::Shape);
        }
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for (((layer, g), m), v) in net
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.m.layers)
            .zip(&mut self.v.layers)
        {
            let params = layer.w.iter_mut().chain(layer.b.iter_mut());
            let gs = g.w.iter().chain(&g.b);
            let ms = m.w.iter_mut().chain(m.b.iter_mut());
            let vs = v.w.iter_mut().chain(v.b.iter_mut());
            for (((p, &g), m), v) in params.zip(gs).zip(ms).zip(vs) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
