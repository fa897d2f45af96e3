//! The stacked self-attention network.
//!
//! For a batch `x` and local views `v_1..v_k`:
//!
//! ```text
//! F1_i   = Norm(ReLU(W1_i x[v_i] + b1_i))
//! F3_i   = sigmoid(W3_i ReLU(W2_i F1_i + b2_i) + b3_i)       local prediction
//! FG1    = Norm(ReLU(WG1 x + bG1))
//! FG2    = ReLU(WG2 FG1 + bG2)                               global embedding
//! F*     = [FG2, F3_1, .., F3_k]                              width d = e + k
//! q,k,v  = WQ F* + bQ, WK F* + bK, WV F* + bV                 width a
//! A      = softmax_rows(q k^T)                                per sample, a x a
//! Fatt   = A v
//! y_hat  = sigmoid(W4 Fatt + b4)
//! ```
//!
//! Each scalar slot of `F*` is one attention token; scores are not scaled.
//! Without attention the head reads `F*` directly, and with zero local views
//! and no attention the network is a plain MLP on the global view.

use std::io::{BufRead, Write};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    bce_loss, load_params, read_params, relu, relu_backward, sigmoid_scalar, softmax_in_place, write_params, DenseLayer,
    Matrix, NormCache, NormLayer, ParamBlock, Parameterized,
};
use crate::rng::{self, stream, Rng};
use crate::views::ViewSet;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[default]
    Small,
    /// Normalizes every non-output layer and doubles the hidden widths.
    Large,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "small" => Ok(Variant::Small),
            "large" => Ok(Variant::Large),
            other => Err(Error::Config(format!("unknown variant {other:?} (small|large)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub local_hidden: [usize; 2],
    pub global_hidden: usize,
    pub global_embed_width: usize,
    /// Token count of the attention block; `None` keeps the width of `F*`.
    pub attention_width: Option<usize>,
    /// Weight of the summed local-branch losses.
    pub aux_loss_weight: f64,
    pub variant: Variant,
    pub attention: bool,
    /// Inverted-dropout rate on the first hidden layer of every branch.
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            local_hidden: [32, 16],
            global_hidden: 64,
            global_embed_width: 8,
            attention_width: None,
            aux_loss_weight: 1.0,
            variant: Variant::Small,
            attention: true,
            dropout: 0.0,
        }
    }
}

impl ModelConfig {
    fn validate(&self) -> Result<()> {
        let widths = [
            self.local_hidden[0],
            self.local_hidden[1],
            self.global_hidden,
            self.global_embed_width,
            self.attention_width.unwrap_or(1),
        ];
        if widths.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if !(self.aux_loss_weight >= 0.0) {
            return Err(Error::Config("aux_loss_weight must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }

    fn scale(&self) -> usize {
        match self.variant {
            Variant::Small => 1,
            Variant::Large => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalBranch {
    pub view: Vec<usize>,
    pub dense1: DenseLayer,
    pub norm1: NormLayer,
    pub dense2: DenseLayer,
    pub norm2: Option<NormLayer>,
    pub dense3: DenseLayer,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlobalBranch {
    pub dense1: DenseLayer,
    pub norm1: NormLayer,
    pub dense2: DenseLayer,
    pub norm2: Option<NormLayer>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Attention {
    pub query: DenseLayer,
    pub key: DenseLayer,
    pub value: DenseLayer,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub views: ViewSet,
    pub locals: Vec<LocalBranch>,
    pub global: GlobalBranch,
    pub attention: Option<Attention>,
    pub head: DenseLayer,
}

/// Activations of one branch's hidden stack.
#[derive(Clone, Debug)]
pub struct HiddenTrace {
    input: Matrix,
    pre1: Matrix,
    norm1: NormCache,
    mask1: Option<Matrix>,
    /// First hidden representation after normalization (and dropout).
    pub h1: Matrix,
    pre2: Matrix,
    norm2: Option<NormCache>,
    /// Second hidden representation.
    pub h2: Matrix,
}

#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub locals: Vec<HiddenTrace>,
    /// Local default probabilities, one vector per view.
    pub local_probs: Vec<Vec<f64>>,
    pub global: HiddenTrace,
    /// `[global embedding, local probabilities]`.
    pub fstar: Matrix,
    pub query: Option<Matrix>,
    pub key: Option<Matrix>,
    pub value: Option<Matrix>,
    /// Per-sample attention matrices; each row sums to 1.
    pub attention: Vec<Matrix>,
    /// Input of the output head.
    pub head_input: Matrix,
    pub final_probs: Vec<f64>,
}

impl HiddenTrace {
    fn relu_pattern(&self, out: &mut Vec<bool>) {
        out.extend(self.pre1.as_slice().iter().chain(self.pre2.as_slice()).map(|&v| v > 0.0));
    }
}

impl ForwardTrace {
    /// Which ReLU units are active, over every branch. The loss is smooth
    /// in the parameters wherever this pattern stays fixed.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for t in self.locals.iter().chain(std::iter::once(&self.global)) {
            t.relu_pattern(&mut out);
        }
        out
    }
}

/// Gradients of the loss with respect to every output logit.
#[derive(Clone, Debug, PartialEq)]
pub struct LossGrads {
    pub final_logit: Vec<f64>,
    pub local_logits: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossValue {
    pub total: f64,
    pub final_bce: f64,
    pub local_bce: Vec<f64>,
}

fn norm_layer(width: usize) -> NormLayer {
    NormLayer::new(width)
}

fn column(v: &[f64]) -> Matrix {
    Matrix::from_vec(v.len(), 1, v.to_vec())
}

fn dropout_mask(rows: usize, cols: usize, rate: f64, rng: &mut Rng) -> Matrix {
    let keep = 1.0 - rate;
    let data = (0..rows * cols)
        .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect();
    Matrix::from_vec(rows, cols, data)
}

fn hidden_forward(
    dense1: &DenseLayer,
    norm1: &NormLayer,
    dense2: &DenseLayer,
    norm2: Option<&NormLayer>,
    input: Matrix,
    dropout: Option<(f64, &mut Rng)>,
) -> HiddenTrace {
    let pre1 = dense1.forward(&input);
    let (mut h1, cache1) = norm1.forward(&relu(&pre1));
    let mask1 = dropout.map(|(rate, rng)| {
        let m = dropout_mask(h1.rows(), h1.cols(), rate, rng);
        h1 = h1.zip_map(&m, |a, b| a * b);
        m
    });
    let pre2 = dense2.forward(&h1);
    let r2 = relu(&pre2);
    let (h2, norm2) = match norm2 {
        Some(n) => {
            let (out, cache) = n.forward(&r2);
            (out, Some(cache))
        }
        None => (r2, None),
    };
    HiddenTrace {
        input,
        pre1,
        norm1: cache1,
        mask1,
        h1,
        pre2,
        norm2,
        h2,
    }
}

fn hidden_backward(
    dense1: &mut DenseLayer,
    norm1: &mut NormLayer,
    dense2: &mut DenseLayer,
    norm2: Option<&mut NormLayer>,
    t: &HiddenTrace,
    grad_h2: &Matrix,
) {
    let g_r2 = match (norm2, &t.norm2) {
        (Some(n), Some(cache)) => n.backward(cache, grad_h2),
        _ => grad_h2.clone(),
    };
    let g_h1 = dense2.backward(&t.h1, &relu_backward(&t.pre2, &g_r2));
    let g_n1 = match &t.mask1 {
        Some(m) => g_h1.zip_map(m, |a, b| a * b),
        None => g_h1,
    };
    let g_r1 = norm1.backward(&t.norm1, &g_n1);
    dense1.backward(&t.input, &relu_backward(&t.pre1, &g_r1));
}

/// Softmax of the outer product `q k^T` per row, then `A v`.
fn attend(q: &[f64], k: &[f64], v: &[f64]) -> (Matrix, Vec<f64>) {
    let a = q.len();
    let mut weights = Matrix::zeros(a, a);
    let mut out = vec![0.0; a];
    for i in 0..a {
        let row = weights.row_mut(i);
        for (j, s) in row.iter_mut().enumerate() {
            *s = q[i] * k[j];
        }
        softmax_in_place(row);
        out[i] = row.iter().zip(v).map(|(w, vj)| w * vj).sum();
    }
    (weights, out)
}

impl Model {
    /// Branch input widths follow the view sizes; parameters are drawn from
    /// the seed's init stream in visit order.
    pub fn new(views: &ViewSet, config: ModelConfig, seed: u64) -> Result<Model> {
        config.validate()?;
        views.validate()?;
        if views.n_features() == 0 {
            return Err(Error::NoFeatures);
        }
        let s = config.scale();
        let large = config.variant == Variant::Large;
        let [l1, l2] = [config.local_hidden[0] * s, config.local_hidden[1] * s];
        let g1 = config.global_hidden * s;
        let e = config.global_embed_width;
        let mut rng = rng::derive(seed, stream::INIT, 0);
        let locals = views
            .locals
            .iter()
            .map(|v| LocalBranch {
                view: v.indices.clone(),
                dense1: DenseLayer::glorot(v.len(), l1, &mut rng),
                norm1: norm_layer(l1),
                dense2: DenseLayer::glorot(l1, l2, &mut rng),
                norm2: large.then(|| norm_layer(l2)),
                dense3: DenseLayer::glorot(l2, 1, &mut rng),
            })
            .collect::<Vec<_>>();
        let global = GlobalBranch {
            dense1: DenseLayer::glorot(views.n_features(), g1, &mut rng),
            norm1: norm_layer(g1),
            dense2: DenseLayer::glorot(g1, e, &mut rng),
            norm2: large.then(|| norm_layer(e)),
        };
        let d = e + locals.len();
        let (attention, head_in) = if config.attention {
            let a = config.attention_width.unwrap_or(d);
            let att = Attention {
                query: DenseLayer::glorot(d, a, &mut rng),
                key: DenseLayer::glorot(d, a, &mut rng),
                value: DenseLayer::glorot(d, a, &mut rng),
            };
            (Some(att), a)
        } else {
            (None, d)
        };
        let head = DenseLayer::glorot(head_in, 1, &mut rng);
        Ok(Model {
            config,
            views: views.clone(),
            locals,
            global,
            attention,
            head,
        })
    }

    /// Global-view MLP: no local views, no attention.
    pub fn dnn(n_features: usize, config: ModelConfig, seed: u64) -> Result<Model> {
        let views = ViewSet {
            global: crate::views::FeatureView::global(n_features),
            locals: Vec::new(),
        };
        Model::new(&views, ModelConfig { attention: false, ..config }, seed)
    }

    pub fn n_features(&self) -> usize {
        self.views.n_features()
    }

    /// Width of `F*`.
    pub fn concat_width(&self) -> usize {
        self.config.global_embed_width + self.locals.len()
    }

    /// Evaluation-mode forward pass (no dropout).
    pub fn forward(&self, x: &Matrix) -> Result<ForwardTrace> {
        self.forward_with(x, None)
    }

    /// Forward pass; `dropout_rng` enables dropout when the rate is positive.
    pub fn forward_with(&self, x: &Matrix, mut dropout_rng: Option<&mut Rng>) -> Result<ForwardTrace> {
        if x.cols() != self.n_features() {
            return Err(Error::Shape(format!(
                "batch has {} features, model expects {}",
                x.cols(),
                self.n_features()
            )));
        }
        let n = x.rows();
        let rate = self.config.dropout;

        let mut locals = Vec::with_capacity(self.locals.len());
        let mut local_probs = Vec::with_capacity(self.locals.len());
        let mut local_logits = Vec::with_capacity(self.locals.len());
        for b in &self.locals {
            let d = dropout_rng.as_deref_mut().filter(|_| rate > 0.0).map(|r| (rate, r));
            let t = hidden_forward(&b.dense1, &b.norm1, &b.dense2, b.norm2.as_ref(), x.select_cols(&b.view), d);
            let logit = b.dense3.forward(&t.h2).into_vec();
            local_probs.push(logit.iter().map(|&z| sigmoid_scalar(z)).collect::<Vec<_>>());
            local_logits.push(logit);
            locals.push(t);
        }
        let d = dropout_rng.as_deref_mut().filter(|_| rate > 0.0).map(|r| (rate, r));
        let g = &self.global;
        let global = hidden_forward(&g.dense1, &g.norm1, &g.dense2, g.norm2.as_ref(), x.clone(), d);

        let prob_cols: Vec<Matrix> = local_probs.iter().map(|p| column(p)).collect();
        let mut parts: Vec<&Matrix> = vec![&global.h2];
        parts.extend(prob_cols.iter());
        let fstar = Matrix::hcat(&parts);

        let (query, key, value, attention, head_input) = match &self.attention {
            Some(att) => {
                let q = att.query.forward(&fstar);
                let k = att.key.forward(&fstar);
                let v = att.value.forward(&fstar);
                let mut weights = Vec::with_capacity(n);
                let mut out = Matrix::zeros(n, q.cols());
                for r in 0..n {
                    let (w, o) = attend(q.row(r), k.row(r), v.row(r));
                    out.row_mut(r).copy_from_slice(&o);
                    weights.push(w);
                }
                (Some(q), Some(k), Some(v), weights, out)
            }
            None => (None, None, None, Vec::new(), fstar.clone()),
        };
        let final_probs = self
            .head
            .forward(&head_input)
            .into_vec()
            .into_iter()
            .map(sigmoid_scalar)
            .collect();
        Ok(ForwardTrace {
            locals,
            local_probs,
            global,
            fstar,
            query,
            key,
            value,
            attention,
            head_input,
            final_probs,
        })
    }

    /// `bce(final) + lambda * sum_i bce(local_i)` and its logit gradients.
    pub fn loss(&self, trace: &ForwardTrace, labels: &[f64]) -> (LossValue, LossGrads) {
        let n = labels.len() as f64;
        let lambda = self.config.aux_loss_weight;
        let logit_grad = |p: &[f64], w: f64| -> Vec<f64> { p.iter().zip(labels).map(|(p, y)| w * (p - y) / n).collect() };
        let (final_bce, _) = bce_loss(&trace.final_probs, labels);
        let local_bce: Vec<f64> = trace.local_probs.iter().map(|p| bce_loss(p, labels).0).collect();
        let total = final_bce + lambda * local_bce.iter().sum::<f64>();
        let grads = LossGrads {
            final_logit: logit_grad(&trace.final_probs, 1.0),
            local_logits: trace.local_probs.iter().map(|p| logit_grad(p, lambda)).collect(),
        };
        (
            LossValue {
                total,
                final_bce,
                local_bce,
            },
            grads,
        )
    }

    /// Accumulates parameter gradients for the given logit gradients.
    pub fn backward(&mut self, trace: &ForwardTrace, grads: &LossGrads) {
        let n = trace.final_probs.len();
        let g_head_in = self.head.backward(&trace.head_input, &column(&grads.final_logit));
        let g_fstar = match &mut self.attention {
            Some(att) => {
                let (q, k, v) = (
                    trace.query.as_ref().expect("attention trace"),
                    trace.key.as_ref().expect("attention trace"),
                    trace.value.as_ref().expect("attention trace"),
                );
                let a = q.cols();
                let mut gq = Matrix::zeros(n, a);
                let mut gk = Matrix::zeros(n, a);
                let mut gv = Matrix::zeros(n, a);
                let mut d_a = vec![0.0; a];
                for r in 0..n {
                    let w = &trace.attention[r];
                    let (qr, kr, vr, g) = (q.row(r), k.row(r), v.row(r), g_head_in.row(r));
                    for i in 0..a {
                        let wi = w.row(i);
                        for j in 0..a {
                            d_a[j] = g[i] * vr[j];
                            gv.row_mut(r)[j] += wi[j] * g[i];
                        }
                        let inner: f64 = wi.iter().zip(&d_a).map(|(x, y)| x * y).sum();
                        for j in 0..a {
                            let d_s = wi[j] * (d_a[j] - inner);
                            gq.row_mut(r)[i] += d_s * kr[j];
                            gk.row_mut(r)[j] += d_s * qr[i];
                        }
                    }
                }
                let mut g = att.query.backward(&trace.fstar, &gq);
                g.add_assign(&att.key.backward(&trace.fstar, &gk));
                g.add_assign(&att.value.backward(&trace.fstar, &gv));
                g
            }
            None => g_head_in,
        };

        let e = self.config.global_embed_width;
        let g_embed = g_fstar.col_block(0, e);
        let gb = &mut self.global;
        hidden_backward(&mut gb.dense1, &mut gb.norm1, &mut gb.dense2, gb.norm2.as_mut(), &trace.global, &g_embed);

        for (i, b) in self.locals.iter_mut().enumerate() {
            let p = &trace.local_probs[i];
            let d_logit: Vec<f64> = (0..n)
                .map(|r| grads.local_logits[i][r] + g_fstar.get(r, e + i) * p[r] * (1.0 - p[r]))
                .collect();
            let t = &trace.locals[i];
            let g_h2 = b.dense3.backward(&t.h2, &column(&d_logit));
            hidden_backward(&mut b.dense1, &mut b.norm1, &mut b.dense2, b.norm2.as_mut(), t, &g_h2);
        }
    }

    /// Zeroes gradients, then runs forward, loss and backward on one batch.
    pub fn compute_gradients(&mut self, x: &Matrix, labels: &[f64], dropout_rng: Option<&mut Rng>) -> Result<LossValue> {
        self.zero_grads();
        let trace = self.forward_with(x, dropout_rng)?;
        let (value, grads) = self.loss(&trace, labels);
        self.backward(&trace, &grads);
        Ok(value)
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.final_probs)
    }

    /// Labels are 1 iff the score is at least `threshold`.
    pub fn predict(&self, x: &Matrix, threshold: f64) -> Result<(Vec<u8>, Vec<f64>)> {
        let scores = self.predict_proba(x)?;
        Ok((crate::metrics::threshold_labels(&scores, threshold), scores))
    }

    /// One JSON header line, then the parameter blocks.
    pub fn save<W: Write>(&mut self, mut out: W) -> Result<()> {
        let header = CheckpointHeader {
            config: self.config,
            views: serde_json::from_str(&self.views.to_json())?,
            view_digest: self.views.digest(),
        };
        let io = |e| Error::io("checkpoint", e);
        writeln!(out, "{}", serde_json::to_string(&header)?).map_err(io)?;
        write_params(&mut out, self).map_err(io)
    }

    pub fn load<R: BufRead>(mut input: R) -> Result<Model> {
        let mut line = String::new();
        input.read_line(&mut line).map_err(|e| Error::io("checkpoint", e))?;
        let header: CheckpointHeader = serde_json::from_str(line.trim_end())?;
        let views = ViewSet::from_json(&header.views.to_string())?;
        if views.digest() != header.view_digest {
            return Err(Error::format("checkpoint", "view set digest mismatch"));
        }
        let mut model = Model::new(&views, header.config, 0)?;
        load_params(&mut model, &read_params(input)?)?;
        Ok(model)
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    config: ModelConfig,
    views: serde_json::Value,
    view_digest: String,
}

fn visit_hidden(
    prefix: &str,
    dense1: &mut DenseLayer,
    norm1: &mut NormLayer,
    dense2: &mut DenseLayer,
    norm2: Option<&mut NormLayer>,
    f: &mut dyn FnMut(ParamBlock<'_>),
) {
    dense1.visit(&format!("{prefix}.dense1"), f);
    norm1.visit(&format!("{prefix}.norm1"), f);
    dense2.visit(&format!("{prefix}.dense2"), f);
    if let Some(n) = norm2 {
        n.visit(&format!("{prefix}.norm2"), f);
    }
}

impl Parameterized for Model {
    fn visit_params(&mut self, f: &mut dyn FnMut(ParamBlock<'_>)) {
        for (i, b) in self.locals.iter_mut().enumerate() {
            let prefix = format!("local{i}");
            visit_hidden(&prefix, &mut b.dense1, &mut b.norm1, &mut b.dense2, b.norm2.as_mut(), f);
            b.dense3.visit(&format!("{prefix}.dense3"), f);
        }
        let g = &mut self.global;
        visit_hidden("global", &mut g.dense1, &mut g.norm1, &mut g.dense2, g.norm2.as_mut(), f);
        if let Some(att) = &mut self.attention {
            att.query.visit("attention.query", f);
            att.key.visit("attention.key", f);
            att.value.visit("attention.value", f);
        }
        self.head.visit("head", f);
    }
}
