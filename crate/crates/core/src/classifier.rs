//! Fully connected ReLU network with inverted dropout, trained with
//! cross-entropy and Adam.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use thiserror::Error;

use crate::data::Dataset;
use crate::optim::{Adam, AdamConfig};
use crate::util::{fmt_sig9, rng_from_seed, Rng};

#[derive(Debug, Error)]
pub enum ClfError {
    #[error("invalid layer sizes {0:?}: need an input width >= 1 and at least 2 outputs")]
    BadDims(Vec<usize>),
    #[error("dropout rate must lie in [0, 1), got {0}")]
    BadDropout(f64),
    #[error("input has dimension {found}, model expects {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("non-finite input")]
    NonFinite,
    #[error("label {label} outside the model's {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("label {0} has no examples")]
    MissingLabel(usize),
    #[error("training set is empty")]
    EmptyTrain,
    #[error("epochs and batch size must be at least 1")]
    BadConfig,
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("model file, line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("cannot read or write {path}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, ClfError>;

/// Hidden widths of the downstream classifier.
pub const DEFAULT_HIDDEN: [usize; 3] = [128, 64, 32];
pub const DEFAULT_DROPOUT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Anything that assigns a label to every row of a feature matrix.
pub trait Predictor {
    fn predict_rows(&self, x: ArrayView2<f64>) -> Vec<usize>;
}

/// Affine layer; `w` is `in x out` so a batch maps as `x.dot(w) + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<Dense>,
    dropout: f64,
}

/// Per-hidden-layer dropout multipliers, `batch x width` each.
pub type DropoutMasks = Vec<Array2<f64>>;

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 || dims[0] == 0 || *dims.last().unwrap() < 2 || dims.contains(&0) {
        return Err(ClfError::BadDims(dims.to_vec()));
    }
    Ok(())
}

fn relu(v: f64) -> f64 {
    v.max(0.0)
}

impl MlpModel {
    /// Weights uniform in `+-1/sqrt(fan_in)`, biases zero.
    pub fn new(dims: &[usize], dropout: f64, seed: u64) -> Result<Self> {
        check_dims(dims)?;
        if !(0.0..1.0).contains(&dropout) {
            return Err(ClfError::BadDropout(dropout));
        }
        let mut rng = rng_from_seed(seed);
        let layers = dims
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                Dense {
                    w: Array2::from_shape_fn((w[0], w[1]), |_| rng.random_range(-bound..bound)),
                    b: Array1::zeros(w[1]),
                }
            })
            .collect();
        Ok(Self { layers, dropout })
    }

    /// The default classifier for `d` inputs and `k` labels.
    pub fn init(d: usize, k: usize, seed: u64) -> Result<Self> {
        let mut dims = vec![d];
        dims.extend(DEFAULT_HIDDEN);
        dims.push(k);
        Self::new(&dims, DEFAULT_DROPOUT, seed)
    }

    /// All-zero parameters.
    pub fn zeros(dims: &[usize], dropout: f64) -> Result<Self> {
        check_dims(dims)?;
        Ok(Self {
            layers: dims
                .windows(2)
                .map(|w| Dense {
                    w: Array2::zeros((w[0], w[1])),
                    b: Array1::zeros(w[1]),
                })
                .collect(),
            dropout,
        })
    }

    pub fn from_layers(layers: Vec<Dense>, dropout: f64) -> Result<Self> {
        let mut dims = vec![layers.first().map_or(0, |l| l.w.nrows())];
        for (i, l) in layers.iter().enumerate() {
            if l.w.nrows() != dims[i] || l.b.len() != l.w.ncols() {
                return Err(ClfError::BadDims(dims));
            }
            dims.push(l.w.ncols());
        }
        check_dims(&dims)?;
        Ok(Self { layers, dropout })
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].w.nrows()];
        d.extend(self.layers.iter().map(|l| l.w.ncols()));
        d
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().unwrap().w.ncols()
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    /// Draws inverted-dropout multipliers (0 or `1/(1-p)`) for a batch.
    pub fn sample_masks(&self, batch: usize, rng: &mut Rng) -> DropoutMasks {
        let keep = 1.0 - self.dropout;
        let scale = 1.0 / keep;
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(|l| {
                Array2::from_shape_fn((batch, l.w.ncols()), |_| {
                    if rng.random::<f64>() < keep {
                        scale
                    } else {
                        0.0
                    }
                })
            })
            .collect()
    }

    /// Logits for a batch. `masks` multiplies each hidden activation; `None`
    /// is evaluation mode.
    pub fn forward_batch(&self, x: ArrayView2<f64>, masks: Option<&DropoutMasks>) -> Array2<f64> {
        self.forward_cached(x, masks).0
    }

    fn forward_cached(
        &self,
        x: ArrayView2<f64>,
        masks: Option<&DropoutMasks>,
    ) -> (Array2<f64>, Vec<Array2<f64>>, Vec<Array2<f64>>) {
        // inputs[l] feeds layer l; pre[l] is the hidden pre-activation of layer l
        let mut inputs = vec![x.to_owned()];
        let mut pre = Vec::with_capacity(self.layers.len() - 1);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let z = inputs[l].dot(&layer.w) + &layer.b;
            if l == last {
                return (z, inputs, pre);
            }
            let mut a = z.mapv(relu);
            if let Some(m) = masks {
                a *= &m[l];
            }
            pre.push(z);
            inputs.push(a);
        }
        unreachable!("network has at least one layer")
    }

    /// Logits for one input.
    pub fn forward(&self, x: &[f64], mode: Mode, rng: &mut Rng) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let xv = ArrayView2::from_shape((1, x.len()), x).expect("row shape");
        let logits = match mode {
            Mode::Eval => self.forward_batch(xv, None),
            Mode::Train => {
                let masks = self.sample_masks(1, rng);
                self.forward_batch(xv, Some(&masks))
            }
        };
        Ok(logits.row(0).to_vec())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(ClfError::Dimension {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(ClfError::NonFinite);
        }
        Ok(())
    }

    /// Argmax of the evaluation-mode logits, ties to the smallest label.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        self.check_input(x)?;
        let xv = ArrayView2::from_shape((1, x.len()), x).expect("row shape");
        Ok(argmax(self.forward_batch(xv, None).row(0).as_slice().expect("row")))
    }

    /// Mean cross-entropy of a batch and its gradient for every layer.
    pub fn loss_and_grad(
        &self,
        x: ArrayView2<f64>,
        y: &[usize],
        masks: Option<&DropoutMasks>,
    ) -> (f64, Vec<Dense>) {
        let n = x.nrows();
        let (logits, inputs, pre) = self.forward_cached(x, masks);
        let (loss, mut delta) = softmax_xent(&logits, y);
        let mut grads = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let gw = inputs[l].t().dot(&delta);
            let gb = delta.sum_axis(Axis(0));
            grads.push(Dense { w: gw, b: gb });
            if l > 0 {
                let mut back = delta.dot(&self.layers[l].w.t());
                if let Some(m) = masks {
                    back *= &m[l - 1];
                }
                back.zip_mut_with(&pre[l - 1], |g, &z| {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                });
                delta = back;
            }
        }
        grads.reverse();
        debug_assert_eq!(n, y.len());
        (loss, grads)
    }

    pub fn render(&self) -> String {
        let dims: Vec<String> = self.dims().iter().map(|d| d.to_string()).collect();
        let mut s = format!("# mlp\ndims={}\ndropout={}\n", dims.join(","), fmt_sig9(self.dropout));
        for (i, l) in self.layers.iter().enumerate() {
            s.push_str(&format!("layer {i} weights\n"));
            for row in l.w.rows() {
                let vals: Vec<String> = row.iter().map(|&v| fmt_sig9(v)).collect();
                s.push_str(&vals.join(","));
                s.push('\n');
            }
            s.push_str(&format!("layer {i} bias\n"));
            let vals: Vec<String> = l.b.iter().map(|&v| fmt_sig9(v)).collect();
            s.push_str(&vals.join(","));
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let lines: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
            .collect();
        let mut it = lines.into_iter();
        let bad = |line: usize, msg: &str| ClfError::Parse {
            line,
            msg: msg.to_string(),
        };
        let floats = |line: usize, s: &str| -> Result<Vec<f64>> {
            s.split(',')
                .map(|v| v.parse::<f64>().map_err(|_| bad(line, "invalid number")))
                .collect()
        };
        let (ln, dims_line) = it.next().ok_or_else(|| bad(0, "missing dims"))?;
        let dims: Vec<usize> = dims_line
            .strip_prefix("dims=")
            .ok_or_else(|| bad(ln, "expected dims="))?
            .split(',')
            .map(|v| v.parse().map_err(|_| bad(ln, "invalid dimension")))
            .collect::<Result<_>>()?;
        check_dims(&dims)?;
        let (ln, drop_line) = it.next().ok_or_else(|| bad(ln, "missing dropout"))?;
        let dropout: f64 = drop_line
            .strip_prefix("dropout=")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(ln, "expected dropout=<rate>"))?;
        let mut layers = Vec::new();
        for (i, w) in dims.windows(2).enumerate() {
            let (ln, head) = it.next().ok_or_else(|| bad(0, "truncated file"))?;
            if head != format!("layer {i} weights") {
                return Err(bad(ln, "expected layer weights header"));
            }
            let mut data = Vec::with_capacity(w[0] * w[1]);
            for _ in 0..w[0] {
                let (ln, row) = it.next().ok_or_else(|| bad(0, "truncated file"))?;
                let vals = floats(ln, row)?;
                if vals.len() != w[1] {
                    return Err(bad(ln, "wrong row width"));
                }
                data.extend(vals);
            }
            let (ln, head) = it.next().ok_or_else(|| bad(0, "truncated file"))?;
            if head != format!("layer {i} bias") {
                return Err(bad(ln, "expected layer bias header"));
            }
            let (ln, row) = it.next().ok_or_else(|| bad(0, "truncated file"))?;
            let b = floats(ln, row)?;
            if b.len() != w[1] {
                return Err(bad(ln, "wrong bias width"));
            }
            layers.push(Dense {
                w: Array2::from_shape_vec((w[0], w[1]), data).expect("shape checked"),
                b: Array1::from(b),
            });
        }
        if let Some((ln, _)) = it.next() {
            return Err(bad(ln, "trailing content"));
        }
        Self::from_layers(layers, dropout)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render()).map_err(|source| ClfError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| ClfError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }
}

impl Predictor for MlpModel {
    fn predict_rows(&self, x: ArrayView2<f64>) -> Vec<usize> {
        let logits = self.forward_batch(x, None);
        logits
            .rows()
            .into_iter()
            .map(|r| argmax(r.as_slice().expect("row")))
            .collect()
    }
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Mean softmax cross-entropy and its gradient with respect to the logits.
fn softmax_xent(logits: &Array2<f64>, y: &[usize]) -> (f64, Array2<f64>) {
    let n = logits.nrows() as f64;
    let mut grad = logits.clone();
    let mut loss = 0.0;
    for (mut row, &label) in grad.rows_mut().into_iter().zip(y) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        loss -= (row[label] / sum).ln();
        row.mapv_inplace(|v| v / sum / n);
        row[label] -= 1.0 / n;
    }
    (loss / n, grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 64,
            seed: 0,
            adam: AdamConfig::default(),
            patience: 10,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitHistory {
    /// Mean training loss per epoch.
    pub train_loss: Vec<f64>,
    /// Validation balanced accuracy per epoch.
    pub valid_ba: Vec<f64>,
    pub best_epoch: usize,
}

fn check_labels(ds: &Dataset, classes: usize) -> Result<()> {
    if let Some(r) = ds.records().iter().find(|r| r.label >= classes) {
        return Err(ClfError::Label {
            label: r.label,
            classes,
        });
    }
    Ok(())
}

/// Mini-batch training; returns the parameters of the epoch with the best
/// validation balanced accuracy.
pub fn fit(
    mut model: MlpModel,
    train: &Dataset,
    valid: &Dataset,
    cfg: &FitConfig,
) -> Result<(MlpModel, FitHistory)> {
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(ClfError::BadConfig);
    }
    if train.is_empty() {
        return Err(ClfError::EmptyTrain);
    }
    if train.feature_dim() != model.input_dim() {
        return Err(ClfError::Dimension {
            expected: model.input_dim(),
            found: train.feature_dim(),
        });
    }
    check_labels(train, model.num_classes())?;
    check_labels(valid, model.num_classes())?;

    let x = train.all_features();
    let y = train.labels();
    let xv = valid.all_features();
    let yv = valid.labels();
    let mut rng = rng_from_seed(cfg.seed);
    let mut optims: Vec<(Adam, Adam)> = model
        .layers
        .iter()
        .map(|l| (Adam::new(l.w.len(), cfg.adam), Adam::new(l.b.len(), cfg.adam)))
        .collect();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = FitHistory::default();
    let mut best: Option<(f64, MlpModel)> = None;
    let mut since_best = 0;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let xb = x.select(Axis(0), chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| y[i]).collect();
            let masks = model.sample_masks(chunk.len(), &mut rng);
            let (loss, grads) = model.loss_and_grad(xb.view(), &yb, Some(&masks));
            if !loss.is_finite() {
                return Err(ClfError::NonFiniteLoss { epoch, batch });
            }
            epoch_loss += loss * chunk.len() as f64;
            for ((layer, g), (ow, ob)) in model.layers.iter_mut().zip(&grads).zip(&mut optims) {
                ow.step(
                    layer.w.as_slice_mut().expect("contiguous"),
                    g.w.as_slice().expect("contiguous"),
                );
                ob.step(
                    layer.b.as_slice_mut().expect("contiguous"),
                    g.b.as_slice().expect("contiguous"),
                );
            }
        }
        history.train_loss.push(epoch_loss / train.len() as f64);
        let ba = balanced_accuracy_from(&model.predict_rows(xv.view()), &yv, model.num_classes())?;
        history.valid_ba.push(ba);
        if best.as_ref().is_none_or(|(b, _)| ba > *b) {
            best = Some((ba, model.clone()));
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    Ok((best.expect("at least one epoch").1, history))
}

/// Mean per-class recall; every class in `0..classes` must occur in `truth`.
pub fn balanced_accuracy_from(preds: &[usize], truth: &[usize], classes: usize) -> Result<f64> {
    let mut hits = vec![0usize; classes];
    let mut totals = vec![0usize; classes];
    for (&p, &t) in preds.iter().zip(truth) {
        if t >= classes {
            return Err(ClfError::Label { label: t, classes });
        }
        totals[t] += 1;
        if p == t {
            hits[t] += 1;
        }
    }
    if let Some(k) = totals.iter().position(|&c| c == 0) {
        return Err(ClfError::MissingLabel(k));
    }
    Ok(hits
        .iter()
        .zip(&totals)
        .map(|(&h, &t)| h as f64 / t as f64)
        .sum::<f64>()
        / classes as f64)
}

pub fn balanced_accuracy(model: &impl Predictor, ds: &Dataset) -> Result<f64> {
    let preds = model.predict_rows(ds.all_features().view());
    balanced_accuracy_from(&preds, &ds.labels(), ds.num_labels())
}
