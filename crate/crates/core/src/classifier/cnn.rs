//! Small convolutional classifier with hand-written backpropagation.
//!
//! Layer stack: conv(k x k) -> activation -> max-pool -> conv(k x k) ->
//! activation -> max-pool -> head -> fully connected -> logistic. The head
//! either flattens the pooled maps or keeps each channel's global maximum.
//! Convolutions are "valid" cross-correlations; pooling uses
//! non-overlapping windows and drops incomplete edges. All parameters live
//! in one flat vector.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ClassifierInput, Score, DEFAULT_CNN_THRESHOLD};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

/// How the second pooled map feeds the dense layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// One weight per channel and position.
    Dense,
    /// One weight per channel, applied to the channel's maximum over all
    /// positions. Translation invariant.
    GlobalMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_width: usize,
    pub input_height: usize,
    pub conv1_filters: usize,
    pub conv2_filters: usize,
    pub kernel: usize,
    /// Pooling window and stride; 1 disables pooling.
    pub pool: usize,
    pub activation: Activation,
    pub head: Head,
}

impl Architecture {
    /// 8 and 16 filters of 3x3 with 2x2 max-pooling and a global-max head.
    pub fn standard(input_width: usize, input_height: usize) -> Self {
        Self {
            input_width,
            input_height,
            conv1_filters: 8,
            conv2_filters: 16,
            kernel: 3,
            pool: 2,
            activation: Activation::Relu,
            head: Head::GlobalMax,
        }
    }

    fn features(&self, s: &Shapes) -> usize {
        match self.head {
            Head::Dense => self.conv2_filters * s.p2.0 * s.p2.1,
            Head::GlobalMax => self.conv2_filters,
        }
    }

    fn shapes(&self) -> Result<Shapes> {
        let k = self.kernel;
        let conv = |w: usize, h: usize| -> Option<(usize, usize)> {
            (w >= k && h >= k).then(|| (w - k + 1, h - k + 1))
        };
        let pool = |(w, h): (usize, usize)| (w / self.pool, h / self.pool);
        if k == 0 || self.pool == 0 || self.conv1_filters == 0 || self.conv2_filters == 0 {
            return Err(Error::config("architecture", "sizes must be positive"));
        }
        let c1 = conv(self.input_width, self.input_height)
            .ok_or_else(|| Error::config("architecture", "input smaller than kernel"))?;
        let p1 = pool(c1);
        let c2 = conv(p1.0, p1.1)
            .ok_or_else(|| Error::config("architecture", "first pooled map smaller than kernel"))?;
        let p2 = pool(c2);
        if p2.0 == 0 || p2.1 == 0 {
            return Err(Error::config("architecture", "second pooled map is empty"));
        }
        Ok(Shapes { c1, p1, c2, p2 })
    }

    pub fn layout(&self) -> Result<Layout> {
        let s = self.shapes()?;
        let kk = self.kernel * self.kernel;
        let (f1, f2) = (self.conv1_filters, self.conv2_filters);
        let mut at = 0;
        let mut take = |len: usize| {
            let r = at..at + len;
            at += len;
            r
        };
        Ok(Layout {
            conv1_w: take(f1 * kk),
            conv1_b: take(f1),
            conv2_w: take(f2 * f1 * kk),
            conv2_b: take(f2),
            fc_w: take(self.features(&s)),
            fc_b: take(1),
            shapes: s,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Shapes {
    c1: (usize, usize),
    p1: (usize, usize),
    c2: (usize, usize),
    p2: (usize, usize),
}

/// Offsets of each tensor in the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub conv1_w: Range<usize>,
    pub conv1_b: Range<usize>,
    pub conv2_w: Range<usize>,
    pub conv2_b: Range<usize>,
    pub fc_w: Range<usize>,
    pub fc_b: Range<usize>,
    shapes: Shapes,
}

impl Layout {
    pub fn len(&self) -> usize {
        self.fc_b.end
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Named tensors with their shapes, in storage order.
    pub fn tensors(&self, arch: &Architecture) -> Vec<(&'static str, Vec<usize>, Range<usize>)> {
        let (k, f1, f2) = (arch.kernel, arch.conv1_filters, arch.conv2_filters);
        vec![
            ("conv1.weight", vec![f1, 1, k, k], self.conv1_w.clone()),
            ("conv1.bias", vec![f1], self.conv1_b.clone()),
            ("conv2.weight", vec![f2, f1, k, k], self.conv2_w.clone()),
            ("conv2.bias", vec![f2], self.conv2_b.clone()),
            (
                "fc.weight",
                match arch.head {
                    Head::Dense => vec![f2, self.shapes.p2.1, self.shapes.p2.0],
                    Head::GlobalMax => vec![f2],
                },
                self.fc_w.clone(),
            ),
            ("fc.bias", vec![1], self.fc_b.clone()),
        ]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    #[serde(default)]
    pub weight_decay: f64,
    /// Mean training loss before the first update.
    pub initial_loss: Option<f64>,
    /// Mean training loss of each epoch.
    pub loss_curve: Vec<f64>,
    pub validation_accuracy: Option<f64>,
    /// Free-form description of the training corpus.
    pub corpus: Option<String>,
    /// Probability threshold the pipeline uses by default, chosen for a
    /// target false-alarm rate on noise windows.
    #[serde(default)]
    pub operating_threshold: Option<f64>,
    /// JSON record of how `operating_threshold` was calibrated.
    #[serde(default)]
    pub calibration: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    arch: Architecture,
    layout: Layout,
    params: Vec<f64>,
    pub metadata: TrainingMetadata,
}

/// Gradient of the loss with respect to every parameter, in layout order.
pub type Gradients = Vec<f64>;

/// Per-layer intermediate values kept for the backward pass.
struct Trace {
    c1_pre: Vec<f64>,
    p1: Vec<f64>,
    p1_arg: Vec<usize>,
    c2_pre: Vec<f64>,
    /// Dense-layer input and, per feature, the index into `c2_pre` it
    /// was taken from.
    feat: Vec<f64>,
    feat_arg: Vec<usize>,
    logit: f64,
}

impl CnnModel {
    pub fn zeros(arch: Architecture) -> Result<Self> {
        let layout = arch.layout()?;
        Ok(Self {
            params: vec![0.0; layout.len()],
            arch,
            layout,
            metadata: TrainingMetadata::default(),
        })
    }

    /// He-normal convolution weights, LeCun-normal dense weights, zero
    /// biases.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kk = (arch.kernel * arch.kernel) as f64;
        let fill = |slice: &mut [f64], std: f64, rng: &mut ChaCha8Rng| {
            let n = Normal::new(0.0, std).unwrap();
            slice.iter_mut().for_each(|w| *w = n.sample(rng));
        };
        let l = m.layout.clone();
        fill(
            &mut m.params[l.conv1_w.clone()],
            (2.0 / kk).sqrt(),
            &mut rng,
        );
        fill(
            &mut m.params[l.conv2_w.clone()],
            (2.0 / (kk * arch.conv1_filters as f64)).sqrt(),
            &mut rng,
        );
        fill(
            &mut m.params[l.fc_w.clone()],
            (1.0 / l.fc_w.len() as f64).sqrt(),
            &mut rng,
        );
        m.metadata.seed = seed;
        Ok(m)
    }

    pub fn from_parts(
        arch: Architecture,
        params: Vec<f64>,
        metadata: TrainingMetadata,
    ) -> Result<Self> {
        let layout = arch.layout()?;
        if params.len() != layout.len() {
            return Err(Error::dims(
                format!("{} parameters", layout.len()),
                format!("{} parameters", params.len()),
            ));
        }
        Ok(Self {
            arch,
            layout,
            params,
            metadata,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// `true` for every parameter that is a weight rather than a bias.
    pub(crate) fn weight_mask(&self) -> Vec<bool> {
        let l = &self.layout;
        let mut mask = vec![false; self.params.len()];
        for r in [&l.conv1_w, &l.conv2_w, &l.fc_w] {
            mask[r.clone()].fill(true);
        }
        mask
    }

    pub fn input_dims(&self) -> (usize, usize) {
        (self.arch.input_width, self.arch.input_height)
    }

    fn check_input(&self, input: &ClassifierInput) -> Result<()> {
        if input.dims() != self.input_dims() {
            return Err(Error::dims(
                format!(
                    "{}x{} model input",
                    self.arch.input_width, self.arch.input_height
                ),
                format!("{}x{} grid", input.grid.width(), input.grid.height()),
            ));
        }
        Ok(())
    }

    /// Pre-sigmoid output.
    pub fn logit(&self, input: &ClassifierInput) -> Result<f64> {
        self.check_input(input)?;
        Ok(self.forward(input.grid.as_slice()).logit)
    }

    pub fn predict(&self, input: &ClassifierInput) -> Result<Score> {
        self.predict_with_threshold(input, DEFAULT_CNN_THRESHOLD)
    }

    pub fn predict_with_threshold(&self, input: &ClassifierInput, threshold: f64) -> Result<Score> {
        Ok(Score {
            value: sigmoid(self.logit(input)?),
            threshold,
        })
    }

    /// Binary cross-entropy of one sample.
    pub fn loss(&self, input: &ClassifierInput, label: bool) -> Result<f64> {
        Ok(bce_with_logit(self.logit(input)?, label))
    }

    /// Loss and its gradient for one sample, accumulated into `grad`.
    pub fn accumulate_gradient(
        &self,
        input: &ClassifierInput,
        label: bool,
        grad: &mut [f64],
    ) -> Result<f64> {
        self.check_input(input)?;
        assert_eq!(grad.len(), self.params.len());
        let x = input.grid.as_slice();
        let trace = self.forward(x);
        self.backward(x, &trace, label, grad);
        Ok(bce_with_logit(trace.logit, label))
    }

    fn act(&self, v: f64) -> f64 {
        match self.arch.activation {
            Activation::Relu => v.max(0.0),
            Activation::Identity => v,
        }
    }

    fn act_grad(&self, pre: f64) -> f64 {
        match self.arch.activation {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    fn forward(&self, x: &[f64]) -> Trace {
        let a = &self.arch;
        let l = &self.layout;
        let s = l.shapes;
        let p = &self.params;
        let (iw, ih) = (a.input_width, a.input_height);

        let c1_pre = conv_forward(
            x,
            1,
            (iw, ih),
            &p[l.conv1_w.clone()],
            &p[l.conv1_b.clone()],
            a.kernel,
        );
        let c1: Vec<f64> = c1_pre.iter().map(|&v| self.act(v)).collect();
        let (p1, p1_arg) = max_pool(&c1, a.conv1_filters, s.c1, a.pool);

        let c2_pre = conv_forward(
            &p1,
            a.conv1_filters,
            s.p1,
            &p[l.conv2_w.clone()],
            &p[l.conv2_b.clone()],
            a.kernel,
        );
        let c2: Vec<f64> = c2_pre.iter().map(|&v| self.act(v)).collect();
        let (p2, p2_arg) = max_pool(&c2, a.conv2_filters, s.c2, a.pool);
        let (feat, feat_arg) = match a.head {
            Head::Dense => (p2, p2_arg),
            Head::GlobalMax => {
                let plane = s.p2.0 * s.p2.1;
                let mut vals = Vec::with_capacity(a.conv2_filters);
                let mut args = Vec::with_capacity(a.conv2_filters);
                for c in 0..a.conv2_filters {
                    let mut best = c * plane;
                    for i in c * plane..(c + 1) * plane {
                        if p2[i] > p2[best] {
                            best = i;
                        }
                    }
                    vals.push(p2[best]);
                    args.push(p2_arg[best]);
                }
                (vals, args)
            }
        };

        let logit = dot(&feat, &p[l.fc_w.clone()]) + p[l.fc_b.start];
        Trace {
            c1_pre,
            p1,
            p1_arg,
            c2_pre,
            feat,
            feat_arg,
            logit,
        }
    }

    fn backward(&self, x: &[f64], t: &Trace, label: bool, grad: &mut [f64]) {
        let a = &self.arch;
        let l = &self.layout;
        let s = l.shapes;
        let p = &self.params;
        let y = if label { 1.0 } else { 0.0 };
        let dz = sigmoid(t.logit) - y;

        // dense
        for (g, &v) in grad[l.fc_w.clone()].iter_mut().zip(&t.feat) {
            *g += dz * v;
        }
        grad[l.fc_b.start] += dz;

        // head and pool2 -> conv2 pre-activation
        let mut d_c2 = vec![0.0; t.c2_pre.len()];
        for (&idx, &w) in t.feat_arg.iter().zip(&p[l.fc_w.clone()]) {
            d_c2[idx] += dz * w;
        }
        for (d, &pre) in d_c2.iter_mut().zip(&t.c2_pre) {
            *d *= self.act_grad(pre);
        }

        let mut d_p1 = vec![0.0; t.p1.len()];
        let (w2, rest) = grad[l.conv2_w.start..].split_at_mut(l.conv2_w.len());
        conv_backward(
            &t.p1,
            a.conv1_filters,
            s.p1,
            &p[l.conv2_w.clone()],
            a.kernel,
            &d_c2,
            a.conv2_filters,
            w2,
            &mut rest[..l.conv2_b.len()],
            Some(&mut d_p1),
        );

        // pool1 -> conv1 pre-activation
        let mut d_c1 = vec![0.0; t.c1_pre.len()];
        for (&idx, &d) in t.p1_arg.iter().zip(&d_p1) {
            d_c1[idx] += d;
        }
        for (d, &pre) in d_c1.iter_mut().zip(&t.c1_pre) {
            *d *= self.act_grad(pre);
        }
        let (w1, rest) = grad[l.conv1_w.start..].split_at_mut(l.conv1_w.len());
        conv_backward(
            x,
            1,
            (a.input_width, a.input_height),
            &p[l.conv1_w.clone()],
            a.kernel,
            &d_c1,
            a.conv1_filters,
            w1,
            &mut rest[..l.conv1_b.len()],
            None,
        );
    }
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `-[y log s(z) + (1-y) log(1 - s(z))]` in a form that does not overflow.
#[inline]
pub(crate) fn bce_with_logit(z: f64, label: bool) -> f64 {
    let softplus = z.max(0.0) + (-z.abs()).exp().ln_1p();
    if label {
        softplus - z
    } else {
        softplus
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Valid cross-correlation. `input` is `channels` planes of `w x h`;
/// weights are `[out][in][k][k]`.
fn conv_forward(
    input: &[f64],
    channels: usize,
    (w, h): (usize, usize),
    weights: &[f64],
    bias: &[f64],
    k: usize,
) -> Vec<f64> {
    let (ow, oh) = (w - k + 1, h - k + 1);
    let plane = ow * oh;
    let mut out = vec![0.0; bias.len() * plane];
    for (o, out_plane) in out.chunks_exact_mut(plane).enumerate() {
        out_plane.fill(bias[o]);
        for c in 0..channels {
            let in_plane = &input[c * w * h..(c + 1) * w * h];
            for ky in 0..k {
                for kx in 0..k {
                    let wt = weights[((o * channels + c) * k + ky) * k + kx];
                    for y in 0..oh {
                        let src = &in_plane[(y + ky) * w + kx..(y + ky) * w + kx + ow];
                        let dst = &mut out_plane[y * ow..(y + 1) * ow];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += wt * s;
                        }
                    }
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: &[f64],
    channels: usize,
    (w, h): (usize, usize),
    weights: &[f64],
    k: usize,
    d_out: &[f64],
    out_channels: usize,
    d_weights: &mut [f64],
    d_bias: &mut [f64],
    mut d_input: Option<&mut Vec<f64>>,
) {
    let (ow, oh) = (w - k + 1, h - k + 1);
    let plane = ow * oh;
    for o in 0..out_channels {
        let g = &d_out[o * plane..(o + 1) * plane];
        d_bias[o] += g.iter().sum::<f64>();
        for c in 0..channels {
            let in_plane = &input[c * w * h..(c + 1) * w * h];
            for ky in 0..k {
                for kx in 0..k {
                    let wi = ((o * channels + c) * k + ky) * k + kx;
                    let mut acc = 0.0;
                    for y in 0..oh {
                        let src = &in_plane[(y + ky) * w + kx..(y + ky) * w + kx + ow];
                        acc += dot(&g[y * ow..(y + 1) * ow], src);
                    }
                    d_weights[wi] += acc;
                    if let Some(d_in) = d_input.as_deref_mut() {
                        let wt = weights[wi];
                        let d_plane = &mut d_in[c * w * h..(c + 1) * w * h];
                        for y in 0..oh {
                            let dst = &mut d_plane[(y + ky) * w + kx..(y + ky) * w + kx + ow];
                            for (d, gv) in dst.iter_mut().zip(&g[y * ow..(y + 1) * ow]) {
                                *d += wt * gv;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Non-overlapping max pooling; returns values and the flat input index of
/// each maximum (first on ties).
fn max_pool(
    input: &[f64],
    channels: usize,
    (w, h): (usize, usize),
    size: usize,
) -> (Vec<f64>, Vec<usize>) {
    let (ow, oh) = (w / size, h / size);
    let mut vals = Vec::with_capacity(channels * ow * oh);
    let mut args = Vec::with_capacity(channels * ow * oh);
    for c in 0..channels {
        let base = c * w * h;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * size * w + ox * size;
                for dy in 0..size {
                    for dx in 0..size {
                        let i = base + (oy * size + dy) * w + ox * size + dx;
                        if input[i] > input[best] {
                            best = i;
                        }
                    }
                }
                vals.push(input[best]);
                args.push(best);
            }
        }
    }
    (vals, args)
}

/// Which branch every ReLU and max took in one forward pass.
fn branch_pattern(model: &CnnModel, t: &Trace) -> Vec<usize> {
    let relu = model.arch.activation == Activation::Relu;
    let mut out = Vec::new();
    if relu {
        out.extend(t.c1_pre.iter().map(|&v| usize::from(v > 0.0)));
    }
    out.extend(&t.p1_arg);
    if relu {
        out.extend(t.c2_pre.iter().map(|&v| usize::from(v > 0.0)));
    }
    out.extend(&t.feat_arg);
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    pub max_rel_error: f64,
    /// Parameters compared.
    pub checked: usize,
    /// Parameters passed over because a kink fell inside the step.
    pub skipped: usize,
}

/// Largest relative disagreement between the analytic gradient and central
/// finite differences (step `1e-4`) over `samples` randomly chosen
/// parameters (all parameters if `samples` is at least their number).
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-6)`; the floor keeps
/// parameters with vanishing gradient from dividing round-off by zero.
/// A parameter whose `±step` perturbation flips a ReLU or moves a max is
/// skipped and the next one in the shuffled order is used instead: the
/// loss has a kink inside the difference interval there, so the finite
/// difference is not a derivative estimate.
pub fn gradient_check(
    model: &CnnModel,
    input: &ClassifierInput,
    label: bool,
    samples: usize,
    seed: u64,
) -> Result<GradientCheck> {
    const STEP: f64 = 1e-4;
    model.check_input(input)?;
    let x = input.grid.as_slice();
    let mut analytic = vec![0.0; model.params.len()];
    model.accumulate_gradient(input, label, &mut analytic)?;
    let base = branch_pattern(model, &model.forward(x));

    let mut indices: Vec<usize> = (0..model.params.len()).collect();
    {
        use rand::seq::SliceRandom;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        indices.shuffle(&mut rng);
    }

    let mut probe = model.clone();
    let mut worst = 0.0_f64;
    let (mut checked, mut skipped) = (0, 0);
    for i in indices {
        if checked == samples {
            break;
        }
        let orig = probe.params[i];
        probe.params[i] = orig + STEP;
        let up = probe.forward(x);
        probe.params[i] = orig - STEP;
        let down = probe.forward(x);
        probe.params[i] = orig;
        if branch_pattern(&probe, &up) != base || branch_pattern(&probe, &down) != base {
            skipped += 1;
            continue;
        }
        checked += 1;
        let numeric =
            (bce_with_logit(up.logit, label) - bce_with_logit(down.logit, label)) / (2.0 * STEP);
        let a = analytic[i];
        let denom = a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(GradientCheck {
        max_rel_error: worst,
        checked,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use rand::Rng;

    fn random_input(w: usize, h: usize, seed: u64) -> ClassifierInput {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, 1.0).unwrap();
        ClassifierInput {
            grid: Grid::from_vec(w, h, (0..w * h).map(|_| n.sample(&mut rng)).collect()),
        }
    }

    fn dense(w: usize, h: usize) -> Architecture {
        Architecture {
            head: Head::Dense,
            ..Architecture::standard(w, h)
        }
    }

    #[test]
    fn standard_layout_sizes() {
        let l = dense(80, 60).layout().unwrap();
        // 78x58 -> 39x29 -> 37x27 -> 18x13
        assert_eq!(l.conv1_w.len(), 72);
        assert_eq!(l.conv2_w.len(), 16 * 8 * 9);
        assert_eq!(l.fc_w.len(), 16 * 18 * 13);
        assert_eq!(l.len(), 72 + 8 + 1152 + 16 + 3744 + 1);
        let g = Architecture::standard(80, 60).layout().unwrap();
        assert_eq!(g.fc_w.len(), 16);
        assert_eq!(g.len(), 72 + 8 + 1152 + 16 + 16 + 1);
        assert!(Architecture::standard(4, 4).layout().is_err());
    }

    #[test]
    fn global_max_head_is_translation_invariant() {
        let m = CnnModel::init(Architecture::standard(24, 20), 5).unwrap();
        let mut a = Grid::<f64>::new(24, 20);
        let mut b = Grid::<f64>::new(24, 20);
        *a.get_mut(6, 6) = 4.0;
        // a shift by a multiple of the total pooling stride keeps pooling
        // windows aligned
        *b.get_mut(14, 10) = 4.0;
        let la = m.logit(&ClassifierInput { grid: a }).unwrap();
        let lb = m.logit(&ClassifierInput { grid: b }).unwrap();
        assert_eq!(la, lb);
    }

    #[test]
    fn zero_model_predicts_one_half() {
        let m = CnnModel::zeros(Architecture::standard(16, 12)).unwrap();
        let s = m.predict(&random_input(16, 12, 1)).unwrap();
        assert_eq!(s.value, 0.5);
        assert!(s.decision());
    }

    #[test]
    fn zero_model_bias_gradient_is_sigmoid_minus_label() {
        let m = CnnModel::zeros(Architecture::standard(10, 10)).unwrap();
        let input = ClassifierInput {
            grid: Grid::new(10, 10),
        };
        for label in [false, true] {
            let mut g = vec![0.0; m.params().len()];
            m.accumulate_gradient(&input, label, &mut g).unwrap();
            let y = if label { 1.0 } else { 0.0 };
            assert_eq!(g[m.layout().fc_b.start], 0.5 - y);
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let m = CnnModel::zeros(Architecture::standard(16, 12)).unwrap();
        assert!(matches!(
            m.predict(&random_input(12, 16, 1)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for arch in [Architecture::standard(10, 10), dense(10, 10)] {
            for seed in 0..5 {
                let m = CnnModel::init(arch, seed).unwrap();
                let input = random_input(10, 10, 100 + seed);
                for label in [false, true] {
                    let c = gradient_check(&m, &input, label, usize::MAX, seed).unwrap();
                    assert!(
                        c.max_rel_error < 1e-4,
                        "{:?} seed {seed} label {label}: {c:?}",
                        arch.head
                    );
                    assert!(c.checked > m.params().len() * 9 / 10, "{c:?}");
                }
            }
        }
    }

    #[test]
    fn gradient_check_on_standard_input_size() {
        let m = CnnModel::init(Architecture::standard(20, 16), 3).unwrap();
        let input = random_input(20, 16, 9);
        let c = gradient_check(&m, &input, true, 300, 1).unwrap();
        assert!(c.max_rel_error < 1e-4, "{c:?}");
        assert_eq!(c.checked, 300);
    }

    #[test]
    fn linear_model_matches_logistic_regression() {
        let arch = Architecture {
            input_width: 5,
            input_height: 4,
            conv1_filters: 1,
            conv2_filters: 1,
            kernel: 1,
            pool: 1,
            activation: Activation::Identity,
            head: Head::Dense,
        };
        let mut m = CnnModel::zeros(arch).unwrap();
        let l = m.layout().clone();
        m.params_mut()[l.conv1_w.start] = 1.0;
        m.params_mut()[l.conv2_w.start] = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for w in &mut m.params_mut()[l.fc_w.clone()] {
            *w = rng.random_range(-1.0..1.0);
        }
        m.params_mut()[l.fc_b.start] = 0.3;
        let input = random_input(5, 4, 11);
        let x = input.grid.as_slice();
        let z = dot(x, &m.params()[l.fc_w.clone()]) + 0.3;
        for label in [false, true] {
            let y = if label { 1.0 } else { 0.0 };
            let mut g = vec![0.0; m.params().len()];
            m.accumulate_gradient(&input, label, &mut g).unwrap();
            for (gi, xi) in g[l.fc_w.clone()].iter().zip(x) {
                assert!((gi - (sigmoid(z) - y) * xi).abs() < 1e-10);
            }
            assert!((g[l.fc_b.start] - (sigmoid(z) - y)).abs() < 1e-10);
            let c = gradient_check(&m, &input, label, usize::MAX, 0).unwrap();
            assert!(c.max_rel_error < 1e-4);
            assert_eq!((c.checked, c.skipped), (m.params().len(), 0));
        }
    }

    #[test]
    fn stable_loss_for_large_logits() {
        assert!((bce_with_logit(800.0, true)).abs() < 1e-12);
        assert!((bce_with_logit(800.0, false) - 800.0).abs() < 1e-9);
        assert!((bce_with_logit(0.0, true) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(sigmoid(-800.0), 0.0);
    }
}
