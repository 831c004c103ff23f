use rand_distr::{Distribution, Normal};

use super::RandnetError;
use crate::arch::{ArchSpec, LayerSpec};
use crate::rng;

/// A scalar function with a gradient, the interface the boundary search needs.
pub trait ScalarModel: Sync {
    fn input_len(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn value_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>);
}

/// Weights and biases of one parameterized layer.
///
/// `weights[(k * n_out + i) * n_in + j]` multiplies input channel `j` at patch
/// offset `k` (pixel `k` for the flatten layer) into output channel `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    /// `shifts[k][a]`: source pixel read by output pixel `a` through offset `k`.
    shifts: Vec<Vec<usize>>,
}

impl LayerParams {
    fn row(&self, k: usize, i: usize) -> &[f64] {
        let start = (k * self.n_out + i) * self.n_in;
        &self.weights[start..start + self.n_in]
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Op {
    Input(LayerParams),
    Nonlinear(LayerParams),
    Skip { source: usize },
    Pool { map: Vec<usize>, coarse: usize },
    Flatten(LayerParams),
    Output,
}

/// A finite-width random network. Activations are stored pixel-major,
/// `value[a * channels + c]`; inputs and gradients use the channel-major
/// layout `x[c * pixels + a]` of the kernel module.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomNetwork {
    arch: ArchSpec,
    widths: Vec<usize>,
    /// Output channel count of every layer.
    channels: Vec<usize>,
    ops: Vec<Op>,
    seed: u64,
}

/// Outputs of every layer for one input, pixel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass {
    pub output: f64,
    pub layers: Vec<Vec<f64>>,
}

fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Number of hidden widths `init_random` expects: one per input_conv or nonlinear layer.
pub fn hidden_layer_count(arch: &ArchSpec) -> usize {
    arch.layers()
        .iter()
        .filter(|l| matches!(l, LayerSpec::InputConv { .. } | LayerSpec::Nonlinear { .. }))
        .count()
}

/// Channel count of every layer output for the given hidden widths.
pub fn layer_channels(arch: &ArchSpec, widths: &[usize]) -> Result<Vec<usize>, RandnetError> {
    let expected = hidden_layer_count(arch);
    if widths.len() != expected || widths.contains(&0) {
        return Err(RandnetError::Widths(format!(
            "expected {expected} positive widths, got {widths:?}"
        )));
    }
    let mut next = widths.iter();
    let mut channels: Vec<usize> = Vec::with_capacity(arch.layers().len());
    for (i, layer) in arch.layers().iter().enumerate() {
        let c = match layer {
            LayerSpec::InputConv { .. } | LayerSpec::Nonlinear { .. } => *next.next().expect("counted"),
            LayerSpec::Skip { gap } => {
                let (a, b) = (channels[i - 1], channels[i - gap - 1]);
                if a != b {
                    return Err(RandnetError::Widths(format!(
                        "skip at layer {i} joins {a} and {b} channels"
                    )));
                }
                a
            }
            LayerSpec::Pool { .. } => channels[i - 1],
            LayerSpec::Flatten { .. } | LayerSpec::Output => 1,
        };
        channels.push(c);
    }
    Ok(channels)
}

/// Draw a network: weights `N(0, sigma_w^2 / n_in)`, biases `N(0, sigma_b^2)`.
/// The flatten layer has a single output unit.
pub fn init_random(arch: &ArchSpec, widths: &[usize], seed: u64) -> Result<RandomNetwork, RandnetError> {
    let channels = layer_channels(arch, widths)?;
    let mut ops = Vec::with_capacity(arch.layers().len());
    for (i, layer) in arch.layers().iter().enumerate() {
        let grid = arch.input_grid_of(i);
        let n_in = if i == 0 { arch.input_channels() } else { channels[i - 1] };
        let mut rng = rng::stream(seed, i as u64);
        let mut params = |offsets: usize, n_out: usize, sigma_w: f64, sigma_b: f64, shifts| {
            let w = Normal::new(0.0, sigma_w / (n_in as f64).sqrt()).expect("finite sigma");
            let weights = (0..offsets * n_out * n_in).map(|_| w.sample(&mut rng)).collect();
            let bias = if sigma_b == 0.0 {
                vec![0.0; n_out]
            } else {
                let b = Normal::new(0.0, sigma_b).expect("finite sigma");
                (0..n_out).map(|_| b.sample(&mut rng)).collect()
            };
            LayerParams { n_in, n_out, weights, bias, shifts }
        };
        let op = match layer {
            LayerSpec::InputConv { patch, sigma_w, sigma_b } => {
                let patch = patch.as_ref().expect("filled on load");
                Op::Input(params(patch.len(), channels[i], *sigma_w, *sigma_b, grid.shift_table(patch.offsets(), 1)))
            }
            LayerSpec::Nonlinear { patch, sigma_w, sigma_b } => {
                let patch = patch.as_ref().expect("filled on load");
                Op::Nonlinear(params(patch.len(), channels[i], *sigma_w, *sigma_b, grid.shift_table(patch.offsets(), -1)))
            }
            LayerSpec::Skip { gap } => Op::Skip { source: i - gap - 1 },
            LayerSpec::Pool { cell } => {
                let (coarse, map) = grid.pool(cell).expect("validated pool");
                Op::Pool { map, coarse: coarse.size() }
            }
            LayerSpec::Flatten { sigma_w, sigma_b } => Op::Flatten(params(grid.size(), 1, *sigma_w, *sigma_b, Vec::new())),
            LayerSpec::Output => Op::Output,
        };
        ops.push(op);
    }
    Ok(RandomNetwork { arch: arch.clone(), widths: widths.to_vec(), channels, ops, seed })
}

impl RandomNetwork {
    pub fn arch(&self) -> &ArchSpec {
        &self.arch
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Parameters of `layers[i]`, if it has any.
    pub fn params(&self, i: usize) -> Option<&LayerParams> {
        match &self.ops[i] {
            Op::Input(p) | Op::Nonlinear(p) | Op::Flatten(p) => Some(p),
            _ => None,
        }
    }

    pub fn params_mut(&mut self, i: usize) -> Option<&mut LayerParams> {
        match &mut self.ops[i] {
            Op::Input(p) | Op::Nonlinear(p) | Op::Flatten(p) => Some(p),
            _ => None,
        }
    }

    fn check(&self, x: &[f64]) -> Result<(), RandnetError> {
        if x.len() != self.arch.input_len() {
            return Err(RandnetError::Dimension { expected: self.arch.input_len(), got: x.len() });
        }
        Ok(())
    }

    /// Scalar output and the output of every layer.
    pub fn forward(&self, x: &[f64]) -> Result<ForwardPass, RandnetError> {
        self.check(x)?;
        Ok(self.forward_unchecked(x))
    }

    fn forward_unchecked(&self, x: &[f64]) -> ForwardPass {
        let pixels0 = self.arch.input_grid().size();
        let c0 = self.arch.input_channels();
        // Channel-major input to pixel-major.
        let input: Vec<f64> = (0..pixels0 * c0).map(|k| x[(k % c0) * pixels0 + k / c0]).collect();
        let mut layers: Vec<Vec<f64>> = Vec::with_capacity(self.ops.len());
        for (i, op) in self.ops.iter().enumerate() {
            let pixels = self.arch.input_grid_of(i).size();
            let out = match op {
                Op::Input(p) => conv(p, &input, pixels, false),
                Op::Nonlinear(p) => conv(p, &layers[i - 1], pixels, true),
                Op::Skip { source } => layers[i - 1].iter().zip(&layers[*source]).map(|(a, b)| a + b).collect(),
                Op::Pool { map, coarse } => {
                    let c = self.channels[i];
                    let prev = &layers[i - 1];
                    let mut out = vec![0.0; coarse * c];
                    for (a, &target) in map.iter().enumerate() {
                        for ch in 0..c {
                            out[target * c + ch] += prev[a * c + ch];
                        }
                    }
                    out
                }
                Op::Flatten(p) => {
                    let prev = &layers[i - 1];
                    let mut s = p.bias[0];
                    for a in 0..pixels {
                        s += p.row(a, 0).iter().zip(&prev[a * p.n_in..(a + 1) * p.n_in]).map(|(w, v)| w * relu(*v)).sum::<f64>();
                    }
                    vec![s]
                }
                Op::Output => layers[i - 1].clone(),
            };
            layers.push(out);
        }
        ForwardPass { output: layers.last().expect("nonempty")[0], layers }
    }

    /// Gradient of the scalar output, with ReLU derivative 0 at 0.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>, RandnetError> {
        self.check(x)?;
        Ok(self.value_and_gradient_unchecked(x).1)
    }

    fn value_and_gradient_unchecked(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let fwd = self.forward_unchecked(x);
        let mut grads: Vec<Vec<f64>> = fwd.layers.iter().map(|l| vec![0.0; l.len()]).collect();
        *grads.last_mut().expect("nonempty") = vec![1.0];
        let pixels0 = self.arch.input_grid().size();
        let c0 = self.arch.input_channels();
        let mut grad_input = vec![0.0; pixels0 * c0];
        for i in (0..self.ops.len()).rev() {
            let g = std::mem::take(&mut grads[i]);
            let pixels = self.arch.input_grid_of(i).size();
            match &self.ops[i] {
                Op::Output => add_into(&mut grads[i - 1], &g),
                Op::Flatten(p) => {
                    let prev = &fwd.layers[i - 1];
                    let target = &mut grads[i - 1];
                    for a in 0..pixels {
                        for (j, w) in p.row(a, 0).iter().enumerate() {
                            let k = a * p.n_in + j;
                            if prev[k] > 0.0 {
                                target[k] += g[0] * w;
                            }
                        }
                    }
                }
                Op::Pool { map, .. } => {
                    let c = self.channels[i];
                    let target = &mut grads[i - 1];
                    for (a, &coarse) in map.iter().enumerate() {
                        for ch in 0..c {
                            target[a * c + ch] += g[coarse * c + ch];
                        }
                    }
                }
                Op::Skip { source } => {
                    add_into(&mut grads[i - 1], &g);
                    add_into(&mut grads[*source], &g);
                }
                Op::Nonlinear(p) => {
                    let prev = &fwd.layers[i - 1];
                    let mut ga = conv_transpose(p, &g, pixels);
                    for (v, &z) in ga.iter_mut().zip(prev) {
                        if !(z > 0.0) {
                            *v = 0.0;
                        }
                    }
                    add_into(&mut grads[i - 1], &ga);
                }
                Op::Input(p) => grad_input = conv_transpose(p, &g, pixels),
            }
        }
        // Pixel-major back to channel-major.
        let mut out = vec![0.0; pixels0 * c0];
        for (k, v) in grad_input.into_iter().enumerate() {
            out[(k % c0) * pixels0 + k / c0] = v;
        }
        (fwd.output, out)
    }
}

impl ScalarModel for RandomNetwork {
    fn input_len(&self) -> usize {
        self.arch.input_len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.forward_unchecked(x).output
    }

    fn value_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        self.value_and_gradient_unchecked(x)
    }
}

fn add_into(target: &mut [f64], g: &[f64]) {
    for (t, v) in target.iter_mut().zip(g) {
        *t += v;
    }
}

/// `out[a, i] = b_i + sum_k sum_j W[k, i, j] act(src[shift_k(a), j])`.
fn conv(p: &LayerParams, src: &[f64], pixels: usize, activate: bool) -> Vec<f64> {
    let mut out = vec![0.0; pixels * p.n_out];
    let mut buf = vec![0.0; p.n_in];
    for a in 0..pixels {
        let dst = &mut out[a * p.n_out..(a + 1) * p.n_out];
        dst.copy_from_slice(&p.bias);
        for (k, shift) in p.shifts.iter().enumerate() {
            let s = shift[a];
            let v = &src[s * p.n_in..(s + 1) * p.n_in];
            let v = if activate {
                for (b, &z) in buf.iter_mut().zip(v) {
                    *b = relu(z);
                }
                &buf[..]
            } else {
                v
            };
            for (i, d) in dst.iter_mut().enumerate() {
                *d += dot(p.row(k, i), v);
            }
        }
    }
    out
}

/// Adjoint of `conv` with respect to its (activated) input.
fn conv_transpose(p: &LayerParams, g: &[f64], pixels: usize) -> Vec<f64> {
    let mut out = vec![0.0; pixels * p.n_in];
    for a in 0..pixels {
        for (k, shift) in p.shifts.iter().enumerate() {
            let s = shift[a];
            let dst = &mut out[s * p.n_in..(s + 1) * p.n_in];
            for i in 0..p.n_out {
                let gi = g[a * p.n_out + i];
                if gi == 0.0 {
                    continue;
                }
                for (d, w) in dst.iter_mut().zip(p.row(k, i)) {
                    *d += gi * w;
                }
            }
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators let the compiler vectorize without reassociating.
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for l in 0..4 {
            acc[l] += a[4 * c + l] * b[4 * c + l];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..a.len() {
        s += a[k] * b[k];
    }
    s
}
