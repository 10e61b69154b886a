//! Masked hierarchical point-convolution generator with hand-written gradients.
//!
//! Four set-abstraction levels group points around farthest-point-sampled
//! centers, run a shared tanh MLP over each neighbor and max-pool per group.
//! Every level's pooled features are reduced by one shared layer and
//! interpolated back onto the input points (inverse distance over the three
//! nearest centers); the concatenation is the per-point latent vector.
//! `r` independent branches and a shared head then produce `r` offsets per
//! input point, which are added to the repeated input positions.
//!
//! Output slot `i * r + j` belongs to input point `i`, so truncating the raw
//! output to `r * k` entries keeps exactly the outputs of the real points and
//! the groups seen by the mingling loss are contiguous.
//!
//! Padded slots never become centers or neighbors: only the first `count`
//! points are ever considered, and the pad value is farther than any group
//! radius from the `[-1, 1]` box anyway. Their raw outputs are the pad value.

use crate::cloud::{squared_distance, PaddedCloud, PointCloud, PAD_VALUE};
use crate::error::{Error, Result};
use crate::rng::RngStream;

const BASE_LEVELS: [(usize, f64, [usize; 3]); 4] = [
    (1, 0.25, [32, 32, 64]),
    (2, 0.5, [64, 64, 128]),
    (4, 0.6, [128, 128, 256]),
    (8, 0.7, [256, 256, 512]),
];
const BASE_REDUCE: usize = 64;
const BASE_BRANCH: [usize; 2] = [256, 128];
const BASE_HEAD_HIDDEN: usize = 64;
const INTERP_NEIGHBORS: usize = 3;
const INTERP_EPS: f64 = 1e-8;

/// Neighbor cap per group at desk scale.
pub const DEFAULT_NEIGHBOR_CAP: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct LevelSpec {
    pub n_groups: usize,
    pub group_radius: f64,
    pub mlp_widths: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArchSpec {
    pub dim: usize,
    pub k_max: usize,
    pub r: usize,
    pub width_mult: f64,
    pub use_velocity: bool,
    pub use_pressure: bool,
    pub neighbor_cap: usize,
    pub levels: Vec<LevelSpec>,
    pub reduce_width: usize,
    pub branch_widths: Vec<usize>,
    pub head_widths: Vec<usize>,
}

fn scaled(width: usize, mult: f64) -> usize {
    ((width as f64 * mult).round() as usize).max(1)
}

impl ArchSpec {
    /// Four-level layout with every hidden width scaled by `width_mult`.
    /// `width_mult = 1` gives 64 reduced features per level (256-wide latent).
    pub fn new(dim: usize, k_max: usize, r: usize, width_mult: f64) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidDimension(dim));
        }
        if k_max == 0 || r == 0 || !(width_mult > 0.0) {
            return Err(Error::ArchMismatch(format!(
                "invalid architecture k_max={k_max} r={r} width_mult={width_mult}"
            )));
        }
        let levels = BASE_LEVELS
            .iter()
            .map(|&(div, radius, widths)| LevelSpec {
                n_groups: k_max.div_ceil(div),
                group_radius: radius,
                mlp_widths: widths.iter().map(|&w| scaled(w, width_mult)).collect(),
            })
            .collect();
        Ok(Self {
            dim,
            k_max,
            r,
            width_mult,
            use_velocity: true,
            use_pressure: false,
            neighbor_cap: DEFAULT_NEIGHBOR_CAP,
            levels,
            reduce_width: scaled(BASE_REDUCE, width_mult),
            branch_widths: BASE_BRANCH.iter().map(|&w| scaled(w, width_mult)).collect(),
            head_widths: vec![scaled(BASE_HEAD_HIDDEN, width_mult), dim],
        })
    }

    pub fn with_pressure(mut self, on: bool) -> Self {
        self.use_pressure = on;
        self
    }

    pub fn with_velocity(mut self, on: bool) -> Self {
        self.use_velocity = on;
        self
    }

    /// Same layers for a different input capacity. Group counts keep their
    /// ratio to `k_max`, so parameters carry over unchanged.
    pub fn with_k_max(&self, k_max: usize) -> Self {
        let mut out = self.clone();
        out.k_max = k_max;
        for (lvl, &(div, _, _)) in out.levels.iter_mut().zip(BASE_LEVELS.iter()) {
            lvl.n_groups = k_max.div_ceil(div);
        }
        out
    }

    pub fn n_max(&self) -> usize {
        self.k_max * self.r
    }

    /// Per-point input feature width (velocity and/or pressure).
    pub fn input_features(&self) -> usize {
        (if self.use_velocity { self.dim } else { 0 }) + usize::from(self.use_pressure)
    }

    pub fn latent_width(&self) -> usize {
        self.levels.len() * self.reduce_width
    }

    fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::new();
        let mut feat = self.input_features();
        for lvl in &self.levels {
            let mut inp = self.dim + feat;
            for &w in &lvl.mlp_widths {
                shapes.push((inp, w));
                inp = w;
            }
            feat = inp;
        }
        for lvl in &self.levels {
            shapes.push((*lvl.mlp_widths.last().unwrap(), self.reduce_width));
        }
        for _ in 0..self.r {
            let mut inp = self.latent_width() + self.dim;
            for &w in &self.branch_widths {
                shapes.push((inp, w));
                inp = w;
            }
        }
        let mut inp = *self.branch_widths.last().unwrap();
        for &w in &self.head_widths {
            shapes.push((inp, w));
            inp = w;
        }
        shapes
    }
}

/// Fully connected layer with tanh activation; weights are row-major `[out][in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn glorot(inputs: usize, outputs: usize, gain: f64, rng: &mut RngStream) -> Self {
        let a = gain * (6.0 / (inputs + outputs) as f64).sqrt();
        Self {
            inputs,
            outputs,
            weights: (0..inputs * outputs).map(|_| rng.range(-a, a)).collect(),
            bias: vec![0.0; outputs],
        }
    }

    fn forward(&self, x: &[f64], y: &mut [f64]) {
        for (o, out) in y.iter_mut().enumerate() {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let z: f64 = self.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            *out = z.tanh();
        }
    }

    /// Accumulates parameter gradients into `grad` and, if given, input
    /// gradients into `gx`. `y` is this layer's output for input `x`.
    fn backward(&self, x: &[f64], y: &[f64], gy: &[f64], grad: &mut Dense, mut gx: Option<&mut [f64]>) {
        for o in 0..self.outputs {
            let gz = gy[o] * (1.0 - y[o] * y[o]);
            if gz == 0.0 {
                continue;
            }
            grad.bias[o] += gz;
            let row = o * self.inputs..(o + 1) * self.inputs;
            for (gw, v) in grad.weights[row.clone()].iter_mut().zip(x) {
                *gw += gz * v;
            }
            if let Some(gx) = gx.as_deref_mut() {
                for (g, w) in gx.iter_mut().zip(&self.weights[row]) {
                    *g += gz * w;
                }
            }
        }
    }

    fn len(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Stacked dense layers; activations are stored input first.
fn mlp_forward(layers: &[Dense], x: &[f64]) -> Vec<f64> {
    let total: usize = x.len() + layers.iter().map(|l| l.outputs).sum::<usize>();
    let mut acts = Vec::with_capacity(total);
    acts.extend_from_slice(x);
    let mut start = 0;
    for l in layers {
        let end = acts.len();
        acts.resize(end + l.outputs, 0.0);
        let (prev, next) = acts.split_at_mut(end);
        l.forward(&prev[start..end], next);
        start = end;
    }
    acts
}

fn mlp_output<'a>(layers: &[Dense], acts: &'a [f64]) -> &'a [f64] {
    &acts[acts.len() - layers.last().unwrap().outputs..]
}

/// Backpropagates `gy` (gradient at the last output) through stored
/// activations; returns the gradient at the input.
fn mlp_backward(layers: &[Dense], acts: &[f64], gy: &[f64], grads: &mut [Dense], want_input: bool) -> Vec<f64> {
    let mut offsets = Vec::with_capacity(layers.len() + 1);
    let mut off = 0;
    offsets.push(0);
    off += layers[0].inputs;
    for l in layers {
        offsets.push(off);
        off += l.outputs;
    }
    let mut g = gy.to_vec();
    for li in (0..layers.len()).rev() {
        let l = &layers[li];
        let x = &acts[offsets[li]..offsets[li] + l.inputs];
        let y = &acts[offsets[li + 1]..offsets[li + 1] + l.outputs];
        if li == 0 && !want_input {
            l.backward(x, y, &g, &mut grads[li], None);
            return Vec::new();
        }
        let mut gx = vec![0.0; l.inputs];
        l.backward(x, y, &g, &mut grads[li], Some(&mut gx));
        g = gx;
    }
    g
}

/// All trainable weights, in a fixed order that defines the flat view:
/// level MLPs, level reducers, branches, head; weights before biases.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    arch: ArchSpec,
    levels: Vec<Vec<Dense>>,
    reducers: Vec<Dense>,
    branches: Vec<Vec<Dense>>,
    head: Vec<Dense>,
}

impl ModelParams {
    pub fn init(arch: ArchSpec, rng: &mut RngStream) -> Self {
        let mut p = Self::zeros(arch);
        let n_head = p.head.len();
        for layer in p.layers_mut() {
            *layer = Dense::glorot(layer.inputs, layer.outputs, 1.0, rng);
        }
        // Start close to the skip connection.
        for w in &mut p.head[n_head - 1].weights {
            *w *= 0.1;
        }
        p
    }

    pub fn zeros(arch: ArchSpec) -> Self {
        let mut shapes = arch.layer_shapes().into_iter().map(|(i, o)| Dense::zeros(i, o));
        let levels = arch
            .levels
            .iter()
            .map(|l| (0..l.mlp_widths.len()).map(|_| shapes.next().unwrap()).collect())
            .collect();
        let reducers = (0..arch.levels.len()).map(|_| shapes.next().unwrap()).collect();
        let branches = (0..arch.r)
            .map(|_| (0..arch.branch_widths.len()).map(|_| shapes.next().unwrap()).collect())
            .collect();
        let head = (0..arch.head_widths.len()).map(|_| shapes.next().unwrap()).collect();
        Self {
            arch,
            levels,
            reducers,
            branches,
            head,
        }
    }

    pub fn arch(&self) -> &ArchSpec {
        &self.arch
    }

    /// Same weights, different input capacity.
    pub fn with_k_max(&self, k_max: usize) -> Self {
        let mut out = self.clone();
        out.arch = self.arch.with_k_max(k_max);
        out
    }

    fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.levels
            .iter()
            .flatten()
            .chain(&self.reducers)
            .chain(self.branches.iter().flatten())
            .chain(&self.head)
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.levels
            .iter_mut()
            .flatten()
            .chain(&mut self.reducers)
            .chain(self.branches.iter_mut().flatten())
            .chain(&mut self.head)
    }

    pub fn n_params(&self) -> usize {
        self.layers().map(Dense::len).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in self.layers() {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::ArchMismatch(format!(
                "flat vector has {} values, model has {}",
                flat.len(),
                self.n_params()
            )));
        }
        let mut off = 0;
        for l in self.layers_mut() {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&flat[off..off + nw]);
            off += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&flat[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    pub fn from_flat(arch: ArchSpec, flat: &[f64]) -> Result<Self> {
        let mut p = Self::zeros(arch);
        p.set_flat(flat)?;
        Ok(p)
    }

    /// Zeroes the final head layer so the output is the repeated input.
    pub fn zero_head_output(&mut self) {
        let last = self.head.last_mut().unwrap();
        last.weights.iter_mut().for_each(|w| *w = 0.0);
        last.bias.iter_mut().for_each(|b| *b = 0.0);
    }
}

#[derive(Clone, Debug)]
struct LevelTrace {
    positions: Vec<f64>,
    /// Neighbor indices into the previous level's points, per center.
    groups: Vec<Vec<usize>>,
    /// Stored MLP activations per center, per neighbor.
    acts: Vec<Vec<Vec<f64>>>,
    /// Winning neighbor (local index) per center and channel.
    argmax: Vec<Vec<usize>>,
    features: Vec<f64>,
    reduced: Vec<f64>,
    /// Per input point: (center, normalized weight) for interpolation.
    interp: Vec<Vec<(usize, f64)>>,
}

/// Intermediate state of one forward pass, sufficient for backprop.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    count: usize,
    k_max: usize,
    r: usize,
    dim: usize,
    n_params: usize,
    levels: Vec<LevelTrace>,
    latent: Vec<f64>,
    latent_width: usize,
    branch_acts: Vec<Vec<f64>>,
    head_acts: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn count(&self) -> usize {
        self.count
    }

    /// Number of raw outputs that belong to real points.
    pub fn n_tilde(&self) -> usize {
        self.count * self.r
    }

    pub fn latent_width(&self) -> usize {
        self.latent_width
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    std::cmp::Ordering::Equal
}

/// Farthest-point sampling. Starts at the lexicographically smallest point
/// and breaks ties by coordinates, so the chosen set does not depend on the
/// input order.
pub fn farthest_point_sampling(dim: usize, points: &[f64], m: usize) -> Vec<usize> {
    let n = points.len() / dim;
    let m = m.min(n);
    if m == 0 {
        return Vec::new();
    }
    let pt = |i: usize| &points[i * dim..(i + 1) * dim];
    let start = (0..n).min_by(|&a, &b| lex_cmp(pt(a), pt(b))).unwrap();
    let mut chosen = vec![start];
    let mut min_d = vec![f64::INFINITY; n];
    while chosen.len() < m {
        let last = *chosen.last().unwrap();
        let mut best: Option<usize> = None;
        for i in 0..n {
            let d = squared_distance(pt(i), pt(last));
            if d < min_d[i] {
                min_d[i] = d;
            }
            best = match best {
                None => Some(i),
                Some(b) => match min_d[i].total_cmp(&min_d[b]) {
                    std::cmp::Ordering::Greater => Some(i),
                    std::cmp::Ordering::Equal if lex_cmp(pt(i), pt(b)).is_lt() => Some(i),
                    _ => Some(b),
                },
            };
        }
        chosen.push(best.unwrap());
    }
    chosen
}

/// Up to `cap` points within `radius` of `center`, nearest first.
fn ball_query(dim: usize, points: &[f64], center: &[f64], radius: f64, cap: usize) -> Vec<usize> {
    let r2 = radius * radius;
    let mut hits: Vec<(f64, usize)> = points
        .chunks_exact(dim)
        .enumerate()
        .map(|(i, p)| (squared_distance(p, center), i))
        .filter(|(d, _)| *d <= r2)
        .collect();
    let pt = |i: usize| &points[i * dim..(i + 1) * dim];
    hits.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| lex_cmp(pt(a.1), pt(b.1))));
    hits.truncate(cap);
    hits.into_iter().map(|(_, i)| i).collect()
}

/// Runs the generator on one padded patch. The raw output has `k_max * r`
/// slots; slots past `count * r` hold the pad value.
pub fn forward(params: &ModelParams, input: &PaddedCloud) -> Result<(PointCloud, ForwardTrace)> {
    let arch = &params.arch;
    let dim = arch.dim;
    if input.capacity() != arch.k_max || input.dim() != dim {
        return Err(Error::ArchMismatch(format!(
            "input has capacity {} and dim {}, network expects {} and {}",
            input.capacity(),
            input.dim(),
            arch.k_max,
            dim
        )));
    }
    let count = input.count();
    let data = input.data();
    let positions = &data.positions()[..count * dim];

    let mut feat_width = arch.input_features();
    let mut features = Vec::with_capacity(count * feat_width);
    if feat_width > 0 {
        let vel = if arch.use_velocity {
            Some(data.velocity().ok_or_else(|| {
                Error::ArchMismatch("network expects a velocity channel".into())
            })?)
        } else {
            None
        };
        let pres = if arch.use_pressure {
            Some(data.pressure().ok_or_else(|| {
                Error::ArchMismatch("network expects a pressure channel".into())
            })?)
        } else {
            None
        };
        for i in 0..count {
            if let Some(v) = vel {
                features.extend_from_slice(&v[i * dim..(i + 1) * dim]);
            }
            if let Some(p) = pres {
                features.push(p[i]);
            }
        }
    }

    let mut levels = Vec::with_capacity(arch.levels.len());
    let mut prev_pos = positions.to_vec();
    let mut prev_feat = features;
    for (level, mlp) in arch.levels.iter().zip(&params.levels) {
        let n_prev = prev_pos.len() / dim;
        let n_centers = if n_prev == 0 {
            0
        } else {
            (count * level.n_groups).div_ceil(arch.k_max).clamp(1, n_prev)
        };
        let centers = farthest_point_sampling(dim, &prev_pos, n_centers);
        let width = *level.mlp_widths.last().unwrap();
        let mut lt = LevelTrace {
            positions: Vec::with_capacity(n_centers * dim),
            groups: Vec::with_capacity(n_centers),
            acts: Vec::with_capacity(n_centers),
            argmax: Vec::with_capacity(n_centers),
            features: vec![0.0; n_centers * width],
            reduced: Vec::new(),
            interp: Vec::new(),
        };
        let mut z = vec![0.0; dim + feat_width];
        for (ci, &c) in centers.iter().enumerate() {
            let cpos = &prev_pos[c * dim..(c + 1) * dim];
            lt.positions.extend_from_slice(cpos);
            let group = ball_query(dim, &prev_pos, cpos, level.group_radius, arch.neighbor_cap);
            let mut acts = Vec::with_capacity(group.len());
            let pooled = &mut lt.features[ci * width..(ci + 1) * width];
            pooled.iter_mut().for_each(|v| *v = f64::NEG_INFINITY);
            let mut argmax = vec![0usize; width];
            for (local, &j) in group.iter().enumerate() {
                for a in 0..dim {
                    z[a] = prev_pos[j * dim + a] - cpos[a];
                }
                z[dim..].copy_from_slice(&prev_feat[j * feat_width..(j + 1) * feat_width]);
                let act = mlp_forward(mlp, &z);
                for (k, &v) in mlp_output(mlp, &act).iter().enumerate() {
                    if v > pooled[k] {
                        pooled[k] = v;
                        argmax[k] = local;
                    }
                }
                acts.push(act);
            }
            lt.groups.push(group);
            lt.acts.push(acts);
            lt.argmax.push(argmax);
        }
        prev_pos = lt.positions.clone();
        prev_feat = lt.features.clone();
        feat_width = width;
        levels.push(lt);
    }

    // Reduce each level and interpolate onto the input points.
    let red = arch.reduce_width;
    let latent_width = arch.latent_width();
    let mut latent = vec![0.0; count * latent_width];
    for (li, (lt, reducer)) in levels.iter_mut().zip(&params.reducers).enumerate() {
        let width = reducer.inputs;
        let n_centers = lt.positions.len() / dim;
        lt.reduced = vec![0.0; n_centers * red];
        for c in 0..n_centers {
            reducer.forward(&lt.features[c * width..(c + 1) * width], &mut lt.reduced[c * red..(c + 1) * red]);
        }
        lt.interp = Vec::with_capacity(count);
        for i in 0..count {
            let p = &positions[i * dim..(i + 1) * dim];
            let mut near: Vec<(f64, usize)> = (0..n_centers)
                .map(|c| (squared_distance(p, &lt.positions[c * dim..(c + 1) * dim]), c))
                .collect();
            near.sort_by(|a, b| {
                a.0.total_cmp(&b.0).then_with(|| {
                    lex_cmp(&lt.positions[a.1 * dim..(a.1 + 1) * dim], &lt.positions[b.1 * dim..(b.1 + 1) * dim])
                })
            });
            near.truncate(INTERP_NEIGHBORS);
            let inv: Vec<f64> = near.iter().map(|(d2, _)| 1.0 / (d2.sqrt() + INTERP_EPS)).collect();
            let norm: f64 = inv.iter().sum();
            let weights: Vec<(usize, f64)> = near.iter().zip(&inv).map(|((_, c), w)| (*c, w / norm)).collect();
            let out = &mut latent[i * latent_width + li * red..i * latent_width + (li + 1) * red];
            for &(c, w) in &weights {
                for (o, v) in out.iter_mut().zip(&lt.reduced[c * red..(c + 1) * red]) {
                    *o += w * v;
                }
            }
            lt.interp.push(weights);
        }
    }

    // Branches, shared head, skip connection.
    let r = arch.r;
    let mut raw = vec![PAD_VALUE; arch.k_max * r * dim];
    let mut branch_acts = Vec::with_capacity(count * r);
    let mut head_acts = Vec::with_capacity(count * r);
    let mut b_in = vec![0.0; latent_width + dim];
    for i in 0..count {
        b_in[..latent_width].copy_from_slice(&latent[i * latent_width..(i + 1) * latent_width]);
        b_in[latent_width..].copy_from_slice(&positions[i * dim..(i + 1) * dim]);
        for (j, branch) in params.branches.iter().enumerate() {
            let ba = mlp_forward(branch, &b_in);
            let ha = mlp_forward(&params.head, mlp_output(branch, &ba));
            let offset = mlp_output(&params.head, &ha);
            let slot = (i * r + j) * dim;
            for a in 0..dim {
                raw[slot + a] = positions[i * dim + a] + offset[a];
            }
            branch_acts.push(ba);
            head_acts.push(ha);
        }
    }

    let raw = PointCloud::new(dim, raw)?.with_frame(data.frame);
    let trace = ForwardTrace {
        count,
        k_max: arch.k_max,
        r,
        dim,
        n_params: params.n_params(),
        levels,
        latent,
        latent_width,
        branch_acts,
        head_acts,
    };
    Ok((raw, trace))
}

/// Gradient of a scalar loss with respect to every parameter, given the
/// gradient at the raw output. `output_gradient` may cover only a prefix of
/// the raw output (e.g. the truncated `r * k` points); the rest is zero.
pub fn backward(params: &ModelParams, trace: &ForwardTrace, output_gradient: &[f64]) -> Result<Vec<f64>> {
    let mut grads = ModelParams::zeros(params.arch.clone());
    backward_into(params, trace, output_gradient, &mut grads)?;
    Ok(grads.to_flat())
}

/// Like [`backward`], accumulating into a parameter-shaped buffer.
pub fn backward_into(
    params: &ModelParams,
    trace: &ForwardTrace,
    output_gradient: &[f64],
    grads: &mut ModelParams,
) -> Result<()> {
    let arch = &params.arch;
    let dim = arch.dim;
    if trace.n_params != params.n_params()
        || trace.dim != dim
        || trace.r != arch.r
        || trace.k_max != arch.k_max
    {
        return Err(Error::TraceMismatch("trace was produced by a different architecture".into()));
    }
    if output_gradient.len() > trace.k_max * trace.r * dim || output_gradient.len() % dim != 0 {
        return Err(Error::TraceMismatch(format!(
            "gradient has {} values for {} raw outputs of dim {dim}",
            output_gradient.len(),
            trace.k_max * trace.r
        )));
    }
    let r = arch.r;
    let lw = trace.latent_width;
    let count = trace.count;
    let mut g_latent = vec![0.0; count * lw];
    let covered = (output_gradient.len() / dim).min(count * r);
    for slot in 0..covered {
        let go = &output_gradient[slot * dim..(slot + 1) * dim];
        if go.iter().all(|g| *g == 0.0) {
            continue;
        }
        let (i, j) = (slot / r, slot % r);
        let gh = mlp_backward(&params.head, &trace.head_acts[slot], go, &mut grads.head, true);
        let gb = mlp_backward(&params.branches[j], &trace.branch_acts[slot], &gh, &mut grads.branches[j], true);
        for (acc, g) in g_latent[i * lw..(i + 1) * lw].iter_mut().zip(&gb[..lw]) {
            *acc += g;
        }
    }

    let red = arch.reduce_width;
    let n_levels = trace.levels.len();
    let mut g_features: Vec<Vec<f64>> = Vec::with_capacity(n_levels);
    for (li, lt) in trace.levels.iter().enumerate() {
        let reducer = &params.reducers[li];
        let width = reducer.inputs;
        let n_centers = lt.positions.len() / dim;
        let mut g_red = vec![0.0; n_centers * red];
        for (i, weights) in lt.interp.iter().enumerate() {
            let gi = &g_latent[i * lw + li * red..i * lw + (li + 1) * red];
            for &(c, w) in weights {
                for (acc, g) in g_red[c * red..(c + 1) * red].iter_mut().zip(gi) {
                    *acc += w * g;
                }
            }
        }
        let mut g_feat = vec![0.0; n_centers * width];
        for c in 0..n_centers {
            reducer.backward(
                &lt.features[c * width..(c + 1) * width],
                &lt.reduced[c * red..(c + 1) * red],
                &g_red[c * red..(c + 1) * red],
                &mut grads.reducers[li],
                Some(&mut g_feat[c * width..(c + 1) * width]),
            );
        }
        g_features.push(g_feat);
    }

    for li in (0..n_levels).rev() {
        let lt = &trace.levels[li];
        let mlp = &params.levels[li];
        let width = mlp.last().unwrap().outputs;
        let in_feat = mlp[0].inputs - dim;
        let want_input = li > 0;
        let (lower, upper) = g_features.split_at_mut(li);
        let g_here = &upper[0];
        for (c, group) in lt.groups.iter().enumerate() {
            let gc = &g_here[c * width..(c + 1) * width];
            for local in 0..group.len() {
                let mut gy = vec![0.0; width];
                let mut any = false;
                for k in 0..width {
                    if lt.argmax[c][k] == local && gc[k] != 0.0 {
                        gy[k] = gc[k];
                        any = true;
                    }
                }
                if !any {
                    continue;
                }
                let gz = mlp_backward(mlp, &lt.acts[c][local], &gy, &mut grads.levels[li], want_input);
                if want_input {
                    let j = group[local];
                    let below = &mut lower[li - 1];
                    for (acc, g) in below[j * in_feat..(j + 1) * in_feat].iter_mut().zip(&gz[dim..]) {
                        *acc += g;
                    }
                }
            }
        }
    }
    Ok(())
}

/// Per-point latent vectors of the real input points (`count` rows).
pub fn latent(trace: &ForwardTrace) -> Vec<Vec<f64>> {
    trace
        .latent
        .chunks_exact(trace.latent_width.max(1))
        .take(trace.count)
        .map(<[f64]>::to_vec)
        .collect()
}

/// Forward pass truncated to the `r * count` real outputs.
pub fn generate(params: &ModelParams, input: &PaddedCloud) -> Result<PointCloud> {
    let (raw, trace) = forward(params, input)?;
    crate::cloud::truncate_output(&raw, trace.n_tilde())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{pad, truncate_output};

    fn tiny_arch() -> ArchSpec {
        ArchSpec::new(2, 8, 2, 0.125).unwrap()
    }

    fn random_patch(rng: &mut RngStream, k: usize, k_max: usize) -> PaddedCloud {
        let pos: Vec<f64> = (0..k * 2).map(|_| rng.range(-0.9, 0.9)).collect();
        let vel: Vec<f64> = (0..k * 2).map(|_| rng.range(-0.1, 0.1)).collect();
        let c = PointCloud::new(2, pos).unwrap().with_velocity(vel).unwrap();
        pad(&c, k_max).unwrap()
    }

    #[test]
    fn arch_widths_scale() {
        let a = ArchSpec::new(3, 1280, 8, 1.0).unwrap();
        assert_eq!(a.latent_width(), 256);
        let groups: Vec<usize> = a.levels.iter().map(|l| l.n_groups).collect();
        assert_eq!(groups, vec![1280, 640, 320, 160]);
        assert_eq!(a.levels[3].mlp_widths, vec![256, 256, 512]);
        assert_eq!(a.n_max(), 10240);
        let t = tiny_arch();
        assert_eq!(t.levels[0].mlp_widths, vec![4, 4, 8]);
        assert_eq!(t.latent_width(), 32);
    }

    #[test]
    fn flat_view_round_trips() {
        let mut rng = RngStream::new(1, 0);
        let p = ModelParams::init(tiny_arch(), &mut rng);
        let flat = p.to_flat();
        assert_eq!(flat.len(), p.n_params());
        let q = ModelParams::from_flat(tiny_arch(), &flat).unwrap();
        assert_eq!(p, q);
        assert!(ModelParams::from_flat(tiny_arch(), &flat[1..]).is_err());
    }

    #[test]
    fn empty_input_gives_empty_output() {
        let mut rng = RngStream::new(2, 0);
        let p = ModelParams::init(tiny_arch(), &mut rng);
        let input = random_patch(&mut rng, 0, 8);
        let (raw, trace) = forward(&p, &input).unwrap();
        assert_eq!(raw.len(), 16);
        assert_eq!(trace.n_tilde(), 0);
        assert!(truncate_output(&raw, trace.n_tilde()).unwrap().is_empty());
        let g = backward(&p, &trace, &vec![1.0; 32]).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_head_is_identity_skip() {
        let mut rng = RngStream::new(3, 0);
        let mut p = ModelParams::init(tiny_arch(), &mut rng);
        p.zero_head_output();
        let input = random_patch(&mut rng, 5, 8);
        let out = generate(&p, &input).unwrap();
        assert_eq!(out.len(), 10);
        for i in 0..5 {
            for j in 0..2 {
                assert_eq!(out.point(i * 2 + j), input.data().point(i));
            }
        }
    }

    #[test]
    fn arch_mismatch() {
        let mut rng = RngStream::new(4, 0);
        let p = ModelParams::init(tiny_arch(), &mut rng);
        let input = random_patch(&mut rng, 3, 16);
        assert!(matches!(forward(&p, &input), Err(Error::ArchMismatch(_))));
        let no_vel = pad(&PointCloud::from_points(2, &[[0.0, 0.0]]).unwrap(), 8).unwrap();
        assert!(matches!(forward(&p, &no_vel), Err(Error::ArchMismatch(_))));
    }

    #[test]
    fn trace_mismatch() {
        let mut rng = RngStream::new(5, 0);
        let p = ModelParams::init(tiny_arch(), &mut rng);
        let input = random_patch(&mut rng, 3, 8);
        let (_, trace) = forward(&p, &input).unwrap();
        let other = ModelParams::init(ArchSpec::new(2, 8, 3, 0.125).unwrap(), &mut rng);
        assert!(matches!(backward(&other, &trace, &[]), Err(Error::TraceMismatch(_))));
        assert!(matches!(backward(&p, &trace, &[0.0; 33]), Err(Error::TraceMismatch(_))));
    }

    #[test]
    fn zero_gradient_gives_zero() {
        let mut rng = RngStream::new(6, 0);
        let p = ModelParams::init(tiny_arch(), &mut rng);
        let input = random_patch(&mut rng, 6, 8);
        let (_, trace) = forward(&p, &input).unwrap();
        let g = backward(&p, &trace, &[0.0; 32]).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = RngStream::new(7, 0);
        let p = ModelParams::init(tiny_arch(), &mut rng);
        let input = random_patch(&mut rng, 7, 8);
        let (_, trace) = forward(&p, &input).unwrap();
        let n = trace.n_tilde() * 2;
        let w: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let loss = |q: &ModelParams| -> f64 {
            let out = forward(q, &input).unwrap().0;
            out.positions()[..n].iter().zip(&w).map(|(a, b)| a * b).sum()
        };
        let analytic = backward(&p, &trace, &w).unwrap();
        let flat = p.to_flat();
        let h = 1e-6;
        let scale = analytic.iter().fold(1e-8f64, |m, v| m.max(v.abs()));
        for k in (0..flat.len()).step_by(7) {
            let mut plus = flat.clone();
            plus[k] += h;
            let mut minus = flat.clone();
            minus[k] -= h;
            let num = (loss(&ModelParams::from_flat(tiny_arch(), &plus).unwrap())
                - loss(&ModelParams::from_flat(tiny_arch(), &minus).unwrap()))
                / (2.0 * h);
            assert!((analytic[k] - num).abs() <= 1e-4 * scale, "param {k}: {} vs {num}", analytic[k]);
        }
    }

    #[test]
    fn fps_is_order_independent() {
        let mut rng = RngStream::new(8, 0);
        let pts: Vec<f64> = (0..40).map(|_| rng.range(-1.0, 1.0)).collect();
        let chosen = farthest_point_sampling(2, &pts, 7);
        let perm = rng.permutation(20);
        let permuted: Vec<f64> = perm.iter().flat_map(|&i| [pts[2 * i], pts[2 * i + 1]]).collect();
        let chosen2 = farthest_point_sampling(2, &permuted, 7);
        let a: Vec<&[f64]> = chosen.iter().map(|&i| &pts[2 * i..2 * i + 2]).collect();
        let b: Vec<&[f64]> = chosen2.iter().map(|&i| &permuted[2 * i..2 * i + 2]).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn latent_rows_and_determinism() {
        let mut rng = RngStream::new(9, 0);
        let arch = ArchSpec::new(2, 16, 2, 0.25).unwrap();
        let p = ModelParams::init(arch, &mut rng);
        let input = random_patch(&mut rng, 16, 16);
        let (_, t1) = forward(&p, &input).unwrap();
        let (_, t2) = forward(&p, &input).unwrap();
        let l1 = latent(&t1);
        assert_eq!(l1.len(), 16);
        assert_eq!(l1[0].len(), 64);
        assert_eq!(l1, latent(&t2));
        assert!(l1.iter().flatten().all(|v| v.abs() <= 1.0));
    }
}
