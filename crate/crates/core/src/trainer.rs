//! Siamese three-frame training and held-out evaluation.
//!
//! Each triplet runs the generator once per frame with the same weights.
//! Outputs are truncated to `r * k` points, spatial plans are solved per
//! frame, and the center-frame plan drives the temporal terms. Gradients of
//! every term flow back through all three evaluations.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::cloud::{PatchTriplet, PointCloud};
use crate::error::{Error, Result};
use crate::losses::{metric_count_error, LossWeights, SiameseInputs, SiameseTerms, SpatialFrames};
use crate::network::{backward_into, forward, ArchSpec, ModelParams};
use crate::rng::RngStream;
use crate::transport::{solve, AssignmentPlan};

/// Which terms enter the training objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LossVariant {
    /// Spatial term only.
    Baseline,
    /// Spatial plus direct velocity penalty.
    L2v,
    /// Spatial plus EMD velocity.
    EvOnly,
    /// Spatial, EMD velocity and acceleration, mingling.
    Full,
}

impl LossVariant {
    pub const ALL: [Self; 4] = [Self::Baseline, Self::L2v, Self::EvOnly, Self::Full];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Baseline => "baseline",
            Self::L2v => "l2v",
            Self::EvOnly => "ev_only",
            Self::Full => "full",
        }
    }
}

impl fmt::Display for LossVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown loss variant '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub dim: usize,
    pub r: usize,
    pub k_max: usize,
    pub n_max: usize,
    pub weights: LossWeights,
    pub learning_rate: f64,
    pub decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss_variant: LossVariant,
    pub spatial_frames: SpatialFrames,
    pub width_mult: f64,
}

impl TrainConfig {
    /// Full-scale 2D hyperparameters.
    pub fn full_scale_2d() -> Self {
        Self {
            dim: 2,
            r: 9,
            k_max: 100,
            n_max: 900,
            weights: LossWeights::BASE_2D,
            learning_rate: 0.001,
            decay: 0.003,
            epochs: 5,
            batch_size: 16,
            seed: 0,
            loss_variant: LossVariant::Full,
            spatial_frames: SpatialFrames::AllThree,
            width_mult: 1.0,
        }
    }

    /// Full-scale 3D hyperparameters.
    pub fn full_scale_3d() -> Self {
        Self {
            dim: 3,
            r: 8,
            k_max: 1280,
            n_max: 10240,
            weights: LossWeights::BASE_3D,
            epochs: 10,
            batch_size: 4,
            ..Self::full_scale_2d()
        }
    }

    /// Reduced network and schedule that trains in minutes on one core.
    pub fn desk_2d() -> Self {
        Self {
            r: 4,
            k_max: 24,
            n_max: 96,
            learning_rate: 0.003,
            decay: 0.003,
            epochs: 10,
            batch_size: 8,
            width_mult: 0.25,
            ..Self::full_scale_2d()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_max != self.r * self.k_max {
            return Err(Error::Config(format!(
                "n_max {} must equal r {} * k_max {}",
                self.n_max, self.r, self.k_max
            )));
        }
        if !(self.learning_rate > 0.0) || self.decay < 0.0 || self.batch_size == 0 || !(self.width_mult > 0.0) {
            return Err(Error::Config("learning_rate, batch_size and width_mult must be positive".into()));
        }
        LossWeights::new(self.weights.gamma, self.weights.mu, self.weights.nu)?;
        Ok(())
    }

    pub fn arch(&self) -> Result<ArchSpec> {
        ArchSpec::new(self.dim, self.k_max, self.r, self.width_mult)
    }

    /// Learning rate after `step` updates.
    pub fn lr_at(&self, step: usize) -> f64 {
        self.learning_rate / (1.0 + self.decay * step as f64)
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// Update direction for `grad`; the step is `-lr * direction`.
    pub fn direction(&mut self, grad: &[f64]) -> Vec<f64> {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        grad.iter()
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
            .map(|(&g, (m, v))| {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                (*m / c1) / ((*v / c2).sqrt() + self.eps)
            })
            .collect()
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        let dir = self.direction(grad);
        for (p, d) in params.iter_mut().zip(dir) {
            *p -= lr * d;
        }
    }
}

/// Raw (unnormalized) loss terms of one sample or batch.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub spatial: f64,
    pub l2_velocity: f64,
    pub l2_acceleration: f64,
    pub emd_velocity: f64,
    pub emd_acceleration: f64,
    pub mingling: f64,
}

impl LossBreakdown {
    fn add_scaled(&mut self, o: &Self, s: f64) {
        self.total += s * o.total;
        self.spatial += s * o.spatial;
        self.l2_velocity += s * o.l2_velocity;
        self.l2_acceleration += s * o.l2_acceleration;
        self.emd_velocity += s * o.emd_velocity;
        self.emd_acceleration += s * o.emd_acceleration;
        self.mingling += s * o.mingling;
    }
}

/// One optimizer step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    /// Batch means of the raw loss terms.
    pub loss: LossBreakdown,
}

/// Held-out metrics; every column except `ln` and `lm` is divided by the
/// output count of each sample before averaging.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsRecord {
    pub label: String,
    pub samples: usize,
    pub ls: f64,
    pub ln: f64,
    pub lm: f64,
    pub l2v: f64,
    pub l2a: f64,
    pub lev: f64,
    pub lea: f64,
}

impl MetricsRecord {
    pub const CSV_HEADER: &'static str = "label,samples,L_S,L_N,L_M,L_2V,L_2A,L_EV,L_EA";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}",
            self.label, self.samples, self.ls, self.ln, self.lm, self.l2v, self.l2a, self.lev, self.lea
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub steps: Vec<StepRecord>,
    pub final_metrics: Option<MetricsRecord>,
}

impl TrainReport {
    pub const CSV_HEADER: &'static str = "step,epoch,lr,total,L_S,L_2V,L_2A,L_EV,L_EA,L_M";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for s in &self.steps {
            let l = &s.loss;
            out.push_str(&format!(
                "{},{},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}\n",
                s.step,
                s.epoch,
                s.lr,
                l.total,
                l.spatial,
                l.l2_velocity,
                l.l2_acceleration,
                l.emd_velocity,
                l.emd_acceleration,
                l.mingling
            ));
        }
        out
    }

    /// Mean total loss over the first and last `window` steps.
    pub fn loss_drop(&self, window: usize) -> Option<(f64, f64)> {
        if self.steps.len() < window || window == 0 {
            return None;
        }
        let mean = |s: &[StepRecord]| s.iter().map(|r| r.loss.total).sum::<f64>() / s.len() as f64;
        Some((mean(&self.steps[..window]), mean(&self.steps[self.steps.len() - window..])))
    }
}

/// Parameters plus optimizer progress; enough to resume exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub params: ModelParams,
    pub adam: Adam,
    pub step: usize,
    pub epoch: usize,
}

impl TrainState {
    pub fn new(config: &TrainConfig) -> Result<Self> {
        let mut rng = RngStream::new(config.seed, 0);
        let params = ModelParams::init(config.arch()?, &mut rng);
        let adam = Adam::new(params.n_params());
        Ok(Self {
            params,
            adam,
            step: 0,
            epoch: 0,
        })
    }
}

fn check_shapes(dataset: &[PatchTriplet], config: &TrainConfig) -> Result<()> {
    for (i, t) in dataset.iter().enumerate() {
        if t.k_max() != config.k_max || t.upsample_factor() != config.r || t.dim() != config.dim {
            return Err(Error::ShapeMismatch(format!(
                "triplet {i} has dim {} k_max {} r {}, config expects dim {} k_max {} r {}",
                t.dim(),
                t.k_max(),
                t.upsample_factor(),
                config.dim,
                config.k_max,
                config.r
            )));
        }
        if t.n() > config.n_max {
            return Err(Error::ShapeMismatch(format!("triplet {i} has {} targets > n_max", t.n())));
        }
    }
    Ok(())
}

/// Generator outputs and per-frame plans of one triplet.
pub struct SiameseOutputs {
    pub gen: [PointCloud; 3],
    pub plans: [AssignmentPlan; 3],
}

fn plans_for(gen: &[PointCloud; 3], targets: &[PointCloud; 3]) -> Result<[AssignmentPlan; 3]> {
    Ok([
        solve(&gen[0], &targets[0])?,
        solve(&gen[1], &targets[1])?,
        solve(&gen[2], &targets[2])?,
    ])
}

fn variant_weights(variant: LossVariant, w: &LossWeights) -> [f64; 6] {
    // spatial, l2v, l2a, ev, ea, mingling
    match variant {
        LossVariant::Baseline => [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        LossVariant::L2v => [1.0, w.gamma, 0.0, 0.0, 0.0, 0.0],
        LossVariant::EvOnly => [1.0, 0.0, 0.0, w.gamma, 0.0, 0.0],
        LossVariant::Full => [1.0, 0.0, 0.0, w.gamma, w.mu, w.nu],
    }
}

/// Loss terms and parameter gradient of a single triplet.
pub fn triplet_gradient(
    params: &ModelParams,
    triplet: &PatchTriplet,
    config: &TrainConfig,
) -> Result<(LossBreakdown, ModelParams)> {
    let mut traces = Vec::with_capacity(3);
    let mut gen = Vec::with_capacity(3);
    for input in triplet.inputs() {
        let (raw, trace) = forward(params, input)?;
        gen.push(raw.prefix(trace.n_tilde()));
        traces.push(trace);
    }
    let gen: [PointCloud; 3] = gen.try_into().expect("three frames");
    let targets = triplet.targets();
    let plans = plans_for(&gen, targets)?;
    let terms = SiameseTerms::compute(&SiameseInputs {
        gen: [&gen[0], &gen[1], &gen[2]],
        targets: [&targets[0], &targets[1], &targets[2]],
        plans: [&plans[0], &plans[1], &plans[2]],
        group_size: config.r,
        spatial_frames: config.spatial_frames,
    })?;
    let w = variant_weights(config.loss_variant, &config.weights);
    let combined = terms.combine(&[
        (&terms.spatial, w[0]),
        (&terms.l2_velocity, w[1]),
        (&terms.l2_acceleration, w[2]),
        (&terms.emd_velocity, w[3]),
        (&terms.emd_acceleration, w[4]),
        (&terms.mingling, w[5]),
    ]);
    let mut grads = ModelParams::zeros(params.arch().clone());
    for (trace, g) in traces.iter().zip(&combined.grads) {
        backward_into(params, trace, g, &mut grads)?;
    }
    let breakdown = LossBreakdown {
        total: combined.value,
        spatial: terms.spatial.value,
        l2_velocity: terms.l2_velocity.value,
        l2_acceleration: terms.l2_acceleration.value,
        emd_velocity: terms.emd_velocity.value,
        emd_acceleration: terms.emd_acceleration.value,
        mingling: terms.mingling.value,
    };
    Ok((breakdown, grads))
}

/// Mean loss and gradient over a batch, summed in batch order.
pub fn batch_gradient(
    params: &ModelParams,
    batch: &[&PatchTriplet],
    config: &TrainConfig,
) -> Result<(LossBreakdown, Vec<f64>)> {
    let results: Vec<Result<(LossBreakdown, Vec<f64>)>> = batch
        .par_iter()
        .map(|t| triplet_gradient(params, t, config).map(|(l, g)| (l, g.to_flat())))
        .collect();
    let scale = 1.0 / batch.len() as f64;
    let mut loss = LossBreakdown::default();
    let mut grad = vec![0.0; params.n_params()];
    for r in results {
        let (l, g) = r?;
        loss.add_scaled(&l, scale);
        for (acc, v) in grad.iter_mut().zip(g) {
            *acc += scale * v;
        }
    }
    Ok((loss, grad))
}

/// Trains from a fresh seeded initialization.
pub fn train(
    dataset: &[PatchTriplet],
    held_out: Option<&[PatchTriplet]>,
    config: &TrainConfig,
) -> Result<(ModelParams, TrainReport)> {
    let mut state = TrainState::new(config)?;
    let report = train_from(&mut state, dataset, held_out, config, config.epochs)?;
    Ok((state.params, report))
}

/// Continues training for `epochs` more epochs. The shuffle of epoch `e`
/// depends only on the seed and `e`, so resuming reproduces an
/// uninterrupted run exactly.
pub fn train_from(
    state: &mut TrainState,
    dataset: &[PatchTriplet],
    held_out: Option<&[PatchTriplet]>,
    config: &TrainConfig,
    epochs: usize,
) -> Result<TrainReport> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::ShapeMismatch("training set is empty".into()));
    }
    check_shapes(dataset, config)?;
    if state.params.arch() != &config.arch()? {
        return Err(Error::ArchMismatch("state does not match the configured architecture".into()));
    }
    let mut report = TrainReport::default();
    for _ in 0..epochs {
        let mut rng = RngStream::new(config.seed, 1 + state.epoch as u64);
        let order = rng.permutation(dataset.len());
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&PatchTriplet> = chunk.iter().map(|&i| &dataset[i]).collect();
            let (loss, grad) = batch_gradient(&state.params, &batch, config)?;
            if !loss.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    step: state.step,
                    detail: format!("{loss:?}"),
                });
            }
            let lr = config.lr_at(state.step);
            let mut flat = state.params.to_flat();
            state.adam.step(&mut flat, &grad, lr);
            state.params.set_flat(&flat)?;
            report.steps.push(StepRecord {
                step: state.step,
                epoch: state.epoch,
                lr,
                loss,
            });
            state.step += 1;
        }
        state.epoch += 1;
    }
    if let Some(h) = held_out {
        let mut m = evaluate(&state.params, h)?;
        m.label = config.loss_variant.to_string();
        report.final_metrics = Some(m);
    }
    Ok(report)
}

/// Held-out metrics of the network.
pub fn evaluate(params: &ModelParams, dataset: &[PatchTriplet]) -> Result<MetricsRecord> {
    let outs: Vec<Result<[PointCloud; 3]>> = dataset
        .par_iter()
        .map(|t| {
            let mut gen = Vec::with_capacity(3);
            for input in t.inputs() {
                let (raw, trace) = forward(params, input)?;
                gen.push(raw.prefix(trace.n_tilde()));
            }
            Ok(gen.try_into().expect("three frames"))
        })
        .collect();
    let gens = outs.into_iter().collect::<Result<Vec<_>>>()?;
    evaluate_outputs(dataset, &gens)
}

/// Held-out metrics of an arbitrary generator `f(triplet, frame)`.
pub fn evaluate_generator<F>(dataset: &[PatchTriplet], f: F) -> Result<MetricsRecord>
where
    F: Fn(&PatchTriplet, usize) -> PointCloud,
{
    let gens: Vec<[PointCloud; 3]> = dataset.iter().map(|t| [f(t, 0), f(t, 1), f(t, 2)]).collect();
    evaluate_outputs(dataset, &gens)
}

fn evaluate_outputs(dataset: &[PatchTriplet], gens: &[[PointCloud; 3]]) -> Result<MetricsRecord> {
    let rows: Vec<Result<Option<[f64; 7]>>> = dataset
        .par_iter()
        .zip(gens.par_iter())
        .map(|(t, gen)| {
            let n_tilde = gen[1].len();
            if n_tilde == 0 || gen.iter().any(|g| g.len() != n_tilde) {
                return Ok(None);
            }
            let targets = t.targets();
            let plans = plans_for(gen, targets)?;
            let terms = SiameseTerms::compute(&SiameseInputs {
                gen: [&gen[0], &gen[1], &gen[2]],
                targets: [&targets[0], &targets[1], &targets[2]],
                plans: [&plans[0], &plans[1], &plans[2]],
                group_size: t.upsample_factor(),
                spatial_frames: SpatialFrames::CenterOnly,
            })?;
            let per = 1.0 / n_tilde as f64;
            let n = t.n().max(1) as f64;
            Ok(Some([
                terms.spatial.value * per,
                metric_count_error(t.n_tilde(), t.n()) / (n * n),
                terms.mingling.value,
                terms.l2_velocity.value * per,
                terms.l2_acceleration.value * per,
                terms.emd_velocity.value * per,
                terms.emd_acceleration.value * per,
            ]))
        })
        .collect();
    let mut sums = [0.0; 7];
    let mut samples = 0;
    for r in rows {
        if let Some(row) = r? {
            samples += 1;
            for (s, v) in sums.iter_mut().zip(row) {
                *s += v;
            }
        }
    }
    let d = samples.max(1) as f64;
    Ok(MetricsRecord {
        label: String::new(),
        samples,
        ls: sums[0] / d,
        ln: sums[1] / d,
        lm: sums[2] / d,
        l2v: sums[3] / d,
        l2a: sums[4] / d,
        lev: sums[5] / d,
        lea: sums[6] / d,
    })
}
