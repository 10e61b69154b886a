//! Synthetic moving point sets and low/high-resolution training pairs.
//!
//! Dense point sets are seeded by Poisson-disk dart throwing inside a disk
//! (or ball) and advected by analytic divergence-free velocity fields with
//! RK4. Incompressible flow keeps the sampling density, which is the
//! property the training targets rely on. Low-resolution inputs are a
//! Poisson-disk subset chosen once and then followed by index, so inputs are
//! temporally coherent.

use std::f64::consts::PI;
use std::str::FromStr;

use crate::cloud::{pad, squared_distance, PaddedCloud, PatchTriplet, PointCloud};
use crate::error::{Error, Result};
use crate::grid::{poisson_select, InsertGrid, UniformGrid};
use crate::patchpipe::{normalize_selection, PatchLayout};
use crate::rng::RngStream;

/// Mean point spacing of the dense data.
pub const BASE_SPACING: f64 = 0.5;
/// Neighbors averaged by the smoothing pass.
pub const SMOOTHING_NEIGHBORS: usize = 8;
const RK4_SUBSTEPS: usize = 4;

/// Analytic incompressible velocity fields (world units per frame).
#[derive(Clone, Debug, PartialEq)]
pub enum FlowField {
    RigidRotation { omega: f64 },
    Shear { rate: f64 },
    TaylorGreen { amplitude: f64, wavelength: f64 },
    Translation { velocity: [f64; 3] },
    /// Drift plus a vortex lattice plus a slow rotation.
    Mix { velocity: [f64; 3], amplitude: f64, wavelength: f64, omega: f64 },
}

impl FlowField {
    pub const NAMES: [&'static str; 5] = [
        "rigid-rotation",
        "shear",
        "taylor-green-vortex",
        "translation",
        "translation+deformation-mix",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::RigidRotation { .. } => "rigid-rotation",
            Self::Shear { .. } => "shear",
            Self::TaylorGreen { .. } => "taylor-green-vortex",
            Self::Translation { .. } => "translation",
            Self::Mix { .. } => "translation+deformation-mix",
        }
    }

    /// Velocity at `p` (2 or 3 coordinates); the z component of 3D fields
    /// is zero, which keeps them divergence free.
    pub fn velocity(&self, p: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        match *self {
            Self::RigidRotation { omega } => {
                out[0] = -omega * p[1];
                out[1] = omega * p[0];
            }
            Self::Shear { rate } => out[0] = rate * p[1],
            Self::TaylorGreen { amplitude, wavelength } => taylor_green(p, amplitude, wavelength, out),
            Self::Translation { velocity } => out.copy_from_slice(&velocity[..out.len()]),
            Self::Mix {
                velocity,
                amplitude,
                wavelength,
                omega,
            } => {
                taylor_green(p, amplitude, wavelength, out);
                out[0] += velocity[0] - omega * p[1];
                out[1] += velocity[1] + omega * p[0];
                if out.len() == 3 {
                    out[2] += velocity[2];
                }
            }
        }
    }
}

fn taylor_green(p: &[f64], amplitude: f64, wavelength: f64, out: &mut [f64]) {
    let k = 2.0 * PI / wavelength;
    let cz = if p.len() == 3 { (k * p[2]).cos() } else { 1.0 };
    out[0] += amplitude * (k * p[0]).sin() * (k * p[1]).cos() * cz;
    out[1] -= amplitude * (k * p[0]).cos() * (k * p[1]).sin() * cz;
}

impl FromStr for FlowField {
    type Err = Error;

    /// Desk-scale defaults for each named field.
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "rigid-rotation" => Self::RigidRotation { omega: 0.03 },
            "shear" => Self::Shear { rate: 0.03 },
            "taylor-green-vortex" => Self::TaylorGreen {
                amplitude: 0.25,
                wavelength: 12.0,
            },
            "translation" => Self::Translation {
                velocity: [0.2, 0.0, 0.0],
            },
            "translation+deformation-mix" => Self::Mix {
                velocity: [0.1, 0.05, 0.0],
                amplitude: 0.15,
                wavelength: 10.0,
                omega: 0.01,
            },
            other => return Err(Error::UnknownField(other.to_string())),
        })
    }
}

/// Parameters of one simulated sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowConfig {
    pub dim: usize,
    pub field: FlowField,
    pub n_points: usize,
    pub frames: usize,
    pub dt: f64,
    pub spacing: f64,
}

impl FlowConfig {
    pub fn new(field: FlowField, n_points: usize, frames: usize) -> Self {
        Self {
            dim: 2,
            field,
            n_points,
            frames,
            dt: 1.0,
            spacing: BASE_SPACING,
        }
    }
}

/// Poisson-disk sample of `n` points in a disk/ball around the origin.
/// The region grows if dart throwing saturates before reaching `n`.
pub fn poisson_blob(dim: usize, n: usize, spacing: f64, rng: &mut RngStream) -> Result<PointCloud> {
    if dim != 2 && dim != 3 {
        return Err(Error::InvalidDimension(dim));
    }
    // Saturated random sequential adsorption density is about 0.7 / h^2 in
    // 2D and 0.55 / h^3 in 3D; aim a little below it.
    let mut radius = if dim == 2 {
        spacing * (n as f64 / (0.6 * PI)).sqrt()
    } else {
        spacing * (n as f64 / (0.45 * 4.0 / 3.0 * PI)).cbrt()
    };
    let mut grid = InsertGrid::new(dim, spacing);
    let mut pts = Vec::with_capacity(n * dim);
    let mut q = vec![0.0; dim];
    while pts.len() < n * dim {
        let mut misses = 0;
        while pts.len() < n * dim && misses < 200 * n.max(8) {
            loop {
                q.iter_mut().for_each(|x| *x = rng.range(-radius, radius));
                if q.iter().map(|x| x * x).sum::<f64>() <= radius * radius {
                    break;
                }
            }
            if grid.any_closer_than(&q, spacing) {
                misses += 1;
            } else {
                grid.insert(&q);
                pts.extend_from_slice(&q);
            }
        }
        radius *= 1.1;
    }
    PointCloud::new(dim, pts)
}

fn rk4_step(field: &FlowField, p: &mut [f64], h: f64) {
    let d = p.len();
    let mut k1 = [0.0; 3];
    let mut k2 = [0.0; 3];
    let mut k3 = [0.0; 3];
    let mut k4 = [0.0; 3];
    let mut tmp = [0.0; 3];
    field.velocity(p, &mut k1[..d]);
    for a in 0..d {
        tmp[a] = p[a] + 0.5 * h * k1[a];
    }
    field.velocity(&tmp[..d], &mut k2[..d]);
    for a in 0..d {
        tmp[a] = p[a] + 0.5 * h * k2[a];
    }
    field.velocity(&tmp[..d], &mut k3[..d]);
    for a in 0..d {
        tmp[a] = p[a] + h * k3[a];
    }
    field.velocity(&tmp[..d], &mut k4[..d]);
    for a in 0..d {
        p[a] += h / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]);
    }
}

fn with_field_velocity(field: &FlowField, cloud: PointCloud) -> PointCloud {
    let d = cloud.dim();
    let mut vel = vec![0.0; cloud.len() * d];
    for (p, v) in cloud.points().zip(vel.chunks_exact_mut(d)) {
        field.velocity(p, v);
    }
    cloud.with_velocity(vel).expect("same length")
}

/// Advects a Poisson-disk blob; frame `f` stores positions and the field
/// velocity at those positions.
pub fn simulate(cfg: &FlowConfig, rng: &mut RngStream) -> Result<Vec<PointCloud>> {
    if cfg.n_points == 0 {
        return Err(Error::EmptyCloud);
    }
    let seed = poisson_blob(cfg.dim, cfg.n_points, cfg.spacing, rng)?;
    let mut pos = seed.positions().to_vec();
    let h = cfg.dt / RK4_SUBSTEPS as f64;
    let mut frames = Vec::with_capacity(cfg.frames);
    for f in 0..cfg.frames {
        if f > 0 {
            for p in pos.chunks_exact_mut(cfg.dim) {
                for _ in 0..RK4_SUBSTEPS {
                    rk4_step(&cfg.field, p, h);
                }
            }
        }
        let cloud = PointCloud::new(cfg.dim, pos.clone())?.with_frame(f as i64);
        frames.push(with_field_velocity(&cfg.field, cloud));
    }
    Ok(frames)
}

/// Named-field 2D simulation at the base spacing.
pub fn simulate_flow(field: &str, n_points: usize, frames: usize, dt: f64, rng: &mut RngStream) -> Result<Vec<PointCloud>> {
    let mut cfg = FlowConfig::new(field.parse()?, n_points, frames);
    cfg.dt = dt;
    simulate(&cfg, rng)
}

/// Maximal Poisson-disk subset in random order; returns the subset and the
/// chosen indices.
pub fn downsample_poisson(cloud: &PointCloud, target_spacing: f64, rng: &mut RngStream) -> (PointCloud, Vec<usize>) {
    let order = rng.permutation(cloud.len());
    let mut idx = poisson_select(cloud.dim(), cloud.positions(), &order, target_spacing, &[]);
    idx.sort_unstable();
    (cloud.select(&idx), idx)
}

/// Moves each point toward the centroid of its nearest neighbors (self
/// excluded) by `strength`, `iterations` times. Features are untouched.
pub fn smooth_before_downsample(cloud: &PointCloud, iterations: usize, strength: f64) -> PointCloud {
    let mut out = cloud.clone();
    let d = cloud.dim();
    if cloud.len() < 2 {
        return out;
    }
    for _ in 0..iterations {
        let cur = out.positions().to_vec();
        let cell = estimate_cell(&cur, d);
        let grid = UniformGrid::new(d, &cur, cell);
        let mut next = cur.clone();
        for i in 0..cloud.len() {
            let p = &cur[i * d..(i + 1) * d];
            let near = grid.k_nearest(p, SMOOTHING_NEIGHBORS + 1);
            let others: Vec<usize> = near.iter().map(|&(j, _)| j).filter(|&j| j != i).take(SMOOTHING_NEIGHBORS).collect();
            for a in 0..d {
                let centroid = others.iter().map(|&j| cur[j * d + a]).sum::<f64>() / others.len() as f64;
                next[i * d + a] = p[a] + strength * (centroid - p[a]);
            }
        }
        out.positions_mut().copy_from_slice(&next);
    }
    out
}

fn estimate_cell(points: &[f64], dim: usize) -> f64 {
    let n = points.len() / dim;
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points.chunks_exact(dim) {
        for a in 0..dim {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let volume: f64 = (0..dim).map(|a| (hi[a] - lo[a]).max(1e-9)).product();
    (volume / n as f64).powf(1.0 / dim as f64).max(1e-9) * 2.0
}

/// Sampling knobs for triplet construction.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetConfig {
    pub triplets: usize,
    pub low_spacing: f64,
    pub smoothing_iterations: usize,
    pub smoothing_strength: f64,
}

impl DatasetConfig {
    /// Low-res spacing of `base * r^(1/dim)`, i.e. about `r` times fewer points.
    pub fn for_layout(layout: &PatchLayout, dim: usize, triplets: usize) -> Self {
        Self {
            triplets,
            low_spacing: BASE_SPACING * (layout.r as f64).powf(1.0 / dim as f64),
            smoothing_iterations: 1,
            smoothing_strength: 0.25,
        }
    }
}

/// Index-coherent low-resolution version of a dense sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct LowRes {
    pub frames: Vec<PointCloud>,
    pub indices: Vec<usize>,
}

/// Smooths every frame, picks a Poisson subset at frame 0 and follows
/// those indices through the sequence.
pub fn low_res_sequence(frames: &[PointCloud], cfg: &DatasetConfig, rng: &mut RngStream) -> Result<LowRes> {
    if frames.is_empty() {
        return Err(Error::InsufficientFrames(0));
    }
    let smoothed: Vec<PointCloud> = frames
        .iter()
        .map(|f| smooth_before_downsample(f, cfg.smoothing_iterations, cfg.smoothing_strength))
        .collect();
    let (_, indices) = downsample_poisson(&smoothed[0], cfg.low_spacing, rng);
    let frames = smoothed.iter().map(|f| f.select(&indices)).collect();
    Ok(LowRes { frames, indices })
}

/// Indices inside the ball at every one of the given frames, nearest to
/// the center at `frames[ref_frame]` first, at most `cap` of them.
fn inside_all(frames: &[&PointCloud], center: &[f64], radius: f64, cap: usize, ref_frame: usize) -> Vec<usize> {
    let r2 = radius * radius;
    let mut ids: Vec<(f64, usize)> = (0..frames[0].len())
        .filter(|&i| frames.iter().all(|f| squared_distance(f.point(i), center) <= r2))
        .map(|i| (squared_distance(frames[ref_frame].point(i), center), i))
        .collect();
    ids.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    ids.truncate(cap);
    let mut out: Vec<usize> = ids.into_iter().map(|(_, i)| i).collect();
    out.sort_unstable();
    out
}

/// Samples training triplets from a dense sequence and its low-res version.
/// The patch center stays fixed over the three frames; a point belongs to
/// the patch if it is inside at all three, which keeps correspondence by
/// index. Oversized patches keep the points nearest the center.
pub fn build_triplets(
    high: &[PointCloud],
    low: &[PointCloud],
    layout: &PatchLayout,
    count: usize,
    rng: &mut RngStream,
) -> Result<Vec<PatchTriplet>> {
    if high.len() < 3 || low.len() != high.len() {
        return Err(Error::InsufficientFrames(high.len().min(low.len())));
    }
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count && attempts < count * 20 + 100 {
        attempts += 1;
        let t = 1 + rng.index(high.len() - 2);
        let frame = &high[t];
        if frame.is_empty() {
            continue;
        }
        let center = frame.point(rng.index(frame.len())).to_vec();
        let hs = [&high[t - 1], &high[t], &high[t + 1]];
        let ls = [&low[t - 1], &low[t], &low[t + 1]];
        let tid = inside_all(&hs, &center, layout.high_radius, layout.n_max, 1);
        let lid = inside_all(&ls, &center, layout.low_radius, layout.k_max, 1);
        if tid.is_empty() || lid.is_empty() {
            continue;
        }
        let targets = hs.map(|f| normalize_selection(f, &tid, &center, layout.high_radius).without_features());
        let inputs: Vec<PaddedCloud> = ls
            .iter()
            .map(|f| pad(&normalize_selection(f, &lid, &center, layout.low_radius), layout.k_max))
            .collect::<Result<_>>()?;
        let inputs: [PaddedCloud; 3] = inputs.try_into().expect("three frames");
        out.push(PatchTriplet::new(inputs, targets, layout.r, center, layout.low_radius)?);
    }
    Ok(out)
}

/// Full pipeline from a dense sequence: smoothing, downsampling, triplets.
pub fn build_dataset(
    frames: &[PointCloud],
    layout: &PatchLayout,
    cfg: &DatasetConfig,
    rng: &mut RngStream,
) -> Result<Vec<PatchTriplet>> {
    if frames.len() < 3 {
        return Err(Error::InsufficientFrames(frames.len()));
    }
    let low = low_res_sequence(frames, cfg, rng)?;
    build_triplets(frames, &low.frames, layout, cfg.triplets, rng)
}

/// A dense sequence together with its low-res version.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub high: Vec<PointCloud>,
    pub low: LowRes,
}

/// Simulates one flow and derives its low-res sequence.
pub fn make_scene(flow: &FlowConfig, data: &DatasetConfig, rng: &mut RngStream) -> Result<Scene> {
    let high = simulate(flow, rng)?;
    let low = low_res_sequence(&high, data, rng)?;
    Ok(Scene { high, low })
}

/// Desk-scale corpus: one scene per named field, repeated `scenes_per_field`
/// times, with triplets spread evenly over the scenes.
pub fn desk_corpus(
    dim: usize,
    layout: &PatchLayout,
    n_points: usize,
    frames: usize,
    scenes_per_field: usize,
    triplets: usize,
    rng: &mut RngStream,
) -> Result<(Vec<Scene>, Vec<PatchTriplet>)> {
    let data = DatasetConfig::for_layout(layout, dim, triplets);
    let mut scenes = Vec::new();
    for rep in 0..scenes_per_field {
        for name in FlowField::NAMES {
            let mut flow = FlowConfig::new(name.parse()?, n_points, frames);
            flow.dim = dim;
            let mut srng = rng.fork((rep * FlowField::NAMES.len()) as u64 + scenes.len() as u64);
            scenes.push(make_scene(&flow, &data, &mut srng)?);
        }
    }
    let per_scene = triplets.div_ceil(scenes.len());
    let mut all = Vec::with_capacity(triplets);
    for (s, scene) in scenes.iter().enumerate() {
        let mut trng = rng.fork(1_000_000 + s as u64);
        all.extend(build_triplets(&scene.high, &scene.low.frames, layout, per_scene, &mut trng)?);
    }
    all.truncate(triplets);
    Ok((scenes, all))
}

/// Consecutive padded inputs of one patch that follows a low-res point.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchSequence {
    pub inputs: Vec<PaddedCloud>,
    pub centers: Vec<Vec<f64>>,
}

/// Patch sequences of `steps` frames; each center rides on a randomly chosen
/// low-res point, and each frame holds the nearest in-radius points.
pub fn build_patch_sequences(
    low: &[PointCloud],
    layout: &PatchLayout,
    count: usize,
    steps: usize,
    rng: &mut RngStream,
) -> Result<Vec<PatchSequence>> {
    if low.len() < steps || steps == 0 {
        return Err(Error::TooFewFrames {
            needed: steps,
            got: low.len(),
        });
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let start = rng.index(low.len() - steps + 1);
        let anchor = rng.index(low[start].len().max(1));
        let mut seq = PatchSequence {
            inputs: Vec::with_capacity(steps),
            centers: Vec::with_capacity(steps),
        };
        for f in &low[start..start + steps] {
            let center = f.point(anchor).to_vec();
            let ids = inside_all(&[f], &center, layout.low_radius, layout.k_max, 0);
            let patch = normalize_selection(f, &ids, &center, layout.low_radius);
            seq.inputs.push(pad(&patch, layout.k_max)?);
            seq.centers.push(center);
        }
        out.push(seq);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn min_pair_distance(c: &PointCloud) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..c.len() {
            for j in i + 1..c.len() {
                best = best.min(c.squared_distance(i, c, j));
            }
        }
        best.sqrt()
    }

    #[test]
    fn translation_shifts_points() {
        let mut cfg = FlowConfig::new(FlowField::Translation { velocity: [1.0, 0.0, 0.0] }, 40, 2);
        cfg.dt = 1.0;
        let frames = simulate(&cfg, &mut RngStream::new(1, 0)).unwrap();
        for i in 0..40 {
            assert!((frames[1].point(i)[0] - frames[0].point(i)[0] - 1.0).abs() < 1e-12);
            assert_eq!(frames[1].point(i)[1], frames[0].point(i)[1]);
            assert_eq!(frames[1].velocity_at(i).unwrap(), &[1.0, 0.0]);
        }
    }

    #[test]
    fn rotation_is_an_isometry() {
        let frames = simulate_flow("rigid-rotation", 60, 11, 1.0, &mut RngStream::new(2, 0)).unwrap();
        let (a, b) = (&frames[0], &frames[10]);
        for i in 0..60 {
            for j in 0..60 {
                let d0 = a.squared_distance(i, a, j).sqrt();
                let d1 = b.squared_distance(i, b, j).sqrt();
                assert!((d0 - d1).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn taylor_green_stays_bounded() {
        let frames = simulate_flow("taylor-green-vortex", 200, 50, 1.0, &mut RngStream::new(3, 0)).unwrap();
        let extent = |c: &PointCloud| c.positions().iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let e0 = extent(&frames[0]);
        for f in &frames {
            assert_eq!(f.len(), 200);
            assert!(extent(f) <= e0 + 12.0);
        }
    }

    #[test]
    fn unknown_field() {
        assert!(matches!(
            simulate_flow("lava", 10, 2, 1.0, &mut RngStream::new(0, 0)),
            Err(Error::UnknownField(_))
        ));
    }

    #[test]
    fn blob_is_poisson() {
        let c = poisson_blob(2, 300, 0.5, &mut RngStream::new(4, 0)).unwrap();
        assert_eq!(c.len(), 300);
        assert!(min_pair_distance(&c) >= 0.5);
    }

    #[test]
    fn downsample_small_spacing_is_identity() {
        let c = PointCloud::from_points(2, &[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        let (sub, idx) = downsample_poisson(&c, 0.5, &mut RngStream::new(0, 0));
        assert_eq!(idx, vec![0, 1, 2]);
        assert_eq!(sub, c);
    }

    #[test]
    fn downsample_grid_is_spaced_and_maximal() {
        let pts: Vec<[f64; 2]> = (0..20).flat_map(|i| (0..20).map(move |j| [i as f64 * 0.1, j as f64 * 0.1])).collect();
        let c = PointCloud::from_points(2, &pts).unwrap();
        let (sub, idx) = downsample_poisson(&c, 0.2, &mut RngStream::new(5, 0));
        assert!(min_pair_distance(&sub) >= 0.2 - 1e-12);
        for p in c.points() {
            assert!(sub.points().any(|q| squared_distance(p, q) < 0.2 * 0.2));
        }
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn downsample_ratio_near_one_ninth() {
        let c = poisson_blob(2, 3000, 0.5, &mut RngStream::new(6, 0)).unwrap();
        let (sub, _) = downsample_poisson(&c, 1.5, &mut RngStream::new(7, 0));
        let ratio = sub.len() as f64 / c.len() as f64;
        assert!(ratio > 1.0 / 14.0 && ratio < 1.0 / 6.0, "ratio {ratio}");
    }

    #[test]
    fn smoothing_examples() {
        let c = PointCloud::from_points(2, &[[0.0, 0.0], [1.0, 0.5], [2.0, 0.0]]).unwrap();
        assert_eq!(smooth_before_downsample(&c, 0, 1.0), c);
        let s = smooth_before_downsample(&c, 1, 1.0);
        assert_eq!(s.point(1), &[1.0, 0.0]);
    }

    #[test]
    fn smoothing_flattens_zigzag() {
        let pts: Vec<[f64; 2]> = (0..40).map(|i| [i as f64 * 0.25, if i % 2 == 0 { 0.1 } else { -0.1 }]).collect();
        let c = PointCloud::from_points(2, &pts).unwrap();
        let dev = |c: &PointCloud| c.points().skip(8).take(24).fold(0.0f64, |m, p| m.max(p[1].abs()));
        let mut last = dev(&c);
        for it in 1..5 {
            let d = dev(&smooth_before_downsample(&c, it, 0.5));
            assert!(d < last);
            last = d;
        }
    }

    #[test]
    fn static_cloud_gives_identical_targets() {
        let mut cfg = FlowConfig::new(FlowField::Translation { velocity: [0.0; 3] }, 300, 4);
        cfg.dt = 1.0;
        let frames = simulate(&cfg, &mut RngStream::new(8, 0)).unwrap();
        let layout = PatchLayout::desk_2d();
        let data = DatasetConfig::for_layout(&layout, 2, 20);
        let set = build_dataset(&frames, &layout, &data, &mut RngStream::new(9, 0)).unwrap();
        assert_eq!(set.len(), 20);
        for t in &set {
            assert_eq!(t.targets()[0].positions(), t.targets()[1].positions());
            assert_eq!(t.targets()[1].positions(), t.targets()[2].positions());
            assert!(t.k() <= 24 && t.n() <= 96 && t.k() > 0 && t.n() > 0);
        }
    }

    #[test]
    fn too_few_frames() {
        let frames = simulate_flow("shear", 50, 2, 1.0, &mut RngStream::new(0, 0)).unwrap();
        let layout = PatchLayout::desk_2d();
        let data = DatasetConfig::for_layout(&layout, 2, 5);
        assert!(matches!(
            build_dataset(&frames, &layout, &data, &mut RngStream::new(0, 0)),
            Err(Error::InsufficientFrames(2))
        ));
    }

    #[test]
    fn triplet_motion_is_bounded_by_speed() {
        let frames = simulate_flow("translation+deformation-mix", 400, 6, 1.0, &mut RngStream::new(10, 0)).unwrap();
        let layout = PatchLayout::desk_2d();
        let data = DatasetConfig::for_layout(&layout, 2, 30);
        let max_speed = frames
            .iter()
            .flat_map(|f| f.velocity().unwrap().chunks_exact(2).map(|v| (v[0] * v[0] + v[1] * v[1]).sqrt()))
            .fold(0.0f64, f64::max);
        let set = build_dataset(&frames, &layout, &data, &mut RngStream::new(11, 0)).unwrap();
        for t in &set {
            let [a, b, _] = t.targets();
            for i in 0..a.len() {
                let step = a.squared_distance(i, b, i).sqrt() * layout.high_radius;
                assert!(step <= max_speed * 1.05);
            }
        }
    }

    #[test]
    fn sequences_have_requested_length() {
        let frames = simulate_flow("rigid-rotation", 300, 12, 1.0, &mut RngStream::new(12, 0)).unwrap();
        let layout = PatchLayout::desk_2d();
        let data = DatasetConfig::for_layout(&layout, 2, 0);
        let low = low_res_sequence(&frames, &data, &mut RngStream::new(13, 0)).unwrap();
        let seqs = build_patch_sequences(&low.frames, &layout, 3, 8, &mut RngStream::new(14, 0)).unwrap();
        assert_eq!(seqs.len(), 3);
        assert!(seqs.iter().all(|s| s.inputs.len() == 8 && s.inputs.iter().all(|p| p.count() >= 1)));
    }
}
