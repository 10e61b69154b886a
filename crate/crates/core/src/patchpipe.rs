//! Patch decomposition of moving point clouds and reassembly of outputs.
//!
//! A patch is the set of points within a radius of a center, mapped to
//! `(x - center) / radius`. Velocities are scaled by `1 / radius` as well so
//! that the network sees motion in patch units.
//!
//! Centers are seeded by Poisson-disk sampling over the input points, carried
//! along with the local flow, culled when they crowd each other or drift away
//! from the points, and topped up until every point is covered.

use crate::cloud::{squared_distance, PointCloud};
use crate::error::{Error, Result};
use crate::grid::{poisson_select, UniformGrid};
use crate::network::{self, ModelParams};
use crate::rng::RngStream;

/// Patch geometry: radii in world units and the fixed network sizes.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchLayout {
    pub low_radius: f64,
    pub high_radius: f64,
    pub k_max: usize,
    pub n_max: usize,
    pub r: usize,
}

impl PatchLayout {
    pub fn new(low_radius: f64, high_radius: f64, k_max: usize, r: usize) -> Result<Self> {
        if !(low_radius > 0.0 && high_radius > 0.0) || k_max == 0 || r == 0 {
            return Err(Error::Config(format!(
                "invalid layout low_radius={low_radius} high_radius={high_radius} k_max={k_max} r={r}"
            )));
        }
        Ok(Self {
            low_radius,
            high_radius,
            k_max,
            n_max: k_max * r,
            r,
        })
    }

    /// Desk-scale 2D setup: r = 4 with 24 input slots.
    pub fn desk_2d() -> Self {
        Self::new(3.0, 3.0, 24, 4).unwrap()
    }

    /// Full-scale 2D setup. Diameters of 5 low-res and 15 high-res spacings
    /// (1.5 and 0.5 world units) both give a world radius of 3.75.
    pub fn full_scale_2d() -> Self {
        Self::new(3.75, 3.75, 100, 9).unwrap()
    }

    /// Full-scale 3D setup: 6 low-res spacings of 1.0 and 12 high-res
    /// spacings of 0.5, a world radius of 3 either way.
    pub fn full_scale_3d() -> Self {
        Self::new(3.0, 3.0, 1280, 8).unwrap()
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_max * self.r != self.n_max {
            return Err(Error::Config(format!(
                "n_max {} must equal k_max {} * r {}",
                self.n_max, self.k_max, self.r
            )));
        }
        Self::new(self.low_radius, self.high_radius, self.k_max, self.r).map(|_| ())
    }
}

/// A normalized patch and the indices of its points in the source cloud.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub cloud: PointCloud,
    pub indices: Vec<usize>,
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Patch {
    /// Back to world coordinates.
    pub fn denormalize(&self) -> PointCloud {
        denormalize(&self.cloud, &self.center, self.radius)
    }
}

/// Indices of points within `radius` of `center` (inclusive), ascending.
pub fn points_within(cloud: &PointCloud, center: &[f64], radius: f64) -> Vec<usize> {
    let r2 = radius * radius;
    (0..cloud.len())
        .filter(|&i| squared_distance(cloud.point(i), center) <= r2)
        .collect()
}

/// Maps the selected points into patch coordinates.
pub fn normalize_selection(cloud: &PointCloud, indices: &[usize], center: &[f64], radius: f64) -> PointCloud {
    let mut sub = cloud.select(indices);
    let dim = cloud.dim();
    for p in sub.positions_mut().chunks_exact_mut(dim) {
        for (x, c) in p.iter_mut().zip(center) {
            *x = ((*x - c) / radius).clamp(-1.0, 1.0);
        }
    }
    if let Some(v) = sub.velocity() {
        let scaled: Vec<f64> = v.iter().map(|x| x / radius).collect();
        sub = sub.with_velocity(scaled).expect("same length");
    }
    sub
}

/// Points within `radius` of `center`, in patch coordinates.
pub fn extract_patch(cloud: &PointCloud, center: &[f64], radius: f64) -> Result<Patch> {
    if !(radius > 0.0) {
        return Err(Error::Config(format!("patch radius must be positive, got {radius}")));
    }
    if center.len() != cloud.dim() {
        return Err(Error::SizeMismatch(format!(
            "center has {} coordinates for a {}-d cloud",
            center.len(),
            cloud.dim()
        )));
    }
    let indices = points_within(cloud, center, radius);
    let normalized = normalize_selection(cloud, &indices, center, radius);
    Ok(Patch {
        cloud: normalized,
        indices,
        center: center.to_vec(),
        radius,
    })
}

/// Inverse of the patch normalization.
pub fn denormalize(cloud: &PointCloud, center: &[f64], radius: f64) -> PointCloud {
    let mut out = cloud.clone();
    let dim = cloud.dim();
    for p in out.positions_mut().chunks_exact_mut(dim) {
        for (x, c) in p.iter_mut().zip(center) {
            *x = *x * radius + c;
        }
    }
    if let Some(v) = cloud.velocity() {
        let scaled: Vec<f64> = v.iter().map(|x| x * radius).collect();
        out = out.with_velocity(scaled).expect("same length");
    }
    out
}

/// World-space union of denormalized patch outputs, concatenated in order.
pub fn assemble_output(dim: usize, patch_outputs: &[(PointCloud, Vec<f64>, f64)]) -> Result<PointCloud> {
    let parts: Vec<PointCloud> = patch_outputs
        .iter()
        .map(|(c, center, radius)| denormalize(c, center, *radius).without_features())
        .collect();
    PointCloud::concat(dim, &parts)
}

/// One tracked center; `positions[f - birth_frame]` is its place at frame `f`.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchCenter {
    pub id: usize,
    pub positions: Vec<Vec<f64>>,
    pub birth_frame: usize,
    /// First frame at which the center no longer exists.
    pub death_frame: Option<usize>,
}

impl PatchCenter {
    pub fn alive_at(&self, frame: usize) -> bool {
        frame >= self.birth_frame && self.death_frame.is_none_or(|d| frame < d)
    }

    pub fn position_at(&self, frame: usize) -> Option<&[f64]> {
        if self.alive_at(frame) {
            self.positions.get(frame - self.birth_frame).map(Vec::as_slice)
        } else {
            None
        }
    }
}

/// Tracker thresholds.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackerConfig {
    /// Poisson-disk spacing between seeded centers.
    pub spacing: f64,
    /// Every input point must lie within this distance of a center.
    pub coverage_radius: f64,
    /// Narrow band: maximum distance from a center to its nearest input point.
    pub band_width: f64,
    /// Centers closer than `too_close * spacing` to an older center are deleted.
    pub too_close: f64,
    /// Centers farther than `too_far * band_width` from all points are deleted.
    pub too_far: f64,
    pub insertion_iterations: usize,
    /// Neighbors averaged for center advection.
    pub advect_neighbors: usize,
}

impl TrackerConfig {
    /// Spacing equal to the low-res patch radius, which makes a maximal
    /// Poisson sample cover every point.
    pub fn for_layout(layout: &PatchLayout, band_width: f64) -> Self {
        Self {
            spacing: layout.low_radius,
            coverage_radius: layout.low_radius,
            band_width,
            too_close: 0.5,
            too_far: 1.5,
            insertion_iterations: 3,
            advect_neighbors: 8,
        }
    }
}

/// Follows patch centers through a sequence. Returns every center that
/// ever existed, ordered by id.
pub fn track_centers(
    frames: &[PointCloud],
    layout: &PatchLayout,
    band_width: f64,
    rng: &mut RngStream,
) -> Result<Vec<PatchCenter>> {
    track_centers_with(frames, &TrackerConfig::for_layout(layout, band_width), rng)
}

pub fn track_centers_with(frames: &[PointCloud], cfg: &TrackerConfig, rng: &mut RngStream) -> Result<Vec<PatchCenter>> {
    let mut centers: Vec<PatchCenter> = Vec::new();
    let mut alive: Vec<usize> = Vec::new();
    for (f, frame) in frames.iter().enumerate() {
        if frame.is_empty() {
            return Err(Error::NoPoints(f));
        }
        let dim = frame.dim();
        let grid = UniformGrid::new(dim, frame.positions(), cfg.coverage_radius);

        if f > 0 {
            let prev = &frames[f - 1];
            let prev_grid = UniformGrid::new(dim, prev.positions(), cfg.coverage_radius);
            for &id in &alive {
                let c = &mut centers[id];
                let mut p = c.positions.last().unwrap().clone();
                if let Some(vel) = prev.velocity() {
                    let near = prev_grid.k_nearest(&p, cfg.advect_neighbors);
                    let mut mean = vec![0.0; dim];
                    for &(i, _) in &near {
                        for a in 0..dim {
                            mean[a] += vel[i * dim + a];
                        }
                    }
                    for a in 0..dim {
                        p[a] += mean[a] / near.len() as f64;
                    }
                }
                c.positions.push(p);
            }

            // Older centers win when two come too close.
            let min_gap2 = (cfg.too_close * cfg.spacing).powi(2);
            let max_band = cfg.too_far * cfg.band_width;
            let mut kept: Vec<usize> = Vec::with_capacity(alive.len());
            for &id in &alive {
                let p = centers[id].positions.last().unwrap();
                let (_, d2) = grid.nearest(p).expect("frame is nonempty");
                let crowded = kept
                    .iter()
                    .any(|&o| squared_distance(centers[o].positions.last().unwrap(), p) < min_gap2);
                if d2.sqrt() > max_band || crowded {
                    centers[id].death_frame = Some(f);
                    centers[id].positions.pop();
                } else {
                    kept.push(id);
                }
            }
            alive = kept;
        }

        // Seed (first frame) or top up coverage with new centers.
        let iterations = if f == 0 { 1 } else { cfg.insertion_iterations };
        let cov2 = cfg.coverage_radius * cfg.coverage_radius;
        for _ in 0..iterations {
            let existing: Vec<f64> = alive
                .iter()
                .flat_map(|&id| centers[id].positions.last().unwrap().iter().copied())
                .collect();
            let center_grid = UniformGrid::new(dim, &existing, cfg.coverage_radius);
            let mut uncovered: Vec<usize> = (0..frame.len())
                .filter(|&i| center_grid.nearest(frame.point(i)).is_none_or(|(_, d2)| d2 > cov2))
                .collect();
            if uncovered.is_empty() {
                break;
            }
            rng.shuffle(&mut uncovered);
            for i in poisson_select(dim, frame.positions(), &uncovered, cfg.spacing, &existing) {
                let id = centers.len();
                centers.push(PatchCenter {
                    id,
                    positions: vec![frame.point(i).to_vec()],
                    birth_frame: f,
                    death_frame: None,
                });
                alive.push(id);
            }
        }
    }
    Ok(centers)
}

/// Fraction of points within `radius` of some center position.
pub fn coverage(frame: &PointCloud, centers: &[Vec<f64>], radius: f64) -> f64 {
    if frame.is_empty() {
        return 1.0;
    }
    let r2 = radius * radius;
    let covered = frame
        .points()
        .filter(|p| centers.iter().any(|c| squared_distance(c, p) <= r2))
        .count();
    covered as f64 / frame.len() as f64
}

/// Center positions alive at `frame`.
pub fn centers_at(centers: &[PatchCenter], frame: usize) -> Vec<Vec<f64>> {
    centers
        .iter()
        .filter_map(|c| c.position_at(frame).map(<[f64]>::to_vec))
        .collect()
}

/// Upsamples one world-space frame with the given patch centers.
///
/// Each input point is owned by its nearest center and the `r` outputs of
/// owned points are kept, so the result has exactly `r` points per input
/// point. The network input of a patch holds its owned points first and is
/// filled with the nearest remaining in-radius points as context.
pub fn upsample_frame(
    params: &ModelParams,
    frame: &PointCloud,
    centers: &[Vec<f64>],
    layout: &PatchLayout,
) -> Result<PointCloud> {
    let dim = frame.dim();
    let arch = params.arch();
    if arch.dim != dim || arch.k_max != layout.k_max || arch.r != layout.r {
        return Err(Error::ArchMismatch(format!(
            "model (dim {}, k_max {}, r {}) does not match layout (dim {dim}, k_max {}, r {})",
            arch.dim, arch.k_max, arch.r, layout.k_max, layout.r
        )));
    }
    if frame.is_empty() {
        return PointCloud::empty(dim).map(|c| c.with_frame(frame.frame));
    }
    if centers.is_empty() {
        return Err(Error::NoPoints(0));
    }
    let flat: Vec<f64> = centers.iter().flatten().copied().collect();
    let center_grid = UniformGrid::new(dim, &flat, layout.low_radius);
    let mut owned: Vec<Vec<usize>> = vec![Vec::new(); centers.len()];
    for i in 0..frame.len() {
        let (c, _) = center_grid.nearest(frame.point(i)).unwrap();
        owned[c].push(i);
    }
    let radius = layout.low_radius;
    let r2 = radius * radius;
    let mut outputs = Vec::new();
    for (c, own) in owned.iter().enumerate() {
        let center = &centers[c];
        // Owned points farther than the radius would leave the patch box;
        // they are handled in a patch centered on themselves.
        let (inside, outside): (Vec<usize>, Vec<usize>) =
            own.iter().partition(|&&i| squared_distance(frame.point(i), center) <= r2);
        let mut context: Vec<(f64, usize)> = points_within(frame, center, radius)
            .into_iter()
            .filter(|i| !inside.contains(i))
            .map(|i| (squared_distance(frame.point(i), center), i))
            .collect();
        context.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for chunk in inside.chunks(layout.k_max) {
            let mut ids = chunk.to_vec();
            ids.extend(context.iter().take(layout.k_max - chunk.len()).map(|&(_, i)| i));
            outputs.push(run_patch(params, frame, &ids, chunk.len(), center, radius)?);
        }
        for &i in &outside {
            let own_center = frame.point(i).to_vec();
            let mut near: Vec<(f64, usize)> = points_within(frame, &own_center, radius)
                .into_iter()
                .filter(|&j| j != i)
                .map(|j| (squared_distance(frame.point(j), &own_center), j))
                .collect();
            near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut ids = vec![i];
            ids.extend(near.iter().take(layout.k_max - 1).map(|&(_, j)| j));
            outputs.push(run_patch(params, frame, &ids, 1, &own_center, radius)?);
        }
    }
    Ok(assemble_output(dim, &outputs)?.with_frame(frame.frame))
}

fn run_patch(
    params: &ModelParams,
    frame: &PointCloud,
    ids: &[usize],
    keep: usize,
    center: &[f64],
    radius: f64,
) -> Result<(PointCloud, Vec<f64>, f64)> {
    let mut input = normalize_selection(frame, ids, center, radius);
    if params.arch().use_velocity && input.velocity().is_none() {
        input = input.with_velocity(vec![0.0; ids.len() * frame.dim()])?;
    }
    let padded = crate::cloud::pad(&input, params.arch().k_max)?;
    let out = network::generate(params, &padded)?;
    Ok((out.prefix(keep * params.arch().r), center.to_vec(), radius))
}
