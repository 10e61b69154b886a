//! Point clouds, fixed-size padding and prefix masks.
//!
//! Positions are stored flat (`len * dim` values). Optional feature channels
//! carry per-point velocity (`dim` values) and pressure (one value).
//! Fixed-capacity inputs are padded with [`PAD_VALUE`], which lies outside the
//! normalized patch range `[-1, 1]`, so a mask can be recovered from the
//! coordinates alone.

use crate::error::{Error, Result};

/// Sentinel written into every channel of an unused slot.
pub const PAD_VALUE: f64 = -2.0;

#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    dim: usize,
    positions: Vec<f64>,
    velocity: Option<Vec<f64>>,
    pressure: Option<Vec<f64>>,
    pub frame: i64,
}

impl PointCloud {
    pub fn new(dim: usize, positions: Vec<f64>) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidDimension(dim));
        }
        if positions.len() % dim != 0 {
            return Err(Error::SizeMismatch(format!(
                "{} coordinates is not a multiple of dim {dim}",
                positions.len()
            )));
        }
        Ok(Self {
            dim,
            positions,
            velocity: None,
            pressure: None,
            frame: 0,
        })
    }

    pub fn empty(dim: usize) -> Result<Self> {
        Self::new(dim, Vec::new())
    }

    /// Builds a cloud from a list of points; every row must have `dim` entries.
    pub fn from_points<P: AsRef<[f64]>>(dim: usize, points: &[P]) -> Result<Self> {
        let mut flat = Vec::with_capacity(points.len() * dim);
        for p in points {
            let p = p.as_ref();
            if p.len() != dim {
                return Err(Error::SizeMismatch(format!(
                    "point has {} coordinates, expected {dim}",
                    p.len()
                )));
            }
            flat.extend_from_slice(p);
        }
        Self::new(dim, flat)
    }

    pub fn with_velocity(mut self, velocity: Vec<f64>) -> Result<Self> {
        if velocity.len() != self.positions.len() {
            return Err(Error::SizeMismatch(format!(
                "velocity channel has {} values, positions have {}",
                velocity.len(),
                self.positions.len()
            )));
        }
        self.velocity = Some(velocity);
        Ok(self)
    }

    pub fn with_pressure(mut self, pressure: Vec<f64>) -> Result<Self> {
        if pressure.len() != self.len() {
            return Err(Error::SizeMismatch(format!(
                "pressure channel has {} values for {} points",
                pressure.len(),
                self.len()
            )));
        }
        self.pressure = Some(pressure);
        Ok(self)
    }

    pub fn with_frame(mut self, frame: i64) -> Self {
        self.frame = frame;
        self
    }

    pub fn without_features(mut self) -> Self {
        self.velocity = None;
        self.pressure = None;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn positions_mut(&mut self) -> &mut [f64] {
        &mut self.positions
    }

    pub fn velocity(&self) -> Option<&[f64]> {
        self.velocity.as_deref()
    }

    pub fn velocity_at(&self, i: usize) -> Option<&[f64]> {
        self.velocity
            .as_ref()
            .map(|v| &v[i * self.dim..(i + 1) * self.dim])
    }

    pub fn pressure(&self) -> Option<&[f64]> {
        self.pressure.as_deref()
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.positions.chunks_exact(self.dim)
    }

    /// Subset in the given index order, features included.
    pub fn select(&self, indices: &[usize]) -> Self {
        let d = self.dim;
        let mut positions = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            positions.extend_from_slice(self.point(i));
        }
        let velocity = self.velocity.as_ref().map(|v| {
            let mut out = Vec::with_capacity(indices.len() * d);
            for &i in indices {
                out.extend_from_slice(&v[i * d..(i + 1) * d]);
            }
            out
        });
        let pressure = self
            .pressure
            .as_ref()
            .map(|p| indices.iter().map(|&i| p[i]).collect());
        Self {
            dim: d,
            positions,
            velocity,
            pressure,
            frame: self.frame,
        }
    }

    /// First `n` points.
    pub fn prefix(&self, n: usize) -> Self {
        let d = self.dim;
        Self {
            dim: d,
            positions: self.positions[..n * d].to_vec(),
            velocity: self.velocity.as_ref().map(|v| v[..n * d].to_vec()),
            pressure: self.pressure.as_ref().map(|p| p[..n].to_vec()),
            frame: self.frame,
        }
    }

    /// Concatenates positions; feature channels survive only if every part has them.
    pub fn concat(dim: usize, parts: &[PointCloud]) -> Result<Self> {
        let mut positions = Vec::new();
        let keep_vel = !parts.is_empty() && parts.iter().all(|p| p.velocity.is_some());
        let keep_pre = !parts.is_empty() && parts.iter().all(|p| p.pressure.is_some());
        let mut velocity = Vec::new();
        let mut pressure = Vec::new();
        for p in parts {
            if p.dim != dim {
                return Err(Error::SizeMismatch(format!(
                    "cannot concatenate dim {} into dim {dim}",
                    p.dim
                )));
            }
            positions.extend_from_slice(&p.positions);
            if keep_vel {
                velocity.extend_from_slice(p.velocity.as_deref().unwrap_or_default());
            }
            if keep_pre {
                pressure.extend_from_slice(p.pressure.as_deref().unwrap_or_default());
            }
        }
        let mut out = Self::new(dim, positions)?;
        if keep_vel {
            out.velocity = Some(velocity);
        }
        if keep_pre {
            out.pressure = Some(pressure);
        }
        Ok(out)
    }

    pub fn squared_distance(&self, i: usize, other: &PointCloud, j: usize) -> f64 {
        squared_distance(self.point(i), other.point(j))
    }
}

#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Fixed-capacity cloud whose slots past `count` hold [`PAD_VALUE`].
#[derive(Clone, Debug, PartialEq)]
pub struct PaddedCloud {
    data: PointCloud,
    count: usize,
}

impl PaddedCloud {
    pub fn data(&self) -> &PointCloud {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn capacity(&self) -> usize {
        self.data.len()
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    pub fn pad_value(&self) -> f64 {
        PAD_VALUE
    }

    /// The real points, i.e. everything the mask keeps.
    pub fn unpad(&self) -> PointCloud {
        self.data.prefix(self.count)
    }
}

/// Prefix mask: ones for real entries, zeros for padding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    bits: Vec<bool>,
}

impl Mask {
    pub fn prefix(len: usize, ones: usize) -> Self {
        Self {
            bits: (0..len).map(|i| i < ones).collect(),
        }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn ones(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_prefix(&self) -> bool {
        let ones = self.ones();
        self.bits.iter().take(ones).all(|b| *b)
    }
}

/// Pads `cloud` to `k_max` entries. Feature channels are padded as well.
pub fn pad(cloud: &PointCloud, k_max: usize) -> Result<PaddedCloud> {
    let k = cloud.len();
    if k > k_max {
        return Err(Error::CloudTooLarge { len: k, k_max });
    }
    for (index, p) in cloud.points().enumerate() {
        if let Some(&value) = p.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::CoordinateOutOfRange { index, value });
        }
    }
    let d = cloud.dim();
    let fill = (k_max - k) * d;
    let mut positions = cloud.positions().to_vec();
    positions.resize(positions.len() + fill, PAD_VALUE);
    let mut data = PointCloud::new(d, positions)?.with_frame(cloud.frame);
    if let Some(v) = cloud.velocity() {
        let mut v = v.to_vec();
        v.resize(v.len() + fill, PAD_VALUE);
        data.velocity = Some(v);
    }
    if let Some(p) = cloud.pressure() {
        let mut p = p.to_vec();
        p.resize(k_max, PAD_VALUE);
        data.pressure = Some(p);
    }
    Ok(PaddedCloud { data, count: k })
}

/// Recomputes the input mask from coordinates alone.
pub fn infer_mask(padded: &PaddedCloud) -> Mask {
    Mask {
        bits: padded
            .data
            .points()
            .map(|p| p.iter().all(|v| (-1.0..=1.0).contains(v)))
            .collect(),
    }
}

/// Keeps the first `n_tilde` raw outputs.
pub fn truncate_output(raw: &PointCloud, n_tilde: usize) -> Result<PointCloud> {
    if n_tilde > raw.len() {
        return Err(Error::TruncationTooLong {
            n_tilde,
            n_max: raw.len(),
        });
    }
    Ok(raw.prefix(n_tilde))
}

/// One Siamese training sample: inputs and targets at frames t-1, t, t+1.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchTriplet {
    inputs: [PaddedCloud; 3],
    targets: [PointCloud; 3],
    upsample_factor: usize,
    pub center: Vec<f64>,
    pub radius: f64,
}

impl PatchTriplet {
    pub fn new(
        inputs: [PaddedCloud; 3],
        targets: [PointCloud; 3],
        upsample_factor: usize,
        center: Vec<f64>,
        radius: f64,
    ) -> Result<Self> {
        let k = inputs[0].count();
        if inputs.iter().any(|c| c.count() != k) {
            return Err(Error::ShapeMismatch(
                "inputs must share one count across frames".into(),
            ));
        }
        let cap = inputs[0].capacity();
        if inputs.iter().any(|c| c.capacity() != cap) {
            return Err(Error::ShapeMismatch(
                "inputs must share one capacity".into(),
            ));
        }
        let n = targets[0].len();
        if targets.iter().any(|c| c.len() != n) {
            return Err(Error::ShapeMismatch(
                "targets must be index-corresponded across frames".into(),
            ));
        }
        let d = inputs[0].dim();
        if inputs.iter().any(|c| c.dim() != d)
            || targets.iter().any(|c| c.dim() != d)
            || center.len() != d
        {
            return Err(Error::ShapeMismatch("mixed dimensions".into()));
        }
        if upsample_factor == 0 {
            return Err(Error::ShapeMismatch("upsample factor must be positive".into()));
        }
        Ok(Self {
            inputs,
            targets,
            upsample_factor,
            center,
            radius,
        })
    }

    pub fn inputs(&self) -> &[PaddedCloud; 3] {
        &self.inputs
    }

    pub fn targets(&self) -> &[PointCloud; 3] {
        &self.targets
    }

    pub fn upsample_factor(&self) -> usize {
        self.upsample_factor
    }

    pub fn dim(&self) -> usize {
        self.inputs[0].dim()
    }

    pub fn k(&self) -> usize {
        self.inputs[0].count()
    }

    pub fn n(&self) -> usize {
        self.targets[0].len()
    }

    pub fn k_max(&self) -> usize {
        self.inputs[0].capacity()
    }

    /// Output count r * k.
    pub fn n_tilde(&self) -> usize {
        self.upsample_factor * self.k()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pad_two_points() {
        let c = PointCloud::from_points(2, &[[0.1, 0.2], [-0.3, 0.4]]).unwrap();
        let p = pad(&c, 4).unwrap();
        assert_eq!(p.count(), 2);
        assert_eq!(
            p.data().positions(),
            &[0.1, 0.2, -0.3, 0.4, -2.0, -2.0, -2.0, -2.0]
        );
        assert_eq!(infer_mask(&p).bits(), &[true, true, false, false]);
    }

    #[test]
    fn pad_empty() {
        let c = PointCloud::empty(2).unwrap();
        let p = pad(&c, 3).unwrap();
        assert_eq!(p.count(), 0);
        assert!(p.data().positions().iter().all(|v| *v == -2.0));
        assert_eq!(infer_mask(&p).ones(), 0);
    }

    #[test]
    fn pad_full_capacity_is_unchanged() {
        let pts: Vec<[f64; 2]> = (0..100)
            .map(|i| [i as f64 / 100.0, -(i as f64) / 200.0])
            .collect();
        let c = PointCloud::from_points(2, &pts).unwrap();
        let p = pad(&c, 100).unwrap();
        assert_eq!(p.count(), 100);
        assert_eq!(p.data().positions(), c.positions());
        assert!(infer_mask(&p).bits().iter().all(|b| *b));
    }

    #[test]
    fn pad_errors() {
        let c = PointCloud::from_points(2, &[[0.0, 0.0], [0.5, 0.5]]).unwrap();
        assert!(matches!(pad(&c, 1), Err(Error::CloudTooLarge { len: 2, k_max: 1 })));
        let c = PointCloud::from_points(2, &[[0.0, 1.5]]).unwrap();
        assert!(matches!(
            pad(&c, 4),
            Err(Error::CoordinateOutOfRange { index: 0, .. })
        ));
    }

    #[test]
    fn pad_fills_features() {
        let c = PointCloud::from_points(2, &[[0.0, 0.0]])
            .unwrap()
            .with_velocity(vec![0.5, -0.5])
            .unwrap()
            .with_pressure(vec![0.25])
            .unwrap();
        let p = pad(&c, 3).unwrap();
        assert_eq!(p.data().velocity().unwrap(), &[0.5, -0.5, -2.0, -2.0, -2.0, -2.0]);
        assert_eq!(p.data().pressure().unwrap(), &[0.25, -2.0, -2.0]);
    }

    #[test]
    fn truncation() {
        let raw = PointCloud::new(2, (0..72).map(|i| i as f64).collect()).unwrap();
        assert_eq!(truncate_output(&raw, 27).unwrap().len(), 27);
        assert_eq!(truncate_output(&raw, 27).unwrap().point(26), &[52.0, 53.0]);
        assert!(truncate_output(&raw, 0).unwrap().is_empty());
        assert!(matches!(
            truncate_output(&raw, 37),
            Err(Error::TruncationTooLong { n_tilde: 37, n_max: 36 })
        ));
        let raw = PointCloud::new(2, vec![0.0; 1800]).unwrap();
        assert_eq!(truncate_output(&raw, 9 * 100).unwrap().len(), 900);
    }

    #[test]
    fn triplet_rejects_mismatched_counts() {
        let a = pad(&PointCloud::from_points(2, &[[0.0, 0.0]]).unwrap(), 4).unwrap();
        let b = pad(&PointCloud::empty(2).unwrap(), 4).unwrap();
        let t = PointCloud::from_points(2, &[[0.0, 0.0]]).unwrap();
        let r = PatchTriplet::new(
            [a.clone(), b, a],
            [t.clone(), t.clone(), t],
            4,
            vec![0.0, 0.0],
            1.0,
        );
        assert!(matches!(r, Err(Error::ShapeMismatch(_))));
    }

    fn cloud_strategy(k_max: usize) -> impl Strategy<Value = PointCloud> {
        (2usize..=3, 0..=k_max).prop_flat_map(|(d, k)| {
            proptest::collection::vec(-1.0f64..=1.0, k * d)
                .prop_map(move |v| PointCloud::new(d, v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn pad_then_unpad_round_trips(c in cloud_strategy(16), extra in 0usize..8) {
            let k_max = c.len() + extra;
            let p = pad(&c, k_max).unwrap();
            prop_assert_eq!(p.unpad(), c.clone());
            let m = infer_mask(&p);
            prop_assert_eq!(m.ones(), c.len());
            prop_assert!(m.is_prefix());
            prop_assert_eq!(m, Mask::prefix(k_max, c.len()));
        }
    }
}
