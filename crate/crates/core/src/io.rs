//! Binary file formats, all little-endian.
//!
//! * Point sequences (`TQC1`): `dim, frames, flags` as `u32`, then per frame a
//!   `u32` count, `count * dim` `f32` positions and the optional feature
//!   blocks in flag order (velocity, then pressure). Frame numbers are
//!   restored as the frame's index.
//! * Datasets (`TQD1`): `dim, r, k_max, n_max, triplets`, input flags and
//!   target flags as `u32`,
//!   then per triplet the center (`f32 * dim`), radius (`f32`) and three
//!   `(input, target)` pairs, each cloud stored as `i64` frame, `u32` count,
//!   positions and features.
//! * Checkpoints (`TQM1`): version, architecture, flat `f64` parameters and
//!   an optional optimizer state for resuming.
//!
//! Clouds live on disk as `f32` and in memory as `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::cloud::{pad, PatchTriplet, PointCloud};
use crate::error::{Error, Result};
use crate::network::{ArchSpec, LevelSpec, ModelParams};
use crate::trainer::{Adam, TrainState};

pub const SEQUENCE_MAGIC: &[u8; 4] = b"TQC1";
pub const DATASET_MAGIC: &[u8; 4] = b"TQD1";
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"TQM1";
pub const CHECKPOINT_VERSION: u32 = 1;

const FLAG_VELOCITY: u32 = 1;
const FLAG_PRESSURE: u32 = 2;

fn put_u32(w: &mut impl Write, v: u32) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn put_u64(w: &mut impl Write, v: u64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn put_f64(w: &mut impl Write, v: f64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn put_f32s(w: &mut impl Write, vs: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(vs.len() * 4);
    for v in vs {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    Ok(w.write_all(&buf)?)
}

fn take<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

fn get_u32(r: &mut impl Read) -> Result<u32> {
    Ok(u32::from_le_bytes(take(r)?))
}

fn get_u64(r: &mut impl Read) -> Result<u64> {
    Ok(u64::from_le_bytes(take(r)?))
}

fn get_f64(r: &mut impl Read) -> Result<f64> {
    Ok(f64::from_le_bytes(take(r)?))
}

/// Reads exactly `n` bytes without trusting `n` for the allocation, so a
/// corrupt count ends in a format error rather than a huge allocation.
fn get_bytes(r: &mut impl Read, n: usize) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    r.take(n as u64).read_to_end(&mut buf)?;
    if buf.len() != n {
        return Err(Error::Format(format!("file truncated: wanted {n} bytes, got {}", buf.len())));
    }
    Ok(buf)
}

fn get_f32s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let buf = get_bytes(r, n * 4)?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

fn get_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let buf = get_bytes(r, n * 8)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

fn expect_magic(r: &mut impl Read, magic: &[u8; 4]) -> Result<()> {
    let got: [u8; 4] = take(r)?;
    if &got != magic {
        return Err(Error::Format(format!(
            "expected magic {:?}, found {:?}",
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(&got)
        )));
    }
    Ok(())
}

fn flags_of(c: &PointCloud) -> u32 {
    (if c.velocity().is_some() { FLAG_VELOCITY } else { 0 })
        | (if c.pressure().is_some() { FLAG_PRESSURE } else { 0 })
}

fn check_dim(dim: u32) -> Result<usize> {
    match dim {
        2 | 3 => Ok(dim as usize),
        d => Err(Error::Format(format!("unsupported dimension {d}"))),
    }
}

/// Writes the cloud body: count, positions, features.
fn put_cloud(w: &mut impl Write, c: &PointCloud, flags: u32) -> Result<()> {
    if flags_of(c) != flags {
        return Err(Error::Format("all clouds in a file must carry the same features".into()));
    }
    put_u32(w, c.len() as u32)?;
    put_f32s(w, c.positions())?;
    if let Some(v) = c.velocity() {
        put_f32s(w, v)?;
    }
    if let Some(p) = c.pressure() {
        put_f32s(w, p)?;
    }
    Ok(())
}

fn get_cloud(r: &mut impl Read, dim: usize, flags: u32) -> Result<PointCloud> {
    let n = get_u32(r)? as usize;
    let mut c = PointCloud::new(dim, get_f32s(r, n * dim)?)?;
    if flags & FLAG_VELOCITY != 0 {
        c = c.with_velocity(get_f32s(r, n * dim)?)?;
    }
    if flags & FLAG_PRESSURE != 0 {
        c = c.with_pressure(get_f32s(r, n)?)?;
    }
    Ok(c)
}

pub fn write_sequence(w: &mut impl Write, dim: usize, frames: &[PointCloud]) -> Result<()> {
    let flags = frames.first().map_or(0, flags_of);
    if frames.iter().any(|f| f.dim() != dim) {
        return Err(Error::Format("frames differ in dimension".into()));
    }
    w.write_all(SEQUENCE_MAGIC)?;
    put_u32(w, dim as u32)?;
    put_u32(w, frames.len() as u32)?;
    put_u32(w, flags)?;
    for f in frames {
        put_cloud(w, f, flags)?;
    }
    Ok(())
}

pub fn read_sequence(r: &mut impl Read) -> Result<(usize, Vec<PointCloud>)> {
    expect_magic(r, SEQUENCE_MAGIC)?;
    let dim = check_dim(get_u32(r)?)?;
    let frames = get_u32(r)? as usize;
    let flags = get_u32(r)?;
    let out = (0..frames)
        .map(|i| Ok(get_cloud(r, dim, flags)?.with_frame(i as i64)))
        .collect::<Result<_>>()?;
    Ok((dim, out))
}

/// Dataset header fields.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DatasetHeader {
    pub dim: usize,
    pub r: usize,
    pub k_max: usize,
    pub n_max: usize,
}

pub fn write_dataset(w: &mut impl Write, header: DatasetHeader, triplets: &[PatchTriplet]) -> Result<()> {
    let flags = triplets.first().map_or(0, |t| flags_of(&t.inputs()[0].unpad()));
    let target_flags = triplets.first().map_or(0, |t| flags_of(&t.targets()[0]));
    w.write_all(DATASET_MAGIC)?;
    for v in [header.dim, header.r, header.k_max, header.n_max, triplets.len()] {
        put_u32(w, v as u32)?;
    }
    put_u32(w, flags)?;
    put_u32(w, target_flags)?;
    for t in triplets {
        if t.dim() != header.dim || t.k_max() != header.k_max || t.upsample_factor() != header.r {
            return Err(Error::ShapeMismatch("triplet does not match dataset header".into()));
        }
        put_f32s(w, &t.center)?;
        put_f32s(w, &[t.radius])?;
        for (input, target) in t.inputs().iter().zip(t.targets()) {
            let real = input.unpad();
            w.write_all(&real.frame.to_le_bytes())?;
            put_cloud(w, &real, flags)?;
            w.write_all(&target.frame.to_le_bytes())?;
            put_cloud(w, target, target_flags)?;
        }
    }
    Ok(())
}

pub fn read_dataset(r: &mut impl Read) -> Result<(DatasetHeader, Vec<PatchTriplet>)> {
    expect_magic(r, DATASET_MAGIC)?;
    let dim = check_dim(get_u32(r)?)?;
    let rr = get_u32(r)? as usize;
    let k_max = get_u32(r)? as usize;
    let n_max = get_u32(r)? as usize;
    let count = get_u32(r)? as usize;
    let flags = get_u32(r)?;
    let target_flags = get_u32(r)?;
    let header = DatasetHeader { dim, r: rr, k_max, n_max };
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let center = get_f32s(r, dim)?;
        let radius = get_f32s(r, 1)?[0];
        let mut inputs = Vec::with_capacity(3);
        let mut targets = Vec::with_capacity(3);
        for _ in 0..3 {
            let frame = i64::from_le_bytes(take(r)?);
            inputs.push(pad(&get_cloud(r, dim, flags)?.with_frame(frame), k_max)?);
            let frame = i64::from_le_bytes(take(r)?);
            targets.push(get_cloud(r, dim, target_flags)?.with_frame(frame));
        }
        let inputs: [_; 3] = inputs.try_into().expect("three frames");
        let targets: [_; 3] = targets.try_into().expect("three frames");
        out.push(PatchTriplet::new(inputs, targets, rr, center, radius)?);
    }
    Ok((header, out))
}

fn put_widths(w: &mut impl Write, ws: &[usize]) -> Result<()> {
    put_u32(w, ws.len() as u32)?;
    ws.iter().try_for_each(|&x| put_u32(w, x as u32))
}

fn get_widths(r: &mut impl Read) -> Result<Vec<usize>> {
    let n = get_u32(r)? as usize;
    (0..n).map(|_| Ok(get_u32(r)? as usize)).collect()
}

fn put_arch(w: &mut impl Write, a: &ArchSpec) -> Result<()> {
    put_u32(w, a.dim as u32)?;
    put_u32(w, a.k_max as u32)?;
    put_u32(w, a.r as u32)?;
    put_f64(w, a.width_mult)?;
    put_u32(w, u32::from(a.use_velocity) | (u32::from(a.use_pressure) << 1))?;
    put_u32(w, a.neighbor_cap as u32)?;
    put_u32(w, a.levels.len() as u32)?;
    for l in &a.levels {
        put_u32(w, l.n_groups as u32)?;
        put_f64(w, l.group_radius)?;
        put_widths(w, &l.mlp_widths)?;
    }
    put_u32(w, a.reduce_width as u32)?;
    put_widths(w, &a.branch_widths)?;
    put_widths(w, &a.head_widths)
}

fn get_arch(r: &mut impl Read) -> Result<ArchSpec> {
    let dim = get_u32(r)? as usize;
    let k_max = get_u32(r)? as usize;
    let rr = get_u32(r)? as usize;
    let width_mult = get_f64(r)?;
    let flags = get_u32(r)?;
    let neighbor_cap = get_u32(r)? as usize;
    let n_levels = get_u32(r)? as usize;
    let levels = (0..n_levels)
        .map(|_| {
            Ok(LevelSpec {
                n_groups: get_u32(r)? as usize,
                group_radius: get_f64(r)?,
                mlp_widths: get_widths(r)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ArchSpec {
        dim,
        k_max,
        r: rr,
        width_mult,
        use_velocity: flags & 1 != 0,
        use_pressure: flags & 2 != 0,
        neighbor_cap,
        levels,
        reduce_width: get_u32(r)? as usize,
        branch_widths: get_widths(r)?,
        head_widths: get_widths(r)?,
    })
}

/// Parameters plus optional optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub adam: Option<Adam>,
    pub step: usize,
    pub epoch: usize,
}

impl Checkpoint {
    pub fn from_state(state: &TrainState) -> Self {
        Self {
            params: state.params.clone(),
            adam: Some(state.adam.clone()),
            step: state.step,
            epoch: state.epoch,
        }
    }

    /// Training state to resume from; a fresh optimizer if none was saved.
    pub fn into_state(self) -> TrainState {
        let n = self.params.n_params();
        TrainState {
            params: self.params,
            adam: self.adam.unwrap_or_else(|| Adam::new(n)),
            step: self.step,
            epoch: self.epoch,
        }
    }
}

pub fn write_checkpoint(w: &mut impl Write, ck: &Checkpoint) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    put_u32(w, CHECKPOINT_VERSION)?;
    put_arch(w, ck.params.arch())?;
    let flat = ck.params.to_flat();
    put_u64(w, flat.len() as u64)?;
    flat.iter().try_for_each(|&v| put_f64(w, v))?;
    match &ck.adam {
        None => put_u32(w, 0)?,
        Some(a) => {
            put_u32(w, 1)?;
            put_u64(w, ck.step as u64)?;
            put_u64(w, ck.epoch as u64)?;
            put_u64(w, a.t)?;
            for v in [a.beta1, a.beta2, a.eps] {
                put_f64(w, v)?;
            }
            a.m.iter().chain(&a.v).try_for_each(|&v| put_f64(w, v))?;
        }
    }
    Ok(())
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<Checkpoint> {
    let magic: [u8; 4] = take(r)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::ArchMismatch("not a checkpoint file".into()));
    }
    let version = get_u32(r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::ArchMismatch(format!("unsupported checkpoint version {version}")));
    }
    let arch = get_arch(r)?;
    let n = get_u64(r)? as usize;
    let flat = get_f64s(r, n)?;
    let params = ModelParams::from_flat(arch, &flat)?;
    let (adam, step, epoch) = match get_u32(r)? {
        0 => (None, 0, 0),
        _ => {
            let step = get_u64(r)? as usize;
            let epoch = get_u64(r)? as usize;
            let t = get_u64(r)?;
            let (beta1, beta2, eps) = (get_f64(r)?, get_f64(r)?, get_f64(r)?);
            let m = get_f64s(r, n)?;
            let v = get_f64s(r, n)?;
            (Some(Adam { beta1, beta2, eps, m, v, t }), step, epoch)
        }
    };
    Ok(Checkpoint { params, adam, step, epoch })
}

/// Fails unless the checkpoint was built for `expected`.
pub fn check_arch(params: &ModelParams, expected: &ArchSpec) -> Result<()> {
    if params.arch() != expected {
        return Err(Error::ArchMismatch(format!(
            "checkpoint has dim {} k_max {} r {} width {}, expected dim {} k_max {} r {} width {}",
            params.arch().dim,
            params.arch().k_max,
            params.arch().r,
            params.arch().width_mult,
            expected.dim,
            expected.k_max,
            expected.r,
            expected.width_mult
        )));
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

pub fn save_sequence(path: &Path, dim: usize, frames: &[PointCloud]) -> Result<()> {
    let mut w = create(path)?;
    write_sequence(&mut w, dim, frames)?;
    Ok(w.flush()?)
}

pub fn load_sequence(path: &Path) -> Result<(usize, Vec<PointCloud>)> {
    read_sequence(&mut open(path)?)
}

pub fn save_dataset(path: &Path, header: DatasetHeader, triplets: &[PatchTriplet]) -> Result<()> {
    let mut w = create(path)?;
    write_dataset(&mut w, header, triplets)?;
    Ok(w.flush()?)
}

pub fn load_dataset(path: &Path) -> Result<(DatasetHeader, Vec<PatchTriplet>)> {
    read_dataset(&mut open(path)?)
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let mut w = create(path)?;
    write_checkpoint(&mut w, ck)?;
    Ok(w.flush()?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    read_checkpoint(&mut open(path)?)
}

/// ASCII PLY with positions only, 2D points lifted to z = 0.
pub fn write_ply(w: &mut impl Write, cloud: &PointCloud) -> Result<()> {
    writeln!(w, "ply\nformat ascii 1.0\nelement vertex {}", cloud.len())?;
    writeln!(w, "property float x\nproperty float y\nproperty float z\nend_header")?;
    for p in cloud.points() {
        let z = p.get(2).copied().unwrap_or(0.0);
        writeln!(w, "{} {} {}", p[0] as f32, p[1] as f32, z as f32)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn f32_cloud(rng: &mut RngStream, n: usize, dim: usize, lo: f64, hi: f64) -> PointCloud {
        let q = |x: f64| x as f32 as f64;
        let pos = (0..n * dim).map(|_| q(rng.range(lo, hi))).collect();
        let vel = (0..n * dim).map(|_| q(rng.range(-1.0, 1.0))).collect();
        PointCloud::new(dim, pos).unwrap().with_velocity(vel).unwrap()
    }

    #[test]
    fn sequence_round_trip() {
        let mut rng = RngStream::new(1, 0);
        let frames: Vec<PointCloud> = (0..4)
            .map(|i| f32_cloud(&mut rng, 3 * i, 3, -5.0, 5.0).with_frame(i as i64))
            .collect();
        let mut buf = Vec::new();
        write_sequence(&mut buf, 3, &frames).unwrap();
        assert_eq!(&buf[..4], b"TQC1");
        let (dim, back) = read_sequence(&mut buf.as_slice()).unwrap();
        assert_eq!(dim, 3);
        assert_eq!(back, frames);
    }

    #[test]
    fn dataset_round_trip() {
        let mut rng = RngStream::new(2, 0);
        let triplets: Vec<PatchTriplet> = (0..5)
            .map(|i| {
                let inputs = [0, 1, 2].map(|f| pad(&f32_cloud(&mut rng, i + 1, 2, -1.0, 1.0).with_frame(f), 8).unwrap());
                let targets = [0, 1, 2].map(|f| f32_cloud(&mut rng, 2 * i + 3, 2, -1.0, 1.0).without_features().with_frame(f));
                PatchTriplet::new(inputs, targets, 2, vec![0.5, -0.25], 3.0).unwrap()
            })
            .collect();
        let header = DatasetHeader { dim: 2, r: 2, k_max: 8, n_max: 16 };
        let mut buf = Vec::new();
        write_dataset(&mut buf, header, &triplets).unwrap();
        let (h, back) = read_dataset(&mut buf.as_slice()).unwrap();
        assert_eq!(h, header);
        assert_eq!(back, triplets);
    }

    #[test]
    fn checkpoint_round_trip_with_state() {
        let arch = ArchSpec::new(2, 8, 2, 0.125).unwrap();
        let params = ModelParams::init(arch, &mut RngStream::new(3, 0));
        let n = params.n_params();
        let mut adam = Adam::new(n);
        adam.step(&mut params.to_flat(), &vec![0.1; n], 0.01);
        let ck = Checkpoint { params, adam: Some(adam), step: 17, epoch: 2 };
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &ck).unwrap();
        assert_eq!(read_checkpoint(&mut buf.as_slice()).unwrap(), ck);
    }

    #[test]
    fn corrupt_count_is_a_format_error() {
        let mut buf = Vec::new();
        write_sequence(&mut buf, 2, &[PointCloud::new(2, vec![0.0, 1.0]).unwrap()]).unwrap();
        buf[16..20].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(read_sequence(&mut buf.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn wrong_magic_is_rejected() {
        assert!(matches!(read_checkpoint(&mut &b"TQC1...."[..]), Err(Error::ArchMismatch(_))));
        assert!(matches!(read_sequence(&mut &b"TQM1...."[..]), Err(Error::Format(_))));
    }

    #[test]
    fn arch_check_flags_mismatch() {
        let a = ArchSpec::new(2, 8, 2, 0.125).unwrap();
        let b = ArchSpec::new(2, 8, 3, 0.125).unwrap();
        let p = ModelParams::zeros(a.clone());
        assert!(check_arch(&p, &a).is_ok());
        assert!(matches!(check_arch(&p, &b), Err(Error::ArchMismatch(_))));
    }
}
