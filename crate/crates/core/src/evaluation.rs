//! Temporal stability instruments: the latent-space frequency score and
//! nearest-neighbor density/derivative tracking against a reference.

use crate::cloud::{squared_distance, PaddedCloud, PointCloud};
use crate::datagen::PatchSequence;
use crate::error::{Error, Result};
use crate::grid::{brute_force_nearest, UniformGrid};
use crate::network::{forward, latent, ModelParams};
use crate::rng::RngStream;

/// Minimum series length for a meaningful spectrum.
pub const MIN_FRAMES: usize = 8;

/// Amplitude spectrum and its frequency-weighted integral.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyResult {
    /// `(frequency index, mean amplitude)` for indices `0..=T/2`.
    pub spectrum: Vec<(f64, f64)>,
    pub score: f64,
}

impl FrequencyResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frequency,amplitude\n");
        for (f, a) in &self.spectrum {
            out.push_str(&format!("{f},{a:.9e}\n"));
        }
        out
    }
}

/// Mean latent vector of each frame of a patch sequence.
pub fn mean_latent_series(params: &ModelParams, inputs: &[PaddedCloud]) -> Result<Vec<Vec<f64>>> {
    inputs
        .iter()
        .map(|input| {
            let (_, trace) = forward(params, input)?;
            let rows = latent(&trace);
            let width = trace.latent_width();
            let mut mean = vec![0.0; width];
            for row in &rows {
                for (m, v) in mean.iter_mut().zip(row) {
                    *m += v;
                }
            }
            let n = rows.len().max(1) as f64;
            mean.iter_mut().for_each(|m| *m /= n);
            Ok(mean)
        })
        .collect()
}

/// Latent series of every sequence, optionally with frames in random order.
pub fn latent_series(
    params: &ModelParams,
    sequences: &[PatchSequence],
    shuffle: Option<&mut RngStream>,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let mut rng = shuffle;
    sequences
        .iter()
        .map(|s| {
            let mut inputs = s.inputs.clone();
            if let Some(r) = rng.as_deref_mut() {
                r.shuffle(&mut inputs);
            }
            mean_latent_series(params, &inputs)
        })
        .collect()
}

/// Frequency score of latent series `series[sequence][time][component]`.
///
/// Components are averaged over sequences, the temporal mean of each
/// component is removed and the result is scaled by its largest magnitude.
/// The DFT amplitude over time, averaged over components, gives the
/// spectrum `f(x)` at integer frequencies; the score is the trapezoidal
/// integral of `x * f(x)`. A vanishing signal scores 0.
pub fn latent_frequency_score(series: &[Vec<Vec<f64>>]) -> Result<FrequencyResult> {
    let t_len = series.first().map_or(0, Vec::len);
    if t_len < MIN_FRAMES {
        return Err(Error::TooFewFrames {
            needed: MIN_FRAMES,
            got: t_len,
        });
    }
    if series.iter().any(|s| s.len() != t_len) {
        return Err(Error::ShapeMismatch("latent series differ in length".into()));
    }
    let width = series[0][0].len();
    if series.iter().flatten().any(|v| v.len() != width) {
        return Err(Error::ShapeMismatch("latent vectors differ in width".into()));
    }
    let mut avg = vec![vec![0.0; width]; t_len];
    for s in series {
        for (row, v) in avg.iter_mut().zip(s) {
            for (a, x) in row.iter_mut().zip(v) {
                *a += x / series.len() as f64;
            }
        }
    }
    let scale = avg.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
    for c in 0..width {
        let mean = avg.iter().map(|r| r[c]).sum::<f64>() / t_len as f64;
        avg.iter_mut().for_each(|r| r[c] -= mean);
    }
    let peak = avg.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
    let n_freq = t_len / 2 + 1;
    if peak <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Ok(FrequencyResult {
            spectrum: (0..n_freq).map(|k| (k as f64, 0.0)).collect(),
            score: 0.0,
        });
    }
    let mut amp = vec![0.0; n_freq];
    for c in 0..width {
        let signal: Vec<f64> = avg.iter().map(|r| r[c] / peak).collect();
        for (k, a) in amp.iter_mut().enumerate() {
            *a += dft_magnitude(&signal, k) / width as f64;
        }
    }
    let spectrum: Vec<(f64, f64)> = amp.iter().enumerate().map(|(k, &a)| (k as f64, a)).collect();
    let score = spectrum
        .windows(2)
        .map(|w| 0.5 * (w[0].0 * w[0].1 + w[1].0 * w[1].1) * (w[1].0 - w[0].0))
        .sum();
    Ok(FrequencyResult { spectrum, score })
}

/// Magnitude of the `k`-th DFT coefficient (direct sum).
pub fn dft_magnitude(signal: &[f64], k: usize) -> f64 {
    let n = signal.len() as f64;
    let (mut re, mut im) = (0.0, 0.0);
    for (t, x) in signal.iter().enumerate() {
        let phase = -2.0 * std::f64::consts::PI * (k * t) as f64 / n;
        re += x * phase.cos();
        im += x * phase.sin();
    }
    (re * re + im * im).sqrt()
}

/// Generated points grouped by their nearest reference point in one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackFrame {
    /// Number of generated points mapped to each reference point.
    pub density: Vec<usize>,
    /// Mean of those points, `None` when nothing maps there.
    pub mean: Vec<Option<Vec<f64>>>,
}

fn track_frame(gen: &PointCloud, reference: &PointCloud, nearest: impl Fn(&[f64]) -> usize) -> TrackFrame {
    let dim = reference.dim();
    let mut density = vec![0usize; reference.len()];
    let mut sums = vec![0.0; reference.len() * dim];
    for p in gen.points() {
        let j = nearest(p);
        density[j] += 1;
        for a in 0..dim {
            sums[j * dim + a] += p[a];
        }
    }
    let mean = density
        .iter()
        .enumerate()
        .map(|(j, &d)| (d > 0).then(|| sums[j * dim..(j + 1) * dim].iter().map(|s| s / d as f64).collect()))
        .collect();
    TrackFrame { density, mean }
}

fn check_frames(gen_frames: &[PointCloud], ref_frames: &[PointCloud]) -> Result<()> {
    if ref_frames.iter().any(PointCloud::is_empty) || ref_frames.is_empty() {
        return Err(Error::EmptyReference);
    }
    if gen_frames.len() != ref_frames.len() {
        return Err(Error::SizeMismatch(format!(
            "{} generated frames for {} reference frames",
            gen_frames.len(),
            ref_frames.len()
        )));
    }
    Ok(())
}

/// Nearest-reference mapping per frame using a grid.
pub fn nn_track(gen_frames: &[PointCloud], ref_frames: &[PointCloud]) -> Result<Vec<TrackFrame>> {
    check_frames(gen_frames, ref_frames)?;
    Ok(gen_frames
        .iter()
        .zip(ref_frames)
        .map(|(g, r)| {
            let cell = typical_spacing(r);
            let grid = UniformGrid::new(r.dim(), r.positions(), cell);
            track_frame(g, r, |p| grid.nearest(p).expect("reference is nonempty").0)
        })
        .collect())
}

/// Same mapping by linear scan.
pub fn nn_track_brute(gen_frames: &[PointCloud], ref_frames: &[PointCloud]) -> Result<Vec<TrackFrame>> {
    check_frames(gen_frames, ref_frames)?;
    Ok(gen_frames
        .iter()
        .zip(ref_frames)
        .map(|(g, r)| {
            track_frame(g, r, |p| {
                brute_force_nearest(r.dim(), r.positions(), p)
                    .expect("reference is nonempty")
                    .0
            })
        })
        .collect())
}

fn typical_spacing(c: &PointCloud) -> f64 {
    let dim = c.dim();
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in c.points() {
        for a in 0..dim {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let vol: f64 = (0..dim).map(|a| (hi[a] - lo[a]).max(1e-6)).product();
    (vol / c.len() as f64).powf(1.0 / dim as f64).max(1e-6)
}

/// Temporal errors of tracked means and variances of density changes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DerivativeErrors {
    /// Mean norm of (tracked mean change - reference change).
    pub velocity_error: f64,
    /// Mean norm of the second-difference mismatch.
    pub acceleration_error: f64,
    pub density_d1_variance: f64,
    pub density_d2_variance: f64,
    /// Reference points skipped because a needed mean was undefined.
    pub undefined: usize,
}

impl DerivativeErrors {
    pub const CSV_HEADER: &'static str = "label,velocity_error,acceleration_error,density_d1_variance,density_d2_variance,undefined";

    pub fn csv_row(&self, label: &str) -> String {
        format!(
            "{label},{:.9e},{:.9e},{:.9e},{:.9e},{}",
            self.velocity_error, self.acceleration_error, self.density_d1_variance, self.density_d2_variance, self.undefined
        )
    }
}

fn variance(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64
}

/// Compares tracked means with the index-corresponded reference motion.
pub fn derivative_errors(track: &[TrackFrame], ref_frames: &[PointCloud]) -> Result<DerivativeErrors> {
    if track.len() < 3 || ref_frames.len() != track.len() {
        return Err(Error::TooFewFrames {
            needed: 3,
            got: track.len().min(ref_frames.len()),
        });
    }
    let n = ref_frames[0].len();
    if ref_frames.iter().any(|r| r.len() != n) || track.iter().any(|t| t.density.len() != n) {
        return Err(Error::SizeMismatch("reference frames must be index-corresponded".into()));
    }
    let dim = ref_frames[0].dim();
    let mut out = DerivativeErrors::default();
    let (mut v_sum, mut v_cnt, mut a_sum, mut a_cnt) = (0.0, 0usize, 0.0, 0usize);
    let mut d1 = Vec::new();
    let mut d2 = Vec::new();
    for t in 1..track.len() {
        for i in 0..n {
            d1.push(track[t].density[i] as f64 - track[t - 1].density[i] as f64);
            match (&track[t - 1].mean[i], &track[t].mean[i]) {
                (Some(m0), Some(m1)) => {
                    let (y0, y1) = (ref_frames[t - 1].point(i), ref_frames[t].point(i));
                    let e: f64 = (0..dim).map(|a| ((m1[a] - m0[a]) - (y1[a] - y0[a])).powi(2)).sum();
                    v_sum += e.sqrt();
                    v_cnt += 1;
                }
                _ => out.undefined += 1,
            }
        }
    }
    for t in 1..track.len() - 1 {
        for i in 0..n {
            d2.push(track[t + 1].density[i] as f64 - 2.0 * track[t].density[i] as f64 + track[t - 1].density[i] as f64);
            if let (Some(m0), Some(m1), Some(m2)) = (&track[t - 1].mean[i], &track[t].mean[i], &track[t + 1].mean[i]) {
                let (y0, y1, y2) = (ref_frames[t - 1].point(i), ref_frames[t].point(i), ref_frames[t + 1].point(i));
                let e: f64 = (0..dim)
                    .map(|a| ((m2[a] - 2.0 * m1[a] + m0[a]) - (y2[a] - 2.0 * y1[a] + y0[a])).powi(2))
                    .sum();
                a_sum += e.sqrt();
                a_cnt += 1;
            }
        }
    }
    out.velocity_error = v_sum / v_cnt.max(1) as f64;
    out.acceleration_error = a_sum / a_cnt.max(1) as f64;
    out.density_d1_variance = variance(&d1);
    out.density_d2_variance = variance(&d2);
    Ok(out)
}

/// Per-frame summary table: frame, generated count, mean density, empty refs.
pub fn track_csv(track: &[TrackFrame]) -> String {
    let mut out = String::from("frame,generated,mean_density,empty_references\n");
    for (f, t) in track.iter().enumerate() {
        let total: usize = t.density.iter().sum();
        let empty = t.mean.iter().filter(|m| m.is_none()).count();
        out.push_str(&format!(
            "{f},{total},{:.9e},{empty}\n",
            total as f64 / t.density.len().max(1) as f64
        ));
    }
    out
}

/// Mean distance from each generated point to its nearest reference point.
pub fn mean_nearest_distance(gen: &PointCloud, reference: &PointCloud) -> f64 {
    if gen.is_empty() || reference.is_empty() {
        return 0.0;
    }
    gen.points()
        .map(|p| {
            reference
                .points()
                .map(|q| squared_distance(p, q))
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .sum::<f64>()
        / gen.len() as f64
}
