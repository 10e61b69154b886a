//! Plain-text `key = value` run configuration.
//!
//! Keys are the field names of [`TrainConfig`] (loss weights as `gamma`,
//! `mu`, `nu`), of [`PatchLayout`] and of the synthetic corpus
//! ([`CorpusConfig`]). Blank lines and `#` comments are ignored; unknown
//! keys and malformed values are errors.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::losses::SpatialFrames;
use crate::patchpipe::PatchLayout;
use crate::trainer::TrainConfig;

/// Size of the simulated training corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct CorpusConfig {
    /// Particles per simulated scene.
    pub n_points: usize,
    /// Frames per scene.
    pub frames: usize,
    /// Repetitions of each named flow field.
    pub scenes_per_field: usize,
    /// Triplets drawn in total.
    pub triplets: usize,
    /// Trailing triplets kept out of training for evaluation.
    pub held_out: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            n_points: 500,
            frames: 24,
            scenes_per_field: 2,
            triplets: 2400,
            held_out: 400,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub layout: PatchLayout,
    pub corpus: CorpusConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::desk_2d(),
            layout: PatchLayout::desk_2d(),
            corpus: CorpusConfig::default(),
        }
    }
}

impl FromStr for SpatialFrames {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "center_only" => Ok(Self::CenterOnly),
            "all_three" => Ok(Self::AllThree),
            _ => Err(Error::Config(format!("unknown spatial_frames '{s}'"))),
        }
    }
}

fn spatial_name(s: SpatialFrames) -> &'static str {
    match s {
        SpatialFrames::CenterOnly => "center_only",
        SpatialFrames::AllThree => "all_three",
    }
}

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::Config(format!("invalid value '{raw}' for '{key}'")))
}

impl RunConfig {
    /// Parses `text` on top of the desk defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut n_max_given = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, raw) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let (key, raw) = (key.trim(), raw.trim());
            match key {
                "n_max" => n_max_given = Some(value::<usize>(key, raw)?),
                _ => cfg.set(key, raw)?,
            }
        }
        cfg.train.n_max = cfg.train.r * cfg.train.k_max;
        cfg.layout = PatchLayout::new(cfg.layout.low_radius, cfg.layout.high_radius, cfg.train.k_max, cfg.train.r)?;
        if let Some(n) = n_max_given {
            cfg.train.n_max = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "dim" => t.dim = value(key, raw)?,
            "r" => t.r = value(key, raw)?,
            "k_max" => t.k_max = value(key, raw)?,
            "gamma" => t.weights.gamma = value(key, raw)?,
            "mu" => t.weights.mu = value(key, raw)?,
            "nu" => t.weights.nu = value(key, raw)?,
            "learning_rate" => t.learning_rate = value(key, raw)?,
            "decay" => t.decay = value(key, raw)?,
            "epochs" => t.epochs = value(key, raw)?,
            "batch_size" => t.batch_size = value(key, raw)?,
            "seed" => t.seed = value(key, raw)?,
            "loss_variant" => t.loss_variant = raw.parse()?,
            "spatial_frames" => t.spatial_frames = raw.parse()?,
            "width_mult" => t.width_mult = value(key, raw)?,
            "low_radius" => self.layout.low_radius = value(key, raw)?,
            "high_radius" => self.layout.high_radius = value(key, raw)?,
            "n_points" => self.corpus.n_points = value(key, raw)?,
            "frames" => self.corpus.frames = value(key, raw)?,
            "scenes_per_field" => self.corpus.scenes_per_field = value(key, raw)?,
            "triplets" => self.corpus.triplets = value(key, raw)?,
            "held_out" => self.corpus.held_out = value(key, raw)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.layout.validate()?;
        if self.train.dim != 2 && self.train.dim != 3 {
            return Err(Error::Config(format!("dim must be 2 or 3, got {}", self.train.dim)));
        }
        if self.corpus.frames < 3 {
            return Err(Error::InsufficientFrames(self.corpus.frames));
        }
        if self.corpus.held_out >= self.corpus.triplets {
            return Err(Error::Config("held_out must be smaller than triplets".into()));
        }
        Ok(())
    }

    /// Canonical text form; parsing it gives back the same configuration.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("dim", t.dim.to_string());
        kv("r", t.r.to_string());
        kv("k_max", t.k_max.to_string());
        kv("n_max", t.n_max.to_string());
        kv("gamma", t.weights.gamma.to_string());
        kv("mu", t.weights.mu.to_string());
        kv("nu", t.weights.nu.to_string());
        kv("learning_rate", t.learning_rate.to_string());
        kv("decay", t.decay.to_string());
        kv("epochs", t.epochs.to_string());
        kv("batch_size", t.batch_size.to_string());
        kv("seed", t.seed.to_string());
        kv("loss_variant", t.loss_variant.to_string());
        kv("spatial_frames", spatial_name(t.spatial_frames).to_string());
        kv("width_mult", t.width_mult.to_string());
        kv("low_radius", self.layout.low_radius.to_string());
        kv("high_radius", self.layout.high_radius.to_string());
        kv("n_points", self.corpus.n_points.to_string());
        kv("frames", self.corpus.frames.to_string());
        kv("scenes_per_field", self.corpus.scenes_per_field.to_string());
        kv("triplets", self.corpus.triplets.to_string());
        kv("held_out", self.corpus.held_out.to_string());
        s
    }
}
