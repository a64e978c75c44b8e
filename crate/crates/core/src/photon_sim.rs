//! Shot-noise-limited detection of a Gaussian intensity profile.
//!
//! Photon radii are drawn by inverting the radial CDF,
//! `r = w sqrt(-ln(u) / 2)` with `u` uniform on (0, 1], so that `2r²/w²` is
//! a unit exponential. Every draw comes from a ChaCha8 stream keyed by
//! `(seed, stream)`; trial `t` of a batch uses stream `t`, which keeps
//! parallel batches reproducible regardless of scheduling.

use std::f64::consts::PI;
use std::io::{self, BufRead, Write};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{non_negative, positive, Error, Result};

/// Independent generator for `(seed, stream)`. Distinct pairs give distinct
/// ChaCha key/stream combinations.
pub fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

#[inline]
fn draw_radius(width: f64, rng: &mut ChaCha8Rng) -> f64 {
    let u = 1.0 - rng.random::<f64>();
    width * (-0.5 * u.ln()).sqrt()
}

/// One simulated exposure: the radial positions of every detected photon.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSample {
    pub radii: Vec<f64>,
    pub width_sq: f64,
    pub seed: u64,
    pub stream: u64,
}

impl DetectionSample {
    pub fn total_count(&self) -> u64 {
        self.radii.len() as u64
    }

    /// Number of radii strictly greater than `r_b`.
    pub fn count_outside(&self, r_b: f64) -> u64 {
        self.radii.iter().filter(|&&r| r > r_b).count() as u64
    }

    pub fn mean_sq_radius(&self) -> Option<f64> {
        if self.radii.is_empty() {
            None
        } else {
            Some(self.sum_sq() / self.radii.len() as f64)
        }
    }

    fn sum_sq(&self) -> f64 {
        self.radii.iter().fold(0.0, |acc, r| acc + r * r)
    }

    pub fn stats(&self, r_b: f64) -> SampleStats {
        SampleStats {
            total: self.total_count(),
            outside: self.count_outside(r_b),
            sum_sq: self.sum_sq(),
        }
    }
}

/// Sufficient statistics of a sample for the fraction and width estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleStats {
    pub total: u64,
    pub outside: u64,
    pub sum_sq: f64,
}

impl SampleStats {
    pub fn mean_sq_radius(&self) -> Option<f64> {
        (self.total > 0).then(|| self.sum_sq / self.total as f64)
    }
}

pub fn sample_radii(width_sq: f64, n: u64, seed: u64) -> Result<DetectionSample> {
    sample_radii_stream(width_sq, n, seed, 0)
}

pub fn sample_radii_stream(width_sq: f64, n: u64, seed: u64, stream: u64) -> Result<DetectionSample> {
    positive("width_sq", width_sq)?;
    let width = width_sq.sqrt();
    let mut rng = trial_rng(seed, stream);
    let radii = (0..n).map(|_| draw_radius(width, &mut rng)).collect();
    Ok(DetectionSample {
        radii,
        width_sq,
        seed,
        stream,
    })
}

/// Same draws as [`sample_radii_stream`], reduced on the fly to
/// [`SampleStats`] without storing the radii.
pub fn simulate_stats(width_sq: f64, n: u64, r_b: f64, seed: u64, stream: u64) -> Result<SampleStats> {
    positive("width_sq", width_sq)?;
    let mut rng = trial_rng(seed, stream);
    Ok(stats_from_rng(width_sq, n, r_b, &mut rng))
}

fn stats_from_rng(width_sq: f64, n: u64, r_b: f64, rng: &mut ChaCha8Rng) -> SampleStats {
    let width = width_sq.sqrt();
    let mut outside = 0;
    let mut sum_sq = 0.0;
    for _ in 0..n {
        let r = draw_radius(width, rng);
        outside += u64::from(r > r_b);
        sum_sq += r * r;
    }
    SampleStats {
        total: n,
        outside,
        sum_sq,
    }
}

pub fn poisson_count(mean: f64, seed: u64) -> Result<u64> {
    let mut rng = trial_rng(seed, 0);
    draw_poisson(mean, &mut rng)
}

fn draw_poisson(mean: f64, rng: &mut ChaCha8Rng) -> Result<u64> {
    non_negative("mean", mean)?;
    if mean == 0.0 {
        return Ok(0);
    }
    let dist = Poisson::new(mean).map_err(|_| Error::InvalidParameter {
        name: "mean",
        value: mean,
        reason: "outside the supported Poisson range",
    })?;
    let k: f64 = dist.sample(rng);
    Ok(k as u64)
}

/// How many photons an exposure contains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountModel {
    /// Exactly the nominal number of detections.
    #[default]
    Fixed,
    /// Poisson-distributed total around the nominal number.
    Poisson,
}

/// Draws one exposure's statistics on stream `stream`. With
/// [`CountModel::Poisson`], the total is drawn first from the same stream.
pub fn simulate_exposure(
    width_sq: f64,
    nominal: u64,
    model: CountModel,
    r_b: f64,
    seed: u64,
    stream: u64,
) -> Result<SampleStats> {
    positive("width_sq", width_sq)?;
    let mut rng = trial_rng(seed, stream);
    let n = match model {
        CountModel::Fixed => nominal,
        CountModel::Poisson => draw_poisson(nominal as f64, &mut rng)?,
    };
    Ok(stats_from_rng(width_sq, n, r_b, &mut rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CameraMode {
    Continuous,
    Pixelated,
}

/// Square camera of `(2 half_extent + 1)²` pixels centered on the beam axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub pixel_pitch: f64,
    pub half_extent: u32,
    pub mode: CameraMode,
}

impl CameraModel {
    pub fn pixelated(pixel_pitch: f64, half_extent: u32) -> Result<Self> {
        Ok(Self {
            pixel_pitch: positive("pixel_pitch", pixel_pitch)?,
            half_extent,
            mode: CameraMode::Pixelated,
        })
    }

    pub fn side(&self) -> usize {
        2 * self.half_extent as usize + 1
    }
}

/// Photon counts per pixel, row-major, plus everything that missed the chip.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PixelGrid {
    pub side: usize,
    pub pixel_pitch: f64,
    pub counts: Vec<u64>,
    pub overflow: u64,
}

impl PixelGrid {
    pub fn get(&self, row: usize, col: usize) -> u64 {
        self.counts[row * self.side + col]
    }

    pub fn center(&self) -> u64 {
        let c = self.side / 2;
        self.get(c, c)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.overflow
    }
}

/// Bins the sample on the camera, drawing a uniform azimuth for each photon.
pub fn pixelate(sample: &DetectionSample, camera: &CameraModel, seed: u64) -> Result<PixelGrid> {
    if camera.mode != CameraMode::Pixelated {
        return Err(Error::InvalidParameter {
            name: "camera.mode",
            value: f64::NAN,
            reason: "pixelation needs a pixelated camera",
        });
    }
    positive("pixel_pitch", camera.pixel_pitch)?;
    let side = camera.side();
    let half = camera.half_extent as f64;
    let mut counts = vec![0u64; side * side];
    let mut overflow = 0;
    let mut rng = trial_rng(seed, 0);

    for &r in &sample.radii {
        let theta = 2.0 * PI * rng.random::<f64>();
        let col = (r * theta.cos() / camera.pixel_pitch + 0.5).floor() + half;
        let row = (r * theta.sin() / camera.pixel_pitch + 0.5).floor() + half;
        if (0.0..side as f64).contains(&col) && (0.0..side as f64).contains(&row) {
            counts[row as usize * side + col as usize] += 1;
        } else {
            overflow += 1;
        }
    }
    Ok(PixelGrid {
        side,
        pixel_pitch: camera.pixel_pitch,
        counts,
        overflow,
    })
}

/// Writes `# w_sq=<val> n=<val> seed=<val>` followed by one radius (m) per
/// line.
pub fn write_sample_dump<W: Write>(sample: &DetectionSample, mut out: W) -> io::Result<()> {
    writeln!(
        out,
        "# w_sq={} n={} seed={}",
        sample.width_sq,
        sample.total_count(),
        sample.seed
    )?;
    for r in &sample.radii {
        writeln!(out, "{r}")?;
    }
    Ok(())
}

pub fn read_sample_dump<R: BufRead>(input: R) -> Result<DetectionSample> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("missing header".into()))?
        .map_err(|e| Error::Parse(e.to_string()))?;
    let fields = header
        .strip_prefix("# ")
        .ok_or_else(|| Error::Parse(format!("bad header `{header}`")))?;

    let (mut width_sq, mut n, mut seed) = (None, None, None);
    for field in fields.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("bad header field `{field}`")))?;
        let bad = |_| Error::Parse(format!("bad value for `{key}`: `{value}`"));
        match key {
            "w_sq" => width_sq = Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?),
            "n" => n = Some(value.parse::<u64>().map_err(|e| bad(e.to_string()))?),
            "seed" => seed = Some(value.parse::<u64>().map_err(|e| bad(e.to_string()))?),
            _ => return Err(Error::Parse(format!("unknown header key `{key}`"))),
        }
    }
    let (width_sq, n, seed) = match (width_sq, n, seed) {
        (Some(w), Some(n), Some(s)) => (w, n, s),
        _ => return Err(Error::Parse("header needs w_sq, n and seed".into())),
    };

    let mut radii = Vec::with_capacity(n as usize);
    for line in lines {
        let line = line.map_err(|e| Error::Parse(e.to_string()))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let r: f64 = line
            .parse()
            .map_err(|_| Error::Parse(format!("bad radius `{line}`")))?;
        if !(r >= 0.0) {
            return Err(Error::Parse(format!("negative radius `{line}`")));
        }
        radii.push(r);
    }
    if radii.len() as u64 != n {
        return Err(Error::Parse(format!("header says n={n}, found {} radii", radii.len())));
    }
    Ok(DetectionSample {
        radii,
        width_sq,
        seed,
        stream: 0,
    })
}
