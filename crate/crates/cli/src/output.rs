//! Files written by experiments: images, loss curves, derivative maps.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use rts_core::io::{save_png, write_pfm_gray};
use rts_core::optim::LossRecord;
use rts_core::Image;
use sha2::{Digest, Sha256};

/// Hex SHA-256 of the parameters' little-endian bytes (first 16 digits).
pub fn param_hash(params: &[f64]) -> String {
    let mut h = Sha256::new();
    for p in params {
        h.update(p.to_le_bytes());
    }
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Loss curve of one optimization run.
pub struct LossLog {
    pub records: Vec<LossRecord>,
    start: Instant,
}

impl Default for LossLog {
    fn default() -> Self {
        Self::new()
    }
}

impl LossLog {
    pub fn new() -> Self {
        Self {
            records: Vec::new(),
            start: Instant::now(),
        }
    }

    pub fn push(&mut self, iteration: usize, loss: f64, params: &[f64]) {
        if let Some(last) = self.records.last() {
            debug_assert!(iteration > last.iteration, "iterations must increase");
        }
        self.records.push(LossRecord {
            iteration,
            loss,
            param_hash: param_hash(params),
            wall_seconds: self.start.elapsed().as_secs_f64(),
        });
    }

    pub fn last_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.loss)
    }

    /// First iteration whose loss is below `threshold`.
    pub fn first_below(&self, threshold: f64) -> Option<usize> {
        self.records.iter().find(|r| r.loss < threshold).map(|r| r.iteration)
    }

    /// `loss.csv` (deterministic) and `timing.csv` (wall clock) in `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(dir.join("loss.csv"))?;
        w.write_record(["iteration", "loss", "param_hash"])?;
        for r in &self.records {
            w.write_record([r.iteration.to_string(), format!("{:e}", r.loss), r.param_hash.clone()])?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join("timing.csv"))?;
        w.write_record(["iteration", "wall_ms"])?;
        for r in &self.records {
            w.write_record([r.iteration.to_string(), format!("{:.3}", r.wall_seconds * 1e3)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Creates `dir` if needed and returns it.
pub fn prepare_dir(dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir.to_path_buf())
}

pub fn png(img: &Image<f64>, dir: &Path, name: &str) -> Result<()> {
    let path = dir.join(name);
    save_png(img, &path).with_context(|| format!("writing {}", path.display()))
}

/// Blue-white-red map of a signed field with symmetric range `[-range, range]`.
pub fn signed_colormap(values: &[f64], width: usize, height: usize, range: f64) -> Image<f64> {
    let pixels = values
        .iter()
        .map(|&v| {
            let t = if range > 0.0 { (v / range).clamp(-1.0, 1.0) } else { 0.0 };
            if t >= 0.0 {
                [1.0, 1.0 - t, 1.0 - t, 1.0]
            } else {
                [1.0 + t, 1.0 + t, 1.0, 1.0]
            }
        })
        .collect();
    Image {
        width,
        height,
        pixels,
    }
}

pub fn max_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Signed derivative image as PFM (exact values) and color-mapped PNG.
pub fn derivative_image(values: &[f64], width: usize, height: usize, dir: &Path, stem: &str) -> Result<f64> {
    let range = max_abs(values);
    let data: Vec<f32> = values.iter().map(|&v| v as f32).collect();
    write_pfm_gray(&dir.join(format!("{stem}.pfm")), width, height, &data)?;
    png(&signed_colormap(values, width, height, range), dir, &format!("{stem}.png"))?;
    Ok(range)
}

/// Silhouette comparison: red where only the target is covered, green
/// where only the render is, white where both are, black elsewhere.
pub fn overlap_image(current: &Image<f64>, target: &Image<f64>) -> Image<f64> {
    let pixels = current
        .pixels
        .iter()
        .zip(&target.pixels)
        .map(|(c, t)| match (c[3] > 0.5, t[3] > 0.5) {
            (true, true) => [1.0; 4],
            (false, true) => [1.0, 0.0, 0.0, 1.0],
            (true, false) => [0.0, 1.0, 0.0, 1.0],
            (false, false) => [0.0, 0.0, 0.0, 1.0],
        })
        .collect();
    Image {
        width: current.width,
        height: current.height,
        pixels,
    }
}
