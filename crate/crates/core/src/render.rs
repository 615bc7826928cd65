//! Rasterizing phase states into frames, the HGF1 frame-tensor format, and
//! PNG strip export.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::PhaseState;
use crate::systems::AnalyticSystem;

pub const FRAME_MAGIC: &[u8; 4] = b"HGF1";
const HEADER_LEN: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorMode {
    /// One channel, every body at full intensity.
    #[default]
    ConstantGray,
    /// Three channels, every trajectory uses `body_color`.
    ConstantColor,
    /// Three channels, one uniformly random hue per trajectory.
    VariedColor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderConfig {
    pub width: usize,
    pub height: usize,
    /// Gaussian blob radius in pixels.
    pub sigma: f64,
    /// Pixels per world unit.
    pub scale: f64,
    /// World point drawn at the image centre.
    pub center: [f64; 2],
    pub color_mode: ColorMode,
    pub body_color: [f32; 3],
    pub background: [f32; 3],
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            width: 32,
            height: 32,
            sigma: 1.5,
            scale: 7.0,
            center: [0.0, 0.0],
            color_mode: ColorMode::ConstantGray,
            body_color: [1.0, 0.6, 0.2],
            background: [0.0, 0.0, 0.0],
        }
    }
}

impl RenderConfig {
    pub fn channels(&self) -> usize {
        match self.color_mode {
            ColorMode::ConstantGray => 1,
            ColorMode::ConstantColor | ColorMode::VariedColor => 3,
        }
    }

    pub fn frame_len(&self) -> usize {
        self.width * self.height * self.channels()
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 8 || self.height < 8 {
            return Err(Error::Config(format!(
                "resolution must be at least 8x8, got {}x{}",
                self.width, self.height
            )));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Config(format!("scale must be positive, got {}", self.scale)));
        }
        let in_unit = |c: &[f32; 3]| c.iter().all(|v| (0.0..=1.0).contains(v));
        if !in_unit(&self.body_color) || !in_unit(&self.background) {
            return Err(Error::Config("colors must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Pixel coordinates (column, row) of a world point. The image y axis
    /// points down.
    pub fn project(&self, world: [f64; 2]) -> [f64; 2] {
        [
            self.width as f64 / 2.0 + self.scale * (world[0] - self.center[0]),
            self.height as f64 / 2.0 - self.scale * (world[1] - self.center[1]),
        ]
    }

    fn background_pixel(&self) -> Vec<f32> {
        match self.channels() {
            1 => vec![self.background[0]],
            _ => self.background.to_vec(),
        }
    }
}

/// HSV to RGB with saturation and value fixed at 1.
pub fn hue_to_rgb(hue: f64) -> [f32; 3] {
    let h = hue.rem_euclid(1.0) * 6.0;
    let sector = h.floor() as u32;
    let f = (h - h.floor()) as f32;
    match sector {
        0 => [1.0, f, 0.0],
        1 => [1.0 - f, 1.0, 0.0],
        2 => [0.0, 1.0, f],
        3 => [0.0, 1.0 - f, 1.0],
        4 => [f, 0.0, 1.0],
        _ => [1.0, 0.0, 1.0 - f],
    }
}

/// Draws Gaussian blobs at world `positions`. Overlapping blobs combine as
/// `1 − Π(1 − g_b)` so the coverage stays in `[0, 1]`; the pixel is the
/// background blended toward `color` by the coverage.
pub fn render_bodies(positions: &[[f64; 2]], rc: &RenderConfig, color: [f32; 3]) -> Vec<f32> {
    let c = rc.channels();
    let centers: Vec<[f64; 2]> = positions.iter().map(|&w| rc.project(w)).collect();
    let inv = 1.0 / (2.0 * rc.sigma * rc.sigma);
    let bg = rc.background_pixel();
    let fg: Vec<f32> = if c == 1 { vec![color[0]] } else { color.to_vec() };
    let mut out = Vec::with_capacity(rc.frame_len());
    for row in 0..rc.height {
        for col in 0..rc.width {
            let mut clear = 1.0f64;
            for &[cx, cy] in &centers {
                let d2 = (col as f64 - cx).powi(2) + (row as f64 - cy).powi(2);
                clear *= 1.0 - (-d2 * inv).exp();
            }
            let alpha = 1.0 - clear;
            for ch in 0..c {
                let v = bg[ch] as f64 + alpha * (fg[ch] as f64 - bg[ch] as f64);
                out.push(v.clamp(0.0, 1.0) as f32);
            }
        }
    }
    out
}

/// One `H×W×C` frame of `system` at state `s`, drawn in `color` (only the
/// first component is used for gray frames).
pub fn render_frame(system: &AnalyticSystem, s: &PhaseState, rc: &RenderConfig, color: [f32; 3]) -> Vec<f32> {
    render_bodies(&system.body_positions(s.q()), rc, color)
}

/// Contiguous `frames × H × W × C` block of pixel intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTensor {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl FrameTensor {
    pub fn new(frames: usize, height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != frames * height * width * channels {
            return Err(Error::Shape(format!(
                "frame data has {} values, expected {frames}x{height}x{width}x{channels}",
                data.len()
            )));
        }
        Ok(FrameTensor {
            frames,
            height,
            width,
            channels,
            data,
        })
    }

    pub fn frame_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn frame(&self, i: usize) -> &[f32] {
        let n = self.frame_len();
        &self.data[i * n..(i + 1) * n]
    }

    /// Frames `start .. start + len` as one contiguous slice.
    pub fn window(&self, start: usize, len: usize) -> Result<&[f32]> {
        if start + len > self.frames {
            return Err(Error::Shape(format!(
                "window {start}..{} exceeds {} frames",
                start + len,
                self.frames
            )));
        }
        let n = self.frame_len();
        Ok(&self.data[start * n..(start + len) * n])
    }

    pub fn byte_len(&self) -> usize {
        HEADER_LEN + 4 * self.data.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.byte_len());
        out.extend_from_slice(FRAME_MAGIC);
        for d in [self.frames, self.height, self.width, self.channels] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != FRAME_MAGIC {
            return Err(Error::Shape("missing HGF1 header".into()));
        }
        let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
        let (frames, height, width, channels) = (dim(0), dim(1), dim(2), dim(3));
        let expected = frames
            .checked_mul(height)
            .and_then(|n| n.checked_mul(width))
            .and_then(|n| n.checked_mul(channels))
            .and_then(|n| n.checked_mul(4))
            .and_then(|n| n.checked_add(HEADER_LEN));
        if expected != Some(bytes.len()) {
            return Err(Error::Shape(format!(
                "{frames}x{height}x{width}x{channels} frames need {} bytes, file has {}",
                expected.map_or("too many".to_string(), |n| n.to_string()),
                bytes.len()
            )));
        }
        let data = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        FrameTensor::new(frames, height, width, channels, data)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut file = fs::File::create(path)?;
        file.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Writes the frames side by side as one 8-bit PNG.
    pub fn export_png_strip(&self, path: &Path) -> Result<()> {
        let strip_w = self.width * self.frames;
        let mut rgb = vec![0u8; strip_w * self.height * 3];
        for f in 0..self.frames {
            let frame = self.frame(f);
            for row in 0..self.height {
                for col in 0..self.width {
                    let src = (row * self.width + col) * self.channels;
                    let dst = (row * strip_w + f * self.width + col) * 3;
                    for ch in 0..3 {
                        let v = frame[src + ch.min(self.channels - 1)];
                        rgb[dst + ch] = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
                    }
                }
            }
        }
        image::save_buffer(path, &rgb, strip_w as u32, self.height as u32, image::ExtendedColorType::Rgb8)
            .map_err(|e| match e {
                image::ImageError::IoError(source) => Error::Io {
                    trajectory: None,
                    source,
                },
                other => Error::Config(format!("png export failed: {other}")),
            })
    }
}
