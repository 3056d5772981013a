use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Raw pixel video, layout `[frame][row][col][channel]`, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoClip {
    frames: usize,
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl VideoClip {
    pub fn new(frames: usize, height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if frames == 0 || height == 0 || width == 0 || channels == 0 {
            return Err(Error::Shape(format!(
                "video dims must be positive, got {frames}x{height}x{width}x{channels}"
            )));
        }
        let n = frames * height * width * channels;
        if data.len() != n {
            return Err(Error::Shape(format!("video payload has {} values, expected {n}", data.len())));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::InvalidValue(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self {
            frames,
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(frames: usize, height: usize, width: usize, channels: usize, value: f32) -> Result<Self> {
        Self::new(frames, height, width, channels, vec![value; frames * height * width * channels])
    }

    pub fn frames(&self) -> usize {
        self.frames
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn dims(&self) -> [usize; 4] {
        [self.frames, self.height, self.width, self.channels]
    }
    pub fn data(&self) -> &[f32] {
        &self.data
    }
    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn index(&self, f: usize, y: usize, x: usize, c: usize) -> usize {
        ((f * self.height + y) * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, f: usize, y: usize, x: usize, c: usize) -> f32 {
        self.data[self.index(f, y, x, c)]
    }

    pub fn pixel(&self, f: usize, y: usize, x: usize) -> &[f32] {
        let i = self.index(f, y, x, 0);
        &self.data[i..i + self.channels]
    }

    /// Single frame as a `height * width * channels` slice.
    pub fn frame(&self, f: usize) -> &[f32] {
        let n = self.height * self.width * self.channels;
        &self.data[f * n..(f + 1) * n]
    }

    pub fn same_dims(&self, other: &VideoClip) -> bool {
        self.dims() == other.dims()
    }

    /// Frames at the given indices, in order.
    pub fn select_frames(&self, idx: &[usize]) -> Result<VideoClip> {
        let mut data = Vec::with_capacity(idx.len() * self.frame(0).len());
        for &f in idx {
            if f >= self.frames {
                return Err(Error::Shape(format!("frame {f} out of range {}", self.frames)));
            }
            data.extend_from_slice(self.frame(f));
        }
        VideoClip::new(idx.len(), self.height, self.width, self.channels, data)
    }
}

/// Latent video, layout `[lf][lh][lw][channel]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentClip {
    lf: usize,
    lh: usize,
    lw: usize,
    channels: usize,
    data: Vec<f32>,
}

impl LatentClip {
    pub fn new(lf: usize, lh: usize, lw: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        let n = lf * lh * lw * channels;
        if n == 0 {
            return Err(Error::Shape("latent dims must be positive".into()));
        }
        if data.len() != n {
            return Err(Error::Shape(format!("latent payload has {} values, expected {n}", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue("latent contains non-finite values".into()));
        }
        Ok(Self {
            lf,
            lh,
            lw,
            channels,
            data,
        })
    }

    pub fn zeros(lf: usize, lh: usize, lw: usize, channels: usize) -> Self {
        Self {
            lf,
            lh,
            lw,
            channels,
            data: vec![0.0; lf * lh * lw * channels],
        }
    }

    pub fn zeros_like(other: &LatentClip) -> Self {
        Self::zeros(other.lf, other.lh, other.lw, other.channels)
    }

    /// Same shape as `self` with new values; values are not range-checked beyond finiteness.
    pub fn with_data(&self, data: Vec<f32>) -> Result<Self> {
        Self::new(self.lf, self.lh, self.lw, self.channels, data)
    }

    pub fn grid(&self) -> [usize; 3] {
        [self.lf, self.lh, self.lw]
    }
    pub fn dims(&self) -> [usize; 4] {
        [self.lf, self.lh, self.lw, self.channels]
    }
    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn data(&self) -> &[f32] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }
    pub fn into_data(self) -> Vec<f32> {
        self.data
    }
    pub fn len(&self) -> usize {
        self.data.len()
    }
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, t: usize, y: usize, x: usize, c: usize) -> usize {
        ((t * self.lh + y) * self.lw + x) * self.channels + c
    }

    pub fn check_same_shape(&self, other: &LatentClip) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::Shape(format!(
                "latent shapes differ: {:?} vs {:?}",
                self.dims(),
                other.dims()
            )));
        }
        Ok(())
    }

    pub fn sub(&self, other: &LatentClip) -> Result<LatentClip> {
        self.check_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self { data, ..self.clone_shape() })
    }

    pub fn add(&self, other: &LatentClip) -> Result<LatentClip> {
        self.check_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Self { data, ..self.clone_shape() })
    }

    pub fn scale(&self, s: f32) -> LatentClip {
        Self {
            data: self.data.iter().map(|v| v * s).collect(),
            ..self.clone_shape()
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    pub fn std(&self) -> f64 {
        let m = self.mean();
        (self.data.iter().map(|&v| (v as f64 - m).powi(2)).sum::<f64>() / self.data.len() as f64).sqrt()
    }

    /// Root-mean-square difference.
    pub fn rms_diff(&self, other: &LatentClip) -> Result<f64> {
        self.check_same_shape(other)?;
        let s: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| ((a - b) as f64).powi(2))
            .sum();
        Ok((s / self.data.len() as f64).sqrt())
    }

    /// PSNR against `reference` with unit peak.
    pub fn psnr(&self, reference: &LatentClip) -> Result<f64> {
        let rms = self.rms_diff(reference)?;
        Ok(if rms == 0.0 { f64::INFINITY } else { -20.0 * rms.log10() })
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt()
    }

    fn clone_shape(&self) -> Self {
        Self {
            lf: self.lf,
            lh: self.lh,
            lw: self.lw,
            channels: self.channels,
            data: Vec::new(),
        }
    }
}
