//! PNG frame-sequence import/export (`frame_00000.png`, ...).
//!
//! Videos are 8-bit RGB, values treated as sRGB-encoded. Masks are 1-bit
//! grayscale.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Rgb};

use super::{PixelMask, VideoClip};
use crate::error::{Error, Result};

pub fn frame_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("frame_{index:05}.png"))
}

fn count_frames(dir: &Path) -> usize {
    (0..).take_while(|&i| frame_path(dir, i).exists()).count()
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_video_frames(dir: impl AsRef<Path>, video: &VideoClip) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    if video.channels() != 3 {
        return Err(Error::Shape(format!("PNG export needs 3 channels, got {}", video.channels())));
    }
    for f in 0..video.frames() {
        let buf: Vec<u8> = video.frame(f).iter().map(|&v| to_u8(v)).collect();
        let img: ImageBuffer<Rgb<u8>, _> = ImageBuffer::from_raw(video.width() as u32, video.height() as u32, buf)
            .expect("buffer sized from video dims");
        img.save(frame_path(dir, f))?;
    }
    Ok(())
}

pub fn read_video_frames(dir: impl AsRef<Path>) -> Result<VideoClip> {
    let dir = dir.as_ref();
    let n = count_frames(dir);
    if n == 0 {
        return Err(Error::Format(format!("no frame_00000.png in {}", dir.display())));
    }
    let mut data = Vec::new();
    let (mut w, mut h) = (0, 0);
    for f in 0..n {
        let img = image::open(frame_path(dir, f))?.to_rgb8();
        if f == 0 {
            (w, h) = img.dimensions();
        } else if img.dimensions() != (w, h) {
            return Err(Error::Shape(format!("frame {f} has different dimensions")));
        }
        data.extend(img.into_raw().into_iter().map(|b| b as f32 / 255.0));
    }
    VideoClip::new(n, h as usize, w as usize, 3, data)
}

pub fn write_mask_frames(dir: impl AsRef<Path>, mask: &PixelMask) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (w, h) = (mask.width(), mask.height());
    let stride = w.div_ceil(8);
    for f in 0..mask.frames() {
        let path = frame_path(dir, f);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut enc = ::png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
        enc.set_color(::png::ColorType::Grayscale);
        enc.set_depth(::png::BitDepth::One);
        let mut packed = vec![0u8; stride * h];
        for (i, &v) in mask.frame(f).iter().enumerate() {
            if v != 0 {
                let (y, x) = (i / w, i % w);
                packed[y * stride + x / 8] |= 0x80 >> (x % 8);
            }
        }
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::Format(format!("png header: {e}")))?;
        writer
            .write_image_data(&packed)
            .map_err(|e| Error::Format(format!("png data: {e}")))?;
    }
    Ok(())
}

pub fn read_mask_frames(dir: impl AsRef<Path>) -> Result<PixelMask> {
    let dir = dir.as_ref();
    let n = count_frames(dir);
    if n == 0 {
        return Err(Error::Format(format!("no frame_00000.png in {}", dir.display())));
    }
    let mut frames = Vec::with_capacity(n);
    let (mut w, mut h) = (0, 0);
    for f in 0..n {
        let img = image::open(frame_path(dir, f))?.to_luma8();
        (w, h) = img.dimensions();
        frames.push(img.into_raw().into_iter().map(|b| (b >= 128) as u8).collect());
    }
    PixelMask::from_frames(h as usize, w as usize, &frames)
}
