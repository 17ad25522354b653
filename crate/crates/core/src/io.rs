//! On-disk formats: frame directories (PNG/PGM), uncompressed Y4M, and
//! per-frame binary mask PNGs.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, ImageBuffer, Luma, Rgb, RgbImage};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::video::{Dims, MaskVolume, Video};

/// Rec.601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VideoKind {
    FrameDir,
    Y4m,
}

impl VideoKind {
    /// Directories are frame sequences, anything else is read as Y4M.
    pub fn infer(path: &Path) -> VideoKind {
        if path.is_dir() {
            VideoKind::FrameDir
        } else {
            VideoKind::Y4m
        }
    }
}

pub fn load_video(path: &Path, kind: VideoKind) -> Result<Video> {
    match kind {
        VideoKind::FrameDir => load_frame_dir(path),
        VideoKind::Y4m => load_y4m(path),
    }
}

pub fn load_video_auto(path: &Path) -> Result<Video> {
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
        ));
    }
    load_video(path, VideoKind::infer(path))
}

fn frame_files(dir: &Path, exts: &[&str]) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let p = entry.path();
        let matches = p
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| exts.iter().any(|x| e.eq_ignore_ascii_case(x)))
            .unwrap_or(false);
        if matches && p.is_file() {
            files.push(p);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Error::NoFrames { path: dir.into() });
    }
    Ok(files)
}

fn decode(path: &Path) -> Result<DynamicImage> {
    image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Decode {
            path: path.into(),
            message: other.to_string(),
        },
    })
}

/// Luminance in `[0, 1]` of a decoded image.
pub fn luminance(img: &DynamicImage) -> Vec<f64> {
    match img {
        DynamicImage::ImageLuma8(g) => g.as_raw().iter().map(|&v| v as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(g) => g.as_raw().iter().map(|&v| v as f64 / 65535.0).collect(),
        DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLumaA16(_) => img
            .to_luma16()
            .as_raw()
            .iter()
            .map(|&v| v as f64 / 65535.0)
            .collect(),
        _ => img
            .to_rgb8()
            .pixels()
            .map(|p| {
                let [r, g, b] = p.0;
                let y = LUMA_WEIGHTS[0] * r as f64
                    + LUMA_WEIGHTS[1] * g as f64
                    + LUMA_WEIGHTS[2] * b as f64;
                (y / 255.0).clamp(0.0, 1.0)
            })
            .collect(),
    }
}

fn load_frame_dir(dir: &Path) -> Result<Video> {
    let files = frame_files(dir, &["png", "pgm"])?;
    let frames: Vec<(PathBuf, u32, u32, Vec<f64>)> = files
        .par_iter()
        .map(|p| {
            let img = decode(p)?;
            Ok((p.clone(), img.width(), img.height(), luminance(&img)))
        })
        .collect::<Result<_>>()?;
    let (w, h) = (frames[0].1, frames[0].2);
    let mut samples = Vec::with_capacity(frames.len() * (w * h) as usize);
    for (p, fw, fh, lum) in frames.iter() {
        if (*fw, *fh) != (w, h) {
            return Err(Error::FrameDims {
                path: p.clone(),
                expected: format!("{w}x{h}"),
                found: format!("{fw}x{fh}"),
            });
        }
        samples.extend_from_slice(lum);
    }
    Video::new(Dims::new(frames.len(), h as usize, w as usize), samples)
}

fn y4m_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Y4m {
        path: path.into(),
        message: message.into(),
    }
}

/// Bytes of chroma following each luma plane for a Y4M colorspace tag.
fn chroma_bytes(path: &Path, tag: &str, w: usize, h: usize) -> Result<usize> {
    let half = |x: usize| x.div_ceil(2);
    match tag {
        "mono" => Ok(0),
        t if t.starts_with("420") => Ok(2 * half(w) * half(h)),
        "422" => Ok(2 * half(w) * h),
        "444" => Ok(2 * w * h),
        "444alpha" => Ok(3 * w * h),
        other => Err(y4m_err(path, format!("unsupported colorspace C{other}"))),
    }
}

fn load_y4m(path: &Path) -> Result<Video> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut header = String::new();
    reader
        .read_line(&mut header)
        .map_err(|e| Error::io(path, e))?;
    let mut tokens = header.split_ascii_whitespace();
    if tokens.next() != Some("YUV4MPEG2") {
        return Err(y4m_err(path, "missing YUV4MPEG2 signature"));
    }
    let (mut w, mut h, mut colorspace) = (0usize, 0usize, "420jpeg".to_string());
    for tok in tokens {
        let (key, val) = tok.split_at(1);
        match key {
            "W" => w = val.parse().map_err(|_| y4m_err(path, "bad width"))?,
            "H" => h = val.parse().map_err(|_| y4m_err(path, "bad height"))?,
            "C" => colorspace = val.to_string(),
            _ => {}
        }
    }
    if w == 0 || h == 0 {
        return Err(y4m_err(path, "missing frame size"));
    }
    let skip = chroma_bytes(path, &colorspace, w, h)?;
    let mut samples = Vec::new();
    let mut luma = vec![0u8; w * h];
    let mut chroma = vec![0u8; skip];
    let mut frames = 0usize;
    loop {
        let mut line = String::new();
        let n = reader
            .read_line(&mut line)
            .map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        if !line.starts_with("FRAME") {
            return Err(y4m_err(
                path,
                format!("frame {frames}: missing FRAME marker"),
            ));
        }
        reader
            .read_exact(&mut luma)
            .and_then(|_| reader.read_exact(&mut chroma))
            .map_err(|_| y4m_err(path, format!("frame {frames}: truncated")))?;
        samples.extend(luma.iter().map(|&v| v as f64 / 255.0));
        frames += 1;
    }
    if frames == 0 {
        return Err(Error::NoFrames { path: path.into() });
    }
    Video::new(Dims::new(frames, h, w), samples)
}

/// Writes a monochrome Y4M stream.
pub fn save_y4m(video: &Video, path: &Path) -> Result<()> {
    let d = video.dims();
    let mut out = Vec::with_capacity(d.len() + d.frames * 6 + 64);
    writeln!(out, "YUV4MPEG2 W{} H{} F25:1 Ip A1:1 Cmono", d.cols, d.rows).unwrap();
    for t in 0..d.frames {
        out.extend_from_slice(b"FRAME\n");
        out.extend(video.frame(t).iter().map(|&v| to_u8(v)));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[inline]
pub(crate) fn to_u8(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

fn frame_name(t: usize) -> String {
    format!("frame_{t:05}.png")
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn save_png<P: image::Pixel<Subpixel = u8> + image::PixelWithColorType>(
    img: &ImageBuffer<P, Vec<u8>>,
    path: &Path,
) -> Result<()> {
    img.save(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Decode {
            path: path.into(),
            message: other.to_string(),
        },
    })
}

/// Writes one 8-bit gray PNG per frame.
pub fn save_frames(video: &Video, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    let d = video.dims();
    (0..d.frames).into_par_iter().try_for_each(|t| {
        let raw = video.frame(t).iter().map(|&v| to_u8(v)).collect();
        let img = GrayImage::from_raw(d.cols as u32, d.rows as u32, raw).expect("frame size");
        save_png(&img, &dir.join(frame_name(t)))
    })
}

/// Writes one PNG per frame, 0 = pristine and 255 = marked.
pub fn save_mask(mask: &MaskVolume, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    let d = mask.dims();
    (0..d.frames).into_par_iter().try_for_each(|t| {
        let raw = mask
            .frame(t)
            .iter()
            .map(|&b| if b { 255 } else { 0 })
            .collect();
        let img = GrayImage::from_raw(d.cols as u32, d.rows as u32, raw).expect("frame size");
        save_png(&img, &dir.join(frame_name(t)))
    })
}

pub fn load_mask(dir: &Path) -> Result<MaskVolume> {
    let files = frame_files(dir, &["png", "pgm"])?;
    let frames: Vec<GrayImage> = files
        .par_iter()
        .map(|p| decode(p).map(|img| img.to_luma8()))
        .collect::<Result<_>>()?;
    let (w, h) = frames[0].dimensions();
    let mut bits = Vec::with_capacity(frames.len() * (w * h) as usize);
    for (img, p) in frames.iter().zip(&files) {
        if img.dimensions() != (w, h) {
            let (fw, fh) = img.dimensions();
            return Err(Error::FrameDims {
                path: p.clone(),
                expected: format!("{w}x{h}"),
                found: format!("{fw}x{fh}"),
            });
        }
        bits.extend(img.as_raw().iter().map(|&v| v > 127));
    }
    MaskVolume::from_bits(Dims::new(frames.len(), h as usize, w as usize), bits)
}

/// Writes RGB frames with the mask alpha-blended in red over the video.
pub fn save_overlay(video: &Video, mask: &MaskVolume, dir: &Path) -> Result<()> {
    if video.dims() != mask.dims() {
        return Err(Error::DimMismatch {
            left: video.dims(),
            right: mask.dims(),
        });
    }
    create_dir(dir)?;
    let d = video.dims();
    const ALPHA: f64 = 0.5;
    (0..d.frames).into_par_iter().try_for_each(|t| {
        let frame = video.frame(t);
        let bits = mask.frame(t);
        let img: RgbImage = ImageBuffer::from_fn(d.cols as u32, d.rows as u32, |x, y| {
            let i = y as usize * d.cols + x as usize;
            let g = frame[i];
            if bits[i] {
                Rgb([
                    to_u8(g * (1.0 - ALPHA) + ALPHA),
                    to_u8(g * (1.0 - ALPHA)),
                    to_u8(g * (1.0 - ALPHA)),
                ])
            } else {
                let v = to_u8(g);
                Rgb([v, v, v])
            }
        });
        save_png(&img, &dir.join(frame_name(t)))
    })
}

/// Quantizes a frame to 8 bits, as it would be stored.
pub(crate) fn frame_to_gray(video: &Video, t: usize) -> ImageBuffer<Luma<u8>, Vec<u8>> {
    let d = video.dims();
    let raw = video.frame(t).iter().map(|&v| to_u8(v)).collect();
    GrayImage::from_raw(d.cols as u32, d.rows as u32, raw).expect("frame size")
}
