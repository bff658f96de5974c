//! Image, box-list and result file formats.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, ImageBuffer, Luma};

use crate::error::{Error, Result};
use crate::pipeline::SegmentationResult;
use crate::types::{BoxAnnotation, PixelGrid};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn img_err(path: &Path) -> impl FnOnce(image::ImageError) -> Error + '_ {
    move |source| Error::Image {
        path: path.to_path_buf(),
        source,
    }
}

/// Loads an 8-bit grayscale or RGB PNG, or a PGM (P2/P5), scaled to `[0, 1]`.
pub fn load_image(path: impl AsRef<Path>) -> Result<PixelGrid> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    let format = image::guess_format(&bytes).map_err(img_err(path))?;
    if !matches!(format, image::ImageFormat::Png | image::ImageFormat::Pnm) {
        return Err(Error::UnsupportedFormat(format!(
            "{}: {format:?} (expected PNG or PGM)",
            path.display()
        )));
    }
    let img = image::load_from_memory_with_format(&bytes, format).map_err(img_err(path))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, raw) = match img {
        DynamicImage::ImageLuma8(buf) => (1, buf.into_raw()),
        DynamicImage::ImageRgb8(buf) => (3, buf.into_raw()),
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: pixel layout {:?} (expected 8-bit gray or RGB)",
                path.display(),
                other.color()
            )))
        }
    };
    PixelGrid::new(
        h,
        w,
        channels,
        raw.into_iter().map(|v| v as f64 / 255.0).collect(),
    )
}

/// Writes the first channel of a `[0, 1]` grid as an 8-bit grayscale PNG,
/// or three channels as RGB.
pub fn save_image(grid: &PixelGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let to_u8 = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let (w, h) = (grid.width() as u32, grid.height() as u32);
    let img = if grid.channels() == 3 {
        let buf = ImageBuffer::from_raw(w, h, grid.data().iter().map(|&v| to_u8(v)).collect())
            .expect("buffer size matches dimensions");
        DynamicImage::ImageRgb8(buf)
    } else {
        let buf = GrayImage::from_raw(w, h, grid.channel(0).into_iter().map(to_u8).collect())
            .expect("buffer size matches dimensions");
        DynamicImage::ImageLuma8(buf)
    };
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(img_err(path))
}

/// Parses `id x0 y0 x1 y1` records, one per line; `#` lines and blank lines
/// are skipped.
pub fn parse_boxes(text: &str, path: &Path) -> Result<Vec<BoxAnnotation>> {
    let mut boxes: Vec<BoxAnnotation> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(parse_err(format!(
                "expected 5 fields, found {}",
                fields.len()
            )));
        }
        let id: u32 = fields[0]
            .parse()
            .map_err(|_| parse_err(format!("bad id '{}'", fields[0])))?;
        let mut coords = [0usize; 4];
        for (slot, f) in coords.iter_mut().zip(&fields[1..]) {
            *slot = f
                .parse()
                .map_err(|_| parse_err(format!("bad coordinate '{f}'")))?;
        }
        let b = BoxAnnotation::new(id, coords[0], coords[1], coords[2], coords[3])
            .map_err(|e| parse_err(e.to_string()))?;
        if boxes.iter().any(|o| o.id == id) {
            return Err(parse_err(format!("duplicate id {id}")));
        }
        boxes.push(b);
    }
    Ok(boxes)
}

pub fn load_boxes(path: impl AsRef<Path>) -> Result<Vec<BoxAnnotation>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_boxes(&text, path)
}

pub fn format_boxes(boxes: &[BoxAnnotation]) -> String {
    let mut s = String::from("# id x0 y0 x1 y1\n");
    for b in boxes {
        let _ = writeln!(s, "{} {} {} {} {}", b.id, b.x0, b.y0, b.x1, b.y1);
    }
    s
}

pub fn save_boxes(boxes: &[BoxAnnotation], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_boxes(boxes)).map_err(io_err(path))
}

/// Writes a `{0, 1}` mask as an 8-bit PNG with 255 for foreground.
pub fn save_binary_mask(
    mask: &[u8],
    height: usize,
    width: usize,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let buf = GrayImage::from_raw(
        width as u32,
        height as u32,
        mask.iter().map(|&v| if v != 0 { 255 } else { 0 }).collect(),
    )
    .ok_or_else(|| Error::invalid("mask length does not match dimensions"))?;
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(img_err(path))
}

/// Reads a mask PNG back as `{0, 1}` with `(height, width)`; any nonzero
/// value is foreground.
pub fn load_binary_mask(path: impl AsRef<Path>) -> Result<(Vec<u8>, usize, usize)> {
    let grid = load_image(path)?;
    let mask = (0..grid.pixel_count())
        .map(|i| {
            u8::from(
                grid.pixel(i / grid.width(), i % grid.width())
                    .iter()
                    .any(|&v| v > 0.0),
            )
        })
        .collect();
    Ok((mask, grid.height(), grid.width()))
}

fn save_labels(labels: &[u32], height: usize, width: usize, path: &Path) -> Result<()> {
    let max = labels.iter().copied().max().unwrap_or(0);
    if max <= u8::MAX as u32 {
        let buf = GrayImage::from_raw(
            width as u32,
            height as u32,
            labels.iter().map(|&v| v as u8).collect(),
        )
        .expect("label length matches dimensions");
        buf.save_with_format(path, image::ImageFormat::Png)
            .map_err(img_err(path))
    } else if max <= u16::MAX as u32 {
        let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(
            width as u32,
            height as u32,
            labels.iter().map(|&v| v as u16).collect(),
        )
        .expect("label length matches dimensions");
        buf.save_with_format(path, image::ImageFormat::Png)
            .map_err(img_err(path))
    } else {
        Err(Error::invalid(format!(
            "instance id {max} does not fit a 16-bit label map"
        )))
    }
}

pub fn mask_file_name(id: u32) -> String {
    format!("mask_{id}.png")
}

/// Human-readable per-instance summary.
pub fn format_report(result: &SegmentationResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "image {}x{}", result.width, result.height);
    let _ = writeln!(s, "instances {}", result.masks.len());
    let _ = writeln!(s, "mean_objective {:.9e}", result.mean_objective);
    for m in &result.masks {
        let b = m.bbox();
        let first = m.energy_trajectory.first().copied().unwrap_or(f64::NAN);
        let min = m
            .energy_trajectory
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        let _ = writeln!(
            s,
            "instance {} box {} {} {} {} area {} iterations {} final_objective {:.9e} first {:.9e} min {:.9e}",
            m.id,
            b.x0,
            b.y0,
            b.x1,
            b.y1,
            m.area(),
            m.iterations_run,
            m.final_objective,
            first,
            min
        );
    }
    for f in &result.failures {
        let _ = writeln!(s, "failed {} {}", f.id, f.message);
    }
    s
}

/// Writes `mask_<id>.png` per instance, `labels.png` and `report.txt`.
/// Returns the written paths.
pub fn save_masks(result: &SegmentationResult, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    for m in &result.masks {
        let p = dir.join(mask_file_name(m.id));
        save_binary_mask(&m.mask, m.height, m.width, &p)?;
        written.push(p);
    }
    let labels = dir.join("labels.png");
    save_labels(&result.label_map, result.height, result.width, &labels)?;
    written.push(labels);
    let report = dir.join("report.txt");
    fs::write(&report, format_report(result)).map_err(io_err(&report))?;
    written.push(report);
    Ok(written)
}
