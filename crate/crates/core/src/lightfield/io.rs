//! Directory format: `manifest.json` plus one file per view.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Intrinsics, LightField, CHANNELS};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

const PNG_PATTERN: &str = "u{row}_v{col}.png";
const RAW_PATTERN: &str = "u{row}_v{col}.f32";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BitDepth {
    /// 8-bit RGB PNG per view.
    Eight,
    /// Little-endian `f32` raw payload per view (lossless).
    Float32,
}

impl BitDepth {
    pub fn from_bits(bits: u32) -> Result<Self> {
        match bits {
            8 => Ok(BitDepth::Eight),
            32 => Ok(BitDepth::Float32),
            other => Err(Error::invalid(
                "bit_depth",
                format!("unsupported value {other}, expected 8 or 32"),
            )),
        }
    }

    pub fn bits(self) -> u32 {
        match self {
            BitDepth::Eight => 8,
            BitDepth::Float32 => 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    /// `[rows, cols]` view counts.
    pub angular_size: [usize; 2],
    /// `[height, width]` in pixels.
    pub spatial_size: [usize; 2],
    pub channels: usize,
    pub bit_depth: u32,
    pub baseline_px: f64,
    pub focal_px: f64,
    /// `[x, y]` of the central angular principal point.
    pub principal_point: [f64; 2],
    pub filename_pattern: String,
}

impl Manifest {
    pub fn for_lightfield(lf: &LightField, depth: BitDepth) -> Self {
        let (rows, cols) = lf.angular_size();
        let (height, width) = lf.spatial_size();
        let intr = lf.intrinsics();
        Manifest {
            version: MANIFEST_VERSION,
            angular_size: [rows, cols],
            spatial_size: [height, width],
            channels: CHANNELS,
            bit_depth: depth.bits(),
            baseline_px: intr.baseline_px,
            focal_px: intr.focal_px,
            principal_point: intr.principal_point,
            filename_pattern: match depth {
                BitDepth::Eight => PNG_PATTERN.to_string(),
                BitDepth::Float32 => RAW_PATTERN.to_string(),
            },
        }
    }

    pub fn depth(&self) -> Result<BitDepth> {
        BitDepth::from_bits(self.bit_depth)
    }

    pub fn view_file_name(&self, row: usize, col: usize) -> String {
        self.filename_pattern
            .replace("{row}", &row.to_string())
            .replace("{col}", &col.to_string())
    }

    /// Parses a file name against the pattern, returning `(row, col)`.
    fn match_view_file(&self, name: &str) -> Option<(usize, usize)> {
        let (head, rest) = self.filename_pattern.split_once("{row}")?;
        let (mid, tail) = rest.split_once("{col}")?;
        let body = name.strip_prefix(head)?.strip_suffix(tail)?;
        let (row, col) = body.split_once(mid)?;
        Some((row.parse().ok()?, col.parse().ok()?))
    }

    fn validate(&self, path: &Path) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::invalid(
                "version",
                format!(
                    "{} declares version {}, expected {MANIFEST_VERSION}",
                    path.display(),
                    self.version
                ),
            ));
        }
        if self.channels != CHANNELS {
            return Err(Error::invalid(
                "channels",
                format!("expected {CHANNELS}, found {}", self.channels),
            ));
        }
        if !self.filename_pattern.contains("{row}") || !self.filename_pattern.contains("{col}") {
            return Err(Error::invalid(
                "filename_pattern",
                "must contain both {row} and {col} placeholders",
            ));
        }
        self.depth()?;
        Ok(())
    }
}

/// Writes `lf` into `dir` (created if needed).
pub fn save_lightfield(lf: &LightField, dir: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = Manifest::for_lightfield(lf, depth);
    let (rows, cols) = lf.angular_size();
    let (height, width) = lf.spatial_size();
    for r in 0..rows {
        for c in 0..cols {
            let path = dir.join(manifest.view_file_name(r, c));
            let view = lf.view_data(r, c);
            match depth {
                BitDepth::Eight => write_png(&path, height, width, view)?,
                BitDepth::Float32 => {
                    let bytes: Vec<u8> = view.iter().flat_map(|v| v.to_le_bytes()).collect();
                    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
                }
            }
        }
    }
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&path, e))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn load_lightfield(dir: impl AsRef<Path>) -> Result<LightField> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        return Err(Error::MissingManifest(manifest_path));
    }
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::json(&manifest_path, e))?;
    manifest.validate(&manifest_path)?;

    let [rows, cols] = manifest.angular_size;
    let [height, width] = manifest.spatial_size;
    check_view_files(dir, &manifest)?;

    let depth = manifest.depth()?;
    let mut views = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let path = dir.join(manifest.view_file_name(r, c));
            let view = match depth {
                BitDepth::Eight => read_png(&path, height, width)?,
                BitDepth::Float32 => read_raw(&path, height, width)?,
            };
            views.push(view);
        }
    }
    let intrinsics = Intrinsics::new(
        manifest.focal_px,
        manifest.baseline_px,
        manifest.principal_point,
    )?;
    LightField::from_views((rows, cols), (height, width), views, intrinsics)
}

fn check_view_files(dir: &Path, manifest: &Manifest) -> Result<()> {
    let [rows, cols] = manifest.angular_size;
    for r in 0..rows {
        for c in 0..cols {
            let path = dir.join(manifest.view_file_name(r, c));
            if !path.is_file() {
                return Err(Error::MissingView(path));
            }
        }
    }
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut extras = BTreeSet::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        if let Some((r, c)) = manifest.match_view_file(name) {
            if r >= rows || c >= cols || manifest.view_file_name(r, c) != name {
                extras.insert(entry.path());
            }
        }
    }
    match extras.into_iter().next() {
        Some(path) => Err(Error::ExtraView(path)),
        None => Ok(()),
    }
}

fn write_png(path: &Path, height: usize, width: usize, view: &[f32]) -> Result<()> {
    let bytes: Vec<u8> = view.iter().map(|&v| quantize_u8(v)).collect();
    image::save_buffer_with_format(
        path,
        &bytes,
        width as u32,
        height as u32,
        image::ExtendedColorType::Rgb8,
        image::ImageFormat::Png,
    )
    .map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn quantize_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn read_png(path: &Path, height: usize, width: usize) -> Result<Vec<f32>> {
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?
        .to_rgb8();
    if img.height() as usize != height || img.width() as usize != width {
        return Err(Error::DimensionMismatch {
            path: path.to_path_buf(),
            expected: format!("{width}x{height}"),
            found: format!("{}x{}", img.width(), img.height()),
        });
    }
    Ok(img
        .into_raw()
        .into_iter()
        .map(|b| b as f32 / 255.0)
        .collect())
}

fn read_raw(path: &Path, height: usize, width: usize) -> Result<Vec<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = height * width * CHANNELS * 4;
    if bytes.len() != expected {
        return Err(Error::DimensionMismatch {
            path: path.to_path_buf(),
            expected: format!("{expected} bytes"),
            found: format!("{} bytes", bytes.len()),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect())
}

/// Writes a standalone RGB image (used for EPI export).
pub(crate) fn write_rgb_png(path: &Path, height: usize, width: usize, data: &[f32]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    write_png(path, height, width, data)
}
