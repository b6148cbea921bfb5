//! File formats: the HSR1 raster, JSON sidecars and manifests, CSV emitters.
//!
//! Raster layout (bit-exact): magic `HSR1`, little-endian u32 height, width,
//! bands, then `height*width*bands` little-endian f32 values in
//! band-sequential order. An optional JSON sidecar `<name>.json` carries
//! wavelength labels and provenance. CSV output uses `.` decimals and LF
//! line endings.

use crate::cube::{cube_from_image_stack, cube_to_image_stack, HsiCube, NoiseModel};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sim::{Scene, SceneConfig};
use crate::sure::RiskSurface;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

const MAGIC: &[u8; 4] = b"HSR1";
const HEADER_LEN: usize = 16;

/// Optional cube metadata from the JSON sidecar.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CubeMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wavelengths: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes a cube in the HSR1 raster format.
pub fn write_cube<S: Scalar>(path: &Path, cube: &HsiCube<S>) -> Result<()> {
    let mut bytes = Vec::with_capacity(HEADER_LEN + cube.pixels() * cube.bands() * 4);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(cube.height() as u32).to_le_bytes());
    bytes.extend_from_slice(&(cube.width() as u32).to_le_bytes());
    bytes.extend_from_slice(&(cube.bands() as u32).to_le_bytes());
    for (index, v) in cube_to_image_stack(cube).into_iter().enumerate() {
        let f = v.to_f32().unwrap_or(f32::NAN);
        if !f.is_finite() {
            return Err(Error::NonFinite {
                context: "cube payload",
                index,
            });
        }
        bytes.extend_from_slice(&f.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Reads a cube and its optional sidecar metadata.
pub fn read_cube<S: Scalar>(path: &Path) -> Result<(HsiCube<S>, CubeMeta)> {
    let bytes = fs::read(path)?;
    if bytes.len() < HEADER_LEN {
        return Err(Error::MalformedHeader(format!(
            "file is {} bytes, header needs {HEADER_LEN}",
            bytes.len()
        )));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::MalformedHeader("bad magic, expected HSR1".into()));
    }
    let word = |k: usize| u32::from_le_bytes(bytes[k..k + 4].try_into().expect("4 bytes"));
    let height = word(4) as usize;
    let width = word(8) as usize;
    let bands = word(12) as usize;
    if height == 0 || width == 0 || bands == 0 {
        return Err(Error::MalformedHeader(format!(
            "dimensions must be positive, got {height}x{width}x{bands}"
        )));
    }
    let voxels = height
        .checked_mul(width)
        .and_then(|n| n.checked_mul(bands))
        .ok_or_else(|| Error::MalformedHeader("dimensions overflow".into()))?;
    let expected = HEADER_LEN + voxels * 4;
    if bytes.len() < expected {
        return Err(Error::TruncatedPayload {
            expected: expected - HEADER_LEN,
            found: bytes.len() - HEADER_LEN,
        });
    }
    if bytes.len() > expected {
        return Err(Error::MalformedHeader(format!(
            "{} trailing bytes after payload",
            bytes.len() - expected
        )));
    }
    let mut stack = Vec::with_capacity(voxels);
    for (index, chunk) in bytes[HEADER_LEN..].chunks_exact(4).enumerate() {
        let f = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        if !f.is_finite() {
            return Err(Error::NonFinite {
                context: "cube payload",
                index,
            });
        }
        stack.push(S::from_f32(f).expect("finite f32 converts"));
    }
    let cube = cube_from_image_stack(height, width, bands, &stack)?;
    let meta = match fs::read(sidecar_path(path)) {
        Ok(json) => serde_json::from_slice(&json)?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => CubeMeta::default(),
        Err(e) => return Err(e.into()),
    };
    Ok((cube, meta))
}

/// Writes the JSON sidecar next to a cube file.
pub fn write_sidecar(cube_path: &Path, meta: &CubeMeta) -> Result<()> {
    let mut json = serde_json::to_vec_pretty(meta)?;
    json.push(b'\n');
    fs::write(sidecar_path(cube_path), json)?;
    Ok(())
}

/// Saves a noise model as a JSON array of variances.
pub fn save_noise<S: Scalar + Serialize>(path: &Path, noise: &NoiseModel<S>) -> Result<()> {
    let mut json = serde_json::to_vec(noise)?;
    json.push(b'\n');
    fs::write(path, json)?;
    Ok(())
}

/// Loads a noise model from a JSON array of variances.
pub fn load_noise<S: Scalar + for<'de> Deserialize<'de>>(path: &Path) -> Result<NoiseModel<S>> {
    let json = fs::read(path)?;
    let sigma2: Vec<S> = serde_json::from_slice(&json)?;
    NoiseModel::new(sigma2)
}

/// Loads endmember signatures from CSV: one row per band, one column per
/// endmember, `.` decimals, no header.
pub fn load_endmembers_csv<S: Scalar>(path: &Path) -> Result<Array2<S>> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<S>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<S> = line
            .split(',')
            .map(|cell| {
                cell.trim().parse::<f64>().map(S::from_f64_lossy).map_err(|_| {
                    Error::InvalidParameter(format!(
                        "line {}: '{}' is not a number",
                        lineno + 1,
                        cell.trim()
                    ))
                })
            })
            .collect::<Result<_>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::InvalidParameter(format!(
                    "line {}: {} columns, expected {}",
                    lineno + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::InvalidParameter("empty endmember file".into()));
    }
    let p = rows.len();
    let r = rows[0].len();
    let mut out = Array2::zeros((p, r));
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            out[[i, j]] = v;
        }
    }
    Ok(out)
}

/// Writes endmember signatures in the CSV layout accepted by
/// [`load_endmembers_csv`].
pub fn save_endmembers_csv<S: Scalar>(path: &Path, endmembers: &Array2<S>) -> Result<()> {
    let mut out = String::new();
    for i in 0..endmembers.nrows() {
        for j in 0..endmembers.ncols() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format!("{}", endmembers[[i, j]]));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Streams a risk surface as CSV with columns `r,lambda,sure,ed`.
pub fn surface_to_csv<S: Scalar, W: Write>(surface: &RiskSurface<S>, writer: &mut W) -> Result<()> {
    writer.write_all(b"r,lambda,sure,ed\n")?;
    for (i, &r) in surface.rank_grid.iter().enumerate() {
        for (j, &lam) in surface.lambda_grid.iter().enumerate() {
            writeln!(
                writer,
                "{},{},{},{}",
                r,
                lam,
                surface.risk[[i, j]],
                surface.ed[[i, j]]
            )?;
        }
    }
    Ok(())
}

/// JSON manifest written next to a persisted scene.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneManifest {
    pub config: SceneConfig,
    pub realized_snr_db: f64,
    /// Per-band noise variances.
    pub sigma2: Vec<f64>,
    /// `p x r` endmember matrix, row per band.
    pub endmembers: Vec<Vec<f64>>,
    pub clean_file: String,
    pub noisy_file: String,
}

/// Persists a scene as `<base>.clean.hsr`, `<base>.noisy.hsr` and
/// `<base>.json`, returning the written manifest.
pub fn save_scene<S: Scalar>(base: &Path, scene: &Scene<S>) -> Result<SceneManifest> {
    let with_suffix =
        |suffix: &str| -> PathBuf { PathBuf::from(format!("{}{}", base.display(), suffix)) };
    let clean_path = with_suffix(".clean.hsr");
    let noisy_path = with_suffix(".noisy.hsr");
    write_cube(&clean_path, &scene.clean)?;
    write_cube(&noisy_path, &scene.noisy)?;
    let manifest = SceneManifest {
        config: scene.config,
        realized_snr_db: scene.realized_snr_db,
        sigma2: scene
            .noise
            .variances()
            .iter()
            .map(|v| v.to_f64().expect("finite"))
            .collect(),
        endmembers: (0..scene.endmembers.nrows())
            .map(|i| {
                (0..scene.endmembers.ncols())
                    .map(|j| scene.endmembers[[i, j]].to_f64().expect("finite"))
                    .collect()
            })
            .collect(),
        clean_file: clean_path.display().to_string(),
        noisy_file: noisy_path.display().to_string(),
    };
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    fs::write(with_suffix(".json"), json)?;
    Ok(manifest)
}
