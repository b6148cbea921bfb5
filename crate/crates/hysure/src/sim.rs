//! Simulated-scene generation: linear mixtures with Dirichlet abundances and
//! band-dependent Gaussian noise at a controlled SNR.
//!
//! Endmembers are synthetic smooth spectra (random Gaussian bumps over a
//! random slope, peak-normalized) with enforced pairwise spectral angles;
//! user-supplied signature files can replace them. All randomness flows
//! through a seeded ChaCha generator, so scenes are bit-reproducible.

use crate::cube::{HsiCube, NoiseModel};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Minimum pairwise spectral angle between generated endmembers, degrees.
const MIN_ANGLE_DEG: f64 = 5.0;
/// Attempts per endmember before giving up on distinctness.
const MAX_ATTEMPTS_PER_ENDMEMBER: usize = 64;
/// Relative floor applied to the noise-variance profile so every band keeps a
/// strictly positive variance even when the profile underflows.
const PROFILE_FLOOR_REL: f64 = 1e-12;
/// Pixel-variability factor of the smooth abundance mode.
const SMOOTH_MODE_JITTER: f64 = 0.5;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from a base seed and tag path.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut state = splitmix64(base);
    for &t in tags {
        state = splitmix64(state ^ splitmix64(t));
    }
    state
}

fn rng_for(base: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, tags))
}

/// Abundance sampling mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AbundanceMode {
    /// Dirichlet(1,..,1) rows scaled by an independent Uniform(0.8, 1.0)
    /// factor, relaxing the sum-to-one constraint.
    Dirichlet,
    /// Plain Dirichlet(1,..,1) rows; each sums to one by construction.
    DirichletSum1,
    /// Spatially correlated abundances: per-endmember exponential fields are
    /// smoothed over the grid before per-pixel normalization, so rows still
    /// sum to one but vary smoothly across the scene.
    DirichletSmooth,
}

impl std::fmt::Display for AbundanceMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Self::Dirichlet => "dirichlet",
            Self::DirichletSum1 => "dirichlet-sum1",
            Self::DirichletSmooth => "dirichlet-smooth",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for AbundanceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dirichlet" => Ok(Self::Dirichlet),
            "dirichlet-sum1" => Ok(Self::DirichletSum1),
            "dirichlet-smooth" => Ok(Self::DirichletSmooth),
            other => Err(Error::InvalidParameter(format!(
                "unknown abundance mode '{other}' (expected dirichlet, dirichlet-sum1, or dirichlet-smooth)"
            ))),
        }
    }
}

/// Scene configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub rank: usize,
    pub mode: AbundanceMode,
    /// Shape of the Gaussian-in-band-index noise profile; 0 means uniform
    /// band noise.
    pub eta: f64,
    pub snr_db: f64,
    pub seed: u64,
}

impl SceneConfig {
    fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.bands == 0 {
            return Err(Error::InvalidParameter(
                "scene dimensions must be positive".into(),
            ));
        }
        if self
            .height
            .checked_mul(self.width)
            .and_then(|n| n.checked_mul(self.bands))
            .is_none()
        {
            return Err(Error::InvalidParameter("scene dimensions overflow".into()));
        }
        if self.rank == 0 || self.rank > self.bands {
            return Err(Error::RankOutOfRange {
                rank: self.rank,
                max: self.bands,
            });
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidParameter("eta must be finite and >= 0".into()));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::InvalidParameter("snr must be finite".into()));
        }
        Ok(())
    }
}

/// Simulated ground truth: mixture factors, clean and noisy cubes, and the
/// noise model that generated them.
#[derive(Debug, Clone)]
pub struct Scene<S> {
    /// `p x r` spectral signatures.
    pub endmembers: Array2<S>,
    /// `n x r` abundance fractions.
    pub abundances: Array2<S>,
    pub clean: HsiCube<S>,
    pub noisy: HsiCube<S>,
    pub noise: NoiseModel<S>,
    pub config: SceneConfig,
    pub realized_snr_db: f64,
}

/// `r` smooth, non-negative, peak-normalized spectra with pairwise spectral
/// angle of at least five degrees.
pub fn generate_endmembers<S: Scalar>(p: usize, r: usize, seed: u64) -> Result<Array2<S>> {
    if r == 0 || r > p {
        return Err(Error::RankOutOfRange { rank: r, max: p });
    }
    let mut rng = rng_for(seed, &[1]);
    let mut accepted: Vec<Vec<f64>> = Vec::with_capacity(r);
    let cos_limit = (MIN_ANGLE_DEG.to_radians()).cos();
    let budget = MAX_ATTEMPTS_PER_ENDMEMBER * r;
    let mut attempts = 0usize;
    while accepted.len() < r {
        attempts += 1;
        if attempts > budget {
            return Err(Error::EndmemberDistinctness {
                min_deg: MIN_ANGLE_DEG,
                attempts,
            });
        }
        let candidate = random_spectrum(p, &mut rng);
        let distinct = accepted.iter().all(|prev| {
            let dot: f64 = candidate.iter().zip(prev).map(|(a, b)| a * b).sum();
            let na: f64 = candidate.iter().map(|v| v * v).sum::<f64>().sqrt();
            let nb: f64 = prev.iter().map(|v| v * v).sum::<f64>().sqrt();
            dot / (na * nb) < cos_limit
        });
        if distinct {
            accepted.push(candidate);
        }
    }
    let mut out = Array2::zeros((p, r));
    for (j, spectrum) in accepted.iter().enumerate() {
        for (i, &v) in spectrum.iter().enumerate() {
            out[[i, j]] = S::from_f64_lossy(v);
        }
    }
    Ok(out)
}

/// A random slope plus three to six Gaussian bumps of assorted widths,
/// normalized to peak 1.
fn random_spectrum(p: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let base = rng.gen_range(0.1..0.4);
    let slope = rng.gen_range(-base..0.5);
    let mut spectrum: Vec<f64> = (0..p)
        .map(|i| base + slope * i as f64 / (p.max(2) - 1) as f64)
        .collect();
    let bumps = rng.gen_range(3..=6);
    for _ in 0..bumps {
        let center = rng.gen_range(0.0..p as f64);
        // Log-uniform widths: narrow bumps add fine structure, wide ones the
        // broad shape.
        let width = (rng.gen_range((1.5f64).ln()..(p as f64 / 6.0).max(2.0).ln())).exp();
        let amp = rng.gen_range(0.1..1.0);
        for (i, v) in spectrum.iter_mut().enumerate() {
            let z = (i as f64 - center) / width;
            *v += amp * (-0.5 * z * z).exp();
        }
    }
    let peak = spectrum.iter().cloned().fold(f64::MIN, f64::max);
    spectrum.iter_mut().for_each(|v| *v /= peak);
    spectrum
}

fn dirichlet_row(r: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    // Dirichlet(1,..,1) = normalized unit exponentials.
    let mut row: Vec<f64> = (0..r)
        .map(|_| {
            let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            -u.ln()
        })
        .collect();
    let total: f64 = row.iter().sum();
    row.iter_mut().for_each(|v| *v /= total);
    row
}

/// `n x r` abundance fractions.
///
/// Both Dirichlet modes draw rows independently per pixel; the smooth mode
/// needs the spatial shape and lives in [`generate_abundances_smooth`].
pub fn generate_abundances<S: Scalar>(
    n: usize,
    r: usize,
    mode: AbundanceMode,
    seed: u64,
) -> Result<Array2<S>> {
    if r == 0 {
        return Err(Error::InvalidParameter("need at least one endmember".into()));
    }
    if matches!(mode, AbundanceMode::DirichletSmooth) {
        return Err(Error::InvalidParameter(
            "dirichlet-smooth needs the spatial shape; use generate_abundances_smooth".into(),
        ));
    }
    let mut rng = rng_for(seed, &[2]);
    let mut out = Array2::zeros((n, r));
    for i in 0..n {
        let row = dirichlet_row(r, &mut rng);
        let scale = match mode {
            AbundanceMode::Dirichlet => rng.gen_range(0.8..1.0),
            _ => 1.0,
        };
        for (j, &v) in row.iter().enumerate() {
            out[[i, j]] = S::from_f64_lossy(v * scale);
        }
    }
    Ok(out)
}

/// Spatially correlated abundances on an `h x w` grid with per-pixel
/// variability: per-endmember unit exponential fields are box-blurred (three
/// passes) with the given radius, multiplied by an independent per-pixel
/// jitter factor `(1 - jitter) + jitter * Exp(1)`, then normalized per pixel
/// so each row sums to one. `jitter = 0` gives purely smooth maps; `jitter =
/// 1` gives full pixel variability over the smooth structure.
pub fn generate_abundances_smooth<S: Scalar>(
    height: usize,
    width: usize,
    r: usize,
    radius: usize,
    jitter: f64,
    seed: u64,
) -> Result<Array2<S>> {
    if r == 0 {
        return Err(Error::InvalidParameter("need at least one endmember".into()));
    }
    if !(0.0..=1.0).contains(&jitter) {
        return Err(Error::InvalidParameter(format!(
            "jitter must be in [0, 1], got {jitter}"
        )));
    }
    let mut rng = rng_for(seed, &[2]);
    let n = height * width;
    let mut fields: Vec<Vec<f64>> = Vec::with_capacity(r);
    for _ in 0..r {
        let mut field: Vec<f64> = (0..n)
            .map(|_| {
                let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                -u.ln()
            })
            .collect();
        for _ in 0..3 {
            box_blur(&mut field, height, width, radius);
        }
        if jitter > 0.0 {
            for v in field.iter_mut() {
                let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                *v *= (1.0 - jitter) + jitter * (-u.ln());
            }
        }
        fields.push(field);
    }
    let mut out = Array2::zeros((n, r));
    for i in 0..n {
        let total: f64 = fields.iter().map(|f| f[i]).sum();
        for (j, field) in fields.iter().enumerate() {
            out[[i, j]] = S::from_f64_lossy(field[i] / total);
        }
    }
    Ok(out)
}

/// Separable box blur with mirrored boundaries.
fn box_blur(field: &mut [f64], height: usize, width: usize, radius: usize) {
    if radius == 0 {
        return;
    }
    let reflect = |i: isize, len: usize| -> usize {
        let len = len as isize;
        let mut j = i.rem_euclid(2 * len);
        if j >= len {
            j = 2 * len - 1 - j;
        }
        j as usize
    };
    let norm = 1.0 / (2 * radius + 1) as f64;
    let mut scratch = vec![0.0f64; field.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for d in -(radius as isize)..=(radius as isize) {
                acc += field[y * width + reflect(x as isize + d, width)];
            }
            scratch[y * width + x] = acc * norm;
        }
    }
    for x in 0..width {
        for y in 0..height {
            let mut acc = 0.0;
            for d in -(radius as isize)..=(radius as isize) {
                acc += scratch[reflect(y as isize + d, height) * width + x];
            }
            field[y * width + x] = acc * norm;
        }
    }
}

/// Gaussian-in-band-index variance profile weights, floored and normalized to
/// sum exactly to one. `eta = 0` yields the uniform profile.
fn profile_weights(p: usize, eta: f64) -> Vec<f64> {
    let mut w: Vec<f64> = if eta == 0.0 {
        vec![1.0; p]
    } else {
        let center = p as f64 / 2.0;
        (0..p)
            .map(|i| {
                let d = (i + 1) as f64 - center;
                (-d * d / (2.0 * eta * eta)).exp()
            })
            .collect()
    };
    let max = w.iter().cloned().fold(f64::MIN, f64::max);
    let floor = PROFILE_FLOOR_REL * max;
    w.iter_mut().for_each(|v| *v = v.max(floor));
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Draws band-dependent Gaussian noise scaled so the realized SNR matches the
/// target exactly, and returns the matching noise model with the noisy cube.
pub fn band_noise_profile<S: Scalar>(
    eta: f64,
    snr_db: f64,
    clean: &HsiCube<S>,
    seed: u64,
) -> Result<(NoiseModel<S>, HsiCube<S>)> {
    let p = clean.bands();
    let n = clean.pixels();
    let signal_energy = clean
        .data()
        .iter()
        .map(|&v| {
            let f = v.to_f64().expect("finite");
            f * f
        })
        .sum::<f64>();
    if signal_energy <= 0.0 {
        return Err(Error::InvalidParameter(
            "cannot set an SNR on an all-zero signal".into(),
        ));
    }
    let weights = profile_weights(p, eta);
    let mut rng = rng_for(seed, &[3]);
    // Unit-scale draw shaped by the profile, then one global rescale to hit
    // the target SNR on this realization.
    let mut draw = vec![0.0f64; n * p];
    let mut draw_energy = 0.0f64;
    for (j, &wj) in weights.iter().enumerate() {
        let sd = wj.sqrt();
        for i in 0..n {
            let e: f64 = StandardNormal.sample(&mut rng);
            let v = sd * e;
            draw[j * n + i] = v;
            draw_energy += v * v;
        }
    }
    let target_ratio = 10f64.powf(snr_db / 10.0);
    let alpha_sq = signal_energy / (draw_energy * target_ratio);
    let alpha = alpha_sq.sqrt();
    let mut data = clean.data().clone();
    for j in 0..p {
        for i in 0..n {
            data[[i, j]] += S::from_f64_lossy(alpha * draw[j * n + i]);
        }
    }
    let sigma2: Vec<S> = weights
        .iter()
        .map(|&wj| S::from_f64_lossy(alpha_sq * wj))
        .collect();
    let noisy = HsiCube::from_parts(clean.height(), clean.width(), data);
    Ok((NoiseModel::new(sigma2)?, noisy))
}

/// Signal-to-noise ratio in decibels from energy terms.
pub fn snr_db_from_energies(signal_energy: f64, noise_energy: f64) -> f64 {
    10.0 * (signal_energy / noise_energy).log10()
}

/// Generates a complete scene, deterministically from the seed.
pub fn simulate_scene<S: Scalar>(config: &SceneConfig) -> Result<Scene<S>> {
    simulate_scene_with(config, None)
}

/// Like [`simulate_scene`] but with caller-supplied endmember signatures
/// (`p x r`, one column per endmember).
pub fn simulate_scene_with<S: Scalar>(
    config: &SceneConfig,
    endmembers: Option<Array2<S>>,
) -> Result<Scene<S>> {
    config.validate()?;
    let n = config.height * config.width;
    let endmembers = match endmembers {
        Some(e) => {
            if e.nrows() != config.bands || e.ncols() != config.rank {
                return Err(Error::DimensionMismatch(format!(
                    "endmember matrix is {}x{}, expected {}x{}",
                    e.nrows(),
                    e.ncols(),
                    config.bands,
                    config.rank
                )));
            }
            e
        }
        None => generate_endmembers(config.bands, config.rank, config.seed)?,
    };
    let abundances = match config.mode {
        AbundanceMode::DirichletSmooth => {
            let radius = (config.height.min(config.width) / 16).max(2);
            generate_abundances_smooth(
                config.height,
                config.width,
                config.rank,
                radius,
                SMOOTH_MODE_JITTER,
                config.seed,
            )?
        }
        mode => generate_abundances(n, config.rank, mode, config.seed)?,
    };
    let clean_data = abundances.dot(&endmembers.t());
    let clean = HsiCube::new(config.height, config.width, clean_data)?;
    let (noise, noisy) = band_noise_profile(config.eta, config.snr_db, &clean, config.seed)?;
    let noise_energy = noisy
        .data()
        .iter()
        .zip(clean.data().iter())
        .map(|(&y, &x)| {
            let d = (y - x).to_f64().expect("finite");
            d * d
        })
        .sum::<f64>();
    let realized_snr_db = snr_db_from_energies(
        clean
            .data()
            .iter()
            .map(|&v| {
                let f = v.to_f64().expect("finite");
                f * f
            })
            .sum(),
        noise_energy,
    );
    Ok(Scene {
        endmembers,
        abundances,
        clean,
        noisy,
        noise,
        config: *config,
        realized_snr_db,
    })
}
