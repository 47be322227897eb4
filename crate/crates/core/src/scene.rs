//! Hyperspectral image data model, synthetic scene generation, SNR-controlled
//! noise, and file I/O (HSIF binary cubes, CSV signatures/abundances).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Observed cube: `L x N` matrix with spatial dims, pixels row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HsImage {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    /// `bands x (height*width)`.
    pub data: Array2<f64>,
}

impl HsImage {
    pub fn new(height: usize, width: usize, data: Array2<f64>) -> Result<Self> {
        let (bands, n) = data.dim();
        if n != height * width {
            return Err(Error::ShapeMismatch(format!(
                "pixel count {n} != {height}x{width}"
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image data".into()));
        }
        Ok(HsImage { height, width, bands, data })
    }

    pub fn num_pixels(&self) -> usize {
        self.height * self.width
    }
}

/// True signatures and abundances of a synthetic scene.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// `L x M`.
    pub signatures: Array2<f64>,
    /// `M x N`; columns on the probability simplex.
    pub abundances: Array2<f64>,
}

impl GroundTruth {
    pub fn validate(&self) -> Result<()> {
        if self.signatures.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidArgument("negative ground-truth signature".into()));
        }
        for (j, col) in self.abundances.columns().into_iter().enumerate() {
            let s: f64 = col.sum();
            if (s - 1.0).abs() > 1e-6 || col.iter().any(|&v| v < 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "abundance column {j} violates ANC/ASC (sum {s})"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NoiseSpec {
    /// `f64::INFINITY` is the no-noise sentinel.
    pub snr_db: f64,
    pub seed: u64,
}

/// Knobs of the synthetic abundance recipe. The defaults are the documented
/// generation settings; tests pin them explicitly where it matters.
#[derive(Debug, Clone, Copy)]
pub struct SceneParams {
    /// Worley seed points scattered per endmember class.
    pub seeds_per_class: usize,
    /// Sharpening exponent on inverse-distance scores.
    pub gamma: f64,
    /// Fraction blended in from a Dirichlet(1) field for within-region mixing.
    pub dirichlet_blend: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams { seeds_per_class: 3, gamma: 3.0, dirichlet_blend: 0.2 }
    }
}

/// Smooth random spectra: sums of three Gaussian bumps over the band index,
/// rejected until pairwise spectral angles are at least 0.15 rad.
pub fn default_library(m: usize, l: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut lib = Array2::<f64>::zeros((l, m));
    let mut col = 0;
    let mut attempts = 0;
    while col < m {
        attempts += 1;
        let mut s = vec![0.05; l];
        for _ in 0..3 {
            let center = rng.gen_range(0.0..l as f64);
            let width = rng.gen_range(l as f64 / 20.0..l as f64 / 4.0);
            let amp = rng.gen_range(0.2..1.0);
            for (i, v) in s.iter_mut().enumerate() {
                let d = (i as f64 - center) / width;
                *v += amp * (-0.5 * d * d).exp();
            }
        }
        let ok = (0..col).all(|j| {
            let other: Vec<f64> = (0..l).map(|i| lib[[i, j]]).collect();
            spectral_angle(&s, &other) >= 0.15
        });
        if ok || attempts > 10_000 {
            for i in 0..l {
                lib[[i, col]] = s[i];
            }
            col += 1;
            attempts = 0;
        }
    }
    lib
}

fn spectral_angle(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(-1.0 + 1e-12, 1.0 - 1e-12).acos()
}

fn dirichlet_uniform(m: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    // Dirichlet(1,...,1) via normalized unit-rate exponentials.
    let mut v: Vec<f64> = (0..m)
        .map(|_| -f64::ln(1.0 - rng.gen_range(0.0..1.0)))
        .collect();
    let s: f64 = v.iter().sum();
    for x in &mut v {
        *x /= s;
    }
    v
}

/// Generate a noiseless scene: Worley cellular-distance abundance fields
/// blended with a Dirichlet sample field, mixed through the linear model.
pub fn synth_scene(
    m: usize,
    l: usize,
    height: usize,
    width: usize,
    seed: u64,
    library: Option<ArrayView2<f64>>,
    params: &SceneParams,
) -> Result<(HsImage, GroundTruth)> {
    if m < 2 {
        return Err(Error::InvalidArgument("need at least two endmembers".into()));
    }
    if l < m {
        return Err(Error::InvalidArgument(format!("bands {l} < endmembers {m}")));
    }
    if height == 0 || width == 0 {
        return Err(Error::InvalidArgument("empty spatial extent".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let signatures = match library {
        Some(lib) => {
            let (ll, lm) = lib.dim();
            if lm != m || ll != l {
                return Err(Error::ShapeMismatch(format!(
                    "library {ll}x{lm}, expected {l}x{m}"
                )));
            }
            lib.to_owned()
        }
        None => default_library(m, l, &mut rng),
    };

    // One seed-point set per class, on pixel centers so each class owns at
    // least one near-pure pixel. Seed points are kept distinct across classes.
    let mut taken = std::collections::HashSet::new();
    let mut class_seeds: Vec<Vec<(f64, f64)>> = Vec::with_capacity(m);
    for _ in 0..m {
        let mut pts = Vec::with_capacity(params.seeds_per_class.max(1));
        while pts.len() < params.seeds_per_class.max(1) {
            let r = rng.gen_range(0..height);
            let c = rng.gen_range(0..width);
            if taken.len() < height * width && !taken.insert((r, c)) {
                continue;
            }
            pts.push((r as f64, c as f64));
        }
        class_seeds.push(pts);
    }

    let n = height * width;
    let mut abundances = Array2::<f64>::zeros((m, n));
    let eps = 1e-3;
    for r in 0..height {
        for c in 0..width {
            let k = r * width + c;
            let mut scores = vec![0.0; m];
            for (cls, pts) in class_seeds.iter().enumerate() {
                let mut best = f64::INFINITY;
                for &(sr, sc) in pts {
                    let d = ((r as f64 - sr).powi(2) + (c as f64 - sc).powi(2)).sqrt();
                    if d < best {
                        best = d;
                    }
                }
                scores[cls] = (1.0 / (best + eps)).powf(params.gamma);
            }
            let total: f64 = scores.iter().sum();
            let dir = dirichlet_uniform(m, &mut rng);
            let blend = params.dirichlet_blend.clamp(0.0, 1.0);
            let mut sum = 0.0;
            for i in 0..m {
                let a = (1.0 - blend) * scores[i] / total + blend * dir[i];
                abundances[[i, k]] = a;
                sum += a;
            }
            for i in 0..m {
                abundances[[i, k]] /= sum;
            }
        }
    }

    let data = signatures.dot(&abundances);
    let img = HsImage::new(height, width, data)?;
    let gt = GroundTruth { signatures, abundances };
    gt.validate()?;
    Ok((img, gt))
}

/// Add white Gaussian noise at the requested SNR; infinite SNR is a no-op.
pub fn add_noise(img: &HsImage, spec: &NoiseSpec) -> Result<HsImage> {
    if spec.snr_db.is_nan() {
        return Err(Error::InvalidArgument("snr_db must not be NaN".into()));
    }
    if spec.snr_db.is_infinite() && spec.snr_db > 0.0 {
        return Ok(img.clone());
    }
    let signal_power = img.data.iter().map(|&v| v * v).sum::<f64>() / img.data.len() as f64;
    let noise_power = signal_power / 10f64.powf(spec.snr_db / 10.0);
    let sigma = noise_power.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut data = img.data.clone();
    // Box-Muller; pairs drawn in deterministic iteration order.
    let mut cache: Option<f64> = None;
    for v in data.iter_mut() {
        let z = match cache.take() {
            Some(z) => z,
            None => {
                let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
                let u2: f64 = rng.gen_range(0.0..1.0);
                let mag = (-2.0 * u1.ln()).sqrt();
                let ang = 2.0 * std::f64::consts::PI * u2;
                cache = Some(mag * ang.sin());
                mag * ang.cos()
            }
        };
        *v += sigma * z;
    }
    HsImage::new(img.height, img.width, data)
}

const HSIF_MAGIC: &[u8; 4] = b"HSIF";

/// Write the HSIF binary format: magic, little-endian u32 height/width/bands,
/// then float32 payload band-interleaved-by-pixel, pixels row-major.
pub fn save_image(img: &HsImage, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(HSIF_MAGIC)?;
    w.write_all(&(img.height as u32).to_le_bytes())?;
    w.write_all(&(img.width as u32).to_le_bytes())?;
    w.write_all(&(img.bands as u32).to_le_bytes())?;
    for p in 0..img.num_pixels() {
        for b in 0..img.bands {
            w.write_all(&(img.data[[b, p]] as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_image(path: &Path) -> Result<HsImage> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("truncated header".into()))?;
    if &magic != HSIF_MAGIC {
        return Err(Error::Format("bad magic, not an HSIF file".into()));
    }
    let mut u32buf = [0u8; 4];
    let mut dims = [0usize; 3];
    for d in &mut dims {
        r.read_exact(&mut u32buf)
            .map_err(|_| Error::Format("truncated header".into()))?;
        *d = u32::from_le_bytes(u32buf) as usize;
    }
    let [height, width, bands] = dims;
    let n = height
        .checked_mul(width)
        .and_then(|n| n.checked_mul(bands))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format("dimension overflow".into()))?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() != n {
        return Err(Error::Format(format!(
            "payload size {} does not match header ({} expected)",
            payload.len(),
            n
        )));
    }
    let np = height * width;
    let mut data = Array2::<f64>::zeros((bands, np));
    for p in 0..np {
        for b in 0..bands {
            let off = (p * bands + b) * 4;
            let v = f32::from_le_bytes(payload[off..off + 4].try_into().unwrap());
            data[[b, p]] = v as f64;
        }
    }
    HsImage::new(height, width, data)
}

/// CSV with one column per endmember (or per pixel for abundances), one row
/// per band.
pub fn save_matrix_csv(m: ArrayView2<f64>, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.12e}", m[[i, j]])).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut cols = 0;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|tok| {
                tok.trim().parse::<f64>().map_err(|e| Error::Parse {
                    line: lineno + 1,
                    msg: format!("bad number '{tok}': {e}"),
                })
            })
            .collect::<Result<_>>()?;
        if rows.is_empty() {
            cols = row.len();
        } else if row.len() != cols {
            return Err(Error::Parse {
                line: lineno + 1,
                msg: format!("ragged row: {} values, expected {cols}", row.len()),
            });
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Format("no data in CSV".into()));
    }
    let nrows = rows.len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((nrows, cols), flat)
        .map_err(|e| Error::Format(format!("csv shape: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn synth_scene_satisfies_anc_asc_and_lmm() {
        let (img, gt) =
            synth_scene(3, 20, 8, 9, 7, None, &SceneParams::default()).unwrap();
        gt.validate().unwrap();
        let rec = gt.signatures.dot(&gt.abundances);
        let max_err = (&rec - &img.data).iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        assert!(max_err < 1e-12);
    }

    #[test]
    fn synth_scene_is_seed_reproducible() {
        let a = synth_scene(3, 16, 6, 6, 11, None, &SceneParams::default()).unwrap();
        let b = synth_scene(3, 16, 6, 6, 11, None, &SceneParams::default()).unwrap();
        assert_eq!(a.0.data, b.0.data);
        assert_eq!(a.1.abundances, b.1.abundances);
    }

    #[test]
    fn paper_scale_dimensions_are_accepted() {
        let (img, _) = synth_scene(4, 144, 90, 90, 1, None, &SceneParams::default()).unwrap();
        assert_eq!((img.bands, img.height, img.width), (144, 90, 90));
    }

    #[test]
    fn zero_blend_scene_contains_near_pure_pixels() {
        let params = SceneParams { dirichlet_blend: 0.0, ..SceneParams::default() };
        let (_, gt) = synth_scene(3, 20, 12, 12, 5, None, &params).unwrap();
        for i in 0..3 {
            let best = gt.abundances.row(i).iter().cloned().fold(0.0f64, f64::max);
            assert!(best > 1.0 - 1e-6, "class {i} max abundance {best}");
        }
    }

    #[test]
    fn infinite_snr_is_identity() {
        let (img, _) = synth_scene(2, 8, 4, 4, 3, None, &SceneParams::default()).unwrap();
        let noisy = add_noise(&img, &NoiseSpec { snr_db: f64::INFINITY, seed: 1 }).unwrap();
        assert_eq!(noisy.data, img.data);
    }

    #[test]
    fn zero_db_noise_power_matches_signal_power() {
        let (img, _) = synth_scene(3, 60, 50, 50, 3, None, &SceneParams::default()).unwrap();
        let noisy = add_noise(&img, &NoiseSpec { snr_db: 0.0, seed: 9 }).unwrap();
        let signal_power = img.data.iter().map(|&v| v * v).sum::<f64>() / img.data.len() as f64;
        let noise_power = (&noisy.data - &img.data).iter().map(|&v| v * v).sum::<f64>()
            / img.data.len() as f64;
        assert!((noise_power / signal_power - 1.0).abs() < 0.01);
    }

    #[test]
    fn measured_snr_within_tolerance() {
        // N*L >= 1e5 samples; empirical SNR within +-0.2 dB of target.
        let (img, _) = synth_scene(3, 64, 40, 40, 4, None, &SceneParams::default()).unwrap();
        assert!(img.data.len() >= 100_000);
        for target in [20.0, 10.0, 5.0] {
            let noisy = add_noise(&img, &NoiseSpec { snr_db: target, seed: 21 }).unwrap();
            let sp = img.data.iter().map(|&v| v * v).sum::<f64>();
            let np = (&noisy.data - &img.data).iter().map(|&v| v * v).sum::<f64>();
            let snr = 10.0 * (sp / np).log10();
            assert!((snr - target).abs() < 0.2, "target {target} got {snr}");
        }
    }

    #[test]
    fn noise_is_seed_reproducible() {
        let (img, _) = synth_scene(2, 10, 5, 5, 2, None, &SceneParams::default()).unwrap();
        let a = add_noise(&img, &NoiseSpec { snr_db: 10.0, seed: 77 }).unwrap();
        let b = add_noise(&img, &NoiseSpec { snr_db: 10.0, seed: 77 }).unwrap();
        assert_eq!(a.data, b.data);
    }

    #[test]
    fn hsif_round_trip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("cube.hsif");
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = Array2::from_shape_fn((8, 16), |_| rng.gen_range(0.0f32..1.0) as f64);
        let img = HsImage::new(4, 4, data).unwrap();
        save_image(&img, &path).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(back.data, img.data);
        assert_eq!((back.height, back.width, back.bands), (4, 4, 8));
    }

    #[test]
    fn truncated_hsif_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("cube.hsif");
        let img = HsImage::new(2, 2, Array2::zeros((3, 4))).unwrap();
        save_image(&img, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        let err = load_image(&path).unwrap_err();
        assert!(err.to_string().contains("payload"), "{err}");
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("cube.hsif");
        std::fs::write(&path, b"NOPE\x01\x00\x00\x00").unwrap();
        assert!(load_image(&path).unwrap_err().to_string().contains("magic"));
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("sig.csv");
        let m = ndarray::array![[1.0, 2.0], [0.25, -3.5], [1e-9, 4.0]];
        save_matrix_csv(m.view(), &path).unwrap();
        let back = load_matrix_csv(&path).unwrap();
        for (a, b) in m.iter().zip(back.iter()) {
            assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
        }
        std::fs::write(&path, "1,2\n3\n").unwrap();
        match load_matrix_csv(&path).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected error {e}"),
        }
        std::fs::write(&path, "").unwrap();
        assert!(load_matrix_csv(&path).unwrap_err().to_string().contains("no data"));
    }
}
