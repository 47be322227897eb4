//! Neighbor-pixel selection for the attention neighborhood.
//!
//! Three configurations at integer size levels: a filled circle, a doughnut
//! ring, and offsets drawn from a rounded 2-D normal. Offsets never include
//! (0, 0); out-of-bounds neighbors clamp to the image edge.

use std::collections::HashSet;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::HsImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NbhdShape {
    Doughnut,
    Circle,
    RandomNormal,
}

impl std::str::FromStr for NbhdShape {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "doughnut" => Ok(NbhdShape::Doughnut),
            "circle" => Ok(NbhdShape::Circle),
            "random_normal" | "randomnormal" | "random-normal" => Ok(NbhdShape::RandomNormal),
            other => Err(Error::Config(format!("unknown neighborhood shape '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodSpec {
    pub shape: NbhdShape,
    pub level: u32,
    pub seed: u64,
}

impl NeighborhoodSpec {
    pub fn circle(level: u32) -> Self {
        NeighborhoodSpec { shape: NbhdShape::Circle, level, seed: 0 }
    }

    /// Parse `shape=circle,level=4,seed=7`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut shape = None;
        let mut level = None;
        let mut seed = 0u64;
        for part in text.split(',') {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("bad neighborhood token '{part}'")))?;
            match k.trim() {
                "shape" => shape = Some(v.trim().parse()?),
                "level" => {
                    level = Some(v.trim().parse::<u32>().map_err(|e| {
                        Error::Config(format!("bad neighborhood level '{v}': {e}"))
                    })?)
                }
                "seed" => {
                    seed = v.trim().parse::<u64>().map_err(|e| {
                        Error::Config(format!("bad neighborhood seed '{v}': {e}"))
                    })?
                }
                other => return Err(Error::Config(format!("unknown neighborhood key '{other}'"))),
            }
        }
        let shape = shape.ok_or_else(|| Error::Config("neighborhood shape missing".into()))?;
        let level = level.ok_or_else(|| Error::Config("neighborhood level missing".into()))?;
        if level == 0 {
            return Err(Error::Config("neighborhood level must be >= 1".into()));
        }
        Ok(NeighborhoodSpec { shape, level, seed })
    }
}

fn ring_offsets(r: i64, inner_sq_exclusive: i64) -> Vec<(i64, i64)> {
    let r_sq = r * r;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            let d = dy * dy + dx * dx;
            if d > inner_sq_exclusive && d <= r_sq {
                out.push((dy, dx));
            }
        }
    }
    out
}

/// Offset list for a spec. Deterministic: fixed for Circle/Doughnut,
/// seed-reproducible for RandomNormal.
pub fn neighbor_offsets(spec: &NeighborhoodSpec) -> Result<Vec<(i64, i64)>> {
    if spec.level == 0 {
        return Err(Error::InvalidArgument("neighborhood level must be >= 1".into()));
    }
    let r = spec.level as i64;
    match spec.shape {
        NbhdShape::Circle => Ok(ring_offsets(r, 0)),
        NbhdShape::Doughnut => Ok(ring_offsets(r, (r - 1) * (r - 1))),
        NbhdShape::RandomNormal => {
            // Same neighbor count as the circle at this level.
            let target = ring_offsets(r, 0).len();
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let mut sigma = spec.level as f64 / 2.0;
            let mut chosen: Vec<(i64, i64)> = Vec::new();
            let mut seen: HashSet<(i64, i64)> = HashSet::new();
            let mut draws = 0u32;
            while chosen.len() < target {
                // Box-Muller pair for a rounded 2-D normal offset.
                let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
                let u2: f64 = rng.gen_range(0.0..1.0);
                let mag = (-2.0 * u1.ln()).sqrt();
                let dy = (sigma * mag * (2.0 * std::f64::consts::PI * u2).cos()).round() as i64;
                let dx = (sigma * mag * (2.0 * std::f64::consts::PI * u2).sin()).round() as i64;
                draws += 1;
                if draws >= 10_000 {
                    sigma *= 1.5;
                    draws = 0;
                }
                if (dy, dx) == (0, 0) || seen.contains(&(dy, dx)) {
                    continue;
                }
                seen.insert((dy, dx));
                chosen.push((dy, dx));
            }
            Ok(chosen)
        }
    }
}

/// Stack the neighbor rows of pixel `k` (row-major index) into an
/// `offsets.len() x L` matrix. Coordinates clamp to the image edge.
pub fn gather_neighbors(img: &HsImage, k: usize, offsets: &[(i64, i64)]) -> Result<Array2<f64>> {
    let n = img.num_pixels();
    if k >= n {
        return Err(Error::InvalidArgument(format!("pixel index {k} out of range {n}")));
    }
    let (h, w) = (img.height as i64, img.width as i64);
    let row = (k / img.width) as i64;
    let col = (k % img.width) as i64;
    let l = img.bands;
    let mut out = Array2::<f64>::zeros((offsets.len(), l));
    for (idx, &(dy, dx)) in offsets.iter().enumerate() {
        let r = (row + dy).clamp(0, h - 1) as usize;
        let c = (col + dx).clamp(0, w - 1) as usize;
        let p = r * img.width + c;
        for b in 0..l {
            out[[idx, b]] = img.data[[b, p]];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn circle_level_one_is_the_four_neighborhood() {
        let mut offs = neighbor_offsets(&NeighborhoodSpec::circle(1)).unwrap();
        offs.sort();
        assert_eq!(offs, vec![(-1, 0), (0, -1), (0, 1), (1, 0)]);
    }

    #[test]
    fn doughnut_level_one_equals_circle_level_one() {
        let c = neighbor_offsets(&NeighborhoodSpec::circle(1)).unwrap();
        let d = neighbor_offsets(&NeighborhoodSpec {
            shape: NbhdShape::Doughnut,
            level: 1,
            seed: 0,
        })
        .unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn circle_level_two_has_twelve_offsets() {
        let offs = neighbor_offsets(&NeighborhoodSpec::circle(2)).unwrap();
        assert_eq!(offs.len(), 12);
        for (dy, dx) in offs {
            let d = dy * dy + dx * dx;
            assert!(d == 1 || d == 2 || d == 4);
        }
    }

    #[test]
    fn random_normal_count_matches_circle_and_is_seed_stable() {
        let spec = NeighborhoodSpec { shape: NbhdShape::RandomNormal, level: 3, seed: 42 };
        let a = neighbor_offsets(&spec).unwrap();
        let b = neighbor_offsets(&spec).unwrap();
        let circle = neighbor_offsets(&NeighborhoodSpec::circle(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), circle.len());
        assert!(!a.contains(&(0, 0)));
        let unique: std::collections::HashSet<_> = a.iter().collect();
        assert_eq!(unique.len(), a.len());
    }

    fn ramp_image() -> HsImage {
        // 3x3, single band, value = pixel index.
        let data = Array2::from_shape_fn((1, 9), |(_, j)| j as f64);
        HsImage::new(3, 3, data).unwrap()
    }

    #[test]
    fn interior_pixel_of_constant_image_gathers_itself() {
        let data = Array2::from_elem((2, 9), 3.5);
        let img = HsImage::new(3, 3, data).unwrap();
        let offs = neighbor_offsets(&NeighborhoodSpec::circle(1)).unwrap();
        let eta = gather_neighbors(&img, 4, &offs).unwrap();
        assert!(eta.iter().all(|&v| v == 3.5));
    }

    #[test]
    fn corner_pixel_clamps_to_edge() {
        let img = ramp_image();
        let mut offs = neighbor_offsets(&NeighborhoodSpec::circle(1)).unwrap();
        offs.sort();
        // offsets sorted: (-1,0),(0,-1),(0,1),(1,0); at pixel 0 the first two clamp to 0.
        let eta = gather_neighbors(&img, 0, &offs).unwrap();
        assert_eq!(eta[[0, 0]], 0.0);
        assert_eq!(eta[[1, 0]], 0.0);
        assert_eq!(eta[[2, 0]], 1.0);
        assert_eq!(eta[[3, 0]], 3.0);
    }

    #[test]
    fn center_pixel_of_ramp_gathers_four_neighbors() {
        let img = ramp_image();
        let mut offs = neighbor_offsets(&NeighborhoodSpec::circle(1)).unwrap();
        offs.sort();
        let eta = gather_neighbors(&img, 4, &offs).unwrap();
        assert_eq!(eta[[0, 0]], 1.0);
        assert_eq!(eta[[1, 0]], 3.0);
        assert_eq!(eta[[2, 0]], 5.0);
        assert_eq!(eta[[3, 0]], 7.0);
    }

    #[test]
    fn spec_parser_round_trips_cli_syntax() {
        let s = NeighborhoodSpec::parse("shape=circle,level=4,seed=7").unwrap();
        assert_eq!(s.shape, NbhdShape::Circle);
        assert_eq!(s.level, 4);
        assert_eq!(s.seed, 7);
        assert!(NeighborhoodSpec::parse("shape=circle,level=0").is_err());
        assert!(NeighborhoodSpec::parse("shape=blob,level=1").is_err());
        assert!(NeighborhoodSpec::parse("size=3").is_err());
    }
}
