//! Synthetic rotating-object image sequence: an L-shaped glyph spinning
//! once around the image centre.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numcore::Matrix;
use crate::systems::Trajectory;

/// Sub-samples per pixel side used for anti-aliased coverage.
const SUPERSAMPLE: usize = 8;

/// Membership in the glyph, in coordinates where the image spans `[-1, 1]²`.
fn in_glyph(x: f64, y: f64) -> bool {
    let stem = (-0.5..=-0.2).contains(&x) && (-0.6..=0.6).contains(&y);
    let foot = (-0.5..=0.5).contains(&x) && (-0.6..=-0.3).contains(&y);
    stem || foot
}

/// Renders frame `t` of a `frames`-long revolution as a flattened
/// `image_px × image_px` grayscale image with coverage values in `[0, 1]`.
pub fn rotating_frame(image_px: usize, frames: usize, t: usize) -> Vec<f64> {
    let angle = 2.0 * PI * (t % frames) as f64 / frames as f64;
    let (s, c) = angle.sin_cos();
    let mut img = vec![0.0; image_px * image_px];
    let step = 2.0 / (image_px * SUPERSAMPLE) as f64;
    let norm = 1.0 / (SUPERSAMPLE * SUPERSAMPLE) as f64;
    for row in 0..image_px {
        for col in 0..image_px {
            let mut hits = 0usize;
            for sy in 0..SUPERSAMPLE {
                let y = 1.0 - step * ((row * SUPERSAMPLE + sy) as f64 + 0.5);
                for sx in 0..SUPERSAMPLE {
                    let x = -1.0 + step * ((col * SUPERSAMPLE + sx) as f64 + 0.5);
                    // rotate the sample point back into the glyph frame
                    let gx = c * x + s * y;
                    let gy = -s * x + c * y;
                    if in_glyph(gx, gy) {
                        hits += 1;
                    }
                }
            }
            img[row * image_px + col] = hits as f64 * norm;
        }
    }
    img
}

/// One full revolution in `frames` evenly spaced frames.
pub fn generate_rotating_sequence(image_px: usize, frames: usize) -> Result<Trajectory> {
    if image_px < 8 {
        return Err(Error::Config(format!("image_px must be at least 8, got {image_px}")));
    }
    if frames < 16 {
        return Err(Error::Config(format!("frames must be at least 16, got {frames}")));
    }
    let d = image_px * image_px;
    let mut data = Vec::with_capacity(frames * d);
    for t in 0..frames {
        data.extend(rotating_frame(image_px, frames, t));
    }
    Ok(Trajectory::new(Matrix::from_vec(frames, d, data)?, 0.0)?
        .with_meta("system", "rotating")
        .with_meta("image_px", image_px))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cyclic_closure() {
        assert_eq!(rotating_frame(16, 360, 0), rotating_frame(16, 360, 360));
    }

    #[test]
    fn mass_is_preserved() {
        let tr = generate_rotating_sequence(16, 64).unwrap();
        let masses: Vec<f64> = tr.states.iter_rows().map(|r| r.iter().sum()).collect();
        let m0 = masses[0];
        for m in &masses {
            assert!((m - m0).abs() / m0 < 0.02, "{m} vs {m0}");
        }
        assert!(tr.states.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn half_turn_differs() {
        let a = rotating_frame(16, 360, 0);
        let b = rotating_frame(16, 360, 180);
        let mse = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64;
        assert!(mse > 0.01, "mse {mse}");
    }

    #[test]
    fn size_validation() {
        assert!(generate_rotating_sequence(4, 100).is_err());
        assert!(generate_rotating_sequence(16, 8).is_err());
    }
}
