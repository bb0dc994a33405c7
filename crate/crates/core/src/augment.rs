//! Random rotations, horizontal flips and horizontal/vertical shifts.
//!
//! [`augment`] applies flip, then rotation, then shift, always consuming the
//! same number of draws from the generator so augmented streams stay aligned
//! across runs.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::Image;

#[derive(Debug, Error, PartialEq)]
pub enum AugmentError {
    #[error("shift ({dx}, {dy}) out of range for a {height}x{width} image")]
    ShiftOutOfRange { dx: i64, dy: i64, height: usize, width: usize },
    #[error("invalid augmentation parameter: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    pub max_rotation_deg: f64,
    /// Maximum shift as a fraction of the image side, in `[0, 1)`.
    pub max_shift_frac: f64,
    pub hflip_prob: f64,
    /// Intensity written into pixels uncovered by a rotation or shift.
    pub fill_value: f64,
}

impl Default for AugmentParams {
    fn default() -> Self {
        AugmentParams { max_rotation_deg: 20.0, max_shift_frac: 0.1, hflip_prob: 0.5, fill_value: 1.0 }
    }
}

impl AugmentParams {
    /// Parameters under which [`augment`] is the identity.
    pub fn identity() -> Self {
        AugmentParams { max_rotation_deg: 0.0, max_shift_frac: 0.0, hflip_prob: 0.0, fill_value: 1.0 }
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        let bad = |m: &str| Err(AugmentError::InvalidParams(m.to_string()));
        if !(self.max_rotation_deg.is_finite() && self.max_rotation_deg >= 0.0) {
            return bad("max_rotation_deg must be finite and >= 0");
        }
        if !(0.0..1.0).contains(&self.max_shift_frac) {
            return bad("max_shift_frac must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.hflip_prob) {
            return bad("hflip_prob must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.fill_value) {
            return bad("fill_value must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Reverses the column order of every row.
pub fn hflip(img: &Image) -> Image {
    let (h, w, ch) = (img.height(), img.width(), img.channels());
    let mut data = Vec::with_capacity(img.data().len());
    for r in 0..h {
        for c in (0..w).rev() {
            data.extend_from_slice(img.pixel(r, c));
        }
    }
    Image::from_vec(h, w, ch, data).expect("same shape")
}

/// Integer translation: content moves `dx` columns right and `dy` rows down.
pub fn shift(img: &Image, dx: i64, dy: i64, fill: f64) -> Result<Image, AugmentError> {
    let (h, w, ch) = (img.height(), img.width(), img.channels());
    if dx.unsigned_abs() as usize >= w || dy.unsigned_abs() as usize >= h {
        return Err(AugmentError::ShiftOutOfRange { dx, dy, height: h, width: w });
    }
    let mut out = Image::filled(h, w, ch, fill.clamp(0.0, 1.0)).expect("valid shape");
    for r in 0..h as i64 {
        let sr = r - dy;
        if sr < 0 || sr >= h as i64 {
            continue;
        }
        for c in 0..w as i64 {
            let sc = c - dx;
            if sc < 0 || sc >= w as i64 {
                continue;
            }
            out.pixel_mut(r as usize, c as usize).copy_from_slice(img.pixel(sr as usize, sc as usize));
        }
    }
    Ok(out)
}

/// Rotation by `angle_deg` (counter-clockwise on screen) about the image
/// centre, with bilinear resampling. Samples falling outside the source take
/// the `fill` value.
pub fn rotate(img: &Image, angle_deg: f64, fill: f64) -> Image {
    if angle_deg == 0.0 {
        return img.clone();
    }
    let (h, w, ch) = (img.height(), img.width(), img.channels());
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let (s, c) = angle_deg.to_radians().sin_cos();
    let fill = fill.clamp(0.0, 1.0);
    let mut out = Image::filled(h, w, ch, fill).expect("valid shape");
    let (hmax, wmax) = (h as f64 - 1.0, w as f64 - 1.0);
    for r in 0..h {
        for col in 0..w {
            let (y, x) = (r as f64 - cy, col as f64 - cx);
            // inverse map: rows grow downwards, so screen-CCW uses this sign pattern
            let sx = c * x - s * y + cx;
            let sy = s * x + c * y + cy;
            if !(sx >= -1e-9 && sy >= -1e-9 && sx <= wmax + 1e-9 && sy <= hmax + 1e-9) {
                continue;
            }
            let sx = sx.clamp(0.0, wmax);
            let sy = sy.clamp(0.0, hmax);
            let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
            let px = out.pixel_mut(r, col);
            for k in 0..ch {
                let top = img.get(y0, x0, k) * (1.0 - fx) + img.get(y0, x1, k) * fx;
                let bot = img.get(y1, x0, k) * (1.0 - fx) + img.get(y1, x1, k) * fx;
                px[k] = (top * (1.0 - fy) + bot * fy).clamp(0.0, 1.0);
            }
        }
    }
    out
}

/// The random draws behind one call of [`augment`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentDraw {
    pub flip: bool,
    pub angle_deg: f64,
    pub dx: i64,
    pub dy: i64,
}

impl AugmentDraw {
    pub fn sample<R: Rng + ?Sized>(params: &AugmentParams, width: usize, height: usize, rng: &mut R) -> Self {
        let flip = rng.random::<f64>() < params.hflip_prob;
        let angle_deg = params.max_rotation_deg * (2.0 * rng.random::<f64>() - 1.0);
        let max_dx = (width as f64 * params.max_shift_frac).floor() as i64;
        let max_dy = (height as f64 * params.max_shift_frac).floor() as i64;
        let dx = rng.random_range(-max_dx..=max_dx);
        let dy = rng.random_range(-max_dy..=max_dy);
        AugmentDraw { flip, angle_deg, dx, dy }
    }

    pub fn apply(&self, img: &Image, fill: f64) -> Image {
        let flipped = if self.flip { hflip(img) } else { img.clone() };
        let rotated = rotate(&flipped, self.angle_deg, fill);
        if self.dx == 0 && self.dy == 0 {
            rotated
        } else {
            shift(&rotated, self.dx, self.dy, fill).expect("draw bounded by max_shift_frac < 1")
        }
    }
}

/// Draws a flip, an angle and a shift from `rng` and applies them in that order.
pub fn augment<R: Rng + ?Sized>(img: &Image, params: &AugmentParams, rng: &mut R) -> Image {
    AugmentDraw::sample(params, img.width(), img.height(), rng).apply(img, params.fill_value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use proptest::prelude::*;

    fn gradient_image(h: usize, w: usize, ch: usize) -> Image {
        let data = (0..h * w * ch).map(|i| (i % 17) as f64 / 16.0).collect();
        Image::from_vec(h, w, ch, data).unwrap()
    }

    #[test]
    fn hflip_row_and_involution() {
        let img = Image::from_vec(1, 3, 1, vec![0.1, 0.2, 0.3]).unwrap();
        assert_eq!(hflip(&img).data(), &[0.3, 0.2, 0.1]);
        let rgb = gradient_image(4, 5, 3);
        assert_eq!(hflip(&hflip(&rgb)), rgb);
        let sym = Image::from_vec(1, 3, 1, vec![0.4, 0.9, 0.4]).unwrap();
        assert_eq!(hflip(&sym), sym);
    }

    #[test]
    fn shift_moves_a_single_dark_pixel() {
        let mut img = Image::filled(8, 8, 1, 1.0).unwrap();
        img.set(2, 1, 0, 0.0);
        let out = shift(&img, 2, 3, 1.0).unwrap();
        assert_eq!(out.get(5, 3, 0), 0.0);
        assert_eq!(out.data().iter().filter(|&&v| v == 0.0).count(), 1);
        assert_eq!(shift(&img, 0, 0, 1.0).unwrap(), img);
    }

    #[test]
    fn shift_back_and_forth_clips_one_column() {
        let img = gradient_image(5, 6, 1);
        let back = shift(&shift(&img, 1, 0, 0.7).unwrap(), -1, 0, 0.7).unwrap();
        for r in 0..5 {
            assert_eq!(back.get(r, 5, 0), 0.7);
            for c in 0..5 {
                assert_eq!(back.get(r, c, 0), img.get(r, c, 0));
            }
        }
    }

    #[test]
    fn shift_out_of_range() {
        let img = gradient_image(4, 5, 1);
        assert!(matches!(shift(&img, 5, 0, 1.0), Err(AugmentError::ShiftOutOfRange { .. })));
        assert!(matches!(shift(&img, 0, -4, 1.0), Err(AugmentError::ShiftOutOfRange { .. })));
    }

    #[test]
    fn rotate_zero_and_constant() {
        let img = gradient_image(7, 9, 3);
        assert_eq!(rotate(&img, 0.0, 1.0), img);
        let c = Image::filled(10, 12, 1, 0.35).unwrap();
        for angle in [13.0, 90.0, -47.5, 180.0] {
            let out = rotate(&c, angle, 0.35);
            assert!(out.data().iter().all(|&v| (v - 0.35).abs() < 1e-12));
        }
    }

    #[test]
    fn rotate_quarter_turn_and_back_recovers_square() {
        let mut img = Image::filled(16, 16, 1, 1.0).unwrap();
        for r in 6..10 {
            for c in 6..10 {
                img.set(r, c, 0, 0.0);
            }
        }
        let back = rotate(&rotate(&img, 90.0, 1.0), -90.0, 1.0);
        let mut max_err: f64 = 0.0;
        for r in 2..14 {
            for c in 2..14 {
                max_err = max_err.max((back.get(r, c, 0) - img.get(r, c, 0)).abs());
            }
        }
        assert!(max_err <= 0.05, "max interior error {max_err}");
    }

    #[test]
    fn quarter_turn_is_counter_clockwise() {
        // top-centre pixel moves to the left-centre under a screen CCW turn
        let mut img = Image::filled(5, 5, 1, 1.0).unwrap();
        img.set(0, 2, 0, 0.0);
        let out = rotate(&img, 90.0, 1.0);
        assert!(out.get(2, 0, 0) < 1e-9);
    }

    #[test]
    fn zero_params_are_identity() {
        let img = gradient_image(6, 6, 3);
        for seed in 0..10 {
            let mut rng = rng_from_seed(seed);
            assert_eq!(augment(&img, &AugmentParams::identity(), &mut rng), img);
        }
    }

    #[test]
    fn augment_is_deterministic_per_seed() {
        let img = gradient_image(12, 10, 3);
        let p = AugmentParams::default();
        let a = augment(&img, &p, &mut rng_from_seed(3));
        let b = augment(&img, &p, &mut rng_from_seed(3));
        assert_eq!(a, b);
    }

    #[test]
    fn flip_frequency_matches_probability() {
        let p = AugmentParams::default();
        let mut rng = rng_from_seed(11);
        let flips = (0..1000).filter(|_| AugmentDraw::sample(&p, 32, 32, &mut rng).flip).count();
        assert!((400..=600).contains(&flips), "{flips} flips");
    }

    #[test]
    fn draws_respect_bounds() {
        let p = AugmentParams { max_rotation_deg: 15.0, max_shift_frac: 0.25, ..Default::default() };
        let mut rng = rng_from_seed(5);
        for _ in 0..2000 {
            let d = AugmentDraw::sample(&p, 20, 9, &mut rng);
            assert!(d.angle_deg.abs() <= 15.0);
            assert!(d.dx.abs() <= 5 && d.dy.abs() <= 2);
        }
    }

    #[test]
    fn params_validation() {
        assert!(AugmentParams::default().validate().is_ok());
        assert!(AugmentParams { max_shift_frac: 1.0, ..Default::default() }.validate().is_err());
        assert!(AugmentParams { hflip_prob: -0.1, ..Default::default() }.validate().is_err());
        assert!(AugmentParams { max_rotation_deg: f64::NAN, ..Default::default() }.validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn augment_preserves_shape_and_range(h in 2usize..14, w in 2usize..14, rgb in any::<bool>(), seed in any::<u64>()) {
            let img = gradient_image(h, w, if rgb { 3 } else { 1 });
            let out = augment(&img, &AugmentParams::default(), &mut rng_from_seed(seed));
            prop_assert_eq!((out.height(), out.width(), out.channels()), (h, w, img.channels()));
            prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
