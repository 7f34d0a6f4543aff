//! Per-image intensity and geometry transforms on `H × W × C` grids.

use ndarray::{Array, Array3, ArrayView3, Dimension};

use crate::error::{Error, Result};

/// Affinely maps intensities onto `[0, 1]`.
///
/// A constant grid carries no signal and maps to all zeros.
pub fn rescale_unit_interval<D: Dimension>(image: &Array<f32, D>) -> Result<Array<f32, D>> {
    let mut out = image.clone();
    rescale_in_place(out.as_slice_memory_order_mut().expect("owned array is contiguous"))?;
    Ok(out)
}

pub(crate) fn rescale_in_place(values: &mut [f32]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::InvalidInput("cannot rescale an empty image".into()));
    }
    let (lo, hi) = values
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidInput("image contains non-finite intensities".into()));
    }
    let span = hi - lo;
    if span == 0.0 {
        values.iter_mut().for_each(|v| *v = 0.0);
    } else {
        values.iter_mut().for_each(|v| *v = ((*v - lo) / span).clamp(0.0, 1.0));
    }
    Ok(())
}

/// Bilinear sample at continuous `(y, x)`; points outside the frame read as zero.
fn sample_zero_fill(img: &ArrayView3<f32>, y: f32, x: f32, c: usize) -> f32 {
    let (h, w, _) = img.dim();
    let y0 = y.floor();
    let x0 = x.floor();
    let dy = y - y0;
    let dx = x - x0;
    let (y0, x0) = (y0 as isize, x0 as isize);
    let px = |yy: isize, xx: isize| -> f32 {
        if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
            0.0
        } else {
            img[[yy as usize, xx as usize, c]]
        }
    };
    let top = px(y0, x0) * (1.0 - dx) + px(y0, x0 + 1) * dx;
    let bottom = px(y0 + 1, x0) * (1.0 - dx) + px(y0 + 1, x0 + 1) * dx;
    top * (1.0 - dy) + bottom * dy
}

/// Bilinear resize using half-pixel centres, edges clamped.
pub fn resize_bilinear(img: ArrayView3<f32>, out_h: usize, out_w: usize) -> Array3<f32> {
    let (h, w, ch) = img.dim();
    let sy = h as f32 / out_h as f32;
    let sx = w as f32 / out_w as f32;
    Array3::from_shape_fn((out_h, out_w, ch), |(oy, ox, c)| {
        let y = ((oy as f32 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f32);
        let x = ((ox as f32 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f32);
        let y0 = y.floor() as usize;
        let x0 = x.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let x1 = (x0 + 1).min(w - 1);
        let dy = y - y0 as f32;
        let dx = x - x0 as f32;
        let top = img[[y0, x0, c]] * (1.0 - dx) + img[[y0, x1, c]] * dx;
        let bottom = img[[y1, x0, c]] * (1.0 - dx) + img[[y1, x1, c]] * dx;
        top * (1.0 - dy) + bottom * dy
    })
}

/// Rotation by `angle` radians (counter-clockwise) and translation by
/// `(shift_y, shift_x)` pixels about the image centre. Bilinear, zero fill.
pub fn affine_warp(img: ArrayView3<f32>, angle: f32, shift_y: f32, shift_x: f32) -> Array3<f32> {
    let (h, w, ch) = img.dim();
    let cy = (h as f32 - 1.0) / 2.0;
    let cx = (w as f32 - 1.0) / 2.0;
    let (sin, cos) = angle.sin_cos();
    Array3::from_shape_fn((h, w, ch), |(oy, ox, c)| {
        // inverse map: output -> source
        let ty = oy as f32 - cy - shift_y;
        let tx = ox as f32 - cx - shift_x;
        let sx = cos * tx - sin * ty + cx;
        let sy = sin * tx + cos * ty + cy;
        sample_zero_fill(&img, sy, sx, c)
    })
}

pub fn rotate_bilinear(img: ArrayView3<f32>, angle: f32) -> Array3<f32> {
    affine_warp(img, angle, 0.0, 0.0)
}

/// Separable Gaussian blur with kernel radius `ceil(3σ)`; borders replicate the edge pixel.
pub fn gaussian_smooth(img: ArrayView3<f32>, sigma: f32) -> Result<Array3<f32>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidInput(format!("gaussian sigma must be positive, got {sigma}")));
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f32> = (-radius..=radius)
        .map(|d| (-(d * d) as f32 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f32 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= norm);

    let (h, w, ch) = img.dim();
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let horizontal: Array3<f32> = Array3::from_shape_fn((h, w, ch), |(y, x, c)| {
        kernel
            .iter()
            .enumerate()
            .map(|(i, k)| k * img[[y, clamp(x as isize + i as isize - radius, w), c]])
            .sum::<f32>()
    });
    Ok(Array3::from_shape_fn((h, w, ch), |(y, x, c)| {
        kernel
            .iter()
            .enumerate()
            .map(|(i, k)| k * horizontal[[clamp(y as isize + i as isize - radius, h), x, c]])
            .sum()
    }))
}

/// Multiplies by a smooth field built by bilinearly upsampling a coarse
/// `grid × grid` lattice of factors, then clamps back into `[0, 1]`.
pub fn multiply_bias_field(img: ArrayView3<f32>, coarse: &Array3<f32>) -> Array3<f32> {
    let (h, w, ch) = img.dim();
    let field = resize_bilinear(coarse.view(), h, w);
    Array3::from_shape_fn((h, w, ch), |(y, x, c)| (img[[y, x, c]] * field[[y, x, 0]]).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, Array1};

    #[test]
    fn rescale_affine_example() {
        let out = rescale_unit_interval(&arr1(&[0.0f32, 2.0, 4.0])).unwrap();
        assert_eq!(out, arr1(&[0.0, 0.5, 1.0]));
    }

    #[test]
    fn rescale_constant_maps_to_zero() {
        let out = rescale_unit_interval(&arr1(&[5.0f32, 5.0, 5.0])).unwrap();
        assert_eq!(out, arr1(&[0.0, 0.0, 0.0]));
    }

    #[test]
    fn rescale_empty_is_error() {
        let empty: Array1<f32> = Array1::zeros(0);
        assert!(matches!(rescale_unit_interval(&empty), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn rotation_by_zero_is_identity_and_stays_in_unit_interval() {
        let img = Array3::from_shape_fn((8, 8, 1), |(y, x, _)| ((y * 8 + x) % 7) as f32 / 6.0);
        let same = rotate_bilinear(img.view(), 0.0);
        for (a, b) in img.iter().zip(same.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
        let rot = rotate_bilinear(img.view(), 0.6);
        assert!(rot.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn quarter_turn_moves_pixels() {
        let mut img = Array3::zeros((5, 5, 1));
        img[[0, 2, 0]] = 1.0; // top centre
        let rot = rotate_bilinear(img.view(), std::f32::consts::FRAC_PI_2);
        // counter-clockwise quarter turn sends top-centre to left-centre
        assert!((rot[[2, 0, 0]] - 1.0).abs() < 1e-5, "{rot:?}");
    }

    #[test]
    fn resize_preserves_constant_and_shape() {
        let img = Array3::from_elem((28, 28, 1), 0.25f32);
        let out = resize_bilinear(img.view(), 32, 32);
        assert_eq!(out.dim(), (32, 32, 1));
        assert!(out.iter().all(|&v| (v - 0.25).abs() < 1e-6));
    }

    #[test]
    fn smoothing_keeps_mean_of_constant_and_reduces_variance() {
        let flat = Array3::from_elem((10, 10, 1), 0.5f32);
        let s = gaussian_smooth(flat.view(), 2.0).unwrap();
        assert!(s.iter().all(|&v| (v - 0.5).abs() < 1e-6));

        let checker = Array3::from_shape_fn((16, 16, 1), |(y, x, _)| ((y + x) % 2) as f32);
        let s = gaussian_smooth(checker.view(), 1.0).unwrap();
        let var = |a: &Array3<f32>| {
            let m = a.mean().unwrap();
            a.iter().map(|v| (v - m).powi(2)).sum::<f32>() / a.len() as f32
        };
        assert!(var(&s) < var(&checker));
        assert!(gaussian_smooth(checker.view(), 0.0).is_err());
    }
}
