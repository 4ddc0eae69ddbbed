//! Bilinear resampling with half-pixel-centered sampling.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Resize an `[H, W, C]` pixel tensor to exactly `target_h x target_w`.
///
/// Sample coordinates are half-pixel centered:
/// `src = (dst + 0.5) * (src_extent / dst_extent) - 0.5`, clamped to the
/// source, then blended from the four surrounding texels.
pub fn resize_bilinear(pixels: &Tensor, target_h: usize, target_w: usize) -> Result<Tensor> {
    let dims = pixels.dims();
    if dims.len() != 3 {
        return Err(Error::shape(format!(
            "resize expects HxWxC pixels, got {}",
            pixels.shape()
        )));
    }
    let [h, w, c] = [dims[0], dims[1], dims[2]];
    if h == 0 || w == 0 {
        return Err(Error::input("source image has an empty extent".to_string()));
    }
    if target_h == 0 || target_w == 0 {
        return Err(Error::input("target extent must be positive".to_string()));
    }
    let src = pixels.data();
    let mut out = vec![0.0f32; target_h * target_w * c];
    let scale_y = h as f64 / target_h as f64;
    let scale_x = w as f64 / target_w as f64;
    for oy in 0..target_h {
        let sy = ((oy as f64 + 0.5) * scale_y - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let fy = sy - y0 as f64;
        for ox in 0..target_w {
            let sx = ((ox as f64 + 0.5) * scale_x - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let fx = sx - x0 as f64;
            let dst = (oy * target_w + ox) * c;
            for ch in 0..c {
                let p00 = src[(y0 * w + x0) * c + ch] as f64;
                let p01 = src[(y0 * w + x1) * c + ch] as f64;
                let p10 = src[(y1 * w + x0) * c + ch] as f64;
                let p11 = src[(y1 * w + x1) * c + ch] as f64;
                let top = p00 + (p01 - p00) * fx;
                let bottom = p10 + (p11 - p10) * fx;
                out[dst + ch] = (top + (bottom - top) * fy) as f32;
            }
        }
    }
    Tensor::from_values([target_h, target_w, c], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_size_is_identity() {
        let pixels = Tensor::from_values(
            [2, 3, 1],
            vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
        )
        .unwrap();
        let out = resize_bilinear(&pixels, 2, 3).unwrap();
        for (a, b) in out.data().iter().zip(pixels.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_image_stays_constant() {
        let pixels = Tensor::full([5, 7, 3], 0.42);
        for (th, tw) in [(1, 1), (3, 3), (10, 14)] {
            let out = resize_bilinear(&pixels, th, tw).unwrap();
            assert!(out.data().iter().all(|&v| (v - 0.42).abs() < 1e-6));
        }
    }

    #[test]
    fn checkerboard_to_single_pixel_averages_texels() {
        let pixels = Tensor::from_values([2, 2, 1], vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let out = resize_bilinear(&pixels, 1, 1).unwrap();
        assert!((out.data()[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn zero_target_is_input_error() {
        let pixels = Tensor::full([2, 2, 1], 1.0);
        assert!(matches!(
            resize_bilinear(&pixels, 0, 2).unwrap_err(),
            Error::Input(_)
        ));
    }
}
