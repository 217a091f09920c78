//! Image preprocessing: bicubic downsampling, class quantization, and
//! tensor conversion.
//!
//! The downsampler is the separable cubic-convolution interpolator with
//! sharpness coefficient a = -0.5. Each output pixel samples a 4x4 source
//! neighborhood around a pixel-center-aligned position; edges clamp.
//! Quantization maps RGB pixels back onto the nearest palette class, which
//! is what the policy consumes in segmented mode.

use thiserror::Error;

use crate::camera::{ClassImage, RgbImage, SemanticClass};
use crate::nn::Tensor;

/// Kernel sharpness coefficient of the cubic convolution family.
pub const KERNEL_A: f64 = -0.5;

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("bicubic_downsample only shrinks: requested {requested_w}x{requested_h} from {src_w}x{src_h}")]
    UpscaleUnsupported {
        src_w: usize,
        src_h: usize,
        requested_w: usize,
        requested_h: usize,
    },
    #[error("output size must be at least 1x1")]
    EmptyOutput,
    #[error("observation shape mismatch: image is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    ShapeMismatch {
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },
}

/// Cubic convolution weight at signed offset `x` from the sample point.
///
/// Interpolating kernel: value 1 at x = 0, value 0 at every other integer,
/// support (-2, 2), and weights for any sample position sum to 1.
pub fn cubic_kernel(x: f64) -> f64 {
    let a = KERNEL_A;
    let x = x.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        (((x - 5.0) * x + 8.0) * x - 4.0) * a
    } else {
        0.0
    }
}

/// The four taps for a sample at integer-floor `i` + fractional offset `f`,
/// covering source indices i-1, i, i+1, i+2.
fn kernel_taps(f: f64) -> [f64; 4] {
    [
        cubic_kernel(f + 1.0),
        cubic_kernel(f),
        cubic_kernel(1.0 - f),
        cubic_kernel(2.0 - f),
    ]
}

/// Pixel-center-aligned source coordinate for output index `o`.
fn source_coord(o: usize, scale: f64) -> f64 {
    (o as f64 + 0.5) * scale - 0.5
}

/// Downsample with full f64 precision, before byte quantization.
///
/// Runs as two separable passes (horizontal, then vertical); the acceptance
/// oracle recomputes the same interpolation as a direct 4x4 double sum.
pub fn bicubic_downsample_f64(src: &RgbImage, out_w: usize, out_h: usize) -> Result<Vec<[f64; 3]>, PreprocessError> {
    if out_w == 0 || out_h == 0 {
        return Err(PreprocessError::EmptyOutput);
    }
    if out_w > src.width || out_h > src.height {
        return Err(PreprocessError::UpscaleUnsupported {
            src_w: src.width,
            src_h: src.height,
            requested_w: out_w,
            requested_h: out_h,
        });
    }
    let scale_x = src.width as f64 / out_w as f64;
    let scale_y = src.height as f64 / out_h as f64;

    // Horizontal pass: resample every source row at the output x grid.
    let mut mid = vec![[0.0f64; 3]; out_w * src.height];
    for ox in 0..out_w {
        let sx = source_coord(ox, scale_x);
        let ix = sx.floor() as isize;
        let taps = kernel_taps(sx - ix as f64);
        for y in 0..src.height {
            let mut acc = [0.0f64; 3];
            for (k, w) in taps.iter().enumerate() {
                let col = (ix - 1 + k as isize).clamp(0, src.width as isize - 1) as usize;
                let px = src.get(col, y);
                for c in 0..3 {
                    acc[c] += w * px[c] as f64;
                }
            }
            mid[y * out_w + ox] = acc;
        }
    }

    // Vertical pass over the intermediate buffer.
    let mut out = vec![[0.0f64; 3]; out_w * out_h];
    for oy in 0..out_h {
        let sy = source_coord(oy, scale_y);
        let iy = sy.floor() as isize;
        let taps = kernel_taps(sy - iy as f64);
        for ox in 0..out_w {
            let mut acc = [0.0f64; 3];
            for (k, w) in taps.iter().enumerate() {
                let row = (iy - 1 + k as isize).clamp(0, src.height as isize - 1) as usize;
                let px = mid[row * out_w + ox];
                for c in 0..3 {
                    acc[c] += w * px[c];
                }
            }
            out[oy * out_w + ox] = acc;
        }
    }
    Ok(out)
}

/// Downsample to 8-bit RGB. Interpolated values are clamped to [0, 255]
/// after both passes, then rounded.
pub fn bicubic_downsample(src: &RgbImage, out_w: usize, out_h: usize) -> Result<RgbImage, PreprocessError> {
    let values = bicubic_downsample_f64(src, out_w, out_h)?;
    let mut out = RgbImage::new(out_w, out_h);
    for y in 0..out_h {
        for x in 0..out_w {
            let v = values[y * out_w + x];
            out.set(x, y, [quantize(v[0]), quantize(v[1]), quantize(v[2])]);
        }
    }
    Ok(out)
}

fn quantize(v: f64) -> u8 {
    v.clamp(0.0, 255.0).round() as u8
}

/// Map each pixel to the palette class with minimal Euclidean RGB distance.
/// Ties break in class order ground < rock < goal < space.
pub fn class_quantize(image: &RgbImage) -> ClassImage {
    let mut out = ClassImage::new(image.width, image.height, SemanticClass::Space);
    for y in 0..image.height {
        for x in 0..image.width {
            out.set(x, y, nearest_class(image.get(x, y)));
        }
    }
    out
}

pub fn nearest_class(rgb: [u8; 3]) -> SemanticClass {
    let mut best = SemanticClass::Ground;
    let mut best_d = u32::MAX;
    for class in SemanticClass::ALL {
        let p = class.rgb();
        let d: u32 = (0..3)
            .map(|c| {
                let diff = rgb[c] as i32 - p[c] as i32;
                (diff * diff) as u32
            })
            .sum();
        if d < best_d {
            best_d = d;
            best = class;
        }
    }
    best
}

/// Convert an image to a channel-major (3, height, width) tensor with
/// values in [0, 1].
pub fn to_tensor(image: &RgbImage, expect_w: usize, expect_h: usize) -> Result<Tensor, PreprocessError> {
    if image.width != expect_w || image.height != expect_h {
        return Err(PreprocessError::ShapeMismatch {
            got_w: image.width,
            got_h: image.height,
            want_w: expect_w,
            want_h: expect_h,
        });
    }
    let (w, h) = (image.width, image.height);
    let mut data = vec![0.0f64; 3 * h * w];
    for y in 0..h {
        for x in 0..w {
            let px = image.get(x, y);
            for c in 0..3 {
                data[c * h * w + y * w + x] = px[c] as f64 / 255.0;
            }
        }
    }
    Ok(Tensor::from_vec(vec![3, h, w], data))
}
