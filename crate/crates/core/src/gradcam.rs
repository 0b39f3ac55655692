//! Gradient-weighted class activation maps over a recorded forward pass.

use crate::graph::{resize_nearest, GraphError, GraphRun, ScoreSelector, Tensor3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GradCamError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("heatmap is {heat:?} but image is {image:?}")]
    DimMismatch { heat: (usize, usize), image: (usize, usize) },
    #[error("overlay needs a 3-channel image, got {0} channels")]
    NotRgb(usize),
    #[error("alpha must lie in [0, 1], got {0}")]
    Alpha(f64),
}

/// Per-pixel values in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl Heatmap {
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// 8-bit grey levels, for PGM output.
    pub fn to_gray(&self) -> Vec<u8> {
        self.values.iter().map(|&v| to_byte(v * 255.0)).collect()
    }

    /// Colour-mapped 3-channel tensor with values in `[0, 255]`.
    pub fn colorize(&self) -> Tensor3 {
        let n = self.height * self.width;
        let mut t = Tensor3::zeros(3, self.height, self.width);
        for (p, &v) in self.values.iter().enumerate() {
            let rgb = viridis(v);
            for c in 0..3 {
                t.data[c * n + p] = f64::from(rgb[c]);
            }
        }
        t
    }
}

fn to_byte(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Channel weights: the spatial mean of each gradient map.
pub fn channel_weights(gradients: &Tensor3) -> Vec<f64> {
    let plane = gradients.height * gradients.width;
    (0..gradients.channels)
        .map(|c| gradients.channel(c).iter().sum::<f64>() / plane as f64)
        .collect()
}

/// Rectified weighted sum of activation maps, before resizing.
pub fn class_activation_map(activations: &Tensor3, gradients: &Tensor3) -> Result<Tensor3, GradCamError> {
    if activations.shape() != gradients.shape() {
        return Err(GraphError::ShapeMismatch(format!(
            "activations {:?} vs gradients {:?}",
            activations.shape(),
            gradients.shape()
        ))
        .into());
    }
    let weights = channel_weights(gradients);
    let mut cam = Tensor3::zeros(1, activations.height, activations.width);
    for (c, w) in weights.iter().enumerate() {
        for (o, a) in cam.data.iter_mut().zip(activations.channel(c)) {
            *o += w * a;
        }
    }
    Ok(cam.map(|v| v.max(0.0)))
}

/// Resizes a single-channel map and divides by its maximum. A map with no
/// positive value stays all zero.
pub fn normalize_to(cam: &Tensor3, height: usize, width: usize) -> Result<Heatmap, GradCamError> {
    let up = resize_nearest(cam, height, width)?;
    let max = up.data.iter().copied().fold(0.0, f64::max);
    let values = if max > 0.0 {
        up.data.iter().map(|&v| (v / max).clamp(0.0, 1.0)).collect()
    } else {
        vec![0.0; height * width]
    };
    Ok(Heatmap { height, width, values })
}

/// Heatmap for the selected score with respect to `layer`, at the size of
/// the graph input.
pub fn gradcam_heatmap(
    run: &GraphRun,
    layer: &str,
    selector: &ScoreSelector,
    image_size: (usize, usize),
) -> Result<Heatmap, GradCamError> {
    let grads = run.backward_to_layer(selector, layer)?;
    let cam = class_activation_map(run.activation(layer)?, &grads)?;
    normalize_to(&cam, image_size.0, image_size.1)
}

/// Blends `image` (3 channels, values in `[0, 255]`) with the colour-mapped
/// heatmap: `(1 - alpha) * image + alpha * colour`.
pub fn overlay(image: &Tensor3, heat: &Heatmap, alpha: f64) -> Result<Tensor3, GradCamError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(GradCamError::Alpha(alpha));
    }
    if image.channels != 3 {
        return Err(GradCamError::NotRgb(image.channels));
    }
    if (image.height, image.width) != (heat.height, heat.width) {
        return Err(GradCamError::DimMismatch {
            heat: (heat.height, heat.width),
            image: (image.height, image.width),
        });
    }
    let color = heat.colorize();
    let mut out = image.clone();
    for (o, c) in out.data.iter_mut().zip(&color.data) {
        *o = (1.0 - alpha) * *o + alpha * c;
    }
    Ok(out)
}

/// Viridis colour for a value clamped to `[0, 1]`, interpolated linearly
/// between neighbouring table entries.
pub fn viridis(value: f64) -> [u8; 3] {
    let v = if value.is_nan() { 0.0 } else { value.clamp(0.0, 1.0) };
    let pos = v * 255.0;
    let lo = (pos.floor() as usize).min(254);
    let t = pos - lo as f64;
    let (a, b) = (VIRIDIS[lo], VIRIDIS[lo + 1]);
    let mut out = [0u8; 3];
    for c in 0..3 {
        out[c] = to_byte(f64::from(a[c]) + t * (f64::from(b[c]) - f64::from(a[c])));
    }
    out
}

#[rustfmt::skip]
const VIRIDIS: [[u8; 3]; 256] = [
    [68, 1, 84], [68, 2, 86], [69, 4, 87], [69, 5, 89], [70, 7, 90], [70, 8, 92],
    [70, 10, 93], [70, 11, 94], [71, 13, 96], [71, 14, 97], [71, 16, 99], [71, 17, 100],
    [71, 19, 101], [72, 20, 103], [72, 22, 104], [72, 23, 105], [72, 24, 106], [72, 26, 108],
    [72, 27, 109], [72, 28, 110], [72, 29, 111], [72, 31, 112], [72, 32, 113], [72, 33, 115],
    [72, 35, 116], [72, 36, 117], [72, 37, 118], [72, 38, 119], [72, 40, 120], [72, 41, 121],
    [71, 42, 122], [71, 44, 122], [71, 45, 123], [71, 46, 124], [71, 47, 125], [70, 48, 126],
    [70, 50, 126], [70, 51, 127], [70, 52, 128], [69, 53, 129], [69, 55, 129], [69, 56, 130],
    [68, 57, 131], [68, 58, 131], [68, 59, 132], [67, 61, 132], [67, 62, 133], [66, 63, 133],
    [66, 64, 134], [66, 65, 134], [65, 66, 135], [65, 68, 135], [64, 69, 136], [64, 70, 136],
    [63, 71, 136], [63, 72, 137], [62, 73, 137], [62, 74, 137], [62, 76, 138], [61, 77, 138],
    [61, 78, 138], [60, 79, 138], [60, 80, 139], [59, 81, 139], [59, 82, 139], [58, 83, 139],
    [58, 84, 140], [57, 85, 140], [57, 86, 140], [56, 88, 140], [56, 89, 140], [55, 90, 140],
    [55, 91, 141], [54, 92, 141], [54, 93, 141], [53, 94, 141], [53, 95, 141], [52, 96, 141],
    [52, 97, 141], [51, 98, 141], [51, 99, 141], [50, 100, 142], [50, 101, 142], [49, 102, 142],
    [49, 103, 142], [49, 104, 142], [48, 105, 142], [48, 106, 142], [47, 107, 142], [47, 108, 142],
    [46, 109, 142], [46, 110, 142], [46, 111, 142], [45, 112, 142], [45, 113, 142], [44, 113, 142],
    [44, 114, 142], [44, 115, 142], [43, 116, 142], [43, 117, 142], [42, 118, 142], [42, 119, 142],
    [42, 120, 142], [41, 121, 142], [41, 122, 142], [41, 123, 142], [40, 124, 142], [40, 125, 142],
    [39, 126, 142], [39, 127, 142], [39, 128, 142], [38, 129, 142], [38, 130, 142], [38, 130, 142],
    [37, 131, 142], [37, 132, 142], [37, 133, 142], [36, 134, 142], [36, 135, 142], [35, 136, 142],
    [35, 137, 142], [35, 138, 141], [34, 139, 141], [34, 140, 141], [34, 141, 141], [33, 142, 141],
    [33, 143, 141], [33, 144, 141], [33, 145, 140], [32, 146, 140], [32, 146, 140], [32, 147, 140],
    [31, 148, 140], [31, 149, 139], [31, 150, 139], [31, 151, 139], [31, 152, 139], [31, 153, 138],
    [31, 154, 138], [30, 155, 138], [30, 156, 137], [30, 157, 137], [31, 158, 137], [31, 159, 136],
    [31, 160, 136], [31, 161, 136], [31, 161, 135], [31, 162, 135], [32, 163, 134], [32, 164, 134],
    [33, 165, 133], [33, 166, 133], [34, 167, 133], [34, 168, 132], [35, 169, 131], [36, 170, 131],
    [37, 171, 130], [37, 172, 130], [38, 173, 129], [39, 173, 129], [40, 174, 128], [41, 175, 127],
    [42, 176, 127], [44, 177, 126], [45, 178, 125], [46, 179, 124], [47, 180, 124], [49, 181, 123],
    [50, 182, 122], [52, 182, 121], [53, 183, 121], [55, 184, 120], [56, 185, 119], [58, 186, 118],
    [59, 187, 117], [61, 188, 116], [63, 188, 115], [64, 189, 114], [66, 190, 113], [68, 191, 112],
    [70, 192, 111], [72, 193, 110], [74, 193, 109], [76, 194, 108], [78, 195, 107], [80, 196, 106],
    [82, 197, 105], [84, 197, 104], [86, 198, 103], [88, 199, 101], [90, 200, 100], [92, 200, 99],
    [94, 201, 98], [96, 202, 96], [99, 203, 95], [101, 203, 94], [103, 204, 92], [105, 205, 91],
    [108, 205, 90], [110, 206, 88], [112, 207, 87], [115, 208, 86], [117, 208, 84], [119, 209, 83],
    [122, 209, 81], [124, 210, 80], [127, 211, 78], [129, 211, 77], [132, 212, 75], [134, 213, 73],
    [137, 213, 72], [139, 214, 70], [142, 214, 69], [144, 215, 67], [147, 215, 65], [149, 216, 64],
    [152, 216, 62], [155, 217, 60], [157, 217, 59], [160, 218, 57], [162, 218, 55], [165, 219, 54],
    [168, 219, 52], [170, 220, 50], [173, 220, 48], [176, 221, 47], [178, 221, 45], [181, 222, 43],
    [184, 222, 41], [186, 222, 40], [189, 223, 38], [192, 223, 37], [194, 223, 35], [197, 224, 33],
    [200, 224, 32], [202, 225, 31], [205, 225, 29], [208, 225, 28], [210, 226, 27], [213, 226, 26],
    [216, 226, 25], [218, 227, 25], [221, 227, 24], [223, 227, 24], [226, 228, 24], [229, 228, 25],
    [231, 228, 25], [234, 229, 26], [236, 229, 27], [239, 229, 28], [241, 229, 29], [244, 230, 30],
    [246, 230, 32], [248, 230, 33], [251, 231, 35], [253, 231, 37],
];
