//! Online augmentation: in-plane rotation, pixel translation, and scale,
//! applied as one composite warp to the patch and the same affine map to
//! the normalized joint coordinates.

use rand::Rng;

use crate::pipeline::{norm_to_pixel, pixel_to_norm, HandSample, PATCH_SIZE};

/// One augmentation draw. `scale` multiplies the crop cube, so joint
/// coordinates (and depth values) divide by it and the image zooms by its
/// inverse; rotation/translation act in the patch plane only.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentParams {
    /// In-plane rotation about the patch center, radians.
    pub rotation: f64,
    /// Translation in patch pixels.
    pub translation: [f64; 2],
    /// Cube scale factor.
    pub scale: f64,
}

impl AugmentParams {
    pub const IDENTITY: AugmentParams =
        AugmentParams { rotation: 0.0, translation: [0.0, 0.0], scale: 1.0 };

    /// Rotation uniform in [−180°, 180°], translation in [−10, 10] px,
    /// scale in [0.9, 1.1].
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        AugmentParams {
            rotation: rng.gen_range(-std::f64::consts::PI..=std::f64::consts::PI),
            translation: [rng.gen_range(-10.0..=10.0), rng.gen_range(-10.0..=10.0)],
            scale: rng.gen_range(0.9..=1.1),
        }
    }

    /// Forward map on normalized (x, y): scale, then rotate, then translate.
    pub fn apply_xy(&self, p: [f64; 2]) -> [f64; 2] {
        let (sin, cos) = self.rotation.sin_cos();
        let x = p[0] / self.scale;
        let y = p[1] / self.scale;
        [
            cos * x - sin * y + self.translation[0] / 48.0,
            sin * x + cos * y + self.translation[1] / 48.0,
        ]
    }

    /// Inverse map, used to pull source pixels for the warp.
    fn invert_xy(&self, p: [f64; 2]) -> [f64; 2] {
        let (sin, cos) = self.rotation.sin_cos();
        let x = p[0] - self.translation[0] / 48.0;
        let y = p[1] - self.translation[1] / 48.0;
        [(cos * x + sin * y) * self.scale, (-sin * x + cos * y) * self.scale]
    }
}

fn bilinear_patch(patch: &[f64], px: f64, py: f64) -> f64 {
    let x0 = px.floor();
    let y0 = py.floor();
    let dx = px - x0;
    let dy = py - y0;
    let mut values = [0.0; 4];
    let mut weights = [0.0; 4];
    for (i, (di, wy)) in [(0.0, 1.0 - dy), (1.0, dy)].into_iter().enumerate() {
        for (j, (dj, wx)) in [(0.0, 1.0 - dx), (1.0, dx)].into_iter().enumerate() {
            let col = x0 + dj;
            let row = y0 + di;
            values[i * 2 + j] =
                if col < 0.0 || row < 0.0 || col >= PATCH_SIZE as f64 || row >= PATCH_SIZE as f64 {
                    // Out-of-bounds reads the background value.
                    1.0
                } else {
                    patch[row as usize * PATCH_SIZE + col as usize]
                };
            weights[i * 2 + j] = wx * wy;
        }
    }
    // Constant neighborhoods pass through exactly (keeps background at 1).
    if values[1] == values[0] && values[2] == values[0] && values[3] == values[0] {
        return values[0];
    }
    values.iter().zip(&weights).map(|(v, w)| v * w).sum()
}

/// Applies `params` to the patch (bilinear, background fill 1) and
/// identically to the joint labels; z is divided by the scale factor and
/// untouched by rotation/translation.
pub fn augment(sample: &HandSample, params: &AugmentParams) -> HandSample {
    let mut patch = vec![0.0; PATCH_SIZE * PATCH_SIZE];
    let identity = *params == AugmentParams::IDENTITY;
    if identity {
        patch.copy_from_slice(&sample.patch);
    } else {
        for i in 0..PATCH_SIZE {
            let y = pixel_to_norm(i as f64);
            for j in 0..PATCH_SIZE {
                let x = pixel_to_norm(j as f64);
                let src = params.invert_xy([x, y]);
                patch[i * PATCH_SIZE + j] =
                    bilinear_patch(&sample.patch, norm_to_pixel(src[0]), norm_to_pixel(src[1]));
            }
        }
    }
    let joints_norm = sample
        .joints_norm
        .iter()
        .map(|&j| {
            let xy = params.apply_xy([j[0], j[1]]);
            [xy[0], xy[1], j[2] / params.scale]
        })
        .collect();
    HandSample { patch, joints_norm, crop: sample.crop }
}

/// Seeded draw + apply.
pub fn augment_random<R: Rng>(sample: &HandSample, rng: &mut R) -> HandSample {
    augment(sample, &AugmentParams::random(rng))
}
