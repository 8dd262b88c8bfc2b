//! Depth-map preprocessing: cube cropping and normalization, online
//! augmentation, manifest ingestion, and a synthetic articulated-hand
//! depth renderer for desk-scale experiments.
//!
//! Geometry runs in `f64` throughout; patches convert to the engine's
//! element type only when batches are assembled for the network.

pub mod augment;
pub mod manifest;
pub mod synth;

pub use augment::{augment, augment_random, AugmentParams};
pub use manifest::{load_manifest, write_manifest, ManifestReader};
pub use synth::{generate_dataset, render_frame, sample_pose, FingerPose, HandGeometry, HandPose};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Side length of the network input patch.
pub const PATCH_SIZE: usize = 96;

/// Pinhole camera intrinsics in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    /// ICVL-like synthetic camera: f = 475, principal point centered
    /// on a 320×240 sensor.
    pub fn synthetic() -> Self {
        CameraIntrinsics { fx: 475.0, fy: 475.0, cx: 160.0, cy: 120.0 }
    }

    pub fn project(&self, p: [f64; 3]) -> [f64; 2] {
        [self.fx * p[0] / p[2] + self.cx, self.fy * p[1] / p[2] + self.cy]
    }
}

/// One dataset frame: depth in millimeters (0 = missing) plus
/// camera-space joint annotations.
#[derive(Clone, Debug)]
pub struct RawFrame {
    pub width: usize,
    pub height: usize,
    /// Row-major H×W depth, millimeters; 0 marks missing measurements.
    pub depth: Vec<f64>,
    /// Topology-order joints, camera-space millimeters.
    pub joints_mm: Vec<[f64; 3]>,
    pub intrinsics: CameraIntrinsics,
}

impl RawFrame {
    pub fn depth_at(&self, col: usize, row: usize) -> f64 {
        self.depth[row * self.width + col]
    }

    /// Centroid of the annotated palm joints (crop center during training).
    pub fn palm_centroid(&self, palm_count: usize) -> [f64; 3] {
        let n = palm_count.max(1).min(self.joints_mm.len());
        let mut c = [0.0; 3];
        for j in &self.joints_mm[..n] {
            for a in 0..3 {
                c[a] += j[a];
            }
        }
        for a in &mut c {
            *a /= n as f64;
        }
        c
    }

    /// Centroid of valid depth pixels (crop center fallback at inference).
    pub fn mass_centroid(&self) -> Option<[f64; 3]> {
        let mut acc = [0.0f64; 3];
        let mut count = 0usize;
        for row in 0..self.height {
            for col in 0..self.width {
                let d = self.depth_at(col, row);
                if d > 0.0 {
                    let x = (col as f64 + 0.5 - self.intrinsics.cx) * d / self.intrinsics.fx;
                    let y = (row as f64 + 0.5 - self.intrinsics.cy) * d / self.intrinsics.fy;
                    acc[0] += x;
                    acc[1] += y;
                    acc[2] += d;
                    count += 1;
                }
            }
        }
        if count == 0 {
            return None;
        }
        Some([acc[0] / count as f64, acc[1] / count as f64, acc[2] / count as f64])
    }
}

/// Axis-aligned normalization cube around the hand.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CropSpec {
    /// Cube center, camera-space millimeters.
    pub center: [f64; 3],
    /// Cube edge length, millimeters.
    pub cube_size: f64,
}

/// Default cube edge: 300 mm encloses adult hands at dataset ranges.
pub const DEFAULT_CUBE_MM: f64 = 300.0;

impl CropSpec {
    pub fn new(center: [f64; 3], cube_size: f64) -> Self {
        CropSpec { center, cube_size }
    }

    pub fn normalize_point(&self, p: [f64; 3]) -> [f64; 3] {
        let s = 2.0 / self.cube_size;
        [
            (p[0] - self.center[0]) * s,
            (p[1] - self.center[1]) * s,
            (p[2] - self.center[2]) * s,
        ]
    }

    pub fn denormalize_point(&self, p: [f64; 3]) -> [f64; 3] {
        let s = self.cube_size / 2.0;
        [
            p[0] * s + self.center[0],
            p[1] * s + self.center[1],
            p[2] * s + self.center[2],
        ]
    }
}

/// Preprocessed network sample: 96×96 patch in [−1,1], normalized joints,
/// and the crop needed to map predictions back to millimeters.
#[derive(Clone, Debug)]
pub struct HandSample {
    /// Row-major 96×96, values in [−1,1]; out-of-cube and missing depth
    /// are exactly 1.
    pub patch: Vec<f64>,
    /// Topology-order joints in normalized cube coordinates.
    pub joints_norm: Vec<[f64; 3]>,
    pub crop: CropSpec,
}

impl HandSample {
    /// Joint coordinates back in camera-space millimeters.
    pub fn joints_mm(&self) -> Vec<[f64; 3]> {
        self.joints_norm.iter().map(|&j| self.crop.denormalize_point(j)).collect()
    }
}

/// Patch-coordinate convention: normalized x ∈ [−1,1] spans the 96 columns
/// with pixel centers at (col − 47.5)/48.
pub(crate) fn norm_to_pixel(x: f64) -> f64 {
    x * 48.0 + 47.5
}

pub(crate) fn pixel_to_norm(px: f64) -> f64 {
    (px - 47.5) / 48.0
}

fn normalized_depth(raw: f64, center_z: f64, cube_size: f64) -> f64 {
    let half = cube_size / 2.0;
    if raw <= 0.0 || (raw - center_z).abs() > half {
        // Missing or outside the cube range: background value 1.
        return 1.0;
    }
    (2.0 * (raw - center_z) / cube_size).clamp(-1.0, 1.0)
}

/// Crops the cube from the depth image, resizes bilinearly to 96×96, and
/// normalizes depth and joints into the cube frame.
pub fn crop_normalize(frame: &RawFrame, spec: &CropSpec) -> Result<HandSample> {
    if !(spec.cube_size > 0.0) {
        return Err(Error::Validation(format!("cube_size must be positive, got {}", spec.cube_size)));
    }
    let cz = spec.center[2];
    if !(cz > 0.0) || !spec.center.iter().all(|v| v.is_finite()) {
        return Err(Error::Crop(format!(
            "cube center {:?} is not in front of the camera",
            spec.center
        )));
    }
    let k = &frame.intrinsics;
    let [u_center, v_center] = k.project(spec.center);
    let half_u = (spec.cube_size / 2.0) * k.fx / cz;
    let half_v = (spec.cube_size / 2.0) * k.fy / cz;
    if u_center + half_u < 0.0
        || u_center - half_u > frame.width as f64
        || v_center + half_v < 0.0
        || v_center - half_v > frame.height as f64
    {
        return Err(Error::Crop(format!(
            "cube projects outside the {}x{} image",
            frame.width, frame.height
        )));
    }

    let sample_norm = |u: f64, v: f64| -> f64 {
        // Bilinear over the per-pixel normalized values, background 1.
        let uf = u - 0.5;
        let vf = v - 0.5;
        let u0 = uf.floor();
        let v0 = vf.floor();
        let du = uf - u0;
        let dv = vf - v0;
        let mut values = [0.0; 4];
        let mut weights = [0.0; 4];
        for (i, (di, wv)) in [(0.0, 1.0 - dv), (1.0, dv)].into_iter().enumerate() {
            for (j, (dj, wu)) in [(0.0, 1.0 - du), (1.0, du)].into_iter().enumerate() {
                let col = u0 + dj;
                let row = v0 + di;
                values[i * 2 + j] = if col < 0.0
                    || row < 0.0
                    || col >= frame.width as f64
                    || row >= frame.height as f64
                {
                    1.0
                } else {
                    normalized_depth(
                        frame.depth_at(col as usize, row as usize),
                        cz,
                        spec.cube_size,
                    )
                };
                weights[i * 2 + j] = wu * wv;
            }
        }
        // Constant neighborhoods pass through exactly, so background
        // regions stay at precisely 1 despite weight rounding.
        if values[1] == values[0] && values[2] == values[0] && values[3] == values[0] {
            return values[0];
        }
        values.iter().zip(&weights).map(|(v, w)| v * w).sum()
    };

    let mut patch = vec![0.0; PATCH_SIZE * PATCH_SIZE];
    for i in 0..PATCH_SIZE {
        let v = v_center + pixel_to_norm(i as f64) * half_v;
        for j in 0..PATCH_SIZE {
            let u = u_center + pixel_to_norm(j as f64) * half_u;
            patch[i * PATCH_SIZE + j] = sample_norm(u, v);
        }
    }
    let joints_norm = frame.joints_mm.iter().map(|&j| spec.normalize_point(j)).collect();
    Ok(HandSample { patch, joints_norm, crop: *spec })
}
