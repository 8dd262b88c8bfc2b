//! Synthetic articulated hand: forward kinematics over palm + five
//! chains, depth rendering by analytic ray casting against capsules and
//! an ellipsoid (nearest surface wins, so self-occlusion arises
//! naturally), and a seeded dataset generator.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::pipeline::manifest::{write_depth_bin, write_manifest, DEPTH_SCALE_UM};
use crate::pipeline::{CameraIntrinsics, RawFrame};
use crate::rng::{keyed_rng, Stream};
use crate::topology::JointTopology;

pub const MAX_FLEXION_DEG: f64 = 90.0;
pub const MAX_ABDUCTION_DEG: f64 = 20.0;

/// Per-finger articulation: one abduction angle at the MCP (spread within
/// the palm plane) and one flexion angle per phalanx (curl toward the
/// palm normal).
#[derive(Clone, Debug)]
pub struct FingerPose {
    /// Radians, |abduction| ≤ 20°.
    pub abduction: f64,
    /// Radians, each in [0°, 90°]; length = chain_length − 1.
    pub flexion: Vec<f64>,
}

/// Full hand pose: global rigid placement plus per-finger articulation.
#[derive(Clone, Debug)]
pub struct HandPose {
    /// Intrinsic XYZ Euler angles, radians.
    pub global_rotation: [f64; 3],
    /// Camera-space millimeters.
    pub global_translation: [f64; 3],
    pub fingers: Vec<FingerPose>,
}

/// Canonical hand measurements, fixed for the synthetic generator.
/// The palm lies in the local x–y plane; fingers extend toward +y and
/// flex toward +z.
#[derive(Clone, Debug)]
pub struct HandGeometry {
    /// Direction of each straight finger in the palm plane, radians from +y.
    pub splay: [f64; 5],
    /// Palm-center → MCP distance per finger, mm.
    pub mcp_distance: [f64; 5],
    /// Phalanx lengths per finger, mm (longest chains use all entries).
    pub link_lengths: [[f64; 3]; 5],
    /// Capsule radii per phalanx, mm.
    pub link_radii: [f64; 3],
    /// Palm ellipsoid: center offset along y and semi-axes, mm.
    pub palm_center: [f64; 3],
    pub palm_semi_axes: [f64; 3],
    /// Metacarpal capsule radius (palm center → MCP), mm.
    pub metacarpal_radius: f64,
}

impl Default for HandGeometry {
    fn default() -> Self {
        HandGeometry {
            splay: [
                -55.0 * PI / 180.0,
                -20.0 * PI / 180.0,
                0.0,
                18.0 * PI / 180.0,
                36.0 * PI / 180.0,
            ],
            mcp_distance: [48.0, 62.0, 65.0, 62.0, 55.0],
            link_lengths: [
                [34.0, 26.0, 20.0],
                [40.0, 24.0, 18.0],
                [44.0, 26.0, 19.0],
                [40.0, 24.0, 18.0],
                [32.0, 20.0, 16.0],
            ],
            link_radii: [9.0, 8.0, 7.0],
            palm_center: [0.0, 8.0, 0.0],
            palm_semi_axes: [40.0, 52.0, 14.0],
            metacarpal_radius: 10.0,
        }
    }
}

fn vec_add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn vec_scale(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn rot_xyz(angles: [f64; 3]) -> [[f64; 3]; 3] {
    let (sx, cx) = angles[0].sin_cos();
    let (sy, cy) = angles[1].sin_cos();
    let (sz, cz) = angles[2].sin_cos();
    // R = Rz · Ry · Rx
    [
        [cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx],
        [sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx],
        [-sy, cy * sx, cy * cx],
    ]
}

fn mat_apply(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

/// Palm-joint positions in the hand's local frame.
fn local_palm_joints(count: usize) -> Vec<[f64; 3]> {
    let fixed: [[f64; 3]; 4] =
        [[0.0, 0.0, 0.0], [-24.0, -28.0, 0.0], [24.0, -28.0, 0.0], [0.0, -45.0, 0.0]];
    (0..count)
        .map(|i| {
            if i < 4 {
                fixed[i]
            } else {
                let a = 2.0 * PI * (i as f64) / (count as f64);
                [30.0 * a.cos(), -30.0 * a.sin().abs(), 0.0]
            }
        })
        .collect()
}

/// Joint positions of one finger in the hand's local frame.
///
/// All flexion rotations share the finger's hinge axis, so directions stay
/// in the plane spanned by the splayed base direction and the palm
/// normal: dir(Φ) = d0·cos Φ + ẑ·sin Φ with Φ the accumulated flexion.
fn local_finger_joints(
    geometry: &HandGeometry,
    finger: usize,
    pose: &FingerPose,
    chain_len: usize,
) -> Vec<[f64; 3]> {
    let angle = geometry.splay[finger] + pose.abduction;
    let d0 = [angle.sin(), angle.cos(), 0.0];
    let mcp = vec_scale(d0, geometry.mcp_distance[finger]);

    let mut joints = Vec::with_capacity(chain_len);
    joints.push(mcp);
    let mut accumulated = 0.0;
    let mut tip = mcp;
    for link in 0..chain_len.saturating_sub(1) {
        accumulated += pose.flexion[link];
        let dir = [
            d0[0] * accumulated.cos(),
            d0[1] * accumulated.cos(),
            accumulated.sin(),
        ];
        tip = vec_add(tip, vec_scale(dir, geometry.link_lengths[finger][link]));
        joints.push(tip);
    }
    joints
}

fn validate_pose(pose: &HandPose, topology: &JointTopology) -> Result<()> {
    if pose.fingers.len() != 5 {
        return Err(Error::Validation(format!(
            "pose has {} fingers, expected 5",
            pose.fingers.len()
        )));
    }
    let max_flex = MAX_FLEXION_DEG * PI / 180.0;
    let max_abd = MAX_ABDUCTION_DEG * PI / 180.0;
    for (k, (finger, chain)) in pose.fingers.iter().zip(&topology.fingers).enumerate() {
        if finger.flexion.len() + 1 != chain.len() {
            return Err(Error::Validation(format!(
                "finger {k} has {} flexion angles for a {}-joint chain",
                finger.flexion.len(),
                chain.len()
            )));
        }
        if finger.abduction.abs() > max_abd + 1e-12 {
            return Err(Error::Validation(format!(
                "finger {k} abduction {:.1}° outside ±{MAX_ABDUCTION_DEG}°",
                finger.abduction * 180.0 / PI
            )));
        }
        for (i, &f) in finger.flexion.iter().enumerate() {
            if !(0.0..=max_flex + 1e-12).contains(&f) {
                return Err(Error::Validation(format!(
                    "finger {k} link {i} flexion {:.1}° outside [0°, {MAX_FLEXION_DEG}°]",
                    f * 180.0 / PI
                )));
            }
        }
    }
    Ok(())
}

/// Forward kinematics: topology-order joint positions in camera space.
pub fn forward_kinematics(
    geometry: &HandGeometry,
    pose: &HandPose,
    topology: &JointTopology,
) -> Result<Vec<[f64; 3]>> {
    validate_pose(pose, topology)?;
    let rot = rot_xyz(pose.global_rotation);
    let place = |p: [f64; 3]| vec_add(mat_apply(&rot, p), pose.global_translation);

    let mut joints = Vec::with_capacity(topology.total_joints());
    for p in local_palm_joints(topology.palm_count()) {
        joints.push(place(p));
    }
    for (k, chain) in topology.fingers.iter().enumerate() {
        for p in local_finger_joints(geometry, k, &pose.fingers[k], chain.len()) {
            joints.push(place(p));
        }
    }
    Ok(joints)
}

enum Primitive {
    Capsule { a: [f64; 3], b: [f64; 3], radius: f64 },
    Ellipsoid { center: [f64; 3], semi: [f64; 3], rot: [[f64; 3]; 3] },
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn vec_sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Smallest positive root of At² + Bt + C = 0.
fn quadratic_hit(a: f64, b: f64, c: f64) -> Option<f64> {
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 || a.abs() < 1e-18 {
        return None;
    }
    let sq = disc.sqrt();
    let t0 = (-b - sq) / (2.0 * a);
    let t1 = (-b + sq) / (2.0 * a);
    if t0 > 1e-9 {
        Some(t0)
    } else if t1 > 1e-9 {
        Some(t1)
    } else {
        None
    }
}

fn ray_sphere(origin: [f64; 3], dir: [f64; 3], center: [f64; 3], radius: f64) -> Option<f64> {
    let oc = vec_sub(origin, center);
    quadratic_hit(dot(dir, dir), 2.0 * dot(oc, dir), dot(oc, oc) - radius * radius)
}

fn ray_capsule(dir: [f64; 3], a: [f64; 3], b: [f64; 3], radius: f64) -> Option<f64> {
    // Ray origin is the camera at 0.
    let axis = vec_sub(b, a);
    let len2 = dot(axis, axis);
    if len2 < 1e-12 {
        return ray_sphere([0.0; 3], dir, a, radius);
    }
    let inv_len = 1.0 / len2.sqrt();
    let axis_hat = vec_scale(axis, inv_len);
    let oc = vec_scale(a, -1.0);
    let d_perp = vec_sub(dir, vec_scale(axis_hat, dot(dir, axis_hat)));
    let o_perp = vec_sub(oc, vec_scale(axis_hat, dot(oc, axis_hat)));
    let mut best: Option<f64> = None;
    if let Some(t) = quadratic_hit(
        dot(d_perp, d_perp),
        2.0 * dot(o_perp, d_perp),
        dot(o_perp, o_perp) - radius * radius,
    ) {
        // Accept only hits between the caps.
        let hit = vec_scale(dir, t);
        let s = dot(vec_sub(hit, a), axis_hat);
        if s >= 0.0 && s * s <= len2 {
            best = Some(t);
        }
    }
    for cap in [a, b] {
        if let Some(t) = ray_sphere([0.0; 3], dir, cap, radius) {
            if best.map_or(true, |bt| t < bt) {
                best = Some(t);
            }
        }
    }
    best
}

fn ray_ellipsoid(
    dir: [f64; 3],
    center: [f64; 3],
    semi: [f64; 3],
    rot: &[[f64; 3]; 3],
) -> Option<f64> {
    // Into the ellipsoid's frame (rotation transpose), then scale to a
    // unit sphere.
    let rt_apply = |v: [f64; 3]| {
        [
            rot[0][0] * v[0] + rot[1][0] * v[1] + rot[2][0] * v[2],
            rot[0][1] * v[0] + rot[1][1] * v[1] + rot[2][1] * v[2],
            rot[0][2] * v[0] + rot[1][2] * v[1] + rot[2][2] * v[2],
        ]
    };
    let o = rt_apply(vec_scale(center, -1.0));
    let d = rt_apply(dir);
    let o = [o[0] / semi[0], o[1] / semi[1], o[2] / semi[2]];
    let d = [d[0] / semi[0], d[1] / semi[1], d[2] / semi[2]];
    quadratic_hit(dot(d, d), 2.0 * dot(o, d), dot(o, o) - 1.0)
}

fn build_primitives(
    geometry: &HandGeometry,
    pose: &HandPose,
    topology: &JointTopology,
) -> Vec<Primitive> {
    let rot = rot_xyz(pose.global_rotation);
    let place = |p: [f64; 3]| vec_add(mat_apply(&rot, p), pose.global_translation);

    let mut prims = Vec::new();
    prims.push(Primitive::Ellipsoid {
        center: place(geometry.palm_center),
        semi: geometry.palm_semi_axes,
        rot,
    });
    for (k, chain) in topology.fingers.iter().enumerate() {
        let joints = local_finger_joints(geometry, k, &pose.fingers[k], chain.len());
        prims.push(Primitive::Capsule {
            a: place([0.0, 0.0, 0.0]),
            b: place(joints[0]),
            radius: geometry.metacarpal_radius,
        });
        for (li, w) in joints.windows(2).enumerate() {
            prims.push(Primitive::Capsule {
                a: place(w[0]),
                b: place(w[1]),
                radius: geometry.link_radii[li.min(2)],
            });
        }
        // A fingertip cap so the last joint is embedded in geometry.
        if let Some(&tip) = joints.last() {
            prims.push(Primitive::Capsule {
                a: place(tip),
                b: place(tip),
                radius: geometry.link_radii[2] * 0.9,
            });
        }
    }
    prims
}

/// Nearest-hit depth along the ray through pixel center (col+0.5, row+0.5);
/// returns z-depth in mm, or None on a miss.
fn cast_ray(prims: &[Primitive], k: &CameraIntrinsics, col: usize, row: usize) -> Option<f64> {
    let dir = [
        (col as f64 + 0.5 - k.cx) / k.fx,
        (row as f64 + 0.5 - k.cy) / k.fy,
        1.0,
    ];
    let mut best: Option<f64> = None;
    for prim in prims {
        let t = match prim {
            Primitive::Capsule { a, b, radius } => ray_capsule(dir, *a, *b, *radius),
            Primitive::Ellipsoid { center, semi, rot } => ray_ellipsoid(dir, *center, *semi, rot),
        };
        if let Some(t) = t {
            if best.map_or(true, |bt| t < bt) {
                best = Some(t);
            }
        }
    }
    // Depth maps store z-distance; dir.z == 1 so z = t.
    best
}

/// Quantizes to the depth-file grid so a written frame reloads
/// bit-identically.
fn quantize_depth(z_mm: f64) -> f64 {
    let unit = DEPTH_SCALE_UM as f64 / 1000.0;
    let raw = (z_mm / unit).round().clamp(0.0, u16::MAX as f64) as u16;
    raw as f64 * unit
}

/// Renders one frame: ray-cast depth (0 where no surface is hit) plus the
/// exact forward-kinematics joints.
pub fn render_frame(
    geometry: &HandGeometry,
    pose: &HandPose,
    topology: &JointTopology,
    intrinsics: &CameraIntrinsics,
    width: usize,
    height: usize,
) -> Result<RawFrame> {
    let joints_mm = forward_kinematics(geometry, pose, topology)?;
    let prims = build_primitives(geometry, pose, topology);
    let mut depth = vec![0.0; width * height];
    for row in 0..height {
        for col in 0..width {
            if let Some(z) = cast_ray(&prims, intrinsics, col, row) {
                depth[row * width + col] = quantize_depth(z);
            }
        }
    }
    Ok(RawFrame { width, height, depth, joints_mm, intrinsics: *intrinsics })
}

/// Seeded random pose within anatomical bounds, placed 500–700 mm from
/// the camera with moderate out-of-plane tilt.
pub fn sample_pose<R: Rng>(topology: &JointTopology, rng: &mut R) -> HandPose {
    let deg = PI / 180.0;
    let fingers = topology
        .fingers
        .iter()
        .map(|chain| FingerPose {
            abduction: rng.gen_range(-15.0 * deg..=15.0 * deg),
            flexion: (0..chain.len().saturating_sub(1))
                .map(|_| rng.gen_range(0.0..=80.0 * deg))
                .collect(),
        })
        .collect();
    HandPose {
        global_rotation: [
            rng.gen_range(-30.0 * deg..=30.0 * deg),
            rng.gen_range(-30.0 * deg..=30.0 * deg),
            rng.gen_range(-PI..=PI),
        ],
        global_translation: [
            rng.gen_range(-40.0..=40.0),
            rng.gen_range(-30.0..=30.0),
            rng.gen_range(500.0..=700.0),
        ],
        fingers,
    }
}

/// Generates `frames` synthetic frames under `dir`: depth files in
/// `depth/`, a manifest, and a topology descriptor. Deterministic per
/// (topology, seed).
pub fn generate_dataset(
    dir: &Path,
    frames: usize,
    topology: &JointTopology,
    seed: u64,
) -> Result<Vec<RawFrame>> {
    if frames == 0 {
        return Err(Error::Usage("frame count must be at least 1".into()));
    }
    topology.validate()?;
    let geometry = HandGeometry::default();
    let intrinsics = CameraIntrinsics::synthetic();
    let depth_dir = dir.join("depth");
    std::fs::create_dir_all(&depth_dir)
        .map_err(|e| Error::io(depth_dir.display().to_string(), e))?;

    let mut rendered = Vec::with_capacity(frames);
    let mut records = Vec::with_capacity(frames);
    for i in 0..frames {
        let mut rng = keyed_rng(seed, Stream::Synth, i as u64);
        let pose = sample_pose(topology, &mut rng);
        let frame = render_frame(&geometry, &pose, topology, &intrinsics, 320, 240)?;
        let rel = format!("depth/frame_{i:05}.bin");
        write_depth_bin(&dir.join(&rel), &frame)?;
        records.push((rel, frame.intrinsics, frame.joints_mm.clone()));
        rendered.push(frame);
    }
    write_manifest(&dir.join("manifest.txt"), topology.total_joints(), &records)?;
    std::fs::write(dir.join("topology.json"), topology.to_json())
        .map_err(|e| Error::io(dir.join("topology.json").display().to_string(), e))?;
    Ok(rendered)
}
