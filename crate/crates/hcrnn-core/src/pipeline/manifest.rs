//! Dataset manifest: one line per frame with the depth-file path, camera
//! intrinsics, and T×3 joint millimeters. Depth files are raw
//! little-endian u16 grids with a (height, width, scale µm/unit) header,
//! or 16-bit single-channel PNGs interpreted as whole millimeters.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::pipeline::{CameraIntrinsics, RawFrame};

/// Depth quantum of generated .bin files: 100 µm per unit.
pub const DEPTH_SCALE_UM: u32 = 100;

pub fn write_depth_bin(path: &Path, frame: &RawFrame) -> Result<()> {
    let unit = DEPTH_SCALE_UM as f64 / 1000.0;
    let mut bytes = Vec::with_capacity(12 + frame.depth.len() * 2);
    bytes.extend_from_slice(&(frame.height as u32).to_le_bytes());
    bytes.extend_from_slice(&(frame.width as u32).to_le_bytes());
    bytes.extend_from_slice(&DEPTH_SCALE_UM.to_le_bytes());
    for &d in &frame.depth {
        let raw = (d / unit).round().clamp(0.0, u16::MAX as f64) as u16;
        bytes.extend_from_slice(&raw.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
}

fn read_depth_bin(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    if bytes.len() < 12 {
        return Err(Error::Format(format!(
            "depth file {} truncated before header",
            path.display()
        )));
    }
    let height = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let scale_um = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let expected = 12 + height * width * 2;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "depth file {} has {} bytes, header implies {}",
            path.display(),
            bytes.len(),
            expected
        )));
    }
    let unit = scale_um as f64 / 1000.0;
    let depth = bytes[12..]
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]) as f64 * unit)
        .collect();
    Ok((width, height, depth))
}

fn read_depth_png(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let img = image::open(path)
        .map_err(|e| Error::Format(format!("depth png {}: {e}", path.display())))?
        .into_luma16();
    let (width, height) = (img.width() as usize, img.height() as usize);
    let depth = img.into_raw().into_iter().map(|v| v as f64).collect();
    Ok((width, height, depth))
}

pub fn read_depth_file(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("bin") => read_depth_bin(path),
        Some("png") => read_depth_png(path),
        other => Err(Error::Format(format!(
            "unsupported depth file extension {:?} for {}",
            other,
            path.display()
        ))),
    }
}

/// Writes a manifest with a `# joints=T` header.
pub fn write_manifest(
    path: &Path,
    joints: usize,
    records: &[(String, CameraIntrinsics, Vec<[f64; 3]>)],
) -> Result<()> {
    let mut text = format!("# joints={joints}\n");
    for (depth_path, k, js) in records {
        let mut line = format!("{depth_path} {} {} {} {}", k.fx, k.fy, k.cx, k.cy);
        for j in js {
            for v in j {
                line.push(' ');
                line.push_str(&v.to_string());
            }
        }
        text.push_str(&line);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Streaming manifest reader; yields frames in file order. Per-frame
/// failures (malformed record, unreadable depth file) surface as `Err`
/// items and iteration continues with the next line.
pub struct ManifestReader {
    lines: std::iter::Enumerate<std::io::Lines<BufReader<fs::File>>>,
    base_dir: PathBuf,
    expected_joints: usize,
}

pub fn load_manifest(path: &Path, expected_joints: usize) -> Result<ManifestReader> {
    let file = fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut reader = ManifestReader {
        lines: BufReader::new(file).lines().enumerate(),
        base_dir: path.parent().unwrap_or(Path::new(".")).to_path_buf(),
        expected_joints,
    };
    reader.check_header(path)?;
    Ok(reader)
}

impl ManifestReader {
    fn check_header(&mut self, path: &Path) -> Result<()> {
        // Peek is not possible on Lines; re-open to inspect the first line.
        let file = fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut first = String::new();
        BufReader::new(file)
            .read_line(&mut first)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        if let Some(rest) = first.trim().strip_prefix("# joints=") {
            let declared: usize = rest
                .trim()
                .parse()
                .map_err(|_| Error::Parse { line: 1, msg: format!("bad joints header `{first}`") })?;
            if declared != self.expected_joints {
                return Err(Error::Validation(format!(
                    "manifest declares {declared} joints, topology expects {}",
                    self.expected_joints
                )));
            }
        }
        Ok(())
    }

    fn parse_line(&self, line_no: usize, line: &str) -> Result<RawFrame> {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let expected = 5 + 3 * self.expected_joints;
        if tokens.len() != expected {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("{} fields, expected {} (path, 4 intrinsics, {}×3 joints)",
                    tokens.len(), expected, self.expected_joints),
            });
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("bad {what} value `{s}`"),
            })
        };
        let intrinsics = CameraIntrinsics {
            fx: num(tokens[1], "fx")?,
            fy: num(tokens[2], "fy")?,
            cx: num(tokens[3], "cx")?,
            cy: num(tokens[4], "cy")?,
        };
        let mut joints = Vec::with_capacity(self.expected_joints);
        for chunk in tokens[5..].chunks_exact(3) {
            joints.push([
                num(chunk[0], "joint")?,
                num(chunk[1], "joint")?,
                num(chunk[2], "joint")?,
            ]);
        }
        let depth_path = self.base_dir.join(tokens[0]);
        let (width, height, depth) = read_depth_file(&depth_path)?;
        Ok(RawFrame { width, height, depth, joints_mm: joints, intrinsics })
    }
}

impl Iterator for ManifestReader {
    type Item = Result<RawFrame>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let (idx, line) = self.lines.next()?;
            let line = match line {
                Ok(l) => l,
                Err(e) => {
                    return Some(Err(Error::Parse {
                        line: idx + 1,
                        msg: format!("unreadable line: {e}"),
                    }))
                }
            };
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            return Some(self.parse_line(idx + 1, trimmed));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::synth::generate_dataset;
    use crate::topology::JointTopology;

    #[test]
    fn synthetic_dataset_round_trips_bit_identically() {
        let dir = tempfile::tempdir().unwrap();
        let topology = JointTopology::icvl();
        let rendered = generate_dataset(dir.path(), 3, &topology, 99).unwrap();

        let reloaded: Vec<RawFrame> =
            load_manifest(&dir.path().join("manifest.txt"), topology.total_joints())
                .unwrap()
                .collect::<Result<_>>()
                .unwrap();
        assert_eq!(reloaded.len(), rendered.len());
        for (a, b) in rendered.iter().zip(&reloaded) {
            assert_eq!(a.depth, b.depth, "depth must reload bit-identically");
            assert_eq!(a.joints_mm, b.joints_mm, "joints must reload bit-identically");
            assert_eq!(a.intrinsics, b.intrinsics);
        }
    }

    #[test]
    fn short_record_names_its_line() {
        let dir = tempfile::tempdir().unwrap();
        let topology = JointTopology::icvl();
        generate_dataset(dir.path(), 2, &topology, 5).unwrap();
        let path = dir.path().join("manifest.txt");
        // Drop one number from the second record (line 3: header + 2 records).
        let text = fs::read_to_string(&path).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let truncated = lines[2].rsplit_once(' ').unwrap().0.to_string();
        lines[2] = truncated;
        fs::write(&path, lines.join("\n")).unwrap();

        let frames: Vec<_> = load_manifest(&path, topology.total_joints()).unwrap().collect();
        assert!(frames[0].is_ok());
        match &frames[1] {
            Err(Error::Parse { line, .. }) => assert_eq!(*line, 3),
            other => panic!("expected parse error with line number, got {other:?}"),
        }
    }

    #[test]
    fn joint_count_mismatch_is_a_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let topology = JointTopology::icvl();
        generate_dataset(dir.path(), 1, &topology, 5).unwrap();
        match load_manifest(&dir.path().join("manifest.txt"), 21) {
            Err(Error::Validation(_)) => {}
            Err(other) => panic!("expected validation error, got {other:?}"),
            Ok(_) => panic!("expected validation error"),
        }
    }

    #[test]
    fn streams_in_deterministic_order() {
        let dir = tempfile::tempdir().unwrap();
        let topology = JointTopology::icvl();
        generate_dataset(dir.path(), 64, &topology, 123).unwrap();
        let path = dir.path().join("manifest.txt");
        let t = topology.total_joints();
        let first: Vec<_> = load_manifest(&path, t)
            .unwrap()
            .map(|f| f.unwrap().joints_mm[0])
            .collect();
        let second: Vec<_> = load_manifest(&path, t)
            .unwrap()
            .map(|f| f.unwrap().joints_mm[0])
            .collect();
        assert_eq!(first.len(), 64);
        assert_eq!(first, second);
    }

    #[test]
    fn same_seed_regenerates_byte_identical_files() {
        let topology = JointTopology::msra();
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        generate_dataset(dir_a.path(), 2, &topology, 31).unwrap();
        generate_dataset(dir_b.path(), 2, &topology, 31).unwrap();
        for rel in ["manifest.txt", "topology.json", "depth/frame_00000.bin", "depth/frame_00001.bin"] {
            let a = fs::read(dir_a.path().join(rel)).unwrap();
            let b = fs::read(dir_b.path().join(rel)).unwrap();
            assert_eq!(a, b, "{rel} must be byte-identical across same-seed runs");
        }
    }
}
