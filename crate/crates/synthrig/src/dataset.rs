//! On-disk frameset layout with bit-exact round-trips.
//!
//! Per frameset directory:
//! - `frame{g}_cam{n}.ppm`          8-bit RGB image (binary P6)
//! - `frame{g}_cam{n}.depth`        binary float map, magic `RDPT`, meters,
//!                                  +inf at sky
//! - `frame{g}_cam{n}.prior`        same format, inverse depth of the prior
//! - `frame{g}_cam{n}_sky.pgm`      8-bit mask (P5), nonzero = supervise
//! - `frame{g}_cam{n}_vehicle.pgm`  8-bit mask (P5), nonzero = supervise
//! - `sparse.txt`                   lines `frame cam y x inverse_depth`
//! - `poses.toml`                   vehicle poses and the src-to-tgt motion
//! - `rig.toml`                     camera intrinsics and extrinsics
//!
//! A dataset root holds `frameset_NNNN/` directories plus `manifest.toml`
//! carrying every generation seed, so the whole tree can be regenerated
//! bit-identically.

use std::io::{Read, Write};
use std::path::Path;

use camgeom::{CameraRig, RigidTransform};
use diffcore::RngSeed;
use serde::{Deserialize, Serialize};

use crate::frameset::{FrameSet, PixelMask, PriorDepth, SparseDepthTarget, SparseSample};
use crate::render::RenderedView;
use crate::{Result, SynthError};

const DEPTH_MAGIC: &[u8; 4] = b"RDPT";

fn err(path: &Path, msg: impl Into<String>) -> SynthError {
    SynthError::Dataset { path: path.display().to_string(), msg: msg.into() }
}

// --- PPM / PGM -------------------------------------------------------------

pub fn write_ppm(path: &Path, width: usize, height: usize, planes: &[f32]) -> Result<()> {
    assert_eq!(planes.len(), 3 * width * height);
    let mut buf = format!("P6\n{width} {height}\n255\n").into_bytes();
    for i in 0..width * height {
        for c in 0..3 {
            let v = (planes[c * width * height + i] * 255.0).round().clamp(0.0, 255.0) as u8;
            buf.push(v);
        }
    }
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn read_ppm(path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    let bytes = std::fs::read(path)?;
    let (w, h, maxval, off) = parse_netpbm_header(&bytes, b"P6").map_err(|m| err(path, m))?;
    if maxval != 255 {
        return Err(err(path, "only maxval 255 supported"));
    }
    let need = 3 * w * h;
    if bytes.len() < off + need {
        return Err(err(path, "truncated pixel data"));
    }
    let mut planes = vec![0.0f32; need];
    for i in 0..w * h {
        for c in 0..3 {
            planes[c * w * h + i] = bytes[off + i * 3 + c] as f32 / 255.0;
        }
    }
    Ok((w, h, planes))
}

pub fn write_pgm(path: &Path, mask: &PixelMask) -> Result<()> {
    let mut buf = format!("P5\n{} {}\n255\n", mask.width, mask.height).into_bytes();
    buf.extend(mask.data.iter().map(|&b| if b { 255u8 } else { 0 }));
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn read_pgm(path: &Path) -> Result<PixelMask> {
    let bytes = std::fs::read(path)?;
    let (w, h, _max, off) = parse_netpbm_header(&bytes, b"P5").map_err(|m| err(path, m))?;
    if bytes.len() < off + w * h {
        return Err(err(path, "truncated mask data"));
    }
    Ok(PixelMask { width: w, height: h, data: bytes[off..off + w * h].iter().map(|&v| v != 0).collect() })
}

fn parse_netpbm_header(bytes: &[u8], magic: &[u8]) -> std::result::Result<(usize, usize, usize, usize), String> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(format!("expected {} header", String::from_utf8_lossy(magic)));
    }
    let mut fields = Vec::new();
    let mut pos = 2usize;
    while fields.len() < 3 && pos < bytes.len() {
        while pos < bytes.len() && (bytes[pos] as char).is_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !(bytes[pos] as char).is_whitespace() {
            pos += 1;
        }
        let field = std::str::from_utf8(&bytes[start..pos]).map_err(|e| e.to_string())?;
        fields.push(field.parse::<usize>().map_err(|e| e.to_string())?);
    }
    if fields.len() != 3 {
        return Err("short header".into());
    }
    Ok((fields[0], fields[1], fields[2], pos + 1))
}

// --- binary float maps -----------------------------------------------------

pub fn write_float_map(path: &Path, width: usize, height: usize, data: &[f32]) -> Result<()> {
    assert_eq!(data.len(), width * height);
    let mut f = std::fs::File::create(path)?;
    f.write_all(DEPTH_MAGIC)?;
    f.write_all(&(width as u32).to_le_bytes())?;
    f.write_all(&(height as u32).to_le_bytes())?;
    let mut buf = Vec::with_capacity(4 * data.len());
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_float_map(path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    let mut f = std::fs::File::open(path)?;
    let mut head = [0u8; 12];
    f.read_exact(&mut head).map_err(|_| err(path, "short header"))?;
    if &head[..4] != DEPTH_MAGIC {
        return Err(err(path, "bad magic"));
    }
    let w = u32::from_le_bytes(head[4..8].try_into().unwrap()) as usize;
    let h = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
    let mut rest = Vec::new();
    f.read_to_end(&mut rest)?;
    if rest.len() != 4 * w * h {
        return Err(err(path, format!("expected {} floats, found {} bytes", w * h, rest.len())));
    }
    let data = rest.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((w, h, data))
}

// --- sparse targets ----------------------------------------------------------

fn write_sparse(path: &Path, sparse: &[Vec<SparseDepthTarget>]) -> Result<()> {
    let mut out = String::from("# frame cam y x inverse_depth\n");
    for (g, frame) in sparse.iter().enumerate() {
        for (n, target) in frame.iter().enumerate() {
            for s in &target.samples {
                // f32 Display round-trips exactly.
                out.push_str(&format!("{g} {n} {} {} {}\n", s.y, s.x, s.inv_depth));
            }
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn read_sparse(
    path: &Path,
    frames: usize,
    cams: usize,
    width: usize,
    height: usize,
    d_min: f64,
    d_max: f64,
) -> Result<Vec<Vec<SparseDepthTarget>>> {
    let text = std::fs::read_to_string(path)?;
    let mut out: Vec<Vec<SparseDepthTarget>> = (0..frames)
        .map(|_| {
            (0..cams)
                .map(|_| SparseDepthTarget { width, height, samples: Vec::new(), d_min, d_max })
                .collect()
        })
        .collect();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let mut next = |name: &str| {
            it.next().ok_or_else(|| err(path, format!("line {}: missing {name}", ln + 1)))
        };
        let g: usize = next("frame")?.parse().map_err(|e| err(path, format!("line {}: {e}", ln + 1)))?;
        let n: usize = next("cam")?.parse().map_err(|e| err(path, format!("line {}: {e}", ln + 1)))?;
        let y: usize = next("y")?.parse().map_err(|e| err(path, format!("line {}: {e}", ln + 1)))?;
        let x: usize = next("x")?.parse().map_err(|e| err(path, format!("line {}: {e}", ln + 1)))?;
        let inv: f32 = next("inverse_depth")?.parse().map_err(|e| err(path, format!("line {}: {e}", ln + 1)))?;
        if g >= frames || n >= cams || y >= height || x >= width {
            return Err(err(path, format!("line {}: index out of range", ln + 1)));
        }
        out[g][n].samples.push(SparseSample { x, y, inv_depth: inv });
    }
    Ok(out)
}

// --- poses -------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PosesFile {
    schema_version: u32,
    d_min: f64,
    d_max: f64,
    seed: u64,
    pose_src_to_tgt: Vec<f64>,
    vehicle_poses: Vec<Vec<f64>>,
}

// --- frameset ------------------------------------------------------------------

pub fn save_frameset(dir: &Path, fs: &FrameSet) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (g, frame) in fs.views.iter().enumerate() {
        for (n, view) in frame.iter().enumerate() {
            let stem = format!("frame{g}_cam{n}");
            write_ppm(&dir.join(format!("{stem}.ppm")), view.width, view.height, &view.rgb)?;
            write_float_map(&dir.join(format!("{stem}.depth")), view.width, view.height, &view.depth_f32())?;
            let prior = &fs.prior[g][n];
            write_float_map(&dir.join(format!("{stem}.prior")), prior.width, prior.height, &prior.data)?;
            write_pgm(&dir.join(format!("{stem}_sky.pgm")), &view.sky_mask())?;
            write_pgm(&dir.join(format!("{stem}_vehicle.pgm")), &fs.vehicle_masks[g][n])?;
        }
    }
    write_sparse(&dir.join("sparse.txt"), &fs.sparse)?;
    fs.rig.save(&dir.join("rig.toml"))?;
    let poses = PosesFile {
        schema_version: 1,
        d_min: fs.d_min,
        d_max: fs.d_max,
        seed: fs.seed.0,
        pose_src_to_tgt: fs.pose_src_to_tgt.to_row_major().to_vec(),
        vehicle_poses: fs.vehicle_poses.iter().map(|p| p.to_row_major().to_vec()).collect(),
    };
    let text = toml::to_string_pretty(&poses).map_err(|e| err(dir, e.to_string()))?;
    std::fs::write(dir.join("poses.toml"), text)?;
    Ok(())
}

pub fn load_frameset(dir: &Path) -> Result<FrameSet> {
    let rig = CameraRig::load(&dir.join("rig.toml"))?;
    let poses_path = dir.join("poses.toml");
    let poses: PosesFile = toml::from_str(&std::fs::read_to_string(&poses_path)?)
        .map_err(|e| err(&poses_path, e.to_string()))?;
    if poses.schema_version != 1 {
        return Err(err(&poses_path, format!("schema version {}", poses.schema_version)));
    }
    let to_rt = |v: &Vec<f64>| -> Result<RigidTransform> {
        let arr: [f64; 16] = v.as_slice().try_into().map_err(|_| err(&poses_path, "pose needs 16 values"))?;
        Ok(RigidTransform::from_row_major(&arr)?)
    };
    let vehicle_poses = poses.vehicle_poses.iter().map(to_rt).collect::<Result<Vec<_>>>()?;
    let pose_src_to_tgt = to_rt(&poses.pose_src_to_tgt)?;
    let frames = vehicle_poses.len();
    let cams = rig.len();

    let mut views = Vec::with_capacity(frames);
    let mut prior = Vec::with_capacity(frames);
    let mut vehicle_masks = Vec::with_capacity(frames);
    for g in 0..frames {
        let mut frame_views = Vec::with_capacity(cams);
        let mut frame_prior = Vec::with_capacity(cams);
        let mut frame_masks = Vec::with_capacity(cams);
        for n in 0..cams {
            let stem = format!("frame{g}_cam{n}");
            let (w, h, rgb) = read_ppm(&dir.join(format!("{stem}.ppm")))?;
            let (dw, dh, depth) = read_float_map(&dir.join(format!("{stem}.depth")))?;
            if (dw, dh) != (w, h) {
                return Err(err(dir, format!("{stem}: depth extents {dw}x{dh} vs image {w}x{h}")));
            }
            let (pw, ph, prior_data) = read_float_map(&dir.join(format!("{stem}.prior")))?;
            if (pw, ph) != (w, h) {
                return Err(err(dir, format!("{stem}: prior extents mismatch")));
            }
            let _sky = read_pgm(&dir.join(format!("{stem}_sky.pgm")))?;
            let vehicle = read_pgm(&dir.join(format!("{stem}_vehicle.pgm")))?;
            frame_views.push(RenderedView { width: w, height: h, rgb, depth: depth.iter().map(|&v| v as f64).collect() });
            frame_prior.push(PriorDepth { width: w, height: h, data: prior_data });
            frame_masks.push(vehicle);
        }
        views.push(frame_views);
        prior.push(frame_prior);
        vehicle_masks.push(frame_masks);
    }
    let (w, h) = (views[0][0].width, views[0][0].height);
    let sparse = read_sparse(&dir.join("sparse.txt"), frames, cams, w, h, poses.d_min, poses.d_max)?;
    Ok(FrameSet {
        seed: RngSeed(poses.seed),
        rig,
        views,
        vehicle_poses,
        pose_src_to_tgt,
        sparse,
        prior,
        vehicle_masks,
        d_min: poses.d_min,
        d_max: poses.d_max,
    })
}

// --- manifest ------------------------------------------------------------------

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub width: usize,
    pub height: usize,
    pub sparse_fraction: f64,
    pub seeds: Vec<u64>,
}

impl DatasetManifest {
    pub fn save(&self, root: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self).map_err(|e| err(root, e.to_string()))?;
        std::fs::write(root.join("manifest.toml"), text)?;
        Ok(())
    }

    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join("manifest.toml");
        let m: DatasetManifest =
            toml::from_str(&std::fs::read_to_string(&path)?).map_err(|e| err(&path, e.to_string()))?;
        if m.schema_version != 1 {
            return Err(err(&path, format!("schema version {}", m.schema_version)));
        }
        Ok(m)
    }

    pub fn frameset_dir(root: &Path, index: usize) -> std::path::PathBuf {
        root.join(format!("frameset_{index:04}"))
    }
}
