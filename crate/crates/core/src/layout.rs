//! On-disk episode layout.
//!
//! ```text
//! episode_dir/
//!   manifest.json        episode metadata, frame timestamps, optional config
//!   frames/%06d.png      RGB8
//!   masks/<name>/%06d.png  0 = background, 255 = mask
//!   poses.jsonl          {"t_ns", "trans", "quat_wxyz"} per line
//!   rig.json             optional camera rig
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use image::ImageFormat;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::episode::{CameraRig, Episode, EpisodeError, EpisodeMeta, Frame, Role};
use crate::pose::TimedPoseRecord;
use crate::raster::Mask;

pub const MANIFEST: &str = "manifest.json";
pub const POSES: &str = "poses.jsonl";
pub const RIG: &str = "rig.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeManifest {
    pub episode_id: String,
    pub role: Role,
    pub task: String,
    pub obj_name: String,
    pub frame_count: usize,
    pub image_width: u32,
    pub image_height: u32,
    pub frame_timestamps_ns: Vec<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EpisodeError + '_ {
    move |source| EpisodeError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn json_err(path: &Path) -> impl FnOnce(serde_json::Error) -> EpisodeError + '_ {
    move |source| EpisodeError::Json {
        path: path.display().to_string(),
        source,
    }
}

fn image_err(path: &Path) -> impl FnOnce(image::ImageError) -> EpisodeError + '_ {
    move |source| EpisodeError::Image {
        path: path.display().to_string(),
        source,
    }
}

pub fn frame_file(idx: usize) -> String {
    format!("{idx:06}.png")
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), EpisodeError> {
    let mut text = serde_json::to_string_pretty(value).map_err(json_err(path))?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, EpisodeError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(json_err(path))
}

/// One compact JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), EpisodeError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut out, item).map_err(json_err(path))?;
        out.write_all(b"\n").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

/// Blank lines are skipped.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, EpisodeError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut items = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        items.push(serde_json::from_str(&line).map_err(json_err(path))?);
    }
    Ok(items)
}

pub fn write_png_rgb(path: &Path, img: &image::RgbImage) -> Result<(), EpisodeError> {
    img.save_with_format(path, ImageFormat::Png)
        .map_err(image_err(path))
}

pub fn read_png_rgb(path: &Path) -> Result<image::RgbImage, EpisodeError> {
    Ok(image::open(path).map_err(image_err(path))?.to_rgb8())
}

pub fn write_mask(path: &Path, mask: &Mask) -> Result<(), EpisodeError> {
    mask.to_gray()
        .save_with_format(path, ImageFormat::Png)
        .map_err(image_err(path))
}

pub fn read_mask(path: &Path) -> Result<Mask, EpisodeError> {
    let img = image::open(path).map_err(image_err(path))?.to_luma8();
    Ok(Mask::from_gray(&img))
}

/// `create_dir_all` with the path attached to the error.
pub fn ensure_dir(path: &Path) -> Result<(), EpisodeError> {
    fs::create_dir_all(path).map_err(io_err(path))
}

pub fn manifest_for(episode: &Episode, config: Option<serde_json::Value>) -> EpisodeManifest {
    let (w, h) = episode.dimensions().unwrap_or((0, 0));
    EpisodeManifest {
        episode_id: episode.episode_id().to_string(),
        role: episode.role(),
        task: episode.task().to_string(),
        obj_name: episode.obj_name().to_string(),
        frame_count: episode.len(),
        image_width: w,
        image_height: h,
        frame_timestamps_ns: episode.timestamps(),
        config,
    }
}

/// Writes an episode directory. Existing files with the same names are
/// overwritten; unrelated files are left alone.
pub fn write_episode(
    dir: &Path,
    episode: &Episode,
    config: Option<serde_json::Value>,
) -> Result<(), EpisodeError> {
    let frames_dir = dir.join("frames");
    ensure_dir(&frames_dir)?;
    let mask_names: BTreeSet<&String> = episode
        .frames()
        .iter()
        .flat_map(|f| f.masks().keys())
        .collect();
    for name in &mask_names {
        ensure_dir(&dir.join("masks").join(name))?;
    }
    for (idx, frame) in episode.frames().iter().enumerate() {
        write_png_rgb(&frames_dir.join(frame_file(idx)), frame.image())?;
        for (name, mask) in frame.masks() {
            write_mask(&dir.join("masks").join(name).join(frame_file(idx)), mask)?;
        }
    }
    let poses: Vec<TimedPoseRecord> = episode
        .camera_poses()
        .iter()
        .map(|(t, p)| TimedPoseRecord::new(*t, p))
        .collect();
    write_jsonl(&dir.join(POSES), &poses)?;
    write_json(&dir.join(MANIFEST), &manifest_for(episode, config))
}

pub fn read_manifest(dir: &Path) -> Result<EpisodeManifest, EpisodeError> {
    read_json(&dir.join(MANIFEST))
}

pub fn read_episode(dir: &Path) -> Result<Episode, EpisodeError> {
    let manifest = read_manifest(dir)?;
    if manifest.frame_timestamps_ns.len() != manifest.frame_count {
        return Err(EpisodeError::Format(format!(
            "{}: frame_count {} but {} timestamps",
            dir.display(),
            manifest.frame_count,
            manifest.frame_timestamps_ns.len()
        )));
    }
    let mask_dirs = list_mask_dirs(dir)?;
    let mut frames = Vec::with_capacity(manifest.frame_count);
    for (idx, &t) in manifest.frame_timestamps_ns.iter().enumerate() {
        let path = dir.join("frames").join(frame_file(idx));
        let image = read_png_rgb(&path)?;
        if image.dimensions() != (manifest.image_width, manifest.image_height) {
            return Err(EpisodeError::DimMismatch(format!(
                "{} is {:?}, manifest says {}x{}",
                path.display(),
                image.dimensions(),
                manifest.image_width,
                manifest.image_height
            )));
        }
        let mut frame = Frame::new(t, image);
        for (name, mdir) in &mask_dirs {
            let mpath = mdir.join(frame_file(idx));
            if mpath.exists() {
                frame.insert_mask(name, read_mask(&mpath)?)?;
            }
        }
        frames.push(frame);
    }
    let poses_path = dir.join(POSES);
    let camera_poses = if poses_path.exists() {
        read_jsonl::<TimedPoseRecord>(&poses_path)?
            .into_iter()
            .map(|r| Ok((r.t_ns, r.pose()?)))
            .collect::<Result<Vec<_>, EpisodeError>>()?
    } else {
        Vec::new()
    };
    let meta = EpisodeMeta {
        episode_id: manifest.episode_id,
        task: manifest.task,
        obj_name: manifest.obj_name,
    };
    Episode::new(meta, manifest.role, frames, camera_poses)
}

fn list_mask_dirs(dir: &Path) -> Result<Vec<(String, PathBuf)>, EpisodeError> {
    let root = dir.join("masks");
    if !root.is_dir() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(&root).map_err(io_err(&root))? {
        let entry = entry.map_err(io_err(&root))?;
        let path = entry.path();
        if path.is_dir() {
            if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
                out.push((name.to_string(), path.clone()));
            }
        }
    }
    out.sort();
    Ok(out)
}

pub fn write_rig(dir: &Path, rig: &CameraRig) -> Result<(), EpisodeError> {
    ensure_dir(dir)?;
    write_json(&dir.join(RIG), rig)
}

pub fn read_rig(dir: &Path) -> Result<CameraRig, EpisodeError> {
    read_json(&dir.join(RIG))
}
