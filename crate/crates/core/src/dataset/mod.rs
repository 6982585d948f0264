//! Dataset ingestion and preprocessing.
//!
//! Two sources are supported: directory trees in the UCSD layout
//! (`<root>/Train/<clip>/<index>.png|.tif` plus `<root>/Test/<clip>.labels.json`
//! sidecars) and deterministic synthetic surveillance scenes
//! (see [`synthetic`]). Frames are preprocessed to a fixed square resolution
//! with values in `[0, 1]`; grayscale sources are replicated into three
//! identical channels.

pub mod synthetic;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgproc::{self, Raster};
use crate::scalar::Scalar;

/// A single preprocessed video frame: 3 channels, `[0, 1]`, square resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame<F> {
    /// (channel, row, col) data in `[0, 1]`.
    pub pixels: Array3<F>,
    /// Time step within the clip, starting at 0.
    pub source_index: usize,
}

impl<F: Scalar> Frame<F> {
    pub fn height(&self) -> usize {
        self.pixels.dim().1
    }

    pub fn width(&self) -> usize {
        self.pixels.dim().2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// Frame storage: synthetic clips keep frames in memory, loaded datasets
/// decode from disk on demand.
#[derive(Debug, Clone)]
enum FrameStore<F> {
    Memory(Vec<Frame<F>>),
    Disk {
        paths: Vec<PathBuf>,
        resolution: (usize, usize),
    },
}

/// An ordered frame sequence with optional per-frame anomaly labels.
#[derive(Debug, Clone)]
pub struct VideoClip<F> {
    pub clip_id: String,
    pub split: Split,
    /// Per-frame binary anomaly flags; present on every test clip.
    pub labels: Option<Vec<u8>>,
    store: FrameStore<F>,
}

impl<F: Scalar> VideoClip<F> {
    pub fn from_frames(
        clip_id: impl Into<String>,
        split: Split,
        frames: Vec<Frame<F>>,
        labels: Option<Vec<u8>>,
    ) -> Result<Self> {
        let clip = VideoClip {
            clip_id: clip_id.into(),
            split,
            labels,
            store: FrameStore::Memory(frames),
        };
        clip.validate()?;
        Ok(clip)
    }

    fn from_paths(
        clip_id: impl Into<String>,
        split: Split,
        paths: Vec<PathBuf>,
        resolution: (usize, usize),
        labels: Option<Vec<u8>>,
    ) -> Result<Self> {
        let clip = VideoClip {
            clip_id: clip_id.into(),
            split,
            labels,
            store: FrameStore::Disk { paths, resolution },
        };
        clip.validate()?;
        Ok(clip)
    }

    fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Dataset(format!("clip {} is empty", self.clip_id)));
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.len() {
                return Err(Error::Dataset(format!(
                    "clip {}: {} labels for {} frames",
                    self.clip_id,
                    labels.len(),
                    self.len()
                )));
            }
            if labels.iter().any(|&l| l > 1) {
                return Err(Error::Dataset(format!(
                    "clip {}: labels must be 0 or 1",
                    self.clip_id
                )));
            }
            if self.split == Split::Train && labels.contains(&1) {
                return Err(Error::Dataset(format!(
                    "clip {}: train clips must be normal-only",
                    self.clip_id
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        match &self.store {
            FrameStore::Memory(f) => f.len(),
            FrameStore::Disk { paths, .. } => paths.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Loads (or clones) frame `i`, preprocessed to the clip resolution.
    pub fn frame(&self, i: usize) -> Result<Frame<F>> {
        match &self.store {
            FrameStore::Memory(frames) => frames.get(i).cloned().ok_or_else(|| {
                Error::Dataset(format!("clip {}: frame {} out of range", self.clip_id, i))
            }),
            FrameStore::Disk { paths, resolution } => {
                let path = paths.get(i).ok_or_else(|| {
                    Error::Dataset(format!("clip {}: frame {} out of range", self.clip_id, i))
                })?;
                let raster = imgproc::load_raster(path)?;
                let mut frame = preprocess_frame(raster, *resolution)?;
                frame.source_index = i;
                Ok(frame)
            }
        }
    }

    /// Consecutive frame pairs `(F_t, F_{t+1})` in order.
    pub fn frame_pairs(&self) -> Result<FramePairs<'_, F>> {
        if self.len() < 2 {
            return Err(Error::Dataset(format!(
                "clip {} has {} frame(s); need at least 2 for pairs",
                self.clip_id,
                self.len()
            )));
        }
        Ok(FramePairs {
            clip: self,
            next: 0,
            prev: None,
        })
    }
}

/// Iterator over consecutive frame pairs; each frame is decoded once.
pub struct FramePairs<'a, F> {
    clip: &'a VideoClip<F>,
    next: usize,
    prev: Option<Frame<F>>,
}

impl<F: Scalar> Iterator for FramePairs<'_, F> {
    type Item = Result<(Frame<F>, Frame<F>)>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next + 1 >= self.clip.len() {
            return None;
        }
        let first = match self.prev.take() {
            Some(f) => f,
            None => match self.clip.frame(self.next) {
                Ok(f) => f,
                Err(e) => return Some(Err(e)),
            },
        };
        let second = match self.clip.frame(self.next + 1) {
            Ok(f) => f,
            Err(e) => return Some(Err(e)),
        };
        self.prev = Some(second.clone());
        self.next += 1;
        Some(Ok((first, second)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Ucsd,
    Synthetic,
}

/// A discovered dataset: clips plus the preprocessing resolution.
#[derive(Debug, Clone)]
pub struct DatasetManifest<F> {
    pub name: String,
    pub resolution: (usize, usize),
    pub provenance: Provenance,
    pub clips: Vec<VideoClip<F>>,
}

impl<F: Scalar> DatasetManifest<F> {
    pub fn train_clips(&self) -> impl Iterator<Item = &VideoClip<F>> {
        self.clips.iter().filter(|c| c.split == Split::Train)
    }

    pub fn test_clips(&self) -> impl Iterator<Item = &VideoClip<F>> {
        self.clips.iter().filter(|c| c.split == Split::Test)
    }

    pub fn clip(&self, clip_id: &str) -> Option<&VideoClip<F>> {
        self.clips.iter().find(|c| c.clip_id == clip_id)
    }

    pub fn total_frames(&self) -> usize {
        self.clips.iter().map(|c| c.len()).sum()
    }

    fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for clip in &self.clips {
            if !seen.insert(&clip.clip_id) {
                return Err(Error::Dataset(format!(
                    "duplicate clip id {}",
                    clip.clip_id
                )));
            }
            if clip.split == Split::Test && clip.labels.is_none() {
                return Err(Error::Dataset(format!(
                    "test clip {} has no labels",
                    clip.clip_id
                )));
            }
        }
        Ok(())
    }
}

/// Sidecar label file: `{"labels":[0,1,...]}` with one entry per frame.
#[derive(Debug, Serialize, Deserialize)]
pub struct LabelsFile {
    pub labels: Vec<u8>,
}

/// Scales, squares and channel-replicates a raw image into a [`Frame`].
///
/// Grayscale inputs are copied to each RGB channel; resize is bilinear and
/// an exact copy when the source already matches the target resolution.
pub fn preprocess_frame<F: Scalar>(raw: Raster<F>, resolution: (usize, usize)) -> Result<Frame<F>> {
    let (h, w) = raw.dims();
    if h == 0 || w == 0 {
        return Err(Error::Dataset("zero-area input image".into()));
    }
    if resolution.0 == 0 || resolution.1 == 0 {
        return Err(Error::Config("target resolution must be positive".into()));
    }
    let pixels = match raw {
        Raster::Gray(g) => {
            let resized = imgproc::resize_bilinear_2d(&g, resolution.0, resolution.1);
            imgproc::gray_to_rgb(&resized)
        }
        Raster::Rgb(p) => imgproc::resize_bilinear(&p, resolution.0, resolution.1),
    };
    Ok(Frame {
        pixels,
        source_index: 0,
    })
}

fn frame_sort_key(path: &Path) -> (Option<u64>, String) {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_default();
    (stem.parse::<u64>().ok(), stem)
}

fn list_frame_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let entries =
        fs::read_dir(dir).map_err(|e| Error::io(format!("reading {}", dir.display()), e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(format!("reading {}", dir.display()), e))?;
        let path = entry.path();
        if !path.is_file() {
            continue;
        }
        let ext = path
            .extension()
            .map(|e| e.to_string_lossy().to_lowercase())
            .unwrap_or_default();
        if matches!(
            ext.as_str(),
            "png" | "tif" | "tiff" | "bmp" | "jpg" | "jpeg"
        ) {
            files.push(path);
        }
    }
    files.sort_by_key(|a| frame_sort_key(a));
    Ok(files)
}

fn list_clip_dirs(split_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    let entries = fs::read_dir(split_dir)
        .map_err(|e| Error::io(format!("reading {}", split_dir.display()), e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(format!("reading {}", split_dir.display()), e))?;
        let path = entry.path();
        if path.is_dir() {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

/// Discovers a UCSD-layout dataset rooted at `root`.
///
/// Expects `Train/` and/or `Test/` subdirectories of per-clip frame folders;
/// every test clip must have a `<clip_id>.labels.json` sidecar whose length
/// matches the clip's frame count. Frames stay on disk and are decoded
/// lazily at `resolution`.
pub fn load_ucsd_dataset<F: Scalar>(
    root: &Path,
    resolution: (usize, usize),
) -> Result<DatasetManifest<F>> {
    let mut clips = Vec::new();
    for (split, split_name) in [(Split::Train, "Train"), (Split::Test, "Test")] {
        let split_dir = root.join(split_name);
        if !split_dir.is_dir() {
            continue;
        }
        for clip_dir in list_clip_dirs(&split_dir)? {
            let clip_id = clip_dir
                .file_name()
                .map(|s| s.to_string_lossy().to_string())
                .unwrap_or_default();
            let frames = list_frame_files(&clip_dir)?;
            if frames.is_empty() {
                return Err(Error::Dataset(format!(
                    "clip {} contains no frame images",
                    clip_dir.display()
                )));
            }
            let labels = if split == Split::Test {
                let labels_path = split_dir.join(format!("{clip_id}.labels.json"));
                let text = fs::read_to_string(&labels_path).map_err(|e| {
                    Error::Dataset(format!(
                        "missing labels for test clip {clip_id}: cannot read {}: {e}",
                        labels_path.display()
                    ))
                })?;
                let parsed: LabelsFile = serde_json::from_str(&text).map_err(|e| {
                    Error::Dataset(format!("bad labels file {}: {e}", labels_path.display()))
                })?;
                Some(parsed.labels)
            } else {
                None
            };
            clips.push(VideoClip::from_paths(
                clip_id, split, frames, resolution, labels,
            )?);
        }
    }
    if clips.is_empty() {
        return Err(Error::Dataset(format!(
            "no clips found under {}",
            root.display()
        )));
    }
    let manifest = DatasetManifest {
        name: root
            .file_name()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_else(|| "dataset".into()),
        resolution,
        provenance: Provenance::Ucsd,
        clips,
    };
    manifest.validate()?;
    Ok(manifest)
}

/// Writes a manifest back out in the UCSD layout (8-bit PNG frames plus
/// label sidecars). Frames whose channels are identical are stored as
/// grayscale, so quantized synthetic data round-trips bit-exactly.
pub fn export_ucsd_layout<F: Scalar>(manifest: &DatasetManifest<F>, root: &Path) -> Result<()> {
    for clip in &manifest.clips {
        let split_name = match clip.split {
            Split::Train => "Train",
            Split::Test => "Test",
        };
        let clip_dir = root.join(split_name).join(&clip.clip_id);
        fs::create_dir_all(&clip_dir)
            .map_err(|e| Error::io(format!("creating {}", clip_dir.display()), e))?;
        for i in 0..clip.len() {
            let frame = clip.frame(i)?;
            imgproc::save_png(&frame.pixels, &clip_dir.join(format!("{i:04}.png")))?;
        }
        if clip.split == Split::Test {
            let labels = clip.labels.clone().ok_or_else(|| {
                Error::Dataset(format!("test clip {} has no labels", clip.clip_id))
            })?;
            let path = root
                .join(split_name)
                .join(format!("{}.labels.json", clip.clip_id));
            let text = serde_json::to_string(&LabelsFile { labels })
                .map_err(|e| Error::Dataset(format!("labels encode: {e}")))?;
            fs::write(&path, text)
                .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn checkerboard(n: usize) -> Array2<f32> {
        Array2::from_shape_fn((n, n), |(y, x)| ((y + x) % 2) as f32)
    }

    #[test]
    fn preprocess_replicates_grayscale() {
        let g = Array2::from_shape_fn((24, 36), |(y, x)| y as f32 * 0.01 + x as f32 * 0.002);
        let frame = preprocess_frame(Raster::Gray(g), (16, 16)).unwrap();
        assert_eq!(frame.pixels.dim(), (3, 16, 16));
        assert!(imgproc::channels_identical(&frame.pixels));
    }

    #[test]
    fn preprocess_identity_at_target_resolution() {
        let g = checkerboard(16);
        let frame = preprocess_frame(Raster::Gray(g.clone()), (16, 16)).unwrap();
        for y in 0..16 {
            for x in 0..16 {
                assert_eq!(frame.pixels[[0, y, x]], g[[y, x]]);
            }
        }
    }

    #[test]
    fn preprocess_is_idempotent() {
        let g = Array2::from_shape_fn((30, 40), |(y, x)| ((y * 40 + x) % 256) as f32 / 255.0);
        let once = preprocess_frame(Raster::Gray(g), (16, 16)).unwrap();
        let twice = preprocess_frame(Raster::Rgb(once.pixels.clone()), (16, 16)).unwrap();
        assert_eq!(once.pixels, twice.pixels);
    }

    #[test]
    fn preprocess_rejects_zero_area() {
        let g = Array2::<f32>::zeros((0, 4));
        assert!(preprocess_frame(Raster::Gray(g), (16, 16)).is_err());
    }

    #[test]
    fn constant_zero_stays_zero() {
        let g = Array2::<f32>::zeros((12, 12));
        let frame = preprocess_frame(Raster::Gray(g), (8, 8)).unwrap();
        assert!(frame.pixels.iter().all(|&v| v == 0.0));
    }

    fn memory_clip(n: usize) -> VideoClip<f32> {
        let frames = (0..n)
            .map(|i| Frame {
                pixels: Array3::from_elem((3, 4, 4), i as f32 / n as f32),
                source_index: i,
            })
            .collect();
        VideoClip::from_frames(format!("c{n}"), Split::Train, frames, None).unwrap()
    }

    #[test]
    fn frame_pairs_counts() {
        let clip = memory_clip(200);
        let pairs: Vec<_> = clip.frame_pairs().unwrap().collect::<Result<_>>().unwrap();
        assert_eq!(pairs.len(), 199);
        let clip2 = memory_clip(2);
        assert_eq!(clip2.frame_pairs().unwrap().count(), 1);
    }

    #[test]
    fn frame_pairs_are_adjacent_and_increasing() {
        let clip = memory_clip(9);
        for (i, pair) in clip.frame_pairs().unwrap().enumerate() {
            let (a, b) = pair.unwrap();
            assert_eq!(a.source_index, i);
            assert_eq!(b.source_index, i + 1);
        }
    }

    #[test]
    fn single_frame_clip_has_no_pairs() {
        let clip = memory_clip(1);
        assert!(clip.frame_pairs().is_err());
    }

    #[test]
    fn train_clip_with_positive_labels_rejected() {
        let frames = vec![Frame {
            pixels: Array3::<f32>::zeros((3, 4, 4)),
            source_index: 0,
        }];
        let r = VideoClip::from_frames("bad", Split::Train, frames, Some(vec![1]));
        assert!(r.is_err());
    }

    #[test]
    fn empty_root_errors() {
        let dir = tempfile::tempdir().unwrap();
        let r = load_ucsd_dataset::<f32>(dir.path(), (16, 16));
        match r {
            Err(Error::Dataset(msg)) => assert!(msg.contains("no clips found"), "{msg}"),
            other => panic!("expected dataset error, got {other:?}"),
        }
    }

    #[test]
    fn unreadable_frame_error_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let clip_dir = dir.path().join("Train").join("c0");
        fs::create_dir_all(&clip_dir).unwrap();
        let bad = clip_dir.join("0000.png");
        fs::write(&bad, b"this is not a png").unwrap();
        let manifest = load_ucsd_dataset::<f32>(dir.path(), (8, 8)).unwrap();
        let err = manifest.clips[0].frame(0).unwrap_err();
        match err {
            Error::Image { path, .. } => assert_eq!(path, bad),
            other => panic!("expected image error naming the file, got {other:?}"),
        }
    }

    #[test]
    fn test_clip_without_labels_errors() {
        let dir = tempfile::tempdir().unwrap();
        let clip_dir = dir.path().join("Test").join("t0");
        fs::create_dir_all(&clip_dir).unwrap();
        let frame = Frame {
            pixels: Array3::<f32>::zeros((3, 8, 8)),
            source_index: 0,
        };
        imgproc::save_png(&frame.pixels, &clip_dir.join("0000.png")).unwrap();
        let r = load_ucsd_dataset::<f32>(dir.path(), (8, 8));
        assert!(r.is_err());
    }
}
