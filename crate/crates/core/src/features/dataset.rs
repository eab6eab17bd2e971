//! Training dataset container.
//!
//! A dataset is a directory holding `manifest.json` and one binary payload
//! per clip. Payload layout, all little-endian:
//!
//! | bytes            | content                                            |
//! |------------------|----------------------------------------------------|
//! | 4                | magic `SPDS`                                       |
//! | 4                | format version (u32)                               |
//! | 4                | frame count `n` (u32)                              |
//! | `n × 36 × 4`     | noisy trackers, f32: head, lhand, rhand, pelvis × [p(3), fwd(3), up(3)] |
//! | `n × 9 × 4`      | ground-truth root transform, f32 [p(3), fwd(3), up(3)] |
//! | `n × 48 × 4`     | target lower-body rotations, f32, 8 × [fwd(3), up(3)] |
//! | `n × 2`          | contact labels, u8 (left, right)                   |

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::contacts::label_contacts;
use super::trackers::{augment_noise, synthesize_trackers, NoiseConfig, TrackerFrame, TRACKER_COUNT, TRACKER_DIM};
use super::velocity::{feature_sequence, FeatureConfig, FeatureVector};
use super::window::WINDOW_LEN;
use super::FeatureError;
use crate::motion::{Category, MotionClip, Skeleton, SkeletonDescription, Transform, POSE_DIM};

pub const PAYLOAD_MAGIC: &[u8; 4] = b"SPDS";
pub const PAYLOAD_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
const FRAME_TRACKERS: usize = TRACKER_COUNT * TRACKER_DIM;
const ROOT_DIM: usize = 9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub noise: NoiseConfig,
    pub augment: bool,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            noise: NoiseConfig::default(),
            augment: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipEntry {
    pub name: String,
    pub category: Category,
    pub frames: usize,
    pub file: String,
    pub noise_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub window_len: usize,
    pub skeleton: SkeletonDescription,
    pub clips: Vec<ClipEntry>,
    pub category_frames: BTreeMap<Category, usize>,
    pub category_ratio: BTreeMap<Category, f64>,
}

/// Per-category frame totals and their share of all frames.
pub fn category_summary(
    items: impl IntoIterator<Item = (Category, usize)>,
) -> (BTreeMap<Category, usize>, BTreeMap<Category, f64>) {
    let mut frames: BTreeMap<Category, usize> = BTreeMap::new();
    for (c, n) in items {
        *frames.entry(c).or_default() += n;
    }
    let total: usize = frames.values().sum();
    let ratio = frames
        .iter()
        .map(|(c, n)| (*c, if total == 0 { 0.0 } else { *n as f64 / total as f64 }))
        .collect();
    (frames, ratio)
}

/// One clip's stored payload; floats are kept at their stored `f32` precision.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetClip {
    pub name: String,
    pub category: Category,
    trackers: Vec<f32>,
    roots: Vec<f32>,
    targets: Vec<f32>,
    labels: Vec<[u8; 2]>,
}

impl DatasetClip {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn tracker_frame(&self, i: usize) -> Result<TrackerFrame, FeatureError> {
        let v: Vec<f64> = self.trackers[i * FRAME_TRACKERS..(i + 1) * FRAME_TRACKERS]
            .iter()
            .map(|x| *x as f64)
            .collect();
        TrackerFrame::from_slice(&v, i as f64)
    }

    pub fn tracker_frames(&self) -> Result<Vec<TrackerFrame>, FeatureError> {
        (0..self.len()).map(|i| self.tracker_frame(i)).collect()
    }

    pub fn root(&self, i: usize) -> Result<Transform, FeatureError> {
        let mut a = [0.0; ROOT_DIM];
        for (d, s) in a.iter_mut().zip(&self.roots[i * ROOT_DIM..(i + 1) * ROOT_DIM]) {
            *d = *s as f64;
        }
        Ok(Transform::from_array(&a)?)
    }

    pub fn target(&self, i: usize) -> [f64; POSE_DIM] {
        let mut out = [0.0; POSE_DIM];
        for (d, s) in out.iter_mut().zip(&self.targets[i * POSE_DIM..(i + 1) * POSE_DIM]) {
            *d = *s as f64;
        }
        out
    }

    pub fn labels(&self, i: usize) -> [bool; 2] {
        [self.labels[i][0] != 0, self.labels[i][1] != 0]
    }

    /// Feature rows for frames `1..len` (row `k` ↔ frame `k + 1`).
    pub fn features(&self, cfg: &FeatureConfig) -> Result<Vec<FeatureVector>, FeatureError> {
        feature_sequence(&self.tracker_frames()?, cfg)
    }

    /// Builds the stored form of a clip. Trackers are noise-augmented with
    /// `seed` when `noise` is given.
    pub fn from_clip(
        clip: &MotionClip,
        noise: Option<(&NoiseConfig, u64)>,
    ) -> Result<Self, FeatureError> {
        let rig = *clip.skeleton.rig()?;
        let clean = synthesize_trackers(clip)?;
        let trackers = match noise {
            Some((cfg, seed)) => augment_noise(&clean, seed, cfg),
            None => clean,
        };
        let labels = label_contacts(clip)?;
        let f32s = |v: &[f64]| v.iter().map(|x| *x as f32).collect::<Vec<f32>>();
        Ok(Self {
            name: clip.name.clone(),
            category: clip.category,
            trackers: trackers.iter().flat_map(|f| f32s(&f.to_array())).collect(),
            roots: clip.frames.iter().flat_map(|p| f32s(&p.root.to_array())).collect(),
            targets: clip
                .frames
                .iter()
                .flat_map(|p| f32s(&p.lower_body_6d(&rig)))
                .collect(),
            labels: labels.iter().map(|l| [l[0] as u8, l[1] as u8]).collect(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.len();
        let mut out = Vec::with_capacity(12 + n * (4 * (FRAME_TRACKERS + ROOT_DIM + POSE_DIM) + 2));
        out.extend_from_slice(PAYLOAD_MAGIC);
        out.extend_from_slice(&PAYLOAD_VERSION.to_le_bytes());
        out.extend_from_slice(&(n as u32).to_le_bytes());
        for block in [&self.trackers, &self.roots, &self.targets] {
            for v in block.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        for l in &self.labels {
            out.extend_from_slice(l);
        }
        out
    }

    pub fn from_bytes(
        bytes: &[u8],
        name: String,
        category: Category,
    ) -> Result<Self, FeatureError> {
        let bad = |m: &str| FeatureError::Payload(format!("{name}: {m}"));
        if bytes.len() < 12 || &bytes[..4] != PAYLOAD_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != PAYLOAD_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let n = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let floats = n * (FRAME_TRACKERS + ROOT_DIM + POSE_DIM);
        if bytes.len() != 12 + 4 * floats + 2 * n {
            return Err(bad("payload size does not match frame count"));
        }
        let mut cursor = 12;
        let mut take = |count: usize| -> Vec<f32> {
            let v = bytes[cursor..cursor + 4 * count]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            cursor += 4 * count;
            v
        };
        let trackers = take(n * FRAME_TRACKERS);
        let roots = take(n * ROOT_DIM);
        let targets = take(n * POSE_DIM);
        let start = 12 + 4 * floats;
        let labels = bytes[start..]
            .chunks_exact(2)
            .map(|c| [c[0], c[1]])
            .collect();
        Ok(Self {
            name,
            category,
            trackers,
            roots,
            targets,
            labels,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: Manifest,
    pub skeleton: Arc<Skeleton>,
    pub clips: Vec<DatasetClip>,
}

impl Dataset {
    /// Assembles an in-memory dataset. Clips must share one rigged skeleton
    /// and have at least `WINDOW_LEN + 1` frames.
    pub fn build(clips: &[MotionClip], cfg: &DatasetConfig) -> Result<Dataset, FeatureError> {
        let first = clips.first().ok_or(FeatureError::EmptyDataset)?;
        let skeleton = first.skeleton.clone();
        skeleton.rig()?;
        let mut entries = Vec::with_capacity(clips.len());
        let mut stored = Vec::with_capacity(clips.len());
        for (k, clip) in clips.iter().enumerate() {
            if clip.len() < WINDOW_LEN + 1 {
                return Err(FeatureError::ClipTooShort {
                    name: clip.name.clone(),
                    frames: clip.len(),
                    needed: WINDOW_LEN + 1,
                });
            }
            if *clip.skeleton != *skeleton {
                return Err(FeatureError::SkeletonMismatch(clip.name.clone()));
            }
            let seed = cfg.seed.wrapping_add(k as u64);
            let noise = cfg.augment.then_some((&cfg.noise, seed));
            stored.push(DatasetClip::from_clip(clip, noise)?);
            entries.push(ClipEntry {
                name: clip.name.clone(),
                category: clip.category,
                frames: clip.len(),
                file: format!("clip_{k:05}.bin"),
                noise_seed: seed,
            });
        }
        let (category_frames, category_ratio) =
            category_summary(entries.iter().map(|e| (e.category, e.frames)));
        Ok(Dataset {
            manifest: Manifest {
                format_version: PAYLOAD_VERSION,
                window_len: WINDOW_LEN,
                skeleton: skeleton.to_description(),
                clips: entries,
                category_frames,
                category_ratio,
            },
            skeleton,
            clips: stored,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<(), FeatureError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        for (entry, clip) in self.manifest.clips.iter().zip(&self.clips) {
            let path = dir.join(&entry.file);
            fs::write(&path, clip.to_bytes()).map_err(|e| io_err(&path, e))?;
        }
        let path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(&self.manifest)
            .map_err(|e| FeatureError::Io(e.to_string()))?;
        fs::write(&path, json).map_err(|e| io_err(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Dataset, FeatureError> {
        let path = manifest_path(dir);
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| FeatureError::Payload(format!("{}: {e}", path.display())))?;
        let skeleton = Arc::new(manifest.skeleton.to_skeleton()?);
        let mut clips = Vec::with_capacity(manifest.clips.len());
        for entry in &manifest.clips {
            let p = dir.join(&entry.file);
            let bytes = fs::read(&p).map_err(|e| io_err(&p, e))?;
            let clip = DatasetClip::from_bytes(&bytes, entry.name.clone(), entry.category)?;
            if clip.len() != entry.frames {
                return Err(FeatureError::Payload(format!(
                    "{}: manifest says {} frames, payload has {}",
                    entry.name,
                    entry.frames,
                    clip.len()
                )));
            }
            clips.push(clip);
        }
        Ok(Dataset {
            manifest,
            skeleton,
            clips,
        })
    }

    pub fn total_frames(&self) -> usize {
        self.clips.iter().map(|c| c.len()).sum()
    }
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join(MANIFEST_FILE)
}

fn io_err(path: &Path, e: std::io::Error) -> FeatureError {
    FeatureError::Io(format!("{}: {e}", path.display()))
}
