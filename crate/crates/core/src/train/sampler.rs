//! Frame-weighted clip selection and window extraction.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use std::sync::Arc;

use super::objective::TrainingSample;
use super::TrainError;
use crate::features::{window_from_features, Dataset, DatasetClip, FeatureConfig, FeatureError, FeatureVector, FEATURE_DIM};
use crate::motion::Skeleton;

/// Picks a clip with probability proportional to its frame count, then an
/// end frame uniformly among those with a full window of history.
#[derive(Debug, Clone)]
pub struct ClipSampler {
    frames: Vec<usize>,
    window: usize,
    weights: WeightedIndex<usize>,
}

impl ClipSampler {
    pub fn new(frames: &[usize], window: usize) -> Result<Self, TrainError> {
        if frames.is_empty() {
            return Err(FeatureError::EmptyDataset.into());
        }
        if let Some((k, &n)) = frames.iter().enumerate().find(|(_, &n)| n < window + 1) {
            return Err(FeatureError::ClipTooShort {
                name: format!("#{k}"),
                frames: n,
                needed: window + 1,
            }
            .into());
        }
        let weights = WeightedIndex::new(frames).map_err(|e| TrainError::Config(e.to_string()))?;
        Ok(Self {
            frames: frames.to_vec(),
            window,
            weights,
        })
    }

    /// Selection probability of every clip, `f / Σf`.
    pub fn probabilities(&self) -> Vec<f64> {
        let total: usize = self.frames.iter().sum();
        self.frames.iter().map(|&n| n as f64 / total as f64).collect()
    }

    /// Number of distinct (clip, end frame) pairs.
    pub fn admissible(&self) -> usize {
        self.frames.iter().map(|n| n - self.window).sum()
    }

    /// `(clip, end frame)`; the window covers frames `end − window ..= end`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        let c = self.weights.sample(rng);
        let end = rng.random_range(self.window..self.frames[c]);
        (c, end)
    }
}

/// A dataset with feature rows precomputed, ready for batch sampling.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub skeleton: Arc<Skeleton>,
    clips: Vec<DatasetClip>,
    features: Vec<Vec<FeatureVector>>,
    sampler: ClipSampler,
}

impl TrainingSet {
    pub fn new(dataset: &Dataset, cfg: &FeatureConfig, window: usize) -> Result<Self, TrainError> {
        let frames: Vec<usize> = dataset.clips.iter().map(|c| c.len()).collect();
        let sampler = ClipSampler::new(&frames, window)?;
        let features = dataset
            .clips
            .iter()
            .map(|c| c.features(cfg))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            skeleton: dataset.skeleton.clone(),
            clips: dataset.clips.clone(),
            features,
            sampler,
        })
    }

    pub fn sampler(&self) -> &ClipSampler {
        &self.sampler
    }

    pub fn clips(&self) -> &[DatasetClip] {
        &self.clips
    }

    pub fn window_len(&self) -> usize {
        self.sampler.window
    }

    /// The supervised window ending at frame `end` of clip `clip`.
    pub fn sample(&self, clip: usize, end: usize) -> Result<TrainingSample, TrainError> {
        let c = &self.clips[clip];
        let window = window_from_features(&self.features[clip], end, self.sampler.window)?;
        // end ≥ window ≥ 1, so the previous frame always exists
        let prev = end - 1;
        Ok(TrainingSample {
            window,
            target: c.target(end),
            target_prev: c.target(prev),
            root: c.root(end)?,
            root_prev: c.root(prev)?,
            labels: c.labels(end),
            has_prev: true,
        })
    }

    pub fn sample_batch<R: Rng + ?Sized>(&self, rng: &mut R, batch: usize) -> Result<Vec<TrainingSample>, TrainError> {
        (0..batch)
            .map(|_| {
                let (c, end) = self.sampler.draw(rng);
                self.sample(c, end)
            })
            .collect()
    }

    /// Per-channel mean and standard deviation over every feature row.
    pub fn feature_statistics(&self) -> ([f64; FEATURE_DIM], [f64; FEATURE_DIM]) {
        let rows = || self.features.iter().flatten();
        let n = rows().count().max(1) as f64;
        let mut mean = [0.0; FEATURE_DIM];
        for r in rows() {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut std = [0.0; FEATURE_DIM];
        for r in rows() {
            for ((s, v), m) in std.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        std.iter_mut().for_each(|s| *s = (*s / n).sqrt());
        (mean, std)
    }

    /// Every admissible window in clip order.
    pub fn all_positions(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.sampler.window;
        self.clips
            .iter()
            .enumerate()
            .flat_map(move |(c, clip)| (w..clip.len()).map(move |e| (c, e)))
    }
}
