//! Feature cache: extractor output spike trains stored on disk so classifier
//! experiments can skip the convolutional stage.
//!
//! Format "SFC1" (little-endian):
//!
//! ```text
//! "SFC1" | sample_count u32 | feature_count u32 | t_max f64
//! | per sample: label u16 | event_count u32 | events (index u32, time f64)
//! ```
//!
//! Events of a sample are stored in time order.

use std::fs;
use std::path::Path;

use crate::binio::Reader;
use crate::encoding::{SpikeEvent, SpikeTrain};
use crate::feature::FeatureExtractor;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCache {
    pub feature_count: usize,
    pub t_max: f64,
    pub samples: Vec<(SpikeTrain, usize)>,
}

impl FeatureCache {
    pub fn new(feature_count: usize, t_max: f64, samples: Vec<(SpikeTrain, usize)>) -> Result<Self> {
        for (train, label) in &samples {
            if train.source_count() != feature_count {
                return Err(Error::structural("cached sample features", feature_count, train.source_count()));
            }
            if train.t_max() != t_max {
                return Err(Error::structural("cached sample t_max", t_max, train.t_max()));
            }
            if *label > u16::MAX as usize {
                return Err(Error::Domain(format!("label {label} does not fit the cache format")));
            }
        }
        Ok(FeatureCache {
            feature_count,
            t_max,
            samples,
        })
    }

    /// Runs a trained extractor over encoded samples.
    pub fn extract(extractor: &FeatureExtractor, encoded: &[(SpikeTrain, usize)]) -> Result<Self> {
        let trains: Vec<SpikeTrain> = encoded.iter().map(|(t, _)| t.clone()).collect();
        let features = extractor.forward_all(&trains)?;
        let t_max = encoded.first().map_or(1.0, |(t, _)| t.t_max());
        FeatureCache::new(
            extractor.output_len(),
            t_max,
            features.into_iter().zip(encoded.iter().map(|(_, l)| *l)).collect(),
        )
    }

    pub fn class_count(&self) -> usize {
        self.samples.iter().map(|(_, l)| l + 1).max().unwrap_or(0)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let events: usize = self.samples.iter().map(|(t, _)| t.len()).sum();
        let mut out = Vec::with_capacity(20 + 6 * self.samples.len() + 12 * events);
        out.extend_from_slice(b"SFC1");
        out.extend_from_slice(&(self.samples.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.feature_count as u32).to_le_bytes());
        out.extend_from_slice(&self.t_max.to_le_bytes());
        for (train, label) in &self.samples {
            out.extend_from_slice(&(*label as u16).to_le_bytes());
            out.extend_from_slice(&(train.len() as u32).to_le_bytes());
            for e in train.events() {
                out.extend_from_slice(&e.source.to_le_bytes());
                out.extend_from_slice(&e.time.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(b"SFC1", "cache magic")?;
        let count = r.u32_le("sample count")? as usize;
        let feature_count = r.u32_le("feature count")? as usize;
        let t_max = r.f64_le("t_max")?;
        let mut samples = Vec::with_capacity(count.min(bytes.len() / 6));
        for i in 0..count {
            let label = r.u16_le("label")? as usize;
            let n = r.u32_le("event count")? as usize;
            let raw = r.take(n.checked_mul(12).ok_or_else(|| Error::parse("event count", "overflow"))?, "events")?;
            let events = raw
                .chunks_exact(12)
                .map(|c| SpikeEvent {
                    source: u32::from_le_bytes(c[..4].try_into().unwrap()),
                    time: f64::from_le_bytes(c[4..].try_into().unwrap()),
                })
                .collect();
            let train = SpikeTrain::new(events, feature_count, t_max)
                .map_err(|e| Error::parse("events", format!("sample {i}: {e}")))?;
            samples.push((train, label));
        }
        r.finish("cache")?;
        FeatureCache::new(feature_count, t_max, samples)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        FeatureCache::from_bytes(&fs::read(path)?)
    }
}
