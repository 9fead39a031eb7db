//! Image preprocessing and latency coding.
//!
//! Intensities in `[0, 1]` become one spike each at `t_max * (1 - x)`:
//! the brightest cells fire first.

use crate::{Error, Result};

/// Dense image with channel-major layout: `values[(c * height + y) * width + x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    values: Vec<f64>,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::Dimension(format!(
                "image dimensions must be positive, got {height}x{width}x{channels}"
            )));
        }
        if values.len() != height * width * channels {
            return Err(Error::Dimension(format!(
                "{height}x{width}x{channels} image needs {} values, got {}",
                height * width * channels,
                values.len()
            )));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::Domain(format!("value {v} at cell {i} is outside [0, 1]")));
        }
        Ok(ImageTensor {
            height,
            width,
            channels,
            values,
        })
    }

    /// Grayscale image from 8-bit pixels scaled to `[0, 1]`.
    pub fn from_u8(height: usize, width: usize, channels: usize, pixels: &[u8]) -> Result<Self> {
        let values = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
        ImageTensor::new(height, width, channels, values)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, channel: usize, y: usize, x: usize) -> f64 {
        self.values[(channel * self.height + y) * self.width + x]
    }

    fn plane(&self, channel: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.values[channel * n..(channel + 1) * n]
    }
}

/// One spike: which input fired and when.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpikeEvent {
    pub source: u32,
    pub time: f64,
}

/// Time-sorted spikes with at most one event per source.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeTrain {
    events: Vec<SpikeEvent>,
    source_count: usize,
    t_max: f64,
}

impl SpikeTrain {
    /// Validates ordering, uniqueness and the time window.
    pub fn new(events: Vec<SpikeEvent>, source_count: usize, t_max: f64) -> Result<Self> {
        if !(t_max > 0.0) {
            return Err(Error::Parameter(format!("t_max must be positive, got {t_max}")));
        }
        let mut seen = vec![false; source_count];
        let mut last = f64::NEG_INFINITY;
        for ev in &events {
            let src = ev.source as usize;
            if src >= source_count {
                return Err(Error::structural("spike source", format!("< {source_count}"), src));
            }
            if seen[src] {
                return Err(Error::Domain(format!("source {src} spikes more than once")));
            }
            seen[src] = true;
            if !(0.0..=t_max).contains(&ev.time) {
                return Err(Error::Domain(format!(
                    "spike time {} of source {src} outside [0, {t_max}]",
                    ev.time
                )));
            }
            if ev.time < last {
                return Err(Error::Domain("events are not sorted by time".into()));
            }
            last = ev.time;
        }
        Ok(SpikeTrain {
            events,
            source_count,
            t_max,
        })
    }

    /// Builds a train from per-source optional times. Ties keep source order.
    pub fn from_times(times: &[Option<f64>], t_max: f64) -> Result<Self> {
        let mut events: Vec<SpikeEvent> = times
            .iter()
            .enumerate()
            .filter_map(|(i, t)| t.map(|time| SpikeEvent { source: i as u32, time }))
            .collect();
        events.sort_by(|a, b| a.time.total_cmp(&b.time));
        SpikeTrain::new(events, times.len(), t_max)
    }

    pub fn empty(source_count: usize, t_max: f64) -> Self {
        SpikeTrain {
            events: Vec::new(),
            source_count,
            t_max,
        }
    }

    pub fn events(&self) -> &[SpikeEvent] {
        &self.events
    }

    pub fn source_count(&self) -> usize {
        self.source_count
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Dense per-source spike times; sources that never fired map to `+inf`.
    pub fn dense_times(&self) -> Vec<f64> {
        let mut times = vec![f64::INFINITY; self.source_count];
        for ev in &self.events {
            times[ev.source as usize] = ev.time;
        }
        times
    }

    /// Groups of events sharing one timestamp, in time order.
    pub fn time_groups(&self) -> impl Iterator<Item = &[SpikeEvent]> {
        self.events.chunk_by(|a, b| a.time == b.time)
    }

    /// Copy with every timestamp shifted by `delta` and the window widened to match.
    pub fn shifted(&self, delta: f64) -> Result<Self> {
        let events = self
            .events
            .iter()
            .map(|e| SpikeEvent {
                source: e.source,
                time: e.time + delta,
            })
            .collect();
        SpikeTrain::new(events, self.source_count, self.t_max + delta.max(0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DogParams {
    pub center_sigma: f64,
    pub surround_sigma: f64,
    pub kernel_size: usize,
}

impl Default for DogParams {
    fn default() -> Self {
        DogParams {
            center_sigma: 1.0,
            surround_sigma: 2.0,
            kernel_size: 7,
        }
    }
}

impl DogParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.center_sigma > 0.0 && self.surround_sigma > 0.0) {
            return Err(Error::Parameter("DoG sigmas must be positive".into()));
        }
        if self.center_sigma >= self.surround_sigma {
            return Err(Error::Parameter(format!(
                "center sigma {} must be below surround sigma {}",
                self.center_sigma, self.surround_sigma
            )));
        }
        if self.kernel_size % 2 == 0 {
            return Err(Error::Parameter(format!(
                "DoG kernel size must be odd, got {}",
                self.kernel_size
            )));
        }
        Ok(())
    }
}

fn gaussian_1d(sigma: f64, size: usize) -> Vec<f64> {
    let half = (size / 2) as f64;
    let mut k: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian blur with edge replication.
fn blur(plane: &[f64], height: usize, width: usize, kernel: &[f64]) -> Vec<f64> {
    let half = (kernel.len() / 2) as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut rows = vec![0.0; plane.len()];
    for y in 0..height {
        for x in 0..width {
            rows[y * width + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * plane[y * width + clamp(x as isize + k as isize - half, width)])
                .sum();
        }
    }
    let mut out = vec![0.0; plane.len()];
    for y in 0..height {
        for x in 0..width {
            out[y * width + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * rows[clamp(y as isize + k as isize - half, height) * width + x])
                .sum();
        }
    }
    out
}

fn dog_response(plane: &[f64], height: usize, width: usize, params: &DogParams) -> Vec<f64> {
    let center = blur(plane, height, width, &gaussian_1d(params.center_sigma, params.kernel_size));
    let surround = blur(plane, height, width, &gaussian_1d(params.surround_sigma, params.kernel_size));
    center.iter().zip(&surround).map(|(c, s)| c - s).collect()
}

// Responses below this are rounding noise from the two blurs of a flat region.
const FLAT_RESPONSE: f64 = 1e-12;

fn split_on_off(responses: &[Vec<f64>], height: usize, width: usize) -> Result<ImageTensor> {
    let peak = responses
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let n = height * width;
    let mut values = vec![0.0; 2 * responses.len() * n];
    if peak > FLAT_RESPONSE {
        for (c, resp) in responses.iter().enumerate() {
            let (on, off) = values[2 * c * n..2 * (c + 1) * n].split_at_mut(n);
            for (i, r) in resp.iter().enumerate() {
                let v = r / peak;
                if v > 0.0 {
                    on[i] = v;
                } else {
                    off[i] = -v;
                }
            }
        }
    }
    ImageTensor::new(height, width, 2 * responses.len(), values)
}

/// Difference-of-Gaussians on/off-center coding of a grayscale image.
///
/// Plane 0 holds the positive part of the response, plane 1 the positive part
/// of its negation, both divided by the global peak absolute response.
pub fn preprocess_on_off_center(image: &ImageTensor, params: &DogParams) -> Result<ImageTensor> {
    if image.channels != 1 {
        return Err(Error::Dimension(format!(
            "on/off-center coding needs a grayscale image, got {} channels",
            image.channels
        )));
    }
    preprocess_on_off_per_channel(image, params)
}

/// On/off-center coding applied to each channel independently; channel `c`
/// yields planes `2c` (on) and `2c + 1` (off). Used for RGB inputs.
pub fn preprocess_on_off_per_channel(
    image: &ImageTensor,
    params: &DogParams,
) -> Result<ImageTensor> {
    params.validate()?;
    let responses: Vec<Vec<f64>> = (0..image.channels)
        .map(|c| dog_response(image.plane(c), image.height, image.width, params))
        .collect();
    split_on_off(&responses, image.height, image.width)
}

/// Latency code of a single intensity.
pub fn encode_latency(x: f64, t_max: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("intensity {x} is outside [0, 1]")));
    }
    if !(t_max > 0.0) {
        return Err(Error::Parameter(format!("t_max must be positive, got {t_max}")));
    }
    Ok(t_max * (1.0 - x))
}

/// Latency-codes every cell of `planes`; sources are indexed `(channel, row, col)`.
pub fn encode_image(planes: &ImageTensor, t_max: f64, skip_zero: bool) -> Result<SpikeTrain> {
    let mut times = Vec::with_capacity(planes.values.len());
    for &x in &planes.values {
        let t = if skip_zero && x <= 0.0 {
            None
        } else {
            Some(encode_latency(x, t_max)?)
        };
        times.push(t);
    }
    SpikeTrain::from_times(&times, t_max)
}
