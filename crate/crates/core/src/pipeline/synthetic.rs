//! Deterministic quasi-ECG generator: a train of Gaussian P, Q, R, S and T
//! bumps plus seeded Gaussian noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cipher::SignalSegment;
use crate::error::{Error, Result};

/// `(amplitude, offset from the R peak in s, width in s)` per wave.
const WAVES: [(f64, f64, f64); 5] = [
    (0.15, -0.20, 0.025),
    (-0.12, -0.03, 0.010),
    (1.00, 0.00, 0.010),
    (-0.25, 0.03, 0.010),
    (0.30, 0.25, 0.040),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticEcg {
    pub sample_rate: f64,
    pub heart_rate_bpm: f64,
    pub amplitude: f64,
    pub offset: f64,
    /// Standard deviation of the additive Gaussian noise.
    pub noise_amplitude: f64,
    /// Time of the first R peak, in seconds; `None` puts it at half an RR
    /// interval.
    pub first_beat: Option<f64>,
    pub seed: u64,
}

impl Default for SyntheticEcg {
    fn default() -> Self {
        Self {
            sample_rate: 500.0,
            heart_rate_bpm: 72.0,
            amplitude: 1.0,
            offset: 0.0,
            noise_amplitude: 0.02,
            first_beat: None,
            seed: 0,
        }
    }
}

impl SyntheticEcg {
    fn check(&self) -> Result<()> {
        if !(self.sample_rate > 0.0 && self.heart_rate_bpm > 0.0) {
            return Err(Error::Domain(
                "sample rate and heart rate must be positive".into(),
            ));
        }
        if !(self.noise_amplitude >= 0.0) {
            return Err(Error::Domain("noise amplitude must be non-negative".into()));
        }
        Ok(())
    }

    pub fn rr_interval(&self) -> f64 {
        60.0 / self.heart_rate_bpm
    }

    /// Noise-free waveform value at time `t`.
    pub fn clean_value(&self, t: f64) -> f64 {
        let rr = self.rr_interval();
        let first = self.first_beat.unwrap_or(0.5 * rr);
        // only beats within a second of t contribute measurably
        let k = ((t - first) / rr).round();
        let span = (1.0 / rr).ceil() + 1.0;
        let mut v = self.offset;
        let mut b = k - span;
        while b <= k + span {
            let centre = first + b * rr;
            for &(a, dt, w) in &WAVES {
                let d = t - centre - dt;
                v += self.amplitude * a * (-(d * d) / (2.0 * w * w)).exp();
            }
            b += 1.0;
        }
        v
    }

    /// An endless sample stream.
    pub fn stream(&self) -> Result<SampleStream> {
        self.check()?;
        let noise = Normal::new(0.0, self.noise_amplitude.max(f64::MIN_POSITIVE))
            .map_err(|e| Error::Domain(e.to_string()))?;
        Ok(SampleStream {
            gen: self.clone(),
            rng: ChaCha8Rng::seed_from_u64(self.seed),
            noise,
            index: 0,
        })
    }

    pub fn samples(&self, n: usize) -> Result<Vec<f64>> {
        Ok(self.stream()?.take(n).collect())
    }

    /// `duration` seconds of signal cut into consecutive segments; a trailing
    /// partial segment is dropped.
    pub fn segments(&self, duration: f64, segment_len: usize) -> Result<Vec<SignalSegment>> {
        let n = (duration * self.sample_rate).round() as usize;
        let all = self.samples(n)?;
        all.chunks_exact(segment_len.max(1))
            .map(|c| SignalSegment::new(c.to_vec(), self.sample_rate))
            .collect()
    }
}

pub struct SampleStream {
    gen: SyntheticEcg,
    rng: ChaCha8Rng,
    noise: Normal<f64>,
    index: u64,
}

impl Iterator for SampleStream {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        let t = self.index as f64 / self.gen.sample_rate;
        self.index += 1;
        let n = self.noise.sample(&mut self.rng);
        let noise = if self.gen.noise_amplitude > 0.0 {
            n
        } else {
            0.0
        };
        Some(self.gen.clean_value(t) + noise)
    }
}

/// Population of synthetic recordings drawn from one seed: heart rate 55 to
/// 95 bpm, amplitude 0.8 to 1.2, baseline 0.05 to 0.25, random beat phase.
/// Each segment comes from its own recording.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    pub count: usize,
    pub segment_len: usize,
    pub sample_rate: f64,
    pub noise_amplitude: f64,
    pub seed: u64,
}

impl Default for Cohort {
    fn default() -> Self {
        Self {
            count: 100,
            segment_len: 300,
            sample_rate: 500.0,
            noise_amplitude: 0.02,
            seed: 0,
        }
    }
}

impl Cohort {
    pub fn generators(&self) -> Vec<SyntheticEcg> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.count)
            .map(|_| {
                let heart_rate_bpm = rng.random_range(55.0..95.0);
                let rr = 60.0 / heart_rate_bpm;
                SyntheticEcg {
                    sample_rate: self.sample_rate,
                    heart_rate_bpm,
                    amplitude: rng.random_range(0.8..1.2),
                    offset: rng.random_range(0.05..0.25),
                    noise_amplitude: self.noise_amplitude,
                    first_beat: Some(rng.random_range(0.0..rr)),
                    seed: rng.random(),
                }
            })
            .collect()
    }

    pub fn segments(&self) -> Result<Vec<SignalSegment>> {
        self.generators()
            .iter()
            .map(|g| SignalSegment::new(g.samples(self.segment_len)?, self.sample_rate))
            .collect()
    }
}

/// Adds white Gaussian noise at the given SNR, signal power taken as the
/// segment variance.
pub fn add_noise_snr(
    segment: &SignalSegment,
    snr_db: f64,
    rng: &mut impl Rng,
) -> Result<SignalSegment> {
    let n = segment.len() as f64;
    let mean = segment.samples.iter().sum::<f64>() / n;
    let power = segment
        .samples
        .iter()
        .map(|x| (x - mean).powi(2))
        .sum::<f64>()
        / n;
    let sd = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    if sd == 0.0 {
        return Ok(segment.clone());
    }
    let normal = Normal::new(0.0, sd).map_err(|e| Error::Domain(e.to_string()))?;
    let samples = segment
        .samples
        .iter()
        .map(|x| x + normal.sample(rng))
        .collect();
    SignalSegment::new(samples, segment.sample_rate)
}

/// Local maxima above `frac` of the segment's range, at least 0.2 s apart.
pub fn count_peaks(segment: &SignalSegment, frac: f64) -> usize {
    let s = &segment.samples;
    let range = segment.range();
    let thresh = range.min + frac * range.width();
    let refractory = (0.2 * segment.sample_rate) as usize;
    let mut count = 0;
    let mut last: Option<usize> = None;
    for i in 1..s.len().saturating_sub(1) {
        let peak = s[i] >= thresh && s[i] >= s[i - 1] && s[i] > s[i + 1];
        if peak && last.is_none_or(|l| i - l >= refractory) {
            count += 1;
            last = Some(i);
        }
    }
    count
}
