//! Multichannel records, channel normalization, finite differences and
//! synthetic Hölder-class generators.
//!
//! Samples are stored channel-major: `channels[i][k]` is channel `i` at grid
//! index `k`, and grid index `k` maps to `t = k / (n - 1)` on `[0, 1]`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Length of the truncated fractional-integration filter used by
/// [`gen_fbm_like`].
pub const FBM_FILTER_LEN: usize = 512;

/// A discretized vector function: `d` channels of `n` uniformly spaced samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    channels: Vec<Vec<f64>>,
    sample_rate_hz: f64,
    subject_id: String,
}

impl Record {
    pub fn new(
        channels: Vec<Vec<f64>>,
        sample_rate_hz: f64,
        subject_id: impl Into<String>,
    ) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::Shape("record has no channels".into()));
        }
        let n = channels[0].len();
        if n < 2 {
            return Err(Error::Shape(format!("record needs at least 2 samples, got {n}")));
        }
        for (i, ch) in channels.iter().enumerate() {
            if ch.len() != n {
                return Err(Error::Shape(format!(
                    "channel {i} has {} samples, channel 0 has {n}",
                    ch.len()
                )));
            }
            if let Some(k) = ch.iter().position(|v| !v.is_finite()) {
                return Err(Error::Shape(format!("channel {i} sample {k} is not finite")));
            }
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::BadParams(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        Ok(Record {
            channels,
            sample_rate_hz,
            subject_id: subject_id.into(),
        })
    }

    /// Single-channel record sampled on `[0, 1]`.
    pub fn single(values: Vec<f64>, subject_id: impl Into<String>) -> Result<Self> {
        let rate = (values.len().max(2) - 1) as f64;
        Record::new(vec![values], rate, subject_id)
    }

    /// Number of samples per channel.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        &self.channels[i]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn with_subject_id(mut self, id: impl Into<String>) -> Self {
        self.subject_id = id.into();
        self
    }

    /// Sample `k` across all channels.
    pub fn row(&self, k: usize) -> Vec<f64> {
        self.channels.iter().map(|ch| ch[k]).collect()
    }

    /// Time-reversed copy.
    pub fn reversed(&self) -> Record {
        let channels = self
            .channels
            .iter()
            .map(|ch| ch.iter().rev().copied().collect())
            .collect();
        Record {
            channels,
            sample_rate_hz: self.sample_rate_hz,
            subject_id: self.subject_id.clone(),
        }
    }

    /// Multiplies channel `i` by `factors[i]`.
    pub fn scaled(&self, factors: &[f64]) -> Result<Record> {
        if factors.len() != self.channel_count() {
            return Err(Error::Shape(format!(
                "{} scale factors for {} channels",
                factors.len(),
                self.channel_count()
            )));
        }
        let channels = self
            .channels
            .iter()
            .zip(factors)
            .map(|(ch, &c)| ch.iter().map(|v| v * c).collect())
            .collect();
        Record::new(channels, self.sample_rate_hz, self.subject_id.clone())
    }

    /// Concatenates the channels of `other` after those of `self`.
    pub fn stack(&self, other: &Record) -> Result<Record> {
        let mut channels = self.channels.clone();
        channels.extend(other.channels.iter().cloned());
        Record::new(channels, self.sample_rate_hz, self.subject_id.clone())
    }
}

/// Per-channel maximum absolute value `R_i` of a record before normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    pub r: Vec<f64>,
}

/// Hölder constant and exponent: `|x(t) - x(s)| <= l |t - s|^p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolderParams {
    pub l: f64,
    pub p: f64,
}

impl HolderParams {
    pub fn new(l: f64, p: f64) -> Result<Self> {
        if !(l > 0.0 && l.is_finite()) || !(p > 0.0 && p <= 1.0) {
            return Err(Error::BadParams(format!(
                "Hölder parameters need l > 0 and 0 < p <= 1, got l={l}, p={p}"
            )));
        }
        Ok(HolderParams { l, p })
    }

    /// Whether `values` (sampled on `[0, 1]`) satisfies the condition at every
    /// pair of grid points no more than `max_lag` samples apart.
    pub fn admits(&self, values: &[f64], max_lag: usize) -> bool {
        holder_ratio(values, self.p, 1, max_lag) <= self.l
    }
}

/// Divides each channel by its maximum absolute value.
pub fn normalize(record: &Record) -> Result<(Record, ChannelStats)> {
    let mut r = Vec::with_capacity(record.channel_count());
    let mut channels = Vec::with_capacity(record.channel_count());
    for (i, ch) in record.channels.iter().enumerate() {
        let max = ch.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if max == 0.0 {
            return Err(Error::DegenerateChannel { channel: i });
        }
        channels.push(ch.iter().map(|v| v / max).collect());
        r.push(max);
    }
    let out = Record {
        channels,
        sample_rate_hz: record.sample_rate_hz,
        subject_id: record.subject_id.clone(),
    };
    Ok((out, ChannelStats { r }))
}

/// Order-`order` forward difference, computed as `order` passes of
/// `x[t + 1] - x[t]`. Order 0 returns a copy.
pub fn difference(record: &Record, order: usize) -> Result<Record> {
    let n = record.len();
    if n < order + 2 {
        return Err(Error::TooShort { n, order });
    }
    let channels = record
        .channels
        .iter()
        .map(|ch| {
            let mut cur = ch.clone();
            for _ in 0..order {
                cur = cur.windows(2).map(|w| w[1] - w[0]).collect();
            }
            cur
        })
        .collect();
    Ok(Record {
        channels,
        sample_rate_hz: record.sample_rate_hz,
        subject_id: record.subject_id.clone(),
    })
}

fn unit_grid(n: usize) -> impl Iterator<Item = f64> {
    let denom = (n - 1) as f64;
    (0..n).map(move |k| k as f64 / denom)
}

/// Samples of the Weierstrass sum `Σ_{j<terms} a^j cos(b^j π t)` on the
/// uniform `n`-point grid over `[0, 1]`.
pub fn gen_weierstrass(n: usize, a: f64, b: u32, terms: usize) -> Result<Record> {
    if n < 2 {
        return Err(Error::BadParams(format!("need n >= 2, got {n}")));
    }
    if !(a > 0.0 && a < 1.0) || b < 2 || a * f64::from(b) <= 1.0 || terms == 0 {
        return Err(Error::BadParams(format!(
            "Weierstrass needs 0 < a < 1, integer b >= 2, a*b > 1, terms >= 1; got a={a}, b={b}, terms={terms}"
        )));
    }
    let amp: Vec<f64> = (0..terms).map(|j| a.powi(j as i32)).collect();
    let freq: Vec<f64> = (0..terms)
        .map(|j| f64::from(b).powi(j as i32) * std::f64::consts::PI)
        .collect();
    let values = unit_grid(n)
        .map(|t| amp.iter().zip(&freq).map(|(a, f)| a * (f * t).cos()).sum())
        .collect();
    Record::single(values, format!("weierstrass-a{a}-b{b}"))
}

/// Hölder exponent `-ln a / ln b` of the Weierstrass sum.
pub fn weierstrass_exponent(a: f64, b: u32) -> f64 {
    -a.ln() / f64::from(b).ln()
}

/// Samples of `Σ coeffs[j] t^j` on the uniform `n`-point grid over `[0, 1]`.
pub fn gen_polynomial(n: usize, degree: usize, coeffs: &[f64]) -> Result<Record> {
    if n < 2 {
        return Err(Error::BadParams(format!("need n >= 2, got {n}")));
    }
    if coeffs.len() != degree + 1 {
        return Err(Error::BadParams(format!(
            "degree {degree} needs {} coefficients, got {}",
            degree + 1,
            coeffs.len()
        )));
    }
    let values = unit_grid(n)
        .map(|t| coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c))
        .collect();
    Record::single(values, format!("poly-d{degree}"))
}

fn channel_rng(seed: u64, channel: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(channel as u64);
    rng
}

/// The first `n` standard-normal draws of channel `channel` under `seed`;
/// the innovations [`gen_fbm_like`] filters.
pub fn white_noise(n: usize, seed: u64, channel: usize) -> Vec<f64> {
    let mut rng = channel_rng(seed, channel);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Weights of `(1 - L)^{-d}` truncated to `len` lags.
fn fractional_filter(d: f64, len: usize) -> Vec<f64> {
    let mut psi = Vec::with_capacity(len);
    psi.push(1.0);
    for k in 1..len {
        let prev = psi[k - 1];
        psi.push(prev * ((k - 1) as f64 + d) / k as f64);
    }
    psi
}

/// Increments of channel `channel` of [`gen_fbm_like`]: Gaussian noise
/// passed through the fractional-integration filter with `d = hurst - 0.5`,
/// truncated at [`FBM_FILTER_LEN`] lags. At `hurst = 0.5` this is exactly
/// [`white_noise`].
pub fn fbm_increments(n: usize, hurst: f64, seed: u64, channel: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::BadParams(format!("need n >= 2, got {n}")));
    }
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(Error::BadParams(format!("hurst must be in (0, 1), got {hurst}")));
    }
    let lags = FBM_FILTER_LEN.min(n);
    let psi = fractional_filter(hurst - 0.5, lags);
    let mut rng = channel_rng(seed, channel);
    let mut noise: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    // Pre-sample innovations, drawn after the main block, stored oldest first.
    let mut buf: Vec<f64> = (0..lags - 1).map(|_| StandardNormal.sample(&mut rng)).collect();
    buf.reverse();
    buf.append(&mut noise);
    let offset = lags - 1;
    Ok((0..n)
        .map(|t| {
            let at = offset + t;
            psi.iter()
                .enumerate()
                .fold(0.0, |acc, (k, w)| acc + w * buf[at - k])
        })
        .collect())
}

/// Fractional-Brownian-like paths with roughness set by `hurst`: the
/// cumulative sum of [`fbm_increments`]. Channel `i` draws from ChaCha
/// stream `i` of `seed`.
pub fn gen_fbm_like(n: usize, hurst: f64, seed: u64, channels: usize) -> Result<Record> {
    if channels == 0 {
        return Err(Error::BadParams("need at least one channel".into()));
    }
    let data = (0..channels)
        .map(|c| {
            let inc = fbm_increments(n, hurst, seed, c)?;
            let mut acc = 0.0;
            Ok(inc
                .into_iter()
                .map(|v| {
                    acc += v;
                    acc
                })
                .collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Record::new(data, (n - 1) as f64, format!("fbm-h{hurst}-s{seed}"))
}

/// `max |x(t) - x(s)| / |t - s|^p` over grid pairs with lag in
/// `min_lag..=max_lag` samples, with time measured on `[0, 1]`.
pub fn holder_ratio(values: &[f64], p: f64, min_lag: usize, max_lag: usize) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let dt = 1.0 / (n - 1) as f64;
    let mut best = 0.0_f64;
    for lag in min_lag.max(1)..=max_lag.min(n - 1) {
        let denom = (lag as f64 * dt).powf(p);
        let m = values
            .windows(lag + 1)
            .fold(0.0_f64, |m, w| m.max((w[lag] - w[0]).abs()));
        best = best.max(m / denom);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(values: &[f64]) -> Record {
        Record::single(values.to_vec(), "t").unwrap()
    }

    #[test]
    fn normalize_divides_by_max_abs() {
        let (r, stats) = normalize(&one(&[2.0, -4.0, 1.0])).unwrap();
        assert_eq!(r.channel(0), &[0.5, -1.0, 0.25]);
        assert_eq!(stats.r, vec![4.0]);
    }

    #[test]
    fn normalize_unit_max_is_identity() {
        let (r, stats) = normalize(&one(&[1.0, -0.5])).unwrap();
        assert_eq!(r.channel(0), &[1.0, -0.5]);
        assert_eq!(stats.r, vec![1.0]);
    }

    #[test]
    fn normalize_rejects_zero_channel() {
        let rec = Record::new(vec![vec![1.0, 2.0], vec![0.0, 0.0]], 1.0, "z").unwrap();
        assert!(matches!(normalize(&rec), Err(Error::DegenerateChannel { channel: 1 })));
    }

    #[test]
    fn differences() {
        let rec = one(&[1.0, 2.0, 4.0, 7.0]);
        assert_eq!(difference(&rec, 1).unwrap().channel(0), &[1.0, 2.0, 3.0]);
        assert_eq!(difference(&rec, 2).unwrap().channel(0), &[1.0, 1.0]);
        assert!(matches!(difference(&rec, 3), Err(Error::TooShort { n: 4, order: 3 })));
        assert!(matches!(difference(&rec, 4), Err(Error::TooShort { .. })));
    }

    #[test]
    fn second_difference_annihilates_ramp() {
        let ramp: Vec<f64> = (0..50).map(|k| 3.0 * k as f64 - 7.0).collect();
        let d2 = difference(&one(&ramp), 2).unwrap();
        assert!(d2.channel(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn weierstrass_single_term_is_cosine() {
        let rec = gen_weierstrass(11, 0.5, 3, 1).unwrap();
        for (k, v) in rec.channel(0).iter().enumerate() {
            let t = k as f64 / 10.0;
            assert_eq!(*v, (std::f64::consts::PI * t).cos());
        }
    }

    #[test]
    fn weierstrass_rejects_bad_params() {
        assert!(matches!(gen_weierstrass(1, 0.5, 3, 5), Err(Error::BadParams(_))));
        assert!(gen_weierstrass(10, 0.3, 3, 5).is_err());
        assert!(gen_weierstrass(10, 1.2, 3, 5).is_err());
        assert!(gen_weierstrass(10, 0.5, 3, 0).is_err());
    }

    #[test]
    fn polynomial_generator() {
        let ramp = gen_polynomial(5, 1, &[0.0, 1.0]).unwrap();
        assert_eq!(ramp.channel(0), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        let c = gen_polynomial(4, 0, &[1.0]).unwrap();
        assert!(c.channel(0).iter().all(|&v| v == 1.0));
        assert!(matches!(gen_polynomial(4, 2, &[1.0]), Err(Error::BadParams(_))));
    }

    #[test]
    fn fbm_half_increments_are_white_noise() {
        for c in 0..2 {
            let inc = fbm_increments(300, 0.5, 11, c).unwrap();
            assert_eq!(inc, white_noise(300, 11, c));
        }
        let rec = gen_fbm_like(300, 0.5, 11, 2).unwrap();
        let inc = fbm_increments(300, 0.5, 11, 1).unwrap();
        let mut acc = 0.0;
        for (x, v) in rec.channel(1).iter().zip(inc) {
            acc += v;
            assert_eq!(*x, acc);
        }
    }

    #[test]
    fn fbm_is_deterministic_and_channels_differ() {
        let a = gen_fbm_like(1000, 0.3, 5, 3).unwrap();
        let b = gen_fbm_like(1000, 0.3, 5, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.channel(0), a.channel(1));
        let c = gen_fbm_like(1000, 0.3, 6, 3).unwrap();
        assert_ne!(a.channel(0), c.channel(0));
    }

    #[test]
    fn fbm_rejects_bad_hurst() {
        assert!(gen_fbm_like(100, 0.0, 1, 1).is_err());
        assert!(gen_fbm_like(100, 1.0, 1, 1).is_err());
        assert!(gen_fbm_like(100, 1.5, 1, 1).is_err());
    }

    #[test]
    fn fbm_holder_ratio_does_not_blow_up_at_small_lags() {
        let n = 7680;
        let max_lag = (0.01 * (n - 1) as f64) as usize;
        for &h in &[0.3, 0.5, 0.7] {
            let rec = gen_fbm_like(n, h, 3, 1).unwrap();
            let x = rec.channel(0);
            let p = h - 0.05;
            let short = holder_ratio(x, p, 1, 4);
            let long = holder_ratio(x, p, max_lag / 2, max_lag);
            assert!(short.is_finite() && long.is_finite());
            assert!(short <= 2.0 * long, "h={h}: short {short} long {long}");
        }
    }

    #[test]
    fn holder_params_validation() {
        assert!(HolderParams::new(1.0, 0.5).is_ok());
        assert!(HolderParams::new(0.0, 0.5).is_err());
        assert!(HolderParams::new(1.0, 1.5).is_err());
        let ramp: Vec<f64> = (0..101).map(|k| k as f64 / 100.0).collect();
        assert!(HolderParams::new(1.0 + 1e-12, 1.0).unwrap().admits(&ramp, 100));
        assert!(!HolderParams::new(0.5, 1.0).unwrap().admits(&ramp, 100));
    }
}
