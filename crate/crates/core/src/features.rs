//! Log mel filterbank energies, ideal ratio masks and mask application.
//!
//! Frames are taken without centring: frame `i` covers samples
//! `[i * hop, i * hop + win)`, so a waveform of `len` samples yields
//! `1 + (len - win) / hop` frames. Each frame is Hann-windowed, zero-padded to
//! the next power of two and reduced to mel power with triangular filters on
//! the HTK mel scale.

use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

/// Floor added before taking the log of mel power.
pub const LOG_FLOOR: f64 = 1e-5;
/// Regulariser in the ideal ratio mask denominator.
pub const IRM_EPS: f64 = 1e-8;
pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;
pub const DEFAULT_CHANNELS: usize = 128;
pub const DEFAULT_WIN_MS: f64 = 32.0;
pub const DEFAULT_HOP_MS: f64 = 10.0;
pub const MEL_LOW_HZ: f64 = 125.0;
pub const MEL_HIGH_HZ: f64 = 7500.0;

/// Mono audio.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("Waveform::new", "sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("waveform sample {i}")));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Self {
            samples: vec![0.0; len],
            sample_rate: sample_rate.max(1),
        }
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let ss: f64 = self.samples.iter().map(|&s| (s as f64) * (s as f64)).sum();
        (ss / self.samples.len() as f64).sqrt()
    }

    /// Samples `[start, end)` as a new waveform.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            samples: self.samples[start..end].to_vec(),
            sample_rate: self.sample_rate,
        }
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    /// Read a 16-bit PCM mono WAV file.
    pub fn read_wav(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = hound::WavReader::open(path.as_ref())?;
        let spec = reader.spec();
        if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
            return Err(Error::invalid(
                "read_wav",
                format!(
                    "expected 16-bit PCM mono, got {} channel(s) of {}-bit {:?}",
                    spec.channels, spec.bits_per_sample, spec.sample_format
                ),
            ));
        }
        let samples = reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Self::new(samples, spec.sample_rate)
    }

    /// Write as 16-bit PCM mono, clipping to `[-1, 1]`.
    pub fn write_wav(&self, path: impl AsRef<Path>) -> Result<()> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: self.sample_rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut writer = hound::WavWriter::create(path.as_ref(), spec)?;
        for &s in &self.samples {
            let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
            writer.write_sample(v)?;
        }
        writer.finalize()?;
        Ok(())
    }
}

/// `T x F` matrix of per-frame features (log mel power for LFBE maps).
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap<T>(Matrix<T>);

impl<T: Scalar> FeatureMap<T> {
    pub fn new(data: Matrix<T>) -> Result<Self> {
        if !data.is_finite() {
            return Err(Error::NonFinite("feature map entry".into()));
        }
        Ok(Self(data))
    }

    pub fn zeros(frames: usize, channels: usize) -> Self {
        Self(Matrix::zeros(frames, channels))
    }

    pub fn num_frames(&self) -> usize {
        self.0.rows()
    }

    pub fn num_channels(&self) -> usize {
        self.0.cols()
    }

    pub fn data(&self) -> &Matrix<T> {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix<T> {
        self.0
    }

    pub fn is_all_zero(&self) -> bool {
        self.0.as_slice().iter().all(|v| *v == T::zero())
    }

    /// Frames `[start, end)`.
    pub fn frames(&self, start: usize, end: usize) -> Self {
        Self(self.0.slice_rows(start, end))
    }

    /// Channels `[start, end)`.
    pub fn channels(&self, start: usize, end: usize) -> Self {
        Self(self.0.slice_cols(start, end))
    }

    /// Truncate or zero-pad (at the end) to exactly `frames` frames.
    pub fn fit_frames(&self, frames: usize) -> Self {
        let n = self.num_frames();
        if n >= frames {
            return self.frames(0, frames);
        }
        let pad = Matrix::zeros(frames - n, self.num_channels());
        Self(Matrix::vcat(&self.0, &pad).expect("matching channel count"))
    }

    pub fn cast<U: Scalar>(&self) -> FeatureMap<U> {
        FeatureMap(self.0.cast())
    }
}

/// Mask in `[0, 1]`, same shape as the feature map it applies to.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskEstimate<T>(Matrix<T>);

impl<T: Scalar> MaskEstimate<T> {
    pub fn new(data: Matrix<T>) -> Result<Self> {
        if let Some(v) = data
            .as_slice()
            .iter()
            .find(|v| !(**v >= T::zero() && **v <= T::one()))
        {
            return Err(Error::invalid("MaskEstimate::new", format!("entry {v} outside [0, 1]")));
        }
        Ok(Self(data))
    }

    pub fn ones(frames: usize, channels: usize) -> Self {
        Self(Matrix::filled(frames, channels, T::one()))
    }

    pub fn data(&self) -> &Matrix<T> {
        &self.0
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn into_matrix(self) -> Matrix<T> {
        self.0
    }

    pub fn cast<U: Scalar>(&self) -> MaskEstimate<U> {
        MaskEstimate(self.0.cast())
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters mapping FFT bins to mel channels.
#[derive(Clone, Debug)]
pub struct MelFilterbank {
    /// Per channel: first bin and the weights starting at that bin.
    filters: Vec<(usize, Vec<f64>)>,
    centers_hz: Vec<f64>,
    num_bins: usize,
    low_hz: f64,
    high_hz: f64,
}

impl MelFilterbank {
    /// Filters with centres equally spaced in mel between `low_hz` and
    /// `high_hz`. A channel too narrow to cover any bin centre gets unit
    /// weight on the bin nearest its centre, so every channel is non-empty.
    pub fn new(n_channels: usize, n_fft: usize, sample_rate: u32, low_hz: f64, high_hz: f64) -> Result<Self> {
        let nyquist = sample_rate as f64 / 2.0;
        if n_channels == 0 || n_fft < 2 || !(0.0 <= low_hz && low_hz < high_hz && high_hz <= nyquist) {
            return Err(Error::invalid(
                "MelFilterbank::new",
                format!("{n_channels} channels, n_fft {n_fft}, range {low_hz}..{high_hz} Hz at {sample_rate} Hz"),
            ));
        }
        let num_bins = n_fft / 2 + 1;
        let bin_hz = sample_rate as f64 / n_fft as f64;
        let (lo, hi) = (hz_to_mel(low_hz), hz_to_mel(high_hz));
        let edges: Vec<f64> = (0..n_channels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_channels + 1) as f64))
            .collect();
        let mut filters = Vec::with_capacity(n_channels);
        let mut centers_hz = Vec::with_capacity(n_channels);
        for c in 0..n_channels {
            let (left, center, right) = (edges[c], edges[c + 1], edges[c + 2]);
            centers_hz.push(center);
            let mut weights = vec![0.0; num_bins];
            for (b, w) in weights.iter_mut().enumerate() {
                let f = b as f64 * bin_hz;
                *w = if f > left && f <= center {
                    (f - left) / (center - left)
                } else if f > center && f < right {
                    (right - f) / (right - center)
                } else {
                    0.0
                };
            }
            if weights.iter().all(|&w| w == 0.0) {
                let nearest = ((center / bin_hz).round() as usize).min(num_bins - 1);
                weights[nearest] = 1.0;
            }
            let first = weights.iter().position(|&w| w > 0.0).expect("non-empty filter");
            let last = weights.iter().rposition(|&w| w > 0.0).expect("non-empty filter");
            filters.push((first, weights[first..=last].to_vec()));
        }
        Ok(Self {
            filters,
            centers_hz,
            num_bins,
            low_hz,
            high_hz,
        })
    }

    pub fn num_channels(&self) -> usize {
        self.filters.len()
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    pub fn frequency_range(&self) -> (f64, f64) {
        (self.low_hz, self.high_hz)
    }

    /// Dense `F x K` weight matrix.
    pub fn weights(&self) -> Matrix<f64> {
        let mut w = Matrix::zeros(self.filters.len(), self.num_bins);
        for (c, (first, ws)) in self.filters.iter().enumerate() {
            for (i, &v) in ws.iter().enumerate() {
                w.set(c, first + i, v);
            }
        }
        w
    }

    fn apply(&self, power: &[f64], out: &mut [f64]) {
        for ((first, ws), o) in self.filters.iter().zip(out.iter_mut()) {
            *o = ws.iter().zip(&power[*first..]).map(|(w, p)| w * p).sum();
        }
    }
}

/// Framing, windowing and filterbank parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureConfig {
    pub sample_rate: u32,
    pub win_ms: f64,
    pub hop_ms: f64,
    pub n_channels: usize,
    pub low_hz: f64,
    pub high_hz: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            sample_rate: DEFAULT_SAMPLE_RATE,
            win_ms: DEFAULT_WIN_MS,
            hop_ms: DEFAULT_HOP_MS,
            n_channels: DEFAULT_CHANNELS,
            low_hz: MEL_LOW_HZ,
            high_hz: MEL_HIGH_HZ,
        }
    }
}

fn whole_samples(sample_rate: u32, ms: f64, what: &str) -> Result<usize> {
    let n = sample_rate as f64 * ms / 1000.0;
    if n < 1.0 || (n - n.round()).abs() > 1e-9 {
        return Err(Error::invalid(
            "lfbe_extract",
            format!("{what} of {ms} ms is not a whole number of samples at {sample_rate} Hz"),
        ));
    }
    Ok(n.round() as usize)
}

/// Reusable STFT + mel analysis for one [`FeatureConfig`].
#[derive(Clone)]
pub struct FeatureExtractor {
    config: FeatureConfig,
    win: usize,
    hop: usize,
    n_fft: usize,
    window: Vec<f64>,
    filterbank: MelFilterbank,
    fft: Arc<dyn Fft<f64>>,
}

impl FeatureExtractor {
    pub fn new(config: FeatureConfig) -> Result<Self> {
        let win = whole_samples(config.sample_rate, config.win_ms, "window")?;
        let hop = whole_samples(config.sample_rate, config.hop_ms, "hop")?;
        let n_fft = win.next_power_of_two();
        // periodic Hann
        let window = (0..win)
            .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / win as f64).cos())
            .collect();
        let filterbank = MelFilterbank::new(config.n_channels, n_fft, config.sample_rate, config.low_hz, config.high_hz)?;
        let fft = FftPlanner::new().plan_fft_forward(n_fft);
        Ok(Self {
            config,
            win,
            hop,
            n_fft,
            window,
            filterbank,
            fft,
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    pub fn window_samples(&self) -> usize {
        self.win
    }

    pub fn hop_samples(&self) -> usize {
        self.hop
    }

    pub fn fft_size(&self) -> usize {
        self.n_fft
    }

    /// Number of frames produced for `len` samples (0 if shorter than a window).
    pub fn num_frames(&self, len: usize) -> usize {
        if len < self.win {
            0
        } else {
            1 + (len - self.win) / self.hop
        }
    }

    /// Mel power per frame (before the log).
    pub fn mel_power<T: Scalar>(&self, wav: &Waveform) -> Result<Matrix<T>> {
        if wav.sample_rate() != self.config.sample_rate {
            return Err(Error::invalid(
                "lfbe_extract",
                format!("sample rate {} != configured {}", wav.sample_rate(), self.config.sample_rate),
            ));
        }
        if wav.len() < self.win {
            return Err(Error::shape(
                "lfbe_extract",
                format!("at least one window ({} samples)", self.win),
                format!("{} samples", wav.len()),
            ));
        }
        let frames = self.num_frames(wav.len());
        let f = self.filterbank.num_channels();
        let mut out = Matrix::zeros(frames, f);
        let mut buf = vec![Complex::new(0.0, 0.0); self.n_fft];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut power = vec![0.0; self.filterbank.num_bins()];
        let mut mel = vec![0.0; f];
        let samples = wav.samples();
        for t in 0..frames {
            let start = t * self.hop;
            for (i, b) in buf.iter_mut().enumerate() {
                *b = if i < self.win {
                    Complex::new(samples[start + i] as f64 * self.window[i], 0.0)
                } else {
                    Complex::new(0.0, 0.0)
                };
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (p, b) in power.iter_mut().zip(&buf) {
                *p = b.norm_sqr();
            }
            self.filterbank.apply(&power, &mut mel);
            for (o, &m) in out.row_mut(t).iter_mut().zip(&mel) {
                *o = T::of(m);
            }
        }
        Ok(out)
    }

    pub fn lfbe<T: Scalar>(&self, wav: &Waveform) -> Result<FeatureMap<T>> {
        let power = self.mel_power::<f64>(wav)?;
        Ok(FeatureMap(power.map(|p| (p + LOG_FLOOR).ln()).cast()))
    }
}

/// LFBE features with the given framing.
pub fn lfbe_extract<T: Scalar>(wav: &Waveform, win_ms: f64, hop_ms: f64, n_channels: usize) -> Result<FeatureMap<T>> {
    let extractor = FeatureExtractor::new(FeatureConfig {
        sample_rate: wav.sample_rate(),
        win_ms,
        hop_ms,
        n_channels,
        ..FeatureConfig::default()
    })?;
    extractor.lfbe(wav)
}

/// Log-compress mel power with the standard floor.
pub fn log_mel<T: Scalar>(power: &Matrix<T>) -> FeatureMap<T> {
    let floor = T::of(LOG_FLOOR);
    FeatureMap(power.map(|p| (p + floor).ln()))
}

/// Power-domain ratio mask `S / (S + N + eps)`.
pub fn ideal_ratio_mask<T: Scalar>(clean_power: &Matrix<T>, noise_power: &Matrix<T>) -> Result<MaskEstimate<T>> {
    if clean_power.shape() != noise_power.shape() {
        return Err(Error::shape(
            "ideal_ratio_mask",
            format!("{:?}", clean_power.shape()),
            format!("{:?}", noise_power.shape()),
        ));
    }
    let neg = |m: &Matrix<T>| m.as_slice().iter().any(|v| !(*v >= T::zero()));
    if neg(clean_power) || neg(noise_power) {
        return Err(Error::invalid("ideal_ratio_mask", "power must be non-negative"));
    }
    let eps = T::of(IRM_EPS);
    Ok(MaskEstimate(clean_power.zip_map(noise_power, |s, n| s / (s + n + eps))))
}

/// Apply a mask in the mel-power domain: `log(mask * (exp(x) - eps) + eps)`.
///
/// Bins with a mask of exactly one are passed through untouched.
pub fn apply_mask<T: Scalar>(noisy: &FeatureMap<T>, mask: &MaskEstimate<T>) -> Result<FeatureMap<T>> {
    if noisy.data().shape() != mask.shape() {
        return Err(Error::shape(
            "apply_mask",
            format!("{:?}", noisy.data().shape()),
            format!("{:?}", mask.shape()),
        ));
    }
    let out = noisy.data().zip_map(mask.data(), |x, m| {
        if m == T::one() {
            return x;
        }
        let (x, m) = (x.to_f64_lossy(), m.to_f64_lossy());
        let arg = (m * (x.exp() - LOG_FLOOR) + LOG_FLOOR).max(LOG_FLOOR);
        T::of(arg.ln())
    });
    Ok(FeatureMap(out))
}

/// Per-frame channel concatenation `[noisy | reference]`. The reference is
/// zero-padded or truncated to the noisy frame count first.
pub fn stack_features<T: Scalar>(noisy: &FeatureMap<T>, playback_ref: &FeatureMap<T>) -> Result<FeatureMap<T>> {
    if noisy.num_channels() != playback_ref.num_channels() {
        return Err(Error::shape(
            "stack_features",
            format!("{} reference channels", noisy.num_channels()),
            format!("{}", playback_ref.num_channels()),
        ));
    }
    let reference = playback_ref.fit_frames(noisy.num_frames());
    Ok(FeatureMap(Matrix::hcat(noisy.data(), reference.data())?))
}
