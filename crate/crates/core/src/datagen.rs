//! Deterministic synthetic scenes for the three interference tasks.
//!
//! Speech is stood in for by Gaussian excitation shaped by a speaker's
//! formant resonators and a syllable-rate envelope. Background noise is
//! resonator-coloured noise with a per-scene spectrum and a slow level
//! drift. Device echo is the playback reference passed through a few
//! delayed taps and a `tanh` soft clip.
//!
//! The noise context is cut from the same interference stream as the
//! in-utterance interference, immediately before the utterance (after an
//! optional gap), and scaled by the same gain.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::features::{ideal_ratio_mask, log_mel, FeatureExtractor, FeatureMap, MaskEstimate, Waveform};
use crate::model::{ContextBundle, SpeakerEmbedding, SPEAKER_DIM};
use crate::scalar::Scalar;

/// RMS every synthetic utterance is normalised to.
pub const UTTERANCE_RMS: f64 = 0.1;
/// Spacing between successive echo taps.
pub const ECHO_TAP_SPACING_MS: f64 = 12.5;
/// Minimum cosine distance check between distinct speakers' embeddings.
pub const MAX_SPEAKER_COSINE: f64 = 0.8;

const FORMANT_RANGES: [(f64, f64); 4] = [(250.0, 900.0), (850.0, 2500.0), (2000.0, 3500.0), (3300.0, 4800.0)];
const BANDWIDTH_RANGE: (f64, f64) = (60.0, 250.0);
const EMBEDDING_BANDWIDTH: f64 = 3.0;
const EMBEDDING_SEED: u64 = 0x5eed_d7ec_7012;

/// Interference type of a scene.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Task {
    Noise,
    Speech,
    Aec,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Noise, Task::Speech, Task::Aec];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Noise => "noise",
            Task::Speech => "speech",
            Task::Aec => "aec",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "noise" => Ok(Task::Noise),
            "speech" => Ok(Task::Speech),
            "aec" => Ok(Task::Aec),
            other => Err(Error::Config(format!("unknown task `{other}`"))),
        }
    }
}

/// SplitMix64 finaliser, used to derive independent seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Two-pole resonator with unit gain at DC.
#[derive(Clone, Copy, Debug)]
struct Resonator {
    b0: f64,
    a1: f64,
    a2: f64,
}

impl Resonator {
    fn new(freq: f64, bandwidth: f64, sample_rate: f64) -> Self {
        let r = (-PI * bandwidth / sample_rate).exp();
        let a1 = 2.0 * r * (2.0 * PI * freq / sample_rate).cos();
        let a2 = -r * r;
        Self { b0: 1.0 - a1 - a2, a1, a2 }
    }

    fn run(&self, x: &mut [f64]) {
        let (mut y1, mut y2) = (0.0, 0.0);
        for v in x.iter_mut() {
            let y = self.b0 * *v + self.a1 * y1 + self.a2 * y2;
            y2 = y1;
            y1 = y;
            *v = y;
        }
    }
}

fn gaussian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn normalise_rms(x: &mut [f64], target: f64) {
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt();
    if rms > 0.0 {
        let g = target / rms;
        x.iter_mut().for_each(|v| *v *= g);
    }
}

fn to_waveform(x: Vec<f64>, sample_rate: u32) -> Result<Waveform> {
    Waveform::new(x.into_iter().map(|v| v as f32).collect(), sample_rate)
}

/// A synthetic talker: fixed formant resonances and a derived embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpeaker {
    pub id: u64,
    /// `(centre Hz, bandwidth Hz)` per formant.
    pub formants: Vec<(f64, f64)>,
    embedding: SpeakerEmbedding<f64>,
}

impl SynthSpeaker {
    /// The speaker with this id; identical ids give identical speakers.
    pub fn new(id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(id, 0x5bea_4e45));
        let formants: Vec<(f64, f64)> = FORMANT_RANGES
            .iter()
            .map(|&(lo, hi)| (uniform(&mut rng, lo, hi), uniform(&mut rng, BANDWIDTH_RANGE.0, BANDWIDTH_RANGE.1)))
            .collect();
        let embedding = Self::embed_profile(&formants);
        Self { id, formants, embedding }
    }

    /// Profile coordinates scaled to `[-1, 1]`.
    fn profile(formants: &[(f64, f64)]) -> Vec<f64> {
        let scale = |v: f64, (lo, hi): (f64, f64)| 2.0 * (v - lo) / (hi - lo) - 1.0;
        formants
            .iter()
            .zip(FORMANT_RANGES)
            .flat_map(|(&(f, b), range)| [scale(f, range), scale(b, BANDWIDTH_RANGE)])
            .collect()
    }

    /// Random Fourier features of the profile under a fixed projection,
    /// normalised to unit length.
    fn embed_profile(formants: &[(f64, f64)]) -> SpeakerEmbedding<f64> {
        let p = Self::profile(formants);
        let mut rng = ChaCha8Rng::seed_from_u64(EMBEDDING_SEED);
        let values = (0..SPEAKER_DIM)
            .map(|_| {
                let phase = uniform(&mut rng, 0.0, 2.0 * PI);
                let proj: f64 = p
                    .iter()
                    .map(|&x| {
                        let w: f64 = StandardNormal.sample(&mut rng);
                        w * EMBEDDING_BANDWIDTH * x
                    })
                    .sum();
                (proj + phase).cos()
            })
            .collect();
        SpeakerEmbedding::from_unnormalized(values).expect("random features are non-zero")
    }

    pub fn embedding<T: Scalar>(&self) -> SpeakerEmbedding<T> {
        self.embedding.cast()
    }

    fn voice<R: Rng + ?Sized>(&self, samples: usize, sample_rate: u32, rng: &mut R) -> Vec<f64> {
        let sr = sample_rate as f64;
        let mut x = gaussian(samples, rng);
        for &(f, b) in &self.formants {
            Resonator::new(f, b, sr).run(&mut x);
        }
        // syllable-rate envelope
        let rate = uniform(rng, 3.0, 6.0);
        let phase = uniform(rng, 0.0, 2.0 * PI);
        for (i, v) in x.iter_mut().enumerate() {
            let e = 0.5 - 0.5 * (2.0 * PI * rate * i as f64 / sr + phase).cos();
            *v *= e.powf(1.5);
        }
        normalise_rms(&mut x, UTTERANCE_RMS);
        x
    }
}

/// Distinct speakers whose embeddings pairwise have cosine below
/// [`MAX_SPEAKER_COSINE`].
#[derive(Clone, Debug)]
pub struct SpeakerPool {
    speakers: Vec<SynthSpeaker>,
}

impl SpeakerPool {
    /// `count` speakers with ids starting at `first_id`; ids whose embedding
    /// is too close to an already chosen speaker are skipped.
    pub fn new(count: usize, first_id: u64) -> Self {
        let mut speakers: Vec<SynthSpeaker> = Vec::with_capacity(count);
        let mut id = first_id;
        while speakers.len() < count {
            let s = SynthSpeaker::new(id);
            id += 1;
            if speakers.iter().all(|o| o.embedding.cosine(&s.embedding) < MAX_SPEAKER_COSINE) {
                speakers.push(s);
            }
        }
        Self { speakers }
    }

    pub fn len(&self) -> usize {
        self.speakers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speakers.is_empty()
    }

    pub fn get(&self, i: usize) -> &SynthSpeaker {
        &self.speakers[i]
    }

    pub fn speakers(&self) -> &[SynthSpeaker] {
        &self.speakers
    }

    /// Two different speakers.
    pub fn pick_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (&SynthSpeaker, &SynthSpeaker) {
        let a = rng.random_range(0..self.speakers.len());
        let mut b = rng.random_range(0..self.speakers.len() - 1);
        if b >= a {
            b += 1;
        }
        (&self.speakers[a], &self.speakers[b])
    }
}

/// Synthetic utterance of `duration` seconds with RMS [`UTTERANCE_RMS`].
pub fn synth_utterance<R: Rng + ?Sized>(speaker: &SynthSpeaker, duration: f64, sample_rate: u32, rng: &mut R) -> Result<Waveform> {
    if !(0.5..=10.0).contains(&duration) {
        return Err(Error::invalid("synth_utterance", format!("duration {duration} s outside [0.5, 10]")));
    }
    let n = (duration * sample_rate as f64).round() as usize;
    to_waveform(speaker.voice(n, sample_rate, rng), sample_rate)
}

fn rms(x: &[f32]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|&v| v as f64 * v as f64).sum::<f64>() / x.len() as f64).sqrt()
}

/// Gain that puts `interferer` at `snr_db` below `target` (RMS ratio).
pub fn snr_gain(target: &[f32], interferer: &[f32], snr_db: f64) -> Result<f64> {
    let (rt, ri) = (rms(target), rms(interferer));
    if ri == 0.0 {
        return Err(Error::invalid("mix_at_snr", "interferer has zero energy"));
    }
    if rt == 0.0 {
        return Err(Error::invalid("mix_at_snr", "target has zero energy"));
    }
    Ok(rt / (ri * 10f64.powf(snr_db / 20.0)))
}

/// Loop or trim `x` to `len` samples.
pub fn fit_length(x: &Waveform, len: usize) -> Waveform {
    let s = x.samples();
    let samples = if s.is_empty() {
        vec![0.0; len]
    } else {
        (0..len).map(|i| s[i % s.len()]).collect()
    };
    Waveform::new(samples, x.sample_rate()).expect("finite samples")
}

/// Interferer looped or trimmed to the target length and scaled to `snr_db`.
pub fn scale_to_snr(target: &Waveform, interferer: &Waveform, snr_db: f64) -> Result<Waveform> {
    let fitted = fit_length(interferer, target.len());
    let g = snr_gain(target.samples(), fitted.samples(), snr_db)?;
    Waveform::new(
        fitted.samples().iter().map(|&v| (v as f64 * g) as f32).collect(),
        target.sample_rate(),
    )
}

/// `target + g * interferer` with `g` chosen so the mixture has the given SNR.
pub fn mix_at_snr(target: &Waveform, interferer: &Waveform, snr_db: f64) -> Result<Waveform> {
    let scaled = scale_to_snr(target, interferer, snr_db)?;
    Waveform::new(
        target.samples().iter().zip(scaled.samples()).map(|(&a, &b)| a + b).collect(),
        target.sample_rate(),
    )
}

/// Measured SNR of `target` against `interferer` in dB.
pub fn measured_snr_db(target: &Waveform, interferer: &Waveform) -> f64 {
    20.0 * (rms(target.samples()) / rms(interferer.samples())).log10()
}

/// `tanh(a x) / a`, the identity for `a = 0`; output magnitude stays below `1 / a`.
pub fn soft_clip(x: f64, amount: f64) -> f64 {
    if amount <= 0.0 {
        x
    } else {
        (amount * x).tanh() / amount
    }
}

/// Echo of `reference`: tap `i` is delayed by
/// `delay_ms + i * ECHO_TAP_SPACING_MS` and scaled by `taps[i]`; the sum is
/// soft-clipped. Output length equals the reference length.
pub fn make_echo(reference: &Waveform, delay_ms: f64, taps: &[f64], clip: f64) -> Result<Waveform> {
    if !(delay_ms >= 0.0) {
        return Err(Error::invalid("make_echo", format!("negative delay {delay_ms} ms")));
    }
    if let Some(g) = taps.iter().find(|g| !(g.abs() <= 1.0)) {
        return Err(Error::invalid("make_echo", format!("tap gain {g} outside [-1, 1]")));
    }
    let sr = reference.sample_rate() as f64;
    let src = reference.samples();
    let mut out = vec![0.0f64; src.len()];
    for (i, &g) in taps.iter().enumerate() {
        let delay = ((delay_ms + i as f64 * ECHO_TAP_SPACING_MS) * sr / 1000.0).round() as usize;
        for (o, &s) in out.iter_mut().skip(delay).zip(src) {
            *o += g * s as f64;
        }
    }
    to_waveform(out.into_iter().map(|v| soft_clip(v, clip)).collect(), reference.sample_rate())
}

/// Background noise: Gaussian noise through 2-3 random resonators, with a
/// random spectral tilt and a slow level drift. All randomness comes from
/// `rng`, so one call yields one stationary-in-type process.
fn background_noise<R: Rng + ?Sized>(samples: usize, sample_rate: u32, rng: &mut R) -> Vec<f64> {
    let sr = sample_rate as f64;
    let white = gaussian(samples, rng);
    let bands = rng.random_range(2..=3);
    let mut out = vec![0.0; samples];
    for _ in 0..bands {
        let f = (uniform(rng, 150f64.ln(), 6000f64.ln())).exp();
        let bw = uniform(rng, 0.15, 0.8) * f + 80.0;
        let gain = uniform(rng, 0.3, 1.0);
        let mut band = white.clone();
        // centre the resonator's response on `f` with zero DC gain
        let res = Resonator::new(f, bw, sr);
        res.run(&mut band);
        let mut prev = 0.0;
        for (o, b) in out.iter_mut().zip(band) {
            *o += gain * (b - prev);
            prev = b;
        }
    }
    let tilt = uniform(rng, 0.0, 0.9);
    let mut prev = 0.0;
    for v in out.iter_mut() {
        prev = (1.0 - tilt) * *v + tilt * prev;
        *v = prev;
    }
    let rate = uniform(rng, 0.2, 1.5);
    let depth = uniform(rng, 0.0, 0.6);
    let phase = uniform(rng, 0.0, 2.0 * PI);
    for (i, v) in out.iter_mut().enumerate() {
        *v *= 1.0 + depth * (2.0 * PI * rate * i as f64 / sr + phase).sin();
    }
    normalise_rms(&mut out, UTTERANCE_RMS);
    out
}

/// Echo-path parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct EchoParams {
    pub delay_ms: f64,
    pub taps: Vec<f64>,
    pub clip: f64,
}

impl Default for EchoParams {
    fn default() -> Self {
        Self {
            delay_ms: 10.0,
            taps: vec![0.8, 0.4, 0.2],
            clip: 0.0,
        }
    }
}

/// Everything that determines one generated example.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub task: Task,
    pub snr_db: f64,
    /// Noise context length in `[0, 6]` s; 0 means no context.
    pub context_seconds: f64,
    /// Silence between the end of the context and the utterance onset.
    pub gap_seconds: f64,
    pub utterance_seconds: f64,
    pub echo: EchoParams,
    pub sample_rate: u32,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            task: Task::Noise,
            snr_db: 0.0,
            context_seconds: 6.0,
            gap_seconds: 0.0,
            utterance_seconds: 1.0,
            echo: EchoParams::default(),
            sample_rate: 16_000,
            seed: 0,
        }
    }
}

/// Interference source handed to [`make_example`].
#[derive(Clone, Copy, Debug)]
pub enum Interferer<'a> {
    Noise,
    /// Competing talker (speech task) or playback talker (AEC task).
    Speaker(&'a SynthSpeaker),
}

/// One generated scene with its features and training target.
#[derive(Clone, Debug)]
pub struct TrainExample<T> {
    pub spec: SceneSpec,
    pub target_speaker: u64,
    pub interferer_speaker: Option<u64>,
    pub noisy_wav: Waveform,
    pub clean_wav: Waveform,
    /// Scaled interference over the utterance span.
    pub interference_wav: Waveform,
    pub context_wav: Option<Waveform>,
    pub reference_wav: Option<Waveform>,
    pub noisy: FeatureMap<T>,
    pub clean: FeatureMap<T>,
    pub bundle: ContextBundle<T>,
    pub ideal_mask: MaskEstimate<T>,
}

impl<T: Scalar> TrainExample<T> {
    pub fn num_frames(&self) -> usize {
        self.noisy.num_frames()
    }

    /// Write WAVs plus a `<name>.txt` metadata sidecar into `dir`.
    pub fn export(&self, dir: impl AsRef<Path>, name: &str) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.noisy_wav.write_wav(dir.join(format!("{name}_noisy.wav")))?;
        self.clean_wav.write_wav(dir.join(format!("{name}_clean.wav")))?;
        if let Some(c) = &self.context_wav {
            c.write_wav(dir.join(format!("{name}_context.wav")))?;
        }
        if let Some(r) = &self.reference_wav {
            r.write_wav(dir.join(format!("{name}_reference.wav")))?;
        }
        let interferer = self.interferer_speaker.map_or("noise".to_string(), |i| i.to_string());
        let meta = format!(
            "task = {}\nsnr_db = {}\nseed = {}\ntarget_speaker = {}\ninterferer = {}\ncontext_seconds = {}\nutterance_seconds = {}\nframes = {}\n",
            self.spec.task,
            self.spec.snr_db,
            self.spec.seed,
            self.target_speaker,
            interferer,
            self.spec.context_seconds,
            self.spec.utterance_seconds,
            self.num_frames(),
        );
        let path = dir.join(format!("{name}.txt"));
        std::fs::write(&path, meta).map_err(|e| Error::io(path, e))
    }
}

/// Build one example. `extractor` fixes the framing; the noise context gets
/// `context_seconds / hop` frames, its last frame ending where the gap before
/// the utterance begins.
pub fn make_example<T: Scalar>(
    spec: &SceneSpec,
    target: &SynthSpeaker,
    interferer: Interferer<'_>,
    extractor: &FeatureExtractor,
) -> Result<TrainExample<T>> {
    let sr = spec.sample_rate;
    if sr != extractor.config().sample_rate {
        return Err(Error::Config(format!(
            "scene sample rate {sr} != feature sample rate {}",
            extractor.config().sample_rate
        )));
    }
    let interferer_speaker = match (spec.task, interferer) {
        (Task::Noise, Interferer::Noise) => None,
        (Task::Speech | Task::Aec, Interferer::Speaker(s)) if s.id != target.id => Some(s),
        (task, i) => {
            return Err(Error::invalid(
                "make_example",
                format!("task {task} cannot use interferer {i:?} with target speaker {}", target.id),
            ))
        }
    };
    if !(0.0..=6.0).contains(&spec.context_seconds) || !(spec.gap_seconds >= 0.0) {
        return Err(Error::invalid(
            "make_example",
            format!("context {} s / gap {} s out of range", spec.context_seconds, spec.gap_seconds),
        ));
    }
    if !(0.5..=10.0).contains(&spec.utterance_seconds) {
        return Err(Error::invalid("make_example", format!("utterance {} s outside [0.5, 10]", spec.utterance_seconds)));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let secs = |s: f64| (s * sr as f64).round() as usize;
    let hop = extractor.hop_samples();
    let win = extractor.window_samples();
    let context_frames = (spec.context_seconds * sr as f64 / hop as f64).round() as usize;
    let context_len = if context_frames == 0 { 0 } else { win + (context_frames - 1) * hop };
    let gap_len = secs(spec.gap_seconds);
    let utt_len = secs(spec.utterance_seconds);
    let onset = context_len + gap_len;
    let total = onset + utt_len;

    let clean = to_waveform(target.voice(utt_len, sr, &mut rng), sr)?;

    let mut stream_rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, 1));
    let (stream, reference) = match (spec.task, interferer_speaker) {
        (Task::Noise, _) => (background_noise(total, sr, &mut stream_rng), None),
        (Task::Speech, Some(s)) => (s.voice(total, sr, &mut stream_rng), None),
        (Task::Aec, Some(s)) => {
            let playback = to_waveform(s.voice(total, sr, &mut stream_rng), sr)?;
            let echo = make_echo(&playback, spec.echo.delay_ms, &spec.echo.taps, spec.echo.clip)?;
            let echo: Vec<f64> = echo.samples().iter().map(|&v| v as f64).collect();
            (echo, Some(playback))
        }
        _ => unreachable!("validated above"),
    };
    let stream = to_waveform(stream, sr)?;
    let utt_interf = stream.slice(onset, total);
    let gain = snr_gain(clean.samples(), utt_interf.samples(), spec.snr_db)?;
    let scale = |w: &Waveform| to_waveform(w.samples().iter().map(|&v| v as f64 * gain).collect(), sr);
    let interference = scale(&utt_interf)?;
    let noisy = Waveform::new(
        clean.samples().iter().zip(interference.samples()).map(|(&a, &b)| a + b).collect(),
        sr,
    )?;

    let clean_power = extractor.mel_power::<f64>(&clean)?;
    let interf_power = extractor.mel_power::<f64>(&interference)?;
    let ideal = ideal_ratio_mask(&clean_power, &interf_power)?;
    let noisy_fm: FeatureMap<T> = extractor.lfbe(&noisy)?;

    let mut bundle = ContextBundle::empty();
    bundle.dvector = Some(target.embedding());
    let context_wav = if context_len > 0 {
        let ctx = scale(&stream.slice(0, context_len))?;
        let fm: FeatureMap<T> = extractor.lfbe(&ctx)?;
        debug_assert_eq!(fm.num_frames(), context_frames);
        bundle.noise_context = Some(fm);
        Some(ctx)
    } else {
        None
    };
    let reference_wav = match reference {
        Some(playback) => {
            let r = playback.slice(onset, total);
            bundle.playback_ref = Some(extractor.lfbe(&r)?);
            Some(r)
        }
        None => None,
    };

    Ok(TrainExample {
        spec: spec.clone(),
        target_speaker: target.id,
        interferer_speaker: interferer_speaker.map(|s| s.id),
        noisy_wav: noisy,
        clean_wav: clean,
        interference_wav: interference,
        context_wav,
        reference_wav,
        noisy: noisy_fm,
        clean: log_mel(&clean_power).cast(),
        bundle,
        ideal_mask: ideal.cast(),
    })
}

/// Distribution of training scenes.
#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub tasks: Vec<Task>,
    pub noise_snr: (f64, f64),
    pub speech_snr: (f64, f64),
    pub aec_snr: (f64, f64),
    pub context_seconds: f64,
    pub gap_seconds: f64,
    pub utterance_seconds: f64,
    pub echo_delay_ms: (f64, f64),
    pub echo_clip: (f64, f64),
    pub speakers: usize,
    pub first_speaker_id: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            tasks: Task::ALL.to_vec(),
            noise_snr: (-10.0, 30.0),
            speech_snr: (-10.0, 30.0),
            aec_snr: (-20.0, 5.0),
            context_seconds: 6.0,
            gap_seconds: 0.0,
            utterance_seconds: 1.0,
            echo_delay_ms: (0.0, 40.0),
            echo_clip: (0.0, 2.0),
            speakers: 200,
            first_speaker_id: 0,
        }
    }
}

impl DataConfig {
    pub fn snr_range(&self, task: Task) -> (f64, f64) {
        match task {
            Task::Noise => self.noise_snr,
            Task::Speech => self.speech_snr,
            Task::Aec => self.aec_snr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() {
            return Err(Error::Config("at least one task is required".into()));
        }
        if self.speakers < 2 {
            return Err(Error::Config("at least two speakers are required".into()));
        }
        for t in Task::ALL {
            let (lo, hi) = self.snr_range(t);
            if !(lo <= hi) {
                return Err(Error::Config(format!("{t} SNR range {lo}..{hi} is empty")));
            }
        }
        Ok(())
    }
}

/// Draws scenes from a [`DataConfig`] over a fixed speaker pool.
#[derive(Clone, Debug)]
pub struct SceneSampler {
    pub config: DataConfig,
    pub pool: SpeakerPool,
}

impl SceneSampler {
    pub fn new(config: DataConfig) -> Result<Self> {
        config.validate()?;
        let pool = SpeakerPool::new(config.speakers, config.first_speaker_id);
        Ok(Self { config, pool })
    }

    /// Scene parameters and speaker pair for `seed`.
    pub fn scene(&self, seed: u64, task: Option<Task>, snr_db: Option<f64>) -> (SceneSpec, &SynthSpeaker, &SynthSpeaker) {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x5ce_e5));
        let picked = self.config.tasks[rng.random_range(0..self.config.tasks.len())];
        let task = task.unwrap_or(picked);
        let (lo, hi) = self.config.snr_range(task);
        let drawn_snr = uniform(&mut rng, lo, hi);
        let (target, other) = self.pool.pick_pair(&mut rng);
        let delay = uniform(&mut rng, self.config.echo_delay_ms.0, self.config.echo_delay_ms.1);
        let clip = uniform(&mut rng, self.config.echo_clip.0, self.config.echo_clip.1);
        let first_tap = uniform(&mut rng, 0.5, 1.0);
        let decay = uniform(&mut rng, 0.3, 0.7);
        let spec = SceneSpec {
            task,
            snr_db: snr_db.unwrap_or(drawn_snr),
            context_seconds: self.config.context_seconds,
            gap_seconds: self.config.gap_seconds,
            utterance_seconds: self.config.utterance_seconds,
            echo: EchoParams {
                delay_ms: delay,
                taps: vec![first_tap, first_tap * decay, first_tap * decay * decay],
                clip,
            },
            sample_rate: 16_000,
            seed: mix_seed(seed, 0xda7a),
        };
        (spec, target, other)
    }

    /// Generate the example for `seed`, optionally forcing task and SNR.
    pub fn example<T: Scalar>(
        &self,
        seed: u64,
        task: Option<Task>,
        snr_db: Option<f64>,
        extractor: &FeatureExtractor,
    ) -> Result<TrainExample<T>> {
        let (spec, target, other) = self.scene(seed, task, snr_db);
        let interferer = match spec.task {
            Task::Noise => Interferer::Noise,
            _ => Interferer::Speaker(other),
        };
        make_example(&spec, target, interferer, extractor)
    }
}
