//! Raw-audio features: RMS normalization, framing, MFCCs, spectral
//! descriptors, energy dynamic range, and the 30 language-level features.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::corpus::{read_wav, AudioClip, Manifest, FEATURE_SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::exec::Execution;

pub const N_MEL_FILTERS: usize = 26;
pub const N_MFCC: usize = 12;
pub const FEATURE_COUNT: usize = 30;
pub const DEFAULT_TARGET_RMS: f64 = 0.1;
const SILENCE_RMS: f64 = 1e-8;
const LOG_FLOOR: f64 = 1e-10;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "energy_dynamic_range",
    "mfcc_1_mean",
    "mfcc_2_mean",
    "mfcc_3_mean",
    "mfcc_4_mean",
    "mfcc_5_mean",
    "mfcc_6_mean",
    "mfcc_7_mean",
    "mfcc_8_mean",
    "mfcc_9_mean",
    "mfcc_10_mean",
    "mfcc_11_mean",
    "mfcc_12_mean",
    "mfcc_1_std",
    "mfcc_2_std",
    "mfcc_3_std",
    "mfcc_4_std",
    "mfcc_5_std",
    "mfcc_6_std",
    "mfcc_7_std",
    "mfcc_8_std",
    "mfcc_9_std",
    "mfcc_10_std",
    "mfcc_11_std",
    "mfcc_12_std",
    "spectral_centroid_mean",
    "spectral_centroid_std",
    "spectral_bandwidth_mean",
    "spectral_bandwidth_std",
    "zcr_mean",
];

/// Human-readable row names used in report tables.
pub const FEATURE_DISPLAY_NAMES: [&str; FEATURE_COUNT] = [
    "Energy dynamic range",
    "MFCC 1 mean",
    "MFCC 2 mean",
    "MFCC 3 mean",
    "MFCC 4 mean",
    "MFCC 5 mean",
    "MFCC 6 mean",
    "MFCC 7 mean",
    "MFCC 8 mean",
    "MFCC 9 mean",
    "MFCC 10 mean",
    "MFCC 11 mean",
    "MFCC 12 mean",
    "MFCC 1 std",
    "MFCC 2 std",
    "MFCC 3 std",
    "MFCC 4 std",
    "MFCC 5 std",
    "MFCC 6 std",
    "MFCC 7 std",
    "MFCC 8 std",
    "MFCC 9 std",
    "MFCC 10 std",
    "MFCC 11 std",
    "MFCC 12 std",
    "Spectral centroid mean",
    "Spectral centroid std",
    "Spectral bandwidth mean",
    "Spectral bandwidth std",
    "ZCR mean",
];

pub fn feature_index(name: &str) -> Option<usize> {
    FEATURE_NAMES.iter().position(|n| *n == name)
}

/// Analysis framing. Defaults: 25 ms window, 10 ms hop, 512-point FFT at 16 kHz.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameSpec {
    pub window_len: usize,
    pub hop: usize,
    pub fft_size: usize,
}

impl Default for FrameSpec {
    fn default() -> Self {
        Self {
            window_len: 400,
            hop: 160,
            fft_size: 512,
        }
    }
}

impl FrameSpec {
    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 || self.hop > self.window_len || self.window_len > self.fft_size {
            return Err(Error::invalid(format!(
                "frame spec needs 0 < hop ≤ window ≤ fft size, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }
}

/// Scales the clip to `target_rms`.
pub fn rms_normalize(clip: &AudioClip, target_rms: f64) -> Result<AudioClip> {
    let r = rms(&clip.samples);
    if r.is_nan() || r <= SILENCE_RMS {
        return Err(Error::SilentClip);
    }
    let g = target_rms / r;
    Ok(AudioClip {
        samples: clip.samples.iter().map(|s| s * g).collect(),
        sample_rate: clip.sample_rate,
    })
}

pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// Periodic Hann window of length `n`.
pub fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Overlapping frames of the raw (unwindowed) signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Frames {
    spec: FrameSpec,
    raw: Vec<f64>,
}

impl Frames {
    pub fn spec(&self) -> FrameSpec {
        self.spec
    }

    pub fn len(&self) -> usize {
        self.raw.len() / self.spec.window_len
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    /// Samples of frame `i` before windowing.
    pub fn raw(&self, i: usize) -> &[f64] {
        let w = self.spec.window_len;
        &self.raw[i * w..(i + 1) * w]
    }

    /// Frame `i` with the Hann window applied and zero-padded to the FFT size.
    pub fn windowed(&self, i: usize, window: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.spec.fft_size];
        for ((o, s), w) in out.iter_mut().zip(self.raw(i)).zip(window) {
            *o = s * w;
        }
        out
    }
}

/// Splits a signal into `1 + ⌊(len − window)/hop⌋` frames.
pub fn frame_signal(samples: &[f64], spec: &FrameSpec) -> Result<Frames> {
    spec.validate()?;
    if samples.len() < spec.window_len {
        return Err(Error::TooShort {
            len: samples.len(),
            window: spec.window_len,
        });
    }
    let n = 1 + (samples.len() - spec.window_len) / spec.hop;
    let mut raw = Vec::with_capacity(n * spec.window_len);
    for f in 0..n {
        raw.extend_from_slice(&samples[f * spec.hop..f * spec.hop + spec.window_len]);
    }
    Ok(Frames { spec: *spec, raw })
}

fn plan(fft_size: usize) -> Arc<dyn Fft<f64>> {
    FftPlanner::new().plan_fft_forward(fft_size)
}

/// Magnitude spectrum (bins `0..=fft/2`) of every windowed frame.
pub fn magnitude_spectra(frames: &Frames) -> Vec<Vec<f64>> {
    let spec = frames.spec;
    let fft = plan(spec.fft_size);
    let window = hann_periodic(spec.window_len);
    let mut buf = vec![Complex::new(0.0, 0.0); spec.fft_size];
    (0..frames.len())
        .map(|i| {
            for (b, v) in buf.iter_mut().zip(frames.windowed(i, &window)) {
                *b = Complex::new(v, 0.0);
            }
            fft.process(&mut buf);
            buf[..spec.n_bins()].iter().map(|c| c.norm()).collect()
        })
        .collect()
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// One triangular mel filter: corner frequencies and per-bin weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilter {
    pub lower_hz: f64,
    pub center_hz: f64,
    pub upper_hz: f64,
    pub weights: Vec<f64>,
}

/// `n_filters` triangles equally spaced on the mel scale over
/// `[0, sample_rate/2]`, each scaled so its weights sum to one.
pub fn mel_filterbank(n_filters: usize, fft_size: usize, sample_rate: u32) -> Vec<MelFilter> {
    let n_bins = fft_size / 2 + 1;
    let top = hz_to_mel(f64::from(sample_rate) / 2.0);
    let edges: Vec<f64> = (0..n_filters + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_filters + 1) as f64))
        .collect();
    let bin_hz = f64::from(sample_rate) / fft_size as f64;
    (0..n_filters)
        .map(|m| {
            let (lo, c, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let mut weights: Vec<f64> = (0..n_bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= c {
                        (f - lo) / (c - lo)
                    } else {
                        (hi - f) / (hi - c)
                    }
                })
                .collect();
            let total: f64 = weights.iter().sum();
            if total > 0.0 {
                weights.iter_mut().for_each(|w| *w /= total);
            }
            MelFilter {
                lower_hz: lo,
                center_hz: c,
                upper_hz: hi,
                weights,
            }
        })
        .collect()
}

/// Orthonormal DCT-II.
pub fn dct_ii(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    (0..x.len())
        .map(|k| {
            let s: f64 = x
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    v * (std::f64::consts::PI * k as f64 * (2.0 * i as f64 + 1.0) / (2.0 * n)).cos()
                })
                .sum();
            let scale = if k == 0 {
                (1.0 / n).sqrt()
            } else {
                (2.0 / n).sqrt()
            };
            s * scale
        })
        .collect()
}

/// Log mel energies (floored) for one magnitude spectrum.
pub fn log_mel(magnitude: &[f64], bank: &[MelFilter]) -> Vec<f64> {
    bank.iter()
        .map(|f| {
            let e: f64 = f
                .weights
                .iter()
                .zip(magnitude)
                .map(|(w, m)| w * m * m)
                .sum();
            e.max(LOG_FLOOR).ln()
        })
        .collect()
}

fn mfcc_from_spectra(
    spectra: &[Vec<f64>],
    spec: &FrameSpec,
    sample_rate: u32,
) -> Vec<[f64; N_MFCC]> {
    let bank = mel_filterbank(N_MEL_FILTERS, spec.fft_size, sample_rate);
    spectra
        .iter()
        .map(|m| {
            let c = dct_ii(&log_mel(m, &bank));
            let mut out = [0.0; N_MFCC];
            out.copy_from_slice(&c[1..=N_MFCC]);
            out
        })
        .collect()
}

/// MFCCs 1..=12 per frame (c0 dropped).
pub fn mel_mfcc(frames: &Frames, sample_rate: u32) -> Result<Vec<[f64; N_MFCC]>> {
    if sample_rate != FEATURE_SAMPLE_RATE {
        return Err(Error::SampleRate {
            expected: FEATURE_SAMPLE_RATE,
            found: sample_rate,
        });
    }
    Ok(mfcc_from_spectra(
        &magnitude_spectra(frames),
        &frames.spec,
        sample_rate,
    ))
}

/// Per-frame spectral and temporal descriptors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SpectralSeries {
    pub centroid: Vec<f64>,
    pub bandwidth: Vec<f64>,
    pub zcr: Vec<f64>,
    pub energy_db: Vec<f64>,
}

/// Fraction of adjacent sample pairs whose signs differ (zero counts as positive).
pub fn zero_crossing_rate(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let changes = x
        .windows(2)
        .filter(|w| (w[0] >= 0.0) != (w[1] >= 0.0))
        .count();
    changes as f64 / (x.len() - 1) as f64
}

fn spectral_from(frames: &Frames, spectra: &[Vec<f64>], sample_rate: u32) -> SpectralSeries {
    let bin_hz = f64::from(sample_rate) / frames.spec.fft_size as f64;
    let mut out = SpectralSeries::default();
    for (i, mag) in spectra.iter().enumerate() {
        let total: f64 = mag.iter().sum();
        let (centroid, bandwidth) = if total > 0.0 {
            let c = mag
                .iter()
                .enumerate()
                .map(|(k, m)| k as f64 * bin_hz * m)
                .sum::<f64>()
                / total;
            let var = mag
                .iter()
                .enumerate()
                .map(|(k, m)| {
                    let d = k as f64 * bin_hz - c;
                    d * d * m
                })
                .sum::<f64>()
                / total;
            (c, var.sqrt())
        } else {
            (0.0, 0.0)
        };
        let raw = frames.raw(i);
        out.centroid.push(centroid);
        out.bandwidth.push(bandwidth);
        out.zcr.push(zero_crossing_rate(raw));
        out.energy_db.push(20.0 * (rms(raw) + 1e-10).log10());
    }
    out
}

/// Spectral centroid/bandwidth (magnitude weighted), ZCR on the unwindowed
/// frame, and frame energy in dB.
pub fn frame_spectral(frames: &Frames, sample_rate: u32) -> SpectralSeries {
    spectral_from(frames, &magnitude_spectra(frames), sample_rate)
}

/// Linear-interpolation percentile of an ascending slice.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// p95 − p5 of per-frame energy in dB.
pub fn energy_dynamic_range(energy_db: &[f64]) -> Result<f64> {
    if energy_db.len() < 2 {
        return Err(Error::invalid("dynamic range needs at least two frames"));
    }
    let mut s = energy_db.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(percentile_sorted(&s, 95.0) - percentile_sorted(&s, 5.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipFeatures {
    pub mfcc: Vec<[f64; N_MFCC]>,
    pub spectral: SpectralSeries,
    pub energy_dynamic_range: f64,
}

fn mean_std(x: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = x.clone().count() as f64;
    let m = x.clone().sum::<f64>() / n;
    let v = x.map(|v| (v - m) * (v - m)).sum::<f64>() / n;
    (m, v.sqrt())
}

impl ClipFeatures {
    /// Clip-level statistics in [`FEATURE_NAMES`] order (population std).
    pub fn summary(&self) -> [f64; FEATURE_COUNT] {
        let mut out = [0.0; FEATURE_COUNT];
        out[0] = self.energy_dynamic_range;
        for k in 0..N_MFCC {
            let (m, s) = mean_std(self.mfcc.iter().map(|f| f[k]));
            out[1 + k] = m;
            out[1 + N_MFCC + k] = s;
        }
        let base = 1 + 2 * N_MFCC;
        let (m, s) = mean_std(self.spectral.centroid.iter().copied());
        out[base] = m;
        out[base + 1] = s;
        let (m, s) = mean_std(self.spectral.bandwidth.iter().copied());
        out[base + 2] = m;
        out[base + 3] = s;
        out[base + 4] = mean_std(self.spectral.zcr.iter().copied()).0;
        out
    }
}

/// RMS-normalizes a 16 kHz clip and extracts its per-frame descriptors.
pub fn extract_clip_features(
    clip: &AudioClip,
    spec: &FrameSpec,
    target_rms: f64,
) -> Result<ClipFeatures> {
    clip.require_rate(FEATURE_SAMPLE_RATE)?;
    let clip = rms_normalize(clip, target_rms)?;
    let frames = frame_signal(&clip.samples, spec)?;
    let spectra = magnitude_spectra(&frames);
    let mfcc = mfcc_from_spectra(&spectra, spec, clip.sample_rate);
    let spectral = spectral_from(&frames, &spectra, clip.sample_rate);
    let energy_dynamic_range = energy_dynamic_range(&spectral.energy_db)?;
    Ok(ClipFeatures {
        mfcc,
        spectral,
        energy_dynamic_range,
    })
}

/// The 30 language-level features, in [`FEATURE_NAMES`] order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LanguageFeatureVector(pub [f64; FEATURE_COUNT]);

impl LanguageFeatureVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        feature_index(name).map(|i| self.0[i])
    }

    pub fn values(&self) -> &[f64; FEATURE_COUNT] {
        &self.0
    }
}

/// Unweighted mean over clips of each clip-level statistic.
pub fn language_features(clips: &[ClipFeatures]) -> Result<LanguageFeatureVector> {
    if clips.is_empty() {
        return Err(Error::invalid("no non-silent clips"));
    }
    let mut acc = [0.0; FEATURE_COUNT];
    for c in clips {
        for (a, v) in acc.iter_mut().zip(c.summary()) {
            *a += v;
        }
    }
    let n = clips.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    if acc.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite language feature"));
    }
    Ok(LanguageFeatureVector(acc))
}

/// Language features from audio clips; silent clips are skipped with a warning.
pub fn language_features_from_audio(
    clips: &[AudioClip],
    spec: &FrameSpec,
    target_rms: f64,
) -> Result<(LanguageFeatureVector, usize)> {
    let mut kept = Vec::with_capacity(clips.len());
    let mut skipped = 0;
    for clip in clips {
        match extract_clip_features(clip, spec, target_rms) {
            Ok(f) => kept.push(f),
            Err(Error::SilentClip) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if kept.is_empty() {
        return Err(Error::Degenerate("all clips are silent".into()));
    }
    Ok((language_features(&kept)?, skipped))
}

/// One feature vector per language.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    lang_ids: Vec<String>,
    rows: Vec<LanguageFeatureVector>,
}

impl FeatureTable {
    pub fn new(lang_ids: Vec<String>, rows: Vec<LanguageFeatureVector>) -> Result<Self> {
        if lang_ids.len() != rows.len() {
            return Err(Error::invalid("one feature row per language required"));
        }
        Ok(Self { lang_ids, rows })
    }

    pub fn lang_ids(&self) -> &[String] {
        &self.lang_ids
    }

    pub fn row(&self, i: usize) -> &[f64; FEATURE_COUNT] {
        &self.rows[i].0
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows reordered to `order`; every language must be present.
    pub fn aligned_rows(&self, order: &[String]) -> Result<Vec<[f64; FEATURE_COUNT]>> {
        let pos: HashMap<&str, usize> = self
            .lang_ids
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();
        order
            .iter()
            .map(|id| {
                pos.get(id.as_str())
                    .map(|&i| self.rows[i].0)
                    .ok_or_else(|| Error::MissingLanguage(id.clone()))
            })
            .collect()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("lang_id");
        for n in FEATURE_NAMES {
            out.push('\t');
            out.push_str(n);
        }
        out.push('\n');
        for (id, row) in self.lang_ids.iter().zip(&self.rows) {
            out.push_str(id);
            for v in row.0 {
                write!(out, "\t{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Parses the TSV produced by [`FeatureTable::to_tsv`]; `#` lines are comments.
    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .filter(|l| !l.starts_with('#') && !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::parse("feature table", "missing header"))?;
        let cols: Vec<&str> = header.split('\t').collect();
        if cols.len() != FEATURE_COUNT + 1 || cols[0] != "lang_id" || cols[1..] != FEATURE_NAMES {
            return Err(Error::parse("feature table", "unexpected header"));
        }
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        for (ln, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != FEATURE_COUNT + 1 {
                return Err(Error::parse(
                    "feature table",
                    format!("row {ln} has wrong width"),
                ));
            }
            let mut v = [0.0; FEATURE_COUNT];
            for (slot, f) in v.iter_mut().zip(&fields[1..]) {
                *slot = f
                    .parse()
                    .map_err(|e| Error::parse("feature table", format!("row {ln}: {e}")))?;
            }
            ids.push(fields[0].to_string());
            rows.push(LanguageFeatureVector(v));
        }
        Self::new(ids, rows)
    }
}

/// Reads every clip's audio named in the manifest and builds the feature table.
pub fn extract_feature_table(
    manifest: &Manifest,
    spec: &FrameSpec,
    target_rms: f64,
    exec: Execution,
) -> Result<FeatureTable> {
    let rows = exec.try_map(manifest.len(), |i| {
        let lang = &manifest.languages[i];
        let clips = manifest.clips[i]
            .iter()
            .map(|c| {
                let path = c.audio_path().ok_or_else(|| {
                    Error::invalid(format!(
                        "clip `{}` of `{}` has no audio path",
                        c.clip_id, lang.lang_id
                    ))
                })?;
                read_wav(path)
            })
            .collect::<Result<Vec<_>>>()?;
        let (v, skipped) =
            language_features_from_audio(&clips, spec, target_rms).map_err(|e| match e {
                Error::Degenerate(_) => {
                    Error::Degenerate(format!("all clips of `{}` are silent", lang.lang_id))
                }
                e => e,
            })?;
        if skipped > 0 {
            log::warn!("{}: skipped {skipped} silent clip(s)", lang.lang_id);
        }
        Ok(v)
    })?;
    FeatureTable::new(manifest.lang_ids(), rows)
}
