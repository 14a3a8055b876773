//! Synthetic corpora with a known genealogy, used by the test suites, the
//! benchmarks and for smoke-testing the CLI.
//!
//! Embeddings follow nested Gaussian offsets: family centre, then subfamily,
//! then language, then per-clip noise. Audio clips are tone mixtures whose
//! pitch and amplitude envelope depend on the family.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::{
    encode_wav_pcm16, write_embeddings, write_sidecar, AudioClip, ClipRef, ClipSource,
    EmbeddingFragment, EmbeddingSet, LanguageEmbeddings, LanguageRecord, Manifest,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyConfig {
    pub families: usize,
    pub subfamilies: usize,
    pub languages: usize,
    pub clips: usize,
    pub dim: usize,
    pub family_sd: f64,
    pub subfamily_sd: f64,
    pub language_sd: f64,
    pub clip_sd: f64,
    /// Family whose languages get `target_tag`.
    pub tagged_family: Option<usize>,
    pub target_tag: String,
    pub seed: u64,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        Self {
            families: 3,
            subfamilies: 3,
            languages: 5,
            clips: 4,
            dim: 32,
            family_sd: 20.0,
            subfamily_sd: 6.0,
            language_sd: 0.5,
            clip_sd: 0.5,
            tagged_family: Some(0),
            target_tag: "POA".into(),
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub records: Vec<LanguageRecord>,
    pub set: EmbeddingSet,
}

impl SyntheticCorpus {
    pub fn lang_ids(&self) -> Vec<String> {
        self.records.iter().map(|r| r.lang_id.clone()).collect()
    }
}

fn offset(rng: &mut ChaCha8Rng, base: &[f64], sd: f64) -> Vec<f64> {
    let normal = Normal::new(0.0, sd).expect("finite sd");
    base.iter().map(|b| b + normal.sample(rng)).collect()
}

/// Families × subfamilies × languages with nested Gaussian offsets.
pub fn hierarchical(cfg: &HierarchyConfig) -> Result<SyntheticCorpus> {
    if cfg.families == 0
        || cfg.subfamilies == 0
        || cfg.languages == 0
        || cfg.clips == 0
        || cfg.dim == 0
    {
        return Err(Error::invalid("synthetic corpus sizes must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let origin = vec![0.0; cfg.dim];
    let mut records = Vec::new();
    let mut langs = Vec::new();
    for f in 0..cfg.families {
        let fam = offset(&mut rng, &origin, cfg.family_sd);
        for s in 0..cfg.subfamilies {
            let sub = offset(&mut rng, &fam, cfg.subfamily_sd);
            for l in 0..cfg.languages {
                let centre = offset(&mut rng, &sub, cfg.language_sd);
                let clips = (0..cfg.clips)
                    .map(|_| offset(&mut rng, &centre, cfg.clip_sd))
                    .collect();
                let lang_id = format!("f{f}s{s}l{l}");
                let mut tags = std::collections::BTreeSet::new();
                if cfg.tagged_family == Some(f) {
                    tags.insert(cfg.target_tag.clone());
                }
                records.push(LanguageRecord {
                    display_name: lang_id.clone(),
                    lang_id: lang_id.clone(),
                    family: format!("family{f}"),
                    subfamily: format!("family{f}.sub{s}"),
                    group_tags: tags,
                    seen_1k: true,
                    seen_4k: true,
                });
                langs.push(LanguageEmbeddings { lang_id, clips });
            }
        }
    }
    Ok(SyntheticCorpus {
        records,
        set: EmbeddingSet::new(langs)?,
    })
}

/// Well-separated families: family centres sit `separation` apart along
/// orthogonal axes; languages and clips scatter around them with `noise`.
pub fn separated_families(
    families: usize,
    per_family: usize,
    clips: usize,
    dim: usize,
    noise: f64,
    separation: f64,
    seed: u64,
) -> Result<SyntheticCorpus> {
    if dim < families {
        return Err(Error::invalid("need at least one dimension per family"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    let mut langs = Vec::new();
    for f in 0..families {
        let mut centre = vec![0.0; dim];
        centre[f] = separation / std::f64::consts::SQRT_2;
        for l in 0..per_family {
            let lang_centre = offset(&mut rng, &centre, noise);
            let lang_id = format!("fam{f}_lang{l}");
            langs.push(LanguageEmbeddings {
                lang_id: lang_id.clone(),
                clips: (0..clips)
                    .map(|_| offset(&mut rng, &lang_centre, noise))
                    .collect(),
            });
            records.push(LanguageRecord {
                display_name: lang_id.clone(),
                lang_id,
                family: format!("fam{f}"),
                subfamily: format!("fam{f}"),
                group_tags: Default::default(),
                seen_1k: true,
                seen_4k: true,
            });
        }
    }
    Ok(SyntheticCorpus {
        records,
        set: EmbeddingSet::new(langs)?,
    })
}

/// A short 16 kHz clip: two tones plus noise under an amplitude envelope.
/// `depth` in [0, 1) controls how strongly the envelope modulates loudness.
pub fn tone_clip(base_hz: f64, depth: f64, seconds: f64, rng: &mut impl Rng) -> AudioClip {
    let sr = 16_000.0;
    let n = (seconds * sr) as usize;
    let noise = Normal::new(0.0, 0.02).expect("finite sd");
    let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let env = 1.0 - depth * (0.5 + 0.5 * (std::f64::consts::TAU * 3.0 * t + phase).sin());
            let tone = 0.5 * (std::f64::consts::TAU * base_hz * t).sin()
                + 0.2 * (std::f64::consts::TAU * 2.7 * base_hz * t + phase).sin();
            (0.6 * env * tone + noise.sample(rng)).clamp(-1.0, 1.0)
        })
        .collect();
    AudioClip::new(samples, 16_000)
}

/// Writes a corpus to `dir`: one EMB1 file and sidecar per language, a
/// `manifest.json`, and optionally a WAV per clip. Returns the manifest path.
pub fn write_corpus(
    dir: &Path,
    corpus: &SyntheticCorpus,
    audio: bool,
    seed: u64,
) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut clips_out = Vec::new();
    for (rec, lang) in corpus.records.iter().zip(corpus.set.languages()) {
        let ids: Vec<String> = (0..lang.clips.len())
            .map(|c| format!("{}_{c:03}", rec.lang_id))
            .collect();
        let emb_path = dir.join(format!("{}.emb", rec.lang_id));
        write_embeddings(&EmbeddingFragment::new(lang.clips.clone())?, &emb_path)?;
        write_sidecar(&emb_path, &ids)?;
        // pitch by family index, deeper modulation for tagged languages
        let fam_idx: usize = rec
            .family
            .trim_start_matches(|c: char| !c.is_ascii_digit())
            .parse()
            .unwrap_or(0);
        let depth = if rec.group_tags.is_empty() { 0.2 } else { 0.8 };
        let mut refs = Vec::new();
        for (c, id) in ids.iter().enumerate() {
            let source = if audio {
                let name = format!("{id}.wav");
                let base = 140.0 + 60.0 * fam_idx as f64 + 5.0 * c as f64;
                let clip = tone_clip(base, depth, 0.5, &mut rng);
                let p = dir.join(&name);
                fs::write(&p, encode_wav_pcm16(&clip)).map_err(|e| Error::io(&p, e))?;
                ClipSource::Audio(PathBuf::from(name))
            } else {
                ClipSource::Row(c)
            };
            refs.push(ClipRef {
                clip_id: id.clone(),
                source,
                duration_s: None,
            });
        }
        clips_out.push(refs);
    }
    let manifest = Manifest {
        languages: corpus.records.clone(),
        embeddings: vec![None; corpus.records.len()],
        clips: clips_out,
        base_dir: dir.to_path_buf(),
    };
    let path = dir.join("manifest.json");
    fs::write(&path, manifest.to_json()).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
