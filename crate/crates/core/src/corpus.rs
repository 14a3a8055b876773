//! Corpus data model and ingestion: the language manifest, EMB1 embedding
//! files with their clip-id sidecars, and PCM/float WAV audio.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;

/// Sample rate required by the acoustic feature extractor.
pub const FEATURE_SAMPLE_RATE: u32 = 16_000;

const EMB_MAGIC: [u8; 4] = *b"EMB1";
const EMB_VERSION: u32 = 1;
const EMB_HEADER_LEN: usize = 16;

/// One language and its genealogical labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageRecord {
    pub lang_id: String,
    pub display_name: String,
    pub family: String,
    pub subfamily: String,
    pub group_tags: BTreeSet<String>,
    pub seen_1k: bool,
    pub seen_4k: bool,
}

impl LanguageRecord {
    pub fn has_tag(&self, tag: &str) -> bool {
        self.group_tags.contains(tag)
    }
}

/// Where a clip's data lives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClipSource {
    Audio(PathBuf),
    /// Row index into the language's embedding file.
    Row(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipRef {
    pub clip_id: String,
    pub source: ClipSource,
    pub duration_s: Option<f64>,
}

impl ClipRef {
    pub fn audio_path(&self) -> Option<&Path> {
        match &self.source {
            ClipSource::Audio(p) => Some(p),
            ClipSource::Row(_) => None,
        }
    }
}

/// A validated manifest: languages in file order with their clip lists.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub languages: Vec<LanguageRecord>,
    pub clips: Vec<Vec<ClipRef>>,
    /// Explicit embedding file per language, if the manifest named one.
    pub embeddings: Vec<Option<PathBuf>>,
    /// Directory relative paths are resolved against.
    pub base_dir: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawManifest {
    languages: Vec<RawLanguage>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawLanguage {
    lang_id: String,
    #[serde(default)]
    display_name: Option<String>,
    family: String,
    subfamily: String,
    #[serde(default)]
    group_tags: Vec<String>,
    #[serde(default)]
    seen_1k: bool,
    #[serde(default)]
    seen_4k: bool,
    clips: Vec<RawClip>,
    #[serde(default)]
    embeddings: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawClip {
    clip_id: String,
    #[serde(default)]
    audio: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    duration_s: Option<f64>,
}

impl Manifest {
    pub fn len(&self) -> usize {
        self.languages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.languages.is_empty()
    }

    pub fn lang_ids(&self) -> Vec<String> {
        self.languages.iter().map(|l| l.lang_id.clone()).collect()
    }

    pub fn index_of(&self, lang_id: &str) -> Option<usize> {
        self.languages.iter().position(|l| l.lang_id == lang_id)
    }

    /// Languages carrying `tag` in their group tags.
    pub fn tagged(&self, tag: &str) -> BTreeSet<String> {
        self.languages
            .iter()
            .filter(|l| l.has_tag(tag))
            .map(|l| l.lang_id.clone())
            .collect()
    }

    /// Embedding file for language `idx`: the explicit path, or `<lang_id>.emb`
    /// next to the manifest.
    pub fn embedding_path(&self, idx: usize) -> PathBuf {
        match &self.embeddings[idx] {
            Some(p) => p.clone(),
            None => self
                .base_dir
                .join(format!("{}.emb", self.languages[idx].lang_id)),
        }
    }

    pub fn has_audio(&self) -> bool {
        self.clips
            .iter()
            .flatten()
            .any(|c| c.audio_path().is_some())
    }

    /// Serializes back to the manifest JSON format. Paths are written as stored.
    pub fn to_json(&self) -> String {
        let raw = RawManifest {
            languages: self
                .languages
                .iter()
                .zip(&self.clips)
                .zip(&self.embeddings)
                .map(|((rec, clips), emb)| RawLanguage {
                    lang_id: rec.lang_id.clone(),
                    display_name: Some(rec.display_name.clone()),
                    family: rec.family.clone(),
                    subfamily: rec.subfamily.clone(),
                    group_tags: rec.group_tags.iter().cloned().collect(),
                    seen_1k: rec.seen_1k,
                    seen_4k: rec.seen_4k,
                    clips: clips
                        .iter()
                        .map(|c| RawClip {
                            clip_id: c.clip_id.clone(),
                            audio: c.audio_path().map(|p| p.to_string_lossy().into_owned()),
                            duration_s: c.duration_s,
                        })
                        .collect(),
                    embeddings: emb.as_ref().map(|p| p.to_string_lossy().into_owned()),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&raw).expect("manifest serializes")
    }
}

/// Loads and validates a manifest file. Relative paths inside it are resolved
/// against the manifest's directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_manifest(&text, &base)
}

pub fn parse_manifest(text: &str, base_dir: &Path) -> Result<Manifest> {
    let raw: RawManifest = serde_json::from_str(text).map_err(|e| Error::parse("manifest", e))?;
    let resolve = |p: &str| {
        let p = PathBuf::from(p);
        if p.is_absolute() {
            p
        } else {
            base_dir.join(p)
        }
    };

    let mut seen = HashSet::new();
    let mut languages = Vec::with_capacity(raw.languages.len());
    let mut clips = Vec::with_capacity(raw.languages.len());
    let mut embeddings = Vec::with_capacity(raw.languages.len());
    for lang in raw.languages {
        if lang.lang_id.is_empty() {
            return Err(Error::parse("manifest", "empty lang_id"));
        }
        if !seen.insert(lang.lang_id.clone()) {
            return Err(Error::DuplicateLanguage(lang.lang_id));
        }
        if lang.clips.is_empty() {
            return Err(Error::NoClips(lang.lang_id));
        }
        let mut clip_ids = HashSet::new();
        let mut refs = Vec::with_capacity(lang.clips.len());
        for (row, clip) in lang.clips.into_iter().enumerate() {
            if !clip_ids.insert(clip.clip_id.clone()) {
                return Err(Error::DuplicateClip {
                    lang_id: lang.lang_id,
                    clip_id: clip.clip_id,
                });
            }
            let source = match clip.audio {
                Some(p) => ClipSource::Audio(resolve(&p)),
                None => ClipSource::Row(row),
            };
            refs.push(ClipRef {
                clip_id: clip.clip_id,
                source,
                duration_s: clip.duration_s,
            });
        }
        languages.push(LanguageRecord {
            display_name: lang.display_name.unwrap_or_else(|| lang.lang_id.clone()),
            lang_id: lang.lang_id,
            family: lang.family,
            subfamily: lang.subfamily,
            group_tags: lang.group_tags.into_iter().collect(),
            seen_1k: lang.seen_1k,
            seen_4k: lang.seen_4k,
        });
        clips.push(refs);
        embeddings.push(lang.embeddings.as_deref().map(resolve));
    }
    Ok(Manifest {
        languages,
        clips,
        embeddings,
        base_dir: base_dir.to_path_buf(),
    })
}

/// Row vectors from one EMB1 file: one row per clip (or per language, for
/// exported centroid matrices).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFragment {
    pub dim: usize,
    pub rows: Vec<Vec<f64>>,
}

impl EmbeddingFragment {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::invalid("empty vector list"))?;
        if dim == 0 {
            return Err(Error::invalid("zero-length vectors"));
        }
        for (r, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            if let Some(c) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row: r, col: c });
            }
        }
        Ok(Self { dim, rows })
    }

    pub fn count(&self) -> usize {
        self.rows.len()
    }
}

/// Encodes rows as EMB1 bytes. Values are stored as little-endian f32.
pub fn encode_embeddings(fragment: &EmbeddingFragment) -> Result<Vec<u8>> {
    if fragment.rows.is_empty() {
        return Err(Error::invalid("empty vector list"));
    }
    let dim = u32::try_from(fragment.dim).map_err(|_| Error::invalid("dim exceeds u32"))?;
    let count =
        u32::try_from(fragment.rows.len()).map_err(|_| Error::invalid("count exceeds u32"))?;
    let mut out = Vec::with_capacity(EMB_HEADER_LEN + fragment.rows.len() * fragment.dim * 4);
    out.extend_from_slice(&EMB_MAGIC);
    out.extend_from_slice(&EMB_VERSION.to_le_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    for (r, row) in fragment.rows.iter().enumerate() {
        if row.len() != fragment.dim {
            return Err(Error::DimMismatch {
                expected: fragment.dim,
                found: row.len(),
            });
        }
        for (c, &v) in row.iter().enumerate() {
            let f = v as f32;
            if !f.is_finite() {
                return Err(Error::NonFinite { row: r, col: c });
            }
            out.extend_from_slice(&f.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<EmbeddingFragment> {
    if bytes.len() < EMB_HEADER_LEN {
        return Err(Error::Truncated {
            expected: EMB_HEADER_LEN,
            found: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != EMB_MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = word(4);
    if version != EMB_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let dim = word(8) as usize;
    let count = word(12) as usize;
    if dim == 0 || count == 0 {
        return Err(Error::parse("EMB1", "zero dim or count"));
    }
    let expected = EMB_HEADER_LEN + count * dim * 4;
    if bytes.len() != expected {
        return Err(Error::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    let mut values = bytes[EMB_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()));
    let mut rows = Vec::with_capacity(count);
    for r in 0..count {
        let mut row = Vec::with_capacity(dim);
        for c in 0..dim {
            let v = values.next().unwrap();
            if !v.is_finite() {
                return Err(Error::NonFinite { row: r, col: c });
            }
            row.push(f64::from(v));
        }
        rows.push(row);
    }
    Ok(EmbeddingFragment { dim, rows })
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingFragment> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_embeddings(&bytes)
}

pub fn write_embeddings(fragment: &EmbeddingFragment, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_embeddings(fragment)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Path of the clip-id sidecar for an embedding file: `<file>.json`.
pub fn sidecar_path(emb_path: &Path) -> PathBuf {
    let mut s = emb_path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes the sidecar: a JSON array of row ids in row order.
pub fn write_sidecar(emb_path: &Path, ids: &[String]) -> Result<()> {
    let path = sidecar_path(emb_path);
    let text = serde_json::to_string_pretty(ids).expect("string list serializes");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Reads the sidecar if present.
pub fn read_sidecar(emb_path: &Path) -> Result<Option<Vec<String>>> {
    let path = sidecar_path(emb_path);
    match fs::read_to_string(&path) {
        Ok(text) => serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| Error::parse(path.display().to_string(), e)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(path, e)),
    }
}

/// Per-clip embedding vectors for one language.
#[derive(Debug, Clone, PartialEq)]
pub struct LanguageEmbeddings {
    pub lang_id: String,
    pub clips: Vec<Vec<f64>>,
}

/// Per-language clip vectors sharing one dimension, in manifest order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    dim: usize,
    languages: Vec<LanguageEmbeddings>,
    index: HashMap<String, usize>,
}

impl EmbeddingSet {
    pub fn new(languages: Vec<LanguageEmbeddings>) -> Result<Self> {
        let dim = languages
            .first()
            .and_then(|l| l.clips.first())
            .map(Vec::len)
            .ok_or_else(|| Error::invalid("embedding set needs at least one language"))?;
        if dim == 0 {
            return Err(Error::invalid("zero-length vectors"));
        }
        let mut index = HashMap::new();
        for (i, lang) in languages.iter().enumerate() {
            if index.insert(lang.lang_id.clone(), i).is_some() {
                return Err(Error::DuplicateLanguage(lang.lang_id.clone()));
            }
            if lang.clips.is_empty() {
                return Err(Error::NoClips(lang.lang_id.clone()));
            }
            for (r, clip) in lang.clips.iter().enumerate() {
                if clip.len() != dim {
                    return Err(Error::DimMismatch {
                        expected: dim,
                        found: clip.len(),
                    });
                }
                if let Some(c) = clip.iter().position(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { row: r, col: c });
                }
            }
        }
        Ok(Self {
            dim,
            languages,
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn languages(&self) -> &[LanguageEmbeddings] {
        &self.languages
    }

    pub fn lang_ids(&self) -> Vec<String> {
        self.languages.iter().map(|l| l.lang_id.clone()).collect()
    }

    pub fn get(&self, lang_id: &str) -> Option<&[Vec<f64>]> {
        self.index
            .get(lang_id)
            .map(|&i| self.languages[i].clips.as_slice())
    }
}

/// Reads every language's EMB1 file named by the manifest. Row counts must
/// match the clip lists, and sidecar ids (when present) must match clip order.
pub fn load_embedding_set(manifest: &Manifest, exec: Execution) -> Result<EmbeddingSet> {
    let languages = exec.try_map(manifest.len(), |i| {
        let lang_id = &manifest.languages[i].lang_id;
        let path = manifest.embedding_path(i);
        let fragment = read_embeddings(&path)?;
        let clips = &manifest.clips[i];
        if fragment.count() != clips.len() {
            return Err(Error::RowCountMismatch {
                lang_id: lang_id.clone(),
                clips: clips.len(),
                rows: fragment.count(),
            });
        }
        if let Some(ids) = read_sidecar(&path)? {
            let expected: Vec<&str> = clips.iter().map(|c| c.clip_id.as_str()).collect();
            if ids.iter().map(String::as_str).ne(expected.iter().copied()) {
                return Err(Error::parse(
                    path.display().to_string(),
                    "sidecar clip ids do not match manifest clip order",
                ));
            }
        }
        Ok(LanguageEmbeddings {
            lang_id: lang_id.clone(),
            clips: fragment.rows,
        })
    })?;
    let set = EmbeddingSet::new(languages)?;
    for lang in set.languages() {
        if lang.clips[0].len() != set.dim() {
            return Err(Error::DimMismatch {
                expected: set.dim(),
                found: lang.clips[0].len(),
            });
        }
    }
    Ok(set)
}

/// Mono audio with samples in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn require_rate(&self, expected: u32) -> Result<()> {
        if self.sample_rate == expected {
            Ok(())
        } else {
            Err(Error::SampleRate {
                expected,
                found: self.sample_rate,
            })
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_wav(&bytes)
}

/// Parses a RIFF/WAVE byte stream. Supports mono PCM16 (format 1) and
/// float32 (format 3); PCM16 is scaled by 1/32768.
pub fn parse_wav(bytes: &[u8]) -> Result<AudioClip> {
    let bad = |m: &str| Error::parse("WAV", m);
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(bad("missing RIFF/WAVE header"));
    }
    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let start = pos + 8;
        let end = start
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad("chunk extends past end of file"))?;
        let body = &bytes[start..end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(bad("fmt chunk too short"));
                }
                let u16_at = |i: usize| u16::from_le_bytes(body[i..i + 2].try_into().unwrap());
                let format = u16_at(0);
                let channels = u16_at(2);
                let rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                let bits = u16_at(14);
                fmt = Some((format, channels, rate, bits));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // chunks are word aligned
        pos = end + (size & 1);
    }
    let (format, channels, sample_rate, bits) = fmt.ok_or_else(|| bad("missing fmt chunk"))?;
    let data = data.ok_or_else(|| bad("missing data chunk"))?;
    if channels != 1 {
        return Err(Error::NonMono(channels));
    }
    if sample_rate == 0 {
        return Err(bad("zero sample rate"));
    }
    let samples: Vec<f64> = match (format, bits) {
        (1, 16) => data
            .chunks_exact(2)
            .map(|c| f64::from(i16::from_le_bytes([c[0], c[1]])) / 32768.0)
            .collect(),
        (3, 32) => {
            let s: Vec<f64> = data
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
                .collect();
            if s.iter().any(|v| !v.is_finite()) {
                return Err(bad("non-finite float sample"));
            }
            s
        }
        (format, bits) => return Err(Error::UnsupportedCodec { format, bits }),
    };
    Ok(AudioClip {
        samples,
        sample_rate,
    })
}

/// Encodes mono PCM16. Samples are clamped to [-1, 1) and rounded.
pub fn encode_wav_pcm16(clip: &AudioClip) -> Vec<u8> {
    let data_len = clip.samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in &clip.samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_wav_pcm16(clip: &AudioClip, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_wav_pcm16(clip)).map_err(|e| Error::io(path, e))
}
