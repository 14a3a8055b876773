//! File-level bootstrap over clips and clade support for a reference tree.
//!
//! Replicate `b` (1-based) draws from a ChaCha8 generator seeded with
//! `splitmix64(base_seed ^ b)`. Each replicate resamples every language's
//! clips with replacement (languages visited in reference leaf order),
//! recomputes centroids, optionally restandardizes, rebuilds the Ward tree and
//! records which reference clades reappear. Indicator counts are integers, so
//! the final table does not depend on how replicates are scheduled.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::centroid::{self, CentroidMatrix};
use crate::cluster::{self, Clade, Dendrogram};
use crate::corpus::EmbeddingSet;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::newick::NewickNode;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub base_seed: u64,
    pub restandardize: bool,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replicates: 1000,
            base_seed: 0,
            restandardize: true,
        }
    }
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn replicate_seed(base_seed: u64, replicate: u64) -> u64 {
    splitmix64(base_seed ^ replicate)
}

/// `n` indices drawn uniformly with replacement from `0..n`.
pub fn resample_indices<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Draws `clips.len()` clips with replacement using a generator seeded by `seed`.
pub fn resample_language(clips: &[Vec<f64>], seed: u64) -> Result<Vec<&[f64]>> {
    if clips.is_empty() {
        return Err(Error::invalid("cannot resample an empty clip list"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(resample_indices(clips.len(), &mut rng)
        .into_iter()
        .map(|i| clips[i].as_slice())
        .collect())
}

/// Bootstrap support p̂(S) for each non-trivial clade of the reference tree.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportTable {
    replicates: usize,
    counts: BTreeMap<Clade, u64>,
}

impl SupportTable {
    pub fn from_counts(replicates: usize, counts: BTreeMap<Clade, u64>) -> Result<Self> {
        if replicates == 0 {
            return Err(Error::invalid("support table needs at least one replicate"));
        }
        if counts.values().any(|&c| c as usize > replicates) {
            return Err(Error::invalid("clade count exceeds replicate count"));
        }
        Ok(Self { replicates, counts })
    }

    pub fn replicates(&self) -> usize {
        self.replicates
    }

    pub fn count(&self, clade: &Clade) -> Option<u64> {
        self.counts.get(clade).copied()
    }

    pub fn get(&self, clade: &Clade) -> Option<f64> {
        self.count(clade).map(|c| c as f64 / self.replicates as f64)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn supports(&self) -> BTreeMap<Clade, f64> {
        self.counts
            .iter()
            .map(|(k, &c)| (k.clone(), c as f64 / self.replicates as f64))
            .collect()
    }

    /// TSV with columns `clade_members`, `support`, `size`; rows in reference
    /// merge order.
    pub fn to_tsv(&self, reference: &Dendrogram) -> String {
        let mut out = String::from("clade_members\tsupport\tsize\n");
        for clade in reference.clades() {
            if let Some(s) = self.get(&clade) {
                writeln!(
                    out,
                    "{}\t{}\t{}",
                    clade.labels(reference.leaf_labels()).join(","),
                    s,
                    clade.len()
                )
                .unwrap();
            }
        }
        out
    }
}

fn replicate_tree(
    clips: &[&[Vec<f64>]],
    labels: &[String],
    dim: usize,
    seed: u64,
    restandardize: bool,
) -> Result<Dendrogram> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = clips
        .iter()
        .map(|lang| {
            let idx = resample_indices(lang.len(), &mut rng);
            centroid::mean_rows(idx.iter().map(|&i| lang[i].as_slice()), dim)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut matrix = CentroidMatrix::from_rows(labels.to_vec(), rows)?;
    if restandardize {
        matrix = centroid::standardize(&matrix)?;
    }
    cluster::ward(&matrix)
}

/// Estimates clade support for `reference` by resampling clips within each
/// language. The embedding set must contain every reference leaf.
pub fn bootstrap_support(
    set: &EmbeddingSet,
    reference: &Dendrogram,
    config: &BootstrapConfig,
    exec: Execution,
) -> Result<SupportTable> {
    if config.replicates == 0 {
        return Err(Error::invalid("replicates must be at least 1"));
    }
    let labels = reference.leaf_labels();
    let clips: Vec<&[Vec<f64>]> = labels
        .iter()
        .map(|id| {
            set.get(id)
                .ok_or_else(|| Error::MissingLanguage(id.clone()))
        })
        .collect::<Result<_>>()?;
    let ref_clades = reference.clades();
    let dim = set.dim();

    let hits = exec.try_map(config.replicates, |b| {
        let seed = replicate_seed(config.base_seed, b as u64 + 1);
        let tree = replicate_tree(&clips, labels, dim, seed, config.restandardize)?;
        let found: HashSet<Clade> = tree.clades().into_iter().collect();
        Ok(ref_clades
            .iter()
            .map(|c| found.contains(c))
            .collect::<Vec<bool>>())
    })?;

    let mut counts: BTreeMap<Clade, u64> = ref_clades.iter().map(|c| (c.clone(), 0)).collect();
    for row in &hits {
        for (clade, &hit) in ref_clades.iter().zip(row) {
            if hit {
                *counts.get_mut(clade).unwrap() += 1;
            }
        }
    }
    SupportTable::from_counts(config.replicates, counts)
}

#[derive(Debug, Clone)]
pub struct ConsensusReport {
    /// Reference tree with support percentages on internal nodes.
    pub tree: NewickNode,
    pub threshold: f64,
    /// Clades with support strictly above the threshold.
    pub above_threshold: usize,
    pub total: usize,
    /// Every reference clade with its support, highest first (ties keep merge order).
    pub ranked: Vec<(Clade, f64)>,
}

/// Annotates the reference tree and summarizes clades by support.
pub fn consensus_report(
    reference: &Dendrogram,
    supports: &SupportTable,
    threshold: f64,
) -> Result<ConsensusReport> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::invalid(format!(
            "threshold {threshold} outside [0, 1]"
        )));
    }
    let map = supports.supports();
    let tree = reference.to_tree(Some(&map))?;
    let mut ranked: Vec<(Clade, f64)> = reference
        .clades()
        .into_iter()
        .filter_map(|c| map.get(&c).map(|&s| (c, s)))
        .collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    let above_threshold = ranked.iter().filter(|(_, s)| *s > threshold).count();
    Ok(ConsensusReport {
        tree,
        threshold,
        above_threshold,
        total: ranked.len(),
        ranked,
    })
}
