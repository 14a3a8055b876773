//! External clustering indices (ARI, NMI), K sweeps over a dendrogram, and
//! best-cluster precision/recall against a target group.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use crate::cluster::Dendrogram;
use crate::corpus::LanguageRecord;
use crate::error::{Error, Result};

/// A flat clustering of labelled items with dense cluster indices `0..k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    labels: Vec<String>,
    assignment: Vec<usize>,
    k: usize,
}

impl Partition {
    /// Relabels `assignment` densely in order of first appearance.
    pub fn new(labels: Vec<String>, assignment: &[usize]) -> Result<Self> {
        if labels.len() != assignment.len() {
            return Err(Error::invalid("one cluster assignment per label required"));
        }
        let mut seen = BTreeSet::new();
        if !labels.iter().all(|l| seen.insert(l)) {
            return Err(Error::invalid("partition labels must be unique"));
        }
        let mut dense = HashMap::new();
        let assignment = assignment
            .iter()
            .map(|a| {
                let next = dense.len();
                *dense.entry(*a).or_insert(next)
            })
            .collect();
        Ok(Self {
            labels,
            assignment,
            k: dense.len(),
        })
    }

    /// Partition from named classes (e.g. subfamily names).
    pub fn from_classes<S: AsRef<str>>(labels: Vec<String>, classes: &[S]) -> Result<Self> {
        let mut ids: HashMap<&str, usize> = HashMap::new();
        let raw: Vec<usize> = classes
            .iter()
            .map(|c| {
                let next = ids.len();
                *ids.entry(c.as_ref()).or_insert(next)
            })
            .collect();
        Self::new(labels, &raw)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Members of cluster `c`.
    pub fn cluster(&self, c: usize) -> Vec<&str> {
        self.labels
            .iter()
            .zip(&self.assignment)
            .filter(|(_, &a)| a == c)
            .map(|(l, _)| l.as_str())
            .collect()
    }

    /// `other`'s assignments reordered to match this partition's labels.
    fn aligned(&self, other: &Partition) -> Result<Vec<usize>> {
        if self.labels.len() != other.labels.len() {
            return Err(Error::invalid("partitions cover different language sets"));
        }
        if self.labels == other.labels {
            return Ok(other.assignment.clone());
        }
        let pos: HashMap<&str, usize> = other
            .labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();
        self.labels
            .iter()
            .map(|l| {
                pos.get(l.as_str())
                    .map(|&i| other.assignment[i])
                    .ok_or_else(|| Error::invalid("partitions cover different language sets"))
            })
            .collect()
    }
}

/// Which genealogical level supplies the ground-truth classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TruthLevel {
    #[default]
    Subfamily,
    Family,
}

/// Ground-truth partition over `order` taken from the records' labels.
pub fn truth_partition(
    records: &[LanguageRecord],
    order: &[String],
    level: TruthLevel,
) -> Result<Partition> {
    let by_id: HashMap<&str, &LanguageRecord> =
        records.iter().map(|r| (r.lang_id.as_str(), r)).collect();
    let classes = order
        .iter()
        .map(|id| {
            let r = by_id
                .get(id.as_str())
                .ok_or_else(|| Error::MissingLanguage(id.clone()))?;
            let class = match level {
                TruthLevel::Subfamily => &r.subfamily,
                TruthLevel::Family => &r.family,
            };
            if class.is_empty() {
                return Err(Error::invalid(format!(
                    "language `{id}` has no {level:?} label"
                )));
            }
            Ok(class.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    Partition::from_classes(order.to_vec(), &classes)
}

struct Contingency {
    n: usize,
    table: Vec<Vec<u64>>,
    rows: Vec<u64>,
    cols: Vec<u64>,
}

fn contingency(truth: &Partition, pred: &Partition) -> Result<Contingency> {
    let p = truth.aligned(pred)?;
    let mut table = vec![vec![0u64; pred.k]; truth.k];
    for (&a, &b) in truth.assignment.iter().zip(&p) {
        table[a][b] += 1;
    }
    let rows = table.iter().map(|r| r.iter().sum()).collect();
    let cols = (0..pred.k)
        .map(|j| table.iter().map(|r| r[j]).sum())
        .collect();
    Ok(Contingency {
        n: truth.len(),
        table,
        rows,
        cols,
    })
}

fn comb2(x: u64) -> f64 {
    (x as f64) * (x as f64 - 1.0) / 2.0
}

/// Adjusted Rand index (Hubert–Arabie). Returns 1.0 when the expected and
/// maximum indices coincide, which only happens for identical trivial
/// partitions.
pub fn ari(truth: &Partition, pred: &Partition) -> Result<f64> {
    let c = contingency(truth, pred)?;
    let index: f64 = c.table.iter().flatten().map(|&x| comb2(x)).sum();
    let sum_a: f64 = c.rows.iter().map(|&x| comb2(x)).sum();
    let sum_b: f64 = c.cols.iter().map(|&x| comb2(x)).sum();
    let total = comb2(c.n as u64);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_a * sum_b / total;
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

fn entropy(counts: &[u64], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information, `2·I(U;V) / (H(U) + H(V))`, natural logs.
pub fn nmi(truth: &Partition, pred: &Partition) -> Result<f64> {
    let c = contingency(truth, pred)?;
    let n = c.n as f64;
    let hu = entropy(&c.rows, n);
    let hv = entropy(&c.cols, n);
    if hu == 0.0 && hv == 0.0 {
        return Ok(1.0);
    }
    if hu == 0.0 || hv == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (i, row) in c.table.iter().enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            if nij > 0 {
                let nij = nij as f64;
                mi += nij / n * (n * nij / (c.rows[i] as f64 * c.cols[j] as f64)).ln();
            }
        }
    }
    Ok((2.0 * mi / (hu + hv)).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub k: usize,
    pub ari: f64,
    pub nmi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// K with the highest ARI (smallest K on ties).
    pub fn best_ari(&self) -> SweepRow {
        *self
            .rows
            .iter()
            .reduce(|best, r| if r.ari > best.ari { r } else { best })
            .expect("sweep has at least one row")
    }

    /// K with the highest NMI (smallest K on ties).
    pub fn best_nmi(&self) -> SweepRow {
        *self
            .rows
            .iter()
            .reduce(|best, r| if r.nmi > best.nmi { r } else { best })
            .expect("sweep has at least one row")
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("K\tARI\tNMI\n");
        for r in &self.rows {
            writeln!(out, "{}\t{}\t{}", r.k, r.ari, r.nmi).unwrap();
        }
        out
    }
}

/// Dendrogram cut at `k` as a partition over its leaves.
pub fn cut_partition(dendrogram: &Dendrogram, k: usize) -> Result<Partition> {
    Partition::new(dendrogram.leaf_labels().to_vec(), &dendrogram.cut(k)?)
}

/// ARI and NMI against `truth` for every K in `k_min..=k_max`.
pub fn sweep_k(
    dendrogram: &Dendrogram,
    truth: &Partition,
    k_min: usize,
    k_max: usize,
) -> Result<SweepResult> {
    let n = dendrogram.n_leaves();
    if k_min < 2 || k_min > k_max || k_max > n {
        return Err(Error::invalid(format!(
            "K range {k_min}..={k_max} invalid for {n} leaves"
        )));
    }
    let rows = (k_min..=k_max)
        .map(|k| {
            let pred = cut_partition(dendrogram, k)?;
            Ok(SweepRow {
                k,
                ari: ari(truth, &pred)?,
                nmi: nmi(truth, &pred)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { rows })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetEval {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub cluster: usize,
}

/// Picks the cluster with the best F1 against `target` (ties: more overlap,
/// then smaller index) and reports its precision and recall.
pub fn target_eval(partition: &Partition, target: &BTreeSet<String>) -> Result<TargetEval> {
    if target.is_empty() {
        return Err(Error::invalid("target group is empty"));
    }
    let known: BTreeSet<&str> = partition.labels.iter().map(String::as_str).collect();
    if let Some(missing) = target.iter().find(|t| !known.contains(t.as_str())) {
        return Err(Error::MissingLanguage(missing.clone()));
    }
    let mut size = vec![0usize; partition.k];
    let mut overlap = vec![0usize; partition.k];
    for (l, &a) in partition.labels.iter().zip(&partition.assignment) {
        size[a] += 1;
        if target.contains(l) {
            overlap[a] += 1;
        }
    }
    let t = target.len() as f64;
    let score = |c: usize| {
        let hit = overlap[c] as f64;
        let precision = hit / size[c] as f64;
        let recall = hit / t;
        let f1 = if hit == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        TargetEval {
            precision,
            recall,
            f1,
            cluster: c,
        }
    };
    let mut best = score(0);
    for c in 1..partition.k {
        let s = score(c);
        if s.f1 > best.f1 || (s.f1 == best.f1 && overlap[c] > overlap[best.cluster]) {
            best = s;
        }
    }
    Ok(best)
}

/// `target_eval` at every K, as a TSV (`K, cluster, precision, recall, f1`).
pub fn target_sweep_tsv(
    dendrogram: &Dendrogram,
    target: &BTreeSet<String>,
    k_min: usize,
    k_max: usize,
) -> Result<String> {
    let n = dendrogram.n_leaves();
    if k_min < 1 || k_min > k_max || k_max > n {
        return Err(Error::invalid(format!(
            "K range {k_min}..={k_max} invalid for {n} leaves"
        )));
    }
    let mut out = String::from("K\tcluster\tprecision\trecall\tf1\tmembers\n");
    for k in k_min..=k_max {
        let p = cut_partition(dendrogram, k)?;
        let e = target_eval(&p, target)?;
        writeln!(
            out,
            "{k}\t{}\t{}\t{}\t{}\t{}",
            e.cluster,
            e.precision,
            e.recall,
            e.f1,
            p.cluster(e.cluster).join(",")
        )
        .unwrap();
    }
    Ok(out)
}

/// Per-class member lists, handy for reports.
pub fn class_members(p: &Partition) -> BTreeMap<usize, Vec<&str>> {
    let mut out: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
    for (l, &a) in p.labels.iter().zip(&p.assignment) {
        out.entry(a).or_default().push(l);
    }
    out
}
