//! Ward-linkage agglomerative clustering, dendrogram cutting, clade
//! enumeration and Newick export.
//!
//! Linkage is the straightforward O(n³) scheme: keep the full matrix of
//! squared cluster dissimilarities, merge the closest pair, and update the
//! merged row with the Lance–Williams Ward recurrence. Heights are the
//! (unsquared) dissimilarity of the merged pair, so two singletons merge at
//! their Euclidean distance and every height satisfies `h² = 2·ΔSSE`.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::centroid::CentroidMatrix;
use crate::error::{Error, Result};
use crate::newick::NewickNode;

/// Symmetric table of pairwise distances with row labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    labels: Vec<String>,
    n: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_full(labels: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let n = labels.len();
        if values.len() != n * n {
            return Err(Error::invalid("distance table must be n×n"));
        }
        for i in 0..n {
            if values[i * n + i] != 0.0 {
                return Err(Error::invalid("distance table diagonal must be zero"));
            }
            for j in 0..n {
                let v = values[i * n + j];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::invalid("distances must be finite and non-negative"));
                }
                if v != values[j * n + i] {
                    return Err(Error::invalid("distance table must be symmetric"));
                }
            }
        }
        Ok(Self { labels, n, values })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}

/// Euclidean distances between all rows.
pub fn pairwise_distances(matrix: &CentroidMatrix) -> Result<DistanceMatrix> {
    let n = matrix.n_rows();
    if n < 2 {
        return Err(Error::invalid("need at least two rows for distances"));
    }
    if matrix.rows().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = matrix
                .row(i)
                .iter()
                .zip(matrix.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            values[i * n + j] = d;
            values[j * n + i] = d;
        }
    }
    Ok(DistanceMatrix {
        labels: matrix.lang_ids().to_vec(),
        n,
        values,
    })
}

/// One agglomeration step. Node ids `0..n` are leaves; merge `k` creates node
/// `n + k`. `left < right` always.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    leaf_labels: Vec<String>,
    merges: Vec<Merge>,
}

/// Sorted leaf indices under one internal node.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Clade(Vec<usize>);

impl Clade {
    pub fn new(mut members: Vec<usize>) -> Self {
        members.sort_unstable();
        members.dedup();
        Clade(members)
    }

    pub fn members(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn labels<'a>(&self, leaf_labels: &'a [String]) -> Vec<&'a str> {
        self.0.iter().map(|&i| leaf_labels[i].as_str()).collect()
    }
}

/// Ward linkage over a distance table. `sizes` gives the initial weight of
/// each input cluster (all ones for plain observations).
pub fn ward_linkage(distances: &DistanceMatrix, sizes: &[usize]) -> Result<Dendrogram> {
    let n = distances.len();
    if n < 2 {
        return Err(Error::invalid("linkage needs at least two clusters"));
    }
    if sizes.len() != n || sizes.contains(&0) {
        return Err(Error::invalid(
            "one positive size per input cluster required",
        ));
    }
    let mut d2: Vec<f64> = (0..n * n)
        .map(|k| {
            let v = distances.values[k];
            v * v
        })
        .collect();
    let mut weight: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
    let mut leaves: Vec<usize> = vec![1; n];
    let mut node: Vec<usize> = (0..n).collect();
    let mut alive = vec![true; n];
    let mut merges = Vec::with_capacity(n - 1);

    for step in 0..n - 1 {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for i in 0..n {
            if !alive[i] {
                continue;
            }
            for j in (i + 1)..n {
                if !alive[j] {
                    continue;
                }
                let v = d2[i * n + j];
                let (lo, hi) = if node[i] < node[j] {
                    (node[i], node[j])
                } else {
                    (node[j], node[i])
                };
                let better = match best {
                    None => true,
                    Some((bv, _, _, blo, bhi)) => match v.partial_cmp(&bv).unwrap() {
                        Ordering::Less => true,
                        Ordering::Greater => false,
                        Ordering::Equal => (lo, hi) < (blo, bhi),
                    },
                };
                if better {
                    best = Some((v, i, j, lo, hi));
                }
            }
        }
        let (dij2, i, j, lo, hi) = best.expect("at least two live clusters");
        let (wi, wj) = (weight[i], weight[j]);
        for k in 0..n {
            if !alive[k] || k == i || k == j {
                continue;
            }
            let wk = weight[k];
            let updated = ((wi + wk) * d2[k * n + i] + (wj + wk) * d2[k * n + j] - wk * dij2)
                / (wi + wj + wk);
            let updated = updated.max(0.0);
            d2[k * n + i] = updated;
            d2[i * n + k] = updated;
        }
        merges.push(Merge {
            left: lo,
            right: hi,
            height: dij2.max(0.0).sqrt(),
            size: leaves[i] + leaves[j],
        });
        weight[i] = wi + wj;
        leaves[i] += leaves[j];
        node[i] = n + step;
        alive[j] = false;
    }
    Ok(Dendrogram {
        leaf_labels: distances.labels.clone(),
        merges,
    })
}

/// Euclidean Ward tree over the rows of `matrix`.
pub fn ward(matrix: &CentroidMatrix) -> Result<Dendrogram> {
    let d = pairwise_distances(matrix)?;
    ward_linkage(&d, &vec![1; d.len()])
}

impl Dendrogram {
    /// Builds a tree from an explicit merge list, validating ids and sizes.
    pub fn from_merges(leaf_labels: Vec<String>, merges: Vec<Merge>) -> Result<Self> {
        let n = leaf_labels.len();
        if n < 2 || merges.len() != n - 1 {
            return Err(Error::invalid("a dendrogram over n leaves has n-1 merges"));
        }
        let mut sizes = vec![1usize; n];
        let mut used = vec![false; 2 * n - 1];
        for (k, m) in merges.iter().enumerate() {
            let id = n + k;
            if m.left >= m.right || m.right >= id || used[m.left] || used[m.right] {
                return Err(Error::invalid(format!("invalid merge {k}")));
            }
            if !(m.height >= 0.0 && m.height.is_finite()) {
                return Err(Error::invalid(format!("invalid height at merge {k}")));
            }
            used[m.left] = true;
            used[m.right] = true;
            let size = sizes[m.left] + sizes[m.right];
            if size != m.size {
                return Err(Error::invalid(format!("size mismatch at merge {k}")));
            }
            sizes.push(size);
        }
        Ok(Self {
            leaf_labels,
            merges,
        })
    }

    pub fn n_leaves(&self) -> usize {
        self.leaf_labels.len()
    }

    pub fn leaf_labels(&self) -> &[String] {
        &self.leaf_labels
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    /// Height of any node (leaves sit at 0).
    pub fn node_height(&self, id: usize) -> f64 {
        let n = self.n_leaves();
        if id < n {
            0.0
        } else {
            self.merges[id - n].height
        }
    }

    /// Sorted leaves under node `id`.
    pub fn node_leaves(&self, id: usize) -> Vec<usize> {
        let n = self.n_leaves();
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(x) = stack.pop() {
            if x < n {
                out.push(x);
            } else {
                let m = &self.merges[x - n];
                stack.push(m.left);
                stack.push(m.right);
            }
        }
        out.sort_unstable();
        out
    }

    /// Flat clustering with `k` clusters: the last `k - 1` merges are undone.
    /// Cluster indices follow the order in which leaves first appear.
    pub fn cut(&self, k: usize) -> Result<Vec<usize>> {
        let n = self.n_leaves();
        if k < 1 || k > n {
            return Err(Error::invalid(format!("k={k} outside 1..={n}")));
        }
        let mut parent: Vec<usize> = (0..2 * n - 1).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (step, m) in self.merges.iter().take(n - k).enumerate() {
            let id = n + step;
            let a = find(&mut parent, m.left);
            let b = find(&mut parent, m.right);
            parent[a] = id;
            parent[b] = id;
        }
        let mut index = BTreeMap::new();
        let mut out = Vec::with_capacity(n);
        for leaf in 0..n {
            let root = find(&mut parent, leaf);
            let next = index.len();
            out.push(*index.entry(root).or_insert(next));
        }
        Ok(out)
    }

    /// Non-trivial clades (2 ≤ size ≤ n−1), in merge order.
    pub fn clades(&self) -> Vec<Clade> {
        let n = self.n_leaves();
        (0..self.merges.len())
            .filter(|&k| self.merges[k].size < n)
            .map(|k| Clade(self.node_leaves(n + k)))
            .collect()
    }

    fn root(&self) -> usize {
        2 * self.n_leaves() - 2
    }

    /// Converts to a Newick tree. Children appear in node-id order. Internal
    /// nodes listed in `supports` are labelled with their rounded percentage.
    pub fn to_tree(&self, supports: Option<&BTreeMap<Clade, f64>>) -> Result<NewickNode> {
        self.build_tree(supports, false)
    }

    /// Like [`Dendrogram::to_tree`], but orders each node's children by their
    /// smallest leaf index, which is the layout used for rendering.
    pub fn to_display_tree(&self, supports: Option<&BTreeMap<Clade, f64>>) -> Result<NewickNode> {
        self.build_tree(supports, true)
    }

    fn build_tree(
        &self,
        supports: Option<&BTreeMap<Clade, f64>>,
        by_min_leaf: bool,
    ) -> Result<NewickNode> {
        let n = self.n_leaves();
        let mut node_of = BTreeMap::new();
        if let Some(sup) = supports {
            for (k, _) in self.merges.iter().enumerate() {
                node_of.insert(Clade(self.node_leaves(n + k)), n + k);
            }
            for (clade, &s) in sup {
                if !node_of.contains_key(clade) || clade.len() >= n || clade.len() < 2 {
                    return Err(Error::invalid(format!(
                        "support key {:?} is not a clade of this tree",
                        clade.labels(&self.leaf_labels)
                    )));
                }
                if !(0.0..=1.0).contains(&s) {
                    return Err(Error::invalid("support values must lie in [0, 1]"));
                }
            }
        }
        let mut label_of = BTreeMap::new();
        if let Some(sup) = supports {
            for (clade, s) in sup {
                label_of.insert(node_of[clade], format!("{}", (s * 100.0).round() as i64));
            }
        }
        Ok(self.subtree(self.root(), None, &label_of, by_min_leaf))
    }

    fn subtree(
        &self,
        id: usize,
        parent_height: Option<f64>,
        labels: &BTreeMap<usize, String>,
        by_min_leaf: bool,
    ) -> NewickNode {
        let n = self.n_leaves();
        let h = self.node_height(id);
        let length = parent_height.map(|p| p - h);
        if id < n {
            return NewickNode::leaf(self.leaf_labels[id].clone(), length);
        }
        let m = &self.merges[id - n];
        let (mut a, mut b) = (m.left, m.right);
        if by_min_leaf && self.node_leaves(b)[0] < self.node_leaves(a)[0] {
            std::mem::swap(&mut a, &mut b);
        }
        NewickNode {
            label: labels.get(&id).cloned(),
            length,
            children: vec![
                self.subtree(a, Some(h), labels, by_min_leaf),
                self.subtree(b, Some(h), labels, by_min_leaf),
            ],
        }
    }
}

/// Newick text with branch lengths equal to height differences and optional
/// support percentages on internal nodes.
pub fn to_newick(
    dendrogram: &Dendrogram,
    supports: Option<&BTreeMap<Clade, f64>>,
) -> Result<String> {
    Ok(dendrogram.to_tree(supports)?.to_string())
}
