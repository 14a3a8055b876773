//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Expected values come from the
//! brute-force oracles in this file, not from the library.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::time::{Duration, Instant};

use langtree::acoustics::{
    extract_clip_features, feature_index, FeatureTable, FrameSpec, LanguageFeatureVector,
    DEFAULT_TARGET_RMS, FEATURE_COUNT,
};
use langtree::boot::{bootstrap_support, BootstrapConfig};
use langtree::centroid::{build_matrix, standardize, CentroidMatrix};
use langtree::cluster::{to_newick, ward, Clade, Dendrogram};
use langtree::corpus::{
    decode_embeddings, encode_embeddings, read_embeddings, write_embeddings, AudioClip,
    EmbeddingFragment,
};
use langtree::metrics::{
    ari, cut_partition, nmi, sweep_k, target_eval, truth_partition, Partition, TruthLevel,
};
use langtree::newick::{self, NewickNode};
use langtree::stats::{
    bh_fdr, bonferroni, dimension_analysis, mann_whitney, pearson_test, student_t_test,
    welch_t_test, AnalysisOptions,
};
use langtree::synth::{self, HierarchyConfig};
use langtree::{with_threads, Execution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

type Outcome = Result<String, String>;
type Criterion = (&'static str, Option<u64>, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("x{i}")).collect()
}

// ---------------------------------------------------------------- 1

fn oracle_ari(a: &[usize], b: &[usize]) -> f64 {
    let (mut n11, mut n10, mut n01, mut n00) = (0f64, 0f64, 0f64, 0f64);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            match (a[i] == a[j], b[i] == b[j]) {
                (true, true) => n11 += 1.0,
                (true, false) => n10 += 1.0,
                (false, true) => n01 += 1.0,
                (false, false) => n00 += 1.0,
            }
        }
    }
    let den = (n11 + n10) * (n10 + n00) + (n11 + n01) * (n01 + n00);
    if den == 0.0 {
        1.0
    } else {
        2.0 * (n11 * n00 - n10 * n01) / den
    }
}

fn oracle_entropy(x: &[usize]) -> f64 {
    let mut counts: HashMap<usize, f64> = HashMap::new();
    for &v in x {
        *counts.entry(v).or_default() += 1.0;
    }
    let n = x.len() as f64;
    counts.values().map(|c| -(c / n) * (c / n).ln()).sum()
}

fn oracle_nmi(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let (ha, hb) = (oracle_entropy(a), oracle_entropy(b));
    if ha == 0.0 && hb == 0.0 {
        return 1.0;
    }
    if ha == 0.0 || hb == 0.0 {
        return 0.0;
    }
    let mut joint: HashMap<(usize, usize), f64> = HashMap::new();
    let mut pa: HashMap<usize, f64> = HashMap::new();
    let mut pb: HashMap<usize, f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1.0 / n;
        *pa.entry(x).or_default() += 1.0 / n;
        *pb.entry(y).or_default() += 1.0 / n;
    }
    let mi: f64 = joint
        .iter()
        .map(|(&(x, y), &p)| p * (p / (pa[&x] * pb[&y])).ln())
        .sum();
    2.0 * mi / (ha + hb)
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for case in 0..200 {
        let n = rng.random_range(2..=30);
        let ka = rng.random_range(1..=6);
        let kb = rng.random_range(1..=6);
        let a: Vec<usize> = (0..n).map(|_| rng.random_range(0..ka)).collect();
        let b: Vec<usize> = (0..n).map(|_| rng.random_range(0..kb)).collect();
        let pa = Partition::new(labels(n), &a).map_err(e2s)?;
        let pb = Partition::new(labels(n), &b).map_err(e2s)?;
        let got_ari = ari(&pa, &pb).map_err(e2s)?;
        let got_nmi = nmi(&pa, &pb).map_err(e2s)?;
        let (want_ari, want_nmi) = (oracle_ari(&a, &b), oracle_nmi(&a, &b));
        let err = (got_ari - want_ari).abs().max((got_nmi - want_nmi).abs());
        worst = worst.max(err);
        ensure(err <= 1e-12, || {
            format!("case {case}: ARI {got_ari} vs {want_ari}, NMI {got_nmi} vs {want_nmi}")
        })?;
    }
    Ok(format!("200 pairs, max error {worst:.1e}"))
}

// ---------------------------------------------------------------- 2

fn sse(points: &[Vec<f64>], members: &[usize]) -> f64 {
    let d = points[0].len();
    let mut c = vec![0.0; d];
    for &m in members {
        for (acc, v) in c.iter_mut().zip(&points[m]) {
            *acc += v;
        }
    }
    c.iter_mut().for_each(|v| *v /= members.len() as f64);
    members
        .iter()
        .map(|&m| {
            points[m]
                .iter()
                .zip(&c)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
        })
        .sum()
}

/// Greedy Ward by direct recomputation of the SSE increase for every pair.
fn ward_oracle(points: &[Vec<f64>]) -> Vec<(usize, usize, f64)> {
    let n = points.len();
    let mut clusters: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i, vec![i])).collect();
    let mut out = Vec::new();
    for step in 0..n - 1 {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for x in 0..clusters.len() {
            for y in x + 1..clusters.len() {
                let mut union = clusters[x].1.clone();
                union.extend(&clusters[y].1);
                let delta =
                    sse(points, &union) - sse(points, &clusters[x].1) - sse(points, &clusters[y].1);
                let lo = clusters[x].0.min(clusters[y].0);
                let hi = clusters[x].0.max(clusters[y].0);
                let better = match best {
                    None => true,
                    Some((bd, _, _, blo, bhi)) => {
                        delta < bd || (delta == bd && (lo, hi) < (blo, bhi))
                    }
                };
                if better {
                    best = Some((delta, x, y, lo, hi));
                }
            }
        }
        let (delta, x, y, lo, hi) = best.unwrap();
        out.push((lo, hi, (2.0 * delta.max(0.0)).sqrt()));
        let mut union = clusters[x].1.clone();
        union.extend(&clusters[y].1);
        clusters.remove(y);
        clusters.remove(x);
        clusters.push((n + step, union));
    }
    out
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let n = rng.random_range(2..=12);
        let d = rng.random_range(1..=4);
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-5.0..5.0)).collect())
            .collect();
        let m = CentroidMatrix::from_rows(labels(n), points.clone()).map_err(e2s)?;
        let tree = ward(&m).map_err(e2s)?;
        let want = ward_oracle(&points);
        for (k, (merge, &(lo, hi, h))) in tree.merges().iter().zip(&want).enumerate() {
            ensure(merge.left == lo && merge.right == hi, || {
                format!(
                    "case {case} merge {k}: ({}, {}) vs oracle ({lo}, {hi})",
                    merge.left, merge.right
                )
            })?;
            let err = (merge.height - h).abs();
            worst = worst.max(err);
            ensure(err <= 1e-9, || {
                format!("case {case} merge {k}: height {} vs {h}", merge.height)
            })?;
        }
    }
    Ok(format!("100 datasets, max height error {worst:.1e}"))
}

// ---------------------------------------------------------------- 3

fn criterion_3() -> Outcome {
    let corpus = synth::separated_families(4, 5, 10, 4, 1.0, 10.0, 303).map_err(e2s)?;
    let ids = corpus.lang_ids();
    let m = standardize(&build_matrix(&corpus.set, &ids).map_err(e2s)?).map_err(e2s)?;
    let reference = ward(&m).map_err(e2s)?;
    let cfg = BootstrapConfig {
        replicates: 100,
        base_seed: 7,
        restandardize: true,
    };
    let run = |exec| bootstrap_support(&corpus.set, &reference, &cfg, exec).map_err(e2s);
    let first = run(Execution::Parallel)?;
    let again = run(Execution::Parallel)?;
    let one = with_threads(Some(1), || run(Execution::Parallel)).map_err(e2s)??;
    let many = with_threads(Some(4), || run(Execution::Parallel)).map_err(e2s)??;
    let seq = run(Execution::Sequential)?;

    let mut min_support = 1.0f64;
    for f in 0..4 {
        let prefix = format!("fam{f}_");
        let clade = Clade::new(
            ids.iter()
                .enumerate()
                .filter(|(_, id)| id.starts_with(&prefix))
                .map(|(i, _)| i)
                .collect(),
        );
        let s = first
            .get(&clade)
            .ok_or_else(|| format!("family {f} is not a clade of the reference tree"))?;
        min_support = min_support.min(s);
        ensure(s >= 0.99, || format!("family {f} support {s} < 0.99"))?;
    }
    let tsv = first.to_tsv(&reference);
    ensure(again == first && again.to_tsv(&reference) == tsv, || {
        "rerun differs".into()
    })?;
    ensure(one == first && many == first, || {
        "threads 1 vs 4 differ".into()
    })?;
    ensure(seq == first, || "sequential differs from parallel".into())?;
    Ok(format!(
        "min family support {min_support:.2}; reruns and 1/4 threads identical"
    ))
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> Outcome {
    let cfg = HierarchyConfig::default();
    let corpus = synth::hierarchical(&cfg).map_err(e2s)?;
    let ids = corpus.lang_ids();
    let m = standardize(&build_matrix(&corpus.set, &ids).map_err(e2s)?).map_err(e2s)?;
    let tree = ward(&m).map_err(e2s)?;
    let truth = truth_partition(&corpus.records, &ids, TruthLevel::Subfamily).map_err(e2s)?;
    let sweep = sweep_k(&tree, &truth, 2, 20).map_err(e2s)?;
    let row = sweep.rows.iter().find(|r| r.k == 9).ok_or("no K = 9 row")?;
    ensure(
        (row.ari - 1.0).abs() <= 1e-12 && (row.nmi - 1.0).abs() <= 1e-12,
        || format!("K = 9: ARI {} NMI {}", row.ari, row.nmi),
    )?;
    let target: BTreeSet<String> = corpus
        .records
        .iter()
        .filter(|r| r.has_tag(&cfg.target_tag))
        .map(|r| r.lang_id.clone())
        .collect();
    for k in [3, 9] {
        let eval = target_eval(&cut_partition(&tree, k).map_err(e2s)?, &target).map_err(e2s)?;
        ensure(eval.precision == 1.0, || {
            format!("K = {k}: precision {}", eval.precision)
        })?;
    }
    Ok(format!(
        "ARI {:.3} NMI {:.3} at K = 9; target precision 1.0 at K = 3 and 9",
        row.ari, row.nmi
    ))
}

// ---------------------------------------------------------------- 5

fn sine(freq: f64, amp: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| amp * (std::f64::consts::TAU * freq * i as f64 / 16_000.0).sin())
        .collect()
}

fn summary(samples: Vec<f64>) -> Result<[f64; FEATURE_COUNT], String> {
    let clip = AudioClip::new(samples, 16_000);
    Ok(
        extract_clip_features(&clip, &FrameSpec::default(), DEFAULT_TARGET_RMS)
            .map_err(e2s)?
            .summary(),
    )
}

fn criterion_5() -> Outcome {
    let f = |name| feature_index(name).unwrap();
    let tone = summary(sine(440.0, 1.0, 16_000))?;
    let centroid = tone[f("spectral_centroid_mean")];
    let zcr = tone[f("zcr_mean")];
    let range = tone[f("energy_dynamic_range")];
    ensure((centroid - 440.0).abs() <= 25.0, || {
        format!("centroid {centroid}")
    })?;
    ensure((zcr - 0.055).abs() <= 0.05 * 0.055, || format!("zcr {zcr}"))?;
    ensure(range < 0.1, || format!("sine dynamic range {range} dB"))?;

    let mut two = sine(440.0, 1.0, 16_000);
    two.extend(sine(440.0, 0.1, 16_000));
    let two_range = summary(two.clone())?[f("energy_dynamic_range")];
    ensure((two_range - 20.0).abs() <= 0.5, || {
        format!("two-level range {two_range} dB")
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mixed = synth::tone_clip(180.0, 0.7, 1.0, &mut rng).samples;
    let mut worst = 0.0f64;
    for clip in [sine(440.0, 1.0, 16_000), two, mixed] {
        let base = summary(clip.clone())?;
        let loud = summary(clip.iter().map(|v| 8.0 * v).collect())?;
        for (a, b) in base.iter().zip(&loud) {
            worst = worst.max((a - b).abs());
        }
    }
    ensure(worst <= 1e-6, || {
        format!("gain change moved a feature by {worst}")
    })?;
    Ok(format!(
        "centroid {centroid:.1} Hz, zcr {zcr:.4}, range {range:.4} dB, two-level {two_range:.3} dB, gain drift {worst:.1e}"
    ))
}

// ---------------------------------------------------------------- 6

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn mann_whitney_enumeration() -> Result<usize, String> {
    let mut cases = 0;
    for n in 2..=12usize {
        for na in 1..n {
            let nb = n - na;
            // U of group A for every subset of ranks 1..=n of size na
            let masks: Vec<u32> = (0u32..1 << n)
                .filter(|m| m.count_ones() as usize == na)
                .collect();
            let u_of = |m: u32| -> usize {
                let rank_sum: usize = (0..n).filter(|i| m >> i & 1 == 1).map(|i| i + 1).sum();
                rank_sum - na * (na + 1) / 2
            };
            let mut hist = vec![0u64; na * nb + 1];
            for &m in &masks {
                hist[u_of(m)] += 1;
            }
            let total = masks.len() as u64;
            if total as f64 != binom(n, na) {
                return Err(format!("enumeration size mismatch at n={n}"));
            }
            for &m in &masks {
                let u = u_of(m);
                let lower: u64 = hist[..=u].iter().sum();
                let upper: u64 = hist[u..].iter().sum();
                let want = (2.0 * lower.min(upper) as f64 / total as f64).min(1.0);
                let a: Vec<f64> = (0..n)
                    .filter(|i| m >> i & 1 == 1)
                    .map(|i| (i + 1) as f64)
                    .collect();
                let b: Vec<f64> = (0..n)
                    .filter(|i| m >> i & 1 == 0)
                    .map(|i| (i + 1) as f64)
                    .collect();
                let got = mann_whitney(&a, &b).map_err(e2s)?;
                ensure(
                    got.statistic == u as f64 && (got.p_value - want).abs() <= 1e-15,
                    || format!("na={na} nb={nb} U={u}: p {} vs {want}", got.p_value),
                )?;
                cases += 1;
            }
        }
    }
    Ok(cases)
}

/// Two-sided tail of the Student-t distribution by Simpson quadrature of the
/// unnormalized density after x = tan(θ).
fn t_tail_quadrature(t: f64, df: f64) -> f64 {
    let h = |theta: f64| {
        let (s, c) = theta.sin_cos();
        (c * c + s * s / df).powf(-(df + 1.0) / 2.0) * c.abs().powf(df - 1.0)
    };
    let simpson = |a: f64, b: f64| {
        let n = 20_000;
        let step = (b - a) / n as f64;
        let mut acc = h(a) + h(b);
        for i in 1..n {
            acc += h(a + step * i as f64) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * step / 3.0
    };
    let half_pi = std::f64::consts::FRAC_PI_2;
    simpson(t.abs().atan(), half_pi) / simpson(0.0, half_pi)
}

fn type_one_rate(trials: usize, seed: u64, test: impl Fn(&mut ChaCha8Rng) -> f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rejected = (0..trials).filter(|_| test(&mut rng) <= 0.05).count();
    rejected as f64 / trials as f64
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn criterion_6() -> Outcome {
    let mw_cases = mann_whitney_enumeration()?;

    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut worst = 0.0f64;
    for case in 0..200 {
        let (na, nb) = (rng.random_range(4..=15), rng.random_range(4..=15));
        let shift = rng.random_range(-2.0..2.0);
        let scale = rng.random_range(0.2..3.0);
        let a = normals(&mut rng, na);
        let b: Vec<f64> = normals(&mut rng, nb)
            .iter()
            .map(|v| shift + scale * v)
            .collect();
        let r = welch_t_test(&a, &b).map_err(e2s)?;
        let want = t_tail_quadrature(r.statistic, r.df.unwrap());
        let err = (r.p_value - want).abs();
        worst = worst.max(err);
        ensure(err <= 1e-6, || {
            format!("Welch case {case}: p {} vs quadrature {want}", r.p_value)
        })?;
    }

    let bh = |p: &[f64]| bh_fdr(p, 0.05).map_err(e2s);
    let bf = |p: &[f64]| bonferroni(p, 0.05).map_err(e2s);
    ensure(bh(&[0.005, 0.01, 0.03, 0.04])? == vec![0, 1, 2, 3], || {
        "BH example 1".into()
    })?;
    ensure(bh(&[0.02, 0.06])? == vec![0], || "BH example 2".into())?;
    ensure(bh(&[1.0; 5])?.is_empty(), || "BH example 3".into())?;
    let mut ten = vec![0.5; 10];
    ten[2] = 0.004;
    ten[7] = 0.006;
    ensure(bf(&ten)? == vec![2], || "Bonferroni example 1".into())?;
    ensure(bf(&[0.05])? == vec![0], || "Bonferroni example 2".into())?;

    let trials = 10_000;
    let rates = [
        (
            "welch",
            type_one_rate(trials, 1, |r| {
                welch_t_test(&normals(r, 10), &normals(r, 20))
                    .unwrap()
                    .p_value
            }),
        ),
        (
            "student",
            type_one_rate(trials, 2, |r| {
                student_t_test(&normals(r, 10), &normals(r, 20))
                    .unwrap()
                    .p_value
            }),
        ),
        (
            "pearson",
            type_one_rate(trials, 3, |r| {
                pearson_test(&normals(r, 20), &normals(r, 20))
                    .unwrap()
                    .p_value
            }),
        ),
        (
            "mann-whitney",
            type_one_rate(trials, 4, |r| {
                mann_whitney(&normals(r, 10), &normals(r, 20))
                    .unwrap()
                    .p_value
            }),
        ),
    ];
    for (name, rate) in rates {
        ensure((0.03..=0.07).contains(&rate), || {
            format!("{name} type-I rate {rate}")
        })?;
    }
    let shown: Vec<String> = rates.iter().map(|(n, r)| format!("{n} {r:.4}")).collect();
    Ok(format!(
        "{mw_cases} exact MW cases, Welch max error {worst:.1e}, type-I: {}",
        shown.join(", ")
    ))
}

// ---------------------------------------------------------------- 7

const PLANTED_DIM: usize = 5;

struct PlantedRun {
    found: bool,
    exact: bool,
    planted_feature_top: bool,
}

fn planted_run(seed: u64) -> Result<PlantedRun, String> {
    let (langs, poa, dims) = (49, 12, 1280);
    let planted_feature = feature_index("energy_dynamic_range").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<String> = (0..langs).map(|i| format!("lang{i:02}")).collect();
    let rows: Vec<Vec<f64>> = (0..langs)
        .map(|l| {
            let mut row = normals(&mut rng, dims);
            if l < poa {
                row[PLANTED_DIM] += 3.0;
            }
            row
        })
        .collect();
    let noise = Normal::new(0.0, 0.5).unwrap();
    let features: Vec<LanguageFeatureVector> = rows
        .iter()
        .map(|row| {
            let mut v = [0.0; FEATURE_COUNT];
            for (i, x) in v.iter_mut().enumerate() {
                *x = if i == planted_feature {
                    row[PLANTED_DIM] + noise.sample(&mut rng)
                } else {
                    StandardNormal.sample(&mut rng)
                };
            }
            LanguageFeatureVector(v)
        })
        .collect();
    let table = FeatureTable::new(ids.clone(), features).map_err(e2s)?;
    let m =
        standardize(&CentroidMatrix::from_rows(ids.clone(), rows).map_err(e2s)?).map_err(e2s)?;
    let group: BTreeSet<String> = ids[..poa].iter().cloned().collect();
    let res = dimension_analysis(
        &m,
        &group,
        &table,
        &AnalysisOptions::default(),
        Execution::Parallel,
    )
    .map_err(e2s)?;
    let freq = res.bonferroni.feature_frequency;
    let top = freq.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(PlantedRun {
        found: res.sig_dims_bonf().contains(&PLANTED_DIM),
        exact: res.sig_dims_bonf() == [PLANTED_DIM],
        planted_feature_top: freq[planted_feature] > 0.0 && freq[planted_feature] == top,
    })
}

fn criterion_7() -> Outcome {
    let mut exact = 0;
    let mut top = 0;
    let mut contains = 0;
    let mut found = 0;
    for seed in 0..100 {
        let run = planted_run(seed)?;
        found += usize::from(run.found);
        if run.exact {
            exact += 1;
            if run.planted_feature_top {
                top += 1;
            }
        }
        if run.planted_feature_top {
            contains += 1;
        }
    }
    ensure(exact >= 95, || {
        format!(
            "exact recovery in {exact}/100 seeds (planted dimension found in {found}/100, extra null dimensions in {})",
            found - exact
        )
    })?;
    ensure(top == exact, || {
        format!(
            "planted feature not the most frequent in {} of {exact} recovering seeds",
            exact - top
        )
    })?;
    Ok(format!(
        "exact recovery {exact}/100, planted feature most frequent in {top}/{exact} ({contains}/100 overall)"
    ))
}

// ---------------------------------------------------------------- 8

/// Height of every internal clade of a parsed tree, keyed by leaf labels.
fn parsed_clades(node: &NewickNode, out: &mut BTreeMap<BTreeSet<String>, f64>) -> BTreeSet<String> {
    if node.is_leaf() {
        return BTreeSet::from([node.label.clone().unwrap_or_default()]);
    }
    let mut leaves = BTreeSet::new();
    for c in &node.children {
        leaves.extend(parsed_clades(c, out));
    }
    out.insert(leaves.clone(), node.height());
    leaves
}

fn dendrogram_clades(d: &Dendrogram) -> BTreeMap<BTreeSet<String>, f64> {
    let n = d.n_leaves();
    (0..d.merges().len())
        .map(|k| {
            let set = d
                .node_leaves(n + k)
                .into_iter()
                .map(|i| d.leaf_labels()[i].clone())
                .collect();
            (set, d.node_height(n + k))
        })
        .collect()
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let dir = tempfile::tempdir().map_err(e2s)?;
    let specials = [f32::MAX, f32::MIN, f32::MIN_POSITIVE, -0.0, 1e-40];
    for case in 0..1000 {
        let dim = rng.random_range(1..=64);
        let count = rng.random_range(1..=20);
        let rows: Vec<Vec<f64>> = (0..count)
            .map(|_| {
                (0..dim)
                    .map(|_| {
                        let v: f32 = if rng.random_bool(0.02) {
                            specials[rng.random_range(0..specials.len())]
                        } else {
                            rng.random_range(-1e4f32..1e4)
                        };
                        f64::from(v)
                    })
                    .collect()
            })
            .collect();
        let frag = EmbeddingFragment::new(rows).map_err(e2s)?;
        let back = decode_embeddings(&encode_embeddings(&frag).map_err(e2s)?).map_err(e2s)?;
        ensure(back == frag, || {
            format!("EMB1 case {case} differs after decode")
        })?;
        if case % 100 == 0 {
            let path = dir.path().join(format!("m{case}.emb"));
            write_embeddings(&frag, &path).map_err(e2s)?;
            ensure(read_embeddings(&path).map_err(e2s)? == frag, || {
                format!("EMB1 file case {case}")
            })?;
        }
    }

    let mut worst = 0.0f64;
    for case in 0..200 {
        let n = rng.random_range(2..=20);
        let names: Vec<String> = (0..n)
            .map(|i| match i % 4 {
                0 => format!("lang {i}"),
                1 => format!("o'{i}"),
                _ => format!("l{i}"),
            })
            .collect();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..3).map(|_| rng.random_range(-10.0..10.0)).collect())
            .collect();
        let d = ward(&CentroidMatrix::from_rows(names, rows).map_err(e2s)?).map_err(e2s)?;
        let supports: BTreeMap<Clade, f64> = d
            .clades()
            .into_iter()
            .map(|c| (c, rng.random_range(0.0..=1.0)))
            .collect();
        let text = to_newick(&d, Some(&supports)).map_err(e2s)?;
        let tree = newick::parse(&text).map_err(e2s)?;
        let mut got = BTreeMap::new();
        parsed_clades(&tree, &mut got);
        let want = dendrogram_clades(&d);
        ensure(got.keys().eq(want.keys()), || {
            format!("Newick case {case}: topology differs")
        })?;
        for (k, h) in &want {
            worst = worst.max((got[k] - h).abs());
        }
        ensure(worst <= 1e-9, || {
            format!("Newick case {case}: height error {worst}")
        })?;
    }
    Ok(format!(
        "1000 EMB1 matrices identical; 200 Newick trees, max height error {worst:.1e}"
    ))
}

fn main() {
    let criteria: [Criterion; 8] = [
        (
            "ARI/NMI match pair-counting and entropy oracles",
            Some(5),
            criterion_1,
        ),
        (
            "Ward merges match SSE-recomputation oracle",
            Some(10),
            criterion_2,
        ),
        (
            "bootstrap support, determinism and thread independence",
            Some(30),
            criterion_3,
        ),
        (
            "synthetic phylogeny recovered at true K",
            Some(60),
            criterion_4,
        ),
        ("DSP feature oracles", None, criterion_5),
        ("statistics oracles and null calibration", None, criterion_6),
        ("planted dimension recovery", None, criterion_7),
        ("EMB1 and Newick round trips", None, criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, limit, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let outcome = match (outcome, limit) {
            (Ok(_), Some(s)) if elapsed > Duration::from_secs(*s) => {
                Err(format!("runtime {elapsed:.2?} exceeds {s} s"))
            }
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("PASS {}. {name} [{elapsed:.2?}]: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {}. {name} [{elapsed:.2?}]: {why}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
