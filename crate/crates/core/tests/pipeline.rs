use std::collections::BTreeSet;

use langtree::acoustics::{
    extract_feature_table, feature_index, frame_signal, mel_mfcc, FeatureTable, FrameSpec,
    LanguageFeatureVector, DEFAULT_TARGET_RMS, FEATURE_COUNT,
};
use langtree::boot::{bootstrap_support, BootstrapConfig};
use langtree::centroid::{build_matrix, language_centroid, standardize, CentroidMatrix};
use langtree::cluster::ward;
use langtree::corpus::{
    decode_embeddings, encode_embeddings, load_embedding_set, load_manifest, EmbeddingFragment,
};
use langtree::projection::pca_fit_project;
use langtree::stats::{acoustic_contrast, dimension_analysis, filter_contrast, AnalysisOptions};
use langtree::synth::{self, HierarchyConfig};
use langtree::Execution;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("l{i:02}")).collect()
}

#[test]
fn written_corpus_round_trips_through_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = HierarchyConfig {
        families: 2,
        subfamilies: 2,
        languages: 3,
        clips: 3,
        dim: 8,
        ..Default::default()
    };
    let corpus = synth::hierarchical(&cfg).unwrap();
    let path = synth::write_corpus(dir.path(), &corpus, true, 9).unwrap();
    let manifest = load_manifest(&path).unwrap();
    let set = load_embedding_set(&manifest, Execution::Parallel).unwrap();
    let order = manifest.lang_ids();
    let m = build_matrix(&set, &order).unwrap();
    for (r, id) in order.iter().enumerate() {
        let want = language_centroid(set.get(id).unwrap()).unwrap();
        assert_eq!(m.row(r), want.as_slice());
    }

    let table = extract_feature_table(
        &manifest,
        &FrameSpec::default(),
        DEFAULT_TARGET_RMS,
        Execution::Parallel,
    )
    .unwrap();
    assert_eq!(table.lang_ids(), order.as_slice());
    let seq = extract_feature_table(
        &manifest,
        &FrameSpec::default(),
        DEFAULT_TARGET_RMS,
        Execution::Sequential,
    )
    .unwrap();
    assert_eq!(table, seq);
    let back = FeatureTable::parse_tsv(&table.to_tsv()).unwrap();
    assert_eq!(back, table);
}

#[test]
fn white_noise_first_cepstral_coefficient_is_centered() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let spec = FrameSpec::default();
    let n_frames = 1000;
    let samples = normals(&mut rng, spec.window_len + (n_frames - 1) * spec.hop);
    let frames = frame_signal(&samples, &spec).unwrap();
    assert_eq!(frames.len(), n_frames);
    let c1: Vec<f64> = mel_mfcc(&frames, 16_000)
        .unwrap()
        .iter()
        .map(|c| c[0])
        .collect();
    assert!(c1.iter().all(|v| v.is_finite()));
    let n = c1.len() as f64;
    let mean = c1.iter().sum::<f64>() / n;
    let sd = (c1.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!(mean.abs() < 3.0 * sd / n.sqrt(), "mean c1 {mean}, sd {sd}");
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for row in a.iter_mut() {
                    let (akp, akq) = (row[p], row[q]);
                    row[p] = c * akp - s * akq;
                    row[q] = s * akp + c * akq;
                }
                let (rp, rq) = (a[p].clone(), a[q].clone());
                for k in 0..n {
                    a[p][k] = c * rp[k] - s * rq[k];
                    a[q][k] = s * rp[k] + c * rq[k];
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let values = (0..n).map(|i| a[i][i]).collect();
    let vectors = (0..n).map(|j| (0..n).map(|i| v[i][j]).collect()).collect();
    (values, vectors)
}

#[test]
fn pca_matches_covariance_eigendecomposition() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..20 {
        let (l, d) = (rng.random_range(4..12), rng.random_range(2..6));
        let rows: Vec<Vec<f64>> = (0..l)
            .map(|_| {
                (0..d)
                    .map(|k| {
                        (k + 1) as f64 * {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            z
                        }
                    })
                    .collect()
            })
            .collect();
        let m = CentroidMatrix::from_rows(ids(l), rows.clone()).unwrap();
        let q = (l - 1).min(d);
        let (model, scores) = pca_fit_project(&m, q).unwrap();

        let mean: Vec<f64> = (0..d)
            .map(|c| rows.iter().map(|r| r[c]).sum::<f64>() / l as f64)
            .collect();
        let cov: Vec<Vec<f64>> = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| {
                        rows.iter()
                            .map(|r| (r[i] - mean[i]) * (r[j] - mean[j]))
                            .sum::<f64>()
                    })
                    .collect()
            })
            .collect();
        let (values, vectors) = jacobi_eigen(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
        let total: f64 = values.iter().sum();
        for (k, &e) in order.iter().take(q).enumerate() {
            assert!((model.explained_variance_ratio[k] - values[e] / total).abs() < 1e-9);
            let dot: f64 = model.components[k]
                .iter()
                .zip(&vectors[e])
                .map(|(a, b)| a * b)
                .sum();
            assert!((dot.abs() - 1.0).abs() < 1e-6, "component {k} dot {dot}");
        }
        for (row, score) in rows.iter().zip(&scores) {
            for (k, s) in score.iter().enumerate() {
                let want: f64 = model.components[k]
                    .iter()
                    .zip(row.iter().zip(&mean))
                    .map(|(w, (x, m))| w * (x - m))
                    .sum();
                assert!((s - want).abs() < 1e-9);
            }
        }
    }
}

fn planted_tables(seed: u64, shift: f64) -> (FeatureTable, BTreeSet<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = ids(30);
    let planted = feature_index("energy_dynamic_range").unwrap();
    let rows = (0..30)
        .map(|l| {
            let mut v = [0.0; FEATURE_COUNT];
            for (f, x) in v.iter_mut().enumerate() {
                *x = StandardNormal.sample(&mut rng);
                if f == planted && l < 12 {
                    *x += shift;
                }
            }
            LanguageFeatureVector(v)
        })
        .collect();
    let group = names[..12].iter().cloned().collect();
    (FeatureTable::new(names, rows).unwrap(), group)
}

#[test]
fn planted_feature_shift_is_reported_higher() {
    let (table, group) = planted_tables(31, 2.0);
    let rows = acoustic_contrast(&table, &group).unwrap();
    let planted = rows
        .iter()
        .find(|r| r.feature == "energy_dynamic_range")
        .unwrap();
    assert_eq!(planted.direction(), "Higher");
    assert!(planted.cohens_d > 0.5);
    let kept = filter_contrast(&rows, 0.001, 0.5);
    assert!(kept.iter().any(|r| r.feature == "energy_dynamic_range"));
}

#[test]
fn identical_groups_leave_contrast_empty() {
    let names = ids(20);
    let row = LanguageFeatureVector(std::array::from_fn(|i| i as f64));
    let mut rows = vec![row; 20];
    // same multiset in both halves
    for (i, r) in rows.iter_mut().enumerate() {
        r.0[0] = (i % 10) as f64;
    }
    let table = FeatureTable::new(names.clone(), rows).unwrap();
    let group: BTreeSet<String> = names[..10].iter().cloned().collect();
    let all = acoustic_contrast(&table, &group).unwrap();
    assert!(filter_contrast(&all, 0.001, 0.5).is_empty());
}

fn null_analysis(seed: u64, dims: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = ids(40);
    let rows: Vec<Vec<f64>> = (0..40).map(|_| normals(&mut rng, dims)).collect();
    let features = (0..40)
        .map(|_| LanguageFeatureVector(std::array::from_fn(|_| StandardNormal.sample(&mut rng))))
        .collect();
    let table = FeatureTable::new(names.clone(), features).unwrap();
    let m = standardize(&CentroidMatrix::from_rows(names.clone(), rows).unwrap()).unwrap();
    let group: BTreeSet<String> = names[..12].iter().cloned().collect();
    dimension_analysis(
        &m,
        &group,
        &table,
        &AnalysisOptions::default(),
        Execution::Parallel,
    )
    .unwrap()
    .sig_dims_fdr()
    .len()
}

#[test]
fn null_groups_rarely_yield_significant_dimensions() {
    let seeds = 200;
    let hits = (0..seeds)
        .filter(|&s| null_analysis(1000 + s, 100) > 0)
        .count();
    let rate = hits as f64 / seeds as f64;
    // 0.05 plus three binomial standard errors
    assert!(
        rate <= 0.05 + 3.0 * (0.05f64 * 0.95 / seeds as f64).sqrt(),
        "rate {rate}"
    );
}

#[test]
fn dimension_analysis_ignores_language_and_dimension_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (l, d) = (30, 40);
    let names = ids(l);
    let rows: Vec<Vec<f64>> = (0..l)
        .map(|i| {
            let mut r = normals(&mut rng, d);
            if i < 10 {
                r[3] += 3.0;
                r[11] += 2.5;
            }
            r
        })
        .collect();
    let features: Vec<LanguageFeatureVector> = rows
        .iter()
        .map(|r| {
            let mut v: [f64; FEATURE_COUNT] =
                std::array::from_fn(|_| StandardNormal.sample(&mut rng));
            v[4] = r[3] + 0.3 * v[4];
            LanguageFeatureVector(v)
        })
        .collect();
    let group: BTreeSet<String> = names[..10].iter().cloned().collect();
    let opts = AnalysisOptions::default();
    let table = FeatureTable::new(names.clone(), features.clone()).unwrap();
    let base = dimension_analysis(
        &standardize(&CentroidMatrix::from_rows(names.clone(), rows.clone()).unwrap()).unwrap(),
        &group,
        &table,
        &opts,
        Execution::Sequential,
    )
    .unwrap();

    let lang_perm: Vec<usize> = (0..l).rev().collect();
    let dim_perm: Vec<usize> = (0..d).map(|k| (k * 7) % d).collect();
    let permuted_rows: Vec<Vec<f64>> = lang_perm
        .iter()
        .map(|&i| dim_perm.iter().map(|&k| rows[i][k]).collect())
        .collect();
    let permuted_names: Vec<String> = lang_perm.iter().map(|&i| names[i].clone()).collect();
    let permuted_table = FeatureTable::new(
        permuted_names.clone(),
        lang_perm.iter().map(|&i| features[i]).collect(),
    )
    .unwrap();
    let other = dimension_analysis(
        &standardize(&CentroidMatrix::from_rows(permuted_names, permuted_rows).unwrap()).unwrap(),
        &group,
        &permuted_table,
        &opts,
        Execution::Parallel,
    )
    .unwrap();

    let relabel =
        |dims: &[usize]| -> BTreeSet<usize> { dims.iter().map(|&k| dim_perm[k]).collect() };
    assert_eq!(
        relabel(other.sig_dims_fdr()),
        base.sig_dims_fdr().iter().copied().collect()
    );
    assert_eq!(
        relabel(other.sig_dims_bonf()),
        base.sig_dims_bonf().iter().copied().collect()
    );
    assert!(base.sig_dims_bonf().contains(&3));
    for (a, b) in base
        .fdr
        .feature_frequency
        .iter()
        .zip(&other.fdr.feature_frequency)
    {
        assert!((a - b).abs() < 1e-9);
    }
    let bonf: BTreeSet<usize> = base.sig_dims_bonf().iter().copied().collect();
    let fdr: BTreeSet<usize> = base.sig_dims_fdr().iter().copied().collect();
    assert!(bonf.is_subset(&fdr));
}

#[test]
fn bootstrap_supports_are_fractions_of_replicates() {
    let corpus = synth::hierarchical(&HierarchyConfig {
        clips: 3,
        dim: 6,
        subfamily_sd: 1.0,
        language_sd: 1.0,
        clip_sd: 2.0,
        ..Default::default()
    })
    .unwrap();
    let order = corpus.lang_ids();
    let reference =
        ward(&standardize(&build_matrix(&corpus.set, &order).unwrap()).unwrap()).unwrap();
    let cfg = BootstrapConfig {
        replicates: 20,
        base_seed: 3,
        restandardize: true,
    };
    let table = bootstrap_support(&corpus.set, &reference, &cfg, Execution::Parallel).unwrap();
    assert_eq!(table.len(), reference.clades().len());
    for (clade, s) in table.supports() {
        assert!((0.0..=1.0).contains(&s));
        let count = table.count(&clade).unwrap();
        assert_eq!(s, count as f64 / 20.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn emb1_round_trip(dim in 1usize..40, values in prop::collection::vec(-1e6f32..1e6, 1..400)) {
        let count = values.len() / dim;
        prop_assume!(count > 0);
        let rows: Vec<Vec<f64>> = values
            .chunks_exact(dim)
            .map(|c| c.iter().map(|&v| f64::from(v)).collect())
            .collect();
        let frag = EmbeddingFragment::new(rows).unwrap();
        let bytes = encode_embeddings(&frag).unwrap();
        prop_assert_eq!(bytes.len(), 16 + 4 * dim * count);
        prop_assert_eq!(decode_embeddings(&bytes).unwrap(), frag);
    }
}
