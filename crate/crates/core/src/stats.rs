//! Two-sample tests, correlation tests, multiple-comparison corrections and
//! the POA-vs-rest dimension and acoustic analyses built on them.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::acoustics::{FeatureTable, FEATURE_COUNT, FEATURE_NAMES};
use crate::centroid::CentroidMatrix;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::special::{normal_sf, student_t_two_sided};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub df: Option<f64>,
    /// Sign of group A minus group B (-1, 0 or 1).
    pub direction: i8,
    /// Set when a convention replaced the usual formula (e.g. zero variance).
    pub degenerate: bool,
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance (divisor n − 1).
fn sample_var(x: &[f64], m: f64) -> f64 {
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

fn check_finite(x: &[f64]) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid("samples must be finite"))
    }
}

/// Handles the zero-standard-error case shared by both t-test variants.
fn zero_se(diff: f64, df: f64) -> TestResult {
    if diff == 0.0 {
        TestResult {
            statistic: 0.0,
            p_value: 1.0,
            df: Some(df),
            direction: 0,
            degenerate: true,
        }
    } else {
        TestResult {
            statistic: diff.signum() * f64::INFINITY,
            p_value: 0.0,
            df: Some(df),
            direction: sign(diff),
            degenerate: true,
        }
    }
}

/// Welch's unequal-variance t-test, two-sided.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::invalid("each group needs at least two observations"));
    }
    check_finite(a)?;
    check_finite(b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (sample_var(a, ma), sample_var(b, mb));
    let (qa, qb) = (va / na, vb / nb);
    let se2 = qa + qb;
    let diff = ma - mb;
    if se2 == 0.0 {
        return Ok(zero_se(diff, na + nb - 2.0));
    }
    let t = diff / se2.sqrt();
    let df = se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
    Ok(TestResult {
        statistic: t,
        p_value: student_t_two_sided(t, df),
        df: Some(df),
        direction: sign(diff),
        degenerate: false,
    })
}

/// Student's pooled-variance t-test, two-sided.
pub fn student_t_test(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::invalid("each group needs at least two observations"));
    }
    check_finite(a)?;
    check_finite(b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (mean(a), mean(b));
    let df = na + nb - 2.0;
    let pooled = ((na - 1.0) * sample_var(a, ma) + (nb - 1.0) * sample_var(b, mb)) / df;
    let se2 = pooled * (1.0 / na + 1.0 / nb);
    let diff = ma - mb;
    if se2 == 0.0 {
        return Ok(zero_se(diff, df));
    }
    let t = diff / se2.sqrt();
    Ok(TestResult {
        statistic: t,
        p_value: student_t_two_sided(t, df),
        df: Some(df),
        direction: sign(diff),
        degenerate: false,
    })
}

/// Pearson correlation with a two-sided t-based p-value. `statistic` is r.
pub fn pearson_test(x: &[f64], y: &[f64]) -> Result<TestResult> {
    if x.len() != y.len() {
        return Err(Error::invalid("x and y must have equal length"));
    }
    if x.len() < 3 {
        return Err(Error::invalid(
            "correlation test needs at least three pairs",
        ));
    }
    check_finite(x)?;
    check_finite(y)?;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate(
            "zero variance in correlation input".into(),
        ));
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = x.len() as f64 - 2.0;
    let p = if r.abs() == 1.0 {
        0.0
    } else {
        student_t_two_sided(r * (df / (1.0 - r * r)).sqrt(), df)
    };
    Ok(TestResult {
        statistic: r,
        p_value: p,
        df: Some(df),
        direction: sign(r),
        degenerate: false,
    })
}

fn check_p(p: &[f64]) -> Result<()> {
    if p.iter().all(|v| (0.0..=1.0).contains(v)) {
        Ok(())
    } else {
        Err(Error::invalid("p-values must lie in [0, 1]"))
    }
}

/// Benjamini–Hochberg step-up procedure. Returns rejected indices, ascending.
pub fn bh_fdr(p_values: &[f64], alpha: f64) -> Result<Vec<usize>> {
    check_p(p_values)?;
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));
    let cutoff = (1..=m)
        .rev()
        .find(|&k| p_values[order[k - 1]] <= k as f64 * alpha / m as f64)
        .map(|k| p_values[order[k - 1]]);
    Ok(match cutoff {
        Some(c) => (0..m).filter(|&i| p_values[i] <= c).collect(),
        None => Vec::new(),
    })
}

/// Bonferroni: reject p ≤ α/m. Returns rejected indices, ascending.
pub fn bonferroni(p_values: &[f64], alpha: f64) -> Result<Vec<usize>> {
    check_p(p_values)?;
    let m = p_values.len() as f64;
    Ok((0..p_values.len())
        .filter(|&i| p_values[i] <= alpha / m)
        .collect())
}

/// Midranks (1-based) of the pooled sample plus the tie-group sizes.
fn midranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        if j - i > 1 {
            ties.push(j - i);
        }
        i = j;
    }
    (ranks, ties)
}

/// Number of ways to pick `na` of the ranks `1..=na+nb` with each rank sum,
/// indexed by U = rank sum − na(na+1)/2.
fn u_distribution(na: usize, nb: usize) -> Vec<u64> {
    // counts[k][u] over prefixes; classic recurrence on the largest element
    let max_u = na * nb;
    let mut table = vec![vec![0u64; max_u + 1]; na + 1];
    table[0][0] = 1;
    for n_seen in 1..=(na + nb) {
        for k in (1..=na.min(n_seen)).rev() {
            // choosing element n_seen as the k-th pick adds (n_seen - k) to U
            let add = n_seen - k;
            if add > nb {
                continue;
            }
            for u in (add..=max_u).rev() {
                table[k][u] += table[k - 1][u - add];
            }
        }
    }
    table.swap_remove(na)
}

/// Exact two-sided p for an untied U: `min(1, 2·min(P(U ≤ u), P(U ≥ u)))`.
pub fn mann_whitney_exact_p(u: f64, na: usize, nb: usize) -> f64 {
    let dist = u_distribution(na, nb);
    let total: u64 = dist.iter().sum();
    let u = u.round() as usize;
    let lower: u64 = dist[..=u].iter().sum();
    let upper: u64 = dist[u..].iter().sum();
    (2.0 * lower.min(upper) as f64 / total as f64).min(1.0)
}

/// Mann–Whitney U test. `statistic` is U for group A. Exact when the pooled
/// sample has at most 14 values and no ties, otherwise a tie-corrected normal
/// approximation with continuity correction.
pub fn mann_whitney(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("both groups must be non-empty"));
    }
    check_finite(a)?;
    check_finite(b)?;
    let (na, nb) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let ra: f64 = ranks[..na].iter().sum();
    let u = ra - (na * (na + 1)) as f64 / 2.0;
    let mu = (na * nb) as f64 / 2.0;
    let direction = sign(u - mu);
    if ties.is_empty() && na + nb <= 14 {
        return Ok(TestResult {
            statistic: u,
            p_value: mann_whitney_exact_p(u, na, nb),
            df: None,
            direction,
            degenerate: false,
        });
    }
    let n = (na + nb) as f64;
    let tie_term: f64 = ties
        .iter()
        .map(|&t| {
            let t = t as f64;
            t * t * t - t
        })
        .sum();
    let var = (na * nb) as f64 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var <= 0.0 {
        return Ok(TestResult {
            statistic: u,
            p_value: 1.0,
            df: None,
            direction,
            degenerate: true,
        });
    }
    let z = ((u - mu).abs() - 0.5).max(0.0) / var.sqrt();
    Ok(TestResult {
        statistic: u,
        p_value: (2.0 * normal_sf(z)).min(1.0),
        df: None,
        direction,
        degenerate: false,
    })
}

/// Cohen's d with the pooled sample standard deviation.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() || a.len() + b.len() < 3 {
        return Err(Error::invalid("groups too small for a pooled variance"));
    }
    check_finite(a)?;
    check_finite(b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (mean(a), mean(b));
    let ss = |x: &[f64], m: f64| x.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
    let pooled = (ss(a, ma) + ss(b, mb)) / (na + nb - 2.0);
    if pooled <= 0.0 {
        return Err(Error::Degenerate("zero pooled variance".into()));
    }
    Ok((ma - mb) / pooled.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TTestKind {
    #[default]
    Welch,
    Student,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisOptions {
    pub alpha: f64,
    pub t_test: TTestKind,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            t_test: TTestKind::Welch,
        }
    }
}

/// Correction stringency applied to both analysis stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Correction {
    Fdr,
    Bonferroni,
}

impl Correction {
    pub fn apply(self, p: &[f64], alpha: f64) -> Result<Vec<usize>> {
        match self {
            Correction::Fdr => bh_fdr(p, alpha),
            Correction::Bonferroni => bonferroni(p, alpha),
        }
    }
}

/// Per-level result: significant dimensions and the share of them that
/// correlate significantly with each acoustic feature.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelAnalysis {
    pub sig_dims: Vec<usize>,
    /// Percent of `sig_dims` correlating with each feature, in feature order.
    pub feature_frequency: [f64; FEATURE_COUNT],
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimensionAnalysis {
    pub n_dims: usize,
    pub dim_tests: Vec<TestResult>,
    pub fdr: LevelAnalysis,
    pub bonferroni: LevelAnalysis,
}

impl DimensionAnalysis {
    pub fn sig_dims_fdr(&self) -> &[usize] {
        &self.fdr.sig_dims
    }

    pub fn sig_dims_bonf(&self) -> &[usize] {
        &self.bonferroni.sig_dims
    }

    /// Table with a significant-dimension count row followed by one row per
    /// feature; zero frequencies print as `--`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("row\tFDR\tBonf.\n");
        writeln!(
            out,
            "Sig. Dimensions\t{}\t{}",
            self.fdr.sig_dims.len(),
            self.bonferroni.sig_dims.len()
        )
        .unwrap();
        let cell = |v: f64| {
            if v == 0.0 {
                "--".to_string()
            } else {
                format!("{v:.1}")
            }
        };
        for (i, name) in crate::acoustics::FEATURE_DISPLAY_NAMES.iter().enumerate() {
            writeln!(
                out,
                "{name}\t{}\t{}",
                cell(self.fdr.feature_frequency[i]),
                cell(self.bonferroni.feature_frequency[i])
            )
            .unwrap();
        }
        out
    }
}

/// Splits row indices of `lang_ids` into (group, rest).
fn split_groups(lang_ids: &[String], group: &BTreeSet<String>) -> Result<(Vec<usize>, Vec<usize>)> {
    if let Some(missing) = group.iter().find(|g| !lang_ids.contains(g)) {
        return Err(Error::MissingLanguage(missing.clone()));
    }
    let (inside, outside): (Vec<usize>, Vec<usize>) =
        (0..lang_ids.len()).partition(|&i| group.contains(&lang_ids[i]));
    if inside.is_empty() || outside.is_empty() {
        return Err(Error::Degenerate(
            "target group must be a non-empty proper subset".into(),
        ));
    }
    Ok((inside, outside))
}

fn stage_two(
    centroids: &CentroidMatrix,
    features: &[[f64; FEATURE_COUNT]],
    sig_dims: &[usize],
    correction: Correction,
    alpha: f64,
    exec: Execution,
) -> Result<LevelAnalysis> {
    let mut freq = [0.0; FEATURE_COUNT];
    if sig_dims.is_empty() {
        return Ok(LevelAnalysis {
            sig_dims: Vec::new(),
            feature_frequency: freq,
        });
    }
    let feature_cols: Vec<Vec<f64>> = (0..FEATURE_COUNT)
        .map(|f| features.iter().map(|row| row[f]).collect())
        .collect();
    // p-values laid out dim-major: index = s * FEATURE_COUNT + f
    let p: Vec<f64> = exec
        .try_map(sig_dims.len(), |s| {
            let col = centroids.column(sig_dims[s]);
            feature_cols
                .iter()
                .map(|fc| match pearson_test(&col, fc) {
                    Ok(r) => Ok(r.p_value),
                    Err(Error::Degenerate(_)) => Ok(1.0),
                    Err(e) => Err(e),
                })
                .collect::<Result<Vec<f64>>>()
        })?
        .into_iter()
        .flatten()
        .collect();
    for idx in correction.apply(&p, alpha)? {
        freq[idx % FEATURE_COUNT] += 1.0;
    }
    let denom = sig_dims.len() as f64;
    freq.iter_mut().for_each(|v| *v = 100.0 * *v / denom);
    Ok(LevelAnalysis {
        sig_dims: sig_dims.to_vec(),
        feature_frequency: freq,
    })
}

/// Per-dimension group tests followed by dimension × feature correlations,
/// at FDR and Bonferroni stringency.
pub fn dimension_analysis(
    centroids: &CentroidMatrix,
    group: &BTreeSet<String>,
    features: &FeatureTable,
    options: &AnalysisOptions,
    exec: Execution,
) -> Result<DimensionAnalysis> {
    let lang_ids = centroids.lang_ids();
    let (inside, outside) = split_groups(lang_ids, group)?;
    let feature_rows = features.aligned_rows(lang_ids)?;
    let test = match options.t_test {
        TTestKind::Welch => welch_t_test,
        TTestKind::Student => student_t_test,
    };
    let dim_tests = exec.try_map(centroids.dim(), |d| {
        let a: Vec<f64> = inside.iter().map(|&r| centroids.get(r, d)).collect();
        let b: Vec<f64> = outside.iter().map(|&r| centroids.get(r, d)).collect();
        test(&a, &b)
    })?;
    let p: Vec<f64> = dim_tests.iter().map(|t| t.p_value).collect();
    let fdr_dims = bh_fdr(&p, options.alpha)?;
    let bonf_dims = bonferroni(&p, options.alpha)?;
    Ok(DimensionAnalysis {
        n_dims: centroids.dim(),
        fdr: stage_two(
            centroids,
            &feature_rows,
            &fdr_dims,
            Correction::Fdr,
            options.alpha,
            exec,
        )?,
        bonferroni: stage_two(
            centroids,
            &feature_rows,
            &bonf_dims,
            Correction::Bonferroni,
            options.alpha,
            exec,
        )?,
        dim_tests,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastRow {
    pub feature: &'static str,
    pub display_name: &'static str,
    /// True when the group's median-rank is above the rest (Higher).
    pub higher: bool,
    pub cohens_d: f64,
    pub u: f64,
    pub p_value: f64,
}

impl ContrastRow {
    pub fn direction(&self) -> &'static str {
        if self.higher {
            "Higher"
        } else {
            "Lower"
        }
    }
}

/// Mann–Whitney and Cohen's d for every feature; features constant across
/// both groups are skipped.
pub fn acoustic_contrast(
    features: &FeatureTable,
    group: &BTreeSet<String>,
) -> Result<Vec<ContrastRow>> {
    let ids = features.lang_ids();
    let (inside, outside) = split_groups(ids, group)?;
    let mut rows = Vec::new();
    let names = FEATURE_NAMES
        .iter()
        .zip(crate::acoustics::FEATURE_DISPLAY_NAMES.iter());
    for (f, (&feature, &display_name)) in names.enumerate() {
        let a: Vec<f64> = inside.iter().map(|&r| features.row(r)[f]).collect();
        let b: Vec<f64> = outside.iter().map(|&r| features.row(r)[f]).collect();
        let d = match cohens_d(&a, &b) {
            Ok(d) => d,
            Err(Error::Degenerate(_)) => continue,
            Err(e) => return Err(e),
        };
        let mw = mann_whitney(&a, &b)?;
        rows.push(ContrastRow {
            feature,
            display_name,
            higher: d > 0.0,
            cohens_d: d,
            u: mw.statistic,
            p_value: mw.p_value,
        });
    }
    Ok(rows)
}

/// Rows passing `p < max_p` and `|d| > min_abs_d`.
pub fn filter_contrast(rows: &[ContrastRow], max_p: f64, min_abs_d: f64) -> Vec<ContrastRow> {
    rows.iter()
        .filter(|r| r.p_value < max_p && r.cohens_d.abs() > min_abs_d)
        .cloned()
        .collect()
}

pub fn contrast_tsv(rows: &[ContrastRow]) -> String {
    let mut out = String::from("feature\tdirection\tcohens_d\tU\tp_value\n");
    for r in rows {
        writeln!(
            out,
            "{}\t{}\t{:+.2}\t{}\t{:e}",
            r.display_name,
            r.direction(),
            r.cohens_d,
            r.u,
            r.p_value
        )
        .unwrap();
    }
    out
}
