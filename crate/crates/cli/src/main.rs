use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use langtree::acoustics::{extract_feature_table, FeatureTable, FrameSpec};
use langtree::boot::{bootstrap_support, consensus_report, BootstrapConfig};
use langtree::centroid::{build_matrix, standardize, CentroidMatrix};
use langtree::cluster::{to_newick, ward, Dendrogram};
use langtree::corpus::{
    load_embedding_set, load_manifest, write_embeddings, write_sidecar, Manifest,
};
use langtree::metrics::{sweep_k, target_sweep_tsv, truth_partition, TruthLevel};
use langtree::projection::{pca_fit_project, scores_tsv};
use langtree::render::{dendrogram_svg, scatter_svg};
use langtree::stats::{
    acoustic_contrast, contrast_tsv, dimension_analysis, filter_contrast, AnalysisOptions,
    TTestKind,
};
use langtree::{with_threads, Execution};
use log::{info, warn};
use serde::Serialize;
use sha2::{Digest, Sha256};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser, Debug)]
#[command(
    name = "langtree",
    version,
    about = "Language trees from speech-model clip embeddings"
)]
struct Cli {
    #[command(flatten)]
    opts: Options,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Per-language centroid matrix as EMB1 (+ sidecar of language ids)
    Centroids,
    /// Ward dendrogram as Newick and SVG
    Cluster,
    /// ARI/NMI against the reference taxonomy for each K
    Sweep,
    /// Clip-level bootstrap support for the reference tree
    Bootstrap,
    /// Precision/recall of the best cluster for the target group at each K
    TargetEval,
    /// 30 acoustic features per language from the manifest's WAV clips
    Features,
    /// Embedding dimensions separating the target group, and their acoustic correlates
    Dims,
    /// Mann-Whitney contrast of acoustic features between target group and the rest
    AcousticTest,
    /// 2-D PCA projection of the centroids
    Pca,
    /// Every artifact above
    All,
}

#[derive(Args, Debug, Clone, Serialize)]
struct Options {
    /// Corpus manifest (JSON)
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Bootstrap replicates
    #[arg(long, global = true, default_value_t = 1000)]
    replicates: usize,
    #[arg(long, global = true, default_value_t = 2)]
    k_min: usize,
    #[arg(long, global = true, default_value_t = 20)]
    k_max: usize,
    /// Significance level for both correction stages
    #[arg(long, global = true, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, global = true, default_value = "POA")]
    target_tag: String,
    /// Worker threads (default: all cores); results do not depend on it
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Pooled-variance t-test instead of Welch
    #[arg(long, global = true)]
    student: bool,
    /// Cluster raw centroids instead of column-standardized ones
    #[arg(long, global = true)]
    raw_centroids: bool,
    /// Score clusterings against families instead of subfamilies
    #[arg(long, global = true)]
    family_level: bool,
    /// Precomputed feature TSV (skips audio extraction)
    #[arg(long, global = true)]
    features: Option<PathBuf>,
    /// Support level counted as well supported in the bootstrap summary
    #[arg(long, global = true, default_value_t = 0.5)]
    threshold: f64,
    /// Acoustic contrast filter: keep rows with p below this
    #[arg(long, global = true, default_value_t = 0.001)]
    max_p: f64,
    /// Acoustic contrast filter: keep rows with |d| above this
    #[arg(long, global = true, default_value_t = 0.5)]
    min_d: f64,
    #[arg(long, global = true, default_value_t = langtree::acoustics::DEFAULT_TARGET_RMS)]
    target_rms: f64,
    #[arg(long, global = true, default_value_t = 400)]
    window_len: usize,
    #[arg(long, global = true, default_value_t = 160)]
    hop: usize,
    #[arg(long, global = true, default_value_t = 512)]
    fft_size: usize,
}

impl Options {
    /// Hash of everything that can change an output's content. The output
    /// directory and thread count are excluded.
    fn config_hash(&self) -> String {
        let mut keyed = self.clone();
        keyed.out = PathBuf::new();
        keyed.threads = None;
        let json = serde_json::to_string(&keyed).expect("options serialize");
        Sha256::digest(json.as_bytes())
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    fn frame_spec(&self) -> FrameSpec {
        FrameSpec {
            window_len: self.window_len,
            hop: self.hop,
            fft_size: self.fft_size,
        }
    }

    fn analysis(&self) -> AnalysisOptions {
        AnalysisOptions {
            alpha: self.alpha,
            t_test: if self.student {
                TTestKind::Student
            } else {
                TTestKind::Welch
            },
        }
    }

    fn truth_level(&self) -> TruthLevel {
        if self.family_level {
            TruthLevel::Family
        } else {
            TruthLevel::Subfamily
        }
    }
}

#[derive(Debug)]
enum Failure {
    Invalid(String),
    Io(String),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Invalid(m) | Failure::Io(m) => f.write_str(m),
        }
    }
}

impl From<langtree::Error> for Failure {
    fn from(e: langtree::Error) -> Self {
        if e.is_io() {
            Failure::Io(e.to_string())
        } else {
            Failure::Invalid(e.to_string())
        }
    }
}

type Res<T> = Result<T, Failure>;

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Invalid(msg.into())
}

#[derive(Serialize)]
struct RunRecord<'a> {
    tool: &'static str,
    version: &'static str,
    args: Vec<String>,
    config_hash: &'a str,
    options: &'a Options,
}

/// Loaded inputs shared by the subcommands, built on first use.
struct Run {
    opts: Options,
    hash: String,
    manifest: Option<Manifest>,
    matrix: Option<CentroidMatrix>,
    tree: Option<Dendrogram>,
    features: Option<FeatureTable>,
}

impl Run {
    fn header(&self, prefix: &str) -> String {
        format!("{prefix} langtree {VERSION} config={}", self.hash)
    }

    fn write(&self, name: &str, body: &str) -> Res<()> {
        let path = self.opts.out.join(name);
        let text = if name.ends_with(".nwk") {
            format!("[{}]\n{body}\n", self.header("").trim_start())
        } else if name.ends_with(".svg") {
            format!("<!--{} -->\n{body}", self.header(""))
        } else {
            format!("{}\n{body}", self.header("#"))
        };
        write_file(&path, &text)?;
        info!("wrote {}", path.display());
        Ok(())
    }

    fn manifest(&mut self) -> Res<&Manifest> {
        if self.manifest.is_none() {
            let path = self
                .opts
                .manifest
                .as_ref()
                .ok_or_else(|| invalid("--manifest is required for this command"))?;
            self.manifest = Some(load_manifest(path)?);
        }
        Ok(self.manifest.as_ref().unwrap())
    }

    fn matrix(&mut self) -> Res<&CentroidMatrix> {
        if self.matrix.is_none() {
            let manifest = self.manifest()?;
            let order = manifest.lang_ids();
            let set = load_embedding_set(manifest, Execution::Parallel)?;
            let raw = build_matrix(&set, &order)?;
            let m = if self.opts.raw_centroids {
                raw
            } else {
                let m = standardize(&raw)?;
                if !m.zero_variance_columns().is_empty() {
                    warn!(
                        "{} zero-variance columns set to 0",
                        m.zero_variance_columns().len()
                    );
                }
                m
            };
            self.matrix = Some(m);
        }
        Ok(self.matrix.as_ref().unwrap())
    }

    fn tree(&mut self) -> Res<&Dendrogram> {
        if self.tree.is_none() {
            let t = ward(self.matrix()?)?;
            self.tree = Some(t);
        }
        Ok(self.tree.as_ref().unwrap())
    }

    fn target(&mut self) -> Res<BTreeSet<String>> {
        let tag = self.opts.target_tag.clone();
        let target = self.manifest()?.tagged(&tag);
        if target.is_empty() {
            return Err(invalid(format!("no language carries the tag `{tag}`")));
        }
        Ok(target)
    }

    fn features(&mut self) -> Res<&FeatureTable> {
        if self.features.is_none() {
            let table = match &self.opts.features {
                Some(path) => {
                    let text = fs::read_to_string(path)
                        .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
                    FeatureTable::parse_tsv(&text)?
                }
                None => {
                    let spec = self.opts.frame_spec();
                    spec.validate()?;
                    let rms = self.opts.target_rms;
                    extract_feature_table(self.manifest()?, &spec, rms, Execution::Parallel)?
                }
            };
            self.features = Some(table);
        }
        Ok(self.features.as_ref().unwrap())
    }

    fn k_range(&mut self) -> Res<(usize, usize)> {
        let n = self.tree()?.n_leaves();
        let (k_min, mut k_max) = (self.opts.k_min, self.opts.k_max);
        if k_max > n {
            warn!("--k-max {k_max} exceeds {n} languages; using {n}");
            k_max = n;
        }
        if k_min < 2 || k_min > k_max {
            return Err(invalid(format!(
                "K range {k_min}..={k_max} is empty or below 2"
            )));
        }
        Ok((k_min, k_max))
    }

    fn centroids(&mut self) -> Res<()> {
        let out = self.opts.out.join("centroids.emb");
        let m = self.matrix()?;
        write_embeddings(&m.to_fragment(), &out)?;
        write_sidecar(&out, m.lang_ids())?;
        info!("wrote {} ({} x {})", out.display(), m.n_rows(), m.dim());
        Ok(())
    }

    fn cluster(&mut self) -> Res<()> {
        let tree = self.tree()?;
        let newick = to_newick(tree, None)?;
        let svg = dendrogram_svg(&tree.to_display_tree(None)?, "Ward dendrogram");
        self.write("dendrogram.nwk", &newick)?;
        self.write("dendrogram.svg", &svg)
    }

    fn sweep(&mut self) -> Res<()> {
        let (k_min, k_max) = self.k_range()?;
        let level = self.opts.truth_level();
        let order = self.matrix()?.lang_ids().to_vec();
        let truth = truth_partition(&self.manifest()?.languages, &order, level)?;
        let result = sweep_k(self.tree()?, &truth, k_min, k_max)?;
        let (a, n) = (result.best_ari(), result.best_nmi());
        info!(
            "best ARI {:.3} at K={}, best NMI {:.3} at K={}",
            a.ari, a.k, n.nmi, n.k
        );
        self.write("sweep.tsv", &result.to_tsv())
    }

    fn bootstrap(&mut self) -> Res<()> {
        let cfg = BootstrapConfig {
            replicates: self.opts.replicates,
            base_seed: self.opts.seed,
            restandardize: !self.opts.raw_centroids,
        };
        let threshold = self.opts.threshold;
        self.tree()?;
        let set = load_embedding_set(self.manifest()?, Execution::Parallel)?;
        let tree = self.tree.as_ref().unwrap();
        let table = bootstrap_support(&set, tree, &cfg, Execution::Parallel)?;
        let report = consensus_report(tree, &table, threshold)?;
        info!(
            "{} of {} clades above {:.0}% support",
            report.above_threshold,
            report.total,
            100.0 * threshold
        );
        let supports = table.supports();
        let newick = to_newick(tree, Some(&supports))?;
        let svg = dendrogram_svg(
            &tree.to_display_tree(Some(&supports))?,
            &format!("Bootstrap support ({} replicates)", cfg.replicates),
        );
        let tsv = table.to_tsv(tree);
        self.write("bootstrap.nwk", &newick)?;
        self.write("bootstrap.svg", &svg)?;
        self.write("bootstrap_support.tsv", &tsv)
    }

    fn target_eval(&mut self) -> Res<()> {
        let (k_min, k_max) = self.k_range()?;
        let target = self.target()?;
        let tsv = target_sweep_tsv(self.tree()?, &target, k_min, k_max)?;
        self.write("target_eval.tsv", &tsv)
    }

    fn features_cmd(&mut self) -> Res<()> {
        let tsv = self.features()?.to_tsv();
        self.write("features.tsv", &tsv)
    }

    fn dims(&mut self) -> Res<()> {
        let target = self.target()?;
        let opts = self.opts.analysis();
        self.features()?;
        self.matrix()?;
        let matrix = self.matrix.as_ref().unwrap();
        let features = self.features.as_ref().unwrap();
        let res = dimension_analysis(matrix, &target, features, &opts, Execution::Parallel)?;
        info!(
            "{} FDR / {} Bonferroni significant dimensions of {}",
            res.sig_dims_fdr().len(),
            res.sig_dims_bonf().len(),
            res.n_dims
        );
        self.write("dims.tsv", &res.to_tsv())
    }

    fn acoustic_test(&mut self) -> Res<()> {
        let target = self.target()?;
        let rows = acoustic_contrast(self.features()?, &target)?;
        let kept = filter_contrast(&rows, self.opts.max_p, self.opts.min_d);
        info!(
            "{} of {} features pass the contrast filter",
            kept.len(),
            rows.len()
        );
        self.write("acoustic_contrast.tsv", &contrast_tsv(&kept))
    }

    fn pca(&mut self) -> Res<()> {
        let (model, scores) = pca_fit_project(self.matrix()?, 2)?;
        let order = self.matrix()?.lang_ids().to_vec();
        let manifest = self.manifest()?;
        let families: Vec<String> = order
            .iter()
            .map(|id| {
                manifest.languages[manifest.index_of(id).unwrap()]
                    .family
                    .clone()
            })
            .collect();
        let ratios: Vec<String> = model
            .explained_variance_ratio
            .iter()
            .map(|r| format!("{r}"))
            .collect();
        let tsv = format!(
            "# explained_variance_ratio\t{}\n{}",
            ratios.join("\t"),
            scores_tsv(&order, &families, &scores)
        );
        let points: Vec<[f64; 2]> = scores.iter().map(|s| [s[0], s[1]]).collect();
        let svg = scatter_svg(&order, &families, &points, "PCA of language centroids");
        self.write("pca.tsv", &tsv)?;
        self.write("pca.svg", &svg)
    }

    fn all(&mut self) -> Res<()> {
        self.centroids()?;
        self.cluster()?;
        self.sweep()?;
        self.bootstrap()?;
        self.target_eval()?;
        let has_features = self.opts.features.is_some() || self.manifest()?.has_audio();
        if has_features {
            self.features_cmd()?;
            self.dims()?;
            self.acoustic_test()?;
        } else {
            warn!("no audio in the manifest and no --features; skipping features, dims and acoustic-test");
        }
        self.pca()
    }

    fn execute(&mut self, command: Command) -> Res<()> {
        match command {
            Command::Centroids => self.centroids(),
            Command::Cluster => self.cluster(),
            Command::Sweep => self.sweep(),
            Command::Bootstrap => self.bootstrap(),
            Command::TargetEval => self.target_eval(),
            Command::Features => self.features_cmd(),
            Command::Dims => self.dims(),
            Command::AcousticTest => self.acoustic_test(),
            Command::Pca => self.pca(),
            Command::All => self.all(),
        }
    }
}

fn write_file(path: &Path, text: &str) -> Res<()> {
    fs::write(path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn validate(opts: &Options) -> Res<()> {
    if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
        return Err(invalid("--alpha must lie in (0, 1)"));
    }
    if !(0.0..=1.0).contains(&opts.threshold) {
        return Err(invalid("--threshold must lie in [0, 1]"));
    }
    if opts.replicates == 0 {
        return Err(invalid("--replicates must be at least 1"));
    }
    if opts.threads == Some(0) {
        return Err(invalid("--threads must be at least 1"));
    }
    if !(opts.target_rms > 0.0 && opts.target_rms.is_finite()) {
        return Err(invalid("--target-rms must be positive"));
    }
    Ok(())
}

fn run(cli: Cli) -> Res<()> {
    validate(&cli.opts)?;
    let hash = cli.opts.config_hash();
    fs::create_dir_all(&cli.opts.out)
        .map_err(|e| Failure::Io(format!("{}: {e}", cli.opts.out.display())))?;
    let record = RunRecord {
        tool: "langtree",
        version: VERSION,
        args: std::env::args().collect(),
        config_hash: &hash,
        options: &cli.opts,
    };
    let json = serde_json::to_string_pretty(&record).expect("run record serializes");
    write_file(&cli.opts.out.join("run_config.json"), &(json + "\n"))?;

    let threads = cli.opts.threads;
    let mut state = Run {
        opts: cli.opts,
        hash,
        manifest: None,
        matrix: None,
        tree: None,
        features: None,
    };
    let command = cli.command;
    with_threads(threads, move || state.execute(command))?
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Io(m)) => {
            eprintln!("I/O error: {m}");
            ExitCode::from(2)
        }
    }
}
