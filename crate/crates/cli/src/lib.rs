//! `fdd` command implementations.
//!
//! Exit codes: 0 success, 1 partial failure, 2 usage error, 3 I/O or format
//! error.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use fdd_core::align::{align_and_crop, load_image, read_pose_sidecar, rescale_to_500ppi, AlignedImage, PoseTransform};
use fdd_core::evalkit::{evaluate, load_score_records, write_score_records, ScoreRecord, DEFAULT_FARS};
use fdd_core::format::{load_template, save_template, write_atomic};
use fdd_core::net::{build_graph, DEFAULT_MASK_THRESHOLD};
use fdd_core::{
    fuse, match_binary, match_templates, AnyGallery, BinaryGalleryIndex, CellMask, FddError, FddTemplate, GalleryIndex,
    GalleryLock, Metadata, Network, StoredTemplate, Tensor, WeightStore,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARTIAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "fdd", version, about = "Fixed-length dense fingerprint descriptors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Extract FDD1 templates from fingerprint images.
    Extract(ExtractArgs),
    /// Score two templates against each other.
    Match(MatchArgs),
    /// Rank a gallery against a probe template; prints `rank,id,score` CSV.
    Identify(IdentifyArgs),
    /// Append templates to a gallery file, creating it if needed.
    Enroll(EnrollArgs),
    /// Compute TAR@FAR and rank-k rates from a score CSV.
    Eval(EvalArgs),
    /// Combine two score CSVs by weighted mean.
    Fuse(FuseArgs),
    /// Time extraction and 1:N comparison on synthetic data; prints JSON.
    Bench(BenchArgs),
    /// Write seeded random network weights (for testing the pipeline).
    InitWeights(InitWeightsArgs),
    /// List every network parameter with its shape.
    Manifest(ManifestArgs),
}

#[derive(Args, Debug, Clone, Copy)]
pub struct ThreadArgs {
    /// Worker threads; results do not depend on this.
    #[arg(long, env = "FDD_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    /// Input images (8-bit PGM or PNG).
    #[arg(required = true)]
    pub images: Vec<PathBuf>,
    /// Network weights (FDDW).
    #[arg(long)]
    pub weights: PathBuf,
    /// Channels per descriptor branch.
    #[arg(short, long, default_value_t = 6)]
    pub c: usize,
    /// Output directory; each template is named `<image stem>.fdd`.
    #[arg(short, long)]
    pub out_dir: PathBuf,
    /// Resolution of the input images.
    #[arg(long, default_value_t = 500.0)]
    pub ppi: f64,
    /// Use the image centre with zero rotation instead of pose sidecars.
    #[arg(long)]
    pub identity_pose: bool,
    /// Foreground probability above which a cell is kept.
    #[arg(long, default_value_t = DEFAULT_MASK_THRESHOLD)]
    pub mask_threshold: f64,
    /// Store sign-binarized templates.
    #[arg(long)]
    pub binary: bool,
    #[command(flatten)]
    pub threads: ThreadArgs,
}

#[derive(Args, Debug)]
pub struct MatchArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    /// Compare sign-binarized descriptors.
    #[arg(long)]
    pub binary: bool,
    /// Print the score at full precision.
    #[arg(long)]
    pub raw: bool,
}

#[derive(Args, Debug)]
pub struct IdentifyArgs {
    pub probe: PathBuf,
    pub gallery: PathBuf,
    /// Number of candidates to report.
    #[arg(long, default_value_t = 10)]
    pub top: usize,
    #[arg(long)]
    pub raw: bool,
    #[command(flatten)]
    pub threads: ThreadArgs,
}

#[derive(Args, Debug)]
pub struct EnrollArgs {
    pub gallery: PathBuf,
    #[arg(required = true)]
    pub templates: Vec<PathBuf>,
    /// Identity per template, in order; defaults to the file stem.
    #[arg(long = "id")]
    pub ids: Vec<String>,
    /// Create a binarized gallery when the file does not exist yet.
    #[arg(long)]
    pub binary: bool,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// CSV of `probe_id,gallery_id,score,label`.
    pub scores: PathBuf,
    /// Operating points.
    #[arg(long = "far", value_delimiter = ',', default_values_t = DEFAULT_FARS)]
    pub fars: Vec<f64>,
    /// Largest rank in the CMC curve.
    #[arg(long, default_value_t = 10)]
    pub k_max: usize,
    /// Write the metric table as CSV.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FuseArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    /// Weights for the first and second file.
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.5])]
    pub weights: Vec<f64>,
    /// Output CSV; stdout if omitted.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Gallery size.
    #[arg(short, long, default_value_t = 100_000)]
    pub n: usize,
    #[arg(short, long, default_value_t = 6)]
    pub c: usize,
    /// Probes scored per gallery pass.
    #[arg(long, default_value_t = 16)]
    pub probes: usize,
    /// Network forward passes to time; 0 skips extraction.
    #[arg(long, default_value_t = 1)]
    pub extractions: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub threads: ThreadArgs,
}

#[derive(Args, Debug)]
pub struct InitWeightsArgs {
    #[arg(short, long, default_value_t = 6)]
    pub c: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write all-zero weights instead.
    #[arg(long)]
    pub zeros: bool,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ManifestArgs {
    #[arg(short, long, default_value_t = 6)]
    pub c: usize,
    /// Print activation shapes instead of parameters.
    #[arg(long)]
    pub shapes: bool,
}

/// Invalid argument combination.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Maps an error to its exit code.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<UsageError>().is_some() {
        return EXIT_USAGE;
    }
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<FddError>() {
            return match e {
                FddError::Param(_) => EXIT_USAGE,
                _ => EXIT_IO,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return EXIT_IO;
        }
    }
    EXIT_IO
}

/// Command result: full success or a partial failure with a report.
#[derive(Debug, PartialEq)]
pub enum Outcome {
    Done,
    Partial(Vec<String>),
}

pub fn run(cli: Cli, out: &mut (dyn Write + Send)) -> anyhow::Result<Outcome> {
    match cli.command {
        Command::Extract(a) => with_threads(a.threads, || cmd_extract(&a, out)),
        Command::Match(a) => cmd_match(&a, out),
        Command::Identify(a) => with_threads(a.threads, || cmd_identify(&a, out)),
        Command::Enroll(a) => cmd_enroll(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Fuse(a) => cmd_fuse(&a, out),
        Command::Bench(a) => with_threads(a.threads, || cmd_bench(&a, out)),
        Command::InitWeights(a) => cmd_init_weights(&a, out),
        Command::Manifest(a) => cmd_manifest(&a, out),
    }
}

fn with_threads<R: Send>(t: ThreadArgs, f: impl FnOnce() -> anyhow::Result<R> + Send) -> anyhow::Result<R> {
    match t.threads {
        None => f(),
        Some(0) => Err(usage("--threads must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .context("starting worker threads")?
            .install(f),
    }
}

fn warn(msg: impl fmt::Display) {
    eprintln!("warning: {msg}");
}

fn print_score(out: &mut (dyn Write + Send), score: f64, raw: bool) -> std::io::Result<()> {
    if raw {
        writeln!(out, "{score:?}")
    } else {
        writeln!(out, "{score:.6}")
    }
}

fn check_c(c: usize) -> anyhow::Result<()> {
    if c == 0 || c > u16::MAX as usize {
        return Err(usage(format!("-c must be in 1..={}, got {c}", u16::MAX)));
    }
    Ok(())
}

fn extract_one(net: &Network<f32>, path: &Path, args: &ExtractArgs) -> anyhow::Result<(PathBuf, StoredTemplate<f32>)> {
    let img = rescale_to_500ppi(&load_image::<f32>(path, args.ppi)?);
    let pose = if args.identity_pose {
        PoseTransform::identity_for(img.rows(), img.cols())
    } else {
        read_pose_sidecar(path)?
    };
    let aligned: AlignedImage<f32> = align_and_crop(&img, &pose)?;
    let mut t = net.extract_template(&aligned, args.mask_threshold)?;
    t.meta.insert(
        "source".into(),
        path.file_name().unwrap_or_default().to_string_lossy().into_owned(),
    );
    let stem = path
        .file_stem()
        .ok_or_else(|| anyhow!("{} has no file name", path.display()))?;
    let dest = args.out_dir.join(Path::new(stem).with_extension("fdd"));
    let stored = if args.binary {
        StoredTemplate::Binary(fdd_core::binarize_template(&t))
    } else {
        StoredTemplate::Float(t)
    };
    Ok((dest, stored))
}

pub fn cmd_extract(args: &ExtractArgs, out: &mut (dyn Write + Send)) -> anyhow::Result<Outcome> {
    check_c(args.c)?;
    if !(args.mask_threshold > 0.0 && args.mask_threshold < 1.0) {
        return Err(usage("--mask-threshold must lie in (0, 1)"));
    }
    if !(args.ppi > 0.0 && args.ppi.is_finite()) {
        return Err(usage("--ppi must be positive"));
    }
    let weights = WeightStore::<f32>::load(&args.weights)
        .with_context(|| format!("loading weights {}", args.weights.display()))?;
    let net = Network::new(args.c, weights).context("weights do not fit the network")?;
    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;

    let mut failures = Vec::new();
    for path in &args.images {
        match extract_one(&net, path, args).and_then(|(dest, t)| {
            save_template(&dest, &t)?;
            Ok(dest)
        }) {
            Ok(dest) => writeln!(out, "{} -> {}", path.display(), dest.display())?,
            Err(e) => {
                let line = format!("{}: {e:#}", path.display());
                eprintln!("error: {line}");
                failures.push(line);
            }
        }
    }
    if failures.len() == args.images.len() {
        bail!("no template extracted ({} failures)", failures.len());
    }
    Ok(if failures.is_empty() {
        Outcome::Done
    } else {
        Outcome::Partial(failures)
    })
}

fn read_stored(path: &Path) -> anyhow::Result<StoredTemplate<f32>> {
    load_template::<f32>(path).with_context(|| format!("reading template {}", path.display()))
}

pub fn cmd_match(args: &MatchArgs, out: &mut (dyn Write + Send)) -> anyhow::Result<Outcome> {
    let a = read_stored(&args.a)?;
    let b = read_stored(&args.b)?;
    if a.c() != b.c() {
        return Err(usage(format!("templates have c = {} and c = {}", a.c(), b.c())));
    }
    let result = match (&a, &b, args.binary) {
        (StoredTemplate::Float(x), StoredTemplate::Float(y), false) => match_templates(x, y)?,
        (_, _, false) => return Err(usage("binarized templates need --binary")),
        (x, y, true) => match_binary(&x.to_binary(), &y.to_binary())?,
    };
    if result.empty_overlap {
        warn("masks do not overlap; score is 0");
    }
    print_score(out, result.score, args.raw)?;
    Ok(Outcome::Done)
}

pub fn cmd_identify(args: &IdentifyArgs, out: &mut (dyn Write + Send)) -> anyhow::Result<Outcome> {
    if args.top == 0 {
        return Err(usage("--top must be at least 1"));
    }
    let probe = read_stored(&args.probe)?;
    let gallery = AnyGallery::<f32>::load(&args.gallery)
        .with_context(|| format!("reading gallery {}", args.gallery.display()))?;
    if probe.c() != gallery.c() {
        return Err(usage(format!(
            "probe has c = {}, gallery has c = {}",
            probe.c(),
            gallery.c()
        )));
    }
    if gallery.is_empty() {
        warn("gallery is empty");
    }
    let hits = match (&gallery, &probe) {
        (AnyGallery::Float(g), StoredTemplate::Float(q)) => g.identify(q, args.top)?,
        (AnyGallery::Float(_), StoredTemplate::Binary(_)) => {
            return Err(usage("a binarized probe cannot search a float gallery"))
        }
        (AnyGallery::Binary(g), q) => g.identify_binary(&q.to_binary(), args.top)?,
    };
    writeln!(out, "rank,id,score")?;
    for h in &hits {
        if args.raw {
            writeln!(out, "{},{},{:?}", h.rank, h.id, h.score)?;
        } else {
            writeln!(out, "{},{},{:.6}", h.rank, h.id, h.score)?;
        }
    }
    if hits.iter().any(|h| h.empty_overlap) {
        warn("some candidates share no foreground with the probe");
    }
    Ok(Outcome::Done)
}

pub fn cmd_enroll(args: &EnrollArgs, out: &mut (dyn Write + Send)) -> anyhow::Result<Outcome> {
    if !args.ids.is_empty() && args.ids.len() != args.templates.len() {
        return Err(usage(format!(
            "{} ids given for {} templates",
            args.ids.len(),
            args.templates.len()
        )));
    }
    let templates = args
        .templates
        .iter()
        .map(|p| read_stored(p))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let ids: Vec<String> = if args.ids.is_empty() {
        args.templates
            .iter()
            .map(|p| p.file_stem().unwrap_or_default().to_string_lossy().into_owned())
            .collect()
    } else {
        args.ids.clone()
    };
    if let Some(long) = ids.iter().find(|id| id.len() > u16::MAX as usize) {
        return Err(usage(format!("id of {} bytes is too long", long.len())));
    }

    let _lock = GalleryLock::acquire(&args.gallery)?;
    let mut gallery = if args.gallery.exists() {
        AnyGallery::<f32>::load(&args.gallery).with_context(|| format!("reading gallery {}", args.gallery.display()))?
    } else {
        let c = templates[0].c();
        if args.binary || templates[0].is_binary() {
            AnyGallery::Binary(BinaryGalleryIndex::new(c)?)
        } else {
            AnyGallery::Float(GalleryIndex::new(c)?)
        }
    };
    for (t, id) in templates.iter().zip(&ids) {
        if t.c() != gallery.c() {
            return Err(usage(format!(
                "template `{id}` has c = {}, gallery has c = {}",
                t.c(),
                gallery.c()
            )));
        }
        gallery.enroll(t, id.clone())?;
    }
    gallery
        .save(&args.gallery)
        .with_context(|| format!("writing gallery {}", args.gallery.display()))?;
    writeln!(
        out,
        "enrolled {} templates; gallery holds {}",
        templates.len(),
        gallery.len()
    )?;
    Ok(Outcome::Done)
}

pub fn cmd_eval(args: &EvalArgs, out: &mut (dyn Write + Send)) -> anyhow::Result<Outcome> {
    if args.k_max == 0 {
        return Err(usage("--k-max must be at least 1"));
    }
    if let Some(f) = args.fars.iter().find(|f| !(**f > 0.0 && **f < 1.0)) {
        return Err(usage(format!("--far values must lie in (0, 1), got {f}")));
    }
    let records = load_score_records(&args.scores).with_context(|| format!("reading {}", args.scores.display()))?;
    let report = evaluate(&records, &args.fars, args.k_max)?;
    if report.impostor_count == 0 {
        warn("no impostor scores; TAR@FAR is undefined");
    }
    write!(out, "{}", report.summary())?;
    if let Some(path) = &args.report {
        write_atomic(path, report.to_csv().as_bytes())?;
    }
    Ok(Outcome::Done)
}

pub fn cmd_fuse(args: &FuseArgs, out: &mut (dyn Write + Send)) -> anyhow::Result<Outcome> {
    let &[wa, wb] = args.weights.as_slice() else {
        return Err(usage(format!("--weights takes two values, got {}", args.weights.len())));
    };
    fuse(&[(0.0, wa), (0.0, wb)]).map_err(|e| usage(e.to_string()))?;
    let a = load_score_records(&args.a).with_context(|| format!("reading {}", args.a.display()))?;
    let b = load_score_records(&args.b).with_context(|| format!("reading {}", args.b.display()))?;
    let mut index: HashMap<(&str, &str), &ScoreRecord> = HashMap::with_capacity(b.len());
    for r in &b {
        if index.insert((&r.probe_id, &r.gallery_id), r).is_some() {
            bail!(FddError::Format(format!(
                "duplicate pair {},{} in {}",
                r.probe_id,
                r.gallery_id,
                args.b.display()
            )));
        }
    }
    let mut fused = Vec::with_capacity(a.len());
    let mut unmatched = 0;
    for r in &a {
        let Some(other) = index.remove(&(r.probe_id.as_str(), r.gallery_id.as_str())) else {
            unmatched += 1;
            continue;
        };
        if other.genuine != r.genuine {
            bail!(FddError::Format(format!(
                "labels disagree for pair {},{}",
                r.probe_id, r.gallery_id
            )));
        }
        fused.push(ScoreRecord {
            score: fuse(&[(r.score, wa), (other.score, wb)])?,
            ..r.clone()
        });
    }
    unmatched += index.len();
    let text = write_score_records(&fused);
    match &args.out {
        Some(path) => write_atomic(path, text.as_bytes())?,
        None => out.write_all(text.as_bytes())?,
    }
    if unmatched > 0 {
        warn(format!("{unmatched} pairs present in only one file were dropped"));
        return Ok(Outcome::Partial(vec![format!("{unmatched} unmatched pairs")]));
    }
    Ok(Outcome::Done)
}

/// Timing of one comparison mode.
#[derive(Debug, Serialize)]
pub struct Throughput {
    pub comparisons: u64,
    pub seconds: f64,
    pub comparisons_per_second: f64,
    pub seconds_per_comparison: f64,
}

impl Throughput {
    fn new(comparisons: u64, seconds: f64) -> Self {
        Self {
            comparisons,
            seconds,
            comparisons_per_second: comparisons as f64 / seconds,
            seconds_per_comparison: seconds / comparisons as f64,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct BenchReport {
    pub gallery_size: usize,
    pub c: usize,
    pub probes: usize,
    pub seed: u64,
    pub threads: usize,
    pub enroll_seconds: f64,
    /// Several probes per gallery pass.
    pub float: Throughput,
    /// One probe per gallery pass.
    pub float_single_probe: Throughput,
    pub binary: Throughput,
    pub seconds_per_extraction: Option<f64>,
}

/// Random template with a disc-shaped foreground of random centre and radius.
pub fn synthetic_template(c: usize, rng: &mut impl Rng) -> FddTemplate<f32> {
    let (cy, cx) = (rng.random_range(5.0..11.0), rng.random_range(5.0..11.0));
    let r2: f64 = rng.random_range(5.0f64..9.0).powi(2);
    let mask = CellMask::from_fn(|row, col| (row as f64 - cy).powi(2) + (col as f64 - cx).powi(2) <= r2);
    let data: Vec<f32> = (0..2 * c * 256)
        .map(|i| {
            let v = rng.random_range(-1.0f32..1.0);
            if mask.get_index(i % 256) {
                v
            } else {
                0.0
            }
        })
        .collect();
    FddTemplate::new(
        c,
        Tensor::new((2 * c, 16, 16), data).expect("finite"),
        mask,
        Metadata::new(),
    )
    .expect("masked by construction")
}

pub fn cmd_bench(args: &BenchArgs, out: &mut (dyn Write + Send)) -> anyhow::Result<Outcome> {
    check_c(args.c)?;
    if args.n == 0 || args.probes == 0 {
        return Err(usage("--n and --probes must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let start = Instant::now();
    let mut gallery = GalleryIndex::<f32>::with_capacity(args.c, args.n)?;
    let mut binary = BinaryGalleryIndex::new(args.c)?;
    for i in 0..args.n {
        let t = synthetic_template(args.c, &mut rng);
        binary.enroll(&fdd_core::binarize_template(&t), i.to_string())?;
        gallery.enroll(&t, i.to_string())?;
    }
    let enroll_seconds = start.elapsed().as_secs_f64();
    let probes: Vec<FddTemplate<f32>> = (0..args.probes).map(|_| synthetic_template(args.c, &mut rng)).collect();
    let pairs = (args.n * args.probes) as u64;

    let t0 = Instant::now();
    let hits = gallery.identify_batch(&probes, 10)?;
    let float = Throughput::new(pairs, t0.elapsed().as_secs_f64());

    let t0 = Instant::now();
    let single = gallery.identify(&probes[0], 10)?;
    let float_single_probe = Throughput::new(args.n as u64, t0.elapsed().as_secs_f64());
    if hits[0] != single {
        bail!("batched and single-probe search disagree");
    }

    let bin_probes: Vec<_> = probes.iter().map(fdd_core::binarize_template).collect();
    let t0 = Instant::now();
    for q in &bin_probes {
        binary.identify_binary(q, 10)?;
    }
    let binary_tp = Throughput::new(pairs, t0.elapsed().as_secs_f64());
    drop(gallery);
    drop(binary);

    let seconds_per_extraction = if args.extractions > 0 {
        let graph = build_graph(args.c);
        let net = Network::new(args.c, WeightStore::<f32>::seeded(&graph, args.seed))?;
        let img = AlignedImage::new((0..256 * 256).map(|_| rng.random_range(0.0f32..=1.0)).collect())?;
        let t0 = Instant::now();
        for _ in 0..args.extractions {
            net.extract_template(&img, DEFAULT_MASK_THRESHOLD)?;
        }
        Some(t0.elapsed().as_secs_f64() / args.extractions as f64)
    } else {
        None
    };

    let report = BenchReport {
        gallery_size: args.n,
        c: args.c,
        probes: args.probes,
        seed: args.seed,
        threads: rayon::current_num_threads(),
        enroll_seconds,
        float,
        float_single_probe,
        binary: binary_tp,
        seconds_per_extraction,
    };
    serde_json::to_writer_pretty(&mut *out, &report)?;
    writeln!(out)?;
    Ok(Outcome::Done)
}

pub fn cmd_init_weights(args: &InitWeightsArgs, out: &mut (dyn Write + Send)) -> anyhow::Result<Outcome> {
    check_c(args.c)?;
    let graph = build_graph(args.c);
    let store = if args.zeros {
        WeightStore::<f32>::zeros(&graph)
    } else {
        WeightStore::<f32>::seeded(&graph, args.seed)
    };
    store
        .save(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    writeln!(out, "wrote {} tensors to {}", store.len(), args.out.display())?;
    Ok(Outcome::Done)
}

pub fn cmd_manifest(args: &ManifestArgs, out: &mut (dyn Write + Send)) -> anyhow::Result<Outcome> {
    check_c(args.c)?;
    let graph = build_graph(args.c);
    if args.shapes {
        for (name, (ch, h, w)) in graph.expected_shapes(fdd_core::net::graph::INPUT_SIDE) {
            writeln!(out, "{name}\t{ch}x{h}x{w}")?;
        }
    } else {
        for (name, dims) in graph.manifest() {
            let dims: Vec<String> = dims.iter().map(|d| d.to_string()).collect();
            writeln!(out, "{name}\t{}", dims.join("x"))?;
        }
    }
    Ok(Outcome::Done)
}
