//! Command-line front end: one subcommand per pipeline stage, each reading and
//! writing plain directories so stages can be inspected and re-run.
//!
//! Exit codes: 0 ok, 2 parse, 3 io, 4 constraint, 5 undefined metric.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detection::DetectionSet;
use crate::error::{Error, Result};
use crate::filters::{apply_filter_chain, FilterConfig, FilterReport};
use crate::geometry::BBox;
use crate::interchange::{parse_detection_file, write_detection_file, FILE_SUFFIX};
use crate::labelgen::{
    generate_label_sets, parse_yolo_label_file, parse_yolo_prediction_file, write_label_file, LabelConfig, LabelEntry,
    LabelKind, LabelShape, Variant,
};
use crate::metrics::{evaluate, image_score, EvalInput, EvalReport, ScoredBox};
use crate::simulate::{generate_scene, oracle_auc, oracle_map, oracle_nms, perturb_to_detections, SceneSpec};
use crate::splitter::{split_dataset, verify_split, DatasetManifest, Partition, SplitSpec, Targets};

pub const CONFIG_ENV: &str = "PSEUDOLABEL_CONFIG";
pub const FILTER_REPORT: &str = "filter_report.json";
pub const SPLIT_REPORT: &str = "split_report.json";

#[derive(Debug, Parser)]
#[command(name = "pseudolabel", version, about = "Zero-shot pseudo-label pipeline: filter, label, split, evaluate, simulate")]
pub struct Cli {
    /// TOML config with optional [filter], [labels] and [split] tables.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,

    /// Worker threads; 0 picks the number of CPUs. Output does not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,

    /// Print progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Apply the score/size/mask-area/NMS filter chain to interchange files.
    Filter(FilterArgs),
    /// Write the three YOLO label variants for filtered interchange files.
    Labels(LabelsArgs),
    /// Group-aware train/val/test split of a manifest.
    Split(SplitArgs),
    /// Evaluate predictions against YOLO ground-truth labels.
    Eval(EvalArgs),
    /// Generate a synthetic dataset tree.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct FilterOverrides {
    #[arg(long)]
    pub score_thresh: Option<f64>,
    #[arg(long)]
    pub max_area_frac: Option<f64>,
    #[arg(long)]
    pub min_mask_pixels: Option<u64>,
    #[arg(long)]
    pub nms_iou: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, short)]
    pub output: PathBuf,
    #[command(flatten)]
    pub overrides: FilterOverrides,
    /// Cross-check every NMS result against the naive reference.
    #[arg(long)]
    pub oracle: bool,
}

#[derive(Debug, Args)]
pub struct LabelsArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, short)]
    pub output: PathBuf,
    /// Directory with train.txt/val.txt/test.txt; images are filed under their split.
    #[arg(long)]
    pub split_dir: Option<PathBuf>,
    #[arg(long)]
    pub simplify_tolerance: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long, short)]
    pub manifest: PathBuf,
    #[arg(long, short)]
    pub output: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Target fractions; all three must be given together.
    #[arg(long, requires_all = ["val", "test"])]
    pub train: Option<f64>,
    #[arg(long, requires_all = ["train", "test"])]
    pub val: Option<f64>,
    #[arg(long, requires_all = ["train", "val"])]
    pub test: Option<f64>,
    #[arg(long)]
    pub min_class_count: Option<u64>,
    #[arg(long)]
    pub defect_free_test_count: Option<usize>,
    #[arg(long)]
    pub max_repair_iterations: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Table,
    Machine,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predictions: `<image_id>.det.json` interchange files or `<image_id>.txt` YOLO files.
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground truth: `<image_id>.txt` YOLO detection labels. A missing file means no objects.
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, short)]
    pub manifest: PathBuf,
    /// Write the machine-readable report here.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Write roc.tsv, pr_image.tsv and pr_detection_50.tsv here.
    #[arg(long)]
    pub curves: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
    pub format: ReportFormat,
    /// Row label in the table.
    #[arg(long, default_value = "model")]
    pub name: String,
    /// Recompute with the naive reference metrics and fail on disagreement.
    #[arg(long)]
    pub oracle: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// TOML scene description; defaults apply to missing keys.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long, short)]
    pub output: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Contents of the `--config` file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub filter: FilterConfig,
    pub labels: LabelConfig,
    pub split: SplitSpec,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

pub fn run(cli: Cli) -> Result<i32> {
    let config = RunConfig::load(cli.config.as_deref())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let verbose = cli.verbose;
    pool.install(|| match cli.command {
        Command::Filter(args) => cmd_filter(&args, &config, verbose),
        Command::Labels(args) => cmd_labels(&args, &config, verbose),
        Command::Split(args) => cmd_split(&args, &config),
        Command::Eval(args) => cmd_eval(&args),
        Command::Simulate(args) => cmd_simulate(&args),
    })
}

fn require_dir(path: &Path) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory")))
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Interchange files in `dir`, sorted by file name.
fn interchange_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(FILE_SUFFIX)))
        .collect();
    files.sort();
    Ok(files)
}

fn read_detection_set(path: &Path) -> Result<DetectionSet> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_detection_file(&bytes)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FilterRunReport {
    pub config: FilterConfig,
    pub total: FilterReport,
    pub images: BTreeMap<String, FilterReport>,
    pub errors: BTreeMap<String, String>,
}

pub fn cmd_filter(args: &FilterArgs, config: &RunConfig, verbose: bool) -> Result<i32> {
    let mut cfg = config.filter;
    let o = &args.overrides;
    cfg.score_threshold = o.score_thresh.unwrap_or(cfg.score_threshold);
    cfg.max_box_area_fraction = o.max_area_frac.unwrap_or(cfg.max_box_area_fraction);
    cfg.min_mask_pixels = o.min_mask_pixels.unwrap_or(cfg.min_mask_pixels);
    cfg.nms_iou_threshold = o.nms_iou.unwrap_or(cfg.nms_iou_threshold);
    cfg.validate()?;
    require_dir(&args.input)?;
    create_dir(&args.output)?;

    let files = interchange_files(&args.input)?;
    let results: Vec<(String, Result<(DetectionSet, FilterReport)>)> = files
        .par_iter()
        .map(|path| {
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            let outcome = read_detection_set(path).and_then(|set| {
                let (kept, report) = apply_filter_chain(&set, &cfg);
                if args.oracle {
                    let reference = oracle_nms(&set_before_nms(&set, &cfg), cfg.nms_iou_threshold)?;
                    let ids: Vec<u64> = kept.detections().iter().map(|d| d.det_id()).collect();
                    if ids != reference {
                        return Err(Error::validation(format!("NMS disagrees with oracle: {ids:?} vs {reference:?}")));
                    }
                }
                Ok((kept, report))
            });
            (name, outcome)
        })
        .collect();

    let mut run = FilterRunReport {
        config: cfg,
        total: FilterReport::empty(),
        images: BTreeMap::new(),
        errors: BTreeMap::new(),
    };
    for (name, outcome) in results {
        match outcome {
            Ok((kept, report)) => {
                write_file(&args.output.join(&name), write_detection_file(&kept)?)?;
                run.total.merge_counts(&report);
                if verbose {
                    eprintln!("{name}: {} -> {}", report.input(), report.surviving());
                }
                run.images.insert(kept.image_id().to_string(), report);
            }
            Err(e) => {
                eprintln!("error: {name}: {e}");
                run.errors.insert(name, e.to_string());
            }
        }
    }
    let mut json = serde_json::to_string_pretty(&run).expect("report serializes");
    json.push('\n');
    write_file(&args.output.join(FILTER_REPORT), json)?;
    Ok(if run.errors.is_empty() { 0 } else { 2 })
}

fn set_before_nms(set: &DetectionSet, cfg: &FilterConfig) -> DetectionSet {
    let relaxed = FilterConfig {
        nms_iou_threshold: 1.0,
        ..*cfg
    };
    // NMS at 1.0 removes nothing, so this is the input the NMS stage saw.
    apply_filter_chain(set, &relaxed).0
}

/// Image id to split name from `train.txt`, `val.txt`, `test.txt`.
fn read_split_dir(dir: &Path) -> Result<BTreeMap<String, &'static str>> {
    let mut map = BTreeMap::new();
    for p in Partition::ALL {
        let path = dir.join(format!("{}.txt", p.name()));
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        for id in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            map.insert(id.to_string(), p.name());
        }
    }
    Ok(map)
}

pub fn cmd_labels(args: &LabelsArgs, config: &RunConfig, verbose: bool) -> Result<i32> {
    let mut cfg = config.labels;
    if let Some(t) = args.simplify_tolerance {
        cfg.simplify_tolerance = t;
    }
    require_dir(&args.input)?;
    let splits = args.split_dir.as_deref().map(read_split_dir).transpose()?;
    create_dir(&args.output)?;

    let files = interchange_files(&args.input)?;
    let results: Vec<Result<(DetectionSet, Vec<String>)>> = files
        .par_iter()
        .map(|path| {
            let set = read_detection_set(path)?;
            let triple = generate_label_sets(&set, &cfg)?;
            let texts = Variant::ALL
                .iter()
                .map(|&v| write_label_file(&triple.entries(v), set.width(), set.height()))
                .collect::<Result<Vec<_>>>()?;
            Ok((set, texts))
        })
        .collect();

    let mut failed = false;
    for (path, result) in files.iter().zip(results) {
        let (set, texts) = match result {
            Ok(r) => r,
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                failed = true;
                continue;
            }
        };
        let split = match &splits {
            Some(map) => map.get(set.image_id()).copied().unwrap_or("unassigned"),
            None => "all",
        };
        for (variant, text) in Variant::ALL.iter().zip(&texts) {
            let dir = args.output.join(variant.dir_name()).join(split);
            create_dir(&dir)?;
            write_file(&dir.join(format!("{}.txt", set.image_id())), text)?;
        }
        if verbose {
            let counts: Vec<usize> = texts.iter().map(|t| t.lines().count()).collect();
            eprintln!("{}: {counts:?}", set.image_id());
        }
    }
    Ok(if failed { 2 } else { 0 })
}

pub fn cmd_split(args: &SplitArgs, config: &RunConfig) -> Result<i32> {
    let mut spec = config.split;
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if let (Some(train), Some(val), Some(test)) = (args.train, args.val, args.test) {
        spec.targets = Targets::Fractions { train, val, test };
    }
    spec.min_class_count = args.min_class_count.unwrap_or(spec.min_class_count);
    spec.defect_free_test_count = args.defect_free_test_count.unwrap_or(spec.defect_free_test_count);
    spec.max_repair_iterations = args.max_repair_iterations.unwrap_or(spec.max_repair_iterations);

    let file = fs::File::open(&args.manifest).map_err(|e| Error::io(&args.manifest, e))?;
    let manifest = DatasetManifest::read_csv(file)?;
    create_dir(&args.output)?;

    let assignment = split_dataset(&manifest, &spec)?;
    let violations = verify_split(&manifest, &assignment, &spec)?;
    if !violations.is_empty() {
        for v in &violations {
            eprintln!("violation: {v}");
        }
        return Ok(4);
    }
    for p in Partition::ALL {
        let mut text = assignment.images_in(p).join("\n");
        if !text.is_empty() {
            text.push('\n');
        }
        write_file(&args.output.join(format!("{}.txt", p.name())), text)?;
    }
    let mut json = serde_json::to_string_pretty(&assignment).expect("assignment serializes");
    json.push('\n');
    write_file(&args.output.join(SPLIT_REPORT), json)?;
    println!(
        "train {} / val {} / test {} images (targets {:?}, seed {})",
        assignment.sizes[0], assignment.sizes[1], assignment.sizes[2], assignment.targets, assignment.seed
    );
    Ok(0)
}

fn gt_boxes(entries: Vec<LabelEntry>) -> Vec<BBox> {
    entries
        .into_iter()
        .filter_map(|e| match e.shape {
            LabelShape::Box(b) => Some(b),
            LabelShape::Polygon(_) => None,
        })
        .collect()
}

fn load_eval_input(args: &EvalArgs, image_id: &str, positive: bool) -> Result<EvalInput> {
    let det_path = args.pred.join(format!("{image_id}{FILE_SUFFIX}"));
    let txt_path = args.pred.join(format!("{image_id}.txt"));
    let gt_path = args.gt.join(format!("{image_id}.txt"));
    let gt_text = match fs::read_to_string(&gt_path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
        Err(e) => return Err(Error::io(&gt_path, e)),
    };

    let (preds, gts, score) = if det_path.is_file() {
        let set = read_detection_set(&det_path)?;
        if set.image_id() != image_id {
            return Err(Error::validation(format!("{} holds image '{}'", det_path.display(), set.image_id())));
        }
        let gts = gt_boxes(parse_yolo_label_file(&gt_text, set.width(), set.height(), LabelKind::Detection)?);
        let preds = set
            .detections()
            .iter()
            .map(|d| ScoredBox {
                id: d.det_id(),
                bbox: *d.bbox(),
                score: d.score(),
            })
            .collect();
        (preds, gts, image_score(&set))
    } else {
        // IoU is invariant under per-axis scaling, so YOLO-only images are
        // evaluated in normalized coordinates.
        let gts = gt_boxes(parse_yolo_label_file(&gt_text, 1, 1, LabelKind::Detection)?);
        let preds: Vec<ScoredBox> = match fs::read_to_string(&txt_path) {
            Ok(t) => parse_yolo_prediction_file(&t, 1, 1)?
                .into_iter()
                .enumerate()
                .map(|(i, p)| ScoredBox {
                    id: i as u64,
                    bbox: p.bbox,
                    score: p.score,
                })
                .collect(),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(Error::io(&txt_path, e)),
        };
        let score = preds.iter().map(|p| p.score).fold(0.0, f64::max);
        (preds, gts, score)
    };
    Ok(EvalInput {
        image_id: image_id.to_string(),
        preds,
        gts,
        score,
        positive,
    })
}

fn check_oracle(inputs: &[EvalInput], report: &EvalReport) -> Result<()> {
    let preds: Vec<Vec<ScoredBox>> = inputs.iter().map(|i| i.preds.clone()).collect();
    let gts: Vec<Vec<BBox>> = inputs.iter().map(|i| i.gts.clone()).collect();
    match oracle_map(&preds, &gts) {
        Ok(o) => {
            let pairs = [
                ("mAP", report.map, o.map),
                ("mAP@50", report.map50, o.map50),
                ("mAP@75", report.map75, o.map75),
                ("mAR@1", report.mar1, o.mar1),
                ("mAR@10", report.mar10, o.mar10),
            ];
            for (name, got, want) in pairs {
                if (got - want).abs() > 1e-9 {
                    return Err(Error::validation(format!("{name} {got} disagrees with oracle {want}")));
                }
            }
            eprintln!("oracle: localization metrics agree");
        }
        Err(Error::OracleLimit(msg)) => eprintln!("oracle: skipped localization check ({msg})"),
        Err(e) => return Err(e),
    }
    let scores: Vec<f64> = inputs.iter().map(|i| i.score).collect();
    let labels: Vec<bool> = inputs.iter().map(|i| i.positive).collect();
    match oracle_auc(&scores, &labels) {
        Ok(a) if (a - report.auc).abs() > 1e-12 => {
            Err(Error::validation(format!("AUC {} disagrees with oracle {a}", report.auc)))
        }
        Ok(_) => {
            eprintln!("oracle: AUC agrees");
            Ok(())
        }
        Err(Error::OracleLimit(msg)) => {
            eprintln!("oracle: skipped AUC check ({msg})");
            Ok(())
        }
        Err(e) => Err(e),
    }
}

pub fn cmd_eval(args: &EvalArgs) -> Result<i32> {
    require_dir(&args.pred)?;
    require_dir(&args.gt)?;
    let file = fs::File::open(&args.manifest).map_err(|e| Error::io(&args.manifest, e))?;
    let manifest = DatasetManifest::read_csv(file)?;

    let inputs = manifest
        .entries()
        .par_iter()
        .map(|e| load_eval_input(args, &e.image_id, !e.defect_free))
        .collect::<Result<Vec<_>>>()?;
    let report = evaluate(&inputs)?;
    if args.oracle {
        check_oracle(&inputs, &report)?;
    }

    if let Some(path) = &args.output {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            create_dir(parent)?;
        }
        write_file(path, report.to_json())?;
    }
    if let Some(dir) = &args.curves {
        create_dir(dir)?;
        write_file(&dir.join("roc.tsv"), report.curves.roc.to_tsv())?;
        write_file(&dir.join("pr_image.tsv"), report.curves.pr_image.to_tsv())?;
        write_file(&dir.join("pr_detection_50.tsv"), report.curves.pr_detection_50.to_tsv())?;
    }
    match args.format {
        ReportFormat::Table => print!("{}", report.to_table(&args.name)),
        ReportFormat::Machine => print!("{}", report.to_json()),
    }
    Ok(0)
}

/// Subdirectories written by `simulate`.
pub const SIM_DETECTIONS: &str = "detections";
pub const SIM_GROUND_TRUTH: &str = "ground_truth";
pub const SIM_GT_LABELS: &str = "gt_labels";
pub const SIM_MANIFEST: &str = "manifest.csv";

pub fn cmd_simulate(args: &SimulateArgs) -> Result<i32> {
    let mut spec = match &args.scene {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            toml::from_str::<SceneSpec>(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => SceneSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let scene = generate_scene(&spec)?;
    let detections = perturb_to_detections(&scene.ground_truth, &spec)?;

    let out = &args.output;
    for sub in [SIM_DETECTIONS, SIM_GROUND_TRUTH, SIM_GT_LABELS] {
        create_dir(&out.join(sub))?;
    }
    for (gt, det) in scene.ground_truth.iter().zip(&detections) {
        let stem = gt.image_id();
        write_file(&out.join(SIM_DETECTIONS).join(format!("{stem}{FILE_SUFFIX}")), write_detection_file(det)?)?;
        write_file(&out.join(SIM_GROUND_TRUTH).join(format!("{stem}{FILE_SUFFIX}")), write_detection_file(gt)?)?;
        let entries: Vec<LabelEntry> = gt
            .detections()
            .iter()
            .map(|d| LabelEntry {
                class_id: d.class_id(),
                shape: LabelShape::Box(*d.bbox()),
            })
            .collect();
        write_file(&out.join(SIM_GT_LABELS).join(format!("{stem}.txt")), write_label_file(&entries, gt.width(), gt.height())?)?;
    }
    let mut csv = Vec::new();
    scene.manifest.write_csv(&mut csv)?;
    write_file(&out.join(SIM_MANIFEST), csv)?;
    write_file(&out.join("scene.toml"), toml::to_string(&spec).map_err(|e| Error::Config(e.to_string()))?)?;
    println!("{} images in {} groups written to {}", scene.manifest.len(), spec.group_count, out.display());
    Ok(0)
}
