//! The `cornercase` command-line driver.
//!
//! Exit status: 0 on success, 1 when inputs fail validation (or a check
//! fails), 2 on usage errors.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::datamodel::{
    apply_class_split, load_dataset, remap_agnostic, Annotation, ClassSplit, ClassSplitFile,
    Dataset, ImageRecord, RemapMode,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    evaluate_coda, evaluate_common, load_detections, write_detections, EvalConfig,
};
use crate::geometry::BBox;
use crate::losses::{grad_check, DiffLoss, FocalParams, LossWeights, TokenSpan};
use crate::matching::{
    hungarian, match_predictions, Assignment, CostMatrix, MatchWeights, ScoredPrediction,
};
use crate::pseudolabel::{
    check_proposal_images, generate_pseudo_records, load_proposals, merge_datasets, pseudo_dataset,
    pseudo_records_from_rgb, write_proposals, PseudoLabelConfig,
};
use crate::report::{report, BaselineTable};
use crate::synth::{generate_scenes, simulate_detector, simulate_teacher, SynthSpec};

#[derive(Debug, Parser)]
#[command(name = "cornercase", version, about = "Corner-case detection harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate an annotation file and write it back in canonical form.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tag categories common/novel and optionally remap to the agnostic id.
    Split {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long, value_enum, default_value_t = Remap::None)]
        remap: Remap,
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn teacher proposals on depth/normal images into agnostic pseudo labels.
    PseudoLabel {
        /// Proposal records; not needed with --use-rgb-labels.
        #[arg(long, required_unless_present = "use_rgb_labels")]
        proposals: Option<PathBuf>,
        /// Annotation file whose depth/normal images receive labels.
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long, default_value_t = 0.7)]
        tau: f64,
        #[arg(long, default_value_t = 0.5)]
        nms: f64,
        #[arg(long, default_value_t = 100)]
        max_per_image: usize,
        /// Copy each frame's RGB annotations instead of using proposals.
        #[arg(long, requires = "labeled")]
        use_rgb_labels: bool,
        #[arg(long)]
        labeled: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge pseudo-labeled sets into a labeled dataset.
    Merge {
        #[arg(long)]
        labeled: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        pseudo: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score detections against a dataset.
    Evaluate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        detections: PathBuf,
        #[arg(long, required_if_eq("protocol", "coda"))]
        split: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Protocol::Coda)]
        protocol: Protocol,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve an assignment problem from a cost or prediction file.
    Match {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare analytic loss gradients with central differences.
    LossCheck {
        #[arg(long, value_enum)]
        loss: LossKind,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
    /// Generate a synthetic dataset with simulated detector and teacher output.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare a metric row against a baseline table.
    Report {
        #[arg(long)]
        baselines: PathBuf,
        /// Evaluation output to compare.
        #[arg(long, conflicts_with = "row", required_unless_present = "row")]
        result: Option<PathBuf>,
        /// Use a row of the baseline table as the result.
        #[arg(long)]
        row: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Remap {
    None,
    All,
    NovelOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Protocol {
    /// Open-world metrics over common/novel classes.
    Coda,
    /// Class-aware recall and mAP at IoU 0.5.
    Bdd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossKind {
    Giou,
    L1,
    Box,
    Focal,
    SoftToken,
}

/// Run the CLI on `args` (including the program name) and return the exit
/// status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn execute(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Ingest { input, out } => {
            let ing = load_dataset(&input)?;
            println!(
                "images {} annotations {} categories {} dropped {}",
                ing.dataset.images.len(),
                ing.dataset.annotations.len(),
                ing.dataset.categories.len(),
                ing.dropped.len()
            );
            if let Some(out) = out {
                ing.dataset.save(out)?;
            }
        }
        Command::Split {
            dataset,
            split,
            remap,
            out,
        } => {
            let ds = load_dataset(&dataset)?.dataset;
            let split = ClassSplitFile::load(&split)?.resolve(&ds)?;
            let tagged = apply_class_split(&ds, &split)?;
            let result = match remap {
                Remap::None => tagged,
                Remap::All => remap_agnostic(&tagged, &split, RemapMode::All),
                Remap::NovelOnly => remap_agnostic(&tagged, &split, RemapMode::NovelOnly),
            };
            result.save(out)?;
        }
        Command::PseudoLabel {
            proposals,
            images,
            split,
            tau,
            nms,
            max_per_image,
            use_rgb_labels,
            labeled,
            out,
        } => {
            let cfg = PseudoLabelConfig::new(tau, nms, max_per_image)?;
            let source = load_dataset(&images)?.dataset;
            let split = ClassSplitFile::load(&split)?.resolve(&source)?;
            let targets: Vec<ImageRecord> = source
                .images
                .iter()
                .filter(|i| i.modality.is_geometry_cue())
                .cloned()
                .collect();
            let annotations: Vec<Annotation> = if use_rgb_labels {
                let labeled = load_dataset(labeled.expect("clap enforces --labeled"))?.dataset;
                pseudo_records_from_rgb(&labeled, &targets, &split)?
            } else {
                let props = load_proposals(proposals.expect("clap enforces --proposals"))?;
                check_proposal_images(&props, &source.images)?;
                let records = generate_pseudo_records(&props, &cfg, &split);
                println!(
                    "pseudo labels {} rejected {}",
                    records.annotations.len(),
                    records.rejected
                );
                records.annotations
            };
            pseudo_dataset(&targets, annotations, &split)?.save(out)?;
        }
        Command::Merge {
            labeled,
            pseudo,
            out,
        } => {
            let labeled = load_dataset(&labeled)?.dataset;
            let sets = pseudo
                .iter()
                .map(|p| load_dataset(p).map(|i| i.dataset))
                .collect::<Result<Vec<_>>>()?;
            let merged = merge_datasets(&labeled, &sets)?;
            println!(
                "images {} annotations {}",
                merged.images.len(),
                merged.annotations.len()
            );
            merged.save(out)?;
        }
        Command::Evaluate {
            dataset,
            detections,
            split,
            protocol,
            out,
        } => {
            let ds = load_dataset(&dataset)?.dataset;
            let dets = load_detections(&detections)?;
            let cfg = EvalConfig::coco();
            let doc = match protocol {
                Protocol::Coda => {
                    let split = ClassSplitFile::load(split.expect("clap enforces --split"))?
                        .resolve(&ds)?;
                    evaluate_coda(&dets, &ds, &split, &cfg)?.to_json()
                }
                Protocol::Bdd => evaluate_common(&dets, &ds, &cfg)?.to_json(),
            };
            emit(&doc, out.as_deref())?;
        }
        Command::Match { input, out } => {
            let assignment = match_file(&input)?;
            let mut doc = serde_json::to_string_pretty(&assignment).expect("assignment serializes");
            doc.push('\n');
            emit(&doc, out.as_deref())?;
        }
        Command::LossCheck {
            loss,
            trials,
            eps,
            seed,
            tol,
        } => {
            let worst = loss_check(loss, trials, eps, seed)?;
            println!("max relative error {worst:.3e} over {trials} points");
            return Ok(if worst < tol { 0 } else { 1 });
        }
        Command::Synth { config, out, seed } => {
            let mut spec = match config {
                Some(path) => {
                    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                    serde_json::from_str::<SynthSpec>(&text)
                        .map_err(|e| Error::parse(&path.display().to_string(), &text, &e))?
                }
                None => SynthSpec::default(),
            };
            if let Some(seed) = seed {
                spec.scenes.seed = seed;
            }
            write_synth(&spec, &out)?;
        }
        Command::Report {
            baselines,
            result,
            row,
            out,
        } => {
            let table = BaselineTable::load(&baselines)?;
            let values = match (result, row) {
                (_, Some(name)) => table.row(&name)?.clone(),
                (Some(path), None) => metric_row_file(&path)?,
                (None, None) => unreachable!("clap requires --result or --row"),
            };
            let rep = report(&values, &table)?;
            print!("{}", rep.to_text());
            if let Some(out) = out {
                write_file(&out, &rep.to_json())?;
            }
        }
    }
    Ok(0)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn emit(doc: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => write_file(path, doc),
        None => {
            print!("{doc}");
            Ok(())
        }
    }
}

/// Numeric top-level fields of an evaluation document.
fn metric_row_file(path: &Path) -> Result<BTreeMap<String, f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: BTreeMap<String, serde_json::Value> = serde_json::from_str(&text)
        .map_err(|e| Error::parse(&path.display().to_string(), &text, &e))?;
    Ok(doc
        .into_iter()
        .filter_map(|(k, v)| v.as_f64().map(|v| (k, v)))
        .collect())
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum MatchInput {
    Costs {
        costs: Vec<Vec<f64>>,
    },
    Boxes {
        image: ImageSize,
        predictions: Vec<PredictionIn>,
        ground_truth: Vec<GroundTruthIn>,
        #[serde(default)]
        weights: Option<[f64; 3]>,
    },
}

#[derive(Debug, Deserialize)]
struct ImageSize {
    width: u32,
    height: u32,
}

#[derive(Debug, Deserialize)]
struct PredictionIn {
    bbox: [f64; 4],
    // String keys: integer map keys do not survive untagged buffering.
    class_probs: BTreeMap<String, f64>,
}

#[derive(Debug, Deserialize)]
struct GroundTruthIn {
    category_id: u64,
    bbox: [f64; 4],
}

fn xywh(b: [f64; 4]) -> Result<BBox> {
    BBox::from_xywh(b[0], b[1], b[2], b[3])
}

/// Solve the assignment described by a match file: either a raw `costs`
/// matrix, or boxes (`[x, y, w, h]`) with class probabilities scored by the
/// matcher cost.
pub fn match_file(path: &Path) -> Result<Assignment> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let input: MatchInput = serde_json::from_str(&text)
        .map_err(|e| Error::parse(&path.display().to_string(), &text, &e))?;
    match input {
        MatchInput::Costs { costs } => Ok(hungarian(&CostMatrix::from_rows(&costs)?)),
        MatchInput::Boxes {
            image,
            predictions,
            ground_truth,
            weights,
        } => {
            let w = match weights {
                Some([c, l, g]) => MatchWeights::new(c, l, g)?,
                None => MatchWeights::default(),
            };
            let preds = predictions
                .into_iter()
                .map(|p| {
                    let class_probs = p
                        .class_probs
                        .into_iter()
                        .map(|(k, v)| {
                            k.parse::<u64>().map(|k| (k, v)).map_err(|_| {
                                Error::Invalid(format!("class id {k:?} is not an integer"))
                            })
                        })
                        .collect::<Result<_>>()?;
                    Ok(ScoredPrediction {
                        bbox: xywh(p.bbox)?,
                        class_probs,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let gts = ground_truth
                .into_iter()
                .enumerate()
                .map(|(i, g)| {
                    Ok(Annotation::new(
                        i as u64 + 1,
                        1,
                        g.category_id,
                        xywh(g.bbox)?,
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            match_predictions(
                &preds,
                &gts,
                &w,
                &ImageRecord::new(1, image.width, image.height),
            )
        }
    }
}

fn random_box(rng: &mut impl Rng) -> BBox {
    let (x, y) = (rng.gen_range(0.0..150.0), rng.gen_range(0.0..150.0));
    let (w, h) = (rng.gen_range(5.0..60.0), rng.gen_range(5.0..60.0));
    BBox::from_xywh(x, y, w, h).expect("positive size")
}

fn sample_case(kind: LossKind, rng: &mut impl Rng) -> (DiffLoss, Vec<f64>) {
    let image = ImageRecord::new(1, 256, 256);
    match kind {
        LossKind::Giou | LossKind::L1 | LossKind::Box => {
            let target = random_box(rng);
            // Keep predictions near the target half of the time so both the
            // overlapping and disjoint branches get exercised.
            let pred = if rng.gen_bool(0.5) {
                let [x1, y1, x2, y2] = target.corners();
                let mut j = || rng.gen_range(-10.0..10.0);
                let (a, b, c, d) = (x1 + j(), y1 + j(), x2 + j(), y2 + j());
                BBox::new(a.min(c), b.min(d), a.max(c) + 1.0, b.max(d) + 1.0)
                    .expect("positive size")
            } else {
                random_box(rng)
            };
            let loss = match kind {
                LossKind::Giou => DiffLoss::Giou { target },
                LossKind::L1 => DiffLoss::L1 { target, image },
                _ => DiffLoss::Box {
                    target,
                    weights: LossWeights::default(),
                    image,
                },
            };
            (loss, pred.corners().to_vec())
        }
        LossKind::Focal => (
            DiffLoss::Focal {
                label: rng.gen_bool(0.5),
                params: FocalParams::default(),
            },
            vec![rng.gen_range(0.01..0.99)],
        ),
        LossKind::SoftToken => {
            let len = rng.gen_range(2..=32);
            let start = rng.gen_range(0..len);
            let end = rng.gen_range(start + 1..=len);
            let logits = (0..len).map(|_| rng.gen_range(-4.0..4.0)).collect();
            (
                DiffLoss::SoftToken {
                    span: TokenSpan::new(start, end, len).expect("valid span"),
                },
                logits,
            )
        }
    }
}

/// Largest relative gradient error over `trials` random smooth points.
/// Points too close to a kink are redrawn.
pub fn loss_check(kind: LossKind, trials: usize, eps: f64, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let err = loop {
            let (loss, point) = sample_case(kind, &mut rng);
            match grad_check(&loss, &point, eps) {
                Err(Error::NonDifferentiable(_)) => continue,
                other => break other?,
            }
        };
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Write `dataset.json` (labeled RGB frames), `geometry.json` (depth/normal
/// frames, no annotations), `split.json`, `proposals.jsonl` and
/// `detections.jsonl` into `dir`.
pub fn write_synth(spec: &SynthSpec, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let full = generate_scenes(&spec.scenes, spec.count)?;
    let split: ClassSplit = spec.scenes.class_split()?;
    let seed = spec.scenes.seed;

    let rgb = full.filter_modality(crate::datamodel::Modality::Rgb);
    rgb.save(dir.join("dataset.json"))?;
    let geometry = Dataset {
        images: full
            .images
            .iter()
            .filter(|i| i.modality.is_geometry_cue())
            .cloned()
            .collect(),
        annotations: vec![],
        categories: full.categories.clone(),
    };
    geometry.save(dir.join("geometry.json"))?;

    let mut split_doc = serde_json::to_string_pretty(&ClassSplitFile::from_split(&split))
        .expect("split serializes");
    split_doc.push('\n');
    write_file(&dir.join("split.json"), &split_doc)?;

    let props = simulate_teacher(&full, &spec.teacher, seed.wrapping_add(2))?;
    let mut buf = Vec::new();
    write_proposals(&mut buf, &props).map_err(|e| Error::io(dir, e))?;
    write_bytes(&dir.join("proposals.jsonl"), &buf)?;

    let dets = simulate_detector(&rgb, &spec.detector, seed.wrapping_add(1))?;
    let mut buf = Vec::new();
    write_detections(&mut buf, &dets).map_err(|e| Error::io(dir, e))?;
    write_bytes(&dir.join("detections.jsonl"), &buf)?;
    Ok(())
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["cornercase", "bogus"]), 2);
        assert_eq!(
            run(["cornercase", "loss-check", "--loss", "giou", "--nope"]),
            2
        );
        assert_eq!(run(["cornercase", "report", "--baselines", "x"]), 2);
    }

    #[test]
    fn validation_errors_exit_1() {
        assert_eq!(
            run(["cornercase", "ingest", "--input", "/nonexistent/file.json"]),
            1
        );
    }

    #[test]
    fn loss_check_all_kinds() {
        for kind in [
            LossKind::Giou,
            LossKind::L1,
            LossKind::Box,
            LossKind::Focal,
            LossKind::SoftToken,
        ] {
            let worst = loss_check(kind, 20, 1e-5, 3).unwrap();
            assert!(worst < 1e-4, "{kind:?}: {worst}");
        }
    }
}
