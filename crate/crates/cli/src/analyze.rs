use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use vigxray::imaging::{downsample_mask, load_image, load_mask, to_patch_grid};
use vigxray::metrics::{analyze_trace, write_metrics_csv, write_metrics_json, AnalysisInputs, ModularityVariant};
use vigxray::model::{forward, ModelConfig};
use vigxray::trace::write_trace;
use vigxray::Weights;

use crate::error::CliError;
use crate::util::{ensure_dir, file_stem, load, read_class_names, require_file, run_config};
use crate::{AnalyzeArgs, VariantArg};

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub id: String,
    pub image: PathBuf,
    pub label: Option<usize>,
    pub mask: Option<PathBuf>,
}

struct Job<'a> {
    weights: &'a Weights,
    cfg: &'a ModelConfig,
    out_dir: &'a Path,
    threshold: f64,
    variant: ModularityVariant,
    write_trace: bool,
    keep_features: bool,
}

struct Outcome {
    prediction: usize,
    layers: usize,
}

fn parse_field(tok: Option<&str>) -> Option<&str> {
    tok.filter(|t| *t != "-")
}

/// Parses a manifest. Relative paths resolve against the manifest's
/// directory; ids are image file stems and must be unique.
pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<Entry>, CliError> {
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = if line.contains('\t') {
            line.split('\t').map(str::trim).collect()
        } else {
            line.split_whitespace().collect()
        };
        if toks.len() > 3 {
            return Err(CliError::Validation(format!(
                "manifest line {}: expected `image [label] [mask]`",
                n + 1
            )));
        }
        let image = base.join(toks[0]);
        let label = parse_field(toks.get(1).copied())
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| CliError::Validation(format!("manifest line {}: bad label {t:?}", n + 1)))
            })
            .transpose()?;
        let mask = parse_field(toks.get(2).copied()).map(|m| base.join(m));
        let id = file_stem(&image);
        if !seen.insert(id.clone()) {
            return Err(CliError::Validation(format!(
                "manifest line {}: duplicate image id {id:?}",
                n + 1
            )));
        }
        entries.push(Entry { id, image, label, mask });
    }
    if entries.is_empty() {
        return Err(CliError::Validation("manifest lists no images".into()));
    }
    Ok(entries)
}

fn analyze_one(e: &Entry, job: &Job<'_>) -> Result<Outcome, CliError> {
    let classes = job.cfg.num_classes;
    if let Some(y) = e.label.filter(|&y| y >= classes) {
        return Err(CliError::Validation(format!("label {y} outside 0..{classes}")));
    }
    let img = load_image(&e.image)?;
    let (_, grid) = to_patch_grid(&img)?;
    let mask = match &e.mask {
        Some(p) => Some(downsample_mask(&load_mask(p)?, job.threshold)?),
        None => None,
    };
    let trace = forward(&grid, job.weights, job.cfg)?.with_label(e.label);
    let metrics = analyze_trace(
        &trace,
        AnalysisInputs {
            grid: &grid,
            mask: mask.as_ref(),
            label: e.label,
            weights: Some(job.weights),
            variant: job.variant,
        },
    )?;
    let stem = job.out_dir.join(&e.id);
    write_metrics_csv(&stem.with_extension("metrics.csv"), &e.id, &metrics)?;
    write_metrics_json(&stem.with_extension("metrics.json"), &e.id, &metrics)?;
    let outcome = Outcome {
        prediction: trace.prediction,
        layers: metrics.len(),
    };
    if job.write_trace {
        let t = if job.keep_features {
            trace
        } else {
            trace.without_features()
        };
        write_trace(&t, stem.with_extension("trace"))?;
    }
    Ok(outcome)
}

fn describe(prediction: usize, names: &[String]) -> String {
    match names.get(prediction) {
        Some(n) if !n.is_empty() => format!("{prediction} ({n})"),
        _ => prediction.to_string(),
    }
}

pub fn run(a: &AnalyzeArgs) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&a.threshold) {
        return Err(CliError::Validation(format!(
            "--threshold {} outside [0, 1]",
            a.threshold
        )));
    }
    let entries = match (&a.image, &a.manifest) {
        (Some(image), _) => {
            require_file(image, "image")?;
            if let Some(m) = &a.mask {
                require_file(m, "mask")?;
            }
            vec![Entry {
                id: a.id.clone().unwrap_or_else(|| file_stem(image)),
                image: image.clone(),
                label: a.label,
                mask: a.mask.clone(),
            }]
        }
        (None, Some(manifest)) => {
            require_file(manifest, "manifest")?;
            let text =
                fs::read_to_string(manifest).map_err(|e| CliError::Io(format!("{}: {e}", manifest.display())))?;
            parse_manifest(&text, manifest.parent().unwrap_or(Path::new("")))?
        }
        (None, None) => return Err(CliError::Validation("need --image or --manifest".into())),
    };
    let weights = load(&a.weights)?;
    let cfg = run_config(&weights.config, &a.neighbors)?;
    let names = match &a.classes_file {
        Some(p) => read_class_names(p, cfg.num_classes)?,
        None => Vec::new(),
    };
    ensure_dir(&a.out_dir)?;

    let job = Job {
        weights: &weights,
        cfg: &cfg,
        out_dir: &a.out_dir,
        threshold: a.threshold,
        variant: match a.modularity_variant {
            VariantArg::Printed => ModularityVariant::Printed,
            VariantArg::LeichtNewman => ModularityVariant::LeichtNewman,
        },
        write_trace: !a.no_trace,
        keep_features: !a.no_features,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs)
        .build()
        .map_err(|e| CliError::Validation(format!("--jobs: {e}")))?;
    let results: Vec<Result<Outcome, CliError>> =
        pool.install(|| entries.par_iter().map(|e| analyze_one(e, &job)).collect());

    if a.manifest.is_none() {
        let out = results.into_iter().next().expect("one entry")?;
        println!(
            "{}: {} layers, prediction {}",
            entries[0].id,
            out.layers,
            describe(out.prediction, &names)
        );
        return Ok(());
    }

    let mut summary = String::from("image_id\tstatus\tprediction\tdetail\n");
    let mut failed = 0;
    for (e, r) in entries.iter().zip(&results) {
        match r {
            Ok(o) => {
                println!("{}: prediction {}", e.id, describe(o.prediction, &names));
                summary.push_str(&format!("{}\tok\t{}\t\n", e.id, o.prediction));
            }
            Err(err) => {
                failed += 1;
                eprintln!("{}: failed: {err}", e.id);
                let detail = err.to_string().replace(['\t', '\n'], " ");
                summary.push_str(&format!("{}\tfailed\t\t{detail}\n", e.id));
            }
        }
    }
    let path = a.out_dir.join("summary.tsv");
    fs::write(&path, summary).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    println!("{} of {} images analyzed", entries.len() - failed, entries.len());
    if failed > 0 {
        return Err(CliError::Partial {
            failed,
            total: entries.len(),
        });
    }
    Ok(())
}
