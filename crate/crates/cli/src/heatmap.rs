use vigxray::heatmap::{
    heatmap_filename, neighbor_intensities, render_heatmap, render_metric_curves, HeatmapSpec, Normalization,
};
use vigxray::imaging::{load_image, save_png, to_patch_grid};
use vigxray::metrics::{analyze_trace, AnalysisInputs, ModularityVariant};
use vigxray::model::forward;
use vigxray::trace::read_trace;

use crate::error::CliError;
use crate::util::{ensure_dir, file_stem, load, parse_patch, require_file, run_config};
use crate::{HeatmapArgs, NormalizationArg};

pub fn run(a: &HeatmapArgs) -> Result<(), CliError> {
    let spec = HeatmapSpec {
        patch: parse_patch(&a.patch)?,
        layers: a.layers.clone(),
        scale: a.scale,
        floor: a.alpha_floor,
        ceiling: a.alpha_ceiling,
        mode: match a.normalization {
            NormalizationArg::MinMax => Normalization::MinMax,
            NormalizationArg::Absolute => Normalization::Absolute,
        },
    };
    require_file(&a.image, "image")?;
    let (img, grid) = to_patch_grid(&load_image(&a.image)?)?;
    let trace = match (&a.trace, &a.weights) {
        (Some(t), _) => {
            require_file(t, "trace")?;
            read_trace(t)?
        }
        (None, Some(w)) => {
            let weights = load(w)?;
            let cfg = run_config(&weights.config, &a.neighbors)?;
            spec.validate(cfg.num_layers)?;
            forward(&grid, &weights, &cfg)?
        }
        (None, None) => return Err(CliError::Validation("need --trace or --weights".into())),
    };
    spec.validate(trace.num_layers())?;
    ensure_dir(&a.out_dir)?;
    let id = a.id.clone().unwrap_or_else(|| file_stem(&a.image));
    for &layer in &spec.layers {
        let entries = neighbor_intensities(&trace, layer, spec.patch, &spec)?;
        let out = render_heatmap(&img, spec.patch, &entries, &spec)?;
        let path = a.out_dir.join(heatmap_filename(&id, layer, spec.patch));
        save_png(&out, &path)?;
        println!("layer {layer}: {} neighbors -> {}", entries.len(), path.display());
    }
    if a.curves {
        let metrics = analyze_trace(
            &trace,
            AnalysisInputs {
                grid: &grid,
                mask: None,
                label: trace.label,
                weights: None,
                variant: ModularityVariant::Printed,
            },
        )?;
        let base = a.out_dir.join(format!("{id}_curves"));
        render_metric_curves(&metrics, &base)?;
        println!("curves -> {}.csv, {}.png", base.display(), base.display());
    }
    Ok(())
}
