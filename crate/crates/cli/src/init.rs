use vigxray::model::{init_weights, save_weights, ModelConfig};
use vigxray::Weights;

use crate::error::CliError;
use crate::InitArgs;

pub fn run(a: &InitArgs) -> Result<(), CliError> {
    let cfg = ModelConfig {
        num_layers: a.layers,
        hidden_dim: a.dim,
        k: a.k,
        k_end: a.k_end,
        num_classes: a.classes,
        num_heads: a.heads,
        ffn_ratio: a.ffn_ratio,
        seed: a.seed,
    };
    let w: Weights = init_weights(&cfg)?;
    save_weights(&w, &a.out)?;
    let k = match cfg.k_end {
        Some(end) => format!("{}..{end}", cfg.k),
        None => cfg.k.to_string(),
    };
    println!(
        "wrote {}: L={} D={} K={k} C={} heads={} ffn_ratio={} seed={}",
        a.out.display(),
        cfg.num_layers,
        cfg.hidden_dim,
        cfg.num_classes,
        cfg.num_heads,
        cfg.ffn_ratio,
        cfg.seed
    );
    Ok(())
}
