//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits nonzero if any fails.

#![allow(clippy::needless_range_loop)]

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand_xoshiro::rand_core::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use vigxray::heatmap::{neighbor_intensities, HeatmapSpec};
use vigxray::imaging::{load_image, partition, GridCoord, ImageRgb, PatchGrid, PatchMask, PATCH_LEN};
use vigxray::linalg::Matrix;
use vigxray::metrics::{
    analyze_trace, embedding_similarity, layer_prediction, modularity, modularity_with, spatial_distance,
    visual_similarity, AnalysisInputs, ModularityVariant,
};
use vigxray::model::{
    decode_weights, encode_weights, forward, init_weights, knn_graph, load_weights, max_relative_conv, predict,
    save_weights, BlockWeights, HeadOutput, LayerGraph, ModelConfig, NodeFeatures, UpdateWeights, WeightsError,
};
use vigxray::trace::{decode_trace, encode_trace, read_trace, write_trace, Trace, TraceError};
use vigxray::{Weights, Weights64};

type Outcome = Result<String, String>;
type Case<'a, T, E> = (&'a str, Result<T, E>, fn(&E) -> bool);
type Criterion = (&'static str, fn() -> Outcome);

const BIN: &str = env!("CARGO_BIN_EXE_vigxray");

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn rng(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

fn unit(r: &mut Xoshiro256PlusPlus) -> f64 {
    (r.next_u64() >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

fn below(r: &mut Xoshiro256PlusPlus, n: usize) -> usize {
    (r.next_u64() % n as u64) as usize
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_rows(r: &mut Xoshiro256PlusPlus, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| unit(r)).collect()).collect()
}

fn random_image(r: &mut Xoshiro256PlusPlus) -> ImageRgb {
    let data = (0..224 * 224 * 3).map(|_| r.next_u32() as u8).collect();
    ImageRgb::new(224, 224, data).unwrap()
}

fn permutation(r: &mut Xoshiro256PlusPlus, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        p.swap(i, below(r, i + 1));
    }
    p
}

fn seed7_config() -> ModelConfig {
    ModelConfig {
        num_layers: 16,
        hidden_dim: 64,
        k: 9,
        k_end: None,
        num_classes: 10,
        num_heads: 1,
        ffn_ratio: 4,
        seed: 7,
    }
}

fn fixture_grid() -> (ImageRgb, PatchGrid) {
    let img = load_image(fixture("scene.png")).unwrap();
    let grid = partition(&img).unwrap();
    (img, grid)
}

// ---- independent oracles -------------------------------------------------

fn oracle_cos(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

/// All-pairs sort: similarity descending, then source index ascending.
fn oracle_knn(x: &[Vec<f64>], k: usize) -> Vec<Vec<usize>> {
    (0..x.len())
        .map(|i| {
            let mut all: Vec<(f64, usize)> = (0..x.len())
                .filter(|&j| j != i)
                .map(|j| (oracle_cos(&x[j], &x[i]), j))
                .collect();
            all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            all.iter().take(k).map(|p| p.1).collect()
        })
        .collect()
}

fn oracle_patch(img: &ImageRgb, i: usize) -> Vec<f64> {
    let (r, c) = (i / 14, i % 14);
    let mut v = Vec::with_capacity(PATCH_LEN);
    for py in 0..16 {
        for px in 0..16 {
            let p = img.pixel(c * 16 + px, r * 16 + py);
            v.extend(p.iter().map(|&s| s as f64 / 255.0));
        }
    }
    v
}

fn oracle_modularity(n: usize, edges: &[(usize, usize)], mask: &[bool], leicht_newman: bool) -> f64 {
    let e = edges.len() as f64;
    let mut indeg = vec![0usize; n];
    let mut outdeg = vec![0usize; n];
    for &(s, d) in edges {
        outdeg[s] += 1;
        indeg[d] += 1;
    }
    [true, false]
        .iter()
        .map(|&side| {
            let l = edges
                .iter()
                .filter(|&&(s, d)| mask[s] == side && mask[d] == side)
                .count() as f64;
            let kin: usize = (0..n).filter(|&i| mask[i] == side).map(|i| indeg[i]).sum();
            let kout: usize = (0..n).filter(|&i| mask[i] == side).map(|i| outdeg[i]).sum();
            let kk = kin as f64 * kout as f64;
            if leicht_newman {
                l / e - kk / (e * e)
            } else {
                l / e - (kk / (2.0 * e)).powi(2)
            }
        })
        .sum()
}

fn oracle_conv(x: &[Vec<f64>], nbrs: &[Vec<usize>], heads: &[Vec<Vec<f64>>], bias: &[f64]) -> Vec<Vec<f64>> {
    let d = x[0].len();
    let hd = d / heads.len();
    let mut out = vec![vec![0.0; d]; x.len()];
    for i in 0..x.len() {
        for (h, w) in heads.iter().enumerate() {
            for o in 0..hd {
                let mut acc = bias[h * hd + o];
                for r in 0..hd {
                    let c = h * hd + r;
                    let m = if nbrs[i].is_empty() {
                        0.0
                    } else {
                        let mut m = f64::NEG_INFINITY;
                        for &j in &nbrs[i] {
                            m = m.max(x[j][c] - x[i][c]);
                        }
                        m
                    };
                    acc += x[i][c] * w[r][o] + m * w[hd + r][o];
                }
                out[i][h * hd + o] = acc;
            }
        }
    }
    out
}

fn graph_from_lists<T: vigxray::Scalar>(layer: usize, lists: Vec<Vec<usize>>) -> LayerGraph<T> {
    let edge_sims = lists.iter().map(|l| vec![T::zero(); l.len()]).collect();
    LayerGraph {
        layer,
        in_neighbors: lists,
        edge_sims,
    }
}

fn random_lists(r: &mut Xoshiro256PlusPlus, n: usize, max_k: usize, allow_empty: bool) -> Vec<Vec<usize>> {
    (0..n)
        .map(|i| {
            let lo = usize::from(!allow_empty);
            let k = lo + below(r, max_k.min(n - 1) + 1 - lo);
            let mut picks: Vec<usize> = permutation(r, n).into_iter().filter(|&j| j != i).take(k).collect();
            picks.sort_unstable();
            picks
        })
        .collect()
}

// ---- criteria ------------------------------------------------------------

fn c1_knn_oracle() -> Outcome {
    let mut r = rng(101);
    let start = Instant::now();
    let mut ties = 0;
    for inst in 0..200 {
        let n = 2 + below(&mut r, 195);
        let k = 1 + below(&mut r, 20.min(n - 1));
        let d = 1 + below(&mut r, 64);
        let mut rows = random_rows(&mut r, n, d);
        if inst % 4 == 0 {
            // exact duplicates and a zero vector force tie-breaks
            for i in (1..n).step_by(3) {
                rows[i] = rows[i - 1].clone();
            }
            rows[0] = vec![0.0; d];
            ties += 1;
        } else if inst % 4 == 1 {
            for v in rows.iter_mut().flatten() {
                *v = v.round();
            }
            ties += 1;
        }
        let x = NodeFeatures::new(Matrix::from_rows(&rows).unwrap(), 0);
        let g = knn_graph(&x, k).map_err(|e| e.to_string())?;
        let want = oracle_knn(&rows, k);
        if let Some(i) = (0..n).find(|&i| g.in_neighbors[i] != want[i]) {
            return Err(format!(
                "instance {inst} (N={n} D={d} K={k}) node {i}: got {:?}, oracle {:?}",
                g.in_neighbors[i], want[i]
            ));
        }
    }
    let t = start.elapsed();
    ensure(t < Duration::from_secs(10), || format!("took {t:?}"))?;
    Ok(format!(
        "200 instances ({ties} tie-heavy) match, {:.2}s",
        t.as_secs_f64()
    ))
}

fn c2_metric_oracles() -> Outcome {
    let mut r = rng(202);
    let mut worst = 0.0f64;
    for trial in 0..100 {
        let d = 1 + below(&mut r, 64);
        let max_k = 1 + below(&mut r, 20);
        let lists = random_lists(&mut r, 196, max_k, trial % 3 == 0);
        let g: LayerGraph<f32> = graph_from_lists(1, lists.clone());
        let rows: Vec<Vec<f32>> = (0..196)
            .map(|_| (0..d).map(|_| unit(&mut r) as f32).collect())
            .collect();
        let x = NodeFeatures::new(Matrix::from_rows(&rows).unwrap(), 0);
        let img = random_image(&mut r);
        let grid = partition(&img).unwrap();

        let edges: Vec<(usize, usize)> = lists
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.iter().map(move |&j| (j, i)))
            .collect();
        let m = edges.len() as f64;
        let rows64: Vec<Vec<f64>> = rows.iter().map(|v| v.iter().map(|&a| a as f64).collect()).collect();
        let patches: Vec<Vec<f64>> = (0..196).map(|i| oracle_patch(&img, i)).collect();
        let s_emb: f64 = edges
            .iter()
            .map(|&(j, i)| oracle_cos(&rows64[j], &rows64[i]))
            .sum::<f64>()
            / m;
        let dist: f64 = edges
            .iter()
            .map(|&(j, i)| ((i / 14).abs_diff(j / 14) + (i % 14).abs_diff(j % 14)) as f64)
            .sum::<f64>()
            / m;
        let s_vis: f64 = edges
            .iter()
            .map(|&(j, i)| oracle_cos(&patches[j], &patches[i]))
            .sum::<f64>()
            / m;

        let got = [
            embedding_similarity(&g, &x).map_err(|e| e.to_string())?,
            spatial_distance(&g, &grid.coords()).map_err(|e| e.to_string())?,
            visual_similarity(&g, &grid).map_err(|e| e.to_string())?,
        ];
        for (name, (a, b)) in ["S_emb", "D", "S_vis"].iter().zip(got.iter().zip([s_emb, dist, s_vis])) {
            let err = (a - b).abs();
            worst = worst.max(err);
            ensure(err <= 1e-6, || format!("trial {trial} {name}: {a} vs oracle {b}"))?;
        }
    }
    Ok(format!("100 triples, max error {worst:.2e}"))
}

fn c3_modularity() -> Outcome {
    let mut r = rng(303);
    let mut worst = 0.0f64;
    for trial in 0..500 {
        let n = 2 + below(&mut r, 11);
        let mut edges = Vec::new();
        for s in 0..n {
            for d in 0..n {
                if s != d && below(&mut r, 10) < 3 {
                    edges.push((s, d));
                }
            }
        }
        if edges.is_empty() {
            edges.push((0, 1));
        }
        let mask: Vec<bool> = (0..n).map(|_| below(&mut r, 2) == 1).collect();
        let g = LayerGraph::<f32>::from_edges(1, n, &edges);
        let pm = PatchMask::from_bits_unchecked(mask.clone());
        for (variant, ln) in [
            (ModularityVariant::Printed, false),
            (ModularityVariant::LeichtNewman, true),
        ] {
            let q = modularity_with(&g, &pm, variant).map_err(|e| e.to_string())?.0;
            let want = oracle_modularity(n, &edges, &mask, ln);
            worst = worst.max((q - want).abs());
            ensure((q - want).abs() <= 1e-9, || {
                format!("trial {trial} ({variant:?}): {q} vs {want}")
            })?;
        }
    }
    let pm = PatchMask::from_bits_unchecked(vec![true, true, false, false]);
    let within = LayerGraph::<f32>::from_edges(1, 4, &[(0, 1), (1, 0), (2, 3), (3, 2)]);
    let across = LayerGraph::<f32>::from_edges(1, 4, &[(0, 2), (2, 0), (1, 3), (3, 1)]);
    let qa = modularity(&within, &pm).map_err(|e| e.to_string())?.0;
    let qb = modularity(&across, &pm).map_err(|e| e.to_string())?.0;
    ensure(qa == 0.5 && qb == -0.5, || format!("hand fixtures gave {qa} and {qb}"))?;
    Ok(format!("500 graphs, max error {worst:.1e}; fixtures 0.5 / -0.5"))
}

fn c4_conv_oracle() -> Outcome {
    let mut r = rng(404);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for inst in 0..40 {
        let heads = [1, 2, 4][below(&mut r, 3)];
        let (n, d) = match inst {
            0 => (196, 64),
            _ => (1 + below(&mut r, 196), heads * (1 + below(&mut r, 64 / heads))),
        };
        let hd = d / heads;
        let mut x = random_rows(&mut r, n, d);
        let lists = match inst % 5 {
            _ if n == 1 => vec![vec![]],
            1 => vec![Vec::new(); n],
            2 => {
                for i in 1..n {
                    x[i] = x[0].clone();
                }
                random_lists(&mut r, n, 20, false)
            }
            _ => random_lists(&mut r, n, 20, true),
        };
        let w: Vec<Vec<Vec<f64>>> = (0..heads).map(|_| random_rows(&mut r, 2 * hd, hd)).collect();
        let bias: Vec<f64> = (0..d).map(|_| unit(&mut r)).collect();
        let update = UpdateWeights {
            heads: w.iter().map(|m| Matrix::from_rows(m).unwrap()).collect(),
            bias: bias.clone(),
        };
        let g: LayerGraph<f64> = graph_from_lists(1, lists.clone());
        let got = max_relative_conv(&Matrix::from_rows(&x).unwrap(), &g, &update).map_err(|e| e.to_string())?;
        let want = oracle_conv(&x, &lists, &w, &bias);
        for i in 0..n {
            for c in 0..d {
                let err = (got.get(i, c) - want[i][c]).abs();
                worst = worst.max(err);
                ensure(err <= 1e-6, || {
                    format!("instance {inst} node {i} ch {c}: {} vs {}", got.get(i, c), want[i][c])
                })?;
            }
        }
        cases += 1;
    }
    Ok(format!(
        "{cases} instances incl. empty-neighbor and identical-node, max error {worst:.1e}"
    ))
}

fn c5_residual_identity() -> Outcome {
    let cfg = seed7_config();
    let mut w: Weights = init_weights(&cfg).map_err(|e| e.to_string())?;
    for b in &mut w.blocks {
        *b = BlockWeights::zeros(&cfg);
    }
    let (_, grid) = fixture_grid();
    let t = forward(&grid, &w, &cfg).map_err(|e| e.to_string())?;
    let feats = t.features.as_ref().ok_or("no features")?;
    let bits = |f: &NodeFeatures<f32>| f.values.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    let x0 = bits(&feats[0]);
    for (l, f) in feats.iter().enumerate() {
        ensure(bits(f) == x0, || format!("X^{l} differs from X^0"))?;
    }
    for g in &t.graphs[1..] {
        ensure(
            g.in_neighbors == t.graphs[0].in_neighbors && g.edge_sims == t.graphs[0].edge_sims,
            || format!("graph {} differs from graph 1", g.layer),
        )?;
    }
    Ok(format!(
        "{} layers bitwise equal to X^0, {} identical graphs",
        feats.len() - 1,
        t.graphs.len()
    ))
}

fn c6_probabilities() -> Outcome {
    let cfg = seed7_config();
    let w: Weights = init_weights(&cfg).map_err(|e| e.to_string())?;
    let (_, grid) = fixture_grid();
    let t = forward(&grid, &w, &cfg).map_err(|e| e.to_string())?;
    let mut worst_sum = 0.0f64;
    let mut worst_p = 0.0f64;
    for (idx, h) in t.heads.iter().enumerate() {
        let s: f64 = h.probs.iter().map(|&p| p as f64).sum();
        worst_sum = worst_sum.max((s - 1.0).abs());
        ensure((s - 1.0).abs() <= 1e-6, || {
            format!("layer {} probabilities sum to {s}", idx + 1)
        })?;
        let x = t.features_at(idx + 1).ok_or("missing features")?;
        for label in 0..cfg.num_classes {
            let p = layer_prediction(x, &w, label).map_err(|e| e.to_string())?.p;
            let stored = h.probs[label] as f64;
            worst_p = worst_p.max((p - stored).abs());
            ensure((p - stored).abs() <= 1e-6, || {
                format!("layer {} class {label}: {p} vs {stored}", idx + 1)
            })?;
        }
    }
    let with_w = analyze_trace(
        &t,
        AnalysisInputs {
            grid: &grid,
            mask: None,
            label: Some(3),
            weights: Some(&w),
            variant: ModularityVariant::Printed,
        },
    )
    .map_err(|e| e.to_string())?;
    let stored = analyze_trace(
        &t,
        AnalysisInputs {
            grid: &grid,
            mask: None,
            label: Some(3),
            weights: None,
            variant: ModularityVariant::Printed,
        },
    )
    .map_err(|e| e.to_string())?;
    for (a, b) in with_w.iter().zip(&stored) {
        ensure((a.p.unwrap() - b.p.unwrap()).abs() <= 1e-6, || {
            format!("layer {} report p differs", a.layer)
        })?;
    }
    let direct: HeadOutput<f32> = predict(&grid, &w, &cfg).map_err(|e| e.to_string())?;
    let last = t.heads.last().ok_or("no heads")?;
    let same = |a: &[f32], b: &[f32]| a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits());
    ensure(
        same(&direct.logits, &last.logits) && same(&direct.probs, &last.probs),
        || "final head differs from the prediction path".into(),
    )?;
    ensure(t.prediction == direct.argmax(), || {
        "stored prediction is not the argmax".into()
    })?;
    Ok(format!(
        "sum error {worst_sum:.1e}, recomputed p error {worst_p:.1e}, final head bitwise equal"
    ))
}

fn c7_invariance() -> Outcome {
    let mut r = rng(707);
    let mut worst = 0.0f64;
    for trial in 0..50 {
        let d = 2 + below(&mut r, 31);
        let rows = random_rows(&mut r, 196, d);
        let x = NodeFeatures::new(Matrix::from_rows(&rows).unwrap(), 0);
        let g = knn_graph(&x, 1 + below(&mut r, 20)).map_err(|e| e.to_string())?;
        let img = random_image(&mut r);
        let grid = partition(&img).unwrap();
        let coords = grid.coords();
        let mask: Vec<bool> = (0..196).map(|_| below(&mut r, 2) == 1).collect();
        let cfg = ModelConfig {
            num_layers: 1,
            hidden_dim: d,
            k: 3,
            num_classes: 5,
            seed: trial,
            ..ModelConfig::default()
        };
        let w: Weights64 = init_weights(&cfg).map_err(|e| e.to_string())?;
        let label = below(&mut r, 5);

        let pi = permutation(&mut r, 196);
        let mut prow = vec![Vec::new(); 196];
        let mut pcoords = vec![GridCoord::of_index(0); 196];
        let mut ppatches = vec![[0u8; PATCH_LEN]; 196];
        let mut pmask = vec![false; 196];
        let mut plists = vec![Vec::new(); 196];
        let mut psims = vec![Vec::new(); 196];
        for i in 0..196 {
            prow[pi[i]] = rows[i].clone();
            pcoords[pi[i]] = coords[i];
            ppatches[pi[i]] = *grid.patch(i);
            pmask[pi[i]] = mask[i];
            plists[pi[i]] = g.in_neighbors[i].iter().map(|&j| pi[j]).collect();
            psims[pi[i]] = g.edge_sims[i].clone();
        }
        let px = NodeFeatures::new(Matrix::from_rows(&prow).unwrap(), 0);
        let pg = LayerGraph {
            layer: g.layer,
            in_neighbors: plists,
            edge_sims: psims,
        };
        let pgrid = PatchGrid::from_patches(ppatches).unwrap();

        let e = |r: Result<f64, vigxray::metrics::MetricsError>| r.map_err(|e| e.to_string());
        let pairs = [
            (
                "S_emb",
                e(embedding_similarity(&g, &x))?,
                e(embedding_similarity(&pg, &px))?,
            ),
            (
                "D",
                e(spatial_distance(&g, &coords))?,
                e(spatial_distance(&pg, &pcoords))?,
            ),
            (
                "S_vis",
                e(visual_similarity(&g, &grid))?,
                e(visual_similarity(&pg, &pgrid))?,
            ),
            (
                "Q",
                e(modularity(&g, &PatchMask::from_bits_unchecked(mask.clone())).map(|q| q.0))?,
                e(modularity(&pg, &PatchMask::from_bits_unchecked(pmask)).map(|q| q.0))?,
            ),
            (
                "p",
                e(layer_prediction(&x, &w, label).map(|p| p.p))?,
                e(layer_prediction(&px, &w, label).map(|p| p.p))?,
            ),
        ];
        for (name, a, b) in pairs {
            worst = worst.max((a - b).abs());
            ensure((a - b).abs() <= 1e-9, || {
                format!("trial {trial} {name}: {a} vs permuted {b}")
            })?;
        }
    }
    let mut worst_scale = 0.0f64;
    for trial in 0..50 {
        let d = 1 + below(&mut r, 64);
        let n = 2 + below(&mut r, 195);
        let k = 1 + below(&mut r, 20.min(n - 1));
        let rows = random_rows(&mut r, n, d);
        let c = (unit(&mut r) * 3.0).exp();
        let scaled: Vec<Vec<f64>> = rows.iter().map(|v| v.iter().map(|a| a * c).collect()).collect();
        let x = NodeFeatures::new(Matrix::from_rows(&rows).unwrap(), 0);
        let y = NodeFeatures::new(Matrix::from_rows(&scaled).unwrap(), 0);
        let gx = knn_graph(&x, k).map_err(|e| e.to_string())?;
        let gy = knn_graph(&y, k).map_err(|e| e.to_string())?;
        ensure(gx.in_neighbors == gy.in_neighbors, || {
            format!("scaling trial {trial} (c={c}) changed edges")
        })?;
        let a = embedding_similarity(&gx, &x).map_err(|e| e.to_string())?;
        let b = embedding_similarity(&gy, &y).map_err(|e| e.to_string())?;
        worst_scale = worst_scale.max((a - b).abs());
        ensure((a - b).abs() <= 1e-9, || {
            format!("scaling trial {trial}: S_emb {a} vs {b}")
        })?;
    }
    Ok(format!(
        "50 permutations (max diff {worst:.1e}), 50 scalings (S_emb diff {worst_scale:.1e}, edges identical)"
    ))
}

fn c8_round_trips() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = ModelConfig {
        num_layers: 2,
        hidden_dim: 8,
        k: 4,
        k_end: Some(6),
        num_classes: 3,
        num_heads: 2,
        ffn_ratio: 2,
        seed: 5,
    };
    let w: Weights = init_weights(&cfg).map_err(|e| e.to_string())?;
    let wp = dir.path().join("w.vxw");
    save_weights(&w, &wp).map_err(|e| e.to_string())?;
    let bytes = fs::read(&wp).map_err(|e| e.to_string())?;
    let back = load_weights(&wp).map_err(|e| e.to_string())?;
    ensure(back == w && encode_weights(&back) == bytes, || {
        "weights did not round-trip".into()
    })?;

    let (_, grid) = fixture_grid();
    let t = forward(&grid, &w, &cfg).map_err(|e| e.to_string())?.with_label(Some(1));
    for trace in [t.clone(), t.clone().without_features()] {
        let tp = dir.path().join("t.trace");
        write_trace(&trace, &tp).map_err(|e| e.to_string())?;
        let tb = fs::read(&tp).map_err(|e| e.to_string())?;
        let back = read_trace(&tp).map_err(|e| e.to_string())?;
        ensure(back == trace && encode_trace(&back) == tb, || {
            "trace did not round-trip".into()
        })?;
    }

    let mut wrong_magic = bytes.clone();
    wrong_magic[0] = b'X';
    let mut wrong_version = bytes.clone();
    wrong_version[4] = 9;
    let mut inconsistent = bytes.clone();
    inconsistent[10..14].copy_from_slice(&16u32.to_le_bytes());
    let w_cases: [Case<'_, Weights, WeightsError>; 4] = [
        ("truncated", decode_weights(&bytes[..bytes.len() / 2]), |e| {
            matches!(e, WeightsError::Truncated(_))
        }),
        ("magic", decode_weights(&wrong_magic), |e| {
            matches!(e, WeightsError::BadMagic)
        }),
        ("version", decode_weights(&wrong_version), |e| {
            matches!(e, WeightsError::Version { .. })
        }),
        ("shape", decode_weights(&inconsistent), |e| {
            matches!(e, WeightsError::Inconsistent { .. })
        }),
    ];
    for (name, res, ok) in &w_cases {
        match res {
            Err(e) if ok(e) => {}
            other => return Err(format!("weights {name}: unexpected {:?}", other.as_ref().err())),
        }
    }

    let tb = encode_trace(&t);
    let text_end = tb.windows(5).position(|w| w == b"\nend\n").ok_or("no header end")?;
    let header = String::from_utf8(tb[..text_end].to_vec()).map_err(|e| e.to_string())?;
    let patch = |from: &str, to: &str| -> Vec<u8> {
        let mut v = header.replacen(from, to, 1).into_bytes();
        v.extend_from_slice(&tb[text_end..]);
        v
    };
    let t_cases: [Case<'_, Trace<f32>, TraceError>; 4] = [
        ("truncated", decode_trace(&tb[..tb.len() - 100]), |e| {
            matches!(e, TraceError::Truncated(_))
        }),
        ("magic", decode_trace(&patch("VIGXRAY-TRACE", "VIGXRAY-TRACX")), |e| {
            matches!(e, TraceError::Format(_))
        }),
        (
            "version",
            decode_trace(&patch("VIGXRAY-TRACE 1", "VIGXRAY-TRACE 7")),
            |e| matches!(e, TraceError::Version { .. }),
        ),
        ("shape", decode_trace(&patch("\ndim 8\n", "\ndim 9\n")), |e| {
            matches!(e, TraceError::Invariant { .. })
        }),
    ];
    for (name, res, ok) in &t_cases {
        match res {
            Err(e) if ok(e) => {}
            other => return Err(format!("trace {name}: unexpected {:?}", other.as_ref().err())),
        }
    }
    Ok("weights and traces bitwise; 8 corruptions give their distinct errors".into())
}

fn cli(args: &[&str]) -> Result<std::process::Output, String> {
    let out = Command::new(BIN).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "vigxray {} failed ({}): {}",
            args.join(" "),
            out.status,
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(out)
}

fn c9_end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |n: &str| dir.path().join(n).to_string_lossy().into_owned();
    let image = fixture("scene.png").to_string_lossy().into_owned();
    let mask = fixture("scene_mask.png").to_string_lossy().into_owned();
    let start = Instant::now();
    cli(&[
        "init-weights",
        "--seed",
        "7",
        "--dim",
        "64",
        "--layers",
        "16",
        "--k",
        "9",
        "--classes",
        "10",
        "-o",
        &p("w.vxw"),
    ])?;
    cli(&[
        "analyze",
        "--image",
        &image,
        "--weights",
        &p("w.vxw"),
        "--mask",
        &mask,
        "--label",
        "3",
        "--out-dir",
        &p("out"),
    ])?;
    cli(&["aggregate", "--input-dir", &p("out"), "--out", &p("agg.csv")])?;
    let elapsed = start.elapsed();

    let csv = fs::read_to_string(p("out/scene.metrics.csv")).map_err(|e| e.to_string())?;
    let mut lines = csv.lines();
    ensure(
        lines.next() == Some("image_id,layer,S_vis,D,S_emb,Q,p,top1_hit"),
        || "metrics header".into(),
    )?;
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    ensure(rows.len() == 16, || format!("{} metric rows", rows.len()))?;
    for row in &rows {
        let f = |i: usize| row[i].parse::<f64>().map_err(|_| format!("bad field {:?}", row[i]));
        let (s_vis, dist, s_emb) = (f(2)?, f(3)?, f(4)?);
        ensure((-1.0..=1.0).contains(&s_vis) && (-1.0..=1.0).contains(&s_emb), || {
            format!("similarity out of range: {row:?}")
        })?;
        ensure((1.0..=26.0).contains(&dist), || format!("D out of range: {row:?}"))?;
        ensure(row[5..].iter().all(|v| !v.is_empty()), || {
            format!("empty column: {row:?}")
        })?;
    }
    let trace = read_trace(p("out/scene.trace")).map_err(|e| e.to_string())?;
    ensure(trace.graphs.iter().all(|g| g.num_edges() == 1764), || {
        "edge count is not 1764".into()
    })?;
    let agg = fs::read_to_string(p("agg.csv")).map_err(|e| e.to_string())?;
    let agg: Vec<&str> = agg.lines().collect();
    ensure(agg[0] == "layers,S_vis,D,S_emb,Q,p,acc" && agg.len() == 9, || {
        format!("aggregate table: {agg:?}")
    })?;
    ensure(agg[1].starts_with("1-2,") && agg[8].starts_with("15-16,"), || {
        "aggregate layer pairs".into()
    })?;
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "16 rows in range, |E|=1764 per layer, 8-row table, {:.1}s",
        elapsed.as_secs_f64()
    ))
}

fn c10_golden_heatmaps() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |n: &str| dir.path().join(n).to_string_lossy().into_owned();
    let image = fixture("scene.png").to_string_lossy().into_owned();
    cli(&["init-weights", "--seed", "7", "-o", &p("w.vxw")])?;
    cli(&[
        "heatmap",
        "--image",
        &image,
        "--weights",
        &p("w.vxw"),
        "--patch",
        "5,7",
        "--layers",
        "4,10",
        "--out-dir",
        &p("hm"),
    ])?;
    for name in ["scene_4_5_7.png", "scene_10_5_7.png"] {
        let got = fs::read(dir.path().join("hm").join(name)).map_err(|e| format!("{name}: {e}"))?;
        let want = fs::read(fixture("golden").join(name)).map_err(|e| e.to_string())?;
        ensure(got == want, || format!("{name} differs from the golden file"))?;
    }

    // every in-neighbor at the same similarity
    let cfg = ModelConfig {
        num_layers: 1,
        ..ModelConfig::default()
    };
    let lists: Vec<Vec<usize>> = (0..196).map(|i| (1..=9).map(|s| (i + s) % 196).collect()).collect();
    let graph = LayerGraph {
        layer: 1,
        edge_sims: vec![vec![0.5f32; 9]; 196],
        in_neighbors: lists,
    };
    let t = Trace {
        config: cfg,
        features: None,
        graphs: vec![graph],
        heads: vec![HeadOutput::from_logits(vec![0.0f32; 10])],
        prediction: 0,
        label: None,
    };
    t.validate().map_err(|e| e.to_string())?;
    let spec = HeatmapSpec::new(100, vec![1]);
    let entries = neighbor_intensities(&t, 1, 100, &spec).map_err(|e| e.to_string())?;
    ensure(
        entries.len() == 9 && entries.iter().all(|e| e.alpha == spec.ceiling),
        || format!("{entries:?}"),
    )?;
    write_trace(&t, p("flat.trace")).map_err(|e| e.to_string())?;
    cli(&[
        "heatmap",
        "--image",
        &image,
        "--trace",
        &p("flat.trace"),
        "--patch",
        "100",
        "--layers",
        "1",
        "--out-dir",
        &p("flat"),
    ])?;
    let out = load_image(dir.path().join("flat/scene_1_7_2.png")).map_err(|e| e.to_string())?;
    let base = load_image(fixture("scene.png")).map_err(|e| e.to_string())?;
    for j in 101..110 {
        let GridCoord { row, col } = GridCoord::of_index(j);
        for (dy, dx) in [(0, 0), (7, 9), (15, 15)] {
            let (bx, by) = (col * 16 + dx, row * 16 + dy);
            let src = base.pixel(bx, by);
            let a = spec.ceiling;
            let want = [
                ((1.0 - a) * src[0] as f64 + a * 255.0).round() as u8,
                ((1.0 - a) * src[1] as f64).round() as u8,
                ((1.0 - a) * src[2] as f64).round() as u8,
            ];
            let got = out.pixel(bx * 3 + 1, by * 3 + 1);
            ensure(got == want, || {
                format!("neighbor {j} pixel ({bx},{by}): {got:?} vs {want:?}")
            })?;
        }
    }
    Ok("2 goldens bitwise equal; all-equal similarities render at ceiling alpha".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("knn oracle equivalence", c1_knn_oracle),
        ("metric oracle equivalence", c2_metric_oracles),
        ("modularity exactness", c3_modularity),
        ("conv oracle equivalence", c4_conv_oracle),
        ("residual identity", c5_residual_identity),
        ("probability contracts", c6_probabilities),
        ("invariance suite", c7_invariance),
        ("round-trips and corruption", c8_round_trips),
        ("end-to-end smoke", c9_end_to_end),
        ("golden heatmaps", c10_golden_heatmaps),
    ];
    let mut failed = 0;
    for (n, (name, f)) in criteria.iter().enumerate() {
        let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        match res {
            Ok(detail) => println!("PASS  {:>2}. {name}: {detail}", n + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL  {:>2}. {name}: {why}", n + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
