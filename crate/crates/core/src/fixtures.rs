//! Small graphs and chains for tests, examples and benchmarks.

use rand::Rng;

use crate::model::{CDGraph, CDGraphBuilder, CKind, Chain, DKind};

/// `x -> f1 -> d1 -> f2 -> out -> loss -> gout -> b2 -> g1 -> b1 -> gin`,
/// where `b2` also reads `d1` and `b1` also reads `x`.
pub fn toy_block() -> CDGraph {
    let mut b = CDGraphBuilder::new();
    let x = b.data("x", 4, DKind::Data);
    let d1 = b.data("d1", 8, DKind::Data);
    let out = b.data("out", 4, DKind::Data);
    let gout = b.data("gout", 4, DKind::Grad);
    let g1 = b.data("g1", 8, DKind::Grad);
    let gin = b.data("gin", 4, DKind::Grad);
    b.compute("f1", CKind::Forward, 2, 0, &[x], &[d1]);
    b.compute("f2", CKind::Forward, 3, 0, &[d1], &[out]);
    b.compute("loss", CKind::Loss, 0, 0, &[out], &[gout]);
    b.compute("b2", CKind::Backward, 3, 0, &[gout, d1], &[g1]);
    b.compute("b1", CKind::Backward, 2, 0, &[g1, x], &[gin]);
    b.input(x).output(out).input_grad(gin);
    b.build()
}

/// A straight block `in -> f_1 .. f_n -> out` with its mirrored backward.
///
/// `acts[0]` is the input size, `acts[n]` the output size; `fwd[i]` and
/// `bwd[i]` are the times of layer `i`. Layer `i`'s backward reads the
/// incoming gradient and the layer input.
pub fn linear_block(acts: &[u64], fwd: &[u64], bwd: &[u64]) -> CDGraph {
    let n = fwd.len();
    assert!(n >= 1 && acts.len() == n + 1 && bwd.len() == n);
    let mut b = CDGraphBuilder::new();
    let a: Vec<usize> = (0..=n).map(|i| b.data(&format!("a{i}"), acts[i], DKind::Data)).collect();
    let g: Vec<usize> = (0..=n).map(|i| b.data(&format!("g{i}"), acts[i], DKind::Grad)).collect();
    for i in 0..n {
        b.compute(&format!("f{}", i + 1), CKind::Forward, fwd[i], 0, &[a[i]], &[a[i + 1]]);
    }
    b.compute("loss", CKind::Loss, 0, 0, &[a[n]], &[g[n]]);
    for i in (0..n).rev() {
        b.compute(&format!("b{}", i + 1), CKind::Backward, bwd[i], 0, &[g[i + 1], a[i]], &[g[i]]);
    }
    b.input(a[0]).output(a[n]).input_grad(g[0]);
    b.build()
}

/// A chain of straight blocks sharing boundary sizes.
pub fn linear_chain(layers: &[(Vec<u64>, Vec<u64>, Vec<u64>)]) -> Chain {
    Chain::new(layers.iter().map(|(a, f, b)| linear_block(a, f, b)).collect())
}

/// Two-block chain used throughout the tests: boundary sizes (4, 4, 2),
/// forward times 10 and 8, backward times 12 and 9, and 10 and 8 bytes
/// resident after each block's forward when nothing is freed.
pub fn tiny_chain() -> Chain {
    linear_chain(&[
        (vec![4, 2, 4], vec![4, 6], vec![5, 7]),
        (vec![4, 2, 2], vec![3, 5], vec![4, 5]),
    ])
}

/// Attention-like block: layer norm, a fused q/k/v projection, a score tensor,
/// a mix and a residual add, with the matching backward.
pub fn transformer_block(width: u64) -> CDGraph {
    let w = width;
    let mut b = CDGraphBuilder::new();
    let x = b.data("x", w, DKind::Data);
    let ln = b.data("ln", w, DKind::Data);
    let q = b.data("q", w, DKind::Data);
    let k = b.data("k", w, DKind::Data);
    let v = b.data("v", w, DKind::Data);
    let att = b.data("att", 2 * w, DKind::Data);
    let mix = b.data("mixed", w, DKind::Data);
    let y = b.data("y", w, DKind::Data);
    let gy = b.data("gy", w, DKind::Grad);
    let gmix = b.data("gmix", w, DKind::Grad);
    let gatt = b.data("gatt", 2 * w, DKind::Grad);
    let gv = b.data("gv", w, DKind::Grad);
    let gq = b.data("gq", w, DKind::Grad);
    let gk = b.data("gk", w, DKind::Grad);
    let gln = b.data("gln", w, DKind::Grad);
    let gx = b.data("gx", w, DKind::Grad);
    b.compute("norm", CKind::Forward, 2, 0, &[x], &[ln]);
    b.compute("proj_qkv", CKind::Forward, 12, 0, &[ln], &[q, k, v]);
    b.compute("scores", CKind::Forward, 6, w / 2, &[q, k], &[att]);
    b.compute("mix", CKind::Forward, 5, 0, &[att, v], &[mix]);
    b.compute("residual", CKind::Forward, 1, 0, &[mix, x], &[y]);
    b.compute("loss", CKind::Loss, 0, 0, &[y], &[gy]);
    b.compute("residual_bwd", CKind::Backward, 1, 0, &[gy], &[gmix]);
    b.compute("mix_bwd", CKind::Backward, 10, 0, &[gmix, att, v], &[gatt, gv]);
    b.compute("scores_bwd", CKind::Backward, 12, 0, &[gatt, q, k], &[gq, gk]);
    b.compute("proj_qkv_bwd", CKind::Backward, 12, 0, &[gq, gk, gv, ln], &[gln]);
    b.compute("norm_bwd", CKind::Backward, 2, 0, &[gln, x, gy], &[gx]);
    b.input(x).output(y).input_grad(gx);
    b.build()
}

/// Random valid block with at most `max_t` compute and `max_d` data nodes
/// (both at least 4). Sizes are 1..=16, times 1..=9, and some backward
/// nodes accumulate into a shared gradient.
pub fn random_block<R: Rng>(rng: &mut R, max_t: usize, max_d: usize) -> CDGraph {
    assert!(max_t >= 4 && max_d >= 4);
    let room = (max_d - 3).min(max_t - 2);
    let nf = rng.gen_range(1..=room.min(3));
    let n_grads_cap = max_d - 2 - nf;
    let nb = rng.gen_range(1..=(max_t - 1 - nf));
    let mut b = CDGraphBuilder::new();
    let size = |rng: &mut R| rng.gen_range(1..=16);
    let time = |rng: &mut R| rng.gen_range(1..=9);
    let tmp = |rng: &mut R| if rng.gen_bool(0.25) { rng.gen_range(1..=4) } else { 0 };

    let x = b.data("x", size(rng), DKind::Data);
    let mut fwd_data = vec![x];
    for i in 0..nf {
        let d = b.data(&format!("y{}", i + 1), size(rng), DKind::Data);
        let mut deps = vec![*fwd_data.last().unwrap()];
        for &e in &fwd_data[..fwd_data.len() - 1] {
            if rng.gen_bool(0.3) {
                deps.push(e);
            }
        }
        let (t, m) = (time(rng), tmp(rng));
        b.compute(&format!("f{}", i + 1), CKind::Forward, t, m, &deps, &[d]);
        fwd_data.push(d);
    }
    let out = *fwd_data.last().unwrap();
    let gout = b.data("gout", size(rng), DKind::Grad);
    b.compute("loss", CKind::Loss, 0, 0, &[out], &[gout]);

    // Gradients available for consumption, and whether each was consumed.
    let mut grads: Vec<(usize, bool)> = vec![(gout, false)];
    let mut made = 0;
    for j in 0..nb {
        let mut deps: Vec<usize> = Vec::new();
        let last = grads.len() - 1;
        for (i, g) in grads.iter_mut().enumerate() {
            if i == last || rng.gen_bool(0.3) {
                deps.push(g.0);
                g.1 = true;
            }
        }
        for &d in &fwd_data {
            if rng.gen_bool(0.4) {
                deps.push(d);
            }
        }
        let open: Vec<usize> = (1..grads.len()).filter(|&i| !grads[i].1 && !deps.contains(&grads[i].0)).collect();
        let out_d = if made < n_grads_cap && (open.is_empty() || rng.gen_bool(0.7)) {
            made += 1;
            let d = b.data(&format!("g{}", j + 1), size(rng), DKind::Grad);
            grads.push((d, false));
            d
        } else if let Some(&i) = open.first() {
            grads[i].0
        } else {
            break;
        };
        let (t, m) = (time(rng), tmp(rng));
        b.compute(&format!("b{}", j + 1), CKind::Backward, t, m, &deps, &[out_d]);
    }
    b.input(x).output(out);
    b.build()
}
