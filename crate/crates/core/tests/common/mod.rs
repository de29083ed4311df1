//! Checks shared by the focused test files and the acceptance target. Each
//! returns the measured quantity so callers can assert or report it.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::rc::Rc;

use graphpmu_core::cluster::{ari, gmm_fit, GmmConfig};
use graphpmu_core::graphenc::{
    edges_to_adjacency, js_mi_loss, normalize_adjacency, prufer_decode, sample_negative_tree, Fusion, GraphMode,
    GraphModel, GraphShape,
};
use graphpmu_core::numerics::rng;
use graphpmu_core::numerics::{glorot_uniform, Activation, Gradients, ParamSet, Tape, Tensor, Var};
use graphpmu_core::temporal::{AedParams, AedShape, DecoderSeed};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

pub type Loss<'a> = dyn Fn(&ParamSet, bool) -> (f64, Option<Gradients>) + 'a;

/// Largest relative error between the tape gradient and a central
/// difference over every scalar of `params`. Magnitudes below 1e-6 are
/// compared absolutely, since the difference quotient carries ~1e-10 of
/// rounding noise at this step size.
pub fn max_rel_error(params: &mut ParamSet, loss: &Loss) -> f64 {
    let (_, grads) = loss(params, true);
    let grads = grads.expect("analytic gradients");
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for id in params.ids().collect::<Vec<_>>() {
        for k in 0..params.get(id).len() {
            let orig = params.get(id).data()[k];
            params.get_mut(id).data_mut()[k] = orig + h;
            let (up, _) = loss(params, false);
            params.get_mut(id).data_mut()[k] = orig - h;
            let (down, _) = loss(params, false);
            params.get_mut(id).data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads.get(id).map_or(0.0, |g| g.data()[k]);
            let denom = numeric.abs().max(analytic.abs()).max(1e-6);
            worst = worst.max((numeric - analytic).abs() / denom);
        }
    }
    worst
}

/// Random matrix whose entries stay at least 0.1 away from zero, so the
/// leaky kink is never straddled by the difference step.
fn input(shape: &[usize], r: &mut rng::Rng) -> Tensor {
    glorot_uniform(shape, r).unwrap().map(|v| {
        let v = 2.0 * v;
        if v.abs() < 0.1 {
            v.signum() * 0.1 + v
        } else {
            v
        }
    })
}

type Build = fn(&mut Tape, &[Var]) -> Var;

/// Gradient error of one op: the inputs are parameters and the loss is a
/// fixed random weighting of the op's output.
fn op_error(shapes: &[&[usize]], build: Build) -> f64 {
    let mut r = rng::stream(3, "op-inputs");
    let mut params = ParamSet::new();
    for (i, s) in shapes.iter().enumerate() {
        params.push(format!("x{i}"), input(s, &mut r));
    }
    let weights: Rc<std::cell::RefCell<Option<Tensor>>> = Rc::default();
    let loss = |p: &ParamSet, want: bool| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = p.ids().map(|id| tape.param(id, p.get(id))).collect();
        let out = build(&mut tape, &vars);
        let shape = tape.value(out).shape().to_vec();
        let w = weights
            .borrow_mut()
            .get_or_insert_with(|| {
                let mut wr = rng::stream(4, "op-weights");
                let len: usize = shape.iter().product();
                Tensor::new(shape.clone(), (0..len).map(|_| wr.random_range(-1.0..1.0)).collect()).unwrap()
            })
            .clone();
        let wv = tape.constant(w);
        let prod = tape.mul(out, wv).unwrap();
        let l = tape.sum(prod);
        (tape.value(l).data()[0], want.then(|| tape.backward(l).unwrap()))
    };
    max_rel_error(&mut params, &loss)
}

fn blocks(n: usize, count: usize) -> Rc<Vec<Tensor>> {
    let mut r = rng::stream(5, "blocks");
    Rc::new((0..count).map(|_| glorot_uniform(&[n, n], &mut r).unwrap()).collect())
}

/// `(op name, measured error, tolerance)` for every differentiable tape op.
pub fn op_gradient_errors() -> Vec<(&'static str, f64, f64)> {
    const ELEM: f64 = 1e-4;
    const OTHER: f64 = 1e-3;
    let cases: Vec<(&'static str, Vec<&[usize]>, Build, f64)> = vec![
        ("add", vec![&[3, 4], &[3, 4]], |t, v| t.add(v[0], v[1]).unwrap(), ELEM),
        ("sub", vec![&[3, 4], &[3, 4]], |t, v| t.sub(v[0], v[1]).unwrap(), ELEM),
        ("mul", vec![&[3, 4], &[3, 4]], |t, v| t.mul(v[0], v[1]).unwrap(), ELEM),
        ("scale", vec![&[3, 4]], |t, v| t.scale(v[0], -1.7), ELEM),
        (
            "leaky_relu",
            vec![&[3, 4]],
            |t, v| t.act(v[0], Activation::leaky()),
            ELEM,
        ),
        (
            "softplus",
            vec![&[3, 4]],
            |t, v| t.act(v[0], Activation::Softplus),
            ELEM,
        ),
        ("sigmoid", vec![&[3, 4]], |t, v| t.act(v[0], Activation::Sigmoid), ELEM),
        ("tanh", vec![&[3, 4]], |t, v| t.act(v[0], Activation::Tanh), ELEM),
        (
            "matmul",
            vec![&[3, 4], &[4, 2]],
            |t, v| t.matmul(v[0], v[1]).unwrap(),
            OTHER,
        ),
        (
            "add_row",
            vec![&[3, 4], &[1, 4]],
            |t, v| t.add_row(v[0], v[1]).unwrap(),
            OTHER,
        ),
        (
            "slice_cols",
            vec![&[3, 5]],
            |t, v| t.slice_cols(v[0], 1, 4).unwrap(),
            OTHER,
        ),
        (
            "slice_rows",
            vec![&[5, 3]],
            |t, v| t.slice_rows(v[0], 2, 4).unwrap(),
            OTHER,
        ),
        (
            "concat_cols",
            vec![&[3, 2], &[3, 4]],
            |t, v| t.concat_cols(&[v[0], v[1], v[0]]).unwrap(),
            OTHER,
        ),
        (
            "concat_rows",
            vec![&[2, 3], &[4, 3]],
            |t, v| t.concat_rows(&[v[1], v[0], v[1]]).unwrap(),
            OTHER,
        ),
        ("sum", vec![&[3, 4]], |t, v| t.sum(v[0]), OTHER),
        ("mean", vec![&[3, 4]], |t, v| t.mean(v[0]), OTHER),
        (
            "block_left_mul_shared",
            vec![&[6, 2]],
            |t, v| t.block_left_mul(blocks(3, 1), v[0]).unwrap(),
            OTHER,
        ),
        (
            "block_left_mul_batched",
            vec![&[6, 2]],
            |t, v| t.block_left_mul(blocks(3, 2), v[0]).unwrap(),
            OTHER,
        ),
        (
            "block_mean_rows",
            vec![&[6, 2]],
            |t, v| t.block_mean_rows(v[0], 3).unwrap(),
            OTHER,
        ),
        (
            "repeat_rows",
            vec![&[2, 3]],
            |t, v| t.repeat_rows(v[0], 3).unwrap(),
            OTHER,
        ),
        (
            "reshape",
            vec![&[3, 4]],
            |t, v| t.reshape(v[0], vec![2, 6]).unwrap(),
            OTHER,
        ),
    ];
    cases
        .into_iter()
        .map(|(name, shapes, build, tol)| (name, op_error(&shapes, build), tol))
        .collect()
}

pub fn tiny_aed_shape() -> AedShape {
    AedShape {
        window: 6,
        channels: 2,
        enc1: 3,
        enc2: 4,
        embed: 3,
        seed: 4,
        dec1: 4,
        dec2: 3,
        decoder: DecoderSeed::PerStep,
    }
}

/// Composed autoencoder loss on three random windows.
pub fn aed_gradient_error(decoder: DecoderSeed) -> f64 {
    let aed = AedParams::init(
        AedShape {
            decoder,
            ..tiny_aed_shape()
        },
        1,
        7,
    )
    .unwrap();
    let mut r = rng::stream(1, "x");
    let windows: Vec<Tensor> = (0..3)
        .map(|_| glorot_uniform(&[6, 2], &mut r).unwrap().scale(3.0))
        .collect();
    let refs: Vec<&Tensor> = windows.iter().collect();
    let x = aed.batch(&refs).unwrap();
    let mut params = aed.params.clone();
    let loss = |p: &ParamSet, want: bool| {
        let mut m = aed.clone();
        m.params = p.clone();
        let mut tape = Tape::new();
        let b = m.bind(&mut tape, true);
        let xv = tape.constant(x.clone());
        let l = b.loss(&mut tape, xv, 3).unwrap();
        (tape.value(l).data()[0], want.then(|| tape.backward(l).unwrap()))
    };
    max_rel_error(&mut params, &loss)
}

fn path3() -> Tensor {
    edges_to_adjacency(3, &[(0, 1), (1, 2)])
}

/// Composed GCN + discriminator objective on a 3-node toy, in both modes.
pub fn gcn_gradient_error(mode: GraphMode) -> f64 {
    let shape = GraphShape {
        input: 2,
        hidden1: 4,
        hidden2: 3,
        disc_hidden: 2,
        fusion: Fusion::Product,
        mode,
    };
    let model = GraphModel::init(shape, 11).unwrap();
    let mut r = rng::stream(2, "toy");
    let x = glorot_uniform(&[6, 2], &mut r).unwrap().scale(4.0);
    let pos = Rc::new(vec![normalize_adjacency(&path3()).unwrap()]);
    let neg = Rc::new(vec![
        normalize_adjacency(&edges_to_adjacency(3, &[(1, 0), (0, 2)])).unwrap(),
        normalize_adjacency(&edges_to_adjacency(3, &[(0, 2), (2, 1)])).unwrap(),
    ]);
    let mut params = model.params.clone();
    let loss = |p: &ParamSet, want: bool| {
        let mut m = model.clone();
        m.params = p.clone();
        let mut tape = Tape::new();
        let b = m.bind(&mut tape, true);
        let xv = tape.constant(x.clone());
        let (ps, ns) = b.batch_scores(&mut tape, pos.clone(), neg.clone(), xv, 3).unwrap();
        let l = b.neg_mi(&mut tape, ps, ns).unwrap();
        (tape.value(l).data()[0], want.then(|| tape.backward(l).unwrap()))
    };
    max_rel_error(&mut params, &loss)
}

/// Largest change of the graph vector under random node relabelings.
pub fn readout_permutation_error() -> f64 {
    let model = GraphModel::init(GraphShape::standard(5), 3).unwrap();
    let mut r = rng::stream(6, "perm");
    let mut worst: f64 = 0.0;
    for trial in 0..20 {
        let n = 3 + trial % 6;
        let a = sample_negative_tree(n, &mut r).unwrap();
        let x = glorot_uniform(&[n, 5], &mut r).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, r.random_range(0..=i));
        }
        let pa = Tensor::new(
            vec![n, n],
            (0..n * n).map(|k| a.get2(perm[k / n], perm[k % n])).collect(),
        )
        .unwrap();
        let px = Tensor::new(vec![n, 5], (0..n * 5).map(|k| x.get2(perm[k / 5], k % 5)).collect()).unwrap();
        let (_, g1) = model.encode(&normalize_adjacency(&a).unwrap(), &x).unwrap();
        let (_, g2) = model.encode(&normalize_adjacency(&pa).unwrap(), &px).unwrap();
        for (u, v) in g1.iter().zip(&g2) {
            worst = worst.max((u - v).abs());
        }
    }
    worst
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(m: &Tensor) -> Vec<f64> {
    let n = m.rows();
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| m.row_slice(i).to_vec()).collect();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-22 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}

/// (largest asymmetry, largest spectral radius) of normalised adjacencies of
/// random graphs with up to 8 nodes.
pub fn adjacency_spectrum() -> (f64, f64) {
    let mut r = rng::stream(7, "adjacency");
    let mut asym: f64 = 0.0;
    let mut radius: f64 = 0.0;
    for trial in 0..200 {
        let n = 1 + trial % 8;
        let mut a = Tensor::zeros(&[n, n]);
        for i in 0..n {
            for j in i + 1..n {
                if r.random_bool(0.4) {
                    a.data_mut()[i * n + j] = 1.0;
                    a.data_mut()[j * n + i] = 1.0;
                }
            }
        }
        let norm = normalize_adjacency(&a).unwrap();
        for i in 0..n {
            for j in 0..n {
                asym = asym.max((norm.get2(i, j) - norm.get2(j, i)).abs());
            }
        }
        for e in jacobi_eigenvalues(&norm) {
            radius = radius.max(e.abs());
        }
    }
    (asym, radius)
}

fn is_tree(a: &Tensor) -> bool {
    let n = a.rows();
    let mut edges = 0;
    for i in 0..n {
        if a.get2(i, i) != 0.0 {
            return false;
        }
        for j in 0..n {
            if a.get2(i, j) != a.get2(j, i) {
                return false;
            }
            if j > i && a.get2(i, j) == 1.0 {
                edges += 1;
            }
        }
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for v in 0..n {
            if a.get2(u, v) == 1.0 && !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    edges == n - 1 && seen.iter().all(|&s| s)
}

/// Number of invalid trees among 1000 random samples of 2 to 12 nodes.
pub fn prufer_invalid_count() -> usize {
    let mut r = rng::stream(8, "prufer");
    (0..1000)
        .filter(|i| {
            let n = 2 + i % 11;
            !is_tree(&sample_negative_tree(n, &mut r).unwrap())
        })
        .count()
}

/// Frequencies of each labelled tree on 4 nodes over 10 000 samples.
pub fn prufer_n4_frequencies() -> Vec<f64> {
    let mut r = rng::stream(9, "uniform");
    let mut counts: BTreeMap<Vec<(usize, usize)>, usize> = BTreeMap::new();
    for _ in 0..10_000 {
        let a = sample_negative_tree(4, &mut r).unwrap();
        let edges: Vec<(usize, usize)> = (0..4)
            .flat_map(|i| (i + 1..4).map(move |j| (i, j)))
            .filter(|&(i, j)| a.get2(i, j) == 1.0)
            .collect();
        *counts.entry(edges).or_default() += 1;
    }
    // Every one of the 4^2 sequences decodes to a distinct tree.
    let all: BTreeSet<Vec<(usize, usize)>> = (0..16)
        .map(|s| {
            let mut e: Vec<(usize, usize)> = prufer_decode(&[s / 4, s % 4], 4)
                .unwrap()
                .into_iter()
                .map(|(u, v)| (u.min(v), u.max(v)))
                .collect();
            e.sort();
            e
        })
        .collect();
    assert_eq!(all.len(), 16);
    all.iter()
        .map(|t| *counts.get(t).unwrap_or(&0) as f64 / 10_000.0)
        .collect()
}

/// Estimator at zero logits, largest estimate over random logits, and the
/// number of score-gradient sign violations.
pub fn estimator_checks() -> (f64, f64, usize) {
    let zero = js_mi_loss(&[0.0; 7], &[0.0; 7]).unwrap();
    let mut r = rng::stream(10, "logits");
    let mut largest = f64::NEG_INFINITY;
    let mut violations = 0;
    for _ in 0..200 {
        let m = r.random_range(1..10);
        let pos: Vec<f64> = (0..m).map(|_| r.random_range(-20.0..20.0)).collect();
        let neg: Vec<f64> = (0..m).map(|_| r.random_range(-20.0..20.0)).collect();
        largest = largest.max(js_mi_loss(&pos, &neg).unwrap());
        let h = 1e-5;
        for i in 0..m {
            let mut p = pos.clone();
            p[i] += h;
            if js_mi_loss(&p, &neg).unwrap() - js_mi_loss(&pos, &neg).unwrap() <= 0.0 {
                violations += 1;
            }
            let mut q = neg.clone();
            q[i] += h;
            if js_mi_loss(&pos, &q).unwrap() - js_mi_loss(&pos, &neg).unwrap() >= 0.0 {
                violations += 1;
            }
        }
    }
    (zero, largest, violations)
}

/// Largest per-iteration log-likelihood decrease over a set of fits.
pub fn gmm_worst_ll_drop() -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for seed in 0..8u64 {
        let mut r = rng::stream(seed, "gmm-mono");
        let dim = 1 + seed as usize % 4;
        let x: Vec<Vec<f64>> = (0..150)
            .map(|i| {
                (0..dim)
                    .map(|d| (i % 3) as f64 * 2.0 + d as f64 + r.random_range(-1.5..1.5))
                    .collect()
            })
            .collect();
        for k in 1..=4 {
            let m = gmm_fit(
                &x,
                k,
                &GmmConfig {
                    seed,
                    ..GmmConfig::default()
                },
            )
            .unwrap();
            for w in m.ll_trace.windows(2) {
                worst = worst.max(w[0] - w[1]);
            }
        }
    }
    worst
}

/// Largest distance between fitted means and blob sample means.
pub fn gmm_blob_error() -> f64 {
    let mut r = rng::stream(12, "blobs");
    let mut x = Vec::new();
    let mut sample_means = Vec::new();
    for &c in &[-5.0, 5.0] {
        let d = Normal::new(c, 0.5).unwrap();
        let pts: Vec<f64> = (0..200).map(|_| d.sample(&mut r)).collect();
        sample_means.push(pts.iter().sum::<f64>() / 200.0);
        x.extend(pts.into_iter().map(|v| vec![v]));
    }
    let m = gmm_fit(&x, 2, &GmmConfig::default()).unwrap();
    let mut fitted: Vec<f64> = m.means.iter().map(|v| v[0]).collect();
    fitted.sort_by(f64::total_cmp);
    fitted
        .iter()
        .zip(&sample_means)
        .map(|(f, s)| (f - s).abs())
        .fold(0.0, f64::max)
}

/// (perfect, permuted, hand case, mean over random labelings).
pub fn ari_cases() -> (f64, f64, f64, f64) {
    let perfect = ari(&[0, 0, 1, 1, 2], &[0, 0, 1, 1, 2]).unwrap();
    let permuted = ari(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap();
    let hand = ari(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap();
    let mut r = rng::stream(13, "ari");
    let mut total = 0.0;
    for _ in 0..20 {
        let a: Vec<usize> = (0..1000).map(|_| r.random_range(0..9)).collect();
        let b: Vec<usize> = (0..1000).map(|_| r.random_range(0..9)).collect();
        total += ari(&a, &b).unwrap();
    }
    (perfect, permuted, hand, total / 20.0)
}
