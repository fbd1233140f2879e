#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shuffleguard::tensor::{Graph, NodeId, Tensor};

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;
/// Gradients smaller than this are compared absolutely; below it a
/// relative error is dominated by finite-difference round-off.
pub const FD_FLOOR: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Values bounded away from zero, so ReLU kinks stay outside the
/// finite-difference stencil.
pub fn random_off_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v = rng.random_range(0.05..1.0);
            if rng.random_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

type Builder<'a> = dyn Fn(&mut Graph<f64>, &[NodeId]) -> NodeId + 'a;

fn scalar_loss(g: &mut Graph<f64>, out: NodeId, weights: &Tensor<f64>) -> NodeId {
    if g.value(out).len() == 1 {
        return out;
    }
    let w = g.leaf(weights.clone(), false);
    let prod = g.mul(out, w).unwrap();
    g.sum(prod)
}

fn loss_value(leaves: &[Tensor<f64>], build: &Builder, weights: &Tensor<f64>) -> f64 {
    let mut g = Graph::new();
    let ids: Vec<NodeId> = leaves.iter().map(|t| g.leaf(t.clone(), false)).collect();
    let out = build(&mut g, &ids);
    let loss = scalar_loss(&mut g, out, weights);
    g.value(loss).item().unwrap()
}

/// Largest relative error between reverse-mode gradients and central
/// differences over every element of every leaf. Non-scalar outputs are
/// reduced with a fixed random weighting first.
pub fn max_gradient_error(leaves: &[Tensor<f64>], build: &Builder, seed: u64) -> f64 {
    let mut g = Graph::new();
    let ids: Vec<NodeId> = leaves.iter().map(|t| g.leaf(t.clone(), true)).collect();
    let out = build(&mut g, &ids);
    let weights = random(&mut rng(seed ^ 0xfeed), g.value(out).shape(), -1.0, 1.0);
    let loss = scalar_loss(&mut g, out, &weights);
    let grads = g.backward(loss).unwrap();

    let mut worst = 0.0f64;
    for (li, &id) in ids.iter().enumerate() {
        let analytic = grads.get(id).expect("leaf gradient").data().to_vec();
        assert_eq!(analytic.len(), leaves[li].len(), "gradient shape");
        for (k, &a) in analytic.iter().enumerate() {
            let mut plus = leaves.to_vec();
            plus[li].data_mut()[k] += FD_STEP;
            let mut minus = leaves.to_vec();
            minus[li].data_mut()[k] -= FD_STEP;
            let numeric = (loss_value(&plus, build, &weights) - loss_value(&minus, build, &weights)) / (2.0 * FD_STEP);
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FD_FLOOR);
            worst = worst.max(err);
        }
    }
    worst
}

/// A gradient-check case: named op, inputs, and the graph it builds.
pub type BuildFn = Box<dyn Fn(&mut Graph<f64>, &[NodeId]) -> NodeId>;

pub struct GradCase {
    pub name: String,
    pub leaves: Vec<Tensor<f64>>,
    pub build: BuildFn,
}

/// At least twenty op/shape combinations covering every differentiable op.
pub fn gradient_cases() -> Vec<GradCase> {
    use shuffleguard::tensor::Reduction;
    use std::sync::Arc;

    let mut cases = Vec::new();
    let mut r = rng(2024);
    let mut push =
        |name: String, leaves: Vec<Tensor<f64>>, build: BuildFn| cases.push(GradCase { name, leaves, build });

    for &(n, c, h, w, o, k, stride, pad) in &[
        (1, 1, 4, 4, 1, 3, 1, 1),
        (2, 3, 5, 5, 4, 3, 1, 1),
        (2, 2, 6, 6, 3, 3, 2, 1),
        (1, 3, 7, 5, 2, 3, 2, 0),
        (2, 4, 4, 4, 3, 1, 1, 0),
        (1, 2, 6, 6, 2, 1, 2, 0),
        (1, 2, 5, 6, 3, 2, 1, 0),
    ] {
        push(
            format!("conv2d n{n} c{c} {h}x{w} o{o} k{k} s{stride} p{pad}"),
            vec![
                random(&mut r, &[n, c, h, w], -1.0, 1.0),
                random(&mut r, &[o, c, k, k], -1.0, 1.0),
            ],
            Box::new(move |g, ids| g.conv2d(ids[0], ids[1], stride, pad).unwrap()),
        );
    }
    for &(n, i, o) in &[(1, 3, 2), (4, 5, 3), (3, 8, 10)] {
        push(
            format!("linear {n}x{i} -> {o}"),
            vec![
                random(&mut r, &[n, i], -1.0, 1.0),
                random(&mut r, &[o, i], -1.0, 1.0),
                random(&mut r, &[o], -1.0, 1.0),
            ],
            Box::new(|g, ids| g.linear(ids[0], ids[1], Some(ids[2])).unwrap()),
        );
    }
    for shape in [vec![7], vec![2, 3, 4, 4]] {
        push(
            format!("relu {shape:?}"),
            vec![random_off_zero(&mut r, &shape)],
            Box::new(|g, ids| g.relu(ids[0])),
        );
    }
    for shape in [vec![4, 3], vec![2, 3, 3, 3], vec![3, 2, 2, 5]] {
        let c = shape[1];
        push(
            format!("batch_norm train {shape:?}"),
            vec![
                random(&mut r, &shape, -1.0, 1.0),
                random(&mut r, &[c], 0.5, 1.5),
                random(&mut r, &[c], -0.5, 0.5),
            ],
            Box::new(|g, ids| g.batch_norm_train(ids[0], ids[1], ids[2], 1e-5).unwrap().0),
        );
    }
    for shape in [vec![3, 4], vec![2, 2, 3, 3]] {
        let c = shape[1];
        let mean = random(&mut r, &[c], -0.5, 0.5).into_data();
        let var = random(&mut r, &[c], 0.5, 2.0).into_data();
        push(
            format!("batch_norm eval {shape:?}"),
            vec![
                random(&mut r, &shape, -1.0, 1.0),
                random(&mut r, &[c], 0.5, 1.5),
                random(&mut r, &[c], -0.5, 0.5),
            ],
            Box::new(move |g, ids| g.batch_norm_eval(ids[0], ids[1], ids[2], &mean, &var, 1e-5).unwrap()),
        );
    }
    for shape in [[1, 2, 3, 3], [2, 4, 2, 5]] {
        push(
            format!("global_avg_pool {shape:?}"),
            vec![random(&mut r, &shape, -1.0, 1.0)],
            Box::new(|g, ids| g.global_avg_pool(ids[0]).unwrap()),
        );
    }
    push(
        "add [2, 3, 2, 2]".into(),
        vec![
            random(&mut r, &[2, 3, 2, 2], -1.0, 1.0),
            random(&mut r, &[2, 3, 2, 2], -1.0, 1.0),
        ],
        Box::new(|g, ids| g.add(ids[0], ids[1]).unwrap()),
    );
    push(
        "mul [3, 4]".into(),
        vec![random(&mut r, &[3, 4], -1.0, 1.0), random(&mut r, &[3, 4], -1.0, 1.0)],
        Box::new(|g, ids| g.mul(ids[0], ids[1]).unwrap()),
    );
    push(
        "sum [2, 5]".into(),
        vec![random(&mut r, &[2, 5], -1.0, 1.0)],
        Box::new(|g, ids| g.sum(ids[0])),
    );
    for per in [6usize, 12] {
        let mut map: Vec<u32> = (0..per as u32).collect();
        map.reverse();
        map.swap(0, per / 2);
        let map: Arc<[u32]> = map.into();
        push(
            format!("gather 2x{per}"),
            vec![random(&mut r, &[2, per], -1.0, 1.0)],
            Box::new(move |g, ids| g.gather(ids[0], map.clone()).unwrap()),
        );
    }
    for (reduction, n, k) in [
        (Reduction::Mean, 4, 3),
        (Reduction::Sum, 3, 10),
        (Reduction::Mean, 1, 2),
    ] {
        let labels: Vec<usize> = (0..n).map(|i| (i * 7 + 1) % k).collect();
        push(
            format!("softmax_cross_entropy {reduction:?} {n}x{k}"),
            vec![random(&mut r, &[n, k], -2.0, 2.0)],
            Box::new(move |g, ids| g.softmax_cross_entropy(ids[0], &labels, reduction).unwrap()),
        );
    }
    cases
}

/// conv -> batch norm -> relu -> strided conv -> relu -> pool -> linear ->
/// cross-entropy, checked with respect to the input image only.
pub fn cnn_input_gradient_error(seed: u64) -> f64 {
    use shuffleguard::tensor::Reduction;
    let mut r = rng(seed);
    let x = random(&mut r, &[2, 3, 6, 6], 0.0, 1.0);
    let w1 = random(&mut r, &[4, 3, 3, 3], -0.5, 0.5);
    let gamma = random(&mut r, &[4], 0.5, 1.5);
    let beta = random(&mut r, &[4], -0.2, 0.2);
    let w2 = random(&mut r, &[5, 4, 3, 3], -0.5, 0.5);
    let fc = random(&mut r, &[3, 5], -1.0, 1.0);
    let fc_b = random(&mut r, &[3], -0.1, 0.1);
    let build = move |g: &mut Graph<f64>, ids: &[NodeId]| {
        let p: Vec<NodeId> = [&w1, &gamma, &beta, &w2, &fc, &fc_b]
            .iter()
            .map(|t| g.leaf((*t).clone(), false))
            .collect();
        let h = g.conv2d(ids[0], p[0], 1, 1).unwrap();
        let (h, _) = g.batch_norm_train(h, p[1], p[2], 1e-5).unwrap();
        let h = g.relu(h);
        let h = g.conv2d(h, p[3], 2, 1).unwrap();
        let h = g.relu(h);
        let h = g.global_avg_pool(h).unwrap();
        let z = g.linear(h, p[4], Some(p[5])).unwrap();
        g.softmax_cross_entropy(z, &[0, 2], Reduction::Mean).unwrap()
    };
    max_gradient_error(&[x], &build, seed)
}
