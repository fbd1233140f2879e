//! Compares reverse-mode gradients of a small conv net against central
//! finite differences in double precision.
//!
//!     cargo run --example gradient_check

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shuffleguard::tensor::{Graph, NodeId, Reduction, Tensor};

const H: f64 = 1e-5;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

struct Net {
    w1: Tensor<f64>,
    w2: Tensor<f64>,
    fc: Tensor<f64>,
}

impl Net {
    fn loss(&self, g: &mut Graph<f64>, x: NodeId, labels: &[usize]) -> NodeId {
        let w1 = g.leaf(self.w1.clone(), false);
        let w2 = g.leaf(self.w2.clone(), false);
        let fc = g.leaf(self.fc.clone(), false);
        let h = g.conv2d(x, w1, 1, 1).unwrap();
        let h = g.relu(h);
        let h = g.conv2d(h, w2, 2, 1).unwrap();
        let h = g.global_avg_pool(h).unwrap();
        let z = g.linear(h, fc, None).unwrap();
        g.softmax_cross_entropy(z, labels, Reduction::Mean).unwrap()
    }

    fn value(&self, x: &Tensor<f64>, labels: &[usize]) -> f64 {
        let mut g = Graph::new();
        let id = g.leaf(x.clone(), false);
        let l = self.loss(&mut g, id, labels);
        g.value(l).item().unwrap()
    }
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let net = Net {
        w1: random(&mut rng, &[4, 3, 3, 3]),
        w2: random(&mut rng, &[6, 4, 3, 3]),
        fc: random(&mut rng, &[5, 6]),
    };
    let x = random(&mut rng, &[2, 3, 8, 8]);
    let labels = [1, 4];

    let mut g = Graph::new();
    let id = g.leaf(x.clone(), true);
    let loss = net.loss(&mut g, id, &labels);
    let grads = g.backward(loss).unwrap();
    let analytic = grads.get(id).unwrap();

    let mut worst = 0.0f64;
    for k in 0..x.len() {
        let (mut plus, mut minus) = (x.clone(), x.clone());
        plus.data_mut()[k] += H;
        minus.data_mut()[k] -= H;
        let numeric = (net.value(&plus, &labels) - net.value(&minus, &labels)) / (2.0 * H);
        let a = analytic.data()[k];
        worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
    }
    println!("loss {:.6}", g.value(loss).item().unwrap());
    println!("{} input coordinates, max relative error {worst:.3e}", x.len());
}
