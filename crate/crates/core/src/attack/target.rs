use crate::error::Result;
use crate::nn::Model;
use crate::tensor::{Graph, NodeId, Reduction, Tensor};

/// Something an attack can differentiate: a scalar loss summed over the
/// batch, plus the decision rule used to judge success.
pub trait AttackTarget {
    fn loss(&self, g: &mut Graph<f32>, input: NodeId, labels: &[usize]) -> Result<NodeId>;

    fn predict(&self, input: &Tensor<f32>) -> Result<Vec<usize>>;
}

impl AttackTarget for Model<f32> {
    fn loss(&self, g: &mut Graph<f32>, input: NodeId, labels: &[usize]) -> Result<NodeId> {
        let fwd = self.forward_eval(g, input, false)?;
        g.softmax_cross_entropy(fwd.logits, labels, Reduction::Sum)
    }

    fn predict(&self, input: &Tensor<f32>) -> Result<Vec<usize>> {
        Model::predict(self, input)
    }
}

/// Loss `sum_i w . x_i`, ignoring labels. Predicts class 1 when `w . x > 0`
/// and class 0 otherwise.
#[derive(Debug, Clone)]
pub struct LinearLoss {
    pub weights: Tensor<f32>,
}

impl AttackTarget for LinearLoss {
    fn loss(&self, g: &mut Graph<f32>, input: NodeId, _labels: &[usize]) -> Result<NodeId> {
        let n = g.value(input).shape()[0];
        let mut tiled = Vec::with_capacity(n * self.weights.len());
        for _ in 0..n {
            tiled.extend_from_slice(self.weights.data());
        }
        let w = g.leaf(Tensor::new(g.value(input).shape().to_vec(), tiled)?, false);
        let prod = g.mul(input, w)?;
        Ok(g.sum(prod))
    }

    fn predict(&self, input: &Tensor<f32>) -> Result<Vec<usize>> {
        let per = self.weights.len();
        Ok(input
            .data()
            .chunks_exact(per)
            .map(|x| {
                let s: f32 = x.iter().zip(self.weights.data()).map(|(a, b)| a * b).sum();
                usize::from(s > 0.0)
            })
            .collect())
    }
}
