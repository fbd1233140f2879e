use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{BatchStats, Element, Graph, NodeId, Tensor};

pub const BN_EPS: f64 = 1e-5;
/// Weight of the newest batch in the running statistics.
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// 3 stages of widths 16/32/64, one basic block each.
    DeskSmall,
    /// CIFAR-style ResNet18: 4 stages of widths 64..512, two blocks each.
    Resnet18,
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk_small" => Ok(Variant::DeskSmall),
            "resnet18" => Ok(Variant::Resnet18),
            other => Err(Error::invalid(format!(
                "unknown model variant {other:?} (expected desk_small or resnet18)"
            ))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::DeskSmall => "desk_small",
            Variant::Resnet18 => "resnet18",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureConfig {
    pub variant: Variant,
    pub stem_width: usize,
    pub stage_widths: Vec<usize>,
    pub blocks_per_stage: Vec<usize>,
    pub num_classes: usize,
    /// `[height, width, channels]`.
    pub input_shape: [usize; 3],
}

impl ArchitectureConfig {
    pub fn desk_small() -> Self {
        Self {
            variant: Variant::DeskSmall,
            stem_width: 16,
            stage_widths: vec![16, 32, 64],
            blocks_per_stage: vec![1, 1, 1],
            num_classes: 10,
            input_shape: [32, 32, 3],
        }
    }

    pub fn resnet18() -> Self {
        Self {
            variant: Variant::Resnet18,
            stem_width: 64,
            stage_widths: vec![64, 128, 256, 512],
            blocks_per_stage: vec![2, 2, 2, 2],
            num_classes: 10,
            input_shape: [32, 32, 3],
        }
    }

    pub fn for_variant(variant: Variant) -> Self {
        match variant {
            Variant::DeskSmall => Self::desk_small(),
            Variant::Resnet18 => Self::resnet18(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stage_widths.is_empty()
            || self.stage_widths.len() != self.blocks_per_stage.len()
            || self.stage_widths.contains(&0)
            || self.blocks_per_stage.contains(&0)
            || self.stem_width == 0
            || self.num_classes == 0
            || self.input_shape.contains(&0)
        {
            return Err(Error::invalid(format!("invalid architecture config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

#[derive(Debug, Clone, Copy)]
struct ConvBn {
    weight: usize,
    gamma: usize,
    beta: usize,
    stats: usize,
    stride: usize,
    pad: usize,
}

#[derive(Debug, Clone, Copy)]
struct BasicBlock {
    first: ConvBn,
    second: ConvBn,
    shortcut: Option<ConvBn>,
}

/// Result of a forward pass: the logits node and the graph leaves holding
/// each parameter (in [`Model::params`] order).
#[derive(Debug, Clone)]
pub struct Forward {
    pub logits: NodeId,
    pub params: Vec<NodeId>,
}

/// A residual CNN: 3x3 stem conv, stages of basic blocks (two 3x3 convs
/// with batch norm, 1x1 projection shortcut when the shape changes),
/// global average pooling and a dense classifier.
#[derive(Debug, Clone)]
pub struct Model<T = f32> {
    config: ArchitectureConfig,
    names: Vec<String>,
    params: Vec<Tensor<T>>,
    running: Vec<RunningStats<T>>,
    stem: ConvBn,
    blocks: Vec<BasicBlock>,
    fc_weight: usize,
    fc_bias: usize,
}

struct Builder<'a, T> {
    names: Vec<String>,
    params: Vec<Tensor<T>>,
    running: Vec<RunningStats<T>>,
    rng: &'a mut ChaCha8Rng,
}

impl<T: Element> Builder<'_, T> {
    fn param(&mut self, name: String, value: Tensor<T>) -> usize {
        self.names.push(name);
        self.params.push(value);
        self.params.len() - 1
    }

    fn conv_bn(&mut self, name: &str, cin: usize, cout: usize, k: usize, stride: usize) -> ConvBn {
        let fan_in = (cin * k * k) as f64;
        let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("finite std");
        let w = (0..cout * cin * k * k)
            .map(|_| T::from_f64(normal.sample(self.rng)))
            .collect();
        let weight = self.param(
            format!("{name}.conv.weight"),
            Tensor::new([cout, cin, k, k], w).unwrap(),
        );
        let gamma = self.param(format!("{name}.bn.weight"), Tensor::full([cout], T::one()));
        let beta = self.param(format!("{name}.bn.bias"), Tensor::zeros([cout]));
        self.running.push(RunningStats {
            mean: vec![T::zero(); cout],
            var: vec![T::one(); cout],
        });
        ConvBn {
            weight,
            gamma,
            beta,
            stats: self.running.len() - 1,
            stride,
            pad: k / 2,
        }
    }
}

impl<T: Element> Model<T> {
    /// Builds a freshly initialized model. Conv weights are drawn from
    /// N(0, 2 / fan_in); the classifier from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    pub fn build(config: ArchitectureConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Builder {
            names: Vec::new(),
            params: Vec::new(),
            running: Vec::new(),
            rng: &mut rng,
        };
        let channels = config.input_shape[2];
        let stem = b.conv_bn("stem", channels, config.stem_width, 3, 1);
        let mut blocks = Vec::new();
        let mut cin = config.stem_width;
        for (s, (&width, &count)) in config.stage_widths.iter().zip(&config.blocks_per_stage).enumerate() {
            for i in 0..count {
                let stride = if s > 0 && i == 0 { 2 } else { 1 };
                let name = format!("stage{}.{}", s + 1, i);
                let first = b.conv_bn(&format!("{name}.a"), cin, width, 3, stride);
                let second = b.conv_bn(&format!("{name}.b"), width, width, 3, 1);
                let shortcut = (stride != 1 || cin != width)
                    .then(|| b.conv_bn(&format!("{name}.shortcut"), cin, width, 1, stride));
                blocks.push(BasicBlock {
                    first,
                    second,
                    shortcut,
                });
                cin = width;
            }
        }
        let bound = 1.0 / (cin as f64).sqrt();
        let mut uniform = |len: usize| -> Vec<T> {
            (0..len)
                .map(|_| T::from_f64(b.rng.random_range(-bound..bound)))
                .collect()
        };
        let fc_w = uniform(config.num_classes * cin);
        let fc_b = uniform(config.num_classes);
        let fc_weight = b.param("fc.weight".into(), Tensor::new([config.num_classes, cin], fc_w)?);
        let fc_bias = b.param("fc.bias".into(), Tensor::new([config.num_classes], fc_b)?);
        let Builder {
            names, params, running, ..
        } = b;
        Ok(Self {
            config,
            names,
            params,
            running,
            stem,
            blocks,
            fc_weight,
            fc_bias,
        })
    }

    pub fn config(&self) -> &ArchitectureConfig {
        &self.config
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    pub fn running_stats(&self) -> &[RunningStats<T>] {
        &self.running
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Replaces parameters and running statistics, checking every shape.
    pub fn load_state(&mut self, params: Vec<Tensor<T>>, running: Vec<RunningStats<T>>) -> Result<()> {
        if params.len() != self.params.len() || running.len() != self.running.len() {
            return Err(Error::Checkpoint(format!(
                "state has {} params / {} bn layers, model expects {} / {}",
                params.len(),
                running.len(),
                self.params.len(),
                self.running.len()
            )));
        }
        for (i, (new, old)) in params.iter().zip(&self.params).enumerate() {
            if new.shape() != old.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {} has shape {:?}, expected {:?}",
                    self.names[i],
                    new.shape(),
                    old.shape()
                )));
            }
        }
        for (new, old) in running.iter().zip(&self.running) {
            if new.mean.len() != old.mean.len() || new.var.len() != old.var.len() {
                return Err(Error::Checkpoint("running statistics shape mismatch".into()));
            }
        }
        self.params = params;
        self.running = running;
        Ok(())
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        let [h, w, c] = self.config.input_shape;
        match shape {
            [n, cc, hh, ww] if *n > 0 && (*cc, *hh, *ww) == (c, h, w) => Ok(()),
            _ => Err(Error::ShapeMismatch {
                op: "model input",
                lhs: shape.to_vec(),
                rhs: vec![0, c, h, w],
            }),
        }
    }

    /// Training-mode forward pass; updates the batch-norm running averages.
    pub fn forward_train(&mut self, g: &mut Graph<T>, input: NodeId) -> Result<Forward> {
        let mut stats = vec![None; self.running.len()];
        let fwd = self.forward_impl(g, input, true, true, &mut stats)?;
        let m = T::from_f64(BN_MOMENTUM);
        let keep = T::one() - m;
        for (run, batch) in self.running.iter_mut().zip(stats) {
            let batch = batch.expect("every batch norm layer ran");
            for (r, b) in run.mean.iter_mut().zip(&batch.mean) {
                *r = keep * *r + m * *b;
            }
            for (r, b) in run.var.iter_mut().zip(&batch.var) {
                *r = keep * *r + m * *b;
            }
        }
        Ok(fwd)
    }

    /// Eval-mode forward pass using the running statistics. Parameter leaves
    /// require gradients only when `param_grads` is set.
    pub fn forward_eval(&self, g: &mut Graph<T>, input: NodeId, param_grads: bool) -> Result<Forward> {
        self.forward_impl(g, input, false, param_grads, &mut [])
    }

    fn forward_impl(
        &self,
        g: &mut Graph<T>,
        input: NodeId,
        train: bool,
        param_grads: bool,
        stats: &mut [Option<BatchStats<T>>],
    ) -> Result<Forward> {
        self.check_input(g.value(input).shape())?;
        let params: Vec<NodeId> = self.params.iter().map(|p| g.leaf(p.clone(), param_grads)).collect();
        let mut conv_bn = |g: &mut Graph<T>, x: NodeId, l: &ConvBn| -> Result<NodeId> {
            let y = g.conv2d(x, params[l.weight], l.stride, l.pad)?;
            let (gamma, beta) = (params[l.gamma], params[l.beta]);
            if train {
                let (out, batch) = g.batch_norm_train(y, gamma, beta, BN_EPS)?;
                stats[l.stats] = Some(batch);
                Ok(out)
            } else {
                let run = &self.running[l.stats];
                g.batch_norm_eval(y, gamma, beta, &run.mean, &run.var, BN_EPS)
            }
        };
        let x = conv_bn(g, input, &self.stem)?;
        let mut x = g.relu(x);
        for block in &self.blocks {
            let h = conv_bn(g, x, &block.first)?;
            let h = g.relu(h);
            let h = conv_bn(g, h, &block.second)?;
            let skip = match &block.shortcut {
                Some(s) => conv_bn(g, x, s)?,
                None => x,
            };
            let sum = g.add(h, skip)?;
            x = g.relu(sum);
        }
        let pooled = g.global_avg_pool(x)?;
        let logits = g.linear(pooled, params[self.fc_weight], Some(params[self.fc_bias]))?;
        Ok(Forward { logits, params })
    }

    /// Eval-mode logits for an NCHW batch.
    pub fn logits(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let x = g.leaf(batch.clone(), false);
        let fwd = self.forward_eval(&mut g, x, false)?;
        Ok(g.value(fwd.logits).clone())
    }

    /// Predicted class per row (argmax, ties to the lowest index).
    pub fn predict(&self, batch: &Tensor<T>) -> Result<Vec<usize>> {
        self.logits(batch)?.argmax_rows()
    }
}
