use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::AttackConfig;
use super::target::AttackTarget;
use crate::error::{Error, Result};
use crate::keyed_permutation::BlockShuffle;
use crate::tensor::{Graph, Tensor};

#[derive(Debug, Clone)]
pub struct AdversarialResult {
    pub adv_images: Tensor<f32>,
    /// Prediction differs from the label.
    pub success_mask: Vec<bool>,
    /// Per-sample max-abs perturbation, computed in f64.
    pub linf_achieved: Vec<f64>,
}

impl AdversarialResult {
    pub fn success_rate(&self) -> f64 {
        if self.success_mask.is_empty() {
            return 0.0;
        }
        self.success_mask.iter().filter(|&&s| s).count() as f64 / self.success_mask.len() as f64
    }
}

/// f32 interval around `x` whose points are all within `eps` of `x` in
/// exact arithmetic, intersected with `[0, 1]`.
fn ball(x: f32, eps: f64) -> (f32, f32) {
    let xd = x as f64;
    let mut lo = (xd - eps) as f32;
    if xd - lo as f64 > eps {
        lo = lo.next_up();
    }
    let mut hi = (xd + eps) as f32;
    if hi as f64 - xd > eps {
        hi = hi.next_down();
    }
    (lo.max(0.0), hi.min(1.0))
}

/// Clamps `x_adv` into the `eps` ball around `x`, then into `[0, 1]`.
pub fn project(x_adv: &Tensor<f32>, x: &Tensor<f32>, eps: f64) -> Result<Tensor<f32>> {
    if x_adv.shape() != x.shape() {
        return Err(Error::ShapeMismatch {
            op: "project",
            lhs: x_adv.shape().to_vec(),
            rhs: x.shape().to_vec(),
        });
    }
    if eps < 0.0 {
        return Err(Error::invalid(format!("epsilon {eps} is negative")));
    }
    let data = x_adv
        .data()
        .iter()
        .zip(x.data())
        .map(|(&a, &c)| {
            let (lo, hi) = ball(c, eps);
            // A clean pixel outside [0, 1] leaves an empty interval; the
            // valid range wins.
            a.max(lo).min(hi).clamp(0.0, 1.0)
        })
        .collect();
    Tensor::new(x_adv.shape().to_vec(), data)
}

pub fn linf_per_sample(a: &Tensor<f32>, b: &Tensor<f32>) -> Vec<f64> {
    let n = a.shape().first().copied().unwrap_or(0).max(1);
    let per = a.len() / n;
    a.data()
        .chunks_exact(per.max(1))
        .zip(b.data().chunks_exact(per.max(1)))
        .map(|(x, y)| {
            x.iter()
                .zip(y)
                .map(|(&p, &q)| (p as f64 - q as f64).abs())
                .fold(0.0, f64::max)
        })
        .collect()
}

pub(crate) fn apply_batch(shuffle: &BlockShuffle, x: &Tensor<f32>) -> Result<Tensor<f32>> {
    let per = shuffle.chw_map().len();
    if x.shape().len() < 2 || x.len() / x.shape()[0].max(1) != per {
        return Err(Error::ShapeMismatch {
            op: "batch transform",
            lhs: x.shape().to_vec(),
            rhs: vec![per],
        });
    }
    let mut out = vec![0.0; x.len()];
    shuffle.apply_chw_batch_into(x.data(), &mut out);
    Tensor::new(x.shape().to_vec(), out)
}

fn input_gradient(
    target: &dyn AttackTarget,
    x: &Tensor<f32>,
    labels: &[usize],
    transform: Option<&Arc<[u32]>>,
) -> Result<Tensor<f32>> {
    let mut g = Graph::new();
    let leaf = g.leaf(x.clone(), true);
    let input = match transform {
        Some(map) => g.gather(leaf, map.clone())?,
        None => leaf,
    };
    let loss = target.loss(&mut g, input, labels)?;
    let mut grads = g.backward(loss)?;
    Ok(grads.take(leaf).expect("input leaf requires grad"))
}

pub(crate) fn predict_through(
    target: &dyn AttackTarget,
    x: &Tensor<f32>,
    transform: Option<&BlockShuffle>,
) -> Result<Vec<usize>> {
    match transform {
        Some(t) => target.predict(&apply_batch(t, x)?),
        None => target.predict(x),
    }
}

fn check_inputs(x: &Tensor<f32>, labels: &[usize], cfg: &AttackConfig) -> Result<()> {
    cfg.validate()?;
    if x.shape().is_empty() || x.shape()[0] != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "attack labels",
            lhs: x.shape().to_vec(),
            rhs: vec![labels.len()],
        });
    }
    if x.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::invalid("attack input must lie in [0, 1]"));
    }
    Ok(())
}

/// Projected gradient ascent on the loss from `x`, taking the gradient
/// through `transform` when one is given.
pub(crate) fn pgd_core(
    target: &dyn AttackTarget,
    x: &Tensor<f32>,
    labels: &[usize],
    cfg: &AttackConfig,
    transform: Option<&BlockShuffle>,
) -> Result<Tensor<f32>> {
    check_inputs(x, labels, cfg)?;
    let map: Option<Arc<[u32]>> = transform.map(|t| Arc::from(t.chw_map()));
    let mut adv = x.clone();
    if cfg.random_init && cfg.epsilon > 0.0 {
        let per = x.len() / labels.len();
        let eps = cfg.epsilon as f32;
        for (i, chunk) in adv.data_mut().chunks_exact_mut(per).enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            for v in chunk {
                *v += rng.random_range(-eps..=eps);
            }
        }
        adv = project(&adv, x, cfg.epsilon)?;
    }
    let step = cfg.step_size as f32;
    for _ in 0..cfg.iterations {
        let grad = input_gradient(target, &adv, labels, map.as_ref())?;
        for (a, &g) in adv.data_mut().iter_mut().zip(grad.data()) {
            if g > 0.0 {
                *a += step;
            } else if g < 0.0 {
                *a -= step;
            }
        }
        adv = project(&adv, x, cfg.epsilon)?;
    }
    Ok(adv)
}

pub(crate) fn finish(
    target: &dyn AttackTarget,
    x: &Tensor<f32>,
    adv: Tensor<f32>,
    labels: &[usize],
    judge: Option<&BlockShuffle>,
) -> Result<AdversarialResult> {
    let preds = predict_through(target, &adv, judge)?;
    Ok(AdversarialResult {
        success_mask: preds.iter().zip(labels).map(|(p, y)| p != y).collect(),
        linf_achieved: linf_per_sample(&adv, x),
        adv_images: adv,
    })
}

/// PGD: `iterations` signed-gradient steps of `step_size`, each followed by
/// projection, from `x` or from a uniform random point of the ball.
///
/// With `transform`, the model sees `transform(x)` and the gradient flows
/// back through the permutation; success is judged through it as well.
pub fn pgd(
    target: &dyn AttackTarget,
    x: &Tensor<f32>,
    labels: &[usize],
    cfg: &AttackConfig,
    transform: Option<&BlockShuffle>,
) -> Result<AdversarialResult> {
    let adv = pgd_core(target, x, labels, cfg, transform)?;
    finish(target, x, adv, labels, transform)
}

/// One step of size `epsilon` along the gradient sign, clamped to `[0, 1]`.
pub fn fgsm(
    target: &dyn AttackTarget,
    x: &Tensor<f32>,
    labels: &[usize],
    epsilon: f64,
    transform: Option<&BlockShuffle>,
) -> Result<AdversarialResult> {
    pgd(target, x, labels, &AttackConfig::fgsm(epsilon), transform)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::LinearLoss;

    fn t(v: &[f32]) -> Tensor<f32> {
        Tensor::new([1, v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn projection_cases() {
        let x = t(&[0.5, 0.02, 0.3]);
        assert_eq!(project(&t(&[0.9, 0.5, 0.1]), &x, 0.0).unwrap(), x);
        let p = project(&t(&[0.9, -0.5, 0.3]), &x, 0.1).unwrap();
        assert!((p.data()[0] - 0.6).abs() < 1e-6);
        assert_eq!(p.data()[1], 0.0);
        assert_eq!(p.data()[2], 0.3);
    }

    #[test]
    fn ball_is_exact_in_f64() {
        for &x in &[0.0f32, 0.1, 0.3333, 0.5, 0.77, 1.0] {
            for k in [1, 2, 8, 32] {
                let eps = k as f64 / 255.0;
                let (lo, hi) = ball(x, eps);
                assert!(x as f64 - lo as f64 <= eps);
                assert!(hi as f64 - x as f64 <= eps);
            }
        }
    }

    #[test]
    fn linear_closed_form_one_step() {
        let target = LinearLoss {
            weights: Tensor::new([4], vec![1.0, -2.0, 0.0, 0.5]).unwrap(),
        };
        let x = t(&[0.5, 0.5, 0.5, 0.5]);
        let cfg = AttackConfig {
            step_size: 0.01,
            ..AttackConfig::pgd(0.1, 1, false)
        };
        let r = pgd(&target, &x, &[0], &cfg, None).unwrap();
        let expect: Vec<f32> = [1.0f32, -1.0, 0.0, 1.0].iter().map(|s| 0.5 + 0.01 * s).collect();
        assert_eq!(r.adv_images.data(), &expect[..]);
        assert!(r.linf_achieved[0] <= 0.01 + 1e-7);
    }

    #[test]
    fn zero_budget_or_no_steps_returns_input() {
        let target = LinearLoss {
            weights: Tensor::new([3], vec![1.0, 1.0, -1.0]).unwrap(),
        };
        let x = t(&[0.2, 0.4, 0.6]);
        let r = pgd(&target, &x, &[1], &AttackConfig::pgd(0.0, 10, true), None).unwrap();
        assert_eq!(r.adv_images, x);
        let r = pgd(&target, &x, &[1], &AttackConfig::pgd(0.1, 0, false), None).unwrap();
        assert_eq!(r.adv_images, x);
        let r = fgsm(&target, &x, &[0], 0.0, None).unwrap();
        assert_eq!(r.adv_images, x);
        assert_eq!(r.success_mask, vec![false]);
    }

    #[test]
    fn fgsm_is_single_full_step() {
        let target = LinearLoss {
            weights: Tensor::new([3], vec![1.0, -1.0, 0.0]).unwrap(),
        };
        let x = t(&[0.5, 0.5, 0.99]);
        let a = fgsm(&target, &x, &[0], 0.05, None).unwrap();
        let cfg = AttackConfig {
            step_size: 0.05,
            ..AttackConfig::pgd(0.05, 1, false)
        };
        let b = pgd(&target, &x, &[0], &cfg, None).unwrap();
        assert_eq!(a.adv_images, b.adv_images);
        assert_eq!(a.adv_images.data()[2], 0.99);
    }
}
