use indexmap::IndexMap;

use crate::error::{Result, TensorError};
use crate::params::ParameterSet;
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1.5e-4,
            weight_decay: 0.1,
        }
    }
}

/// Adam with decoupled weight decay.
///
/// One step: `m = b1 m + (1-b1) g`, `v = b2 v + (1-b2) g^2`, then
/// `theta -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamW<R> {
    pub config: AdamWConfig,
    step_count: u64,
    first: IndexMap<String, Vec<R>>,
    second: IndexMap<String, Vec<R>>,
}

impl<R: Real> AdamW<R> {
    pub fn new(config: AdamWConfig, params: &ParameterSet<R>) -> Self {
        let zeros = |p: &ParameterSet<R>| {
            p.iter()
                .map(|(n, t)| (n.to_string(), vec![R::zero(); t.len()]))
                .collect::<IndexMap<_, _>>()
        };
        AdamW {
            config,
            step_count: 0,
            first: zeros(params),
            second: zeros(params),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn set_step_count(&mut self, step: u64) {
        self.step_count = step;
    }

    pub fn first_moment(&self, name: &str) -> Option<&[R]> {
        self.first.get(name).map(Vec::as_slice)
    }

    pub fn second_moment(&self, name: &str) -> Option<&[R]> {
        self.second.get(name).map(Vec::as_slice)
    }

    pub fn moments_mut(&mut self, name: &str) -> Option<(&mut [R], &mut [R])> {
        let m = self.first.get_mut(name)?;
        let v = self.second.get_mut(name)?;
        Some((m.as_mut_slice(), v.as_mut_slice()))
    }

    /// Applies one update to every parameter of `params`. Gradients are
    /// left in place for the caller to zero.
    pub fn step(&mut self, params: &mut ParameterSet<R>) -> Result<()> {
        for (name, t) in params.iter() {
            if t.grad().is_none() {
                return Err(TensorError::MissingGrad(name.to_string()));
            }
            if self.first.get(name).map(Vec::len) != Some(t.len()) {
                return Err(TensorError::UnknownParameter(name.to_string()));
            }
        }
        self.step_count += 1;
        let c = self.config;
        let (b1, b2) = (R::lit(c.beta1), R::lit(c.beta2));
        let (lr, eps, wd) = (R::lit(c.lr), R::lit(c.eps), R::lit(c.weight_decay));
        let t = self.step_count as i32;
        let bc1 = R::one() - R::lit(c.beta1.powi(t));
        let bc2 = R::one() - R::lit(c.beta2.powi(t));
        for (name, tensor) in params.iter_mut() {
            let m = self.first.get_mut(name).expect("checked above");
            let v = self.second.get_mut(name).expect("checked above");
            let grad = tensor.grad().expect("checked above").to_vec();
            for (((theta, &g), mi), vi) in tensor.data_mut().iter_mut().zip(&grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (R::one() - b1) * g;
                *vi = b2 * *vi + (R::one() - b2) * g * g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *theta -= lr * (m_hat / (v_hat.sqrt() + eps) + wd * *theta);
            }
        }
        Ok(())
    }

    /// Zeros both moments of `name`.
    pub fn reset_moments(&mut self, name: &str) {
        if let Some((m, v)) = self.moments_mut(name) {
            m.iter_mut().for_each(|x| *x = R::zero());
            v.iter_mut().for_each(|x| *x = R::zero());
        }
    }

    /// Multiplies both moments of `name` by `factor`.
    pub fn scale_moments(&mut self, name: &str, factor: R) {
        if let Some((m, v)) = self.moments_mut(name) {
            m.iter_mut().for_each(|x| *x *= factor);
            v.iter_mut().for_each(|x| *x *= factor);
        }
    }

    /// Moments as parameter sets, in parameter order (for checkpoints).
    pub fn export(&self) -> (ParameterSet<R>, ParameterSet<R>) {
        let to_set = |map: &IndexMap<String, Vec<R>>| {
            let mut set = ParameterSet::new(0);
            for (name, vals) in map {
                let t = crate::Tensor::new(vec![vals.len()], vals.clone()).expect("flat");
                set.insert(name, t).expect("unique names");
            }
            set
        };
        (to_set(&self.first), to_set(&self.second))
    }

    pub fn import(&mut self, first: &ParameterSet<R>, second: &ParameterSet<R>) -> Result<()> {
        for (src, dst) in [(first, &mut self.first), (second, &mut self.second)] {
            for (name, vals) in dst.iter_mut() {
                let t = src
                    .get(name)
                    .ok_or_else(|| TensorError::UnknownParameter(name.clone()))?;
                if t.len() != vals.len() {
                    return Err(TensorError::shape("adamw_import", t.shape(), &[vals.len()]));
                }
                vals.copy_from_slice(t.data());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{Graph, Tensor};

    fn scalar_param(v: f64) -> ParameterSet<f64> {
        let mut p = ParameterSet::new(0);
        p.insert("theta", Tensor::from_f64(&[1], &[v]).unwrap()).unwrap();
        p
    }

    #[test]
    fn pure_decay_path() {
        let mut p = scalar_param(1.0);
        let mut opt = AdamW::new(
            AdamWConfig {
                lr: 0.01,
                weight_decay: 0.1,
                ..Default::default()
            },
            &p,
        );
        opt.step(&mut p).unwrap();
        let theta = p.get("theta").unwrap().data()[0];
        assert!((theta - 0.999).abs() < 1e-15);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn zero_decay_is_plain_adam() {
        // First Adam step moves by lr * g / (|g| + eps) regardless of scale.
        let mut p = scalar_param(2.0);
        p.get_mut("theta").unwrap().grad_mut().unwrap()[0] = 4.0;
        let cfg = AdamWConfig {
            lr: 0.1,
            eps: 1e-8,
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut opt = AdamW::new(cfg, &p);
        opt.step(&mut p).unwrap();
        let theta = p.get("theta").unwrap().data()[0];
        assert!((theta - (2.0 - 0.1 * 4.0 / (4.0 + 1e-8))).abs() < 1e-12);
    }

    #[test]
    fn converges_on_shifted_quadratic() {
        let mut p = scalar_param(0.0);
        let cfg = AdamWConfig {
            lr: 0.1,
            eps: 1e-8,
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut opt = AdamW::new(cfg, &p);
        for _ in 0..200 {
            let grads = {
                let mut g = Graph::new();
                let x = g.param(&p, "theta", true).unwrap();
                let three = g.constant(Tensor::from_f64(&[1], &[3.0]).unwrap()).unwrap();
                let d = g.sub(x, three).unwrap();
                let sq = g.mul(d, d).unwrap();
                let loss = g.sum(sq).unwrap();
                g.backward(loss).unwrap()
            };
            p.zero_grad();
            p.accumulate(&grads).unwrap();
            opt.step(&mut p).unwrap();
        }
        let theta = p.get("theta").unwrap().data()[0];
        assert!((theta - 3.0).abs() < 0.05, "theta = {theta}");
    }

    #[test]
    fn missing_grad_is_an_error() {
        let mut p = scalar_param(1.0);
        p.get_mut("theta").unwrap().set_requires_grad(false);
        let mut opt = AdamW::new(AdamWConfig::default(), &p);
        assert_eq!(opt.step(&mut p), Err(TensorError::MissingGrad("theta".into())));
    }
}
