use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 10.0,
        }
    }
}

impl AdamConfig {
    fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.clip_norm > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid Adam hyperparameters {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct StepReport {
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    pub clipped: bool,
}

/// Global-norm clipping followed by a bias-corrected Adam update.
///
/// Gradients are consumed (zeroed) and the step counter advances. A
/// non-finite gradient rejects the whole update and leaves values, moments
/// and the step counter untouched.
pub fn adam_step(store: &mut ParamStore, cfg: &AdamConfig) -> Result<StepReport> {
    cfg.validate()?;
    for (p, g) in store.params().iter().zip(store.grads().iter()) {
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                what: "gradient".into(),
                location: p.name.clone(),
            });
        }
    }
    let grad_norm = store.grads().norm();
    let clipped = grad_norm > cfg.clip_norm;
    let scale = if clipped { cfg.clip_norm / grad_norm } else { 1.0 };

    let t = (store.step() + 1) as f64;
    let bc1 = 1.0 - cfg.beta1.powf(t);
    let bc2 = 1.0 - cfg.beta2.powf(t);
    let (params, grads) = store.params_and_grads_mut();
    for (i, p) in params.iter_mut().enumerate() {
        let g = grads.get_mut(super::params::ParamId(i));
        for j in 0..p.value.len() {
            let gj = g[j] * scale;
            p.adam_m[j] = cfg.beta1 * p.adam_m[j] + (1.0 - cfg.beta1) * gj;
            p.adam_v[j] = cfg.beta2 * p.adam_v[j] + (1.0 - cfg.beta2) * gj * gj;
            let m_hat = p.adam_m[j] / bc1;
            let v_hat = p.adam_v[j] / bc2;
            p.value[j] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            g[j] = 0.0;
        }
    }
    store.increment_step();
    Ok(StepReport { grad_norm, clipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::params::Init;

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = ParamStore::new(0);
        let id = s.add("x", &[1], Init::Zeros).unwrap();
        s.value_mut(id)[0] = 1.0;
        s.grads_mut().get_mut(id)[0] = 2.0;
        let cfg = AdamConfig {
            lr: 0.1,
            ..Default::default()
        };
        adam_step(&mut s, &cfg).unwrap();
        // m̂ = g, v̂ = g², so Δ = -lr·g/(|g| + eps)
        let expected = 1.0 - 0.1 * 2.0 / (2.0 + 1e-8);
        assert!((s.value(id)[0] - expected).abs() < 1e-15);
        assert_eq!(s.grads().get(id)[0], 0.0);
        assert_eq!(s.step(), 1);
    }

    #[test]
    fn zero_gradient_is_noop_on_values() {
        let mut s = ParamStore::new(4);
        let id = s.add("w", &[3, 3], Init::FanIn(3)).unwrap();
        let before = s.value(id).to_vec();
        adam_step(&mut s, &AdamConfig::default()).unwrap();
        assert_eq!(s.value(id), &before[..]);
        assert_eq!(s.step(), 1);
    }

    #[test]
    fn clipping_caps_global_norm() {
        let mut s = ParamStore::new(0);
        let a = s.add("a", &[2], Init::Zeros).unwrap();
        let b = s.add("b", &[1], Init::Zeros).unwrap();
        let cfg = AdamConfig {
            clip_norm: 1.5,
            beta1: 0.0,
            beta2: 0.0,
            lr: 1.0,
            eps: 1e-300,
        };
        // ‖g‖ = 3 = 2·clip_norm
        s.grads_mut().get_mut(a).copy_from_slice(&[2.0, 1.0]);
        s.grads_mut().get_mut(b)[0] = 2.0;
        let r = adam_step(&mut s, &cfg).unwrap();
        assert!(r.clipped);
        assert!((r.grad_norm - 3.0).abs() < 1e-15);
        // With beta1 = 0 the first moment is the applied (clipped) gradient.
        let applied: f64 = [s.param(a).adam_m.clone(), s.param(b).adam_m.clone()]
            .concat()
            .iter()
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt();
        assert!((applied - 1.5).abs() < 1e-12);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut s = ParamStore::new(0);
        let a = s.add("good", &[1], Init::Zeros).unwrap();
        let b = s.add("bad", &[1], Init::Zeros).unwrap();
        s.grads_mut().get_mut(a)[0] = 1.0;
        s.grads_mut().get_mut(b)[0] = f64::NAN;
        let err = adam_step(&mut s, &AdamConfig::default()).unwrap_err();
        match err {
            Error::NonFinite { location, .. } => assert_eq!(location, "bad"),
            other => panic!("unexpected {other}"),
        }
        assert_eq!(s.step(), 0);
        assert_eq!(s.value(a)[0], 0.0);
    }
}
