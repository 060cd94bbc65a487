use serde::{Deserialize, Serialize};

use super::mlp::ModelParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Plain SGD, no momentum.
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            learning_rate,
            weight_decay: 0.0,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            ..Self::sgd(learning_rate)
        }
    }

    pub fn with_weight_decay(mut self, weight_decay: f64) -> Self {
        self.weight_decay = weight_decay;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be >= 0, got {}",
                self.learning_rate
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!(
                "weight decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        if self.kind == OptimizerKind::Adam
            && !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.eps > 0.0)
        {
            return Err(Error::Config("adam needs betas in [0,1) and eps > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    config: OptimizerConfig,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step_count: u64,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, params: &ModelParams) -> Result<Self> {
        config.validate()?;
        let n = match config.kind {
            OptimizerKind::Sgd => 0,
            OptimizerKind::Adam => params.num_values(),
        };
        Ok(Self {
            config,
            first_moment: vec![0.0; n],
            second_moment: vec![0.0; n],
            step_count: 0,
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }
}

/// Applies one update in place. Weight decay is folded into the gradient
/// (`g + λ·p`) for both optimizers.
pub fn optimizer_step(params: &mut ModelParams, grads: &ModelParams, state: &mut OptimizerState) -> Result<()> {
    if !params.same_shape(grads) {
        return Err(Error::dim(
            "optimizer_step",
            format!("{:?}", params.spec().layer_sizes()),
            format!("{:?}", grads.spec().layer_sizes()),
        ));
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite("optimizer_step gradient"));
    }
    let cfg = state.config;
    let lr = cfg.learning_rate;
    let wd = cfg.weight_decay;
    match cfg.kind {
        OptimizerKind::Sgd => {
            for (p, g) in params.values_mut().zip(grads.values()) {
                *p -= lr * (g + wd * *p);
            }
        }
        OptimizerKind::Adam => {
            if state.first_moment.len() != params.num_values() {
                return Err(Error::dim(
                    "adam moment buffers",
                    params.num_values(),
                    state.first_moment.len(),
                ));
            }
            let t = (state.step_count + 1) as i32;
            let bc1 = 1.0 - cfg.beta1.powi(t);
            let bc2 = 1.0 - cfg.beta2.powi(t);
            for (((p, g), m), v) in params
                .values_mut()
                .zip(grads.values())
                .zip(state.first_moment.iter_mut())
                .zip(state.second_moment.iter_mut())
            {
                let g = g + wd * *p;
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
    }
    state.step_count += 1;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::DenseMatrix;
    use crate::nn::mlp::{Activation, DenseLayer, MlpSpec, OutputActivation};

    fn scalar(v: f64) -> ModelParams {
        let spec = MlpSpec::new(vec![1, 1], Activation::Relu, OutputActivation::Identity).unwrap();
        ModelParams::from_layers(
            spec,
            vec![DenseLayer {
                weights: DenseMatrix::from_vec(1, 1, vec![v]).unwrap(),
                bias: vec![v],
            }],
        )
        .unwrap()
    }

    #[test]
    fn sgd_step() {
        let mut p = scalar(1.0);
        let mut st = OptimizerState::new(OptimizerConfig::sgd(0.1), &p).unwrap();
        optimizer_step(&mut p, &scalar(2.0), &mut st).unwrap();
        assert!((p.layers()[0].weights.get(0, 0) - 0.8).abs() < 1e-15);
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn zero_gradient_keeps_params() {
        for cfg in [OptimizerConfig::sgd(0.5), OptimizerConfig::adam(0.5)] {
            let mut p = scalar(1.25);
            let mut st = OptimizerState::new(cfg, &p).unwrap();
            optimizer_step(&mut p, &scalar(0.0), &mut st).unwrap();
            assert_eq!(p, scalar(1.25));
        }
    }

    #[test]
    fn adam_first_step_by_hand() {
        // t=1: m = 0.1, v = 0.001, m̂ = 1, v̂ = 1, Δ = -η·1/(1+1e-8)
        let mut p = scalar(0.0);
        let mut st = OptimizerState::new(OptimizerConfig::adam(0.001), &p).unwrap();
        optimizer_step(&mut p, &scalar(1.0), &mut st).unwrap();
        let expected = -0.001 / (1.0 + 1e-8);
        for v in p.values() {
            assert!((v - expected).abs() < 1e-15, "{v}");
        }
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut p = scalar(1.0);
        let mut g = scalar(1.0);
        g.layers_mut()[0].bias[0] = f64::NAN;
        let mut st = OptimizerState::new(OptimizerConfig::sgd(0.1), &p).unwrap();
        assert!(matches!(optimizer_step(&mut p, &g, &mut st), Err(Error::NonFinite(_))));
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        use proptest::prelude::*;
        proptest!(|(w in -5.0f64..5.0, g in -5.0f64..5.0, wd in 0.0f64..1.0, adam in any::<bool>())| {
            let cfg = if adam { OptimizerConfig::adam(0.0) } else { OptimizerConfig::sgd(0.0) };
            let mut p = scalar(w);
            let mut st = OptimizerState::new(cfg.with_weight_decay(wd), &p).unwrap();
            optimizer_step(&mut p, &scalar(g), &mut st).unwrap();
            prop_assert_eq!(p, scalar(w));
        });
    }
}
