//! Dense MLP engine: forward/backward passes, losses, optimizers and
//! per-example gradients. All arithmetic is `f64`.

pub mod gradcheck;
pub mod loss;
pub mod mlp;
pub mod optim;
pub mod train;

pub use loss::{loss_and_grad, loss_with_output, LossKind};
pub use mlp::{
    mlp_backward, mlp_forward, predict, Activation, Activations, DenseLayer, MlpSpec, ModelParams, OutputActivation,
};
pub use optim::{optimizer_step, OptimizerConfig, OptimizerKind, OptimizerState};
pub use train::{batch_gradient, evaluate_loss, fit, per_example_grads, step_gradient, TrainConfig};
