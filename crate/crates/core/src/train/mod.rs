//! Optimization, distillation and evaluation.

mod eval;
mod loss;
mod optim;
mod trainer;

pub use eval::{batch_inputs, eval_view, fuse_logits, late_fuse_eval, predict_logits, EvalModel, EvalReport, InputSpec};
pub use loss::{classification_loss, distill_loss, DistillMode, LossParts};
pub use optim::{lr_at, sgd_momentum_step, OptimConfig};
pub use trainer::{train, DistillConfig, LogRow, Teacher, TrainLog, TrainSpec};
