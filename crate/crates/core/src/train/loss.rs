use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Element, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistillMode {
    /// One MSE term per teacher.
    Separate,
    /// One MSE term against the sum of all teacher logits.
    Unified,
}

/// A loss on the tape together with its components' values. `mse` holds the
/// weighted terms, so `total == cls + sum(mse)`.
pub struct LossParts<E: Element> {
    pub total: Var,
    pub cls: E,
    pub mse: Vec<E>,
}

/// Cross-entropy plus logit regression towards frozen teacher logits. The
/// teachers enter the tape as constants, so no gradient reaches them.
pub fn distill_loss<E: Element>(
    tape: &mut Tape<E>,
    student: Var,
    teachers: &[Tensor<E>],
    labels: &[usize],
    mode: DistillMode,
    weight: f64,
) -> Result<LossParts<E>> {
    if teachers.is_empty() {
        return Err(Error::contract("distillation needs at least one teacher"));
    }
    let s_shape = tape.shape(student).to_vec();
    if let Some(t) = teachers.iter().find(|t| t.shape() != s_shape.as_slice()) {
        return Err(Error::shape(format!("teacher logits {:?} vs student {s_shape:?}", t.shape())));
    }
    let ce = tape.softmax_cross_entropy(student, labels)?;
    let targets: Vec<Tensor<E>> = match mode {
        DistillMode::Separate => teachers.to_vec(),
        DistillMode::Unified => {
            let mut sum = teachers[0].clone();
            for t in &teachers[1..] {
                sum.data_mut().iter_mut().zip(t.data()).for_each(|(a, &b)| *a += b);
            }
            vec![sum]
        }
    };
    let mut total = ce;
    let mut mse = Vec::with_capacity(targets.len());
    for t in targets {
        let tv = tape.constant(t);
        let m = tape.mse(tv, student)?;
        let m = tape.scale(m, E::of(weight));
        mse.push(tape.value(m).data()[0]);
        total = tape.add(total, m)?;
    }
    let cls = tape.value(ce).data()[0];
    Ok(LossParts { total, cls, mse })
}

/// Plain classification loss in the same shape as [`distill_loss`].
pub fn classification_loss<E: Element>(tape: &mut Tape<E>, logits: Var, labels: &[usize]) -> Result<LossParts<E>> {
    let total = tape.softmax_cross_entropy(logits, labels)?;
    Ok(LossParts { total, cls: tape.value(total).data()[0], mse: Vec::new() })
}
