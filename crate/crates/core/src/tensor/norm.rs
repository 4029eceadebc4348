//! Batch and group normalization over channels-last activations.

use super::Element;

pub const NORM_EPS: f64 = 1e-5;

/// How statistics are gathered for a normalization op.
#[derive(Clone, Copy, Debug)]
pub enum NormMode<'a, E> {
    /// Per-channel statistics over (B, T, H, W); they are reported back for
    /// running averages.
    BatchTrain,
    /// Per-channel frozen statistics.
    BatchEval { mean: &'a [E], var: &'a [E] },
    /// Per-sample statistics over (T, H, W, C/groups).
    Group { groups: usize },
}

/// Which statistics a saved normalization used, for the backward pass.
#[derive(Clone, Debug)]
pub(crate) enum StatLayout {
    Batch,
    Frozen,
    Group { groups: usize },
}

pub(crate) struct NormOutput<E> {
    pub y: Vec<E>,
    pub xhat: Vec<E>,
    pub invstd: Vec<E>,
    pub layout: StatLayout,
    /// Batch mean and biased variance (batch-train mode only).
    pub batch_stats: Option<(Vec<E>, Vec<E>)>,
}

fn affine<E: Element>(xhat: &[E], gamma: &[E], beta: &[E]) -> Vec<E> {
    let c = gamma.len();
    xhat.iter().enumerate().map(|(i, &v)| v * gamma[i % c] + beta[i % c]).collect()
}

pub(crate) fn forward<E: Element>(
    shape: &[usize],
    x: &[E],
    gamma: &[E],
    beta: &[E],
    mode: NormMode<'_, E>,
) -> NormOutput<E> {
    let c = *shape.last().expect("norm input has rank >= 1");
    let rows = x.len() / c;
    let eps = E::of(NORM_EPS);
    match mode {
        NormMode::BatchTrain => {
            let n = E::of(rows as f64);
            let mut mean = vec![E::zero(); c];
            for r in 0..rows {
                for (m, &v) in mean.iter_mut().zip(&x[r * c..(r + 1) * c]) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m = *m / n);
            let mut var = vec![E::zero(); c];
            for r in 0..rows {
                for ch in 0..c {
                    let d = x[r * c + ch] - mean[ch];
                    var[ch] += d * d;
                }
            }
            var.iter_mut().for_each(|v| *v = *v / n);
            let invstd: Vec<E> = var.iter().map(|&v| E::one() / (v + eps).sqrt()).collect();
            let xhat: Vec<E> = x.iter().enumerate().map(|(i, &v)| (v - mean[i % c]) * invstd[i % c]).collect();
            let y = affine(&xhat, gamma, beta);
            NormOutput { y, xhat, invstd, layout: StatLayout::Batch, batch_stats: Some((mean, var)) }
        }
        NormMode::BatchEval { mean, var } => {
            let invstd: Vec<E> = var.iter().map(|&v| E::one() / (v + eps).sqrt()).collect();
            let xhat: Vec<E> = x.iter().enumerate().map(|(i, &v)| (v - mean[i % c]) * invstd[i % c]).collect();
            let y = affine(&xhat, gamma, beta);
            NormOutput { y, xhat, invstd, layout: StatLayout::Frozen, batch_stats: None }
        }
        NormMode::Group { groups } => {
            let batch = shape[0];
            let per_group = c / groups;
            let spatial = rows / batch;
            let m = E::of((spatial * per_group) as f64);
            let mut invstd = vec![E::zero(); batch * groups];
            let mut xhat = vec![E::zero(); x.len()];
            for b in 0..batch {
                let sample = &x[b * spatial * c..(b + 1) * spatial * c];
                for g in 0..groups {
                    let chans = g * per_group..(g + 1) * per_group;
                    let mut sum = E::zero();
                    for s in 0..spatial {
                        for ch in chans.clone() {
                            sum += sample[s * c + ch];
                        }
                    }
                    let mean = sum / m;
                    let mut var = E::zero();
                    for s in 0..spatial {
                        for ch in chans.clone() {
                            let d = sample[s * c + ch] - mean;
                            var += d * d;
                        }
                    }
                    let inv = E::one() / (var / m + eps).sqrt();
                    invstd[b * groups + g] = inv;
                    for s in 0..spatial {
                        for ch in chans.clone() {
                            let i = b * spatial * c + s * c + ch;
                            xhat[i] = (x[i] - mean) * inv;
                        }
                    }
                }
            }
            let y = affine(&xhat, gamma, beta);
            NormOutput { y, xhat, invstd, layout: StatLayout::Group { groups }, batch_stats: None }
        }
    }
}

/// Returns `(dx, dgamma, dbeta)`.
pub(crate) fn backward<E: Element>(
    shape: &[usize],
    dy: &[E],
    xhat: &[E],
    invstd: &[E],
    gamma: &[E],
    layout: &StatLayout,
) -> (Vec<E>, Vec<E>, Vec<E>) {
    let c = gamma.len();
    let rows = dy.len() / c;
    let mut dgamma = vec![E::zero(); c];
    let mut dbeta = vec![E::zero(); c];
    for (i, (&g, &xh)) in dy.iter().zip(xhat).enumerate() {
        dgamma[i % c] += g * xh;
        dbeta[i % c] += g;
    }
    let dxhat: Vec<E> = dy.iter().enumerate().map(|(i, &g)| g * gamma[i % c]).collect();
    let mut dx = vec![E::zero(); dy.len()];
    match layout {
        StatLayout::Frozen => {
            for (i, d) in dx.iter_mut().enumerate() {
                *d = dxhat[i] * invstd[i % c];
            }
        }
        StatLayout::Batch => {
            let n = E::of(rows as f64);
            let mut sum_d = vec![E::zero(); c];
            let mut sum_dx = vec![E::zero(); c];
            for i in 0..dy.len() {
                sum_d[i % c] += dxhat[i];
                sum_dx[i % c] += dxhat[i] * xhat[i];
            }
            for (i, d) in dx.iter_mut().enumerate() {
                let ch = i % c;
                *d = invstd[ch] / n * (n * dxhat[i] - sum_d[ch] - xhat[i] * sum_dx[ch]);
            }
        }
        StatLayout::Group { groups } => {
            let groups = *groups;
            let batch = shape[0];
            let per_group = c / groups;
            let spatial = rows / batch;
            let m = E::of((spatial * per_group) as f64);
            for b in 0..batch {
                for g in 0..groups {
                    let chans = g * per_group..(g + 1) * per_group;
                    let mut sum_d = E::zero();
                    let mut sum_dx = E::zero();
                    for s in 0..spatial {
                        for ch in chans.clone() {
                            let i = b * spatial * c + s * c + ch;
                            sum_d += dxhat[i];
                            sum_dx += dxhat[i] * xhat[i];
                        }
                    }
                    let inv = invstd[b * groups + g];
                    for s in 0..spatial {
                        for ch in chans.clone() {
                            let i = b * spatial * c + s * c + ch;
                            dx[i] = inv / m * (m * dxhat[i] - sum_d - xhat[i] * sum_dx);
                        }
                    }
                }
            }
        }
    }
    (dx, dgamma, dbeta)
}
