//! NumPy-style broadcasting: shapes are right-aligned and each axis must
//! either agree or be 1 on one side.

use crate::error::{Error, Result};

pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => {
                return Err(Error::shape(format!("cannot broadcast {a:?} with {b:?}")));
            }
        };
    }
    Ok(out)
}

/// Strides of `shape` viewed inside `out`, zero along broadcast axes.
fn view_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let offset = out.len() - shape.len();
    let mut strides = vec![0; out.len()];
    let mut acc = 1;
    for i in (0..shape.len()).rev() {
        strides[offset + i] = if shape[i] == 1 { 0 } else { acc };
        acc *= shape[i];
    }
    strides
}

/// Index mapping from an output position to positions in both operands.
#[derive(Clone, Debug)]
pub(crate) struct Plan {
    pub out_shape: Vec<usize>,
    a_strides: Vec<usize>,
    b_strides: Vec<usize>,
    pub trivial: bool,
}

impl Plan {
    pub fn new(a: &[usize], b: &[usize]) -> Result<Self> {
        let out_shape = broadcast_shape(a, b)?;
        let trivial = a == b;
        Ok(Self {
            a_strides: view_strides(a, &out_shape),
            b_strides: view_strides(b, &out_shape),
            out_shape,
            trivial,
        })
    }

    /// Calls `f(out_index, a_index, b_index)` for every output element in order.
    pub fn for_each(&self, mut f: impl FnMut(usize, usize, usize)) {
        let n: usize = self.out_shape.iter().product();
        if self.trivial {
            for i in 0..n {
                f(i, i, i);
            }
            return;
        }
        let rank = self.out_shape.len();
        if rank == 0 {
            f(0, 0, 0);
            return;
        }
        // Odometer over all axes but the last; the inner loop runs the last axis.
        let last = rank - 1;
        let inner = self.out_shape[last];
        let (sa, sb) = (self.a_strides[last], self.b_strides[last]);
        let mut idx = vec![0usize; rank];
        let (mut ia, mut ib) = (0usize, 0usize);
        let mut o = 0;
        while o < n {
            for j in 0..inner {
                f(o + j, ia + j * sa, ib + j * sb);
            }
            o += inner;
            let mut axis = last;
            loop {
                if axis == 0 {
                    return;
                }
                axis -= 1;
                idx[axis] += 1;
                ia += self.a_strides[axis];
                ib += self.b_strides[axis];
                if idx[axis] < self.out_shape[axis] {
                    break;
                }
                ia -= self.a_strides[axis] * idx[axis];
                ib -= self.b_strides[axis] * idx[axis];
                idx[axis] = 0;
            }
        }
    }
}
