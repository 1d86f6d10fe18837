//! Dense `f64` tensors and a small reverse-mode autodiff tape.

mod graph;
mod tensor;

pub use graph::{bce_mean, kl_divergence, Gradients, Graph, NodeId, PROB_FLOOR};
pub use tensor::{sigmoid, softmax_slice, Tensor};

use crate::error::{Error, Result};

/// Graph handles for one LSTM direction.
///
/// `w_ih` is `[4d x input]`, `w_hh` is `[4d x d]` and `bias` is `[4d]`, with
/// gate blocks ordered input, forget, candidate, output.
#[derive(Clone, Copy, Debug)]
pub struct LstmWeights {
    pub w_ih: NodeId,
    pub w_hh: NodeId,
    pub bias: NodeId,
}

/// One LSTM cell update. Returns `(h, c)`.
pub fn lstm_step(
    g: &mut Graph<'_>,
    x: NodeId,
    h_prev: NodeId,
    c_prev: NodeId,
    w: &LstmWeights,
) -> Result<(NodeId, NodeId)> {
    let d = g.value(h_prev).len();
    if g.value(c_prev).len() != d || g.value(w.w_hh).shape() != [4 * d, d] {
        return Err(Error::dim(
            "lstm_step",
            format!(
                "hidden {d}, cell {}, w_hh {:?}",
                g.value(c_prev).len(),
                g.value(w.w_hh).shape()
            ),
        ));
    }
    let from_x = g.matvec(w.w_ih, x)?;
    let from_h = g.matvec(w.w_hh, h_prev)?;
    let pre = g.sum(&[from_x, from_h, w.bias])?;

    let i_pre = g.slice(pre, 0, d)?;
    let f_pre = g.slice(pre, d, d)?;
    let c_pre = g.slice(pre, 2 * d, d)?;
    let o_pre = g.slice(pre, 3 * d, d)?;
    let i = g.sigmoid(i_pre);
    let f = g.sigmoid(f_pre);
    let cand = g.tanh(c_pre);
    let o = g.sigmoid(o_pre);

    let keep = g.mul(f, c_prev)?;
    let write = g.mul(i, cand)?;
    let c = g.add(keep, write)?;
    let c_act = g.tanh(c);
    let h = g.mul(o, c_act)?;
    Ok((h, c))
}
