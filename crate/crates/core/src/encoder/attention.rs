use super::forward::Forward;
use super::params::layer_name;
use crate::error::{Error, Result};
use crate::tensor::{AttentionMask, Graph, Var};

/// Projection matrices of one multi-head attention block.
#[derive(Debug, Clone, Copy)]
pub struct AttentionWeights {
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
    pub wo: Var,
    pub heads: usize,
}

impl AttentionWeights {
    pub fn load(fwd: &mut Forward<'_>, stack: &str, layer: usize) -> Result<Self> {
        Ok(Self {
            wq: fwd.param(&layer_name(stack, layer, "attn.wq"))?,
            wk: fwd.param(&layer_name(stack, layer, "attn.wk"))?,
            wv: fwd.param(&layer_name(stack, layer, "attn.wv"))?,
            wo: fwd.param(&layer_name(stack, layer, "attn.wo"))?,
            heads: fwd.config().heads,
        })
    }
}

/// Scaled dot-product attention with `heads` parallel heads over projected
/// queries `[nq, H]`, keys and values `[nk, H]`; the concatenated heads are
/// projected by `wo`. Blocked mask entries get zero weight.
pub fn multi_head_attention(
    g: &mut Graph,
    query: Var,
    key: Var,
    value: Var,
    mask: Option<&AttentionMask>,
    w: &AttentionWeights,
) -> Result<Var> {
    let hidden = g.shape(w.wq)[1];
    if w.heads == 0 || !hidden.is_multiple_of(w.heads) {
        return Err(Error::InvalidArgument(format!("hidden size {hidden} not divisible by {} heads", w.heads)));
    }
    let (nq, nk) = (g.shape(query)[0], g.shape(key)[0]);
    if let Some(m) = mask {
        if m.shape() != (nq, nk) {
            return Err(Error::ShapeMismatch {
                op: "multi_head_attention mask",
                lhs: vec![nq, nk],
                rhs: vec![m.shape().0, m.shape().1],
            });
        }
    }
    let open = AttentionMask::new(nq, nk, vec![false; nq * nk])?;
    let mask = mask.unwrap_or(&open);
    let q = g.matmul(query, w.wq)?;
    let k = g.matmul(key, w.wk)?;
    let v = g.matmul(value, w.wv)?;
    let dh = hidden / w.heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut outputs = Vec::with_capacity(w.heads);
    for h in 0..w.heads {
        let (lo, hi) = (h * dh, (h + 1) * dh);
        let qh = g.slice_cols(q, lo, hi)?;
        let kh = g.slice_cols(k, lo, hi)?;
        let vh = g.slice_cols(v, lo, hi)?;
        let kt = g.transpose(kh)?;
        let scores = g.matmul(qh, kt)?;
        let scores = g.scale(scores, scale);
        let weights = g.masked_softmax(scores, mask)?;
        outputs.push(g.matmul(weights, vh)?);
    }
    let concat = g.concat_cols(&outputs)?;
    g.matmul(concat, w.wo)
}
