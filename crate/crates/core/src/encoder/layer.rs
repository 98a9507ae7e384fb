use super::attention::{multi_head_attention, AttentionWeights};
use super::forward::Forward;
use super::params::layer_name;
use crate::error::Result;
use crate::tensor::{AttentionMask, Var};

pub const LAYER_NORM_EPS: f64 = 1e-6;

/// Weights of one pre-norm transformer layer.
#[derive(Debug, Clone, Copy)]
pub struct LayerWeights {
    pub ln1_gain: Var,
    pub ln1_bias: Var,
    pub attn: AttentionWeights,
    pub ln2_gain: Var,
    pub ln2_bias: Var,
    pub w1: Var,
    pub bias1: Var,
    pub w2: Var,
    pub bias2: Var,
}

impl LayerWeights {
    pub fn load(fwd: &mut Forward<'_>, stack: &str, layer: usize) -> Result<Self> {
        let mut p = |leaf: &str| fwd.param(&layer_name(stack, layer, leaf));
        let ln1_gain = p("ln1.gain")?;
        let ln1_bias = p("ln1.bias")?;
        let ln2_gain = p("ln2.gain")?;
        let ln2_bias = p("ln2.bias")?;
        let w1 = p("ffn.w1")?;
        let bias1 = p("ffn.bias1")?;
        let w2 = p("ffn.w2")?;
        let bias2 = p("ffn.bias2")?;
        Ok(Self {
            ln1_gain,
            ln1_bias,
            attn: AttentionWeights::load(fwd, stack, layer)?,
            ln2_gain,
            ln2_bias,
            w1,
            bias1,
            w2,
            bias2,
        })
    }
}

/// `max(0, x W1 + b1) W2 + b2`
pub fn feedforward(fwd: &mut Forward<'_>, x: Var, w: &LayerWeights) -> Result<Var> {
    let g = &mut fwd.graph;
    let h = g.matmul(x, w.w1)?;
    let h = g.add_broadcast(h, w.bias1)?;
    let h = g.relu(h);
    let o = g.matmul(h, w.w2)?;
    g.add_broadcast(o, w.bias2)
}

/// Pre-norm self-attention sublayer with residual: `x + drop(attn(LN(x)))`.
pub fn self_attention_block(
    fwd: &mut Forward<'_>,
    x: Var,
    mask: Option<&AttentionMask>,
    w: &LayerWeights,
) -> Result<Var> {
    let normed = fwd.graph.layer_norm(x, w.ln1_gain, w.ln1_bias, LAYER_NORM_EPS)?;
    let attn = multi_head_attention(&mut fwd.graph, normed, normed, normed, mask, &w.attn)?;
    let attn = fwd.dropout(attn)?;
    fwd.graph.add(x, attn)
}

/// Pre-norm feedforward sublayer with residual: `x + drop(ffn(LN(x)))`.
pub fn feedforward_block(fwd: &mut Forward<'_>, x: Var, w: &LayerWeights) -> Result<Var> {
    let normed = fwd.graph.layer_norm(x, w.ln2_gain, w.ln2_bias, LAYER_NORM_EPS)?;
    let ff = feedforward(fwd, normed, w)?;
    let ff = fwd.dropout(ff)?;
    fwd.graph.add(x, ff)
}

/// One encoder layer over `x: [n, H]`. Positions flagged in `pad_mask` are
/// never attended to.
pub fn encoder_layer(fwd: &mut Forward<'_>, x: Var, pad_mask: Option<&[bool]>, w: &LayerWeights) -> Result<Var> {
    let n = fwd.graph.shape(x)[0];
    let mask = match pad_mask {
        Some(pad) if pad.len() != n => {
            return Err(crate::Error::LengthMismatch {
                op: "encoder_layer",
                detail: format!("{} pad flags for {n} positions", pad.len()),
            })
        }
        Some(pad) => Some(AttentionMask::key_padding(n, pad)),
        None => None,
    };
    let h = self_attention_block(fwd, x, mask.as_ref(), w)?;
    feedforward_block(fwd, h, w)
}

/// Runs every layer of `stack` over `x`.
pub fn encoder_stack(fwd: &mut Forward<'_>, stack: &str, mut x: Var, pad_mask: Option<&[bool]>) -> Result<Var> {
    for l in 0..fwd.config().layers {
        let w = LayerWeights::load(fwd, stack, l)?;
        x = encoder_layer(fwd, x, pad_mask, &w)?;
    }
    Ok(x)
}
