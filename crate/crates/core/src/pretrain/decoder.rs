use crate::encoder::{
    embed_tokens, feedforward_block, self_attention_block, Forward, LayerWeights, DECODER, OUTPUT_PROJECTION,
};
use crate::error::{Error, Result};
use crate::tensor::{AttentionMask, Var};
use crate::text::BOS;

/// Next-token logits `[j, V]` for a prefix `BOS w_1 .. w_{j-1}` given the
/// context vector `dk: [H]` of the sentence being generated.
///
/// Each layer runs causal self-attention over the prefix, adds `dk` to every
/// position, then the feedforward sublayer. Only one attention sublayer is
/// needed because the encoder context is a single vector.
pub fn decoder_forward(fwd: &mut Forward<'_>, prefix: &[usize], dk: Var) -> Result<Var> {
    if prefix.first() != Some(&BOS) {
        return Err(Error::InvalidArgument("decoder prefix must start with BOS".into()));
    }
    let mask = AttentionMask::causal(prefix.len());
    let mut x = embed_tokens(fwd, prefix)?;
    for l in 0..fwd.config().layers {
        let w = LayerWeights::load(fwd, DECODER, l)?;
        let h = self_attention_block(fwd, x, Some(&mask), &w)?;
        let h = fwd.graph.add_broadcast(h, dk)?;
        x = feedforward_block(fwd, h, &w)?;
    }
    let out = fwd.param(OUTPUT_PROJECTION)?;
    fwd.graph.matmul(x, out)
}
