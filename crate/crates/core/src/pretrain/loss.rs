use super::decoder::decoder_forward;
use super::masking::MaskedDocument;
use crate::encoder::{encode_document, Forward};
use crate::error::Result;
use crate::tensor::Var;

/// Mean per-token negative log-likelihood of every selected sentence,
/// teacher-forced on the original tokens and conditioned on the encoding of
/// the transformed document.
pub fn pretrain_loss(fwd: &mut Forward<'_>, masked: &MaskedDocument) -> Result<Var> {
    let repr = encode_document(fwd, &masked.document)?;
    let mut logits = Vec::with_capacity(masked.selected.len());
    let mut targets = Vec::with_capacity(masked.num_predictions());
    for (&k, target) in masked.selected.iter().zip(&masked.targets) {
        let dk = fwd.graph.row(repr.context, k)?;
        logits.push(decoder_forward(fwd, &target[..target.len() - 1], dk)?);
        targets.extend_from_slice(&target[1..]);
    }
    let all = fwd.graph.concat_rows(&logits)?;
    let mask = vec![true; targets.len()];
    fwd.graph.nll_loss(all, &targets, &mask)
}
