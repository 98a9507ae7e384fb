//! Masked-sentence pre-training: sentence selection with the 80/10/10
//! transform, a single-attention transformer decoder conditioned on the
//! document encoding, and the training loop.

mod decoder;
mod loss;
mod masking;
mod run;

pub use decoder::decoder_forward;
pub use loss::pretrain_loss;
pub use masking::{
    mask_document, select_and_mask, selection_count, MaskedDocument, SentencePool, Transform, Transformation, P_KEPT,
    P_MASKED, SELECT_FRACTION,
};
pub use run::{
    fixed_masking, perplexity, pretrain_run, PretrainObjective, PretrainOutcome, PretrainStage, StageResult,
    VALIDATION_MASK_SEED,
};
