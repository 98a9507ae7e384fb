//! The hierarchical encoder: a sentence-level transformer produces one
//! vector per sentence (the EOS state plus a sentence position), and a
//! document-level transformer turns those into context-sensitive sentence
//! representations.

mod attention;
mod config;
mod forward;
mod hibert;
mod layer;
mod params;
mod position;

pub use attention::{multi_head_attention, AttentionWeights};
pub use config::ModelConfig;
pub use forward::Forward;
pub use hibert::{
    contextualize, embed_tokens, encode_document, encode_sentence, sentence_state, sentence_states, SentenceRepr,
};
pub use layer::{
    encoder_layer, encoder_stack, feedforward, feedforward_block, self_attention_block, LayerWeights, LAYER_NORM_EPS,
};
pub use params::{
    decays, layer_name, ModelParams, CLASSIFIER, DECODER, DOCUMENT_ENCODER, OUTPUT_PROJECTION, SENTENCE_ENCODER,
    WORD_EMBEDDING,
};
pub use position::{sincos_position, sincos_table};
