use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::tensor::{ParamStore, Tensor};

/// Parameter name prefixes of the three transformer stacks.
pub const SENTENCE_ENCODER: &str = "sent";
pub const DOCUMENT_ENCODER: &str = "doc";
pub const DECODER: &str = "dec";

pub const WORD_EMBEDDING: &str = "embed.word";
pub const OUTPUT_PROJECTION: &str = "dec.out";
pub const CLASSIFIER: &str = "cls.w";

const EMBED_STD: f64 = 0.02;

/// Every trainable tensor of the model, keyed by name.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub store: ParamStore,
}

/// Weight decay applies to everything except biases and layer-norm gains.
pub fn decays(name: &str) -> bool {
    !(name.ends_with(".gain") || name.contains("bias"))
}

pub fn layer_name(stack: &str, layer: usize, leaf: &str) -> String {
    format!("{stack}.{layer}.{leaf}")
}

fn xavier<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)).collect();
    Tensor::new(vec![fan_in, fan_out], data).expect("sized").with_grad()
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Init {
    Embedding,
    Xavier,
    Zeros,
    Ones,
}

/// Name, shape and initializer of every parameter, in initialization order.
fn layout(config: &ModelConfig) -> Vec<(String, Vec<usize>, Init)> {
    let (h, ff, v) = (config.hidden, config.ff, config.vocab_size);
    let mut out = vec![(WORD_EMBEDDING.to_owned(), vec![v, h], Init::Embedding)];
    for stack in [SENTENCE_ENCODER, DOCUMENT_ENCODER, DECODER] {
        for l in 0..config.layers {
            let name = |leaf: &str| layer_name(stack, l, leaf);
            for ln in ["ln1", "ln2"] {
                out.push((name(&format!("{ln}.gain")), vec![h], Init::Ones));
                out.push((name(&format!("{ln}.bias")), vec![h], Init::Zeros));
            }
            for w in ["wq", "wk", "wv", "wo"] {
                out.push((name(&format!("attn.{w}")), vec![h, h], Init::Xavier));
            }
            out.push((name("ffn.w1"), vec![h, ff], Init::Xavier));
            out.push((name("ffn.bias1"), vec![ff], Init::Zeros));
            out.push((name("ffn.w2"), vec![ff, h], Init::Xavier));
            out.push((name("ffn.bias2"), vec![h], Init::Zeros));
        }
    }
    out.push((OUTPUT_PROJECTION.to_owned(), vec![h, v], Init::Xavier));
    out.push((CLASSIFIER.to_owned(), vec![h, 2], Init::Xavier));
    out
}

impl ModelParams {
    /// Word embeddings ~ N(0, 0.02), matrices Xavier-uniform, biases zero,
    /// layer-norm gains one.
    pub fn init<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let normal = Normal::new(0.0, EMBED_STD).expect("valid std");
        let mut store = ParamStore::new();
        for (name, shape, init) in layout(&config) {
            let t = match init {
                Init::Embedding => {
                    let n = shape.iter().product();
                    Tensor::new(shape, (0..n).map(|_| normal.sample(rng)).collect())?.with_grad()
                }
                Init::Xavier => xavier(rng, shape[0], shape[1]),
                Init::Zeros => Tensor::zeros(&shape).with_grad(),
                Init::Ones => Tensor::full(&shape, 1.0).with_grad(),
            };
            store.insert(&name, t);
        }
        Ok(Self { config, store })
    }

    /// Wraps an existing store after checking it against `config`.
    pub fn from_store(config: ModelConfig, store: ParamStore) -> Result<Self> {
        config.validate()?;
        let p = Self { config, store };
        p.check_shapes()?;
        Ok(p)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.store.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.store.get_mut(name)
    }

    pub fn zero_grad(&mut self) {
        self.store.zero_grad();
    }

    /// Zeroes every weight of one transformer stack's sublayers (attention
    /// output and feedforward output), leaving only the residual path.
    pub fn zero_sublayers(&mut self, stack: &str) -> Result<()> {
        for l in 0..self.config.layers {
            for leaf in ["attn.wo", "ffn.w2", "ffn.bias2"] {
                self.store.get_mut(&layer_name(stack, l, leaf))?.data_mut().fill(0.0);
            }
        }
        Ok(())
    }

    /// Checks that every tensor has the shape implied by the config.
    pub fn check_shapes(&self) -> Result<()> {
        let expected = layout(&self.config);
        if self.store.len() != expected.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameters, found {}",
                expected.len(),
                self.store.len()
            )));
        }
        for (name, shape, _) in expected {
            let have = self.store.get(&name)?;
            if have.shape() != shape.as_slice() {
                return Err(Error::ShapeMismatch {
                    op: "ModelParams::check_shapes",
                    lhs: have.shape().to_vec(),
                    rhs: shape,
                });
            }
        }
        Ok(())
    }

    pub fn num_elements(&self) -> usize {
        self.store.num_elements()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn init_matches_layout_and_is_seeded() {
        let c = ModelConfig::tiny(40);
        let a = ModelParams::init(c, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = ModelParams::init(c, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        a.check_shapes().unwrap();
        assert_eq!(a.get(WORD_EMBEDDING).unwrap().shape(), &[40, 64]);
        assert_eq!(a.get(CLASSIFIER).unwrap().shape(), &[64, 2]);
        assert!(a.get("sent.1.ffn.bias1").unwrap().data().iter().all(|&v| v == 0.0));
        assert!(a.get("doc.0.ln2.gain").unwrap().data().iter().all(|&v| v == 1.0));
        assert!(a.store.iter().all(|(_, t)| t.requires_grad()));
    }

    #[test]
    fn shape_check_rejects_other_configs() {
        let a = ModelParams::init(ModelConfig::tiny(40), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!(ModelParams::from_store(ModelConfig::tiny(41), a.store.clone()).is_err());
        let deeper = ModelConfig::new(3, 64, 4, 0.1, 40).unwrap();
        assert!(ModelParams::from_store(deeper, a.store).is_err());
    }

    #[test]
    fn decay_excludes_biases_and_gains() {
        assert!(decays("sent.0.attn.wq"));
        assert!(decays(WORD_EMBEDDING));
        assert!(!decays("sent.0.ln1.gain"));
        assert!(!decays("sent.0.ln1.bias"));
        assert!(!decays("dec.1.ffn.bias2"));
    }
}
