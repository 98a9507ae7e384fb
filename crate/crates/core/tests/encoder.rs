use hibert_core::encoder::{
    contextualize, encode_document, encode_sentence, encoder_stack, sentence_states, sincos_position, Forward,
    ModelConfig, ModelParams, DOCUMENT_ENCODER, SENTENCE_ENCODER, WORD_EMBEDDING,
};
use hibert_core::text::{Document, EOS};
use hibert_core::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const VOCAB: usize = 40;

fn params(seed: u64) -> ModelParams {
    ModelParams::init(ModelConfig::tiny(VOCAB), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn random_doc(rng: &mut impl Rng, n: usize) -> Document {
    let content: Vec<Vec<usize>> =
        (0..n).map(|_| (0..rng.random_range(1..8)).map(|_| rng.random_range(EOS + 2..VOCAB)).collect()).collect();
    Document::from_content(&content).unwrap()
}

fn context(p: &ModelParams, doc: &Document) -> Tensor {
    let mut fwd = Forward::eval(p);
    let r = encode_document(&mut fwd, doc).unwrap();
    fwd.graph.value(r.context).clone()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn one_row_per_sentence() {
    let p = params(1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for n in [1, 4, 30] {
        let c = context(&p, &random_doc(&mut rng, n));
        assert_eq!(c.shape(), [n, p.config.hidden]);
        assert!(c.all_finite());
    }
}

#[test]
fn zeroed_sublayers_leave_the_residual_path() {
    let mut p = params(3);
    p.zero_sublayers(SENTENCE_ENCODER).unwrap();
    p.zero_sublayers(DOCUMENT_ENCODER).unwrap();
    let doc = random_doc(&mut ChaCha8Rng::seed_from_u64(4), 5);
    let c = context(&p, &doc);
    let emb = p.get(WORD_EMBEDDING).unwrap();
    let h = p.config.hidden;
    for (i, s) in doc.sentences().iter().enumerate() {
        let word_pos = sincos_position(s.len() - 1, h).unwrap();
        let sent_pos = sincos_position(i, h).unwrap();
        let want: Vec<f64> = (0..h).map(|j| emb.row(EOS)[j] + word_pos[j] + sent_pos[j]).collect();
        assert!(close(c.row(i), &want, 1e-12), "sentence {i}");
    }
}

#[test]
fn sentence_position_shifts_the_representation() {
    let p = params(5);
    let ids = [7, 8, 9, EOS];
    let mut fwd = Forward::eval(&p);
    let a = encode_sentence(&mut fwd, &ids, 0).unwrap();
    let b = encode_sentence(&mut fwd, &ids, 3).unwrap();
    let (a, b) = (fwd.graph.value(a).data().to_vec(), fwd.graph.value(b).data().to_vec());
    let (p0, p3) = (sincos_position(0, p.config.hidden).unwrap(), sincos_position(3, p.config.hidden).unwrap());
    assert_ne!(a, b);
    for j in 0..a.len() {
        assert!(((b[j] - a[j]) - (p3[j] - p0[j])).abs() < 1e-12);
    }
}

#[test]
fn padded_keys_do_not_leak() {
    let p = params(6);
    let h = p.config.hidden;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let rows: Vec<Vec<f64>> = (0..5).map(|_| (0..h).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let pad = [false, false, false, true, true];
    let run = |rows: &[Vec<f64>]| {
        let mut fwd = Forward::eval(&p);
        let x = fwd.graph.constant(Tensor::from_rows(rows));
        let y = encoder_stack(&mut fwd, SENTENCE_ENCODER, x, Some(&pad)).unwrap();
        fwd.graph.value(y).clone()
    };
    let a = run(&rows);
    let mut changed = rows.clone();
    changed[3].iter_mut().for_each(|v| *v += 5.0);
    changed[4].iter_mut().for_each(|v| *v = -*v);
    let b = run(&changed);
    for i in 0..3 {
        assert!(close(a.row(i), b.row(i), 1e-12), "row {i}");
    }
}

#[test]
fn document_attention_is_bidirectional() {
    let p = params(8);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let doc = random_doc(&mut rng, 4);
    let mut later = doc.clone().into_sentences();
    later[3] = vec![EOS + 1, EOS + 1, EOS];
    let a = context(&p, &doc);
    let b = context(&p, &Document::new(later).unwrap());
    assert_ne!(a.row(0), b.row(0), "first sentence must see the last");
}

#[test]
fn gradients_reach_the_word_embeddings() {
    let p = params(10);
    let doc = random_doc(&mut ChaCha8Rng::seed_from_u64(11), 3);
    let mut fwd = Forward::train(&p, 12);
    let r = encode_document(&mut fwd, &doc).unwrap();
    let loss = fwd.graph.sum(r.context);
    let grads = fwd.gradients(loss).unwrap();
    let g = &grads[WORD_EMBEDDING];
    let h = p.config.hidden;
    let used = doc.sentences()[0][0];
    assert!(g[used * h..(used + 1) * h].iter().any(|v| *v != 0.0));
    let unused = (EOS + 2..VOCAB).find(|t| !doc.sentences().iter().flatten().any(|s| s == t)).unwrap();
    assert!(g[unused * h..(unused + 1) * h].iter().all(|v| *v == 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Without sentence positions the document encoder is permutation
    /// equivariant.
    #[test]
    fn permuting_sentences_permutes_outputs(seed in any::<u64>(), n in 2usize..7) {
        let p = params(13);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let doc = random_doc(&mut rng, n);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.rotate_left(rng.random_range(1..n));
        let shuffled = Document::new(perm.iter().map(|&i| doc.sentences()[i].clone()).collect()).unwrap();
        let run = |d: &Document| {
            let mut fwd = Forward::eval(&p);
            let s = sentence_states(&mut fwd, d, false).unwrap();
            let c = contextualize(&mut fwd, s).unwrap();
            fwd.graph.value(c).clone()
        };
        let (a, b) = (run(&doc), run(&shuffled));
        for (j, &i) in perm.iter().enumerate() {
            prop_assert!(close(b.row(j), a.row(i), 1e-10));
        }
    }
}
