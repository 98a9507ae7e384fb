//! Finite-difference gradient oracle shared by the gradient tests and the
//! acceptance suite. Each `*_gradients` function runs its op family over
//! [`INSTANCES`] random instances and records the worst relative error per
//! op in a thread-local table read back by [`take_results`].

use std::cell::RefCell;
use std::collections::BTreeMap;

use hibert_core::encoder::{Forward, ModelConfig, ModelParams};
use hibert_core::pretrain::{pretrain_loss, select_and_mask, MaskedDocument};
use hibert_core::tensor::{AttentionMask, Graph, Tensor, Var};
use hibert_core::text::Document;
use hibert_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-5;
pub const TOL: f64 = 1e-4;
pub const INSTANCES: usize = 30;

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn random_tensor(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap()
}

/// Evaluates `sum(build(inputs) * weights)`; returns the loss and, when
/// requested, the analytic gradient of every input.
fn evaluate<F>(build: &F, inputs: &[Tensor], weights: Option<&Tensor>, grads: bool) -> (f64, Tensor, Vec<Vec<f64>>)
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone().with_grad())).collect();
    let out = build(&mut g, &vars).unwrap();
    let w = weights.cloned().unwrap_or_else(|| Tensor::full(g.shape(out), 1.0));
    let wv = g.constant(w.clone());
    let prod = g.mul(out, wv).unwrap();
    let loss = g.sum(prod);
    let value = g.value(loss).item();
    let mut out_grads = Vec::new();
    if grads {
        g.backward(loss).unwrap();
        for (v, t) in vars.iter().zip(inputs) {
            out_grads.push(g.grad(*v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; t.numel()]));
        }
    }
    (value, w, out_grads)
}

fn check<F>(name: &'static str, rng: &mut impl Rng, inputs: Vec<Tensor>, skip: &[usize], build: F) -> f64
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    // Random output weights make every output element matter differently.
    let (_, ones, _) = evaluate(&build, &inputs, None, false);
    let weights = random_tensor(rng, ones.shape());
    let (_, _, analytic) = evaluate(&build, &inputs, Some(&weights), true);
    let mut worst: f64 = 0.0;
    for (i, input) in inputs.iter().enumerate() {
        if skip.contains(&i) {
            continue;
        }
        for (j, &exact) in analytic[i].iter().enumerate().take(input.numel()) {
            let mut plus = inputs.clone();
            plus[i].data_mut()[j] += H;
            let mut minus = inputs.clone();
            minus[i].data_mut()[j] -= H;
            let fp = evaluate(&build, &plus, Some(&weights), false).0;
            let fm = evaluate(&build, &minus, Some(&weights), false).0;
            let numeric = (fp - fm) / (2.0 * H);
            worst = worst.max(rel_err(exact, numeric));
        }
    }
    record(name, worst);
    worst
}

fn dims(rng: &mut impl Rng, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(1..5)).collect()
}

thread_local! {
    static WORST: RefCell<BTreeMap<&'static str, f64>> = const { RefCell::new(BTreeMap::new()) };
}

fn record(name: &'static str, err: f64) {
    WORST.with(|w| {
        let mut w = w.borrow_mut();
        let e = w.entry(name).or_insert(0.0);
        *e = e.max(err);
    });
}

/// Worst relative error per op since the last call.
pub fn take_results() -> BTreeMap<&'static str, f64> {
    WORST.with(|w| std::mem::take(&mut *w.borrow_mut()))
}

pub fn matmul_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..INSTANCES {
        let d = dims(&mut rng, 4);
        let (a, b) = (random_tensor(&mut rng, &[d[0], d[1]]), random_tensor(&mut rng, &[d[1], d[2]]));
        check("matmul", &mut rng, vec![a, b], &[], |g, v| g.matmul(v[0], v[1]));
        let (a, b) = (random_tensor(&mut rng, &[d[3], d[0], d[1]]), random_tensor(&mut rng, &[d[1], d[2]]));
        check("batched matmul", &mut rng, vec![a, b], &[], |g, v| g.matmul(v[0], v[1]));
        let (a, b) = (random_tensor(&mut rng, &[d[3], d[0], d[1]]), random_tensor(&mut rng, &[d[3], d[1], d[2]]));
        check("batched matmul (both)", &mut rng, vec![a, b], &[], |g, v| g.matmul(v[0], v[1]));
    }
}

pub fn elementwise_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..INSTANCES {
        let d = dims(&mut rng, 2);
        let (a, b) = (random_tensor(&mut rng, &d), random_tensor(&mut rng, &d));
        check("add", &mut rng, vec![a.clone(), b.clone()], &[], |g, v| g.add(v[0], v[1]));
        check("mul", &mut rng, vec![a.clone(), b.clone()], &[], |g, v| g.mul(v[0], v[1]));
        check("scale", &mut rng, vec![a.clone()], &[], |g, v| Ok(g.scale(v[0], -2.5)));
        check("sum", &mut rng, vec![a.clone()], &[], |g, v| Ok(g.sum(v[0])));
        check("relu", &mut rng, vec![a.clone()], &[], |g, v| Ok(g.relu(v[0])));
        let bias = random_tensor(&mut rng, &[d[1]]);
        check("add_broadcast", &mut rng, vec![a, bias], &[], |g, v| g.add_broadcast(v[0], v[1]));
    }
}

pub fn softmax_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..INSTANCES {
        let d = dims(&mut rng, 3);
        let axis = rng.random_range(0..3);
        let x = random_tensor(&mut rng, &d);
        check("softmax", &mut rng, vec![x], &[], move |g, v| g.softmax(v[0], axis));

        let (r, c) = (d[0] + 1, d[1] + 1);
        let x = random_tensor(&mut rng, &[r, c]);
        let mask = if rng.random_bool(0.5) {
            AttentionMask::causal(r.min(c)).clone()
        } else {
            let pad: Vec<bool> = (0..c).map(|j| j > 0 && rng.random_bool(0.3)).collect();
            AttentionMask::key_padding(r, &pad)
        };
        let (mr, mc) = mask.shape();
        let x = if (mr, mc) == (r, c) { x } else { random_tensor(&mut rng, &[mr, mc]) };
        check("masked_softmax", &mut rng, vec![x], &[], move |g, v| g.masked_softmax(v[0], &mask));
    }
}

pub fn layer_norm_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..INSTANCES {
        let d = dims(&mut rng, 2);
        let width = d[1] + 1;
        let x = random_tensor(&mut rng, &[d[0], width]);
        let gain = random_tensor(&mut rng, &[width]);
        let bias = random_tensor(&mut rng, &[width]);
        check("layer_norm", &mut rng, vec![x, gain, bias], &[], |g, v| g.layer_norm(v[0], v[1], v[2], 1e-6));
    }
}

pub fn gather_and_loss_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..INSTANCES {
        let d = dims(&mut rng, 3);
        let vocab = d[0] + 2;
        let table = random_tensor(&mut rng, &[vocab, d[1]]);
        let ids: Vec<usize> = (0..d[2] + 1).map(|_| rng.random_range(0..vocab)).collect();
        check("embedding", &mut rng, vec![table], &[], move |g, v| g.embedding(v[0], &ids));

        let n = d[2] + 1;
        let logits = random_tensor(&mut rng, &[n, vocab]);
        let targets: Vec<usize> = (0..n).map(|_| rng.random_range(0..vocab)).collect();
        let mut mask: Vec<bool> = (0..n).map(|_| rng.random_bool(0.7)).collect();
        mask[0] = true;
        check("nll_loss", &mut rng, vec![logits], &[], move |g, v| g.nll_loss(v[0], &targets, &mask));
    }
}

pub fn dropout_gradients_with_fixed_mask() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for i in 0..INSTANCES {
        let d = dims(&mut rng, 2);
        let x = random_tensor(&mut rng, &d);
        check("dropout", &mut rng, vec![x], &[], move |g, v| {
            let mut mask_rng = ChaCha8Rng::seed_from_u64(i as u64);
            g.dropout(v[0], 0.3, true, &mut mask_rng)
        });
    }
}

pub fn structural_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..INSTANCES {
        let d = dims(&mut rng, 3);
        let x = random_tensor(&mut rng, &[d[0], d[1] + 1]);
        check("transpose", &mut rng, vec![x.clone()], &[], |g, v| g.transpose(v[0]));
        let cols = d[1] + 1;
        let start = rng.random_range(0..cols);
        let end = rng.random_range(start + 1..=cols);
        check("slice_cols", &mut rng, vec![x.clone()], &[], move |g, v| g.slice_cols(v[0], start, end));
        let y = random_tensor(&mut rng, &[d[0], d[2]]);
        check("concat_cols", &mut rng, vec![x.clone(), y], &[], |g, v| g.concat_cols(&[v[0], v[1]]));
        let z = random_tensor(&mut rng, &[d[2], d[1] + 1]);
        let w = random_tensor(&mut rng, &[d[1] + 1]);
        check("concat_rows", &mut rng, vec![x.clone(), z, w], &[], |g, v| g.concat_rows(&[v[0], v[1], v[2]]));
        let r = rng.random_range(0..d[0]);
        check("row", &mut rng, vec![x], &[], move |g, v| g.row(v[0], r));
    }
}

pub fn composite_graph_with_fan_out() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..INSTANCES {
        let d = dims(&mut rng, 3);
        let x = random_tensor(&mut rng, &[d[0], d[1] + 1]);
        let w = random_tensor(&mut rng, &[d[1] + 1, d[2] + 1]);
        let gain = random_tensor(&mut rng, &[d[2] + 1]);
        let bias = random_tensor(&mut rng, &[d[2] + 1]);
        check("composite", &mut rng, vec![x, w, gain, bias], &[], |g, v| {
            let h = g.matmul(v[0], v[1])?;
            let n = g.layer_norm(h, v[2], v[3], 1e-6)?;
            let r = g.relu(n);
            let s = g.softmax(h, 1)?;
            let both = g.add(r, s)?;
            g.mul(both, h)
        });
    }
}

/// Every op family above.
pub fn all_op_families() {
    matmul_gradients();
    elementwise_gradients();
    softmax_gradients();
    layer_norm_gradients();
    gather_and_loss_gradients();
    dropout_gradients_with_fixed_mask();
    structural_gradients();
    composite_graph_with_fan_out();
}

/// Loss and the exact-zero pattern of every node value. ReLU outputs are
/// the only values that switch between zero and nonzero under a tiny
/// parameter change, so two patterns differ exactly when a ReLU crossed its
/// kink.
fn loss_and_pattern(params: &ModelParams, seed: u64, masked: &MaskedDocument) -> (f64, Vec<bool>) {
    let mut fwd = Forward::train(params, seed);
    let loss = pretrain_loss(&mut fwd, masked).unwrap();
    let pattern = fwd.graph.values().flat_map(|t| t.data().iter().map(|&v| v == 0.0)).collect();
    (fwd.graph.value(loss).item(), pattern)
}

/// Relative-error floor for the full model. The untrained loss is about
/// 17 nats, so central differences resolve gradients only down to
/// `eps * |f| / h`, roughly 4e-10; a 1e-5 floor keeps that round-off below
/// the tolerance.
pub const MODEL_FLOOR: f64 = 1e-5;

/// Outcome of the full-model check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelCheck {
    pub worst: f64,
    pub coordinates: usize,
    /// Coordinates redrawn because the stencil straddled a ReLU kink.
    pub redrawn: usize,
}

/// Full HIBERT-tiny masked-sentence loss (dropout active with a fixed mask
/// seed) against central differences. Every instance checks
/// `coords_per_tensor` random coordinates of every parameter tensor; a
/// coordinate whose stencil crosses a ReLU kink, where the function is not
/// differentiable, is redrawn.
pub fn pretrain_loss_gradients(instances: usize, coords_per_tensor: usize) -> ModelCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let words = 12;
    let vocab = hibert_core::text::RESERVED_TOKENS.len() + words;
    let mut out = ModelCheck { worst: 0.0, coordinates: 0, redrawn: 0 };
    for inst in 0..instances {
        let mut params = ModelParams::init(ModelConfig::tiny(vocab), &mut rng).unwrap();
        let n = rng.random_range(3..6);
        let content: Vec<Vec<usize>> =
            (0..n).map(|_| (0..rng.random_range(2..5)).map(|_| rng.random_range(5..vocab)).collect()).collect();
        let doc = Document::from_content(&content).unwrap();
        let masked = select_and_mask(&doc, &mut rng, std::slice::from_ref(&doc)).unwrap();
        let seed = inst as u64;
        let mut fwd = Forward::train(&params, seed);
        let loss = pretrain_loss(&mut fwd, &masked).unwrap();
        let grads = fwd.gradients(loss).unwrap();
        let names: Vec<String> = params.store.names().map(str::to_owned).collect();
        for name in names {
            let numel = params.get(&name).unwrap().numel();
            let mut checked = 0;
            while checked < coords_per_tensor {
                let j = rng.random_range(0..numel);
                let orig = params.get(&name).unwrap().data()[j];
                params.get_mut(&name).unwrap().data_mut()[j] = orig + H;
                let (fp, pp) = loss_and_pattern(&params, seed, &masked);
                params.get_mut(&name).unwrap().data_mut()[j] = orig - H;
                let (fm, pm) = loss_and_pattern(&params, seed, &masked);
                params.get_mut(&name).unwrap().data_mut()[j] = orig;
                if pp != pm {
                    out.redrawn += 1;
                    continue;
                }
                let numeric = (fp - fm) / (2.0 * H);
                let analytic = grads.get(&name).map_or(0.0, |g| g[j]);
                let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(MODEL_FLOOR);
                out.worst = out.worst.max(err);
                out.coordinates += 1;
                checked += 1;
            }
        }
    }
    record("pretrain_loss (HIBERT-tiny)", out.worst);
    out
}
