#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use prompt_prune::autodiff::{Tape, Tensor};
use prompt_prune::encoder::{encode, GcnEncoder, GcnParams, Init, NodeEmbeddings};
use prompt_prune::harness::{sample_tasks, synth_graph, SynthSpec, TaskSpec};
use prompt_prune::hetgraph::HeteroGraph;
use prompt_prune::pretrain::{sample_triplets, TripletObjective};
use prompt_prune::prompting::{
    downstream_loss, record_loss, record_prompts, LabeledSet, MaskInputs, PromptContext, PromptPair,
};
use prompt_prune::pruning::BlockPartition;

/// Denominator floor for relative errors. Central differences at ε = 1e-5 on
/// losses of order 10 carry about 2e-10 of rounding noise, so gradients below
/// the floor are compared absolutely.
pub const REL_FLOOR: f64 = 1e-5;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// At most 30 nodes over three types, two classes on the target type.
pub fn small_graph(rng: &mut ChaCha8Rng) -> HeteroGraph {
    let target = rng.random_range(8..=12);
    let spec = SynthSpec {
        type_nodes: vec![target, rng.random_range(4..=9), rng.random_range(3..=8)],
        classes: 2,
        informative_dims: rng.random_range(2..=4),
        noise_dims: rng.random_range(1..=4),
        informative_types: vec![0, 1],
        edge_density: vec![vec![0.3; 3]; 3],
        homophily: 0.7,
        ..SynthSpec::default()
    };
    synth_graph(&spec, rng.random()).expect("valid small spec")
}

pub fn random_params(g: &HeteroGraph, hidden: usize, rng: &mut ChaCha8Rng) -> GcnParams {
    GcnParams::init(g.feature_dim(), hidden, Init::Glorot, rng).expect("dims")
}

pub struct Scene<'g> {
    pub ctx: PromptContext<'g>,
    pub task: TaskSpec,
}

pub fn scene<'g>(g: &'g HeteroGraph, emb: NodeEmbeddings, seed: u64) -> Scene<'g> {
    Scene {
        ctx: PromptContext::new(g, emb, 1).expect("context"),
        task: sample_tasks(g, 1, 1, seed).expect("enough labels").remove(0),
    }
}

pub fn random_prompts(ctx: &PromptContext, rng: &mut ChaCha8Rng) -> PromptPair {
    let mut p = ctx.neutral_prompts();
    p.feature.iter_mut().for_each(|x| *x = rng.random_range(0.5..1.5));
    p.semantic.iter_mut().for_each(|x| *x = rng.random_range(-0.5..0.5));
    p
}

pub fn central<F: Fn(f64) -> f64>(f: F, x: f64, eps: f64) -> f64 {
    (f(x + eps) - f(x - eps)) / (2.0 * eps)
}

fn nudged(params: &GcnParams, which: usize, i: usize, delta: f64) -> GcnParams {
    let mut p = params.clone();
    let w = if which == 0 { &mut p.w1 } else { &mut p.w2 };
    let mut values = w.clone().into_values();
    values[i] += delta;
    *w = Tensor::new(w.shape().to_vec(), values).expect("same shape");
    p
}

/// Worst relative error over every weight of the pre-training loss, and the
/// number of coordinates skipped because a probe crossed a ReLU kink.
pub fn pretrain_weight_check(g: &HeteroGraph, params: &GcnParams, seed: u64, eps: f64) -> (f64, usize, usize) {
    let triplets = sample_triplets(g, 24, 2, seed).expect("triplets");
    let obj = TripletObjective::new(g, &triplets, 0.5, 1).expect("objective");
    let encoder = GcnEncoder::new(g);
    let eval = |p: &GcnParams| {
        let mut tape = Tape::new();
        let w1 = tape.param(p.w1.clone());
        let w2 = tape.param(p.w2.clone());
        let h = encoder.forward(&mut tape, w1, w2).expect("forward");
        let loss = obj.loss(&mut tape, h).expect("loss");
        (tape, w1, w2, loss)
    };
    let (tape, w1, w2, loss) = eval(params);
    let base_signature = tape.relu_signature();
    let grads = tape.backward(loss).expect("backward");
    let analytic = [grads.values_or_zero(w1), grads.values_or_zero(w2)];

    let (mut worst, mut skipped, mut checked) = (0.0f64, 0, 0);
    for (which, a) in analytic.iter().enumerate() {
        for (i, &ga) in a.iter().enumerate() {
            let probe = |delta: f64| {
                let (tape, _, _, loss) = eval(&nudged(params, which, i, delta));
                (tape.value(loss).item(), tape.relu_signature())
            };
            let (up, sig_up) = probe(eps);
            let (down, sig_down) = probe(-eps);
            if sig_up != base_signature || sig_down != base_signature {
                skipped += 1;
                continue;
            }
            checked += 1;
            worst = worst.max(rel_err(ga, (up - down) / (2.0 * eps)));
        }
    }
    (worst, checked, skipped)
}

/// Worst relative error of the downstream loss gradient with respect to
/// prompts and (when given) mask variables.
pub fn downstream_check(
    s: &Scene,
    prompts: &PromptPair,
    masks: Option<&MaskInputs>,
    eps: f64,
) -> (f64, usize) {
    let support = &s.task.support;
    let pairs = s.task.labeled();
    let table = s
        .ctx
        .readouts(support.nodes().chain(pairs.nodes()), &prompts.layout)
        .expect("readouts");
    let mut tape = Tape::new();
    let vars = record_prompts(&mut tape, prompts, masks, true).expect("record");
    let loss = record_loss(&mut tape, &vars, &table, support, &pairs, 0.5).expect("loss");
    let grads = tape.backward(loss.total).expect("backward");

    let value = |p: &PromptPair, m: Option<&MaskInputs>| {
        downstream_loss(&s.ctx, p, m, support, &pairs, 0.5).expect("loss")
    };
    let (mut worst, mut checked) = (0.0f64, 0);
    let mut check = |ga: f64, numeric: f64| {
        worst = worst.max(rel_err(ga, numeric));
        checked += 1;
    };
    for (i, ga) in grads.values_or_zero(vars.feature).into_iter().enumerate() {
        let n = central(
            |x| {
                let mut p = prompts.clone();
                p.feature[i] = x;
                value(&p, masks)
            },
            prompts.feature[i],
            eps,
        );
        check(ga, n);
    }
    for (i, ga) in grads.values_or_zero(vars.semantic).into_iter().enumerate() {
        let n = central(
            |x| {
                let mut p = prompts.clone();
                p.semantic[i] = x;
                value(&p, masks)
            },
            prompts.semantic[i],
            eps,
        );
        check(ga, n);
    }
    if let Some(m) = masks {
        for (i, ga) in grads.values_or_zero(vars.lambda.expect("masks")).into_iter().enumerate() {
            let n = central(
                |x| {
                    let mut mm = m.clone();
                    mm.lambda[i] = x;
                    value(prompts, Some(&mm))
                },
                m.lambda[i],
                eps,
            );
            check(ga, n);
        }
        for (i, ga) in grads.values_or_zero(vars.eta.expect("masks")).into_iter().enumerate() {
            let n = central(
                |x| {
                    let mut mm = m.clone();
                    mm.eta[i] = x;
                    value(prompts, Some(&mm))
                },
                m.eta[i],
                eps,
            );
            check(ga, n);
        }
    }
    (worst, checked)
}

/// Mean over pairs of `|∂L(x)/∂λ_i|` and `|∂L(x)/∂η_j|` by central differences
/// on each pair's own loss, masks at one.
pub fn fd_sensitivities(
    s: &Scene,
    prompts: &PromptPair,
    data: &LabeledSet,
    partition: BlockPartition,
    eps: f64,
) -> (Vec<f64>, Vec<f64>) {
    let support = &s.task.support;
    let ones = MaskInputs::ones(prompts.layout.view_count, partition);
    let mut semantic = vec![0.0; ones.lambda.len()];
    let mut feature = vec![0.0; ones.eta.len()];
    for &pair in &data.pairs {
        let single = LabeledSet::new(vec![pair], support.classes.clone()).expect("label in class set");
        let loss = |m: &MaskInputs| downstream_loss(&s.ctx, prompts, Some(m), support, &single, 0.5).expect("loss");
        for (i, acc) in semantic.iter_mut().enumerate() {
            let d = central(
                |x| {
                    let mut m = ones.clone();
                    m.lambda[i] = x;
                    loss(&m)
                },
                1.0,
                eps,
            );
            *acc += d.abs();
        }
        for (j, acc) in feature.iter_mut().enumerate() {
            let d = central(
                |x| {
                    let mut m = ones.clone();
                    m.eta[j] = x;
                    loss(&m)
                },
                1.0,
                eps,
            );
            *acc += d.abs();
        }
    }
    let n = data.len() as f64;
    semantic.iter_mut().chain(feature.iter_mut()).for_each(|x| *x /= n);
    (semantic, feature)
}

pub fn embeddings(g: &HeteroGraph, params: &GcnParams) -> NodeEmbeddings {
    encode(g, params).expect("encode")
}
