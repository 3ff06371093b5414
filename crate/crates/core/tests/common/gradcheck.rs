//! Finite-difference checks of the reverse-mode engine.

use pasta_core::model::{ForwardGraph, ModelConfig, ModuleFlags, ParameterSet};
use pasta_core::tensor::{Activation, ConvMode, ElementwiseKind, Graph, PoolKind, Var};
use pasta_core::Tensor;
use std::collections::BTreeMap;

use super::{numeric_gradient, random_tensor, rel_err, rng};

pub const H: f64 = 1e-6;
pub const OP_TOL: f64 = 1e-5;
pub const MODEL_TOL: f64 = 1e-4;

/// Records a scalar loss over the given leaves.
pub type LossBuilder = dyn Fn(&mut Graph, &[Var]) -> Var;

fn loss_value(inputs: &[Tensor], build: &LossBuilder) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let loss = build(&mut g, &vars);
    g.value(loss).item().unwrap()
}

/// Worst relative error between analytic and numeric gradients over every input.
pub fn check_loss(inputs: &[Tensor], build: &LossBuilder) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let loss = build(&mut g, &vars);
    let grads = g.backward(loss).unwrap();
    let mut worst: f64 = 0.0;
    for (idx, input) in inputs.iter().enumerate() {
        let analytic = grads
            .get(vars[idx])
            .map(|t| t.data().to_vec())
            .unwrap_or_else(|| vec![0.0; input.len()]);
        let numeric = numeric_gradient(input.data(), H, |probe| {
            let mut perturbed = inputs.to_vec();
            perturbed[idx] = Tensor::new(input.shape().to_vec(), probe.to_vec()).unwrap();
            loss_value(&perturbed, build)
        });
        worst = worst.max(rel_err(&analytic, &numeric));
    }
    worst
}

/// Checks a tensor-valued op by closing it with a quadratic loss against a
/// fixed random target, which feeds it a dense, non-uniform upstream gradient.
pub fn check_op(
    inputs: &[Tensor],
    seed: u64,
    op: impl Fn(&mut Graph, &[Var]) -> Var + 'static,
) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = op(&mut g, &vars);
    let target = random_tensor(&mut rng(seed ^ 0x7a7a), g.value(out).shape(), 1.0);
    let build = move |g: &mut Graph, vars: &[Var]| {
        let out = op(g, vars);
        let t = g.leaf(target.clone());
        // A huge delta keeps the loss in its quadratic regime.
        g.huber_loss(out, t, 1e9).unwrap()
    };
    check_loss(inputs, &build)
}

pub struct OpCase {
    pub name: &'static str,
    pub error: f64,
}

fn conv_case(seed: u64, dims: [usize; 4], k: usize, cout: usize, mode: ConvMode) -> f64 {
    let mut r = rng(seed);
    let cin = dims[3];
    let input = random_tensor(&mut r, &dims, 1.0);
    let (kernel, bias) = match mode {
        ConvMode::Dense => (
            random_tensor(&mut r, &[k, k, cin, cout], 1.0),
            random_tensor(&mut r, &[cout], 1.0),
        ),
        ConvMode::Depthwise => (
            random_tensor(&mut r, &[k, k, cin], 1.0),
            random_tensor(&mut r, &[cin], 1.0),
        ),
    };
    check_op(&[input, kernel, bias], seed, move |g, v| {
        g.conv2d(v[0], v[1], v[2], mode).unwrap()
    })
}

/// Every differentiable op, three shapes each, for one seed.
pub fn op_suite(seed: u64) -> Vec<OpCase> {
    let mut cases = Vec::new();
    let mut push = |name: &'static str, error: f64| cases.push(OpCase { name, error });

    for (dims, k, cout) in [
        ([1, 4, 4, 2], 3, 3),
        ([2, 5, 3, 1], 1, 2),
        ([1, 6, 5, 3], 5, 1),
    ] {
        push(
            "conv2d/dense",
            conv_case(seed, dims, k, cout, ConvMode::Dense),
        );
    }
    for (dims, k) in [([1, 4, 4, 2], 3), ([2, 3, 5, 3], 1), ([1, 6, 6, 2], 5)] {
        push(
            "conv2d/depthwise",
            conv_case(seed, dims, k, 0, ConvMode::Depthwise),
        );
    }
    for (rows, din, dout) in [(1, 3, 2), (4, 5, 3), (2, 1, 6)] {
        let mut r = rng(seed);
        let inputs = [
            random_tensor(&mut r, &[rows, din], 1.0),
            random_tensor(&mut r, &[din, dout], 1.0),
            random_tensor(&mut r, &[dout], 1.0),
        ];
        push(
            "fully_connected",
            check_op(&inputs, seed, |g, v| {
                g.fully_connected(v[0], v[1], v[2]).unwrap()
            }),
        );
    }
    for (name, kind) in [
        ("activation/relu", Activation::Relu),
        ("activation/sigmoid", Activation::Sigmoid),
        ("activation/tanh", Activation::Tanh),
    ] {
        for shape in [&[7][..], &[2, 3, 4], &[1, 3, 3, 2]] {
            let input = random_tensor(&mut rng(seed), shape, 2.0);
            push(
                name,
                check_op(&[input], seed, move |g, v| g.activation(v[0], kind)),
            );
        }
    }
    for (name, kind) in [
        ("global_pool/avg", PoolKind::Avg),
        ("global_pool/max", PoolKind::Max),
    ] {
        for dims in [[1, 3, 3, 2], [2, 4, 2, 3], [3, 1, 5, 1]] {
            let input = random_tensor(&mut rng(seed), &dims, 1.0);
            push(
                name,
                check_op(&[input], seed, move |g, v| {
                    g.global_pool(v[0], kind).unwrap()
                }),
            );
        }
    }
    for (name, kind) in [
        ("elementwise/add", ElementwiseKind::Add),
        ("elementwise/mul", ElementwiseKind::Mul),
    ] {
        for (a, b) in [
            (vec![2, 3], vec![2, 3]),
            (vec![1, 3, 4, 2], vec![1, 3, 4, 2]),
            (vec![2, 3, 2, 4], vec![2, 1, 1, 4]),
        ] {
            let mut r = rng(seed);
            let inputs = [
                random_tensor(&mut r, &a, 1.0),
                random_tensor(&mut r, &b, 1.0),
            ];
            push(
                name,
                check_op(&inputs, seed, move |g, v| {
                    g.elementwise(v[0], v[1], kind).unwrap()
                }),
            );
        }
    }
    for (from, to) in [
        (vec![2, 6], vec![3, 4]),
        (vec![1, 2, 2, 3], vec![4, 3]),
        (vec![5], vec![1, 1, 1, 5]),
    ] {
        let input = random_tensor(&mut rng(seed), &from, 1.0);
        push(
            "reshape",
            check_op(&[input], seed, move |g, v| g.reshape(v[0], &to).unwrap()),
        );
    }
    // Residuals spread over both sides of delta.
    for (shape, delta) in [
        (vec![9], 0.5),
        (vec![2, 3, 3], 1.0),
        (vec![1, 2, 2, 2], 0.25),
    ] {
        let mut r = rng(seed);
        let inputs = [
            random_tensor(&mut r, &shape, 1.5),
            random_tensor(&mut r, &shape, 1.5),
        ];
        let build = move |g: &mut Graph, v: &[Var]| g.huber_loss(v[0], v[1], delta).unwrap();
        push("huber_loss", check_loss(&inputs, &build));
    }
    cases
}

/// Small model used for the end-to-end check.
pub fn toy_config() -> ModelConfig {
    ModelConfig::new(6, 6, 3, 8).unwrap()
}

/// Initialised parameters with every entry, biases included, jittered away from zero.
pub fn jittered_params(cfg: &ModelConfig, seed: u64) -> ParameterSet {
    let mut r = rng(seed ^ 0x51ab);
    let base = ParameterSet::init(cfg, seed);
    let map: BTreeMap<String, Tensor> = base
        .iter()
        .map(|(name, t)| {
            let jitter = random_tensor(&mut r, t.shape(), 0.1);
            let data = t
                .data()
                .iter()
                .zip(jitter.data())
                .map(|(a, b)| a + b)
                .collect();
            (
                name.to_string(),
                Tensor::new(t.shape().to_vec(), data).unwrap(),
            )
        })
        .collect();
    ParameterSet::from_map(map)
}

/// Worst per-parameter relative error of the whole model's Huber loss gradient.
pub fn model_check(seed: u64, flags: ModuleFlags) -> f64 {
    let cfg = toy_config();
    let mut r = rng(seed);
    let batch = 2;
    let inputs = random_tensor(&mut r, &[batch, cfg.n, cfg.m, cfg.t], 1.0);
    let external = random_tensor(&mut r, &[batch, cfg.dext], 1.0);
    let targets = random_tensor(&mut r, &[batch, cfg.n, cfg.m], 0.9);
    let params = jittered_params(&cfg, seed);

    let loss_of = |p: &ParameterSet| -> (Var, ForwardGraph) {
        let mut fg = ForwardGraph::build(&cfg, flags, p, &inputs, &external).unwrap();
        let t = fg.graph.leaf(targets.clone());
        let loss = fg.graph.huber_loss(fg.prediction, t, 1.0).unwrap();
        (loss, fg)
    };

    let (loss, fg) = loss_of(&params);
    let grads = fg.graph.backward(loss).unwrap();
    let mut worst: f64 = 0.0;
    for (name, tensor) in params.iter() {
        let var = fg.param_var(name).unwrap();
        let analytic = grads
            .get(var)
            .map(|t| t.data().to_vec())
            .unwrap_or_else(|| vec![0.0; tensor.len()]);
        let numeric = numeric_gradient(tensor.data(), H, |probe| {
            let mut p = params.clone();
            p.insert(
                name,
                Tensor::new(tensor.shape().to_vec(), probe.to_vec()).unwrap(),
            );
            let (loss, fg) = loss_of(&p);
            fg.graph.value(loss).item().unwrap()
        });
        worst = worst.max(rel_err(&analytic, &numeric));
    }
    worst
}
