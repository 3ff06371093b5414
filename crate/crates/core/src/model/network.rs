use std::collections::BTreeMap;

use super::params::ParameterSet;
use super::spe::spatial_positional_encoding;
use super::{ModelConfig, ModuleFlags, MSR_BRANCHES, SINGLE_BRANCH};
use crate::error::{shape_err, Result};
use crate::grid::Grid;
use crate::grid_data::Sample;
use crate::spatial_stats::local_morans_i;
use crate::tensor::{Activation, ConvMode, Graph, PoolKind, Tensor, Var};

/// Per-channel attention weights `T^c` for one input, aligned with the
/// sample channel order. Every weight lies strictly in `(0, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalAttentionMap {
    pub weights: Vec<f64>,
}

/// Local Moran's I of every `(batch, channel)` slice of a `[B,N,M,T]` tensor.
pub fn moran_channels(x: &Tensor) -> Result<Tensor> {
    let [b, n, m, t] = x.dims4()?;
    let xd = x.data();
    let mut out = vec![0.0; xd.len()];
    for bi in 0..b {
        let base = bi * n * m * t;
        for c in 0..t {
            let slice: Vec<f64> = (0..n * m).map(|cell| xd[base + cell * t + c]).collect();
            let field = local_morans_i(&Grid::new(n, m, slice)?)?;
            for (cell, s) in field.stats.iter().enumerate() {
                out[base + cell * t + c] = *s;
            }
        }
    }
    Tensor::new(vec![b, n, m, t], out)
}

/// Parameter tensors bound as leaves on a graph.
struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    fn new(graph: &mut Graph, params: &ParameterSet) -> Self {
        let vars = params
            .iter()
            .map(|(name, t)| (name.to_string(), graph.leaf(t.clone())))
            .collect();
        Bound { vars }
    }

    fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| crate::Error::CheckpointMismatch(format!("missing parameter `{name}`")))
    }
}

/// `F' = sigmoid(dwconv(S)) ⊗ dwconv(x_spe)` where `S` is the per-channel
/// local Moran's I of the un-encoded input. With the gate off, `F' = dwconv(x_spe)`.
fn sag_graph(g: &mut Graph, p: &Bound, x_raw: &Tensor, x_spe: Var, on: bool) -> Result<Var> {
    if x_raw.shape() != g.value(x_spe).shape() {
        return shape_err(format!(
            "sag: raw input {:?} vs encoded input {:?}",
            x_raw.shape(),
            g.value(x_spe).shape()
        ));
    }
    let features = g.conv2d(
        x_spe,
        p.get("sag.feat.weight")?,
        p.get("sag.feat.bias")?,
        ConvMode::Depthwise,
    )?;
    if !on {
        return Ok(features);
    }
    let stats = g.leaf(moran_channels(x_raw)?);
    let gate = g.conv2d(
        stats,
        p.get("sag.gate.weight")?,
        p.get("sag.gate.bias")?,
        ConvMode::Depthwise,
    )?;
    let gate = g.activation(gate, Activation::Sigmoid);
    g.mul(gate, features)
}

/// Returns `(F^TAG, T^c)` with `T^c` shaped `[B,1,1,T]`.
fn tag_graph(g: &mut Graph, p: &Bound, f_prime: Var) -> Result<(Var, Var)> {
    let [b, _, _, t] = g.value(f_prime).dims4()?;
    let mut branch =
        |kind: PoolKind, w_in: &str, b_in: &str, w_out: &str, b_out: &str| -> Result<Var> {
            let pooled = g.global_pool(f_prime, kind)?;
            let flat = g.reshape(pooled, &[b, t])?;
            let hidden = g.fully_connected(flat, p.get(w_in)?, p.get(b_in)?)?;
            g.fully_connected(hidden, p.get(w_out)?, p.get(b_out)?)
        };
    let avg = branch(PoolKind::Avg, "tag.w0", "tag.b0", "tag.w1", "tag.b1")?;
    let max = branch(PoolKind::Max, "tag.w2", "tag.b2", "tag.w3", "tag.b3")?;
    let logits = g.add(avg, max)?;
    let weights = g.activation(logits, Activation::Sigmoid);
    let weights = g.reshape(weights, &[b, 1, 1, t])?;
    let out = g.mul(f_prime, weights)?;
    Ok((out, weights))
}

/// Sum over branches of `relu(outer(relu(inner(x)) + skip(x)))`, `[B,N,M,1]`.
fn msr_graph(g: &mut Graph, p: &Bound, f_tag: Var, multi_scale: bool) -> Result<Var> {
    let single = [SINGLE_BRANCH];
    let branches: &[usize] = if multi_scale { &MSR_BRANCHES } else { &single };
    let mut total: Option<Var> = None;
    for &l in branches {
        let conv = |g: &mut Graph, x: Var, part: &str| -> Result<Var> {
            g.conv2d(
                x,
                p.get(&format!("msr.{l}.{part}.weight"))?,
                p.get(&format!("msr.{l}.{part}.bias"))?,
                ConvMode::Dense,
            )
        };
        let inner = conv(g, f_tag, "inner")?;
        let inner = g.activation(inner, Activation::Relu);
        let skip = conv(g, f_tag, "skip")?;
        let residual = g.add(inner, skip)?;
        let outer = conv(g, residual, "outer")?;
        let branch = g.activation(outer, Activation::Relu);
        total = Some(match total {
            None => branch,
            Some(acc) => g.add(acc, branch)?,
        });
    }
    Ok(total.expect("at least one branch"))
}

/// `fc2(relu(fc1(e)))` reshaped to `[B,N,M,1]`.
fn external_graph(g: &mut Graph, p: &Bound, ext: Var, n: usize, m: usize) -> Result<Var> {
    let [b, _] = g.value(ext).dims2()?;
    let hidden = g.fully_connected(ext, p.get("ext.fc1.weight")?, p.get("ext.fc1.bias")?)?;
    let hidden = g.activation(hidden, Activation::Relu);
    let out = g.fully_connected(hidden, p.get("ext.fc2.weight")?, p.get("ext.fc2.bias")?)?;
    g.reshape(out, &[b, n, m, 1])
}

/// Adds the spatial positional encoding to every batch item.
fn with_spe(x: &Tensor) -> Result<Tensor> {
    let [b, n, m, t] = x.dims4()?;
    let spe = spatial_positional_encoding(n, m, t);
    let data = x
        .data()
        .chunks_exact(n * m * t)
        .flat_map(|item| item.iter().zip(spe.data()).map(|(a, s)| a + s))
        .collect();
    Tensor::new(vec![b, n, m, t], data)
}

/// A recorded forward pass, ready for loss construction and backward.
pub struct ForwardGraph {
    pub graph: Graph,
    params: Bound,
    /// `[B, N, M]`, in `(-1, 1)`.
    pub prediction: Var,
    /// `[B, 1, 1, T]`; `None` when the temporal gate is off.
    pub attention: Option<Var>,
}

impl ForwardGraph {
    /// Records the full network on a fresh graph.
    ///
    /// `inputs` is `[B, N, M, T]` (scaled, without positional encoding),
    /// `external` is `[B, Dext]`.
    pub fn build(
        cfg: &ModelConfig,
        flags: ModuleFlags,
        params: &ParameterSet,
        inputs: &Tensor,
        external: &Tensor,
    ) -> Result<Self> {
        let [b, n, m, t] = inputs.dims4()?;
        if (n, m, t) != (cfg.n, cfg.m, cfg.t) {
            return shape_err(format!(
                "input is {n}x{m}x{t}, model expects {}x{}x{}",
                cfg.n, cfg.m, cfg.t
            ));
        }
        if external.shape() != [b, cfg.dext] {
            return shape_err(format!(
                "external features {:?}, model expects [{b}, {}]",
                external.shape(),
                cfg.dext
            ));
        }
        let mut g = Graph::new();
        let p = Bound::new(&mut g, params);
        let x_spe = g.leaf(with_spe(inputs)?);
        let f_prime = sag_graph(&mut g, &p, inputs, x_spe, flags.sag)?;
        let (f_tag, attention) = if flags.tag {
            let (out, w) = tag_graph(&mut g, &p, f_prime)?;
            (out, Some(w))
        } else {
            (f_prime, None)
        };
        let msr = msr_graph(&mut g, &p, f_tag, flags.msr)?;
        let ext = g.leaf(external.clone());
        let ext = external_graph(&mut g, &p, ext, n, m)?;
        let sum = g.add(msr, ext)?;
        let out = g.activation(sum, Activation::Tanh);
        let prediction = g.reshape(out, &[b, n, m])?;
        Ok(ForwardGraph {
            graph: g,
            params: p,
            prediction,
            attention,
        })
    }

    pub fn param_var(&self, name: &str) -> Option<Var> {
        self.params.vars.get(name).copied()
    }

    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.params.vars.keys().map(String::as_str)
    }

    pub fn attention_maps(&self) -> Option<Vec<TemporalAttentionMap>> {
        let w = self.graph.value(self.attention?);
        let t = *w.shape().last()?;
        Some(
            w.data()
                .chunks_exact(t)
                .map(|c| TemporalAttentionMap {
                    weights: c.to_vec(),
                })
                .collect(),
        )
    }
}

fn batch_of(samples: &[&Sample], dext: usize) -> Result<(Tensor, Tensor, Tensor)> {
    let first = samples
        .first()
        .ok_or_else(|| crate::Error::Empty("empty batch".into()))?;
    let shape = first.input.shape().to_vec();
    let mut inputs = Vec::with_capacity(samples.len() * first.input.len());
    let mut external = Vec::with_capacity(samples.len() * dext);
    let mut targets = Vec::with_capacity(samples.len() * first.target.data().len());
    for s in samples {
        if s.input.shape() != shape.as_slice() {
            return shape_err("samples in a batch differ in shape");
        }
        if s.external.len() != dext {
            return shape_err(format!(
                "external features have {} entries, model expects {dext}",
                s.external.len()
            ));
        }
        inputs.extend_from_slice(s.input.data());
        external.extend_from_slice(&s.external);
        targets.extend_from_slice(s.target.data());
    }
    let b = samples.len();
    let (n, m, t) = match *shape.as_slice() {
        [n, m, t] => (n, m, t),
        _ => return shape_err(format!("sample input must be [N,M,T], got {shape:?}")),
    };
    Ok((
        Tensor::new(vec![b, n, m, t], inputs)?,
        Tensor::new(vec![b, dext], external)?,
        Tensor::new(vec![b, n, m], targets)?,
    ))
}

/// Network output for one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    /// Scaled prediction, every entry in `(-1, 1)`.
    pub grid: Grid,
    pub attention: Option<TemporalAttentionMap>,
}

/// A parameter set together with the configuration and active modules it runs under.
#[derive(Clone, Debug, PartialEq)]
pub struct Pasta {
    pub config: ModelConfig,
    pub flags: ModuleFlags,
    pub params: ParameterSet,
}

impl Pasta {
    pub fn new(config: ModelConfig, flags: ModuleFlags, params: ParameterSet) -> Result<Self> {
        params.validate(&config)?;
        Ok(Pasta {
            config,
            flags,
            params,
        })
    }

    pub fn init(config: ModelConfig, flags: ModuleFlags, seed: u64) -> Self {
        let params = ParameterSet::init(&config, seed);
        Pasta {
            config,
            flags,
            params,
        }
    }

    pub fn predict(&self, sample: &Sample) -> Result<Prediction> {
        forward(sample, &self.params, &self.config, self.flags)
    }

    /// Mean Huber loss over the batch and its gradient for every parameter.
    /// Parameters the active modules do not use get zero gradients.
    pub fn loss_and_gradients(&self, batch: &[&Sample], delta: f64) -> Result<(f64, ParameterSet)> {
        let (inputs, external, targets) = batch_of(batch, self.config.dext)?;
        let mut fg =
            ForwardGraph::build(&self.config, self.flags, &self.params, &inputs, &external)?;
        let target = fg.graph.leaf(targets);
        let loss = fg.graph.huber_loss(fg.prediction, target, delta)?;
        let mut grads = fg.graph.backward(loss)?;
        let mut out = self.params.zeros_like();
        for (name, slot) in out.iter_mut() {
            let var = fg.param_var(name).expect("every parameter is bound");
            if let Some(g) = grads.take(var) {
                *slot = g;
            }
        }
        let value = fg.graph.value(loss).item()?;
        Ok((value, out))
    }

    /// Mean Huber loss without gradients.
    pub fn loss(&self, batch: &[&Sample], delta: f64) -> Result<f64> {
        let (inputs, external, targets) = batch_of(batch, self.config.dext)?;
        let fg = ForwardGraph::build(&self.config, self.flags, &self.params, &inputs, &external)?;
        crate::tensor::huber_loss(fg.graph.value(fg.prediction), &targets, delta)
    }
}

/// Full forward pass: `tanh(MSR(TAG(SAG(x))) + external_head(e))`.
pub fn forward(
    sample: &Sample,
    params: &ParameterSet,
    cfg: &ModelConfig,
    flags: ModuleFlags,
) -> Result<Prediction> {
    let (inputs, external, _) = batch_of(&[sample], cfg.dext)?;
    forward_batch_of_one(&inputs, &external, params, cfg, flags)
}

/// Forward pass on a bare `[N, M, T]` input and its calendar features.
pub fn forward_input(
    input: &Tensor,
    external: &[f64],
    params: &ParameterSet,
    cfg: &ModelConfig,
    flags: ModuleFlags,
) -> Result<Prediction> {
    let mut shape = vec![1];
    shape.extend_from_slice(input.shape());
    let inputs = input.clone().reshape(&shape)?;
    let external = Tensor::new(vec![1, external.len()], external.to_vec())?;
    forward_batch_of_one(&inputs, &external, params, cfg, flags)
}

fn forward_batch_of_one(
    inputs: &Tensor,
    external: &Tensor,
    params: &ParameterSet,
    cfg: &ModelConfig,
    flags: ModuleFlags,
) -> Result<Prediction> {
    let fg = ForwardGraph::build(cfg, flags, params, inputs, external)?;
    let grid = Grid::new(cfg.n, cfg.m, fg.graph.value(fg.prediction).data().to_vec())?;
    let attention = fg.attention_maps().and_then(|mut maps| maps.pop());
    Ok(Prediction { grid, attention })
}

fn bind_all(params: &ParameterSet) -> (Graph, Bound) {
    let mut g = Graph::new();
    let p = Bound::new(&mut g, params);
    (g, p)
}

/// Spatial auto-correlation gate on `[B,N,M,T]` tensors.
pub fn sag_forward(x_raw: &Tensor, x_spe: &Tensor, params: &ParameterSet) -> Result<Tensor> {
    let (mut g, p) = bind_all(params);
    let x = g.leaf(x_spe.clone());
    let out = sag_graph(&mut g, &p, x_raw, x, true)?;
    Ok(g.value(out).clone())
}

/// Temporal attention gate; returns the gated tensor and one map per batch item.
pub fn tag_forward(
    f_prime: &Tensor,
    params: &ParameterSet,
) -> Result<(Tensor, Vec<TemporalAttentionMap>)> {
    let (mut g, p) = bind_all(params);
    let x = g.leaf(f_prime.clone());
    let (out, w) = tag_graph(&mut g, &p, x)?;
    let t = f_prime.dims4()?[3];
    let maps = g
        .value(w)
        .data()
        .chunks_exact(t)
        .map(|c| TemporalAttentionMap {
            weights: c.to_vec(),
        })
        .collect();
    Ok((g.value(out).clone(), maps))
}

/// Multi-scale residual block, `[B,N,M,T] -> [B,N,M,1]`.
pub fn msr_forward(f_tag: &Tensor, params: &ParameterSet) -> Result<Tensor> {
    let (mut g, p) = bind_all(params);
    let x = g.leaf(f_tag.clone());
    let out = msr_graph(&mut g, &p, x, true)?;
    Ok(g.value(out).clone())
}

/// Calendar-feature head for one feature vector, `[N, M, 1]`.
pub fn external_head(
    features: &[f64],
    params: &ParameterSet,
    n: usize,
    m: usize,
) -> Result<Tensor> {
    let (mut g, p) = bind_all(params);
    let ext = g.leaf(Tensor::new(vec![1, features.len()], features.to_vec())?);
    let out = external_graph(&mut g, &p, ext, n, m)?;
    g.value(out).clone().reshape(&[n, m, 1])
}
