use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModuleFlags, MSR_BRANCHES};
use crate::error::{Error, Result};
use crate::grid_data::{FragmentSpec, Scaler};
use crate::io::{read_to_string, write_atomic};
use crate::tensor::Tensor;

/// Shape, fan-in and fan-out of one trainable tensor.
struct Slot {
    name: String,
    shape: Vec<usize>,
    /// `None` for biases, which start at zero.
    fans: Option<(usize, usize)>,
}

fn slot(name: impl Into<String>, shape: &[usize], fans: Option<(usize, usize)>) -> Slot {
    Slot {
        name: name.into(),
        shape: shape.to_vec(),
        fans,
    }
}

/// Every parameter in initialisation order.
fn layout(cfg: &ModelConfig) -> Vec<Slot> {
    let (t, h, k) = (cfg.t, cfg.tag_hidden, cfg.sag_kernel);
    let nm = cfg.n * cfg.m;
    let mut slots = Vec::new();
    for gate in ["sag.gate", "sag.feat"] {
        slots.push(slot(
            format!("{gate}.weight"),
            &[k, k, t],
            Some((k * k, k * k)),
        ));
        slots.push(slot(format!("{gate}.bias"), &[t], None));
    }
    for (idx, (din, dout)) in [(t, h), (h, t), (t, h), (h, t)].into_iter().enumerate() {
        slots.push(slot(format!("tag.w{idx}"), &[din, dout], Some((din, dout))));
        slots.push(slot(format!("tag.b{idx}"), &[dout], None));
    }
    for l in MSR_BRANCHES {
        for (part, cout) in [("inner", t), ("skip", t), ("outer", 1)] {
            slots.push(slot(
                format!("msr.{l}.{part}.weight"),
                &[l, l, t, cout],
                Some((l * l * t, l * l * cout)),
            ));
            slots.push(slot(format!("msr.{l}.{part}.bias"), &[cout], None));
        }
    }
    slots.push(slot(
        "ext.fc1.weight",
        &[cfg.dext, cfg.demb],
        Some((cfg.dext, cfg.demb)),
    ));
    slots.push(slot("ext.fc1.bias", &[cfg.demb], None));
    slots.push(slot(
        "ext.fc2.weight",
        &[cfg.demb, nm],
        Some((cfg.demb, nm)),
    ));
    slots.push(slot("ext.fc2.bias", &[nm], None));
    slots
}

/// Named trainable tensors, ordered by name.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSet {
    tensors: BTreeMap<String, Tensor>,
}

impl ParameterSet {
    /// Glorot-uniform weights (`±sqrt(6 / (fan_in + fan_out))`), zero biases.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = layout(cfg)
            .into_iter()
            .map(|s| {
                let len: usize = s.shape.iter().product();
                let data = match s.fans {
                    Some((fan_in, fan_out)) => {
                        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                        (0..len).map(|_| rng.random_range(-bound..bound)).collect()
                    }
                    None => vec![0.0; len],
                };
                (s.name, Tensor::from_parts(s.shape, data))
            })
            .collect();
        ParameterSet { tensors }
    }

    /// All parameters set to zero.
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let tensors = layout(cfg)
            .into_iter()
            .map(|s| (s.name, Tensor::zeros(&s.shape)))
            .collect();
        ParameterSet { tensors }
    }

    pub fn from_map(tensors: BTreeMap<String, Tensor>) -> Self {
        ParameterSet { tensors }
    }

    /// Checks names and shapes against the layout implied by `cfg`.
    pub fn validate(&self, cfg: &ModelConfig) -> Result<()> {
        let expected = layout(cfg);
        if expected.len() != self.tensors.len() {
            return Err(Error::CheckpointMismatch(format!(
                "expected {} parameter tensors, found {}",
                expected.len(),
                self.tensors.len()
            )));
        }
        for s in expected {
            let t = self.tensors.get(&s.name).ok_or_else(|| {
                Error::CheckpointMismatch(format!("missing parameter `{}`", s.name))
            })?;
            if t.shape() != s.shape.as_slice() {
                return Err(Error::CheckpointMismatch(format!(
                    "parameter `{}` has shape {:?}, expected {:?}",
                    s.name,
                    t.shape(),
                    s.shape
                )));
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) -> Option<Tensor> {
        self.tensors.insert(name.into(), t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalars across all tensors.
    pub fn scalar_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Same names and shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        ParameterSet {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), Tensor::zeros(v.shape())))
                .collect(),
        }
    }
}

/// Everything needed to rebuild the data pipeline around a parameter set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub n: usize,
    pub m: usize,
    pub t_closeness: usize,
    pub t_periodic: usize,
    pub t_trend: usize,
    pub interval_minutes: u32,
    pub dext: usize,
    pub demb: usize,
    pub scaler_min: f64,
    pub scaler_max: f64,
    pub seed: u64,
    #[serde(default)]
    pub modules: ModuleFlags,
}

impl CheckpointMeta {
    pub fn fragment_spec(&self) -> Result<FragmentSpec> {
        FragmentSpec::with_counts(
            self.interval_minutes,
            self.t_closeness,
            self.t_periodic,
            self.t_trend,
        )
    }

    pub fn scaler(&self) -> Result<Scaler> {
        Scaler::new(self.scaler_min, self.scaler_max)
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        let mut cfg = ModelConfig::new(
            self.n,
            self.m,
            self.t_closeness + self.t_periodic + self.t_trend,
            self.dext,
        )?;
        cfg.demb = self.demb;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Serialize, Deserialize)]
struct StoredTensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct StoredCheckpoint {
    metadata: CheckpointMeta,
    parameters: BTreeMap<String, StoredTensor>,
}

/// A parameter set plus the metadata it was trained under.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: ParameterSet,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        let stored = StoredCheckpoint {
            metadata: self.meta.clone(),
            parameters: self
                .params
                .iter()
                .map(|(k, t)| {
                    (
                        k.to_string(),
                        StoredTensor {
                            shape: t.shape().to_vec(),
                            values: t.data().to_vec(),
                        },
                    )
                })
                .collect(),
        };
        let mut text = serde_json::to_string_pretty(&stored)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let stored: StoredCheckpoint = serde_json::from_str(text)?;
        let cfg = stored.metadata.model_config()?;
        let tensors = stored
            .parameters
            .into_iter()
            .map(|(k, s)| {
                Tensor::new(s.shape, s.values)
                    .map(|t| (k.clone(), t))
                    .map_err(|e| Error::CheckpointMismatch(format!("parameter `{k}`: {e}")))
            })
            .collect::<Result<BTreeMap<_, _>>>()?;
        let params = ParameterSet::from_map(tensors);
        params.validate(&cfg)?;
        Ok(Checkpoint {
            meta: stored.metadata,
            params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&read_to_string(path)?)
    }
}
