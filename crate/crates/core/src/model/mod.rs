//! The forecasting network: positional encoding, spatial auto-correlation
//! gate, temporal attention gate, multi-scale residual block and the
//! calendar-feature head.

mod network;
mod params;
mod spe;

pub use network::{
    external_head, forward, forward_input, moran_channels, msr_forward, sag_forward, tag_forward,
    ForwardGraph, Pasta, Prediction, TemporalAttentionMap,
};
pub use params::{Checkpoint, CheckpointMeta, ParameterSet};
pub use spe::spatial_positional_encoding;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Branch filter sizes of the multi-scale residual block.
pub const MSR_BRANCHES: [usize; 3] = [1, 3, 5];
/// Branch kept when the multi-scale block is switched off.
pub const SINGLE_BRANCH: usize = 3;

/// Which of the three gating / multi-scale modules are active.
///
/// A disabled gate is bypassed with its neutral element (gate ≡ 1); a
/// disabled multi-scale block keeps only the 3×3 branch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModuleFlags {
    pub sag: bool,
    pub tag: bool,
    pub msr: bool,
}

impl ModuleFlags {
    pub const FULL: ModuleFlags = ModuleFlags {
        sag: true,
        tag: true,
        msr: true,
    };

    pub const NONE: ModuleFlags = ModuleFlags {
        sag: false,
        tag: false,
        msr: false,
    };

    pub fn new(sag: bool, tag: bool, msr: bool) -> Self {
        ModuleFlags { sag, tag, msr }
    }
}

impl Default for ModuleFlags {
    fn default() -> Self {
        Self::FULL
    }
}

/// Static hyper-parameters fixing every parameter shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub n: usize,
    pub m: usize,
    /// Input channels (sum of fragment depths).
    pub t: usize,
    /// External feature width.
    pub dext: usize,
    /// External embedding width.
    pub demb: usize,
    /// Depthwise kernel size in the spatial gate.
    pub sag_kernel: usize,
    /// Hidden width of the temporal attention FC stacks.
    pub tag_hidden: usize,
}

impl ModelConfig {
    pub const DEFAULT_DEMB: usize = 10;
    pub const DEFAULT_SAG_KERNEL: usize = 3;

    pub fn new(n: usize, m: usize, t: usize, dext: usize) -> Result<Self> {
        let cfg = ModelConfig {
            n,
            m,
            t,
            dext,
            demb: Self::DEFAULT_DEMB,
            sag_kernel: Self::DEFAULT_SAG_KERNEL,
            tag_hidden: t.div_ceil(2),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let ModelConfig {
            n,
            m,
            t,
            dext,
            demb,
            sag_kernel,
            tag_hidden,
        } = *self;
        if n == 0 || m == 0 || t == 0 || dext == 0 || demb == 0 || tag_hidden == 0 {
            return Err(Error::InvalidArgument(format!(
                "model extents must be positive: {self:?}"
            )));
        }
        if sag_kernel % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "sag kernel {sag_kernel} must be odd"
            )));
        }
        Ok(())
    }

    /// Closed-form number of scalar parameters.
    ///
    /// gate + feature depthwise convs: `2(k²T + T)`;
    /// attention stacks: `4Th + 2h + 2T`;
    /// multi-scale branches: `Σ_ℓ ℓ²(2T² + T) + 2T + 1` for ℓ ∈ {1,3,5};
    /// external head: `Dext·Demb + Demb + Demb·NM + NM`.
    pub fn parameter_count(&self) -> usize {
        let (t, h, k) = (self.t, self.tag_hidden, self.sag_kernel);
        let nm = self.n * self.m;
        let sag = 2 * (k * k * t + t);
        let tag = 4 * t * h + 2 * h + 2 * t;
        let msr: usize = MSR_BRANCHES
            .iter()
            .map(|l| l * l * (2 * t * t + t) + 2 * t + 1)
            .sum();
        let ext = self.dext * self.demb + self.demb + self.demb * nm + nm;
        sag + tag + msr + ext
    }
}
