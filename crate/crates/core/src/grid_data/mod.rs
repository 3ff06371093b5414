//! Flow sequences on disk, temporal fragmentation into model samples,
//! min-max scaling, calendar features and the synthetic generator.

mod external;
mod fragments;
mod scaler;
mod sequence;
mod synth;

pub use external::{external_feature_dim, external_features, HolidayCalendar};
pub use fragments::{build_samples, model_input, sample_at, FragmentSpec, Sample, SplitDataset};
pub use scaler::Scaler;
pub use sequence::FlowSequence;
pub use synth::{default_hotspots, generate_synthetic, SynthConfig, DEFAULT_PEAK_HOURS};
