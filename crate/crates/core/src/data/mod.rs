//! Volumes, the MVOL container, phantom cohorts, manifests and splitting.

mod cohort;
mod manifest;
mod phantom;
mod resample;
mod split;
mod volume;

pub use cohort::{generate_cohort, session_seed, CohortSpec, GeneratedSession};
pub use manifest::{load_manifest, save_manifest, VolumeRecord, MANIFEST_HEADER};
pub use phantom::{
    generate_phantom, normalized_age, normalized_score, phantom_layers, PhantomCoefficients,
    PhantomLayers, PhantomParams, AGE_RANGE, SCORE_RANGE,
};
pub use resample::{prepare_volume, resample_trilinear};
pub use split::{group_split, GroupSplit, DEFAULT_RATIOS};
pub use volume::{decode_mvol, read_mvol, write_mvol, Volume3D, MVOL_HEADER_LEN, MVOL_MAGIC, MVOL_VERSION};
