//! Statistics for auditing image–text embedding spaces with morph series.
//!
//! The crate reads embedding matrices ([`matrix`]) and their JSON manifests
//! ([`manifest`]), plans and interpolates morph series ([`pairing`]),
//! measures which of two labels each morphed image sits closer to
//! ([`association`]), scores valence with the single-category embedding
//! association test ([`weat`]), and provides the moment and correlation
//! statistics these reports need ([`stats`]).

pub mod association;
pub mod error;
pub mod lexicon;
pub mod manifest;
pub mod matrix;
pub mod pairing;
pub mod stats;
pub mod weat;

pub use association::{
    association_curve, association_skewness, cosine, crossover_index, mean_cosine_curve,
    AssociationCurve, CurveSummary, LabelPreferenceRecord,
};
pub use error::{AuditError, Result};
pub use lexicon::Lexicon;
pub use manifest::{
    validate_manifest, validate_manifest_split, DatasetManifest, LabelDescriptor,
    RecordDescriptor, Violation, SERIES_LEN,
};
pub use matrix::{load_matrix, load_matrix_csv, save_matrix, EmbeddingMatrix};
pub use pairing::{interpolate, mixing_ratio, plan_pairings, InterpolationSeries, PairingPlan};
pub use stats::{moments, pearson, population_std, CorrelationResult, MomentSummary};
pub use weat::{
    batch_sc_weat, sc_weat_effect_size, sc_weat_pvalue, validate_against_norms, AttributeSet,
    PermutationMode, ScWeatResult, SignConvention, ValenceNormTable,
};
