//! Stage II: bone-conduction speaker recognition.
//!
//! Constant-Q features of 8-second bone segments feed a small residual
//! convolutional network with two heads: a speaker head that learns the
//! identity, and a condition head behind a gradient-reversal boundary
//! that unlearns body-movement nuisance. Embeddings from the speaker head
//! drive enrollment/verification/identification and the machine-vibration
//! detector.

pub mod augment;
pub mod checkpoint;
pub mod detect;
pub mod feature;
pub mod nn;
pub mod recognize;
pub mod train;

pub use augment::augment;
pub use detect::{detect_machine, DetectionReport, DetectorKind, MachineDetector};
pub use feature::{extract_feature, BcFeature, FeatureConfig};
pub use nn::{dal_loss, Network, NetworkSpec, ParamGroup};
pub use recognize::{
    cosine_similarity, embed, enroll, identify, verify, LayerTag, SpeakerEmbedding, StageDecision,
    Template, TemplateStore,
};
pub use train::{train, train_in_place, TrainLog, TrainOptions, TrainSample};
