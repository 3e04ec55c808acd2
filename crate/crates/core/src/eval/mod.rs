//! ROC/EER/AUC metrics and the enrollment/verification protocol.

mod metrics;
mod protocol;

pub use metrics::{auc, eer, roc_curve, RocCurve, RocPoint, ScorePools};
pub use protocol::{
    evaluate_features, featurize, fold_assignment, hyperparameter_grid, run_protocol, training_split, user_pools,
    Aggregate, Aggregation, EvaluationReport, FeatureSet, ForgeryKind, GridCell, GridReport, ProtocolBlock,
    ProtocolConfig, UserFeatures, UserResult, REPORT_SCHEMA_VERSION,
};
