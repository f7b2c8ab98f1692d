//! Error maps, point metrics, mutual information and the Reynolds-sweep
//! and prediction-horizon studies.

mod metrics;
mod output;
mod studies;

pub use metrics::{
    average_ranks, mutual_information, pearson, point_metrics, spatial_l2_error, spearman, ErrorMap,
    PointTrajectory, MI_MIN_LEN,
};
pub use output::{sidecar_path, write_errors_csv, write_field_pgm, write_horizon_csv, write_pgm, write_points_csv, write_sweep_csv};
pub use studies::{
    horizon_study, horizon_study_with, mean_relative_error, physical, predict_and_score, probe_points, reynolds_sweep_eval, rollout_scores,
    HorizonRow, HorizonStudyResult, Predictor, SweepResult, SweepRow, PROBE_FRACTIONS,
};
