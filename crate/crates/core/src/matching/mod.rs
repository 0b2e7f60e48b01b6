//! Distance construction, optimal non-bipartite matching and design encoding.

mod assignment;
pub mod blossom;
pub mod design;
pub mod distance;

pub use design::{
    balance_report, encode_encouragement, read_design_csv, solve_nonbipartite, strengthen,
    strengthen_blocked, BalanceReport, BalanceRow, MatchedDesign,
};
pub use distance::{
    build_distance_matrix, CovariateMetric, DistanceMatrix, DistanceSpec, Encouragement,
};
