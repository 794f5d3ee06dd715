//! Network search: stepwise edge toggling and the LASSO path.

mod lasso;
mod stepwise;

pub use lasso::{
    lasso_path, lasso_search, log_spaced, refit_selected, select_from_path, LassoPathConfig, LassoResult, PathPoint,
    PathRecord,
};
pub use stepwise::{stepwise_search, Action, InitialNetwork, SearchConfig, SearchCriterion, SearchTrace, StepRecord};
