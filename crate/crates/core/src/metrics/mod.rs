//! Regret ledgers, local regret, gradient variation, generator error and bound checks.

mod auc;
mod ledger;
mod meta;
mod regret;

pub use auc::desk_auc;
pub use ledger::{EvalRecord, LedgerHeader, MetaRecord, NeuralRecord, RegretLedger, RoundRecord};
pub use meta::{
    bound_check_thm2, bound_check_thm2_tight, meta_summary, project_simplex, simplex_oracle, MetaSummary,
    SimplexOptimum,
};
pub use regret::{
    bound_check_prop1, bound_check_thm1, generator_error, gradient_variation, ledger_generators, local_regret,
    per_round_violations, recompute_local_regret, BoundReport,
};
