//! Optimistic posterior-sampling agents.
//!
//! Each agent repeats: draw a hypothesis from the optimistic posterior, execute its
//! exploration policy for every step in the agent's step set, add the new samples to the
//! ledger and update the posterior. Realized values are exact policy evaluations.

mod ledger;
mod posterior;
mod run;
pub mod tuning;

pub use ledger::{
    bellman_error, model_based_posterior_update, model_free_posterior_update, pobilinear_batch_mean, pobilinear_loss,
    pobilinear_loss_parts, pobilinear_posterior_update, psr_posterior_update, trajectory_log_likelihood,
    transition_log_likelihood, BatchSample, LossLedger, TrajectorySample, TransitionSample, ValueLosses,
};
pub use posterior::{log_sum_exp, softmax, tuple_index, tuple_of, ChainPosterior, JointPosterior, PosteriorState};
pub use run::{run_gps_idm, AgentClass, AgentConfig, AgentKind, Diagnostics, RegretRecord, RunOutput, REGRET_COLUMNS};
