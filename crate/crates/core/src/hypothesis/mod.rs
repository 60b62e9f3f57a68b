//! Finite hypothesis classes, planning oracles and link functions.

mod classes;
mod link;
mod planning;

pub use classes::{
    audit_model_class, audit_value_class, make_perturbation_class, make_value_class, perturb_row, AuditReport,
    HypothesisClass, LayeredValueClass, Model, ModelHypothesis, ValueHypothesis,
};
pub use link::{
    best_memory_policy, first_obs_law, make_pobilinear_class, memory_policy_from_actions, memory_policy_value,
    memory_values, policy_memory, random_memory_policy, solve_link_function, LinkFunction, LinkSolution,
    PoBilinearHypothesis,
};
pub use planning::{evaluate_markov_mdp, plan_history_tree, plan_mdp, MdpSolution, HISTORY_NODE_CAP};
