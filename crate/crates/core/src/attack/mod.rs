//! Sparse targeted attacks: the full method and its ablation baselines.

pub mod config;
pub mod engine;
pub mod steps;

pub use config::AttackConfig;
pub use engine::{
    baseline_dense, baseline_l1_delta, baseline_no_encoder, baseline_random, baseline_subset, run_attack, run_variant, total_loss,
    total_loss_grad_delta, Attack, AttackResult, AttackState, IterationRecord, Variant,
};
pub use steps::{alpha_schedule, dynamic_lambda, init_delta, momentum_grad_update, pgd_step, scaled_sigmoid_mask};
