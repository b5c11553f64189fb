//! Probabilistic suffix trees over activity sequences, the θ-perturbed
//! action models built from them, and posterior sampling over θ.

mod mdp;
mod psrl;
mod tree;

pub use mdp::{
    bellman_residual, build_mdp, lipschitz_check, perturb_dynamics, policy_iteration, q_value, FiniteMdp, Mdp, PstMdp,
    RewardSpec, Solution, LIPSCHITZ_CONSTANT,
};
pub use psrl::{
    ds_psrl, greedy_thompson, poi_world, posterior_update, PoiWorld, PoiWorldConfig, PosteriorUpdate, PsrlRun,
    PsrlSetup, Resample, Schedule, ThetaFamily,
};
pub use tree::{parse_sequences, pst_aicc, pst_fit, pst_loglik, Pst, PstConfig, PstNode, Suffix};
