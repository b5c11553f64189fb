mod belief;
mod cg;
mod instances;
pub mod simplex;

pub use belief::{
    belief_update, bounded_belief_plan, build_belief_space, posterior_sampling_evaluation, regret, type_policies_and_cross_values,
    BeliefPlan, BeliefPoint, BeliefSpace, BeliefSpaceConfig, CapacitySpec, Penalty, TypeSolutions, TypedMdpFamily,
};
pub use cg::{
    column_generation, master_lp, posterior_sampling_baseline, posterior_sampling_column, price_column, CgConfig, CgSolution, Column,
    ColumnKind, ColumnSet, MasterSolution,
};
pub use instances::two_poi_agents;
