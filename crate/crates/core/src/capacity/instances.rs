use super::belief::{CapacitySpec, TypedMdpFamily};

/// Three visitors on a street with two attractions, one visitor per
/// attraction per step, over three steps. State 0 is the street, states 1
/// and 2 the attractions; action 0 points the visitor to the first
/// attraction and action 1 to the second. Visitors differ in taste and in
/// how readily they follow advice, and know their own type.
pub fn two_poi_agents() -> (Vec<TypedMdpFamily>, CapacitySpec) {
    let agents = [([0.0, 1.0, 0.6], 0.8, 0.6), ([0.0, 0.9, 0.8], 0.7, 0.7), ([0.0, 1.0, 0.3], 0.9, 0.5)];
    let families = agents
        .iter()
        .map(|&(utility, follow_a, follow_b)| {
            // Advice towards the attraction already occupied keeps the visitor there.
            let rows = |s: usize| -> Vec<Vec<f64>> {
                let to_a = if s == 1 { vec![0.0, 1.0, 0.0] } else { vec![1.0 - follow_a, follow_a, 0.0] };
                let to_b = if s == 2 { vec![0.0, 0.0, 1.0] } else { vec![1.0 - follow_b, 0.0, follow_b] };
                vec![to_a, to_b]
            };
            TypedMdpFamily {
                n_states: 3,
                n_actions: 2,
                horizon: 3,
                initial_state: 0,
                prior: vec![1.0],
                transitions: vec![(0..3).map(rows).collect()],
                rewards: vec![(0..3).map(|s| vec![utility[s]; 2]).collect()],
            }
        })
        .collect();
    let consumption = (1..=2).map(|r| (0..3).map(|s| vec![u8::from(s == r); 2]).collect()).collect();
    (families, CapacitySpec { consumption, limits: vec![1.0, 1.0] })
}
