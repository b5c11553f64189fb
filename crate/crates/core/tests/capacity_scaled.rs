use saferec_core::capacity::*;
use saferec_core::pst::{poi_world, PoiWorldConfig, PstConfig};

fn world() -> saferec_core::pst::PoiWorld {
    let cfg = PoiWorldConfig {
        n_symbols: 5,
        n_sequences: 2000,
        sequence_len: 10,
        tour: 0.6,
        skip: 0.1,
        pst: PstConfig { max_depth: 1, min_count: 5, prune_epsilon: 0.0 },
    };
    poi_world(&cfg, 3).unwrap()
}

#[test]
fn column_generation_beats_posterior_sampling_on_a_poi_tree() {
    let w = world();
    let family = TypedMdpFamily::from_pst(&w.pst, &[1.0, 10.0, 20.0], vec![1.0 / 3.0; 3], &w.reward, 4).unwrap();
    let families = vec![family; 10];
    let caps = CapacitySpec::poi_presence(&w.pst, &[0, 1, 2, 3, 4], vec![1.0; 5]);
    let cg = column_generation(&families, &caps, &CgConfig::default()).unwrap();
    let base = posterior_sampling_baseline(&families, &caps).unwrap();
    assert!(cg.master.objective >= base.objective - 1e-9, "{} < {}", cg.master.objective, base.objective);
    for load in &cg.master.load {
        assert!(load.iter().zip(&caps.limits).all(|(x, lim)| *x <= lim + 1e-6));
    }
    assert!(cg.objectives.windows(2).all(|w| w[1] >= w[0] - 1e-9));
}

#[test]
fn loose_capacity_reduces_to_independent_planning() {
    let w = world();
    let family = TypedMdpFamily::from_pst(&w.pst, &[1.0, 10.0], vec![0.5, 0.5], &w.reward, 3).unwrap();
    let families = vec![family.clone(); 3];
    let caps = CapacitySpec::poi_presence(&w.pst, &[0, 1, 2, 3, 4], vec![10.0; 5]);
    let cg = column_generation(&families, &caps, &CgConfig { belief: BeliefSpaceConfig { min_prob: 0.0, alpha: 0.0 }, ..CgConfig::default() }).unwrap();
    assert!(cg.master.lambda.iter().flatten().all(|&l| l.abs() < 1e-9));
    let pen = Penalty::zero(&family);
    let sol = type_policies_and_cross_values(&family, &pen);
    let space = build_belief_space(&family, &sol, &BeliefSpaceConfig { min_prob: 0.0, alpha: 0.0 });
    let single = bounded_belief_plan(&family, &space, &sol, &pen, None).value;
    assert!((cg.master.objective - 3.0 * single).abs() < 1e-6, "{} vs {}", cg.master.objective, 3.0 * single);
}
