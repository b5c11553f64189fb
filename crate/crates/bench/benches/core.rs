use criterion::{criterion_group, criterion_main, Criterion};
use saferec_core::capacity::{column_generation, simplex, two_poi_agents, CgConfig};
use saferec_core::hcope::lower_bound_bca;
use saferec_core::pst::{build_mdp, policy_iteration, poi_world, pst_fit, PoiWorldConfig};
use saferec_core::sim::{chain, chain_behavior, simulate};
use saferec_core::{ope, DiscountSpec, Estimator, Policy};
use std::hint::black_box;

fn bounds(c: &mut Criterion) {
    let data = simulate(&chain(), &chain_behavior(), 1000, 1).unwrap();
    let pi_e = Policy::tabular(vec![vec![0.7, 0.3]]).unwrap();
    let xs = ope::per_trajectory_values(&data, &pi_e, Estimator::Is, DiscountSpec::undiscounted()).unwrap();
    c.bench_function("is_values_1000", |b| {
        b.iter(|| ope::per_trajectory_values(black_box(&data), &pi_e, Estimator::Is, DiscountSpec::undiscounted()).unwrap())
    });
    c.bench_function("bca_1000x2000", |b| b.iter(|| lower_bound_bca(black_box(&xs), 0.05, 2000, 7).unwrap()));
}

fn suffix_trees(c: &mut Criterion) {
    let w = poi_world(&PoiWorldConfig::default(), 1).unwrap();
    let alphabet = w.pst.alphabet().to_vec();
    let cfg = PoiWorldConfig::default().pst;
    c.bench_function("pst_fit_88", |b| b.iter(|| pst_fit(black_box(&w.corpus), alphabet.clone(), &cfg).unwrap()));
    let mdp = build_mdp(&w.pst, 10.0, &w.reward, 0.95).unwrap();
    c.bench_function("policy_iteration_88", |b| b.iter(|| policy_iteration(black_box(&mdp)).unwrap()));
}

fn planning(c: &mut Criterion) {
    let n = 30;
    let lp = simplex::Lp {
        objective: (0..n).map(|j| 1.0 + (j % 7) as f64).collect(),
        constraints: (0..n)
            .map(|i| simplex::Constraint {
                coeffs: (0..n).map(|j| 1.0 + ((i * 31 + j * 17) % 11) as f64).collect(),
                sense: simplex::Sense::Le,
                rhs: 100.0 + i as f64,
            })
            .collect(),
    };
    c.bench_function("simplex_30x30", |b| b.iter(|| simplex::solve(black_box(&lp)).unwrap()));
    let (families, caps) = two_poi_agents();
    c.bench_function("column_generation_two_poi", |b| b.iter(|| column_generation(black_box(&families), &caps, &CgConfig::default()).unwrap()));
}

criterion_group!(benches, bounds, suffix_trees, planning);
criterion_main!(benches);
