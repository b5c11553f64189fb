use crate::manifest::{write_csv, write_json, write_jsonl, RunManifest};
use crate::{
    BoundArgs, CapacityArgs, DaedalusArgs, EnvSource, Failure, Fig1Args, FqiArgs, ImproveArgs, NopeArgs, PsrlArgs, PstFitArgs, ScheduleArg,
    SimArgs, TrainMode,
};
use saferec_core::capacity::{column_generation, BeliefSpaceConfig, CapacitySpec, CgConfig, TypedMdpFamily};
use saferec_core::fqi::{fqi_train, greedy_train, FqiConfig};
use saferec_core::hcope::{self, error_rate_experiment, risk_table, BoundConfig, DistSpec};
use saferec_core::nope::{rolling_compare, Binning};
use saferec_core::numeric::derive_seed;
use saferec_core::ope::per_trajectory_values;
use saferec_core::pst::{build_mdp, ds_psrl, greedy_thompson, parse_sequences, pst_aicc, pst_fit, pst_loglik, Pst, PstConfig, PsrlSetup, RewardSpec, ThetaFamily};
use saferec_core::safe::{daedalus as run_daedalus, policy_improvement, DaedalusConfig, EsConfig, PolicySpace, SafetySpec, SearchConfig};
use saferec_core::sim::{self, simulate_from, SimEnv};
use saferec_core::{BoundMethod, Dataset, DiscountSpec, Policy, SoftmaxLinear};
use serde::de::DeserializeOwned;
use serde_json::{json, Value};
use std::fmt::Write as _;
use std::path::Path;

fn unwrap_as<T: DeserializeOwned>(v: &Value) -> Option<T> {
    if let Ok(t) = serde_json::from_value::<T>(v.clone()) {
        return Some(t);
    }
    ["result", "policy", "pst"].iter().find_map(|k| v.get(*k).and_then(unwrap_as))
}

/// Loads a JSON input, looking through output envelopes of other
/// subcommands for the first value of the requested shape.
fn load<T: DeserializeOwned>(m: &mut RunManifest, path: &Path, what: &str) -> Result<T, Failure> {
    let bytes = m.read(path)?;
    let v: Value = serde_json::from_slice(&bytes).map_err(|e| Failure::Domain(format!("{}: {e}", path.display())))?;
    unwrap_as(&v).ok_or_else(|| Failure::Domain(format!("{}: not a valid {what}", path.display())))
}

fn load_data(m: &mut RunManifest, path: &Path, max_len: usize) -> Result<Dataset, Failure> {
    let bytes = m.read(path)?;
    Dataset::read_jsonl(&bytes[..], max_len).map_err(|e| Failure::Domain(format!("{}: {e}", path.display())))
}

fn infer_actions(sets: &[&Dataset]) -> usize {
    sets.iter().flat_map(|d| d.trajectories()).flat_map(|t| t.steps()).map(|s| s.action + 1).max().unwrap_or(1)
}

fn feature_bounds(sets: &[&Dataset]) -> Result<(Vec<f64>, Vec<f64>), Failure> {
    let mut lo: Vec<f64> = Vec::new();
    let mut hi: Vec<f64> = Vec::new();
    for step in sets.iter().flat_map(|d| d.trajectories()).flat_map(|t| t.steps()) {
        let f = step.state.features();
        if lo.is_empty() {
            lo = f.to_vec();
            hi = f.to_vec();
        } else if f.len() != lo.len() {
            return Err(Failure::Domain("states have inconsistent feature lengths".into()));
        }
        for (j, x) in f.iter().enumerate() {
            lo[j] = lo[j].min(*x);
            hi[j] = hi[j].max(*x);
        }
    }
    if lo.is_empty() {
        return Err(Failure::Domain("dataset is empty".into()));
    }
    for (l, h) in lo.iter().zip(hi.iter_mut()) {
        if *h <= *l {
            *h = *l + 1.0;
        }
    }
    Ok((lo, hi))
}

fn discount(gamma: f64) -> Result<DiscountSpec, Failure> {
    Ok(DiscountSpec::new(gamma)?)
}

pub fn bound(a: BoundArgs) -> Result<(), Failure> {
    if a.method == BoundMethod::Bca && a.seed.is_none() {
        return Err(Failure::Usage("--seed is required with --method bca".into()));
    }
    let mut m = RunManifest::new("bound", &a, a.seed);
    let data = load_data(&mut m, &a.input, a.max_len)?;
    let policy: Policy = load(&mut m, &a.policy, "policy")?;
    let cfg = BoundConfig::new(a.method, a.delta).with_seed(a.seed.unwrap_or(0)).with_bootstrap(a.bootstrap);
    let xs = per_trajectory_values(&data, &policy, a.estimator, discount(a.gamma)?)?;
    let result = hcope::bound(&xs, &cfg, a.m)?;
    let risk = if a.risk.is_empty() { None } else { Some(risk_table(&xs, &a.risk, &cfg)?) };
    write_json(a.out.as_ref(), &m, &json!({ "bound": result, "risk_table": risk }))?;
    Ok(())
}

const RISK_GRID: [f64; 7] = [0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5];

pub fn fqi(a: FqiArgs) -> Result<(), Failure> {
    let mut m = RunManifest::new("fqi", &a, Some(a.seed));
    let train = load_data(&mut m, &a.train, a.max_len)?;
    let val = load_data(&mut m, &a.val, a.max_len)?;
    let test = match &a.test {
        Some(p) => Some(load_data(&mut m, p, a.max_len)?),
        None => None,
    };
    let mut sets = vec![&train, &val];
    sets.extend(test.as_ref());
    let n_actions = a.n_actions.unwrap_or_else(|| infer_actions(&sets));
    let bound_cfg = BoundConfig::new(a.method, a.delta).with_seed(derive_seed(a.seed, &[1])).with_bootstrap(a.bootstrap);
    let mut cfg = FqiConfig::new(n_actions, bound_cfg);
    cfg.epsilon = a.epsilon;
    cfg.discount = discount(a.gamma)?;
    cfg.iterations = a.iterations;
    cfg.keep_fraction = a.keep_fraction;
    cfg.seed = a.seed;
    let (policy, detail) = match a.mode {
        TrainMode::Fqi => {
            let r = fqi_train(&train, &val, test.as_ref(), &cfg)?;
            (r.policy.clone(), serde_json::to_value(&r).map_err(|e| Failure::Domain(e.to_string()))?)
        }
        TrainMode::Greedy => {
            let g = greedy_train(&train, &cfg)?;
            (g.policy.clone(), serde_json::to_value(&g).map_err(|e| Failure::Domain(e.to_string()))?)
        }
    };
    let xs = per_trajectory_values(&val, &policy, saferec_core::Estimator::Psis, cfg.discount)?;
    let risk = risk_table(&xs, &RISK_GRID, &bound_cfg)?;
    write_json(a.out.as_ref(), &m, &json!({ "policy": policy, "training": detail, "risk_table": risk }))?;
    Ok(())
}

fn initial_policy(m: &mut RunManifest, path: Option<&Path>, n_actions: usize) -> Result<Policy, Failure> {
    match path {
        Some(p) => load(m, p, "policy"),
        None => Ok(Policy::uniform(n_actions)),
    }
}

fn search_config(variant: crate::VariantArg, budget: usize) -> SearchConfig {
    SearchConfig { variant: variant.into(), es: EsConfig { budget, ..EsConfig::default() }, ..SearchConfig::default() }
}

pub fn improve(a: ImproveArgs) -> Result<(), Failure> {
    let mut m = RunManifest::new("improve", &a, Some(a.seed));
    let train = load_data(&mut m, &a.train, a.max_len)?;
    let test = load_data(&mut m, &a.test, a.max_len)?;
    let n_actions = a.n_actions.unwrap_or_else(|| infer_actions(&[&train, &test]));
    let initial = initial_policy(&mut m, a.initial.as_deref(), n_actions)?;
    let (lo, hi) = feature_bounds(&[&train, &test])?;
    let space = PolicySpace::new(initial, SoftmaxLinear::zeros(n_actions, a.order, lo, hi)?)?;
    let mut spec = SafetySpec::new(a.rho_minus, a.delta, a.method)?;
    spec.estimator = a.estimator;
    spec.seed = a.seed;
    let report = policy_improvement(&train, &test, &spec, &space, &search_config(a.variant, a.budget))?;
    write_json(a.out.as_ref(), &m, &report)?;
    Ok(())
}

fn load_env(m: &mut RunManifest, source: &EnvSource) -> Result<SimEnv, Failure> {
    let env = match (&source.env, source.preset.as_deref()) {
        (Some(p), _) => load(m, p, "environment")?,
        (None, Some("chain")) => sim::chain(),
        (None, Some("funnel")) => sim::funnel(),
        (None, Some("two_state")) => sim::two_state(),
        (None, Some("click_stream")) => sim::click_stream(0.075, sim::dip_schedule(20_000, 0.05)),
        (None, Some(other)) => return Err(Failure::Usage(format!("unknown preset '{other}'"))),
        (None, None) => return Err(Failure::Usage("one of --env or --preset is required".into())),
    };
    env.validate()?;
    Ok(env)
}

pub fn daedalus(a: DaedalusArgs) -> Result<(), Failure> {
    let mut m = RunManifest::new("daedalus", &a, Some(a.seed));
    let env = load_env(&mut m, &a.source)?;
    let initial = initial_policy(&mut m, a.initial.as_deref(), env.n_actions)?;
    let (lo, hi) = env.feature_bounds();
    let space = PolicySpace::new(initial, SoftmaxLinear::zeros(env.n_actions, a.order, lo, hi)?)?;
    let mut spec = SafetySpec::new(a.rho_minus, a.delta, a.method)?;
    spec.seed = a.seed;
    let cfg = DaedalusConfig {
        variant: a.variant.into(),
        beta: a.beta.clone(),
        iterations: a.iters,
        search: search_config(a.search, a.budget),
        kfold_until_first_accept: !a.kfold_always,
        stop_at_first_accept: a.stop_at_first_accept,
        seed: a.seed,
    };
    let log = run_daedalus(&env, &space, &spec, &cfg)?;
    write_json(a.out.as_ref(), &m, &log)?;
    Ok(())
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

pub fn nope(a: NopeArgs) -> Result<(), Failure> {
    let mut m = RunManifest::new("nope", &a, None);
    let data = load_data(&mut m, &a.input, a.max_len)?;
    let policy: Policy = load(&mut m, &a.policy, "policy")?;
    let binning = match a.bin_time {
        Some(w) => Binning::Time(w),
        None => Binning::Episodes(a.bin),
    };
    let report = rolling_compare(&data, &policy, binning, a.estimator)?;
    let mut body = String::from("iota,y,tsp_pred,standard_pred\n");
    for s in &report.steps {
        let _ = writeln!(body, "{},{},{},{}", s.x, s.y, s.tsp, s.standard);
    }
    let _ = writeln!(body, "# rmse_tsp,{}", opt(report.rmse_tsp));
    let _ = writeln!(body, "# rmse_standard,{}", opt(report.rmse_standard));
    let _ = writeln!(body, "# next_tsp,{}", report.next_tsp);
    let _ = writeln!(body, "# next_standard,{}", report.next_standard);
    write_csv(a.out.as_ref(), &m, &body)?;
    Ok(())
}

pub fn fit_tree(a: PstFitArgs) -> Result<(), Failure> {
    let mut m = RunManifest::new("pst fit", &a, None);
    let bytes = m.read(&a.input)?;
    let text = String::from_utf8(bytes).map_err(|e| Failure::Domain(format!("{}: {e}", a.input.display())))?;
    let (alphabet, seqs) = parse_sequences(&text)?;
    let cfg = PstConfig { max_depth: a.depth, min_count: a.min_count, prune_epsilon: a.prune_epsilon };
    let pst = pst_fit(&seqs, alphabet, &cfg)?;
    let aicc = pst_aicc(&pst, &seqs).ok();
    let result = json!({
        "pst": pst,
        "nodes": pst.nodes().len(),
        "loglik": pst_loglik(&pst, &seqs),
        "aicc": aicc,
    });
    write_json(a.out.as_ref(), &m, &result)?;
    Ok(())
}

pub fn psrl(a: PsrlArgs) -> Result<(), Failure> {
    let mut m = RunManifest::new("psrl", &a, Some(a.seed));
    let pst: Pst = load(&mut m, &a.pst, "suffix tree")?;
    let family = ThetaFamily::uniform(a.thetas.clone())?;
    let theta_star = match a.theta_star {
        Some(t) => t,
        None => a.thetas[(derive_seed(a.seed, &[2]) % a.thetas.len() as u64) as usize],
    };
    // Desirability follows the root distribution, scaled so the most likely symbol scores 1.
    let root = &pst.nodes()[0].dist;
    let top = root.iter().cloned().fold(f64::MIN, f64::max);
    let reward = RewardSpec::poi(root.iter().map(|p| p / top).collect());
    let setup = PsrlSetup::new(&pst, family, &reward, a.gamma)?;
    let env = build_mdp(&pst, theta_star, &reward, a.gamma)?;
    let run = match a.schedule {
        ScheduleArg::Doubling => ds_psrl(&setup, &env, a.horizon, a.seed)?,
        ScheduleArg::Greedy => greedy_thompson(&setup, &env, a.horizon, a.seed)?,
    };
    let result = json!({
        "theta_star": theta_star,
        "average_reward": run.average_reward(),
        "null_steps": run.null_steps().len(),
        "switches": run.resamples.len(),
        "run": run,
    });
    write_json(a.out.as_ref(), &m, &result)?;
    Ok(())
}

pub fn capacity(a: CapacityArgs) -> Result<(), Failure> {
    let mut m = RunManifest::new("capacity", &a, None);
    let bytes = m.read(&a.family)?;
    let v: Value = serde_json::from_slice(&bytes).map_err(|e| Failure::Domain(format!("{}: {e}", a.family.display())))?;
    let families: Vec<TypedMdpFamily> = if let Some(list) = unwrap_as::<Vec<TypedMdpFamily>>(&v) {
        match a.agents {
            Some(n) if n != list.len() => return Err(Failure::Usage(format!("--agents {n} but the file lists {} families", list.len()))),
            _ => list,
        }
    } else if let Some(f) = unwrap_as::<TypedMdpFamily>(&v) {
        vec![f; a.agents.unwrap_or(1)]
    } else {
        return Err(Failure::Domain(format!("{}: not a valid family", a.family.display())));
    };
    let caps: CapacitySpec = load(&mut m, &a.caps, "capacity specification")?;
    let cfg = CgConfig { tolerance: a.tolerance, max_iterations: a.max_iterations, belief: BeliefSpaceConfig { min_prob: a.min_prob, alpha: a.alpha } };
    let sol = column_generation(&families, &caps, &cfg)?;
    let mut body = String::from("kind,agent,column,t,r,value\n");
    let _ = writeln!(body, "objective,,,,,{}", sol.master.objective);
    for (i, row) in sol.master.mix.iter().enumerate() {
        for (j, x) in row.iter().enumerate() {
            let _ = writeln!(body, "mix,{i},{j},,,{x}");
        }
    }
    for (i, cols) in sol.columns.columns.iter().enumerate() {
        for (j, c) in cols.iter().enumerate() {
            let _ = writeln!(body, "column_value,{i},{j},,,{}", c.value);
        }
    }
    for (t, row) in sol.master.lambda.iter().enumerate() {
        for (r, l) in row.iter().enumerate() {
            let _ = writeln!(body, "dual,,,{t},{r},{l}");
        }
    }
    for (t, row) in sol.master.load.iter().enumerate() {
        for (r, l) in row.iter().enumerate() {
            let _ = writeln!(body, "load,,,{t},{r},{l}");
        }
    }
    write_csv(a.out.as_ref(), &m, &body)?;
    Ok(())
}

pub fn sim(a: SimArgs) -> Result<(), Failure> {
    let mut m = RunManifest::new("sim", &a, a.seed);
    let env = load_env(&mut m, &a.source)?;
    if a.print_env {
        write_json(a.out.as_ref(), &m, &env)?;
        return Ok(());
    }
    let policy = initial_policy(&mut m, a.policy.as_deref(), env.n_actions)?;
    let seed = a.seed.ok_or_else(|| Failure::Usage("--seed is required".into()))?;
    let data = simulate_from(&env, &policy, a.n, seed, a.first_episode)?;
    write_jsonl(a.out.as_ref(), &m, &data.to_jsonl())?;
    Ok(())
}

pub fn fig1(a: Fig1Args) -> Result<(), Failure> {
    let m = RunManifest::new("calibrate fig1", &a, Some(a.seed));
    let dist = DistSpec::Gamma { shape: a.shape, scale: a.scale };
    let rows = error_rate_experiment(dist, &a.n, a.trials, a.delta, a.bootstrap, a.seed)?;
    let mut body = String::from("n,trials,ci,tt,bca\n");
    for r in rows {
        let _ = writeln!(body, "{},{},{},{},{}", r.n, r.trials, r.ci, r.tt, r.bca);
    }
    write_csv(a.out.as_ref(), &m, &body)?;
    Ok(())
}
