//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero if any fails.

mod common;

use std::time::{Duration, Instant};

use common::*;
use decpomdp::analysis::{
    btv_constants, dobrushin_coefficient, gather_constants, kl_divergence, parameter_norm_bound,
    theorem1_bounds, theorem2_bound, BoundInputs, TheoryConstants,
};
use decpomdp::evaluation::{
    step_baseline, step_centralized, step_diffusion, BaselineState, CentralizedState,
    DiffusionState, FeatureMap, LearnerConfig, StepContext,
};
use decpomdp::filtering::{centralized_adapt, centralized_evolve, Marginalization, PolicySupports};
use decpomdp::gridworld::{build_grid_model, default_experiment_config, GridConfig};
use decpomdp::harness::{
    build_setup, compute_bounds, run_experiment, simulate_diffusion, trace_csv, Algorithm,
    ExperimentConfig, LearnerSpec, LoadedConfig, ModelSource, NetworkRecipe, ResolvedModel,
    RunTrace, SimParams,
};
use decpomdp::model::{Belief, DecPomdpModel};
use decpomdp::network::{build_uniform, sinkhorn_balance, CombinationMatrix, DEFAULT_SINKHORN_ITERS};
use decpomdp::rng::Streams;
use decpomdp::Exec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn ctx<'a>(
    model: &'a DecPomdpModel,
    supports: &'a PolicySupports,
    streams: &'a Streams,
    learner: &'a LearnerConfig,
    features: &'a FeatureMap,
) -> StepContext<'a> {
    StepContext {
        model,
        supports,
        streams,
        learner,
        features,
        marginalization: Marginalization::default(),
        exec: Exec::Parallel,
    }
}

fn criterion1() -> Outcome {
    let mut r = rng(1);
    let model = random_model(&mut r, 4, &[2, 2], 3, true);
    let liks = model.likelihoods();
    let obs: Vec<Vec<usize>> = (0..6).map(|_| vec![r.random_range(0..3), r.random_range(0..3)]).collect();
    let acts: Vec<Vec<usize>> = (0..6).map(|_| vec![r.random_range(0..2), r.random_range(0..2)]).collect();
    let mut eta = Belief::uniform(4);
    let mut worst: f64 = 0.0;
    for t in 0..6 {
        let mu = centralized_adapt(&eta, &obs[t], &liks).unwrap();
        let oracle = brute_posterior(&model, &obs[..=t], &acts[..=t]);
        worst = worst.max(max_abs(mu.as_slice(), &oracle));
        eta = centralized_evolve(&mu, &acts[t], model.transition()).unwrap();
    }
    outcome(worst <= 1e-10, format!("max abs posterior error {worst:.3e} over 4^6 paths"))
}

fn small_grid(k: usize) -> GridConfig {
    GridConfig {
        width: 5,
        height: 5,
        num_agents: k,
        ..GridConfig::default()
    }
}

fn criterion2() -> Outcome {
    let world = build_grid_model(&small_grid(4), 2).unwrap();
    let model = &world.model;
    let net = build_uniform(4).unwrap();
    let supports = PolicySupports::new(model);
    let streams = Streams::new(2);
    let learner = LearnerConfig {
        alpha: 0.1,
        rho: 0.7,
        gamma: model.gamma(),
        beta: 4.0,
    };
    let f = FeatureMap::Identity;
    let c = ctx(model, &supports, &streams, &learner, &f);
    let mut state = DiffusionState::initial(model, &f, &streams);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let rec = step_diffusion(&mut state, &c, &net).unwrap();
        for mu in &rec.acting_beliefs {
            worst = worst.max(mu.max_abs_diff(&state.shadow.mu));
        }
    }
    let cfg = ExperimentConfig {
        model: ModelSource::BuiltinGrid(small_grid(4)),
        learner: LearnerSpec {
            alpha: 0.1,
            rho: 0.7,
            beta: 4.0,
        },
        network: NetworkRecipe::Uniform,
        seeds: vec![2],
        ..default_experiment_config()
    };
    let bounds = compute_bounds(&LoadedConfig::from_config(cfg).unwrap()).unwrap();
    let rep = bounds[0].report.as_ref().unwrap();
    let zero = rep.j_bound == 0.0 && rep.jtilde_bound == 0.0 && rep.b_tv == 0.0;
    outcome(
        worst <= 1e-8 && zero,
        format!(
            "max |mu_k - mu| {worst:.3e} over 200 steps; J = {}, J~ = {}, B_TV = {}",
            rep.j_bound, rep.jtilde_bound, rep.b_tv
        ),
    )
}

fn criterion3() -> Outcome {
    let mut r = rng(3);
    let model = random_model(&mut r, 6, &[2, 2, 2], 3, true);
    let net = path_network(3);
    let f = FeatureMap::Identity;
    let beta = 3.0;
    let g = gather_constants(
        &model,
        &net,
        &BoundInputs {
            alpha: 0.1,
            rho: 0.7,
            beta,
            features: &f,
            tau: None,
            b: None,
            enumeration_cap: 1_000_000,
        },
    )
    .unwrap();
    let (j_bound, _) = theorem1_bounds(&g.constants).unwrap();
    let supports = PolicySupports::new(&model);
    let learner = LearnerConfig {
        alpha: 0.1,
        rho: 0.7,
        gamma: 0.9,
        beta,
    };
    let seeds = [1u64, 2, 3, 4, 5];
    let per_seed: Vec<Vec<f64>> = Exec::Parallel.map_slice(&seeds, |&seed| {
        let streams = Streams::new(seed);
        let mut c = ctx(&model, &supports, &streams, &learner, &f);
        c.exec = Exec::Sequential;
        let mut state = DiffusionState::initial(&model, &f, &streams);
        let mut sums = [0.0; 3];
        for i in 0..10_000 {
            let rec = step_diffusion(&mut state, &c, &net).unwrap();
            if i >= 5_000 {
                for (s, kl) in sums.iter_mut().zip(&rec.kl_to_central) {
                    *s += kl.finite().expect("full-support model");
                }
            }
        }
        sums.iter().map(|s| s / 5_000.0).collect()
    });
    let avg: Vec<f64> = (0..3).map(|k| per_seed.iter().map(|s| s[k]).sum::<f64>() / 5.0).collect();
    let worst = avg.iter().copied().fold(0.0, f64::max);
    let c = g.constants;
    outcome(
        avg.iter().all(|&v| v <= j_bound),
        format!(
            "per-agent mean KL {avg:.4?} vs J = {j_bound:.4} (B = {:.3}, tau = {:.3}, kappa = {:.3}, lambda = {:.3}); max {worst:.4}",
            c.b, c.tau, c.kappa, c.lambda
        ),
    )
}

struct Scaled {
    consts: TheoryConstants,
    traces: Vec<RunTrace>,
}

fn scaled_grid_runs(alpha: f64) -> Scaled {
    let grid = GridConfig {
        agent_positions: Some(vec![[0, 0], [2, 1], [4, 3], [1, 4]]),
        ..small_grid(4)
    };
    let gamma = grid.gamma;
    let rho = 0.75 * gamma;
    let model = ResolvedModel::Grid(grid);
    let recipe = NetworkRecipe::Positions {
        positions: None,
        threshold: None,
    };
    let setup = build_setup(&model, &recipe, 0).unwrap();
    let f = FeatureMap::Identity;
    let g = gather_constants(
        &setup.model,
        &setup.network,
        &BoundInputs {
            alpha,
            rho,
            beta: 4.0,
            features: &f,
            tau: None,
            b: None,
            enumeration_cap: 1_000_000,
        },
    )
    .unwrap();
    let params = SimParams {
        learner: LearnerConfig {
            alpha,
            rho,
            gamma,
            beta: 4.0,
        },
        features: f,
        marginalization: Marginalization::default(),
        exec: Exec::Sequential,
        iterations: 5000,
        sbe_window: 20,
    };
    let seeds = [1u64, 2, 3, 4, 5];
    let traces = Exec::Parallel.map_slice(&seeds, |&s| simulate_diffusion(&setup, &params, s).unwrap());
    Scaled {
        consts: g.constants,
        traces,
    }
}

fn plateau(traces: &[RunTrace], f: impl Fn(&decpomdp::harness::IterMetrics) -> f64) -> f64 {
    let n = traces[0].metrics.len();
    let start = n - n / 5;
    traces
        .iter()
        .map(|t| t.metrics[start..].iter().map(&f).sum::<f64>() / (n - start) as f64)
        .sum::<f64>()
        / traces.len() as f64
}

fn criteria4and6() -> (Outcome, Outcome) {
    let small = scaled_grid_runs(0.05);
    let large = scaled_grid_runs(0.1);
    let p_small = plateau(&small.traces, |m| m.agreement_error.unwrap());
    let p_large = plateau(&large.traces, |m| m.agreement_error.unwrap());
    let b_small = theorem2_bound(&small.consts).unwrap();
    let b_large = theorem2_bound(&large.consts).unwrap();
    let (b_tv, _) = btv_constants(&large.consts).unwrap();
    let pass4 = p_small < p_large && p_small <= 1.25 * b_small && p_large <= 1.25 * b_large;
    let c4 = outcome(
        pass4,
        format!(
            "plateau agreement error {p_small:.3e} (alpha 0.05) < {p_large:.3e} (alpha 0.1); bounds {b_small:.3e} / {b_large:.3e} (lambda2 = {:.3}, B_TV = {b_tv:.3})",
            large.consts.lambda2
        ),
    );

    let limit = parameter_norm_bound(&large.consts).unwrap();
    let mut sup: f64 = 0.0;
    let mut violations = 0;
    for t in small.traces.iter().chain(&large.traces) {
        let n = t.metrics.len();
        for m in &t.metrics[n / 5..] {
            sup = sup.max(m.stacked_norm);
            violations += usize::from(m.stacked_norm > limit);
        }
    }
    let c6 = outcome(
        violations == 0,
        format!("sup ||col w|| = {sup:.4} vs {limit:.4}; {violations} violations"),
    );
    (c4, c6)
}

fn criterion5() -> Outcome {
    let cfg = ExperimentConfig {
        algorithms: vec![Algorithm::Diffusion, Algorithm::Baseline],
        ..default_experiment_config()
    };
    let dir = tempfile::tempdir().unwrap();
    let art = run_experiment(&LoadedConfig::from_config(cfg).unwrap(), dir.path()).unwrap();
    let curve = |alg: Algorithm| -> Vec<f64> {
        let ts: Vec<&RunTrace> = art.traces.iter().filter(|t| t.algorithm == alg).collect();
        let n = ts[0].sbe_window.len();
        (0..n)
            .map(|i| ts.iter().map(|t| t.sbe_window[i]).sum::<f64>() / ts.len() as f64)
            .collect()
    };
    // plateau: the last two fifths of the seed-mean curve agree within 25%
    let plateau_of = |c: &[f64]| {
        let n = c.len();
        let fifth = n / 5;
        let last = c[n - fifth..].iter().sum::<f64>() / fifth as f64;
        let prev = c[n - 2 * fifth..n - fifth].iter().sum::<f64>() / fifth as f64;
        ((last - prev).abs() <= 0.25 * last.max(prev), last, prev)
    };
    let d = curve(Algorithm::Diffusion);
    let b = curve(Algorithm::Baseline);
    let (d_flat, d_last, d_prev) = plateau_of(&d);
    let (b_flat, b_last, b_prev) = plateau_of(&b);
    let (d_final, b_final) = (*d.last().unwrap(), *b.last().unwrap());
    let ratio = d_final / b_final;
    outcome(
        d_flat && b_flat && (0.5..=2.0).contains(&ratio),
        format!(
            "final windowed SBE diffusion {d_final:.4} / baseline {b_final:.4} = {ratio:.3}; plateaus diffusion {d_prev:.4}->{d_last:.4}, baseline {b_prev:.4}->{b_last:.4}"
        ),
    )
}

fn random_symmetric(r: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = r.random_range(0.05..5.0);
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    m
}

fn fuzz_beliefs_valid(r: &mut ChaCha8Rng) -> (usize, usize) {
    let mut checked = 0;
    let mut bad = 0;
    for _ in 0..100 {
        let s = r.random_range(2..=16);
        let k = r.random_range(1..=5);
        let iters = r.random_range(1..=200);
        let actions: Vec<usize> = (0..k).map(|_| r.random_range(1..=2)).collect();
        let obs = r.random_range(1..=4);
        let mixture = r.random_bool(0.5);
        let model = random_model(r, s, &actions, obs, mixture);
        let net: CombinationMatrix = if r.random_bool(0.5) { path_network(k) } else { build_uniform(k).unwrap() };
        let supports = PolicySupports::new(&model);
        let streams = Streams::new(r.random());
        let learner = LearnerConfig {
            alpha: 0.1,
            rho: r.random_range(0.0..1.0),
            gamma: 0.9,
            beta: r.random_range(0.5..(2.0 * k as f64)),
        };
        let f = FeatureMap::Identity;
        let mut c = ctx(&model, &supports, &streams, &learner, &f);
        c.exec = Exec::Sequential;
        let mut cs = CentralizedState::initial(&model, &f, &streams);
        let mut ds = DiffusionState::initial(&model, &f, &streams);
        let mut bs = BaselineState::initial(&model, &f, &streams);
        let mut check = |b: &Belief| {
            checked += 1;
            bad += usize::from(!b.is_valid());
        };
        for _ in 0..iters {
            let rc = step_centralized(&mut cs, &c).unwrap();
            let rd = step_diffusion(&mut ds, &c, &net).unwrap();
            let rb = step_baseline(&mut bs, &c, &net).unwrap();
            for b in rc.acting_beliefs.iter().chain(&rd.acting_beliefs).chain(&rb.acting_beliefs) {
                check(b);
            }
            check(&cs.belief.eta);
            check(&ds.shadow.eta);
            check(&bs.central.eta);
            ds.agents.iter().chain(&bs.agents).for_each(|a| check(&a.eta));
        }
    }
    (checked, bad)
}

fn criterion7() -> Outcome {
    let mut r = rng(7);
    let mut failures = Vec::new();

    let (checked, bad) = fuzz_beliefs_valid(&mut r);
    if bad > 0 {
        failures.push(format!("(a) {bad} of {checked} beliefs off the simplex"));
    }

    let mut bh_bad = 0;
    for _ in 0..10_000 {
        let n = r.random_range(2..10);
        let p = belief(random_simplex(&mut r, n));
        let q = belief(random_simplex(&mut r, n));
        let kl = kl_divergence(&p, &q).value;
        let l1: f64 = p.as_slice().iter().zip(q.as_slice()).map(|(a, b)| (a - b).abs()).sum();
        let l2: f64 = p.as_slice().iter().zip(q.as_slice()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if l1 > 2.0 * (1.0 - (-kl).exp()).sqrt() + 1e-12 || l2 > l1 + 1e-15 {
            bh_bad += 1;
        }
    }
    if bh_bad > 0 {
        failures.push(format!("(b) {bh_bad} inequality violations"));
    }

    let mut sk_worst: f64 = 0.0;
    for _ in 0..100 {
        let n = r.random_range(1..=10);
        let c = sinkhorn_balance(&random_symmetric(&mut r, n), DEFAULT_SINKHORN_ITERS).unwrap();
        for i in 0..n {
            let row: f64 = (0..n).map(|j| c.get(i, j)).sum();
            let col: f64 = (0..n).map(|j| c.get(j, i)).sum();
            sk_worst = sk_worst.max((row - 1.0).abs()).max((col - 1.0).abs());
        }
    }
    if sk_worst > 1e-12 {
        failures.push(format!("(c) Sinkhorn error {sk_worst:.3e}"));
    }

    let mut dob_bad = 0;
    for _ in 0..100 {
        let n = r.random_range(1..=8);
        let cols: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                // include exact zeros now and then
                let mut v = random_simplex(&mut r, n);
                if n > 1 && r.random_bool(0.3) {
                    let z = r.random_range(0..n);
                    let moved = v[z];
                    v[z] = 0.0;
                    v[(z + 1) % n] += moved;
                }
                v
            })
            .collect();
        let mut brute: f64 = 0.0;
        for a in 0..n {
            for b in 0..n {
                let tv: f64 = (0..n).map(|s| (cols[a][s] - cols[b][s]).abs()).sum::<f64>() / 2.0;
                brute = brute.max(tv);
            }
        }
        if (dobrushin_coefficient(&cols).unwrap() - brute).abs() > 1e-12 {
            dob_bad += 1;
        }
    }
    if dob_bad > 0 {
        failures.push(format!("(d) {dob_bad} Dobrushin mismatches"));
    }

    let cfg = ExperimentConfig {
        model: ModelSource::BuiltinGrid(small_grid(4)),
        learner: LearnerSpec {
            alpha: 0.1,
            rho: 0.0001,
            beta: 4.0,
        },
        num_iterations: 100,
        seeds: vec![5, 6],
        ..default_experiment_config()
    };
    let dir = tempfile::tempdir().unwrap();
    let seq = LoadedConfig::from_config(ExperimentConfig { exec: Exec::Sequential, ..cfg.clone() }).unwrap();
    let par = LoadedConfig::from_config(cfg).unwrap();
    let a = run_experiment(&par, &dir.path().join("a")).unwrap();
    let b = run_experiment(&par, &dir.path().join("b")).unwrap();
    let c = run_experiment(&seq, &dir.path().join("c")).unwrap();
    let mut replay_bad = 0;
    let mut nonfinite = 0;
    for t in &a.traces {
        let name = format!("{}_seed{}.csv", t.algorithm, t.seed);
        let bytes: Vec<Vec<u8>> = ["a", "b", "c"]
            .iter()
            .map(|d| std::fs::read(dir.path().join(d).join(&name)).unwrap())
            .collect();
        if bytes[0] != bytes[1] || bytes[0] != bytes[2] || bytes[0] != trace_csv(t).into_bytes() {
            replay_bad += 1;
        }
        let text = String::from_utf8(bytes[0].clone()).unwrap();
        for line in text.lines().skip(1) {
            for (i, cell) in line.split(',').enumerate() {
                if i != 1 && !cell.is_empty() && !cell.parse::<f64>().is_ok_and(f64::is_finite) {
                    nonfinite += 1;
                }
            }
        }
    }
    if replay_bad > 0 || a.manifest.files.len() != b.manifest.files.len() || c.traces != a.traces {
        failures.push(format!("(e) {replay_bad} CSVs differ between replays"));
    }
    if nonfinite > 0 {
        failures.push(format!("(a) {nonfinite} non-finite CSV cells"));
    }

    let pass = failures.is_empty();
    let detail = if pass {
        format!(
            "{checked} beliefs valid; 10^4 BH pairs; Sinkhorn err {sk_worst:.1e}; 100 Dobrushin scans; {} CSVs replayed bit-identically",
            a.traces.len()
        )
    } else {
        failures.join("; ")
    };
    outcome(pass, detail)
}

fn report(n: &str, name: &str, o: &Outcome, took: Duration, limit: Duration) -> bool {
    let in_time = took <= limit;
    let pass = o.pass && in_time;
    println!(
        "criterion {n} [{name}]: {} - {} ({:.2}s, limit {}s)",
        if pass { "PASS" } else { "FAIL" },
        o.detail,
        took.as_secs_f64(),
        limit.as_secs()
    );
    pass
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed())
}

fn main() {
    let mut all = true;
    let secs = Duration::from_secs;

    let (o, t) = timed(criterion1);
    all &= report("1", "filtering oracle", &o, t, secs(1));
    let (o, t) = timed(criterion2);
    all &= report("2", "zero-gap configuration", &o, t, secs(10));
    let (o, t) = timed(criterion3);
    all &= report("3", "belief disagreement bound", &o, t, secs(120));
    let ((o4, o6), t) = timed(criteria4and6);
    all &= report("4", "network agreement scaling", &o4, t, secs(300));
    let (o, t5) = timed(criterion5);
    all &= report("5", "diffusion vs baseline SBE", &o, t5, secs(900));
    all &= report("6", "parameter norm bound", &o6, t, secs(300));
    let (o, t) = timed(criterion7);
    all &= report("7", "property suites", &o, t, secs(300));

    if !all {
        std::process::exit(1);
    }
}
