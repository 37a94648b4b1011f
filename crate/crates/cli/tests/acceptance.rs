//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use qic_core::baselines::{self, SearchBudget};
use qic_core::dnn_catalog::Modality;
use qic_core::dyngraph;
use qic_core::harness::{self, Solver};
use qic_core::perf::{self, AppAssignment, Configuration};
use qic_core::qcpo::action_space::{self, ACTION_FEATURES};
use qic_core::qcpo::mlp::Mlp;
use qic_core::qcpo::{cumulative_cost_quantile, policy_distribution, ppo_gradient, QcpoLearner, QcpoParams};
use qic_core::scenario::{presets, NodeKind, ScenarioConfig, SystemState};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within_time(start: Instant, limit: Duration, r: Outcome) -> Outcome {
    let el = start.elapsed();
    match r {
        Ok(d) if el <= limit => Ok(format!("{d}; {:.1}s", el.as_secs_f64())),
        Ok(d) => Err(format!("{d}; took {:.1}s, limit {}s", el.as_secs_f64(), limit.as_secs())),
        Err(d) => Err(format!("{d}; {:.1}s", el.as_secs_f64())),
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

// ---------------------------------------------------------------- 1

/// Energy, compute latency and network latency by direct summation over
/// nodes and DNN sections.
fn oracle(cfg: &ScenarioConfig, a: &AppAssignment, h: usize, st: &SystemState) -> (f64, f64, f64) {
    let cat = cfg.catalog();
    let spec = &cfg.applications[h];
    let mut energy = 0.0;
    for (&n, &c) in &a.compute {
        energy += cfg.nodes[n].energy_per_compute * c;
    }
    for (&n, &b) in &a.blocks {
        energy += cfg.nodes[n].energy_per_block * b as f64;
    }

    let mut comp = 0.0;
    for (&n, role) in &a.roles {
        let mut ops = 0.0;
        for s in &role.stems {
            ops += cat.stems.iter().find(|x| &x.id == s).unwrap().gflops * 1e9;
        }
        for b in &role.branches {
            ops += cat.branches.iter().find(|x| &x.id == b).unwrap().gflops * 1e9;
        }
        if ops > 0.0 {
            comp += ops / a.compute[&n];
        }
    }

    let stem_host = |m: Modality| -> usize {
        let id = &cat.stems.iter().find(|s| s.modality == m).unwrap().id;
        *a.roles.iter().find(|(_, r)| r.stems.contains(id)).unwrap().0
    };
    let branch_host =
        |b: &str| -> usize { *a.roles.iter().find(|(_, r)| r.branches.iter().any(|x| x == b)).unwrap().0 };
    let mut bits: BTreeMap<usize, f64> = BTreeMap::new();
    for (&n, role) in &a.roles {
        if role.data {
            let k = stem_host(cfg.nodes[n].modality.unwrap());
            if cfg.nodes[n].colocated_with.as_deref() != Some(cfg.nodes[k].id.as_str()) {
                *bits.entry(n).or_default() += spec.source_bits[&cfg.nodes[n].id];
            }
        }
        for s in &role.stems {
            let st_spec = cat.stems.iter().find(|x| &x.id == s).unwrap();
            let mut hosts: Vec<usize> = a
                .option
                .branches()
                .filter(|bu| bu.inputs.contains(&st_spec.modality))
                .map(|bu| branch_host(&bu.branch))
                .filter(|&j| j != n)
                .collect();
            hosts.sort();
            hosts.dedup();
            *bits.entry(n).or_default() += st_spec.output_bits as f64 * hosts.len() as f64;
        }
        for b in &role.branches {
            let home = &spec.home_mobile_node;
            if cfg.nodes[n].kind == NodeKind::Mobile && &cfg.nodes[n].id != home {
                *bits.entry(n).or_default() += cat.branches.iter().find(|x| &x.id == b).unwrap().output_bits as f64;
            }
        }
    }
    let mut net = 0.0;
    for (n, d) in bits {
        if d > 0.0 {
            net += d / (a.blocks[&n] as f64 * st.nodes[n].rho);
        }
    }
    (energy, comp, net)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    let mut max_nodes = 0;
    for k in 0..50u64 {
        let cfg = if k % 5 == 0 {
            presets::small_scale(k)
        } else {
            presets::large_scale(1 + (k as usize % 3), k, 20.0)
        };
        max_nodes = max_nodes.max(cfg.nodes.len());
        let t = rng.random_range(0..cfg.horizon().unwrap());
        let st = cfg.snapshot_at(t).map_err(|e| e.to_string())?;
        let sets = action_space::enumerate_all(&cfg, &st).map_err(|e| e.to_string())?;
        for _ in 0..20 {
            let mut conf = Configuration::default();
            for s in &sets {
                let idx = rng.random_range(0..s.candidates.len());
                let mut a = s.assignment(&cfg, idx);
                for (n, c) in a.compute.iter_mut() {
                    *c = rng.random_range(0.01..1.0) * cfg.nodes[*n].compute_capacity;
                }
                for (n, b) in a.blocks.iter_mut() {
                    *b = rng.random_range(1..=2 * st.nodes[*n].blocks.max(1));
                }
                conf.apps.push(a);
            }
            let mut e_oracle = 0.0;
            for (h, a) in conf.apps.iter().enumerate() {
                let (e, c, n) = oracle(&cfg, a, h, &st);
                e_oracle += e;
                let c_perf = perf::compute_latency(a, h, &cfg).map_err(|e| e.to_string())?;
                let n_perf = perf::network_latency(a, h, &cfg, &st).map_err(|e| e.to_string())?;
                for (x, y) in [(c, c_perf), (n, n_perf)] {
                    if !rel_close(x, y, 1e-9) {
                        return Err(format!("latency mismatch {x} vs {y}"));
                    }
                    if x != y {
                        worst = worst.max((x - y).abs() / x.abs().max(y.abs()));
                    }
                }
            }
            let e_perf = perf::energy(&conf, &cfg);
            if !rel_close(e_oracle, e_perf, 1e-9) {
                return Err(format!("energy mismatch {e_oracle} vs {e_perf}"));
            }
            checked += 1;
        }
    }
    within_time(
        start,
        Duration::from_secs(10),
        check(max_nodes <= 20, format!("{checked} configurations, N <= {max_nodes}, worst rel err {worst:.1e}")),
    )
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut ok = true;
    for alpha in [0.4, 0.5] {
        let cfg = presets::small_scale(0).with_targets(Some(0.05), Some(alpha), Some(0.9));
        let mut l = QcpoLearner::new(&cfg, QcpoParams::default()).map_err(|e| e.to_string())?;
        let (mut hits, mut slots) = (0, 0);
        for t in 0..cfg.horizon().unwrap() {
            let st = cfg.snapshot_at(t).map_err(|e| e.to_string())?;
            let sets = action_space::enumerate_all(&cfg, &st).map_err(|e| e.to_string())?;
            let d = l.orchestrate_on(&cfg, &st, &sets).map_err(|e| e.to_string())?;
            let opt = baselines::exhaustive_on(&cfg, &st, &sets, baselines::DEFAULT_CAP).map_err(|e| e.to_string())?;
            if let Some(o) = opt {
                slots += 1;
                if d.score.feasible() && d.score.energy <= 1.1 * o.score.energy {
                    hits += 1;
                }
            }
        }
        let frac = if slots > 0 { hits as f64 / slots as f64 } else { 0.0 };
        ok &= slots > 0 && frac >= 0.9;
        parts.push(format!("alpha={alpha}: {hits}/{slots} slots within 10%"));
    }
    within_time(start, Duration::from_secs(600), check(ok, parts.join(", ")))
}

// ---------------------------------------------------------------- 3

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let (mut all_q, mut all_m) = (Vec::new(), Vec::new());
    let mut parts = Vec::new();
    for seed in 0..5u64 {
        let cfg = presets::small_scale(seed);
        let mut l = QcpoLearner::new(&cfg, QcpoParams { seed, ..Default::default() }).map_err(|e| e.to_string())?;
        let (mut q, mut m) = (Vec::new(), Vec::new());
        for t in 0..cfg.horizon().unwrap() {
            let st = cfg.snapshot_at(t).map_err(|e| e.to_string())?;
            let sets = action_space::enumerate_all(&cfg, &st).map_err(|e| e.to_string())?;
            q.push(l.orchestrate_on(&cfg, &st, &sets).map_err(|e| e.to_string())?.score.energy);
            let r = baselines::mctp_on(&cfg, &st, &sets, SearchBudget::iterations(10_000), seed * 1000 + t as u64)
                .map_err(|e| e.to_string())?;
            m.push(r.solution.score.energy);
        }
        let (mq, mm) = (median(q.clone()), median(m.clone()));
        ok &= mq <= mm;
        parts.push(format!("seed {seed}: {mq:.1} vs {mm:.1} J"));
        all_q.extend(q);
        all_m.extend(m);
    }
    let (mq, mm) = (median(all_q), median(all_m));
    ok &= mq < mm;
    let margin = 100.0 * (mm - mq) / mm;
    within_time(
        start,
        Duration::from_secs(900),
        check(ok, format!("median QIC {mq:.1} J vs MCTP {mm:.1} J, margin {margin:.1}% ({})", parts.join(", "))),
    )
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut ok = true;
    let mut certified_runs = 0;
    for (seed, alpha) in [(0u64, 0.4), (0, 0.5), (1, 0.5)] {
        let cfg = presets::small_scale(seed).with_targets(Some(0.05), Some(alpha), Some(0.9));
        let mut l = QcpoLearner::new(&cfg, QcpoParams { seed, ..Default::default() }).map_err(|e| e.to_string())?;
        let mut certified = true;
        let mut realized: Vec<Vec<f64>> = vec![Vec::new(); cfg.applications.len()];
        let mut records = Vec::new();
        for t in 0..cfg.horizon().unwrap() {
            let st = cfg.snapshot_at(t).map_err(|e| e.to_string())?;
            let sets = action_space::enumerate_all(&cfg, &st).map_err(|e| e.to_string())?;
            let d = l.orchestrate_on(&cfg, &st, &sets).map_err(|e| e.to_string())?;
            let opt = baselines::exhaustive_on(&cfg, &st, &sets, baselines::DEFAULT_CAP).map_err(|e| e.to_string())?;
            certified &= opt.is_some();
            for (h, a) in d.configuration.apps.iter().enumerate() {
                let flow = a.flow(h, &cfg).map_err(|e| e.to_string())?;
                realized[h].extend(perf::latency_samples(&flow, a, &st));
            }
            records.extend(
                harness::records_for(&cfg, &st, &d.configuration, "accuracy", alpha, Solver::Qic)
                    .map_err(|e| e.to_string())?,
            );
        }
        if !certified {
            parts.push(format!("seed {seed} alpha {alpha}: not certified, skipped"));
            continue;
        }
        certified_runs += 1;
        let churn = harness::summarize(&records).map_err(|e| e.to_string())?[0].churn;
        let mut p90 = Vec::new();
        for (h, mut s) in realized.into_iter().enumerate() {
            s.sort_by(f64::total_cmp);
            let q = perf::empirical_quantile(&s, 0.9).map_err(|e| e.to_string())?;
            ok &= q <= cfg.applications[h].latency_target;
            p90.push(format!("{:.1}", q * 1e3));
        }
        ok &= churn == 0.0;
        parts.push(format!("seed {seed} alpha {alpha}: p90 [{}] ms, churn {churn}", p90.join(", ")));
    }
    ok &= certified_runs > 0;
    within_time(start, Duration::from_secs(300), check(ok, parts.join("; ")))
}

// ---------------------------------------------------------------- 5

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let base = presets::small_scale(0);
    let accuracy = [0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6];
    let latency = [0.03, 0.04, 0.05, 0.07, 0.1];
    let energy = |cfg: &ScenarioConfig, t: usize| -> Result<f64, String> {
        Ok(baselines::exhaustive_optimum(cfg, t, baselines::DEFAULT_CAP)
            .map_err(|e| e.to_string())?
            .map_or(f64::INFINITY, |s| s.score.energy))
    };
    let mut checked = 0;
    for t in (0..base.horizon().unwrap()).step_by(10) {
        let mut prev = f64::NEG_INFINITY;
        for a in accuracy {
            let e = energy(&base.with_targets(Some(0.05), Some(a), Some(0.9)), t)?;
            if e < prev {
                return Err(format!("t={t}: energy drops from {prev} to {e} at accuracy {a}"));
            }
            prev = e;
            checked += 1;
        }
        let mut prev = f64::INFINITY;
        for l in latency {
            let e = energy(&base.with_targets(Some(l), Some(0.5), Some(0.9)), t)?;
            if e > prev {
                return Err(format!("t={t}: energy rises from {prev} to {e} at latency {l}"));
            }
            prev = e;
            checked += 1;
        }
    }
    within_time(start, Duration::from_secs(600), Ok(format!("{checked} optimum evaluations monotone")))
}

// ---------------------------------------------------------------- 6

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let d = Exp::new(1.0).unwrap();
    let s: Vec<f64> = (0..1000).map(|_| d.sample(&mut rng)).collect();
    let q = cumulative_cost_quantile(&s, 0.9, 0.8).map_err(|e| e.to_string())?;
    let exact = -(0.1f64).ln();
    let rel = (q - exact).abs() / exact;

    let sorted: Vec<f64> = (1..=10).map(f64::from).collect();
    let fixtures = [(0.1, 1.0), (0.15, 2.0), (0.5, 5.0), (0.55, 6.0), (0.9, 9.0), (0.95, 10.0), (1.0, 10.0)];
    let mut exact_ok = true;
    for (w, want) in fixtures {
        exact_ok &= perf::empirical_quantile(&sorted, w).map_err(|e| e.to_string())? == want;
    }
    let mut thirty: Vec<f64> = (1..=10).flat_map(|x| [x as f64; 3]).collect();
    thirty.sort_by(f64::total_cmp);
    exact_ok &= cumulative_cost_quantile(&thirty, 0.5, 0.8).map_err(|e| e.to_string())? == 5.0;
    exact_ok &= cumulative_cost_quantile(&thirty, 0.8, 0.8).map_err(|e| e.to_string())? == 8.0;
    check(
        rel < 0.05 && exact_ok,
        format!("Weibull tail {q:.4} vs {exact:.4} (rel {rel:.4}), order statistics exact: {exact_ok}"),
    )
}

// ---------------------------------------------------------------- 7

fn grad_rel_err(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < 1e-7 {
        (analytic - numeric).abs()
    } else {
        (analytic - numeric).abs() / scale
    }
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    for _ in 0..100 {
        let d_in = rng.random_range(3..10);
        let hidden = rng.random_range(4..16);
        let x: Vec<f64> = (0..d_in).map(|_| rng.random_range(-1.0..1.0)).collect();

        // policy: clipped surrogate through the network output
        let mut pol = Mlp::new(&[d_in, hidden, hidden, ACTION_FEATURES], &mut rng);
        let n_act = rng.random_range(2..7);
        let feats: Vec<[f64; ACTION_FEATURES]> =
            (0..n_act).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect();
        let action = rng.random_range(0..n_act);
        let adv = rng.random_range(-2.0..2.0);
        let w0 = pol.forward(&x).unwrap();
        let old_logp = policy_distribution(&w0, &feats)[action].ln() + rng.random_range(-0.05..0.05);
        let surrogate = |m: &Mlp| ppo_gradient(&m.forward(&x).unwrap(), &feats, action, old_logp, adv, 0.2).0;
        let cache = pol.forward_cached(&x).unwrap();
        let (_, gw) = ppo_gradient(cache.output(), &feats, action, old_logp, adv, 0.2);
        let analytic = pol.backward(&cache, &gw).unwrap();
        let p0 = pol.params();
        for _ in 0..10 {
            let i = rng.random_range(0..p0.len());
            let mut p = p0.clone();
            p[i] = p0[i] + h;
            pol.set_params(&p).unwrap();
            let up = surrogate(&pol);
            p[i] = p0[i] - h;
            pol.set_params(&p).unwrap();
            let down = surrogate(&pol);
            pol.set_params(&p0).unwrap();
            worst = worst.max(grad_rel_err(analytic[i], (up - down) / (2.0 * h)));
            compared += 1;
        }

        // value: the scalar output itself
        let mut val = Mlp::new(&[d_in, hidden, hidden, 1], &mut rng);
        let cache = val.forward_cached(&x).unwrap();
        let analytic = val.backward(&cache, &[1.0]).unwrap();
        let p0 = val.params();
        for _ in 0..10 {
            let i = rng.random_range(0..p0.len());
            let mut p = p0.clone();
            p[i] = p0[i] + h;
            val.set_params(&p).unwrap();
            let up = val.forward(&x).unwrap()[0];
            p[i] = p0[i] - h;
            val.set_params(&p).unwrap();
            let down = val.forward(&x).unwrap()[0];
            val.set_params(&p0).unwrap();
            worst = worst.max(grad_rel_err(analytic[i], (up - down) / (2.0 * h)));
            compared += 1;
        }
    }
    check(worst <= 1e-4, format!("{compared} partial derivatives, worst rel err {worst:.2e}"))
}

// ---------------------------------------------------------------- 8

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    let mut max_n = 0;
    for k in 0..25u64 {
        let n_mobile = rng.random_range(1..=16);
        let cfg = presets::large_scale(n_mobile, k, 10.0);
        let n = cfg.nodes.len();
        max_n = max_n.max(n);
        let st = cfg.snapshot_at(rng.random_range(0..10)).map_err(|e| e.to_string())?;
        let mut g = dyngraph::build_initial(&cfg, &st);
        let sets = action_space::enumerate_all(&cfg, &st).map_err(|e| e.to_string())?;
        for (h, s) in sets.iter().enumerate() {
            let idx = rng.random_range(0..s.candidates.len());
            g = dyngraph::apply_action(&g, h, &s.assignment(&cfg, idx), &cfg).map_err(|e| e.to_string())?;
        }
        let v = g.n_nodes + 2;
        if g.n_nodes != n || g.edges().iter().any(|e| e.from >= v || e.to >= v) {
            return Err(format!("vertex set is not N+2 for N={n}"));
        }
        if g.edges().len() > v * v {
            return Err(format!("{} edges exceed (N+2)^2 for N={n}", g.edges().len()));
        }
        let f1: f64 = g.edges().iter().map(|e| e.attrs[0]).sum();
        let total = g.energy();
        if !rel_close(f1, total, 1e-12) {
            return Err(format!("f1 sums to {f1}, energy is {total}"));
        }
        if f1 != total {
            worst = worst.max((f1 - total).abs() / total);
        }
    }
    Ok(format!("25 scenarios up to N={max_n}, f1 attribution worst rel diff {worst:.1e}"))
}

// ---------------------------------------------------------------- 9

fn run_small(out: &Path) -> Result<(), String> {
    let st = Command::new(env!("CARGO_BIN_EXE_qic"))
        .args(["run-small", "--seed", "7", "--out"])
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    if !st.status.success() {
        return Err(String::from_utf8_lossy(&st.stderr).into_owned());
    }
    Ok(())
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_small(&a)?;
    run_small(&b)?;
    let list = |p: &Path| -> Vec<String> {
        let mut v: Vec<String> =
            std::fs::read_dir(p).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
        v.sort();
        v
    };
    let files = list(&a);
    if files != list(&b) {
        return Err("different file sets".into());
    }
    for f in &files {
        if std::fs::read(a.join(f)).unwrap() != std::fs::read(b.join(f)).unwrap() {
            return Err(format!("{f} differs"));
        }
    }
    within_time(start, Duration::from_secs(600), Ok(format!("{} CSV files byte-identical", files.len())))
}

// ---------------------------------------------------------------- 10

const STEMS: [(&str, [u64; 2], [u64; 3], f64); 4] = [
    ("camera_left", [672, 376], [64, 168, 94], 3.552),
    ("camera_right", [672, 376], [64, 168, 94], 3.552),
    ("radar", [1152, 1152], [64, 288, 288], 31.00),
    ("lidar", [672, 376], [64, 168, 94], 5.900),
];

const BRANCHES: [(&str, f64, f64); 18] = [
    ("CameraBranch18", 40.20, 21.76),
    ("RadarBranch18", 40.20, 115.86),
    ("LidarBranch18", 40.20, 23.00),
    ("DualCameraFusion18", 40.28, 270.8),
    ("RadarLidarFusion18", 40.28, 586.6),
    ("CameraLidarFusion18", 40.31, 286.6),
    ("CameraBranch50", 165.06, 85.14),
    ("RadarBranch50", 165.06, 352.5),
    ("LidarBranch50", 165.06, 89.10),
    ("DualCameraFusion50", 165.06, 982.6),
    ("RadarLidarFusion50", 165.06, 2202.0),
    ("CameraLidarFusion50", 165.06, 1084.0),
    ("CameraBranch101", 184.05, 184.1),
    ("RadarBranch101", 184.05, 573.4),
    ("LidarBranch101", 184.05, 132.4),
    ("DualCameraFusion101", 184.05, 1496.0),
    ("RadarLidarFusion101", 184.05, 3434.0),
    ("CameraLidarFusion101", 184.05, 1562.0),
];

fn criterion_10() -> Outcome {
    let out = Command::new(env!("CARGO_BIN_EXE_qic")).arg("dump-catalog").output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).into_owned());
    }
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    let branches = v["branches"].as_array().ok_or("no branches")?;
    if branches.len() != 18 {
        return Err(format!("{} branches", branches.len()));
    }
    for (name, params, gflops) in BRANCHES {
        let b = branches.iter().find(|b| b["id"] == name).ok_or(format!("missing {name}"))?;
        if b["params_millions"].as_f64() != Some(params) || b["gflops"].as_f64() != Some(gflops) {
            return Err(format!("{name}: {} M, {} G", b["params_millions"], b["gflops"]));
        }
    }
    let stems = v["stems"].as_array().ok_or("no stems")?;
    for (m, input, output, gflops) in STEMS {
        let s = stems.iter().find(|s| s["modality"] == m).ok_or(format!("missing stem {m}"))?;
        let dims = |k: &str| -> Vec<u64> { s[k].as_array().unwrap().iter().map(|x| x.as_u64().unwrap()).collect() };
        if dims("input_dims") != input || dims("output_dims") != output || s["gflops"].as_f64() != Some(gflops) {
            return Err(format!("stem {m} differs"));
        }
    }
    Ok("18 branches and 4 stems match the reference values exactly".into())
}

fn main() {
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "formula oracle equivalence", criterion_1),
        (2, "optimality match (small scale)", criterion_2),
        (3, "baseline dominance over MCTP", criterion_3),
        (4, "quantile constraint satisfaction", criterion_4),
        (5, "monotonicity of the optimum", criterion_5),
        (6, "quantile estimator accuracy", criterion_6),
        (7, "gradient checks", criterion_7),
        (8, "graph bounds and f1 attribution", criterion_8),
        (9, "determinism of run-small", criterion_9),
        (10, "catalog fidelity", criterion_10),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (id, name, f) in criteria {
        if let Some(flt) = &filter {
            if !name.contains(flt.as_str()) && flt != &id.to_string() {
                continue;
            }
        }
        let r = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match r {
            Ok(d) => println!("criterion {id:>2} PASS  {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {id:>2} FAIL  {name}: {d}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
