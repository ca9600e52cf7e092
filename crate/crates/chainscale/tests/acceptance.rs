//! The ten acceptance checks. Each prints one PASS/FAIL line; the test
//! fails at the end if any check failed.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::path::PathBuf;
use std::time::Instant;

use chainscale::config::{load_with_overrides, ScenarioConfig, Strategy};
use chainscale::report::MetricsReport;
use chainscale::sim::run_scenario;
use chainscale_core::catalog::{Catalog, Thresholds, VnfRole, VnfType};
use chainscale_core::forecast::{predict_next, SampleSeries};
use chainscale_core::planner::{
    place_stages, plan_dp, CapacityView, DpInputs, PathTable, PlanError, ProvisionSnapshot, WorkloadMatrix,
};
use chainscale_core::routing::{FlowTag, HopCode, TAG_INDEX_LIMIT};
use chainscale_core::topology::{DatacenterId, DelayMatrix};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::{brute_place, collapse_distinct, hops_delay, min_delay_simple, LossyNet};

// Pinned tolerances.
const DELAY_EPS_MS: f64 = 1e-9;
const SIM_PARITY: f64 = 0.15;
const HYBRID_REDUCTION: f64 = 0.20;
const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

type Outcome = Result<String, String>;
type Check = (&'static str, fn() -> Outcome);

fn scenario(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "scenarios", name].iter().collect();
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn run(text: &str, edits: &[(&str, toml::Value)], seed: u64) -> MetricsReport {
    let edits: Vec<(String, toml::Value)> = edits.iter().map(|(p, v)| (p.to_string(), v.clone())).collect();
    let cfg: ScenarioConfig = load_with_overrides(text, &edits).expect("scenario loads");
    cfg.validate().expect("scenario validates");
    run_scenario(&cfg, seed).expect("scenario runs")
}

fn strategy(s: Strategy) -> (&'static str, toml::Value) {
    ("strategy", toml::Value::String(s.name().into()))
}

fn catalog(m: usize) -> Catalog {
    let mut types: Vec<VnfType> =
        Catalog::reference().types().iter().filter(|t| t.role.stage().is_none_or(|s| s as usize <= m)).cloned().collect();
    if m == 4 {
        types.push(VnfType {
            name: "nat".into(),
            role: VnfRole::Stage(4),
            capacity: 25000.0,
            thresholds: Thresholds { cpu_pct: 90.0, mem_pct: 50.0, input_pps: 25000.0 },
            boot_delay_ms: 20_000,
        });
    }
    Catalog::new(types).unwrap()
}

fn placement_optimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let k = rng.random_range(2..=5);
        let m = rng.random_range(1..=4);
        let mut dcs: Vec<usize> = (0..5).collect();
        dcs.shuffle(&mut rng);
        let path = &dcs[..k];
        let unit: Vec<f64> = (0..m).map(|_| rng.random_range(1..=4) as f64 * 10.0).collect();
        let avail: Vec<Vec<f64>> =
            (0..5).map(|_| unit.iter().map(|u| rng.random_range(0..5) as f64 * u / 2.0).collect()).collect();
        let demand = rng.random_range(0..12) as f64 * 7.0;
        let mut view = CapacityView::new(5, unit.clone());
        for (d, row) in avail.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                view.set(d.into(), j + 1, c);
            }
        }
        let ids: Vec<DatacenterId> = path.iter().map(|&i| i.into()).collect();
        let got = place_stages(&ids, &view, demand);
        let ok = match (brute_place(path, &avail, &unit, demand), got) {
            (None, Err(PlanError::Infeasible { .. })) => true,
            (Some(best), Ok((_, cost))) => best == cost,
            _ => false,
        };
        mismatches += usize::from(!ok);
    }
    if mismatches == 0 {
        Ok("1000/1000 cases match enumeration".into())
    } else {
        Err(format!("{mismatches} of 1000 cases differ from enumeration"))
    }
}

fn loopless_and_bounded() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut violations, mut paths) = (0, 0);
    for _ in 0..1000 {
        let n = rng.random_range(2..=8);
        let m = rng.random_range(1..=3);
        let mut d = vec![vec![0.0; n]; n];
        #[allow(clippy::needless_range_loop)]
        for a in 0..n {
            for b in (a + 1)..n {
                let v = rng.random_range(1..60) as f64;
                d[a][b] = v;
                d[b][a] = v;
            }
        }
        let cells = (0..n * n).map(|_| if rng.random_bool(0.6) { 0.0 } else { rng.random_range(1..40_000) as f64 }).collect();
        let threshold = rng.random_range(20..150) as f64;
        let mut prov = ProvisionSnapshot::new();
        for dc in 0..n {
            for j in 1..=m {
                prov.insert((dc.into(), VnfRole::Stage(j as u8)), rng.random_range(0..4));
            }
        }
        let cat = catalog(m);
        let delays = DelayMatrix::from_rows(&d).unwrap();
        let load = WorkloadMatrix::from_cells(n, cells);
        let current = PathTable::all_at_entry(n, m);
        let plan = plan_dp(&DpInputs {
            load: &load,
            delays: &delays,
            provision: &prov,
            current_paths: &current,
            catalog: &cat,
            threshold_ms: threshold,
        });
        for (pair, path) in plan.paths.iter() {
            paths += 1;
            let hops: Vec<usize> = path.hops().iter().map(|h| h.index()).collect();
            let delay = hops_delay(&hops, &d);
            let bounded = if plan.fallbacks.contains(pair) {
                (delay - min_delay_simple(pair.entry.index(), pair.exit.index(), &d, m + 1)).abs() < DELAY_EPS_MS
            } else {
                pair.is_local() || delay <= threshold + DELAY_EPS_MS
            };
            violations += usize::from(!collapse_distinct(&hops) || !bounded);
        }
    }
    if violations == 0 {
        Ok(format!("{paths} paths, 0 violations"))
    } else {
        Err(format!("{violations} of {paths} paths violate the invariants"))
    }
}

fn consistency() -> Outcome {
    let text = scenario("consistency.toml");
    let on = run(&text, &[("tagging", true.into())], 1);
    let off = run(&text, &[("tagging", false.into())], 1);
    let (a, b) = (on.summary.flows_full_loss, off.summary.flows_full_loss);
    let detail = format!("full-loss flows: tagging on {a}/{}, off {b}/{}", on.summary.flows, off.summary.flows);
    if a == 0 && b >= 1 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn high_delay_avoidance() -> Outcome {
    let text = scenario("high_delay.toml");
    let cfg = ScenarioConfig::from_toml(&text).unwrap();
    let report = run(&text, &[], cfg.seed);
    let g1 = [cfg.dc_index("g1a").unwrap(), cfg.dc_index("g1b").unwrap()];
    let g3 = [cfg.dc_index("g3a").unwrap(), cfg.dc_index("g3b").unwrap()];
    let crosses = |p: &Vec<usize>| {
        p.windows(2).any(|w| (g1.contains(&w[0]) && g3.contains(&w[1])) || (g3.contains(&w[0]) && g1.contains(&w[1])))
    };
    let change_ms = cfg.delay_changes[0].at_s * 1000;
    let interval_ms = cfg.scaling.interval_s * 1000;
    let deadline = change_ms.div_ceil(interval_ms) + 2;
    let counts: Vec<(u64, usize)> = report.decisions().map(|d| (d.interval, d.paths.iter().filter(|p| crosses(p)).count())).collect();
    let before = counts.iter().filter(|(i, _)| *i * interval_ms <= change_ms).map(|c| c.1).max().unwrap_or(0);
    let late: Vec<_> = counts.iter().filter(|(i, _)| *i >= deadline).collect();
    let detail = format!("group 1-3 paths before change {before}, decisions from interval {deadline} {:?}", late.iter().map(|c| c.1).collect::<Vec<_>>());
    if before > 0 && !late.is_empty() && late.iter().all(|c| c.1 == 0) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn by_strategy(file: &str, seed: u64) -> [(usize, f64); 3] {
    let text = scenario(file);
    [Strategy::Hybrid, Strategy::Reactive, Strategy::Proactive].map(|s| {
        let r = run(&text, &[strategy(s)], seed);
        (r.summary.instances_created, r.summary.dp_loss_mean_pct)
    })
}

fn hybrid_dominance_async() -> Outcome {
    let mut lines = Vec::new();
    let (mut ordered, mut reduced) = (true, 0);
    for seed in SEEDS {
        let [(hc, hl), (rc, rl), (pc, _)] = by_strategy("async.toml", seed);
        ordered &= hc <= rc && hc <= pc && hl < rl;
        reduced += usize::from((hc as f64) <= (1.0 - HYBRID_REDUCTION) * rc as f64);
        lines.push(format!("s{seed}: h {hc}/{hl:.2}% r {rc}/{rl:.2}% p {pc}"));
    }
    let detail = format!("{}; >=20% fewer than reactive on {reduced}/5", lines.join(", "));
    if ordered && reduced >= 3 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn simultaneous_parity() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for seed in SEEDS {
        let [(hc, hl), (rc, rl), (pc, pl)] = by_strategy("simultaneous.toml", seed);
        let (lo, hi) = ([hc, rc, pc].into_iter().min().unwrap(), [hc, rc, pc].into_iter().max().unwrap());
        ok &= (hi - lo) as f64 <= SIM_PARITY * hi as f64 && hl <= rl && hl <= pl;
        lines.push(format!("s{seed}: h {hc}/{hl:.2}% r {rc}/{rl:.2}% p {pc}/{pl:.2}%"));
    }
    let detail = lines.join(", ");
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn protocol_safety() -> Outcome {
    let mut problems = Vec::new();
    let mut checks = 0;
    for (seed, loss) in [(11, 0.0), (12, 0.1), (13, 0.2), (14, 0.3)] {
        let mut net = LossyNet::new(4, loss, 0.1, seed);
        let stalled = (0..200).filter(|_| !net.round(600_000)).count();
        if stalled > 0 || net.global.rounds_completed() != 200 {
            problems.push(format!("loss {loss}: {stalled} rounds stalled"));
        }
        if net.max_skew > 1 {
            problems.push(format!("loss {loss}: skew {}", net.max_skew));
        }
        if net.duplicate_violations > 0 {
            problems.push(format!("loss {loss}: {} duplicate deliveries moved state", net.duplicate_violations));
        }
        checks += net.duplicate_checks;
    }
    if problems.is_empty() {
        Ok(format!("800 rounds at loss up to 30%, {checks} duplicate deliveries, skew <= 1"))
    } else {
        Err(problems.join("; "))
    }
}

fn codec_exactness() -> Outcome {
    let mut bad = 0;
    for e in 0..TAG_INDEX_LIMIT {
        for x in 0..TAG_INDEX_LIMIT {
            for t in 0..4u8 {
                let ok = FlowTag::encode(DatacenterId(e), DatacenterId(x), u64::from(t))
                    .map(|tag| tag.decode() == (DatacenterId(e), DatacenterId(x), t))
                    .unwrap_or(false);
                bad += usize::from(!ok);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut code = HopCode(rng.random());
    for _ in 0..100_000 {
        let lane = rng.random_range(1..=4u8);
        let value: u8 = rng.random();
        let next = code.encode(lane, value).unwrap();
        let shift = 8 * (4 - u32::from(lane));
        let expect = (code.0 & !(0xff << shift)) | u32::from(value) << shift;
        bad += usize::from(next.0 != expect || next.extract(lane).unwrap() != value);
        code = next;
    }
    if bad == 0 {
        Ok("16384 tags and 100000 lane writes round-trip".into())
    } else {
        Err(format!("{bad} codec mismatches"))
    }
}

fn forecast_degeneracy() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut bad = 0;
    for _ in 0..10_000 {
        let c = if rng.random_bool(0.1) { 0.0 } else { rng.random_range(0.0..1e6) };
        let s = SampleSeries::from_values(10, &vec![c; rng.random_range(1..=10)]);
        bad += usize::from(predict_next(&s, c).map(|p| p.0 != c).unwrap_or(true));
    }
    for _ in 0..100_000 {
        let len = rng.random_range(1..=10);
        let values: Vec<f64> = (0..len)
            .map(|_| match rng.random_range(0..3) {
                0 => 0.0,
                1 => rng.random_range(0.0..1e5),
                _ => rng.random_range(-10.0..10.0),
            })
            .collect();
        let u = if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..1e5) };
        let p = predict_next(&SampleSeries::from_values(10, &values), u).map(|p| p.0).unwrap_or(f64::NAN);
        bad += usize::from(!(p >= 0.0 && p.is_finite()));
    }
    if bad == 0 {
        Ok("constant series fixed, 100000 predictions non-negative".into())
    } else {
        Err(format!("{bad} forecast violations"))
    }
}

fn determinism() -> Outcome {
    let mut diverged = Vec::new();
    for file in ["consistency.toml", "high_delay.toml", "async.toml", "simultaneous.toml"] {
        let text = scenario(file);
        let a = run(&text, &[], 7);
        let b = run(&text, &[], 7);
        if a.summary_json() != b.summary_json() || a.records_jsonl() != b.records_jsonl() {
            diverged.push(file);
        }
    }
    if diverged.is_empty() {
        Ok("4 scenarios byte-identical across reruns".into())
    } else {
        Err(format!("reports differ for {diverged:?}"))
    }
}

#[test]
fn acceptance() {
    let checks: [Check; 10] = [
        ("1 stage placement optimality", placement_optimality),
        ("2 looplessness and delay bound", loopless_and_bounded),
        ("3 consistency under skew", consistency),
        ("4 high-delay link avoidance", high_delay_avoidance),
        ("5 hybrid dominance, async start", hybrid_dominance_async),
        ("6 simultaneous start parity", simultaneous_parity),
        ("7 protocol safety and idempotency", protocol_safety),
        ("8 codec exactness", codec_exactness),
        ("9 forecast degeneracy", forecast_degeneracy),
        ("10 determinism", determinism),
    ];
    let results: Vec<(&str, Outcome, f64)> = std::thread::scope(|s| {
        let handles: Vec<_> = checks
            .iter()
            .map(|&(name, f)| {
                s.spawn(move || {
                    let t = Instant::now();
                    let r = f();
                    (name, r, t.elapsed().as_secs_f64())
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut failed = Vec::new();
    println!();
    for (name, r, secs) in &results {
        match r {
            Ok(d) => println!("PASS {name} ({secs:.1}s): {d}"),
            Err(d) => {
                println!("FAIL {name} ({secs:.1}s): {d}");
                failed.push(*name);
            }
        }
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}
