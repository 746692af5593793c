//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints exactly one PASS or FAIL line; the process exits
//! non-zero if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use clap::Parser;
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};

use common::{max_gradient_error, random_batch, s2_space, tiny_space, toy_pipeline, FD_FLOOR, FD_STEPS};
use progressive_nas::archspace::{
    arch_at, arch_index, cardinality, discretize, enumerate_space, reduce_topk, sample_arch, ArchParams,
    CellTopology, OperationCatalog, SearchSpace,
};
use progressive_nas::cli::{self, Cli};
use progressive_nas::driver::{run_no_inherit, run_pevonas, run_progressive, run_random_reduction, NoObserver, ScheduleConfig};
use progressive_nas::evolution::{run_ea, BoxError, EvoConfig};
use progressive_nas::oracle::{
    build_truth_synthetic, correlation_study, region_quality, LandscapeModel, SyntheticLandscape,
};
use progressive_nas::rng::seeded;
use progressive_nas::supernet::{
    evaluate_fitness, inherit_weights, softmax_weights, train_supernet, InheritMode, Supernet, TrainConfig,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

/// 1: analytic gradients of the default 4-node supernet against central
/// differences, 20 seeded instances.
fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let mut net = Supernet::new(s2_space(), 8, 4, seed).unwrap();
        let (x, y) = random_batch(16, 8, 4, 1_000 + seed);
        worst = worst.max(max_gradient_error(&mut net, &x, &y, 2_000 + seed, &FD_STEPS, FD_FLOOR));
    }
    let t = start.elapsed();
    outcome(worst < 1e-4 && within(t, 30), format!("max relative error {worst:.2e} (< 1e-4), {t:.1?} (< 30s)"))
}

/// 2: the EA finds the optimum of an exact 27-arch table.
fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let space = tiny_space();
    let mut hits = 0;
    for seed in 0..50u64 {
        let table = build_truth_synthetic(&space, &SyntheticLandscape::random(3, 3, 1.0, 0.5, 0.0, seed)).unwrap();
        let (_, optimum) = table.best();
        let eval = |a: &progressive_nas::archspace::DiscreteArch| -> Result<f64, BoxError> { Ok(table.get(a).unwrap()) };
        let cfg = EvoConfig { seed, ..EvoConfig::default() };
        let (best, _) = run_ea(&space, &eval, &cfg).unwrap();
        if best.fitness == Some(optimum) {
            hits += 1;
        }
    }
    let t = start.elapsed();
    outcome(hits * 100 >= 95 * 50 && within(t, 60), format!("optimum found in {hits}/50 runs (>= 95%), {t:.1?} (< 60s)"))
}

/// 3: per-generation best fitness never decreases.
fn elitism_monotonicity() -> Outcome {
    let space = s2_space();
    let mut violations = 0;
    let mut generations = 0;
    for seed in 0..24u64 {
        let land = SyntheticLandscape::random(6, 5, 1.0, 0.5, 0.1, seed);
        let eval = |a: &progressive_nas::archspace::DiscreteArch| -> Result<f64, BoxError> { Ok(land.noisy_fitness(a, seed)) };
        let cfg = EvoConfig { seed, convergence_count: 15, ..EvoConfig::default() };
        let (_, log) = run_ea(&space, &eval, &cfg).unwrap();
        generations += log.records.len();
        violations += log.records.windows(2).filter(|w| w[1].best_fitness < w[0].best_fitness).count();
    }
    outcome(violations == 0, format!("{violations} decreases over 24 runs / {generations} generations"))
}

/// 4: inherited supernets score every retained architecture identically.
fn inheritance_preservation() -> Outcome {
    let (train, val) = common::toy_task();
    let space = s2_space();
    let mut mismatches = 0;
    let mut checked = 0;
    for seed in 0..3u64 {
        let mut parent = Supernet::new(space.clone(), 8, 4, seed).unwrap();
        train_supernet(&mut parent, &train, &TrainConfig { epochs: 3, seed, ..TrainConfig::default() }).unwrap();
        let alpha = sample_arch(&space, &mut seeded(50 + seed));
        let reduced = reduce_topk(&alpha, &space, 2).unwrap();
        let child = inherit_weights(&parent, &reduced, InheritMode::Inherit, 99).unwrap();
        for arch in enumerate_space(&reduced, 1_000).unwrap() {
            checked += 1;
            let same_fitness = evaluate_fitness(&parent, &arch, &val).unwrap() == evaluate_fitness(&child, &arch, &val).unwrap();
            let same_logits = parent.forward_discrete(&arch, val.features()).unwrap().logits()
                == child.forward_discrete(&arch, val.features()).unwrap().logits();
            if !(same_fitness && same_logits) {
                mismatches += 1;
            }
        }
    }
    outcome(mismatches == 0 && checked == 192, format!("{mismatches} mismatches over {checked} archs (3 x 64-arch reduced spaces)"))
}

/// 5: on synthetic landscapes, progressive reduction lands in better
/// regions than random reduction.
fn progressive_beats_random() -> Outcome {
    let start = Instant::now();
    let space = s2_space();
    let mut wins = 0;
    let (mut sum_p, mut sum_r) = (0.0, 0.0);
    for seed in 0..20u64 {
        let land = SyntheticLandscape::random(6, 5, 1.0, 0.5, 0.05, seed);
        let truth = build_truth_synthetic(&space, &land).unwrap();
        let model = LandscapeModel { landscape: &land };
        let cfg = ScheduleConfig::new(vec![5, 3, 2], seed);
        let p = run_progressive(&model, &space, &cfg, &mut NoObserver).unwrap();
        let r = run_random_reduction(&model, &space, &cfg, &mut NoObserver).unwrap();
        let qp = region_quality(p.final_space(), &truth).unwrap().mean_quantile;
        let qr = region_quality(r.final_space(), &truth).unwrap().mean_quantile;
        sum_p += qp;
        sum_r += qr;
        if qp > qr {
            wins += 1;
        }
    }
    let t = start.elapsed();
    outcome(
        wins * 100 >= 80 * 20 && within(t, 300),
        format!(
            "progressive wins {wins}/20 pairs (>= 80%); mean quantile {:.3} vs {:.3}; {t:.1?} (< 300s)",
            sum_p / 20.0,
            sum_r / 20.0
        ),
    )
}

/// 6: supernet-truth rank correlation at the final stage is at least that
/// at the full stage, on the trained toy pipeline.
fn correlation_trend(toy: &common::ToyPipeline) -> Outcome {
    let start = Instant::now();
    let (mut full, mut last) = (Vec::new(), Vec::new());
    for seed in 0..5u64 {
        let cfg = ScheduleConfig { train: toy.train_config.clone(), ..ScheduleConfig::new(vec![3, 2], seed) };
        let (_, report) = correlation_study(&toy.train, &toy.val, &toy.space, &cfg, &toy.truth).unwrap();
        full.push(report.stages[0].tau);
        last.push(report.stages[1].tau);
    }
    let t = start.elapsed();
    let defined = |v: &[Option<f64>]| v.iter().flatten().copied().collect::<Vec<f64>>();
    let (f, l) = (defined(&full), defined(&last));
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let complete = f.len() == 5 && l.len() == 5;
    let (mf, ml) = (mean(&f), mean(&l));
    outcome(
        complete && ml >= mf && within(t, 900),
        format!("mean tau final {ml:.4} vs full {mf:.4} (final >= full); per seed full {full:.3?} final {last:.3?}; {t:.1?} (< 900s)"),
    )
}

/// 7: inheriting weights finds architectures at least as good (by truth)
/// as retraining each reduced supernet from scratch.
fn no_inherit_degradation(toy: &common::ToyPipeline) -> Outcome {
    let (mut with, mut without) = (Vec::new(), Vec::new());
    for seed in 0..10u64 {
        let cfg = ScheduleConfig { train: toy.train_config.clone(), ..ScheduleConfig::new(vec![3, 2], seed) };
        let a = run_pevonas(&toy.train, &toy.val, &toy.space, &cfg).unwrap();
        let b = run_no_inherit(&toy.train, &toy.val, &toy.space, &cfg).unwrap();
        with.push(toy.truth.get(&a.final_arch).unwrap());
        without.push(toy.truth.get(&b.final_arch).unwrap());
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mw, mo) = (mean(&with), mean(&without));
    outcome(
        mw >= mo,
        format!("mean final truth with inheritance {mw:.4} vs without {mo:.4} (with >= without); with {with:.3?} without {without:.3?}"),
    )
}

fn read_dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

/// 8: `search` output is byte-identical across executions and worker
/// counts.
fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("run.toml");
    fs::write(&config, "seed = 5\n[train]\nepochs = 5\n").unwrap();
    let out = tmp.path().join("out");
    let run = |workers: &str| {
        let cli = Cli::try_parse_from([
            "progressive-nas",
            "search",
            "--config",
            config.to_str().unwrap(),
            "--seed",
            "7",
            "--out",
            out.to_str().unwrap(),
            "--workers",
            workers,
        ])
        .unwrap();
        read_dir_bytes(&cli::run(&cli.command).unwrap())
    };
    let (a, b, c) = (run("1"), run("1"), run("4"));
    let result_same = a["result.json"] == b["result.json"] && a["result.json"] == c["result.json"];
    let all_same = a == b && a == c;
    outcome(
        result_same && all_same,
        format!("result.json identical: {result_same}; all {} output files identical: {all_same}", a.len()),
    )
}

/// 9: structural property tests.
fn structural_invariants() -> Outcome {
    let start = Instant::now();
    let mut runner = TestRunner::new(PropConfig { cases: 256, failure_persistence: None, ..PropConfig::default() });
    let mut failures = Vec::new();
    let space = s2_space();

    let softmax = runner.run(&prop::collection::vec(-50.0f64..50.0, 1..8), |row| {
        let w = softmax_weights(&row);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(w.iter().all(|&v| (0.0..=1.0).contains(&v)));
        Ok(())
    });
    if let Err(e) = softmax {
        failures.push(format!("softmax: {e}"));
    }

    let shift = runner.run(&(any::<u64>(), -100.0f64..100.0, 0.1f64..10.0), |(seed, shift, scale)| {
        let alpha = sample_arch(&space, &mut seeded(seed));
        let moved = ArchParams::from_rows(
            alpha.rows().iter().map(|r| r.iter().map(|v| v.map(|x| scale * x + shift)).collect()).collect(),
        );
        prop_assert_eq!(discretize(&alpha, &space), discretize(&moved, &space));
        Ok(())
    });
    if let Err(e) = shift {
        failures.push(format!("discretize shift invariance: {e}"));
    }

    let topk = runner.run(&(any::<u64>(), any::<u64>()), |(s1, s2)| {
        prop_assert_eq!(cardinality(&space).unwrap(), 15_625);
        let a1 = sample_arch(&space, &mut seeded(s1));
        let r3 = reduce_topk(&a1, &space, 3).unwrap();
        prop_assert!(r3.is_subspace_of(&space) && r3.contains(&discretize(&a1, &space)));
        prop_assert_eq!(cardinality(&r3).unwrap(), 729);
        let a2 = sample_arch(&r3, &mut seeded(s2));
        let r2 = reduce_topk(&a2, &r3, 2).unwrap();
        prop_assert!(r2.is_subspace_of(&r3) && r2.contains(&discretize(&a2, &r3)));
        prop_assert_eq!(cardinality(&r2).unwrap(), 64);
        Ok(())
    });
    if let Err(e) = topk {
        failures.push(format!("reduce_topk: {e}"));
    }

    let subsets = prop::collection::vec(prop::sample::subsequence((0..5usize).collect::<Vec<_>>(), 1..=5), 6);
    let bijection = runner.run(&(subsets, any::<u64>()), |(allowed, pick)| {
        let sub = SearchSpace::with_allowed(
            CellTopology::dense(4).unwrap(),
            OperationCatalog::standard(),
            allowed,
        )
        .unwrap();
        let n = cardinality(&sub).unwrap();
        let i = pick % n;
        let arch = arch_at(&sub, i).unwrap();
        prop_assert!(sub.contains(&arch));
        prop_assert_eq!(arch_index(&sub, &arch), Some(i));
        prop_assert_eq!(arch_at(&sub, n), None);
        if n <= 2_000 {
            let all = enumerate_space(&sub, 2_000).unwrap();
            prop_assert_eq!(all.len() as u64, n);
            for (k, a) in all.iter().enumerate() {
                prop_assert_eq!(arch_index(&sub, a), Some(k as u64));
            }
        }
        Ok(())
    });
    if let Err(e) = bijection {
        failures.push(format!("enumerate/index bijection: {e}"));
    }

    let t = start.elapsed();
    let pass = failures.is_empty() && within(t, 10);
    let detail = if failures.is_empty() {
        format!("4 properties x 256 cases, {t:.1?} (< 10s)")
    } else {
        format!("{}; {t:.1?}", failures.join("; "))
    };
    outcome(pass, detail)
}

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn main() {
    let toy = toy_pipeline();
    let criteria: Vec<Criterion> = vec![
        ("1 gradient correctness", Box::new(gradient_correctness)),
        ("2 oracle equivalence", Box::new(oracle_equivalence)),
        ("3 elitism monotonicity", Box::new(elitism_monotonicity)),
        ("4 inheritance preservation", Box::new(inheritance_preservation)),
        ("5 progressive beats random reduction", Box::new(progressive_beats_random)),
        ("6 correlation trend", Box::new(|| correlation_trend(&toy))),
        ("7 no-inherit degradation", Box::new(|| no_inherit_degradation(&toy))),
        ("8 determinism", Box::new(determinism)),
        ("9 structural invariants", Box::new(structural_invariants)),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let o = check();
        println!("{} [{name}] {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
