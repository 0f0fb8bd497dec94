//! Release gate: one test per shipped guarantee, each printing a single
//! summary line with the measured values (visible with --nocapture or on
//! failure). Every numeric threshold here is part of the public contract.

use std::collections::HashMap;
use std::time::Instant;

use graphmc::dist::Distribution;
use graphmc::graph::Graph;
use graphmc::kernel::{contraction_check, lemma_bound_check, SquareMatrix, StochasticKernel};
use graphmc::planner::{classify, plan, CaseTag, Schedule, ScheduleChoice};
use graphmc::product::{build_product_spec, run_product, ProductFactor};
use graphmc::simulator::{
    counterexample_scenario, ergodic_average, expectation, pool_replicas, run, run_replicas,
};
use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

mod common;
use common::{all_graphs, example1, labels, oracle_tag, weighted_path};

fn verdict(num: u32, name: &str, pass: bool, detail: &str) {
    println!(
        "criterion {num:02} {name}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {num:02} {name} failed: {detail}");
}

/// Random connected graph: attachment tree plus Bernoulli extra edges.
fn random_connected_graph(rng: &mut ChaCha8Rng, n: usize) -> Graph {
    let mut pairs = std::collections::BTreeSet::new();
    for i in 1..n {
        pairs.insert((rng.gen_range(0..i), i));
    }
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(0.3) {
                pairs.insert((i, j));
            }
        }
    }
    let edges: Vec<(String, String)> = pairs
        .into_iter()
        .map(|(i, j)| (format!("v{i}"), format!("v{j}")))
        .collect();
    Graph::new(labels(n), &edges).unwrap()
}

fn random_positive_dist(rng: &mut ChaCha8Rng, labels: Vec<String>) -> Distribution {
    let w: Vec<f64> = (0..labels.len())
        .map(|_| rng.gen_range(1..=1000u32) as f64)
        .collect();
    let total: f64 = w.iter().sum();
    Distribution::new(labels, w.iter().map(|x| x / total).collect()).unwrap()
}

#[test]
fn acceptance_01_kernel_exactness() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut max_row = 0.0f64;
    let mut max_db = 0.0f64;
    let mut max_stat = 0.0f64;
    let mut min_diag = 1.0f64;
    let mut off_graph = 0usize;
    for _ in 0..500 {
        let n = rng.gen_range(2..=8usize);
        let g = random_connected_graph(&mut rng, n);
        let d = random_positive_dist(&mut rng, g.labels().to_vec());
        let kern = StochasticKernel::build(&d, &g).unwrap();
        for s in kern.label_matrix().row_sums() {
            max_row = max_row.max((s - 1.0).abs());
        }
        max_db = max_db.max(kern.reversibility_residual());
        max_stat = max_stat.max(kern.stationarity_residual());
        for i in 0..n {
            min_diag = min_diag.min(kern.label_matrix().get(i, i));
            for j in 0..n {
                if i != j && kern.label_matrix().get(i, j) != 0.0 && !g.adjacent_idx(i, j) {
                    off_graph += 1;
                }
            }
        }
    }
    let el = t0.elapsed().as_secs_f64();
    let pass = max_row <= 1e-12
        && max_db <= 1e-12
        && max_stat <= 1e-12
        && min_diag >= 0.5 - 1e-12
        && off_graph == 0
        && el < 5.0;
    verdict(
        1,
        "kernel exactness",
        pass,
        &format!(
            "500 instances, max row defect {max_row:.2e}, max balance residual {max_db:.2e}, \
             max stationarity residual {max_stat:.2e}, min diagonal {min_diag:.6}, \
             off-graph entries {off_graph}, {el:.2}s < 5s"
        ),
    );
}

#[test]
fn acceptance_02_worked_example_closed_forms() {
    let t0 = Instant::now();
    let (g, d) = example1();
    let mut max_rel_p = 0.0f64;
    let mut max_rel_diag = 0.0f64;
    for l in 1..=20u32 {
        let k = 1u64 << l;
        let kern = StochasticKernel::build(&d.mixture(k).unwrap(), &g).unwrap();
        let want_p = 1.0 / (1u64 << (l + 1)) as f64;
        max_rel_p = max_rel_p.max((kern.p_value() - want_p).abs() / want_p);
        let want_diag = 1.0 - want_p;
        max_rel_diag =
            max_rel_diag.max((kern.label_matrix().get(0, 0) - want_diag).abs() / want_diag);
    }
    let el = t0.elapsed().as_secs_f64();
    let pass = max_rel_p <= 1e-15 && max_rel_diag <= 1e-15 && el < 1.0;
    verdict(
        2,
        "worked-example closed forms",
        pass,
        &format!(
            "levels 1..=20, base step rel err {max_rel_p:.2e}, \
             top self-loop rel err {max_rel_diag:.2e}, {el:.2}s < 1s"
        ),
    );
}

#[test]
fn acceptance_03_coefficient_bound() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut holds = 0usize;
    let mut min_margin = f64::INFINITY;
    let mut attempts = 0usize;
    let mut done = 0usize;
    while done < 200 {
        attempts += 1;
        assert!(attempts < 100_000, "instance generation stalled");
        let n = rng.gen_range(3..=7usize);
        let g = random_connected_graph(&mut rng, n);
        // support: proper subset whose induced subgraph is disconnected
        let mut support = None;
        for _ in 0..64 {
            let mask = rng.gen_range(1u32..(1 << n) - 1);
            let s: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
            if s.len() >= 2 && oracle_tag(&g, &s) == CaseTag::SupportInOneComponent {
                support = Some(s);
                break;
            }
        }
        let Some(support) = support else { continue };
        let mut w = vec![0f64; n];
        for &s in &support {
            w[s] = rng.gen_range(1..=20u32) as f64;
        }
        let total: f64 = w.iter().sum();
        let d =
            Distribution::new(g.labels().to_vec(), w.iter().map(|x| x / total).collect()).unwrap();
        let k = d.kbar() + rng.gen_range(1..=20u64);
        let report = lemma_bound_check(&d, &g, k).unwrap();
        if report.holds {
            holds += 1;
        }
        min_margin = min_margin.min(report.bound - report.delta);
        done += 1;
    }
    let el = t0.elapsed().as_secs_f64();
    let pass = holds == 200 && el < 10.0;
    verdict(
        3,
        "coefficient bound",
        pass,
        &format!("{holds}/200 hold, min margin {min_margin:.3e}, {el:.2}s < 10s"),
    );
}

#[test]
fn acceptance_04_contraction_bound() {
    let t0 = Instant::now();
    let (g1, d1) = example1();
    let kern_a = StochasticKernel::build(&d1.mixture(5).unwrap(), &g1).unwrap();
    let (g2, d2) = weighted_path(vec![0.4, 0.25, 0.15, 0.12, 0.08]);
    let kern_b = StochasticKernel::build(&d2, &g2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut holds = 0usize;
    let mut max_excess = f64::NEG_INFINITY;
    for kern in [&kern_a, &kern_b] {
        for _ in 0..50 {
            let w: Vec<f64> = (0..kern.n()).map(|_| rng.gen::<f64>() + 1e-3).collect();
            let total: f64 = w.iter().sum();
            let nu = Distribution::new(
                kern.labels().to_vec(),
                w.iter().map(|x| x / total).collect(),
            )
            .unwrap();
            let steps = rng.gen_range(1..=50u64);
            let report = contraction_check(kern, &nu, steps).unwrap();
            if report.holds {
                holds += 1;
            }
            max_excess = max_excess.max(report.tv - report.bound);
        }
    }
    let el = t0.elapsed().as_secs_f64();
    let pass = holds == 100 && el < 5.0;
    verdict(
        4,
        "contraction bound",
        pass,
        &format!("{holds}/100 hold, worst tv-bound gap {max_excess:.3e}, {el:.2}s < 5s"),
    );
}

#[test]
fn acceptance_05_full_support_ergodicity() {
    let t0 = Instant::now();
    let (g, d) = weighted_path(vec![0.4, 0.25, 0.15, 0.12, 0.08]);
    let p = plan(&d, &g, None, None).unwrap();
    let r = run(&p, 1_000_000, 2026, &[]).unwrap();
    let tv = r.tv_trace.last().unwrap().tv;
    let el = t0.elapsed().as_secs_f64();
    let pass = tv <= 0.01 && el < 10.0;
    verdict(
        5,
        "full-support ergodicity",
        pass,
        &format!("TV after 1e6 steps {tv:.5} <= 0.01, {el:.2}s < 10s"),
    );
}

#[test]
fn acceptance_06_epsilon_approximation() {
    let t0 = Instant::now();
    let (g, d) = example1();
    let p = plan(&d, &g, None, Some(0.05)).unwrap();
    let info = p.epsilon_info().unwrap();
    let r = run(&p, 1_000_000, 606, &[]).unwrap();
    let max_dev = r
        .empirical
        .iter()
        .zip(d.masses())
        .map(|(e, m)| (e - m).abs())
        .fold(0.0f64, f64::max);

    // time average of a bounded function against its target expectation
    let mut rng = ChaCha8Rng::seed_from_u64(626);
    let f: HashMap<String, f64> = d
        .labels()
        .iter()
        .map(|l| (l.clone(), rng.gen_range(-1.0..1.0)))
        .collect();
    let fmax = f.values().fold(0.0f64, |a, v| a.max(v.abs()));
    let avg = ergodic_average(&r, &f).unwrap();
    let exact = expectation(&d, &f).unwrap();
    let f_gap = (avg - exact).abs();
    let f_bound = 0.05 * fmax + 0.01;

    let el = t0.elapsed().as_secs_f64();
    let pass = info.k == 20 && max_dev <= 0.05 + 0.01 && f_gap <= f_bound && el < 10.0;
    verdict(
        6,
        "epsilon approximation",
        pass,
        &format!(
            "k={}, max state deviation {max_dev:.4} <= 0.06, \
             function gap {f_gap:.4} <= {f_bound:.4}, {el:.2}s < 10s",
            info.k
        ),
    );
}

#[test]
fn acceptance_07_schedule_properties() {
    let t0 = Instant::now();

    // (a) block boundaries are the exact polynomial, in big-integer form
    fn upow(base: u64, e: u32) -> BigUint {
        let mut acc = BigUint::from(1u32);
        for _ in 0..e {
            acc *= base;
        }
        acc
    }
    let mut boundaries_exact = true;
    for n in 2..=4usize {
        let sched = Schedule::paper_poly(n, 1);
        for l in 1..=10u64 {
            boundaries_exact &=
                sched.start_of(l) + BigUint::from(1u32) == upow(l, 5 * n as u32);
        }
    }
    let (g, d) = example1();
    let p = plan(&d, &g, Some(&ScheduleChoice::PaperPoly), None).unwrap();
    let sched = p.schedule().unwrap();
    for l in 3..=10u64 {
        boundaries_exact &= sched.start_of(l) + upow(3, 20) == upow(l, 20);
    }

    // (b) every block kernel leaves its own mixture invariant
    let mut max_stat = 0.0f64;
    for k in 3..=14u64 {
        let kern = p.kernel_for_k(k).unwrap();
        max_stat = max_stat.max(kern.stationarity_residual());
    }

    // (c) a geometric table reaches the target well inside 1e6 steps;
    // pooling replicas estimates the occupation law rather than one
    // trajectory's split across the two heavy end states
    let choice = ScheduleChoice::Practical {
        blocks: (0..7).map(|l| 10_000u64 << l).collect(),
        ks: Some((0..7).map(|l| 3u64 << l).collect()),
    };
    let pp = plan(&d, &g, Some(&choice), None).unwrap();
    let reports = run_replicas(&pp, 1_000_000, 707, 200, &[]).unwrap();
    let tv = pool_replicas(&pp, &reports).pooled_tv;

    let el = t0.elapsed().as_secs_f64();
    let pass = boundaries_exact && max_stat <= 1e-12 && tv <= 0.05 && el < 30.0;
    verdict(
        7,
        "schedule properties",
        pass,
        &format!(
            "boundaries exact {boundaries_exact}, max block stationarity residual \
             {max_stat:.2e}, geometric-table pooled TV {tv:.4} <= 0.05, {el:.2}s < 30s"
        ),
    );
}

#[test]
fn acceptance_08_fast_schedule_nonconvergence() {
    let t0 = Instant::now();
    let report = counterexample_scenario(100_000, 1_000, 808);
    let el = t0.elapsed().as_secs_f64();
    let pass = report.stuck_fraction >= 0.45 && report.mean_final_tv >= 0.3 && el < 60.0;
    verdict(
        8,
        "fast-schedule non-convergence",
        pass,
        &format!(
            "stuck fraction {:.3} >= 0.45, mean final TV {:.3} >= 0.3, {el:.2}s < 60s",
            report.stuck_fraction, report.mean_final_tv
        ),
    );
}

#[test]
fn acceptance_09_classification_verdicts() {
    let t0 = Instant::now();
    let mut total = 0usize;
    let mut mismatches = 0usize;
    for n in 1..=5usize {
        for g in all_graphs(n) {
            for pattern in 1u32..1 << n {
                let support: Vec<usize> = (0..n).filter(|&i| pattern >> i & 1 == 1).collect();
                let mass: Vec<f64> = (0..n)
                    .map(|i| {
                        if pattern >> i & 1 == 1 {
                            1.0 / support.len() as f64
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let d = Distribution::new(g.labels().to_vec(), mass).unwrap();
                total += 1;
                if classify(&d, &g).unwrap().tag != oracle_tag(&g, &support) {
                    mismatches += 1;
                }
            }
        }
    }
    let el = t0.elapsed().as_secs_f64();
    let pass = mismatches == 0 && el < 30.0;
    verdict(
        9,
        "classification verdicts",
        pass,
        &format!("{total} instances, {mismatches} mismatches, {el:.2}s < 30s"),
    );
}

#[test]
fn acceptance_10_product_chain() {
    let t0 = Instant::now();
    let two = ["0", "1"].map(String::from).to_vec();
    let k2 = Graph::new(two.clone(), &[("0".into(), "1".into())]).unwrap();
    let factors = vec![
        ProductFactor {
            target: Distribution::new(two.clone(), vec![0.7, 0.3]).unwrap(),
            graph: k2.clone(),
            schedule: None,
            epsilon: None,
        },
        ProductFactor {
            target: Distribution::new(two, vec![0.3, 0.7]).unwrap(),
            graph: k2,
            schedule: None,
            epsilon: None,
        },
    ];
    let spec = build_product_spec(&factors).unwrap();
    let report = run_product(&spec, 1_000_000, 1010, &[]).unwrap();
    let joint = report.joint.as_ref().unwrap();
    let joint_tv = joint.tv_trace.last().unwrap().tv;
    let marg_tv = report
        .factors
        .iter()
        .map(|f| f.tv_trace.last().unwrap().tv)
        .fold(0.0f64, f64::max);
    let violations = joint.consistency_violations
        + report
            .factors
            .iter()
            .map(|f| f.consistency_violations)
            .sum::<u64>();
    let el = t0.elapsed().as_secs_f64();
    let pass = joint_tv <= 0.02 && marg_tv <= 0.01 && violations == 0 && el < 15.0;
    verdict(
        10,
        "product chain",
        pass,
        &format!(
            "joint TV {joint_tv:.4} <= 0.02, worst marginal TV {marg_tv:.4} <= 0.01, \
             violations {violations}, {el:.2}s < 15s"
        ),
    );
}

#[test]
fn acceptance_11_exact_law_oracle() {
    let t0 = Instant::now();
    let (g, d) = weighted_path(vec![
        6.0 / 21.0,
        5.0 / 21.0,
        4.0 / 21.0,
        3.0 / 21.0,
        2.0 / 21.0,
        1.0 / 21.0,
    ]);
    let p = plan(&d, &g, None, None).unwrap();
    let kern = p.fixed_kernel().unwrap();
    let init = p.initial().masses().to_vec();
    let transitions = 12u64;
    let exact = kern.propagate(&init, transitions);

    // route 1: exhaustive path enumeration
    fn walk(m: &SquareMatrix, x: usize, prob: f64, left: u64, acc: &mut [f64]) {
        if left == 0 {
            acc[x] += prob;
            return;
        }
        for j in 0..m.n() {
            let p = m.get(x, j);
            if p > 0.0 {
                walk(m, j, prob * p, left - 1, acc);
            }
        }
    }
    let mut by_paths = vec![0.0f64; kern.n()];
    for (i, &m0) in init.iter().enumerate() {
        if m0 > 0.0 {
            walk(kern.label_matrix(), i, m0, transitions, &mut by_paths);
        }
    }
    let law_gap = by_paths
        .iter()
        .zip(&exact)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);

    // route 2: Monte Carlo over independent replica streams
    let replicas = 1_000_000u64;
    let n = kern.n();
    let counts: Vec<u64> = (0..replicas)
        .into_par_iter()
        .fold(
            || vec![0u64; n],
            |mut acc, rep| {
                let mut rng = ChaCha8Rng::seed_from_u64(1111);
                rng.set_stream(rep);
                let u0 = rng.gen::<f64>();
                let mut cum = 0.0;
                let mut x = n - 1;
                for (i, &m0) in init.iter().enumerate() {
                    cum += m0;
                    if u0 < cum {
                        x = i;
                        break;
                    }
                }
                for _ in 0..transitions {
                    x = kern.sample_next_idx(x, rng.gen());
                }
                acc[x] += 1;
                acc
            },
        )
        .reduce(
            || vec![0u64; n],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
    let mut max_sigmas = 0.0f64;
    for (i, &e) in exact.iter().enumerate() {
        let freq = counts[i] as f64 / replicas as f64;
        let sigma = (e * (1.0 - e) / replicas as f64).sqrt().max(1e-12);
        max_sigmas = max_sigmas.max((freq - e).abs() / sigma);
    }

    let el = t0.elapsed().as_secs_f64();
    let pass = law_gap <= 1e-12 && max_sigmas <= 3.0 && el < 60.0;
    verdict(
        11,
        "exact-law oracle",
        pass,
        &format!(
            "path-sum vs matrix law gap {law_gap:.2e} <= 1e-12, \
             Monte Carlo worst z-score {max_sigmas:.2} <= 3, {el:.2}s < 60s"
        ),
    );
}
