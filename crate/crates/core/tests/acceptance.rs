//! Acceptance checks. Runs as a plain binary (no libtest harness) so that
//! every criterion prints exactly one PASS/FAIL line; the process exits
//! non-zero if any criterion fails.

use std::fs;
use std::process::Command;
use std::time::Instant;

use metapct::effects::{Dataset, EffectMeasure};
use metapct::harness::{run_experiment, CoverageRow, ExperimentSpec};
use metapct::methods::{IntervalMethod, UnweightedSignTest, WeightedSignTest};
use metapct::nulldist::{make_sign_matrix, null_exact, null_mc};
use metapct::simgen::{Scenario, DEFAULT_ETA, DEFAULT_SHAPES, DEFAULT_SIGMA};
use metapct::statistic::{normal_cdf, statistic_unweighted, statistic_weighted};
use metapct::{InversionConfig, MethodRegistry};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

// ---------- independent oracles ----------

fn binom_pmf(k: usize, p: f64) -> Vec<f64> {
    // direct product form, no shared code with the library
    (0..=k)
        .map(|n| {
            let mut c = 1.0;
            for i in 0..n {
                c = c * (k - i) as f64 / (i + 1) as f64;
            }
            c * p.powi(n as i32) * (1.0 - p).powi((k - n) as i32)
        })
        .collect()
}

/// Sign-test interval by brute force over the cells between order statistics.
fn sign_test_oracle(thetas: &[f64], p: f64, alpha: f64) -> (f64, f64) {
    let k = thetas.len();
    let mut x = thetas.to_vec();
    x.sort_by(f64::total_cmp);
    let pmf = binom_pmf(k, p);
    let accepted: Vec<bool> = (0..=k)
        .map(|c| {
            // c estimates below the candidate, k - c above: T = 2c - k, N = c
            let le: f64 = pmf[..=c].iter().sum();
            let ge: f64 = pmf[c..].iter().sum();
            (2.0 * le.min(ge)).min(1.0) > alpha
        })
        .collect();
    let first = accepted.iter().position(|&a| a).expect("some cell accepted");
    let last = accepted.iter().rposition(|&a| a).unwrap();
    let lower = if first == 0 { f64::NEG_INFINITY } else { x[first - 1] };
    let upper = if last == k { f64::INFINITY } else { x[last] };
    (lower, upper)
}

/// Phi(z) from the all-positive-term series
/// erf(x) = 2/sqrt(pi) * exp(-x^2) * sum_n 2^n x^(2n+1) / (1*3*...*(2n+1)),
/// summed with Kahan compensation.
fn phi_series(z: f64) -> f64 {
    let x = z.abs() / std::f64::consts::SQRT_2;
    let mut term = x;
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    let mut n = 0.0;
    loop {
        let y = term - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        n += 1.0;
        term *= 2.0 * x * x / (2.0 * n + 1.0);
        if term < 1e-18 * sum {
            break;
        }
    }
    let erf = 2.0 / std::f64::consts::PI.sqrt() * (-x * x).exp() * sum;
    if z >= 0.0 {
        0.5 + 0.5 * erf
    } else {
        0.5 - 0.5 * erf
    }
}

// ---------- criteria ----------

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let cfg = InversionConfig::default();
    let mut mismatches = Vec::new();
    let mut checked = 0;
    for i in 0..200 {
        let k = rng.random_range(3..=12);
        let thetas: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
        let p = [0.25, 0.5, 0.75][i % 3];
        let expected = sign_test_oracle(&thetas, p, 0.05);
        let d = Dataset::from_pairs(&thetas, &vec![0.0; k], EffectMeasure::LogRelativeRisk).unwrap();
        for m in [&UnweightedSignTest as &dyn IntervalMethod, &WeightedSignTest] {
            let r = m.interval(&d, p, 0.05, &cfg).unwrap();
            checked += 1;
            if (r.lower, r.upper) != expected {
                mismatches.push(format!("dataset {i} {}: got ({}, {}) want {expected:?}", m.name(), r.lower, r.upper));
            }
        }
    }
    outcome(
        mismatches.is_empty(),
        format!("{checked} intervals, {} mismatches {:?}", mismatches.len(), mismatches.first()),
    )
}

fn criterion_2() -> Outcome {
    let mut lines = Vec::new();
    let mut worst_all: f64 = 0.0;
    for p in [0.25, 0.5, 0.75] {
        let mut worst: f64 = 0.0;
        let mut mean = 0.0;
        for s in 0..50u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(200 + s);
            let w: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..0.5)).collect();
            let exact = null_exact(&w, p, 20).unwrap();
            let mc = null_mc(&w, &make_sign_matrix(8, p, 100_000, s).unwrap()).unwrap();
            let tv = exact.total_variation(&mc);
            worst = worst.max(tv);
            mean += tv / 50.0;
        }
        worst_all = worst_all.max(worst);
        lines.push(format!("p={p}: mean TV {mean:.4}, max {worst:.4}"));
    }
    outcome(worst_all <= 0.02, format!("tolerance 0.02; {}", lines.join("; ")))
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut ok = true;
    let mut worst_ratio: f64 = 0.0;
    let mut max_coarse: f64 = 0.0;
    for _ in 0..50 {
        let k = rng.random_range(2..=30);
        let mu0 = rng.random_range(-1.0..1.0);
        let thetas: Vec<f64> = (0..k)
            .map(|_| {
                let gap = 1.0 + rng.random_range(0.0..3.0);
                if rng.random_bool(0.5) { mu0 + gap } else { mu0 - gap }
            })
            .collect();
        // wide standard errors so the eps = 1e-2 error is not already zero
        let sigmas: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..100.0)).collect();
        let base = Dataset::from_pairs(&thetas, &sigmas, EffectMeasure::LogRelativeRisk).unwrap();
        let half_sign = statistic_unweighted(&base, mu0).value / 2.0;
        let errs: Vec<f64> = [1e-2, 1e-4]
            .iter()
            .map(|&eps| {
                let scaled: Vec<f64> = sigmas.iter().map(|s| s * eps).collect();
                let d = Dataset::from_pairs(&thetas, &scaled, EffectMeasure::LogRelativeRisk).unwrap();
                (statistic_weighted(&d, mu0).value - half_sign).abs()
            })
            .collect();
        let decreasing = if errs[0] > 0.0 { errs[1] < errs[0] } else { errs[1] == 0.0 };
        ok &= decreasing && errs[1] < 1e-3 * k as f64;
        worst_ratio = worst_ratio.max(errs[1] / (1e-3 * k as f64));
        max_coarse = max_coarse.max(errs[0]);
    }
    outcome(
        ok,
        format!("50 datasets; max err at 1e-2 = {max_coarse:.3e}; max err(1e-4) / (1e-3 K) = {worst_ratio:.3e}"),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let cfg = InversionConfig {
        null: metapct::nulldist::NullConfig {
            seed: 77,
            ..Default::default()
        },
        ..InversionConfig::default()
    };
    let mut worst: f64 = 0.0;
    let mut bad = 0;
    let same = |a: f64, b: f64| if a.is_infinite() || b.is_infinite() { a == b } else { (a - b).abs() <= 1e-9 };
    for i in 0..50 {
        let k = if i % 5 == 0 { rng.random_range(21..=30) } else { rng.random_range(3..=20) };
        let thetas: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
        let sigmas: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
        let d = Dataset::from_pairs(&thetas, &sigmas, EffectMeasure::LogRelativeRisk).unwrap();
        let mapped = d.affine(2.0, 3.0);
        let p = [0.25, 0.5, 0.75][i % 3];
        for m in [&WeightedSignTest as &dyn IntervalMethod, &UnweightedSignTest] {
            let a = m.interval(&d, p, 0.05, &cfg).unwrap();
            let b = m.interval(&mapped, p, 0.05, &cfg).unwrap();
            for (x, y) in [(a.lower, b.lower), (a.upper, b.upper)] {
                let want = 2.0 * x + 3.0;
                if !same(want, y) {
                    bad += 1;
                }
                if want.is_finite() {
                    worst = worst.max((want - y).abs());
                }
            }
        }
    }
    outcome(bad == 0, format!("50 datasets x 2 methods; {bad} endpoints off; max |diff| {worst:.2e}"))
}

fn row<'a>(rows: &'a [CoverageRow], method: &str) -> &'a CoverageRow {
    rows.iter().find(|r| r.method == method).unwrap()
}

fn describe(rows: &[CoverageRow]) -> String {
    rows.iter()
        .map(|r| {
            let mean = r.ecl_mean.map(|m| format!(" mean-ECL {m:.3}")).unwrap_or_default();
            format!("{} ECL {:.3}{mean} ML {:.3} (n={})", r.method, r.ecl, r.ml, r.reps_used)
        })
        .collect::<Vec<_>>()
        .join("; ")
}

fn coverage(spec: ExperimentSpec) -> (Vec<CoverageRow>, f64) {
    let t = Instant::now();
    let rows = run_experiment(&spec, &MethodRegistry::builtin()).unwrap();
    (rows, t.elapsed().as_secs_f64())
}

fn criterion_5(rows: &[CoverageRow], secs: f64) -> Outcome {
    let w = row(rows, "weighted");
    outcome(
        (0.93..=0.98).contains(&w.ecl) && secs < 600.0,
        format!("band [0.93, 0.98]; {}; {secs:.0}s", describe(rows)),
    )
}

fn criterion_6(rows: &[CoverageRow], secs: f64) -> Outcome {
    let w = row(rows, "weighted");
    let dl = row(rows, "dl");
    let dl_mean = dl.ecl_mean.unwrap();
    outcome(
        dl.ecl <= 0.92 && (0.925..=0.975).contains(&w.ecl) && dl_mean < 0.90 && secs < 1200.0,
        format!("need DL <= 0.92, weighted in [0.925, 0.975], DL mean < 0.90; {}; {secs:.0}s", describe(rows)),
    )
}

fn criterion_7(cells: &[(&str, &[CoverageRow])]) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, rows) in cells {
        let (w, u) = (row(rows, "weighted").ml, row(rows, "unweighted").ml);
        ok &= w < u;
        parts.push(format!("{name}: weighted {w:.3} vs unweighted {u:.3}"));
    }
    outcome(ok, parts.join("; "))
}

fn criterion_8(rows: &[CoverageRow], secs: f64) -> Outcome {
    let w = row(rows, "weighted");
    let u = row(rows, "unweighted");
    outcome(
        (0.93..=0.98).contains(&w.ecl) && u.ecl <= w.ecl && secs < 1200.0,
        format!("need weighted in [0.93, 0.98] and unweighted <= weighted; {}; {secs:.0}s", describe(rows)),
    )
}

fn criterion_9() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_metapct");
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("d.csv");
    fs::write(
        &input,
        "study_id,events_trt,n_trt,events_ctl,n_ctl\n\
         a,12,100,20,100\nb,5,80,9,85\nc,30,210,28,200\nd,0,40,3,40\ne,7,60,11,62\n\
         f,15,120,19,118\ng,2,30,6,31\nh,22,150,25,149\ni,9,90,14,95\nj,4,50,8,52\n\
         k,17,130,23,128\nl,6,70,12,71\nm,11,99,13,97\nn,3,45,7,44\no,25,160,29,158\n\
         p,8,75,10,77\nq,13,110,18,112\nr,1,25,4,26\ns,19,140,21,139\nt,10,85,15,88\nu,14,105,16,104\n",
    )
    .unwrap();
    let spec = dir.path().join("s.toml");
    fs::write(
        &spec,
        "kind = \"logit_normal\"\nk = 12\nreps = 8\nresamples = 5000\npercentiles = [0.25, 0.5]\noracle_draws = 100000\n",
    )
    .unwrap();
    let mut outputs: Vec<(String, Vec<u8>)> = Vec::new();
    for (run, threads) in ["1", "1", "4"].iter().enumerate() {
        let a = dir.path().join(format!("a{run}.csv"));
        let s = dir.path().join(format!("s{run}.md"));
        let ok_a = Command::new(bin)
            .args(["analyze", "--input", input.to_str().unwrap(), "--percentile", "0.25,0.5,0.75"])
            .args(["--method", "weighted,unweighted,dl,sj", "--resamples", "20000", "--seed", "9"])
            .args(["--threads", threads, "--out", a.to_str().unwrap()])
            .status()
            .unwrap()
            .success();
        let ok_s = Command::new(bin)
            .args(["simulate", "--spec", spec.to_str().unwrap(), "--threads", threads, "--out", s.to_str().unwrap()])
            .status()
            .unwrap()
            .success();
        if !(ok_a && ok_s) {
            return outcome(false, format!("run {run} exited with an error"));
        }
        outputs.push(("analyze".into(), fs::read(a).unwrap()));
        outputs.push(("simulate".into(), fs::read(s).unwrap()));
    }
    let same = outputs[0] == outputs[2] && outputs[0] == outputs[4] && outputs[1] == outputs[3] && outputs[1] == outputs[5];
    outcome(same, "analyze (K=21, MC null) and simulate, 2 runs at 1 thread + 1 run at 4 threads".into())
}

fn criterion_10() -> Outcome {
    let n = 100_000;
    let mut worst: f64 = 0.0;
    let mut at = 0.0;
    for i in 0..n {
        let z = -8.0 + 16.0 * i as f64 / (n - 1) as f64;
        let e = (normal_cdf(z) - phi_series(z)).abs();
        if e > worst {
            worst = e;
            at = z;
        }
    }
    outcome(worst <= 1e-12, format!("max |error| {worst:.2e} at z = {at:.4} over {n} points"))
}

fn main() {
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut report = |n: usize, o: Outcome| {
        println!("criterion {n:>2}: {} | {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, o));
    };
    report(1, criterion_1());
    report(2, criterion_2());
    report(3, criterion_3());
    report(4, criterion_4());
    report(10, criterion_10());
    report(9, criterion_9());

    let all = ["weighted", "unweighted", "dl", "sj"].map(String::from).to_vec();
    let (fixed, t5) = coverage(ExperimentSpec {
        methods: all.clone(),
        ..ExperimentSpec::new(Scenario::fixed(0.1, 0.2, 200), 10)
    });
    report(5, criterion_5(&fixed, t5));
    let (logit, t6) = coverage(ExperimentSpec {
        methods: all.clone(),
        ..ExperimentSpec::new(Scenario::logit_normal(DEFAULT_ETA, DEFAULT_SIGMA, 200), 40)
    });
    report(6, criterion_6(&logit, t6));
    report(7, criterion_7(&[("fixed K=10", &fixed), ("logit-normal K=40", &logit)]));
    let (beta, t8) = coverage(ExperimentSpec {
        methods: vec!["weighted".into(), "unweighted".into()],
        percentiles: vec![0.25],
        ..ExperimentSpec::new(Scenario::bivariate_beta(DEFAULT_SHAPES, 200), 40)
    });
    report(8, criterion_8(&beta, t8));

    let failed: Vec<usize> = results.iter().filter(|(_, o)| !o.pass).map(|(n, _)| *n).collect();
    println!(
        "acceptance: {} of {} criteria passed{}",
        results.len() - failed.len(),
        results.len(),
        if failed.is_empty() { String::new() } else { format!("; failed {failed:?}") }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
