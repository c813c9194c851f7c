//! Acceptance criteria, one PASS/FAIL line each; exits non-zero if any fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use interference_core::sim::{preset, run, ExperimentConfig, RunOptions, RunOutput, Scale, Scenario};

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail }
    }
}

fn run_preset(cfg: &ExperimentConfig, scale: Scale) -> RunOutput {
    let opts = RunOptions {
        scale,
        ..RunOptions::default()
    };
    run(cfg, &opts).unwrap_or_else(|e| panic!("{} failed: {e}", cfg.scenario))
}

fn value(out: &RunOutput, n: usize, metric: &str) -> f64 {
    out.value(n, metric).unwrap_or_else(|| panic!("{}: no {metric} at n = {n}", out.scenario))
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn exact_oracle() -> Verdict {
    let start = Instant::now();
    let s = common::run_exact_oracle(2024, 210, 5, 2);
    let secs = start.elapsed().as_secs_f64();
    let tol = 1e-10;
    let checks = [
        ("instances >= 200", s.instances >= 200),
        ("all design families", s.families.iter().all(|&c| c > 0)),
        ("all maps", s.maps.iter().all(|&c| c > 0)),
        ("HT unbiased", s.ht_bias <= tol),
        ("variance formula", s.var_formula <= tol),
        ("covariance formula", s.cov_checks > 0 && s.cov_formula <= tol),
        ("conservative estimator", s.conservative_slack >= -tol),
        ("upper/lower bracketing", s.upper_slack >= -tol && s.lower_slack >= -tol),
        ("covariance estimator", s.cov_estimator_checks > 0 && s.cov_estimator_bias <= tol),
        ("convex bias bound", s.convex_checks > 0 && s.convex_excess <= tol),
        ("runtime < 60 s", secs < 60.0),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    Verdict::new(
        failed.is_empty(),
        format!(
            "{} instances, {} contrasts, families {:?}, maps {:?}; max |bias| {:.1e}, var {:.1e}, cov {:.1e}, cov-est {:.1e}; min slack {:.1e}/{:.1e}/{:.1e}; convex excess {:.1e}; {:.1} s{}",
            s.instances,
            s.contrasts,
            s.families,
            s.maps,
            s.ht_bias,
            s.var_formula,
            s.cov_formula,
            s.cov_estimator_bias,
            s.conservative_slack,
            s.upper_slack,
            s.lower_slack,
            s.convex_excess,
            secs,
            if failed.is_empty() { String::new() } else { format!("; failed: {}", failed.join(", ")) }
        ),
    )
}

fn clt_tec() -> Verdict {
    let start = Instant::now();
    let out = run_preset(&preset(Scenario::CltTec), Scale::Quarter);
    let secs = start.elapsed().as_secs_f64();
    let mut pass = out.config.reps == 12_500;
    let mut parts = Vec::new();
    for (n, target) in [(100, 0.936), (500, 0.953), (1000, 0.962)] {
        let cov = value(&out, n, "coverage");
        let ok = within(cov, target, 0.015) && (n < 500 || cov >= 0.94);
        pass &= ok;
        parts.push(format!("n={n} {:.2}% (target {:.1}±1.5){}", 100.0 * cov, 100.0 * target, if ok { "" } else { " out" }));
    }
    Verdict::new(pass, format!("{} reps; {}; {:.1} s", out.config.reps, parts.join(", "), secs))
}

fn clt_atec() -> Verdict {
    let out = run_preset(&preset(Scenario::CltAtec), Scale::Quarter);
    let row = out.row(1000, "coverage").expect("coverage row");
    let cov = row.value;
    let skew = value(&out, 1000, "skewness");
    let jb_p = value(&out, 1000, "jb_p_value");
    let pass = row.t == 31 && within(cov, 0.954, 0.015) && skew.abs() < 0.1 && jb_p > 0.01;
    Verdict::new(
        pass,
        format!("n=1000 T={} {} reps: coverage {:.2}% (target 95.4±1.5), skew {skew:.4}, JB p {jb_p:.3}", row.t, out.config.reps, 100.0 * cov),
    )
}

fn stability_rmse() -> Verdict {
    let out = run_preset(&preset(Scenario::StabilityRmse), Scale::Full);
    let mut pass = out.config.reps == 100;
    let mut parts = Vec::new();
    for n in [50, 100, 250] {
        let (ht, k2, k5) = (value(&out, n, "rmse_ht"), value(&out, n, "rmse_k2"), value(&out, n, "rmse_k5"));
        pass &= ht > k2 && k2 > k5;
        parts.push(format!("n={n} {ht:.2}>{k2:.2}>{k5:.2}"));
    }
    let ratio = value(&out, 50, "rmse_ht") / value(&out, 50, "rmse_k2");
    pass &= ratio >= 3.0;
    Verdict::new(pass, format!("{}; HT/k2 at n=50 = {ratio:.2} (>= 3)", parts.join(", ")))
}

fn stability_ci() -> Verdict {
    let out = run_preset(&preset(Scenario::StabilityCi), Scale::Full);
    let mut pass = out.config.reps == 1000 && out.config.networks == 3;
    let mut parts = Vec::new();
    let mut lengths = [0.0; 2];
    for net in 1..=3 {
        let get = |m: &str| value(&out, 100, &format!("net={net}/{m}"));
        let covs = ["gaussian_lower", "gaussian_upper", "chebyshev_lower", "chebyshev_upper"].map(|c| get(&format!("{c}_coverage")));
        pass &= covs.iter().all(|&c| c >= 0.90) && covs[1] >= covs[0];
        lengths[0] += get("gaussian_lower_mean_length") + get("gaussian_upper_mean_length");
        lengths[1] += get("chebyshev_lower_mean_length") + get("chebyshev_upper_mean_length");
        parts.push(format!(
            "net{net} G-d {:.1} G-u {:.1} C-d {:.1} C-u {:.1}",
            100.0 * covs[0],
            100.0 * covs[1],
            100.0 * covs[2],
            100.0 * covs[3]
        ));
    }
    let (g, c) = (lengths[0] / 6.0, lengths[1] / 6.0);
    pass &= c > g;
    Verdict::new(pass, format!("coverage % {}; mean length Gaussian {g:.2} < Chebyshev {c:.2}; every cell >= 90%", parts.join("; ")))
}

fn epsilon_sensitivity() -> Verdict {
    let cfg = preset(Scenario::EpsilonSensitivity);
    let out = run_preset(&cfg, Scale::Full);
    let n = cfg.n[0];
    let ht: Vec<f64> = cfg.epsilon_multipliers.iter().map(|m| value(&out, n, &format!("mult={m}/rmse_ht"))).collect();
    let k2: Vec<f64> = cfg.epsilon_multipliers.iter().map(|m| value(&out, n, &format!("mult={m}/rmse_k2"))).collect();
    let constant = ht.iter().all(|&h| h.to_bits() == ht[0].to_bits());
    let (lo, hi) = k2.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let spread = hi / lo - 1.0;
    Verdict::new(
        constant && spread < 0.15,
        format!("HT RMSE {:.3} identical across {} multipliers: {constant}; k=2 RMSE {:?} spread {:.1}% (< 15%)", ht[0], ht.len(), k2.iter().map(|x| (x * 100.0).round() / 100.0).collect::<Vec<_>>(), 100.0 * spread),
    )
}

fn group_size() -> Verdict {
    let cfg = preset(Scenario::GroupSize);
    let out = run_preset(&cfg, Scale::Quarter);
    let jb = |r: usize, n: usize| value(&out, n, &format!("r={r}/jarque_bera"));
    let (j4, j8) = (jb(4, 640), jb(8, 640));
    let mut pass = j8 > j4;
    let mut parts = Vec::new();
    for r in [4, 8] {
        let series: Vec<f64> = cfg.n.iter().map(|&n| jb(r, n)).collect();
        pass &= series.windows(2).all(|w| w[1] < w[0]);
        parts.push(format!("r={r} JB by n {:?}", series.iter().map(|x| x.round()).collect::<Vec<_>>()));
    }
    Verdict::new(pass, format!("n=640 JB r=8 {j8:.1} > r=4 {j4:.1}; {} (decreasing in n)", parts.join(", ")))
}

fn determinism() -> Verdict {
    let mut failures = Vec::new();
    for scenario in Scenario::ALL {
        let mut cfg = preset(scenario);
        cfg.n.truncate(1);
        cfg.n[0] = cfg.n[0].min(160);
        cfg.reps = cfg.reps.min(64);
        let csv = |threads| {
            let opts = RunOptions {
                threads: Some(threads),
                ..RunOptions::default()
            };
            let out = run(&cfg, &opts).unwrap_or_else(|e| panic!("{scenario}: {e}"));
            let mut buf = Vec::new();
            out.write_csv(&mut buf).expect("csv");
            buf
        };
        if csv(1) != csv(2) {
            failures.push(scenario.name());
        }
    }
    Verdict::new(
        failures.is_empty(),
        format!("{} scenarios, threads 1 vs 2 byte-identical CSVs{}", Scenario::ALL.len(), if failures.is_empty() { String::new() } else { format!("; differ: {}", failures.join(", ")) }),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 8] = [
        ("exact oracle", exact_oracle),
        ("cross-sectional coverage", clt_tec),
        ("time-averaged contrast", clt_atec),
        ("stability RMSE ordering", stability_rmse),
        ("stability intervals", stability_ci),
        ("epsilon sensitivity", epsilon_sensitivity),
        ("group size normality", group_size),
        ("thread determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let v = check();
        failed += usize::from(!v.pass);
        println!("criterion {} ({name}): {} | {}", i + 1, if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
