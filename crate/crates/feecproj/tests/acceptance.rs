//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use feecproj::config::RunConfig;
use feecproj::ledger::SAFETY;
use feecproj::problem::Problem;
use feecproj::study::{boundedness_study, StudyBands};
use feecproj::verify::{
    calculus_checks, epsilon_slope_checks, geometry_checks, mollifier_checks, projection_checks, space_checks, Check,
};
use std::process::Command;
use std::time::{Duration, Instant};

struct Outcome {
    pass: bool,
    detail: String,
}

/// All checks named in `names` (prefix match) must be present and pass.
fn require(checks: &[Check], names: &[&str]) -> Outcome {
    let mut missing = Vec::new();
    let mut failed = Vec::new();
    for name in names {
        let hits: Vec<&Check> = checks.iter().filter(|c| c.name.starts_with(name)).collect();
        if hits.is_empty() {
            missing.push(name.to_string());
        }
        failed.extend(hits.iter().filter(|c| !c.pass).map(|c| format!("{}={:e} ({})", c.name, c.value, c.bound)));
    }
    let worst = checks
        .iter()
        .filter(|c| names.iter().any(|n| c.name.starts_with(n)))
        .map(|c| format!("{}={:.3e}", c.name, c.value))
        .collect::<Vec<_>>()
        .join(" ");
    Outcome {
        pass: missing.is_empty() && failed.is_empty(),
        detail: if !missing.is_empty() {
            format!("missing checks: {}", missing.join(", "))
        } else if !failed.is_empty() {
            failed.join("; ")
        } else {
            worst
        },
    }
}

fn within(o: Outcome, elapsed: Duration, limit: Duration) -> Outcome {
    let pass = o.pass && elapsed <= limit;
    Outcome {
        pass,
        detail: format!("{} [{:.1}s, limit {}s]", o.detail, elapsed.as_secs_f64(), limit.as_secs()),
    }
}

fn failed(e: impl std::fmt::Display) -> Outcome {
    Outcome {
        pass: false,
        detail: format!("error: {e}"),
    }
}

fn reference() -> (RunConfig, Problem) {
    let cfg = RunConfig::default();
    let pb = cfg.problem().expect("reference problem builds");
    (cfg, pb)
}

fn criterion_calculus(cfg: &RunConfig) -> (Outcome, Outcome) {
    let start = Instant::now();
    let checks = calculus_checks(&cfg.thresholds, cfg.seed);
    let exact = within(
        require(&checks, &["d_squared", "leibniz", "pullback_functoriality", "unisolvence"]),
        start.elapsed(),
        Duration::from_secs(30),
    );
    (exact, require(&checks, &["stokes", "duality"]))
}

fn criterion_projection(cfg: &RunConfig, pb: &Problem) -> Outcome {
    let names = ["idempotent", "pi_commutes", "q_commutes", "norm_below_ceiling", "neumann_norm"];
    let limit = Duration::from_secs(600);
    let start = Instant::now();
    let square = match projection_checks(pb, &cfg.thresholds, cfg.seed, cfg.quad_degree) {
        Ok(c) => within(require(&c, &names), start.elapsed(), limit),
        Err(e) => return failed(e),
    };
    let bricks_cfg = RunConfig {
        domain: "crossed_bricks".into(),
        level: 0,
        ..cfg.clone()
    };
    let start = Instant::now();
    let bricks = match bricks_cfg
        .problem()
        .and_then(|b| projection_checks(&b, &bricks_cfg.thresholds, cfg.seed, cfg.quad_degree))
    {
        Ok(c) => within(require(&c, &names), start.elapsed(), limit),
        Err(e) => return failed(e),
    };
    Outcome {
        pass: square.pass && bricks.pass,
        detail: format!("unit_square: {} | crossed_bricks: {}", square.detail, bricks.detail),
    }
}

fn criterion_boundedness(cfg: &RunConfig) -> Outcome {
    let spec = cfg.problem_spec();
    let bands = StudyBands::from_thresholds(&cfg.thresholds);
    let mut pass = true;
    let mut detail = Vec::new();
    for k in 0..3 {
        match boundedness_study(&spec, &[0, 1, 2, 3], k, &bands) {
            Ok(s) => {
                let below = s.rows.iter().all(|r| r.pass);
                pass &= s.ratio_pass && below;
                detail.push(format!("k{k}: max ratio {:.4}, all below ceiling {below}", s.max_ratio));
            }
            Err(e) => return failed(e),
        }
    }
    Outcome {
        pass,
        detail: detail.join("; "),
    }
}

fn criterion_determinism() -> Outcome {
    let dir = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return failed(e),
    };
    let mut reports = Vec::new();
    for run in 0..2 {
        let path = dir.path().join(format!("report{run}.json"));
        let status = Command::new(env!("CARGO_BIN_EXE_feecproj"))
            .args(["verify", "all", "--seed", "7", "--out"])
            .arg(&path)
            .output();
        match status {
            Ok(o) if o.status.code() == Some(0) => {}
            Ok(o) => return failed(format!("exit {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr))),
            Err(e) => return failed(e),
        }
        match std::fs::read(&path) {
            Ok(bytes) => reports.push(bytes),
            Err(e) => return failed(e),
        }
    }
    Outcome {
        pass: reports[0] == reports[1],
        detail: format!("{} and {} bytes", reports[0].len(), reports[1].len()),
    }
}

fn criterion_ledger(pb: &Problem) -> Outcome {
    let l = &pb.ledger;
    let m = &l.measured;
    let mut bad = Vec::new();
    if !l.recomputes() {
        bad.push("derived constants do not recompute".to_string());
    }
    for d in &l.derived {
        if d.c_q != m.c_q(d.k, l.eps) || d.c_e != m.c_e(d.k, l.eps) || d.c_pi != m.c_pi(d.k, l.eps) {
            bad.push(format!("k{} constants differ from their formulas", d.k));
        }
    }
    let smallest = m
        .epsilon_bounds()
        .into_iter()
        .min_by(|a, b| a.bound.total_cmp(&b.bound))
        .expect("four conditions");
    if l.eps_max != SAFETY * smallest.bound {
        bad.push(format!("eps_max {} is not {} times {}", l.eps_max, SAFETY, smallest.bound));
    }
    if l.binding.is_empty() || l.binding != smallest.condition {
        bad.push(format!("binding '{}' is not '{}'", l.binding, smallest.condition));
    }
    Outcome {
        pass: bad.is_empty(),
        detail: if bad.is_empty() {
            format!("eps_max {:e}, binding {}", l.eps_max, l.binding)
        } else {
            bad.join("; ")
        },
    }
}

fn main() {
    // `cargo test -- --list` and filters come through here too.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let (cfg, pb) = reference();
    let t = &cfg.thresholds;
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();

    let (exact, stokes) = criterion_calculus(&cfg);
    results.push((1, "exact calculus", exact));
    results.push((2, "Stokes and duality", stokes));

    results.push((
        3,
        "interpolator",
        match space_checks(&pb, t, cfg.seed) {
            Ok(c) => require(&c, &["interpolation_idempotent", "interpolation_commutes"]),
            Err(e) => failed(e),
        },
    ));
    results.push((
        4,
        "mollifier",
        match mollifier_checks(&pb, t, cfg.seed) {
            Ok(c) => require(&c, &["constant_zero_form", "constant_one_form", "commutes_with_d_fe", "locality"]),
            Err(e) => failed(e),
        },
    ));
    results.push((
        5,
        "extension",
        match geometry_checks(&pb, t, cfg.seed) {
            Ok(c) => require(&c, &["extension_commutes_weakly", "extension_local_bound"]),
            Err(e) => failed(e),
        },
    ));
    results.push((6, "projection", criterion_projection(&cfg, &pb)));

    let start = Instant::now();
    let slope = match epsilon_slope_checks(&pb, t, cfg.seed) {
        Ok(c) => require(&c, &["epsilon_slope", "interpolation_error_ceiling"]),
        Err(e) => failed(e),
    };
    results.push((7, "epsilon scaling", within(slope, start.elapsed(), Duration::from_secs(900))));
    results.push((8, "uniform boundedness", criterion_boundedness(&cfg)));
    results.push((9, "determinism", criterion_determinism()));
    results.push((10, "constant ledger", criterion_ledger(&pb)));

    let mut all = true;
    for (n, name, o) in &results {
        println!("criterion {n:>2} {}: {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        all &= o.pass;
    }
    if !all {
        std::process::exit(1);
    }
}
