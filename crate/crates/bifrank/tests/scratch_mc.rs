//! Scratch calibration for the matrix-completion experiment. Not part of
//! the suite; deleted once the instance is pinned.

use bifrank::problems::matcomp::{CompletionMetrics, L1Smoothing, MatrixCompletionProblem};
use bifrank::{
    run_sbfw, run_sfw, Algorithm, ConstraintSet, Convexity, RngStream, ScheduleOverrides,
    SolverConfig,
};

fn instance(seed: u64) -> (MatrixCompletionProblem, bifrank::Point) {
    let mut rng = RngStream::new(seed, "mc-instance");
    MatrixCompletionProblem::synthetic(50, 5, 0.5, 0.8, &mut rng).unwrap()
}

fn curve(records: &[bifrank::RunRecord]) -> Vec<(u64, f64)> {
    records.iter().map(|r| (r.iteration, r.normalized_error.unwrap())).collect()
}

fn describe(name: &str, c: &[(u64, f64)]) {
    let last = c.last().unwrap();
    let (tmin, emin) = c.iter().fold((0u64, f64::INFINITY), |acc, &(t, e)| {
        if e < acc.1 {
            (t, e)
        } else {
            acc
        }
    });
    let at = |t0: u64| c.iter().find(|&&(t, _)| t >= t0).map(|&(_, e)| e).unwrap_or(f64::NAN);
    let last5 = at(1500);
    let improve = (last5 - last.1) / last5.max(1e-12);
    println!(
        "{name}: final={:.4} min={emin:.4}@t={tmin} t200={:.4} t500={:.4} t1000={:.4} t1500={:.4} last500impr={:.3}",
        last.1,
        at(200),
        at(500),
        at(1000),
        at(1500),
        improve
    );
}

fn config(alg: Algorithm, seed: u64) -> SolverConfig {
    let mut c = SolverConfig::new(alg, Convexity::Convex, 2000, seed);
    c.record_every = 50;
    c
}

#[test]
fn scan() {
    for seed in 1..=3u64 {
        let (prob, truth) = instance(seed);
        let set = ConstraintSet::nuclear_ball(prob.radius(), 50, 50).unwrap();
        println!("--- seed {seed} (radius {:.2}, omega {})", prob.radius(), prob.omega().len());

        let met = CompletionMetrics::direct(&prob, truth.clone()).unwrap();
        let out = run_sfw(&prob.without_denoising(), &set, &met, &config(Algorithm::Sfw, seed), None)
            .unwrap();
        assert!(out.aborted.is_none(), "sfw aborted: {:?}", out.aborted);
        describe("sfw           ", &curve(&out.records));

        // (label, lambda1, lambda2, smoothing, k override, delta override)
        let variants: Vec<(&str, f64, f64, L1Smoothing, Option<u64>, Option<f64>)> = vec![
            ("sbfw l.05/.05 theory", 0.05, 0.05, L1Smoothing::Subgradient, None, None),
            ("sbfw l1e-3/5e-4 k20 d2", 1e-3, 5e-4, L1Smoothing::Subgradient, Some(20), Some(2.0)),
            ("sbfw l5e-4/5e-4 k20 d5", 5e-4, 5e-4, L1Smoothing::Subgradient, Some(20), Some(5.0)),
            ("sbfw l0/5e-4 k20 d5", 0.0, 5e-4, L1Smoothing::Subgradient, Some(20), Some(5.0)),
            ("sbfw l2e-3/1e-3 k20 d2", 2e-3, 1e-3, L1Smoothing::Subgradient, Some(20), Some(2.0)),
        ];
        for (label, l1, l2, sm, kov, dov) in variants {
            let p = prob.clone().with_weights(l1, l2).unwrap().with_smoothing(sm, 1e-3).unwrap();
            let m = CompletionMetrics::bilevel(&p, truth.clone()).unwrap();
            let mut c = config(Algorithm::Sbfw, seed);
            c.overrides = ScheduleOverrides { delta: dov, rho: None, eta: None, k: kov };
            let t0 = std::time::Instant::now();
            let out = run_sbfw(&p, &set, &m, &c, None, None).unwrap();
            let el = t0.elapsed().as_secs_f64();
            if let Some(msg) = &out.aborted {
                println!("{label}: ABORTED {msg}");
                continue;
            }
            print!("[{el:.1}s] ");
            describe(label, &curve(&out.records));
        }
    }
}
