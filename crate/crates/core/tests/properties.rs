use gauss_edf::corr::{Family, RhoSchedule};
use gauss_edf::mc::{run_edf_experiment, PathChoice, Scale, Target};
use gauss_edf::sampler::plan;
use gauss_edf::{ExperimentConfig, ModelSpec, ProcessGrid, RngStream, Theta};

fn equi(m: usize, rho: RhoSchedule) -> ModelSpec {
    ModelSpec::new(m, Family::Equi { rho })
}

#[test]
fn jackknife_se_is_calibrated() {
    // identity model: |z| > 2 should occur about 5% of the time
    let mut exceed = 0;
    let mut total = 0;
    for suite in 0..200u64 {
        let mut cfg = ExperimentConfig::new(ModelSpec::new(20, Family::Identity), 200, 10_000 + suite);
        cfg.grid = ProcessGrid::uniform(5).unwrap();
        cfg.compare_pairs = vec![[0.25, 0.25], [0.5, 0.75], [0.75, 0.75]];
        cfg.target = Target::ExactCov;
        let s = run_edf_experiment(&cfg, 1).unwrap();
        for p in &s.pairs {
            total += 1;
            if p.z.unwrap().abs() > 2.0 {
                exceed += 1;
            }
        }
    }
    let frac = exceed as f64 / total as f64;
    assert!((0.02..=0.10).contains(&frac), "fraction {frac}");
}

#[test]
fn exact_covariance_at_m50() {
    for (k, rho) in [0.05, -1.0 / 49.0].into_iter().enumerate() {
        let mut cfg = ExperimentConfig::new(equi(50, RhoSchedule::Fixed(rho)), 100_000, 300 + k as u64);
        cfg.grid = ProcessGrid::uniform(5).unwrap();
        cfg.target = Target::ExactCov;
        let s = run_edf_experiment(&cfg, 2).unwrap();
        assert!(s.max_abs_z.unwrap() < 4.0, "rho {rho}: {:?}", s.pairs);
    }
}

#[test]
fn variance_decreases_when_second_moment_vanishes() {
    let spec = |m| ModelSpec::new(m, Family::WeakRange { d: 2.0, rho: RhoSchedule::Fixed(0.5) });
    let mut prev: Option<Vec<f64>> = None;
    let mut prev_moment = f64::INFINITY;
    for (k, m) in [50usize, 200, 800].into_iter().enumerate() {
        let c = spec(m).build().unwrap();
        let d = gauss_edf::diagnostics::DiagnosticsReport::compute(&c, 0.1).unwrap();
        let moment = d.moment2 + (m as f64).recip();
        assert!(moment < prev_moment);
        prev_moment = moment;
        let mut cfg = ExperimentConfig::new(spec(m), 2000, 400 + k as u64);
        cfg.grid = ProcessGrid::new(vec![0.0, 0.25, 0.5, 0.75, 1.0]).unwrap();
        cfg.scale = Scale::Fixed(1.0);
        let s = run_edf_experiment(&cfg, 2).unwrap();
        let v = s.variance[1..4].to_vec();
        if let Some(p) = &prev {
            for (a, b) in p.iter().zip(&v) {
                assert!(b < a, "m = {m}: {v:?} vs {p:?}");
            }
        }
        prev = Some(v);
    }
}

#[test]
fn lln_for_absolute_value() {
    let target = (2.0 / std::f64::consts::PI).sqrt();
    let mut medians = Vec::new();
    for m in [1000usize, 10_000] {
        let c = equi(m, RhoSchedule::Power { coef: 1.0, exponent: -0.9 }).build().unwrap();
        let p = plan(&c).unwrap();
        let mut dev: Vec<f64> = (0..10)
            .map(|r| {
                let y = p.sample(&mut RngStream::new(500 + m as u64, r).rng());
                (y.iter().map(|v| v.abs()).sum::<f64>() / m as f64 - target).abs()
            })
            .collect();
        dev.sort_by(f64::total_cmp);
        medians.push(0.5 * (dev[4] + dev[5]));
    }
    assert!(medians[1] < medians[0], "{medians:?}");
}

#[test]
fn modified_path_variance_matches_centered_kernel() {
    let m = 2000;
    let mut cfg = ExperimentConfig::new(equi(m, RhoSchedule::PerPair { m_gamma: 10.0 }), 5000, 600);
    cfg.grid = ProcessGrid::uniform(5).unwrap();
    cfg.compare_pairs = vec![[0.5, 0.5]];
    cfg.path = PathChoice::Modified;
    cfg.target = Target::LimitKernel { theta: Theta::Finite(10.0) };
    let s = run_edf_experiment(&cfg, 2).unwrap();
    let p = &s.pairs[0];
    assert!(p.z.unwrap().abs() < 4.0, "{p:?}");
}
