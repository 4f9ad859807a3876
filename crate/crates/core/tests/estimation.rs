use volcast_core::garch::{fit, log_likelihood_at, Family, FitOptions, FitResult, GarchParams, GarchSpec};
use volcast_core::simulator::{simulate, SimConfig};
use volcast_core::timeseries::ReturnSeries;

fn garch11(omega: f64, a: f64, b: f64) -> GarchParams {
    GarchParams { mu: 0.0, omega, alpha: vec![a], beta: vec![b], gamma: vec![] }
}

fn sim(spec: GarchSpec, params: &GarchParams, n: usize, seed: u64) -> ReturnSeries {
    simulate(&SimConfig::new(spec, params.clone(), n, 1000, seed).unwrap()).unwrap().returns
}

/// `theta_i * dl/dtheta_i / |l|` by central differences.
fn relative_gradient(fit: &FitResult, returns: &[f64]) -> Vec<f64> {
    let theta = fit.params.to_vec();
    let l = fit.log_likelihood;
    (0..theta.len())
        .map(|i| {
            if theta[i] == 0.0 {
                return 0.0;
            }
            let h = 1e-6 * theta[i].abs();
            let at = |x: f64| {
                let mut t = theta.clone();
                t[i] = x;
                let p = GarchParams::from_vec(&fit.spec, &t).unwrap();
                log_likelihood_at(&fit.spec, &p, returns, fit.backcast).unwrap_or(f64::NEG_INFINITY)
            };
            let d = (at(theta[i] + h) - at(theta[i] - h)) / (2.0 * h);
            theta[i] * d / l.abs()
        })
        .collect()
}

#[test]
fn recovers_garch11() {
    let spec = GarchSpec::garch(1, 1).unwrap();
    let truth = garch11(1e-5, 0.10, 0.85);
    let mut hits = 0;
    let reps = 20;
    for seed in 0..reps {
        let s = sim(spec, &truth, 5000, 100 + seed);
        let f = fit(&s, &spec, &FitOptions::default()).unwrap();
        if (f.params.alpha[0] - 0.10).abs() <= 0.05 && (f.params.beta[0] - 0.85).abs() <= 0.05 {
            hits += 1;
        }
    }
    assert!(hits >= 18, "{hits}/{reps}");
}

#[test]
fn first_order_conditions_hold() {
    let cases = [
        (GarchSpec::garch(1, 1).unwrap(), garch11(1e-5, 0.10, 0.85)),
        (
            GarchSpec::garch(2, 1).unwrap(),
            GarchParams { mu: 0.0004, omega: 4e-6, alpha: vec![0.08], beta: vec![0.5, 0.38], gamma: vec![] },
        ),
        (
            GarchSpec::egarch(1, 1, 1).unwrap(),
            GarchParams { mu: 0.0003, omega: -0.35, alpha: vec![0.12], beta: vec![0.96], gamma: vec![-0.12] },
        ),
    ];
    for (k, (spec, truth)) in cases.iter().enumerate() {
        let s = sim(*spec, truth, 3000, 7 + k as u64);
        let f = fit(&s, spec, &FitOptions::default()).unwrap();
        assert!(f.converged);
        let g = relative_gradient(&f, s.values());
        let bound = if spec.family == Family::Garch { 1e-6 } else { 1e-4 };
        for (name, gi) in spec.param_names().iter().zip(&g) {
            assert!(gi.abs() < bound, "{} {name}: {gi:e}", spec.label());
        }
    }
}

#[test]
fn reported_likelihood_matches_reconstruction() {
    let spec = GarchSpec::egarch(1, 1, 1).unwrap();
    let truth = GarchParams { mu: 0.0, omega: -0.3, alpha: vec![0.1], beta: vec![0.97], gamma: vec![-0.1] };
    let s = sim(spec, &truth, 2000, 3);
    let f = fit(&s, &spec, &FitOptions::default()).unwrap();
    let n = s.len() as f64;
    let manual = -0.5 * n * (2.0 * std::f64::consts::PI).ln()
        - 0.5
            * s.values()
                .iter()
                .zip(&f.conditional_variance_path)
                .map(|(r, v)| v.ln() + (r - f.params.mu).powi(2) / v)
                .sum::<f64>();
    assert!((manual - f.log_likelihood).abs() < 1e-8 * manual.abs().max(1.0));
    for (z, (r, v)) in f.std_residuals.iter().zip(s.values().iter().zip(&f.conditional_variance_path)) {
        assert!((z - (r - f.params.mu) / v.sqrt()).abs() < 1e-12);
    }
    assert!((f.aic - (2.0 * 5.0 - 2.0 * f.log_likelihood)).abs() < 1e-9);
}

#[test]
fn refit_on_generated_data_is_self_consistent() {
    let spec = GarchSpec::garch(1, 1).unwrap();
    let s = sim(spec, &garch11(2e-6, 0.08, 0.9), 4000, 41);
    let first = fit(&s, &spec, &FitOptions::default()).unwrap();
    let regen = sim(spec, &first.params, 4000, 42);
    let backcast = {
        let v = regen.values();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
    };
    let at_truth = log_likelihood_at(&spec, &first.params, regen.values(), backcast).unwrap();
    let refit = fit(&regen, &spec, &FitOptions::default()).unwrap();
    assert!(refit.log_likelihood >= at_truth - 1e-9);
    assert!(((refit.log_likelihood - at_truth) / at_truth).abs() < 1e-3);
}

#[test]
fn mean_shift_moves_only_mu() {
    let spec = GarchSpec::garch(1, 1).unwrap();
    let s = sim(spec, &garch11(1e-5, 0.10, 0.85), 3000, 5);
    let c = 0.002;
    let shifted = ReturnSeries::new("shifted", s.dates().to_vec(), s.values().iter().map(|r| r + c).collect()).unwrap();
    let a = fit(&s, &spec, &FitOptions::default()).unwrap();
    let b = fit(&shifted, &spec, &FitOptions::default()).unwrap();
    assert!((b.params.mu - a.params.mu - c).abs() < 1e-4);
    assert!((b.params.omega - a.params.omega).abs() < 1e-4);
    assert!((b.params.alpha[0] - a.params.alpha[0]).abs() < 1e-4);
    assert!((b.params.beta[0] - a.params.beta[0]).abs() < 1e-4);
    assert!((a.log_likelihood - b.log_likelihood).abs() < 1e-4 * a.log_likelihood.abs());
}

#[test]
fn fits_are_deterministic() {
    let spec = GarchSpec::egarch(2, 1, 1).unwrap();
    let truth = GarchParams { mu: 0.0, omega: -0.4, alpha: vec![0.15], beta: vec![0.6, 0.36], gamma: vec![-0.1] };
    let s = sim(spec, &truth, 1500, 9);
    let opts = FitOptions { seed: 17, ..Default::default() };
    let a = fit(&s, &spec, &opts).unwrap();
    let b = fit(&s, &spec, &opts).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.log_likelihood.to_bits(), b.log_likelihood.to_bits());
}
