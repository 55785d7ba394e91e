use mwclust::dgp::{Component, DgpSpec, Family, Grid, Schedule, Variant};
use mwclust::stein::{decay_trace, kolmogorov_bound, wasserstein_bound, BoundMethod};

fn skewed_additive(m: usize) -> DgpSpec {
    DgpSpec::new(Variant::AdditiveRe, Grid::Balanced { m, cell_size: 1 })
        .with_components(
            Component::new(Family::CenteredExponential, Schedule::constant(1.0)),
            Component::new(Family::Rademacher, Schedule::Linear { base: 0.7 }),
            Component::new(Family::CenteredExponential, Schedule::constant(0.5)),
        )
        .with_seed(41)
}

fn agree(label: &str, analytic: f64, mc: f64, se: f64) {
    assert!((analytic - mc).abs() <= 3.0 * se, "{label}: analytic {analytic} vs monte carlo {mc} ± {se}");
}

#[test]
fn analytic_and_monte_carlo_terms_agree() {
    let spec = skewed_additive(6);
    let a = wasserstein_bound(&spec, BoundMethod::Analytic).unwrap();
    let mc = wasserstein_bound(&spec, BoundMethod::MonteCarlo { reps: 40_000 }).unwrap();
    assert_eq!(mc.method, "monte-carlo");
    assert_eq!(mc.reps, Some(40_000));
    agree("third", a.term_third, mc.term_third, mc.term_third_se.unwrap());
    agree("var", a.term_var, mc.term_var, mc.term_var_se.unwrap());
    assert_eq!(a.sigma2, mc.sigma2);
}

#[test]
fn iid_exponential_terms_have_closed_forms() {
    // with 𝒩*_i = {i}: Σ_i E[X_i³] / n^{3/2} = 2/√n and Var(Σ X_i²) = n (E X⁴ − 1) = 8n
    let m = 6;
    let n = (m * m) as f64;
    let spec = DgpSpec::new(Variant::IidConservative, Grid::Balanced { m, cell_size: 1 }).with_components(
        Component::zero(),
        Component::zero(),
        Component::new(Family::CenteredExponential, Schedule::constant(1.0)),
    );
    let r = wasserstein_bound(&spec, BoundMethod::Analytic).unwrap();
    assert!((r.term_third - 2.0 / n.sqrt()).abs() < 1e-12);
    let var_term = (2.0 / std::f64::consts::PI).sqrt() * (8.0 * n).sqrt() / n;
    assert!((r.term_var - var_term).abs() < 1e-12);
    let mc = wasserstein_bound(&spec, BoundMethod::MonteCarlo { reps: 40_000 }).unwrap();
    agree("iid var", r.term_var, mc.term_var, mc.term_var_se.unwrap());
}

#[test]
fn rademacher_fourth_cumulant_enters_variance_term() {
    let spec = DgpSpec::new(Variant::AdditiveRe, Grid::Balanced { m: 5, cell_size: 2 })
        .with_components(
            Component::new(Family::Rademacher, Schedule::constant(1.0)),
            Component::new(Family::Rademacher, Schedule::constant(1.0)),
            Component::new(Family::Rademacher, Schedule::constant(1.0)),
        )
        .with_seed(8);
    let a = wasserstein_bound(&spec, BoundMethod::Analytic).unwrap();
    assert_eq!(a.term_third, 0.0);
    let mc = wasserstein_bound(&spec, BoundMethod::MonteCarlo { reps: 40_000 }).unwrap();
    agree("rademacher var", a.term_var, mc.term_var, mc.term_var_se.unwrap());
}

#[test]
fn skewed_additive_bound_decays() {
    let trace = decay_trace(&skewed_additive(4), &[4, 8, 16, 32], BoundMethod::Analytic).unwrap();
    let d: Vec<f64> = trace.iter().map(|(_, r)| r.d_w_bound).collect();
    assert!(d.windows(2).all(|w| w[1] < w[0]), "{d:?}");
    assert!(trace.iter().all(|(_, r)| r.term_third > 0.0));
    for (m, r) in &trace {
        assert_eq!(r.n, m * m);
        assert_eq!(r.d_k_bound, kolmogorov_bound(r.d_w_bound).unwrap());
    }
}

#[test]
fn interactive_bound_does_not_vanish() {
    let spec = DgpSpec::new(Variant::InteractiveChaos, Grid::Balanced { m: 4, cell_size: 1 })
        .with_components(Component::gaussian(1.0), Component::gaussian(1.0), Component::zero())
        .with_seed(2);
    let small = wasserstein_bound(&spec, BoundMethod::MonteCarlo { reps: 2000 }).unwrap();
    let large = wasserstein_bound(&spec.clone().with_m(32), BoundMethod::MonteCarlo { reps: 2000 }).unwrap();
    assert!(large.d_w_bound > 0.5 * small.d_w_bound, "M=4 {} vs M=32 {}", small.d_w_bound, large.d_w_bound);
}

#[test]
fn monte_carlo_is_reproducible() {
    let spec = skewed_additive(5);
    let a = wasserstein_bound(&spec, BoundMethod::MonteCarlo { reps: 300 }).unwrap();
    let b = wasserstein_bound(&spec, BoundMethod::MonteCarlo { reps: 300 }).unwrap();
    assert_eq!(a, b);
    let c = mwclust::mc::with_threads(Some(1), || wasserstein_bound(&spec, BoundMethod::MonteCarlo { reps: 300 }))
        .unwrap()
        .unwrap();
    assert_eq!(a, c);
}
