use num_complex::Complex64;
use proptest::prelude::*;
use twotime_core::correlators::{forward_g_regression, linear_grid, regress, regression_series, InitialState, Method, SystemSpec};
use twotime_core::dynamics::{DampingChannel, QuadraticHamiltonian};
use twotime_core::hilbert::{CoherentAmplitude, FockCutoff};
use twotime_core::phasespace::{
    g2_via_phase_space, g_via_q_two_variable, phase_space_moment, phase_space_series, IntegrationConfig, Observable, Ordering,
};
use twotime_core::Error;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn closed(h: QuadraticHamiltonian, initial: InitialState) -> SystemSpec {
    SystemSpec::new(h, DampingChannel::closed(), initial, FockCutoff::new(40).unwrap())
}

#[test]
fn cat_like_superposition_through_both_q_routes() {
    let h = QuadraticHamiltonian::new(1.0, c(0.1, 0.05), c(0.2, -0.1)).unwrap();
    let sys = closed(h, InitialState::Superposition(vec![(c(1.0, 0.0), 0), (c(0.0, 0.5), 2), (c(0.3, 0.0), 3)])).with_t_prepare(0.4);
    let tau = [0.0, 0.5, 1.2];
    let reg = regress(&sys, &tau).unwrap();
    let cfg = IntegrationConfig::default();
    for m in [Method::QTwoVariable, Method::QDerivative] {
        for (k, &tv) in tau.iter().enumerate() {
            let g = phase_space_moment(&sys, 0.4, tv, m, Observable::G(Ordering::Delayed), &cfg, 12).unwrap();
            assert!((g.value - reg.g[k]).norm() < 1e-6, "{m} τ={tv}: {} vs {}", g.value, reg.g[k]);
            let g2 = phase_space_moment(&sys, 0.4, tv, m, Observable::G2, &cfg, 12).unwrap();
            assert!((g2.value.re - reg.g2_unnormalized[k]).abs() < 1e-6, "{m} G2 τ={tv}");
        }
    }
}

#[test]
fn forward_ordering_matches_regression() {
    let h = QuadraticHamiltonian::new(1.0, c(0.15, 0.0), c(0.3, 0.0)).unwrap();
    let sys = closed(h, InitialState::Coherent(CoherentAmplitude::from_parts(0.5, -0.3).unwrap()));
    let tau = [0.3, 0.9];
    let fwd = forward_g_regression(&sys, &tau).unwrap();
    for (k, &tv) in tau.iter().enumerate() {
        for m in [Method::Propagator, Method::QTwoVariable, Method::QDerivative] {
            let g = phase_space_moment(&sys, 0.0, tv, m, Observable::G(Ordering::Forward), &IntegrationConfig::default(), 12).unwrap();
            assert!((g.value - fwd[k]).norm() < 1e-8, "{m}");
        }
    }
}

#[test]
fn q_two_variable_monte_carlo_within_three_sigma() {
    let sys = closed(QuadraticHamiltonian::harmonic(1.0), InitialState::Coherent(CoherentAmplitude::from_parts(1.0, 0.0).unwrap()));
    let exact = regress(&sys, &[0.7]).unwrap().g[0];
    let est = g_via_q_two_variable(&sys, 0.0, 0.7, &IntegrationConfig::monte_carlo(200_000, 11)).unwrap();
    assert!(est.std_error > 0.0);
    assert!((est.value - exact).norm() < 3.0 * est.std_error, "{est:?} vs {exact}");
}

#[test]
fn squeezed_vacuum_g2_zero_against_regression() {
    let sys = closed(QuadraticHamiltonian::new(1.0, c(0.2, 0.0), c(0.0, 0.0)).unwrap(), InitialState::Fock(0))
        .with_t_prepare(1.0)
        .with_cutoff(FockCutoff::new(60).unwrap());
    let reg = regression_series(&sys, &[0.0, 0.5]).unwrap();
    for m in [Method::Propagator, Method::QTwoVariable, Method::QDerivative] {
        let g2 = g2_via_phase_space(&sys, 1.0, 0.0, m, &IntegrationConfig::default()).unwrap();
        assert!((g2.value.re - reg.g2[0]).abs() < 1e-5, "{m}: {} vs {}", g2.value.re, reg.g2[0]);
    }
    // squeezed vacuum is strongly bunched
    assert!(reg.g2[0] > 3.0);
}

#[test]
fn phase_space_rejects_damped_and_zero_mean() {
    let mut sys = closed(QuadraticHamiltonian::harmonic(1.0), InitialState::Fock(0));
    let tau = linear_grid(0.0, 1.0, 3);
    assert!(matches!(
        phase_space_series(&sys, &tau, Method::QDerivative, &IntegrationConfig::default(), 12),
        Err(Error::ZeroDenominator(_))
    ));
    sys.channel = DampingChannel::new(1.0, 0.0).unwrap();
    assert!(matches!(
        phase_space_series(&sys, &tau, Method::QTwoVariable, &IntegrationConfig::default(), 12),
        Err(Error::Unsupported(_))
    ));
}

#[test]
fn quadrature_converges_on_doubling_nodes() {
    let h = QuadraticHamiltonian::new(1.0, c(0.2, 0.0), c(0.5, 0.0)).unwrap();
    let sys = closed(h, InitialState::Coherent(CoherentAmplitude::from_parts(0.8, 0.2).unwrap())).with_t_prepare(0.7);
    for m in [Method::Propagator, Method::QTwoVariable, Method::QDerivative] {
        let a = phase_space_moment(&sys, 0.7, 0.9, m, Observable::G2, &IntegrationConfig::quadrature(24), 18).unwrap();
        let b = phase_space_moment(&sys, 0.7, 0.9, m, Observable::G2, &IntegrationConfig::quadrature(48), 18).unwrap();
        assert!((a.value - b.value).norm() < 1e-9, "{m}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn propagator_equals_regression_for_random_coherent_states(
        re in -1.2f64..1.2, im in -1.2f64..1.2, eta in 0.0f64..0.5, tau in 0.0f64..3.0,
    ) {
        let h = QuadraticHamiltonian::new(1.0, c(0.0, 0.0), c(eta, 0.0)).unwrap();
        let sys = closed(h, InitialState::Coherent(CoherentAmplitude::from_parts(re, im).unwrap()));
        let reg = regress(&sys, &[tau]).unwrap();
        let g = phase_space_moment(&sys, 0.0, tau, Method::Propagator, Observable::G(Ordering::Delayed), &IntegrationConfig::default(), 12).unwrap();
        prop_assert!((g.value - reg.g[0]).norm() < 1e-7);
        let g2 = phase_space_moment(&sys, 0.0, tau, Method::Propagator, Observable::G2, &IntegrationConfig::default(), 12).unwrap();
        prop_assert!((g2.value.re - reg.g2_unnormalized[0]).abs() < 1e-7);
    }
}
