mod common;

use proptest::prelude::*;
use proptest::strategy::ValueTree;
use tripsyn_core::dynamics::{simulate, NoEvents, SimOptions, StateVector};
use tripsyn_core::network::{
    astro_coupling_terms, build_network, run_protocol, NetworkParams, ProtocolSpec, RunOptions, TargetPatch,
};
use tripsyn_core::stability::{
    check_positivity, check_positivity_with, jacobian, AdmissibleInput, CheckOptions,
};
use tripsyn_core::tripartite::{
    astrocyte_derivative, i_astro, i_astro_smooth, j_glu, AstrocyteParams, AstrocyteState, JGluMode,
    I_ASTRO_FIT_A, I_ASTRO_FIT_D,
};

fn state() -> impl Strategy<Value = [f64; 3]> {
    (0.0..80.0f64, 0.0..40.0f64, 0.0..=1.0f64).prop_map(|(a, b, c)| [a, b, c])
}

#[test]
fn defaults_match_parameter_table() {
    let p = AstrocyteParams::default();
    let expected = [
        (p.tau_ip3, common::TAU_IP3),
        (p.ip3_star, common::IP3_STAR),
        (p.v1, common::V1),
        (p.v2, common::V2),
        (p.v3, common::V3),
        (p.v4, common::V4),
        (p.v6, common::V6),
        (p.k1, common::K1),
        (p.k2, common::K2),
        (p.k3, common::K3),
        (p.k4, common::K4),
        (p.c0, common::C0),
        (p.c1, common::C1),
        (p.d1, common::D1),
        (p.d2, common::D2),
        (p.d3, common::D3),
        (p.d5, common::D5),
        (p.a2, common::A2),
        (p.alpha, common::ALPHA),
        (p.a_glu, common::A_GLU),
    ];
    for (i, (got, want)) in expected.iter().enumerate() {
        assert!((got - want).abs() <= 1e-15 * want.abs(), "field {i}: {got} vs {want}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rhs_matches_reference(x in state(), u in 0.0..5.0f64) {
        let got = astrocyte_derivative(&AstrocyteState::new(x[0], x[1], x[2]), u, &AstrocyteParams::default()).to_array();
        let want = common::rhs(x, u);
        for i in 0..3 {
            prop_assert!((got[i] - want[i]).abs() <= 1e-12 * (1.0 + want[i].abs()), "{i}: {got:?} vs {want:?}");
        }
    }

    #[test]
    fn j_glu_stays_in_range(g in -10.0..10.0f64, k_s in 1e-3..1.0f64) {
        let p = AstrocyteParams::default();
        for mode in [JGluMode::Sharp, JGluMode::Smooth { k_s }] {
            let j = j_glu(g, &p, mode);
            prop_assert!((0.0..=p.a_glu).contains(&j));
        }
    }

    #[test]
    fn i_astro_monotone(a in 0.0..2.0f64, b in 0.0..2.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(i_astro(lo) >= 0.0);
        prop_assert!(i_astro(lo) <= i_astro(hi));
        prop_assert!(i_astro_smooth(hi) <= I_ASTRO_FIT_A + I_ASTRO_FIT_D);
        if hi - lo > 1e-6 && hi < 0.5 {
            prop_assert!(i_astro_smooth(lo) < i_astro_smooth(hi));
        }
        prop_assert_eq!(i_astro(a), common::i_astro(a));
    }

    #[test]
    fn orthant_is_forward_invariant(x in state(), u in 0.0..=5.0f64) {
        let p = AstrocyteParams::default();
        let traj = simulate(
            |_, y: &[f64], dy: &mut [f64]| {
                dy.copy_from_slice(&astrocyte_derivative(&AstrocyteState::from_slice(y), u, &p).to_array())
            },
            NoEvents,
            StateVector::from(x),
            vec!["x1".into(), "x2".into(), "x3".into()],
            &SimOptions::new(5.0, 1e-3).with_stride(10),
        ).unwrap();
        for s in &traj.samples {
            prop_assert!(s.iter().all(|v| *v >= -1e-9), "{s:?}");
            prop_assert!(s[2] <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn coupling_exchange_sums_to_zero(values in prop::collection::vec((0.0..40.0f64, 0.0..20.0f64, 0.0..=1.0f64), 36)) {
        let topo = build_network(&NetworkParams { n_neurons: 144, n_astrocytes: 36, synapses_per_neuron: 6, ..Default::default() }).unwrap();
        let states: Vec<_> = values.iter().map(|&(a, b, c)| AstrocyteState::new(a, b, c)).collect();
        let terms = astro_coupling_terms(&states, &topo, &AstrocyteParams::default()).unwrap();
        let (s1, s2) = terms.iter().fold((0.0, 0.0), |acc, t| (acc.0 + t.0, acc.1 + t.1));
        let scale: f64 = values.iter().map(|v| v.0 + v.1).sum::<f64>().max(1.0);
        prop_assert!(s1.abs() <= 1e-12 * scale && s2.abs() <= 1e-12 * scale, "{s1} {s2}");
    }
}

#[test]
fn finite_difference_jacobian_matches_analytic() {
    let p = AstrocyteParams::default();
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    for _ in 0..20 {
        let x = state().new_tree(&mut runner).unwrap().current();
        let x = [x[0] + 0.01, x[1] + 0.01, x[2]];
        let fd = jacobian(&p, &AstrocyteState::new(x[0], x[1], x[2]), 2.0).unwrap();
        let an = common::analytic_jacobian(x);
        for i in 0..3 {
            for j in 0..3 {
                let err = (fd[i][j] - an[i][j]).abs();
                assert!(err <= 1e-4 * (1.0 + an[i][j].abs()), "J[{i}][{j}] at {x:?}: {} vs {}", fd[i][j], an[i][j]);
            }
        }
    }
}

#[test]
fn positivity_check_detects_broken_dynamics() {
    let p = AstrocyteParams::default();
    let input = AdmissibleInput::RandomSwitching { max: p.a_glu, hold: 1.0 };
    let opts = CheckOptions { trials: 5, horizon: 10.0, ..Default::default() };
    assert!(check_positivity(&p, &input, &opts).unwrap().passed);

    // A constant leak on Ca²⁺ pushes it through zero.
    let leaky = |s: &AstrocyteState, u: f64, p: &AstrocyteParams| {
        let mut d = astrocyte_derivative(s, u, p);
        d.x2 -= 1.0;
        d
    };
    let verdict = check_positivity_with(leaky, &p, &input, &opts).unwrap();
    assert!(!verdict.passed);
    let cx = verdict.counterexample.expect("counterexample");
    assert!(cx.state.x2 < 0.0 && cx.time > 0.0);
}

#[test]
fn positivity_verdict_is_seed_deterministic() {
    let p = AstrocyteParams::default();
    let input = AdmissibleInput::RandomSwitching { max: p.a_glu, hold: 0.5 };
    let opts = CheckOptions { trials: 3, horizon: 5.0, seed: 11, ..Default::default() };
    let a = check_positivity(&p, &input, &opts).unwrap();
    let b = check_positivity(&p, &input, &opts).unwrap();
    assert_eq!(a, b);
}

#[test]
fn small_network_is_seed_deterministic() {
    let params = NetworkParams { n_neurons: 144, n_astrocytes: 36, synapses_per_neuron: 8, seed: 3, ..Default::default() };
    let proto = ProtocolSpec {
        t_stim: 0.05,
        t_delay: 0.1,
        t_recall: 0.05,
        target: TargetPatch { row: 2, col: 2, rows: 4, cols: 4 },
        ..Default::default()
    };
    let opts = RunOptions { seed: 3, ..Default::default() };
    let run = || run_protocol(&build_network(&params).unwrap(), &proto, &opts).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    assert!(!a.spikes.is_empty());
    assert!(a.audit.positive && a.audit.within_bound);

    let other = run_protocol(&build_network(&NetworkParams { seed: 4, ..params.clone() }).unwrap(), &proto, &opts).unwrap();
    assert_ne!(a.spikes, other.spikes);
}

#[test]
fn topology_depends_only_on_seed() {
    let p = NetworkParams { seed: 9, ..Default::default() };
    let a = build_network(&p).unwrap();
    let b = build_network(&p).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.synapses.len(), 1296 * 28);
    assert_eq!(a.excitatory.iter().filter(|e| !**e).count(), 259);
    assert_eq!(a.n_astrocytes(), 324);
}
