mod common;

use bsquant::affine_lattice::{relabel, ActionAngleChart, ActionBox, ChartAtlas, ChartId, ChartTransition, IntMatrix, LatticeLabel};
use bsquant::shift_ops::{
    apply_word, chart_independence_check, loop_phase, loop_phase_with, lower, raise, transport_across_charts,
    RepresentativeRule, ShiftError, ShiftStep,
};
use bsquant::state_space::QuantumState;
use bsquant::tolerances::PHASE_TOL;
use bsquant::Complex64;
use common::{mat_vec, random_unimodular, ring_atlas, ring_loop, EAST};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn atlas(dim: usize) -> ChartAtlas {
    ChartAtlas::single_chart(1.0, ActionBox::cube(dim, 200.0).unwrap()).unwrap()
}

fn lab(n: Vec<i64>) -> LatticeLabel {
    LatticeLabel::new(ChartId(0), n)
}

fn state(dim: usize) -> impl Strategy<Value = QuantumState> {
    prop::collection::vec((prop::collection::vec(-50i64..=50, dim), -2.0f64..2.0, -2.0f64..2.0), 1..6).prop_map(move |v| {
        QuantumState::from_pairs(dim, v.into_iter().map(|(n, re, im)| (lab(n), Complex64::new(re, im)))).unwrap()
    })
}

fn direction(dim: usize) -> impl Strategy<Value = Vec<i64>> {
    prop::collection::vec(-5i64..=5, dim)
}

fn step() -> impl Strategy<Value = ShiftStep> {
    (any::<bool>(), direction(2)).prop_map(|(l, c)| if l { ShiftStep::lower(c) } else { ShiftStep::raise(c) })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn lower_and_raise_are_inverse(u in state(2), c in direction(2)) {
        let a = atlas(2);
        prop_assert_eq!(&lower(&a, &c, &raise(&a, &c, &u).unwrap()).unwrap(), &u);
        prop_assert_eq!(&raise(&a, &c, &lower(&a, &c, &u).unwrap()).unwrap(), &u);
    }

    #[test]
    fn words_commute(u in state(2), word in prop::collection::vec(step(), 0..6), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let a = atlas(2);
        let mut perm = word.clone();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let x = apply_word(&a, &word, &u).unwrap();
        let y = apply_word(&a, &perm, &u).unwrap();
        prop_assert_eq!(x.len(), y.len());
        for ((l1, a1), (l2, a2)) in x.iter().zip(y.iter()) {
            prop_assert_eq!(l1, l2);
            prop_assert!((a1 - a2).norm() < PHASE_TOL);
        }
    }

    #[test]
    fn shifts_are_norm_preserving(u in state(2), word in prop::collection::vec(step(), 0..6)) {
        let v = apply_word(&atlas(2), &word, &u).unwrap();
        prop_assert!((v.norm() - u.norm()).abs() <= 1e-12 * u.norm());
    }

    #[test]
    fn some_word_connects_any_two_labels(n in direction(3), m in direction(3)) {
        let n: Vec<i64> = n.iter().map(|x| x * 10).collect();
        let m: Vec<i64> = m.iter().map(|x| x * 10).collect();
        let word: Vec<ShiftStep> = (0..3)
            .map(|i| {
                let mut e = vec![0i64; 3];
                e[i] = m[i] - n[i];
                ShiftStep::raise(e)
            })
            .collect();
        let out = apply_word(&atlas(3), &word, &QuantumState::basis(lab(n))).unwrap();
        prop_assert_eq!(out, QuantumState::basis(lab(m)));
    }

    #[test]
    fn shifting_commutes_with_relabelling(seed in any::<u64>(), c in direction(2), n in prop::collection::vec(-10i64..=10, 2)) {
        let m = random_unimodular(&mut ChaCha8Rng::seed_from_u64(seed), 2, 3, false);
        let t = ChartTransition::new(ChartId(0), ChartId(1), m, vec![1, -2]).unwrap();
        prop_assert!(chart_independence_check(&t, &c, &n).unwrap());
        let lowered: Vec<i64> = n.iter().zip(&c).map(|(a, b)| a - b).collect();
        let lhs = relabel(&t, &lowered).unwrap();
        let c2 = mat_vec(t.map.matrix(), &c);
        let rhs: Vec<i64> = relabel(&t, &n).unwrap().iter().zip(&c2).map(|(a, b)| a - b).collect();
        prop_assert_eq!(lhs, rhs);
    }
}

fn glued(matrix: IntMatrix) -> ChartAtlas {
    let charts = vec![
        ActionAngleChart::new(ChartId(0), ActionBox::cube(2, 20.0).unwrap()),
        ActionAngleChart::new(ChartId(1), ActionBox::cube(2, 20.0).unwrap()),
    ];
    let t = ChartTransition::linear(ChartId(0), ChartId(1), matrix).unwrap();
    ChartAtlas::new(1.0, charts, t.with_inverse().unwrap().to_vec(), true).unwrap()
}

#[test]
fn single_chart_transport_is_lowering() {
    let a = atlas(2);
    let start = lab(vec![3, -2]);
    let tr = transport_across_charts(&a, &start, &[1, 0], &[ChartId(0)], &[]).unwrap();
    let lowered = lower(&a, &[1, 0], &QuantumState::basis(start)).unwrap();
    assert_eq!(QuantumState::basis(tr.label), lowered);
    assert_eq!(tr.phase, 0.0);
}

#[test]
fn identity_gluing_keeps_label_and_phase() {
    let a = glued(IntMatrix::identity(2));
    for t in [0.1, 0.5, 0.9] {
        let tr = transport_across_charts(&a, &lab(vec![3, -2]), &[1, 0], &[ChartId(0), ChartId(1)], &[t]).unwrap();
        assert_eq!(tr.label, LatticeLabel::new(ChartId(1), vec![2, -2]));
        assert!(tr.phase.abs() < PHASE_TOL);
    }
}

#[test]
fn shear_gluing_follows_the_commuting_diagram() {
    let shear = IntMatrix::from_rows(&[&[1, 1], &[0, 1]]).unwrap();
    let a = glued(shear.clone());
    let tr = transport_across_charts(&a, &lab(vec![2, 1]), &[1, 0], &[ChartId(0), ChartId(1)], &[0.5]).unwrap();
    // relabel(lower_{e1}(2,1)) = A (1,1) = (2,1); direction A e1 = e1.
    let expected = mat_vec(&shear, &[1, 1]);
    assert_eq!(tr.label, LatticeLabel::new(ChartId(1), expected));
    assert_eq!(tr.label.n, vec![2, 1]);
    assert_eq!(tr.direction, vec![1, 0]);
    assert!(tr.phase.abs() < PHASE_TOL);
    let up = transport_across_charts(&a, &lab(vec![2, 1]), &[0, 1], &[ChartId(0), ChartId(1)], &[0.25]).unwrap();
    assert_eq!(up.label.n, mat_vec(&shear, &[2, 0]));
    assert_eq!(up.direction, vec![1, 1]);
}

#[test]
fn leaving_the_atlas_is_an_error() {
    let a = glued(IntMatrix::identity(2));
    let err = transport_across_charts(&a, &lab(vec![19, 0]), &[-5, 0], &[ChartId(0), ChartId(1)], &[0.5]).unwrap_err();
    assert!(matches!(err, ShiftError::Incomplete { .. } | ShiftError::OverlapViolation { .. }));
}

/// Frozen loop phase of [`ring_loop`] with matched representatives.
const RING_LOOP_PHASE: f64 = 0.0;

#[test]
fn ring_loop_closes_with_trivial_phase() {
    let atlas = ring_atlas();
    let (start, steps) = ring_loop();
    let phi = loop_phase(&atlas, &start, &steps).unwrap();
    assert!((phi - RING_LOOP_PHASE).abs() < PHASE_TOL, "phase {phi}");
}

#[test]
fn unmatched_representatives_leave_a_spurious_phase() {
    let atlas = ring_atlas();
    let (start, steps) = ring_loop();
    let phi = loop_phase_with(&atlas, &start, &steps, RepresentativeRule::Canonical).unwrap();
    assert!(phi.abs() > 0.1, "phase {phi}");
}

#[test]
fn open_words_are_not_loops() {
    let atlas = ring_atlas();
    let (start, steps) = ring_loop();
    assert!(matches!(loop_phase(&atlas, &start, &steps[..3]), Err(ShiftError::LoopNotClosed { .. })));
    assert_eq!(start.chart, EAST);
}

#[test]
fn trivial_loops_have_no_phase() {
    let a = atlas(2);
    let start = lab(vec![1, 1]);
    let steps = vec![
        bsquant::shift_ops::TransportStep::within(ChartId(0), ShiftStep::lower(vec![1, 0])),
        bsquant::shift_ops::TransportStep::within(ChartId(0), ShiftStep::raise(vec![1, 0])),
    ];
    assert_eq!(loop_phase(&a, &start, &steps).unwrap(), 0.0);
}
