mod common;

use bsquant::affine_lattice::{
    compose_transitions, holonomy_of_loop, is_globally_labelable, map_actions, map_angles, relabel, AffineMap,
    ChartAtlas, ChartId, ChartTransition, IntMatrix,
};
use common::{det, mat_vec, random_unimodular, ring_atlas, EAST, NORTH, SOUTH, WEST};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn transition(seed: u64, dim: usize, from: u32, to: u32) -> ChartTransition {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = random_unimodular(&mut rng, dim, 3, false);
    let offset: Vec<i64> = (0..dim).map(|i| ((seed >> (8 * i)) % 7) as i64 - 3).collect();
    ChartTransition::new(ChartId(from), ChartId(to), m, offset).unwrap()
}

fn labels(dim: usize) -> impl Strategy<Value = Vec<i64>> {
    prop::collection::vec(-10i64..=10, dim)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn composition_is_functorial(s1 in any::<u64>(), s2 in any::<u64>(), dim in 1usize..=3, n in labels(3)) {
        let n = &n[..dim];
        let t1 = transition(s1, dim, 0, 1);
        let t2 = transition(s2, dim, 1, 2);
        let both = compose_transitions(dim, &[t1.clone(), t2.clone()]).unwrap();
        prop_assert_eq!(both.apply_label(n).unwrap(), relabel(&t2, &relabel(&t1, n).unwrap()).unwrap());
        prop_assert_eq!(both.determinant(), t1.map.determinant() * t2.map.determinant());
    }

    #[test]
    fn relabel_round_trips(s in any::<u64>(), dim in 1usize..=3, n in labels(3)) {
        let n = &n[..dim];
        let t = transition(s, dim, 0, 1);
        let back = t.inverse().unwrap();
        prop_assert_eq!(relabel(&back, &relabel(&t, n).unwrap()).unwrap(), n.to_vec());
        prop_assert!(t.map.then(&back.map).unwrap().is_identity());
    }

    #[test]
    fn determinant_is_unit(s in any::<u64>(), dim in 1usize..=3) {
        let t = transition(s, dim, 0, 1);
        let rows: Vec<Vec<i64>> = (0..dim).map(|r| (0..dim).map(|c| t.map.matrix().get(r, c)).collect()).collect();
        prop_assert_eq!(det(&rows).abs(), 1);
        prop_assert_eq!(t.map.determinant(), det(&rows));
    }

    #[test]
    fn matrix_times_inverse_is_identity(s in any::<u64>(), dim in 1usize..=3) {
        let m = transition(s, dim, 0, 1).map.matrix().clone();
        prop_assert!(m.mul(&m.inverse().unwrap()).unwrap().is_identity());
        prop_assert!(m.inverse().unwrap().mul(&m).unwrap().is_identity());
    }

    #[test]
    fn actions_follow_labels(s in any::<u64>(), dim in 1usize..=3, n in labels(3), h in 0.01f64..3.0) {
        let n = &n[..dim];
        let t = transition(s, dim, 0, 1);
        let j: Vec<f64> = n.iter().map(|&x| x as f64 * h).collect();
        let img = map_actions(&t, &j, h).unwrap();
        let lab = relabel(&t, n).unwrap();
        for (a, b) in img.iter().zip(&lab) {
            prop_assert!((a - *b as f64 * h).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn angles_pair_with_actions(s in any::<u64>(), dim in 1usize..=3, theta in prop::collection::vec(0.0f64..1.0, 3), n in labels(3)) {
        // Pairing j·ϑ mod 1 is preserved up to the offset term o·ϑ'.
        let (theta, n) = (&theta[..dim], &n[..dim]);
        let t = ChartTransition::linear(ChartId(0), ChartId(1), transition(s, dim, 0, 1).map.matrix().clone()).unwrap();
        let th2 = map_angles(&t, theta).unwrap();
        let n2 = relabel(&t, n).unwrap();
        let p1: f64 = n.iter().zip(theta).map(|(a, b)| *a as f64 * b).sum();
        let p2: f64 = n2.iter().zip(&th2).map(|(a, b)| *a as f64 * b).sum();
        let d = (p1 - p2).rem_euclid(1.0);
        prop_assert!(d.min(1.0 - d) < 1e-9);
        prop_assert!(th2.iter().all(|x| (0.0..1.0).contains(x)));
    }

    #[test]
    fn directions_transform_like_labels(s in any::<u64>(), dim in 1usize..=3, c in labels(3)) {
        let c = &c[..dim];
        let t = transition(s, dim, 0, 1);
        prop_assert_eq!(t.map.apply_direction(c).unwrap(), mat_vec(t.map.matrix(), c));
    }
}

#[test]
fn atlas_json_round_trips() {
    let a = ring_atlas();
    let b = ChartAtlas::from_json(&a.to_json()).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(b.transitions().len(), 8);
}

#[test]
fn ring_holonomy_is_the_shear() {
    let a = ring_atlas();
    let hol = holonomy_of_loop(&a, &[EAST, NORTH, WEST, SOUTH, EAST]).unwrap();
    assert_eq!(hol, AffineMap::linear(IntMatrix::from_rows(&[&[1, 1], &[0, 1]]).unwrap()).unwrap());
    let l = is_globally_labelable(&a).unwrap();
    assert!(!l.labelable);
    let w = l.witness.unwrap();
    assert!(!w.holonomy.is_identity());
}
