use approx::assert_relative_eq;
use eight4_core::choreography::{eight_config, eight_initial_state, restricted_config};
use eight4_core::dynamics::min_pairwise_distance;
use eight4_core::error::Error;
use eight4_core::symmetry::rotate_state;
use eight4_core::{State, SystemConfig};
use proptest::prelude::*;

// Direct summation, written independently of the library.
fn oracle_accelerations(masses: &[f64], r: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut a = vec![[0.0; 2]; r.len()];
    for i in 0..r.len() {
        for j in 0..r.len() {
            if i != j {
                let (dx, dy) = (r[j][0] - r[i][0], r[j][1] - r[i][1]);
                let d3 = (dx * dx + dy * dy).powf(1.5);
                a[i][0] += masses[j] * dx / d3;
                a[i][1] += masses[j] * dy / d3;
            }
        }
    }
    a
}

fn oracle_energy(masses: &[f64], r: &[[f64; 2]], v: &[[f64; 2]]) -> f64 {
    let mut e = 0.0;
    for i in 0..r.len() {
        e += 0.5 * masses[i] * (v[i][0] * v[i][0] + v[i][1] * v[i][1]);
        for j in i + 1..r.len() {
            e -= masses[i] * masses[j] / ((r[i][0] - r[j][0]).powi(2) + (r[i][1] - r[j][1]).powi(2)).sqrt();
        }
    }
    e
}

const EIGHT_ACCELERATIONS: [[f64; 2]; 3] = [
    [0.3558507220616037, -2.1729660799994486],
    [0.3558507220616037, 2.1729660799994486],
    [-0.7117014441232073, 0.0],
];
const EIGHT_ENERGY: f64 = -1.2871419960311465;

#[test]
fn two_bodies_at_unit_distance() {
    let cfg = SystemConfig::unpaired(vec![1.0, 1.0], 1.0).unwrap();
    let s = State::new(0.0, &[[0.0, 0.0], [1.0, 0.0]], &[[0.0, 0.0], [0.0, 0.0]]).unwrap();
    assert_eq!(cfg.accelerations(&s).unwrap(), vec![[1.0, 0.0], [-1.0, 0.0]]);
    assert_eq!(cfg.total_energy(&s).unwrap(), -1.0);
}

#[test]
fn eight_accelerations_match_oracle() {
    let s = eight_initial_state();
    let a = eight_config().accelerations(&s).unwrap();
    let oracle = oracle_accelerations(&[1.0; 3], &s.positions());
    for i in 0..3 {
        for c in 0..2 {
            assert_relative_eq!(oracle[i][c], EIGHT_ACCELERATIONS[i][c], max_relative = 1e-14);
            assert_relative_eq!(a[i][c], EIGHT_ACCELERATIONS[i][c], epsilon = 1e-15, max_relative = 1e-14);
        }
    }
    assert!(a[2][0] < 0.0);
    assert_eq!(a[2][1], 0.0);
}

#[test]
fn eight_vector_field() {
    let s = eight_initial_state();
    let f = eight_config().vector_field(&s).unwrap();
    assert_eq!(&f[..6], &s.u[6..]);
    for i in 0..3 {
        assert_relative_eq!(f[6 + 2 * i], EIGHT_ACCELERATIONS[i][0], max_relative = 1e-14);
        assert_relative_eq!(f[7 + 2 * i], EIGHT_ACCELERATIONS[i][1], epsilon = 1e-15, max_relative = 1e-14);
    }
}

#[test]
fn resting_state_has_zero_position_derivative() {
    let cfg = SystemConfig::unpaired(vec![1.0, 2.0, 3.0], 1.0).unwrap();
    let s = State::new(0.0, &[[0.0, 0.0], [1.0, 0.5], [-1.0, 2.0]], &[[0.0; 2]; 3]).unwrap();
    let f = cfg.vector_field(&s).unwrap();
    assert!(f[..6].iter().all(|v| *v == 0.0));
}

#[test]
fn eight_energy_matches_oracle() {
    let s = eight_initial_state();
    let e = eight_config().total_energy(&s).unwrap();
    assert_relative_eq!(oracle_energy(&[1.0; 3], &s.positions(), &s.velocities()), EIGHT_ENERGY, max_relative = 1e-14);
    assert_relative_eq!(e, EIGHT_ENERGY, max_relative = 1e-14);

    let mut resting = s.clone();
    resting.u[6..].fill(0.0);
    let potential = oracle_energy(&[1.0; 3], &s.positions(), &[[0.0; 2]; 3]);
    assert_relative_eq!(eight_config().total_energy(&resting).unwrap(), potential, max_relative = 1e-14);
}

#[test]
fn pairwise_distances() {
    let s = State::new(0.0, &[[0.0, 0.0], [3.0, 4.0]], &[[0.0; 2]; 2]).unwrap();
    assert_eq!(min_pairwise_distance(&s), 5.0);
    let h = 3f64.sqrt() / 2.0;
    let tri = State::new(0.0, &[[0.0, 0.0], [1.0, 0.0], [0.5, h]], &[[0.0; 2]; 3]).unwrap();
    assert_relative_eq!(min_pairwise_distance(&tri), 1.0, max_relative = 1e-15);
    assert_relative_eq!(min_pairwise_distance(&eight_initial_state()), 2.0 * 0.3452633140, max_relative = 1e-15);
}

#[test]
fn collision_is_reported() {
    let cfg = SystemConfig::unpaired(vec![1.0, 1.0], 1.0).unwrap();
    let s = State::new(0.0, &[[0.0, 0.0], [0.0, 1e-9]], &[[0.0; 2]; 2]).unwrap();
    assert!(matches!(cfg.accelerations(&s), Err(Error::CollisionProximity { i: 1, j: 2, .. })));
    assert!(matches!(cfg.total_energy(&s), Err(Error::CollisionProximity { .. })));
}

#[test]
fn massless_bodies_may_overlap() {
    let cfg = SystemConfig::unpaired(vec![1.0, 0.0, 0.0], 1.0).unwrap();
    let s = State::new(0.0, &[[0.0, 0.0], [1.0, 0.0], [1.0, 0.0]], &[[0.0; 2]; 3]).unwrap();
    let a = cfg.accelerations(&s).unwrap();
    assert_eq!(a[0], [0.0, 0.0]);
    assert_eq!(a[1], [-1.0, 0.0]);
}

#[test]
fn invalid_configurations() {
    assert!(SystemConfig::new(1, 1, vec![1.0, 1.0], 1.0).is_err());
    assert!(SystemConfig::unpaired(vec![1.0, -1.0], 1.0).is_err());
    assert!(SystemConfig::unpaired(vec![0.0, 1.0], 1.0).is_err());
    assert!(SystemConfig::unpaired(vec![1.0], 0.0).is_err());
}

fn positions(n: usize) -> impl Strategy<Value = Vec<[f64; 2]>> {
    prop::collection::vec(prop::array::uniform2(-3.0..3.0f64), n).prop_filter("close pair", |r| {
        (0..r.len()).all(|i| (i + 1..r.len()).all(|j| (r[i][0] - r[j][0]).hypot(r[i][1] - r[j][1]) > 0.05))
    })
}

fn state(r: &[[f64; 2]]) -> State {
    State::new(0.0, r, &vec![[0.0; 2]; r.len()]).unwrap()
}

fn scale(a: &[[f64; 2]], masses: &[f64]) -> f64 {
    a.iter()
        .zip(masses)
        .map(|(v, m)| m * v[0].hypot(v[1]))
        .fold(0.0, f64::max)
}

proptest! {
    #[test]
    fn third_law(r in positions(5), masses in prop::collection::vec(0.1..5.0f64, 5)) {
        let cfg = SystemConfig::unpaired(masses.clone(), 1.0).unwrap();
        let a = cfg.accelerations(&state(&r)).unwrap();
        let total = a.iter().zip(&masses).fold([0.0, 0.0], |t, (v, m)| [t[0] + m * v[0], t[1] + m * v[1]]);
        let s = scale(&a, &masses);
        prop_assert!(total[0].abs() <= 1e-13 * s && total[1].abs() <= 1e-13 * s);
    }

    #[test]
    fn matches_oracle(r in positions(4), masses in prop::collection::vec(0.1..5.0f64, 4)) {
        let cfg = SystemConfig::unpaired(masses.clone(), 1.0).unwrap();
        let a = cfg.accelerations(&state(&r)).unwrap();
        let o = oracle_accelerations(&masses, &r);
        let s = scale(&o, &[1.0; 4]);
        for (x, y) in a.iter().zip(&o) {
            prop_assert!((x[0] - y[0]).abs() <= 1e-13 * s && (x[1] - y[1]).abs() <= 1e-13 * s);
        }
    }

    #[test]
    fn translation(r in positions(4), c in prop::array::uniform2(-5.0..5.0f64)) {
        let cfg = SystemConfig::unpaired(vec![1.0, 2.0, 0.5, 1.5], 1.0).unwrap();
        let a = cfg.accelerations(&state(&r)).unwrap();
        let shifted: Vec<[f64; 2]> = r.iter().map(|p| [p[0] + c[0], p[1] + c[1]]).collect();
        let b = cfg.accelerations(&state(&shifted)).unwrap();
        let s = scale(&a, &[1.0; 4]);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x[0] - y[0]).abs() <= 1e-11 * s && (x[1] - y[1]).abs() <= 1e-11 * s);
        }
    }

    #[test]
    fn rotation(r in positions(4), theta in -3.2..3.2f64) {
        let cfg = SystemConfig::unpaired(vec![1.0, 2.0, 0.5, 1.5], 1.0).unwrap();
        let s0 = state(&r);
        let a = cfg.accelerations(&s0).unwrap();
        let b = cfg.accelerations(&rotate_state(theta, &s0)).unwrap();
        let (sn, cs) = theta.sin_cos();
        let s = scale(&a, &[1.0; 4]);
        for (x, y) in a.iter().zip(&b) {
            let rx = [cs * x[0] - sn * x[1], sn * x[0] + cs * x[1]];
            prop_assert!((rx[0] - y[0]).abs() <= 1e-13 * s && (rx[1] - y[1]).abs() <= 1e-13 * s);
        }
    }

    #[test]
    fn massless_body_leaves_primaries_alone(r in positions(4), v in prop::collection::vec(prop::array::uniform2(-2.0..2.0f64), 4)) {
        let full = State::new(0.0, &r, &v).unwrap();
        let three = State::new(0.0, &r[..3], &v[..3]).unwrap();
        let a4 = restricted_config().accelerations(&full).unwrap();
        let a3 = eight_config().accelerations(&three).unwrap();
        prop_assert_eq!(&a4[..3], &a3[..]);
        prop_assert_eq!(
            restricted_config().total_energy(&full).unwrap(),
            eight_config().total_energy(&three).unwrap()
        );
    }
}
