// JsError can only be constructed on a wasm target, so these tests stick to
// the success paths.

use cfh_wasm::{ber_curve, cfh_vs_tau, expected_neighbor_curve, shuffle_curve};

#[test]
fn cfh_rises_with_tau() {
    let v = cfh_vs_tau(600, 1.0, 8, 4, &[-1.5, 0.0, 1.5], 1).unwrap();
    assert_eq!(v.len(), 3);
    assert!(v[0] < v[1] && v[1] < v[2], "{v:?}");
}

#[test]
fn theory_curves() {
    let e = expected_neighbor_curve(1.0, &[-1.0, 0.0, 1.0]);
    assert!(e[0] < 0.0 && e[1] == 0.0 && e[2] > 0.0);
    let b = ber_curve(0.5, 0.15, 0.05, &[0.0, 1.0, 1.5]).unwrap();
    assert_eq!(b[0], 0.0);
    assert!(b[1] < b[2]);
}

#[test]
fn shuffling_shrinks_cfh() {
    let v = shuffle_curve(600, 1.0, 8, 4, 1.5, &[0.0, 1.0], 2).unwrap();
    assert!(v[1].abs() < 0.5 * v[0].abs(), "{v:?}");
}
