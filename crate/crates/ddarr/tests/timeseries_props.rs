use ddarr::timeseries::{
    add_integral_columns, build_design_matrix, chrono_split, integrate, Dataset, FeatureRef, SplitSpec,
};
use proptest::prelude::*;

fn series(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0..100.0f64, len)
}

fn two_column(n: usize, a: Vec<f64>, b: Vec<f64>) -> Dataset {
    assert_eq!(a.len(), n);
    Dataset::new(vec!["a".into(), "b".into()], vec![a, b], 0.5, 2.0).unwrap()
}

proptest! {
    #[test]
    fn integrate_is_linear(
        (f, g) in (2usize..200).prop_flat_map(|n| (series(n), series(n))),
        a in -5.0..5.0f64,
        b in -5.0..5.0f64,
    ) {
        let combo: Vec<f64> = f.iter().zip(&g).map(|(x, y)| a * x + b * y).collect();
        let lhs = integrate(&combo, 0.1).unwrap();
        let (fi, gi) = (integrate(&f, 0.1).unwrap(), integrate(&g, 0.1).unwrap());
        for i in 0..lhs.len() {
            let rhs = a * fi[i] + b * gi[i];
            let scale = (a * fi[i]).abs() + (b * gi[i]).abs() + f.len() as f64 * 1e-3;
            prop_assert!((lhs[i] - rhs).abs() <= 1e-12 * scale, "row {}: {} vs {}", i, lhs[i], rhs);
        }
    }

    #[test]
    fn design_rows_and_permutation(
        (n, a, b) in (10usize..120).prop_flat_map(|n| (Just(n), series(n), series(n))),
        la in 0usize..4,
        lb in 0usize..4,
    ) {
        let ds = two_column(n, a, b);
        let f = vec![FeatureRef::new("a", la), FeatureRef::new("b", lb)];
        let (m, y) = build_design_matrix(&ds, &f, "b").unwrap();
        prop_assert_eq!(m.nrows(), n - la.max(lb));
        prop_assert_eq!(y.len(), m.nrows());
        let rev: Vec<FeatureRef> = f.iter().rev().cloned().collect();
        let (mr, yr) = build_design_matrix(&ds, &rev, "b").unwrap();
        prop_assert_eq!(m.column(0), mr.column(1));
        prop_assert_eq!(m.column(1), mr.column(0));
        prop_assert_eq!(y, yr);
    }

    #[test]
    fn split_concatenation_reproduces_dataset(
        (n, a, b) in (40usize..200).prop_flat_map(|n| (Just(n), series(n), series(n))),
        frac in 0.2..0.8f64,
    ) {
        let ds = two_column(n, a, b);
        let (tr, va) = chrono_split(&ds, &SplitSpec { train_fraction: frac }, 3).unwrap();
        prop_assert_eq!(tr.len() + va.len(), n);
        prop_assert_eq!(tr.len(), (frac * n as f64 - 1e-9).ceil() as usize);
        for name in ["a", "b"] {
            let mut joined = tr.column(name).unwrap().to_vec();
            joined.extend_from_slice(va.column(name).unwrap());
            prop_assert_eq!(joined.as_slice(), ds.column(name).unwrap());
        }
        prop_assert_eq!(va.t0(), ds.time(tr.len()));
    }

    #[test]
    fn integral_columns_leave_originals_untouched(
        (n, a, b) in (2usize..100).prop_flat_map(|n| (Just(n), series(n), series(n))),
    ) {
        let ds = two_column(n, a, b);
        prop_assert_eq!(add_integral_columns(&ds, &[]).unwrap(), ds.clone());
        let ext = add_integral_columns(&ds, &["b"]).unwrap();
        prop_assert_eq!(ext.column("a").unwrap(), ds.column("a").unwrap());
        prop_assert_eq!(ext.column("b").unwrap(), ds.column("b").unwrap());
        prop_assert_eq!(ext.column("int_b").unwrap()[0], 0.0);
    }
}

#[test]
fn lagged_design_layout() {
    let n = 100;
    let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let y: Vec<f64> = (0..n).map(|i| -(i as f64)).collect();
    let z: Vec<f64> = (0..n).map(|i| if i >= 3 { x[i - 3] + y[i - 2] } else { 0.0 }).collect();
    let ds = Dataset::new(vec!["x".into(), "y".into(), "z".into()], vec![x, y, z], 1.0, 0.0).unwrap();
    let (m, v) = build_design_matrix(&ds, &[FeatureRef::new("x", 3), FeatureRef::new("y", 2)], "z").unwrap();
    assert_eq!(m.nrows(), 97);
    for r in 0..97 {
        let t = r + 3;
        assert_eq!(m[(r, 0)], (t - 3) as f64);
        assert_eq!(m[(r, 1)], -((t - 2) as f64));
        assert_eq!(v[r], m[(r, 0)] + m[(r, 1)]);
    }
}

#[test]
fn lagged_copy_is_recovered_exactly() {
    let x: Vec<f64> = (0..200).map(|i| (i as f64 * 0.7).sin() + (i as f64 * 0.13).cos()).collect();
    let z: Vec<f64> = (0..200).map(|i| if i >= 2 { x[i - 2] } else { 0.0 }).collect();
    let ds = Dataset::new(vec!["x".into(), "z".into()], vec![x, z], 1.0, 0.0).unwrap();
    let (m, y) = build_design_matrix(&ds, &[FeatureRef::new("x", 2)], "z").unwrap();
    for r in 0..m.nrows() {
        assert_eq!(m[(r, 0)], y[r]);
    }
    let fit = ddarr::regress::fit_least_squares(&m, &y).unwrap();
    assert!((fit.train_score.unwrap() - 1.0).abs() < 1e-12);
}
