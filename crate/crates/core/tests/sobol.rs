use proxima::sobol::{sobol_points, sobol_unit, MAX_DIM};

fn reference() -> Vec<Vec<f64>> {
    include_str!("data/sobol_reference.txt")
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split_whitespace().map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn matches_reference_table_in_all_dimensions() {
    let r = reference();
    let ours = sobol_unit(MAX_DIM, r.len()).unwrap();
    assert_eq!(ours, r);
}

#[test]
fn low_dimensions_agree_with_prefix_columns() {
    let r = reference();
    for d in 1..=5 {
        let ours = sobol_unit(d, 64).unwrap();
        for (p, q) in ours.iter().zip(&r) {
            assert_eq!(p[..], q[..d]);
        }
    }
}

#[test]
fn mapping_inverts_exactly() {
    let r = reference();
    let mapped = sobol_points(5, 8).unwrap();
    for (p, q) in mapped.iter().zip(&r) {
        let back: Vec<f64> = p.iter().map(|v| (v + 1.0) / 2.0).collect();
        assert_eq!(back[..], q[..5]);
    }
}
