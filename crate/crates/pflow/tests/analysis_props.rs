//! Pencil-analysis invariants: exponential round trip of the z-to-s
//! mapping, unit-circle stability endpoints, the oscillation frequency of
//! the explicit branch, and the link between the analytic region and the
//! scalar-model iteration.

mod common;

use num_complex::Complex64;
use pflow::analysis::{
    pencil_eigen, region_scan, stability_bound, z_to_s, PencilSpec, StabilityBound,
};

fn grid(lo: f64, step: f64, hi: f64) -> Vec<f64> {
    let mut g = Vec::new();
    let mut k = 0;
    loop {
        let h = lo + step * k as f64;
        if h > hi + 1e-12 {
            return g;
        }
        g.push(h);
        k += 1;
    }
}

#[test]
fn exp_of_s_times_h_recovers_z_over_the_scan_grid() {
    let hs = grid(0.05, 0.05, 3.0);
    for spec in [
        PencilSpec::<f64>::fem(),
        PencilSpec::bem(),
        PencilSpec::fem_distorted(2.33, -0.7),
    ] {
        let scan = region_scan(&spec, &hs);
        for p in &scan.points {
            if p.z.norm() == 0.0 {
                assert!(p.s.re.is_infinite() && p.s.re < 0.0);
                continue;
            }
            let back = (p.s * Complex64::new(p.h, 0.0)).exp();
            assert!(
                (back - p.z).norm() < 1e-12,
                "h = {}: exp(s h) = {back} vs z = {}",
                p.h,
                p.z
            );
        }
    }
}

#[test]
fn stability_endpoints_sit_on_the_unit_circle() {
    for spec in [
        PencilSpec::<f64>::fem(),
        PencilSpec::fem_distorted(2.33, -0.7),
        PencilSpec::fem_distorted(2.33, -0.5),
        PencilSpec::fem_distorted(0.5, 0.2),
    ] {
        match stability_bound(&spec) {
            StabilityBound::Interval { lo, hi } => {
                assert!((pencil_eigen(&spec, hi).norm() - 1.0).abs() < 1e-9, "hi endpoint");
                if lo > 0.0 {
                    assert!((pencil_eigen(&spec, lo).norm() - 1.0).abs() < 1e-9, "lo endpoint");
                }
            }
            other => panic!("expected an interval, got {other:?}"),
        }
    }
}

#[test]
fn explicit_oscillatory_branch_has_nyquist_frequency() {
    // for 1 < h < 2 the explicit eigenvalue is real negative, so the
    // continuous-domain image oscillates at exactly pi / h
    let spec = PencilSpec::<f64>::fem();
    for h in [1.1, 1.5, 1.99] {
        let z = pencil_eigen(&spec, h);
        assert!(z.re < 0.0 && z.im == 0.0);
        let s = z_to_s(z, h);
        assert!(
            (s.im - std::f64::consts::PI / h).abs() < 1e-14,
            "h = {h}: beta = {}",
            s.im
        );
    }
}

#[test]
fn scalar_iteration_diverges_exactly_where_the_scan_says() {
    // iterate the scalar linear model err <- (1 - h) err at every grid
    // point and compare growth against the stability flag
    let spec = PencilSpec::<f64>::fem();
    let hs = grid(0.1, 0.1, 3.0);
    let scan = region_scan(&spec, &hs);
    for p in &scan.points {
        let mut err: f64 = 1.0;
        for _ in 0..50 {
            err -= p.h * err;
        }
        let diverged = err.abs() > 1.0;
        // |z| = 1 exactly (h = 2) neither grows nor decays; skip the knife edge
        if (p.z.norm() - 1.0).abs() < 1e-12 {
            continue;
        }
        assert_eq!(
            !diverged, p.stable,
            "h = {}: empirical growth {} vs stable flag {}",
            p.h, err, p.stable
        );
    }
}

#[test]
fn distorted_flip_point_matches_reported_bound() {
    let spec = PencilSpec::<f64>::fem_distorted(2.33, -0.7);
    let hs = grid(0.05, 0.05, 3.0);
    let scan = region_scan(&spec, &hs);
    let first_unstable = scan
        .points
        .iter()
        .find(|p| !p.stable)
        .map(|p| p.h)
        .unwrap();
    assert!((first_unstable - 0.65).abs() < 1e-12, "flip at {first_unstable}");
    match stability_bound(&spec) {
        StabilityBound::Interval { hi, .. } => {
            assert!(hi < first_unstable && hi > first_unstable - 0.05);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn csv_has_one_row_per_grid_point() {
    let hs = grid(0.05, 0.05, 3.0);
    assert_eq!(hs.len(), 60);
    let scan = region_scan(&PencilSpec::<f64>::fem(), &hs);
    let mut buf = Vec::new();
    scan.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 61);
    assert_eq!(text.lines().next().unwrap(), "h,z_re,z_im,s_re,s_im,stable");
    // stable flag flips between h = 1.95 and h = 2.05 (|z| = 1 at h = 2
    // itself is not a contraction)
    let flags: Vec<bool> = text
        .lines()
        .skip(1)
        .map(|l| l.ends_with("true"))
        .collect();
    assert!(flags[38]); // h = 1.95
    assert!(!flags[39]); // h = 2.00, |z| = 1
    assert!(!flags[40]); // h = 2.05
}
