use std::time::Instant;

use aniso_field::covariance::{
    band_increment_variance, band_pair_covariance, increment_variance, increment_variance_three_term,
    pair_covariance, Band,
};
use aniso_field::quadrature::time_domain_inner_product;
use aniso_field::{FieldModel, Point, QuadratureSpec, SpdeModel};

fn compare(model: SpdeModel, p: Point, q: Point, tol: f64) {
    let spec = QuadratureSpec::default();
    let t0 = Instant::now();
    let spectral = pair_covariance(&model.clone().into(), &p, &q, &spec).unwrap();
    let t1 = t0.elapsed();
    let direct = time_domain_inner_product(&model, &p, &q, &spec).unwrap();
    let t2 = t0.elapsed() - t1;
    eprintln!(
        "{:?} {} {}: spectral {spectral:.12e} direct {direct:.12e} rel {:.2e} ({t1:?} / {t2:?})",
        (model.alpha, model.beta, model.hurst, model.dim),
        p.label(),
        q.label(),
        (spectral - direct).abs() / direct.abs()
    );
    assert!((spectral - direct).abs() <= tol * direct.abs().max(1e-3), "{spectral} vs {direct}");
}

#[test]
fn default_model_matches_oracle() {
    let m = SpdeModel::default();
    compare(m.clone(), Point::new(vec![1.0, 0.0]), Point::new(vec![1.0, 0.0]), 1e-5);
    compare(m.clone(), Point::new(vec![1.0, 0.0]), Point::new(vec![0.6, 0.3]), 1e-5);
    compare(m, Point::new(vec![0.4, 0.0]), Point::new(vec![0.9, 1.5]), 1e-5);
}

#[test]
fn rough_fractional_model_matches_oracle() {
    let m = SpdeModel::new(1.5, 0.5, 0.7, 1);
    compare(m.clone(), Point::new(vec![1.0, 0.0]), Point::new(vec![1.0, 0.0]), 1e-5);
    compare(m, Point::new(vec![1.0, 0.2]), Point::new(vec![0.7, -0.1]), 1e-5);
}

#[test]
fn planar_model_matches_oracle() {
    let m = SpdeModel::new(2.0, 0.5, 0.75, 2);
    compare(m.clone(), Point::new(vec![1.0, 0.0, 0.0]), Point::new(vec![1.0, 0.0, 0.0]), 1e-5);
    compare(m, Point::new(vec![1.0, 0.1, 0.2]), Point::new(vec![0.8, -0.3, 0.4]), 1e-5);
}

#[test]
fn bands_partition_the_increment() {
    let m: FieldModel = SpdeModel::default().into();
    let spec = QuadratureSpec::default();
    let p = Point::new(vec![1.0, 0.2]);
    let q = Point::new(vec![0.9, 0.0]);
    let full = increment_variance(&m, &p, &q, &spec).unwrap();
    let edges = [0.0, 0.5, 2.0, 8.0, f64::INFINITY];
    let parts: f64 = edges
        .windows(2)
        .map(|w| band_increment_variance(&m, Band::new(w[0], w[1]).unwrap(), &p, &q, &spec).unwrap())
        .sum();
    assert!((parts - full).abs() < 10.0 * spec.rel_tol * full * 4.0, "{parts} {full}");
    let cov = pair_covariance(&m, &p, &q, &spec).unwrap();
    let cparts: f64 = edges
        .windows(2)
        .map(|w| band_pair_covariance(&m, Band::new(w[0], w[1]).unwrap(), &p, &q, &spec).unwrap())
        .sum();
    assert!((cparts - cov).abs() < 40.0 * spec.rel_tol * cov.abs(), "{cparts} {cov}");
}

#[test]
fn small_time_increment_is_stable() {
    let m: FieldModel = SpdeModel::default().into();
    let spec = QuadratureSpec::default();
    let p = Point::new(vec![1.0, 0.0]);
    let mut prev = f64::INFINITY;
    for k in 6..=12 {
        let s = 2f64.powi(-k);
        let q = Point::new(vec![1.0 + s, 0.0]);
        let d2 = increment_variance(&m, &p, &q, &spec).unwrap();
        let ratio = d2.sqrt() / s.powf(0.375);
        eprintln!("s=2^-{k} d2={d2:e} ratio {ratio}");
        assert!(d2 < prev);
        prev = d2;
    }
    let q = Point::new(vec![0.7, 0.3]);
    let a = increment_variance(&m, &p, &q, &spec).unwrap();
    let b = increment_variance_three_term(&m, &p, &q, &spec).unwrap();
    assert!((a - b).abs() < 10.0 * spec.rel_tol * a);
}
