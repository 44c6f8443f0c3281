//! Cross-module oracles: estimator pipelines checked against values derived
//! independently of the code under test (closed-form dimensions, branching
//! second moments, and the entropy formula chained through the estimators).

use cascade_core::cascade::{self, CascadeRealization, SubsetLaw, TailPolicy, WeightModel};
use cascade_core::ifs::{IfsSpec, Rotation, Similarity};
use cascade_core::measure::{self, radius_schedule, DiscreteMeasure};
use cascade_core::peyriere::{self, PhiSpec};
use cascade_core::rng;

const CAP: usize = 1 << 26;

fn cantor_ifs() -> IfsSpec {
    let r = 1.0 / 3.0;
    IfsSpec::new(vec![
        Similarity::new(r, Rotation::identity(1), vec![0.0]).unwrap(),
        Similarity::new(r, Rotation::identity(1), vec![2.0 / 3.0]).unwrap(),
    ])
    .unwrap()
}

/// The full pipeline ifs -> cascade -> entropy slope recovers log 2 / log 3
/// on the middle-thirds measure with equal branch weights.
#[test]
fn cantor_entropy_dimension_matches_the_closed_form() {
    let ifs = cantor_ifs();
    let model = WeightModel::Deterministic(vec![0.5, 0.5]);
    let real = CascadeRealization::new(model, 7).unwrap();
    let nu = cascade::cascade_measure(&real, &ifs, 12, TailPolicy::Expectation, CAP).unwrap();
    let radii = measure::default_radius_schedule(&ifs, 12).unwrap();
    let est = measure::entropy_dimension(&nu, &radii, 2048, 11).unwrap();
    let expected = 2f64.ln() / 3f64.ln();
    assert!(
        (est.value - expected).abs() < 0.05,
        "entropy dimension {} vs {}",
        est.value,
        expected
    );
    assert!(est.r2 > 0.99, "log-log fit should be nearly linear");
}

#[test]
fn point_mass_has_entropy_dimension_zero() {
    let nu = DiscreteMeasure::new(1, vec![0.3], vec![1.0], None).unwrap();
    let radii = radius_schedule(0.5, 0.01, 0.5).unwrap();
    let est = measure::entropy_dimension(&nu, &radii, 64, 0).unwrap();
    assert!(est.value.abs() < 0.01, "got {}", est.value);
}

/// Local dimension is invariant under joint scaling of the cloud and the
/// radius schedule: the log-log slope only shifts its intercept.
#[test]
fn local_dimension_is_scale_invariant() {
    let mut rng = rng::stream(42, "scale-invariance", 0);
    use rand::Rng;
    let n = 200;
    let mut flat = Vec::with_capacity(2 * n);
    for _ in 0..2 * n {
        flat.push(rng.random_range(-1.0..1.0));
    }
    let masses: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let c = 0.37;
    let scaled: Vec<f64> = flat.iter().map(|x| c * x).collect();
    let nu = DiscreteMeasure::new(2, flat, masses.clone(), None).unwrap();
    let nu_scaled = DiscreteMeasure::new(2, scaled, masses, None).unwrap();
    let radii = radius_schedule(1.0, 0.02, 0.5).unwrap();
    let radii_scaled: Vec<f64> = radii.iter().map(|r| c * r).collect();
    for i in [0usize, 17, 63, 101, 199] {
        let a = measure::local_dimension(&nu, nu.point(i), &radii).unwrap();
        let b = measure::local_dimension(&nu_scaled, nu_scaled.point(i), &radii_scaled).unwrap();
        assert!(
            (a.value - b.value).abs() < 1e-9,
            "atom {i}: {} vs {}",
            a.value,
            b.value
        );
    }
}

/// A half-and-half mixture of a point mass and a uniform segment has local
/// dimension 0 at the atom and 1 on the segment, so the spread diagnostic
/// must refuse to call it exact dimensional.
#[test]
fn bimodal_mixture_fails_the_exactness_diagnostic() {
    let mut points = vec![0.0];
    let mut masses = vec![0.5];
    let n = 512;
    for i in 0..n {
        points.push(2.0 + (i as f64 + 0.5) / n as f64);
        masses.push(0.5 / n as f64);
    }
    let nu = DiscreteMeasure::new(1, points, masses, None).unwrap();
    let radii = radius_schedule(0.25, 0.004, 0.5).unwrap();
    let report = measure::exactness_diagnostic(&nu, 256, &radii, 5).unwrap();
    assert!(!report.exact, "mixture flagged exact, iqr = {}", report.iqr);
    assert!(report.iqr > 0.5, "iqr {} should be near 1", report.iqr);
}

/// Normalized survivor counts of the grid percolation stay mean-one, and
/// their second moment follows the branching recursion
/// E(Y_{n+1}^2) = E(Y_n^2)/(mp) + 1 - 1/m, so the variance rises toward a
/// finite limit (about 0.166 for m = 4, p = 0.7) instead of diverging.
#[test]
fn martingale_means_and_variances_match_branching_moments() {
    let law = SubsetLaw::uniform_keep(4, 0.7);
    let ratios = vec![0.5; 4];
    let model = cascade::natural_percolation_model(law, ratios).unwrap();
    let seeds = 400usize;
    let depth = 8usize;
    let mut per_level: Vec<Vec<f64>> = vec![Vec::with_capacity(seeds); depth + 1];
    for s in 0..seeds {
        let real =
            CascadeRealization::new(model.clone(), rng::sub_seed(9001, "mart", s as u64)).unwrap();
        let levels = real.levelwise_mass(depth, CAP).unwrap();
        for (k, y) in levels.into_iter().enumerate() {
            per_level[k].push(y);
        }
    }
    // Second-moment recursion: e2 <- e2 * sum E(W^2) + (1 - 1/m), with
    // sum E(W^2) = 1/(mp) for the natural percolation normalization.
    let (m, p) = (4.0f64, 0.7f64);
    let mut e2 = 1.0f64;
    let mut expected_var = vec![0.0f64];
    for _ in 0..depth {
        e2 = e2 / (m * p) + (1.0 - 1.0 / m);
        expected_var.push(e2 - 1.0);
    }
    for k in 1..=depth {
        let vals = &per_level[k];
        let (mean, stderr) = {
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (mean, (var / n).sqrt())
        };
        assert!(
            (mean - 1.0).abs() < 4.0 * stderr.max(1e-6),
            "level {k}: mean {mean} off 1 by more than 4 sigma ({stderr})"
        );
        let n = vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(
            (var - expected_var[k]).abs() < 0.06,
            "level {k}: variance {var} vs branching recursion {}",
            expected_var[k]
        );
    }
}

/// On a strongly separated percolation cascade the estimated conditional
/// entropy vanishes, so feeding it through the dimension formula must
/// reproduce the percolation exponent.
#[test]
fn dimension_formula_round_trips_through_the_entropy_estimator() {
    let ifs = cantor_ifs();
    let law = SubsetLaw::uniform_keep(2, 0.7);
    let ratios = ifs.ratios();
    let alpha = cascade::percolation_exponent(&law, &ratios).unwrap();
    let model = cascade::natural_percolation_model(law, ratios.clone()).unwrap();
    let est =
        peyriere::conditional_entropy(&model, &ifs, &PhiSpec::Identity, 8, 10, 24, 3).unwrap();
    assert!(
        est.value.abs() < 1e-9,
        "separated cylinders should give zero conditional entropy, got {}",
        est.value
    );
    let report = cascade::theoretical_alpha(&model, &ratios, est.value, 1).unwrap();
    assert!(
        (report.value - alpha).abs() < 1e-9,
        "formula {} vs exponent {}",
        report.value,
        alpha
    );
}
