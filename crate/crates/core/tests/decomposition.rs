use nvunmix::decomposition::{
    compute_diff, decompose, optimize_f, zpl_artifact, FSearch, ZplArtifactConfig,
};
use nvunmix::spectrum::{self, Spectrum};
use nvunmix::synth::{make_spectrum, GridSpec, SpectralShapeModel};
use nvunmix::{Error, Warning};
use proptest::prelude::*;
use statrs::function::erf::erf;

const F_TRUE: f64 = 6.2;

fn grid() -> Vec<f64> {
    GridSpec::default().points().unwrap()
}

struct Scenario {
    nv0: Spectrum,
    low: Spectrum,
    high: Spectrum,
}

/// `low = nv0 + nvm`, `high = nv0 + (1 - 1/f)·nvm`.
fn scenario(f: f64) -> Scenario {
    let g = grid();
    let nv0 = make_spectrum(&SpectralShapeModel::nv0_default(), &g, 4.0e5).unwrap();
    let nvm = make_spectrum(&SpectralShapeModel::nvminus_default(), &g, 1.0e6).unwrap();
    let low = spectrum::add(&nv0, &nvm).unwrap();
    let high = spectrum::add(&nv0, &spectrum::scale(&nvm, 1.0 - 1.0 / f).unwrap()).unwrap();
    Scenario { nv0, low, high }
}

#[test]
fn metric_of_gaussian_bump_matches_erf() {
    let (a, c, sigma) = (250.0, 637.0, 1.0);
    let cfg = ZplArtifactConfig::default();
    let s = Spectrum::from_fn(grid(), |x| {
        12.0 - 0.01 * x
            + a * (-0.5 * ((x - c) / sigma).powi(2)).exp()
                / (sigma * (2.0 * std::f64::consts::PI).sqrt())
    })
    .unwrap();
    let cdf = |x: f64| 0.5 * (1.0 + erf((x - c) / (sigma * 2f64.sqrt())));
    let exact = a * (cdf(cfg.inner_hi) - cdf(cfg.inner_lo));
    let got = zpl_artifact(&s, &cfg).unwrap();
    assert!(((got - exact) / exact).abs() < 1e-6, "{got} vs {exact}");

    // sign of the feature does not matter
    let dip = spectrum::scale(&s, -1.0).unwrap();
    let got = zpl_artifact(&dip, &cfg).unwrap();
    assert!(((got - exact) / exact).abs() < 1e-6);
}

#[test]
fn recovers_f_on_default_grid() {
    let sc = scenario(F_TRUE);
    let r = decompose(
        &sc.low,
        &sc.high,
        &ZplArtifactConfig::default(),
        &FSearch::default(),
    )
    .unwrap();
    assert!((r.f - F_TRUE).abs() < 1e-3, "f = {}", r.f);
    let peak = sc.nv0.max_intensity();
    let err = r
        .nv0
        .intensities()
        .iter()
        .zip(sc.nv0.intensities())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(err < 1e-3 * peak, "nv0 error {err} vs peak {peak}");
    assert!(r.nv0_zpl_score.unwrap() < 1e-9);
    assert!(!r
        .warnings
        .iter()
        .any(|w| matches!(w, Warning::ModelViolation { .. })));
}

#[test]
fn complete_suppression_gives_unit_f() {
    let sc = scenario(1.0);
    let r = decompose(
        &sc.low,
        &sc.high,
        &ZplArtifactConfig::default(),
        &FSearch::default(),
    )
    .unwrap();
    assert!((r.f - 1.0).abs() < 1e-3, "f = {}", r.f);
}

#[test]
fn components_sum_to_low_field_spectrum() {
    let sc = scenario(F_TRUE);
    let r = decompose(
        &sc.low,
        &sc.high,
        &ZplArtifactConfig::default(),
        &FSearch::default(),
    )
    .unwrap();
    for ((a, b), l) in r
        .nv0
        .intensities()
        .iter()
        .zip(r.nvminus.intensities())
        .zip(sc.low.intensities())
    {
        assert!((a + b - l).abs() <= 1e-9 * l.abs().max(1.0));
    }
}

#[test]
fn nv0_change_is_flagged() {
    let sc = scenario(F_TRUE);
    let shared = compute_diff(&sc.low, &sc.high).unwrap();
    assert!(shared.nv0_zpl_score.unwrap() < 1e-9);
    assert!(shared.warnings.is_empty());

    let dimmer = spectrum::subtract(&sc.high, &spectrum::scale(&sc.nv0, 0.01).unwrap()).unwrap();
    let d = compute_diff(&sc.low, &dimmer).unwrap();
    assert!(d.nv0_zpl_score.unwrap() > 0.005);
    assert!(matches!(d.warnings[..], [Warning::ModelViolation { .. }]));
}

#[test]
fn identical_spectra_are_not_identifiable() {
    let sc = scenario(F_TRUE);
    let err = decompose(
        &sc.low,
        &sc.low,
        &ZplArtifactConfig::default(),
        &FSearch::default(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::Identifiability(_)));
}

#[test]
fn grid_mismatch_is_rejected() {
    let sc = scenario(F_TRUE);
    let coarse: Vec<f64> = (0..=400).map(|i| 500.0 + i as f64).collect();
    let other = spectrum::resample(&sc.high, &coarse).unwrap();
    assert!(matches!(
        decompose(
            &sc.low,
            &other,
            &ZplArtifactConfig::default(),
            &FSearch::default()
        ),
        Err(Error::GridMismatch(_))
    ));
}

#[test]
fn scaling_both_spectra_leaves_f_unchanged() {
    let sc = scenario(F_TRUE);
    let cfg = ZplArtifactConfig::default();
    let base = decompose(&sc.low, &sc.high, &cfg, &FSearch::default()).unwrap();
    for k in [1e-3, 0.37, 12.0, 4.0e3] {
        let low = spectrum::scale(&sc.low, k).unwrap();
        let high = spectrum::scale(&sc.high, k).unwrap();
        let r = decompose(&low, &high, &cfg, &FSearch::default()).unwrap();
        assert!((r.f - base.f).abs() < 1e-4, "k={k}: {} vs {}", r.f, base.f);
    }
}

#[test]
fn exact_recovery_when_nv0_is_affine_near_zpl() {
    // NV0 that is exactly a straight line around 637 nm leaves nothing for
    // the metric to confuse with the NV- line.
    let g = grid();
    let nv0 = Spectrum::from_fn(g.clone(), |x| 900.0 - 0.8 * (x - 500.0)).unwrap();
    let nvm = make_spectrum(&SpectralShapeModel::nvminus_default(), &g, 1.0e6).unwrap();
    let low = spectrum::add(&nv0, &nvm).unwrap();
    let high = spectrum::add(&nv0, &spectrum::scale(&nvm, 1.0 - 1.0 / F_TRUE).unwrap()).unwrap();
    let diff = spectrum::subtract(&low, &high).unwrap();
    let opt = optimize_f(
        &low,
        &diff,
        &ZplArtifactConfig::default(),
        &FSearch::default(),
    )
    .unwrap();
    assert!((opt.f - F_TRUE).abs() < 2e-4, "{}", opt.f);
    assert!(opt.zpl_metric < 1e-4 * zpl_artifact(&low, &ZplArtifactConfig::default()).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metric_is_convex_in_f(f1 in 1.0..50.0f64, f2 in 1.0..50.0f64, t in 0.0..1.0f64) {
        let sc = scenario(F_TRUE);
        let cfg = ZplArtifactConfig::default();
        let diff = spectrum::subtract(&sc.low, &sc.high).unwrap();
        let j = |f: f64| {
            zpl_artifact(&spectrum::subtract(&sc.low, &spectrum::scale(&diff, f).unwrap()).unwrap(), &cfg).unwrap()
        };
        let fm = t * f1 + (1.0 - t) * f2;
        let (j1, j2, jm) = (j(f1), j(f2), j(fm));
        prop_assert!(jm <= t * j1 + (1.0 - t) * j2 + 1e-9 * (j1 + j2));
    }

    #[test]
    fn metric_scales_with_candidate(k in -1e3..1e3f64) {
        let sc = scenario(F_TRUE);
        let cfg = ZplArtifactConfig::default();
        let j = zpl_artifact(&sc.low, &cfg).unwrap();
        let jk = zpl_artifact(&spectrum::scale(&sc.low, k).unwrap(), &cfg).unwrap();
        prop_assert!((jk - k.abs() * j).abs() <= 1e-12 * j * k.abs().max(1.0));
    }
}
