use super::*;
use crate::data::{
    assign_folds, discretize, make_grid, simulate_synthetic, toy_dataset, DiscretizationScheme, Scenario,
    SurvivalRecord, SyntheticConfig,
};
use proptest::prelude::*;

fn three_records() -> SurvivalDataset {
    toy_dataset(&[(1.0, true), (2.0, false), (3.0, true)])
}

fn synthetic(n: usize, seed: u64) -> SurvivalDataset {
    simulate_synthetic(&SyntheticConfig::new(n, Scenario::Ph, seed)).unwrap().0
}

fn fit_on(spec: &LearnerSpec, data: &SurvivalDataset, target: Target) -> FittedLearner {
    fit(spec, TrainingData::Survival(data), target, 1).unwrap()
}

#[test]
fn kaplan_meier_fixture() {
    let km = fit_on(&LearnerSpec::new("km", Family::KaplanMeier), &three_records(), Target::Event);
    let s = km.predict_survival(&[], &[1.0, 2.0, 3.0]).unwrap();
    assert!((s[0] - 2.0 / 3.0).abs() < 1e-15 && (s[1] - 2.0 / 3.0).abs() < 1e-15 && s[2] == 0.0);
    let g = fit_on(&LearnerSpec::new("km", Family::KaplanMeier), &three_records(), Target::Censoring);
    assert_eq!(g.predict_survival(&[], &[2.0]).unwrap(), vec![0.5]);
}

#[test]
fn nelson_aalen_fixture() {
    let na = fit_on(&LearnerSpec::new("na", Family::NelsonAalen), &three_records(), Target::Event);
    let h = na.predict_cumhaz(&[], &[1.0, 3.0]).unwrap();
    assert!((h[0] - 1.0 / 3.0).abs() < 1e-15 && (h[1] - 4.0 / 3.0).abs() < 1e-15);
}

#[test]
fn covariate_free_learners_ignore_covariates() {
    let data = synthetic(80, 1);
    let km = fit_on(&LearnerSpec::new("km", Family::KaplanMeier), &data, Target::Event);
    let t = [1.0, 4.0, 8.0];
    assert_eq!(
        km.predict_survival(&[0.0, 1.0, 0.0, 2.0], &t).unwrap(),
        km.predict_survival(&[2.0, -1.0, 1.0, 0.0], &t).unwrap()
    );
}

#[test]
fn zero_variance_covariate_named_in_error() {
    let records = (1..=6)
        .map(|i| SurvivalRecord { id: i.to_string(), time: i as f64, event: i % 2 == 0, covariates: vec![i as f64, 3.0] })
        .collect();
    let data = SurvivalDataset::new(records, vec!["age".into(), "flat".into()]).unwrap();
    let err = fit(&LearnerSpec::new("cox", Family::Cox), TrainingData::Survival(&data), Target::Event, 1).unwrap_err();
    assert!(err.to_string().contains("'flat'"), "{err}");
}

#[test]
fn cox_curves_are_consistent() {
    let data = synthetic(200, 2);
    let cox = fit_on(&LearnerSpec::new("cox", Family::Cox), &data, Target::Event);
    let t = [0.5, 2.0, 5.0, 9.0];
    let x = &data.records()[0].covariates;
    let s = cox.predict_survival(x, &t).unwrap();
    let h = cox.predict_cumhaz(x, &t).unwrap();
    for (a, b) in s.iter().zip(&h) {
        assert!((a - (-b).exp()).abs() < 1e-10);
    }
}

#[test]
fn null_cox_is_baseline_survival() {
    // With a binary covariate split into exchangeable groups β̂ = 0.
    let rows = [(1.0, true), (2.0, false), (3.0, true), (4.0, true)];
    let records = rows
        .iter()
        .chain(rows.iter())
        .enumerate()
        .map(|(i, &(t, e))| SurvivalRecord { id: i.to_string(), time: t, event: e, covariates: vec![(i / 4) as f64] })
        .collect();
    let data = SurvivalDataset::new(records, vec!["g".into()]).unwrap();
    let cox = fit_on(&LearnerSpec::new("cox", Family::Cox), &data, Target::Event);
    let na = fit_on(&LearnerSpec::new("na", Family::NelsonAalen), &data, Target::Event);
    let t = [0.5, 1.0, 3.5, 4.0];
    let a = cox.predict_survival(&[0.0], &t).unwrap();
    let b = cox.predict_survival(&[1.0], &t).unwrap();
    let c = na.predict_survival(&[0.0], &t).unwrap();
    for k in 0..4 {
        assert!((a[k] - b[k]).abs() < 1e-12 && (a[k] - c[k]).abs() < 1e-12);
    }
}

#[test]
fn single_covariate_cox_equals_unpenalized_lasso() {
    let data = synthetic(150, 3);
    let params = Hyperparameters { covariates: Some(vec!["x1".into()]), ..Default::default() };
    let cox = fit_on(&LearnerSpec::new("cox", Family::Cox).with_params(params.clone()), &data, Target::Event);
    let lasso_params = Hyperparameters { lambda: Some(0.0), ..params };
    let lasso = fit_on(&LearnerSpec::new("lasso", Family::CoxLasso).with_params(lasso_params), &data, Target::Event);
    let x = &data.records()[5].covariates;
    let (a, b) = (cox.predict_survival(x, &[3.0]).unwrap(), lasso.predict_survival(x, &[3.0]).unwrap());
    assert!((a[0] - b[0]).abs() < 1e-4);
}

#[test]
fn beyond_support_carries_last_value() {
    let data = synthetic(100, 4);
    let weibull = fit_on(&LearnerSpec::new("wb", Family::Weibull), &data, Target::Event);
    let end = weibull.support_end;
    let x = &data.records()[0].covariates;
    let s = weibull.predict_survival(x, &[end, end + 5.0]).unwrap();
    assert_eq!(s[0], s[1]);
}

#[test]
fn discrete_families_need_long_data() {
    let data = synthetic(60, 5);
    let long = discretize(&data, 8.0, 4, DiscretizationScheme::EqualWidth).unwrap();
    let glm = LearnerSpec::new("glm", Family::DiscreteHazardGlm);
    assert!(fit(&glm, TrainingData::Survival(&data), Target::Event, 1).is_err());
    assert!(fit(&LearnerSpec::new("km", Family::KaplanMeier), TrainingData::Long(&long), Target::Event, 1).is_err());
    assert!(fit(&glm, TrainingData::Long(&long), Target::Censoring, 1).is_err());
    let model = fit(&glm, TrainingData::Long(&long), Target::Event, 1).unwrap();
    assert!(model.predict_survival(&data.records()[0].covariates, &[1.0]).is_err());
    let q = model.predict_discrete_hazards(&data.records()[0].covariates).unwrap();
    assert_eq!(q.len(), 4);
    assert!(q.iter().all(|v| (0.0..=1.0).contains(v)));
    let km = fit_on(&LearnerSpec::new("km", Family::KaplanMeier), &data, Target::Event);
    assert!(km.predict_discrete_hazard(0, &[0.0; 4]).is_err());
}

#[test]
fn discrete_mean_is_life_table() {
    let data = toy_dataset(&[(0.5, true), (1.5, false), (1.7, true), (2.5, true), (3.0, false)]);
    let long = discretize(&data, 3.0, 3, DiscretizationScheme::EqualWidth).unwrap();
    let mean = fit(&LearnerSpec::new("mean", Family::DiscreteMean), TrainingData::Long(&long), Target::Event, 1).unwrap();
    // Period 0: 5 at risk, 1 event; period 1: 4 at risk, 1 event; period 2: 2 at risk, 1 event.
    assert_eq!(mean.predict_discrete_hazards(&[]).unwrap(), vec![0.2, 0.25, 0.5]);
}

#[test]
fn spec_validation() {
    let bad = LearnerSpec::new("km", Family::KaplanMeier)
        .with_params(Hyperparameters { trees: Some(5), ..Default::default() });
    assert!(bad.validate().is_err());
    let bad = LearnerSpec::new("rf", Family::SurvivalForest)
        .with_params(Hyperparameters { trees: Some(0), ..Default::default() });
    assert!(bad.validate().is_err());
    let unknown = LearnerSpec::new("cox", Family::Cox)
        .with_params(Hyperparameters { covariates: Some(vec!["nope".into()]), ..Default::default() });
    assert!(fit(&unknown, TrainingData::Survival(&synthetic(30, 1)), Target::Event, 1).is_err());
    let parsed: LearnerSpec = toml::from_str("label = \"rf\"\nfamily = \"survival-forest\"\n[params]\ntrees = 10\n").unwrap();
    assert_eq!(parsed.params.trees, Some(10));
}

#[test]
fn cross_fit_excludes_own_fold_and_drops_failures() {
    let data = synthetic(60, 6);
    let folds = assign_folds(&data, 3, 1).unwrap();
    let specs = vec![
        LearnerSpec::new("km", Family::KaplanMeier),
        LearnerSpec::new("broken", Family::Cox)
            .with_params(Hyperparameters { covariates: Some(vec!["missing".into()]), ..Default::default() }),
    ];
    let (kept, dropped) = cross_fit(&data, &specs, &folds, Target::Event, 3);
    assert_eq!(kept.len(), 1);
    assert_eq!(dropped[0].label, "broken");
    for (f, model) in kept[0].fits.iter().enumerate() {
        assert_eq!(model.n_train, folds.training(f).len());
    }
}

fn all_continuous_specs() -> Vec<LearnerSpec> {
    vec![
        LearnerSpec::new("km", Family::KaplanMeier),
        LearnerSpec::new("na", Family::NelsonAalen),
        LearnerSpec::new("cox", Family::Cox),
        LearnerSpec::new("lasso", Family::CoxLasso),
        LearnerSpec::new("wb", Family::Weibull),
        LearnerSpec::new("exp", Family::Exponential),
        LearnerSpec::new("rf", Family::SurvivalForest)
            .with_params(Hyperparameters { trees: Some(10), ..Default::default() }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn every_learner_emits_valid_curves(seed in 0u64..1000, censor in any::<bool>()) {
        let data = synthetic(80, seed);
        let grid = make_grid(10.0, 25).unwrap();
        let target = if censor { Target::Censoring } else { Target::Event };
        let rows = data.covariate_rows();
        for spec in all_continuous_specs() {
            let model = fit_on(&spec, &data, target);
            let s = model.survival_matrix(&rows, grid.points()).unwrap();
            prop_assert!(s.is_survival(), "{}", spec.label);
            let h = model.cumhaz_matrix(&rows, grid.points()).unwrap();
            prop_assert!(h.is_cumulative_hazard(), "{}", spec.label);
        }
    }
}
