use proptest::prelude::*;

use super::*;
use crate::data::{assign_folds, make_grid, simulate_synthetic, Scenario, SurvivalRecord, SyntheticConfig};
use crate::learners::{Family, LearnerSpec};

fn dataset(rows: &[(f64, bool, f64)]) -> SurvivalDataset {
    let records = rows
        .iter()
        .enumerate()
        .map(|(i, &(time, event, x))| SurvivalRecord { id: format!("{}", i + 1), time, event, covariates: vec![x] })
        .collect();
    SurvivalDataset::new(records, vec!["x".into()]).unwrap()
}

fn synthetic(n: usize, seed: u64) -> SurvivalDataset {
    let mut cfg = SyntheticConfig::new(n, Scenario::Ph, seed);
    cfg.censoring_rate = 0.08;
    simulate_synthetic(&cfg).unwrap().0
}

/// Hand-made cross-validated curves: `curves[j][i]` on the grid and
/// `own[j][i]` at each individual's time.
fn manual_cv(target: Target, grid: &[f64], curves: Vec<Vec<Vec<f64>>>, own: Vec<Vec<f64>>, fold_of: Vec<usize>) -> CvCurves {
    let n = fold_of.len();
    CvCurves {
        target,
        labels: (0..curves.len()).map(|j| format!("l{j}")).collect(),
        library_index: (0..curves.len()).collect(),
        curves: curves.into_iter().map(|c| CurveMatrix::new(grid.to_vec(), n, c.concat()).unwrap()).collect(),
        at_own_time: own,
        n_folds: fold_of.iter().max().unwrap() + 1,
        fold_of,
    }
}

// ---- cross-validated curves ------------------------------------------------

#[test]
fn kaplan_meier_rows_are_identical_within_a_fold() {
    let data = synthetic(120, 3);
    let grid = make_grid(10.0, 20).unwrap();
    let folds = assign_folds(&data, 4, 9).unwrap();
    let specs = [LearnerSpec::new("km", Family::KaplanMeier), LearnerSpec::new("cox", Family::Cox)];
    let (cv, dropped) = cross_validate_curves(&data, &specs, Target::Event, &folds, &grid, 5).unwrap();
    assert!(dropped.is_empty());
    for k in 0..4 {
        let members = cv.fold_members(k);
        for &i in &members {
            assert_eq!(cv.curves[0].row(i), cv.curves[0].row(members[0]));
        }
    }
    for c in &cv.curves {
        assert!(c.is_survival());
    }
}

#[test]
fn discrete_families_are_rejected() {
    let data = synthetic(40, 1);
    let grid = make_grid(5.0, 10).unwrap();
    let folds = assign_folds(&data, 2, 1).unwrap();
    let specs = [LearnerSpec::new("mean", Family::DiscreteMean)];
    assert!(cross_validate_curves(&data, &specs, Target::Event, &folds, &grid, 1).is_err());
}

// ---- initial censoring -----------------------------------------------------

#[test]
fn initial_censoring_without_censoring_is_one() {
    let data = dataset(&[(1.0, true, 0.0), (2.0, true, 0.0), (3.0, true, 0.0)]);
    assert_eq!(initial_censoring(&data), [1.0, 1.0, 1.0]);
}

#[test]
fn initial_censoring_three_records() {
    // Censoring at 2 with 2 at risk (the event at 1 has left): Ĝ(2) = 1/2.
    let data = dataset(&[(1.0, true, 0.0), (2.0, false, 0.0), (3.0, true, 0.0)]);
    assert_eq!(initial_censoring(&data), [1.0, 0.5, 0.5]);
}

// ---- pseudo-outcomes -------------------------------------------------------

#[test]
fn pseudo_fg_substitutions() {
    let data = dataset(&[(2.0, true, 0.0), (2.0, false, 0.0)]);
    let f = pseudo_fg(&data, &[0.8, 0.8], &[1.0, 2.0, 3.0]).unwrap();
    assert_eq!(f.get(0, 0), 1.0);
    assert!((f.get(0, 2) - (1.0 - 1.0 / 0.8)).abs() < 1e-15);
    assert!((f.get(0, 2) + 0.25).abs() < 1e-15);
    // I(T̃ ≤ t) holds at t = T̃.
    assert!((f.get(0, 1) + 0.25).abs() < 1e-15);
    assert!((0..3).all(|t| f.get(1, t) == 1.0));
}

#[test]
fn pseudo_fs_uses_strict_inequality() {
    let data = dataset(&[(2.0, false, 0.0), (2.0, true, 0.0)]);
    let f = pseudo_fs(&data, &[0.5, 0.5], &[2.0, 2.5]).unwrap();
    assert_eq!(f.get(0, 0), 1.0);
    assert_eq!(f.get(0, 1), -1.0);
    assert!((0..2).all(|t| f.get(1, t) == 1.0));
}

#[test]
fn pseudo_denominators_are_floored() {
    let data = dataset(&[(1.0, true, 0.0)]);
    let f = pseudo_fg(&data, &[0.01], &[2.0]).unwrap();
    assert_eq!(f.floored, 1);
    assert!((f.get(0, 0) - (1.0 - 1.0 / DENOMINATOR_FLOOR)).abs() < 1e-12);
}

proptest! {
    #[test]
    fn pseudo_outcome_invariants(
        people in proptest::collection::vec((0.1f64..5.0, any::<bool>(), 0.0f64..1.0), 1..20)
    ) {
        let rows: Vec<(f64, bool, f64)> = people.iter().map(|&(t, e, _)| (t, e, 0.0)).collect();
        let mut rows = rows;
        rows[0].1 = true;
        let data = dataset(&rows);
        let denoms: Vec<f64> = people.iter().map(|p| p.2).collect();
        let grid = make_grid(5.0, 25).unwrap();
        let fg = pseudo_fg(&data, &denoms, grid.points()).unwrap();
        let fs = pseudo_fs(&data, &denoms, grid.points()).unwrap();
        for (i, &(time, event, _)) in rows.iter().enumerate() {
            for (k, &t) in grid.points().iter().enumerate() {
                prop_assert!(fg.get(i, k) <= 1.0 && fs.get(i, k) <= 1.0);
                if t < time || !event {
                    prop_assert_eq!(fg.get(i, k), 1.0);
                }
                if t <= time || event {
                    prop_assert_eq!(fs.get(i, k), 1.0);
                }
            }
        }
    }
}

// ---- losses ----------------------------------------------------------------

fn pseudo_matrix(n_rows: usize, n_cols: usize, values: Vec<f64>) -> PseudoOutcomeMatrix {
    PseudoOutcomeMatrix { n_rows, n_cols, values, floored: 0 }
}

#[test]
fn loss_is_zero_for_perfect_curves() {
    let f = pseudo_matrix(2, 2, vec![1.0, -0.25, 1.0, 1.0]);
    assert_eq!(event_loss(&f.values, &f, 0.5, &[0, 1]).unwrap(), 0.0);
    assert_eq!(censoring_loss(&f.values, &f, 0.5, &[0, 1]).unwrap(), 0.0);
}

#[test]
fn loss_single_cell() {
    let f = pseudo_matrix(1, 1, vec![1.0]);
    assert!((event_loss(&[0.6], &f, 0.5, &[0]).unwrap() - 0.08).abs() < 1e-15);
    assert!((censoring_loss(&[0.6], &f, 0.5, &[0]).unwrap() - 0.08).abs() < 1e-15);
}

// Five people, grid {1, 2} (v = 1), Ĝ(T̃) = 0.8 for everyone.
//   1: event at 1.5  → f_G = (1, −0.25)
//   2: censored 0.5  → f_G = (1, 1)
//   3: event at 0.7  → f_G = (−0.25, −0.25)
//   4: event at 3.0  → f_G = (1, 1)
//   5: event at 2.0  → f_G = (1, −0.25)
#[test]
fn event_loss_five_person_fixture() {
    let data = dataset(&[(1.5, true, 0.0), (0.5, false, 0.0), (0.7, true, 0.0), (3.0, true, 0.0), (2.0, true, 0.0)]);
    let f = pseudo_fg(&data, &[0.8; 5], &[1.0, 2.0]).unwrap();
    assert_eq!(f.values, [1.0, -0.25, 1.0, 1.0, -0.25, -0.25, 1.0, 1.0, 1.0, -0.25]);
    let s = [0.9, 0.6, 0.95, 0.9, 0.5, 0.3, 0.8, 0.7, 0.85, 0.4];
    let members = [0, 2, 4];
    let hand = ((0.9f64 - 1.0).powi(2)
        + (0.6f64 + 0.25).powi(2)
        + (0.5f64 + 0.25).powi(2)
        + (0.3f64 + 0.25).powi(2)
        + (0.85f64 - 1.0).powi(2)
        + (0.4f64 + 0.25).powi(2))
        / 3.0;
    assert!((event_loss(&s, &f, 1.0, &members).unwrap() - hand).abs() < 1e-12);
}

// The censoring analogue: Ŝ(T̃) = 0.5 for everyone, f_S only moves for the
// censored person 2 (T̃ = 0.5 < both grid times): (−1, −1).
#[test]
fn censoring_loss_five_person_fixture() {
    let data = dataset(&[(1.5, true, 0.0), (0.5, false, 0.0), (0.7, true, 0.0), (3.0, true, 0.0), (2.0, true, 0.0)]);
    let f = pseudo_fs(&data, &[0.5; 5], &[1.0, 2.0]).unwrap();
    let g = [0.9, 0.8, 0.7, 0.6, 1.0, 1.0, 0.95, 0.9, 0.85, 0.8];
    let hand = (0.01 + 0.04 + 1.7f64.powi(2) + 1.6f64.powi(2) + 0.0 + 0.0) / 3.0;
    assert!((censoring_loss(&g, &f, 1.0, &[0, 1, 2]).unwrap() - hand).abs() < 1e-12);
}

// ---- ensembles -------------------------------------------------------------

#[test]
fn single_learner_ensemble_is_one() {
    let grid = [1.0, 2.0];
    let cv = manual_cv(Target::Event, &grid, vec![vec![vec![0.9, 0.8], vec![0.7, 0.6]]], vec![vec![0.8, 0.6]], vec![0, 1]);
    let f = pseudo_matrix(2, 2, vec![1.0, 0.0, 1.0, 1.0]);
    assert_eq!(fit_event_ensemble(&f, &cv).unwrap().weights, [1.0]);
    assert_eq!(fit_censoring_ensemble(&f, &cv).unwrap().weights, [1.0]);
}

#[test]
fn duplicated_learner_splits_its_weight() {
    let data = synthetic(150, 4);
    let grid = make_grid(8.0, 16).unwrap();
    let folds = assign_folds(&data, 3, 2).unwrap();
    let specs = [LearnerSpec::new("km", Family::KaplanMeier), LearnerSpec::new("cox", Family::Cox)];
    let (cv, _) = cross_validate_curves(&data, &specs, Target::Event, &folds, &grid, 1).unwrap();
    let f = pseudo_fg(&data, &initial_censoring(&data), grid.points()).unwrap();
    let single = fit_event_ensemble(&f, &cv).unwrap();
    let mut doubled = cv.clone();
    doubled.labels.push("cox-copy".into());
    doubled.curves.push(cv.curves[1].clone());
    doubled.at_own_time.push(cv.at_own_time[1].clone());
    let w = fit_event_ensemble(&f, &doubled).unwrap();
    // Same objective, and the copies share the original's weight.
    assert!((w.objective - single.objective).abs() < 1e-9 * single.objective.max(1.0));
    assert!((w.weights[1] + w.weights[2] - single.weights[1]).abs() < 1e-8);
    assert!((w.weights[0] - single.weights[0]).abs() < 1e-8);
}

#[test]
fn ensemble_beats_every_vertex() {
    let data = synthetic(200, 5);
    let grid = make_grid(8.0, 20).unwrap();
    let folds = assign_folds(&data, 4, 2).unwrap();
    let specs = [
        LearnerSpec::new("km", Family::KaplanMeier),
        LearnerSpec::new("cox", Family::Cox),
        LearnerSpec::new("exp", Family::Exponential),
    ];
    let (cv, _) = cross_validate_curves(&data, &specs, Target::Event, &folds, &grid, 1).unwrap();
    let f = pseudo_fg(&data, &initial_censoring(&data), grid.points()).unwrap();
    let w = fit_event_ensemble(&f, &cv).unwrap();
    assert!(w.weights.iter().all(|&a| a >= 0.0));
    assert!((w.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    let best_vertex = w.vertex_objectives.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(w.objective <= best_vertex + 1e-9, "{} vs {best_vertex}", w.objective);
}

// ---- iteration -------------------------------------------------------------

fn libraries() -> (Vec<LearnerSpec>, Vec<LearnerSpec>) {
    (
        vec![
            LearnerSpec::new("km", Family::KaplanMeier),
            LearnerSpec::new("cox", Family::Cox),
            LearnerSpec::new("weibull", Family::Weibull),
        ],
        vec![LearnerSpec::new("km", Family::KaplanMeier), LearnerSpec::new("cox", Family::Cox)],
    )
}

#[test]
fn single_learners_converge_immediately() {
    let data = synthetic(100, 6);
    let grid = make_grid(8.0, 10).unwrap();
    let folds = assign_folds(&data, 3, 1).unwrap();
    let km = [LearnerSpec::new("km", Family::KaplanMeier)];
    let (ev, _) = cross_validate_curves(&data, &km, Target::Event, &folds, &grid, 1).unwrap();
    let (ce, _) = cross_validate_curves(&data, &km, Target::Censoring, &folds, &grid, 1).unwrap();
    let dual = iterate(&IterationConfig::new(grid), &ev, &ce, &data).unwrap();
    assert!(dual.converged && dual.iterations <= 2);
    assert_eq!((dual.alpha.weights.as_slice(), dual.beta.weights.as_slice()), ([1.0].as_slice(), [1.0].as_slice()));
}

#[test]
fn marginal_censoring_candidate_fixes_the_event_ensemble() {
    let data = synthetic(200, 7);
    let grid = make_grid(8.0, 20).unwrap();
    let folds = assign_folds(&data, 4, 1).unwrap();
    let (event_specs, _) = libraries();
    let (ev, _) = cross_validate_curves(&data, &event_specs, Target::Event, &folds, &grid, 1).unwrap();
    let km = [LearnerSpec::new("km", Family::KaplanMeier)];
    let (ce, _) = cross_validate_curves(&data, &km, Target::Censoring, &folds, &grid, 1).unwrap();
    let dual = iterate(&IterationConfig::new(grid), &ev, &ce, &data).unwrap();
    assert!(dual.converged && dual.iterations <= 2, "{:?}", dual.deltas);
}

#[test]
fn iteration_settles_on_synthetic_data() {
    let data = synthetic(300, 8);
    let grid = make_grid(8.0, 40).unwrap();
    let folds = assign_folds(&data, 5, 1).unwrap();
    let (e, c) = libraries();
    let (ev, _) = cross_validate_curves(&data, &e, Target::Event, &folds, &grid, 1).unwrap();
    let (ce, _) = cross_validate_curves(&data, &c, Target::Censoring, &folds, &grid, 1).unwrap();
    let config = IterationConfig::new(grid);
    let dual = iterate(&config, &ev, &ce, &data).unwrap();
    assert!(dual.converged, "{:?}", dual.deltas);
    assert_eq!(dual.deltas.len(), dual.iterations);
    for w in [&dual.alpha.weights, &dual.beta.weights] {
        assert!(w.iter().all(|&a| a >= 0.0) && (w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    if dual.deltas.len() > 2 {
        assert!(dual.deltas[1..].windows(2).all(|d| d[1] <= d[0] + 1e-12), "{:?}", dual.deltas);
    }
    let more = continue_iteration(&config, &ev, &ce, &data, &dual).unwrap();
    let moved = more.alpha.weights.iter().zip(&dual.alpha.weights).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(moved < 1e-4);
}

#[test]
fn non_ensemble_agrees_with_a_dominant_learner() {
    // Learner 0 reproduces f_G's mean exactly; learner 1 is far off in
    // every fold.
    let data = dataset(&[
        (0.5, true, 0.0),
        (1.5, true, 0.0),
        (2.5, false, 0.0),
        (0.8, true, 0.0),
        (1.2, false, 0.0),
        (3.0, true, 0.0),
    ]);
    let grid = make_grid(2.0, 4).unwrap();
    let g = initial_censoring(&data);
    let f = pseudo_fg(&data, &g, grid.points()).unwrap();
    let good: Vec<Vec<f64>> = (0..6).map(|i| (0..4).map(|t| f.get(i, t).clamp(0.0, 1.0)).collect()).collect();
    let bad: Vec<Vec<f64>> = vec![vec![0.02, 0.01, 0.005, 0.0]; 6];
    let cv = manual_cv(Target::Event, grid.points(), vec![good, bad], vec![vec![1.0; 6], vec![0.0; 6]], vec![0, 1, 2, 0, 1, 2]);
    let table = LossTable::compute(&cv, &f, grid.spacing()).unwrap();
    assert!(table.per_fold[0].iter().zip(&table.per_fold[1]).all(|(a, b)| a < b));
    assert_eq!(table.best(), 0);
    let w = fit_event_ensemble(&f, &cv).unwrap();
    assert!(w.weights[0] >= 0.99, "{:?}", w.weights);
}

// ---- deployment ------------------------------------------------------------

#[test]
fn deployed_ensemble_combines_by_hand() {
    let data = synthetic(150, 9);
    let (e, c) = libraries();
    let config = WestlingConfig {
        horizon: 8.0,
        grid_points: 20,
        folds: 3,
        epsilon: 1e-5,
        max_iterations: 20,
        ensemble: true,
        seed: 4,
    };
    let fit = fit_westling_sl(&data, &e, &c, &config).unwrap();
    let rows = data.covariate_rows();
    let times = [1.0, 4.0, 7.5];
    let sl = fit.predictor.survival_matrix(&rows[..5], &times).unwrap();
    assert!(sl.is_survival());
    let ev = &fit.predictor.event;
    for i in 0..5 {
        for (k, &t) in times.iter().enumerate() {
            let hand: f64 = ev
                .learners
                .iter()
                .zip(&ev.weights)
                .map(|(l, w)| w * l.predict_survival(rows[i], &[t]).unwrap()[0])
                .sum();
            assert!((sl.get(i, k) - hand.clamp(0.0, 1.0)).abs() < 1e-12);
        }
    }
    assert_eq!(fit.event_losses.labels.len(), 3);
    assert!(e.iter().any(|s| s.label == fit.best_event));
}

#[test]
fn identical_learners_average_to_themselves() {
    let data = synthetic(100, 10);
    let fitted = crate::learners::fit(&LearnerSpec::new("cox", Family::Cox), TrainingData::Survival(&data), Target::Event, 1)
        .unwrap();
    let wc = WeightedCurves { learners: vec![fitted.clone(), fitted.clone()], weights: vec![0.5, 0.5] };
    let rows = data.covariate_rows();
    let times = [0.5, 2.0, 6.0];
    let a = wc.survival_matrix(&rows[..4], &times).unwrap();
    let b = fitted.survival_matrix(&rows[..4], &times).unwrap();
    for (x, y) in a.values().iter().zip(b.values()) {
        assert!((x - y).abs() < 1e-15);
    }
}

use crate::learners::{SurvivalPredictor, TrainingData};
