use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use super::*;
use crate::data::{assign_folds, make_grid, simulate_synthetic, Scenario, SurvivalRecord, SyntheticConfig, SyntheticTruth};
use crate::learners::{fit, Family, SurvivalPredictor, TrainingData};

fn synthetic(n: usize, seed: u64) -> (SurvivalDataset, SyntheticTruth) {
    let mut cfg = SyntheticConfig::new(n, Scenario::Ph, seed);
    cfg.censoring_rate = 0.08;
    simulate_synthetic(&cfg).unwrap()
}

fn dataset(rows: &[(f64, bool)]) -> SurvivalDataset {
    let records = rows
        .iter()
        .enumerate()
        .map(|(i, &(time, event))| SurvivalRecord { id: format!("{}", i + 1), time, event, covariates: vec![0.0] })
        .collect();
    SurvivalDataset::new(records, vec!["x".into()]).unwrap()
}

fn libraries() -> Vec<LearnerSpec> {
    vec![LearnerSpec::new("na", Family::NelsonAalen), LearnerSpec::new("cox", Family::Cox)]
}

/// Appends a pseudo-learner whose "predictions" are the generating
/// cumulative hazards.
fn push_truth(cv: &mut CvCumhaz, data: &SurvivalDataset, grid: &TimeGrid, h: impl Fn(f64, &[f64]) -> f64) {
    let values = data
        .records()
        .iter()
        .flat_map(|r| grid.points().iter().map(|&t| h(t, &r.covariates)).collect::<Vec<_>>())
        .collect();
    cv.labels.push("truth".into());
    cv.library_index.push(cv.library_index.len());
    cv.curves.push(CurveMatrix::new(grid.points().to_vec(), data.len(), values).unwrap());
}

fn occupancy(at_risk: &[f64], event: &[f64], censored: &[f64]) -> StateOccupancy {
    StateOccupancy { at_risk: at_risk.to_vec(), event: event.to_vec(), censored: censored.to_vec() }
}

// ---- observed states --------------------------------------------------------

#[test]
fn observed_path_jumps_once_at_the_follow_up_time() {
    let e = ObservedStatePath::new(2.0, true);
    let c = ObservedStatePath::new(3.0, false);
    assert_eq!(e.at(1.999), ObservedState::AtRisk);
    assert_eq!(e.at(2.0), ObservedState::Event);
    assert_eq!(e.at(50.0), ObservedState::Event);
    assert_eq!(c.at(2.5), ObservedState::AtRisk);
    assert_eq!(c.at(3.0), ObservedState::Censored);
    assert_eq!([c.at(3.0).code(), c.at(0.0).code(), e.at(9.0).code()], [-1, 0, 1]);
}

// ---- cross-validated cumulative hazards --------------------------------------

#[test]
fn nelson_aalen_rows_are_constant_within_a_fold() {
    let (data, _) = synthetic(120, 3);
    let folds = assign_folds(&data, 4, 3).unwrap();
    let grid = make_grid(8.0, 16).unwrap();
    let (cv, dropped) = cross_validate_cumhaz(&data, &libraries(), Target::Event, &folds, &grid, 3).unwrap();
    assert!(dropped.is_empty());
    for k in 0..4 {
        let members = folds.validation(k);
        for &i in &members {
            assert_eq!(cv.curves[0].row(i), cv.curves[0].row(members[0]));
        }
    }
    let other = (0..120).find(|&i| folds.fold_of(i) != folds.fold_of(0)).unwrap();
    assert_ne!(cv.curves[0].row(0), cv.curves[0].row(other));
}

#[test]
fn cox_cumulative_hazard_is_minus_log_survival() {
    let (data, _) = synthetic(150, 5);
    let model = fit(&LearnerSpec::new("cox", Family::Cox), TrainingData::Survival(&data), Target::Event, 5).unwrap();
    let times = [0.5, 2.0, 4.0, 7.5];
    for r in data.records().iter().take(20) {
        let h = model.predict_cumhaz(&r.covariates, &times).unwrap();
        let s = model.predict_survival(&r.covariates, &times).unwrap();
        for (h, s) in h.iter().zip(&s) {
            assert_abs_diff_eq!(*h, -s.ln(), epsilon = 1e-10);
        }
    }
}

#[test]
fn cross_validated_rows_are_non_decreasing() {
    let (data, _) = synthetic(150, 8);
    let folds = assign_folds(&data, 5, 8).unwrap();
    let grid = make_grid(8.0, 30).unwrap();
    let mut specs = libraries();
    specs.push(LearnerSpec::new("weibull", Family::Weibull));
    specs.push(LearnerSpec::new("km", Family::KaplanMeier));
    specs.push(LearnerSpec::new("forest", Family::SurvivalForest));
    for target in [Target::Event, Target::Censoring] {
        let (cv, _) = cross_validate_cumhaz(&data, &specs, target, &folds, &grid, 8).unwrap();
        assert_eq!(cv.n_learners(), 5);
        for c in &cv.curves {
            for i in 0..data.len() {
                let row = c.row(i);
                assert!(row[0] >= 0.0);
                assert!(row.windows(2).all(|w| w[1] >= w[0] - 1e-12), "{target} row {i}");
            }
        }
    }
}

#[test]
fn discrete_families_are_rejected() {
    let (data, _) = synthetic(60, 1);
    let folds = assign_folds(&data, 3, 1).unwrap();
    let grid = make_grid(5.0, 10).unwrap();
    let specs = [LearnerSpec::new("glm", Family::DiscreteHazardGlm)];
    assert!(cross_validate_cumhaz(&data, &specs, Target::Event, &folds, &grid, 1).is_err());
}

// ---- state occupancy -------------------------------------------------------

#[test]
fn zero_hazards_stay_at_risk() {
    let occ = state_occupancy("a", &[0.0; 5], "b", &[0.0; 5]).unwrap();
    assert_eq!(occ.at_risk, vec![1.0; 5]);
    assert_eq!(occ.event, vec![0.0; 5]);
    assert_eq!(occ.censored, vec![0.0; 5]);
}

#[test]
fn single_step_shows_the_exp_versus_sum_gap() {
    let occ = state_occupancy("a", &[0.1], "b", &[0.0]).unwrap();
    assert_abs_diff_eq!(occ.at_risk[0], 0.904_837_418_035_959_6, epsilon = 1e-15);
    assert_abs_diff_eq!(occ.event[0], 0.1, epsilon = 1e-15);
    assert_eq!(occ.censored[0], 0.0);
    assert_abs_diff_eq!(occ.state_sum_gap(), 0.004_837_418_035_959_6, epsilon = 1e-12);
}

#[test]
fn hand_substitution_over_three_points() {
    // Λ = (0.1, 0.3, 0.3), Γ = (0.0, 0.1, 0.4):
    // F0 = e^-0.1, e^-0.4, e^-0.7
    // F1 = 0.1, 0.1 + 0.2 e^-0.1, same
    // F-1 = 0, 0.1 e^-0.1, 0.1 e^-0.1 + 0.3 e^-0.4
    let occ = state_occupancy("a", &[0.1, 0.3, 0.3], "b", &[0.0, 0.1, 0.4]).unwrap();
    let e = f64::exp;
    let want0 = [e(-0.1), e(-0.4), e(-0.7)];
    let want1 = [0.1, 0.1 + 0.2 * e(-0.1), 0.1 + 0.2 * e(-0.1)];
    let wantc = [0.0, 0.1 * e(-0.1), 0.1 * e(-0.1) + 0.3 * e(-0.4)];
    for t in 0..3 {
        assert_abs_diff_eq!(occ.at_risk[t], want0[t], epsilon = 1e-14);
        assert_abs_diff_eq!(occ.event[t], want1[t], epsilon = 1e-14);
        assert_abs_diff_eq!(occ.censored[t], wantc[t], epsilon = 1e-14);
    }
}

#[test]
fn equal_hazards_give_equal_absorbing_states() {
    let h = [0.05, 0.2, 0.2, 0.6, 1.1];
    let occ = state_occupancy("a", &h, "b", &h).unwrap();
    assert_eq!(occ.event, occ.censored);
}

#[test]
fn negative_increment_names_the_learner() {
    let err = state_occupancy("wobbly", &[0.1, 0.05], "km", &[0.0, 0.0]).unwrap_err().to_string();
    assert!(err.contains("'wobbly'") && err.contains("negative"), "{err}");
    let err = state_occupancy("cox", &[0.1, 0.2], "bad-censoring", &[0.3, 0.1]).unwrap_err().to_string();
    assert!(err.contains("'bad-censoring'"), "{err}");
}

#[test]
fn state_sum_gap_shrinks_with_a_finer_grid() {
    let lambda = |t: f64| (t / 4.0).powf(1.5);
    let gamma = |t: f64| 0.1 * t;
    let gap = |n: usize| {
        let grid = make_grid(6.0, n).unwrap();
        let l: Vec<f64> = grid.points().iter().map(|&t| lambda(t)).collect();
        let g: Vec<f64> = grid.points().iter().map(|&t| gamma(t)).collect();
        state_occupancy("a", &l, "b", &g).unwrap().state_sum_gap()
    };
    let (coarse, fine) = (gap(100), gap(1000));
    assert!(fine < coarse, "{fine} vs {coarse}");
}

#[test]
fn state_sum_gap_is_small_on_the_synthetic_fixture() {
    let (data, truth) = synthetic(300, 4);
    let grid = make_grid(8.0, 1000).unwrap();
    let mut gap: f64 = 0.0;
    for r in data.records() {
        let l: Vec<f64> = grid.points().iter().map(|&t| truth.cumulative_hazard(t, &r.covariates)).collect();
        let g: Vec<f64> = grid.points().iter().map(|&t| truth.censoring_cumulative_hazard(t, &r.covariates)).collect();
        gap = gap.max(state_occupancy("truth", &l, "truth", &g).unwrap().state_sum_gap());
    }
    assert!(gap <= 0.02, "{gap}");
}

proptest! {
    #[test]
    fn occupancies_are_monotone_probabilities(
        steps in prop::collection::vec((0.0f64..0.5, 0.0f64..0.5), 1..40),
    ) {
        let mut l = Vec::new();
        let mut g = Vec::new();
        let (mut a, mut b) = (0.0, 0.0);
        for (dl, dg) in steps {
            a += dl;
            b += dg;
            l.push(a);
            g.push(b);
        }
        let occ = state_occupancy("a", &l, "b", &g).unwrap();
        for t in 0..occ.len() {
            prop_assert!((0.0..=1.0).contains(&occ.at_risk[t]));
            prop_assert!(occ.event[t] >= 0.0 && occ.censored[t] >= 0.0);
            if t > 0 {
                prop_assert!(occ.at_risk[t] <= occ.at_risk[t - 1]);
                prop_assert!(occ.event[t] >= occ.event[t - 1]);
                prop_assert!(occ.censored[t] >= occ.censored[t - 1]);
            }
        }
    }
}

// ---- Brier scores ------------------------------------------------------------

#[test]
fn perfect_and_uniform_brier_scores() {
    let perfect = occupancy(&[1.0], &[0.0], &[0.0]);
    assert_eq!(brier_individual(&perfect, ObservedState::AtRisk, 0), 0.0);
    let third = 1.0 / 3.0;
    let uniform = occupancy(&[third], &[third], &[third]);
    for s in [ObservedState::Censored, ObservedState::AtRisk, ObservedState::Event] {
        assert_abs_diff_eq!(brier_individual(&uniform, s, 0), 2.0 / 3.0, epsilon = 1e-15);
    }
}

#[test]
fn four_person_brier_by_hand() {
    // At t = 1.0:
    // A (event at 0.5):    F = (0.6, 0.3, 0.1), η = 1  → 0.36 + 0.49 + 0.01 = 0.86
    // B (censored at 0.7): F = (0.5, 0.2, 0.3), η = −1 → 0.25 + 0.04 + 0.49 = 0.78
    // C (event at 2.0):    F = (0.9, 0.1, 0.0), η = 0  → 0.01 + 0.01 + 0    = 0.02
    // D (censored at 1.0): F = (0.8, 0.1, 0.1), η = −1 → 0.64 + 0.01 + 0.81 = 1.46
    // mean = 3.12 / 4 = 0.78
    let occ = vec![
        occupancy(&[0.6], &[0.3], &[0.1]),
        occupancy(&[0.5], &[0.2], &[0.3]),
        occupancy(&[0.9], &[0.1], &[0.0]),
        occupancy(&[0.8], &[0.1], &[0.1]),
    ];
    let paths = [
        ObservedStatePath::new(0.5, true),
        ObservedStatePath::new(0.7, false),
        ObservedStatePath::new(2.0, true),
        ObservedStatePath::new(1.0, false),
    ];
    assert_abs_diff_eq!(brier_states(&occ, &paths, &[1.0], 0).unwrap(), 0.78, epsilon = 1e-14);
    assert!(brier_states(&occ[..2], &paths, &[1.0], 0).is_err());
}

#[test]
fn integrated_brier_is_a_rectangle_rule() {
    let grid = make_grid(7.5, 30).unwrap();
    assert_eq!(integrated_brier(&[0.0; 30], grid.spacing()), 0.0);
    assert_abs_diff_eq!(integrated_brier(&[0.37; 30], grid.spacing()), 0.37 * 7.5, epsilon = 1e-12);
    // v = 0.5: 0.5 · (0.1 + 0.4 + 0.25) = 0.375
    assert_abs_diff_eq!(integrated_brier(&[0.1, 0.4, 0.25], 0.5), 0.375, epsilon = 1e-15);
}

#[test]
fn pair_table_matches_a_direct_evaluation() {
    // Two individuals per fold, grid (1, 2), hand-set cumulative hazards.
    let data = dataset(&[(0.5, true), (1.5, false), (2.5, true), (1.0, true)]);
    let grid = make_grid(2.0, 2).unwrap();
    let fold_of = vec![0, 0, 1, 1];
    let cv = |target, rows: Vec<[f64; 2]>| CvCumhaz {
        target,
        labels: vec!["only".into()],
        library_index: vec![0],
        curves: vec![CurveMatrix::new(vec![1.0, 2.0], 4, rows.concat()).unwrap()],
        fold_of: fold_of.clone(),
        n_folds: 2,
    };
    let event = cv(Target::Event, vec![[0.2, 0.5], [0.1, 0.1], [0.0, 0.3], [0.4, 0.4]]);
    let censoring = cv(Target::Censoring, vec![[0.1, 0.2], [0.0, 0.5], [0.2, 0.2], [0.1, 0.3]]);
    let table = PairRiskTable::compute(&event, &censoring, &data, &grid).unwrap();

    let times = grid.points();
    let paths: Vec<ObservedStatePath> = data.records().iter().map(ObservedStatePath::of).collect();
    let occ: Vec<StateOccupancy> = (0..4)
        .map(|i| state_occupancy("e", event.curves[0].row(i), "c", censoring.curves[0].row(i)).unwrap())
        .collect();
    for (k, members) in [[0usize, 1], [2, 3]].iter().enumerate() {
        let o: Vec<StateOccupancy> = members.iter().map(|&i| occ[i].clone()).collect();
        let p: Vec<ObservedStatePath> = members.iter().map(|&i| paths[i]).collect();
        let scores: Vec<f64> = (0..2).map(|t| brier_states(&o, &p, times, t).unwrap()).collect();
        assert_abs_diff_eq!(table.per_fold[0][0][k], integrated_brier(&scores, 1.0), epsilon = 1e-14);
    }
    assert_abs_diff_eq!(table.mean[0][0], (table.per_fold[0][0][0] + table.per_fold[0][0][1]) / 2.0, epsilon = 1e-15);
}

// ---- selection -------------------------------------------------------------

fn table(mean: Vec<Vec<f64>>) -> PairRiskTable {
    PairRiskTable {
        event_labels: (0..mean.len()).map(|j| format!("e{j}")).collect(),
        censoring_labels: (0..mean[0].len()).map(|j| format!("c{j}")).collect(),
        per_fold: mean.iter().map(|r| r.iter().map(|&v| vec![v]).collect()).collect(),
        mean,
    }
}

#[test]
fn unique_argmin_is_selected() {
    let sel = select_pair(&table(vec![vec![0.4, 0.3], vec![0.2, 0.5]])).unwrap();
    assert_eq!((sel.event, sel.censoring, sel.tie), (1, 0, false));
    assert_eq!((sel.event_label.as_str(), sel.censoring_label.as_str()), ("e1", "c0"));
}

#[test]
fn ties_take_the_first_pair_and_are_flagged() {
    let sel = select_pair(&table(vec![vec![0.4, 0.4], vec![0.5, 0.6]])).unwrap();
    assert_eq!((sel.event, sel.censoring, sel.tie), (0, 0, true));
    let sel = select_pair(&table(vec![vec![0.4, 0.2], vec![0.2, 0.1]])).unwrap();
    assert_eq!((sel.event, sel.censoring, sel.tie), (1, 1, false));
}

#[test]
fn empty_or_non_finite_tables_are_errors() {
    assert!(select_pair(&table(vec![vec![]])).is_err());
    assert!(select_pair(&table(vec![vec![0.1, f64::NAN]])).is_err());
}

fn oracle_table(n: usize, seed: u64) -> PairRiskTable {
    let mut cfg = SyntheticConfig::new(n, Scenario::Interaction, seed);
    cfg.censoring_rate = 0.08;
    cfg.censoring_effect = 0.7;
    let (data, truth) = simulate_synthetic(&cfg).unwrap();
    let folds = assign_folds(&data, 5, seed).unwrap();
    let grid = make_grid(8.0, 100).unwrap();
    let (mut event, _) = cross_validate_cumhaz(&data, &libraries(), Target::Event, &folds, &grid, seed).unwrap();
    let (mut censoring, _) =
        cross_validate_cumhaz(&data, &libraries(), Target::Censoring, &folds, &grid, seed).unwrap();
    push_truth(&mut event, &data, &grid, |t, x| truth.cumulative_hazard(t, x));
    push_truth(&mut censoring, &data, &grid, |t, x| truth.censoring_cumulative_hazard(t, x));
    PairRiskTable::compute(&event, &censoring, &data, &grid).unwrap()
}

#[test]
fn true_event_hazards_occupy_the_lowest_cells() {
    let t = oracle_table(600, 21);
    let mut cells: Vec<(f64, usize)> =
        t.mean.iter().enumerate().flat_map(|(j, r)| r.iter().map(move |&v| (v, j))).collect();
    cells.sort_by(|a, b| a.0.total_cmp(&b.0));
    assert_eq!(cells[0].1, 2, "{:?}", t.mean);
    assert_eq!(cells[1].1, 2, "{:?}", t.mean);
    assert_eq!(select_pair(&t).unwrap().event_label, "truth");
}

#[test]
fn true_pair_wins_in_nine_of_ten_seeds() {
    let wins = (0..10u64)
        .filter(|&s| {
            let t = oracle_table(2000, 100 + s);
            let best = t.mean[2][2];
            t.mean.iter().flatten().all(|&v| best <= v)
        })
        .count();
    assert!(wins >= 9, "{wins}/10");
}

// ---- end to end ------------------------------------------------------------

#[test]
fn cox_with_km_censoring_predicts_the_full_data_cox_curve() {
    let (data, _) = synthetic(200, 13);
    let event = [LearnerSpec::new("cox", Family::Cox)];
    let censoring = [LearnerSpec::new("km", Family::KaplanMeier)];
    let fit = fit_state_learner(&data, &event, &censoring, &StateLearnerConfig::new(8.0, 13)).unwrap();
    assert_eq!((fit.selection.event_label.as_str(), fit.selection.censoring_label.as_str()), ("cox", "km"));
    assert_eq!(fit.fold_sizes.len(), 5);
    assert_eq!(fit.risk.mean.len(), 1);

    let direct = crate::learners::fit_full(&event[0], TrainingData::Survival(&data), Target::Event, 13).unwrap();
    let rows = data.covariate_rows();
    let times = [0.7, 2.5, 6.1];
    let deployed = fit.predictor.survival_matrix(&rows[..10], &times).unwrap();
    for i in 0..10 {
        let want = direct.predict_survival(rows[i], &times).unwrap();
        let by_hand: Vec<f64> = direct.predict_cumhaz(rows[i], &times).unwrap().iter().map(|h| (-h).exp()).collect();
        for t in 0..3 {
            assert_abs_diff_eq!(deployed.get(i, t), want[t], epsilon = 1e-12);
            assert_abs_diff_eq!(deployed.get(i, t), by_hand[t], epsilon = 1e-15);
        }
        assert!(deployed.row(i).windows(2).all(|w| w[1] <= w[0]));
    }
    let g = fit.predictor.censoring_survival_matrix(&rows[..2], &times).unwrap();
    assert_eq!(g.row(0), g.row(1));
}

#[test]
fn end_to_end_is_deterministic() {
    let (data, _) = synthetic(150, 17);
    let config = StateLearnerConfig::new(8.0, 17);
    let a = fit_state_learner(&data, &libraries(), &libraries(), &config).unwrap();
    let b = fit_state_learner(&data, &libraries(), &libraries(), &config).unwrap();
    assert_eq!(a.risk, b.risk);
    assert_eq!(a.selection, b.selection);
    assert_eq!((a.risk.mean.len(), a.risk.mean[0].len()), (2, 2));
    for row in &a.risk.per_fold {
        for cell in row {
            assert_eq!(cell.len(), 5);
            assert!(cell.iter().all(|v| v.is_finite() && *v >= 0.0));
        }
    }
}
