mod common;

use common::{confusion_metrics, random_scores, rank_auc};
use ndarray::Array2;
use polvote::config::{CategoricalField, StudyConfig};
use polvote::eval::{accuracy, auc_ovr, evaluate, macro_precision_recall, DEFAULT_ROC_STEP};
use polvote::model::{Dataset, PartySpace};
use polvote::nonresponse::{permutation_skew, SkewThresholds, SurveyFeature};
use polvote::replicate::analysis_sample;
use polvote::rule::sweep_grid;
use polvote::synth::{generate, GenConfig};
use proptest::prelude::*;

fn synth(n: usize, alignment: f64, seed: u64) -> Dataset {
    let cfg = StudyConfig::default();
    let gen = GenConfig {
        n_respondents: n,
        alignment,
        seed,
        ..GenConfig::default()
    };
    generate(&gen, &cfg.party_space, &cfg.survey, cfg.window).unwrap().dataset
}

/// Drops the first `share` (in a fixed pseudo-random order) of female respondents.
fn drop_women(full: &Dataset, share: f64) -> Dataset {
    let keep = full
        .respondents
        .iter()
        .enumerate()
        .filter(|(i, r)| r.survey.gender != "female" || ((i * 7919) % 1000) as f64 >= share * 1000.0)
        .map(|(_, r)| r.clone())
        .collect();
    Dataset::new(keep, full.party_space.clone(), full.window).unwrap()
}

#[test]
fn perfect_separation_has_unit_auc() {
    let gold: Vec<usize> = (0..900).map(|i| i % 9).collect();
    let scores = Array2::from_shape_fn((900, 9), |(i, c)| if gold[i] == c { 1.0 } else { 0.0 });
    let auc = auc_ovr(scores.view(), &gold, DEFAULT_ROC_STEP).unwrap();
    assert!((auc - 1.0).abs() <= 2e-4);
}

#[test]
fn random_scores_have_chance_auc() {
    for seed in 0..20 {
        let (s, gold) = random_scores(2000, 9, seed);
        let auc = auc_ovr(s.view(), &gold, DEFAULT_ROC_STEP).unwrap();
        assert!((auc - 0.5).abs() <= 0.03, "seed {seed}: {auc}");
    }
}

#[test]
fn grid_aligned_auc_matches_rank_statistic() {
    for seed in 0..5 {
        let (s, gold) = random_scores(300, 4, seed);
        let mut expected = 0.0;
        for c in 0..4 {
            let pos: Vec<bool> = gold.iter().map(|&g| g == c).collect();
            expected += rank_auc(&s.column(c).to_vec(), &pos) / 4.0;
        }
        let auc = auc_ovr(s.view(), &gold, DEFAULT_ROC_STEP).unwrap();
        assert!((auc - expected).abs() < 1e-9, "seed {seed}: {auc} vs {expected}");
    }
}

#[test]
fn random_subsample_reproducible_and_unskewed() {
    let cfg = StudyConfig::default();
    let full = synth(1500, 0.85, 4);
    let sub = analysis_sample(&full);
    let feat = SurveyFeature::Categorical(CategoricalField::Gender);
    let t = SkewThresholds::default();
    let a = permutation_skew(&full, &sub, feat, &cfg.survey, 300, 9, &t).unwrap();
    let b = permutation_skew(&full, &sub, feat, &cfg.survey, 300, 9, &t).unwrap();
    assert_eq!(a, b);
    let other = permutation_skew(&full, &sub, feat, &cfg.survey, 300, 10, &t).unwrap();
    assert_ne!(a.x2_mean, other.x2_mean);
}

#[test]
fn rule_accuracy_rises_with_alignment() {
    let alignments = [1.0 / 9.0, 0.3, 0.5, 0.7, 0.9];
    let acc: Vec<f64> = alignments
        .iter()
        .map(|&a| {
            let ds = analysis_sample(&synth(3000, a, 21));
            sweep_grid(&ds, &[1], &[0.0]).unwrap()[0].accuracy.unwrap()
        })
        .collect();
    for pair in acc.windows(2) {
        assert!(pair[1] >= pair[0] - 0.03, "{acc:?}");
    }
    assert!(acc[4] > 0.8, "{acc:?}");
}

fn arb_pairs() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (1usize..9).prop_flat_map(|k| prop::collection::vec((0..k, 0..k), 1..300).prop_map(|v| v.into_iter().unzip()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metrics_match_confusion_matrix((gold, pred) in arb_pairs()) {
        let mut m = vec![vec![0u64; 9]; 9];
        for (&g, &p) in gold.iter().zip(&pred) {
            m[g][p] += 1;
        }
        let (acc, prec, rec) = confusion_metrics(&m);
        let (p, r) = macro_precision_recall(&pred, &gold, 9).unwrap();
        prop_assert!((accuracy(&pred, &gold).unwrap() - acc).abs() < 1e-12);
        prop_assert!((p - prec).abs() < 1e-12);
        prop_assert!((r - rec).abs() < 1e-12);
        let report = evaluate(&pred, None, &gold, &PartySpace::synthetic(), 0.0).unwrap();
        prop_assert!(report.left_right_accuracy >= report.accuracy);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn skew_grade_monotone_in_planted_drop(seed in 0u64..1000) {
        let cfg = StudyConfig::default();
        let full = synth(1200, 0.85, seed);
        let feat = SurveyFeature::Categorical(CategoricalField::Gender);
        let t = SkewThresholds::default();
        let grades: Vec<_> = [0.0, 0.2, 0.4, 0.6, 0.8, 0.95]
            .iter()
            .map(|&share| permutation_skew(&full, &drop_women(&full, share), feat, &cfg.survey, 200, seed, &t).unwrap().skew)
            .collect();
        for pair in grades.windows(2) {
            prop_assert!(pair[0] <= pair[1], "{:?}", grades);
        }
    }
}
