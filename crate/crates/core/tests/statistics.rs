use albench_core::analysis::{anova_tukey, AnovaOutcome, MethodGroup};
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use serde::Deserialize;

#[derive(Deserialize)]
struct Reference {
    cases: Vec<Case>,
}

#[derive(Deserialize)]
struct Case {
    groups: Vec<Vec<f64>>,
    f: f64,
    p: f64,
    pairs: Vec<RefPair>,
}

#[derive(Deserialize)]
struct RefPair {
    a: usize,
    b: usize,
    p_adjusted: f64,
}

fn reference() -> Reference {
    let text = include_str!("fixtures/anova_reference.json");
    serde_json::from_str(text).unwrap()
}

#[test]
fn anova_and_tukey_match_scipy_reference() {
    let reference = reference();
    assert_eq!(reference.cases.len(), 50);
    let mut worst_f = 0.0f64;
    let mut worst_p = 0.0f64;
    for (ci, case) in reference.cases.iter().enumerate() {
        let groups: Vec<MethodGroup> = case
            .groups
            .iter()
            .enumerate()
            .map(|(i, g)| MethodGroup::new(format!("m{i}"), g.clone()))
            .collect();
        let report = anova_tukey(&groups, 0.05).unwrap();
        let AnovaOutcome::Tested { f, p, .. } = report.anova else {
            panic!("case {ci} reported no variance");
        };
        worst_f = worst_f.max((f - case.f).abs() / case.f.abs().max(1.0));
        assert!((p - case.p).abs() < 1e-6, "case {ci}: ANOVA p {p} vs {}", case.p);
        for rp in &case.pairs {
            let ours = report.pair(rp.a, rp.b).unwrap();
            let err = (ours.p_adjusted - rp.p_adjusted).abs();
            worst_p = worst_p.max(err);
            assert!(
                err < 1e-4,
                "case {ci} pair ({}, {}): {} vs {}",
                rp.a,
                rp.b,
                ours.p_adjusted,
                rp.p_adjusted
            );
        }
    }
    assert!(worst_f < 1e-6, "worst F error {worst_f}");
    println!("worst F error {worst_f:e}, worst adjusted p error {worst_p:e}");
}

#[test]
fn familywise_error_is_controlled_under_the_null() {
    let alpha = 0.05;
    let d = Normal::new(70.0, 2.0).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    let resamples = 1000;
    let mut any_significant = 0;
    for _ in 0..resamples {
        let groups: Vec<MethodGroup> = (0..3)
            .map(|i| MethodGroup::new(i.to_string(), (0..5).map(|_| d.sample(&mut rng)).collect()))
            .collect();
        if anova_tukey(&groups, alpha).unwrap().significant_pairs().count() > 0 {
            any_significant += 1;
        }
    }
    let rate = any_significant as f64 / resamples as f64;
    assert!(rate <= alpha + 0.02, "familywise error rate {rate}");
}
