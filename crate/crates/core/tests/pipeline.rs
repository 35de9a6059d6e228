use divdis_core::analysis::{self, DetectionMode, Ensemble};
use divdis_core::calibration::CalibrationConfig;
use divdis_core::detect::{self, ScoreKind};
use divdis_core::divergence::{aggregate_error, EpsilonPolicy, Notion};
use divdis_core::estimate::{EstimationConfig, Method};
use divdis_core::synth::{generate_world, planted_world, SynthConfig};
use divdis_core::transform::TransformKind;
use divdis_core::{io, Pairing};

fn eps() -> EpsilonPolicy {
    EpsilonPolicy::default()
}

fn small() -> SynthConfig {
    SynthConfig {
        n_models: 8,
        n_samples: 600,
        ..SynthConfig::default()
    }
}

#[test]
fn strong_clean_models_are_nearly_one_hot() {
    let cfg = SynthConfig {
        n_models: 3,
        n_samples: 2000,
        skill: (10.0, 10.0),
        temperature: (1.0, 1.0),
        id_noise: 0.0,
        severities: vec![],
        ..SynthConfig::default()
    };
    let world = generate_world(&cfg).unwrap();
    for m in &world.model_ids {
        let set = world.prediction_set(m, "id").unwrap();
        let err = aggregate_error(Notion::Top1, &set, &world.labels["id"], eps()).unwrap();
        assert!(err < 0.01, "{m}: {err}");
        let msp: f64 = set.rows().map(|r| r.iter().cloned().fold(0.0, f64::max)).sum::<f64>() / 2000.0;
        assert!(msp > 0.99, "{m}: mean max prob {msp}");
    }
}

#[test]
fn top1_error_grows_with_severity() {
    let world = generate_world(&SynthConfig::default()).unwrap();
    let mean_err = |split: &str| {
        world
            .model_ids
            .iter()
            .map(|m| {
                let set = world.prediction_set(m, split).unwrap();
                aggregate_error(Notion::Top1, &set, &world.labels[split], eps()).unwrap()
            })
            .sum::<f64>()
            / world.model_ids.len() as f64
    };
    let errs: Vec<f64> = world.splits.iter().map(|s| mean_err(s)).collect();
    assert!(errs.windows(2).all(|w| w[1] >= w[0]), "{errs:?}");
}

#[test]
fn overconfident_ensemble_has_larger_cace() {
    let cace = |t: f64| {
        let world = generate_world(&SynthConfig {
            temperature: (t, t),
            ..small()
        })
        .unwrap();
        let ens = Ensemble::from_world(&world, Pairing::AllPairs).unwrap();
        analysis::split_cace(&ens, "id", CalibrationConfig::default()).unwrap()
    };
    let (calibrated, hot) = (cace(1.0), cace(0.5));
    assert!(hot > calibrated, "{hot} vs {calibrated}");
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let world = generate_world(&small()).unwrap();
    let run = |threads| {
        analysis::with_threads(Some(threads), || {
            let ens = Ensemble::from_world(&world, Pairing::AllPairs).unwrap();
            let dis = analysis::disagreement_table(&ens, &Notion::ALL, eps()).unwrap();
            let errs = analysis::error_table(&ens, &Notion::ALL, eps()).unwrap();
            let det = analysis::detection(
                &ens,
                &[ScoreKind::NegMsp, ScoreKind::PairDisagreement(Notion::Jsd)],
                DetectionMode::Pooled,
                eps(),
            )
            .unwrap();
            (dis.values, errs.values, det)
        })
        .unwrap()
    };
    let one = run(1);
    let eight = run(8);
    assert_eq!(one.0, eight.0);
    assert_eq!(one.1, eight.1);
    assert_eq!(one.2, eight.2);
}

#[test]
fn estimates_do_not_depend_on_model_order() {
    let world = generate_world(&small()).unwrap();
    let ens = Ensemble::from_world(&world, Pairing::AllPairs).unwrap();
    let mut reversed = ens.clone();
    reversed.model_ids.reverse();
    for method in [Method::AlineS, Method::AlineD] {
        let cfg = EstimationConfig::new(Notion::Hd, method);
        let run = |e: &Ensemble| {
            let dis = analysis::disagreement_table(e, &[Notion::Hd], eps()).unwrap();
            let errs = analysis::error_table(e, &[Notion::Hd], eps()).unwrap();
            analysis::estimate_all(e, &dis, &errs, &cfg).unwrap()
        };
        let (a, b) = (run(&ens), run(&reversed));
        for (ra, rb) in a.iter().zip(&b) {
            for ea in &ra.estimates {
                let eb = rb.estimates.iter().find(|e| e.model_id == ea.model_id).unwrap();
                assert!(
                    (ea.estimate - eb.estimate).abs() < 1e-12,
                    "{method}: {} vs {}",
                    ea.estimate,
                    eb.estimate
                );
            }
        }
    }
}

#[test]
fn anchor_pairing_estimates_only_the_others() {
    let world = generate_world(&small()).unwrap();
    let ens = Ensemble::from_world(&world, Pairing::Anchor("m03".into())).unwrap();
    assert_eq!(ens.pairs().len(), 7);
    assert!(ens.pairs().iter().all(|p| p.first == "m03"));
    let dis = analysis::disagreement_table(&ens, &[Notion::Top1], eps()).unwrap();
    let errs = analysis::error_table(&ens, &[Notion::Top1], eps()).unwrap();
    for method in [Method::AlineS, Method::AlineD] {
        let reports = analysis::estimate_all(&ens, &dis, &errs, &EstimationConfig::new(Notion::Top1, method)).unwrap();
        for r in &reports {
            assert_eq!(r.estimates.len(), 7);
            assert!(r.estimates.iter().all(|e| e.model_id != "m03"));
            assert!(r.mape.is_some());
        }
    }
    let det = analysis::detection(&ens, &[ScoreKind::NegMsp], DetectionMode::PerSubject, eps()).unwrap();
    assert!(det.iter().all(|d| d.subject != "m03"));
}

#[test]
fn planted_world_lines_pass_through_origin() {
    let cfg = SynthConfig {
        n_models: 6,
        n_samples: 500,
        ..SynthConfig::default()
    };
    let world = planted_world(&cfg, 300).unwrap();
    let ens = Ensemble::from_world(&world, Pairing::AllPairs).unwrap();
    let dis = analysis::disagreement_table(&ens, &Notion::ALL, eps()).unwrap();
    let errs = analysis::error_table(&ens, &Notion::ALL, eps()).unwrap();
    let alpha = 500.0 / 800.0;
    for n in Notion::ALL {
        let agreement = analysis::agreement_line(&dis, "id", "planted1", n, TransformKind::Identity).unwrap();
        assert!(
            (agreement.slope - alpha).abs() < 1e-12 && agreement.intercept.abs() < 1e-12,
            "{n}: {agreement:?}"
        );
        let accuracy = analysis::accuracy_line(&ens, &errs, "planted1", n, TransformKind::Identity)
            .unwrap()
            .unwrap();
        assert!((accuracy.slope - alpha).abs() < 1e-12, "{n}: {accuracy:?}");
        let reports = analysis::estimate_all(&ens, &dis, &errs, &EstimationConfig::new(n, Method::AlineS)).unwrap();
        assert!(reports[0].mape.unwrap() < 1e-8, "{n}: {:?}", reports[0].mape);
    }
}

#[test]
fn written_worlds_reload_identically() {
    let dir = tempfile::tempdir().unwrap();
    let world = generate_world(&small()).unwrap();
    let path = world.write(dir.path(), Pairing::AllPairs, false).unwrap();
    let manifest = io::load_manifest(&path).unwrap();
    let loaded = Ensemble::load(&manifest).unwrap();
    let direct = Ensemble::from_world(&world, Pairing::AllPairs).unwrap();
    assert_eq!(loaded.model_ids, direct.model_ids);
    assert_eq!(loaded.predictions, direct.predictions);
    assert_eq!(loaded.labels, direct.labels);
    assert_eq!(loaded.severity, direct.severity);
}

#[test]
fn severity_groups_follow_split_suffixes() {
    let world = generate_world(&SynthConfig {
        n_models: 3,
        n_samples: 200,
        severities: vec![0.5, 1.0],
        ..SynthConfig::default()
    })
    .unwrap();
    let mut ens = Ensemble::from_world(&world, Pairing::AllPairs).unwrap();
    // rename shift1/shift2 to fog1/fog2 and add blur1 as a copy of shift1
    let rename = |s: &str| s.replace("shift", "fog");
    ens.predictions = ens
        .predictions
        .into_iter()
        .flat_map(|((m, s), set)| {
            let mut out = vec![((m.clone(), rename(&s)), set.relabeled(m.clone(), rename(&s)))];
            if s == "shift1" {
                out.push(((m.clone(), "blur1".into()), set.relabeled(m, "blur1")));
            }
            out
        })
        .collect();
    ens.ood_splits = vec!["fog1".into(), "fog2".into(), "blur1".into()];
    ens.labels.clear();
    ens.severity = ens
        .ood_splits
        .iter()
        .map(|s| (s.clone(), divdis_core::domain::parse_severity(s)))
        .collect();
    let det = analysis::detection(&ens, &[ScoreKind::NegMsp], DetectionMode::PerSubject, eps()).unwrap();
    let (by_split, by_severity) = detect::aggregate(&det);
    assert_eq!(by_split.len(), 3);
    assert_eq!(by_severity.len(), 2);
    assert_eq!(by_severity[0].severity, Some(1));
    assert_eq!(by_severity[0].n_splits, 2);
    assert_eq!(by_severity[1].n_splits, 1);
}
