mod common;

use dam_core::belief::Polarity;
use dam_core::prompt::TemplateRegistry;
use dam_core::providers::MockChat;
use dam_core::providers::{mock_extract, Observation};
use dam_core::sim::ablation::{run_ablation, run_rounds, write_ablation_csv, Mode};
use dam_core::sim::convergence::{default_script, run_convergence, scripted, write_convergence_csv};
use dam_core::sim::judge::{parse_scores, run_judge, JudgePair, MemoryEntry};
use dam_core::sim::stream::{generate, StreamSpec, Triple};
use dam_core::Config;

fn coffee_taste() -> Triple {
    Triple { object_id: "coffee".into(), object_type: "beverage".into(), aspect: "taste".into() }
}

fn obs(polarity: Polarity, intensity: f64) -> Observation {
    Observation {
        object_id: "coffee".into(),
        object_type: "beverage".into(),
        aspect: "taste".into(),
        polarity,
        intensity,
        text: "t".into(),
    }
}

#[test]
fn mock_extract_mapping_examples() {
    let e = mock_extract(&obs(Polarity::Positive, 1.0)).unwrap();
    assert_eq!(e.confidences.to_array(), [1.0, 0.0, 0.0]);
    assert_eq!(e.strength, 3.0);
    assert_eq!(e.query, "coffee taste");
    let e = mock_extract(&obs(Polarity::Positive, 0.0)).unwrap();
    assert_eq!(e.confidences.to_array(), [0.5, 0.25, 0.25]);
    assert_eq!(e.strength, 0.0);
    let e = mock_extract(&obs(Polarity::Neutral, 0.5)).unwrap();
    assert_eq!(e.confidences.to_array(), [0.125, 0.125, 0.75]);
    assert_eq!(e.strength, 1.5);
}

// Reference values from a separate scalar computation of
// (sum S_i P_i) / (sum S_i) over the script.
#[test]
fn constant_intensity_script_falls_short_of_thresholds() {
    let script = scripted(&coffee_taste(), 10, 0.5, &[0.8; 20]);
    let trace = run_convergence(&script, &Config::default()).unwrap();
    let last = trace.last().unwrap();
    let want = [0.7898809523809532, 0.14226190476190476, 0.06785714285714292];
    for (a, b) in last.profile.to_array().into_iter().zip(want) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
    assert!((last.weight - 63.0).abs() < 1e-9);
    assert!((last.entropy - 0.9324051590956302).abs() < 1e-9);
    // with these intensities the dominant confidence is capped by the
    // consistent evidence itself (0.9) diluted by the conflicting phase
    assert!(last.profile.dominant().1 < 0.8);
    assert!(last.entropy > 0.8);
}

#[test]
fn ramped_script_reference_values() {
    let trace = run_convergence(&default_script(), &Config::default()).unwrap();
    assert_eq!(trace.rows.len(), 30);
    let last = trace.last().unwrap();
    let want = [0.8401887871853545, 0.11387299771167048, 0.0459382151029748];
    for (a, b) in last.profile.to_array().into_iter().zip(want) {
        assert!((a - b).abs() < 1e-9);
    }
    assert!((last.weight - 69.0).abs() < 1e-9);
    assert!((last.entropy - 0.77215968594196).abs() < 1e-9);

    let mut csv = Vec::new();
    write_convergence_csv(&trace, &mut csv).unwrap();
    let csv = String::from_utf8(csv).unwrap();
    assert_eq!(csv.lines().next(), Some("turn,p_pos,p_neg,p_neu,H,W"));
    assert_eq!(csv.lines().count(), 31);
}

#[test]
fn stream_is_reproducible_from_seed() {
    let spec = StreamSpec::new(42, 200, 60);
    let a = generate(&spec);
    assert_eq!(a, generate(&spec));
    assert_ne!(a.observations, generate(&StreamSpec::new(43, 200, 60)).observations);
    assert_eq!(a.vocabulary.len(), 60);
    assert_eq!(a.observations.len(), 200);
    let distinct: std::collections::BTreeSet<_> = a.vocabulary.iter().collect();
    assert_eq!(distinct.len(), 60);
    for o in &a.observations {
        assert!((0.0..=1.0).contains(&o.intensity));
        assert!(o.text.contains(&o.object_id));
    }
}

#[test]
fn noise_rate_is_respected() {
    let spec = StreamSpec { noise: 0.3, ..StreamSpec::new(5, 5000, 50) };
    let s = generate(&spec);
    let contradicting = s
        .observations
        .iter()
        .filter(|o| {
            let i = s.vocabulary.iter().position(|t| t.object_id == o.object_id && t.aspect == o.aspect).unwrap();
            s.ground[i] != o.polarity
        })
        .count() as f64
        / 5000.0;
    assert!((contradicting - 0.3).abs() < 0.03, "{contradicting}");
}

#[test]
fn ablation_csv_is_deterministic() {
    let stream = generate(&StreamSpec::new(9, 150, 40));
    let config = Config::default();
    let render = |mode| {
        let r = run_ablation(&stream.observations, mode, &config).unwrap();
        let mut out = Vec::new();
        write_ablation_csv(&r, &mut out).unwrap();
        String::from_utf8(out).unwrap()
    };
    let a = render(Mode::Bayes);
    assert_eq!(a, render(Mode::Bayes));
    assert!(a.starts_with("turn,actions,unit_count,global_entropy,rel,objective\n"));
    assert_eq!(a.lines().count(), 151);
    assert_ne!(a, render(Mode::Naive));
}

#[test]
fn rounds_aggregate_per_seed() {
    let r = run_rounds(&[1, 2], 200, 60, 0.1, &Config::default()).unwrap();
    let v = serde_json::to_value(&r).unwrap();
    assert_eq!(v["rounds"].as_array().map(Vec::len), Some(2));
    for round in v["rounds"].as_array().unwrap() {
        assert!(round["bayes_count"].as_u64().unwrap() <= 60);
    }
}

#[test]
fn mock_judge_output_shape() {
    let pairs: Vec<JudgePair> = (0..6)
        .map(|i| JudgePair {
            query: format!("What should I drink {i}?"),
            memory: vec![MemoryEntry { time: "2024-05-01".into(), content: "I love coffee".into() }],
            system_response: (i % 2 == 0).then(|| "Coffee, as you love it.".to_string()),
            baseline_response: None,
        })
        .collect();
    let report = run_judge(&MockChat::new(), &TemplateRegistry::builtin(), &pairs, 3);
    assert_eq!(report.verdicts.len(), 6);
    for v in &report.verdicts {
        let json = serde_json::to_value(v).unwrap();
        for side in ["system", "baseline"] {
            let scores = parse_scores(&json[side]).unwrap();
            assert!(scores.to_array().iter().all(|s| (1.0..=5.0).contains(s)));
        }
    }
}
