mod common;

use hashgen::corpus::{
    generate_synthetic, load_dataset, read_records, write_jsonl, Instance, SignalLocation, SynthConfig, Vocabulary,
    UNK,
};
use hashgen::Error;

#[test]
fn preprocessing_fixtures() {
    let failed: Vec<String> = common::plumbing::checks()
        .into_iter()
        .filter(|c| !c.ok)
        .map(|c| format!("{}: {}", c.name, c.detail))
        .collect();
    assert!(failed.is_empty(), "{failed:#?}");
}

#[test]
fn invalid_records_are_dropped_and_bad_json_cites_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.jsonl");
    std::fs::write(
        &path,
        concat!(
            r#"{"post":["hi","there"],"conversation":[["yo"]],"hashtags":[["ok","go"]]}"#,
            "\n",
            r#"{"post":["hi"],"conversation":[["yo"]],"hashtags":[["z"]]}"#,
            "\n\n",
            r#"{"post":[],"conversation":[["yo"]],"hashtags":[["fine"]]}"#,
            "\n"
        ),
    )
    .unwrap();
    let data = load_dataset(&path, 120).unwrap();
    assert_eq!(data.len(), 1);
    assert_eq!(data[0].hashtags, vec![vec!["ok".to_string(), "go".to_string()]]);

    std::fs::write(&path, "{\"post\":[\"a\"]}\n{broken\n").unwrap();
    assert!(matches!(read_records(&path), Err(Error::Json { line: 2, .. })));
    assert!(matches!(read_records(&dir.path().join("missing.jsonl")), Err(Error::Io { .. })));
}

#[test]
fn records_round_trip_through_jsonl() {
    let data = generate_synthetic(&SynthConfig {
        n_instances: 20,
        seed: 3,
        ..SynthConfig::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.jsonl");
    let records: Vec<_> = data.iter().map(Instance::to_record).collect();
    write_jsonl(&path, &records).unwrap();
    assert_eq!(load_dataset(&path, 120).unwrap(), data);
}

#[test]
fn synthetic_corpus_is_seeded_and_places_signal() {
    let cfg = |seed, signal_location| SynthConfig {
        n_instances: 60,
        n_topics: 4,
        seed,
        signal_location,
        ..SynthConfig::default()
    };
    let a = generate_synthetic(&cfg(1, SignalLocation::Both)).unwrap();
    assert_eq!(a, generate_synthetic(&cfg(1, SignalLocation::Both)).unwrap());
    assert_ne!(a, generate_synthetic(&cfg(2, SignalLocation::Both)).unwrap());
    assert_eq!(a.len(), 60);
    assert!(a.iter().all(|i| i.hashtags.len() == 1 && !i.post.is_empty() && !i.conversation.is_empty()));

    // planted cue words never leak to the other side
    for loc in [SignalLocation::Post, SignalLocation::Conversation] {
        let data = generate_synthetic(&cfg(5, loc)).unwrap();
        let (signal, other): (Vec<&Vec<String>>, Vec<&Vec<String>>) = match loc {
            SignalLocation::Post => (data.iter().map(|i| &i.post).collect(), data.iter().map(|i| &i.conversation).collect()),
            _ => (data.iter().map(|i| &i.conversation).collect(), data.iter().map(|i| &i.post).collect()),
        };
        let elsewhere: std::collections::HashSet<&String> = other.iter().flat_map(|v| v.iter()).collect();
        for side in signal {
            assert!(side.iter().any(|w| !elsewhere.contains(w)), "{loc:?}: {side:?}");
        }
    }
}

#[test]
fn vocabulary_caps_orders_and_round_trips() {
    let t = |s: &str| s.split_whitespace().map(str::to_string).collect::<Vec<_>>();
    let data = vec![Instance {
        post: t("b b a c"),
        conversation: t("a b d"),
        hashtags: vec![t("e")],
    }];
    let vocab = Vocabulary::build(&data, 2).unwrap();
    assert_eq!(vocab.len(), 6);
    assert_eq!(vocab.words(), &["b".to_string(), "a".to_string()]);
    assert_eq!(vocab.id("b"), 4);
    assert_eq!(vocab.id("zzz"), UNK);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vocab.txt");
    vocab.save(&path).unwrap();
    assert_eq!(Vocabulary::load(&path).unwrap(), vocab);
}
