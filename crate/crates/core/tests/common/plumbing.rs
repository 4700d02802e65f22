//! Preprocessing and splitting fixtures with exact expected outputs.

use hashgen::corpus::{
    expand_instances, normalize_tokens, split_80_10_10, Instance, RawRecord, Vocabulary, BOS, EOS, TURN_SEP,
};

pub struct Check {
    pub name: &'static str,
    pub ok: bool,
    pub detail: String,
}

fn check<T: PartialEq + std::fmt::Debug>(name: &'static str, got: T, want: T) -> Check {
    Check {
        name,
        ok: got == want,
        detail: format!("got {got:?}, want {want:?}"),
    }
}

fn s(words: &[&str]) -> Vec<String> {
    words.iter().map(|w| w.to_string()).collect()
}

fn record(post: &[&str], conv: &[&[&str]], tags: &[&[&str]]) -> RawRecord {
    RawRecord {
        post: s(post),
        conversation: conv.iter().map(|t| s(t)).collect(),
        hashtags: tags.iter().map(|t| s(t)).collect(),
    }
}

pub fn checks() -> Vec<Check> {
    let mut out = vec![check(
        "placeholders for links, mentions, and numbers",
        normalize_tokens(&["Check", "http://t.co/x1", "@Bob", "2019", "Wow!", "www.site.org", "@", "12a", "HTTPS://A.B"]),
        s(&["check", "URL", "MENTION", "DIGIT", "wow!", "URL", "@", "12a", "URL"]),
    )];

    let rec = record(
        &["Great", "match", "@amy"],
        &[&["Who", "won", "?"], &[], &["@Bob", "says", "3", "sets"]],
        &[&["a"], &["AUS", "Open"], &["aus", "open"], &["x", "y"], &["#"]],
    );
    match Instance::from_record(&rec, 120) {
        Ok(inst) => {
            out.push(check("post normalization", inst.post.clone(), s(&["great", "match", "MENTION"])));
            out.push(check(
                "turns joined in order with a separator",
                inst.conversation.clone(),
                s(&["who", "won", "?", TURN_SEP, "MENTION", "says", "DIGIT", "sets"]),
            ));
            out.push(check(
                "single-character and duplicate hashtags dropped",
                inst.hashtags.clone(),
                vec![s(&["aus", "open"]), s(&["x", "y"])],
            ));
        }
        Err(e) => out.push(Check {
            name: "fixture record is accepted",
            ok: false,
            detail: e.to_string(),
        }),
    }

    let truncated = |cap| Instance::from_record(&rec, cap).map(|i| i.conversation).unwrap_or_default();
    out.push(check("conversation cap keeps earliest tokens", truncated(4), s(&["who", "won", "?"])));
    out.push(check("conversation cap of 2", truncated(2), s(&["who", "won"])));

    let only_short = record(&["hi"], &[&["yo"]], &[&["a"], &["b"]]);
    out.push(check(
        "record with only single-character hashtags is rejected",
        Instance::from_record(&only_short, 120).is_err(),
        true,
    ));

    for (n, want) in [(1000usize, (800, 100, 100)), (10, (8, 1, 1)), (7, (5, 0, 2)), (101, (80, 10, 11))] {
        let sp = split_80_10_10((0..n).collect::<Vec<_>>(), 42);
        out.push(check("80/10/10 split counts", (sp.train.len(), sp.dev.len(), sp.test.len()), want));
        let mut all: Vec<usize> = sp.train.iter().chain(&sp.dev).chain(&sp.test).copied().collect();
        all.sort_unstable();
        out.push(check("split is a partition", all, (0..n).collect()));
    }
    let a = split_80_10_10((0..50).collect::<Vec<_>>(), 9);
    let b = split_80_10_10((0..50).collect::<Vec<_>>(), 9);
    out.push(check("split is seeded", a == b, true));

    let inst = Instance {
        post: s(&["p1", "p2"]),
        conversation: s(&["c1"]),
        hashtags: vec![s(&["t1"]), s(&["t2", "t3"]), s(&["t4"])],
    };
    let vocab = Vocabulary::build(std::slice::from_ref(&inst), 100).unwrap();
    let ex = expand_instances(&inst, &vocab);
    let id = |w: &str| vocab.id(w);
    out.push(check("one training example per gold tag", ex.len(), 3));
    out.push(check(
        "targets are BOS tag EOS",
        ex.iter().map(|e| e.target_ids.clone()).collect::<Vec<_>>(),
        vec![
            vec![BOS, id("t1"), EOS],
            vec![BOS, id("t2"), id("t3"), EOS],
            vec![BOS, id("t4"), EOS],
        ],
    ));
    out.push(check(
        "duplicated examples share their sources",
        ex.iter().all(|e| e.post_ids == vec![id("p1"), id("p2")] && e.conv_ids == vec![id("c1")]),
        true,
    ));
    out
}
