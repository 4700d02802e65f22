//! Hand-computed metric cases and a brute-force ROUGE-SU4 oracle.

use hashgen::metrics::{
    average_precision_at_k, f1_at_k, rouge1_f1, rouge_su4_f1, rouge_tokens, score_instance, MatchConfig,
};

fn tags(list: &[&str]) -> Vec<Vec<String>> {
    list.iter()
        .map(|t| t.split_whitespace().map(str::to_string).collect())
        .collect()
}

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

fn plain() -> MatchConfig {
    MatchConfig {
        stemming: false,
        ..MatchConfig::default()
    }
}

pub struct Fixture {
    pub name: &'static str,
    pub got: f64,
    pub want: f64,
}

fn fx(name: &'static str, got: f64, want: f64) -> Fixture {
    Fixture { name, got, want }
}

pub fn fixtures() -> Vec<Fixture> {
    let f1 = |p: &[&str], g: &[&str], k| f1_at_k(&tags(p), &tags(g), k).unwrap();
    let ap = |p: &[&str], g: &[&str]| average_precision_at_k(&tags(p), &tags(g), 5).unwrap();
    let r1 = |p: &str, g: &str, cfg: &MatchConfig| rouge1_f1(&rouge_tokens(&toks(p), cfg), &rouge_tokens(&toks(g), cfg));
    let su = |p: &str, g: &str, cfg: &MatchConfig| {
        rouge_su4_f1(&rouge_tokens(&toks(p), cfg), &rouge_tokens(&toks(g), cfg))
    };
    let chars = MatchConfig {
        char_mode: true,
        ..MatchConfig::default()
    };
    let multi = score_instance(&tags(&["aus open"]), &tags(&["aus open", "tennis"]), &plain()).unwrap();
    let empty = score_instance(&Vec::<Vec<String>>::new(), &tags(&["aus open"]), &plain()).unwrap();

    vec![
        fx("f1@1 exact match", f1(&["aus open"], &["aus open"], 1), 1.0),
        fx("f1@5 one hit of five, one gold", f1(&["a", "b", "c", "d", "e"], &["c"], 5), 1.0 / 3.0),
        fx("f1@5 zero hits", f1(&["a", "b", "c", "d", "e"], &["z"], 5), 0.0),
        fx("f1@5 one hit, two golds", f1(&["a", "y", "c", "d", "e"], &["x", "y"], 5), 2.0 / 7.0),
        fx("f1@5 short list divides by k", f1(&["a", "b"], &["b"], 5), 1.0 / 3.0),
        fx("f1@1 ignores case", f1(&["AUS Open"], &["aus open"], 1), 1.0),
        fx("f1@5 two hits, two golds", f1(&["x", "y", "z", "q", "r"], &["x", "y"], 5), 4.0 / 7.0),
        fx("f1@1 partial tag is a miss", f1(&["aus"], &["aus open"], 1), 0.0),
        fx("f1@1 hit with two golds", f1(&["a"], &["a", "b"], 1), 2.0 / 3.0),
        fx("ap@5 hit at rank 1", ap(&["a", "b", "c"], &["a"]), 1.0),
        fx("ap@5 hit at rank 3", ap(&["x", "y", "a"], &["a"]), 1.0 / 3.0),
        fx("ap@5 no hits", ap(&["x", "y"], &["a"]), 0.0),
        fx("ap@5 hits at ranks 1 and 3", ap(&["a", "x", "b"], &["a", "b"]), 5.0 / 6.0),
        fx("ap@5 hits at ranks 2 and 4 of three golds", ap(&["x", "a", "y", "b"], &["a", "b", "c"]), 1.0 / 3.0),
        fx("ap@5 hit beyond the cutoff", ap(&["v", "w", "x", "y", "z", "a"], &["a"]), 0.0),
        fx("rouge-1 identity", r1("aus open", "aus open", &plain()), 1.0),
        fx("rouge-1 half overlap", r1("open tennis", "aus open", &plain()), 0.5),
        fx("rouge-1 disjoint", r1("red", "blue", &plain()), 0.0),
        fx("rouge-1 clipped counts", r1("the the the", "the cat", &plain()), 0.4),
        fx("rouge-1 stemmed", r1("running", "runs", &MatchConfig::default()), 1.0),
        fx("rouge-1 unstemmed", r1("running", "runs", &plain()), 0.0),
        fx("rouge-1 characters", r1("ab", "ba", &chars), 1.0),
        fx("rouge-su4 characters", su("ab", "ba", &chars), 2.0 / 3.0),
        fx("rouge-su4 single token identity", su("open", "open", &plain()), 1.0),
        fx("rouge-su4 identity", su("a b c", "a b c", &plain()), 1.0),
        fx("rouge-su4 swapped tail", su("a b c", "a c b", &plain()), 5.0 / 6.0),
        fx("rouge-su4 gap of four", su("a x x x x b", "a b", &plain()), 0.25),
        fx("rouge-su4 gap of five", su("a x x x x x b", "a b", &plain()), 2.0 / 15.0),
        fx("rouge-su4 disjoint", su("a b", "c d", &plain()), 0.0),
        fx("instance rouge-1 averages golds", multi.rouge1_f1, 0.5),
        fx("instance f1@1 with two golds", multi.f1_at_1, 2.0 / 3.0),
        fx("instance map@5 with two golds", multi.map_at_5, 0.5),
        fx("instance empty predictions f1@5", empty.f1_at_5, 0.0),
        fx("instance empty predictions rouge-su4", empty.rouge_su4_f1, 0.0),
    ]
}

/// ROUGE-SU4 by explicit enumeration of every unit as a string, matched by
/// repeated removal from the gold list.
pub fn su4_oracle(pred: &[String], gold: &[String]) -> f64 {
    fn units(t: &[String]) -> Vec<String> {
        let mut out: Vec<String> = t.iter().map(|w| format!("1:{w}")).collect();
        for i in 0..t.len() {
            for j in 0..t.len() {
                if j > i && j - i <= 5 {
                    out.push(format!("2:{}|{}", t[i], t[j]));
                }
            }
        }
        out
    }
    let (p, mut g) = (units(pred), units(gold));
    let (np, ng) = (p.len(), g.len());
    if np == 0 || ng == 0 {
        return 0.0;
    }
    let mut overlap = 0usize;
    for u in &p {
        if let Some(pos) = g.iter().position(|x| x == u) {
            g.swap_remove(pos);
            overlap += 1;
        }
    }
    let (prec, rec) = (overlap as f64 / np as f64, overlap as f64 / ng as f64);
    if prec + rec == 0.0 {
        0.0
    } else {
        2.0 * prec * rec / (prec + rec)
    }
}
