//! Random scripted backends.

use std::collections::BTreeSet;

use factaudit_core::evalkit::GroundTruthRecord;
use factaudit_core::genbackend::{BackendQuery, MockBackend, MockScript};
use factaudit_core::promptio::ModelInput;
use factaudit_core::textmodel::Document;
use rand::seq::SliceRandom;
use rand::Rng;

pub const TERMINAL: &str = "</s>";
const VOCAB: [&str; 7] = [" a", " b", " c", " d", " e", " f", " g"];

/// A scripted fact-check output: fixed evidence head then a revision whose
/// greedy path is `revision`. Off-path tokens get random continuations that
/// may rejoin the revision.
pub struct RandomCase {
    pub backend: MockBackend,
    pub query: BackendQuery,
    pub head: Vec<String>,
    pub revision: Vec<String>,
}

pub fn evidence_head() -> Vec<String> {
    ["EVIDENCE:", " SENT0", "\nREVISION:"].iter().map(|s| s.to_string()).collect()
}

fn with(prefix: &[String], more: &[String]) -> Vec<String> {
    prefix.iter().chain(more).cloned().collect()
}

/// Entries with `top` first at probability `p` and up to three runner-ups,
/// each at most `p`, summing to at most 1.
fn entries<R: Rng>(rng: &mut R, top: &str, p: f64, pool: &[&str]) -> Vec<(String, f64)> {
    let mut out = vec![(top.to_string(), p)];
    let mut remaining = 1.0 - p;
    let mut others: Vec<&str> = pool.iter().copied().filter(|t| *t != top).collect();
    others.shuffle(rng);
    for t in others.into_iter().take(rng.gen_range(0..=3)) {
        let q = rng.gen_range(0.01..=1.0) * remaining.min(p);
        if q <= 0.0 {
            break;
        }
        remaining -= q;
        out.push((t.to_string(), q));
    }
    out
}

fn insert(script: &mut MockScript, prefix: Vec<String>, entries: Vec<(String, f64)>) {
    script
        .insert(prefix, entries.into_iter().map(|(t, p)| factaudit_core::genbackend::TokenProb::new(t, p)).collect())
        .expect("generated distribution is valid");
}

/// Revision of `0..=max_len` tokens (the head adds three more).
pub fn random_case<R: Rng>(rng: &mut R, max_len: usize) -> RandomCase {
    let head = evidence_head();
    let len = rng.gen_range(0..=max_len);
    let revision: Vec<String> = (0..len).map(|_| VOCAB.choose(rng).unwrap().to_string()).collect();
    let mut script = MockScript::new(TERMINAL);
    for i in 0..head.len() {
        insert(&mut script, head[..i].to_vec(), vec![(head[i].clone(), 0.95)]);
    }
    let mut pool: Vec<&str> = VOCAB.to_vec();
    pool.push(TERMINAL);
    for i in 0..=len {
        let prefix = with(&head, &revision[..i]);
        let top = revision.get(i).map(String::as_str).unwrap_or(TERMINAL);
        let p = rng.gen_range(0.05..=0.95);
        let dist = entries(rng, top, p, &pool);
        for (alt, _) in dist.iter().skip(1) {
            if alt == TERMINAL || !rng.gen_bool(0.6) {
                continue;
            }
            // continuation: a few fresh tokens, then rejoin the revision at j
            let mut cont: Vec<String> = (0..rng.gen_range(0..3)).map(|_| VOCAB.choose(rng).unwrap().to_string()).collect();
            let j = rng.gen_range(i.min(len)..=len);
            cont.extend(revision[j..].iter().cloned());
            let mut ctx = with(&prefix, std::slice::from_ref(alt));
            for tok in cont.iter().map(String::as_str).chain([TERMINAL]) {
                let q = rng.gen_range(0.3..=0.95);
                insert(&mut script, ctx.clone(), vec![(tok.to_string(), q)]);
                ctx.push(tok.to_string());
            }
        }
        insert(&mut script, prefix, dist);
    }
    RandomCase {
        backend: MockBackend::new(script),
        query: BackendQuery::new(ModelInput::new("random")),
        head,
        revision,
    }
}

/// A dataset of short claims, each routed to its own script. Plain decoding
/// deletes only some incorrect words; the incorrect words it keeps are
/// emitted with lower probability (0.05..0.35) than every correct word
/// (0.4..0.95). Each kept incorrect word has a runner-up replacement that
/// rejoins the revision; each correct word has the terminal marker as
/// runner-up.
pub fn sweep_dataset<R: Rng>(rng: &mut R, records: usize) -> (Vec<GroundTruthRecord>, MockBackend) {
    let mut backend = MockBackend::new(MockScript::new(TERMINAL));
    let mut dataset = Vec::with_capacity(records);
    let head: Vec<String> = ["EVIDENCE:", " SENT1", "\nREVISION:"].iter().map(|s| s.to_string()).collect();
    for k in 0..records {
        let n = rng.gen_range(6..12);
        let words: Vec<String> = (0..n).map(|i| format!("r{k}w{i}")).collect();
        let mut incorrect: BTreeSet<usize> = (0..n).filter(|_| rng.gen_bool(0.3)).collect();
        incorrect.insert(rng.gen_range(0..n));
        if incorrect.len() > n - 2 {
            incorrect = incorrect.into_iter().take(n - 2).collect();
        }
        // plain decoding removes every other incorrect word
        let removed: BTreeSet<usize> = incorrect.iter().copied().step_by(2).collect();
        let claim = format!("{}.", words.join(" "));
        let gt_revision = format!(
            "{}.",
            words.iter().enumerate().filter(|(i, _)| !incorrect.contains(i)).map(|(_, w)| w.as_str()).collect::<Vec<_>>().join(" ")
        );
        let kept: Vec<usize> = (0..n).filter(|i| !removed.contains(i)).collect();
        let mut tokens: Vec<(String, f64, bool)> = kept
            .iter()
            .map(|&i| {
                let bad = incorrect.contains(&i);
                let p = if bad { rng.gen_range(0.05..0.35) } else { rng.gen_range(0.4..0.95) };
                (format!(" {}", words[i]), p, bad)
            })
            .collect();
        tokens.push((".".to_string(), 0.9, false));

        let mut script = MockScript::new(TERMINAL);
        for i in 0..head.len() {
            insert(&mut script, head[..i].to_vec(), vec![(head[i].clone(), 0.95)]);
        }
        let revision: Vec<String> = tokens.iter().map(|t| t.0.clone()).collect();
        for (i, (tok, p, bad)) in tokens.iter().enumerate() {
            let prefix = with(&head, &revision[..i]);
            if *bad {
                let alt = format!(" r{k}x{i}");
                insert(&mut script, prefix.clone(), vec![(tok.clone(), *p), (alt.clone(), p / 2.0)]);
                let mut ctx = with(&prefix, &[alt]);
                for rest in revision[i + 1..].iter() {
                    insert(&mut script, ctx.clone(), vec![(rest.clone(), 0.9)]);
                    ctx.push(rest.clone());
                }
            } else {
                insert(&mut script, prefix, vec![(tok.clone(), *p), (TERMINAL.to_string(), (1.0 - p).min(*p) / 2.0)]);
            }
        }
        insert(&mut script, with(&head, &revision), vec![(TERMINAL.to_string(), 0.9)]);
        backend = backend.route_claim(&claim, script);

        let doc = Document::from_sentences(format!("doc{k}"), vec![format!("Record {k} opening."), format!("Record {k} facts.")])
            .expect("non-empty");
        dataset.push(GroundTruthRecord {
            doc,
            summary_prefix: Vec::new(),
            claim,
            gt_evidence: BTreeSet::from([1]),
            gt_revision,
            annotations: None,
        });
    }
    (dataset, backend)
}
