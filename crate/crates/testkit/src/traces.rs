//! Thresholded-edit cases traced by hand. Each case lists the scripted
//! distributions, the initial revision, the threshold and the expected
//! outcome: final tokens, each committed change as
//! `(position, forced token, n_del, n_add)`, loop iterations and whether the
//! run ended by truncation.
//!
//! Unless a case says otherwise the fixed output head is empty and tokens are
//! single letters. Prefixes without a script yield the terminal marker with
//! probability 1.

use factaudit_core::genbackend::{BackendQuery, MockBackend, MockScript};
use factaudit_core::promptio::ModelInput;

pub struct TraceCase {
    pub name: &'static str,
    pub backend: MockBackend,
    pub query: BackendQuery,
    pub head: Vec<String>,
    pub initial: Vec<String>,
    pub tau: f64,
    pub expected: Vec<String>,
    pub changes: Vec<(usize, String, usize, usize)>,
    pub iterations: usize,
    pub truncated: bool,
}

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

fn script(nodes: &[(&str, &[(&str, f64)])]) -> MockBackend {
    let mut s = MockScript::new("</s>");
    for (prefix, entries) in nodes {
        let prefix: Vec<&str> = prefix.split_whitespace().collect();
        s = s.node(&prefix, entries);
    }
    MockBackend::new(s)
}

#[allow(clippy::too_many_arguments)]
fn case(
    name: &'static str,
    nodes: &[(&str, &[(&str, f64)])],
    initial: &str,
    tau: f64,
    expected: &str,
    changes: &[(usize, &str, usize, usize)],
    iterations: usize,
    truncated: bool,
) -> TraceCase {
    TraceCase {
        name,
        backend: script(nodes),
        query: BackendQuery::new(ModelInput::new("trace")),
        head: Vec::new(),
        initial: toks(initial),
        tau,
        expected: toks(expected),
        changes: changes.iter().map(|&(p, t, d, a)| (p, t.to_string(), d, a)).collect(),
        iterations,
        truncated,
    }
}

pub fn hand_traced_cases() -> Vec<TraceCase> {
    let mut cases = vec![
        // t=1: p(b)=.3 forces x, completion "c"; b->x; t=2 keeps c.
        case(
            "single replacement",
            &[("", &[("a", 0.9)]), ("a", &[("b", 0.3), ("x", 0.2)]), ("a b", &[("c", 0.9)]), ("a x", &[("c", 0.9)])],
            "a b c",
            0.5,
            "a x c",
            &[(1, "x", 1, 1)],
            3,
            false,
        ),
        // forcing c at t=1 realigns on the rest: b deleted; t=2 checks d after "a c".
        case(
            "pure deletion",
            &[("", &[("a", 0.9)]), ("a", &[("b", 0.2), ("c", 0.1)]), ("a c", &[("d", 0.9)])],
            "a b c d",
            0.5,
            "a c d",
            &[(1, "c", 1, 0)],
            3,
            false,
        ),
        // forcing b then completing "c" inserts b; original c re-examined after "a b".
        case(
            "pure insertion",
            &[("", &[("a", 0.9)]), ("a", &[("c", 0.4), ("b", 0.35)]), ("a b", &[("c", 0.8)])],
            "a c",
            0.5,
            "a b c",
            &[(1, "b", 0, 1)],
            3,
            false,
        ),
        // runner-up is the terminal marker: revision cut at t=1.
        case(
            "truncation to terminal",
            &[("", &[("a", 0.9)]), ("a", &[("b", 0.3), ("</s>", 0.25)])],
            "a b c",
            0.5,
            "a",
            &[(1, "</s>", 2, 0)],
            2,
            true,
        ),
        // b is outside the listed top tokens, so its probability counts as 0 <= tau.
        case(
            "unlisted token at tau zero",
            &[("", &[("a", 0.9)]), ("a", &[("x", 0.6), ("y", 0.3)])],
            "a b",
            0.0,
            "a x",
            &[(1, "x", 1, 1)],
            2,
            false,
        ),
        // nothing but b is listed: no alternative, position skipped.
        case(
            "no alternative skips",
            &[("", &[("a", 0.9)]), ("a", &[("b", 0.3)])],
            "a b",
            0.5,
            "a b",
            &[],
            2,
            false,
        ),
        case(
            "tau zero is a no-op",
            &[("", &[("a", 0.2), ("z", 0.1)]), ("a", &[("b", 0.2), ("z", 0.1)]), ("a b", &[("c", 0.2), ("z", 0.1)])],
            "a b c",
            0.0,
            "a b c",
            &[],
            3,
            false,
        ),
        // p == tau counts as low.
        case(
            "threshold is inclusive",
            &[("", &[("a", 0.9)]), ("a", &[("b", 0.5), ("c", 0.4)])],
            "a b",
            0.5,
            "a c",
            &[(1, "c", 1, 1)],
            2,
            false,
        ),
        case(
            "just above threshold",
            &[("", &[("a", 0.9)]), ("a", &[("b", 0.5), ("c", 0.4)])],
            "a b",
            0.49,
            "a b",
            &[],
            2,
            false,
        ),
        // b->x at t=1 (completion "c d"), then d->y at t=3.
        case(
            "two replacements",
            &[
                ("", &[("a", 0.9)]),
                ("a", &[("b", 0.3), ("x", 0.2)]),
                ("a x", &[("c", 0.9)]),
                ("a x c", &[("d", 0.2), ("y", 0.15)]),
            ],
            "a b c d",
            0.5,
            "a x c y",
            &[(1, "x", 1, 1), (3, "y", 1, 1)],
            4,
            false,
        ),
        // the first completion also rewrites d->z but only b->x is committed;
        // at t=3 d (p=.3) is low again and gets its own change.
        case(
            "later difference needs its own intervention",
            &[
                ("", &[("a", 0.9)]),
                ("a", &[("b", 0.3), ("x", 0.25)]),
                ("a x", &[("c", 0.9)]),
                ("a x c", &[("z", 0.6), ("d", 0.3)]),
            ],
            "a b c d",
            0.5,
            "a x c z",
            &[(1, "x", 1, 1), (3, "z", 1, 1)],
            4,
            false,
        ),
        // as above with tau=.35: d has p=.4 and survives although the
        // first completion replaced it.
        case(
            "only first change committed",
            &[
                ("", &[("a", 0.9)]),
                ("a", &[("b", 0.3), ("x", 0.25)]),
                ("a x", &[("c", 0.9)]),
                ("a x c", &[("z", 0.5), ("d", 0.4)]),
            ],
            "a b c d",
            0.35,
            "a x c d",
            &[(1, "x", 1, 1)],
            4,
            false,
        ),
        // "b c" replaced by x, realigning on d.
        case(
            "two tokens replaced by one",
            &[("", &[("a", 0.9)]), ("a", &[("b", 0.3), ("x", 0.25)]), ("a x", &[("d", 0.9)])],
            "a b c d",
            0.5,
            "a x d",
            &[(1, "x", 2, 1)],
            3,
            false,
        ),
        // "b c" inserted before d; pointer jumps to t=3 which re-checks d.
        case(
            "two-token insertion",
            &[
                ("", &[("a", 0.9)]),
                ("a", &[("d", 0.3), ("b", 0.25)]),
                ("a b", &[("c", 0.9)]),
                ("a b c", &[("d", 0.9)]),
            ],
            "a d",
            0.5,
            "a b c d",
            &[(1, "b", 0, 2)],
            3,
            false,
        ),
        // completion never realigns: whole tail replaced.
        case(
            "divergent tail",
            &[("", &[("a", 0.9)]), ("a", &[("b", 0.3), ("x", 0.2)]), ("a x", &[("y", 0.9)])],
            "a b c",
            0.5,
            "a x y",
            &[(1, "x", 2, 2)],
            2,
            false,
        ),
        case(
            "change at first position",
            &[("", &[("a", 0.3), ("z", 0.25)]), ("z", &[("b", 0.9)])],
            "a b",
            0.5,
            "z b",
            &[(0, "z", 1, 1)],
            2,
            false,
        ),
        case("empty revision", &[], "", 0.9, "", &[], 0, false),
        // two ties after b: the one supplied first wins.
        case(
            "tied runner-up uses supplied order",
            &[("", &[("a", 0.9)]), ("a", &[("b", 0.3), ("y", 0.2), ("x", 0.2)])],
            "a b",
            0.5,
            "a y",
            &[(1, "y", 1, 1)],
            2,
            false,
        ),
        // b inserted at t=1, then e->f at t=3.
        case(
            "insertion then replacement",
            &[
                ("", &[("a", 0.9)]),
                ("a", &[("c", 0.4), ("b", 0.35)]),
                ("a b", &[("c", 0.9)]),
                ("a b c", &[("e", 0.3), ("f", 0.2)]),
            ],
            "a c e",
            0.5,
            "a b c f",
            &[(1, "b", 0, 1), (3, "f", 1, 1)],
            4,
            false,
        ),
        // at tau=.95 even the confident first token is rerouted to z, which ends.
        case(
            "high threshold collapses to alternative",
            &[("", &[("a", 0.9), ("z", 0.05)])],
            "a b",
            0.95,
            "z",
            &[(0, "z", 2, 1)],
            1,
            false,
        ),
        case(
            "truncation at first position",
            &[("", &[("a", 0.3), ("</s>", 0.2)])],
            "a b",
            0.5,
            "",
            &[(0, "</s>", 2, 0)],
            1,
            true,
        ),
        // forcing a at t=1 realigns on the trailing a: b deleted.
        case(
            "repeated token realigns to earliest match",
            &[("", &[("a", 0.9)]), ("a", &[("b", 0.3), ("a", 0.25)])],
            "a b a",
            0.5,
            "a a",
            &[(1, "a", 1, 0)],
            2,
            false,
        ),
    ];

    // completion limited to two new tokens: r' = a x x x.
    let mut limited = case(
        "completion capped by max_new_tokens",
        &[("", &[("a", 0.9)]), ("a", &[("b", 0.3), ("x", 0.2)]), ("a x", &[("x", 0.9)]), ("a x x", &[("x", 0.9)])],
        "a b",
        0.5,
        "a x x x",
        &[(1, "x", 1, 3)],
        2,
        false,
    );
    limited.query = limited.query.with_max_new_tokens(2);
    cases.push(limited);

    // revision conditioned on a fixed evidence head.
    let head: Vec<String> = ["EVIDENCE:", " SENT1", "\nREVISION:"].iter().map(|s| s.to_string()).collect();
    let h = |rest: &[&str]| -> Vec<String> { head.iter().cloned().chain(rest.iter().map(|s| s.to_string())).collect() };
    let mut s = MockScript::new("</s>");
    for (prefix, entries) in [
        (h(&[]), vec![(" a", 0.9)]),
        (h(&[" a"]), vec![(" b", 0.4), (" c", 0.3)]),
        (h(&[" a", " c"]), vec![("</s>", 0.9)]),
    ] {
        let prefix: Vec<&str> = prefix.iter().map(String::as_str).collect();
        s = s.node(&prefix, &entries);
    }
    cases.push(TraceCase {
        name: "conditioned on evidence head",
        backend: MockBackend::new(s),
        query: BackendQuery::new(ModelInput::new("trace")),
        head: head.clone(),
        initial: vec![" a".into(), " b".into()],
        tau: 0.5,
        expected: vec![" a".into(), " c".into()],
        changes: vec![(1, " c".into(), 1, 1)],
        iterations: 2,
        truncated: false,
    });
    cases
}
