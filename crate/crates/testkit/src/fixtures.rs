//! The Micheal Ward biography example: document excerpt, summary context,
//! claim, target output and the exact serialized model input.

use factaudit_core::genbackend::{whitespace_tokens, MockBackend, MockScript};
use factaudit_core::textmodel::{ClaimContext, Document, SectionParts, Sentence};

/// Visible sentences of the excerpt. Ids 5..=16 are elided in the source
/// excerpt and stay absent rather than being invented.
pub const WARD_SENTENCES: [(usize, &str); 8] = [
    (0, "Micheal Ward"),
    (1, "Early life."),
    (2, "Micheal Ward was born in Spanish Town, Jamaica on 18 November 1997."),
    (3, "His mother was 18 years old when he was born."),
    (4, "He has three sisters."),
    (17, "Ward's breakout year came in 2019, when he starred as Jamie in Netflix's revival and third series of \"Top Boy\"."),
    (18, "He also appeared in a leading role in the film \"Blue Story\" in the same year."),
    (19, "The film received critical acclaim, and Ward won the BAFTA Rising Star Award for his performance."),
];

pub const WARD_SUMMARY: &str = "Micheal Ward (born 18 November 1997) is a Jamaican-British actor and former model.";
pub const WARD_CLAIM: &str = "His films include \"Blue Story\" (2018) and \"The Old Guard\" (2020).";
pub const WARD_REVISION: &str = "His films include \"Blue Story\".";
pub const WARD_OUTPUT: &str = "EVIDENCE: SENT18\nREVISION: His films include \"Blue Story\".";

/// The serialized input, written out by hand.
pub const WARD_PROMPT: &str = "You are provided a document and its summary. The summary may potentially contain factual errors. The last sentence of the summary is marked as a claim. Find all sentences in the document providing evidence for the claim, and then revise the claim to remove or replace unsupported facts.\n\
DOCUMENT: SENT0 Micheal Ward SENT1 Early life. SENT2 Micheal Ward was born in Spanish Town, Jamaica on 18 November 1997. SENT3 His mother was 18 years old when he was born. SENT4 He has three sisters. SENT17 Ward's breakout year came in 2019, when he starred as Jamie in Netflix's revival and third series of \"Top Boy\". SENT18 He also appeared in a leading role in the film \"Blue Story\" in the same year. SENT19 The film received critical acclaim, and Ward won the BAFTA Rising Star Award for his performance.\n\
SUMMARY: Micheal Ward (born 18 November 1997) is a Jamaican-British actor and former model.\n\
CLAIM: His films include \"Blue Story\" (2018) and \"The Old Guard\" (2020).";

/// Claim word indices the reference revision removes: `( 2018 ) and " The
/// Old Guard " ( 2020 )`, i.e. everything between the closing quote after
/// "Story" and the final period.
pub const WARD_INCORRECT: [usize; 12] = [7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18];

pub const WARD_DELETED_WORDS: [&str; 12] = ["(", "2018", ")", "and", "\"", "The", "Old", "Guard", "\"", "(", "2020", ")"];

pub fn ward_document() -> Document {
    let sentences = WARD_SENTENCES.iter().map(|&(id, text)| Sentence { id, text: text.to_string() }).collect();
    Document::from_parts("micheal-ward", vec![SectionParts { title: None, sentences }]).expect("valid fixture")
}

pub fn ward_context() -> ClaimContext {
    ClaimContext::new(vec![WARD_SUMMARY.to_string()], WARD_CLAIM).expect("non-empty claim")
}

/// Scripted backend whose greedy output is [`WARD_OUTPUT`].
pub fn ward_backend() -> MockBackend {
    let tokens = whitespace_tokens(WARD_OUTPUT);
    let steps: Vec<(&str, f64)> = tokens.iter().map(|t| (t.as_str(), 0.9)).collect();
    MockBackend::new(MockScript::new("</s>").path(&[], &steps, None))
}

/// Scripted backend emitting `output` as its greedy pass, with the given
/// per-token probabilities (default 0.9).
pub fn output_backend(output: &str, probs: Option<&[f64]>) -> MockBackend {
    MockBackend::new(output_script(output, probs))
}

pub fn output_script(output: &str, probs: Option<&[f64]>) -> MockScript {
    let tokens = whitespace_tokens(output);
    let steps: Vec<(&str, f64)> = tokens
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), probs.and_then(|p| p.get(i).copied()).unwrap_or(0.9)))
        .collect();
    MockScript::new("</s>").path(&[], &steps, None)
}
