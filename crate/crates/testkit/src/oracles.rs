//! Slow, obviously-correct reference implementations. Rational results are
//! kept as exact integer fractions.

use std::collections::BTreeSet;

/// Length of a longest common subsequence by the textbook prefix table.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut table = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            table[i][j] = if a[i - 1] == b[j - 1] {
                table[i - 1][j - 1] + 1
            } else {
                table[i - 1][j].max(table[i][j - 1])
            };
        }
    }
    table[a.len()][b.len()]
}

/// Whether `sub` is a subsequence of `seq`.
pub fn is_subsequence<T: PartialEq>(sub: &[T], seq: &[T]) -> bool {
    let mut it = seq.iter();
    sub.iter().all(|x| it.any(|y| y == x))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

pub fn confusion(gold: &[bool], pred: &[bool]) -> Confusion {
    assert_eq!(gold.len(), pred.len());
    let mut c = Confusion::default();
    for i in 0..gold.len() {
        if gold[i] && pred[i] {
            c.tp += 1;
        } else if pred[i] {
            c.fp += 1;
        } else if gold[i] {
            c.fn_ += 1;
        } else {
            c.tn += 1;
        }
    }
    c
}

/// Confusion over sentence ids `0..doc_size` by scanning every id.
pub fn set_confusion(gold: &BTreeSet<usize>, pred: &BTreeSet<usize>, doc_size: usize) -> Confusion {
    let g: Vec<bool> = (0..doc_size).map(|i| gold.contains(&i)).collect();
    let p: Vec<bool> = (0..doc_size).map(|i| pred.contains(&i)).collect();
    confusion(&g, &p)
}

/// An exact fraction `num / den` (den > 0), or `None` for an undefined value.
pub type Fraction = (i128, i128);

pub fn to_f64(f: Fraction) -> f64 {
    f.0 as f64 / f.1 as f64
}

/// Precision, recall and F1 as fractions, with 0 for empty denominators.
pub fn prf(c: Confusion) -> (Fraction, Fraction, Fraction) {
    let frac = |n: usize, d: usize| if d == 0 { (0, 1) } else { (n as i128, d as i128) };
    let p = frac(c.tp, c.tp + c.fp);
    let r = frac(c.tp, c.tp + c.fn_);
    // 2PR/(P+R) with P = tp/(tp+fp), R = tp/(tp+fn) reduces to 2tp/(2tp+fp+fn)
    let f = if c.tp == 0 { (0, 1) } else { (2 * c.tp as i128, (2 * c.tp + c.fp + c.fn_) as i128) };
    (p, r, f)
}

/// Cohen's kappa from the 2x2 agreement table.
pub fn kappa(a: &[bool], b: &[bool]) -> Option<Fraction> {
    assert_eq!(a.len(), b.len());
    let n = a.len() as i128;
    let mut table = [[0i128; 2]; 2];
    for i in 0..a.len() {
        table[a[i] as usize][b[i] as usize] += 1;
    }
    let agree = table[0][0] + table[1][1];
    let chance: i128 = (0..2).map(|k| (table[k][0] + table[k][1]) * (table[0][k] + table[1][k])).sum();
    let den = n * n - chance;
    if den == 0 {
        // both raters used a single label: agreement is total or undefined
        return (n > 0 && agree == n).then_some((1, 1));
    }
    Some((n * agree - chance, den))
}

pub fn balanced_accuracy(gold: &[bool], pred: &[bool]) -> Option<Fraction> {
    let c = confusion(gold, pred);
    let (pos, neg) = ((c.tp + c.fn_) as i128, (c.tn + c.fp) as i128);
    if pos == 0 || neg == 0 {
        return None;
    }
    Some((c.tp as i128 * neg + c.tn as i128 * pos, 2 * pos * neg))
}

/// Random-flip baseline evaluated by explicit counting on a population of
/// `n` words: `t` positives, the model flags `p` words of which `a` are
/// positive, then `k` of the remaining words are flagged at random.
/// Returns expected precision `(a + k·(t−a)/(n−p)) / (p + k)`.
pub fn flip_precision(n: f64, t: f64, p: f64, a: f64, k: f64) -> f64 {
    let extra_tp = k * (t - a) / (n - p);
    (a + extra_tp) / (p + k)
}
