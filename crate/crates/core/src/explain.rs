//! Attention-weighted ngram evidence: extraction, word-level reduction for
//! fidelity testing, and highlighted rendering.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt::Write;

use rand::Rng;

use crate::dag::Span;
use crate::model::ModelOutput;
use crate::{Error, Result};

/// Units whose weight is strictly above this are reported.
pub const DEFAULT_THRESHOLD: f64 = 0.05;

/// How per-word importance is derived from unit weights.
pub const WORD_IMPORTANCE_RULE: &str = "max-over-covering-units";

/// Order in which kept words are emitted.
pub const REDUCED_WORD_ORDER: &str = "document-order";

#[derive(Clone, Debug, PartialEq)]
pub struct Evidence {
    pub span: Span,
    pub text: String,
    /// The model's attention weight for this unit, unmodified.
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvidenceReport {
    pub predicted: usize,
    /// Descending weight; ties broken by earlier start, then shorter span.
    pub evidence: Vec<Evidence>,
    pub tokens: Vec<String>,
}

fn check_alignment(output: &ModelOutput, token_count: usize) -> Result<()> {
    if output.alpha.len() != output.units.len() {
        return Err(Error::Misaligned {
            what: "attention weights",
            expected: output.units.len(),
            found: output.alpha.len(),
        });
    }
    if let Some(bad) = output.units.iter().find(|s| s.end() > token_count) {
        return Err(Error::Misaligned {
            what: "tokens",
            expected: bad.end(),
            found: token_count,
        });
    }
    Ok(())
}

fn by_weight(a: (f64, Span), b: (f64, Span)) -> Ordering {
    b.0.partial_cmp(&a.0)
        .unwrap_or(Ordering::Equal)
        .then(a.1.start.cmp(&b.1.start))
        .then(a.1.order.cmp(&b.1.order))
}

/// Every unit with `α > threshold`, overlapping spans included.
pub fn extract_evidence<S: AsRef<str>>(output: &ModelOutput, tokens: &[S], threshold: f64) -> Result<EvidenceReport> {
    check_alignment(output, tokens.len())?;
    let mut picked: Vec<(f64, Span)> = output
        .alpha
        .iter()
        .zip(&output.units)
        .filter(|(a, _)| **a > threshold)
        .map(|(a, s)| (*a, *s))
        .collect();
    picked.sort_by(|a, b| by_weight(*a, *b));
    let evidence = picked
        .into_iter()
        .map(|(weight, span)| Evidence {
            span,
            text: join(&tokens[span.start..span.end()]),
            weight,
        })
        .collect();
    Ok(EvidenceReport {
        predicted: output.predicted(),
        evidence,
        tokens: tokens.iter().map(|t| String::from(t.as_ref())).collect(),
    })
}

fn join<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(t.as_ref());
    }
    out
}

/// Importance of each word: the largest weight among units covering it.
pub fn word_importance(output: &ModelOutput, token_count: usize) -> Result<Vec<f64>> {
    check_alignment(output, token_count)?;
    let mut importance = alloc::vec![0.0_f64; token_count];
    for (a, span) in output.alpha.iter().zip(&output.units) {
        for w in &mut importance[span.start..span.end()] {
            *w = w.max(*a);
        }
    }
    Ok(importance)
}

/// Positions of the `n` most important words (earlier position wins ties),
/// ascending.
pub fn top_word_positions(output: &ModelOutput, token_count: usize, n: usize) -> Result<Vec<usize>> {
    let importance = word_importance(output, token_count)?;
    let mut order: Vec<usize> = (0..token_count).collect();
    order.sort_by(|&a, &b| {
        importance[b]
            .partial_cmp(&importance[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order.truncate(n.min(token_count));
    order.sort_unstable();
    Ok(order)
}

/// The `n` most important words, in document order.
pub fn keep_top_words<T: Clone>(tokens: &[T], output: &ModelOutput, n: usize) -> Result<Vec<T>> {
    Ok(top_word_positions(output, tokens.len(), n)?
        .into_iter()
        .map(|i| tokens[i].clone())
        .collect())
}

/// A contiguous window of `min(n, len)` tokens at a uniform random start.
pub fn random_subsequence<T: Clone, R: Rng + ?Sized>(tokens: &[T], n: usize, rng: &mut R) -> Vec<T> {
    let len = n.min(tokens.len());
    let start = rng.gen_range(0..=tokens.len() - len);
    tokens[start..start + len].to_vec()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HighlightFormat {
    /// Evidence regions (overlaps merged) wrapped in `**…**`.
    Plain,
    /// `<mark data-weight="…">` elements, nested where spans overlap.
    Html,
}

pub fn render_highlights(report: &EvidenceReport, format: HighlightFormat) -> String {
    match format {
        HighlightFormat::Plain => render_plain(report),
        HighlightFormat::Html => render_html(report),
    }
}

fn render_plain(report: &EvidenceReport) -> String {
    let n = report.tokens.len();
    let mut marked = alloc::vec![false; n];
    for e in &report.evidence {
        for m in &mut marked[e.span.start..e.span.end().min(n)] {
            *m = true;
        }
    }
    let mut out = String::new();
    for (i, tok) in report.tokens.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        if marked[i] && (i == 0 || !marked[i - 1]) {
            out.push_str("**");
        }
        out.push_str(tok);
        if marked[i] && (i + 1 == n || !marked[i + 1]) {
            out.push_str("**");
        }
    }
    out
}

fn escape(out: &mut String, s: &str) {
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            c => out.push(c),
        }
    }
}

fn render_html(report: &EvidenceReport) -> String {
    let n = report.tokens.len();
    let mut spans: Vec<&Evidence> = report.evidence.iter().filter(|e| e.span.end() <= n).collect();
    spans.sort_by(|a, b| a.span.start.cmp(&b.span.start).then(b.span.order.cmp(&a.span.order)));

    let open = |out: &mut String, e: &Evidence| {
        let _ = write!(out, "<mark data-weight=\"{:.4}\">", e.weight);
    };
    let mut out = String::new();
    let mut stack: Vec<&Evidence> = Vec::new();
    let mut next = 0;
    for p in 0..=n {
        // Close everything ending here; spans popped on the way that keep
        // going are reopened so the markup stays properly nested.
        let mut reopen = Vec::new();
        while stack.iter().any(|e| e.span.end() == p) {
            let top = stack.pop().expect("non-empty");
            out.push_str("</mark>");
            if top.span.end() != p {
                reopen.push(top);
            }
        }
        if p == n {
            break;
        }
        if p > 0 {
            out.push(' ');
        }
        for e in reopen.into_iter().rev() {
            open(&mut out, e);
            stack.push(e);
        }
        while next < spans.len() && spans[next].span.start == p {
            open(&mut out, spans[next]);
            stack.push(spans[next]);
            next += 1;
        }
        escape(&mut out, &report.tokens[p]);
    }
    out
}
