//! Hierarchical ngram structures and their dependency levels.
//!
//! Four layouts are supported. `Pyramid`, `LeftForest` and `RightForest`
//! contain every ngram up to the maximum order and differ only in how an
//! order-`k` node is split into two children:
//!
//! | kind          | children of `(i, k)`            |
//! |---------------|---------------------------------|
//! | `Pyramid`     | `(i, k-1)` and `(i+1, k-1)`     |
//! | `LeftForest`  | `(i, k-1)` and `(i+k-1, 1)`     |
//! | `RightForest` | `(i, 1)` and `(i+1, k-1)`       |
//!
//! `Tree` takes its phrases from a binarized constituent bracketing.
//!
//! Node ids are assigned level by level, left to right, so concatenating
//! the levels in order yields the nodes in id order.

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::{Error, Result};

pub type NodeId = usize;

/// A contiguous ngram: `order` tokens starting at `start`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub start: usize,
    pub order: usize,
}

impl Span {
    pub const fn new(start: usize, order: usize) -> Self {
        Self { start, order }
    }

    /// One past the last covered token.
    pub const fn end(&self) -> usize {
        self.start + self.order
    }

    pub const fn contains(&self, token: usize) -> bool {
        token >= self.start && token < self.end()
    }

    pub const fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end() && other.start < self.end()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StructureKind {
    Tree,
    Pyramid,
    LeftForest,
    RightForest,
}

impl StructureKind {
    pub const ALL: [StructureKind; 4] = [
        StructureKind::Tree,
        StructureKind::Pyramid,
        StructureKind::LeftForest,
        StructureKind::RightForest,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StructureKind::Tree => "tree",
            StructureKind::Pyramid => "pyramid",
            StructureKind::LeftForest => "left-forest",
            StructureKind::RightForest => "right-forest",
        }
    }

    /// Whether the structure contains every ngram up to the maximum order.
    pub fn is_ngram(self) -> bool {
        !matches!(self, StructureKind::Tree)
    }
}

impl fmt::Display for StructureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StructureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tree" => Ok(StructureKind::Tree),
            "pyramid" => Ok(StructureKind::Pyramid),
            "left-forest" | "leftforest" => Ok(StructureKind::LeftForest),
            "right-forest" | "rightforest" => Ok(StructureKind::RightForest),
            other => Err(Error::Config(alloc::format!("unknown structure `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NgramNode {
    pub id: NodeId,
    pub span: Span,
    /// `(left, right)`; `None` for unigram leaves.
    pub children: Option<(NodeId, NodeId)>,
    /// 1 for leaves. Equals the order for ngram kinds and the height above
    /// the leaves for trees.
    pub level: usize,
}

impl NgramNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NgramDag {
    kind: StructureKind,
    token_count: usize,
    max_order: usize,
    nodes: Vec<NgramNode>,
    levels: Vec<Vec<NodeId>>,
}

impl NgramDag {
    /// Builds a structure over `token_count` tokens.
    ///
    /// `max_order` is clamped to `token_count`. `Tree` ignores it apart
    /// from the `>= 1` check and requires `parse`.
    pub fn build(kind: StructureKind, token_count: usize, max_order: usize, parse: Option<&Bracket>) -> Result<Self> {
        if token_count == 0 {
            return Err(Error::Empty("token sequence"));
        }
        if max_order == 0 {
            return Err(Error::ZeroOrder);
        }
        match kind {
            StructureKind::Tree => Self::from_bracket(parse.ok_or(Error::MissingParse)?, token_count),
            _ => Ok(Self::ngram(kind, token_count, max_order.min(token_count))),
        }
    }

    fn ngram(kind: StructureKind, n: usize, max_order: usize) -> Self {
        let offset = |k: usize| -> usize { (1..k).map(|j| n - j + 1).sum() };
        let id = |start: usize, k: usize| offset(k) + start;

        let mut nodes = Vec::new();
        let mut levels = Vec::with_capacity(max_order);
        for k in 1..=max_order {
            let base = offset(k);
            let mut level = Vec::with_capacity(n - k + 1);
            for i in 0..=n - k {
                let children = (k > 1).then(|| match kind {
                    StructureKind::Pyramid => (id(i, k - 1), id(i + 1, k - 1)),
                    StructureKind::LeftForest => (id(i, k - 1), id(i + k - 1, 1)),
                    StructureKind::RightForest => (id(i, 1), id(i + 1, k - 1)),
                    StructureKind::Tree => unreachable!("trees are built from brackets"),
                });
                debug_assert_eq!(nodes.len(), base + i);
                nodes.push(NgramNode {
                    id: base + i,
                    span: Span::new(i, k),
                    children,
                    level: k,
                });
                level.push(base + i);
            }
            levels.push(level);
        }
        Self {
            kind,
            token_count: n,
            max_order,
            nodes,
            levels,
        }
    }

    fn from_bracket(tree: &Bracket, n: usize) -> Result<Self> {
        let found = tree.leaf_count();
        if found != n {
            return Err(Error::LeafCount { expected: n, found });
        }
        // Post-order walk collecting (span, level, child positions).
        struct Raw {
            span: Span,
            level: usize,
            children: Option<(usize, usize)>,
        }
        fn walk(b: &Bracket, start: usize, out: &mut Vec<Raw>) -> usize {
            match b {
                Bracket::Leaf(_) => {
                    out.push(Raw {
                        span: Span::new(start, 1),
                        level: 1,
                        children: None,
                    });
                    out.len() - 1
                }
                Bracket::Pair(l, r) => {
                    let li = walk(l, start, out);
                    let ri = walk(r, out[li].span.end(), out);
                    let span = Span::new(start, out[li].span.order + out[ri].span.order);
                    let level = 1 + out[li].level.max(out[ri].level);
                    out.push(Raw {
                        span,
                        level,
                        children: Some((li, ri)),
                    });
                    out.len() - 1
                }
            }
        }
        let mut raw = Vec::with_capacity(2 * n - 1);
        walk(tree, 0, &mut raw);

        let mut order: Vec<usize> = (0..raw.len()).collect();
        order.sort_by_key(|&i| (raw[i].level, raw[i].span.start));
        let mut id_of = vec![0; raw.len()];
        for (id, &i) in order.iter().enumerate() {
            id_of[i] = id;
        }
        let depth = raw.iter().map(|r| r.level).max().unwrap_or(1);
        let mut levels = vec![Vec::new(); depth];
        let nodes = order
            .iter()
            .enumerate()
            .map(|(id, &i)| {
                let r = &raw[i];
                levels[r.level - 1].push(id);
                NgramNode {
                    id,
                    span: r.span,
                    children: r.children.map(|(l, c)| (id_of[l], id_of[c])),
                    level: r.level,
                }
            })
            .collect();
        Ok(Self {
            kind: StructureKind::Tree,
            token_count: n,
            max_order: n,
            nodes,
            levels,
        })
    }

    pub fn kind(&self) -> StructureKind {
        self.kind
    }

    pub fn token_count(&self) -> usize {
        self.token_count
    }

    /// Largest span order present.
    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn nodes(&self) -> &[NgramNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> Result<&NgramNode> {
        self.nodes.get(id).ok_or(Error::UnknownNode(id))
    }

    pub fn spans(&self) -> impl Iterator<Item = Span> + '_ {
        self.nodes.iter().map(|n| n.span)
    }

    /// Batches of mutually independent nodes; every child of a node in
    /// batch `b` lives in a batch before `b`.
    pub fn level_schedule(&self) -> &[Vec<NodeId>] {
        &self.levels
    }

    pub fn find(&self, span: Span) -> Option<NodeId> {
        if self.kind.is_ngram() {
            let n = self.token_count;
            if span.order == 0 || span.order > self.max_order || span.end() > n {
                return None;
            }
            let offset: usize = (1..span.order).map(|j| n - j + 1).sum();
            Some(offset + span.start)
        } else {
            self.nodes.iter().position(|node| node.span == span)
        }
    }

    /// Leaf tokens reached by fully expanding `id`, shared children counted
    /// once per path. Sorted ascending.
    pub fn unfold_tokens(&self, id: NodeId) -> Result<Vec<usize>> {
        self.node(id)?;
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(cur) = stack.pop() {
            let node = &self.nodes[cur];
            match node.children {
                None => out.push(node.span.start),
                Some((l, r)) => {
                    stack.push(r);
                    stack.push(l);
                }
            }
        }
        out.sort_unstable();
        Ok(out)
    }

    /// The tokens covered by `id`.
    pub fn ngram_text<'t, T>(&self, id: NodeId, tokens: &'t [T]) -> Result<&'t [T]> {
        let span = self.node(id)?.span;
        tokens.get(span.start..span.end()).ok_or(Error::Misaligned {
            what: "tokens",
            expected: self.token_count,
            found: tokens.len(),
        })
    }
}

/// A fully binary bracketing such as `((w1 w2) (w3 w4))`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Bracket {
    Leaf(String),
    Pair(Box<Bracket>, Box<Bracket>),
}

impl Bracket {
    pub fn pair(left: Bracket, right: Bracket) -> Self {
        Bracket::Pair(Box::new(left), Box::new(right))
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            Bracket::Leaf(_) => 1,
            Bracket::Pair(l, r) => l.leaf_count() + r.leaf_count(),
        }
    }

    pub fn leaves(&self) -> Vec<&str> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(b) = stack.pop() {
            match b {
                Bracket::Leaf(w) => out.push(w.as_str()),
                Bracket::Pair(l, r) => {
                    stack.push(r);
                    stack.push(l);
                }
            }
        }
        out
    }

    /// Left-branching bracketing `(((w0 w1) w2) w3)` over `words`.
    pub fn left_branching<S: AsRef<str>>(words: &[S]) -> Option<Self> {
        let mut iter = words.iter().map(|w| Bracket::Leaf(w.as_ref().to_string()));
        let first = iter.next()?;
        Some(iter.fold(first, Bracket::pair))
    }

    /// Right-branching bracketing `(w0 (w1 (w2 w3)))` over `words`.
    pub fn right_branching<S: AsRef<str>>(words: &[S]) -> Option<Self> {
        let mut iter = words.iter().rev().map(|w| Bracket::Leaf(w.as_ref().to_string()));
        let last = iter.next()?;
        Some(iter.fold(last, |acc, w| Bracket::pair(w, acc)))
    }
}

impl fmt::Display for Bracket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bracket::Leaf(w) => f.write_str(w),
            Bracket::Pair(l, r) => write!(f, "({l} {r})"),
        }
    }
}

impl FromStr for Bracket {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parser = BracketParser { src: s, pos: 0 };
        let tree = parser.node()?;
        parser.skip_ws();
        if parser.pos != s.len() {
            return Err(Error::Bracket {
                pos: parser.pos,
                msg: "trailing input after tree",
            });
        }
        Ok(tree)
    }
}

struct BracketParser<'a> {
    src: &'a str,
    pos: usize,
}

impl BracketParser<'_> {
    fn skip_ws(&mut self) {
        let rest = &self.src[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn node(&mut self) -> Result<Bracket> {
        self.skip_ws();
        match self.peek() {
            None => Err(Error::Bracket {
                pos: self.pos,
                msg: "unexpected end of input",
            }),
            Some(')') => Err(Error::Bracket {
                pos: self.pos,
                msg: "unexpected `)`",
            }),
            Some('(') => {
                self.pos += 1;
                let left = self.node()?;
                let right = self.node()?;
                self.skip_ws();
                match self.peek() {
                    Some(')') => {
                        self.pos += 1;
                        Ok(Bracket::pair(left, right))
                    }
                    None => Err(Error::Bracket {
                        pos: self.pos,
                        msg: "unclosed `(`",
                    }),
                    Some(_) => Err(Error::Bracket {
                        pos: self.pos,
                        msg: "group must have exactly two children",
                    }),
                }
            }
            Some(_) => {
                let rest = &self.src[self.pos..];
                let len = rest
                    .find(|c: char| c.is_whitespace() || c == '(' || c == ')')
                    .unwrap_or(rest.len());
                self.pos += len;
                Ok(Bracket::Leaf(rest[..len].to_string()))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dag(kind: StructureKind, n: usize, k: usize) -> NgramDag {
        NgramDag::build(kind, n, k, None).unwrap()
    }

    fn children_spans(d: &NgramDag, span: Span) -> (Span, Span) {
        let node = d.node(d.find(span).unwrap()).unwrap();
        let (l, r) = node.children.unwrap();
        (d.nodes()[l].span, d.nodes()[r].span)
    }

    #[test]
    fn pyramid_over_four_tokens() {
        let d = dag(StructureKind::Pyramid, 4, 4);
        assert_eq!(d.len(), 10);
        let sizes: Vec<_> = d.level_schedule().iter().map(Vec::len).collect();
        assert_eq!(sizes, [4, 3, 2, 1]);
        assert_eq!(children_spans(&d, Span::new(0, 3)), (Span::new(0, 2), Span::new(1, 2)));
    }

    #[test]
    fn forests_over_four_tokens() {
        let left = dag(StructureKind::LeftForest, 4, 4);
        assert_eq!(left.len(), 10);
        assert_eq!(
            children_spans(&left, Span::new(0, 3)),
            (Span::new(0, 2), Span::new(2, 1))
        );
        let right = dag(StructureKind::RightForest, 4, 4);
        assert_eq!(
            children_spans(&right, Span::new(0, 3)),
            (Span::new(0, 1), Span::new(1, 2))
        );
    }

    #[test]
    fn single_token_is_a_lone_leaf() {
        for kind in [
            StructureKind::Pyramid,
            StructureKind::LeftForest,
            StructureKind::RightForest,
        ] {
            let d = dag(kind, 1, 7);
            assert_eq!(d.len(), 1);
            assert!(d.nodes()[0].is_leaf());
            assert_eq!(d.max_order(), 1);
        }
        let t = NgramDag::build(StructureKind::Tree, 1, 3, Some(&"w".parse().unwrap())).unwrap();
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn pyramid_five_tokens_order_three() {
        let d = dag(StructureKind::Pyramid, 5, 3);
        let mut brute = 0;
        for k in 1..=3 {
            for i in 0..5 {
                if i + k <= 5 {
                    brute += 1;
                }
            }
        }
        assert_eq!(d.len(), brute);
        assert_eq!(d.len(), 12);
    }

    #[test]
    fn left_branching_tree_levels() {
        let b = Bracket::left_branching(&["a", "b", "c", "d"]).unwrap();
        assert_eq!(b.to_string(), "(((a b) c) d)");
        let d = NgramDag::build(StructureKind::Tree, 4, 7, Some(&b)).unwrap();
        let sizes: Vec<_> = d.level_schedule().iter().map(Vec::len).collect();
        assert_eq!(sizes, [4, 1, 1, 1]);
        assert_eq!(d.len(), 7);
    }

    #[test]
    fn unfold_shows_pyramid_duplication() {
        let p = dag(StructureKind::Pyramid, 4, 4);
        assert_eq!(p.unfold_tokens(p.find(Span::new(0, 3)).unwrap()).unwrap(), [0, 1, 1, 2]);
        let l = dag(StructureKind::LeftForest, 4, 4);
        assert_eq!(l.unfold_tokens(l.find(Span::new(0, 3)).unwrap()).unwrap(), [0, 1, 2]);
        assert_eq!(l.unfold_tokens(l.find(Span::new(2, 1)).unwrap()).unwrap(), [2]);
        assert_eq!(l.unfold_tokens(99), Err(Error::UnknownNode(99)));
    }

    #[test]
    fn ngram_text_slices_tokens() {
        let toks = ["a", "b", "c", "d"];
        let d = dag(StructureKind::LeftForest, 4, 4);
        let text = |s| d.ngram_text(d.find(s).unwrap(), &toks).unwrap().join(" ");
        assert_eq!(text(Span::new(1, 2)), "b c");
        assert_eq!(text(Span::new(0, 4)), "a b c d");
        assert_eq!(text(Span::new(3, 1)), "d");
    }

    #[test]
    fn bracket_errors() {
        assert!(matches!("((a b)".parse::<Bracket>(), Err(Error::Bracket { .. })));
        assert!(matches!("(a b c)".parse::<Bracket>(), Err(Error::Bracket { .. })));
        assert!(matches!("(a b))".parse::<Bracket>(), Err(Error::Bracket { .. })));
        assert!(matches!("".parse::<Bracket>(), Err(Error::Bracket { .. })));
        let b: Bracket = "((w1 w2) (w3 w4))".parse().unwrap();
        assert_eq!(b.leaves(), ["w1", "w2", "w3", "w4"]);
        assert_eq!(
            NgramDag::build(StructureKind::Tree, 5, 1, Some(&b)),
            Err(Error::LeafCount { expected: 5, found: 4 })
        );
        assert_eq!(
            NgramDag::build(StructureKind::Tree, 4, 1, None),
            Err(Error::MissingParse)
        );
        assert_eq!(
            NgramDag::build(StructureKind::Pyramid, 4, 0, None),
            Err(Error::ZeroOrder)
        );
    }

    #[test]
    fn order_clamped_to_length() {
        let d = dag(StructureKind::LeftForest, 200, 7);
        assert_eq!(d.level_schedule().len(), 7);
        let d = dag(StructureKind::LeftForest, 3, 7);
        assert_eq!(d.level_schedule().len(), 3);
        assert_eq!(d.max_order(), 3);
    }
}
