//! Hofbauer's Markov diagram: follower sets, constraint words, loops.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use petgraph::graph::DiGraph;
use serde::Serialize;
use thiserror::Error;

use crate::interval::RationalInterval;
use crate::map::{MapError, PLMap};
use crate::rational::{self, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HofbauerError {
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("letter {0} out of range")]
    BadLetter(usize),
    #[error("empty word")]
    EmptyWord,
    #[error("forbidden word")]
    Forbidden,
    #[error("vertex {0} out of range")]
    BadVertex(usize),
    #[error("not a closed path of arrows")]
    NotALoop,
    #[error("loop certificate failed at step {0}")]
    Certificate(usize),
}

/// An open lap of `f`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Letter {
    pub index: usize,
    pub interval: RationalInterval,
    /// `1` on increasing laps, `-1` on decreasing ones.
    pub direction: i8,
}

pub fn alphabet(f: &PLMap) -> Result<Vec<Letter>, MapError> {
    Ok(f.laps()?
        .into_iter()
        .enumerate()
        .map(|(index, lap)| Letter {
            index,
            interval: RationalInterval::open(lap.lo, lap.hi),
            direction: if lap.increasing { 1 } else { -1 },
        })
        .collect())
}

/// A word whose follower set changes when its first letter is dropped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConstraintWord {
    pub letters: Vec<usize>,
    pub follower: RationalInterval,
}

impl ConstraintWord {
    pub fn label(&self) -> String {
        self.letters.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(".")
    }
}

fn extend(f: &PLMap, follower: &RationalInterval, letter: &Letter) -> RationalInterval {
    f.image_interval(follower).intersect(&letter.interval)
}

fn follower_in(f: &PLMap, letters: &[Letter], word: &[usize]) -> Result<RationalInterval, HofbauerError> {
    let (&first, rest) = word.split_first().ok_or(HofbauerError::EmptyWord)?;
    let mut fol = letters.get(first).ok_or(HofbauerError::BadLetter(first))?.interval.clone();
    for &a in rest {
        let letter = letters.get(a).ok_or(HofbauerError::BadLetter(a))?;
        if fol.is_empty() {
            break;
        }
        fol = extend(f, &fol, letter);
    }
    Ok(fol)
}

/// Points of the last letter that just finished reading `word`; empty iff
/// the word is forbidden.
pub fn follower_set(f: &PLMap, word: &[usize]) -> Result<RationalInterval, HofbauerError> {
    if word.is_empty() {
        return Ok(RationalInterval::unit());
    }
    follower_in(f, &alphabet(f)?, word)
}

fn min_word_in(f: &PLMap, letters: &[Letter], word: &[usize]) -> Result<ConstraintWord, HofbauerError> {
    let full = follower_in(f, letters, word)?;
    if full.is_empty() {
        return Err(HofbauerError::Forbidden);
    }
    for k in 1..=word.len() {
        let suffix = &word[word.len() - k..];
        let fol = follower_in(f, letters, suffix)?;
        if fol.same_set(&full) {
            return Ok(ConstraintWord { letters: suffix.to_vec(), follower: full });
        }
    }
    unreachable!("the full word is its own suffix")
}

/// Shortest suffix of `word` with the same follower set.
pub fn min_word(f: &PLMap, word: &[usize]) -> Result<ConstraintWord, HofbauerError> {
    min_word_in(f, &alphabet(f)?, word)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Truncation {
    Exact,
    WordLengthCap(usize),
    VertexCap(usize),
}

/// The Markov diagram, possibly truncated.
#[derive(Debug, Clone, Serialize)]
pub struct Diagram {
    pub alphabet: Vec<Letter>,
    pub vertices: Vec<ConstraintWord>,
    /// `arrows[v]` lists `(letter, target)` pairs.
    pub arrows: Vec<Vec<(usize, usize)>>,
    pub truncation: Truncation,
    pub root_letters: Vec<usize>,
}

impl Diagram {
    pub fn is_exact(&self) -> bool {
        self.truncation == Truncation::Exact
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn arrow_count(&self) -> usize {
        self.arrows.iter().map(Vec::len).sum()
    }

    pub fn successors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.arrows[v].iter().map(|&(_, w)| w)
    }

    pub fn find(&self, letters: &[usize]) -> Option<usize> {
        self.vertices.iter().position(|w| w.letters == letters)
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph hofbauer {\n");
        for (i, w) in self.vertices.iter().enumerate() {
            let _ = writeln!(out, "  v{i} [label=\"{} {}\"];", w.label(), w.follower);
        }
        for (i, outs) in self.arrows.iter().enumerate() {
            for &(a, j) in outs {
                let _ = writeln!(out, "  v{i} -> v{j} [label=\"{a}\"];");
            }
        }
        out.push_str("}\n");
        out
    }

    /// Adjacency with vertices labeled by their words.
    pub fn to_json(&self) -> serde_json::Value {
        let vertices: Vec<_> = self
            .vertices
            .iter()
            .map(|w| serde_json::json!({ "word": w.label(), "follower": w.follower.to_string() }))
            .collect();
        serde_json::json!({
            "exact": self.is_exact(),
            "truncation": self.truncation,
            "vertices": vertices,
            "arrows": self.arrows,
        })
    }
}

/// Breadth-first construction from the single-letter vertices, adding
/// `α → min(αA)` for every allowed extension. Words longer than `word_cap`
/// and vertices past `vertex_cap` are dropped and mark the result truncated.
pub fn build_diagram(f: &PLMap, word_cap: usize, vertex_cap: usize) -> Result<Diagram, HofbauerError> {
    let alphabet = alphabet(f)?;
    let mut index: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    let mut vertices: Vec<ConstraintWord> = Vec::new();
    let mut arrows: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut truncation = Truncation::Exact;
    let mut queue = VecDeque::new();
    for l in &alphabet {
        if vertices.len() == vertex_cap {
            truncation = Truncation::VertexCap(vertex_cap);
            break;
        }
        index.insert(vec![l.index], vertices.len());
        queue.push_back(vertices.len());
        vertices.push(ConstraintWord { letters: vec![l.index], follower: l.interval.clone() });
        arrows.push(Vec::new());
    }
    let root_letters = (0..vertices.len()).collect();
    while let Some(v) = queue.pop_front() {
        let fol = vertices[v].follower.clone();
        for letter in &alphabet {
            if extend(f, &fol, letter).is_empty() {
                continue;
            }
            let mut word = vertices[v].letters.clone();
            word.push(letter.index);
            let cw = min_word_in(f, &alphabet, &word)?;
            let target = match index.get(&cw.letters) {
                Some(&t) => t,
                None => {
                    if cw.letters.len() > word_cap {
                        truncation = Truncation::WordLengthCap(word_cap);
                        continue;
                    }
                    if vertices.len() >= vertex_cap {
                        if truncation == Truncation::Exact {
                            truncation = Truncation::VertexCap(vertex_cap);
                        }
                        continue;
                    }
                    let t = vertices.len();
                    index.insert(cw.letters.clone(), t);
                    vertices.push(cw);
                    arrows.push(Vec::new());
                    queue.push_back(t);
                    t
                }
            };
            arrows[v].push((letter.index, target));
        }
    }
    Ok(Diagram { alphabet, vertices, arrows, truncation, root_letters })
}

/// Strongly connected components that carry at least one loop, each sorted,
/// listed by smallest vertex.
pub fn scc_decomposition(d: &Diagram) -> Vec<Vec<usize>> {
    let mut g: DiGraph<(), ()> = DiGraph::with_capacity(d.len(), d.arrow_count());
    let nodes: Vec<_> = (0..d.len()).map(|_| g.add_node(())).collect();
    for (v, outs) in d.arrows.iter().enumerate() {
        for &(_, w) in outs {
            g.add_edge(nodes[v], nodes[w], ());
        }
    }
    let mut out: Vec<Vec<usize>> = petgraph::algo::tarjan_scc(&g)
        .into_iter()
        .map(|c| {
            let mut c: Vec<usize> = c.into_iter().map(|n| n.index()).collect();
            c.sort_unstable();
            c
        })
        .filter(|c| c.len() > 1 || d.successors(c[0]).any(|w| w == c[0]))
        .collect();
    out.sort();
    out
}

/// Closed paths of length `1..=n_max` through `vertex`, counted exactly.
pub fn loop_count(d: &Diagram, vertex: usize, n_max: usize) -> Result<Vec<BigUint>, HofbauerError> {
    if vertex >= d.len() {
        return Err(HofbauerError::BadVertex(vertex));
    }
    let mut paths = vec![BigUint::zero(); d.len()];
    paths[vertex] = BigUint::from(1u32);
    let mut out = Vec::with_capacity(n_max);
    for _ in 0..n_max {
        let mut next = vec![BigUint::zero(); d.len()];
        for (v, count) in paths.iter().enumerate() {
            if count.is_zero() {
                continue;
            }
            for w in d.successors(v) {
                next[w] += count;
            }
        }
        out.push(next[vertex].clone());
        paths = next;
    }
    Ok(out)
}

/// Natural log of a big integer; `-inf` for zero.
pub fn ln_big(n: &BigUint) -> f64 {
    if n.is_zero() {
        return f64::NEG_INFINITY;
    }
    let bits = n.bits();
    if bits < 1000 {
        return n.to_f64().unwrap().ln();
    }
    let shift = bits - 64;
    (n >> shift).to_f64().unwrap().ln() + shift as f64 * std::f64::consts::LN_2
}

/// `(1/n) log tr(A^n)` for the adjacency matrix restricted to `scc`.
pub fn scc_loop_growth(d: &Diagram, scc: &[usize], n: usize) -> f64 {
    let total: BigUint = scc
        .iter()
        .map(|&v| loop_count(d, v, n).map(|c| c[n - 1].clone()).unwrap_or_default())
        .sum();
    ln_big(&total) / n as f64
}

/// Log of the spectral radius of the adjacency restricted to `scc`, by power
/// iteration on `A + I` (primitive whenever `A` is irreducible).
pub fn scc_entropy(d: &Diagram, scc: &[usize], tol: f64, max_iter: usize) -> f64 {
    let pos: BTreeMap<usize, usize> = scc.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut x = vec![1.0 / scc.len() as f64; scc.len()];
    let mut rho = 0.0;
    for _ in 0..max_iter {
        let mut y = x.clone();
        for (i, &v) in scc.iter().enumerate() {
            for w in d.successors(v) {
                if let Some(&j) = pos.get(&w) {
                    y[j] += x[i];
                }
            }
        }
        let norm: f64 = y.iter().sum();
        y.iter_mut().for_each(|v| *v /= norm);
        let drift = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        x = y;
        let done = (norm - 1.0 - rho).abs() < tol && drift < tol;
        rho = norm - 1.0;
        if done {
            break;
        }
    }
    rho.max(1.0).ln()
}

/// The loop-carrying component of largest entropy, with that entropy.
pub fn top_scc(d: &Diagram) -> Option<(Vec<usize>, f64)> {
    scc_decomposition(d)
        .into_iter()
        .map(|c| {
            let h = scc_entropy(d, &c, 1e-13, 100_000);
            (c, h)
        })
        .fold(None, |best: Option<(Vec<usize>, f64)>, (c, h)| match best {
            Some((_, bh)) if bh >= h => best,
            _ => Some((c, h)),
        })
}

/// Loop ratios `l_n λ^{-n}` with the minimum over the trailing half.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecurrenceReport {
    pub ratios: Vec<f64>,
    pub trailing_min: f64,
}

impl RecurrenceReport {
    /// Bounded away from zero over the tested range, at level `floor`.
    pub fn bounded_below(&self, floor: f64) -> bool {
        self.trailing_min > floor
    }
}

pub fn positive_recurrence_ratio(
    d: &Diagram,
    vertex: usize,
    lambda: f64,
    n_max: usize,
) -> Result<RecurrenceReport, HofbauerError> {
    let counts = loop_count(d, vertex, n_max)?;
    let ll = lambda.ln();
    let ratios: Vec<f64> = counts
        .iter()
        .enumerate()
        .map(|(i, c)| (ln_big(c) - (i + 1) as f64 * ll).exp())
        .collect();
    let trailing_min = ratios[ratios.len() / 2..].iter().copied().fold(f64::INFINITY, f64::min);
    Ok(RecurrenceReport { ratios, trailing_min })
}

/// A subinterval of `fol(α)` mapped by `f^n` monotonically onto `fol(α)`
/// along a loop at `α`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LoopCertificate {
    pub path: Vec<usize>,
    pub interval: RationalInterval,
}

/// Pulls `fol(α)` back along the loop branch by branch, then re-checks the
/// forward images exactly: each stays inside its vertex's follower set, so no
/// turning point is crossed, and the last one equals `fol(α)`.
pub fn loop_certificate(f: &PLMap, d: &Diagram, path: &[usize]) -> Result<LoopCertificate, HofbauerError> {
    let n = path.len().saturating_sub(1);
    if n == 0 || path[0] != path[n] {
        return Err(HofbauerError::NotALoop);
    }
    for &v in path {
        if v >= d.len() {
            return Err(HofbauerError::BadVertex(v));
        }
    }
    for w in path.windows(2) {
        if !d.successors(w[0]).any(|t| t == w[1]) {
            return Err(HofbauerError::NotALoop);
        }
    }
    let fol = |v: usize| &d.vertices[v].follower;
    let mut j = fol(path[n]).clone();
    for k in (0..n).rev() {
        j = f.branch_preimage(fol(path[k]), &j);
    }
    let interval = j.clone();
    for (k, &v) in path.iter().enumerate().skip(1) {
        j = f.image_interval(&j);
        if !j.is_subset(fol(v)) {
            return Err(HofbauerError::Certificate(k));
        }
    }
    if !j.same_set(fol(path[0])) {
        return Err(HofbauerError::Certificate(n));
    }
    Ok(LoopCertificate { path: path.to_vec(), interval })
}

/// Every closed path of length `n` at `vertex`, up to `cap` of them.
pub fn loops_at(d: &Diagram, vertex: usize, n: usize, cap: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut path = vec![vertex];
    fn walk(d: &Diagram, target: usize, n: usize, cap: usize, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if out.len() >= cap {
            return;
        }
        if path.len() == n + 1 {
            if *path.last().unwrap() == target {
                out.push(path.clone());
            }
            return;
        }
        let v = *path.last().unwrap();
        for w in d.successors(v) {
            path.push(w);
            walk(d, target, n, cap, path, out);
            path.pop();
        }
    }
    walk(d, vertex, n, cap, &mut path, &mut out);
    out
}

/// Smallest `n₀ ≤ max_depth` such that `f^{-n₀}(x)` meets the follower set
/// of `vertex`, with a witness in it.
pub fn seed_depth(
    f: &PLMap,
    d: &Diagram,
    vertex: usize,
    x: &Rational,
    max_depth: usize,
    width_cap: usize,
) -> Option<(usize, Rational)> {
    let fol = &d.vertices.get(vertex)?.follower;
    let mut level = vec![x.clone()];
    for n0 in 0..=max_depth {
        if let Some(w) = level.iter().find(|p| fol.contains(p)) {
            return Some((n0, w.clone()));
        }
        let mut next: Vec<Rational> = level.iter().flat_map(|y| f.preimage_point(y)).collect();
        next.sort();
        next.dedup();
        if next.is_empty() || next.len() > width_cap {
            return None;
        }
        level = next;
    }
    None
}

/// Total length of the certificates of all length-`n` loops at `vertex`.
pub fn certificate_measure(f: &PLMap, d: &Diagram, vertex: usize, n: usize, cap: usize) -> Result<Rational, HofbauerError> {
    let mut total = rational::zero();
    for path in loops_at(d, vertex, n, cap) {
        total += loop_certificate(f, d, &path)?.interval.length();
    }
    Ok(total)
}
