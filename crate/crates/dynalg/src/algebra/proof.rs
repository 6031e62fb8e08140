use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::functionals::LocalFunctional;
use crate::lattice::GridField;

use super::moves::{apply_move, normal_form, Move};
use super::{AlgebraWord, GeneratorTable, Letter, Phase};

/// Two words join when their letters coincide and phases differ by at most this (radians).
pub const PHASE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

/// Moves taking the left word and the right word to a common word.
#[derive(Debug, Clone, Default)]
pub struct Certificate {
    pub left: Vec<Move>,
    pub right: Vec<Move>,
}

impl Certificate {
    pub fn len(&self) -> usize {
        self.left.len() + self.right.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProofStatus {
    Proved,
    /// Not found within the budget; this is not a disproof.
    Unproven,
}

#[derive(Debug, Clone)]
pub struct ProofResult {
    pub status: ProofStatus,
    pub certificate: Certificate,
    pub steps: usize,
    pub budget: usize,
    pub lhs: AlgebraWord,
    pub rhs: AlgebraWord,
    /// Phase of the common word reached from the left, for scalar goals.
    pub scalar_phase: Phase,
}

impl ProofResult {
    pub fn proved(&self) -> bool {
        self.status == ProofStatus::Proved
    }

    /// A proof assembled from explicit move lists.
    pub fn from_certificate(
        table: &GeneratorTable,
        lhs: &AlgebraWord,
        rhs: &AlgebraWord,
        certificate: Certificate,
    ) -> Result<Self> {
        let joined = replay(table, lhs, rhs, &certificate)?;
        Ok(Self {
            status: ProofStatus::Proved,
            steps: certificate.len(),
            budget: certificate.len(),
            certificate,
            lhs: lhs.clone(),
            rhs: rhs.clone(),
            scalar_phase: joined.phase,
        })
    }
}

fn run(table: &GeneratorTable, start: &AlgebraWord, moves: &[Move], side: Side) -> Result<AlgebraWord> {
    let mut w = start.clone();
    for (step, mv) in moves.iter().enumerate() {
        w = apply_move(table, &w, mv).map_err(|e| Error::Replay {
            side: side.name(),
            step,
            reason: e.to_string(),
        })?;
    }
    Ok(w)
}

/// Re-executes a certificate and returns the common word.
pub fn replay(
    table: &GeneratorTable,
    lhs: &AlgebraWord,
    rhs: &AlgebraWord,
    cert: &Certificate,
) -> Result<AlgebraWord> {
    let a = run(table, lhs, &cert.left, Side::Left)?;
    let b = run(table, rhs, &cert.right, Side::Right)?;
    if a.letters != b.letters {
        return Err(Error::Replay {
            side: "both",
            step: cert.len(),
            reason: "the two sides end on different letters".into(),
        });
    }
    let gap = a.phase.distance(b.phase);
    if gap > PHASE_TOL {
        return Err(Error::Replay {
            side: "both",
            step: cert.len(),
            reason: format!("phases differ by {gap:.3e} rad"),
        });
    }
    Ok(a)
}

struct Node {
    word: AlgebraWord,
    parent: Option<usize>,
    edge: Vec<Move>,
}

struct Frontier {
    nodes: Vec<Node>,
    seen: HashMap<Vec<Letter>, usize>,
    heap: BinaryHeap<Reverse<(usize, usize)>>,
}

impl Frontier {
    fn new(root: AlgebraWord, prefix: Vec<Move>) -> Self {
        let mut f = Self {
            nodes: Vec::new(),
            seen: HashMap::new(),
            heap: BinaryHeap::new(),
        };
        f.insert(root, None, prefix);
        f
    }

    fn insert(&mut self, word: AlgebraWord, parent: Option<usize>, edge: Vec<Move>) -> Option<usize> {
        if self.seen.contains_key(&word.letters) {
            return None;
        }
        let idx = self.nodes.len();
        self.seen.insert(word.letters.clone(), idx);
        self.heap.push(Reverse((word.letters.len(), idx)));
        self.nodes.push(Node { word, parent, edge });
        Some(idx)
    }

    fn path(&self, mut idx: usize) -> Vec<Move> {
        let mut chunks = Vec::new();
        loop {
            let n = &self.nodes[idx];
            chunks.push(n.edge.clone());
            match n.parent {
                Some(p) => idx = p,
                None => break,
            }
        }
        chunks.into_iter().rev().flatten().collect()
    }
}

/// Later part of `f` above a zero band, cut at time row `row`.
fn mask_rows(f: &LocalFunctional, row: usize) -> Result<LocalFunctional> {
    let s = f.lattice().slice_len();
    let coeffs = f
        .coefficients()
        .iter()
        .map(|g| {
            let mut d = g.data().to_vec();
            d[..row * s].iter_mut().for_each(|v| *v = 0.0);
            GridField::from_samples(f.lattice(), d)
        })
        .collect::<Result<Vec<_>>>()?;
    LocalFunctional::new(f.lattice(), 0.0, coeffs)
}

/// Time rows where a zero band ends and support resumes.
fn band_cuts(f: &LocalFunctional) -> Vec<usize> {
    let l = f.lattice();
    let s = l.slice_len();
    let occupied: Vec<bool> = (0..l.counts()[0])
        .map(|r| {
            f.coefficients()
                .iter()
                .any(|g| g.data()[r * s..(r + 1) * s].iter().any(|v| *v != 0.0))
        })
        .collect();
    let first = occupied.iter().position(|o| *o);
    let mut cuts = Vec::new();
    if let Some(first) = first {
        for r in first + 1..occupied.len() {
            if occupied[r] && !occupied[r - 1] {
                cuts.push(r);
            }
        }
    }
    cuts
}

struct Search<'a> {
    table: &'a GeneratorTable,
    split_cache: HashMap<usize, Vec<Arc<LocalFunctional>>>,
}

impl Search<'_> {
    fn splits(&mut self, id: usize) -> Result<Vec<Arc<LocalFunctional>>> {
        if let Some(v) = self.split_cache.get(&id) {
            return Ok(v.clone());
        }
        let f = self.table.functional(id)?;
        let v = band_cuts(&f)
            .into_iter()
            .map(|r| mask_rows(&f, r).map(Arc::new))
            .collect::<Result<Vec<_>>>()?;
        self.split_cache.insert(id, v.clone());
        Ok(v)
    }

    /// Candidate moves in fixed order: merges, swaps, then splits.
    fn candidates(&mut self, w: &AlgebraWord) -> Result<Vec<Move>> {
        let ls = &w.letters;
        let n = ls.len();
        let mut out = Vec::new();
        for pos in 0..n.saturating_sub(1) {
            if ls[pos].exp == ls[pos + 1].exp {
                out.push(Move::CausalMerge { pos, arity: 2 });
            }
        }
        for pos in 0..n.saturating_sub(2) {
            let e = (ls[pos].exp, ls[pos + 1].exp, ls[pos + 2].exp);
            if e == (1, -1, 1) || e == (-1, 1, -1) {
                out.push(Move::CausalMerge { pos, arity: 3 });
            }
        }
        for pos in 0..n.saturating_sub(1) {
            if ls[pos].exp != ls[pos + 1].exp {
                continue;
            }
            let d = if ls[pos].exp > 0 { ls[pos + 1] } else { ls[pos] };
            if let Some(phi0) = self.table.dynamical_shift(d.id) {
                out.push(Move::DynMerge { pos, phi0 });
            }
        }
        for pos in 0..n.saturating_sub(1) {
            out.push(Move::SpacelikeSwap { pos });
            for l in [ls[pos], ls[pos + 1]] {
                if let Some(phi0) = self.table.dynamical_shift(l.id) {
                    out.push(Move::DynCommute { pos, phi0 });
                    break;
                }
            }
        }
        for (pos, l) in ls.iter().enumerate() {
            for f1 in self.splits(l.id)? {
                out.push(Move::CausalSplit { pos, f1, f3: None });
            }
        }
        Ok(out)
    }
}

enum Goal<'a> {
    Word(&'a AlgebraWord),
    Scalar,
}

fn search(table: &GeneratorTable, lhs: &AlgebraWord, goal: Goal, budget: usize) -> ProofResult {
    let rhs = match goal {
        Goal::Word(w) => w.clone(),
        Goal::Scalar => AlgebraWord::identity(),
    };
    let mut result = ProofResult {
        status: ProofStatus::Unproven,
        certificate: Certificate::default(),
        steps: 0,
        budget,
        lhs: lhs.clone(),
        rhs: rhs.clone(),
        scalar_phase: Phase::ZERO,
    };
    let (Ok((l0, lm)), Ok((r0, rm))) = (normal_form(table, lhs), normal_form(table, &rhs)) else {
        return result;
    };
    let scalar = matches!(goal, Goal::Scalar);
    let mut sides = [Frontier::new(l0, lm), Frontier::new(r0, rm)];
    let mut s = Search {
        table,
        split_cache: HashMap::new(),
    };
    let joined = |sides: &[Frontier; 2], from: usize, idx: usize| -> Option<(usize, usize)> {
        let w = &sides[from].nodes[idx].word;
        if scalar {
            return (from == 0 && w.letters.is_empty()).then_some((idx, 0));
        }
        let other = *sides[1 - from].seen.get(&w.letters)?;
        let o = &sides[1 - from].nodes[other].word;
        (w.phase.distance(o.phase) <= PHASE_TOL).then(|| if from == 0 { (idx, other) } else { (other, idx) })
    };
    let mut hit = joined(&sides, 0, 0);
    let mut turn = 0usize;
    while hit.is_none() && result.steps < budget {
        let side = if scalar { 0 } else { turn % 2 };
        turn += 1;
        let Some(Reverse((_, idx))) = sides[side].heap.pop() else {
            if scalar || (sides[0].heap.is_empty() && sides[1].heap.is_empty()) {
                break;
            }
            continue;
        };
        result.steps += 1;
        let word = sides[side].nodes[idx].word.clone();
        let Ok(cands) = s.candidates(&word) else { continue };
        for mv in cands {
            let Ok(next) = apply_move(table, &word, &mv) else { continue };
            let Ok((next, norm)) = normal_form(table, &next) else { continue };
            let mut edge = vec![mv];
            edge.extend(norm);
            if let Some(new) = sides[side].insert(next, Some(idx), edge) {
                if let Some(h) = joined(&sides, side, new) {
                    hit = Some(h);
                    break;
                }
            }
        }
    }
    if let Some((li, ri)) = hit {
        result.status = ProofStatus::Proved;
        result.certificate = Certificate {
            left: sides[0].path(li),
            right: if scalar { Vec::new() } else { sides[1].path(ri) },
        };
        result.scalar_phase = sides[0].nodes[li].word.phase;
        if scalar {
            result.rhs = AlgebraWord::scalar(result.scalar_phase);
        }
    }
    result
}

/// Bounded bidirectional best-first search for a certificate of w1 = w2.
pub fn prove_equal(table: &GeneratorTable, w1: &AlgebraWord, w2: &AlgebraWord, budget: usize) -> ProofResult {
    search(table, w1, Goal::Word(w2), budget)
}

/// With `any_scalar`, the goal is any e^{iθ}·1 and `w2` is ignored.
pub fn prove_with(
    table: &GeneratorTable,
    w1: &AlgebraWord,
    w2: &AlgebraWord,
    budget: usize,
    any_scalar: bool,
) -> ProofResult {
    if any_scalar {
        search(table, w1, Goal::Scalar, budget)
    } else {
        prove_equal(table, w1, w2, budget)
    }
}
