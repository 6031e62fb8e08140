use std::sync::Arc;

use crate::error::{Error, Result};
use crate::functionals::LocalFunctional;
use crate::lattice::GridField;
use crate::spacetime::{causal_gap, later_than, spacelike};

use super::{AlgebraWord, GeneratorTable, Letter, Phase};

/// One rewrite step. Positions index the letter sequence.
#[derive(Debug, Clone)]
pub enum Move {
    /// S(F)^{±1} S(F)^{∓1} → 1.
    FreeCancel { pos: usize },
    /// S(F + c)^{±1} → e^{±ic} S(F)^{±1}.
    ConstToPhase { pos: usize },
    /// S(F) S(δL(φ₀)) → S(F^{φ₀} + δL(φ₀)), or the inverse of that pattern.
    DynMerge { pos: usize, phi0: Arc<GridField> },
    /// S(G) → S((G − δL(φ₀))^{−φ₀}) S(δL(φ₀)), or its inverse.
    DynSplit { pos: usize, phi0: Arc<GridField> },
    /// Exchanges a δL(φ₀) letter with its neighbour.
    DynCommute { pos: usize, phi0: Arc<GridField> },
    /// S(F₁+F₃) S(F₃)⁻¹ S(F₂+F₃) → S(F₁+F₂+F₃) for F₁ later than F₂ (arity 3),
    /// or S(F₁) S(F₂) → S(F₁+F₂) (arity 2), or the inverse patterns.
    CausalMerge { pos: usize, arity: usize },
    /// S(G) → S(F₁+F₃) S(F₃)⁻¹ S(F₂+F₃) with F₂ = G − F₁ − F₃; F₃ absent means zero.
    CausalSplit {
        pos: usize,
        f1: Arc<LocalFunctional>,
        f3: Option<Arc<LocalFunctional>>,
    },
    /// Exchanges neighbours with spacelike supports.
    SpacelikeSwap { pos: usize },
}

impl Move {
    pub fn tag(&self) -> &'static str {
        match self {
            Move::FreeCancel { .. } => "FreeCancel",
            Move::ConstToPhase { .. } => "ConstToPhase",
            Move::DynMerge { .. } => "DynMerge",
            Move::DynSplit { .. } => "DynSplit",
            Move::DynCommute { .. } => "DynCommute",
            Move::CausalMerge { .. } => "CausalMerge",
            Move::CausalSplit { .. } => "CausalSplit",
            Move::SpacelikeSwap { .. } => "SpacelikeSwap",
        }
    }

    pub fn position(&self) -> usize {
        match self {
            Move::FreeCancel { pos }
            | Move::ConstToPhase { pos }
            | Move::DynMerge { pos, .. }
            | Move::DynSplit { pos, .. }
            | Move::DynCommute { pos, .. }
            | Move::CausalMerge { pos, .. }
            | Move::CausalSplit { pos, .. }
            | Move::SpacelikeSwap { pos } => *pos,
        }
    }

    /// Same move applied at another position.
    pub fn at(&self, pos: usize) -> Move {
        let mut m = self.clone();
        match &mut m {
            Move::FreeCancel { pos: p }
            | Move::ConstToPhase { pos: p }
            | Move::DynMerge { pos: p, .. }
            | Move::DynSplit { pos: p, .. }
            | Move::DynCommute { pos: p, .. }
            | Move::CausalMerge { pos: p, .. }
            | Move::CausalSplit { pos: p, .. }
            | Move::SpacelikeSwap { pos: p } => *p = pos,
        }
        m
    }
}

struct Ctx<'a> {
    table: &'a GeneratorTable,
    tag: &'static str,
    pos: usize,
}

impl Ctx<'_> {
    fn fail(&self, reason: impl Into<String>) -> Error {
        Error::Move {
            tag: self.tag,
            position: self.pos,
            reason: reason.into(),
        }
    }

    fn letters<'w>(&self, w: &'w AlgebraWord, n: usize) -> Result<&'w [Letter]> {
        w.letters
            .get(self.pos..self.pos + n)
            .ok_or_else(|| self.fail(format!("window of {n} letters out of range")))
    }

    fn functional(&self, l: Letter) -> Result<LocalFunctional> {
        self.table.functional(l.id)
    }

    fn exps(&self, ls: &[Letter], want: &[&[i8]]) -> Result<i8> {
        let got: Vec<i8> = ls.iter().map(|l| l.exp).collect();
        for w in want {
            if got == *w {
                return Ok(got[0]);
            }
        }
        Err(self.fail(format!("exponent pattern {got:?} does not fit")))
    }

    fn letter(&self, f: &LocalFunctional, exp: i8) -> Result<Letter> {
        Ok(Letter {
            id: self.table.intern(f)?,
            exp,
        })
    }

    /// The constant by which letter `l` differs from δL(φ₀), or an error if it is not δL(φ₀).
    fn dynamical_offset(&self, l: Letter, phi0: &GridField) -> Result<(LocalFunctional, f64)> {
        let delta = self.table.relative_action(phi0)?;
        let f = self.functional(l)?;
        if !f.without_constant().canonical_eq(&delta.without_constant()) {
            return Err(self.fail("dynamical premise: letter is not the relative action of phi0"));
        }
        let offset = f.constant_part() - delta.constant_part();
        self.table.register_dynamical(l.id, phi0);
        Ok((delta, offset))
    }

    fn later(&self, f1: &LocalFunctional, f2: &LocalFunctional) -> Result<()> {
        let (k1, k2) = (f1.support(), f2.support());
        if later_than(&k1, &k2, self.table.margin()) {
            return Ok(());
        }
        let gap = causal_gap(&k1, &k2).unwrap_or(f64::NEG_INFINITY);
        Err(self.fail(format!(
            "causal premise: support of F1 is not later than support of F2 (gap {gap:.6} >= -{:.6})",
            self.table.margin()
        )))
    }
}

fn splice(w: &AlgebraWord, pos: usize, len: usize, with: &[Letter], phase: f64) -> AlgebraWord {
    let mut letters = Vec::with_capacity(w.letters.len() + with.len());
    letters.extend_from_slice(&w.letters[..pos]);
    letters.extend_from_slice(with);
    letters.extend_from_slice(&w.letters[pos + len..]);
    AlgebraWord {
        phase: w.phase.add(Phase::from_angle(phase)),
        letters,
    }
}

/// Applies one move, checking its side condition.
pub fn apply_move(table: &GeneratorTable, w: &AlgebraWord, mv: &Move) -> Result<AlgebraWord> {
    let cx = Ctx {
        table,
        tag: mv.tag(),
        pos: mv.position(),
    };
    let pos = cx.pos;
    match mv {
        Move::FreeCancel { .. } => {
            let ls = cx.letters(w, 2)?;
            if ls[0].id != ls[1].id || ls[0].exp != -ls[1].exp {
                return Err(cx.fail("letters are not mutually inverse"));
            }
            Ok(splice(w, pos, 2, &[], 0.0))
        }
        Move::ConstToPhase { .. } => {
            let l = cx.letters(w, 1)?[0];
            let f = cx.functional(l)?;
            let c = f.constant_part();
            if c == 0.0 && !f.is_constant() {
                return Err(cx.fail("letter has no constant part"));
            }
            let theta = f64::from(l.exp) * c;
            if f.is_constant() {
                return Ok(splice(w, pos, 1, &[], theta));
            }
            let nl = cx.letter(&f.without_constant(), l.exp)?;
            if let Some(phi0) = table.dynamical_shift(l.id) {
                table.register_dynamical(nl.id, &phi0);
            }
            Ok(splice(w, pos, 1, &[nl], theta))
        }
        Move::DynMerge { phi0, .. } => {
            let ls = cx.letters(w, 2)?;
            let e = cx.exps(ls, &[&[1, 1], &[-1, -1]])?;
            let (f, d) = if e > 0 { (ls[0], ls[1]) } else { (ls[1], ls[0]) };
            let (delta, offset) = cx.dynamical_offset(d, phi0)?;
            let merged = cx.functional(f)?.shift(phi0)?.add(&delta)?;
            let nl = cx.letter(&merged, e)?;
            Ok(splice(w, pos, 2, &[nl], f64::from(e) * offset))
        }
        Move::DynSplit { phi0, .. } => {
            let l = cx.letters(w, 1)?[0];
            let delta = table.relative_action(phi0)?;
            let f = cx.functional(l)?.sub(&delta)?.shift(&phi0.scale(-1.0))?;
            let fl = cx.letter(&f, l.exp)?;
            let dl = cx.letter(&delta, l.exp)?;
            table.register_dynamical(dl.id, phi0);
            let with = if l.exp > 0 { [fl, dl] } else { [dl, fl] };
            Ok(splice(w, pos, 1, &with, 0.0))
        }
        Move::DynCommute { phi0, .. } => {
            let ls = cx.letters(w, 2)?;
            if cx.dynamical_offset(ls[0], phi0).is_err() {
                cx.dynamical_offset(ls[1], phi0)?;
            }
            Ok(splice(w, pos, 2, &[ls[1], ls[0]], 0.0))
        }
        Move::CausalMerge { arity, .. } => match arity {
            2 => {
                let ls = cx.letters(w, 2)?;
                let e = cx.exps(ls, &[&[1, 1], &[-1, -1]])?;
                let (a, c) = if e > 0 { (ls[0], ls[1]) } else { (ls[1], ls[0]) };
                let (fa, fc) = (cx.functional(a)?, cx.functional(c)?);
                cx.later(&fa, &fc)?;
                let nl = cx.letter(&fa.add(&fc)?, e)?;
                Ok(splice(w, pos, 2, &[nl], 0.0))
            }
            3 => {
                let ls = cx.letters(w, 3)?;
                let e = cx.exps(ls, &[&[1, -1, 1], &[-1, 1, -1]])?;
                let (a, b, c) = if e > 0 {
                    (ls[0], ls[1], ls[2])
                } else {
                    (ls[2], ls[1], ls[0])
                };
                let (fa, fb, fc) = (cx.functional(a)?, cx.functional(b)?, cx.functional(c)?);
                let f1 = fa.sub(&fb)?;
                let f2 = fc.sub(&fb)?;
                cx.later(&f1, &f2)?;
                let merged = LocalFunctional::linear_combination(&[(1.0, &fa), (-1.0, &fb), (1.0, &fc)])?;
                let nl = cx.letter(&merged, e)?;
                Ok(splice(w, pos, 3, &[nl], 0.0))
            }
            n => Err(cx.fail(format!("arity {n} is not 2 or 3"))),
        },
        Move::CausalSplit { f1, f3, .. } => {
            let l = cx.letters(w, 1)?[0];
            let g = cx.functional(l)?;
            let zero = LocalFunctional::zero(table.lattice());
            let f3 = f3.as_deref().unwrap_or(&zero);
            let f2 = LocalFunctional::linear_combination(&[(1.0, &g), (-1.0, f1), (-1.0, f3)])?;
            cx.later(f1, &f2)?;
            let with: Vec<Letter> = if f3.is_zero() {
                let a = cx.letter(f1, l.exp)?;
                let c = cx.letter(&f2, l.exp)?;
                if l.exp > 0 {
                    vec![a, c]
                } else {
                    vec![c, a]
                }
            } else {
                let a = cx.letter(&f1.add(f3)?, l.exp)?;
                let b = cx.letter(f3, -l.exp)?;
                let c = cx.letter(&f2.add(f3)?, l.exp)?;
                if l.exp > 0 {
                    vec![a, b, c]
                } else {
                    vec![c, b, a]
                }
            };
            Ok(splice(w, pos, 1, &with, 0.0))
        }
        Move::SpacelikeSwap { .. } => {
            let ls = cx.letters(w, 2)?;
            let (k1, k2) = (table.support(ls[0].id)?, table.support(ls[1].id)?);
            if !spacelike(&k1, &k2, table.margin()) {
                return Err(cx.fail("causal premise: supports are not spacelike separated"));
            }
            Ok(splice(w, pos, 2, &[ls[1], ls[0]], 0.0))
        }
    }
}

/// The next normalizing move: constants to phases first, then free cancellation.
fn next_normalizing(table: &GeneratorTable, w: &AlgebraWord) -> Result<Option<Move>> {
    for (pos, l) in w.letters.iter().enumerate() {
        let g = table.generator(l.id)?;
        if g.functional().constant_part() != 0.0 || g.functional().is_constant() {
            return Ok(Some(Move::ConstToPhase { pos }));
        }
    }
    for pos in 0..w.letters.len().saturating_sub(1) {
        let (a, b) = (w.letters[pos], w.letters[pos + 1]);
        if a.id == b.id && a.exp == -b.exp {
            return Ok(Some(Move::FreeCancel { pos }));
        }
    }
    Ok(None)
}

/// Constant-free, freely reduced form of `w` with the moves that produce it.
pub fn normal_form(table: &GeneratorTable, w: &AlgebraWord) -> Result<(AlgebraWord, Vec<Move>)> {
    let mut r = Rewriter::new(table, w.clone());
    r.normalize()?;
    Ok(r.into_parts())
}

/// A word together with the moves applied to it so far.
#[derive(Debug, Clone)]
pub struct Rewriter<'a> {
    table: &'a GeneratorTable,
    word: AlgebraWord,
    moves: Vec<Move>,
}

impl<'a> Rewriter<'a> {
    pub fn new(table: &'a GeneratorTable, word: AlgebraWord) -> Self {
        Self {
            table,
            word,
            moves: Vec::new(),
        }
    }

    pub fn table(&self) -> &'a GeneratorTable {
        self.table
    }

    pub fn word(&self) -> &AlgebraWord {
        &self.word
    }

    pub fn moves(&self) -> &[Move] {
        &self.moves
    }

    pub fn into_parts(self) -> (AlgebraWord, Vec<Move>) {
        (self.word, self.moves)
    }

    pub fn apply(&mut self, mv: Move) -> Result<&mut Self> {
        self.word = apply_move(self.table, &self.word, &mv)?;
        self.moves.push(mv);
        Ok(self)
    }

    pub fn normalize(&mut self) -> Result<&mut Self> {
        while let Some(mv) = next_normalizing(self.table, &self.word)? {
            self.apply(mv)?;
        }
        Ok(self)
    }

    /// Position of the first letter with this id.
    pub fn find(&self, id: usize) -> Option<usize> {
        self.word.letters.iter().position(|l| l.id == id)
    }

    /// Position of the first letter whose functional is canonically `f`.
    pub fn find_functional(&self, f: &LocalFunctional) -> Result<Option<usize>> {
        let id = self.table.intern(f)?;
        Ok(self.find(id))
    }

    /// Moves the letter at `from` to `to` by repeated swaps, each justified by
    /// `justify(pos)` for the pair (pos, pos+1).
    pub fn transport(
        &mut self,
        from: usize,
        to: usize,
        justify: impl Fn(usize) -> Move,
    ) -> Result<&mut Self> {
        let mut at = from;
        while at < to {
            self.apply(justify(at).at(at))?;
            at += 1;
        }
        while at > to {
            self.apply(justify(at - 1).at(at - 1))?;
            at -= 1;
        }
        Ok(self)
    }
}
