//! Words in the S-operator group, the rewrite moves of the dynamical and
//! causal relations, and a certificate-producing proof search.

mod moves;
mod proof;
mod serial;

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::sync::{Arc, RwLock};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::functionals::{Lagrangian, LocalFunctional};
use crate::lattice::{GridField, Lattice};
use crate::spacetime::Region;

pub use moves::{apply_move, normal_form, Move, Rewriter};
pub use proof::{
    prove_equal, prove_with, replay, Certificate, ProofResult, ProofStatus, Side, PHASE_TOL,
};
pub use serial::{CertificateDoc, FieldData, FunctionalDoc, MoveDoc, WordDoc};

const PHASE_UNIT: f64 = 18_446_744_073_709_551_616.0;

/// Accumulated real angle θ of e^{iθ}, in fixed point (2⁻⁶⁴ rad) so that
/// products are exact and associative. The angle is not reduced mod 2π, which
/// keeps Planck scaling well defined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Phase(i128);

impl Phase {
    pub const ZERO: Phase = Phase(0);

    pub fn from_angle(theta: f64) -> Self {
        Phase((theta * PHASE_UNIT).round() as i128)
    }

    pub fn from_raw(raw: i128) -> Self {
        Phase(raw)
    }

    pub fn raw(self) -> i128 {
        self.0
    }

    pub fn angle(self) -> f64 {
        self.0 as f64 / PHASE_UNIT
    }

    pub fn value(self) -> Complex64 {
        let whole = (self.0 / (1i128 << 64)) as f64;
        let frac = (self.0 % (1i128 << 64)) as f64 / PHASE_UNIT;
        Complex64::from_polar(1.0, whole.rem_euclid(TAU) + frac)
    }

    pub fn add(self, other: Phase) -> Phase {
        Phase(self.0 + other.0)
    }

    pub fn neg(self) -> Phase {
        Phase(-self.0)
    }

    pub fn scaled(self, h: f64) -> Phase {
        Phase((self.0 as f64 * h).round() as i128)
    }

    /// Distance on the unit circle, in radians.
    pub fn distance(self, other: Phase) -> f64 {
        let d = (self.value() / other.value()).arg();
        d.abs()
    }
}

/// S(F)^{exp}; `exp` is ±1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Letter {
    pub id: usize,
    pub exp: i8,
}

impl Letter {
    pub fn inverse(self) -> Letter {
        Letter {
            id: self.id,
            exp: -self.exp,
        }
    }
}

#[derive(Debug)]
pub struct Generator {
    functional: LocalFunctional,
    support: Region,
    scales: Vec<f64>,
}

impl Generator {
    pub fn functional(&self) -> &LocalFunctional {
        &self.functional
    }

    pub fn support(&self) -> &Region {
        &self.support
    }
}

/// Append-only interning of canonical functionals, relative to one Lagrangian.
#[derive(Debug)]
pub struct GeneratorTable {
    lattice: Arc<Lattice>,
    lagrangian: Lagrangian,
    margin: f64,
    entries: RwLock<Vec<Arc<Generator>>>,
    /// Generators known to be δL(φ₀) up to a constant, with their φ₀.
    dynamical: RwLock<HashMap<usize, Arc<GridField>>>,
}

impl GeneratorTable {
    pub fn new(lattice: &Arc<Lattice>, lagrangian: Lagrangian) -> Self {
        Self::with_margin(lattice, lagrangian, lattice.cell_diagonal())
    }

    pub fn with_margin(lattice: &Arc<Lattice>, lagrangian: Lagrangian, margin: f64) -> Self {
        Self {
            lattice: lattice.clone(),
            lagrangian,
            margin,
            entries: RwLock::new(Vec::new()),
            dynamical: RwLock::new(HashMap::new()),
        }
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn lagrangian(&self) -> &Lagrangian {
        &self.lagrangian
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn scales(f: &LocalFunctional) -> Vec<f64> {
        f.coefficients().iter().map(|g| g.max_abs()).collect()
    }

    fn find(entries: &[Arc<Generator>], f: &LocalFunctional, scales: &[f64]) -> Option<usize> {
        entries.iter().position(|e| {
            let top = e.scales.iter().chain(scales).fold(0.0f64, |m, v| m.max(*v));
            e.scales.len() == scales.len()
                && e.scales.iter().zip(scales).all(|(a, b)| (a - b).abs() <= 1e-9 * top)
                && e.functional.canonical_eq(f)
        })
    }

    /// Id of the canonical functional `f`, appending it if new.
    pub fn intern(&self, f: &LocalFunctional) -> Result<usize> {
        if **f.lattice() != *self.lattice {
            return Err(Error::LatticeMismatch);
        }
        let scales = Self::scales(f);
        if let Some(id) = Self::find(&self.entries.read().unwrap(), f, &scales) {
            return Ok(id);
        }
        let mut entries = self.entries.write().unwrap();
        if let Some(id) = Self::find(&entries, f, &scales) {
            return Ok(id);
        }
        entries.push(Arc::new(Generator {
            support: f.support(),
            functional: f.clone(),
            scales,
        }));
        Ok(entries.len() - 1)
    }

    pub fn generator(&self, id: usize) -> Result<Arc<Generator>> {
        self.entries
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or(Error::UnknownGenerator(id))
    }

    pub fn functional(&self, id: usize) -> Result<LocalFunctional> {
        Ok(self.generator(id)?.functional.clone())
    }

    pub fn support(&self, id: usize) -> Result<Region> {
        Ok(self.generator(id)?.support.clone())
    }

    /// δL(φ₀) for this table's Lagrangian.
    pub fn relative_action(&self, phi0: &GridField) -> Result<LocalFunctional> {
        self.lagrangian.relative_action(phi0)
    }

    /// S(F): the constant part becomes the phase; S(0) = 1.
    pub fn gen(&self, f: &LocalFunctional) -> Result<AlgebraWord> {
        let phase = Phase::from_angle(f.constant_part());
        if f.is_constant() {
            return Ok(AlgebraWord::scalar(phase));
        }
        let id = self.intern(&f.without_constant())?;
        Ok(AlgebraWord {
            phase,
            letters: vec![Letter { id, exp: 1 }],
        })
    }

    /// S(δL(φ₀)), remembering φ₀ for the dynamical moves.
    pub fn gen_dynamical(&self, phi0: &GridField) -> Result<AlgebraWord> {
        let w = self.gen(&self.relative_action(phi0)?)?;
        if let Some(l) = w.letters.first() {
            self.register_dynamical(l.id, phi0);
        }
        Ok(w)
    }

    pub fn register_dynamical(&self, id: usize, phi0: &GridField) {
        self.dynamical
            .write()
            .unwrap()
            .entry(id)
            .or_insert_with(|| Arc::new(phi0.clone()));
    }

    /// φ₀ with S(id) = e^{ic} S(δL(φ₀)), if registered.
    pub fn dynamical_shift(&self, id: usize) -> Option<Arc<GridField>> {
        self.dynamical.read().unwrap().get(&id).cloned()
    }

    /// Letters whose functional is δL(φ₀) up to a constant, in id order.
    pub fn dynamical_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.dynamical.read().unwrap().keys().copied().collect();
        ids.sort_unstable();
        ids
    }
}

/// e^{iθ} · S(F₁)^{±1} ⋯ S(F_k)^{±1}.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AlgebraWord {
    pub phase: Phase,
    pub letters: Vec<Letter>,
}

impl AlgebraWord {
    pub fn identity() -> Self {
        Self::scalar(Phase::ZERO)
    }

    pub fn scalar(phase: Phase) -> Self {
        Self {
            phase,
            letters: Vec::new(),
        }
    }

    pub fn letter(id: usize, exp: i8) -> Self {
        Self {
            phase: Phase::ZERO,
            letters: vec![Letter { id, exp }],
        }
    }

    pub fn is_scalar(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.letters.is_empty() && self.phase == Phase::ZERO
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    /// Free reduction of adjacent inverse pairs.
    pub fn reduced(mut self) -> Self {
        let mut out: Vec<Letter> = Vec::with_capacity(self.letters.len());
        for l in self.letters {
            if out.last().is_some_and(|p| p.id == l.id && p.exp == -l.exp) {
                out.pop();
            } else {
                out.push(l);
            }
        }
        self.letters = out;
        self
    }

    pub fn multiply(&self, other: &AlgebraWord) -> AlgebraWord {
        let mut letters = self.letters.clone();
        letters.extend_from_slice(&other.letters);
        AlgebraWord {
            phase: self.phase.add(other.phase),
            letters,
        }
        .reduced()
    }

    pub fn inverse(&self) -> AlgebraWord {
        AlgebraWord {
            phase: self.phase.neg(),
            letters: self.letters.iter().rev().map(|l| l.inverse()).collect(),
        }
    }

    pub fn with_phase(&self, phase: Phase) -> AlgebraWord {
        AlgebraWord {
            phase,
            letters: self.letters.clone(),
        }
    }

    pub fn times_phase(&self, theta: f64) -> AlgebraWord {
        self.with_phase(self.phase.add(Phase::from_angle(theta)))
    }

    /// Same letters and phases within `tol` radians.
    pub fn agrees_with(&self, other: &AlgebraWord, tol: f64) -> bool {
        self.letters == other.letters && self.phase.distance(other.phase) <= tol
    }
}

/// Product of a list of words.
pub fn product<'a>(words: impl IntoIterator<Item = &'a AlgebraWord>) -> AlgebraWord {
    words
        .into_iter()
        .fold(AlgebraWord::identity(), |acc, w| acc.multiply(w))
}

/// Σ cᵢ wᵢ with distinct letter sequences; word phases are folded into the coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraElement {
    terms: Vec<(Complex64, Vec<Letter>)>,
}

impl AlgebraElement {
    pub fn zero() -> Self {
        Self { terms: Vec::new() }
    }

    pub fn from_word(c: Complex64, w: &AlgebraWord) -> Self {
        let mut e = Self::zero();
        e.push(c, w);
        e
    }

    pub fn from_terms<'a>(terms: impl IntoIterator<Item = (Complex64, &'a AlgebraWord)>) -> Self {
        let mut e = Self::zero();
        for (c, w) in terms {
            e.push(c, w);
        }
        e
    }

    pub fn push(&mut self, c: Complex64, w: &AlgebraWord) {
        let c = c * w.phase.value();
        match self.terms.iter_mut().find(|(_, l)| *l == w.letters) {
            Some(t) => t.0 += c,
            None => self.terms.push((c, w.letters.clone())),
        }
        self.terms.retain(|(c, _)| *c != Complex64::new(0.0, 0.0));
    }

    pub fn terms(&self) -> impl Iterator<Item = (Complex64, AlgebraWord)> + '_ {
        self.terms.iter().map(|(c, l)| {
            (
                *c,
                AlgebraWord {
                    phase: Phase::ZERO,
                    letters: l.clone(),
                },
            )
        })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// (Σ c S)* = Σ c̄ S⁻¹.
    pub fn adjoint(&self) -> Self {
        let mut e = Self::zero();
        for (c, w) in self.terms() {
            e.push(c.conj(), &w.inverse());
        }
        e
    }

    pub fn multiply(&self, other: &Self) -> Self {
        let mut e = Self::zero();
        for (a, u) in self.terms() {
            for (b, v) in other.terms() {
                e.push(a * b, &u.multiply(&v));
            }
        }
        e
    }
}

/// ω evaluated with the budgeted proof search.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceValue {
    pub value: Complex64,
    /// Some word could neither be reduced to the identity nor ruled out.
    pub lower_confidence: bool,
}

/// ω(Σ cᵢ wᵢ) = Σ over words proved equal to a scalar.
pub fn trace_state(table: &GeneratorTable, a: &AlgebraElement, budget: usize) -> TraceValue {
    let mut value = Complex64::new(0.0, 0.0);
    let mut lower_confidence = false;
    for (c, w) in a.terms() {
        if w.is_scalar() {
            value += c * w.phase.value();
            continue;
        }
        let result = prove_with(table, &w, &AlgebraWord::identity(), budget, true);
        match result.status {
            ProofStatus::Proved => value += c * result.scalar_phase.value(),
            ProofStatus::Unproven => lower_confidence = true,
        }
    }
    TraceValue {
        value,
        lower_confidence,
    }
}

/// Every letter's support lies in `o`.
pub fn local_membership(table: &GeneratorTable, w: &AlgebraWord, o: &Region) -> Result<bool> {
    for l in &w.letters {
        if !o.contains_region(table.generator(l.id)?.support()) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// S(F) ↦ S(hF) into `target`, whose Lagrangian is h·L.
pub fn scale_planck(
    table: &GeneratorTable,
    w: &AlgebraWord,
    h: f64,
    target: &GeneratorTable,
) -> Result<AlgebraWord> {
    if !(h > 0.0) {
        return Err(Error::NonPositivePlanck(h));
    }
    let mut out = AlgebraWord::scalar(w.phase.scaled(h));
    for l in &w.letters {
        let f = table.functional(l.id)?.scale(h);
        let g = target.gen(&f)?;
        if let Some(phi0) = table.dynamical_shift(l.id) {
            if let Some(gl) = g.letters.first() {
                target.register_dynamical(gl.id, &phi0);
            }
        }
        out = out.multiply(&if l.exp > 0 { g } else { g.inverse() });
    }
    Ok(out)
}

/// Planck-scaled copy of a table's Lagrangian: h·L.
pub fn scaled_table(table: &GeneratorTable, h: f64) -> Result<GeneratorTable> {
    if !(h > 0.0) {
        return Err(Error::NonPositivePlanck(h));
    }
    Ok(GeneratorTable::with_margin(
        table.lattice(),
        table.lagrangian().scaled(h),
        table.margin(),
    ))
}
