//! Weyl generators of the free field, causal splitting of test functions,
//! mechanized Weyl and exchange relations, and a truncated Fock-space oracle.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::algebra::{
    AlgebraWord, Certificate, GeneratorTable, Move, ProofResult, Rewriter,
};
use crate::error::{Error, Result};
use crate::functionals::{combine, LocalFunctional};
use crate::lattice::{smooth_step, GridField, Lattice};
use crate::one_particle::ModeTable;
use crate::propagator::{advanced, kg_apply, pair_prop, retarded, PropKind};
use crate::spacetime::{later_than, Cuboid, Region};

/// Symbolic phases must match pair_prop to this tolerance.
pub const SYMBOLIC_TOL: f64 = 1e-6;
/// Largest admissible fraction of ‖f‖₁ outside the kept modes.
pub const LEAKAGE_LIMIT: f64 = 1e-3;
/// Dropped amplitude below which truncation is harmless whatever ‖f‖₁ is.
pub const LEAKAGE_FLOOR: f64 = 1e-9;

/// A test function together with the constant ½⟨f, Δ_D f⟩ of its Weyl functional.
#[derive(Debug, Clone)]
pub struct WeylLabel {
    f: GridField,
    constant: f64,
}

impl WeylLabel {
    pub fn new(f: &GridField, m: f64) -> Result<Self> {
        let constant = if f.is_zero() {
            0.0
        } else {
            0.5 * pair_prop(f, f, m, PropKind::D)?
        };
        Ok(Self {
            f: f.clone(),
            constant,
        })
    }

    pub fn field(&self) -> &GridField {
        &self.f
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    /// F_f = φ(f) + ½⟨f, Δ_D f⟩.
    pub fn functional(&self) -> LocalFunctional {
        LocalFunctional::linear(&self.f, self.constant)
    }
}

pub fn weyl_functional(f: &GridField, m: f64) -> Result<LocalFunctional> {
    Ok(WeylLabel::new(f, m)?.functional())
}

/// W(f) = S(F_f) in the table's algebra.
pub fn weyl(table: &GeneratorTable, f: &GridField) -> Result<AlgebraWord> {
    table.gen(&weyl_functional(f, table.lagrangian().mass)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitDirection {
    /// f₀ lies in the future of the region; φ₀ built from Δ_R f.
    Future,
    /// f₀ lies in the past of the region; φ₀ built from Δ_A f.
    Past,
}

/// Placement of the χ ramp: rows between the region edge (plus margin) and
/// the ramp start, and the ramp width, both in time cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slab {
    pub offset_cells: usize,
    pub width_cells: usize,
}

impl Default for Slab {
    fn default() -> Self {
        Self {
            offset_cells: 2,
            width_cells: 5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CausalSplit {
    pub f0: GridField,
    pub phi0: GridField,
    /// Time profile of χ per row; absent when no split was needed.
    pub chi: Option<Vec<f64>>,
}

impl CausalSplit {
    pub fn is_trivial(&self) -> bool {
        self.phi0.is_zero()
    }

    /// ‖f − f₀ − Kφ₀‖ / ‖f‖.
    pub fn residual(&self, f: &GridField, m: f64) -> Result<f64> {
        let k = if self.phi0.is_zero() {
            GridField::zeros(f.lattice())
        } else {
            kg_apply(&self.phi0, m)?
        };
        let r = f.sub(&self.f0)?.sub(&k)?;
        let n = f.norm_l2();
        Ok(if n == 0.0 { r.norm_l2() } else { r.norm_l2() / n })
    }
}

/// f = f₀ + Kφ₀ with f₀ later than `g_support`, using the default slab.
pub fn split_causal(f: &GridField, g_support: &Region, m: f64) -> Result<(GridField, GridField)> {
    let margin = f.lattice().cell_diagonal();
    let s = split_causal_with(f, g_support, m, margin, SplitDirection::Future, Slab::default())?;
    Ok((s.f0, s.phi0))
}

fn time_row(l: &Lattice, t: f64, up: bool) -> isize {
    let x = (t - l.origin()[0]) / l.dt();
    if up {
        (x - 1e-9).ceil() as isize
    } else {
        (x + 1e-9).floor() as isize
    }
}

fn reflect_region(l: &Lattice, k: &Region) -> Region {
    let (t0, t1) = (l.origin()[0], l.upper(0));
    let boxes = k
        .boxes()
        .iter()
        .map(|b| {
            let mut lo = b.lo.clone();
            let mut hi = b.hi.clone();
            lo[0] = t0 + t1 - b.hi[0];
            hi[0] = t0 + t1 - b.lo[0];
            Cuboid { lo, hi }
        })
        .collect();
    Region::from_boxes(k.dimension(), boxes).expect("same dimension")
}

/// Splits `f` so that f₀ is later (Future) or earlier (Past) than `g_support`
/// by more than `margin`.
pub fn split_causal_with(
    f: &GridField,
    g_support: &Region,
    m: f64,
    margin: f64,
    direction: SplitDirection,
    slab: Slab,
) -> Result<CausalSplit> {
    if slab.width_cells < 5 {
        return Err(Error::Invalid("the χ ramp needs at least 5 cells".into()));
    }
    match direction {
        SplitDirection::Future => split_future(f, g_support, m, margin, slab),
        SplitDirection::Past => {
            let l = f.lattice();
            let r = split_future(&f.time_reflected(), &reflect_region(l, g_support), m, margin, slab)?;
            Ok(CausalSplit {
                f0: r.f0.time_reflected(),
                phi0: r.phi0.time_reflected(),
                chi: r.chi.map(|mut c| {
                    c.reverse();
                    c
                }),
            })
        }
    }
}

fn split_future(f: &GridField, g_support: &Region, m: f64, margin: f64, slab: Slab) -> Result<CausalSplit> {
    let l = f.lattice().clone();
    let trivial = || CausalSplit {
        f0: f.clone(),
        phi0: GridField::zeros(&l),
        chi: None,
    };
    if f.is_zero() || later_than(f.support(), g_support, margin) {
        return Ok(trivial());
    }
    let nt = l.counts()[0] as isize;
    let s = l.slice_len();
    let top = g_support.bounding_box().expect("nonempty region").hi[0];
    let a = time_row(&l, top, true) + (margin / l.dt()).ceil() as isize + slab.offset_cells as isize;
    let w = slab.width_cells as isize;
    // φ₀ lives on rows below a + w and needs two clear rows for the stencil.
    if a < 1 || a + w + 2 > nt - 1 {
        return Err(Error::NoCauchySlab);
    }
    let chi: Vec<f64> = (0..nt).map(|n| smooth_step((n - a) as f64 / w as f64)).collect();
    let dr = retarded(f, m)?;
    let mut phi = dr.into_data();
    for (n, row) in phi.chunks_mut(s).enumerate() {
        let c = 1.0 - chi[n];
        row.iter_mut().for_each(|v| *v *= c);
    }
    let phi0 = GridField::from_samples(&l, phi)?;
    let kphi = kg_apply(&phi0, m)?;
    let f0 = combine(&l, &[(1.0, f), (-1.0, &kphi)])?;
    if !later_than(f0.support(), g_support, margin) {
        return Err(Error::NoCauchySlab);
    }
    Ok(CausalSplit {
        f0,
        phi0,
        chi: Some(chi),
    })
}

/// Outcome of a mechanized Weyl relation W(f)W(g) = W(f+g)·e^{iθ}.
#[derive(Debug, Clone)]
pub struct WeylDerivation {
    pub proof: ProofResult,
    /// θ read off the derivation.
    pub symbolic_angle: f64,
}

impl WeylDerivation {
    pub fn symbolic_phase(&self) -> Complex64 {
        Complex64::from_polar(1.0, self.symbolic_angle)
    }
}

fn tactic_error(tactic: &'static str, r: &Rewriter, e: Error) -> Error {
    let done: Vec<&str> = r.moves().iter().map(|m| m.tag()).collect();
    Error::Tactic {
        tactic,
        reason: format!("{e} after [{}]", done.join(", ")),
    }
}

/// Runs `steps` on a rewriter, tagging failures with the moves done so far.
fn drive<'a>(
    tactic: &'static str,
    table: &'a GeneratorTable,
    start: AlgebraWord,
    steps: impl FnOnce(&mut Rewriter<'a>) -> Result<()>,
) -> Result<(AlgebraWord, Vec<Move>)> {
    let mut r = Rewriter::new(table, start);
    if let Err(e) = steps(&mut r) {
        return Err(tactic_error(tactic, &r, e));
    }
    Ok(r.into_parts())
}

/// Left exchange on letters `pos` (a Weyl letter φ(f)) and `pos + 1` (S(G)),
/// leaving one letter S(F_f + G^{Δ_R f}) up to constants.
fn left_exchange_steps(r: &mut Rewriter, pos: usize, split: &CausalSplit) -> Result<()> {
    if split.is_trivial() {
        r.apply(Move::CausalMerge { pos, arity: 2 })?;
        return Ok(());
    }
    let phi0 = Arc::new(split.phi0.clone());
    r.apply(Move::DynSplit {
        pos,
        phi0: phi0.clone(),
    })?;
    normalize_keep(r)?;
    r.apply(Move::DynCommute {
        pos: pos + 1,
        phi0: phi0.clone(),
    })?;
    r.apply(Move::CausalMerge { pos, arity: 2 })?;
    r.apply(Move::DynMerge { pos, phi0 })?;
    normalize_keep(r)
}

/// Right exchange on letters `pos` (S(G)) and `pos + 1` (a Weyl letter φ(f)).
fn right_exchange_steps(r: &mut Rewriter, pos: usize, split: &CausalSplit) -> Result<()> {
    if split.is_trivial() {
        r.apply(Move::CausalMerge { pos, arity: 2 })?;
        return Ok(());
    }
    let phi0 = Arc::new(split.phi0.clone());
    r.apply(Move::DynSplit {
        pos: pos + 1,
        phi0: phi0.clone(),
    })?;
    normalize_keep(r)?;
    r.apply(Move::CausalMerge { pos, arity: 2 })?;
    r.apply(Move::DynMerge { pos, phi0 })?;
    normalize_keep(r)
}

/// Constant extraction only; free cancellation is left to the caller.
pub(crate) fn normalize_keep(r: &mut Rewriter) -> Result<()> {
    loop {
        let w = r.word().clone();
        let mut hit = None;
        for (pos, l) in w.letters.iter().enumerate() {
            let f = r.table().functional(l.id)?;
            if f.constant_part() != 0.0 || f.is_constant() {
                hit = Some(pos);
                break;
            }
        }
        match hit {
            Some(pos) => {
                r.apply(Move::ConstToPhase { pos })?;
            }
            None => return Ok(()),
        }
    }
}

fn letter_support(table: &GeneratorTable, w: &AlgebraWord) -> Result<Region> {
    let d = table.lattice().dimension();
    let mut k = Region::empty(d);
    for l in &w.letters {
        k = k.union(&table.support(l.id)?);
    }
    Ok(k)
}

/// Mechanized W(f)W(g) = W(f+g)·e^{iθ}: split f against supp g, then
/// DynSplit, DynCommute, CausalMerge and DynMerge.
pub fn weyl_tactic(table: &GeneratorTable, f: &GridField, g: &GridField) -> Result<WeylDerivation> {
    weyl_tactic_with(table, f, g, Slab::default())
}

/// As [`weyl_tactic`] with an explicit χ slab.
pub fn weyl_tactic_with(table: &GeneratorTable, f: &GridField, g: &GridField, slab: Slab) -> Result<WeylDerivation> {
    let m = table.lagrangian().mass;
    let wf = weyl(table, f)?;
    let wg = weyl(table, g)?;
    let lhs = wf.multiply(&wg);
    let sum = f.add(g)?;
    let target = weyl(table, &sum)?;
    let (left_word, left) = drive("weyl", table, lhs.clone(), |r| {
        if wf.is_scalar() || wg.is_scalar() {
            return normalize_keep(r);
        }
        let split = split_causal_with(
            f,
            &letter_support(table, &wg)?,
            m,
            table.margin(),
            SplitDirection::Future,
            slab,
        )?;
        left_exchange_steps(r, 0, &split)
    })?;
    if left_word.letters != target.letters {
        return Err(Error::Tactic {
            tactic: "weyl",
            reason: "derivation did not reach the letter of W(f+g)".into(),
        });
    }
    let symbolic_angle = left_word.phase.add(target.phase.neg()).angle();
    let rhs = target.times_phase(symbolic_angle);
    let proof = ProofResult::from_certificate(
        table,
        &lhs,
        &rhs,
        Certificate {
            left,
            right: Vec::new(),
        },
    )?;
    Ok(WeylDerivation { proof, symbolic_angle })
}

/// The Weyl phase from the propagator, checked against the mechanized derivation.
#[derive(Debug, Clone)]
pub struct CocycleCheck {
    /// e^{−i/2 ⟨f, Δ g⟩}.
    pub numeric: Complex64,
    pub derivation: WeylDerivation,
}

impl CocycleCheck {
    pub fn symbolic(&self) -> Complex64 {
        self.derivation.symbolic_phase()
    }

    pub fn discrepancy(&self) -> f64 {
        (self.symbolic() - self.numeric).norm()
    }
}

pub fn commutator_pairing(f: &GridField, g: &GridField, m: f64) -> Result<f64> {
    if f.is_zero() || g.is_zero() {
        return Ok(0.0);
    }
    pair_prop(f, g, m, PropKind::C)
}

pub fn weyl_cocycle_phase(table: &GeneratorTable, f: &GridField, g: &GridField) -> Result<CocycleCheck> {
    let m = table.lagrangian().mass;
    let numeric = Complex64::from_polar(1.0, -0.5 * commutator_pairing(f, g, m)?);
    let derivation = weyl_tactic(table, f, g)?;
    let check = CocycleCheck { numeric, derivation };
    let gap = check.discrepancy();
    if gap > SYMBOLIC_TOL {
        return Err(Error::Tactic {
            tactic: "weyl",
            reason: format!("symbolic phase differs from the propagator phase by {gap:.3e}"),
        });
    }
    Ok(check)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExchangeSide {
    /// W(f) S(F) = S(F_f + F^{Δ_R f}).
    Left,
    /// S(F) W(f) = S(F_f + F^{Δ_A f}).
    Right,
}

#[derive(Debug, Clone)]
pub struct Exchange {
    /// S(F_f + F^{Δ_{R/A} f}).
    pub rhs: AlgebraWord,
    pub proof: ProofResult,
}

/// Proves the exchange relation of W(f) with S(F) on the given side.
pub fn exchange(
    table: &GeneratorTable,
    f: &GridField,
    functional: &LocalFunctional,
    side: ExchangeSide,
) -> Result<Exchange> {
    let m = table.lagrangian().mass;
    let wf = weyl(table, f)?;
    let sf = table.gen(functional)?;
    let (kind, direction, lhs) = match side {
        ExchangeSide::Left => (PropKind::R, SplitDirection::Future, wf.multiply(&sf)),
        ExchangeSide::Right => (PropKind::A, SplitDirection::Past, sf.multiply(&wf)),
    };
    let shift = if f.is_zero() {
        GridField::zeros(f.lattice())
    } else if kind == PropKind::R {
        retarded(f, m)?
    } else {
        advanced(f, m)?
    };
    let target = weyl_functional(f, m)?.add(&functional.shift(&shift)?)?;
    let rhs = table.gen(&target)?;
    let (_, left) = drive("exchange", table, lhs.clone(), |r| {
        normalize_keep(r)?;
        if r.word().len() < 2 {
            return Ok(());
        }
        let split = split_causal_with(f, &functional.support(), m, table.margin(), direction, Slab::default())?;
        match side {
            ExchangeSide::Left => left_exchange_steps(r, 0, &split),
            ExchangeSide::Right => right_exchange_steps(r, 0, &split),
        }
    })?;
    let (_, right) = crate::algebra::normal_form(table, &rhs)?;
    let proof = ProofResult::from_certificate(table, &lhs, &rhs, Certificate { left, right })?;
    Ok(Exchange { rhs, proof })
}

/// Proves W(f) S(F) W(f)⁻¹ = S(F^{Δf}) by a left exchange followed by an
/// inverted right exchange and a free cancellation.
pub fn conjugation(table: &GeneratorTable, f: &GridField, functional: &LocalFunctional) -> Result<Exchange> {
    let m = table.lagrangian().mass;
    let wf = weyl(table, f)?;
    let sf = table.gen(functional)?;
    let lhs = wf.multiply(&sf).multiply(&wf.inverse());
    let delta = if f.is_zero() {
        GridField::zeros(f.lattice())
    } else {
        retarded(f, m)?.sub(&advanced(f, m)?)?
    };
    let h = functional.shift(&delta)?;
    let rhs = table.gen(&h)?;
    let (_, left) = drive("conjugation", table, lhs.clone(), |r| {
        normalize_keep(r)?;
        if r.word().len() == 3 {
            let k = functional.support();
            let fut = split_causal_with(f, &k, m, table.margin(), SplitDirection::Future, Slab::default())?;
            left_exchange_steps(r, 0, &fut)?;
            let past = split_causal_with(f, &k, m, table.margin(), SplitDirection::Past, Slab::default())?;
            let hc = Arc::new(h.without_constant());
            if past.is_trivial() {
                r.apply(Move::CausalSplit { pos: 0, f1: hc, f3: None })?;
            } else {
                let phi0 = Arc::new(past.phi0.clone());
                r.apply(Move::DynSplit {
                    pos: 0,
                    phi0: phi0.clone(),
                })?;
                normalize_keep(r)?;
                r.apply(Move::CausalSplit { pos: 0, f1: hc, f3: None })?;
                normalize_keep(r)?;
                r.apply(Move::DynMerge { pos: 1, phi0 })?;
            }
        }
        r.normalize()?;
        Ok(())
    })?;
    let (_, right) = crate::algebra::normal_form(table, &rhs)?;
    let proof = ProofResult::from_certificate(table, &lhs, &rhs, Certificate { left, right })?;
    Ok(Exchange { rhs, proof })
}

/// Truncated symmetric Fock space over the lowest spatial modes of a periodic lattice.
#[derive(Debug, Clone)]
pub struct FockOracle {
    table: ModeTable,
    lattice: Arc<Lattice>,
    modes: Vec<usize>,
    omega: Vec<f64>,
    n_occ: usize,
    lowering: DMatrix<Complex64>,
}

/// Tensor product of one operator per kept mode.
#[derive(Debug, Clone, PartialEq)]
pub struct FockOperator {
    factors: Vec<DMatrix<Complex64>>,
}

impl FockOperator {
    pub fn identity(modes: usize, dim: usize) -> Self {
        Self {
            factors: vec![DMatrix::identity(dim, dim); modes],
        }
    }

    pub fn factors(&self) -> &[DMatrix<Complex64>] {
        &self.factors
    }

    pub fn multiply(&self, other: &FockOperator) -> FockOperator {
        FockOperator {
            factors: self.factors.iter().zip(&other.factors).map(|(a, b)| a * b).collect(),
        }
    }

    pub fn adjoint(&self) -> FockOperator {
        FockOperator {
            factors: self.factors.iter().map(|a| a.adjoint()).collect(),
        }
    }

    pub fn scale(&self, c: Complex64) -> FockOperator {
        let mut factors = self.factors.clone();
        if let Some(f) = factors.first_mut() {
            *f *= c;
        }
        FockOperator { factors }
    }

    /// ⟨Ω| A |Ω⟩.
    pub fn vacuum_expectation(&self) -> Complex64 {
        self.factors.iter().map(|a| a[(0, 0)]).product()
    }

    /// Upper bound on ‖A − λ·1‖ (Frobenius per factor) with λ the vacuum
    /// expectation, valid for contractive factors.
    pub fn distance_to_scalar(&self) -> (Complex64, f64) {
        let lambda = self.vacuum_expectation();
        let bound = self
            .factors
            .iter()
            .map(|a| {
                let l = a[(0, 0)];
                let n = a.nrows();
                (a - DMatrix::<Complex64>::identity(n, n) * l).norm()
            })
            .sum();
        (lambda, bound)
    }

    /// max over factors of ‖A†A − 1‖.
    pub fn unitarity_defect(&self) -> f64 {
        self.factors
            .iter()
            .map(|a| {
                let n = a.nrows();
                (a.adjoint() * a - DMatrix::<Complex64>::identity(n, n)).norm()
            })
            .fold(0.0, f64::max)
    }
}

impl FockOracle {
    pub const DEFAULT_MODES: usize = 8;
    pub const DEFAULT_OCCUPATION: usize = 12;

    pub fn new(lattice: &Arc<Lattice>, m: f64) -> Result<Self> {
        Self::with_truncation(lattice, m, Self::DEFAULT_MODES, Self::DEFAULT_OCCUPATION)
    }

    pub fn with_truncation(lattice: &Arc<Lattice>, m: f64, n_modes: usize, n_occ: usize) -> Result<Self> {
        if !lattice.is_periodic() {
            return Err(Error::Invalid("the Fock oracle needs a spatially periodic lattice".into()));
        }
        if n_occ == 0 || n_modes == 0 {
            return Err(Error::Invalid("mode count and occupation cutoff must be positive".into()));
        }
        let table = ModeTable::new(lattice, m)?;
        let mut order: Vec<usize> = (0..table.len()).collect();
        order.sort_by_key(|&q| {
            let k = table.wave_index(q);
            let k2: i64 = k.iter().map(|v| v * v).sum();
            (k2, std::cmp::Reverse(k))
        });
        order.truncate(n_modes);
        let dt = lattice.dt();
        let omega = order.iter().map(|&q| table.theta(q) / dt).collect();
        let dim = n_occ + 1;
        let mut lowering = DMatrix::zeros(dim, dim);
        for n in 1..dim {
            lowering[(n - 1, n)] = Complex64::new((n as f64).sqrt(), 0.0);
        }
        Ok(Self {
            table,
            lattice: lattice.clone(),
            modes: order,
            omega,
            n_occ,
            lowering,
        })
    }

    pub fn mass(&self) -> f64 {
        self.table.mass()
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    pub fn occupation_cutoff(&self) -> usize {
        self.n_occ
    }

    /// Signed wave indices of the kept modes.
    pub fn wave_indices(&self) -> Vec<Vec<i64>> {
        self.modes.iter().map(|&q| self.table.wave_index(q)).collect()
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.omega
    }

    pub fn lowering(&self) -> &DMatrix<Complex64> {
        &self.lowering
    }

    pub fn raising(&self) -> DMatrix<Complex64> {
        self.lowering.adjoint()
    }

    /// Kept amplitudes z_k(f) and the leakage ‖f‖₁ outside them relative to ‖f‖₁.
    /// The leakage is reported as zero when the dropped amplitude is below
    /// [`LEAKAGE_FLOOR`], as for f = Kφ₀ where every amplitude is roundoff.
    pub fn amplitudes(&self, f: &GridField) -> Result<(Vec<Complex64>, f64)> {
        if **f.lattice() != *self.lattice {
            return Err(Error::LatticeMismatch);
        }
        if f.is_zero() {
            return Ok((vec![Complex64::new(0.0, 0.0); self.modes.len()], 0.0));
        }
        let z = self.table.amplitudes(f)?;
        let total: f64 = z.iter().map(|c| c.norm_sqr()).sum();
        let kept: Vec<Complex64> = self.modes.iter().map(|&q| z[q]).collect();
        let inside: f64 = kept.iter().map(|c| c.norm_sqr()).sum();
        let outside = (total - inside).max(0.0);
        let leakage = if outside.sqrt() <= LEAKAGE_FLOOR {
            0.0
        } else if total > 0.0 {
            (outside / total).sqrt()
        } else {
            0.0
        };
        Ok((kept, leakage))
    }

    /// exp(i Σ_k (conj z_k a_k + z_k a_k†)) as a tensor product over modes.
    pub fn weyl_matrix(&self, f: &GridField) -> Result<FockOperator> {
        let (z, leakage) = self.amplitudes(f)?;
        if leakage > LEAKAGE_LIMIT {
            return Err(Error::ModeTruncation {
                leakage,
                limit: LEAKAGE_LIMIT,
            });
        }
        let a = &self.lowering;
        let ad = self.raising();
        let i = Complex64::new(0.0, 1.0);
        let factors = z
            .iter()
            .map(|zk| ((a * zk.conj() + &ad * *zk) * i).exp())
            .collect();
        Ok(FockOperator { factors })
    }

    /// Σ_k of the coherent-state weight beyond the occupation cutoff, square-rooted.
    pub fn truncation_bound(&self, f: &GridField) -> Result<f64> {
        let (z, _) = self.amplitudes(f)?;
        Ok(z.iter().map(|zk| coherent_tail(zk.norm_sqr(), self.n_occ)).sum())
    }

    /// ⟨Ω|W(f)W(g)|Ω⟩ / ⟨Ω|W(f+g)|Ω⟩.
    pub fn cocycle_phase(&self, f: &GridField, g: &GridField) -> Result<Complex64> {
        let prod = self.weyl_matrix(f)?.multiply(&self.weyl_matrix(g)?);
        let sum = self.weyl_matrix(&f.add(g)?)?;
        Ok(prod.vacuum_expectation() / sum.vacuum_expectation())
    }
}

/// sqrt(Σ_{n > cutoff} e^{−x} xⁿ / n!).
fn coherent_tail(x: f64, cutoff: usize) -> f64 {
    let mut term = (-x).exp();
    for n in 1..=cutoff + 1 {
        term *= x / n as f64;
    }
    let mut tail = 0.0;
    let mut n = cutoff + 1;
    while term > 1e-300 && (tail == 0.0 || term > tail * 1e-17) {
        tail += term;
        n += 1;
        term *= x / n as f64;
    }
    tail.sqrt()
}

pub fn fock_weyl_matrix(o: &FockOracle, f: &GridField) -> Result<FockOperator> {
    o.weyl_matrix(f)
}
