//! Pointwise, star, time-ordered and Wick-star products on coherent
//! functionals Σ (c + φ(h_re) + iφ(h_im)) e^{iφ(f)}, normal ordering,
//! Schwinger-Dyson residuals and Planck-parameter series of cocycle phases.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::{Arc, OnceLock, RwLock};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{Lagrangian, LocalFunctional};
use crate::lattice::{GridField, Lattice};
use crate::one_particle::ModeTable;
use crate::propagator::{kg_apply, PairingBackend, PropKind};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProductKind {
    Pointwise,
    Star,
    Tord,
    Wick,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum PairKind {
    Commutator,
    Dirac,
    OneParticle,
}

fn field_key(f: &GridField) -> u64 {
    let mut h = DefaultHasher::new();
    f.lattice().counts().hash(&mut h);
    for v in f.data() {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

/// Propagator and one-particle pairings with a shared memo.
#[derive(Debug)]
pub struct Pairings {
    backend: PairingBackend,
    modes: OnceLock<std::result::Result<Arc<ModeTable>, Error>>,
    memo: RwLock<HashMap<(u64, u64, PairKind), Complex64>>,
}

impl Pairings {
    pub fn new(backend: PairingBackend) -> Self {
        Self {
            backend,
            modes: OnceLock::new(),
            memo: RwLock::new(HashMap::new()),
        }
    }

    pub fn solver(mass: f64) -> Result<Self> {
        Ok(Self::new(PairingBackend::solver(mass)?))
    }

    pub fn closed_form(mass: f64) -> Result<Self> {
        Ok(Self::new(PairingBackend::closed_form_d2(mass)?))
    }

    pub fn backend(&self) -> PairingBackend {
        self.backend
    }

    pub fn mass(&self) -> f64 {
        self.backend.mass
    }

    /// Number of memoized pairings.
    pub fn cached(&self) -> usize {
        self.memo.read().unwrap().len()
    }

    fn memoized(
        &self,
        f: &GridField,
        g: &GridField,
        kind: PairKind,
        compute: impl FnOnce() -> Result<Complex64>,
    ) -> Result<Complex64> {
        f.same_lattice(g)?;
        if f.is_zero() || g.is_zero() {
            return Ok(ZERO);
        }
        let key = (field_key(f), field_key(g), kind);
        if let Some(v) = self.memo.read().unwrap().get(&key) {
            return Ok(*v);
        }
        let v = compute()?;
        self.memo.write().unwrap().entry(key).or_insert(v);
        Ok(v)
    }

    /// ⟨f, Δg⟩ with Δ = Δ_R − Δ_A.
    pub fn commutator(&self, f: &GridField, g: &GridField) -> Result<f64> {
        self.memoized(f, g, PairKind::Commutator, || {
            Ok(self.backend.pair_prop(f, g, PropKind::C)?.into())
        })
        .map(|c| c.re)
    }

    /// ⟨f, Δ_D g⟩.
    pub fn dirac(&self, f: &GridField, g: &GridField) -> Result<f64> {
        self.memoized(f, g, PairKind::Dirac, || Ok(self.backend.pair_prop(f, g, PropKind::D)?.into()))
            .map(|c| c.re)
    }

    /// ⟨f, g⟩₁, antilinear in `f`.
    pub fn one_particle(&self, f: &GridField, g: &GridField) -> Result<Complex64> {
        let modes = self
            .modes
            .get_or_init(|| ModeTable::new(f.lattice(), self.backend.mass).map(Arc::new))
            .clone()?;
        self.memoized(f, g, PairKind::OneParticle, || modes.inner(f, g))
    }

    /// Exponent B(f, g) with e^{iφ(f)} ∘ e^{iφ(g)} = e^{iφ(f+g)} e^{B(f,g)}.
    fn exponent(&self, kind: ProductKind, f: &GridField, g: &GridField) -> Result<Complex64> {
        Ok(match kind {
            ProductKind::Pointwise => ZERO,
            ProductKind::Star => -0.5 * I * self.commutator(f, g)?,
            ProductKind::Tord => -I * self.dirac(f, g)?,
            ProductKind::Wick => -self.one_particle(f, g)?,
        })
    }
}

/// (c + φ(h_re) + iφ(h_im)) e^{iφ(f)}.
#[derive(Debug, Clone)]
pub struct CoherentTerm {
    pub label: GridField,
    pub constant: Complex64,
    pub linear_re: Option<GridField>,
    pub linear_im: Option<GridField>,
}

impl CoherentTerm {
    fn has_jet(&self) -> bool {
        self.linear_re.is_some() || self.linear_im.is_some()
    }

    fn scaled(&self, s: Complex64) -> Result<Self> {
        let (re, im) = scale_linear(&self.linear_re, &self.linear_im, s)?;
        Ok(Self {
            label: self.label.clone(),
            constant: self.constant * s,
            linear_re: re,
            linear_im: im,
        })
    }

    fn norm(&self) -> f64 {
        let l1 = |g: &Option<GridField>| g.as_ref().map_or(0.0, |g| g.map(f64::abs).integral());
        self.constant.norm() + l1(&self.linear_re) + l1(&self.linear_im)
    }

    fn is_zero(&self) -> bool {
        self.constant == ZERO && !self.has_jet()
    }
}

fn opt_axpy(acc: Option<GridField>, s: f64, g: &Option<GridField>) -> Result<Option<GridField>> {
    let Some(g) = g else { return Ok(acc) };
    if s == 0.0 {
        return Ok(acc);
    }
    let out = match acc {
        Some(a) => a.axpy(s, g)?,
        None => g.scale(s),
    };
    Ok(if out.is_zero() { None } else { Some(out) })
}

/// s·(φ(re) + iφ(im)) as φ(re') + iφ(im').
fn scale_linear(
    re: &Option<GridField>,
    im: &Option<GridField>,
    s: Complex64,
) -> Result<(Option<GridField>, Option<GridField>)> {
    let new_re = opt_axpy(opt_axpy(None, s.re, re)?, -s.im, im)?;
    let new_im = opt_axpy(opt_axpy(None, s.im, re)?, s.re, im)?;
    Ok((new_re, new_im))
}

/// Finite sum of coherent terms; `normal` marks symbols F standing for :F:.
#[derive(Debug, Clone)]
pub struct CoherentFunctional {
    lattice: Arc<Lattice>,
    terms: Vec<CoherentTerm>,
    normal: bool,
}

impl CoherentFunctional {
    pub fn zero(lattice: &Arc<Lattice>) -> Self {
        Self {
            lattice: lattice.clone(),
            terms: Vec::new(),
            normal: false,
        }
    }

    pub fn scalar(lattice: &Arc<Lattice>, c: Complex64) -> Self {
        Self::zero(lattice).with_term(CoherentTerm {
            label: GridField::zeros(lattice),
            constant: c,
            linear_re: None,
            linear_im: None,
        })
    }

    pub fn unit(lattice: &Arc<Lattice>) -> Self {
        Self::scalar(lattice, ONE)
    }

    /// c·e^{iφ(f)}.
    pub fn exp(f: &GridField, c: Complex64) -> Self {
        Self::zero(f.lattice()).with_term(CoherentTerm {
            label: f.clone(),
            constant: c,
            linear_re: None,
            linear_im: None,
        })
    }

    /// φ(h).
    pub fn field(h: &GridField) -> Self {
        let l = h.lattice();
        Self::zero(l).with_term(CoherentTerm {
            label: GridField::zeros(l),
            constant: ZERO,
            linear_re: Some(h.clone()),
            linear_im: None,
        })
    }

    fn with_term(mut self, t: CoherentTerm) -> Self {
        self.terms.push(t);
        self.canonical()
    }

    /// Same terms, read as a normal-ordered symbol (or not).
    pub fn as_normal(mut self, normal: bool) -> Self {
        self.normal = normal;
        self
    }

    pub fn is_normal(&self) -> bool {
        self.normal
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn terms(&self) -> &[CoherentTerm] {
        &self.terms
    }

    pub fn jet_degree(&self) -> usize {
        usize::from(self.terms.iter().any(CoherentTerm::has_jet))
    }

    /// Merges equal labels and drops vanishing terms.
    fn canonical(mut self) -> Self {
        let mut out: Vec<CoherentTerm> = Vec::with_capacity(self.terms.len());
        for t in self.terms.drain(..) {
            match out.iter_mut().find(|o| o.label.approx_eq(&t.label)) {
                Some(o) => {
                    o.constant += t.constant;
                    o.linear_re = opt_axpy(o.linear_re.take(), 1.0, &t.linear_re).expect("same lattice");
                    o.linear_im = opt_axpy(o.linear_im.take(), 1.0, &t.linear_im).expect("same lattice");
                }
                None => out.push(t),
            }
        }
        out.retain(|t| !t.is_zero());
        self.terms = out;
        self
    }

    fn check(&self, other: &Self) -> Result<()> {
        if *self.lattice != *other.lattice {
            return Err(Error::LatticeMismatch);
        }
        if self.normal != other.normal {
            return Err(Error::FlagMismatch);
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        let mut out = self.clone();
        out.terms.extend(other.terms.iter().cloned());
        Ok(out.canonical())
    }

    pub fn scale(&self, s: Complex64) -> Result<Self> {
        let terms = self.terms.iter().map(|t| t.scaled(s)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            lattice: self.lattice.clone(),
            terms,
            normal: self.normal,
        }
        .canonical())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(-ONE)?)
    }

    /// Σ |c| + ∫|h_re| + ∫|h_im| over terms.
    pub fn norm(&self) -> f64 {
        self.terms.iter().map(CoherentTerm::norm).sum()
    }

    pub fn distance(&self, other: &Self) -> Result<f64> {
        Ok(self.sub(other)?.norm())
    }

    /// Value on a configuration φ; symbols are evaluated as written.
    pub fn evaluate(&self, phi: &GridField) -> Result<Complex64> {
        let mut acc = ZERO;
        for t in &self.terms {
            let mut pre = t.constant;
            if let Some(h) = &t.linear_re {
                pre += h.pair(phi)?;
            }
            if let Some(h) = &t.linear_im {
                pre += I * h.pair(phi)?;
            }
            acc += pre * Complex64::from_polar(1.0, t.label.pair(phi)?);
        }
        Ok(acc)
    }
}

fn term_product(p: &Pairings, kind: ProductKind, a: &CoherentTerm, b: &CoherentTerm) -> Result<CoherentTerm> {
    if a.has_jet() && b.has_jet() {
        return Err(Error::JetDegree);
    }
    let e = p.exponent(kind, &a.label, &b.label)?.exp();
    let label = a.label.add(&b.label)?;
    let derivative = |h: &Option<GridField>, first: bool| -> Result<Complex64> {
        match h {
            None => Ok(ZERO),
            Some(h) if first => p.exponent(kind, h, &b.label),
            Some(h) => p.exponent(kind, &a.label, h),
        }
    };
    let mut constant = a.constant * b.constant;
    let (re, im) = if a.has_jet() {
        let dre = derivative(&a.linear_re, true)?;
        let dim = derivative(&a.linear_im, true)?;
        constant += b.constant * (-I) * (dre + I * dim);
        scale_linear(&a.linear_re, &a.linear_im, b.constant)?
    } else {
        let dre = derivative(&b.linear_re, false)?;
        let dim = derivative(&b.linear_im, false)?;
        constant += a.constant * (-I) * (dre + I * dim);
        scale_linear(&b.linear_re, &b.linear_im, a.constant)?
    };
    CoherentTerm {
        label,
        constant,
        linear_re: re,
        linear_im: im,
    }
    .scaled(e)
}

/// Bilinear product of the given kind. Wick needs two symbols and returns a
/// symbol; the other kinds need two plain functionals.
pub fn prod(
    a: &CoherentFunctional,
    b: &CoherentFunctional,
    kind: ProductKind,
    pairings: &Pairings,
) -> Result<CoherentFunctional> {
    a.check(b)?;
    if a.normal != (kind == ProductKind::Wick) {
        return Err(Error::FlagMismatch);
    }
    let mut out = CoherentFunctional::zero(&a.lattice).as_normal(a.normal);
    for s in &a.terms {
        for t in &b.terms {
            out.terms.push(term_product(pairings, kind, s, t)?);
        }
    }
    Ok(out.canonical())
}

/// e_T^{iφ(f)} e^{ic} = e^{iφ(f)} e^{−(i/2)⟨f,Δ_D f⟩ + ic}.
pub fn tord_exp(f: &GridField, c: f64, pairings: &Pairings) -> Result<CoherentFunctional> {
    let phase = c - 0.5 * pairings.dirac(f, f)?;
    Ok(CoherentFunctional::exp(f, Complex64::from_polar(1.0, phase)))
}

fn reorder(a: &CoherentFunctional, sign: f64, pairings: &Pairings) -> Result<CoherentFunctional> {
    let mut out = CoherentFunctional::zero(&a.lattice).as_normal(sign < 0.0);
    for t in &a.terms {
        let w = (0.5 * sign * pairings.one_particle(&t.label, &t.label)?.re).exp();
        let mut constant = t.constant;
        if let Some(h) = &t.linear_re {
            constant += -sign * I * pairings.one_particle(h, &t.label)?.re;
        }
        if let Some(h) = &t.linear_im {
            constant += sign * pairings.one_particle(h, &t.label)?.re;
        }
        let term = CoherentTerm {
            label: t.label.clone(),
            constant,
            linear_re: t.linear_re.clone(),
            linear_im: t.linear_im.clone(),
        };
        out.terms.push(term.scaled(Complex64::new(w, 0.0))?);
    }
    Ok(out.canonical())
}

/// The functional :F: for a symbol F; e^{iφ(f)} gains e^{½‖f‖₁²}.
pub fn normal_order(a: &CoherentFunctional, pairings: &Pairings) -> Result<CoherentFunctional> {
    if !a.normal {
        return Err(Error::FlagMismatch);
    }
    reorder(a, 1.0, pairings)
}

/// Inverse of [`normal_order`].
pub fn unnormal_order(a: &CoherentFunctional, pairings: &Pairings) -> Result<CoherentFunctional> {
    if a.normal {
        return Err(Error::FlagMismatch);
    }
    reorder(a, -1.0, pairings)
}

fn kg(phi0: &GridField, pairings: &Pairings) -> Result<GridField> {
    if phi0.is_zero() {
        return Ok(GridField::zeros(phi0.lattice()));
    }
    kg_apply(phi0, pairings.mass())
}

/// ‖ :F: ·_T φ(Kφ₀) − :F: ⋆ φ(Kφ₀) − i :εF(φ₀): ‖ for F = e^{iφ(g)}.
pub fn sd_residual(g: &GridField, phi0: &GridField, pairings: &Pairings) -> Result<f64> {
    let k = kg(phi0, pairings)?;
    let nf = normal_order(&CoherentFunctional::exp(g, ONE).as_normal(true), pairings)?;
    let field = CoherentFunctional::field(&k);
    let t = prod(&nf, &field, ProductKind::Tord, pairings)?;
    let s = prod(&nf, &field, ProductKind::Star, pairings)?;
    // εF(φ₀) = i⟨g, φ₀⟩ F.
    let eps = nf.scale(I * g.pair(phi0)?)?;
    Ok(t.sub(&s)?.sub(&eps.scale(I)?)?.norm())
}

/// :F_λ: = :F^{λφ₀}: ·_T e_T^{iφ(λKφ₀)} e^{i(λ²/2)⟨φ₀,Kφ₀⟩}.
pub fn integrated_sd_lhs(g: &GridField, phi0: &GridField, lambda: f64, pairings: &Pairings) -> Result<CoherentFunctional> {
    let k = kg(phi0, pairings)?;
    let shifted = CoherentFunctional::exp(g, Complex64::from_polar(1.0, lambda * g.pair(phi0)?)).as_normal(true);
    let nf = normal_order(&shifted, pairings)?;
    let et = tord_exp(&k.scale(lambda), 0.5 * lambda * lambda * phi0.pair(&k)?, pairings)?;
    prod(&nf, &et, ProductKind::Tord, pairings)
}

/// :F: ⋆ e^{iλφ(Kφ₀)}.
pub fn integrated_sd_rhs(g: &GridField, phi0: &GridField, lambda: f64, pairings: &Pairings) -> Result<CoherentFunctional> {
    let k = kg(phi0, pairings)?;
    let nf = normal_order(&CoherentFunctional::exp(g, ONE).as_normal(true), pairings)?;
    prod(&nf, &CoherentFunctional::exp(&k.scale(lambda), ONE), ProductKind::Star, pairings)
}

/// i :F_λ: ⋆ φ(Kφ₀), the λ-derivative predicted by the Schwinger-Dyson equation.
pub fn integrated_sd_flow(g: &GridField, phi0: &GridField, lambda: f64, pairings: &Pairings) -> Result<CoherentFunctional> {
    let k = kg(phi0, pairings)?;
    let lhs = integrated_sd_lhs(g, phi0, lambda, pairings)?;
    prod(&lhs, &CoherentFunctional::field(&k), ProductKind::Star, pairings)?.scale(I)
}

pub fn integrated_sd(g: &GridField, phi0: &GridField, lambda: f64, pairings: &Pairings) -> Result<f64> {
    integrated_sd_lhs(g, phi0, lambda, pairings)?.distance(&integrated_sd_rhs(g, phi0, lambda, pairings)?)
}

/// S₀(φ(f) + c) = e_T^{iφ(f)} e^{ic}; nonlinear F is refused.
pub fn coherent_s0(f: &LocalFunctional, pairings: &Pairings) -> Result<CoherentFunctional> {
    if f.degree() > 1 {
        return Err(Error::NonlinearS0);
    }
    match f.coefficient(1) {
        Some(g) => tord_exp(g, f.constant_part(), pairings),
        None => Ok(CoherentFunctional::scalar(
            f.lattice(),
            Complex64::from_polar(1.0, f.constant_part()),
        )),
    }
}

fn a3_sides(
    f: &LocalFunctional,
    phi0: &GridField,
    pairings: &Pairings,
) -> Result<(CoherentFunctional, CoherentFunctional, CoherentFunctional)> {
    let d = Lagrangian::free(pairings.mass())?.relative_action(phi0)?;
    let lhs = coherent_s0(&f.shift(phi0)?.add(&d)?, pairings)?;
    let sf = coherent_s0(f, pairings)?;
    let sd = coherent_s0(&d, pairings)?;
    let r1 = prod(&sf, &sd, ProductKind::Star, pairings)?;
    let r2 = prod(&sd, &sf, ProductKind::Star, pairings)?;
    Ok((lhs, r1, r2))
}

/// max of ‖S₀(F^{φ₀} + δL₀(φ₀)) − S₀(F) ⋆ S₀(δL₀(φ₀))‖ and the same with the factors swapped.
pub fn verify_a3(f: &LocalFunctional, phi0: &GridField, pairings: &Pairings) -> Result<f64> {
    let (lhs, r1, r2) = a3_sides(f, phi0, pairings)?;
    Ok(lhs.distance(&r1)?.max(lhs.distance(&r2)?))
}

/// ‖S₀(F) ⋆ S₀(δL₀(φ₀)) − S₀(δL₀(φ₀)) ⋆ S₀(F)‖.
pub fn a3_commutation(f: &LocalFunctional, phi0: &GridField, pairings: &Pairings) -> Result<f64> {
    let (_, r1, r2) = a3_sides(f, phi0, pairings)?;
    r1.distance(&r2)
}

/// Truncated power series c₀ + c₁h + … + c_N h^N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanckSeries {
    order: usize,
    coeffs: Vec<Complex64>,
}

impl PlanckSeries {
    pub fn new(order: usize, mut coeffs: Vec<Complex64>) -> Self {
        coeffs.resize(order + 1, ZERO);
        Self { order, coeffs }
    }

    pub fn one(order: usize) -> Self {
        Self::new(order, vec![ONE])
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coefficient(&self, k: usize) -> Complex64 {
        self.coeffs.get(k).copied().unwrap_or(ZERO)
    }

    fn common(&self, other: &Self) -> usize {
        self.order.min(other.order)
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.common(other);
        Self::new(n, (0..=n).map(|k| self.coeffs[k] + other.coeffs[k]).collect())
    }

    pub fn mul(&self, other: &Self) -> Self {
        let n = self.common(other);
        let c = (0..=n)
            .map(|k| (0..=k).map(|j| self.coeffs[j] * other.coeffs[k - j]).sum())
            .collect();
        Self::new(n, c)
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self::new(self.order, self.coeffs.iter().map(|c| c * s).collect())
    }

    pub fn evaluate(&self, h: f64) -> Complex64 {
        self.coeffs.iter().rev().fold(ZERO, |acc, c| acc * h + c)
    }
}

/// Taylor series of h ↦ e^{−(ih/2)⟨f,Δg⟩} about h = 0.
pub fn planck_expand(f: &GridField, g: &GridField, order: i64, pairings: &Pairings) -> Result<PlanckSeries> {
    if order < 0 {
        return Err(Error::NegativeOrder);
    }
    let n = order as usize;
    let a = -0.5 * I * pairings.commutator(f, g)?;
    let mut coeffs = Vec::with_capacity(n + 1);
    let mut c = ONE;
    for k in 0..=n {
        coeffs.push(c);
        c = c * a / (k + 1) as f64;
    }
    Ok(PlanckSeries::new(n, coeffs))
}

/// e^{−(ih/2)⟨f,Δg⟩}.
pub fn planck_phase(f: &GridField, g: &GridField, h: f64, pairings: &Pairings) -> Result<Complex64> {
    Ok(Complex64::from_polar(1.0, -0.5 * h * pairings.commutator(f, g)?))
}
