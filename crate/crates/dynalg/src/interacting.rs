//! Interactions localized by a cutoff χ, expressed as relative S-operators
//! B(F) = S(Vχ)⁻¹ S(F + Vχ) in the free algebra, with scripted proofs of
//! their dynamical and causal relations, the χ-change intertwiner and the
//! nested embeddings over a growing family of regions.

use std::sync::Arc;

use crate::algebra::{AlgebraWord, Certificate, GeneratorTable, Letter, Move, Phase, ProofResult, Rewriter};
use crate::error::{Error, Result};
use crate::free_theory::{
    commutator_pairing, normalize_keep, split_causal_with, weyl_functional, Slab, SplitDirection,
};
use crate::functionals::{InteractionPotential, LocalFunctional};
use crate::lattice::{smooth_step, GridField, Lattice};
use crate::spacetime::{later_than, Cuboid, Region};

/// Largest |χ − 1| accepted on a plateau.
pub const PLATEAU_TOL: f64 = 1e-12;

/// V(χ): coefficients Δg_n·χ.
pub fn localize_potential(v: &InteractionPotential, chi: &GridField) -> Result<LocalFunctional> {
    if !chi.is_zero() && !chi.is_compact() {
        return Err(Error::Support("cutoff touches the lattice boundary".into()));
    }
    Ok(v.localize(chi))
}

/// Letters of `w` followed by those of `rest`, with no free reduction.
fn concat(words: &[&AlgebraWord]) -> AlgebraWord {
    let mut out = AlgebraWord::identity();
    for w in words {
        out.phase = out.phase.add(w.phase);
        out.letters.extend_from_slice(&w.letters);
    }
    out
}

fn inverse_raw(w: &AlgebraWord) -> AlgebraWord {
    AlgebraWord {
        phase: w.phase.neg(),
        letters: w.letters.iter().rev().map(|l| l.inverse()).collect(),
    }
}

/// B(F) as the unreduced two-letter word S(Vχ)⁻¹ S(F + Vχ).
pub fn bogoliubov_raw(table: &GeneratorTable, vchi: &LocalFunctional, f: &LocalFunctional) -> Result<AlgebraWord> {
    let a = table.gen(vchi)?;
    let b = table.gen(&f.add(vchi)?)?;
    Ok(concat(&[&inverse_raw(&a), &b]))
}

/// B(F) = S(Vχ)⁻¹ S(F + Vχ), freely reduced.
pub fn bogoliubov(table: &GeneratorTable, vchi: &LocalFunctional, f: &LocalFunctional) -> Result<AlgebraWord> {
    Ok(bogoliubov_raw(table, vchi, f)?.reduced())
}

fn plateau_violation(chi: &GridField, fields: &[(&str, &GridField)]) -> Result<()> {
    for (name, g) in fields {
        chi.same_lattice(g)?;
        for (i, (c, v)) in chi.data().iter().zip(g.data()).enumerate() {
            if *v != 0.0 && (c - 1.0).abs() > PLATEAU_TOL {
                let x = chi.lattice().point(i);
                return Err(Error::Plateau(format!("{name} is nonzero at {x:?} where chi = {c}")));
            }
        }
    }
    Ok(())
}

fn functional_plateau(chi: &GridField, name: &str, f: &LocalFunctional) -> Result<()> {
    for g in f.coefficients() {
        plateau_violation(chi, &[(name, g)])?;
    }
    Ok(())
}

/// δL_{V(χ)}(φ₀) = δL₀(φ₀) + V(χ)^{φ₀} − V(χ).
pub fn interacting_relative_action(
    table: &GeneratorTable,
    v: &InteractionPotential,
    chi: &GridField,
    phi0: &GridField,
) -> Result<LocalFunctional> {
    let vchi = localize_potential(v, chi)?;
    let d0 = table.relative_action(phi0)?;
    LocalFunctional::linear_combination(&[(1.0, &d0), (1.0, &vchi.shift(phi0)?), (-1.0, &vchi)])
}

#[derive(Debug, Clone)]
pub struct DynamicsCheck {
    pub proof: ProofResult,
    /// Distance between δL_{V(χ)}(φ₀) and δL_V(φ₀).
    pub relative_action_gap: f64,
}

/// B(F)·B(δL_{V(χ)}(φ₀)) = B(F^{φ₀} + δL_{V(χ)}(φ₀)).
pub fn verify_interacting_dynamics(
    table: &GeneratorTable,
    v: &InteractionPotential,
    chi: &GridField,
    f: &LocalFunctional,
    phi0: &GridField,
) -> Result<DynamicsCheck> {
    plateau_violation(chi, &[("phi0", phi0)])?;
    functional_plateau(chi, "F", f)?;
    let vchi = localize_potential(v, chi)?;
    let d = interacting_relative_action(table, v, chi, phi0)?;
    let global = table.lagrangian().with_potential(v).relative_action(phi0)?;
    let relative_action_gap = d.distance(&global);

    let lhs = concat(&[&bogoliubov_raw(table, &vchi, f)?, &bogoliubov_raw(table, &vchi, &d)?]);
    let target = LocalFunctional::linear_combination(&[(1.0, &f.shift(phi0)?), (1.0, &d)])?;
    let rhs = bogoliubov_raw(table, &vchi, &target)?;

    let phi0 = Arc::new(phi0.clone());
    let active = !phi0.is_zero();
    let d0 = table.relative_action(&phi0)?.without_constant();

    let mut r = Rewriter::new(table, lhs.clone());
    normalize_keep(&mut r)?;
    if active && !v.is_zero() {
        let last = r.word().letters.len() - 1;
        r.apply(Move::DynSplit { pos: last, phi0: phi0.clone() })?;
    }
    r.normalize()?;
    if active && !d0.is_zero() {
        let id = table.intern(&d0)?;
        if let Some(p) = r.find(id) {
            if p >= 1 && r.word().letters[p - 1].exp == 1 {
                r.apply(Move::DynMerge { pos: p - 1, phi0: phi0.clone() })?;
                r.normalize()?;
            }
        }
    }
    let (reached, left) = r.into_parts();

    let mut s = Rewriter::new(table, rhs.clone());
    s.normalize()?;
    if reached.letters != s.word().letters && active && !v.is_zero() && !s.word().letters.is_empty() {
        let last = s.word().letters.len() - 1;
        s.apply(Move::DynSplit { pos: last, phi0: phi0.clone() })?;
        s.normalize()?;
    }
    let (_, right) = s.into_parts();
    let proof = ProofResult::from_certificate(table, &lhs, &rhs, Certificate { left, right })?;
    Ok(DynamicsCheck {
        proof,
        relative_action_gap,
    })
}

/// Merges until the word matches `target`'s letters: the first (+,−,+) window
/// by arity 3, otherwise the first (+,+) pair by arity 2.
fn merge_towards(r: &mut Rewriter, target: &[Letter]) -> Result<()> {
    for _ in 0..8 {
        if r.word().letters == target {
            return Ok(());
        }
        let ls = r.word().letters.clone();
        let three = (0..ls.len().saturating_sub(2)).find(|&p| (ls[p].exp, ls[p + 1].exp, ls[p + 2].exp) == (1, -1, 1));
        let mv = match three {
            Some(p) if r.clone().apply(Move::CausalMerge { pos: p, arity: 3 }).is_ok() => {
                Move::CausalMerge { pos: p, arity: 3 }
            }
            _ => match (0..ls.len().saturating_sub(1)).find(|&p| ls[p].exp == 1 && ls[p + 1].exp == 1) {
                Some(p) => Move::CausalMerge { pos: p, arity: 2 },
                None => return Ok(()),
            },
        };
        r.apply(mv)?;
        r.normalize()?;
    }
    Ok(())
}

/// B(F₁+F₃)·B(F₃)⁻¹·B(F₂+F₃) = B(F₁+F₂+F₃) for F₁ later than F₂.
pub fn verify_interacting_causal(
    table: &GeneratorTable,
    v: &InteractionPotential,
    chi: &GridField,
    f1: &LocalFunctional,
    f2: &LocalFunctional,
    f3: &LocalFunctional,
) -> Result<ProofResult> {
    if !later_than(&f1.support(), &f2.support(), table.margin()) {
        return Err(Error::CausalPremise("F1 is not later than F2".into()));
    }
    let vchi = localize_potential(v, chi)?;
    let a = bogoliubov_raw(table, &vchi, &f1.add(f3)?)?;
    let b = bogoliubov_raw(table, &vchi, f3)?;
    let c = bogoliubov_raw(table, &vchi, &f2.add(f3)?)?;
    let lhs = concat(&[&a, &inverse_raw(&b), &c]);
    let sum = LocalFunctional::linear_combination(&[(1.0, f1), (1.0, f2), (1.0, f3)])?;
    let rhs = bogoliubov_raw(table, &vchi, &sum)?;

    let mut s = Rewriter::new(table, rhs.clone());
    s.normalize()?;
    let target = s.word().letters.clone();
    let mut r = Rewriter::new(table, lhs.clone());
    r.normalize()?;
    merge_towards(&mut r, &target)?;
    let (_, left) = r.into_parts();
    let (_, right) = s.into_parts();
    ProofResult::from_certificate(table, &lhs, &rhs, Certificate { left, right })
}

/// B(F) = S(F) when F lies in the past of Vχ.
pub fn verify_past_factorization(
    table: &GeneratorTable,
    vchi: &LocalFunctional,
    f: &LocalFunctional,
) -> Result<ProofResult> {
    if !later_than(&vchi.support(), &f.support(), table.margin()) {
        return Err(Error::CausalPremise("V(chi) is not later than F".into()));
    }
    let lhs = bogoliubov_raw(table, vchi, f)?;
    let rhs = table.gen(f)?;
    let mut r = Rewriter::new(table, lhs.clone());
    normalize_keep(&mut r)?;
    if !vchi.is_constant() && !f.is_constant() {
        r.apply(Move::CausalSplit {
            pos: 1,
            f1: Arc::new(vchi.without_constant()),
            f3: None,
        })?;
    }
    r.normalize()?;
    let (_, left) = r.into_parts();
    let mut s = Rewriter::new(table, rhs.clone());
    s.normalize()?;
    let (_, right) = s.into_parts();
    ProofResult::from_certificate(table, &lhs, &rhs, Certificate { left, right })
}

/// B(F) = S(Vχ)⁻¹ S(F) S(Vχ) when F lies in the future of Vχ.
pub fn verify_future_conjugation(
    table: &GeneratorTable,
    vchi: &LocalFunctional,
    f: &LocalFunctional,
) -> Result<ProofResult> {
    if !later_than(&f.support(), &vchi.support(), table.margin()) {
        return Err(Error::CausalPremise("F is not later than V(chi)".into()));
    }
    let lhs = bogoliubov_raw(table, vchi, f)?;
    let sv = table.gen(vchi)?;
    let rhs = concat(&[&inverse_raw(&sv), &table.gen(f)?, &sv]);
    let mut r = Rewriter::new(table, lhs.clone());
    normalize_keep(&mut r)?;
    if !vchi.is_constant() && !f.is_constant() {
        r.apply(Move::CausalSplit {
            pos: 1,
            f1: Arc::new(f.without_constant()),
            f3: None,
        })?;
    }
    r.normalize()?;
    let (_, left) = r.into_parts();
    let mut s = Rewriter::new(table, rhs.clone());
    s.normalize()?;
    let (_, right) = s.into_parts();
    ProofResult::from_certificate(table, &lhs, &rhs, Certificate { left, right })
}

fn dist_to_box(x: &[f64], b: &Cuboid) -> f64 {
    (1..x.len())
        .map(|i| {
            let s = (b.lo[i] - x[i]).max(x[i] - b.hi[i]).max(0.0);
            s * s
        })
        .sum::<f64>()
        .sqrt()
}

/// The point x is later than `o`.
fn point_later(x: &[f64], o: &Region, margin: f64) -> bool {
    o.boxes().iter().all(|b| b.hi[0] - x[0] - dist_to_box(x, b) < -margin)
}

/// `o` is later than the point x.
fn point_earlier(x: &[f64], o: &Region, margin: f64) -> bool {
    o.boxes().iter().all(|b| x[0] - b.lo[0] - dist_to_box(x, b) < -margin)
}

/// δχ = χ₊ + χ₋ with χ₊ outside the past of O and χ₋ outside its future,
/// cut by a C² ramp in time centred on O; the ramp narrows from 4 to 1 rows until both hold.
pub fn chi_change_split(delta_chi: &GridField, o: &Region, margin: f64) -> Result<(GridField, GridField)> {
    let l = delta_chi.lattice().clone();
    if delta_chi.is_zero() {
        return Ok((GridField::zeros(&l), GridField::zeros(&l)));
    }
    let nonzero: Vec<(usize, Vec<f64>)> = delta_chi
        .data()
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, _)| (i, l.point(i)))
        .collect();
    if nonzero.iter().any(|(_, x)| o.contains_point(x)) {
        return Err(Error::DeltaChiMeetsRegion);
    }
    if o.is_empty() {
        return Ok((delta_chi.clone(), GridField::zeros(&l)));
    }
    let bb = o.bounding_box().expect("nonempty region");
    let t_mid = 0.5 * (bb.lo[0] + bb.hi[0]);
    for w in [4.0, 3.0, 2.0, 1.0] {
        let width = w * l.dt();
        let rho = |t: f64| smooth_step((t - t_mid) / width + 0.5);
        let plus = GridField::from_fn(&l, |x| rho(x[0])).mul(delta_chi)?;
        let minus = delta_chi.sub(&plus)?;
        let ok = nonzero.iter().all(|(i, x)| {
            (plus.data()[*i] == 0.0 || point_later(x, o, margin)) && (minus.data()[*i] == 0.0 || point_earlier(x, o, margin))
        });
        if ok {
            return Ok((plus, minus));
        }
    }
    Err(Error::Support(
        "no time cut separates the change of cutoff into future and past pieces".into(),
    ))
}

/// U = B_{V(χ₁)}(V(χ₋)) with the pieces needed to script the conjugation proof.
#[derive(Debug, Clone)]
pub struct Intertwiner {
    /// S(V(χ₁))⁻¹ S(V(χ₋) + V(χ₁)), unreduced.
    raw: AlgebraWord,
    pub chi_plus: GridField,
    pub chi_minus: GridField,
    v1: LocalFunctional,
    v2: LocalFunctional,
    vplus: LocalFunctional,
    w: LocalFunctional,
    trivial_potential: bool,
    /// Conjugation proofs for the sample functionals.
    pub proofs: Vec<ProofResult>,
}

impl Intertwiner {
    pub fn word(&self) -> AlgebraWord {
        self.raw.clone().reduced()
    }

    pub fn raw_word(&self) -> &AlgebraWord {
        &self.raw
    }

    /// CausalSplit, FreeCancel, CausalSplit on B_{V(χ₂)}(F) at letter `p`.
    fn steps(&self, r: &mut Rewriter, p: usize, f: &LocalFunctional) -> Result<()> {
        if self.trivial_potential {
            return Ok(());
        }
        r.apply(Move::CausalSplit {
            pos: p + 1,
            f1: Arc::new(self.vplus.clone()),
            f3: Some(Arc::new(self.w.clone())),
        })?;
        r.apply(Move::FreeCancel { pos: p })?;
        r.apply(Move::CausalSplit {
            pos: p + 1,
            f1: Arc::new(f.without_constant()),
            f3: Some(Arc::new(self.v1.clone())),
        })?;
        Ok(())
    }

    /// Proof of B_{V(χ₂)}(F) = U⁻¹ B_{V(χ₁)}(F) U.
    pub fn conjugation(&self, table: &GeneratorTable, f: &LocalFunctional) -> Result<ProofResult> {
        let lhs = bogoliubov_raw(table, &self.v2, f)?;
        let rhs = concat(&[&inverse_raw(&self.raw), &bogoliubov_raw(table, &self.v1, f)?, &self.raw]);
        let mut r = Rewriter::new(table, lhs.clone());
        normalize_keep(&mut r)?;
        if !f.is_constant() || !self.v2.is_zero() {
            self.steps(&mut r, 0, f)?;
        }
        r.normalize()?;
        let (_, left) = r.into_parts();
        let mut s = Rewriter::new(table, rhs.clone());
        s.normalize()?;
        let (_, right) = s.into_parts();
        ProofResult::from_certificate(table, &lhs, &rhs, Certificate { left, right })
    }
}

fn check_region_plateau(chi: &GridField, o: &Region, name: &str) -> Result<()> {
    let l = chi.lattice();
    for (i, c) in chi.data().iter().enumerate() {
        if (c - 1.0).abs() > PLATEAU_TOL {
            let x = l.point(i);
            if o.contains_point(&x) {
                return Err(Error::Plateau(format!("{name} = {c} at {x:?} inside O")));
            }
        }
    }
    Ok(())
}

fn check_inside(f: &LocalFunctional, o: &Region) -> Result<()> {
    if o.contains_region(&f.support()) {
        Ok(())
    } else {
        Err(Error::Support("F is not supported in the region".into()))
    }
}

/// Builds U for a change of cutoff χ₁ → χ₂ around O and proves the
/// conjugation identity for each sample.
pub fn chi_intertwiner(
    table: &GeneratorTable,
    v: &InteractionPotential,
    chi1: &GridField,
    chi2: &GridField,
    o: &Region,
    samples: &[LocalFunctional],
) -> Result<Intertwiner> {
    check_region_plateau(chi1, o, "chi1")?;
    check_region_plateau(chi2, o, "chi2")?;
    let (chi_plus, chi_minus) = chi_change_split(&chi2.sub(chi1)?, o, table.margin())?;
    let v1 = localize_potential(v, chi1)?;
    let v2 = localize_potential(v, chi2)?;
    let vminus = localize_potential(v, &chi_minus)?;
    let vplus = localize_potential(v, &chi_plus)?;
    let w = vminus.add(&v1)?;
    let raw = bogoliubov_raw(table, &v1, &vminus)?;
    let mut out = Intertwiner {
        raw,
        chi_plus,
        chi_minus,
        v1: v1.without_constant(),
        v2: v2.without_constant(),
        vplus: vplus.without_constant(),
        w: w.without_constant(),
        trivial_potential: v.is_zero(),
        proofs: Vec::new(),
    };
    for f in samples {
        check_inside(f, o)?;
        let p = out.conjugation(table, f)?;
        out.proofs.push(p);
    }
    Ok(out)
}

/// χ = 1 − step((|t − t_c| + |x − c| − R)/ramp): 1 on the diamond of radius R.
pub fn diamond_cutoff(lattice: &Arc<Lattice>, center: &[f64], radius: f64, ramp: f64) -> GridField {
    GridField::from_fn(lattice, |x| {
        1.0 - smooth_step((diamond_norm(x, center) - radius) / ramp)
    })
}

fn diamond_norm(x: &[f64], c: &[f64]) -> f64 {
    let spatial: f64 = x[1..].iter().zip(&c[1..]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    (x[0] - c[0]).abs() + spatial
}

/// Lattice cells of the diamond |t − t_c| + |x − c| ≤ R, one slab of boxes per time row.
pub fn diamond_region(lattice: &Lattice, center: &[f64], radius: f64) -> Result<Region> {
    let d = lattice.dimension();
    let edge = |i: usize| lattice.origin()[0] + (i as f64 - 0.5) * lattice.dt();
    let mut boxes = Vec::new();
    for i in 0..lattice.counts()[0] {
        let t = lattice.coordinate(0, i);
        let r = radius - (t - center[0]).abs();
        if r < 0.0 {
            continue;
        }
        let mut lo = vec![edge(i)];
        let mut hi = vec![edge(i + 1)];
        for a in 1..d {
            lo.push(center[a] - r);
            hi.push(center[a] + r);
        }
        boxes.push(Cuboid::new(lo, hi)?);
    }
    Region::from_boxes(d, boxes)
}

/// Regions O₁ ⊂ Ô₁ ⊂ O₂ ⊂ … with cutoffs χₙ = 1 on Oₙ and supp χₙ ⊆ Ôₙ.
#[derive(Debug, Clone)]
pub struct CutoffFamily {
    regions: Vec<Region>,
    hulls: Vec<Region>,
    chis: Vec<GridField>,
}

fn grown(r: &Region, cells: f64, lattice: &Lattice) -> Region {
    let h: Vec<f64> = lattice.spacing().to_vec();
    let boxes = r
        .boxes()
        .iter()
        .map(|b| Cuboid {
            lo: b.lo.iter().zip(&h).map(|(v, s)| v - cells * s).collect(),
            hi: b.hi.iter().zip(&h).map(|(v, s)| v + cells * s).collect(),
        })
        .collect();
    Region::from_boxes(r.dimension(), boxes).expect("dimension")
}

impl CutoffFamily {
    pub fn new(regions: Vec<Region>, hulls: Vec<Region>, chis: Vec<GridField>) -> Result<Self> {
        let n = regions.len();
        if n == 0 || hulls.len() != n || chis.len() != n {
            return Err(Error::Invalid("cutoff family needs matching, nonempty lists".into()));
        }
        let lattice = chis[0].lattice().clone();
        for k in 0..n {
            let chi = &chis[k];
            chi.same_lattice(&chis[0])?;
            if chi.data().iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(Error::Invalid(format!("chi_{} leaves [0, 1]", k + 1)));
            }
            check_region_plateau(chi, &regions[k], "chi")?;
            let hull = &hulls[k];
            for (i, c) in chi.data().iter().enumerate() {
                if *c != 0.0 && !hull.contains_point(&lattice.point(i)) {
                    return Err(Error::Support(format!("chi_{} leaves its hull", k + 1)));
                }
            }
            if !hull.contains_region(&grown(&regions[k], 2.0, &lattice)) {
                return Err(Error::Support(format!("hull {} is not 2 cells beyond its region", k + 1)));
            }
            if k + 1 < n && !regions[k + 1].contains_region(&grown(hull, 2.0, &lattice)) {
                return Err(Error::Support(format!("region {} is not 2 cells beyond hull {}", k + 2, k + 1)));
            }
        }
        Ok(Self { regions, hulls, chis })
    }

    /// Nested diamonds of the given radii; χₙ has its plateau `gap` beyond Oₙ
    /// and falls to zero over `ramp`.
    pub fn diamonds(lattice: &Arc<Lattice>, center: &[f64], radii: &[f64], gap: f64, ramp: f64) -> Result<Self> {
        let mut regions = Vec::new();
        let mut hulls = Vec::new();
        let mut chis = Vec::new();
        let pad = lattice.cell_diagonal();
        for &r in radii {
            regions.push(diamond_region(lattice, center, r)?);
            hulls.push(diamond_region(lattice, center, r + gap + ramp + pad)?);
            chis.push(diamond_cutoff(lattice, center, r + gap, ramp));
        }
        Self::new(regions, hulls, chis)
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// Oₙ, 1-based.
    pub fn region(&self, n: usize) -> &Region {
        &self.regions[n - 1]
    }

    pub fn hull(&self, n: usize) -> &Region {
        &self.hulls[n - 1]
    }

    pub fn chi(&self, n: usize) -> &GridField {
        &self.chis[n - 1]
    }
}

/// Intertwiners U₁ … U_{N−1}, Uₖ taking χₖ to χₖ₊₁ around Oₖ.
pub fn family_intertwiners(
    table: &GeneratorTable,
    v: &InteractionPotential,
    fam: &CutoffFamily,
) -> Result<Vec<Intertwiner>> {
    (1..fam.len())
        .map(|k| chi_intertwiner(table, v, fam.chi(k), fam.chi(k + 1), fam.region(k), &[]))
        .collect()
}

fn check_level(fam: &CutoffFamily, n: usize) -> Result<()> {
    if n == 0 || n > fam.len() {
        return Err(Error::Invalid(format!("level {n} outside 1..={}", fam.len())));
    }
    Ok(())
}

/// U₁ ⋯ U_{n−1}, unreduced.
fn prefix(us: &[Intertwiner], n: usize) -> AlgebraWord {
    let words: Vec<&AlgebraWord> = us[..n - 1].iter().map(|u| &u.raw).collect();
    concat(&words)
}

/// γₙ(F) = Yₙ⁻¹ B_{χₙ}(F) Yₙ with Yₙ = V_{n,n−1} ⋯ V_{2,1} and V_{k+1,k} = Uₖ⁻¹.
pub fn nested_embedding(
    table: &GeneratorTable,
    v: &InteractionPotential,
    fam: &CutoffFamily,
    f: &LocalFunctional,
    n: usize,
) -> Result<AlgebraWord> {
    check_level(fam, n)?;
    check_inside(f, fam.region(n))?;
    let us = family_intertwiners(table, v, fam)?;
    let p = prefix(&us, n);
    let b = bogoliubov_raw(table, &localize_potential(v, fam.chi(n))?, f)?;
    Ok(concat(&[&p, &b, &inverse_raw(&p)]).reduced())
}

/// Proof of γ_{n+1}(F) = γₙ(F) for F in Oₙ.
pub fn verify_coherence(
    table: &GeneratorTable,
    v: &InteractionPotential,
    fam: &CutoffFamily,
    f: &LocalFunctional,
    n: usize,
) -> Result<ProofResult> {
    check_level(fam, n)?;
    check_level(fam, n + 1)?;
    check_inside(f, fam.region(n))?;
    let us = family_intertwiners(table, v, fam)?;
    let p = prefix(&us, n);
    let u = &us[n - 1];
    let big = bogoliubov_raw(table, &localize_potential(v, fam.chi(n + 1))?, f)?;
    let small = bogoliubov_raw(table, &localize_potential(v, fam.chi(n))?, f)?;
    let lhs = concat(&[&p, &u.raw, &big, &inverse_raw(&u.raw), &inverse_raw(&p)]);
    let rhs = concat(&[&p, &small, &inverse_raw(&p)]);
    let mut r = Rewriter::new(table, lhs.clone());
    normalize_keep(&mut r)?;
    if !f.is_constant() || !v.is_zero() {
        u.steps(&mut r, p.letters.len() + u.raw.letters.len(), f)?;
    }
    r.normalize()?;
    let (_, left) = r.into_parts();
    let mut s = Rewriter::new(table, rhs.clone());
    s.normalize()?;
    let (_, right) = s.into_parts();
    ProofResult::from_certificate(table, &lhs, &rhs, Certificate { left, right })
}

/// The Weyl relation for the images of φ(f) and φ(g) under a quadratic
/// interaction Δg₂χ, which shifts the mass to m'² = m² − 2Δg₂.
#[derive(Debug, Clone)]
pub struct ShiftedWeyl {
    pub proof: ProofResult,
    /// Phase θ with B(φ(f))B(φ(g)) = e^{iθ} B(φ(f+g)) read from the proof.
    pub symbolic_angle: f64,
    /// −½⟨f, Δ'g⟩ at the shifted mass.
    pub expected_angle: f64,
    pub shifted_mass: f64,
}

impl ShiftedWeyl {
    pub fn discrepancy(&self) -> f64 {
        let a = num_complex::Complex64::from_polar(1.0, self.symbolic_angle);
        let b = num_complex::Complex64::from_polar(1.0, self.expected_angle);
        (a - b).norm()
    }
}

pub fn shifted_mass_weyl(
    table: &GeneratorTable,
    dg2: f64,
    chi: &GridField,
    f: &GridField,
    g: &GridField,
) -> Result<ShiftedWeyl> {
    let m = table.lagrangian().mass;
    let m2 = m * m - 2.0 * dg2;
    if m2 < 0.0 {
        return Err(Error::NegativeMass);
    }
    let mp = m2.sqrt();
    let v = InteractionPotential::new(vec![0.0, 0.0, dg2]);
    let vchi = localize_potential(&v, chi)?;
    let split = split_causal_with(
        f,
        g.support(),
        mp,
        table.margin(),
        SplitDirection::Future,
        Slab::default(),
    )?;
    plateau_violation(chi, &[("f", f), ("g", g), ("phi0", &split.phi0), ("f0", &split.f0)])?;
    let ff = weyl_functional(f, mp)?;
    let fg = weyl_functional(g, mp)?;
    let sum = f.add(g)?;
    let fs = weyl_functional(&sum, mp)?;
    let lhs = concat(&[&bogoliubov_raw(table, &vchi, &ff)?, &bogoliubov_raw(table, &vchi, &fg)?]);
    let target = bogoliubov_raw(table, &vchi, &fs)?;

    let (off, arity) = if vchi.is_constant() { (0, 2) } else { (1, 3) };
    let mut r = Rewriter::new(table, lhs.clone());
    normalize_keep(&mut r)?;
    if split.is_trivial() {
        r.apply(Move::CausalMerge { pos: off, arity })?;
    } else {
        let phi0 = Arc::new(split.phi0.clone());
        r.apply(Move::DynSplit { pos: off, phi0: phi0.clone() })?;
        normalize_keep(&mut r)?;
        for pos in off + 1..r.word().letters.len() - 1 {
            r.apply(Move::DynCommute { pos, phi0: phi0.clone() })?;
        }
        r.apply(Move::CausalMerge { pos: off, arity })?;
        r.apply(Move::DynMerge { pos: off, phi0 })?;
    }
    normalize_keep(&mut r)?;
    let reached = r.word().clone();
    if reached.letters != target.letters {
        return Err(Error::Tactic {
            tactic: "shifted_mass_weyl",
            reason: "script did not reach the image of phi(f+g)".into(),
        });
    }
    let symbolic_angle = reached.phase.add(target.phase.neg()).angle();
    let (_, left) = r.into_parts();
    let rhs = target.with_phase(target.phase.add(Phase::from_angle(symbolic_angle)));
    let proof = ProofResult::from_certificate(table, &lhs, &rhs, Certificate { left, right: Vec::new() })?;
    let expected_angle = -0.5 * commutator_pairing(f, g, mp)?;
    Ok(ShiftedWeyl {
        proof,
        symbolic_angle,
        expected_angle,
        shifted_mass: mp,
    })
}
