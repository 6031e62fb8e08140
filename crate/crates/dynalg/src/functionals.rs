//! Local polynomial functionals F[φ] = c + Σ_{n≥1} ∫ g_n φⁿ, Lagrangians and
//! relative actions.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{GridField, Lattice};
use crate::propagator::kg_apply;
use crate::spacetime::{PoincareMap, Region};

/// Entries at or below this fraction of the largest summand are roundoff and set to zero.
pub const FLUSH_REL: f64 = 1e-12;
/// Canonical equality threshold (strict).
pub const CANONICAL_TOL: f64 = 1e-9;

/// Σ s_i f_i with roundoff-level entries flushed to exact zero.
pub fn combine(lattice: &Arc<Lattice>, terms: &[(f64, &GridField)]) -> Result<GridField> {
    let mut data = vec![0.0; lattice.len()];
    let mut scale = 0.0f64;
    for (s, f) in terms {
        if **f.lattice() != **lattice {
            return Err(Error::LatticeMismatch);
        }
        if *s == 0.0 {
            continue;
        }
        scale = scale.max(s.abs() * f.max_abs());
        for (d, v) in data.iter_mut().zip(f.data()) {
            *d += s * v;
        }
    }
    Ok(GridField::from_samples(lattice, data)?.flushed(FLUSH_REL * scale))
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[derive(Debug, Clone)]
pub struct LocalFunctional {
    lattice: Arc<Lattice>,
    constant: f64,
    /// coeffs[n - 1] = g_n.
    coeffs: Vec<GridField>,
}

impl LocalFunctional {
    pub fn new(lattice: &Arc<Lattice>, constant: f64, coeffs: Vec<GridField>) -> Result<Self> {
        for g in &coeffs {
            if **g.lattice() != **lattice {
                return Err(Error::LatticeMismatch);
            }
        }
        let mut f = Self {
            lattice: lattice.clone(),
            constant,
            coeffs,
        };
        f.trim();
        Ok(f)
    }

    /// Folds a g₀ density into the scalar constant.
    pub fn with_density(
        lattice: &Arc<Lattice>,
        constant: f64,
        g0: &GridField,
        coeffs: Vec<GridField>,
    ) -> Result<Self> {
        g0.same_lattice(&GridField::zeros(lattice))?;
        Self::new(lattice, constant + g0.integral(), coeffs)
    }

    pub fn zero(lattice: &Arc<Lattice>) -> Self {
        Self::constant(lattice, 0.0)
    }

    pub fn constant(lattice: &Arc<Lattice>, c: f64) -> Self {
        Self {
            lattice: lattice.clone(),
            constant: c,
            coeffs: Vec::new(),
        }
    }

    /// φ(f) + c.
    pub fn linear(f: &GridField, c: f64) -> Self {
        Self::new(f.lattice(), c, vec![f.clone()]).expect("same lattice")
    }

    /// ∫ g φⁿ.
    pub fn monomial(g: &GridField, n: usize) -> Self {
        assert!(n >= 1, "monomial degree starts at 1");
        let mut coeffs = vec![GridField::zeros(g.lattice()); n];
        coeffs[n - 1] = g.clone();
        Self::new(g.lattice(), 0.0, coeffs).expect("same lattice")
    }

    fn trim(&mut self) {
        while self.coeffs.last().is_some_and(|g| g.is_zero()) {
            self.coeffs.pop();
        }
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn constant_part(&self) -> f64 {
        self.constant
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len()
    }

    /// g_n for n ≥ 1, `None` beyond the degree.
    pub fn coefficient(&self, n: usize) -> Option<&GridField> {
        if n == 0 {
            return None;
        }
        self.coeffs.get(n - 1)
    }

    pub fn coefficients(&self) -> &[GridField] {
        &self.coeffs
    }

    /// No field dependence.
    pub fn is_constant(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.is_constant() && self.constant == 0.0
    }

    pub fn without_constant(&self) -> Self {
        Self {
            lattice: self.lattice.clone(),
            constant: 0.0,
            coeffs: self.coeffs.clone(),
        }
    }

    pub fn with_constant(&self, c: f64) -> Self {
        Self {
            lattice: self.lattice.clone(),
            constant: c,
            coeffs: self.coeffs.clone(),
        }
    }

    pub fn evaluate(&self, phi: &GridField) -> Result<f64> {
        let mut total = self.constant;
        let mut power = phi.clone();
        for (i, g) in self.coeffs.iter().enumerate() {
            if i > 0 {
                power = power.mul(phi)?;
            }
            total += g.pair(&power)?;
        }
        Ok(total)
    }

    /// Σ s_i F_i, coefficient-wise with flushing; constants add exactly.
    pub fn linear_combination(terms: &[(f64, &LocalFunctional)]) -> Result<Self> {
        let lattice = terms
            .first()
            .map(|(_, f)| f.lattice.clone())
            .ok_or_else(|| Error::Invalid("empty combination".into()))?;
        let degree = terms.iter().map(|(_, f)| f.degree()).max().unwrap_or(0);
        let mut constant = 0.0;
        for (s, f) in terms {
            if *f.lattice != *lattice {
                return Err(Error::LatticeMismatch);
            }
            constant += s * f.constant;
        }
        let mut coeffs = Vec::with_capacity(degree);
        for n in 1..=degree {
            let parts: Vec<(f64, &GridField)> = terms
                .iter()
                .filter_map(|(s, f)| f.coefficient(n).map(|g| (*s, g)))
                .collect();
            coeffs.push(combine(&lattice, &parts)?);
        }
        Self::new(&lattice, constant, coeffs)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        Self::linear_combination(&[(1.0, self), (1.0, other)])
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        Self::linear_combination(&[(1.0, self), (-1.0, other)])
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut f = Self {
            lattice: self.lattice.clone(),
            constant: s * self.constant,
            coeffs: self.coeffs.iter().map(|g| g.scale(s)).collect(),
        };
        f.trim();
        f
    }

    pub fn add_constant(&self, c: f64) -> Self {
        self.with_constant(self.constant + c)
    }

    /// F^{φ₀}[φ] = F[φ + φ₀] by binomial re-expansion.
    pub fn shift(&self, phi0: &GridField) -> Result<Self> {
        phi0.same_lattice(&GridField::zeros(&self.lattice))?;
        if phi0.is_zero() {
            return Ok(self.clone());
        }
        let big_n = self.degree();
        let mut powers = vec![GridField::from_fn(&self.lattice, |_| 1.0)];
        for k in 1..=big_n {
            let next = powers[k - 1].mul(phi0)?;
            powers.push(next);
        }
        let mut constant = self.constant;
        for n in 1..=big_n {
            constant += self.coeffs[n - 1].pair(&powers[n])?;
        }
        let mut coeffs = Vec::with_capacity(big_n);
        for k in 1..=big_n {
            let prods: Vec<GridField> = (k..=big_n)
                .map(|n| self.coeffs[n - 1].mul(&powers[n - k]))
                .collect::<Result<_>>()?;
            let parts: Vec<(f64, &GridField)> = (k..=big_n)
                .zip(&prods)
                .map(|(n, p)| (binomial(n, k), p))
                .collect();
            coeffs.push(combine(&self.lattice, &parts)?);
        }
        Self::new(&self.lattice, constant, coeffs)
    }

    /// Union of the supports of g_n, n ≥ 1.
    pub fn support(&self) -> Region {
        self.coeffs
            .iter()
            .fold(Region::empty(self.lattice.dimension()), |r, g| r.union(g.support()))
    }

    /// Largest coefficient difference relative to the largest coefficient of
    /// either side, plus the constant distance relative to max(1, |c|).
    pub fn distance(&self, other: &Self) -> f64 {
        if *self.lattice != *other.lattice {
            return f64::INFINITY;
        }
        let n = self.degree().max(other.degree());
        let scale = self
            .coeffs
            .iter()
            .chain(&other.coeffs)
            .map(|g| g.max_abs())
            .fold(0.0f64, f64::max);
        let mut worst = 0.0f64;
        if scale > 0.0 {
            for k in 1..=n {
                let diff = match (self.coefficient(k), other.coefficient(k)) {
                    (Some(a), Some(b)) => a.data().iter().zip(b.data()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())),
                    (Some(a), None) | (None, Some(a)) => a.max_abs(),
                    (None, None) => 0.0,
                };
                worst = worst.max(diff / scale);
            }
        }
        let cs = 1.0f64.max(self.constant.abs()).max(other.constant.abs());
        worst.max((self.constant - other.constant).abs() / cs)
    }

    /// Canonical equality; distances at the threshold count as distinct.
    pub fn canonical_eq(&self, other: &Self) -> bool {
        self.degree() == other.degree() && self.distance(other) < CANONICAL_TOL
    }

    pub fn poincare_act(&self, p: &PoincareMap) -> Result<Self> {
        let coeffs = self
            .coeffs
            .iter()
            .map(|g| g.poincare_pullback(p).map(|(f, _)| f))
            .collect::<Result<Vec<_>>>()?;
        Self::new(&self.lattice, self.constant, coeffs)
    }

    /// Largest |coefficient| scale, used to normalize defects.
    pub fn scale_measure(&self) -> f64 {
        self.coeffs
            .iter()
            .map(|g| g.max_abs())
            .fold(self.constant.abs(), f64::max)
    }
}

/// F[φ₁+φ₂+φ₃] − F[φ₁+φ₃] + F[φ₃] − F[φ₂+φ₃] for disjointly supported φ₁, φ₂.
pub fn additivity_defect(
    f: &LocalFunctional,
    phi1: &GridField,
    phi2: &GridField,
    phi3: &GridField,
) -> Result<f64> {
    if phi1.data().iter().zip(phi2.data()).any(|(a, b)| *a != 0.0 && *b != 0.0) {
        return Err(Error::OverlappingSupports);
    }
    let p13 = phi1.add(phi3)?;
    let p23 = phi2.add(phi3)?;
    let p123 = p13.add(phi2)?;
    Ok(f.evaluate(&p123)? - f.evaluate(&p13)? + f.evaluate(phi3)? - f.evaluate(&p23)?)
}

/// L = prefactor · [½ ∂φ·∂φ − ½ m² φ² − Σ_n g_n φⁿ].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lagrangian {
    pub mass: f64,
    #[serde(default)]
    pub couplings: Vec<f64>,
    #[serde(default = "one")]
    pub prefactor: f64,
}

fn one() -> f64 {
    1.0
}

/// V = Σ_n Δg_n φⁿ, entering as L_V = L₀ + V.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionPotential {
    pub increments: Vec<f64>,
}

impl InteractionPotential {
    pub fn new(increments: Vec<f64>) -> Self {
        Self { increments }
    }

    pub fn is_zero(&self) -> bool {
        self.increments.iter().all(|g| *g == 0.0)
    }

    /// V(χ): coefficients Δg_n χ, with the n = 0 density folded into the constant.
    pub fn localize(&self, chi: &GridField) -> LocalFunctional {
        let lattice = chi.lattice();
        let constant = self.increments.first().map_or(0.0, |g0| g0 * chi.integral());
        let coeffs = self.increments.iter().skip(1).map(|g| chi.scale(*g)).collect();
        LocalFunctional::new(lattice, constant, coeffs).expect("same lattice")
    }
}

impl Lagrangian {
    pub fn free(mass: f64) -> Result<Self> {
        Self::new(mass, Vec::new())
    }

    pub fn new(mass: f64, couplings: Vec<f64>) -> Result<Self> {
        if mass < 0.0 || !mass.is_finite() {
            return Err(Error::NegativeMass);
        }
        Ok(Self {
            mass,
            couplings,
            prefactor: 1.0,
        })
    }

    /// L₀ + V: couplings g_n − Δg_n.
    pub fn with_potential(&self, v: &InteractionPotential) -> Self {
        let n = self.couplings.len().max(v.increments.len());
        let couplings = (0..n)
            .map(|i| {
                self.couplings.get(i).copied().unwrap_or(0.0)
                    - v.increments.get(i).copied().unwrap_or(0.0) / self.prefactor
            })
            .collect();
        Self {
            mass: self.mass,
            couplings,
            prefactor: self.prefactor,
        }
    }

    /// h · L.
    pub fn scaled(&self, h: f64) -> Self {
        Self {
            mass: self.mass,
            couplings: self.couplings.clone(),
            prefactor: self.prefactor * h,
        }
    }

    pub fn is_free(&self) -> bool {
        self.couplings.iter().skip(1).all(|g| *g == 0.0)
    }

    /// δL(φ₀) = φ(Kφ₀) + ½⟨φ₀, Kφ₀⟩ − Σ_n g_n ∫((φ+φ₀)ⁿ − φⁿ), times the prefactor.
    pub fn relative_action(&self, phi0: &GridField) -> Result<LocalFunctional> {
        let lattice = phi0.lattice().clone();
        let k = kg_apply(phi0, self.mass)?;
        let mut constant = 0.5 * phi0.pair(&k)?;
        let big_n = self.couplings.len().saturating_sub(1);
        let degree = big_n.saturating_sub(1).max(1);
        let mut parts: Vec<Vec<(f64, GridField)>> = vec![Vec::new(); degree];
        parts[0].push((1.0, k));
        let mut powers = vec![GridField::from_fn(&lattice, |_| 1.0)];
        for j in 1..=big_n {
            let next = powers[j - 1].mul(phi0)?;
            powers.push(next);
        }
        for (n, &g) in self.couplings.iter().enumerate().skip(1) {
            if g == 0.0 {
                continue;
            }
            constant -= g * powers[n].integral();
            for k in 1..n {
                parts[k - 1].push((-g * binomial(n, k), powers[n - k].clone()));
            }
        }
        let coeffs = parts
            .iter()
            .map(|p| {
                let refs: Vec<(f64, &GridField)> = p.iter().map(|(s, f)| (*s, f)).collect();
                combine(&lattice, &refs)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LocalFunctional::new(&lattice, constant, coeffs)?.scale(self.prefactor))
    }

    /// d/du δL(uφ₀)[φ] at u = 0: ⟨φ, Kφ₀⟩ − Σ n g_n ∫ φ₀ φ^{n−1}.
    pub fn euler_lagrange(&self, phi0: &GridField, phi: &GridField) -> Result<f64> {
        let k = kg_apply(phi0, self.mass)?;
        let mut total = phi.pair(&k)?;
        let mut power = GridField::from_fn(phi.lattice(), |_| 1.0);
        for (n, &g) in self.couplings.iter().enumerate().skip(1) {
            if n > 1 {
                power = power.mul(phi)?;
            }
            total -= n as f64 * g * phi0.pair(&power)?;
        }
        Ok(self.prefactor * total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lat() -> Arc<Lattice> {
        Arc::new(Lattice::covering(&[-1.0, -2.0], &[1.0, 2.0], 0.05, 1.0).unwrap())
    }

    #[test]
    fn constant_functional_evaluates_to_constant() {
        let l = lat();
        let f = LocalFunctional::constant(&l, 2.5);
        let phi = GridField::bump(&l, &[0.0, 0.0], &[0.4, 0.4], 3.0);
        assert_eq!(f.evaluate(&phi).unwrap(), 2.5);
        assert!(f.support().is_empty());
    }

    #[test]
    fn quadratic_shift_coefficients() {
        let l = lat();
        let g2 = GridField::bump(&l, &[0.0, 0.0], &[0.4, 0.4], 1.0);
        let phi0 = GridField::bump(&l, &[0.1, 0.1], &[0.5, 0.5], 0.7);
        let f = LocalFunctional::monomial(&g2, 2);
        let s = f.shift(&phi0).unwrap();
        assert!((s.constant_part() - g2.pair(&phi0.powi(2)).unwrap()).abs() < 1e-14);
        assert!(s.coefficient(1).unwrap().approx_eq(&g2.mul(&phi0).unwrap().scale(2.0)));
        assert!(s.coefficient(2).unwrap().approx_eq(&g2));
    }

    #[test]
    fn zero_functional_trims() {
        let l = lat();
        let f = LocalFunctional::new(&l, 0.0, vec![GridField::zeros(&l), GridField::zeros(&l)]).unwrap();
        assert!(f.is_zero());
        let g = GridField::bump(&l, &[0.0, 0.0], &[0.4, 0.4], 1.0);
        let a = LocalFunctional::linear(&g, 0.0);
        assert!(a.sub(&a).unwrap().is_zero());
    }

    #[test]
    fn free_relative_action_is_exactly_kinetic() {
        let l = lat();
        let phi0 = GridField::bump(&l, &[0.0, 0.0], &[0.5, 0.5], 1.0);
        let lag = Lagrangian::free(1.0).unwrap();
        let d = lag.relative_action(&phi0).unwrap();
        let k = kg_apply(&phi0, 1.0).unwrap();
        assert_eq!(d.degree(), 1);
        assert!(d.coefficient(1).unwrap().approx_eq(&k));
        assert_eq!(d.constant_part(), 0.5 * phi0.pair(&k).unwrap());
        assert!(lag.relative_action(&GridField::zeros(&l)).unwrap().is_zero());
    }

    #[test]
    fn quartic_relative_action_terms() {
        let l = lat();
        let phi0 = GridField::bump(&l, &[0.0, 0.0], &[0.5, 0.5], 1.0);
        let lag = Lagrangian::new(1.0, vec![0.0, 0.0, 0.0, 0.0, 0.3]).unwrap();
        let d = lag.relative_action(&phi0).unwrap();
        assert_eq!(d.degree(), 3);
        assert!(d.coefficient(3).unwrap().approx_eq(&phi0.scale(-0.3 * 4.0)));
        assert!(d.coefficient(2).unwrap().approx_eq(&phi0.powi(2).scale(-0.3 * 6.0)));
        let phi = GridField::bump(&l, &[0.2, -0.1], &[0.6, 0.6], 0.8);
        let lhs = d.evaluate(&phi).unwrap();
        let direct = {
            let full = phi.add(&phi0).unwrap();
            let k = kg_apply(&phi0, 1.0).unwrap();
            phi.pair(&k).unwrap() + 0.5 * phi0.pair(&k).unwrap()
                - 0.3 * (full.powi(4).integral() - phi.powi(4).integral())
        };
        assert!((lhs - direct).abs() < 1e-10 * direct.abs().max(1.0));
    }

    #[test]
    fn overlapping_supports_rejected() {
        let l = lat();
        let a = GridField::bump(&l, &[0.0, 0.0], &[0.4, 0.4], 1.0);
        let f = LocalFunctional::monomial(&a, 4);
        assert_eq!(
            additivity_defect(&f, &a, &a, &a).unwrap_err(),
            Error::OverlappingSupports
        );
        let z = GridField::zeros(&l);
        assert_eq!(additivity_defect(&f, &a, &z, &a).unwrap(), 0.0);
    }

    #[test]
    fn density_folds_into_constant() {
        let l = lat();
        let g0 = GridField::bump(&l, &[0.0, 0.0], &[0.4, 0.4], 2.0);
        let f = LocalFunctional::with_density(&l, 1.0, &g0, vec![]).unwrap();
        assert!(f.is_constant());
        assert!((f.constant_part() - 1.0 - g0.integral()).abs() < 1e-14);
        assert!((f.constant_part() - 3.0).abs() < 1e-3);
    }
}
