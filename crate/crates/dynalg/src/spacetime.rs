//! Minkowski geometry with signature (+,-,...,-): box regions, the causal
//! order behind the factorization relation, and Poincare maps.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinkowskiConfig {
    dimension: usize,
}

impl MinkowskiConfig {
    pub fn new(dimension: usize) -> Result<Self> {
        if dimension < 2 {
            return Err(Error::Invalid(format!("dimension {dimension} < 2")));
        }
        Ok(Self { dimension })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// g(x, y) = x0 y0 - sum of spatial products.
    pub fn metric(&self, x: &[f64], y: &[f64]) -> f64 {
        x[0] * y[0] - x[1..].iter().zip(&y[1..]).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// Closed axis-aligned box; coordinate 0 is time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cuboid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Cuboid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::Dimension {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a <= b)) {
            return Err(Error::Invalid("box with lo > hi".into()));
        }
        Ok(Self { lo, hi })
    }

    pub fn dimension(&self) -> usize {
        self.lo.len()
    }

    pub fn contains_point(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| *a <= *v && *v <= *b)
    }

    pub fn contains(&self, other: &Cuboid) -> bool {
        (0..self.dimension()).all(|i| self.lo[i] <= other.lo[i] && other.hi[i] <= self.hi[i])
    }

    fn translated(&self, a: &[f64]) -> Cuboid {
        Cuboid {
            lo: self.lo.iter().zip(a).map(|(x, s)| x + s).collect(),
            hi: self.hi.iter().zip(a).map(|(x, s)| x + s).collect(),
        }
    }

    fn vertices(&self) -> Vec<Vec<f64>> {
        let d = self.dimension();
        (0..1usize << d)
            .map(|mask| {
                (0..d)
                    .map(|i| if mask >> i & 1 == 1 { self.hi[i] } else { self.lo[i] })
                    .collect()
            })
            .collect()
    }
}

/// Sup over x in `a`, y in `b` of (y0 - x0 - |y - x|).
fn box_gap(a: &Cuboid, b: &Cuboid) -> f64 {
    let dt = b.hi[0] - a.lo[0];
    let dist2: f64 = (1..a.dimension())
        .map(|i| {
            let s = (a.lo[i] - b.hi[i]).max(b.lo[i] - a.hi[i]).max(0.0);
            s * s
        })
        .sum();
    dt - dist2.sqrt()
}

/// Finite union of closed boxes. `hull` marks over-approximated Lorentz images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    dimension: usize,
    boxes: Vec<Cuboid>,
    #[serde(default)]
    hull: bool,
}

impl Region {
    pub fn empty(dimension: usize) -> Self {
        Self {
            dimension,
            boxes: Vec::new(),
            hull: false,
        }
    }

    pub fn from_boxes(dimension: usize, boxes: Vec<Cuboid>) -> Result<Self> {
        for b in &boxes {
            if b.dimension() != dimension {
                return Err(Error::Dimension {
                    expected: dimension,
                    got: b.dimension(),
                });
            }
        }
        Ok(Self {
            dimension,
            boxes,
            hull: false,
        })
    }

    pub fn single(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let b = Cuboid::new(lo, hi)?;
        Self::from_boxes(b.dimension(), vec![b])
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn boxes(&self) -> &[Cuboid] {
        &self.boxes
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn is_hull(&self) -> bool {
        self.hull
    }

    pub fn union(&self, other: &Region) -> Region {
        let mut boxes = self.boxes.clone();
        boxes.extend(other.boxes.iter().cloned());
        Region {
            dimension: self.dimension,
            boxes,
            hull: self.hull || other.hull,
        }
    }

    pub fn bounding_box(&self) -> Option<Cuboid> {
        let first = self.boxes.first()?;
        let mut lo = first.lo.clone();
        let mut hi = first.hi.clone();
        for b in &self.boxes[1..] {
            for i in 0..self.dimension {
                lo[i] = lo[i].min(b.lo[i]);
                hi[i] = hi[i].max(b.hi[i]);
            }
        }
        Some(Cuboid { lo, hi })
    }

    pub fn translated(&self, a: &[f64]) -> Region {
        Region {
            dimension: self.dimension,
            boxes: self.boxes.iter().map(|b| b.translated(a)).collect(),
            hull: self.hull,
        }
    }

    pub fn contains_point(&self, x: &[f64]) -> bool {
        self.boxes.iter().any(|b| b.contains_point(x))
    }

    /// Exact set containment `other ⊆ self`, decided on the arrangement of box faces.
    pub fn contains_region(&self, other: &Region) -> bool {
        other.boxes.iter().all(|b| self.covers_box(b))
    }

    fn covers_box(&self, b: &Cuboid) -> bool {
        if self.boxes.iter().any(|o| o.contains(b)) {
            return true;
        }
        let d = self.dimension;
        let relevant: Vec<&Cuboid> = self
            .boxes
            .iter()
            .filter(|o| (0..d).all(|i| o.lo[i] <= b.hi[i] && b.lo[i] <= o.hi[i]))
            .collect();
        if relevant.is_empty() {
            return false;
        }
        // Representative coordinates per axis: every breakpoint and every open gap midpoint.
        let samples: Vec<Vec<f64>> = (0..d)
            .map(|i| {
                let mut cuts = vec![b.lo[i], b.hi[i]];
                for o in &relevant {
                    for v in [o.lo[i], o.hi[i]] {
                        if v > b.lo[i] && v < b.hi[i] {
                            cuts.push(v);
                        }
                    }
                }
                cuts.sort_by(f64::total_cmp);
                cuts.dedup();
                let mut reps = Vec::with_capacity(2 * cuts.len());
                for w in cuts.windows(2) {
                    reps.push(w[0]);
                    reps.push(0.5 * (w[0] + w[1]));
                }
                reps.push(*cuts.last().unwrap());
                reps
            })
            .collect();
        let mut idx = vec![0usize; d];
        let mut point = vec![0.0; d];
        loop {
            for i in 0..d {
                point[i] = samples[i][idx[i]];
            }
            if !relevant.iter().any(|o| o.contains_point(&point)) {
                return false;
            }
            let mut axis = 0;
            loop {
                if axis == d {
                    return true;
                }
                idx[axis] += 1;
                if idx[axis] < samples[axis].len() {
                    break;
                }
                idx[axis] = 0;
                axis += 1;
            }
        }
    }
}

/// Sup over x in k1, y in k2 of (y0 - x0 - |y - x|); negative means every point
/// of `k1` lies outside the causal past of `k2`.
pub fn causal_gap(k1: &Region, k2: &Region) -> Result<f64> {
    if k1.is_empty() || k2.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let mut best = f64::NEG_INFINITY;
    for a in &k1.boxes {
        for b in &k2.boxes {
            best = best.max(box_gap(a, b));
        }
    }
    Ok(best)
}

/// `k1` is later than `k2`: a Cauchy surface separates them with `k1` above.
pub fn later_than(k1: &Region, k2: &Region, margin: f64) -> bool {
    match causal_gap(k1, k2) {
        Ok(gap) => gap < -margin,
        Err(_) => true,
    }
}

pub fn spacelike(k1: &Region, k2: &Region, margin: f64) -> bool {
    later_than(k1, k2, margin) && later_than(k2, k1, margin)
}

/// x ↦ Λx + a with Λ proper orthochronous (or absent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoincareMap {
    translation: Vec<f64>,
    lorentz: Option<Vec<f64>>,
}

impl PoincareMap {
    pub fn translation(a: Vec<f64>) -> Self {
        Self {
            translation: a,
            lorentz: None,
        }
    }

    pub fn identity(dimension: usize) -> Self {
        Self::translation(vec![0.0; dimension])
    }

    /// `lorentz` is row-major d×d.
    pub fn new(translation: Vec<f64>, lorentz: Vec<f64>) -> Result<Self> {
        let d = translation.len();
        if lorentz.len() != d * d {
            return Err(Error::InvalidPoincare("Lorentz matrix shape".into()));
        }
        let l = DMatrix::from_row_slice(d, d, &lorentz);
        let mut g = DMatrix::<f64>::identity(d, d);
        for i in 1..d {
            g[(i, i)] = -1.0;
        }
        let defect = (l.transpose() * &g * &l - &g).amax();
        if defect > 1e-12 {
            return Err(Error::InvalidPoincare(format!("metric defect {defect:.3e}")));
        }
        if l[(0, 0)] <= 0.0 {
            return Err(Error::InvalidPoincare("not orthochronous".into()));
        }
        if l.determinant() <= 0.0 {
            return Err(Error::InvalidPoincare("not proper".into()));
        }
        Ok(Self {
            translation,
            lorentz: Some(lorentz),
        })
    }

    /// Boost with rapidity `eta` along spatial axis `axis` (1-based), plus translation.
    pub fn boost(translation: Vec<f64>, axis: usize, eta: f64) -> Result<Self> {
        let d = translation.len();
        if axis == 0 || axis >= d {
            return Err(Error::InvalidPoincare("boost axis".into()));
        }
        let mut m = vec![0.0; d * d];
        for i in 0..d {
            m[i * d + i] = 1.0;
        }
        let (c, s) = (eta.cosh(), eta.sinh());
        m[0] = c;
        m[axis * d + axis] = c;
        m[axis] = s;
        m[axis * d] = s;
        Self::new(translation, m)
    }

    pub fn dimension(&self) -> usize {
        self.translation.len()
    }

    pub fn translation_part(&self) -> &[f64] {
        &self.translation
    }

    pub fn is_translation(&self) -> bool {
        self.lorentz.is_none()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dimension();
        match &self.lorentz {
            None => x.iter().zip(&self.translation).map(|(v, a)| v + a).collect(),
            Some(l) => (0..d)
                .map(|i| (0..d).map(|j| l[i * d + j] * x[j]).sum::<f64>() + self.translation[i])
                .collect(),
        }
    }

    pub fn inverse(&self) -> PoincareMap {
        let d = self.dimension();
        match &self.lorentz {
            None => Self::translation(self.translation.iter().map(|a| -a).collect()),
            Some(l) => {
                let m = DMatrix::from_row_slice(d, d, l);
                // Λ^{-1} = g Λ^T g
                let mut g = DMatrix::<f64>::identity(d, d);
                for i in 1..d {
                    g[(i, i)] = -1.0;
                }
                let inv = &g * m.transpose() * &g;
                let a = nalgebra::DVector::from_column_slice(&self.translation);
                let t = -(&inv * a);
                let mut rows = Vec::with_capacity(d * d);
                for i in 0..d {
                    for j in 0..d {
                        rows.push(inv[(i, j)]);
                    }
                }
                Self {
                    translation: t.iter().copied().collect(),
                    lorentz: Some(rows),
                }
            }
        }
    }
}

pub fn apply_poincare(p: &PoincareMap, k: &Region) -> Region {
    if p.is_translation() {
        return k.translated(&p.translation);
    }
    let d = k.dimension();
    let boxes = k
        .boxes
        .iter()
        .map(|b| {
            let mut lo = vec![f64::INFINITY; d];
            let mut hi = vec![f64::NEG_INFINITY; d];
            for v in b.vertices() {
                let w = p.apply(&v);
                for i in 0..d {
                    lo[i] = lo[i].min(w[i]);
                    hi[i] = hi[i].max(w[i]);
                }
            }
            Cuboid { lo, hi }
        })
        .collect();
    Region {
        dimension: d,
        boxes,
        hull: true,
    }
}
