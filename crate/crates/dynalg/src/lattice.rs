//! Uniform spacetime lattices and real fields sampled on them.
//!
//! Axis 0 is time and is the slowest index, so a time slice is a contiguous
//! block of samples.

use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spacetime::{apply_poincare, Cuboid, PoincareMap, Region};

/// Relative threshold below which samples do not count towards a support.
pub const SUPPORT_ZETA: f64 = 1e-12;
/// Relative L∞ distance under which two fields are the same.
pub const FIELD_EQ_TOL: f64 = 1e-9;

/// ∫_{-1}^{1} exp(-1/(1-s²)) ds.
pub const BUMP_INTEGRAL: f64 = 0.443_993_816_168_079_4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LatticeSpec", into = "LatticeSpec")]
pub struct Lattice {
    origin: Vec<f64>,
    spacing: Vec<f64>,
    counts: Vec<usize>,
    periodic: bool,
    strides: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub origin: Vec<f64>,
    pub spacing: Vec<f64>,
    pub counts: Vec<usize>,
    #[serde(default)]
    pub periodic: bool,
}

impl TryFrom<LatticeSpec> for Lattice {
    type Error = Error;
    fn try_from(s: LatticeSpec) -> Result<Self> {
        Lattice::with_boundary(s.origin, s.spacing, s.counts, s.periodic)
    }
}

impl From<Lattice> for LatticeSpec {
    fn from(l: Lattice) -> Self {
        LatticeSpec {
            origin: l.origin,
            spacing: l.spacing,
            counts: l.counts,
            periodic: l.periodic,
        }
    }
}

impl Lattice {
    pub fn new(origin: Vec<f64>, spacing: Vec<f64>, counts: Vec<usize>) -> Result<Self> {
        Self::with_boundary(origin, spacing, counts, false)
    }

    /// `periodic` wraps the spatial axes; time is never periodic.
    pub fn with_boundary(
        origin: Vec<f64>,
        spacing: Vec<f64>,
        counts: Vec<usize>,
        periodic: bool,
    ) -> Result<Self> {
        let d = origin.len();
        if d < 2 || spacing.len() != d || counts.len() != d {
            return Err(Error::InvalidLattice("axis lists must share a length ≥ 2".into()));
        }
        if spacing.iter().any(|h| !(*h > 0.0) || !h.is_finite()) {
            return Err(Error::InvalidLattice("spacings must be positive".into()));
        }
        if counts.iter().any(|&n| n < 5) {
            return Err(Error::InvalidLattice("each axis needs at least 5 points".into()));
        }
        let courant: f64 = spacing[1..].iter().map(|h| (spacing[0] / h).powi(2)).sum();
        if courant > 1.0 + 1e-12 {
            return Err(Error::InvalidLattice(format!(
                "time step violates dt ≤ dx/√(d-1) (Courant sum {courant:.4})"
            )));
        }
        let mut strides = vec![1usize; d];
        for i in (0..d - 1).rev() {
            strides[i] = strides[i + 1] * counts[i + 1];
        }
        Ok(Self {
            origin,
            spacing,
            counts,
            periodic,
            strides,
        })
    }

    /// Largest stable leapfrog step for mass `m` on spatial spacing `dx`, shrunk by 0.1%.
    pub fn stable_time_step(dx: f64, dimension: usize, m: f64) -> f64 {
        0.999 * dx / ((dimension - 1) as f64 + 0.25 * m * m * dx * dx).sqrt()
    }

    /// Lattice covering `[lo, hi]` per axis with spatial spacing `dx` and a stable time step.
    pub fn covering(lo: &[f64], hi: &[f64], dx: f64, m: f64) -> Result<Self> {
        let d = lo.len();
        let dt = Self::stable_time_step(dx, d, m);
        let mut spacing = vec![dx; d];
        spacing[0] = dt;
        let counts = (0..d)
            .map(|i| ((hi[i] - lo[i]) / spacing[i]).ceil() as usize + 1)
            .collect();
        Self::new(lo.to_vec(), spacing, counts)
    }

    pub fn dimension(&self) -> usize {
        self.origin.len()
    }
    pub fn origin(&self) -> &[f64] {
        &self.origin
    }
    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }
    pub fn strides(&self) -> &[usize] {
        &self.strides
    }
    pub fn is_periodic(&self) -> bool {
        self.periodic
    }
    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn slice_len(&self) -> usize {
        self.strides[0]
    }
    pub fn dt(&self) -> f64 {
        self.spacing[0]
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Default causal margin.
    pub fn cell_diagonal(&self) -> f64 {
        self.spacing.iter().map(|h| h * h).sum::<f64>().sqrt()
    }

    pub fn coordinate(&self, axis: usize, i: usize) -> f64 {
        self.origin[axis] + i as f64 * self.spacing[axis]
    }

    pub fn upper(&self, axis: usize) -> f64 {
        self.coordinate(axis, self.counts[axis] - 1)
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dimension()];
        for (i, s) in self.strides.iter().enumerate() {
            idx[i] = flat / s;
            flat %= s;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .enumerate()
            .map(|(a, &i)| self.coordinate(a, i))
            .collect()
    }

    pub fn bounding_box(&self) -> Cuboid {
        Cuboid {
            lo: self.origin.clone(),
            hi: (0..self.dimension()).map(|a| self.upper(a)).collect(),
        }
    }

    /// Trapezoid weight of one sample (cell volume included).
    pub fn weight(&self, idx: &[usize]) -> f64 {
        let mut w = self.cell_volume();
        for (a, &i) in idx.iter().enumerate() {
            let wraps = self.periodic && a > 0;
            if !wraps && (i == 0 || i + 1 == self.counts[a]) {
                w *= 0.5;
            }
        }
        w
    }
}

/// Real samples on a lattice.
#[derive(Debug, Clone)]
pub struct GridField {
    lattice: Arc<Lattice>,
    data: Vec<f64>,
    support: OnceLock<Region>,
}

impl GridField {
    pub fn zeros(lattice: &Arc<Lattice>) -> Self {
        Self::from_samples(lattice, vec![0.0; lattice.len()]).unwrap()
    }

    pub fn from_samples(lattice: &Arc<Lattice>, data: Vec<f64>) -> Result<Self> {
        if data.len() != lattice.len() {
            return Err(Error::InvalidLattice(format!(
                "expected {} samples, got {}",
                lattice.len(),
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite sample".into()));
        }
        Ok(Self {
            lattice: lattice.clone(),
            data,
            support: OnceLock::new(),
        })
    }

    pub fn from_fn(lattice: &Arc<Lattice>, f: impl Fn(&[f64]) -> f64) -> Self {
        let data = (0..lattice.len()).map(|i| f(&lattice.point(i))).collect();
        Self::from_samples(lattice, data).expect("finite samples")
    }

    /// Product exp-bump centred at `center` with half-widths `radii`, scaled so the
    /// continuum integral equals `mass`. Support is the open box center ± radii.
    pub fn bump(lattice: &Arc<Lattice>, center: &[f64], radii: &[f64], mass: f64) -> Self {
        let norm: f64 = radii.iter().map(|r| r * BUMP_INTEGRAL).product();
        Self::from_fn(lattice, |x| {
            let mut v = mass / norm;
            for ((xi, c), r) in x.iter().zip(center).zip(radii) {
                v *= bump_profile((xi - c) / r);
                if v == 0.0 {
                    break;
                }
            }
            v
        })
    }

    /// 1 on `inner`, falling to 0 across a C² ramp of width `ramp` outside it.
    pub fn plateau(lattice: &Arc<Lattice>, inner: &Cuboid, ramp: f64) -> Self {
        Self::from_fn(lattice, |x| {
            let mut v = 1.0;
            for (a, xi) in x.iter().enumerate() {
                let outside = (inner.lo[a] - xi).max(xi - inner.hi[a]).max(0.0);
                v *= 1.0 - smooth_step(outside / ramp);
            }
            v
        })
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn same_lattice(&self, other: &GridField) -> Result<()> {
        if Arc::ptr_eq(&self.lattice, &other.lattice) || *self.lattice == *other.lattice {
            Ok(())
        } else {
            Err(Error::LatticeMismatch)
        }
    }

    fn with_data(&self, data: Vec<f64>) -> GridField {
        GridField {
            lattice: self.lattice.clone(),
            data,
            support: OnceLock::new(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridField {
        self.with_data(self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(&self, other: &GridField, f: impl Fn(f64, f64) -> f64) -> Result<GridField> {
        self.same_lattice(other)?;
        Ok(self.with_data(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn add(&self, other: &GridField) -> Result<GridField> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &GridField) -> Result<GridField> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &GridField) -> Result<GridField> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> GridField {
        self.map(|v| s * v)
    }

    /// `self + s·other`.
    pub fn axpy(&self, s: f64, other: &GridField) -> Result<GridField> {
        self.zip_with(other, |a, b| a + s * b)
    }

    pub fn powi(&self, n: i32) -> GridField {
        self.map(|v| v.powi(n))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    /// Zero every sample with |v| ≤ threshold.
    pub fn flushed(mut self, threshold: f64) -> GridField {
        for v in &mut self.data {
            if v.abs() <= threshold {
                *v = 0.0;
            }
        }
        self.support = OnceLock::new();
        self
    }

    /// Relative L∞ distance, 0 when both fields vanish.
    pub fn rel_distance(&self, other: &GridField) -> f64 {
        let scale = self.max_abs().max(other.max_abs());
        if scale == 0.0 {
            return 0.0;
        }
        let diff = self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        diff / scale
    }

    pub fn approx_eq(&self, other: &GridField) -> bool {
        self.same_lattice(other).is_ok() && self.rel_distance(other) <= FIELD_EQ_TOL
    }

    /// Trapezoid quadrature of ∫ self · other.
    pub fn pair(&self, other: &GridField) -> Result<f64> {
        self.same_lattice(other)?;
        Ok(weighted_sum(&self.lattice, |i| self.data[i] * other.data[i]))
    }

    pub fn integral(&self) -> f64 {
        weighted_sum(&self.lattice, |i| self.data[i])
    }

    pub fn norm_l2(&self) -> f64 {
        weighted_sum(&self.lattice, |i| self.data[i] * self.data[i]).sqrt()
    }

    /// Value at the lattice point nearest to `x` (no interpolation).
    pub fn nearest(&self, x: &[f64]) -> f64 {
        let l = &self.lattice;
        let idx: Vec<usize> = (0..l.dimension())
            .map(|a| {
                let r = ((x[a] - l.origin[a]) / l.spacing[a]).round();
                r.clamp(0.0, (l.counts[a] - 1) as f64) as usize
            })
            .collect();
        self.data[l.flat_index(&idx)]
    }

    /// Time-reversed copy (t ↦ t_first + t_last - t on the lattice).
    pub fn time_reflected(&self) -> GridField {
        let l = &self.lattice;
        let s = l.slice_len();
        let nt = l.counts[0];
        let mut out = vec![0.0; self.data.len()];
        for n in 0..nt {
            out[n * s..(n + 1) * s].copy_from_slice(&self.data[(nt - 1 - n) * s..(nt - n) * s]);
        }
        self.with_data(out)
    }

    /// Boxes covering every sample with |v| > ζ·max|v|.
    pub fn support(&self) -> &Region {
        self.support.get_or_init(|| self.compute_support())
    }

    /// The support leaves the outermost lattice layer untouched.
    pub fn is_compact(&self) -> bool {
        self.margin_cells() >= 1
    }

    /// Number of zero boundary layers, minimized over non-wrapping axes.
    pub fn margin_cells(&self) -> usize {
        let l = &self.lattice;
        let ix = self.support_index_boxes();
        if ix.is_empty() {
            return usize::MAX;
        }
        let mut m = usize::MAX;
        for (lo, hi) in &ix {
            for a in 0..l.dimension() {
                if l.periodic && a > 0 {
                    continue;
                }
                m = m.min(lo[a]).min(l.counts[a] - 1 - hi[a]);
            }
        }
        m
    }

    fn threshold(&self) -> f64 {
        SUPPORT_ZETA * self.max_abs()
    }

    /// Index boxes from runs along the last axis, merged along the others.
    pub(crate) fn support_index_boxes(&self) -> Vec<(Vec<usize>, Vec<usize>)> {
        let l = &self.lattice;
        let d = l.dimension();
        let max = self.max_abs();
        if max == 0.0 {
            return Vec::new();
        }
        let thr = self.threshold();
        let n_last = l.counts[d - 1];
        let mut boxes: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
        for (line, chunk) in self.data.chunks(n_last).enumerate() {
            let prefix = l.multi_index(line * n_last);
            let mut j = 0;
            while j < n_last {
                if chunk[j].abs() > thr {
                    let start = j;
                    while j + 1 < n_last && chunk[j + 1].abs() > thr {
                        j += 1;
                    }
                    let mut lo = prefix.clone();
                    let mut hi = prefix.clone();
                    lo[d - 1] = start;
                    hi[d - 1] = j;
                    boxes.push((lo, hi));
                }
                j += 1;
            }
        }
        for axis in (0..d - 1).rev() {
            boxes.sort_by(|a, b| {
                let key = |x: &(Vec<usize>, Vec<usize>)| {
                    let mut k: Vec<usize> = Vec::with_capacity(2 * d);
                    for i in 0..d {
                        if i != axis {
                            k.push(x.0[i]);
                            k.push(x.1[i]);
                        }
                    }
                    k.push(x.0[axis]);
                    k
                };
                key(a).cmp(&key(b))
            });
            let mut merged: Vec<(Vec<usize>, Vec<usize>)> = Vec::with_capacity(boxes.len());
            for b in boxes {
                if let Some(last) = merged.last_mut() {
                    let same_rest = (0..d)
                        .filter(|&i| i != axis)
                        .all(|i| last.0[i] == b.0[i] && last.1[i] == b.1[i]);
                    if same_rest && last.1[axis] + 1 == b.0[axis] {
                        last.1[axis] = b.1[axis];
                        continue;
                    }
                }
                merged.push(b);
            }
            boxes = merged;
        }
        boxes
    }

    fn compute_support(&self) -> Region {
        let l = &self.lattice;
        let boxes = self
            .support_index_boxes()
            .into_iter()
            .map(|(lo, hi)| Cuboid {
                lo: lo.iter().enumerate().map(|(a, &i)| l.coordinate(a, i)).collect(),
                hi: hi.iter().enumerate().map(|(a, &i)| l.coordinate(a, i)).collect(),
            })
            .collect();
        let mut region = Region::from_boxes(l.dimension(), boxes).expect("dimension");
        if l.periodic && !region.is_empty() {
            // On a periodic lattice only the time extent of a support is meaningful.
            let bb = region.bounding_box().unwrap();
            let mut lo = bb.lo.clone();
            let mut hi = bb.hi.clone();
            for a in 1..l.dimension() {
                lo[a] = l.origin[a];
                hi[a] = l.upper(a);
            }
            region = Region::single(lo, hi).expect("box");
        }
        region
    }

    /// `x ↦ f(P⁻¹x)`; returns the field and an interpolation error estimate
    /// (zero for lattice-aligned translations).
    pub fn poincare_pullback(&self, p: &PoincareMap) -> Result<(GridField, f64)> {
        let l = self.lattice.clone();
        let d = l.dimension();
        if p.dimension() != d {
            return Err(Error::Dimension {
                expected: d,
                got: p.dimension(),
            });
        }
        if !self.support().is_empty() {
            let img = apply_poincare(p, self.support());
            let lat = Region::from_boxes(d, vec![l.bounding_box()])?;
            if !lat.contains_region(&img) {
                return Err(Error::ImageEscapesLattice);
            }
        }
        if p.is_translation() {
            let shift: Vec<f64> = (0..d)
                .map(|a| p.translation_part()[a] / l.spacing[a])
                .collect();
            if shift.iter().all(|s| (s - s.round()).abs() < 1e-9) {
                let k: Vec<i64> = shift.iter().map(|s| s.round() as i64).collect();
                let mut out = vec![0.0; self.data.len()];
                for (flat, v) in self.data.iter().enumerate() {
                    if *v == 0.0 {
                        continue;
                    }
                    let idx = l.multi_index(flat);
                    let target: Vec<i64> = idx.iter().zip(&k).map(|(&i, &s)| i as i64 + s).collect();
                    if target
                        .iter()
                        .zip(&l.counts)
                        .any(|(&t, &n)| t < 0 || t >= n as i64)
                    {
                        return Err(Error::ImageEscapesLattice);
                    }
                    let t: Vec<usize> = target.iter().map(|&t| t as usize).collect();
                    out[l.flat_index(&t)] = *v;
                }
                return Ok((self.with_data(out), 0.0));
            }
        }
        let inv = p.inverse();
        let data: Vec<f64> = (0..l.len())
            .map(|i| self.interpolate(&inv.apply(&l.point(i))))
            .collect();
        let mut second = 0.0f64;
        for flat in 0..l.len() {
            let idx = l.multi_index(flat);
            for a in 0..d {
                if idx[a] == 0 || idx[a] + 1 == l.counts[a] {
                    continue;
                }
                let s = l.strides[a];
                second = second.max((self.data[flat + s] - 2.0 * self.data[flat] + self.data[flat - s]).abs());
            }
        }
        Ok((self.with_data(data), d as f64 * second / 8.0))
    }

    /// Multilinear interpolation; zero outside the lattice box.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let l = &self.lattice;
        let d = l.dimension();
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0; d];
        for a in 0..d {
            let s = (x[a] - l.origin[a]) / l.spacing[a];
            if s < -1e-12 || s > (l.counts[a] - 1) as f64 + 1e-12 {
                return 0.0;
            }
            let s = s.clamp(0.0, (l.counts[a] - 1) as f64);
            let i = (s.floor() as usize).min(l.counts[a] - 2);
            base[a] = i;
            frac[a] = s - i as f64;
        }
        let mut acc = 0.0;
        for corner in 0..1usize << d {
            let mut w = 1.0;
            let mut flat = 0;
            for a in 0..d {
                let up = corner >> a & 1 == 1;
                w *= if up { frac[a] } else { 1.0 - frac[a] };
                flat += (base[a] + up as usize) * l.strides[a];
            }
            if w != 0.0 {
                acc += w * self.data[flat];
            }
        }
        acc
    }
}

impl PartialEq for GridField {
    fn eq(&self, other: &Self) -> bool {
        self.approx_eq(other)
    }
}

/// Σ w_i term(i) with trapezoid weights; slices summed in a fixed order.
pub(crate) fn weighted_sum(l: &Lattice, term: impl Fn(usize) -> f64) -> f64 {
    let d = l.dimension();
    let s = l.slice_len();
    let nt = l.counts[0];
    let mut total = 0.0;
    let mut idx = vec![0usize; d];
    for n in 0..nt {
        let mut slice = 0.0;
        for k in 0..s {
            let flat = n * s + k;
            let v = term(flat);
            if v == 0.0 {
                continue;
            }
            let mut rem = k;
            idx[0] = n;
            for a in 1..d {
                idx[a] = rem / l.strides[a];
                rem %= l.strides[a];
            }
            slice += l.weight(&idx) * v;
        }
        total += slice;
    }
    total
}

/// exp(-1/(1-s²)) on (-1, 1), zero elsewhere.
pub fn bump_profile(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - s * s)).exp()
    }
}

/// C² monotone step: 0 for u ≤ 0, 1 for u ≥ 1.
pub fn smooth_step(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)
    }
}
