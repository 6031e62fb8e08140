//! Klein-Gordon operator K = -(□ + m²) on the lattice and its Green operators.
//!
//! The retarded solver is the leapfrog recursion, which is the exact inverse of
//! the second-order stencil. Identities such as K Δ_R f = f, antisymmetry of Δ
//! and the bi-solution property therefore hold to roundoff; discretization error
//! only shows up against continuum oracles.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{GridField, Lattice};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StencilOrder {
    Second,
    Fourth,
}

/// Spatial Laplacian of one time slice with zero ghost values (or wrap-around).
fn laplacian_slice(l: &Lattice, src: &[f64], out: &mut [f64], order: StencilOrder) {
    let d = l.dimension();
    out.iter_mut().for_each(|v| *v = 0.0);
    for a in 1..d {
        let s = l.strides()[a];
        let n = l.counts()[a];
        let h2 = l.spacing()[a] * l.spacing()[a];
        let get = |k: usize, i: usize, off: isize| -> f64 {
            let j = i as isize + off;
            if j >= 0 && (j as usize) < n {
                src[(k as isize + off * s as isize) as usize]
            } else if l.is_periodic() {
                let jw = j.rem_euclid(n as isize);
                src[(k as isize + (jw - i as isize) * s as isize) as usize]
            } else {
                0.0
            }
        };
        for (k, o) in out.iter_mut().enumerate() {
            let i = (k / s) % n;
            let c = src[k];
            *o += match order {
                StencilOrder::Second => (get(k, i, 1) + get(k, i, -1) - 2.0 * c) / h2,
                StencilOrder::Fourth => {
                    (-(get(k, i, 2) + get(k, i, -2)) + 16.0 * (get(k, i, 1) + get(k, i, -1))
                        - 30.0 * c)
                        / (12.0 * h2)
                }
            };
        }
    }
}

fn check_mass(m: f64) -> Result<()> {
    if m < 0.0 || !m.is_finite() {
        Err(Error::NegativeMass)
    } else {
        Ok(())
    }
}

/// dt²(λ_max + m²) for the stencil; leapfrog is stable iff this is below 4.
pub fn courant_number(l: &Lattice, m: f64) -> f64 {
    let lam: f64 = l.spacing()[1..].iter().map(|h| 4.0 / (h * h)).sum();
    l.dt() * l.dt() * (lam + m * m)
}

/// K applied with the given stencil; rows and layers the stencil cannot reach are zero.
pub fn kg_apply_interior(phi: &GridField, m: f64, order: StencilOrder) -> GridField {
    let l = phi.lattice().clone();
    let s = l.slice_len();
    let nt = l.counts()[0];
    let w = match order {
        StencilOrder::Second => 1,
        StencilOrder::Fourth => 2,
    };
    let dt2 = l.dt() * l.dt();
    let src = phi.data();
    let mut out = vec![0.0; src.len()];
    out.par_chunks_mut(s)
        .enumerate()
        .filter(|(n, _)| *n >= w && *n + w < nt)
        .for_each(|(n, row)| {
            let mut lap = vec![0.0; s];
            laplacian_slice(&l, &src[n * s..(n + 1) * s], &mut lap, order);
            let at = |r: usize, k: usize| src[r * s + k];
            for k in 0..s {
                let tt = match order {
                    StencilOrder::Second => (at(n + 1, k) - 2.0 * at(n, k) + at(n - 1, k)) / dt2,
                    StencilOrder::Fourth => {
                        (-(at(n + 2, k) + at(n - 2, k)) + 16.0 * (at(n + 1, k) + at(n - 1, k))
                            - 30.0 * at(n, k))
                            / (12.0 * dt2)
                    }
                };
                row[k] = -tt + lap[k] - m * m * at(n, k);
            }
        });
    let mut f = GridField::from_samples(&l, out).expect("finite");
    if !l.is_periodic() {
        // Spatial layers outside the stencil's reach carry ghost contributions only.
        f = zero_spatial_layers(f, w);
    }
    f
}

fn zero_spatial_layers(f: GridField, w: usize) -> GridField {
    let l = f.lattice().clone();
    let mut data = f.into_data();
    for (flat, v) in data.iter_mut().enumerate() {
        let idx = l.multi_index(flat);
        if (1..l.dimension()).any(|a| idx[a] < w || idx[a] + w >= l.counts()[a]) {
            *v = 0.0;
        }
    }
    GridField::from_samples(&l, data).expect("finite")
}

/// K φ by second-order central differences. Requires two zero boundary layers.
pub fn kg_apply(phi: &GridField, m: f64) -> Result<GridField> {
    check_mass(m)?;
    if phi.margin_cells() < 2 {
        return Err(Error::StencilExceedsLattice);
    }
    let l = phi.lattice().clone();
    let s = l.slice_len();
    let nt = l.counts()[0];
    let dt2 = l.dt() * l.dt();
    let src = phi.data();
    let mut out = vec![0.0; src.len()];
    out.par_chunks_mut(s)
        .enumerate()
        .filter(|(n, _)| *n >= 1 && *n + 1 < nt)
        .for_each(|(n, row)| {
            let mut lap = vec![0.0; s];
            laplacian_slice(&l, &src[n * s..(n + 1) * s], &mut lap, StencilOrder::Second);
            for k in 0..s {
                let tt = (src[(n + 1) * s + k] - 2.0 * src[n * s + k] + src[(n - 1) * s + k]) / dt2;
                row[k] = -tt + lap[k] - m * m * src[n * s + k];
            }
        });
    GridField::from_samples(&l, out)
}

/// Δ_R f: the solution of K ψ = f vanishing before supp f.
pub fn retarded(f: &GridField, m: f64) -> Result<GridField> {
    check_mass(m)?;
    let l = f.lattice().clone();
    let c = courant_number(&l, m);
    if c >= 4.0 {
        return Err(Error::Cfl(c));
    }
    let s = l.slice_len();
    let nt = l.counts()[0];
    let src = f.data();
    if src[..s].iter().any(|&v| v != 0.0) {
        return Err(Error::SupportAtBoundary("past"));
    }
    let dt2 = l.dt() * l.dt();
    let mut psi = vec![0.0; src.len()];
    let mut lap = vec![0.0; s];
    // First row carrying a source: everything before it stays exactly zero.
    let first = (0..nt).find(|&n| src[n * s..(n + 1) * s].iter().any(|&v| v != 0.0));
    let Some(first) = first else {
        return GridField::from_samples(&l, psi);
    };
    for n in first.max(1)..nt - 1 {
        let (done, rest) = psi.split_at_mut((n + 1) * s);
        let cur = &done[n * s..];
        let prev = &done[(n - 1) * s..n * s];
        laplacian_slice(&l, cur, &mut lap, StencilOrder::Second);
        let next = &mut rest[..s];
        let fr = &src[n * s..(n + 1) * s];
        for k in 0..s {
            next[k] = 2.0 * cur[k] - prev[k] + dt2 * (lap[k] - m * m * cur[k] - fr[k]);
        }
    }
    GridField::from_samples(&l, psi)
}

/// Δ_A f: time reflection of Δ_R applied to the reflected source.
pub fn advanced(f: &GridField, m: f64) -> Result<GridField> {
    let l = f.lattice();
    let s = l.slice_len();
    let nt = l.counts()[0];
    if f.data()[(nt - 1) * s..].iter().any(|&v| v != 0.0) {
        return Err(Error::SupportAtBoundary("future"));
    }
    Ok(retarded(&f.time_reflected(), m)?.time_reflected())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PropKind {
    /// Retarded.
    R,
    /// Advanced.
    A,
    /// Dirac, ½(Δ_R + Δ_A).
    D,
    /// Commutator function Δ_R - Δ_A.
    C,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Solver,
    ClosedFormD2,
}

/// Mass plus propagator engine used for every ⟨f, Δ g⟩.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairingBackend {
    pub mass: f64,
    pub engine: Engine,
}

impl PairingBackend {
    pub fn solver(mass: f64) -> Result<Self> {
        check_mass(mass)?;
        Ok(Self {
            mass,
            engine: Engine::Solver,
        })
    }

    pub fn closed_form_d2(mass: f64) -> Result<Self> {
        check_mass(mass)?;
        Ok(Self {
            mass,
            engine: Engine::ClosedFormD2,
        })
    }

    /// Δ_kind g as a field (solver engine only).
    pub fn propagate(&self, g: &GridField, kind: PropKind) -> Result<GridField> {
        if self.engine == Engine::ClosedFormD2 {
            return closed_form_field(g, self.mass, kind);
        }
        let m = self.mass;
        match kind {
            PropKind::R => retarded(g, m),
            PropKind::A => advanced(g, m),
            PropKind::D => Ok(retarded(g, m)?.add(&advanced(g, m)?)?.scale(0.5)),
            PropKind::C => retarded(g, m)?.sub(&advanced(g, m)?),
        }
    }

    /// ⟨f, Δ_kind g⟩.
    pub fn pair_prop(&self, f: &GridField, g: &GridField, kind: PropKind) -> Result<f64> {
        f.same_lattice(g)?;
        match self.engine {
            Engine::Solver => f.pair(&self.propagate(g, kind)?),
            Engine::ClosedFormD2 => closed_form_pair(f, g, self.mass, kind),
        }
    }
}

pub fn pair_prop(f: &GridField, g: &GridField, m: f64, kind: PropKind) -> Result<f64> {
    PairingBackend::solver(m)?.pair_prop(f, g, kind)
}

/// Bessel function J₀: power series for moderate arguments, Hankel asymptotics beyond.
pub fn bessel_j0(z: f64) -> f64 {
    let z = z.abs();
    if z <= 12.0 {
        let q = -0.25 * z * z;
        let mut term = 1.0f64;
        let mut sum = 1.0f64;
        let mut k = 1.0;
        while term.abs() > 1e-17 * sum.abs().max(1e-300) || k < 3.0 {
            term *= q / (k * k);
            sum += term;
            k += 1.0;
            if k > 200.0 {
                break;
            }
        }
        sum
    } else {
        // Hankel expansion: t_k = a_k(0) / z^k, P takes even k, Q odd k, with alternating signs.
        let (mut p, mut qs) = (1.0f64, 0.0f64);
        let mut t = 1.0f64;
        for k in 1..40 {
            let next = t * -((2 * k - 1) as f64).powi(2) / (k as f64 * 8.0 * z);
            if next.abs() >= t.abs() || next.abs() < 1e-18 {
                break;
            }
            t = next;
            let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
            if k % 2 == 0 {
                p += sign * t;
            } else {
                qs += sign * t;
            }
        }
        let chi = z - std::f64::consts::FRAC_PI_4;
        (2.0 / (std::f64::consts::PI * z)).sqrt() * (p * chi.cos() - qs * chi.sin())
    }
}

/// Continuum retarded Green function of K in d = 2: -½ θ(t - |x|) J₀(m √(t² - x²)),
/// with the value halved on the light cone.
pub fn green_retarded_d2(t: f64, x: f64, m: f64) -> f64 {
    let s2 = t * t - x * x;
    if t < 0.0 || s2 < -1e-12 * t * t {
        return 0.0;
    }
    let j = bessel_j0(m * s2.max(0.0).sqrt());
    if s2.abs() <= 1e-12 * t * t.max(1.0) {
        -0.25 * j
    } else {
        -0.5 * j
    }
}

fn nonzero_samples(f: &GridField) -> Vec<(f64, f64, f64)> {
    let l = f.lattice();
    f.data()
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, v)| {
            let idx = l.multi_index(i);
            let p = l.point(i);
            (p[0], p[1], v * l.weight(&idx))
        })
        .collect()
}

fn closed_form_pair(f: &GridField, g: &GridField, m: f64, kind: PropKind) -> Result<f64> {
    if f.lattice().dimension() != 2 {
        return Err(Error::ClosedFormDimension);
    }
    let fs = nonzero_samples(f);
    let gs = nonzero_samples(g);
    let kernel = |tx: f64, xx: f64, ty: f64, xy: f64| -> f64 {
        let r = green_retarded_d2(tx - ty, xx - xy, m);
        let a = green_retarded_d2(ty - tx, xy - xx, m);
        match kind {
            PropKind::R => r,
            PropKind::A => a,
            PropKind::D => 0.5 * (r + a),
            PropKind::C => r - a,
        }
    };
    let partial: Vec<f64> = fs
        .par_iter()
        .map(|&(tx, xx, wf)| {
            let mut acc = 0.0;
            for &(ty, xy, wg) in &gs {
                acc += kernel(tx, xx, ty, xy) * wg;
            }
            wf * acc
        })
        .collect();
    Ok(partial.iter().sum())
}

fn closed_form_field(g: &GridField, m: f64, kind: PropKind) -> Result<GridField> {
    let l = g.lattice().clone();
    if l.dimension() != 2 {
        return Err(Error::ClosedFormDimension);
    }
    let gs = nonzero_samples(g);
    let data: Vec<f64> = (0..l.len())
        .into_par_iter()
        .map(|i| {
            let p = l.point(i);
            let mut acc = 0.0;
            for &(ty, xy, wg) in &gs {
                let r = green_retarded_d2(p[0] - ty, p[1] - xy, m);
                let a = green_retarded_d2(ty - p[0], xy - p[1], m);
                acc += wg
                    * match kind {
                        PropKind::R => r,
                        PropKind::A => a,
                        PropKind::D => 0.5 * (r + a),
                        PropKind::C => r - a,
                    };
            }
            acc
        })
        .collect();
    GridField::from_samples(&l, data)
}
