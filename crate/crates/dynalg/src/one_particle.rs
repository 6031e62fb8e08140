//! On-shell one-particle amplitudes of lattice test functions.
//!
//! Each spatial Fourier mode q of the leapfrog recursion oscillates with the
//! discrete frequency θ_q, 4 sin²(θ_q/2) = dt²(λ_q + m²). The amplitude
//!
//!   z_q(f) = √(dt³ V / (2 N sin θ_q)) Σ_n f̂_q(n) e^{i n θ_q}
//!
//! (V the spatial cell volume, N the number of spatial sites) makes
//! ⟨f, g⟩₁ = Σ_q conj(z_q(f)) z_q(g) the lattice two-point function, with
//! ⟨f, Δ g⟩ = 2 Im ⟨f, g⟩₁ holding exactly for the leapfrog propagators.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::lattice::{GridField, Lattice};

/// Discrete frequencies and normalizations of every spatial mode.
#[derive(Debug, Clone)]
pub struct ModeTable {
    lattice: Arc<Lattice>,
    mass: f64,
    theta: Vec<f64>,
    norm: Vec<f64>,
}

impl ModeTable {
    pub fn new(lattice: &Arc<Lattice>, mass: f64) -> Result<Self> {
        if !(mass > 0.0) {
            return Err(Error::OneParticleUndefined);
        }
        let l = lattice;
        let d = l.dimension();
        let n_sites = l.slice_len();
        let dt = l.dt();
        let volume: f64 = l.spacing()[1..].iter().product();
        let mut theta = Vec::with_capacity(n_sites);
        let mut norm = Vec::with_capacity(n_sites);
        for q in 0..n_sites {
            let mut lam = 0.0;
            let mut rem = q;
            for a in 1..d {
                let s = l.strides()[a];
                let qa = rem / s;
                rem %= s;
                let na = l.counts()[a] as f64;
                let h = l.spacing()[a];
                let k = 2.0 * std::f64::consts::PI * qa as f64 / (na * h);
                lam += 4.0 / (h * h) * (0.5 * k * h).sin().powi(2);
            }
            let arg = 0.5 * dt * (lam + mass * mass).sqrt();
            if arg >= 1.0 {
                return Err(Error::Cfl(4.0 * arg * arg));
            }
            let th = 2.0 * arg.asin();
            theta.push(th);
            norm.push((dt.powi(3) * volume / (2.0 * n_sites as f64 * th.sin())).sqrt());
        }
        Ok(Self {
            lattice: lattice.clone(),
            mass,
            theta,
            norm,
        })
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn theta(&self, q: usize) -> f64 {
        self.theta[q]
    }

    /// Signed integer wave index per spatial axis of flat mode `q`.
    pub fn wave_index(&self, q: usize) -> Vec<i64> {
        let l = &self.lattice;
        let mut rem = q;
        (1..l.dimension())
            .map(|a| {
                let s = l.strides()[a];
                let qa = (rem / s) as i64;
                rem %= s;
                let na = l.counts()[a] as i64;
                if qa > na / 2 {
                    qa - na
                } else {
                    qa
                }
            })
            .collect()
    }

    /// Flat mode index of a signed wave index.
    pub fn mode_of(&self, wave: &[i64]) -> usize {
        let l = &self.lattice;
        (1..l.dimension())
            .map(|a| {
                let na = l.counts()[a] as i64;
                wave[a - 1].rem_euclid(na) as usize * l.strides()[a]
            })
            .sum()
    }

    /// z_q(f) for every mode q.
    pub fn amplitudes(&self, f: &GridField) -> Result<Vec<Complex64>> {
        if **f.lattice() != *self.lattice {
            return Err(Error::LatticeMismatch);
        }
        if !f.is_compact() {
            return Err(Error::Support("one-particle amplitudes need compact support".into()));
        }
        let l = &self.lattice;
        let s = l.slice_len();
        let mut planner = FftPlanner::<f64>::new();
        let mut acc = vec![Complex64::new(0.0, 0.0); s];
        let mut buf = vec![Complex64::new(0.0, 0.0); s];
        for (n, row) in f.data().chunks(s).enumerate() {
            if row.iter().all(|&v| v == 0.0) {
                continue;
            }
            for (b, &v) in buf.iter_mut().zip(row) {
                *b = Complex64::new(v, 0.0);
            }
            fft_spatial(l, &mut buf, &mut planner);
            for q in 0..s {
                acc[q] += buf[q] * Complex64::from_polar(1.0, n as f64 * self.theta[q]);
            }
        }
        Ok(acc
            .into_iter()
            .zip(&self.norm)
            .map(|(p, c)| p * *c)
            .collect())
    }

    pub fn inner(&self, f: &GridField, g: &GridField) -> Result<Complex64> {
        let zf = self.amplitudes(f)?;
        let zg = self.amplitudes(g)?;
        Ok(zf.iter().zip(&zg).map(|(a, b)| a.conj() * b).sum())
    }
}

/// In-place forward DFT over the spatial axes of one time slice.
fn fft_spatial(l: &Lattice, buf: &mut [Complex64], planner: &mut FftPlanner<f64>) {
    let d = l.dimension();
    for a in 1..d {
        let n = l.counts()[a];
        let stride = l.strides()[a];
        let fft = planner.plan_fft_forward(n);
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        let block = stride * n;
        for start in 0..buf.len() {
            // Visit each line once: offsets whose index along axis `a` is zero.
            if (start % block) / stride != 0 {
                continue;
            }
            for j in 0..n {
                line[j] = buf[start + j * stride];
            }
            fft.process(&mut line);
            for j in 0..n {
                buf[start + j * stride] = line[j];
            }
        }
    }
}

/// ⟨f, g⟩₁, antilinear in `f`.
pub fn one_particle_inner(f: &GridField, g: &GridField, m: f64) -> Result<Complex64> {
    f.same_lattice(g)?;
    ModeTable::new(f.lattice(), m)?.inner(f, g)
}

/// ‖f‖₁².
pub fn norm1sq(f: &GridField, m: f64) -> Result<f64> {
    let z = ModeTable::new(f.lattice(), m)?.amplitudes(f)?;
    Ok(z.iter().map(|v| v.norm_sqr()).sum())
}
