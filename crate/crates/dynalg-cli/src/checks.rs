//! One function per check kind, each producing a [`CheckRecord`].

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dynalg::algebra::{prove_equal, CertificateDoc, GeneratorTable, Move, ProofResult, ProofStatus, Rewriter};
use dynalg::free_theory::{commutator_pairing, weyl_tactic, FockOracle};
use dynalg::interacting::{
    chi_intertwiner, localize_potential, verify_coherence, verify_future_conjugation, verify_interacting_causal,
    verify_interacting_dynamics, verify_past_factorization,
};
use dynalg::lattice::{GridField, Lattice};
use dynalg::one_particle::norm1sq;
use dynalg::products::{prod, sd_residual, CoherentFunctional, Pairings, ProductKind};
use dynalg::propagator::{kg_apply_interior, retarded, PairingBackend, PropKind, StencilOrder};

use crate::error::CliError;
use crate::report::{CheckRecord, ProofState, ReplayContext, Status, StoredCertificate};
use crate::scenario::{CheckDoc, CheckSpec, EngineDoc, ProductKindDoc, World};
use crate::words::build_word;

#[derive(Default)]
struct Outcome {
    residual: Option<f64>,
    values: BTreeMap<String, f64>,
    proofs: Vec<(String, ProofResult)>,
}

impl Outcome {
    fn residual(r: f64) -> Self {
        Self {
            residual: Some(r),
            ..Self::default()
        }
    }

    fn proof(label: &str, p: ProofResult) -> Self {
        Self {
            proofs: vec![(label.to_string(), p)],
            ..Self::default()
        }
    }
}

fn rt(context: &str) -> impl Fn(dynalg::Error) -> CliError + '_ {
    move |e| CliError::runtime(context, e)
}

/// Deterministic per-check stream derived from the scenario seed.
fn check_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

pub fn run_check(world: &World, context: &ReplayContext, check: &CheckDoc, index: usize, packed: bool) -> CheckRecord {
    let start = Instant::now();
    let table = world.table();
    let outcome = evaluate(world, &table, check, index);
    let tolerance = check.tolerance();
    let mut record = CheckRecord {
        name: check.name.clone(),
        kind: check.spec.kind().to_string(),
        status: Status::Pass,
        residual: None,
        tolerance,
        values: BTreeMap::new(),
        certificates: Vec::new(),
        message: None,
        wall_time_ms: 0.0,
    };
    match outcome.and_then(|o| store(&table, context, o, packed).map(|c| (c.0, c.1))) {
        Err(e) => {
            record.status = Status::Fail;
            record.message = Some(e.to_string());
        }
        Ok((o, certs)) => {
            record.residual = o.residual;
            record.values = o.values;
            let unproven = certs.iter().any(|c| c.status == ProofState::Unproven);
            record.certificates = certs;
            if let Some(r) = o.residual {
                if !(r <= tolerance) {
                    record.status = Status::Fail;
                    record.message = Some(format!("residual {r:.3e} exceeds tolerance {tolerance:.1e}"));
                }
            }
            if unproven && record.status == Status::Pass {
                record.status = Status::Unproven;
                record.message = Some("proof search exhausted its budget".into());
            }
        }
    }
    record.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    record
}

/// Encodes proofs and checks that each one replays on a fresh table.
fn store(
    table: &GeneratorTable,
    context: &ReplayContext,
    mut o: Outcome,
    packed: bool,
) -> Result<(Outcome, Vec<StoredCertificate>), CliError> {
    let fresh = context.table();
    let mut out = Vec::new();
    for (label, p) in std::mem::take(&mut o.proofs) {
        let doc = CertificateDoc::encode(table, &p.lhs, &p.rhs, &p.certificate, packed).map_err(rt("certificate"))?;
        let (status, joined_phase) = match p.status {
            ProofStatus::Proved => {
                let w = doc
                    .replay(&fresh)
                    .map_err(|e| CliError::runtime(format!("certificate {label} does not replay"), e))?;
                (ProofState::Proved, Some(w.phase.raw().to_string()))
            }
            ProofStatus::Unproven => (ProofState::Unproven, None),
        };
        o.values.insert(format!("steps.{label}"), p.steps as f64);
        out.push(StoredCertificate {
            label,
            status,
            joined_phase,
            certificate: doc,
        });
    }
    Ok((o, out))
}

fn evaluate(world: &World, table: &GeneratorTable, check: &CheckDoc, index: usize) -> Result<Outcome, CliError> {
    let m = world.lagrangian.mass;
    let potential = || {
        world
            .potential
            .clone()
            .ok_or_else(|| CliError::Invalid("scenario has no potential".into()))
    };
    match &check.spec {
        CheckSpec::GreenConvergence { center, radii, levels } => green_convergence(&world.lattice, m, center, radii, *levels),
        CheckSpec::PropagatorSymmetry { f, g } => {
            let (f, g) = (world.field(f)?, world.field(g)?);
            propagator_symmetry(&f, &g, m)
        }
        CheckSpec::Weyl { f, g } => {
            let (f, g) = (world.field(f)?, world.field(g)?);
            let (residual, _, p) = weyl_pair(table, &f, &g)?;
            let mut o = Outcome::proof("weyl", p);
            o.residual = Some(residual);
            Ok(o)
        }
        CheckSpec::WeylRandom { count, spacelike } => {
            if *spacelike && world.lattice.is_periodic() {
                return Err(CliError::Invalid("spacelike pairs need a non-periodic lattice".into()));
            }
            let mut rng = check_rng(world.scenario.seed, index);
            let mut o = Outcome::default();
            let mut worst = 0.0f64;
            for k in 0..*count {
                let (f, g) = random_pair(&world.lattice, &mut rng, *spacelike);
                let (r, phase, p) = weyl_pair(table, &f, &g)?;
                if *spacelike {
                    worst = worst.max((phase - Complex64::new(1.0, 0.0)).norm());
                }
                worst = worst.max(r);
                o.proofs.push((format!("pair{k}"), p));
            }
            o.residual = Some(worst);
            Ok(o)
        }
        CheckSpec::Fock { f } => {
            let f = world.field(f)?;
            let oracle = FockOracle::new(&world.lattice, m).map_err(rt("fock oracle"))?;
            let w = oracle.weyl_matrix(&f).map_err(rt("fock image"))?;
            let expect = (-0.5 * norm1sq(&f, m).map_err(rt("one-particle norm"))?).exp();
            let mut o = Outcome::residual((w.vacuum_expectation() - expect).norm());
            o.values
                .insert("truncation_bound".into(), oracle.truncation_bound(&f).map_err(rt("fock"))?);
            o.values.insert("unitarity_defect".into(), w.unitarity_defect());
            Ok(o)
        }
        CheckSpec::CausalMerge { f1, f2 } => {
            let (f1, f2) = (world.functional(f1)?, world.functional(f2)?);
            let lhs = table
                .gen(&f1)
                .map_err(rt("S(F1)"))?
                .multiply(&table.gen(&f2).map_err(rt("S(F2)"))?);
            let rhs = table.gen(&f1.add(&f2).map_err(rt("F1 + F2"))?).map_err(rt("S(F1 + F2)"))?;
            let mut r = Rewriter::new(table, lhs.clone());
            r.apply(Move::CausalMerge { pos: 0, arity: 2 }).map_err(rt("causal merge"))?;
            r.normalize().map_err(rt("normalize"))?;
            let mut s = Rewriter::new(table, rhs.clone());
            s.normalize().map_err(rt("normalize"))?;
            let cert = dynalg::algebra::Certificate {
                left: r.into_parts().1,
                right: s.into_parts().1,
            };
            let p = ProofResult::from_certificate(table, &lhs, &rhs, cert).map_err(rt("causal merge"))?;
            Ok(Outcome::proof("merge", p))
        }
        CheckSpec::Dynamical { phi1, phi2 } => {
            let (p1, p2) = (world.field(phi1)?, world.field(phi2)?);
            let lhs = table
                .gen_dynamical(&p1)
                .map_err(rt("dL(phi1)"))?
                .multiply(&table.gen_dynamical(&p2).map_err(rt("dL(phi2)"))?);
            let sum = p1.add(&p2).map_err(rt("phi1 + phi2"))?;
            let rhs = table.gen_dynamical(&sum).map_err(rt("dL(phi1 + phi2)"))?;
            Ok(Outcome::proof("dynamical", prove_equal(table, &lhs, &rhs, check.budget())))
        }
        CheckSpec::Prove { lhs, rhs } => {
            let a = build_word(world, table, lhs)?;
            let b = build_word(world, table, rhs)?;
            Ok(Outcome::proof("prove", prove_equal(table, &a, &b, check.budget())))
        }
        CheckSpec::InteractingDynamics { chi, f, phi0 } => {
            let v = potential()?;
            let d = verify_interacting_dynamics(
                table,
                &v,
                &world.field(chi)?,
                &world.functional(f)?,
                &world.field(phi0)?,
            )
            .map_err(rt("interacting dynamics"))?;
            let mut o = Outcome::proof("dynamics", d.proof);
            o.residual = Some(d.relative_action_gap);
            Ok(o)
        }
        CheckSpec::InteractingCausal { chi, f1, f2, f3 } => {
            let v = potential()?;
            let p = verify_interacting_causal(
                table,
                &v,
                &world.field(chi)?,
                &world.functional(f1)?,
                &world.functional(f2)?,
                &world.functional(f3)?,
            )
            .map_err(rt("interacting causal factorization"))?;
            Ok(Outcome::proof("causal", p))
        }
        CheckSpec::PastFactorization { chi, f } | CheckSpec::FutureConjugation { chi, f } => {
            let v = potential()?;
            let vchi = localize_potential(&v, &world.field(chi)?).map_err(rt("V(chi)"))?;
            let f = world.functional(f)?;
            let p = if matches!(check.spec, CheckSpec::PastFactorization { .. }) {
                verify_past_factorization(table, &vchi, &f).map_err(rt("past factorization"))?
            } else {
                verify_future_conjugation(table, &vchi, &f).map_err(rt("future conjugation"))?
            };
            Ok(Outcome::proof("factorization", p))
        }
        CheckSpec::Intertwiner {
            chi1,
            chi2,
            region,
            samples,
        } => {
            let v = potential()?;
            let samples = samples
                .iter()
                .map(|s| world.functional(s))
                .collect::<Result<Vec<_>, _>>()?;
            let u = chi_intertwiner(
                table,
                &v,
                &world.field(chi1)?,
                &world.field(chi2)?,
                &world.region(region)?,
                &samples,
            )
            .map_err(rt("intertwiner"))?;
            let mut o = Outcome::default();
            for (k, p) in u.proofs.into_iter().enumerate() {
                o.proofs.push((format!("sample{k}"), p));
            }
            Ok(o)
        }
        CheckSpec::Coherence { family, f, level } => {
            let v = potential()?;
            let fam = world.family(family)?;
            let p = verify_coherence(table, &v, &fam, &world.functional(f)?, *level).map_err(rt("coherence"))?;
            Ok(Outcome::proof("coherence", p))
        }
        CheckSpec::SdResidual { g, phi0, engine } => {
            let p = match engine {
                EngineDoc::Solver => Pairings::solver(m),
                EngineDoc::ClosedForm => Pairings::closed_form(m),
            }
            .map_err(rt("pairings"))?;
            let r = sd_residual(&world.field(g)?, &world.field(phi0)?, &p).map_err(rt("Schwinger-Dyson residual"))?;
            Ok(Outcome::residual(r))
        }
        CheckSpec::ProductAssociativity { f, g, h, product } => {
            let kind = match product {
                ProductKindDoc::Pointwise => ProductKind::Pointwise,
                ProductKindDoc::Star => ProductKind::Star,
                ProductKindDoc::Tord => ProductKind::Tord,
                ProductKindDoc::Wick => ProductKind::Wick,
            };
            let normal = kind == ProductKind::Wick;
            let one = Complex64::new(1.0, 0.0);
            let e = |n: &str| -> Result<CoherentFunctional, CliError> {
                Ok(CoherentFunctional::exp(&world.field(n)?, one).as_normal(normal))
            };
            let (a, b, c) = (e(f)?, e(g)?, e(h)?);
            let p = Pairings::solver(m).map_err(rt("pairings"))?;
            let ctx = rt("product");
            let left = prod(&prod(&a, &b, kind, &p).map_err(&ctx)?, &c, kind, &p).map_err(&ctx)?;
            let right = prod(&a, &prod(&b, &c, kind, &p).map_err(&ctx)?, kind, &p).map_err(&ctx)?;
            let d = left.distance(&right).map_err(&ctx)?;
            Ok(Outcome::residual(d / left.norm().max(1.0)))
        }
    }
}

/// Distance of the symbolic Weyl phase from the numeric one, the symbolic
/// phase itself and the derivation.
fn weyl_pair(table: &GeneratorTable, f: &GridField, g: &GridField) -> Result<(f64, Complex64, ProofResult), CliError> {
    let m = table.lagrangian().mass;
    let d = weyl_tactic(table, f, g).map_err(rt("weyl tactic"))?;
    let numeric = Complex64::from_polar(1.0, -0.5 * commutator_pairing(f, g, m).map_err(rt("commutator"))?);
    let symbolic = d.symbolic_phase();
    Ok(((symbolic - numeric).norm(), symbolic, d.proof))
}

/// Bumps inside the lattice box: `f` before or around `g`, or spacelike to it.
/// Times are scaled by min(time extent, half the spatial extent) so that
/// retarded solutions stay clear of the spatial boundary.
pub fn random_pair(l: &Lattice, rng: &mut ChaCha8Rng, spacelike: bool) -> (GridField, GridField) {
    let l = Arc::new(l.clone());
    let (t0, x0, x1) = (l.origin()[0], l.origin()[1], l.upper(1));
    let xl = x1 - x0;
    let s = (l.upper(0) - t0).min(0.5 * xl);
    let r = s / 16.0;
    let d = l.dimension();
    let mid = |a: usize| 0.5 * (l.origin()[a] + l.upper(a));
    let point = |t: f64, x: f64| -> Vec<f64> {
        let mut p: Vec<f64> = (0..d).map(mid).collect();
        p[0] = t;
        p[1] = x;
        p
    };
    let radii = vec![r; d];
    if spacelike {
        let t = t0 + s * rng.gen_range(0.4..0.6);
        let a = rng.gen_range(0.5..1.0);
        let b = rng.gen_range(-1.0..-0.5);
        let f = GridField::bump(&l, &point(t, x0 + 0.3 * xl), &radii, a);
        let g = GridField::bump(&l, &point(t + rng.gen_range(-r..r), x0 + 0.7 * xl), &radii, b);
        (f, g)
    } else {
        let cx = 0.5 * (x0 + x1);
        let tf = t0 + s * rng.gen_range(0.25..0.45);
        let tg = t0 + s * rng.gen_range(0.25..0.6);
        let jitter = 0.06 * s;
        let f = GridField::bump(&l, &point(tf, cx + rng.gen_range(-jitter..jitter)), &radii, rng.gen_range(0.3..1.0));
        let g = GridField::bump(&l, &point(tg, cx + rng.gen_range(-jitter..jitter)), &radii, rng.gen_range(-1.0..1.0));
        (f, g)
    }
}

fn propagator_symmetry(f: &GridField, g: &GridField, m: f64) -> Result<Outcome, CliError> {
    let b = PairingBackend::solver(m).map_err(rt("backend"))?;
    let pair = |a: &GridField, c: &GridField, k| b.pair_prop(a, c, k).map_err(rt("pairing"));
    let scale = (f.norm_l2() * g.norm_l2()).max(f64::MIN_POSITIVE);
    let anti = (pair(f, g, PropKind::C)? + pair(g, f, PropKind::C)?).abs() / scale;
    let sym = (pair(f, g, PropKind::D)? - pair(g, f, PropKind::D)?).abs() / scale;
    let diag = pair(f, f, PropKind::C)?.abs() / (f.norm_l2() * f.norm_l2()).max(f64::MIN_POSITIVE);
    let mut o = Outcome::residual(anti.max(sym).max(diag));
    o.values.insert("antisymmetry".into(), anti);
    o.values.insert("dirac_symmetry".into(), sym);
    o.values.insert("self_commutator".into(), diag);
    Ok(o)
}

/// Lattice with every spacing divided by 2^k over the same box.
pub fn refine(l: &Lattice, k: u32) -> Result<Lattice, CliError> {
    let s = 2usize.pow(k);
    Lattice::with_boundary(
        l.origin().to_vec(),
        l.spacing().iter().map(|h| h / s as f64).collect(),
        l.counts()
            .iter()
            .enumerate()
            .map(|(a, n)| if a > 0 && l.is_periodic() { n * s } else { (n - 1) * s + 1 })
            .collect(),
        l.is_periodic(),
    )
    .map_err(rt("refinement"))
}

/// ‖K₄ Δ_R f − f‖₂ / ‖f‖₂ with K₄ the fourth-order stencil.
pub fn green_residual(f: &GridField, m: f64) -> Result<f64, CliError> {
    let psi = retarded(f, m).map_err(rt("retarded solve"))?;
    let k = kg_apply_interior(&psi, m, StencilOrder::Fourth);
    Ok(k.sub(f).map_err(rt("residual"))?.norm_l2() / f.norm_l2())
}

fn green_convergence(l: &Arc<Lattice>, m: f64, center: &[f64], radii: &[f64], levels: usize) -> Result<Outcome, CliError> {
    if levels < 2 {
        return Err(CliError::Invalid("green_convergence needs at least 2 levels".into()));
    }
    let mut o = Outcome::default();
    let mut res = Vec::new();
    for k in 0..levels {
        let lk = Arc::new(refine(l, k as u32)?);
        let f = GridField::bump(&lk, center, radii, 1.0);
        let r = green_residual(&f, m)?;
        o.values.insert(format!("residual.{k}"), r);
        res.push(r);
    }
    let order = (res[levels - 2] / res[levels - 1]).log2();
    o.values.insert("order".into(), order);
    o.residual = Some((order - 2.0).abs());
    Ok(o)
}
