use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dynalg::algebra::{normal_form, prove_equal, replay, CertificateDoc, GeneratorTable, ProofResult};
use dynalg::functionals::{InteractionPotential, Lagrangian, LocalFunctional};
use dynalg::interacting::*;
use dynalg::lattice::{GridField, Lattice};
use dynalg::spacetime::{later_than, Cuboid};
use dynalg::Error;

fn lat() -> Arc<Lattice> {
    Arc::new(Lattice::covering(&[-2.0, -3.0], &[2.0, 3.0], 0.1, 1.0).unwrap())
}

fn table(l: &Arc<Lattice>) -> GeneratorTable {
    GeneratorTable::new(l, Lagrangian::free(1.0).unwrap())
}

fn quartic() -> InteractionPotential {
    InteractionPotential::new(vec![0.0, 0.0, 0.0, 0.0, 0.3])
}

fn plateau(l: &Arc<Lattice>) -> GridField {
    let inner = Cuboid::new(vec![-1.2, -1.8], vec![1.2, 1.8]).unwrap();
    GridField::plateau(l, &inner, 0.5)
}

fn bump(l: &Arc<Lattice>, t: f64, x: f64, r: f64, a: f64) -> GridField {
    GridField::bump(l, &[t, x], &[r, r], a)
}

/// c + ∫ a₁ b₁ φ + ∫ a₂ b₂ φ² with bumps near (t, x).
fn functional(l: &Arc<Lattice>, rng: &mut ChaCha8Rng, t: f64, x: f64) -> LocalFunctional {
    let g1 = bump(l, t, x, 0.3, rng.gen_range(-1.0..1.0));
    let g2 = bump(l, t + 0.05, x - 0.05, 0.25, rng.gen_range(-0.5..0.5));
    LocalFunctional::new(l, rng.gen_range(-0.2..0.2), vec![g1, g2]).unwrap()
}

fn replays(t: &GeneratorTable, p: &ProofResult) {
    assert!(p.proved());
    replay(t, &p.lhs, &p.rhs, &p.certificate).unwrap();
    let doc = CertificateDoc::encode(t, &p.lhs, &p.rhs, &p.certificate, true).unwrap();
    let text = serde_json::to_string(&doc).unwrap();
    let back: CertificateDoc = serde_json::from_str(&text).unwrap();
    back.replay(t).unwrap();
}

#[test]
fn localized_potential_is_the_scaled_cutoff() {
    let l = lat();
    let chi = plateau(&l);
    assert!(localize_potential(&InteractionPotential::new(vec![]), &chi).unwrap().is_zero());
    let v = localize_potential(&quartic(), &chi).unwrap();
    assert_eq!(v.degree(), 4);
    for n in 1..4 {
        assert!(v.coefficient(n).is_none_or(|g| g.is_zero()));
    }
    let g4 = v.coefficient(4).unwrap();
    assert!(g4.rel_distance(&chi.scale(0.3)) < 1e-15);
    assert_eq!(v.support(), *chi.support());
}

#[test]
fn bogoliubov_of_zero_is_identity() {
    let l = lat();
    let t = table(&l);
    let vchi = localize_potential(&quartic(), &plateau(&l)).unwrap();
    assert!(bogoliubov(&t, &vchi, &LocalFunctional::zero(&l)).unwrap().is_identity());
}

#[test]
fn past_and_future_factorization() {
    let l = lat();
    let t = table(&l);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let chi = GridField::bump(&l, &[0.6, 0.0], &[0.4, 0.8], 1.0).map(|v| v.min(1.0));
    let vchi = localize_potential(&quartic(), &chi).unwrap();
    let early = functional(&l, &mut rng, -1.0, 0.0);
    let late = functional(&l, &mut rng, 1.5, 0.1);

    let p = verify_past_factorization(&t, &vchi, &early).unwrap();
    replays(&t, &p);
    let searched = prove_equal(&t, &bogoliubov(&t, &vchi, &early).unwrap(), &t.gen(&early).unwrap(), 200);
    assert!(searched.proved());

    let q = verify_future_conjugation(&t, &vchi, &late).unwrap();
    replays(&t, &q);
    let sv = t.gen(&vchi).unwrap();
    let conj = sv.inverse().multiply(&t.gen(&late).unwrap()).multiply(&sv);
    assert!(prove_equal(&t, &bogoliubov(&t, &vchi, &late).unwrap(), &conj, 200).proved());

    assert!(matches!(
        verify_past_factorization(&t, &vchi, &late),
        Err(Error::CausalPremise(_))
    ));
}

#[test]
fn dynamics_without_interaction_is_the_free_relation() {
    let l = lat();
    let t = table(&l);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let chi = plateau(&l);
    let f = functional(&l, &mut rng, 0.2, 0.0);
    let phi0 = bump(&l, 0.0, 0.3, 0.5, 0.4);
    let c = verify_interacting_dynamics(&t, &InteractionPotential::new(vec![]), &chi, &f, &phi0).unwrap();
    replays(&t, &c.proof);
    assert!(c.relative_action_gap < 1e-12);
}

#[test]
fn dynamics_with_zero_shift_is_trivial() {
    let l = lat();
    let t = table(&l);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let f = functional(&l, &mut rng, 0.2, 0.0);
    let c = verify_interacting_dynamics(&t, &quartic(), &plateau(&l), &f, &GridField::zeros(&l)).unwrap();
    assert!(c.proof.proved());
    assert_eq!(c.proof.lhs.clone().reduced().letters, c.proof.rhs.clone().reduced().letters);
}

#[test]
fn quartic_dynamics_on_random_configurations() {
    let l = lat();
    let t = table(&l);
    let chi = plateau(&l);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let f = {
            let (tc, xc) = (rng.gen_range(-0.5..0.5), rng.gen_range(-0.6..0.6));
            functional(&l, &mut rng, tc, xc)
        };
        let phi0 = bump(&l, rng.gen_range(-0.4..0.4), rng.gen_range(-0.6..0.6), 0.45, rng.gen_range(-1.0..1.0));
        let c = verify_interacting_dynamics(&t, &quartic(), &chi, &f, &phi0).unwrap();
        replays(&t, &c.proof);
        assert!(c.proof.certificate.len() <= 12, "{} moves", c.proof.certificate.len());
        assert!(c.relative_action_gap < 1e-10, "{}", c.relative_action_gap);
    }
    let zero = LocalFunctional::zero(&l);
    let bare = verify_interacting_dynamics(&t, &quartic(), &chi, &zero, &bump(&l, 0.0, 0.0, 0.4, 0.5)).unwrap();
    replays(&t, &bare.proof);
}

#[test]
fn dynamics_rejects_support_off_the_plateau() {
    let l = lat();
    let t = table(&l);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let f = functional(&l, &mut rng, 0.0, 0.0);
    let phi0 = bump(&l, 0.0, 1.9, 0.5, 0.4);
    assert!(matches!(
        verify_interacting_dynamics(&t, &quartic(), &plateau(&l), &f, &phi0),
        Err(Error::Plateau(_))
    ));
}

#[test]
fn causal_factorization() {
    let l = lat();
    let t = table(&l);
    let chi = plateau(&l);
    let zero = LocalFunctional::zero(&l);
    let mut rng = ChaCha8Rng::seed_from_u64(5);

    let f1 = functional(&l, &mut rng, 0.7, 0.0);
    let f2 = functional(&l, &mut rng, -0.7, 0.1);
    let free = verify_interacting_causal(&t, &InteractionPotential::new(vec![]), &chi, &f1, &f2, &zero).unwrap();
    replays(&t, &free);

    for _ in 0..5 {
        let x = rng.gen_range(-0.5..0.5);
        let f1 = {
            let (tc, xc) = (rng.gen_range(0.6..0.9), x);
            functional(&l, &mut rng, tc, xc)
        };
        let f2 = {
            let (tc, xc) = (rng.gen_range(-0.9..-0.6), x + rng.gen_range(-0.2..0.2));
            functional(&l, &mut rng, tc, xc)
        };
        let f3 = {
            let (tc, xc) = (rng.gen_range(-0.4..0.4), rng.gen_range(-1.0..1.0));
            functional(&l, &mut rng, tc, xc)
        };
        let p = verify_interacting_causal(&t, &quartic(), &chi, &f1, &f2, &f3).unwrap();
        replays(&t, &p);
    }

    let a = functional(&l, &mut rng, 0.0, -1.0);
    let b = functional(&l, &mut rng, 0.0, 1.0);
    let ab = verify_interacting_causal(&t, &quartic(), &chi, &a, &b, &zero).unwrap();
    let ba = verify_interacting_causal(&t, &quartic(), &chi, &b, &a, &zero).unwrap();
    assert!(ab.proved() && ba.proved());
    assert_eq!(ab.rhs, ba.rhs);

    assert!(matches!(
        verify_interacting_causal(&t, &quartic(), &chi, &f2, &f1, &zero),
        Err(Error::CausalPremise(_))
    ));
}

#[test]
fn homomorphism_on_causal_products() {
    let l = lat();
    let t = table(&l);
    let chi = plateau(&l);
    let v = quartic();
    let vchi = localize_potential(&v, &chi).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let f = functional(&l, &mut rng, 0.7, 0.0);
    let g = functional(&l, &mut rng, -0.7, 0.0);
    let interacting = GeneratorTable::new(&l, Lagrangian::free(1.0).unwrap().with_potential(&v));
    let sv = interacting.gen(&f).unwrap().multiply(&interacting.gen(&g).unwrap());
    let merged = interacting.gen(&f.add(&g).unwrap()).unwrap();
    assert!(prove_equal(&interacting, &sv, &merged, 50).proved());
    let image = bogoliubov(&t, &vchi, &f).unwrap().multiply(&bogoliubov(&t, &vchi, &g).unwrap());
    let target = bogoliubov(&t, &vchi, &f.add(&g).unwrap()).unwrap();
    assert!(prove_equal(&t, &image, &target, 200).proved());
}

fn diamond_lattice() -> Arc<Lattice> {
    Arc::new(Lattice::covering(&[-2.2, -2.2], &[2.2, 2.2], 0.1, 1.0).unwrap())
}

#[test]
fn chi_change_split_cases() {
    let l = diamond_lattice();
    let o = diamond_region(&l, &[0.0, 0.0], 0.5).unwrap();
    let m = l.cell_diagonal();
    let (p, q) = chi_change_split(&GridField::zeros(&l), &o, m).unwrap();
    assert!(p.is_zero() && q.is_zero());

    let above = bump(&l, 1.6, 0.0, 0.3, 1.0);
    let (p, q) = chi_change_split(&above, &o, m).unwrap();
    assert!(q.is_zero());
    assert_eq!(p.data(), above.data());

    let chi1 = diamond_cutoff(&l, &[0.0, 0.0], 1.0, 0.3);
    let chi2 = diamond_cutoff(&l, &[0.0, 0.0], 1.5, 0.3);
    let delta = chi2.sub(&chi1).unwrap();
    let (p, q) = chi_change_split(&delta, &o, m).unwrap();
    assert!(!p.is_zero() && !q.is_zero());
    assert!(p.add(&q).unwrap().rel_distance(&delta) < 1e-15);
    assert!(later_than(p.support(), &o, m));
    assert!(later_than(&o, q.support(), m));

    let inside = bump(&l, 0.0, 0.0, 0.3, 1.0);
    assert_eq!(chi_change_split(&inside, &o, m), Err(Error::DeltaChiMeetsRegion));
}

#[test]
fn intertwiner_cases() {
    let l = diamond_lattice();
    let t = table(&l);
    let v = quartic();
    let o = diamond_region(&l, &[0.0, 0.0], 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let samples: Vec<LocalFunctional> = (0..3)
        .map(|_| {
            let (tc, xc) = (rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05));
            let g1 = bump(&l, tc, xc, 0.15, rng.gen_range(-1.0..1.0));
            let g2 = bump(&l, 0.0, 0.0, 0.12, rng.gen_range(-1.0..1.0));
            LocalFunctional::new(&l, 0.1, vec![g1, g2]).unwrap()
        })
        .collect();
    let chi1 = diamond_cutoff(&l, &[0.0, 0.0], 1.0, 0.3);

    let same = chi_intertwiner(&t, &v, &chi1, &chi1, &o, &samples).unwrap();
    assert!(same.word().is_identity());
    same.proofs.iter().for_each(|p| replays(&t, p));

    let future = chi1.add(&bump(&l, 1.7, 0.0, 0.3, 1.0)).unwrap();
    let fut = chi_intertwiner(&t, &v, &chi1, &future, &o, &samples).unwrap();
    assert!(fut.chi_minus.is_zero());
    assert!(fut.word().is_identity());
    fut.proofs.iter().for_each(|p| replays(&t, p));

    let chi2 = diamond_cutoff(&l, &[0.0, 0.0], 1.5, 0.3);
    let u = chi_intertwiner(&t, &v, &chi1, &chi2, &o, &samples).unwrap();
    assert!(!u.word().is_identity());
    assert_eq!(u.proofs.len(), 3);
    u.proofs.iter().for_each(|p| replays(&t, p));

    let narrow = diamond_cutoff(&l, &[0.0, 0.0], 0.2, 0.3);
    assert!(matches!(
        chi_intertwiner(&t, &v, &narrow, &chi2, &o, &samples),
        Err(Error::Plateau(_))
    ));
}

#[test]
fn nested_embeddings_are_coherent() {
    let l = Arc::new(Lattice::covering(&[-4.6, -4.6], &[4.6, 4.6], 0.1, 1.0).unwrap());
    let t = table(&l);
    let v = quartic();
    let fam = CutoffFamily::diamonds(&l, &[0.0, 0.0], &[0.5, 2.0, 3.5], 0.5, 0.3).unwrap();
    assert_eq!(fam.len(), 3);
    let f = LocalFunctional::new(&l, 0.0, vec![bump(&l, 0.0, 0.05, 0.2, 0.8), bump(&l, 0.0, 0.0, 0.15, -0.4)]).unwrap();

    let g1 = nested_embedding(&t, &v, &fam, &f, 1).unwrap();
    let vchi = localize_potential(&v, fam.chi(1)).unwrap();
    assert_eq!(g1, bogoliubov(&t, &vchi, &f).unwrap());

    for n in 1..3 {
        let p = verify_coherence(&t, &v, &fam, &f, n).unwrap();
        replays(&t, &p);
        let lhs = nested_embedding(&t, &v, &fam, &f, n + 1).unwrap();
        let rhs = nested_embedding(&t, &v, &fam, &f, n).unwrap();
        let (a, _) = normal_form(&t, &lhs).unwrap();
        let (b, _) = normal_form(&t, &rhs).unwrap();
        assert_ne!(a.letters, b.letters);
        assert_eq!(p.lhs.clone().reduced(), lhs);
    }

    let wide = LocalFunctional::linear(&bump(&l, 0.0, 1.5, 0.3, 1.0), 0.0);
    assert!(matches!(nested_embedding(&t, &v, &fam, &wide, 1), Err(Error::Support(_))));
    assert!(nested_embedding(&t, &v, &fam, &wide, 2).is_ok());
}

#[test]
fn cutoff_family_rejects_touching_levels() {
    let l = Arc::new(Lattice::covering(&[-3.0, -3.0], &[3.0, 3.0], 0.1, 1.0).unwrap());
    assert!(CutoffFamily::diamonds(&l, &[0.0, 0.0], &[0.5, 1.0], 0.5, 0.3).is_err());
    let one = diamond_region(&l, &[0.0, 0.0], 0.5).unwrap();
    let hull = diamond_region(&l, &[0.0, 0.0], 1.5).unwrap();
    let over = diamond_cutoff(&l, &[0.0, 0.0], 0.8, 0.3).scale(1.5);
    assert!(CutoffFamily::new(vec![one], vec![hull], vec![over]).is_err());
}

#[test]
fn quadratic_interaction_shifts_the_weyl_mass() {
    let l = Arc::new(Lattice::covering(&[-1.0, -4.0], &[3.0, 4.0], 0.1, 1.0).unwrap());
    let t = table(&l);
    let inner = Cuboid::new(vec![-0.8, -3.6], vec![2.8, 3.6]).unwrap();
    let chi = GridField::plateau(&l, &inner, 0.15);
    let f = bump(&l, 0.3, -0.3, 0.25, 1.0);
    let g = bump(&l, 0.9, 0.4, 0.25, -0.7);
    for dg2 in [0.0, 0.2, -0.3] {
        let s = shifted_mass_weyl(&t, dg2, &chi, &f, &g).unwrap();
        replays(&t, &s.proof);
        assert!(s.discrepancy() < 1e-4, "dg2 {dg2}: {}", s.discrepancy());
        assert!((s.shifted_mass - (1.0 - 2.0 * dg2).sqrt()).abs() < 1e-15);
    }
    let spacelike = bump(&l, 0.3, 2.5, 0.25, 1.0);
    let s = shifted_mass_weyl(&t, 0.2, &chi, &spacelike, &bump(&l, 0.3, -2.5, 0.25, 1.0)).unwrap();
    assert!(s.symbolic_angle.abs() < 1e-12);
    assert!(matches!(shifted_mass_weyl(&t, 0.6, &chi, &f, &g), Err(Error::NegativeMass)));
}

#[test]
fn diamond_region_is_a_staircase() {
    let l = diamond_lattice();
    let o = diamond_region(&l, &[0.0, 0.0], 0.5).unwrap();
    assert!(o.contains_point(&[0.0, 0.45]));
    assert!(!o.contains_point(&[0.3, 0.45]));
    assert!(!o.contains_point(&[0.7, 0.0]));
}
