use proptest::prelude::*;

use trimer::bogoliubov::*;
use trimer::eigen::{lowest_eigenpairs_csr, EigenOptions, SolverKind};
use trimer::freqplan::*;
use trimer::hilbert::{build_basis, sector_of, SectorLabel};
use trimer::meanfield::*;
use trimer::model::*;
use trimer::observables::{coskewness, quadrature_moment};
use trimer::operators::{build_hamiltonian, sector_hamiltonians};
use trimer::spectral::solve_at_cutoff;

fn params() -> impl Strategy<Value = ModelParams> {
    (0.3f64..3.0, 0.3f64..3.0, 0.0f64..2.0, 0.5f64..20.0)
        .prop_map(|(w, u, g, e)| ModelParams::default().with_omega(w).with_u0(u).with_g0(g).with_eta(e))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn lambda_ignores_eta(p in params(), eta2 in 0.01f64..100.0) {
        let a = derive_couplings(&p).unwrap().lambda;
        let b = derive_couplings(&p.with_eta(eta2)).unwrap().lambda;
        prop_assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
        let c1 = critical_coupling(&p).unwrap();
        let c2 = critical_coupling(&p.with_eta(eta2)).unwrap();
        prop_assert_eq!(c1, c2);
    }

    #[test]
    fn sectors_partition_basis(c in 1usize..7) {
        let b = build_basis(c).unwrap();
        let mut seen = vec![false; b.dim()];
        for sec in b.sector_decompose() {
            for &i in sec.indices {
                prop_assert_eq!(sector_of(&b.state(i)), sec.label);
                prop_assert!(!seen[i]);
                seen[i] = true;
            }
            prop_assert!(sec.indices.windows(2).all(|w| w[0] < w[1]));
        }
        prop_assert!(seen.into_iter().all(|x| x));
    }

    #[test]
    fn cyclic_map_on_sectors(c in 1usize..5) {
        let b = build_basis(c).unwrap();
        for s in b.states() {
            let l = sector_of(&s);
            prop_assert_eq!(sector_of(&s.cyclic()), SectorLabel::new(l.s2(), l.s1() * l.s2()).unwrap());
        }
    }

    #[test]
    fn hamiltonian_symmetries(p in params(), c in 2usize..7) {
        let b = build_basis(c).unwrap();
        let h = build_hamiltonian(&p, &b).unwrap().matrix;
        prop_assert!(h.max_asymmetry() < 1e-12);
        for k in 1..=3u8 {
            let s = b.parity_diagonal(k);
            for (i, j, v) in h.triplets() {
                prop_assert!((v * (s[i] - s[j])).abs() < 1e-12);
            }
        }
        let perm = b.cyclic_permutation();
        for (i, j, v) in h.triplets() {
            prop_assert!((h.get(perm[i], perm[j]) - v).abs() < 1e-12);
        }
    }

    #[test]
    fn sector_spectra_reassemble_global(p in params(), c in 2usize..5) {
        let b = build_basis(c).unwrap();
        let full = build_hamiltonian(&p, &b).unwrap().matrix.to_dense();
        let mut want: Vec<f64> = full.symmetric_eigenvalues().iter().copied().collect();
        let mut got: Vec<f64> = sector_hamiltonians(&p, &b)
            .unwrap()
            .iter()
            .flat_map(|h| h.matrix.to_dense().symmetric_eigenvalues().iter().copied().collect::<Vec<_>>())
            .collect();
        want.sort_by(f64::total_cmp);
        got.sort_by(f64::total_cmp);
        for (a, e) in got.iter().zip(&want) {
            prop_assert!((a - e).abs() < 1e-10 * e.abs().max(1.0));
        }
    }

    #[test]
    fn iterative_matches_dense(p in params(), c in 3usize..5) {
        let b = build_basis(c).unwrap();
        let blocks = sector_hamiltonians(&p, &b).unwrap();
        let iterative = EigenOptions { solver: SolverKind::Iterative, dense_threshold: 0, ..Default::default() };
        let davidson = EigenOptions { solver: SolverKind::Davidson, dense_threshold: 0, ..Default::default() };
        for h in &blocks {
            let exact: Vec<f64> = {
                let mut v: Vec<f64> = h.matrix.to_dense().symmetric_eigenvalues().iter().copied().collect();
                v.sort_by(f64::total_cmp);
                v
            };
            let k = 2.min(exact.len());
            for opts in [&iterative, &davidson] {
                let e = lowest_eigenpairs_csr(&h.matrix, k, &[], opts).unwrap();
                prop_assert!(e.iterations > 0);
                for (a, w) in e.values.iter().zip(&exact) {
                    prop_assert!((a - w).abs() < 1e-9 * w.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn parity_eigenstates_have_no_displacement(p in params()) {
        let r = solve_at_cutoff(&p, 6, 2, &EigenOptions::default(), None).unwrap();
        let b = build_basis(6).unwrap();
        for sec in &r.sectors {
            for v in &sec.vectors {
                let mut g = vec![0.0; b.dim()];
                for (k, &i) in b.sector(sec.label).indices.iter().enumerate() {
                    g[i] = v[k];
                }
                for powers in [[1, 0, 0], [0, 1, 0], [0, 0, 1]] {
                    prop_assert!(quadrature_moment(&g, &b, powers).unwrap().abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn coskewness_cyclic_invariant(amps in proptest::array::uniform3(-1.2f64..1.2)) {
        let b = build_basis(10).unwrap();
        // An even cat-like mixture keeps every first moment at zero.
        let plus = trimer::observables::coherent_product(&b, amps);
        let minus = trimer::observables::coherent_product(&b, [-amps[0], -amps[1], amps[2]]);
        let mut psi: Vec<f64> = plus.iter().zip(&minus).map(|(a, m)| a + m).collect();
        if trimer::observables::normalize(&mut psi) < 1e-8 { return Ok(()); }
        let perm = b.cyclic_permutation();
        let mut rot = vec![0.0; psi.len()];
        for (i, &j) in perm.iter().enumerate() {
            rot[j] = psi[i];
        }
        if let (Ok(a), Ok(c)) = (coskewness(&psi, &b), coskewness(&rot, &b)) {
            prop_assert!((a - c).abs() < 1e-10);
        }
    }

    #[test]
    fn eigenvalues_never_rise_with_cutoff(p in params(), c in 3usize..6) {
        let e = EigenOptions::default();
        let small = solve_at_cutoff(&p, c, 3, &e, None).unwrap();
        let large = solve_at_cutoff(&p, c + 1, 3, &e, None).unwrap();
        for (s, l) in small.sectors.iter().zip(&large.sectors) {
            for (a, b) in s.values.iter().zip(&l.values) {
                prop_assert!(*b <= *a + 1e-10);
            }
        }
    }

    #[test]
    fn mixed_sectors_degenerate(g0 in 0.0f64..1.3, eta in 1.0f64..6.0) {
        let p = ModelParams::new(g0, eta);
        let r = solve_at_cutoff(&p, 8, 1, &EigenOptions::default(), None).unwrap();
        let l = r.levels();
        prop_assert!((l.e1 - l.e2).abs() < 1e-8 && (l.e2 - l.e3).abs() < 1e-8);
    }

    #[test]
    fn stationary_points_have_zero_gradient(p in params()) {
        for sp in stationary_points(&p).unwrap() {
            let a = sp.amplitudes;
            let h = 1e-5 * a.iter().fold(1.0f64, |m, x| m.max(x.abs()));
            let scale = potential(&p, a).unwrap().abs().max(1.0) / h;
            for k in 0..3 {
                let mut ap = a;
                let mut am = a;
                ap[k] += h;
                am[k] -= h;
                let fd = (potential(&p, ap).unwrap() - potential(&p, am).unwrap()) / (2.0 * h);
                prop_assert!(fd.abs() < 1e-6 * scale);
            }
        }
    }

    #[test]
    fn branch_energy_ordering(lambda in 1.0001f64..10.0) {
        let p = ModelParams::default();
        let (ep, em) = branch_energies(&p, lambda);
        prop_assert!(em >= ep - 1e-12);
        prop_assert!(em >= -1e-12);
        prop_assert_eq!(ep < 0.0, lambda > LAMBDA_C);
    }

    #[test]
    fn table_matches_oracle(lambda in 1.05f64..5.0, p in params()) {
        let t = fluctuation_table(lambda, &p).unwrap();
        let o = symplectic_oracle(lambda, &p).unwrap();
        let got = o.polariton_moments(f_plus(lambda)).unwrap();
        let want = t.polariton.unwrap();
        for (a, b) in [(got.u2, want.u2), (got.y2, want.y2), (got.pu2, want.pu2), (got.py2, want.py2)] {
            prop_assert!((a - b).abs() < 1e-10 * b);
        }
    }

    #[test]
    fn tone_bookkeeping(fa in 5.0f64..9.0, fb in 3.0f64..5.0, fc in 1.0f64..2.9, w in 0.0f64..0.05) {
        let t = ResonatorTable::new(vec![fa, fa * 1.5], vec![fb, fb * 1.5], vec![fc, fc * 1.5]).unwrap();
        let tones = plan_tones(&t, w).unwrap();
        let f = [fa, fb, fc];
        for tone in &tones {
            let proc: f64 = (0..3).map(|i| tone.signs[i] as f64 * f[i]).sum();
            prop_assert!((tone.frequency - tone.detuning - proc).abs() < 1e-12);
            prop_assert!(tone.frequency > 0.0);
        }
    }

    #[test]
    fn scan_scale_covariant_and_order_free(s in 0.1f64..10.0, w in 0.0f64..0.05) {
        let t = ResonatorTable::new(vec![7.6, 11.4], vec![6.2, 9.3], vec![4.2, 6.3]).unwrap();
        let swapped = ResonatorTable::new(vec![7.6, 11.4], vec![4.2, 6.3], vec![6.2, 9.3]).unwrap();
        let g = 0.002;
        let base = spurious_scan(&t, &plan_tones(&t, w).unwrap(), g, DetuningReference::Carrier).unwrap();
        let sc = t.scaled(s);
        let scaled = spurious_scan(&sc, &plan_tones(&sc, w * s).unwrap(), g * s, DetuningReference::Carrier).unwrap();
        prop_assert!((scaled.delta - s * base.delta).abs() < 1e-9 * s);
        prop_assert!((scaled.ratio - base.ratio).abs() < 1e-9 * base.ratio);
        let sw = spurious_scan(&swapped, &plan_tones(&swapped, w).unwrap(), g, DetuningReference::Carrier).unwrap();
        prop_assert!((sw.delta - base.delta).abs() < 1e-12);
        prop_assert_eq!(sw.processes.len(), base.processes.len());
    }
}

#[test]
fn permuting_b_and_c_swaps_middle_tones() {
    let t = ResonatorTable::new(vec![7.6], vec![6.2], vec![4.2]).unwrap();
    let s = ResonatorTable::new(vec![7.6], vec![4.2], vec![6.2]).unwrap();
    let (a, b) = (plan_tones(&t, 0.01).unwrap(), plan_tones(&s, 0.01).unwrap());
    assert!((a[1].frequency - b[2].frequency).abs() < 1e-12);
    assert!((a[2].frequency - b[1].frequency).abs() < 1e-12);
}

#[test]
fn fluctuations_bounded_at_transition() {
    let t = fluctuation_table(LAMBDA_C, &ModelParams::default()).unwrap();
    let p = t.polariton.unwrap();
    let l = t.local.unwrap();
    for v in [p.u2, p.y2, p.z2, p.pu2, p.py2, p.pz2, l.x2, l.xx.abs(), l.p2, l.pp.abs()] {
        assert!(v.is_finite() && v < 10.0);
    }
}

#[test]
fn tone_on_resonance_is_flagged() {
    // b1 - a0 equals the third tone carrier exactly.
    let (fa, fb, fc) = (7.0, 5.0, 3.0);
    let t = ResonatorTable::new(vec![fa], vec![fb, fa + (fa - fb + fc)], vec![fc]).unwrap();
    let plan = DrivePlan::build(&t, &PlanOptions::new(0.01, 0.001)).unwrap();
    assert_eq!(plan.delta, 0.0);
    assert!(plan.ratio.is_infinite());
    assert_eq!(plan.verdict, Verdict::Resonant);
}
