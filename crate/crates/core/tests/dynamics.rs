use num_complex::Complex64;
use trimer::dynamics::*;
use trimer::hilbert::{FockState, Mode};
use trimer::model::ModelParams;

fn sys(g0: f64, eta: f64, kappa: f64, c: usize) -> OpenSystem {
    OpenSystem::new(&ModelParams::new(g0, eta).with_kappa(kappa), c).unwrap()
}

#[test]
fn block_liouvillian_matches_full() {
    let s = sys(0.7, 1.5, 0.5, 3);
    let full = liouvillian_dense(&s).unwrap();
    let block = liouvillian_block(&s).unwrap();
    let proto = BlockState::zeros(&s);
    let secs = s.basis().sector_decompose();
    let d = s.basis().dim();
    // Map every block coordinate to its place in vec(ρ).
    let mut place = Vec::new();
    for (k, sec) in secs.iter().enumerate() {
        for i in 0..proto.dim(k) {
            for j in 0..proto.dim(k) {
                place.push(sec.indices[i] * d + sec.indices[j]);
            }
        }
    }
    for (r, &gr) in place.iter().enumerate() {
        for (c, &gc) in place.iter().enumerate() {
            assert!((block[(r, c)] - full[(gr, gc)]).norm() < 1e-12);
        }
    }
    // Block-diagonal states are never mapped outside the block-diagonal subspace.
    let inside: std::collections::HashSet<usize> = place.iter().copied().collect();
    for &gc in &place {
        for r in 0..d * d {
            if !inside.contains(&r) {
                assert!(full[(r, gc)].norm() < 1e-12);
            }
        }
    }
}

#[test]
fn trace_is_left_null_vector() {
    let s = sys(0.9, 1.0, 1.3, 3);
    let l = liouvillian_dense(&s).unwrap();
    let d = s.basis().dim();
    for c in 0..d * d {
        let t: Complex64 = (0..d).map(|i| l[(i * d + i, c)]).sum();
        assert!(t.norm() < 1e-12);
    }
}

#[test]
fn liouvillian_commutes_with_parities() {
    let s = sys(1.1, 2.0, 0.7, 3);
    let l = liouvillian_dense(&s).unwrap();
    for k in 1..=3 {
        assert!(superoperator_commutator(&s, &l, k) < 1e-12);
    }
}

#[test]
fn dense_guard() {
    assert!(matches!(liouvillian_dense(&sys(0.5, 1.0, 1.0, 5)), Err(trimer::Error::Capacity(_))));
}

#[test]
fn uncoupled_steady_state_is_vacuum() {
    let s = sys(0.0, 1.0, 1.0, 3);
    let direct = steady_state_direct(&liouvillian_dense(&s).unwrap(), 1e-10).unwrap();
    assert_eq!(direct.multiplicity, 1);
    let rho = direct.unique().unwrap();
    assert!((rho[(0, 0)].re - 1.0).abs() < 1e-10);
    assert!((rho.norm() - 1.0).abs() < 1e-10);
}

#[test]
fn undamped_liouvillian_is_degenerate() {
    let s = sys(0.0, 1.0, 0.0, 2);
    let direct = steady_state_direct(&liouvillian_dense(&s).unwrap(), 1e-10).unwrap();
    assert!(direct.multiplicity > 1);
    assert!(direct.unique().is_err());
}

#[test]
fn steady_state_routes_agree() {
    let s = sys(0.8, 1.0, 1.0, 3);
    let direct = steady_state_direct(&liouvillian_dense(&s).unwrap(), 1e-10).unwrap();
    let rho = direct.unique().unwrap().clone();
    for method in [SteadyMethod::Dense, SteadyMethod::Iterative] {
        let ss = steady_state(&s, &SteadyOptions { method, ..Default::default() }).unwrap();
        let g = ss.state.to_global(&s);
        assert!((&g - &rho).norm() < 1e-9, "{method:?}");
        assert!(ss.residual < 1e-9);
        assert!(ss.state.hermiticity_error() < 1e-10);
        assert!(ss.state.min_eigenvalue() > -1e-8);
        assert!((ss.state.trace().re - 1.0).abs() < 1e-12);
    }
}

#[test]
fn strong_damping_gives_nearly_pure_vacuum() {
    let s = sys(0.1, 1.0, 10.0, 4);
    let ss = steady_state(&s, &SteadyOptions::default()).unwrap();
    assert!(ss.state.purity() > 0.99);
}

#[test]
fn master_equation_relaxes_to_steady_state() {
    let s = sys(0.6, 1.0, 1.0, 4);
    let ss = steady_state(&s, &SteadyOptions::default()).unwrap().state.moments(&s);
    let r0 = BlockState::pure_fock(&s, &FockState::VACUUM).unwrap();
    let (series, rho) = evolve_master(&s, &r0, &MasterOptions { t_max: 50.0, dt: 0.01, sample_dt: 1.0 }).unwrap();
    let m = series.last().unwrap().1;
    assert!((m.mean_photon_number() - ss.mean_photon_number()).abs() < 1e-6);
    assert!((m.coskewness_unchecked() - ss.coskewness_unchecked()).abs() < 1e-6);
    assert!((rho.trace().re - 1.0).abs() < 1e-10);
}

#[test]
fn jump_lowers_one_mode() {
    let s = sys(0.4, 1.0, 1.0, 4);
    let (sec, k) = s.locate(&FockState::new(1, 1, 1)).unwrap();
    let mut psi = vec![Complex64::new(0.0, 0.0); s.sector_dim(sec)];
    psi[k] = Complex64::new(1.0, 0.0);
    let t = s.target_sector(sec, Mode::A.index());
    let mut out = vec![Complex64::new(0.0, 0.0); s.sector_dim(t)];
    s.apply_lowering(sec, Mode::A.index(), &psi, &mut out);
    let (ts, tk) = s.locate(&FockState::new(0, 1, 1)).unwrap();
    assert_eq!(ts, t);
    for (i, v) in out.iter().enumerate() {
        let want = if i == tk { 1.0 } else { 0.0 };
        assert_eq!(*v, Complex64::new(want, 0.0));
    }
}

#[test]
fn trajectory_invariants() {
    let s = sys(0.8, 1.0, 1.0, 5);
    let opts = TrajectoryOptions { t_max: 10.0, dt: 0.05, ..Default::default() };
    let rec = run_trajectory(&s, 7, 0, &opts).unwrap();
    assert!(!rec.jumps.is_empty());
    assert!(rec.max_jump_probability <= 0.1 + 1e-15);
    for m in &rec.moments {
        assert!((m.norm - 1.0).abs() < 1e-10);
        assert_eq!(m.x, [0.0; 3]);
    }
    assert_eq!(rec, run_trajectory(&s, 7, 0, &opts).unwrap());
    assert_ne!(rec.jumps, run_trajectory(&s, 7, 1, &opts).unwrap().jumps);
}

#[test]
fn propagators_agree() {
    let s = sys(0.8, 1.0, 1.0, 5);
    let base = TrajectoryOptions { t_max: 3.0, dt: 0.02, ..Default::default() };
    let a = run_trajectory(&s, 3, 0, &TrajectoryOptions { propagator: PropagatorKind::Dense, ..base.clone() }).unwrap();
    let b = run_trajectory(&s, 3, 0, &TrajectoryOptions { propagator: PropagatorKind::Taylor, ..base }).unwrap();
    assert_eq!(a.jumps.len(), b.jumps.len());
    for (x, y) in a.final_state.iter().zip(&b.final_state) {
        assert!((x - y).norm() < 1e-9);
    }
}

#[test]
fn single_photon_decay_law() {
    let s = sys(0.0, 1.0, 1.0, 3);
    let opts = EnsembleOptions {
        n_traj: 1000,
        master_seed: 11,
        traj: TrajectoryOptions { t_max: 3.0, dt: 0.005, sample_dt: 0.25, initial: FockState::new(1, 0, 0), ..Default::default() },
        ..Default::default()
    };
    let st = ensemble_run(&s, &opts).unwrap();
    for (k, &t) in st.series.times.iter().enumerate() {
        // The series holds the mode average, n_a / 3.
        let got = 3.0 * st.series.n_mean[k];
        let se = 3.0 * st.series.n_stderr[k];
        let want = (-t).exp();
        assert!((got - want).abs() <= 3.0 * se + 1e-12, "t = {t}: {got} vs {want} ± {se}");
    }
}

#[test]
fn ensembles_are_reproducible_across_thread_counts() {
    let s = sys(0.7, 1.0, 1.0, 4);
    let opts = EnsembleOptions {
        n_traj: 12,
        master_seed: 5,
        traj: TrajectoryOptions { t_max: 4.0, dt: 0.02, ..Default::default() },
        ..Default::default()
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| ensemble_run(&s, &opts).unwrap())
    };
    let a = run(1);
    let b = run(3);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn checkpoint_resume_is_exact() {
    let s = sys(0.7, 1.0, 1.0, 4);
    let opts = EnsembleOptions {
        n_traj: 10,
        master_seed: 9,
        traj: TrajectoryOptions { t_max: 2.0, dt: 0.02, ..Default::default() },
        checkpoint_every: 4,
        ..Default::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.json");
    let fresh = ensemble_run(&s, &opts).unwrap();
    let short = EnsembleOptions { n_traj: 6, ..opts.clone() };
    ensemble_run_with(&s, &short, Some(path.clone()), &|_, _| {}).unwrap();
    let c = Checkpoint::load(&path).unwrap();
    assert_eq!(c.completed.len(), 6);
    let resumed = ensemble_run_with(&s, &opts, Some(path.clone()), &|_, _| {}).unwrap();
    assert_eq!(serde_json::to_string(&fresh).unwrap(), serde_json::to_string(&resumed).unwrap());
    let other = EnsembleOptions { master_seed: 10, ..opts };
    assert!(ensemble_run_with(&s, &other, Some(path), &|_, _| {}).is_err());
}

#[test]
fn stderr_follows_inverse_square_root() {
    let s = sys(0.7, 1.0, 1.0, 4);
    let mut pts = Vec::new();
    for k in 0..5 {
        let n = 40usize << k;
        let opts = EnsembleOptions {
            n_traj: n,
            master_seed: 21,
            traj: TrajectoryOptions { t_max: 4.0, dt: 0.02, sample_dt: 0.1, ..Default::default() },
            ..Default::default()
        };
        let st = ensemble_run(&s, &opts).unwrap();
        pts.push(((n as f64).ln(), st.n_mean.stderr.ln()));
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!((slope + 0.5).abs() < 0.1, "slope {slope}");
}

#[test]
fn ensemble_input_errors() {
    let s = sys(0.7, 1.0, 1.0, 3);
    let opts = EnsembleOptions { n_traj: 1, ..Default::default() };
    assert!(ensemble_run(&s, &opts).is_err());
    let bad = TrajectoryOptions { p_cap: 1.5, ..Default::default() };
    assert!(run_trajectory(&s, 0, 0, &bad).is_err());
    assert!(steady_state(&sys(0.7, 1.0, 0.0, 3), &SteadyOptions::default()).is_err());
}
