//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion.
//!
//! Run a subset with `cargo test --test acceptance -- <name>...`.

use std::f64::consts::{SQRT_2, TAU};
use std::time::Instant;

use trimer::bogoliubov::*;
use trimer::dynamics::*;
use trimer::eigen::{lowest_eigenpairs_csr, EigenOptions, SolverKind};
use trimer::freqplan::*;
use trimer::hilbert::{build_basis, FockState};
use trimer::meanfield::*;
use trimer::model::*;
use trimer::operators::{build_hamiltonian, sector_hamiltonians};
use trimer::spectral::*;

type Outcome = Result<String, String>;

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Least-squares slope and intercept.
fn fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

fn mean_g2(p: &SweepPoint) -> f64 {
    p.observables.g2_zero.iter().map(|g| g.unwrap_or(f64::NAN)).sum::<f64>() / 3.0
}

/// The eta = 10 coupling sweep shared by several criteria, plus one deep point.
struct Eta10 {
    points: Vec<SweepPoint>,
    /// `points` with extra couplings bisecting the largest jump.
    refined: Vec<SweepPoint>,
    deep: SweepPoint,
}

fn eta10_sweep() -> Result<Eta10, String> {
    let template = ModelParams::new(0.0, 10.0);
    let grid: Vec<f64> = (0..=80).map(|i| 0.5 + 0.005 * i as f64).collect();
    let opts = SpectralOptions::default();
    let points = spectrum_sweep(&template, &grid, &opts).map_err(|e| e.to_string())?;
    let refined = refine_jump(&template, points.clone(), &opts, 10).map_err(|e| e.to_string())?;
    let deep = converged_spectrum(&template.with_g0(1.2), &SpectralOptions { k: 1, ..Default::default() })
        .and_then(|r| SweepPoint::from_result(&r))
        .map_err(|e| e.to_string())?;
    Ok(Eta10 { points, refined, deep })
}

fn critical_point() -> Outcome {
    let p = ModelParams::default();
    let cp = critical_coupling(&p).map_err(|e| e.to_string())?;
    let want = 3.0 / (2.0 * SQRT_2);
    let root = critical_lambda_root();
    let e_plus = branch_energies(&p, root).0;
    let ok = (cp.lambda_c - want).abs() <= 2.0 * f64::EPSILON
        && (cp.g0_c - 0.75).abs() <= 2.0 * f64::EPSILON
        && e_plus.abs() < 1e-12
        && (root - want).abs() < 1e-12;
    verdict(ok, format!("lambda_c = {:.17}, g0_c = {:.17}, E+(root) = {e_plus:.2e}", cp.lambda_c, cp.g0_c))
}

fn first_order_jump(s: &Eta10) -> Outcome {
    let window: Vec<SweepPoint> = s.points.iter().filter(|p| p.params.g0 >= 0.6 - 1e-12).cloned().collect();
    let (i, jump) = largest_jump(&window).ok_or("empty sweep")?;
    let at = 0.5 * (window[i].params.g0 + window[i + 1].params.g0);
    verdict(
        (at - 0.75).abs() <= 0.03 && jump.abs() > 0.5,
        format!("largest step {jump:.4} between g0 = {:.3} and {:.3}", window[i].params.g0, window[i + 1].params.g0),
    )
}

fn near_degeneracy(s: &Eta10) -> Outcome {
    let gap = |g0: f64| {
        s.points.iter().find(|p| (p.params.g0 - g0).abs() < 1e-9).map(|p| p.levels.e1 - p.levels.e0).ok_or("missing point")
    };
    let (g05, g09) = (gap(0.5)?, gap(0.9)?);
    let split = s
        .points
        .iter()
        .chain([&s.deep])
        .map(|p| {
            let l = p.levels;
            (l.e1 - l.e2).abs().max((l.e2 - l.e3).abs()).max((l.e1 - l.e3).abs())
        })
        .fold(0.0, f64::max);
    verdict(
        g09 * 100.0 <= g05 && split <= 1e-8,
        format!("E1-E0: {g05:.3e} at 0.5, {g09:.3e} at 0.9 (ratio {:.1}); max E1/E2/E3 split {split:.1e}", g05 / g09),
    )
}

fn avoided_crossing(s: &Eta10) -> Outcome {
    let d: Vec<f64> = s.refined.iter().map(|p| p.levels.e4 - p.levels.e0).collect();
    let (imin, min) = d.iter().copied().enumerate().min_by(|a, b| a.1.total_cmp(&b.1)).ok_or("empty sweep")?;
    let interior = imin > 0 && imin + 1 < d.len() && min < d[0] && min < d[d.len() - 1];
    verdict(
        interior && min >= 1e-6,
        format!("min E4-E0 = {min:.4e} at g0 = {:.6} (ends {:.3e}, {:.3e})", s.refined[imin].params.g0, d[0], d[d.len() - 1]),
    )
}

fn coskewness_dip(s: &Eta10) -> Outcome {
    let (gmin, cmin) = s
        .refined
        .iter()
        .map(|p| (p.params.g0, p.observables.coskewness))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or("empty sweep")?;
    let deep = s.deep.observables.coskewness;
    let want = superposition_coskewness(xbar(&s.deep.params));
    verdict(
        cmin < -1.0 && (deep - want).abs() <= 0.05,
        format!("min C = {cmin:.4} at g0 = {gmin:.6}; g0 = 1.2: {deep:.4} vs superposition {want:.4}"),
    )
}

fn normal_phase_scaling() -> Outcome {
    let mut pts = Vec::new();
    for eta in [1.0, 2.0, 4.0, 8.0, 16.0] {
        let r = converged_spectrum(&ModelParams::new(0.2, eta), &SpectralOptions { k: 1, ..Default::default() })
            .map_err(|e| e.to_string())?;
        let c = r.ground_observables().map_err(|e| e.to_string())?.coskewness;
        pts.push((eta.ln(), c.abs().ln()));
    }
    let (slope, icpt) = fit(&pts);
    verdict((slope + 0.5).abs() <= 0.1, format!("slope {slope:.4}, |C| ~ {:.4} eta^slope", icpt.exp()))
}

fn photon_statistics(s: &Eta10) -> Outcome {
    let before: Vec<f64> = s.points.iter().filter(|p| p.params.g0 <= 0.72 + 1e-12).map(mean_g2).collect();
    let min_before = before.iter().copied().fold(f64::INFINITY, f64::min);
    let deep = mean_g2(&s.deep);
    verdict(
        min_before > 1.0 && (deep - 1.0).abs() <= 0.05,
        format!("min g2 for g0 <= 0.72: {min_before:.4}; g2 at 1.2: {deep:.4}"),
    )
}

fn bisect(mut lo: f64, mut hi: f64, unstable: impl Fn(f64) -> bool) -> f64 {
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if unstable(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn bogoliubov_oracle() -> Outcome {
    let p = ModelParams::default().with_eta(10.0);
    let mut worst: f64 = 0.0;
    for lambda in [1.1, 1.5, 2.0, 3.0] {
        let t = fluctuation_table(lambda, &p).map_err(|e| e.to_string())?;
        let o = symplectic_oracle(lambda, &p).map_err(|e| e.to_string())?;
        let (Some(a), Some(v), Some(loc)) = (t.polariton, o.covariance(), t.local) else {
            return Err(format!("lambda {lambda}: stability flags disagree"));
        };
        let b = o.polariton_moments(f_plus(lambda)).ok_or("no oracle moments")?;
        let pairs = [
            (a.u2, b.u2),
            (a.y2, b.y2),
            (a.z2, b.z2),
            (a.pu2, b.pu2),
            (a.py2, b.py2),
            (a.pz2, b.pz2),
            (loc.x2, v[(0, 0)]),
            (loc.xx, v[(0, 1)]),
            (loc.p2, v[(3, 3)]),
            (loc.pp, v[(3, 4)]),
        ];
        for (x, y) in pairs {
            worst = worst.max((x - y).abs() / y.abs().max(1e-300));
        }
    }
    let lam = |f: f64| (1.0 + f * f) / (2.0 * f);
    let f_oracle = bisect(0.5, 2.0, |f| {
        matches!(symplectic_oracle_branch(f, &p, SignPattern::ALL[0]), Ok(OracleOutcome::Unstable { .. }))
    });
    let f_table = bisect(0.5, 2.0, |f| lambda_tilde_of_branch(f) >= 1.0);
    let (lo, lt) = (lam(f_oracle), lam(f_table));
    verdict(
        worst <= 1e-10 && (lo - lt).abs() <= 1e-9 && (lo - 1.0).abs() <= 1e-9,
        format!("worst relative deviation {worst:.1e}; threshold lambda {lo:.12} (oracle) vs {lt:.12} (table)"),
    )
}

fn trajectory_engine() -> Outcome {
    // Free decay of one photon.
    let free = OpenSystem::new(&ModelParams::new(0.0, 1.0).with_kappa(1.0), 3).map_err(|e| e.to_string())?;
    let opts = EnsembleOptions {
        n_traj: 1000,
        master_seed: 11,
        traj: TrajectoryOptions { t_max: 3.0, dt: 0.005, sample_dt: 0.25, initial: FockState::new(1, 0, 0), ..Default::default() },
        ..Default::default()
    };
    let st = ensemble_run(&free, &opts).map_err(|e| e.to_string())?;
    let mut worst_sigma: f64 = 0.0;
    for (k, &t) in st.series.times.iter().enumerate().skip(1) {
        let got = 3.0 * st.series.n_mean[k];
        let se = 3.0 * st.series.n_stderr[k];
        worst_sigma = worst_sigma.max((got - (-t).exp()).abs() / se);
    }
    let mut detail = format!("decay: worst deviation {worst_sigma:.2} stderr");
    let mut ok = worst_sigma <= 3.0;

    // Driven-dissipative steady state against the ensemble.
    let g0c = critical_coupling(&ModelParams::default()).map_err(|e| e.to_string())?.g0_c;
    for (frac, n_traj, t_max) in [(0.5, 1000, 100.0), (0.8, 600, 60.0), (1.1, 600, 60.0)] {
        let sys = OpenSystem::new(&ModelParams::new(frac * g0c, 1.0).with_kappa(1.0), 6).map_err(|e| e.to_string())?;
        let ss = steady_state(&sys, &SteadyOptions::default()).map_err(|e| e.to_string())?;
        let m = ss.state.moments(&sys);
        let (n_ss, c_ss) = (m.mean_photon_number(), m.coskewness_unchecked());
        let opts = EnsembleOptions {
            n_traj,
            master_seed: 2024,
            traj: TrajectoryOptions { t_max, dt: 0.01, ..Default::default() },
            ..Default::default()
        };
        let st = ensemble_run(&sys, &opts).map_err(|e| e.to_string())?;
        let dn = (st.n_mean.mean - n_ss).abs() / n_ss;
        let dc = (st.coskewness.mean - c_ss).abs() / c_ss.abs();
        ok &= dn <= 0.05 && dc <= 0.05;
        detail += &format!(
            "; {frac}g0c: n {:.4} vs {n_ss:.4} ({:.1}%), C {:.4} vs {c_ss:.4} ({:.1}%)",
            st.n_mean.mean,
            100.0 * dn,
            st.coskewness.mean,
            100.0 * dc
        );
    }
    verdict(ok, detail)
}

fn dissipative_coskewness() -> Outcome {
    // The engine takes the larger truncations too.
    let big = OpenSystem::new(&ModelParams::new(0.8, 3.0).with_kappa(1.0), 25).map_err(|e| e.to_string())?;
    let short = TrajectoryOptions { t_max: 0.05, dt: 0.01, ..Default::default() };
    run_trajectory(&big, 0, 0, &short).map_err(|e| e.to_string())?;

    let sys = OpenSystem::new(&ModelParams::new(0.8, 2.0).with_kappa(1.0), 12).map_err(|e| e.to_string())?;
    let opts = EnsembleOptions {
        n_traj: 80,
        master_seed: 7,
        traj: TrajectoryOptions { t_max: 60.0, dt: 0.01, ..Default::default() },
        ..Default::default()
    };
    let st = ensemble_run(&sys, &opts).map_err(|e| e.to_string())?;
    let c = st.coskewness;
    verdict(
        c.mean + 2.0 * c.stderr < -1.0,
        format!("eta = 2, g0 = 0.8, cutoff 12: C = {:.4} ± {:.4}, n = {:.4}", c.mean, c.stderr, st.n_mean.mean),
    )
}

fn frequency_planner() -> Outcome {
    let table = ResonatorTable::from_ghz(&[[7.6, 6.2, 4.2], [11.4, 9.3, 6.3]]).map_err(|e| e.to_string())?;
    let plan = DrivePlan::build(&table, &PlanOptions::new(TAU * 0.01, TAU * 0.001)).map_err(|e| e.to_string())?;
    let delta = plan.delta / TAU;
    verdict(
        (delta - 0.1).abs() < 1e-12 && (plan.ratio / 2.4e-2 - 1.0).abs() <= 0.05,
        format!("delta = {delta:.15} GHz, g = {:.4} MHz, g/delta = {:.4e} ({})", 1e3 * plan.g / TAU, plan.ratio, plan.verdict),
    )
}

fn structural() -> Outcome {
    let p = ModelParams::new(0.8, 2.0).with_u0(0.7);
    let mut notes = Vec::new();
    let b = build_basis(6).map_err(|e| e.to_string())?;
    let h = build_hamiltonian(&p, &b).map_err(|e| e.to_string())?.matrix;
    let asym = h.max_asymmetry();
    let mut cross: f64 = 0.0;
    for k in 1..=3u8 {
        let s = b.parity_diagonal(k);
        for (i, j, v) in h.triplets() {
            cross = cross.max((v * (s[i] - s[j])).abs());
        }
    }
    notes.push(format!("asymmetry {asym:.0e}, parity mixing {cross:.0e}"));
    let mut ok = asym < 1e-12 && cross == 0.0;

    let small = build_basis(4).map_err(|e| e.to_string())?;
    let blocks = sector_hamiltonians(&p, &small).map_err(|e| e.to_string())?;
    let forced = EigenOptions { solver: SolverKind::Iterative, dense_threshold: 0, ..Default::default() };
    let mut dev: f64 = 0.0;
    for blk in &blocks {
        let mut exact: Vec<f64> = blk.matrix.to_dense().symmetric_eigenvalues().iter().copied().collect();
        exact.sort_by(f64::total_cmp);
        let e = lowest_eigenpairs_csr(&blk.matrix, 3, &[], &forced).map_err(|e| e.to_string())?;
        for (a, w) in e.values.iter().zip(&exact) {
            dev = dev.max((a - w).abs());
        }
    }
    notes.push(format!("dense vs Krylov {dev:.0e}"));
    ok &= dev < 1e-9;

    let e = EigenOptions::default();
    let mut last = f64::INFINITY;
    let mut monotone = true;
    for c in 3..=9 {
        let r = solve_at_cutoff(&p, c, 1, &e, None).map_err(|e| e.to_string())?;
        let e0 = r.merged[0].energy;
        monotone &= e0 <= last + 1e-10;
        last = e0;
    }
    notes.push(format!("E0 monotone in cutoff: {monotone}"));
    ok &= monotone;

    let sys = OpenSystem::new(&p.with_kappa(1.0), 4).map_err(|e| e.to_string())?;
    let opts = EnsembleOptions {
        n_traj: 16,
        master_seed: 99,
        traj: TrajectoryOptions { t_max: 5.0, ..Default::default() },
        ..Default::default()
    };
    let a = serde_json::to_string(&ensemble_run(&sys, &opts).map_err(|e| e.to_string())?).unwrap();
    let b = serde_json::to_string(&ensemble_run(&sys, &opts).map_err(|e| e.to_string())?).unwrap();
    notes.push(format!("identical reruns: {}", a == b));
    ok &= a == b;
    verdict(ok, notes.join("; "))
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let wanted = |name: &str| filters.is_empty() || filters.iter().any(|f| name.contains(f.as_str()));
    let needs_sweep = ["first_order_jump", "near_degeneracy", "avoided_crossing", "coskewness_dip", "photon_statistics"]
        .iter()
        .any(|n| wanted(n));
    let sweep = if needs_sweep { Some(eta10_sweep()) } else { None };
    let with_sweep = |f: fn(&Eta10) -> Outcome| -> Outcome {
        match sweep.as_ref().expect("sweep requested") {
            Ok(s) => f(s),
            Err(e) => Err(format!("sweep failed: {e}")),
        }
    };

    let mut failed = 0;
    let mut report = |name: &str, run: &dyn Fn() -> Outcome| {
        if !wanted(name) {
            return;
        }
        let t = Instant::now();
        let out = run();
        let secs = t.elapsed().as_secs_f64();
        match out {
            Ok(d) => println!("PASS {name}: {d} [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("FAIL {name}: {d} [{secs:.1}s]");
            }
        }
    };
    report("critical_point", &critical_point);
    report("first_order_jump", &|| with_sweep(first_order_jump));
    report("near_degeneracy", &|| with_sweep(near_degeneracy));
    report("avoided_crossing", &|| with_sweep(avoided_crossing));
    report("coskewness_dip", &|| with_sweep(coskewness_dip));
    report("normal_phase_scaling", &normal_phase_scaling);
    report("photon_statistics", &|| with_sweep(photon_statistics));
    report("bogoliubov_oracle", &bogoliubov_oracle);
    report("trajectory_engine", &trajectory_engine);
    report("dissipative_coskewness", &dissipative_coskewness);
    report("frequency_planner", &frequency_planner);
    report("structural", &structural);
    if failed > 0 {
        std::process::exit(1);
    }
}
