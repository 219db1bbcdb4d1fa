use std::sync::OnceLock;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::OpenSystem;
use crate::error::{Error, Result};
use crate::hilbert::{FockState, Mode};
use crate::observables::Moments;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Norm below which the no-jump evolution is considered to have starved.
const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropagatorKind {
    /// Dense for sectors up to 600 states, Taylor above.
    #[default]
    Auto,
    /// Exact `exp(-i H_eff dt)` per sector.
    Dense,
    /// Truncated Taylor series with substeps.
    Taylor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryOptions {
    pub t_max: f64,
    pub dt: f64,
    /// Interval between recorded samples; rounded to a multiple of `dt`.
    pub sample_dt: f64,
    /// Largest total jump probability allowed in one step; steps are halved until it holds.
    pub p_cap: f64,
    pub max_halvings: u32,
    pub initial: FockState,
    pub propagator: PropagatorKind,
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        TrajectoryOptions {
            t_max: 20.0,
            dt: 0.01,
            sample_dt: 0.05,
            p_cap: 0.1,
            max_halvings: 12,
            initial: FockState::VACUUM,
            propagator: PropagatorKind::Auto,
        }
    }
}

impl TrajectoryOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_max > 0.0 && self.dt > 0.0 && self.dt <= self.t_max && self.sample_dt > 0.0) {
            return Err(Error::Input("trajectories need 0 < dt <= t_max and sample_dt > 0".into()));
        }
        if !(self.p_cap > 0.0 && self.p_cap < 1.0) {
            return Err(Error::Input(format!("jump probability cap {} outside (0, 1)", self.p_cap)));
        }
        if self.max_halvings > 30 {
            return Err(Error::Input("at most 30 step halvings".into()));
        }
        Ok(())
    }

    pub(crate) fn steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }

    pub(crate) fn sample_every(&self) -> usize {
        ((self.sample_dt / self.dt).round() as usize).max(1)
    }

    /// Sample times, starting at zero.
    pub fn sample_times(&self) -> Vec<f64> {
        let every = self.sample_every();
        (0..=self.steps() / every).map(|k| (k * every) as f64 * self.dt).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub t: f64,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub seed: u64,
    pub stream: u64,
    pub times: Vec<f64>,
    pub moments: Vec<Moments>,
    pub jumps: Vec<JumpEvent>,
    /// Largest per-step jump probability that was used.
    pub max_jump_probability: f64,
    /// Largest sampled weight on states with some mode at the top level.
    pub max_edge_weight: f64,
    pub final_sector: usize,
    pub final_state: Vec<Complex64>,
}

/// No-jump propagators `exp(-i H_eff dt / 2^k)`, built lazily and shared between trajectories.
pub(crate) struct Propagators<'a> {
    sys: &'a OpenSystem,
    dt: f64,
    dense: [bool; 4],
    levels: Vec<[OnceLock<DMatrix<Complex64>>; 4]>,
    /// Per sector: the non-Hermitian diagonal `-κ/2 N`.
    damping: [Vec<f64>; 4],
}

impl<'a> Propagators<'a> {
    pub(crate) fn new(sys: &'a OpenSystem, opts: &TrajectoryOptions) -> Self {
        let dense = std::array::from_fn(|s| match opts.propagator {
            PropagatorKind::Dense => true,
            PropagatorKind::Taylor => false,
            PropagatorKind::Auto => sys.sector_dim(s) <= 600,
        });
        let damping = std::array::from_fn(|s| sys.total_number(s).map(|n| -0.5 * sys.kappa() * n as f64).collect());
        let levels = (0..=opts.max_halvings).map(|_| Default::default()).collect();
        Propagators { sys, dt: opts.dt, dense, levels, damping }
    }

    fn dense_matrix(&self, s: usize, level: u32) -> &DMatrix<Complex64> {
        self.levels[level as usize][s].get_or_init(|| {
            let h = self.dt / f64::powi(2.0, level as i32);
            let d = self.sys.sector_dim(s);
            let mut m = DMatrix::<Complex64>::zeros(d, d);
            for (i, j, v) in self.sys.hamiltonian(s).triplets() {
                m[(i, j)] = Complex64::new(0.0, -h * v);
            }
            for i in 0..d {
                m[(i, i)] += Complex64::new(h * self.damping[s][i], 0.0);
            }
            m.exp()
        })
    }

    /// `ψ ← exp(-i H_eff h) ψ`, unnormalized.
    fn apply(&self, s: usize, level: u32, psi: &mut Vec<Complex64>, work: &mut Vec<Complex64>) {
        let d = psi.len();
        work.resize(d, ZERO);
        if self.dense[s] {
            let u = self.dense_matrix(s, level);
            // Column-major storage: accumulate column by column.
            work.iter_mut().for_each(|x| *x = ZERO);
            for (j, &pj) in psi.iter().enumerate() {
                if pj == ZERO {
                    continue;
                }
                for (w, &u) in work.iter_mut().zip(u.column(j).iter()) {
                    *w += u * pj;
                }
            }
            std::mem::swap(psi, work);
        } else {
            self.taylor(s, self.dt / f64::powi(2.0, level as i32), psi, work);
        }
    }

    fn taylor(&self, s: usize, h: f64, psi: &mut [Complex64], term: &mut Vec<Complex64>) {
        let a = self.sys.hamiltonian(s);
        let bound = a.norm_inf() + self.damping[s].iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let sub = (h * bound / 0.5).ceil().max(1.0) as usize;
        let tau = h / sub as f64;
        let d = psi.len();
        let mut next = vec![ZERO; d];
        term.resize(d, ZERO);
        for _ in 0..sub {
            term.copy_from_slice(psi);
            let scale = psi.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            for k in 1..60 {
                // term ← (-i τ H_eff / k) term
                a.mul_vec_into(term, &mut next);
                let f = tau / k as f64;
                let mut tn = 0.0;
                for i in 0..d {
                    let v = Complex64::new(0.0, -1.0) * next[i] + term[i] * self.damping[s][i];
                    term[i] = v * f;
                    tn += term[i].norm_sqr();
                }
                for i in 0..d {
                    psi[i] += term[i];
                }
                if tn.sqrt() < 1e-16 * scale {
                    break;
                }
            }
        }
    }
}

fn normalize(psi: &mut [Complex64]) -> f64 {
    let n = psi.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    if n > 0.0 {
        psi.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Runs one trajectory from `opts.initial` with a `ChaCha8` generator seeded by `seed` on `stream`.
pub fn run_trajectory(sys: &OpenSystem, seed: u64, stream: u64, opts: &TrajectoryOptions) -> Result<TrajectoryRecord> {
    opts.validate()?;
    let props = Propagators::new(sys, opts);
    run_with(sys, &props, seed, stream, opts, &mut |_, _, _| {})
}

/// Core loop. `observe` sees every sample as `(index, time, moments)`.
pub(crate) fn run_with(
    sys: &OpenSystem,
    props: &Propagators<'_>,
    seed: u64,
    stream: u64,
    opts: &TrajectoryOptions,
    observe: &mut dyn FnMut(usize, f64, &Moments),
) -> Result<TrajectoryRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let kappa = sys.kappa();
    let (mut s, k) = sys.locate(&opts.initial)?;
    let mut psi = vec![ZERO; sys.sector_dim(s)];
    psi[k] = Complex64::new(1.0, 0.0);
    let mut work = Vec::new();
    let kmax = opts.max_halvings;
    let full: u64 = 1 << kmax;
    let every = opts.sample_every();
    let steps = opts.steps();
    let mut rec = TrajectoryRecord {
        seed,
        stream,
        times: Vec::with_capacity(steps / every + 1),
        moments: Vec::with_capacity(steps / every + 1),
        jumps: Vec::new(),
        max_jump_probability: 0.0,
        max_edge_weight: 0.0,
        final_sector: s,
        final_state: Vec::new(),
    };
    let mut sample = |rec: &mut TrajectoryRecord, s: usize, psi: &[Complex64], t: f64| {
        let m = sys.pure_moments(s, psi);
        observe(rec.times.len(), t, &m);
        rec.max_edge_weight = rec.max_edge_weight.max(sys.edge_weight(s, psi));
        rec.times.push(t);
        rec.moments.push(m);
    };
    sample(&mut rec, s, &psi, 0.0);
    for step in 0..steps {
        let mut done: u64 = 0;
        while done < full {
            let occ = sys.pure_moments_numbers(s, &psi);
            let total: f64 = occ.iter().sum();
            let mut level = 0;
            while level < kmax && kappa * opts.dt / (1u64 << level) as f64 * total > opts.p_cap {
                level += 1;
            }
            let remaining = full - done;
            while (1u64 << (kmax - level)) > (remaining & remaining.wrapping_neg()) {
                level += 1;
            }
            let h = opts.dt / (1u64 << level) as f64;
            let p = kappa * h * total;
            rec.max_jump_probability = rec.max_jump_probability.max(p);
            let t_now = (step as f64 + done as f64 / full as f64) * opts.dt;
            let r: f64 = rng.random();
            if r < p {
                let mut pick = rng.random::<f64>() * total;
                let mut m = 2;
                for (i, &w) in occ.iter().enumerate() {
                    if pick < w {
                        m = i;
                        break;
                    }
                    pick -= w;
                }
                while occ[m] == 0.0 {
                    m -= 1;
                }
                let t = sys.target_sector(s, m);
                work.resize(sys.sector_dim(t), ZERO);
                sys.apply_lowering(s, m, &psi, &mut work);
                std::mem::swap(&mut psi, &mut work);
                s = t;
                normalize(&mut psi);
                rec.jumps.push(JumpEvent { t: t_now, mode: Mode::ALL[m] });
            } else {
                props.apply(s, level, &mut psi, &mut work);
                let n = normalize(&mut psi);
                if !(n > NORM_FLOOR) {
                    return Err(Error::Truncation { norm: n, time: t_now + h });
                }
            }
            done += 1 << (kmax - level);
        }
        if (step + 1) % every == 0 {
            sample(&mut rec, s, &psi, (step + 1) as f64 * opts.dt);
        }
    }
    rec.final_sector = s;
    rec.final_state = psi;
    Ok(rec)
}

impl OpenSystem {
    /// `[⟨n_a⟩, ⟨n_b⟩, ⟨n_c⟩]` of a normalized state in sector `s`.
    pub(crate) fn pure_moments_numbers(&self, s: usize, psi: &[Complex64]) -> [f64; 3] {
        let mut n = [0.0; 3];
        for (a, o) in psi.iter().zip(&self.occupation[s]) {
            let p = a.norm_sqr();
            for k in 0..3 {
                n[k] += p * o[k] as f64;
            }
        }
        n
    }
}
