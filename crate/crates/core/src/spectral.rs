//! Per-sector low-lying spectra, the cutoff-convergence loop and coupling sweeps.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigen::{dot, lowest_eigenpairs_csr, EigenOptions};
use crate::error::{Error, Result};
use crate::hilbert::{build_basis, FockBasis, SectorLabel};
use crate::meanfield::f_plus;
use crate::model::ModelParams;
use crate::observables::{evaluate_local, ObservableSet};
use crate::operators::sector_hamiltonians;

/// Largest overlap deficit accepted between consecutive cutoffs.
pub const OVERLAP_TOLERANCE: f64 = 0.005;
/// Eigenvalues closer than this form one degenerate cluster.
pub const CLUSTER_GAP: f64 = 1e-8;
/// Relative energy window within which merged states count as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct SectorSpectrum {
    pub label: SectorLabel,
    pub values: Vec<f64>,
    /// Eigenvectors on the sector sub-basis.
    pub vectors: Vec<Vec<f64>>,
}

/// One entry of the merged, globally ordered list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergedState {
    pub energy: f64,
    pub sector: SectorLabel,
    pub local: usize,
}

/// Overlap deficit `1 - |⟨Ψ(C)|Ψ(C')⟩|` of one merged state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub state: usize,
    pub sector: SectorLabel,
    pub local: usize,
    pub deficit: f64,
}

#[derive(Debug, Clone)]
pub struct SpectralResult {
    pub params: ModelParams,
    pub cutoff_used: usize,
    /// In canonical sector order.
    pub sectors: Vec<SectorSpectrum>,
    pub merged: Vec<MergedState>,
    pub convergence: Vec<ConvergenceRecord>,
    /// Every cutoff that was diagonalized, in order.
    pub cutoff_history: Vec<usize>,
}

/// Lowest level of each sector plus the second level of `(+,+)`.
///
/// `e1..e3` are the three mixed sectors in canonical order; `e4` is the first
/// excitation inside the fully symmetric sector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetryLevels {
    pub e0: f64,
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub e4: f64,
}

impl SymmetryLevels {
    pub fn as_array(&self) -> [f64; 5] {
        [self.e0, self.e1, self.e2, self.e3, self.e4]
    }
}

impl SpectralResult {
    pub fn sector(&self, label: SectorLabel) -> &SectorSpectrum {
        &self.sectors[label.index()]
    }

    pub fn ground(&self) -> MergedState {
        self.merged[0]
    }

    pub fn ground_vector(&self) -> &[f64] {
        let g = self.ground();
        &self.sector(g.sector).vectors[g.local]
    }

    /// Symmetry-resolved levels; `NaN` for levels missing at tiny cutoffs.
    pub fn levels(&self) -> SymmetryLevels {
        let get = |l: SectorLabel, i: usize| self.sector(l).values.get(i).copied().unwrap_or(f64::NAN);
        SymmetryLevels {
            e0: get(SectorLabel::PP, 0),
            e1: get(SectorLabel::PM, 0),
            e2: get(SectorLabel::MP, 0),
            e3: get(SectorLabel::MM, 0),
            e4: get(SectorLabel::PP, 1),
        }
    }

    pub fn worst_deficit(&self) -> f64 {
        self.convergence.iter().map(|r| r.deficit).fold(0.0, f64::max)
    }

    /// Observables of the merged ground state.
    pub fn ground_observables(&self) -> Result<ObservableSet> {
        let basis = build_basis(self.cutoff_used)?;
        let g = self.ground();
        evaluate_local(self.ground_vector(), basis.sector(g.sector), self.params.eta)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SpectralOptions {
    /// Number of merged states whose convergence is enforced.
    pub k: usize,
    pub c_start: usize,
    pub c_max: usize,
    /// Raise `c_start` to the mean-field estimate of the needed cutoff.
    pub auto_start: bool,
    pub overlap_tol: f64,
    pub eigen: EigenOptions,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        SpectralOptions {
            k: 5,
            c_start: 8,
            c_max: 140,
            auto_start: true,
            overlap_tol: OVERLAP_TOLERANCE,
            eigen: EigenOptions::default(),
        }
    }
}

/// Starting cutoff from the mean-field photon number `n ≈ η(ω/2U0)f₊²`.
pub fn cutoff_estimate(p: &ModelParams) -> usize {
    let lambda = p.lambda();
    if lambda <= 1.0 {
        return 8;
    }
    let n = p.eta * p.omega / (2.0 * p.u0) * f_plus(lambda).powi(2);
    (n + 4.0 * n.sqrt() + 6.0).ceil() as usize
}

/// Next cutoff of the convergence loop, `C + ⌈η⌉ + 2`.
pub fn next_cutoff(c: usize, eta: f64) -> usize {
    c + eta.ceil() as usize + 2
}

/// Orders states by energy; states within the tie window follow sector order.
pub fn merge_states(sectors: &[SectorSpectrum]) -> Vec<MergedState> {
    let mut all: Vec<MergedState> = sectors
        .iter()
        .flat_map(|s| s.values.iter().enumerate().map(move |(i, &e)| MergedState { energy: e, sector: s.label, local: i }))
        .collect();
    all.sort_by(|a, b| a.energy.total_cmp(&b.energy).then(a.sector.index().cmp(&b.sector.index())));
    let mut out = Vec::with_capacity(all.len());
    let mut i = 0;
    while i < all.len() {
        let e0 = all[i].energy;
        let mut j = i + 1;
        while j < all.len() && all[j].energy - e0 <= TIE_TOLERANCE * e0.abs().max(1.0) {
            j += 1;
        }
        let mut group = all[i..j].to_vec();
        group.sort_by_key(|s| (s.sector.index(), s.local));
        out.extend(group);
        i = j;
    }
    out
}

/// Diagonalizes all four sectors at one cutoff, `per_sector` states each.
pub fn solve_at_cutoff(
    p: &ModelParams,
    cutoff: usize,
    per_sector: usize,
    eigen: &EigenOptions,
    warm: Option<&SpectralResult>,
) -> Result<SpectralResult> {
    let basis = build_basis(cutoff)?;
    let blocks = sector_hamiltonians(p, &basis)?;
    let old_basis = match warm {
        Some(w) => Some(build_basis(w.cutoff_used)?),
        None => None,
    };
    let sectors: Vec<SectorSpectrum> = blocks
        .par_iter()
        .zip(SectorLabel::ALL.par_iter())
        .map(|(h, &label)| {
            let dim = h.dim();
            let k = per_sector.min(dim);
            if k == 0 {
                return Ok(SectorSpectrum { label, values: vec![], vectors: vec![] });
            }
            let guesses: Vec<Vec<f64>> = match (warm, &old_basis) {
                (Some(w), Some(ob)) => {
                    w.sector(label).vectors.iter().map(|v| pad_vector(v, label, ob, &basis)).collect()
                }
                _ => vec![],
            };
            let e = lowest_eigenpairs_csr(&h.matrix, k, &guesses, eigen)?;
            Ok(SectorSpectrum { label, values: e.values, vectors: e.vectors })
        })
        .collect::<Result<_>>()?;
    let merged = merge_states(&sectors);
    Ok(SpectralResult {
        params: *p,
        cutoff_used: cutoff,
        sectors,
        merged,
        convergence: vec![],
        cutoff_history: vec![cutoff],
    })
}

/// Embeds a sector vector from a smaller cutoff into a larger one, padding with zeros.
pub fn pad_vector(v: &[f64], label: SectorLabel, from: &FockBasis, to: &FockBasis) -> Vec<f64> {
    let src = from.sector(label);
    let dst = to.sector(label);
    let mut out = vec![0.0; dst.len()];
    for (i, &x) in v.iter().enumerate() {
        if let Some(j) = dst.local_index(&src.state(i)) {
            out[j] = x;
        }
    }
    out
}

/// Overlap deficits of the lowest `k` merged states of `small` against `large`.
///
/// States are matched by sector and position; inside a degenerate cluster the
/// deficits come from the singular values of the cluster overlap matrix.
pub fn overlap_deficits(small: &SpectralResult, large: &SpectralResult, k: usize) -> Result<Vec<ConvergenceRecord>> {
    let from = build_basis(small.cutoff_used)?;
    let to = build_basis(large.cutoff_used)?;
    let mut out = Vec::new();
    for (state, m) in small.merged.iter().take(k).enumerate() {
        let s = small.sector(m.sector);
        let l = large.sector(m.sector);
        let (lo, hi) = cluster_bounds(&s.values, m.local);
        if hi > l.vectors.len() {
            return Err(Error::Input("larger cutoff has fewer states than the smaller one".into()));
        }
        let padded: Vec<Vec<f64>> = (lo..hi).map(|i| pad_vector(&s.vectors[i], m.sector, &from, &to)).collect();
        let deficit = if hi - lo == 1 {
            1.0 - dot(&padded[0], &l.vectors[m.local]).abs()
        } else {
            let n = hi - lo;
            let o = DMatrix::from_fn(n, n, |i, j| dot(&padded[i], &l.vectors[lo + j]));
            let mut sv: Vec<f64> = o.singular_values().iter().copied().collect();
            sv.sort_by(|a, b| b.total_cmp(a));
            1.0 - sv[m.local - lo]
        };
        out.push(ConvergenceRecord { state, sector: m.sector, local: m.local, deficit });
    }
    Ok(out)
}

/// `[lo, hi)` of the cluster containing `i`, split at gaps of at least [`CLUSTER_GAP`].
fn cluster_bounds(values: &[f64], i: usize) -> (usize, usize) {
    let mut lo = i;
    while lo > 0 && values[lo] - values[lo - 1] < CLUSTER_GAP {
        lo -= 1;
    }
    let mut hi = i + 1;
    while hi < values.len() && values[hi] - values[hi - 1] < CLUSTER_GAP {
        hi += 1;
    }
    (lo, hi)
}

/// Raises the cutoff by `⌈η⌉ + 2` until the lowest `k` states stop changing.
pub fn converged_ground_state(p: &ModelParams, c_start: usize, k: usize) -> Result<SpectralResult> {
    converged_spectrum(p, &SpectralOptions { c_start, k, ..Default::default() })
}

/// [`converged_ground_state`] with explicit options.
pub fn converged_spectrum(p: &ModelParams, opts: &SpectralOptions) -> Result<SpectralResult> {
    p.validate()?;
    if opts.c_start < 2 || opts.k == 0 {
        return Err(Error::Input("need a starting cutoff of at least 2 and k >= 1".into()));
    }
    let mut c = if opts.auto_start { opts.c_start.max(cutoff_estimate(p)) } else { opts.c_start };
    if c > opts.c_max {
        c = opts.c_max.max(opts.c_start);
    }
    let per_sector = opts.k + 1;
    let mut history = vec![c];
    let mut small = solve_at_cutoff(p, c, per_sector, &opts.eigen, None)?;
    loop {
        let c2 = next_cutoff(c, p.eta);
        if c2 > opts.c_max {
            let worst = if small.convergence.is_empty() { f64::NAN } else { small.worst_deficit() };
            return Err(Error::Convergence { cutoff: c, worst_deficit: worst });
        }
        history.push(c2);
        let mut large = solve_at_cutoff(p, c2, per_sector, &opts.eigen, Some(&small))?;
        let records = overlap_deficits(&small, &large, opts.k)?;
        let ok = records.iter().all(|r| r.deficit < opts.overlap_tol);
        large.convergence = records;
        if ok {
            large.cutoff_history = history;
            return Ok(large);
        }
        small = large;
        c = c2;
    }
}

/// Summary of one sweep point without eigenvectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub params: ModelParams,
    pub lambda: f64,
    pub cutoff: usize,
    pub levels: SymmetryLevels,
    pub merged: Vec<MergedState>,
    pub worst_deficit: f64,
    pub observables: ObservableSet,
}

impl SweepPoint {
    pub fn from_result(r: &SpectralResult) -> Result<Self> {
        Ok(SweepPoint {
            params: r.params,
            lambda: r.params.lambda(),
            cutoff: r.cutoff_used,
            levels: r.levels(),
            merged: r.merged.clone(),
            worst_deficit: r.worst_deficit(),
            observables: r.ground_observables()?,
        })
    }

    pub fn n_rescaled(&self) -> f64 {
        self.observables.n_rescaled_mean()
    }
}

/// Error at a given grid point.
fn at_point(g0: f64, e: Error) -> Error {
    match e {
        Error::Input(m) => Error::Input(format!("g0 = {g0}: {m}")),
        other => other,
    }
}

/// Converged spectra and ground-state observables over a grid of `g0`.
pub fn spectrum_sweep(template: &ModelParams, grid: &[f64], opts: &SpectralOptions) -> Result<Vec<SweepPoint>> {
    if grid.is_empty() {
        return Err(Error::Input("empty coupling grid".into()));
    }
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Input("coupling grid must be ascending".into()));
    }
    grid.par_iter()
        .map(|&g0| {
            let p = template.with_g0(g0);
            converged_spectrum(&p, opts).and_then(|r| SweepPoint::from_result(&r)).map_err(|e| at_point(g0, e))
        })
        .collect()
}

/// Index `i` maximizing `|n(i+1) - n(i)|` of the rescaled photon number.
pub fn largest_jump(points: &[SweepPoint]) -> Option<(usize, f64)> {
    points
        .windows(2)
        .enumerate()
        .map(|(i, w)| (i, w[1].n_rescaled() - w[0].n_rescaled()))
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
}

/// Adds points by repeated bisection of the interval holding the largest jump.
///
/// Returns the sorted union of the original and the new points.
pub fn refine_jump(template: &ModelParams, points: Vec<SweepPoint>, opts: &SpectralOptions, bisections: usize) -> Result<Vec<SweepPoint>> {
    let mut pts = points;
    for _ in 0..bisections {
        let Some((i, _)) = largest_jump(&pts) else { break };
        let mid = 0.5 * (pts[i].params.g0 + pts[i + 1].params.g0);
        let new = spectrum_sweep(template, &[mid], opts)?.remove(0);
        pts.insert(i + 1, new);
    }
    Ok(pts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_breaks_ties_by_sector() {
        let s = |label, values: Vec<f64>| SectorSpectrum { label, vectors: vec![vec![]; values.len()], values };
        let sectors = vec![
            s(SectorLabel::PP, vec![0.0, 2.0]),
            s(SectorLabel::PM, vec![1.0 + 1e-12]),
            s(SectorLabel::MP, vec![1.0]),
            s(SectorLabel::MM, vec![1.0 - 1e-12]),
        ];
        let m = merge_states(&sectors);
        let labels: Vec<_> = m.iter().map(|x| x.sector).collect();
        assert_eq!(labels, vec![SectorLabel::PP, SectorLabel::PM, SectorLabel::MP, SectorLabel::MM, SectorLabel::PP]);
    }

    #[test]
    fn clusters() {
        let v = [0.0, 1.0, 1.0 + 1e-10, 2.0];
        assert_eq!(cluster_bounds(&v, 1), (1, 3));
        assert_eq!(cluster_bounds(&v, 2), (1, 3));
        assert_eq!(cluster_bounds(&v, 0), (0, 1));
    }

    #[test]
    fn zero_coupling_converges_immediately() {
        let p = ModelParams::new(0.0, 1.0);
        let r = converged_ground_state(&p, 4, 4).unwrap();
        assert_eq!(r.cutoff_history.len(), 2);
        assert_eq!(r.worst_deficit(), 0.0);
        let l = r.levels();
        assert!(l.e0.abs() < 1e-12);
        for e in [l.e1, l.e2, l.e3] {
            assert!((e - 1.0).abs() < 1e-12);
        }
        assert_eq!(r.ground().sector, SectorLabel::PP);
    }

    #[test]
    fn next_cutoff_rounds_eta_up() {
        assert_eq!(next_cutoff(10, 1.0), 13);
        assert_eq!(next_cutoff(10, 2.5), 15);
    }
}
