//! Mode operators and the trimer Hamiltonian as sparse real matrices.

use crate::error::{Error, Result};
use crate::hilbert::{sector_of, FockBasis, FockState, Mode, SectorLabel};
use crate::model::{derive_couplings, ModelParams};
use crate::sparse::CsrMatrix;

/// Largest cross-sector element tolerated by [`restrict_to_sector`].
pub const LEAKAGE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Annihilate,
    Create,
    Number,
    QuadratureX,
}

/// Basis an operator is written in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisTag {
    Global { cutoff: usize },
    Sector { cutoff: usize, label: SectorLabel },
}

#[derive(Debug, Clone)]
pub struct SparseOperator {
    pub matrix: CsrMatrix,
    pub tag: BasisTag,
    pub hermitian: bool,
}

impl SparseOperator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cutoff(&self) -> usize {
        match self.tag {
            BasisTag::Global { cutoff } | BasisTag::Sector { cutoff, .. } => cutoff,
        }
    }
}

/// Ladder, number or quadrature operator of one mode on the full basis.
///
/// Transitions leaving the cutoff are dropped.
pub fn mode_operator(b: &FockBasis, mode: Mode, kind: OpKind) -> SparseOperator {
    let mut t = Vec::with_capacity(2 * b.dim());
    for (j, s) in b.states().enumerate() {
        let n = s.get(mode);
        let lower = || s.lowered(mode).and_then(|s| b.index(&s)).map(|i| (i, j, (n as f64).sqrt()));
        let raise = || b.index(&s.raised(mode)).map(|i| (i, j, (n as f64 + 1.0).sqrt()));
        match kind {
            OpKind::Annihilate => t.extend(lower()),
            OpKind::Create => t.extend(raise()),
            OpKind::Number => t.push((j, j, n as f64)),
            OpKind::QuadratureX => {
                t.extend(lower());
                t.extend(raise());
            }
        }
    }
    let hermitian = matches!(kind, OpKind::Number | OpKind::QuadratureX);
    SparseOperator {
        matrix: CsrMatrix::from_triplets(b.dim(), b.dim(), t).expect("indices inside basis"),
        tag: BasisTag::Global { cutoff: b.cutoff() },
        hermitian,
    }
}

/// `H = ω Σ n_i + U Σ n_i(n_i - 1) + g x_a x_b x_c` on the full basis.
pub fn build_hamiltonian(p: &ModelParams, b: &FockBasis) -> Result<SparseOperator> {
    let c = derive_couplings(p)?;
    let diag: Vec<f64> = b
        .states()
        .map(|s| {
            s.as_array().iter().map(|&n| p.omega * n as f64 + c.u * (n as f64) * (n as f64 - 1.0)).sum()
        })
        .collect();
    let mut h = CsrMatrix::from_diagonal(&diag);
    if c.g != 0.0 {
        let x = |m| mode_operator(b, m, OpKind::QuadratureX).matrix;
        let xxx = x(Mode::A).matmul(&x(Mode::B))?.matmul(&x(Mode::C))?;
        h = h.add_scaled(&xxx, c.g)?;
    }
    Ok(SparseOperator { matrix: h, tag: BasisTag::Global { cutoff: b.cutoff() }, hermitian: true })
}

/// Sub-matrix of a global operator on one sector.
///
/// Fails if the operator couples the sector to another one.
pub fn restrict_to_sector(a: &SparseOperator, label: SectorLabel, b: &FockBasis) -> Result<SparseOperator> {
    if a.tag != (BasisTag::Global { cutoff: b.cutoff() }) {
        return Err(Error::Input("restriction needs an operator on the full basis".into()));
    }
    let sector = b.sector(label);
    for &r in sector.indices {
        let (cols, vals) = a.matrix.row(r);
        for (&j, &v) in cols.iter().zip(vals) {
            if v.abs() > LEAKAGE_TOLERANCE && sector_of(&b.state(j)) != label {
                return Err(Error::Structure { row: r, col: j, value: v });
            }
        }
    }
    // Columns of other sectors can still hold entries if rows of this sector
    // are empty there; rows of other sectors are checked by their own restriction.
    let m = a.matrix.extract(sector.indices, sector.len(), |j| {
        let (l, k) = b.locate(j);
        (l == label).then_some(k)
    });
    Ok(SparseOperator { matrix: m, tag: BasisTag::Sector { cutoff: b.cutoff(), label }, hermitian: a.hermitian })
}

/// The Hamiltonian split into its four sector blocks, in canonical order.
pub fn sector_hamiltonians(p: &ModelParams, b: &FockBasis) -> Result<[SparseOperator; 4]> {
    let h = build_hamiltonian(p, b)?;
    let blocks: Vec<SparseOperator> =
        SectorLabel::ALL.iter().map(|&l| restrict_to_sector(&h, l, b)).collect::<Result<_>>()?;
    Ok(blocks.try_into().expect("four sectors"))
}

/// Expansion of `x_a^ka x_b^kb x_c^kc |n>` without any cutoff.
///
/// Returns `(state, coefficient)` pairs; states are distinct.
pub fn apply_quadrature_powers(s: &FockState, powers: [u8; 3]) -> Vec<(FockState, f64)> {
    let per_mode: Vec<Vec<(u32, f64)>> =
        (0..3).map(|m| quadrature_power_1d(s.as_array()[m], powers[m])).collect();
    let mut out = Vec::with_capacity(per_mode.iter().map(Vec::len).product());
    for &(na, ca) in &per_mode[0] {
        for &(nb, cb) in &per_mode[1] {
            for &(nc, cc) in &per_mode[2] {
                out.push((FockState::new(na, nb, nc), ca * cb * cc));
            }
        }
    }
    out
}

/// `x^k |n>` for a single mode as `(n', coefficient)` pairs with nonzero weight.
pub fn quadrature_power_1d(n: u32, k: u8) -> Vec<(u32, f64)> {
    let mut cur: Vec<(u32, f64)> = vec![(n, 1.0)];
    for _ in 0..k {
        let mut next: Vec<(u32, f64)> = Vec::with_capacity(cur.len() + 1);
        let mut push = |m: u32, c: f64| match next.iter_mut().find(|e| e.0 == m) {
            Some(e) => e.1 += c,
            None => next.push((m, c)),
        };
        for &(m, c) in &cur {
            if m > 0 {
                push(m - 1, c * (m as f64).sqrt());
            }
            push(m + 1, c * (m as f64 + 1.0).sqrt());
        }
        cur = next;
    }
    cur.retain(|e| e.1 != 0.0);
    cur.sort_by_key(|e| e.0);
    cur
}

/// Exact matrix elements of a quadrature monomial between states inside the cutoff.
///
/// Unlike products of truncated matrices, entries next to the cutoff edge are
/// those of the untruncated operator.
pub fn quadrature_monomial(b: &FockBasis, powers: [u8; 3]) -> SparseOperator {
    let mut t = Vec::new();
    for (j, s) in b.states().enumerate() {
        for (m, c) in apply_quadrature_powers(&s, powers) {
            if let Some(i) = b.index(&m) {
                t.push((i, j, c));
            }
        }
    }
    SparseOperator {
        matrix: CsrMatrix::from_triplets(b.dim(), b.dim(), t).expect("indices inside basis"),
        tag: BasisTag::Global { cutoff: b.cutoff() },
        hermitian: true,
    }
}
