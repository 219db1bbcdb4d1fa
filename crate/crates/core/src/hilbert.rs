//! Truncated three-mode Fock basis and its parity sectors.
//!
//! A cutoff `C` keeps occupations `0..C` in every mode, so the basis has `C³`
//! states ordered lexicographically with `na` slowest. The two parities
//! `S1 = (-1)^(na+nb)` and `S2 = (-1)^(na+nc)` split it into four sectors.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One of the three bosonic modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    A,
    B,
    C,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::A, Mode::B, Mode::C];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> char {
        ['a', 'b', 'c'][self as usize]
    }
}

/// Occupation numbers `|na nb nc>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FockState {
    pub na: u32,
    pub nb: u32,
    pub nc: u32,
}

impl FockState {
    pub const VACUUM: FockState = FockState { na: 0, nb: 0, nc: 0 };

    pub const fn new(na: u32, nb: u32, nc: u32) -> Self {
        FockState { na, nb, nc }
    }

    pub fn get(&self, mode: Mode) -> u32 {
        self.as_array()[mode.index()]
    }

    pub fn as_array(&self) -> [u32; 3] {
        [self.na, self.nb, self.nc]
    }

    pub fn from_array(n: [u32; 3]) -> Self {
        FockState { na: n[0], nb: n[1], nc: n[2] }
    }

    pub fn total(&self) -> u32 {
        self.na + self.nb + self.nc
    }

    /// `(na, nb, nc) -> (nc, na, nb)`.
    pub fn cyclic(&self) -> Self {
        FockState { na: self.nc, nb: self.na, nc: self.nb }
    }

    /// Removes one photon from `mode`, `None` for an empty mode.
    pub fn lowered(&self, mode: Mode) -> Option<Self> {
        let mut n = self.as_array();
        n[mode.index()] = n[mode.index()].checked_sub(1)?;
        Some(Self::from_array(n))
    }

    pub fn raised(&self, mode: Mode) -> Self {
        let mut n = self.as_array();
        n[mode.index()] += 1;
        Self::from_array(n)
    }
}

impl fmt::Display for FockState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|{},{},{}>", self.na, self.nb, self.nc)
    }
}

/// Joint eigenvalues `(s1, s2)` of the two parity operators. `s3 = s1·s2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SectorLabel {
    s1: i8,
    s2: i8,
}

impl SectorLabel {
    pub const PP: SectorLabel = SectorLabel { s1: 1, s2: 1 };
    pub const PM: SectorLabel = SectorLabel { s1: 1, s2: -1 };
    pub const MP: SectorLabel = SectorLabel { s1: -1, s2: 1 };
    pub const MM: SectorLabel = SectorLabel { s1: -1, s2: -1 };
    /// Canonical order, also used to break energy ties.
    pub const ALL: [SectorLabel; 4] = [Self::PP, Self::PM, Self::MP, Self::MM];

    pub fn new(s1: i8, s2: i8) -> Result<Self> {
        if s1.abs() != 1 || s2.abs() != 1 {
            return Err(Error::Domain(format!("sector labels must be +1 or -1, got ({s1}, {s2})")));
        }
        Ok(SectorLabel { s1, s2 })
    }

    pub fn s1(&self) -> i8 {
        self.s1
    }

    pub fn s2(&self) -> i8 {
        self.s2
    }

    pub fn s3(&self) -> i8 {
        self.s1 * self.s2
    }

    /// Position in [`SectorLabel::ALL`].
    pub fn index(&self) -> usize {
        (((1 - self.s1) / 2) * 2 + (1 - self.s2) / 2) as usize
    }

    /// Label of the sector reached by a cyclic relabelling of the modes.
    pub fn cyclic(&self) -> Self {
        SectorLabel { s1: self.s2, s2: self.s1 * self.s2 }
    }

    /// Label after adding or removing one photon in `mode`.
    pub fn flipped(&self, mode: Mode) -> Self {
        match mode {
            Mode::A => SectorLabel { s1: -self.s1, s2: -self.s2 },
            Mode::B => SectorLabel { s1: -self.s1, s2: self.s2 },
            Mode::C => SectorLabel { s1: self.s1, s2: -self.s2 },
        }
    }
}

impl fmt::Display for SectorLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = |s: i8| if s > 0 { '+' } else { '-' };
        write!(f, "({},{})", c(self.s1), c(self.s2))
    }
}

impl std::str::FromStr for SectorLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SectorLabel::ALL
            .into_iter()
            .find(|l| l.to_string() == s.trim())
            .ok_or_else(|| Error::Input(format!("unknown sector label {s:?}")))
    }
}

/// Parity sector of a Fock state.
pub fn sector_of(s: &FockState) -> SectorLabel {
    let sign = |n: u32| if n % 2 == 0 { 1 } else { -1 };
    SectorLabel { s1: sign(s.na + s.nb), s2: sign(s.na + s.nc) }
}

/// Truncated basis with its sector partition.
#[derive(Debug, Clone)]
pub struct FockBasis {
    cutoff: usize,
    dim: usize,
    sectors: [Vec<usize>; 4],
    local: Vec<u32>,
}

/// Ordered global indices of one sector.
#[derive(Debug, Clone, Copy)]
pub struct SectorBasis<'a> {
    pub label: SectorLabel,
    pub indices: &'a [usize],
    basis: &'a FockBasis,
}

/// Builds the basis for a cutoff of `cutoff` levels per mode.
pub fn build_basis(cutoff: usize) -> Result<FockBasis> {
    if cutoff == 0 {
        return Err(Error::Domain("cutoff must be at least 1".into()));
    }
    let dim = cutoff
        .checked_mul(cutoff)
        .and_then(|x| x.checked_mul(cutoff))
        .filter(|&d| d <= u32::MAX as usize)
        .ok_or_else(|| Error::Capacity(format!("cutoff {cutoff} gives more than 2^32 states")))?;
    let mut sectors: [Vec<usize>; 4] = Default::default();
    let mut local = Vec::with_capacity(dim);
    let c = cutoff as u32;
    for na in 0..c {
        for nb in 0..c {
            for nc in 0..c {
                let s = sector_of(&FockState::new(na, nb, nc)).index();
                local.push(sectors[s].len() as u32);
                sectors[s].push(local.len() - 1);
            }
        }
    }
    Ok(FockBasis { cutoff, dim, sectors, local })
}

impl FockBasis {
    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Global index of a state, `None` outside the cutoff.
    pub fn index(&self, s: &FockState) -> Option<usize> {
        let c = self.cutoff as u32;
        if s.na >= c || s.nb >= c || s.nc >= c {
            return None;
        }
        let c = self.cutoff;
        Some((s.na as usize * c + s.nb as usize) * c + s.nc as usize)
    }

    pub fn state(&self, index: usize) -> FockState {
        debug_assert!(index < self.dim);
        let c = self.cutoff;
        FockState::new((index / (c * c)) as u32, ((index / c) % c) as u32, (index % c) as u32)
    }

    pub fn states(&self) -> impl Iterator<Item = FockState> + '_ {
        (0..self.dim).map(|i| self.state(i))
    }

    /// Sector and position within the sector of a global index.
    pub fn locate(&self, index: usize) -> (SectorLabel, usize) {
        (sector_of(&self.state(index)), self.local[index] as usize)
    }

    pub fn sector(&self, label: SectorLabel) -> SectorBasis<'_> {
        SectorBasis { label, indices: &self.sectors[label.index()], basis: self }
    }

    /// All four sectors in canonical order.
    pub fn sector_decompose(&self) -> [SectorBasis<'_>; 4] {
        SectorLabel::ALL.map(|l| self.sector(l))
    }

    pub fn sector_dim(&self, label: SectorLabel) -> usize {
        self.sectors[label.index()].len()
    }

    /// Diagonal of a parity operator: `S1`, `S2` or `S3 = S1·S2` for `which = 1, 2, 3`.
    pub fn parity_diagonal(&self, which: u8) -> Vec<f64> {
        self.states()
            .map(|s| {
                let l = sector_of(&s);
                let v = match which {
                    1 => l.s1(),
                    2 => l.s2(),
                    _ => l.s3(),
                };
                v as f64
            })
            .collect()
    }

    /// Permutation of global indices induced by the cyclic mode relabelling.
    pub fn cyclic_permutation(&self) -> Vec<usize> {
        self.states().map(|s| self.index(&s.cyclic()).expect("cyclic image inside cutoff")).collect()
    }
}

impl<'a> SectorBasis<'a> {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn state(&self, local: usize) -> FockState {
        self.basis.state(self.indices[local])
    }

    /// Position of a state within this sector, `None` if it lies elsewhere.
    pub fn local_index(&self, s: &FockState) -> Option<usize> {
        if sector_of(s) != self.label {
            return None;
        }
        self.basis.index(s).map(|g| self.basis.local[g] as usize)
    }

    pub fn basis(&self) -> &'a FockBasis {
        self.basis
    }
}
