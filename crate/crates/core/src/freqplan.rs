//! Pump-tone planning for the three-resonator circuit.
//!
//! Frequencies are angular and unit-agnostic; [`ResonatorTable::from_ghz`]
//! converts from cyclic GHz.

use std::f64::consts::TAU;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::Mode;
use crate::model::LAMBDA_C;

/// Mode frequencies of one resonator, fundamental first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resonator {
    pub frequencies: Vec<f64>,
    /// Per-mode Kerr strengths. Not used by the scan.
    #[serde(default)]
    pub kerr: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonatorTable {
    pub a: Resonator,
    pub b: Resonator,
    pub c: Resonator,
}

impl ResonatorTable {
    pub fn new(a: Vec<f64>, b: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        let r = |frequencies| Resonator { frequencies, kerr: Vec::new() };
        let t = ResonatorTable { a: r(a), b: r(b), c: r(c) };
        t.validate()?;
        Ok(t)
    }

    /// Builds a table from `[a, b, c]` rows in cyclic GHz, one row per harmonic index.
    pub fn from_ghz(rows: &[[f64; 3]]) -> Result<Self> {
        let col = |i: usize| rows.iter().map(|r| TAU * r[i]).collect::<Vec<_>>();
        Self::new(col(0), col(1), col(2))
    }

    pub fn resonator(&self, m: Mode) -> &Resonator {
        match m {
            Mode::A => &self.a,
            Mode::B => &self.b,
            Mode::C => &self.c,
        }
    }

    pub fn fundamentals(&self) -> [f64; 3] {
        Mode::ALL.map(|m| self.resonator(m).frequencies[0])
    }

    pub fn validate(&self) -> Result<()> {
        for m in Mode::ALL {
            let f = &self.resonator(m).frequencies;
            if f.is_empty() {
                return Err(Error::Precondition(format!("resonator {} has no modes", m.label())));
            }
            if f.iter().any(|&w| !(w.is_finite() && w > 0.0)) {
                return Err(Error::Input(format!("resonator {} has a non-positive frequency", m.label())));
            }
            if f.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Input(format!(
                    "resonator {} frequencies must increase with mode index",
                    m.label()
                )));
            }
        }
        Ok(())
    }

    /// All listed modes, resonator-major.
    pub fn modes(&self) -> Vec<ModeRef> {
        let mut out = Vec::new();
        for m in Mode::ALL {
            for (n, &w) in self.resonator(m).frequencies.iter().enumerate() {
                out.push(ModeRef { resonator: m, index: n, frequency: w });
            }
        }
        out
    }

    pub fn scaled(&self, s: f64) -> Self {
        let sc = |r: &Resonator| Resonator {
            frequencies: r.frequencies.iter().map(|w| w * s).collect(),
            kerr: r.kerr.iter().map(|u| u * s).collect(),
        };
        ResonatorTable { a: sc(&self.a), b: sc(&self.b), c: sc(&self.c) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeRef {
    pub resonator: Mode,
    pub index: usize,
    pub frequency: f64,
}

impl ModeRef {
    fn name(&self) -> String {
        format!("{}{}", self.resonator.label(), self.index)
    }
}

/// One of the four pump tones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tone {
    /// Physical (positive) drive frequency.
    pub frequency: f64,
    /// Same, without the small detuning.
    pub carrier: f64,
    pub detuning: f64,
    /// Signs of `(a, b, c)` in the driven process; `+` is a creation operator.
    pub signs: [i8; 3],
    /// The formal frequency was negative and the process is driven through its conjugate.
    pub conjugated: bool,
    pub process: String,
}

const INTENDED: [[i8; 3]; 4] = [[1, 1, 1], [1, 1, -1], [1, -1, 1], [1, -1, -1]];
const DETUNING_FACTORS: [f64; 4] = [3.0, 1.0, 1.0, 1.0];

fn describe(parts: &[(String, i8)]) -> String {
    parts
        .iter()
        .map(|(n, s)| if *s > 0 { format!("{n}†") } else { n.clone() })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Four tones activating `a†b†c†`, `a†b†c`, `a†bc†`, `ab†c†` (or their conjugates), detuned by `(3ω, ω, ω, ω)`.
pub fn plan_tones(table: &ResonatorTable, omega_eff: f64) -> Result<[Tone; 4]> {
    table.validate()?;
    if !(omega_eff.is_finite() && omega_eff >= 0.0) {
        return Err(Error::Input(format!("effective frequency must be non-negative, got {omega_eff}")));
    }
    let f = table.fundamentals();
    if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
        return Err(Error::Precondition("resonator fundamentals must be distinct".into()));
    }
    let mut out = Vec::with_capacity(4);
    for (signs, k) in INTENDED.iter().zip(DETUNING_FACTORS) {
        let carrier: f64 = (0..3).map(|i| signs[i] as f64 * f[i]).sum();
        let detuning = k * omega_eff;
        let formal = carrier + detuning;
        if formal == 0.0 || carrier == 0.0 {
            return Err(Error::Infeasible(format!("tone for signs {signs:?} has zero frequency")));
        }
        let conjugated = formal < 0.0;
        if conjugated != (carrier < 0.0) {
            return Err(Error::Infeasible(format!("detuning flips the sign of tone {signs:?}")));
        }
        let s = if conjugated { signs.map(|x| -x) } else { *signs };
        let parts: Vec<(String, i8)> = Mode::ALL.iter().zip(s).map(|(m, x)| (format!("{}0", m.label()), x)).collect();
        out.push(Tone {
            frequency: formal.abs(),
            carrier: carrier.abs(),
            detuning: if conjugated { -detuning } else { detuning },
            signs: s,
            conjugated,
            process: describe(&parts),
        });
    }
    Ok(out.try_into().expect("four tones"))
}

/// Which tone frequency spurious resonances are measured from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetuningReference {
    /// The tone minus its small detuning.
    #[default]
    Carrier,
    /// The actual drive frequency.
    Drive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spurious {
    pub process: String,
    pub modes: Vec<String>,
    pub resonance: f64,
    /// Index (0-based) of the closest tone.
    pub tone: usize,
    pub detuning: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpuriousReport {
    /// Sorted by increasing detuning, then by description.
    pub processes: Vec<Spurious>,
    pub delta: f64,
    pub ratio: f64,
}

/// Signed two- and three-photon combinations over all listed modes, skipping
/// the intended processes and pairs where one mode appears with both signs.
fn combinations(table: &ResonatorTable) -> Vec<(Vec<(ModeRef, i8)>, f64)> {
    let modes = table.modes();
    let n = modes.len();
    let mut out = Vec::new();
    let mut push = |idx: &[usize], signs: &[i8]| {
        for i in 0..idx.len() {
            for j in i + 1..idx.len() {
                if idx[i] == idx[j] && signs[i] != signs[j] {
                    return;
                }
            }
        }
        let terms: Vec<(ModeRef, i8)> = idx.iter().zip(signs).map(|(&k, &s)| (modes[k], s)).collect();
        let w: f64 = terms.iter().map(|(m, s)| *s as f64 * m.frequency).sum();
        // A process and its conjugate are the same resonance; keep the positive one.
        if w <= 0.0 {
            return;
        }
        if terms.len() == 3 && terms.iter().all(|(m, _)| m.index == 0) {
            let mut sig = [0i8; 3];
            let mut seen = [false; 3];
            for (m, s) in &terms {
                seen[m.resonator.index()] = true;
                sig[m.resonator.index()] = *s;
            }
            if seen.iter().all(|&x| x) && INTENDED.iter().any(|t| *t == sig || t.map(|x| -x) == sig) {
                return;
            }
        }
        out.push((terms, w));
    };
    let pm = [1i8, -1];
    for i in 0..n {
        for j in i..n {
            for &si in &pm {
                for &sj in &pm {
                    if i == j && sj < si {
                        continue;
                    }
                    push(&[i, j], &[si, sj]);
                    for k in j..n {
                        for &sk in &pm {
                            if (j == k && sk < sj) || (i == j && j == k && sk < si) {
                                continue;
                            }
                            push(&[i, j, k], &[si, sj, sk]);
                        }
                    }
                }
            }
        }
    }
    out
}

/// Detuning of every unwanted process from its nearest tone; `δ` is the minimum and `ratio = g/δ`.
pub fn spurious_scan(
    table: &ResonatorTable,
    tones: &[Tone; 4],
    g: f64,
    reference: DetuningReference,
) -> Result<SpuriousReport> {
    table.validate()?;
    let freqs: Vec<f64> = tones
        .iter()
        .map(|t| match reference {
            DetuningReference::Carrier => t.carrier,
            DetuningReference::Drive => t.frequency,
        })
        .collect();
    let mut processes: Vec<Spurious> = combinations(table)
        .into_iter()
        .map(|(terms, w)| {
            let (tone, det) = freqs
                .iter()
                .enumerate()
                .map(|(i, &f)| (i, (f - w).abs()))
                .min_by(|x, y| x.1.total_cmp(&y.1))
                .expect("four tones");
            let parts: Vec<(String, i8)> = terms.iter().map(|(m, s)| (m.name(), *s)).collect();
            Spurious {
                process: describe(&parts),
                modes: terms.iter().map(|(m, _)| m.name()).collect(),
                resonance: w,
                tone,
                detuning: det,
            }
        })
        .collect();
    processes.sort_by(|x, y| x.detuning.total_cmp(&y.detuning).then_with(|| x.process.cmp(&y.process)));
    let delta = processes.first().map_or(f64::INFINITY, |s| s.detuning);
    let ratio = if delta > 0.0 { g / delta } else { f64::INFINITY };
    Ok(SpuriousReport { processes, delta, ratio })
}

/// Coupling that puts the effective model at `λ = λc`, i.e. `3√(ωU)/4`.
pub fn required_coupling(omega: f64, u: f64) -> Result<f64> {
    if !(omega > 0.0 && u > 0.0) {
        return Err(Error::Domain(format!("need omega > 0 and U > 0, got {omega}, {u}")));
    }
    Ok(LAMBDA_C * (omega * u / 2.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Safe,
    Marginal,
    /// A tone sits exactly on an unwanted resonance.
    Resonant,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Safe => "safe",
            Verdict::Marginal => "marginal",
            Verdict::Resonant => "resonant",
        })
    }
}

pub fn verdict(ratio: f64, threshold: f64) -> Verdict {
    if !ratio.is_finite() {
        Verdict::Resonant
    } else if ratio < threshold {
        Verdict::Safe
    } else {
        Verdict::Marginal
    }
}

pub const DEFAULT_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanOptions {
    pub omega_eff: f64,
    /// Kerr strength of the effective model; `g` defaults to the critical value for it.
    pub u_eff: f64,
    /// Pump amplitude and cubic coefficient. When both are given `g = β χ₃ / 2`.
    pub beta_d: Option<f64>,
    pub chi3: Option<f64>,
    pub reference: DetuningReference,
    pub threshold: f64,
}

impl PlanOptions {
    pub fn new(omega_eff: f64, u_eff: f64) -> Self {
        PlanOptions {
            omega_eff,
            u_eff,
            beta_d: None,
            chi3: None,
            reference: DetuningReference::Carrier,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrivePlan {
    pub omega_eff: f64,
    pub u_eff: f64,
    pub tones: [Tone; 4],
    pub beta_d: Option<f64>,
    pub chi3: Option<f64>,
    pub g: f64,
    pub reference: DetuningReference,
    pub spurious: Vec<Spurious>,
    pub delta: f64,
    pub ratio: f64,
    pub threshold: f64,
    pub verdict: Verdict,
}

impl DrivePlan {
    pub fn build(table: &ResonatorTable, opts: &PlanOptions) -> Result<Self> {
        let tones = plan_tones(table, opts.omega_eff)?;
        let g = match (opts.beta_d, opts.chi3) {
            (Some(b), Some(c)) => b * c / 2.0,
            (None, None) => required_coupling(opts.omega_eff, opts.u_eff)?,
            _ => return Err(Error::Input("beta_d and chi3 must be given together".into())),
        };
        let rep = spurious_scan(table, &tones, g, opts.reference)?;
        Ok(DrivePlan {
            omega_eff: opts.omega_eff,
            u_eff: opts.u_eff,
            tones,
            beta_d: opts.beta_d,
            chi3: opts.chi3,
            g,
            reference: opts.reference,
            delta: rep.delta,
            ratio: rep.ratio,
            threshold: opts.threshold,
            verdict: verdict(rep.ratio, opts.threshold),
            spurious: rep.processes,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    /// Plain-text report. Frequencies are printed divided by `unit` (e.g. `2π·1e9` for GHz).
    pub fn report(&self, unit: f64, unit_name: &str, max_rows: usize) -> String {
        let mut s = String::new();
        let u = |w: f64| w / unit;
        let _ = writeln!(s, "effective omega  {:.6} {unit_name}", u(self.omega_eff));
        let _ = writeln!(s, "coupling g       {:.6} {unit_name}", u(self.g));
        for (i, t) in self.tones.iter().enumerate() {
            let _ = writeln!(
                s,
                "tone {}  {:>12.6} {unit_name}  {}{}",
                i + 1,
                u(t.frequency),
                t.process,
                if t.conjugated { "  (conjugate)" } else { "" }
            );
        }
        let _ = writeln!(s, "closest unwanted resonances:");
        for sp in self.spurious.iter().take(max_rows) {
            let _ = writeln!(
                s,
                "  {:<20} {:>12.6} {unit_name}  tone {}  detuning {:.6}",
                sp.process,
                u(sp.resonance),
                sp.tone + 1,
                u(sp.detuning)
            );
        }
        let _ = writeln!(s, "delta            {:.6} {unit_name}", u(self.delta));
        let _ = writeln!(s, "g/delta          {:.4e}  ({})", self.ratio, self.verdict);
        s
    }
}
