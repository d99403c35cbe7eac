//! Drive-transition catalog over the dressed spectrum, selectivity
//! diagnostics (Δω, Δω′, 𝔒) and the spectral-crowding scaling limit.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::device::{BareLabel, DressedSpectrum, LevelCoupling, SystemSpec};
use crate::error::{Error, Result};
use crate::units::to_ghz;

pub const DEFAULT_ELEMENT_FLOOR: f64 = 1e-6;

/// Which transition family a catalog entry belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    /// No spectator QS in an auxiliary level.
    A,
    /// Exactly one spectator in an auxiliary level.
    APrime,
    /// Two or more spectators in auxiliary levels.
    Higher,
    /// The bare labels differ in more than the addressed QS.
    Mixed,
}

impl Group {
    pub fn as_str(self) -> &'static str {
        match self {
            Group::A => "A",
            Group::APrime => "A'",
            Group::Higher => "A''",
            Group::Mixed => "mixed",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Transition {
    /// Dressed indices, `from` lower in energy.
    pub from: usize,
    pub to: usize,
    pub from_label: BareLabel,
    pub to_label: BareLabel,
    /// `E_to − E_from > 0`, rad/s.
    pub frequency: f64,
    /// Same transition between the bare labels, rad/s.
    pub bare_frequency: f64,
    /// `<to| X_qs |from>` for the drive operator of `qs_index`.
    pub matrix_element: f64,
    pub qs_index: usize,
    /// Lower and upper level of the addressed QS.
    pub kind: (usize, usize),
    pub group: Group,
    /// 1 + number of spectators in auxiliary levels (levels i, ii, iii...).
    pub tier: Option<usize>,
    /// Spectator QSs sitting in auxiliary levels.
    pub excited_spectators: Vec<usize>,
}

/// Drive operator `X_qs` of every QS in the dressed basis (rows and
/// columns follow `spectrum.states`).
pub fn drive_matrices(spectrum: &DressedSpectrum, drive: &[LevelCoupling]) -> Result<Vec<DMatrix<f64>>> {
    let basis = spectrum.basis();
    let dim = basis.dim();
    if spectrum.len() != dim {
        return Err(Error::Precondition("dressed spectrum does not span the basis".into()));
    }
    let mut psi = DMatrix::<f64>::zeros(dim, dim);
    for d in 0..dim {
        let s = &spectrum.states[d];
        for (&idx, &a) in spectrum.blocks[s.block].iter().zip(&s.amplitudes) {
            psi[(idx, d)] = a;
        }
    }
    let labels: Vec<BareLabel> = (0..dim).map(|i| basis.label(i)).collect();
    let mut elements = Vec::with_capacity(spectrum.n_qs);
    for qs in 0..spectrum.n_qs {
        // X_qs Ψ, applying both directions of every drive pair
        let mut x_psi = DMatrix::<f64>::zeros(dim, dim);
        for (i, label) in labels.iter().enumerate() {
            for p in drive {
                let partner = if label.levels[qs] == p.lower {
                    p.upper
                } else if label.levels[qs] == p.upper {
                    p.lower
                } else {
                    continue;
                };
                let mut target = label.clone();
                target.levels[qs] = partner;
                let j = basis.index(&target);
                for d in 0..dim {
                    let v = psi[(i, d)];
                    if v != 0.0 {
                        x_psi[(j, d)] += p.element * v;
                    }
                }
            }
        }
        elements.push(psi.transpose() * x_psi);
    }
    Ok(elements)
}

/// Every drive-allowed transition between dressed states whose matrix
/// element exceeds `floor` times the largest element found.
pub fn transition_catalog(
    spectrum: &DressedSpectrum,
    drive: &[LevelCoupling],
    floor: f64,
) -> Result<Vec<Transition>> {
    if spectrum.is_empty() {
        return Err(Error::Precondition("empty dressed spectrum".into()));
    }
    let dim = spectrum.len();
    let elements = drive_matrices(spectrum, drive)?;
    let max = elements
        .iter()
        .flat_map(|m| m.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return Ok(Vec::new());
    }
    let cut = floor * max;

    let mut out = Vec::new();
    for (qs, m) in elements.iter().enumerate() {
        for from in 0..dim {
            for to in from + 1..dim {
                let el = m[(to, from)];
                if el.abs() <= cut {
                    continue;
                }
                let frequency = spectrum.states[to].energy - spectrum.states[from].energy;
                if frequency <= 0.0 {
                    continue;
                }
                out.push(classify(spectrum, from, to, qs, el, frequency, drive));
            }
        }
    }
    out.sort_by(|a, b| {
        a.frequency
            .total_cmp(&b.frequency)
            .then(a.from.cmp(&b.from))
            .then(a.to.cmp(&b.to))
            .then(a.qs_index.cmp(&b.qs_index))
    });
    Ok(out)
}

fn classify(
    spectrum: &DressedSpectrum,
    from: usize,
    to: usize,
    qs: usize,
    element: f64,
    frequency: f64,
    drive: &[LevelCoupling],
) -> Transition {
    let lo = &spectrum.states[from].label;
    let hi = &spectrum.states[to].label;
    let (a, b) = (lo.levels[qs], hi.levels[qs]);
    let kind = (a.min(b), a.max(b));
    let spectators_equal = lo.photons == hi.photons
        && (0..lo.levels.len()).all(|q| q == qs || lo.levels[q] == hi.levels[q]);
    let allowed = drive.iter().any(|p| (p.lower, p.upper) == kind);
    let excited: Vec<usize> = (0..lo.levels.len())
        .filter(|&q| q != qs && lo.levels[q] >= 2)
        .collect();
    let (group, tier) = if spectators_equal && allowed {
        let g = match excited.len() {
            0 => Group::A,
            1 => Group::APrime,
            _ => Group::Higher,
        };
        (g, Some(1 + excited.len()))
    } else {
        (Group::Mixed, None)
    };
    Transition {
        from,
        to,
        from_label: lo.clone(),
        to_label: hi.clone(),
        frequency,
        bare_frequency: bare_difference(spectrum, lo, hi),
        matrix_element: element,
        qs_index: qs,
        kind,
        group,
        tier,
        excited_spectators: excited,
    }
}

fn bare_difference(spectrum: &DressedSpectrum, lo: &BareLabel, hi: &BareLabel) -> f64 {
    spectrum.bare_energies[spectrum.basis().index(hi)] - spectrum.bare_energies[spectrum.basis().index(lo)]
}

/// Selectivity diagnostics for one transition kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IrrReport {
    pub kind: (usize, usize),
    /// Largest within-group spread of transition frequencies.
    pub delta_omega: f64,
    /// Smallest separation between a group-A and a group-A′ transition of
    /// the same QS.
    pub delta_omega_prime: f64,
    /// Smallest bare detuning between the same transition on two QSs.
    pub frak_o: f64,
    /// `delta_omega / delta_omega_prime`, absent when Δω′ = 0.
    pub irr_ratio: Option<f64>,
    pub irr_satisfied: bool,
}

pub const IRR_THRESHOLD: f64 = 0.1;

/// Δω, Δω′ and 𝔒 for transitions of `kind`, computed over zero-photon
/// transitions of groups A and A′.
pub fn irr_metrics(catalog: &[Transition], kind: (usize, usize)) -> Result<IrrReport> {
    if catalog.is_empty() {
        return Err(Error::Domain("empty transition catalog".into()));
    }
    let relevant: Vec<&Transition> = catalog
        .iter()
        .filter(|t| {
            t.kind == kind && t.from_label.photons == 0 && matches!(t.group, Group::A | Group::APrime)
        })
        .collect();
    if relevant.is_empty() {
        return Err(Error::Domain(format!(
            "catalog has no zero-photon transitions of kind {}<->{}",
            kind.0, kind.1
        )));
    }

    let mut groups: BTreeMap<(usize, Vec<usize>), Vec<f64>> = BTreeMap::new();
    let mut bare: BTreeMap<usize, f64> = BTreeMap::new();
    for t in &relevant {
        groups
            .entry((t.qs_index, t.excited_spectators.clone()))
            .or_default()
            .push(t.frequency);
        if t.group == Group::A {
            bare.insert(t.qs_index, t.bare_frequency);
        }
    }
    let delta_omega = groups
        .values()
        .map(|f| {
            let (lo, hi) = f.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
            hi - lo
        })
        .fold(0.0, f64::max);

    let mut delta_omega_prime = f64::INFINITY;
    for a in relevant.iter().filter(|t| t.group == Group::A) {
        for b in relevant
            .iter()
            .filter(|t| t.group == Group::APrime && t.qs_index == a.qs_index)
        {
            delta_omega_prime = delta_omega_prime.min((a.frequency - b.frequency).abs());
        }
    }
    if !delta_omega_prime.is_finite() {
        delta_omega_prime = 0.0;
    }

    let freqs: Vec<f64> = bare.values().copied().collect();
    let mut frak_o = f64::INFINITY;
    for i in 0..freqs.len() {
        for j in i + 1..freqs.len() {
            frak_o = frak_o.min((freqs[i] - freqs[j]).abs());
        }
    }
    if !frak_o.is_finite() {
        frak_o = 0.0;
    }

    let irr_ratio = (delta_omega_prime > 0.0).then(|| delta_omega / delta_omega_prime);
    Ok(IrrReport {
        kind,
        delta_omega,
        delta_omega_prime,
        frak_o,
        irr_ratio,
        irr_satisfied: frak_o > 0.0 && irr_ratio.is_some_and(|r| r < IRR_THRESHOLD),
    })
}

/// Catalog and IRR report for a spec in one call.
pub fn analyze(spec: &SystemSpec, kind: (usize, usize)) -> Result<(Vec<Transition>, IrrReport)> {
    let dressed = crate::device::diagonalize_and_label(spec)?;
    let catalog = transition_catalog(&dressed, &spec.drive, DEFAULT_ELEMENT_FLOOR)?;
    let report = irr_metrics(&catalog, kind)?;
    Ok((catalog, report))
}

/// CSV table `from,to,frequency_GHz,element,group,tier`.
pub fn write_catalog_csv<W: std::io::Write>(catalog: &[Transition], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["from", "to", "frequency_GHz", "element", "group", "tier"])?;
    for t in catalog {
        w.write_record([
            t.from_label.to_string(),
            t.to_label.to_string(),
            format!("{:.9}", to_ghz(t.frequency)),
            format!("{:.6e}", t.matrix_element.abs()),
            t.group.as_str().to_string(),
            t.tier.map_or(String::new(), |v| v.to_string()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Inputs of the spectral-crowding estimate, all as ratios.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrowdingParams {
    pub g_over_omega1: f64,
    /// Magnitude `|α/ω₁|`.
    pub alpha_over_omega1: f64,
    /// Relative frequency step between neighbouring QSs.
    pub k: f64,
    /// `max |Γ/g|`.
    pub gamma_over_g: f64,
    /// Margin for `||α/ω₁| − kM| ≳ |g/ω₁|`.
    pub spectral_margin: f64,
    /// Margin for `|g/ω₁| ≫ kM·max|Γ/g|`.
    pub coherence_margin: f64,
    /// Returned when a condition places no bound.
    pub cap: usize,
}

impl CrowdingParams {
    pub fn new(g_over_omega1: f64, alpha_over_omega1: f64, k: f64, gamma_over_g: f64) -> Self {
        CrowdingParams {
            g_over_omega1,
            alpha_over_omega1,
            k,
            gamma_over_g,
            spectral_margin: 1.0,
            coherence_margin: 10.0,
            cap: 1000,
        }
    }

    pub fn spectral_ok(&self, m: usize) -> bool {
        (self.alpha_over_omega1 - self.k * m as f64).abs() >= self.spectral_margin * self.g_over_omega1
    }

    pub fn coherence_ok(&self, m: usize) -> bool {
        self.g_over_omega1 >= self.coherence_margin * self.k * m as f64 * self.gamma_over_g
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrowdingLimit {
    /// Largest M with the spectral condition holding for every M' ≤ M.
    pub spectral: usize,
    /// Largest M with the coherence condition holding.
    pub coherence: usize,
    pub max_qubits: usize,
}

pub fn crowding_limit(p: &CrowdingParams) -> Result<CrowdingLimit> {
    let vals = [p.g_over_omega1, p.alpha_over_omega1, p.k, p.gamma_over_g];
    if vals.iter().any(|v| !v.is_finite() || *v < 0.0) || p.g_over_omega1 == 0.0 || p.alpha_over_omega1 == 0.0 {
        return Err(Error::Domain("crowding ratios must be positive and finite".into()));
    }
    let spectral = if p.k == 0.0 {
        if p.spectral_ok(1) { p.cap } else { 0 }
    } else {
        // violations can only occur for M inside ((a − c g)/k, (a + c g)/k)
        let lo = (p.alpha_over_omega1 - p.spectral_margin * p.g_over_omega1) / p.k;
        let hi = (p.alpha_over_omega1 + p.spectral_margin * p.g_over_omega1) / p.k;
        let start = (lo.floor() - 1.0).max(1.0);
        let end = (hi.ceil() + 1.0).min(p.cap as f64);
        let mut limit = p.cap;
        if start <= end {
            for m in start as usize..=end as usize {
                if !p.spectral_ok(m) {
                    limit = m - 1;
                    break;
                }
            }
        }
        limit
    };
    let coherence = if p.k == 0.0 || p.gamma_over_g == 0.0 {
        p.cap
    } else {
        let mut m = (p.g_over_omega1 / (p.coherence_margin * p.k * p.gamma_over_g)).floor().min(p.cap as f64) as usize;
        while m > 0 && !p.coherence_ok(m) {
            m -= 1;
        }
        while m < p.cap && p.coherence_ok(m + 1) {
            m += 1;
        }
        m
    };
    Ok(CrowdingLimit {
        spectral,
        coherence,
        max_qubits: spectral.min(coherence),
    })
}
