//! Composite Hilbert space of several multi-level qubit systems (QSs)
//! sharing one cavity mode: basis bookkeeping, Hamiltonian assembly,
//! dressed-state diagonalization and adiabatic labeling.
//!
//! Basis ordering: QS 0 is the most significant digit, the cavity photon
//! number the least significant one.

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::Frequency;

pub const DEFAULT_BASIS_CAP: usize = 2000;

/// Energy of transmon level `n` in the anharmonic-oscillator approximation.
pub fn transmon_levels(omega0: f64, alpha: f64, n: i64) -> Result<f64> {
    if n < 0 {
        return Err(Error::Domain(format!("transmon level index {n} is negative")));
    }
    let n = n as f64;
    Ok((omega0 - alpha / 2.0) * n + alpha / 2.0 * n * n)
}

/// Level structure of one qubit system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QsLevels {
    /// Explicit level energies in rad/s, `[ε_0, ε_1, ε_e0, ε_e1, ...]`.
    Explicit(Vec<f64>),
    /// Anharmonic oscillator with qubit frequency `omega0` and
    /// anharmonicity `alpha < 0`, both rad/s.
    Transmon { omega0: f64, alpha: f64 },
}

/// Which intra-QS transitions exchange a photon with the cavity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingScheme {
    /// Consecutive levels `N <-> N+1` with element `sqrt(N+1)`.
    #[default]
    Ladder,
    /// `|0> <-> |e0>` and `|1> <-> |e1>` with unit element.
    Auxiliary,
}

/// One dipole-allowed transition inside a QS.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelCoupling {
    pub lower: usize,
    pub upper: usize,
    pub element: f64,
}

impl CouplingScheme {
    pub fn pairs(self, levels: usize) -> Vec<LevelCoupling> {
        match self {
            CouplingScheme::Ladder => (0..levels.saturating_sub(1))
                .map(|n| LevelCoupling {
                    lower: n,
                    upper: n + 1,
                    element: ((n + 1) as f64).sqrt(),
                })
                .collect(),
            CouplingScheme::Auxiliary => vec![
                LevelCoupling { lower: 0, upper: 2, element: 1.0 },
                LevelCoupling { lower: 1, upper: 3, element: 1.0 },
            ],
        }
    }
}

/// Full device description. All frequencies in rad/s.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub qubit_systems: Vec<QsLevels>,
    pub levels_per_qs: usize,
    pub cavity_cutoff: usize,
    pub omega_c: f64,
    pub g: f64,
    pub coupling: CouplingScheme,
    /// Transitions addressed by external drive fields. Defaults to the
    /// cavity coupling pairs.
    pub drive: Vec<LevelCoupling>,
    pub basis_cap: usize,
}

impl SystemSpec {
    pub fn new(
        qubit_systems: Vec<QsLevels>,
        levels_per_qs: usize,
        cavity_cutoff: usize,
        omega_c: f64,
        g: f64,
        coupling: CouplingScheme,
    ) -> Result<Self> {
        let spec = SystemSpec {
            drive: coupling.pairs(levels_per_qs),
            qubit_systems,
            levels_per_qs,
            cavity_cutoff,
            omega_c,
            g,
            coupling,
            basis_cap: DEFAULT_BASIS_CAP,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Three transmons as in the reference device: ω₀ = 6.8×2π GHz,
    /// α = −2×2π GHz, the second and third scaled by 1.02 and 1.04,
    /// g = 10×2π MHz.
    pub fn reference_transmons(levels_per_qs: usize, cavity_cutoff: usize, omega_c: f64) -> Result<Self> {
        use crate::units::{ghz, mhz};
        let qs = [1.0, 1.02, 1.04]
            .iter()
            .map(|s| QsLevels::Transmon {
                omega0: ghz(6.8) * s,
                alpha: ghz(-2.0) * s,
            })
            .collect();
        SystemSpec::new(qs, levels_per_qs, cavity_cutoff, omega_c, mhz(10.0), CouplingScheme::Ladder)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.qubit_systems.is_empty() {
            return bad("at least one qubit system is required".into());
        }
        if self.levels_per_qs < 4 {
            return bad(format!("levels_per_qs = {} < 4", self.levels_per_qs));
        }
        if self.cavity_cutoff < 1 {
            return bad("cavity_cutoff must be at least 1".into());
        }
        if !(self.g >= 0.0) || !self.g.is_finite() {
            return bad(format!("coupling g = {} must be non-negative", self.g));
        }
        if !self.omega_c.is_finite() {
            return bad("omega_c must be finite".into());
        }
        for (n, qs) in self.qubit_systems.iter().enumerate() {
            match qs {
                QsLevels::Explicit(e) if e.len() != self.levels_per_qs => {
                    return bad(format!(
                        "qubit system {n} lists {} energies, expected {}",
                        e.len(),
                        self.levels_per_qs
                    ))
                }
                QsLevels::Transmon { alpha, .. } if !(*alpha < 0.0) => {
                    return bad(format!("qubit system {n} has anharmonicity {alpha} >= 0"))
                }
                _ => {}
            }
        }
        for p in self.coupling.pairs(self.levels_per_qs).iter().chain(&self.drive) {
            if p.upper >= self.levels_per_qs || p.lower >= p.upper {
                return bad(format!("transition {}<->{} outside the level range", p.lower, p.upper));
            }
        }
        Ok(())
    }

    pub fn n_qs(&self) -> usize {
        self.qubit_systems.len()
    }

    pub fn basis(&self) -> Basis {
        Basis {
            n_qs: self.n_qs(),
            levels: self.levels_per_qs,
            cutoff: self.cavity_cutoff,
        }
    }

    pub fn with_omega_c(&self, omega_c: f64) -> Self {
        SystemSpec { omega_c, ..self.clone() }
    }

    pub fn with_g(&self, g: f64) -> Self {
        SystemSpec { g, ..self.clone() }
    }

    /// Bare energy of level `n` of qubit system `qs`.
    pub fn level_energy(&self, qs: usize, n: usize) -> f64 {
        match &self.qubit_systems[qs] {
            QsLevels::Explicit(e) => e[n],
            QsLevels::Transmon { omega0, alpha } => {
                (omega0 - alpha / 2.0) * n as f64 + alpha / 2.0 * (n * n) as f64
            }
        }
    }

    pub fn bare_energy(&self, label: &BareLabel) -> f64 {
        label
            .levels
            .iter()
            .enumerate()
            .map(|(qs, &n)| self.level_energy(qs, n))
            .sum::<f64>()
            + self.omega_c * label.photons as f64
    }

    /// Diagonal and unit-g coupling entries of the Hamiltonian.
    pub fn hamiltonian_parts(&self) -> Result<HamiltonianParts> {
        let basis = self.basis();
        let dim = basis.checked_dim(self.basis_cap)?;
        let pairs = self.coupling.pairs(self.levels_per_qs);
        let mut diagonal = Vec::with_capacity(dim);
        let mut couplings = Vec::new();
        for idx in 0..dim {
            let label = basis.label(idx);
            diagonal.push(self.bare_energy(&label));
            if label.photons >= self.cavity_cutoff {
                continue;
            }
            // |lower><upper| a^dagger: the QS relaxes and emits a photon
            for qs in 0..self.n_qs() {
                for p in &pairs {
                    if label.levels[qs] != p.upper {
                        continue;
                    }
                    let mut target = label.clone();
                    target.levels[qs] = p.lower;
                    target.photons += 1;
                    let value = p.element * ((label.photons + 1) as f64).sqrt();
                    let j = basis.index(&target);
                    couplings.push((idx.min(j), idx.max(j), value));
                }
            }
        }
        Ok(HamiltonianParts { diagonal, couplings })
    }
}

fn default_cap() -> usize {
    DEFAULT_BASIS_CAP
}

/// JSON form of a [`SystemSpec`] with unit-tagged frequencies.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SystemConfig {
    pub qubit_systems: Vec<QsConfig>,
    pub levels_per_qs: usize,
    pub cavity_cutoff: usize,
    pub omega_c: Frequency,
    pub g: Frequency,
    #[serde(default)]
    pub coupling: CouplingScheme,
    #[serde(default)]
    pub drive: Option<Vec<LevelCoupling>>,
    #[serde(default = "default_cap")]
    pub basis_cap: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QsConfig {
    Explicit {
        energies: Vec<Frequency>,
    },
    Transmon {
        omega0: Frequency,
        alpha: Frequency,
        /// Multiplies both `omega0` and `alpha`.
        #[serde(default = "unit_scale")]
        scale: f64,
    },
}

fn unit_scale() -> f64 {
    1.0
}

impl SystemConfig {
    pub fn into_spec(self) -> Result<SystemSpec> {
        let qubit_systems = self
            .qubit_systems
            .into_iter()
            .map(|q| match q {
                QsConfig::Explicit { energies } => {
                    QsLevels::Explicit(energies.into_iter().map(f64::from).collect())
                }
                QsConfig::Transmon { omega0, alpha, scale } => QsLevels::Transmon {
                    omega0: omega0.rad_per_sec() * scale,
                    alpha: alpha.rad_per_sec() * scale,
                },
            })
            .collect();
        let spec = SystemSpec {
            qubit_systems,
            levels_per_qs: self.levels_per_qs,
            cavity_cutoff: self.cavity_cutoff,
            omega_c: self.omega_c.rad_per_sec(),
            g: self.g.rad_per_sec(),
            coupling: self.coupling,
            drive: self.drive.unwrap_or_else(|| self.coupling.pairs(self.levels_per_qs)),
            basis_cap: self.basis_cap,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_json(text: &str) -> Result<SystemSpec> {
        let cfg: SystemConfig = serde_json::from_str(text)?;
        cfg.into_spec()
    }
}

impl From<&SystemSpec> for SystemConfig {
    fn from(spec: &SystemSpec) -> Self {
        SystemConfig {
            qubit_systems: spec
                .qubit_systems
                .iter()
                .map(|q| match q {
                    QsLevels::Explicit(e) => QsConfig::Explicit {
                        energies: e.iter().map(|&w| Frequency::RadPerSec(w)).collect(),
                    },
                    QsLevels::Transmon { omega0, alpha } => QsConfig::Transmon {
                        omega0: Frequency::RadPerSec(*omega0),
                        alpha: Frequency::RadPerSec(*alpha),
                        scale: 1.0,
                    },
                })
                .collect(),
            levels_per_qs: spec.levels_per_qs,
            cavity_cutoff: spec.cavity_cutoff,
            omega_c: Frequency::RadPerSec(spec.omega_c),
            g: Frequency::RadPerSec(spec.g),
            coupling: spec.coupling,
            drive: Some(spec.drive.clone()),
            basis_cap: spec.basis_cap,
        }
    }
}

/// Bare (g = 0) product state: one level index per QS plus a photon number.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BareLabel {
    pub levels: Vec<usize>,
    pub photons: usize,
}

impl BareLabel {
    pub fn new(levels: Vec<usize>, photons: usize) -> Self {
        BareLabel { levels, photons }
    }

    /// Whether every QS sits in `|0>` or `|1>` and the cavity is empty.
    pub fn is_computational(&self) -> bool {
        self.photons == 0 && self.levels.iter().all(|&l| l < 2)
    }
}

pub fn level_name(n: usize) -> String {
    match n {
        0 => "0".into(),
        1 => "1".into(),
        n => format!("e{}", n - 2),
    }
}

impl fmt::Display for BareLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let levels: Vec<String> = self.levels.iter().map(|&l| level_name(l)).collect();
        write!(f, "|{};{}>", levels.join(","), self.photons)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Basis {
    pub n_qs: usize,
    pub levels: usize,
    pub cutoff: usize,
}

impl Basis {
    pub fn dim(&self) -> usize {
        self.levels.pow(self.n_qs as u32) * (self.cutoff + 1)
    }

    fn checked_dim(&self, cap: usize) -> Result<usize> {
        let size = (self.levels as u128)
            .checked_pow(self.n_qs as u32)
            .and_then(|v| v.checked_mul(self.cutoff as u128 + 1))
            .unwrap_or(u128::MAX);
        if size > cap as u128 {
            return Err(Error::BasisTooLarge {
                size: size.min(usize::MAX as u128) as usize,
                cap,
            });
        }
        Ok(size as usize)
    }

    pub fn index(&self, label: &BareLabel) -> usize {
        let mut idx = 0;
        for &l in &label.levels {
            idx = idx * self.levels + l;
        }
        idx * (self.cutoff + 1) + label.photons
    }

    pub fn label(&self, mut idx: usize) -> BareLabel {
        let photons = idx % (self.cutoff + 1);
        idx /= self.cutoff + 1;
        let mut levels = vec![0; self.n_qs];
        for slot in levels.iter_mut().rev() {
            *slot = idx % self.levels;
            idx /= self.levels;
        }
        BareLabel { levels, photons }
    }

    /// Computational labels `|x_0 x_1 ...; 0>` in binary order, QS 0 as
    /// the most significant bit.
    pub fn computational_labels(&self) -> Vec<BareLabel> {
        (0..1usize << self.n_qs)
            .map(|x| BareLabel {
                levels: (0..self.n_qs).map(|q| (x >> (self.n_qs - 1 - q)) & 1).collect(),
                photons: 0,
            })
            .collect()
    }
}

/// Hamiltonian split into bare diagonal and coupling entries per unit `g`
/// (upper triangle, `i < j`).
#[derive(Clone, Debug)]
pub struct HamiltonianParts {
    pub diagonal: Vec<f64>,
    pub couplings: Vec<(usize, usize, f64)>,
}

impl HamiltonianParts {
    pub fn to_matrix(&self, g: f64) -> DMatrix<f64> {
        let n = self.diagonal.len();
        let mut h = DMatrix::from_diagonal(&DVector::from_column_slice(&self.diagonal));
        for &(i, j, v) in &self.couplings {
            h[(i, j)] += g * v;
            h[(j, i)] += g * v;
        }
        debug_assert_eq!(h.nrows(), n);
        h
    }

    /// Connected components of the coupling graph, each sorted, ordered by
    /// smallest member. The Hamiltonian is block diagonal over these.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let n = self.diagonal.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for &(i, j, _) in &self.couplings {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for i in 0..n {
            let r = find(&mut parent, i);
            groups.entry(r).or_default().push(i);
        }
        groups.into_values().collect()
    }
}

/// Hamiltonian over the full bare basis; exactly symmetric (and real).
pub fn assemble_hamiltonian(spec: &SystemSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    Ok(spec.hamiltonian_parts()?.to_matrix(spec.g))
}

/// An eigenstate of the undriven Hamiltonian. The amplitudes are real
/// (the Hamiltonian is real symmetric) and live on the bare indices of
/// the owning block; the sign is fixed so that the component on the own
/// label is non-negative.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DressedState {
    pub energy: f64,
    pub label: BareLabel,
    pub block: usize,
    pub amplitudes: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DressedSpectrum {
    pub n_qs: usize,
    pub levels_per_qs: usize,
    pub cavity_cutoff: usize,
    /// Sorted by energy.
    pub states: Vec<DressedState>,
    /// Bare indices of each Hamiltonian block.
    pub blocks: Vec<Vec<usize>>,
    /// Bare energy of every basis state, by bare index.
    pub bare_energies: Vec<f64>,
    /// Bare index of each dressed state's label -> dressed index.
    label_to_state: Vec<usize>,
}

impl DressedSpectrum {
    pub fn basis(&self) -> Basis {
        Basis {
            n_qs: self.n_qs,
            levels: self.levels_per_qs,
            cutoff: self.cavity_cutoff,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn energies(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.energy).collect()
    }

    pub fn state_of(&self, label: &BareLabel) -> usize {
        self.label_to_state[self.basis().index(label)]
    }

    /// Dense eigenvector over the full bare basis.
    pub fn vector(&self, state: usize) -> DVector<f64> {
        let s = &self.states[state];
        let mut v = DVector::zeros(self.basis().dim());
        for (&idx, &a) in self.blocks[s.block].iter().zip(&s.amplitudes) {
            v[idx] = a;
        }
        v
    }

    /// Dressed indices of the computational states in binary order.
    pub fn computational_states(&self) -> Vec<usize> {
        self.basis()
            .computational_labels()
            .iter()
            .map(|l| self.state_of(l))
            .collect()
    }
}

/// Parameters of the adiabatic continuation from `g -> 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabelOptions {
    pub steps: usize,
    pub start_fraction: f64,
    pub tie_tolerance: f64,
}

impl Default for LabelOptions {
    fn default() -> Self {
        LabelOptions {
            steps: 64,
            start_fraction: 1e-4,
            tie_tolerance: 1e-6,
        }
    }
}

/// Bare label index assigned to every dressed state (energy order) at each
/// step of the ramp.
#[derive(Clone, Debug, Default)]
pub struct LabelTrace {
    pub couplings: Vec<f64>,
    pub steps: Vec<Vec<usize>>,
}

pub fn diagonalize_and_label(spec: &SystemSpec) -> Result<DressedSpectrum> {
    diagonalize_and_label_traced(spec, &LabelOptions::default()).map(|(s, _)| s)
}

pub fn diagonalize_and_label_traced(
    spec: &SystemSpec,
    opts: &LabelOptions,
) -> Result<(DressedSpectrum, LabelTrace)> {
    spec.validate()?;
    let parts = spec.hamiltonian_parts()?;
    let blocks = parts.blocks();
    let dim = parts.diagonal.len();

    let mut block_of = vec![0; dim];
    let mut pos_in_block = vec![0; dim];
    for (b, members) in blocks.iter().enumerate() {
        for (k, &i) in members.iter().enumerate() {
            block_of[i] = b;
            pos_in_block[i] = k;
        }
    }
    let mut block_couplings: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); blocks.len()];
    for &(i, j, v) in &parts.couplings {
        block_couplings[block_of[i]].push((pos_in_block[i], pos_in_block[j], v));
    }

    let ramp: Vec<f64> = if spec.g == 0.0 || opts.steps == 0 {
        vec![spec.g]
    } else if opts.steps == 1 {
        vec![spec.g]
    } else {
        let n = opts.steps;
        (0..n)
            .map(|k| spec.g * opts.start_fraction.powf(1.0 - k as f64 / (n - 1) as f64))
            .collect()
    };

    let per_block: Vec<BlockResult> = blocks
        .par_iter()
        .enumerate()
        .map(|(b, members)| {
            let diag: Vec<f64> = members.iter().map(|&i| parts.diagonal[i]).collect();
            label_block(&diag, &block_couplings[b], &ramp, opts, |local| {
                spec.basis().label(members[local])
            })
        })
        .collect::<Result<_>>()?;

    let basis = spec.basis();
    let mut states = Vec::with_capacity(dim);
    for (b, res) in per_block.iter().enumerate() {
        for (col, &local) in res.labels.iter().enumerate() {
            let mut amps: Vec<f64> = res.vectors.column(col).iter().copied().collect();
            if amps[local] < 0.0 {
                amps.iter_mut().for_each(|a| *a = -*a);
            }
            states.push(DressedState {
                energy: res.energies[col],
                label: basis.label(blocks[b][local]),
                block: b,
                amplitudes: amps,
            });
        }
    }
    let order = energy_order(&states.iter().map(|s| (s.energy, basis.index(&s.label))).collect::<Vec<_>>());
    let states: Vec<DressedState> = order.iter().map(|&i| states[i].clone()).collect();

    let mut label_to_state = vec![usize::MAX; dim];
    for (d, s) in states.iter().enumerate() {
        label_to_state[basis.index(&s.label)] = d;
    }
    if label_to_state.iter().any(|&d| d == usize::MAX) {
        return Err(Error::LabelCollision { step: ramp.len().saturating_sub(1) });
    }

    // Global trace: per step, bare label index for each dressed state in energy order.
    let mut trace = LabelTrace {
        couplings: ramp.clone(),
        steps: Vec::with_capacity(ramp.len()),
    };
    for step in 0..ramp.len() {
        let mut entries = Vec::with_capacity(dim);
        for (b, res) in per_block.iter().enumerate() {
            for (e, &local) in res.trace_energies[step].iter().zip(&res.trace_labels[step]) {
                entries.push((*e, blocks[b][local]));
            }
        }
        let order = energy_order(&entries);
        trace.steps.push(order.iter().map(|&i| entries[i].1).collect());
    }

    Ok((
        DressedSpectrum {
            n_qs: spec.n_qs(),
            levels_per_qs: spec.levels_per_qs,
            cavity_cutoff: spec.cavity_cutoff,
            states,
            blocks,
            bare_energies: parts.diagonal.clone(),
            label_to_state,
        },
        trace,
    ))
}

fn energy_order(entries: &[(f64, usize)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&a, &b| {
        entries[a]
            .0
            .total_cmp(&entries[b].0)
            .then(entries[a].1.cmp(&entries[b].1))
    });
    order
}

struct BlockResult {
    energies: Vec<f64>,
    vectors: DMatrix<f64>,
    /// Local bare index carried by each eigenvector column.
    labels: Vec<usize>,
    trace_energies: Vec<Vec<f64>>,
    trace_labels: Vec<Vec<usize>>,
}

fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

fn label_block(
    diag: &[f64],
    couplings: &[(usize, usize, f64)],
    ramp: &[f64],
    opts: &LabelOptions,
    name: impl Fn(usize) -> BareLabel,
) -> Result<BlockResult> {
    let n = diag.len();
    let scale = diag.iter().fold(1.0f64, |m, e| m.max(e.abs()));
    let degenerate_tol = 1e-10 * scale;
    let build = |g: f64| {
        let mut h = DMatrix::from_diagonal(&DVector::from_column_slice(diag));
        for &(i, j, v) in couplings {
            h[(i, j)] += g * v;
            h[(j, i)] += g * v;
        }
        h
    };

    if couplings.is_empty() || ramp.iter().all(|&g| g == 0.0) {
        let order = energy_order(&diag.iter().enumerate().map(|(i, &e)| (e, i)).collect::<Vec<_>>());
        let energies: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
        let vectors = DMatrix::from_fn(n, n, |r, c| if r == order[c] { 1.0 } else { 0.0 });
        return Ok(BlockResult {
            trace_energies: vec![energies.clone(); ramp.len()],
            trace_labels: vec![order.clone(); ramp.len()],
            energies,
            vectors,
            labels: order,
        });
    }

    // Step 0 is matched against the bare basis; degenerate bare groups are
    // resolved by energy order (lower dressed energy takes the lower index).
    let (vals0, vecs0) = sorted_eigen(build(ramp[0]));
    let mut labels = vec![usize::MAX; n];
    let mut taken = vec![false; n];
    let mut bare_order: Vec<usize> = (0..n).collect();
    bare_order.sort_by(|&a, &b| diag[a].total_cmp(&diag[b]).then(a.cmp(&b)));
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && diag[bare_order[end]] - diag[bare_order[end - 1]] <= degenerate_tol {
            end += 1;
        }
        if end - start > 1 {
            let mut group: Vec<usize> = bare_order[start..end].to_vec();
            group.sort_unstable();
            let mut weights: Vec<(f64, usize)> = (0..n)
                .filter(|c| labels[*c] == usize::MAX)
                .map(|c| (group.iter().map(|&i| vecs0[(i, c)].powi(2)).sum::<f64>(), c))
                .collect();
            weights.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let mut cols: Vec<usize> = weights.iter().take(group.len()).map(|w| w.1).collect();
            cols.sort_unstable();
            for (&c, &i) in cols.iter().zip(&group) {
                labels[c] = i;
                taken[i] = true;
            }
        }
        start = end;
    }
    for c in 0..n {
        if labels[c] != usize::MAX {
            continue;
        }
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        let mut second = (f64::NEG_INFINITY, usize::MAX);
        for i in (0..n).filter(|&i| !taken[i]) {
            let o = vecs0[(i, c)].powi(2);
            if o > best.0 {
                second = best;
                best = (o, i);
            } else if o > second.0 {
                second = (o, i);
            }
        }
        if second.1 != usize::MAX && best.0 - second.0 < opts.tie_tolerance {
            return Err(Error::AmbiguousLabel {
                step: 0,
                first: name(best.1),
                second: name(second.1),
            });
        }
        if best.1 == usize::MAX {
            return Err(Error::LabelCollision { step: 0 });
        }
        labels[c] = best.1;
        taken[best.1] = true;
    }

    let mut prev = vecs0;
    let mut prev_labels = labels;
    let mut prev_vals = vals0;
    let mut trace_energies = vec![prev_vals.clone()];
    let mut trace_labels = vec![prev_labels.clone()];

    for (step, &g) in ramp.iter().enumerate().skip(1) {
        let (vals, mut vecs) = sorted_eigen(build(g));
        align_degenerate_clusters(&vals, &mut vecs, &prev, degenerate_tol);
        let overlaps = vecs.transpose() * &prev;
        let mut assigned = vec![usize::MAX; n];
        let mut used = vec![false; n];
        for c in 0..n {
            let mut best = (f64::NEG_INFINITY, usize::MAX);
            let mut second = (f64::NEG_INFINITY, usize::MAX);
            for p in 0..n {
                let o = overlaps[(c, p)].powi(2);
                if o > best.0 {
                    second = best;
                    best = (o, p);
                } else if o > second.0 {
                    second = (o, p);
                }
            }
            if second.1 != usize::MAX && best.0 - second.0 < opts.tie_tolerance {
                return Err(Error::AmbiguousLabel {
                    step,
                    first: name(prev_labels[best.1]),
                    second: name(prev_labels[second.1]),
                });
            }
            if used[best.1] {
                return Err(Error::LabelCollision { step });
            }
            used[best.1] = true;
            assigned[c] = best.1;
            if overlaps[(c, best.1)] < 0.0 {
                vecs.column_mut(c).neg_mut();
            }
        }
        prev_labels = assigned.iter().map(|&p| prev_labels[p]).collect();
        prev = vecs;
        prev_vals = vals;
        trace_energies.push(prev_vals.clone());
        trace_labels.push(prev_labels.clone());
    }

    Ok(BlockResult {
        energies: prev_vals,
        vectors: prev,
        labels: prev_labels,
        trace_energies,
        trace_labels,
    })
}

/// Inside every cluster of (numerically) degenerate eigenvalues, rotate the
/// eigenvectors onto the previous step's vectors that carry the most weight
/// in that subspace, so that overlap matching stays well defined.
fn align_degenerate_clusters(vals: &[f64], vecs: &mut DMatrix<f64>, prev: &DMatrix<f64>, tol: f64) {
    let n = vals.len();
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && vals[end] - vals[end - 1] <= tol {
            end += 1;
        }
        let size = end - start;
        if size > 1 {
            let sub = vecs.columns(start, size).into_owned();
            let proj = sub.transpose() * prev;
            let mut weight: Vec<(f64, usize)> = (0..n)
                .map(|p| (proj.column(p).norm_squared(), p))
                .collect();
            weight.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let mut chosen: Vec<usize> = weight.iter().take(size).map(|w| w.1).collect();
            chosen.sort_unstable();
            let a = DMatrix::from_fn(size, size, |r, c| proj[(r, chosen[c])]);
            let svd = a.svd(true, true);
            if let (Some(u), Some(v_t)) = (svd.u, svd.v_t) {
                let rotated = &sub * (u * v_t);
                vecs.columns_mut(start, size).copy_from(&rotated);
            }
        }
        start = end;
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub omega_c: f64,
    pub energies: Vec<f64>,
}

/// Sorted dressed energies at every cavity frequency of `grid`, in grid
/// order. Grid points are solved concurrently.
pub fn spectrum_vs_cavity(spec: &SystemSpec, grid: &[f64]) -> Result<Vec<SpectrumRow>> {
    if grid.is_empty() {
        return Err(Error::Precondition("empty cavity-frequency grid".into()));
    }
    grid.par_iter()
        .map(|&w| {
            diagonalize_and_label(&spec.with_omega_c(w))
                .map(|s| SpectrumRow {
                    omega_c: w,
                    energies: s.energies(),
                })
                .map_err(|e| Error::GridPoint {
                    omega_c: w,
                    source: Box::new(e),
                })
        })
        .collect()
}

/// CSV with header `omega_c,E_0,E_1,...`; values in GHz (`ω / 2π`).
pub fn write_spectrum_csv<W: std::io::Write>(rows: &[SpectrumRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let width = rows.first().map_or(0, |r| r.energies.len());
    let mut header = vec!["omega_c".to_string()];
    header.extend((0..width).map(|i| format!("E_{i}")));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![format!("{:.12}", crate::units::to_ghz(r.omega_c))];
        rec.extend(r.energies.iter().map(|e| format!("{:.12}", crate::units::to_ghz(*e))));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
