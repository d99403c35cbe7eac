//! Bit-encoded π-pulse trains for diagonal multi-qubit gates.
//!
//! A train assigns every QS a binary word whose set bits are the time
//! slots carrying a π pulse on the active transition `|a> <-> |e0>` of
//! that QS (bit `i` is slot `i`). Pulses pair up into nested intervals:
//! the pulse pair of QS `m` only acts on amplitude whose other QSs are not
//! in an auxiliary level, which is what makes the construction entangling.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::envelope::{Envelope, Shape, GAUSSIAN_CUTOFF, SECH_CUTOFF};
use crate::error::{Error, Result};
use crate::spectroscopy::{Group, Transition};

/// Wrap an angle to `(−π, π]`.
pub fn wrap_phase(phi: f64) -> f64 {
    let mut p = phi.rem_euclid(2.0 * PI);
    if p > PI {
        p -= 2.0 * PI;
    }
    p
}

/// `−z/z*` with `z = σ + iδ`: the factor acquired by a state returned by a
/// detuned pair of sech π pulses of bandwidth `sigma`.
pub fn rosen_zener_factor(sigma: f64, delta: f64) -> Result<Complex64> {
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("bandwidth {sigma} must be positive")));
    }
    let z = Complex64::new(sigma, delta);
    Ok(-(z / z.conj()))
}

/// Principal value of the phase of [`rosen_zener_factor`].
pub fn rosen_zener_phase(sigma: f64, delta: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("bandwidth {sigma} must be positive")));
    }
    Ok(wrap_phase(PI + 2.0 * delta.atan2(sigma)))
}

/// Detuning whose pulse pair imprints `phi`; inverse of
/// [`rosen_zener_phase`]. A zero phase needs infinite detuning.
pub fn detuning_for_phase(sigma: f64, phi: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("bandwidth {sigma} must be positive")));
    }
    let half = wrap_phase(phi - PI) / 2.0;
    if (half.abs() - PI / 2.0).abs() < 1e-12 {
        return Err(Error::Domain("a zero phase requires infinite detuning".into()));
    }
    Ok(sigma * half.tan())
}

/// Diagonal gates the compiler knows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagonalGate {
    Identity,
    /// `[C]^(n−1)Z`: phase π on the single state with every QS in `ā`.
    MultiControlZ,
    /// `C[Z]^(n−1)`: CZ from QS 0 onto every other QS (plus local Z).
    CzCascade,
    /// The controlled-phase cascade of one QFT stage, `π/2^m` on QS `m`.
    QftCascade,
    /// Arbitrary phases over the computational states in binary order,
    /// QS 0 most significant.
    Phases(Vec<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    /// Pulse bandwidth σ, rad/s.
    pub sigma: f64,
    pub shape: Shape,
    /// Computational level `a` that the pulses lift.
    pub active_level: usize,
    /// Auxiliary level the pulses lift it to.
    pub aux_level: usize,
    /// Dressed lines closer than this multiple of σ share one tone.
    #[serde(default = "default_merge")]
    pub merge_fraction: f64,
}

fn default_merge() -> f64 {
    MERGE_FRACTION
}

impl TrainOptions {
    pub fn new(sigma: f64) -> Self {
        TrainOptions {
            sigma,
            shape: Shape::Gaussian,
            active_level: 0,
            aux_level: 2,
            merge_fraction: MERGE_FRACTION,
        }
    }

    pub fn with_merge_fraction(self, merge_fraction: f64) -> Self {
        TrainOptions { merge_fraction, ..self }
    }

    pub fn with_active_level(self, active_level: usize) -> Self {
        TrainOptions { active_level, ..self }
    }

    pub fn with_shape(self, shape: Shape) -> Self {
        TrainOptions { shape, ..self }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainPulse {
    pub qs: usize,
    pub slot: usize,
    /// Carrier offset from resonance, rad/s.
    pub detuning: f64,
    /// Carrier phase φ of the rotation `|a> -> −i e^{iφ}|e>`.
    pub phase: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BitTrain {
    pub n: usize,
    pub slots: usize,
    pub words: Vec<u64>,
    pub pulses: Vec<TrainPulse>,
    pub options: TrainOptions,
}

/// True iff the bitwise AND over all words is zero.
pub fn check_non_interference(words: &[u64]) -> bool {
    match words.split_first() {
        None => true,
        Some((first, rest)) => rest.iter().fold(*first, |acc, w| acc & w) == 0,
    }
}

fn bit_slots(word: u64) -> Vec<usize> {
    (0..64).filter(|b| word >> b & 1 == 1).collect()
}

impl BitTrain {
    pub fn slot_duration(&self) -> f64 {
        2.0 * GAUSSIAN_CUTOFF / self.options.sigma
    }

    pub fn duration(&self) -> f64 {
        self.slots as f64 * self.slot_duration()
    }

    pub fn slot_center(&self, slot: usize) -> f64 {
        (slot as f64 + 0.5) * self.slot_duration()
    }

    /// Build a resonant train from raw words. Pulses of a QS pair up in
    /// time order; pairs must nest or be disjoint and no slot may carry
    /// pulses on two QSs.
    pub fn from_words(words: &[u64], slots: usize, options: TrainOptions) -> Result<Self> {
        if slots > 64 {
            return Err(Error::Compile(format!("{slots} slots exceed the 64-bit word")));
        }
        let mut intervals = Vec::new();
        let mut pulses = Vec::new();
        for (qs, &w) in words.iter().enumerate() {
            if slots < 64 && w >> slots != 0 {
                return Err(Error::Compile(format!("word {w} of QS {qs} uses slots beyond {slots}")));
            }
            let bits = bit_slots(w);
            if bits.len() % 2 == 1 {
                return Err(Error::Compile(format!(
                    "word {w} of QS {qs} has odd popcount; pulses must pair up"
                )));
            }
            for pair in bits.chunks(2) {
                intervals.push((pair[0], pair[1], qs));
            }
            pulses.extend(bits.iter().map(|&slot| TrainPulse {
                qs,
                slot,
                detuning: 0.0,
                phase: 0.0,
            }));
        }
        for (i, &(s1, e1, q1)) in intervals.iter().enumerate() {
            for &(s2, e2, q2) in &intervals[i + 1..] {
                if q1 == q2 {
                    continue;
                }
                let shared = [s2, e2].into_iter().find(|&s| s == s1 || s == e1);
                if let Some(slot) = shared {
                    return Err(Error::Interference { first: q1, second: q2, slot });
                }
                let crossing = (s1 < s2 && s2 < e1 && e1 < e2) || (s2 < s1 && s1 < e2 && e2 < e1);
                if crossing {
                    return Err(Error::Interference {
                        first: q1,
                        second: q2,
                        slot: s1.max(s2),
                    });
                }
            }
        }
        pulses.sort_by_key(|p| (p.slot, p.qs));
        Ok(BitTrain {
            n: words.len(),
            slots,
            words: words.to_vec(),
            pulses,
            options,
        })
    }

    /// Train with every word mirrored in time.
    pub fn reversed(&self) -> Self {
        let last = self.slots - 1;
        let mut out = self.clone();
        out.words = self
            .words
            .iter()
            .map(|&w| bit_slots(w).iter().fold(0u64, |acc, &s| acc | 1 << (last - s)))
            .collect();
        for p in &mut out.pulses {
            p.slot = last - p.slot;
        }
        // the pair phase is φ_up − φ_down; swap roles to keep it
        for p in &mut out.pulses {
            p.phase = -p.phase;
        }
        out.pulses.sort_by_key(|p| (p.slot, p.qs));
        out
    }
}

/// Compile a diagonal gate on `n` QSs into a non-interfering train.
pub fn compile_bit_train(gate: &DiagonalGate, n: usize, options: &TrainOptions) -> Result<BitTrain> {
    if !(options.sigma > 0.0) {
        return Err(Error::Domain("train bandwidth must be positive".into()));
    }
    if n == 0 || 2 * n > 64 {
        return Err(Error::Compile(format!("{n} qubit systems do not fit a 64-slot word")));
    }
    let opts = *options;
    match gate {
        DiagonalGate::Identity => BitTrain::from_words(&vec![0; n], 2 * n, opts),
        DiagonalGate::MultiControlZ => {
            require_two(n)?;
            let words: Vec<u64> = (0..n).map(|m| (1u64 << m) | (1u64 << (2 * n - m - 1))).collect();
            BitTrain::from_words(&words, 2 * n, opts)
        }
        DiagonalGate::CzCascade | DiagonalGate::QftCascade => {
            require_two(n)?;
            let words = cascade_words(n);
            let mut train = BitTrain::from_words(&words, 2 * n, opts)?;
            if matches!(gate, DiagonalGate::QftCascade) {
                for p in &mut train.pulses {
                    if p.qs > 0 {
                        p.detuning = detuning_for_phase(opts.sigma, PI / (1u64 << p.qs) as f64)?;
                    }
                }
            }
            Ok(train)
        }
        DiagonalGate::Phases(phases) => compile_phases(phases, n, opts),
    }
}

fn require_two(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::Compile("entangling trains need at least two qubit systems".into()));
    }
    Ok(())
}

fn cascade_words(n: usize) -> Vec<u64> {
    let mut words = vec![(1u64 << (2 * n - 1)) | 1];
    words.extend((1..n).map(|m| 3u64 << (2 * m - 1)));
    words
}

/// Index of computational state `x` in the frame `y_k = [x_k = a]`.
fn y_to_x(y: usize, n: usize, active_level: usize) -> usize {
    if active_level == 1 {
        y
    } else {
        y ^ ((1 << n) - 1)
    }
}

struct Node {
    qs: usize,
    phase: f64,
    children: Vec<usize>,
}

/// Decompose the phase function into nested-pair primitives
/// `φ · y_m Π_{k∈S}(1 − y_k)` (QS `m` pulsed inside the pairs of `S`),
/// highest-order monomials first, and lay the resulting tree out in time.
fn compile_phases(phases: &[f64], n: usize, opts: TrainOptions) -> Result<BitTrain> {
    if phases.len() != 1 << n {
        return Err(Error::Compile(format!(
            "{} phases given for {} computational states",
            phases.len(),
            1usize << n
        )));
    }
    if phases.iter().any(|p| !p.is_finite()) {
        return Err(Error::Compile("phases must be finite".into()));
    }
    let dim = 1usize << n;
    let mut c: Vec<f64> = (0..dim).map(|y| phases[y_to_x(y, n, opts.active_level)]).collect();
    for b in 0..n {
        for mask in 0..dim {
            if mask >> b & 1 == 1 {
                c[mask] -= c[mask ^ (1 << b)];
            }
        }
    }
    let qs_of_bit = |b: usize| n - 1 - b;
    let mut order: Vec<usize> = (1..dim).collect();
    order.sort_by_key(|&m| (std::cmp::Reverse(m.count_ones()), m));

    let mut nodes: Vec<Node> = Vec::new();
    let mut roots: Vec<usize> = Vec::new();
    for t in order {
        let coef = wrap_phase(c[t]);
        if coef.abs() < 1e-12 {
            continue;
        }
        let mut path: Vec<usize> = (0..n).filter(|&b| t >> b & 1 == 1).map(qs_of_bit).collect();
        path.sort_unstable();
        let leaf = *path.last().unwrap();
        let s_bits = t & !(1 << (n - 1 - leaf));
        let sign = if (s_bits.count_ones() % 2) == 0 { 1.0 } else { -1.0 };
        let phi = sign * c[t];
        // subtract the full expansion of the primitive
        let mut u = s_bits;
        loop {
            let s = if (u.count_ones() % 2) == 0 { 1.0 } else { -1.0 };
            c[u | (1 << (n - 1 - leaf))] -= phi * s;
            if u == 0 {
                break;
            }
            u = (u - 1) & s_bits;
        }
        let mut current: Option<usize> = None;
        for &qs in &path {
            let siblings = match current {
                None => &roots,
                Some(c) => &nodes[c].children,
            };
            let idx = match siblings.iter().copied().find(|&i| nodes[i].qs == qs) {
                Some(i) => i,
                None => {
                    nodes.push(Node { qs, phase: 0.0, children: Vec::new() });
                    let i = nodes.len() - 1;
                    match current {
                        None => roots.push(i),
                        Some(c) => nodes[c].children.push(i),
                    }
                    i
                }
            };
            current = Some(idx);
        }
        let current = current.expect("non-empty path");
        nodes[current].phase += phi;
    }

    if 2 * nodes.len() > 64 {
        return Err(Error::Compile(format!(
            "gate needs {} pulse pairs; at most 32 fit a 64-slot word",
            nodes.len()
        )));
    }
    let mut words = vec![0u64; n];
    let mut pulses = Vec::new();
    let mut slot = 0;
    fn lay(
        i: usize,
        nodes: &[Node],
        slot: &mut usize,
        words: &mut [u64],
        pulses: &mut Vec<TrainPulse>,
    ) {
        let node = &nodes[i];
        let psi = wrap_phase(node.phase);
        words[node.qs] |= 1 << *slot;
        pulses.push(TrainPulse { qs: node.qs, slot: *slot, detuning: 0.0, phase: 0.0 });
        *slot += 1;
        let mut kids = node.children.clone();
        kids.sort_by_key(|&k| nodes[k].qs);
        for k in kids {
            lay(k, nodes, slot, words, pulses);
        }
        words[node.qs] |= 1 << *slot;
        // pair phase π + φ_up − φ_down
        pulses.push(TrainPulse { qs: node.qs, slot: *slot, detuning: 0.0, phase: wrap_phase(PI - psi) });
        *slot += 1;
    }
    let mut top = roots.clone();
    top.sort_by_key(|&k| nodes[k].qs);
    for r in top {
        lay(r, &nodes, &mut slot, &mut words, &mut pulses);
    }
    let slots = slot.max(2 * n).min(64);
    let mut train = BitTrain::from_words(&words, slots, opts)?;
    train.pulses = pulses;
    Ok(train)
}

/// Target phases of a named gate over the computational states (binary
/// order, QS 0 most significant), in the frame of the active level.
pub fn target_phases(gate: &DiagonalGate, n: usize, active_level: usize) -> Result<Vec<f64>> {
    let dim = 1usize << n;
    let y = |x: usize, k: usize| -> bool {
        let bit = x >> (n - 1 - k) & 1;
        bit == active_level
    };
    Ok(match gate {
        DiagonalGate::Identity => vec![0.0; dim],
        DiagonalGate::MultiControlZ => (0..dim)
            .map(|x| if (0..n).all(|k| !y(x, k)) { PI } else { 0.0 })
            .collect(),
        DiagonalGate::CzCascade | DiagonalGate::QftCascade => (0..dim)
            .map(|x| {
                if y(x, 0) {
                    PI
                } else {
                    (1..n)
                        .filter(|&m| y(x, m))
                        .map(|m| match gate {
                            DiagonalGate::CzCascade => PI,
                            _ => PI / (1u64 << m) as f64,
                        })
                        .sum()
                }
            })
            .collect(),
        DiagonalGate::Phases(p) => {
            if p.len() != dim {
                return Err(Error::Compile(format!("{} phases for {dim} states", p.len())));
            }
            p.clone()
        }
    })
}

/// Result of the graph-level model of a train.
#[derive(Clone, Debug)]
pub struct IdealOutcome {
    /// Computational block of the evolution (columns are inputs).
    pub unitary: DMatrix<Complex64>,
    /// Largest population left on auxiliary levels.
    pub leakage: f64,
}

/// Evolve every computational state through the train in the idealized
/// model over levels `{0, 1, e}` per QS: a π pulse on QS `m` rotates
/// `|a> <-> |e>` of QS `m` whenever no other QS sits in `e`; otherwise the
/// transition is spectrally blocked. An adjacent detuned pair of pulses
/// imprints the Rosen–Zener factor instead of transferring population.
pub fn simulate_ideal(train: &BitTrain) -> Result<IdealOutcome> {
    let n = train.n;
    if n > 12 {
        return Err(Error::Precondition("idealized model limited to 12 qubit systems".into()));
    }
    let a = train.options.active_level;
    if a > 1 {
        return Err(Error::Precondition("active level must be 0 or 1".into()));
    }
    let dim3 = 3usize.pow(n as u32);
    let pow3: Vec<usize> = (0..n).map(|k| 3usize.pow((n - 1 - k) as u32)).collect();
    let digit = |s: usize, k: usize| s / pow3[k] % 3;
    let others_idle = |s: usize, k: usize| (0..n).all(|q| q == k || digit(s, q) != 2);

    let mut pulses = train.pulses.clone();
    pulses.sort_by_key(|p| (p.slot, p.qs));
    let comp = 1usize << n;
    let mut unitary = DMatrix::<Complex64>::zeros(comp, comp);
    let mut leakage = 0.0f64;
    let to3 = |x: usize| (0..n).map(|k| (x >> (n - 1 - k) & 1) * pow3[k]).sum::<usize>();

    for x in 0..comp {
        let mut psi = vec![Complex64::new(0.0, 0.0); dim3];
        psi[to3(x)] = Complex64::new(1.0, 0.0);
        let mut i = 0;
        while i < pulses.len() {
            let p = pulses[i];
            if p.detuning != 0.0 {
                let paired = pulses
                    .get(i + 1)
                    .is_some_and(|q| q.qs == p.qs && q.slot == p.slot + 1 && q.detuning == p.detuning);
                if !paired {
                    return Err(Error::Precondition(format!(
                        "detuned pulse of QS {} at slot {} is not half of an adjacent pair",
                        p.qs, p.slot
                    )));
                }
                let factor = rosen_zener_factor(train.options.sigma, p.detuning)?;
                for (s, amp) in psi.iter_mut().enumerate() {
                    if digit(s, p.qs) == a && others_idle(s, p.qs) {
                        *amp *= factor;
                    }
                }
                i += 2;
                continue;
            }
            let up = Complex64::new(0.0, -1.0) * Complex64::from_polar(1.0, p.phase);
            let down = Complex64::new(0.0, -1.0) * Complex64::from_polar(1.0, -p.phase);
            let mut next = psi.clone();
            for s in 0..dim3 {
                if digit(s, p.qs) != a || !others_idle(s, p.qs) {
                    continue;
                }
                let e = s + (2 - a) * pow3[p.qs];
                next[e] = up * psi[s];
                next[s] = down * psi[e];
            }
            psi = next;
            i += 1;
        }
        for y in 0..comp {
            unitary[(y, x)] = psi[to3(y)];
        }
        let kept: f64 = (0..comp).map(|y| psi[to3(y)].norm_sqr()).sum();
        leakage = leakage.max((1.0 - kept).max(0.0));
    }
    Ok(IdealOutcome { unitary, leakage })
}

/// One term `amplitude · envelope(t) · cos(carrier·t − phase) · X_qs` of
/// the drive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveTerm {
    pub envelope: Envelope,
    pub carrier: f64,
    pub phase: f64,
    pub amplitude: f64,
    pub qs: usize,
    /// Dressed transitions the carrier is tuned to.
    pub targets: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, Default)]
pub struct RenderedDrive {
    pub terms: Vec<DriveTerm>,
    pub warnings: Vec<String>,
}

impl RenderedDrive {
    pub fn duration(&self) -> f64 {
        self.terms.iter().map(|t| t.envelope.end()).fold(0.0, f64::max)
    }
}

/// Default fraction of σ within which lines share one carrier.
pub const MERGE_FRACTION: f64 = 0.1;

/// Catalog lines addressed by a train pulse on `qs`: zero-photon group-A
/// transitions `a <-> aux`.
pub fn train_lines<'a>(catalog: &'a [Transition], qs: usize, options: &TrainOptions) -> Vec<&'a Transition> {
    let kind = (
        options.active_level.min(options.aux_level),
        options.active_level.max(options.aux_level),
    );
    catalog
        .iter()
        .filter(|t| {
            t.qs_index == qs
                && t.kind == kind
                && t.group == Group::A
                && t.from_label.photons == 0
                && t.from_label.levels[qs] == options.active_level
                && t.from_label.levels.iter().all(|&l| l < 2)
        })
        .collect()
}

/// Time-domain drive of a train: every π pulse becomes one tone per
/// resolved dressed line of its QS (lines closer than
/// `merge_fraction`·σ share a tone), each calibrated to area π. An
/// adjacent detuned pair becomes a single 2π pulse centered between its
/// slots, the pulse whose return phase the Rosen–Zener factor describes.
pub fn render_train(train: &BitTrain, catalog: &[Transition]) -> Result<RenderedDrive> {
    let opts = &train.options;
    let mut out = RenderedDrive::default();
    let max_el = catalog.iter().fold(0.0f64, |m, t| m.max(t.matrix_element.abs()));
    let mut pulses = train.pulses.clone();
    pulses.sort_by_key(|p| (p.slot, p.qs));
    let mut merged = Vec::with_capacity(pulses.len());
    let mut i = 0;
    while i < pulses.len() {
        let p = pulses[i];
        let partner = (p.detuning != 0.0)
            .then(|| pulses[i + 1..].iter().position(|q| q.qs == p.qs && q.slot == p.slot + 1 && q.detuning == p.detuning))
            .flatten();
        match partner {
            // a detuned pair is realized as one 2π pulse spanning both slots
            Some(off) => {
                let center = (train.slot_center(p.slot) + train.slot_center(p.slot + 1)) / 2.0;
                merged.push((p, center, 2.0 * PI));
                pulses.remove(i + 1 + off);
            }
            None => merged.push((p, train.slot_center(p.slot), PI)),
        }
        i += 1;
    }
    for (p, center, area) in merged {
        let lines = train_lines(catalog, p.qs, opts);
        if lines.is_empty() {
            return Err(Error::Precondition(format!(
                "no catalog transition {}<->{} on qubit system {}",
                opts.active_level, opts.aux_level, p.qs
            )));
        }
        let envelope = match opts.shape {
            Shape::Gaussian => Envelope::new(Shape::Gaussian, center, opts.sigma, GAUSSIAN_CUTOFF / opts.sigma)?,
            Shape::Sech => Envelope::new(Shape::Sech, center, opts.sigma, SECH_CUTOFF / opts.sigma)?,
        };
        for cluster in cluster_lines(&lines, opts.merge_fraction * opts.sigma) {
            let k = cluster.len() as f64;
            let carrier = cluster.iter().map(|t| t.frequency).sum::<f64>() / k + p.detuning;
            let element = cluster.iter().map(|t| t.matrix_element).sum::<f64>() / k;
            let targets: Vec<(usize, usize)> = cluster.iter().map(|t| (t.from, t.to)).collect();
            for t in catalog {
                if targets.contains(&(t.from, t.to))
                    || t.matrix_element.abs() < 1e-3 * max_el
                    || (t.frequency - carrier).abs() >= opts.sigma
                {
                    continue;
                }
                out.warnings.push(format!(
                    "cross-talk: slot {} tone on QS {} at {:.6} GHz is within σ of {} -> {}",
                    p.slot,
                    p.qs,
                    crate::units::to_ghz(carrier),
                    t.from_label,
                    t.to_label
                ));
            }
            out.terms.push(DriveTerm {
                envelope,
                carrier,
                phase: p.phase,
                amplitude: area / element,
                qs: p.qs,
                targets,
            });
        }
    }
    Ok(out)
}

fn cluster_lines<'a>(lines: &[&'a Transition], tol: f64) -> Vec<Vec<&'a Transition>> {
    let mut sorted = lines.to_vec();
    sorted.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));
    let mut out: Vec<Vec<&Transition>> = Vec::new();
    for t in sorted {
        match out.last_mut() {
            Some(c) if t.frequency - c.last().unwrap().frequency < tol => c.push(t),
            _ => out.push(vec![t]),
        }
    }
    out
}
