//! Time evolution of the driven device in the dressed basis.
//!
//! States are propagated with the implicit midpoint rule, whose update
//! `(1 + ihH/2)ψ' = (1 − ihH/2)ψ` is a Cayley transform and therefore
//! unitary; the linear system is solved by fixed-point iteration on the
//! drive part with the static part inverted exactly. Segments where every
//! envelope is off are propagated exactly.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::device::{BareLabel, DressedSpectrum, LevelCoupling};
use crate::error::{Error, Result};
use crate::gates::{align_global_phase, fidelity, CMatrix};
use crate::schedule::RenderedDrive;
use crate::spectroscopy::drive_matrices;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    /// Full Hamiltonian, Schrödinger picture.
    Lab,
    /// Interaction picture of the static Hamiltonian, all drive terms kept.
    Interaction,
    /// Interaction picture with counter-rotating terms dropped.
    #[default]
    Rwa,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Order {
    Second,
    /// Yoshida triple-jump composition of the midpoint step.
    #[default]
    Fourth,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PropagatorOptions {
    pub frame: Frame,
    pub order: Order,
    /// RWA terms detuned by more than this (rad/s) are dropped.
    pub window: Option<f64>,
    /// Steps per period of the fastest retained oscillation.
    pub points_per_period: f64,
    /// Bound on `h·‖V‖` per step.
    pub rabi_resolution: f64,
    pub max_step: Option<f64>,
    pub solver_tolerance: f64,
    pub norm_tolerance: f64,
    /// Keep every `record_every`-th step in the trajectory (0: ends only).
    pub record_every: usize,
    /// Drive matrix elements below this fraction of the largest are dropped.
    pub element_floor: f64,
}

impl Default for PropagatorOptions {
    fn default() -> Self {
        PropagatorOptions {
            frame: Frame::Rwa,
            order: Order::Fourth,
            window: None,
            points_per_period: 20.0,
            rabi_resolution: 0.05,
            max_step: None,
            solver_tolerance: 1e-14,
            norm_tolerance: 1e-7,
            record_every: 0,
            element_floor: 1e-6,
        }
    }
}

/// Static energies and drive operators on a set of dressed states.
#[derive(Clone, Debug)]
pub struct DrivenSystem {
    /// Dressed-state index of every retained state.
    pub states: Vec<usize>,
    pub energies: Vec<f64>,
    pub labels: Vec<BareLabel>,
    /// Drive operator of each QS restricted to the retained states.
    pub drive: Vec<DMatrix<f64>>,
}

impl DrivenSystem {
    pub fn new(spectrum: &DressedSpectrum, drive: &[LevelCoupling]) -> Result<Self> {
        let x = drive_matrices(spectrum, drive)?;
        Ok(DrivenSystem {
            states: (0..spectrum.len()).collect(),
            energies: spectrum.energies(),
            labels: spectrum.states.iter().map(|s| s.label.clone()).collect(),
            drive: x,
        })
    }

    /// A system given directly by its energies, labels and drive operators.
    pub fn from_parts(energies: Vec<f64>, labels: Vec<BareLabel>, drive: Vec<DMatrix<f64>>) -> Result<Self> {
        let d = energies.len();
        if labels.len() != d || drive.iter().any(|m| m.shape() != (d, d)) {
            return Err(Error::InvalidSpec("energies, labels and drive operators disagree in size".into()));
        }
        if drive.iter().any(|m| (m - m.transpose()).iter().any(|v| *v != 0.0)) {
            return Err(Error::InvalidSpec("drive operators must be symmetric".into()));
        }
        Ok(DrivenSystem {
            states: (0..d).collect(),
            energies,
            labels,
            drive,
        })
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn restrict(&self, keep: &[usize]) -> Self {
        DrivenSystem {
            states: keep.iter().map(|&i| self.states[i]).collect(),
            energies: keep.iter().map(|&i| self.energies[i]).collect(),
            labels: keep.iter().map(|&i| self.labels[i].clone()).collect(),
            drive: self
                .drive
                .iter()
                .map(|m| DMatrix::from_fn(keep.len(), keep.len(), |r, c| m[(keep[r], keep[c])]))
                .collect(),
        }
    }

    pub fn position(&self, label: &BareLabel) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Computational states (all QSs in 0/1, no photons) in binary order.
    pub fn computational(&self, n: usize) -> Result<Vec<usize>> {
        (0..1usize << n)
            .map(|x| {
                let label = BareLabel::new((0..n).map(|k| x >> (n - 1 - k) & 1).collect(), 0);
                self.position(&label)
                    .ok_or_else(|| Error::Precondition(format!("computational state {label} is not simulated")))
            })
            .collect()
    }

    /// States connected to `seeds` by drive terms that survive the frame.
    pub fn reachable(&self, seeds: &[usize], drive: &RenderedDrive, options: &PropagatorOptions) -> Vec<usize> {
        let couplings = Coupling::build(self, drive, options);
        let d = self.dim();
        let mut adj = vec![Vec::new(); d];
        for c in &couplings {
            if c.row != c.col {
                adj[c.row].push(c.col);
                adj[c.col].push(c.row);
            }
        }
        let mut seen = vec![false; d];
        let mut stack: Vec<usize> = seeds.to_vec();
        for &s in seeds {
            seen[s] = true;
        }
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        (0..d).filter(|&i| seen[i]).collect()
    }
}

/// `H[row, col] += coeff · env_term(t) · e^{−i freq t}` plus its conjugate.
#[derive(Clone, Copy, Debug)]
struct Coupling {
    row: usize,
    col: usize,
    term: usize,
    coeff: Complex64,
    freq: f64,
}

impl Coupling {
    fn build(sys: &DrivenSystem, drive: &RenderedDrive, options: &PropagatorOptions) -> Vec<Coupling> {
        let d = sys.dim();
        let mut out = Vec::new();
        for (ti, term) in drive.terms.iter().enumerate() {
            let Some(x) = sys.drive.get(term.qs) else { continue };
            let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let half = term.amplitude / 2.0;
            let minus = Complex64::from_polar(half, -term.phase);
            let plus = Complex64::from_polar(half, term.phase);
            for j in 0..d {
                for k in j..d {
                    let el = x[(j, k)];
                    if el.abs() <= options.element_floor * scale {
                        continue;
                    }
                    let w_kj = sys.energies[k] - sys.energies[j];
                    let mut push = |row, col, coeff: Complex64, freq| {
                        out.push(Coupling { row, col, term: ti, coeff, freq });
                    };
                    match options.frame {
                        Frame::Lab | Frame::Interaction => {
                            let shift = if options.frame == Frame::Lab { 0.0 } else { w_kj };
                            push(j, k, minus * el, shift - term.carrier);
                            if j != k {
                                push(j, k, plus * el, shift + term.carrier);
                            }
                        }
                        Frame::Rwa => {
                            if j == k || w_kj == 0.0 {
                                continue;
                            }
                            // upper state carries the conjugate
                            let (lo, hi, w) = if w_kj > 0.0 { (j, k, w_kj) } else { (k, j, -w_kj) };
                            let detuning = w - term.carrier;
                            if options.window.is_some_and(|win| detuning.abs() > win) {
                                continue;
                            }
                            push(lo, hi, minus * el, detuning);
                        }
                    }
                }
            }
        }
        out
    }
}

/// Sampled evolution of one initial state.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<Complex64>>,
    pub norms: Vec<f64>,
    /// Largest norm change over a single step.
    pub max_step_drift: f64,
    pub steps: usize,
    pub frame: Frame,
}

impl Trajectory {
    pub fn final_state(&self) -> &DVector<Complex64> {
        self.states.last().expect("trajectory holds the initial state")
    }

    /// CSV with columns `t` and the population of every listed state.
    pub fn write_csv<W: std::io::Write>(&self, system: &DrivenSystem, tracked: &[usize], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend(tracked.iter().map(|&i| system.labels[i].to_string()));
        w.write_record(&header)?;
        for (t, psi) in self.times.iter().zip(&self.states) {
            let mut row = vec![format!("{t:.12e}")];
            row.extend(tracked.iter().map(|&i| format!("{:.12e}", psi[i].norm_sqr())));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Stepper<'a> {
    sys: &'a DrivenSystem,
    drive: &'a RenderedDrive,
    couplings: Vec<Coupling>,
    options: &'a PropagatorOptions,
    /// Couplings whose envelope is on in the current segment.
    active: Vec<usize>,
    /// Matrix entry of every active coupling.
    slot: Vec<usize>,
    /// Distinct `(row, col)` entries of the active couplings.
    entries: Vec<(usize, usize)>,
    values: Vec<Complex64>,
    /// `e^{−i f t}` at the start of the current step, per active coupling.
    rotation: Vec<Complex64>,
    num: Vec<Complex64>,
    den: Vec<Complex64>,
    scratch: [DVector<Complex64>; 3],
}

/// Midpoint offsets and lengths of the stages of one step of size `h`.
fn stages(order: Order, h: f64) -> Vec<(f64, f64)> {
    match order {
        Order::Second => vec![(h / 2.0, h)],
        Order::Fourth => {
            let cbrt = 2f64.cbrt();
            let h1 = h / (2.0 - cbrt);
            let h0 = -cbrt * h1;
            vec![(h1 / 2.0, h1), (h1 + h0 / 2.0, h0), (h1 + h0 + h1 / 2.0, h1)]
        }
    }
}

impl<'a> Stepper<'a> {
    fn new(sys: &'a DrivenSystem, drive: &'a RenderedDrive, options: &'a PropagatorOptions) -> Self {
        let couplings = Coupling::build(sys, drive, options);
        let d = sys.dim();
        Stepper {
            sys,
            drive,
            couplings,
            options,
            active: Vec::new(),
            slot: Vec::new(),
            entries: Vec::new(),
            values: Vec::new(),
            rotation: Vec::new(),
            num: vec![Complex64::new(1.0, 0.0); d],
            den: vec![Complex64::new(1.0, 0.0); d],
            scratch: [DVector::from_element(d, ZERO), DVector::from_element(d, ZERO), DVector::from_element(d, ZERO)],
        }
    }

    fn static_diagonal(&self) -> bool {
        self.options.frame == Frame::Lab
    }

    fn apply(entries: &[(usize, usize)], values: &[Complex64], x: &DVector<Complex64>, y: &mut DVector<Complex64>) {
        y.fill(ZERO);
        for (&(row, col), &v) in entries.iter().zip(values) {
            if row == col {
                y[row] += x[row] * (2.0 * v.re);
            } else {
                y[row] += v * x[col];
                y[col] += v.conj() * x[row];
            }
        }
    }

    /// Solve one midpoint stage of length `h` with the drive values loaded.
    fn midpoint(&mut self, psi: &mut DVector<Complex64>, t: f64, h: f64) -> Result<()> {
        let d = psi.len();
        let ih2 = Complex64::new(0.0, h / 2.0);
        if self.static_diagonal() {
            for i in 0..d {
                let e = self.sys.energies[i];
                self.num[i] = 1.0 - ih2 * e;
                self.den[i] = 1.0 + ih2 * e;
            }
        }
        let [x, sum, vx] = &mut self.scratch;
        x.copy_from(psi);
        for _ in 0..200 {
            sum.copy_from(psi);
            *sum += &*x;
            Self::apply(&self.entries, &self.values, sum, vx);
            let mut change = 0.0f64;
            for i in 0..d {
                let next = (self.num[i] * psi[i] - ih2 * vx[i]) / self.den[i];
                change = change.max((next - x[i]).norm());
                x[i] = next;
            }
            if change <= self.options.solver_tolerance {
                psi.copy_from(x);
                return Ok(());
            }
        }
        Err(Error::StepTooLarge { time: t })
    }

    /// Step size for the active window `[a, b]`.
    fn step_size(&self, a: f64, b: f64) -> f64 {
        let mut fastest = 0.0f64;
        let mut row_rate = vec![0.0f64; self.sys.dim()];
        for &ci in &self.active {
            let c = &self.couplings[ci];
            fastest = fastest.max(c.freq.abs());
            let r = c.coeff.norm() * self.drive.terms[c.term].envelope.peak() * if c.row == c.col { 2.0 } else { 1.0 };
            row_rate[c.row] += r;
            if c.row != c.col {
                row_rate[c.col] += r;
            }
        }
        if self.static_diagonal() {
            let e = self.sys.energies.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            fastest = fastest.max(e);
        }
        let rate = row_rate.iter().fold(0.0f64, |m, v| m.max(*v));
        let mut h = b - a;
        if fastest > 0.0 {
            h = h.min(2.0 * PI / (self.options.points_per_period * fastest));
        }
        if rate > 0.0 {
            h = h.min(self.options.rabi_resolution / rate);
        }
        if let Some(m) = self.options.max_step {
            h = h.min(m);
        }
        h
    }

    /// Exact static evolution over an idle stretch of length `dt`.
    fn idle(&self, psi: &mut DVector<Complex64>, dt: f64) {
        if self.static_diagonal() {
            for (a, &e) in psi.iter_mut().zip(&self.sys.energies) {
                *a *= Complex64::from_polar(1.0, -e * dt);
            }
        }
    }

    fn run(&mut self, psi0: &DVector<Complex64>, t0: f64, t1: f64) -> Result<Trajectory> {
        let mut psi = psi0.clone();
        let norm0 = psi.norm();
        let mut traj = Trajectory {
            times: vec![t0],
            states: vec![psi.clone()],
            norms: vec![norm0],
            max_step_drift: 0.0,
            steps: 0,
            frame: self.options.frame,
        };
        let mut marks = vec![t0, t1];
        for term in &self.drive.terms {
            marks.push(term.envelope.start().clamp(t0, t1));
            marks.push(term.envelope.end().clamp(t0, t1));
        }
        marks.sort_by(f64::total_cmp);
        marks.dedup();
        let mut previous = norm0;
        for w in marks.windows(2) {
            let (a, b) = (w[0], w[1]);
            let on: Vec<bool> = self
                .drive
                .terms
                .iter()
                .map(|d| d.envelope.start() < b && d.envelope.end() > a)
                .collect();
            self.active = (0..self.couplings.len()).filter(|&c| on[self.couplings[c].term]).collect();
            if self.active.is_empty() {
                self.idle(&mut psi, b - a);
                continue;
            }
            let n = ((b - a) / self.step_size(a, b)).ceil().max(1.0) as usize;
            let h = (b - a) / n as f64;
            let stages = stages(self.options.order, h);
            let phase = |f: f64, t: f64| Complex64::from_polar(1.0, -f * t);
            let freqs: Vec<f64> = self.active.iter().map(|&c| self.couplings[c].freq).collect();
            let advance: Vec<Complex64> = freqs.iter().map(|&f| phase(f, h)).collect();
            let offsets: Vec<Vec<Complex64>> = stages
                .iter()
                .map(|&(off, _)| freqs.iter().map(|&f| phase(f, off)).collect())
                .collect();
            let mut index = std::collections::HashMap::new();
            self.entries.clear();
            self.slot = self
                .active
                .iter()
                .map(|&c| {
                    let key = (self.couplings[c].row, self.couplings[c].col);
                    *index.entry(key).or_insert_with(|| {
                        self.entries.push(key);
                        self.entries.len() - 1
                    })
                })
                .collect();
            self.values = vec![ZERO; self.entries.len()];
            for s in 0..n {
                let t = a + s as f64 * h;
                if s % 256 == 0 {
                    self.rotation = freqs.iter().map(|&f| phase(f, t)).collect();
                }
                for (k, &(off, len)) in stages.iter().enumerate() {
                    let env: Vec<f64> = self.drive.terms.iter().zip(&on).map(|(d, &o)| if o { d.envelope.value(t + off) } else { 0.0 }).collect();
                    self.values.fill(ZERO);
                    for (i, &ci) in self.active.iter().enumerate() {
                        let c = &self.couplings[ci];
                        let e = env[c.term];
                        if e != 0.0 {
                            self.values[self.slot[i]] += c.coeff * e * self.rotation[i] * offsets[k][i];
                        }
                    }
                    self.midpoint(&mut psi, t + off, len)?;
                }
                for (r, adv) in self.rotation.iter_mut().zip(&advance) {
                    *r *= adv;
                }
                traj.steps += 1;
                let norm = psi.norm();
                traj.max_step_drift = traj.max_step_drift.max((norm - previous).abs());
                previous = norm;
                if (norm - norm0).abs() > self.options.norm_tolerance {
                    return Err(Error::NormDrift {
                        drift: (norm - norm0).abs(),
                        time: t + h,
                    });
                }
                if self.options.record_every > 0 && traj.steps % self.options.record_every == 0 {
                    traj.times.push(t + h);
                    traj.states.push(psi.clone());
                    traj.norms.push(norm);
                }
            }
        }
        if traj.times.last() != Some(&t1) || traj.states.len() == 1 {
            traj.times.push(t1);
            traj.states.push(psi.clone());
            traj.norms.push(psi.norm());
        }
        Ok(traj)
    }
}

/// Integrate `psi0` from time 0 to `t_end` (the end of the drive when
/// `None`). States are reported in the chosen frame.
pub fn evolve(
    system: &DrivenSystem,
    drive: &RenderedDrive,
    psi0: &DVector<Complex64>,
    t_end: Option<f64>,
    options: &PropagatorOptions,
) -> Result<Trajectory> {
    if psi0.len() != system.dim() {
        return Err(Error::Precondition("initial state does not match the simulated space".into()));
    }
    if (psi0.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::Precondition("initial state must be normalized".into()));
    }
    let t1 = t_end.unwrap_or_else(|| drive.duration());
    if !(t1 >= 0.0) {
        return Err(Error::Domain("evolution time must be non-negative".into()));
    }
    Stepper::new(system, drive, options).run(psi0, 0.0, t1)
}

/// Lab-frame state expressed in the interaction picture at time `t`.
pub fn to_interaction(system: &DrivenSystem, psi: &DVector<Complex64>, t: f64) -> DVector<Complex64> {
    DVector::from_fn(psi.len(), |i, _| psi[i] * Complex64::from_polar(1.0, system.energies[i] * t))
}

/// Effective gate on the computational subspace, in the interaction
/// picture of the static Hamiltonian.
#[derive(Clone, Debug)]
pub struct GateReport {
    /// Projected evolution multiplied by the best global phase.
    pub unitary: CMatrix,
    pub fidelity: f64,
    /// Largest population any input leaves outside the subspace.
    pub leakage: f64,
    pub unusable: bool,
    pub max_step_drift: f64,
    pub steps: usize,
}

/// Serializable view of a [`GateReport`].
#[derive(Serialize, Deserialize)]
pub struct GateReportJson {
    pub fidelity: f64,
    pub leakage: f64,
    pub unusable: bool,
    pub max_step_drift: f64,
    pub steps: usize,
    /// Rows of `[re, im]` pairs.
    pub unitary: Vec<Vec<[f64; 2]>>,
}

impl GateReport {
    pub fn to_json(&self) -> GateReportJson {
        GateReportJson {
            fidelity: self.fidelity,
            leakage: self.leakage,
            unusable: self.unusable,
            max_step_drift: self.max_step_drift,
            steps: self.steps,
            unitary: (0..self.unitary.nrows())
                .map(|r| {
                    (0..self.unitary.ncols())
                        .map(|c| [self.unitary[(r, c)].re, self.unitary[(r, c)].im])
                        .collect()
                })
                .collect(),
        }
    }
}

/// Leakage above which a gate report is flagged unusable.
pub const UNUSABLE_LEAKAGE: f64 = 0.5;

/// Run every computational input (in parallel) and compare the projected
/// evolution with `target`. `inputs` lists the simulated index of each
/// computational state in binary order.
pub fn extract_gate(
    system: &DrivenSystem,
    drive: &RenderedDrive,
    inputs: &[usize],
    target: &CMatrix,
    options: &PropagatorOptions,
) -> Result<GateReport> {
    let m = inputs.len();
    if target.shape() != (m, m) {
        return Err(Error::Precondition(format!("target is {:?}, expected {m}×{m}", target.shape())));
    }
    let t1 = drive.duration();
    let runs: Vec<Result<Trajectory>> = inputs
        .par_iter()
        .map(|&i| {
            let mut psi0 = DVector::from_element(system.dim(), ZERO);
            psi0[i] = Complex64::new(1.0, 0.0);
            let mut opts = *options;
            opts.record_every = 0;
            evolve(system, drive, &psi0, Some(t1), &opts)
        })
        .collect();
    let mut raw = CMatrix::zeros(m, m);
    let mut leakage = 0.0f64;
    let mut drift = 0.0f64;
    let mut steps = 0;
    for (col, run) in runs.into_iter().enumerate() {
        let traj = run?;
        let mut psi = traj.final_state().clone();
        if options.frame == Frame::Lab {
            psi = to_interaction(system, &psi, t1);
        }
        let mut kept = 0.0;
        for (row, &j) in inputs.iter().enumerate() {
            raw[(row, col)] = psi[j];
            kept += psi[j].norm_sqr();
        }
        leakage = leakage.max((1.0 - kept).clamp(0.0, 1.0));
        drift = drift.max(traj.max_step_drift);
        steps = steps.max(traj.steps);
    }
    let f = fidelity(target, &raw);
    Ok(GateReport {
        unitary: align_global_phase(target, &raw),
        fidelity: f,
        leakage,
        unusable: leakage > UNUSABLE_LEAKAGE,
        max_step_drift: drift,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelope::Envelope;
    use crate::schedule::DriveTerm;

    fn two_level(w: f64) -> DrivenSystem {
        let x = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        DrivenSystem::from_parts(vec![0.0, w], vec![BareLabel::new(vec![0], 0), BareLabel::new(vec![2], 0)], vec![x]).unwrap()
    }

    #[test]
    fn zero_drive_is_free_evolution() {
        let sys = two_level(3.0);
        let psi0 = DVector::from_vec(vec![Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)]);
        for frame in [Frame::Lab, Frame::Rwa] {
            let opts = PropagatorOptions { frame, ..Default::default() };
            let tr = evolve(&sys, &RenderedDrive::default(), &psi0, Some(2.0), &opts).unwrap();
            let f = tr.final_state();
            let expect = if frame == Frame::Lab { psi0[1] * Complex64::from_polar(1.0, -6.0) } else { psi0[1] };
            assert!((f[0] - psi0[0]).norm() < 1e-14);
            assert!((f[1] - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn resonant_pi_pulse_transfers() {
        let sys = two_level(40.0);
        let env = Envelope::gaussian(4.0, 1.0).unwrap();
        let drive = RenderedDrive {
            terms: vec![DriveTerm { envelope: env, carrier: 40.0, phase: 0.0, amplitude: PI, qs: 0, targets: vec![(0, 1)] }],
            warnings: vec![],
        };
        let psi0 = DVector::from_vec(vec![Complex64::new(1.0, 0.0), ZERO]);
        let tr = evolve(&sys, &drive, &psi0, None, &PropagatorOptions::default()).unwrap();
        // |0> -> −i|1>
        assert!((tr.final_state()[1] - Complex64::new(0.0, -1.0)).norm() < 1e-8);
    }

    #[test]
    fn reachable_follows_window() {
        let x = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let labels = (0..3).map(|l| BareLabel::new(vec![l], 0)).collect();
        let sys = DrivenSystem::from_parts(vec![0.0, 10.0, 25.0], labels, vec![x]).unwrap();
        let env = Envelope::gaussian(4.0, 1.0).unwrap();
        let drive = RenderedDrive {
            terms: vec![DriveTerm { envelope: env, carrier: 10.0, phase: 0.0, amplitude: 1.0, qs: 0, targets: vec![] }],
            warnings: vec![],
        };
        let opts = PropagatorOptions { window: Some(2.0), ..Default::default() };
        assert_eq!(sys.reachable(&[0], &drive, &opts), vec![0, 1]);
        let opts = PropagatorOptions { window: Some(6.0), ..Default::default() };
        assert_eq!(sys.reachable(&[0], &drive, &opts), vec![0, 1, 2]);
    }
}
