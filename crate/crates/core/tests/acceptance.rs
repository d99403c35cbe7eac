use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use cavity_walk::device::*;
use cavity_walk::envelope::Envelope;
use cavity_walk::gates::*;
use cavity_walk::propagator::*;
use cavity_walk::schedule::*;
use cavity_walk::spectroscopy::*;
use cavity_walk::sweep::{run_sweep, SweepConfig, SweepRow};
use cavity_walk::units::{ghz, mhz};
use cavity_walk::walk::*;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = fn() -> Result<String, String>;

fn ensure(ok: bool, msg: String) -> Result<(), String> {
    if ok { Ok(()) } else { Err(msg) }
}

fn within(elapsed: f64, limit: f64) -> Result<(), String> {
    ensure(elapsed < limit, format!("took {elapsed:.1} s, limit {limit} s"))
}

fn walk_design_oracle() -> Result<String, String> {
    let t0 = Instant::now();
    let d = design_ccz(1.0).map_err(|e| e.to_string())?;
    let u = d.computational_unitary().map_err(|e| e.to_string())?;
    let mut dev = 0.0f64;
    let mut flipped = 0;
    for i in 0..8 {
        for j in 0..8 {
            let z = u[(i, j)];
            if i != j {
                dev = dev.max(z.norm());
            } else if (z + 1.0).norm() < 0.5 {
                flipped += 1;
                dev = dev.max((z + 1.0).norm());
            } else {
                dev = dev.max((z - 1.0).norm());
            }
        }
    }
    ensure(flipped == 1, format!("{flipped} states carry −1"))?;
    ensure(dev <= 1e-10, format!("deviation {dev:.2e}"))?;
    let t = d.table();
    let [.., s2iii, s3iii] = ccz_symbols();
    let s17 = 17f64.sqrt();
    let err = (t[&s2iii] - (3.0 + s17) * PI / 2.0).abs().max((t[&s3iii] - (3.0 - s17) * PI / 2.0).abs());
    ensure(err <= 1e-12, format!("tier-iii amplitudes off by {err:.2e}"))?;
    within(t0.elapsed().as_secs_f64(), 1.0)?;
    Ok(format!("deviation {dev:.1e}, amplitude error {err:.1e}"))
}

fn chain_spectrum() -> Result<String, String> {
    let t0 = Instant::now();
    let w = [PI, 6f64.sqrt() * PI, 3.0 * PI / 2f64.sqrt(), 17f64.sqrt() * PI / 2f64.sqrt()];
    let closed = chain_eigenfrequencies(w[0], w[1], w[2], w[3]);
    let mut m = DMatrix::<f64>::zeros(5, 5);
    for (i, v) in w.iter().enumerate() {
        m[(i, i + 1)] = *v;
        m[(i + 1, i)] = *v;
    }
    let mut direct: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    direct.sort_by(f64::total_cmp);
    let expected = [-4.0 * PI, -2.0 * PI, 0.0, 2.0 * PI, 4.0 * PI];
    let mut err = 0.0f64;
    for k in 0..5 {
        err = err.max((closed[k] - direct[k]).abs()).max((closed[k] - expected[k]).abs());
    }
    ensure(err <= 1e-12, format!("max error {err:.2e}"))?;
    within(t0.elapsed().as_secs_f64(), 1.0)?;
    Ok(format!("max error {err:.1e}"))
}

fn two_level(w: f64) -> DrivenSystem {
    let x = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    DrivenSystem::from_parts(vec![0.0, w], vec![BareLabel::new(vec![0], 0), BareLabel::new(vec![2], 0)], vec![x])
        .expect("two-level system")
}

fn sech_drive(center: f64, sigma: f64, carrier: f64, area: f64) -> RenderedDrive {
    RenderedDrive {
        terms: vec![DriveTerm {
            envelope: Envelope::sech(center, sigma).expect("envelope"),
            carrier,
            phase: 0.0,
            amplitude: area,
            qs: 0,
            targets: vec![(0, 1)],
        }],
        warnings: vec![],
    }
}

fn ground() -> DVector<Complex64> {
    DVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)])
}

fn rosen_zener() -> Result<String, String> {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let sigma = rng.random_range(1e-3..1e3);
        let delta = rng.random_range(-1e3..1e3);
        let z = rosen_zener_factor(sigma, delta).map_err(|e| e.to_string())?;
        ensure((z.norm() - 1.0).abs() <= 4.0 * f64::EPSILON, format!("|factor| = {}", z.norm()))?;
        let p = rosen_zener_phase(sigma, delta).map_err(|e| e.to_string())?;
        let m = rosen_zener_phase(sigma, -delta).map_err(|e| e.to_string())?;
        ensure(wrap_phase(p + m).abs() <= 1e-12, format!("phase not odd at σ={sigma} δ={delta}"))?;
    }
    let p0 = rosen_zener_phase(1.0, 0.0).map_err(|e| e.to_string())?;
    ensure((p0.abs() - PI).abs() <= 1e-15, format!("φ(0) = {p0}"))?;

    // the pair of π pulses is one 2π sech pulse on the transition
    let sys = two_level(50.0);
    let mut worst = 0.0f64;
    for (sigma, delta) in [(1.0, 0.1), (1.0, -0.5), (1.0, 1.0), (0.5, 0.8), (2.0, -3.0)] {
        let drive = sech_drive(20.0 / sigma, sigma, 50.0 + delta, 2.0 * PI);
        let tr = evolve(&sys, &drive, &ground(), None, &PropagatorOptions::default()).map_err(|e| e.to_string())?;
        let phase = tr.final_state()[0].arg();
        let expect = rosen_zener_phase(sigma, delta).map_err(|e| e.to_string())?;
        worst = worst.max(wrap_phase(phase - expect).abs());
    }
    ensure(worst <= 1e-3, format!("numerical phase off by {worst:.2e} rad"))?;
    within(t0.elapsed().as_secs_f64(), 10.0)?;
    Ok(format!("worst numerical phase error {worst:.1e} rad"))
}

fn lambda_primitive() -> Result<String, String> {
    let t0 = Instant::now();
    let sys = two_level(50.0);
    let drive = sech_drive(20.0, 1.0, 50.0, 2.0 * PI);
    let tr = evolve(&sys, &drive, &ground(), None, &PropagatorOptions::default()).map_err(|e| e.to_string())?;
    let a = tr.final_state()[0];
    let infidelity = 1.0 - (a * Complex64::new(-1.0, 0.0).conj()).re.powi(2);
    ensure(infidelity <= 1e-6, format!("infidelity {infidelity:.2e}, amplitude {a}"))?;
    within(t0.elapsed().as_secs_f64(), 10.0)?;
    Ok(format!("infidelity {infidelity:.1e}"))
}

fn bit_trains() -> Result<String, String> {
    let t0 = Instant::now();
    for n in 3..=6 {
        for gate in [DiagonalGate::MultiControlZ, DiagonalGate::CzCascade] {
            let train = compile_bit_train(&gate, n, &TrainOptions::new(1.0)).map_err(|e| e.to_string())?;
            ensure(check_non_interference(&train.words), format!("{gate:?} n={n}: words share a slot"))?;
            for w in &train.words {
                ensure(w.count_ones() % 2 == 0, format!("{gate:?} n={n}: odd word {w:b}"))?;
            }
        }
    }
    let mut worst = 0.0f64;
    for gate in [DiagonalGate::MultiControlZ, DiagonalGate::CzCascade] {
        let train = compile_bit_train(&gate, 3, &TrainOptions::new(1.0)).map_err(|e| e.to_string())?;
        let out = simulate_ideal(&train).map_err(|e| e.to_string())?;
        let target = diagonal_unitary(&target_phases(&gate, 3, train.options.active_level).map_err(|e| e.to_string())?);
        worst = worst.max(1.0 - fidelity(&target, &out.unitary));
    }
    ensure(worst <= 1e-6, format!("idealized infidelity {worst:.2e}"))?;
    within(t0.elapsed().as_secs_f64(), 60.0)?;
    Ok(format!("n = 3..6 clean, idealized infidelity {worst:.1e}"))
}

fn toffoli_algebra() -> Result<String, String> {
    let h = hadamard();
    let h3 = on_qubit(&h, 2, 3);
    let t = &h3 * multi_controlled_z(3) * &h3;
    let h2 = on_qubit(&h, 1, 2);
    let c = &h2 * multi_controlled_z(2) * &h2;
    let e1 = (&t - toffoli()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let e2 = (&c - cnot()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    // the only rounding is 1/√2 · 1/√2 ≠ 1/2 in the last bit
    ensure(e1 <= 1e-15 && e2 <= 1e-15, format!("deviations {e1:.1e}, {e2:.1e}"))?;
    Ok(format!("max entry deviation {:.1e}", e1.max(e2)))
}

fn ccz_sweep() -> Result<String, String> {
    let t0 = Instant::now();
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/ccz_sweep.json");
    let text = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
    let config: SweepConfig = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let job = config.into_job().map_err(|e| e.to_string())?;
    ensure(job.omega_c.len() == 8 && job.sigma.len() == 8, "grid is not 8×8".into())?;
    ensure(job.system.levels_per_qs >= 4 && job.system.cavity_cutoff >= 4, "cutoffs below 4".into())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let rows: Vec<SweepRow> = run_sweep(&job, &dir.path().join("ccz.csv"), false, &|_| {}).map_err(|e| e.to_string())?;
    let (nw, ns) = (job.omega_c.len(), job.sigma.len());
    let f = |i: usize, j: usize| {
        let v = rows[i * ns + j].fidelity;
        if v.is_nan() { 0.0 } else { v }
    };

    // (a) the cells with F ≥ 0.95 form one 4-connected region of at least two cells
    let good: BTreeSet<(usize, usize)> = (0..nw).flat_map(|i| (0..ns).map(move |j| (i, j))).filter(|&(i, j)| f(i, j) >= 0.95).collect();
    ensure(good.len() >= 2, format!("{} cells reach 0.95", good.len()))?;
    let mut seen = BTreeSet::new();
    let mut stack = vec![*good.iter().next().expect("non-empty")];
    while let Some((i, j)) = stack.pop() {
        if !good.contains(&(i, j)) || !seen.insert((i, j)) {
            continue;
        }
        stack.extend([(i.wrapping_sub(1), j), (i + 1, j), (i, j.wrapping_sub(1)), (i, j + 1)]);
    }
    ensure(seen.len() == good.len(), format!("high-fidelity cells split: {} of {} connected", seen.len(), good.len()))?;

    // (b) the region shrinks with σ and is gone once σ approaches g
    let width: Vec<usize> = (0..ns).map(|j| (0..nw).filter(|&i| f(i, j) >= 0.95).count()).collect();
    ensure(width.windows(2).all(|w| w[1] <= w[0]), format!("region width per σ {width:?} grows"))?;
    let best: Vec<f64> = (0..ns).map(|j| (0..nw).map(|i| f(i, j)).fold(0.0, f64::max)).collect();
    let near_g = (0..ns).filter(|&j| job.sigma[j] >= 0.1 * job.system.g).collect::<Vec<_>>();
    ensure(!near_g.is_empty(), "grid stops short of g/10".into())?;
    let worst_near_g = near_g.iter().map(|&j| best[j]).fold(0.0, f64::max);
    ensure(worst_near_g < 0.5, format!("best fidelity {worst_near_g:.3} with σ ≥ g/10"))?;
    Ok(format!(
        "region widths {width:?}, best F per σ {:?}, {:.0} s",
        best.iter().map(|b| (b * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
        t0.elapsed().as_secs_f64()
    ))
}

fn brute_force(g: f64, a: f64, k: f64, gamma: f64, cap: usize) -> usize {
    let mut m = 0;
    while m < cap {
        let next = (m + 1) as f64;
        let spectral = (a - k * next).abs() >= g;
        let coherence = g >= 10.0 * k * next * gamma;
        if !(spectral && coherence) {
            break;
        }
        m += 1;
    }
    m
}

fn crowding() -> Result<String, String> {
    // corners of the transmon parameter ranges
    let mut limits = Vec::new();
    for (a, k) in [(0.01, 0.001), (0.1, 0.01), (0.05, 0.005)] {
        let l = crowding_limit(&CrowdingParams::new(0.001, a, k, 0.0)).map_err(|e| e.to_string())?;
        ensure(l.max_qubits < 10, format!("|α/ω₁| = {a}, k = {k}: M = {}", l.max_qubits))?;
        limits.push(l.max_qubits);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let g = rng.random_range(0.0005..0.002);
        let a = rng.random_range(0.01..0.1);
        let k = rng.random_range(0.001..0.01);
        let gamma = rng.random_range(0.0..0.05);
        let l = crowding_limit(&CrowdingParams::new(g, a, k, gamma)).map_err(|e| e.to_string())?;
        let b = brute_force(g, a, k, gamma, 1000);
        ensure(l.max_qubits == b, format!("g={g} α={a} k={k} Γ={gamma}: {} vs scan {b}", l.max_qubits))?;
    }
    Ok(format!("M = {limits:?}; 20 random tuples agree with the scan"))
}

fn walk_cross_oracle() -> Result<String, String> {
    let t0 = Instant::now();
    let g = mhz(10.0);
    let omega_c = ghz(5.0);
    let wq = [ghz(1.1), ghz(1.37), ghz(1.71)];
    let nu = [1.0, 1.5, 1.75].map(|d| omega_c + d * g);
    let qs = (0..3).map(|m| QsLevels::Explicit(vec![0.0, wq[m], nu[m], wq[m] + nu[m]])).collect();
    let mut spec = SystemSpec::new(qs, 4, 3, omega_c, g, CouplingScheme::Auxiliary).map_err(|e| e.to_string())?;
    spec.drive = vec![LevelCoupling { lower: 0, upper: 2, element: 1.0 }];
    let spectrum = diagonalize_and_label(&spec).map_err(|e| e.to_string())?;
    let catalog = transition_catalog(&spectrum, &spec.drive, 1e-6).map_err(|e| e.to_string())?;
    let design = design_ccz(1.0).map_err(|e| e.to_string())?;
    let peak = g / 1000.0;
    let drive = render_walk(&design, &catalog, peak).map_err(|e| e.to_string())?;
    ensure(drive.warnings.is_empty(), format!("render warnings: {:?}", drive.warnings))?;
    let rabi = drive
        .terms
        .iter()
        .map(|t| {
            let el = t.targets.iter().map(|&(a, b)| spectrum_element(&catalog, a, b)).fold(0.0, f64::max);
            t.amplitude.abs() / 2.0 * el * t.envelope.peak()
        })
        .fold(0.0, f64::max);
    ensure(rabi <= g / 10.0, format!("peak Rabi amplitude {:.3e} above g/10", rabi))?;
    let sys = DrivenSystem::new(&spectrum, &spec.drive).map_err(|e| e.to_string())?;
    let opts = PropagatorOptions { window: Some(g / 2.0), ..Default::default() };
    let comp = sys.computational(3).map_err(|e| e.to_string())?;
    let sub = sys.restrict(&sys.reachable(&comp, &drive, &opts));
    let inputs = sub.computational(3).map_err(|e| e.to_string())?;
    let target = design.computational_unitary().map_err(|e| e.to_string())?;
    let r = extract_gate(&sub, &drive, &inputs, &target, &opts).map_err(|e| e.to_string())?;
    let infidelity = 1.0 - r.fidelity;
    ensure(infidelity <= 1e-3, format!("infidelity {infidelity:.2e}, leakage {:.2e}", r.leakage))?;
    Ok(format!(
        "infidelity {infidelity:.1e} at peak Rabi {:.1e}·g, {} states, {:.0} s",
        rabi / g,
        sub.dim(),
        t0.elapsed().as_secs_f64()
    ))
}

fn spectrum_element(catalog: &[Transition], a: usize, b: usize) -> f64 {
    catalog.iter().find(|t| t.from == a && t.to == b).map_or(0.0, |t| t.matrix_element.abs())
}

fn unitarity_and_labels() -> Result<String, String> {
    let spec = SystemSpec::reference_transmons(4, 4, ghz(4.84)).map_err(|e| e.to_string())?;
    let h = assemble_hamiltonian(&spec).map_err(|e| e.to_string())?;
    ensure(h == h.transpose(), "Hamiltonian is not bit-exactly symmetric".into())?;

    let (spectrum, trace) = diagonalize_and_label_traced(&spec, &LabelOptions::default()).map_err(|e| e.to_string())?;
    let dim = h.nrows();
    let mut rebuilt = DMatrix::<f64>::zeros(dim, dim);
    for (i, s) in spectrum.states.iter().enumerate() {
        let v = spectrum.vector(i);
        rebuilt += s.energy * &v * v.transpose();
    }
    let rel = (&rebuilt - &h).norm() / h.norm();
    ensure(rel <= 1e-9, format!("eigen roundtrip {rel:.2e}"))?;

    for (k, step) in trace.steps.iter().enumerate() {
        let set: BTreeSet<usize> = step.iter().copied().collect();
        ensure(step.len() == dim && set.len() == dim && set.iter().all(|&i| i < dim), format!("labels at ramp step {k} are not a permutation"))?;
    }

    let settings = cavity_walk::sweep::SimSettings { active_level: Some(1), ..Default::default() };
    let prepared = cavity_walk::sweep::Prepared::new(&spec, &settings).map_err(|e| e.to_string())?;
    let report = cavity_walk::sweep::simulate_train(&prepared, &DiagonalGate::MultiControlZ, mhz(0.001), &settings).map_err(|e| e.to_string())?;
    ensure(report.max_step_drift <= 1e-9, format!("norm drift {:.2e} per step", report.max_step_drift))?;
    Ok(format!(
        "roundtrip {rel:.1e}, {} ramp steps permuted, drift {:.1e}/step",
        trace.steps.len(),
        report.max_step_drift
    ))
}

fn main() {
    let checks: [(&str, Check); 10] = [
        ("walk-design oracle", walk_design_oracle),
        ("chain spectrum", chain_spectrum),
        ("Rosen-Zener properties", rosen_zener),
        ("Lambda-system primitive", lambda_primitive),
        ("bit-train compiler", bit_trains),
        ("Toffoli algebra", toffoli_algebra),
        ("cavity-frequency/bandwidth sweep", ccz_sweep),
        ("crowding limit", crowding),
        ("walk drive cross-oracle", walk_cross_oracle),
        ("unitarity and labels", unitarity_and_labels),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut failed = 0;
    for (k, (name, check)) in checks.iter().enumerate() {
        if only.is_some_and(|o| o != k + 1) {
            continue;
        }
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", k + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", k + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
