use super::*;
use crate::units::{GHZ, MHZ, NS};
use approx::assert_relative_eq;
use nalgebra::SymmetricEigen;

fn fixed(label: &str, levels: usize, f: f64, alpha: f64) -> Subsystem {
    Subsystem {
        label: label.into(),
        levels,
        frequency: FrequencySource::Fixed(f),
        anharmonicity: alpha,
    }
}

fn eigenvalues(h: &ComplexMatrix) -> Vec<f64> {
    let mut v: Vec<f64> = SymmetricEigen::new(h.clone()).eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

fn random_density(d: usize, seed: u64) -> ComplexMatrix {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let a = ComplexMatrix::from_fn(d, d, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    let m = &a * a.adjoint();
    let tr = m.trace();
    m / tr
}

#[test]
fn single_excitation_block_examples() {
    let w = angular(20.0 * MHZ);
    let ev = eigenvalues(&build_qc_hamiltonian_1ex(0.0, 20.0 * MHZ));
    assert_relative_eq!(ev[0], -w, max_relative = 1e-12);
    assert_relative_eq!(ev[1], w, max_relative = 1e-12);
    let ev = eigenvalues(&build_qc_hamiltonian_1ex(300.0 * MHZ, 0.0));
    assert_relative_eq!(ev[1], angular(150.0 * MHZ), max_relative = 1e-12);
    // Avoided-crossing gap by sweep.
    let mut gap = f64::INFINITY;
    for k in -200..=200 {
        let ev = eigenvalues(&build_qc_hamiltonian_1ex(k as f64 * 0.5 * MHZ, 20.0 * MHZ));
        gap = gap.min(ev[1] - ev[0]);
    }
    assert_relative_eq!(gap, 2.0 * w, max_relative = 1e-9);
}

#[test]
fn two_excitation_block_examples() {
    let h = build_qc_hamiltonian_2ex(100.0 * MHZ, 0.0, 187.4 * MHZ, 330.0 * MHZ);
    let ev = eigenvalues(&h);
    let mut expected = [angular(100e6 - 330e6), 0.0, angular(-100e6 - 187.4e6)];
    expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for (a, b) in ev.iter().zip(expected) {
        assert!((a - b).abs() < 1e-6);
    }
    // First-order anticrossings with |1q1c⟩ sit near Δ = E_C^c and Δ = −E_C^q.
    let minima = first_order_gap_minima(-800.0 * MHZ, 800.0 * MHZ, 20.0 * MHZ);
    assert_eq!(minima.len(), 2, "{minima:?}");
    assert!((minima[0] + 187.4 * MHZ).abs() < 5.0 * MHZ, "{minima:?}");
    assert!((minima[1] - 330.0 * MHZ).abs() < 5.0 * MHZ, "{minima:?}");
}

/// Local minima of the smallest adjacent level spacing of the 2-excitation
/// block, keeping only gaps wider than g (the |0q2c⟩–|2q0c⟩ crossing is
/// second order and much narrower).
fn first_order_gap_minima(from: f64, to: f64, g: f64) -> Vec<f64> {
    let n = ((to - from) / MHZ).round() as usize;
    let gaps: Vec<(f64, f64)> = (0..=n)
        .map(|k| {
            let delta = from + k as f64 * MHZ;
            let ev = eigenvalues(&build_qc_hamiltonian_2ex(delta, g, 187.4 * MHZ, 330.0 * MHZ));
            (delta, (ev[1] - ev[0]).min(ev[2] - ev[1]))
        })
        .collect();
    gaps.windows(3)
        .filter(|w| w[1].1 < w[0].1 && w[1].1 < w[2].1 && w[1].1 > angular(g))
        .map(|w| w[1].0)
        .collect()
}

#[test]
fn coupler_sweep_shows_two_anticrossings() {
    // Qubit at 4.835 GHz, coupler swept 4.0–5.5 GHz.
    let fq = 4.835 * GHZ;
    let minima: Vec<f64> = first_order_gap_minima(4.0 * GHZ - fq, 5.5 * GHZ - fq, 20.0 * MHZ)
        .into_iter()
        .map(|d| d + fq)
        .collect();
    assert_eq!(minima.len(), 2, "{minima:?}");
    assert!((minima[0] - (fq - 187.4 * MHZ)).abs() < 5.0 * MHZ);
    assert!((minima[1] - (fq + 330.0 * MHZ)).abs() < 5.0 * MHZ);
}

#[test]
fn composite_blocks_match_printed_matrices() {
    let fq = 4.835 * GHZ;
    let fc = 5.1 * GHZ;
    let g = 55.0 * MHZ;
    let (ecq, ecc) = (187.4 * MHZ, 330.0 * MHZ);
    let sys = QuantumSystem::new(vec![fixed("qubit", 3, fq, -ecq), fixed("coupler", 3, fc, -ecc)]).with_coupling(0, 1, g);
    let h = build_composite_hamiltonian(&sys, &[fq, fc]).unwrap();
    let idx = |q, c| sys.basis_index(&[q, c]);
    let one = [idx(0, 1), idx(1, 0)];
    let two = [idx(0, 2), idx(1, 1), idx(2, 0)];
    let block = |states: &[usize]| ComplexMatrix::from_fn(states.len(), states.len(), |i, j| h[(states[i], states[j])]);
    let b1 = block(&one);
    let b2 = block(&two);
    let ref1 = build_qc_hamiltonian_1ex(fc - fq, g);
    let ref2 = build_qc_hamiltonian_2ex(fc - fq, g, ecq, ecc);
    let off1 = angular(fq + fc) / 2.0;
    let off2 = angular(fq + fc);
    for i in 0..2 {
        for j in 0..2 {
            let shift = if i == j { off1 } else { 0.0 };
            assert!((b1[(i, j)].re - shift - ref1[(i, j)].re).abs() < 1e-3);
        }
    }
    for i in 0..3 {
        for j in 0..3 {
            let shift = if i == j { off2 } else { 0.0 };
            assert!((b2[(i, j)].re - shift - ref2[(i, j)].re).abs() < 1e-3, "{i}{j}");
        }
    }
    let uncoupled = QuantumSystem::new(vec![fixed("a", 3, fq, -ecq), fixed("b", 2, fc, 0.0)]);
    let h0 = build_composite_hamiltonian(&uncoupled, &[fq, fc]).unwrap();
    assert!(h0.iter().enumerate().all(|(k, z)| k % (h0.nrows() + 1) == 0 || z.norm() == 0.0));
}

#[test]
fn resonant_two_level_block() {
    let sys = QuantumSystem::new(vec![fixed("a", 2, 5.0 * GHZ, 0.0), fixed("b", 2, 5.0 * GHZ, 0.0)]).with_coupling(0, 1, 10.0 * MHZ);
    let h = sys.hamiltonian(&[5.0 * GHZ, 5.0 * GHZ], 5.0 * GHZ).unwrap();
    let block = ComplexMatrix::from_fn(2, 2, |i, j| h[(1 + i, 1 + j)]);
    let reference = build_qc_hamiltonian_1ex(0.0, 10.0 * MHZ);
    assert!((block - reference).norm() < 1e-6);
}

#[test]
fn dimension_cap_is_enforced() {
    let mut sys = QuantumSystem::new(vec![fixed("a", 70, 1.0, 0.0), fixed("b", 70, 1.0, 0.0)]);
    assert!(matches!(sys.validate(), Err(DynamicsError::DimensionCap { dim: 4900, .. })));
    sys.max_dim = 5000;
    assert!(sys.validate().is_ok());
}

fn coupler_filter(kappa: f64) -> QuantumSystem {
    let mut sys = QuantumSystem::new(vec![fixed("coupler", 2, 7.0 * GHZ, -330.0 * MHZ), fixed("filter", 3, 7.0 * GHZ, -4.47 * MHZ)])
        .with_coupling(0, 1, 20.0 * MHZ);
    if kappa > 0.0 {
        sys = sys.with_collapse(1, kappa);
    }
    sys
}

#[test]
fn liouvillian_matches_direct_rhs() {
    let sys = coupler_filter(150.0 * MHZ);
    let controls = Controls::new();
    let frame = 6.9 * GHZ;
    let freqs = sys.frequencies_at(&controls, 0.0).unwrap();
    let h = sys.hamiltonian(&freqs, frame).unwrap();
    let l = build_liouvillian(&h, &sys.collapse_operators()).unwrap();
    let rhs = LindbladRhs::new(&sys, &controls, frame).unwrap();
    let a = sys.lowering(1);
    let gamma = Complex64::new(angular(150.0 * MHZ), 0.0);
    let i = Complex64::new(0.0, 1.0);
    for seed in 0..5 {
        let rho = random_density(sys.dim(), seed);
        let ada = a.adjoint() * &a;
        let direct = (&h * &rho - &rho * &h) * (-i)
            + (&a * &rho * a.adjoint() - (&ada * &rho + &rho * &ada) * Complex64::new(0.5, 0.0)) * gamma;
        let via_l = unvec(&(&l * vec_column(&rho)));
        let sparse = rhs.eval_matrix(0.0, &rho);
        let scale = direct.norm();
        assert!((&via_l - &direct).norm() <= 1e-12 * scale);
        assert!((&sparse - &direct).norm() <= 1e-12 * scale);
    }
}

#[test]
fn closed_liouvillian_spectrum_is_energy_differences() {
    let sys = coupler_filter(0.0);
    let h = sys.hamiltonian(&[7.0 * GHZ, 7.05 * GHZ], 7.0 * GHZ).unwrap();
    let l = build_liouvillian(&h, &[]).unwrap();
    let e = eigenvalues(&h);
    let eig = eigen_decomposition(&l).unwrap();
    let scale = e.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for lambda in &eig.values {
        assert!(lambda.re.abs() < 1e-9 * scale);
        let best = e
            .iter()
            .flat_map(|a| e.iter().map(move |b| (lambda.im + (a - b)).abs()))
            .fold(f64::INFINITY, f64::min);
        assert!(best < 1e-9 * scale);
    }
}

#[test]
fn full_swap_at_quarter_period() {
    let g = 25.0 * MHZ;
    let sys = QuantumSystem::new(vec![fixed("qubit", 2, 5.0 * GHZ, 0.0), fixed("coupler", 2, 5.0 * GHZ, 0.0)]).with_coupling(0, 1, g);
    let rho0 = basis_state(&sys, &[1, 0]);
    let t_swap = 1.0 / (4.0 * g);
    let r = evolve(&sys, &Controls::new(), &rho0, &[0.0, t_swap / 2.0, t_swap], &EvolveOptions::default()).unwrap();
    assert!((r.populations[1][2] - 1.0).abs() < 1e-7);
    assert!((r.populations[0][1] - 0.5).abs() < 1e-7);
    assert!(r.qubit_p0[2] > 1.0 - 1e-7);
}

#[test]
fn overdamped_coupler_filter_decay() {
    let sys = coupler_filter(150.0 * MHZ);
    let rho0 = basis_state(&sys, &[1, 0]);
    let grid = linear_grid(0.0, 70.0 * NS, 701);
    let r = evolve(&sys, &Controls::new(), &rho0, &grid, &EvolveOptions::default()).unwrap();
    let p = r.population("coupler").unwrap();
    assert!(*p.last().unwrap() <= 0.01, "{}", p.last().unwrap());
    assert!(p.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    assert!(r.trace_error < 1e-6 && r.hermiticity_error < 1e-9);
}

#[test]
fn lossless_vacuum_rabi_returns() {
    let sys = coupler_filter(0.0);
    let rho0 = basis_state(&sys, &[1, 0]);
    let period = 1.0 / (2.0 * 20.0 * MHZ);
    let grid: Vec<f64> = (0..=4).map(|k| k as f64 * period).collect();
    let r = evolve(&sys, &Controls::new(), &rho0, &grid, &EvolveOptions::default()).unwrap();
    for p in r.population("coupler").unwrap() {
        assert!((p - 1.0).abs() < 1e-6, "{p}");
    }
}

#[test]
fn single_mode_decay_is_exponential() {
    let kappa = 5.0 * MHZ;
    let sys = QuantumSystem::new(vec![fixed("mode", 2, 6.0 * GHZ, 0.0)]).with_collapse(0, kappa);
    let rho0 = basis_state(&sys, &[1]);
    let grid = linear_grid(0.0, 100.0 * NS, 11);
    let r = evolve(&sys, &Controls::new(), &rho0, &grid, &EvolveOptions::default()).unwrap();
    for (t, p) in grid.iter().zip(&r.populations[0]) {
        assert_relative_eq!(*p, (-angular(kappa) * t).exp(), max_relative = 1e-6);
    }
}

#[test]
fn closed_system_conserves_energy() {
    let sys = QuantumSystem::new(vec![fixed("qubit", 3, 4.8 * GHZ, -200.0 * MHZ), fixed("coupler", 3, 5.0 * GHZ, -330.0 * MHZ)])
        .with_coupling(0, 1, 60.0 * MHZ);
    let psi: Vec<Complex64> = (0..9).map(|k| Complex64::new(1.0 / (k as f64 + 1.0), 0.1 * k as f64)).collect();
    let rho0 = pure_state(&psi);
    let grid = linear_grid(0.0, 50.0 * NS, 6);
    let r = evolve(&sys, &Controls::new(), &rho0, &grid, &EvolveOptions::default()).unwrap();
    let h = sys.hamiltonian(&[4.8 * GHZ, 5.0 * GHZ], r.frame_frequency).unwrap();
    let e0 = (&h * &rho0).trace().re;
    let e1 = (&h * r.final_state.as_ref().unwrap()).trace().re;
    assert!((e1 - e0).abs() <= 1e-6 * e0.abs().max(angular(1.0 * MHZ)), "{e0} {e1}");
    assert!(r.trace_error < 1e-6 && r.hermiticity_error < 1e-9);
}

#[test]
fn time_dependent_control_is_followed() {
    // Coupler frequency ramps through the qubit.
    let sys = QuantumSystem::new(vec![
        fixed("qubit", 2, 5.0 * GHZ, 0.0),
        Subsystem {
            label: "coupler".into(),
            levels: 2,
            frequency: FrequencySource::Control(Channel::CouplerFreq),
            anharmonicity: 0.0,
        },
    ])
    .with_coupling(0, 1, 20.0 * MHZ);
    let ramp = crate::pulse_lib::ramp_pulse(4.5 * GHZ, 1.0 * GHZ / (200.0 * NS), 200.0 * NS, 0.1 * NS, Channel::CouplerFreq).unwrap();
    let mut controls = Controls::new();
    controls.insert(Channel::CouplerFreq, ramp);
    let rho0 = basis_state(&sys, &[1, 0]);
    let r = evolve(&sys, &controls, &rho0, &[0.0, 200.0 * NS], &EvolveOptions::default()).unwrap();
    // Oracle: fixed-step RK4 on the two-amplitude Schrödinger equation.
    let g = angular(20.0 * MHZ);
    let detuning = |t: f64| angular(-0.5 * GHZ + 1.0 * GHZ * t / (200.0 * NS));
    let deriv = |t: f64, y: [Complex64; 2]| {
        let i = Complex64::new(0.0, 1.0);
        [-i * g * y[1], -i * (g * y[0] + detuning(t) * y[1])]
    };
    let mut y = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
    let steps = 200_000;
    let h = 200.0 * NS / steps as f64;
    for k in 0..steps {
        let t = k as f64 * h;
        let add = |a: [Complex64; 2], b: [Complex64; 2], s: f64| [a[0] + b[0] * s, a[1] + b[1] * s];
        let k1 = deriv(t, y);
        let k2 = deriv(t + h / 2.0, add(y, k1, h / 2.0));
        let k3 = deriv(t + h / 2.0, add(y, k2, h / 2.0));
        let k4 = deriv(t + h, add(y, k3, h));
        for n in 0..2 {
            y[n] += (k1[n] + k2[n] * 2.0 + k3[n] * 2.0 + k4[n]) * (h / 6.0);
        }
    }
    let moved = r.populations[1][1];
    assert!((moved - y[1].norm_sqr()).abs() < 1e-6, "{moved} vs {}", y[1].norm_sqr());
    // Landau–Zener limit exp(−2πg²/v), up to finite-sweep ripple.
    let v = angular(1.0 * GHZ) / (200.0 * NS);
    let p_diabatic = (-2.0 * std::f64::consts::PI * g * g / v).exp();
    assert!((moved - (1.0 - p_diabatic)).abs() < 0.03);
}

#[test]
fn missing_control_is_reported() {
    let sys = QuantumSystem::new(vec![Subsystem {
        label: "coupler".into(),
        levels: 2,
        frequency: FrequencySource::Control(Channel::CouplerFreq),
        anharmonicity: 0.0,
    }]);
    let rho0 = basis_state(&sys, &[0]);
    assert!(matches!(
        evolve(&sys, &Controls::new(), &rho0, &[0.0, 1e-9], &EvolveOptions::default()),
        Err(DynamicsError::MissingControl(_))
    ));
}

#[test]
fn invalid_initial_state_is_rejected() {
    let sys = coupler_filter(0.0);
    let mut rho = basis_state(&sys, &[1, 0]);
    rho[(0, 0)] = Complex64::new(0.5, 0.0);
    assert!(matches!(
        evolve(&sys, &Controls::new(), &rho, &[0.0, 1e-9], &EvolveOptions::default()),
        Err(DynamicsError::InvalidState(_))
    ));
}

#[test]
fn single_lossy_mode_has_one_steady_state() {
    let sys = QuantumSystem::new(vec![fixed("filter", 3, 7.0 * GHZ, 0.0)]).with_collapse(0, 150.0 * MHZ);
    let h = sys.hamiltonian(&[7.0 * GHZ], 7.0 * GHZ).unwrap();
    let l = build_liouvillian(&h, &sys.collapse_operators()).unwrap();
    let number: Vec<f64> = (0..3).map(|n| n as f64).collect();
    let modes = dark_modes(&l, 1e-6 * angular(150.0 * MHZ), &number).unwrap();
    assert_eq!(modes.len(), 1);
    assert!(modes[0].eigenvalue.norm() < 1e-3);
    assert!(modes[0].filter_weight < 1e-12);
}

fn two_couplers(detuning: f64) -> QuantumSystem {
    let f = 7.0 * GHZ;
    QuantumSystem::new(vec![
        fixed("c1", 2, f, -330.0 * MHZ),
        fixed("c2", 2, f + detuning, -330.0 * MHZ),
        fixed("filter", 3, f, -4.47 * MHZ),
    ])
    .with_coupling(0, 2, 20.0 * MHZ)
    .with_coupling(1, 2, 20.0 * MHZ)
    .with_collapse(2, 150.0 * MHZ)
}

fn filter_table(sys: &QuantumSystem) -> Vec<f64> {
    sys.occupations()[2].iter().map(|&n| n as f64).collect()
}

#[test]
fn identical_couplers_have_a_dark_mode() {
    let sys = two_couplers(0.0);
    let h = sys.hamiltonian(&[7.0 * GHZ, 7.0 * GHZ, 7.0 * GHZ], 7.0 * GHZ).unwrap();
    let l = build_liouvillian(&h, &sys.collapse_operators()).unwrap();
    let tol = 1e-6 * angular(150.0 * MHZ);
    let modes = dark_modes(&l, tol, &filter_table(&sys)).unwrap();
    assert!(modes.len() > 1, "{}", modes.len());
    assert!(modes.iter().all(|m| m.filter_weight < 1e-6));
    assert!(modes.iter().all(|m| m.residual < 1e-3 * l.norm()));

    let dark = sys.basis_index(&[1, 0, 0]);
    let bright = sys.basis_index(&[0, 1, 0]);
    let mut psi = vec![Complex64::new(0.0, 0.0); sys.dim()];
    psi[dark] = Complex64::new(0.5f64.sqrt(), 0.0);
    psi[bright] = Complex64::new(-(0.5f64.sqrt()), 0.0);
    let rho = pure_state(&psi);
    let drift = (&l * vec_column(&rho)).norm();
    assert!(drift < 1e-6 * angular(150.0 * MHZ), "{drift}");
}

#[test]
fn detuning_removes_dark_modes() {
    let sys = two_couplers(25.0 * MHZ);
    let h = sys.hamiltonian(&[7.0 * GHZ, 7.025 * GHZ, 7.0 * GHZ], 7.0 * GHZ).unwrap();
    let l = build_liouvillian(&h, &sys.collapse_operators()).unwrap();
    let modes = dark_modes(&l, 1e-6 * angular(150.0 * MHZ), &filter_table(&sys)).unwrap();
    assert_eq!(modes.len(), 1);
}
