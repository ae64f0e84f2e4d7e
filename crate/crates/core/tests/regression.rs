//! Frozen numbers from converged reference runs. A change here means the
//! physics or the numerics moved; re-derive before updating.

use ionsqz::fock::XBranch;
use ionsqz::lattice::{self, DriveConfig, GridConfig, Hamiltonian, TrapConfig};
use ionsqz::phase_space::{self, Quadrature, XStateSpec};
use ionsqz::protocol::{self, PhysicalGate};

fn gate(eta_g: f64) -> PhysicalGate {
    let trap = TrapConfig::new(1.0, eta_g, 0.0).unwrap();
    let drive = DriveConfig::resonant(&trap, 1.0, 0.0).unwrap();
    let t = lattice::derive_params(&trap, &drive).time_for_squeeze(1.0);
    let mut grid = GridConfig::defaults_for(&drive, &trap, 1.0, t);
    grid.x_max = 30.0;
    grid.dt = drive.period().unwrap() / 400.0;
    PhysicalGate { trap, epsilon: 1.0, grid }
}

#[test]
fn physical_gate_fidelity_at_reference_lamb_dicke() {
    let rep = protocol::csqz_physical(&gate(0.02), 1.0, 0.0, 4, 128).unwrap();
    assert!((rep.fidelity_raw - 0.81591).abs() < 1e-4, "{rep:?}");
    assert!((rep.fidelity_optimized - 0.95751).abs() < 1e-4, "{rep:?}");
    assert!(rep.worst_leak < 1e-9);
}

#[test]
fn weaker_lamb_dicke_gate_clears_99_percent() {
    let rep = protocol::csqz_physical(&gate(0.006448), 1.0, 0.0, 4, 128).unwrap();
    assert!((rep.fidelity_optimized - 0.9929).abs() < 5e-4, "{rep:?}");
    assert!(rep.fidelity_optimized > 0.99);
}

#[test]
fn lattice_phase_offset_degrades_overlap_monotonically() {
    let mut prev = f64::INFINITY;
    let mut mins = Vec::new();
    for phi in [0.0, 0.02, 0.05, 0.1].map(|f| f * std::f64::consts::TAU) {
        let trap = TrapConfig::new(1.0, 0.02, phi).unwrap();
        let drive = DriveConfig::resonant(&trap, 1.0, 0.0).unwrap();
        let t = lattice::derive_params(&trap, &drive).time_for_squeeze(1.0);
        let mut grid = GridConfig::defaults_for(&drive, &trap, 1.0, t);
        grid.dt = drive.period().unwrap() / 400.0;
        grid.snapshot_every = 40;
        let psi0 = lattice::dressed_vacuum_grid(&trap, &drive, grid.grid().unwrap()).unwrap();
        let traj = lattice::propagate_grid(&psi0, &Hamiltonian::excited(trap, drive), &grid).unwrap();
        let rows = lattice::overlap_series(&traj, &trap, &drive, 96, 1).unwrap();
        let min = rows.iter().map(|r| r.fidelity).fold(1.0, f64::min);
        assert!(min < prev, "phi = {phi}: {mins:?} then {min}");
        prev = min;
        mins.push(min);
    }
    assert!((mins[0] - 0.9796).abs() < 1e-3, "{mins:?}");
    assert!(mins[3] < 0.9, "{mins:?}");
}

#[test]
fn decay_profiles_at_r_2_5() {
    let spec = XStateSpec::new(XBranch::Even, 2.5).unwrap();
    let x = phase_space::quadrature_decay_profile(&spec, Quadrature::X, 1.0).unwrap();
    let p = phase_space::quadrature_decay_profile(&spec, Quadrature::P, 1.0).unwrap();
    // the state is symmetric under x <-> p
    assert_eq!(x, p);
    assert!(x.half_max.is_none());
    assert!((x.midpoint.unwrap() - 0.096765).abs() < 1e-5, "{x:?}");
    assert!((x.plateau - 0.551209).abs() < 1e-5, "{x:?}");
}

#[test]
fn odd_state_first_zero_ratio_is_stable() {
    for (r, ratio) in [(2.0, 1.657), (2.5, 1.723), (3.0, 1.769)] {
        let spec = XStateSpec::new(XBranch::Odd, r).unwrap();
        let x = phase_space::diagonal_zeros(&spec, &Default::default()).unwrap()[0];
        let got = x * x / (r * (-2.0 * r).exp());
        assert!((got - ratio).abs() < 2e-3, "r = {r}: {got}");
    }
}
