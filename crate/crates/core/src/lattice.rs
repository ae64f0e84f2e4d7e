//! Motion of the ion in the harmonic trap plus the intensity-modulated
//! optical lattice.
//!
//! Units: `ħ = m = 1`, lengths in units of the ground-trap width `σ_g`, so the
//! lattice phase is `k_l x = √η_g x̃`. With `ω_T` kept explicit the Hamiltonian
//! of the excited internal state is
//!
//! ```text
//! H_e(t) = ω_T (p² + x²)/2 + ε (1 − sin(ω_d t − θ)) sin²(√η_g x + Φ)
//! ```
//!
//! and the ground internal state only sees the trap. Two independent solvers
//! integrate it: a split-operator Fourier method on a position grid and an
//! explicit RK4 stepper on a truncated Fock basis.

use std::f64::consts::{PI, TAU};
use std::io::Write;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{self, FockOperator, MotionalState, SqueezeParam};
use crate::linalg;
use crate::C64;

/// Grid points on each edge watched for probability leaking out of the box.
pub const EDGE_POINTS: usize = 5;
/// Largest probability tolerated in the edge band.
pub const BOUNDARY_LIMIT: f64 = 1e-8;
/// Largest probability tolerated in the top 10% of a propagated Fock vector.
pub const TAIL_LIMIT: f64 = 1e-8;
/// Norm a grid-to-Fock projection may lose.
pub const PROJECTION_LIMIT: f64 = 1e-8;

/// Harmonic trap and lattice geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapConfig {
    pub omega_t: f64,
    /// `k_l² σ_g²`.
    pub eta_g: f64,
    /// Lattice phase `Φ` in radians.
    pub phi: f64,
}

impl TrapConfig {
    pub fn new(omega_t: f64, eta_g: f64, phi: f64) -> Result<Self> {
        let t = TrapConfig { omega_t, eta_g, phi };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_t.is_finite() && self.omega_t > 0.0) {
            return Err(Error::InvalidParameter { name: "omega_t", value: self.omega_t, reason: "must be > 0" });
        }
        if !(self.eta_g > 0.0 && self.eta_g < 1.0) {
            return Err(Error::InvalidParameter {
                name: "eta_g",
                value: self.eta_g,
                reason: "must lie in (0, 1) (Lamb-Dicke regime)",
            });
        }
        if !self.phi.is_finite() {
            return Err(Error::InvalidParameter { name: "phi", value: self.phi, reason: "must be finite" });
        }
        Ok(())
    }
}

/// Modulation of the lattice depth, `V₀(t) = ε (1 − sin(ω_d t − θ))`.
///
/// `omega_d = 0` with `theta = 0` is a static lattice of depth `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveConfig {
    pub epsilon: f64,
    pub omega_d: f64,
    pub theta: f64,
}

impl DriveConfig {
    pub fn new(epsilon: f64, omega_d: f64, theta: f64) -> Result<Self> {
        let d = DriveConfig { epsilon, omega_d, theta };
        d.validate()?;
        Ok(d)
    }

    /// Lattice held at constant depth `ε`.
    pub fn static_depth(epsilon: f64) -> Result<Self> {
        Self::new(epsilon, 0.0, 0.0)
    }

    /// Drive at the parametric resonance `ω_d = 2 ω_e` of the given trap.
    pub fn resonant(trap: &TrapConfig, epsilon: f64, theta: f64) -> Result<Self> {
        let omega_e = dressed_frequency(trap, epsilon);
        Self::new(epsilon, 2.0 * omega_e, theta)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::InvalidParameter { name: "epsilon", value: self.epsilon, reason: "must be >= 0" });
        }
        if !(self.omega_d.is_finite() && self.omega_d >= 0.0) {
            return Err(Error::InvalidParameter { name: "omega_d", value: self.omega_d, reason: "must be >= 0" });
        }
        if !self.theta.is_finite() {
            return Err(Error::InvalidParameter { name: "theta", value: self.theta, reason: "must be finite" });
        }
        Ok(())
    }

    /// Depth `V₀(t)/ħ`.
    #[inline]
    pub fn envelope(&self, t: f64) -> f64 {
        self.epsilon * (1.0 - (self.omega_d * t - self.theta).sin())
    }

    /// One modulation period, or `None` for a static lattice.
    pub fn period(&self) -> Option<f64> {
        (self.omega_d > 0.0).then(|| TAU / self.omega_d)
    }
}

fn dressed_frequency(trap: &TrapConfig, epsilon: f64) -> f64 {
    (trap.omega_t * trap.omega_t + 2.0 * trap.eta_g * epsilon * trap.omega_t).sqrt()
}

/// Quantities of the harmonic approximation to the dressed (excited-state) trap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    pub omega_e: f64,
    /// `σ_e / σ_g = √(ω_T/ω_e)`.
    pub sigma_ratio: f64,
    /// `k_l² σ_e²`.
    pub eta_e: f64,
    /// Squeezing rate `G = ε η_e`.
    pub g_rate: f64,
}

impl DerivedParams {
    /// `r₀ = ½ ln(ω_e/ω_T)`: the dressed vacuum is `S(r₀)|0_g⟩`.
    pub fn frame_squeeze(&self, trap: &TrapConfig) -> f64 {
        0.5 * (self.omega_e / trap.omega_t).ln()
    }

    /// Inverse width used to evaluate dressed-frame eigenfunctions, `σ_g/σ_e`.
    pub fn frame_scale(&self) -> f64 {
        1.0 / self.sigma_ratio
    }

    /// Time for the ideal gate to reach squeezing `r`.
    pub fn time_for_squeeze(&self, r: f64) -> f64 {
        if self.g_rate > 0.0 {
            2.0 * r / self.g_rate
        } else {
            f64::INFINITY
        }
    }
}

pub fn derive_params(trap: &TrapConfig, drive: &DriveConfig) -> DerivedParams {
    let omega_e = dressed_frequency(trap, drive.epsilon);
    let eta_e = trap.eta_g * trap.omega_t / omega_e;
    DerivedParams { omega_e, sigma_ratio: (trap.omega_t / omega_e).sqrt(), eta_e, g_rate: drive.epsilon * eta_e }
}

/// Lattice potential profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatticeShape {
    /// `sin²(√η x + Φ)`, no approximation.
    #[default]
    Full,
    /// Second-order Taylor expansion about `x = 0`.
    Quadratic,
}

/// Internal state selecting which Hamiltonian moves the ion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Internal {
    /// Trap only.
    G,
    /// Trap plus lattice.
    E,
}

/// The single-particle Hamiltonian for one internal state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hamiltonian {
    pub trap: TrapConfig,
    pub drive: DriveConfig,
    pub internal: Internal,
    pub shape: LatticeShape,
}

impl Hamiltonian {
    pub fn excited(trap: TrapConfig, drive: DriveConfig) -> Self {
        Hamiltonian { trap, drive, internal: Internal::E, shape: LatticeShape::Full }
    }

    pub fn ground(trap: TrapConfig, drive: DriveConfig) -> Self {
        Hamiltonian { trap, drive, internal: Internal::G, shape: LatticeShape::Full }
    }

    pub fn with_shape(mut self, shape: LatticeShape) -> Self {
        self.shape = shape;
        self
    }

    /// Spatial lattice factor (zero for the ground internal state).
    pub fn lattice(&self, x: f64) -> f64 {
        if self.internal == Internal::G {
            return 0.0;
        }
        let k = self.trap.eta_g.sqrt();
        let phi = self.trap.phi;
        match self.shape {
            LatticeShape::Full => (k * x + phi).sin().powi(2),
            LatticeShape::Quadratic => {
                phi.sin().powi(2) + (2.0 * phi).sin() * k * x + (2.0 * phi).cos() * k * k * x * x
            }
        }
    }

    /// Time-dependent lattice depth (zero for the ground internal state).
    pub fn envelope(&self, t: f64) -> f64 {
        match self.internal {
            Internal::G => 0.0,
            Internal::E => self.drive.envelope(t),
        }
    }

    pub fn potential(&self, x: f64, t: f64) -> f64 {
        0.5 * self.trap.omega_t * x * x + self.envelope(t) * self.lattice(x)
    }
}

/// `V(x, t)` of the excited-state Hamiltonian in units of `ħ`.
pub fn potential_full(trap: &TrapConfig, drive: &DriveConfig, t: f64) -> impl Fn(f64) -> f64 {
    let h = Hamiltonian::excited(*trap, *drive);
    move |x| h.potential(x, t)
}

/// Position grid `x_j = −x_max + j·dx`, `j < n`, periodic in `2 x_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub n_points: usize,
    pub x_max: f64,
}

impl Grid {
    pub fn new(n_points: usize, x_max: f64) -> Result<Self> {
        if n_points < 128 || !n_points.is_power_of_two() {
            return Err(Error::InvalidInput(format!("grid n_points = {n_points}: need a power of two >= 128")));
        }
        if !(x_max.is_finite() && x_max > 0.0) {
            return Err(Error::InvalidParameter { name: "x_max", value: x_max, reason: "must be > 0" });
        }
        Ok(Grid { n_points, x_max })
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.x_max / self.n_points as f64
    }

    pub fn xs(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.n_points).map(|j| -self.x_max + j as f64 * dx).collect()
    }

    /// Angular wavenumbers in FFT order.
    pub fn ks(&self) -> Vec<f64> {
        let n = self.n_points;
        let dk = TAU / (n as f64 * self.dx());
        (0..n).map(|j| if j < n / 2 { j as f64 * dk } else { (j as f64 - n as f64) * dk }).collect()
    }
}

/// Wavefunction sampled on a [`Grid`], normalized with the `dx` measure.
#[derive(Debug, Clone, PartialEq)]
pub struct GridState {
    pub grid: Grid,
    pub psi: Vec<C64>,
}

impl GridState {
    /// Render Fock amplitudes of an oscillator with inverse width `scale`
    /// (`1` for the bare trap, `√(ω_e/ω_T)` for the dressed one).
    pub fn from_fock(state: &MotionalState, scale: f64, grid: Grid) -> Self {
        let coeffs: Vec<C64> = state.amplitudes().to_vec();
        let psi = linalg::hermite_synthesis(&coeffs, scale, &grid.xs());
        GridState { grid, psi }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.psi.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.grid.dx()
    }

    /// Probability in the `points` outermost samples on each side.
    pub fn edge_probability(&self, points: usize) -> f64 {
        let n = self.psi.len();
        let k = points.min(n / 2);
        let edge: f64 = self.psi[..k].iter().chain(&self.psi[n - k..]).map(|c| c.norm_sqr()).sum();
        edge * self.grid.dx()
    }

    pub fn inner(&self, other: &GridState) -> Result<C64> {
        if self.grid != other.grid {
            return Err(Error::InvalidInput("grid states live on different grids".into()));
        }
        let s: C64 = self.psi.iter().zip(&other.psi).map(|(a, b)| a.conj() * b).sum();
        Ok(s * self.grid.dx())
    }

    pub fn fidelity(&self, other: &GridState) -> Result<f64> {
        Ok(self.inner(other)?.norm_sqr() / (self.norm_sqr() * other.norm_sqr()))
    }

    /// Project onto `count` oscillator eigenfunctions of inverse width `scale`.
    ///
    /// Fails when the projection misses more than [`PROJECTION_LIMIT`] of the
    /// grid norm.
    pub fn to_fock(&self, scale: f64, count: usize) -> Result<MotionalState> {
        let coeffs = linalg::hermite_projection(&self.psi, &self.grid.xs(), self.grid.dx(), scale, count);
        let kept: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum();
        let lost = (self.norm_sqr() - kept).abs();
        if lost > PROJECTION_LIMIT {
            return Err(Error::BasisConversion { lost, limit: PROJECTION_LIMIT });
        }
        MotionalState::from_raw(Array1::from(coeffs))
    }
}

/// Grid-solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_points: usize,
    pub x_max: f64,
    pub dt: f64,
    pub t_final: f64,
    /// Steps between recorded snapshots; `0` records only the endpoints.
    #[serde(default)]
    pub snapshot_every: usize,
}

impl GridConfig {
    /// The documented defaults: 1024 points, half-width `10 e^{r_max}`, 200
    /// steps per drive period (or per trap period for a static lattice).
    pub fn defaults_for(drive: &DriveConfig, trap: &TrapConfig, r_max: f64, t_final: f64) -> Self {
        let period = drive.period().unwrap_or(TAU / trap.omega_t);
        GridConfig { n_points: 1024, x_max: 10.0 * r_max.exp(), dt: period / 200.0, t_final, snapshot_every: 0 }
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.n_points, self.x_max)
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }
}

/// Fixed-step schedule shared by both solvers: `dt` is shrunk so an integer
/// number of steps lands exactly on `t_final`.
fn schedule(dt: f64, t_final: f64) -> Result<(usize, f64)> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidParameter { name: "dt", value: dt, reason: "must be > 0" });
    }
    if !(t_final.is_finite() && t_final >= 0.0) {
        return Err(Error::InvalidParameter { name: "t_final", value: t_final, reason: "must be >= 0" });
    }
    let steps = (t_final / dt).ceil() as usize;
    if steps == 0 {
        return Ok((0, 0.0));
    }
    Ok((steps, t_final / steps as f64))
}

/// One recorded point of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot<S> {
    pub t: f64,
    pub state: S,
    /// `|‖ψ‖² − 1|`.
    pub norm_defect: f64,
    /// Edge-band probability (grid) or top-10% probability (Fock).
    pub leak: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    pub snapshots: Vec<Snapshot<S>>,
    pub steps: usize,
    pub dt: f64,
}

impl<S> Trajectory<S> {
    pub fn last(&self) -> &Snapshot<S> {
        self.snapshots.last().expect("trajectory always holds the initial snapshot")
    }

    pub fn final_state(&self) -> &S {
        &self.last().state
    }
}

fn is_snapshot(step: usize, steps: usize, every: usize) -> bool {
    step == steps || (every > 0 && step.is_multiple_of(every))
}

/// Split-operator stepper: `e^{−iK dt/2} e^{−iV(t + dt/2) dt} e^{−iK dt/2}`.
///
/// Consecutive kinetic half steps are fused, so a step costs two FFTs except
/// where a snapshot forces the state back into position space.
struct SplitStepper {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    half_kin: Vec<C64>,
    full_kin: Vec<C64>,
    harmonic: Vec<f64>,
    lattice: Vec<f64>,
    scratch: Vec<C64>,
}

impl SplitStepper {
    fn new(h: &Hamiltonian, grid: &Grid, dt: f64) -> Self {
        let n = grid.n_points;
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let inv_n = 1.0 / n as f64;
        let omega_t = h.trap.omega_t;
        let kin: Vec<f64> = grid.ks().iter().map(|k| 0.5 * omega_t * k * k).collect();
        let half_kin = kin.iter().map(|&e| C64::from_polar(inv_n, -0.5 * e * dt)).collect();
        let full_kin = kin.iter().map(|&e| C64::from_polar(inv_n, -e * dt)).collect();
        let xs = grid.xs();
        let harmonic = xs.iter().map(|&x| 0.5 * omega_t * x * x).collect();
        let lattice = xs.iter().map(|&x| h.lattice(x)).collect();
        let scratch = vec![C64::new(0.0, 0.0); fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len())];
        SplitStepper { fwd, inv, half_kin, full_kin, harmonic, lattice, scratch }
    }

    fn kinetic(&mut self, psi: &mut [C64], full: bool) {
        self.fwd.process_with_scratch(psi, &mut self.scratch);
        let phase = if full { &self.full_kin } else { &self.half_kin };
        for (c, p) in psi.iter_mut().zip(phase) {
            *c *= p;
        }
        self.inv.process_with_scratch(psi, &mut self.scratch);
    }

    fn kinetic_k_space(&mut self, psi: &mut [C64], full: bool) {
        let phase = if full { &self.full_kin } else { &self.half_kin };
        for (c, p) in psi.iter_mut().zip(phase) {
            *c *= p;
        }
    }

    fn potential(&self, psi: &mut [C64], depth: f64, dt: f64) {
        for ((c, &v0), &l) in psi.iter_mut().zip(&self.harmonic).zip(&self.lattice) {
            *c *= C64::from_polar(1.0, -(v0 + depth * l) * dt);
        }
    }
}

/// Integrate `i∂ₜψ = H ψ` on the grid from `t = 0` to `cfg.t_final`.
///
/// Snapshots are taken every `cfg.snapshot_every` steps and at both ends.
/// At each snapshot the edge band of [`EDGE_POINTS`] samples is checked
/// against [`BOUNDARY_LIMIT`].
pub fn propagate_grid(initial: &GridState, h: &Hamiltonian, cfg: &GridConfig) -> Result<Trajectory<GridState>> {
    h.trap.validate()?;
    h.drive.validate()?;
    let grid = cfg.grid()?;
    if initial.grid != grid {
        return Err(Error::InvalidInput("initial state grid does not match the grid config".into()));
    }
    let (steps, dt) = schedule(cfg.dt, cfg.t_final)?;
    let mut stepper = SplitStepper::new(h, &grid, dt);
    let mut psi = initial.psi.clone();
    let norm0 = initial.norm_sqr();

    let record = |t: f64, psi: &[C64]| -> Result<Snapshot<GridState>> {
        let state = GridState { grid, psi: psi.to_vec() };
        let leak = state.edge_probability(EDGE_POINTS);
        if leak > BOUNDARY_LIMIT {
            return Err(Error::BoundaryLeak { leak, t, limit: BOUNDARY_LIMIT });
        }
        let norm_defect = (state.norm_sqr() - norm0).abs();
        Ok(Snapshot { t, state, norm_defect, leak })
    };

    let mut snapshots = vec![record(0.0, &psi)?];
    if steps == 0 {
        return Ok(Trajectory { snapshots, steps, dt });
    }
    // leading half kick, leaving psi in position space
    stepper.kinetic(&mut psi, false);
    for step in 1..=steps {
        let t_mid = (step as f64 - 0.5) * dt;
        stepper.potential(&mut psi, h.envelope(t_mid), dt);
        stepper.fwd.process_with_scratch(&mut psi, &mut stepper.scratch);
        if is_snapshot(step, steps, cfg.snapshot_every) {
            stepper.kinetic_k_space(&mut psi, false);
            stepper.inv.process_with_scratch(&mut psi, &mut stepper.scratch);
            snapshots.push(record(step as f64 * dt, &psi)?);
            if step < steps {
                stepper.kinetic(&mut psi, false);
            }
        } else {
            stepper.kinetic_k_space(&mut psi, true);
            stepper.inv.process_with_scratch(&mut psi, &mut stepper.scratch);
        }
    }
    Ok(Trajectory { snapshots, steps, dt })
}

/// Fock-solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FockConfig {
    pub dim: usize,
    pub dt: f64,
    pub t_final: f64,
    #[serde(default)]
    pub snapshot_every: usize,
}

/// `sin²(√η X + Φ)` (or its quadratic expansion) on the bare-trap Fock basis,
/// through the spectral decomposition of the truncated position matrix.
pub fn lattice_matrix(h: &Hamiltonian, dim: usize) -> Array2<f64> {
    let x = fock::position_matrix_real(dim);
    linalg::symmetric_function(&x, |v| h.lattice(v))
}

/// Integrate `i∂ₜc = H c` on the bare-trap Fock basis with classical RK4.
///
/// After every snapshot the top 10% of the basis must hold less than
/// [`TAIL_LIMIT`] probability.
pub fn propagate_fock(initial: &MotionalState, h: &Hamiltonian, cfg: &FockConfig) -> Result<Trajectory<MotionalState>> {
    h.trap.validate()?;
    h.drive.validate()?;
    let dim = cfg.dim;
    if initial.dim() != dim {
        return Err(Error::DimensionMismatch { left: initial.dim(), right: dim });
    }
    let (steps, dt) = schedule(cfg.dt, cfg.t_final)?;
    let diag: Vec<f64> = (0..dim).map(|n| h.trap.omega_t * (n as f64 + 0.5)).collect();
    let lat = lattice_matrix(h, dim);
    let norm0 = initial.norm_sqr();

    // dc/dt = −i (H0 + f(t) L) c, with real L applied to re/im parts separately
    let deriv = |c: &Array1<C64>, t: f64| -> Array1<C64> {
        let f = h.envelope(t);
        let mut hc = Array1::from_iter(c.iter().zip(&diag).map(|(v, d)| v * d));
        if f != 0.0 {
            let re = lat.dot(&c.mapv(|v| v.re));
            let im = lat.dot(&c.mapv(|v| v.im));
            for ((out, r), i) in hc.iter_mut().zip(&re).zip(&im) {
                *out += C64::new(f * r, f * i);
            }
        }
        hc.mapv(|v| C64::new(v.im, -v.re))
    };

    let record = |t: f64, c: &Array1<C64>| -> Result<Snapshot<MotionalState>> {
        let state = MotionalState::from_raw(c.clone())?;
        let leak = state.top_probability(fock::BOUNDARY_FRACTION);
        if leak > TAIL_LIMIT {
            return Err(Error::TailLeak { leak, t, limit: TAIL_LIMIT });
        }
        let norm_defect = (state.norm_sqr() - norm0).abs();
        Ok(Snapshot { t, state, norm_defect, leak })
    };

    let mut c = initial.amplitudes().clone();
    let mut snapshots = vec![record(0.0, &c)?];
    for step in 1..=steps {
        let t = (step - 1) as f64 * dt;
        let k1 = deriv(&c, t);
        let k2 = deriv(&(&c + &k1.mapv(|v| v * (0.5 * dt))), t + 0.5 * dt);
        let k3 = deriv(&(&c + &k2.mapv(|v| v * (0.5 * dt))), t + 0.5 * dt);
        let k4 = deriv(&(&c + &k3.mapv(|v| v * dt)), t + dt);
        let w = dt / 6.0;
        c = &c + &((&k1 + &(&k2 * C64::new(2.0, 0.0)) + &(&k3 * C64::new(2.0, 0.0)) + &k4) * C64::new(w, 0.0));
        if is_snapshot(step, steps, cfg.snapshot_every) {
            snapshots.push(record(step as f64 * dt, &c)?);
        }
    }
    Ok(Trajectory { snapshots, steps, dt })
}

/// Lowest eigenvector of the excited-state Hamiltonian with the lattice frozen
/// at its depth at time `t`, on the bare-trap Fock basis.
pub fn dressed_ground_state(h: &Hamiltonian, t: f64, dim: usize) -> Result<MotionalState> {
    let mut hm = lattice_matrix(h, dim) * h.envelope(t);
    for n in 0..dim {
        hm[[n, n]] += h.trap.omega_t * (n as f64 + 0.5);
    }
    let (_, vecs) = linalg::symmetric_eigen(&hm);
    let mut v = vecs.column(0).mapv(|x| C64::new(x, 0.0));
    // fix the sign so the overlap with the bare vacuum is positive
    if v[0].re < 0.0 {
        v.mapv_inplace(|c| -c);
    }
    MotionalState::from_amplitudes(v)?.checked("dressed ground state")
}

/// Outcome of rerunning a solver at half the step size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepAudit {
    pub dt: f64,
    /// `1 − |⟨ψ_dt|ψ_{dt/2}⟩|²` at `t_final`.
    pub deficit: f64,
    pub limit: f64,
    pub passed: bool,
}

impl StepAudit {
    fn new(dt: f64, deficit: f64, limit: f64) -> Self {
        StepAudit { dt, deficit, limit, passed: deficit <= limit }
    }

    pub fn into_result(self) -> Result<Self> {
        if self.passed {
            Ok(self)
        } else {
            Err(Error::StepSize { deficit: self.deficit, limit: self.limit })
        }
    }
}

/// Compare the final grid state at `dt` with a run at `dt/2`.
pub fn audit_grid(initial: &GridState, h: &Hamiltonian, cfg: &GridConfig, limit: f64) -> Result<StepAudit> {
    let bare = GridConfig { snapshot_every: 0, ..*cfg };
    let coarse = propagate_grid(initial, h, &bare)?;
    let fine = propagate_grid(initial, h, &bare.with_dt(coarse.dt * 0.5))?;
    let deficit = 1.0 - coarse.final_state().fidelity(fine.final_state())?;
    Ok(StepAudit::new(coarse.dt, deficit.max(0.0), limit))
}

/// Compare the final Fock state at `dt` with a run at `dt/2`.
pub fn audit_fock(initial: &MotionalState, h: &Hamiltonian, cfg: &FockConfig, limit: f64) -> Result<StepAudit> {
    let bare = FockConfig { snapshot_every: 0, ..*cfg };
    let coarse = propagate_fock(initial, h, &bare)?;
    let fine = propagate_fock(initial, h, &FockConfig { dt: coarse.dt * 0.5, ..bare })?;
    let a = coarse.final_state();
    let b = fine.final_state();
    let deficit = 1.0 - a.inner(b)?.norm_sqr() / (a.norm_sqr() * b.norm_sqr());
    Ok(StepAudit::new(coarse.dt, deficit.max(0.0), limit))
}

/// Squeezing parameter the RWA gate reaches after time `t`.
pub fn rwa_squeeze_param(g_rate: f64, t: f64, theta: f64) -> Result<SqueezeParam> {
    SqueezeParam::new(0.5 * g_rate * t, theta)
}

/// Interaction-picture propagator of the resonant drive under the RWA,
/// `Ũ(T) = S(GT/2 · e^{iθ})`.
pub fn rwa_propagator(g_rate: f64, t: f64, theta: f64, dim: usize) -> Result<FockOperator> {
    fock::squeeze_op(rwa_squeeze_param(g_rate, t, theta)?, dim)
}

/// Reference frame in which a trajectory is compared to the ideal gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Frame {
    /// Interaction picture of the harmonic approximation `H_e⁰` of the
    /// dressed trap, on its own eigenbasis.
    #[serde(rename = "interaction picture of H_e0")]
    DressedInteraction,
    /// Interaction picture of the bare trap `H_g⁰`.
    #[serde(rename = "interaction picture of H_g0")]
    BareInteraction,
}

impl Frame {
    pub fn tag(self) -> &'static str {
        match self {
            Frame::DressedInteraction => "interaction picture of H_e0",
            Frame::BareInteraction => "interaction picture of H_g0",
        }
    }
}

/// Maps lab-frame states of either solver onto dressed-frame Fock amplitudes
/// in the interaction picture of `H_e⁰ = ω_e (n + ½)`.
///
/// The global phase `e^{iω_e t/2}` is dropped.
pub struct DressedFrame {
    omega_e: f64,
    scale: f64,
    count: usize,
    /// `S(r₀)†` on the bare basis, built lazily for Fock inputs.
    unsqueeze: Option<FockOperator>,
}

impl DressedFrame {
    pub fn new(trap: &TrapConfig, drive: &DriveConfig, count: usize) -> Self {
        let p = derive_params(trap, drive);
        DressedFrame { omega_e: p.omega_e, scale: p.frame_scale(), count, unsqueeze: None }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    fn rotate(&self, mut amps: Array1<C64>, t: f64) -> Array1<C64> {
        for (n, c) in amps.iter_mut().enumerate() {
            *c *= C64::from_polar(1.0, self.omega_e * n as f64 * t);
        }
        amps
    }

    pub fn from_grid(&self, state: &GridState, t: f64) -> Result<MotionalState> {
        let lab = state.to_fock(self.scale, self.count)?;
        MotionalState::from_raw(self.rotate(lab.into_amplitudes(), t))
    }

    /// `state` holds bare-trap amplitudes; requires `state.dim() == count`.
    pub fn from_fock(&mut self, state: &MotionalState, t: f64) -> Result<MotionalState> {
        if state.dim() != self.count {
            return Err(Error::DimensionMismatch { left: state.dim(), right: self.count });
        }
        if self.unsqueeze.is_none() {
            let r0 = self.scale.ln();
            self.unsqueeze = Some(fock::squeeze_op(SqueezeParam::new(r0, PI)?, self.count)?);
        }
        let lab = self.unsqueeze.as_ref().expect("built above").apply(state)?;
        MotionalState::from_raw(self.rotate(lab.into_amplitudes(), t))
    }
}

/// The dressed vacuum `|0_e⟩` on the bare basis, `S(r₀)|0_g⟩`.
pub fn dressed_vacuum(trap: &TrapConfig, drive: &DriveConfig, dim: usize) -> Result<MotionalState> {
    let r0 = derive_params(trap, drive).frame_squeeze(trap);
    fock::squeezed_state_analytic(SqueezeParam::real(r0)?, dim)
}

/// The dressed vacuum sampled on a grid.
pub fn dressed_vacuum_grid(trap: &TrapConfig, drive: &DriveConfig, grid: Grid) -> Result<GridState> {
    let scale = derive_params(trap, drive).frame_scale();
    Ok(GridState::from_fock(&MotionalState::vacuum(2)?, scale, grid))
}

/// One row of the overlap time series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapRow {
    pub t: f64,
    pub fidelity: f64,
    /// Dressed-frame phonon populations `P(0..=n_max)`.
    pub populations: Vec<f64>,
    pub norm_defect: f64,
    pub boundary_leak: f64,
}

/// `F(t) = |⟨ξ(Gt/2 · e^{iθ})|ψ_I(t)⟩|²` along a grid trajectory, with `ψ_I`
/// the dressed-frame interaction-picture state.
pub fn overlap_series(
    traj: &Trajectory<GridState>,
    trap: &TrapConfig,
    drive: &DriveConfig,
    count: usize,
    n_max: usize,
) -> Result<Vec<OverlapRow>> {
    let frame = DressedFrame::new(trap, drive, count);
    let g = derive_params(trap, drive).g_rate;
    traj.snapshots
        .iter()
        .map(|snap| {
            let psi = frame.from_grid(&snap.state, snap.t)?;
            overlap_row(&psi, snap, g, drive.theta, n_max)
        })
        .collect()
}

/// [`overlap_series`] for a Fock-solver trajectory on `count` basis states.
pub fn overlap_series_fock(
    traj: &Trajectory<MotionalState>,
    trap: &TrapConfig,
    drive: &DriveConfig,
    n_max: usize,
) -> Result<Vec<OverlapRow>> {
    let dim = traj.last().state.dim();
    let mut frame = DressedFrame::new(trap, drive, dim);
    let g = derive_params(trap, drive).g_rate;
    traj.snapshots
        .iter()
        .map(|snap| {
            let psi = frame.from_fock(&snap.state, snap.t)?;
            overlap_row(&psi, snap, g, drive.theta, n_max)
        })
        .collect()
}

fn overlap_row<S>(psi: &MotionalState, snap: &Snapshot<S>, g: f64, theta: f64, n_max: usize) -> Result<OverlapRow> {
    let xi = rwa_squeeze_param(g, snap.t, theta)?;
    let ideal = fock::squeezed_state_analytic(xi, psi.dim())?;
    let fidelity = ideal.inner(psi)?.norm_sqr() / psi.norm_sqr();
    let mut populations = psi.populations();
    populations.resize(n_max + 1, 0.0);
    Ok(OverlapRow { t: snap.t, fidelity, populations, norm_defect: snap.norm_defect, boundary_leak: snap.leak })
}

/// Write rows as CSV: `t, fidelity, P0..P{n_max}, norm_defect, boundary_leak`.
pub fn write_overlap_csv<W: Write>(rows: &[OverlapRow], n_max: usize, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let mut header = vec!["t".to_string(), "fidelity".to_string()];
    header.extend((0..=n_max).map(|n| format!("P{n}")));
    header.push("norm_defect".into());
    header.push("boundary_leak".into());
    w.write_record(&header).map_err(csv_err)?;
    for row in rows {
        let mut rec = vec![fmt_f(row.t), fmt_f(row.fidelity)];
        rec.extend(row.populations.iter().take(n_max + 1).map(|&p| fmt_f(p)));
        rec.push(fmt_f(row.norm_defect));
        rec.push(fmt_f(row.boundary_leak));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("flushing overlap csv", e))?;
    Ok(())
}

/// Round-trip float formatting shared by every CSV writer.
pub(crate) fn fmt_f(v: f64) -> String {
    format!("{v:e}")
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io("writing csv", io),
        other => Error::InvalidInput(format!("csv: {other:?}")),
    }
}

/// `θ` on the unit circle, used when sweeping drive phases.
pub fn wrap_phase(theta: f64) -> f64 {
    theta.rem_euclid(TAU)
}

/// Half-period shift of the drive phase that undoes a squeeze: `θ → θ + π`.
///
/// The RWA generator flips sign under `θ → θ + π`; the `π − θ` rule only
/// agrees with this for `θ ∈ {0, π}` (mod `2π`).
pub fn inverse_phase(theta: f64) -> f64 {
    wrap_phase(theta + PI)
}

/// Phase `π − θ`, the naive inversion rule.
pub fn mirror_phase(theta: f64) -> f64 {
    wrap_phase(PI - theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn trap(eta: f64) -> TrapConfig {
        TrapConfig::new(1.0, eta, 0.0).unwrap()
    }

    #[test]
    fn lattice_off_leaves_trap_unchanged() {
        let p = derive_params(&trap(0.02), &DriveConfig::static_depth(0.0).unwrap());
        assert_eq!(p.omega_e, 1.0);
        assert_eq!(p.eta_e, 0.02);
        assert_eq!(p.g_rate, 0.0);
    }

    #[test]
    fn dressed_frequency_at_unit_depth() {
        let p = derive_params(&trap(0.02), &DriveConfig::static_depth(1.0).unwrap());
        assert!((p.omega_e - 1.04f64.sqrt()).abs() < 1e-15);
        assert!((p.omega_e - 1.019804).abs() < 1e-6);
        assert!((p.g_rate - 0.019612).abs() < 1e-6);
        assert_eq!(p.g_rate, 1.0 * p.eta_e);
        // r = Gt/2 = 1 at t ≈ 102
        assert!((p.time_for_squeeze(1.0) - 101.98).abs() < 0.01);
    }

    #[test]
    fn potential_limits() {
        let d = DriveConfig::new(0.0, 2.0, 0.0).unwrap();
        let v = potential_full(&trap(0.02), &d, 1.3);
        assert_eq!(v(2.0), 2.0);
        let crest = TrapConfig::new(1.0, 0.02, FRAC_PI_2).unwrap();
        let d = DriveConfig::static_depth(1.0).unwrap();
        let v = potential_full(&crest, &d, 0.0);
        assert!((v(0.0) - 1.0).abs() < 1e-15);
        assert!(v(0.0) > v(0.1) - 0.5 * 0.01);
    }

    #[test]
    fn potential_curvature_matches_dressed_frequency() {
        let tr = trap(0.02);
        let d = DriveConfig::new(1.0, 2.0, 0.3).unwrap();
        let t = 0.7;
        let v = potential_full(&tr, &d, t);
        let h = 1e-3;
        let curvature = (v(h) - 2.0 * v(0.0) + v(-h)) / (h * h);
        let expect = 1.0 + 2.0 * 0.02 * d.envelope(t);
        assert!((curvature - expect).abs() < 1e-6, "{curvature} vs {expect}");
    }

    #[test]
    fn harmonic_ground_state_returns_after_one_period() {
        let tr = trap(0.02);
        let d = DriveConfig::static_depth(0.0).unwrap();
        let cfg = GridConfig { n_points: 256, x_max: 10.0, dt: TAU / 400.0, t_final: TAU, snapshot_every: 0 };
        let psi0 = GridState::from_fock(&MotionalState::vacuum(2).unwrap(), 1.0, cfg.grid().unwrap());
        let traj = propagate_grid(&psi0, &Hamiltonian::excited(tr, d), &cfg).unwrap();
        let f = psi0.fidelity(traj.final_state()).unwrap();
        assert!(f > 1.0 - 1e-8, "{f}");
        assert!(traj.last().norm_defect < 1e-10);
    }

    #[test]
    fn dressed_ground_state_is_stationary_on_both_solvers() {
        let tr = trap(0.02);
        let d = DriveConfig::static_depth(1.0).unwrap();
        let h = Hamiltonian::excited(tr, d);
        let dim = 48;
        let g0 = dressed_ground_state(&h, 0.0, dim).unwrap();
        let t_final = 10.0 * TAU;
        let fock_cfg = FockConfig { dim, dt: 0.01, t_final, snapshot_every: 0 };
        let f = propagate_fock(&g0, &h, &fock_cfg).unwrap();
        let fid = g0.inner(f.final_state()).unwrap().norm_sqr();
        assert!(fid > 1.0 - 1e-6, "fock {fid}");

        let cfg = GridConfig { n_points: 256, x_max: 12.0, dt: 0.01, t_final, snapshot_every: 0 };
        let psi0 = GridState::from_fock(&g0, 1.0, cfg.grid().unwrap());
        let traj = propagate_grid(&psi0, &h, &cfg).unwrap();
        let fid = psi0.fidelity(traj.final_state()).unwrap();
        assert!(fid > 1.0 - 1e-6, "grid {fid}");
    }

    #[test]
    fn ground_internal_state_ignores_the_lattice() {
        let tr = trap(0.02);
        let d = DriveConfig::resonant(&tr, 1.0, 0.0).unwrap();
        let h = Hamiltonian::ground(tr, d);
        let cfg = FockConfig { dim: 16, dt: 0.01, t_final: 20.0, snapshot_every: 0 };
        let traj = propagate_fock(&MotionalState::vacuum(16).unwrap(), &h, &cfg).unwrap();
        let p0 = traj.final_state().populations()[0];
        assert!((p0 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn edge_leak_is_reported() {
        let tr = trap(0.02);
        let d = DriveConfig::static_depth(0.0).unwrap();
        let cfg = GridConfig { n_points: 128, x_max: 3.0, dt: 0.05, t_final: 1.0, snapshot_every: 0 };
        let psi0 = GridState::from_fock(&MotionalState::vacuum(2).unwrap(), 1.0, cfg.grid().unwrap());
        let err = propagate_grid(&psi0, &Hamiltonian::excited(tr, d), &cfg).unwrap_err();
        assert!(matches!(err, Error::BoundaryLeak { .. }));
    }

    #[test]
    fn fock_tail_leak_is_reported() {
        let tr = trap(0.02);
        let d = DriveConfig::resonant(&tr, 1.0, 0.0).unwrap();
        let h = Hamiltonian::excited(tr, d);
        let cfg = FockConfig { dim: 12, dt: 0.01, t_final: 60.0, snapshot_every: 100 };
        let err = propagate_fock(&MotionalState::vacuum(12).unwrap(), &h, &cfg).unwrap_err();
        assert!(matches!(err, Error::TailLeak { .. }));
    }

    #[test]
    fn rwa_propagator_examples() {
        let id = rwa_propagator(0.02, 0.0, 0.0, 16).unwrap();
        assert!(linalg::max_abs(&(id.matrix() - &Array2::<C64>::eye(16))) < 1e-15);
        let u = rwa_propagator(0.02, 100.0, 0.0, 64).unwrap();
        let s = fock::squeeze_op(SqueezeParam::real(1.0).unwrap(), 64).unwrap();
        assert!(linalg::max_abs(&(u.matrix() - s.matrix())) < 1e-12);
    }

    #[test]
    fn rwa_inversion_by_half_period_shift() {
        let dim = 128;
        let vac = MotionalState::vacuum(dim).unwrap();
        for theta in [0.0, 0.4, FRAC_PI_2, 2.0] {
            let fwd = rwa_propagator(0.02, 50.0, theta, dim).unwrap();
            let back = rwa_propagator(0.02, 50.0, inverse_phase(theta), dim).unwrap();
            let out = back.apply(&fwd.apply(&vac).unwrap()).unwrap();
            assert!((out.populations()[0] - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn rwa_mirror_phase_inverts_only_on_the_real_axis() {
        let dim = 128;
        let vac = MotionalState::vacuum(dim).unwrap();
        let p0 = |theta: f64| {
            let fwd = rwa_propagator(0.02, 50.0, theta, dim).unwrap();
            let back = rwa_propagator(0.02, 50.0, mirror_phase(theta), dim).unwrap();
            back.apply(&fwd.apply(&vac).unwrap()).unwrap().populations()[0]
        };
        assert!((p0(0.0) - 1.0).abs() < 1e-8);
        assert!((p0(PI) - 1.0).abs() < 1e-8);
        assert!(p0(FRAC_PI_2) < 0.7);
    }

    #[test]
    fn grid_fock_round_trip() {
        let tr = trap(0.02);
        let d = DriveConfig::static_depth(1.0).unwrap();
        let p = derive_params(&tr, &d);
        let s = fock::squeezed_state_analytic(SqueezeParam::new(0.6, 0.9).unwrap(), 64).unwrap();
        let grid = Grid::new(512, 16.0).unwrap();
        let g = GridState::from_fock(&s, p.frame_scale(), grid);
        assert!((g.norm_sqr() - 1.0).abs() < 1e-12);
        let back = g.to_fock(p.frame_scale(), 64).unwrap();
        assert!((back.inner(&s).unwrap().norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dressed_frame_agrees_between_representations() {
        let tr = trap(0.02);
        let d = DriveConfig::static_depth(1.0).unwrap();
        let dim = 64;
        let s = fock::squeezed_state_analytic(SqueezeParam::new(0.3, 0.5).unwrap(), dim).unwrap();
        let grid = Grid::new(512, 14.0).unwrap();
        let g = GridState::from_fock(&s, 1.0, grid);
        let mut frame = DressedFrame::new(&tr, &d, dim);
        let a = frame.from_grid(&g, 3.0).unwrap();
        let b = frame.from_fock(&s, 3.0).unwrap();
        let worst = a.amplitudes().iter().zip(b.amplitudes()).take(40).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(worst < 1e-9, "{worst}");
    }

    #[test]
    fn overlap_starts_at_one() {
        let tr = trap(0.02);
        let d = DriveConfig::resonant(&tr, 1.0, 0.0).unwrap();
        let cfg = GridConfig { n_points: 256, x_max: 12.0, dt: 0.01, t_final: 0.5, snapshot_every: 10 };
        let psi0 = dressed_vacuum_grid(&tr, &d, cfg.grid().unwrap()).unwrap();
        let traj = propagate_grid(&psi0, &Hamiltonian::excited(tr, d), &cfg).unwrap();
        let rows = overlap_series(&traj, &tr, &d, 32, 6).unwrap();
        assert!((rows[0].fidelity - 1.0).abs() < 1e-12);
        assert_eq!(rows.len(), 6);
        let mut buf = Vec::new();
        write_overlap_csv(&rows, 6, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,fidelity,P0,P1,P2,P3,P4,P5,P6,norm_defect,boundary_leak\n"));
    }

    #[test]
    fn undriven_overlap_stays_at_one() {
        let tr = trap(0.02);
        let d = DriveConfig::new(0.0, 2.0, 0.0).unwrap();
        let cfg = GridConfig { n_points: 256, x_max: 10.0, dt: 0.02, t_final: 20.0, snapshot_every: 100 };
        let psi0 = dressed_vacuum_grid(&tr, &d, cfg.grid().unwrap()).unwrap();
        let traj = propagate_grid(&psi0, &Hamiltonian::excited(tr, d), &cfg).unwrap();
        for row in overlap_series(&traj, &tr, &d, 16, 2).unwrap() {
            assert!((row.fidelity - 1.0).abs() < 1e-8, "{}", row.fidelity);
        }
    }

    #[test]
    fn split_operator_is_second_order() {
        // smooth reference: squeezing drive for a few periods
        let tr = trap(0.05);
        let d = DriveConfig::resonant(&tr, 1.0, 0.0).unwrap();
        let h = Hamiltonian::excited(tr, d);
        let base = GridConfig { n_points: 256, x_max: 12.0, dt: 0.1, t_final: 6.0, snapshot_every: 0 };
        let psi0 = dressed_vacuum_grid(&tr, &d, base.grid().unwrap()).unwrap();
        let run = |dt: f64| propagate_grid(&psi0, &h, &base.with_dt(dt)).unwrap().final_state().clone();
        let reference = run(0.1 / 32.0);
        let err = |dt: f64| {
            let s = run(dt);
            let diff: f64 = s.psi.iter().zip(&reference.psi).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>();
            (diff * base.grid().unwrap().dx()).sqrt()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn rk4_is_fourth_order() {
        let tr = trap(0.05);
        let d = DriveConfig::resonant(&tr, 1.0, 0.0).unwrap();
        let h = Hamiltonian::excited(tr, d);
        let dim = 32;
        let psi0 = dressed_vacuum(&tr, &d, dim).unwrap();
        let run = |dt: f64| {
            let cfg = FockConfig { dim, dt, t_final: 6.0, snapshot_every: 0 };
            propagate_fock(&psi0, &h, &cfg).unwrap().final_state().amplitudes().clone()
        };
        let reference = run(0.05 / 16.0);
        let err = |dt: f64| (&run(dt) - &reference).iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let ratio = err(0.05) / err(0.025);
        assert!((13.0..19.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn audit_flags_coarse_steps() {
        let tr = trap(0.05);
        let d = DriveConfig::resonant(&tr, 1.0, 0.0).unwrap();
        let h = Hamiltonian::excited(tr, d);
        let cfg = GridConfig { n_points: 256, x_max: 12.0, dt: 0.5, t_final: 10.0, snapshot_every: 0 };
        let psi0 = dressed_vacuum_grid(&tr, &d, cfg.grid().unwrap()).unwrap();
        let audit = audit_grid(&psi0, &h, &cfg, 1e-9).unwrap();
        assert!(!audit.passed);
        assert!(matches!(audit.into_result(), Err(Error::StepSize { .. })));
        let fine = audit_grid(&psi0, &h, &cfg.with_dt(0.005), 1e-7).unwrap();
        assert!(fine.passed, "{fine:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn derived_params_invariants(eta in 1e-4f64..0.5, eps in 0.0f64..5.0, w in 0.2f64..3.0) {
            let tr = TrapConfig::new(w, eta, 0.0).unwrap();
            let p = derive_params(&tr, &DriveConfig::static_depth(eps).unwrap());
            prop_assert!(p.omega_e >= w);
            prop_assert!(p.eta_e <= eta);
            prop_assert_eq!(p.g_rate, eps * p.eta_e);
            prop_assert!((p.sigma_ratio.powi(2) - w / p.omega_e).abs() < 1e-14);
        }

        #[test]
        fn split_operator_preserves_norm(theta in 0.0f64..TAU, phi in -0.3f64..0.3) {
            let tr = TrapConfig::new(1.0, 0.02, phi).unwrap();
            let d = DriveConfig::resonant(&tr, 1.0, theta).unwrap();
            let cfg = GridConfig { n_points: 256, x_max: 12.0, dt: 0.02, t_final: 4.0, snapshot_every: 20 };
            let psi0 = dressed_vacuum_grid(&tr, &d, cfg.grid().unwrap()).unwrap();
            let traj = propagate_grid(&psi0, &Hamiltonian::excited(tr, d), &cfg).unwrap();
            for s in &traj.snapshots {
                prop_assert!(s.norm_defect < 1e-10 * (1.0 + s.t / 0.02));
            }
        }
    }
}
