//! Characteristic and Wigner functions of motional states, with the closed
//! form available for X-states.
//!
//! Convention: `α = x + ip`, `D(α) = exp(α a† − α* a)`, `C(α) = ⟨ψ|D(α)|ψ⟩`.
//! The vacuum has `C(α) = e^{−|α|²/2}`. For a parity eigenstate with
//! eigenvalue `π_s`, `W(α) = π_s (2/π) C(2α)`, which integrates to one
//! against `dx dp`.

use std::f64::consts::PI;
use std::io::Write;

use ndarray::Array2;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{MotionalState, XBranch};
use crate::lattice::{csv_err, fmt_f};
use crate::linalg;
use crate::C64;

/// Odd-parity weight tolerated by [`wigner_from_parity`].
pub const PARITY_TOL: f64 = 1e-10;
/// Basis-edge weight above which a numeric grid carries a warning.
pub const TAIL_WARN: f64 = 1e-8;

/// `|X±(r)⟩`: the X-state family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct XStateSpec {
    pub parity: XBranch,
    pub r: f64,
}

impl XStateSpec {
    pub fn new(parity: XBranch, r: f64) -> Result<Self> {
        let s = XStateSpec { parity, r };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r.is_finite() && self.r >= 0.0) {
            return Err(Error::InvalidParameter { name: "r", value: self.r, reason: "must be finite and >= 0" });
        }
        if self.parity == XBranch::Odd && self.r == 0.0 {
            return Err(Error::InvalidParameter { name: "r", value: self.r, reason: "odd X-state needs r > 0" });
        }
        Ok(())
    }

    pub fn state(&self, dim: usize) -> Result<MotionalState> {
        MotionalState::x_state(self.parity, self.r, dim)
    }

    fn norm_sqr(&self) -> f64 {
        self.parity.normalization(self.r).powi(2)
    }
}

/// Evenly spaced quadrature values `start + k·step`, `k < count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseAxis {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl PhaseAxis {
    pub fn new(start: f64, stop: f64, count: usize) -> Result<Self> {
        let a = PhaseAxis { start, stop, count };
        a.validate()?;
        Ok(a)
    }

    /// `[−half, half]` with `count` points.
    pub fn symmetric(half: f64, count: usize) -> Result<Self> {
        Self::new(-half, half, count)
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 || !self.start.is_finite() || !self.stop.is_finite() {
            return Err(Error::InvalidInput(format!("phase axis {self:?}: need finite ends and count >= 1")));
        }
        if self.count > 1 && self.stop <= self.start {
            return Err(Error::InvalidInput(format!("phase axis {self:?}: must be increasing")));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        if self.count > 1 {
            (self.stop - self.start) / (self.count - 1) as f64
        } else {
            0.0
        }
    }

    pub fn values(&self) -> Vec<f64> {
        let h = self.step();
        (0..self.count).map(|k| self.start + k as f64 * h).collect()
    }
}

/// Values on a rectangular phase-space grid, `values[[i, j]]` at `(x_i, p_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGrid<T> {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    pub values: Array2<T>,
    /// Non-fatal numerical caveats.
    pub warnings: Vec<String>,
}

impl<T: Clone + Send + Sync> PhaseGrid<T> {
    fn build<F>(xs: &PhaseAxis, ps: &PhaseAxis, f: F) -> Result<Self>
    where
        F: Fn(f64, f64) -> T + Sync,
    {
        xs.validate()?;
        ps.validate()?;
        let x = xs.values();
        let p = ps.values();
        let rows: Vec<Vec<T>> = x.par_iter().map(|&xi| p.iter().map(|&pj| f(xi, pj)).collect()).collect();
        let flat: Vec<T> = rows.into_iter().flatten().collect();
        let values = Array2::from_shape_vec((x.len(), p.len()), flat).expect("shape");
        Ok(PhaseGrid { x, p, values, warnings: Vec::new() })
    }
}

impl PhaseGrid<C64> {
    pub fn real_part(&self) -> PhaseGrid<f64> {
        PhaseGrid {
            x: self.x.clone(),
            p: self.p.clone(),
            values: self.values.mapv(|c| c.re),
            warnings: self.warnings.clone(),
        }
    }
}

/// `e^{−A} cosh B` for `A ≥ |B|` without overflow.
fn damped_cosh(a: f64, b: f64) -> f64 {
    0.5 * ((b - a).exp() + (-b - a).exp())
}

/// Closed-form `C±(x, p)` of an X-state.
pub fn char_function_closed_form_point(spec: &XStateSpec, x: f64, p: f64) -> f64 {
    let c2 = (2.0 * spec.r).cosh();
    let s2 = (2.0 * spec.r).sinh();
    let t2 = (2.0 * spec.r).tanh();
    let rho2 = x * x + p * p;
    let gauss = damped_cosh(0.5 * rho2 * c2, 0.5 * (x * x - p * p) * s2);
    let fringe = (-0.5 * rho2 / c2).exp() / c2.sqrt() * (x * p * t2).cos();
    2.0 * spec.norm_sqr() * (gauss + spec.parity.sign() * fringe)
}

pub fn char_function_closed_form(spec: &XStateSpec, xs: &PhaseAxis, ps: &PhaseAxis) -> Result<PhaseGrid<f64>> {
    spec.validate()?;
    PhaseGrid::build(xs, ps, |x, p| char_function_closed_form_point(spec, x, p))
}

/// Position-space sampling used by the numeric characteristic function.
struct Lattice {
    /// Samples `ψ(j h)` for `j ∈ [−half, half]`.
    psi: Vec<C64>,
    half: i64,
}

impl Lattice {
    fn new(state: &MotionalState, h: f64, reach: f64) -> Self {
        let half = (reach / h).ceil() as i64;
        let ys: Vec<f64> = (-half..=half).map(|j| j as f64 * h).collect();
        let coeffs = state.amplitudes().to_vec();
        let psi = ys.par_chunks(256).flat_map_iter(|chunk| linalg::hermite_synthesis(&coeffs, 1.0, chunk)).collect();
        Lattice { psi, half }
    }

    fn at(&self, j: i64) -> C64 {
        let k = j + self.half;
        if k < 0 || k as usize >= self.psi.len() {
            C64::new(0.0, 0.0)
        } else {
            self.psi[k as usize]
        }
    }
}

/// Extent beyond which every basis function up to `dim` is negligible.
fn support_radius(dim: usize) -> f64 {
    (2.0 * dim as f64 + 1.0).sqrt() + 12.0
}

/// Numeric `C(x, p) = ⟨ψ|D(x + ip)|ψ⟩` for any Fock-basis state.
///
/// Works in position space,
/// `C = ∫ ψ*(y + q/2) ψ(y − q/2) e^{i k y} dy` with `q = √2 x`, `k = √2 p`,
/// so the cost does not grow with a dense displacement matrix. When the `x`
/// axis starts on a multiple of its step, all shifts `q/2` fall on one
/// sampling lattice; otherwise each row is resampled. Each row is then a
/// chirp-z transform over `p`.
pub fn char_function_numeric(state: &MotionalState, xs: &PhaseAxis, ps: &PhaseAxis) -> Result<PhaseGrid<C64>> {
    xs.validate()?;
    ps.validate()?;
    let dim = state.dim();
    let reach = support_radius(dim);
    let x = xs.values();
    let p = ps.values();
    let x_extent = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let p_extent = p.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    // lattice fine enough for the band limit √(2 dim) of the Fock basis
    let k_band = 2.0 * (2.0 * dim as f64 + 1.0).sqrt() + std::f64::consts::SQRT_2 * p_extent + 8.0;
    let h_max = PI / k_band;
    let dx = xs.step();
    let aligned = dx > 0.0 && {
        let m = xs.start / dx;
        (m - m.round()).abs() < 1e-9
    };

    let rows: Vec<Vec<C64>> = if aligned {
        // q/2 = x/√2 must be an integer multiple of h
        let base = dx / std::f64::consts::SQRT_2;
        let sub = (base / h_max).ceil().max(1.0);
        let h = base / sub;
        let lat = Lattice::new(state, h, reach + x_extent / std::f64::consts::SQRT_2 + h);
        let j_max = (reach / h).ceil() as i64;
        x.par_iter()
            .map_init(FftPlanner::new, |planner, &xi| {
                let m = ((xi / dx).round() * sub) as i64;
                let prod: Vec<C64> = (-j_max..=j_max).map(|j| lat.at(j + m).conj() * lat.at(j - m)).collect();
                row_transform(&prod, -j_max, h, &p, ps, planner)
            })
            .collect()
    } else {
        let h = h_max;
        let j_max = (reach / h).ceil() as i64;
        let coeffs = state.amplitudes().to_vec();
        x.par_iter()
            .map_init(FftPlanner::new, |planner, &xi| {
                let shift = xi / std::f64::consts::SQRT_2;
                let ys: Vec<f64> = (-j_max..=j_max).map(|j| j as f64 * h).collect();
                let plus: Vec<f64> = ys.iter().map(|y| y + shift).collect();
                let minus: Vec<f64> = ys.iter().map(|y| y - shift).collect();
                let a = linalg::hermite_synthesis(&coeffs, 1.0, &plus);
                let b = linalg::hermite_synthesis(&coeffs, 1.0, &minus);
                let prod: Vec<C64> = a.iter().zip(&b).map(|(u, v)| u.conj() * v).collect();
                row_transform(&prod, -j_max, h, &p, ps, planner)
            })
            .collect()
    };

    let flat: Vec<C64> = rows.into_iter().flatten().collect();
    let values = Array2::from_shape_vec((x.len(), p.len()), flat).expect("shape");
    let mut warnings = Vec::new();
    let tail = basis_tail(state);
    if tail > TAIL_WARN {
        warnings.push(format!("truncation: top 5% of the {dim}-level basis holds {tail:.2e} probability"));
    }
    Ok(PhaseGrid { x, p, values, warnings })
}

/// `h Σ_j f_j e^{i √2 p y_j}` with `y_j = (j0 + j) h`, for every `p` on the axis.
fn row_transform(f: &[C64], j0: i64, h: f64, p: &[f64], ps: &PhaseAxis, planner: &mut FftPlanner<f64>) -> Vec<C64> {
    let sqrt2 = std::f64::consts::SQRT_2;
    let w0 = sqrt2 * ps.start * h;
    let dw = sqrt2 * ps.step() * h;
    let raw = linalg::chirp_z(f, w0, dw, p.len(), planner);
    raw.iter().zip(p).map(|(v, &pk)| v * C64::from_polar(h, sqrt2 * pk * j0 as f64 * h)).collect()
}

/// Probability in the top 5% of the basis; large values mean the state
/// itself was truncated before any phase-space evaluation.
pub fn basis_tail(state: &MotionalState) -> f64 {
    let pops = state.populations();
    let start = pops.len() - (pops.len() / 20).max(1);
    pops[start..].iter().sum()
}

/// Parity eigenvalue `±1` of a state, or a parity-violation error.
pub fn parity_of(state: &MotionalState) -> Result<f64> {
    let (even, odd) = state.parity_weights();
    let total = even + odd;
    if odd / total <= PARITY_TOL {
        Ok(1.0)
    } else if even / total <= PARITY_TOL {
        Ok(-1.0)
    } else {
        Err(Error::ParityViolation { weight: even.min(odd) / total })
    }
}

/// Wigner function of a parity eigenstate, `W(α) = π_s (2/π) C(2α)`.
pub fn wigner_from_parity(state: &MotionalState, xs: &PhaseAxis, ps: &PhaseAxis) -> Result<PhaseGrid<f64>> {
    let sign = parity_of(state)?;
    let scaled = |a: &PhaseAxis| PhaseAxis { start: 2.0 * a.start, stop: 2.0 * a.stop, count: a.count };
    let c = char_function_numeric(state, &scaled(xs), &scaled(ps))?;
    Ok(PhaseGrid {
        x: xs.values(),
        p: ps.values(),
        values: c.values.mapv(|v| sign * 2.0 / PI * v.re),
        warnings: c.warnings,
    })
}

/// Parity of the X-state family from its Fock support: both branches live
/// on even phonon numbers (`4m` and `4m + 2`).
pub fn xstate_parity(_spec: &XStateSpec) -> f64 {
    1.0
}

/// [`wigner_from_parity`] for an X-state via the closed-form `C`.
pub fn wigner_closed_form(spec: &XStateSpec, xs: &PhaseAxis, ps: &PhaseAxis) -> Result<PhaseGrid<f64>> {
    spec.validate()?;
    let sign = xstate_parity(spec);
    PhaseGrid::build(xs, ps, |x, p| sign * 2.0 / PI * char_function_closed_form_point(spec, 2.0 * x, 2.0 * p))
}

/// `W(0) = (2/π) Σ (−1)ⁿ P(n)`, independent of any characteristic function.
pub fn wigner_origin_from_populations(state: &MotionalState) -> f64 {
    let s: f64 = state.populations().iter().enumerate().map(|(n, p)| if n % 2 == 0 { *p } else { -*p }).sum();
    2.0 / PI * s
}

/// `√cosh 2r · e^{−u sinh² 2r / cosh 2r} ∓ cos(u tanh 2r)`: zero exactly where
/// `C±` vanishes on the diagonals `x² = p² = u`.
pub fn diagonal_residual(spec: &XStateSpec, u: f64) -> f64 {
    let c2 = (2.0 * spec.r).cosh();
    let s2 = (2.0 * spec.r).sinh();
    let lhs = c2.sqrt() * (-u * s2 * s2 / c2).exp();
    lhs + spec.parity.sign() * (u * (2.0 * spec.r).tanh()).cos()
}

/// Search settings for [`diagonal_zeros`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZeroSearch {
    /// Upper end of the scanned `u = x²` range.
    pub u_max: f64,
    /// Sign-scan resolution in `u`.
    pub du: f64,
    /// Bisection stops when the bracket is this narrow in `u`.
    pub tol: f64,
}

impl Default for ZeroSearch {
    fn default() -> Self {
        ZeroSearch { u_max: 25.0, du: 1e-4, tol: 1e-12 }
    }
}

/// Diagonal zeros of `C±` in `u ∈ (0, u_max]`, returned as `x = √u`.
pub fn diagonal_zeros(spec: &XStateSpec, search: &ZeroSearch) -> Result<Vec<f64>> {
    spec.validate()?;
    if !(search.u_max > 0.0 && search.du > 0.0 && search.tol > 0.0) {
        return Err(Error::InvalidInput(format!("zero search {search:?}: all fields must be > 0")));
    }
    let f = |u: f64| diagonal_residual(spec, u);
    let steps = (search.u_max / search.du).ceil() as usize;
    let mut roots = Vec::new();
    let mut a = 0.0;
    let mut fa = f(a);
    for k in 1..=steps {
        let b = (k as f64 * search.du).min(search.u_max);
        let fb = f(b);
        if fb == 0.0 {
            roots.push(b.sqrt());
        } else if fa != 0.0 && fa.signum() != fb.signum() {
            roots.push(bisect(&f, a, b, fa, search.tol).sqrt());
        }
        a = b;
        fa = fb;
    }
    Ok(roots)
}

fn bisect<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, mut fa: f64, tol: f64) -> f64 {
    while b - a > tol {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Quadrature along which a decay profile is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quadrature {
    X,
    P,
}

/// Shape of `C±` along one axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayProfile {
    /// First point where `C` falls below ½, if any on `(0, reach]`.
    pub half_max: Option<f64>,
    /// First point where `C` falls halfway from its peak to the plateau.
    pub midpoint: Option<f64>,
    /// Mean of `C` over `[3 e^{−r}, 1]` (or up to `reach`).
    pub plateau: f64,
    /// `(max − min)/max` of `C` over the same window.
    pub plateau_variation: f64,
}

pub fn quadrature_decay_profile(spec: &XStateSpec, axis: Quadrature, reach: f64) -> Result<DecayProfile> {
    spec.validate()?;
    let c = |s: f64| match axis {
        Quadrature::X => char_function_closed_form_point(spec, s, 0.0),
        Quadrature::P => char_function_closed_form_point(spec, 0.0, s),
    };
    let lo = 3.0 * (-spec.r).exp();
    let hi = reach.min(1.0).max(lo);
    let m = 2000;
    let vals: Vec<f64> = (0..=m).map(|k| c(lo + (hi - lo) * k as f64 / m as f64)).collect();
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let max = vals.iter().cloned().fold(f64::MIN, f64::max);
    let min = vals.iter().cloned().fold(f64::MAX, f64::min);
    let half_max = first_crossing(&c, 0.5, reach);
    let midpoint = first_crossing(&c, 0.5 * (c(0.0) + mean), reach);
    Ok(DecayProfile { half_max, midpoint, plateau: mean, plateau_variation: (max - min) / max.abs().max(1e-300) })
}

fn first_crossing<F: Fn(f64) -> f64>(c: &F, level: f64, reach: f64) -> Option<f64> {
    let n = 20_000;
    let h = reach / n as f64;
    let g = |s: f64| c(s) - level;
    (1..=n).find_map(|k| {
        let (a, b) = ((k - 1) as f64 * h, k as f64 * h);
        (g(a) >= 0.0 && g(b) < 0.0).then(|| bisect(&g, a, b, g(a), 1e-14))
    })
}

/// `Tr(ρ_a ρ_b) = (1/π) ∫ C_a(α) C_b(−α) d²α` by the trapezoid rule on a
/// uniform grid.
pub fn trace_product<F: Fn(f64, f64) -> f64>(grid: &PhaseGrid<f64>, other: F) -> f64 {
    let hx = if grid.x.len() > 1 { grid.x[1] - grid.x[0] } else { 1.0 };
    let hp = if grid.p.len() > 1 { grid.p[1] - grid.p[0] } else { 1.0 };
    let mut s = 0.0;
    for (i, &x) in grid.x.iter().enumerate() {
        let wx = if i == 0 || i + 1 == grid.x.len() { 0.5 } else { 1.0 };
        for (j, &p) in grid.p.iter().enumerate() {
            let wp = if j == 0 || j + 1 == grid.p.len() { 0.5 } else { 1.0 };
            s += wx * wp * grid.values[[i, j]] * other(-x, -p);
        }
    }
    s * hx * hp / PI
}

/// Provenance written next to every grid file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMetadata {
    /// `charfun` or `wigner`.
    pub quantity: String,
    /// `closed-form` or `numeric`.
    pub method: String,
    pub spec: Option<XStateSpec>,
    pub dim: Option<usize>,
    pub x_axis: PhaseAxis,
    pub p_axis: PhaseAxis,
    pub convention: String,
    pub warnings: Vec<String>,
}

pub const CONVENTION_CHARFUN: &str =
    "alpha = x + i p; D(alpha) = exp(alpha a^dag - alpha^* a); C(alpha) = <psi|D(alpha)|psi>; vacuum C = exp(-|alpha|^2/2); x, p in units where the ground-trap position operator is (a + a^dag)/sqrt(2)";
pub const CONVENTION_WIGNER: &str = "W(x, p) = parity * (2/pi) * C(2x, 2p); integral of W dx dp = 1";

#[derive(Serialize)]
struct GridJson<'a> {
    metadata: &'a GridMetadata,
    x: &'a [f64],
    p: &'a [f64],
    values: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    imag: Option<Vec<Vec<f64>>>,
}

fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// JSON `{metadata, x[], p[], values[][], imag[][]?}`.
pub fn write_grid_json<W: Write>(
    grid: &PhaseGrid<f64>,
    imag: Option<&Array2<f64>>,
    meta: &GridMetadata,
    mut out: W,
) -> Result<()> {
    let doc = GridJson { metadata: meta, x: &grid.x, p: &grid.p, values: rows(&grid.values), imag: imag.map(rows) };
    serde_json::to_writer(&mut out, &doc).map_err(|e| Error::io("writing grid json", e.into()))?;
    out.write_all(b"\n").map_err(|e| Error::io("writing grid json", e))
}

/// CSV: header `x\p, p_0, p_1, …`, then one row per `x` value.
pub fn write_grid_csv<W: Write>(grid: &PhaseGrid<f64>, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let mut header = vec!["x\\p".to_string()];
    header.extend(grid.p.iter().map(|&p| fmt_f(p)));
    w.write_record(&header).map_err(csv_err)?;
    for (i, &x) in grid.x.iter().enumerate() {
        let mut rec = vec![fmt_f(x)];
        rec.extend(grid.values.row(i).iter().map(|&v| fmt_f(v)));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("flushing grid csv", e))
}
