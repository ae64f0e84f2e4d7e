//! Truncated Fock-space states and operators.
//!
//! A [`MotionalState`] is a normalized amplitude vector over `|0⟩ … |N−1⟩`; a
//! [`FockOperator`] is a dense `N × N` complex matrix. The squeezing and
//! displacement operators are built as true matrix exponentials of their
//! truncated generators, so they can be checked against the closed-form
//! squeezed-state series in [`squeezed_state_analytic`].

use ndarray::{s, Array1, Array2};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::linalg;

/// Normalization tolerance for constructed states.
pub const NORM_TOL: f64 = 1e-10;
/// Fraction of the basis (from the top) inspected by the truncation-health check.
pub const HEALTH_FRACTION: f64 = 0.05;
/// Probability allowed in the inspected top fraction.
pub const HEALTH_LIMIT: f64 = 1e-8;
/// Probability the analytic squeezed series may lose beyond the truncation.
pub const ANALYTIC_TAIL_LIMIT: f64 = 1e-10;
/// Fraction of indices treated as the truncation boundary in unitarity checks.
pub const BOUNDARY_FRACTION: f64 = 0.1;

/// Squeezing parameter `ξ = r e^{iθ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqueezeParam {
    r: f64,
    theta: f64,
}

impl SqueezeParam {
    /// `theta` is reduced into `[0, 2π)`.
    pub fn new(r: f64, theta: f64) -> Result<Self> {
        if !r.is_finite() || r < 0.0 {
            return Err(Error::InvalidParameter { name: "r", value: r, reason: "must be finite and >= 0" });
        }
        if !theta.is_finite() {
            return Err(Error::InvalidParameter { name: "theta", value: theta, reason: "must be finite" });
        }
        Ok(SqueezeParam { r, theta: theta.rem_euclid(TAU) })
    }

    /// Squeezing along the `θ = 0` quadrature.
    pub fn real(r: f64) -> Result<Self> {
        Self::new(r, 0.0)
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn xi(&self) -> C64 {
        C64::from_polar(self.r, self.theta)
    }

    /// `ξ e^{iπ}`: same magnitude, complementary quadrature.
    pub fn flipped(&self) -> Self {
        SqueezeParam { r: self.r, theta: (self.theta + std::f64::consts::PI).rem_euclid(TAU) }
    }
}

/// Phase-space point `α = x + i p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub x: f64,
    pub p: f64,
}

impl PhasePoint {
    pub fn new(x: f64, p: f64) -> Self {
        PhasePoint { x, p }
    }

    pub fn alpha(&self) -> C64 {
        C64::new(self.x, self.p)
    }

    pub fn from_alpha(alpha: C64) -> Self {
        PhasePoint { x: alpha.re, p: alpha.im }
    }
}

/// Even or odd superposition `N±(|ξ⟩ ± |ξ e^{iπ}⟩)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum XBranch {
    Even,
    Odd,
}

impl XBranch {
    /// `+1` for the even branch, `−1` for the odd one.
    pub fn sign(self) -> f64 {
        match self {
            XBranch::Even => 1.0,
            XBranch::Odd => -1.0,
        }
    }

    /// `N± = 1/√(2 ± 2/√cosh 2r)`.
    pub fn normalization(self, r: f64) -> f64 {
        1.0 / (2.0 + self.sign() * 2.0 / (2.0 * r).cosh().sqrt()).sqrt()
    }

    pub fn name(self) -> &'static str {
        match self {
            XBranch::Even => "even",
            XBranch::Odd => "odd",
        }
    }
}

impl std::fmt::Display for XBranch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim < 2 {
        return Err(Error::InvalidDimension { dim, min: 2 });
    }
    Ok(())
}

/// Number of top indices inspected by a `fraction`-of-the-basis check.
fn top_count(dim: usize, fraction: f64) -> usize {
    ((dim as f64 * fraction).ceil() as usize).clamp(1, dim)
}

/// Serialized form `{dim, re[], im[]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub dim: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

/// Motional state on a truncated Fock basis.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionalState {
    amps: Array1<C64>,
}

impl MotionalState {
    /// Normalizes the given amplitudes. No truncation-health check; see
    /// [`MotionalState::checked`].
    pub fn from_amplitudes(amps: Array1<C64>) -> Result<Self> {
        check_dim(amps.len())?;
        let norm = amps.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::InvalidInput(format!("state norm {norm} cannot be normalized")));
        }
        Ok(MotionalState { amps: amps.mapv(|c| c / norm) })
    }

    /// Wrap amplitudes as-is (the result of applying an operator to a state,
    /// whose norm may carry truncation loss worth inspecting).
    pub fn from_raw(amps: Array1<C64>) -> Result<Self> {
        check_dim(amps.len())?;
        Ok(MotionalState { amps })
    }

    /// Enforce the truncation-health invariant on `self`.
    pub fn checked(self, what: &str) -> Result<Self> {
        let tail = self.top_probability(HEALTH_FRACTION);
        if tail >= HEALTH_LIMIT {
            return Err(Error::Truncation { what: what.to_string(), tail, limit: HEALTH_LIMIT, dim: self.dim() });
        }
        Ok(self)
    }

    pub fn vacuum(dim: usize) -> Result<Self> {
        Self::number(0, dim)
    }

    pub fn number(n: usize, dim: usize) -> Result<Self> {
        check_dim(dim)?;
        if n >= dim {
            return Err(Error::InvalidInput(format!("number state |{n}> outside dim {dim}")));
        }
        let mut amps = Array1::zeros(dim);
        amps[n] = C64::new(1.0, 0.0);
        Ok(MotionalState { amps })
    }

    /// Squeezed vacuum from the closed-form series.
    pub fn squeezed(xi: SqueezeParam, dim: usize) -> Result<Self> {
        squeezed_state_analytic(xi, dim)
    }

    /// `|X±⟩ = N±(|r⟩ ± |r e^{iπ}⟩)`.
    pub fn x_state(branch: XBranch, r: f64, dim: usize) -> Result<Self> {
        if branch == XBranch::Odd && r <= 0.0 {
            return Err(Error::InvalidParameter { name: "r", value: r, reason: "odd X-state needs r > 0" });
        }
        let xi = SqueezeParam::real(r)?;
        let a = squeezed_state_analytic(xi, dim)?;
        let b = squeezed_state_analytic(xi.flipped(), dim)?;
        let n = branch.normalization(r);
        let amps = (&a.amps + &(b.amps.mapv(|c| c * branch.sign()))).mapv(|c| c * n);
        Self::from_amplitudes(amps)?.checked("X-state")
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &Array1<C64> {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Array1<C64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn normalized(&self) -> Result<Self> {
        Self::from_amplitudes(self.amps.clone())
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &MotionalState) -> Result<C64> {
        inner_product(self, other)
    }

    /// `|⟨self|other⟩|²`.
    pub fn fidelity(&self, other: &MotionalState) -> Result<f64> {
        Ok(self.inner(other)?.norm_sqr())
    }

    pub fn populations(&self) -> Vec<f64> {
        phonon_distribution(self)
    }

    /// Probability in the top `fraction` of the basis.
    pub fn top_probability(&self, fraction: f64) -> f64 {
        let dim = self.dim();
        let k = top_count(dim, fraction);
        self.amps.slice(s![dim - k..]).iter().map(|c| c.norm_sqr()).sum()
    }

    /// `(P_even, P_odd)` summed over even and odd phonon numbers.
    pub fn parity_weights(&self) -> (f64, f64) {
        self.amps.iter().enumerate().fold((0.0, 0.0), |(e, o), (n, c)| {
            if n % 2 == 0 {
                (e + c.norm_sqr(), o)
            } else {
                (e, o + c.norm_sqr())
            }
        })
    }

    pub fn expectation(&self, op: &FockOperator) -> Result<C64> {
        let applied = op.apply(self)?;
        self.inner(&applied)
    }

    /// Same state in a larger (zero-padded) or smaller basis.
    pub fn resized(&self, dim: usize) -> Result<Self> {
        check_dim(dim)?;
        let mut amps = Array1::zeros(dim);
        let k = dim.min(self.dim());
        amps.slice_mut(s![..k]).assign(&self.amps.slice(s![..k]));
        Ok(MotionalState { amps })
    }

    pub fn to_record(&self) -> StateRecord {
        StateRecord {
            dim: self.dim(),
            re: self.amps.iter().map(|c| c.re).collect(),
            im: self.amps.iter().map(|c| c.im).collect(),
        }
    }

    pub fn from_record(rec: &StateRecord) -> Result<Self> {
        if rec.re.len() != rec.dim || rec.im.len() != rec.dim {
            return Err(Error::InvalidInput(format!(
                "state record: dim {} but {} re / {} im entries",
                rec.dim,
                rec.re.len(),
                rec.im.len()
            )));
        }
        let amps = rec.re.iter().zip(&rec.im).map(|(&re, &im)| C64::new(re, im)).collect();
        Self::from_amplitudes(amps)
    }
}

/// Dense operator on the truncated Fock space.
#[derive(Debug, Clone, PartialEq)]
pub struct FockOperator {
    m: Array2<C64>,
}

impl FockOperator {
    pub fn from_matrix(m: Array2<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch { left: m.nrows(), right: m.ncols() });
        }
        check_dim(m.nrows())?;
        Ok(FockOperator { m })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(FockOperator { m: Array2::eye(dim) })
    }

    /// `exp(generator)` by scaling and squaring.
    pub fn exp(generator: &FockOperator) -> Self {
        FockOperator { m: linalg::expm(&generator.m) }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.m
    }

    pub fn into_matrix(self) -> Array2<C64> {
        self.m
    }

    pub fn dagger(&self) -> Self {
        FockOperator { m: self.m.t().mapv(|c| c.conj()) }
    }

    /// Operator product `self · rhs`.
    pub fn compose(&self, rhs: &FockOperator) -> Result<Self> {
        if self.dim() != rhs.dim() {
            return Err(Error::DimensionMismatch { left: self.dim(), right: rhs.dim() });
        }
        Ok(FockOperator { m: self.m.dot(&rhs.m) })
    }

    pub fn commutator(&self, rhs: &FockOperator) -> Result<Self> {
        let ab = self.compose(rhs)?;
        let ba = rhs.compose(self)?;
        Ok(FockOperator { m: ab.m - ba.m })
    }

    pub fn scaled(&self, k: C64) -> Self {
        FockOperator { m: self.m.mapv(|v| v * k) }
    }

    pub fn add(&self, rhs: &FockOperator) -> Result<Self> {
        if self.dim() != rhs.dim() {
            return Err(Error::DimensionMismatch { left: self.dim(), right: rhs.dim() });
        }
        Ok(FockOperator { m: &self.m + &rhs.m })
    }

    /// `self |ψ⟩`, without renormalization.
    pub fn apply(&self, state: &MotionalState) -> Result<MotionalState> {
        if self.dim() != state.dim() {
            return Err(Error::DimensionMismatch { left: self.dim(), right: state.dim() });
        }
        Ok(MotionalState { amps: self.m.dot(&state.amps) })
    }

    /// `max |M − M†|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let d = &self.m - &self.m.t().mapv(|c| c.conj());
        linalg::max_abs(&d)
    }

    /// `max |U†U − I|` over the leading `keep × keep` block.
    pub fn unitarity_defect(&self, keep: usize) -> f64 {
        let k = keep.min(self.dim());
        let uu = self.m.t().mapv(|c| c.conj()).dot(&self.m);
        let block = uu.slice(s![..k, ..k]);
        block
            .indexed_iter()
            .map(|((i, j), v)| if i == j { (v - C64::new(1.0, 0.0)).norm() } else { v.norm() })
            .fold(0.0, f64::max)
    }

    /// Largest `K` such that every column `n < K` keeps less than `tol` of its
    /// probability in the top boundary band of the basis.
    pub fn faithful_columns(&self, tol: f64) -> usize {
        let dim = self.dim();
        let band = top_count(dim, BOUNDARY_FRACTION);
        (0..dim)
            .take_while(|&n| {
                let tail: f64 = self.m.slice(s![dim - band.., n]).iter().map(|c| c.norm_sqr()).sum();
                tail < tol
            })
            .count()
    }
}

/// Leading block size kept by unitarity checks (top 10% exempt).
pub fn protected_block(dim: usize) -> usize {
    dim - top_count(dim, BOUNDARY_FRACTION)
}

/// Annihilation and creation operators `(a, a†)`.
pub fn ladder_ops(dim: usize) -> Result<(FockOperator, FockOperator)> {
    check_dim(dim)?;
    let mut a = Array2::zeros((dim, dim));
    for n in 1..dim {
        a[[n - 1, n]] = C64::new((n as f64).sqrt(), 0.0);
    }
    let a = FockOperator { m: a };
    let ad = a.dagger();
    Ok((a, ad))
}

pub fn number_op(dim: usize) -> Result<FockOperator> {
    check_dim(dim)?;
    let diag = Array1::from_iter((0..dim).map(|n| C64::new(n as f64, 0.0)));
    Ok(FockOperator { m: Array2::from_diag(&diag) })
}

/// `x = (a + a†)/√2` in units of the oscillator length.
pub fn position_op(dim: usize) -> Result<FockOperator> {
    let (a, ad) = ladder_ops(dim)?;
    Ok(FockOperator { m: (a.m + ad.m).mapv(|c| c * std::f64::consts::FRAC_1_SQRT_2) })
}

/// `p = i(a† − a)/√2`.
pub fn momentum_op(dim: usize) -> Result<FockOperator> {
    let (a, ad) = ladder_ops(dim)?;
    Ok(FockOperator { m: (ad.m - a.m).mapv(|c| c * C64::new(0.0, std::f64::consts::FRAC_1_SQRT_2)) })
}

/// Real tridiagonal position matrix, used for spectral functions of `x`.
pub(crate) fn position_matrix_real(dim: usize) -> Array2<f64> {
    let mut x = Array2::zeros((dim, dim));
    for n in 1..dim {
        let v = (n as f64 / 2.0).sqrt();
        x[[n - 1, n]] = v;
        x[[n, n - 1]] = v;
    }
    x
}

/// Conjugate a real-generator exponential by `e^{iφ n}`: entries pick up
/// `e^{iφ (m − n)}`.
fn rotate_real(real: &Array2<f64>, phase_per_quantum: f64) -> Array2<C64> {
    Array2::from_shape_fn(real.dim(), |(m, n)| {
        let v = real[[m, n]];
        if v == 0.0 {
            C64::new(0.0, 0.0)
        } else {
            C64::from_polar(v, phase_per_quantum * (m as f64 - n as f64))
        }
    })
}

/// `S(ξ) = exp((ξ* a² − ξ a†²)/2)`.
///
/// Computed as `e^{iθn/2} S(r) e^{−iθn/2}` with the real generator
/// `r(a² − a†²)/2` exponentiated separately on the even and odd sectors it
/// never mixes.
pub fn squeeze_op(xi: SqueezeParam, dim: usize) -> Result<FockOperator> {
    check_dim(dim)?;
    let r = xi.r();
    let mut real = Array2::<f64>::zeros((dim, dim));
    for parity in 0..2usize {
        let idx: Vec<usize> = (parity..dim).step_by(2).collect();
        let nb = idx.len();
        if nb == 0 {
            continue;
        }
        let mut gen = Array2::<f64>::zeros((nb, nb));
        for i in 1..nb {
            let n = idx[i] as f64;
            let v = 0.5 * r * (n * (n - 1.0)).sqrt();
            gen[[i - 1, i]] = v;
            gen[[i, i - 1]] = -v;
        }
        let block = linalg::expm(&gen);
        for (bi, &mi) in idx.iter().enumerate() {
            for (bj, &nj) in idx.iter().enumerate() {
                real[[mi, nj]] = block[[bi, bj]];
            }
        }
    }
    Ok(FockOperator { m: rotate_real(&real, 0.5 * xi.theta()) })
}

/// `D(α) = exp(α a† − α* a)`, via `e^{iφn} D(|α|) e^{−iφn}`.
pub fn displacement_op(alpha: PhasePoint, dim: usize) -> Result<FockOperator> {
    check_dim(dim)?;
    let a = alpha.alpha();
    let (mag, phase) = (a.norm(), a.arg());
    let mut gen = Array2::<f64>::zeros((dim, dim));
    for n in 0..dim - 1 {
        let v = mag * ((n + 1) as f64).sqrt();
        gen[[n + 1, n]] = v;
        gen[[n, n + 1]] = -v;
    }
    let real = linalg::expm(&gen);
    Ok(FockOperator { m: rotate_real(&real, phase) })
}

/// Squeezed-vacuum coefficients `c_{2m}` for `2m < len`, by the ratio
/// `c_{2m}/c_{2m−2} = −tanh r e^{iθ} √((2m−1)/(2m))`.
fn squeezed_series(xi: SqueezeParam, len: usize) -> Array1<C64> {
    let mut c = Array1::zeros(len);
    if len == 0 {
        return c;
    }
    let step = -xi.r().tanh() * C64::from_polar(1.0, xi.theta());
    c[0] = C64::new(1.0 / xi.r().cosh().sqrt(), 0.0);
    let mut m = 1usize;
    while 2 * m < len {
        let ratio = ((2 * m - 1) as f64 / (2 * m) as f64).sqrt();
        c[2 * m] = c[2 * m - 2] * step * ratio;
        m += 1;
    }
    c
}

/// Probabilities `P(2m)` of the squeezed vacuum for `2m < limit` plus an upper
/// bound for everything beyond, which decays at least geometrically in `tanh² r`.
fn squeezed_tail_from(r: f64, dim: usize) -> f64 {
    let t2 = r.tanh().powi(2);
    let mut p = 1.0 / r.cosh();
    let mut tail = 0.0;
    let mut m = 0usize;
    let max_terms = 4 * dim + 200_000;
    loop {
        if 2 * m >= dim {
            tail += p;
            if p * r.cosh().powi(2) < 1e-30 * tail.max(1e-300) || p == 0.0 {
                break;
            }
        }
        if m > max_terms {
            // remaining terms bounded by a geometric series
            tail += p * t2 / (1.0 - t2);
            break;
        }
        m += 1;
        p *= t2 * (2 * m - 1) as f64 / (2 * m) as f64;
    }
    tail
}

/// Probability of the squeezed vacuum with magnitude `r` on `n ≥ dim`.
pub fn squeezed_tail_probability(r: f64, dim: usize) -> f64 {
    if r == 0.0 {
        return if dim >= 1 { 0.0 } else { 1.0 };
    }
    squeezed_tail_from(r, dim)
}

/// Smallest truncation whose squeezed-vacuum tail is below `tol`.
pub fn required_dim(r: f64, tol: f64) -> usize {
    let t2 = r.tanh().powi(2);
    // probabilities until the remainder bound falls far below tol
    let mut probs = Vec::new();
    let mut p = 1.0 / r.cosh();
    let mut m = 0usize;
    loop {
        probs.push(p);
        let remainder_bound = p * t2 / (1.0 - t2).max(1e-300);
        if remainder_bound < tol * 1e-3 || p == 0.0 {
            break;
        }
        m += 1;
        p *= t2 * (2 * m - 1) as f64 / (2 * m) as f64;
    }
    let mut suffix = 0.0;
    let mut needed_m = probs.len();
    for (k, &pk) in probs.iter().enumerate().rev() {
        suffix += pk;
        if suffix >= tol {
            needed_m = k + 1;
            break;
        }
        needed_m = k;
    }
    // keep every index 2m < dim for m < needed_m
    (2 * needed_m).saturating_sub(1).max(2)
}

/// Truncation used when a caller does not choose one: the squeezed tail must
/// be below `1e−12`, rounded up to a multiple of 32.
pub fn default_dim(r: f64) -> usize {
    let need = required_dim(r, 1e-12).max(32);
    need.div_ceil(32) * 32
}

/// Closed-form squeezed vacuum `|ξ⟩` truncated to `dim` basis states.
///
/// Fails when the series loses more than [`ANALYTIC_TAIL_LIMIT`] of its
/// probability beyond the truncation.
pub fn squeezed_state_analytic(xi: SqueezeParam, dim: usize) -> Result<MotionalState> {
    check_dim(dim)?;
    let tail = squeezed_tail_probability(xi.r(), dim);
    if tail > ANALYTIC_TAIL_LIMIT {
        return Err(Error::Truncation {
            what: format!("squeezed state r = {}", xi.r()),
            tail,
            limit: ANALYTIC_TAIL_LIMIT,
            dim,
        });
    }
    MotionalState::from_amplitudes(squeezed_series(xi, dim))
}

/// `⟨a|b⟩`, conjugate-linear in `a`.
pub fn inner_product(a: &MotionalState, b: &MotionalState) -> Result<C64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { left: a.dim(), right: b.dim() });
    }
    Ok(a.amps.iter().zip(b.amps.iter()).map(|(x, y)| x.conj() * y).sum())
}

/// `P(n) = |c_n|²`.
pub fn phonon_distribution(s: &MotionalState) -> Vec<f64> {
    s.amps.iter().map(|c| c.norm_sqr()).collect()
}

/// Heisenberg-picture check of `S†(ξ) a S(ξ) = cosh r · a − e^{iθ} sinh r · a†`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformationCheck {
    /// Largest entry deviation on the faithful block.
    pub max_defect: f64,
    /// Size of the leading block whose squeezed images stay clear of the
    /// truncation boundary.
    pub faithful: usize,
}

/// Evaluate the squeezing transformation law on the leading block of indices
/// whose images under `S(ξ)` keep less than `1e−10` probability in the
/// boundary band. The entry defect tracks that band weight closely, so the
/// threshold sits three decades under the usual `1e−7` tolerance.
pub fn squeeze_transformation_check(xi: SqueezeParam, dim: usize) -> Result<TransformationCheck> {
    let s_op = squeeze_op(xi, dim)?;
    let faithful = s_op.faithful_columns(1e-10);
    let (a, ad) = ladder_ops(dim)?;
    let k = faithful;
    if k < 2 {
        return Ok(TransformationCheck { max_defect: f64::INFINITY, faithful: k });
    }
    let cols = s_op.m.slice(s![.., ..k]);
    let lhs = cols.t().mapv(|c| c.conj()).dot(&a.m.dot(&cols));
    let ch = xi.r().cosh();
    let sh = C64::from_polar(xi.r().sinh(), xi.theta());
    let rhs = a.m.slice(s![..k, ..k]).mapv(|c| c * ch) - ad.m.slice(s![..k, ..k]).mapv(|c| c * sh);
    let max_defect = (&lhs - &rhs).iter().map(|c| c.norm()).fold(0.0, f64::max);
    Ok(TransformationCheck { max_defect, faithful: k })
}
