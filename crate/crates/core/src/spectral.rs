//! Exact spectral solution of the shell equation.
//!
//! On the infinite tree a directionally symmetric dynamic density obeys
//! `d rho_a / dt = h_a^b rho_b` with
//!
//! ```text
//! h_0^b = -gamma xi delta_0^b + beta xi delta_1^b
//! h_a^b = beta delta_a^{b+1} - gamma xi delta_a^b + beta (xi - 1) delta_a^{b-1},   a > 0
//! ```
//!
//! Its continuum of modes is labelled by `theta in (0, pi)` with energy
//! `E(theta) = 2 beta e^eta cos(theta) - gamma xi`, and the propagator is
//!
//! ```text
//! G_a^b(t) = c_b e^{(b-a) eta - gamma xi t}
//!            ∫_{-pi}^{pi} [e^{i(a-b)θ} + R(θ) e^{i(a+b)θ}] e^{2 beta e^eta t cos θ} dθ
//! ```
//!
//! where `R(θ) = sinh(iθ + eta) / sinh(iθ - eta)` and
//! `c_b = (1 - delta_0^b / xi) / (2 pi)`. The integral is evaluated with the
//! periodic trapezoid rule, keeping the exponential prefactor in log form.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::lattice::{shell_size_f64, TruncatedTree};
use crate::model::{eta, Coefficients};
use crate::par::{map_range, Execution};
use crate::quadrature::{PeriodicQuadrature, QuadratureResult};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralParams {
    pub beta: f64,
    pub gamma: f64,
    pub xi: u32,
    pub eta: f64,
}

impl SpectralParams {
    pub fn new(xi: u32, beta: f64, gamma: f64) -> Result<SpectralParams> {
        if xi < 2 {
            return Err(Error::Coordination(xi));
        }
        Ok(SpectralParams {
            beta,
            gamma,
            xi,
            eta: eta(xi),
        })
    }

    pub fn from_coefficients(c: &Coefficients) -> SpectralParams {
        SpectralParams {
            beta: c.beta,
            gamma: c.gamma,
            xi: c.xi,
            eta: c.eta,
        }
    }

    pub fn is_chain(&self) -> bool {
        self.xi == 2
    }

    fn xi_f(&self) -> f64 {
        self.xi as f64
    }

    /// `2 beta e^eta`, the bandwidth coefficient multiplying `t cos θ`.
    pub fn hop_rate(&self) -> f64 {
        2.0 * self.beta * self.eta.exp()
    }

    pub fn energy(&self, theta: f64) -> f64 {
        self.hop_rate() * theta.cos() - self.gamma * self.xi_f()
    }

    /// `f(z) = beta / z + beta (xi - 1) z - gamma xi`.
    pub fn dispersion(&self, z: Complex64) -> Complex64 {
        self.beta / z + self.beta * (self.xi_f() - 1.0) * z - self.gamma * self.xi_f()
    }

    /// `sinh(iθ + eta) / sinh(iθ - eta)`, identically 1 on the chain.
    pub fn reflection(&self, theta: f64) -> Complex64 {
        if self.is_chain() {
            return Complex64::new(1.0, 0.0);
        }
        let it = Complex64::new(0.0, theta);
        (it + self.eta).sinh() / (it - self.eta).sinh()
    }

    /// `c_b = (1 - delta_0^b / xi) / (2 pi)`; note `1/xi = e^{-eta} / (2 cosh eta)`.
    pub fn column_weight(&self, b: u32) -> f64 {
        let factor = if b == 0 { 1.0 - 1.0 / self.xi_f() } else { 1.0 };
        factor / (2.0 * PI)
    }

    /// Growth rate of the large-time envelope, `2 (beta - gamma cosh eta) e^eta`.
    pub fn envelope_rate(&self) -> f64 {
        2.0 * (self.beta - self.gamma * self.eta.cosh()) * self.eta.exp()
    }
}

/// Truncation shell for sums over intermediate shells at horizon `t`: the
/// ballistic reach `2 e^eta |beta| t` plus a fixed margin of 40 shells.
pub fn shell_horizon(params: &SpectralParams, t: f64) -> usize {
    (params.hop_rate().abs() * t).ceil() as usize + 40
}

/// Last shell worth summing in `sum_a |N_a| G_a^b(t)`.
///
/// Weighted by shell sizes, every column of the off-diagonal part of `h` has
/// total weight `|beta| xi`, and reaching shell `b + k` takes at least `k`
/// jumps, so the weighted mass beyond it is at most
/// `e^{(|beta| - gamma) xi t} P(Poisson(|beta| xi t) >= k)`. The
/// horizon is the first shell where that bound drops below `tol`. Summing
/// further only adds rounding noise: past the physical reach the computed
/// `G_a^b` sits at the double-precision floor, which the shell size then
/// multiplies by `e^{a eta}`.
pub fn mass_horizon(params: &SpectralParams, b: u32, t: f64, tol: f64) -> u32 {
    let xi = params.xi_f();
    let rate = params.beta.abs() * xi;
    let growth = ((params.beta.abs() - params.gamma) * xi * t).exp();
    let mut k = 0u64;
    while growth * crate::dynamics::poisson_tail(rate * t, k) > tol && k < 100_000 {
        k += 1;
    }
    b + k as u32
}

/// One eigenmode of `h`.
///
/// The closed-form eigenvectors are purely imaginary, so both are returned
/// rotated onto the real axis: `psi = ψ / i` and `phi = i φ`. The product
/// `psi * phi` equals `ψ φ`, so the completeness integral and the Green's
/// function are unchanged.
#[derive(Clone, Copy, Debug)]
pub struct Mode {
    pub theta: f64,
    pub energy: f64,
    params: SpectralParams,
}

/// Builds the mode at angle `theta`.
pub fn mode(params: &SpectralParams, theta: f64) -> Result<Mode> {
    if !(theta > 0.0 && theta < PI) {
        return Err(Error::AngleOutOfRange(theta));
    }
    Ok(Mode {
        theta,
        energy: params.energy(theta),
        params: *params,
    })
}

impl Mode {
    /// Roots `z_{1,2} = e^{-eta ± iθ}` of `f(z) = E(θ)`.
    pub fn roots(&self) -> (Complex64, Complex64) {
        let e = self.params.eta;
        (
            Complex64::new(-e, self.theta).exp(),
            Complex64::new(-e, -self.theta).exp(),
        )
    }

    /// Column eigenvector component, `h psi = E psi`. Defined for `a >= -1`
    /// so the mirror condition `psi_{-1} = psi_1` can be checked.
    pub fn psi(&self, a: i64) -> f64 {
        let e = self.params.eta;
        let w = Complex64::new(e, self.theta).sinh()
            * Complex64::new(-e, self.theta).scale(a as f64).exp();
        // ψ = w - conj(w) = 2 i Im(w)
        2.0 * w.im
    }

    /// Row eigenvector component, `phi h = E phi`, normalized so that
    /// `∫_0^π psi_a phi^b dθ = delta_a^b`.
    pub fn phi(&self, b: u32) -> f64 {
        let e = self.params.eta;
        let u = Complex64::new(e, -self.theta).scale(b as f64).exp()
            / Complex64::new(e, self.theta).sinh();
        // φ = c_b (u - conj(u)) = 2 i c_b Im(u), so i φ = -2 c_b Im(u)
        -2.0 * self.params.column_weight(b) * u.im
    }
}

/// Green's function value split as `integral * exp(log_prefactor)`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct GreenValue {
    pub log_prefactor: f64,
    pub integral: f64,
}

impl GreenValue {
    pub fn value(&self) -> f64 {
        if self.integral == 0.0 {
            0.0
        } else {
            self.integral * self.log_prefactor.exp()
        }
    }

    /// `ln |G|`, finite even where `value()` underflows.
    pub fn ln_abs(&self) -> f64 {
        self.integral.abs().ln() + self.log_prefactor
    }
}

/// Quadrature engine for `G_a^b(t)`. Immutable and shareable across threads.
#[derive(Clone, Copy, Debug)]
pub struct GreenEvaluator {
    pub params: SpectralParams,
    pub quad: PeriodicQuadrature,
}

impl GreenEvaluator {
    pub fn new(params: SpectralParams) -> GreenEvaluator {
        GreenEvaluator {
            params,
            quad: PeriodicQuadrature::default(),
        }
    }

    /// Starting node count, rounded to an even number of at least 32.
    pub fn with_nodes(mut self, nodes: usize) -> GreenEvaluator {
        let n = nodes.max(32);
        self.quad.min_nodes = n + n % 2;
        self
    }

    pub fn with_rel_tol(mut self, rel_tol: f64) -> GreenEvaluator {
        self.quad.rel_tol = rel_tol;
        self
    }

    fn start_nodes(&self, modes: u64) -> usize {
        // the e^{i(a+b)θ} factor must be resolved before convergence is judged
        let need = (4 * (modes + 1)).next_power_of_two() as usize;
        self.quad.min_nodes.max(need)
    }

    fn integrate<F>(&self, modes: u64, f: F) -> Result<QuadratureResult>
    where
        F: Fn(f64) -> Complex64,
    {
        let quad = PeriodicQuadrature {
            min_nodes: self.start_nodes(modes),
            ..self.quad
        };
        let r = quad.integrate(f)?;
        let tol = self.quad.rel_tol.max(1e-13) * r.abs_integral;
        if r.value.im.abs() > tol {
            return Err(Error::ImaginaryResidual {
                imag: r.value.im,
                scale: r.abs_integral,
            });
        }
        Ok(r)
    }

    /// Exponent of the common factor pulled out of the integral: the
    /// quadrature sees `e^{κ cos θ - |κ|}` with `κ = 2 beta e^eta t`.
    fn log_prefactor(&self, a: u32, b: u32, t: f64) -> f64 {
        let p = &self.params;
        let kappa = p.hop_rate() * t;
        p.column_weight(b).ln() + (b as f64 - a as f64) * p.eta - p.gamma * p.xi_f() * t
            + kappa.abs()
    }

    /// `G_a^b(t)` in split form.
    pub fn green_log(&self, a: u32, b: u32, t: f64) -> Result<GreenValue> {
        if !(t >= 0.0) {
            return Err(Error::Invalid(format!("time must be nonnegative, got {t}")));
        }
        let p = self.params;
        let kappa = p.hop_rate() * t;
        let (d, s) = (a as f64 - b as f64, (a + b) as f64);
        let r = self.integrate(u64::from(a + b), |theta| {
            let phase_d = Complex64::new(0.0, d * theta).exp();
            let phase_s = Complex64::new(0.0, s * theta).exp();
            (phase_d + p.reflection(theta) * phase_s) * (kappa * theta.cos() - kappa.abs()).exp()
        })?;
        Ok(GreenValue {
            log_prefactor: self.log_prefactor(a, b, t),
            integral: r.value.re,
        })
    }

    pub fn green(&self, a: u32, b: u32, t: f64) -> Result<f64> {
        self.green_log(a, b, t).map(|g| g.value())
    }

    /// Quadrature of the part of the integrand that is odd in θ, which
    /// should vanish. Returned relative to the integral of `|integrand|`.
    pub fn odd_part_residual(&self, a: u32, b: u32, t: f64) -> Result<f64> {
        let p = self.params;
        let kappa = p.hop_rate() * t;
        let (d, s) = (a as f64 - b as f64, (a + b) as f64);
        let bracket = |theta: f64| {
            Complex64::new(0.0, d * theta).exp()
                + p.reflection(theta) * Complex64::new(0.0, s * theta).exp()
        };
        let r = self.integrate(u64::from(a + b), |theta| {
            let odd = (bracket(theta) - bracket(-theta)) * 0.5;
            odd * (kappa * theta.cos() - kappa.abs()).exp()
        })?;
        let full = self.integrate(u64::from(a + b), |theta| {
            bracket(theta) * (kappa * theta.cos() - kappa.abs()).exp()
        })?;
        Ok(r.value.norm() / full.abs_integral)
    }

    /// `G_a^b(t)` for all `a <= a_max`, `b <= b_max`, rows by `a`.
    pub fn green_matrix(
        &self,
        a_max: u32,
        b_max: u32,
        t: f64,
        exec: Execution,
    ) -> Result<Vec<Vec<GreenValue>>> {
        let cols = b_max as usize + 1;
        let flat = map_range(exec, (a_max as usize + 1) * cols, |k| {
            self.green_log((k / cols) as u32, (k % cols) as u32, t)
        });
        let flat: Vec<GreenValue> = flat.into_iter().collect::<Result<_>>()?;
        Ok(flat.chunks(cols).map(<[GreenValue]>::to_vec).collect())
    }
}

/// Closed form on the chain (`xi = 2`):
/// `(1 - delta_0^b / 2) e^{-2 gamma t} [I_{a-b}(2 beta t) + I_{a+b}(2 beta t)]`.
pub fn green_chain_log(beta: f64, gamma: f64, a: u32, b: u32, t: f64) -> GreenValue {
    use crate::bessel::bessel_i_scaled;
    let x = 2.0 * beta * t;
    let weight: f64 = if b == 0 { 0.5 } else { 1.0 };
    let (a, b) = (i64::from(a), i64::from(b));
    GreenValue {
        log_prefactor: weight.ln() - 2.0 * gamma * t + x.abs(),
        integral: bessel_i_scaled(a - b, x) + bessel_i_scaled(a + b, x),
    }
}

pub fn green_chain(beta: f64, gamma: f64, a: u32, b: u32, t: f64) -> f64 {
    green_chain_log(beta, gamma, a, b, t).value()
}

fn require_positive_beta(params: &SpectralParams) -> Result<()> {
    if !(params.beta > 0.0) {
        return Err(Error::Domain("asymptotic forms need beta > 0"));
    }
    Ok(())
}

/// Natural log of the large-time form of `G_a^b(t)`.
///
/// The chain (`xi = 2`) and the tree (`xi > 2`) have different laws,
/// `t^{-1/2}` and `t^{-3/2}`, and the choice is made on `xi` itself: the
/// tree law does not reduce to the chain law as `eta -> 0`.
pub fn green_large_time_ln(params: &SpectralParams, a: u32, b: u32, t: f64) -> Result<f64> {
    require_positive_beta(params)?;
    if !(t > 0.0) {
        return Err(Error::Domain("large-time form needs t > 0"));
    }
    let p = params;
    if p.is_chain() {
        let weight: f64 = if b == 0 { 0.5 } else { 1.0 };
        return Ok(-0.5 * (PI * p.beta * t).ln() + weight.ln() + 2.0 * (p.beta - p.gamma) * t);
    }
    let coth = 1.0 / p.eta.tanh();
    let scaled_t = p.beta * p.eta.exp() * t;
    let amplitude = (a as f64 + coth) * (b as f64 + coth) / (2.0 * (PI * scaled_t.powi(3)).sqrt());
    let weight = 2.0 * PI * p.column_weight(b);
    Ok(amplitude.ln() + weight.ln() + (b as f64 - a as f64) * p.eta + p.envelope_rate() * t)
}

pub fn green_large_time(params: &SpectralParams, a: u32, b: u32, t: f64) -> Result<f64> {
    green_large_time_ln(params, a, b, t).map(f64::exp)
}

/// Natural log of the large-coordination form
/// `(a+1)(b+1) / (2 sqrt(pi (beta e^eta t)^3)) e^{(b-a) eta + (2 beta e^eta - gamma e^{2 eta}) t}`.
///
/// Meant for `eta >> 1`; no gate is applied. Requires `beta > 0` and `t > 0`
/// (NaN otherwise).
pub fn green_large_xi_ln(params: &SpectralParams, a: u32, b: u32, t: f64) -> f64 {
    let p = params;
    let scaled_t = p.beta * p.eta.exp() * t;
    let amplitude = (a as f64 + 1.0) * (b as f64 + 1.0) / (2.0 * (PI * scaled_t.powi(3)).sqrt());
    let rate = 2.0 * p.beta * p.eta.exp() - p.gamma * (2.0 * p.eta).exp();
    amplitude.ln() + (b as f64 - a as f64) * p.eta + rate * t
}

pub fn green_large_xi(params: &SpectralParams, a: u32, b: u32, t: f64) -> f64 {
    green_large_xi_ln(params, a, b, t).exp()
}

/// Order-of-magnitude time `1 / (beta eta^2)` at which the Green's function
/// amplitude turns from chain-like `t^{-1/2}` to tree-like `t^{-3/2}` decay.
pub fn crossover_time(params: &SpectralParams) -> Result<f64> {
    if params.is_chain() {
        return Err(Error::Domain("no crossover on a chain"));
    }
    require_positive_beta(params)?;
    Ok(1.0 / (params.beta * params.eta * params.eta))
}

/// Site-level propagator `G_i^j(t) = G_{d(i,j)}^0(t)`.
pub fn bold_green(
    eval: &GreenEvaluator,
    tree: &TruncatedTree,
    i: usize,
    j: usize,
    t: f64,
) -> Result<f64> {
    let d = tree.distance(i, j)?;
    eval.green(d, 0, t)
}

/// `G_i^j(t)` for every site `j` of the tree, one quadrature per distance.
pub fn bold_green_row(
    eval: &GreenEvaluator,
    tree: &TruncatedTree,
    i: usize,
    t: f64,
    exec: Execution,
) -> Result<Vec<f64>> {
    let dist: Vec<u32> = (0..tree.sites())
        .map(|j| tree.distance(i, j))
        .collect::<Result<_>>()?;
    let max = dist.iter().copied().max().unwrap_or(0);
    let by_distance: Vec<f64> = map_range(exec, max as usize + 1, |d| eval.green(d as u32, 0, t))
        .into_iter()
        .collect::<Result<_>>()?;
    Ok(dist.iter().map(|&d| by_distance[d as usize]).collect())
}

/// `sum_{a <= a_max} |N_a| G_a^b(t)`: total mass at time `t` released from a
/// unit density on shell `b`, relative to `|N_b|`. Equals 1 when
/// `beta = gamma`. See [`mass_horizon`] for a safe `a_max`.
pub fn shell_mass(eval: &GreenEvaluator, b: u32, t: f64, a_max: u32) -> Result<f64> {
    let xi = eval.params.xi;
    let mut total = 0.0;
    for a in 0..=a_max {
        total += shell_size_f64(xi, a) * eval.green(a, b, t)?;
    }
    Ok(total / shell_size_f64(xi, b))
}

/// The shell generator `h` on a truncated range of shells.
#[derive(Clone, Copy, Debug)]
pub struct ShellGenerator {
    pub params: SpectralParams,
}

impl ShellGenerator {
    pub fn new(params: SpectralParams) -> ShellGenerator {
        ShellGenerator { params }
    }

    /// Matrix entry `h_a^b`.
    pub fn entry(&self, a: usize, b: usize) -> f64 {
        let (beta, gamma, xi) = (self.params.beta, self.params.gamma, self.params.xi as f64);
        if a == 0 {
            return match b {
                0 => -gamma * xi,
                1 => beta * xi,
                _ => 0.0,
            };
        }
        if b + 1 == a {
            beta
        } else if b == a {
            -gamma * xi
        } else if b == a + 1 {
            beta * (xi - 1.0)
        } else {
            0.0
        }
    }

    /// `out = h v` with `v_b = 0` beyond the end of the slice.
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        let n = v.len();
        let (beta, gamma, xi) = (self.params.beta, self.params.gamma, self.params.xi as f64);
        for a in 0..n {
            let next = if a + 1 < n { v[a + 1] } else { 0.0 };
            out[a] = if a == 0 {
                -gamma * xi * v[0] + beta * xi * next
            } else {
                beta * v[a - 1] - gamma * xi * v[a] + beta * (xi - 1.0) * next
            };
        }
    }

    /// Max absolute row sum, a bound on the spectral radius.
    pub fn norm_bound(&self) -> f64 {
        let xi = self.params.xi as f64;
        self.params.gamma.abs() * xi + self.params.beta.abs() * xi
    }
}
