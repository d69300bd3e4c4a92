//! Deterministic density evolution.
//!
//! Three solvers share one generator:
//!
//! * [`evolve_site_ode`] integrates every site of a finite tree, using the
//!   true degree of each site, so leaves feel a single link;
//! * [`evolve_shell_ode`] integrates the shell equation of the infinite tree,
//!   truncated at a shell `a_max` beyond which the dynamic part is zero;
//! * [`solve_green`] and [`step_profile_solution`] convolve the initial
//!   profile with the exact Green's function.
//!
//! Public results are full densities. Per-shell fields list shells
//! `0..values.len()`; shells beyond the list sit at the reference density
//! (the stationary density, or zero for a conserved model).

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::lattice::TruncatedTree;
use crate::model::{Coefficients, RateModel};
use crate::ode::{integrate, LinearRhs};
use crate::par::{for_each_chunk_mut, Execution};
use crate::spectral::{shell_horizon, GreenEvaluator, GreenValue, ShellGenerator, SpectralParams};
use crate::{Error, Result};

/// Relative accuracy every ODE solve is driven to.
pub const ODE_REL_TOL: f64 = 1e-10;
/// Largest dynamic density allowed on the truncation shell.
pub const LEAKAGE_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    PerSite,
    PerShell,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityField {
    pub kind: FieldKind,
    pub values: Vec<f64>,
    pub time: f64,
}

impl DensityField {
    pub fn per_site(values: Vec<f64>) -> DensityField {
        DensityField {
            kind: FieldKind::PerSite,
            values,
            time: 0.0,
        }
    }

    pub fn per_shell(values: Vec<f64>) -> DensityField {
        DensityField {
            kind: FieldKind::PerShell,
            values,
            time: 0.0,
        }
    }

    /// Value on shell `a`, or `background` beyond the listed shells.
    pub fn shell_value(&self, a: usize, background: f64) -> f64 {
        self.values.get(a).copied().unwrap_or(background)
    }

    /// Spreads a per-shell profile onto the sites of a tree.
    pub fn to_sites(&self, tree: &TruncatedTree, background: f64) -> DensityField {
        assert_eq!(self.kind, FieldKind::PerShell);
        let values = tree
            .shells()
            .iter()
            .map(|&a| self.shell_value(a as usize, background))
            .collect();
        DensityField {
            kind: FieldKind::PerSite,
            values,
            time: self.time,
        }
    }

    /// Mean over each shell of a per-site field.
    pub fn shell_means(&self, tree: &TruncatedTree) -> DensityField {
        assert_eq!(self.kind, FieldKind::PerSite);
        let values = (0..=tree.depth())
            .map(|a| {
                let r = tree.shell_range(a);
                let n = r.len() as f64;
                self.values[r].iter().sum::<f64>() / n
            })
            .collect();
        DensityField {
            kind: FieldKind::PerShell,
            values,
            time: self.time,
        }
    }

    /// True when every value lies in `[-tol, 1 + tol]`.
    pub fn is_physical(&self, tol: f64) -> bool {
        self.values.iter().all(|v| (-tol..=1.0 + tol).contains(v))
    }
}

/// Dynamic part equal to `height` on shells `0..=radius` and zero outside.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepProfile {
    pub height: f64,
    pub radius: u32,
}

impl StepProfile {
    /// The full-density per-shell field of this profile.
    pub fn field(&self, coeffs: &Coefficients) -> DensityField {
        let rho = coeffs.reference_density();
        DensityField::per_shell(vec![rho + self.height; self.radius as usize + 1])
    }
}

/// Initial condition as read from a profile file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialProfile {
    Step { step: StepProfile },
    Shells { kind: FieldKind, values: Vec<f64> },
}

impl InitialProfile {
    pub fn from_json_str(s: &str) -> Result<InitialProfile> {
        let p: InitialProfile = serde_json::from_str(s)?;
        if let InitialProfile::Shells { kind, .. } = &p {
            if *kind != FieldKind::PerShell {
                return Err(Error::Invalid("initial profiles must be per-shell".into()));
            }
        }
        Ok(p)
    }

    pub fn field(&self, coeffs: &Coefficients) -> DensityField {
        match self {
            InitialProfile::Step { step } => step.field(coeffs),
            InitialProfile::Shells { values, .. } => DensityField::per_shell(values.clone()),
        }
    }
}

struct SiteSystem<'a> {
    tree: &'a TruncatedTree,
    alpha: f64,
    beta: f64,
    gamma: f64,
}

const SITE_CHUNK: usize = 4096;

impl LinearRhs for SiteSystem<'_> {
    fn dim(&self) -> usize {
        self.tree.sites()
    }

    fn eval(&self, y: &[f64], dy: &mut [f64], exec: Execution) {
        let exec = if y.len() > SITE_CHUNK {
            exec
        } else {
            Execution::Sequential
        };
        for_each_chunk_mut(exec, dy, SITE_CHUNK, |start, out| {
            for (k, slot) in out.iter_mut().enumerate() {
                let i = start + k;
                let nbrs = self.tree.neighbors(i);
                let deg = nbrs.len() as f64;
                let sum: f64 = nbrs.iter().map(|&j| y[j as usize]).sum();
                *slot = self.alpha * deg + self.beta * sum - self.gamma * deg * y[i];
            }
        });
    }

    fn norm_bound(&self) -> f64 {
        (self.beta.abs() + self.gamma.abs()) * self.tree.xi() as f64
    }
}

/// Integrates the closed site equation
/// `d rho_i/dt = alpha deg(i) + sum_{j ~ i} (beta rho_j - gamma rho_i)`
/// on a finite tree. The model must be autonomous and the initial densities
/// physical.
pub fn evolve_site_ode(
    model: &RateModel,
    tree: &TruncatedTree,
    init: &DensityField,
    t: f64,
    exec: Execution,
) -> Result<DensityField> {
    let coeffs = model.derive_coefficients()?;
    if !init.is_physical(0.0) {
        return Err(Error::Invalid(
            "initial densities must lie in [0, 1]".into(),
        ));
    }
    evolve_site_equation(&coeffs, tree, init, t, exec)
}

/// The site equation for arbitrary coefficients, without model checks.
pub fn evolve_site_equation(
    coeffs: &Coefficients,
    tree: &TruncatedTree,
    init: &DensityField,
    t: f64,
    exec: Execution,
) -> Result<DensityField> {
    if init.kind != FieldKind::PerSite || init.values.len() != tree.sites() {
        return Err(Error::Invalid(format!(
            "expected a per-site field of {} values",
            tree.sites()
        )));
    }
    let sys = SiteSystem {
        tree,
        alpha: coeffs.alpha,
        beta: coeffs.beta,
        gamma: coeffs.gamma,
    };
    let values = integrate(&sys, &init.values, t, ODE_REL_TOL, exec)?;
    Ok(DensityField {
        kind: FieldKind::PerSite,
        values,
        time: init.time + t,
    })
}

struct ShellSystem(ShellGenerator, usize);

impl LinearRhs for ShellSystem {
    fn dim(&self) -> usize {
        self.1
    }

    fn eval(&self, y: &[f64], dy: &mut [f64], _: Execution) {
        self.0.apply(y, dy);
    }

    fn norm_bound(&self) -> f64 {
        self.0.norm_bound()
    }
}

/// Shell-equation solver with its truncation policy.
#[derive(Clone, Copy, Debug)]
pub struct ShellSolver {
    /// Last shell kept; `None` picks the ballistic reach plus 40 shells, and
    /// never less than the initial support plus 40.
    pub a_max: Option<usize>,
    /// Largest dynamic density tolerated on the last shell; `None` disables
    /// the check (for profiles that are not finitely supported).
    pub leakage_tol: Option<f64>,
    /// Return the dynamic part instead of the full density.
    pub dynamic: bool,
}

impl Default for ShellSolver {
    fn default() -> Self {
        ShellSolver {
            a_max: None,
            leakage_tol: Some(LEAKAGE_TOL),
            dynamic: false,
        }
    }
}

impl ShellSolver {
    pub fn evolve(
        &self,
        coeffs: &Coefficients,
        init: &DensityField,
        t: f64,
    ) -> Result<DensityField> {
        if init.kind != FieldKind::PerShell {
            return Err(Error::Invalid(
                "shell solver needs a per-shell field".into(),
            ));
        }
        let params = SpectralParams::from_coefficients(coeffs);
        let rho_ref = coeffs.reference_density();
        let support = init.values.len();
        let a_max = self
            .a_max
            .unwrap_or_else(|| shell_horizon(&params, t).max(support + 40));
        let y0: Vec<f64> = (0..=a_max)
            .map(|a| init.shell_value(a, rho_ref) - rho_ref)
            .collect();
        let sys = ShellSystem(ShellGenerator::new(params), a_max + 1);
        let mut y = integrate(&sys, &y0, t, ODE_REL_TOL, Execution::Sequential)?;
        if let Some(tol) = self.leakage_tol {
            let edge = y[a_max];
            if edge.abs() > tol {
                return Err(Error::Leakage { a_max, value: edge });
            }
        }
        if !self.dynamic {
            y.iter_mut().for_each(|v| *v += rho_ref);
        }
        Ok(DensityField {
            kind: FieldKind::PerShell,
            values: y,
            time: init.time + t,
        })
    }
}

/// Shell equation on the infinite tree with the default leakage guard.
pub fn evolve_shell_ode(
    coeffs: &Coefficients,
    init: &DensityField,
    t: f64,
    a_max: Option<usize>,
) -> Result<DensityField> {
    ShellSolver {
        a_max,
        ..Default::default()
    }
    .evolve(coeffs, init, t)
}

fn check_evaluator(eval: &GreenEvaluator, coeffs: &Coefficients) -> Result<()> {
    let p = SpectralParams::from_coefficients(coeffs);
    if p.xi != eval.params.xi || p.beta != eval.params.beta || p.gamma != eval.params.gamma {
        return Err(Error::Invalid(
            "Green's evaluator does not match the coefficients".into(),
        ));
    }
    Ok(())
}

/// Density on shell `a` at time `t` as `rho_ref + sum_b G_a^b(t) rho^dy_b(0)`.
pub fn solve_green(
    eval: &GreenEvaluator,
    coeffs: &Coefficients,
    init: &DensityField,
    a: u32,
    t: f64,
) -> Result<f64> {
    check_evaluator(eval, coeffs)?;
    if init.kind != FieldKind::PerShell {
        return Err(Error::Invalid(
            "Green's solver needs a per-shell field".into(),
        ));
    }
    let rho_ref = coeffs.reference_density();
    let mut sum = 0.0;
    for (b, &v) in init.values.iter().enumerate() {
        let dy = v - rho_ref;
        if dy != 0.0 {
            sum += eval.green(a, b as u32, t)? * dy;
        }
    }
    Ok(rho_ref + sum)
}

/// `sum_{b=0}^{r} z^b`, switching to direct summation near `z = 1`.
fn geometric_sum(z: Complex64, r: u32) -> Complex64 {
    if (z - 1.0).norm() < 1e-2 {
        let mut acc = Complex64::new(0.0, 0.0);
        let mut p = Complex64::new(1.0, 0.0);
        for _ in 0..=r {
            acc += p;
            p *= z;
        }
        acc
    } else {
        (z.powu(r + 1) - 1.0) / (z - 1.0)
    }
}

/// Dynamic part on shell `a` for a step profile, with the sum over the
/// initial shells carried out inside the integral:
///
/// ```text
/// rho^dy_a(t) = height/(2 pi) e^{-a eta - gamma xi t} ∫ e^{i a θ} [S_-(θ) + R(θ) S_+(θ) - (1 + R(θ))/xi] e^{κ cos θ} dθ
/// ```
///
/// with `S_±(θ) = sum_{b<=r} e^{b(eta ± iθ)}`.
pub fn step_profile_dynamic(
    eval: &GreenEvaluator,
    profile: &StepProfile,
    a: u32,
    t: f64,
) -> Result<GreenValue> {
    if !(t >= 0.0) {
        return Err(Error::Invalid(format!("time must be nonnegative, got {t}")));
    }
    let p = eval.params;
    let kappa = p.hop_rate() * t;
    let xi = p.xi as f64;
    let r = profile.radius;
    let quad = crate::quadrature::PeriodicQuadrature {
        min_nodes: eval
            .quad
            .min_nodes
            .max((4 * (a as u64 + r as u64 + 1)).next_power_of_two() as usize),
        ..eval.quad
    };
    let res = quad.integrate(|theta| {
        let minus = geometric_sum(Complex64::new(p.eta, -theta).exp(), r);
        let plus = geometric_sum(Complex64::new(p.eta, theta).exp(), r);
        let refl = p.reflection(theta);
        let bracket = minus + refl * plus - (refl + 1.0) / xi;
        Complex64::new(0.0, a as f64 * theta).exp()
            * bracket
            * (kappa * theta.cos() - kappa.abs()).exp()
    })?;
    if res.value.im.abs() > eval.quad.rel_tol.max(1e-13) * res.abs_integral {
        return Err(Error::ImaginaryResidual {
            imag: res.value.im,
            scale: res.abs_integral,
        });
    }
    Ok(GreenValue {
        log_prefactor: (profile.height.abs() / (2.0 * PI)).ln()
            - a as f64 * p.eta
            - p.gamma * xi * t
            + kappa.abs(),
        integral: res.value.re * profile.height.signum(),
    })
}

/// Full density on shell `a` at time `t` for a step profile.
pub fn step_profile_solution(
    eval: &GreenEvaluator,
    coeffs: &Coefficients,
    profile: &StepProfile,
    a: u32,
    t: f64,
) -> Result<f64> {
    check_evaluator(eval, coeffs)?;
    if profile.height == 0.0 {
        return Ok(coeffs.reference_density());
    }
    Ok(coeffs.reference_density() + step_profile_dynamic(eval, profile, a, t)?.value())
}

/// Bound on how much the finite-tree boundary can change the density on shell
/// `probe` by time `t`, per unit of initial dynamic density supported on
/// shells `<= support`.
///
/// The difference between finite and infinite evolution is carried by paths
/// of the series for `exp(t h)` that reach the last shell, which take at
/// least `(depth - probe) + (depth - support)` steps; the bound is the
/// Poisson tail of that many steps at the generator's off-diagonal rate.
pub fn boundary_influence_bound(
    coeffs: &Coefficients,
    depth: u32,
    probe: u32,
    support: u32,
    t: f64,
) -> f64 {
    if probe >= depth || support >= depth {
        return f64::INFINITY;
    }
    let xi = coeffs.xi as f64;
    let (beta, gamma) = (coeffs.beta.abs(), coeffs.gamma.abs());
    let rate = (beta * xi).max(beta + gamma * (xi - 1.0));
    let steps = (depth - probe + depth - support) as u64;
    2.0 * ((rate - gamma * xi) * t).exp() * poisson_tail(rate * t, steps)
}

/// `P(N >= k)` for `N ~ Poisson(mean)`, summed upward from `k`.
pub fn poisson_tail(mean: f64, k: u64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if mean <= 0.0 {
        return 0.0;
    }
    let ln_first = -mean + k as f64 * mean.ln() - ln_factorial(k);
    let mut term = ln_first.exp();
    let mut total = term;
    let mut j = k;
    while term > total * 1e-17 || (j as f64) < mean {
        j += 1;
        term *= mean / j as f64;
        total += term;
        if j > k + 100_000 {
            break;
        }
    }
    total.min(1.0)
}

fn ln_factorial(k: u64) -> f64 {
    (1..=k).map(|j| (j as f64).ln()).sum()
}
