//! Two-site rate models and the closed density equation they induce.
//!
//! A link between neighbouring sites `i` and `j` in joint state `(n_i, n_j)`
//! jumps to `(l, k)` with rate `H[(l,k) <- (n_i,n_j)]`. The model is
//! autonomous when the mean occupations obey
//!
//! ```text
//! d<n_i>/dt = alpha * deg(i) + sum_{j ~ i} (beta <n_j> - gamma <n_i>)
//! ```
//!
//! with no two-point terms.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Joint state of an ordered pair of sites, `(left, right)` with each entry
/// 0 (vacant) or 1 (occupied).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pair(u8);

impl Pair {
    pub const EMPTY: Pair = Pair(0b00);
    pub const RIGHT: Pair = Pair(0b01);
    pub const LEFT: Pair = Pair(0b10);
    pub const FULL: Pair = Pair(0b11);
    pub const ALL: [Pair; 4] = [Pair::EMPTY, Pair::RIGHT, Pair::LEFT, Pair::FULL];

    pub fn new(left: u8, right: u8) -> Pair {
        assert!(left <= 1 && right <= 1, "site states are 0 or 1");
        Pair(left << 1 | right)
    }

    pub fn left(self) -> u8 {
        self.0 >> 1
    }

    pub fn right(self) -> u8 {
        self.0 & 1
    }

    /// Index in `0..4`, equal to `2 * left + right`.
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn from_index(i: usize) -> Pair {
        assert!(i < 4);
        Pair(i as u8)
    }

    /// The same link read from the other end.
    pub fn swapped(self) -> Pair {
        Pair::new(self.right(), self.left())
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.left(), self.right())
    }
}

/// An off-diagonal two-site transition `from -> to`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Transition {
    pub from: Pair,
    pub to: Pair,
}

impl Transition {
    pub fn new(from: Pair, to: Pair) -> Transition {
        Transition { from, to }
    }

    /// The transition seen from the other end of the link.
    pub fn mirror(self) -> Transition {
        Transition::new(self.from.swapped(), self.to.swapped())
    }

    /// All twelve off-diagonal transitions, ordered by source then target.
    pub fn all() -> impl Iterator<Item = Transition> {
        Pair::ALL.into_iter().flat_map(|from| {
            Pair::ALL
                .into_iter()
                .filter(move |&to| to != from)
                .map(move |to| Transition::new(from, to))
        })
    }

    fn slot(self) -> usize {
        self.from.index() * 4 + self.to.index()
    }
}

/// Formats as the rate-file key `"lk<-nm"`.
impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}<-{}", self.to, self.from)
    }
}

impl FromStr for Transition {
    type Err = Error;

    fn from_str(key: &str) -> Result<Transition> {
        let bad = |reason| Error::RateKey {
            key: key.to_string(),
            reason,
        };
        let (to, from) = key
            .split_once("<-")
            .ok_or_else(|| bad("expected the form \"lk<-nm\""))?;
        let parse_pair = |s: &str| -> Result<Pair> {
            let b = s.as_bytes();
            if b.len() != 2 {
                return Err(bad("each side must have exactly two site states"));
            }
            let digit = |c: u8| match c {
                b'0' => Ok(0),
                b'1' => Ok(1),
                _ => Err(bad("site states must be 0 or 1")),
            };
            Ok(Pair::new(digit(b[0])?, digit(b[1])?))
        };
        let (to, from) = (parse_pair(to.trim())?, parse_pair(from.trim())?);
        if to == from {
            return Err(bad("diagonal transitions are not rates"));
        }
        Ok(Transition::new(from, to))
    }
}

/// The twelve link rates of a model together with the coordination number.
#[derive(Clone, Debug, PartialEq)]
pub struct RateModel {
    xi: u32,
    rates: [f64; 16],
}

impl RateModel {
    /// A model with every rate zero.
    pub fn zero(xi: u32) -> Result<RateModel> {
        if xi < 2 {
            return Err(Error::Coordination(xi));
        }
        Ok(RateModel {
            xi,
            rates: [0.0; 16],
        })
    }

    /// Sets one rate. Negative values are stored as given and rejected by
    /// [`RateModel::validate_symmetry`].
    pub fn with(mut self, t: Transition, rate: f64) -> RateModel {
        self.set(t, rate);
        self
    }

    pub fn set(&mut self, t: Transition, rate: f64) {
        assert_ne!(t.from, t.to);
        self.rates[t.slot()] = rate;
    }

    /// Hopping in both directions with rate `d`.
    pub fn pure_diffusion(xi: u32, d: f64) -> Result<RateModel> {
        Ok(RateModel::zero(xi)?
            .with(Transition::new(Pair::LEFT, Pair::RIGHT), d)
            .with(Transition::new(Pair::RIGHT, Pair::LEFT), d))
    }

    /// Pair annihilation `11 -> 00` and pair creation `00 -> 11`, both with
    /// rate `lambda`.
    pub fn annihilation_creation(xi: u32, lambda: f64) -> Result<RateModel> {
        Ok(RateModel::zero(xi)?
            .with(Transition::new(Pair::FULL, Pair::EMPTY), lambda)
            .with(Transition::new(Pair::EMPTY, Pair::FULL), lambda))
    }

    pub fn xi(&self) -> u32 {
        self.xi
    }

    pub fn with_xi(mut self, xi: u32) -> Result<RateModel> {
        if xi < 2 {
            return Err(Error::Coordination(xi));
        }
        self.xi = xi;
        Ok(self)
    }

    pub fn rate(&self, t: Transition) -> f64 {
        self.rates[t.slot()]
    }

    /// `H[to <- from]` addressed by pair states.
    pub fn h(&self, from: Pair, to: Pair) -> f64 {
        if from == to {
            0.0
        } else {
            self.rates[from.index() * 4 + to.index()]
        }
    }

    /// Total rate of leaving `from`.
    pub fn exit_rate(&self, from: Pair) -> f64 {
        Pair::ALL.iter().map(|&to| self.h(from, to)).sum()
    }

    pub fn is_frozen(&self) -> bool {
        Transition::all().all(|t| self.rate(t) == 0.0)
    }

    fn check_nonnegative(&self) -> Result<()> {
        for t in Transition::all() {
            let r = self.rate(t);
            if !r.is_finite() {
                return Err(Error::NonFiniteRate { transition: t });
            }
            if r < 0.0 {
                return Err(Error::NegativeRate {
                    transition: t,
                    rate: r,
                });
            }
        }
        Ok(())
    }

    /// Checks nonnegativity and link symmetry `H[lk<-nm] = H[kl<-mn]`.
    ///
    /// Rates are user inputs, so symmetry is compared with exact equality.
    pub fn validate_symmetry(&self) -> Result<SymmetryReport> {
        self.check_nonnegative()?;
        let violations = Transition::all()
            .filter(|t| *t < t.mirror())
            .filter(|t| self.rate(*t) != self.rate(t.mirror()))
            .map(|t| SymmetryViolation {
                transition: t,
                mirror: t.mirror(),
                rate: self.rate(t),
                mirror_rate: self.rate(t.mirror()),
            })
            .collect();
        Ok(SymmetryReport { violations })
    }

    /// Residual of the autonomy criterion: the coefficient of `<n_i n_j>`
    /// in the per-link density balance, written for symmetric rates.
    pub fn check_autonomy(&self) -> AutonomyReport {
        let h = |to: Pair, from: Pair| self.h(from, to);
        let lhs =
            h(Pair::EMPTY, Pair::FULL) + h(Pair::FULL, Pair::RIGHT) + h(Pair::RIGHT, Pair::FULL);
        let rhs =
            h(Pair::FULL, Pair::EMPTY) + h(Pair::EMPTY, Pair::LEFT) + h(Pair::LEFT, Pair::EMPTY);
        AutonomyReport {
            residual: lhs - rhs,
        }
    }

    /// Closed-equation coefficients; requires symmetric rates and an exact
    /// autonomy residual of zero.
    pub fn derive_coefficients(&self) -> Result<Coefficients> {
        self.derive_coefficients_with_tol(0.0)
    }

    /// As [`RateModel::derive_coefficients`] but accepts an autonomy residual
    /// up to `tol` in absolute value, for rates that come from a fit.
    pub fn derive_coefficients_with_tol(&self, tol: f64) -> Result<Coefficients> {
        let report = self.validate_symmetry()?;
        if !report.is_ok() {
            return Err(Error::Asymmetric(report.to_string()));
        }
        let autonomy = self.check_autonomy();
        if !autonomy.is_autonomous(tol) {
            return Err(Error::NotAutonomous {
                residual: autonomy.residual,
            });
        }
        let c = self.closure_coefficients();
        c.check_constraints(self.scale())?;
        if let Stationary::Value(rho) = c.stationary {
            if !(0.0..=1.0).contains(&rho) {
                log::warn!("stationary density {rho} lies outside [0, 1]");
            }
        }
        Ok(c)
    }

    fn scale(&self) -> f64 {
        self.rates.iter().map(|r| r.abs()).sum()
    }

    /// Coefficients of the linear part of the per-link balance, without any
    /// validation. For non-autonomous models these define the (wrong) closed
    /// equation obtained by dropping the two-point term.
    pub fn closure_coefficients(&self) -> Coefficients {
        let h = |to: Pair, from: Pair| self.h(from, to);
        let alpha = h(Pair::FULL, Pair::EMPTY) + h(Pair::LEFT, Pair::EMPTY);
        let beta = h(Pair::RIGHT, Pair::LEFT) + h(Pair::FULL, Pair::LEFT) - alpha;
        let gamma = h(Pair::RIGHT, Pair::LEFT) + h(Pair::EMPTY, Pair::RIGHT) + alpha;
        Coefficients::new(self.xi, alpha, beta, gamma)
    }
}

/// One asymmetric pair of rates.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SymmetryViolation {
    #[serde(serialize_with = "ser_display")]
    pub transition: Transition,
    #[serde(serialize_with = "ser_display")]
    pub mirror: Transition,
    pub rate: f64,
    pub mirror_rate: f64,
}

impl fmt::Display for SymmetryViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} = {} but {} = {}",
            self.transition, self.rate, self.mirror, self.mirror_rate
        )
    }
}

fn ser_display<S: serde::Serializer>(t: &Transition, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(t)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SymmetryReport {
    pub violations: Vec<SymmetryViolation>,
}

impl SymmetryReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for SymmetryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "symmetric");
        }
        for (k, v) in self.violations.iter().enumerate() {
            if k > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AutonomyReport {
    pub residual: f64,
}

impl AutonomyReport {
    pub fn is_autonomous(&self, tol: f64) -> bool {
        self.residual.abs() <= tol
    }
}

/// Stationary uniform density of the closed equation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stationary {
    Value(f64),
    /// `gamma == beta`: every uniform density is stationary and the total
    /// density is conserved.
    Conserved,
}

/// Coefficients of the closed density equation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Coefficients {
    pub xi: u32,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// `ln(xi - 1) / 2`.
    pub eta: f64,
    pub stationary: Stationary,
}

impl Coefficients {
    /// Builds coefficients directly, bypassing the rate model. Useful when
    /// only the closed equation matters.
    pub fn new(xi: u32, alpha: f64, beta: f64, gamma: f64) -> Coefficients {
        let stationary = if gamma == beta {
            Stationary::Conserved
        } else {
            Stationary::Value(alpha / (gamma - beta))
        };
        Coefficients {
            xi,
            alpha,
            beta,
            gamma,
            eta: eta(xi),
            stationary,
        }
    }

    /// Density subtracted to obtain the dynamic part. A conserved model on
    /// the infinite tree relaxes to zero for any finitely supported excess,
    /// so zero is used there.
    pub fn reference_density(&self) -> f64 {
        match self.stationary {
            Stationary::Value(rho) => rho,
            Stationary::Conserved => 0.0,
        }
    }

    fn check_constraints(&self, scale: f64) -> Result<()> {
        let slack = 1e-12 * scale;
        let (alpha, beta, gamma) = (self.alpha, self.beta, self.gamma);
        let checks: [(&'static str, bool); 4] = [
            ("alpha >= 0", alpha >= -slack),
            ("beta >= -alpha", beta >= -alpha - slack),
            ("gamma >= alpha", gamma >= alpha - slack),
            ("gamma >= alpha + beta", gamma >= alpha + beta - slack),
        ];
        for (constraint, ok) in checks {
            if !ok {
                return Err(Error::Consistency {
                    constraint,
                    alpha,
                    beta,
                    gamma,
                });
            }
        }
        Ok(())
    }
}

/// `ln(xi - 1) / 2`, exactly zero for the chain.
pub fn eta(xi: u32) -> f64 {
    if xi == 2 {
        0.0
    } else {
        0.5 * ((xi - 1) as f64).ln()
    }
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RateFile {
    xi: u32,
    #[serde(default)]
    rates: BTreeMap<String, f64>,
}

impl RateModel {
    /// Parses the JSON rate file `{"xi": 3, "rates": {"10<-01": 1.0, ...}}`.
    /// Missing rates are zero.
    pub fn from_json_str(s: &str) -> Result<RateModel> {
        let file: RateFile = serde_json::from_str(s)?;
        let mut model = RateModel::zero(file.xi)?;
        for (key, rate) in file.rates {
            model.set(key.parse()?, rate);
        }
        Ok(model)
    }

    /// Serializes the nonzero rates in rate-file form.
    pub fn to_json_string(&self) -> String {
        let rates = Transition::all()
            .filter(|t| self.rate(*t) != 0.0)
            .map(|t| (t.to_string(), self.rate(t)))
            .collect();
        serde_json::to_string_pretty(&RateFile { xi: self.xi, rates })
            .expect("rate file serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tr(key: &str) -> Transition {
        key.parse().unwrap()
    }

    #[test]
    fn diffusion_is_symmetric() {
        let m = RateModel::pure_diffusion(3, 1.0).unwrap();
        assert!(m.validate_symmetry().unwrap().is_ok());
    }

    #[test]
    fn one_sided_hop_is_reported() {
        let m = RateModel::zero(3).unwrap().with(tr("01<-10"), 1.0);
        let report = m.validate_symmetry().unwrap();
        assert_eq!(report.violations.len(), 1);
        let v = &report.violations[0];
        let pair = [v.transition, v.mirror];
        assert!(pair.contains(&tr("01<-10")));
        assert!(pair.contains(&tr("10<-01")));
    }

    #[test]
    fn self_mirrored_entry_is_symmetric() {
        let m = RateModel::zero(3).unwrap().with(tr("11<-00"), 1.0);
        assert_eq!(tr("11<-00").mirror(), tr("11<-00"));
        assert!(m.validate_symmetry().unwrap().is_ok());
    }

    #[test]
    fn negative_rate_names_the_entry() {
        let m = RateModel::zero(3).unwrap().with(tr("00<-11"), -0.5);
        match m.validate_symmetry() {
            Err(Error::NegativeRate { transition, .. }) => {
                assert_eq!(transition.to_string(), "00<-11")
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn autonomy_residuals() {
        let d = RateModel::pure_diffusion(3, 1.0).unwrap();
        assert_eq!(d.check_autonomy().residual, 0.0);
        let ac = RateModel::annihilation_creation(3, 1.0).unwrap();
        assert_eq!(ac.check_autonomy().residual, 0.0);
        let a = RateModel::zero(3).unwrap().with(tr("00<-11"), 1.0);
        assert_eq!(a.check_autonomy().residual, 1.0);
        assert!(matches!(
            a.derive_coefficients(),
            Err(Error::NotAutonomous { .. })
        ));
    }

    #[test]
    fn coefficients_annihilation_creation() {
        let c = RateModel::annihilation_creation(3, 1.0)
            .unwrap()
            .derive_coefficients()
            .unwrap();
        assert_eq!((c.alpha, c.beta, c.gamma), (1.0, -1.0, 1.0));
        assert!((c.eta - 0.5 * 2f64.ln()).abs() < 1e-15);
        assert!((c.eta - 0.346574).abs() < 1e-6);
        assert_eq!(c.stationary, Stationary::Value(0.5));
    }

    #[test]
    fn coefficients_pure_diffusion_and_frozen() {
        let c = RateModel::pure_diffusion(2, 0.7)
            .unwrap()
            .derive_coefficients()
            .unwrap();
        assert_eq!((c.alpha, c.beta, c.gamma, c.eta), (0.0, 0.7, 0.7, 0.0));
        assert_eq!(c.stationary, Stationary::Conserved);

        let z = RateModel::zero(4).unwrap().derive_coefficients().unwrap();
        assert_eq!((z.alpha, z.beta, z.gamma), (0.0, 0.0, 0.0));
        assert_eq!(z.stationary, Stationary::Conserved);
    }

    #[test]
    fn rate_file_parsing() {
        let m =
            RateModel::from_json_str(r#"{"xi": 3, "rates": {"00<-11": 1, "11<-00": 1}}"#).unwrap();
        assert_eq!(m, RateModel::annihilation_creation(3, 1.0).unwrap());
        assert!(RateModel::from_json_str(r#"{"xi": 3, "rates": {"12<-01": 1}}"#).is_err());
        assert!(RateModel::from_json_str(r#"{"xi": 3, "rates": {"01<-01": 1}}"#).is_err());
        assert!(RateModel::from_json_str(r#"{"xi": 3, "extra": 1}"#).is_err());
        assert!(RateModel::from_json_str(r#"{"xi": 1}"#).is_err());
        let back = RateModel::from_json_str(&m.to_json_string()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn twelve_transitions() {
        assert_eq!(Transition::all().count(), 12);
        for t in Transition::all() {
            assert_eq!(t.to_string().parse::<Transition>().unwrap(), t);
            assert_eq!(t.mirror().mirror(), t);
        }
    }

    /// Symmetric rates that satisfy the autonomy criterion, built by choosing
    /// the free rates and solving for one of the six criterion terms.
    fn autonomous_model() -> impl Strategy<Value = RateModel> {
        (
            2u32..7,
            prop::collection::vec(0.0f64..3.0, 9),
            any::<bool>(),
        )
            .prop_map(|(xi, r, side)| {
                let mut m = RateModel::zero(xi).unwrap();
                let mut sym = |key: &str, v: f64| {
                    let t = tr(key);
                    m.set(t, v);
                    m.set(t.mirror(), v);
                };
                sym("01<-10", r[0]);
                sym("00<-10", r[1]);
                sym("11<-10", r[2]);
                sym("10<-00", r[3]);
                sym("01<-11", r[4]);
                sym("11<-00", r[5]);
                sym("00<-11", r[6]);
                // balance: 00<-11 + 11<-01 + 01<-11 = 11<-00 + 00<-10 + 10<-00
                let lhs = r[6] + r[2] + r[4];
                let rhs = r[5] + r[1] + r[3];
                if lhs > rhs {
                    let extra = if side { "11<-00" } else { "10<-00" };
                    let t = tr(extra);
                    let v = m.rate(t) + (lhs - rhs);
                    m.set(t, v);
                    m.set(t.mirror(), v);
                } else {
                    let t = tr("00<-11");
                    m.set(t, r[6] + (rhs - lhs));
                }
                m
            })
    }

    proptest! {
        #[test]
        fn valid_models_satisfy_constraints(m in autonomous_model()) {
            let residual = m.check_autonomy().residual;
            let c = m.derive_coefficients_with_tol(1e-12).unwrap();
            let slack = 1e-12;
            prop_assert!(residual.abs() < 1e-12);
            prop_assert!(c.alpha >= 0.0);
            prop_assert!(c.beta >= -c.alpha - slack);
            prop_assert!(c.gamma >= c.alpha - slack);
            prop_assert!(c.gamma >= c.alpha + c.beta - slack);
            if let Stationary::Value(rho) = c.stationary {
                prop_assert!((-1e-12..=1.0 + 1e-12).contains(&rho));
                let xi = c.xi as f64;
                let rhs = c.alpha * xi + xi * (c.beta - c.gamma) * rho;
                prop_assert!(rhs.abs() <= 1e-14 * (1.0 + c.alpha * xi));
            }
        }

        #[test]
        fn autonomy_scales_linearly(m in autonomous_model(), c in 0.01f64..100.0, k in 0usize..12) {
            // perturb one rate so the residual is generically nonzero
            let t = Transition::all().nth(k).unwrap();
            let m = m.clone().with(t, m.rate(t) + 0.25);
            let mut scaled = m.clone();
            for t in Transition::all() {
                scaled.set(t, c * m.rate(t));
            }
            let r0 = m.check_autonomy().residual;
            let r1 = scaled.check_autonomy().residual;
            prop_assert!((r1 - c * r0).abs() <= 1e-12 * c * (1.0 + r0.abs()) * 10.0);
            prop_assert_eq!(r0.abs() < 1e-9, r1.abs() < 1e-9 * c);
        }
    }
}
