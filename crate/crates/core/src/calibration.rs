//! Moving between the p-domain and the e-domain.
//!
//! p-to-e calibrators are interchangeable strategies behind [`Calibrator`] and
//! are looked up by spec string (`shafer`, `power:0.5`) in a
//! [`CalibratorRegistry`]. The way back is the single map `e ↦ min(1, 1/e)`.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::space::{expectation, grid_p_variable, FiniteSpace, RandomVariable};
use crate::{EvalError, Result, DEFAULT_TOL};

/// Panels used by the midpoint rule in [`validate_calibrator`].
pub const DEFAULT_PANELS: usize = 100_000;

/// A nonincreasing map from p-values in `(0, 1]` to e-values whose integral
/// over `[0, 1]` is at most 1.
pub trait Calibrator: fmt::Debug + Send + Sync {
    /// Spec string that the registry parses back into this calibrator.
    fn spec(&self) -> String;

    fn calibrate(&self, p: f64) -> Result<f64>;

    /// Closed-form `∫₀¹ f(p) dp`, when known.
    fn analytic_integral(&self) -> Option<f64> {
        None
    }
}

fn check_p(p: f64) -> Result<()> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(EvalError::domain(format!("p-value {p} outside (0, 1]")))
    }
}

/// `1/√p − 1`.
pub fn shafer_calibrate(p: f64) -> Result<f64> {
    check_p(p)?;
    Ok(1.0 / p.sqrt() - 1.0)
}

/// `κ·p^(κ−1)` for `0 < κ < 1`.
pub fn power_calibrate(kappa: f64, p: f64) -> Result<f64> {
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(EvalError::domain(format!("kappa {kappa} outside (0, 1)")));
    }
    check_p(p)?;
    Ok(kappa * p.powf(kappa - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shafer;

impl Calibrator for Shafer {
    fn spec(&self) -> String {
        "shafer".to_owned()
    }

    fn calibrate(&self, p: f64) -> Result<f64> {
        shafer_calibrate(p)
    }

    fn analytic_integral(&self) -> Option<f64> {
        // ∫ p^(-1/2) − 1 = 2 − 1
        Some(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Power {
    kappa: f64,
}

impl Power {
    pub fn new(kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa < 1.0) {
            return Err(EvalError::domain(format!("kappa {kappa} outside (0, 1)")));
        }
        Ok(Power { kappa })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }
}

impl Calibrator for Power {
    fn spec(&self) -> String {
        format!("power:{}", self.kappa)
    }

    fn calibrate(&self, p: f64) -> Result<f64> {
        power_calibrate(self.kappa, p)
    }

    fn analytic_integral(&self) -> Option<f64> {
        Some(1.0)
    }
}

type Factory = Box<dyn Fn(Option<&str>) -> Result<Box<dyn Calibrator>> + Send + Sync>;

/// Calibrator constructors keyed by name. A spec string is `name` or
/// `name:argument`.
pub struct CalibratorRegistry {
    factories: BTreeMap<String, Factory>,
}

impl fmt::Debug for CalibratorRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.factories.keys()).finish()
    }
}

impl Default for CalibratorRegistry {
    fn default() -> Self {
        CalibratorRegistry::with_builtins()
    }
}

impl CalibratorRegistry {
    pub fn empty() -> Self {
        CalibratorRegistry {
            factories: BTreeMap::new(),
        }
    }

    pub fn with_builtins() -> Self {
        let mut registry = CalibratorRegistry::empty();
        registry.register("shafer", |arg| match arg {
            None => Ok(Box::new(Shafer) as Box<dyn Calibrator>),
            Some(a) => Err(EvalError::domain(format!("`shafer` takes no argument, got `{a}`"))),
        });
        registry.register("power", |arg| {
            let raw = arg.ok_or_else(|| EvalError::domain("`power` needs a kappa, e.g. `power:0.5`"))?;
            let kappa: f64 = raw
                .trim()
                .parse()
                .map_err(|_| EvalError::domain(format!("kappa `{raw}` is not a number")))?;
            Ok(Box::new(Power::new(kappa)?) as Box<dyn Calibrator>)
        });
        registry
    }

    /// Registers a factory, replacing any earlier one of the same name.
    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(Option<&str>) -> Result<Box<dyn Calibrator>> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_owned(), Box::new(factory));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn parse(&self, spec: &str) -> Result<Box<dyn Calibrator>> {
        let spec = spec.trim();
        let (name, arg) = match spec.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (spec, None),
        };
        let factory = self
            .factories
            .get(name)
            .ok_or_else(|| EvalError::UnknownCalibrator(spec.to_owned()))?;
        factory(arg)
    }
}

/// Parses a spec string against the built-in calibrators.
pub fn parse_calibrator(spec: &str) -> Result<Box<dyn Calibrator>> {
    CalibratorRegistry::with_builtins().parse(spec)
}

/// Applies `cal` to a p-variable outcome by outcome. A p-value of 0 can only
/// sit on an outcome of probability zero; it maps to `+∞` there.
pub fn calibrate_variable(cal: &dyn Calibrator, space: &FiniteSpace, p: &RandomVariable) -> Result<RandomVariable> {
    if p.len() != space.len() {
        return Err(EvalError::Dimension {
            expected: space.len(),
            got: p.len(),
        });
    }
    let values = p
        .values()
        .iter()
        .zip(space.probs())
        .map(|(&v, &prob)| {
            if v == 0.0 && prob == 0.0 {
                Ok(f64::INFINITY)
            } else {
                cal.calibrate(v)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    RandomVariable::new(values)
}

/// `min(1, 1/e)`; `e = +∞` gives exactly 0.
///
/// The reciprocal is rounded up rather than to nearest, so the returned
/// p-value is never below the exact `1/e`.
pub fn e_to_p(e: f64) -> Result<f64> {
    e_to_p_with_floor(e, 0.0)
}

/// [`e_to_p`] clamped from below at `floor`.
pub fn e_to_p_with_floor(e: f64, floor: f64) -> Result<f64> {
    if !(e >= 0.0) {
        return Err(EvalError::domain(format!("e-value {e} is negative")));
    }
    if !(0.0..=1.0).contains(&floor) {
        return Err(EvalError::domain(format!("floor {floor} outside [0, 1]")));
    }
    Ok(reciprocal_up(e).min(1.0).max(floor))
}

fn reciprocal_up(e: f64) -> f64 {
    let q = 1.0 / e;
    if q.is_finite() && q > 0.0 && q.mul_add(e, -1.0) < 0.0 {
        q.next_up()
    } else {
        q
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoundTripResult {
    pub p_in: f64,
    #[serde(with = "crate::serde_ext::scalar")]
    pub e_mid: f64,
    pub p_out: f64,
}

impl RoundTripResult {
    /// How many times larger the p-value came back.
    pub fn loss_factor(&self) -> f64 {
        self.p_out / self.p_in
    }
}

pub fn round_trip(p: f64, cal: &dyn Calibrator) -> Result<RoundTripResult> {
    let e_mid = cal.calibrate(p)?;
    let p_out = e_to_p(e_mid)?;
    Ok(RoundTripResult { p_in: p, e_mid, p_out })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Deviation {
    Overshoot,
    Undershoot,
    Agree,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JeffreysRow {
    pub p: f64,
    pub jeffreys_e: f64,
    pub shafer_e: f64,
    pub deviation: Deviation,
}

/// Jeffreys's rule of thumb (p = 5% ≈ √10, p = 1% ≈ 10) next to [`Shafer`].
pub fn jeffreys_table() -> Vec<JeffreysRow> {
    [(0.05, 10f64.sqrt()), (0.01, 10.0)]
        .into_iter()
        .map(|(p, jeffreys_e)| {
            let shafer_e = shafer_calibrate(p).expect("p in (0, 1]");
            let deviation = if shafer_e > jeffreys_e {
                Deviation::Overshoot
            } else if shafer_e < jeffreys_e {
                Deviation::Undershoot
            } else {
                Deviation::Agree
            };
            JeffreysRow {
                p,
                jeffreys_e,
                shafer_e,
                deviation,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibratorReport {
    pub calibrator: String,
    pub monotone: bool,
    /// Analytic integral when the calibrator has one, midpoint estimate otherwise.
    pub integral: f64,
    pub numeric_integral: f64,
    pub integral_ok: bool,
    pub evar_expectation: f64,
    pub evar_check: bool,
}

impl CalibratorReport {
    pub fn passed(&self) -> bool {
        self.monotone && self.integral_ok && self.evar_check
    }
}

pub fn validate_calibrator(cal: &dyn Calibrator, grid_size: usize) -> Result<CalibratorReport> {
    validate_calibrator_with(cal, grid_size, DEFAULT_PANELS, DEFAULT_TOL)
}

/// Checks a calibrator on the grid `{i/N}`: monotonicity, `∫₀¹ f ≤ 1 + tol`,
/// and `E[f(p)] ≤ 1 + tol` for the grid p-variable on the uniform space.
/// Failures are reported, not returned as errors.
pub fn validate_calibrator_with(
    cal: &dyn Calibrator,
    grid_size: usize,
    panels: usize,
    tol: f64,
) -> Result<CalibratorReport> {
    if grid_size < 2 {
        return Err(EvalError::domain(format!("grid size {grid_size} < 2")));
    }
    if panels == 0 {
        return Err(EvalError::domain("need at least one integration panel"));
    }
    let f = |p: f64| cal.calibrate(p).unwrap_or(f64::NAN);

    let n = grid_size as f64;
    let grid: Vec<f64> = (1..=grid_size).map(|i| f(i as f64 / n)).collect();
    let monotone = grid.iter().all(|v| *v >= 0.0) && grid.windows(2).all(|w| w[1] <= w[0]);

    let h = 1.0 / panels as f64;
    let numeric_integral = h * (0..panels).map(|i| f((i as f64 + 0.5) * h)).sum::<f64>();
    let integral = cal.analytic_integral().unwrap_or(numeric_integral);
    let integral_ok = integral <= 1.0 + tol;

    let (space, p) = grid_p_variable(grid_size)?;
    let evar_expectation = match p.try_map(|v| cal.calibrate(v)) {
        Ok(e) => expectation(&space, &e)?,
        Err(_) => f64::NAN,
    };
    let evar_check = evar_expectation <= 1.0 + tol;

    Ok(CalibratorReport {
        calibrator: cal.spec(),
        monotone,
        integral,
        numeric_integral,
        integral_ok,
        evar_expectation,
        evar_check,
    })
}
