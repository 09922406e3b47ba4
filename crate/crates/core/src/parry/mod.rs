//! Constant slope models `Φ(f)` and conjugacies `Ψ(f)`.
//!
//! Orientation: `psi` maps model coordinates to `f` coordinates, so
//! `f ∘ psi = psi ∘ model`. The distribution function `F` iterated by the
//! pullback operator is `psi⁻¹`.

mod cdf;
mod markov;
mod pullback;

use serde::Serialize;
use thiserror::Error;

use crate::entropy::{EntropyError, EntropyEstimate, EntropyMethod};
use crate::map::{MapError, PLMap};
use crate::rational::{self, format_f64, from_f64, to_f64, Rational};

pub use cdf::{decimate, flatness_diagnostics, CdfError, FlatnessRow, MonotoneCDF};
pub use markov::markov_constant_slope;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParryError {
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Entropy(#[from] EntropyError),
    #[error(transparent)]
    Cdf(#[from] CdfError),
    #[error("pullback did not converge in {iterations} iterations (drift {drift:e}, norm {norm})")]
    NonConvergence { iterations: usize, drift: f64, norm: f64 },
    #[error("conjugacy collapses critical points {0} and {1}; the map is not transitive")]
    Degenerate(usize, usize),
    #[error("cover matrix is reducible; restrict to a strongly connected component first")]
    Reducible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Route {
    /// The input already has constant slope; the model is the input itself.
    ConstantSlope,
    Transfer,
    Markov,
}

/// A constant slope model with its conjugacy and residuals.
#[derive(Debug, Clone)]
pub struct CSModel {
    pub model: PLMap,
    pub psi: MonotoneCDF,
    pub lambda: EntropyEstimate,
    pub conjugacy_residual: f64,
    pub slope_residual: f64,
    pub min_psi_slope: f64,
    pub route: Route,
    pub iterations: usize,
    pub decimation_error: f64,
    pub converged: bool,
    pub transitivity_verified: bool,
}

impl CSModel {
    /// `F = psi⁻¹`, the fixed point of the pullback operator.
    pub fn psi_inverse(&self) -> MonotoneCDF {
        self.psi.inverse()
    }

    /// Slope of the model, `exp h`.
    pub fn slope(&self) -> f64 {
        match &self.lambda.lambda_bracket {
            Some((lo, hi)) => to_f64(&((lo + hi) / rational::int(2))),
            None => self.lambda.value.exp(),
        }
    }
}

impl Serialize for CSModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("CSModel", 11)?;
        st.serialize_field("model", &ModelDots(&self.model))?;
        st.serialize_field("psi", &self.psi)?;
        st.serialize_field("lambda", &format_f64(self.slope()))?;
        st.serialize_field(
            "lambda_bracket",
            &self
                .lambda
                .lambda_bracket
                .as_ref()
                .map(|(lo, hi)| [rational::format_rational(lo), rational::format_rational(hi)]),
        )?;
        st.serialize_field("entropy", &format_f64(self.lambda.value))?;
        st.serialize_field("entropy_bounds", &[format_f64(self.lambda.lower_bound), format_f64(self.lambda.upper_bound)])?;
        st.serialize_field("conjugacy_residual", &format_f64(self.conjugacy_residual))?;
        st.serialize_field("slope_residual", &format_f64(self.slope_residual))?;
        st.serialize_field("min_psi_slope", &format_f64(self.min_psi_slope))?;
        st.serialize_field("route", &self.route)?;
        st.serialize_field("converged", &self.converged)?;
        st.serialize_field("untrusted", &(!self.transitivity_verified).then_some("transitivity unverified"))?;
        st.end()
    }
}

struct ModelDots<'a>(&'a PLMap);

impl Serialize for ModelDots<'_> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        rational::serde_dots::serialize(self.0.dots(), s)
    }
}

/// Solver settings for [`constant_slope_model`].
#[derive(Debug, Clone)]
pub struct CsConfig {
    /// Drift threshold between consecutive iterates.
    pub tol: f64,
    pub max_iter: usize,
    pub breakpoint_cap: usize,
    /// Starting distribution function (identity when absent).
    pub initial: Option<MonotoneCDF>,
}

impl Default for CsConfig {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 5000, breakpoint_cap: 1 << 15, initial: None }
    }
}

/// Slope below which a computed conjugacy is reported as nearly flat.
pub const NEAR_FLAT: f64 = 1e-6;

/// One application of the pullback operator, renormalized.
///
/// Exact when `cdf` is exact, float otherwise. Returns `(F', norm)`.
pub fn pullback_step(f: &PLMap, cdf: &MonotoneCDF) -> Result<(MonotoneCDF, f64), ParryError> {
    if cdf.is_exact() {
        let (dots, norm) = pullback_exact(f, cdf)?;
        return Ok((MonotoneCDF::from_exact(dots)?, to_f64(&norm)));
    }
    let laps = pullback::lap_geometry(f)?;
    let (xs, ys, norm) = pullback::pullback_float(&laps, cdf);
    Ok((normalized(xs, ys, norm)?, norm))
}

pub use pullback::pullback_exact;

fn normalized(xs: Vec<f64>, mut ys: Vec<f64>, norm: f64) -> Result<MonotoneCDF, CdfError> {
    for y in ys.iter_mut() {
        *y = (*y / norm).min(1.0);
    }
    ys[0] = 0.0;
    *ys.last_mut().unwrap() = 1.0;
    MonotoneCDF::from_floats(xs, ys)
}

fn exact_slope_model(f: &PLMap, lambda: Rational) -> Result<CSModel, ParryError> {
    let value = to_f64(&lambda).ln().max(0.0);
    let mut cs = CSModel {
        model: f.clone(),
        psi: MonotoneCDF::identity(),
        lambda: EntropyEstimate {
            value,
            lower_bound: value,
            upper_bound: value,
            method: EntropyMethod::MarkovExact,
            depth: 0,
            converged: true,
            lambda_bracket: Some((lambda.clone(), lambda)),
        },
        conjugacy_residual: 0.0,
        slope_residual: 0.0,
        min_psi_slope: 1.0,
        route: Route::ConstantSlope,
        iterations: 0,
        decimation_error: 0.0,
        converged: true,
        transitivity_verified: false,
    };
    let report = verify_conjugacy(f, &cs);
    apply_report(&mut cs, &report);
    Ok(cs)
}

/// Model through the images of the critical points under `F = psi⁻¹`.
pub(crate) fn model_from_cdf(f: &PLMap, cdf: &MonotoneCDF) -> Result<PLMap, ParryError> {
    let crit = f.critical_data()?.points;
    let last = crit.len() - 1;
    let mut dots: Vec<(Rational, Rational)> = Vec::with_capacity(crit.len());
    for (i, c) in crit.iter().enumerate() {
        let u = if i == 0 {
            rational::zero()
        } else if i == last {
            rational::one()
        } else {
            from_f64(cdf.eval(to_f64(c)))
        };
        if let Some((prev, _)) = dots.last() {
            if &u <= prev {
                return Err(ParryError::Degenerate(i - 1, i));
            }
        }
        let v = from_f64(cdf.eval(to_f64(&f.eval(c)?)).clamp(0.0, 1.0));
        dots.push((u, v));
    }
    Ok(PLMap::connect_the_dots(dots)?)
}

/// Computes `Φ(f)` and `Ψ(f)` by power iteration of the pullback operator.
///
/// Constant-slope inputs short-circuit to `(f, identity)`, which is the
/// answer by uniqueness. Otherwise the distribution function is pulled back
/// in floats, renormalized and decimated to at most `breakpoint_cap` dots
/// with error `tol / 10` (doubled as often as the cap requires), until the
/// drift, the geometric tail estimate `drift·r/(1-r)` and the norm all settle
/// for three consecutive steps. When the cap forces a coarser decimation the
/// tail test is waived once the drift reaches that level. An iteration that
/// alternates between two states switches to the averaged operator
/// `(P + I)/2`, which has the same fixed point.
pub fn constant_slope_model(f: &PLMap, cfg: &CsConfig) -> Result<CSModel, ParryError> {
    if let Some(lambda) = f.is_constant_slope(&rational::zero()) {
        return exact_slope_model(f, lambda);
    }
    let laps = pullback::lap_geometry(f)?;
    let mut cdf = cfg.initial.clone().unwrap_or_else(MonotoneCDF::identity);
    let mut norm = f64::NAN;
    let mut drift = f64::INFINITY;
    let mut log_step = f64::INFINITY;
    let mut eps_used = cfg.tol / 10.0;
    let mut stable = 0;
    let mut iterations = 0;
    let mut ratios = [1.0f64; 3];
    let mut before: Option<MonotoneCDF> = None;
    let mut damped = false;
    let mut oscillating = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let (xs, ys, n) = pullback::pullback_float(&laps, &cdf);
        let pulled = normalized(xs, ys, n)?;
        let next = if damped { pulled.average(&cdf) } else { pulled };
        let mut eps = cfg.tol / 10.0;
        let (mut dx, mut dy) = decimate(next.xs(), next.ys(), eps);
        while dx.len() > cfg.breakpoint_cap {
            eps *= 2.0;
            (dx, dy) = decimate(next.xs(), next.ys(), eps);
        }
        eps_used = eps;
        let next = MonotoneCDF::from_floats(dx, dy)?;
        let previous = drift;
        drift = next.sup_distance(&cdf);
        ratios.rotate_left(1);
        ratios[2] = if previous > 0.0 { drift / previous } else { 1.0 };
        let rate = ratios.iter().copied().fold(0.0, f64::max).min(0.999);
        let tail = drift * rate / (1.0 - rate);
        log_step = (n.ln() - norm.ln()).abs();
        norm = n;
        log::trace!("iteration {iterations}: drift {drift:e}, dots {}, eps {eps_used:e}", next.len());
        let threshold = cfg.tol.max(4.0 * eps_used);
        if !damped && iterations > 10 && drift > threshold {
            let two_step = before.as_ref().map_or(f64::INFINITY, |b| next.sup_distance(b));
            oscillating = if two_step < 0.1 * drift { oscillating + 1 } else { 0 };
            if oscillating >= 5 {
                log::debug!("period-2 oscillation at iteration {iterations}; averaging with the previous iterate");
                damped = true;
                ratios = [1.0; 3];
            }
        }
        before = Some(std::mem::replace(&mut cdf, next));
        let at_floor = eps_used > cfg.tol / 10.0 && drift <= 2.0 * eps_used;
        if drift < threshold && (tail < threshold || at_floor) && log_step < threshold {
            stable += 1;
            if stable >= 3 {
                break;
            }
        } else {
            stable = 0;
        }
    }
    if stable < 3 {
        return Err(ParryError::NonConvergence { iterations, drift, norm });
    }
    let model = model_from_cdf(f, &cdf)?;
    let value = norm.ln().max(0.0);
    let width = drift.max(log_step);
    let mut cs = CSModel {
        model,
        psi: cdf.inverse(),
        lambda: EntropyEstimate {
            value,
            lower_bound: (value - width).max(0.0),
            upper_bound: value + width,
            method: EntropyMethod::Transfer,
            depth: iterations,
            converged: true,
            lambda_bracket: None,
        },
        conjugacy_residual: 0.0,
        slope_residual: 0.0,
        min_psi_slope: 0.0,
        route: Route::Transfer,
        iterations,
        decimation_error: eps_used,
        converged: true,
        transitivity_verified: false,
    };
    let report = verify_conjugacy(f, &cs);
    apply_report(&mut cs, &report);
    if cs.min_psi_slope < NEAR_FLAT {
        log::warn!("near-flat conjugacy: min psi slope {:e}", cs.min_psi_slope);
    }
    Ok(cs)
}

fn apply_report(cs: &mut CSModel, r: &ResidualReport) {
    cs.conjugacy_residual = r.conjugacy_residual + cs.decimation_error;
    cs.slope_residual = r.slope_residual;
    cs.min_psi_slope = r.min_psi_slope;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualReport {
    pub conjugacy_residual: f64,
    pub slope_residual: f64,
    pub min_psi_slope: f64,
}

/// Recomputes the residuals of `cs` against `f` from scratch.
///
/// `f ∘ psi - psi ∘ model` is piecewise linear with breaks among the dots of
/// `psi`, the breakpoints of the model, `psi⁻¹` of the breakpoints of `f` and
/// model-preimages of the dots of `psi`; the sup is taken over those.
pub fn verify_conjugacy(f: &PLMap, cs: &CSModel) -> ResidualReport {
    let psi = &cs.psi;
    let psi_inv = psi.inverse();
    let model = &cs.model;
    let mdots = model.float_dots();
    let mut xs: Vec<f64> = psi.xs().to_vec();
    xs.extend(mdots.iter().map(|d| d.0));
    xs.extend(f.float_dots().iter().map(|d| psi_inv.eval(d.0)));
    for w in mdots.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        let (lo, hi) = if y0 < y1 { (y0, y1) } else { (y1, y0) };
        let px = psi.xs();
        let a = px.partition_point(|&v| v < lo);
        let b = px.partition_point(|&v| v <= hi);
        for &u in &px[a..b] {
            xs.push(x0 + (u - y0) * (x1 - x0) / (y1 - y0));
        }
    }
    let conjugacy_residual = xs
        .iter()
        .map(|&x| (f.eval_f64(psi.eval(x)) - psi.eval(model.eval_f64(x))).abs())
        .fold(0.0, f64::max);
    let lambda = cs.slope();
    let slope_residual = model
        .slopes()
        .iter()
        .map(|s| (to_f64(s).abs() - lambda).abs())
        .fold(0.0, f64::max);
    ResidualReport { conjugacy_residual, slope_residual, min_psi_slope: psi.min_slope() }
}
