//! Example families and the experiment harnesses behind the CSV tables.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dynamics::{equicontinuity_modulus, transitivity_check, CheckConfig, TransitivityStatus};
use crate::entropy::{entropy_transfer, horseshoe_search, markov_detect, perron_root, EntropyError, EntropyEstimate};
use crate::map::{MapError, PLMap};
use crate::mapfile::write_map;
use crate::parry::{constant_slope_model, flatness_diagnostics, CSModel, CsConfig, MonotoneCDF, ParryError};
use crate::rational::{self, format_rational, int, rat, to_f64, Rational};

#[derive(Debug, Error)]
pub enum LabError {
    #[error("parameter {0} out of range")]
    OutOfRange(String),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Entropy(#[from] EntropyError),
    #[error(transparent)]
    Parry(#[from] ParryError),
    #[error("csv: {0}")]
    Csv(String),
}

fn dots(pairs: &[(i64, i64, i64, i64)]) -> Vec<(Rational, Rational)> {
    pairs.iter().map(|&(a, b, c, d)| (rat(a, b), rat(c, d))).collect()
}

/// The full 3-horseshoe through `(0,0), (1/3,1), (2/3,0), (1,1)`.
pub fn horseshoe3() -> PLMap {
    PLMap::connect_the_dots(dots(&[(0, 1, 0, 1), (1, 3, 1, 1), (2, 3, 0, 1), (1, 1, 1, 1)])).unwrap()
}

/// The slope-2 tent map.
pub fn tent2() -> PLMap {
    PLMap::connect_the_dots(dots(&[(0, 1, 0, 1), (1, 2, 1, 1), (1, 1, 0, 1)])).unwrap()
}

/// A Markov map with cover matrix `[[0, 1], [1, 1]]`, entropy log of the golden ratio.
pub fn golden_map() -> PLMap {
    PLMap::connect_the_dots(dots(&[(0, 1, 1, 2), (1, 2, 1, 1), (1, 1, 0, 1)])).unwrap()
}

/// Swaps `[0, 1/2]` and `[1/2, 1]`; its square is a full tent on each half.
pub fn interchange_map() -> PLMap {
    PLMap::connect_the_dots(dots(&[(0, 1, 1, 1), (1, 2, 1, 2), (3, 4, 0, 1), (1, 1, 1, 2)])).unwrap()
}

/// `f_s` through `(0,0), (1/3,1-s), (2/3,s), (1,1)`; `f_0` is the 3-horseshoe.
pub fn modality_preserving(s: &Rational) -> Result<PLMap, LabError> {
    if s < &rational::zero() || s >= &rational::half() {
        return Err(LabError::OutOfRange(format!("s = {}", format_rational(s))));
    }
    Ok(PLMap::connect_the_dots(vec![
        (int(0), int(0)),
        (rat(1, 3), rational::one() - s),
        (rat(2, 3), s.clone()),
        (int(1), int(1)),
    ])?)
}

/// Critical values `g(c_0), …, g(c_9)` of the constant-slope map `g̃_t`.
pub fn example1_values(t: &Rational) -> Vec<Rational> {
    let h = rational::half();
    let q = rat(1, 4);
    let t2 = t * t;
    vec![
        &h - t,
        &q - t + int(2) * &t2,
        &h - t + &t2,
        int(0),
        &h + t + &t2,
        &h - t - &t2,
        int(1),
        &h + t - &t2,
        rat(3, 4) + t - int(2) * &t2,
        &h + t,
    ]
}

/// The first family: `g_t = ψ_t ∘ g̃_t ∘ ψ_t⁻¹` with `g̃_t` of constant slope `3 + 2t`.
#[derive(Debug, Clone)]
pub struct Example1Bundle {
    pub t: Rational,
    pub f: PLMap,
    pub g_tilde: PLMap,
    /// `None` at `t = 0`, where `ψ_t` degenerates to a jump.
    pub psi: Option<PLMap>,
    pub g: Option<PLMap>,
}

impl Example1Bundle {
    pub fn lambda(&self) -> Rational {
        int(3) + int(2) * &self.t
    }

    pub fn psi_cdf(&self) -> Option<MonotoneCDF> {
        self.psi.as_ref().map(|p| MonotoneCDF::from_plmap(p).unwrap())
    }
}

pub fn example1(t: &Rational) -> Result<Example1Bundle, LabError> {
    if t < &rational::zero() || t > &rat(1, 4) {
        return Err(LabError::OutOfRange(format!("t = {}", format_rational(t))));
    }
    let lambda = int(3) + int(2) * t;
    let values = example1_values(t);
    let f = horseshoe3();
    if t == &rational::zero() {
        let mut x = rational::zero();
        let mut pts = vec![(x.clone(), values[0].clone())];
        for w in values.windows(2) {
            let dx = rational::abs(&(&w[1] - &w[0])) / &lambda;
            if dx > rational::zero() {
                x += dx;
                pts.push((x.clone(), w[1].clone()));
            }
        }
        let g_tilde = PLMap::connect_the_dots(pts)?;
        return Ok(Example1Bundle { t: t.clone(), f, g_tilde, psi: None, g: None });
    }
    let g_tilde = PLMap::constant_slope_from_critical_values(&lambda, &values)?;
    let psi = PLMap::connect_the_dots(vec![
        (int(0), int(0)),
        (rational::half() - t, t.clone()),
        (rational::half() + t, rational::one() - t),
        (int(1), int(1)),
    ])?;
    let g = psi.compose(&g_tilde.compose(&psi.inverse()?));
    Ok(Example1Bundle { t: t.clone(), f, g_tilde, psi: Some(psi), g: Some(g) })
}

const EXAMPLE2_DOTS: [(i64, i64); 9] = [(0, 32), (20, 52), (24, 60), (25, 58), (32, 72), (52, 32), (58, 20), (60, 24), (72, 0)];

/// The second family's base map, rescaled from `[0, 72]`.
pub fn example2_map() -> PLMap {
    PLMap::from_domain(EXAMPLE2_DOTS.iter().map(|&(x, y)| (int(x), int(y))).collect(), int(0), int(72)).unwrap()
}

/// The second family: slope-3 caps of half-width `t` (in `[0, 72]` units)
/// over the 2-cycle `24 → 60 → 24`.
#[derive(Debug, Clone)]
pub struct Example2Bundle {
    pub t: Rational,
    pub f: PLMap,
    pub g: PLMap,
}

pub fn example2(t: &Rational) -> Result<Example2Bundle, LabError> {
    if t <= &rational::zero() || t > &rational::one() {
        return Err(LabError::OutOfRange(format!("t = {}", format_rational(t))));
    }
    let mut pts: Vec<(Rational, Rational)> = Vec::new();
    for &(x, y) in &EXAMPLE2_DOTS {
        let (x, y) = (int(x), int(y));
        if x == int(24) || x == int(60) {
            let low = &y - int(2) * t;
            pts.push((&x - t, low.clone()));
            pts.push((x.clone(), &y + t));
            pts.push((&x + t, low));
        } else {
            pts.push((x, y));
        }
    }
    pts.dedup_by(|b, a| a.0 == b.0);
    let g = PLMap::from_domain(pts, int(0), int(72))?;
    Ok(Example2Bundle { t: t.clone(), f: example2_map(), g })
}

/// Markov Perron root when the critical orbits close, transfer iteration otherwise.
pub fn best_entropy(f: &PLMap, markov_steps: usize, grid: usize) -> Result<EntropyEstimate, EntropyError> {
    if let Some(md) = markov_detect(f, markov_steps) {
        return perron_root(&md.matrix, &rat(1, 1_000_000_000_000));
    }
    entropy_transfer(f, grid, 20_000, 1e-13)
}

/// Exponential of an estimate: the exact bracket midpoint when available.
pub fn estimate_lambda(e: &EntropyEstimate) -> f64 {
    match &e.lambda_bracket {
        Some((lo, hi)) => to_f64(&((lo + hi) / int(2))),
        None => e.value.exp(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl Cell {
    /// Numeric cell rounded to the table precision.
    pub fn num(x: f64) -> Self {
        Cell::Num(round_sig(x))
    }

    pub fn text(s: impl Into<String>) -> Self {
        Cell::Text(s.into())
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(x) => Some(*x),
            Cell::Text(_) => None,
        }
    }
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&format_cell(self))
    }
}

const SIG_DIGITS: usize = 12;

fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIG_DIGITS - 1, x).parse().unwrap()
}

fn format_cell(c: &Cell) -> String {
    match c {
        Cell::Num(x) if x.is_nan() => "NaN".into(),
        Cell::Num(x) if x.is_infinite() => if *x > 0.0 { "inf" } else { "-inf" }.into(),
        Cell::Num(x) => format!("{}", round_sig(*x)),
        Cell::Text(s) => s.clone(),
    }
}

/// A table with `# key: value` metadata, written as CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentTable {
    pub name: String,
    pub metadata: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl ExperimentTable {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            metadata: vec![("experiment".into(), name.into())],
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) {
        self.metadata.push((key.into(), value.to_string()));
    }

    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Vec<Cell> {
        let i = self.columns.iter().position(|c| c == name).unwrap_or_else(|| panic!("no column {name}"));
        self.rows.iter().map(|r| r[i].clone()).collect()
    }

    pub fn numbers(&self, name: &str) -> Vec<f64> {
        self.column(name).iter().map(|c| c.as_f64().unwrap_or(f64::NAN)).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "# {k}: {v}");
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).unwrap();
        for row in &self.rows {
            w.write_record(row.iter().map(format_cell)).unwrap();
        }
        out.push_str(&String::from_utf8(w.into_inner().unwrap()).unwrap());
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, LabError> {
        let mut metadata = Vec::new();
        for line in text.lines().take_while(|l| l.starts_with('#')) {
            let body = line.trim_start_matches('#').trim_start();
            if let Some((k, v)) = body.split_once(": ") {
                metadata.push((k.to_string(), v.to_string()));
            }
        }
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let columns: Vec<String> =
            r.headers().map_err(|e| LabError::Csv(e.to_string()))?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| LabError::Csv(e.to_string()))?;
            rows.push(
                rec.iter()
                    .map(|s| match s.parse::<f64>() {
                        Ok(x) => Cell::Num(x),
                        Err(_) => Cell::Text(s.to_string()),
                    })
                    .collect(),
            );
        }
        let name = metadata.iter().find(|(k, _)| k == "experiment").map(|(_, v)| v.clone()).unwrap_or_default();
        Ok(Self { name, metadata, columns, rows })
    }
}

/// SHA-256 of the canonical map file.
pub fn map_hash(f: &PLMap) -> String {
    hex::encode(Sha256::digest(write_map(f).as_bytes()))
}

/// Settings shared by the harnesses.
#[derive(Debug, Clone)]
pub struct LabConfig {
    pub cs: CsConfig,
    pub check: CheckConfig,
    pub markov_steps: usize,
    pub transfer_grid: usize,
}

impl Default for LabConfig {
    fn default() -> Self {
        Self { cs: CsConfig::default(), check: CheckConfig::default(), markov_steps: 64, transfer_grid: 1 << 12 }
    }
}

impl LabConfig {
    pub fn describe(&self) -> String {
        format!(
            "tol={:e} max_iter={} cap={} eps_floor={} k_max={} markov_steps={} grid={}",
            self.cs.tol,
            self.cs.max_iter,
            self.cs.breakpoint_cap,
            format_rational(&self.check.epsilon_floor),
            self.check.k_max,
            self.markov_steps,
            self.transfer_grid
        )
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.describe().as_bytes()))
    }

    fn stamp(&self, table: &mut ExperimentTable) {
        table.meta("config", self.describe());
        table.meta("config_sha256", self.hash());
        table.meta("version", env!("CARGO_PKG_VERSION"));
    }
}

/// Preimage counts of `x` against `λⁿ`, with `λ` from [`best_entropy`].
pub fn theorem1_experiment(f: &PLMap, x: &Rational, n_max: usize, budget: usize, cfg: &LabConfig) -> Result<ExperimentTable, LabError> {
    let estimate = best_entropy(f, cfg.markov_steps, cfg.transfer_grid)?;
    let lambda = estimate_lambda(&estimate);
    let counts = f.preimage_counts(x, n_max, budget)?;
    let mut table = ExperimentTable::new("theorem1", &["n", "count", "ratio"]);
    cfg.stamp(&mut table);
    table.meta("map_sha256", map_hash(f));
    table.meta("point", format_rational(x));
    table.meta("lambda", format!("{lambda:.17e}"));
    table.meta("entropy_method", format!("{:?}", estimate.method));
    table.meta("complete", counts.complete);
    let mut ratios = Vec::new();
    for (n, &c) in counts.counts.iter().enumerate().skip(1) {
        let ratio = c as f64 / lambda.powi(n as i32);
        ratios.push(ratio);
        table.push(vec![Cell::num(n as f64), Cell::num(c as f64), Cell::num(ratio)]);
    }
    let trailing = &ratios[ratios.len() / 2..];
    let min = trailing.iter().copied().fold(f64::INFINITY, f64::min);
    table.meta("trailing_min_ratio", format!("{min:.12e}"));
    table.meta("verdict", if min > 0.0 && counts.complete { "bounded below over tested range" } else { "inconclusive" });
    Ok(table)
}

/// A one-parameter family of maps converging to a base map.
#[derive(Debug, Clone)]
pub enum Family {
    Example1,
    Example2,
    ModalityPreserving,
    /// The same map at every parameter.
    Fixed(PLMap),
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Example1 => "example1",
            Family::Example2 => "example2",
            Family::ModalityPreserving => "modality-preserving",
            Family::Fixed(_) => "fixed",
        }
    }

    pub fn member(&self, t: &Rational) -> Result<PLMap, LabError> {
        match self {
            Family::Example1 => example1(t)?.g.ok_or_else(|| LabError::OutOfRange("t = 0".into())),
            Family::Example2 => Ok(example2(t)?.g),
            Family::ModalityPreserving => modality_preserving(t),
            Family::Fixed(f) => Ok(f.clone()),
        }
    }

    pub fn base(&self) -> PLMap {
        match self {
            Family::Example1 | Family::ModalityPreserving => horseshoe3(),
            Family::Example2 => example2_map(),
            Family::Fixed(f) => f.clone(),
        }
    }

    fn label(&self) -> &'static str {
        match self {
            Family::ModalityPreserving => "artifact family (not from the source examples)",
            _ => "source family",
        }
    }
}

fn short_status(s: TransitivityStatus) -> &'static str {
    match s {
        TransitivityStatus::TransitiveLEO => "transitive-leo",
        TransitivityStatus::TransitiveDecomposed => "transitive-decomposed",
        TransitivityStatus::NotTransitive => "not-transitive",
        TransitivityStatus::Unknown => "unknown",
    }
}

struct Base {
    h: f64,
    model: Option<CSModel>,
}

fn solve_base(family: &Family, cfg: &LabConfig) -> Result<Base, LabError> {
    let f = family.base();
    let h = best_entropy(&f, cfg.markov_steps, cfg.transfer_grid)?.value;
    let model = constant_slope_model(&f, &cfg.cs).ok();
    Ok(Base { h, model })
}

const THEOREM3_COLUMNS: [&str; 11] = [
    "t", "d_map", "h_g", "h_gap", "model_slope", "d_model", "d_psi", "min_psi_slope", "conjugacy_residual", "horseshoe_bound", "status",
];

fn theorem3_row(family: &Family, t: &Rational, base: &Base, cfg: &LabConfig) -> Vec<Cell> {
    let nan = || Cell::num(f64::NAN);
    let g = match family.member(t) {
        Ok(g) => g,
        Err(e) => {
            let mut row = vec![Cell::num(to_f64(t))];
            row.extend((0..9).map(|_| nan()));
            row.push(Cell::text(format!("error: {e}")));
            return row;
        }
    };
    let f = family.base();
    let d_map = to_f64(&f.sup_distance(&g));
    let verdict = transitivity_check(&g, &cfg.check).ok().map(|v| v.status);
    let status = verdict.map_or("check-error", short_status);
    let h = best_entropy(&g, cfg.markov_steps, cfg.transfer_grid).map(|e| e.value).unwrap_or(f64::NAN);
    let bound = match family {
        Family::Example2 => horseshoe_search(&g, 2, 4).ok().flatten().map_or(f64::NAN, |hs| hs.entropy_bound()),
        _ => f64::NAN,
    };
    let mut row = vec![Cell::num(to_f64(t)), Cell::num(d_map), Cell::num(h), Cell::num((h - base.h).abs())];
    if verdict == Some(TransitivityStatus::NotTransitive) {
        row.extend((0..5).map(|_| nan()));
        row.push(Cell::num(bound));
        row.push(Cell::text(format!("{status}; model not defined")));
        return row;
    }
    match (constant_slope_model(&g, &cfg.cs), &base.model) {
        (Ok(cs), Some(b)) => {
            row.push(Cell::num(cs.slope()));
            row.push(Cell::num(to_f64(&cs.model.sup_distance(&b.model))));
            row.push(Cell::num(cs.psi.sup_distance(&b.psi)));
            row.push(Cell::num(cs.min_psi_slope));
            row.push(Cell::num(cs.conjugacy_residual));
            row.push(Cell::num(bound));
            row.push(Cell::text(status));
        }
        (Ok(cs), None) => {
            row.push(Cell::num(cs.slope()));
            row.extend([nan(), nan()]);
            row.push(Cell::num(cs.min_psi_slope));
            row.push(Cell::num(cs.conjugacy_residual));
            row.push(Cell::num(bound));
            row.push(Cell::text(format!("{status}; base model unavailable")));
        }
        (Err(e), _) => {
            row.extend((0..5).map(|_| nan()));
            row.push(Cell::num(bound));
            row.push(Cell::text(format!("{status}; solver: {e}")));
        }
    }
    row
}

/// Distances of maps, entropies, models and conjugacies along a family.
pub fn theorem3_experiment(family: &Family, t_values: &[Rational], cfg: &LabConfig) -> Result<ExperimentTable, LabError> {
    let base = solve_base(family, cfg)?;
    let rows: Vec<Vec<Cell>> = t_values.par_iter().map(|t| theorem3_row(family, t, &base, cfg)).collect();
    let mut table = ExperimentTable::new("theorem3", &THEOREM3_COLUMNS);
    cfg.stamp(&mut table);
    table.meta("family", family.name());
    table.meta("family_origin", family.label());
    table.meta("base_sha256", map_hash(&family.base()));
    table.meta("base_entropy", format!("{:.12e}", base.h));
    table.meta("t_values", t_values.iter().map(format_rational).collect::<Vec<_>>().join(","));
    if let Family::Example1 = family {
        let g0 = example1(&rational::zero())?.g_tilde;
        table.meta("d_gtilde0_f", format!("{:.12e}", to_f64(&g0.sup_distance(&horseshoe3()))));
    }
    for row in rows {
        table.push(row);
    }
    Ok(table)
}

/// `δ(ε)` of `ψ_t⁻¹` minimized over the family, with the minimizing parameter.
pub fn theorem2_experiment(
    family: &Family,
    t_values: &[Rational],
    eps_list: &[f64],
    cfg: &LabConfig,
) -> Result<ExperimentTable, LabError> {
    let solved: Vec<Result<MonotoneCDF, String>> = t_values
        .par_iter()
        .map(|t| {
            let g = family.member(t).map_err(|e| e.to_string())?;
            constant_slope_model(&g, &cfg.cs).map(|cs| cs.psi.inverse()).map_err(|e| e.to_string())
        })
        .collect();
    let mut table = ExperimentTable::new("theorem2", &["epsilon", "delta", "argmin_t"]);
    cfg.stamp(&mut table);
    table.meta("family", family.name());
    table.meta("t_values", t_values.iter().map(format_rational).collect::<Vec<_>>().join(","));
    let mut family_cdfs = Vec::new();
    let mut members = Vec::new();
    for (t, r) in t_values.iter().zip(solved) {
        match r {
            Ok(c) => {
                family_cdfs.push(c);
                members.push(t);
            }
            Err(e) => table.meta(&format!("failed_t_{}", format_rational(t)), e),
        }
    }
    let rows = equicontinuity_modulus(&family_cdfs, eps_list).map_err(|e| LabError::OutOfRange(e.to_string()))?;
    for row in rows {
        let argmin = family_cdfs
            .iter()
            .zip(&members)
            .map(|(c, t)| (flatness_diagnostics(c, &[row.epsilon])[0].delta, *t))
            .find(|(d, _)| *d == row.delta)
            .map(|(_, t)| format_rational(t))
            .unwrap_or_default();
        table.push(vec![Cell::num(row.epsilon), Cell::num(row.delta), Cell::text(argmin)]);
    }
    Ok(table)
}

/// Per-member rows of `δ(ε)`, for monotonicity reports.
pub fn flatness_by_member(
    family: &Family,
    t_values: &[Rational],
    eps_list: &[f64],
    cfg: &LabConfig,
) -> Result<ExperimentTable, LabError> {
    let mut cols = vec!["t".to_string()];
    cols.extend(eps_list.iter().map(|e| format!("delta_{e}")));
    let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut table = ExperimentTable::new("theorem2_members", &col_refs);
    cfg.stamp(&mut table);
    let rows: Vec<Result<Vec<Cell>, LabError>> = t_values
        .par_iter()
        .map(|t| {
            let g = family.member(t)?;
            let cs = constant_slope_model(&g, &cfg.cs)?;
            let mut row = vec![Cell::num(to_f64(t))];
            row.extend(flatness_diagnostics(&cs.psi.inverse(), eps_list).iter().map(|r| Cell::num(r.delta)));
            Ok(row)
        })
        .collect();
    for r in rows {
        table.push(r?);
    }
    Ok(table)
}
