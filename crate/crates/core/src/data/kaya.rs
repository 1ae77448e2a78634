//! The Kaya identity F = P · (G/P) · (E/G) · (F/E) and the electricity-share split.

use super::records::RawRecord;
use super::variable::NUM_VARS;
use crate::error::{Error, Result};

fn ratio(num: f64, den: f64, what: &str) -> Result<f64> {
    if den == 0.0 {
        return Err(Error::Degenerate(format!("{what}: division by zero")));
    }
    Ok(num / den)
}

fn shares(generation: [f64; 3]) -> Result<[f64; 3]> {
    let total: f64 = generation.iter().sum();
    Ok([
        ratio(generation[0], total, "electricity shares")?,
        ratio(generation[1], total, "electricity shares")?,
        ratio(generation[2], total, "electricity shares")?,
    ])
}

/// Derives the seven model variables from a fully observed record.
pub fn kaya_decompose(r: &RawRecord) -> Result<[f64; NUM_VARS]> {
    let missing = || Error::Degenerate(format!("record ({}, {}) has missing fields", r.country, r.year));
    let p = r.population.ok_or_else(missing)?;
    let g = r.gdp.ok_or_else(missing)?;
    let e = r.energy.ok_or_else(missing)?;
    let f = r.emissions.ok_or_else(missing)?;
    let mut generation = [0.0; 3];
    for (slot, value) in generation.iter_mut().zip(r.generation()) {
        *slot = value.ok_or_else(missing)?;
    }
    let s = shares(generation)?;
    Ok([
        p,
        ratio(g, p, "GDP per capita")?,
        ratio(e, g, "energy intensity")?,
        ratio(f, e, "carbon intensity")?,
        s[0],
        s[1],
        s[2],
    ])
}

/// Like [`kaya_decompose`] but tolerant of missing fields: each indicator is
/// `None` unless every input it depends on is observed and its divisor is nonzero.
pub fn kaya_decompose_partial(r: &RawRecord) -> [Option<f64>; NUM_VARS] {
    let div = |num: Option<f64>, den: Option<f64>| match (num, den) {
        (Some(n), Some(d)) if d != 0.0 => Some(n / d),
        _ => None,
    };
    let mut out = [
        r.population,
        div(r.gdp, r.population),
        div(r.energy, r.gdp),
        div(r.emissions, r.energy),
        None,
        None,
        None,
    ];
    let generation = r.generation();
    if let [Some(a), Some(b), Some(c)] = generation {
        if let Ok(s) = shares([a, b, c]) {
            out[4] = Some(s[0]);
            out[5] = Some(s[1]);
            out[6] = Some(s[2]);
        }
    }
    out
}

/// Emissions from the first four indicators: P · G/P · E/G · F/E.
pub fn kaya_recompose(v: &[f64]) -> f64 {
    v[0] * v[1] * v[2] * v[3]
}
