use serde::{Deserialize, Serialize};

use super::panel::{Panel, Units};
use super::variable::{VariableId, NUM_VARS, SHARE_START};
use crate::error::{Error, Result};

/// `normalized = (physical - offset) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub offset: f64,
    pub scale: f64,
}

impl Affine {
    pub fn forward(&self, x: f64) -> f64 {
        (x - self.offset) / self.scale
    }

    pub fn inverse(&self, y: f64) -> f64 {
        y * self.scale + self.offset
    }
}

/// Per-variable min-max maps fitted on a training window, plus the mapping
/// from calendar years to model time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "NormalizerDoc", try_from = "NormalizerDoc")]
pub struct Normalizer {
    variables: [Affine; NUM_VARS],
    time: Affine,
}

impl Normalizer {
    pub fn new(variables: [Affine; NUM_VARS], time: Affine) -> Result<Self> {
        for (v, a) in VariableId::ALL.iter().zip(&variables) {
            if !(a.scale > 0.0 && a.scale.is_finite() && a.offset.is_finite()) {
                return Err(Error::argument(format!("invalid affine map for {v}: {a:?}")));
            }
        }
        if !(time.scale > 0.0 && time.scale.is_finite() && time.offset.is_finite()) {
            return Err(Error::argument(format!("invalid time map: {time:?}")));
        }
        Ok(Normalizer { variables, time })
    }

    pub fn variable(&self, var: VariableId) -> Affine {
        self.variables[var.index()]
    }

    pub fn time(&self) -> Affine {
        self.time
    }

    pub fn normalize(&self, var: VariableId, x: f64) -> f64 {
        self.variables[var.index()].forward(x)
    }

    pub fn denormalize(&self, var: VariableId, y: f64) -> f64 {
        self.variables[var.index()].inverse(y)
    }

    pub fn normalize_row(&self, row: &[f64; NUM_VARS]) -> [f64; NUM_VARS] {
        std::array::from_fn(|j| self.variables[j].forward(row[j]))
    }

    pub fn denormalize_row(&self, row: &[f64; NUM_VARS]) -> [f64; NUM_VARS] {
        std::array::from_fn(|j| self.variables[j].inverse(row[j]))
    }

    /// Model time of a (possibly fractional) calendar year.
    pub fn model_time(&self, year: f64) -> f64 {
        self.time.forward(year)
    }

    pub fn calendar_year(&self, model_time: f64) -> f64 {
        self.time.inverse(model_time)
    }

    pub fn model_times(&self, years: &[i32]) -> Vec<f64> {
        years.iter().map(|y| self.model_time(*y as f64)).collect()
    }

    /// Maps a normalized panel back to physical units.
    pub fn denormalize_panel(&self, panel: &Panel) -> Result<Panel> {
        if panel.units() != Units::Normalized {
            return Err(Error::argument("panel is not in normalized units"));
        }
        let values = panel.values().iter().map(|r| self.denormalize_row(r)).collect();
        panel.replace_data(panel.years().to_vec(), values, panel.mask().to_vec(), Units::Physical)
    }

    /// Applies the maps to a physical panel (which may extend past the
    /// window the normalizer was fitted on).
    pub fn apply(&self, panel: &Panel) -> Result<Panel> {
        if panel.units() != Units::Physical {
            return Err(Error::argument("panel is already normalized"));
        }
        let values = panel.values().iter().map(|r| self.normalize_row(r)).collect();
        panel.replace_data(panel.years().to_vec(), values, panel.mask().to_vec(), Units::Normalized)
    }
}

/// Fits a [`Normalizer`] on the years up to and including `train_end` and
/// returns the whole panel in normalized units.
///
/// Each variable's observed training-window minimum maps to 0 and maximum to
/// 1; a variable constant on the window keeps scale 1 with the constant as
/// offset. The three electricity shares are the exception: they keep their
/// own minima as offsets but all use the largest of their three ranges as
/// scale, so the widest-ranging share spans [0, 1] and the others less. Calendar years map so the first panel year is 0 and the last is 1.
pub fn normalize_panel(panel: &Panel, train_end: i32) -> Result<(Panel, Normalizer)> {
    if panel.units() != Units::Physical {
        return Err(Error::argument("panel is already normalized"));
    }
    if train_end < panel.first_year() || train_end > panel.last_year() {
        return Err(Error::argument(format!(
            "train_end {train_end} outside panel years {}..={}",
            panel.first_year(),
            panel.last_year()
        )));
    }
    let mut variables = [Affine {
        offset: 0.0,
        scale: 1.0,
    }; NUM_VARS];
    let mut ranges = [0.0; NUM_VARS];
    for var in VariableId::ALL {
        let window: Vec<f64> = panel
            .observed(var)
            .filter(|(y, _)| *y <= train_end)
            .map(|(_, v)| v)
            .collect();
        if window.len() < 2 {
            return Err(Error::argument(format!(
                "{var} has {} observations in the training window, need at least 2",
                window.len()
            )));
        }
        let lo = window.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = window.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let range = hi - lo;
        ranges[var.index()] = range;
        variables[var.index()] = if range > 0.0 {
            Affine {
                offset: lo,
                scale: range,
            }
        } else {
            Affine { offset: lo, scale: 1.0 }
        };
    }
    // The shares share one scale so that a constant physical share sum
    // stays a constant normalized sum.
    let shares = &mut variables[SHARE_START..];
    let common = shares
        .iter()
        .zip(&ranges[SHARE_START..])
        .map(|(_, r)| *r)
        .fold(0.0, f64::max);
    for a in shares.iter_mut() {
        a.scale = if common > 0.0 { common } else { 1.0 };
    }
    let span = (panel.len() - 1).max(1) as f64;
    let time = Affine {
        offset: panel.first_year() as f64,
        scale: span,
    };
    let normalizer = Normalizer::new(variables, time)?;
    let normalized = normalizer.apply(panel)?;
    Ok((normalized, normalizer))
}

#[derive(Serialize, Deserialize)]
struct NormalizerDoc {
    population: Affine,
    gdp_per_capita: Affine,
    energy_intensity: Affine,
    carbon_intensity: Affine,
    share_fossil: Affine,
    share_nuclear: Affine,
    share_renewable: Affine,
    time: Affine,
}

impl From<Normalizer> for NormalizerDoc {
    fn from(n: Normalizer) -> Self {
        let v = n.variables;
        NormalizerDoc {
            population: v[0],
            gdp_per_capita: v[1],
            energy_intensity: v[2],
            carbon_intensity: v[3],
            share_fossil: v[4],
            share_nuclear: v[5],
            share_renewable: v[6],
            time: n.time,
        }
    }
}

impl TryFrom<NormalizerDoc> for Normalizer {
    type Error = Error;

    fn try_from(d: NormalizerDoc) -> Result<Self> {
        Normalizer::new(
            [
                d.population,
                d.gdp_per_capita,
                d.energy_intensity,
                d.carbon_intensity,
                d.share_fossil,
                d.share_nuclear,
                d.share_renewable,
            ],
            d.time,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn panel_with_first(series: &[f64]) -> Panel {
        let rows = series.iter().map(|x| [*x, 2.0, 3.0, 4.0, 0.5, 0.25, 0.25]).collect();
        Panel::from_rows("XAA", 2000, rows).unwrap()
    }

    #[test]
    fn min_max_endpoints() {
        let (n, norm) = normalize_panel(&panel_with_first(&[10.0, 20.0, 30.0]), 2002).unwrap();
        let col: Vec<f64> = n.values().iter().map(|r| r[0]).collect();
        assert_eq!(col, vec![0.0, 0.5, 1.0]);
        assert_eq!(norm.model_times(&[2000, 2001, 2002]), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn constant_series_keeps_unit_scale() {
        let (n, norm) = normalize_panel(&panel_with_first(&[5.0, 5.0, 5.0]), 2002).unwrap();
        assert!(n.values().iter().all(|r| r[0] == 0.0));
        assert_eq!(
            norm.variable(VariableId::Population),
            Affine {
                offset: 5.0,
                scale: 1.0
            }
        );
    }

    #[test]
    fn validation_window_excluded_from_statistics() {
        let (n, _) = normalize_panel(&panel_with_first(&[10.0, 20.0, 40.0]), 2001).unwrap();
        assert_eq!(n.values()[2][0], 3.0);
    }

    #[test]
    fn shares_use_common_scale() {
        let rows = vec![
            [1.0, 2.0, 3.0, 4.0, 0.6, 0.3, 0.1],
            [1.0, 2.0, 3.0, 4.0, 0.4, 0.3, 0.3],
            [1.0, 2.0, 3.0, 4.0, 0.5, 0.3, 0.2],
        ];
        let p = Panel::from_rows("XAA", 2000, rows).unwrap();
        let (n, norm) = normalize_panel(&p, 2002).unwrap();
        for v in [
            VariableId::ShareFossil,
            VariableId::ShareNuclear,
            VariableId::ShareRenewable,
        ] {
            assert!((norm.variable(v).scale - 0.2).abs() < 1e-15);
        }
        assert_eq!(norm.variable(VariableId::ShareNuclear).offset, 0.3);
        let sums: Vec<f64> = n.values().iter().map(|r| r[4..].iter().sum()).collect();
        for s in &sums {
            assert!((s - sums[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn guards() {
        let p = panel_with_first(&[10.0, 20.0, 30.0]);
        assert!(normalize_panel(&p, 1999).is_err());
        assert!(normalize_panel(&p, 2003).is_err());
        assert!(normalize_panel(&p, 2000).is_err());
        let (n, _) = normalize_panel(&p, 2002).unwrap();
        assert!(normalize_panel(&n, 2002).is_err());
    }

    #[test]
    fn json_layout() {
        let (_, norm) = normalize_panel(&panel_with_first(&[10.0, 20.0, 30.0]), 2002).unwrap();
        let json = serde_json::to_value(&norm).unwrap();
        assert_eq!(json["population"]["offset"], 10.0);
        assert_eq!(json["population"]["scale"], 20.0);
        assert_eq!(json["time"]["offset"], 2000.0);
        assert_eq!(json["time"]["scale"], 2.0);
        let back: Normalizer = serde_json::from_value(json).unwrap();
        assert_eq!(back, norm);
    }

    proptest! {
        #[test]
        fn inverse_of_forward_is_identity(
            offset in -1e9f64..1e9,
            scale in 1e-3f64..1e9,
            x in -1e12f64..1e12,
        ) {
            let a = Affine { offset, scale };
            let back = a.inverse(a.forward(x));
            let tol = 1e-12 * x.abs().max(offset.abs()).max(scale);
            prop_assert!((back - x).abs() <= tol, "x={x} back={back}");
        }
    }

    #[test]
    fn panel_round_trip() {
        let p = panel_with_first(&[5.1e7, 5.3e7, 5.2e7, 6.4e7]);
        let (n, norm) = normalize_panel(&p, 2002).unwrap();
        let back = norm.denormalize_panel(&n).unwrap();
        for (a, b) in back.values().iter().zip(p.values()) {
            for j in 0..NUM_VARS {
                assert!((a[j] - b[j]).abs() <= 1e-12 * b[j].abs());
            }
        }
    }
}
