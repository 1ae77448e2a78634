//! What-if runs on a trained model: pin one indicator to a hypothetical
//! trajectory, or add hypothetical future observations and fine-tune.

use serde::{Deserialize, Serialize};

use crate::data::{kaya_recompose, Normalizer, Panel, Units, VariableId, NUM_VARS};
use crate::error::{Error, Result};
use crate::eval::mse;
use crate::model::{prepare, ForecastResult, ModelKind, NodeModel};
use crate::ode::{integrate_with, share_project, MlpParams, Trajectory};
use crate::train::{fine_tune, LossReport, TrainConfig, TrainingSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioMode {
    Pinned,
    Augmented,
}

/// A pinned trajectory (piecewise-linear through `anchors`, physical units)
/// or a set of hypothetical observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub mode: ScenarioMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variable: Option<VariableId>,
    #[serde(default)]
    pub anchors: Vec<(i32, f64)>,
    #[serde(default)]
    pub observations: Vec<(i32, VariableId, f64)>,
}

impl ScenarioSpec {
    pub fn pinned(variable: VariableId, anchors: Vec<(i32, f64)>) -> Result<Self> {
        let spec = ScenarioSpec {
            mode: ScenarioMode::Pinned,
            variable: Some(variable),
            anchors,
            observations: Vec::new(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn augmented(observations: Vec<(i32, VariableId, f64)>) -> Result<Self> {
        let spec = ScenarioSpec {
            mode: ScenarioMode::Augmented,
            variable: None,
            anchors: Vec::new(),
            observations,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            ScenarioMode::Pinned => {
                let var = self
                    .variable
                    .ok_or_else(|| Error::argument("pinned scenario needs a variable"))?;
                if self.anchors.len() < 2 {
                    return Err(Error::argument("pinned scenario needs at least 2 anchors"));
                }
                if self.anchors.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(Error::argument("anchor years must be strictly increasing"));
                }
                for (year, value) in &self.anchors {
                    if !value.is_finite() {
                        return Err(Error::argument(format!("anchor value for {year} is not finite")));
                    }
                    if var.is_share() && !(0.0..=1.0).contains(value) {
                        return Err(Error::argument(format!(
                            "pinned share {var} = {value} in {year} outside [0, 1]"
                        )));
                    }
                }
            }
            ScenarioMode::Augmented => {
                if self.observations.is_empty() {
                    return Err(Error::argument("augmented scenario needs at least 1 observation"));
                }
                if let Some((year, var, _)) = self.observations.iter().find(|(_, _, v)| !v.is_finite()) {
                    return Err(Error::argument(format!("observation {var} in {year} is not finite")));
                }
            }
        }
        Ok(())
    }

    fn pinned_variable(&self) -> Result<VariableId> {
        match (self.mode, self.variable) {
            (ScenarioMode::Pinned, Some(v)) => Ok(v),
            _ => Err(Error::argument("not a pinned scenario")),
        }
    }

    pub fn anchor_range(&self) -> Option<(i32, i32)> {
        Some((self.anchors.first()?.0, self.anchors.last()?.0))
    }

    /// Piecewise-linear value at a (possibly fractional) year, physical units.
    /// No extrapolation outside the anchors.
    pub fn interpolate_physical(&self, year: f64) -> Result<f64> {
        self.pinned_variable()?;
        let (first, last) = self
            .anchor_range()
            .ok_or_else(|| Error::argument("scenario has no anchors"))?;
        if year < first as f64 || year > last as f64 {
            return Err(Error::argument(format!(
                "year {year} outside the scenario anchors {first}..={last}"
            )));
        }
        for w in self.anchors.windows(2) {
            let ((y0, v0), (y1, v1)) = (w[0], w[1]);
            if year == y0 as f64 {
                return Ok(v0);
            }
            if year <= y1 as f64 {
                if year == y1 as f64 {
                    return Ok(v1);
                }
                let frac = (year - y0 as f64) / (y1 - y0) as f64;
                return Ok(v0 + frac * (v1 - v0));
            }
        }
        unreachable!("year within anchor range")
    }
}

/// Scenario value at `year` in the model's normalized units.
pub fn interpolate_scenario(spec: &ScenarioSpec, normalizer: &Normalizer, year: f64) -> Result<f64> {
    let var = spec.pinned_variable()?;
    Ok(normalizer.normalize(var, spec.interpolate_physical(year)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PinnedForecast {
    pub years: Vec<i32>,
    pub trajectory: Trajectory,
    /// Set when physical shares miss summing to one by more than 1e-6 in some year.
    pub share_sum_warning: bool,
}

/// Integrates from `x0` at `years[0]` with one component clamped to the
/// scenario: at every solver stage the network sees the scenario value in
/// that slot and the slot's derivative is dropped. The other components
/// evolve under the learned dynamics.
pub fn pinned_forecast(
    params: &MlpParams,
    x0: &[f64; NUM_VARS],
    spec: &ScenarioSpec,
    normalizer: &Normalizer,
    years: &[i32],
    substeps: usize,
    country: Option<&[f64]>,
) -> Result<PinnedForecast> {
    spec.validate()?;
    let var = spec.pinned_variable()?;
    let j = var.index();
    params.check_country(country)?;
    let (first, last) = (
        *years.first().ok_or_else(|| Error::argument("no forecast years"))?,
        *years.last().unwrap(),
    );
    let (lo, hi) = spec.anchor_range().expect("validated");
    if first < lo || last > hi {
        return Err(Error::argument(format!(
            "forecast years {first}..={last} not covered by anchors {lo}..={hi}"
        )));
    }
    let times = normalizer.model_times(years);
    let pinned_at = |t: f64| -> f64 {
        // stage times lie within the covered range up to rounding
        let year = normalizer.calendar_year(t).clamp(lo as f64, hi as f64);
        interpolate_scenario(spec, normalizer, year).expect("year clamped into anchor range")
    };

    let mut start = *x0;
    start[j] = pinned_at(times[0]);
    let mut cache = Vec::new();
    let mut trajectory = integrate_with(
        |x, t| {
            let mut state = *x;
            state[j] = pinned_at(t);
            let mut d = share_project(&params.forward_cached(params.input(&state, t, country), &mut cache));
            d[j] = 0.0;
            d
        },
        &start,
        &times,
        substeps,
    )?;
    for (state, year) in trajectory.states.iter_mut().zip(years) {
        state[j] = interpolate_scenario(spec, normalizer, *year as f64)?;
    }
    let share_sum_warning = trajectory.states.iter().any(|s| {
        let physical = normalizer.denormalize_row(s);
        (physical[4..].iter().sum::<f64>() - 1.0).abs() > 1e-6
    });
    Ok(PinnedForecast {
        years: years.to_vec(),
        trajectory,
        share_sum_warning,
    })
}

/// Yearly emissions in physical units implied by a normalized trajectory.
pub fn scenario_emissions(trajectory: &Trajectory, normalizer: &Normalizer) -> Vec<f64> {
    trajectory
        .states
        .iter()
        .map(|s| kaya_recompose(&normalizer.denormalize_row(s)))
        .collect()
}

/// Pinned run for a trained model: the unpinned model is integrated from
/// its first training year up to the first anchor year (or `train_end` if
/// later), then the pinned integration continues to the last anchor.
pub fn model_pinned_forecast(model: &NodeModel, spec: &ScenarioSpec) -> Result<PinnedForecast> {
    spec.validate()?;
    let (lo, hi) = spec
        .anchor_range()
        .ok_or_else(|| Error::argument("scenario has no anchors"))?;
    let start = lo.max(model.train_start);
    if start >= hi {
        return Err(Error::argument("scenario anchors end before the model's first year"));
    }
    let lead = model.trajectory(start)?;
    let x0 = *lead.states.last().expect("non-empty trajectory");
    let years: Vec<i32> = (start..=hi).collect();
    pinned_forecast(
        &model.params,
        &x0,
        spec,
        &model.normalizer,
        &years,
        model.substeps_per_year,
        model.encoding.as_deref(),
    )
}

/// Pinned run as a physical-unit [`ForecastResult`]: the unpinned model's
/// fitted history before the pinned window, then the pinned trajectory. The
/// pinned column reports the scenario's own physical values.
pub fn pinned_forecast_result(model: &NodeModel, spec: &ScenarioSpec) -> Result<ForecastResult> {
    let pinned = model_pinned_forecast(model, spec)?;
    let var = spec.pinned_variable()?;
    let start = pinned.years[0];
    let mut years: Vec<i32> = (model.train_start..start).collect();
    let mut rows = if years.is_empty() {
        Vec::new()
    } else {
        model.trajectory(start - 1)?.states
    };
    years.extend_from_slice(&pinned.years);
    rows.extend_from_slice(&pinned.trajectory.states);
    let mut result = ForecastResult::from_normalized(
        &model.country,
        ModelKind::Node,
        years,
        &rows,
        &model.normalizer,
        model.params_hash(),
    )?;
    let column = result.variables.get_mut(&var).expect("all variables present");
    let offset = column.len() - pinned.years.len();
    for (slot, year) in column[offset..].iter_mut().zip(&pinned.years) {
        *slot = spec.interpolate_physical(*year as f64)?;
    }
    if var.index() < crate::data::SHARE_START {
        for (k, f) in result.emissions.iter_mut().enumerate() {
            let row: Vec<f64> = VariableId::ALL.iter().map(|v| result.variables[v][k]).collect();
            *f = kaya_recompose(&row);
        }
    }
    result.metadata.share_sum_warning |= pinned.share_sum_warning;
    Ok(result)
}

#[derive(Debug, Clone)]
pub struct AugmentedOutcome {
    pub model: NodeModel,
    pub report: LossReport,
    /// Validation MSE before and after fine-tuning; `None` if the panel has
    /// no years after the training window.
    pub before: Option<f64>,
    pub after: Option<f64>,
}

/// Normalized training window extended with the hypothetical observations.
pub fn augment_training_panel(model: &NodeModel, train: &Panel, spec: &ScenarioSpec) -> Result<Panel> {
    spec.validate()?;
    if spec.mode != ScenarioMode::Augmented {
        return Err(Error::argument("not an augmented scenario"));
    }
    if train.units() != Units::Normalized {
        return Err(Error::argument("training panel must be normalized"));
    }
    if let Some((year, var, _)) = spec.observations.iter().find(|(y, _, _)| *y <= model.train_end) {
        return Err(Error::argument(format!(
            "hypothetical observation {var} in {year} falls inside the training window (ends {})",
            model.train_end
        )));
    }
    let last = spec
        .observations
        .iter()
        .map(|(y, _, _)| *y)
        .max()
        .expect("validated non-empty");
    let mut years = train.years().to_vec();
    let mut values = train.values().to_vec();
    let mut mask = train.mask().to_vec();
    for y in train.last_year() + 1..=last {
        years.push(y);
        values.push([f64::NAN; NUM_VARS]);
        mask.push([false; NUM_VARS]);
    }
    for (year, var, value) in &spec.observations {
        let k = (year - train.first_year()) as usize;
        values[k][var.index()] = model.normalizer.normalize(*var, *value);
        mask[k][var.index()] = true;
    }
    train.replace_data(years, values, mask, Units::Normalized)
}

fn validation_mse(model: &NodeModel, params: &MlpParams, validation: Option<&Panel>) -> Result<Option<f64>> {
    let Some(val) = validation else { return Ok(None) };
    let traj = model.trajectory_with(params, val.last_year())?;
    let skip = (val.first_year() - model.train_start) as usize;
    Ok(Some(mse(&traj.states[skip..], val.values(), val.mask())?.total))
}

/// Adds hypothetical observations after the training window, fine-tunes a
/// copy of the model on the augmented data and re-scores it on whatever of
/// `panel` lies after the training window.
pub fn run_augmented_scenario(
    model: &NodeModel,
    panel: &Panel,
    spec: &ScenarioSpec,
    cfg: &TrainConfig,
) -> Result<AugmentedOutcome> {
    if panel.country() != model.country {
        return Err(Error::argument(format!(
            "panel {} does not belong to model {}",
            panel.country(),
            model.country
        )));
    }
    let prepared = prepare(panel, model.train_end)?;
    if prepared.normalizer != model.normalizer {
        log::warn!("panel statistics differ from the model's stored normalizer; using the model's");
    }
    let train = model.normalizer.apply(&panel.slice(0..prepared.train.len())?)?;
    let validation = match &prepared.validation {
        Some(_) => Some(
            model
                .normalizer
                .apply(&panel.slice(prepared.train.len()..panel.len())?)?,
        ),
        None => None,
    };
    let augmented = augment_training_panel(model, &train, spec)?;
    let series = TrainingSeries::from_panel(&augmented, &model.normalizer, model.encoding.clone())?;
    let report = fine_tune(&model.params, &[series], cfg)?;
    let before = validation_mse(model, &model.params, validation.as_ref())?;
    let after = validation_mse(model, &report.params, validation.as_ref())?;
    let mut tuned = model.clone();
    tuned.params = report.params.clone();
    Ok(AugmentedOutcome {
        model: tuned,
        report,
        before,
        after,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic_panel, normalize_panel, Affine, DynamicsKind};
    use crate::model::fit_node;

    fn unit_normalizer() -> Normalizer {
        Normalizer::new(
            [Affine {
                offset: 0.0,
                scale: 1.0,
            }; NUM_VARS],
            Affine {
                offset: 2020.0,
                scale: 10.0,
            },
        )
        .unwrap()
    }

    fn pop_spec() -> ScenarioSpec {
        ScenarioSpec::pinned(VariableId::Population, vec![(2020, 10.0), (2030, 20.0)]).unwrap()
    }

    #[test]
    fn interpolation() {
        let s = pop_spec();
        assert_eq!(s.interpolate_physical(2025.0).unwrap(), 15.0);
        assert_eq!(s.interpolate_physical(2020.0).unwrap(), 10.0);
        assert_eq!(s.interpolate_physical(2030.0).unwrap(), 20.0);
        assert!(s.interpolate_physical(2040.0).is_err());
        assert!(s.interpolate_physical(2019.5).is_err());
        let n = Normalizer::new(
            [Affine {
                offset: 10.0,
                scale: 10.0,
            }; NUM_VARS],
            Affine {
                offset: 2020.0,
                scale: 10.0,
            },
        )
        .unwrap();
        assert_eq!(interpolate_scenario(&s, &n, 2025.0).unwrap(), 0.5);
    }

    #[test]
    fn spec_validation() {
        assert!(ScenarioSpec::pinned(VariableId::Population, vec![(2020, 1.0)]).is_err());
        assert!(ScenarioSpec::pinned(VariableId::Population, vec![(2020, 1.0), (2020, 2.0)]).is_err());
        assert!(ScenarioSpec::pinned(VariableId::ShareFossil, vec![(2020, 0.5), (2030, 1.2)]).is_err());
        assert!(ScenarioSpec::augmented(vec![]).is_err());
        assert!(ScenarioSpec::augmented(vec![(2020, VariableId::Population, 1.0)]).is_ok());
    }

    #[test]
    fn json_layout() {
        let json = serde_json::to_value(pop_spec()).unwrap();
        assert_eq!(json["mode"], "pinned");
        assert_eq!(json["variable"], "population");
        assert_eq!(json["anchors"][1][0], 2030);
        let aug: ScenarioSpec =
            serde_json::from_str(r#"{"mode": "augmented", "observations": [[2021, "share_renewable", 0.4]]}"#).unwrap();
        assert_eq!(aug.observations, vec![(2021, VariableId::ShareRenewable, 0.4)]);
    }

    #[test]
    fn zero_network_keeps_unpinned_constant_and_pin_exact() {
        let params = MlpParams::zeros(&[4], 0);
        let n = unit_normalizer();
        let x0 = [3.0, 1.0, 2.0, 4.0, 0.5, 0.3, 0.2];
        let years: Vec<i32> = (2020..=2030).collect();
        let out = pinned_forecast(&params, &x0, &pop_spec(), &n, &years, 4, None).unwrap();
        for (state, year) in out.trajectory.states.iter().zip(&years) {
            assert_eq!(state[0], pop_spec().interpolate_physical(*year as f64).unwrap());
            assert_eq!(&state[1..], &x0[1..]);
        }
        assert!(!out.share_sum_warning);
    }

    #[test]
    fn anchors_must_cover_years() {
        let params = MlpParams::zeros(&[4], 0);
        let years: Vec<i32> = (2020..=2031).collect();
        assert!(pinned_forecast(&params, &[0.0; 7], &pop_spec(), &unit_normalizer(), &years, 4, None).is_err());
    }

    #[test]
    fn doubling_pin_level_doubles_drift() {
        // d(carbon_intensity)/dt = pinned population via one small-signal tanh unit
        let eps = 1e-4;
        let mut params = MlpParams::zeros(&[1], 0);
        params.layers_mut()[0].set_weight(0, 0, eps);
        params.layers_mut()[1].set_weight(3, 0, 1.0 / eps);
        let n = unit_normalizer();
        let years: Vec<i32> = (2020..=2030).collect();
        let drift = |level: f64| {
            let spec = ScenarioSpec::pinned(VariableId::Population, vec![(2020, level), (2030, level)]).unwrap();
            let out = pinned_forecast(&params, &[0.0; 7], &spec, &n, &years, 4, None).unwrap();
            out.trajectory.states.last().unwrap()[3] - out.trajectory.states[0][3]
        };
        let (a, b) = (drift(0.3), drift(0.6));
        // drift = level * (model time span 1.0)
        assert!((a - 0.3).abs() < 1e-6);
        assert!((b / a - 2.0).abs() < 1e-6, "ratio {}", b / a);
    }

    #[test]
    fn emissions_of_constant_trajectory() {
        let n = unit_normalizer();
        let row = [2.0, 3.0, 0.5, 4.0, 0.5, 0.25, 0.25];
        let traj = Trajectory {
            times: vec![0.0, 0.1],
            states: vec![row; 2],
        };
        assert_eq!(scenario_emissions(&traj, &n), vec![12.0, 12.0]);
        let mut doubled = row;
        doubled[0] *= 2.0;
        let traj = Trajectory {
            times: vec![0.0],
            states: vec![doubled],
        };
        assert_eq!(scenario_emissions(&traj, &n), vec![24.0]);
    }

    #[test]
    fn emissions_survive_normalization_round_trip() {
        let panel = &generate_synthetic_panel(4, 1, DynamicsKind::Linear).unwrap()[0];
        let (norm, n) = normalize_panel(panel, 2000).unwrap();
        let traj = Trajectory {
            times: n.model_times(norm.years()),
            states: norm.values().to_vec(),
        };
        for (f, row) in scenario_emissions(&traj, &n).iter().zip(panel.values()) {
            let expect = kaya_recompose(row);
            assert!((f - expect).abs() <= 1e-9 * expect);
        }
    }

    fn trained() -> (NodeModel, Panel) {
        let panel = generate_synthetic_panel(6, 1, DynamicsKind::Linear).unwrap().remove(0);
        let prepared = prepare(&panel, 2007).unwrap();
        let cfg = TrainConfig {
            epochs: 30,
            hidden: vec![8],
            ..Default::default()
        };
        (fit_node(&prepared, &cfg).unwrap().0, panel)
    }

    #[test]
    fn augmented_guards_and_noop() {
        let (model, panel) = trained();
        let inside = ScenarioSpec::augmented(vec![(2000, VariableId::Population, 1e7)]).unwrap();
        let cfg = TrainConfig {
            hidden: vec![8],
            fine_tune_epochs: 0,
            ..Default::default()
        };
        assert!(run_augmented_scenario(&model, &panel, &inside, &cfg).is_err());

        let value = panel.values()[panel.row_of(2008).unwrap()][0];
        let spec = ScenarioSpec::augmented(vec![(2008, VariableId::Population, value)]).unwrap();
        let out = run_augmented_scenario(&model, &panel, &spec, &cfg).unwrap();
        assert_eq!(out.before, out.after);
        assert!(out.before.is_some());
        assert_eq!(out.model.params, model.params);
    }

    #[test]
    fn augmentation_masks_only_given_cells() {
        let (model, panel) = trained();
        let prepared = prepare(&panel, 2007).unwrap();
        let spec = ScenarioSpec::augmented(vec![(2010, VariableId::ShareRenewable, 0.3)]).unwrap();
        let aug = augment_training_panel(&model, &prepared.train, &spec).unwrap();
        assert_eq!(aug.last_year(), 2010);
        let k = aug.row_of(2010).unwrap();
        assert_eq!(aug.mask()[k], [false, false, false, false, false, false, true]);
        assert_eq!(aug.mask()[aug.row_of(2008).unwrap()], [false; NUM_VARS]);
        assert_eq!(aug.observed_cells(), prepared.train.observed_cells() + 1);
    }
}
