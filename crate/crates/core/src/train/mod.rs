//! Fitting the dynamics network with full-batch Adam on trajectory MSE.

mod adam;
mod config;
mod objective;

use std::time::Instant;

pub use adam::{adam_step, AdamState};
pub use config::TrainConfig;
pub use objective::{loss_and_gradient, loss_gradient, trajectory_loss, TrainingSeries};

use crate::error::{Error, Result};
use crate::ode::MlpParams;

/// Per-epoch losses of a run and the parameters it ended with.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    /// Loss evaluated at the start of each completed epoch.
    pub losses: Vec<f64>,
    pub params: MlpParams,
    pub seconds: f64,
}

impl LossReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.losses.last().copied()
    }

    /// `epoch,loss` CSV, epochs counted from 1.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss\n");
        for (i, l) in self.losses.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, l));
        }
        out
    }
}

fn country_count(series: &[TrainingSeries]) -> Result<usize> {
    let first = series.first().ok_or_else(|| Error::argument("no training series"))?;
    let count = first.encoding.as_ref().map_or(0, Vec::len);
    for s in series {
        if s.encoding.as_ref().map_or(0, Vec::len) != count {
            return Err(Error::shape("series disagree on the country encoding length"));
        }
    }
    if count > 0 {
        let mut encodings: Vec<&Vec<f64>> = series.iter().filter_map(|s| s.encoding.as_ref()).collect();
        encodings.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        encodings.dedup();
        let distinct_countries = {
            let mut names: Vec<&str> = series.iter().map(|s| s.country.as_str()).collect();
            names.sort_unstable();
            names.dedup();
            names.len()
        };
        if encodings.len() != distinct_countries {
            return Err(Error::argument("each country needs its own distinct encoding"));
        }
    }
    Ok(count)
}

fn optimize(mut params: MlpParams, series: &[TrainingSeries], cfg: &TrainConfig, epochs: usize) -> Result<LossReport> {
    let start = Instant::now();
    let mut state = AdamState::for_params(&params);
    let mut losses = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let (loss, grad) =
            loss_and_gradient(&params, series, cfg.substeps_per_year).map_err(|e| Error::TrainingDiverged {
                epoch: epoch + 1,
                source: Box::new(e),
            })?;
        losses.push(loss);
        state.apply(&mut params, &grad, cfg);
        if epoch % 500 == 0 {
            log::debug!("epoch {} loss {loss:.6e}", epoch + 1);
        }
    }
    Ok(LossReport {
        losses,
        params,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Trains a freshly initialized network for exactly `cfg.epochs` Adam steps.
/// The country encoding length is taken from the series (none = single-country).
pub fn train(series: &[TrainingSeries], cfg: &TrainConfig) -> Result<LossReport> {
    cfg.validate()?;
    let countries = country_count(series)?;
    let params = MlpParams::init(&cfg.hidden, countries, cfg.seed);
    optimize(params, series, cfg, cfg.epochs)
}

/// Continues from `params` for `cfg.fine_tune_epochs` steps with fresh
/// optimizer moments.
pub fn fine_tune(params: &MlpParams, series: &[TrainingSeries], cfg: &TrainConfig) -> Result<LossReport> {
    cfg.validate()?;
    if params.hidden() != cfg.hidden.as_slice() {
        return Err(Error::shape(format!(
            "params have hidden widths {:?}, config says {:?}",
            params.hidden(),
            cfg.hidden
        )));
    }
    if country_count(series)? != params.country_count() {
        return Err(Error::shape(
            "series encodings do not match the network's country inputs",
        ));
    }
    optimize(params.clone(), series, cfg, cfg.fine_tune_epochs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic_panel, normalize_panel, DynamicsKind, NUM_VARS};
    use crate::ode::one_hot;

    fn linear_series() -> TrainingSeries {
        let panel = &generate_synthetic_panel(21, 1, DynamicsKind::Linear).unwrap()[0];
        let train = panel.slice(0..30).unwrap();
        let (norm, n) = normalize_panel(&train, train.last_year()).unwrap();
        TrainingSeries::from_panel(&norm, &n, None).unwrap()
    }

    fn small_cfg(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            hidden: vec![16],
            seed: 4,
            ..Default::default()
        }
    }

    #[test]
    fn one_epoch_one_entry() {
        let report = train(&[linear_series()], &small_cfg(1)).unwrap();
        assert_eq!(report.losses.len(), 1);
        assert!(report.to_csv().starts_with("epoch,loss\n1,"));
    }

    #[test]
    fn deterministic_in_seed() {
        let s = [linear_series()];
        let a = train(&s, &small_cfg(20)).unwrap();
        let b = train(&s, &small_cfg(20)).unwrap();
        assert_eq!(a.losses, b.losses);
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn default_config_reduces_loss_tenfold() {
        let s = [linear_series()];
        let report = train(&s, &TrainConfig::default()).unwrap();
        let first = report.losses[0];
        let last = trajectory_loss(&report.params, &s, 4).unwrap();
        assert!(last <= first / 10.0, "first {first}, last {last}");
    }

    #[test]
    fn fine_tune_zero_epochs_is_noop() {
        let s = [linear_series()];
        let report = train(&s, &small_cfg(5)).unwrap();
        let cfg = TrainConfig {
            fine_tune_epochs: 0,
            ..small_cfg(5)
        };
        let tuned = fine_tune(&report.params, &s, &cfg).unwrap();
        assert_eq!(tuned.params, report.params);
        assert!(tuned.losses.is_empty());
    }

    #[test]
    fn fine_tune_at_exact_fit_stays_put() {
        let row = [0.1, 0.2, 0.3, 0.4, 0.5, 0.3, 0.2];
        let s = TrainingSeries {
            country: "XAA".into(),
            times: vec![0.0, 0.5, 1.0],
            values: vec![row; 3],
            mask: vec![[true; NUM_VARS]; 3],
            encoding: None,
        };
        let params = MlpParams::zeros(&[16], 0);
        let cfg = TrainConfig {
            fine_tune_epochs: 50,
            ..small_cfg(1)
        };
        let tuned = fine_tune(&params, &[s], &cfg).unwrap();
        assert!(tuned.losses.iter().all(|l| (l - tuned.losses[0]).abs() <= 1e-8));
    }

    #[test]
    fn fine_tune_shape_checks() {
        let s = [linear_series()];
        let params = MlpParams::zeros(&[8], 0);
        assert!(fine_tune(&params, &s, &small_cfg(1)).is_err());
        let mut enc = linear_series();
        enc.encoding = Some(one_hot(0, 2));
        let params = MlpParams::zeros(&[16], 0);
        assert!(fine_tune(&params, &[enc], &small_cfg(1)).is_err());
    }

    #[test]
    fn duplicate_encodings_rejected() {
        let mut a = linear_series();
        a.encoding = Some(one_hot(0, 2));
        let mut b = a.clone();
        b.country = "XAB".into();
        assert!(train(&[a, b], &small_cfg(1)).is_err());
    }
}
