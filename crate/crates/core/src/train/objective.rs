//! Trajectory MSE and its exact reverse-mode gradient through the unrolled
//! RK4 integration.

use rayon::prelude::*;

use crate::data::{Normalizer, Panel, Units, NUM_VARS};
use crate::error::{Error, Result};
use crate::ode::{check_grid, share_project, MlpParams};

/// One normalized panel prepared for fitting: model-time grid, targets,
/// mask and optional country encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSeries {
    pub country: String,
    pub times: Vec<f64>,
    pub values: Vec<[f64; NUM_VARS]>,
    pub mask: Vec<[bool; NUM_VARS]>,
    pub encoding: Option<Vec<f64>>,
}

impl TrainingSeries {
    pub fn from_panel(panel: &Panel, normalizer: &Normalizer, encoding: Option<Vec<f64>>) -> Result<Self> {
        if panel.units() != Units::Normalized {
            return Err(Error::argument("training series need a normalized panel"));
        }
        Ok(TrainingSeries {
            country: panel.country().to_string(),
            times: normalizer.model_times(panel.years()),
            values: panel.values().to_vec(),
            mask: panel.mask().to_vec(),
            encoding,
        })
    }

    pub fn observed_cells(&self) -> usize {
        self.mask.iter().flatten().filter(|m| **m).count()
    }

    /// Initial state: the first row, with any non-finite cell replaced by
    /// that column's first observed value (zero if the column is empty).
    pub fn initial_state(&self) -> [f64; NUM_VARS] {
        std::array::from_fn(|j| {
            let first = self.values[0][j];
            if first.is_finite() {
                return first;
            }
            self.values
                .iter()
                .zip(&self.mask)
                .find(|(_, m)| m[j])
                .map(|(row, _)| row[j])
                .unwrap_or(0.0)
        })
    }
}

fn total_cells(series: &[TrainingSeries]) -> Result<usize> {
    if series.is_empty() {
        return Err(Error::argument("no training series"));
    }
    let n: usize = series.iter().map(TrainingSeries::observed_cells).sum();
    if n == 0 {
        return Err(Error::argument("training series have no observed cells"));
    }
    Ok(n)
}

fn check_series(params: &MlpParams, series: &[TrainingSeries], substeps: usize) -> Result<()> {
    for s in series {
        params.check_country(s.encoding.as_deref())?;
        check_grid(&s.times, substeps)?;
        if s.values.len() != s.times.len() || s.mask.len() != s.times.len() {
            return Err(Error::shape(format!("series {} has ragged rows", s.country)));
        }
    }
    Ok(())
}

/// Activations of the four RK4 stages of one step.
struct StepTape {
    h: f64,
    stages: [Vec<Vec<f64>>; 4],
}

fn eval(
    params: &MlpParams,
    x: &[f64; NUM_VARS],
    t: f64,
    enc: Option<&[f64]>,
    cache: &mut Vec<Vec<f64>>,
) -> Result<[f64; NUM_VARS]> {
    let k = share_project(&params.forward_cached(params.input(x, t, enc), cache));
    if k.iter().all(|v| v.is_finite()) {
        Ok(k)
    } else {
        Err(Error::Divergence { t })
    }
}

/// Squared-error sum of one series and, when `grad` is given, its gradient
/// (of the plain sum, scaled by `weight`) accumulated into `grad`.
fn series_sse(
    params: &MlpParams,
    series: &TrainingSeries,
    substeps: usize,
    weight: f64,
    grad: Option<&mut MlpParams>,
) -> Result<f64> {
    let enc = series.encoding.as_deref();
    let record = grad.is_some();
    let mut tapes: Vec<StepTape> = Vec::new();
    let mut states = Vec::with_capacity(series.times.len());
    let mut x = series.initial_state();
    states.push(x);

    for w in series.times.windows(2) {
        let h = (w[1] - w[0]) / substeps as f64;
        for s in 0..substeps {
            let t = w[0] + s as f64 * h;
            let mut caches: [Vec<Vec<f64>>; 4] = Default::default();
            let [c1, c2, c3, c4] = &mut caches;
            let k1 = eval(params, &x, t, enc, c1)?;
            let u2 = std::array::from_fn(|i| x[i] + 0.5 * h * k1[i]);
            let k2 = eval(params, &u2, t + 0.5 * h, enc, c2)?;
            let u3 = std::array::from_fn(|i| x[i] + 0.5 * h * k2[i]);
            let k3 = eval(params, &u3, t + 0.5 * h, enc, c3)?;
            let u4 = std::array::from_fn(|i| x[i] + h * k3[i]);
            let k4 = eval(params, &u4, t + h, enc, c4)?;
            x = std::array::from_fn(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
            if record {
                tapes.push(StepTape { h, stages: caches });
            }
        }
        states.push(x);
    }

    let mut sse = 0.0;
    for ((state, target), mask) in states.iter().zip(&series.values).zip(&series.mask) {
        for j in 0..NUM_VARS {
            if mask[j] {
                let d = state[j] - target[j];
                sse += d * d;
            }
        }
    }

    if let Some(grad) = grad {
        let mut adj = [0.0; NUM_VARS];
        let mut tape = tapes.iter().rev();
        for k in (1..states.len()).rev() {
            for j in 0..NUM_VARS {
                if series.mask[k][j] {
                    adj[j] += weight * 2.0 * (states[k][j] - series.values[k][j]);
                }
            }
            for _ in 0..substeps {
                let step = tape.next().expect("one tape entry per substep");
                adj = step_adjoint(params, step, &adj, grad);
            }
        }
    }
    Ok(sse)
}

/// Pulls the adjoint of a step's output back to its input, accumulating
/// parameter gradients. The share projection is symmetric, so its transpose
/// is itself.
fn step_adjoint(params: &MlpParams, step: &StepTape, adj: &[f64; NUM_VARS], grad: &mut MlpParams) -> [f64; NUM_VARS] {
    let h = step.h;
    let mut gx = *adj;
    let mut gk: [[f64; NUM_VARS]; 4] = [
        adj.map(|a| a * h / 6.0),
        adj.map(|a| a * h / 3.0),
        adj.map(|a| a * h / 3.0),
        adj.map(|a| a * h / 6.0),
    ];
    let feeds = [0.0, 0.5 * h, 0.5 * h, h];
    for stage in (0..4).rev() {
        let upstream = share_project(&gk[stage]);
        let du = params.backward(&step.stages[stage], &upstream, grad);
        for i in 0..NUM_VARS {
            gx[i] += du[i];
        }
        if stage > 0 {
            for i in 0..NUM_VARS {
                gk[stage - 1][i] += feeds[stage] * du[i];
            }
        }
    }
    gx
}

/// Mean squared error between integrated trajectories and every observed
/// cell of every series. Each series starts from its own first row.
pub fn trajectory_loss(params: &MlpParams, series: &[TrainingSeries], substeps: usize) -> Result<f64> {
    let n = total_cells(series)?;
    check_series(params, series, substeps)?;
    let sums: Vec<f64> = series
        .par_iter()
        .map(|s| series_sse(params, s, substeps, 0.0, None))
        .collect::<Result<_>>()?;
    Ok(sums.iter().sum::<f64>() / n as f64)
}

/// Loss and its exact gradient w.r.t. every network parameter.
pub fn loss_and_gradient(params: &MlpParams, series: &[TrainingSeries], substeps: usize) -> Result<(f64, MlpParams)> {
    let n = total_cells(series)?;
    check_series(params, series, substeps)?;
    let weight = 1.0 / n as f64;
    let parts: Vec<(f64, MlpParams)> = series
        .par_iter()
        .map(|s| {
            let mut g = params.zeros_like();
            series_sse(params, s, substeps, weight, Some(&mut g)).map(|sse| (sse, g))
        })
        .collect::<Result<_>>()?;
    // fixed reduction order keeps the result independent of scheduling
    let mut grad = params.zeros_like();
    let mut sse = 0.0;
    for (s, g) in &parts {
        sse += s;
        grad.axpy(1.0, g);
    }
    Ok((sse * weight, grad))
}

pub fn loss_gradient(params: &MlpParams, series: &[TrainingSeries], substeps: usize) -> Result<MlpParams> {
    loss_and_gradient(params, series, substeps).map(|(_, g)| g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic_panel, normalize_panel, DynamicsKind};

    fn series_from(values: Vec<[f64; NUM_VARS]>, mask: Vec<[bool; NUM_VARS]>) -> TrainingSeries {
        let n = values.len();
        TrainingSeries {
            country: "XAA".into(),
            times: (0..n).map(|k| k as f64 / (n - 1).max(1) as f64).collect(),
            values,
            mask,
            encoding: None,
        }
    }

    fn synthetic_series(years: usize) -> TrainingSeries {
        let panel = &generate_synthetic_panel(5, 1, DynamicsKind::LogisticCoupled).unwrap()[0];
        let short = panel.slice(0..years).unwrap();
        let (norm, n) = normalize_panel(&short, short.last_year()).unwrap();
        TrainingSeries::from_panel(&norm, &n, None).unwrap()
    }

    #[test]
    fn zero_network_constant_panel_fits_exactly() {
        let row = [0.1, 0.2, 0.3, 0.4, 0.5, 0.3, 0.2];
        let s = series_from(vec![row; 5], vec![[true; NUM_VARS]; 5]);
        let p = MlpParams::zeros(&[8], 0);
        assert_eq!(trajectory_loss(&p, std::slice::from_ref(&s), 4).unwrap(), 0.0);
        let g = loss_gradient(&p, &[s], 4).unwrap();
        assert!(g.norm() <= 1e-10);
    }

    #[test]
    fn single_masked_cell_off_by_half() {
        let mut values = vec![[0.0; NUM_VARS]; 3];
        values[2][1] = 0.5;
        let mut mask = vec![[false; NUM_VARS]; 3];
        mask[2][1] = true;
        let s = series_from(values, mask);
        let p = MlpParams::zeros(&[4], 0);
        assert_eq!(trajectory_loss(&p, &[s], 4).unwrap(), 0.25);
    }

    #[test]
    fn fully_masked_panel_rejected() {
        let s = series_from(vec![[0.0; NUM_VARS]; 3], vec![[false; NUM_VARS]; 3]);
        let p = MlpParams::zeros(&[4], 0);
        assert!(matches!(trajectory_loss(&p, &[s], 4), Err(Error::Argument(_))));
        assert!(trajectory_loss(&p, &[], 4).is_err());
    }

    #[test]
    fn initial_state_fills_missing_cells() {
        let mut values = vec![[1.0; NUM_VARS]; 3];
        values[0][2] = f64::NAN;
        values[1][2] = 7.0;
        let mut mask = vec![[true; NUM_VARS]; 3];
        mask[0][2] = false;
        let s = series_from(values, mask);
        assert_eq!(s.initial_state()[2], 7.0);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let s = vec![synthetic_series(5)];
        let p = MlpParams::init(&[4], 0, 17);
        let g = loss_gradient(&p, &s, 4).unwrap().flatten();
        let flat = p.flatten();
        let delta = 1e-5;
        let mut probe = p.clone();
        for i in 0..flat.len() {
            let mut f = flat.clone();
            f[i] += delta;
            probe.load_flat(&f).unwrap();
            let up = trajectory_loss(&probe, &s, 4).unwrap();
            f[i] -= 2.0 * delta;
            probe.load_flat(&f).unwrap();
            let down = trajectory_loss(&probe, &s, 4).unwrap();
            let fd = (up - down) / (2.0 * delta);
            let rel = (g[i] - fd).abs() / fd.abs().max(g[i].abs()).max(1e-8);
            assert!(rel <= 1e-4, "coordinate {i}: analytic {} vs fd {fd}", g[i]);
        }
    }

    #[test]
    fn duplicating_series_keeps_mean_gradient() {
        let s = synthetic_series(6);
        let p = MlpParams::init(&[4], 0, 3);
        let (l1, g1) = loss_and_gradient(&p, std::slice::from_ref(&s), 4).unwrap();
        let (l2, g2) = loss_and_gradient(&p, &[s.clone(), s.clone()], 4).unwrap();
        assert!((l1 - l2).abs() <= 1e-15 * l1.max(1.0));
        for (a, b) in g1.iter().zip(g2.iter()) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-12));
        }
        // the sum-of-squares gradient is N times the mean gradient, N doubling
        let n1 = s.observed_cells() as f64;
        for (a, b) in g1.iter().zip(g2.iter()) {
            let sse1 = a * n1;
            let sse2 = b * 2.0 * n1;
            assert!((sse2 - 2.0 * sse1).abs() <= 1e-10 * sse1.abs().max(1e-12));
        }
    }
}
