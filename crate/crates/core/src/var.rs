//! Vector autoregression baseline fitted by ordinary least squares.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Panel, NUM_VARS};
use crate::error::{Error, Result};

/// Diagonal jitter added to the Gram matrix before solving the normal equations.
pub const RIDGE_JITTER: f64 = 1e-10;

/// `x_t = c + Σ_i A_i x_{t-i}`; each `A_i` is stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarModel {
    pub order: usize,
    pub intercept: [f64; NUM_VARS],
    pub coefficients: Vec<Vec<f64>>,
    pub jitter: f64,
}

impl VarModel {
    pub fn new(intercept: [f64; NUM_VARS], coefficients: Vec<[[f64; NUM_VARS]; NUM_VARS]>) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::argument("VAR order must be at least 1"));
        }
        Ok(VarModel {
            order: coefficients.len(),
            intercept,
            coefficients: coefficients
                .iter()
                .map(|a| a.iter().flatten().copied().collect())
                .collect(),
            jitter: 0.0,
        })
    }

    /// Entry (row, col) of the lag-`lag` matrix, lags counted from 1.
    pub fn coefficient(&self, lag: usize, row: usize, col: usize) -> f64 {
        self.coefficients[lag - 1][row * NUM_VARS + col]
    }

    fn validate(&self) -> Result<()> {
        if self.order == 0 || self.coefficients.len() != self.order {
            return Err(Error::shape("VAR order disagrees with its coefficient list"));
        }
        if self.coefficients.iter().any(|a| a.len() != NUM_VARS * NUM_VARS) {
            return Err(Error::shape("VAR coefficient matrices must be 7x7"));
        }
        let finite = self
            .intercept
            .iter()
            .chain(self.coefficients.iter().flatten())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::argument("VAR model has non-finite entries"));
        }
        Ok(())
    }

    /// One-step prediction from `lags[0] = x_{t-1}, lags[1] = x_{t-2}, …`.
    fn predict<'a>(&self, lags: impl Iterator<Item = &'a [f64; NUM_VARS]>) -> [f64; NUM_VARS] {
        let mut out = self.intercept;
        for (a, x) in self.coefficients.iter().zip(lags) {
            for (r, o) in out.iter_mut().enumerate() {
                let row = &a[r * NUM_VARS..(r + 1) * NUM_VARS];
                *o += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            }
        }
        out
    }

    /// In-sample residuals `x_t - prediction` for t = p..T.
    pub fn residuals(&self, series: &[[f64; NUM_VARS]]) -> Vec<[f64; NUM_VARS]> {
        (self.order..series.len())
            .map(|t| {
                let pred = self.predict(series[..t].iter().rev());
                std::array::from_fn(|j| series[t][j] - pred[j])
            })
            .collect()
    }
}

fn min_rows(order: usize) -> usize {
    NUM_VARS * order + order + 2
}

/// Regressor row `[1, x_{t-1}, …, x_{t-p}]`.
pub fn regressors(series: &[[f64; NUM_VARS]], t: usize, order: usize) -> Vec<f64> {
    let mut z = Vec::with_capacity(1 + NUM_VARS * order);
    z.push(1.0);
    for i in 1..=order {
        z.extend_from_slice(&series[t - i]);
    }
    z
}

/// Least-squares VAR(p) fit via jittered normal equations.
pub fn var_fit(series: &[[f64; NUM_VARS]], order: usize) -> Result<VarModel> {
    if order == 0 {
        return Err(Error::argument("VAR order must be at least 1"));
    }
    if series.len() < min_rows(order) {
        return Err(Error::argument(format!(
            "VAR({order}) needs at least {} rows, got {}",
            min_rows(order),
            series.len()
        )));
    }
    if series.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::argument(
            "VAR fit requires a complete series without missing values",
        ));
    }
    let dim = 1 + NUM_VARS * order;
    let rows = series.len() - order;
    let mut z = DMatrix::<f64>::zeros(rows, dim);
    let mut y = DMatrix::<f64>::zeros(rows, NUM_VARS);
    for (i, t) in (order..series.len()).enumerate() {
        for (k, v) in regressors(series, t, order).into_iter().enumerate() {
            z[(i, k)] = v;
        }
        for j in 0..NUM_VARS {
            y[(i, j)] = series[t][j];
        }
    }
    let mut gram = z.transpose() * &z;
    for k in 0..dim {
        gram[(k, k)] += RIDGE_JITTER;
    }
    let rhs = z.transpose() * &y;
    let beta = match gram.clone().cholesky() {
        Some(chol) => chol.solve(&rhs),
        None => gram
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Singular(format!("Gram matrix of VAR({order}) is singular")))?,
    };
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular(
            "normal equations produced non-finite coefficients".into(),
        ));
    }

    let intercept = std::array::from_fn(|j| beta[(0, j)]);
    let coefficients = (0..order)
        .map(|lag| {
            let mut a = vec![0.0; NUM_VARS * NUM_VARS];
            for r in 0..NUM_VARS {
                for c in 0..NUM_VARS {
                    a[r * NUM_VARS + c] = beta[(1 + lag * NUM_VARS + c, r)];
                }
            }
            a
        })
        .collect();
    Ok(VarModel {
        order,
        intercept,
        coefficients,
        jitter: RIDGE_JITTER,
    })
}

/// Fits on a panel's rows; every cell must be observed.
pub fn var_fit_panel(panel: &Panel, order: usize) -> Result<VarModel> {
    if !panel.is_complete() {
        return Err(Error::argument(format!(
            "VAR baseline needs complete data, {} has missing observations",
            panel.country()
        )));
    }
    var_fit(panel.values(), order)
}

/// Iterated one-step forecasts. `history` holds the last `p` rows, oldest first.
pub fn var_forecast(model: &VarModel, history: &[[f64; NUM_VARS]], steps: usize) -> Result<Vec<[f64; NUM_VARS]>> {
    model.validate()?;
    if history.len() != model.order {
        return Err(Error::shape(format!(
            "VAR({}) forecast needs {} history rows, got {}",
            model.order,
            model.order,
            history.len()
        )));
    }
    let mut buffer = history.to_vec();
    for _ in 0..steps {
        let next = model.predict(buffer.iter().rev());
        buffer.push(next);
    }
    Ok(buffer.split_off(model.order))
}

/// Gram matrix `ZᵀZ` of a series' regressors, for diagnostics.
pub fn regressor_gram(series: &[[f64; NUM_VARS]], order: usize) -> DMatrix<f64> {
    let dim = 1 + NUM_VARS * order;
    let mut gram = DMatrix::zeros(dim, dim);
    for t in order..series.len() {
        let z = DVector::from_vec(regressors(series, t, order));
        gram += &z * z.transpose();
    }
    gram
}

/// Well-conditioned VAR(1) generators for tests and demos: rotations of
/// distinct frequency in a random orthonormal basis, so a single noiseless
/// run excites every direction.
pub mod fixtures {
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::{var_forecast, VarModel};
    use crate::data::NUM_VARS;

    pub fn rotation_fixture(seed: u64) -> VarModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = DMatrix::from_fn(NUM_VARS, NUM_VARS, |_, _| rng.gen_range(-1.0..1.0));
        let q = raw.qr().q();
        let mut block = DMatrix::<f64>::zeros(NUM_VARS, NUM_VARS);
        let rotations = [(0.97, 0.35), (0.95, 0.8), (0.93, 1.3)];
        for (i, (radius, angle)) in rotations.iter().enumerate() {
            let (s, c) = f64::sin_cos(*angle);
            let k = 2 * i;
            block[(k, k)] = radius * c;
            block[(k, k + 1)] = -radius * s;
            block[(k + 1, k)] = radius * s;
            block[(k + 1, k + 1)] = radius * c;
        }
        block[(6, 6)] = 0.9;
        let a = &q * block * q.transpose();
        let intercept = std::array::from_fn(|_| rng.gen_range(-0.2..0.2));
        let coefficients = vec![std::array::from_fn(|r| std::array::from_fn(|c| a[(r, c)]))];
        VarModel::new(intercept, coefficients).expect("order 1")
    }

    /// `history` followed by `steps` generated rows.
    pub fn simulate(model: &VarModel, history: &[[f64; NUM_VARS]], steps: usize) -> Vec<[f64; NUM_VARS]> {
        let mut out = history.to_vec();
        out.extend(var_forecast(model, history, steps).expect("history matches order"));
        out
    }
}
