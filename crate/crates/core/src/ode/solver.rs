use serde::{Deserialize, Serialize};

use super::mlp::MlpParams;
use crate::data::{NUM_VARS, SHARE_START};
use crate::error::{Error, Result};

pub const DEFAULT_SUBSTEPS_PER_YEAR: usize = 4;

/// Removes the mean of the three share derivatives so the shares keep a
/// constant sum; the first four components pass through.
pub fn share_project(d: &[f64; NUM_VARS]) -> [f64; NUM_VARS] {
    let mut out = *d;
    let mean = d[SHARE_START..].iter().sum::<f64>() / (NUM_VARS - SHARE_START) as f64;
    for v in &mut out[SHARE_START..] {
        *v -= mean;
    }
    out
}

fn check_finite<const N: usize>(v: &[f64; N], t: f64) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence { t })
    }
}

/// Classical four-stage Runge-Kutta step of size `h` from `(x, t)`.
pub fn rk4_step<const N: usize, F>(f: &mut F, x: &[f64; N], t: f64, h: f64) -> Result<[f64; N]>
where
    F: FnMut(&[f64; N], f64) -> [f64; N],
{
    if h.is_nan() || h <= 0.0 {
        return Err(Error::argument(format!("step size must be positive, got {h}")));
    }
    let offset = |base: &[f64; N], k: &[f64; N], c: f64| -> [f64; N] { std::array::from_fn(|i| base[i] + c * k[i]) };
    let k1 = f(x, t);
    check_finite(&k1, t)?;
    let k2 = f(&offset(x, &k1, 0.5 * h), t + 0.5 * h);
    check_finite(&k2, t + 0.5 * h)?;
    let k3 = f(&offset(x, &k2, 0.5 * h), t + 0.5 * h);
    check_finite(&k3, t + 0.5 * h)?;
    let k4 = f(&offset(x, &k3, h), t + h);
    check_finite(&k4, t + h)?;
    let next = std::array::from_fn(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    check_finite(&next, t + h)?;
    Ok(next)
}

/// States recorded on a model-time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<[f64; NUM_VARS]>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.states.iter().map(|s| s[j]).collect()
    }
}

pub(crate) fn check_grid(times: &[f64], substeps: usize) -> Result<()> {
    if times.is_empty() {
        return Err(Error::argument("time grid is empty"));
    }
    if substeps == 0 {
        return Err(Error::argument("substeps_per_year must be at least 1"));
    }
    if let Some(w) = times.windows(2).find(|w| w[0].is_nan() || w[1].is_nan() || w[1] <= w[0]) {
        return Err(Error::argument(format!(
            "time grid must be strictly increasing, found {} then {}",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// Integrates `f` from `x0` at `times[0]`, taking `substeps` RK4 steps per
/// grid interval and recording the state at every grid point.
pub fn integrate_with<F>(mut f: F, x0: &[f64; NUM_VARS], times: &[f64], substeps: usize) -> Result<Trajectory>
where
    F: FnMut(&[f64; NUM_VARS], f64) -> [f64; NUM_VARS],
{
    check_grid(times, substeps)?;
    check_finite(x0, times[0])?;
    let mut states = Vec::with_capacity(times.len());
    let mut x = *x0;
    states.push(x);
    for w in times.windows(2) {
        let h = (w[1] - w[0]) / substeps as f64;
        for s in 0..substeps {
            x = rk4_step(&mut f, &x, w[0] + s as f64 * h, h)?;
        }
        states.push(x);
    }
    Ok(Trajectory {
        times: times.to_vec(),
        states,
    })
}

/// Integrates the learned dynamics `share_project ∘ network` over `times`.
pub fn integrate(
    params: &MlpParams,
    x0: &[f64; NUM_VARS],
    times: &[f64],
    substeps: usize,
    country: Option<&[f64]>,
) -> Result<Trajectory> {
    params.check_country(country)?;
    let mut cache = Vec::new();
    integrate_with(
        |x, t| share_project(&params.forward_cached(params.input(x, t, country), &mut cache)),
        x0,
        times,
        substeps,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn projection_cases() {
        let p = share_project(&[1.0, 2.0, 3.0, 4.0, 1.0, 1.0, 1.0]);
        assert_eq!(p, [1.0, 2.0, 3.0, 4.0, 0.0, 0.0, 0.0]);
        let p = share_project(&[0.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0]);
        assert_eq!(p, [0.0, 0.0, 0.0, 0.0, 2.0, -1.0, -1.0]);
        let zero_sum = [9.0, 8.0, 7.0, 6.0, 0.5, -0.25, -0.25];
        assert_eq!(share_project(&zero_sum), zero_sum);
        assert_eq!(share_project(&share_project(&p)), p);
    }

    #[test]
    fn zero_dynamics_step() {
        let x = [1.5, -2.0];
        let next = rk4_step(&mut |_: &[f64; 2], _| [0.0; 2], &x, 0.0, 0.3).unwrap();
        assert_eq!(next, x);
    }

    #[test]
    fn exponential_step_by_hand() {
        // stages 1, 1.05, 1.0525, 1.10525
        let next = rk4_step(&mut |x: &[f64; 1], _| [x[0]], &[1.0], 0.0, 0.1).unwrap();
        let by_hand = 1.0 + 0.1 / 6.0 * (1.0 + 2.0 * 1.05 + 2.0 * 1.0525 + 1.10525);
        assert!((next[0] - by_hand).abs() < 1e-15);
        assert!((next[0] - 0.1f64.exp()).abs() <= 1e-7);
    }

    #[test]
    fn linear_integrand_is_exact() {
        let (t, h) = (0.7, 0.9);
        let next = rk4_step(&mut |_: &[f64; 1], t| [t], &[2.0], t, h).unwrap();
        assert!((next[0] - (2.0 + h * t + h * h / 2.0)).abs() < 1e-14);
    }

    #[test]
    fn step_guards() {
        assert!(rk4_step(&mut |x: &[f64; 1], _| [x[0]], &[1.0], 0.0, 0.0).is_err());
        let err = rk4_step(&mut |_: &[f64; 1], t| [1.0 / (t - 0.05)], &[1.0], 0.0, 0.1).unwrap_err();
        assert!(matches!(err, Error::Divergence { t } if (t - 0.05).abs() < 1e-15));
    }

    #[test]
    fn zero_network_trajectory_is_constant() {
        let p = MlpParams::zeros(&[8], 0);
        let x0 = [0.1, 0.2, 0.3, 0.4, 0.5, 0.3, 0.2];
        let times: Vec<f64> = (0..10).map(|k| k as f64 / 9.0).collect();
        let traj = integrate(&p, &x0, &times, 4, None).unwrap();
        assert_eq!(traj.len(), 10);
        assert!(traj.states.iter().all(|s| *s == x0));
    }

    /// dx0/dt = -x0 realized with one small-signal tanh unit.
    fn decay_network() -> MlpParams {
        let eps = 1e-4;
        let mut p = MlpParams::zeros(&[1], 0);
        p.layers_mut()[0].set_weight(0, 0, eps);
        p.layers_mut()[1].set_weight(0, 0, -1.0 / eps);
        p
    }

    #[test]
    fn hand_built_decay_matches_exponential() {
        let p = decay_network();
        let x0 = [1.0, 0.0, 0.0, 0.0, 0.2, 0.3, 0.5];
        let traj = integrate(&p, &x0, &[0.0, 1.0], 16, None).unwrap();
        assert_eq!(traj.states[0], x0);
        assert!((traj.states[1][0] - (-1.0f64).exp()).abs() <= 1e-6);
    }

    #[test]
    fn halving_step_cuts_error_sixteenfold() {
        let p = decay_network();
        let x0 = [1.0, 0.0, 0.0, 0.0, 0.2, 0.3, 0.5];
        let err = |n| {
            let traj = integrate(&p, &x0, &[0.0, 1.0], n, None).unwrap();
            (traj.states[1][0] - (-1.0f64).exp()).abs()
        };
        let ratio = err(4) / err(8);
        assert!((ratio - 16.0).abs() < 0.2 * 16.0, "ratio {ratio}");
    }

    #[test]
    fn shares_conserved_on_random_networks() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for seed in 0..5 {
            let p = MlpParams::init(&[16], 0, seed);
            let x0: [f64; 7] = std::array::from_fn(|_| rng.gen_range(0.0..1.0));
            let times: Vec<f64> = (0..30).map(|k| k as f64 / 29.0).collect();
            let traj = integrate(&p, &x0, &times, 4, None).unwrap();
            let s0: f64 = x0[4..].iter().sum();
            for s in &traj.states {
                assert!((s[4..].iter().sum::<f64>() - s0).abs() <= 1e-9);
            }
            let again = integrate(&p, &x0, &times, 4, None).unwrap();
            assert_eq!(traj, again);
        }
    }

    #[test]
    fn grid_guards() {
        let p = MlpParams::zeros(&[2], 0);
        assert!(integrate(&p, &[0.0; 7], &[], 4, None).is_err());
        assert!(integrate(&p, &[0.0; 7], &[0.0, 1.0], 0, None).is_err());
        assert!(integrate(&p, &[0.0; 7], &[0.0, 0.0], 1, None).is_err());
    }
}
