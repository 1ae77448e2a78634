//! Seeded synthetic panels with known closed-form dynamics, standing in for
//! the licensed World Bank / IEA series.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::panel::{panels_from_records, Panel};
use super::records::RawRecord;
use super::variable::NUM_VARS;
use crate::error::Result;

pub const SYNTH_FIRST_YEAR: i32 = 1971;
pub const SYNTH_LAST_YEAR: i32 = 2019;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DynamicsKind {
    /// Every indicator relaxes exponentially toward a target:
    /// dx/dt = -r (x - target). Sampled yearly this is an exact VAR(1).
    Linear,
    /// Logistic population and affluence growth, energy intensity coupled to
    /// affluence, sigmoidal fuel-mix transition, carbon intensity coupled to
    /// the fossil share.
    LogisticCoupled,
}

impl std::str::FromStr for DynamicsKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(DynamicsKind::Linear),
            "logistic" | "logistic-coupled" => Ok(DynamicsKind::LogisticCoupled),
            other => Err(crate::Error::argument(format!("unknown dynamics kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub country_count: usize,
    pub kind: DynamicsKind,
    pub first_year: i32,
    pub last_year: i32,
    /// Overrides every relaxation rate of the linear kind (per year).
    pub decay_rate: Option<f64>,
}

impl SynthSpec {
    pub fn new(seed: u64, country_count: usize, kind: DynamicsKind) -> Self {
        SynthSpec {
            seed,
            country_count,
            kind,
            first_year: SYNTH_FIRST_YEAR,
            last_year: SYNTH_LAST_YEAR,
            decay_rate: None,
        }
    }
}

/// Closed-form ground truth of one synthetic country.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GroundTruth {
    Linear {
        initial: [f64; NUM_VARS],
        target: [f64; NUM_VARS],
        /// Relaxation rate per variable, per year.
        rates: [f64; NUM_VARS],
    },
    LogisticCoupled {
        pop0: f64,
        pop_cap: f64,
        pop_rate: f64,
        gdp0: f64,
        gdp_cap: f64,
        gdp_rate: f64,
        energy0: f64,
        energy_elasticity: f64,
        carbon0: f64,
        renew0: f64,
        renew1: f64,
        renew_rate: f64,
        renew_mid: f64,
        nuclear_max: f64,
        nuclear_rate: f64,
        nuclear_mid: f64,
    },
}

fn logistic(x0: f64, cap: f64, rate: f64, t: f64) -> f64 {
    cap / (1.0 + (cap / x0 - 1.0) * (-rate * t).exp())
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl GroundTruth {
    /// Indicator vector `t` years after the first panel year.
    pub fn state(&self, t: f64) -> [f64; NUM_VARS] {
        match self {
            GroundTruth::Linear { initial, target, rates } => {
                std::array::from_fn(|j| target[j] + (initial[j] - target[j]) * (-rates[j] * t).exp())
            }
            GroundTruth::LogisticCoupled {
                pop0,
                pop_cap,
                pop_rate,
                gdp0,
                gdp_cap,
                gdp_rate,
                energy0,
                energy_elasticity,
                carbon0,
                renew0,
                renew1,
                renew_rate,
                renew_mid,
                nuclear_max,
                nuclear_rate,
                nuclear_mid,
            } => {
                let pop = logistic(*pop0, *pop_cap, *pop_rate, t);
                let gdp = logistic(*gdp0, *gdp_cap, *gdp_rate, t);
                let energy = energy0 * (gdp0 / gdp).powf(*energy_elasticity);
                let renew = |t: f64| renew0 + (renew1 - renew0) * sigmoid(renew_rate * (t - renew_mid));
                let nuclear = |t: f64| nuclear_max * sigmoid(nuclear_rate * (t - nuclear_mid));
                let fossil = |t: f64| 1.0 - renew(t) - nuclear(t);
                let carbon = carbon0 * (0.4 + 0.6 * fossil(t) / fossil(0.0));
                [pop, gdp, energy, carbon, fossil(t), nuclear(t), renew(t)]
            }
        }
    }
}

/// A synthetic country: its ISO-style code and closed-form trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCountry {
    pub code: String,
    pub truth: GroundTruth,
}

/// `XAA`, `XAB`, … (the X-prefixed range is reserved for user assignment).
pub fn synthetic_code(index: usize) -> String {
    let a = (b'A' + ((index / 26) % 26) as u8) as char;
    let b = (b'A' + (index % 26) as u8) as char;
    format!("X{a}{b}")
}

fn draw_simplex(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let fossil = rng.gen_range(0.35..0.85);
    let nuclear = rng.gen_range(0.0..0.6) * (1.0 - fossil);
    [fossil, nuclear, 1.0 - fossil - nuclear]
}

fn draw_country(rng: &mut ChaCha8Rng, spec: &SynthSpec) -> GroundTruth {
    match spec.kind {
        DynamicsKind::Linear => {
            let pop = rng.gen_range(5e6..8e7);
            let gdp = rng.gen_range(5e3..3e4);
            let energy = rng.gen_range(4.0..10.0);
            let carbon = rng.gen_range(50.0..80.0);
            let s0 = draw_simplex(rng);
            let s1 = draw_simplex(rng);
            let initial = [pop, gdp, energy, carbon, s0[0], s0[1], s0[2]];
            let target = [
                pop * rng.gen_range(0.7..1.6),
                gdp * rng.gen_range(1.5..3.0),
                energy * rng.gen_range(0.4..0.9),
                carbon * rng.gen_range(0.6..1.0),
                s1[0],
                s1[1],
                s1[2],
            ];
            let mut rates = [0.0; NUM_VARS];
            for r in rates.iter_mut().take(4) {
                *r = rng.gen_range(0.02..0.08);
            }
            let share_rate = rng.gen_range(0.02..0.08);
            for r in rates.iter_mut().skip(4) {
                *r = share_rate;
            }
            if let Some(rate) = spec.decay_rate {
                rates = [rate; NUM_VARS];
            }
            GroundTruth::Linear { initial, target, rates }
        }
        DynamicsKind::LogisticCoupled => {
            let pop0 = rng.gen_range(5e6..8e7);
            let gdp0 = rng.gen_range(5e3..3e4);
            let renew0 = rng.gen_range(0.02..0.15);
            let nuclear_max = rng.gen_range(0.05..0.4);
            let renew1 = rng.gen_range(0.3..(0.9 - nuclear_max));
            GroundTruth::LogisticCoupled {
                pop0,
                pop_cap: pop0 * rng.gen_range(1.2..1.8),
                pop_rate: rng.gen_range(0.04..0.1),
                gdp0,
                gdp_cap: gdp0 * rng.gen_range(2.0..4.0),
                gdp_rate: rng.gen_range(0.05..0.12),
                energy0: rng.gen_range(4.0..10.0),
                energy_elasticity: rng.gen_range(0.3..0.7),
                carbon0: rng.gen_range(50.0..80.0),
                renew0,
                renew1,
                renew_rate: rng.gen_range(0.15..0.35),
                renew_mid: rng.gen_range(30.0..45.0),
                nuclear_max,
                nuclear_rate: rng.gen_range(0.15..0.35),
                nuclear_mid: rng.gen_range(5.0..20.0),
            }
        }
    }
}

/// Ground-truth dynamics for every country of the spec; deterministic in the seed.
pub fn synthetic_countries(spec: &SynthSpec) -> Vec<SyntheticCountry> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.country_count)
        .map(|i| SyntheticCountry {
            code: synthetic_code(i),
            truth: draw_country(&mut rng, spec),
        })
        .collect()
}

/// Raw measured quantities implied by the indicator trajectories.
pub fn synthetic_records(spec: &SynthSpec) -> Vec<RawRecord> {
    let mut records = Vec::new();
    for country in synthetic_countries(spec) {
        for year in spec.first_year..=spec.last_year {
            let v = country.truth.state((year - spec.first_year) as f64);
            let gdp = v[0] * v[1];
            let energy = gdp * v[2];
            let emissions = energy * v[3];
            let electricity = 0.2 * energy;
            records.push(RawRecord::complete(
                &country.code,
                year,
                v[0],
                gdp,
                energy,
                emissions,
                [electricity * v[4], electricity * v[5], electricity * v[6]],
            ));
        }
    }
    records
}

/// Seeded synthetic panels in physical units, one per country.
pub fn generate_synthetic_panel(seed: u64, country_count: usize, kind: DynamicsKind) -> Result<Vec<Panel>> {
    generate_from_spec(&SynthSpec::new(seed, country_count, kind))
}

pub fn generate_from_spec(spec: &SynthSpec) -> Result<Vec<Panel>> {
    panels_from_records(&synthetic_records(spec))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_is_bit_identical() {
        for kind in [DynamicsKind::Linear, DynamicsKind::LogisticCoupled] {
            let a = generate_synthetic_panel(7, 3, kind).unwrap();
            let b = generate_synthetic_panel(7, 3, kind).unwrap();
            assert_eq!(a, b);
            let c = generate_synthetic_panel(8, 3, kind).unwrap();
            assert_ne!(a, c);
        }
    }

    #[test]
    fn shares_on_simplex() {
        for kind in [DynamicsKind::Linear, DynamicsKind::LogisticCoupled] {
            for p in generate_synthetic_panel(3, 5, kind).unwrap() {
                assert_eq!(p.len(), 49);
                assert!(p.is_complete());
                for row in p.values() {
                    let s: f64 = row[4..].iter().sum();
                    assert!((s - 1.0).abs() < 1e-9);
                    assert!(row[4..].iter().all(|x| (0.0..=1.0).contains(x)));
                }
            }
        }
    }

    #[test]
    fn zero_decay_rate_is_constant() {
        let mut spec = SynthSpec::new(1, 2, DynamicsKind::Linear);
        spec.decay_rate = Some(0.0);
        for p in generate_from_spec(&spec).unwrap() {
            let first = p.values()[0];
            for row in p.values() {
                for j in 0..NUM_VARS {
                    assert!((row[j] - first[j]).abs() <= 1e-12 * first[j].abs());
                }
            }
        }
    }

    #[test]
    fn panels_match_ground_truth() {
        let spec = SynthSpec::new(11, 2, DynamicsKind::LogisticCoupled);
        let truth = synthetic_countries(&spec);
        let panels = generate_from_spec(&spec).unwrap();
        for (c, p) in truth.iter().zip(&panels) {
            assert_eq!(c.code, p.country());
            for (k, row) in p.values().iter().enumerate() {
                let expect = c.truth.state(k as f64);
                for j in 0..NUM_VARS {
                    assert!((row[j] - expect[j]).abs() <= 1e-9 * expect[j].abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn codes() {
        assert_eq!(synthetic_code(0), "XAA");
        assert_eq!(synthetic_code(27), "XBB");
    }
}
