use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Number of model variables carried in every state vector.
pub const NUM_VARS: usize = 7;

/// Index of the first electricity-share variable; the three shares are last.
pub const SHARE_START: usize = 4;

/// The seven model variables, in the fixed order used by state vectors,
/// CSV columns and network outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableId {
    Population,
    GdpPerCapita,
    EnergyIntensity,
    CarbonIntensity,
    ShareFossil,
    ShareNuclear,
    ShareRenewable,
}

impl VariableId {
    pub const ALL: [VariableId; NUM_VARS] = [
        VariableId::Population,
        VariableId::GdpPerCapita,
        VariableId::EnergyIntensity,
        VariableId::CarbonIntensity,
        VariableId::ShareFossil,
        VariableId::ShareNuclear,
        VariableId::ShareRenewable,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            VariableId::Population => "population",
            VariableId::GdpPerCapita => "gdp_per_capita",
            VariableId::EnergyIntensity => "energy_intensity",
            VariableId::CarbonIntensity => "carbon_intensity",
            VariableId::ShareFossil => "share_fossil",
            VariableId::ShareNuclear => "share_nuclear",
            VariableId::ShareRenewable => "share_renewable",
        }
    }

    pub fn is_share(self) -> bool {
        self.index() >= SHARE_START
    }
}

impl fmt::Display for VariableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VariableId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::argument(format!("unknown variable `{s}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_fixed_and_shares_last() {
        for (i, v) in VariableId::ALL.iter().enumerate() {
            assert_eq!(v.index(), i);
            assert_eq!(VariableId::from_index(i), Some(*v));
            assert_eq!(v.is_share(), i >= 4);
        }
        assert_eq!(VariableId::from_index(7), None);
    }

    #[test]
    fn names_round_trip() {
        for v in VariableId::ALL {
            assert_eq!(v.name().parse::<VariableId>().unwrap(), v);
            let json = serde_json::to_string(&v).unwrap();
            assert_eq!(json, format!("\"{}\"", v.name()));
        }
        assert!("gdp".parse::<VariableId>().is_err());
    }
}
