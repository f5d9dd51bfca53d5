use std::fmt;
use std::str::FromStr;

use fairot_core::{Penalty, Setting};
use serde::Deserialize;

use crate::error::CliError;

/// Predictors compared in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Deserialize)]
pub enum Method {
    #[serde(rename = "erm")]
    Erm,
    #[serde(rename = "ot-u-w2")]
    OtUnawareW2,
    #[serde(rename = "ot-u-tv")]
    OtUnawareTv,
    #[serde(rename = "ot-a-w2")]
    OtAwareW2,
    #[serde(rename = "ot-a-tv")]
    OtAwareTv,
    #[serde(rename = "plugin-hard")]
    PluginHard,
    #[serde(rename = "plugin-soft")]
    PluginSoft,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Erm,
        Method::OtUnawareW2,
        Method::OtUnawareTv,
        Method::OtAwareW2,
        Method::OtAwareTv,
        Method::PluginHard,
        Method::PluginSoft,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Erm => "erm",
            Method::OtUnawareW2 => "ot-u-w2",
            Method::OtUnawareTv => "ot-u-tv",
            Method::OtAwareW2 => "ot-a-w2",
            Method::OtAwareTv => "ot-a-tv",
            Method::PluginHard => "plugin-hard",
            Method::PluginSoft => "plugin-soft",
        }
    }

    /// Whether the method depends on lambda. ERM yields one record per seed.
    pub fn uses_lambda(self) -> bool {
        self != Method::Erm
    }

    /// Penalty and setting of the transport methods. The plug-in baselines
    /// reuse the aware W2 maps.
    pub fn relaxation(self) -> Option<(Penalty, Setting)> {
        match self {
            Method::Erm => None,
            Method::OtUnawareW2 => Some((Penalty::W2, Setting::Unaware)),
            Method::OtUnawareTv => Some((Penalty::TV, Setting::Unaware)),
            Method::OtAwareW2 | Method::PluginHard | Method::PluginSoft => {
                Some((Penalty::W2, Setting::Aware))
            }
            Method::OtAwareTv => Some((Penalty::TV, Setting::Aware)),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| CliError::Usage(format!("unknown method {s:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("ot".parse::<Method>().is_err());
        assert!(!Method::Erm.uses_lambda());
    }
}
