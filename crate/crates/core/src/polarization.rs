//! Polarization labels and detector-pair settings of the analyzer.
//!
//! Circular convention: R = (H − iV)/√2, L = (H + iV)/√2.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Error;

pub const CIRCULAR_CONVENTION: &str = "R=(H-iV)/sqrt2, L=(H+iV)/sqrt2";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    H,
    V,
    P,
    M,
    R,
    L,
}

impl Label {
    pub const ALL: [Label; 6] = [Label::H, Label::V, Label::P, Label::M, Label::R, Label::L];

    /// Unit Jones vector (u_H, u_V).
    pub fn jones(self) -> [Complex64; 2] {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let c = |re: f64, im: f64| Complex64::new(re, im);
        match self {
            Label::H => [c(1.0, 0.0), c(0.0, 0.0)],
            Label::V => [c(0.0, 0.0), c(1.0, 0.0)],
            Label::P => [c(s, 0.0), c(s, 0.0)],
            Label::M => [c(s, 0.0), c(-s, 0.0)],
            Label::R => [c(s, 0.0), c(0.0, -s)],
            Label::L => [c(s, 0.0), c(0.0, s)],
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    fn as_char(self) -> char {
        match self {
            Label::H => 'H',
            Label::V => 'V',
            Label::P => 'P',
            Label::M => 'M',
            Label::R => 'R',
            Label::L => 'L',
        }
    }
}

impl TryFrom<char> for Label {
    type Error = Error;

    fn try_from(c: char) -> Result<Self, Error> {
        match c.to_ascii_uppercase() {
            'H' => Ok(Label::H),
            'V' => Ok(Label::V),
            'P' => Ok(Label::P),
            'M' => Ok(Label::M),
            'R' => Ok(Label::R),
            'L' => Ok(Label::L),
            _ => Err(Error::UnknownLabel(c.to_string())),
        }
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let mut chars = s.trim().chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Label::try_from(c),
            _ => Err(Error::UnknownLabel(s.to_string())),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

/// Unordered detector pair. Stored with `first <= second`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DetectorSetting {
    first: Label,
    second: Label,
}

impl DetectorSetting {
    pub fn new(a: Label, b: Label) -> Self {
        if a <= b {
            Self { first: a, second: b }
        } else {
            Self { first: b, second: a }
        }
    }

    pub fn first(&self) -> Label {
        self.first
    }

    pub fn second(&self) -> Label {
        self.second
    }

    pub fn is_diagonal(&self) -> bool {
        self.first == self.second
    }
}

impl fmt::Display for DetectorSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.first, self.second)
    }
}

impl FromStr for DetectorSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let cleaned: Vec<char> = s.chars().filter(|c| !c.is_whitespace() && *c != '/').collect();
        match cleaned.as_slice() {
            [a, b] => Ok(DetectorSetting::new(Label::try_from(*a)?, Label::try_from(*b)?)),
            _ => Err(Error::UnknownLabel(s.to_string())),
        }
    }
}

/// All unordered pairs with repetition over {H,V,P,M,R,L}, minus RR and VV.
pub fn canonical_settings() -> Vec<DetectorSetting> {
    let excluded = [DetectorSetting::new(Label::R, Label::R), DetectorSetting::new(Label::V, Label::V)];
    let mut out = Vec::with_capacity(19);
    for (i, &a) in Label::ALL.iter().enumerate() {
        for &b in &Label::ALL[i..] {
            let s = DetectorSetting::new(a, b);
            if !excluded.contains(&s) {
                out.push(s);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nineteen_settings() {
        let s = canonical_settings();
        assert_eq!(s.len(), 19);
        assert!(!s.iter().any(|x| x.to_string() == "RR" || x.to_string() == "VV"));
        let mut dedup = s.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), 19);
    }

    #[test]
    fn setting_is_unordered() {
        let a: DetectorSetting = "MH".parse().unwrap();
        let b: DetectorSetting = "H/M".parse().unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_string(), "HM");
        assert!("HX".parse::<DetectorSetting>().is_err());
        assert!("H".parse::<DetectorSetting>().is_err());
    }

    #[test]
    fn jones_vectors_are_unit() {
        for l in Label::ALL {
            let [h, v] = l.jones();
            assert!((h.norm_sqr() + v.norm_sqr() - 1.0).abs() < 1e-15);
        }
    }
}
