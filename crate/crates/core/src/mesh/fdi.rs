//! FDI two-digit tooth codes to class indices.
//!
//! Quadrant-major: within an arch the right quadrant fills classes 1..=8 from
//! the central incisor outwards (11..18 upper, 41..48 lower) and the left
//! quadrant fills 9..=16 (21..28 upper, 31..38 lower). Classes `g` and `g + 8`
//! are therefore mirror-image teeth, and 8/16 are the third molars.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Jaw;
use crate::error::{Error, Result};
use crate::NUM_TEETH;

/// Default FDI code → class table.
pub fn default_class(fdi_code: u32) -> Option<u8> {
    let quadrant = fdi_code / 10;
    let tooth = fdi_code % 10;
    if fdi_code == 0 {
        return Some(0);
    }
    if !(1..=8).contains(&tooth) {
        return None;
    }
    match quadrant {
        1 | 4 => Some(tooth as u8),
        2 | 3 => Some(tooth as u8 + 8),
        _ => None,
    }
}

/// Maps an FDI code (or 0 for gingiva) to a class index in `0..=16`.
pub fn map_fdi(fdi_code: u32) -> Result<u8> {
    default_class(fdi_code).ok_or_else(|| Error::Label(format!("unknown FDI code {fdi_code}")))
}

/// Inverse of the default table for one arch.
pub fn class_to_fdi(class: u8, jaw: Jaw) -> Result<u32> {
    let class = class as u32;
    let code = match (class, jaw) {
        (0, _) => 0,
        (1..=8, Jaw::Upper) => 10 + class,
        (9..=16, Jaw::Upper) => 20 + class - 8,
        (1..=8, Jaw::Lower) => 40 + class,
        (9..=16, Jaw::Lower) => 30 + class - 8,
        _ => return Err(Error::Label(format!("class index {class} outside 0..=16"))),
    };
    Ok(code)
}

/// An FDI mapping, either the default table or a user-supplied override.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FdiMap {
    overrides: BTreeMap<u32, u8>,
}

impl FdiMap {
    /// Overrides replace the default entry for their code; the map is
    /// rejected when an override targets a class outside `0..=16`.
    pub fn with_overrides(overrides: BTreeMap<u32, u8>) -> Result<Self> {
        if let Some((code, class)) = overrides.iter().find(|(_, &c)| c as usize > NUM_TEETH) {
            return Err(Error::Label(format!(
                "override maps FDI {code} to class {class} outside 0..=16"
            )));
        }
        Ok(FdiMap { overrides })
    }

    pub fn class_of(&self, fdi_code: u32) -> Result<u8> {
        match self.overrides.get(&fdi_code) {
            Some(&c) => Ok(c),
            None => map_fdi(fdi_code),
        }
    }

    pub fn fdi_of(&self, class: u8, jaw: Jaw) -> Result<u32> {
        // Prefer an override whose default arch matches.
        let arch_of = |code: u32| match code / 10 {
            1 | 2 => Some(Jaw::Upper),
            3 | 4 => Some(Jaw::Lower),
            _ => None,
        };
        if let Some((&code, _)) = self
            .overrides
            .iter()
            .find(|(&code, &c)| c == class && (code == 0 || arch_of(code) == Some(jaw)))
        {
            return Ok(code);
        }
        class_to_fdi(class, jaw)
    }

    pub fn is_default(&self) -> bool {
        self.overrides.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const UPPER: [u32; 16] = [11, 12, 13, 14, 15, 16, 17, 18, 21, 22, 23, 24, 25, 26, 27, 28];
    const LOWER: [u32; 16] = [31, 32, 33, 34, 35, 36, 37, 38, 41, 42, 43, 44, 45, 46, 47, 48];

    #[test]
    fn background_and_examples() {
        assert_eq!(map_fdi(0).unwrap(), 0);
        assert_eq!(map_fdi(11).unwrap(), 1);
        assert_eq!(map_fdi(18).unwrap(), 8);
        assert_eq!(map_fdi(21).unwrap(), 9);
        assert_eq!(map_fdi(28).unwrap(), 16);
        assert!(matches!(map_fdi(99), Err(Error::Label(_))));
        assert!(matches!(map_fdi(19), Err(Error::Label(_))));
        assert!(matches!(map_fdi(10), Err(Error::Label(_))));
        assert!(matches!(map_fdi(51), Err(Error::Label(_))));
    }

    #[test]
    fn each_arch_is_a_bijection_onto_teeth() {
        for (arch, jaw) in [(UPPER, Jaw::Upper), (LOWER, Jaw::Lower)] {
            let mut seen = [false; 17];
            for code in arch {
                let c = map_fdi(code).unwrap() as usize;
                assert!((1..=16).contains(&c));
                assert!(!seen[c], "class {c} hit twice");
                seen[c] = true;
                assert_eq!(class_to_fdi(c as u8, jaw).unwrap(), code);
            }
            assert!(seen[1..].iter().all(|&s| s));
        }
    }

    #[test]
    fn mirror_teeth_share_a_group() {
        for tooth in 1..=8 {
            let right = map_fdi(10 + tooth).unwrap();
            let left = map_fdi(20 + tooth).unwrap();
            assert_eq!(left, right + 8);
            assert_eq!(map_fdi(40 + tooth).unwrap(), right);
            assert_eq!(map_fdi(30 + tooth).unwrap(), left);
        }
    }

    #[test]
    fn only_listed_codes_are_valid() {
        let valid: Vec<u32> = (0..100).filter(|&c| map_fdi(c).is_ok()).collect();
        let mut expected = vec![0];
        expected.extend(UPPER);
        expected.extend(LOWER);
        expected.sort();
        assert_eq!(valid, expected);
    }

    #[test]
    fn overrides_take_precedence() {
        let map = FdiMap::with_overrides([(11, 5), (91, 3)].into_iter().collect()).unwrap();
        assert_eq!(map.class_of(11).unwrap(), 5);
        assert_eq!(map.class_of(91).unwrap(), 3);
        assert_eq!(map.class_of(12).unwrap(), 2);
        assert_eq!(map.fdi_of(5, Jaw::Upper).unwrap(), 11);
        assert!(FdiMap::with_overrides([(11, 17)].into_iter().collect()).is_err());
    }
}
