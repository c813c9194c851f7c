use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Maximum number of components in an exposure value.
pub const MAX_PARTS: usize = 4;

/// A point of the exposure set Δ: a short tuple of exact rationals.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Exposure {
    len: u8,
    parts: [Ratio<i64>; MAX_PARTS],
}

impl Exposure {
    pub fn new(parts: &[Ratio<i64>]) -> Self {
        assert!(parts.len() <= MAX_PARTS, "exposure has more than {MAX_PARTS} parts");
        let mut buf = [Ratio::from_integer(0); MAX_PARTS];
        buf[..parts.len()].copy_from_slice(parts);
        Self {
            len: parts.len() as u8,
            parts: buf,
        }
    }

    pub fn ints(parts: &[i64]) -> Self {
        let r: Vec<Ratio<i64>> = parts.iter().map(|&p| Ratio::from_integer(p)).collect();
        Self::new(&r)
    }

    pub fn parts(&self) -> &[Ratio<i64>] {
        &self.parts[..self.len as usize]
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Components as floats, for outcome models.
    pub fn as_f64(&self) -> Vec<f64> {
        self.parts().iter().map(|r| *r.numer() as f64 / *r.denom() as f64).collect()
    }
}

impl fmt::Display for Exposure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, p) in self.parts().iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{p}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Debug for Exposure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Exposure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parameter(format!("cannot parse exposure {s:?}; expected e.g. (1,1/2)"));
        let inner = s.trim().strip_prefix('(').and_then(|r| r.strip_suffix(')')).ok_or_else(bad)?;
        if inner.trim().is_empty() {
            return Ok(Self::new(&[]));
        }
        let parts: Vec<Ratio<i64>> = inner
            .split(',')
            .map(|p| {
                let p = p.trim();
                match p.split_once('/') {
                    Some((a, b)) => {
                        let (a, b) = (a.trim().parse::<i64>(), b.trim().parse::<i64>());
                        match (a, b) {
                            (Ok(a), Ok(b)) if b != 0 => Ok(Ratio::new(a, b)),
                            _ => Err(bad()),
                        }
                    }
                    None => p.parse::<i64>().map(Ratio::from_integer).map_err(|_| bad()),
                }
            })
            .collect::<Result<_>>()?;
        if parts.len() > MAX_PARTS {
            return Err(bad());
        }
        Ok(Self::new(&parts))
    }
}

impl Serialize for Exposure {
    fn serialize<Z: Serializer>(&self, s: Z) -> std::result::Result<Z::Ok, Z::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Exposure {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
