//! Halton design of experiments over the (V∞, α) onflow domain.
//!
//! Point `k` of a plan is the pair of radical inverses of `start_index + k`
//! in bases 2 and 3, scaled into the domain bounds. Because every point
//! depends only on its own sequence index, a longer plan always begins with
//! the shorter one, which is what lets datasets grow without resampling.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil;

/// Bases of the two Halton dimensions: V∞ uses 2, α uses 3.
pub const HALTON_BASES: [u32; 2] = [2, 3];

/// Index 0 maps onto the domain corner, so plans start at 1.
pub const DEFAULT_START_INDEX: u64 = 1;

/// Rectangular (V∞ [m/s], α [deg]) domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DomainBounds {
    pub v_min: f64,
    pub v_max: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
}

impl DomainBounds {
    pub fn new(v_min: f64, v_max: f64, alpha_min: f64, alpha_max: f64) -> Result<Self> {
        let b = DomainBounds {
            v_min,
            v_max,
            alpha_min,
            alpha_max,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.v_min, self.v_max, self.alpha_min, self.alpha_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("domain bounds must be finite"));
        }
        if !(self.v_min < self.v_max) {
            return Err(Error::invalid(format!(
                "v_min ({}) must be below v_max ({})",
                self.v_min, self.v_max
            )));
        }
        if !(self.alpha_min < self.alpha_max) {
            return Err(Error::invalid(format!(
                "alpha_min ({}) must be below alpha_max ({})",
                self.alpha_min, self.alpha_max
            )));
        }
        Ok(())
    }

    pub fn contains(&self, p: &DoePoint) -> bool {
        (self.v_min..=self.v_max).contains(&p.v_inf)
            && (self.alpha_min..=self.alpha_max).contains(&p.alpha)
    }
}

impl Default for DomainBounds {
    /// V∞ ∈ [40, 70] m/s, α ∈ [−15, 17] deg.
    fn default() -> Self {
        DomainBounds {
            v_min: 40.0,
            v_max: 70.0,
            alpha_min: -15.0,
            alpha_max: 17.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoePoint {
    pub v_inf: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoePlan {
    pub points: Vec<DoePoint>,
    pub bounds: DomainBounds,
    pub start_index: u64,
    pub bases: [u32; 2],
}

/// Van der Corput radical inverse: the base-`base` digits of `index`
/// mirrored about the radix point.
///
/// The digits are accumulated as an exact integer fraction and divided
/// once, so the result is the correctly rounded value of the fraction.
pub fn radical_inverse(index: u64, base: u32) -> Result<f64> {
    if base < 2 {
        return Err(Error::invalid(format!("radical inverse base must be >= 2, got {base}")));
    }
    let b = base as u128;
    let mut rest = index as u128;
    let mut numerator: u128 = 0;
    let mut denominator: u128 = 1;
    while rest > 0 {
        numerator = numerator * b + rest % b;
        denominator *= b;
        rest /= b;
    }
    // Very long digit strings can round up to 1.0 in f64.
    Ok((numerator as f64 / denominator as f64).min(1.0 - f64::EPSILON / 2.0))
}

/// Plan of `count` points starting at [`DEFAULT_START_INDEX`].
pub fn halton_plan(count: usize, bounds: DomainBounds) -> Result<DoePlan> {
    halton_plan_from(count, bounds, DEFAULT_START_INDEX)
}

pub fn halton_plan_from(count: usize, bounds: DomainBounds, start_index: u64) -> Result<DoePlan> {
    if count == 0 {
        return Err(Error::invalid("a DoE plan needs at least one point"));
    }
    if start_index == 0 {
        return Err(Error::invalid("start_index must be positive"));
    }
    bounds.validate()?;
    let points = (0..count as u64)
        .map(|k| {
            let i = start_index + k;
            let u = radical_inverse(i, HALTON_BASES[0])?;
            let w = radical_inverse(i, HALTON_BASES[1])?;
            Ok(DoePoint {
                v_inf: bounds.v_min + u * (bounds.v_max - bounds.v_min),
                alpha: bounds.alpha_min + w * (bounds.alpha_max - bounds.alpha_min),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DoePlan {
        points,
        bounds,
        start_index,
        bases: HALTON_BASES,
    })
}

impl DoePlan {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Delimited text: `index,v_inf,alpha_deg`, one row per point. `index`
    /// is the Halton sequence index of the row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,v_inf,alpha_deg\n");
        for (k, p) in self.points.iter().enumerate() {
            out.push_str(&format!("{},{:?},{:?}\n", self.start_index + k as u64, p.v_inf, p.alpha));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fsutil::write_atomic_str(path, &self.to_csv())
    }

    /// Reads a plan file, possibly produced by another tool. Every point must
    /// lie inside `bounds`; the start index is taken from the first row.
    pub fn read(path: &Path, bounds: DomainBounds) -> Result<DoePlan> {
        let text = fsutil::read_to_string(path)?;
        Self::parse(&text, bounds, Some(path))
    }

    pub fn parse(text: &str, bounds: DomainBounds, path: Option<&Path>) -> Result<DoePlan> {
        bounds.validate()?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| Error::parse(path, Some(1), e.to_string()))?
            .clone();
        let expected = ["index", "v_inf", "alpha_deg"];
        if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| h != e) {
            return Err(Error::parse(
                path,
                Some(1),
                format!("expected header `index,v_inf,alpha_deg`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
            ));
        }
        let mut points = Vec::new();
        let mut start_index = None;
        for record in reader.records() {
            let record = record.map_err(|e| {
                let line = e.position().map(|p| p.line());
                Error::parse(path, line, e.to_string())
            })?;
            let line = record.position().map(|p| p.line());
            let field = |i: usize| -> Result<&str> {
                record
                    .get(i)
                    .ok_or_else(|| Error::parse(path, line, format!("missing column {}", expected[i])))
            };
            let index: u64 = field(0)?
                .parse()
                .map_err(|_| Error::parse(path, line, "index is not a non-negative integer"))?;
            let v_inf = parse_finite(field(1)?, path, line)?;
            let alpha = parse_finite(field(2)?, path, line)?;
            let p = DoePoint { v_inf, alpha };
            if !bounds.contains(&p) {
                return Err(Error::parse(path, line, format!("point ({v_inf}, {alpha}) lies outside the domain bounds")));
            }
            start_index.get_or_insert(index);
            points.push(p);
        }
        if points.is_empty() {
            return Err(Error::parse(path, None, "plan file has no points"));
        }
        Ok(DoePlan {
            points,
            bounds,
            start_index: start_index.unwrap_or(DEFAULT_START_INDEX),
            bases: HALTON_BASES,
        })
    }
}

pub(crate) fn parse_finite(s: &str, path: Option<&Path>, line: Option<u64>) -> Result<f64> {
    let v: f64 = s
        .parse()
        .map_err(|_| Error::parse(path, line, format!("`{s}` is not a number")))?;
    if !v.is_finite() {
        return Err(Error::parse(path, line, format!("non-finite value `{s}`")));
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Digit-reversal oracle working on an explicit digit list.
    fn oracle(index: u64, base: u64) -> (u64, u64) {
        let mut digits = Vec::new();
        let mut i = index;
        while i > 0 {
            digits.push(i % base);
            i /= base;
        }
        let mut num = 0;
        let mut den = 1;
        for d in digits {
            num = num * base + d;
            den *= base;
        }
        (num, den)
    }

    #[test]
    fn radical_inverse_small_values() {
        assert_eq!(radical_inverse(0, 2).unwrap(), 0.0);
        assert_eq!(radical_inverse(1, 2).unwrap(), 0.5);
        assert_eq!(radical_inverse(2, 2).unwrap(), 0.25);
        assert_eq!(radical_inverse(3, 2).unwrap(), 0.75);
        assert_eq!(radical_inverse(1, 3).unwrap(), 1.0 / 3.0);
        assert_eq!(radical_inverse(2, 3).unwrap(), 2.0 / 3.0);
        assert_eq!(radical_inverse(3, 3).unwrap(), 1.0 / 9.0);
    }

    #[test]
    fn radical_inverse_matches_digit_oracle() {
        for base in [2u32, 3, 5, 7] {
            for i in 0..500u64 {
                let (n, d) = oracle(i, base as u64);
                assert_eq!(radical_inverse(i, base).unwrap(), n as f64 / d as f64, "i={i} base={base}");
            }
        }
    }

    #[test]
    fn radical_inverse_rejects_small_base() {
        assert!(matches!(radical_inverse(3, 1), Err(Error::InvalidArgument(_))));
        assert!(matches!(radical_inverse(3, 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn first_point_of_default_plan() {
        let plan = halton_plan(1, DomainBounds::default()).unwrap();
        assert_eq!(plan.start_index, 1);
        assert_eq!(plan.bases, [2, 3]);
        let p = plan.points[0];
        assert_eq!(p.v_inf, 55.0);
        assert!((p.alpha - (-15.0 + 32.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn zero_count_is_rejected() {
        assert!(halton_plan(0, DomainBounds::default()).is_err());
        assert!(DomainBounds::new(70.0, 40.0, -15.0, 17.0).is_err());
    }

    #[test]
    fn default_configuration_stays_in_bounds() {
        let b = DomainBounds::default();
        let plan = halton_plan(1024, b).unwrap();
        assert_eq!(plan.len(), 1024);
        for p in &plan.points {
            assert!((40.0..=70.0).contains(&p.v_inf));
            assert!((-15.0..=17.0).contains(&p.alpha));
        }
    }

    #[test]
    fn halves_of_the_domain_are_balanced() {
        let b = DomainBounds::default();
        let plan = halton_plan(1024, b).unwrap();
        let n = plan.len() as f64;
        let v_mid = 0.5 * (b.v_min + b.v_max);
        let a_mid = 0.5 * (b.alpha_min + b.alpha_max);
        let low_v = plan.points.iter().filter(|p| p.v_inf < v_mid).count() as f64 / n;
        let low_a = plan.points.iter().filter(|p| p.alpha < a_mid).count() as f64 / n;
        for frac in [low_v, 1.0 - low_v, low_a, 1.0 - low_a] {
            assert!((0.4..=0.6).contains(&frac), "fraction {frac}");
        }
    }

    #[test]
    fn prefix_of_long_plan_equals_short_plan() {
        let b = DomainBounds::default();
        let long = halton_plan(1024, b).unwrap();
        let short = halton_plan(128, b).unwrap();
        assert_eq!(&long.points[..128], &short.points[..]);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let plan = halton_plan(50, DomainBounds::default()).unwrap();
        let text = plan.to_csv();
        assert!(text.starts_with("index,v_inf,alpha_deg\n1,55.0,"));
        let back = DoePlan::parse(&text, plan.bounds, None).unwrap();
        assert_eq!(back, plan);
    }

    #[test]
    fn csv_rejects_points_outside_bounds() {
        let text = "index,v_inf,alpha_deg\n1,55.0,1.0\n2,80.0,1.0\n";
        match DoePlan::parse(text, DomainBounds::default(), None) {
            Err(Error::Parse { line: Some(3), .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn prefix_stability(n in 1usize..200, extra in 0usize..200) {
            let b = DomainBounds::default();
            let long = halton_plan(n + extra, b).unwrap();
            let short = halton_plan(n, b).unwrap();
            prop_assert_eq!(&long.points[..n], &short.points[..]);
        }

        #[test]
        fn radical_inverse_in_unit_interval(i in any::<u64>(), base in 2u32..40) {
            let r = radical_inverse(i, base).unwrap();
            prop_assert!((0.0..1.0).contains(&r));
        }
    }
}
