use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Sub};

use serde::{Deserialize, Serialize};

use super::CaseResult;

/// Exact rational, kept reduced with a positive denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Ratio {
    num: i128,
    den: i128,
}

fn gcd(mut a: i128, mut b: i128) -> i128 {
    a = a.abs();
    b = b.abs();
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

impl Ratio {
    pub fn new(num: i128, den: i128) -> Ratio {
        assert!(den != 0, "zero denominator");
        let s = if den < 0 { -1 } else { 1 };
        let g = gcd(num, den);
        Ratio { num: s * num / g, den: s * den / g }
    }

    pub fn int(n: i128) -> Ratio {
        Ratio { num: n, den: 1 }
    }

    pub fn zero() -> Ratio {
        Ratio::int(0)
    }

    /// `100·count/total`; zero when `total` is zero.
    pub fn percent(count: u64, total: u64) -> Ratio {
        if total == 0 {
            Ratio::zero()
        } else {
            Ratio::new(100 * count as i128, total as i128)
        }
    }

    pub fn numer(self) -> i128 {
        self.num
    }

    pub fn denom(self) -> i128 {
        self.den
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Decimal text rounded half away from zero.
    pub fn round(self, decimals: u32) -> String {
        let scale = 10i128.pow(decimals);
        let x = (self.num * scale).abs();
        let (mut q, r) = (x / self.den, x % self.den);
        if 2 * r >= self.den {
            q += 1;
        }
        let sign = if self.num < 0 && q != 0 { "-" } else { "" };
        if decimals == 0 {
            return format!("{sign}{q}");
        }
        format!("{sign}{}.{:0width$}", q / scale, q % scale, width = decimals as usize)
    }

    /// Like `round` with a leading `+` on positive values.
    pub fn round_signed(self, decimals: u32) -> String {
        let s = self.round(decimals);
        if s.starts_with('-') || s.trim_start_matches(['0', '.']).is_empty() {
            s
        } else {
            format!("+{s}")
        }
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl Add for Ratio {
    type Output = Ratio;
    fn add(self, o: Ratio) -> Ratio {
        Ratio::new(self.num * o.den + o.num * self.den, self.den * o.den)
    }
}

impl Sub for Ratio {
    type Output = Ratio;
    fn sub(self, o: Ratio) -> Ratio {
        Ratio::new(self.num * o.den - o.num * self.den, self.den * o.den)
    }
}

impl Mul for Ratio {
    type Output = Ratio;
    fn mul(self, o: Ratio) -> Ratio {
        Ratio::new(self.num * o.num, self.den * o.den)
    }
}

impl Div for Ratio {
    type Output = Ratio;
    fn div(self, o: Ratio) -> Ratio {
        Ratio::new(self.num * o.den, self.den * o.num)
    }
}

impl PartialOrd for Ratio {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ratio {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }
}

/// Δ% of `total` against `baseline`.
pub fn delta_percent(total: Ratio, baseline: Ratio) -> Ratio {
    Ratio::int(100) * (total - baseline) / baseline
}

/// Aggregate counts for one mode.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub mode: String,
    pub cases: u64,
    pub tests: u64,
    pub passed_cases: u64,
    pub passed_tests: u64,
    pub exec_complete: u64,
    pub graph_valid: u64,
    pub both_success: u64,
}

impl MetricsTable {
    pub fn crate_pct(&self) -> Ratio {
        Ratio::percent(self.passed_cases, self.cases)
    }

    pub fn trate_pct(&self) -> Ratio {
        Ratio::percent(self.passed_tests, self.tests)
    }

    pub fn exec_pct(&self) -> Ratio {
        Ratio::percent(self.exec_complete, self.cases)
    }

    pub fn graph_pct(&self) -> Ratio {
        Ratio::percent(self.graph_valid, self.cases)
    }

    pub fn both_pct(&self) -> Ratio {
        Ratio::percent(self.both_success, self.cases)
    }

    /// Printed row cells: pass rates to 0.1, the rest to 0.01.
    pub fn cells(&self) -> [String; 5] {
        [
            self.crate_pct().round(1),
            self.trate_pct().round(1),
            self.exec_pct().round(2),
            self.graph_pct().round(2),
            self.both_pct().round(2),
        ]
    }
}

pub fn compute_metrics(mode: &str, cases: &[CaseResult]) -> MetricsTable {
    let count = |f: &dyn Fn(&CaseResult) -> bool| cases.iter().filter(|c| f(c)).count() as u64;
    MetricsTable {
        mode: mode.to_string(),
        cases: cases.len() as u64,
        tests: cases.iter().map(|c| c.verdicts.len() as u64).sum(),
        passed_cases: count(&|c| c.passed()),
        passed_tests: cases.iter().map(|c| c.passed_tests() as u64).sum(),
        exec_complete: count(&|c| c.exec_complete),
        graph_valid: count(&|c| c.graph_valid),
        both_success: count(&|c| c.both_success()),
    }
}

/// One table per mode, in order of first appearance.
pub fn metrics_by_mode(cases: &[CaseResult]) -> Vec<MetricsTable> {
    super::group_by_mode(cases)
        .into_iter()
        .map(|(mode, group)| {
            let owned: Vec<CaseResult> = group.into_iter().cloned().collect();
            compute_metrics(&mode, &owned)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(Ratio::percent(8, 141).round(1), "5.7");
        assert_eq!(Ratio::new(1, 8).round(2), "0.13");
        assert_eq!(Ratio::new(-1, 8).round(2), "-0.13");
        assert_eq!(Ratio::new(1, 3).round(0), "0");
        assert_eq!(Ratio::new(-1, 1000).round(1), "0.0");
        assert_eq!(Ratio::percent(0, 0).round(1), "0.0");
        assert_eq!(Ratio::new(5, 2).round_signed(1), "+2.5");
        assert_eq!(Ratio::zero().round_signed(1), "0.0");
    }

    #[test]
    fn arithmetic() {
        let a = Ratio::new(1, 2) + Ratio::new(1, 3);
        assert_eq!(a, Ratio::new(5, 6));
        assert_eq!(Ratio::new(2, -4), Ratio::new(-1, 2));
        assert_eq!(delta_percent(Ratio::int(9324), Ratio::int(14132)).round(1), "-34.0");
        assert!(Ratio::new(1, 3) < Ratio::new(1, 2));
    }
}
