//! Iteration budgets for incremental view fusion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Constant,
    Linear,
    Quadratic,
    Cosine,
}

impl std::str::FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(ScheduleKind::Constant),
            "linear" => Ok(ScheduleKind::Linear),
            "quadratic" => Ok(ScheduleKind::Quadratic),
            "cosine" => Ok(ScheduleKind::Cosine),
            other => Err(Error::Config(format!("unknown schedule kind {other:?}"))),
        }
    }
}

/// How linear and quadratic schedules grow from one step to the next.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Growth {
    /// `n_{k+1} = f(k)·n_k` with `f(k) = a·k` (linear) or `a²·k` (quadratic).
    #[default]
    Recurrence,
    /// `n_k = n_1 + a·(k-1)` (linear) or `n_1 + a·(k-1)²` (quadratic).
    Arithmetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub m: usize,
    pub counts: Vec<u64>,
    /// Solved growth factor; 1 for constant and cosine schedules.
    pub growth: f64,
}

impl Schedule {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn steps(&self) -> usize {
        self.counts.len()
    }
}

/// Number of fusion steps needed to add `views` views `m` at a time.
pub fn step_count(views: usize, m: usize) -> usize {
    views.div_ceil(m.max(1))
}

/// Floored counts for growth factor `a`, saturating instead of overflowing.
fn counts_for(kind: ScheduleKind, growth: Growth, a: f64, n1: f64, k: usize, cap: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(k);
    let mut n = n1;
    for step in 1..=k {
        let v = match growth {
            Growth::Recurrence => {
                if step > 1 {
                    let f = match kind {
                        ScheduleKind::Linear => a * (step - 1) as f64,
                        _ => a * a * (step - 1) as f64,
                    };
                    n = (n * f).min(cap);
                }
                n
            }
            Growth::Arithmetic => {
                let j = (step - 1) as f64;
                let inc = match kind {
                    ScheduleKind::Linear => a * j,
                    _ => a * j * j,
                };
                (n1 + inc).min(cap)
            }
        };
        out.push(v.floor().max(1.0));
    }
    out
}

/// Splits `total` iterations over `⌈views/m⌉` steps.
///
/// Linear and quadratic schedules solve by bisection for the largest growth
/// factor whose floored counts fit in the budget; any remainder goes to the
/// last step. `n1_hint` overrides the default first count `total/(2K)`.
pub fn solve_schedule(total: u64, views: usize, m: usize, kind: ScheduleKind, n1_hint: Option<u64>) -> Result<Schedule> {
    solve_schedule_with(total, views, m, kind, n1_hint, Growth::Recurrence)
}

pub fn solve_schedule_with(
    total: u64,
    views: usize,
    m: usize,
    kind: ScheduleKind,
    n1_hint: Option<u64>,
    growth: Growth,
) -> Result<Schedule> {
    if m == 0 {
        return Err(Error::Config("m must be at least 1".into()));
    }
    let k = step_count(views, m);
    if k == 0 {
        return Ok(Schedule {
            kind,
            m,
            counts: Vec::new(),
            growth: 1.0,
        });
    }
    if total < k as u64 {
        return Err(Error::BudgetTooSmall { total, steps: k });
    }
    let (mut counts, a) = match kind {
        ScheduleKind::Constant => (vec![total / k as u64; k], 1.0),
        ScheduleKind::Cosine => {
            let w: Vec<f64> = (1..=k).map(|j| 1.0 - (std::f64::consts::PI * j as f64 / k as f64).cos()).collect();
            let sum: f64 = w.iter().sum();
            let spare = (total - k as u64) as f64;
            (w.iter().map(|wj| 1 + (spare * wj / sum).floor() as u64).collect(), 1.0)
        }
        ScheduleKind::Linear | ScheduleKind::Quadratic => {
            let mut n1 = n1_hint.unwrap_or(total / (2 * k as u64)).max(1);
            if n1 + (k as u64 - 1) > total {
                n1 = total - (k as u64 - 1);
            }
            if growth == Growth::Arithmetic && n1 * k as u64 > total {
                n1 = total / k as u64;
            }
            let cap = total as f64 + 1.0;
            let fits = |a: f64| counts_for(kind, growth, a, n1 as f64, k, cap).iter().sum::<f64>() <= total as f64;
            // a = 0 gives counts (n1, 1, 1, ...) for the recurrence and
            // (n1, n1, ...) for the arithmetic form, both within budget
            let mut lo = 0.0;
            let mut hi = 1.0;
            while fits(hi) && hi < 1e12 {
                lo = hi;
                hi *= 2.0;
            }
            if fits(hi) {
                lo = hi;
            } else {
                while hi - lo > 1e-9 * hi.max(1.0) {
                    let mid = 0.5 * (lo + hi);
                    if fits(mid) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
            }
            let c = counts_for(kind, growth, lo, n1 as f64, k, cap);
            (c.iter().map(|v| *v as u64).collect(), lo)
        }
    };
    let used: u64 = counts.iter().sum();
    debug_assert!(used <= total);
    *counts.last_mut().expect("k >= 1") += total - used;
    Ok(Schedule {
        kind,
        m,
        counts,
        growth: a,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_budget_split() {
        let s = solve_schedule(30000, 54, 2, ScheduleKind::Constant, None).unwrap();
        assert_eq!(s.steps(), 27);
        assert!(s.counts[..26].iter().all(|&c| c == 1111));
        assert_eq!(s.counts[26], 1114);
        assert_eq!(s.total(), 30000);
    }

    #[test]
    fn single_step_gets_everything() {
        for kind in [ScheduleKind::Constant, ScheduleKind::Linear, ScheduleKind::Quadratic, ScheduleKind::Cosine] {
            let s = solve_schedule(777, 2, 2, kind, None).unwrap();
            assert_eq!(s.counts, vec![777]);
        }
    }

    #[test]
    fn budget_too_small() {
        assert!(matches!(
            solve_schedule(5, 20, 2, ScheduleKind::Quadratic, None),
            Err(Error::BudgetTooSmall { total: 5, steps: 10 })
        ));
        assert_eq!(solve_schedule(10, 20, 2, ScheduleKind::Quadratic, None).unwrap().counts, vec![1; 10]);
    }

    #[test]
    fn growing_schedules_are_monotone_before_residual() {
        for kind in [ScheduleKind::Linear, ScheduleKind::Quadratic] {
            for growth in [Growth::Recurrence, Growth::Arithmetic] {
                let s = solve_schedule_with(30000, 24, 2, kind, Some(200), growth).unwrap();
                assert_eq!(s.total(), 30000);
                if s.growth > 1.0 {
                    let head = &s.counts[..s.steps() - 1];
                    assert!(head.windows(2).all(|w| w[0] <= w[1]), "{kind:?} {growth:?} {:?}", s.counts);
                }
            }
        }
    }

    #[test]
    fn quadratic_recurrence_uses_solved_factor() {
        let s = solve_schedule(30000, 24, 2, ScheduleKind::Quadratic, Some(100)).unwrap();
        let a2 = s.growth * s.growth;
        let mut n = 100.0f64;
        for (k, &c) in s.counts.iter().enumerate().take(s.steps() - 1) {
            if k > 0 {
                n *= a2 * k as f64;
            }
            assert_eq!(c, n.floor().max(1.0) as u64);
        }
    }

    #[test]
    fn cosine_rises() {
        let s = solve_schedule(1000, 10, 1, ScheduleKind::Cosine, None).unwrap();
        assert_eq!(s.total(), 1000);
        assert!(s.counts.windows(2).all(|w| w[0] <= w[1]));
    }

    proptest! {
        #[test]
        fn counts_sum_to_budget(total in 1u64..200_000, views in 1usize..80, m in 1usize..5, kind in 0usize..4, hint in proptest::option::of(1u64..50_000)) {
            let kind = [ScheduleKind::Constant, ScheduleKind::Linear, ScheduleKind::Quadratic, ScheduleKind::Cosine][kind];
            let k = step_count(views, m) as u64;
            match solve_schedule(total, views, m, kind, hint) {
                Ok(s) => {
                    prop_assert_eq!(s.total(), total);
                    prop_assert!(s.counts.iter().all(|&c| c >= 1));
                    prop_assert_eq!(s.steps() as u64, k);
                }
                Err(Error::BudgetTooSmall { .. }) => prop_assert!(total < k),
                Err(e) => prop_assert!(false, "{e}"),
            }
        }
    }
}
