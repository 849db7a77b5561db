//! Splits an iteration budget over the fusion steps with each schedule shape.

use sparse360::schedule::{solve_schedule, solve_schedule_with, Growth, ScheduleKind};

pub fn run_example() -> sparse360::Result<()> {
    let (total, views, m) = (3000, 24, 2);
    for kind in [ScheduleKind::Constant, ScheduleKind::Linear, ScheduleKind::Quadratic, ScheduleKind::Cosine] {
        let s = solve_schedule(total, views, m, kind, None)?;
        println!("{kind:?}: {:?} (a = {:.3})", s.counts, s.growth);
    }
    let s = solve_schedule_with(total, views, m, ScheduleKind::Quadratic, None, Growth::Arithmetic)?;
    println!("Quadratic/Arithmetic: {:?}", s.counts);
    Ok(())
}

#[allow(dead_code)]
fn main() -> sparse360::Result<()> {
    run_example()
}
