use absq_core::{Grid, GridSpec, PhysParams, State, Stepper};
use std::time::Instant;

fn main() {
    let g = Grid::new(GridSpec::new(128, 256, 10.0)).unwrap();
    let tau = 2.0 * std::f64::consts::PI;
    let om = g.field_from_fn(|x1, x2| 0.01 * (tau * x1).sin() * (-(x2 / 1.25) * (x2 / 1.25)).exp());
    let th = g.field_from_fn(|x1, x2| 0.01 * (tau * x1).cos() * (-(x2 / 1.25) * (x2 / 1.25)).exp());
    let mut state = State::new(
        g.dealias(&g.forward(&om).unwrap()),
        g.dealias(&g.forward(&th).unwrap()),
        0.0,
    )
    .unwrap();
    let mut stepper = Stepper::new(&g, PhysParams::new(1.0, 1.0), 1e-3).unwrap();
    // warmup
    for _ in 0..20 {
        stepper.step(&mut state);
    }
    let n = 200;
    let start = Instant::now();
    for _ in 0..n {
        stepper.step(&mut state);
    }
    let el = start.elapsed();
    println!(
        "{} steps in {:?} -> {:.3} ms/step -> 50k steps ~ {:.1} s",
        n,
        el,
        el.as_secs_f64() * 1e3 / n as f64,
        el.as_secs_f64() / n as f64 * 50_000.0
    );
}
