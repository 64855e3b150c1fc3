//! Microbenchmarks for the inner loops that dominate simulation time: the
//! steady-state cubic solve, the stochastic split step, and the line fit.

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use kerrsim::analysis::lorentzian_fit;
use kerrsim::dynamics::{steady_state_raw, SdeSystem};

fn bench_steady_state(c: &mut Criterion) {
    let (delta_nu, gamma, kerr) = (876.5e3, 212e3, 781.5);
    let f = 0.5 * gamma * 3.0e11;
    c.bench_function("steady_state_cubic", |b| {
        b.iter(|| {
            steady_state_raw(
                black_box(delta_nu),
                black_box(gamma),
                black_box(kerr),
                black_box(f),
            )
        })
    });
}

fn bench_sde_step(c: &mut Criterion) {
    let gamma = 212e3;
    let sys = SdeSystem::new(876.5e3, gamma, 781.5, 0.5 * gamma * 3.0e11, 0.5);
    let dt = 0.02 / gamma;
    let noise = sys.noise_scale(dt);
    c.bench_function("sde_step_x1000", |b| {
        b.iter(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let mut alpha = sys.steady_amplitude(10.0);
            for _ in 0..1000 {
                alpha = sys.step(alpha, 1.0, dt, noise, &mut rng);
            }
            black_box(alpha)
        })
    });
}

fn bench_lorentzian_fit(c: &mut Criterion) {
    let xs: Vec<f64> = (0..61).map(|k| (k as f64 - 30.0) * 0.4e5).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| kerrsim::analysis::lorentzian(x, 1.5e5, 4.0e5, 0.4, 0.1))
        .collect();
    c.bench_function("lorentzian_fit_61pt", |b| {
        b.iter(|| lorentzian_fit(black_box(&xs), black_box(&ys)).unwrap())
    });
}

criterion_group!(benches, bench_steady_state, bench_sde_step, bench_lorentzian_fit);
criterion_main!(benches);
