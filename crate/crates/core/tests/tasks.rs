use lsm_core::tasks::{gen_delay_task, memory_capacity_profile, nmse, ReadoutSettings};
use lsm_core::{LsmError, ReservoirConfig};

#[test]
fn memory_decays_with_delay_on_average() {
    let d_max = 8;
    let mut mean = vec![0.0; d_max + 1];
    for seed in 0..10 {
        let config = ReservoirConfig::benchmark_default(seed);
        let profile =
            memory_capacity_profile(&config, d_max, 1500, seed + 100, &ReadoutSettings::default())
                .unwrap();
        for s in &profile {
            mean[s.delay] += s.score / 10.0;
        }
    }
    for d in 0..=d_max - 2 {
        assert!(mean[d + 2] <= mean[d], "delay {d}: {mean:?}");
    }
}

#[test]
fn delay_task_shifts_input() {
    let (x, y) = gen_delay_task(50, 4, 9).unwrap();
    for t in 0..50 {
        let expected = if t >= 4 { x[(t - 4, 0)] } else { 0.0 };
        assert_eq!(y[(t, 0)], expected);
    }
    assert!(gen_delay_task(4, 4, 9).is_err());
}

#[test]
fn nmse_rejects_constant_target() {
    let (x, _) = gen_delay_task(20, 0, 1).unwrap();
    let flat = lsm_core::Matrix::zeros(20, 1);
    assert!(matches!(nmse(&x, &flat), Err(LsmError::DegenerateVariance)));
    assert_eq!(nmse(&x, &x).unwrap(), 0.0);
}
