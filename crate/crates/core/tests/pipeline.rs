use lsm_core::persistence::{load_model_file, save_model_file};
use lsm_core::tasks::{gen_delay_task, memory_capacity_profile, ReadoutSettings};
use lsm_core::{
    fit_readout, run_sequence, steps_executed, train, FeatureKind, FeatureMode, LsmModel, Matrix,
    ReservoirConfig, TrainOptions,
};

fn small_config(seed: u64) -> ReservoirConfig {
    ReservoirConfig {
        n_neurons: 60,
        fan_in: 6,
        ..ReservoirConfig::benchmark_default(seed)
    }
}

fn delay_model(seed: u64, keep_cache: bool) -> (LsmModel, Matrix) {
    let (xs, ys) = gen_delay_task(300, 2, seed).unwrap();
    let options = TrainOptions {
        lambda: Some(1e-4),
        keep_cache,
        feature_mode: FeatureMode::new(FeatureKind::Both, 0.5).unwrap(),
        ..TrainOptions::default()
    };
    let model = train(&small_config(seed), &[(xs, ys)], &options).unwrap();
    let (test_xs, _) = gen_delay_task(80, 0, seed + 1000).unwrap();
    (model, test_xs)
}

#[test]
fn streaming_equals_batch_bitwise() {
    for seed in 0..5 {
        let (model, xs) = delay_model(seed, false);
        let batch = model.predict_sequence(&xs).unwrap();
        let mut session = model.open_session().unwrap();
        for t in 0..xs.rows() {
            let out = session.step(xs.row(t)).unwrap();
            assert_eq!(out[0].to_bits(), batch[(t, 0)].to_bits());
        }
        assert_eq!(session.step_index(), xs.rows() as u64);
    }
}

#[test]
fn run_sequence_trace_matches_session_state() {
    let (model, xs) = delay_model(11, false);
    let res = model.reservoir();
    let mode = *model.readout().unwrap().feature_mode();
    let mut state = res.zero_state();
    let mut trace_state = vec![0.0; res.n_neurons()];
    let mut session = model.open_session().unwrap();
    for t in 0..50 {
        let step = xs.slice_rows(t, t + 1);
        run_sequence(res, &mut state, &mut trace_state, &step, &mode).unwrap();
        session.step(xs.row(t)).unwrap();
        assert_eq!(session.state(), &state);
    }
}

#[test]
fn interleaved_sessions_are_isolated() {
    let (model, xs) = delay_model(3, false);
    let (_, ys) = gen_delay_task(80, 0, 77).unwrap();
    let solo_x = model.predict_sequence(&xs).unwrap();
    let solo_y = model.predict_sequence(&ys).unwrap();
    let mut a = model.open_session().unwrap();
    let mut b = model.open_session().unwrap();
    for t in 0..xs.rows() {
        assert_eq!(b.step(ys.row(t)).unwrap(), solo_y.row(t));
        assert_eq!(a.step(xs.row(t)).unwrap(), solo_x.row(t));
    }
}

#[test]
fn sessions_run_on_threads_over_a_shared_model() {
    let (model, xs) = delay_model(4, false);
    let solo = model.predict_sequence(&xs).unwrap();
    std::thread::scope(|scope| {
        for _ in 0..4 {
            scope.spawn(|| {
                let mut s = model.open_session().unwrap();
                for t in 0..xs.rows() {
                    assert_eq!(s.step(xs.row(t)).unwrap(), solo.row(t));
                }
            });
        }
    });
}

#[test]
fn retrain_after_reload_matches_fresh_training() {
    let dir = tempfile::tempdir().unwrap();
    let (model, _) = delay_model(5, true);
    let path = dir.path().join("model.json");
    save_model_file(&model, &path).unwrap();
    let loaded = load_model_file(&path).unwrap();
    assert_eq!(loaded, model);

    let (xs, _) = gen_delay_task(300, 2, 5).unwrap();
    let new_targets = Matrix::from_vec(300, 1, xs.as_slice().iter().map(|v| v * v).collect()).unwrap();
    let before = steps_executed();
    let retrained = loaded.retrain(&new_targets, None).unwrap();
    assert_eq!(steps_executed(), before);

    let options = TrainOptions {
        lambda: Some(1e-4),
        feature_mode: FeatureMode::new(FeatureKind::Both, 0.5).unwrap(),
        ..TrainOptions::default()
    };
    let fresh = train(&small_config(5), &[(xs, new_targets)], &options).unwrap();
    assert_eq!(retrained.readout(), fresh.readout());
}

#[test]
fn profile_readouts_equal_independent_fits() {
    let config = small_config(9);
    let settings = ReadoutSettings::default();
    let (d_max, steps) = (5, 400);
    let profile = memory_capacity_profile(&config, d_max, steps, 21, &settings).unwrap();

    let reservoir = lsm_core::generate_reservoir(&config).unwrap();
    let (xs, _) = gen_delay_task(steps, 0, 21).unwrap();
    let mut state = reservoir.zero_state();
    let mut trace_state = vec![0.0; reservoir.n_neurons()];
    let trace = run_sequence(&reservoir, &mut state, &mut trace_state, &xs, &settings.feature_mode).unwrap();
    let split = d_max + (steps - d_max) * 4 / 5;
    let rows = trace.features().slice_rows(d_max, split);
    for entry in &profile {
        let y: Vec<f64> = (d_max..split).map(|t| xs.as_slice()[t - entry.delay]).collect();
        let y = Matrix::from_vec(y.len(), 1, y).unwrap();
        let direct = fit_readout(&rows, &y, Some(settings.lambda), settings.feature_mode).unwrap();
        assert_eq!(entry.readout, direct, "delay {}", entry.delay);
    }
}

#[test]
fn washout_drops_leading_rows() {
    let (xs, ys) = gen_delay_task(50, 1, 2).unwrap();
    let options = TrainOptions {
        keep_cache: true,
        washout: 10,
        ..TrainOptions::default()
    };
    let model = train(&small_config(2), &[(xs.clone(), ys.clone()), (xs, ys)], &options).unwrap();
    let cache = model.cache().unwrap();
    assert_eq!(cache.boundaries(), &[0, 40, 80]);
    assert_eq!(cache.sequence(1), 40..80);
    assert_eq!(cache.features().slice_rows(0, 40), cache.features().slice_rows(40, 80));
}
