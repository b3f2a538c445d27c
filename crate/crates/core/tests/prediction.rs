use fastslow::prediction::{
    run_action_experiment, run_prediction, run_state_experiment, PredictionConfig, PredictionRun, PredictionTask,
};

fn epochs(run: &PredictionRun, phase: u8) -> usize {
    run.epochs_to_accuracy(phase, 0.99).unwrap_or(run.config.phase_epochs + 1)
}

fn losses(run: &PredictionRun) -> Vec<f64> {
    run.records.iter().filter(|r| r.phase == 1 && r.epoch > 0).map(|r| r.mean_loss).collect()
}

/// Every 10-epoch window in the first 30 epochs has lower mean loss than the
/// window just before it.
fn windows_decrease(loss: &[f64]) -> bool {
    let mean = |w: &[f64]| w.iter().sum::<f64>() / w.len() as f64;
    (20..=30).all(|end| mean(&loss[end - 10..end]) < mean(&loss[end - 20..end - 10]))
}

#[test]
fn next_state_takes_ten_times_longer() {
    let ratios: Vec<f64> = (0..5)
        .map(|seed| {
            let action = run_action_experiment(10, seed).unwrap();
            let state = run_state_experiment(10, seed).unwrap();
            epochs(&state, 1) as f64 / epochs(&action, 1) as f64
        })
        .collect();
    assert!(ratios.iter().filter(|&&r| r >= 10.0).count() >= 4, "{ratios:?}");
}

#[test]
fn actions_adapt_no_slower_than_they_first_converge() {
    for seed in 0..5 {
        let run = run_action_experiment(10, seed).unwrap();
        assert!(epochs(&run, 2) <= epochs(&run, 1), "seed {seed}");
    }
}

#[test]
fn loss_falls_window_over_window() {
    for task in [PredictionTask::Action, PredictionTask::State] {
        let good = (0..5)
            .filter(|&seed| {
                let cfg = PredictionConfig { phase_epochs: 30, ..PredictionConfig::new(task, 10, seed) };
                windows_decrease(&losses(&run_prediction(&cfg).unwrap()))
            })
            .count();
        assert!(good >= 4, "{task}: {good} of 5 seeds");
    }
}

#[test]
fn larger_grid_converges_more_slowly() {
    let small: usize = (0..3).map(|s| epochs(&run_action_experiment(10, s).unwrap(), 1)).sum();
    let large: usize = (0..3).map(|s| epochs(&run_action_experiment(20, s).unwrap(), 1)).sum();
    assert!(large >= small, "10x10 {small} vs 20x20 {large}");
}
