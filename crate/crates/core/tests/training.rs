use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use unicardio::diffusion::NoiseSchedule;
use unicardio::model::{load_checkpoint, ModelConfig};
use unicardio::signals::{decimate, normalize, AlignedSegment, NormMode, NormStats};
use unicardio::synthdata::{synth_trimodal, SynthConfig};
use unicardio::training::*;
use unicardio::Modality;

fn smoke_model() -> ModelConfig {
    ModelConfig {
        seq_len: 32,
        channels: 24,
        n_modules: 2,
        ..Default::default()
    }
}

/// 80 four-second segments at 8 Hz, min-max normalized per modality.
fn smoke_data() -> Vec<AlignedSegment> {
    let raw = synth_trimodal(&SynthConfig {
        n_segments: 80,
        seed: 5,
        ..Default::default()
    })
    .unwrap();
    let small: Vec<AlignedSegment> = raw
        .into_iter()
        .map(|r| AlignedSegment {
            signals: r.signals.iter().map(|s| decimate(s, 16).unwrap()).collect(),
            ..r
        })
        .collect();
    let stats: Vec<NormStats> = Modality::PHYSICAL
        .iter()
        .map(|&m| NormStats::fit(small.iter().map(|r| r.get(m).unwrap().samples.as_slice())).unwrap())
        .collect();
    small
        .into_iter()
        .map(|r| AlignedSegment {
            signals: r
                .signals
                .iter()
                .map(|s| normalize(s, &stats[s.modality.index()], NormMode::Minmax).unwrap())
                .collect(),
            ..r
        })
        .collect()
}

/// 40 epochs of 5 batches: 200 iterations at a flat learning rate.
fn smoke_curriculum() -> CurriculumConfig {
    CurriculumConfig {
        epochs: 40,
        lr_values: [3e-3; 3],
        optimizer: OptimizerConfig::adam(),
        ..Default::default()
    }
}

#[test]
fn smoke_training_reduces_loss() {
    let cfg = smoke_model();
    let data = smoke_data();
    let out = train(&cfg, &smoke_curriculum(), &NoiseSchedule::default_schedule(), &data, 3, &TrainOptions::default()).unwrap();
    assert_eq!(out.records.len(), 200);
    let mean = |r: &[TrainRecord]| r.iter().map(|x| x.loss).sum::<f64>() / r.len() as f64;
    let first = mean(&out.records[..20]);
    let last = mean(&out.records[180..]);
    assert!(last < 0.6 * first, "first {first:.4}, last {last:.4}");
    assert_eq!(out.phase_params.len(), 4);
    let phases: Vec<usize> = out.records.iter().map(|r| r.phase).collect();
    assert!(phases.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn training_is_deterministic_and_logs_round_trip() {
    let cfg = ModelConfig {
        seq_len: 32,
        channels: 12,
        n_modules: 1,
        ..Default::default()
    };
    let data = smoke_data();
    let cur = CurriculumConfig {
        epochs: 4,
        ..Default::default()
    };
    let sched = NoiseSchedule::default_schedule();
    let dir = tempfile::tempdir().unwrap();
    let opts = TrainOptions {
        checkpoint_dir: Some(dir.path().to_path_buf()),
        log_path: Some(dir.path().join("log.csv")),
        ..Default::default()
    };
    let a = train(&cfg, &cur, &sched, &data, 11, &opts).unwrap();
    let b = train(&cfg, &cur, &sched, &data, 11, &TrainOptions::default()).unwrap();
    assert_eq!(a.params.hash(), b.params.hash());
    assert_eq!(a.records, b.records);
    let c = train(&cfg, &cur, &sched, &data, 12, &TrainOptions::default()).unwrap();
    assert_ne!(a.params.hash(), c.params.hash());

    let logged = read_log(&dir.path().join("log.csv")).unwrap();
    assert_eq!(logged.len(), a.records.len());
    for (x, y) in logged.iter().zip(&a.records) {
        assert_eq!((x.iter, x.epoch, x.phase, &x.task), (y.iter, y.epoch, y.phase, &y.task));
        assert!((x.loss - y.loss).abs() <= 1e-12 * y.loss.abs().max(1.0));
    }
    for p in 1..=4 {
        assert!(dir.path().join(format!("phase{p}.uckpt")).exists());
    }
    let (ck_cfg, params) = load_checkpoint(&dir.path().join("final.uckpt")).unwrap();
    assert_eq!(ck_cfg, cfg);
    assert_eq!(params.hash(), a.params.hash());
}

#[test]
fn stop_after_phase_and_fixed_task() {
    let cfg = ModelConfig {
        seq_len: 32,
        channels: 12,
        n_modules: 1,
        ..Default::default()
    };
    let data = smoke_data();
    let cur = CurriculumConfig {
        epochs: 8,
        ..Default::default()
    };
    let sched = NoiseSchedule::default_schedule();
    let task = unicardio::TaskSpec::parse("trans:BP|cond:PPG,ECG").unwrap();
    let opts = TrainOptions {
        stop_after_phase: Some(2),
        fixed_task: Some(task.clone()),
        ..Default::default()
    };
    let out = train(&cfg, &cur, &sched, &data, 1, &opts).unwrap();
    assert_eq!(out.phase_params.len(), 2);
    assert!(out.records.iter().all(|r| r.phase <= 2 && r.task == task.name()));
}

#[test]
fn phase_mixtures_match_at_ten_thousand_draws() {
    let cur = CurriculumConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for phase in 1..=4 {
        let mut counts = [0usize; 3];
        for _ in 0..10_000 {
            counts[sample_task(phase, &mut rng, &cur).unwrap().n_conditions() - 1] += 1;
        }
        for k in 0..3 {
            let got = counts[k] as f64 / 1e4;
            assert!((got - cur.phase_mixtures[phase - 1][k]).abs() <= 0.02, "phase {phase}: {counts:?}");
        }
    }
}

#[test]
fn diverging_run_reports_iteration_and_keeps_weights() {
    let cfg = ModelConfig {
        seq_len: 32,
        channels: 12,
        n_modules: 1,
        ..Default::default()
    };
    let data = smoke_data();
    let cur = CurriculumConfig {
        epochs: 4,
        lr_values: [1e30, 1e30, 1e30],
        ..Default::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let opts = TrainOptions {
        checkpoint_dir: Some(dir.path().to_path_buf()),
        ..Default::default()
    };
    match train(&cfg, &cur, &NoiseSchedule::default_schedule(), &data, 0, &opts) {
        Err(unicardio::Error::Diverged { reason, .. }) => {
            assert!(reason.contains("last_good.uckpt"), "{reason}");
            assert!(dir.path().join("last_good.uckpt").exists());
        }
        other => panic!("expected divergence, got {:?}", other.map(|o| o.records.len())),
    }
}
