//! `train`: run one adversarial-training experiment; per-epoch metrics land
//! in `metrics.jsonl` and the best checkpoint (by test robust accuracy) in
//! `checkpoint.json`, both tied to the config by its hash.

use advsmooth_core::train::{
    adversarial_train, save_checkpoint, write_metrics_jsonl, CheckpointData, ExperimentConfig,
    SCHEMA_VERSION as TRAIN_SCHEMA_VERSION,
};

use crate::configs::load_json;
use crate::error::{at_field, in_check, CliError};
use crate::manifest::RunManifest;
use crate::{cmd, RunArgs};

pub fn run(args: &RunArgs) -> Result<(), CliError> {
    let rep = args.reporter();
    let (mut cfg, digest): (ExperimentConfig, String) = load_json(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    at_field("config", cfg.validate())?;
    cmd::create_out_dir(&args.out)?;

    let result = in_check(
        "adversarial_train",
        adversarial_train(&cfg, |m| {
            rep.detail(format!(
                "epoch {:>3}  lr {:.4}  train robust loss {:.6}  test robust acc {:.4}",
                m.epoch, m.lr, m.train_robust_loss, m.test_robust_acc
            ));
        }),
    )?;

    in_check(
        "metrics.jsonl",
        write_metrics_jsonl(&args.out.join("metrics.jsonl"), &result.metrics),
    )?;
    let checkpoint = CheckpointData {
        schema_version: TRAIN_SCHEMA_VERSION,
        config_sha256: result.config_sha256.clone(),
        epoch: result.best_epoch,
        test_robust_acc: result.best_test_robust_acc,
        theta: result.best_theta.to_vec(),
    };
    in_check(
        "checkpoint.json",
        save_checkpoint(&args.out.join("checkpoint.json"), &checkpoint),
    )?;

    let mut manifest = RunManifest::new(
        "train",
        &args.config,
        digest,
        cmd::config_echo(&cfg)?,
        args.seed,
    );
    manifest.push_artifact(&args.out, "metrics.jsonl")?;
    manifest.push_artifact(&args.out, "checkpoint.json")?;
    manifest.write(&args.out)?;

    let first = result.metrics.first();
    let last = result.metrics.last();
    if let (Some(first), Some(last)) = (first, last) {
        rep.info(format!(
            "{}: {} epochs, train robust loss {:.6} -> {:.6}",
            cfg.name,
            result.metrics.len(),
            first.train_robust_loss,
            last.train_robust_loss
        ));
    }
    rep.info(format!(
        "best test robust acc {:.4} at epoch {} (config {})",
        result.best_test_robust_acc,
        result.best_epoch,
        &result.config_sha256[..12]
    ));
    rep.info(format!(
        "metrics.jsonl + checkpoint.json + manifest.json in {}",
        args.out.display()
    ));
    Ok(())
}
