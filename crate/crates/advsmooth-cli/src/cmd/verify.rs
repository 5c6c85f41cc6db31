//! `verify-lemmas`: run the named check battery and print one pass/fail row
//! per check with its pinned seed, headline statistic and tolerance. The
//! full outcome list lands in `verify_report.json`. Exit code 0 means every
//! requested check passed; a failure exits with 3 and names the first
//! failing check.

use advsmooth_core::verify::{
    first_failure, run_attack_checks, run_entropy_checks, run_probe_checks, CheckOutcome,
    CheckSuite,
};

use crate::configs::{load_json, VerifyConfig};
use crate::error::CliError;
use crate::manifest::RunManifest;
use crate::{cmd, RunArgs};

pub fn run(args: &RunArgs) -> Result<(), CliError> {
    let rep = args.reporter();
    if args.seed.is_some() {
        return Err(CliError::config(
            "--seed",
            "checks run at pinned per-check seeds; a seed override is not applicable",
        ));
    }
    let (cfg, digest): (VerifyConfig, String) = load_json(&args.config)?;
    cfg.validate()?;
    cmd::create_out_dir(&args.out)?;

    let mut outcomes: Vec<CheckOutcome> = Vec::new();
    for suite in &cfg.suites {
        rep.detail(format!("running suite {suite}..."));
        outcomes.extend(match suite {
            CheckSuite::Attacks => run_attack_checks(),
            CheckSuite::SmoothnessProbes => run_probe_checks(),
            CheckSuite::EntropySgd => run_entropy_checks(),
        });
    }

    rep.info(format!(
        "{:<18} {:<40} {:>6} {:>13} {:>13}  result",
        "suite", "check", "seed", "measured", "bound"
    ));
    for o in &outcomes {
        rep.info(format!(
            "{:<18} {:<40} {:>#6x} {:>13.4e} {:>13.4e}  {}",
            o.suite.to_string(),
            o.name,
            o.seed,
            o.measured,
            o.bound,
            if o.passed { "pass" } else { "FAIL" }
        ));
        if !o.passed {
            rep.info(format!("    {}", o.detail));
        } else {
            rep.detail(format!("    {}", o.detail));
        }
    }
    let passed = outcomes.iter().filter(|o| o.passed).count();
    rep.info(format!("{passed}/{} checks passed", outcomes.len()));

    cmd::write_json_artifact(&args.out, "verify_report.json", &outcomes)?;
    let mut manifest = RunManifest::new(
        "verify-lemmas",
        &args.config,
        digest,
        cmd::config_echo(&cfg)?,
        None,
    );
    manifest.push_artifact(&args.out, "verify_report.json")?;
    manifest.write(&args.out)?;

    if let Some(f) = first_failure(&outcomes) {
        return Err(CliError::numeric(
            f.name.clone(),
            format!(
                "measured {:.6e} against bound {:.6e}; {}",
                f.measured, f.bound, f.detail
            ),
        ));
    }
    Ok(())
}
