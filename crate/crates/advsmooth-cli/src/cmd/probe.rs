//! `probe`: run the full smoothness battery (sampled moduli, attack
//! curvature, worst-case Hessian spectral norm, sharpness) for one
//! model/dataset configuration and store the report as JSON.

use advsmooth_core::model::{make_model, ParamVector};
use advsmooth_core::probe::probe_report;

use crate::configs::{load_json, ProbeConfig};
use crate::error::{at_field, in_check, CliError};
use crate::manifest::RunManifest;
use crate::{cmd, RunArgs};

pub fn run(args: &RunArgs) -> Result<(), CliError> {
    let rep = args.reporter();
    let (mut cfg, digest): (ProbeConfig, String) = load_json(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    cmd::create_out_dir(&args.out)?;

    let model = at_field("model", make_model(cfg.model.clone(), cfg.seed))?;
    let data = cfg.data.build("data")?;
    if data.input_dim() != model.input_dim() {
        return Err(CliError::config(
            "data",
            format!(
                "input dim {} does not match the model's {}",
                data.input_dim(),
                model.input_dim()
            ),
        ));
    }
    let region = cfg.theta_region.build("theta_region")?;
    if region.dim() != model.param_dim() {
        return Err(CliError::config(
            "theta_region",
            format!(
                "dimension {} does not match the model's parameter dimension {}",
                region.dim(),
                model.param_dim()
            ),
        ));
    }
    let ball = cfg.ball.build("ball")?;
    let pgd = cfg.pgd.build("pgd", cfg.ball.epsilon, cfg.seed)?;
    let reference = at_field(
        "reference_theta",
        ParamVector::new(cfg.reference_theta.clone()),
    )?;

    let report = in_check(
        "probe_report",
        probe_report(
            &model,
            &data,
            &region,
            &ball,
            &pgd,
            &reference,
            cfg.n_samples,
            cfg.min_separation,
            cfg.sharpness_radius,
            cfg.seed,
        ),
    )?;

    cmd::write_json_artifact(&args.out, "probe_report.json", &report)?;

    let mut manifest = RunManifest::new(
        "probe",
        &args.config,
        digest,
        cmd::config_echo(&cfg)?,
        args.seed,
    );
    manifest.push_artifact(&args.out, "probe_report.json")?;
    manifest.write(&args.out)?;

    let c = &report.constants.constants;
    rep.info(format!(
        "moduli over {} pairs: c_theta {:.6}, c_theta_theta {:.6}, c_theta_x {:.6}",
        report.constants.n_samples, c.c_theta, c.c_theta_theta, c.c_theta_x
    ));
    match report.curvature_c {
        Some(v) => rep.info(format!("attack curvature c at reference: {v:.6}")),
        None => rep.info("attack curvature c: not defined at reference (no strictly interior nondegenerate attack)"),
    }
    rep.info(format!(
        "worst-case Hessian sigma1 {:.6} ({} iterations, converged: {})",
        report.sigma1.sigma1, report.sigma1.iterations, report.sigma1.converged
    ));
    rep.info(format!(
        "sharpness at radius {:.3}: exact {:.6}, quadratic approx {:.6}",
        cfg.sharpness_radius, report.sharpness.exact, report.sharpness.quadratic_approx
    ));
    rep.info(format!(
        "probe_report.json + manifest.json in {}",
        args.out.display()
    ));
    Ok(())
}
