//! `entropy`: tabulate the smoothed objective at listed parameter points.
//!
//! For each theta the exact quadrature returns the smoothed value, its
//! gradient, the Hessian and the Frobenius spectral-norm bound; the table
//! goes to stdout and `entropy_table.json`.

use advsmooth_core::entropy::local_entropy_exact;
use advsmooth_core::model::{make_model, ModelKind};
use advsmooth_core::surface::dataset_objective;
use nalgebra::DVector;
use serde::Serialize;

use crate::configs::{load_json, EntropyConfig};
use crate::error::{at_field, in_check, CliError};
use crate::manifest::RunManifest;
use crate::{cmd, RunArgs};

#[derive(Debug, Serialize)]
struct EntropyRow {
    theta: Vec<f64>,
    value: f64,
    gradient: Vec<f64>,
    /// Row-major d x d matrix.
    hessian: Vec<Vec<f64>>,
    sigma1_bound: f64,
}

#[derive(Debug, Serialize)]
struct EntropyTable<'a> {
    gamma: f64,
    quad: &'a advsmooth_core::entropy::QuadratureSpec,
    base: &'a advsmooth_core::surface::LossVariant,
    rows: Vec<EntropyRow>,
}

pub fn run(args: &RunArgs) -> Result<(), CliError> {
    let rep = args.reporter();
    let (mut cfg, digest): (EntropyConfig, String) = load_json(&args.config)?;
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
    if cfg.base.requires_linear() && !matches!(model.spec().kind, ModelKind::LinearLogistic) {
        return Err(CliError::config(
            "base",
            "closed-form worst-case objectives require the linear model",
        ));
    }
    let dim = model.param_dim();
    for (i, theta) in cfg.thetas.iter().enumerate() {
        if theta.len() != dim {
            return Err(CliError::config(
                format!("thetas[{i}]"),
                format!("must have {dim} coordinates, got {}", theta.len()),
            ));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(CliError::config(
                format!("thetas[{i}]"),
                "coordinates must be finite",
            ));
        }
    }

    let lossfn = |t: &DVector<f64>| -> f64 {
        dataset_objective(&model, &data, &cfg.base, t, cfg.seed).unwrap_or(f64::NAN)
    };

    let mut rows = Vec::with_capacity(cfg.thetas.len());
    for theta in &cfg.thetas {
        let point = DVector::from_row_slice(theta);
        let check = format!("local_entropy_exact(theta={theta:?})");
        let le = in_check(
            &check,
            local_entropy_exact(&lossfn, &point, cfg.gamma, &cfg.quad),
        )?;
        rows.push(EntropyRow {
            theta: theta.clone(),
            value: le.value,
            gradient: le.gradient.iter().copied().collect(),
            hessian: (0..dim)
                .map(|r| (0..dim).map(|c| le.hessian[(r, c)]).collect())
                .collect(),
            sigma1_bound: le.sigma1_bound,
        });
    }

    print_table(&rep, dim, &rows);

    let table = EntropyTable {
        gamma: cfg.gamma,
        quad: &cfg.quad,
        base: &cfg.base,
        rows,
    };
    cmd::write_json_artifact(&args.out, "entropy_table.json", &table)?;

    let mut manifest = RunManifest::new(
        "entropy",
        &args.config,
        digest,
        cmd::config_echo(&cfg)?,
        args.seed,
    );
    manifest.push_artifact(&args.out, "entropy_table.json")?;
    manifest.write(&args.out)?;
    rep.info(format!(
        "entropy_table.json + manifest.json in {}",
        args.out.display()
    ));
    Ok(())
}

/// Full tabular dump for 2-parameter models (the common slice case); for
/// other dimensions the vectors live in the JSON artifact and stdout keeps
/// to summary columns.
fn print_table(rep: &cmd::Reporter, dim: usize, rows: &[EntropyRow]) {
    if dim == 2 {
        rep.info(format!(
            "{:>10} {:>10} {:>13} {:>13} {:>13} {:>13} {:>13} {:>13} {:>13}",
            "theta1", "theta2", "value", "grad1", "grad2", "h11", "h12", "h22", "sigma1_bound"
        ));
        for r in rows {
            rep.info(format!(
                "{:>10.5} {:>10.5} {:>13.6e} {:>13.6e} {:>13.6e} {:>13.6e} {:>13.6e} {:>13.6e} {:>13.6e}",
                r.theta[0],
                r.theta[1],
                r.value,
                r.gradient[0],
                r.gradient[1],
                r.hessian[0][0],
                r.hessian[0][1],
                r.hessian[1][1],
                r.sigma1_bound
            ));
        }
    } else {
        rep.info(format!(
            "{:>13} {:>13} {:>13}  theta",
            "value", "grad_norm", "sigma1_bound"
        ));
        for r in rows {
            let grad_norm = r.gradient.iter().map(|g| g * g).sum::<f64>().sqrt();
            rep.info(format!(
                "{:>13.6e} {:>13.6e} {:>13.6e}  {:?}",
                r.value, grad_norm, r.sigma1_bound, r.theta
            ));
        }
    }
}
