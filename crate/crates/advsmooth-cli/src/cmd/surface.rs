//! `surface`: evaluate every configured grid job over the shared dataset and
//! export each one under its job name in the requested formats.

use advsmooth_core::model::make_model;
use advsmooth_core::surface::{export_grid, sample_surface, GridFormat};

use crate::configs::{load_json, SurfaceConfig};
use crate::error::{at_field, in_check, CliError};
use crate::manifest::RunManifest;
use crate::{cmd, RunArgs};

pub fn run(args: &RunArgs) -> Result<(), CliError> {
    let rep = args.reporter();
    let (mut cfg, digest): (SurfaceConfig, String) = load_json(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    cmd::create_out_dir(&args.out)?;
    let data = cfg.data.build("data")?;

    let mut manifest = RunManifest::new(
        "surface",
        &args.config,
        digest,
        cmd::config_echo(&cfg)?,
        args.seed,
    );

    for (i, job) in cfg.jobs.iter().enumerate() {
        let model = at_field(
            &format!("jobs[{i}].model"),
            make_model(job.model.clone(), cfg.seed),
        )?;
        let check = format!("sample_surface({})", job.name);
        let grid = in_check(&check, sample_surface(&model, &data, &job.grid, cfg.seed))?;

        for format in &job.formats {
            let ext = match format {
                GridFormat::Csv => "csv",
                GridFormat::Json => "json",
            };
            let file = format!("{}.{ext}", job.name);
            in_check(&file, export_grid(&grid, &args.out.join(&file), *format))?;
            manifest.push_artifact(&args.out, &file)?;
            rep.detail(format!("  wrote {file}"));
        }

        let (lo, hi) = grid
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        rep.info(format!(
            "surface {}: {}x{} nodes, values in [{lo:.6}, {hi:.6}], {} kink segment(s)",
            job.name,
            grid.n1(),
            grid.n2(),
            grid.discontinuities.len()
        ));
    }

    manifest.write(&args.out)?;
    rep.info(format!(
        "{} artifact(s) + manifest.json in {}",
        manifest.artifacts.len(),
        args.out.display()
    ));
    Ok(())
}
