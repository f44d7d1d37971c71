use serde::Serialize;
use tactile_core::illum::{optimize, IllumParams, OptBounds, OptimizeOptions, OptimizeResult};

use crate::error::{CliError, Result};
use crate::output::{ensure_dir, write_json};
use crate::Ctx;

#[derive(Serialize)]
struct Optimized<'a> {
    bounds: &'a OptBounds,
    budget: usize,
    within_bounds: bool,
    /// `1 - sigma_best / sigma_initial`.
    sigma_improvement: Option<f64>,
    #[serde(flatten)]
    result: &'a OptimizeResult,
}

pub fn run(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let o = &cfg.illum_opt;
    let initial = o.initial.unwrap_or_else(|| IllumParams::skewed(&o.bounds));
    if initial.to_vec().iter().any(|v| !v.is_finite()) {
        return Err(CliError::Config("initial illumination parameters must be finite".into()));
    }
    if o.budget < 8 {
        return Err(CliError::Config(format!("budget {} is below the simplex size", o.budget)));
    }
    if ctx.dry_run {
        log::info!("dry run: illumination optimization settings are valid");
        return Ok(());
    }
    let opts = OptimizeOptions {
        budget: o.budget,
        weights: o.weights,
        setup: o.setup,
    };
    let result = optimize(&initial, &o.bounds, &cfg.geometry(), &opts)?;

    let out = ensure_dir(&ctx.out)?;
    let sigma_improvement = match (result.metrics_initial, result.metrics_best) {
        (Some(a), Some(b)) if a.sigma > 0.0 => Some(1.0 - b.sigma / a.sigma),
        _ => None,
    };
    write_json(
        &out.join("optimized.json"),
        &Optimized {
            bounds: &o.bounds,
            budget: o.budget,
            within_bounds: o.bounds.contains(&result.best),
            sigma_improvement,
            result: &result,
        },
    )?;
    write_json(&out.join("illumination.json"), &result.config)?;
    result.write_trace_csv(&out.join("trace.csv"))?;
    result.mesh_before.write_heatmaps(&out, "before")?;
    result.mesh_after.write_heatmaps(&out, "after")?;
    log::info!(
        "cost {:.6} -> {:.6} in {} evaluations",
        result.f_initial,
        result.f_best,
        result.evaluations
    );
    Ok(())
}
