//! Implementations of the six subcommands. Each file-producing command
//! writes its artifacts atomically and finishes with a `manifest.json`
//! describing the run.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use adass_core::chain::{run_chain, ChainSettings};
use adass_core::diagnostics::{acf, pacf, summarize};
use adass_core::estimators::{
    estimate_act, estimate_dt, estimate_er, estimate_et, estimate_gr, sample_correlation,
    sample_covariance, RankEstimate, RankMethod,
};
use adass_core::experiments::{
    cov_table_csv, cov_table_text, rank_table_csv, rank_table_text, run_cov_study,
    run_rank_study, run_sensitivity_q, ExperimentGrid, SensitivityCell,
};
use adass_core::prior::{FactorCovPrior, IgPair, ModelConfig, NoisePrior};
use adass_core::synth::{
    gen_diagonal_pattern, gen_signed_two, gen_uniform_band, sample_data, Design,
};
use adass_core::{align, io, Error, Result, RngHandle};
use ndarray::Array2;

use crate::config::{resolve, ConfigMap};
use crate::manifest::ManifestBuilder;
use crate::{
    AlignArgs, DiagnoseArgs, EstimateArgs, ExperimentArgs, FitArgs, GlobalArgs, SimulateArgs,
};

fn load_config(path: Option<&PathBuf>) -> Result<ConfigMap> {
    match path {
        Some(p) => ConfigMap::load(p),
        None => Ok(ConfigMap::default()),
    }
}

fn ensure_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::format(format!("cannot create {}: {e}", dir.display())))
}

fn center_columns(m: &mut Array2<f64>) {
    for mut col in m.columns_mut() {
        let mean = col.sum() / col.len() as f64;
        col.mapv_inplace(|v| v - mean);
    }
}

/// Reads an observation matrix (rows = observations), optionally centering
/// each column.
fn load_data(path: &Path, center: bool) -> Result<Array2<f64>> {
    let loaded = io::read_matrix_csv(path, None)?;
    let mut data = loaded.matrix;
    if data.nrows() < 2 {
        return Err(Error::format(format!(
            "{}: need at least 2 observation rows, found {}",
            path.display(),
            data.nrows()
        )));
    }
    if center {
        center_columns(&mut data);
    }
    Ok(data)
}

pub fn cmd_fit(args: &FitArgs, global: &GlobalArgs) -> Result<()> {
    let mut cfg_file = load_config(args.config.as_ref())?;
    let q_flag = args.q.or(cfg_file.take::<usize>("q")?);
    let sparsity = resolve(args.sparsity_exponent, cfg_file.take("sparsity_exponent")?, 0.1);
    let noise_shape = resolve(args.noise_shape, cfg_file.take("noise_shape")?, 0.01);
    let noise_scale = resolve(args.noise_scale, cfg_file.take("noise_scale")?, 0.01);
    let per_variable = args.per_variable_noise || cfg_file.take_bool("per_variable_noise")?.unwrap_or(false);
    let correlated = args.correlated_factors || cfg_file.take_bool("correlated_factors")?.unwrap_or(false);
    let iw_dof = resolve(args.iw_dof, cfg_file.take("iw_dof")?, 0.0);
    let iters = resolve(args.iters, cfg_file.take("iters")?, 3000);
    let burn_in = resolve(args.burn_in, cfg_file.take("burn_in")?, 500);
    let thin = resolve(args.thin, cfg_file.take("thin")?, 5);
    let snapshots = args.snapshots || cfg_file.take_bool("snapshots")?.unwrap_or(false);
    let center = args.center || cfg_file.take_bool("center")?.unwrap_or(false);
    let seed = resolve(args.seed, cfg_file.take("seed")?, 0);
    let stream = resolve(args.stream, cfg_file.take("stream")?, 0);
    cfg_file.finish()?;

    let data = load_data(&args.data, center)?;
    let (n, p) = data.dim();

    let (mut cfg, clamped) = ModelConfig::with_defaults(n, p)?;
    if let Some(q) = q_flag {
        cfg.q = q;
    } else if clamped {
        eprintln!(
            "warning: default factor budget ceil(sqrt(n)) exceeded p - 1; clamped to q = {}",
            cfg.q
        );
    }
    cfg.sparsity_exponent = sparsity;
    let pair = IgPair::new(noise_shape, noise_scale);
    cfg.noise = if per_variable {
        NoisePrior::PerVariable(vec![pair; p])
    } else {
        NoisePrior::Shared(pair)
    };
    if correlated {
        let dof = if iw_dof > 0.0 { iw_dof } else { cfg.q as f64 + 2.0 };
        cfg.factor_cov = FactorCovPrior::inverse_wishart(&Array2::eye(cfg.q), dof);
    }
    cfg.validate()?;

    let settings = ChainSettings {
        n_iter: iters,
        burn_in,
        thin,
        snapshot_loadings: snapshots,
        seed,
        stream,
    };

    let snapshot = serde_json::json!({
        "n": n, "p": p, "q": cfg.q,
        "sparsity_exponent": sparsity,
        "noise_shape": noise_shape, "noise_scale": noise_scale,
        "per_variable_noise": per_variable,
        "correlated_factors": correlated,
        "iw_dof": if correlated { serde_json::json!(if iw_dof > 0.0 { iw_dof } else { cfg.q as f64 + 2.0 }) } else { serde_json::Value::Null },
        "iters": iters, "burn_in": burn_in, "thin": thin,
        "snapshots": snapshots, "center": center,
    });
    let mut manifest = ManifestBuilder::new(snapshot, seed, stream, global.effective_threads(), global.strict);
    manifest.input(&args.data);

    let trace = run_chain(data.view(), &cfg, &settings)?;
    let summary = summarize(&trace)?;

    ensure_out_dir(&args.out_dir)?;
    let trace_path = args.out_dir.join("trace.csv");
    io::write_trace_csv(&trace_path, &trace)?;
    manifest.output(&trace_path);
    let summary_path = args.out_dir.join("summary.json");
    io::write_summary_json(&summary_path, &summary)?;
    manifest.output(&summary_path);
    let sigma_path = args.out_dir.join("sigma_mean.sftr");
    io::write_matrix_binary(&sigma_path, &trace.sigma_mean.view())?;
    manifest.output(&sigma_path);
    if snapshots {
        let snap_dir = args.out_dir.join("snapshots");
        ensure_out_dir(&snap_dir)?;
        for (i, snap) in trace.snapshots.iter().enumerate() {
            let path = snap_dir.join(format!("snap_{i:04}.sftr"));
            io::write_matrix_binary(&path, &snap.view())?;
            manifest.output(&path);
        }
    }
    manifest.write(&args.out_dir)?;

    println!(
        "retained {} samples; factor count mode {} (posterior mass {:.3}); noise mean {:.4}",
        trace.retained,
        summary.xi_mode,
        trace.xi_mass(summary.xi_mode),
        summary.psi_mean
    );
    Ok(())
}

fn run_one_estimator(
    method: RankMethod,
    data: &Array2<f64>,
    r_max: usize,
    center: bool,
    seed: u64,
    stream: u64,
) -> Result<RankEstimate> {
    match method {
        RankMethod::Et => estimate_et(&sample_covariance(data.view(), center)?.view(), r_max),
        RankMethod::Er => estimate_er(&sample_covariance(data.view(), center)?.view(), r_max),
        RankMethod::Gr => estimate_gr(&sample_covariance(data.view(), center)?.view(), r_max),
        RankMethod::Act => {
            estimate_act(&sample_correlation(data.view(), center)?.view(), data.nrows(), r_max)
        }
        RankMethod::Dt => {
            let mut rng = RngHandle::new(seed, stream).rng();
            estimate_dt(&data.view(), r_max, &mut rng)
        }
    }
}

pub fn cmd_estimate(args: &EstimateArgs, _global: &GlobalArgs) -> Result<()> {
    let methods: Vec<RankMethod> = match &args.methods {
        None => vec![
            RankMethod::Et,
            RankMethod::Er,
            RankMethod::Gr,
            RankMethod::Act,
            RankMethod::Dt,
        ],
        Some(spec) => spec
            .split(',')
            .map(RankMethod::parse)
            .collect::<Result<Vec<_>>>()?,
    };
    let data = load_data(&args.data, false)?;
    println!("method,r_hat,r_max,runtime_ms");
    for method in methods {
        let started = Instant::now();
        let estimate = run_one_estimator(
            method,
            &data,
            args.r_max,
            args.center,
            args.seed,
            args.stream,
        )?;
        let runtime_ms = started.elapsed().as_secs_f64() * 1e3;
        for note in &estimate.notes {
            eprintln!("note ({}): {note}", method.name());
        }
        println!("{},{},{},{:.3}", method.name(), estimate.r_hat, estimate.r_max, runtime_ms);
    }
    Ok(())
}

pub fn cmd_simulate(args: &SimulateArgs, global: &GlobalArgs) -> Result<()> {
    let design = Design::parse(&args.design)?;
    let mut rng = RngHandle::new(args.seed, args.stream).rng();
    let truth = match design {
        Design::SignedTwo => {
            let (p, s, r) = require_dims(args)?;
            gen_signed_two(p, s, r, &mut rng)?
        }
        Design::UniformBand => {
            let (p, s, r) = require_dims(args)?;
            gen_uniform_band(p, s, r, &mut rng)?
        }
        Design::DiagonalPattern => {
            if args.p.is_some() || args.s.is_some() || args.r.is_some() {
                let fixed = gen_diagonal_pattern();
                return Err(Error::parameter(format!(
                    "the diagonal pattern is fixed at p={}, s={}, r={}; drop --p/--s/--r",
                    fixed.p(),
                    fixed.s,
                    fixed.r
                )));
            }
            gen_diagonal_pattern()
        }
    };
    let data = sample_data(&truth, args.n, &mut rng)?;

    let out_dir = args
        .out
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    ensure_out_dir(&out_dir)?;
    let truth_path = truth_sidecar_path(&args.out);

    let snapshot = serde_json::json!({
        "design": design.name(),
        "n": args.n, "p": truth.p(), "s": truth.s, "r": truth.r,
        "noise_variance": truth.noise_variance,
    });
    let mut manifest =
        ManifestBuilder::new(snapshot, args.seed, args.stream, global.effective_threads(), global.strict);
    io::write_matrix_csv(&args.out, &data.view(), None)?;
    manifest.output(&args.out);
    io::write_truth_json(&truth_path, &truth)?;
    manifest.output(&truth_path);
    manifest.write(&out_dir)?;

    println!(
        "wrote {} x {} data to {} (truth sidecar {})",
        data.nrows(),
        data.ncols(),
        args.out.display(),
        truth_path.display()
    );
    Ok(())
}

fn require_dims(args: &SimulateArgs) -> Result<(usize, usize, usize)> {
    match (args.p, args.s, args.r) {
        (Some(p), Some(s), Some(r)) => Ok((p, s, r)),
        _ => Err(Error::parameter(
            "this design needs --p, --s and --r (only the diagonal pattern is fixed)",
        )),
    }
}

/// `data.csv` -> `data.truth.json` next to it.
pub fn truth_sidecar_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "data".to_string());
    out.with_file_name(format!("{stem}.truth.json"))
}

pub fn cmd_diagnose(args: &DiagnoseArgs, global: &GlobalArgs) -> Result<()> {
    let records = io::read_trace_csv(&args.trace)?;
    if records.is_empty() {
        return Err(Error::format(format!("{}: empty trace", args.trace.display())));
    }
    let series: Vec<f64> = match args.column.as_str() {
        "xi" => records.iter().map(|r| r.xi as f64).collect(),
        "support" => records.iter().map(|r| r.support_size as f64).collect(),
        "psi" => records.iter().map(|r| r.psi).collect(),
        other => {
            return Err(Error::parameter(format!(
                "unknown trace column '{other}' (expected xi, support, or psi)"
            )));
        }
    };
    // Diagnose the post-burn-in portion; the burn-in transient would
    // dominate the autocorrelations otherwise.
    let post: Vec<f64> = records
        .iter()
        .zip(&series)
        .filter(|(r, _)| r.iteration > args.burn_in)
        .map(|(_, &v)| v)
        .collect();
    if post.len() < 3 {
        return Err(Error::parameter(format!(
            "only {} iterations after burn-in {}; nothing to diagnose",
            post.len(),
            args.burn_in
        )));
    }
    let max_lag = args.max_lag.min(post.len() - 2);

    ensure_out_dir(&args.out_dir)?;
    let snapshot = serde_json::json!({
        "column": args.column, "burn_in": args.burn_in, "thin": args.thin,
        "max_lag": max_lag,
    });
    let mut manifest = ManifestBuilder::new(snapshot, 0, 0, global.effective_threads(), global.strict);
    manifest.input(&args.trace);

    // Retained-sample summary of the chosen column.
    let retained: Vec<f64> = records
        .iter()
        .zip(&series)
        .filter(|(r, _)| {
            r.iteration > args.burn_in && (r.iteration - args.burn_in) % args.thin == 0
        })
        .map(|(_, &v)| v)
        .collect();
    let mut histogram = std::collections::BTreeMap::<String, usize>::new();
    for &v in &retained {
        *histogram.entry(format!("{v}")).or_insert(0) += 1;
    }
    let mode = histogram
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(k, _)| k.clone());
    let mean = if retained.is_empty() {
        f64::NAN
    } else {
        retained.iter().sum::<f64>() / retained.len() as f64
    };
    let summary = serde_json::json!({
        "column": args.column,
        "iterations": records.len(),
        "retained": retained.len(),
        "mode": mode,
        "mean": mean,
        "histogram": histogram,
    });
    let summary_path = args.out_dir.join("diagnose.json");
    io::atomic_write_json(&summary_path, &summary)?;
    manifest.output(&summary_path);

    // A constant series has no defined autocorrelation; the summary above
    // still gets written before the clean failure.
    let acf_values = match acf(&post, max_lag) {
        Ok(v) => v,
        Err(e) => {
            manifest.write(&args.out_dir)?;
            eprintln!("ACF undefined for '{}': {e}", args.column);
            return Err(e);
        }
    };
    let pacf_values = pacf(&post, max_lag)?;

    let mut acf_csv = String::from("lag,acf\n");
    for (lag, v) in acf_values.iter().enumerate() {
        acf_csv.push_str(&format!("{lag},{v}\n"));
    }
    let acf_path = args.out_dir.join("acf.csv");
    io::atomic_write(&acf_path, acf_csv.as_bytes())?;
    manifest.output(&acf_path);

    let mut pacf_csv = String::from("lag,pacf\n");
    for (lag, v) in pacf_values.iter().enumerate() {
        pacf_csv.push_str(&format!("{lag},{v}\n"));
    }
    let pacf_path = args.out_dir.join("pacf.csv");
    io::atomic_write(&pacf_path, pacf_csv.as_bytes())?;
    manifest.output(&pacf_path);

    manifest.write(&args.out_dir)?;
    println!(
        "diagnosed '{}': {} post-burn-in iterations, {} retained, lag-1 ACF {:.4}",
        args.column,
        post.len(),
        retained.len(),
        acf_values.get(1).copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

pub fn cmd_experiment(args: &ExperimentArgs, global: &GlobalArgs) -> Result<()> {
    let raw = fs::read_to_string(&args.grid)
        .map_err(|e| Error::format(format!("cannot open {}: {e}", args.grid.display())))?;
    let grid: ExperimentGrid = serde_json::from_str(&raw)
        .map_err(|e| Error::format(format!("{}: {e}", args.grid.display())))?;
    grid.validate()?;

    ensure_out_dir(&args.out_dir)?;
    let snapshot = serde_json::to_value(&grid)?;
    let mut manifest =
        ManifestBuilder::new(snapshot, grid.base_seed, 0, global.effective_threads(), global.strict);
    manifest.input(&args.grid);

    let run_rank = matches!(args.study.as_str(), "rank" | "all");
    let run_cov = matches!(args.study.as_str(), "cov" | "all");
    let run_sens = matches!(args.study.as_str(), "sensitivity" | "all");
    if !(run_rank || run_cov || run_sens) {
        return Err(Error::parameter(format!(
            "unknown study '{}' (expected rank, cov, sensitivity, or all)",
            args.study
        )));
    }

    if run_rank {
        let rows = run_rank_study(&grid)?;
        let csv_path = args.out_dir.join("rank_table.csv");
        io::atomic_write(&csv_path, rank_table_csv(&rows).as_bytes())?;
        manifest.output(&csv_path);
        let text = rank_table_text(&rows);
        let text_path = args.out_dir.join("rank_table.txt");
        io::atomic_write(&text_path, text.as_bytes())?;
        manifest.output(&text_path);
        print!("{text}");
    }
    if run_cov {
        let rows = run_cov_study(&grid)?;
        let csv_path = args.out_dir.join("cov_table.csv");
        io::atomic_write(&csv_path, cov_table_csv(&rows).as_bytes())?;
        manifest.output(&csv_path);
        let text = cov_table_text(&rows);
        let text_path = args.out_dir.join("cov_table.txt");
        io::atomic_write(&text_path, text.as_bytes())?;
        manifest.output(&text_path);
        print!("{text}");
    }
    if run_sens {
        let q_values: Vec<usize> = args
            .q_values
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::parameter(format!("bad q value '{tok}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        let cell = SensitivityCell {
            design: grid.design,
            n: grid.n_values[0],
            p: grid.p,
            s: grid.s_values[0],
            r: grid.r_values[0],
            sparsity_exponent: grid.sparsity_exponent,
            chain: grid.chain,
            base_seed: grid.base_seed,
        };
        let traces = run_sensitivity_q(&cell, &q_values)?;
        let mut csv = String::from("q,iteration,xi\n");
        for trace in &traces {
            for (t, &xi) in trace.xi_series.iter().enumerate() {
                csv.push_str(&format!("{},{},{xi}\n", trace.q, t + 1));
            }
        }
        let path = args.out_dir.join("sensitivity.csv");
        io::atomic_write(&path, csv.as_bytes())?;
        manifest.output(&path);
        for trace in &traces {
            println!(
                "q = {:>3}: factor-count mode {} over {} iterations",
                trace.q,
                trace.xi_mode,
                trace.xi_series.len()
            );
        }
    }
    manifest.write(&args.out_dir)?;
    Ok(())
}

pub fn cmd_align(args: &AlignArgs, global: &GlobalArgs) -> Result<()> {
    let mut paths: Vec<PathBuf> = fs::read_dir(&args.snapshots)
        .map_err(|e| Error::format(format!("cannot open {}: {e}", args.snapshots.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "sftr"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::format(format!(
            "{}: no .sftr snapshot files",
            args.snapshots.display()
        )));
    }
    let snapshots: Vec<Array2<f64>> = paths
        .iter()
        .map(|p| io::read_matrix_binary(p))
        .collect::<Result<Vec<_>>>()?;
    let alignment = align::align_loadings(&snapshots)?;

    ensure_out_dir(&args.out_dir)?;
    let snapshot = serde_json::json!({
        "snapshots": paths.len(),
        "columns_used": alignment.columns_used,
        "rounds": alignment.rounds,
    });
    let mut manifest = ManifestBuilder::new(snapshot, 0, 0, global.effective_threads(), global.strict);
    for p in &paths {
        manifest.input(p);
    }
    let bin_path = args.out_dir.join("consensus.sftr");
    io::write_matrix_binary(&bin_path, &alignment.consensus.view())?;
    manifest.output(&bin_path);
    let csv_path = args.out_dir.join("consensus.csv");
    io::write_matrix_csv(&csv_path, &alignment.consensus.view(), None)?;
    manifest.output(&csv_path);
    let info_path = args.out_dir.join("alignment.json");
    io::atomic_write_json(
        &info_path,
        &serde_json::json!({
            "snapshots": paths.len(),
            "columns_used": alignment.columns_used,
            "rounds": alignment.rounds,
        }),
    )?;
    manifest.output(&info_path);
    manifest.write(&args.out_dir)?;

    println!(
        "aligned {} snapshots over {} columns in {} rounds; consensus written to {}",
        paths.len(),
        alignment.columns_used.len(),
        alignment.rounds,
        bin_path.display()
    );
    Ok(())
}
