//! Experiment orchestration: scenario construction, artifact emission, and
//! parameter sweeps.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

use ecrflow::oscillators::{
    sync1_expected_dp, sync1_model, sync1_period, sync1_section, sync2_expected_dp,
    sync2_find_orbit, sync2_model, Sync1Params, Sync2Params,
};
use ecrflow::poincare::{
    flowbox_chart, orbit_from_anchor, perturbation_experiment, poincare_derivative_with,
    stability_test, Section,
};
use ecrflow::variational::{
    b_derivative_with, enumerate_words, per_word_derivative_with, DerivativeOptions,
};
use ecrflow::{flow, spectral_norm, Corner, EventFn, EventModel, IntegratorConfig};

use crate::config::{ConfigError, ConfigResult, RunConfig};

type Metrics = Vec<(String, f64)>;

pub fn run(cfg: &RunConfig, sweep: Option<&str>) -> ConfigResult<()> {
    let out = PathBuf::from(cfg.out_dir());
    fs::create_dir_all(&out)
        .map_err(|e| ConfigError::new(format!("cannot create output dir: {e}")))?;
    match sweep {
        None => {
            let metrics = run_single(cfg, &out)?;
            write_manifest(cfg, &out, &metrics)?;
            for (k, v) in &metrics {
                println!("{k} = {v}");
            }
            Ok(())
        }
        Some(spec) => run_sweep(cfg, spec, &out),
    }
}

fn run_sweep(cfg: &RunConfig, spec: &str, out: &Path) -> ConfigResult<()> {
    let (key, values) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError::new("sweep must look like key=v1,v2,..."))?;
    let full_key = cfg.resolve_sweep_key(key.trim())?;
    let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).collect();
    if values.is_empty() {
        return Err(ConfigError::new("sweep needs at least one value"));
    }

    let threads = std::env::var("ECRFLOW_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| values.len().min(8));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| ConfigError::new(format!("thread pool: {e}")))?;

    let points: Vec<ConfigResult<(String, Metrics)>> = pool.install(|| {
        use rayon::prelude::*;
        values
            .par_iter()
            .map(|v| {
                let mut sub = cfg.clone();
                sub.set(&full_key, v)?;
                let sub_out = out.join(format!("sweep_{}_{}", key.trim(), v));
                fs::create_dir_all(&sub_out)
                    .map_err(|e| ConfigError::new(format!("cannot create sweep dir: {e}")))?;
                let metrics = run_single(&sub, &sub_out)?;
                write_manifest(&sub, &sub_out, &metrics)?;
                Ok((v.clone(), metrics))
            })
            .collect()
    });

    let mut rows = Vec::new();
    for p in points {
        rows.push(p?);
    }
    let mut csv = String::new();
    let header: Vec<String> = std::iter::once(key.trim().to_string())
        .chain(rows[0].1.iter().map(|(k, _)| k.clone()))
        .collect();
    writeln!(csv, "{}", header.join(",")).unwrap();
    for (v, metrics) in &rows {
        let line: Vec<String> = std::iter::once(v.clone())
            .chain(metrics.iter().map(|(_, x)| x.to_string()))
            .collect();
        writeln!(csv, "{}", line.join(",")).unwrap();
    }
    write_file(&out.join("sweep.csv"), &csv)?;
    write_manifest(cfg, out, &[("sweep_points".to_string(), rows.len() as f64)])?;
    println!("sweep.csv written with {} points", rows.len());
    Ok(())
}

fn run_single(cfg: &RunConfig, out: &Path) -> ConfigResult<Metrics> {
    let experiment = cfg.experiment()?.to_string();
    match experiment.as_str() {
        "simulate" => simulate(cfg, out),
        "words" => words(cfg, out),
        "b-derivative" => b_derivative_experiment(cfg, out),
        "poincare" => poincare_experiment(cfg, out),
        "stability" => stability_experiment(cfg, out),
        "flowbox" => flowbox_experiment(cfg, out),
        "perturbation" => perturbation(cfg, out),
        other => Err(ConfigError::new(format!("unknown experiment '{other}'"))),
    }
}

fn integrator(cfg: &RunConfig) -> ConfigResult<IntegratorConfig> {
    let d = IntegratorConfig::default();
    Ok(IntegratorConfig {
        rel_tol: cfg.f64_or("integrator.rel_tol", d.rel_tol)?,
        abs_tol: cfg.f64_or("integrator.abs_tol", d.abs_tol)?,
        event_tol: cfg.f64_or("integrator.event_tol", d.event_tol)?,
        max_step: cfg.f64_or("integrator.max_step", d.max_step)?,
        max_events: cfg.usize_or("integrator.max_events", d.max_events)?,
        horizon: cfg.f64_or("integrator.horizon", d.horizon)?,
    })
}

fn deriv_opts(cfg: &RunConfig) -> DerivativeOptions {
    DerivativeOptions {
        chain_sign: if cfg.mutation { -1.0 } else { 1.0 },
        ..DerivativeOptions::default()
    }
}

fn sync1_params(cfg: &RunConfig) -> ConfigResult<Sync1Params> {
    Ok(Sync1Params {
        d: cfg.usize_or("sync1.d", 2)?,
        nu: cfg.f64_or("sync1.nu", 1.0)?,
        delta: cfg.f64_or("sync1.delta", 0.5)?,
        big_delta: cfg.f64_or("sync1.Delta", 0.05)?,
    })
}

fn sync2_params(cfg: &RunConfig) -> ConfigResult<Sync2Params> {
    Ok(Sync2Params {
        d: cfg.usize_or("sync2.d", 2)?,
        alpha: cfg.f64_or("sync2.alpha", 1.0)?,
        beta: cfg.f64_or("sync2.beta", 10.0)?,
        delta: cfg.f64_or("sync2.delta", 0.5)?,
        big_delta: cfg.f64_or("sync2.Delta", 0.05)?,
    })
}

fn lib_err(e: ecrflow::Error) -> ConfigError {
    ConfigError::new(e.to_string())
}

fn parse_pair(cfg: &RunConfig, key: &str, default: (f64, f64)) -> ConfigResult<DVector<f64>> {
    match cfg.f64_list(key)? {
        None => Ok(DVector::from_vec(vec![default.0, default.1])),
        Some(v) if v.len() == 2 => Ok(DVector::from_vec(v)),
        Some(_) => Err(ConfigError::new(format!("key '{key}' wants two numbers"))),
    }
}

fn custom_model(cfg: &RunConfig) -> ConfigResult<EventModel> {
    let f_mm = parse_pair(cfg, "custom.f_mm", (1.2, 1.0))?;
    let f_mp = parse_pair(cfg, "custom.f_mp", (1.0, 0.8))?;
    let f_pm = parse_pair(cfg, "custom.f_pm", (0.9, 1.1))?;
    let f_pp = parse_pair(cfg, "custom.f_pp", (0.7, 0.9))?;
    let f_min = cfg.f64_or("custom.f_min", 0.3)?;
    EventModel::builder(2)
        .event(EventFn::coordinate(2, 0))
        .event(EventFn::coordinate(2, 1))
        .field(move |b: &Corner, _x: &DVector<f64>| {
            match (b.sign(0) > 0, b.sign(1) > 0) {
                (false, false) => f_mm.clone(),
                (false, true) => f_mp.clone(),
                (true, false) => f_pm.clone(),
                (true, true) => f_pp.clone(),
            }
        })
        .field_jacobian(|_: &Corner, _: &DVector<f64>| DMatrix::zeros(2, 2))
        .rho(DVector::zeros(2))
        .f_min(f_min)
        .build()
        .map_err(lib_err)
}

struct Scenario {
    model: EventModel,
    default_x: DVector<f64>,
    default_t: f64,
}

fn scenario(cfg: &RunConfig) -> ConfigResult<Scenario> {
    match cfg.scenario()? {
        "sync1" => {
            let p = sync1_params(cfg)?;
            let model = sync1_model(&p).map_err(lib_err)?;
            Ok(Scenario {
                model,
                default_x: DVector::from_element(p.d, -0.5),
                default_t: sync1_period(&p),
            })
        }
        "sync2" => {
            let p = sync2_params(cfg)?;
            let model = sync2_model(&p).map_err(lib_err)?;
            let d = p.d;
            let v0 = 1.05 * p.alpha / p.beta;
            let x = DVector::from_fn(2 * d, |i, _| {
                if i < d {
                    -1.5 * p.big_delta
                } else {
                    v0
                }
            });
            Ok(Scenario {
                model,
                default_x: x,
                default_t: 1.1 * p.beta / p.alpha,
            })
        }
        "custom-piecewise-constant" => Ok(Scenario {
            model: custom_model(cfg)?,
            default_x: DVector::from_vec(vec![-0.05, -0.04]),
            default_t: 0.12,
        }),
        other => Err(ConfigError::new(format!("unknown scenario '{other}'"))),
    }
}

fn state_from_cfg(
    cfg: &RunConfig,
    key: &str,
    default: &DVector<f64>,
    dim: usize,
) -> ConfigResult<DVector<f64>> {
    match cfg.f64_list(key)? {
        None => Ok(default.clone()),
        Some(v) if v.len() == dim => Ok(DVector::from_vec(v)),
        Some(v) => Err(ConfigError::new(format!(
            "key '{key}': expected {dim} components, got {}",
            v.len()
        ))),
    }
}

fn simulate(cfg: &RunConfig, out: &Path) -> ConfigResult<Metrics> {
    let sc = scenario(cfg)?;
    let ic = integrator(cfg)?;
    let t = cfg.f64_or("simulate.t", sc.default_t)?;
    let x = state_from_cfg(cfg, "simulate.x", &sc.default_x, sc.model.dim())?;
    let (end, traj) = flow(&sc.model, t, &x, &ic).map_err(lib_err)?;
    let mut buf = Vec::new();
    traj.write_csv(&mut buf)
        .map_err(|e| ConfigError::new(e.to_string()))?;
    write_file(&out.join("trajectory.csv"), &String::from_utf8_lossy(&buf))?;
    let mut buf = Vec::new();
    traj.write_events_csv(&mut buf)
        .map_err(|e| ConfigError::new(e.to_string()))?;
    write_file(&out.join("events.csv"), &String::from_utf8_lossy(&buf))?;
    Ok(vec![
        ("t_end".to_string(), t),
        ("n_events".to_string(), traj.events.len() as f64),
        ("end_norm".to_string(), end.norm()),
    ])
}

fn words(cfg: &RunConfig, out: &Path) -> ConfigResult<Metrics> {
    let n = cfg.usize_or("words.n", 3)?;
    if n == 0 || n > 8 {
        return Err(ConfigError::new("words.n must be between 1 and 8"));
    }
    let words = enumerate_words(n);
    let active: Vec<usize> = (0..n).collect();
    let mut text = String::new();
    for w in &words {
        writeln!(text, "{}", w.label(&active)).unwrap();
    }
    write_file(&out.join("words.txt"), &text)?;
    println!("{} words over {n} surfaces", words.len());
    Ok(vec![("n_words".to_string(), words.len() as f64)])
}

fn matrix_csv(rows: &[(String, DMatrix<f64>)]) -> String {
    let mut csv = String::from("word,row,col,value\n");
    for (label, m) in rows {
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                writeln!(csv, "{label},{r},{c},{}", m[(r, c)]).unwrap();
            }
        }
    }
    csv
}

fn b_derivative_experiment(cfg: &RunConfig, out: &Path) -> ConfigResult<Metrics> {
    let sc = scenario(cfg)?;
    let ic = integrator(cfg)?;
    let opts = deriv_opts(cfg);
    // Defaults aim the trajectory at the reference crossing.
    let (default_x, default_t) = match cfg.scenario()? {
        "sync1" => (
            DVector::from_element(sc.model.dim(), -0.045),
            0.06,
        ),
        "sync2" => {
            let p = sync2_params(cfg)?;
            let nu0 = 1.15 * p.alpha / p.beta;
            let d = p.d;
            (
                DVector::from_fn(2 * d, |i, _| if i < d { -nu0 * 0.02 } else { nu0 }),
                0.05,
            )
        }
        _ => {
            let b = Corner::all_minus(2);
            let f = sc.model.field(&b, sc.model.rho());
            (-0.02 * f, 0.05)
        }
    };
    let t = cfg.f64_or("bderiv.t", default_t)?;
    let x = state_from_cfg(cfg, "bderiv.x", &default_x, sc.model.dim())?;
    let v = cfg.f64_or("bderiv.v", 0.0)?;
    let mut w_default = DVector::zeros(sc.model.dim());
    w_default[0] = 1.0;
    let w = state_from_cfg(cfg, "bderiv.w", &w_default, sc.model.dim())?;

    let value = b_derivative_with(&sc.model, t, &x, v, &w, &ic, &opts).map_err(lib_err)?;

    // Per-word derivative matrices at the crossing cluster.
    let (_, traj) = flow(&sc.model, t, &x, &ic).map_err(lib_err)?;
    let mut rows = Vec::new();
    if traj.events.len() == 1 {
        let ev = &traj.events[0];
        for word in enumerate_words(ev.surfaces.len()) {
            let m = per_word_derivative_with(&sc.model, t, &x, ev.time, &word, None, &ic, &opts)
                .map_err(lib_err)?;
            rows.push((word.label(&ev.surfaces), m));
        }
    }
    write_file(&out.join("derivatives.csv"), &matrix_csv(&rows))?;
    let mut dir_csv = String::from("component,value\n");
    for (i, val) in value.iter().enumerate() {
        writeln!(dir_csv, "{i},{val}").unwrap();
    }
    write_file(&out.join("b_derivative.csv"), &dir_csv)?;
    Ok(vec![
        ("n_words".to_string(), rows.len() as f64),
        ("n_clusters".to_string(), traj.events.len() as f64),
        ("direction_norm".to_string(), value.norm()),
    ])
}

fn poincare_inputs(
    cfg: &RunConfig,
    ic: &IntegratorConfig,
) -> ConfigResult<(EventModel, Section, Vec<(String, DMatrix<f64>)>, Metrics)> {
    let opts = deriv_opts(cfg);
    match cfg.scenario()? {
        "sync1" => {
            let p = sync1_params(cfg)?;
            let model = sync1_model(&p).map_err(lib_err)?;
            let (section, rspec) = sync1_section(&p);
            let orbit = orbit_from_anchor(&model, section.anchor(), &section, &rspec, ic, 1e-7)
                .map_err(lib_err)?;
            let dps = poincare_derivative_with(&model, &orbit, &section, ic, &opts)
                .map_err(lib_err)?;
            let expected = sync1_expected_dp(&p);
            let err = dps
                .iter()
                .map(|(_, dp)| spectral_norm(&(dp - &expected)))
                .fold(0.0_f64, f64::max);
            let metrics = vec![
                ("period".to_string(), orbit.period),
                ("expected_c".to_string(), p.contraction()),
                ("e_norm".to_string(), err),
            ];
            Ok((model, section, dps, metrics))
        }
        "sync2" => {
            let p = sync2_params(cfg)?;
            let model = sync2_model(&p).map_err(lib_err)?;
            let found = sync2_find_orbit(&p, ic).map_err(lib_err)?;
            let dps =
                poincare_derivative_with(&model, &found.orbit, &found.section, ic, &opts)
                    .map_err(lib_err)?;
            let leading = sync2_expected_dp(&p, found.nu_beta);
            let err = dps
                .iter()
                .map(|(_, dp)| spectral_norm(&(dp - &leading)))
                .fold(0.0_f64, f64::max);
            let metrics = vec![
                ("nu_beta".to_string(), found.nu_beta),
                ("residual".to_string(), found.residual),
                ("period".to_string(), found.period),
                ("e_norm".to_string(), err),
            ];
            let section = found.section.clone();
            Ok((model, section, dps, metrics))
        }
        other => Err(ConfigError::new(format!(
            "experiment requires a periodic-orbit scenario, not '{other}'"
        ))),
    }
}

fn poincare_experiment(cfg: &RunConfig, out: &Path) -> ConfigResult<Metrics> {
    let ic = integrator(cfg)?;
    let (_, _, dps, metrics) = poincare_inputs(cfg, &ic)?;
    write_file(&out.join("dp.csv"), &matrix_csv(&dps))?;
    Ok(metrics)
}

fn stability_experiment(cfg: &RunConfig, out: &Path) -> ConfigResult<Metrics> {
    let ic = integrator(cfg)?;
    let (_, _, dps, mut metrics) = poincare_inputs(cfg, &ic)?;
    let report = stability_test(&dps, 1e-9);
    let mut buf = Vec::new();
    report
        .write_text(&mut buf)
        .map_err(|e| ConfigError::new(e.to_string()))?;
    write_file(&out.join("stability.txt"), &String::from_utf8_lossy(&buf))?;
    write_file(&out.join("dp.csv"), &matrix_csv(&dps))?;
    println!("verdict = {}", report.verdict);
    metrics.push(("contraction".to_string(), report.contraction));
    metrics.push((
        "stable".to_string(),
        matches!(report.verdict, ecrflow::Verdict::ExponentiallyStable) as u8 as f64,
    ));
    Ok(metrics)
}

fn flowbox_experiment(cfg: &RunConfig, out: &Path) -> ConfigResult<Metrics> {
    use rand::{Rng, SeedableRng};
    let sc = scenario(cfg)?;
    let ic = integrator(cfg)?;
    let samples = cfg.usize_or("flowbox.samples", 100)?;
    let grad = sc.model.event_gradient(0, sc.model.rho());
    let section = Section::new(EventFn::linear(grad), sc.model.rho().clone());
    let chart = flowbox_chart(&sc.model, &section, &ic);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let scale = 0.04;
    let mut worst = 0.0_f64;
    let mut csv = String::from("sample,residual\n");
    for k in 0..samples {
        let x = DVector::from_fn(sc.model.dim(), |_, _| rng.random_range(-scale..scale));
        let t = rng.random_range(-scale..scale);
        let y = flow(&sc.model, t, &x, &ic).map_err(lib_err)?.0;
        let cx = chart.forward(&x).map_err(lib_err)?;
        let cy = chart.forward(&y).map_err(lib_err)?;
        let mut expected = cx;
        expected[0] += t;
        let residual = (cy - expected).norm();
        worst = worst.max(residual);
        writeln!(csv, "{k},{residual}").unwrap();
    }
    write_file(&out.join("flowbox.csv"), &csv)?;
    Ok(vec![
        ("samples".to_string(), samples as f64),
        ("worst_residual".to_string(), worst),
    ])
}

fn perturbation(cfg: &RunConfig, out: &Path) -> ConfigResult<Metrics> {
    let sc = scenario(cfg)?;
    let ic = integrator(cfg)?;
    let sizes = cfg
        .f64_list("perturbation.sizes")?
        .unwrap_or_else(|| vec![1e-2, 1e-3, 1e-4]);
    let trials = cfg.usize_or("perturbation.trials", 40)?;
    let horizon = cfg.f64_or("perturbation.horizon", 0.3)?;
    let radius = cfg.f64_or("perturbation.radius", 0.1)?;
    let curve = perturbation_experiment(&sc.model, &sizes, trials, horizon, radius, &ic, cfg.seed)
        .map_err(lib_err)?;
    let mut csv = String::from("size,deviation\n");
    for (s, d) in curve.sizes.iter().zip(&curve.deviations) {
        writeln!(csv, "{s},{d}").unwrap();
    }
    write_file(&out.join("perturbation.csv"), &csv)?;
    let worst_ratio = curve
        .sizes
        .iter()
        .zip(&curve.deviations)
        .map(|(s, d)| d / s)
        .fold(0.0_f64, f64::max);
    Ok(vec![
        ("n_sizes".to_string(), sizes.len() as f64),
        ("worst_ratio".to_string(), worst_ratio),
    ])
}

fn write_file(path: &Path, content: &str) -> ConfigResult<()> {
    fs::write(path, content)
        .map_err(|e| ConfigError::new(format!("cannot write {}: {e}", path.display())))
}

fn write_manifest(cfg: &RunConfig, out: &Path, metrics: &[(String, f64)]) -> ConfigResult<()> {
    let mut text = String::new();
    writeln!(text, "tool = ecrflow {}", env!("CARGO_PKG_VERSION")).unwrap();
    writeln!(text, "seed = {}", cfg.seed).unwrap();
    writeln!(text, "mutation = {}", cfg.mutation).unwrap();
    for (k, v) in cfg.entries() {
        writeln!(text, "config.{k} = {v}").unwrap();
    }
    let ic = integrator(cfg)?;
    writeln!(text, "effective.rel_tol = {}", ic.rel_tol).unwrap();
    writeln!(text, "effective.abs_tol = {}", ic.abs_tol).unwrap();
    writeln!(text, "effective.event_tol = {}", ic.event_tol).unwrap();
    writeln!(text, "effective.max_step = {}", ic.max_step).unwrap();
    writeln!(text, "effective.max_events = {}", ic.max_events).unwrap();
    writeln!(text, "effective.horizon = {}", ic.horizon).unwrap();
    for (k, v) in metrics {
        writeln!(text, "metric.{k} = {v}").unwrap();
    }
    write_file(&out.join("manifest.txt"), &text)
}

pub fn write_error_record(cfg: &RunConfig, e: &ConfigError) -> std::io::Result<()> {
    let out = PathBuf::from(cfg.out_dir());
    fs::create_dir_all(&out)?;
    let mut f = fs::File::create(out.join("error.txt"))?;
    writeln!(f, "error.kind = experiment")?;
    writeln!(f, "error.message = {e}")
}
