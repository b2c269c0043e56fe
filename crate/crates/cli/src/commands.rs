use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::{json, Value};
use tvls_core::kernels::{convergence_diagnostic, kernel_grid, Scale};
use tvls_core::quadrature::UniformGrid;
use tvls_core::simulate::{simulation_certificate, SimConfig, SimulationPlan};
use tvls_core::spectral::{certificate_for, spectral_density, wigner_ville, wv_convergence, SpectralConfig, WignerConfig};
use tvls_core::stability::{assess, carma_transform, default_z_samples, instantaneous_controllability, spot_check, transfer_equivalence};
use tvls_core::transition::{transition, TransitionOptions};
use tvls_core::StateSpaceModel;

use crate::args::{
    ControlArgs, ConvergeArgs, EquivArgs, KernelArgs, Method, Run, SimulateArgs, SpectrumArgs, StabilityArgs, TransitionArgs,
    WignerArgs, WvconvArgs,
};
use crate::CliError;

/// What a command produced, before anything is written.
pub struct Outcome {
    pub body: Vec<u8>,
    pub summary: Value,
    pub warnings: Vec<String>,
    pub seeds: Vec<u64>,
}

impl Outcome {
    fn table(body: Vec<u8>, summary: Value, warnings: Vec<String>) -> Self {
        Self {
            body,
            summary,
            warnings,
            seeds: Vec::new(),
        }
    }

    fn report<T: Serialize>(report: &T, summary: Value) -> Result<Self, CliError> {
        let mut body = serde_json::to_vec_pretty(report).map_err(|e| CliError::Internal(e.to_string()))?;
        body.push(b'\n');
        Ok(Self::table(body, summary, Vec::new()))
    }
}

pub type Models = BTreeMap<String, StateSpaceModel>;

/// Runs `run`, filling every defaulted parameter with the value used.
pub fn execute(run: &mut Run, models: &Models) -> Result<Outcome, CliError> {
    let model = |key: &str| models.get(key).ok_or_else(|| CliError::Internal(format!("model `{key}` was not loaded")));
    match run {
        Run::Simulate(a) => simulate(a, model("model")?),
        Run::Kernel(a) => kernel(a, model("model")?),
        Run::Converge(a) => converge(a, model("model")?),
        Run::Spectrum(a) => spectrum(a, model("model")?),
        Run::Wigner(a) => wigner(a, model("model")?),
        Run::Wvconv(a) => wvconv(a, model("model")?),
        Run::Transition(a) => transition_cmd(a, model("model")?),
        Run::Stability(a) => stability(a, model("model")?),
        Run::Control(a) => control(a, model("model")?),
        Run::Equiv(a) => equiv(a, model("model1")?, model("model2")?),
    }
}

fn csv<I>(header: &[String], rows: I) -> Result<Vec<u8>, CliError>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Internal(e.to_string());
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(&row).map_err(io)?;
    }
    w.into_inner().map_err(|e| CliError::Internal(e.to_string()))
}

fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn spectral_config(umax: Option<f64>, du: f64, method: Method) -> SpectralConfig {
    SpectralConfig {
        u_max: umax,
        du,
        method: method.into(),
        ..Default::default()
    }
}

fn simulate(a: &mut SimulateArgs, m: &StateSpaceModel) -> Result<Outcome, CliError> {
    if a.paths == 0 {
        return Err(CliError::usage("paths", "must be >= 1"));
    }
    a.noise_cell.get_or_insert(a.n as f64 * a.dt);
    let cfg = SimConfig {
        burn_in: a.burn_in,
        noise_cell: a.noise_cell,
        ..SimConfig::new(a.n, a.t0, a.t1, a.dt, a.seed)
    };
    let cert = simulation_certificate(m, &cfg)?;
    let plan = SimulationPlan::new(m, &cfg, Some(&cert))?;
    a.burn_in = Some(plan.burn_in());
    let paths = plan.run_many(a.paths);
    let p = m.dim();
    let mut names = vec!["path".to_string(), "t".to_string()];
    names.extend((1..=p).map(|i| format!("x{i}")));
    names.push("y".into());
    let rows = paths.iter().flat_map(|path| {
        path.grid.iter().enumerate().map(move |(k, t)| {
            let mut row = vec![path.path.to_string(), t.to_string()];
            row.extend((0..p).map(|i| path.states[(k, i)].to_string()));
            row.push(path.observations[k].to_string());
            row
        })
    });
    let body = csv(&names, rows)?;
    let summary = json!({
        "paths": a.paths,
        "grid_points": plan.grid().len(),
        "substep": plan.substep(),
        "certificate": cert,
    });
    let mut out = Outcome::table(body, summary, Vec::new());
    out.seeds = vec![a.seed];
    Ok(out)
}

fn kernel(a: &mut KernelArgs, m: &StateSpaceModel) -> Result<Outcome, CliError> {
    let cert = match a.umax {
        Some(_) => certificate_for(m, a.n, a.t, a.t).ok(),
        None => Some(certificate_for(m, a.n, a.t, a.t)?),
    };
    let u_max = *a.umax.get_or_insert_with(|| cert.as_ref().map_or(0.0, |c| c.default_u_max()));
    let g = kernel_grid(m, a.n, a.t, u_max, a.du, a.method.into(), &TransitionOptions::default(), cert.as_ref())?;
    let body = csv(&header(&["u", "value"]), g.lags().zip(&g.values).map(|(u, v)| vec![u.to_string(), v.to_string()]))?;
    let summary = json!({
        "rows": g.values.len(),
        "l2_norm": g.l2_norm(),
        "tail_bound": g.tail_bound,
        "certificate": cert,
    });
    Ok(Outcome::table(body, summary, g.warnings))
}

fn converge(a: &mut ConvergeArgs, m: &StateSpaceModel) -> Result<Outcome, CliError> {
    let u_max = match a.umax {
        Some(u) => u,
        None => {
            let n_min = a.ns.iter().copied().min().unwrap_or(1);
            certificate_for(m, Scale::Finite(n_min), a.t, a.t)?.default_u_max()
        }
    };
    a.umax = Some(u_max);
    let r = convergence_diagnostic(m, a.t, &a.ns, u_max, a.du, a.method.into(), &TransitionOptions::default())?;
    let body = csv(&header(&["N", "distance"]), r.rows.iter().map(|row| vec![row.n.to_string(), row.distance.to_string()]))?;
    let mut warnings = Vec::new();
    if !r.preconditions.verified {
        warnings.push(format!("{}: {}", r.preconditions.label, r.preconditions.checks.join("; ")));
    }
    let summary = json!({ "passes": r.passes, "preconditions": r.preconditions });
    Ok(Outcome::table(body, summary, warnings))
}

fn spectrum(a: &mut SpectrumArgs, m: &StateSpaceModel) -> Result<Outcome, CliError> {
    let mut cfg = spectral_config(a.umax, a.du, a.method);
    let u_max = cfg.resolve_u_max(m, Scale::Limit, a.t, a.t)?;
    cfg.u_max = Some(u_max);
    a.umax = Some(u_max);
    let grid = UniformGrid::symmetric(a.lmax, a.dl)?;
    let f = spectral_density(m, a.t, grid, &cfg)?;
    let body = csv(&header(&["lambda", "f"]), f.lambdas().iter().zip(&f.values).map(|(l, v)| vec![l.to_string(), v.to_string()]))?;
    Ok(Outcome::table(body, json!({ "rows": f.values.len() }), f.warnings))
}

fn wigner(a: &mut WignerArgs, m: &StateSpaceModel) -> Result<Outcome, CliError> {
    let n = Scale::Finite(a.n);
    let s_max = match a.smax {
        Some(s) => s,
        None => 30.0 / certificate_for(m, n, a.t, a.t)?.lambda,
    };
    a.smax = Some(s_max);
    let half = s_max / (2.0 * a.n as f64);
    let mut cfg = spectral_config(a.umax, a.du, a.method);
    let u_max = cfg.resolve_u_max(m, n, a.t - half, a.t + half)?;
    cfg.u_max = Some(u_max);
    a.umax = Some(u_max);
    let grid = UniformGrid::symmetric(a.lmax, a.dl)?;
    let wv = WignerConfig { s_max: Some(s_max), ds: a.ds };
    let f = wigner_ville(m, a.n, a.t, grid, &wv, &cfg)?;
    let body = csv(&header(&["lambda", "f_N"]), f.lambdas().iter().zip(&f.values).map(|(l, v)| vec![l.to_string(), v.to_string()]))?;
    Ok(Outcome::table(body, json!({ "rows": f.values.len() }), f.warnings))
}

fn wvconv(a: &mut WvconvArgs, m: &StateSpaceModel) -> Result<Outcome, CliError> {
    // s_max and U_max stay per-N unless given, so they are recorded as null
    let cfg = spectral_config(a.umax, a.du, a.method);
    let wv = WignerConfig { s_max: a.smax, ds: a.ds };
    let grid = UniformGrid::symmetric(a.lmax, a.dl)?;
    let r = wv_convergence(m, a.t, grid, &a.ns, &wv, &cfg)?;
    let body = csv(&header(&["N", "distance"]), r.rows.iter().map(|row| vec![row.n.to_string(), row.distance.to_string()]))?;
    let summary = json!({ "passes": r.passes, "verified": r.verified, "assumed": r.assumed });
    Ok(Outcome::table(body, summary, r.warnings))
}

fn transition_cmd(a: &mut TransitionArgs, m: &StateSpaceModel) -> Result<Outcome, CliError> {
    let opts = TransitionOptions {
        tol: a.tol,
        max_terms: a.max_terms,
        steps: a.steps,
    };
    let psi = transition(m.a(), a.s0, a.s, a.method.into(), &opts)?;
    let summary = json!({ "method": psi.method, "error_estimate": psi.error_estimate });
    Outcome::report(&psi, summary)
}

fn stability(a: &mut StabilityArgs, m: &StateSpaceModel) -> Result<Outcome, CliError> {
    let &[lo, hi] = a.window.as_slice() else {
        return Err(CliError::usage("window", "expected two comma-separated numbers a,b"));
    };
    let r = assess(m.a(), (lo, hi), a.grid, &a.ns, a.route.into())?;
    let spot = match &r.certificate {
        Some(cert) if a.spot_pairs > 0 => Some(spot_check(m.a(), cert, a.spot_pairs, a.ns[0], a.seed)?),
        _ => None,
    };
    let report = json!({
        "passes": r.passes,
        "certificate": r.certificate,
        "reports": r.reports,
        "spot_check": spot,
    });
    let mut out = Outcome::report(&report, json!({ "passes": r.passes }))?;
    out.seeds = vec![a.seed];
    Ok(out)
}

fn control(a: &mut ControlArgs, m: &StateSpaceModel) -> Result<Outcome, CliError> {
    let r = instantaneous_controllability(m, &a.tgrid)?;
    let mut report = serde_json::to_value(&r).map_err(|e| CliError::Internal(e.to_string()))?;
    if a.transform {
        let transforms: Vec<Value> = a
            .tgrid
            .iter()
            .map(|&t| match carma_transform(m, t) {
                Ok(tr) => serde_json::to_value(tr).unwrap_or(Value::Null),
                Err(e) => json!({ "t": t, "error": e.to_string() }),
            })
            .collect();
        report["transforms"] = Value::Array(transforms);
    }
    Outcome::report(&report, json!({ "instantaneous": r.instantaneous }))
}

fn equiv(a: &mut EquivArgs, m1: &StateSpaceModel, m2: &StateSpaceModel) -> Result<Outcome, CliError> {
    if a.z_samples == 0 {
        return Err(CliError::usage("z_samples", "must be >= 1"));
    }
    let r = transfer_equivalence(m1, m2, a.t, &default_z_samples(a.z_samples))?;
    Outcome::report(&r, json!({ "equivalent": r.equivalent, "max_rel_err": r.max_rel_err }))
}
