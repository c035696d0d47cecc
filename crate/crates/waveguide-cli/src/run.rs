//! Subcommand drivers.

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_2;

use serde_json::{json, Value};
use waveguide::eigensolve::SolverOptions;
use waveguide::geometry::{validate_hypotheses, FieldConfig, GuideGeometry};
use waveguide::hamiltonian::{discrete_transverse_eigenvalue, GridSpec};
use waveguide::resonance::{
    bound_state_reference, decay_rate, field_sweep, fit_width_law, locate_resonance, BoundState, ResonanceEstimate,
};
use waveguide::validation::{
    airy_scattering_state, tilted_mode_second_order, tilted_transverse_mode, weyl_residual, WeylParams,
};
use waveguide::Error;

use crate::config::{ConfigError, ProfileBlock, RunConfig};
use crate::record::{write_sweep_csv, RecordWriter, ResultRecord, SolverMeta, SweepRow};

#[derive(Debug)]
pub enum Failure {
    Hypothesis(String),
    Solver(String),
    Config(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Hypothesis(_) => 2,
            Failure::Solver(_) => 3,
            Failure::Config(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Hypothesis(m) | Failure::Solver(m) | Failure::Config(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Hypothesis(_) => Failure::Hypothesis(e.to_string()),
            Error::InvalidArgument(_) => Failure::Config(e.to_string()),
            _ => Failure::Solver(e.to_string()),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(format!("output: {e}"))
    }
}

pub struct Context {
    pub cfg: RunConfig,
    pub hash: String,
    pub writer: RecordWriter,
}

impl Context {
    fn emit(&mut self, subcommand: &str, parameters: Value, outputs: Value, residuals: Vec<f64>) -> Result<(), Failure> {
        let meta = SolverMeta { seed: self.cfg.solver.seed, residuals };
        let rec = ResultRecord::new(&self.hash, subcommand, parameters, outputs, meta);
        self.writer.append(&rec)?;
        Ok(())
    }
}

fn section<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("config block serializes")
}

fn complex(z: waveguide::Complex64) -> Value {
    json!([z.re, z.im])
}

fn s0_of(cfg: &RunConfig) -> f64 {
    match cfg.geometry.profile {
        ProfileBlock::Straight => 0.0,
        ProfileBlock::Bump { s0, .. } => s0,
    }
}

pub fn geometry_check(ctx: &mut Context) -> Result<(), Failure> {
    let geom = ctx.cfg.geometry()?;
    let eta = ctx.cfg.eta(&geom);
    let report = validate_hypotheses(&geom, Some(FieldConfig::new(ctx.cfg.field.f.unwrap_or(0.0), eta)));
    let mut notes = Vec::new();
    if (eta.abs() - FRAC_PI_2).abs() < 1e-12 {
        notes.push("field perpendicular to the straight arm: no Stark resonance exists in this regime".to_string());
    }
    let checks: Vec<Value> = report
        .checks
        .iter()
        .map(|c| json!({ "name": c.name, "value": c.value, "limit": c.limit, "pass": c.pass }))
        .collect();
    for c in &report.checks {
        println!("{:<18} {:>12.6} < {:<10.6} {}", c.name, c.value, c.limit, if c.pass { "ok" } else { "FAILED" });
    }
    for n in &notes {
        println!("note: {n}");
    }
    let outputs = json!({
        "all_pass": report.all_pass(),
        "checks": checks,
        "alpha0": geom.alpha0,
        "eta": eta,
        "notes": notes,
    });
    ctx.emit("geometry-check", json!({ "geometry": section(&ctx.cfg.geometry), "field": section(&ctx.cfg.field) }), outputs, vec![])?;
    if report.all_pass() {
        return Ok(());
    }
    let mut msg: Vec<String> = report.failures().iter().map(|c| format!("{} violated ({} vs {})", c.name, c.value, c.limit)).collect();
    msg.extend(notes);
    Err(Failure::Hypothesis(msg.join("; ")))
}

pub fn bound_states(ctx: &mut Context) -> Result<(), Failure> {
    let geom = ctx.cfg.geometry()?;
    let grid = ctx.cfg.grid()?;
    let params = json!({ "geometry": section(&ctx.cfg.geometry), "grid": section(&ctx.cfg.grid), "solver": section(&ctx.cfg.solver) });
    let bs = match bound_state_reference(&geom, &grid, &ctx.cfg.solver()) {
        Ok(bs) => bs,
        Err(Error::NoBoundState { threshold }) => {
            println!("no bound state below the threshold {threshold}");
            let outputs = json!({ "status": "no_bound_state", "eigenvalues": [], "lambda0": threshold });
            return ctx.emit("bound-states", params, outputs, vec![]);
        }
        Err(e) => return Err(e.into()),
    };
    let (decay, warning) = match decay_rate(&bs.phi0, s0_of(&ctx.cfg)) {
        Ok(d) => (json!({ "a": d.a, "left": d.left, "right": d.right }), None),
        Err(e) => (Value::Null, Some(e.to_string())),
    };
    println!("E0 = {:.12}  lambda0 = {:.12}  gap = {:.6e}  multiplicity {}", bs.e0, bs.lambda0, bs.gap(), bs.multiplicity);
    if let Some(a) = decay.get("a") {
        println!("decay rate a = {a}");
    }
    let outputs = json!({
        "status": "bound",
        "e0": bs.e0,
        "lambda0": bs.lambda0,
        "gap": bs.gap(),
        "multiplicity": bs.multiplicity,
        "eigenvalues": bs.below,
        "decay": decay,
        "warnings": warning.into_iter().collect::<Vec<_>>(),
    });
    ctx.emit("bound-states", params, outputs, vec![bs.residual])
}

/// Grids and bound-state references for resonance runs, cached by step.
struct Setup<'a> {
    cfg: &'a RunConfig,
    geom: &'a GuideGeometry,
    opts: SolverOptions,
    base: Option<BoundState>,
    cache: HashMap<u64, BoundState>,
}

impl<'a> Setup<'a> {
    fn new(cfg: &'a RunConfig, geom: &'a GuideGeometry) -> Self {
        Setup { cfg, geom, opts: cfg.solver(), base: None, cache: HashMap::new() }
    }

    fn base(&mut self) -> waveguide::Result<&BoundState> {
        if self.base.is_none() {
            self.base = Some(bound_state_reference(self.geom, &self.cfg.grid()?, &self.opts)?);
        }
        Ok(self.base.as_ref().unwrap())
    }

    fn at(&mut self, f: f64) -> waveguide::Result<(GridSpec, BoundState)> {
        let Some(rule) = self.cfg.grid_rule() else {
            let grid = self.cfg.grid()?;
            return Ok((grid, self.base()?.clone()));
        };
        let gap = self.base()?.gap();
        let settings = self.cfg.settings();
        let delta_e = settings.reference.map_or(gap / 3.0, |r| r.1);
        let field = FieldConfig::new(f, self.cfg.eta(self.geom));
        let grid = rule.resonance_grid(self.geom.d, field, gap, settings.alpha * delta_e)?;
        if let std::collections::hash_map::Entry::Vacant(e) = self.cache.entry(grid.h_s.to_bits()) {
            let reference = rule.reference_grid(self.geom.d, grid.h_s)?;
            e.insert(bound_state_reference(self.geom, &reference, &self.opts)?);
        }
        Ok((grid, self.cache[&grid.h_s.to_bits()].clone()))
    }
}

fn estimate_json(r: &ResonanceEstimate) -> Value {
    json!({
        "F": r.f,
        "Z": complex(r.z),
        "beta_used": r.beta_used,
        "plateau_score": r.plateau_score,
        "residual": r.residual,
        "grid": r.grid_fingerprint,
        "theta0": r.theta0,
        "window": [r.window.0, r.window.1],
        "spread": r.spread,
        "samples": r.samples.iter().map(|s| json!({
            "beta": s.beta,
            "Z": s.z.map(complex),
            "residual": if s.residual.is_finite() { json!(s.residual) } else { Value::Null },
            "candidates": s.candidates.iter().copied().map(complex).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
        "warnings": r.warnings,
    })
}

fn resonance_params(cfg: &RunConfig) -> Value {
    json!({
        "geometry": section(&cfg.geometry),
        "field": section(&cfg.field),
        "grid": section(&cfg.grid),
        "distortion": section(&cfg.distortion),
        "solver": section(&cfg.solver),
    })
}

fn print_estimate(r: &ResonanceEstimate) {
    println!(
        "F = {:.6e}  Z = {:.12} {:+.6e}i  beta = {:.4e}  score = {:.3e}  residual = {:.1e}",
        r.f, r.z.re, r.z.im, r.beta_used, r.plateau_score, r.residual
    );
    for w in &r.warnings {
        println!("  warning: {w}");
    }
}

pub fn resonance(ctx: &mut Context) -> Result<(), Failure> {
    let cfg = ctx.cfg.clone();
    let f = cfg.field.f.ok_or_else(|| Failure::Config("resonance needs field.f".into()))?;
    let geom = cfg.geometry()?;
    validate_hypotheses(&geom, Some(FieldConfig::new(f, cfg.eta(&geom)))).into_result()?;
    let mut setup = Setup::new(&cfg, &geom);
    let (grid, bs) = setup.at(f)?;
    let r = locate_resonance(&geom, FieldConfig::new(f, cfg.eta(&geom)), &grid, &bs, &cfg.settings())?;
    print_estimate(&r);
    let mut outputs = estimate_json(&r);
    outputs["e0"] = json!(bs.e0);
    outputs["lambda0"] = json!(bs.lambda0);
    ctx.emit("resonance", resonance_params(&cfg), outputs, vec![r.residual])
}

pub fn sweep(ctx: &mut Context) -> Result<(), Failure> {
    let cfg = ctx.cfg.clone();
    let fs = cfg.field.f_list.clone().ok_or_else(|| Failure::Config("sweep needs field.f_list".into()))?;
    let geom = cfg.geometry()?;
    let eta = cfg.eta(&geom);
    let top = fs.iter().copied().fold(0.0, f64::max);
    validate_hypotheses(&geom, Some(FieldConfig::new(top, eta))).into_result()?;
    let mut setup = Setup::new(&cfg, &geom);
    let mut rows = Vec::new();
    let mut io_error = None;
    let params = resonance_params(&cfg);
    let points = field_sweep(&geom, eta, &fs, &cfg.settings(), |f| setup.at(f), |p| {
        let (outputs, residuals) = match &p.result {
            Ok(r) => {
                print_estimate(r);
                rows.push(SweepRow {
                    f: p.f,
                    re_z: r.z.re,
                    im_z: r.z.im,
                    beta_used: r.beta_used,
                    plateau_score: r.plateau_score,
                    residual: r.residual,
                });
                (json!({ "status": "ok", "estimate": estimate_json(r) }), vec![r.residual])
            }
            Err(e) => {
                println!("F = {:.6e}  failed: {e}", p.f);
                (json!({ "status": "failed", "F": p.f, "error": e }), vec![])
            }
        };
        if let Err(e) = ctx.emit("sweep", params.clone(), outputs, residuals) {
            io_error.get_or_insert(e);
        }
    })?;
    if let Some(e) = io_error {
        return Err(e);
    }
    let triples: Vec<(f64, f64, f64)> = points
        .iter()
        .filter_map(|p| p.result.as_ref().ok().map(|r| (p.f, r.z.im, r.residual)))
        .collect();
    let fit = match fit_width_law(&triples, 0.99) {
        Ok(w) => {
            println!(
                "width law: c1 = {:.6e}  c2 = {:.6e}  r2 = {:.6}  used {}  censored {}",
                w.c1, w.c2, w.r_squared, w.used, w.censored
            );
            json!({
                "status": "ok",
                "c1": w.c1,
                "c2": w.c2,
                "r_squared": w.r_squared,
                "f_range": [w.f_range.0, w.f_range.1],
                "used": w.used,
                "censored": w.censored,
                "accepted": w.accepted,
            })
        }
        Err(e) => {
            println!("width law: {e}");
            json!({ "status": "failed", "error": e.to_string(), "censored": null })
        }
    };
    ctx.emit("sweep-fit", params, fit, triples.iter().map(|t| t.2).collect())?;
    if cfg.output.csv {
        let path = cfg.output.dir.join(format!("sweep-{}.csv", &ctx.hash[..12]));
        write_sweep_csv(&path, &rows).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        println!("table: {}", path.display());
    }
    Ok(())
}

pub struct Checks {
    pub tilted: bool,
    pub airy: bool,
    pub weyl: bool,
}

fn tilted_check(cfg: &RunConfig) -> Result<Value, Failure> {
    let v = &cfg.validate;
    let eta = v.tilted_eta;
    let d = cfg.geometry.d;
    let base = discrete_transverse_eigenvalue(d, v.tilted_n_u, 1);
    let mut rows = Vec::new();
    let mut cs = Vec::new();
    for &f in &v.tilted_f {
        let m = tilted_transverse_mode(d, v.tilted_n_u, f, eta)?;
        let c = (m.energy - base - f * eta.sin() * d / 2.0).abs() / (f * f);
        cs.push(c);
        rows.push(json!({ "F": f, "energy": m.energy, "C": c }));
    }
    let lo = cs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = cs.iter().copied().fold(0.0, f64::max);
    println!("tilted: C in [{lo:.6e}, {hi:.6e}], second order {:.6e}", tilted_mode_second_order(d, eta).abs());
    Ok(json!({ "points": rows, "c_ratio": hi / lo, "second_order": tilted_mode_second_order(d, eta) }))
}

fn airy_check(cfg: &RunConfig, eta: f64) -> Result<Value, Failure> {
    let v = &cfg.validate;
    let f = cfg.field.f.ok_or_else(|| Failure::Config("airy check needs field.f".into()))?;
    let kappa = f * eta.cos();
    let tp = v.airy_lambda / kappa;
    if !(v.airy_step > 0.0) || !(tp > v.airy_left) {
        return Err(Failure::Config(format!("airy window [{}, {tp}] is empty", v.airy_left)));
    }
    let n = ((tp - v.airy_left) / v.airy_step) as usize;
    let s: Vec<f64> = (0..=n).map(|i| v.airy_left + i as f64 * v.airy_step).collect();
    let st = airy_scattering_state(f, eta, v.airy_lambda, &s)?;
    let third = v.airy_left + (tp - v.airy_left) / 3.0;
    let law: Vec<f64> = st.amplitude_law(kappa, v.airy_lambda).into_iter().filter(|p| p.0 <= third).map(|p| p.1).collect();
    let mean = law.iter().sum::<f64>() / law.len().max(1) as f64;
    let dev = law.iter().map(|a| (a / mean - 1.0).abs()).fold(0.0, f64::max);
    println!("airy: amplitude {mean:.8} (limit {:.8}), max relative deviation {dev:.2e}", st.amplitude);
    Ok(json!({
        "turning_point": st.turning_point,
        "window": [v.airy_left, third],
        "mean_amplitude": mean,
        "limit": st.amplitude,
        "max_relative_deviation": dev,
    }))
}

fn weyl_check(cfg: &RunConfig, geom: &GuideGeometry, eta: f64) -> Result<Value, Failure> {
    let v = &cfg.validate;
    let f = cfg.field.f.ok_or_else(|| Failure::Config("weyl check needs field.f".into()))?;
    let grid = cfg.grid()?;
    let mut out = Vec::new();
    for &e in &v.weyl_energies {
        let mut res = Vec::new();
        for &n in &v.weyl_n {
            let wp = WeylParams::new(e, n, v.weyl_alpha_exp)?;
            res.push(weyl_residual(geom, FieldConfig::new(f, eta), &grid, &wp)?.residual);
        }
        let decreasing = res.windows(2).all(|w| w[1] < w[0]);
        println!("weyl: E = {e}: {res:?} decreasing {decreasing}");
        out.push(json!({ "E": e, "n": v.weyl_n, "residuals": res, "decreasing": decreasing }));
    }
    Ok(Value::Array(out))
}

pub fn validate(ctx: &mut Context, checks: Checks) -> Result<(), Failure> {
    let cfg = ctx.cfg.clone();
    let geom = cfg.geometry()?;
    let eta = cfg.eta(&geom);
    let all = !(checks.tilted || checks.airy || checks.weyl);
    let mut outputs = serde_json::Map::new();
    if all || checks.tilted {
        outputs.insert("tilted".into(), tilted_check(&cfg)?);
    }
    if all || checks.airy {
        outputs.insert("airy".into(), airy_check(&cfg, eta)?);
    }
    if all || checks.weyl {
        outputs.insert("weyl".into(), weyl_check(&cfg, &geom, eta)?);
    }
    let params = json!({
        "geometry": section(&cfg.geometry),
        "field": section(&cfg.field),
        "grid": section(&cfg.grid),
        "validate": section(&cfg.validate),
    });
    ctx.emit("validate", params, Value::Object(outputs), vec![])
}
