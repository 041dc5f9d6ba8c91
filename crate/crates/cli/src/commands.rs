//! Subcommand drivers.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use vmsns::assembly::assemble_operators;
use vmsns::cases::{
    exact_projection, initial_state, l2_initial_state, project_reference, total_vorticity, Difference,
    RollupCase, Snapshot, TgvCase,
};
use vmsns::diagnostics::{conserved_quantities, error_norms, galerkin_record, DiagnosticsRecord, ErrorNorms};
use vmsns::fields::{plotting_points, DiscreteField, FieldSample, FlowField, PlanTable, QuadPlan};
use vmsns::mesh::{build_mesh, Mesh, MeshSpec};
use vmsns::timestepper::{run, FlowState, GalerkinStepper};
use vmsns::vms::{build_scale_pair, vms_record, VmsStepper};

use crate::config::{CaseKind, InitialCondition, Mode, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{convergence_csv, fields_path, field_csv, lsq_order, num, time_label, write_text, ConvergenceRow};

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn core_io(path: &Path, e: std::io::Error) -> vmsns::Error {
    vmsns::Error::Io(format!("{}: {e}", path.display()))
}

fn tgv_case(cfg: &RunConfig) -> TgvCase {
    TgvCase { re: cfg.re }
}

/// The reference field of the configured case at time `t`.
fn reference_at(cfg: &RunConfig, t: f64) -> CliResult<Box<dyn FlowField>> {
    match cfg.case {
        CaseKind::Tgv => Ok(Box::new(tgv_case(cfg).field(t))),
        CaseKind::Rollup if t == 0.0 => Ok(Box::new(RollupCase::default())),
        CaseKind::Rollup => Err(CliError::config(
            "config",
            "t_final",
            "the roll-up reference is known only at t = 0",
        )),
    }
}

fn create_output_dir(cfg: &RunConfig) -> CliResult<()> {
    fs::create_dir_all(&cfg.output).map_err(|e| io_err(&cfg.output, e))
}

/// Step indices of a list of times.
fn step_set(cfg: &RunConfig, times: &[f64]) -> CliResult<BTreeSet<usize>> {
    let c = cfg.controls();
    times.iter().map(|&t| Ok(c.steps_to(0.0, t)?)).collect()
}

/// Sink of `diag.csv`, field dumps and snapshots of a time-dependent run.
struct RunOutput<'a> {
    cfg: &'a RunConfig,
    diag: BufWriter<File>,
    diag_path: std::path::PathBuf,
    dump_steps: BTreeSet<usize>,
    snapshot_steps: BTreeSet<usize>,
}

impl<'a> RunOutput<'a> {
    fn new(cfg: &'a RunConfig) -> CliResult<Self> {
        create_output_dir(cfg)?;
        let diag_path = cfg.output.join("diag.csv");
        let mut diag = BufWriter::new(File::create(&diag_path).map_err(|e| io_err(&diag_path, e))?);
        writeln!(diag, "{}", DiagnosticsRecord::HEADER).map_err(|e| io_err(&diag_path, e))?;
        Ok(Self {
            cfg,
            diag,
            diag_path,
            dump_steps: step_set(cfg, &cfg.dump_times)?,
            snapshot_steps: step_set(cfg, &cfg.snapshot_times)?,
        })
    }

    fn record(&mut self, r: &DiagnosticsRecord) -> vmsns::Result<()> {
        writeln!(self.diag, "{}", r.csv_row()).map_err(|e| core_io(&self.diag_path, e))
    }

    fn dump(&self, step: usize, mesh: &Mesh, state: &FlowState, prefix: &str) -> vmsns::Result<()> {
        if !self.dump_steps.contains(&step) {
            return Ok(());
        }
        let points = plotting_points(mesh, self.cfg.density)?;
        let f = DiscreteField::new(mesh, &state.omega, &state.u).with_pressure(&state.p, Some(&state.u_half));
        let path = fields_path(&self.cfg.output, prefix, state.t);
        fs::write(&path, field_csv(&points, &f)).map_err(|e| core_io(&path, e))
    }

    fn snapshot(&self, step: usize, spec: MeshSpec, state: &FlowState) -> vmsns::Result<()> {
        if !self.snapshot_steps.contains(&step) {
            return Ok(());
        }
        let path = self.cfg.output.join(format!("snapshot_t{}.vmsnap", time_label(state.t)));
        Snapshot {
            spec,
            config_hash: self.cfg.hash(),
            state: state.clone(),
        }
        .write(&path)
    }

    fn finish(mut self) -> CliResult<()> {
        self.diag.flush().map_err(|e| io_err(&self.diag_path, e))
    }
}

/// Summary of a finished run for the stdout report.
struct RunSummary {
    steps: usize,
    first: DiagnosticsRecord,
    last: DiagnosticsRecord,
    max_dk: f64,
    max_iters: usize,
}

impl RunSummary {
    fn new(first: DiagnosticsRecord) -> Self {
        Self {
            steps: 0,
            last: first.clone(),
            first,
            max_dk: 0.0,
            max_iters: 0,
        }
    }

    fn push(&mut self, r: &DiagnosticsRecord) {
        self.steps = r.step;
        let k0 = self.first.k_total;
        self.max_dk = self.max_dk.max((r.k_total - k0).abs() / k0.abs().max(f64::MIN_POSITIVE));
        self.max_iters = self.max_iters.max(r.picard_iters);
        self.last = r.clone();
    }

    fn report(&self, out: &mut dyn Write) -> CliResult<()> {
        let (a, b) = (&self.first, &self.last);
        writeln!(out, "steps: {}", self.steps)?;
        writeln!(out, "t: {}", num(b.t))?;
        writeln!(out, "K_total: {} -> {}", num(a.k_total), num(b.k_total))?;
        writeln!(out, "max |dK|/K0: {}", num(self.max_dk))?;
        writeln!(out, "W_total drift: {}", num(b.w_total - a.w_total))?;
        writeln!(out, "max picard iterations: {}", self.max_iters)?;
        Ok(())
    }
}

/// Time-dependent run of the configured case and mode.
pub fn cmd_run(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<()> {
    match cfg.mode {
        Mode::Galerkin => run_galerkin(cfg, out),
        Mode::Vms if cfg.k == 0 => run_galerkin(cfg, out),
        Mode::Vms => run_vms(cfg, out),
        Mode::ProjectOnly => run_projection(cfg, out),
    }
}

/// The roll-up benchmark; the config must describe the roll-up case.
pub fn cmd_rollup(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<()> {
    if cfg.case != CaseKind::Rollup {
        return Err(CliError::Usage("the rollup command requires case = rollup".into()));
    }
    cmd_run(cfg, out)
}

fn run_galerkin(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<()> {
    let spec = cfg.mesh_spec();
    let controls = cfg.controls();
    let steps = controls.steps_to(0.0, cfg.t_final)?;
    let mesh = build_mesh(spec)?;
    let ops = assemble_operators(&mesh, cfg.p)?;
    let stepper = GalerkinStepper::new(&mesh, &ops, controls)?;
    let reference = reference_at(cfg, 0.0)?;
    let ic = match cfg.ic {
        InitialCondition::Projector => initial_state(&mesh, &ops, &controls, reference.as_ref(), 0.0)?,
        InitialCondition::L2 => l2_initial_state(&mesh, reference.as_ref(), 0.0)?,
    };
    let mut sink = RunOutput::new(cfg)?;
    let r0 = galerkin_record(&mesh, &ops, &controls, 0, &ic, &ic, 0)?;
    let mut summary = RunSummary::new(r0.clone());
    sink.record(&r0)?;
    sink.dump(0, &mesh, &ic, "fields")?;
    sink.snapshot(0, spec, &ic)?;
    let result = run(&stepper, ic, steps, |n, a, b, info| {
        let r = galerkin_record(&mesh, &ops, &controls, n, a, b, info.picard_iters)?;
        sink.record(&r)?;
        summary.push(&r);
        sink.dump(n, &mesh, b, "fields")?;
        sink.snapshot(n, spec, b)
    });
    sink.finish()?;
    result?;
    writeln!(out, "mode: galerkin")?;
    summary.report(out)
}

fn run_vms(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<()> {
    let spec = cfg.mesh_spec();
    let controls = cfg.controls();
    let steps = controls.steps_to(0.0, cfg.t_final)?;
    let pair = build_scale_pair(spec, cfg.k)?;
    let stepper = VmsStepper::new(&pair, controls)?;
    let reference = reference_at(cfg, 0.0)?;
    let ic = stepper.initial_state(reference.as_ref(), 0.0)?;
    let mut sink = RunOutput::new(cfg)?;
    let r0 = vms_record(&pair, &controls, 0, &ic, &ic, 0)?;
    let mut summary = RunSummary::new(r0.clone());
    sink.record(&r0)?;
    let emit = |sink: &RunOutput, n: usize, s: &vmsns::vms::SplitState| -> vmsns::Result<()> {
        sink.dump(n, &pair.coarse, &s.coarse, "fields")?;
        sink.dump(n, &pair.fine, &s.fine, "fields_unresolved")?;
        sink.snapshot(n, spec, &s.coarse)
    };
    emit(&sink, 0, &ic)?;
    let mut max_orth = stepper.orthogonality_residual(&ic);
    let result = run(&stepper, ic, steps, |n, a, b, info| {
        let r = vms_record(&pair, &controls, n, a, b, info.picard_iters)?;
        sink.record(&r)?;
        summary.push(&r);
        max_orth = max_orth.max(stepper.orthogonality_residual(b));
        emit(&sink, n, b)
    });
    sink.finish()?;
    result?;
    writeln!(out, "mode: vms k = {}", cfg.k)?;
    summary.report(out)?;
    writeln!(out, "max orthogonality residual: {}", num(max_orth))?;
    Ok(())
}

/// Exact optimal projections of the reference at the output times.
fn run_projection(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<()> {
    let controls = cfg.controls();
    let spec = cfg.mesh_spec();
    let mesh = build_mesh(spec)?;
    let ops = assemble_operators(&mesh, cfg.p)?;
    let mut steps = step_set(cfg, &cfg.dump_times)?;
    steps.extend(step_set(cfg, &cfg.snapshot_times)?);
    steps.insert(0);
    steps.insert(controls.steps_to(0.0, cfg.t_final)?);
    if cfg.case == CaseKind::Rollup && steps.len() > 1 {
        return Err(CliError::config(
            "config",
            "t_final",
            "project-only roll-up runs need t_final = 0: the reference is known only at t = 0",
        ));
    }
    let mut sink = RunOutput::new(cfg)?;
    for &n in &steps {
        let t = n as f64 * cfg.dt;
        let reference = reference_at(cfg, t)?;
        let s = exact_projection(&mesh, controls.params(), reference.as_ref(), t)?;
        let q = conserved_quantities(&mesh, &ops, &s.omega, &s.u)?;
        let r = DiagnosticsRecord {
            step: n,
            t,
            k_total: q.k,
            k_coarse: q.k,
            e_total: q.e,
            w_total: q.w,
            p_pal: q.p_pal,
            div_res_coarse: s.div_residual(&mesh),
            ..DiagnosticsRecord::default()
        };
        sink.record(&r)?;
        sink.dump(n, &mesh, &s, "fields")?;
        sink.snapshot(n, spec, &s)?;
        writeln!(out, "t = {}: K = {}, W = {}", num(t), num(q.k), num(q.w))?;
    }
    sink.finish()
}

/// Errors of one TGV configuration at `t_final`.
struct TgvErrors {
    exact: ErrorNorms,
    vs_proj: ErrorNorms,
    unresolved: ErrorNorms,
}

fn zero_field(_: &vmsns::fields::FieldPoint) -> FieldSample {
    FieldSample::default()
}

fn tgv_errors(cfg: &RunConfig, n: usize, mode: Mode, k: usize) -> CliResult<TgvErrors> {
    let case = tgv_case(cfg);
    let controls = cfg.controls();
    let steps = controls.steps_to(0.0, cfg.t_final)?;
    let spec = cfg.mesh_spec_n(n);
    let mesh = build_mesh(spec)?;
    let table = PlanTable::new(cfg.p, QuadPlan::error())?;
    let exact = case.field(cfg.t_final);
    let proj = exact_projection(&mesh, controls.params(), &exact, cfg.t_final)?;
    let fp = DiscreteField::new(&mesh, &proj.omega, &proj.u).with_pressure(&proj.p, Some(&proj.u_half));
    let target = Difference { a: &exact, b: &fp };
    let mode = if mode == Mode::Vms && k == 0 { Mode::Galerkin } else { mode };
    match mode {
        Mode::ProjectOnly => Ok(TgvErrors {
            exact: error_norms(&mesh, &table, &fp, &exact, &exact),
            vs_proj: ErrorNorms::default(),
            unresolved: error_norms(&mesh, &table, &zero_field, &target, &target),
        }),
        Mode::Galerkin => {
            let ops = assemble_operators(&mesh, cfg.p)?;
            let stepper = GalerkinStepper::new(&mesh, &ops, controls)?;
            let ic = match cfg.ic {
                InitialCondition::Projector => initial_state(&mesh, &ops, &controls, &case.field(0.0), 0.0)?,
                InitialCondition::L2 => l2_initial_state(&mesh, &case.field(0.0), 0.0)?,
            };
            let s = run(&stepper, ic, steps, |_, _, _, _| Ok(()))?;
            let f = DiscreteField::new(&mesh, &s.omega, &s.u).with_pressure(&s.p, Some(&s.u_half));
            Ok(TgvErrors {
                exact: error_norms(&mesh, &table, &f, &exact, &case.field(s.p_time)),
                vs_proj: error_norms(&mesh, &table, &f, &fp, &fp),
                unresolved: error_norms(&mesh, &table, &zero_field, &target, &target),
            })
        }
        Mode::Vms => {
            let pair = build_scale_pair(spec, k)?;
            let stepper = VmsStepper::new(&pair, controls)?;
            let ic = stepper.initial_state(&case.field(0.0), 0.0)?;
            let s = run(&stepper, ic, steps, |_, _, _, _| Ok(()))?;
            let c = &s.coarse;
            let f = DiscreteField::new(&mesh, &c.omega, &c.u).with_pressure(&c.p, Some(&c.u_half));
            let ff = DiscreteField::new(&pair.fine, &s.fine.omega, &s.fine.u).with_pressure(&s.fine.p, None);
            let fine_table = PlanTable::new(cfg.p + k, QuadPlan::error())?;
            Ok(TgvErrors {
                exact: error_norms(&mesh, &table, &f, &exact, &case.field(c.p_time)),
                vs_proj: error_norms(&mesh, &table, &f, &fp, &fp),
                unresolved: error_norms(&pair.fine, &fine_table, &ff, &target, &target),
            })
        }
    }
}

fn row(cfg: &RunConfig, n: usize, k: usize, mode: Mode, e: ErrorNorms, order_local: Option<f64>) -> ConvergenceRow {
    ConvergenceRow {
        n,
        p: cfg.p,
        k,
        mode: mode.name().to_string(),
        e_omega: e.e_omega,
        e_u: e.e_u,
        e_p: e.e_p,
        order_local,
    }
}

/// TGV convergence study: an h-study over `sweep_N` and `modes`, or a
/// k-study over `sweep_k` at fixed `N`.
pub fn cmd_tgv_convergence(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<()> {
    if cfg.case != CaseKind::Tgv {
        return Err(CliError::Usage("the tgv-converge command requires case = tgv".into()));
    }
    create_output_dir(cfg)?;
    if cfg.sweep_k.is_empty() {
        h_study(cfg, out)
    } else {
        k_study(cfg, out)
    }
}

fn h_study(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<()> {
    let ns = if cfg.sweep_n.is_empty() { vec![cfg.n] } else { cfg.sweep_n.clone() };
    let path = cfg.output.join("tgv_h.csv");
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for &mode in &cfg.modes {
        let k = if mode == Mode::Vms { cfg.k } else { 0 };
        let mut prev: Option<(usize, f64)> = None;
        for &n in &ns {
            let e = match tgv_errors(cfg, n, mode, k) {
                Ok(e) => e.exact,
                Err(err) => {
                    write_text(&path, &convergence_csv(&rows, Some(&err.to_string())))?;
                    return Err(err);
                }
            };
            let order = prev.map(|(n0, e0)| (e0 / e.e_omega).ln() / (n as f64 / n0 as f64).ln());
            prev = Some((n, e.e_omega));
            rows.push(row(cfg, n, k, mode, e, order));
        }
    }
    write_text(&path, &convergence_csv(&rows, None))?;
    writeln!(out, "{}", crate::output::CONVERGENCE_HEADER)?;
    for r in &rows {
        writeln!(out, "{}", r.csv_row())?;
    }
    for &mode in &cfg.modes {
        let of = |f: fn(&ConvergenceRow) -> f64| {
            let pts: Vec<(usize, f64)> = rows.iter().filter(|r| r.mode == mode.name()).map(|r| (r.n, f(r))).collect();
            lsq_order(&pts).map_or("n/a".to_string(), |o| format!("{o:.3}"))
        };
        writeln!(
            out,
            "observed order {}: omega {}, u {}, p {}",
            mode.name(),
            of(|r| r.e_omega),
            of(|r| r.e_u),
            of(|r| r.e_p)
        )?;
    }
    if ns.len() < 3 {
        writeln!(out, "observed orders need at least 3 resolutions")?;
    }
    Ok(())
}

fn k_study(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<()> {
    let names = ["tgv_k.csv", "tgv_k_proj.csv", "tgv_k_prime.csv"];
    let mut tables: [Vec<ConvergenceRow>; 3] = Default::default();
    let write_all = |tables: &[Vec<ConvergenceRow>; 3], partial: Option<&str>| -> CliResult<()> {
        for (name, rows) in names.iter().zip(tables) {
            write_text(&cfg.output.join(name), &convergence_csv(rows, partial))?;
        }
        Ok(())
    };
    for &k in &cfg.sweep_k {
        let mode = if k == 0 { Mode::Galerkin } else { Mode::Vms };
        let e = match tgv_errors(cfg, cfg.n, mode, k) {
            Ok(e) => e,
            Err(err) => {
                write_all(&tables, Some(&err.to_string()))?;
                return Err(err);
            }
        };
        for (t, norms) in tables.iter_mut().zip([e.exact, e.vs_proj, e.unresolved]) {
            t.push(row(cfg, cfg.n, k, mode, norms, None));
        }
    }
    write_all(&tables, None)?;
    for (name, rows) in names.iter().zip(&tables) {
        writeln!(out, "{name}")?;
        for r in rows {
            writeln!(out, "{}", r.csv_row())?;
        }
    }
    Ok(())
}

/// Projects a reference snapshot onto the configured mesh; the mapping and
/// domain follow the snapshot.
pub fn cmd_project(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<()> {
    let path = cfg
        .reference
        .as_ref()
        .ok_or_else(|| CliError::config("config", "reference", "the project command needs a reference snapshot"))?;
    let snap = Snapshot::read(path)?;
    let reference = build_mesh(snap.spec)?;
    let spec = MeshSpec {
        mapping: snap.spec.mapping,
        domain: snap.spec.domain,
        ..cfg.mesh_spec()
    };
    let coarse = build_mesh(spec)?;
    let pr = project_reference(&reference, &snap.state, &coarse, cfg.projector_params())?;
    create_output_dir(cfg)?;
    let st = &snap.state;
    let rf = DiscreteField::new(&reference, &st.omega, &st.u).with_pressure(&st.p, None);
    let pc = &pr.coarse;
    let cf = DiscreteField::new(&coarse, &pc.omega, &pc.u).with_pressure(&pc.p, None);
    let unresolved = Difference { a: &rf, b: &cf };
    let t = st.t;
    write_text(
        &fields_path(&cfg.output, "fields_projected", t),
        &field_csv(&plotting_points(&coarse, cfg.density)?, &cf),
    )?;
    write_text(
        &fields_path(&cfg.output, "fields_unresolved", t),
        &field_csv(&plotting_points(&reference, cfg.density)?, &unresolved),
    )?;
    Snapshot {
        spec,
        config_hash: cfg.hash(),
        state: pc.clone(),
    }
    .write(&cfg.output.join(format!("projected_t{}.vmsnap", time_label(t))))?;
    let table = &pr.ops.table;
    writeln!(out, "t: {}", num(t))?;
    writeln!(out, "total vorticity reference: {}", num(total_vorticity(&coarse, table, &rf)))?;
    writeln!(out, "total vorticity projected: {}", num(total_vorticity(&coarse, table, &cf)))?;
    writeln!(out, "total vorticity unresolved: {}", num(total_vorticity(&coarse, table, &unresolved)))?;
    Ok(())
}
