//! Run orchestration: simulation loop, convergence study and the
//! operator-identity check suite.

use std::path::PathBuf;
use std::sync::Arc;

use crate::cases::{self, CaseConfig};
use crate::config::RunConfig;
use crate::conservation::{
    conserved_energy, evaluate_functionals, production_residuals_from, DiagnosticsRecord,
    Functionals,
};
use crate::dynamics::{Formulation, TswOps, TswState};
use crate::error::{Error, Result};
use crate::fespace::Field;
use crate::linalg::pair;
use crate::mesh::build_periodic_quad_mesh;
use crate::output::{
    write_manifest, write_sampled_grid, write_snapshot, DiagnosticsWriter, SnapshotFormat,
};
use crate::timeint::{ssprk3_step, StepConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub struct RunArtifacts {
    pub out_dir: PathBuf,
    pub records: Vec<DiagnosticsRecord<f64>>,
    pub initial: Functionals<f64>,
    pub final_functionals: Functionals<f64>,
    pub steps_completed: usize,
}

pub fn build_ops(cfg: &RunConfig) -> Result<TswOps<f64>> {
    let mesh = Arc::new(build_periodic_quad_mesh(
        cfg.mesh.nx,
        cfg.mesh.ny,
        cfg.mesh.lx,
        cfg.mesh.ly,
    )?);
    TswOps::new(mesh, cfg.space.order, cfg.space.quad_points, cfg.solver_config()?)
}

pub fn initial_state(cfg: &RunConfig, ops: &TswOps<f64>) -> Result<TswState<f64>> {
    let form = cfg.formulation()?;
    let mut case = cfg.case_config()?;
    match cfg.case.name.as_str() {
        "balanced-jet" => cases::init_balanced_jet(ops, &case, form),
        "shear-instability" => cases::init_shear_instability(ops, &case, form),
        "rest" => {
            case.u0 = 0.0;
            cases::init_balanced_jet(ops, &case, form)
        }
        other => Err(Error::config("case.name", format!("unknown case `{other}`"))),
    }
}

fn make_record(
    ops: &TswOps<f64>,
    state: &TswState<f64>,
    step: usize,
    dt: f64,
    initial: &Functionals<f64>,
    form: Formulation,
) -> Result<(DiagnosticsRecord<f64>, Functionals<f64>)> {
    let f = evaluate_functionals(ops, state)?;
    let eval = ops.evaluate_rhs(state)?;
    let (energy_rate, entropy_rate) = production_residuals_from(ops, state, &eval)?;
    let e = conserved_energy(form, &f);
    let e0 = conserved_energy(form, initial);
    let dx_min = (ops.mesh.dx.min(ops.mesh.dy)) / (ops.v2.order as f64 + 1.0);
    let rec = DiagnosticsRecord {
        step,
        time: step as f64 * dt,
        mass_err_abs: f.mass - initial.mass,
        mass_err_rel: (f.mass - initial.mass).abs() / initial.mass.abs(),
        vort_err_abs: f.vorticity - initial.vorticity,
        buoy_err_abs: f.buoyancy - initial.buoyancy,
        buoy_err_rel: (f.buoyancy - initial.buoyancy).abs() / initial.buoyancy.abs(),
        energy_m: f.energy_m,
        energy_f: f.energy_f,
        energy_err_rel: (e - e0).abs() / e0.abs(),
        entropy: f.entropy,
        entropy_alt: f.entropy_alt,
        entropy_err_rel: (f.entropy - initial.entropy).abs() / initial.entropy.abs(),
        energy_rate,
        entropy_rate,
        min_h: f.min_h,
        max_cfl: dt * f.max_speed / dx_min,
    };
    Ok((rec, f))
}

fn snapshot_fields<'a>(state: &'a TswState<f64>) -> Vec<(&'static str, &'a Field<f64>)> {
    let mut fields = vec![("u", &state.u), ("h", &state.h), ("hb", &state.hb)];
    if let Some(b) = &state.b {
        fields.push(("b", b));
    }
    fields
}

/// Run one simulation to completion, writing diagnostics.csv, snapshots and
/// the manifest into the output directory.
pub fn run_simulation(cfg: &RunConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    let form = cfg.formulation()?;
    let ops = build_ops(cfg)?;
    let mut state = initial_state(cfg, &ops)?;

    let out_dir = cfg.output_dir();
    std::fs::create_dir_all(&out_dir)?;
    write_manifest(
        &out_dir.join("manifest.toml"),
        &cfg.to_toml_string(),
        VERSION,
    )?;
    let mut diag = DiagnosticsWriter::create(&out_dir.join("diagnostics.csv"))?;

    let snapshot_format = match cfg.output.snapshot_format.as_str() {
        "binary" => SnapshotFormat::Binary,
        _ => SnapshotFormat::Text,
    };
    let step_cfg = StepConfig {
        dt: cfg.time.dt,
        nsteps: cfg.time.nsteps,
    };
    let dt = step_cfg.dt;
    let dx_min = (ops.mesh.dx.min(ops.mesh.dy)) / (ops.v2.order as f64 + 1.0);

    let initial = evaluate_functionals(&ops, &state)?;
    let mut records = Vec::new();
    let (rec0, _) = make_record(&ops, &state, 0, dt, &initial, form)?;
    diag.append(&rec0)?;
    records.push(rec0);
    let write_snaps = |step: usize, state: &TswState<f64>| -> Result<()> {
        if cfg.output.snapshot_every > 0 && step % cfg.output.snapshot_every == 0 {
            for (name, field) in snapshot_fields(state) {
                let path = out_dir.join(format!("snap_{step:08}_{name}.dat"));
                write_snapshot(&path, name, field, step as f64 * dt, snapshot_format)?;
            }
            if cfg.output.sample_grid > 0 {
                let bprime = ops.diagnose_bprime(state)?;
                let q = ops.diagnose_q(state)?;
                write_sampled_grid(
                    &out_dir.join(format!("grid_{step:08}_bprime.txt")),
                    &bprime,
                    cfg.output.sample_grid,
                )?;
                write_sampled_grid(
                    &out_dir.join(format!("grid_{step:08}_q.txt")),
                    &q,
                    cfg.output.sample_grid,
                )?;
            }
        }
        Ok(())
    };
    write_snaps(0, &state)?;

    let mut cfl_warned = false;
    let mut final_functionals = initial;
    for step in 1..=step_cfg.nsteps {
        ops.check_positivity(&state, step - 1)?;
        let speed = ops.max_speed(&state);
        if !cfl_warned && dt * speed / dx_min > 0.5 {
            eprintln!(
                "warning: advective cfl {:.2} exceeds 0.5 at step {step}",
                dt * speed / dx_min
            );
            cfl_warned = true;
        }
        state = ssprk3_step(&state, dt, |s| {
            let eval = ops.evaluate_rhs(s)?;
            Ok::<_, Error>(eval.as_state(s))
        })?;
        if step % cfg.output.diagnostics_every == 0 || step == step_cfg.nsteps {
            let (rec, f) = make_record(&ops, &state, step, dt, &initial, form)?;
            if !rec.is_finite() {
                return Err(Error::invalid(format!(
                    "non-finite diagnostics at step {step}"
                )));
            }
            diag.append(&rec)?;
            records.push(rec);
            final_functionals = f;
        }
        write_snaps(step, &state)?;
    }
    diag.finish()?;
    Ok(RunArtifacts {
        out_dir,
        records,
        initial,
        final_functionals,
        steps_completed: step_cfg.nsteps,
    })
}

/// L2 norms (by quadrature) of the differences h-h', u-u', hb-hb'.
pub fn l2_differences(
    ops: &TswOps<f64>,
    a: &TswState<f64>,
    b: &TswState<f64>,
) -> (f64, f64, f64) {
    let nq = ops.quad.len();
    let mut bufs = vec![vec![0.0; nq]; 8];
    let (mut eh, mut eu, mut ehb) = (0.0, 0.0, 0.0);
    for cell in 0..ops.mesh.n_cells() {
        let t = &ops.actions;
        let [ha, hb_, ba, bb, uxa, uya, uxb, uyb] = &mut bufs[..] else {
            unreachable!()
        };
        t.t2.field_at_q(&ops.v2, &a.h, cell, ha);
        t.t2.field_at_q(&ops.v2, &b.h, cell, hb_);
        t.t2.field_at_q(&ops.v2, &a.hb, cell, ba);
        t.t2.field_at_q(&ops.v2, &b.hb, cell, bb);
        t.t1.vector_at_q(&ops.v1, &a.u, cell, uxa, uya);
        t.t1.vector_at_q(&ops.v1, &b.u, cell, uxb, uyb);
        for q in 0..nq {
            let w = t.t2.wdetj[q];
            eh += w * (ha[q] - hb_[q]).powi(2);
            ehb += w * (ba[q] - bb[q]).powi(2);
            eu += w * ((uxa[q] - uxb[q]).powi(2) + (uya[q] - uyb[q]).powi(2));
        }
    }
    (eh.sqrt(), eu.sqrt(), ehb.sqrt())
}

#[derive(Debug, Clone)]
pub struct ConvergenceLevel {
    pub mesh_n: usize,
    pub dt: f64,
    pub nsteps: usize,
    pub err_h: f64,
    pub err_u: f64,
    pub err_hb: f64,
}

#[derive(Debug, Clone)]
pub struct ConvergenceStudy {
    pub levels: Vec<ConvergenceLevel>,
    /// rate[i] compares level i and i+1; None when undefined (0/0).
    pub rates_h: Vec<Option<f64>>,
    pub rates_u: Vec<Option<f64>>,
    pub rates_hb: Vec<Option<f64>>,
}

impl ConvergenceStudy {
    pub fn table(&self) -> String {
        let mut s = String::new();
        s.push_str("  n      dt       steps   err_h        err_u        err_hb       rate_h rate_u rate_hb\n");
        for (i, l) in self.levels.iter().enumerate() {
            let rate = |r: &Vec<Option<f64>>| {
                if i == 0 {
                    "  -  ".to_string()
                } else {
                    match r[i - 1] {
                        Some(v) if v.is_finite() => format!("{v:5.2}"),
                        _ => "undef".to_string(),
                    }
                }
            };
            s.push_str(&format!(
                "{:4}  {:8.2} {:6}  {:.6e} {:.6e} {:.6e}  {} {} {}\n",
                l.mesh_n,
                l.dt,
                l.nsteps,
                l.err_h,
                l.err_u,
                l.err_hb,
                rate(&self.rates_h),
                rate(&self.rates_u),
                rate(&self.rates_hb),
            ));
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("mesh_n,dt,nsteps,err_h,err_u,err_hb,rate_h,rate_u,rate_hb\n");
        let fmt_rate = |r: Option<f64>| match r {
            Some(v) if v.is_finite() => format!("{v:.6}"),
            _ => "undefined".to_string(),
        };
        for (i, l) in self.levels.iter().enumerate() {
            let (rh, ru, rb) = if i == 0 {
                ("".into(), "".into(), "".into())
            } else {
                (
                    fmt_rate(self.rates_h[i - 1]),
                    fmt_rate(self.rates_u[i - 1]),
                    fmt_rate(self.rates_hb[i - 1]),
                )
            };
            s.push_str(&format!(
                "{},{},{},{:.17e},{:.17e},{:.17e},{},{},{}\n",
                l.mesh_n, l.dt, l.nsteps, l.err_h, l.err_u, l.err_hb, rh, ru, rb
            ));
        }
        s
    }
}

fn rate_between(e_coarse: f64, e_fine: f64, n_coarse: usize, n_fine: usize) -> Option<f64> {
    if !(e_coarse.is_finite() && e_fine.is_finite()) || e_coarse <= 0.0 || e_fine <= 0.0 {
        return None;
    }
    let refine = n_fine as f64 / n_coarse as f64;
    if refine <= 1.0 {
        return None;
    }
    Some((e_coarse / e_fine).ln() / refine.ln())
}

/// Balanced-jet self-convergence: run each level to the fixed physical
/// time and measure the L2 drift from the (steady) initial state.
pub fn run_convergence_study(cfg: &RunConfig) -> Result<ConvergenceStudy> {
    cfg.validate()?;
    let conv = cfg
        .converge
        .as_ref()
        .ok_or_else(|| Error::config("converge", "missing [converge] section"))?
        .clone();
    let mut levels = Vec::new();
    for (&n, &dt) in conv.meshes.iter().zip(&conv.dts) {
        let nsteps = (conv.physical_time / dt).round() as usize;
        if ((nsteps as f64 * dt) - conv.physical_time).abs() > 1e-9 * conv.physical_time {
            return Err(Error::config(
                "converge.dts",
                format!("dt {dt} does not divide the physical time"),
            ));
        }
        let mut sub = cfg.clone();
        sub.mesh.nx = n;
        sub.mesh.ny = n;
        sub.time.dt = dt;
        sub.time.nsteps = nsteps;
        let ops = build_ops(&sub)?;
        let state0 = initial_state(&sub, &ops)?;
        let mut state = state0.clone();
        for step in 0..nsteps {
            ops.check_positivity(&state, step)?;
            state = ssprk3_step(&state, dt, |s| {
                let eval = ops.evaluate_rhs(s)?;
                Ok::<_, Error>(eval.as_state(s))
            })?;
        }
        let (err_h, err_u, err_hb) = l2_differences(&ops, &state, &state0);
        levels.push(ConvergenceLevel {
            mesh_n: n,
            dt,
            nsteps,
            err_h,
            err_u,
            err_hb,
        });
    }
    let mut rates_h = Vec::new();
    let mut rates_u = Vec::new();
    let mut rates_hb = Vec::new();
    for w in levels.windows(2) {
        rates_h.push(rate_between(w[0].err_h, w[1].err_h, w[0].mesh_n, w[1].mesh_n));
        rates_u.push(rate_between(w[0].err_u, w[1].err_u, w[0].mesh_n, w[1].mesh_n));
        rates_hb.push(rate_between(w[0].err_hb, w[1].err_hb, w[0].mesh_n, w[1].mesh_n));
    }
    let study = ConvergenceStudy {
        levels,
        rates_h,
        rates_u,
        rates_hb,
    };
    let out_dir = cfg.output_dir();
    std::fs::create_dir_all(&out_dir)?;
    std::fs::write(out_dir.join("convergence.csv"), study.to_csv())?;
    Ok(study)
}

#[derive(Debug, Clone)]
pub struct CheckEntry {
    pub name: &'static str,
    pub residual: f64,
    pub threshold: f64,
}

impl CheckEntry {
    pub fn pass(&self) -> bool {
        self.residual <= self.threshold
    }
}

/// Operator-identity suite on a small mesh: the structural checks behind
/// the conservation properties, printable from the CLI.
pub fn check_report(nx: usize, ny: usize, order: usize) -> Result<Vec<CheckEntry>> {
    let mesh = Arc::new(build_periodic_quad_mesh(nx, ny, 1.0e6, 1.0e6)?);
    let ops = TswOps::new(mesh, order, None, Default::default())?;
    let mut entries = Vec::new();

    // Complex identity D2 (strong perp) = 0.
    let d2p = ops.d2.matmul(&ops.strong_perp);
    entries.push(CheckEntry {
        name: "complex identity: div after perp-grad",
        residual: d2p.max_abs(),
        threshold: 1e-13,
    });

    // M1 (strong perp) = R1.
    let m1p = ops.m1.matmul(&ops.strong_perp);
    let mut max_diff = 0.0f64;
    let mut scale = 0.0f64;
    for seed in 0..5u64 {
        let psi: Vec<f64> = (0..ops.v0.ndof)
            .map(|i| {
                let mut r = crate::prng::SplitMix64::new(seed * 7919 + i as u64);
                r.symmetric()
            })
            .collect();
        let a = m1p.mul_vec_alloc(&psi);
        let b = ops.r1.mul_vec_alloc(&psi);
        for (x, y) in a.iter().zip(&b) {
            max_diff = max_diff.max((x - y).abs());
            scale = scale.max(y.abs());
        }
    }
    entries.push(CheckEntry {
        name: "strong perp-grad consistent with R1",
        residual: max_diff / scale.max(1e-300),
        threshold: 1e-12,
    });

    // Euler characteristic of the complex.
    let euler = ops.v0.ndof as f64 - ops.v1.ndof as f64 + ops.v2.ndof as f64;
    entries.push(CheckEntry {
        name: "euler characteristic V0 - V1 + V2",
        residual: euler.abs(),
        threshold: 0.0,
    });

    // Transpose identity for D2.
    let mut rng = crate::prng::SplitMix64::new(99);
    let v: Vec<f64> = (0..ops.v1.ndof).map(|_| rng.symmetric()).collect();
    let phi: Vec<f64> = (0..ops.v2.ndof).map(|_| rng.symmetric()).collect();
    let lhs = pair(&ops.d2t.mul_vec_alloc(&phi), &v)?;
    let rhs = pair(&ops.d2.mul_vec_alloc(&v), &phi)?;
    entries.push(CheckEntry {
        name: "weak gradient is transpose of divergence",
        residual: (lhs - rhs).abs() / lhs.abs().max(1e-300),
        threshold: 1e-13,
    });

    // C1 orthogonality.
    let case = CaseConfig::<f64>::default();
    let st = cases::random_state(&ops, &case, Formulation::Coupled, 11)?;
    let q = ops.diagnose_q(&st)?;
    let f = ops.diagnose_flux(&st)?;
    let c1 = ops.actions.apply_c1(&q, &f)?;
    let f2 = pair(&ops.m1.mul_vec_alloc(&f.coeffs), &f.coeffs)?;
    entries.push(CheckEntry {
        name: "rotated flux orthogonal to flux",
        residual: pair(&c1.coeffs, &f.coeffs)?.abs() / f2.max(1e-300),
        threshold: 1e-12,
    });

    // Weighted-mass linearity.
    let w1 = Field::from_coeffs(&ops.v2, (0..ops.v2.ndof).map(|_| rng.symmetric()).collect());
    let w2 = Field::from_coeffs(&ops.v2, (0..ops.v2.ndof).map(|_| rng.symmetric()).collect());
    let mut wsum = w1.clone();
    wsum.scale(0.3);
    wsum.axpy(-1.7, &w2);
    let a1 = ops
        .m2_pattern
        .fill_weighted(&ops.actions.t2, &ops.actions.t2, &w1);
    let a2 = ops
        .m2_pattern
        .fill_weighted(&ops.actions.t2, &ops.actions.t2, &w2);
    let asum = ops
        .m2_pattern
        .fill_weighted(&ops.actions.t2, &ops.actions.t2, &wsum);
    let mut lin_res = 0.0f64;
    for i in 0..asum.values.len() {
        lin_res = lin_res.max((asum.values[i] - (0.3 * a1.values[i] - 1.7 * a2.values[i])).abs());
    }
    entries.push(CheckEntry {
        name: "weighted mass linear in the weight",
        residual: lin_res / asum.max_abs().max(1e-300),
        threshold: 1e-14,
    });

    // Coupled-form spatial conservation on a random state.
    let eval = ops.evaluate_rhs(&st)?;
    let (de, ds) = production_residuals_from(&ops, &st, &eval)?;
    let fns = evaluate_functionals(&ops, &st)?;
    entries.push(CheckEntry {
        name: "coupled energy production",
        residual: de.abs() / fns.energy_f.abs(),
        threshold: 1e-11,
    });
    entries.push(CheckEntry {
        name: "coupled entropy production",
        residual: ds.abs() / fns.entropy.abs(),
        threshold: 1e-11,
    });

    Ok(entries)
}
