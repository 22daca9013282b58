//! Conserved functionals and instantaneous production residuals.
//!
//! Energy and entropy rates are evaluated as exact discrete pairings of the
//! functional derivatives with the assembled right-hand sides, so for the
//! coupled formulation both are spatial-scheme zeros up to solver tolerance.

use crate::dynamics::{Formulation, RhsEval, TswOps, TswState};
use crate::error::Result;
use crate::fespace::Field;
use crate::linalg::pair;
use crate::scalar::Real;

/// Instantaneous values of the conserved functionals.
#[derive(Debug, Clone, Copy)]
pub struct Functionals<T> {
    /// integral of h
    pub mass: T,
    /// integral of (h q - f)
    pub vorticity: T,
    /// integral of the depth-weighted buoyancy
    pub buoyancy: T,
    /// material-form energy
    pub energy_m: T,
    /// flux-form energy
    pub energy_f: T,
    /// 1/2 integral of h b^2 (prognostic b in mixed form, b' in coupled)
    pub entropy: T,
    /// the same entropy expressed through the prognostic depth-weighted
    /// buoyancy, 1/2 <b', M2 hb>
    pub entropy_alt: T,
    pub min_h: T,
    pub max_speed: T,
}

/// Per-step diagnostics record as written to the CSV stream.
#[derive(Debug, Clone, Copy)]
pub struct DiagnosticsRecord<T> {
    pub step: usize,
    pub time: T,
    pub mass_err_abs: T,
    pub mass_err_rel: T,
    pub vort_err_abs: T,
    pub buoy_err_abs: T,
    pub buoy_err_rel: T,
    pub energy_m: T,
    pub energy_f: T,
    pub energy_err_rel: T,
    pub entropy: T,
    pub entropy_alt: T,
    pub entropy_err_rel: T,
    pub energy_rate: T,
    pub entropy_rate: T,
    pub min_h: T,
    pub max_cfl: T,
}

impl<T: Real> DiagnosticsRecord<T> {
    pub fn is_finite(&self) -> bool {
        [
            self.time,
            self.mass_err_abs,
            self.vort_err_abs,
            self.buoy_err_abs,
            self.energy_m,
            self.energy_f,
            self.entropy,
            self.entropy_alt,
            self.energy_rate,
            self.entropy_rate,
            self.min_h,
            self.max_cfl,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Evaluate all conserved functionals with the volume quadrature rule.
pub fn evaluate_functionals<T: Real>(
    ops: &TswOps<T>,
    state: &TswState<T>,
) -> Result<Functionals<T>> {
    let half = T::of(0.5);
    let q = ops.diagnose_q(state)?;
    let bprime = ops.diagnose_bprime(state)?;
    let b_eff: &Field<T> = state.b.as_ref().unwrap_or(&bprime);

    let nq = ops.quad.len();
    let mut hv = vec![T::zero(); nq];
    let mut bv = vec![T::zero(); nq];
    let mut hbv = vec![T::zero(); nq];
    let mut qv = vec![T::zero(); nq];
    let mut fv = vec![T::zero(); nq];
    let mut ux = vec![T::zero(); nq];
    let mut uy = vec![T::zero(); nq];

    let mut mass = T::zero();
    let mut vorticity = T::zero();
    let mut buoyancy = T::zero();
    let mut energy_m = T::zero();
    let mut energy_f = T::zero();
    let mut entropy = T::zero();
    let mut min_h = T::infinity();
    let mut max_speed = T::zero();

    for cell in 0..ops.mesh.n_cells() {
        let a = &ops.actions;
        a.t2.field_at_q(&ops.v2, &state.h, cell, &mut hv);
        a.t2.field_at_q(&ops.v2, b_eff, cell, &mut bv);
        a.t2.field_at_q(&ops.v2, &state.hb, cell, &mut hbv);
        a.t0.field_at_q(&ops.v0, &q, cell, &mut qv);
        a.t0.field_at_q(&ops.v0, &state.coriolis, cell, &mut fv);
        a.t1.vector_at_q(&ops.v1, &state.u, cell, &mut ux, &mut uy);
        for qp in 0..nq {
            let w = a.t2.wdetj[qp];
            let h = hv[qp];
            let u2 = ux[qp] * ux[qp] + uy[qp] * uy[qp];
            mass += w * h;
            vorticity += w * (h * qv[qp] - fv[qp]);
            buoyancy += w * hbv[qp];
            energy_m += w * (half * h * u2 + half * h * h * bv[qp]);
            energy_f += w * (half * h * u2 + half * h * hbv[qp]);
            entropy += w * half * h * bv[qp] * bv[qp];
            min_h = min_h.min(h);
            max_speed = max_speed.max(u2.sqrt());
        }
    }

    let entropy_alt = half * pair(&ops.m2.mul_vec_alloc(&state.hb.coeffs), &bprime.coeffs)?;

    Ok(Functionals {
        mass,
        vorticity,
        buoyancy,
        energy_m,
        energy_f,
        entropy,
        entropy_alt,
        min_h,
        max_speed,
    })
}

/// The conserved energy of the running formulation: the flux-form energy for
/// the coupled system, the material/flux average for the mixed system.
pub fn conserved_energy<T: Real>(form: Formulation, f: &Functionals<T>) -> T {
    match form {
        Formulation::Coupled => f.energy_f,
        Formulation::Mixed => T::of(0.5) * (f.energy_m + f.energy_f),
    }
}

/// Energy and entropy production from an existing right-hand side
/// evaluation: the discrete pairings pair(grad H, RHS) and pair(grad S, RHS).
pub fn production_residuals_from<T: Real>(
    ops: &TswOps<T>,
    state: &TswState<T>,
    eval: &RhsEval<T>,
) -> Result<(T, T)> {
    let half = T::of(0.5);
    match state.form {
        Formulation::Coupled => {
            let energy = pair(&eval.du_dual, &eval.flux.coeffs)?
                + pair(&eval.dh_dual, &eval.phi_f.coeffs)?
                + pair(&eval.dhb_dual, &eval.t_f.coeffs)?;
            // grad S = (0, -1/2 b'^2, b'); the h-pairing goes through the
            // primal tendency, the hb-pairing stays dual.
            let bp2 = ops.actions.apply_weighted_mass_v2(&eval.bprime, &eval.bprime)?;
            let entropy = -half * pair(&bp2.coeffs, &eval.tendency.dh)?
                + pair(&eval.dhb_dual, &eval.bprime.coeffs)?;
            Ok((energy, entropy))
        }
        Formulation::Mixed => {
            let b = state.b.as_ref().expect("mixed state carries b");
            let phi_m = eval.phi_m.as_ref().expect("mixed eval carries phi_m");
            let t_m = eval.t_m.as_ref().expect("mixed eval carries t_m");
            let db_dual = eval.db_dual.as_ref().expect("mixed eval carries db");
            let db = eval.tendency.db.as_ref().expect("mixed tendency carries db");

            let mut phi_sum = phi_m.coeffs.clone();
            for (p, &v) in phi_sum.iter_mut().zip(&eval.phi_f.coeffs) {
                *p += v;
            }
            let energy = pair(&eval.du_dual, &eval.flux.coeffs)?
                + half * pair(&eval.dh_dual, &phi_sum)?
                + half * pair(db_dual, &t_m.coeffs)?
                + half * pair(&eval.dhb_dual, &eval.t_f.coeffs)?;

            // Average of the material and flux entropy derivatives.
            // Material part: 1/2 <b^2, dh> + <h b, db>.
            let bb = ops.actions.apply_weighted_mass_v2(b, b)?;
            let term1 = half * pair(&bb.coeffs, &eval.tendency.dh)?;
            let hb_w = ops.actions.apply_weighted_mass_v2(&state.h, b)?;
            let term2 = pair(&hb_w.coeffs, db)?;
            // Flux part: -1/2 (M2*(B) B)^T [M2*(h)^{-1} M2]^2 dh + <b', dhb>.
            let z1 = ops.solve_v2_weighted(&state.h, &ops.m2.mul_vec_alloc(&eval.tendency.dh))?;
            let z2 = ops.solve_v2_weighted(&state.h, &ops.m2.mul_vec_alloc(&z1))?;
            let bb_f = ops.actions.apply_weighted_mass_v2(&state.hb, &state.hb)?;
            let term3 = -half * pair(&bb_f.coeffs, &z2)?;
            let term4 = pair(&eval.dhb_dual, &eval.bprime.coeffs)?;
            let entropy = half * (term1 + term2 + term3 + term4);
            Ok((energy, entropy))
        }
    }
}

/// Evaluate the right-hand side and return the production residuals.
pub fn production_residuals<T: Real>(ops: &TswOps<T>, state: &TswState<T>) -> Result<(T, T)> {
    let eval = ops.evaluate_rhs(state)?;
    production_residuals_from(ops, state, &eval)
}

/// Sum of dual coefficients = pairing against the constant-one field
/// (the V2 basis is a nodal partition of unity).
pub fn global_integral_of_dual<T: Real>(dual: &[T]) -> T {
    dual.iter().copied().sum()
}
