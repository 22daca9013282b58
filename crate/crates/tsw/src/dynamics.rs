//! The dynamical core: diagnostic solves and the two semi-discrete
//! right-hand sides of the thermal shallow water system.
//!
//! Prognostic variables are the velocity u in V1 and the depth h, the
//! depth-weighted buoyancy (here `hb`) and, in the mixed formulation, the
//! buoyancy b, all in V2. The Coriolis parameter is a fixed V0 field.
//!
//! The mixed form advances b by material transport and hb by flux
//! transport simultaneously; the coupled form advances hb alone through a
//! symmetrized combination of flux, divergence and gradient terms that
//! cancels in both the energy and entropy pairings without any chain rule.

use std::sync::Arc;

use crate::assembly::{ActionCtx, GramPattern, TensorMassInverse};
use crate::error::{Error, Result};
use crate::fespace::{build_space, Field, FunctionSpace, SpaceFamily};
use crate::linalg::{solve_spd, solve_spd_with, CsrMatrix, SolverConfig};
use crate::mesh::Mesh;
use crate::quadrature::{default_quad_points, gll_rule, QuadRule2d};
use crate::scalar::Real;
use crate::timeint::StateVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Formulation {
    Mixed,
    Coupled,
}

impl std::str::FromStr for Formulation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mixed" => Ok(Formulation::Mixed),
            "coupled" => Ok(Formulation::Coupled),
            other => Err(Error::invalid(format!(
                "unknown formulation `{other}` (expected `mixed` or `coupled`)"
            ))),
        }
    }
}

/// Prognostic state. In the coupled formulation `b` is absent and the
/// buoyancy per unit depth is rediagnosed from `hb` on every evaluation.
#[derive(Debug, Clone)]
pub struct TswState<T> {
    pub form: Formulation,
    /// Velocity, V1.
    pub u: Field<T>,
    /// Fluid depth, V2.
    pub h: Field<T>,
    /// Buoyancy, V2; mixed formulation only.
    pub b: Option<Field<T>>,
    /// Depth-weighted buoyancy (h times b), V2.
    pub hb: Field<T>,
    /// Coriolis parameter, V0 (fixed in time).
    pub coriolis: Field<T>,
}

impl<T: Real> StateVector<T> for TswState<T> {
    fn scale(&mut self, a: T) {
        self.u.scale(a);
        self.h.scale(a);
        self.hb.scale(a);
        if let Some(b) = &mut self.b {
            b.scale(a);
        }
        self.coriolis.scale(a);
    }

    fn axpy(&mut self, a: T, other: &Self) {
        self.u.axpy(a, &other.u);
        self.h.axpy(a, &other.h);
        self.hb.axpy(a, &other.hb);
        match (&mut self.b, &other.b) {
            (Some(x), Some(y)) => x.axpy(a, y),
            (None, None) => {}
            _ => panic!("mixed/coupled state mismatch in axpy"),
        }
        self.coriolis.axpy(a, &other.coriolis);
    }
}

/// Primal (mass-solved) tendencies.
#[derive(Debug, Clone)]
pub struct Tendency<T> {
    pub du: Vec<T>,
    pub dh: Vec<T>,
    pub db: Option<Vec<T>>,
    pub dhb: Vec<T>,
}

/// One full right-hand side evaluation: dual vectors, primal tendencies and
/// the diagnostic fields they were built from.
#[derive(Debug, Clone)]
pub struct RhsEval<T> {
    pub tendency: Tendency<T>,
    /// Assembled dual right-hand sides (before the final mass solves).
    pub du_dual: Vec<T>,
    pub dh_dual: Vec<T>,
    pub db_dual: Option<Vec<T>>,
    pub dhb_dual: Vec<T>,
    /// Diagnosed potential vorticity (V0).
    pub q: Field<T>,
    /// Mass flux F (V1).
    pub flux: Field<T>,
    pub phi_m: Option<Field<T>>,
    pub phi_f: Field<T>,
    pub t_m: Option<Field<T>>,
    pub t_f: Field<T>,
    /// Buoyancy per unit depth b' (V2).
    pub bprime: Field<T>,
    /// Buoyancy gradient per unit depth G (V1), mixed form only.
    pub g: Option<Field<T>>,
}

impl<T: Real> RhsEval<T> {
    /// Tendency as a state-shaped increment (Coriolis part zero).
    pub fn as_state(&self, template: &TswState<T>) -> TswState<T> {
        TswState {
            form: template.form,
            u: Field::from_coeffs(&template.u.space, self.tendency.du.clone()),
            h: Field::from_coeffs(&template.h.space, self.tendency.dh.clone()),
            b: self
                .tendency
                .db
                .as_ref()
                .map(|db| Field::from_coeffs(&template.h.space, db.clone())),
            hb: Field::from_coeffs(&template.h.space, self.tendency.dhb.clone()),
            coriolis: Field::zeros(&template.coriolis.space),
        }
    }
}

/// Discretisation context: spaces, constant operators and solver settings.
pub struct TswOps<T> {
    pub mesh: Arc<Mesh<T>>,
    pub v0: Arc<FunctionSpace<T>>,
    pub v1: Arc<FunctionSpace<T>>,
    pub v2: Arc<FunctionSpace<T>>,
    pub quad: QuadRule2d<T>,
    pub actions: ActionCtx<T>,
    pub m0: CsrMatrix<T>,
    pub m1: CsrMatrix<T>,
    pub m2: CsrMatrix<T>,
    pub d2: CsrMatrix<T>,
    pub d2t: CsrMatrix<T>,
    pub r1: CsrMatrix<T>,
    pub r1t: CsrMatrix<T>,
    pub strong_perp: CsrMatrix<T>,
    pub m0_pattern: GramPattern<T>,
    pub m1_pattern: GramPattern<T>,
    pub m2_pattern: GramPattern<T>,
    pub solver: SolverConfig<T>,
    /// Exact tensor-product mass inverses, used as CG preconditioners for
    /// the V1 and V2 mass solves on this uniform mesh.
    v1_inv: TensorMassInverse<T>,
    v2_inv: TensorMassInverse<T>,
}

impl<T: Real> TswOps<T> {
    pub fn new(
        mesh: Arc<Mesh<T>>,
        order: usize,
        quad_points: Option<usize>,
        solver: SolverConfig<T>,
    ) -> Result<Self> {
        let v0 = build_space(mesh.clone(), SpaceFamily::V0, order)?;
        let v1 = build_space(mesh.clone(), SpaceFamily::V1, order)?;
        let v2 = build_space(mesh.clone(), SpaceFamily::V2, order)?;
        let npts = quad_points.unwrap_or_else(|| default_quad_points(order));
        let rule1d = gll_rule(npts)?;
        let quad = QuadRule2d::tensor(&rule1d);
        let v1_inv = TensorMassInverse::build(&v1, &rule1d)?;
        let v2_inv = TensorMassInverse::build(&v2, &rule1d)?;
        let actions = ActionCtx::new(&v0, &v1, &v2, &quad);
        let m0_pattern = GramPattern::build(&v0, &actions.t0);
        let m1_pattern = GramPattern::build(&v1, &actions.t1);
        let m2_pattern = GramPattern::build(&v2, &actions.t2);
        let m0 = m0_pattern.fill_unit(&actions.t0);
        let m1 = m1_pattern.fill_unit(&actions.t1);
        let m2 = m2_pattern.fill_unit(&actions.t2);
        let d2 = crate::assembly::assemble_div(&v1, &v2, &quad)?;
        let d2t = d2.transpose();
        let r1 = crate::assembly::assemble_perp_curl(&v0, &v1, &quad)?;
        let r1t = r1.transpose();
        let strong_perp = crate::assembly::strong_perp(&v0, &v1)?;
        Ok(TswOps {
            mesh,
            v0,
            v1,
            v2,
            quad,
            actions,
            m0,
            m1,
            m2,
            d2,
            d2t,
            r1,
            r1t,
            strong_perp,
            m0_pattern,
            m1_pattern,
            m2_pattern,
            solver,
            v1_inv,
            v2_inv,
        })
    }

    pub fn solve_v1(&self, rhs: &[T]) -> Result<Vec<T>> {
        solve_spd_with(
            &self.m1,
            rhs,
            self.solver.rtol,
            self.solver.max_iter,
            Some(&self.v1_inv),
        )
    }

    pub fn solve_v2(&self, rhs: &[T]) -> Result<Vec<T>> {
        solve_spd_with(
            &self.m2,
            rhs,
            self.solver.rtol,
            self.solver.max_iter,
            Some(&self.v2_inv),
        )
    }

    pub fn solve_v2_weighted(&self, w: &Field<T>, rhs: &[T]) -> Result<Vec<T>> {
        let m = self
            .m2_pattern
            .fill_weighted(&self.actions.t2, &self.actions.t2, w);
        solve_spd(&m, rhs, &self.solver)
    }

    /// Diagnose the potential vorticity: M0*(h) q = -R1^T u + M0 f.
    pub fn diagnose_q(&self, state: &TswState<T>) -> Result<Field<T>> {
        let mut rhs = self.r1t.mul_vec_alloc(&state.u.coeffs);
        let mf = self.m0.mul_vec_alloc(&state.coriolis.coeffs);
        for (r, &m) in rhs.iter_mut().zip(&mf) {
            *r = m - *r;
        }
        let m0h = self
            .m0_pattern
            .fill_weighted(&self.actions.t0, &self.actions.t2, &state.h);
        let q = solve_spd(&m0h, &rhs, &self.solver)?;
        Ok(Field::from_coeffs(&self.v0, q))
    }

    /// Diagnose the mass flux: M1 F = M1*(u, h).
    pub fn diagnose_flux(&self, state: &TswState<T>) -> Result<Field<T>> {
        let dual = self.actions.apply_weighted_mass_v1(&state.h, &state.u)?;
        let f = self.solve_v1(&dual.coeffs)?;
        Ok(Field::from_coeffs(&self.v1, f))
    }

    /// Material-form functional derivatives: Phi^m and T^m.
    pub fn derivatives_material(&self, state: &TswState<T>) -> Result<(Field<T>, Field<T>)> {
        let b = state
            .b
            .as_ref()
            .ok_or_else(|| Error::invalid("material derivatives need the prognostic buoyancy"))?;
        let half = T::of(0.5);
        let mut ke = self.actions.apply_k2(&state.u, &state.u)?;
        ke.scale(half);
        let hb_dual = self.actions.apply_weighted_mass_v2(&state.h, b)?;
        let mut phi_rhs = ke.coeffs;
        for (p, &v) in phi_rhs.iter_mut().zip(&hb_dual.coeffs) {
            *p += v;
        }
        let phi = self.solve_v2(&phi_rhs)?;
        let mut hh = self.actions.apply_weighted_mass_v2(&state.h, &state.h)?;
        hh.scale(half);
        let t = self.solve_v2(&hh.coeffs)?;
        Ok((
            Field::from_coeffs(&self.v2, phi),
            Field::from_coeffs(&self.v2, t),
        ))
    }

    /// Flux-form functional derivatives: Phi^f and T^f.
    pub fn derivatives_flux(&self, state: &TswState<T>) -> Result<(Field<T>, Field<T>)> {
        let half = T::of(0.5);
        let mut ke = self.actions.apply_k2(&state.u, &state.u)?;
        ke.scale(half);
        let mut phi = self.solve_v2(&ke.coeffs)?;
        for (p, &bb) in phi.iter_mut().zip(&state.hb.coeffs) {
            *p += half * bb;
        }
        let t: Vec<T> = state.h.coeffs.iter().map(|&v| half * v).collect();
        Ok((
            Field::from_coeffs(&self.v2, phi),
            Field::from_coeffs(&self.v2, t),
        ))
    }

    /// Diagnose b' = hb per unit depth: M2*(h, b') = M2 hb.
    pub fn diagnose_bprime(&self, state: &TswState<T>) -> Result<Field<T>> {
        let rhs = self.m2.mul_vec_alloc(&state.hb.coeffs);
        let bp = self.solve_v2_weighted(&state.h, &rhs)?;
        Ok(Field::from_coeffs(&self.v2, bp))
    }

    /// Diagnose the buoyancy gradient per unit depth:
    /// M1*(G, h) = -D2^T b'.
    pub fn diagnose_g(&self, state: &TswState<T>, bprime: &Field<T>) -> Result<Field<T>> {
        let mut rhs = self.d2t.mul_vec_alloc(&bprime.coeffs);
        for r in rhs.iter_mut() {
            *r = -*r;
        }
        let m1h = self
            .m1_pattern
            .fill_weighted(&self.actions.t1, &self.actions.t2, &state.h);
        let g = solve_spd_with(
            &m1h,
            &rhs,
            self.solver.rtol,
            self.solver.max_iter,
            Some(&self.v1_inv),
        )?;
        Ok(Field::from_coeffs(&self.v1, g))
    }

    /// Minimum and mean of h over all quadrature points.
    pub fn h_min_mean(&self, state: &TswState<T>) -> (T, T) {
        let nq = self.quad.len();
        let mut buf = vec![T::zero(); nq];
        let mut min = T::infinity();
        let mut sum = T::zero();
        let mut wsum = T::zero();
        for cell in 0..self.mesh.n_cells() {
            self.actions
                .t2
                .field_at_q(&self.v2, &state.h, cell, &mut buf);
            for (q, &v) in buf.iter().enumerate() {
                min = min.min(v);
                sum += v * self.actions.t2.wdetj[q];
                wsum += self.actions.t2.wdetj[q];
            }
        }
        (min, sum / wsum)
    }

    /// Largest flow speed over all quadrature points.
    pub fn max_speed(&self, state: &TswState<T>) -> T {
        let nq = self.quad.len();
        let mut ux = vec![T::zero(); nq];
        let mut uy = vec![T::zero(); nq];
        let mut m = T::zero();
        for cell in 0..self.mesh.n_cells() {
            self.actions
                .t1
                .vector_at_q(&self.v1, &state.u, cell, &mut ux, &mut uy);
            for q in 0..nq {
                m = m.max((ux[q] * ux[q] + uy[q] * uy[q]).sqrt());
            }
        }
        m
    }

    /// Guard against indefinite weighted mass matrices.
    pub fn check_positivity(&self, state: &TswState<T>, step: usize) -> Result<(T, T)> {
        let (min, mean) = self.h_min_mean(state);
        if min < T::of(1e-10) * mean {
            return Err(Error::PositivityLost {
                step,
                min_h: min.to_f64().unwrap_or(f64::NAN),
                mean_h: mean.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok((min, mean))
    }

    /// Mixed material/flux right-hand side.
    pub fn rhs_mixed(&self, state: &TswState<T>) -> Result<RhsEval<T>> {
        if state.form != Formulation::Mixed {
            return Err(Error::invalid("rhs_mixed requires a mixed-form state"));
        }
        let b = state
            .b
            .as_ref()
            .ok_or_else(|| Error::invalid("mixed state must carry b"))?;
        let half = T::of(0.5);

        let q = self.diagnose_q(state)?;
        let flux = self.diagnose_flux(state)?;
        let (phi_m, t_m) = self.derivatives_material(state)?;
        let (phi_f, t_f) = self.derivatives_flux(state)?;
        let bprime = self.diagnose_bprime(state)?;
        let g = self.diagnose_g(state, &bprime)?;

        // Momentum equation.
        let c1 = self.actions.apply_c1(&q, &flux)?;
        let mut phi_sum = phi_m.coeffs.clone();
        for (p, &v) in phi_sum.iter_mut().zip(&phi_f.coeffs) {
            *p += v;
        }
        let grad_phi = self.d2t.mul_vec_alloc(&phi_sum);
        let k2t = self.actions.apply_k2_transpose(&g, &t_m)?;
        let w_tf = Field::from_coeffs(&self.v1, self.solve_v1(&self.d2t.mul_vec_alloc(&t_f.coeffs))?);
        let mstar = self.actions.apply_weighted_mass_v1(b, &w_tf)?;
        let mut du_dual = vec![T::zero(); self.v1.ndof];
        for i in 0..self.v1.ndof {
            du_dual[i] =
                -c1.coeffs[i] + half * (grad_phi[i] + k2t.coeffs[i] + mstar.coeffs[i]);
        }

        // Depth equation.
        let mut dh_dual = self.d2.mul_vec_alloc(&flux.coeffs);
        for v in dh_dual.iter_mut() {
            *v = -*v;
        }

        // Material buoyancy equation.
        let k2_gf = self.actions.apply_k2(&g, &flux)?;
        let db_dual: Vec<T> = k2_gf.coeffs.iter().map(|&v| -v).collect();

        // Flux-form depth-weighted buoyancy equation.
        let bf_dual = self.actions.apply_weighted_mass_v1(b, &flux)?;
        let bf = self.solve_v1(&bf_dual.coeffs)?;
        let mut dhb_dual = self.d2.mul_vec_alloc(&bf);
        for v in dhb_dual.iter_mut() {
            *v = -*v;
        }

        let tendency = Tendency {
            du: self.solve_v1(&du_dual)?,
            dh: self.solve_v2(&dh_dual)?,
            db: Some(self.solve_v2(&db_dual)?),
            dhb: self.solve_v2(&dhb_dual)?,
        };
        Ok(RhsEval {
            tendency,
            du_dual,
            dh_dual,
            db_dual: Some(db_dual),
            dhb_dual,
            q,
            flux,
            phi_m: Some(phi_m),
            phi_f,
            t_m: Some(t_m),
            t_f,
            bprime,
            g: Some(g),
        })
    }

    /// Coupled entropy-conserving right-hand side.
    pub fn rhs_coupled(&self, state: &TswState<T>) -> Result<RhsEval<T>> {
        if state.form != Formulation::Coupled {
            return Err(Error::invalid("rhs_coupled requires a coupled-form state"));
        }
        let half = T::of(0.5);
        let quarter = T::of(0.25);

        let q = self.diagnose_q(state)?;
        let flux = self.diagnose_flux(state)?;
        let (phi_f, t_f) = self.derivatives_flux(state)?;
        let bprime = self.diagnose_bprime(state)?;

        // Momentum equation.
        let c1 = self.actions.apply_c1(&q, &flux)?;
        let grad_phi = self.d2t.mul_vec_alloc(&phi_f.coeffs);
        let w_h = Field::from_coeffs(
            &self.v1,
            self.solve_v1(&self.d2t.mul_vec_alloc(&state.h.coeffs))?,
        );
        let term_a = self.actions.apply_weighted_mass_v1(&bprime, &w_h)?;
        let bh_dual = self.actions.apply_weighted_mass_v2(&bprime, &state.h)?;
        let bh_proj = self.solve_v2(&bh_dual.coeffs)?;
        let term_b = self.d2t.mul_vec_alloc(&bh_proj);
        let w_bp = Field::from_coeffs(
            &self.v1,
            self.solve_v1(&self.d2t.mul_vec_alloc(&bprime.coeffs))?,
        );
        let term_c = self.actions.apply_weighted_mass_v1(&state.h, &w_bp)?;
        let mut du_dual = vec![T::zero(); self.v1.ndof];
        for i in 0..self.v1.ndof {
            du_dual[i] = -c1.coeffs[i]
                + grad_phi[i]
                + quarter * (term_a.coeffs[i] + term_b[i] - term_c.coeffs[i]);
        }

        // Depth equation; keep div F = M2^{-1} D2 F for reuse below.
        let div_f_dual = self.d2.mul_vec_alloc(&flux.coeffs);
        let div_f = Field::from_coeffs(&self.v2, self.solve_v2(&div_f_dual)?);
        let dh_dual: Vec<T> = div_f_dual.iter().map(|&v| -v).collect();

        // Depth-weighted buoyancy equation.
        let bf_dual = self.actions.apply_weighted_mass_v1(&bprime, &flux)?;
        let bf = self.solve_v1(&bf_dual.coeffs)?;
        let t1 = self.d2.mul_vec_alloc(&bf);
        let t2 = self.actions.apply_weighted_mass_v2(&bprime, &div_f)?;
        let t3 = self.actions.apply_k2(&w_bp, &flux)?;
        let mut dhb_dual = vec![T::zero(); self.v2.ndof];
        for i in 0..self.v2.ndof {
            dhb_dual[i] = half * (-t1[i] - t2.coeffs[i] + t3.coeffs[i]);
        }

        let tendency = Tendency {
            du: self.solve_v1(&du_dual)?,
            dh: div_f.coeffs.iter().map(|&v| -v).collect(),
            db: None,
            dhb: self.solve_v2(&dhb_dual)?,
        };
        Ok(RhsEval {
            tendency,
            du_dual,
            dh_dual,
            db_dual: None,
            dhb_dual,
            q,
            flux,
            phi_m: None,
            phi_f,
            t_m: None,
            t_f,
            bprime,
            g: None,
        })
    }

    /// Dispatch on the state's formulation.
    pub fn evaluate_rhs(&self, state: &TswState<T>) -> Result<RhsEval<T>> {
        match state.form {
            Formulation::Mixed => self.rhs_mixed(state),
            Formulation::Coupled => self.rhs_coupled(state),
        }
    }
}
