//! Initial conditions: thermogeostrophically balanced zonal jets on the
//! doubly periodic f-plane, a perturbed shear-instability variant, direct
//! initialization from analytic functions, and seeded smooth random states
//! for the conservation test ensembles.
//!
//! The balanced states satisfy f u = -d/dy(h b) + (h/2) db/dy with the
//! buoyancy closure b(h) = g (1 + 0.05 (h0/h)^2), integrated numerically in
//! y and shifted to the requested mean depth.

use crate::dynamics::{Formulation, TswOps, TswState};
use crate::error::{Error, Result};
use crate::fespace::{project_scalar, project_vector, Field};
use crate::prng::SplitMix64;
use crate::scalar::Real;

/// Zonal jet profile u(y).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JetProfile {
    /// u0 cos(2 pi y / Ly)
    Cosine,
    /// A pair of opposite Bickley jets of the given half-width fraction of
    /// Ly, centred at Ly/4 and 3Ly/4 (zero mean by antisymmetry).
    BickleyPair { half_width_frac: f64 },
}

#[derive(Debug, Clone)]
pub struct CaseConfig<T> {
    pub gravity: T,
    pub coriolis: T,
    pub h0: T,
    pub u0: T,
    pub jet: JetProfile,
    /// Relative amplitude of the Gaussian depth bump (shear case).
    pub depth_bump_rel: T,
    /// Relative amplitude of the Gaussian buoyancy perturbation (shear case).
    pub buoyancy_pert_rel: T,
    /// Grid points for the 1D balance integration.
    pub balance_points: usize,
    pub seed: u64,
}

impl<T: Real> Default for CaseConfig<T> {
    fn default() -> Self {
        let gravity = T::of(9.80616);
        CaseConfig {
            gravity,
            // 2 * earth angular frequency
            coriolis: T::of(2.0 * 7.292e-5),
            h0: T::of(2.94e4) / gravity,
            // one circumference in 12 days
            u0: T::of(2.0 * std::f64::consts::PI * 6_371_220.0 / (12.0 * 86_400.0)),
            jet: JetProfile::Cosine,
            depth_bump_rel: T::of(0.01),
            buoyancy_pert_rel: T::of(0.1),
            balance_points: 10_000,
            seed: 1,
        }
    }
}

impl<T: Real> CaseConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.gravity <= T::zero() {
            return Err(Error::invalid("gravity must be positive"));
        }
        if self.h0 <= T::zero() {
            return Err(Error::invalid("h0 must be positive"));
        }
        Ok(())
    }

    /// The buoyancy closure b(h).
    pub fn buoyancy_of_depth(&self, h: T) -> T {
        let r = self.h0 / h;
        self.gravity * (T::one() + T::of(0.05) * r * r)
    }

    /// b(h) + h/2 db/dh; for this closure the 0.05-terms cancel to g, but
    /// the integrator uses the general expression.
    fn balance_bracket(&self, h: T) -> T {
        let r = self.h0 / h;
        let b = self.gravity * (T::one() + T::of(0.05) * r * r);
        let dbdh = -T::of(0.1) * self.gravity * self.h0 * self.h0 / (h * h * h);
        b + T::of(0.5) * h * dbdh
    }

    pub fn jet_velocity(&self, ly: T, y: T) -> T {
        match self.jet {
            JetProfile::Cosine => {
                self.u0 * (T::of(2.0 * std::f64::consts::PI) * y / ly).cos()
            }
            JetProfile::BickleyPair { half_width_frac } => {
                let sigma = T::of(half_width_frac) * ly;
                let sech2 = |z: T| {
                    let c = z.cosh();
                    T::one() / (c * c)
                };
                self.u0
                    * (sech2((y - T::of(0.25) * ly) / sigma)
                        - sech2((y - T::of(0.75) * ly) / sigma))
            }
        }
    }
}

/// Sampled balanced depth profile h(y) with its derivative, evaluated by
/// cubic Hermite interpolation.
#[derive(Debug, Clone)]
pub struct BalanceProfile<T> {
    ly: T,
    dy: T,
    h: Vec<T>,
    dh: Vec<T>,
    /// Periodicity defect of the raw integration, relative to h0.
    pub residual: T,
}

impl<T: Real> BalanceProfile<T> {
    pub fn eval(&self, y: T) -> T {
        let mut yy = y % self.ly;
        if yy < T::zero() {
            yy += self.ly;
        }
        let n = self.h.len() - 1;
        let fi = (yy / self.dy).floor();
        let i = fi.to_usize().unwrap_or(0).min(n - 1);
        let t = (yy - T::of_usize(i) * self.dy) / self.dy;
        // Hermite basis on [0, 1]
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = T::of(2.0) * t3 - T::of(3.0) * t2 + T::one();
        let h10 = t3 - T::of(2.0) * t2 + t;
        let h01 = -T::of(2.0) * t3 + T::of(3.0) * t2;
        let h11 = t3 - t2;
        h00 * self.h[i]
            + h10 * self.dy * self.dh[i]
            + h01 * self.h[i + 1]
            + h11 * self.dy * self.dh[i + 1]
    }
}

/// Integrate the steady zonal-momentum balance
/// dh/dy = -f u(y) / (b(h) + h/2 db/dh) with RK4, enforce mean depth h0.
pub fn balance_profile<T: Real>(cfg: &CaseConfig<T>, ly: T) -> Result<BalanceProfile<T>> {
    cfg.validate()?;
    let n = cfg.balance_points.max(16);
    let dy = ly / T::of_usize(n);
    let rhs = |y: T, h: T| -cfg.coriolis * cfg.jet_velocity(ly, y) / cfg.balance_bracket(h);
    let mut h = vec![T::zero(); n + 1];
    h[0] = cfg.h0;
    for i in 0..n {
        let y = T::of_usize(i) * dy;
        let hi = h[i];
        let k1 = rhs(y, hi);
        let k2 = rhs(y + T::of(0.5) * dy, hi + T::of(0.5) * dy * k1);
        let k3 = rhs(y + T::of(0.5) * dy, hi + T::of(0.5) * dy * k2);
        let k4 = rhs(y + dy, hi + dy * k3);
        h[i + 1] = hi
            + dy / T::of(6.0) * (k1 + T::of(2.0) * k2 + T::of(2.0) * k3 + k4);
        if !h[i + 1].is_finite() || h[i + 1] <= T::zero() {
            return Err(Error::Balance(format!(
                "depth became non-positive at y = {:e}",
                (T::of_usize(i + 1) * dy).to_f64().unwrap_or(f64::NAN)
            )));
        }
    }
    let residual = ((h[n] - h[0]) / cfg.h0).abs();
    if residual > T::of(1e-6) {
        return Err(Error::Balance(format!(
            "profile is not periodic: relative residual {:e} (the jet must have zero mean)",
            residual.to_f64().unwrap_or(f64::NAN)
        )));
    }
    // Close the loop exactly, then shift to mean depth h0.
    h[n] = h[0];
    let mut mean = T::zero();
    for i in 0..n {
        mean += T::of(0.5) * (h[i] + h[i + 1]);
    }
    mean = mean / T::of_usize(n);
    let shift = cfg.h0 - mean;
    for v in h.iter_mut() {
        *v += shift;
    }
    let dh = (0..=n)
        .map(|i| rhs(T::of_usize(i) * dy, h[i]))
        .collect();
    Ok(BalanceProfile {
        ly,
        dy,
        h,
        dh,
        residual,
    })
}

fn assemble_state<T: Real>(
    ops: &TswOps<T>,
    form: Formulation,
    coriolis: T,
    u_fn: impl Fn(T, T) -> (T, T),
    h_fn: impl Fn(T, T) -> T,
    b_fn: impl Fn(T, T) -> T,
) -> Result<TswState<T>> {
    let u = project_vector(&ops.v1, &ops.quad, &ops.solver, &u_fn)?;
    let h = project_scalar(&ops.v2, &ops.quad, &ops.solver, &h_fn)?;
    let b = project_scalar(&ops.v2, &ops.quad, &ops.solver, &b_fn)?;
    let hb = project_scalar(&ops.v2, &ops.quad, &ops.solver, |x, y| {
        h_fn(x, y) * b_fn(x, y)
    })?;
    let state = TswState {
        form,
        u,
        h,
        b: (form == Formulation::Mixed).then_some(b),
        hb,
        coriolis: Field::constant(&ops.v0, coriolis),
    };
    ops.check_positivity(&state, 0)?;
    Ok(state)
}

/// Thermogeostrophically balanced zonal jet.
pub fn init_balanced_jet<T: Real>(
    ops: &TswOps<T>,
    cfg: &CaseConfig<T>,
    form: Formulation,
) -> Result<TswState<T>> {
    let ly = ops.mesh.ly;
    let profile = balance_profile(cfg, ly)?;
    assemble_state(
        ops,
        form,
        cfg.coriolis,
        |_, y| (cfg.jet_velocity(ly, y), T::zero()),
        |_, y| profile.eval(y),
        |_, y| cfg.buoyancy_of_depth(profile.eval(y)),
    )
}

/// Balanced Bickley-type jet pair with Gaussian depth and buoyancy
/// perturbations that trigger the shear instability.
pub fn init_shear_instability<T: Real>(
    ops: &TswOps<T>,
    cfg: &CaseConfig<T>,
    form: Formulation,
) -> Result<TswState<T>> {
    let (lx, ly) = (ops.mesh.lx, ops.mesh.ly);
    let mut jet_cfg = cfg.clone();
    if jet_cfg.jet == JetProfile::Cosine {
        jet_cfg.jet = JetProfile::BickleyPair {
            half_width_frac: 0.1,
        };
    }
    let profile = balance_profile(&jet_cfg, ly)?;
    // Gaussian centred on the lower jet.
    let (xc, yc) = (T::of(0.5) * lx, T::of(0.25) * ly);
    let (sx, sy) = (lx / T::of(20.0), ly / T::of(20.0));
    let gaussian = move |x: T, y: T| {
        let dx = (x - xc) / sx;
        let dy = (y - yc) / sy;
        (-dx * dx - dy * dy).exp()
    };
    let h_amp = jet_cfg.depth_bump_rel * jet_cfg.h0;
    let b_amp = jet_cfg.buoyancy_pert_rel;
    let h_fn = {
        let profile = profile.clone();
        move |x: T, y: T| profile.eval(y) + h_amp * gaussian(x, y)
    };
    let b_fn = {
        let jc = jet_cfg.clone();
        move |x: T, y: T| {
            jc.buoyancy_of_depth(profile.eval(y)) * (T::one() - b_amp * gaussian(x, y))
        }
    };
    assemble_state(
        ops,
        form,
        jet_cfg.coriolis,
        |_, y| (jet_cfg.jet_velocity(ly, y), T::zero()),
        h_fn,
        b_fn,
    )
}

/// Project analytic fields directly; hb is the projection of the pointwise
/// product h*b.
pub fn init_from_functions<T: Real>(
    ops: &TswOps<T>,
    form: Formulation,
    coriolis: T,
    u_fn: impl Fn(T, T) -> (T, T),
    h_fn: impl Fn(T, T) -> T,
    b_fn: impl Fn(T, T) -> T,
) -> Result<TswState<T>> {
    assemble_state(ops, form, coriolis, u_fn, h_fn, b_fn)
}

/// A smooth periodic random function with values in [-1, 1], built from a
/// handful of Fourier modes.
pub struct SmoothRandom<T> {
    modes: Vec<(i32, i32, T, T)>,
    lx: T,
    ly: T,
}

impl<T: Real> SmoothRandom<T> {
    pub fn new(rng: &mut SplitMix64, lx: T, ly: T) -> Self {
        let mut modes = Vec::new();
        let mut norm = 0.0f64;
        let mut raw = Vec::new();
        for m in -2i32..=2 {
            for n in -2i32..=2 {
                if m == 0 && n == 0 {
                    continue;
                }
                let a = rng.symmetric();
                let phase = rng.uniform() * 2.0 * std::f64::consts::PI;
                norm += a.abs();
                raw.push((m, n, a, phase));
            }
        }
        for (m, n, a, phase) in raw {
            modes.push((m, n, T::of(a / norm), T::of(phase)));
        }
        SmoothRandom { modes, lx, ly }
    }

    pub fn eval(&self, x: T, y: T) -> T {
        let two_pi = T::of(2.0 * std::f64::consts::PI);
        self.modes
            .iter()
            .map(|&(m, n, a, phase)| {
                let arg = two_pi * (T::of(m as f64) * x / self.lx + T::of(n as f64) * y / self.ly)
                    + phase;
                a * arg.cos()
            })
            .sum()
    }
}

/// Seeded random positive-depth state for conservation ensembles:
/// h = h0 (1 + 0.1 r1), hb = h g (1 + 0.05 r2), u = u0 r3.
pub fn random_state<T: Real>(
    ops: &TswOps<T>,
    cfg: &CaseConfig<T>,
    form: Formulation,
    seed: u64,
) -> Result<TswState<T>> {
    let (lx, ly) = (ops.mesh.lx, ops.mesh.ly);
    let mut rng = SplitMix64::new(cfg.seed.wrapping_add(seed.wrapping_mul(0x9e37_79b9)));
    let r1 = SmoothRandom::new(&mut rng, lx, ly);
    let r2 = SmoothRandom::new(&mut rng, lx, ly);
    let r3x = SmoothRandom::new(&mut rng, lx, ly);
    let r3y = SmoothRandom::new(&mut rng, lx, ly);
    let h0 = cfg.h0;
    let g = cfg.gravity;
    let u0 = cfg.u0;
    let h_fn = move |x, y| h0 * (T::one() + T::of(0.1) * r1.eval(x, y));
    let b_fn = move |x, y| g * (T::one() + T::of(0.05) * r2.eval(x, y));
    assemble_state(
        ops,
        form,
        cfg.coriolis,
        move |x, y| (u0 * r3x.eval(x, y), u0 * r3y.eval(x, y)),
        h_fn,
        b_fn,
    )
}
