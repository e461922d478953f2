//! Optimal velocity model for human drivers and the linearized mixed-traffic
//! state-space model used as a ground-truth oracle.

use alloc::format;
use core::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::fleet::{EquilibriumState, FleetConfig, OvmParams};

/// Spacing-dependent desired velocity, a raised-cosine ramp between
/// `s_st` and `s_go`.
pub fn ovm_desired_velocity(s: f64, p: &OvmParams) -> f64 {
    if s <= p.s_st {
        0.0
    } else if s >= p.s_go {
        p.v_max
    } else {
        p.v_max / 2.0 * (1.0 - libm::cos(PI * (s - p.s_st) / (p.s_go - p.s_st)))
    }
}

/// Derivative of [`ovm_desired_velocity`] on the open interval `(s_st, s_go)`.
pub fn ovm_desired_velocity_slope(s: f64, p: &OvmParams) -> f64 {
    if s <= p.s_st || s >= p.s_go {
        0.0
    } else {
        let width = p.s_go - p.s_st;
        p.v_max * PI / (2.0 * width) * libm::sin(PI * (s - p.s_st) / width)
    }
}

/// OVM acceleration of a follower with spacing `s`, velocity `v` and
/// predecessor velocity `v_pred`.
pub fn ovm_acceleration(s: f64, v: f64, v_pred: f64, p: &OvmParams) -> f64 {
    p.alpha * (ovm_desired_velocity(s, p) - v) + p.beta * (v_pred - v)
}

/// Spacing at which the desired velocity equals `v_star`.
pub fn equilibrium_spacing_inverse(v_star: f64, p: &OvmParams) -> Result<f64> {
    if !(0.0..=p.v_max).contains(&v_star) {
        return Err(Error::Domain(format!(
            "equilibrium velocity {v_star} outside [0, {}]",
            p.v_max
        )));
    }
    let c = (1.0 - 2.0 * v_star / p.v_max).clamp(-1.0, 1.0);
    Ok(libm::acos(c) * (p.s_go - p.s_st) / PI + p.s_st)
}

/// Discrete-time linearization of a mixed platoon around an equilibrium.
///
/// State ordering is `[ṽ_1, s̃_1, ṽ_2, s̃_2, …]`; the output stacks all
/// velocity errors followed by the CAV spacing errors.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiMixedModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub h: DVector<f64>,
    pub dt: f64,
}

impl LtiMixedModel {
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }
}

/// Builds the forward-Euler discretization of the linearized OVM platoon
/// described by the fleet's controller formulation.
///
/// The simulator integrates with forward Euler at the same `dt`, so data
/// generated by this model and by a noise-free simulator agree to first order.
pub fn build_lti_model(
    fleet: &FleetConfig,
    p: &OvmParams,
    eq: EquilibriumState,
    dt: f64,
) -> Result<LtiMixedModel> {
    fleet.validate()?;
    p.validate()?;
    if !(eq.v_star > 0.0 && eq.v_star < p.v_max) {
        return Err(Error::Domain(format!(
            "linearization needs 0 < v* < v_max, got v* = {}",
            eq.v_star
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::Config("dt must be positive".into()));
    }
    let form = fleet.formulation();
    let (n, m) = (form.n(), form.m());
    // The HDV equilibrium spacing is whatever makes v_des(s) = v*.
    let s_hdv = equilibrium_spacing_inverse(eq.v_star, p)?;
    let slope = ovm_desired_velocity_slope(s_hdv, p);

    let mut ac = DMatrix::zeros(2 * n, 2 * n);
    let mut bc = DMatrix::zeros(2 * n, m);
    let mut hc = DVector::zeros(2 * n);
    for i in 1..=n {
        let (vi, si) = (2 * (i - 1), 2 * (i - 1) + 1);
        // s̃_i' = ṽ_{i-1} - ṽ_i
        ac[(si, vi)] = -1.0;
        if i == 1 {
            hc[si] = 1.0;
        } else {
            ac[(si, vi - 2)] = 1.0;
        }
        match form.cav_local.iter().position(|&c| c == i) {
            Some(k) => bc[(vi, k)] = 1.0,
            None => {
                ac[(vi, si)] = p.alpha * slope;
                ac[(vi, vi)] = -(p.alpha + p.beta);
                if i == 1 {
                    hc[vi] = p.beta;
                } else {
                    ac[(vi, vi - 2)] = p.beta;
                }
            }
        }
    }

    let mut c = DMatrix::zeros(n + m, 2 * n);
    for i in 0..n {
        c[(i, 2 * i)] = 1.0;
    }
    for (k, &i) in form.cav_local.iter().enumerate() {
        c[(n + k, 2 * (i - 1) + 1)] = 1.0;
    }

    Ok(LtiMixedModel {
        a: DMatrix::identity(2 * n, 2 * n) + ac * dt,
        b: bc * dt,
        c,
        h: hc * dt,
        dt,
    })
}

/// One step of `x⁺ = A x + B u + H ε`, returning `(x⁺, C x)`.
pub fn step_lti(
    model: &LtiMixedModel,
    x: &DVector<f64>,
    u: &DVector<f64>,
    eps: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_len("LTI state", model.state_dim(), x.len())?;
    check_len("LTI input", model.input_dim(), u.len())?;
    let y = &model.c * x;
    let next = &model.a * x + &model.b * u + &model.h * eps;
    Ok((next, y))
}
