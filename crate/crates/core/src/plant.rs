//! Agent and leader dynamics.
//!
//! Each agent is in output-feedback normal form: a stable internal block
//! `z' = A0 z + f(x)` feeding an integrator chain
//! `x_1' = x_2, ..., x_nx' = u + g(z, x)` with output `y = x_1`. The three
//! built-in agents are a controlled damping oscillator, a controlled
//! FitzHugh-Nagumo system and a controlled Van der Pol oscillator.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::poly::PolyExpr;
use crate::synthesis::{check_hurwitz, LeaderModel};
use crate::util::dot;

/// One heterogeneous agent. The high-frequency gain is fixed to 1.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentModel {
    pub label: String,
    pub nz: usize,
    pub nx: usize,
    /// Hurwitz internal matrix (`nz x nz`; may be 0 x 0).
    pub a0: DMatrix<f64>,
    /// Internal drive `f(x)`, one polynomial per `z` coordinate; must not
    /// reference `z`.
    pub f: Vec<PolyExpr>,
    /// Chain-end nonlinearity `g(z, x)`.
    pub g: PolyExpr,
    pub b_inf: f64,
}

impl AgentModel {
    pub fn new(
        label: impl Into<String>,
        a0: DMatrix<f64>,
        nx: usize,
        f: Vec<PolyExpr>,
        g: PolyExpr,
    ) -> Result<Self> {
        let nz = a0.nrows();
        if a0.ncols() != nz {
            return Err(Error::Dimension(format!(
                "A0 must be square, got {}x{}",
                a0.nrows(),
                a0.ncols()
            )));
        }
        if nx == 0 {
            return Err(Error::InvalidParameter("nx must be >= 1".into()));
        }
        if f.len() != nz {
            return Err(Error::Dimension(format!(
                "f must have one component per z coordinate ({nz}), got {}",
                f.len()
            )));
        }
        let rep = check_hurwitz(&a0);
        if !rep.hurwitz {
            return Err(Error::InvalidParameter(format!(
                "A0 must be Hurwitz (margin {:.3e})",
                rep.margin
            )));
        }
        for (i, fi) in f.iter().enumerate() {
            fi.validate_dims(nz, nx)?;
            if !fi.is_x_only() {
                return Err(Error::InvalidParameter(format!(
                    "f[{i}] must depend on x only"
                )));
            }
        }
        g.validate_dims(nz, nx)?;
        Ok(Self {
            label: label.into(),
            nz,
            nx,
            a0,
            f: f.into_iter().map(|p| p.normalized(nz, nx)).collect(),
            g: g.normalized(nz, nx),
            b_inf: 1.0,
        })
    }

    /// Controlled damping oscillator: `x1' = x2`, `x2' = u - x1 - x2`.
    /// No internal block (`nz = 0`).
    pub fn damping_oscillator() -> Self {
        let g = PolyExpr::builder(0, 2)
            .term(-1.0, &[], &[(0, 1)])
            .term(-1.0, &[], &[(1, 1)])
            .build();
        Self::new("damping_oscillator", DMatrix::zeros(0, 0), 2, vec![], g)
            .expect("damping oscillator is valid")
    }

    /// Controlled FitzHugh-Nagumo dynamics:
    /// `z' = -c z + b x`, `x' = u + x (a - x)(x - 1) - z`. Requires `c > 0`
    /// so the internal block is stable.
    pub fn fitzhugh_nagumo(a: f64, b: f64, c: f64) -> Result<Self> {
        if !c.is_finite() || c <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "FitzHugh-Nagumo requires c > 0, got {c}"
            )));
        }
        let f = vec![PolyExpr::builder(1, 1).term(b, &[], &[(0, 1)]).build()];
        // x (a - x)(x - 1) - z = -x^3 + (a + 1) x^2 - a x - z.
        let g = PolyExpr::builder(1, 1)
            .term(-1.0, &[], &[(0, 3)])
            .term(a + 1.0, &[], &[(0, 2)])
            .term(-a, &[], &[(0, 1)])
            .term(-1.0, &[(0, 1)], &[])
            .build();
        Self::new(
            "fitzhugh_nagumo",
            DMatrix::from_element(1, 1, -c),
            1,
            f,
            g,
        )
    }

    /// Controlled Van der Pol oscillator:
    /// `x1' = x2`, `x2' = u - x1 + a (1 - x1^2) x2`.
    pub fn van_der_pol(a: f64) -> Self {
        let g = PolyExpr::builder(0, 2)
            .term(-1.0, &[], &[(0, 1)])
            .term(a, &[], &[(1, 1)])
            .term(-a, &[], &[(0, 2), (1, 1)])
            .build();
        Self::new("van_der_pol", DMatrix::zeros(0, 0), 2, vec![], g)
            .expect("van der pol is valid")
    }
}

/// Parameters of the three built-in example agents.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExampleParams {
    pub a2: f64,
    pub b2: f64,
    pub c2: f64,
    pub a3: f64,
}

impl Default for ExampleParams {
    fn default() -> Self {
        Self {
            a2: 1.0,
            b2: 1.0,
            c2: 1.0,
            a3: 1.0,
        }
    }
}

/// The three example agents in order: damping oscillator, FitzHugh-Nagumo,
/// Van der Pol.
pub fn builtin_agents(params: &ExampleParams) -> Result<Vec<AgentModel>> {
    Ok(vec![
        AgentModel::damping_oscillator(),
        AgentModel::fitzhugh_nagumo(params.a2, params.b2, params.c2)?,
        AgentModel::van_der_pol(params.a3),
    ])
}

/// Value type for one agent's plant state.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentState {
    pub z: Vec<f64>,
    pub x: Vec<f64>,
}

impl AgentState {
    pub fn zeros(m: &AgentModel) -> Self {
        Self {
            z: vec![0.0; m.nz],
            x: vec![0.0; m.nx],
        }
    }
}

/// Plant right-hand side: `z' = A0 z + f(x)`, `x_j' = x_{j+1}`,
/// `x_nx' = b_inf u + g(z, x)`.
pub fn agent_derivative(m: &AgentModel, s: &AgentState, u: f64) -> AgentState {
    debug_assert_eq!(s.z.len(), m.nz);
    debug_assert_eq!(s.x.len(), m.nx);
    let mut zdot = vec![0.0; m.nz];
    for (r, zd) in zdot.iter_mut().enumerate() {
        let mut acc = 0.0;
        for c in 0..m.nz {
            acc += m.a0[(r, c)] * s.z[c];
        }
        *zd = acc + m.f[r].eval(&s.z, &s.x);
    }
    let mut xdot = vec![0.0; m.nx];
    xdot[..m.nx - 1].copy_from_slice(&s.x[1..]);
    xdot[m.nx - 1] = m.b_inf * u + m.g.eval(&s.z, &s.x);
    AgentState { z: zdot, x: xdot }
}

/// How the leader input `v(t)` is generated.
#[derive(Clone, Debug, PartialEq)]
pub enum InputPolicyKind {
    /// `v = 0`.
    Zero,
    /// `v = F w` for a fixed row vector `F`.
    StateFeedback(Vec<f64>),
    /// `v = value`.
    Constant(f64),
    /// `v = amplitude * sin(omega t + phase)`.
    Sinusoid {
        amplitude: f64,
        omega: f64,
        phase: f64,
    },
    /// Piecewise-linear interpolation of `(times, values)`, clamped at the
    /// ends.
    Tabulated { times: Vec<f64>, values: Vec<f64> },
}

/// Leader input policy plus enforcement flags.
#[derive(Clone, Debug, PartialEq)]
pub struct LeaderInputPolicy {
    pub kind: InputPolicyKind,
    /// Assert `|v| <= l` along the trajectory.
    pub bound_check: bool,
    /// Marks `v` as unavailable to controllers; laws that read `v` refuse
    /// to run under a private policy.
    pub private: bool,
}

impl LeaderInputPolicy {
    pub fn zero() -> Self {
        Self {
            kind: InputPolicyKind::Zero,
            bound_check: true,
            private: false,
        }
    }

    pub fn state_feedback(gain: Vec<f64>) -> Self {
        Self {
            kind: InputPolicyKind::StateFeedback(gain),
            bound_check: true,
            private: false,
        }
    }

    /// Resolve `v` at `(w, t)`.
    pub fn value(&self, w: &[f64], t: f64) -> f64 {
        match &self.kind {
            InputPolicyKind::Zero => 0.0,
            InputPolicyKind::StateFeedback(gain) => dot(gain, w),
            InputPolicyKind::Constant(v) => *v,
            InputPolicyKind::Sinusoid {
                amplitude,
                omega,
                phase,
            } => amplitude * (omega * t + phase).sin(),
            InputPolicyKind::Tabulated { times, values } => {
                if times.is_empty() {
                    return 0.0;
                }
                if t <= times[0] {
                    return values[0];
                }
                if t >= *times.last().unwrap() {
                    return *values.last().unwrap();
                }
                let idx = times.partition_point(|&tk| tk <= t);
                let (t0, t1) = (times[idx - 1], times[idx]);
                let (v0, v1) = (values[idx - 1], values[idx]);
                v0 + (v1 - v0) * (t - t0) / (t1 - t0)
            }
        }
    }
}

/// Leader right-hand side: `w' = S w + d v`, `y_r = c' w`. Errors with
/// `BoundViolation` when `bound_check` is set and `|v| > l`.
pub fn leader_derivative(
    leader: &LeaderModel,
    w: &[f64],
    policy: &LeaderInputPolicy,
    t: f64,
) -> Result<(Vec<f64>, f64, f64)> {
    let n = leader.dim();
    debug_assert_eq!(w.len(), n);
    let v = policy.value(w, t);
    if policy.bound_check && v.abs() > leader.input_bound() {
        return Err(Error::BoundViolation {
            v,
            bound: leader.input_bound(),
            t,
        });
    }
    let mut wdot = vec![0.0; n];
    wdot[..n - 1].copy_from_slice(&w[1..]);
    wdot[n - 1] = dot(leader.s_bottom(), w) + leader.d_last() * v;
    Ok((wdot, v, w[0]))
}

/// Relative-degree compatibility: the agent's chain must not be longer
/// than the leader's dimension.
pub fn check_relative_degree(m: &AgentModel, leader: &LeaderModel) -> bool {
    m.nx <= leader.dim()
}

/// Empirical Lipschitz constant of `g` in `z` over sampled boxes: the
/// largest `|g(z + dz, x) - g(z, x)| / ||dz||` seen across `samples`
/// random draws. A global constant is not certifiable for general
/// polynomials, so this reports behavior on a compact set only.
pub fn empirical_z_lipschitz(
    m: &AgentModel,
    z_box: (f64, f64),
    x_box: (f64, f64),
    samples: usize,
    seed: u64,
) -> f64 {
    if m.nz == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let z: Vec<f64> = (0..m.nz).map(|_| rng.random_range(z_box.0..=z_box.1)).collect();
        let x: Vec<f64> = (0..m.nx).map(|_| rng.random_range(x_box.0..=x_box.1)).collect();
        let zp: Vec<f64> = (0..m.nz).map(|_| rng.random_range(z_box.0..=z_box.1)).collect();
        let dz: Vec<f64> = zp.iter().zip(&z).map(|(a, b)| a - b).collect();
        let norm = dot(&dz, &dz).sqrt();
        if norm < 1e-12 {
            continue;
        }
        let dg = (m.g.eval(&zp, &x) - m.g.eval(&z, &x)).abs();
        worst = worst.max(dg / norm);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn damping_oscillator_derivative() {
        let m = AgentModel::damping_oscillator();
        let s = AgentState {
            z: vec![],
            x: vec![1.0, 2.0],
        };
        let ds = agent_derivative(&m, &s, 0.0);
        assert_eq!(ds.x, vec![2.0, -3.0]);
        assert!(ds.z.is_empty());
    }

    #[test]
    fn zero_state_is_equilibrium() {
        for m in builtin_agents(&ExampleParams::default()).unwrap() {
            let ds = agent_derivative(&m, &AgentState::zeros(&m), 0.0);
            assert!(ds.z.iter().all(|&v| v == 0.0));
            assert!(ds.x.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn fitzhugh_nagumo_derivative() {
        let m = AgentModel::fitzhugh_nagumo(1.0, 1.0, 1.0).unwrap();
        let s = AgentState {
            z: vec![0.5],
            x: vec![2.0],
        };
        let ds = agent_derivative(&m, &s, 0.0);
        // z' = -0.5 + 2 = 1.5; x' = 2 (1 - 2)(2 - 1) - 0.5 = -2.5.
        assert_eq!(ds.z, vec![1.5]);
        assert_eq!(ds.x, vec![-2.5]);
    }

    #[test]
    fn van_der_pol_derivative() {
        let m = AgentModel::van_der_pol(1.0);
        let s = AgentState {
            z: vec![],
            x: vec![1.0, 5.0],
        };
        let ds = agent_derivative(&m, &s, 0.0);
        assert_eq!(ds.x, vec![5.0, -1.0]);
    }

    #[test]
    fn builtin_agents_validation() {
        let agents = builtin_agents(&ExampleParams::default()).unwrap();
        assert_eq!(agents.len(), 3);
        assert_eq!(agents[1].a0[(0, 0)], -1.0);
        assert!(check_hurwitz(&agents[1].a0).hurwitz);

        let bad = ExampleParams {
            c2: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            builtin_agents(&bad),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn control_enters_last_chain_coordinate_linearly() {
        let m = AgentModel::van_der_pol(1.0);
        let s = AgentState {
            z: vec![],
            x: vec![0.3, -0.7],
        };
        let d0 = agent_derivative(&m, &s, 0.0);
        let d1 = agent_derivative(&m, &s, 1.0);
        let d5 = agent_derivative(&m, &s, 5.0);
        // Unit coefficient (b_inf = 1) on the last coordinate only.
        assert_abs_diff_eq!(d1.x[1] - d0.x[1], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d5.x[1] - d0.x[1], 5.0, epsilon = 1e-15);
        assert_eq!(d1.x[0], d0.x[0]);
    }

    #[test]
    fn cancelling_g_reduces_to_integrator_chain() {
        let m = AgentModel::fitzhugh_nagumo(1.0, 1.0, 1.0).unwrap();
        for (z, x) in [(0.2, -1.0), (-0.4, 0.5), (1.0, 2.0)] {
            let s = AgentState {
                z: vec![z],
                x: vec![x],
            };
            let u = -m.g.eval(&s.z, &s.x);
            let ds = agent_derivative(&m, &s, u);
            assert_abs_diff_eq!(ds.x[0], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn leader_ramp_and_chain_structure() {
        let leader = LeaderModel::double_integrator(1.0);
        let policy = LeaderInputPolicy::zero();
        let (wdot, v, y_r) = leader_derivative(&leader, &[0.0, 1.0], &policy, 0.0).unwrap();
        assert_eq!(wdot, vec![1.0, 0.0]);
        assert_eq!(v, 0.0);
        assert_eq!(y_r, 0.0);
        // y_r' = w2 under the companion structure.
        let (wdot, _, _) = leader_derivative(&leader, &[3.0, -2.5], &policy, 1.0).unwrap();
        assert_eq!(wdot[0], -2.5);
    }

    #[test]
    fn leader_sinusoid_closed_form() {
        // v = -w1 turns the double integrator into a harmonic oscillator;
        // from w(0) = (1, 0) the output is cos t. Independent RK4 as the
        // oracle here, not the simulation engine.
        let leader = LeaderModel::double_integrator(2.0);
        let policy = LeaderInputPolicy::state_feedback(vec![-1.0, 0.0]);
        let mut w = vec![1.0, 0.0];
        let h = 1e-3;
        let deriv = |w: &[f64]| {
            let (wd, _, _) = leader_derivative(&leader, w, &policy, 0.0).unwrap();
            wd
        };
        let steps = 2000;
        for _ in 0..steps {
            let k1 = deriv(&w);
            let y1: Vec<f64> = w.iter().zip(&k1).map(|(a, b)| a + 0.5 * h * b).collect();
            let k2 = deriv(&y1);
            let y2: Vec<f64> = w.iter().zip(&k2).map(|(a, b)| a + 0.5 * h * b).collect();
            let k3 = deriv(&y2);
            let y3: Vec<f64> = w.iter().zip(&k3).map(|(a, b)| a + h * b).collect();
            let k4 = deriv(&y3);
            for i in 0..w.len() {
                w[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        let t = steps as f64 * h;
        assert_abs_diff_eq!(w[0], t.cos(), epsilon = 1e-9);
    }

    #[test]
    fn leader_ramp_trajectory() {
        // v = 0 from w = (0, 1): the solution is linear in t, which RK4
        // reproduces exactly, so y_r(t) = t.
        let leader = LeaderModel::double_integrator(0.0);
        let policy = LeaderInputPolicy::zero();
        let mut w = vec![0.0, 1.0];
        let h = 0.25;
        for _ in 0..8 {
            let (k1, _, _) = leader_derivative(&leader, &w, &policy, 0.0).unwrap();
            let y1: Vec<f64> = w.iter().zip(&k1).map(|(a, b)| a + 0.5 * h * b).collect();
            let (k2, _, _) = leader_derivative(&leader, &y1, &policy, 0.0).unwrap();
            let y2: Vec<f64> = w.iter().zip(&k2).map(|(a, b)| a + 0.5 * h * b).collect();
            let (k3, _, _) = leader_derivative(&leader, &y2, &policy, 0.0).unwrap();
            let y3: Vec<f64> = w.iter().zip(&k3).map(|(a, b)| a + h * b).collect();
            let (k4, _, _) = leader_derivative(&leader, &y3, &policy, 0.0).unwrap();
            for i in 0..2 {
                w[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        assert_abs_diff_eq!(w[0], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(w[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn leader_bound_violation() {
        let leader = LeaderModel::double_integrator(0.5);
        let policy = LeaderInputPolicy::state_feedback(vec![-1.0, 0.0]);
        let err = leader_derivative(&leader, &[2.0, 0.0], &policy, 0.0);
        assert!(matches!(err, Err(Error::BoundViolation { .. })));

        // With bound_check off the same input passes.
        let lax = LeaderInputPolicy {
            bound_check: false,
            ..policy
        };
        assert!(leader_derivative(&leader, &[2.0, 0.0], &lax, 0.0).is_ok());
    }

    #[test]
    fn zero_policy_from_origin_stays_at_origin() {
        let leader = LeaderModel::double_integrator(0.0);
        let (wdot, v, y_r) =
            leader_derivative(&leader, &[0.0, 0.0], &LeaderInputPolicy::zero(), 3.0).unwrap();
        assert_eq!(wdot, vec![0.0, 0.0]);
        assert_eq!((v, y_r), (0.0, 0.0));
    }

    #[test]
    fn relative_degree_examples() {
        let leader = LeaderModel::double_integrator(1.0);
        assert!(check_relative_degree(
            &AgentModel::damping_oscillator(),
            &leader
        ));
        assert!(check_relative_degree(
            &AgentModel::fitzhugh_nagumo(1.0, 1.0, 1.0).unwrap(),
            &leader
        ));
        // A 3-chain against the 2-dim leader fails.
        let long = AgentModel::new(
            "chain3",
            DMatrix::zeros(0, 0),
            3,
            vec![],
            PolyExpr::zero(),
        )
        .unwrap();
        assert!(!check_relative_degree(&long, &leader));
    }

    #[test]
    fn fitzhugh_nagumo_z_lipschitz_is_one() {
        // g is linear in z with coefficient -1, so the empirical constant
        // is exactly 1.
        let m = AgentModel::fitzhugh_nagumo(1.0, 1.0, 1.0).unwrap();
        let lip = empirical_z_lipschitz(&m, (-3.0, 3.0), (-3.0, 3.0), 200, 42);
        assert_abs_diff_eq!(lip, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn tabulated_policy_interpolates() {
        let policy = LeaderInputPolicy {
            kind: InputPolicyKind::Tabulated {
                times: vec![0.0, 1.0, 2.0],
                values: vec![0.0, 2.0, 2.0],
            },
            bound_check: false,
            private: false,
        };
        assert_eq!(policy.value(&[], 0.5), 1.0);
        assert_eq!(policy.value(&[], 5.0), 2.0);
        assert_eq!(policy.value(&[], -1.0), 0.0);
    }
}
