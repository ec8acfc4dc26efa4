//! The four tracking control laws.
//!
//! All laws share the same first line
//! `u_i = -g_i(xi_i, x_i) + x_{i(nx+1)}`: the measured chain is extended by
//! compensator integrators up to the leader dimension, and the law shapes
//! the derivative of the top chain coordinate:
//!
//! * full order — chain feedback against a per-agent leader observer
//!   `eta_i` driven by neighbor disagreement (needs `v`),
//! * reduced order — direct neighbor coupling `K sum a_ij (xhat_i - xhat_j)`
//!   (needs `v`),
//! * adaptive — sign-based coupling with a locally grown gain `theta_i`;
//!   never reads `v` or any global quantity,
//! * saturated adaptive — the sign replaced by a boundary layer `sat_eps`
//!   plus gain leakage `-sigma theta_i`.
//!
//! When `nx` equals the leader dimension the chain extension is empty and
//! the shaped top-row value feeds `u` directly; the closed-loop chain
//! dynamics are identical in both arrangements.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::{AgentModel, AgentState};
use crate::synthesis::{LeaderModel, SynthesisResult};
use crate::util::{dot, sat, signum0};

/// Which law closes the loop.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlLaw {
    FullOrder,
    ReducedOrder,
    Adaptive,
    Saturated,
}

impl ControlLaw {
    /// Laws with a continuous right-hand side integrate with the
    /// fourth-order scheme; the sign-based law falls back to first order.
    pub fn is_smooth(self) -> bool {
        !matches!(self, ControlLaw::Adaptive)
    }

    /// Whether the law consumes the leader input `v`.
    pub fn uses_leader_input(self) -> bool {
        matches!(self, ControlLaw::FullOrder | ControlLaw::ReducedOrder)
    }

    pub fn needs_eta(self) -> bool {
        matches!(self, ControlLaw::FullOrder)
    }

    pub fn needs_theta(self) -> bool {
        matches!(self, ControlLaw::Adaptive | ControlLaw::Saturated)
    }

    pub fn name(self) -> &'static str {
        match self {
            ControlLaw::FullOrder => "full_order",
            ControlLaw::ReducedOrder => "reduced_order",
            ControlLaw::Adaptive => "adaptive",
            ControlLaw::Saturated => "saturated",
        }
    }
}

impl std::str::FromStr for ControlLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full_order" => Ok(ControlLaw::FullOrder),
            "reduced_order" => Ok(ControlLaw::ReducedOrder),
            "adaptive" => Ok(ControlLaw::Adaptive),
            "saturated" => Ok(ControlLaw::Saturated),
            other => Err(Error::InvalidParameter(format!(
                "unknown control law '{other}' (expected full_order, reduced_order, adaptive or saturated)"
            ))),
        }
    }
}

/// Per-agent compensator state.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CompensatorState {
    /// Chain extension `x_{i(nx+1)} .. x_{i n0w}` (may be empty).
    pub chain_ext: Vec<f64>,
    /// Internal-state observer `xi_i` (length `nz`).
    pub xi: Vec<f64>,
    /// Leader observer `eta_i` (full-order law only).
    pub eta: Option<Vec<f64>>,
    /// Adaptive gain `theta_i` (adaptive/saturated laws only).
    pub theta: Option<f64>,
}

/// Time derivative of a [`CompensatorState`]; same shape.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CompensatorDerivative {
    pub chain_ext: Vec<f64>,
    pub xi: Vec<f64>,
    pub eta: Option<Vec<f64>>,
    pub theta: Option<f64>,
}

/// Read-only snapshot a neighbor shares for one step. The leader (node 0)
/// broadcasts `xhat_0 = w` and `eta_0 = w`.
#[derive(Clone, Copy, Debug)]
pub struct NeighborPacket<'a> {
    pub sender: usize,
    /// `xhat_j = col(x_{j1} .. x_{j n0w})`.
    pub xhat: &'a [f64],
    /// Leader-observer state; present on full-order runs.
    pub eta: Option<&'a [f64]>,
}

/// Static data every step function needs, extracted once from the leader
/// model and a synthesis result.
#[derive(Clone, Debug, PartialEq)]
pub struct LawGains {
    pub n0w: usize,
    /// Bottom row of `S`.
    pub s_bottom: Vec<f64>,
    pub d_last: f64,
    /// Row vector `d' P`.
    pub dtp: Vec<f64>,
    /// Coupling row `K = -gamma d' P`.
    pub k: Vec<f64>,
    /// Chain-feedback coefficients.
    pub k0: Vec<f64>,
    /// Observer injection column.
    pub l0: Vec<f64>,
}

impl LawGains {
    pub fn new(leader: &LeaderModel, syn: &SynthesisResult) -> Self {
        let d = leader.d_vector();
        let dtp_row = d.transpose() * &syn.p;
        Self {
            n0w: leader.dim(),
            s_bottom: leader.s_bottom().to_vec(),
            d_last: leader.d_last(),
            dtp: dtp_row.iter().copied().collect(),
            k: syn.k.clone(),
            k0: syn.k0.clone(),
            l0: syn.l0.clone(),
        }
    }
}

/// `xhat_i`: the measured chain prefixed onto the compensator extension.
pub fn assemble_xhat(gains: &LawGains, s: &AgentState, comp: &CompensatorState) -> Vec<f64> {
    let mut xhat = Vec::with_capacity(gains.n0w);
    xhat.extend_from_slice(&s.x);
    xhat.extend_from_slice(&comp.chain_ext);
    debug_assert_eq!(xhat.len(), gains.n0w);
    xhat
}

fn packet_from<'a, 'b>(
    packets: &'b [NeighborPacket<'a>],
    agent_index: usize,
    sender: usize,
) -> Result<&'b NeighborPacket<'a>> {
    packets
        .iter()
        .find(|p| p.sender == sender)
        .ok_or(Error::MissingNeighborData {
            agent: agent_index,
            sender,
        })
}

/// `sum_j a_ij (own - xhat_j)` over the declared in-neighbors.
fn xhat_disagreement(
    agent_index: usize,
    own: &[f64],
    neighbors: &[(usize, f64)],
    packets: &[NeighborPacket<'_>],
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; own.len()];
    for &(sender, weight) in neighbors {
        let pkt = packet_from(packets, agent_index, sender)?;
        for (k, o) in out.iter_mut().enumerate() {
            *o += weight * (own[k] - pkt.xhat[k]);
        }
    }
    Ok(out)
}

fn eta_disagreement(
    agent_index: usize,
    own: &[f64],
    neighbors: &[(usize, f64)],
    packets: &[NeighborPacket<'_>],
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; own.len()];
    for &(sender, weight) in neighbors {
        let pkt = packet_from(packets, agent_index, sender)?;
        let eta_j = pkt.eta.ok_or(Error::MissingNeighborData {
            agent: agent_index,
            sender,
        })?;
        for (k, o) in out.iter_mut().enumerate() {
            *o += weight * (own[k] - eta_j[k]);
        }
    }
    Ok(out)
}

/// Shared first line of every law plus the chain-extension integrators.
/// `top` is the law-specific derivative of the highest chain coordinate.
fn chain_and_u(
    agent: &AgentModel,
    gains: &LawGains,
    comp: &CompensatorState,
    s: &AgentState,
    top: f64,
) -> (f64, Vec<f64>) {
    let ext = gains.n0w - agent.nx;
    let g_at_xi = agent.g.eval(&comp.xi, &s.x);
    if ext == 0 {
        // No extension: the shaped top row acts through u directly.
        (-g_at_xi + top, Vec::new())
    } else {
        let u = -g_at_xi + comp.chain_ext[0];
        let mut chain_dot = Vec::with_capacity(ext);
        for k in 0..ext - 1 {
            chain_dot.push(comp.chain_ext[k + 1]);
        }
        chain_dot.push(top);
        (u, chain_dot)
    }
}

/// `xi' = A0 xi + f(x)`; the estimation error obeys
/// `(xi - z)' = A0 (xi - z)` exactly, independent of the law.
fn xi_derivative(agent: &AgentModel, comp: &CompensatorState, s: &AgentState) -> Vec<f64> {
    let mut out = vec![0.0; agent.nz];
    for (r, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for c in 0..agent.nz {
            acc += agent.a0[(r, c)] * comp.xi[c];
        }
        *o = acc + agent.f[r].eval(&comp.xi, &s.x);
    }
    out
}

/// Full-order law: chain feedback `d_last * k0' (xhat_i - eta_i)` against
/// the local leader observer, whose own dynamics are
/// `eta' = S eta + d v + l0 c' eta_vi`.
#[allow(clippy::too_many_arguments)]
pub fn full_order_step(
    agent_index: usize,
    agent: &AgentModel,
    gains: &LawGains,
    neighbors: &[(usize, f64)],
    packets: &[NeighborPacket<'_>],
    comp: &CompensatorState,
    s: &AgentState,
    v: f64,
) -> Result<(f64, CompensatorDerivative)> {
    let eta = comp
        .eta
        .as_deref()
        .ok_or_else(|| Error::InvalidParameter("full-order law requires an eta state".into()))?;
    let xhat = assemble_xhat(gains, s, comp);
    let eta_v = eta_disagreement(agent_index, eta, neighbors, packets)?;

    let mut feedback = 0.0;
    for j in 0..gains.n0w {
        feedback += gains.k0[j] * (xhat[j] - eta[j]);
    }
    let top = dot(&gains.s_bottom, &xhat) + gains.d_last * v + gains.d_last * feedback;
    let (u, chain_dot) = chain_and_u(agent, gains, comp, s, top);

    // c = e1, so c' eta_vi is just the first coordinate.
    let injection = eta_v[0];
    let n = gains.n0w;
    let mut eta_dot = vec![0.0; n];
    for r in 0..n - 1 {
        eta_dot[r] = eta[r + 1] + gains.l0[r] * injection;
    }
    eta_dot[n - 1] = dot(&gains.s_bottom, eta) + gains.d_last * v + gains.l0[n - 1] * injection;

    Ok((
        u,
        CompensatorDerivative {
            chain_ext: chain_dot,
            xi: xi_derivative(agent, comp, s),
            eta: Some(eta_dot),
            theta: None,
        },
    ))
}

/// Reduced-order law: direct neighbor coupling
/// `d_last * K sum_j a_ij (xhat_i - xhat_j)`; no leader observer.
#[allow(clippy::too_many_arguments)]
pub fn reduced_order_step(
    agent_index: usize,
    agent: &AgentModel,
    gains: &LawGains,
    neighbors: &[(usize, f64)],
    packets: &[NeighborPacket<'_>],
    comp: &CompensatorState,
    s: &AgentState,
    v: f64,
) -> Result<(f64, CompensatorDerivative)> {
    let xhat = assemble_xhat(gains, s, comp);
    let xv = xhat_disagreement(agent_index, &xhat, neighbors, packets)?;
    let top = dot(&gains.s_bottom, &xhat) + gains.d_last * v + gains.d_last * dot(&gains.k, &xv);
    let (u, chain_dot) = chain_and_u(agent, gains, comp, s, top);
    Ok((
        u,
        CompensatorDerivative {
            chain_ext: chain_dot,
            xi: xi_derivative(agent, comp, s),
            eta: None,
            theta: None,
        },
    ))
}

/// Adaptive sign-based law. Fully distributed: neither `v`, its bound, nor
/// `lambda_N` appear (the signature has no way to read them). With the
/// scalar disagreement `s = d' P xhat_vi`, the top row gains
/// `-d_last theta s - theta sgn(s)` and the gain grows as
/// `theta' = s^2 + |s| >= 0`.
pub fn adaptive_step(
    agent_index: usize,
    agent: &AgentModel,
    gains: &LawGains,
    neighbors: &[(usize, f64)],
    packets: &[NeighborPacket<'_>],
    comp: &CompensatorState,
    s: &AgentState,
) -> Result<(f64, CompensatorDerivative)> {
    let theta = comp
        .theta
        .ok_or_else(|| Error::InvalidParameter("adaptive law requires a theta state".into()))?;
    let xhat = assemble_xhat(gains, s, comp);
    let xv = xhat_disagreement(agent_index, &xhat, neighbors, packets)?;
    let sig = dot(&gains.dtp, &xv);
    let top = dot(&gains.s_bottom, &xhat) - gains.d_last * theta * sig - theta * signum0(sig);
    let (u, chain_dot) = chain_and_u(agent, gains, comp, s, top);
    Ok((
        u,
        CompensatorDerivative {
            chain_ext: chain_dot,
            xi: xi_derivative(agent, comp, s),
            eta: None,
            theta: Some(sig * sig + sig.abs()),
        },
    ))
}

/// Continuous approximation of the adaptive law: `sgn` becomes `sat_eps`
/// and the gain leaks with rate `sigma_leak`, trading exact convergence
/// for a tunable error bound.
#[allow(clippy::too_many_arguments)]
pub fn saturated_adaptive_step(
    agent_index: usize,
    agent: &AgentModel,
    gains: &LawGains,
    neighbors: &[(usize, f64)],
    packets: &[NeighborPacket<'_>],
    comp: &CompensatorState,
    s: &AgentState,
    epsilon: f64,
    sigma_leak: f64,
) -> Result<(f64, CompensatorDerivative)> {
    if !epsilon.is_finite() || epsilon <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "saturation width epsilon = {epsilon} must be > 0"
        )));
    }
    if !sigma_leak.is_finite() || sigma_leak <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "leakage sigma = {sigma_leak} must be > 0"
        )));
    }
    let theta = comp
        .theta
        .ok_or_else(|| Error::InvalidParameter("saturated law requires a theta state".into()))?;
    let xhat = assemble_xhat(gains, s, comp);
    let xv = xhat_disagreement(agent_index, &xhat, neighbors, packets)?;
    let sig = dot(&gains.dtp, &xv);
    let top = dot(&gains.s_bottom, &xhat) - gains.d_last * theta * sig - theta * sat(sig, epsilon);
    let (u, chain_dot) = chain_and_u(agent, gains, comp, s, top);
    Ok((
        u,
        CompensatorDerivative {
            chain_ext: chain_dot,
            xi: xi_derivative(agent, comp, s),
            eta: None,
            theta: Some(sig * sig + sig.abs() - sigma_leak * theta),
        },
    ))
}
