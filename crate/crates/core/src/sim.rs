//! Fixed-step closed-loop simulation of the leader, the agent fleet and
//! the per-agent compensators, plus convergence analysis on the recorded
//! traces.
//!
//! Laws with a continuous right-hand side integrate with the classic
//! fourth-order Runge-Kutta scheme; the sign-based adaptive law uses
//! explicit first-order steps at `dt <= 1e-3` with `sgn(0) = 0` and no
//! event detection, so chattering shows up in the trace as the expected
//! artifact of the discontinuity.
//!
//! Within a step every agent is evaluated against an immutable snapshot of
//! all states and writes a disjoint derivative block, so agents may be
//! evaluated in parallel without changing a single bit of the result.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controllers::{
    adaptive_step, full_order_step, reduced_order_step, saturated_adaptive_step, CompensatorState,
    ControlLaw, LawGains, NeighborPacket,
};
use crate::error::{Error, Result};
use crate::exec::{for_each_indexed, Parallelism};
use crate::graph::{build_laplacian, is_connected, Digraph};
use crate::plant::{
    agent_derivative, check_relative_degree, leader_derivative, AgentModel, AgentState,
    LeaderInputPolicy,
};
use crate::synthesis::{synthesize, LeaderModel, SynthesisOptions, SynthesisResult};
use crate::trace::{AgentSeries, LeaderSeries, SeriesMat, SimTrace};

/// Largest state magnitude before a run is declared divergent.
pub const BLOWUP_LIMIT: f64 = 1e9;
/// Step-size ceiling for the discontinuous law.
pub const DISCONTINUOUS_DT_MAX: f64 = 1e-3;

/// Law selection plus every tunable the laws and synthesis consume.
#[derive(Clone, Debug, PartialEq)]
pub struct ControllerConfig {
    pub law: ControlLaw,
    /// Boundary-layer width of the saturated law.
    pub epsilon: f64,
    /// Gain leakage rate of the saturated law.
    pub sigma: f64,
    /// Poles for the full-order chain feedback (all -1 when absent).
    pub k0_poles: Option<Vec<f64>>,
    pub q_state: Option<nalgebra::DMatrix<f64>>,
    pub q_observer: Option<nalgebra::DMatrix<f64>>,
    pub safety_factor: f64,
}

impl ControllerConfig {
    pub fn new(law: ControlLaw) -> Self {
        Self {
            law,
            epsilon: 0.01,
            sigma: 0.01,
            k0_poles: None,
            q_state: None,
            q_observer: None,
            safety_factor: 1.0,
        }
    }

    pub fn synthesis_options(&self) -> SynthesisOptions {
        SynthesisOptions {
            q_state: self.q_state.clone(),
            q_observer: self.q_observer.clone(),
            safety_factor: self.safety_factor,
            k0_poles: self.k0_poles.clone(),
        }
    }
}

/// Initial conditions: a seeded uniform draw per state coordinate, or
/// explicit vectors.
#[derive(Clone, Debug, PartialEq)]
pub enum InitSpec {
    /// Every composite state coordinate is drawn uniformly from
    /// `[low, high]` (the adaptive gain from the non-negative part of the
    /// box), in a fixed order: leader `w`, then per agent `z`, `x`, chain
    /// extension, `xi`, `eta` (when present), `theta` (when present).
    Seeded { seed: u64, low: f64, high: f64 },
    Explicit(ExplicitInit),
}

impl InitSpec {
    pub fn seeded(seed: u64) -> Self {
        InitSpec::Seeded {
            seed,
            low: -3.0,
            high: 3.0,
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            InitSpec::Seeded { seed, .. } => Some(*seed),
            InitSpec::Explicit(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct ExplicitInit {
    pub w: Vec<f64>,
    pub agents: Vec<AgentInit>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct AgentInit {
    pub z: Vec<f64>,
    pub x: Vec<f64>,
    pub chain_ext: Vec<f64>,
    pub xi: Vec<f64>,
    /// Defaults to zeros when the law needs it and none is given.
    pub eta: Option<Vec<f64>>,
    /// Defaults to 0; must be non-negative.
    pub theta: Option<f64>,
}

/// File names used by the export step, relative to the output directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputPaths {
    pub trace: String,
    pub summary: String,
}

impl Default for OutputPaths {
    fn default() -> Self {
        Self {
            trace: "trace.csv".into(),
            summary: "summary.json".into(),
        }
    }
}

/// A complete, runnable experiment description.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub graph: Digraph,
    pub leader: LeaderModel,
    pub input_policy: LeaderInputPolicy,
    pub agents: Vec<AgentModel>,
    pub controller: ControllerConfig,
    pub init: InitSpec,
    pub dt: f64,
    pub t_final: f64,
    pub output: OutputPaths,
}

impl Scenario {
    /// The three-agent example: Fig.-1 style topology, double-integrator
    /// leader with `|v| <= 5`, default agent parameters, seeded initial
    /// conditions in `[-3, 3]`, `dt = 1e-3`, 30 s horizon.
    pub fn paper_example(law: ControlLaw, input_policy: LeaderInputPolicy, seed: u64) -> Scenario {
        Scenario {
            name: format!("example_{}", law.name()),
            graph: Digraph::example_three_agents(),
            leader: LeaderModel::double_integrator(5.0),
            input_policy,
            agents: crate::plant::builtin_agents(&Default::default())
                .expect("default example agents are valid"),
            controller: ControllerConfig::new(law),
            init: InitSpec::seeded(seed),
            dt: 1e-3,
            t_final: 30.0,
            output: OutputPaths::default(),
        }
    }

    /// Ramp-tracking run: `v = 0`, adaptive law.
    pub fn paper_fig2a(seed: u64) -> Scenario {
        let mut s = Self::paper_example(ControlLaw::Adaptive, LeaderInputPolicy::zero(), seed);
        s.name = "paper_fig2a".into();
        s
    }

    /// Sinusoid-tracking run: `v = -w1`, same controller and gains.
    pub fn paper_fig2b(seed: u64) -> Scenario {
        let mut s = Self::paper_example(
            ControlLaw::Adaptive,
            LeaderInputPolicy::state_feedback(vec![-1.0, 0.0]),
            seed,
        );
        s.name = "paper_fig2b".into();
        s
    }

    /// Matched-manifold start: every agent initialized with
    /// `xhat_i = w(0)`, `xi_i = z_i(0)`, observers exact and `v = 0`, so
    /// the exact flow keeps all tracking errors at zero and any recorded
    /// error is integration artifact.
    pub fn perfect_start(law: ControlLaw) -> Scenario {
        let mut s = Self::paper_example(law, LeaderInputPolicy::zero(), 0);
        s.name = format!("perfect_start_{}", law.name());
        let w = vec![1.0, 0.5];
        let agents = s
            .agents
            .iter()
            .map(|m| {
                let z = vec![0.25; m.nz];
                AgentInit {
                    z: z.clone(),
                    x: w[..m.nx].to_vec(),
                    chain_ext: w[m.nx..].to_vec(),
                    xi: z,
                    eta: law.needs_eta().then(|| w.clone()),
                    theta: law.needs_theta().then_some(0.0),
                }
            })
            .collect();
        s.init = InitSpec::Explicit(ExplicitInit { w, agents });
        s
    }

    pub fn follower_count(&self) -> usize {
        self.graph.follower_count()
    }

    /// Number of integration steps on the grid `t_k = k dt`.
    pub fn steps(&self) -> usize {
        ((self.t_final / self.dt).round() as usize).max(1)
    }

    /// Load-time checks. Every named assumption is verified here so a bad
    /// scenario fails before any numerics run.
    pub fn validate(&self) -> Result<()> {
        let n = self.follower_count();
        if self.agents.len() != n {
            return Err(Error::Validation {
                assumption: "agent count".into(),
                detail: format!(
                    "graph declares {n} followers but {} agents are given",
                    self.agents.len()
                ),
            });
        }
        if !is_connected(&self.graph) {
            return Err(Error::Validation {
                assumption: "Assumption 1 (connected communication graph)".into(),
                detail: "the leader must be reachable from every follower and the \
                         follower subgraph must be undirected"
                    .into(),
            });
        }
        for (i, m) in self.agents.iter().enumerate() {
            if !check_relative_degree(m, &self.leader) {
                return Err(Error::Validation {
                    assumption: "Assumption 2 (relative degree)".into(),
                    detail: format!(
                        "agent {} ({}) has chain length {} > leader dimension {}",
                        i + 1,
                        m.label,
                        m.nx,
                        self.leader.dim()
                    ),
                });
            }
        }
        if self.controller.law.uses_leader_input() && self.input_policy.private {
            return Err(Error::Validation {
                assumption: "leader-input privacy".into(),
                detail: format!(
                    "law '{}' reads v but the input policy is marked private; \
                     only the adaptive/saturated laws are fully distributed",
                    self.controller.law.name()
                ),
            });
        }
        if !(self.dt.is_finite() && self.dt > 0.0 && self.t_final.is_finite() && self.t_final > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "dt = {} and t_final = {} must be positive",
                self.dt, self.t_final
            )));
        }
        if self.controller.law == ControlLaw::Adaptive
            && self.dt > DISCONTINUOUS_DT_MAX * (1.0 + 1e-12)
        {
            return Err(Error::Validation {
                assumption: "discontinuous integration policy".into(),
                detail: format!(
                    "the sign-based law integrates with first-order steps at \
                     dt <= {DISCONTINUOUS_DT_MAX:e}; got dt = {}",
                    self.dt
                ),
            });
        }
        if self.controller.law == ControlLaw::Saturated
            && !(self.controller.epsilon > 0.0 && self.controller.sigma > 0.0)
        {
            return Err(Error::InvalidParameter(format!(
                "saturated law requires epsilon > 0 and sigma > 0, got ({}, {})",
                self.controller.epsilon, self.controller.sigma
            )));
        }
        if let crate::plant::InputPolicyKind::StateFeedback(gain) = &self.input_policy.kind {
            if gain.len() != self.leader.dim() {
                return Err(Error::Dimension(format!(
                    "state feedback gain length {} != leader dimension {}",
                    gain.len(),
                    self.leader.dim()
                )));
            }
        }
        if let crate::plant::InputPolicyKind::Tabulated { times, values } = &self.input_policy.kind
        {
            if times.len() != values.len() || times.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidParameter(
                    "tabulated input needs equal-length, strictly increasing times".into(),
                ));
            }
        }
        if let InitSpec::Explicit(init) = &self.init {
            self.validate_explicit(init)?;
        }
        if let InitSpec::Seeded { low, high, .. } = &self.init {
            if !(low.is_finite() && high.is_finite() && low <= high) {
                return Err(Error::InvalidParameter(format!(
                    "initial box [{low}, {high}] is empty"
                )));
            }
        }
        Ok(())
    }

    fn validate_explicit(&self, init: &ExplicitInit) -> Result<()> {
        let n0w = self.leader.dim();
        if init.w.len() != n0w {
            return Err(Error::Dimension(format!(
                "initial w has length {}, leader dimension is {n0w}",
                init.w.len()
            )));
        }
        if init.agents.len() != self.agents.len() {
            return Err(Error::Dimension(format!(
                "{} agent initializers for {} agents",
                init.agents.len(),
                self.agents.len()
            )));
        }
        for (i, (ai, m)) in init.agents.iter().zip(&self.agents).enumerate() {
            let ext = n0w - m.nx;
            let ok = ai.z.len() == m.nz
                && ai.x.len() == m.nx
                && ai.chain_ext.len() == ext
                && ai.xi.len() == m.nz
                && ai.eta.as_ref().is_none_or(|e| e.len() == n0w);
            if !ok {
                return Err(Error::Dimension(format!(
                    "agent {} initializer does not match its model shape",
                    i + 1
                )));
            }
            if let Some(th) = ai.theta {
                if !th.is_finite() || th < 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "theta(0) = {th} must be non-negative"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Byte positions of one agent's block inside the flat composite state.
#[derive(Clone, Debug)]
struct AgentSlot {
    base: usize,
    nz: usize,
    nx: usize,
    ext: usize,
    eta: bool,
    theta: bool,
    len: usize,
}

impl AgentSlot {
    fn z(&self) -> std::ops::Range<usize> {
        self.base..self.base + self.nz
    }
    fn x(&self) -> std::ops::Range<usize> {
        let s = self.base + self.nz;
        s..s + self.nx
    }
    fn chain(&self) -> std::ops::Range<usize> {
        let s = self.base + self.nz + self.nx;
        s..s + self.ext
    }
    fn xi(&self) -> std::ops::Range<usize> {
        let s = self.base + self.nz + self.nx + self.ext;
        s..s + self.nz
    }
    fn eta_range(&self, n0w: usize) -> Option<std::ops::Range<usize>> {
        self.eta.then(|| {
            let s = self.base + 2 * self.nz + self.nx + self.ext;
            s..s + n0w
        })
    }
    fn theta_index(&self, n0w: usize) -> Option<usize> {
        self.theta
            .then(|| self.base + 2 * self.nz + self.nx + self.ext + if self.eta { n0w } else { 0 })
    }
}

/// Per-record controller outputs harvested alongside the state.
struct StepOutputs {
    v: f64,
    y_r: f64,
    us: Vec<f64>,
}

/// A validated, synthesized, ready-to-run experiment.
pub struct Simulation {
    scenario: Scenario,
    synthesis: SynthesisResult,
    gains: LawGains,
    neighbors: Vec<Vec<(usize, f64)>>,
    slots: Vec<AgentSlot>,
    state_len: usize,
    parallelism: Parallelism,
}

impl Simulation {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        let dec = build_laplacian(&scenario.graph);
        let synthesis = synthesize(
            &scenario.leader,
            &dec,
            &scenario.controller.synthesis_options(),
        )?;
        if scenario.controller.law == ControlLaw::FullOrder
            && synthesis.certificates.chain_feedback_margin <= 0.0
        {
            return Err(Error::SynthesisFailure(format!(
                "chain feedback S + d k0' is not Hurwitz (margin {:.3e}); \
                 choose different k0 poles",
                synthesis.certificates.chain_feedback_margin
            )));
        }
        let gains = LawGains::new(&scenario.leader, &synthesis);
        let law = scenario.controller.law;
        let n0w = scenario.leader.dim();
        let neighbors: Vec<Vec<(usize, f64)>> = (0..scenario.agents.len())
            .map(|i| scenario.graph.in_neighbors(i + 1))
            .collect();
        let mut slots = Vec::with_capacity(scenario.agents.len());
        let mut base = n0w;
        for m in &scenario.agents {
            let ext = n0w - m.nx;
            let len = 2 * m.nz
                + m.nx
                + ext
                + if law.needs_eta() { n0w } else { 0 }
                + if law.needs_theta() { 1 } else { 0 };
            slots.push(AgentSlot {
                base,
                nz: m.nz,
                nx: m.nx,
                ext,
                eta: law.needs_eta(),
                theta: law.needs_theta(),
                len,
            });
            base += len;
        }
        let parallelism = Parallelism::auto(scenario.agents.len());
        Ok(Self {
            scenario: scenario.clone(),
            synthesis,
            gains,
            neighbors,
            slots,
            state_len: base,
            parallelism,
        })
    }

    pub fn with_parallelism(mut self, p: Parallelism) -> Self {
        self.parallelism = p;
        self
    }

    pub fn synthesis(&self) -> &SynthesisResult {
        &self.synthesis
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    fn initial_state(&self) -> Result<Vec<f64>> {
        let scn = &self.scenario;
        let n0w = scn.leader.dim();
        let mut y = vec![0.0; self.state_len];
        match &scn.init {
            InitSpec::Seeded { seed, low, high } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let draw = |rng: &mut ChaCha8Rng| rng.random_range(*low..=*high);
                for slot in y.iter_mut().take(n0w) {
                    *slot = draw(&mut rng);
                }
                // The adaptive gain must start non-negative, so it draws
                // from the non-negative part of the box.
                let th_lo = low.max(0.0);
                let th_hi = high.max(th_lo);
                for slot in &self.slots {
                    for k in slot.z() {
                        y[k] = draw(&mut rng);
                    }
                    for k in slot.x() {
                        y[k] = draw(&mut rng);
                    }
                    for k in slot.chain() {
                        y[k] = draw(&mut rng);
                    }
                    for k in slot.xi() {
                        y[k] = draw(&mut rng);
                    }
                    if let Some(r) = slot.eta_range(n0w) {
                        for k in r {
                            y[k] = draw(&mut rng);
                        }
                    }
                    if let Some(k) = slot.theta_index(n0w) {
                        y[k] = if th_hi > th_lo {
                            rng.random_range(th_lo..=th_hi)
                        } else {
                            th_lo
                        };
                    }
                }
            }
            InitSpec::Explicit(init) => {
                y[..n0w].copy_from_slice(&init.w);
                for (slot, ai) in self.slots.iter().zip(&init.agents) {
                    y[slot.z()].copy_from_slice(&ai.z);
                    y[slot.x()].copy_from_slice(&ai.x);
                    y[slot.chain()].copy_from_slice(&ai.chain_ext);
                    y[slot.xi()].copy_from_slice(&ai.xi);
                    if let Some(r) = slot.eta_range(n0w) {
                        match &ai.eta {
                            Some(eta) => y[r].copy_from_slice(eta),
                            None => y[r].fill(0.0),
                        }
                    }
                    if let Some(k) = slot.theta_index(n0w) {
                        y[k] = ai.theta.unwrap_or(0.0);
                    }
                }
            }
        }
        Ok(y)
    }

    /// Fill per-node `xhat` (and `eta` for full-order runs) snapshots.
    fn fill_snapshots(&self, y: &[f64], xhats: &mut [f64], etas: &mut [f64]) {
        let n0w = self.gains.n0w;
        xhats[..n0w].copy_from_slice(&y[..n0w]);
        for (i, slot) in self.slots.iter().enumerate() {
            let dst = (i + 1) * n0w;
            xhats[dst..dst + slot.nx].copy_from_slice(&y[slot.x()]);
            xhats[dst + slot.nx..dst + n0w].copy_from_slice(&y[slot.chain()]);
        }
        if self.scenario.controller.law.needs_eta() {
            etas[..n0w].copy_from_slice(&y[..n0w]);
            for (i, slot) in self.slots.iter().enumerate() {
                let dst = (i + 1) * n0w;
                let r = slot.eta_range(n0w).expect("full-order slot has eta");
                etas[dst..dst + n0w].copy_from_slice(&y[r]);
            }
        }
    }

    fn agent_views(&self, i: usize, y: &[f64]) -> (AgentState, CompensatorState) {
        let n0w = self.gains.n0w;
        let slot = &self.slots[i];
        let st = AgentState {
            z: y[slot.z()].to_vec(),
            x: y[slot.x()].to_vec(),
        };
        let comp = CompensatorState {
            chain_ext: y[slot.chain()].to_vec(),
            xi: y[slot.xi()].to_vec(),
            eta: slot.eta_range(n0w).map(|r| y[r].to_vec()),
            theta: slot.theta_index(n0w).map(|k| y[k]),
        };
        (st, comp)
    }

    fn packets<'a>(&self, i: usize, xhats: &'a [f64], etas: Option<&'a [f64]>) -> Vec<NeighborPacket<'a>> {
        let n0w = self.gains.n0w;
        self.neighbors[i]
            .iter()
            .map(|&(sender, _)| NeighborPacket {
                sender,
                xhat: &xhats[sender * n0w..(sender + 1) * n0w],
                eta: etas.map(|e| &e[sender * n0w..(sender + 1) * n0w]),
            })
            .collect()
    }

    /// One controller evaluation for agent `i` against the snapshots.
    fn law_step(
        &self,
        i: usize,
        st: &AgentState,
        comp: &CompensatorState,
        xhats: &[f64],
        etas: Option<&[f64]>,
        v: f64,
    ) -> (f64, crate::controllers::CompensatorDerivative) {
        let model = &self.scenario.agents[i];
        let neighbors = &self.neighbors[i];
        let packets = self.packets(i, xhats, etas);
        let cfg = &self.scenario.controller;
        let res = match cfg.law {
            ControlLaw::FullOrder => {
                full_order_step(i + 1, model, &self.gains, neighbors, &packets, comp, st, v)
            }
            ControlLaw::ReducedOrder => {
                reduced_order_step(i + 1, model, &self.gains, neighbors, &packets, comp, st, v)
            }
            ControlLaw::Adaptive => {
                adaptive_step(i + 1, model, &self.gains, neighbors, &packets, comp, st)
            }
            ControlLaw::Saturated => saturated_adaptive_step(
                i + 1,
                model,
                &self.gains,
                neighbors,
                &packets,
                comp,
                st,
                cfg.epsilon,
                cfg.sigma,
            ),
        };
        // The engine always hands complete packets and a compensator of
        // the law's shape; parameters were validated at load time.
        res.expect("engine supplies complete packets and a law-shaped compensator")
    }

    /// Full composite derivative at `(t, y)` into `dy`.
    fn eval_rhs(
        &self,
        t: f64,
        y: &[f64],
        xhats: &mut [f64],
        etas: &mut [f64],
        dy: &mut [f64],
    ) -> Result<()> {
        let n0w = self.gains.n0w;
        let (wdot, v, _y_r) =
            leader_derivative(&self.scenario.leader, &y[..n0w], &self.scenario.input_policy, t)?;
        dy[..n0w].copy_from_slice(&wdot);

        self.fill_snapshots(y, xhats, etas);
        let xh: &[f64] = xhats;
        let etas_opt: Option<&[f64]> =
            self.scenario.controller.law.needs_eta().then_some(&*etas);

        let mut blocks: Vec<&mut [f64]> = Vec::with_capacity(self.slots.len());
        let mut rest = &mut dy[n0w..];
        for slot in &self.slots {
            let (blk, tail) = rest.split_at_mut(slot.len);
            blocks.push(blk);
            rest = tail;
        }

        for_each_indexed(self.parallelism, blocks, |i, blk| {
            let (st, comp) = self.agent_views(i, y);
            let (u, cd) = self.law_step(i, &st, &comp, xh, etas_opt, v);
            let pd = agent_derivative(&self.scenario.agents[i], &st, u);
            let slot = &self.slots[i];
            let mut o = 0usize;
            blk[o..o + slot.nz].copy_from_slice(&pd.z);
            o += slot.nz;
            blk[o..o + slot.nx].copy_from_slice(&pd.x);
            o += slot.nx;
            blk[o..o + slot.ext].copy_from_slice(&cd.chain_ext);
            o += slot.ext;
            blk[o..o + slot.nz].copy_from_slice(&cd.xi);
            o += slot.nz;
            if let Some(eta_dot) = &cd.eta {
                blk[o..o + n0w].copy_from_slice(eta_dot);
                o += n0w;
            }
            if let Some(th_dot) = cd.theta {
                blk[o] = th_dot;
            }
        });
        Ok(())
    }

    /// Controller outputs at a record point.
    fn outputs(&self, t: f64, y: &[f64], xhats: &mut [f64], etas: &mut [f64]) -> Result<StepOutputs> {
        let n0w = self.gains.n0w;
        let (_, v, y_r) =
            leader_derivative(&self.scenario.leader, &y[..n0w], &self.scenario.input_policy, t)?;
        self.fill_snapshots(y, xhats, etas);
        let etas_opt: Option<&[f64]> =
            self.scenario.controller.law.needs_eta().then_some(&*etas);
        let mut us = Vec::with_capacity(self.slots.len());
        for i in 0..self.slots.len() {
            let (st, comp) = self.agent_views(i, y);
            let (u, _) = self.law_step(i, &st, &comp, xhats, etas_opt, v);
            us.push(u);
        }
        Ok(StepOutputs { v, y_r, us })
    }

    /// Integrate and record the whole horizon.
    pub fn run(&self) -> Result<SimTrace> {
        let scn = &self.scenario;
        let n0w = scn.leader.dim();
        let n_nodes = scn.graph.node_count();
        let steps = scn.steps();
        let dt = scn.dt;
        let smooth = scn.controller.law.is_smooth();

        let mut y = self.initial_state()?;
        let mut xhats = vec![0.0; n_nodes * n0w];
        let mut etas = vec![0.0; n_nodes * n0w];
        let mut k1 = vec![0.0; self.state_len];
        let mut k2 = vec![0.0; self.state_len];
        let mut k3 = vec![0.0; self.state_len];
        let mut k4 = vec![0.0; self.state_len];
        let mut ytmp = vec![0.0; self.state_len];

        let mut times = Vec::with_capacity(steps + 1);
        let mut leader = LeaderSeries {
            w: SeriesMat::new(n0w),
            v: Vec::with_capacity(steps + 1),
            y_r: Vec::with_capacity(steps + 1),
        };
        let mut agents: Vec<AgentSeries> = scn
            .agents
            .iter()
            .zip(&self.slots)
            .map(|(m, slot)| AgentSeries {
                label: m.label.clone(),
                z: SeriesMat::new(m.nz),
                x: SeriesMat::new(m.nx),
                chain_ext: SeriesMat::new(slot.ext),
                xi: SeriesMat::new(m.nz),
                eta: slot.eta.then(|| SeriesMat::new(n0w)),
                theta: slot.theta.then(Vec::new),
                u: Vec::with_capacity(steps + 1),
                e: Vec::with_capacity(steps + 1),
            })
            .collect();

        for k in 0..=steps {
            let t = k as f64 * dt;
            let out = self.outputs(t, &y, &mut xhats, &mut etas)?;
            times.push(t);
            leader.w.push_row(&y[..n0w]);
            leader.v.push(out.v);
            leader.y_r.push(out.y_r);
            for (i, (series, slot)) in agents.iter_mut().zip(&self.slots).enumerate() {
                series.z.push_row(&y[slot.z()]);
                series.x.push_row(&y[slot.x()]);
                series.chain_ext.push_row(&y[slot.chain()]);
                series.xi.push_row(&y[slot.xi()]);
                if let (Some(s), Some(r)) = (&mut series.eta, slot.eta_range(n0w)) {
                    s.push_row(&y[r]);
                }
                if let (Some(s), Some(idx)) = (&mut series.theta, slot.theta_index(n0w)) {
                    s.push(y[idx]);
                }
                series.u.push(out.us[i]);
                series.e.push(y[slot.x()][0] - out.y_r);
            }
            if k == steps {
                break;
            }

            if smooth {
                self.eval_rhs(t, &y, &mut xhats, &mut etas, &mut k1)?;
                for i in 0..self.state_len {
                    ytmp[i] = y[i] + 0.5 * dt * k1[i];
                }
                self.eval_rhs(t + 0.5 * dt, &ytmp, &mut xhats, &mut etas, &mut k2)?;
                for i in 0..self.state_len {
                    ytmp[i] = y[i] + 0.5 * dt * k2[i];
                }
                self.eval_rhs(t + 0.5 * dt, &ytmp, &mut xhats, &mut etas, &mut k3)?;
                for i in 0..self.state_len {
                    ytmp[i] = y[i] + dt * k3[i];
                }
                self.eval_rhs(t + dt, &ytmp, &mut xhats, &mut etas, &mut k4)?;
                for i in 0..self.state_len {
                    y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            } else {
                self.eval_rhs(t, &y, &mut xhats, &mut etas, &mut k1)?;
                for i in 0..self.state_len {
                    y[i] += dt * k1[i];
                }
            }

            let mut max_abs = 0.0f64;
            for &v in &y {
                if !v.is_finite() {
                    max_abs = f64::INFINITY;
                    break;
                }
                max_abs = max_abs.max(v.abs());
            }
            if max_abs > BLOWUP_LIMIT {
                return Err(Error::NumericBlowup {
                    t: (k + 1) as f64 * dt,
                    max_abs,
                });
            }
        }

        Ok(SimTrace {
            times,
            leader,
            agents,
            law: scn.controller.law,
            dt,
            t_final: steps as f64 * dt,
            seed: scn.init.seed(),
        })
    }
}

/// Validate, synthesize and run in one call.
pub fn run(scn: &Scenario) -> Result<SimTrace> {
    Simulation::new(scn)?.run()
}

/// Run independent scenarios, optionally in parallel; results keep input
/// order and each run is bit-identical to a solo run.
pub fn run_batch(scenarios: &[Scenario], parallelism: Parallelism) -> Vec<Result<SimTrace>> {
    let mut out: Vec<Option<Result<SimTrace>>> = (0..scenarios.len()).map(|_| None).collect();
    {
        let cells: Vec<(usize, &Scenario)> = scenarios.iter().enumerate().collect();
        let results: std::sync::Mutex<Vec<(usize, Result<SimTrace>)>> =
            std::sync::Mutex::new(Vec::with_capacity(scenarios.len()));
        for_each_indexed(parallelism, cells, |_, (idx, scn)| {
            let r = run(scn);
            results.lock().unwrap().push((idx, r));
        });
        for (idx, r) in results.into_inner().unwrap() {
            out[idx] = Some(r);
        }
    }
    out.into_iter().map(|r| r.expect("every index filled")).collect()
}

/// Exponential decay fit of one observer error norm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObserverFit {
    pub agent: usize,
    pub label: String,
    /// `||eta - w|| <= c0 exp(-lambda0 t)` fit values.
    pub c0: f64,
    pub lambda0: f64,
    pub r_squared: f64,
    /// The norm started at (numerically) zero; no fit was attempted.
    pub converged_at_start: bool,
    /// End of the fit window (norm above the 1e-8 floor).
    pub window_end_time: f64,
    pub samples: usize,
}

/// Least-squares fit of `log ||eta_i - w||` against time over the window
/// where the norm exceeds `1e-8`, per agent. Errors with `NotApplicable`
/// on traces without observer states.
pub fn observer_convergence(trace: &SimTrace) -> Result<Vec<ObserverFit>> {
    if trace.agents.iter().all(|a| a.eta.is_none()) {
        return Err(Error::NotApplicable(
            "trace has no leader-observer states (not a full-order run)".into(),
        ));
    }
    const FLOOR: f64 = 1e-8;
    let mut fits = Vec::new();
    for (i, a) in trace.agents.iter().enumerate() {
        let Some(norms) = trace.observer_error_norms(i) else {
            continue;
        };
        let end = norms.iter().position(|&n| n <= FLOOR).unwrap_or(norms.len());
        if end < 2 {
            fits.push(ObserverFit {
                agent: i + 1,
                label: a.label.clone(),
                c0: 0.0,
                lambda0: 0.0,
                r_squared: 1.0,
                converged_at_start: true,
                window_end_time: trace.times[0],
                samples: end,
            });
            continue;
        }
        let ts = &trace.times[..end];
        let ys: Vec<f64> = norms[..end].iter().map(|n| n.ln()).collect();
        let n = end as f64;
        let mean_t = ts.iter().sum::<f64>() / n;
        let mean_y = ys.iter().sum::<f64>() / n;
        let mut sxx = 0.0;
        let mut sxy = 0.0;
        for (t, y) in ts.iter().zip(&ys) {
            sxx += (t - mean_t) * (t - mean_t);
            sxy += (t - mean_t) * (y - mean_y);
        }
        let slope = sxy / sxx;
        let intercept = mean_y - slope * mean_t;
        let mut ss_res = 0.0;
        let mut ss_tot = 0.0;
        for (t, y) in ts.iter().zip(&ys) {
            let fit = intercept + slope * t;
            ss_res += (y - fit) * (y - fit);
            ss_tot += (y - mean_y) * (y - mean_y);
        }
        let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
        fits.push(ObserverFit {
            agent: i + 1,
            label: a.label.clone(),
            c0: intercept.exp(),
            lambda0: -slope,
            r_squared,
            converged_at_start: false,
            window_end_time: trace.times[end - 1],
            samples: end,
        });
    }
    Ok(fits)
}

/// Per-agent tail behavior of one trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentTracking {
    pub agent: usize,
    pub label: String,
    /// `max |e_i|` over the tail window.
    pub tail_max_abs_error: f64,
    pub final_abs_error: f64,
    pub theta_final: Option<f64>,
    /// `theta(t_final) - theta(tail start)`; boundedness evidence.
    pub theta_tail_delta: Option<f64>,
}

/// Tail summary over the final `tail_fraction` of the horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackingReport {
    pub tail_fraction: f64,
    pub tail_start_time: f64,
    pub max_tail_error: f64,
    pub per_agent: Vec<AgentTracking>,
}

pub fn tracking_report(trace: &SimTrace, tail_fraction: f64) -> Result<TrackingReport> {
    if !(tail_fraction.is_finite() && tail_fraction > 0.0 && tail_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "tail fraction {tail_fraction} must lie in (0, 1)"
        )));
    }
    let t_end = *trace.times.last().expect("trace is non-empty");
    let tail_start_time = t_end * (1.0 - tail_fraction);
    let start = trace
        .times
        .partition_point(|&t| t < tail_start_time - 1e-12);
    let mut per_agent = Vec::with_capacity(trace.agents.len());
    let mut max_tail_error = 0.0f64;
    for (i, a) in trace.agents.iter().enumerate() {
        let tail_max = a.e[start..]
            .iter()
            .fold(0.0f64, |m, &e| m.max(e.abs()));
        max_tail_error = max_tail_error.max(tail_max);
        per_agent.push(AgentTracking {
            agent: i + 1,
            label: a.label.clone(),
            tail_max_abs_error: tail_max,
            final_abs_error: a.e.last().unwrap().abs(),
            theta_final: a.theta.as_ref().map(|th| *th.last().unwrap()),
            theta_tail_delta: a
                .theta
                .as_ref()
                .map(|th| th.last().unwrap() - th[start]),
        });
    }
    Ok(TrackingReport {
        tail_fraction,
        tail_start_time,
        max_tail_error,
        per_agent,
    })
}
