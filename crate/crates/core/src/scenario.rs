//! Declarative scenario documents (TOML) and their validation.
//!
//! A scenario file has `[graph]`, `[leader]`, `[[agents]]`, `[controller]`,
//! `[sim]` and optional `[output]` sections. Agents are declared by builtin
//! name plus parameters, or explicitly by `(a0, nx, f, g)` with polynomial
//! nonlinearities. Loading runs every load-time assumption check and
//! returns field-precise diagnostics.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::controllers::ControlLaw;
use crate::error::{Error, Result};
use crate::graph::Digraph;
use crate::plant::{AgentModel, InputPolicyKind, LeaderInputPolicy};
use crate::poly::PolyExpr;
use crate::sim::{
    AgentInit, ControllerConfig, ExplicitInit, InitSpec, OutputPaths, Scenario,
};
use crate::synthesis::LeaderModel;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    #[serde(skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    graph: GraphDoc,
    leader: LeaderDoc,
    agents: Vec<AgentDoc>,
    controller: ControllerDoc,
    sim: SimDoc,
    #[serde(skip_serializing_if = "Option::is_none")]
    output: Option<OutputPaths>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphDoc {
    nodes: usize,
    edges: Vec<EdgeDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeDoc {
    from: usize,
    to: usize,
    #[serde(default = "one")]
    weight: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LeaderDoc {
    dim: usize,
    s_bottom_row: Vec<f64>,
    d_last: f64,
    #[serde(default)]
    input_bound: f64,
    #[serde(default = "default_true")]
    bound_check: bool,
    #[serde(default)]
    private: bool,
    #[serde(default)]
    input: InputDoc,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum InputDoc {
    #[default]
    Zero,
    StateFeedback {
        gain: Vec<f64>,
    },
    Constant {
        value: f64,
    },
    Sinusoid {
        amplitude: f64,
        omega: f64,
        #[serde(default)]
        phase: f64,
    },
    Tabulated {
        times: Vec<f64>,
        values: Vec<f64>,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentDoc {
    #[serde(skip_serializing_if = "Option::is_none")]
    builtin: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    params: Option<BuiltinParamsDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    nx: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    a0: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    f: Option<Vec<PolyExpr>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    g: Option<PolyExpr>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BuiltinParamsDoc {
    #[serde(skip_serializing_if = "Option::is_none")]
    a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    c: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ControllerDoc {
    law: ControlLaw,
    #[serde(skip_serializing_if = "Option::is_none")]
    epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    k0_poles: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    q_state: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    q_observer: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    safety_factor: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimDoc {
    #[serde(skip_serializing_if = "Option::is_none")]
    dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_final: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    init_box: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    initial: Option<InitialDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitialDoc {
    w: Vec<f64>,
    agents: Vec<AgentInitDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentInitDoc {
    #[serde(default)]
    z: Vec<f64>,
    x: Vec<f64>,
    #[serde(default)]
    chain_ext: Vec<f64>,
    #[serde(default)]
    xi: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eta: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    theta: Option<f64>,
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::Parse(format!("{what} must be a square row-major matrix")));
    }
    let mut m = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    Ok(m)
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn agent_from_doc(idx: usize, doc: &AgentDoc) -> Result<AgentModel> {
    if let Some(builtin) = &doc.builtin {
        let p = doc.params.as_ref();
        let get = |v: Option<f64>| v.unwrap_or(1.0);
        return match builtin.as_str() {
            "damping_oscillator" => Ok(AgentModel::damping_oscillator()),
            "fitzhugh_nagumo" => AgentModel::fitzhugh_nagumo(
                get(p.and_then(|p| p.a)),
                get(p.and_then(|p| p.b)),
                get(p.and_then(|p| p.c)),
            ),
            "van_der_pol" => Ok(AgentModel::van_der_pol(get(p.and_then(|p| p.a)))),
            other => Err(Error::Parse(format!(
                "agent {}: unknown builtin '{other}' (expected damping_oscillator, \
                 fitzhugh_nagumo or van_der_pol)",
                idx + 1
            ))),
        };
    }
    let nx = doc.nx.ok_or_else(|| {
        Error::Parse(format!("agent {}: explicit agents need 'nx'", idx + 1))
    })?;
    let a0 = match &doc.a0 {
        Some(rows) => matrix_from_rows(rows, &format!("agent {} a0", idx + 1))?,
        None => DMatrix::zeros(0, 0),
    };
    let g = doc.g.clone().ok_or_else(|| {
        Error::Parse(format!("agent {}: explicit agents need 'g'", idx + 1))
    })?;
    let f = doc.f.clone().unwrap_or_default();
    let label = doc
        .label
        .clone()
        .unwrap_or_else(|| format!("agent{}", idx + 1));
    AgentModel::new(label, a0, nx, f, g)
}

fn agent_to_doc(m: &AgentModel) -> AgentDoc {
    AgentDoc {
        builtin: None,
        params: None,
        label: Some(m.label.clone()),
        nx: Some(m.nx),
        a0: Some(matrix_to_rows(&m.a0)),
        f: Some(m.f.clone()),
        g: Some(m.g.clone()),
    }
}

fn doc_to_scenario(doc: ScenarioDoc) -> Result<Scenario> {
    let edges: Vec<(usize, usize, f64)> = doc
        .graph
        .edges
        .iter()
        .map(|e| (e.from, e.to, e.weight))
        .collect();
    let graph = Digraph::from_edges(doc.graph.nodes, &edges)?;

    if doc.leader.dim != doc.leader.s_bottom_row.len() {
        return Err(Error::Parse(format!(
            "leader dim = {} disagrees with s_bottom_row length {}",
            doc.leader.dim,
            doc.leader.s_bottom_row.len()
        )));
    }
    let leader = LeaderModel::new(
        doc.leader.s_bottom_row.clone(),
        doc.leader.d_last,
        doc.leader.input_bound,
    )?;
    let kind = match doc.leader.input {
        InputDoc::Zero => InputPolicyKind::Zero,
        InputDoc::StateFeedback { gain } => InputPolicyKind::StateFeedback(gain),
        InputDoc::Constant { value } => InputPolicyKind::Constant(value),
        InputDoc::Sinusoid {
            amplitude,
            omega,
            phase,
        } => InputPolicyKind::Sinusoid {
            amplitude,
            omega,
            phase,
        },
        InputDoc::Tabulated { times, values } => InputPolicyKind::Tabulated { times, values },
    };
    let input_policy = LeaderInputPolicy {
        kind,
        bound_check: doc.leader.bound_check,
        private: doc.leader.private,
    };

    let agents = doc
        .agents
        .iter()
        .enumerate()
        .map(|(i, a)| agent_from_doc(i, a))
        .collect::<Result<Vec<_>>>()?;

    let mut controller = ControllerConfig::new(doc.controller.law);
    if let Some(e) = doc.controller.epsilon {
        controller.epsilon = e;
    }
    if let Some(s) = doc.controller.sigma {
        controller.sigma = s;
    }
    controller.k0_poles = doc.controller.k0_poles.clone();
    if let Some(q) = &doc.controller.q_state {
        controller.q_state = Some(matrix_from_rows(q, "controller q_state")?);
    }
    if let Some(q) = &doc.controller.q_observer {
        controller.q_observer = Some(matrix_from_rows(q, "controller q_observer")?);
    }
    if let Some(sf) = doc.controller.safety_factor {
        controller.safety_factor = sf;
    }

    let init = match doc.sim.initial {
        Some(init) => InitSpec::Explicit(ExplicitInit {
            w: init.w,
            agents: init
                .agents
                .into_iter()
                .map(|a| AgentInit {
                    z: a.z,
                    x: a.x,
                    chain_ext: a.chain_ext,
                    xi: a.xi,
                    eta: a.eta,
                    theta: a.theta,
                })
                .collect(),
        }),
        None => {
            let [low, high] = doc.sim.init_box.unwrap_or([-3.0, 3.0]);
            InitSpec::Seeded {
                seed: doc.sim.seed.unwrap_or(0),
                low,
                high,
            }
        }
    };

    let scenario = Scenario {
        name: doc.name.unwrap_or_else(|| "scenario".into()),
        graph,
        leader,
        input_policy,
        agents,
        controller,
        init,
        dt: doc.sim.dt.unwrap_or(1e-3),
        t_final: doc.sim.t_final.unwrap_or(30.0),
        output: doc.output.unwrap_or_default(),
    };
    scenario.validate()?;
    Ok(scenario)
}

fn scenario_to_doc(scn: &Scenario) -> ScenarioDoc {
    let n = scn.graph.node_count();
    let a = scn.graph.adjacency();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if a[(i, j)] > 0.0 {
                edges.push(EdgeDoc {
                    from: j,
                    to: i,
                    weight: a[(i, j)],
                });
            }
        }
    }
    let input = match &scn.input_policy.kind {
        InputPolicyKind::Zero => InputDoc::Zero,
        InputPolicyKind::StateFeedback(gain) => InputDoc::StateFeedback { gain: gain.clone() },
        InputPolicyKind::Constant(value) => InputDoc::Constant { value: *value },
        InputPolicyKind::Sinusoid {
            amplitude,
            omega,
            phase,
        } => InputDoc::Sinusoid {
            amplitude: *amplitude,
            omega: *omega,
            phase: *phase,
        },
        InputPolicyKind::Tabulated { times, values } => InputDoc::Tabulated {
            times: times.clone(),
            values: values.clone(),
        },
    };
    let (seed, init_box, initial) = match &scn.init {
        InitSpec::Seeded { seed, low, high } => (Some(*seed), Some([*low, *high]), None),
        InitSpec::Explicit(init) => (
            None,
            None,
            Some(InitialDoc {
                w: init.w.clone(),
                agents: init
                    .agents
                    .iter()
                    .map(|a| AgentInitDoc {
                        z: a.z.clone(),
                        x: a.x.clone(),
                        chain_ext: a.chain_ext.clone(),
                        xi: a.xi.clone(),
                        eta: a.eta.clone(),
                        theta: a.theta,
                    })
                    .collect(),
            }),
        ),
    };
    ScenarioDoc {
        name: Some(scn.name.clone()),
        graph: GraphDoc {
            nodes: n,
            edges,
        },
        leader: LeaderDoc {
            dim: scn.leader.dim(),
            s_bottom_row: scn.leader.s_bottom().to_vec(),
            d_last: scn.leader.d_last(),
            input_bound: scn.leader.input_bound(),
            bound_check: scn.input_policy.bound_check,
            private: scn.input_policy.private,
            input,
        },
        agents: scn.agents.iter().map(agent_to_doc).collect(),
        controller: ControllerDoc {
            law: scn.controller.law,
            epsilon: Some(scn.controller.epsilon),
            sigma: Some(scn.controller.sigma),
            k0_poles: scn.controller.k0_poles.clone(),
            q_state: scn.controller.q_state.as_ref().map(matrix_to_rows),
            q_observer: scn.controller.q_observer.as_ref().map(matrix_to_rows),
            safety_factor: Some(scn.controller.safety_factor),
        },
        sim: SimDoc {
            dt: Some(scn.dt),
            t_final: Some(scn.t_final),
            seed,
            init_box,
            initial,
        },
        output: Some(scn.output.clone()),
    }
}

/// Parse a scenario document from TOML text; diagnostics carry line/column
/// information from the parser, and every load-time assumption is checked.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let doc: ScenarioDoc =
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string().trim_end().to_string()))?;
    doc_to_scenario(doc)
}

/// Load and validate a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let text = std::fs::read_to_string(path.as_ref())?;
    parse_scenario(&text)
}

/// Serialize a scenario into normalized TOML (agents in explicit form).
pub fn scenario_to_toml(scn: &Scenario) -> String {
    toml::to_string(&scenario_to_doc(scn)).expect("scenario serializes")
}

/// Write the normalized form of a scenario.
pub fn save_scenario(scn: &Scenario, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path.as_ref(), scenario_to_toml(scn))?;
    Ok(())
}

/// Names of the scenario documents compiled into the library.
pub fn builtin_names() -> &'static [&'static str] {
    &["paper_fig2a", "paper_fig2b"]
}

/// Source text of a bundled scenario document.
pub fn builtin_scenario(name: &str) -> Option<&'static str> {
    match name {
        "paper_fig2a" => Some(include_str!("../scenarios/paper_fig2a.toml")),
        "paper_fig2b" => Some(include_str!("../scenarios/paper_fig2b.toml")),
        _ => None,
    }
}

/// Load a bundled scenario by name.
pub fn load_builtin(name: &str) -> Result<Scenario> {
    let text = builtin_scenario(name).ok_or_else(|| {
        Error::Parse(format!(
            "unknown builtin scenario '{name}' (available: {})",
            builtin_names().join(", ")
        ))
    })?;
    parse_scenario(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_fig2a_parses_to_the_programmatic_scenario() {
        let loaded = load_builtin("paper_fig2a").unwrap();
        let built = Scenario::paper_fig2a(7);
        assert_eq!(loaded, built);
    }

    #[test]
    fn bundled_pair_differs_only_in_input_policy() {
        let a = load_builtin("paper_fig2a").unwrap();
        let mut b = load_builtin("paper_fig2b").unwrap();
        assert_ne!(a.input_policy.kind, b.input_policy.kind);
        b.input_policy.kind = a.input_policy.kind.clone();
        b.name = a.name.clone();
        assert_eq!(a, b);
    }

    #[test]
    fn roundtrip_preserves_scenario_value() {
        for name in builtin_names() {
            let scn = load_builtin(name).unwrap();
            let text = scenario_to_toml(&scn);
            let back = parse_scenario(&text).unwrap();
            assert_eq!(scn, back);
        }
        // Explicit-init scenarios round-trip too.
        let scn = Scenario::perfect_start(ControlLaw::FullOrder);
        let back = parse_scenario(&scenario_to_toml(&scn)).unwrap();
        assert_eq!(scn, back);
    }

    #[test]
    fn parse_error_is_line_precise() {
        let err = parse_scenario("[graph]\nnodes = \"four\"\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "diagnostic was: {msg}");
    }

    #[test]
    fn missing_leader_edge_names_assumption_1() {
        let mut text = builtin_scenario("paper_fig2a").unwrap().to_string();
        text = text.replace("{ from = 0, to = 3, weight = 1.0 },\n", "");
        let err = parse_scenario(&text).unwrap_err();
        match err {
            Error::Validation { assumption, .. } => assert!(assumption.contains("Assumption 1")),
            other => panic!("expected validation error, got {other}"),
        }
    }

    #[test]
    fn long_chain_names_assumption_2() {
        let mut scn = Scenario::paper_fig2a(1);
        scn.agents[0] = AgentModel::new(
            "chain3",
            DMatrix::zeros(0, 0),
            3,
            vec![],
            PolyExpr::zero(),
        )
        .unwrap();
        let text = scenario_to_toml(&scn);
        let err = parse_scenario(&text).unwrap_err();
        match err {
            Error::Validation { assumption, .. } => assert!(assumption.contains("Assumption 2")),
            other => panic!("expected validation error, got {other}"),
        }
    }

    #[test]
    fn invalid_builtin_parameter_fails_load() {
        let mut text = builtin_scenario("paper_fig2a").unwrap().to_string();
        text = text.replace("c = 1.0", "c = 0.0");
        assert!(matches!(
            parse_scenario(&text),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn unknown_field_is_rejected() {
        let mut text = builtin_scenario("paper_fig2a").unwrap().to_string();
        text.push_str("\n[extra]\nfoo = 1\n");
        assert!(matches!(parse_scenario(&text), Err(Error::Parse(_))));
    }
}
