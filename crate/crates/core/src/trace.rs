//! Time-indexed simulation record and its delimited-text export.

use std::io::{self, Write};

use crate::controllers::ControlLaw;

/// Column-compressed series: `dim` values per time step, stored row-major.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SeriesMat {
    dim: usize,
    data: Vec<f64>,
}

impl SeriesMat {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            data: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn push_row(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.dim);
        self.data.extend_from_slice(row);
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }
}

/// Leader-side series.
#[derive(Clone, Debug, PartialEq)]
pub struct LeaderSeries {
    pub w: SeriesMat,
    pub v: Vec<f64>,
    pub y_r: Vec<f64>,
}

/// Per-agent series. Optional blocks mirror the law's compensator shape.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentSeries {
    pub label: String,
    pub z: SeriesMat,
    pub x: SeriesMat,
    pub chain_ext: SeriesMat,
    pub xi: SeriesMat,
    pub eta: Option<SeriesMat>,
    pub theta: Option<Vec<f64>>,
    pub u: Vec<f64>,
    /// Tracking error `e = y - y_r`.
    pub e: Vec<f64>,
}

/// Full record of one run; every series shares the time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SimTrace {
    pub times: Vec<f64>,
    pub leader: LeaderSeries,
    pub agents: Vec<AgentSeries>,
    pub law: ControlLaw,
    pub dt: f64,
    pub t_final: f64,
    pub seed: Option<u64>,
}

impl SimTrace {
    pub fn steps(&self) -> usize {
        self.times.len()
    }

    /// `||eta_i(t) - w(t)||_2` per step, when the run carried observers.
    pub fn observer_error_norms(&self, agent: usize) -> Option<Vec<f64>> {
        let eta = self.agents[agent].eta.as_ref()?;
        let mut out = Vec::with_capacity(self.times.len());
        for k in 0..self.times.len() {
            let w = self.leader.w.row(k);
            let e = eta.row(k);
            let mut acc = 0.0;
            for (a, b) in e.iter().zip(w) {
                acc += (a - b) * (a - b);
            }
            out.push(acc.sqrt());
        }
        Some(out)
    }

    /// Header row naming every column, in the fixed export order:
    /// `t, w, v, y_r`, then per agent `z, x, xc (chain extension), xi,
    /// eta, u, e, theta`.
    pub fn csv_header(&self) -> String {
        let mut cols: Vec<String> = vec!["t".into()];
        for j in 0..self.leader.w.dim() {
            cols.push(format!("w{}", j + 1));
        }
        cols.push("v".into());
        cols.push("y_r".into());
        for (i, a) in self.agents.iter().enumerate() {
            let n = i + 1;
            for j in 0..a.z.dim() {
                cols.push(format!("a{n}_z{}", j + 1));
            }
            for j in 0..a.x.dim() {
                cols.push(format!("a{n}_x{}", j + 1));
            }
            for j in 0..a.chain_ext.dim() {
                cols.push(format!("a{n}_xc{}", j + 1));
            }
            for j in 0..a.xi.dim() {
                cols.push(format!("a{n}_xi{}", j + 1));
            }
            if let Some(eta) = &a.eta {
                for j in 0..eta.dim() {
                    cols.push(format!("a{n}_eta{}", j + 1));
                }
            }
            cols.push(format!("a{n}_u"));
            cols.push(format!("a{n}_e"));
            if a.theta.is_some() {
                cols.push(format!("a{n}_theta"));
            }
        }
        cols.join(",")
    }

    /// Write the comma-separated trace: '.' decimal marks, 17 significant
    /// digits so every f64 round-trips exactly.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{}", self.csv_header())?;
        let mut line = String::new();
        for k in 0..self.times.len() {
            line.clear();
            push_num(&mut line, self.times[k]);
            for &v in self.leader.w.row(k) {
                line.push(',');
                push_num(&mut line, v);
            }
            line.push(',');
            push_num(&mut line, self.leader.v[k]);
            line.push(',');
            push_num(&mut line, self.leader.y_r[k]);
            for a in &self.agents {
                for &v in a.z.row(k) {
                    line.push(',');
                    push_num(&mut line, v);
                }
                for &v in a.x.row(k) {
                    line.push(',');
                    push_num(&mut line, v);
                }
                for &v in a.chain_ext.row(k) {
                    line.push(',');
                    push_num(&mut line, v);
                }
                for &v in a.xi.row(k) {
                    line.push(',');
                    push_num(&mut line, v);
                }
                if let Some(eta) = &a.eta {
                    for &v in eta.row(k) {
                        line.push(',');
                        push_num(&mut line, v);
                    }
                }
                line.push(',');
                push_num(&mut line, a.u[k]);
                line.push(',');
                push_num(&mut line, a.e[k]);
                if let Some(theta) = &a.theta {
                    line.push(',');
                    push_num(&mut line, theta[k]);
                }
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is ascii")
    }
}

fn push_num(buf: &mut String, v: f64) {
    use std::fmt::Write as _;
    // 16 digits after the mantissa point = 17 significant digits.
    write!(buf, "{v:.16e}").expect("formatting f64");
}
