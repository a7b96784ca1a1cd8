use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::cqm::{CqmModel, Sense, Var};

/// Absolute tolerance for hard constraints, bounds and integrality.
pub const FEASIBILITY_TOL: f64 = 1e-6;

/// Values for every model variable, aligned with the model's indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// Edge activations, one per model edge.
    pub x: Vec<f64>,
    /// Arc flows, one per model arc.
    pub f: Vec<f64>,
    pub shortfall: f64,
    pub excess: f64,
}

impl Assignment {
    pub fn zeros(model: &CqmModel) -> Self {
        Self {
            x: vec![0.0; model.edges.len()],
            f: vec![0.0; model.arcs.len()],
            shortfall: 0.0,
            excess: 0.0,
        }
    }

    /// Completes a binary edge selection: unit flow along one start-goal path
    /// of the active subgraph (fewest hops, smallest indices first) when one
    /// exists, and the smallest feasible slacks.
    pub fn complete(model: &CqmModel, active: &[bool]) -> Self {
        let mut a = Self::zeros(model);
        for (e, &on) in active.iter().enumerate() {
            if on {
                a.x[e] = 1.0;
            }
        }
        if let Some(path) = active_path(model, active) {
            for w in path.windows(2) {
                let e = model.edge_between(w[0], w[1]).expect("path follows edges");
                a.f[model.arc_from(e, w[0])] = 1.0;
            }
        }
        let count = active.iter().filter(|&&b| b).count() as f64;
        a.shortfall = (model.meta.bounds.l_min as f64 - count).max(0.0);
        a.excess = (count - model.meta.bounds.l_max as f64).max(0.0);
        a
    }

    pub fn value(&self, v: Var) -> f64 {
        match v {
            Var::Edge(e) => self.x[e],
            Var::Flow(a) => self.f[a],
            Var::Shortfall => self.shortfall,
            Var::Excess => self.excess,
        }
    }

    pub fn set(&mut self, v: Var, value: f64) {
        match v {
            Var::Edge(e) => self.x[e] = value,
            Var::Flow(a) => self.f[a] = value,
            Var::Shortfall => self.shortfall = value,
            Var::Excess => self.excess = value,
        }
    }

    /// Indices of edges with `x > threshold`.
    pub fn active_edges(&self, threshold: f64) -> Vec<usize> {
        self.x.iter().enumerate().filter(|(_, &v)| v > threshold).map(|(e, _)| e).collect()
    }
}

/// Breadth-first start-goal node path over active edges.
pub(crate) fn active_path(model: &CqmModel, active: &[bool]) -> Option<Vec<usize>> {
    let mut prev = vec![usize::MAX; model.nodes.len()];
    prev[model.start] = model.start;
    let mut queue = VecDeque::from([model.start]);
    while let Some(u) = queue.pop_front() {
        if u == model.goal {
            let mut path = vec![u];
            let mut v = u;
            while v != model.start {
                v = prev[v];
                path.push(v);
            }
            path.reverse();
            return Some(path);
        }
        for &e in &model.incident[u] {
            if !active[e] {
                continue;
            }
            let v = model.other_end(e, u);
            if prev[v] == usize::MAX {
                prev[v] = u;
                queue.push_back(v);
            }
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: String,
    pub magnitude: f64,
}

/// Term-by-term objective and hard-constraint check of one assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub objective: f64,
    pub linear: f64,
    pub quadratic: f64,
    pub degree: f64,
    pub length: f64,
    pub violations: Vec<Violation>,
    pub feasible: bool,
}

/// Evaluates an assignment directly from the model's terms and constraint
/// list, independently of any solver bookkeeping.
pub fn evaluate(model: &CqmModel, a: &Assignment) -> Evaluation {
    let mut violations = Vec::new();
    if a.x.len() != model.edges.len() || a.f.len() != model.arcs.len() {
        violations.push(Violation {
            constraint: "shape".into(),
            magnitude: (a.x.len().abs_diff(model.edges.len()) + a.f.len().abs_diff(model.arcs.len())) as f64,
        });
        return Evaluation {
            objective: f64::NAN,
            linear: f64::NAN,
            quadratic: f64::NAN,
            degree: f64::NAN,
            length: f64::NAN,
            violations,
            feasible: false,
        };
    }
    let w = &model.meta.weights;
    let linear: f64 = model.costs.iter().zip(&a.x).map(|(c, x)| c * x).sum();
    let quadratic: f64 = model.turns.iter().map(|t| t.coef * a.x[t.a] * a.x[t.b]).sum();
    let degree: f64 = w.w_deg
        * model
            .degree
            .iter()
            .map(|b| {
                let k: f64 = b.edges.iter().map(|&e| a.x[e]).sum();
                let d = b.target as f64;
                k * (k - d) * (k - d) / d
            })
            .sum::<f64>();
    let length = w.w_len * (a.shortfall * a.shortfall + a.excess * a.excess);

    for con in model.constraints() {
        let lhs: f64 = con.terms.iter().map(|&(v, coef)| coef * a.value(v)).sum();
        let gap = match con.sense {
            Sense::Eq => (lhs - con.rhs).abs(),
            Sense::Le => lhs - con.rhs,
            Sense::Ge => con.rhs - lhs,
        };
        if gap > FEASIBILITY_TOL {
            violations.push(Violation {
                constraint: con.name,
                magnitude: gap,
            });
        }
    }
    for (e, &x) in a.x.iter().enumerate() {
        let off = x.abs().min((x - 1.0).abs());
        if off > FEASIBILITY_TOL || !x.is_finite() {
            violations.push(Violation {
                constraint: format!("binary_{}", model.edges[e].var_name()),
                magnitude: off,
            });
        }
    }
    for (k, &f) in a.f.iter().enumerate() {
        let off = (f - f.clamp(0.0, 1.0)).abs();
        if off > FEASIBILITY_TOL || !f.is_finite() {
            violations.push(Violation {
                constraint: format!("bounds_{}", model.var_name(Var::Flow(k))),
                magnitude: off,
            });
        }
    }
    for (v, s) in [(Var::Shortfall, a.shortfall), (Var::Excess, a.excess)] {
        if s < -FEASIBILITY_TOL || !s.is_finite() {
            violations.push(Violation {
                constraint: format!("bounds_{}", model.var_name(v)),
                magnitude: -s,
            });
        }
    }
    Evaluation {
        objective: linear + quadratic + degree + length,
        linear,
        quadratic,
        degree,
        length,
        feasible: violations.is_empty(),
        violations,
    }
}
