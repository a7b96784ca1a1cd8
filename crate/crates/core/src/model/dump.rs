//! Canonical text form of a model.
//!
//! ```text
//! icepath-cqm 1
//! start <cell>
//! goal <cell>
//! bounds <l_min> <l_max>
//! calibration <hash>
//! weight <name> <value>            one per weight
//! node <cell> <lat> <lon>          sorted by cell
//! var <name> binary                edges, sorted
//! var <name> continuous 0 1        arcs, in edge order
//! var s_short continuous 0 inf
//! var s_excess continuous 0 inf
//! linear <var> <coef>
//! quadratic <var> <var> <coef>     sorted by edge pair
//! degree <cell> <target> <var>...  contribution w_deg * k (k - d)^2 / d
//! square <var> <coef>              coef * var^2
//! constraint <name> <sense> <rhs> <coef> <var> ...
//! ```
//!
//! Floats use the shortest representation that reads back exactly, so the
//! dump is stable across platforms.

use std::fmt::Write as _;

use super::cqm::{CqmModel, Sense, Var};
use super::{EdgeKey, ModelError, PathBounds, Weights};
use crate::geo::GeoPoint;
use crate::hexgrid::CellId;

const MAGIC: &str = "icepath-cqm 1";

impl CqmModel {
    pub fn to_dump(&self) -> String {
        let mut out = String::new();
        let m = &self.meta;
        writeln!(out, "{MAGIC}").unwrap();
        writeln!(out, "start {}", m.start).unwrap();
        writeln!(out, "goal {}", m.goal).unwrap();
        writeln!(out, "bounds {} {}", m.bounds.l_min, m.bounds.l_max).unwrap();
        writeln!(out, "calibration {}", m.calibration_hash).unwrap();
        for (name, v) in m.weights.named() {
            writeln!(out, "weight {name} {v}").unwrap();
        }
        for (id, p) in self.nodes.iter().zip(&self.centroids) {
            writeln!(out, "node {id} {} {}", p.lat, p.lon).unwrap();
        }
        for e in &self.edges {
            writeln!(out, "var {} binary", e.var_name()).unwrap();
        }
        for a in 0..self.arcs.len() {
            writeln!(out, "var {} continuous 0 1", self.var_name(Var::Flow(a))).unwrap();
        }
        writeln!(out, "var s_short continuous 0 inf").unwrap();
        writeln!(out, "var s_excess continuous 0 inf").unwrap();
        for (e, c) in self.costs.iter().enumerate() {
            writeln!(out, "linear {} {c}", self.var_name(Var::Edge(e))).unwrap();
        }
        for t in &self.turns {
            writeln!(out, "quadratic {} {} {}", self.var_name(Var::Edge(t.a)), self.var_name(Var::Edge(t.b)), t.coef).unwrap();
        }
        for b in &self.degree {
            write!(out, "degree {} {}", self.nodes[b.node], b.target).unwrap();
            for &e in &b.edges {
                write!(out, " {}", self.var_name(Var::Edge(e))).unwrap();
            }
            out.push('\n');
        }
        writeln!(out, "square s_short {}", m.weights.w_len).unwrap();
        writeln!(out, "square s_excess {}", m.weights.w_len).unwrap();
        for con in self.constraints() {
            let sense = match con.sense {
                Sense::Eq => "=",
                Sense::Le => "<=",
                Sense::Ge => ">=",
            };
            write!(out, "constraint {} {sense} {}", con.name, con.rhs).unwrap();
            for (v, coef) in con.terms {
                write!(out, " {coef} {}", self.var_name(v)).unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Parses a dump. The model is rebuilt from its header, nodes, edges and
    /// linear costs, and must reproduce every remaining line exactly.
    pub fn from_dump(text: &str) -> Result<Self, ModelError> {
        let err = |line: usize, message: String| ModelError::Dump { line, message };
        let mut lines = text.lines().enumerate().map(|(n, l)| (n + 1, l));
        match lines.next() {
            Some((_, MAGIC)) => {}
            _ => return Err(err(1, format!("expected {MAGIC:?}"))),
        }
        let mut start = None;
        let mut goal = None;
        let mut bounds = None;
        let mut hash = None;
        let mut weights = Weights::default();
        let mut nodes = Vec::new();
        let mut edges: Vec<(EdgeKey, f64)> = Vec::new();
        let mut costs = std::collections::BTreeMap::new();

        for (n, line) in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            let cell = |s: &str| s.parse::<CellId>().map_err(|e| err(n, e.to_string()));
            let num = |s: &str| s.parse::<f64>().map_err(|_| err(n, format!("bad number {s:?}")));
            match f.as_slice() {
                ["start", c] => start = Some(cell(c)?),
                ["goal", c] => goal = Some(cell(c)?),
                ["bounds", a, b] => {
                    let p = |s: &str| s.parse::<u32>().map_err(|_| err(n, format!("bad bound {s:?}")));
                    bounds = Some(PathBounds::new(p(a)?, p(b)?)?);
                }
                ["calibration", h] => hash = Some(h.to_string()),
                ["weight", name, v] => {
                    if !weights.set(name, num(v)?) {
                        return Err(err(n, format!("unknown weight {name:?}")));
                    }
                }
                ["node", c, lat, lon] => {
                    let p = GeoPoint::new(num(lat)?, num(lon)?).map_err(|e| err(n, e.to_string()))?;
                    nodes.push((cell(c)?, p));
                }
                ["var", name, "binary"] => {
                    let (a, b) = name
                        .strip_prefix("x_")
                        .and_then(|r| r.split_once('_'))
                        .ok_or_else(|| err(n, format!("bad edge variable {name:?}")))?;
                    let key = EdgeKey::new(cell(a)?, cell(b)?).ok_or_else(|| err(n, "self loop".into()))?;
                    edges.push((key, 0.0));
                }
                ["linear", name, c] => {
                    costs.insert(name.to_string(), num(c)?);
                }
                [] | ["var", ..] | ["quadratic", ..] | ["degree", ..] | ["square", ..] | ["constraint", ..] => {}
                _ => return Err(err(n, format!("unrecognised line {line:?}"))),
            }
        }
        for (key, c) in &mut edges {
            *c = *costs
                .get(&key.var_name())
                .ok_or_else(|| err(0, format!("no linear term for {}", key.var_name())))?;
        }
        let model = CqmModel::from_parts(
            nodes,
            edges,
            start.ok_or_else(|| err(0, "missing start".into()))?,
            goal.ok_or_else(|| err(0, "missing goal".into()))?,
            bounds.ok_or_else(|| err(0, "missing bounds".into()))?,
            weights,
            hash.ok_or_else(|| err(0, "missing calibration".into()))?,
        )?;
        let canonical = model.to_dump();
        for (k, (got, want)) in text.lines().zip(canonical.lines()).enumerate() {
            if got != want {
                return Err(err(k + 1, format!("not canonical: expected {want:?}")));
            }
        }
        if text.lines().count() != canonical.lines().count() {
            return Err(err(0, "line count differs from the canonical dump".into()));
        }
        Ok(model)
    }
}
