//! Turn-aware shortest path over directed arcs.
//!
//! A simple start-goal path has zero degree penalty, so its objective is its
//! edge costs, the turning terms between consecutive edges and the length
//! penalty. A backward Dijkstra over arcs gives, for each arc, the cheapest
//! completion to the goal ignoring simplicity and length. When the walk it
//! implies is a simple path within the length bounds it is optimal;
//! otherwise a depth-first branch and bound over simple paths, pruned by the
//! same completion costs, finds the optimum.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::time::Instant;

use super::route_space::Ord64;
use super::SolverResult;
use crate::model::CqmModel;

/// Default cap on branch-and-bound node expansions.
pub const DEFAULT_EXPANSION_LIMIT: u64 = 50_000_000;

struct LineGraph<'m> {
    m: &'m CqmModel,
    /// Cheapest completion cost after traversing each arc.
    h: Vec<f64>,
    /// Successor arc on that completion.
    next: Vec<usize>,
    /// Hop distance from each node to the goal.
    hops: Vec<u32>,
}

impl<'m> LineGraph<'m> {
    fn new(m: &'m CqmModel) -> Self {
        let arcs = m.arcs.len();
        let mut h = vec![f64::INFINITY; arcs];
        let mut next = vec![usize::MAX; arcs];
        let mut heap = BinaryHeap::new();
        for (a, arc) in m.arcs.iter().enumerate() {
            if arc.to == m.goal {
                h[a] = 0.0;
                heap.push(Reverse((Ord64(0.0), a)));
            }
        }
        while let Some(Reverse((Ord64(d), a2))) = heap.pop() {
            if d > h[a2] {
                continue;
            }
            let arc2 = m.arcs[a2];
            let pivot = arc2.from;
            if pivot == m.goal {
                continue;
            }
            let step = m.costs[arc2.edge] + d;
            for &e1 in &m.incident[pivot] {
                if e1 == arc2.edge {
                    continue;
                }
                let a1 = m.arc_from(e1, m.other_end(e1, pivot));
                if m.arcs[a1].to == m.goal {
                    continue;
                }
                let cand = step + turn_coef(m, e1, arc2.edge);
                if cand < h[a1] {
                    h[a1] = cand;
                    next[a1] = a2;
                    heap.push(Reverse((Ord64(cand), a1)));
                }
            }
        }
        let mut hops = vec![u32::MAX; m.nodes.len()];
        hops[m.goal] = 0;
        let mut queue = VecDeque::from([m.goal]);
        while let Some(u) = queue.pop_front() {
            for &e in &m.incident[u] {
                let v = m.other_end(e, u);
                if hops[v] == u32::MAX {
                    hops[v] = hops[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        Self { m, h, next, hops }
    }

    fn length_penalty(&self, len: u32) -> f64 {
        let b = self.m.meta.bounds;
        let short = (b.l_min as f64 - len as f64).max(0.0);
        let excess = (len as f64 - b.l_max as f64).max(0.0);
        self.m.meta.weights.w_len * (short * short + excess * excess)
    }

    /// Lower bound on the length penalty of any completion from `node` after `len` edges.
    fn length_bound(&self, len: u32, node: usize) -> f64 {
        let b = self.m.meta.bounds;
        let excess = (len as f64 + self.hops[node] as f64 - b.l_max as f64).max(0.0);
        self.m.meta.weights.w_len * excess * excess
    }

    /// Best first arc out of the start and the walk it implies.
    fn greedy_walk(&self) -> Option<(f64, Vec<usize>)> {
        let m = self.m;
        let first = m.incident[m.start]
            .iter()
            .map(|&e| m.arc_from(e, m.start))
            .filter(|&a| self.h[a].is_finite())
            .min_by(|&a, &b| (m.costs[m.arcs[a].edge] + self.h[a]).total_cmp(&(m.costs[m.arcs[b].edge] + self.h[b])).then(a.cmp(&b)))?;
        let mut walk = vec![first];
        let mut a = first;
        while m.arcs[a].to != m.goal {
            a = self.next[a];
            walk.push(a);
            if walk.len() > m.arcs.len() {
                return None;
            }
        }
        Some((m.costs[m.arcs[first].edge] + self.h[first], walk))
    }
}

fn turn_coef(m: &CqmModel, e1: usize, e2: usize) -> f64 {
    m.turn_partners[e1].iter().find(|(o, _)| *o == e2).map_or(0.0, |(_, c)| *c)
}

struct Search<'a, 'm> {
    lg: &'a LineGraph<'m>,
    visited: Vec<bool>,
    arcs: Vec<usize>,
    best: f64,
    best_arcs: Vec<usize>,
    expansions: u64,
    limit: u64,
}

impl Search<'_, '_> {
    fn dfs(&mut self, arc: usize, cost: f64) {
        let m = self.lg.m;
        self.expansions += 1;
        if self.expansions > self.limit {
            return;
        }
        let len = self.arcs.len() as u32;
        let node = m.arcs[arc].to;
        if node == m.goal {
            let total = cost + self.lg.length_penalty(len);
            if total < self.best {
                self.best = total;
                self.best_arcs = self.arcs.clone();
            }
            return;
        }
        let mut succ: Vec<(f64, usize)> = m.incident[node]
            .iter()
            .filter(|&&e| e != m.arcs[arc].edge)
            .map(|&e| m.arc_from(e, node))
            .filter(|&a| !self.visited[m.arcs[a].to] && self.lg.h[a].is_finite())
            .map(|a| (cost + turn_coef(m, m.arcs[arc].edge, m.arcs[a].edge) + m.costs[m.arcs[a].edge], a))
            .collect();
        succ.sort_by(|x, y| (x.0 + self.lg.h[x.1]).total_cmp(&(y.0 + self.lg.h[y.1])).then(x.1.cmp(&y.1)));
        for (c, a) in succ {
            let to = m.arcs[a].to;
            if c + self.lg.h[a] + self.lg.length_bound(len + 1, to) >= self.best {
                continue;
            }
            self.visited[to] = true;
            self.arcs.push(a);
            self.dfs(a, c);
            self.arcs.pop();
            self.visited[to] = false;
        }
    }
}

pub fn solve_linegraph_dijkstra(model: &CqmModel) -> SolverResult {
    solve_linegraph_with_limit(model, DEFAULT_EXPANSION_LIMIT)
}

/// Line-graph search with an explicit branch-and-bound expansion cap.
pub fn solve_linegraph_with_limit(model: &CqmModel, limit: u64) -> SolverResult {
    let t0 = Instant::now();
    let lg = LineGraph::new(model);
    let mut notes = Vec::new();
    let mut chosen: Option<Vec<usize>> = None;
    if let Some((_, walk)) = lg.greedy_walk() {
        let mut seen = vec![false; model.nodes.len()];
        seen[model.start] = true;
        let simple = walk.iter().all(|&a| !std::mem::replace(&mut seen[model.arcs[a].to], true));
        let len = walk.len() as u32;
        let b = model.meta.bounds;
        if simple && len >= b.l_min && len <= b.l_max {
            chosen = Some(walk);
        }
    }
    if chosen.is_none() && lg.hops[model.start] != u32::MAX {
        let mut search = Search {
            lg: &lg,
            visited: vec![false; model.nodes.len()],
            arcs: Vec::new(),
            best: f64::INFINITY,
            best_arcs: Vec::new(),
            expansions: 0,
            limit,
        };
        search.visited[model.start] = true;
        for &e in &model.incident[model.start] {
            let a = model.arc_from(e, model.start);
            let to = model.arcs[a].to;
            let c = model.costs[e];
            if !lg.h[a].is_finite() || c + lg.h[a] + lg.length_bound(1, to) >= search.best {
                continue;
            }
            search.visited[to] = true;
            search.arcs.push(a);
            search.dfs(a, c);
            search.arcs.pop();
            search.visited[to] = false;
        }
        if search.expansions > limit {
            notes.push(format!("branch and bound stopped after {limit} expansions; result may be suboptimal"));
        }
        if search.best.is_finite() {
            chosen = Some(search.best_arcs);
        }
    }
    let mut bits = vec![false; model.edges.len()];
    match &chosen {
        Some(arcs) => {
            for &a in arcs {
                bits[model.arcs[a].edge] = true;
            }
        }
        None => notes.push("no start-goal path exists".into()),
    }
    let mut r = SolverResult::from_bits(model, &bits, "linegraph", 0, t0.elapsed());
    r.notes = notes;
    r
}
