use std::cell::Cell;
use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{AnnealSpace, SearchSpace};
use crate::model::{degree_penalty, CqmModel};

/// Probability of a path-mutation move during annealing.
const PATH_MOVE_PROB: f64 = 0.1;
/// Longest subpath replaced by one path-mutation move, in edges.
const MAX_SEGMENT: usize = 6;

/// Edge-selection view of a routing model. Flows and slacks are implied:
/// a selection is feasible when it joins start and goal, and the slacks take
/// their smallest admissible values.
pub struct RouteSpace<'m> {
    pub model: &'m CqmModel,
    penalty: f64,
}

#[derive(Debug, Clone)]
pub struct RouteState {
    bits: Vec<bool>,
    degree: Vec<u32>,
    count: usize,
    energy: f64,
    /// Active edges in arbitrary order, with each edge's position.
    active: Vec<usize>,
    pos: Vec<usize>,
    reachable: Cell<Option<bool>>,
}

impl<'m> RouteSpace<'m> {
    pub fn new(model: &'m CqmModel) -> Self {
        let mut space = Self { model, penalty: 1.0 };
        let costs = model.costs.clone();
        if let Some(path) = space.cheapest_path(model.start, model.goal, &costs, &[]) {
            let mut bits = vec![false; model.edges.len()];
            for e in path {
                bits[e] = true;
            }
            space.penalty = 2.0 * space.exact_energy(&bits).abs() + 1.0;
        }
        space
    }

    fn length_penalty(&self, count: usize) -> f64 {
        let b = self.model.meta.bounds;
        let c = count as f64;
        let short = (b.l_min as f64 - c).max(0.0);
        let excess = (c - b.l_max as f64).max(0.0);
        self.model.meta.weights.w_len * (short * short + excess * excess)
    }

    fn degree_term(&self, node: usize, k: u32) -> f64 {
        self.model.meta.weights.w_deg * degree_penalty(k, self.model.degree[node].target)
    }

    /// Start-goal node path over the active edges, fewest hops first.
    pub fn path_nodes(&self, s: &RouteState) -> Option<Vec<usize>> {
        let m = self.model;
        let mut prev = vec![usize::MAX; m.nodes.len()];
        prev[m.start] = m.start;
        let mut queue = VecDeque::from([m.start]);
        while let Some(u) = queue.pop_front() {
            if u == m.goal {
                let mut path = vec![u];
                let mut v = u;
                while v != m.start {
                    v = prev[v];
                    path.push(v);
                }
                path.reverse();
                return Some(path);
            }
            for &e in &m.incident[u] {
                if s.bits[e] {
                    let v = m.other_end(e, u);
                    if prev[v] == usize::MAX {
                        prev[v] = u;
                        queue.push_back(v);
                    }
                }
            }
        }
        None
    }

    /// Cheapest edge path between two nodes under `costs`, never entering
    /// `blocked` nodes.
    fn cheapest_path(&self, from: usize, to: usize, costs: &[f64], blocked: &[bool]) -> Option<Vec<usize>> {
        let m = self.model;
        let n = m.nodes.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut via = vec![usize::MAX; n];
        let mut heap = BinaryHeap::new();
        dist[from] = 0.0;
        heap.push(Reverse((Ord64(0.0), from)));
        while let Some(Reverse((Ord64(d), u))) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            if u == to {
                let mut edges = Vec::new();
                let mut v = to;
                while v != from {
                    let e = via[v];
                    edges.push(e);
                    v = m.other_end(e, v);
                }
                edges.reverse();
                return Some(edges);
            }
            for &e in &m.incident[u] {
                let v = m.other_end(e, u);
                if blocked.get(v).copied().unwrap_or(false) {
                    continue;
                }
                let nd = d + costs[e];
                if nd < dist[v] {
                    dist[v] = nd;
                    via[v] = e;
                    heap.push(Reverse((Ord64(nd), v)));
                }
            }
        }
        None
    }

    fn perturbed_costs(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.model.costs.iter().map(|c| c * rng.gen_range(0.5..1.5)).collect()
    }

    /// Replaces a random stretch of the current route by a cheapest detour
    /// under randomly perturbed costs that avoids the rest of the route.
    fn path_move(&self, s: &RouteState, rng: &mut ChaCha8Rng, flips: &mut Vec<usize>) -> bool {
        let m = self.model;
        let Some(path) = self.path_nodes(s) else {
            // reconnect: add a perturbed cheapest start-goal path
            let costs = self.perturbed_costs(rng);
            if let Some(edges) = self.cheapest_path(m.start, m.goal, &costs, &[]) {
                flips.extend(edges.into_iter().filter(|&e| !s.bits[e]));
            }
            return !flips.is_empty();
        };
        let hops = path.len() - 1;
        let i = rng.gen_range(0..hops);
        let j = (i + rng.gen_range(1..=MAX_SEGMENT)).min(hops);
        let mut blocked = vec![false; m.nodes.len()];
        for (k, &v) in path.iter().enumerate() {
            if k < i || k > j {
                blocked[v] = true;
            }
        }
        let costs = self.perturbed_costs(rng);
        let Some(detour) = self.cheapest_path(path[i], path[j], &costs, &blocked) else {
            return false;
        };
        let old: Vec<usize> = path[i..=j]
            .windows(2)
            .map(|w| m.edge_between(w[0], w[1]).expect("route edges exist"))
            .collect();
        for &e in &old {
            if !detour.contains(&e) {
                flips.push(e);
            }
        }
        for &e in &detour {
            if !old.contains(&e) {
                flips.push(e);
            }
        }
        // the detour may reuse edges that are active but off the route
        flips.retain(|&e| old.contains(&e) || !s.bits[e]);
        !flips.is_empty()
    }

    fn frontier_flip(&self, s: &RouteState, rng: &mut ChaCha8Rng) -> usize {
        let m = self.model;
        let node = if s.active.is_empty() {
            m.start
        } else {
            let e = s.active[rng.gen_range(0..s.active.len())];
            let (a, b) = m.edge_nodes[e];
            if rng.gen_bool(0.5) {
                a
            } else {
                b
            }
        };
        let inc = &m.incident[node];
        if inc.is_empty() {
            rng.gen_range(0..m.edges.len())
        } else {
            inc[rng.gen_range(0..inc.len())]
        }
    }
}

impl SearchSpace for RouteSpace<'_> {
    type State = RouteState;

    fn num_vars(&self) -> usize {
        self.model.edges.len()
    }

    fn state(&self, bits: &[bool]) -> RouteState {
        let m = self.model;
        let mut degree = vec![0u32; m.nodes.len()];
        let mut active = Vec::new();
        let mut pos = vec![usize::MAX; bits.len()];
        for (e, &on) in bits.iter().enumerate() {
            if on {
                let (a, b) = m.edge_nodes[e];
                degree[a] += 1;
                degree[b] += 1;
                pos[e] = active.len();
                active.push(e);
            }
        }
        RouteState {
            bits: bits.to_vec(),
            degree,
            count: active.len(),
            energy: self.exact_energy(bits),
            active,
            pos,
            reachable: Cell::new(None),
        }
    }

    fn bits<'a>(&self, s: &'a RouteState) -> &'a [bool] {
        &s.bits
    }

    fn energy(&self, s: &RouteState) -> f64 {
        s.energy
    }

    fn exact_energy(&self, bits: &[bool]) -> f64 {
        let m = self.model;
        let mut degree = vec![0u32; m.nodes.len()];
        let mut linear = 0.0;
        let mut count = 0;
        for (e, &on) in bits.iter().enumerate() {
            if on {
                linear += m.costs[e];
                let (a, b) = m.edge_nodes[e];
                degree[a] += 1;
                degree[b] += 1;
                count += 1;
            }
        }
        let quad: f64 = m.turns.iter().filter(|t| bits[t.a] && bits[t.b]).map(|t| t.coef).sum();
        let deg: f64 = degree.iter().enumerate().map(|(v, &k)| self.degree_term(v, k)).sum();
        linear + quad + deg + self.length_penalty(count)
    }

    fn flip_delta(&self, s: &RouteState, e: usize) -> f64 {
        let m = self.model;
        let on = s.bits[e];
        let sign = if on { -1.0 } else { 1.0 };
        let quad: f64 = m.turn_partners[e].iter().filter(|(o, _)| s.bits[*o]).map(|(_, c)| c).sum();
        let (a, b) = m.edge_nodes[e];
        let step = |v: usize| {
            let k = s.degree[v];
            let k2 = if on { k - 1 } else { k + 1 };
            self.degree_term(v, k2) - self.degree_term(v, k)
        };
        let count2 = if on { s.count - 1 } else { s.count + 1 };
        sign * (m.costs[e] + quad) + step(a) + step(b) + self.length_penalty(count2) - self.length_penalty(s.count)
    }

    fn flip(&self, s: &mut RouteState, e: usize) {
        s.energy += self.flip_delta(s, e);
        let (a, b) = self.model.edge_nodes[e];
        let was_reachable = s.reachable.get();
        if s.bits[e] {
            s.bits[e] = false;
            s.degree[a] -= 1;
            s.degree[b] -= 1;
            s.count -= 1;
            let p = s.pos[e];
            s.active.swap_remove(p);
            if let Some(&moved) = s.active.get(p) {
                s.pos[moved] = p;
            }
            s.pos[e] = usize::MAX;
            s.reachable.set(None);
        } else {
            s.bits[e] = true;
            s.degree[a] += 1;
            s.degree[b] += 1;
            s.count += 1;
            s.pos[e] = s.active.len();
            s.active.push(e);
            // adding an edge cannot disconnect the endpoints
            s.reachable.set(if was_reachable == Some(true) { Some(true) } else { None });
        }
    }

    fn is_feasible(&self, s: &RouteState) -> bool {
        if let Some(r) = s.reachable.get() {
            return r;
        }
        let r = s.degree[self.model.start] > 0 && s.degree[self.model.goal] > 0 && self.path_nodes(s).is_some();
        s.reachable.set(Some(r));
        r
    }

    fn resync(&self, s: &mut RouteState) {
        s.energy = self.exact_energy(&s.bits);
    }
}

impl AnnealSpace for RouteSpace<'_> {
    fn initial_state(&self, rng: &mut ChaCha8Rng) -> RouteState {
        let m = self.model;
        let mut bits = vec![false; m.edges.len()];
        let costs = self.perturbed_costs(rng);
        if let Some(path) = self.cheapest_path(m.start, m.goal, &costs, &[]) {
            for e in path {
                bits[e] = true;
            }
        }
        self.state(&bits)
    }

    fn propose(&self, s: &RouteState, rng: &mut ChaCha8Rng, flips: &mut Vec<usize>) {
        if self.model.edges.is_empty() {
            return;
        }
        if rng.gen_bool(PATH_MOVE_PROB) && self.path_move(s, rng, flips) {
            return;
        }
        flips.clear();
        flips.push(self.frontier_flip(s, rng));
    }

    fn infeasibility_penalty(&self) -> f64 {
        self.penalty
    }
}

/// `f64` ordered by `total_cmp`, for heaps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Ord64(pub f64);

impl Eq for Ord64 {}

impl PartialOrd for Ord64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ord64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}
