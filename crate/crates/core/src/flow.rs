//! Dinic maximum flow on real capacities, specialised to threshold-gated
//! bipartite transportation problems.

use std::collections::VecDeque;

use crate::metric::{Distribution, FiniteMetricSpace, JointMass};

const RESIDUAL_EPS: f64 = 1e-15;

#[derive(Debug, Clone)]
struct Edge {
    to: usize,
    rev: usize,
    cap: f64,
}

#[derive(Debug)]
struct Network {
    graph: Vec<Vec<Edge>>,
    level: Vec<i32>,
    iter: Vec<usize>,
}

impl Network {
    fn new(nodes: usize) -> Self {
        Self {
            graph: vec![Vec::new(); nodes],
            level: vec![-1; nodes],
            iter: vec![0; nodes],
        }
    }

    /// Returns the position of the forward edge in `graph[from]`.
    fn add_edge(&mut self, from: usize, to: usize, cap: f64) -> usize {
        let fwd = self.graph[from].len();
        let back = self.graph[to].len();
        self.graph[from].push(Edge { to, rev: back, cap });
        self.graph[to].push(Edge { to: from, rev: fwd, cap: 0.0 });
        fwd
    }

    fn bfs(&mut self, s: usize, t: usize) -> bool {
        self.level.iter_mut().for_each(|l| *l = -1);
        self.level[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            for e in &self.graph[v] {
                if e.cap > RESIDUAL_EPS && self.level[e.to] < 0 {
                    self.level[e.to] = self.level[v] + 1;
                    queue.push_back(e.to);
                }
            }
        }
        self.level[t] >= 0
    }

    fn dfs(&mut self, v: usize, t: usize, limit: f64) -> f64 {
        if v == t {
            return limit;
        }
        while self.iter[v] < self.graph[v].len() {
            let i = self.iter[v];
            let Edge { to, cap, .. } = self.graph[v][i];
            if cap > RESIDUAL_EPS && self.level[v] < self.level[to] {
                let pushed = self.dfs(to, t, limit.min(cap));
                if pushed > 0.0 {
                    let rev = self.graph[v][i].rev;
                    self.graph[v][i].cap -= pushed;
                    self.graph[to][rev].cap += pushed;
                    return pushed;
                }
            }
            self.iter[v] += 1;
        }
        0.0
    }

    fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let mut total = 0.0;
        while self.bfs(s, t) {
            self.iter.iter_mut().for_each(|i| *i = 0);
            loop {
                let f = self.dfs(s, t, f64::INFINITY);
                if f <= 0.0 {
                    break;
                }
                total += f;
            }
        }
        total
    }
}

/// A maximal partial coupling of `p` and `q` using only pairs at distance
/// `<= threshold`.
#[derive(Debug, Clone)]
pub(crate) struct GatedPlan {
    pub routed: f64,
    pub cells: Vec<JointMass>,
}

pub(crate) fn gated_transport(
    space: &FiniteMetricSpace,
    p: &Distribution,
    q: &Distribution,
    threshold: f64,
) -> GatedPlan {
    let left = p.support();
    let right = q.support();
    let (pw, qw) = (p.weights(), q.weights());
    let source = 0;
    let sink = 1;
    let l0 = 2;
    let r0 = l0 + left.len();
    let mut net = Network::new(r0 + right.len());

    // Greedy pre-routing keeps the number of Dinic phases small on dense instances.
    let mut supply: Vec<f64> = left.iter().map(|&i| pw[i]).collect();
    let mut demand: Vec<f64> = right.iter().map(|&j| qw[j]).collect();
    let mut arcs = Vec::new();
    for (a, &i) in left.iter().enumerate() {
        for (b, &j) in right.iter().enumerate() {
            if space.dist(i, j) <= threshold {
                let send = supply[a].min(demand[b]);
                supply[a] -= send;
                demand[b] -= send;
                arcs.push((a, b, send));
            }
        }
    }
    let mut pre_routed = 0.0;
    let mut arc_pos = Vec::with_capacity(arcs.len());
    for &(a, b, send) in &arcs {
        let pos = net.add_edge(l0 + a, r0 + b, f64::INFINITY);
        if send > 0.0 {
            // Encode pre-routed flow directly as residual capacity on the reverse arc.
            let rev = net.graph[l0 + a][pos].rev;
            net.graph[r0 + b][rev].cap = send;
        }
        arc_pos.push(pos);
        pre_routed += send;
    }
    for (a, &s) in supply.iter().enumerate() {
        net.add_edge(source, l0 + a, s);
    }
    for (b, &d) in demand.iter().enumerate() {
        net.add_edge(r0 + b, sink, d);
    }
    let extra = net.max_flow(source, sink);

    let mut cells = Vec::new();
    for (&(a, b, _), &pos) in arcs.iter().zip(&arc_pos) {
        let rev = net.graph[l0 + a][pos].rev;
        let mass = net.graph[r0 + b][rev].cap;
        if mass > 0.0 {
            cells.push(JointMass {
                left: left[a],
                right: right[b],
                mass,
            });
        }
    }
    GatedPlan {
        routed: pre_routed + extra,
        cells,
    }
}
