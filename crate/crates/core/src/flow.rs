//! Dinic maximum flow on unit-ish integer capacities.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy)]
struct Edge {
    to: usize,
    cap: u32,
    rev: usize,
}

#[derive(Debug, Clone)]
pub struct Dinic {
    graph: Vec<Vec<Edge>>,
    level: Vec<i32>,
    iter: Vec<usize>,
}

impl Dinic {
    pub fn new(n: usize) -> Self {
        Dinic {
            graph: vec![Vec::new(); n],
            level: vec![-1; n],
            iter: vec![0; n],
        }
    }

    /// Adds `from -> to` and returns `(from, position)` for later flow lookup.
    pub fn add_edge(&mut self, from: usize, to: usize, cap: u32) -> (usize, usize) {
        let pos = self.graph[from].len();
        let rev_pos = self.graph[to].len() + usize::from(from == to);
        self.graph[from].push(Edge { to, cap, rev: rev_pos });
        self.graph[to].push(Edge {
            to: from,
            cap: 0,
            rev: pos,
        });
        (from, pos)
    }

    /// Flow currently pushed through an edge handle from `add_edge`.
    pub fn flow_on(&self, handle: (usize, usize)) -> u32 {
        let e = self.graph[handle.0][handle.1];
        self.graph[e.to][e.rev].cap
    }

    pub fn edge_target(&self, handle: (usize, usize)) -> usize {
        self.graph[handle.0][handle.1].to
    }

    fn bfs(&mut self, s: usize) {
        self.level.iter_mut().for_each(|l| *l = -1);
        self.level[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(v) = q.pop_front() {
            for e in &self.graph[v] {
                if e.cap > 0 && self.level[e.to] < 0 {
                    self.level[e.to] = self.level[v] + 1;
                    q.push_back(e.to);
                }
            }
        }
    }

    // iterative DFS; recursion depth would otherwise track path length
    fn augment(&mut self, s: usize, t: usize) -> u64 {
        let mut total = 0u64;
        let mut path: Vec<(usize, usize)> = Vec::new();
        let mut v = s;
        loop {
            if v == t {
                let bottleneck = path.iter().map(|&(u, i)| self.graph[u][i].cap).min().unwrap_or(0);
                for &(u, i) in &path {
                    let Edge { to, rev, .. } = self.graph[u][i];
                    self.graph[u][i].cap -= bottleneck;
                    self.graph[to][rev].cap += bottleneck;
                }
                total += bottleneck as u64;
                path.clear();
                v = s;
                continue;
            }
            let mut advanced = false;
            while self.iter[v] < self.graph[v].len() {
                let e = self.graph[v][self.iter[v]];
                if e.cap > 0 && self.level[v] < self.level[e.to] {
                    path.push((v, self.iter[v]));
                    v = e.to;
                    advanced = true;
                    break;
                }
                self.iter[v] += 1;
            }
            if !advanced {
                if v == s {
                    return total;
                }
                // dead end: retreat and skip the edge that led here
                self.level[v] = -1;
                let (u, _) = path.pop().expect("non-source node has a parent edge");
                self.iter[u] += 1;
                v = u;
            }
        }
    }

    pub fn max_flow(&mut self, s: usize, t: usize) -> u64 {
        let mut flow = 0;
        loop {
            self.bfs(s);
            if self.level[t] < 0 {
                return flow;
            }
            self.iter.iter_mut().for_each(|i| *i = 0);
            flow += self.augment(s, t);
        }
    }

    /// Nodes reachable from `s` in the residual graph (valid after `max_flow`).
    pub fn residual_reachable(&self, s: usize) -> Vec<bool> {
        let mut seen = vec![false; self.graph.len()];
        seen[s] = true;
        let mut stack = vec![s];
        while let Some(v) = stack.pop() {
            for e in &self.graph[v] {
                if e.cap > 0 && !seen[e.to] {
                    seen[e.to] = true;
                    stack.push(e.to);
                }
            }
        }
        seen
    }
}
