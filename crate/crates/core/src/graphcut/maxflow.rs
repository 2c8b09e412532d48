//! Augmenting-path max-flow with search-tree reuse (Boykov-Kolmogorov).
//!
//! Two search trees grow from the terminals; when they touch, the path is
//! augmented and the trees are repaired by re-adopting orphaned nodes instead
//! of being rebuilt from scratch.

use std::collections::VecDeque;

use super::FlowNetwork;

const NONE: usize = usize::MAX;
const TERMINAL: usize = usize::MAX - 1;
const ORPHAN: usize = usize::MAX - 2;

pub(crate) struct Solver {
    /// Arc `a` goes `tail -> head[a]`; arc `a ^ 1` is its reverse.
    head: Vec<usize>,
    rcap: Vec<f64>,
    #[cfg_attr(not(test), allow(dead_code))]
    cap: Vec<f64>,
    first: Vec<usize>,
    arcs: Vec<usize>,
    /// Residual terminal capacity: positive towards the source tree, negative
    /// towards the sink tree.
    tr_cap: Vec<f64>,
    source_cap: Vec<f64>,
    sink_cap: Vec<f64>,
    parent: Vec<usize>,
    in_sink_tree: Vec<bool>,
    ts: Vec<u64>,
    dist: Vec<u64>,
    active: VecDeque<usize>,
    is_active: Vec<bool>,
    orphans: VecDeque<usize>,
    time: u64,
    flow: f64,
}

impl Solver {
    pub(crate) fn new(net: &FlowNetwork) -> Self {
        let n = net.node_count();
        let inf = net.infinity();
        let mut head = Vec::with_capacity(net.edges.len() * 2);
        let mut cap = Vec::with_capacity(net.edges.len() * 2);
        let mut degree = vec![0usize; n];
        for e in &net.edges {
            head.push(e.b);
            cap.push(e.cap);
            head.push(e.a);
            cap.push(e.cap);
            degree[e.a] += 1;
            degree[e.b] += 1;
        }
        let mut first = vec![0usize; n + 1];
        for i in 0..n {
            first[i + 1] = first[i] + degree[i];
        }
        let mut fill = first.clone();
        let mut arcs = vec![0usize; first[n]];
        for (k, e) in net.edges.iter().enumerate() {
            arcs[fill[e.a]] = 2 * k;
            fill[e.a] += 1;
            arcs[fill[e.b]] = 2 * k + 1;
            fill[e.b] += 1;
        }
        let (source_cap, sink_cap): (Vec<f64>, Vec<f64>) = (0..n).map(|i| net.terminal_capacities(i, inf)).unzip();
        let mut solver = Self {
            head,
            rcap: cap.clone(),
            cap,
            first,
            arcs,
            tr_cap: vec![0.0; n],
            source_cap,
            sink_cap,
            parent: vec![NONE; n],
            in_sink_tree: vec![false; n],
            ts: vec![0; n],
            dist: vec![0; n],
            active: VecDeque::new(),
            is_active: vec![false; n],
            orphans: VecDeque::new(),
            time: 0,
            flow: 0.0,
        };
        for i in 0..n {
            let (s, t) = (solver.source_cap[i], solver.sink_cap[i]);
            // flow through s -> i -> t directly
            solver.flow += s.min(t);
            solver.tr_cap[i] = s - t;
            if solver.tr_cap[i] != 0.0 {
                solver.in_sink_tree[i] = solver.tr_cap[i] < 0.0;
                solver.parent[i] = TERMINAL;
                solver.dist[i] = 1;
                solver.activate(i);
            }
        }
        solver
    }

    fn activate(&mut self, i: usize) {
        if !self.is_active[i] {
            self.is_active[i] = true;
            self.active.push_back(i);
        }
    }

    fn arcs_of(&self, i: usize) -> std::ops::Range<usize> {
        self.first[i]..self.first[i + 1]
    }

    pub(crate) fn run(&mut self) -> f64 {
        let mut current: Option<usize> = None;
        loop {
            let i = match current.take() {
                Some(i) if self.parent[i] != NONE => i,
                _ => match self.next_active() {
                    Some(i) => i,
                    None => break,
                },
            };
            let Some(middle) = self.grow(i) else {
                continue;
            };
            // i stays current: it may still touch the other tree
            current = Some(i);
            self.time += 1;
            self.augment(middle);
            self.adopt_orphans();
        }
        self.flow
    }

    fn next_active(&mut self) -> Option<usize> {
        while let Some(i) = self.active.pop_front() {
            self.is_active[i] = false;
            if self.parent[i] != NONE {
                return Some(i);
            }
        }
        None
    }

    /// Grows the tree of `i` by one layer of neighbors. Returns an arc from
    /// the source tree into the sink tree when the trees meet.
    fn grow(&mut self, i: usize) -> Option<usize> {
        let sink_side = self.in_sink_tree[i];
        for k in self.arcs_of(i) {
            let a = self.arcs[k];
            // residual direction away from the tree's root
            let residual = if sink_side { self.rcap[a ^ 1] } else { self.rcap[a] };
            if residual <= 0.0 {
                continue;
            }
            let j = self.head[a];
            if self.parent[j] == NONE {
                self.in_sink_tree[j] = sink_side;
                self.parent[j] = a ^ 1;
                self.ts[j] = self.ts[i];
                self.dist[j] = self.dist[i] + 1;
                self.activate(j);
            } else if self.in_sink_tree[j] != sink_side {
                return Some(if sink_side { a ^ 1 } else { a });
            } else if self.ts[j] <= self.ts[i] && self.dist[j] > self.dist[i] {
                // shorten j's path to its root
                self.parent[j] = a ^ 1;
                self.ts[j] = self.ts[i];
                self.dist[j] = self.dist[i] + 1;
            }
        }
        None
    }

    fn make_orphan(&mut self, i: usize) {
        self.parent[i] = ORPHAN;
        self.orphans.push_back(i);
    }

    fn augment(&mut self, middle: usize) {
        let s_node = self.head[middle ^ 1];
        let t_node = self.head[middle];
        let mut bottleneck = self.rcap[middle];
        let mut i = s_node;
        loop {
            let a = self.parent[i];
            if a == TERMINAL {
                break;
            }
            bottleneck = bottleneck.min(self.rcap[a ^ 1]);
            i = self.head[a];
        }
        bottleneck = bottleneck.min(self.tr_cap[i]);
        let mut i = t_node;
        loop {
            let a = self.parent[i];
            if a == TERMINAL {
                break;
            }
            bottleneck = bottleneck.min(self.rcap[a]);
            i = self.head[a];
        }
        bottleneck = bottleneck.min(-self.tr_cap[i]);

        self.rcap[middle ^ 1] += bottleneck;
        self.rcap[middle] -= bottleneck;
        let mut i = s_node;
        loop {
            let a = self.parent[i];
            if a == TERMINAL {
                break;
            }
            self.rcap[a] += bottleneck;
            self.rcap[a ^ 1] -= bottleneck;
            if self.rcap[a ^ 1] <= 0.0 {
                self.rcap[a ^ 1] = 0.0;
                self.make_orphan(i);
            }
            i = self.head[a];
        }
        self.tr_cap[i] -= bottleneck;
        if self.tr_cap[i] <= 0.0 {
            self.tr_cap[i] = 0.0;
            self.make_orphan(i);
        }
        let mut i = t_node;
        loop {
            let a = self.parent[i];
            if a == TERMINAL {
                break;
            }
            self.rcap[a ^ 1] += bottleneck;
            self.rcap[a] -= bottleneck;
            if self.rcap[a] <= 0.0 {
                self.rcap[a] = 0.0;
                self.make_orphan(i);
            }
            i = self.head[a];
        }
        self.tr_cap[i] += bottleneck;
        if self.tr_cap[i] >= 0.0 {
            self.tr_cap[i] = 0.0;
            self.make_orphan(i);
        }
        self.flow += bottleneck;
    }

    fn adopt_orphans(&mut self) {
        while let Some(i) = self.orphans.pop_front() {
            self.adopt(i);
        }
    }

    /// Distance from `j` to its tree's terminal, or `None` when the path runs
    /// through an orphan.
    fn origin_distance(&mut self, mut j: usize) -> Option<u64> {
        let start = j;
        let mut d = 0u64;
        loop {
            if self.ts[j] == self.time {
                d += self.dist[j];
                break;
            }
            let a = self.parent[j];
            d += 1;
            if a == TERMINAL {
                self.ts[j] = self.time;
                self.dist[j] = 1;
                break;
            }
            if a == ORPHAN || a == NONE {
                return None;
            }
            j = self.head[a];
        }
        // stamp the path so later searches stop early
        let mut j = start;
        let mut d_j = d;
        while self.ts[j] != self.time {
            self.ts[j] = self.time;
            self.dist[j] = d_j;
            d_j -= 1;
            j = self.head[self.parent[j]];
        }
        Some(d)
    }

    fn adopt(&mut self, i: usize) {
        let sink_side = self.in_sink_tree[i];
        let mut best: Option<(usize, u64)> = None;
        for k in self.arcs_of(i) {
            let a = self.arcs[k];
            // residual towards i from the root side
            let residual = if sink_side { self.rcap[a] } else { self.rcap[a ^ 1] };
            let j = self.head[a];
            if residual <= 0.0 || self.parent[j] == NONE || self.in_sink_tree[j] != sink_side {
                continue;
            }
            if let Some(d) = self.origin_distance(j) {
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((a, d));
                }
            }
        }
        if let Some((a, d)) = best {
            self.parent[i] = a;
            self.ts[i] = self.time;
            self.dist[i] = d + 1;
            return;
        }
        // no valid parent: i becomes free
        self.parent[i] = NONE;
        for k in self.arcs_of(i) {
            let a = self.arcs[k];
            let j = self.head[a];
            if self.parent[j] == NONE || self.in_sink_tree[j] != sink_side {
                continue;
            }
            let residual = if sink_side { self.rcap[a] } else { self.rcap[a ^ 1] };
            if residual > 0.0 {
                self.activate(j);
            }
            let pj = self.parent[j];
            if pj != TERMINAL && pj != ORPHAN && self.head[pj] == i {
                self.make_orphan(j);
            }
        }
    }

    /// Nodes reachable from the source in the residual graph.
    pub(crate) fn source_side(&self) -> Vec<bool> {
        let n = self.tr_cap.len();
        let mut seen = vec![false; n];
        let mut stack: Vec<usize> = (0..n).filter(|&i| self.tr_cap[i] > 0.0).collect();
        for &i in &stack {
            seen[i] = true;
        }
        while let Some(i) = stack.pop() {
            for k in self.arcs_of(i) {
                let a = self.arcs[k];
                let j = self.head[a];
                if self.rcap[a] > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen
    }

    /// Largest violation of capacity bounds or flow conservation.
    #[cfg(test)]
    pub(crate) fn feasibility_error(&self) -> f64 {
        let n = self.tr_cap.len();
        let mut worst: f64 = 0.0;
        let mut net_out = vec![0.0; n];
        for a in 0..self.cap.len() {
            // flow on arc a is the capacity it has lost; f(a) = -f(a ^ 1)
            let f = self.cap[a] - self.rcap[a];
            net_out[self.head[a ^ 1]] += f;
            if a % 2 == 0 {
                let g = self.cap[a ^ 1] - self.rcap[a ^ 1];
                worst = worst
                    .max((f + g).abs())
                    .max(f - self.cap[a])
                    .max(-f - self.cap[a ^ 1])
                    .max(-self.rcap[a])
                    .max(-self.rcap[a ^ 1]);
            }
        }
        for (i, out) in net_out.iter().enumerate() {
            let terminal_in = (self.source_cap[i] - self.sink_cap[i]) - self.tr_cap[i];
            worst = worst.max((terminal_in - out).abs());
        }
        worst
    }
}
