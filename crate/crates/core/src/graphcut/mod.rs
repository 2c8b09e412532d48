//! Gibbs energy on the 8-connected pixel grid and its exact minimization by
//! min-cut.
//!
//! Convention: after the cut, nodes on the source side are foreground.
//! Cutting a pixel's source edge therefore pays its background data term and
//! cutting its sink edge pays its foreground data term.

mod maxflow;

use serde::{Deserialize, Serialize};

use crate::gmm::{data_term, Color, GmmModel, Side};
use crate::raster::{BinaryMask, Label, Raster, Trimap};

/// Neighbor offsets visited once per unordered pair, with their distance.
pub(crate) const FORWARD_NEIGHBORS: [(isize, isize, f64); 4] = [
    (1, 0, 1.0),
    (0, 1, 1.0),
    (1, 1, std::f64::consts::SQRT_2),
    (-1, 1, std::f64::consts::SQRT_2),
];

/// Calls `f(m, n, distance)` for every unordered 8-neighbor pair.
pub(crate) fn for_each_pair(width: usize, height: usize, mut f: impl FnMut(usize, usize, f64)) {
    for y in 0..height {
        for x in 0..width {
            let m = y * width + x;
            for &(dx, dy, dist) in &FORWARD_NEIGHBORS {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx >= 0 && (nx as usize) < width && (ny as usize) < height {
                    f(m, ny as usize * width + nx as usize, dist);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Edge {
    pub a: usize,
    pub b: usize,
    pub cap: f64,
}

/// s-t network with one node per pixel. Neighbor edges are undirected (same
/// capacity both ways); nodes may be fixed to a terminal, which is realized
/// with a capacity larger than the sum of all finite ones.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowNetwork {
    width: usize,
    height: usize,
    source: Vec<f64>,
    sink: Vec<f64>,
    fixed: Vec<Option<Side>>,
    pub(crate) edges: Vec<Edge>,
    constant: f64,
}

impl FlowNetwork {
    /// Network over a `width` x `height` grid with no capacities yet.
    pub fn new(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            source: vec![0.0; n],
            sink: vec![0.0; n],
            fixed: vec![None; n],
            edges: Vec::new(),
            constant: 0.0,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn node_count(&self) -> usize {
        self.source.len()
    }

    /// Sets the finite source and sink capacities of node `i`.
    pub fn set_terminals(&mut self, i: usize, source: f64, sink: f64) {
        assert!(
            source >= 0.0 && sink >= 0.0 && source.is_finite() && sink.is_finite(),
            "terminal capacities must be finite and non-negative"
        );
        self.source[i] = source;
        self.sink[i] = sink;
    }

    /// Forces node `i` onto one side of every finite cut.
    pub fn fix(&mut self, i: usize, side: Side) {
        self.fixed[i] = Some(side);
        self.source[i] = 0.0;
        self.sink[i] = 0.0;
    }

    pub fn fixed(&self, i: usize) -> Option<Side> {
        self.fixed[i]
    }

    pub fn add_edge(&mut self, a: usize, b: usize, cap: f64) {
        assert!(
            cap >= 0.0 && cap.is_finite(),
            "edge capacity must be finite and non-negative"
        );
        assert!(a != b, "self loop");
        self.edges.push(Edge { a, b, cap });
    }

    /// Energy of a labeling minus the capacity of its cut.
    pub fn constant(&self) -> f64 {
        self.constant
    }

    /// The "infinite" capacity: one more than the sum of all finite ones.
    pub fn infinity(&self) -> f64 {
        1.0 + self.source.iter().sum::<f64>()
            + self.sink.iter().sum::<f64>()
            + self.edges.iter().map(|e| e.cap).sum::<f64>()
    }

    pub(crate) fn terminal_capacities(&self, i: usize, inf: f64) -> (f64, f64) {
        match self.fixed[i] {
            Some(Side::Foreground) => (inf, 0.0),
            Some(Side::Background) => (0.0, inf),
            None => (self.source[i], self.sink[i]),
        }
    }

    /// Capacity of the cut induced by `labels` (set = source side), or
    /// `None` if the labeling cuts a fixed node's infinite edge.
    pub fn cut_capacity(&self, labels: &BinaryMask) -> Option<f64> {
        let bits = labels.bits();
        let mut total = 0.0;
        for (i, &fg) in bits.iter().enumerate() {
            match (self.fixed[i], fg) {
                (Some(Side::Foreground), false) | (Some(Side::Background), true) => return None,
                (Some(_), _) => {}
                (None, true) => total += self.sink[i],
                (None, false) => total += self.source[i],
            }
        }
        for e in &self.edges {
            if bits[e.a] != bits[e.b] {
                total += e.cap;
            }
        }
        Some(total)
    }

    /// Per-pixel terminal capacities as little-endian `f32`: the source plane
    /// followed by the sink plane, each row-major. Fixed nodes report the
    /// network's infinity.
    pub fn terminal_weights_dump(&self) -> Vec<u8> {
        let inf = self.infinity();
        let caps: Vec<(f64, f64)> = (0..self.node_count())
            .map(|i| self.terminal_capacities(i, inf))
            .collect();
        let mut out = Vec::with_capacity(caps.len() * 8);
        for &(s, _) in &caps {
            out.extend_from_slice(&(s as f32).to_le_bytes());
        }
        for &(_, t) in &caps {
            out.extend_from_slice(&(t as f32).to_le_bytes());
        }
        out
    }
}

/// Exact max-flow; returns the source-side labeling (foreground) and the flow
/// value, which equals the capacity of that cut.
pub fn min_cut(net: &FlowNetwork) -> (BinaryMask, f64) {
    let mut solver = maxflow::Solver::new(net);
    let flow = solver.run();
    let labels = BinaryMask::from_bits(net.width, net.height, solver.source_side());
    (labels, flow)
}

/// `1 / (2 <|z_m - z_n|²>)` over all unordered 8-neighbor pairs; 0 when the
/// expectation vanishes.
pub fn estimate_beta(img: &Raster) -> f64 {
    estimate_beta_colors(&img.colors(), img.width(), img.height())
}

pub fn estimate_beta_colors(colors: &[Color], width: usize, height: usize) -> f64 {
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for_each_pair(width, height, |m, n, _| {
        sum += sq_dist(&colors[m], &colors[n]);
        pairs += 1;
    });
    if pairs == 0 || sum == 0.0 {
        0.0
    } else {
        1.0 / (2.0 * sum / pairs as f64)
    }
}

fn sq_dist(a: &Color, b: &Color) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Cost of a label discontinuity between two neighbors:
/// `gamma / dist * exp(-beta |z_m - z_n|²)`.
pub fn smoothness_weight(zm: &Color, zn: &Color, dist: f64, beta: f64, gamma: f64) -> f64 {
    gamma / dist * (-beta * sq_dist(zm, zn)).exp()
}

/// Builds the min-cut network for the current trimap and color models.
pub fn build_network(
    img: &Raster,
    trimap: &Trimap,
    fg: &GmmModel,
    bg: &GmmModel,
    beta: f64,
    gamma: f64,
) -> FlowNetwork {
    build_network_from_colors(&img.colors(), trimap, fg, bg, beta, gamma)
}

/// Probable pixels get source capacity `U_bg - m` and sink capacity
/// `U_fg - m` with `m = min(U_fg, U_bg)`, keeping capacities non-negative;
/// the subtracted amounts and the data terms of fixed pixels are collected in
/// [`FlowNetwork::constant`].
pub fn build_network_from_colors(
    colors: &[Color],
    trimap: &Trimap,
    fg: &GmmModel,
    bg: &GmmModel,
    beta: f64,
    gamma: f64,
) -> FlowNetwork {
    let (w, h) = (trimap.width(), trimap.height());
    assert_eq!(colors.len(), w * h, "colors and trimap disagree");
    let mut net = FlowNetwork::new(w, h);
    let mut constant = 0.0;
    for (i, (&label, z)) in trimap.labels().iter().zip(colors).enumerate() {
        match label {
            Label::HardForeground => {
                constant += data_term(fg, bg, z, Side::Foreground);
                net.fix(i, Side::Foreground);
            }
            Label::HardBackground => {
                constant += data_term(fg, bg, z, Side::Background);
                net.fix(i, Side::Background);
            }
            Label::ProbForeground | Label::ProbBackground => {
                let u_fg = data_term(fg, bg, z, Side::Foreground);
                let u_bg = data_term(fg, bg, z, Side::Background);
                let m = u_fg.min(u_bg);
                constant += m;
                net.set_terminals(i, u_bg - m, u_fg - m);
            }
        }
    }
    net.constant = constant;
    net.edges.reserve(4 * w * h);
    for_each_pair(w, h, |m, n, dist| {
        net.add_edge(m, n, smoothness_weight(&colors[m], &colors[n], dist, beta, gamma));
    });
    net
}

/// Data, smoothness and total energy of a labeling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub data: f64,
    pub smoothness: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    pub fn new(data: f64, smoothness: f64) -> Self {
        Self {
            data,
            smoothness,
            total: data + smoothness,
        }
    }
}

/// Energy of a binary labeling (set = foreground).
pub fn energy_of(
    img: &Raster,
    labels: &BinaryMask,
    fg: &GmmModel,
    bg: &GmmModel,
    beta: f64,
    gamma: f64,
) -> EnergyBreakdown {
    energy_of_colors(&img.colors(), labels, fg, bg, beta, gamma)
}

pub fn energy_of_colors(
    colors: &[Color],
    labels: &BinaryMask,
    fg: &GmmModel,
    bg: &GmmModel,
    beta: f64,
    gamma: f64,
) -> EnergyBreakdown {
    let bits = labels.bits();
    let data = bits
        .iter()
        .zip(colors)
        .map(|(&f, z)| {
            let side = if f { Side::Foreground } else { Side::Background };
            data_term(fg, bg, z, side)
        })
        .sum();
    let mut smoothness = 0.0;
    for_each_pair(labels.width(), labels.height(), |m, n, dist| {
        if bits[m] != bits[n] {
            smoothness += smoothness_weight(&colors[m], &colors[n], dist, beta, gamma);
        }
    });
    EnergyBreakdown::new(data, smoothness)
}
