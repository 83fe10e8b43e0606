//! Scalar reverse-mode tape. Every node stores its value and the partial
//! derivatives with respect to its inputs, so backward is a single sweep.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(u32);

impl Var {
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub(crate) fn from_index(i: usize) -> Var {
        Var(i as u32)
    }
}

#[derive(Clone, Copy)]
struct Node {
    value: f64,
    first_edge: u32,
    n_edges: u32,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    edges: Vec<(u32, f64)>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> f64 {
        self.nodes[v.index()].value
    }

    /// Node with the given value and `(input, d value / d input)` pairs.
    pub fn push(&mut self, value: f64, partials: impl IntoIterator<Item = (Var, f64)>) -> Var {
        let first_edge = self.edges.len() as u32;
        self.edges.extend(partials.into_iter().map(|(v, d)| (v.0, d)));
        let n_edges = self.edges.len() as u32 - first_edge;
        self.nodes.push(Node { value, first_edge, n_edges });
        Var(self.nodes.len() as u32 - 1)
    }

    pub fn leaf(&mut self, value: f64) -> Var {
        self.push(value, [])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, [(a, 1.0), (b, 1.0)])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        self.push(x * y, [(a, y), (b, x)])
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        self.push(x / y, [(a, 1.0 / y), (b, -x / (y * y))])
    }

    /// `max(a, floor)`; the floor is a constant.
    pub fn max_const(&mut self, a: Var, floor: f64) -> Var {
        let x = self.value(a);
        if x >= floor {
            self.push(x, [(a, 1.0)])
        } else {
            self.push(floor, [])
        }
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let x = self.value(a);
        self.push(crate::elo::softplus(x), [(a, crate::elo::sigmoid(x))])
    }

    pub fn dot(&mut self, a: &[Var], b: &[Var]) -> Var {
        let mut s = 0.0;
        let mut partials = Vec::with_capacity(2 * a.len());
        for (&x, &y) in a.iter().zip(b) {
            let (vx, vy) = (self.value(x), self.value(y));
            s += vx * vy;
            partials.push((x, vy));
            partials.push((y, vx));
        }
        self.push(s, partials)
    }

    /// `v - c u`.
    pub fn axpy(&mut self, v: Var, c: Var, u: Var) -> Var {
        let (vv, vc, vu) = (self.value(v), self.value(c), self.value(u));
        self.push(vv - vc * vu, [(v, 1.0), (c, -vu), (u, -vc)])
    }

    /// Accumulates adjoints of nodes in `lo..hi`, walking down from `hi - 1`.
    /// `adj` must cover the whole tape.
    pub fn backward_range(&self, adj: &mut [f64], hi: usize, lo: usize) {
        for idx in (lo..hi).rev() {
            let a = adj[idx];
            if a == 0.0 {
                continue;
            }
            let node = self.nodes[idx];
            let start = node.first_edge as usize;
            for &(p, d) in &self.edges[start..start + node.n_edges as usize] {
                adj[p as usize] += a * d;
            }
        }
    }
}
