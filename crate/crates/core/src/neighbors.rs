//! Candidate pruning for ball queries. Points are embedded with
//! [`Manifold::embedding`], which never increases distances, so a Euclidean
//! range query in the embedding returns a superset of every metric ball.

use crate::models::{ChartPoint, Manifold};

const LEAF: usize = 16;

/// Static k-d tree over embedded points.
pub struct NeighborIndex {
    emb: Vec<Vec<f64>>,
    nodes: Vec<Node>,
    perm: Vec<usize>,
}

enum Node {
    Leaf { lo: usize, hi: usize },
    Split { axis: usize, at: f64, left: usize, right: usize },
}

impl NeighborIndex {
    pub fn new(model: &dyn Manifold, points: &[ChartPoint]) -> Self {
        let emb: Vec<Vec<f64>> = points.iter().map(|p| model.embedding(p)).collect();
        let mut index = NeighborIndex {
            perm: (0..emb.len()).collect(),
            emb,
            nodes: Vec::new(),
        };
        if !index.emb.is_empty() {
            index.build(0, index.emb.len());
        }
        index
    }

    fn build(&mut self, lo: usize, hi: usize) -> usize {
        let dim = self.emb[0].len();
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf { lo, hi });
        if hi - lo <= LEAF || dim == 0 {
            return slot;
        }
        let emb = &self.emb;
        let axis = (0..dim)
            .max_by(|a, b| spread(emb, &self.perm[lo..hi], *a).total_cmp(&spread(emb, &self.perm[lo..hi], *b)))
            .unwrap_or(0);
        if spread(emb, &self.perm[lo..hi], axis) == 0.0 {
            return slot;
        }
        let mid = (lo + hi) / 2;
        self.perm[lo..hi].select_nth_unstable_by(mid - lo, |a, b| emb[*a][axis].total_cmp(&emb[*b][axis]));
        let at = self.emb[self.perm[mid]][axis];
        let left = self.build(lo, mid);
        let right = self.build(mid, hi);
        self.nodes[slot] = Node::Split { axis, at, left, right };
        slot
    }

    pub fn len(&self) -> usize {
        self.emb.len()
    }

    pub fn is_empty(&self) -> bool {
        self.emb.is_empty()
    }

    pub fn embedding(&self, i: usize) -> &[f64] {
        &self.emb[i]
    }

    /// Indices `j`, ascending, with `|e - E(p_j)| <= r` up to rounding.
    pub fn near(&self, e: &[f64], r: f64) -> Vec<usize> {
        let r = r * (1.0 + 1e-9) + 1e-300;
        let mut out = Vec::new();
        if self.nodes.is_empty() {
            return out;
        }
        let mut stack = vec![0];
        while let Some(n) = stack.pop() {
            match &self.nodes[n] {
                Node::Leaf { lo, hi } => {
                    out.extend(self.perm[*lo..*hi].iter().filter(|j| dist2(&self.emb[**j], e) <= r * r));
                }
                Node::Split { axis, at, left, right } => {
                    // The median point sits in the right half, so ties go both ways.
                    let c = e.get(*axis).copied().unwrap_or(*at);
                    if c - r <= *at {
                        stack.push(*left);
                    }
                    if c + r >= *at {
                        stack.push(*right);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Whether `hit` accepts some `j` with `|e - E(p_j)| <= r`. Candidates are
    /// visited near side first, so points close to `e` are tried early.
    pub fn any_within<E>(&self, e: &[f64], r: f64, mut hit: impl FnMut(usize) -> Result<bool, E>) -> Result<bool, E> {
        let r = r * (1.0 + 1e-9) + 1e-300;
        if self.nodes.is_empty() {
            return Ok(false);
        }
        let mut stack = vec![0];
        while let Some(n) = stack.pop() {
            match &self.nodes[n] {
                Node::Leaf { lo, hi } => {
                    let mut ids: Vec<(f64, usize)> = self.perm[*lo..*hi]
                        .iter()
                        .map(|j| (dist2(&self.emb[*j], e), *j))
                        .filter(|(d, _)| *d <= r * r)
                        .collect();
                    ids.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                    for (_, j) in ids {
                        if hit(j)? {
                            return Ok(true);
                        }
                    }
                }
                Node::Split { axis, at, left, right } => {
                    let c = e.get(*axis).copied().unwrap_or(*at);
                    let (near, far) = if c < *at { (*left, *right) } else { (*right, *left) };
                    // Pushed last, popped first.
                    if (c < *at && c + r >= *at) || (c >= *at && c - r <= *at) {
                        stack.push(far);
                    }
                    stack.push(near);
                }
            }
        }
        Ok(false)
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn spread(emb: &[Vec<f64>], ids: &[usize], axis: usize) -> f64 {
    let (lo, hi) = ids
        .iter()
        .map(|i| emb[*i][axis])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    hi - lo
}
