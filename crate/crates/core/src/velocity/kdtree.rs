//! Exact nearest-neighbour search over 3D points.

use nalgebra::Vector3;

#[derive(Debug, Clone)]
struct Node {
    point: usize,
    axis: usize,
    left: Option<usize>,
    right: Option<usize>,
}

/// Static k-d tree; queries return the same neighbour as a linear scan
/// (ties broken towards the lower point index).
#[derive(Debug, Clone)]
pub struct KdTree<'a> {
    points: &'a [Vector3<f64>],
    nodes: Vec<Node>,
    root: Option<usize>,
}

impl<'a> KdTree<'a> {
    pub fn new(points: &'a [Vector3<f64>]) -> Self {
        let mut idx: Vec<usize> = (0..points.len()).collect();
        let mut tree = Self {
            points,
            nodes: Vec::with_capacity(points.len()),
            root: None,
        };
        tree.root = tree.build(&mut idx, 0);
        tree
    }

    fn build(&mut self, idx: &mut [usize], depth: usize) -> Option<usize> {
        if idx.is_empty() {
            return None;
        }
        let axis = depth % 3;
        let pts = self.points;
        idx.sort_by(|&a, &b| pts[a][axis].total_cmp(&pts[b][axis]).then(a.cmp(&b)));
        let mid = idx.len() / 2;
        let point = idx[mid];
        let (lo, rest) = idx.split_at_mut(mid);
        let hi = &mut rest[1..];
        let left = self.build(lo, depth + 1);
        let right = self.build(hi, depth + 1);
        self.nodes.push(Node {
            point,
            axis,
            left,
            right,
        });
        Some(self.nodes.len() - 1)
    }

    /// Index and squared distance of the nearest point.
    pub fn nearest(&self, q: &Vector3<f64>) -> Option<(usize, f64)> {
        let mut best = None;
        if let Some(r) = self.root {
            self.search(r, q, &mut best);
        }
        best
    }

    fn search(&self, node: usize, q: &Vector3<f64>, best: &mut Option<(usize, f64)>) {
        let n = &self.nodes[node];
        let p = &self.points[n.point];
        let d2 = (p - q).norm_squared();
        let better = match *best {
            None => true,
            Some((bi, bd)) => d2 < bd || (d2 == bd && n.point < bi),
        };
        if better {
            *best = Some((n.point, d2));
        }
        let diff = q[n.axis] - p[n.axis];
        let (near, far) = if diff < 0.0 { (n.left, n.right) } else { (n.right, n.left) };
        if let Some(c) = near {
            self.search(c, q, best);
        }
        if let Some(c) = far {
            if diff * diff <= best.map_or(f64::INFINITY, |b| b.1) {
                self.search(c, q, best);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Vector3<f64>> = (0..400)
            .map(|_| Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random::<f64>()))
            .collect();
        let tree = KdTree::new(&pts);
        for _ in 0..300 {
            let q = Vector3::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5), rng.random_range(-0.5..1.5));
            let mut best = (0, f64::INFINITY);
            for (i, p) in pts.iter().enumerate() {
                let d = (p - q).norm_squared();
                if d < best.1 {
                    best = (i, d);
                }
            }
            assert_eq!(tree.nearest(&q), Some(best));
        }
    }

    #[test]
    fn empty_tree() {
        let pts: Vec<Vector3<f64>> = Vec::new();
        assert_eq!(KdTree::new(&pts).nearest(&Vector3::zeros()), None);
    }
}
