//! Exact nearest-neighbor queries over a static point set.

use crate::{Error, Result, Vec3};

const LEAF_SIZE: usize = 8;

#[derive(Clone, Debug)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Static 3-d tree. Ties in distance resolve to the lowest point index.
#[derive(Clone, Debug)]
pub struct KdTree {
    points: Vec<Vec3>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::arg("cannot index an empty point set"));
        }
        if points.iter().any(|p| !p.iter().all(|x| x.is_finite())) {
            return Err(Error::arg("non-finite point in reference set"));
        }
        let mut tree = Self {
            order: (0..points.len()).collect(),
            points,
            nodes: Vec::new(),
        };
        let n = tree.points.len();
        tree.build(0, n);
        Ok(tree)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let (lo, hi) = self.order[start..end]
            .iter()
            .fold((Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY)), |(lo, hi), &i| {
                (lo.inf(&self.points[i]), hi.sup(&self.points[i]))
            });
        let axis = (hi - lo).imax();
        if hi[axis] <= lo[axis] {
            // all points coincide
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b)));
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    /// Index and squared distance of the nearest point.
    pub fn nearest(&self, q: &Vec3) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(0, q, &mut best);
        best
    }

    fn search(&self, node: usize, q: &Vec3, best: &mut (usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d = (self.points[i] - q).norm_squared();
                    if d < best.1 || (d == best.1 && i < best.0) {
                        *best = (i, d);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let delta = q[axis] - value;
                let (near, far) = if delta < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                if delta * delta <= best.1 {
                    self.search(far, q, best);
                }
            }
        }
    }
}

/// Reference samples with unit normals, indexed for closest-point queries.
#[derive(Clone, Debug)]
pub struct ReferenceCloud {
    tree: KdTree,
    normals: Vec<Vec3>,
}

impl ReferenceCloud {
    pub fn new(points: Vec<Vec3>, normals: Vec<Vec3>) -> Result<Self> {
        if points.len() != normals.len() {
            return Err(Error::arg(format!(
                "reference has {} points but {} normals",
                points.len(),
                normals.len()
            )));
        }
        let mut unit = Vec::with_capacity(normals.len());
        for (k, n) in normals.iter().enumerate() {
            let len = n.norm();
            if !len.is_finite() || len < 1e-12 {
                return Err(Error::arg(format!("reference normal {k} is zero or non-finite")));
            }
            unit.push(n / len);
        }
        Ok(Self {
            tree: KdTree::new(points)?,
            normals: unit,
        })
    }

    pub fn len(&self) -> usize {
        self.tree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tree.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        self.tree.points()
    }

    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }

    /// Closest reference point and its normal.
    pub fn closest(&self, p: &Vec3) -> (usize, Vec3, Vec3) {
        let (i, _) = self.tree.nearest(p);
        (i, self.tree.points()[i], self.normals[i])
    }

    pub fn bbox_diagonal(&self) -> f64 {
        let (lo, hi) = self
            .points()
            .iter()
            .fold((Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY)), |(lo, hi), p| {
                (lo.inf(p), hi.sup(p))
            });
        (hi - lo).norm()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn linear_scan(points: &[Vec3], q: &Vec3) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, p) in points.iter().enumerate() {
            let d = (p - q).norm_squared();
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    #[test]
    fn small_examples() {
        let t = KdTree::new(vec![Vec3::zeros(), Vec3::x()]).unwrap();
        assert_eq!(t.nearest(&Vec3::new(0.2, 0.0, 0.0)).0, 0);
        assert_eq!(t.nearest(&Vec3::x()), (1, 0.0));
        // equidistant: lowest index
        assert_eq!(t.nearest(&Vec3::new(0.5, 1.0, 0.0)).0, 0);
        assert!(KdTree::new(vec![]).is_err());
    }

    #[test]
    fn duplicate_points_resolve_to_lowest_index() {
        let mut pts = vec![Vec3::new(1.0, 2.0, 3.0); 40];
        pts.extend((0..40).map(|i| Vec3::new(i as f64, 0.0, 0.0)));
        let t = KdTree::new(pts).unwrap();
        assert_eq!(t.nearest(&Vec3::new(1.0, 2.0, 3.0)).0, 0);
        assert_eq!(t.nearest(&Vec3::new(7.0, 0.0, 0.0)).0, 47);
    }

    #[test]
    fn agrees_with_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut r = || {
            Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
        };
        let pts: Vec<Vec3> = (0..10_000).map(|_| r()).collect();
        let t = KdTree::new(pts.clone()).unwrap();
        for _ in 0..1000 {
            let q = r() * 1.2;
            assert_eq!(t.nearest(&q).0, linear_scan(&pts, &q));
        }
        // grid points produce many exact ties
        let grid: Vec<Vec3> = (0..1000)
            .map(|k| Vec3::new((k % 10) as f64, (k / 10 % 10) as f64, (k / 100) as f64))
            .collect();
        let t = KdTree::new(grid.clone()).unwrap();
        for k in 0..500 {
            let q = Vec3::new((k % 19) as f64 * 0.5, (k % 7) as f64 * 1.5, (k % 11) as f64 * 0.5);
            assert_eq!(t.nearest(&q).0, linear_scan(&grid, &q));
        }
    }

    #[test]
    fn reference_cloud_validation() {
        assert!(ReferenceCloud::new(vec![Vec3::zeros()], vec![]).is_err());
        assert!(ReferenceCloud::new(vec![Vec3::zeros()], vec![Vec3::zeros()]).is_err());
        let c = ReferenceCloud::new(vec![Vec3::zeros(), Vec3::x()], vec![Vec3::z() * 3.0, Vec3::z()]).unwrap();
        let (i, x, n) = c.closest(&Vec3::new(0.1, 0.0, 0.5));
        assert_eq!((i, x, n), (0, Vec3::zeros(), Vec3::z()));
    }
}
