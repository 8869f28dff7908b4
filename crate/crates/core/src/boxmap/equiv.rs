//! Branchwise maps: order-preserving piecewise homeomorphisms given by
//! breakpoint/value nodes. Every piece the artifact constructs is
//! affine, so evaluation interpolates affinely between nodes.

use crate::interval::Interval;
use serde::Serialize;

#[derive(Clone, Debug, Serialize)]
pub struct BranchwiseMap {
    /// Strictly increasing in both coordinates.
    nodes: Vec<(f64, f64)>,
}

impl BranchwiseMap {
    pub fn from_nodes(mut nodes: Vec<(f64, f64)>) -> Option<Self> {
        if nodes.len() < 2 {
            return None;
        }
        nodes.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for w in nodes.windows(2) {
            if w[1].0 <= w[0].0 || w[1].1 <= w[0].1 {
                return None;
            }
        }
        Some(BranchwiseMap { nodes })
    }

    pub fn identity_on(iv: Interval, n: usize) -> Self {
        let nodes = (0..=n.max(1))
            .map(|i| {
                let x = iv.lo + iv.len() * (i as f64) / (n.max(1) as f64);
                (x, x)
            })
            .collect();
        BranchwiseMap { nodes }
    }

    pub fn nodes(&self) -> &[(f64, f64)] {
        &self.nodes
    }

    pub fn domain(&self) -> Interval {
        Interval::new(self.nodes[0].0, self.nodes.last().unwrap().0)
    }

    pub fn range(&self) -> Interval {
        Interval::new(self.nodes[0].1, self.nodes.last().unwrap().1)
    }

    /// Piecewise-affine evaluation; affinely extended beyond the ends
    /// with the terminal slopes.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.nodes.len();
        let seg = match self
            .nodes
            .binary_search_by(|p| p.0.partial_cmp(&x).unwrap())
        {
            Ok(i) => return self.nodes[i].1,
            Err(0) => 0,
            Err(i) if i >= n => n - 2,
            Err(i) => i - 1,
        };
        let (x0, y0) = self.nodes[seg];
        let (x1, y1) = self.nodes[seg + 1];
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    /// Per-piece slopes.
    pub fn slopes(&self) -> Vec<f64> {
        self.nodes
            .windows(2)
            .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_monotone() {
        assert!(BranchwiseMap::from_nodes(vec![(0.0, 0.0), (1.0, -1.0)]).is_none());
        assert!(BranchwiseMap::from_nodes(vec![(0.0, 0.0)]).is_none());
    }

    #[test]
    fn interpolates() {
        let u = BranchwiseMap::from_nodes(vec![(0.0, 0.0), (1.0, 2.0), (2.0, 3.0)]).unwrap();
        assert_eq!(u.eval(0.5), 1.0);
        assert_eq!(u.eval(1.5), 2.5);
        assert_eq!(u.slopes(), vec![2.0, 1.0]);
        assert_eq!(u.eval(1.0), 2.0);
    }
}
