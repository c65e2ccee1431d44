//! Finite trees T_N, truncations of the rooted binary Cayley tree, and the
//! projection/index data attached to their vertices.

use crate::mop_engine::MultiIndex;
use serde::Serialize;
use std::collections::VecDeque;
use std::fmt::Write;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TreeKind {
    /// Π decreases toward the canopy; root projects to N.
    Finite { n1: usize, n2: usize },
    /// Π increases away from the root (1,1).
    Cayley { depth: usize },
}

#[derive(Clone, Debug, Serialize)]
pub struct Vertex {
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub proj: MultiIndex,
    /// ι (finite) or ı (Cayley); 0 at the root
    pub index: usize,
    pub depth: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct Tree {
    pub kind: TreeKind,
    pub vertices: Vec<Vertex>,
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

impl Tree {
    /// T_N: vertices are the partial paths from N toward (0,0).
    pub fn finite(n: MultiIndex) -> Tree {
        let mut vertices = vec![Vertex { parent: None, children: vec![], proj: n, index: 0, depth: 0 }];
        let mut q = VecDeque::from([0usize]);
        while let Some(v) = q.pop_front() {
            let p = vertices[v].proj;
            for i in 1..=2 {
                if let Some(c) = p.minus(i) {
                    let id = vertices.len();
                    vertices.push(Vertex { parent: Some(v), children: vec![], proj: c, index: i, depth: vertices[v].depth + 1 });
                    vertices[v].children.push(id);
                    q.push_back(id);
                }
            }
        }
        Tree { kind: TreeKind::Finite { n1: n.n1, n2: n.n2 }, vertices }
    }

    /// Rooted binary tree truncated after `depth` generations.
    pub fn cayley(depth: usize) -> Tree {
        let root = MultiIndex::new(1, 1);
        let mut vertices = vec![Vertex { parent: None, children: vec![], proj: root, index: 0, depth: 0 }];
        let mut q = VecDeque::from([0usize]);
        while let Some(v) = q.pop_front() {
            if vertices[v].depth == depth {
                continue;
            }
            let p = vertices[v].proj;
            for i in 1..=2 {
                let id = vertices.len();
                vertices.push(Vertex { parent: Some(v), children: vec![], proj: p.plus(i), index: i, depth: vertices[v].depth + 1 });
                vertices[v].children.push(id);
                q.push_back(id);
            }
        }
        Tree { kind: TreeKind::Cayley { depth }, vertices }
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.vertices[v].parent
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.vertices[v].children
    }

    pub fn proj(&self, v: usize) -> MultiIndex {
        self.vertices[v].proj
    }

    pub fn index(&self, v: usize) -> usize {
        self.vertices[v].index
    }

    /// Edge/vertex type for the periodic labeling: the type of the edge to the parent.
    pub fn vertex_type(&self, v: usize) -> usize {
        self.vertices[v].index
    }

    pub fn depth(&self, v: usize) -> usize {
        self.vertices[v].depth
    }

    pub fn is_leaf(&self, v: usize) -> bool {
        self.vertices[v].children.is_empty()
    }

    /// Vertices whose neighbourhood is complete in the untruncated tree.
    pub fn is_interior(&self, v: usize) -> bool {
        match self.kind {
            TreeKind::Finite { .. } => true,
            TreeKind::Cayley { depth } => self.vertices[v].depth < depth,
        }
    }

    /// Finite-tree leaves, all projecting to (0,0).
    pub fn canopy(&self) -> Vec<usize> {
        (0..self.len()).filter(|&v| self.is_leaf(v)).collect()
    }

    /// path(Y, O) including both ends, starting at Y.
    pub fn path_to_root(&self, v: usize) -> Vec<usize> {
        let mut out = vec![v];
        let mut c = v;
        while let Some(p) = self.vertices[c].parent {
            out.push(p);
            c = p;
        }
        out
    }

    /// Vertices of the subtree rooted at v, breadth first.
    pub fn subtree(&self, v: usize) -> Vec<usize> {
        let mut out = vec![v];
        let mut i = 0;
        while i < out.len() {
            out.extend_from_slice(&self.vertices[out[i]].children);
            i += 1;
        }
        out
    }

    pub fn is_ancestor_or_self(&self, a: usize, v: usize) -> bool {
        let mut c = Some(v);
        while let Some(x) = c {
            if x == a {
                return true;
            }
            c = self.vertices[x].parent;
        }
        false
    }

    /// Vertex with the given sequence of child indices from the root.
    pub fn follow(&self, steps: &[usize]) -> Option<usize> {
        let mut v = 0;
        for &s in steps {
            v = *self.vertices[v].children.iter().find(|&&c| self.vertices[c].index == s)?;
        }
        Some(v)
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph tree {\n");
        for (i, v) in self.vertices.iter().enumerate() {
            let _ = writeln!(s, "  v{i} [label=\"{i}: ({},{})\"];", v.proj.n1, v.proj.n2);
        }
        for (i, v) in self.vertices.iter().enumerate() {
            for c in &v.children {
                let _ = writeln!(s, "  v{i} -> v{c} [label=\"{}\"];", self.vertices[*c].index);
            }
        }
        s.push_str("}\n");
        s
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("serializable tree")
    }
}

/// m_Y = Π_{Z ∈ path(Y,O)} W_Z^{-1/2}.
pub fn path_weight(tree: &Tree, w: &[f64], v: usize) -> f64 {
    tree.path_to_root(v).iter().map(|&z| w[z].powf(-0.5)).product()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn finite_examples() {
        assert_eq!(Tree::finite(MultiIndex::new(2, 1)).len(), 9);
        let t = Tree::finite(MultiIndex::new(1, 1));
        assert_eq!(t.len(), 5);
        let ch: Vec<_> = t.children(0).iter().map(|&c| t.proj(c)).collect();
        assert_eq!(ch, vec![MultiIndex::new(0, 1), MultiIndex::new(1, 0)]);
        assert!(t.canopy().iter().all(|&v| t.proj(v) == MultiIndex::new(0, 0)));
    }

    #[test]
    fn cayley_examples() {
        let t = Tree::cayley(0);
        assert_eq!(t.len(), 1);
        assert_eq!(t.proj(0), MultiIndex::new(1, 1));
        let t = Tree::cayley(2);
        assert_eq!(t.len(), 7);
        let projs: Vec<_> = t.vertices.iter().map(|v| (v.proj.n1, v.proj.n2)).collect();
        assert_eq!(projs, vec![(1, 1), (2, 1), (1, 2), (3, 1), (2, 2), (2, 2), (1, 3)]);
        assert_eq!(Tree::cayley(10).len(), 2047);
    }

    #[test]
    fn path_weight_examples() {
        let t = Tree::cayley(2);
        assert_eq!(path_weight(&t, &vec![1.0; 7], 5), 1.0);
        let mut w = vec![4.0; 7];
        w[0] = 1.0;
        assert_eq!(path_weight(&t, &w, 0), 1.0);
        assert!((path_weight(&t, &w, 3) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn dot_export_lists_edges() {
        let t = Tree::finite(MultiIndex::new(1, 1));
        let d = t.to_dot();
        assert_eq!(d.matches("->").count(), 4);
    }

    proptest! {
        #[test]
        fn fibre_counts_are_binomial(n1 in 1usize..5, n2 in 1usize..5) {
            let nn = MultiIndex::new(n1, n2);
            let t = Tree::finite(nn);
            let mut total = 0;
            for a in 0..=n1 {
                for b in 0..=n2 {
                    let c = t.vertices.iter().filter(|v| v.proj == MultiIndex::new(a, b)).count();
                    let expect = binomial(n1 + n2 - a - b, n1 - a);
                    prop_assert_eq!(c, expect);
                    total += expect;
                }
            }
            prop_assert_eq!(total, t.len());
        }

        #[test]
        fn projection_step_rule(n1 in 1usize..5, n2 in 1usize..5, d in 0usize..6) {
            let t = Tree::finite(MultiIndex::new(n1, n2));
            for v in 1..t.len() {
                let p = t.parent(v).unwrap();
                prop_assert_eq!(t.proj(v).plus(t.index(v)), t.proj(p));
            }
            let c = Tree::cayley(d);
            prop_assert_eq!(c.len(), (1usize << (d + 1)) - 1);
            for v in 1..c.len() {
                let p = c.parent(v).unwrap();
                prop_assert_eq!(c.proj(p).plus(c.index(v)), c.proj(v));
            }
        }
    }
}
