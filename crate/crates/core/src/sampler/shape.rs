use rand::Rng;

/// Largest internal-node count for which the shape tables are kept in `u128`.
pub const MAX_COUNTED_NODES: usize = 20;

/// Undecorated unary-binary tree.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TreeShape {
    Leaf,
    Unary(Box<TreeShape>),
    Binary(Box<TreeShape>, Box<TreeShape>),
}

impl TreeShape {
    pub fn internal_nodes(&self) -> usize {
        match self {
            TreeShape::Leaf => 0,
            TreeShape::Unary(a) => 1 + a.internal_nodes(),
            TreeShape::Binary(a, b) => 1 + a.internal_nodes() + b.internal_nodes(),
        }
    }
}

/// `counts[j]` is the number of distinct shapes with exactly `j` internal
/// nodes, for `j = 0..=k`.
///
/// A shape with `j` internal nodes is a unary node over a `j - 1` shape or a
/// binary node over shapes with `a` and `j - 1 - a` internal nodes.
pub fn count_shapes(k: usize) -> Vec<u128> {
    assert!(k <= MAX_COUNTED_NODES, "shape counts overflow-checked only up to {MAX_COUNTED_NODES}");
    let mut counts = vec![0u128; k + 1];
    counts[0] = 1;
    for j in 1..=k {
        let binary: u128 = (0..j).map(|a| counts[a] * counts[j - 1 - a]).sum();
        counts[j] = counts[j - 1] + binary;
    }
    counts
}

/// The `rank`-th shape with exactly `nodes` internal nodes, ordering unary
/// roots before binary roots and binary roots by left internal-node count.
pub fn unrank_shape(nodes: usize, rank: u128, counts: &[u128]) -> TreeShape {
    debug_assert!(rank < counts[nodes]);
    if nodes == 0 {
        return TreeShape::Leaf;
    }
    let unary = counts[nodes - 1];
    if rank < unary {
        return TreeShape::Unary(Box::new(unrank_shape(nodes - 1, rank, counts)));
    }
    let mut rank = rank - unary;
    for left in 0..nodes {
        let right = nodes - 1 - left;
        let block = counts[left] * counts[right];
        if rank < block {
            let l = unrank_shape(left, rank / counts[right], counts);
            let r = unrank_shape(right, rank % counts[right], counts);
            return TreeShape::Binary(Box::new(l), Box::new(r));
        }
        rank -= block;
    }
    unreachable!("rank within counts[nodes]")
}

/// Uniform draw over all shapes with at most `max_nodes` internal nodes.
pub fn sample_shape<R: Rng + ?Sized>(max_nodes: usize, rng: &mut R) -> TreeShape {
    let counts = count_shapes(max_nodes);
    let total: u128 = counts.iter().sum();
    let mut rank = rng.random_range(0..total);
    for (nodes, &c) in counts.iter().enumerate() {
        if rank < c {
            return unrank_shape(nodes, rank, &counts);
        }
        rank -= c;
    }
    unreachable!("rank within total")
}
