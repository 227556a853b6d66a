//! Prefix pool with sparse (bisection) placement and buddy growth.
//!
//! The pool is a lazily materialized binary tree over one root prefix. Each
//! node is Free, Allocated, or Split into its two halves. Two invariants are
//! maintained at all times:
//!
//! * no Split node has two Free children — freed siblings merge back, so the
//!   set of Free leaves is always the maximal free aggregates;
//! * every Split node has an Allocated descendant (a consequence of the
//!   first), so the tree shape is a pure function of the allocated set.
//!
//! Sparse placement picks the *largest* free aggregate that can host a
//! request (shortest prefix length), lowest address on ties, then carves the
//! lowest block of the requested length out of it. That leaves maximal
//! headroom next to every allocation, which is what makes later contiguous
//! growth likely to succeed and keeps holdings aggregatable into one route.
//!
//! Split nodes cache the shortest free-leaf length in their subtree, so
//! placement and free-space queries descend one path instead of walking the
//! whole tree.

use crate::amount::Amount;
use crate::prefix::Ipv6Prefix;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PoolError {
    #[error("no free block of length /{0} remains in the pool")]
    PoolExhausted(u8),
    #[error("{0} is not an allocated block of this pool")]
    NotAllocated(Ipv6Prefix),
    #[error("{0} is not free")]
    NotFree(Ipv6Prefix),
    #[error("length /{requested} cannot be carved from a /{root} pool")]
    LengthOutOfPool { requested: u8, root: u8 },
}

/// Sentinel for "no free leaf in this subtree".
const NO_FREE: u8 = u8::MAX;

#[derive(Clone, Debug, PartialEq, Eq)]
enum Node {
    Free,
    Allocated,
    Split {
        lower: Box<Node>,
        upper: Box<Node>,
        /// Shortest free-leaf length in this subtree (NO_FREE if none).
        best_free: u8,
    },
}

impl Node {
    /// Shortest free-leaf length in this subtree, given the node's own depth.
    fn best_free(&self, own_len: u8) -> u8 {
        match self {
            Node::Free => own_len,
            Node::Allocated => NO_FREE,
            Node::Split { best_free, .. } => *best_free,
        }
    }

    fn recompute_best(&mut self, own_len: u8) {
        if let Node::Split { lower, upper, best_free } = self {
            *best_free = lower.best_free(own_len + 1).min(upper.best_free(own_len + 1));
        }
    }
}

/// Outcome of a contiguous-growth allocation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ContiguousGrant {
    pub prefix: Ipv6Prefix,
    /// True when the grant is the buddy of the existing block, so the two
    /// announce as a single route of length - 1.
    pub aggregatable: bool,
}

/// Per-length allocation counts plus the exact free fraction of the pool.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utilization {
    pub allocated_by_length: BTreeMap<u8, u64>,
    pub free_fraction: Amount,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PoolSnapshot", into = "PoolSnapshot")]
pub struct PoolState {
    root_prefix: Ipv6Prefix,
    root: Node,
}

impl PoolState {
    pub fn new(root_prefix: Ipv6Prefix) -> Self {
        PoolState {
            root_prefix,
            root: Node::Free,
        }
    }

    pub fn root(&self) -> Ipv6Prefix {
        self.root_prefix
    }

    /// Where the next sparse allocation of `length` would land, without
    /// allocating it.
    pub fn peek_sparse(&self, length: u8) -> Result<Ipv6Prefix, PoolError> {
        if length > 128 || length < self.root_prefix.len() {
            return Err(PoolError::LengthOutOfPool {
                requested: length,
                root: self.root_prefix.len(),
            });
        }
        let mut node = &self.root;
        let mut prefix = self.root_prefix;
        if node.best_free(prefix.len()) > length {
            return Err(PoolError::PoolExhausted(length));
        }
        // Descend toward the shortest free leaf, preferring the lower half
        // on ties so equal-sized aggregates yield the lowest address.
        while let Node::Split { lower, upper, .. } = node {
            let (lo, hi) = prefix.split().expect("split node below /128");
            let lower_best = lower.best_free(lo.len());
            let upper_best = upper.best_free(hi.len());
            if lower_best <= upper_best && lower_best <= length {
                node = lower;
                prefix = lo;
            } else {
                node = upper;
                prefix = hi;
            }
        }
        debug_assert!(matches!(node, Node::Free));
        // The lowest block of the requested length inside the chosen
        // aggregate shares its address.
        Ok(Ipv6Prefix::new(prefix.addr(), length).expect("aligned by construction"))
    }

    /// Allocates a block of `length` by bisection: among all free aggregates
    /// that can host it, the one with the shortest prefix length wins (lowest
    /// address on ties), and the block is carved from its lower edge.
    pub fn allocate_sparse(&mut self, length: u8) -> Result<Ipv6Prefix, PoolError> {
        let target = self.peek_sparse(length)?;
        self.allocate_exact(target)?;
        Ok(target)
    }

    /// Grows an existing block: its buddy if that is entirely free
    /// (aggregatable), otherwise a sparse fallback at `fallback_length`.
    ///
    /// `existing` must be fully allocated in the pool — either a single
    /// allocated block or an aggregate completely covered by allocated
    /// blocks.
    pub fn allocate_contiguous(
        &mut self,
        existing: Ipv6Prefix,
        fallback_length: u8,
    ) -> Result<ContiguousGrant, PoolError> {
        let plan = self.peek_contiguous(existing, fallback_length)?;
        if plan.aggregatable {
            self.allocate_exact(plan.prefix)?;
        } else {
            let got = self.allocate_sparse(fallback_length)?;
            debug_assert_eq!(got, plan.prefix);
        }
        Ok(plan)
    }

    /// The grant `allocate_contiguous` would make, without making it.
    pub fn peek_contiguous(
        &self,
        existing: Ipv6Prefix,
        fallback_length: u8,
    ) -> Result<ContiguousGrant, PoolError> {
        if !self.is_fully_allocated(&existing) {
            return Err(PoolError::NotAllocated(existing));
        }
        if existing.len() > self.root_prefix.len() {
            let buddy = existing.buddy().expect("len > 0");
            if self.is_free(&buddy) {
                return Ok(ContiguousGrant {
                    prefix: buddy,
                    aggregatable: true,
                });
            }
        }
        Ok(ContiguousGrant {
            prefix: self.peek_sparse(fallback_length)?,
            aggregatable: false,
        })
    }

    /// Frees an allocated block. Freed siblings merge back into their parent,
    /// recursively, so free space always reappears as maximal aggregates.
    pub fn release(&mut self, prefix: Ipv6Prefix) -> Result<(), PoolError> {
        if !self.root_prefix.contains(&prefix) {
            return Err(PoolError::NotAllocated(prefix));
        }
        fn walk(node: &mut Node, at: Ipv6Prefix, target: Ipv6Prefix) -> Result<(), PoolError> {
            if at.len() == target.len() {
                return match node {
                    Node::Allocated => {
                        *node = Node::Free;
                        Ok(())
                    }
                    // A Split here means the block was never allocated as a
                    // unit; a Free leaf means it is not allocated at all.
                    _ => Err(PoolError::NotAllocated(target)),
                };
            }
            match node {
                Node::Split { lower, upper, .. } => {
                    let (lo, hi) = at.split().expect("split node below /128");
                    if lo.contains(&target) {
                        walk(lower, lo, target)?;
                    } else {
                        walk(upper, hi, target)?;
                    }
                    if matches!(**lower, Node::Free) && matches!(**upper, Node::Free) {
                        *node = Node::Free;
                    } else {
                        node.recompute_best(at.len());
                    }
                    Ok(())
                }
                _ => Err(PoolError::NotAllocated(target)),
            }
        }
        walk(&mut self.root, self.root_prefix, prefix)
    }

    /// True when every address in `prefix` is free.
    pub fn is_free(&self, prefix: &Ipv6Prefix) -> bool {
        if !self.root_prefix.contains(prefix) {
            return false;
        }
        let mut node = &self.root;
        let mut at = self.root_prefix;
        loop {
            match node {
                Node::Free => return true,
                Node::Allocated => return false,
                Node::Split { lower, upper, .. } => {
                    if at.len() == prefix.len() {
                        // Split means something below is allocated.
                        return false;
                    }
                    let (lo, hi) = at.split().expect("split node below /128");
                    if lo.contains(prefix) {
                        node = lower;
                        at = lo;
                    } else {
                        node = upper;
                        at = hi;
                    }
                }
            }
        }
    }

    /// True when every address in `prefix` is covered by allocated blocks —
    /// a single allocation, an aggregate of several, or the interior of a
    /// larger allocation.
    pub fn is_fully_allocated(&self, prefix: &Ipv6Prefix) -> bool {
        if !self.root_prefix.contains(prefix) {
            return false;
        }
        fn fully(node: &Node) -> bool {
            match node {
                Node::Free => false,
                Node::Allocated => true,
                Node::Split { lower, upper, .. } => fully(lower) && fully(upper),
            }
        }
        let mut node = &self.root;
        let mut at = self.root_prefix;
        while at.len() < prefix.len() {
            match node {
                Node::Free => return false,
                Node::Allocated => return true,
                Node::Split { lower, upper, .. } => {
                    let (lo, hi) = at.split().expect("split node below /128");
                    if lo.contains(prefix) {
                        node = lower;
                        at = lo;
                    } else {
                        node = upper;
                        at = hi;
                    }
                }
            }
        }
        fully(node)
    }

    /// All allocated blocks in address order.
    pub fn allocated(&self) -> Vec<Ipv6Prefix> {
        let mut out = Vec::new();
        fn walk(node: &Node, at: Ipv6Prefix, out: &mut Vec<Ipv6Prefix>) {
            match node {
                Node::Free => {}
                Node::Allocated => out.push(at),
                Node::Split { lower, upper, .. } => {
                    let (lo, hi) = at.split().expect("split node below /128");
                    walk(lower, lo, out);
                    walk(upper, hi, out);
                }
            }
        }
        walk(&self.root, self.root_prefix, &mut out);
        out
    }

    /// Allocation counts per prefix length plus the exact free fraction.
    pub fn utilization(&self) -> Utilization {
        let mut counts: BTreeMap<u8, u64> = BTreeMap::new();
        let mut free = Amount::zero();
        let root_len = self.root_prefix.len();
        fn walk(
            node: &Node,
            at: Ipv6Prefix,
            root_len: u8,
            counts: &mut BTreeMap<u8, u64>,
            free: &mut Amount,
        ) {
            match node {
                Node::Free => {
                    // This leaf is 2^-(len - root_len) of the pool.
                    *free += &Amount::from_u64(1)
                        .checked_div(&Amount::from_u64(1).scale_pow2((at.len() - root_len) as u32))
                        .expect("power of two is nonzero");
                }
                Node::Allocated => *counts.entry(at.len()).or_insert(0) += 1,
                Node::Split { lower, upper, .. } => {
                    let (lo, hi) = at.split().expect("split node below /128");
                    walk(lower, lo, root_len, counts, free);
                    walk(upper, hi, root_len, counts, free);
                }
            }
        }
        walk(&self.root, self.root_prefix, root_len, &mut counts, &mut free);
        Utilization {
            allocated_by_length: counts,
            free_fraction: free,
        }
    }

    /// Marks exactly `prefix` allocated, splitting free space as needed.
    /// Crate-internal: the registry uses it to commit a previously peeked
    /// growth plan; external callers go through the placement policies.
    pub(crate) fn allocate_exact(&mut self, prefix: Ipv6Prefix) -> Result<(), PoolError> {
        if !self.root_prefix.contains(&prefix) {
            return Err(PoolError::NotFree(prefix));
        }
        fn walk(node: &mut Node, at: Ipv6Prefix, target: Ipv6Prefix) -> Result<(), PoolError> {
            if at.len() == target.len() {
                return match node {
                    Node::Free => {
                        *node = Node::Allocated;
                        Ok(())
                    }
                    _ => Err(PoolError::NotFree(target)),
                };
            }
            match node {
                Node::Allocated => Err(PoolError::NotFree(target)),
                Node::Free => {
                    *node = Node::Split {
                        lower: Box::new(Node::Free),
                        upper: Box::new(Node::Free),
                        best_free: at.len() + 1,
                    };
                    walk(node, at, target)
                }
                Node::Split { lower, upper, .. } => {
                    let (lo, hi) = at.split().expect("split node below /128");
                    if lo.contains(&target) {
                        walk(lower, lo, target)?;
                    } else {
                        walk(upper, hi, target)?;
                    }
                    node.recompute_best(at.len());
                    Ok(())
                }
            }
        }
        walk(&mut self.root, self.root_prefix, prefix)
    }

    /// Internal consistency check used by tests: cached best-free values are
    /// correct and no Split node has two Free children.
    #[cfg(test)]
    fn check_invariants(&self) {
        fn walk(node: &Node, len: u8) -> u8 {
            match node {
                Node::Free => len,
                Node::Allocated => NO_FREE,
                Node::Split { lower, upper, best_free } => {
                    assert!(
                        !(matches!(**lower, Node::Free) && matches!(**upper, Node::Free)),
                        "unmerged free siblings at /{len}"
                    );
                    let lb = walk(lower, len + 1);
                    let ub = walk(upper, len + 1);
                    assert_eq!(*best_free, lb.min(ub), "stale best-free cache at /{len}");
                    lb.min(ub)
                }
            }
        }
        walk(&self.root, self.root_prefix.len());
    }
}

/// Canonical serialized form: the allocated set. The tree shape is a pure
/// function of it, so rebuilding on load gives back an identical pool.
#[derive(Serialize, Deserialize)]
struct PoolSnapshot {
    root: Ipv6Prefix,
    allocated: Vec<Ipv6Prefix>,
}

impl From<PoolState> for PoolSnapshot {
    fn from(pool: PoolState) -> Self {
        PoolSnapshot {
            root: pool.root_prefix,
            allocated: pool.allocated(),
        }
    }
}

impl TryFrom<PoolSnapshot> for PoolState {
    type Error = String;

    fn try_from(snap: PoolSnapshot) -> Result<Self, Self::Error> {
        let mut pool = PoolState::new(snap.root);
        for p in snap.allocated {
            pool.allocate_exact(p)
                .map_err(|e| format!("inconsistent pool snapshot: {e}"))?;
        }
        Ok(pool)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pfx(s: &str) -> Ipv6Prefix {
        s.parse().unwrap()
    }

    fn pool20() -> PoolState {
        PoolState::new(pfx("2001:1000::/20"))
    }

    #[test]
    fn first_allocation_takes_lowest_block() {
        let mut pool = pool20();
        assert_eq!(pool.allocate_sparse(32).unwrap(), pfx("2001:1000::/32"));
        pool.check_invariants();
    }

    #[test]
    fn second_allocation_bisects_largest_free_aggregate() {
        let mut pool = pool20();
        pool.allocate_sparse(32).unwrap();
        // The largest remaining aggregate is the upper /21; its lowest /32.
        assert_eq!(pool.allocate_sparse(32).unwrap(), pfx("2001:1800::/32"));
        pool.check_invariants();
    }

    #[test]
    fn utilization_after_one_slash32() {
        let mut pool = pool20();
        pool.allocate_sparse(32).unwrap();
        let u = pool.utilization();
        assert_eq!(u.allocated_by_length, BTreeMap::from([(32u8, 1u64)]));
        assert_eq!(u.free_fraction, Amount::ratio(4095, 4096));
    }

    #[test]
    fn pool_exhaustion_at_4096_slash32s() {
        let mut pool = pool20();
        for _ in 0..4096 {
            pool.allocate_sparse(32).unwrap();
        }
        assert_eq!(pool.allocate_sparse(32), Err(PoolError::PoolExhausted(32)));
        let u = pool.utilization();
        assert_eq!(u.allocated_by_length[&32], 4096);
        assert_eq!(u.free_fraction, Amount::zero());
    }

    #[test]
    fn release_restores_prior_state() {
        let mut pool = pool20();
        let a = pool.allocate_sparse(32).unwrap();
        let before = pool.clone();
        let b = pool.allocate_sparse(48).unwrap();
        pool.release(b).unwrap();
        assert_eq!(pool, before);
        pool.release(a).unwrap();
        assert_eq!(pool, pool20());
        pool.check_invariants();
    }

    #[test]
    fn release_keeps_allocated_sibling() {
        // Two sibling blocks inside a /33; releasing one must not disturb
        // the other, and the freed half must not merge upward.
        let mut pool = PoolState::new(pfx("2001:db8::/32"));
        let a = pool.allocate_sparse(33).unwrap();
        let b = pool.allocate_sparse(33).unwrap();
        assert_eq!(a.buddy().unwrap(), b);
        pool.release(a).unwrap();
        assert_eq!(pool.allocated(), vec![b]);
        assert!(pool.is_free(&a));
        assert!(!pool.is_free(&b));
        pool.check_invariants();
    }

    #[test]
    fn release_rejects_non_allocations() {
        let mut pool = pool20();
        let a = pool.allocate_sparse(32).unwrap();
        // Never allocated.
        assert_eq!(
            pool.release(pfx("2001:1800::/32")),
            Err(PoolError::NotAllocated(pfx("2001:1800::/32")))
        );
        // A sub-block of an allocation is not releasable as a unit.
        assert_eq!(
            pool.release(pfx("2001:1000::/40")),
            Err(PoolError::NotAllocated(pfx("2001:1000::/40")))
        );
        // An aggregate above an allocation is not releasable as a unit.
        assert_eq!(
            pool.release(pfx("2001:1000::/31")),
            Err(PoolError::NotAllocated(pfx("2001:1000::/31")))
        );
        pool.release(a).unwrap();
    }

    #[test]
    fn growth_takes_free_buddy() {
        let mut pool = pool20();
        let a = pool.allocate_sparse(32).unwrap();
        let grant = pool.allocate_contiguous(a, 32).unwrap();
        assert_eq!(
            grant,
            ContiguousGrant {
                prefix: pfx("2001:1001::/32"),
                aggregatable: true
            }
        );
        pool.check_invariants();
    }

    #[test]
    fn growth_falls_back_to_sparse_when_buddy_taken() {
        let mut pool = pool20();
        let a = pool.allocate_sparse(32).unwrap();
        let b = pool.allocate_contiguous(a, 32).unwrap().prefix;
        // b's buddy is a itself, already allocated: sparse fallback.
        let grant = pool.allocate_contiguous(b, 32).unwrap();
        assert_eq!(
            grant,
            ContiguousGrant {
                prefix: pfx("2001:1800::/32"),
                aggregatable: false
            }
        );
        pool.check_invariants();
    }

    #[test]
    fn growth_of_unallocated_prefix_is_rejected() {
        let mut pool = pool20();
        assert_eq!(
            pool.allocate_contiguous(pfx("2001:1000::/32"), 32),
            Err(PoolError::NotAllocated(pfx("2001:1000::/32")))
        );
    }

    #[test]
    fn growth_of_fully_covered_aggregate() {
        // Two sibling /32s form a fully allocated /31; growing the aggregate
        // grants the buddy /31 as a single block.
        let mut pool = pool20();
        let a = pool.allocate_sparse(32).unwrap();
        pool.allocate_contiguous(a, 32).unwrap();
        let grant = pool.allocate_contiguous(pfx("2001:1000::/31"), 32).unwrap();
        assert_eq!(
            grant,
            ContiguousGrant {
                prefix: pfx("2001:1002::/31"),
                aggregatable: true
            }
        );
        assert!(pool.is_fully_allocated(&pfx("2001:1000::/30")));
        pool.check_invariants();
    }

    #[test]
    fn peek_matches_allocate() {
        let mut pool = pool20();
        for len in [32u8, 48, 32, 40, 48, 32] {
            let peeked = pool.peek_sparse(len).unwrap();
            assert_eq!(pool.allocate_sparse(len).unwrap(), peeked);
        }
    }

    #[test]
    fn serde_round_trip_preserves_tree() {
        let mut pool = pool20();
        let a = pool.allocate_sparse(32).unwrap();
        pool.allocate_sparse(48).unwrap();
        pool.allocate_contiguous(a, 32).unwrap();
        let json = serde_json::to_string(&pool).unwrap();
        let back: PoolState = serde_json::from_str(&json).unwrap();
        assert_eq!(back, pool);
        assert_eq!(serde_json::to_string(&back).unwrap(), json);
    }

    // --- randomized equivalence against a brute-force model ---------------

    /// Free aggregates computed from scratch out of the allocated set alone:
    /// the maximal prefixes disjoint from every allocation.
    fn free_aggregates(at: Ipv6Prefix, allocated: &[Ipv6Prefix]) -> Vec<Ipv6Prefix> {
        if allocated.iter().any(|a| a.contains(&at) || *a == at) {
            return vec![];
        }
        if !allocated.iter().any(|a| at.contains(a)) {
            return vec![at];
        }
        let (lo, hi) = at.split().expect("overlapping allocation below /128");
        let mut out = free_aggregates(lo, allocated);
        out.extend(free_aggregates(hi, allocated));
        out
    }

    /// Reference placement: shortest free aggregate, lowest address, carve
    /// from the lower edge.
    fn oracle_sparse(root: Ipv6Prefix, allocated: &[Ipv6Prefix], length: u8) -> Option<Ipv6Prefix> {
        free_aggregates(root, allocated)
            .into_iter()
            .filter(|f| f.len() <= length)
            .min_by_key(|f| (f.len(), f.addr()))
            .map(|f| Ipv6Prefix::new(f.addr(), length).unwrap())
    }

    proptest! {
        /// Random allocate/release/grow traces over a narrow pool: placement
        /// always equals the brute-force rule, allocations never overlap,
        /// and free space always accounts for the remainder.
        #[test]
        fn random_traces_match_brute_force(ops in proptest::collection::vec((0u8..4, 0u8..16), 1..60)) {
            let root = pfx("2001:1000::/20");
            let mut pool = PoolState::new(root);
            let mut live: Vec<Ipv6Prefix> = Vec::new();
            for (kind, pick) in ops {
                match kind {
                    // allocate at one of a few lengths
                    0 | 1 => {
                        let length = [24u8, 26, 28][(pick % 3) as usize];
                        let expected = oracle_sparse(root, &live, length);
                        match pool.allocate_sparse(length) {
                            Ok(got) => {
                                prop_assert_eq!(Some(got), expected);
                                live.push(got);
                            }
                            Err(PoolError::PoolExhausted(_)) => prop_assert_eq!(expected, None),
                            Err(e) => prop_assert!(false, "unexpected error {:?}", e),
                        }
                    }
                    // release a random live block
                    2 => {
                        if !live.is_empty() {
                            let victim = live.remove(pick as usize % live.len());
                            pool.release(victim).unwrap();
                        }
                    }
                    // grow a random live block
                    _ => {
                        if !live.is_empty() {
                            let base = live[pick as usize % live.len()];
                            if let Ok(grant) = pool.allocate_contiguous(base, base.len()) {
                                if grant.aggregatable {
                                    prop_assert_eq!(grant.prefix, base.buddy().unwrap());
                                }
                                live.push(grant.prefix);
                            }
                        }
                    }
                }
                pool.check_invariants();
                // No overlaps among live allocations.
                for (i, a) in live.iter().enumerate() {
                    for b in &live[i + 1..] {
                        prop_assert!(!a.contains(b) && !b.contains(a), "{} overlaps {}", a, b);
                    }
                }
                prop_assert_eq!(pool.allocated(), {
                    let mut sorted = live.clone();
                    sorted.sort();
                    sorted
                });
            }
        }
    }
}
