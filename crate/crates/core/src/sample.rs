//! Sorted multiset of capped runtimes with fast rank queries.
//!
//! Values live in sorted blocks; a segment tree over the blocks holds
//! counts and sums. Insertion, removal, order statistics and prefix sums
//! cost `O(B + log n)` for block size `B`.
//!
//! Every stored sum is recomputed from the values beneath it, never updated
//! by deltas, so all results are a pure function of the values and the block
//! layout. Persisting [`SortedSample::layout`] therefore reproduces results
//! bit for bit.

use crate::lcb::{epsilon_unchecked, LevelProfile, MAX_EPSILON, MIN_ITERATION};

const BLOCK: usize = 512;

#[derive(Debug, Clone, Default, PartialEq)]
struct Block {
    values: Vec<f64>,
    /// `prefix[i]` is the sum of `values[..=i]`.
    prefix: Vec<f64>,
}

impl Block {
    fn new(values: Vec<f64>) -> Self {
        let mut b = Self {
            values,
            prefix: Vec::new(),
        };
        b.refresh();
        b
    }

    fn refresh(&mut self) {
        self.prefix.clear();
        let mut acc = 0.0;
        for &v in &self.values {
            acc += v;
            self.prefix.push(acc);
        }
    }

    fn sum(&self) -> f64 {
        self.prefix.last().copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SortedSample {
    blocks: Vec<Block>,
    /// Segment tree with `cap` leaves at `cap..2·cap`.
    counts: Vec<usize>,
    sums: Vec<f64>,
    cap: usize,
    len: usize,
}

impl SortedSample {
    pub fn new() -> Self {
        Self::default()
    }

    /// From ascending values, in blocks of the given lengths; default blocks
    /// when `layout` is `None` or does not add up to `values.len()`.
    pub fn from_sorted(values: &[f64], layout: Option<&[usize]>) -> Self {
        let valid = layout.filter(|l| l.iter().all(|&n| n > 0) && l.iter().sum::<usize>() == values.len());
        let blocks = match valid {
            Some(lengths) => {
                let mut start = 0;
                lengths
                    .iter()
                    .map(|&n| {
                        start += n;
                        Block::new(values[start - n..start].to_vec())
                    })
                    .collect()
            }
            None => values.chunks(BLOCK).map(|c| Block::new(c.to_vec())).collect(),
        };
        let mut s = Self {
            blocks,
            len: values.len(),
            ..Self::default()
        };
        s.rebuild();
        s
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Block lengths, for persisting.
    pub fn layout(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.values.len()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.blocks.iter().flat_map(|b| b.values.iter().copied())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.iter().collect()
    }

    pub fn total(&self) -> f64 {
        if self.cap == 0 {
            0.0
        } else {
            self.sums[1]
        }
    }

    pub fn insert(&mut self, v: f64) {
        if self.blocks.is_empty() {
            self.blocks.push(Block::new(vec![v]));
            self.len = 1;
            self.rebuild();
            return;
        }
        let b = self
            .blocks
            .partition_point(|blk| *blk.values.last().expect("blocks are non-empty") <= v)
            .min(self.blocks.len() - 1);
        let block = &mut self.blocks[b];
        let idx = block.values.partition_point(|x| *x <= v);
        block.values.insert(idx, v);
        self.len += 1;
        if block.values.len() > 2 * BLOCK {
            let tail = block.values.split_off(BLOCK);
            block.refresh();
            self.blocks.insert(b + 1, Block::new(tail));
            self.rebuild();
        } else {
            block.refresh();
            self.update_leaf(b);
        }
    }

    /// Removes one copy of `v`; false when absent.
    pub fn remove(&mut self, v: f64) -> bool {
        let b = self
            .blocks
            .partition_point(|blk| *blk.values.last().expect("blocks are non-empty") < v);
        let Some(block) = self.blocks.get_mut(b) else {
            return false;
        };
        let idx = block.values.partition_point(|x| *x < v);
        if block.values.get(idx) != Some(&v) {
            return false;
        }
        block.values.remove(idx);
        self.len -= 1;
        if block.values.is_empty() {
            self.blocks.remove(b);
            self.rebuild();
        } else {
            block.refresh();
            self.update_leaf(b);
        }
        true
    }

    /// The `rank`-th smallest value, 0-based.
    pub fn get(&self, rank: usize) -> f64 {
        assert!(rank < self.len, "rank {rank} out of range for {} values", self.len);
        let (b, within) = self.locate(rank + 1);
        self.blocks[b].values[within - 1]
    }

    /// Sum of the `k` smallest values.
    pub fn prefix_sum(&self, k: usize) -> f64 {
        assert!(k <= self.len);
        if k == 0 {
            return 0.0;
        }
        if k == self.len {
            return self.total();
        }
        let mut node = 1;
        let mut remaining = k;
        let mut acc = 0.0;
        while node < self.cap {
            let left = 2 * node;
            if remaining <= self.counts[left] {
                node = left;
            } else {
                acc += self.sums[left];
                remaining -= self.counts[left];
                node = left + 1;
            }
        }
        acc + self.blocks[node - self.cap].prefix[remaining - 1]
    }

    /// Block holding the `k`-th smallest value (1-based), and its 1-based
    /// position inside the block.
    fn locate(&self, k: usize) -> (usize, usize) {
        let mut node = 1;
        let mut remaining = k;
        while node < self.cap {
            let left = 2 * node;
            if remaining <= self.counts[left] {
                node = left;
            } else {
                remaining -= self.counts[left];
                node = left + 1;
            }
        }
        (node - self.cap, remaining)
    }

    fn rebuild(&mut self) {
        let n = self.blocks.len();
        if n == 0 {
            self.cap = 0;
            self.counts.clear();
            self.sums.clear();
            return;
        }
        self.cap = n.next_power_of_two();
        self.counts = vec![0; 2 * self.cap];
        self.sums = vec![0.0; 2 * self.cap];
        for (i, b) in self.blocks.iter().enumerate() {
            self.counts[self.cap + i] = b.values.len();
            self.sums[self.cap + i] = b.sum();
        }
        for node in (1..self.cap).rev() {
            self.pull(node);
        }
    }

    fn update_leaf(&mut self, b: usize) {
        let mut node = self.cap + b;
        self.counts[node] = self.blocks[b].values.len();
        self.sums[node] = self.blocks[b].sum();
        while node > 1 {
            node /= 2;
            self.pull(node);
        }
    }

    fn pull(&mut self, node: usize) {
        self.counts[node] = self.counts[2 * node] + self.counts[2 * node + 1];
        self.sums[node] = self.sums[2 * node] + self.sums[2 * node + 1];
    }

    /// Level masses for every level that can contribute at iterations `t`
    /// or later.
    ///
    /// With `v` ascending, level `ℓ` covers positions `[a, b)` and
    /// `Σ (v[m] - v[m-1])·(r - m)` over that range telescopes to
    /// `v[b-1]·(r-b+1) - v[a-1]·(r-a) + Σ_{a ≤ m ≤ b-2} v[m]`.
    pub fn profile(&self, t: u64) -> LevelProfile {
        let r = self.len as u64;
        let t = t.max(MIN_ITERATION);
        let mut mass = Vec::new();
        if r == 0 {
            return LevelProfile::from_parts(0, mass);
        }
        let rf = r as f64;
        let value_before = |pos: u64| if pos == 0 { 0.0 } else { self.get(pos as usize - 1) };
        let mut level = 1u32;
        let mut a = 0u64;
        loop {
            if epsilon_unchecked(level, r, t) > MAX_EPSILON || a >= r {
                break;
            }
            // Level ≥ ℓ+1 starts where the survival count drops to ⌊r / 2^(ℓ+1)⌋.
            let b = if level + 1 >= 64 { r } else { r - (r >> (level + 1)) };
            let m = if b > a {
                let head = value_before(b) * (r - b + 1) as f64;
                let tail = value_before(a) * (r - a) as f64;
                let inner = self.prefix_sum(b as usize - 1) - self.prefix_sum(a as usize);
                ((head - tail + inner) / rf).max(0.0)
            } else {
                0.0
            };
            mass.push(m);
            a = b;
            level += 1;
        }
        LevelProfile::from_parts(r, mass)
    }
}
