//! Resource profile over discrete time: range add, range max, global max,
//! all in O(log T). Also tracks how many time points sit at the global max.

use crate::{Cores, Time};

#[derive(Debug, Clone)]
pub(crate) struct Profile {
    size: usize,
    // max over the node's range, including this node's pending add
    max: Vec<Cores>,
    add: Vec<Cores>,
    // number of leaves under the node attaining `max`
    count: Vec<u32>,
    len: usize,
}

// padding leaves sit far below any real level
const PAD: Cores = Cores::MIN / 4;

impl Profile {
    pub fn new(len: usize) -> Self {
        let len = len.max(1);
        let size = len.next_power_of_two();
        let mut prof = Self { size, max: vec![0; 2 * size], add: vec![0; 2 * size], count: vec![1; 2 * size], len };
        for leaf in size + len..2 * size {
            prof.max[leaf] = PAD;
        }
        for i in (1..size).rev() {
            prof.combine(i);
        }
        prof
    }

    #[inline]
    fn combine(&mut self, i: usize) {
        let (a, b) = (self.max[2 * i], self.max[2 * i + 1]);
        self.count[i] = match a.cmp(&b) {
            std::cmp::Ordering::Greater => self.count[2 * i],
            std::cmp::Ordering::Less => self.count[2 * i + 1],
            std::cmp::Ordering::Equal => self.count[2 * i] + self.count[2 * i + 1],
        };
        self.max[i] = a.max(b) + self.add[i];
    }

    fn clamp(&self, t: Time) -> usize {
        t.clamp(0, self.len as Time) as usize
    }

    /// Adds `v` on the half-open range `[from, to)`.
    pub fn add(&mut self, from: Time, to: Time, v: Cores) {
        let (l, r) = (self.clamp(from), self.clamp(to));
        if l >= r || v == 0 {
            return;
        }
        let (first, last) = (l + self.size, r - 1 + self.size);
        let (mut l, mut r) = (first, r + self.size);
        while l < r {
            if l & 1 == 1 {
                self.max[l] += v;
                self.add[l] += v;
                l += 1;
            }
            if r & 1 == 1 {
                r -= 1;
                self.max[r] += v;
                self.add[r] += v;
            }
            l >>= 1;
            r >>= 1;
        }
        self.pull(first);
        self.pull(last);
    }

    fn pull(&mut self, leaf: usize) {
        let mut i = leaf >> 1;
        while i >= 1 {
            self.combine(i);
            i >>= 1;
        }
    }

    /// Maximum level on `[from, to)`; 0 for an empty range.
    #[allow(dead_code)]
    pub fn range_max(&self, from: Time, to: Time) -> Cores {
        let (l, r) = (self.clamp(from), self.clamp(to));
        if l >= r {
            return 0;
        }
        self.max_rec(1, 0, self.size, l, r)
    }

    fn max_rec(&self, node: usize, nl: usize, nr: usize, l: usize, r: usize) -> Cores {
        if l <= nl && nr <= r {
            return self.max[node];
        }
        let mid = (nl + nr) / 2;
        let mut best = Cores::MIN;
        if l < mid {
            best = best.max(self.max_rec(2 * node, nl, mid, l, r));
        }
        if mid < r {
            best = best.max(self.max_rec(2 * node + 1, mid, nr, l, r));
        }
        best + self.add[node]
    }

    pub fn peak(&self) -> Cores {
        self.max[1]
    }

    /// Number of time points at the peak level.
    pub fn peak_width(&self) -> u32 {
        self.count[1]
    }
}
