//! Comparison-counting sorts for short per-pixel fragment lists.

use std::str::FromStr;

/// Gap sequence for shell sort, applied in this order.
pub const SHELL_GAPS: [usize; 4] = [24, 9, 4, 1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sorter {
    Insertion,
    Shell,
    Heap,
}

impl Sorter {
    pub const ALL: [Sorter; 3] = [Sorter::Insertion, Sorter::Shell, Sorter::Heap];

    /// Sorts ascending in place and returns the number of key comparisons.
    pub fn sort<T: Ord + Copy>(self, v: &mut [T]) -> u64 {
        match self {
            Sorter::Insertion => sort_insertion(v),
            Sorter::Shell => sort_shell(v),
            Sorter::Heap => sort_heap(v),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Sorter::Insertion => "insertion",
            Sorter::Shell => "shell",
            Sorter::Heap => "heap",
        }
    }
}

impl FromStr for Sorter {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "insertion" => Ok(Sorter::Insertion),
            "shell" => Ok(Sorter::Shell),
            "heap" => Ok(Sorter::Heap),
            _ => Err(format!("unknown sorter '{s}'")),
        }
    }
}

fn gapped_insertion<T: Ord + Copy>(v: &mut [T], gap: usize) -> u64 {
    let mut comparisons = 0;
    for i in gap..v.len() {
        let x = v[i];
        let mut j = i;
        while j >= gap {
            comparisons += 1;
            if v[j - gap] > x {
                v[j] = v[j - gap];
                j -= gap;
            } else {
                break;
            }
        }
        v[j] = x;
    }
    comparisons
}

pub fn sort_insertion<T: Ord + Copy>(v: &mut [T]) -> u64 {
    gapped_insertion(v, 1)
}

/// Shell sort with gaps 24, 9, 4, 1; gaps not smaller than the length are skipped.
pub fn sort_shell<T: Ord + Copy>(v: &mut [T]) -> u64 {
    let n = v.len();
    SHELL_GAPS
        .iter()
        .filter(|&&g| g < n || g == 1)
        .map(|&g| gapped_insertion(v, g))
        .sum()
}

/// Array-backed binary min-heap counting key comparisons.
#[derive(Debug, Clone)]
pub struct MinHeap<T> {
    items: Vec<T>,
    comparisons: u64,
}

impl<T: Ord + Copy> MinHeap<T> {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            items: Vec::with_capacity(n),
            comparisons: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn comparisons(&self) -> u64 {
        self.comparisons
    }

    pub fn push(&mut self, x: T) {
        let mut i = self.items.len();
        self.items.push(x);
        while i > 0 {
            let parent = (i - 1) / 2;
            self.comparisons += 1;
            if self.items[parent] > x {
                self.items[i] = self.items[parent];
                i = parent;
            } else {
                break;
            }
        }
        self.items[i] = x;
    }

    pub fn pop(&mut self) -> Option<T> {
        let last = self.items.pop()?;
        if self.items.is_empty() {
            return Some(last);
        }
        let root = self.items[0];
        let n = self.items.len();
        let mut i = 0;
        loop {
            let l = 2 * i + 1;
            if l >= n {
                break;
            }
            let mut child = l;
            if l + 1 < n {
                self.comparisons += 1;
                if self.items[l + 1] < self.items[l] {
                    child = l + 1;
                }
            }
            self.comparisons += 1;
            if self.items[child] < last {
                self.items[i] = self.items[child];
                i = child;
            } else {
                break;
            }
        }
        self.items[i] = last;
        Some(root)
    }

    /// Every parent is no greater than its children.
    pub fn is_valid(&self) -> bool {
        (1..self.items.len()).all(|i| self.items[(i - 1) / 2] <= self.items[i])
    }
}

/// Inserts every element into a min-heap, then removes the root until empty.
pub fn sort_heap<T: Ord + Copy>(v: &mut [T]) -> u64 {
    let mut heap = MinHeap::with_capacity(v.len());
    for &x in v.iter() {
        heap.push(x);
    }
    for slot in v.iter_mut() {
        *slot = heap.pop().expect("heap holds one item per slot");
    }
    heap.comparisons()
}
