//! First-supersegment search within a list, seeded by the previous list's result.
//!
//! Works on a [`ListView`] so the same code serves rays travelling away from the
//! generation camera (increasing NDC z) and toward it, where the list is read
//! back to front with negated depths.

use crate::vdi::Supersegment;

pub trait ListView {
    fn len(&self) -> usize;
    fn front(&self, j: usize) -> f64;
    fn back(&self, j: usize) -> f64;
    /// Index into the underlying slice.
    fn original(&self, j: usize) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub struct Forward<'a>(pub &'a [Supersegment]);

impl ListView for Forward<'_> {
    #[inline]
    fn len(&self) -> usize {
        self.0.len()
    }
    #[inline]
    fn front(&self, j: usize) -> f64 {
        self.0[j].front as f64
    }
    #[inline]
    fn back(&self, j: usize) -> f64 {
        self.0[j].back as f64
    }
    #[inline]
    fn original(&self, j: usize) -> usize {
        j
    }
}

/// The list in reverse order with depths negated; still sorted ascending.
pub struct Mirrored<'a>(pub &'a [Supersegment]);

impl ListView for Mirrored<'_> {
    #[inline]
    fn len(&self) -> usize {
        self.0.len()
    }
    #[inline]
    fn front(&self, j: usize) -> f64 {
        -(self.0[self.0.len() - 1 - j].back as f64)
    }
    #[inline]
    fn back(&self, j: usize) -> f64 {
        -(self.0[self.0.len() - 1 - j].front as f64)
    }
    #[inline]
    fn original(&self, j: usize) -> usize {
        self.0.len() - 1 - j
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchResult {
    /// First supersegment intersected, as a view index.
    pub index: Option<usize>,
    /// Candidate index examined last (the binary-search insertion point when
    /// nothing was hit); used as the next seed.
    pub probe: usize,
    /// Number of depth values read.
    pub reads: u32,
}

/// First `j` in `[start, stop]` (clamped to the list) with `back[j] >= d`, and the reads used.
///
/// Returns the insertion point `stop + 1` (clamped to `len`) when there is none.
pub fn bin_search<L: ListView>(list: &L, d: f64, start: usize, stop: usize) -> (usize, bool, u32) {
    let n = list.len();
    if n == 0 || start >= n {
        return (start.min(n), false, 0);
    }
    let mut lo = start;
    let mut hi = stop.min(n - 1) + 1;
    let end = hi;
    let mut reads = 0;
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        reads += 1;
        if list.back(mid) >= d {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    (lo, lo < end, reads)
}

/// Seeded search for the first supersegment a ray meets on `[d_entry, d_exit]`.
///
/// `p` is the index of the last supersegment intersected in the previous list.
/// With `back[p-1] < d_entry <= back[p]` the answer is `p` without a search;
/// otherwise only the side of `p` that can hold it is binary-searched. A
/// candidate whose front lies beyond `d_exit` means the ray passes between
/// supersegments.
pub fn find_first<L: ListView>(list: &L, d_entry: f64, d_exit: f64, p: Option<usize>) -> SearchResult {
    let n = list.len();
    let mut reads = 0;
    let mut range = None;
    let mut hit = None;
    match p {
        None => range = Some((0, n.saturating_sub(1))),
        Some(p) => {
            let b1 = if p < n {
                reads += 1;
                list.back(p)
            } else {
                f64::INFINITY
            };
            let b0 = if p >= 1 && p - 1 < n {
                reads += 1;
                list.back(p - 1)
            } else {
                f64::NEG_INFINITY
            };
            let interval = (b1 >= d_entry) as u8 + (b0 >= d_entry) as u8;
            match interval {
                0 => range = Some((p + 1, n.saturating_sub(1))),
                2 => range = Some((0, p - 1)),
                _ => {
                    if b1 < f64::INFINITY {
                        hit = Some(p);
                    } else if p >= 1 {
                        range = Some((0, p - 1));
                    }
                }
            }
        }
    }
    let mut probe = hit.unwrap_or(0);
    if let Some((start, stop)) = range {
        let (j, found, r) = if n == 0 { (0, false, 0) } else { bin_search(list, d_entry, start, stop) };
        reads += r;
        probe = j;
        hit = found.then_some(j);
    } else if hit.is_none() {
        probe = p.unwrap_or(0).min(n);
    }
    if let Some(j) = hit {
        reads += 1;
        if list.front(j) > d_exit {
            hit = None;
        }
    }
    SearchResult { index: hit, probe, reads }
}

/// Unseeded forward search on a plain slice.
pub fn find_first_supersegment(list: &[Supersegment], d_entry: f64, d_exit: f64, p: Option<usize>) -> Option<usize> {
    find_first(&Forward(list), d_entry, d_exit, p).index
}

#[cfg(test)]
mod tests {
    use super::*;

    fn list(pairs: &[(f32, f32)]) -> Vec<Supersegment> {
        pairs
            .iter()
            .map(|&(front, back)| Supersegment { front, back, color: [0.0; 3], alpha: 0.0 })
            .collect()
    }

    #[test]
    fn interval_one_returns_seed() {
        let l = list(&[(0.0, 0.2), (0.3, 0.5), (0.6, 0.8)]);
        let r = find_first(&Forward(&l), 0.3, 0.9, Some(1));
        assert_eq!(r.index, Some(1));
        assert_eq!(r.reads, 3);
    }

    #[test]
    fn interval_zero_searches_behind() {
        let l = list(&[(0.0, 0.2), (0.3, 0.5), (0.55, 0.7)]);
        assert_eq!(find_first(&Forward(&l), 0.6, 0.9, Some(1)).index, Some(2));
        assert_eq!(find_first(&Forward(&l), 0.75, 0.9, Some(1)).index, None);
    }

    #[test]
    fn interval_two_searches_in_front() {
        let l = list(&[(0.0, 0.2), (0.3, 0.5), (0.55, 0.7)]);
        assert_eq!(find_first(&Forward(&l), 0.1, 0.9, Some(2)).index, Some(0));
    }

    #[test]
    fn gap_between_supersegments() {
        let l = list(&[(0.0, 0.2), (0.6, 0.8)]);
        let r = find_first(&Forward(&l), 0.3, 0.5, None);
        assert_eq!(r.index, None);
        assert_eq!(r.probe, 1);
    }

    #[test]
    fn tie_on_back_counts_as_hit() {
        let l = list(&[(0.0, 0.2), (0.2, 0.4)]);
        assert_eq!(find_first(&Forward(&l), 0.2f32 as f64, 0.3, None).index, Some(0));
    }

    #[test]
    fn seed_past_end() {
        let l = list(&[(0.0, 0.2), (0.3, 0.4)]);
        assert_eq!(find_first(&Forward(&l), 0.1, 0.5, Some(5)).index, Some(0));
        assert_eq!(find_first(&Forward(&l), 0.45, 0.5, Some(2)).index, None);
        assert_eq!(find_first(&Forward(&[]), 0.45, 0.5, Some(2)).index, None);
    }

    #[test]
    fn mirrored_view_finds_last_before_entry() {
        let l = list(&[(0.0, 0.2), (0.3, 0.5), (0.6, 0.8)]);
        let m = Mirrored(&l);
        // Travelling toward the camera from z = 0.55 to 0.1.
        let r = find_first(&m, -0.55, -0.1, None);
        assert_eq!(r.index.map(|j| m.original(j)), Some(1));
    }
}
