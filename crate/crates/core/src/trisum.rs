//! Weighted sums over ordered triples of distinct subjects.
//!
//! Every VUS estimator is a ratio
//!
//! ```text
//!   Σ_{i≠ℓ≠r} I(tᵢ, t_ℓ, t_r) w1ᵢ w2_ℓ w3_r  /  Σ_{i≠ℓ≠r} w1ᵢ w2_ℓ w3_r
//! ```
//!
//! where `I` is the tie-aware ordering kernel. Sorting once and grouping
//! tied test results reduces both sums, and the per-subject sums needed for
//! influence functions, to `O(n)` passes after an `O(n log n)` sort. The
//! `brute_*` functions evaluate the same quantities by direct `O(n³)`
//! enumeration and serve as a reference.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Ordering kernel: 1 for `t1 < t2 < t3`, ½ when exactly one adjacent pair
/// is tied and the order otherwise holds, ⅙ for a triple tie, 0 otherwise.
pub fn kernel(t1: f64, t2: f64, t3: f64) -> f64 {
    if t1 < t2 {
        if t2 < t3 {
            1.0
        } else if t2 == t3 {
            0.5
        } else {
            0.0
        }
    } else if t1 == t2 {
        if t2 < t3 {
            0.5
        } else if t2 == t3 {
            1.0 / 6.0
        } else {
            0.0
        }
    } else {
        0.0
    }
}

/// Subjects sorted by test result and partitioned into groups of equal value.
#[derive(Debug, Clone)]
pub struct TieGroups {
    order: Vec<usize>,
    /// `starts[g]..starts[g + 1]` indexes `order` for group `g`.
    starts: Vec<usize>,
    group_of: Vec<usize>,
}

impl TieGroups {
    pub fn new(t: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..t.len()).collect();
        order.sort_by(|&a, &b| t[a].total_cmp(&t[b]));
        let mut starts = Vec::new();
        let mut group_of = vec![0; t.len()];
        for (pos, &i) in order.iter().enumerate() {
            if pos == 0 || t[order[pos - 1]] != t[i] {
                starts.push(pos);
            }
            group_of[i] = starts.len() - 1;
        }
        starts.push(t.len());
        TieGroups { order, starts, group_of }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn n_groups(&self) -> usize {
        self.starts.len() - 1
    }

    pub fn group_of(&self, i: usize) -> usize {
        self.group_of[i]
    }

    fn members(&self, g: usize) -> &[usize] {
        &self.order[self.starts[g]..self.starts[g + 1]]
    }

    fn totals(&self, w: [&[f64]; 3]) -> GroupTotals {
        let m = self.n_groups();
        let mut t = GroupTotals {
            a: vec![0.0; m],
            b: vec![0.0; m],
            c: vec![0.0; m],
            ab: vec![0.0; m],
            ac: vec![0.0; m],
            bc: vec![0.0; m],
            abc: vec![0.0; m],
        };
        for g in 0..m {
            for &i in self.members(g) {
                let (x, y, z) = (w[0][i], w[1][i], w[2][i]);
                t.a[g] += x;
                t.b[g] += y;
                t.c[g] += z;
                t.ab[g] += x * y;
                t.ac[g] += x * z;
                t.bc[g] += y * z;
                t.abc[g] += x * y * z;
            }
        }
        t
    }
}

struct GroupTotals {
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    ab: Vec<f64>,
    ac: Vec<f64>,
    bc: Vec<f64>,
    abc: Vec<f64>,
}

impl GroupTotals {
    /// `Σ_{b' < b} A_{b'}` for every `b`.
    fn a_prefix(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.a.len()];
        let mut acc = 0.0;
        for (o, a) in out.iter_mut().zip(&self.a) {
            *o = acc;
            acc += a;
        }
        out
    }

    /// `Σ_{b' ≥ b} C_{b'}`, with one trailing zero.
    fn c_suffix(&self) -> Vec<f64> {
        let m = self.c.len();
        let mut out = vec![0.0; m + 1];
        for g in (0..m).rev() {
            out[g] = out[g + 1] + self.c[g];
        }
        out
    }
}

/// Kernel-weighted and unweighted triple sums.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripleSums {
    /// `Σ_{i≠ℓ≠r} I(tᵢ, t_ℓ, t_r) w1ᵢ w2_ℓ w3_r`.
    pub kernel: f64,
    /// `Σ_{i≠ℓ≠r} w1ᵢ w2_ℓ w3_r`.
    pub product: f64,
}

impl TripleSums {
    pub fn ratio(&self) -> f64 {
        self.kernel / self.product
    }
}

fn check_lengths(n: usize, w: [&[f64]; 3]) -> Result<()> {
    if let Some(c) = w.iter().find(|c| c.len() != n) {
        return Err(Error::LengthMismatch { expected: n, found: c.len() });
    }
    Ok(())
}

/// Triple sums for weight columns `w1, w2, w3`.
pub fn triple_sums(groups: &TieGroups, w1: &[f64], w2: &[f64], w3: &[f64]) -> Result<TripleSums> {
    let w = [w1, w2, w3];
    check_lengths(groups.len(), w)?;
    let t = groups.totals(w);
    let a_pre = t.a_prefix();
    let c_suf = t.c_suffix();
    let mut kernel = 0.0;
    for g in 0..groups.n_groups() {
        let strict = t.b[g] * a_pre[g] * c_suf[g + 1];
        let tie_low = (t.a[g] * t.b[g] - t.ab[g]) * c_suf[g + 1];
        let tie_high = a_pre[g] * (t.b[g] * t.c[g] - t.bc[g]);
        let all = distinct3(t.a[g], t.b[g], t.c[g], t.ab[g], t.ac[g], t.bc[g], t.abc[g]);
        kernel += strict + 0.5 * (tie_low + tie_high) + all / 6.0;
    }
    let sum = |v: &[f64]| v.iter().sum::<f64>();
    let product = distinct3(
        sum(&t.a),
        sum(&t.b),
        sum(&t.c),
        sum(&t.ab),
        sum(&t.ac),
        sum(&t.bc),
        sum(&t.abc),
    );
    Ok(TripleSums { kernel, product })
}

/// `Σ_{i≠ℓ≠r} xᵢ y_ℓ z_r` from the plain and cross sums by inclusion–exclusion.
fn distinct3(x: f64, y: f64, z: f64, xy: f64, xz: f64, yz: f64, xyz: f64) -> f64 {
    x * y * z - xy * z - xz * y - yz * x + 2.0 * xyz
}

/// Per-subject partial sums over the triples in which a subject occupies a
/// given slot, with the subject's own weight in that slot left out.
///
/// For subject `i`: `first[i] = Σ_{ℓ≠r≠i} I(tᵢ, t_ℓ, t_r) w2_ℓ w3_r`, and
/// `first0[i]` is the same sum without the kernel; `second` and `third`
/// place `i` in the middle and last slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotSums {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub third: Vec<f64>,
    pub first0: Vec<f64>,
    pub second0: Vec<f64>,
    pub third0: Vec<f64>,
}

pub fn slot_sums(groups: &TieGroups, w1: &[f64], w2: &[f64], w3: &[f64]) -> Result<SlotSums> {
    let w = [w1, w2, w3];
    let n = groups.len();
    check_lengths(n, w)?;
    let m = groups.n_groups();
    let t = groups.totals(w);
    let a_pre = t.a_prefix();
    let c_suf = t.c_suffix();

    // Group-level pieces for the first slot: Σ_{b>g} [B_b Csuf_{b+1} + ½(B_bC_b − BC_b)].
    let mut above = vec![0.0; m + 1];
    for g in (0..m).rev() {
        above[g] = above[g + 1] + t.b[g] * c_suf[g + 1] + 0.5 * (t.b[g] * t.c[g] - t.bc[g]);
    }
    // And for the last slot: Σ_{b<g} [B_b Apre_b + ½(A_bB_b − AB_b)].
    let mut below = vec![0.0; m];
    let mut acc = 0.0;
    for g in 0..m {
        below[g] = acc;
        acc += t.b[g] * a_pre[g] + 0.5 * (t.a[g] * t.b[g] - t.ab[g]);
    }

    let total = |v: &[f64]| v.iter().sum::<f64>();
    let (s1, s2, s3) = (total(&t.a), total(&t.b), total(&t.c));
    let (ab, ac, bc) = (total(&t.ab), total(&t.ac), total(&t.bc));

    let mut out = SlotSums {
        first: vec![0.0; n],
        second: vec![0.0; n],
        third: vec![0.0; n],
        first0: vec![0.0; n],
        second0: vec![0.0; n],
        third0: vec![0.0; n],
    };
    for i in 0..n {
        let g = groups.group_of(i);
        let (x, y, z) = (w1[i], w2[i], w3[i]);
        let (ag, bg, cg) = (t.a[g] - x, t.b[g] - y, t.c[g] - z);

        out.first[i] = above[g + 1] + 0.5 * bg * c_suf[g + 1] + (bg * cg - (t.bc[g] - y * z)) / 6.0;
        out.second[i] = a_pre[g] * c_suf[g + 1]
            + 0.5 * (ag * c_suf[g + 1] + a_pre[g] * cg)
            + (ag * cg - (t.ac[g] - x * z)) / 6.0;
        out.third[i] = below[g] + 0.5 * a_pre[g] * bg + (ag * bg - (t.ab[g] - x * y)) / 6.0;

        out.first0[i] = (s2 - y) * (s3 - z) - (bc - y * z);
        out.second0[i] = (s1 - x) * (s3 - z) - (ac - x * z);
        out.third0[i] = (s1 - x) * (s2 - y) - (ab - x * y);
    }
    Ok(out)
}

/// `Σ_{i≠ℓ≠r} I(tᵢ, t_ℓ, t_r) w1ᵢ w2_ℓ w3_r`.
pub fn kernel_weighted_sum(t: &[f64], w1: &[f64], w2: &[f64], w3: &[f64]) -> Result<f64> {
    triple_sums(&TieGroups::new(t), w1, w2, w3).map(|s| s.kernel)
}

/// `Σ_{i≠ℓ≠r} w1ᵢ w2_ℓ w3_r`.
pub fn product_sum(w1: &[f64], w2: &[f64], w3: &[f64]) -> Result<f64> {
    check_lengths(w1.len(), [w1, w2, w3])?;
    let n = w1.len();
    let (mut s, mut cross) = ([0.0; 3], [0.0; 4]);
    for i in 0..n {
        let (x, y, z) = (w1[i], w2[i], w3[i]);
        s[0] += x;
        s[1] += y;
        s[2] += z;
        cross[0] += x * y;
        cross[1] += x * z;
        cross[2] += y * z;
        cross[3] += x * y * z;
    }
    Ok(distinct3(s[0], s[1], s[2], cross[0], cross[1], cross[2], cross[3]))
}

/// [`slot_sums`] for a marker vector that has not been grouped yet.
pub fn per_subject_conditional_sums(t: &[f64], w1: &[f64], w2: &[f64], w3: &[f64]) -> Result<SlotSums> {
    slot_sums(&TieGroups::new(t), w1, w2, w3)
}

/// Direct `O(n³)` evaluation of [`triple_sums`].
#[allow(clippy::needless_range_loop)]
pub fn brute_triple_sums(t: &[f64], w1: &[f64], w2: &[f64], w3: &[f64]) -> Result<TripleSums> {
    let n = t.len();
    check_lengths(n, [w1, w2, w3])?;
    let mut kernel = 0.0;
    let mut product = 0.0;
    for i in 0..n {
        for l in 0..n {
            if l == i {
                continue;
            }
            for r in 0..n {
                if r == i || r == l {
                    continue;
                }
                let w = w1[i] * w2[l] * w3[r];
                kernel += kernel_fn(t, i, l, r) * w;
                product += w;
            }
        }
    }
    Ok(TripleSums { kernel, product })
}

fn kernel_fn(t: &[f64], i: usize, l: usize, r: usize) -> f64 {
    kernel(t[i], t[l], t[r])
}

/// Direct `O(n³)` evaluation of [`slot_sums`].
#[allow(clippy::needless_range_loop)]
pub fn brute_slot_sums(t: &[f64], w1: &[f64], w2: &[f64], w3: &[f64]) -> Result<SlotSums> {
    let n = t.len();
    check_lengths(n, [w1, w2, w3])?;
    let mut out = SlotSums {
        first: vec![0.0; n],
        second: vec![0.0; n],
        third: vec![0.0; n],
        first0: vec![0.0; n],
        second0: vec![0.0; n],
        third0: vec![0.0; n],
    };
    for i in 0..n {
        for l in 0..n {
            if l == i {
                continue;
            }
            for r in 0..n {
                if r == i || r == l {
                    continue;
                }
                let k = kernel_fn(t, i, l, r);
                out.first[i] += k * w2[l] * w3[r];
                out.first0[i] += w2[l] * w3[r];
                out.second[l] += k * w1[i] * w3[r];
                out.second0[l] += w1[i] * w3[r];
                out.third[r] += k * w1[i] * w2[l];
                out.third0[r] += w1[i] * w2[l];
            }
        }
    }
    Ok(out)
}
