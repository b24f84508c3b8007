//! Projective and receptive field arithmetic for stacks of 5x5 kernels with
//! stride 2 (discriminator) or stride 1/2 (generator), and the chunking and
//! periodic-boundary plans derived from it.
//!
//! One transposed layer maps an input range `[a, b)` to the output range
//! `[2a - 2, 2b + 1)`; `k` layers map it to
//! `[a 2^k - 2^(k+1) + 2, b 2^k + 2^k - 1)`. A single noise slice therefore
//! projects onto `2^(k+2) - 3` pixels per axis, and by the same recursion a
//! single discriminator output sees a window of that size.

use std::fmt;

use crate::error::{check_divisible, Error, Result};

/// Noise slices shared across a cut on each side.
pub const SPLIT_OVERLAP: usize = 2;
/// Slices copied from the start to the end of each axis for periodic output.
pub const WRAP: usize = 4;
/// Smallest z-interval a chunk may span.
pub const MIN_CHUNK_WIDTH: usize = 5;

/// Half-open integer range `[a, b)`. Bounds may be negative or exceed the
/// array they index; clipping is explicit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct IndexInterval {
    pub a: i64,
    pub b: i64,
}

impl IndexInterval {
    pub fn new(a: i64, b: i64) -> Result<Self> {
        if a >= b {
            return Err(Error::Invalid(format!("empty interval [{a}, {b})")));
        }
        Ok(Self { a, b })
    }

    pub fn single(i: i64) -> Self {
        Self { a: i, b: i + 1 }
    }

    pub fn width(self) -> i64 {
        self.b - self.a
    }

    /// Intersection with `[0, len)`, or `None` when disjoint.
    pub fn clip(self, len: usize) -> Option<Self> {
        let a = self.a.max(0);
        let b = self.b.min(len as i64);
        (a < b).then_some(Self { a, b })
    }

    pub fn contains(self, i: i64) -> bool {
        self.a <= i && i < self.b
    }

    pub fn overlaps(self, other: Self) -> bool {
        self.a < other.b && other.a < self.b
    }
}

impl fmt::Display for IndexInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.a, self.b)
    }
}

pub fn ratio(k: u32) -> usize {
    1usize << k
}

/// Output range touched by `iv` after one transposed layer.
pub fn pf_one_layer(iv: IndexInterval) -> IndexInterval {
    IndexInterval { a: 2 * iv.a - 2, b: 2 * iv.b + 1 }
}

/// Output range touched by `iv` after `k` transposed layers.
pub fn pf_k_layers(iv: IndexInterval, k: u32) -> IndexInterval {
    let r = 1i64 << k;
    IndexInterval { a: iv.a * r - 2 * r + 2, b: iv.b * r + r - 1 }
}

pub fn pf_size(k: u32) -> usize {
    (1usize << (k + 2)) - 3
}

pub fn rf_size(k: u32) -> usize {
    pf_size(k)
}

/// Input window seen by discriminator outputs `iv` through `k` strided layers.
/// Each strided layer maps output `i` to inputs `[2i - 2, 2i + 3)`, the same
/// recursion as the transposed layers.
pub fn rf_k_layers(iv: IndexInterval, k: u32) -> IndexInterval {
    pf_k_layers(iv, k)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Chunk {
    /// Noise slices fed to the generator for this chunk.
    pub z: IndexInterval,
    /// Output pixels this chunk contributes, in global coordinates.
    pub keep: IndexInterval,
}

impl Chunk {
    /// `keep` in the chunk's own output coordinates.
    pub fn local_keep(&self, ratio: usize) -> IndexInterval {
        let off = self.z.a * ratio as i64;
        IndexInterval { a: self.keep.a - off, b: self.keep.b - off }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitPlan {
    pub axis: Axis,
    /// Noise extent along `axis`.
    pub extent: usize,
    pub k: u32,
    pub ratio: usize,
    pub overlap: usize,
    pub chunks: Vec<Chunk>,
}

impl SplitPlan {
    /// Builds a plan from explicit cut positions. Each chunk reaches `overlap`
    /// slices past its cuts and keeps the pixels between its cuts.
    pub fn from_cuts(extent: usize, k: u32, cuts: &[usize], axis: Axis, overlap: usize) -> Result<Self> {
        if extent == 0 {
            return Err(Error::Invalid("noise extent must be positive".into()));
        }
        let mut bounds = Vec::with_capacity(cuts.len() + 2);
        bounds.push(0);
        for &c in cuts {
            if c == 0 || c >= extent || c <= *bounds.last().unwrap() {
                return Err(Error::Invalid(format!(
                    "cut {c} must be interior to (0, {extent}) and increasing"
                )));
            }
            bounds.push(c);
        }
        bounds.push(extent);
        let r = ratio(k);
        let single = bounds.len() == 2;
        let chunks = bounds
            .windows(2)
            .map(|w| {
                let (s, e) = (w[0] as i64, w[1] as i64);
                let z = IndexInterval {
                    a: (s - overlap as i64).max(0),
                    b: (e + overlap as i64).min(extent as i64),
                };
                if !single && z.width() < MIN_CHUNK_WIDTH as i64 {
                    return Err(Error::ChunkTooNarrow { start: z.a, end: z.b, min: MIN_CHUNK_WIDTH });
                }
                Ok(Chunk { z, keep: IndexInterval { a: s * r as i64, b: e * r as i64 } })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { axis, extent, k, ratio: r, overlap, chunks })
    }

    /// Output length along the axis.
    pub fn output_len(&self) -> usize {
        self.extent * self.ratio
    }

    pub fn max_z_width(&self) -> usize {
        self.chunks.iter().map(|c| c.z.width() as usize).max().unwrap_or(0)
    }
}

/// Splits `extent` noise slices into `n_chunks` pieces by repeated bisection.
pub fn make_split_plan(extent: usize, k: u32, n_chunks: usize, axis: Axis) -> Result<SplitPlan> {
    make_split_plan_with_overlap(extent, k, n_chunks, axis, SPLIT_OVERLAP)
}

/// As [`make_split_plan`] with a custom overlap. For two or more layers,
/// overlaps below 2 do not reproduce the full pass; a single layer is already
/// exact with overlap 1.
pub fn make_split_plan_with_overlap(
    extent: usize,
    k: u32,
    n_chunks: usize,
    axis: Axis,
    overlap: usize,
) -> Result<SplitPlan> {
    if n_chunks == 0 || n_chunks > extent {
        return Err(Error::Invalid(format!(
            "cannot split {extent} noise slices into {n_chunks} chunks"
        )));
    }
    let mut cuts = Vec::with_capacity(n_chunks - 1);
    bisect(0, extent, n_chunks, &mut cuts);
    SplitPlan::from_cuts(extent, k, &cuts, axis, overlap)
}

fn bisect(start: usize, end: usize, n: usize, cuts: &mut Vec<usize>) {
    if n <= 1 {
        return;
    }
    let left = n / 2;
    let mid = start + (end - start) * left / n;
    bisect(start, mid, left, cuts);
    cuts.push(mid);
    bisect(mid, end, n - left, cuts);
}

/// Splits so that no chunk spans more than `max_z_width` noise slices.
pub fn make_split_plan_by_width(extent: usize, k: u32, max_z_width: usize, axis: Axis) -> Result<SplitPlan> {
    let ov = SPLIT_OVERLAP;
    if max_z_width >= extent {
        return SplitPlan::from_cuts(extent, k, &[], axis, ov);
    }
    if max_z_width < MIN_CHUNK_WIDTH.max(2 * ov + 1) {
        return Err(Error::ChunkTooNarrow { start: 0, end: max_z_width as i64, min: MIN_CHUNK_WIDTH });
    }
    // First chunk [0, c + ov), interior chunks [s - ov, e + ov), last [s - ov, extent).
    let mut cuts = Vec::new();
    let mut pos = max_z_width - ov;
    while pos + (max_z_width - ov) < extent {
        cuts.push(pos);
        pos += max_z_width - 2 * ov;
    }
    // Pull the final cut back so the last chunk is full width; when only one
    // or two slices remain the previous chunk absorbs them.
    if extent - pos > ov {
        cuts.push(extent - (max_z_width - ov));
    }
    SplitPlan::from_cuts(extent, k, &cuts, axis, ov)
}

/// Independent splits along both spatial axes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChunkGrid {
    pub rows: SplitPlan,
    pub cols: SplitPlan,
}

impl ChunkGrid {
    pub fn new(rows: SplitPlan, cols: SplitPlan) -> Result<Self> {
        if rows.axis != Axis::Rows || cols.axis != Axis::Cols || rows.k != cols.k {
            return Err(Error::Invalid("grid needs a row plan and a column plan of equal depth".into()));
        }
        Ok(Self { rows, cols })
    }

    /// A plan splitting only along `plan.axis`.
    pub fn along(plan: SplitPlan, other_extent: usize) -> Result<Self> {
        let other_axis = match plan.axis {
            Axis::Rows => Axis::Cols,
            Axis::Cols => Axis::Rows,
        };
        let other = SplitPlan::from_cuts(other_extent, plan.k, &[], other_axis, SPLIT_OVERLAP)?;
        match plan.axis {
            Axis::Rows => Self::new(plan, other),
            Axis::Cols => Self::new(other, plan),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeamlessPlan {
    pub target: (usize, usize),
    pub k: u32,
    pub ratio: usize,
    /// `(l + 4, m + 4, d)`.
    pub padded_z_shape: [usize; 3],
    /// Pixels dropped from every border of the generated image.
    pub crop: usize,
}

pub fn make_seamless_plan(height: usize, width: usize, k: u32, d: usize) -> Result<SeamlessPlan> {
    let r = ratio(k);
    check_divisible(height, r)?;
    check_divisible(width, r)?;
    if d == 0 {
        return Err(Error::Invalid("noise channel count must be positive".into()));
    }
    Ok(SeamlessPlan {
        target: (height, width),
        k,
        ratio: r,
        padded_z_shape: [height / r + WRAP, width / r + WRAP, d],
        crop: 2 * r,
    })
}

impl SeamlessPlan {
    /// Period of the noise field along each axis.
    pub fn period(&self) -> (usize, usize) {
        (self.padded_z_shape[0] - WRAP, self.padded_z_shape[1] - WRAP)
    }

    /// Generated image size before cropping.
    pub fn generated_size(&self) -> (usize, usize) {
        (self.padded_z_shape[0] * self.ratio, self.padded_z_shape[1] * self.ratio)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_layer_examples() {
        assert_eq!(pf_one_layer(IndexInterval::single(0)), IndexInterval { a: -2, b: 3 });
        assert_eq!(pf_one_layer(IndexInterval::single(3)), IndexInterval { a: 4, b: 9 });
        for a in -5..5 {
            for w in 1..6 {
                let iv = IndexInterval { a, b: a + w };
                assert_eq!(pf_one_layer(iv).width(), 2 * w + 3);
            }
        }
    }

    #[test]
    fn table_sizes() {
        assert_eq!(pf_size(1), 5);
        assert_eq!(pf_size(4), 61);
        assert_eq!(pf_size(5), 125);
        assert_eq!(pf_size(6), 253);
        assert_eq!(rf_size(5), 125);
        assert_eq!(pf_k_layers(IndexInterval::single(0), 4), IndexInterval { a: -30, b: 31 });
    }

    #[test]
    fn composition_matches_iteration() {
        for k in 1..=6 {
            for a in -8..8 {
                for w in 1..=8 {
                    let iv = IndexInterval { a, b: a + w };
                    let iterated = (0..k).fold(iv, |acc, _| pf_one_layer(acc));
                    assert_eq!(pf_k_layers(iv, k), iterated);
                }
            }
        }
    }

    #[test]
    fn two_chunk_plan() {
        let plan = make_split_plan(8, 2, 2, Axis::Rows).unwrap();
        assert_eq!(plan.chunks.len(), 2);
        assert_eq!(plan.chunks[0].z, IndexInterval { a: 0, b: 6 });
        assert_eq!(plan.chunks[1].z, IndexInterval { a: 2, b: 8 });
        assert_eq!(plan.chunks[0].keep, IndexInterval { a: 0, b: 16 });
        assert_eq!(plan.chunks[1].keep, IndexInterval { a: 16, b: 32 });
        // the second chunk drops its first 2r pixels, the first its last 2r
        assert_eq!(plan.chunks[1].local_keep(4), IndexInterval { a: 8, b: 24 });
        assert_eq!(plan.chunks[0].local_keep(4), IndexInterval { a: 0, b: 16 });
    }

    #[test]
    fn narrow_chunks_rejected() {
        let err = make_split_plan(4, 2, 2, Axis::Rows).unwrap_err();
        assert!(matches!(err, Error::ChunkTooNarrow { .. }), "{err}");
        assert!(make_split_plan(3, 2, 4, Axis::Rows).is_err());
    }

    #[test]
    fn width_plans_have_fixed_width() {
        for extent in [8usize, 16, 32] {
            let plan = make_split_plan_by_width(extent, 3, 6, Axis::Cols).unwrap();
            assert_eq!(plan.max_z_width(), 6, "extent {extent}: {plan:?}");
            assert!(plan.chunks.iter().all(|c| c.z.width() >= 5));
        }
    }

    #[test]
    fn seamless_plan_sizes() {
        let p = make_seamless_plan(320, 320, 5, 50).unwrap();
        assert_eq!(p.padded_z_shape, [14, 14, 50]);
        assert_eq!(p.generated_size(), (448, 448));
        assert_eq!(p.crop, 64);
        let p = make_seamless_plan(64, 64, 4, 3).unwrap();
        assert_eq!(p.padded_z_shape, [8, 8, 3]);
        match make_seamless_plan(100, 64, 4, 3).unwrap_err() {
            Error::Divisibility { below, above, .. } => assert_eq!((below, above), (96, 112)),
            e => panic!("{e}"),
        }
    }
}
