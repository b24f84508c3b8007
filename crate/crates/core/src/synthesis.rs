//! Arbitrary-size, seamless and chunked generation.
//!
//! All generation runs the generator with frozen batch-norm statistics, which
//! keeps it a pure convolution stack: every output pixel is a function of the
//! noise slices in its projective field only. Chunked generation relies on
//! that to reproduce the full pass exactly.

use crate::error::{check_divisible, Error, Result};
use crate::fields::{make_seamless_plan, Axis, ChunkGrid, SeamlessPlan, SplitPlan, WRAP};
use crate::model::{sample_z, Generator, NetworkSpec};
use crate::ops::BnMode;
use crate::par;
use crate::tensor::{Scalar, Tensor};

/// How independent chunks are scheduled. Chunks share only the immutable
/// generator, so either order assembles the same image.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ChunkSchedule {
    /// One chunk alive at a time; peak memory is bounded by the largest chunk.
    #[default]
    Sequential,
    Parallel,
}

/// Samples `Z` of `(h / r, w / r, d)` and returns `G(Z)`.
pub fn generate_sized<T: Scalar>(g: &Generator<T>, height: usize, width: usize, seed: u64) -> Result<Tensor<T>> {
    let z = sized_noise(&g.spec, height, width, seed)?;
    g.generate(&z, BnMode::Infer)
}

pub fn sized_noise<T: Scalar>(spec: &NetworkSpec, height: usize, width: usize, seed: u64) -> Result<Tensor<T>> {
    let r = spec.ratio();
    check_divisible(height, r)?;
    check_divisible(width, r)?;
    sample_z(height / r, width / r, spec.d, seed)
}

/// Makes a padded `(l + 4, m + 4, d)` field periodic with period `(l, m)`:
/// `Z[i] = Z[i mod l]` along columns first, then rows. For `l, m >= 4` this
/// is exactly copying the first 4 slices onto the last 4; the row pass reads
/// the already wrapped columns, so all four corners equal `Z[:4, :4]`.
pub fn wrap_periodic<T: Scalar>(z: &mut Tensor<T>) -> Result<()> {
    let [l, m, d] = match *z.shape() {
        [l, m, d] if l > WRAP && m > WRAP => [l, m, d],
        _ => return Err(Error::Shape(format!("periodic noise needs (l + 4, m + 4, d), got {:?}", z.shape()))),
    };
    let (pl, pm) = (l - WRAP, m - WRAP);
    let data = z.data_mut();
    for i in 0..l {
        for j in pm..m {
            let src = (i * m + j - pm) * d;
            data.copy_within(src..src + d, (i * m + j) * d);
        }
    }
    for i in pl..l {
        let src = (i - pl) * m * d;
        data.copy_within(src..src + m * d, i * m * d);
    }
    Ok(())
}

/// Padded, wrapped noise for a seamless plan.
pub fn seamless_noise<T: Scalar>(plan: &SeamlessPlan, seed: u64) -> Result<Tensor<T>> {
    let [l, m, d] = plan.padded_z_shape;
    let mut z = sample_z(l, m, d, seed)?;
    wrap_periodic(&mut z)?;
    Ok(z)
}

/// Removes `plan.crop` pixels from every border of a generated image.
pub fn crop_seamless<T: Scalar>(plan: &SeamlessPlan, image: &Tensor<T>) -> Result<Tensor<T>> {
    let (gh, gw) = plan.generated_size();
    if image.shape()[..2] != [gh, gw] {
        return Err(Error::Shape(format!(
            "expected a {gh}x{gw} generated image, got {:?}",
            image.shape()
        )));
    }
    let c = plan.crop;
    image.crop3(c, gh - c, c, gw - c)
}

/// A texture of exactly `height x width` that tiles without seams.
pub fn generate_seamless<T: Scalar>(g: &Generator<T>, height: usize, width: usize, seed: u64) -> Result<Tensor<T>> {
    let plan = make_seamless_plan(height, width, g.spec.k, g.spec.d)?;
    let z = seamless_noise(&plan, seed)?;
    crop_seamless(&plan, &g.generate(&z, BnMode::Infer)?)
}

/// `G(Z)` computed chunk by chunk along one axis.
pub fn generate_chunked<T: Scalar>(g: &Generator<T>, z: &Tensor<T>, plan: &SplitPlan) -> Result<Tensor<T>> {
    let other = match (plan.axis, z.shape()) {
        (Axis::Rows, [_, m, _]) => *m,
        (Axis::Cols, [l, _, _]) => *l,
        _ => return Err(Error::Shape(format!("noise must be (l, m, d), got {:?}", z.shape()))),
    };
    generate_grid(g, z, &ChunkGrid::along(plan.clone(), other)?, ChunkSchedule::Sequential)
}

/// `G(Z)` computed over a grid of overlapping noise blocks.
pub fn generate_grid<T: Scalar>(
    g: &Generator<T>,
    z: &Tensor<T>,
    grid: &ChunkGrid,
    schedule: ChunkSchedule,
) -> Result<Tensor<T>> {
    let [l, m] = match *z.shape() {
        [l, m, d] if d == g.spec.d => [l, m],
        _ => {
            return Err(Error::Shape(format!(
                "noise must be (l, m, {}), got {:?}",
                g.spec.d,
                z.shape()
            )))
        }
    };
    if grid.rows.extent != l || grid.cols.extent != m || grid.rows.k != g.spec.k {
        return Err(Error::Invalid(format!(
            "plan for {}x{} noise at depth {} applied to {l}x{m} noise at depth {}",
            grid.rows.extent, grid.cols.extent, grid.rows.k, g.spec.k
        )));
    }
    let r = g.ratio();
    let pairs: Vec<_> = grid
        .rows
        .chunks
        .iter()
        .flat_map(|rc| grid.cols.chunks.iter().map(move |cc| (*rc, *cc)))
        .collect();
    let render = |i: usize| -> Result<Tensor<T>> {
        let (rc, cc) = pairs[i];
        let zc = z.crop3(rc.z.a as usize, rc.z.b as usize, cc.z.a as usize, cc.z.b as usize)?;
        let img = g.generate(&zc, BnMode::Infer)?;
        let (kr, kc) = (rc.local_keep(r), cc.local_keep(r));
        img.crop3(kr.a as usize, kr.b as usize, kc.a as usize, kc.b as usize)
    };
    let mut out = Tensor::zeros(&[l * r, m * r, crate::model::IMAGE_CHANNELS]);
    match schedule {
        ChunkSchedule::Sequential => {
            for (i, (rc, cc)) in pairs.iter().enumerate() {
                out.paste3(&render(i)?, rc.keep.a as usize, cc.keep.a as usize)?;
            }
        }
        ChunkSchedule::Parallel => {
            let blocks = par::map_range(pairs.len(), render);
            for (block, (rc, cc)) in blocks.into_iter().zip(&pairs) {
                out.paste3(&block?, rc.keep.a as usize, cc.keep.a as usize)?;
            }
        }
    }
    Ok(out)
}

/// Largest number of activation cells (noise input plus every layer output)
/// alive during any single chunk's forward pass.
pub fn peak_activation_cells(grid: &ChunkGrid, spec: &NetworkSpec) -> usize {
    let mut peak = 0;
    for rc in &grid.rows.chunks {
        for cc in &grid.cols.chunks {
            let (h, w) = (rc.z.width() as usize, cc.z.width() as usize);
            peak = peak.max(forward_cells(h, w, spec));
        }
    }
    peak
}

/// Activation cells of one forward pass over an `h x w` noise block.
pub fn forward_cells(h: usize, w: usize, spec: &NetworkSpec) -> usize {
    let mut cells = h * w * spec.d;
    for (j, &c) in spec.g_filters.iter().enumerate() {
        let s = 1usize << (j + 1);
        cells += h * s * w * s * c;
    }
    cells
}
