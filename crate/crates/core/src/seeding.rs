//! Seed sampling: voxel grid construction, triangle-fan distance
//! approximation, and the distance-band filter that turns voxel centres
//! into seed points.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{closest_point_on_triangle, KnnIndex, Point3, PointCloud, Triangle};

/// Regular voxel grid anchored at the canonical-space origin. Voxel
/// `(x, y, z)` has its centre at `((x + 0.5) l, (y + 0.5) l, (z + 0.5) l)`;
/// indices may be negative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VoxelGridSpec {
    pub side_length: f64,
    pub lo: Point3,
    pub hi: Point3,
}

/// Index packing bias; grid indices must stay within +-2^20 per axis.
const INDEX_BIAS: i64 = 1 << 20;

impl VoxelGridSpec {
    pub fn new(side_length: f64, lo: Point3, hi: Point3) -> Result<Self> {
        if !side_length.is_finite() || side_length <= 0.0 {
            return Err(Error::InvalidParameter("voxel side must be > 0".into()));
        }
        if !(lo.x < hi.x && lo.y < hi.y && lo.z < hi.z) {
            return Err(Error::InvalidParameter("degenerate grid bounds".into()));
        }
        let spec = VoxelGridSpec {
            side_length,
            lo,
            hi,
        };
        let ((x0, x1), (y0, y1), (z0, z1)) = spec.index_ranges();
        for &(a, b) in &[(x0, x1), (y0, y1), (z0, z1)] {
            if a.abs() >= INDEX_BIAS || b.abs() >= INDEX_BIAS {
                return Err(Error::InvalidParameter(
                    "grid too fine for its extent".into(),
                ));
            }
        }
        Ok(spec)
    }

    /// Grid covering the cloud's bounding box padded by `d_upper + l`.
    pub fn for_cloud(cloud: &PointCloud, side_length: f64, band: &SeedBand) -> Result<Self> {
        let (lo, hi) = cloud.bounding_box()?;
        let pad = band.d_upper + side_length;
        let pad_vec = Point3::new(pad, pad, pad);
        VoxelGridSpec::new(side_length, lo - pad_vec, hi + pad_vec)
    }

    /// Inclusive index ranges of voxels whose centres lie inside the bounds.
    pub fn index_ranges(&self) -> ((i64, i64), (i64, i64), (i64, i64)) {
        let l = self.side_length;
        let range = |lo: f64, hi: f64| {
            let first = (lo / l - 0.5).ceil() as i64;
            let last = (hi / l - 0.5).floor() as i64;
            (first, last)
        };
        (
            range(self.lo.x, self.hi.x),
            range(self.lo.y, self.hi.y),
            range(self.lo.z, self.hi.z),
        )
    }

    pub fn centre(&self, ix: i64, iy: i64, iz: i64) -> Point3 {
        let l = self.side_length;
        Point3::new(
            (ix as f64 + 0.5) * l,
            (iy as f64 + 0.5) * l,
            (iz as f64 + 0.5) * l,
        )
    }

    fn pack(ix: i64, iy: i64, iz: i64) -> u64 {
        (((ix + INDEX_BIAS) as u64) << 42)
            | (((iy + INDEX_BIAS) as u64) << 21)
            | ((iz + INDEX_BIAS) as u64)
    }

    fn unpack(key: u64) -> (i64, i64, i64) {
        let ix = (key >> 42) as i64 - INDEX_BIAS;
        let iy = ((key >> 21) & 0x1F_FFFF) as i64 - INDEX_BIAS;
        let iz = (key & 0x1F_FFFF) as i64 - INDEX_BIAS;
        (ix, iy, iz)
    }
}

/// Distance band and fan size controlling which voxel centres survive.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeedBand {
    pub d_lower: f64,
    pub d_upper: f64,
    pub fan_size: usize,
}

impl SeedBand {
    pub fn new(d_lower: f64, d_upper: f64, fan_size: usize) -> Result<Self> {
        if !d_lower.is_finite() || !d_upper.is_finite() || d_lower <= 0.0 || d_lower >= d_upper {
            return Err(Error::InvalidParameter(
                "band requires 0 < d_lower < d_upper".into(),
            ));
        }
        if fan_size < 3 {
            return Err(Error::InvalidParameter("fan size must be >= 3".into()));
        }
        Ok(SeedBand {
            d_lower,
            d_upper,
            fan_size,
        })
    }
}

/// Voxel centres that survived the band test, with their fan distances.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedSet {
    pub seeds: Vec<Point3>,
    pub approx_dists: Vec<f64>,
}

impl SeedSet {
    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }
}

/// Triangle-fan approximation of the distance from `c` to the cloud's
/// underlying surface: the minimum distance from `c` to the triangles
/// `(p1, p2, pm)` built over the `fan_size` nearest cloud points in
/// ascending distance order. If the two nearest points coincide, the base
/// edge skips duplicates so the fan is not all-degenerate.
pub fn approx_dist_to_surface(
    c: Point3,
    cloud: &PointCloud,
    index: &KnnIndex,
    fan_size: usize,
) -> Result<f64> {
    if cloud.len() < 3 {
        return Err(Error::InsufficientPointsForFan);
    }
    if fan_size < 3 {
        return Err(Error::InvalidParameter("fan size must be >= 3".into()));
    }
    let neighbors = index.query(c, fan_size);
    Ok(fan_distance(c, cloud.points(), &neighbors))
}

fn fan_distance(c: Point3, points: &[Point3], neighbors: &[(usize, f64)]) -> f64 {
    let p1 = points[neighbors[0].0];
    let base2_pos = neighbors[1..]
        .iter()
        .position(|&(idx, _)| points[idx] != p1)
        .map(|p| p + 1);
    let Some(base2_pos) = base2_pos else {
        // Every neighbor coincides with the nearest point.
        return c.dist(p1);
    };
    let p2 = points[neighbors[base2_pos].0];
    let mut best = f64::INFINITY;
    for (pos, &(idx, _)) in neighbors.iter().enumerate() {
        if pos == 0 || pos == base2_pos {
            continue;
        }
        let tri = Triangle::new(p1, p2, points[idx]);
        let d = c.dist(closest_point_on_triangle(c, &tri));
        if d < best {
            best = d;
        }
    }
    if best.is_infinite() {
        // Fan collapsed to the base edge (exactly two distinct neighbors).
        let tri = Triangle::new(p1, p2, p2);
        best = c.dist(closest_point_on_triangle(c, &tri));
    }
    best
}

/// Voxel centres within `d_upper + l * sqrt(3)/2` of some cloud point, in
/// lexicographic index order: a superset of every centre that can pass the
/// band test, so the fan need not be evaluated over the whole grid.
pub fn candidate_voxel_centres(
    cloud: &PointCloud,
    grid: &VoxelGridSpec,
    band: &SeedBand,
) -> Result<Vec<Point3>> {
    let index = KnnIndex::build(cloud)?;
    Ok(candidate_centres_with_index(cloud, grid, band, &index)
        .into_iter()
        .map(|(_, c)| c)
        .collect())
}

fn candidate_centres_with_index(
    cloud: &PointCloud,
    grid: &VoxelGridSpec,
    band: &SeedBand,
    index: &KnnIndex,
) -> Vec<(u64, Point3)> {
    let l = grid.side_length;
    let radius = band.d_upper + l * 3f64.sqrt() / 2.0;
    let ((x0, x1), (y0, y1), (z0, z1)) = grid.index_ranges();

    let mut keys: Vec<u64> = Vec::new();
    let span = |coord: f64, lo_i: i64, hi_i: i64| {
        let first = ((coord - radius) / l - 0.5).ceil() as i64;
        let last = ((coord + radius) / l - 0.5).floor() as i64;
        (first.max(lo_i), last.min(hi_i))
    };
    for p in cloud.points() {
        let (ax0, ax1) = span(p.x, x0, x1);
        let (ay0, ay1) = span(p.y, y0, y1);
        let (az0, az1) = span(p.z, z0, z1);
        for ix in ax0..=ax1 {
            for iy in ay0..=ay1 {
                for iz in az0..=az1 {
                    keys.push(VoxelGridSpec::pack(ix, iy, iz));
                }
            }
        }
    }
    keys.par_sort_unstable();
    keys.dedup();

    // Packed keys sort lexicographically by (ix, iy, iz).
    keys.into_par_iter()
        .filter_map(|key| {
            let (ix, iy, iz) = VoxelGridSpec::unpack(key);
            let centre = grid.centre(ix, iy, iz);
            let (_, dist) = index.nearest(centre);
            (dist <= radius).then_some((key, centre))
        })
        .collect()
}

/// All voxel centres of the grid whose fan distance falls inside the band,
/// in lexicographic grid-index order.
pub fn sample_seeds(cloud: &PointCloud, grid: &VoxelGridSpec, band: &SeedBand) -> Result<SeedSet> {
    if cloud.len() < 3 {
        return Err(Error::InsufficientPointsForFan);
    }
    let (lo, hi) = cloud.bounding_box()?;
    let pad = band.d_upper;
    if grid.lo.x > lo.x - pad
        || grid.lo.y > lo.y - pad
        || grid.lo.z > lo.z - pad
        || grid.hi.x < hi.x + pad
        || grid.hi.y < hi.y + pad
        || grid.hi.z < hi.z + pad
    {
        return Err(Error::GridTooSmall);
    }
    let index = KnnIndex::build(cloud)?;
    let candidates = candidate_centres_with_index(cloud, grid, band, &index);
    let points = cloud.points();
    let survivors: Vec<(Point3, f64)> = candidates
        .into_par_iter()
        .filter_map(|(_, centre)| {
            let neighbors = index.query(centre, band.fan_size);
            let d = fan_distance(centre, points, &neighbors);
            (d >= band.d_lower && d <= band.d_upper).then_some((centre, d))
        })
        .collect();
    if survivors.is_empty() {
        return Err(Error::EmptySeedSet);
    }
    let (seeds, approx_dists) = survivors.into_iter().unzip();
    Ok(SeedSet {
        seeds,
        approx_dists,
    })
}

/// Reference implementation that scans the full grid with no candidate
/// pruning. Quadratically slower; used to validate `sample_seeds`.
pub fn sample_seeds_full_scan(
    cloud: &PointCloud,
    grid: &VoxelGridSpec,
    band: &SeedBand,
) -> Result<SeedSet> {
    if cloud.len() < 3 {
        return Err(Error::InsufficientPointsForFan);
    }
    let index = KnnIndex::build(cloud)?;
    let points = cloud.points();
    let ((x0, x1), (y0, y1), (z0, z1)) = grid.index_ranges();
    let mut seeds = Vec::new();
    let mut approx_dists = Vec::new();
    for ix in x0..=x1 {
        for iy in y0..=y1 {
            for iz in z0..=z1 {
                let centre = grid.centre(ix, iy, iz);
                let neighbors = index.query(centre, band.fan_size);
                let d = fan_distance(centre, points, &neighbors);
                if d >= band.d_lower && d <= band.d_upper {
                    seeds.push(centre);
                    approx_dists.push(d);
                }
            }
        }
    }
    if seeds.is_empty() {
        return Err(Error::EmptySeedSet);
    }
    Ok(SeedSet {
        seeds,
        approx_dists,
    })
}
