//! Contact, orientation and spatial affordances derived from a primitive
//! field, aggregated per point or restricted to a region.

mod export;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::apply_rigid;
use crate::primitives::{PrimitiveDistribution, PrimitiveField, VoxelGrid};
use crate::synth::HOISample;
use crate::Vec3;

pub use export::{ramp_color, write_affordance_csv, write_affordance_ply, write_occupancy, ExportError, OccupancyHeader};

#[derive(Debug, Error, PartialEq)]
pub enum AffordanceError {
    #[error("distribution is not normalized")]
    Unnormalized,
    #[error("orientation needs at least 2 sphere bins, got {0}")]
    TooFewBins(usize),
    #[error("length scale must be positive and finite, got {0}")]
    LengthScale(f64),
    #[error("selection is empty")]
    EmptySelection,
    #[error("index {index} out of range for {len} points")]
    Index { index: usize, len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AffordanceKind {
    Contact,
    Orientation,
}

/// Which point set an aggregate is indexed by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    /// Values per object point (reduced over human points).
    OverObject,
    /// Values per human point (reduced over object points).
    OverHuman,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::OverObject => Side::OverHuman,
            Side::OverHuman => Side::OverObject,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    #[default]
    Max,
    /// Mean over every partner index; missing pairs count as zero.
    Mean,
}

/// One value per point of one side of a field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffordanceField {
    pub values: Vec<f64>,
    pub kind: AffordanceKind,
    pub side: Side,
    pub provenance: String,
}

impl AffordanceField {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Mean value over `indices` (NaN when empty).
    pub fn mean_over(&self, indices: &[usize]) -> f64 {
        indices.iter().map(|&i| self.values[i]).sum::<f64>() / indices.len() as f64
    }
}

/// `((1 − n·ẑ) / 2) · exp(−‖p‖ / rho)`.
pub fn f_contact(p: &Vec3, n: &Vec3, rho: f64) -> f64 {
    (1.0 - n.z) / 2.0 * (-p.norm() / rho).exp()
}

fn check_rho(rho: f64) -> Result<(), AffordanceError> {
    if rho > 0.0 && rho.is_finite() {
        Ok(())
    } else {
        Err(AffordanceError::LengthScale(rho))
    }
}

/// Per-voxel and per-bin factors of the contact function on a grid.
#[derive(Debug, Clone)]
pub struct ContactTables {
    pub proximity: Vec<f64>,
    pub facing: Vec<f64>,
}

impl ContactTables {
    pub fn new(dist: &PrimitiveDistribution, rho: f64) -> Result<Self, AffordanceError> {
        check_rho(rho)?;
        let g = dist.grid();
        let proximity =
            (0..g.voxels.cell_count()).map(|v| (-g.voxels.center(v).norm() / rho).exp()).collect();
        let facing = g.sphere.directions().iter().map(|n| (1.0 - n.z) / 2.0).collect();
        Ok(Self { proximity, facing })
    }
}

/// `Σ_{v,k} P(v, k) · f_contact(center_v, dir_k)`.
pub fn contact_expectation(dist: &PrimitiveDistribution, rho: f64) -> Result<f64, AffordanceError> {
    let t = ContactTables::new(dist, rho)?;
    contact_expectation_with(dist, &t)
}

pub fn contact_expectation_with(dist: &PrimitiveDistribution, t: &ContactTables) -> Result<f64, AffordanceError> {
    if !dist.is_normalized() {
        return Err(AffordanceError::Unnormalized);
    }
    Ok(dist.expectation_separable(&t.proximity, &t.facing))
}

fn entropy(hist: &[f64]) -> f64 {
    hist.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum()
}

/// `1 − H(P(n)) / ln n_b`, clamped into [0, 1] against round-off.
pub fn orientation_expectation(dist: &PrimitiveDistribution) -> Result<f64, AffordanceError> {
    if !dist.is_normalized() {
        return Err(AffordanceError::Unnormalized);
    }
    let nb = dist.grid().sphere.len();
    if nb < 2 {
        return Err(AffordanceError::TooFewBins(nb));
    }
    let h = entropy(&dist.marginal_n());
    Ok((1.0 - h / (nb as f64).ln()).clamp(0.0, 1.0))
}

/// Same quantity summed cell by cell as `Σ P(v, k) · (1 + ln P(k) / ln n_b)`.
pub fn orientation_expectation_cellwise(dist: &PrimitiveDistribution) -> Result<f64, AffordanceError> {
    if !dist.is_normalized() {
        return Err(AffordanceError::Unnormalized);
    }
    let nb = dist.grid().sphere.len();
    if nb < 2 {
        return Err(AffordanceError::TooFewBins(nb));
    }
    let marginal = dist.marginal_n();
    let ln_nb = (nb as f64).ln();
    let dense = dist.to_dense();
    let mut total = 0.0;
    for cell in dense.chunks_exact(nb) {
        for (k, &w) in cell.iter().enumerate() {
            if w > 0.0 && marginal[k] > 0.0 {
                total += w * (1.0 + marginal[k].ln() / ln_nb);
            }
        }
    }
    Ok(total)
}

/// Positional mass of the voxel holding `x`; zero outside the grid.
pub fn spatial_occupancy(dist: &PrimitiveDistribution, x: &Vec3) -> Result<f64, AffordanceError> {
    if !dist.is_normalized() {
        return Err(AffordanceError::Unnormalized);
    }
    Ok(match dist.grid().voxels.locate(x) {
        Some(v) => dist.marginal_p()[v],
        None => 0.0,
    })
}

/// Expectation of one kind for every stored pair, keyed `(i, j)`.
pub fn pairwise_values(
    field: &PrimitiveField,
    kind: AffordanceKind,
    rho: f64,
) -> Result<Vec<((u32, u32), f64)>, AffordanceError> {
    let mut tables = None;
    field
        .distributions()
        .iter()
        .map(|(&k, d)| {
            let v = match kind {
                AffordanceKind::Contact => {
                    let t = match &tables {
                        Some(t) => t,
                        None => tables.insert(ContactTables::new(d, rho)?),
                    };
                    contact_expectation_with(d, t)?
                }
                AffordanceKind::Orientation => orientation_expectation(d)?,
            };
            Ok((k, v))
        })
        .collect()
}

fn side_len(field: &PrimitiveField, side: Side) -> usize {
    match side {
        Side::OverObject => field.object_points().len(),
        Side::OverHuman => field.human_points().len(),
    }
}

fn reduce(
    pairs: &[((u32, u32), f64)],
    side: Side,
    len: usize,
    partners: usize,
    rule: Reduction,
    keep: impl Fn(u32, u32) -> bool,
) -> Vec<f64> {
    let mut out = vec![0.0f64; len];
    for &((i, j), v) in pairs {
        if !keep(i, j) {
            continue;
        }
        let at = match side {
            Side::OverObject => i as usize,
            Side::OverHuman => j as usize,
        };
        match rule {
            Reduction::Max => out[at] = out[at].max(v),
            Reduction::Mean => out[at] += v,
        }
    }
    if rule == Reduction::Mean && partners > 0 {
        out.iter_mut().for_each(|x| *x /= partners as f64);
    }
    out
}

/// Per point of `side`, the reduction over partner points of the pairwise
/// expectation. Pairs missing from the field count as zero.
pub fn aggregate_pointwise(
    field: &PrimitiveField,
    kind: AffordanceKind,
    side: Side,
    rule: Reduction,
    rho: f64,
) -> Result<AffordanceField, AffordanceError> {
    let pairs = pairwise_values(field, kind, rho)?;
    let values = reduce(&pairs, side, side_len(field, side), side_len(field, side.opposite()), rule, |_, _| true);
    Ok(AffordanceField { values, kind, side, provenance: format!("{rule:?} over {} pairs", pairs.len()).to_lowercase() })
}

/// Contact on the side opposite `selected_side`, maximized over pairs whose
/// `selected_side` index is in `selected`.
pub fn regionwise_contact(
    field: &PrimitiveField,
    selected_side: Side,
    selected: &[usize],
    rho: f64,
) -> Result<AffordanceField, AffordanceError> {
    if selected.is_empty() {
        return Err(AffordanceError::EmptySelection);
    }
    let len = side_len(field, selected_side);
    let mut mask = vec![false; len];
    for &s in selected {
        if s >= len {
            return Err(AffordanceError::Index { index: s, len });
        }
        mask[s] = true;
    }
    let pairs = pairwise_values(field, AffordanceKind::Contact, rho)?;
    let out_side = selected_side.opposite();
    let values = reduce(&pairs, out_side, side_len(field, out_side), len, Reduction::Max, |i, j| match selected_side {
        Side::OverObject => mask[i as usize],
        Side::OverHuman => mask[j as usize],
    });
    Ok(AffordanceField {
        values,
        kind: AffordanceKind::Contact,
        side: out_side,
        provenance: format!("region of {} points", selected.len()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OccupancyFrame {
    CanonicalizedPerPoint,
    ObjectFrame,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub voxels: VoxelGrid,
    pub counts: Vec<f64>,
    pub frame: OccupancyFrame,
}

impl OccupancyGrid {
    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// Copy scaled to unit total (unchanged when empty).
    pub fn normalized(&self) -> OccupancyGrid {
        let t = self.total();
        let counts = if t > 0.0 { self.counts.iter().map(|c| c / t).collect() } else { self.counts.clone() };
        OccupancyGrid { counts, ..self.clone() }
    }

    /// Mass within the `(2r+1)³` voxel block around the voxel holding `x`.
    pub fn mass_near(&self, x: &Vec3, r: usize) -> f64 {
        let Some(c) = self.voxels.locate(x) else { return 0.0 };
        let g = self.voxels.resolution();
        let [cx, cy, cz] = self.voxels.unflat(c);
        let span = |c: usize| c.saturating_sub(r)..=(c + r).min(g - 1);
        let mut m = 0.0;
        for x in span(cx) {
            for y in span(cy) {
                for z in span(cz) {
                    m += self.counts[self.voxels.flat(x, y, z)];
                }
            }
        }
        m
    }
}

/// Counts, per sample, each selected body point (in the object's frame) into
/// the voxel holding it. Points outside the grid are dropped.
pub fn object_frame_occupancy(
    dataset: &[HOISample],
    human_subset: &[usize],
    voxels: &VoxelGrid,
) -> Result<OccupancyGrid, AffordanceError> {
    let mut counts = vec![0.0; voxels.cell_count()];
    for sample in dataset {
        let local = apply_rigid(sample.body.surface(), &sample.object_pose.inverse());
        for &j in human_subset {
            if j >= local.len() {
                return Err(AffordanceError::Index { index: j, len: local.len() });
            }
            if let Some(v) = voxels.locate(&local.points()[j]) {
                counts[v] += 1.0;
            }
        }
    }
    Ok(OccupancyGrid { voxels: *voxels, counts, frame: OccupancyFrame::ObjectFrame })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;
    use std::sync::Arc;

    use super::*;
    use crate::geom::SurfacePointSet;
    use crate::primitives::{fibonacci_sphere, Direction, GridSpec, KernelWidths};

    fn grid(g: usize, nb: usize) -> Arc<GridSpec> {
        GridSpec::new(VoxelGrid::new(1.0, g).unwrap(), fibonacci_sphere(nb))
    }

    fn dense(grid: &Arc<GridSpec>, w: Vec<f64>) -> PrimitiveDistribution {
        let mut d = PrimitiveDistribution::from_dense(grid.clone(), w, 1).unwrap();
        d.normalize().unwrap();
        d
    }

    fn delta(grid: &Arc<GridSpec>, v: usize, k: usize) -> PrimitiveDistribution {
        let nb = grid.sphere.len();
        let mut w = vec![0.0; grid.cells()];
        w[v * nb + k] = 1.0;
        dense(grid, w)
    }

    fn points(n: usize) -> SurfacePointSet {
        SurfacePointSet::new(vec![Vec3::zeros(); n], vec![Vec3::z(); n], "t").unwrap()
    }

    #[test]
    fn contact_formula_points() {
        let z = Vec3::z();
        assert_eq!(f_contact(&Vec3::zeros(), &-z, 1.0), 1.0);
        assert_eq!(f_contact(&Vec3::new(0.3, -2.0, 1.0), &z, 1.0), 0.0);
        assert_eq!(f_contact(&Vec3::x(), &-z, 1.0), (-1.0f64).exp());
    }

    #[test]
    fn contact_of_delta_is_cell_value() {
        let g = grid(4, 50);
        let v = g.voxels.locate(&Vec3::new(0.1, 0.1, 0.1)).unwrap();
        let k = g.sphere.nearest(&-Vec3::z());
        let e = contact_expectation(&delta(&g, v, k), 1.0).unwrap();
        assert_eq!(e, f_contact(&g.voxels.center(v), &g.sphere.directions()[k], 1.0));
        let raw = PrimitiveDistribution::from_dense(g.clone(), vec![1.0; g.cells()], 1).unwrap();
        assert_eq!(contact_expectation(&raw, 1.0), Err(AffordanceError::Unnormalized));
        assert_eq!(contact_expectation(&delta(&g, v, k), 0.0), Err(AffordanceError::LengthScale(0.0)));
    }

    #[test]
    fn orientation_examples() {
        let g = grid(2, 100);
        let uniform = dense(&g, vec![1.0; g.cells()]);
        assert!(orientation_expectation(&uniform).unwrap().abs() < 1e-9);
        assert!((orientation_expectation(&delta(&g, 3, 17)).unwrap() - 1.0).abs() < 1e-9);
        let mut w = vec![0.0; g.cells()];
        w[5] = 1.0;
        w[100 * 2 + 9] = 1.0;
        let two = dense(&g, w);
        let want = 1.0 - 2f64.ln() / 100f64.ln();
        assert!((orientation_expectation(&two).unwrap() - want).abs() < 1e-12);
        assert!((orientation_expectation_cellwise(&two).unwrap() - want).abs() < 1e-12);
        let one = dense(&grid(2, 1), vec![1.0; 8]);
        assert_eq!(orientation_expectation(&one), Err(AffordanceError::TooFewBins(1)));
    }

    #[test]
    fn spatial_occupancy_examples() {
        let g = grid(4, 10);
        let x = Vec3::new(-0.7, 0.2, 0.4);
        let v = g.voxels.locate(&x).unwrap();
        let d = delta(&g, v, 2);
        assert_eq!(spatial_occupancy(&d, &x).unwrap(), 1.0);
        assert_eq!(spatial_occupancy(&d, &Vec3::new(5.0, 0.0, 0.0)).unwrap(), 0.0);
        let total: f64 = (0..g.voxels.cell_count()).map(|v| spatial_occupancy(&d, &g.voxels.center(v)).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    fn field_of(g: &Arc<GridSpec>, entries: Vec<((u32, u32), PrimitiveDistribution)>, no: usize, nh: usize) -> PrimitiveField {
        let kernel = KernelWidths { sigma_p: 0.1, sigma_n: 0.1 };
        let map: BTreeMap<_, _> = entries.into_iter().collect();
        PrimitiveField::new(g.clone(), kernel, Direction::ObjectToHuman, points(no), points(nh), map).unwrap()
    }

    #[test]
    fn aggregation_takes_max_and_region_restricts() {
        let g = grid(4, 20);
        let down = g.sphere.nearest(&-Vec3::z());
        let near = g.voxels.locate(&Vec3::new(0.1, 0.1, 0.1)).unwrap();
        let far = g.voxels.locate(&Vec3::new(0.9, 0.9, 0.9)).unwrap();
        let a = delta(&g, near, down);
        let b = delta(&g, far, down);
        let ea = contact_expectation(&a, 1.0).unwrap();
        let eb = contact_expectation(&b, 1.0).unwrap();
        assert!(ea > eb);
        let f = field_of(&g, vec![((0, 0), b.clone()), ((0, 1), a.clone()), ((1, 1), b)], 2, 2);
        let obj = aggregate_pointwise(&f, AffordanceKind::Contact, Side::OverObject, Reduction::Max, 1.0).unwrap();
        assert_eq!(obj.values, vec![ea, eb]);
        let hum = aggregate_pointwise(&f, AffordanceKind::Contact, Side::OverHuman, Reduction::Max, 1.0).unwrap();
        assert_eq!(hum.values, vec![eb, ea]);
        let mean = aggregate_pointwise(&f, AffordanceKind::Contact, Side::OverObject, Reduction::Mean, 1.0).unwrap();
        assert_eq!(mean.values, vec![(ea + eb) / 2.0, eb / 2.0]);

        let r = regionwise_contact(&f, Side::OverObject, &[1], 1.0).unwrap();
        assert_eq!((r.side, r.values), (Side::OverHuman, vec![0.0, eb]));
        let all = regionwise_contact(&f, Side::OverObject, &[0, 1], 1.0).unwrap();
        assert_eq!(all.values, hum.values);
        assert_eq!(regionwise_contact(&f, Side::OverHuman, &[], 1.0), Err(AffordanceError::EmptySelection));
        assert_eq!(
            regionwise_contact(&f, Side::OverHuman, &[2], 1.0),
            Err(AffordanceError::Index { index: 2, len: 2 })
        );
    }

    #[test]
    fn single_pair_field_matches_its_expectation() {
        let g = grid(4, 20);
        let d = delta(&g, 5, 3);
        let e = orientation_expectation(&d).unwrap();
        let f = field_of(&g, vec![((0, 0), d)], 1, 1);
        for side in [Side::OverObject, Side::OverHuman] {
            let a = aggregate_pointwise(&f, AffordanceKind::Orientation, side, Reduction::Max, 1.0).unwrap();
            assert_eq!(a.values, vec![e]);
        }
    }

    #[test]
    fn occupancy_grid_basics() {
        let g = OccupancyGrid {
            voxels: VoxelGrid::new(1.0, 4).unwrap(),
            counts: (0..64).map(|k| k as f64).collect(),
            frame: OccupancyFrame::ObjectFrame,
        };
        assert!((g.normalized().total() - 1.0).abs() < 1e-12);
        assert_eq!(g.mass_near(&Vec3::new(5.0, 0.0, 0.0), 1), 0.0);
        assert_eq!(g.mass_near(&Vec3::zeros(), 4), g.total());
    }
}
