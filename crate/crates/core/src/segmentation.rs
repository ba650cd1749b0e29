//! Seeded region growing over scalar fields.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{FtcError, Result};
use crate::fields::{FieldGrid, GridSpec};
use crate::geometry::Point2;
use crate::gridio::{format_value, GridHeader, Payload};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    Identity,
    Log10,
}

impl Transform {
    pub fn as_str(&self) -> &'static str {
        match self {
            Transform::Identity => "identity",
            Transform::Log10 => "log10",
        }
    }

    pub fn apply(&self, field: &FieldGrid) -> FieldGrid {
        match self {
            Transform::Identity => field.clone(),
            Transform::Log10 => field.log10(),
        }
    }
}

impl std::str::FromStr for Transform {
    type Err = FtcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" | "none" => Ok(Transform::Identity),
            "log10" | "log" => Ok(Transform::Log10),
            other => Err(FtcError::Config(format!("unknown transform `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthSettings {
    pub n_seeds: usize,
    /// Admission threshold in transformed units.
    pub threshold: f64,
    pub transform: Transform,
}

impl Default for GrowthSettings {
    fn default() -> Self {
        Self { n_seeds: 100, threshold: 0.25, transform: Transform::Log10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub label: u32,
    pub seed: (usize, usize),
    pub seed_point: Point2,
    pub cells: usize,
    /// Mean of the transformed values.
    pub mean: f64,
    /// `(i_min, i_max, j_min, j_max)`.
    pub bbox: (usize, usize, usize, usize),
}

/// Label grid (0 = unassigned) plus one record per region, labels `1..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionPartition {
    pub spec: GridSpec,
    pub labels: Vec<u32>,
    pub regions: Vec<Region>,
}

impl RegionPartition {
    pub fn region(&self, label: u32) -> Option<&Region> {
        self.regions.get((label as usize).checked_sub(1)?)
    }

    pub fn mask(&self, label: u32) -> Vec<bool> {
        self.labels.iter().map(|&l| l == label).collect()
    }

    pub fn unassigned(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 0).count()
    }
}

/// Cell indices of an `m × m` lattice of cell centres, `m = ⌊√n⌋`, in
/// row-major order.
pub fn lattice_seeds(spec: &GridSpec, n_seeds: usize) -> Result<Vec<(usize, usize)>> {
    if n_seeds == 0 {
        return Err(FtcError::Config("need at least one seed".into()));
    }
    let m = (n_seeds as f64).sqrt().floor() as usize;
    let m = if (m + 1) * (m + 1) <= n_seeds { m + 1 } else { m };
    if spec.nx < m || spec.ny < m {
        return Err(FtcError::GridTooSmall { nx: spec.nx, ny: spec.ny, seeds: n_seeds });
    }
    let at = |a: usize, n: usize| ((a as f64 + 0.5) * n as f64 / m as f64).floor() as usize;
    Ok((0..m).flat_map(|b| (0..m).map(move |a| (at(a, spec.nx), at(b, spec.ny)))).collect())
}

/// Order-preserving integer image of a finite `f64`.
fn ord(v: f64) -> i64 {
    let b = v.to_bits() as i64;
    if b < 0 {
        b ^ i64::MAX
    } else {
        b
    }
}

struct Growing {
    label: u32,
    seed: usize,
    sum: f64,
    count: usize,
    /// Unassigned neighbours keyed by (ordered value, cell index); entries
    /// assigned elsewhere are dropped lazily.
    frontier: BTreeMap<(i64, usize), f64>,
}

impl Growing {
    fn mean(&self) -> f64 {
        self.sum / self.count as f64
    }

    /// Closest frontier cell to the running mean as `(diff, cell)`; ties
    /// go to the lower cell index.
    fn best(&mut self, labels: &[u32]) -> Option<(f64, usize)> {
        let key = ord(self.mean());
        loop {
            let below = self.frontier.range(..(key, usize::MAX)).next_back().map(|(k, v)| (*k, *v));
            let above = self.frontier.range((key, usize::MAX)..).next().map(|(k, v)| (*k, *v));
            let stale = [below, above].into_iter().flatten().find(|((_, c), _)| labels[*c] != 0);
            if let Some((k, _)) = stale {
                self.frontier.remove(&k);
                continue;
            }
            let m = self.mean();
            let cand = |e: Option<((i64, usize), f64)>| e.map(|((_, c), v)| ((v - m).abs(), c));
            return match (cand(below), cand(above)) {
                (Some(a), Some(b)) => Some(if (b.0, b.1) < (a.0, a.1) { b } else { a }),
                (a, b) => a.or(b),
            };
        }
    }
}

fn neighbours(spec: &GridSpec, k: usize) -> impl Iterator<Item = usize> {
    let (nx, ny) = (spec.nx, spec.ny);
    let (i, j) = (k % nx, k / nx);
    [
        (i > 0).then(|| k - 1),
        (i + 1 < nx).then(|| k + 1),
        (j > 0).then(|| k - nx),
        (j + 1 < ny).then(|| k + nx),
    ]
    .into_iter()
    .flatten()
}

/// Seeded region growing on the transformed field from a uniform seed lattice.
pub fn seeded_region_growing(field: &FieldGrid, settings: &GrowthSettings) -> Result<RegionPartition> {
    let seeds = lattice_seeds(&field.spec(), settings.n_seeds)?;
    grow_from_seeds(field, &seeds, settings)
}

/// Region growing from explicit seed cells. The unassigned frontier cell
/// closest to its region's running mean is admitted next, over all
/// regions; ties go to the lower label, then the lower cell index.
/// Seeds enter with difference 0 and form a region only if still
/// unassigned when reached.
pub fn grow_from_seeds(field: &FieldGrid, seeds: &[(usize, usize)], settings: &GrowthSettings) -> Result<RegionPartition> {
    if !(settings.threshold > 0.0) {
        return Err(FtcError::Config(format!("threshold must be positive, got {}", settings.threshold)));
    }
    let spec = field.spec();
    let t = settings.transform.apply(field);
    let value = |k: usize| t.valid[k].then_some(t.values[k]);
    let mut labels = vec![0u32; spec.len()];
    let mut regions: Vec<Growing> = Vec::new();
    let mut pending: Vec<(u32, usize)> = seeds
        .iter()
        .enumerate()
        .filter(|(_, &(i, j))| i < spec.nx && j < spec.ny)
        .map(|(n, &(i, j))| (n as u32 + 1, j * spec.nx + i))
        .filter(|&(_, k)| value(k).is_some())
        .collect();
    pending.reverse();

    loop {
        while pending.last().is_some_and(|&(_, k)| labels[k] != 0) {
            pending.pop();
        }
        let mut best: Option<(f64, u32, usize, Option<usize>)> = pending.last().map(|&(l, k)| (0.0, l, k, None));
        for (r, g) in regions.iter_mut().enumerate() {
            if let Some((d, c)) = g.best(&labels) {
                let cand = (d, g.label, c, Some(r));
                let better = match &best {
                    None => true,
                    Some(b) => (cand.0, cand.1, cand.2) < (b.0, b.1, b.2),
                };
                if better {
                    best = Some(cand);
                }
            }
        }
        let Some((diff, label, cell, owner)) = best else { break };
        if diff > settings.threshold {
            break;
        }
        let v = value(cell).expect("frontier cells are valid");
        let r = match owner {
            Some(r) => r,
            None => {
                pending.pop();
                regions.push(Growing { label, seed: cell, sum: 0.0, count: 0, frontier: BTreeMap::new() });
                regions.len() - 1
            }
        };
        labels[cell] = label;
        let g = &mut regions[r];
        g.sum += v;
        g.count += 1;
        for n in neighbours(&spec, cell) {
            if labels[n] == 0 {
                if let Some(w) = value(n) {
                    g.frontier.insert((ord(w), n), w);
                }
            }
        }
    }

    let mut partition = RegionPartition { spec, labels, regions: Vec::new() };
    let records = regions
        .iter()
        .map(|g| (g.label, g.seed, g.mean()))
        .collect::<Vec<_>>();
    rebuild(&mut partition, &records);
    Ok(partition)
}

/// Compacts labels to `1..=K` in order of old label and recomputes the
/// region records. `records` holds `(old label, seed cell, mean)`.
fn rebuild(p: &mut RegionPartition, records: &[(u32, usize, f64)]) {
    let mut sorted = records.to_vec();
    sorted.sort_by_key(|r| r.0);
    let max_old = p.labels.iter().copied().max().unwrap_or(0) as usize;
    let mut remap = vec![0u32; max_old + 1];
    let mut regions = Vec::new();
    for &(old, seed, mean) in &sorted {
        if (old as usize) > max_old {
            continue;
        }
        let new = regions.len() as u32 + 1;
        remap[old as usize] = new;
        let (si, sj) = (seed % p.spec.nx, seed / p.spec.nx);
        regions.push(Region {
            label: new,
            seed: (si, sj),
            seed_point: p.spec.cell_center(si, sj),
            cells: 0,
            mean,
            bbox: (usize::MAX, 0, usize::MAX, 0),
        });
    }
    for (k, l) in p.labels.iter_mut().enumerate() {
        *l = remap[*l as usize];
        if *l > 0 {
            let r = &mut regions[*l as usize - 1];
            let (i, j) = (k % p.spec.nx, k / p.spec.nx);
            r.cells += 1;
            r.bbox = (r.bbox.0.min(i), r.bbox.1.max(i), r.bbox.2.min(j), r.bbox.3.max(j));
        }
    }
    regions.retain(|r| r.cells > 0);
    if regions.iter().enumerate().any(|(n, r)| r.label as usize != n + 1) {
        let again: Vec<_> = regions.iter().map(|r| (r.label, r.seed.1 * p.spec.nx + r.seed.0, r.mean)).collect();
        p.regions = Vec::new();
        rebuild(p, &again);
        return;
    }
    p.regions = regions;
}

/// Repeatedly merges the smallest region below `min_cells` (ties: lower
/// label) into the 4-adjacent region with the closest mean (ties: lower
/// label). Regions with no labelled neighbour are left alone.
pub fn merge_small_regions(partition: &RegionPartition, min_cells: usize) -> Result<RegionPartition> {
    if min_cells == 0 {
        return Err(FtcError::Config("min_cells must be at least 1".into()));
    }
    let mut p = partition.clone();
    let spec = p.spec;
    let mut records: BTreeMap<u32, (usize, usize, f64)> = p
        .regions
        .iter()
        .map(|r| (r.label, (r.seed.1 * spec.nx + r.seed.0, r.cells, r.mean)))
        .collect();
    let mut stuck = std::collections::BTreeSet::new();
    loop {
        let victim = records
            .iter()
            .filter(|(l, r)| r.1 < min_cells && !stuck.contains(*l))
            .map(|(l, r)| (r.1, *l))
            .min();
        let Some((_, small)) = victim else { break };
        let mut adjacent = std::collections::BTreeSet::new();
        for (k, &l) in p.labels.iter().enumerate() {
            if l == small {
                for n in neighbours(&spec, k) {
                    let m = p.labels[n];
                    if m != 0 && m != small {
                        adjacent.insert(m);
                    }
                }
            }
        }
        let mean = records[&small].2;
        let target = adjacent
            .iter()
            .map(|&m| ((records[&m].2 - mean).abs(), m))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let Some((_, into)) = target else {
            stuck.insert(small);
            continue;
        };
        let (_, n_small, m_small) = records.remove(&small).expect("present");
        let r = records.get_mut(&into).expect("present");
        r.2 = (r.2 * r.1 as f64 + m_small * n_small as f64) / (r.1 + n_small) as f64;
        r.1 += n_small;
        for l in p.labels.iter_mut() {
            if *l == small {
                *l = into;
            }
        }
    }
    let flat: Vec<_> = records.iter().map(|(l, r)| (*l, r.0, r.2)).collect();
    p.regions = Vec::new();
    rebuild(&mut p, &flat);
    Ok(p)
}

/// Label grid in the `int` payload of the grid format.
pub fn write_labels<W: Write>(w: &mut W, partition: &RegionPartition, meta: BTreeMap<String, String>) -> Result<()> {
    let header = GridHeader { spec: partition.spec, meta, payload: Payload::Int };
    let values: Vec<i64> = partition.labels.iter().map(|&l| l as i64).collect();
    crate::gridio::write_int_grid(w, &header, &values)
}

pub const REGION_HEADER: &str = "label,seed_x,seed_y,cells,mean,alpha";

/// One row per region; `alpha` is left empty when not scored.
pub fn write_region_table<W: Write>(w: &mut W, partition: &RegionPartition, alpha: Option<&[f64]>) -> Result<()> {
    writeln!(w, "{REGION_HEADER}")?;
    for (n, r) in partition.regions.iter().enumerate() {
        let a = alpha.and_then(|a| a.get(n)).map(|v| format_value(*v)).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.label,
            format_value(r.seed_point.x),
            format_value(r.seed_point.y),
            r.cells,
            format_value(r.mean),
            a
        )?;
    }
    Ok(())
}

/// True when every region's cells form one 4-connected component.
pub fn is_four_connected(partition: &RegionPartition) -> bool {
    let spec = partition.spec;
    let mut seen = vec![false; spec.len()];
    let mut components = vec![0usize; partition.regions.len() + 1];
    for start in 0..spec.len() {
        let l = partition.labels[start];
        if l == 0 || seen[start] {
            continue;
        }
        components[l as usize] += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(k) = stack.pop() {
            for n in neighbours(&spec, k) {
                if !seen[n] && partition.labels[n] == l {
                    seen[n] = true;
                    stack.push(n);
                }
            }
        }
    }
    components.iter().skip(1).all(|&c| c == 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Bounds;

    fn grid(nx: usize, ny: usize, f: impl Fn(usize, usize) -> f64) -> FieldGrid {
        let spec = GridSpec::new(nx, ny, Bounds::new(0.0, nx as f64, 0.0, ny as f64)).unwrap();
        let values = (0..ny).flat_map(|j| (0..nx).map(move |i| (i, j))).map(|(i, j)| f(i, j)).collect();
        FieldGrid::from_values(spec, values).unwrap()
    }

    #[test]
    fn ordering_key_is_monotone() {
        let v = [-1e300, -2.5, -0.0, 0.0, 1e-300, 3.0, 1e300];
        for w in v.windows(2) {
            assert!(ord(w[0]) <= ord(w[1]));
        }
        assert!(ord(-2.5) < ord(-1.0));
    }

    #[test]
    fn lattice_is_uniform() {
        let spec = GridSpec::new(20, 10, Bounds::new(0.0, 2.0, 0.0, 1.0)).unwrap();
        let s = lattice_seeds(&spec, 4).unwrap();
        assert_eq!(s, vec![(5, 2), (15, 2), (5, 7), (15, 7)]);
        assert_eq!(lattice_seeds(&spec, 100).unwrap().len(), 100);
        assert!(matches!(lattice_seeds(&spec, 144), Err(FtcError::GridTooSmall { .. })));
    }

    #[test]
    fn absorbed_seed_never_forms_a_region() {
        let f = grid(6, 2, |_, _| 1.0);
        let s = GrowthSettings { n_seeds: 2, threshold: 0.5, transform: Transform::Identity };
        let p = grow_from_seeds(&f, &[(0, 0), (3, 0)], &s).unwrap();
        assert_eq!(p.regions.len(), 1);
        assert_eq!(p.labels, vec![1; 12]);
    }

    #[test]
    fn unreachable_cells_stay_unassigned() {
        let f = grid(5, 2, |i, _| if i == 2 { 9.0 } else { 0.0 });
        let s = GrowthSettings { n_seeds: 1, threshold: 1.0, transform: Transform::Identity };
        let p = grow_from_seeds(&f, &[(0, 0)], &s).unwrap();
        assert_eq!(p.labels, vec![1, 1, 0, 0, 0, 1, 1, 0, 0, 0]);
        assert_eq!(p.unassigned(), 6);
    }

    #[test]
    fn region_table_format() {
        let f = grid(2, 2, |_, _| 2.0);
        let s = GrowthSettings { n_seeds: 1, threshold: 1.0, transform: Transform::Identity };
        let p = grow_from_seeds(&f, &[(0, 0)], &s).unwrap();
        let mut buf = Vec::new();
        write_region_table(&mut buf, &p, None).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "label,seed_x,seed_y,cells,mean,alpha\n1,5.0000000000000000e-1,5.0000000000000000e-1,4,2.0000000000000000e0,\n"
        );
    }
}
