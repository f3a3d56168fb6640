//! Sea-cell geometry and fixed-radius neighbor tables.
//!
//! Distances are great-circle (haversine) between cell centers on a sphere of
//! radius [`EARTH_RADIUS_KM`]. Disks are closed: a cell at exactly `radius_km`
//! is a neighbor.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::csv_io;
use crate::error::{Error, Result};

pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    /// Degrees east.
    pub lon: f64,
    /// Degrees north.
    pub lat: f64,
}

impl GeoPoint {
    pub fn new(lon: f64, lat: f64) -> Result<Self> {
        if !(-180.0..=180.0).contains(&lon) || !(-90.0..=90.0).contains(&lat) {
            return Err(Error::InvalidArgument(format!(
                "coordinates out of range: lon {lon}, lat {lat}"
            )));
        }
        Ok(GeoPoint { lon, lat })
    }
}

/// Great-circle distance in km.
///
/// Coordinate differences enter through their absolute values, so the result
/// is bit-for-bit symmetric in its arguments.
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = (b.lat - a.lat).abs().to_radians();
    let dlon = (b.lon - a.lon).abs().to_radians();
    let h = (dlat * 0.5).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon * 0.5).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Ordered set of sea cells; `cell_id` is the position in `cells`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    cells: Vec<GeoPoint>,
}

impl Grid {
    pub fn new(cells: Vec<GeoPoint>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(cells.len());
        for (id, c) in cells.iter().enumerate() {
            if !seen.insert((c.lon.to_bits(), c.lat.to_bits())) {
                return Err(Error::InvalidArgument(format!(
                    "cell {id} duplicates coordinates ({}, {})",
                    c.lon, c.lat
                )));
            }
        }
        Ok(Grid { cells })
    }

    /// Regular lon/lat lattice, row-major from the south-west corner.
    pub fn regular(rows: usize, cols: usize, lon0: f64, lat0: f64, spacing_deg: f64) -> Result<Self> {
        if spacing_deg <= 0.0 {
            return Err(Error::InvalidArgument(format!("spacing {spacing_deg} must be positive")));
        }
        let mut cells = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                cells.push(GeoPoint::new(
                    lon0 + c as f64 * spacing_deg,
                    lat0 + r as f64 * spacing_deg,
                )?);
            }
        }
        Grid::new(cells)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[GeoPoint] {
        &self.cells
    }

    pub fn cell(&self, id: usize) -> GeoPoint {
        self.cells[id]
    }

    pub fn distance_km(&self, i: usize, j: usize) -> f64 {
        haversine_km(self.cells[i], self.cells[j])
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let mut emit = || -> std::io::Result<()> {
            w.write_all(b"cell_id,lon_deg,lat_deg\n")?;
            for (id, c) in self.cells.iter().enumerate() {
                writeln!(w, "{id},{},{}", c.lon, c.lat)?;
            }
            w.flush()
        };
        emit().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        #[derive(serde::Deserialize)]
        struct Row {
            cell_id: usize,
            lon_deg: f64,
            lat_deg: f64,
        }
        const WHAT: &str = "grid CSV";
        let mut rdr = csv_io::open(path, WHAT, &["cell_id", "lon_deg", "lat_deg"])?;
        let mut cells = Vec::new();
        for row in rdr.deserialize::<Row>() {
            let row = row.map_err(|e| csv_io::map_err(WHAT, path, e))?;
            if row.cell_id != cells.len() {
                return Err(Error::format(WHAT, format!("cell_id {} out of sequence", row.cell_id)));
            }
            cells.push(GeoPoint::new(row.lon_deg, row.lat_deg)?);
        }
        Grid::new(cells)
    }
}

/// For every cell, the ascending list of cells within `radius_km` (self included).
///
/// Stored in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborTable {
    radius_km: f64,
    starts: Vec<usize>,
    ids: Vec<u32>,
}

impl NeighborTable {
    pub fn radius_km(&self) -> f64 {
        self.radius_km
    }

    pub fn n_cells(&self) -> usize {
        self.starts.len() - 1
    }

    pub fn neighbors(&self, cell: usize) -> &[u32] {
        &self.ids[self.starts[cell]..self.starts[cell + 1]]
    }

    pub fn total_pairs(&self) -> usize {
        self.ids.len()
    }

    fn from_lists(radius_km: f64, lists: Vec<Vec<u32>>) -> Self {
        let mut starts = Vec::with_capacity(lists.len() + 1);
        starts.push(0);
        let mut ids = Vec::with_capacity(lists.iter().map(Vec::len).sum());
        for l in lists {
            ids.extend_from_slice(&l);
            starts.push(ids.len());
        }
        NeighborTable { radius_km, starts, ids }
    }
}

/// Closed-disk neighbor table.
///
/// Candidates are restricted to the latitude band `±radius/R` around each
/// cell, which is exact because great-circle distance is never smaller than
/// the meridional separation.
pub fn build_neighbor_table(grid: &Grid, radius_km: f64) -> Result<NeighborTable> {
    if !(radius_km >= 0.0) || !radius_km.is_finite() {
        return Err(Error::InvalidArgument(format!("radius {radius_km} km must be >= 0")));
    }
    let cells = grid.cells();
    let mut by_lat: Vec<u32> = (0..cells.len() as u32).collect();
    by_lat.sort_by(|&a, &b| cells[a as usize].lat.total_cmp(&cells[b as usize].lat));
    let lats: Vec<f64> = by_lat.iter().map(|&i| cells[i as usize].lat).collect();
    // small pad so float noise in the band edge never prunes a true neighbor
    let band_deg = (radius_km / EARTH_RADIUS_KM).to_degrees() * (1.0 + 1e-9) + 1e-12;

    let lists: Vec<Vec<u32>> = (0..cells.len())
        .into_par_iter()
        .map(|i| {
            let p = cells[i];
            let lo = lats.partition_point(|&l| l < p.lat - band_deg);
            let hi = lats.partition_point(|&l| l <= p.lat + band_deg);
            let mut out: Vec<u32> = by_lat[lo..hi]
                .iter()
                .copied()
                .filter(|&j| haversine_km(p, cells[j as usize]) <= radius_km)
                .collect();
            out.sort_unstable();
            out
        })
        .collect();
    Ok(NeighborTable::from_lists(radius_km, lists))
}

/// All-pairs reference filter, O(S²).
pub fn brute_force_neighbor_table(grid: &Grid, radius_km: f64) -> NeighborTable {
    let n = grid.len();
    let lists = (0..n)
        .map(|i| {
            (0..n as u32)
                .filter(|&j| grid.distance_km(i, j as usize) <= radius_km)
                .collect()
        })
        .collect();
    NeighborTable::from_lists(radius_km, lists)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(lon: f64, lat: f64) -> GeoPoint {
        GeoPoint::new(lon, lat).unwrap()
    }

    #[test]
    fn haversine_reference_distances() {
        assert_eq!(haversine_km(p(10.0, 20.0), p(10.0, 20.0)), 0.0);
        let one_degree = 2.0 * std::f64::consts::PI * 6371.0 / 360.0;
        assert!((haversine_km(p(0.0, 0.0), p(0.0, 1.0)) - one_degree).abs() < 1e-3);
        assert!((one_degree - 111.1949).abs() < 1e-3);
        // 1/20 degree grid spacing on the equator
        let d = haversine_km(p(0.0, 0.0), p(0.05, 0.0));
        assert!((d - 5.56).abs() < 0.01, "{d}");
    }

    #[test]
    fn rejects_bad_points_and_duplicates() {
        assert!(GeoPoint::new(181.0, 0.0).is_err());
        assert!(GeoPoint::new(0.0, -90.5).is_err());
        assert!(Grid::new(vec![p(1.0, 1.0), p(1.0, 1.0)]).is_err());
    }

    #[test]
    fn zero_radius_is_self_only() {
        let g = Grid::regular(4, 5, 35.0, 20.0, 0.05).unwrap();
        let t = build_neighbor_table(&g, 0.0).unwrap();
        for i in 0..g.len() {
            assert_eq!(t.neighbors(i), &[i as u32]);
        }
        assert!(build_neighbor_table(&g, -1.0).is_err());
    }

    #[test]
    fn matches_brute_force_on_regular_grid() {
        let g = Grid::regular(10, 10, 36.0, 22.0, 0.05).unwrap();
        assert_eq!(build_neighbor_table(&g, 50.0).unwrap(), brute_force_neighbor_table(&g, 50.0));
        assert_eq!(build_neighbor_table(&g, 12.0).unwrap(), brute_force_neighbor_table(&g, 12.0));
    }

    #[test]
    fn open_ocean_disk_holds_about_260_cells() {
        let g = Grid::regular(41, 41, 38.0, 19.0, 0.05).unwrap();
        let center = 20 * 41 + 20;
        let oracle = (0..g.len()).filter(|&j| g.distance_km(center, j) <= 50.0).count();
        let t = build_neighbor_table(&g, 50.0).unwrap();
        assert_eq!(t.neighbors(center).len(), oracle);
        // pi (50/5.5)^2 ~ 260, modulated by cos(lat) shrinking the zonal spacing
        assert!((230..=320).contains(&oracle), "{oracle}");
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.csv");
        let g = Grid::regular(3, 4, 35.0, 20.0, 0.05).unwrap();
        g.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("cell_id,lon_deg,lat_deg\n0,35,20\n"));
        assert_eq!(Grid::read_csv(&path).unwrap(), g);
    }

    fn scattered_grid() -> impl Strategy<Value = Grid> {
        prop::collection::vec((30.0f64..31.0, 20.0f64..21.0), 1..120).prop_filter_map(
            "duplicate coordinates",
            |pts| Grid::new(pts.into_iter().map(|(lon, lat)| p(lon, lat)).collect()).ok(),
        )
    }

    proptest! {
        #[test]
        fn table_is_symmetric_and_matches_oracle(g in scattered_grid(), r in 0.0f64..60.0) {
            let t = build_neighbor_table(&g, r).unwrap();
            prop_assert_eq!(&t, &brute_force_neighbor_table(&g, r));
            for i in 0..g.len() {
                prop_assert!(t.neighbors(i).contains(&(i as u32)));
                for &j in t.neighbors(i) {
                    prop_assert!(t.neighbors(j as usize).contains(&(i as u32)));
                    prop_assert!(g.distance_km(i, j as usize) <= r);
                }
            }
        }

        #[test]
        fn larger_radius_is_superset(g in scattered_grid(), r1 in 0.0f64..40.0, extra in 0.0f64..40.0) {
            let small = build_neighbor_table(&g, r1).unwrap();
            let big = build_neighbor_table(&g, r1 + extra).unwrap();
            for i in 0..g.len() {
                for j in small.neighbors(i) {
                    prop_assert!(big.neighbors(i).contains(j));
                }
            }
        }
    }
}
