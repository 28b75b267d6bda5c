//! Synthetic datasets: Circular dSprites, linear-Gaussian factor data and
//! latent traversals.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lingauss::LinearGenerator;
use crate::metrics::FactorDataset;
use crate::report::CsvTable;
use crate::rng::rng_from_seed;

pub const FOREGROUND: u8 = 255;
pub const BACKGROUND: u8 = 0;

/// Centers closer than this to an integer are snapped onto it, so that
/// `32 + r cos(π/2)` lands exactly on the lattice.
const SNAP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct CircularSpec {
    pub width: usize,
    pub height: usize,
    pub disc_radius: f64,
    pub radii: Vec<f64>,
    pub angles: Vec<f64>,
}

impl Default for CircularSpec {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            disc_radius: 5.0,
            radii: (0..=26).map(f64::from).collect(),
            angles: (0..40).map(|t| 2.0 * PI * t as f64 / 40.0).collect(),
        }
    }
}

impl CircularSpec {
    pub fn len(&self) -> usize {
        self.radii.len() * self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Disc center for grid cell `(radius_index, angle_index)`.
    pub fn center(&self, radius_index: usize, angle_index: usize) -> (f64, f64) {
        let (r, g) = (self.radii[radius_index], self.angles[angle_index]);
        let (cx, cy) = (self.width as f64 / 2.0, self.height as f64 / 2.0);
        (snap(cx + r * g.cos()), snap(cy + r * g.sin()))
    }

    pub fn validate(&self) -> Result<()> {
        let max_r = self.radii.iter().copied().fold(0.0, f64::max);
        let half = self.width.min(self.height) as f64 / 2.0;
        if max_r + self.disc_radius > half - 1.0 {
            return Err(Error::InvalidArgument(format!(
                "radius {max_r} plus disc radius {} does not fit the canvas",
                self.disc_radius
            )));
        }
        Ok(())
    }
}

fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < SNAP_TOL {
        r
    } else {
        v
    }
}

/// Row-major 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![BACKGROUND; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn foreground_count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p == FOREGROUND).count()
    }

    /// Binary PGM (`P5`, maxval 255).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        let bad = || Error::Parse("not a binary PGM with maxval 255".into());
        let mut fields = Vec::new();
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad());
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad())?);
        }
        if fields[0] != "P5" || fields[3] != "255" {
            return Err(bad());
        }
        let width: usize = fields[1].parse().map_err(|_| bad())?;
        let height: usize = fields[2].parse().map_err(|_| bad())?;
        let data = bytes.get(pos + 1..).ok_or_else(bad)?;
        if data.len() != width * height {
            return Err(bad());
        }
        Ok(Self {
            width,
            height,
            pixels: data.to_vec(),
        })
    }
}

/// Lattice point `(x, y)` is foreground iff `(x − cx)² + (y − cy)² ≤ radius²`.
/// `x` indexes columns and `y` rows.
pub fn rasterize_disc(width: usize, height: usize, center: (f64, f64), radius: f64) -> Result<GrayImage> {
    let (cx, cy) = center;
    if !(radius >= 0.0)
        || cx - radius < 0.0
        || cy - radius < 0.0
        || cx + radius > (width - 1) as f64
        || cy + radius > (height - 1) as f64
    {
        return Err(Error::InvalidArgument(format!(
            "disc at ({cx}, {cy}) with radius {radius} leaves the {width}x{height} canvas"
        )));
    }
    let mut img = GrayImage::new(width, height);
    let r2 = radius * radius;
    for y in 0..height {
        let dy = y as f64 - cy;
        for x in 0..width {
            let dx = x as f64 - cx;
            if dx * dx + dy * dy <= r2 {
                img.pixels[y * width + x] = FOREGROUND;
            }
        }
    }
    Ok(img)
}

/// One row of the factor table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CircularFactors {
    pub image_index: usize,
    pub radius_index: usize,
    pub angle_index: usize,
}

/// Every `(radius, angle)` combination in radius-major order.
pub fn gen_circular_dsprites(spec: &CircularSpec) -> Result<(Vec<GrayImage>, Vec<CircularFactors>)> {
    spec.validate()?;
    let n_angles = spec.angles.len();
    let factors: Vec<CircularFactors> = (0..spec.len())
        .map(|i| CircularFactors {
            image_index: i,
            radius_index: i / n_angles,
            angle_index: i % n_angles,
        })
        .collect();
    let images = factors
        .par_iter()
        .map(|f| {
            let center = spec.center(f.radius_index, f.angle_index);
            rasterize_disc(spec.width, spec.height, center, spec.disc_radius)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((images, factors))
}

pub fn circular_factor_table(factors: &[CircularFactors]) -> CsvTable {
    let mut t = CsvTable::new(["image_index", "radius_index", "angle_index"]);
    for f in factors {
        t.push([
            f.image_index.to_string(),
            f.radius_index.to_string(),
            f.angle_index.to_string(),
        ]);
    }
    t
}

pub fn circular_image_name(index: usize) -> String {
    format!("img_{index:04}.pgm")
}

/// Writes `img_NNNN.pgm` files plus `factors.csv` into `dir`.
pub fn write_circular_dsprites(spec: &CircularSpec, dir: &Path) -> Result<usize> {
    let (images, factors) = gen_circular_dsprites(spec)?;
    for (img, f) in images.iter().zip(&factors) {
        std::fs::write(dir.join(circular_image_name(f.image_index)), img.to_pgm())?;
    }
    circular_factor_table(&factors).write_to(&dir.join("factors.csv"))?;
    Ok(images.len())
}

/// `n` i.i.d. draws `x = Bc + Az` with factors `c`.
pub fn gen_linear_gaussian_dataset(gen: &LinearGenerator, n: usize, seed: u64) -> Result<FactorDataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let mut samples = DMatrix::zeros(n, gen.d());
    let mut factors = DMatrix::zeros(n, gen.r());
    for i in 0..n {
        let (c, x) = gen.sample(&mut rng);
        factors.set_row(i, &c.transpose());
        samples.set_row(i, &x.transpose());
    }
    FactorDataset::new(samples, factors, vec![0; gen.r()])
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraversalSpec {
    pub base: Vec<f64>,
    pub index: usize,
    pub start: f64,
    pub end: f64,
    pub steps: usize,
}

impl TraversalSpec {
    pub fn new(base: Vec<f64>, index: usize, steps: usize) -> Self {
        Self {
            base,
            index,
            start: -1.0,
            end: 1.0,
            steps,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        let width = (self.end - self.start) / (self.steps - 1) as f64;
        (0..self.steps)
            .map(|s| if s + 1 == self.steps { self.end } else { self.start + width * s as f64 })
            .collect()
    }
}

/// `G(c, 0)` with `c_index` swept over evenly spaced values.
pub fn latent_traversal(gen: &LinearGenerator, spec: &TraversalSpec) -> Result<Vec<DVector<f64>>> {
    if spec.base.len() != gen.r() {
        return Err(Error::Shape(format!("base code has length {}, generator has r = {}", spec.base.len(), gen.r())));
    }
    if spec.index >= gen.r() {
        return Err(Error::IndexOutOfRange {
            index: spec.index,
            len: gen.r(),
        });
    }
    if spec.steps < 2 {
        return Err(Error::InvalidArgument("a traversal needs at least 2 steps".into()));
    }
    let in_box = |v: f64| (-1.0..=1.0).contains(&v);
    if !in_box(spec.start) || !in_box(spec.end) {
        return Err(Error::InvalidArgument("traversal endpoints must lie in [-1, 1]".into()));
    }
    let zero = DVector::zeros(gen.d());
    let mut c = DVector::from_column_slice(&spec.base);
    Ok(spec
        .values()
        .into_iter()
        .map(|t| {
            c[spec.index] = t;
            gen.generate(&c, &zero)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SymMatrix;

    #[test]
    fn integral_disc_has_81_pixels() {
        let img = rasterize_disc(64, 64, (32.0, 32.0), 5.0).unwrap();
        let oracle = (-5i32..=5)
            .flat_map(|x| (-5i32..=5).map(move |y| (x, y)))
            .filter(|(x, y)| x * x + y * y <= 25)
            .count();
        assert_eq!(oracle, 81);
        assert_eq!(img.foreground_count(), oracle);
        assert_eq!(rasterize_disc(64, 64, (10.0, 20.0), 0.0).unwrap().foreground_count(), 1);
        assert!(rasterize_disc(64, 64, (2.0, 30.0), 5.0).is_err());
    }

    #[test]
    fn quarter_turn_symmetry() {
        let a = rasterize_disc(64, 64, (32.0 + 7.0, 32.0 + 3.0), 5.0).unwrap();
        // rotating (dx, dy) to (−dy, dx) about (32, 32)
        let b = rasterize_disc(64, 64, (32.0 - 3.0, 32.0 + 7.0), 5.0).unwrap();
        for y in 1..64 {
            for x in 0..64 {
                assert_eq!(a.get(x, y), b.get(64 - y, x));
            }
        }
    }

    #[test]
    fn grid_order_and_origin() {
        let spec = CircularSpec::default();
        let (images, factors) = gen_circular_dsprites(&spec).unwrap();
        assert_eq!(images.len(), 1080);
        assert_eq!(factors[41], CircularFactors { image_index: 41, radius_index: 1, angle_index: 1 });
        for img in &images[..40] {
            assert_eq!(img, &images[0]);
        }
        assert_eq!(spec.center(3, 10), (32.0, 35.0));
    }

    #[test]
    fn pgm_round_trip() {
        let img = rasterize_disc(16, 12, (8.0, 6.0), 3.0).unwrap();
        let bytes = img.to_pgm();
        assert!(bytes.starts_with(b"P5\n16 12\n255\n"));
        assert_eq!(GrayImage::from_pgm(&bytes).unwrap(), img);
    }

    #[test]
    fn traversal_is_affine() {
        let gen = LinearGenerator::pca_exact(SymMatrix::from_diagonal(&[4.0, 1.0, 0.5]), 2).unwrap();
        let spec = TraversalSpec::new(vec![0.3, -0.2], 1, 5);
        let out = latent_traversal(&gen, &spec).unwrap();
        let step = gen.b().column(1) * 0.5;
        for w in out.windows(2) {
            assert!((&w[1] - &w[0] - &step).amax() < 1e-14);
        }
        let ends = latent_traversal(&gen, &TraversalSpec::new(vec![0.0, 0.0], 0, 2)).unwrap();
        assert_eq!(ends.len(), 2);
        assert_eq!(ends[0], gen.b().column(0) * -1.0);
    }
}
