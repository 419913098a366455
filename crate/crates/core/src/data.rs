//! Datasets and their generators: block-model graphs, digit images (IDX
//! parsing plus an offline stand-in) and polygon segmentation scenes.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::group::{seeded_rng, GroupElement, Representation};
use crate::linalg::Matrix;
use crate::math;
use crate::mlp::transform_rows;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Provenance of a dataset.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DatasetMeta {
    pub name: String,
    pub seed: Option<u64>,
    pub params: Vec<(String, String)>,
}

impl DatasetMeta {
    pub fn new(name: &str, seed: Option<u64>) -> Self {
        Self {
            name: name.to_string(),
            seed,
            params: Vec::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.params.push((key.to_string(), value.to_string()));
        self
    }

    pub fn param(&self, key: &str) -> Option<&str> {
        self.params
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

/// A finite sample: one input and one target per row.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Dataset {
    inputs: Matrix,
    targets: Matrix,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn new(inputs: Matrix, targets: Matrix, meta: DatasetMeta) -> Result<Self> {
        if inputs.rows() != targets.rows() {
            return Err(Error::CountMismatch {
                context: "inputs vs targets",
                expected: inputs.rows(),
                found: targets.rows(),
            });
        }
        Ok(Self {
            inputs,
            targets,
            meta,
        })
    }

    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }

    pub fn targets(&self) -> &Matrix {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The first `n` samples.
    pub fn take(&self, n: usize) -> Self {
        let n = n.min(self.len());
        let mut out = self.slice(0..n);
        out.meta = out.meta.with("take", n);
        out
    }

    /// Samples `range.start .. range.end`, clipped to the dataset.
    pub fn slice(&self, range: core::ops::Range<usize>) -> Self {
        let end = range.end.min(self.len());
        let start = range.start.min(end);
        let (di, dt) = (self.inputs.cols(), self.targets.cols());
        Self {
            inputs: Matrix::from_vec(
                end - start,
                di,
                self.inputs.as_slice()[start * di..end * di].to_vec(),
            ),
            targets: Matrix::from_vec(
                end - start,
                dt,
                self.targets.as_slice()[start * dt..end * dt].to_vec(),
            ),
            meta: self.meta.clone(),
        }
    }

    /// The dataset concatenated with itself.
    pub fn duplicated(&self) -> Self {
        let mut inputs = self.inputs.as_slice().to_vec();
        inputs.extend_from_slice(self.inputs.as_slice());
        let mut targets = self.targets.as_slice().to_vec();
        targets.extend_from_slice(self.targets.as_slice());
        Self {
            inputs: Matrix::from_vec(2 * self.len(), self.inputs.cols(), inputs),
            targets: Matrix::from_vec(2 * self.len(), self.targets.cols(), targets),
            meta: self.meta.clone(),
        }
    }

    /// `(ρ_X(g)x, ρ_Y(g)y)` for every sample.
    pub fn transformed(
        &self,
        rx: &Representation,
        ry: &Representation,
        g: &GroupElement,
    ) -> Result<Self> {
        Ok(Self {
            inputs: transform_rows(rx, g, &self.inputs)?,
            targets: transform_rows(ry, g, &self.targets)?,
            meta: self.meta.clone(),
        })
    }
}

/// Whether every entry of `Σ_{i=0}^{N} adjⁱ` is positive, for an `N × N`
/// nonnegative adjacency matrix stored row-major. Products are saturated to
/// booleans, which preserves positivity.
pub fn is_connected(adj: &[f64], n: usize) -> Result<bool> {
    if adj.len() != n * n {
        return Err(Error::ShapeMismatch {
            context: "adjacency matrix",
            expected: n * n,
            got: adj.len(),
        });
    }
    let edge: Vec<bool> = adj.iter().map(|&v| v > 0.0).collect();
    let mut power: Vec<bool> = (0..n * n).map(|p| p / n == p % n).collect();
    let mut reach = power.clone();
    for _ in 0..n {
        let mut next = vec![false; n * n];
        for i in 0..n {
            for k in 0..n {
                if power[i * n + k] {
                    for j in 0..n {
                        next[i * n + j] |= edge[k * n + j];
                    }
                }
            }
        }
        power = next;
        for (r, &p) in reach.iter_mut().zip(&power) {
            *r |= p;
        }
    }
    Ok(reach.iter().all(|&r| r))
}

/// Block Erdős–Rényi graphs: each node joins cluster I with probability 1/2,
/// edges appear with probability `p_in` inside a cluster and `p_out` across.
/// Inputs are flattened adjacency matrices, targets the connectivity label.
pub fn gen_graphs(count: usize, nodes: usize, p_in: f64, p_out: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&p_out) || !(0.0..=1.0).contains(&p_in) || p_out > p_in {
        return Err(Error::InvalidArgument(format!(
            "edge probabilities must satisfy 0 <= p_out <= p_in <= 1, got p_in={p_in}, p_out={p_out}"
        )));
    }
    let mut rng = seeded_rng(seed);
    let d = nodes * nodes;
    let mut inputs = Matrix::zeros(count, d);
    let mut targets = Matrix::zeros(count, 1);
    for s in 0..count {
        let cluster: Vec<bool> = (0..nodes).map(|_| rng.random_bool(0.5)).collect();
        let row = inputs.row_mut(s);
        for i in 0..nodes {
            for j in i + 1..nodes {
                let p = if cluster[i] == cluster[j] {
                    p_in
                } else {
                    p_out
                };
                if rng.random::<f64>() < p {
                    row[i * nodes + j] = 1.0;
                    row[j * nodes + i] = 1.0;
                }
            }
        }
        let label = is_connected(inputs.row(s), nodes)?;
        targets[(s, 0)] = if label { 1.0 } else { 0.0 };
    }
    let meta = DatasetMeta::new("block-erdos-renyi", Some(seed))
        .with("nodes", nodes)
        .with("p_in", p_in)
        .with("p_out", p_out)
        .with("cluster_assignment", "independent, probability 0.5");
    Dataset::new(inputs, targets, meta)
}

/// Halves the side of a square image by averaging disjoint 2×2 blocks.
pub fn resize_half(image: &[f64], side: usize) -> Result<Vec<f64>> {
    if image.len() != side * side || side % 2 != 0 {
        return Err(Error::ShapeMismatch {
            context: "square image with even side",
            expected: side * side,
            got: image.len(),
        });
    }
    let half = side / 2;
    let mut out = vec![0.0; half * half];
    for i in 0..half {
        for j in 0..half {
            let (r, c) = (2 * i, 2 * j);
            out[i * half + j] = 0.25
                * (image[r * side + c]
                    + image[r * side + c + 1]
                    + image[(r + 1) * side + c]
                    + image[(r + 1) * side + c + 1]);
        }
    }
    Ok(out)
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(Error::CountMismatch {
            context: "IDX header",
            expected: at + 4,
            found: bytes.len(),
        })
}

/// Images of an IDX file as `(count, rows, cols, pixels / 255)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<f64>)> {
    let magic = read_u32(bytes, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::BadMagic {
            expected: IDX_IMAGES_MAGIC,
            found: magic,
        });
    }
    let count = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let needed = count * rows * cols;
    let body = &bytes[16..];
    if body.len() != needed {
        return Err(Error::CountMismatch {
            context: "IDX image payload",
            expected: needed,
            found: body.len(),
        });
    }
    Ok((
        count,
        rows,
        cols,
        body.iter().map(|&b| b as f64 / 255.0).collect(),
    ))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = read_u32(bytes, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::BadMagic {
            expected: IDX_LABELS_MAGIC,
            found: magic,
        });
    }
    let count = read_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() != count {
        return Err(Error::CountMismatch {
            context: "IDX label payload",
            expected: count,
            found: body.len(),
        });
    }
    Ok(body.to_vec())
}

/// Digit images and labels from IDX bytes; inputs keep the stored size.
pub fn mnist_from_idx(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let (count, rows, cols, pixels) = parse_idx_images(images)?;
    let labels = parse_idx_labels(labels)?;
    if labels.len() != count {
        return Err(Error::CountMismatch {
            context: "IDX images vs labels",
            expected: count,
            found: labels.len(),
        });
    }
    let inputs = Matrix::from_vec(count, rows * cols, pixels);
    let targets = one_hot(&labels, 10)?;
    Dataset::new(
        inputs,
        targets,
        DatasetMeta::new("mnist", None).with("side", rows),
    )
}

fn one_hot(labels: &[u8], classes: usize) -> Result<Matrix> {
    let mut t = Matrix::zeros(labels.len(), classes);
    for (r, &l) in labels.iter().enumerate() {
        if l as usize >= classes {
            return Err(Error::InvalidArgument(format!(
                "label {l} outside 0..{classes}"
            )));
        }
        t[(r, l as usize)] = 1.0;
    }
    Ok(t)
}

/// Label of a one-hot target row.
pub fn class_of(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        })
        .0
}

/// Halves the resolution of every image in the dataset, keeping the first
/// `count` samples.
pub fn downsample_images(ds: &Dataset, side: usize, count: usize) -> Result<Dataset> {
    let n = count.min(ds.len());
    let half = side / 2;
    let mut inputs = Matrix::zeros(n, half * half);
    for r in 0..n {
        inputs
            .row_mut(r)
            .copy_from_slice(&resize_half(ds.inputs().row(r), side)?);
    }
    let targets = Matrix::from_vec(
        n,
        ds.targets().cols(),
        ds.targets().as_slice()[..n * ds.targets().cols()].to_vec(),
    );
    Dataset::new(
        inputs,
        targets,
        ds.meta
            .clone()
            .with("resize", "2x2 area average")
            .with("take", n),
    )
}

/// Offline stand-in for the digit images: each class is a fixed arrangement of
/// Gaussian strokes, jittered and noised per sample. Not MNIST.
pub fn synthetic_digits(count: usize, side: usize, seed: u64) -> Result<Dataset> {
    let mut template_rng = seeded_rng(0x5eed_d191);
    let templates: Vec<Vec<(f64, f64)>> = (0..10)
        .map(|_| {
            (0..4)
                .map(|_| {
                    (
                        template_rng.random_range(0.3..0.7) * side as f64,
                        template_rng.random_range(0.3..0.7) * side as f64,
                    )
                })
                .collect()
        })
        .collect();
    let mut rng = seeded_rng(seed);
    let mut inputs = Matrix::zeros(count, side * side);
    let mut labels = Vec::with_capacity(count);
    let width = side as f64 / 10.0;
    for s in 0..count {
        let label = rng.random_range(0..10u8);
        labels.push(label);
        let (dx, dy) = (rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
        let row = inputs.row_mut(s);
        for &(cy, cx) in &templates[label as usize] {
            let (cy, cx) = (cy + dy, cx + dx);
            for i in 0..side {
                for j in 0..side {
                    let (di, dj) = (i as f64 - cy, j as f64 - cx);
                    let d2 = di * di + dj * dj;
                    row[i * side + j] += math::exp(-d2 / (2.0 * width * width));
                }
            }
        }
        for v in row.iter_mut() {
            let noise: f64 = rng.sample(StandardNormal);
            *v = (*v + 0.05 * noise).clamp(0.0, 1.0);
        }
    }
    let meta = DatasetMeta::new("synthetic-digits (not MNIST)", Some(seed)).with("side", side);
    Dataset::new(inputs, one_hot(&labels, 10)?, meta)
}

/// Side length of the shape canvas in the units of the polygon radius.
pub const SHAPE_CANVAS: f64 = 4.0;
const SUPERSAMPLE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeClass {
    Pentagon,
    Triangle,
}

impl ShapeClass {
    fn vertices(self) -> usize {
        match self {
            ShapeClass::Pentagon => 5,
            ShapeClass::Triangle => 3,
        }
    }
}

fn polygon(class: ShapeClass, scale: f64, center: (f64, f64)) -> Vec<(f64, f64)> {
    let k = class.vertices();
    (0..k)
        .map(|v| {
            let angle =
                core::f64::consts::FRAC_PI_2 + 2.0 * core::f64::consts::PI * v as f64 / k as f64;
            (
                center.0 + scale * math::cos(angle),
                center.1 + scale * math::sin(angle),
            )
        })
        .collect()
}

fn inside_convex(poly: &[(f64, f64)], p: (f64, f64)) -> bool {
    let n = poly.len();
    (0..n).all(|i| {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0) >= 0.0
    })
}

/// Covered fraction of each pixel, estimated on a 4×4 sub-grid. Point
/// `(x, y)` lies in column `x` and row `y` of the canvas.
fn rasterize(poly: &[(f64, f64)], side: usize) -> Vec<f64> {
    let pixel = SHAPE_CANVAS / side as f64;
    let mut out = vec![0.0; side * side];
    for i in 0..side {
        for j in 0..side {
            let mut hits = 0;
            for a in 0..SUPERSAMPLE {
                for b in 0..SUPERSAMPLE {
                    let y = (i as f64 + (a as f64 + 0.5) / SUPERSAMPLE as f64) * pixel;
                    let x = (j as f64 + (b as f64 + 0.5) / SUPERSAMPLE as f64) * pixel;
                    if inside_convex(poly, (x, y)) {
                        hits += 1;
                    }
                }
            }
            out[i * side + j] = hits as f64 / (SUPERSAMPLE * SUPERSAMPLE) as f64;
        }
    }
    out
}

/// Scenes with one regular pentagon or equilateral triangle each. Targets are
/// two masks, pentagon first, channel-major; the absent class's mask is zero.
pub fn gen_shapes(count: usize, side: usize, seed: u64) -> Result<Dataset> {
    if side < 8 {
        return Err(Error::InvalidArgument(format!(
            "shape canvas needs at least 8 pixels per side, got {side}"
        )));
    }
    let mut rng = seeded_rng(seed);
    let d = side * side;
    let mut inputs = Matrix::zeros(count, d);
    let mut targets = Matrix::zeros(count, 2 * d);
    for s in 0..count {
        let class = if rng.random_bool(0.5) {
            ShapeClass::Pentagon
        } else {
            ShapeClass::Triangle
        };
        let scale = rng.random_range(0.7..=0.8);
        let (image, mask) = loop {
            let template = polygon(class, scale, (0.0, 0.0));
            let (min_x, max_x) = template.iter().fold((f64::MAX, f64::MIN), |(lo, hi), p| {
                (lo.min(p.0), hi.max(p.0))
            });
            let (min_y, max_y) = template.iter().fold((f64::MAX, f64::MIN), |(lo, hi), p| {
                (lo.min(p.1), hi.max(p.1))
            });
            let cx = rng.random_range(-min_x..=SHAPE_CANVAS - max_x);
            let cy = rng.random_range(-min_y..=SHAPE_CANVAS - max_y);
            let image = rasterize(&polygon(class, scale, (cx, cy)), side);
            let mask: Vec<f64> = image
                .iter()
                .map(|&v| if v >= 0.5 { 1.0 } else { 0.0 })
                .collect();
            if mask.iter().any(|&m| m > 0.0) {
                break (image, mask);
            }
        };
        inputs.row_mut(s).copy_from_slice(&image);
        let offset = match class {
            ShapeClass::Pentagon => 0,
            ShapeClass::Triangle => d,
        };
        targets.row_mut(s)[offset..offset + d].copy_from_slice(&mask);
    }
    let meta = DatasetMeta::new("polygon-segmentation", Some(seed))
        .with("side", side)
        .with("canvas", SHAPE_CANVAS)
        .with("supersampling", SUPERSAMPLE)
        .with("mask_threshold", 0.5);
    Dataset::new(inputs, targets, meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_and_dyads() {
        let n = 4;
        let mut path = vec![0.0; 16];
        for i in 0..3 {
            path[i * n + i + 1] = 1.0;
            path[(i + 1) * n + i] = 1.0;
        }
        assert!(is_connected(&path, n).unwrap());
        let mut dyads = vec![0.0; 16];
        for (a, b) in [(0, 1), (2, 3)] {
            dyads[a * n + b] = 1.0;
            dyads[b * n + a] = 1.0;
        }
        assert!(!is_connected(&dyads, n).unwrap());
    }

    #[test]
    fn extreme_edge_probabilities() {
        let full = gen_graphs(3, 5, 1.0, 1.0, 1).unwrap();
        assert!(full.targets().as_slice().iter().all(|&t| t == 1.0));
        let empty = gen_graphs(3, 5, 0.0, 0.0, 1).unwrap();
        assert!(empty.targets().as_slice().iter().all(|&t| t == 0.0));
        assert!(gen_graphs(1, 3, 0.1, 0.5, 1).is_err());
    }

    #[test]
    fn resize_of_constant_and_checkerboard() {
        let c = vec![0.3; 28 * 28];
        assert!(resize_half(&c, 28)
            .unwrap()
            .iter()
            .all(|&v| (v - 0.3).abs() < 1e-15));
        let board: Vec<f64> = (0..28 * 28)
            .map(|p| ((p / 28 + p % 28) % 2) as f64)
            .collect();
        assert!(resize_half(&board, 28).unwrap().iter().all(|&v| v == 0.5));
        assert!(resize_half(&c, 27).is_err());
    }

    #[test]
    fn idx_round_trip_and_faults() {
        let mut images = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2];
        images.extend_from_slice(&[0, 255, 51, 102, 0, 0, 0, 0]);
        let labels = vec![0, 0, 8, 1, 0, 0, 0, 2, 7, 3];
        let ds = mnist_from_idx(&images, &labels).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.inputs().row(0), &[0.0, 1.0, 0.2, 0.4]);
        assert_eq!(class_of(ds.targets().row(0)), 7);

        let mut swapped = images.clone();
        swapped[..4].copy_from_slice(&[3, 8, 0, 0]);
        assert!(matches!(
            parse_idx_images(&swapped),
            Err(Error::BadMagic { .. })
        ));
        assert!(matches!(
            parse_idx_images(&images[..images.len() - 1]),
            Err(Error::CountMismatch { .. })
        ));
    }

    #[test]
    fn shapes_have_one_mask_inside_the_image() {
        let ds = gen_shapes(40, 14, 3).unwrap();
        let d = 196;
        for r in 0..ds.len() {
            let t = ds.targets().row(r);
            let nonzero = [&t[..d], &t[d..]]
                .iter()
                .filter(|m| m.iter().any(|&v| v > 0.0))
                .count();
            assert_eq!(nonzero, 1);
            let x = ds.inputs().row(r);
            for p in 0..d {
                if t[p] > 0.0 || t[d + p] > 0.0 {
                    assert!(x[p] > 0.0);
                }
            }
        }
        assert_eq!(gen_shapes(5, 14, 3).unwrap(), gen_shapes(5, 14, 3).unwrap());
    }

    #[test]
    fn synthetic_digits_are_labeled_as_such() {
        let ds = synthetic_digits(5, 28, 1).unwrap();
        assert!(ds.meta.name.contains("not MNIST"));
        assert_eq!(ds.inputs().cols(), 784);
        assert!(ds
            .inputs()
            .as_slice()
            .iter()
            .all(|v| (0.0..=1.0).contains(v)));
    }
}
