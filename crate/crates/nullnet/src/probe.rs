//! Grid probing of the toy input cube and decision-space metrics.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::data::{ToyClass, TOY_NULL_LABEL};
use crate::error::{Error, Result};
use crate::network::Network;
use crate::tensor::Tensor;
use crate::toyworld::{box_volume_fraction, ground_truth_region};

/// Model decisions at every lattice point of [0,1]^3. Points are stored in
/// lexicographic (x, y, z) order with spacing 1/(R-1).
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionGrid {
    pub resolution: usize,
    /// Predicted label per point: 0 = down, 1 = up, 2 = null.
    pub labels: Vec<usize>,
    /// (p_down, p_up, p_null) per point, single precision.
    pub probs: Vec<[f32; 3]>,
}

impl DecisionGrid {
    pub fn coordinate(&self, step_index: usize) -> f64 {
        step_index as f64 / (self.resolution - 1) as f64
    }

    pub fn point(&self, flat: usize) -> [f64; 3] {
        let r = self.resolution;
        [flat / (r * r), (flat / r) % r, flat % r].map(|i| self.coordinate(i))
    }
}

/// Evaluates the model at all R^3 lattice points (inference mode).
pub fn grid_probe(model: &Network<f32>, resolution: usize) -> Result<DecisionGrid> {
    if resolution < 2 {
        return Err(Error::InvalidArgument(format!(
            "grid resolution must be >= 2, got {resolution}"
        )));
    }
    let r = resolution;
    let mut labels = Vec::with_capacity(r * r * r);
    let mut probs = Vec::with_capacity(r * r * r);
    let coord = |i: usize| i as f32 / (r - 1) as f32;
    for ix in 0..r {
        for iy in 0..r {
            for iz in 0..r {
                let input =
                    Tensor::new(vec![1, 3, 1], vec![coord(ix), coord(iy), coord(iz)])?;
                let (label, p) = model.predict(&input)?;
                labels.push(label);
                probs.push([p[0], p[1], p[2]]);
            }
        }
    }
    Ok(DecisionGrid {
        resolution,
        labels,
        probs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionMetrics {
    /// Fraction of lattice points labeled null.
    pub null_fraction: f64,
    /// Fraction of in-box points labeled with their true ramp class.
    pub recall: f64,
    /// Fraction of out-of-box points labeled as a ramp class.
    pub leakage: f64,
    /// Analytic volume fraction of the ground-truth boxes, for reference.
    pub box_volume_fraction: f64,
}

/// Compares a probed grid against the ground-truth ramp boxes.
pub fn region_metrics(grid: &DecisionGrid) -> RegionMetrics {
    let mut null_count = 0usize;
    let mut in_box = 0usize;
    let mut in_box_correct = 0usize;
    let mut out_box = 0usize;
    let mut out_box_ramp = 0usize;
    for (flat, &label) in grid.labels.iter().enumerate() {
        if label == TOY_NULL_LABEL {
            null_count += 1;
        }
        let point = grid.point(flat);
        match ground_truth_region(&point) {
            Some(class) => {
                in_box += 1;
                let truth = match class {
                    ToyClass::Down => 0,
                    ToyClass::Up => 1,
                };
                if label == truth {
                    in_box_correct += 1;
                }
            }
            None => {
                out_box += 1;
                if label != TOY_NULL_LABEL {
                    out_box_ramp += 1;
                }
            }
        }
    }
    let n = grid.labels.len() as f64;
    RegionMetrics {
        null_fraction: null_count as f64 / n,
        recall: in_box_correct as f64 / in_box.max(1) as f64,
        leakage: out_box_ramp as f64 / out_box.max(1) as f64,
        box_volume_fraction: box_volume_fraction(),
    }
}

fn label_name(label: usize) -> &'static str {
    match label {
        0 => "down",
        1 => "up",
        _ => "null",
    }
}

/// CSV export (x, y, z, label, p_down, p_up, p_null), one row per lattice
/// point in lexicographic (x, y, z) order. Floats use Rust's shortest
/// round-trip formatting so a parse reproduces the grid exactly.
pub fn export_grid(grid: &DecisionGrid, path: &Path) -> Result<()> {
    let mut out = String::from("x,y,z,label,p_down,p_up,p_null\n");
    for (flat, &label) in grid.labels.iter().enumerate() {
        let p = grid.point(flat);
        let probs = grid.probs[flat];
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            p[0],
            p[1],
            p[2],
            label_name(label),
            probs[0],
            probs[1],
            probs[2]
        )
        .expect("string write");
    }
    fs::write(path, out)?;
    Ok(())
}

/// Inverse of `export_grid`, used to verify the round-trip contract.
pub fn parse_grid(path: &Path) -> Result<DecisionGrid> {
    let text = fs::read_to_string(path)?;
    let mut labels = Vec::new();
    let mut probs = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::InvalidArgument(format!(
                "grid CSV line {i}: expected 7 fields, got {}",
                fields.len()
            )));
        }
        labels.push(match fields[3] {
            "down" => 0,
            "up" => 1,
            "null" => TOY_NULL_LABEL,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "grid CSV line {i}: unknown label {other:?}"
                )))
            }
        });
        let parse = |s: &str| {
            s.parse::<f32>()
                .map_err(|e| Error::InvalidArgument(format!("grid CSV line {i}: {e}")))
        };
        probs.push([parse(fields[4])?, parse(fields[5])?, parse(fields[6])?]);
    }
    let resolution = (labels.len() as f64).cbrt().round() as usize;
    Ok(DecisionGrid {
        resolution,
        labels,
        probs,
    })
}
