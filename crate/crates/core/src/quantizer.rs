//! Hard scalar quantization of the latent onto a fixed set of centers.

use std::fmt;
use std::str::FromStr;

use autograd::{Tape, Tensor, Var};

use crate::archspec::ShapeTriple;
use crate::error::{Error, Result};
use crate::grid::Grid;

/// Strictly increasing quantization centers. Stored at `f32` precision so
/// the table survives the bitstream header bit-exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct CenterTable {
    centers: Vec<f32>,
}

impl Default for CenterTable {
    fn default() -> Self {
        Self { centers: vec![-2.0, -1.0, 0.0, 1.0, 2.0] }
    }
}

impl CenterTable {
    pub fn new(centers: Vec<f32>) -> Result<Self> {
        if centers.len() < 2 || centers.len() > 255 {
            return Err(Error::Config(format!("need 2..=255 centers, got {}", centers.len())));
        }
        if centers.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config("centers must be finite".into()));
        }
        if centers.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!("centers {centers:?} are not strictly increasing")));
        }
        Ok(Self { centers })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn values(&self) -> &[f32] {
        &self.centers
    }

    pub fn center(&self, index: usize) -> f64 {
        f64::from(self.centers[index])
    }

    pub fn min(&self) -> f64 {
        self.center(0)
    }

    pub fn max(&self) -> f64 {
        self.center(self.len() - 1)
    }

    /// Largest absolute center; the encoder output is squashed to this range.
    pub fn max_abs(&self) -> f64 {
        self.min().abs().max(self.max().abs())
    }

    pub fn max_gap(&self) -> f64 {
        self.centers.windows(2).map(|w| f64::from(w[1]) - f64::from(w[0])).fold(0.0, f64::max)
    }

    /// Index of the nearest center; exact midpoints go to the lower center.
    pub fn nearest(&self, v: f64) -> u8 {
        // First center whose upper midpoint is at or above v.
        let mut idx = 0;
        while idx + 1 < self.centers.len() {
            let mid = (self.center(idx) + self.center(idx + 1)) / 2.0;
            if v <= mid {
                break;
            }
            idx += 1;
        }
        idx as u8
    }

    fn check_finite(v: f64) -> Result<()> {
        if v.is_finite() {
            Ok(())
        } else {
            Err(Error::Numeric(format!("cannot quantize non-finite value {v}")))
        }
    }
}

impl fmt::Display for CenterTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.centers.iter().map(|c| c.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

impl FromStr for CenterTable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let centers = s
            .split(',')
            .map(|p| p.trim().parse::<f32>().map_err(|e| Error::Config(format!("center {p:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(centers)
    }
}

/// Quantized latent: one center index per element.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentCode {
    pub indices: Grid<u8>,
    pub table: CenterTable,
    /// Shape of the image that was encoded.
    pub source_shape: ShapeTriple,
}

impl LatentCode {
    pub fn validate(&self) -> Result<()> {
        let l = self.table.len();
        if let Some(&bad) = self.indices.data().iter().find(|&&i| usize::from(i) >= l) {
            return Err(Error::Corruption(format!("center index {bad} out of range for L = {l}")));
        }
        Ok(())
    }
}

/// Map every element of `z` to its nearest center.
pub fn quantize(z: &Grid<f64>, table: &CenterTable, source_shape: ShapeTriple) -> Result<LatentCode> {
    for &v in z.data() {
        CenterTable::check_finite(v)?;
    }
    Ok(LatentCode { indices: z.map(|v| table.nearest(v)), table: table.clone(), source_shape })
}

/// Element-wise center lookup.
pub fn dequantize(code: &LatentCode) -> Result<Grid<f64>> {
    code.validate()?;
    Ok(code.indices.map(|i| code.table.center(usize::from(i))))
}

/// `dequantize(quantize(t))` on a raw tensor.
pub fn quantize_values(t: &Tensor, table: &CenterTable) -> Result<Tensor> {
    for &v in t.data() {
        CenterTable::check_finite(v)?;
    }
    Ok(t.map(|v| table.center(usize::from(table.nearest(v)))))
}

/// Hard quantization in the forward pass, identity in the backward pass.
pub fn quantize_ste(tape: &mut Tape, z: Var, table: &CenterTable) -> Result<Var> {
    let q = quantize_values(tape.value(z), table)?;
    Ok(tape.straight_through(z, q))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape() -> ShapeTriple {
        ShapeTriple::new(16, 16, 3)
    }

    fn q1(v: f64) -> u8 {
        CenterTable::default().nearest(v)
    }

    #[test]
    fn nearest_center_examples() {
        assert_eq!(q1(0.4), 2);
        assert_eq!(q1(-3.7), 0);
        assert_eq!(q1(0.5), 2);
        assert_eq!(q1(-0.5), 1);
        assert_eq!(q1(1.6), 4);
    }

    #[test]
    fn dequantize_zero_indices_gives_first_center() {
        let code =
            LatentCode { indices: Grid::filled(2, 2, 3, 0), table: CenterTable::default(), source_shape: shape() };
        assert!(dequantize(&code).unwrap().data().iter().all(|&v| v == -2.0));
    }

    #[test]
    fn corrupted_index_is_an_error() {
        let mut indices = Grid::filled(1, 1, 2, 0);
        indices.set(0, 0, 1, 7);
        let code = LatentCode { indices, table: CenterTable::default(), source_shape: shape() };
        assert!(matches!(dequantize(&code), Err(Error::Corruption(_))));
    }

    #[test]
    fn non_finite_input_rejected() {
        let z = Grid::new(1, 1, 2, vec![0.0, f64::NAN]).unwrap();
        assert!(matches!(quantize(&z, &CenterTable::default(), shape()), Err(Error::Numeric(_))));
        let z = Grid::new(1, 1, 1, vec![f64::INFINITY]).unwrap();
        assert!(quantize(&z, &CenterTable::default(), shape()).is_err());
    }

    #[test]
    fn ste_forward_and_gradient() {
        let mut tape = Tape::new();
        let z = tape.leaf(Tensor::from_vec(&[1, 1, 2, 2], vec![0.4, -3.7, 0.5, 1.6]));
        let q = quantize_ste(&mut tape, z, &CenterTable::default()).unwrap();
        assert_eq!(tape.value(q).data(), &[0.0, -2.0, 0.0, 2.0]);
        let s = tape.sum(q);
        let g = tape.backward(s);
        assert_eq!(g.get(z).unwrap().data(), &[1.0; 4]);
    }

    #[test]
    fn table_validation() {
        assert!(CenterTable::new(vec![0.0]).is_err());
        assert!(CenterTable::new(vec![0.0, 0.0]).is_err());
        assert!(CenterTable::new(vec![1.0, 0.0]).is_err());
        assert_eq!("-2, -1,0,1,2".parse::<CenterTable>().unwrap(), CenterTable::default());
    }
}
