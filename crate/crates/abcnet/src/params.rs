//! Parameter layouts: ordered blocks of scalar and simplex-valued parameters
//! with a flat `Vec<f64>` storage convention shared by engines, kernels, and
//! persistence.

use crate::distributions::Value;
use crate::error::{AbcError, Result};

/// One named parameter block.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamBlock {
    Scalar {
        name: String,
    },
    /// A probability simplex of dimension `components.len()` (>= 2). Component
    /// names appear verbatim as artifact column headers.
    Simplex {
        name: String,
        components: Vec<String>,
    },
}

impl ParamBlock {
    pub fn name(&self) -> &str {
        match self {
            ParamBlock::Scalar { name } | ParamBlock::Simplex { name, .. } => name,
        }
    }

    /// Number of stored coordinates.
    pub fn len(&self) -> usize {
        match self {
            ParamBlock::Scalar { .. } => 1,
            ParamBlock::Simplex { components, .. } => components.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of free coordinates: scalars contribute one, a K-simplex K - 1.
    pub fn free_len(&self) -> usize {
        match self {
            ParamBlock::Scalar { .. } => 1,
            ParamBlock::Simplex { components, .. } => components.len() - 1,
        }
    }
}

/// Ordered collection of parameter blocks defining the flat storage order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    blocks: Vec<ParamBlock>,
}

impl ParamLayout {
    pub fn new(blocks: Vec<ParamBlock>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(AbcError::Shape("parameter layout needs at least one block".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for b in &blocks {
            if !seen.insert(b.name().to_string()) {
                return Err(AbcError::Shape(format!(
                    "duplicate parameter name `{}`",
                    b.name()
                )));
            }
            if let ParamBlock::Simplex { name, components } = b {
                if components.len() < 2 {
                    return Err(AbcError::Shape(format!(
                        "simplex `{name}` needs at least 2 components"
                    )));
                }
                for c in components {
                    if !seen.insert(c.clone()) {
                        return Err(AbcError::Shape(format!(
                            "duplicate parameter column `{c}`"
                        )));
                    }
                }
            }
        }
        Ok(ParamLayout { blocks })
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    /// Total flat coordinate count.
    pub fn flat_len(&self) -> usize {
        self.blocks.iter().map(|b| b.len()).sum()
    }

    /// Total free coordinate count (simplexes lose one per block).
    pub fn free_len(&self) -> usize {
        self.blocks.iter().map(|b| b.free_len()).sum()
    }

    /// Flat storage offset of block `idx`.
    pub fn block_offset(&self, idx: usize) -> usize {
        self.blocks[..idx].iter().map(|b| b.len()).sum()
    }

    /// Column headers in flat storage order, one per coordinate.
    pub fn column_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.flat_len());
        for b in &self.blocks {
            match b {
                ParamBlock::Scalar { name } => names.push(name.clone()),
                ParamBlock::Simplex { components, .. } => {
                    names.extend(components.iter().cloned())
                }
            }
        }
        names
    }

    pub fn block_by_name(&self, name: &str) -> Option<(usize, &ParamBlock)> {
        self.blocks
            .iter()
            .enumerate()
            .find(|(_, b)| b.name() == name)
    }

    /// Split a flat vector into per-block values, checking length and simplex
    /// normalization (sum within 1e-9 of one).
    pub fn split(&self, flat: &[f64]) -> Result<Vec<Value>> {
        if flat.len() != self.flat_len() {
            return Err(AbcError::Shape(format!(
                "parameter vector length {} but layout expects {}",
                flat.len(),
                self.flat_len()
            )));
        }
        let mut out = Vec::with_capacity(self.blocks.len());
        let mut off = 0;
        for b in &self.blocks {
            match b {
                ParamBlock::Scalar { .. } => {
                    out.push(Value::Scalar(flat[off]));
                    off += 1;
                }
                ParamBlock::Simplex { name, components } => {
                    let k = components.len();
                    let xs = flat[off..off + k].to_vec();
                    let sum: f64 = xs.iter().sum();
                    if (sum - 1.0).abs() > 1e-9 {
                        return Err(AbcError::Shape(format!(
                            "simplex `{name}` sums to {sum}, expected 1"
                        )));
                    }
                    out.push(Value::Simplex(xs));
                    off += k;
                }
            }
        }
        Ok(out)
    }

    /// Concatenate per-block values back into flat storage order.
    pub fn join(&self, values: &[Value]) -> Result<Vec<f64>> {
        if values.len() != self.blocks.len() {
            return Err(AbcError::Shape(format!(
                "{} values for {} blocks",
                values.len(),
                self.blocks.len()
            )));
        }
        let mut flat = Vec::with_capacity(self.flat_len());
        for (b, v) in self.blocks.iter().zip(values) {
            match (b, v) {
                (ParamBlock::Scalar { .. }, Value::Scalar(x)) => flat.push(*x),
                (ParamBlock::Simplex { name, components }, Value::Simplex(xs)) => {
                    if xs.len() != components.len() {
                        return Err(AbcError::Shape(format!(
                            "simplex `{name}` expects {} components, got {}",
                            components.len(),
                            xs.len()
                        )));
                    }
                    flat.extend_from_slice(xs);
                }
                (b, _) => {
                    return Err(AbcError::Shape(format!(
                        "value kind mismatch for block `{}`",
                        b.name()
                    )))
                }
            }
        }
        Ok(flat)
    }

    /// Free coordinates: every scalar plus the first K - 1 components of each
    /// simplex, in block order. This is the space multivariate kernels act on.
    pub fn free_coordinates(&self, flat: &[f64]) -> Vec<f64> {
        let mut free = Vec::with_capacity(self.free_len());
        let mut off = 0;
        for b in &self.blocks {
            match b {
                ParamBlock::Scalar { .. } => {
                    free.push(flat[off]);
                    off += 1;
                }
                ParamBlock::Simplex { components, .. } => {
                    let k = components.len();
                    free.extend_from_slice(&flat[off..off + k - 1]);
                    off += k;
                }
            }
        }
        free
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cbd_like_layout() -> ParamLayout {
        ParamLayout::new(vec![
            ParamBlock::Simplex {
                name: "theta1".into(),
                components: vec!["theta1_1".into(), "theta1_3".into(), "theta1_5".into()],
            },
            ParamBlock::Simplex {
                name: "theta2".into(),
                components: vec!["theta2_0".into(), "theta2_2".into(), "theta2_4".into()],
            },
            ParamBlock::Scalar { name: "n_peds".into() },
        ])
        .unwrap()
    }

    #[test]
    fn lengths_and_columns() {
        let l = cbd_like_layout();
        assert_eq!(l.flat_len(), 7);
        assert_eq!(l.free_len(), 5);
        assert_eq!(
            l.column_names(),
            vec!["theta1_1", "theta1_3", "theta1_5", "theta2_0", "theta2_2", "theta2_4", "n_peds"]
        );
        assert_eq!(l.block_offset(0), 0);
        assert_eq!(l.block_offset(1), 3);
        assert_eq!(l.block_offset(2), 6);
    }

    #[test]
    fn split_join_round_trip() {
        let l = cbd_like_layout();
        let flat = vec![0.5, 0.2, 0.3, 0.1, 0.4, 0.5, 27.4];
        let values = l.split(&flat).unwrap();
        assert_eq!(values[0], Value::Simplex(vec![0.5, 0.2, 0.3]));
        assert_eq!(values[2], Value::Scalar(27.4));
        assert_eq!(l.join(&values).unwrap(), flat);
    }

    #[test]
    fn split_rejects_bad_shapes() {
        let l = cbd_like_layout();
        assert!(l.split(&[0.5, 0.5]).is_err());
        // Simplex not normalized.
        let bad = vec![0.5, 0.2, 0.2, 0.1, 0.4, 0.5, 27.4];
        assert!(l.split(&bad).is_err());
    }

    #[test]
    fn free_coordinates_drop_last_simplex_component() {
        let l = cbd_like_layout();
        let flat = vec![0.5, 0.2, 0.3, 0.1, 0.4, 0.5, 27.4];
        assert_eq!(l.free_coordinates(&flat), vec![0.5, 0.2, 0.1, 0.4, 27.4]);
    }

    #[test]
    fn duplicate_names_rejected() {
        assert!(ParamLayout::new(vec![
            ParamBlock::Scalar { name: "p".into() },
            ParamBlock::Scalar { name: "p".into() },
        ])
        .is_err());
        assert!(ParamLayout::new(vec![ParamBlock::Simplex {
            name: "t".into(),
            components: vec!["a".into()],
        }])
        .is_err());
    }
}
