use crate::error::{Error, Result};
use crate::quadrature::NodeFamily;

/// Published diagonal coefficients, all for four Radau-Right nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LiteratureTable {
    /// van der Houwen and Sommeijer.
    Vdhs,
    /// Speck.
    Min,
    /// Speck et al.
    Min3,
}

const VDHS: [f64; 4] = [0.32049937, 0.08915379, 0.18173956, 0.2333628];
const MIN: [f64; 4] = [0.17534868, 0.0619158, 0.1381934, 0.19617814];
const MIN3: [f64; 4] = [0.31987868, 0.08887606, 0.18123663, 0.23273925];

pub fn literature_coefficients(table: LiteratureTable, family: NodeFamily, m: usize) -> Result<Vec<f64>> {
    if !super::is_table_node_set(family, m) {
        return Err(Error::Unsupported(format!(
            "{table:?} coefficients exist only for 4 radau-right nodes, not {m} {family} nodes"
        )));
    }
    Ok(match table {
        LiteratureTable::Vdhs => VDHS,
        LiteratureTable::Min => MIN,
        LiteratureTable::Min3 => MIN3,
    }
    .to_vec())
}
