use crate::error::Result;
use crate::grid::{GridConfig, PhaseGrid};
use crate::physics::MaxwellianTable;

/// A grid together with its Maxwellian tables. Everything a solve needs
/// besides the reflection coefficient and the boundary data.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub grid: PhaseGrid,
    pub table: MaxwellianTable,
}

impl Model {
    pub fn new(grid: PhaseGrid) -> Result<Self> {
        let table = MaxwellianTable::new(&grid)?;
        Ok(Self { grid, table })
    }

    pub fn from_config(config: GridConfig) -> Result<Self> {
        Self::new(PhaseGrid::new(config)?)
    }
}
