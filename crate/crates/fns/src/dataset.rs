//! Training-set persistence: one record per item holding the operator
//! parameters and the seed of its right-hand side. Fields are regenerated on
//! load; `materialize` dumps them for inspection.

use std::path::Path;

use fns_core::pde::{Coefficient, ProblemParams};
use fns_core::rng::normal_field;
use fns_core::Field;

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::report::{num, read_table, Table};

pub const COLUMNS: [&str; 11] = [
    "index", "pde", "seed", "xi", "theta", "eps", "wx", "wy", "blocks", "m", "rhs_seed",
];

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetRecord {
    pub index: u64,
    pub params: ProblemParams,
    pub rhs_seed: u64,
}

impl DatasetRecord {
    pub fn rhs(&self, n: usize) -> Result<Field<f64>> {
        let grid = self.params.kind().grid(n)?;
        Ok(normal_field(grid, self.rhs_seed, 0))
    }

    fn row(&self) -> Vec<String> {
        let mut row = vec![String::new(); COLUMNS.len()];
        row[0] = self.index.to_string();
        row[1] = self.params.kind().name().into();
        row[10] = self.rhs_seed.to_string();
        match self.params {
            ProblemParams::Poisson1d => {}
            ProblemParams::RandomDiffusion { seed } => row[2] = seed.to_string(),
            ProblemParams::Anisotropic { xi, theta } => {
                row[3] = num(xi);
                row[4] = num(theta);
            }
            ProblemParams::ConvectionDiffusion { eps, wx, wy } => {
                row[5] = num(eps);
                row[6] = num(wx);
                row[7] = num(wy);
            }
            ProblemParams::Jumping { seed, blocks, m } => {
                row[2] = seed.to_string();
                row[8] = blocks.to_string();
                row[9] = num(m);
            }
        }
        row
    }

    fn parse(row: &[String]) -> Result<Self> {
        if row.len() != COLUMNS.len() {
            return Err(CliError::Validation(format!(
                "dataset row has {} fields, expected {}",
                row.len(),
                COLUMNS.len()
            )));
        }
        fn field<T: std::str::FromStr>(row: &[String], i: usize) -> Result<T> {
            row[i]
                .parse()
                .map_err(|_| CliError::Validation(format!("dataset column '{}': bad value '{}'", COLUMNS[i], row[i])))
        }
        use fns_core::pde::PdeKind as K;
        let params = match row[1].parse::<K>()? {
            K::Poisson1d => ProblemParams::Poisson1d,
            K::RandomDiffusion => ProblemParams::RandomDiffusion { seed: field(row, 2)? },
            K::Anisotropic => ProblemParams::Anisotropic {
                xi: field(row, 3)?,
                theta: field(row, 4)?,
            },
            K::ConvectionDiffusion => ProblemParams::ConvectionDiffusion {
                eps: field(row, 5)?,
                wx: field(row, 6)?,
                wy: field(row, 7)?,
            },
            K::Jumping => ProblemParams::Jumping {
                seed: field(row, 2)?,
                blocks: field(row, 8)?,
                m: field(row, 9)?,
            },
        };
        Ok(Self {
            index: field(row, 0)?,
            params,
            rhs_seed: field(row, 10)?,
        })
    }
}

/// The first `count` training items of a configuration.
pub fn generate(cfg: &ExperimentConfig, count: usize) -> Result<Vec<DatasetRecord>> {
    (0..count as u64)
        .map(|i| {
            Ok(DatasetRecord {
                index: i,
                params: cfg.train_params(i)?,
                rhs_seed: cfg.train.rhs_seed + i,
            })
        })
        .collect()
}

pub fn write(records: &[DatasetRecord], path: &Path) -> Result<()> {
    let mut t = Table::new(&COLUMNS);
    for r in records {
        t.push(r.row());
    }
    t.write(path)
}

pub fn read(path: &Path) -> Result<Vec<DatasetRecord>> {
    let (header, rows) = read_table(path)?;
    if header != COLUMNS {
        return Err(CliError::Validation(format!(
            "{}: unexpected dataset header {header:?}",
            path.display()
        )));
    }
    rows.iter().map(|r| DatasetRecord::parse(r)).collect()
}

/// Writes the realized stencil, RHS and coefficient of one record.
///
/// `item_<index>.csv` has one row per unknown (`ix, iy, s0..s8, rhs`, with
/// the stencil taps in the order NW, N, NE, W, C, E, SW, S, SE);
/// `item_<index>_coefficient.csv` holds the coefficient on its own lattice.
pub fn materialize(record: &DatasetRecord, n: usize, dir: &Path) -> Result<()> {
    let inst = record.params.realize::<f64>(n)?;
    let grid = inst.grid();
    let f = record.rhs(n)?;
    let mut header: Vec<String> = vec!["ix".into(), "iy".into()];
    header.extend((0..9).map(|k| format!("s{k}")));
    header.push("rhs".into());
    let mut t = Table::new(&header);
    for idx in 0..grid.len() {
        let (ix, iy) = grid.position(idx);
        let mut row = vec![ix.to_string(), iy.to_string()];
        row.extend(inst.stencil.at(idx).iter().map(|c| num(c.re)));
        row.push(num(f.values()[idx].re));
        t.push(row);
    }
    t.write(&dir.join(format!("item_{:05}.csv", record.index)))?;
    let (side, values) = match &inst.coefficient {
        Coefficient::None => return Ok(()),
        Coefficient::Element(a) => (a.n(), a.values().to_vec()),
        Coefficient::Nodal(a) => (a.n(), a.values().to_vec()),
    };
    let mut t = Table::new(&["px", "py", "a"]);
    for (i, a) in values.iter().enumerate() {
        t.push(vec![(i % side).to_string(), (i / side).to_string(), num(*a)]);
    }
    t.write(&dir.join(format!("item_{:05}_coefficient.csv", record.index)))
}
