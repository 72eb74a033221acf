use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use vaisman_core::leafspace::BasicField;
use vaisman_core::pipeline::{CheckResult, SolverSummary, UniquenessSummary};

use crate::config::{Command, RunConfig};
use crate::error::{CliError, ErrorRecord};

pub const SCHEMA: &str = "vaisman-cy/1";

#[derive(Clone, Debug, Serialize)]
pub struct ReportFile {
    pub schema: &'static str,
    pub command: Command,
    pub config: RunConfig,
    pub config_hash: String,
    pub checks: Vec<CheckResult>,
    pub solver: Option<SolverSummary>,
    pub uniqueness: Option<UniquenessSummary>,
    pub normalization: Option<f64>,
    pub pass: bool,
}

impl ReportFile {
    pub fn new(cfg: &RunConfig, checks: Vec<CheckResult>) -> Self {
        let pass = !checks.is_empty() && checks.iter().all(|c| c.pass);
        Self {
            schema: SCHEMA,
            command: cfg.command,
            config: cfg.clone(),
            config_hash: cfg.hash(),
            checks,
            solver: None,
            uniqueness: None,
            normalization: None,
            pass,
        }
    }

    pub fn path(out: &Path, command: Command) -> PathBuf {
        out.join(format!("{}_report.json", command.name()))
    }

    pub fn write(&self, out: &Path) -> Result<PathBuf, CliError> {
        std::fs::create_dir_all(out)?;
        let path = Self::path(out, self.command);
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        std::fs::write(&path, text)?;
        Ok(path)
    }
}

#[derive(Debug, Serialize)]
pub struct ErrorFile<'a> {
    pub schema: &'static str,
    pub command: Command,
    pub error: &'a ErrorRecord,
}

/// Field dump: `index,coord1..coordd,value`, rows in grid order.
pub fn field_csv(field: &BasicField) -> String {
    let grid = field.grid();
    let d = grid.coords(0).len();
    let mut out = String::from("index");
    for k in 1..=d {
        write!(out, ",coord{k}").unwrap();
    }
    out.push_str(",value\n");
    for (i, v) in field.values().iter().enumerate() {
        write!(out, "{i}").unwrap();
        for c in grid.coords(i) {
            write!(out, ",{c:.16e}").unwrap();
        }
        writeln!(out, ",{v:.16e}").unwrap();
    }
    out
}

pub fn write_field(out: &Path, name: &str, field: &BasicField) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(out)?;
    let path = out.join(format!("{name}.csv"));
    std::fs::write(&path, field_csv(field))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::psi::read_field;
    use vaisman_core::leafspace::LeafGrid;

    #[test]
    fn field_dump_round_trips_exactly() {
        let grid = LeafGrid::torus(8).unwrap();
        let field = BasicField::from_fn(&grid, |x| (x[0] + 2.0 * x[3]).sin() / 3.0).unwrap();
        let text = field_csv(&field);
        assert!(text.starts_with("index,coord1,coord2,coord3,coord4,value\n"));
        let dir = tempfile::tempdir().unwrap();
        let path = write_field(dir.path(), "f", &field).unwrap();
        let back = read_field(&path, &grid).unwrap();
        assert_eq!(back.values(), field.values());
    }

    #[test]
    fn sphere_dump_has_two_coordinates() {
        let grid = LeafGrid::sphere(4).unwrap();
        let text = field_csv(&BasicField::constant(&grid, 1.0));
        assert!(text.starts_with("index,coord1,coord2,value\n"));
        assert_eq!(text.lines().count(), grid.len() + 1);
    }
}
