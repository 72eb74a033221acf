use std::path::Path;
use std::sync::Arc;

use vaisman_core::leafspace::{BasicField, GridKind, LeafGrid};
use vaisman_core::models::VaismanModel;
use vaisman_core::pipeline::{fiber_function, VolumeSpec};

use crate::error::CliError;

/// Parsed `--psi` value.
#[derive(Clone, Debug, PartialEq)]
pub enum PsiSpec {
    Zero,
    /// `a Y_lm` on the sphere.
    Harmonic { l: usize, m: i64, amplitude: f64 },
    /// `a Π cos x_k` over the listed torus axes (1-based).
    CosineProduct { axes: Vec<usize>, amplitude: f64 },
    /// `a cos(k·x)` on the torus.
    CosineMode { k: [i64; 4], amplitude: f64 },
    /// `a` times a function varying along the leaves.
    Fiber { amplitude: f64 },
    File(String),
}

fn usage(msg: String) -> CliError {
    CliError::Usage(msg)
}

fn amplitude(s: &str, spec: &str) -> Result<f64, CliError> {
    let a: f64 = s
        .parse()
        .map_err(|_| usage(format!("invalid amplitude `{s}` in psi `{spec}`")))?;
    if !a.is_finite() {
        return Err(usage(format!("amplitude must be finite in psi `{spec}`")));
    }
    Ok(a)
}

impl PsiSpec {
    /// Forms: `zero`, `y20:0.3`, `ylm:l,m:a`, `cc13:0.2`, `cos:k1,k2,k3,k4:a`,
    /// `fiber:a`, `file:<path>`.
    pub fn parse(spec: &str) -> Result<Self, CliError> {
        let spec = spec.trim();
        if spec == "zero" {
            return Ok(Self::Zero);
        }
        let (head, rest) = spec
            .split_once(':')
            .ok_or_else(|| usage(format!("psi `{spec}` must look like name:amplitude")))?;
        match head {
            "file" => Ok(Self::File(rest.to_string())),
            "fiber" => Ok(Self::Fiber {
                amplitude: amplitude(rest, spec)?,
            }),
            "ylm" => {
                let (lm, a) = rest
                    .split_once(':')
                    .ok_or_else(|| usage(format!("psi `{spec}`: expected ylm:l,m:amplitude")))?;
                let (l, m) = lm
                    .split_once(',')
                    .ok_or_else(|| usage(format!("psi `{spec}`: expected ylm:l,m:amplitude")))?;
                let l: usize = l.trim().parse().map_err(|_| usage(format!("bad degree in `{spec}`")))?;
                let m: i64 = m.trim().parse().map_err(|_| usage(format!("bad order in `{spec}`")))?;
                Self::harmonic(l, m, amplitude(a, spec)?, spec)
            }
            "cos" => {
                let (ks, a) = rest
                    .split_once(':')
                    .ok_or_else(|| usage(format!("psi `{spec}`: expected cos:k1,k2,k3,k4:amplitude")))?;
                let k: Vec<i64> = ks
                    .split(',')
                    .map(|x| x.trim().parse())
                    .collect::<Result<_, _>>()
                    .map_err(|_| usage(format!("bad mode in `{spec}`")))?;
                let k: [i64; 4] = k
                    .try_into()
                    .map_err(|_| usage(format!("psi `{spec}` needs four wave numbers")))?;
                Ok(Self::CosineMode {
                    k,
                    amplitude: amplitude(a, spec)?,
                })
            }
            _ if head.len() == 3 && head.starts_with('y') && head[1..].chars().all(|c| c.is_ascii_digit()) => {
                let l = head[1..2].parse().unwrap();
                let m = head[2..3].parse().unwrap();
                Self::harmonic(l, m, amplitude(rest, spec)?, spec)
            }
            _ if head.len() > 2 && head.starts_with("cc") && head[2..].chars().all(|c| ('1'..='4').contains(&c)) => {
                Ok(Self::CosineProduct {
                    axes: head[2..].chars().map(|c| c as usize - '0' as usize).collect(),
                    amplitude: amplitude(rest, spec)?,
                })
            }
            _ => Err(usage(format!("unknown psi `{spec}`"))),
        }
    }

    fn harmonic(l: usize, m: i64, amplitude: f64, spec: &str) -> Result<Self, CliError> {
        if m.unsigned_abs() as usize > l {
            return Err(usage(format!("psi `{spec}` needs |m| <= l")));
        }
        Ok(Self::Harmonic { l, m, amplitude })
    }

    /// The volume specification on `grid`.
    pub fn build(
        &self,
        model: &VaismanModel,
        grid: &Arc<LeafGrid>,
        lee_scale: f64,
        label: &str,
    ) -> Result<VolumeSpec, CliError> {
        let model = model.clone();
        let spec = match (self, grid.kind()) {
            (Self::Zero, _) => VolumeSpec::reference(model, lee_scale)?,
            (Self::Harmonic { l, m, amplitude }, GridKind::Sphere(s)) => {
                if *l > s.band() {
                    return Err(usage(format!("degree {l} exceeds band limit {}", s.band())));
                }
                let values = s.harmonic(*l, *m).iter().map(|v| amplitude * v).collect();
                VolumeSpec::from_field(model, &BasicField::new(grid, values)?, lee_scale, label)?
            }
            (Self::CosineProduct { axes, amplitude }, GridKind::Torus(_)) => {
                let (axes, a) = (axes.clone(), *amplitude);
                VolumeSpec::from_leaf_fn(
                    model,
                    move |x| a * axes.iter().map(|&k| x[k - 1].cos()).product::<f64>(),
                    lee_scale,
                    label,
                )?
            }
            (Self::CosineMode { k, amplitude }, GridKind::Torus(_)) => {
                let (k, a) = (*k, *amplitude);
                VolumeSpec::from_leaf_fn(
                    model,
                    move |x| a * (0..4).map(|d| k[d] as f64 * x[d]).sum::<f64>().cos(),
                    lee_scale,
                    label,
                )?
            }
            (Self::Fiber { amplitude }, _) => {
                let (m, a) = (model.clone(), *amplitude);
                VolumeSpec::new(model, move |p| Ok(a * fiber_function(&m, p).0), lee_scale, label)?
            }
            (Self::File(path), _) => {
                let field = read_field(Path::new(path), grid)?;
                VolumeSpec::from_field(model, &field, lee_scale, label)?
            }
            _ => {
                return Err(usage(format!(
                    "psi `{label}` does not live on the {} leaf space",
                    grid.name()
                )))
            }
        };
        Ok(spec)
    }
}

/// Reads a field dump (`index,coord1..coordd,value`) written for `grid`.
pub fn read_field(path: &Path, grid: &Arc<LeafGrid>) -> Result<BasicField, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read field {}: {e}", path.display())))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| usage(format!("{} is empty", path.display())))?;
    let columns = header.split(',').count();
    let expected = grid.coords(0).len() + 2;
    if columns != expected || !header.starts_with("index,") || !header.ends_with(",value") {
        return Err(usage(format!(
            "{}: header must be index,coord1..coord{},value",
            path.display(),
            expected - 2
        )));
    }
    let mut values = Vec::with_capacity(grid.len());
    for (row, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let index: Option<usize> = cells.first().and_then(|c| c.parse().ok());
        if cells.len() != columns || index != Some(row) {
            return Err(usage(format!("{}: malformed row {}", path.display(), row + 1)));
        }
        let v: f64 = cells[columns - 1]
            .parse()
            .map_err(|_| usage(format!("{}: bad value on row {}", path.display(), row + 1)))?;
        values.push(v);
    }
    if values.len() != grid.len() {
        return Err(usage(format!(
            "{}: {} rows for a grid of {} nodes",
            path.display(),
            values.len(),
            grid.len()
        )));
    }
    Ok(BasicField::new(grid, values)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_names_parse() {
        assert_eq!(
            PsiSpec::parse("y20:0.3").unwrap(),
            PsiSpec::Harmonic {
                l: 2,
                m: 0,
                amplitude: 0.3
            }
        );
        assert_eq!(
            PsiSpec::parse("cc13:0.2").unwrap(),
            PsiSpec::CosineProduct {
                axes: vec![1, 3],
                amplitude: 0.2
            }
        );
        assert_eq!(
            PsiSpec::parse("ylm:3,-2:0.1").unwrap(),
            PsiSpec::Harmonic {
                l: 3,
                m: -2,
                amplitude: 0.1
            }
        );
        assert_eq!(
            PsiSpec::parse("cos:1,0,-1,0:0.1").unwrap(),
            PsiSpec::CosineMode {
                k: [1, 0, -1, 0],
                amplitude: 0.1
            }
        );
        assert_eq!(PsiSpec::parse("fiber:0.1").unwrap(), PsiSpec::Fiber { amplitude: 0.1 });
        assert_eq!(PsiSpec::parse("zero").unwrap(), PsiSpec::Zero);
        for bad in ["y2", "y20:x", "cc15:0.1", "cos:1,2:0.1", "ylm:1,2:0.1", "what:1"] {
            assert!(PsiSpec::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn y20_matches_closed_form() {
        let model = VaismanModel::hopf(2, 2.0).unwrap();
        let grid = LeafGrid::sphere(8).unwrap();
        let spec = PsiSpec::parse("y20:0.3").unwrap().build(&model, &grid, 1.0, "y20:0.3").unwrap();
        let c = 0.3 * (5.0 / (16.0 * std::f64::consts::PI)).sqrt();
        for leaf in [[0.0, 0.0, 1.0], [0.6, 0.0, 0.8], [0.0, 1.0, 0.0]] {
            let p = model.leaf_lift(&leaf).unwrap();
            let z = leaf[2];
            let expect = c * (3.0 * z * z - 1.0);
            assert!((spec.psi_at(&p).unwrap() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn mismatched_leaf_space_is_rejected() {
        let model = VaismanModel::nil().unwrap();
        let grid = LeafGrid::torus(8).unwrap();
        assert!(PsiSpec::parse("y20:0.3").unwrap().build(&model, &grid, 1.0, "y20").is_err());
    }
}
