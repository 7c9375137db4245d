//! File formats for stage handoff: dataset CSV, image-stack CSV, potential
//! exports and 8-bit PGM renderings.
//!
//! Floating-point values are printed with 17 significant digits so that
//! write/read round-trips are bit-lossless and reruns are byte-identical.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use thiserror::Error;

use crate::admittivity::Frequency;
use crate::forward::PotentialField;
use crate::geometry::{Mesh, Pixelation};
use crate::protocol::{BoundaryDataset, ProtocolMeta};
use crate::reconstruct::ImageStack;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("parse error in {path} line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
}

/// 17-significant-digit formatting (lossless f64 round-trip).
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(s: &str, path: &str, line: usize) -> Result<f64, IoError> {
    s.trim().parse::<f64>().map_err(|e| IoError::Parse {
        path: path.to_string(),
        line,
        message: format!("bad float {s:?}: {e}"),
    })
}

fn parse_usize(s: &str, path: &str, line: usize) -> Result<usize, IoError> {
    s.trim().parse::<usize>().map_err(|e| IoError::Parse {
        path: path.to_string(),
        line,
        message: format!("bad integer {s:?}: {e}"),
    })
}

/// Write one dataset: `omega,k,j,re_V,im_V,masked` with 1-based `k, j`.
pub fn write_dataset_csv(path: &Path, dataset: &BoundaryDataset) -> Result<(), IoError> {
    let mut out = String::from("omega,k,j,re_V,im_V,masked\n");
    let n = dataset.n_electrodes();
    for k in 0..n {
        for j in 0..n {
            let v = dataset.v[k][j];
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                fmt17(dataset.omega.omega()),
                k + 1,
                j + 1,
                fmt17(v.re),
                fmt17(v.im),
                u8::from(dataset.masked[k][j]),
            ));
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// Read a dataset written by [`write_dataset_csv`].
pub fn read_dataset_csv(path: &Path) -> Result<BoundaryDataset, IoError> {
    let text = std::fs::read_to_string(path)?;
    let name = path.display().to_string();
    let mut entries = Vec::new();
    let mut omega_val: Option<f64> = None;
    let mut n_max = 0usize;
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 6 {
            return Err(IoError::Parse {
                path: name.clone(),
                line: i + 1,
                message: format!("expected 6 fields, got {}", parts.len()),
            });
        }
        let omega = parse_f64(parts[0], &name, i + 1)?;
        omega_val.get_or_insert(omega);
        let k = parse_usize(parts[1], &name, i + 1)?;
        let j = parse_usize(parts[2], &name, i + 1)?;
        let re = parse_f64(parts[3], &name, i + 1)?;
        let im = parse_f64(parts[4], &name, i + 1)?;
        let masked = parts[5].trim() == "1";
        n_max = n_max.max(k).max(j);
        entries.push((k, j, Complex64::new(re, im), masked));
    }
    let omega = Frequency::unbounded(omega_val.unwrap_or(1.0)).map_err(|e| IoError::Parse {
        path: name.clone(),
        line: 1,
        message: e.to_string(),
    })?;
    let mut v = vec![vec![Complex64::new(0.0, 0.0); n_max]; n_max];
    let mut masked = vec![vec![false; n_max]; n_max];
    for (k, j, val, m) in entries {
        v[k - 1][j - 1] = val;
        masked[k - 1][j - 1] = m;
    }
    Ok(BoundaryDataset {
        omega,
        v,
        masked,
        meta: ProtocolMeta::default(),
    })
}

/// Write an image stack: `pixel_id,x_center,y_center,omega,re_dgamma,im_dgamma`.
pub fn write_image_stack_csv(path: &Path, stack: &ImageStack) -> Result<(), IoError> {
    let mut out = String::from("pixel_id,x_center,y_center,omega,re_dgamma,im_dgamma\n");
    for (col, omega) in stack.frequencies.iter().enumerate() {
        for (pid, cell) in stack.pixelation.cells().iter().enumerate() {
            let v = stack.images[(pid, col)];
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                pid,
                fmt17(cell.center.x),
                fmt17(cell.center.y),
                fmt17(omega.omega()),
                fmt17(v.re),
                fmt17(v.im),
            ));
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// Read an image stack written by [`write_image_stack_csv`]; the pixelation
/// must be supplied by the caller (it is part of the run configuration).
pub fn read_image_stack_csv(path: &Path, pixelation: Pixelation) -> Result<ImageStack, IoError> {
    let text = std::fs::read_to_string(path)?;
    let name = path.display().to_string();
    let mut per_omega: Vec<(f64, Vec<Complex64>)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 6 {
            return Err(IoError::Parse {
                path: name.clone(),
                line: i + 1,
                message: format!("expected 6 fields, got {}", parts.len()),
            });
        }
        let pid = parse_usize(parts[0], &name, i + 1)?;
        let omega = parse_f64(parts[3], &name, i + 1)?;
        let re = parse_f64(parts[4], &name, i + 1)?;
        let im = parse_f64(parts[5], &name, i + 1)?;
        let slot = match per_omega.iter_mut().find(|(w, _)| *w == omega) {
            Some((_, col)) => col,
            None => {
                per_omega.push((omega, vec![Complex64::new(0.0, 0.0); pixelation.len()]));
                &mut per_omega.last_mut().unwrap().1
            }
        };
        if pid >= slot.len() {
            return Err(IoError::Parse {
                path: name.clone(),
                line: i + 1,
                message: format!("pixel id {pid} outside pixelation of {} cells", slot.len()),
            });
        }
        slot[pid] = Complex64::new(re, im);
    }
    let m = pixelation.len();
    let mut images = nalgebra::DMatrix::<Complex64>::zeros(m, per_omega.len());
    let mut frequencies = Vec::with_capacity(per_omega.len());
    for (col, (w, values)) in per_omega.iter().enumerate() {
        frequencies.push(Frequency::unbounded(*w).map_err(|e| IoError::Parse {
            path: name.clone(),
            line: 1,
            message: e.to_string(),
        })?);
        for (pid, v) in values.iter().enumerate() {
            images[(pid, col)] = *v;
        }
    }
    Ok(ImageStack {
        images,
        frequencies,
        pixelation,
    })
}

/// Render one pixel image as binary 8-bit PGM. Values map linearly to
/// `128 +- 127` around zero (symmetric about the gray midpoint after the
/// per-image max-|value| normalization); cells outside the disk are black.
pub fn write_pgm(path: &Path, pixelation: &Pixelation, values: &[f64]) -> Result<(), IoError> {
    assert_eq!(values.len(), pixelation.len());
    let max_abs = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let (nx, ny) = (pixelation.nx, pixelation.ny);
    let mut raster = vec![0u8; nx * ny];
    for (pid, cell) in pixelation.cells().iter().enumerate() {
        let gray = if max_abs == 0.0 {
            128.0
        } else {
            128.0 + 127.0 * values[pid] / max_abs
        };
        // PGM rows run top to bottom
        let row = ny - 1 - cell.iy;
        raster[row * nx + cell.ix] = gray.round().clamp(0.0, 255.0) as u8;
    }
    let mut f = std::fs::File::create(path)?;
    write!(f, "P5\n{nx} {ny}\n255\n")?;
    f.write_all(&raster)?;
    Ok(())
}

/// Export a potential field: `node_index,x,y,re_u,im_u`, plus a side table
/// of crack pairs (`minus,plus,segment,arclength`) when the mesh carries any.
pub fn write_potential_csv(
    path: &Path,
    crack_table_path: Option<&Path>,
    mesh: &Mesh,
    field: &PotentialField,
) -> Result<(), IoError> {
    let mut out = String::from("node_index,x,y,re_u,im_u\n");
    for (i, p) in mesh.nodes.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            i,
            fmt17(p.x),
            fmt17(p.y),
            fmt17(field.u[i].re),
            fmt17(field.u[i].im),
        ));
    }
    std::fs::File::create(path)?.write_all(out.as_bytes())?;
    if let Some(side) = crack_table_path {
        let mut table = String::from("minus,plus,segment,arclength\n");
        for pair in &mesh.crack_pairs {
            table.push_str(&format!(
                "{},{},{},{}\n",
                pair.minus,
                pair.plus,
                pair.segment,
                fmt17(pair.arclength),
            ));
        }
        std::fs::File::create(side)?.write_all(table.as_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::ProtocolMeta;

    #[test]
    fn fmt17_roundtrips_exactly() {
        for &x in &[
            1.0,
            -3.5e-7,
            std::f64::consts::PI,
            1.2345678901234567e300,
            -9.87e-301,
            0.1 + 0.2,
        ] {
            let s = fmt17(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{x} -> {s} -> {back}");
        }
    }

    #[test]
    fn dataset_roundtrip_is_lossless() {
        let n = 4;
        let omega = Frequency::from_hz(1.5e4).unwrap();
        let mut v = vec![vec![Complex64::new(0.0, 0.0); n]; n];
        let mut masked = vec![vec![false; n]; n];
        for k in 0..n {
            for j in 0..n {
                v[k][j] = Complex64::new(
                    (k as f64 + 1.0) * 0.377 - j as f64 * 1.13e-5,
                    (j as f64 - 1.5) * 2.9e3,
                );
                masked[k][j] = (k + j) % 3 == 0;
            }
        }
        let ds = BoundaryDataset {
            omega,
            v,
            masked,
            meta: ProtocolMeta::default(),
        };
        let dir = std::env::temp_dir().join("mfeit_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("ds.csv");
        write_dataset_csv(&path, &ds).unwrap();
        let back = read_dataset_csv(&path).unwrap();
        assert_eq!(back.omega.omega().to_bits(), omega.omega().to_bits());
        for k in 0..n {
            for j in 0..n {
                assert_eq!(back.v[k][j], ds.v[k][j]);
                assert_eq!(back.masked[k][j], ds.masked[k][j]);
            }
        }
    }

    #[test]
    fn pgm_is_deterministic() {
        let pix = Pixelation::square(8, 1.0);
        let values: Vec<f64> = (0..pix.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let dir = std::env::temp_dir().join("mfeit_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let p1 = dir.join("a.pgm");
        let p2 = dir.join("b.pgm");
        write_pgm(&p1, &pix, &values).unwrap();
        write_pgm(&p2, &pix, &values).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        let bytes = std::fs::read(&p1).unwrap();
        assert!(bytes.starts_with(b"P5\n8 8\n255\n"));
    }
}
