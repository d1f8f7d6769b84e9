//! Text manifests in flat `key = value` form.
//!
//! A trajectory manifest lists the grid, label, parameter and one
//! `snapshot_<k> = <relative path>, <time>` line per snapshot, plus free-form
//! metadata such as the solver settings. A parametric manifest lists
//! `param_<j> = <mu>, <hf manifest>` and optional `lf_<j> = <lf manifest>`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::atomic_write;
use super::phf::{read_field, write_field};
use crate::error::{Error, Result};
use crate::field::{Fidelity, Grid2D, Trajectory};

const STRUCTURAL: [&str; 9] = ["format", "grid_nx", "grid_ny", "x0", "y0", "hx", "hy", "label", "param"];

/// Parses `key = value` lines. Blank lines and `#` comments are skipped and
/// surrounding double quotes are removed from values.
pub fn parse_key_values(text: &str, path: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!("line {}: expected `key = value`", n + 1),
            });
        };
        let v = v.trim();
        let v = v.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(v);
        out.push((k.trim().to_string(), v.to_string()));
    }
    Ok(out)
}

fn format_error(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn lookup<'a>(kv: &'a [(String, String)], key: &str, path: &Path) -> Result<&'a str> {
    kv.iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| format_error(path, format!("missing key `{key}`")))
}

fn parse_num<T: std::str::FromStr>(s: &str, key: &str, path: &Path) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| format_error(path, format!("`{key}` has invalid value `{s}`")))
}

/// Writes `<dir>/manifest.txt` and one PHF1 file per snapshot under `<dir>/snapshots`.
/// Returns the manifest path.
pub fn write_trajectory(dir: &Path, traj: &Trajectory) -> Result<PathBuf> {
    let g = traj.grid();
    let mut m = String::new();
    let _ = writeln!(m, "# trajectory manifest");
    let _ = writeln!(m, "format = PHF1");
    let _ = writeln!(m, "grid_nx = {}", g.nx);
    let _ = writeln!(m, "grid_ny = {}", g.ny);
    let _ = writeln!(m, "x0 = {}", g.x0);
    let _ = writeln!(m, "y0 = {}", g.y0);
    let _ = writeln!(m, "hx = {}", g.hx);
    let _ = writeln!(m, "hy = {}", g.hy);
    let _ = writeln!(m, "label = {}", traj.label);
    let _ = writeln!(m, "param = {}", traj.param);
    let _ = writeln!(m, "n_snapshots = {}", traj.len());
    for (k, v) in &traj.meta {
        let _ = writeln!(m, "{k} = {v}");
    }
    let names: Vec<String> = (0..traj.len()).map(|k| format!("snapshots/snap_{k:06}.phf")).collect();
    names
        .par_iter()
        .zip(traj.fields().par_iter())
        .try_for_each(|(name, f)| write_field(&dir.join(name), f))?;
    for (k, (name, t)) in names.iter().zip(traj.times()).enumerate() {
        let _ = writeln!(m, "snapshot_{k} = {name}, {t}");
    }
    let path = dir.join("manifest.txt");
    atomic_write(&path, m.as_bytes())?;
    Ok(path)
}

/// Reads a trajectory from its manifest; snapshot paths are relative to the manifest.
pub fn read_trajectory(manifest: &Path) -> Result<Trajectory> {
    let text = fs::read_to_string(manifest)?;
    let kv = parse_key_values(&text, manifest)?;
    let get = |k: &str| lookup(&kv, k, manifest);
    if get("format")? != "PHF1" {
        return Err(format_error(manifest, "unsupported snapshot format"));
    }
    let grid = Grid2D::new(
        parse_num(get("grid_nx")?, "grid_nx", manifest)?,
        parse_num(get("grid_ny")?, "grid_ny", manifest)?,
        parse_num(get("x0")?, "x0", manifest)?,
        parse_num(get("y0")?, "y0", manifest)?,
        parse_num(get("hx")?, "hx", manifest)?,
        parse_num(get("hy")?, "hy", manifest)?,
    )?;
    let label: Fidelity = get("label")?.parse()?;
    let param: f64 = parse_num(get("param")?, "param", manifest)?;
    let n: usize = parse_num(get("n_snapshots")?, "n_snapshots", manifest)?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::with_capacity(n);
    for k in 0..n {
        let key = format!("snapshot_{k}");
        let v = get(&key)?;
        let (rel, t) = v
            .rsplit_once(',')
            .ok_or_else(|| format_error(manifest, format!("`{key}` must be `path, time`")))?;
        entries.push((base.join(rel.trim()), parse_num::<f64>(t, &key, manifest)?));
    }
    let fields = entries.par_iter().map(|(p, _)| read_field(p)).collect::<Result<Vec<_>>>()?;
    let times = entries.iter().map(|e| e.1).collect();
    let mut traj = Trajectory::new(grid, times, fields, label, param)?;
    traj.meta = kv
        .into_iter()
        .filter(|(k, _)| !STRUCTURAL.contains(&k.as_str()) && k != "n_snapshots" && !k.starts_with("snapshot_"))
        .collect();
    Ok(traj)
}

/// One training parameter of a parametric dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricEntry {
    pub param: f64,
    pub hf: PathBuf,
    pub lf: Option<PathBuf>,
}

/// Writes a parametric manifest; paths are stored as given.
pub fn write_parametric_manifest(path: &Path, entries: &[ParametricEntry]) -> Result<()> {
    let mut m = String::from("# parametric dataset manifest\n");
    let _ = writeln!(m, "n_params = {}", entries.len());
    for (j, e) in entries.iter().enumerate() {
        let _ = writeln!(m, "param_{j} = {}, {}", e.param, e.hf.display());
        if let Some(lf) = &e.lf {
            let _ = writeln!(m, "lf_{j} = {}", lf.display());
        }
    }
    atomic_write(path, m.as_bytes())
}

/// Reads a parametric manifest; relative paths are resolved against its directory.
pub fn read_parametric_manifest(path: &Path) -> Result<Vec<ParametricEntry>> {
    let text = fs::read_to_string(path)?;
    let kv = parse_key_values(&text, path)?;
    let n: usize = parse_num(lookup(&kv, "n_params", path)?, "n_params", path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    (0..n)
        .map(|j| {
            let key = format!("param_{j}");
            let v = lookup(&kv, &key, path)?;
            let (mu, hf) = v
                .split_once(',')
                .ok_or_else(|| format_error(path, format!("`{key}` must be `mu, path`")))?;
            let lf = kv.iter().find(|(k, _)| *k == format!("lf_{j}")).map(|(_, v)| base.join(v.trim()));
            Ok(ParametricEntry {
                param: parse_num(mu, &key, path)?,
                hf: base.join(hf.trim()),
                lf,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ScalarField;

    #[test]
    fn key_values_skip_comments_and_quotes() {
        let kv = parse_key_values("# c\n\na = 1\n b= \"x y\" \n", Path::new("m")).unwrap();
        assert_eq!(kv, vec![("a".into(), "1".into()), ("b".into(), "x y".into())]);
        assert!(parse_key_values("novalue\n", Path::new("m")).is_err());
    }

    #[test]
    fn trajectory_roundtrip() {
        let g = Grid2D::unit_square(6);
        let fields: Vec<_> = (0..3).map(|k| ScalarField::from_fn(g, |x, y| x * k as f64 + y)).collect();
        let mut traj = Trajectory::new(g, vec![0.0, 0.1, 0.2], fields, Fidelity::High, 0.15).unwrap();
        traj.meta.push(("fom.T".into(), "4".into()));
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_trajectory(dir.path(), &traj).unwrap();
        let back = read_trajectory(&manifest).unwrap();
        assert_eq!(back.grid(), traj.grid());
        assert_eq!(back.times(), traj.times());
        assert_eq!(back.label, Fidelity::High);
        assert_eq!(back.param, 0.15);
        assert_eq!(back.meta_value("fom.T"), Some("4"));
        for (a, b) in back.fields().iter().zip(traj.fields()) {
            assert_eq!(a.values(), b.values());
        }
    }

    #[test]
    fn parametric_manifest_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("params.txt");
        let entries = vec![
            ParametricEntry {
                param: 0.1,
                hf: "hf_0/manifest.txt".into(),
                lf: Some("lf_0/manifest.txt".into()),
            },
            ParametricEntry {
                param: 0.12,
                hf: "hf_1/manifest.txt".into(),
                lf: None,
            },
        ];
        write_parametric_manifest(&p, &entries).unwrap();
        let back = read_parametric_manifest(&p).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].param, 0.1);
        assert_eq!(back[0].hf, dir.path().join("hf_0/manifest.txt"));
        assert_eq!(back[0].lf, Some(dir.path().join("lf_0/manifest.txt")));
        assert_eq!(back[1].lf, None);
    }

    #[test]
    fn missing_manifest_is_io_error() {
        assert!(matches!(read_trajectory(Path::new("/nonexistent/manifest.txt")), Err(Error::Io(_))));
    }
}
