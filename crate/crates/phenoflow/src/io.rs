//! Persistence: PFLD snapshot files (one scalar field, bit-exact) and
//! diagnostics CSV (17 significant digits, value-exact round trips).

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use crate::diagnostics::DiagnosticsRecord;
use crate::error::{Error, Result};
use crate::grid::{Field, SpatialGrid};
use crate::model::{GrowthKind, GrowthLaw, MultiState, PhenotypeSet, SimParams};

fn bad(path: &Path, message: impl Into<String>) -> Error {
    Error::BadFormat {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// PFLD: line 1 is ASCII `PFLD 1 <dim> <n1> [n2] <box_length>\n`, then the
/// cell values row-major as little-endian 8-byte floats.
pub fn write_snapshot(field: &Field, path: &Path) -> Result<()> {
    let g = field.grid();
    let mut bytes = Vec::with_capacity(32 + 8 * g.cells());
    match g.dim() {
        1 => bytes.extend_from_slice(
            format!("PFLD 1 1 {} {}\n", g.points_per_axis(), g.box_length()).as_bytes(),
        ),
        _ => bytes.extend_from_slice(
            format!(
                "PFLD 1 2 {} {} {}\n",
                g.points_per_axis(),
                g.points_per_axis(),
                g.box_length()
            )
            .as_bytes(),
        ),
    }
    for v in field.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_snapshot(path: &Path) -> Result<Field> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| bad(path, "missing header line"))?;
    let header = std::str::from_utf8(&bytes[..nl])
        .map_err(|_| bad(path, "header is not ASCII"))?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.first() != Some(&"PFLD") {
        return Err(bad(path, format!("bad magic, expected PFLD: {header:?}")));
    }
    if tokens.get(1) != Some(&"1") {
        return Err(bad(path, format!("unsupported version in {header:?}")));
    }
    let dim: usize = tokens
        .get(2)
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| bad(path, "unreadable dimension"))?;
    if tokens.len() != 4 + dim {
        return Err(bad(
            path,
            format!("header lists {} extents for dimension {dim}", tokens.len() - 4),
        ));
    }
    let n1: usize = tokens[3]
        .parse()
        .map_err(|_| bad(path, "unreadable extent"))?;
    if dim == 2 {
        let n2: usize = tokens[4]
            .parse()
            .map_err(|_| bad(path, "unreadable extent"))?;
        if n2 != n1 {
            return Err(bad(path, format!("non-square grid {n1} x {n2} unsupported")));
        }
    }
    let box_length: f64 = tokens[3 + dim]
        .parse()
        .map_err(|_| bad(path, "unreadable box length"))?;
    let grid =
        SpatialGrid::new(dim, n1, box_length).map_err(|e| bad(path, e.to_string()))?;

    let payload = &bytes[nl + 1..];
    let expected = 8 * grid.cells();
    if payload.len() < expected {
        return Err(bad(
            path,
            format!("truncated payload: {} of {expected} bytes", payload.len()),
        ));
    }
    if payload.len() > expected {
        return Err(bad(
            path,
            format!("{} trailing bytes after the payload", payload.len() - expected),
        ));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunks of 8")))
        .collect();
    Field::new(grid, values).map_err(|e| bad(path, e.to_string()))
}

/// CSV with a "time" column followed by one column per series, every value
/// at 17 significant digits so parsing back reproduces the exact floats.
pub fn write_diagnostics(record: &DiagnosticsRecord, path: &Path) -> Result<()> {
    for name in record.series().keys() {
        if name.contains(',') || name.contains('\n') {
            return Err(Error::InvalidInput(format!(
                "series name {name:?} cannot appear in a CSV header"
            )));
        }
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let emit = |w: &mut std::io::BufWriter<std::fs::File>, line: String| {
        w.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))
    };

    let mut header = String::from("time");
    for name in record.series().keys() {
        header.push(',');
        header.push_str(name);
    }
    header.push('\n');
    emit(&mut w, header)?;

    for (j, t) in record.times().iter().enumerate() {
        let mut line = format!("{t:.16e}");
        for values in record.series().values() {
            line.push_str(&format!(",{:.16e}", values[j]));
        }
        line.push('\n');
        emit(&mut w, line)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Inverse of `write_diagnostics`; the run id is taken from the file stem.
pub fn read_diagnostics(path: &Path) -> Result<DiagnosticsRecord> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad(path, "empty file"))?;
    let columns: Vec<&str> = header.split(',').collect();
    if columns.first() != Some(&"time") {
        return Err(bad(path, "first column must be \"time\""));
    }

    let mut times = Vec::new();
    let mut series: Vec<Vec<f64>> = vec![Vec::new(); columns.len() - 1];
    for (lineno, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != columns.len() {
            return Err(bad(
                path,
                format!("line {}: {} fields for {} columns", lineno + 2, cells.len(), columns.len()),
            ));
        }
        let mut parsed = cells.iter().map(|c| {
            c.parse::<f64>()
                .map_err(|_| bad(path, format!("line {}: unreadable number {c:?}", lineno + 2)))
        });
        times.push(parsed.next().expect("time column")?);
        for s in series.iter_mut() {
            s.push(parsed.next().expect("column count checked")?);
        }
    }

    let mut map = BTreeMap::new();
    for (name, values) in columns[1..].iter().zip(series) {
        if map.insert(name.to_string(), values).is_some() {
            return Err(bad(path, format!("duplicate column {name:?}")));
        }
    }
    let run_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "diagnostics".into());
    DiagnosticsRecord::from_parts(run_id, times, map)
}

/// Serializes a state as one PFLD snapshot per phenotype plus the shared
/// metadata needed to rebuild it; used by tests and examples that hand
/// densities between processes.
pub fn write_state(state: &MultiState, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, d) in state.densities().iter().enumerate() {
        write_snapshot(d, &dir.join(format!("n_{i:03}.pfld")))?;
    }
    Ok(())
}

/// Loads the phenotype fields written by `write_state` at a given time.
pub fn read_state(dir: &Path, count: usize, time: f64) -> Result<MultiState> {
    let densities = (0..count)
        .map(|i| read_snapshot(&dir.join(format!("n_{i:03}.pfld"))))
        .collect::<Result<Vec<_>>>()?;
    MultiState::new(PhenotypeSet::new(count)?, densities, time)
}

/// Writes `bytes` next to `path` and renames into place so readers never
/// observe a half-written file.
pub(crate) fn write_bytes_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// One human-readable line per simulation outcome, shared by the CLI and the
/// sweep status files.
pub fn summarize_params(params: &SimParams, phenotypes: usize, law: &GrowthLaw) -> String {
    let kind = match law.kind() {
        GrowthKind::Linear => "linear",
        GrowthKind::ExpDecay => "exp-decay",
    };
    format!(
        "N={} k={} nu={} T={} law={kind}",
        phenotypes,
        params.stiffness(),
        params.viscosity(),
        params.horizon()
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn snapshot_header_matches_the_format_definition() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.pfld");
        let g = SpatialGrid::new(1, 256, 10.0).unwrap();
        write_snapshot(&Field::zeros(g), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"PFLD 1 1 256 10\n"));
        assert_eq!(bytes.len(), 16 + 8 * 256);
    }

    #[test]
    fn snapshot_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.pfld");
        let g = SpatialGrid::new(1, 32, 7.25).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut values: Vec<f64> = (0..32).map(|_| rng.gen_range(-3.0..3.0)).collect();
        values[0] = -0.0;
        values[1] = f64::MIN_POSITIVE / 8.0;
        values[2] = 1.0e300;
        let f = Field::new(g, values).unwrap();
        write_snapshot(&f, &path).unwrap();
        let back = read_snapshot(&path).unwrap();
        assert_eq!(back.grid(), g);
        for (a, b) in f.values().iter().zip(back.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn planar_snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.pfld");
        let g = SpatialGrid::new(2, 8, 4.0).unwrap();
        let f = Field::from_fn(g, |x| x[0] + 10.0 * x[1]).unwrap();
        write_snapshot(&f, &path).unwrap();
        let back = read_snapshot(&path).unwrap();
        assert_eq!(back.grid(), g);
        assert_eq!(f.values(), back.values());
        assert!(std::fs::read(&path).unwrap().starts_with(b"PFLD 1 2 8 8 4\n"));
    }

    #[test]
    fn corrupt_snapshots_are_rejected_whole() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.pfld");
        let g = SpatialGrid::new(1, 16, 2.0).unwrap();
        write_snapshot(&Field::constant(g, 1.5).unwrap(), &path).unwrap();
        let good = std::fs::read(&path).unwrap();

        let cases: Vec<Vec<u8>> = vec![
            good[..good.len() - 1].to_vec(),
            [good.clone(), vec![0u8]].concat(),
            {
                let mut b = good.clone();
                b[0] = b'Q';
                b
            },
            b"PFLD 2 1 16 2\n".to_vec(),
            b"PFLD 1 2 16 2\n".to_vec(),
            b"PFLD 1 2 16 8 2\n".to_vec(),
        ];
        for (i, bytes) in cases.iter().enumerate() {
            std::fs::write(&path, bytes).unwrap();
            let err = read_snapshot(&path).unwrap_err();
            assert!(matches!(err, Error::BadFormat { .. }), "case {i}: {err}");
        }
    }

    fn record(times: Vec<f64>, named: &[(&str, Vec<f64>)]) -> DiagnosticsRecord {
        let series = named
            .iter()
            .map(|(n, v)| (n.to_string(), v.clone()))
            .collect();
        DiagnosticsRecord::from_parts("test".into(), times, series).unwrap()
    }

    #[test]
    fn empty_record_writes_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_diagnostics(&record(vec![], &[("mass", vec![])]), &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "time,mass\n");
    }

    #[test]
    fn small_record_shape() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_diagnostics(
            &record(vec![0.5], &[("a", vec![1.0]), ("b", vec![2.0])]),
            &path,
        )
        .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], "time,a,b");
        assert_eq!(lines[1].split(',').count(), 3);
    }

    #[test]
    fn diagnostics_round_trip_is_value_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let times: Vec<f64> = (0..20).map(|j| j as f64 * 0.05).collect();
        let noisy: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0) * 1e-7).collect();
        let big: Vec<f64> = (0..20).map(|_| rng.gen_range(-1e12..1e12)).collect();
        let rec = record(times.clone(), &[("noisy", noisy), ("big", big)]);
        write_diagnostics(&rec, &path).unwrap();
        let back = read_diagnostics(&path).unwrap();
        assert_eq!(back.times(), rec.times());
        for (name, values) in rec.series() {
            let b = back.get(name).unwrap();
            for (x, y) in values.iter().zip(b) {
                assert_eq!(x.to_bits(), y.to_bits(), "{name}");
            }
        }
    }

    #[test]
    fn malformed_diagnostics_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        for text in [
            "mass,time\n",
            "time,a\n0.0\n",
            "time,a\n0.0,zebra\n",
            "time,a,a\n0.0,1.0,2.0\n",
        ] {
            std::fs::write(&path, text).unwrap();
            assert!(read_diagnostics(&path).is_err(), "{text:?}");
        }
    }

    #[test]
    fn state_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = SpatialGrid::new(1, 16, 4.0).unwrap();
        let state = MultiState::homogeneous(g, &[0.25, 0.5]).unwrap();
        write_state(&state, dir.path()).unwrap();
        let back = read_state(dir.path(), 2, 0.0).unwrap();
        assert_eq!(state, back);
    }
}
