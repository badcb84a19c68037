use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::integrate::{Coupling, SimState};
use super::simulate::{Sample, SimParams, SplitCounts, System, TrajectoryDataset};
use crate::error::{Error, Result};
use crate::o3::Vec3;

pub const FORMAT: &str = "segnn-nbody/1";
pub const DTYPE: &str = "f64le";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileEntry {
    pub shape: Vec<usize>,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub dtype: String,
    pub seed: u64,
    pub counts: SplitCounts,
    pub num_samples: usize,
    pub num_particles: usize,
    pub params: SimParams,
    pub files: BTreeMap<String, FileEntry>,
}

fn fail(path: &Path, reason: impl Into<String>) -> Error {
    Error::Dataset {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn encode(values: impl Iterator<Item = f64>) -> Vec<u8> {
    values.flat_map(f64::to_le_bytes).collect()
}

fn vectors<'a>(rows: impl Iterator<Item = &'a Vec<Vec3>>) -> Vec<u8> {
    encode(rows.flat_map(|r| r.iter().flatten().copied()))
}

/// Writes `manifest.json` and the payloads into `dir`, creating it if
/// needed. Output bytes depend only on the dataset.
pub fn write_dataset(ds: &TrajectoryDataset, dir: &Path) -> Result<Manifest> {
    let (s, n) = (ds.samples.len(), ds.params.num_particles);
    if s != ds.counts.total() {
        return Err(fail(dir, format!("{s} samples but counts sum to {}", ds.counts.total())));
    }
    let mut payloads: Vec<(String, Vec<usize>, Vec<u8>)> = vec![
        ("positions.bin".into(), vec![s, n, 3], vectors(ds.samples.iter().map(|x| &x.input.positions))),
        ("velocities.bin".into(), vec![s, n, 3], vectors(ds.samples.iter().map(|x| &x.input.velocities))),
        (
            format!("{}.bin", ds.params.coupling_name()),
            vec![s, n],
            encode(ds.samples.iter().flat_map(|x| x.input.coupling.values().iter().copied())),
        ),
        ("targets_pos.bin".into(), vec![s, n, 3], vectors(ds.samples.iter().map(|x| &x.target_positions))),
    ];
    if ds.params.system == System::Gravity {
        let forces: Vec<&Vec<Vec3>> = ds
            .samples
            .iter()
            .map(|x| x.target_forces.as_ref().ok_or_else(|| fail(dir, "gravity sample without forces")))
            .collect::<Result<_>>()?;
        payloads.push(("targets_force.bin".into(), vec![s, n, 3], vectors(forces.into_iter())));
    }
    for (name, shape, bytes) in &payloads {
        if bytes.len() != shape.iter().product::<usize>() * 8 {
            return Err(fail(dir, format!("{name}: particle count differs from parameters")));
        }
    }

    fs::create_dir_all(dir)?;
    let mut files = BTreeMap::new();
    for (name, shape, bytes) in payloads {
        fs::write(dir.join(&name), &bytes)?;
        files.insert(
            name,
            FileEntry {
                shape,
                sha256: hex::encode(Sha256::digest(&bytes)),
            },
        );
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        dtype: DTYPE.into(),
        seed: ds.seed,
        counts: ds.counts,
        num_samples: s,
        num_particles: n,
        params: ds.params.clone(),
        files,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(dir.join("manifest.json"), text)?;
    Ok(manifest)
}

fn load(dir: &Path, manifest: &Manifest, name: &str, shape: &[usize]) -> Result<Vec<f64>> {
    let path: PathBuf = dir.join(name);
    let entry = manifest
        .files
        .get(name)
        .ok_or_else(|| fail(&path, "missing from manifest"))?;
    if entry.shape != shape {
        return Err(fail(&path, format!("shape {:?}, expected {shape:?}", entry.shape)));
    }
    let bytes = fs::read(&path).map_err(|e| fail(&path, e.to_string()))?;
    let digest = hex::encode(Sha256::digest(&bytes));
    if digest != entry.sha256 {
        return Err(fail(&path, format!("checksum mismatch: manifest {}, payload {digest}", entry.sha256)));
    }
    let expected = shape.iter().product::<usize>() * 8;
    if bytes.len() != expected {
        return Err(fail(&path, format!("{} bytes, expected {expected}", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

fn rows(flat: &[f64], s: usize, n: usize) -> Vec<Vec<Vec3>> {
    (0..s)
        .map(|i| (0..n).map(|p| {
            let o = (i * n + p) * 3;
            [flat[o], flat[o + 1], flat[o + 2]]
        }).collect())
        .collect()
}

/// The manifest of a dataset directory, without touching the payloads.
pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let manifest_path = dir.join("manifest.json");
    let text = fs::read_to_string(&manifest_path).map_err(|e| fail(&manifest_path, e.to_string()))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| fail(&manifest_path, e.to_string()))?;
    if manifest.format != FORMAT || manifest.dtype != DTYPE {
        return Err(fail(
            &manifest_path,
            format!("unsupported format {} / dtype {}", manifest.format, manifest.dtype),
        ));
    }
    manifest.params.validate()?;
    Ok(manifest)
}

/// Reads a directory written by [`write_dataset`], verifying every payload
/// against the manifest.
pub fn read_dataset(dir: &Path) -> Result<TrajectoryDataset> {
    let manifest_path = dir.join("manifest.json");
    let manifest = read_manifest(dir)?;
    let (s, n) = (manifest.num_samples, manifest.num_particles);
    if s != manifest.counts.total() || n != manifest.params.num_particles {
        return Err(fail(&manifest_path, "sample or particle counts are inconsistent"));
    }
    let params = &manifest.params;
    let positions = rows(&load(dir, &manifest, "positions.bin", &[s, n, 3])?, s, n);
    let velocities = rows(&load(dir, &manifest, "velocities.bin", &[s, n, 3])?, s, n);
    let coupling = load(dir, &manifest, &format!("{}.bin", params.coupling_name()), &[s, n])?;
    let targets = rows(&load(dir, &manifest, "targets_pos.bin", &[s, n, 3])?, s, n);
    let forces = match params.system {
        System::Gravity => Some(rows(&load(dir, &manifest, "targets_force.bin", &[s, n, 3])?, s, n)),
        System::Charged => None,
    };
    let time = params.snapshot_time(params.input_snapshot);
    let mut samples = Vec::with_capacity(s);
    for (i, ((x, v), t)) in positions.into_iter().zip(velocities).zip(targets).enumerate() {
        let c = coupling[i * n..(i + 1) * n].to_vec();
        let c = match params.system {
            System::Charged => Coupling::Charges(c),
            System::Gravity => Coupling::Masses(c),
        };
        let mut input = SimState::new(x, v, c)?;
        input.time = time;
        samples.push(Sample {
            input,
            target_positions: t,
            target_forces: forces.as_ref().map(|f| f[i].clone()),
        });
    }
    Ok(TrajectoryDataset {
        params: manifest.params,
        seed: manifest.seed,
        counts: manifest.counts,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nbody::generate;

    fn small(system: System) -> TrajectoryDataset {
        let params = match system {
            System::Charged => SimParams {
                steps: 100,
                snapshot_every: 100,
                ..SimParams::charged()
            },
            System::Gravity => SimParams {
                num_particles: 7,
                steps: 50,
                snapshot_every: 10,
                ..SimParams::gravity()
            },
        };
        generate(&params, SplitCounts { train: 3, val: 1, test: 2 }, 77).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        for system in [System::Charged, System::Gravity] {
            let ds = small(system);
            let dir = tempfile::tempdir().unwrap();
            let manifest = write_dataset(&ds, dir.path()).unwrap();
            assert_eq!(manifest.seed, 77);
            let back = read_dataset(dir.path()).unwrap();
            assert_eq!(back, ds);
            let other = tempfile::tempdir().unwrap();
            write_dataset(&back, other.path()).unwrap();
            for name in manifest.files.keys().map(String::as_str).chain(["manifest.json"]) {
                let a = fs::read(dir.path().join(name)).unwrap();
                let b = fs::read(other.path().join(name)).unwrap();
                assert_eq!(a, b, "{name} differs");
            }
        }
    }

    #[test]
    fn payload_files_follow_system() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_dataset(&small(System::Charged), dir.path()).unwrap();
        let names: Vec<&str> = m.files.keys().map(String::as_str).collect();
        assert_eq!(names, ["charges.bin", "positions.bin", "targets_pos.bin", "velocities.bin"]);
        let dir = tempfile::tempdir().unwrap();
        let m = write_dataset(&small(System::Gravity), dir.path()).unwrap();
        assert!(m.files.contains_key("masses.bin") && m.files.contains_key("targets_force.bin"));
        assert_eq!(m.files["positions.bin"].shape, vec![6, 7, 3]);
    }

    #[test]
    fn truncated_payload_fails_checksum() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&small(System::Charged), dir.path()).unwrap();
        let path = dir.path().join("velocities.bin");
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        let err = read_dataset(dir.path()).unwrap_err().to_string();
        assert!(err.contains("checksum"), "{err}");
    }

    #[test]
    fn flipped_byte_fails_checksum() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&small(System::Gravity), dir.path()).unwrap();
        let path = dir.path().join("targets_force.bin");
        let mut bytes = fs::read(&path).unwrap();
        bytes[3] ^= 1;
        fs::write(&path, &bytes).unwrap();
        assert!(read_dataset(dir.path()).is_err());
    }

    #[test]
    fn missing_manifest_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(Error::Dataset { .. })));
    }
}
