//! Artifact loading and writing.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use orens::fockspace::{make_state, make_state_with_tolerance};
use orens::noise::NoiseModelFile;
use orens::{DensityMatrix, MeasurementPlan, NoiseModel, OrensError, OutcomeRecord, StateSpec};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

/// Reference device parameters shipped with the binary.
pub const DEVICE_NOISE_JSON: &str = include_str!("../config/device.json");

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_json_value(path: &Path) -> Result<Value> {
    serde_json::from_str(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))
}

/// JSON, or TOML when the extension is `.toml`.
pub fn read_structured<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    } else {
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Creates `path` and hands a buffered writer to `f`.
pub fn write_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut dyn std::io::Write) -> Result<()>,
{
    ensure_parent(path)?;
    let file = fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
    let mut w = std::io::BufWriter::new(file);
    f(&mut w)?;
    std::io::Write::flush(&mut w)?;
    Ok(())
}

/// A bare plan or an optimizer output wrapping one under `plan`.
pub fn load_plan(path: &Path) -> Result<MeasurementPlan> {
    let mut v = read_json_value(path)?;
    if let Some(inner) = v.get_mut("plan") {
        v = inner.take();
    }
    serde_json::from_value(v)
        .with_context(|| format!("{} is not a measurement plan", path.display()))
}

pub fn load_record(path: &Path) -> Result<OutcomeRecord> {
    let file = fs::File::open(path).with_context(|| format!("reading {}", path.display()))?;
    OutcomeRecord::read_csv(file).with_context(|| format!("parsing {}", path.display()))
}

/// `ideal`, `device`, or a path to a noise JSON file.
pub fn load_noise(arg: &str) -> Result<NoiseModel> {
    match arg {
        "ideal" => Ok(NoiseModel::ideal()),
        "device" => Ok(serde_json::from_str::<NoiseModelFile>(DEVICE_NOISE_JSON)?.resolve()?),
        path => {
            let file: NoiseModelFile = read_structured(Path::new(path))?;
            Ok(file.resolve()?)
        }
    }
}

/// A state descriptor (`fock:k`, `sup:j:k:phi`, `cat:alpha:phase`, ...) or
/// a JSON file holding a density matrix or a reconstruction result (its
/// BME estimate is used). Descriptors are truncated to `dim`; leakage above
/// `leakage_tol` (default 1e−6) is an error.
pub fn load_state(
    arg: &str,
    dim: Option<usize>,
    leakage_tol: Option<f64>,
) -> Result<DensityMatrix> {
    let path = Path::new(arg);
    if path.is_file() {
        let mut v = read_json_value(path)?;
        if let Some(inner) = v.get_mut("rho_bme") {
            v = inner.take();
        }
        let rho: DensityMatrix = serde_json::from_value(v)
            .with_context(|| format!("{} is not a density matrix", path.display()))?;
        if let Some(d) = dim {
            if rho.dim() != d {
                return Err(OrensError::DimensionMismatch {
                    expected: d,
                    got: rho.dim(),
                }
                .into());
            }
        }
        return Ok(rho);
    }
    let spec: StateSpec = arg.parse()?;
    let dim = dim
        .ok_or_else(|| OrensError::InvalidParameter(format!("state '{arg}' needs a dimension")))?;
    let rho = match leakage_tol {
        Some(tol) => make_state_with_tolerance(&spec, dim, tol)?,
        None => make_state(&spec, dim)?,
    };
    Ok(rho)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_device_matches_library_device() {
        assert_eq!(load_noise("device").unwrap(), NoiseModel::device());
    }

    #[test]
    fn state_descriptor_and_file() {
        let rho = load_state("fock:1", Some(3), None).unwrap();
        assert!((rho.matrix()[(1, 1)].re - 1.0).abs() < 1e-15);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rho.json");
        write_json(&p, &rho).unwrap();
        let back = load_state(p.to_str().unwrap(), None, None).unwrap();
        assert_eq!(back.matrix(), rho.matrix());
        assert!(load_state(p.to_str().unwrap(), Some(4), None).is_err());
        assert!(load_state("fock:1", None, None).is_err());
    }

    #[test]
    fn plan_wrapped_or_bare() {
        let plan = MeasurementPlan::new(
            2,
            orens::ObservableKind::Fock(1),
            vec![orens::Complex64::new(0.5, 0.0)],
            "t",
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let bare = dir.path().join("bare.json");
        let wrapped = dir.path().join("wrapped.json");
        write_json(&bare, &plan).unwrap();
        write_json(
            &wrapped,
            &serde_json::json!({ "schema": "x", "plan": plan }),
        )
        .unwrap();
        assert_eq!(load_plan(&bare).unwrap(), plan);
        assert_eq!(load_plan(&wrapped).unwrap(), plan);
    }
}
