use std::fs;
use std::path::Path;

use nvunmix::basis_fit::{CoefficientRow, CoefficientTable};
use nvunmix::filter::TransmissivityPair;
use nvunmix::io::{format_coefficients, format_manifest, save_map, save_spectrum, ManifestEntry};
use nvunmix::map::PLMap;
use nvunmix::synth::{
    compose_filter_maps, default_letter_masks, make_basis, make_field_map_pair, make_letter_map,
    make_spectrum, make_sweep, poisson_map, rng_for, FieldMapParams, LetterMapParams,
    SpectrumParams, SweepParams,
};
use nvunmix::{Error, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::report::RunReport;

/// Effective parameters: built-in defaults, overlaid by the params file,
/// overlaid by `--set key=value` flags.
pub fn resolve_params<T: Serialize + DeserializeOwned + Default>(
    file: Option<&Path>,
    overrides: &[String],
    report: &mut RunReport,
) -> Result<T> {
    let mut doc = serde_json::to_value(T::default()).expect("defaults serialize");
    if let Some(path) = file {
        let text =
            fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let given: Value = serde_json::from_str(&text)
            .map_err(|e| Error::parse(e.line(), format!("params: {e}")))?;
        let Value::Object(given) = given else {
            return Err(Error::parse(1, "params document must be a JSON object"));
        };
        report.input(path)?;
        let obj = doc.as_object_mut().expect("params are objects");
        for (k, v) in given {
            obj.insert(k, v);
        }
    }
    for kv in overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::validation(format!("--set expects key=value, got {kv:?}")))?;
        let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
        doc.as_object_mut()
            .expect("params are objects")
            .insert(k.to_string(), value);
    }
    serde_json::from_value(doc).map_err(|e| Error::validation(format!("params: {e}")))
}

fn mkdir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn put_map(report: &mut RunReport, out: &Path, name: &str, m: &PLMap) -> Result<()> {
    let (json, csv) = save_map(out.join(name), m)?;
    report.output(&json);
    report.output(&csv);
    Ok(())
}

pub fn spectrum(p: &SpectrumParams, seed: u64, out: &Path, report: &mut RunReport) -> Result<()> {
    let grid = p.grid.points()?;
    let clean = make_spectrum(&p.model, &grid, p.total_counts)?;
    let s = p.noise.apply(&clean, &mut rng_for(seed, 0))?;
    mkdir(out)?;
    let path = out.join("spectrum.csv");
    save_spectrum(&path, &s)?;
    report.output(&path);
    report.diag("points", s.len());
    report.diag("peak", s.max_intensity());
    Ok(())
}

pub fn sweep(p: &SweepParams, seed: u64, out: &Path, report: &mut RunReport) -> Result<()> {
    let grid = p.grid.points()?;
    let series = make_sweep(&p.fields, &p.response, &p.shapes, &grid, &p.noise, seed)?;
    let basis = make_basis(&p.shapes.nv0, &p.shapes.nvminus, &grid)?;
    mkdir(&out.join("spectra"))?;

    for (name, s) in [
        ("basis_nv0.csv", basis.s0()),
        ("basis_nvm.csv", basis.sminus()),
    ] {
        let path = out.join(name);
        save_spectrum(&path, s)?;
        report.output(&path);
    }
    let mut entries = Vec::new();
    let mut truth = Vec::new();
    for (i, (b, s)) in series.entries().iter().enumerate() {
        let rel = Path::new("spectra").join(format!("{i:03}_{b:.1}G.csv"));
        let path = out.join(&rel);
        save_spectrum(&path, s)?;
        report.output(&path);
        entries.push(ManifestEntry {
            b_field_gauss: *b,
            path: rel,
        });
        truth.push(CoefficientRow {
            b_gauss: *b,
            c0: p.response.c0_const,
            cminus: p.response.cminus_at(*b)?,
            residual: 0.0,
        });
    }
    let manifest = out.join("manifest.json");
    write(&manifest, &format_manifest(&entries))?;
    report.output(&manifest);
    let truth_path = out.join("truth_coefficients.csv");
    write(
        &truth_path,
        &format_coefficients(&CoefficientTable::from_rows(truth)),
    )?;
    report.output(&truth_path);
    report.diag("fields", series.len());
    Ok(())
}

fn maybe_noisy(m: PLMap, exposure: Option<f64>, seed: u64, stream: u64) -> Result<PLMap> {
    match exposure {
        Some(e) => poisson_map(&m, e, seed, stream),
        None => Ok(m),
    }
}

pub fn letter_map(
    p: &LetterMapParams,
    seed: u64,
    out: &Path,
    report: &mut RunReport,
) -> Result<()> {
    let (a, b) = default_letter_masks(p.width, p.height)?;
    let (nv0, nvm) = make_letter_map(&a, &b, p.pl_nv0, p.pl_nvm, p.pixel_pitch_um)?;
    let t = TransmissivityPair::new(p.t0, p.tminus)?;
    let (m0, mlpf) = compose_filter_maps(&nv0, &nvm, &t)?;
    let m0 = maybe_noisy(m0, p.exposure_s, seed, 0)?;
    let mlpf = maybe_noisy(mlpf, p.exposure_s, seed, 1)?;
    mkdir(out)?;
    for (name, m) in [
        ("truth_nv0", &nv0),
        ("truth_nvm", &nvm),
        ("m0", &m0),
        ("mlpf", &mlpf),
    ] {
        put_map(report, out, name, m)?;
    }
    report.diag("nv0_pixels", a.count());
    report.diag("nvm_pixels", b.count());
    Ok(())
}

pub fn field_map_pair(
    p: &FieldMapParams,
    seed: u64,
    out: &Path,
    report: &mut RunReport,
) -> Result<()> {
    let (a, b) = default_letter_masks(p.width, p.height)?;
    let (nv0, nvm) = make_letter_map(&a, &b, p.pl_nv0, p.pl_nvm, p.pixel_pitch_um)?;
    let (low, high) = make_field_map_pair(&nv0, &nvm, p.suppression)?;
    let low = maybe_noisy(low, p.exposure_s, seed, 0)?;
    let high = maybe_noisy(high, p.exposure_s, seed, 1)?;
    mkdir(out)?;
    for (name, m) in [
        ("truth_nv0", &nv0),
        ("truth_nvm", &nvm),
        ("low", &low),
        ("high", &high),
    ] {
        put_map(report, out, name, m)?;
    }
    report.diag("implied_f", 1.0 / p.suppression);
    Ok(())
}
