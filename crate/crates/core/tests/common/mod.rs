//! Fixtures shared by the golden-file tests.

use std::path::PathBuf;

use nvunmix::map::PLMap;
use nvunmix::render::{map_pgm, map_svg, spectrum_svg, Colormap, RenderStyle};
use nvunmix::spectrum::Spectrum;
use nvunmix::synth::{make_spectrum, GridSpec, SpectralShapeModel};

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("golden")
}

fn fixture_spectra() -> (Spectrum, Spectrum) {
    let g = GridSpec {
        start: 540.0,
        stop: 860.0,
        step: 2.0,
    }
    .points()
    .unwrap();
    (
        make_spectrum(&SpectralShapeModel::nv0_default(), &g, 4.0e5).unwrap(),
        make_spectrum(&SpectralShapeModel::nvminus_default(), &g, 1.0e6).unwrap(),
    )
}

fn fixture_map() -> PLMap {
    let (w, h) = (24, 16);
    let values = (0..w * h)
        .map(|i| {
            let (x, y) = ((i % w) as f64, (i / w) as f64);
            1.0e3 * (1.0 + (x / 4.0).sin() * (y / 3.0).cos())
        })
        .collect();
    PLMap::new(w, h, 0.25, values).unwrap()
}

/// `(file name, bytes)` for every golden artifact.
pub fn golden_artifacts() -> Vec<(&'static str, Vec<u8>)> {
    let (nv0, nvm) = fixture_spectra();
    let guides = RenderStyle {
        zpl_guides: true,
        ..RenderStyle::default()
    };
    let viridis = RenderStyle {
        colormap: Colormap::Viridis,
        ..RenderStyle::default()
    };
    let m = fixture_map();
    vec![
        (
            "spectra.svg",
            spectrum_svg(&[("NV0", &nv0), ("NV-", &nvm)], &guides).into_bytes(),
        ),
        (
            "map_gray.svg",
            map_svg(&m, &RenderStyle::default()).into_bytes(),
        ),
        ("map_viridis.svg", map_svg(&m, &viridis).into_bytes()),
        ("map.pgm", map_pgm(&m, &RenderStyle::default())),
    ]
}

/// Compares each artifact with its golden file. With `UPDATE_GOLDEN=1` the
/// golden files are rewritten instead. Returns the names that differ.
pub fn check_golden() -> Vec<String> {
    let dir = golden_dir();
    let update = std::env::var("UPDATE_GOLDEN").is_ok_and(|v| v == "1");
    let mut bad = Vec::new();
    for (name, bytes) in golden_artifacts() {
        let path = dir.join(name);
        if update {
            std::fs::create_dir_all(&dir).unwrap();
            std::fs::write(&path, &bytes).unwrap();
            continue;
        }
        match std::fs::read(&path) {
            Ok(want) if want == bytes => {}
            _ => bad.push(name.to_string()),
        }
    }
    bad
}
