//! `nvunmix` command-line tool.

mod report;
mod simulate;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nvunmix::basis_fit::{
    f_surface_in, find_full_mixing_field, fit_series, FieldRanges, FieldSeries, FitMode,
};
use nvunmix::decomposition::{decompose, FSearch, ZplArtifactConfig};
use nvunmix::filter::{transmissivity, FilterModel, TransmissivityPair, CONDITIONING_GAP};
use nvunmix::io::{
    format_coefficients, format_f_surface, format_sig, load_filter_table, load_manifest, load_map,
    load_spectrum, plmap_paths, save_map, save_spectrum, NegativePolicy,
};
use nvunmix::map::{field_unmix, filter_unmix, fraction_maps, reconstruction, PLMap, UnmixedMaps};
use nvunmix::render::{map_pgm, map_svg, spectrum_svg, Colormap, RenderStyle};
use nvunmix::spectrum::{BasisPair, Spectrum, WavelengthWindow};
use nvunmix::synth::{FieldMapParams, LetterMapParams, SpectrumParams, SweepParams};
use nvunmix::{Error, Result, Warning};
use serde_json::json;

use crate::report::{pretty, read_report, with_suffix, RunReport};

#[derive(Parser)]
#[command(
    name = "nvunmix",
    version,
    about = "Separate NV0 and NV- photoluminescence in spectra and maps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split a low-field spectrum into NV0 and NV- using a high-field spectrum.
    Decompose(DecomposeArgs),
    /// Fit a field sweep against a basis pair and tabulate f(B1; B2).
    FitSeries(FitSeriesArgs),
    /// Print the long-pass transmissivity of a spectrum.
    Transmissivity(TransmissivityArgs),
    /// Unmix a low/high-field map pair with a known scaling factor.
    UnmixMapField(UnmixFieldArgs),
    /// Unmix an unfiltered/filtered map pair with known transmissivities.
    UnmixMapFilter(UnmixFilterArgs),
    /// Generate synthetic data.
    #[command(subcommand)]
    Simulate(SimulateCommand),
    /// Render spectra or a map to SVG or PGM.
    Render(RenderArgs),
    /// Pretty-print a run report.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Negatives {
    Reject,
    Clamp,
    Allow,
}

impl From<Negatives> for NegativePolicy {
    fn from(n: Negatives) -> Self {
        match n {
            Negatives::Reject => NegativePolicy::Reject,
            Negatives::Clamp => NegativePolicy::Clamp,
            Negatives::Allow => NegativePolicy::Allow,
        }
    }
}

#[derive(Args)]
struct DecomposeArgs {
    #[arg(long)]
    low: PathBuf,
    #[arg(long)]
    high: PathBuf,
    #[arg(long)]
    out_nv0: PathBuf,
    #[arg(long)]
    out_nvm: PathBuf,
    #[arg(long, default_value_t = 637.0)]
    zpl_center: f64,
    /// Inner window `lo:hi` in nm.
    #[arg(long, default_value = "630:644")]
    zpl_window: String,
    /// Width of each edge band in nm.
    #[arg(long, default_value_t = 4.0)]
    edge: f64,
    #[arg(long, default_value = "1:50")]
    f_range: String,
    /// Report path; defaults to `<out-nv0 stem>.report.json`.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Negatives::Reject)]
    negatives: Negatives,
}

#[derive(Args)]
struct FitSeriesArgs {
    #[arg(long)]
    basis_nv0: PathBuf,
    #[arg(long)]
    basis_nvm: PathBuf,
    /// Manifest JSON listing `{b_field_gauss, path}` entries.
    #[arg(long)]
    series: PathBuf,
    /// Output directory for coefficients.csv, f_surface.csv and the report.
    #[arg(long)]
    out: PathBuf,
    /// Plain least squares instead of nonnegative.
    #[arg(long)]
    unconstrained: bool,
    #[arg(long, default_value = "170:550")]
    b1_range: String,
    #[arg(long, default_value = "248:975")]
    b2_range: String,
    /// Tabulate every pair with b2 > b1, ignoring the ranges.
    #[arg(long)]
    all_pairs: bool,
    /// Refine the full-mixing field with a parabola through the minimum.
    #[arg(long)]
    refine: bool,
    #[arg(long, value_enum, default_value_t = Negatives::Reject)]
    negatives: Negatives,
}

#[derive(Args)]
struct TransmissivityArgs {
    #[arg(long)]
    spectrum: PathBuf,
    #[arg(long, default_value_t = 0.9)]
    tmax: f64,
    #[arg(long, default_value_t = 645.0)]
    center: f64,
    #[arg(long, default_value_t = 6.9)]
    width: f64,
    #[arg(long, default_value = "550:850")]
    window: String,
    /// Tabulated filter (`wavelength_nm,transmission`) instead of the sigmoid.
    #[arg(long, conflicts_with_all = ["tmax", "center", "width"])]
    filter_table: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Negatives::Reject)]
    negatives: Negatives,
}

#[derive(Args)]
struct UnmixOutput {
    /// Output stem; writes `<stem>.nv0.*`, `<stem>.nvm.*` and `<stem>.report.json`.
    #[arg(long)]
    out: PathBuf,
    /// Also write per-pixel fractions as `<stem>.frac0.*` and `<stem>.fracm.*`.
    #[arg(long)]
    fractions: bool,
    #[arg(long, value_enum, default_value_t = Negatives::Reject)]
    negatives: Negatives,
}

#[derive(Args)]
struct UnmixFieldArgs {
    #[arg(long)]
    low: PathBuf,
    #[arg(long)]
    high: PathBuf,
    #[arg(long, default_value_t = 6.2)]
    f: f64,
    #[command(flatten)]
    output: UnmixOutput,
}

#[derive(Args)]
struct UnmixFilterArgs {
    #[arg(long)]
    m0: PathBuf,
    #[arg(long)]
    mlpf: PathBuf,
    #[arg(long, default_value_t = 0.3)]
    t0: f64,
    #[arg(long, default_value_t = 0.8)]
    tm: f64,
    #[command(flatten)]
    output: UnmixOutput,
}

#[derive(Args)]
struct SimulateArgs {
    /// Parameter document (JSON object); missing keys take defaults.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Top-level parameter override `key=value` (value parsed as JSON); repeatable.
    #[arg(long = "set")]
    overrides: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum SimulateCommand {
    Spectrum(SimulateArgs),
    Sweep(SimulateArgs),
    LetterMap(SimulateArgs),
    FieldMapPair(SimulateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum CmapArg {
    Gray,
    Viridis,
}

#[derive(Args)]
struct RenderArgs {
    /// One map, or one or more spectra to overlay.
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    /// `.svg`, or `.pgm` for maps.
    #[arg(long)]
    out: PathBuf,
    /// Legend labels for spectra, comma separated; file stems by default.
    #[arg(long, value_delimiter = ',')]
    labels: Vec<String>,
    #[arg(long, value_enum, default_value_t = CmapArg::Gray)]
    colormap: CmapArg,
    /// Fixed colour range `lo:hi` for maps.
    #[arg(long)]
    range: Option<String>,
    /// Mark the 575 nm and 637 nm zero-phonon lines on spectra.
    #[arg(long)]
    zpl_guides: bool,
    /// Set negative map values to zero before rendering.
    #[arg(long)]
    clamp: bool,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    run: PathBuf,
}

fn parse_pair(s: &str, what: &str) -> Result<(f64, f64)> {
    let bad = || Error::validation(format!("{what}: expected `lo:hi`, got {s:?}"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(bad());
    }
    Ok((a, b))
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent().filter(|d| !d.as_os_str().is_empty()) {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))
        }
        None => Ok(()),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn run_decompose(a: &DecomposeArgs) -> Result<()> {
    let (inner_lo, inner_hi) = parse_pair(&a.zpl_window, "--zpl-window")?;
    let (f_min, f_max) = parse_pair(&a.f_range, "--f-range")?;
    let cfg = ZplArtifactConfig {
        center: a.zpl_center,
        inner_lo,
        inner_hi,
        edge_width: a.edge,
    };
    cfg.validate()?;
    let search = FSearch {
        f_min,
        f_max,
        ..FSearch::default()
    };
    let mut report = RunReport::new(
        "decompose",
        json!({
            "zpl_center": cfg.center, "zpl_window": [cfg.inner_lo, cfg.inner_hi], "edge": cfg.edge_width,
            "f_range": [search.f_min, search.f_max], "coarse_steps": search.coarse_steps,
            "tolerance": search.tolerance,
        }),
    );
    let low = load_spectrum(&a.low, a.negatives.into())?;
    let high = load_spectrum(&a.high, a.negatives.into())?;
    report.input(&a.low)?;
    report.input(&a.high)?;

    let r = decompose(&low, &high, &cfg, &search)?;
    for p in [&a.out_nv0, &a.out_nvm] {
        create_parent(p)?;
    }
    save_spectrum(&a.out_nv0, &r.nv0)?;
    save_spectrum(&a.out_nvm, &r.nvminus)?;
    report.output(&a.out_nv0);
    report.output(&a.out_nvm);
    report.diag("f", r.f);
    report.diag("zpl_metric", r.zpl_metric);
    report.diag("nv0_zpl575_score", r.nv0_zpl_score);
    report.warn(&r.warnings);
    let path = a
        .report
        .clone()
        .unwrap_or_else(|| a.out_nv0.with_extension("report.json"));
    report.write(&path)?;
    println!("f = {}", format_sig(r.f, 6));
    print_warnings(&r.warnings);
    Ok(())
}

fn run_fit_series(a: &FitSeriesArgs) -> Result<()> {
    let mode = if a.unconstrained {
        FitMode::Unconstrained
    } else {
        FitMode::NonNegative
    };
    let ranges = if a.all_pairs {
        FieldRanges::unbounded()
    } else {
        FieldRanges {
            b1: parse_pair(&a.b1_range, "--b1-range")?,
            b2: parse_pair(&a.b2_range, "--b2-range")?,
        }
    };
    let mut report = RunReport::new(
        "fit-series",
        json!({
            "mode": mode, "all_pairs": a.all_pairs, "refine": a.refine,
            "b1_range": [ranges.b1.0, ranges.b1.1], "b2_range": [ranges.b2.0, ranges.b2.1],
        }),
    );
    let s0 = load_spectrum(&a.basis_nv0, a.negatives.into())?;
    let sm = load_spectrum(&a.basis_nvm, a.negatives.into())?;
    report.input(&a.basis_nv0)?;
    report.input(&a.basis_nvm)?;
    report.input(&a.series)?;
    let basis = BasisPair::from_spectra(&s0, &sm)?;
    let manifest = load_manifest(&a.series)?;
    let mut entries = Vec::with_capacity(manifest.len());
    for e in &manifest {
        entries.push((e.b_field_gauss, load_spectrum(&e.path, a.negatives.into())?));
        report.input(&e.path)?;
    }
    let series = FieldSeries::new(entries)?;
    let table = fit_series(&series, &basis, mode)?;
    let surface = f_surface_in(&table, &ranges)?;

    fs::create_dir_all(&a.out).map_err(|e| Error::Io(format!("{}: {e}", a.out.display())))?;
    let coef = a.out.join("coefficients.csv");
    let surf = a.out.join("f_surface.csv");
    write_text(&coef, &format_coefficients(&table))?;
    write_text(&surf, &format_f_surface(&surface))?;
    report.output(&coef);
    report.output(&surf);

    report.diag("rows", table.rows.len());
    report.diag("f_points", surface.points.len());
    report.diag("singular_pairs", &surface.singular);
    match find_full_mixing_field(&table, a.refine) {
        Ok(b) => {
            report.diag("full_mixing_field_gauss", b.value);
            report.warn(&b.warnings);
            println!("full mixing field = {} G", format_sig(b.value, 6));
        }
        Err(e @ Error::NoMinimum(_)) | Err(e @ Error::Validation(_)) => {
            report.diag("full_mixing_field_gauss", None::<f64>);
            report.diag("full_mixing_note", e.to_string());
            println!("full mixing field: {e}");
        }
        Err(e) => return Err(e),
    }
    report.write(&a.out.join("fit-series.report.json"))?;
    Ok(())
}

fn run_transmissivity(a: &TransmissivityArgs) -> Result<()> {
    let (lo, hi) = parse_pair(&a.window, "--window")?;
    let w = WavelengthWindow::new(lo, hi)?;
    let s = load_spectrum(&a.spectrum, a.negatives.into())?;
    let t = match &a.filter_table {
        Some(p) => transmissivity(&s, &load_filter_table(p)?, w)?,
        None => transmissivity(&s, &FilterModel::new(a.tmax, a.center, a.width)?, w)?,
    };
    println!("{}", format_sig(t, 6));
    Ok(())
}

fn map_diagnostics(report: &mut RunReport, u: &UnmixedMaps) {
    report.diag("negative_pixel_count", u.negative_pixel_count);
    report.diag("nv0_min", u.nv0.min());
    report.diag("nv0_max", u.nv0.max());
    report.diag("nvm_min", u.nvminus.min());
    report.diag("nvm_max", u.nvminus.max());
}

fn write_unmixed(
    report: &mut RunReport,
    o: &UnmixOutput,
    u: &UnmixedMaps,
    total: &PLMap,
    filtered: Option<(&PLMap, &TransmissivityPair)>,
) -> Result<()> {
    create_parent(&o.out)?;
    for (suffix, m) in [("nv0", &u.nv0), ("nvm", &u.nvminus)] {
        let (json, csv) = save_map(with_suffix(&o.out, suffix), m)?;
        report.output(&json);
        report.output(&csv);
    }
    let rec = reconstruction(u, total, filtered)?;
    report.diag("reconstruction_residual", rec.sum_residual);
    if let Some(r) = rec.filtered_residual {
        report.diag("reconstruction_filtered_residual", r);
    }
    map_diagnostics(report, u);
    if o.fractions {
        let fr = fraction_maps(u, total)?;
        for (suffix, m) in [("frac0", &fr.frac0), ("fracm", &fr.fracminus)] {
            let (json, csv) = save_map(with_suffix(&o.out, suffix), m)?;
            report.output(&json);
            report.output(&csv);
        }
        report.diag("zero_total_pixels", fr.zero_total.len());
        if !fr.zero_total.is_empty() {
            report.warn(&[Warning::ZeroTotal {
                count: fr.zero_total.len(),
            }]);
        }
    }
    if u.negative_pixel_count > 0 {
        let min = u.nv0.min().min(u.nvminus.min());
        report.warn(&[Warning::NegativeExcursion {
            count: u.negative_pixel_count,
            min,
        }]);
    }
    report.write(&with_suffix(&o.out, "report.json"))?;
    println!("negative pixels: {}", u.negative_pixel_count);
    Ok(())
}

fn run_unmix_field(a: &UnmixFieldArgs) -> Result<()> {
    let mut report = RunReport::new(
        "unmix-map-field",
        json!({ "f": a.f, "fractions": a.output.fractions }),
    );
    let low = load_map(&a.low, a.output.negatives.into())?;
    let high = load_map(&a.high, a.output.negatives.into())?;
    for p in [&a.low, &a.high] {
        let (json, csv) = plmap_paths(p);
        report.input(&json)?;
        report.input(&csv)?;
    }
    let u = field_unmix(&low, &high, a.f)?;
    report.diag("f", a.f);
    write_unmixed(&mut report, &a.output, &u, &low, None)
}

fn run_unmix_filter(a: &UnmixFilterArgs) -> Result<()> {
    let t = TransmissivityPair::new(a.t0, a.tm)?;
    let mut report = RunReport::new(
        "unmix-map-filter",
        json!({ "t0": t.t0, "tminus": t.tminus, "fractions": a.output.fractions }),
    );
    let m0 = load_map(&a.m0, a.output.negatives.into())?;
    let mlpf = load_map(&a.mlpf, a.output.negatives.into())?;
    for p in [&a.m0, &a.mlpf] {
        let (json, csv) = plmap_paths(p);
        report.input(&json)?;
        report.input(&csv)?;
    }
    let u = filter_unmix(&m0, &mlpf, &t)?;
    report.diag("t0", t.t0);
    report.diag("tminus", t.tminus);
    if t.gap() < CONDITIONING_GAP {
        let w = [Warning::Conditioning {
            t0: t.t0,
            tminus: t.tminus,
        }];
        report.warn(&w);
        print_warnings(&w);
    }
    write_unmixed(&mut report, &a.output, &u, &m0, Some((&mlpf, &t)))
}

fn run_simulate(cmd: &SimulateCommand) -> Result<()> {
    let (name, a) = match cmd {
        SimulateCommand::Spectrum(a) => ("spectrum", a),
        SimulateCommand::Sweep(a) => ("sweep", a),
        SimulateCommand::LetterMap(a) => ("letter-map", a),
        SimulateCommand::FieldMapPair(a) => ("field-map-pair", a),
    };
    let mut report = RunReport::new(&format!("simulate {name}"), json!({}));
    let params = a.params.as_deref();
    macro_rules! go {
        ($ty:ty, $f:path) => {{
            let p: $ty = simulate::resolve_params(params, &a.overrides, &mut report)?;
            report.parameters = json!({ "seed": a.seed, "params": p });
            $f(&p, a.seed, &a.out, &mut report)?;
        }};
    }
    match cmd {
        SimulateCommand::Spectrum(_) => go!(SpectrumParams, simulate::spectrum),
        SimulateCommand::Sweep(_) => go!(SweepParams, simulate::sweep),
        SimulateCommand::LetterMap(_) => go!(LetterMapParams, simulate::letter_map),
        SimulateCommand::FieldMapPair(_) => go!(FieldMapParams, simulate::field_map_pair),
    }
    report.write(&a.out.join("report.json"))?;
    println!(
        "wrote {} files to {}",
        report.outputs.len(),
        a.out.display()
    );
    Ok(())
}

fn is_map(path: &Path) -> bool {
    let (json, csv) = plmap_paths(path);
    json.is_file() && csv.is_file()
}

fn run_render(a: &RenderArgs) -> Result<()> {
    let range = a
        .range
        .as_deref()
        .map(|r| parse_pair(r, "--range"))
        .transpose()?;
    let style = RenderStyle {
        colormap: match a.colormap {
            CmapArg::Gray => Colormap::Gray,
            CmapArg::Viridis => Colormap::Viridis,
        },
        range,
        zpl_guides: a.zpl_guides,
        ..RenderStyle::default()
    };
    let ext = a
        .out
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    let bytes = if is_map(&a.input[0]) {
        if a.input.len() > 1 {
            return Err(Error::validation("render takes a single map"));
        }
        let mut m = load_map(&a.input[0], NegativePolicy::Allow)?;
        if a.clamp {
            m = m.map_values(|v| v.max(0.0))?;
        }
        match ext.as_str() {
            "svg" => map_svg(&m, &style).into_bytes(),
            "pgm" => map_pgm(&m, &style),
            _ => return Err(Error::validation("map output must end in .svg or .pgm")),
        }
    } else {
        if ext != "svg" {
            return Err(Error::validation("spectrum output must end in .svg"));
        }
        let spectra = a
            .input
            .iter()
            .map(|p| load_spectrum(p, NegativePolicy::Allow))
            .collect::<Result<Vec<Spectrum>>>()?;
        let labels: Vec<String> = a
            .input
            .iter()
            .enumerate()
            .map(|(i, p)| {
                a.labels.get(i).cloned().unwrap_or_else(|| {
                    p.file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_default()
                })
            })
            .collect();
        let series: Vec<(&str, &Spectrum)> = labels
            .iter()
            .map(String::as_str)
            .zip(spectra.iter())
            .collect();
        spectrum_svg(&series, &style).into_bytes()
    };
    create_parent(&a.out)?;
    fs::write(&a.out, bytes).map_err(|e| Error::Io(format!("{}: {e}", a.out.display())))
}

fn print_warnings(warnings: &[Warning]) {
    for w in warnings {
        eprintln!(
            "warning: {}",
            serde_json::to_string(w).expect("warning serializes")
        );
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("NVUNMIX_THREADS") {
        let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            Error::validation(format!(
                "NVUNMIX_THREADS must be a positive integer, got {v:?}"
            ))
        })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::validation(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    configure_threads()?;
    match &cli.command {
        Command::Decompose(a) => run_decompose(a),
        Command::FitSeries(a) => run_fit_series(a),
        Command::Transmissivity(a) => run_transmissivity(a),
        Command::UnmixMapField(a) => run_unmix_field(a),
        Command::UnmixMapFilter(a) => run_unmix_filter(a),
        Command::Simulate(c) => run_simulate(c),
        Command::Render(a) => run_render(a),
        Command::Report(a) => {
            print!("{}", pretty(&read_report(&a.run)?));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
