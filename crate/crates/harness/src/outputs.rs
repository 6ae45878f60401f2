//! CSV, Markdown and gnuplot artifacts of a run record. All numbers are
//! written in full-precision scientific notation so that re-emission is
//! byte-identical and every reported value can be found in a CSV cell.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nlslab_core::observables::ObservableSample;
use nlslab_core::{LabError, Result};

use crate::run::RunRecord;

pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> LabError {
    LabError::Resource(format!("cannot write {}: {e}", path.display()))
}

/// Writes a CSV with the given header and numeric rows.
pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn nums(values: &[f64]) -> Vec<String> {
    values.iter().map(|v| num(*v)).collect()
}

pub const CSV_FILES: [&str; 11] = [
    "observables.csv",
    "channels.csv",
    "uloc.csv",
    "scattering.csv",
    "cauchy.csv",
    "integrals.csv",
    "heisenberg.csv",
    "fits.csv",
    "checks.csv",
    "compliance.csv",
    "radiative.csv",
];

/// Writes all artifacts of `record` into `dir` (created if missing).
pub fn emit_outputs(record: &RunRecord, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let s = &record.series;

    write_csv(
        &dir.join("observables.csv"),
        &ObservableSample::COLUMNS,
        s.samples.iter().map(|x| nums(&x.values())),
    )?;
    write_csv(
        &dir.join("channels.csv"),
        &["t", "out", "in", "low", "out_energy", "in_energy", "low_energy"],
        record.channels.iter().map(|c| {
            nums(&[
                c.t,
                c.outgoing,
                c.incoming,
                c.low,
                c.outgoing_energy,
                c.incoming_energy,
                c.low_energy,
            ])
        }),
    )?;
    write_csv(
        &dir.join("uloc.csv"),
        &[
            "t",
            "mass",
            "free_mass",
            "u_loc_mass",
            "cross_term",
            "ext_mass_kappa",
            "ext_energy_mu",
        ],
        record.u_loc.iter().map(|u| {
            nums(&[
                u.t,
                u.mass,
                u.free_mass,
                u.u_loc_mass,
                u.cross_term,
                u.exterior_mass,
                u.exterior_energy,
            ])
        }),
    )?;
    let empty = Vec::new();
    let (times, w_norms) = match &record.scattering {
        Some(sc) => (&sc.times, &sc.w_norms),
        None => (&empty, &empty),
    };
    write_csv(
        &dir.join("scattering.csv"),
        &["t", "w_norm"],
        times.iter().zip(w_norms).map(|(t, w)| nums(&[*t, *w])),
    )?;
    let cauchy: Vec<Vec<String>> = match &record.scattering {
        Some(sc) => (0..sc.cauchy_h1.len())
            .map(|k| nums(&[sc.times[k], sc.times[k + 1], sc.cauchy_l2[k], sc.cauchy_h1[k]]))
            .collect(),
        None => Vec::new(),
    };
    write_csv(
        &dir.join("cauchy.csv"),
        &["t_from", "t_to", "increment_l2", "increment_h1"],
        cauchy,
    )?;
    write_csv(
        &dir.join("integrals.csv"),
        &["t", "interaction_integral", "linfty_q_integral"],
        s.samples
            .iter()
            .enumerate()
            .map(|(k, x)| nums(&[x.t, s.im_running[k], s.linfty_q_running[k]])),
    )?;
    write_csv(
        &dir.join("heisenberg.csv"),
        &["t", "d_abs_moment", "twice_gamma", "residual"],
        record
            .heisenberg
            .iter()
            .map(|h| nums(&[h.t, h.d_abs_moment, h.twice_gamma, h.residual])),
    )?;
    write_csv(
        &dir.join("fits.csv"),
        &["series", "slope", "intercept", "t_min", "t_max", "r2", "points"],
        record.fits.iter().map(|f| {
            let mut row = vec![f.name.clone()];
            row.extend(nums(&[
                f.fit.slope,
                f.fit.intercept,
                f.fit.t_min,
                f.fit.t_max,
                f.fit.r2,
            ]));
            row.push(f.fit.points.to_string());
            row
        }),
    )?;
    write_csv(
        &dir.join("checks.csv"),
        &["check", "value", "threshold", "relation", "status"],
        record.checks.iter().map(|c| {
            vec![
                c.name.clone(),
                num(c.value),
                num(c.threshold),
                c.relation.as_str().to_string(),
                c.status.as_str().to_string(),
            ]
        }),
    )?;
    write_csv(
        &dir.join("compliance.csv"),
        &["exponent", "holds", "constraint"],
        record
            .compliance
            .iter()
            .map(|f| vec![f.name.clone(), f.holds.to_string(), f.constraint.clone()]),
    )?;
    write_csv(
        &dir.join("radiative.csv"),
        &[
            "beta",
            "last_decade_average",
            "trend",
            "final_value",
            "bound",
            "nonradiative",
        ],
        record.radiative.iter().map(|r| {
            let mut row = nums(&[r.beta, r.last_decade_average, r.trend, r.final_value, r.bound]);
            row.push(r.nonradiative.to_string());
            row
        }),
    )?;

    let toml = record.config.to_toml_string()?;
    write_file(&dir.join("config.toml"), &toml)?;
    write_file(&dir.join("summary.md"), &summary_markdown(record))?;
    write_file(&dir.join("plot.gp"), PLOT_SCRIPT)?;
    let json =
        serde_json::to_string_pretty(record).map_err(|e| LabError::Data(format!("cannot encode record: {e}")))?;
    write_file(&dir.join("record.json"), &json)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Markdown report; every number in the tables is a `checks.csv` or
/// `fits.csv` cell.
pub fn summary_markdown(record: &RunRecord) -> String {
    let mut out = String::new();
    let verdict = if record.all_pass() {
        "all checks pass"
    } else {
        "some checks fail"
    };
    let _ = writeln!(out, "# Run summary\n");
    let _ = writeln!(out, "Outcome: {verdict}. Configuration snapshot: `config.toml`.\n");
    let _ = writeln!(out, "## Checks\n");
    let _ = writeln!(out, "Source: `checks.csv`.\n");
    let _ = writeln!(out, "| check | value | threshold | relation | status |");
    let _ = writeln!(out, "|---|---|---|---|---|");
    for c in &record.checks {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} |",
            c.name,
            num(c.value),
            num(c.threshold),
            c.relation.as_str(),
            c.status.as_str()
        );
    }
    let _ = writeln!(out, "\n## Exponent fits\n");
    let _ = writeln!(out, "Source: `fits.csv`.\n");
    let _ = writeln!(out, "| series | slope | r2 | t_min | t_max |");
    let _ = writeln!(out, "|---|---|---|---|---|");
    for f in &record.fits {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} |",
            f.name,
            num(f.fit.slope),
            num(f.fit.r2),
            num(f.fit.t_min),
            num(f.fit.t_max)
        );
    }
    let _ = writeln!(out, "\n## Theorem compliance of the exponents\n");
    let _ = writeln!(out, "Source: `compliance.csv`.\n");
    for f in &record.compliance {
        let mark = if f.holds { "holds" } else { "violated" };
        let _ = writeln!(out, "- {}: {} — `{}`", f.name, mark, f.constraint);
    }
    if let Some(r) = &record.radiative {
        let kind = if r.nonradiative { "nonradiative" } else { "radiative" };
        let _ = writeln!(out, "\n## Classification\n");
        let _ = writeln!(
            out,
            "The exterior current classifies this run as {kind} (`radiative.csv`)."
        );
    }
    let _ = writeln!(
        out,
        "\n## Series\n\n`observables.csv`, `channels.csv`, `uloc.csv`, `scattering.csv`, `cauchy.csv`, `integrals.csv`, `heisenberg.csv`; plot with `gnuplot plot.gp`."
    );
    out
}

const PLOT_SCRIPT: &str = r#"set datafile separator ','
set terminal pngcairo size 1200,800
set key autotitle columnheader
set logscale xy

set output 'observables.png'
set multiplot layout 2,2
plot 'observables.csv' using 1:9 with lines
plot 'observables.csv' using 1:(abs($6)) with lines
plot 'observables.csv' using 1:10 with lines, '' using 1:11 with lines
plot 'integrals.csv' using 1:2 with lines
unset multiplot

set output 'channels.png'
plot 'channels.csv' using 1:2 with linespoints, '' using 1:3 with linespoints, '' using 1:4 with linespoints

set output 'cauchy.png'
plot 'cauchy.csv' using 2:4 with linespoints
"#;

/// Reads `record.json` from a run directory.
pub fn read_record(dir: &Path) -> Result<RunRecord> {
    let path = dir.join("record.json");
    let text = fs::read_to_string(&path).map_err(|e| LabError::Data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| LabError::Data(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ExperimentConfig, GridSection, InitialComponent};
    use crate::run::compute_record;
    use nlslab_core::potential::PotentialKind;

    fn record(zero: bool) -> RunRecord {
        let mut c = ExperimentConfig {
            grid: GridSection {
                n: 256,
                half_length: 32.0,
            },
            ..Default::default()
        };
        c.time.dt = 1e-2;
        c.time.t_end = 2.0;
        c.time.save_stride = 5;
        c.time.sample_times = vec![1.0, 2.0];
        c.physics.potential = PotentialKind::None;
        c.initial_data = if zero {
            Vec::new()
        } else {
            vec![InitialComponent::ShiftedPacket {
                amplitude: 0.5,
                center: 0.0,
                width: 1.0,
                wavenumber: 1.0,
            }]
        };
        compute_record(&c.validate().unwrap()).unwrap()
    }

    fn cells(dir: &Path) -> Vec<String> {
        let mut out = Vec::new();
        for f in CSV_FILES {
            let mut r = csv::Reader::from_path(dir.join(f)).unwrap();
            for rec in r.records() {
                out.extend(rec.unwrap().iter().map(str::to_string));
            }
        }
        out
    }

    #[test]
    fn files_exist_and_parse() {
        let dir = tempfile::tempdir().unwrap();
        let r = record(false);
        emit_outputs(&r, dir.path()).unwrap();
        for f in CSV_FILES
            .iter()
            .chain(&["summary.md", "plot.gp", "record.json", "config.toml"])
        {
            assert!(dir.path().join(f).is_file(), "{f}");
        }
        let mut rdr = csv::Reader::from_path(dir.path().join("observables.csv")).unwrap();
        assert_eq!(rdr.headers().unwrap().len(), 12);
        let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), r.series.len());
        assert!(rows
            .iter()
            .all(|row| row.len() == 12 && row.iter().all(|c| c.parse::<f64>().is_ok())));
        assert_eq!(read_record(dir.path()).unwrap(), r);
    }

    #[test]
    fn re_emission_is_byte_identical() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let r = record(false);
        emit_outputs(&r, a.path()).unwrap();
        emit_outputs(&read_record(a.path()).unwrap(), b.path()).unwrap();
        for f in CSV_FILES.iter().chain(&["summary.md", "plot.gp", "config.toml"]) {
            assert_eq!(
                fs::read(a.path().join(f)).unwrap(),
                fs::read(b.path().join(f)).unwrap(),
                "{f}"
            );
        }
    }

    #[test]
    fn empty_record_gives_header_only_csvs() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = record(true);
        r.series.samples.clear();
        r.series.im_running.clear();
        r.series.linfty_q_running.clear();
        r.heisenberg.clear();
        r.u_loc.clear();
        r.channels.clear();
        r.scattering = None;
        emit_outputs(&r, dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("observables.csv")).unwrap();
        assert_eq!(text, ObservableSample::COLUMNS.join(",") + "\n");
        assert_eq!(
            fs::read_to_string(dir.path().join("channels.csv"))
                .unwrap()
                .lines()
                .count(),
            1
        );
    }

    #[test]
    fn summary_numbers_trace_to_csv_cells() {
        let dir = tempfile::tempdir().unwrap();
        let r = record(false);
        emit_outputs(&r, dir.path()).unwrap();
        let summary = fs::read_to_string(dir.path().join("summary.md")).unwrap();
        let cells = cells(dir.path());
        let mut seen = 0;
        for line in summary
            .lines()
            .filter(|l| l.starts_with("| ") && !l.starts_with("| check") && !l.starts_with("| series"))
        {
            for field in line.split('|').map(str::trim).filter(|f| f.parse::<f64>().is_ok()) {
                assert!(cells.iter().any(|c| c == field), "{field} not in any CSV");
                seen += 1;
            }
        }
        assert!(seen >= 2 * r.checks.len());
    }

    #[test]
    fn unwritable_directory_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let e = emit_outputs(&record(true), &blocker.join("sub")).unwrap_err();
        assert!(matches!(e, LabError::Resource(_)), "{e}");
    }
}
