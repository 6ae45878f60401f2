//! Cartesian parameter sweeps over dotted configuration paths, executed on
//! a bounded thread pool and merged into one aggregate CSV.

use std::path::{Path, PathBuf};

use nlslab_core::{LabError, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{parse_error, ExperimentConfig, LoadedConfig};
use crate::outputs::{num, write_csv};
use crate::run::{run_experiment, RunRecord};

/// Environment variable that overrides the configured parallelism.
pub const THREADS_ENV: &str = "NLSLAB_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    /// Dotted path such as `physics.p` or `initial_data.0.mass`.
    pub name: String,
    pub values: Vec<toml::Value>,
}

fn default_parallelism() -> usize {
    1
}
fn default_max_runs() -> usize {
    64
}
fn default_sweep_dir() -> PathBuf {
    PathBuf::from("sweep")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Base experiment configuration, relative to the sweep file.
    pub base: PathBuf,
    #[serde(default)]
    pub axes: Vec<Axis>,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default = "default_max_runs")]
    pub max_runs: usize,
    #[serde(default = "default_sweep_dir")]
    pub output_dir: PathBuf,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl SweepSpec {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn size(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product()
    }

    /// Threads to use: `NLSLAB_THREADS` if set and valid, else `parallelism`.
    pub fn threads(&self) -> usize {
        std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&n| n > 0)
            .unwrap_or(self.parallelism)
            .max(1)
    }
}

pub fn load_sweep(path: &Path) -> Result<SweepSpec> {
    let text =
        std::fs::read_to_string(path).map_err(|e| LabError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut spec: SweepSpec = toml::from_str(&text).map_err(|e| parse_error(&text, &e))?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    // Absolute, so per-run output directories are not re-based on the
    // base config's directory.
    spec.base_dir = std::path::absolute(&dir).unwrap_or(dir);
    if spec.parallelism == 0 {
        return Err(LabError::Config("parallelism must be at least 1".into()));
    }
    if spec.axes.iter().any(|a| a.values.is_empty()) {
        return Err(LabError::Config("every axis needs at least one value".into()));
    }
    Ok(spec)
}

/// Sets `path` in `tree`; the parent must exist and the leaf must be an
/// existing key or an absent optional field (the config parser rejects
/// anything else).
pub fn set_path(tree: &mut toml::Value, path: &str, value: toml::Value) -> Result<()> {
    let segs: Vec<&str> = path.split('.').collect();
    let unknown = || LabError::Config(format!("sweep axis {path:?} does not name a configuration field"));
    let mut node = tree;
    for seg in &segs[..segs.len() - 1] {
        node = match node {
            toml::Value::Table(t) => t.get_mut(*seg).ok_or_else(unknown)?,
            toml::Value::Array(a) => {
                let i: usize = seg.parse().map_err(|_| unknown())?;
                a.get_mut(i).ok_or_else(unknown)?
            }
            _ => return Err(unknown()),
        };
    }
    let leaf = segs[segs.len() - 1];
    match node {
        toml::Value::Table(t) => {
            t.insert(leaf.to_string(), value);
        }
        toml::Value::Array(a) => {
            let i: usize = leaf.parse().map_err(|_| unknown())?;
            *a.get_mut(i).ok_or_else(unknown)? = value;
        }
        _ => return Err(unknown()),
    }
    Ok(())
}

/// One grid point of the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    pub assignment: Vec<(String, toml::Value)>,
    pub config: LoadedConfig,
}

/// Expands the Cartesian product in row-major order (last axis fastest).
pub fn expand(spec: &SweepSpec) -> Result<Vec<SweepPoint>> {
    let size = spec.size();
    if size > spec.max_runs {
        return Err(LabError::Config(format!(
            "sweep has {size} points, more than max_runs = {}",
            spec.max_runs
        )));
    }
    let base_path = spec.resolve(&spec.base);
    let text = std::fs::read_to_string(&base_path)
        .map_err(|e| LabError::Config(format!("cannot read base config {}: {e}", base_path.display())))?;
    let base: ExperimentConfig = toml::from_str(&text).map_err(|e| parse_error(&text, &e))?;
    let tree = base.to_toml_value()?;
    let base_dir = base_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let out_root = spec.resolve(&spec.output_dir);

    let mut points = Vec::with_capacity(size);
    for index in 0..size {
        let mut rest = index;
        let mut assignment = vec![(String::new(), toml::Value::Boolean(false)); spec.axes.len()];
        for (k, axis) in spec.axes.iter().enumerate().rev() {
            let n = axis.values.len();
            assignment[k] = (axis.name.clone(), axis.values[rest % n].clone());
            rest /= n;
        }
        let mut t = tree.clone();
        for (name, v) in &assignment {
            set_path(&mut t, name, v.clone())?;
        }
        let mut cfg: ExperimentConfig = t
            .try_into()
            .map_err(|e: toml::de::Error| LabError::Config(format!("sweep point {index}: {}", e.message())))?;
        cfg.base_dir = base_dir.clone();
        cfg.output_dir = out_root.join(format!("run_{index:03}"));
        let config = cfg
            .validate()
            .map_err(|e| LabError::Config(format!("sweep point {index}: {e}")))?;
        points.push(SweepPoint {
            index,
            assignment,
            config,
        });
    }
    Ok(points)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub index: usize,
    pub assignment: Vec<(String, toml::Value)>,
    pub outcome: std::result::Result<RunRecord, LabError>,
}

impl SweepRow {
    pub fn failed(&self) -> bool {
        match &self.outcome {
            Ok(r) => !r.all_pass(),
            Err(_) => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub rows: Vec<SweepRow>,
    pub aggregate: PathBuf,
}

impl SweepSummary {
    pub fn any_failure(&self) -> bool {
        self.rows.iter().any(SweepRow::failed)
    }
}

pub const AGGREGATE_METRICS: [&str; 7] = [
    "abs_moment_slope",
    "abs_moment_r2",
    "cauchy_final_h1",
    "u_loc_exterior_mass",
    "u_loc_exterior_energy",
    "exterior_current_final",
    "nonradiative",
];

fn metric_cells(r: &RunRecord) -> Vec<String> {
    let fit = r.fit("abs_moment");
    let check = |n: &str| r.check(n).map(|c| num(c.value)).unwrap_or_default();
    vec![
        fit.map(|f| num(f.slope)).unwrap_or_default(),
        fit.map(|f| num(f.r2)).unwrap_or_default(),
        check("cauchy_final_h1"),
        check("u_loc_exterior_mass"),
        check("u_loc_exterior_energy"),
        check("exterior_current_final"),
        r.radiative
            .as_ref()
            .map(|x| x.nonradiative.to_string())
            .unwrap_or_default(),
    ]
}

fn value_cell(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub fn write_aggregate(spec: &SweepSpec, rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut header: Vec<&str> = vec!["index"];
    header.extend(spec.axes.iter().map(|a| a.name.as_str()));
    header.push("status");
    header.extend(AGGREGATE_METRICS);
    header.push("error");
    let body = rows.iter().map(|row| {
        let mut cells = vec![row.index.to_string()];
        cells.extend(row.assignment.iter().map(|(_, v)| value_cell(v)));
        match &row.outcome {
            Ok(r) => {
                cells.push(if r.all_pass() { "pass".into() } else { "fail".into() });
                cells.extend(metric_cells(r));
                cells.push(String::new());
            }
            Err(e) => {
                cells.push("error".into());
                cells.extend(std::iter::repeat_n(String::new(), AGGREGATE_METRICS.len()));
                cells.push(e.to_string());
            }
        }
        cells
    });
    write_csv(path, &header, body)
}

/// Runs every point with at most `spec.threads()` concurrent runs; failures
/// of individual runs are recorded and the sweep continues.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepSummary> {
    let points = expand(spec)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.threads())
        .build()
        .map_err(|e| LabError::Resource(format!("cannot build thread pool: {e}")))?;
    let mut rows: Vec<SweepRow> = pool.install(|| {
        points
            .into_par_iter()
            .map(|p| SweepRow {
                index: p.index,
                outcome: run_experiment(&p.config),
                assignment: p.assignment,
            })
            .collect()
    });
    rows.sort_by_key(|r| r.index);
    let root = spec.resolve(&spec.output_dir);
    std::fs::create_dir_all(&root).map_err(|e| LabError::Resource(format!("cannot create {}: {e}", root.display())))?;
    let aggregate = root.join("aggregate.csv");
    write_aggregate(spec, &rows, &aggregate)?;
    Ok(SweepSummary { rows, aggregate })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[grid]
n = 256
half_length = 32.0
[time]
dt = 0.01
t_end = 2.0
save_stride = 10
sample_times = []
[physics]
nonlinearity_enabled = false
potential = { kind = "none" }
[[initial_data]]
kind = "gaussian"
amplitude = 0.5
center = 0.0
width = 1.0
"#;

    fn spec_in(dir: &Path, axes: &str, extra: &str) -> SweepSpec {
        std::fs::write(dir.join("base.toml"), BASE).unwrap();
        let text = format!("base = \"base.toml\"\noutput_dir = \"out\"\n{extra}\n{axes}");
        std::fs::write(dir.join("sweep.toml"), text).unwrap();
        load_sweep(&dir.join("sweep.toml")).unwrap()
    }

    #[test]
    fn three_values_give_three_records() {
        let dir = tempfile::tempdir().unwrap();
        let spec = spec_in(dir.path(), "[[axes]]\nname = \"physics.p\"\nvalues = [6, 7, 9]\n", "");
        let s = run_sweep(&spec).unwrap();
        assert_eq!(s.rows.len(), 3);
        let text = std::fs::read_to_string(&s.aggregate).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("index,physics.p,status"));
        for k in 0..3 {
            assert!(dir.path().join(format!("out/run_{k:03}/observables.csv")).is_file());
        }
        let p: Vec<f64> = s
            .rows
            .iter()
            .map(|r| r.outcome.as_ref().unwrap().config.physics.p)
            .collect();
        assert_eq!(p, vec![6.0, 7.0, 9.0]);
    }

    #[test]
    fn empty_axes_is_a_single_run() {
        let dir = tempfile::tempdir().unwrap();
        let spec = spec_in(dir.path(), "", "");
        let pts = expand(&spec).unwrap();
        assert_eq!(pts.len(), 1);
        let mut direct = crate::config::load_config(&dir.path().join("base.toml")).unwrap();
        direct.config.output_dir = pts[0].config.config.output_dir.clone();
        assert_eq!(pts[0].config, direct);
    }

    #[test]
    fn cartesian_order_and_bound() {
        let dir = tempfile::tempdir().unwrap();
        let axes = "[[axes]]\nname = \"exponents.beta\"\nvalues = [0.35, 0.4]\n[[axes]]\nname = \"time.dt\"\nvalues = [0.01, 0.005, 0.0025]\n";
        let spec = spec_in(dir.path(), axes, "max_runs = 6");
        let pts = expand(&spec).unwrap();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[4].config.config.exponents.beta, 0.4);
        assert_eq!(pts[4].config.config.time.dt, 0.005);
        let spec = spec_in(dir.path(), axes, "max_runs = 5");
        assert!(matches!(expand(&spec), Err(LabError::Config(m)) if m.contains("max_runs")));
    }

    #[test]
    fn unknown_axis_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["physics.gamma_factor", "nosuch.p", "initial_data.4.mass"] {
            let spec = spec_in(
                dir.path(),
                &format!("[[axes]]\nname = \"{name}\"\nvalues = [1.0]\n"),
                "",
            );
            let e = expand(&spec).unwrap_err().to_string();
            assert!(e.contains("gamma_factor") || e.contains(name), "{name}: {e}");
        }
    }

    #[test]
    fn failing_point_is_recorded_and_sweep_continues() {
        let dir = tempfile::tempdir().unwrap();
        // A zero boundary budget is fine at load but an impossibly small oracle tolerance fails the checks.
        let axes = "[[axes]]\nname = \"thresholds.gaussian_oracle\"\nvalues = [1e-8, 0.0]\n";
        let spec = spec_in(dir.path(), axes, "parallelism = 2");
        let s = run_sweep(&spec).unwrap();
        assert_eq!(s.rows.len(), 2);
        assert!(
            !s.rows[0].failed(),
            "{:?}",
            s.rows[0].outcome.as_ref().map(|r| r.checks.clone())
        );
        assert!(s.rows[1].failed());
        assert!(s.any_failure());
    }
}
