//! Cross-seed aggregation of run outputs.

use std::path::{Path, PathBuf};

use super::welch::{welch_t, WelchResult};
use crate::error::{Error, Result};
use crate::fmt::sig9;

/// Per-episode evaluation columns summarised across runs.
pub const EVAL_METRICS: [&str; 8] =
    ["success", "steps", "reward", "dist_to_goal", "danger_steps", "collision", "off_track", "failure"];

#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub path: PathBuf,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    fn index(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Csv { path: self.path.clone(), msg: format!("missing column {name:?}") })
    }

    /// Numeric values of `name`, skipping empty cells.
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        self.column_where(name, None)
    }

    /// As [`CsvTable::column`], restricted to rows whose `kind` column equals `kind`.
    pub fn column_where(&self, name: &str, kind: Option<&str>) -> Result<Vec<f64>> {
        let i = self.index(name)?;
        let k = kind.map(|_| self.index("kind")).transpose()?;
        let mut out = Vec::new();
        for (r, row) in self.rows.iter().enumerate() {
            if let (Some(k), Some(want)) = (k, kind) {
                if row[k] != want {
                    continue;
                }
            }
            let cell = row[i].trim();
            if cell.is_empty() {
                continue;
            }
            out.push(cell.parse::<f64>().map_err(|_| Error::Csv {
                path: self.path.clone(),
                msg: format!("row {}: column {name:?} is not numeric: {cell:?}", r + 2),
            })?);
        }
        Ok(out)
    }
}

pub fn read_csv(path: &Path) -> Result<CsvTable> {
    let csv_err = |e: csv::Error| Error::Csv { path: path.to_path_buf(), msg: e.to_string() };
    let mut rd = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = rd.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rd.records() {
        rows.push(rec.map_err(csv_err)?.iter().map(str::to_string).collect());
    }
    Ok(CsvTable { path: path.to_path_buf(), header, rows })
}

/// Sample mean and standard deviation (divisor `n - 1`; zero for one value).
pub fn mean_std(x: &[f64]) -> (f64, f64) {
    if x.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per-run means of every evaluation metric present in `eval.csv`.
pub fn run_means(run_dir: &Path) -> Result<Vec<(String, f64)>> {
    let t = read_csv(&run_dir.join("eval.csv"))?;
    let mut out = Vec::new();
    for m in EVAL_METRICS {
        if t.header.iter().any(|h| h == m) {
            let v = t.column(m)?;
            out.push((m.to_string(), mean_std(&v).0));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
}

/// Mean and std across runs of each run's mean metric, per method.
pub fn aggregate(groups: &[(String, Vec<PathBuf>)]) -> Result<Vec<SummaryRow>> {
    let mut rows = Vec::new();
    for (method, dirs) in groups {
        if dirs.is_empty() {
            return Err(Error::invalid(format!("method {method:?} has no runs")));
        }
        let per_run: Vec<Vec<(String, f64)>> = dirs.iter().map(|d| run_means(d)).collect::<Result<_>>()?;
        for (name, _) in &per_run[0] {
            let vals: Vec<f64> =
                per_run.iter().filter_map(|r| r.iter().find(|(n, _)| n == name).map(|(_, v)| *v)).collect();
            let (mean, std) = mean_std(&vals);
            rows.push(SummaryRow { method: method.clone(), metric: name.clone(), mean, std, runs: vals.len() });
        }
    }
    Ok(rows)
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Csv { path: path.to_path_buf(), msg: e.to_string() };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["method", "metric", "mean", "std", "runs"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([r.method.clone(), r.metric.clone(), sig9(r.mean), sig9(r.std), r.runs.to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Welch comparison of per-run means, `baseline - other`.
pub fn welch_rows(
    groups: &[(String, Vec<PathBuf>)],
    metrics: &[&str],
) -> Result<Vec<(String, String, String, WelchResult)>> {
    let mut out = Vec::new();
    let Some((base_name, base_dirs)) = groups.first() else {
        return Ok(out);
    };
    let collect = |dirs: &[PathBuf], m: &str| -> Result<Vec<f64>> {
        dirs.iter()
            .map(|d| {
                run_means(d)?
                    .into_iter()
                    .find(|(n, _)| n == m)
                    .map(|(_, v)| v)
                    .ok_or_else(|| Error::Csv { path: d.join("eval.csv"), msg: format!("missing column {m:?}") })
            })
            .collect()
    };
    for (name, dirs) in &groups[1..] {
        for m in metrics {
            let a = collect(base_dirs, m)?;
            let b = collect(dirs, m)?;
            out.push((base_name.clone(), name.clone(), m.to_string(), welch_t(&a, &b)?));
        }
    }
    Ok(out)
}

/// A metric sampled at increasing environment steps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Curve {
    pub steps: Vec<f64>,
    pub values: Vec<f64>,
}

/// `column` against `step` for rows of the given `kind` in a metrics file.
pub fn curve_from_metrics(metrics: &CsvTable, column: &str, kind: &str) -> Result<Curve> {
    let si = metrics.index("step")?;
    let ci = metrics.index(column)?;
    let ki = metrics.index("kind")?;
    let mut c = Curve::default();
    for row in &metrics.rows {
        if row[ki] != kind || row[ci].trim().is_empty() {
            continue;
        }
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Csv { path: metrics.path.clone(), msg: format!("non-numeric cell {s:?}") })
        };
        c.steps.push(parse(&row[si])?);
        c.values.push(parse(&row[ci])?);
    }
    Ok(c)
}

/// Resamples onto `grid`: the mean of points with step in `(g - window, g]`,
/// carrying the previous value forward through empty windows (NaN before
/// the first point).
pub fn resample_curve(curve: &Curve, grid: &[f64], window: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.len());
    let mut last = f64::NAN;
    for &g in grid {
        let (mut s, mut n) = (0.0, 0usize);
        for (x, v) in curve.steps.iter().zip(&curve.values) {
            if *x > g - window && *x <= g {
                s += v;
                n += 1;
            }
        }
        if n > 0 {
            last = s / n as f64;
        }
        out.push(last);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_eval(dir: &Path, rewards: &[f64], success: &[f64]) {
        std::fs::create_dir_all(dir).unwrap();
        let mut s = String::from("episode,success,steps,reward\n");
        for (i, (r, k)) in rewards.iter().zip(success).enumerate() {
            s.push_str(&format!("{i},{k},10,{r}\n"));
        }
        std::fs::write(dir.join("eval.csv"), s).unwrap();
    }

    #[test]
    fn single_run_has_zero_std() {
        let tmp = tempfile::tempdir().unwrap();
        let d = tmp.path().join("a");
        write_eval(&d, &[1.0, 3.0], &[1.0, 0.0]);
        let rows = aggregate(&[("m".into(), vec![d])]).unwrap();
        let r = rows.iter().find(|r| r.metric == "reward").unwrap();
        assert_eq!((r.mean, r.std, r.runs), (2.0, 0.0, 1));
    }

    #[test]
    fn two_runs_hand_computed() {
        let tmp = tempfile::tempdir().unwrap();
        let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
        write_eval(&a, &[1.0, 3.0], &[1.0, 1.0]);
        write_eval(&b, &[5.0, 7.0], &[0.0, 1.0]);
        let rows = aggregate(&[("m".into(), vec![a, b])]).unwrap();
        let r = rows.iter().find(|r| r.metric == "reward").unwrap();
        // run means 2 and 6
        assert_eq!(r.mean, 4.0);
        assert!((r.std - 8f64.sqrt()).abs() < 1e-12);
        let s = rows.iter().find(|r| r.metric == "success").unwrap();
        assert_eq!(s.mean, 0.75);
        let out = tmp.path().join("summary.csv");
        write_summary(&out, &rows).unwrap();
        let t = read_csv(&out).unwrap();
        assert_eq!(t.header, ["method", "metric", "mean", "std", "runs"]);
    }

    #[test]
    fn missing_file_is_reported() {
        let tmp = tempfile::tempdir().unwrap();
        let err = aggregate(&[("m".into(), vec![tmp.path().join("nope")])]).unwrap_err();
        assert!(err.to_string().contains("eval.csv"), "{err}");
    }

    #[test]
    fn resampling_windows() {
        let c = Curve { steps: vec![1.0, 2.0, 5.0], values: vec![1.0, 3.0, 10.0] };
        let r = resample_curve(&c, &[0.0, 2.0, 4.0, 6.0], 2.0);
        assert!(r[0].is_nan());
        assert_eq!(&r[1..], &[2.0, 2.0, 10.0]);
    }
}
