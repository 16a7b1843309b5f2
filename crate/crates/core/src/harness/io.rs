use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::analysis::{stationary_csv, AnalysisReport};
use super::report::Summary;
use crate::error::{Error, Result};
use crate::model::HelperId;
use crate::sim::{HelperRow, MetricsLog, MetricsRow, RunMeta};

pub const METRICS_FILE: &str = "metrics.csv";
pub const HELPERS_FILE: &str = "helpers.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const STATIONARY_FILE: &str = "stationary.csv";

/// First line of every metrics file.
pub const METRICS_VERSION: &str = "# plugvod metrics v1";

const METRICS_COLUMNS: [&str; 11] = [
    "t_s",
    "server_load_kbps",
    "intrinsic_deficit_kbps",
    "total_contribution_kbps",
    "demand_kbps",
    "supply_kbps",
    "users",
    "helpers",
    "edges",
    "chokes",
    "aborts",
];

fn meta_lines(meta: &RunMeta) -> String {
    format!(
        "# scenario={}\n# seed={}\n# config_digest={}\n# population_digest={}\n# code_version={}\n# videos={}\n",
        meta.scenario,
        meta.seed,
        meta.config_digest,
        meta.population_digest,
        meta.code_version,
        meta.videos
    )
}

/// Renders the system-wide series. Floats use the shortest form that parses
/// back to the same value.
pub fn metrics_csv(log: &MetricsLog) -> String {
    let mut out = format!("{METRICS_VERSION}\n{}", meta_lines(&log.meta));
    out.push_str(&METRICS_COLUMNS.join(","));
    out.push('\n');
    for r in &log.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.t_s,
            r.server_load_kbps,
            r.intrinsic_deficit_kbps,
            r.total_contribution_kbps,
            r.demand_kbps,
            r.supply_kbps,
            r.users,
            r.helpers,
            r.edges,
            r.chokes,
            r.aborts
        );
    }
    out
}

/// Per-helper series: Σx, λ, μ and one f column per video.
pub fn helpers_csv(log: &MetricsLog) -> String {
    let mut out = format!("{METRICS_VERSION}\n{}", meta_lines(&log.meta));
    out.push_str("t_s,helper,sum_x_kbps,lambda,mu");
    for m in 1..=log.meta.videos {
        let _ = write!(out, ",f{m}");
    }
    out.push('\n');
    for r in &log.helper_rows {
        let _ = write!(
            out,
            "{},{},{},{},{}",
            r.t_s, r.helper.0, r.sum_x_kbps, r.lambda, r.mu
        );
        for f in &r.f {
            let _ = write!(out, ",{f}");
        }
        out.push('\n');
    }
    out
}

fn parse_err(what: &str, line: usize, detail: impl std::fmt::Display) -> Error {
    Error::Parse(format!("{what} line {line}: {detail}"))
}

/// Splits off the `# key=value` preamble and returns it with the body.
fn split_preamble<'t>(text: &'t str, what: &str) -> Result<(RunMeta, &'t str, usize)> {
    let mut lines = text.split_inclusive('\n');
    let first = lines.next().unwrap_or_default().trim_end();
    if first != METRICS_VERSION {
        return Err(parse_err(
            what,
            1,
            format!("expected `{METRICS_VERSION}`, found `{first}`"),
        ));
    }
    let mut consumed = first.len() + 1;
    let mut fields = std::collections::BTreeMap::new();
    let mut line_no = 1;
    for line in lines {
        if !line.starts_with('#') {
            break;
        }
        line_no += 1;
        consumed += line.len();
        let body = line.trim_start_matches('#').trim();
        let (k, v) = body
            .split_once('=')
            .ok_or_else(|| parse_err(what, line_no, "expected `# key=value`"))?;
        fields.insert(k.trim().to_string(), v.trim().to_string());
    }
    let mut take = |k: &str| {
        fields
            .remove(k)
            .ok_or_else(|| parse_err(what, line_no, format!("missing `{k}` in preamble")))
    };
    let meta = RunMeta {
        scenario: take("scenario")?,
        seed: take("seed")?
            .parse()
            .map_err(|e| parse_err(what, line_no, format!("seed: {e}")))?,
        config_digest: take("config_digest")?,
        population_digest: take("population_digest")?,
        code_version: take("code_version")?,
        videos: take("videos")?
            .parse()
            .map_err(|e| parse_err(what, line_no, format!("videos: {e}")))?,
    };
    Ok((meta, &text[consumed.min(text.len())..], line_no))
}

fn field<T: std::str::FromStr>(
    record: &csv::StringRecord,
    i: usize,
    what: &str,
    line: usize,
) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let raw = record
        .get(i)
        .ok_or_else(|| parse_err(what, line, format!("missing column {}", i + 1)))?;
    raw.parse()
        .map_err(|e| parse_err(what, line, format!("column {}: {e}", i + 1)))
}

fn body_reader(body: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(body.as_bytes())
}

/// Parses a file produced by [`metrics_csv`]; rows come back bit-identical.
pub fn parse_metrics_csv(text: &str) -> Result<MetricsLog> {
    const WHAT: &str = "metrics.csv";
    let (meta, body, offset) = split_preamble(text, WHAT)?;
    let mut reader = body_reader(body);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != METRICS_COLUMNS {
        return Err(parse_err(WHAT, offset + 1, "unexpected column header"));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let rec = record?;
        let line = offset + 2 + i;
        rows.push(MetricsRow {
            t_s: field(&rec, 0, WHAT, line)?,
            server_load_kbps: field(&rec, 1, WHAT, line)?,
            intrinsic_deficit_kbps: field(&rec, 2, WHAT, line)?,
            total_contribution_kbps: field(&rec, 3, WHAT, line)?,
            demand_kbps: field(&rec, 4, WHAT, line)?,
            supply_kbps: field(&rec, 5, WHAT, line)?,
            users: field(&rec, 6, WHAT, line)?,
            helpers: field(&rec, 7, WHAT, line)?,
            edges: field(&rec, 8, WHAT, line)?,
            chokes: field(&rec, 9, WHAT, line)?,
            aborts: field(&rec, 10, WHAT, line)?,
        });
    }
    if rows.windows(2).any(|w| w[1].t_s <= w[0].t_s) {
        return Err(Error::Parse(format!(
            "{WHAT}: rows are not strictly increasing in t_s"
        )));
    }
    Ok(MetricsLog {
        meta,
        rows,
        helper_rows: Vec::new(),
        windows: Vec::new(),
        events: 0,
        trace_digest: String::new(),
    })
}

/// Parses a file produced by [`helpers_csv`].
pub fn parse_helpers_csv(text: &str) -> Result<(RunMeta, Vec<HelperRow>)> {
    const WHAT: &str = "helpers.csv";
    let (meta, body, offset) = split_preamble(text, WHAT)?;
    let mut reader = body_reader(body);
    let width = reader.headers()?.len();
    if width != 5 + meta.videos {
        return Err(parse_err(
            WHAT,
            offset + 1,
            format!("expected {} columns, found {width}", 5 + meta.videos),
        ));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let rec = record?;
        let line = offset + 2 + i;
        rows.push(HelperRow {
            t_s: field(&rec, 0, WHAT, line)?,
            helper: HelperId(field(&rec, 1, WHAT, line)?),
            sum_x_kbps: field(&rec, 2, WHAT, line)?,
            lambda: field(&rec, 3, WHAT, line)?,
            mu: field(&rec, 4, WHAT, line)?,
            f: (5..width)
                .map(|c| field(&rec, c, WHAT, line))
                .collect::<Result<_>>()?,
        });
    }
    Ok((meta, rows))
}

/// Reads `metrics.csv` (and `helpers.csv` when present) from a run directory.
pub fn read_run_dir(dir: &Path) -> Result<MetricsLog> {
    let text = fs::read_to_string(dir.join(METRICS_FILE)).map_err(|e| {
        Error::InvalidArgument(format!("{}: {e}", dir.join(METRICS_FILE).display()))
    })?;
    let mut log = parse_metrics_csv(&text)?;
    let helpers = dir.join(HELPERS_FILE);
    if helpers.exists() {
        let (meta, rows) = parse_helpers_csv(&fs::read_to_string(helpers)?)?;
        if meta != log.meta {
            return Err(Error::Parse(
                "helpers.csv preamble does not match metrics.csv".into(),
            ));
        }
        log.helper_rows = rows;
    }
    Ok(log)
}

/// Writes `files` into `dir`, creating it if needed. When any write fails
/// the files already written are removed again.
fn write_all(dir: &Path, files: &[(&str, String)]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        if let Err(e) = fs::write(&path, body) {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            return Err(e.into());
        }
        written.push(path);
    }
    Ok(written)
}

/// `metrics.csv`, `summary.txt` and, when asked, `helpers.csv`.
pub fn write_run_dir(
    dir: &Path,
    log: &MetricsLog,
    with_helpers: bool,
    tail: f64,
) -> Result<Vec<PathBuf>> {
    let summary = Summary::of(log, tail)?;
    let mut files = vec![
        (METRICS_FILE, metrics_csv(log)),
        (SUMMARY_FILE, summary.render()),
    ];
    if with_helpers {
        files.push((HELPERS_FILE, helpers_csv(log)));
    }
    write_all(dir, &files)
}

/// `stationary.csv` and `summary.txt` for an analysis run.
pub fn write_analysis_dir(dir: &Path, report: &AnalysisReport) -> Result<Vec<PathBuf>> {
    write_all(
        dir,
        &[
            (STATIONARY_FILE, stationary_csv(report)),
            (SUMMARY_FILE, report.render()),
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> MetricsLog {
        MetricsLog {
            meta: RunMeta {
                scenario: "s".into(),
                seed: 7,
                config_digest: "abc".into(),
                population_digest: "def".into(),
                code_version: "0.1.0".into(),
                videos: 2,
            },
            rows: vec![
                MetricsRow {
                    t_s: 0.0,
                    server_load_kbps: 0.1 + 0.2,
                    intrinsic_deficit_kbps: -3.5,
                    total_contribution_kbps: 1e-300,
                    demand_kbps: 1.0 / 3.0,
                    supply_kbps: 7.0,
                    users: 1,
                    helpers: 2,
                    edges: 3,
                    chokes: 4,
                    aborts: 5,
                },
                MetricsRow {
                    t_s: 1.0,
                    server_load_kbps: f64::MAX,
                    intrinsic_deficit_kbps: 0.0,
                    total_contribution_kbps: 2.0,
                    demand_kbps: 3.0,
                    supply_kbps: 4.0,
                    users: 0,
                    helpers: 0,
                    edges: 0,
                    chokes: 9,
                    aborts: 9,
                },
            ],
            helper_rows: vec![HelperRow {
                t_s: 0.0,
                helper: HelperId(3),
                sum_x_kbps: 12.25,
                lambda: 0.1,
                mu: 0.0,
                f: vec![0.3, 2.0 / 3.0],
            }],
            windows: Vec::new(),
            events: 0,
            trace_digest: String::new(),
        }
    }

    #[test]
    fn metrics_round_trip_is_exact() {
        let log = sample();
        let back = parse_metrics_csv(&metrics_csv(&log)).unwrap();
        assert_eq!(back.meta, log.meta);
        assert_eq!(back.rows, log.rows);
        let (meta, rows) = parse_helpers_csv(&helpers_csv(&log)).unwrap();
        assert_eq!(meta, log.meta);
        assert_eq!(rows, log.helper_rows);
    }

    #[test]
    fn header_is_versioned() {
        let text = metrics_csv(&sample());
        assert!(text.starts_with("# plugvod metrics v1\n"));
        let bad = text.replacen("v1", "v0", 1);
        assert!(matches!(parse_metrics_csv(&bad), Err(Error::Parse(_))));
    }

    #[test]
    fn run_dir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let log = sample();
        let written = write_run_dir(dir.path(), &log, true, 0.5).unwrap();
        assert_eq!(written.len(), 3);
        let back = read_run_dir(dir.path()).unwrap();
        assert_eq!(back.rows, log.rows);
        assert_eq!(back.helper_rows, log.helper_rows);
    }

    #[test]
    fn rejects_non_increasing_time() {
        let mut log = sample();
        log.rows[1].t_s = 0.0;
        assert!(parse_metrics_csv(&metrics_csv(&log)).is_err());
    }
}
