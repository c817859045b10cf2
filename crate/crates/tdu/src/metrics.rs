//! Regret accounting, solve detection, CSV logs, and SVG learning curves.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// A run counts as solved once its running-average regret drops below this
/// fraction of the optimal return. Normalizing by the optimal return keeps
/// the criterion meaningful when stochastic transitions shrink the
/// achievable return (and with it the largest possible regret) well below 1.
pub const SOLVE_THRESHOLD: f64 = 0.9;

/// One finished episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    /// 1-based episode index.
    pub episode: u64,
    pub ret: f64,
    /// Head that acted during the episode.
    pub head: usize,
    pub length: u64,
}

/// Per-episode regret series with its running mean and solve episode.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunMetrics {
    /// `optimal_return - episode_return` per episode.
    pub regrets: Vec<f64>,
    /// Running mean of `regrets` after each episode.
    pub avg_regrets: Vec<f64>,
    /// First 1-based episode where the running average dropped below
    /// `SOLVE_THRESHOLD * optimal_return`.
    pub solve_episode: Option<u64>,
    sum: f64,
}

impl RunMetrics {
    pub fn new() -> Self {
        RunMetrics::default()
    }

    /// Record one episode's return against the optimal return.
    pub fn update_regret(&mut self, episode_return: f64, optimal_return: f64) {
        let regret = optimal_return - episode_return;
        self.sum += regret;
        self.regrets.push(regret);
        let avg = self.sum / self.regrets.len() as f64;
        self.avg_regrets.push(avg);
        if self.solve_episode.is_none() && avg < SOLVE_THRESHOLD * optimal_return {
            self.solve_episode = Some(self.regrets.len() as u64);
        }
    }

    pub fn episodes(&self) -> usize {
        self.regrets.len()
    }
}

/// First 1-based episode from which the regret stays (numerically) zero for
/// `window` consecutive episodes — the policy is found and retained.
pub fn sustained_solve_episode(regrets: &[f64], window: usize) -> Option<u64> {
    if window == 0 {
        return None;
    }
    let mut streak = 0usize;
    for (i, &r) in regrets.iter().enumerate() {
        if r.abs() <= 1e-9 {
            streak += 1;
            if streak >= window {
                return Some((i + 2 - window) as u64);
            }
        } else {
            streak = 0;
        }
    }
    None
}

/// Percentage of problem sizes solved within a `2^N` episode budget.
///
/// `solves` pairs each size `N` with the solve episode, if any.
pub fn deep_sea_score(solves: &[(u32, Option<u64>)]) -> f64 {
    if solves.is_empty() {
        return 0.0;
    }
    let hits = solves
        .iter()
        .filter(|&&(n, solve)| solve.is_some_and(|e| e < 1u64 << n))
        .count();
    100.0 * hits as f64 / solves.len() as f64
}

/// Everything needed to reproduce one run's learning curve.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub run_id: String,
    pub seed: u64,
    pub env: String,
    /// Problem size: Deep Sea N or Binary Tree depth L.
    pub size: usize,
    pub beta: f64,
    pub lambda: f64,
    pub variant: String,
    pub episodes: Vec<EpisodeLog>,
    pub metrics: RunMetrics,
}

/// Format a float with 17 significant digits; parses back bit-exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_quote(field: &str) -> String {
    if field.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Emit per-episode rows for a set of runs.
///
/// Columns, in order: `run_id, seed, env, N_or_L, episode, return, regret,
/// avg_regret, head, beta, lambda, variant`. Fields are quoted RFC-4180
/// style when needed; floats carry 17 significant digits so a round trip is
/// lossless.
pub fn emit_csv(runs: &[RunLog], w: &mut impl Write) -> Result<()> {
    writeln!(
        w,
        "run_id,seed,env,N_or_L,episode,return,regret,avg_regret,head,beta,lambda,variant"
    )?;
    for run in runs {
        if run.episodes.len() != run.metrics.episodes() {
            return Err(Error::invalid("episode log and metrics length mismatch"));
        }
        for (ep, (&regret, &avg)) in run.episodes.iter().zip(
            run.metrics
                .regrets
                .iter()
                .zip(run.metrics.avg_regrets.iter()),
        ) {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                csv_quote(&run.run_id),
                run.seed,
                csv_quote(&run.env),
                run.size,
                ep.episode,
                fmt_f64(ep.ret),
                fmt_f64(regret),
                fmt_f64(avg),
                ep.head,
                fmt_f64(run.beta),
                fmt_f64(run.lambda),
                csv_quote(&run.variant),
            )?;
        }
    }
    Ok(())
}

/// Read runs back from a CSV produced by [`emit_csv`].
///
/// Regrets and running averages are reconstructed bit-exactly; episode
/// lengths are not stored in the CSV and come back as zero.
pub fn read_runs_csv(path: &Path) -> Result<Vec<RunLog>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::invalid(format!("cannot read {}: {e}", path.display())))?;
    let mut order: Vec<String> = Vec::new();
    let mut runs: std::collections::HashMap<String, RunLog> = std::collections::HashMap::new();
    for record in reader.records() {
        let row = record.map_err(|e| Error::invalid(format!("bad CSV row: {e}")))?;
        if row.len() != 12 {
            return Err(Error::invalid(format!(
                "expected 12 columns, got {}",
                row.len()
            )));
        }
        let field = |i: usize| -> &str { &row[i] };
        let num = |i: usize| -> Result<f64> {
            field(i)
                .parse()
                .map_err(|e| Error::invalid(format!("bad float '{}': {e}", field(i))))
        };
        let run_id = field(0).to_string();
        let log = runs.entry(run_id.clone()).or_insert_with(|| {
            order.push(run_id.clone());
            RunLog {
                run_id,
                seed: 0,
                env: field(2).to_string(),
                size: 0,
                beta: 0.0,
                lambda: 0.0,
                variant: field(11).to_string(),
                episodes: Vec::new(),
                metrics: RunMetrics::new(),
            }
        });
        log.seed = field(1)
            .parse()
            .map_err(|e| Error::invalid(format!("bad seed: {e}")))?;
        log.size = field(3)
            .parse()
            .map_err(|e| Error::invalid(format!("bad size: {e}")))?;
        log.beta = num(9)?;
        log.lambda = num(10)?;
        let ret = num(5)?;
        let regret = num(6)?;
        log.metrics.update_regret(ret, ret + regret);
        log.episodes.push(EpisodeLog {
            episode: field(4)
                .parse()
                .map_err(|e| Error::invalid(format!("bad episode: {e}")))?,
            ret,
            head: field(8)
                .parse()
                .map_err(|e| Error::invalid(format!("bad head: {e}")))?,
            length: 0,
        });
    }
    Ok(order
        .into_iter()
        .map(|id| runs.remove(&id).unwrap())
        .collect())
}

/// One curve on a plot: the same quantity across several seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSeries {
    pub label: String,
    /// One y-series per seed; shading spans mean +/- std across seeds.
    pub runs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveOptions {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub width: u32,
    pub height: u32,
}

impl Default for CurveOptions {
    fn default() -> Self {
        CurveOptions {
            title: String::new(),
            x_label: "episode".to_string(),
            y_label: "average regret".to_string(),
            width: 640,
            height: 420,
        }
    }
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
];

fn fmt_coord(v: f64) -> String {
    format!("{v:.2}")
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 0.01 && v.abs() < 10_000.0 {
        let s = format!("{v:.3}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    } else {
        format!("{v:.2e}")
    }
}

/// Render mean +/- std learning curves as a standalone SVG 1.1 document.
///
/// Output is deterministic for fixed input: series are drawn in order with a
/// fixed palette and fixed-precision coordinates.
pub fn emit_svg_curves(
    series: &[CurveSeries],
    options: &CurveOptions,
    w: &mut impl Write,
) -> Result<()> {
    if series.is_empty() || series.iter().any(|s| s.runs.is_empty()) {
        return Err(Error::invalid("no series to plot"));
    }
    for s in series {
        let len = s.runs[0].len();
        if len == 0 || s.runs.iter().any(|r| r.len() != len) {
            return Err(Error::invalid(
                "series runs must be nonempty and equal-length",
            ));
        }
    }

    // Mean and std per x position for each series.
    struct Stat {
        mean: Vec<f64>,
        std: Vec<f64>,
    }
    let stats: Vec<Stat> = series
        .iter()
        .map(|s| {
            let len = s.runs[0].len();
            let n = s.runs.len() as f64;
            let mut mean = vec![0.0; len];
            let mut std = vec![0.0; len];
            for run in &s.runs {
                for (m, &v) in mean.iter_mut().zip(run.iter()) {
                    *m += v;
                }
            }
            for m in mean.iter_mut() {
                *m /= n;
            }
            if s.runs.len() > 1 {
                for run in &s.runs {
                    for (sd, (&v, &m)) in std.iter_mut().zip(run.iter().zip(mean.iter())) {
                        *sd += (v - m) * (v - m);
                    }
                }
                for sd in std.iter_mut() {
                    *sd = (*sd / (n - 1.0)).sqrt();
                }
            }
            Stat { mean, std }
        })
        .collect();

    let x_max = series.iter().map(|s| s.runs[0].len()).max().unwrap_or(1) as f64 - 1.0;
    let x_max = x_max.max(1.0);
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for st in &stats {
        for (m, sd) in st.mean.iter().zip(st.std.iter()) {
            y_min = y_min.min(m - sd);
            y_max = y_max.max(m + sd);
        }
    }
    if !(y_min.is_finite() && y_max.is_finite()) {
        return Err(Error::invalid("series contain non-finite values"));
    }
    if y_max - y_min < 1e-12 {
        y_min -= 0.5;
        y_max += 0.5;
    }

    let (width, height) = (f64::from(options.width), f64::from(options.height));
    let (ml, mr, mt, mb) = (62.0, 16.0, 34.0, 46.0);
    let plot_w = width - ml - mr;
    let plot_h = height - mt - mb;
    let x_of = |i: f64| ml + plot_w * (i / x_max);
    let y_of = |v: f64| mt + plot_h * (1.0 - (v - y_min) / (y_max - y_min));

    writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        options.width, options.height, options.width, options.height
    )?;
    writeln!(w, r#"  <rect width="100%" height="100%" fill="white"/>"#)?;
    if !options.title.is_empty() {
        writeln!(
            w,
            r#"  <text x="{}" y="20" font-family="monospace" font-size="14" text-anchor="middle">{}</text>"#,
            fmt_coord(width / 2.0),
            options.title
        )?;
    }
    // Axes.
    writeln!(
        w,
        r#"  <line x1="{}" y1="{}" x2="{}" y2="{}" stroke="black" stroke-width="1"/>"#,
        fmt_coord(ml),
        fmt_coord(mt),
        fmt_coord(ml),
        fmt_coord(mt + plot_h)
    )?;
    writeln!(
        w,
        r#"  <line x1="{}" y1="{}" x2="{}" y2="{}" stroke="black" stroke-width="1"/>"#,
        fmt_coord(ml),
        fmt_coord(mt + plot_h),
        fmt_coord(ml + plot_w),
        fmt_coord(mt + plot_h)
    )?;
    // Tick labels at the axis extremes.
    for (v, y) in [(y_min, mt + plot_h), (y_max, mt)] {
        writeln!(
            w,
            r#"  <text x="{}" y="{}" font-family="monospace" font-size="11" text-anchor="end">{}</text>"#,
            fmt_coord(ml - 6.0),
            fmt_coord(y + 4.0),
            fmt_tick(v)
        )?;
    }
    for (v, x) in [(0.0, ml), (x_max, ml + plot_w)] {
        writeln!(
            w,
            r#"  <text x="{}" y="{}" font-family="monospace" font-size="11" text-anchor="middle">{}</text>"#,
            fmt_coord(x),
            fmt_coord(mt + plot_h + 16.0),
            fmt_tick(v)
        )?;
    }
    writeln!(
        w,
        r#"  <text x="{}" y="{}" font-family="monospace" font-size="12" text-anchor="middle">{}</text>"#,
        fmt_coord(ml + plot_w / 2.0),
        fmt_coord(height - 10.0),
        options.x_label
    )?;
    writeln!(
        w,
        r#"  <text x="14" y="{}" font-family="monospace" font-size="12" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        fmt_coord(mt + plot_h / 2.0),
        fmt_coord(mt + plot_h / 2.0),
        options.y_label
    )?;

    for (idx, (s, st)) in series.iter().zip(stats.iter()).enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        // Shaded band: mean + std forward, mean - std backward.
        if s.runs.len() > 1 {
            let mut pts = String::new();
            for (i, (m, sd)) in st.mean.iter().zip(st.std.iter()).enumerate() {
                pts.push_str(&format!(
                    "{},{} ",
                    fmt_coord(x_of(i as f64)),
                    fmt_coord(y_of(m + sd))
                ));
            }
            for (i, (m, sd)) in st.mean.iter().zip(st.std.iter()).enumerate().rev() {
                pts.push_str(&format!(
                    "{},{} ",
                    fmt_coord(x_of(i as f64)),
                    fmt_coord(y_of(m - sd))
                ));
            }
            writeln!(
                w,
                r#"  <polygon points="{}" fill="{}" fill-opacity="0.15" stroke="none"/>"#,
                pts.trim_end(),
                color
            )?;
        }
        let pts: Vec<String> = st
            .mean
            .iter()
            .enumerate()
            .map(|(i, &m)| format!("{},{}", fmt_coord(x_of(i as f64)), fmt_coord(y_of(m))))
            .collect();
        writeln!(
            w,
            r#"  <polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            pts.join(" "),
            color
        )?;
        // Legend entry.
        let ly = mt + 8.0 + 16.0 * idx as f64;
        writeln!(
            w,
            r#"  <line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{}" stroke-width="2"/>"#,
            fmt_coord(ml + plot_w - 120.0),
            fmt_coord(ly),
            fmt_coord(ml + plot_w - 96.0),
            fmt_coord(ly),
            color
        )?;
        writeln!(
            w,
            r#"  <text x="{}" y="{}" font-family="monospace" font-size="11">{}</text>"#,
            fmt_coord(ml + plot_w - 90.0),
            fmt_coord(ly + 4.0),
            s.label
        )?;
    }
    writeln!(w, "</svg>")?;
    Ok(())
}

/// Convenience wrapper writing straight to a file path.
pub fn emit_svg_curves_to_path(
    series: &[CurveSeries],
    options: &CurveOptions,
    path: &Path,
) -> Result<()> {
    let mut buf = Vec::new();
    emit_svg_curves(series, options, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn optimal_policy_solves_on_first_episode() {
        let mut m = RunMetrics::new();
        for _ in 0..5 {
            m.update_regret(0.99, 0.99);
        }
        assert!(m.regrets.iter().all(|&r| r == 0.0));
        assert_eq!(m.solve_episode, Some(1));
    }

    #[test]
    fn always_left_never_solves() {
        let mut m = RunMetrics::new();
        for _ in 0..100 {
            m.update_regret(0.0, 0.99);
        }
        assert!(m.regrets.iter().all(|&r| (r - 0.99).abs() <= 1e-15));
        assert_eq!(m.solve_episode, None);
    }

    #[test]
    fn running_average_matches_recomputation() {
        let returns = [0.0, 0.5, -0.25, 0.99, 0.7, 0.1];
        let mut m = RunMetrics::new();
        for &r in &returns {
            m.update_regret(r, 0.99);
        }
        for i in 0..returns.len() {
            let expect: f64 = returns[..=i].iter().map(|r| 0.99 - r).sum::<f64>() / (i + 1) as f64;
            assert!((m.avg_regrets[i] - expect).abs() <= 1e-12);
        }
    }

    #[test]
    fn sustained_solve_needs_an_unbroken_streak() {
        assert_eq!(sustained_solve_episode(&[1.0, 0.0, 0.0, 0.0], 3), Some(2));
        assert_eq!(sustained_solve_episode(&[0.0, 0.0, 1.0, 0.0, 0.0], 3), None);
        assert_eq!(sustained_solve_episode(&[0.0; 5], 5), Some(1));
        assert_eq!(sustained_solve_episode(&[0.0; 4], 5), None);
        assert_eq!(sustained_solve_episode(&[], 1), None);
        assert_eq!(sustained_solve_episode(&[0.0], 0), None);
    }

    #[test]
    fn deep_sea_score_arithmetic() {
        assert_eq!(deep_sea_score(&[(6, Some(1)), (8, Some(1))]), 100.0);
        assert_eq!(deep_sea_score(&[(6, None), (8, None)]), 0.0);
        let mixed = [
            (6, Some(10)),
            (8, Some(200)),
            (10, Some(1 << 10)), // exactly at budget: not under it
            (12, Some(50)),
            (14, None),
        ];
        assert_eq!(deep_sea_score(&mixed), 60.0);
    }

    fn sample_run() -> RunLog {
        let mut metrics = RunMetrics::new();
        let mut episodes = Vec::new();
        for (i, ret) in [0.123456789012345678, -0.01, 0.99].iter().enumerate() {
            metrics.update_regret(*ret, 0.99);
            episodes.push(EpisodeLog {
                episode: i as u64 + 1,
                ret: *ret,
                head: i % 2,
                length: 6,
            });
        }
        RunLog {
            run_id: "deep_sea,6/tdu".to_string(), // comma forces quoting
            seed: 3,
            env: "deep_sea".to_string(),
            size: 6,
            beta: 1.0,
            lambda: 3.0,
            variant: "tdu".to_string(),
            episodes,
            metrics,
        }
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let run = sample_run();
        let mut buf = Vec::new();
        emit_csv(std::slice::from_ref(&run), &mut buf).unwrap();
        let mut rdr = csv::Reader::from_reader(buf.as_slice());
        let headers = rdr.headers().unwrap().clone();
        assert_eq!(&headers[0], "run_id");
        assert_eq!(&headers[11], "variant");
        let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 3);
        for (row, ep) in rows.iter().zip(run.episodes.iter()) {
            assert_eq!(&row[0], run.run_id.as_str());
            assert_eq!(row[5].parse::<f64>().unwrap(), ep.ret);
            assert_eq!(
                row[6].parse::<f64>().unwrap(),
                run.metrics.regrets[ep.episode as usize - 1]
            );
        }
    }

    #[test]
    fn csv_read_back_reconstructs_metrics_bit_exactly() {
        let run = sample_run();
        let mut buf = Vec::new();
        emit_csv(std::slice::from_ref(&run), &mut buf).unwrap();
        let tmp = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(tmp.path(), &buf).unwrap();
        let back = read_runs_csv(tmp.path()).unwrap();
        assert_eq!(back.len(), 1);
        let b = &back[0];
        assert_eq!(b.run_id, run.run_id);
        assert_eq!(b.seed, run.seed);
        assert_eq!(b.variant, run.variant);
        assert_eq!(b.metrics.regrets, run.metrics.regrets);
        assert_eq!(b.metrics.avg_regrets, run.metrics.avg_regrets);
        assert_eq!(b.metrics.solve_episode, run.metrics.solve_episode);
        assert_eq!(
            b.episodes.iter().map(|e| e.ret).collect::<Vec<_>>(),
            run.episodes.iter().map(|e| e.ret).collect::<Vec<_>>()
        );
    }

    #[test]
    fn csv_empty_run_set_is_header_only() {
        let mut buf = Vec::new();
        emit_csv(&[], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1);
    }

    #[test]
    fn float_format_survives_extremes() {
        for v in [
            0.0,
            -0.0,
            1.0,
            std::f64::consts::PI,
            f64::MIN_POSITIVE,
            f64::MAX,
            -2.2250738585072014e-308,
            0.1 + 0.2,
        ] {
            let s = fmt_f64(v);
            let back: f64 = s.parse().unwrap();
            assert!(
                back == v || (back.is_nan() && v.is_nan()),
                "{v} -> {s} -> {back}"
            );
        }
    }

    #[test]
    fn svg_flat_series_is_horizontal_polyline() {
        let series = [CurveSeries {
            label: "flat".to_string(),
            runs: vec![vec![0.5; 10]],
        }];
        let mut buf = Vec::new();
        emit_svg_curves(&series, &CurveOptions::default(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let line = text.lines().find(|l| l.contains("<polyline")).unwrap();
        let pts: Vec<&str> = line
            .split("points=\"")
            .nth(1)
            .unwrap()
            .split('"')
            .next()
            .unwrap()
            .split(' ')
            .collect();
        let ys: Vec<&str> = pts.iter().map(|p| p.split(',').nth(1).unwrap()).collect();
        assert!(
            ys.windows(2).all(|w| w[0] == w[1]),
            "not horizontal: {ys:?}"
        );
    }

    #[test]
    fn svg_empty_input_is_error() {
        let mut buf = Vec::new();
        assert!(emit_svg_curves(&[], &CurveOptions::default(), &mut buf).is_err());
        let series = [CurveSeries {
            label: "x".to_string(),
            runs: vec![],
        }];
        assert!(emit_svg_curves(&series, &CurveOptions::default(), &mut buf).is_err());
    }

    #[test]
    fn svg_matches_golden_file() {
        let series = [
            CurveSeries {
                label: "tdu".to_string(),
                runs: vec![
                    vec![1.0, 0.9, 0.5, 0.2, 0.05],
                    vec![1.0, 0.8, 0.6, 0.1, 0.0],
                ],
            },
            CurveSeries {
                label: "bdqn".to_string(),
                runs: vec![
                    vec![1.0, 1.0, 0.95, 0.9, 0.9],
                    vec![1.0, 0.95, 0.9, 0.92, 0.88],
                ],
            },
        ];
        let options = CurveOptions {
            title: "deep sea N=10".to_string(),
            ..CurveOptions::default()
        };
        let mut buf = Vec::new();
        emit_svg_curves(&series, &options, &mut buf).unwrap();
        let got = String::from_utf8(buf).unwrap();
        let golden_path = concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/tests/golden/learning_curve.svg"
        );
        if std::env::var_os("UPDATE_GOLDEN").is_some() {
            std::fs::write(golden_path, &got).unwrap();
        }
        let expected = std::fs::read_to_string(golden_path).unwrap();
        assert_eq!(got, expected, "SVG output drifted from the golden file");
    }
}
