//! Aggregation across runs, comparison deltas, weight sweeps, and rendering.
//!
//! Comparison tables group rows by (benchmark, model) and mark one best value
//! per column per group: highest accuracy and diversity, lowest token usage
//! and path ratio. Displayed values follow the usual table precision
//! (accuracy to 4 decimals, everything else to 2); CSV output can carry raw
//! values instead.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::features::LambdaWeights;
use crate::metrics::{
    self, combine_and_score, AnalysisConfig, MetricsError, MetricsReport,
};
use crate::trace::RunRecord;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("relative delta needs a nonzero baseline")]
    ZeroBaseline,
    #[error("duplicate run key (benchmark={benchmark:?}, model={model:?}, method={method:?})")]
    DuplicateKey { benchmark: String, model: String, method: String },
    #[error("sweep grid must be ascending values in [0, 1], got {0:?}")]
    InvalidGrid(Vec<f64>),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("csv rendering failed: {0}")]
    Csv(String),
}

/// Signed percentage change from `a` to `b`: `(b - a) / a * 100`.
pub fn relative_delta(a: f64, b: f64) -> Result<f64, ReportError> {
    if a == 0.0 {
        return Err(ReportError::ZeroBaseline);
    }
    Ok((b - a) / a * 100.0)
}

/// Identity of one run in a comparison table.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct RunMeta {
    pub benchmark: String,
    pub model: String,
    pub method: String,
}

impl RunMeta {
    pub fn of(run: &RunRecord) -> Self {
        RunMeta {
            benchmark: run.benchmark.clone(),
            model: run.model.clone(),
            method: run.method.clone(),
        }
    }
}

/// The five metric columns of one table row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricColumns {
    pub accuracy: f64,
    pub ptok: f64,
    pub ctok: f64,
    pub ids: Option<f64>,
    pub upr: Option<f64>,
}

impl From<&MetricsReport> for MetricColumns {
    fn from(report: &MetricsReport) -> Self {
        MetricColumns {
            accuracy: report.accuracy,
            ptok: report.ptok,
            ctok: report.ctok,
            ids: report.ids,
            upr: report.upr,
        }
    }
}

/// Which columns hold the group-best value on this row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BestFlags {
    pub accuracy: bool,
    pub ptok: bool,
    pub ctok: bool,
    pub ids: bool,
    pub upr: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub meta: RunMeta,
    pub values: MetricColumns,
    pub best: BestFlags,
}

/// Rows in input order with per-group best markers.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn rows(&self) -> &[ComparisonRow] {
        &self.rows
    }
}

/// Round half away from zero to `digits` decimals, the precision the table
/// displays and compares at.
fn round_to(value: f64, digits: u32) -> f64 {
    let factor = 10f64.powi(digits as i32);
    (value * factor).round() / factor
}

fn rounded(columns: &MetricColumns) -> MetricColumns {
    MetricColumns {
        accuracy: round_to(columns.accuracy, 4),
        ptok: round_to(columns.ptok, 2),
        ctok: round_to(columns.ctok, 2),
        ids: columns.ids.map(|v| round_to(v, 2)),
        upr: columns.upr.map(|v| round_to(v, 2)),
    }
}

/// Build the comparison table: one row per run in input order, best markers
/// per (benchmark, model) group computed on the displayed (rounded) values,
/// ties broken by first appearance.
pub fn aggregate(entries: &[(RunMeta, MetricColumns)]) -> Result<ComparisonTable, ReportError> {
    let mut seen = BTreeSet::new();
    for (meta, _) in entries {
        if !seen.insert(meta.clone()) {
            return Err(ReportError::DuplicateKey {
                benchmark: meta.benchmark.clone(),
                model: meta.model.clone(),
                method: meta.method.clone(),
            });
        }
    }

    let mut rows: Vec<ComparisonRow> = entries
        .iter()
        .map(|(meta, values)| ComparisonRow {
            meta: meta.clone(),
            values: *values,
            best: BestFlags::default(),
        })
        .collect();

    let groups: Vec<(String, String)> = {
        let mut seen = BTreeSet::new();
        rows.iter()
            .filter(|r| seen.insert((r.meta.benchmark.clone(), r.meta.model.clone())))
            .map(|r| (r.meta.benchmark.clone(), r.meta.model.clone()))
            .collect()
    };

    for (benchmark, model) in groups {
        let members: Vec<usize> = rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.meta.benchmark == benchmark && r.meta.model == model)
            .map(|(i, _)| i)
            .collect();
        let display: Vec<MetricColumns> =
            members.iter().map(|&i| rounded(&rows[i].values)).collect();

        let pick = |get: fn(&MetricColumns) -> Option<f64>, maximize: bool| -> Option<usize> {
            let mut best: Option<(usize, f64)> = None;
            for (k, columns) in display.iter().enumerate() {
                if let Some(value) = get(columns) {
                    let better = match best {
                        None => true,
                        Some((_, current)) => {
                            if maximize {
                                value > current
                            } else {
                                value < current
                            }
                        }
                    };
                    if better {
                        best = Some((members[k], value));
                    }
                }
            }
            best.map(|(i, _)| i)
        };

        let winners = [
            (pick(|v| Some(v.accuracy), true), 0usize),
            (pick(|v| Some(v.ptok), false), 1),
            (pick(|v| Some(v.ctok), false), 2),
            (pick(|v| v.ids, true), 3),
            (pick(|v| v.upr, false), 4),
        ];
        for (winner, column) in winners {
            if let Some(i) = winner {
                match column {
                    0 => rows[i].best.accuracy = true,
                    1 => rows[i].best.ptok = true,
                    2 => rows[i].best.ctok = true,
                    3 => rows[i].best.ids = true,
                    _ => rows[i].best.upr = true,
                }
            }
        }
    }

    Ok(ComparisonTable { rows })
}

/// One grid point of a weight sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub lambda1: f64,
    pub mean_ids: Option<f64>,
}

/// Mean diversity score per syntactic-weight grid point for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub method: String,
    points: Vec<SweepPoint>,
}

impl SweepTable {
    pub fn points(&self) -> &[SweepPoint] {
        &self.points
    }
}

/// Default sweep grid: eleven evenly spaced points over [0, 1].
pub fn default_sweep_grid() -> Vec<f64> {
    (0..=10).map(|i| f64::from(i) / 10.0).collect()
}

/// Sweep the syntactic weight over `grid`, building the provider from the
/// config.
pub fn lambda_sweep(
    run: &RunRecord,
    grid: &[f64],
    config: &AnalysisConfig,
) -> Result<SweepTable, ReportError> {
    let provider = crate::features::build_provider(config.provider, config.remote_url.as_deref())
        .map_err(MetricsError::from)?;
    lambda_sweep_with_provider(run, grid, config, provider.as_ref())
}

/// Sweep the syntactic weight over `grid` against an already-built provider.
/// Both similarity channels are computed once per trace and recombined per
/// grid point; no re-embedding.
pub fn lambda_sweep_with_provider(
    run: &RunRecord,
    grid: &[f64],
    config: &AnalysisConfig,
    provider: &dyn crate::features::EmbeddingProvider,
) -> Result<SweepTable, ReportError> {
    if grid.is_empty()
        || grid.iter().any(|l| !(0.0..=1.0).contains(l))
        || grid.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(ReportError::InvalidGrid(grid.to_vec()));
    }

    let channels = metrics::par_map_indexed(run.traces.len(), config.workers, |i| {
        metrics::trace_channels(&run.traces[i], provider)
    });
    let channels: Vec<_> = channels.into_iter().collect::<Result<_, _>>()?;

    let mut points = Vec::with_capacity(grid.len());
    for &lambda1 in grid {
        let weights =
            LambdaWeights::from_syntactic(lambda1).map_err(MetricsError::from)?;
        let per_trace: Vec<Option<f64>> = run
            .traces
            .iter()
            .zip(&channels)
            .map(|(trace, ch)| combine_and_score(&trace.graph, ch, weights))
            .collect::<Result<_, _>>()?;
        points.push(SweepPoint {
            lambda1,
            mean_ids: metrics::mean_defined(per_trace.into_iter()),
        });
    }

    Ok(SweepTable { method: run.method.clone(), points })
}

/// Output format for rendered tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RenderFormat {
    #[default]
    Markdown,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RenderOptions {
    pub format: RenderFormat,
    /// Emit raw unrounded values in CSV instead of display precision.
    pub raw_values: bool,
}

fn format_value(value: f64, digits: u32, raw: bool) -> String {
    if raw {
        format!("{value}")
    } else {
        format!("{:.*}", digits as usize, round_to(value, digits))
    }
}

fn format_defined(value: Option<f64>, digits: u32, raw: bool) -> String {
    value.map(|v| format_value(v, digits, raw)).unwrap_or_default()
}

/// Render the comparison table. Markdown groups rows into a section per
/// benchmark and bolds best values; CSV emits one flat row per entry with
/// `best_<column>` booleans. Output is deterministic and ends with a newline.
pub fn render_comparison(table: &ComparisonTable, options: RenderOptions) -> Result<String, ReportError> {
    match options.format {
        RenderFormat::Markdown => Ok(render_comparison_markdown(table)),
        RenderFormat::Csv => render_comparison_csv(table, options.raw_values),
    }
}

fn render_comparison_markdown(table: &ComparisonTable) -> String {
    let mut out = String::new();
    let mut benchmarks = Vec::new();
    for row in table.rows() {
        if !benchmarks.contains(&row.meta.benchmark) {
            benchmarks.push(row.meta.benchmark.clone());
        }
    }

    let cell = |value: String, best: bool| if best { format!("**{value}**") } else { value };

    for (i, benchmark) in benchmarks.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&format!("## {benchmark}\n\n"));
        out.push_str("| Method | Model | Accuracy | Ptok | Ctok | IDS | UPR |\n");
        out.push_str("| --- | --- | --- | --- | --- | --- | --- |\n");
        for row in table.rows().iter().filter(|r| &r.meta.benchmark == benchmark) {
            let v = rounded(&row.values);
            out.push_str(&format!(
                "| {} | {} | {} | {} | {} | {} | {} |\n",
                row.meta.method,
                row.meta.model,
                cell(format!("{:.4}", v.accuracy), row.best.accuracy),
                cell(format!("{:.2}", v.ptok), row.best.ptok),
                cell(format!("{:.2}", v.ctok), row.best.ctok),
                v.ids.map(|x| cell(format!("{x:.2}"), row.best.ids)).unwrap_or_default(),
                v.upr.map(|x| cell(format!("{x:.2}"), row.best.upr)).unwrap_or_default(),
            ));
        }
    }
    out
}

fn render_comparison_csv(table: &ComparisonTable, raw: bool) -> Result<String, ReportError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record([
            "benchmark",
            "model",
            "method",
            "accuracy",
            "ptok",
            "ctok",
            "ids",
            "upr",
            "best_accuracy",
            "best_ptok",
            "best_ctok",
            "best_ids",
            "best_upr",
        ])
        .map_err(|e| ReportError::Csv(e.to_string()))?;
    for row in table.rows() {
        let v = row.values;
        writer
            .write_record([
                row.meta.benchmark.as_str(),
                row.meta.model.as_str(),
                row.meta.method.as_str(),
                &format_value(v.accuracy, 4, raw),
                &format_value(v.ptok, 2, raw),
                &format_value(v.ctok, 2, raw),
                &format_defined(v.ids, 2, raw),
                &format_defined(v.upr, 2, raw),
                &row.best.accuracy.to_string(),
                &row.best.ptok.to_string(),
                &row.best.ctok.to_string(),
                &row.best.ids.to_string(),
                &row.best.upr.to_string(),
            ])
            .map_err(|e| ReportError::Csv(e.to_string()))?;
    }
    finish_csv(writer)
}

fn finish_csv(writer: csv::Writer<Vec<u8>>) -> Result<String, ReportError> {
    let bytes = writer.into_inner().map_err(|e| ReportError::Csv(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| ReportError::Csv(e.to_string()))
}

/// Render a sweep table (`lambda1,mean_ids` in CSV, a two-column table in
/// markdown).
pub fn render_sweep(table: &SweepTable, options: RenderOptions) -> Result<String, ReportError> {
    let format_ids = |value: Option<f64>| -> String {
        match value {
            Some(v) if options.raw_values => format!("{v}"),
            Some(v) => format!("{v:.6}"),
            None => String::new(),
        }
    };
    match options.format {
        RenderFormat::Markdown => {
            let mut out = String::new();
            out.push_str("| lambda1 | mean_ids |\n| --- | --- |\n");
            for point in table.points() {
                out.push_str(&format!("| {} | {} |\n", point.lambda1, format_ids(point.mean_ids)));
            }
            Ok(out)
        }
        RenderFormat::Csv => {
            let mut writer = csv::Writer::from_writer(Vec::new());
            writer
                .write_record(["lambda1", "mean_ids"])
                .map_err(|e| ReportError::Csv(e.to_string()))?;
            for point in table.points() {
                writer
                    .write_record([point.lambda1.to_string(), format_ids(point.mean_ids)])
                    .map_err(|e| ReportError::Csv(e.to_string()))?;
            }
            finish_csv(writer)
        }
    }
}

/// One metric's comparison between a baseline and a candidate run.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaRow {
    pub metric: &'static str,
    pub baseline: Option<f64>,
    pub candidate: Option<f64>,
    /// `(candidate - baseline) / baseline * 100`; absent when either side is
    /// undefined or the baseline is zero.
    pub delta_pct: Option<f64>,
    /// `baseline / candidate`, the improvement factor for cost-like metrics;
    /// absent when either side is undefined or the candidate is zero.
    pub ratio: Option<f64>,
}

/// Per-metric delta report between two runs.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaReport {
    rows: Vec<DeltaRow>,
}

impl DeltaReport {
    pub fn rows(&self) -> &[DeltaRow] {
        &self.rows
    }

    pub fn row(&self, metric: &str) -> Option<&DeltaRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }
}

/// Compare candidate against baseline metric-by-metric.
pub fn compare_columns(baseline: &MetricColumns, candidate: &MetricColumns) -> DeltaReport {
    let make = |metric: &'static str, a: Option<f64>, b: Option<f64>| {
        let delta_pct = match (a, b) {
            (Some(a), Some(b)) => relative_delta(a, b).ok(),
            _ => None,
        };
        let ratio = match (a, b) {
            (Some(a), Some(b)) if b != 0.0 => Some(a / b),
            _ => None,
        };
        DeltaRow { metric, baseline: a, candidate: b, delta_pct, ratio }
    };
    DeltaReport {
        rows: vec![
            make("accuracy", Some(baseline.accuracy), Some(candidate.accuracy)),
            make("ptok", Some(baseline.ptok), Some(candidate.ptok)),
            make("ctok", Some(baseline.ctok), Some(candidate.ctok)),
            make("ids", baseline.ids, candidate.ids),
            make("upr", baseline.upr, candidate.upr),
        ],
    }
}

/// Render the delta report; undefined cells print as "n/a" in markdown and
/// stay empty in CSV.
pub fn render_delta(report: &DeltaReport, options: RenderOptions) -> Result<String, ReportError> {
    match options.format {
        RenderFormat::Markdown => {
            let mut out = String::new();
            out.push_str("| Metric | Baseline | Candidate | Delta | Ratio |\n");
            out.push_str("| --- | --- | --- | --- | --- |\n");
            for row in report.rows() {
                let value = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_else(|| "n/a".into());
                let delta =
                    row.delta_pct.map(|d| format!("{d:+.1}%")).unwrap_or_else(|| "n/a".into());
                let ratio = row.ratio.map(|r| format!("{r:.4}")).unwrap_or_else(|| "n/a".into());
                out.push_str(&format!(
                    "| {} | {} | {} | {} | {} |\n",
                    row.metric,
                    value(row.baseline),
                    value(row.candidate),
                    delta,
                    ratio
                ));
            }
            Ok(out)
        }
        RenderFormat::Csv => {
            let mut writer = csv::Writer::from_writer(Vec::new());
            writer
                .write_record(["metric", "baseline", "candidate", "delta_pct", "ratio"])
                .map_err(|e| ReportError::Csv(e.to_string()))?;
            let cell = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
            let fixed = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
            for row in report.rows() {
                writer
                    .write_record([
                        row.metric.to_string(),
                        cell(row.baseline),
                        cell(row.candidate),
                        fixed(row.delta_pct),
                        fixed(row.ratio),
                    ])
                    .map_err(|e| ReportError::Csv(e.to_string()))?;
            }
            finish_csv(writer)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::{generate_synthetic_run, GenSpec};
    use crate::metrics::analyze_run;

    fn meta(benchmark: &str, model: &str, method: &str) -> RunMeta {
        RunMeta {
            benchmark: benchmark.to_string(),
            model: model.to_string(),
            method: method.to_string(),
        }
    }

    fn columns(accuracy: f64, ptok: f64, ctok: f64, ids: f64, upr: f64) -> MetricColumns {
        MetricColumns { accuracy, ptok, ctok, ids: Some(ids), upr: Some(upr) }
    }

    #[test]
    fn relative_delta_reproduces_published_comparisons() {
        // GSM8K rows: 0.39 -> 0.44 diversity is +12.8%, 0.40 -> 0.08 path
        // ratio is -80%, 0.8563 -> 0.8742 accuracy is +2.1%.
        assert!((relative_delta(0.39, 0.44).unwrap() - 12.8).abs() < 0.1);
        assert!((relative_delta(0.40, 0.08).unwrap() + 80.0).abs() < 1e-9);
        assert!((relative_delta(0.8563, 0.8742).unwrap() - 2.1).abs() < 0.1);
    }

    #[test]
    fn relative_delta_basics() {
        assert_eq!(relative_delta(2.0, 2.0).unwrap(), 0.0);
        let up = relative_delta(2.0, 3.0).unwrap();
        let down = relative_delta(2.0, 1.0).unwrap();
        assert_eq!(up, 50.0);
        assert_eq!(down, -50.0);
        assert!(matches!(relative_delta(0.0, 1.0), Err(ReportError::ZeroBaseline)));
    }

    #[test]
    fn single_run_marks_everything_best() {
        let table =
            aggregate(&[(meta("b", "m", "only"), columns(0.9, 1.0, 0.5, 0.4, 0.2))]).unwrap();
        let best = table.rows()[0].best;
        assert!(best.accuracy && best.ptok && best.ctok && best.ids && best.upr);
    }

    #[test]
    fn higher_accuracy_wins_its_column() {
        let table = aggregate(&[
            (meta("b", "m", "first"), columns(0.8, 1.0, 0.5, 0.4, 0.2)),
            (meta("b", "m", "second"), columns(0.9, 1.0, 0.5, 0.4, 0.2)),
        ])
        .unwrap();
        assert!(!table.rows()[0].best.accuracy);
        assert!(table.rows()[1].best.accuracy);
        // Ties go to the first method in input order.
        assert!(table.rows()[0].best.ptok);
        assert!(!table.rows()[1].best.ptok);
    }

    #[test]
    fn gsm8k_fixture_reproduces_bold_pattern() {
        // Four methods, one benchmark/model group; best markers must land on
        // the published bold cells.
        let table = aggregate(&[
            (meta("gsm8k", "qwen", "Vanilla-AD"), columns(0.8563, 10.15, 2.59, 0.39, 0.40)),
            (meta("gsm8k", "qwen", "AgentDropout"), columns(0.7797, 6.99, 1.58, 0.40, 0.41)),
            (meta("gsm8k", "qwen", "AgentPrune"), columns(0.7508, 10.01, 2.68, 0.41, 0.16)),
            (meta("gsm8k", "qwen", "G-Designer"), columns(0.8742, 9.87, 2.24, 0.44, 0.08)),
        ])
        .unwrap();
        let by_method = |m: &str| {
            table.rows().iter().find(|r| r.meta.method == m).map(|r| r.best).unwrap()
        };
        let g_designer = by_method("G-Designer");
        assert!(g_designer.accuracy && g_designer.ids && g_designer.upr);
        assert!(!g_designer.ptok && !g_designer.ctok);
        let agent_dropout = by_method("AgentDropout");
        assert!(agent_dropout.ptok && agent_dropout.ctok);
        assert!(!agent_dropout.accuracy && !agent_dropout.ids && !agent_dropout.upr);
    }

    #[test]
    fn duplicate_keys_are_rejected() {
        let result = aggregate(&[
            (meta("b", "m", "x"), columns(0.8, 1.0, 0.5, 0.4, 0.2)),
            (meta("b", "m", "x"), columns(0.9, 1.0, 0.5, 0.4, 0.2)),
        ]);
        assert!(matches!(result, Err(ReportError::DuplicateKey { .. })));
    }

    #[test]
    fn aggregate_is_permutation_stable() {
        let a = (meta("b", "m", "x"), columns(0.8, 1.2, 0.5, 0.4, 0.2));
        let b = (meta("b", "m", "y"), columns(0.9, 1.0, 0.6, 0.3, 0.1));
        let forward = aggregate(&[a.clone(), b.clone()]).unwrap();
        let backward = aggregate(&[b, a]).unwrap();
        for row in forward.rows() {
            let twin = backward.rows().iter().find(|r| r.meta == row.meta).unwrap();
            assert_eq!(row.values, twin.values);
            assert_eq!(row.best, twin.best);
        }
    }

    #[test]
    fn sweep_single_point_matches_analyze() {
        let run = generate_synthetic_run(&GenSpec { num_problems: 4, seed: 3, ..GenSpec::default() })
            .unwrap();
        let config = AnalysisConfig::default();
        let sweep = lambda_sweep(&run, &[0.5], &config).unwrap();
        let report = analyze_run(&run, &config).unwrap();
        assert_eq!(sweep.points().len(), 1);
        assert_eq!(sweep.points()[0].mean_ids, report.ids);
    }

    #[test]
    fn sweep_identical_channels_is_flat() {
        // With empty responses both channels are all-zero similarity, so the
        // combination is independent of the weight.
        let mut run =
            generate_synthetic_run(&GenSpec { num_problems: 2, seed: 5, ..GenSpec::default() })
                .unwrap();
        for trace in &mut run.traces {
            for node in &mut trace.graph.nodes {
                node.response.clear();
            }
        }
        let sweep = lambda_sweep(&run, &[0.0, 1.0], &AnalysisConfig::default()).unwrap();
        assert_eq!(sweep.points()[0].mean_ids, sweep.points()[1].mean_ids);
    }

    #[test]
    fn sweep_is_affine_in_lambda() {
        let run = generate_synthetic_run(&GenSpec {
            num_problems: 5,
            seed: 8,
            edge_density: 0.7,
            ..GenSpec::default()
        })
        .unwrap();
        let sweep = lambda_sweep(&run, &[0.0, 0.5, 1.0], &AnalysisConfig::default()).unwrap();
        let at = |i: usize| sweep.points()[i].mean_ids.unwrap();
        assert!((at(1) - 0.5 * (at(0) + at(2))).abs() < 1e-9);
    }

    #[test]
    fn sweep_embeds_each_trace_exactly_once() {
        use crate::features::{EmbedError, EmbeddingProvider, EmbeddingVector, LocalHashProvider};
        use std::sync::atomic::{AtomicUsize, Ordering};

        struct CountingProvider(AtomicUsize);
        impl EmbeddingProvider for CountingProvider {
            fn name(&self) -> &str {
                "counting"
            }
            fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
                self.0.fetch_add(1, Ordering::SeqCst);
                LocalHashProvider.embed(texts)
            }
        }

        let run = generate_synthetic_run(&GenSpec { num_problems: 3, ..GenSpec::default() })
            .unwrap();
        let provider = CountingProvider(AtomicUsize::new(0));
        lambda_sweep_with_provider(
            &run,
            &[0.0, 0.25, 0.5, 0.75, 1.0],
            &AnalysisConfig::default(),
            &provider,
        )
        .unwrap();
        assert_eq!(provider.0.load(std::sync::atomic::Ordering::SeqCst), 3);
    }

    #[test]
    fn sweep_rejects_bad_grids() {
        let run = generate_synthetic_run(&GenSpec::default()).unwrap();
        let config = AnalysisConfig::default();
        assert!(matches!(
            lambda_sweep(&run, &[], &config),
            Err(ReportError::InvalidGrid(_))
        ));
        assert!(matches!(
            lambda_sweep(&run, &[0.5, 0.4], &config),
            Err(ReportError::InvalidGrid(_))
        ));
        assert!(matches!(
            lambda_sweep(&run, &[0.5, 1.5], &config),
            Err(ReportError::InvalidGrid(_))
        ));
    }

    #[test]
    fn default_grid_spans_unit_interval() {
        let grid = default_sweep_grid();
        assert_eq!(grid.len(), 11);
        assert_eq!(grid[0], 0.0);
        assert_eq!(grid[10], 1.0);
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn csv_has_header_and_one_row() {
        let table =
            aggregate(&[(meta("b", "m", "only"), columns(0.9, 1.0, 0.5, 0.4, 0.2))]).unwrap();
        let csv =
            render_comparison(&table, RenderOptions { format: RenderFormat::Csv, raw_values: false })
                .unwrap();
        let lines: Vec<&str> = csv.trim_end().lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(
            lines[0],
            "benchmark,model,method,accuracy,ptok,ctok,ids,upr,best_accuracy,best_ptok,best_ctok,best_ids,best_upr"
        );
        assert!(lines[1].starts_with("b,m,only,0.9000,1.00,0.50,0.40,0.20,true,"));
    }

    #[test]
    fn rendering_is_deterministic() {
        let table = aggregate(&[
            (meta("b", "m", "x"), columns(0.8, 1.2, 0.5, 0.4, 0.2)),
            (meta("b", "m", "y"), columns(0.9, 1.0, 0.6, 0.3, 0.1)),
        ])
        .unwrap();
        for format in [RenderFormat::Markdown, RenderFormat::Csv] {
            let options = RenderOptions { format, raw_values: false };
            let first = render_comparison(&table, options).unwrap();
            let second = render_comparison(&table, options).unwrap();
            assert_eq!(first, second);
            assert!(first.ends_with('\n'));
        }
    }

    #[test]
    fn markdown_groups_by_benchmark_and_bolds_best() {
        let table = aggregate(&[
            (meta("gsm8k", "m", "x"), columns(0.8, 1.2, 0.5, 0.4, 0.2)),
            (meta("aqua", "m", "y"), columns(0.9, 1.0, 0.6, 0.3, 0.1)),
        ])
        .unwrap();
        let md = render_comparison(
            &table,
            RenderOptions { format: RenderFormat::Markdown, raw_values: false },
        )
        .unwrap();
        assert!(md.contains("## gsm8k"));
        assert!(md.contains("## aqua"));
        assert!(md.contains("**0.8000**"));
    }

    #[test]
    fn undefined_metrics_render_empty() {
        let table = aggregate(&[(
            meta("b", "m", "x"),
            MetricColumns { accuracy: 0.5, ptok: 1.0, ctok: 0.5, ids: None, upr: None },
        )])
        .unwrap();
        let csv =
            render_comparison(&table, RenderOptions { format: RenderFormat::Csv, raw_values: false })
                .unwrap();
        assert!(csv.lines().nth(1).unwrap().contains(",0.50,,,"));
        let best = table.rows()[0].best;
        assert!(!best.ids && !best.upr);
    }

    #[test]
    fn sweep_csv_single_point_renders_two_lines() {
        let run = generate_synthetic_run(&GenSpec { num_problems: 2, ..GenSpec::default() })
            .unwrap();
        let sweep = lambda_sweep(&run, &[0.5], &AnalysisConfig::default()).unwrap();
        let csv = render_sweep(&sweep, RenderOptions { format: RenderFormat::Csv, raw_values: false })
            .unwrap();
        assert_eq!(csv.trim_end().lines().count(), 2);
        assert!(csv.starts_with("lambda1,mean_ids\n"));
    }

    #[test]
    fn delta_report_rows_and_na_cells() {
        let baseline = columns(0.8563, 10.15, 2.59, 0.39, 0.40);
        let candidate = columns(0.8742, 9.87, 2.24, 0.44, 0.08);
        let report = compare_columns(&baseline, &candidate);
        let upr = report.row("upr").unwrap();
        assert!((upr.delta_pct.unwrap() + 80.0).abs() < 1e-9);
        assert!((upr.ratio.unwrap() - 5.0).abs() < 1e-9);

        let zero_base = MetricColumns { accuracy: 0.0, ptok: 0.0, ctok: 0.0, ids: None, upr: None };
        let report = compare_columns(&zero_base, &candidate);
        assert_eq!(report.row("accuracy").unwrap().delta_pct, None);
        assert_eq!(report.row("ids").unwrap().delta_pct, None);
        let md = render_delta(
            &report,
            RenderOptions { format: RenderFormat::Markdown, raw_values: false },
        )
        .unwrap();
        assert!(md.contains("n/a"));

        let identical = compare_columns(&baseline, &baseline);
        for row in identical.rows() {
            assert_eq!(row.delta_pct, Some(0.0));
        }
    }
}
