//! Result tables and their CSV / Markdown renderings.
//!
//! All arithmetic upstream is full precision; rounding happens here only.
//! Coefficients render with 3 decimals, descriptive statistics with 1.
//! Output is locale independent (ASCII `-`, `.` decimal point) and a
//! negative zero never shows up as `-0.000`.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::flows::{FlowObservation, SUMMARY_VARIABLES};
use crate::ingest::CategoryMap;
use crate::model::{Context, SchemeLevel};
use crate::regress::{classify, GravityFit, Significance};
use crate::stats::{summarize, StatsRow};

/// A fit for one category in one context.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScopeFit {
    pub context: Context,
    pub scheme: SchemeLevel,
    pub category: String,
    pub fit: GravityFit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ColumnKind {
    Text,
    Count,
    /// 3 decimals.
    Coefficient,
    /// 3 decimals plus a significance mark: one column in Markdown, two in CSV.
    Marked,
    /// 3 decimals, bracketed in Markdown.
    StdError,
    /// 1 decimal.
    Descriptive,
    /// 4 decimals.
    Probability,
    /// Shortest round-trip representation.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Cell {
    Text(String),
    Count(usize),
    Number(f64),
    Marked(f64, Significance),
    Missing,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(name: impl Into<String>, columns: &[(&str, ColumnKind)]) -> Self {
        Table {
            name: name.into(),
            columns: columns
                .iter()
                .map(|(n, k)| Column {
                    name: n.to_string(),
                    kind: *k,
                })
                .collect(),
            rows: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Markdown,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Markdown => "md",
        }
    }
}

/// Fixed-point rendering without a negative zero.
pub fn fixed(value: f64, decimals: usize) -> String {
    let text = format!("{value:.decimals$}");
    match text.strip_prefix('-') {
        Some(rest) if rest.bytes().all(|b| b == b'0' || b == b'.') => rest.to_string(),
        _ => text,
    }
}

fn render_number(value: f64, kind: ColumnKind) -> String {
    match kind {
        ColumnKind::Descriptive => fixed(value, 1),
        ColumnKind::Probability => fixed(value, 4),
        ColumnKind::Exact => value.to_string(),
        _ => fixed(value, 3),
    }
}

fn render_cells(cell: &Cell, kind: ColumnKind, format: Format) -> Vec<String> {
    let text = match cell {
        Cell::Text(s) => s.clone(),
        Cell::Count(n) => n.to_string(),
        Cell::Number(v) => render_number(*v, kind),
        Cell::Marked(v, mark) => {
            let number = render_number(*v, kind);
            return match format {
                Format::Csv => vec![number, mark.as_str().to_string()],
                Format::Markdown => vec![format!("{number} {mark}")],
            };
        }
        Cell::Missing => String::new(),
    };
    match (format, kind) {
        (Format::Csv, ColumnKind::Marked) => vec![text, String::new()],
        (Format::Markdown, ColumnKind::StdError) if !text.is_empty() => vec![format!("({text})")],
        _ => vec![text],
    }
}

fn markdown_escape(text: &str) -> String {
    text.replace('|', "\\|")
}

/// Render a table. Identical input always gives identical bytes.
pub fn emit(table: &Table, format: Format) -> Vec<u8> {
    match format {
        Format::Csv => {
            let mut out = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(Vec::new());
            let header: Vec<String> = table
                .columns
                .iter()
                .flat_map(|c| match c.kind {
                    ColumnKind::Marked => vec![c.name.clone(), format!("{}_mark", c.name)],
                    _ => vec![c.name.clone()],
                })
                .collect();
            out.write_record(&header).expect("writing to memory");
            for row in &table.rows {
                let fields: Vec<String> = row
                    .iter()
                    .zip(&table.columns)
                    .flat_map(|(cell, col)| render_cells(cell, col.kind, Format::Csv))
                    .collect();
                out.write_record(&fields).expect("writing to memory");
            }
            out.into_inner().expect("flushing to memory")
        }
        Format::Markdown => {
            let mut text = format!("### {}\n\n", table.name);
            let names: Vec<String> = table.columns.iter().map(|c| markdown_escape(&c.name)).collect();
            text.push_str(&format!("| {} |\n", names.join(" | ")));
            let rule: Vec<&str> = table
                .columns
                .iter()
                .map(|c| if c.kind == ColumnKind::Text { "---" } else { "---:" })
                .collect();
            text.push_str(&format!("|{}|\n", rule.join("|")));
            for row in &table.rows {
                let cells: Vec<String> = row
                    .iter()
                    .zip(&table.columns)
                    .flat_map(|(cell, col)| render_cells(cell, col.kind, Format::Markdown))
                    .map(|s| markdown_escape(&s))
                    .collect();
                text.push_str(&format!("| {} |\n", cells.join(" | ")));
            }
            text.into_bytes()
        }
    }
}

/// Keep fits with strictly more than `min_observations` rows.
pub fn qualifying(fits: &[ScopeFit], min_observations: usize) -> impl Iterator<Item = &ScopeFit> {
    fits.iter().filter(move |f| f.fit.n > min_observations)
}

/// One row per fit, ordered by context then category code.
pub fn fit_table(name: &str, fits: &[ScopeFit], level: SchemeLevel) -> Table {
    use ColumnKind::*;
    let mut columns = vec![
        ("category", Text),
        ("n", Count),
        ("m_i", Marked),
        ("m_j", Marked),
        ("d_ij", Marked),
    ];
    if level == SchemeLevel::Sc {
        columns.push(("d_ij_se", StdError));
    }
    columns.extend([("const", Marked), ("r2", Coefficient)]);
    let mut table = Table::new(name, &columns);
    let mut sorted: Vec<&ScopeFit> = fits.iter().collect();
    sorted.sort_by(|a, b| (a.context, &a.category).cmp(&(b.context, &b.category)));
    for scope in sorted {
        let f = &scope.fit;
        let mut row = vec![
            Cell::Text(scope.category.clone()),
            Cell::Count(f.n),
            Cell::Marked(f.alpha.estimate, f.alpha.mark),
            Cell::Marked(f.beta.estimate, f.beta.mark),
            Cell::Marked(f.distance.estimate, f.distance.mark),
        ];
        if level == SchemeLevel::Sc {
            row.push(Cell::Number(f.distance.robust_se));
        }
        row.extend([Cell::Marked(f.ln_k.estimate, f.ln_k.mark), Cell::Number(f.r2)]);
        table.rows.push(row);
    }
    table
}

/// Full-precision fit dump with standard errors and p-values for every
/// coefficient.
pub fn fit_detail_table(name: &str, fits: &[ScopeFit]) -> Table {
    use ColumnKind::*;
    let mut columns: Vec<(&str, ColumnKind)> = vec![("context", Text), ("scheme", Text), ("category", Text), ("n", Count)];
    let names = [
        ["ln_k", "ln_k_se", "ln_k_p"],
        ["alpha", "alpha_se", "alpha_p"],
        ["beta", "beta_se", "beta_p"],
        ["distance", "distance_se", "distance_p"],
    ];
    for [est, se, p] in &names {
        columns.extend([(*est, Exact), (*se, Exact), (*p, Exact)]);
    }
    columns.push(("r2", Exact));
    let mut table = Table::new(name, &columns);
    for scope in fits {
        let mut row = vec![
            Cell::Text(scope.context.to_string()),
            Cell::Text(scope.scheme.to_string()),
            Cell::Text(scope.category.clone()),
            Cell::Count(scope.fit.n),
        ];
        for c in scope.fit.coefficients() {
            row.extend([Cell::Number(c.estimate), Cell::Number(c.robust_se), Cell::Number(c.p_value)]);
        }
        row.push(Cell::Number(scope.fit.r2));
        table.rows.push(row);
    }
    table
}

/// Summary statistics per category, one row per model variable.
pub fn descriptives_table(name: &str, summaries: &BTreeMap<String, [StatsRow; 4]>) -> Table {
    use ColumnKind::*;
    let mut table = Table::new(
        name,
        &[
            ("category", Text),
            ("var", Text),
            ("obs", Count),
            ("mean", Descriptive),
            ("p25", Descriptive),
            ("p50", Descriptive),
            ("p75", Descriptive),
            ("sd", Descriptive),
            ("cv", Descriptive),
            ("max", Descriptive),
        ],
    );
    for (category, rows) in summaries {
        for (var, s) in SUMMARY_VARIABLES.iter().zip(rows) {
            table.rows.push(vec![
                Cell::Text(category.clone()),
                Cell::Text(var.to_string()),
                Cell::Count(s.n),
                Cell::Number(s.mean),
                Cell::Number(s.p25),
                Cell::Number(s.p50),
                Cell::Number(s.p75),
                Cell::Number(s.sd),
                s.cv.map(Cell::Number).unwrap_or(Cell::Missing),
                Cell::Number(s.max),
            ]);
        }
    }
    table
}

pub fn observations_table(name: &str, observations: &[FlowObservation]) -> Table {
    use ColumnKind::*;
    let mut table = Table::new(
        name,
        &[
            ("context", Text),
            ("category", Text),
            ("i", Text),
            ("j", Text),
            ("cites", Count),
            ("m_i", Exact),
            ("m_j", Exact),
            ("d_km", Exact),
        ],
    );
    for o in observations {
        table.rows.push(vec![
            Cell::Text(o.context.to_string()),
            Cell::Text(o.category.clone()),
            Cell::Text(o.i.to_string()),
            Cell::Text(o.j.to_string()),
            Cell::Count(o.cites as usize),
            Cell::Number(o.m_i),
            Cell::Number(o.m_j),
            Cell::Number(o.d_km),
        ]);
    }
    table
}

/// Spread of significant distance coefficients across the subject
/// categories of one area.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaDistributionRow {
    pub area: String,
    pub context: Context,
    pub n_categories: usize,
    pub min: f64,
    pub max: f64,
    pub sd: f64,
}

fn significant_distance(scope: &ScopeFit, thresholds: [f64; 3]) -> bool {
    classify(scope.fit.distance.p_value, thresholds).is_ok_and(Significance::is_significant)
}

/// Per area and context: min, max and sample sd of the distance coefficient
/// over subject-category fits with more than `min_observations` rows and a
/// significant distance term. Areas with no such category are omitted.
pub fn gamma_distribution(
    sc_fits: &[ScopeFit],
    map: &CategoryMap,
    min_observations: usize,
    thresholds: [f64; 3],
) -> Vec<GammaDistributionRow> {
    let mut groups: BTreeMap<(String, Context), Vec<f64>> = BTreeMap::new();
    for scope in qualifying(sc_fits, min_observations) {
        if scope.scheme != SchemeLevel::Sc || !significant_distance(scope, thresholds) {
            continue;
        }
        let Some(area) = map.area_of(&scope.category) else {
            continue;
        };
        groups
            .entry((area.to_string(), scope.context))
            .or_default()
            .push(scope.fit.distance.estimate);
    }
    let mut rows = Vec::new();
    for area in map.area_codes() {
        for context in Context::ALL {
            match groups.get(&(area.to_string(), context)) {
                Some(values) => {
                    let s = summarize(values).expect("groups are non-empty and finite");
                    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
                    rows.push(GammaDistributionRow {
                        area: area.to_string(),
                        context,
                        n_categories: values.len(),
                        min,
                        max: s.max,
                        sd: s.sd,
                    });
                }
                None => {
                    let fitted = sc_fits
                        .iter()
                        .any(|f| f.context == context && map.area_of(&f.category) == Some(area));
                    if fitted {
                        log::info!("{area} ({context}): no qualifying category with a significant distance term");
                    }
                }
            }
        }
    }
    rows
}

pub fn gamma_distribution_table(rows: &[GammaDistributionRow]) -> Table {
    use ColumnKind::*;
    let mut table = Table::new(
        "gamma_distribution",
        &[
            ("area", Text),
            ("context", Text),
            ("n_categories", Count),
            ("min", Coefficient),
            ("max", Coefficient),
            ("sd", Coefficient),
        ],
    );
    for r in rows {
        table.rows.push(vec![
            Cell::Text(r.area.clone()),
            Cell::Text(r.context.to_string()),
            Cell::Count(r.n_categories),
            Cell::Number(r.min),
            Cell::Number(r.max),
            Cell::Number(r.sd),
        ]);
    }
    table
}

pub const TOTAL_ROW: &str = "Total";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GammaCountRow {
    pub area: String,
    pub context: Context,
    pub n_significant: usize,
    pub n_negative: usize,
}

/// Per area and context: subject categories with a significant distance
/// coefficient, and how many of those are negative. A [`TOTAL_ROW`] per
/// context closes the list. Every area of the map gets a row for every
/// context in `contexts`.
pub fn gamma_counts(sc_fits: &[ScopeFit], map: &CategoryMap, thresholds: [f64; 3], contexts: &[Context]) -> Vec<GammaCountRow> {
    let mut counts: BTreeMap<(&str, Context), (usize, usize)> = BTreeMap::new();
    for area in map.area_codes() {
        for &context in contexts {
            counts.insert((area, context), (0, 0));
        }
    }
    for scope in sc_fits {
        if scope.scheme != SchemeLevel::Sc || !significant_distance(scope, thresholds) {
            continue;
        }
        let Some(area) = map.area_of(&scope.category) else {
            continue;
        };
        if let Some(entry) = counts.get_mut(&(area, scope.context)) {
            entry.0 += 1;
            if scope.fit.distance.estimate < 0.0 {
                entry.1 += 1;
            }
        }
    }
    let mut rows = Vec::new();
    for &context in contexts {
        let mut total = (0, 0);
        for ((area, ctx), (sig, neg)) in &counts {
            if *ctx != context {
                continue;
            }
            total.0 += sig;
            total.1 += neg;
            rows.push(GammaCountRow {
                area: area.to_string(),
                context,
                n_significant: *sig,
                n_negative: *neg,
            });
        }
        rows.push(GammaCountRow {
            area: TOTAL_ROW.to_string(),
            context,
            n_significant: total.0,
            n_negative: total.1,
        });
    }
    rows
}

pub fn gamma_counts_table(rows: &[GammaCountRow]) -> Table {
    use ColumnKind::*;
    let mut table = Table::new(
        "gamma_counts",
        &[("area", Text), ("context", Text), ("n_significant", Count), ("n_negative", Count)],
    );
    for r in rows {
        table.rows.push(vec![
            Cell::Text(r.area.clone()),
            Cell::Text(r.context.to_string()),
            Cell::Count(r.n_significant),
            Cell::Count(r.n_negative),
        ]);
    }
    table
}
