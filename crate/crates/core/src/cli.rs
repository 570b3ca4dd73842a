//! Subcommand implementations behind the `gravflow` binary.
//!
//! Exit status contract: 0 success, 1 domain failure (bad data, no
//! observations, violations found), 2 usage or I/O failure.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flows::{build_observations, descriptive_summary, FlowObservation};
use crate::ingest::{self, CategoryMap, Gazetteer, IngestError, PublicationFormat};
use crate::mass::{citing_profiles, ScWeightProfile};
use crate::model::{
    resolve_edges, validate_categories, validate_corpus, AnalysisConfig, CategoryScheme, CitationEdge, Context,
    PublicationRecord, SchemeLevel, TerritoryKind, Violation,
};
use crate::regress::{fit_ols_with, log_transform, FitOptions, RegressError};
use crate::report::{self, Cell, ColumnKind, Format, ScopeFit, Table};
use crate::synth::{self, SynthError, SynthSpec};
use crate::territory::AssignmentTable;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{stage}: {message}")]
    Stage { stage: &'static str, message: String },
    #[error("no observations for {context} / {scheme}")]
    NoObservations { context: Context, scheme: SchemeLevel },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io { .. } => EXIT_USAGE,
            CliError::Stage { .. } | CliError::NoObservations { .. } => EXIT_DOMAIN,
        }
    }

    fn stage(stage: &'static str, message: impl ToString) -> Self {
        CliError::Stage {
            stage,
            message: message.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SchemeSelection {
    Sc,
    Da,
    #[default]
    Both,
}

impl SchemeSelection {
    pub fn levels(self) -> Vec<SchemeLevel> {
        match self {
            SchemeSelection::Sc => vec![SchemeLevel::Sc],
            SchemeSelection::Da => vec![SchemeLevel::Da],
            SchemeSelection::Both => vec![SchemeLevel::Sc, SchemeLevel::Da],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ContextSelection {
    National,
    Continental,
    Intercontinental,
    All,
}

impl ContextSelection {
    pub fn contexts(self) -> Vec<Context> {
        match self {
            ContextSelection::National => vec![Context::National],
            ContextSelection::Continental => vec![Context::Continental],
            ContextSelection::Intercontinental => vec![Context::Intercontinental],
            ContextSelection::All => Context::ALL.to_vec(),
        }
    }
}

impl From<Context> for ContextSelection {
    fn from(context: Context) -> Self {
        match context {
            Context::National => ContextSelection::National,
            Context::Continental => ContextSelection::Continental,
            Context::Intercontinental => ContextSelection::Intercontinental,
        }
    }
}

/// Contents of the JSON config file. Relative paths resolve against the
/// directory holding the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub publications: PathBuf,
    pub citations: PathBuf,
    pub gazetteer: PathBuf,
    pub category_map: PathBuf,
    pub out: PathBuf,
    pub scheme: SchemeSelection,
    /// When absent, `analysis.context` alone is run.
    pub context: Option<ContextSelection>,
    pub analysis: AnalysisConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            publications: synth::PUBLICATIONS_FILE.into(),
            citations: synth::CITATIONS_FILE.into(),
            gazetteer: synth::GAZETTEER_FILE.into(),
            category_map: synth::CATEGORY_MAP_FILE.into(),
            out: "results".into(),
            scheme: SchemeSelection::default(),
            context: None,
            analysis: AnalysisConfig::default(),
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub scheme: Option<SchemeSelection>,
    pub context: Option<ContextSelection>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    /// Read `path`, or start from defaults relative to the working directory.
    pub fn load(path: Option<&Path>) -> Result<RunConfig, CliError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut config.publications,
            &mut config.citations,
            &mut config.gazetteer,
            &mut config.category_map,
            &mut config.out,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn apply(mut self, overrides: &Overrides) -> Result<RunConfig, CliError> {
        if let Some(s) = overrides.scheme {
            self.scheme = s;
        }
        if let Some(c) = overrides.context {
            self.context = Some(c);
        }
        if let Some(out) = &overrides.out {
            self.out = out.clone();
        }
        self.check()?;
        Ok(self)
    }

    fn check(&self) -> Result<(), CliError> {
        for (name, p) in [
            ("publications", &self.publications),
            ("citations", &self.citations),
            ("gazetteer", &self.gazetteer),
            ("category_map", &self.category_map),
            ("out", &self.out),
        ] {
            if p.as_os_str().is_empty() {
                return Err(CliError::Usage(format!("{name} path is empty")));
            }
        }
        self.analysis.validate().map_err(|e| CliError::Usage(e.to_string()))
    }

    pub fn contexts(&self) -> Vec<Context> {
        self.context
            .unwrap_or_else(|| self.analysis.context.into())
            .contexts()
    }
}

/// The four parsed inputs.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub publications: Vec<PublicationRecord>,
    pub citations: Vec<CitationEdge>,
    pub gazetteer: Gazetteer,
    pub category_map: CategoryMap,
}

fn open(path: &Path) -> Result<BufReader<fs::File>, CliError> {
    fs::File::open(path).map(BufReader::new).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn ingest_failure(path: &Path, error: IngestError) -> CliError {
    match error {
        IngestError::Io(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => CliError::stage("ingest", format!("{}: {}", path.display(), other.messages().join("; "))),
    }
}

pub fn load_inputs(config: &RunConfig) -> Result<Inputs, CliError> {
    let format = PublicationFormat::from_path(&config.publications);
    let publications = ingest::parse_publications(open(&config.publications)?, format)
        .map_err(|e| ingest_failure(&config.publications, e))?;
    let citations = ingest::parse_citations(open(&config.citations)?).map_err(|e| ingest_failure(&config.citations, e))?;
    let gazetteer = ingest::parse_gazetteer(open(&config.gazetteer)?).map_err(|e| ingest_failure(&config.gazetteer, e))?;
    let category_map =
        ingest::parse_category_map(open(&config.category_map)?).map_err(|e| ingest_failure(&config.category_map, e))?;
    Ok(Inputs {
        publications,
        citations: citations.edges,
        gazetteer,
        category_map,
    })
}

/// Corpus and category-map violations, sorted.
pub fn violations(inputs: &Inputs) -> Vec<Violation> {
    let mut all = validate_corpus(&inputs.publications, &inputs.citations, &inputs.gazetteer);
    all.extend(validate_categories(&inputs.publications, &inputs.category_map));
    all.sort();
    all
}

/// Load and check the inputs. Returns the violations found; the caller
/// prints them and exits 1 when there are any.
pub fn cmd_validate(config: &RunConfig) -> Result<Vec<Violation>, CliError> {
    let inputs = load_inputs(config)?;
    Ok(violations(&inputs))
}

/// Fits of one scheme and context.
#[derive(Debug, Clone, Default)]
pub struct CategoryFits {
    pub fits: Vec<ScopeFit>,
    /// Categories with too few observations, and their counts.
    pub too_small: Vec<(String, usize)>,
    pub failed: Vec<(String, RegressError)>,
}

/// Group rows by category and fit every category with strictly more than
/// `config.min_observations` rows. Output is in category order whatever the
/// thread count.
pub fn fit_categories(
    context: Context,
    scheme: SchemeLevel,
    observations: &[FlowObservation],
    config: &AnalysisConfig,
) -> CategoryFits {
    use rayon::prelude::*;
    let options = FitOptions {
        covariance: config.covariance,
        thresholds: config.significance_thresholds,
    };
    let groups = group_by_category(observations);
    let mut out = CategoryFits::default();
    let mut eligible = Vec::new();
    for (category, rows) in groups {
        if rows.len() > config.min_observations {
            eligible.push((category, rows));
        } else {
            out.too_small.push((category.to_string(), rows.len()));
        }
    }
    let results: Vec<(String, Result<ScopeFit, RegressError>)> = eligible
        .into_par_iter()
        .map(|(category, rows)| {
            let fit = log_transform(&rows)
                .and_then(|design| fit_ols_with(&design, &options))
                .map(|fit| ScopeFit {
                    context,
                    scheme,
                    category: category.to_string(),
                    fit,
                });
            (category.to_string(), fit)
        })
        .collect();
    for (category, result) in results {
        match result {
            Ok(fit) => out.fits.push(fit),
            Err(e) => {
                log::warn!("{context} {scheme} {category}: fit skipped: {e}");
                out.failed.push((category, e));
            }
        }
    }
    out
}

fn group_by_category(observations: &[FlowObservation]) -> BTreeMap<&str, Vec<FlowObservation>> {
    let mut groups: BTreeMap<&str, Vec<FlowObservation>> = BTreeMap::new();
    for o in observations {
        groups.entry(o.category.as_str()).or_default().push(o.clone());
    }
    groups
}

/// Everything `run` produces, held in memory until written.
#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    /// (file name, contents) in write order.
    pub files: Vec<(String, Vec<u8>)>,
    /// One line per fit.
    pub summary: Vec<String>,
}

fn push_table(files: &mut Vec<(String, Vec<u8>)>, stem: &str, table: &Table, markdown: bool) {
    files.push((format!("{stem}.csv"), report::emit(table, Format::Csv)));
    if markdown {
        files.push((format!("{stem}.md"), report::emit(table, Format::Markdown)));
    }
}

fn assignments_table(publications: &[PublicationRecord], assignments: &AssignmentTable) -> Table {
    let mut table = Table {
        name: "assignments".into(),
        columns: ["pub_id", "convention", "level", "territory", "exclusion"]
            .into_iter()
            .map(|name| report::Column {
                name: name.into(),
                kind: ColumnKind::Text,
            })
            .collect(),
        rows: Vec::new(),
    };
    for (k, p) in publications.iter().enumerate() {
        let entries = [
            ("author", TerritoryKind::Municipality, &assignments.cited_municipality[k]),
            ("author", TerritoryKind::Country, &assignments.cited_country[k]),
            ("address", TerritoryKind::Municipality, &assignments.citing_municipality[k]),
            ("address", TerritoryKind::Country, &assignments.citing_country[k]),
        ];
        for (convention, level, result) in entries {
            let (territory, exclusion) = match result {
                Ok(t) => (t.to_string(), String::new()),
                Err(e) => (String::new(), e.to_string()),
            };
            table.rows.push(vec![
                Cell::Text(p.id.clone()),
                Cell::Text(convention.into()),
                Cell::Text(level.to_string()),
                Cell::Text(territory),
                Cell::Text(exclusion),
            ]);
        }
    }
    table
}

fn profiles_table(scheme: SchemeLevel, profiles: &BTreeMap<String, ScWeightProfile>) -> Table {
    let mut table = Table {
        name: format!("profiles_{scheme}"),
        columns: vec![
            report::Column {
                name: "cited_category".into(),
                kind: ColumnKind::Text,
            },
            report::Column {
                name: "citing_category".into(),
                kind: ColumnKind::Text,
            },
            report::Column {
                name: "weight".into(),
                kind: ColumnKind::Exact,
            },
        ],
        rows: Vec::new(),
    };
    for (cited, profile) in profiles {
        for (citing, w) in profile.weights() {
            table
                .rows
                .push(vec![Cell::Text(cited.clone()), Cell::Text(citing.clone()), Cell::Number(*w)]);
        }
    }
    table
}

fn summary_line(scope: &ScopeFit) -> String {
    let f = &scope.fit;
    format!(
        "{} {} {} n={} ln_k={}{} alpha={}{} beta={}{} distance={}{} r2={}",
        scope.context,
        scope.scheme,
        scope.category,
        f.n,
        report::fixed(f.ln_k.estimate, 3),
        f.ln_k.mark,
        report::fixed(f.alpha.estimate, 3),
        f.alpha.mark,
        report::fixed(f.beta.estimate, 3),
        f.beta.mark,
        report::fixed(f.distance.estimate, 3),
        f.distance.mark,
        report::fixed(f.r2, 3),
    )
}

/// Run the whole pipeline in memory: assign, profile, build flows, fit,
/// tabulate. Nothing is written.
pub fn compute_run(config: &RunConfig, inputs: &Inputs) -> Result<RunOutput, CliError> {
    let found = validate_corpus(&inputs.publications, &inputs.citations, &inputs.gazetteer);
    let levels = config.scheme.levels();
    let mut found = found;
    if levels.contains(&SchemeLevel::Da) {
        found.extend(validate_categories(&inputs.publications, &inputs.category_map));
    }
    if let Some(first) = found.first() {
        return Err(CliError::stage(
            "validate",
            format!("{} violation(s), first: {first}", found.len()),
        ));
    }
    let analysis = &config.analysis;
    let pubs = &inputs.publications;
    let edges = resolve_edges(pubs, &inputs.citations).map_err(|v| CliError::stage("validate", v))?;
    let assignments = AssignmentTable::compute(pubs, analysis.majority_rule);
    let contexts = config.contexts();

    let mut out = RunOutput::default();
    push_table(&mut out.files, "assignments", &assignments_table(pubs, &assignments), false);
    let mut sc_fits = Vec::new();
    for level in levels {
        let scheme = match level {
            SchemeLevel::Sc => CategoryScheme::Subject,
            SchemeLevel::Da => CategoryScheme::Area(&inputs.category_map),
        };
        let profiles = citing_profiles(scheme, pubs, &edges, &assignments, analysis);
        push_table(&mut out.files, &format!("profiles_{level}"), &profiles_table(level, &profiles), false);
        for &context in &contexts {
            let cfg = analysis.with_context(context);
            let set = build_observations(&cfg, scheme, pubs, &edges, &assignments, &inputs.gazetteer, &profiles)
                .map_err(|e| CliError::stage("flows", e))?;
            if set.observations.is_empty() {
                return Err(CliError::NoObservations { context, scheme: level });
            }
            log::info!(
                "{context} {level}: {} observations, {} same-territory dyads dropped",
                set.observations.len(),
                set.dropped_same_territory
            );
            let stem = format!("{context}_{level}");
            let mut summaries = BTreeMap::new();
            for (category, rows) in group_by_category(&set.observations) {
                let s = descriptive_summary(&rows).map_err(|e| CliError::stage("descriptives", e))?;
                summaries.insert(category.to_string(), s);
            }
            let fits = fit_categories(context, level, &set.observations, &cfg);
            for (category, n) in &fits.too_small {
                log::info!("{context} {level} {category}: {n} observations, not fitted");
            }
            out.summary.extend(fits.fits.iter().map(summary_line));
            push_table(
                &mut out.files,
                &format!("observations_{stem}"),
                &report::observations_table(&format!("observations_{stem}"), &set.observations),
                false,
            );
            push_table(
                &mut out.files,
                &format!("descriptives_{stem}"),
                &report::descriptives_table(&format!("descriptives_{stem}"), &summaries),
                true,
            );
            push_table(
                &mut out.files,
                &format!("fits_{stem}"),
                &report::fit_table(&format!("fits_{stem}"), &fits.fits, level),
                true,
            );
            push_table(
                &mut out.files,
                &format!("fit_details_{stem}"),
                &report::fit_detail_table(&format!("fit_details_{stem}"), &fits.fits),
                false,
            );
            if level == SchemeLevel::Sc {
                sc_fits.extend(fits.fits);
            }
        }
    }
    if config.scheme.levels().contains(&SchemeLevel::Sc) {
        let thresholds = analysis.significance_thresholds;
        let distribution =
            report::gamma_distribution(&sc_fits, &inputs.category_map, analysis.min_observations, thresholds);
        push_table(&mut out.files, "gamma_distribution", &report::gamma_distribution_table(&distribution), true);
        let counts = report::gamma_counts(&sc_fits, &inputs.category_map, thresholds, &contexts);
        push_table(&mut out.files, "gamma_counts", &report::gamma_counts_table(&counts), true);
    }
    Ok(out)
}

/// Write every file into `dir`. On failure, files already written by this
/// call are removed.
pub fn write_outputs(dir: &Path, output: &RunOutput) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    for (name, bytes) in &output.files {
        let path = dir.join(name);
        if let Err(source) = fs::write(&path, bytes) {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            return Err(CliError::Io { path, source });
        }
        written.push(path);
    }
    Ok(())
}

/// Build a worker pool of `jobs` threads (all cores when `None`).
pub fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    if jobs == Some(0) {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))
}

/// Load, compute and write. Returns the per-fit summary lines.
pub fn cmd_run(config: &RunConfig, jobs: Option<usize>) -> Result<Vec<String>, CliError> {
    let pool = pool(jobs)?;
    let output = pool.install(|| -> Result<RunOutput, CliError> {
        let inputs = load_inputs(config)?;
        compute_run(config, &inputs)
    })?;
    write_outputs(&config.out, &output)?;
    Ok(output.summary)
}

/// Read a synth spec (defaults when `spec` is `None`), optionally reseed,
/// generate a corpus and write it with its manifest into `out`.
pub fn cmd_simulate(spec: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let mut synth_spec = match spec {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| CliError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            serde_json::from_str::<SynthSpec>(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        }
        None => SynthSpec::default(),
    };
    if let Some(seed) = seed {
        synth_spec.seed = seed;
    }
    let (corpus, manifest) = synth::generate_corpus(&synth_spec).map_err(|e| match e {
        SynthError::Io(source) => CliError::Io {
            path: out.to_path_buf(),
            source,
        },
        other => CliError::Usage(other.to_string()),
    })?;
    synth::write_corpus(out, &corpus, &manifest).map_err(|source| CliError::Io {
        path: out.to_path_buf(),
        source,
    })
}
