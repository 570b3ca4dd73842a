//! Domain types shared by every stage of the pipeline.
//!
//! Territory references in input files use a compact textual form:
//! `CC:code` names a municipality `code` inside country `CC`, and a bare
//! `CC` names a country.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{CategoryMap, Gazetteer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TerritoryKind {
    Municipality,
    Country,
}

impl TerritoryKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TerritoryKind::Municipality => "municipality",
            TerritoryKind::Country => "country",
        }
    }
}

impl fmt::Display for TerritoryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Continent {
    #[serde(rename = "Europe")]
    Europe,
    #[serde(rename = "extra-Europe")]
    ExtraEurope,
}

impl Continent {
    pub fn as_str(self) -> &'static str {
        match self {
            Continent::Europe => "Europe",
            Continent::ExtraEurope => "extra-Europe",
        }
    }
}

impl FromStr for Continent {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Europe" => Ok(Continent::Europe),
            "extra-Europe" => Ok(Continent::ExtraEurope),
            other => Err(format!("unknown continent {other:?}")),
        }
    }
}

/// A municipality (LAU) or a country.
///
/// Municipalities always carry the code of the country they belong to, so a
/// municipality can be projected to country level without a gazetteer.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TerritoryId {
    Municipality { country: String, code: String },
    Country(String),
}

impl TerritoryId {
    pub fn municipality(country: impl Into<String>, code: impl Into<String>) -> Self {
        TerritoryId::Municipality {
            country: country.into(),
            code: code.into(),
        }
    }

    pub fn country(code: impl Into<String>) -> Self {
        TerritoryId::Country(code.into())
    }

    pub fn kind(&self) -> TerritoryKind {
        match self {
            TerritoryId::Municipality { .. } => TerritoryKind::Municipality,
            TerritoryId::Country(_) => TerritoryKind::Country,
        }
    }

    /// The municipality or country code on its own.
    pub fn code(&self) -> &str {
        match self {
            TerritoryId::Municipality { code, .. } => code,
            TerritoryId::Country(code) => code,
        }
    }

    /// Country this territory belongs to (itself, for a country).
    pub fn country_code(&self) -> &str {
        match self {
            TerritoryId::Municipality { country, .. } => country,
            TerritoryId::Country(code) => code,
        }
    }

    /// Collapse to the requested granularity. A country cannot be refined to
    /// a municipality and is returned unchanged.
    pub fn project(&self, level: TerritoryKind) -> TerritoryId {
        match (self, level) {
            (TerritoryId::Municipality { country, .. }, TerritoryKind::Country) => {
                TerritoryId::Country(country.clone())
            }
            _ => self.clone(),
        }
    }
}

impl fmt::Display for TerritoryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TerritoryId::Municipality { country, code } => write!(f, "{country}:{code}"),
            TerritoryId::Country(code) => f.write_str(code),
        }
    }
}

impl FromStr for TerritoryId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s.split_once(':') {
            Some((country, code)) => {
                if country.is_empty() || code.is_empty() || code.contains(':') {
                    return Err(format!("malformed territory reference {s:?}"));
                }
                Ok(TerritoryId::municipality(country, code))
            }
            None if s.is_empty() => Err("empty territory reference".to_string()),
            None => Ok(TerritoryId::country(s)),
        }
    }
}

impl Serialize for TerritoryId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TerritoryId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One indexed publication with the territory evidence used for assignment.
///
/// `address_territories` keeps duplicates: a corresponding author's
/// affiliation appears twice in an address list and is counted twice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicationRecord {
    pub id: String,
    pub year: i32,
    pub categories: Vec<String>,
    #[serde(default)]
    pub author_territories: Vec<TerritoryId>,
    #[serde(default)]
    pub address_territories: Vec<TerritoryId>,
}

/// Directed citing -> cited pair.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CitationEdge {
    pub citing_id: String,
    pub cited_id: String,
}

impl CitationEdge {
    pub fn new(citing: impl Into<String>, cited: impl Into<String>) -> Self {
        CitationEdge {
            citing_id: citing.into(),
            cited_id: cited.into(),
        }
    }
}

/// Inclusive calendar-year range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearRange {
    pub start: i32,
    pub end: i32,
}

impl YearRange {
    pub const fn new(start: i32, end: i32) -> Self {
        YearRange { start, end }
    }

    pub fn contains(&self, year: i32) -> bool {
        (self.start..=self.end).contains(&year)
    }

    pub fn is_empty(&self) -> bool {
        self.start > self.end
    }
}

impl fmt::Display for YearRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.start, self.end)
    }
}

/// Geographic context of a flow analysis, defined by where the citing side sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Context {
    /// Home municipality -> home municipality.
    National,
    /// Home municipality -> European country other than home.
    Continental,
    /// Home municipality -> non-European country.
    Intercontinental,
}

impl Context {
    pub const ALL: [Context; 3] = [Context::National, Context::Continental, Context::Intercontinental];

    pub fn as_str(self) -> &'static str {
        match self {
            Context::National => "national",
            Context::Continental => "continental",
            Context::Intercontinental => "intercontinental",
        }
    }

    /// Granularity at which citing publications are assigned.
    pub fn citing_level(self) -> TerritoryKind {
        match self {
            Context::National => TerritoryKind::Municipality,
            _ => TerritoryKind::Country,
        }
    }
}

impl fmt::Display for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Context {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "national" => Ok(Context::National),
            "continental" => Ok(Context::Continental),
            "intercontinental" => Ok(Context::Intercontinental),
            other => Err(format!("unknown context {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MajorityRule {
    /// More than half of the evidence.
    #[default]
    Strict,
    /// Unique maximum, ties excluded.
    Plurality,
}

/// Category granularity: fine subject categories or coarse areas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeLevel {
    Sc,
    Da,
}

impl SchemeLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            SchemeLevel::Sc => "sc",
            SchemeLevel::Da => "da",
        }
    }
}

impl fmt::Display for SchemeLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The category scheme the pipeline runs over. Under the area scheme a
/// publication belongs to every area reached by any of its subject
/// categories (full counting carried through the map).
#[derive(Debug, Clone, Copy)]
pub enum CategoryScheme<'a> {
    Subject,
    Area(&'a CategoryMap),
}

impl<'a> CategoryScheme<'a> {
    pub fn level(&self) -> SchemeLevel {
        match self {
            CategoryScheme::Subject => SchemeLevel::Sc,
            CategoryScheme::Area(_) => SchemeLevel::Da,
        }
    }

    /// Categories of a publication under this scheme, sorted and deduplicated.
    /// Subject categories missing from the area map are skipped; corpus
    /// validation reports them.
    pub fn categories_of<'p>(&self, publication: &'p PublicationRecord) -> BTreeSet<&'p str>
    where
        'a: 'p,
    {
        match self {
            CategoryScheme::Subject => publication.categories.iter().map(String::as_str).collect(),
            CategoryScheme::Area(map) => publication
                .categories
                .iter()
                .filter_map(|sc| map.area_of(sc))
                .collect(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{0} window {1} is empty")]
    EmptyWindow(&'static str, YearRange),
    #[error("significance thresholds must be strictly increasing in (0, 1), got {0:?}")]
    Thresholds([f64; 3]),
    #[error("distance floor must be positive, got {0}")]
    DistanceFloor(f64),
}

/// Every analysis parameter. Defaults: cited years 2010-2012, citing years
/// 2010-2017, home country IT, strict majority, HC1 errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub cited_window: YearRange,
    pub citing_window: YearRange,
    pub home_country: String,
    pub context: Context,
    /// A category is fitted only with strictly more observations than this.
    pub min_observations: usize,
    pub significance_thresholds: [f64; 3],
    pub exclude_same_territory_dyads: bool,
    /// Distance used for same-territory dyads when they are retained.
    pub distance_floor_km: f64,
    pub majority_rule: MajorityRule,
    pub covariance: crate::regress::HcVariant,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            cited_window: YearRange::new(2010, 2012),
            citing_window: YearRange::new(2010, 2017),
            home_country: "IT".to_string(),
            context: Context::National,
            min_observations: 30,
            significance_thresholds: [0.01, 0.05, 0.1],
            exclude_same_territory_dyads: true,
            distance_floor_km: 1.0,
            majority_rule: MajorityRule::Strict,
            covariance: crate::regress::HcVariant::Hc1,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.cited_window.is_empty() {
            return Err(ConfigError::EmptyWindow("cited", self.cited_window));
        }
        if self.citing_window.is_empty() {
            return Err(ConfigError::EmptyWindow("citing", self.citing_window));
        }
        let [a, b, c] = self.significance_thresholds;
        if !(0.0 < a && a < b && b < c && c < 1.0) {
            return Err(ConfigError::Thresholds(self.significance_thresholds));
        }
        if self.distance_floor_km.is_nan() || self.distance_floor_km <= 0.0 {
            return Err(ConfigError::DistanceFloor(self.distance_floor_km));
        }
        Ok(())
    }

    pub fn with_context(&self, context: Context) -> AnalysisConfig {
        AnalysisConfig {
            context,
            ..self.clone()
        }
    }
}

/// One problem found by [`validate_corpus`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Violation {
    DuplicateId { id: String },
    DanglingEndpoint { citing_id: String, cited_id: String, missing: String },
    SelfCitation { id: String },
    UnknownTerritory { pub_id: String, territory: TerritoryId },
    EmptyCategories { pub_id: String },
    NoTerritoryEvidence { pub_id: String },
    UnmappedCategory { pub_id: String, category: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateId { id } => write!(f, "duplicate publication id {id}"),
            Violation::DanglingEndpoint {
                citing_id,
                cited_id,
                missing,
            } => write!(f, "citation {citing_id}->{cited_id}: unknown publication {missing}"),
            Violation::SelfCitation { id } => write!(f, "citation {id}->{id} is a self-loop"),
            Violation::UnknownTerritory { pub_id, territory } => {
                write!(f, "publication {pub_id}: territory {territory} not in gazetteer")
            }
            Violation::EmptyCategories { pub_id } => write!(f, "publication {pub_id}: no categories"),
            Violation::NoTerritoryEvidence { pub_id } => {
                write!(f, "publication {pub_id}: no author or address territories")
            }
            Violation::UnmappedCategory { pub_id, category } => {
                write!(f, "publication {pub_id}: category {category} missing from category map")
            }
        }
    }
}

/// Collect every consistency problem in a corpus. The result is sorted, so
/// it does not depend on input order; an empty report means the corpus is
/// internally consistent.
///
/// A municipality reference also requires its country to be present, since
/// international contexts project municipalities to countries.
pub fn validate_corpus(
    publications: &[PublicationRecord],
    edges: &[CitationEdge],
    gazetteer: &Gazetteer,
) -> Vec<Violation> {
    let mut violations = Vec::new();
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    for publication in publications {
        *seen.entry(publication.id.as_str()).or_default() += 1;
    }
    for (id, count) in &seen {
        for _ in 1..*count {
            violations.push(Violation::DuplicateId { id: id.to_string() });
        }
    }

    for publication in publications {
        if publication.categories.is_empty() {
            violations.push(Violation::EmptyCategories {
                pub_id: publication.id.clone(),
            });
        }
        if publication.author_territories.is_empty() && publication.address_territories.is_empty() {
            violations.push(Violation::NoTerritoryEvidence {
                pub_id: publication.id.clone(),
            });
        }
        let referenced: BTreeSet<&TerritoryId> = publication
            .author_territories
            .iter()
            .chain(&publication.address_territories)
            .collect();
        let mut missing = BTreeSet::new();
        for territory in referenced {
            if !gazetteer.contains(territory) {
                missing.insert(territory.clone());
            }
            let country = territory.project(TerritoryKind::Country);
            if !gazetteer.contains(&country) {
                missing.insert(country);
            }
        }
        violations.extend(missing.into_iter().map(|territory| Violation::UnknownTerritory {
            pub_id: publication.id.clone(),
            territory,
        }));
    }

    for edge in edges {
        if edge.citing_id == edge.cited_id {
            violations.push(Violation::SelfCitation {
                id: edge.citing_id.clone(),
            });
        }
        for endpoint in [&edge.citing_id, &edge.cited_id] {
            if !seen.contains_key(endpoint.as_str()) {
                violations.push(Violation::DanglingEndpoint {
                    citing_id: edge.citing_id.clone(),
                    cited_id: edge.cited_id.clone(),
                    missing: endpoint.clone(),
                });
            }
        }
    }
    violations.sort();
    violations
}

/// A citation edge resolved to positions in a publication slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeRef {
    pub citing: usize,
    pub cited: usize,
}

/// Resolve edge endpoints to publication indices. Fails on the first
/// dangling endpoint; run [`validate_corpus`] for a full report.
pub fn resolve_edges(publications: &[PublicationRecord], edges: &[CitationEdge]) -> Result<Vec<EdgeRef>, Violation> {
    let index: std::collections::HashMap<&str, usize> =
        publications.iter().enumerate().map(|(k, p)| (p.id.as_str(), k)).collect();
    edges
        .iter()
        .map(|edge| {
            let lookup = |id: &String| {
                index.get(id.as_str()).copied().ok_or_else(|| Violation::DanglingEndpoint {
                    citing_id: edge.citing_id.clone(),
                    cited_id: edge.cited_id.clone(),
                    missing: id.clone(),
                })
            };
            Ok(EdgeRef {
                citing: lookup(&edge.citing_id)?,
                cited: lookup(&edge.cited_id)?,
            })
        })
        .collect()
}

/// Subject categories that the area map does not cover.
pub fn validate_categories(publications: &[PublicationRecord], map: &CategoryMap) -> Vec<Violation> {
    let mut violations: Vec<Violation> = publications
        .iter()
        .flat_map(|p| {
            p.categories
                .iter()
                .filter(|sc| map.area_of(sc).is_none())
                .map(|sc| Violation::UnmappedCategory {
                    pub_id: p.id.clone(),
                    category: sc.clone(),
                })
        })
        .collect();
    violations.sort();
    violations.dedup();
    violations
}
