//! Readers and writers for the four corpus files.
//!
//! | file | columns |
//! |------|---------|
//! | `publications.jsonl` / `.csv` | `id,year,categories,author_territories,address_territories` |
//! | `citations.csv` | `citing_id,cited_id` |
//! | `gazetteer.csv` | `code,kind,country_of,continent,lat,lon` |
//! | `scmap.csv` | `sc,da` |
//!
//! CSV files are comma separated with a mandatory header and double-quote
//! escaping. List-valued CSV fields are joined with `;`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{self, BufRead, Read, Write};

use serde::Deserialize;
use thiserror::Error;

use crate::geodesy::{GeoError, GeoPoint};
use crate::model::{CitationEdge, Continent, PublicationRecord, TerritoryId, TerritoryKind};

const MIN_YEAR: i32 = 1900;
const MAX_YEAR: i32 = 2100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PublicationFormat {
    Jsonl,
    Csv,
}

impl PublicationFormat {
    /// Guess from a file name: `.csv` means CSV, anything else JSONL.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => PublicationFormat::Csv,
            _ => PublicationFormat::Jsonl,
        }
    }
}

/// A problem with a single field; parsing continues past these.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub line: usize,
    pub reason: String,
}

impl std::fmt::Display for FieldError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.reason)
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {reason}")]
    Structure { line: usize, reason: String },
    #[error("{} invalid field(s); first: {}", .0.len(), .0[0])]
    Fields(Vec<FieldError>),
    #[error("{what} is empty")]
    Empty { what: &'static str },
}

impl IngestError {
    fn structure(line: usize, reason: impl Into<String>) -> Self {
        IngestError::Structure {
            line,
            reason: reason.into(),
        }
    }

    /// All field-level errors, or the single structural one.
    pub fn messages(&self) -> Vec<String> {
        match self {
            IngestError::Fields(errors) => errors.iter().map(ToString::to_string).collect(),
            other => vec![other.to_string()],
        }
    }
}

fn csv_reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(input)
}

fn csv_writer<W: Write>(output: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(output)
}

fn csv_error(err: csv::Error) -> IngestError {
    let line = err.position().map(|p| p.line() as usize).unwrap_or(0);
    match err.into_kind() {
        csv::ErrorKind::Io(e) => IngestError::Io(e),
        kind => IngestError::structure(line, format!("{kind:?}")),
    }
}

fn check_header<R: Read>(reader: &mut csv::Reader<R>, expected: &[&str]) -> Result<(), IngestError> {
    let header = reader.headers().map_err(csv_error)?;
    let found: Vec<&str> = header.iter().map(str::trim).collect();
    if found != expected {
        return Err(IngestError::structure(
            1,
            format!("expected header {:?}, found {:?}", expected.join(","), found.join(",")),
        ));
    }
    Ok(())
}

fn split_list(field: &str) -> Vec<&str> {
    field.split(';').map(str::trim).filter(|s| !s.is_empty()).collect()
}

fn parse_territories(values: &[&str], line: usize, what: &str, errors: &mut Vec<FieldError>) -> Vec<TerritoryId> {
    values
        .iter()
        .filter_map(|v| match v.parse() {
            Ok(t) => Some(t),
            Err(reason) => {
                errors.push(FieldError {
                    line,
                    reason: format!("{what}: {reason}"),
                });
                None
            }
        })
        .collect()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonPublication {
    id: Option<String>,
    year: Option<i64>,
    #[serde(default)]
    categories: Vec<String>,
    #[serde(default)]
    author_territories: Vec<String>,
    #[serde(default)]
    address_territories: Vec<String>,
}

struct RawPublication<'a> {
    id: Option<&'a str>,
    year: Result<i64, String>,
    categories: Vec<&'a str>,
    authors: Vec<&'a str>,
    addresses: Vec<&'a str>,
}

fn build_publication(raw: RawPublication<'_>, line: usize, errors: &mut Vec<FieldError>) -> Option<PublicationRecord> {
    let before = errors.len();
    let mut push = |reason: String| errors.push(FieldError { line, reason });
    let id = match raw.id.map(str::trim) {
        Some(id) if !id.is_empty() => Some(id.to_string()),
        _ => {
            push("missing id".into());
            None
        }
    };
    let year = match raw.year {
        Ok(y) if (MIN_YEAR as i64..=MAX_YEAR as i64).contains(&y) => Some(y as i32),
        Ok(y) => {
            push(format!("year {y} outside [{MIN_YEAR}, {MAX_YEAR}]"));
            None
        }
        Err(reason) => {
            push(reason);
            None
        }
    };
    let categories: Vec<String> = raw.categories.iter().map(|c| c.trim().to_string()).filter(|c| !c.is_empty()).collect();
    if categories.is_empty() {
        push("empty categories".into());
    }
    let author_territories = parse_territories(&raw.authors, line, "author_territories", errors);
    let address_territories = parse_territories(&raw.addresses, line, "address_territories", errors);
    if errors.len() > before {
        return None;
    }
    Some(PublicationRecord {
        id: id?,
        year: year?,
        categories,
        author_territories,
        address_territories,
    })
}

/// Parse publications, one per JSONL line or CSV row. Structural problems
/// (invalid JSON, wrong column count, bad UTF-8) abort immediately; field
/// problems are collected across the whole input.
pub fn parse_publications<R: Read>(input: R, format: PublicationFormat) -> Result<Vec<PublicationRecord>, IngestError> {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    match format {
        PublicationFormat::Jsonl => {
            let reader = io::BufReader::new(input);
            for (index, line) in reader.lines().enumerate() {
                let line_no = index + 1;
                let line = line.map_err(|e| match e.kind() {
                    io::ErrorKind::InvalidData => IngestError::structure(line_no, "invalid UTF-8"),
                    _ => IngestError::Io(e),
                })?;
                if line.trim().is_empty() {
                    continue;
                }
                let json: JsonPublication =
                    serde_json::from_str(&line).map_err(|e| IngestError::structure(line_no, e.to_string()))?;
                let raw = RawPublication {
                    id: json.id.as_deref(),
                    year: json.year.ok_or_else(|| "missing year".to_string()),
                    categories: json.categories.iter().map(String::as_str).collect(),
                    authors: json.author_territories.iter().map(String::as_str).collect(),
                    addresses: json.address_territories.iter().map(String::as_str).collect(),
                };
                if let Some(record) = build_publication(raw, line_no, &mut errors) {
                    records.push(record);
                }
            }
        }
        PublicationFormat::Csv => {
            let mut reader = csv_reader(input);
            check_header(
                &mut reader,
                &["id", "year", "categories", "author_territories", "address_territories"],
            )?;
            for row in reader.records() {
                let row = row.map_err(csv_error)?;
                let line_no = row.position().map(|p| p.line() as usize).unwrap_or(0);
                let year_field = row[1].trim();
                let raw = RawPublication {
                    id: Some(&row[0]),
                    year: if year_field.is_empty() {
                        Err("missing year".to_string())
                    } else {
                        year_field.parse().map_err(|_| format!("invalid year {year_field:?}"))
                    },
                    categories: split_list(&row[2]),
                    authors: split_list(&row[3]),
                    addresses: split_list(&row[4]),
                };
                if let Some(record) = build_publication(raw, line_no, &mut errors) {
                    records.push(record);
                }
            }
        }
    }
    if errors.is_empty() {
        Ok(records)
    } else {
        Err(IngestError::Fields(errors))
    }
}

/// Citation edges after deduplication.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CitationSet {
    /// Distinct edges in first-seen order.
    pub edges: Vec<CitationEdge>,
    /// Repeated rows that were dropped.
    pub duplicates: usize,
}

/// Parse `citing_id,cited_id` rows. A citing publication contributes at
/// most one citation to a given cited one, so repeated rows are dropped and
/// counted. Self-loops are rejected.
pub fn parse_citations<R: Read>(input: R) -> Result<CitationSet, IngestError> {
    let mut reader = csv_reader(input);
    check_header(&mut reader, &["citing_id", "cited_id"])?;
    let mut seen = HashSet::new();
    let mut set = CitationSet::default();
    let mut errors = Vec::new();
    for row in reader.records() {
        let row = row.map_err(csv_error)?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let (citing, cited) = (row[0].trim(), row[1].trim());
        if citing.is_empty() || cited.is_empty() {
            errors.push(FieldError {
                line,
                reason: "empty publication id".into(),
            });
            continue;
        }
        if citing == cited {
            errors.push(FieldError {
                line,
                reason: format!("self-citation {citing}->{cited}"),
            });
            continue;
        }
        let edge = CitationEdge::new(citing, cited);
        if seen.insert(edge.clone()) {
            set.edges.push(edge);
        } else {
            set.duplicates += 1;
        }
    }
    if !errors.is_empty() {
        return Err(IngestError::Fields(errors));
    }
    if set.duplicates > 0 {
        log::warn!("dropped {} duplicate citation rows", set.duplicates);
    }
    Ok(set)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Place {
    pub point: GeoPoint,
    /// Present for countries.
    pub continent: Option<Continent>,
}

#[derive(Debug, Error, PartialEq)]
pub enum GazetteerError {
    #[error("duplicate {kind} code {code}")]
    DuplicateCode { kind: TerritoryKind, code: String },
    #[error("country {0} has no continent")]
    MissingContinent(String),
    #[error("municipality {0} must not carry a continent")]
    UnexpectedContinent(String),
}

/// Reference point for every territory: the centroid of a municipality, the
/// capital of a country.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gazetteer {
    places: BTreeMap<TerritoryId, Place>,
}

impl Gazetteer {
    pub fn insert(&mut self, id: TerritoryId, point: GeoPoint, continent: Option<Continent>) -> Result<(), GazetteerError> {
        match (&id, continent) {
            (TerritoryId::Country(code), None) => return Err(GazetteerError::MissingContinent(code.clone())),
            (TerritoryId::Municipality { code, .. }, Some(_)) => {
                return Err(GazetteerError::UnexpectedContinent(code.clone()))
            }
            _ => {}
        }
        let clash = self
            .places
            .keys()
            .any(|k| k.kind() == id.kind() && k.code() == id.code());
        if clash {
            return Err(GazetteerError::DuplicateCode {
                kind: id.kind(),
                code: id.code().to_string(),
            });
        }
        self.places.insert(id, Place { point, continent });
        Ok(())
    }

    pub fn contains(&self, id: &TerritoryId) -> bool {
        self.places.contains_key(id)
    }

    pub fn get(&self, id: &TerritoryId) -> Option<&Place> {
        self.places.get(id)
    }

    pub fn point(&self, id: &TerritoryId) -> Option<GeoPoint> {
        self.places.get(id).map(|p| p.point)
    }

    /// Continent of a country, or of a municipality's country.
    pub fn continent(&self, id: &TerritoryId) -> Option<Continent> {
        self.places
            .get(&id.project(TerritoryKind::Country))
            .and_then(|p| p.continent)
    }

    pub fn len(&self) -> usize {
        self.places.len()
    }

    pub fn is_empty(&self) -> bool {
        self.places.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&TerritoryId, &Place)> {
        self.places.iter()
    }
}

/// Parse `code,kind,country_of,continent,lat,lon`.
pub fn parse_gazetteer<R: Read>(input: R) -> Result<Gazetteer, IngestError> {
    let mut reader = csv_reader(input);
    check_header(&mut reader, &["code", "kind", "country_of", "continent", "lat", "lon"])?;
    let mut gazetteer = Gazetteer::default();
    let mut errors = Vec::new();
    for row in reader.records() {
        let row = row.map_err(csv_error)?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let mut fail = |reason: String| errors.push(FieldError { line, reason });
        let code = row[0].trim();
        let country_of = row[2].trim();
        let continent = row[3].trim();
        if code.is_empty() {
            fail("empty code".into());
            continue;
        }
        let id = match row[1].trim() {
            "municipality" if country_of.is_empty() => {
                fail(format!("municipality {code} has no country_of"));
                continue;
            }
            "municipality" => TerritoryId::municipality(country_of, code),
            "country" => TerritoryId::country(code),
            other => {
                fail(format!("unknown kind {other:?}"));
                continue;
            }
        };
        let continent = if continent.is_empty() {
            None
        } else {
            match continent.parse::<Continent>() {
                Ok(c) => Some(c),
                Err(reason) => {
                    fail(reason);
                    continue;
                }
            }
        };
        let coords = (row[4].trim().parse::<f64>(), row[5].trim().parse::<f64>());
        let point = match coords {
            (Ok(lat), Ok(lon)) => match GeoPoint::new(lat, lon) {
                Ok(p) => p,
                Err(e @ (GeoError::Latitude(_) | GeoError::Longitude(_))) => {
                    fail(format!("{code}: {e}"));
                    continue;
                }
                Err(e) => {
                    fail(e.to_string());
                    continue;
                }
            },
            _ => {
                fail(format!("{code}: unparseable coordinates"));
                continue;
            }
        };
        if let Err(e) = gazetteer.insert(id, point, continent) {
            fail(e.to_string());
        }
    }
    if errors.is_empty() {
        Ok(gazetteer)
    } else {
        Err(IngestError::Fields(errors))
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("subject category {sc} mapped to both {first} and {second}")]
pub struct DuplicateMapping {
    pub sc: String,
    pub first: String,
    pub second: String,
}

/// Total map from subject category to disciplinary area.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CategoryMap {
    areas: BTreeMap<String, String>,
}

impl CategoryMap {
    pub fn insert(&mut self, sc: impl Into<String>, da: impl Into<String>) -> Result<(), DuplicateMapping> {
        let (sc, da) = (sc.into(), da.into());
        match self.areas.get(&sc) {
            Some(existing) if *existing == da => Ok(()),
            Some(existing) => Err(DuplicateMapping {
                sc,
                first: existing.clone(),
                second: da,
            }),
            None => {
                self.areas.insert(sc, da);
                Ok(())
            }
        }
    }

    pub fn area_of(&self, sc: &str) -> Option<&str> {
        self.areas.get(sc).map(String::as_str)
    }

    pub fn category_count(&self) -> usize {
        self.areas.len()
    }

    pub fn area_count(&self) -> usize {
        self.area_codes().len()
    }

    pub fn area_codes(&self) -> BTreeSet<&str> {
        self.areas.values().map(String::as_str).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.areas.iter().map(|(sc, da)| (sc.as_str(), da.as_str()))
    }
}

/// Parse `sc,da`. An SC listed twice with different areas is an error;
/// an identical repeated row is tolerated.
pub fn parse_category_map<R: Read>(input: R) -> Result<CategoryMap, IngestError> {
    let mut reader = csv_reader(input);
    check_header(&mut reader, &["sc", "da"])?;
    let mut map = CategoryMap::default();
    let mut errors = Vec::new();
    for row in reader.records() {
        let row = row.map_err(csv_error)?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let (sc, da) = (row[0].trim(), row[1].trim());
        if sc.is_empty() || da.is_empty() {
            errors.push(FieldError {
                line,
                reason: "empty sc or da".into(),
            });
            continue;
        }
        if let Err(e) = map.insert(sc, da) {
            errors.push(FieldError {
                line,
                reason: e.to_string(),
            });
        }
    }
    if !errors.is_empty() {
        return Err(IngestError::Fields(errors));
    }
    if map.category_count() == 0 {
        return Err(IngestError::Empty { what: "category map" });
    }
    Ok(map)
}

fn join_territories(list: &[TerritoryId]) -> String {
    list.iter().map(ToString::to_string).collect::<Vec<_>>().join(";")
}

pub fn write_publications<W: Write>(output: W, records: &[PublicationRecord], format: PublicationFormat) -> io::Result<()> {
    match format {
        PublicationFormat::Jsonl => {
            let mut out = io::BufWriter::new(output);
            for record in records {
                serde_json::to_writer(&mut out, record)?;
                out.write_all(b"\n")?;
            }
            out.flush()
        }
        PublicationFormat::Csv => {
            let mut out = csv_writer(output);
            out.write_record(["id", "year", "categories", "author_territories", "address_territories"])?;
            for r in records {
                out.write_record([
                    r.id.clone(),
                    r.year.to_string(),
                    r.categories.join(";"),
                    join_territories(&r.author_territories),
                    join_territories(&r.address_territories),
                ])?;
            }
            out.flush()
        }
    }
}

pub fn write_citations<W: Write>(output: W, edges: &[CitationEdge]) -> io::Result<()> {
    let mut out = csv_writer(output);
    out.write_record(["citing_id", "cited_id"])?;
    for edge in edges {
        out.write_record([&edge.citing_id, &edge.cited_id])?;
    }
    out.flush()
}

pub fn write_gazetteer<W: Write>(output: W, gazetteer: &Gazetteer) -> io::Result<()> {
    let mut out = csv_writer(output);
    out.write_record(["code", "kind", "country_of", "continent", "lat", "lon"])?;
    for (id, place) in gazetteer.iter() {
        let country_of = match id {
            TerritoryId::Municipality { country, .. } => country.as_str(),
            TerritoryId::Country(_) => "",
        };
        out.write_record([
            id.code(),
            id.kind().as_str(),
            country_of,
            place.continent.map(Continent::as_str).unwrap_or(""),
            &place.point.lat().to_string(),
            &place.point.lon().to_string(),
        ])?;
    }
    out.flush()
}

pub fn write_category_map<W: Write>(output: W, map: &CategoryMap) -> io::Result<()> {
    let mut out = csv_writer(output);
    out.write_record(["sc", "da"])?;
    for (sc, da) in map.iter() {
        out.write_record([sc, da])?;
    }
    out.flush()
}
