//! Prevalence-based "made in" assignment of publications to territories.
//!
//! Cited publications are assigned from their author affiliations, citing
//! publications from their address lists. Evidence is projected to the
//! requested level first and the majority rule is applied to the projected
//! counts; municipality and country assignments are computed independently.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::model::{MajorityRule, PublicationRecord, TerritoryId, TerritoryKind};

/// Why a publication has no territory at some level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Exclusion {
    /// Two or more territories share the top count.
    Tie,
    /// A unique leader holds half of the evidence or less.
    NoMajority,
    /// The evidence list is empty.
    EmptyEvidence,
    /// The prevailing evidence is a country, which cannot be resolved to a
    /// municipality.
    CoarseEvidence,
}

impl Exclusion {
    pub fn as_str(self) -> &'static str {
        match self {
            Exclusion::Tie => "tie",
            Exclusion::NoMajority => "no-majority",
            Exclusion::EmptyEvidence => "empty-evidence",
            Exclusion::CoarseEvidence => "coarse-evidence",
        }
    }
}

impl fmt::Display for Exclusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The prevailing key of a tally, if any.
///
/// Under [`MajorityRule::Strict`] the winner must hold more than half of the
/// total; under [`MajorityRule::Plurality`] a unique maximum suffices.
pub fn prevalent<K: Ord + Clone>(counts: &BTreeMap<K, usize>, rule: MajorityRule) -> Result<K, Exclusion> {
    let total: usize = counts.values().sum();
    let top = counts.values().copied().max().unwrap_or(0);
    if total == 0 {
        return Err(Exclusion::EmptyEvidence);
    }
    let mut leaders = counts.iter().filter(|(_, &c)| c == top);
    let (winner, _) = leaders.next().expect("non-empty tally has a maximum");
    if leaders.next().is_some() {
        return Err(Exclusion::Tie);
    }
    match rule {
        MajorityRule::Strict if 2 * top <= total => Err(Exclusion::NoMajority),
        _ => Ok(winner.clone()),
    }
}

/// Tally of a territory list after projection to `level`.
pub fn tally(evidence: &[TerritoryId], level: TerritoryKind) -> BTreeMap<TerritoryId, usize> {
    let mut counts = BTreeMap::new();
    for territory in evidence {
        *counts.entry(territory.project(level)).or_insert(0) += 1;
    }
    counts
}

fn assign_from(evidence: &[TerritoryId], level: TerritoryKind, rule: MajorityRule) -> Result<TerritoryId, Exclusion> {
    let winner = prevalent(&tally(evidence, level), rule)?;
    if winner.kind() != level {
        return Err(Exclusion::CoarseEvidence);
    }
    Ok(winner)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TerritoryAssignment {
    pub pub_id: String,
    pub level: TerritoryKind,
    pub territory: Result<TerritoryId, Exclusion>,
}

impl TerritoryAssignment {
    pub fn territory(&self) -> Option<&TerritoryId> {
        self.territory.as_ref().ok()
    }
}

/// Assignment of a cited publication, from its author affiliations.
pub fn assign_cited(publication: &PublicationRecord, level: TerritoryKind, rule: MajorityRule) -> TerritoryAssignment {
    TerritoryAssignment {
        pub_id: publication.id.clone(),
        level,
        territory: assign_from(&publication.author_territories, level, rule),
    }
}

/// Assignment of a citing publication, from its address list (duplicates
/// counted).
pub fn assign_citing(publication: &PublicationRecord, level: TerritoryKind, rule: MajorityRule) -> TerritoryAssignment {
    TerritoryAssignment {
        pub_id: publication.id.clone(),
        level,
        territory: assign_from(&publication.address_territories, level, rule),
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AgreementError {
    #[error("no publications to compare")]
    Empty,
    #[error("publication {0} lacks an author or address list")]
    MissingEvidence(String),
    #[error("every publication was excluded by at least one convention")]
    AllExcluded,
}

/// Agreement counts between the author and address conventions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Agreement {
    pub agreeing: usize,
    /// Publications assigned under both conventions.
    pub compared: usize,
}

impl Agreement {
    pub fn rate(&self) -> f64 {
        self.agreeing as f64 / self.compared as f64
    }
}

/// Share of publications whose author-based and address-based assignments
/// coincide. Publications excluded by either convention are left out of the
/// denominator.
pub fn convention_agreement<'a, I>(publications: I, level: TerritoryKind, rule: MajorityRule) -> Result<Agreement, AgreementError>
where
    I: IntoIterator<Item = &'a PublicationRecord>,
{
    let mut seen = 0usize;
    let mut agreement = Agreement { agreeing: 0, compared: 0 };
    for publication in publications {
        seen += 1;
        if publication.author_territories.is_empty() || publication.address_territories.is_empty() {
            return Err(AgreementError::MissingEvidence(publication.id.clone()));
        }
        let by_authors = assign_cited(publication, level, rule).territory;
        let by_addresses = assign_citing(publication, level, rule).territory;
        if let (Ok(a), Ok(b)) = (by_authors, by_addresses) {
            agreement.compared += 1;
            if a == b {
                agreement.agreeing += 1;
            }
        }
    }
    if seen == 0 {
        return Err(AgreementError::Empty);
    }
    if agreement.compared == 0 {
        return Err(AgreementError::AllExcluded);
    }
    Ok(agreement)
}

/// Cited and citing assignments of every publication at both levels,
/// indexed like the publication slice they were computed from.
#[derive(Debug, Clone)]
pub struct AssignmentTable {
    pub cited_municipality: Vec<Result<TerritoryId, Exclusion>>,
    pub cited_country: Vec<Result<TerritoryId, Exclusion>>,
    pub citing_municipality: Vec<Result<TerritoryId, Exclusion>>,
    pub citing_country: Vec<Result<TerritoryId, Exclusion>>,
}

impl AssignmentTable {
    pub fn compute(publications: &[PublicationRecord], rule: MajorityRule) -> Self {
        use rayon::prelude::*;
        let rows: Vec<[Result<TerritoryId, Exclusion>; 4]> = publications
            .par_iter()
            .map(|p| {
                [
                    assign_from(&p.author_territories, TerritoryKind::Municipality, rule),
                    assign_from(&p.author_territories, TerritoryKind::Country, rule),
                    assign_from(&p.address_territories, TerritoryKind::Municipality, rule),
                    assign_from(&p.address_territories, TerritoryKind::Country, rule),
                ]
            })
            .collect();
        let mut table = AssignmentTable {
            cited_municipality: Vec::with_capacity(rows.len()),
            cited_country: Vec::with_capacity(rows.len()),
            citing_municipality: Vec::with_capacity(rows.len()),
            citing_country: Vec::with_capacity(rows.len()),
        };
        for [cm, cc, gm, gc] in rows {
            table.cited_municipality.push(cm);
            table.cited_country.push(cc);
            table.citing_municipality.push(gm);
            table.citing_country.push(gc);
        }
        table
    }

    pub fn cited(&self, index: usize, level: TerritoryKind) -> Option<&TerritoryId> {
        match level {
            TerritoryKind::Municipality => self.cited_municipality[index].as_ref().ok(),
            TerritoryKind::Country => self.cited_country[index].as_ref().ok(),
        }
    }

    pub fn citing(&self, index: usize, level: TerritoryKind) -> Option<&TerritoryId> {
        match level {
            TerritoryKind::Municipality => self.citing_municipality[index].as_ref().ok(),
            TerritoryKind::Country => self.citing_country[index].as_ref().ok(),
        }
    }
}
