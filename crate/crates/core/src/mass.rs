//! Territory masses.
//!
//! The cited-side mass of a territory is its publication count in the cited
//! category over the cited window. The citing-side mass weights the
//! territory's publications by how often each category appears among the
//! publications citing home work in the cited category: with weights that
//! sum to one, the weighted sum and the weighted average coincide.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::model::{AnalysisConfig, CategoryScheme, EdgeRef, PublicationRecord, TerritoryId, TerritoryKind, YearRange};
use crate::territory::AssignmentTable;

#[derive(Debug, Error, PartialEq)]
pub enum MassError {
    #[error("no publications cite home work in category {0}")]
    NoCitingPublications(String),
}

/// Non-negative (possibly fractional) publication count.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct MassValue(f64);

impl MassValue {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Category frequency distribution of the publications citing one cited
/// category.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScWeightProfile {
    pub cited_category: String,
    weights: BTreeMap<String, f64>,
}

impl ScWeightProfile {
    /// Normalize raw tallies. Returns `None` when every tally is zero.
    pub fn from_tallies(cited_category: impl Into<String>, tallies: &BTreeMap<String, usize>) -> Option<Self> {
        let total: usize = tallies.values().sum();
        if total == 0 {
            return None;
        }
        let weights = tallies
            .iter()
            .filter(|(_, &c)| c > 0)
            .map(|(k, &c)| (k.clone(), c as f64 / total as f64))
            .collect();
        Some(ScWeightProfile {
            cited_category: cited_category.into(),
            weights,
        })
    }

    /// All weight on the cited category itself.
    pub fn degenerate(category: impl Into<String>) -> Self {
        let category = category.into();
        ScWeightProfile {
            weights: BTreeMap::from([(category.clone(), 1.0)]),
            cited_category: category,
        }
    }

    pub fn weight(&self, category: &str) -> f64 {
        self.weights.get(category).copied().unwrap_or(0.0)
    }

    pub fn weights(&self) -> &BTreeMap<String, f64> {
        &self.weights
    }
}

/// Whether a publication counts as home production on the cited side.
pub fn is_home_cited(index: usize, assignments: &AssignmentTable, home: &str) -> bool {
    let by_country = assignments
        .cited(index, TerritoryKind::Country)
        .is_some_and(|c| c.code() == home);
    let by_municipality = assignments
        .cited(index, TerritoryKind::Municipality)
        .is_some_and(|m| m.country_code() == home);
    by_country || by_municipality
}

fn distinct_citers(
    scheme: CategoryScheme<'_>,
    publications: &[PublicationRecord],
    edges: &[EdgeRef],
    assignments: &AssignmentTable,
    config: &AnalysisConfig,
) -> BTreeMap<String, Vec<usize>> {
    let mut citers: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for edge in edges {
        let cited = &publications[edge.cited];
        let citing = &publications[edge.citing];
        if !config.cited_window.contains(cited.year)
            || !config.citing_window.contains(citing.year)
            || !is_home_cited(edge.cited, assignments, &config.home_country)
        {
            continue;
        }
        for category in scheme.categories_of(cited) {
            match citers.get_mut(category) {
                Some(list) => list.push(edge.citing),
                None => {
                    citers.insert(category.to_string(), vec![edge.citing]);
                }
            }
        }
    }
    for list in citers.values_mut() {
        list.sort_unstable();
        list.dedup();
    }
    citers
}

fn tally_categories(scheme: CategoryScheme<'_>, publications: &[PublicationRecord], citers: &[usize]) -> BTreeMap<String, usize> {
    let mut tallies = BTreeMap::new();
    for &q in citers {
        for category in scheme.categories_of(&publications[q]) {
            *tallies.entry(category.to_string()).or_insert(0) += 1;
        }
    }
    tallies
}

/// Profile of the distinct publications (in the citing window) that cite
/// home publications of `cited_category` from the cited window. A cited
/// publication in several categories feeds each of their profiles; a citing
/// publication adds one to each of its own categories. Citing publications
/// without a territory still count.
pub fn citing_profile(
    cited_category: &str,
    scheme: CategoryScheme<'_>,
    publications: &[PublicationRecord],
    edges: &[EdgeRef],
    assignments: &AssignmentTable,
    config: &AnalysisConfig,
) -> Result<ScWeightProfile, MassError> {
    let citers = distinct_citers(scheme, publications, edges, assignments, config);
    let list = citers.get(cited_category).map(Vec::as_slice).unwrap_or(&[]);
    ScWeightProfile::from_tallies(cited_category, &tally_categories(scheme, publications, list))
        .ok_or_else(|| MassError::NoCitingPublications(cited_category.to_string()))
}

/// Profiles for every cited category that has at least one qualifying citation.
pub fn citing_profiles(
    scheme: CategoryScheme<'_>,
    publications: &[PublicationRecord],
    edges: &[EdgeRef],
    assignments: &AssignmentTable,
    config: &AnalysisConfig,
) -> BTreeMap<String, ScWeightProfile> {
    use rayon::prelude::*;
    let citers: Vec<(String, Vec<usize>)> = distinct_citers(scheme, publications, edges, assignments, config)
        .into_iter()
        .collect();
    citers
        .into_par_iter()
        .filter_map(|(category, list)| {
            let tallies = tally_categories(scheme, publications, &list);
            ScWeightProfile::from_tallies(category.clone(), &tallies).map(|p| (category, p))
        })
        .collect()
}

/// Publications assigned (author convention, municipality level) to
/// `territory`, in `category`, with year in `window`.
pub fn cited_mass(
    territory: &TerritoryId,
    category: &str,
    scheme: CategoryScheme<'_>,
    publications: &[PublicationRecord],
    assignments: &AssignmentTable,
    window: YearRange,
) -> MassValue {
    let level = territory.kind();
    let count = publications
        .iter()
        .enumerate()
        .filter(|(k, p)| {
            window.contains(p.year)
                && assignments.cited(*k, level) == Some(territory)
                && scheme.categories_of(p).contains(category)
        })
        .count();
    MassValue(count as f64)
}

/// Weighted publication count of a citing territory (address convention, at
/// the territory's own level) over the categories of `profile`.
pub fn citing_mass(
    territory: &TerritoryId,
    profile: &ScWeightProfile,
    scheme: CategoryScheme<'_>,
    publications: &[PublicationRecord],
    assignments: &AssignmentTable,
    window: YearRange,
) -> MassValue {
    let level = territory.kind();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for (k, p) in publications.iter().enumerate() {
        if window.contains(p.year) && assignments.citing(k, level) == Some(territory) {
            for category in scheme.categories_of(p) {
                *counts.entry(category).or_insert(0) += 1;
            }
        }
    }
    MassValue(weighted_sum(profile, |category| counts.get(category).copied().unwrap_or(0)))
}

/// `sum_s weight(s) * count(s)`, accumulated in category order.
pub fn weighted_sum(profile: &ScWeightProfile, count: impl Fn(&str) -> usize) -> f64 {
    profile
        .weights
        .iter()
        .map(|(category, w)| w * count(category) as f64)
        .sum()
}

/// Precomputed per-territory category counts, for fast mass lookups over
/// many dyads. Agrees exactly with [`cited_mass`] and [`citing_mass`].
#[derive(Debug, Clone, Default)]
pub struct MassIndex {
    cited: HashMap<TerritoryId, BTreeMap<String, usize>>,
    citing: HashMap<TerritoryId, BTreeMap<String, usize>>,
}

impl MassIndex {
    /// Cited counts at municipality level; citing counts at `citing_level`.
    pub fn build(
        scheme: CategoryScheme<'_>,
        publications: &[PublicationRecord],
        assignments: &AssignmentTable,
        config: &AnalysisConfig,
        citing_level: TerritoryKind,
    ) -> Self {
        let mut index = MassIndex::default();
        for (k, p) in publications.iter().enumerate() {
            let cited = assignments
                .cited(k, TerritoryKind::Municipality)
                .filter(|_| config.cited_window.contains(p.year));
            let citing = assignments
                .citing(k, citing_level)
                .filter(|_| config.citing_window.contains(p.year));
            if cited.is_none() && citing.is_none() {
                continue;
            }
            let categories = scheme.categories_of(p);
            for (territory, table) in [(cited, &mut index.cited), (citing, &mut index.citing)] {
                if let Some(t) = territory {
                    let row = table.entry(t.clone()).or_default();
                    for category in &categories {
                        *row.entry(category.to_string()).or_insert(0) += 1;
                    }
                }
            }
        }
        index
    }

    fn lookup(table: &HashMap<TerritoryId, BTreeMap<String, usize>>, territory: &TerritoryId, category: &str) -> usize {
        table
            .get(territory)
            .and_then(|row| row.get(category))
            .copied()
            .unwrap_or(0)
    }

    pub fn cited_mass(&self, territory: &TerritoryId, category: &str) -> MassValue {
        MassValue(Self::lookup(&self.cited, territory, category) as f64)
    }

    pub fn citing_mass(&self, territory: &TerritoryId, profile: &ScWeightProfile) -> MassValue {
        MassValue(weighted_sum(profile, |category| Self::lookup(&self.citing, territory, category)))
    }
}
