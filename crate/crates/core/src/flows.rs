//! Dyadic flow observations: the regression input.
//!
//! One observation per (category, cited municipality, citing territory) with
//! at least one qualifying citation. Dyads with no citations are never rows.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::geodesy::{dyad_distance, GeoError};
use crate::ingest::Gazetteer;
use crate::mass::{MassIndex, ScWeightProfile};
use crate::model::{AnalysisConfig, CategoryScheme, Context, Continent, EdgeRef, PublicationRecord, TerritoryId, TerritoryKind};
use crate::stats::{summarize, StatsError, StatsRow};
use crate::territory::AssignmentTable;

#[derive(Debug, Error, PartialEq)]
pub enum FlowError {
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("citing territory {0} has no continent in the gazetteer")]
    MissingContinent(TerritoryId),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowObservation {
    pub context: Context,
    pub category: String,
    /// Cited municipality.
    pub i: TerritoryId,
    /// Citing municipality (national) or country.
    pub j: TerritoryId,
    pub cites: u64,
    pub m_i: f64,
    pub m_j: f64,
    pub d_km: f64,
}

impl FlowObservation {
    #[cfg(test)]
    pub(crate) fn for_test(cites: u64, m_i: f64, m_j: f64, d_km: f64) -> Self {
        FlowObservation {
            context: Context::National,
            category: "T".into(),
            i: TerritoryId::municipality("IT", "A"),
            j: TerritoryId::municipality("IT", "B"),
            cites,
            m_i,
            m_j,
            d_km,
        }
    }
}

/// Observations plus counts of candidate dyads that were dropped.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ObservationSet {
    pub observations: Vec<FlowObservation>,
    pub dropped_same_territory: usize,
    pub dropped_zero_mass: usize,
    pub dropped_zero_distance: usize,
}

/// Whether citing territory `j` belongs to `context`, given the home country.
pub fn in_context(j: &TerritoryId, context: Context, home: &str, gazetteer: &Gazetteer) -> Result<bool, FlowError> {
    Ok(match (context, j) {
        (Context::National, TerritoryId::Municipality { country, .. }) => country == home,
        (Context::National, TerritoryId::Country(_)) => false,
        (_, TerritoryId::Municipality { .. }) => false,
        (Context::Continental, TerritoryId::Country(code)) => {
            code != home && continent_of(j, gazetteer)? == Continent::Europe
        }
        (Context::Intercontinental, TerritoryId::Country(_)) => continent_of(j, gazetteer)? == Continent::ExtraEurope,
    })
}

fn continent_of(j: &TerritoryId, gazetteer: &Gazetteer) -> Result<Continent, FlowError> {
    if !gazetteer.contains(j) {
        return Err(GeoError::UnknownTerritory(j.clone()).into());
    }
    gazetteer
        .continent(j)
        .ok_or_else(|| FlowError::MissingContinent(j.clone()))
}

/// Count qualifying (citing, cited) pairs per (category, i, j).
///
/// Cited side: year in the cited window, assigned to a home municipality `i`.
/// Citing side: year in the citing window, assigned to `j` at the context's
/// level, with `j` inside the context. A cited publication in several
/// categories adds the pair to each.
pub fn dyad_counts(
    config: &AnalysisConfig,
    scheme: CategoryScheme<'_>,
    publications: &[PublicationRecord],
    edges: &[EdgeRef],
    assignments: &AssignmentTable,
    gazetteer: &Gazetteer,
) -> Result<BTreeMap<(String, TerritoryId, TerritoryId), u64>, FlowError> {
    let level = config.context.citing_level();
    let mut membership: BTreeMap<&TerritoryId, bool> = BTreeMap::new();
    let mut counts: BTreeMap<(String, TerritoryId, TerritoryId), u64> = BTreeMap::new();
    for edge in edges {
        let cited = &publications[edge.cited];
        let citing = &publications[edge.citing];
        if !config.cited_window.contains(cited.year) || !config.citing_window.contains(citing.year) {
            continue;
        }
        let Some(i) = assignments.cited(edge.cited, TerritoryKind::Municipality) else {
            continue;
        };
        if i.country_code() != config.home_country {
            continue;
        }
        let Some(j) = assignments.citing(edge.citing, level) else {
            continue;
        };
        let member = match membership.get(j) {
            Some(&m) => m,
            None => {
                let m = in_context(j, config.context, &config.home_country, gazetteer)?;
                membership.insert(j, m);
                m
            }
        };
        if !member {
            continue;
        }
        for category in scheme.categories_of(cited) {
            *counts
                .entry((category.to_string(), i.clone(), j.clone()))
                .or_insert(0) += 1;
        }
    }
    Ok(counts)
}

/// Build the observation rows for `config.context`, sorted by
/// (category, i, j).
///
/// `profiles` must hold the citing profile of every category that has
/// flows; a category without one yields no rows.
pub fn build_observations(
    config: &AnalysisConfig,
    scheme: CategoryScheme<'_>,
    publications: &[PublicationRecord],
    edges: &[EdgeRef],
    assignments: &AssignmentTable,
    gazetteer: &Gazetteer,
    profiles: &BTreeMap<String, ScWeightProfile>,
) -> Result<ObservationSet, FlowError> {
    use rayon::prelude::*;

    let counts = dyad_counts(config, scheme, publications, edges, assignments, gazetteer)?;
    let masses = MassIndex::build(scheme, publications, assignments, config, config.context.citing_level());
    let keyed: Vec<_> = counts.into_iter().collect();

    enum Outcome {
        Keep(FlowObservation),
        SameTerritory,
        ZeroMass,
        ZeroDistance,
    }

    let outcomes: Vec<Outcome> = keyed
        .into_par_iter()
        .map(|((category, i, j), cites)| {
            let same = i == j;
            if same && config.exclude_same_territory_dyads {
                return Ok(Outcome::SameTerritory);
            }
            let Some(profile) = profiles.get(&category) else {
                return Ok(Outcome::ZeroMass);
            };
            let m_i = masses.cited_mass(&i, &category).value();
            let m_j = masses.citing_mass(&j, profile).value();
            if !(m_i > 0.0 && m_j > 0.0) {
                return Ok(Outcome::ZeroMass);
            }
            let mut d_km = dyad_distance(&i, &j, gazetteer)?.value();
            if same {
                d_km = d_km.max(config.distance_floor_km);
            }
            if d_km <= 0.0 {
                return Ok(Outcome::ZeroDistance);
            }
            Ok(Outcome::Keep(FlowObservation {
                context: config.context,
                category,
                i,
                j,
                cites,
                m_i,
                m_j,
                d_km,
            }))
        })
        .collect::<Result<_, FlowError>>()?;

    let mut set = ObservationSet::default();
    for outcome in outcomes {
        match outcome {
            Outcome::Keep(o) => set.observations.push(o),
            Outcome::SameTerritory => set.dropped_same_territory += 1,
            Outcome::ZeroMass => set.dropped_zero_mass += 1,
            Outcome::ZeroDistance => set.dropped_zero_distance += 1,
        }
    }
    if set.dropped_zero_mass > 0 {
        log::warn!("{}: dropped {} dyads with zero mass", config.context, set.dropped_zero_mass);
    }
    if set.dropped_zero_distance > 0 {
        log::warn!(
            "{}: dropped {} dyads between distinct territories at zero distance",
            config.context,
            set.dropped_zero_distance
        );
    }
    debug_assert!(set
        .observations
        .iter()
        .all(|o| o.cites >= 1 && o.m_i > 0.0 && o.m_j > 0.0 && o.d_km > 0.0));
    Ok(set)
}

pub const SUMMARY_VARIABLES: [&str; 4] = ["cites", "m_i", "m_j", "d_km"];

/// Summary statistics of each model variable, in [`SUMMARY_VARIABLES`] order.
pub fn descriptive_summary(observations: &[FlowObservation]) -> Result<[StatsRow; 4], StatsError> {
    let column = |f: fn(&FlowObservation) -> f64| -> Vec<f64> { observations.iter().map(f).collect() };
    Ok([
        summarize(&column(|o| o.cites as f64))?,
        summarize(&column(|o| o.m_i))?,
        summarize(&column(|o| o.m_j))?,
        summarize(&column(|o| o.d_km))?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesy::GeoPoint;
    use crate::mass::citing_profiles;
    use crate::model::MajorityRule;

    fn pubrec(id: &str, year: i32, cats: &[&str], authors: &[&str], addresses: &[&str]) -> PublicationRecord {
        PublicationRecord {
            id: id.into(),
            year,
            categories: cats.iter().map(|s| s.to_string()).collect(),
            author_territories: authors.iter().map(|s| s.parse().unwrap()).collect(),
            address_territories: addresses.iter().map(|s| s.parse().unwrap()).collect(),
        }
    }

    fn gazetteer() -> Gazetteer {
        let mut g = Gazetteer::default();
        let mut add = |t: &str, lat, lon, c| g.insert(t.parse().unwrap(), GeoPoint::new(lat, lon).unwrap(), c).unwrap();
        add("IT", 41.9028, 12.4964, Some(Continent::Europe));
        add("FR", 48.8566, 2.3522, Some(Continent::Europe));
        add("US", 38.9072, -77.0369, Some(Continent::ExtraEurope));
        add("IT:Milan", 45.4642, 9.19, None);
        add("IT:Rome", 41.9028, 12.4964, None);
        add("IT:Turin", 45.0703, 7.6869, None);
        g
    }

    fn run(pubs: &[PublicationRecord], edges: &[EdgeRef], context: Context) -> ObservationSet {
        let config = AnalysisConfig::default().with_context(context);
        let assignments = AssignmentTable::compute(pubs, MajorityRule::Strict);
        let profiles = citing_profiles(CategoryScheme::Subject, pubs, edges, &assignments, &config);
        build_observations(&config, CategoryScheme::Subject, pubs, edges, &assignments, &gazetteer(), &profiles).unwrap()
    }

    #[test]
    fn single_national_flow() {
        let pubs = vec![
            pubrec("M", 2011, &["A"], &["IT:Milan"], &["IT:Milan"]),
            pubrec("R", 2014, &["A"], &[], &["IT:Rome"]),
        ];
        let set = run(&pubs, &[EdgeRef { citing: 1, cited: 0 }], Context::National);
        assert_eq!(set.observations.len(), 1);
        let o = &set.observations[0];
        assert_eq!((o.category.as_str(), o.cites), ("A", 1));
        assert_eq!(o.i, TerritoryId::municipality("IT", "Milan"));
        assert_eq!(o.j, TerritoryId::municipality("IT", "Rome"));
        assert_eq!((o.m_i, o.m_j), (1.0, 1.0));
        assert!((o.d_km - 477.0).abs() < 5.0, "{}", o.d_km);
    }

    #[test]
    fn two_citers_from_one_territory() {
        let pubs = vec![
            pubrec("M", 2011, &["A"], &["IT:Milan"], &["IT:Milan"]),
            pubrec("R1", 2014, &["A"], &[], &["IT:Rome"]),
            pubrec("R2", 2015, &["B"], &[], &["IT:Rome", "IT:Rome", "US"]),
        ];
        let edges = [EdgeRef { citing: 1, cited: 0 }, EdgeRef { citing: 2, cited: 0 }];
        let set = run(&pubs, &edges, Context::National);
        assert_eq!(set.observations.len(), 1);
        assert_eq!(set.observations[0].cites, 2);
        // Profile {A: .5, B: .5}; Rome has one A and one B in the citing window.
        assert_eq!(set.observations[0].m_j, 1.0);
    }

    #[test]
    fn contexts_partition_citers() {
        let pubs = vec![
            pubrec("M", 2011, &["A"], &["IT:Milan"], &["IT:Milan"]),
            pubrec("T", 2014, &["A"], &[], &["IT:Turin"]),
            pubrec("F", 2014, &["A"], &[], &["FR", "FR", "IT:Rome"]),
            pubrec("U", 2014, &["A"], &[], &["US"]),
            pubrec("X", 2014, &["A"], &[], &["US", "FR"]),
            pubrec("S", 2013, &["A"], &[], &["IT:Milan"]),
            pubrec("L", 2018, &["A"], &[], &["US"]),
        ];
        let edges: Vec<EdgeRef> = (1..pubs.len()).map(|q| EdgeRef { citing: q, cited: 0 }).collect();
        let national = run(&pubs, &edges, Context::National);
        assert_eq!(national.observations.len(), 1);
        assert_eq!(national.observations[0].j, TerritoryId::municipality("IT", "Turin"));
        assert_eq!(national.dropped_same_territory, 1);
        let continental = run(&pubs, &edges, Context::Continental);
        assert_eq!(continental.observations.len(), 1);
        assert_eq!(continental.observations[0].j, TerritoryId::country("FR"));
        let intercontinental = run(&pubs, &edges, Context::Intercontinental);
        assert_eq!(intercontinental.observations.len(), 1);
        assert_eq!(intercontinental.observations[0].j, TerritoryId::country("US"));
        assert_eq!(intercontinental.observations[0].cites, 1);
    }

    #[test]
    fn same_territory_retained_with_floor() {
        let pubs = vec![
            pubrec("M", 2011, &["A"], &["IT:Milan"], &["IT:Milan"]),
            pubrec("S", 2013, &["A"], &[], &["IT:Milan"]),
        ];
        let edges = [EdgeRef { citing: 1, cited: 0 }];
        let config = AnalysisConfig {
            exclude_same_territory_dyads: false,
            distance_floor_km: 2.5,
            ..AnalysisConfig::default()
        };
        let assignments = AssignmentTable::compute(&pubs, MajorityRule::Strict);
        let profiles = citing_profiles(CategoryScheme::Subject, &pubs, &edges, &assignments, &config);
        let set = build_observations(&config, CategoryScheme::Subject, &pubs, &edges, &assignments, &gazetteer(), &profiles).unwrap();
        assert_eq!(set.observations.len(), 1);
        assert_eq!(set.observations[0].d_km, 2.5);
    }

    #[test]
    fn unknown_citing_country_is_an_error() {
        let pubs = vec![
            pubrec("M", 2011, &["A"], &["IT:Milan"], &["IT:Milan"]),
            pubrec("J", 2014, &["A"], &[], &["JP"]),
        ];
        let config = AnalysisConfig::default().with_context(Context::Intercontinental);
        let assignments = AssignmentTable::compute(&pubs, MajorityRule::Strict);
        let err = dyad_counts(&config, CategoryScheme::Subject, &pubs, &[EdgeRef { citing: 1, cited: 0 }], &assignments, &gazetteer());
        assert_eq!(err, Err(FlowError::Geo(GeoError::UnknownTerritory(TerritoryId::country("JP")))));
    }

    #[test]
    fn summary_rows() {
        let obs: Vec<FlowObservation> = (1..=4).map(|c| FlowObservation::for_test(c, 2.0, 3.0, 10.0)).collect();
        let [cites, m_i, _, d] = descriptive_summary(&obs).unwrap();
        assert_eq!((cites.mean, cites.p50, cites.n), (2.5, 2.5, 4));
        assert_eq!((m_i.mean, m_i.sd, d.max), (2.0, 0.0, 10.0));
        assert_eq!(descriptive_summary(&[]), Err(StatsError::Empty));
    }
}
