//! Seeded synthetic data with known ground truth.
//!
//! Two generators share one [`SynthSpec`]:
//! [`generate_observations`] draws flow rows directly from the gravity law,
//! [`generate_corpus`] builds publications, citations and a gazetteer whose
//! territory assignments and dyad counts are planted by construction.
//! Randomness comes from ChaCha20 with one stream per purpose (and per
//! category), so output depends on the seed alone.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flows::FlowObservation;
use crate::geodesy::{haversine_km, GeoPoint};
use crate::ingest::{self, CategoryMap, Gazetteer, PublicationFormat};
use crate::model::{CitationEdge, Context, Continent, PublicationRecord, SchemeLevel, TerritoryId, YearRange};

pub const PUBLICATIONS_FILE: &str = "publications.jsonl";
pub const CITATIONS_FILE: &str = "citations.csv";
pub const GAZETTEER_FILE: &str = "gazetteer.csv";
pub const CATEGORY_MAP_FILE: &str = "scmap.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

const TERRITORY_STREAM: u64 = 1 << 32;
const PUBLICATION_STREAM: u64 = (1 << 32) + 1;
const EDGE_STREAM: u64 = (1 << 32) + 2;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("regressors of category {0} are constant, the design would be rank deficient")]
    Degenerate(String),
    #[error("infeasible spec: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// True parameters of the log-linear law for one category.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedCoefficients {
    pub ln_k: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Signed coefficient of `ln d`; negative means decay with distance.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedCategory {
    pub code: String,
    pub area: String,
    /// Rows drawn by [`generate_observations`].
    pub n_observations: usize,
    pub coefficients: PlantedCoefficients,
}

/// Sizes and shape of a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSpec {
    pub n_municipalities: usize,
    pub n_europe_countries: usize,
    pub n_extra_europe_countries: usize,
    /// Home publications with a majority municipality and a year in the cited window.
    pub n_cited: usize,
    /// Cited-side publications whose authors split evenly between two municipalities.
    pub n_tied_cited: usize,
    /// Home publications dated one year before the cited window.
    pub n_out_of_window_cited: usize,
    pub n_citing: usize,
    /// Citing publications whose addresses split evenly between two territories.
    pub n_tied_citing: usize,
    pub n_citations: usize,
    /// Shares of citing publications placed at home, in Europe and elsewhere.
    pub citing_shares: [f64; 3],
    /// Probability that a publication carries a second category.
    pub second_category_rate: f64,
    /// Exponent `g` in the edge weight `size * d^g` between territories.
    pub edge_distance_exponent: f64,
    /// The first `agreement_sample` cited publications form the agreement sample;
    /// all but the last `agreement_sample - agreement_agreeing` get matching
    /// author and address majorities.
    pub agreement_sample: usize,
    pub agreement_agreeing: usize,
    pub cited_window: YearRange,
    pub citing_window: YearRange,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            n_municipalities: 40,
            n_europe_countries: 12,
            n_extra_europe_countries: 10,
            n_cited: 6000,
            n_tied_cited: 100,
            n_out_of_window_cited: 100,
            n_citing: 12000,
            n_tied_citing: 100,
            n_citations: 40000,
            citing_shares: [0.6, 0.25, 0.15],
            second_category_rate: 0.2,
            edge_distance_exponent: -0.5,
            agreement_sample: 1000,
            agreement_agreeing: 968,
            cited_window: YearRange::new(2010, 2012),
            citing_window: YearRange::new(2010, 2017),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub seed: u64,
    pub home_country: String,
    /// Capital of the home country as (lat, lon).
    pub home_capital: (f64, f64),
    pub categories: Vec<PlantedCategory>,
    /// Context stamped on generated observations.
    pub context: Context,
    /// Standard deviation of the additive normal error on `ln C`.
    pub noise_sd: f64,
    /// Masses are `exp(u)` with `u` uniform on this range.
    pub log_mass_range: (f64, f64),
    /// Distances are log-uniform on this range.
    pub distance_range_km: (f64, f64),
    pub corpus: CorpusSpec,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 20240101,
            home_country: "IT".into(),
            home_capital: (41.9028, 12.4964),
            categories: default_categories(8, 3),
            context: Context::National,
            noise_sd: 0.1,
            log_mass_range: (2.0, 9.0),
            distance_range_km: (10.0, 1300.0),
            corpus: CorpusSpec::default(),
        }
    }
}

/// `count` categories `SC001..` spread round-robin over `areas` areas `DA1..`,
/// each with 200 observations and coefficients (4, 0.4, 0.4, -0.5).
pub fn default_categories(count: usize, areas: usize) -> Vec<PlantedCategory> {
    (0..count)
        .map(|k| PlantedCategory {
            code: format!("SC{:03}", k + 1),
            area: format!("DA{}", k % areas.max(1) + 1),
            n_observations: 200,
            coefficients: PlantedCoefficients {
                ln_k: 4.0,
                alpha: 0.4,
                beta: 0.4,
                distance: -0.5,
            },
        })
        .collect()
}

fn invalid(reason: impl Into<String>) -> SynthError {
    SynthError::InvalidSpec(reason.into())
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return Err(invalid(format!("noise_sd must be finite and non-negative, got {}", self.noise_sd)));
        }
        if self.categories.is_empty() {
            return Err(invalid("no categories"));
        }
        let mut codes = BTreeSet::new();
        for c in &self.categories {
            if c.code.is_empty() || c.area.is_empty() {
                return Err(invalid("category and area codes must be non-empty"));
            }
            if !codes.insert(c.code.as_str()) {
                return Err(invalid(format!("duplicate category {}", c.code)));
            }
            let k = c.coefficients;
            if ![k.ln_k, k.alpha, k.beta, k.distance].iter().all(|v| v.is_finite()) {
                return Err(invalid(format!("non-finite coefficient for {}", c.code)));
            }
        }
        let (lo, hi) = self.log_mass_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(invalid("log_mass_range must be finite and ordered"));
        }
        let (dlo, dhi) = self.distance_range_km;
        if !(dlo > 0.0 && dhi.is_finite() && dlo <= dhi) {
            return Err(invalid("distance_range_km must be positive and ordered"));
        }
        GeoPoint::new(self.home_capital.0, self.home_capital.1).map_err(|e| invalid(e.to_string()))?;
        if self.home_country.is_empty() || self.home_country.contains([':', ';', ',']) {
            return Err(invalid("home_country must be a plain code"));
        }
        Ok(())
    }

    fn validate_corpus(&self) -> Result<(), SynthError> {
        self.validate()?;
        let c = &self.corpus;
        if c.n_municipalities < 2 {
            return Err(invalid("at least two municipalities are needed"));
        }
        if c.n_europe_countries == 0 || c.n_extra_europe_countries == 0 {
            return Err(invalid("both foreign country groups must be non-empty"));
        }
        if c.n_cited == 0 || c.n_citing == 0 || c.n_citations == 0 {
            return Err(invalid("n_cited, n_citing and n_citations must be positive"));
        }
        if c.agreement_agreeing > c.agreement_sample || c.agreement_sample > c.n_cited {
            return Err(invalid("need agreement_agreeing <= agreement_sample <= n_cited"));
        }
        if c.cited_window.is_empty() || c.citing_window.is_empty() {
            return Err(invalid("year windows must be non-empty"));
        }
        if c.cited_window.start <= 1900 {
            return Err(invalid("cited window must start after 1900"));
        }
        if !c.citing_shares.iter().all(|s| s.is_finite() && *s >= 0.0) || c.citing_shares.iter().sum::<f64>() <= 0.0 {
            return Err(invalid("citing_shares must be non-negative with a positive sum"));
        }
        if !(0.0..=1.0).contains(&c.second_category_rate) {
            return Err(invalid("second_category_rate must lie in [0, 1]"));
        }
        if !c.edge_distance_exponent.is_finite() {
            return Err(invalid("edge_distance_exponent must be finite"));
        }
        let pairs = (c.n_citing + c.n_tied_citing) as u128 * (c.n_cited + c.n_tied_cited + c.n_out_of_window_cited) as u128;
        if c.n_citations as u128 > pairs / 2 {
            return Err(SynthError::Infeasible(format!(
                "{} distinct citations requested but only {} citing/cited pairs exist (at most half may be used)",
                c.n_citations, pairs
            )));
        }
        Ok(())
    }
}

fn stream(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Ground truth behind [`generate_observations`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationManifest {
    pub seed: u64,
    pub noise_sd: f64,
    pub categories: Vec<PlantedSeries>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSeries {
    pub category: String,
    pub area: String,
    pub coefficients: PlantedCoefficients,
    /// `exp(law)` per row.
    pub expected: Vec<f64>,
    /// `exp(law + error)` per row, before rounding and clamping.
    pub pre_clamp: Vec<f64>,
}

/// Draw flow rows from the gravity law, category by category.
///
/// `C = round(exp(ln k + a ln M_i + b ln M_j + g ln d + e))`, at least 1,
/// with `e ~ N(0, noise_sd)`. Rows of one category use their own stream, so
/// adding a category leaves the others unchanged.
pub fn generate_observations(spec: &SynthSpec) -> Result<(Vec<FlowObservation>, ObservationManifest), SynthError> {
    spec.validate()?;
    let (lo, hi) = spec.log_mass_range;
    let (dlo, dhi) = (spec.distance_range_km.0.ln(), spec.distance_range_km.1.ln());
    let mut observations = Vec::new();
    let mut series = Vec::with_capacity(spec.categories.len());
    for (k, category) in spec.categories.iter().enumerate() {
        if category.n_observations > 1 && (lo == hi || dlo == dhi) {
            return Err(SynthError::Degenerate(category.code.clone()));
        }
        let mut rng = stream(spec.seed, k as u64);
        let c = category.coefficients;
        let mut expected = Vec::with_capacity(category.n_observations);
        let mut pre_clamp = Vec::with_capacity(category.n_observations);
        for r in 0..category.n_observations {
            let ln_m_i = uniform(&mut rng, lo, hi);
            let ln_m_j = uniform(&mut rng, lo, hi);
            let ln_d = uniform(&mut rng, dlo, dhi);
            let z: f64 = rng.sample(StandardNormal);
            let law = c.ln_k + c.alpha * ln_m_i + c.beta * ln_m_j + c.distance * ln_d;
            let flow = (law + spec.noise_sd * z).exp();
            expected.push(law.exp());
            pre_clamp.push(flow);
            observations.push(FlowObservation {
                context: spec.context,
                category: category.code.clone(),
                i: TerritoryId::municipality(spec.home_country.as_str(), format!("O{r:06}")),
                j: TerritoryId::municipality(spec.home_country.as_str(), format!("D{r:06}")),
                cites: flow.round().max(1.0) as u64,
                m_i: ln_m_i.exp(),
                m_j: ln_m_j.exp(),
                d_km: ln_d.exp(),
            });
        }
        series.push(PlantedSeries {
            category: category.code.clone(),
            area: category.area.clone(),
            coefficients: c,
            expected,
            pre_clamp,
        });
    }
    Ok((
        observations,
        ObservationManifest {
            seed: spec.seed,
            noise_sd: spec.noise_sd,
            categories: series,
        },
    ))
}

fn uniform(rng: &mut ChaCha20Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// In-memory corpus, the same four inputs the ingest module reads.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub publications: Vec<PublicationRecord>,
    pub citations: Vec<CitationEdge>,
    pub gazetteer: Gazetteer,
    pub category_map: CategoryMap,
}

/// Qualifying citations between two planted territories.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PlantedDyad {
    pub context: Context,
    pub scheme: SchemeLevel,
    pub category: String,
    pub i: TerritoryId,
    pub j: TerritoryId,
    pub cites: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementPlan {
    pub ids: Vec<String>,
    pub agreeing: usize,
    pub compared: usize,
}

/// Ground truth behind [`generate_corpus`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub spec: SynthSpec,
    pub n_publications: usize,
    pub n_citations: usize,
    /// Municipality each usable cited publication belongs to (author majority).
    pub planted_cited: BTreeMap<String, TerritoryId>,
    /// Territory each usable citing publication belongs to (address majority).
    pub planted_citing: BTreeMap<String, TerritoryId>,
    pub tied_cited: Vec<String>,
    pub tied_citing: Vec<String>,
    pub out_of_window_cited: Vec<String>,
    pub agreement: AgreementPlan,
    /// Including same-territory national dyads.
    pub dyads: Vec<PlantedDyad>,
}

struct Territories {
    municipalities: Vec<TerritoryId>,
    europe: Vec<TerritoryId>,
    extra: Vec<TerritoryId>,
    gazetteer: Gazetteer,
}

fn build_territories(spec: &SynthSpec, rng: &mut ChaCha20Rng) -> Territories {
    let c = &spec.corpus;
    let mut gazetteer = Gazetteer::default();
    let home = TerritoryId::country(spec.home_country.as_str());
    let capital = GeoPoint::new(spec.home_capital.0, spec.home_capital.1).expect("validated");
    gazetteer.insert(home, capital, Some(Continent::Europe)).expect("fresh code");
    let mut place = |gaz: &mut Gazetteer, id: TerritoryId, lat: (f64, f64), lon: (f64, f64), continent| {
        let point = GeoPoint::new(rng.random_range(lat.0..lat.1), rng.random_range(lon.0..lon.1)).expect("in range");
        gaz.insert(id.clone(), point, continent).expect("fresh code");
        id
    };
    let municipalities = (0..c.n_municipalities)
        .map(|k| {
            let id = TerritoryId::municipality(spec.home_country.as_str(), format!("M{k:04}"));
            place(&mut gazetteer, id, (37.0, 47.0), (7.0, 18.5), None)
        })
        .collect();
    let europe = (0..c.n_europe_countries)
        .map(|k| place(&mut gazetteer, TerritoryId::country(format!("E{k:03}")), (36.0, 64.0), (-9.0, 30.0), Some(Continent::Europe)))
        .collect();
    let extra = (0..c.n_extra_europe_countries)
        .map(|k| {
            let lon = if k % 2 == 0 { (-160.0, -40.0) } else { (60.0, 170.0) };
            place(&mut gazetteer, TerritoryId::country(format!("X{k:03}")), (-45.0, 60.0), lon, Some(Continent::ExtraEurope))
        })
        .collect();
    Territories {
        municipalities,
        europe,
        extra,
        gazetteer,
    }
}

fn pick<'a, T>(rng: &mut ChaCha20Rng, items: &'a [T]) -> &'a T {
    &items[rng.random_range(0..items.len())]
}

/// An index different from `avoid`, uniformly. Needs `len >= 2`.
fn other_index(rng: &mut ChaCha20Rng, len: usize, avoid: usize) -> usize {
    let k = rng.random_range(0..len - 1);
    if k >= avoid {
        k + 1
    } else {
        k
    }
}

fn draw_categories(rng: &mut ChaCha20Rng, spec: &SynthSpec) -> Vec<String> {
    let n = spec.categories.len();
    let first = rng.random_range(0..n);
    let mut out = vec![spec.categories[first].code.clone()];
    if n > 1 && rng.random_bool(spec.corpus.second_category_rate) {
        out.push(spec.categories[other_index(rng, n, first)].code.clone());
    }
    out
}

fn draw_year(rng: &mut ChaCha20Rng, window: YearRange) -> i32 {
    rng.random_range(window.start..=window.end)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Role {
    Cited(usize),
    TiedCited,
    OutOfWindow,
    Citing(usize),
    TiedCiting,
}

/// Build a corpus with planted assignments and dyad counts.
///
/// Errors when the spec is invalid or asks for more distinct citations than
/// half of the available citing/cited pairs.
pub fn generate_corpus(spec: &SynthSpec) -> Result<(Corpus, CorpusManifest), SynthError> {
    spec.validate_corpus()?;
    let c = &spec.corpus;
    let t = build_territories(spec, &mut stream(spec.seed, TERRITORY_STREAM));
    let mut rng = stream(spec.seed, PUBLICATION_STREAM);
    let n_mun = t.municipalities.len();

    let mut publications = Vec::new();
    let mut roles = Vec::new();
    let mut manifest = CorpusManifest {
        spec: spec.clone(),
        n_publications: 0,
        n_citations: 0,
        planted_cited: BTreeMap::new(),
        planted_citing: BTreeMap::new(),
        tied_cited: Vec::new(),
        tied_citing: Vec::new(),
        out_of_window_cited: Vec::new(),
        agreement: AgreementPlan {
            ids: Vec::new(),
            agreeing: c.agreement_agreeing,
            compared: c.agreement_sample,
        },
        dyads: Vec::new(),
    };
    let foreign: Vec<TerritoryId> = t.europe.iter().chain(&t.extra).cloned().collect();

    // Cited side: two of three author slots at the planted municipality.
    let disagree_from = c.agreement_agreeing;
    for k in 0..c.n_cited + c.n_out_of_window_cited {
        let m = rng.random_range(0..n_mun);
        let home = t.municipalities[m].clone();
        let (authors, addresses) = if k >= disagree_from && k < c.agreement_sample {
            let b = t.municipalities[other_index(&mut rng, n_mun, m)].clone();
            (vec![home.clone(), home.clone(), b.clone()], vec![b.clone(), b, home.clone()])
        } else {
            let third = if rng.random_bool(0.5) {
                t.municipalities[other_index(&mut rng, n_mun, m)].clone()
            } else {
                pick(&mut rng, &foreign).clone()
            };
            let list = vec![home.clone(), third, home.clone()];
            (list.clone(), list)
        };
        let (id, year, role) = if k < c.n_cited {
            (format!("C{k:07}"), draw_year(&mut rng, c.cited_window), Role::Cited(m))
        } else {
            (format!("W{k:07}"), c.cited_window.start - 1, Role::OutOfWindow)
        };
        if k < c.agreement_sample {
            manifest.agreement.ids.push(id.clone());
        }
        match role {
            Role::Cited(_) => manifest.planted_cited.insert(id.clone(), home),
            _ => {
                manifest.out_of_window_cited.push(id.clone());
                None
            }
        };
        publications.push(PublicationRecord {
            id,
            year,
            categories: draw_categories(&mut rng, spec),
            author_territories: authors,
            address_territories: addresses,
        });
        roles.push(role);
    }
    for k in 0..c.n_tied_cited {
        let m = rng.random_range(0..n_mun);
        let b = other_index(&mut rng, n_mun, m);
        let list = vec![t.municipalities[m].clone(), t.municipalities[b].clone()];
        let id = format!("T{k:07}");
        manifest.tied_cited.push(id.clone());
        publications.push(PublicationRecord {
            id,
            year: draw_year(&mut rng, c.cited_window),
            categories: draw_categories(&mut rng, spec),
            author_territories: list.clone(),
            address_territories: list,
        });
        roles.push(Role::TiedCited);
    }

    // Citing side: planted territory holds two of three address slots.
    let shares = WeightedIndex::new(c.citing_shares).expect("validated shares");
    let mut citing_territories: Vec<TerritoryId> = Vec::new();
    let mut territory_slot: BTreeMap<TerritoryId, usize> = BTreeMap::new();
    for k in 0..c.n_citing {
        let planted = match shares.sample(&mut rng) {
            0 => pick(&mut rng, &t.municipalities).clone(),
            1 => pick(&mut rng, &t.europe).clone(),
            _ => pick(&mut rng, &t.extra).clone(),
        };
        let third = pick(&mut rng, &t.municipalities).clone();
        let third = if third == planted {
            pick(&mut rng, &foreign).clone()
        } else {
            third
        };
        let list = vec![planted.clone(), third, planted.clone()];
        let id = format!("P{k:07}");
        manifest.planted_citing.insert(id.clone(), planted.clone());
        let next = territory_slot.len();
        let slot = *territory_slot.entry(planted.clone()).or_insert_with(|| {
            citing_territories.push(planted.clone());
            next
        });
        publications.push(PublicationRecord {
            id,
            year: draw_year(&mut rng, c.citing_window),
            categories: draw_categories(&mut rng, spec),
            author_territories: list.clone(),
            address_territories: list,
        });
        roles.push(Role::Citing(slot));
    }
    for k in 0..c.n_tied_citing {
        let a = pick(&mut rng, &foreign).clone();
        let b = pick(&mut rng, &t.municipalities).clone();
        let list = vec![a, b];
        let id = format!("Q{k:07}");
        manifest.tied_citing.push(id.clone());
        publications.push(PublicationRecord {
            id,
            year: draw_year(&mut rng, c.citing_window),
            categories: draw_categories(&mut rng, spec),
            author_territories: list.clone(),
            address_territories: list,
        });
        roles.push(Role::TiedCiting);
    }

    let citations = place_citations(spec, &t, &roles, &publications, &citing_territories)?;
    manifest.dyads = planted_dyads(spec, &publications, &roles, &citations, &citing_territories, &t);
    manifest.n_publications = publications.len();
    manifest.n_citations = citations.len();

    let mut category_map = CategoryMap::default();
    for category in &spec.categories {
        category_map
            .insert(category.code.as_str(), category.area.as_str())
            .expect("codes are unique");
    }
    Ok((
        Corpus {
            publications,
            citations,
            gazetteer: t.gazetteer,
            category_map,
        },
        manifest,
    ))
}

/// Draw distinct edges. The citing publication is uniform; the cited one is
/// an excluded cited publication with probability equal to their share,
/// otherwise a usable one from a municipality drawn with weight
/// `size * d^g` from the citing territory.
fn place_citations(
    spec: &SynthSpec,
    t: &Territories,
    roles: &[Role],
    publications: &[PublicationRecord],
    citing_territories: &[TerritoryId],
) -> Result<Vec<CitationEdge>, SynthError> {
    let c = &spec.corpus;
    let mut rng = stream(spec.seed, EDGE_STREAM);
    let mut by_municipality: Vec<Vec<u32>> = vec![Vec::new(); t.municipalities.len()];
    let mut excluded_cited = Vec::new();
    let mut citing = Vec::new();
    for (k, role) in roles.iter().enumerate() {
        match role {
            Role::Cited(m) => by_municipality[*m].push(k as u32),
            Role::TiedCited | Role::OutOfWindow => excluded_cited.push(k as u32),
            Role::Citing(_) | Role::TiedCiting => citing.push(k as u32),
        }
    }
    let usable = c.n_cited as f64;
    let excluded_share = excluded_cited.len() as f64 / (usable + excluded_cited.len() as f64);
    let point = |id: &TerritoryId| t.gazetteer.point(id).expect("planted territory");
    let municipality_weights = |origin: GeoPoint| -> Option<WeightedIndex<f64>> {
        let weights: Vec<f64> = t
            .municipalities
            .iter()
            .zip(&by_municipality)
            .map(|(m, pubs)| {
                let d = haversine_km(origin, point(m)).value().max(1.0);
                pubs.len() as f64 * d.powf(c.edge_distance_exponent)
            })
            .collect();
        WeightedIndex::new(weights).ok()
    };
    let per_territory: Vec<Option<WeightedIndex<f64>>> =
        citing_territories.iter().map(|id| municipality_weights(point(id))).collect();
    let capital = GeoPoint::new(spec.home_capital.0, spec.home_capital.1).expect("validated");
    let fallback = municipality_weights(capital);

    let mut seen: HashSet<(u32, u32)> = HashSet::with_capacity(c.n_citations);
    let mut edges = Vec::with_capacity(c.n_citations);
    let budget = 50 * c.n_citations + 1000;
    let mut attempts = 0usize;
    while edges.len() < c.n_citations {
        attempts += 1;
        if attempts > budget {
            return Err(SynthError::Infeasible(format!(
                "placed only {} of {} distinct citations",
                edges.len(),
                c.n_citations
            )));
        }
        let q = *pick(&mut rng, &citing);
        let weights = match roles[q as usize] {
            Role::Citing(slot) => per_territory[slot].as_ref(),
            _ => fallback.as_ref(),
        };
        let from_usable = match weights {
            Some(_) if excluded_cited.is_empty() => true,
            Some(_) => !rng.random_bool(excluded_share),
            None if excluded_cited.is_empty() => {
                return Err(SynthError::Infeasible("no cited publications to cite".into()));
            }
            None => false,
        };
        let p = match weights {
            Some(w) if from_usable => {
                let m = w.sample(&mut rng);
                *pick(&mut rng, &by_municipality[m])
            }
            _ => *pick(&mut rng, &excluded_cited),
        };
        if seen.insert((q, p)) {
            edges.push((q, p));
        }
    }
    edges.sort_unstable();
    Ok(edges
        .into_iter()
        .map(|(q, p)| CitationEdge::new(publications[q as usize].id.as_str(), publications[p as usize].id.as_str()))
        .collect())
}

fn planted_dyads(
    spec: &SynthSpec,
    publications: &[PublicationRecord],
    roles: &[Role],
    citations: &[CitationEdge],
    citing_territories: &[TerritoryId],
    t: &Territories,
) -> Vec<PlantedDyad> {
    let index: BTreeMap<&str, usize> = publications.iter().enumerate().map(|(k, p)| (p.id.as_str(), k)).collect();
    let area: BTreeMap<&str, &str> = spec.categories.iter().map(|c| (c.code.as_str(), c.area.as_str())).collect();
    let europe: BTreeSet<&TerritoryId> = t.europe.iter().collect();
    let mut counts: BTreeMap<(Context, SchemeLevel, String, TerritoryId, TerritoryId), u64> = BTreeMap::new();
    for edge in citations {
        let (q, p) = (index[edge.citing_id.as_str()], index[edge.cited_id.as_str()]);
        let (Role::Citing(slot), Role::Cited(m)) = (roles[q], roles[p]) else {
            continue;
        };
        let j = &citing_territories[slot];
        let context = match j {
            TerritoryId::Municipality { .. } => Context::National,
            _ if europe.contains(j) => Context::Continental,
            _ => Context::Intercontinental,
        };
        let i = &t.municipalities[m];
        let subjects: BTreeSet<&str> = publications[p].categories.iter().map(String::as_str).collect();
        let areas: BTreeSet<&str> = subjects.iter().map(|s| area[s]).collect();
        for (scheme, set) in [(SchemeLevel::Sc, subjects), (SchemeLevel::Da, areas)] {
            for category in set {
                *counts
                    .entry((context, scheme, category.to_string(), i.clone(), j.clone()))
                    .or_insert(0) += 1;
            }
        }
    }
    counts
        .into_iter()
        .map(|((context, scheme, category, i, j), cites)| PlantedDyad {
            context,
            scheme,
            category,
            i,
            j,
            cites,
        })
        .collect()
}

fn create(dir: &Path, name: &str) -> io::Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(dir.join(name))?))
}

/// Write the corpus files and the manifest into `dir`, creating it if needed.
pub fn write_corpus(dir: &Path, corpus: &Corpus, manifest: &CorpusManifest) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut out = create(dir, PUBLICATIONS_FILE)?;
    ingest::write_publications(&mut out, &corpus.publications, PublicationFormat::Jsonl)?;
    out.flush()?;
    let mut out = create(dir, CITATIONS_FILE)?;
    ingest::write_citations(&mut out, &corpus.citations)?;
    out.flush()?;
    let mut out = create(dir, GAZETTEER_FILE)?;
    ingest::write_gazetteer(&mut out, &corpus.gazetteer)?;
    out.flush()?;
    let mut out = create(dir, CATEGORY_MAP_FILE)?;
    ingest::write_category_map(&mut out, &corpus.category_map)?;
    out.flush()?;
    let mut out = create(dir, MANIFEST_FILE)?;
    serde_json::to_writer_pretty(&mut out, manifest)?;
    out.write_all(b"\n")?;
    out.flush()
}
