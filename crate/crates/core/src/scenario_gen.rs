//! Synthetic annual loss series from an event catalogue.
//!
//! Each synthetic year draws a year type from the empirical type
//! frequencies, then a historical year of that type, then a Poisson storm
//! count, then that many events (with replacement). Every synthetic year
//! owns an independent ChaCha stream keyed by its index, so years can be
//! generated in any order or concurrently with identical results.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss_data::{AnnualLossMatrix, EventCatalogue, YearWindow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeasonLabel {
    Warm,
    Cold,
    Neutral,
}

impl std::str::FromStr for SeasonLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "warm" => Ok(Self::Warm),
            "cold" => Ok(Self::Cold),
            "neutral" => Ok(Self::Neutral),
            other => Err(Error::InvalidSeasonLabel(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum YearType {
    PersistentWarm,
    PersistentCold,
    Neutral,
}

impl YearType {
    pub const ALL: [YearType; 3] = [YearType::PersistentWarm, YearType::PersistentCold, YearType::Neutral];

    pub fn name(&self) -> &'static str {
        match self {
            YearType::PersistentWarm => "persistent-warm",
            YearType::PersistentCold => "persistent-cold",
            YearType::Neutral => "neutral",
        }
    }
}

/// Historical years labeled by type, with empirical type frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearTypeModel {
    year_labels: BTreeMap<i64, YearType>,
    frequencies: BTreeMap<YearType, f64>,
}

impl YearTypeModel {
    pub fn from_labels(year_labels: BTreeMap<i64, YearType>) -> Result<Self> {
        if year_labels.is_empty() {
            return Err(Error::InvalidSamplerConfig("no labeled years".into()));
        }
        let total = year_labels.len() as f64;
        let frequencies = YearType::ALL
            .iter()
            .map(|&ty| {
                let count = year_labels.values().filter(|&&l| l == ty).count();
                (ty, count as f64 / total)
            })
            .collect();
        Ok(Self {
            year_labels,
            frequencies,
        })
    }

    /// Every window year neutral: a single-type model.
    pub fn uniform(window: YearWindow) -> Result<Self> {
        Self::from_labels(window.years().map(|y| (y, YearType::Neutral)).collect())
    }

    pub fn year_labels(&self) -> &BTreeMap<i64, YearType> {
        &self.year_labels
    }

    pub fn frequency(&self, ty: YearType) -> f64 {
        self.frequencies.get(&ty).copied().unwrap_or(0.0)
    }

    /// Historical years of a type, ascending.
    pub fn years_of(&self, ty: YearType) -> Vec<i64> {
        self.year_labels
            .iter()
            .filter(|(_, &l)| l == ty)
            .map(|(&y, _)| y)
            .collect()
    }

    /// Fails unless every window year is labeled.
    pub fn check_covers(&self, window: YearWindow) -> Result<()> {
        match window.years().find(|y| !self.year_labels.contains_key(y)) {
            Some(y) => Err(Error::NoSeasonLabels(y)),
            None => Ok(()),
        }
    }
}

/// Labels each year from its season labels: more than five warm seasons is
/// persistent-warm, more than five cold is persistent-cold; if both exceed
/// five the larger count wins and a tie is neutral.
pub fn classify_year_types(seasonal_index: &BTreeMap<i64, Vec<SeasonLabel>>) -> Result<YearTypeModel> {
    let mut labels = BTreeMap::new();
    for (&year, seasons) in seasonal_index {
        if seasons.is_empty() {
            return Err(Error::NoSeasonLabels(year));
        }
        let warm = seasons.iter().filter(|&&s| s == SeasonLabel::Warm).count();
        let cold = seasons.iter().filter(|&&s| s == SeasonLabel::Cold).count();
        let ty = match (warm > 5, cold > 5) {
            (true, true) if warm > cold => YearType::PersistentWarm,
            (true, true) if cold > warm => YearType::PersistentCold,
            (true, true) => YearType::Neutral,
            (true, false) => YearType::PersistentWarm,
            (false, true) => YearType::PersistentCold,
            (false, false) => YearType::Neutral,
        };
        labels.insert(year, ty);
    }
    YearTypeModel::from_labels(labels)
}

#[derive(Debug, Deserialize)]
struct SeasonRow {
    year: i64,
    season_index: i64,
    label: String,
}

/// Reads `year,season_index,label` rows into per-year label lists ordered by
/// season index.
pub fn load_season_labels(path: impl AsRef<Path>) -> Result<BTreeMap<i64, Vec<SeasonLabel>>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let mut by_year: BTreeMap<i64, BTreeMap<i64, SeasonLabel>> = BTreeMap::new();
    for row in rdr.deserialize::<SeasonRow>() {
        let row = row.map_err(|e| Error::csv(path, e))?;
        let label: SeasonLabel = row.label.parse()?;
        let slot = by_year.entry(row.year).or_default();
        if let Some(prev) = slot.insert(row.season_index, label) {
            if prev != label {
                return Err(Error::InvalidSamplerConfig(format!(
                    "conflicting labels for year {} season {}",
                    row.year, row.season_index
                )));
            }
        }
    }
    Ok(by_year
        .into_iter()
        .map(|(y, s)| (y, s.into_values().collect()))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaMode {
    /// Total events over the window length; events drawn from the whole
    /// catalogue.
    GlobalMean,
    /// The sampled historical year's event count; events drawn from that
    /// year.
    #[default]
    PerYear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub n_years: usize,
    pub window: YearWindow,
    pub lambda_mode: LambdaMode,
    pub rng_seed: u64,
    /// Scale on event frequency; `None` means 1.
    pub frequency_calibration: Option<f64>,
    pub parallel: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_years: 10_000,
            window: YearWindow::default(),
            lambda_mode: LambdaMode::PerYear,
            rng_seed: 0,
            frequency_calibration: None,
            parallel: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_years == 0 {
            return Err(Error::InvalidSamplerConfig("n_years must be at least 1".into()));
        }
        if self.window.is_empty() {
            return Err(Error::InvalidSamplerConfig("window is empty".into()));
        }
        if let Some(c) = self.frequency_calibration {
            if !(c.is_finite() && c >= 0.0) {
                return Err(Error::InvalidSamplerConfig(
                    "frequency_calibration must be finite and nonnegative".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn calibration(&self) -> f64 {
        self.frequency_calibration.unwrap_or(1.0)
    }
}

/// The random stream of synthetic year `index`.
pub fn year_stream(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn draw_historical_year<R: Rng>(
    model: &YearTypeModel,
    pools: &[(YearType, f64, Vec<i64>)],
    rng: &mut R,
) -> Result<i64> {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut chosen = None;
    for entry in pools.iter().filter(|p| p.1 > 0.0) {
        chosen = Some(entry);
        acc += entry.1;
        if u < acc {
            break;
        }
    }
    let (ty, _, years) =
        chosen.ok_or_else(|| Error::InvalidSamplerConfig("all year-type frequencies are zero".into()))?;
    if years.is_empty() {
        return Err(Error::EmptyYearType(ty.name().into()));
    }
    debug_assert!(model.frequency(*ty) > 0.0);
    Ok(years[rng.random_range(0..years.len())])
}

fn type_pools(model: &YearTypeModel) -> Vec<(YearType, f64, Vec<i64>)> {
    YearType::ALL
        .iter()
        .map(|&ty| (ty, model.frequency(ty), model.years_of(ty)))
        .collect()
}

/// One historical year per synthetic year.
pub fn sample_year_sequence(model: &YearTypeModel, config: &SamplerConfig) -> Result<Vec<i64>> {
    config.validate()?;
    let pools = type_pools(model);
    let draw = |t: usize| draw_historical_year(model, &pools, &mut year_stream(config.rng_seed, t));
    if config.parallel {
        (0..config.n_years).into_par_iter().map(draw).collect()
    } else {
        (0..config.n_years).map(draw).collect()
    }
}

/// Events drawn for one synthetic year.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledYear {
    pub count: u64,
    /// Catalogue indices, in draw order.
    pub events: Vec<usize>,
    pub diagnostic: Option<String>,
}

/// Poisson event counts and uniform event draws over a catalogue.
#[derive(Debug, Clone)]
pub struct EventSampler<'a> {
    catalogue: &'a EventCatalogue,
    by_year: HashMap<i64, Vec<usize>>,
    all: Vec<usize>,
    mode: LambdaMode,
    calibration: f64,
    window_len: usize,
}

impl<'a> EventSampler<'a> {
    pub fn new(catalogue: &'a EventCatalogue, config: &SamplerConfig) -> Self {
        let mut by_year: HashMap<i64, Vec<usize>> = HashMap::new();
        for (i, ev) in catalogue.events().iter().enumerate() {
            by_year.entry(ev.year).or_default().push(i);
        }
        Self {
            catalogue,
            by_year,
            all: (0..catalogue.len()).collect(),
            mode: config.lambda_mode,
            calibration: config.calibration(),
            window_len: config.window.len(),
        }
    }

    /// Poisson rate for a sampled historical year.
    pub fn lambda(&self, year: i64) -> f64 {
        match self.mode {
            LambdaMode::GlobalMean => self.catalogue.len() as f64 / self.window_len as f64 * self.calibration,
            LambdaMode::PerYear => self.by_year.get(&year).map_or(0, Vec::len) as f64 * self.calibration,
        }
    }

    fn population(&self, year: i64) -> &[usize] {
        match self.mode {
            LambdaMode::GlobalMean => &self.all,
            LambdaMode::PerYear => self.by_year.get(&year).map_or(&[], Vec::as_slice),
        }
    }

    pub fn sample<R: Rng>(&self, year: i64, rng: &mut R) -> SampledYear {
        let lambda = self.lambda(year);
        let count = if lambda > 0.0 {
            Poisson::new(lambda).expect("positive finite rate").sample(rng) as u64
        } else {
            0
        };
        let pool = self.population(year);
        if pool.is_empty() {
            let diagnostic = (count > 0).then(|| format!("no events to draw for year {year}; zero-loss year"));
            return SampledYear {
                count,
                events: Vec::new(),
                diagnostic,
            };
        }
        let events = (0..count).map(|_| pool[rng.random_range(0..pool.len())]).collect();
        SampledYear {
            count,
            events,
            diagnostic: None,
        }
    }
}

/// Event ids drawn for one synthetic year with the given stream.
pub fn sample_annual_events<R: Rng>(
    year: i64,
    catalogue: &EventCatalogue,
    config: &SamplerConfig,
    rng: &mut R,
) -> Vec<String> {
    EventSampler::new(catalogue, config)
        .sample(year, rng)
        .events
        .into_iter()
        .map(|i| catalogue.events()[i].event_id.clone())
        .collect()
}

/// Everything produced by one sampler run.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    /// Years are numbered 1..=n_years.
    pub matrix: AnnualLossMatrix,
    pub historical_years: Vec<i64>,
    pub counts: Vec<u64>,
    pub diagnostics: Vec<String>,
}

impl Simulation {
    pub fn mean_count(&self) -> f64 {
        self.counts.iter().sum::<u64>() as f64 / self.counts.len() as f64
    }
}

/// Expected count and count variance per synthetic year under the model.
pub fn count_moments(catalogue: &EventCatalogue, model: &YearTypeModel, config: &SamplerConfig) -> (f64, f64) {
    let sampler = EventSampler::new(catalogue, config);
    let mut mean = 0.0;
    let mut second = 0.0;
    for ty in YearType::ALL {
        let p = model.frequency(ty);
        let years = model.years_of(ty);
        if p == 0.0 || years.is_empty() {
            continue;
        }
        for y in &years {
            let l = sampler.lambda(*y);
            let w = p / years.len() as f64;
            mean += w * l;
            second += w * l * l;
        }
    }
    // Poisson mixture: E[N] = E[lambda], Var[N] = E[lambda] + Var[lambda]
    (mean, mean + (second - mean * mean).max(0.0))
}

pub fn simulate(catalogue: &EventCatalogue, model: &YearTypeModel, config: &SamplerConfig) -> Result<Simulation> {
    config.validate()?;
    let countries = catalogue.countries();
    let col_of: HashMap<&str, usize> = countries.iter().enumerate().map(|(j, c)| (c.as_str(), j)).collect();
    let event_cols: Vec<Vec<(usize, f64)>> = catalogue
        .events()
        .iter()
        .map(|ev| ev.losses.iter().map(|(c, &l)| (col_of[c.as_str()], l)).collect())
        .collect();
    let pools = type_pools(model);
    let sampler = EventSampler::new(catalogue, config);
    let n = countries.len();

    let one_year = |t: usize| -> Result<(i64, SampledYear, Vec<f64>)> {
        let mut rng = year_stream(config.rng_seed, t);
        let year = draw_historical_year(model, &pools, &mut rng)?;
        let sampled = sampler.sample(year, &mut rng);
        let mut row = vec![0.0; n];
        for &e in &sampled.events {
            for &(j, l) in &event_cols[e] {
                row[j] += l;
            }
        }
        Ok((year, sampled, row))
    };
    let years: Vec<(i64, SampledYear, Vec<f64>)> = if config.parallel {
        (0..config.n_years)
            .into_par_iter()
            .map(one_year)
            .collect::<Result<_>>()?
    } else {
        (0..config.n_years).map(one_year).collect::<Result<_>>()?
    };

    let mut diagnostics = Vec::new();
    if catalogue.is_empty() {
        let msg = "event catalogue is empty; the synthetic matrix has no countries".to_string();
        log::warn!("{msg}");
        diagnostics.push(msg);
    }
    let mut columns = vec![Vec::with_capacity(config.n_years); n];
    let mut historical_years = Vec::with_capacity(config.n_years);
    let mut counts = Vec::with_capacity(config.n_years);
    let mut empty_draws = 0usize;
    for (year, sampled, row) in years {
        historical_years.push(year);
        counts.push(sampled.count);
        if sampled.diagnostic.is_some() {
            empty_draws += 1;
        }
        for (col, v) in columns.iter_mut().zip(row) {
            col.push(v);
        }
    }
    if empty_draws > 0 {
        let msg = format!("{empty_draws} synthetic years drew events from an empty sampling set");
        log::warn!("{msg}");
        diagnostics.push(msg);
    }
    let matrix =
        AnnualLossMatrix::from_columns_unchecked_shape((1..=config.n_years as i64).collect(), countries, columns)?;
    Ok(Simulation {
        matrix,
        historical_years,
        counts,
        diagnostics,
    })
}

/// The synthetic annual loss matrix alone.
pub fn build_loss_series(
    catalogue: &EventCatalogue,
    model: &YearTypeModel,
    config: &SamplerConfig,
) -> Result<AnnualLossMatrix> {
    simulate(catalogue, model, config).map(|s| s.matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss_data::Event;

    fn labels(warm: usize, cold: usize, neutral: usize) -> Vec<SeasonLabel> {
        std::iter::repeat_n(SeasonLabel::Warm, warm)
            .chain(std::iter::repeat_n(SeasonLabel::Cold, cold))
            .chain(std::iter::repeat_n(SeasonLabel::Neutral, neutral))
            .collect()
    }

    fn event(id: &str, year: i64, losses: &[(&str, f64)]) -> Event {
        Event {
            event_id: id.into(),
            year,
            losses: losses.iter().map(|(c, l)| (c.to_string(), *l)).collect(),
        }
    }

    #[test]
    fn classification_rules() {
        let mut idx = BTreeMap::new();
        idx.insert(1980, labels(7, 2, 3));
        idx.insert(1981, labels(5, 5, 2));
        idx.insert(1982, labels(1, 8, 3));
        idx.insert(1983, labels(6, 6, 0));
        idx.insert(1984, labels(7, 6, 0));
        let model = classify_year_types(&idx).unwrap();
        let l = model.year_labels();
        assert_eq!(l[&1980], YearType::PersistentWarm);
        assert_eq!(l[&1981], YearType::Neutral);
        assert_eq!(l[&1982], YearType::PersistentCold);
        assert_eq!(l[&1983], YearType::Neutral);
        assert_eq!(l[&1984], YearType::PersistentWarm);

        idx.insert(1985, Vec::new());
        assert!(matches!(classify_year_types(&idx), Err(Error::NoSeasonLabels(1985))));
    }

    #[test]
    fn frequencies_count_labels() {
        let idx: BTreeMap<i64, Vec<SeasonLabel>> = (0..40)
            .map(|i| (1980 + i, if i < 10 { labels(12, 0, 0) } else { labels(0, 0, 12) }))
            .collect();
        let model = classify_year_types(&idx).unwrap();
        assert_eq!(model.frequency(YearType::PersistentWarm), 0.25);
        let total: f64 = YearType::ALL.iter().map(|&t| model.frequency(t)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn point_mass_year_sequence() {
        let model = YearTypeModel::from_labels([(1983, YearType::PersistentWarm)].into_iter().collect()).unwrap();
        let cfg = SamplerConfig::default();
        let seq = sample_year_sequence(&model, &cfg).unwrap();
        assert_eq!(seq.len(), 10_000);
        assert!(seq.iter().all(|&y| y == 1983));
    }

    #[test]
    fn uniform_model_covers_window() {
        let window = YearWindow::new(1979, 1983);
        let model = YearTypeModel::uniform(window).unwrap();
        let cfg = SamplerConfig {
            n_years: 2000,
            window,
            ..Default::default()
        };
        let seq = sample_year_sequence(&model, &cfg).unwrap();
        for y in window.years() {
            assert!(seq.contains(&y));
        }
        assert!(seq.iter().all(|y| window.contains(*y)));
        assert!(model.check_covers(YearWindow::new(1979, 1984)).is_err());
    }

    #[test]
    fn zero_rate_draws_nothing() {
        let cat = EventCatalogue::new(Vec::new(), YearWindow::default()).unwrap();
        let cfg = SamplerConfig {
            lambda_mode: LambdaMode::GlobalMean,
            ..Default::default()
        };
        let mut rng = year_stream(1, 0);
        for _ in 0..100 {
            assert!(sample_annual_events(1990, &cat, &cfg, &mut rng).is_empty());
        }
    }

    #[test]
    fn global_rate_from_catalogue() {
        let events: Vec<Event> = (0..82)
            .map(|i| event(&format!("e{i}"), 1979 + (i % 41), &[("FJI", 1.0)]))
            .collect();
        let cat = EventCatalogue::new(events, YearWindow::default()).unwrap();
        let cfg = SamplerConfig {
            lambda_mode: LambdaMode::GlobalMean,
            ..Default::default()
        };
        assert_eq!(EventSampler::new(&cat, &cfg).lambda(1990), 2.0);
        let per_year = SamplerConfig::default();
        assert_eq!(EventSampler::new(&cat, &per_year).lambda(1990), 2.0);
        let scaled = SamplerConfig {
            frequency_calibration: Some(0.5),
            ..per_year
        };
        assert_eq!(EventSampler::new(&cat, &scaled).lambda(1990), 1.0);
    }

    #[test]
    fn single_event_series_is_count_times_loss() {
        let window = YearWindow::new(2000, 2000);
        let cat = EventCatalogue::new(vec![event("e1", 2000, &[("FJI", 5.0)])], window).unwrap();
        let model = YearTypeModel::uniform(window).unwrap();
        let cfg = SamplerConfig {
            n_years: 5000,
            window,
            rng_seed: 11,
            ..Default::default()
        };
        let sim = simulate(&cat, &model, &cfg).unwrap();
        for (t, &c) in sim.counts.iter().enumerate() {
            assert_eq!(sim.matrix.value(t, 0), 5.0 * c as f64);
        }
        let mean = sim.mean_count();
        assert!((mean - 1.0).abs() < 3.0 * (1.0f64 / 5000.0).sqrt(), "{mean}");
    }

    #[test]
    fn empty_catalogue_series() {
        let cat = EventCatalogue::new(Vec::new(), YearWindow::default()).unwrap();
        let model = YearTypeModel::uniform(YearWindow::default()).unwrap();
        let sim = simulate(&cat, &model, &SamplerConfig::default()).unwrap();
        assert_eq!(sim.matrix.n_years(), 10_000);
        assert_eq!(sim.matrix.n_countries(), 0);
        assert_eq!(sim.diagnostics.len(), 1);
    }

    #[test]
    fn year_streams_are_order_independent() {
        let window = YearWindow::new(1979, 1981);
        let cat = EventCatalogue::new(
            vec![event("a", 1979, &[("FJI", 1.0)]), event("b", 1981, &[("VUT", 2.0)])],
            window,
        )
        .unwrap();
        let model = YearTypeModel::uniform(window).unwrap();
        let base = SamplerConfig {
            n_years: 50,
            window,
            rng_seed: 5,
            ..Default::default()
        };
        let long = SamplerConfig {
            n_years: 80,
            ..base.clone()
        };
        let a = simulate(&cat, &model, &base).unwrap();
        let b = simulate(&cat, &model, &long).unwrap();
        for t in 0..50 {
            assert_eq!(a.matrix.row(t), b.matrix.row(t));
        }
        let par = SamplerConfig { parallel: true, ..base };
        assert_eq!(simulate(&cat, &model, &par).unwrap().matrix, a.matrix);
    }

    #[test]
    fn sampler_config_validation() {
        assert!(SamplerConfig {
            n_years: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        let bad = SamplerConfig {
            window: YearWindow::new(2000, 1999),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
