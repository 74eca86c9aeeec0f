//! Loss inputs: annual country loss matrices, per-event loss catalogues and
//! country metadata, with their CSV/JSON readers and writers.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// True for three uppercase ASCII letters.
pub fn is_valid_iso3(code: &str) -> bool {
    code.len() == 3 && code.bytes().all(|b| b.is_ascii_uppercase())
}

/// Per-country metadata used to constrain pool membership.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountryMeta {
    pub iso3: String,
    pub region: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pinned_pool: Option<usize>,
    /// `None` means every pool may be joined.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allowed_pools: Option<BTreeSet<usize>>,
}

impl CountryMeta {
    pub fn free(iso3: impl Into<String>, region: impl Into<String>) -> Self {
        Self {
            iso3: iso3.into(),
            region: region.into(),
            pinned_pool: None,
            allowed_pools: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !is_valid_iso3(&self.iso3) {
            return Err(Error::InvalidCountryCode(self.iso3.clone()));
        }
        if let (Some(pin), Some(allowed)) = (self.pinned_pool, &self.allowed_pools) {
            if !allowed.contains(&pin) {
                return Err(Error::InvalidMeta {
                    iso3: self.iso3.clone(),
                    reason: format!("pinned pool {pin} is not in allowed_pools"),
                });
            }
        }
        Ok(())
    }
}

/// Checks every entry and iso3 uniqueness.
pub fn validate_country_meta(meta: &[CountryMeta]) -> Result<()> {
    let mut seen = HashSet::new();
    for m in meta {
        m.validate()?;
        if !seen.insert(m.iso3.as_str()) {
            return Err(Error::DuplicateCountry(m.iso3.clone()));
        }
    }
    Ok(())
}

pub fn load_country_meta(path: impl AsRef<Path>) -> Result<Vec<CountryMeta>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.trim().is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    let meta: Vec<CountryMeta> = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    validate_country_meta(&meta)?;
    Ok(meta)
}

/// N years by n countries of nonnegative annual aggregate losses.
///
/// Stored column-major: each country's series is contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnualLossMatrix {
    years: Vec<i64>,
    countries: Vec<String>,
    data: Vec<f64>,
}

impl AnnualLossMatrix {
    /// Builds a matrix from row-major values (one inner vector per year).
    pub fn from_rows(years: Vec<i64>, countries: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() != years.len() {
            return Err(Error::Shape(format!("{} rows for {} years", rows.len(), years.len())));
        }
        let n = countries.len();
        let mut columns = vec![Vec::with_capacity(years.len()); n];
        for (t, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Shape(format!(
                    "row {} has {} values, expected {n}",
                    years[t],
                    row.len()
                )));
            }
            for (col, &v) in columns.iter_mut().zip(row) {
                col.push(v);
            }
        }
        Self::from_columns(years, countries, columns)
    }

    /// Builds a matrix from one series per country.
    pub fn from_columns(years: Vec<i64>, countries: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        let m = Self::from_columns_unchecked_shape(years, countries, columns)?;
        if m.countries.is_empty() {
            return Err(Error::NoCountries);
        }
        Ok(m)
    }

    /// Like [`from_columns`](Self::from_columns) but accepts zero countries;
    /// generators produce such matrices from empty catalogues.
    pub(crate) fn from_columns_unchecked_shape(
        years: Vec<i64>,
        countries: Vec<String>,
        columns: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if years.is_empty() {
            return Err(Error::NoYears);
        }
        if columns.len() != countries.len() {
            return Err(Error::Shape(format!(
                "{} columns for {} countries",
                columns.len(),
                countries.len()
            )));
        }
        let mut seen_years = HashSet::new();
        for &y in &years {
            if !seen_years.insert(y) {
                return Err(Error::DuplicateYear(y));
            }
        }
        let mut seen = HashSet::new();
        for c in &countries {
            if !is_valid_iso3(c) {
                return Err(Error::InvalidCountryCode(c.clone()));
            }
            if !seen.insert(c.as_str()) {
                return Err(Error::DuplicateCountry(c.clone()));
            }
        }
        let n_years = years.len();
        let mut data = Vec::with_capacity(n_years * countries.len());
        for (col, iso3) in columns.into_iter().zip(&countries) {
            if col.len() != n_years {
                return Err(Error::Shape(format!(
                    "column {iso3} has {} values, expected {n_years}",
                    col.len()
                )));
            }
            for (t, &v) in col.iter().enumerate() {
                check_loss(v, || years[t].to_string(), iso3)?;
            }
            data.extend(col);
        }
        Ok(Self { years, countries, data })
    }

    pub fn years(&self) -> &[i64] {
        &self.years
    }

    pub fn countries(&self) -> &[String] {
        &self.countries
    }

    pub fn n_years(&self) -> usize {
        self.years.len()
    }

    pub fn n_countries(&self) -> usize {
        self.countries.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        let n = self.years.len();
        &self.data[j * n..(j + 1) * n]
    }

    pub fn value(&self, year_idx: usize, j: usize) -> f64 {
        self.data[j * self.years.len() + year_idx]
    }

    pub fn row(&self, year_idx: usize) -> Vec<f64> {
        (0..self.countries.len()).map(|j| self.value(year_idx, j)).collect()
    }

    pub fn country_index(&self, iso3: &str) -> Option<usize> {
        self.countries.iter().position(|c| c == iso3)
    }

    /// Resolves country codes to column indices.
    pub fn indices_of<S: AsRef<str>>(&self, codes: &[S]) -> Result<Vec<usize>> {
        codes
            .iter()
            .map(|c| {
                self.country_index(c.as_ref())
                    .ok_or_else(|| Error::UnknownCountry(c.as_ref().to_string()))
            })
            .collect()
    }

    /// A new matrix holding the given columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        let countries = cols.iter().map(|&j| self.countries[j].clone()).collect();
        let columns = cols.iter().map(|&j| self.column(j).to_vec()).collect();
        Self::from_columns(self.years.clone(), countries, columns)
    }

    /// Every value multiplied by `factor` (> 0).
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            years: self.years.clone(),
            countries: self.countries.clone(),
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn total(&self) -> f64 {
        crate::tail_metrics::compensated_sum(self.data.iter().copied())
    }

    /// Renders the annual CSV format: `year,<iso3>...`, one row per year.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(self.data.len() * 8 + 64);
        out.push_str("year");
        for c in &self.countries {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (t, y) in self.years.iter().enumerate() {
            out.push_str(&y.to_string());
            for j in 0..self.countries.len() {
                out.push(',');
                out.push_str(&self.value(t, j).to_string());
            }
            out.push('\n');
        }
        out
    }
}

fn check_loss(v: f64, year: impl Fn() -> String, column: &str) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::NonFiniteLoss {
            year: year(),
            column: column.to_string(),
        });
    }
    if v < 0.0 {
        return Err(Error::NegativeLoss {
            year: year(),
            column: column.to_string(),
        });
    }
    Ok(())
}

pub fn write_annual_losses(matrix: &AnnualLossMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(matrix.to_csv_string().as_bytes())
        .map_err(|e| Error::io(path, e))
}

pub fn load_annual_losses(path: impl AsRef<Path>) -> Result<AnnualLossMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_annual_losses(file, path)
}

/// Parses the annual CSV format from any reader; `source` names the input in
/// diagnostics.
pub fn parse_annual_losses<R: Read>(reader: R, source: &Path) -> Result<AnnualLossMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Err(Error::EmptyFile(source.to_path_buf())),
        Some(r) => r.map_err(|e| Error::csv(source, e))?,
    };
    if header.iter().all(str::is_empty) {
        return Err(Error::EmptyFile(source.to_path_buf()));
    }
    if header.get(0) != Some("year") {
        return Err(Error::MalformedHeader {
            path: source.to_path_buf(),
            reason: "first column must be `year`".into(),
        });
    }
    let countries: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut seen = HashSet::new();
    for c in &countries {
        if !is_valid_iso3(c) {
            return Err(Error::InvalidCountryCode(c.clone()));
        }
        if !seen.insert(c.as_str()) {
            return Err(Error::DuplicateCountry(c.clone()));
        }
    }
    if countries.is_empty() {
        return Err(Error::NoCountries);
    }

    let mut years = Vec::new();
    let mut columns = vec![Vec::new(); countries.len()];
    let mut seen_years = HashSet::new();
    for rec in records {
        let rec = rec.map_err(|e| Error::csv(source, e))?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let line = rec.position().map_or(0, |p| p.line());
        let year_str = rec.get(0).unwrap_or_default();
        let year: i64 = year_str.parse().map_err(|_| Error::MalformedYear {
            line,
            value: year_str.to_string(),
        })?;
        if !seen_years.insert(year) {
            return Err(Error::DuplicateYear(year));
        }
        if rec.len() > countries.len() + 1 {
            return Err(Error::Shape(format!(
                "row for year {year} has {} cells, expected {}",
                rec.len(),
                countries.len() + 1
            )));
        }
        for (j, iso3) in countries.iter().enumerate() {
            let cell = rec.get(j + 1).unwrap_or_default();
            if cell.is_empty() {
                return Err(Error::MissingCell {
                    year: year.to_string(),
                    column: iso3.clone(),
                });
            }
            let v: f64 = cell.parse().map_err(|_| Error::MalformedNumber {
                year: year.to_string(),
                column: iso3.clone(),
                value: cell.to_string(),
            })?;
            check_loss(v, || year.to_string(), iso3)?;
            columns[j].push(v);
        }
        years.push(year);
    }
    if years.is_empty() {
        return Err(Error::NoYears);
    }
    AnnualLossMatrix::from_columns(years, countries, columns)
}

/// Inclusive range of calendar years.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearWindow {
    pub start: i64,
    pub end: i64,
}

impl Default for YearWindow {
    fn default() -> Self {
        Self { start: 1979, end: 2019 }
    }
}

impl YearWindow {
    pub fn new(start: i64, end: i64) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        if self.end < self.start {
            0
        } else {
            (self.end - self.start + 1) as usize
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, year: i64) -> bool {
        (self.start..=self.end).contains(&year)
    }

    pub fn years(&self) -> impl Iterator<Item = i64> {
        self.start..=self.end
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub event_id: String,
    pub year: i64,
    /// iso3 to loss; countries the event does not touch are absent.
    pub losses: BTreeMap<String, f64>,
}

impl Event {
    pub fn total_loss(&self) -> f64 {
        self.losses.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventCatalogue {
    events: Vec<Event>,
    window: YearWindow,
}

impl EventCatalogue {
    pub fn new(events: Vec<Event>, window: YearWindow) -> Result<Self> {
        let mut ids = HashSet::new();
        for ev in &events {
            if !ids.insert(ev.event_id.as_str()) {
                return Err(Error::InvalidConfig(format!("duplicate event id {}", ev.event_id)));
            }
            if !window.contains(ev.year) {
                return Err(Error::YearOutOfWindow {
                    event_id: ev.event_id.clone(),
                    year: ev.year,
                    start: window.start,
                    end: window.end,
                });
            }
            for (iso3, &loss) in &ev.losses {
                if !is_valid_iso3(iso3) {
                    return Err(Error::InvalidCountryCode(iso3.clone()));
                }
                check_loss(loss, || ev.year.to_string(), iso3)?;
            }
        }
        Ok(Self { events, window })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn window(&self) -> YearWindow {
        self.window
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Sorted union of all countries touched by any event.
    pub fn countries(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self
            .events
            .iter()
            .flat_map(|e| e.losses.keys().map(String::as_str))
            .collect();
        set.into_iter().map(str::to_string).collect()
    }

    pub fn total_loss(&self) -> f64 {
        crate::tail_metrics::compensated_sum(self.events.iter().flat_map(|e| e.losses.values().copied()))
    }

    /// Writes `event_id,year,iso3,loss`, one row per (event, country).
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("event_id,year,iso3,loss\n");
        for ev in &self.events {
            for (iso3, loss) in &ev.losses {
                out.push_str(&format!("{},{},{},{}\n", ev.event_id, ev.year, iso3, loss));
            }
        }
        out
    }
}

#[derive(Debug, Deserialize)]
struct EventRow {
    event_id: String,
    year: i64,
    iso3: String,
    loss: f64,
}

pub fn load_event_catalogue(path: impl AsRef<Path>, window: YearWindow) -> Result<EventCatalogue> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_event_catalogue(file, path, window)
}

pub fn parse_event_catalogue<R: Read>(reader: R, source: &Path, window: YearWindow) -> Result<EventCatalogue> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::csv(source, e))?.clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        log::warn!("event catalogue {} is empty", source.display());
        return EventCatalogue::new(Vec::new(), window);
    }
    let expected = ["event_id", "year", "iso3", "loss"];
    if headers.iter().ne(expected) {
        return Err(Error::MalformedHeader {
            path: source.to_path_buf(),
            reason: format!("expected columns {}", expected.join(",")),
        });
    }

    let mut events: Vec<Event> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for row in rdr.deserialize::<EventRow>() {
        let row = row.map_err(|e| Error::csv(source, e))?;
        if !window.contains(row.year) {
            return Err(Error::YearOutOfWindow {
                event_id: row.event_id,
                year: row.year,
                start: window.start,
                end: window.end,
            });
        }
        if !is_valid_iso3(&row.iso3) {
            return Err(Error::InvalidCountryCode(row.iso3));
        }
        check_loss(row.loss, || row.year.to_string(), &row.iso3)?;
        let idx = *index.entry(row.event_id.clone()).or_insert_with(|| {
            events.push(Event {
                event_id: row.event_id.clone(),
                year: row.year,
                losses: BTreeMap::new(),
            });
            events.len() - 1
        });
        let ev = &mut events[idx];
        if ev.year != row.year {
            return Err(Error::ConflictingEventYear {
                event_id: row.event_id,
                first: ev.year,
                second: row.year,
            });
        }
        match ev.losses.get(&row.iso3) {
            Some(&prev) if prev != row.loss => {
                return Err(Error::ConflictingEventRow {
                    event_id: row.event_id,
                    iso3: row.iso3,
                });
            }
            Some(_) => {}
            None => {
                ev.losses.insert(row.iso3, row.loss);
            }
        }
    }
    if events.is_empty() {
        log::warn!("event catalogue {} has no events", source.display());
    }
    EventCatalogue::new(events, window)
}

/// Sums event losses per (year, country) over `window`. Years without events
/// appear as zero rows; countries are the catalogue's sorted union.
pub fn aggregate_to_annual(cat: &EventCatalogue, window: YearWindow) -> Result<AnnualLossMatrix> {
    if window.is_empty() {
        return Err(Error::NoYears);
    }
    let countries = cat.countries();
    let col_of: HashMap<&str, usize> = countries.iter().enumerate().map(|(j, c)| (c.as_str(), j)).collect();
    let n_years = window.len();
    let mut columns = vec![vec![0.0; n_years]; countries.len()];
    for ev in cat.events() {
        if !window.contains(ev.year) {
            continue;
        }
        let t = (ev.year - window.start) as usize;
        for (iso3, &loss) in &ev.losses {
            columns[col_of[iso3.as_str()]][t] += loss;
        }
    }
    AnnualLossMatrix::from_columns_unchecked_shape(window.years().collect(), countries, columns)
}
