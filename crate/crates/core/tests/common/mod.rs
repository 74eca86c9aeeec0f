#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use catpool::loss_data::{write_annual_losses, CountryMeta, Event, EventCatalogue, YearWindow};
use catpool::AnnualLossMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

pub fn names(n: usize) -> Vec<String> {
    (0..n)
        .map(|j| {
            let a = (b'A' + (j / 26) as u8) as char;
            let b = (b'A' + (j % 26) as u8) as char;
            format!("X{a}{b}")
        })
        .collect()
}

/// Countries driven by a few shared shock series plus idiosyncratic events.
pub fn factor_instance(seed: u64, n: usize, years: usize, factors: usize) -> AnnualLossMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ln = LogNormal::new(0.0, 1.5).unwrap();
    let shocks: Vec<Vec<f64>> = (0..factors)
        .map(|_| {
            (0..years)
                .map(|_| if rng.random_bool(0.1) { ln.sample(&mut rng) } else { 0.0 })
                .collect()
        })
        .collect();
    let cols = (0..n)
        .map(|j| {
            let f = j % factors;
            (0..years)
                .map(|t| {
                    let own = if rng.random_bool(0.05) {
                        ln.sample(&mut rng)
                    } else {
                        0.0
                    };
                    shocks[f][t] * rng.random_range(0.2..2.0) + own
                })
                .collect()
        })
        .collect();
    AnnualLossMatrix::from_columns((1..=years as i64).collect(), names(n), cols).unwrap()
}

/// Mixed column shapes: dense heavy tails, mostly zero, small integers with
/// many ties, all zero, and rescaled copies of earlier columns.
pub fn random_matrix<R: Rng>(rng: &mut R, years: usize, n: usize) -> AnnualLossMatrix {
    let ln = LogNormal::new(0.0, 1.0).unwrap();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    for j in 0..n {
        let scale = 10f64.powf(rng.random_range(-3.0..6.0));
        let kind = rng.random_range(0..100);
        let col: Vec<f64> = if kind < 3 {
            vec![0.0; years]
        } else if kind < 15 && j > 0 {
            let src = rng.random_range(0..j);
            let c = rng.random_range(0.1..10.0);
            cols[src].iter().map(|v| v * c).collect()
        } else if kind < 35 {
            (0..years).map(|_| rng.random_range(0..4) as f64 * scale).collect()
        } else if kind < 60 {
            (0..years)
                .map(|_| {
                    if rng.random_bool(0.1) {
                        ln.sample(rng) * scale
                    } else {
                        0.0
                    }
                })
                .collect()
        } else {
            (0..years).map(|_| ln.sample(rng) * scale).collect()
        };
        cols.push(col);
    }
    AnnualLossMatrix::from_columns((1..=years as i64).collect(), names(n), cols).unwrap()
}

/// `regions` groups of `per_region` countries; each group shares shocks and a
/// weaker global shock hits everyone.
pub fn regional_instance(
    seed: u64,
    regions: usize,
    per_region: usize,
    years: usize,
) -> (AnnualLossMatrix, Vec<CountryMeta>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ln = LogNormal::new(0.0, 1.3).unwrap();
    let n = regions * per_region;
    let global: Vec<f64> = (0..years)
        .map(|_| {
            if rng.random_bool(0.03) {
                ln.sample(&mut rng)
            } else {
                0.0
            }
        })
        .collect();
    let regional: Vec<Vec<f64>> = (0..regions)
        .map(|_| {
            (0..years)
                .map(|_| {
                    if rng.random_bool(0.12) {
                        ln.sample(&mut rng)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let cols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let r = j / per_region;
            (0..years)
                .map(|t| {
                    let own = if rng.random_bool(0.04) {
                        ln.sample(&mut rng)
                    } else {
                        0.0
                    };
                    regional[r][t] * rng.random_range(0.1..1.5) + global[t] * rng.random_range(0.0..0.5) + own
                })
                .collect()
        })
        .collect();
    let codes = names(n);
    let meta = codes
        .iter()
        .enumerate()
        .map(|(j, c)| CountryMeta::free(c.clone(), format!("R{}", j / per_region)))
        .collect();
    let m = AnnualLossMatrix::from_columns((1..=years as i64).collect(), codes, cols).unwrap();
    (m, meta)
}

pub fn write_inputs(dir: &Path, matrix: &AnnualLossMatrix, meta: &[CountryMeta]) {
    write_annual_losses(matrix, dir.join("annual_losses.csv")).unwrap();
    std::fs::write(dir.join("country_meta.json"), serde_json::to_string(meta).unwrap()).unwrap();
}

/// Ten historical years with exactly two events each; years 2000-2002 are
/// persistent-warm, 2003-2004 persistent-cold, the rest neutral.
pub fn two_per_year_catalogue() -> (EventCatalogue, String) {
    let window = YearWindow::new(2000, 2009);
    let mut events = Vec::new();
    for year in window.years() {
        for e in 0..2 {
            let mut losses = BTreeMap::new();
            losses.insert("AAA".to_string(), 1.0 + (year - 2000) as f64 + e as f64 * 0.5);
            if e == 1 {
                losses.insert("BBB".to_string(), 2.0 * (year - 1999) as f64);
            }
            events.push(Event {
                event_id: format!("E{year}_{e}"),
                year,
                losses,
            });
        }
    }
    let mut labels = String::from("year,season_index,label\n");
    for year in window.years() {
        let label = match year {
            2000..=2002 => "warm",
            2003..=2004 => "cold",
            _ => "neutral",
        };
        for s in 0..12 {
            labels.push_str(&format!("{year},{s},{label}\n"));
        }
    }
    (EventCatalogue::new(events, window).unwrap(), labels)
}
