//! Writes the example inputs (four synthetic regions, 24 countries) and the
//! digests of the outputs of `sample -> optimize-regional -> optimize-global
//! -> metrics` on them.
//!
//! Usage: `cargo run -p catpool --example make_fixture [dir]`

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Poisson};

use catpool::loss_data::{CountryMeta, Event, EventCatalogue, YearWindow};
use catpool::report::{self, RunConfig};

const REGIONS: [(&str, &str); 4] = [("NORTH", "NR"), ("EAST", "ES"), ("SOUTH", "ST"), ("WEST", "WS")];
const PER_REGION: usize = 6;

fn countries() -> Vec<(String, &'static str)> {
    REGIONS
        .iter()
        .flat_map(|&(region, prefix)| {
            (0..PER_REGION).map(move |i| (format!("{prefix}{}", (b'A' + i as u8) as char), region))
        })
        .collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/golden")));
    std::fs::create_dir_all(&dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let window = YearWindow::new(1979, 2019);
    let countries = countries();

    // season labels: 12 per year, year type drawn first
    let mut labels = String::from("year,season_index,label\n");
    let mut year_kind = BTreeMap::new();
    for year in window.years() {
        let u: f64 = rng.random();
        let kind = if u < 0.25 {
            "warm"
        } else if u < 0.5 {
            "cold"
        } else {
            "neutral"
        };
        let dominant = if kind == "neutral" {
            rng.random_range(0..=4)
        } else {
            rng.random_range(7..=10)
        };
        for s in 0..12 {
            let label = match kind {
                "neutral" if s < dominant => "warm",
                "neutral" if s < 2 * dominant => "cold",
                "neutral" => "neutral",
                _ if s < dominant => kind,
                _ => "neutral",
            };
            labels.push_str(&format!("{year},{s},{label}\n"));
        }
        year_kind.insert(year, kind);
    }
    std::fs::write(dir.join("season_labels.csv"), labels)?;

    let mut events = Vec::new();
    for year in window.years() {
        let kind = year_kind[&year];
        let lambda = match kind {
            "warm" => 3.0,
            "cold" => 2.0,
            _ => 2.5,
        };
        let n = Poisson::new(lambda)?.sample(&mut rng) as usize;
        for e in 0..n {
            // warm years favour the first two regions, cold years the others
            let weights = match kind {
                "warm" => [0.35, 0.35, 0.15, 0.15],
                "cold" => [0.15, 0.15, 0.35, 0.35],
                _ => [0.25; 4],
            };
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let region = weights
                .iter()
                .position(|w| {
                    acc += w;
                    u < acc
                })
                .unwrap_or(3);
            let start = rng.random_range(0..PER_REGION);
            let span = rng.random_range(1..=3);
            let severity = LogNormal::new(0.0, 1.2)?.sample(&mut rng);
            let mut losses = BTreeMap::new();
            for s in 0..span {
                let idx = region * PER_REGION + (start + s) % PER_REGION;
                let scale = 1.0 + (idx % PER_REGION) as f64 * 0.5;
                let noise = LogNormal::new(0.0, 0.5)?.sample(&mut rng);
                let loss = (severity * scale * noise * 1000.0).round() / 1000.0;
                if loss > 0.0 {
                    losses.insert(countries[idx].0.clone(), loss);
                }
            }
            if rng.random::<f64>() < 0.15 {
                let next = ((region + 1) % REGIONS.len()) * PER_REGION;
                let loss = (severity * 0.3 * 1000.0).round() / 1000.0;
                if loss > 0.0 {
                    losses.insert(countries[next].0.clone(), loss);
                }
            }
            if !losses.is_empty() {
                events.push(Event {
                    event_id: format!("E{year}{e:02}"),
                    year,
                    losses,
                });
            }
        }
    }
    let catalogue = EventCatalogue::new(events, window)?;
    std::fs::write(dir.join("events.csv"), catalogue.to_csv_string())?;

    let meta: Vec<CountryMeta> = countries
        .iter()
        .map(|(c, r)| CountryMeta::free(c.clone(), *r))
        .collect();
    std::fs::write(
        dir.join("country_meta.json"),
        serde_json::to_string_pretty(&meta)? + "\n",
    )?;

    let pools: Vec<serde_json::Value> = REGIONS
        .iter()
        .map(|(r, _)| serde_json::json!({"name": r, "region_filter": r}))
        .collect();
    let config = serde_json::json!({
        "alpha": 0.995,
        "pools": pools,
        "optimizer": {"population_size": 100, "generations": 150, "seeds": 5, "rng_seed": 7},
        "sampler": {"n_years": 2000, "window": {"start": 1979, "end": 2019}, "rng_seed": 7},
        "inputs": {
            "event_catalogue": "events.csv",
            "season_labels": "season_labels.csv",
            "country_meta": "country_meta.json"
        },
        "output_dir": "out"
    });
    std::fs::write(dir.join("config.json"), serde_json::to_string_pretty(&config)? + "\n")?;

    let out = tempfile::tempdir()?;
    let mut cfg = RunConfig::load(dir.join("config.json"))?;
    cfg.output_dir = out.path().to_path_buf();
    let mut digests = BTreeMap::new();
    for run in [
        report::cmd_sample,
        report::cmd_optimize_regional,
        report::cmd_optimize_global,
        report::cmd_metrics,
    ] {
        let started = std::time::Instant::now();
        let res = run(&cfg)?;
        eprintln!("{}: {:.2?}", res.manifest.command, started.elapsed());
        digests.extend(report::output_digests(&res.files)?);
    }
    std::fs::write(
        dir.join("golden_digests.json"),
        serde_json::to_string_pretty(&digests)? + "\n",
    )?;
    eprintln!("wrote {} digests to {}", digests.len(), dir.display());
    Ok(())
}
