use std::collections::BTreeMap;
use std::path::Path;

use catpool::loss_data::{aggregate_to_annual, parse_annual_losses, Event, EventCatalogue, YearWindow};
use catpool::pool_opt::{dominates, merge_fronts, AllocationVector, ParetoFront};
use catpool::scenario_gen::{simulate, LambdaMode, SamplerConfig, YearTypeModel};
use catpool::tail_metrics::{compensated_sum, pool_metrics, tail_correlation, PairPolicy, TailSpec};
use catpool::AnnualLossMatrix;
use proptest::prelude::*;

fn names(n: usize) -> Vec<String> {
    (0..n)
        .map(|j| format!("C{}{}", (b'A' + j as u8) as char, 'Q'))
        .collect()
}

fn loss() -> impl Strategy<Value = f64> {
    prop_oneof![
        2 => Just(0.0),
        1 => (0u32..5).prop_map(f64::from),
        3 => 0.0f64..1e6,
    ]
}

prop_compose! {
    fn matrix(max_n: usize)(n in 1..=max_n, years in 4usize..80)
        (cols in prop::collection::vec(prop::collection::vec(loss(), years), n), years in Just(years))
        -> AnnualLossMatrix {
        let n = cols.len();
        AnnualLossMatrix::from_columns((1..=years as i64).collect(), names(n), cols).unwrap()
    }
}

fn alpha() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.75), Just(0.9), Just(0.95)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn mes_sums_to_pool_es(m in matrix(8), a in alpha()) {
        let spec = TailSpec::new(a).unwrap();
        let all: Vec<usize> = (0..m.n_countries()).collect();
        let (pm, mm) = pool_metrics(&m, &all, &spec).unwrap();
        let total = compensated_sum(mm.iter().map(|x| x.mes));
        prop_assert!((total - pm.es).abs() <= 1e-9 * pm.es.max(1e-300));
        prop_assert!(pm.rc > 0.0 || pm.es == 0.0);
        prop_assert!(pm.rc <= 1.0 + 1e-12);
        prop_assert_eq!(pm.rd, 1.0 - pm.rc);
        for x in &mm {
            prop_assert!(x.share >= 0.0 && x.share <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn metrics_are_scale_covariant(m in matrix(6), a in alpha(), c in prop_oneof![Just(1e-6), Just(3.0), Just(1e6)]) {
        let spec = TailSpec::new(a).unwrap();
        let all: Vec<usize> = (0..m.n_countries()).collect();
        let (p1, s1) = pool_metrics(&m, &all, &spec).unwrap();
        let (p2, s2) = pool_metrics(&m.scaled(c), &all, &spec).unwrap();
        prop_assert!((p2.es - c * p1.es).abs() <= 1e-9 * (c * p1.es).max(1e-300));
        prop_assert!((p2.rc - p1.rc).abs() <= 1e-9);
        for (x, y) in s1.iter().zip(&s2) {
            prop_assert!((x.share - y.share).abs() <= 1e-9);
        }
    }

    #[test]
    fn member_order_does_not_matter(m in matrix(6), a in alpha(), seed in any::<u64>()) {
        let spec = TailSpec::new(a).unwrap();
        let mut order: Vec<usize> = (0..m.n_countries()).collect();
        let (p1, s1) = pool_metrics(&m, &order, &spec).unwrap();
        let k = order.len();
        order.rotate_left((seed as usize) % k);
        let (p2, s2) = pool_metrics(&m, &order, &spec).unwrap();
        prop_assert!((p1.rc - p2.rc).abs() <= 1e-12);
        prop_assert_eq!(p1.tail_years, p2.tail_years);
        for x in &s1 {
            let y = s2.iter().find(|y| y.iso3 == x.iso3).unwrap();
            prop_assert!((x.mes - y.mes).abs() <= 1e-9 * x.mes.max(1e-300));
        }
    }

    #[test]
    fn annual_csv_round_trips(m in matrix(6)) {
        let text = m.to_csv_string();
        let back = parse_annual_losses(text.as_bytes(), Path::new("mem")).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn correlation_is_symmetric_and_bounded(m in matrix(5), a in alpha(), union in any::<bool>()) {
        let policy = if union { PairPolicy::UnionTail } else { PairPolicy::OwnTailCensored };
        let c = tail_correlation(&m, &TailSpec::new(a).unwrap(), policy).unwrap();
        for i in 0..c.values.len() {
            prop_assert_eq!(c.values[i][i], 1.0);
            for j in 0..c.values.len() {
                prop_assert_eq!(c.values[i][j], c.values[j][i]);
                prop_assert!((-1.0..=1.0).contains(&c.values[i][j]));
            }
        }
    }
}

prop_compose! {
    fn catalogue()(rows in prop::collection::vec((2000i64..2005, 0usize..3, 0.0f64..100.0), 0..40)) -> EventCatalogue {
        let codes = ["AAA", "BBB", "CCC"];
        let events = rows
            .into_iter()
            .enumerate()
            .map(|(i, (year, c, l))| Event {
                event_id: format!("E{i}"),
                year,
                losses: BTreeMap::from([(codes[c].to_string(), l)]),
            })
            .collect();
        EventCatalogue::new(events, YearWindow::new(2000, 2004)).unwrap()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn aggregation_conserves_loss(cat in catalogue()) {
        let m = aggregate_to_annual(&cat, cat.window()).unwrap();
        prop_assert_eq!(m.n_years(), 5);
        prop_assert!((m.total() - cat.total_loss()).abs() <= 1e-9 * cat.total_loss().max(1.0));
    }

    #[test]
    fn sampling_is_deterministic_and_nonnegative(cat in catalogue(), seed in any::<u64>(), global in any::<bool>()) {
        let config = SamplerConfig {
            n_years: 50,
            window: cat.window(),
            rng_seed: seed,
            lambda_mode: if global { LambdaMode::GlobalMean } else { LambdaMode::PerYear },
            ..SamplerConfig::default()
        };
        let model = YearTypeModel::uniform(cat.window()).unwrap();
        let a = simulate(&cat, &model, &config).unwrap();
        let b = simulate(&cat, &model, &SamplerConfig { parallel: true, ..config.clone() }).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.matrix.n_years(), 50);
        prop_assert_eq!(a.matrix.n_countries(), cat.countries().len());
        for t in 0..50 {
            if a.counts[t] == 0 {
                prop_assert!(a.matrix.row(t).iter().all(|&v| v == 0.0));
            }
            for &v in &a.matrix.row(t) {
                prop_assert!(v >= 0.0 && v.is_finite());
            }
        }
    }

    #[test]
    fn merged_front_covers_inputs(points in prop::collection::vec(prop::collection::vec(prop::collection::vec(0.0f64..1.0, 2), 1..12), 1..4)) {
        let fronts: Vec<ParetoFront> = points
            .iter()
            .enumerate()
            .map(|(f, pts)| {
                let mut front = ParetoFront::new();
                for (i, p) in pts.iter().enumerate() {
                    front.insert(&AllocationVector::new(vec![f % 3, i % 3, (i / 3) % 3]), p);
                }
                front
            })
            .collect();
        let merged = merge_fronts(&fronts);
        prop_assert!(merged.is_mutually_non_dominated());
        for front in &fronts {
            prop_assert!(front.is_mutually_non_dominated());
            for e in front.entries() {
                prop_assert!(merged.covers(&e.objectives, 1e-12));
            }
        }
        for e in merged.entries() {
            for front in &fronts {
                prop_assert!(!front.entries().iter().any(|x| dominates(&x.objectives, &e.objectives)));
            }
        }
        let bigger = merge_fronts(fronts.iter().chain(std::iter::once(&merged)));
        prop_assert_eq!(bigger.len(), merged.len());
    }
}
