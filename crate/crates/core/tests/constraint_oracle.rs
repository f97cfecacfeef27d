use advsmo_core::metrics::{MetricKind, MetricTriple};
use advsmo_core::search::{
    constrain, filter_by_metric, intersect, select_pair, Band, CandidatePair, CandidateRecord, ConstraintThresholds,
    Measurement, SelectionPolicy,
};
use proptest::prelude::*;

fn records_strategy() -> impl Strategy<Value = Vec<CandidateRecord>> {
    let rec = (
        0u32..4,
        0u32..4,
        prop::option::weighted(0.9, (0.0f64..1.0, 0.0f64..0.05, 0.0f64..60.0)),
    );
    prop::collection::vec(rec, 0..12).prop_map(|raw| {
        let mut seen = std::collections::BTreeSet::new();
        raw.into_iter()
            .filter(|(k, t, _)| seen.insert((*k, *t)))
            .map(|(k, t, m)| CandidateRecord {
                pair: CandidatePair::new(2 * k + 3, 5 * t),
                measurement: match m {
                    Some((ssim, mse, linf)) => Measurement::Measured(MetricTriple { ssim, mse, linf }),
                    None => Measurement::Skipped("kernel does not fit".into()),
                },
            })
            .collect()
    })
}

fn thresholds_strategy() -> impl Strategy<Value = ConstraintThresholds> {
    (0.0f64..1.0, 0.0f64..1.0, 0.0f64..0.05, 0.0f64..0.05, 0.0f64..60.0, 0.0f64..60.0).prop_map(
        |(a, b, c, d, e, f)| ConstraintThresholds {
            ssim_lo: a.min(b),
            ssim_hi: a.max(b),
            mse_lo: c.min(d),
            mse_hi: c.max(d),
            linf_lo: e.min(f),
            linf_hi: e.max(f),
        },
    )
}

/// Nested loops over the records, no set machinery.
fn oracle_u(records: &[CandidateRecord], t: &ConstraintThresholds) -> Vec<CandidatePair> {
    let mut out = Vec::new();
    for r in records {
        if let Measurement::Measured(m) = &r.measurement {
            if t.ssim_lo < m.ssim
                && m.ssim < t.ssim_hi
                && t.mse_lo < m.mse
                && m.mse < t.mse_hi
                && t.linf_lo < m.linf
                && m.linf < t.linf_hi
            {
                out.push(r.pair);
            }
        }
    }
    out.sort();
    out
}

fn oracle_select(records: &[CandidateRecord], u: &[CandidatePair]) -> Option<CandidatePair> {
    let mut scored: Vec<(f64, CandidatePair)> = u
        .iter()
        .map(|p| (records.iter().find(|r| r.pair == *p).unwrap().metrics().unwrap().ssim, *p))
        .collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.k1.cmp(&b.1.k1)).then(a.1.theta.cmp(&b.1.theta)));
    scored.first().map(|s| s.1)
}

#[test]
fn verbatim_defaults_are_jointly_infeasible() {
    let t = ConstraintThresholds::default();
    let cap = t.feasibility_conflict().expect("conflict");
    assert!((cap - (27.19215686f64 / 255.0).powi(2)).abs() < 1e-15);
}

#[test]
fn boundary_values_are_excluded() {
    let t = ConstraintThresholds::default();
    let on_edge = |ssim, mse, linf| CandidateRecord {
        pair: CandidatePair::new(3, 0),
        measurement: Measurement::Measured(MetricTriple { ssim, mse, linf }),
    };
    for r in [on_edge(t.ssim_lo, 0.0, 0.0), on_edge(t.ssim_hi, 0.0, 0.0)] {
        assert!(filter_by_metric(&[r], MetricKind::Ssim, t.band(MetricKind::Ssim)).is_empty());
    }
    let inside = on_edge(0.1, 0.03, 20.0);
    for kind in MetricKind::ALL {
        assert_eq!(filter_by_metric(&[inside.clone()], kind, t.band(kind)).len(), 1);
    }
}

proptest! {
    #[test]
    fn intersection_matches_oracle(records in records_strategy(), t in thresholds_strategy()) {
        let sets = constrain(&records, &t);
        prop_assert_eq!(sets.intersection.to_vec(), oracle_u(&records, &t));
        for p in &sets.intersection.pairs {
            prop_assert!(sets.ssim.contains(p) && sets.mse.contains(p) && sets.linf.contains(p));
        }
        let picked = select_pair(&sets.intersection, &records, SelectionPolicy::LeastPerceptible).ok();
        prop_assert_eq!(picked, oracle_select(&records, &sets.intersection.to_vec()));
    }

    #[test]
    fn filtering_is_idempotent(records in records_strategy(), lo in 0.0f64..1.0, w in 0.0f64..1.0) {
        let band = Band::new(lo, lo + w + 1e-9).unwrap();
        let once = filter_by_metric(&records, MetricKind::Ssim, band);
        let kept: Vec<CandidateRecord> = records.iter().filter(|r| once.contains(&r.pair)).cloned().collect();
        prop_assert_eq!(filter_by_metric(&kept, MetricKind::Ssim, band), once);
    }

    #[test]
    fn widening_a_band_never_shrinks_the_set(records in records_strategy(), lo in 0.0f64..30.0, w in 0.1f64..30.0, grow in 0.0f64..10.0) {
        let narrow = filter_by_metric(&records, MetricKind::Linf, Band::new(lo, lo + w).unwrap());
        let wide = filter_by_metric(&records, MetricKind::Linf, Band::new(lo - grow, lo + w + grow).unwrap());
        prop_assert!(narrow.pairs.is_subset(&wide.pairs));
    }

    #[test]
    fn intersection_is_order_free(records in records_strategy(), t in thresholds_strategy()) {
        let s = constrain(&records, &t);
        let a = intersect(&[s.ssim.clone(), s.mse.clone(), s.linf.clone()]).unwrap();
        let b = intersect(&[s.linf.clone(), s.ssim.clone(), s.mse.clone()]).unwrap();
        prop_assert_eq!(a, b);
    }
}
