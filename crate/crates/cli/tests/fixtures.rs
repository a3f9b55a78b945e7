use std::collections::BTreeMap;

use minilab_cli::fixtures::{parse_table, render_table, Fixture, FixtureRow};
use minilab_cli::report::{build_report, render_report, Provenance, RatioKind};
use minilab_engine::simulator::TABLE1_RATES;
use proptest::prelude::*;
use rust_decimal::prelude::ToPrimitive;

#[test]
fn simulator_rates_match_the_table() {
    let t1 = Fixture::bundled("table1").unwrap();
    assert_eq!(t1.rows.len(), TABLE1_RATES.len());
    for (row, (name, ctr, open, reply)) in t1.rows.iter().zip(TABLE1_RATES) {
        let model = &row.cells["model"];
        let cell = |c: &str| t1.number(model, c).unwrap().to_f64().unwrap();
        assert_eq!((cell("ctr"), cell("open_rate"), cell("response_rate")), (ctr, open, reply), "{name} vs {model}");
    }
}

#[test]
fn every_ratio_in_a_fixture_report_is_fixture_labeled() {
    for name in ["table1", "table2", "table3"] {
        let r = build_report(Fixture::bundled(name).unwrap(), None, None).unwrap();
        assert!(r.ratios.iter().all(|l| l.value.provenance == Provenance::PaperFixture));
        assert!(r.computed_ratios.is_empty());
    }
}

#[test]
fn cost_ratios_only_for_cost_columns() {
    let r = build_report(Fixture::bundled("table3").unwrap(), None, None).unwrap();
    let costs: Vec<_> = r.ratios.iter().filter(|l| l.kind == RatioKind::CostRatio).collect();
    assert_eq!(costs.len(), 19);
    assert!(costs.iter().all(|l| l.column == "total_system_cost"));
}

#[test]
fn report_text_contains_the_table_verbatim() {
    for name in ["table1", "table2", "table3"] {
        let f = Fixture::bundled(name).unwrap();
        let text = render_report(&build_report(f.clone(), None, None).unwrap());
        assert!(text.starts_with(&render_table(&f)));
        assert_eq!(parse_table(&text).unwrap(), f);
    }
}

fn cell() -> impl Strategy<Value = String> {
    prop_oneof!["[A-Za-z0-9.$>()-]{1,8}", "[A-Za-z]{1,4} [A-Za-z0-9]{1,4}", Just(String::new())]
}

fn fixture() -> impl Strategy<Value = Fixture> {
    (1usize..5, 1usize..8).prop_flat_map(|(extra_cols, n_rows)| {
        let cols = proptest::collection::btree_set("[a-z_]{1,10}", extra_cols).prop_filter("reserved", |s| !s.contains("model") && !s.contains("group"));
        let rows = proptest::collection::vec((0usize..3, proptest::collection::vec(cell(), extra_cols)), n_rows);
        ("[a-z0-9_]{1,8}", "[A-Za-z][A-Za-z ]{0,20}[a-z]", cols, rows).prop_map(move |(table, title, cols, rows)| {
            let mut columns = vec!["model".to_owned()];
            columns.extend(cols);
            let groups = ["Baseline", "Learners", "Full tune"];
            let mut rows: Vec<FixtureRow> = rows
                .into_iter()
                .enumerate()
                .map(|(i, (g, vals))| {
                    let mut cells = BTreeMap::new();
                    cells.insert("model".to_owned(), format!("Model {i}"));
                    for (c, v) in columns[1..].iter().zip(vals) {
                        cells.insert(c.clone(), v);
                    }
                    FixtureRow { group: groups[g].to_owned(), cells }
                })
                .collect();
            rows.sort_by_key(|r| r.group.clone());
            Fixture { table, title, columns, rows }
        })
    })
}

proptest! {
    #[test]
    fn render_parse_fixpoint(f in fixture()) {
        prop_assume!(f.validate().is_ok());
        let once = render_table(&f);
        let parsed = parse_table(&once).unwrap();
        prop_assert_eq!(&parsed, &f);
        prop_assert_eq!(render_table(&parsed), once);
    }
}
