use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use talentscan::cohorts::{self, Group, IndicatorCombination, TopPercents};
use talentscan::corpus::{self, AuthorId, BroadField, Corpus, DropReason, IngestConfig, RawRecord};
use talentscan::indicators::{self, FractionalCount, Indicator};
use talentscan::percentiles;
use talentscan::pipeline::{self, InputSource, PipelineConfig, Stage};
use talentscan::quartiles::{self, QuartileTable};
use talentscan::synthgen::{self, SynthConfig};
use talentscan::validation;

fn rec(id: &str, year: i64, journal: &str, asjc: &[i64], authors: &[&str], corr: &[&str], citations: i64) -> RawRecord {
    RawRecord {
        id: id.into(),
        year,
        doc_type: "article".into(),
        journal: journal.into(),
        asjc: asjc.to_vec(),
        authors: authors.iter().map(|s| s.to_string()).collect(),
        corresponding: corr.iter().map(|s| s.to_string()).collect(),
        citations,
    }
}

fn ingest(records: Vec<RawRecord>) -> (Corpus, corpus::IngestReport) {
    let items = records.into_iter().enumerate().map(|(i, r)| (i + 1, Ok(r)));
    corpus::ingest(items, &IngestConfig::default()).unwrap()
}

fn synth(seed: u64, n_authors: usize) -> Vec<RawRecord> {
    synthgen::generate(&SynthConfig {
        seed,
        n_authors,
        ..Default::default()
    })
    .unwrap()
}

fn arb_record() -> impl Strategy<Value = RawRecord> {
    (
        1995i64..2024,
        prop::sample::select(vec!["article", "review", "proceedings", "letter", "note"]),
        prop::collection::vec(prop::sample::select(vec![1000i64, 1105, 1208, 1305, 1702, 2003, 2204, 2611, 3301]), 1..3),
        prop::collection::btree_set(0u8..8, 1..4),
        0i64..50,
        any::<bool>(),
    )
        .prop_map(|(year, ty, asjc, authors, citations, corr)| {
            let authors: Vec<String> = authors.iter().map(|a| format!("A{a}")).collect();
            RawRecord {
                id: String::new(),
                year,
                doc_type: ty.into(),
                journal: format!("J{}", citations % 3),
                asjc,
                corresponding: if corr { vec![authors[0].clone()] } else { vec![] },
                authors,
                citations,
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ingest_partitions_and_round_trips(mut records in prop::collection::vec(arb_record(), 0..60)) {
        for (i, r) in records.iter_mut().enumerate() {
            r.id = format!("P{i:04}");
        }
        let (c, report) = ingest(records.clone());
        prop_assert_eq!(report.read, records.len());
        prop_assert_eq!(report.kept + report.dropped_total(), report.read);
        prop_assert_eq!(report.kept, c.len());
        for r in c.records() {
            prop_assert!((1999..=2020).contains(&r.year));
        }

        let mut buf = Vec::new();
        c.write_jsonl(&mut buf).unwrap();
        let again = corpus::ingest(corpus::read_jsonl(&buf[..]), &IngestConfig::default()).unwrap().0;
        prop_assert_eq!(again.records(), c.records());
        prop_assert_eq!(again.digest(), c.digest());
    }
}

#[test]
fn synthetic_stream_ingests_reproducibly() {
    let a = ingest(synth(42, 460)).0;
    let b = ingest(synth(42, 460)).0;
    assert!(a.len() >= 9_000, "{} records", a.len());
    assert_eq!(a.digest(), b.digest());
    assert_ne!(a.digest(), ingest(synth(43, 460)).0.digest());
}

#[test]
fn ingest_counts_drop_reasons() {
    let mut letter = rec("p2", 2005, "J", &[1305], &["a"], &[], 1);
    letter.doc_type = "letter".into();
    let records = vec![
        rec("p1", 2005, "J", &[1305], &["a"], &[], 1),
        letter,
        rec("p3", 1990, "J", &[1305], &["a"], &[], 1),
        rec("p4", 2005, "J", &[1305], &["a"], &["b"], 1),
    ];
    let items = records.into_iter().enumerate().map(|(i, r)| (i + 1, Ok(r)));
    let err = corpus::ingest(items.clone(), &IngestConfig::default()).unwrap_err();
    assert!(err.to_string().contains('4'), "{err}");
    let cfg = IngestConfig {
        skip_malformed: true,
        ..Default::default()
    };
    let (c, report) = corpus::ingest(items, &cfg).unwrap();
    assert_eq!(c.len(), 1);
    assert_eq!(report.dropped_for(DropReason::DocType), 1);
    assert_eq!(report.dropped_for(DropReason::Year), 1);
    assert_eq!(report.dropped_for(DropReason::Malformed), 1);
}

/// Quadratic Hazen oracle keyed by group.
fn percentile_oracle(c: &Corpus) -> BTreeMap<(usize, BroadField), f64> {
    let mut groups: BTreeMap<(BroadField, i32), Vec<usize>> = BTreeMap::new();
    for (i, r) in c.records().iter().enumerate() {
        for &f in c.fields(i) {
            groups.entry((f, r.year)).or_default().push(i);
        }
    }
    let mut out = BTreeMap::new();
    for ((f, _), members) in groups {
        let n = members.len() as f64;
        for &i in &members {
            let v = c.record(i).citation_count;
            let less = members.iter().filter(|&&j| c.record(j).citation_count < v).count() as f64;
            let eq = members.iter().filter(|&&j| c.record(j).citation_count == v).count() as f64;
            out.insert((i, f), 100.0 * (less + eq / 2.0) / n);
        }
    }
    out
}

#[test]
fn percentiles_match_quadratic_oracle() {
    let records: Vec<_> = synth(7, 120).into_iter().take(1000).collect();
    let (c, _) = ingest(records);
    let table = percentiles::compute_paper_percentiles(&c);
    let oracle = percentile_oracle(&c);
    let mut seen = 0;
    for i in 0..c.len() {
        for (f, p) in c.fields(i).iter().zip(table.of_record(i)) {
            assert!((p - oracle[&(i, *f)]).abs() <= 1e-12);
            seen += 1;
        }
    }
    assert_eq!(seen, oracle.len());
}

#[test]
fn multi_field_paper_gets_one_percentile_per_field() {
    let (c, _) = ingest(vec![
        rec("p1", 2005, "J", &[1305, 2204], &["a"], &[], 5),
        rec("p2", 2005, "J", &[1305], &["b"], &[], 10),
        rec("p3", 2005, "J", &[2204], &["c"], &[], 1),
        rec("p4", 2006, "J", &[2611], &["d"], &[], 3),
    ]);
    let table = percentiles::compute_paper_percentiles(&c);
    assert_eq!(table.of_record(0), &[25.0, 75.0]);
    // lone paper in its field-year
    assert_eq!(table.of_record(3), &[50.0]);
}

#[test]
fn journal_median_matches_sort_oracle() {
    let (c, _) = ingest(synth(9, 400));
    let pct = percentiles::compute_paper_percentiles(&c);
    let table = quartiles::assign_q1(&pct, &c, 75.0);
    assert!(table.len() <= c.by_journal_year().len());
    for (&(j, y), recs) in c.by_journal_year() {
        let mut obs: Vec<f64> = recs.iter().flat_map(|&r| pct.of_record(r as usize).to_vec()).collect();
        if obs.is_empty() {
            assert!(table.get(j, y).is_none());
            continue;
        }
        obs.sort_by(f64::total_cmp);
        let n = obs.len();
        let median = if n % 2 == 1 { obs[n / 2] } else { (obs[n / 2 - 1] + obs[n / 2]) / 2.0 };
        let q = table.get(j, y).unwrap();
        assert!((q.median_percentile - median).abs() <= 1e-12);
        assert_eq!(q.is_q1, median >= 75.0);
    }
}

fn indicators_for(records: Vec<RawRecord>) -> (Corpus, Vec<indicators::AuthorFieldIndicators>) {
    let (c, _) = ingest(records);
    let pct = percentiles::compute_paper_percentiles(&c);
    let q = quartiles::assign_q1(&pct, &c, 75.0);
    let firsts = indicators::first_paper_years(&c);
    let ind = indicators::compute_window_indicators(&c, &q, &firsts, 10);
    (c, ind)
}

#[test]
fn adding_a_window_paper_never_lowers_o() {
    let base = synth(12, 300);
    let (c0, ind0) = indicators_for(base.clone());
    let author = c0.author_name(ind0[0].author).to_string();
    let first = indicators::first_paper_year(&author, &c0).unwrap();
    let mut more = base;
    more.push(rec("ZZZ", i64::from(first) + 3, "J00000", &[1305], &[&author], &[&author], 0));
    let (c1, ind1) = indicators_for(more);
    let a1 = c1.author_id(&author).unwrap();
    let sum = |rows: &[indicators::AuthorFieldIndicators], a: AuthorId, i: Indicator| {
        rows.iter()
            .filter(|e| e.author == a)
            .fold(FractionalCount::ZERO, |s, e| s + e.value(i))
    };
    let a0 = c0.author_id(&author).unwrap();
    assert!(sum(&ind1, a1, Indicator::O) > sum(&ind0, a0, Indicator::O));
    assert!(sum(&ind1, a1, Indicator::C) > sum(&ind0, a0, Indicator::C));
}

#[test]
fn coauthors_do_not_split_credit() {
    let solo = vec![rec("p1", 2001, "J", &[1305], &["a"], &[], 3)];
    let team = vec![rec("p1", 2001, "J", &[1305], &["a", "b", "c"], &[], 3)];
    let (_, s) = indicators_for(solo);
    let (c, t) = indicators_for(team);
    let a = c.author_id("a").unwrap();
    let row = t.iter().find(|e| e.author == a).unwrap();
    assert_eq!(row.o, s[0].o);
    assert_eq!(row.o, FractionalCount::whole(1));
}

#[test]
fn cohort_groups_are_disjoint_and_sized() {
    let cfg = PipelineConfig {
        validation_range: (1999, 2003),
        ..Default::default()
    };
    let synth = SynthConfig {
        seed: 4,
        n_authors: 4000,
        start_year_range: (1999, 2003),
        ..Default::default()
    };
    let a = pipeline::analyze(&InputSource::Synthetic(synth), &cfg, Stage::Cohorts).unwrap();
    let sel = a.validation_cohort.unwrap();
    let ind = a.indicators.unwrap();
    let mut seen = BTreeSet::new();
    for x in &sel.assignments {
        assert!(seen.insert((x.author, x.field, x.combination)), "{x:?} assigned twice");
    }
    for th in &sel.thresholds {
        let pop: Vec<_> = ind.iter().filter(|e| e.field == th.field && sel_has_cohort_author(&a.first_years, e.author)).collect();
        assert_eq!(pop.len(), th.n);
        for i in Indicator::ALL {
            let c = th.get(i);
            assert!(c.t1 >= c.t5 && c.t5 >= c.t10);
        }
        if th.n < 500 {
            continue;
        }
        // O has many distinct values; group sizes sit near the nominal percents
        let talent = sel
            .assignments
            .iter()
            .filter(|x| x.field == th.field && x.combination == IndicatorCombination::O && x.group == Group::Talent)
            .count() as f64;
        let control = sel
            .assignments
            .iter()
            .filter(|x| x.field == th.field && x.combination == IndicatorCombination::O && x.group == Group::Control)
            .count() as f64;
        let n = th.n as f64;
        assert!(talent >= 0.01 * n && talent <= 0.03 * n, "talent {talent} of {n}");
        assert!(control >= 0.02 * n && control <= 0.08 * n, "control {control} of {n}");
    }
}

fn sel_has_cohort_author(first_years: &[i32], a: AuthorId) -> bool {
    (1999..=2003).contains(&first_years[a.0 as usize])
}

fn afi(author: u32, o: u64, q1: u64, c: u64) -> indicators::AuthorFieldIndicators {
    indicators::AuthorFieldIndicators {
        author: AuthorId(author),
        field: BroadField::new(13).unwrap(),
        first_paper_year: 2000,
        o: FractionalCount::whole(o),
        q1: FractionalCount::whole(q1),
        c: FractionalCount::whole(c),
    }
}

#[test]
fn combination_can_hold_more_talent_than_control() {
    // the top authors lead on both O and Q1, while the 5-10% band pairs
    // high O with low Q1 and vice versa
    let mut pop = Vec::new();
    for i in 0..5 {
        pop.push(afi(i, 100, 100, 0));
    }
    for i in 5..10 {
        pop.push(afi(i, 90, 1, 0));
    }
    for i in 10..15 {
        pop.push(afi(i, 1, 90, 0));
    }
    for i in 15..100 {
        pop.push(afi(i, 1, 1, 0));
    }
    let field = pop[0].field;
    let th = cohorts::compute_thresholds(&pop, field, &TopPercents::default()).unwrap();
    let count = |c, g| cohorts::select_groups(&pop, &th, c).iter().filter(|a| a.group == g).count();
    assert_eq!(count(IndicatorCombination::O_Q1, Group::Talent), 5);
    assert_eq!(count(IndicatorCombination::O_Q1, Group::Control), 0);
    assert_eq!(count(IndicatorCombination::O, Group::Control), 5);
}

#[test]
fn post_window_counts_only_later_eligible_papers() {
    let (c, _) = ingest(vec![
        rec("p01", 2000, "J", &[1305], &["a"], &[], 5),
        rec("p02", 2009, "J", &[1305], &["a"], &[], 5),
        rec("p03", 2010, "J", &[1305], &["a"], &[], 9),
        rec("p04", 2010, "J", &[1305], &["b"], &[], 1),
        rec("p05", 2011, "J", &[1208], &["a"], &[], 9),
        rec("p06", 2012, "J", &[1305, 2204], &["a"], &[], 0),
        rec("p07", 2012, "J", &[1305], &["b"], &[], 4),
        rec("p08", 2012, "J", &[2204], &["b"], &[], 4),
        rec("p09", 2019, "J", &[1305], &["a"], &[], 7),
        rec("p10", 2001, "J", &[1305], &["c"], &[], 1),
    ]);
    let pct = percentiles::compute_paper_percentiles(&c);
    let firsts = indicators::first_paper_years(&c);
    let a = c.author_id("a").unwrap();
    let perf = validation::post_window_performance(a, &c, &pct, firsts[a.0 as usize], 10, 2018).unwrap();
    // p03 (75) and p06 (25 in both fields); p05 is ineligible, p09 past the end year
    assert_eq!(perf.n_papers, 2);
    assert_eq!(perf.median_percentile, 25.0);
    let cid = c.author_id("c").unwrap();
    assert!(validation::post_window_performance(cid, &c, &pct, 2001, 10, 2018).is_none());
}

#[test]
fn recent_year_substitution_in_pipeline() {
    let (c, _) = ingest(vec![
        rec("p1", 2018, "J", &[1305], &["a"], &[], 9),
        rec("p2", 2018, "K", &[1305], &["b"], &[], 0),
        rec("p3", 2019, "J", &[1305], &["a"], &[], 0),
        rec("p4", 2019, "K", &[1305], &["b"], &[], 9),
        rec("p5", 2020, "L", &[1305], &["b"], &[], 9),
    ]);
    let pct = percentiles::compute_paper_percentiles(&c);
    let raw = quartiles::assign_q1(&pct, &c, 75.0);
    let sub: QuartileTable = quartiles::apply_recent_year_substitution(&raw, &[2019, 2020], 2018);
    let (j, k, l) = (c.journal_id("J").unwrap(), c.journal_id("K").unwrap(), c.journal_id("L").unwrap());
    assert!(!raw.is_q1(j, 2019) && sub.is_q1(j, 2019));
    assert!(raw.is_q1(k, 2019) && !sub.is_q1(k, 2019));
    // no 2018 entry to copy from
    assert_eq!(sub.get(l, 2020), raw.get(l, 2020));
}

#[test]
fn export_has_one_row_per_talent_field_and_header_when_empty() {
    let cfg = PipelineConfig::default();
    let synth = SynthConfig {
        seed: 21,
        n_authors: 3000,
        multifield_prob: 0.5,
        ..Default::default()
    };
    let a = pipeline::analyze(&InputSource::Synthetic(synth), &cfg, Stage::Cohorts).unwrap();
    let talent = a.talent_cohort.as_ref().unwrap();
    let ind = a.indicators.as_ref().unwrap();
    let bytes = pipeline::export_talent_dataset(&a.corpus, talent, ind, IndicatorCombination::O_Q1).unwrap();
    let text = String::from_utf8(bytes).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("author_id,field,first_paper_year,O,Q1,C"));
    let rows: Vec<_> = lines.collect();
    let expected = talent
        .assignments
        .iter()
        .filter(|x| x.combination == IndicatorCombination::O_Q1 && x.group == Group::Talent)
        .count();
    assert_eq!(rows.len(), expected);
    assert!(!rows.is_empty());
    for r in &rows {
        let year: i32 = r.split(',').nth(2).unwrap().parse().unwrap();
        assert!((2007..=2011).contains(&year));
    }

    // an author who is talent in two fields gets two rows
    let multi = ind
        .windows(2)
        .find(|w| w[0].author == w[1].author)
        .expect("some author has two fields");
    let two = cohorts::CohortSelection {
        thresholds: vec![],
        assignments: multi
            .iter()
            .map(|e| cohorts::CohortAssignment {
                author: e.author,
                field: e.field,
                combination: IndicatorCombination::O_Q1,
                group: Group::Talent,
            })
            .collect(),
    };
    let bytes = pipeline::export_talent_dataset(&a.corpus, &two, ind, IndicatorCombination::O_Q1).unwrap();
    let text = String::from_utf8(bytes).unwrap();
    let name = a.corpus.author_name(multi[0].author);
    let rows: Vec<_> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.starts_with(&format!("{name},"))));
    assert_ne!(rows[0].split(',').nth(1), rows[1].split(',').nth(1));

    let empty = cohorts::CohortSelection {
        thresholds: vec![],
        assignments: vec![],
    };
    let bytes = pipeline::export_talent_dataset(&a.corpus, &empty, ind, IndicatorCombination::O_Q1).unwrap();
    assert_eq!(String::from_utf8(bytes).unwrap(), "author_id,field,first_paper_year,O,Q1,C\n");
}

#[test]
fn cohort_range_outside_corpus_is_rejected() {
    let cfg = PipelineConfig {
        talent_range: (2009, 2013),
        ..Default::default()
    };
    let synth = SynthConfig {
        n_authors: 200,
        ..Default::default()
    };
    let err = pipeline::analyze(&InputSource::Synthetic(synth), &cfg, Stage::Cohorts)
        .err()
        .unwrap();
    assert_eq!(err.to_string(), "stage `cohorts` failed");
}
