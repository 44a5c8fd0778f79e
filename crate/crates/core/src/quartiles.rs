//! Journal-year Q1 assignment from median Hazen percentiles.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;

use crate::corpus::{Corpus, JournalId};
use crate::error::{Error, Result};
use crate::percentiles::PercentileTable;
use crate::stats;

pub const DEFAULT_Q1_THRESHOLD: f64 = 75.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JournalYearQuartile {
    pub journal: JournalId,
    pub year: i32,
    pub median_percentile: f64,
    pub is_q1: bool,
    /// Year the Q1 flag was taken from; equals `year` unless substituted.
    pub source_year: i32,
}

impl JournalYearQuartile {
    pub fn from_median(journal: JournalId, year: i32, median_percentile: f64, q1_threshold: f64) -> Self {
        JournalYearQuartile {
            journal,
            year,
            median_percentile,
            is_q1: median_percentile >= q1_threshold,
            source_year: year,
        }
    }
}

/// Q1 entries keyed by (journal, year).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QuartileTable {
    entries: BTreeMap<(JournalId, i32), JournalYearQuartile>,
}

impl QuartileTable {
    pub fn get(&self, journal: JournalId, year: i32) -> Option<&JournalYearQuartile> {
        self.entries.get(&(journal, year))
    }

    /// `false` when the journal-year has no entry.
    pub fn is_q1(&self, journal: JournalId, year: i32) -> bool {
        self.get(journal, year).is_some_and(|q| q.is_q1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &JournalYearQuartile> {
        self.entries.values()
    }

    /// `journal_id,year,median_percentile,is_q1,source_year`.
    pub fn write_csv<W: Write>(&self, corpus: &Corpus, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["journal_id", "year", "median_percentile", "is_q1", "source_year"])?;
        for q in self.entries.values() {
            w.write_record([
                corpus.journal_name(q.journal),
                &q.year.to_string(),
                &format!("{:.6}", q.median_percentile),
                if q.is_q1 { "true" } else { "false" },
                &q.source_year.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<quartiles>", e))?;
        Ok(())
    }
}

impl FromIterator<JournalYearQuartile> for QuartileTable {
    fn from_iter<T: IntoIterator<Item = JournalYearQuartile>>(iter: T) -> Self {
        QuartileTable {
            entries: iter.into_iter().map(|q| ((q.journal, q.year), q)).collect(),
        }
    }
}

/// Median over all (paper, field) observations of each journal-year, pooled
/// across fields. Journal-years without observations get no entry.
pub fn assign_q1(percentiles: &PercentileTable, corpus: &Corpus, q1_threshold: f64) -> QuartileTable {
    let groups: Vec<_> = corpus.by_journal_year().iter().collect();
    groups
        .par_iter()
        .filter_map(|&(&(journal, year), members)| {
            let mut obs: Vec<f64> = members
                .iter()
                .flat_map(|&r| percentiles.of_record(r as usize).iter().copied())
                .collect();
            let median = stats::median(&mut obs)?;
            Some(JournalYearQuartile::from_median(journal, year, median, q1_threshold))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// Replaces the Q1 flag of `target_years` entries with the journal's
/// `source_year` flag where the journal has a `source_year` entry.
pub fn apply_recent_year_substitution(
    quartiles: &QuartileTable,
    target_years: &[i32],
    source_year: i32,
) -> QuartileTable {
    let mut out = quartiles.clone();
    for q in out.entries.values_mut() {
        if !target_years.contains(&q.year) || q.year == source_year {
            continue;
        }
        if let Some(src) = quartiles.entries.get(&(q.journal, source_year)) {
            q.is_q1 = src.is_q1;
            q.source_year = source_year;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn entry(j: u32, year: i32, median: f64) -> JournalYearQuartile {
        JournalYearQuartile::from_median(JournalId(j), year, median, DEFAULT_Q1_THRESHOLD)
    }

    #[test]
    fn threshold_is_inclusive() {
        assert!(entry(0, 2000, stats::median(&mut [75.0, 75.0]).unwrap()).is_q1);
        let m = stats::median(&mut [74.0, 75.98]).unwrap();
        assert!((m - 74.99).abs() < 1e-12);
        assert!(!entry(0, 2000, m).is_q1);
        assert!(!entry(0, 2000, 75.0 - 1e-9).is_q1);
        let m = stats::median(&mut [10.0, 20.0, 80.0, 90.0, 95.0]).unwrap();
        assert_eq!(m, 80.0);
        assert!(entry(0, 2000, m).is_q1);
    }

    #[test]
    fn substitution_where_available() {
        let table: QuartileTable = [
            entry(0, 2018, 80.0),
            entry(0, 2019, 60.0),
            entry(1, 2020, 90.0),
            entry(1, 2017, 10.0),
        ]
        .into_iter()
        .collect();
        let out = apply_recent_year_substitution(&table, &[2019, 2020], 2018);
        let j2019 = out.get(JournalId(0), 2019).unwrap();
        assert!(j2019.is_q1);
        assert_eq!(j2019.source_year, 2018);
        assert_eq!(j2019.median_percentile, 60.0);
        let k2020 = out.get(JournalId(1), 2020).unwrap();
        assert!(k2020.is_q1);
        assert_eq!(k2020.source_year, 2020);
        assert_eq!(out.get(JournalId(1), 2017), table.get(JournalId(1), 2017));
    }

    fn arb_table() -> impl Strategy<Value = QuartileTable> {
        prop::collection::vec((0u32..6, 2015i32..2021, 0.0f64..100.0), 0..40)
            .prop_map(|v| v.into_iter().map(|(j, y, m)| entry(j, y, m)).collect())
    }

    proptest! {
        #[test]
        fn substitution_idempotent_and_scoped(table in arb_table()) {
            let once = apply_recent_year_substitution(&table, &[2019, 2020], 2018);
            let twice = apply_recent_year_substitution(&once, &[2019, 2020], 2018);
            prop_assert_eq!(&once, &twice);
            for q in table.iter().filter(|q| q.year != 2019 && q.year != 2020) {
                let got = once.get(q.journal, q.year).unwrap();
                prop_assert_eq!(got.median_percentile.to_bits(), q.median_percentile.to_bits());
                prop_assert_eq!((got.is_q1, got.source_year), (q.is_q1, q.source_year));
            }
        }

        #[test]
        fn raising_threshold_never_adds_q1(m in 0.0f64..100.0, t in 0.0f64..100.0, dt in 0.0f64..50.0) {
            let lo = JournalYearQuartile::from_median(JournalId(0), 2000, m, t);
            let hi = JournalYearQuartile::from_median(JournalId(0), 2000, m, t + dt);
            prop_assert!(!hi.is_q1 || lo.is_q1);
        }
    }
}
