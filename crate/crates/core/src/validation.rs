//! Post-window performance and the talent-versus-control report tables.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;

use crate::cohorts::{CohortAssignment, Group, IndicatorCombination};
use crate::corpus::{AuthorId, Corpus};
use crate::error::{Error, Result};
use crate::percentiles::PercentileTable;
use crate::stats::{self, Summary};

pub const DEFAULT_END_YEAR: i32 = 2018;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuthorPostWindowPerformance {
    pub author: AuthorId,
    pub n_papers: usize,
    pub median_percentile: f64,
}

/// Performance over `[first_year + window_length, end_year]`, or `None` when
/// the author has no eligible paper there.
pub fn post_window_performance(
    author: AuthorId,
    corpus: &Corpus,
    percentiles: &PercentileTable,
    first_year: i32,
    window_length: i32,
    end_year: i32,
) -> Option<AuthorPostWindowPerformance> {
    let from = first_year + window_length;
    let mut n_papers = 0;
    let mut obs = Vec::new();
    for &r in corpus.records_of_author(author) {
        let r = r as usize;
        let year = corpus.record(r).year;
        let values = percentiles.of_record(r);
        if year < from || year > end_year || values.is_empty() {
            continue;
        }
        n_papers += 1;
        obs.extend_from_slice(values);
    }
    let median_percentile = stats::median(&mut obs)?;
    Some(AuthorPostWindowPerformance {
        author,
        n_papers,
        median_percentile,
    })
}

/// Performance of every author, indexed by `AuthorId`.
pub fn all_post_window_performance(
    corpus: &Corpus,
    percentiles: &PercentileTable,
    first_years: &[i32],
    window_length: i32,
    end_year: i32,
) -> Vec<Option<AuthorPostWindowPerformance>> {
    (0..corpus.n_authors() as u32)
        .into_par_iter()
        .map(|a| {
            post_window_performance(
                AuthorId(a),
                corpus,
                percentiles,
                first_years[a as usize],
                window_length,
                end_year,
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupSummary {
    /// Distinct authors in the group, with or without post-window papers.
    pub n_authors: usize,
    pub dropped_no_postwindow: usize,
    pub papers: Option<Summary>,
    pub percentiles: Option<Summary>,
}

impl GroupSummary {
    pub fn empty() -> Self {
        GroupSummary {
            n_authors: 0,
            dropped_no_postwindow: 0,
            papers: None,
            percentiles: None,
        }
    }

    pub fn from_members<'a, I>(members: I) -> Self
    where
        I: IntoIterator<Item = Option<&'a AuthorPostWindowPerformance>>,
    {
        let mut n_authors = 0;
        let mut papers = Vec::new();
        let mut medians = Vec::new();
        for perf in members {
            n_authors += 1;
            if let Some(p) = perf {
                papers.push(p.n_papers as f64);
                medians.push(p.median_percentile);
            }
        }
        GroupSummary {
            n_authors,
            dropped_no_postwindow: n_authors - papers.len(),
            papers: Summary::of(&papers),
            percentiles: Summary::of(&medians),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CombinationSummary {
    pub combination: IndicatorCombination,
    pub talent: GroupSummary,
    pub control: GroupSummary,
}

impl CombinationSummary {
    pub fn count_difference(&self) -> i64 {
        self.talent.n_authors as i64 - self.control.n_authors as i64
    }

    pub fn dropped_difference(&self) -> i64 {
        self.talent.dropped_no_postwindow as i64 - self.control.dropped_no_postwindow as i64
    }

    pub fn papers_difference(&self) -> Option<Summary> {
        Some(self.talent.papers?.minus(&self.control.papers?))
    }

    pub fn percentiles_difference(&self) -> Option<Summary> {
        Some(self.talent.percentiles?.minus(&self.control.percentiles?))
    }

    /// Talent minus control median of author-level median percentiles.
    pub fn median_gap(&self) -> Option<f64> {
        self.percentiles_difference().map(|d| d.median)
    }

    fn group(&self, group: Group) -> &GroupSummary {
        match group {
            Group::Talent => &self.talent,
            Group::Control => &self.control,
        }
    }
}

/// One row per combination, in report order.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationSummary {
    pub rows: Vec<CombinationSummary>,
}

impl ValidationSummary {
    pub fn get(&self, combination: IndicatorCombination) -> Option<&CombinationSummary> {
        self.rows.iter().find(|r| r.combination == combination)
    }
}

/// Builds the report tables. An author assigned to a group in several fields
/// counts once for that (group, combination).
pub fn summarize(
    assignments: &[CohortAssignment],
    performances: &[Option<AuthorPostWindowPerformance>],
) -> ValidationSummary {
    let rows = IndicatorCombination::ALL
        .iter()
        .map(|&combination| {
            let members = |group: Group| -> GroupSummary {
                let authors: BTreeSet<AuthorId> = assignments
                    .iter()
                    .filter(|a| a.combination == combination && a.group == group)
                    .map(|a| a.author)
                    .collect();
                GroupSummary::from_members(authors.iter().map(|a| performances[a.0 as usize].as_ref()))
            };
            CombinationSummary {
                combination,
                talent: members(Group::Talent),
                control: members(Group::Control),
            }
        })
        .collect();
    ValidationSummary { rows }
}

/// Combinations by descending talent-minus-control median percentile gap;
/// ties (and missing gaps, which come last) ordered by name.
pub fn rank_combinations(summary: &ValidationSummary) -> Vec<IndicatorCombination> {
    let mut ranked: Vec<(Option<f64>, IndicatorCombination)> =
        summary.rows.iter().map(|r| (r.median_gap(), r.combination)).collect();
    ranked.sort_by(|(ga, ca), (gb, cb)| match (ga, gb) {
        (Some(a), Some(b)) => b.total_cmp(a).then_with(|| ca.name().cmp(cb.name())),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => ca.name().cmp(cb.name()),
    });
    ranked.into_iter().map(|(_, c)| c).collect()
}

fn fmt_real(v: f64) -> String {
    format!("{v:.6}")
}

fn stat_cells(s: Option<Summary>, full: bool) -> Vec<String> {
    let width = if full { 6 } else { 4 };
    match s {
        None => vec![String::new(); width],
        Some(s) if full => [s.min, s.q1, s.median, s.mean, s.q3, s.max].map(fmt_real).to_vec(),
        Some(s) => [s.q1, s.median, s.mean, s.q3].map(fmt_real).to_vec(),
    }
}

const GROUPS: [Group; 2] = [Group::Talent, Group::Control];

/// `group,combination,n_authors,dropped_no_postwindow` with difference rows.
pub fn write_counts_csv<W: Write>(summary: &ValidationSummary, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["group", "combination", "n_authors", "dropped_no_postwindow"])?;
    for g in GROUPS {
        for r in &summary.rows {
            let s = r.group(g);
            w.write_record([
                g.name(),
                r.combination.name(),
                &s.n_authors.to_string(),
                &s.dropped_no_postwindow.to_string(),
            ])?;
        }
    }
    for r in &summary.rows {
        w.write_record([
            "difference",
            r.combination.name(),
            &r.count_difference().to_string(),
            &r.dropped_difference().to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("report_counts.csv", e))?;
    Ok(())
}

fn write_stats_csv<W: Write>(
    summary: &ValidationSummary,
    out: W,
    full: bool,
    pick: impl Fn(&GroupSummary) -> Option<Summary>,
    diff: impl Fn(&CombinationSummary) -> Option<Summary>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["group", "combination"];
    if full {
        header.extend(["min", "q1", "median", "mean", "q3", "max"]);
    } else {
        header.extend(["q1", "median", "mean", "q3"]);
    }
    w.write_record(&header)?;
    for g in GROUPS {
        for r in &summary.rows {
            let mut row = vec![g.name().to_string(), r.combination.name().to_string()];
            row.extend(stat_cells(pick(r.group(g)), full));
            w.write_record(&row)?;
        }
    }
    for r in &summary.rows {
        let mut row = vec!["difference".to_string(), r.combination.name().to_string()];
        row.extend(stat_cells(diff(r), full));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<report>", e))?;
    Ok(())
}

/// Post-window paper counts: `group,combination,min,q1,median,mean,q3,max`.
pub fn write_papers_csv<W: Write>(summary: &ValidationSummary, out: W) -> Result<()> {
    write_stats_csv(summary, out, true, |g| g.papers, |r| r.papers_difference())
}

/// Author median percentiles: `group,combination,q1,median,mean,q3`.
pub fn write_percentiles_csv<W: Write>(summary: &ValidationSummary, out: W) -> Result<()> {
    write_stats_csv(summary, out, false, |g| g.percentiles, |r| r.percentiles_difference())
}

/// Plain-text ranking naming the best-discriminating combination.
pub fn summary_text(summary: &ValidationSummary) -> String {
    let ranking = rank_combinations(summary);
    let mut s = String::new();
    match ranking.first().and_then(|c| summary.get(*c)).and_then(|r| r.median_gap().map(|g| (r, g))) {
        Some((best, gap)) => {
            let _ = writeln!(s, "best combination: {} (median percentile gap {:.6})", best.combination, gap);
        }
        None => {
            let _ = writeln!(s, "best combination: none (no combination has both groups populated)");
        }
    }
    let _ = writeln!(s, "ranking:");
    for (i, c) in ranking.iter().enumerate() {
        let gap = summary
            .get(*c)
            .and_then(|r| r.median_gap())
            .map(fmt_real)
            .unwrap_or_else(|| "NA".into());
        let _ = writeln!(s, "{:>2}. {:<7} {}", i + 1, c.name(), gap);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::BroadField;

    fn perf(a: u32, n: usize, m: f64) -> Option<AuthorPostWindowPerformance> {
        Some(AuthorPostWindowPerformance {
            author: AuthorId(a),
            n_papers: n,
            median_percentile: m,
        })
    }

    fn assign(a: u32, field: u8, c: IndicatorCombination, g: Group) -> CohortAssignment {
        CohortAssignment {
            author: AuthorId(a),
            field: BroadField::new(field).unwrap(),
            combination: c,
            group: g,
        }
    }

    fn with_gap(c: IndicatorCombination, gap: Option<f64>) -> CombinationSummary {
        let pct = |m: f64| Summary {
            min: m,
            q1: m,
            median: m,
            mean: m,
            q3: m,
            max: m,
        };
        let g = |m: Option<f64>| GroupSummary {
            n_authors: 1,
            dropped_no_postwindow: 0,
            papers: None,
            percentiles: m.map(pct),
        };
        CombinationSummary {
            combination: c,
            talent: g(gap.map(|x| 50.0 + x)),
            control: g(Some(50.0)),
        }
    }

    #[test]
    fn summary_counts_distinct_authors_and_drops() {
        let o = IndicatorCombination::O;
        let assignments = vec![
            assign(0, 13, o, Group::Talent),
            assign(0, 16, o, Group::Talent),
            assign(1, 13, o, Group::Talent),
            assign(2, 13, o, Group::Control),
        ];
        let perfs = vec![perf(0, 4, 70.0), None, perf(2, 2, 40.0)];
        let s = summarize(&assignments, &perfs);
        let row = s.get(o).unwrap();
        assert_eq!(row.talent.n_authors, 2);
        assert_eq!(row.talent.dropped_no_postwindow, 1);
        assert_eq!(row.talent.papers.unwrap().mean, 4.0);
        assert_eq!(row.count_difference(), 1);
        assert_eq!(row.median_gap(), Some(30.0));
        let empty = s.get(IndicatorCombination::C).unwrap();
        assert_eq!(empty.talent.n_authors, 0);
        assert!(empty.talent.papers.is_none());
        assert!(empty.papers_difference().is_none());
    }

    #[test]
    fn ranking_by_gap_with_name_tiebreak() {
        use IndicatorCombination as C;
        let summary = ValidationSummary {
            rows: vec![
                with_gap(C::O, Some(4.49)),
                with_gap(C::Q1, Some(9.05)),
                with_gap(C::C, Some(3.65)),
                with_gap(C::O_Q1, Some(9.88)),
                with_gap(C::O_C, Some(4.87)),
                with_gap(C::Q1_C, Some(9.23)),
                with_gap(C::O_Q1_C, Some(9.08)),
            ],
        };
        let ranked = rank_combinations(&summary);
        assert_eq!(ranked, vec![C::O_Q1, C::Q1_C, C::O_Q1_C, C::Q1, C::O_C, C::O, C::C]);

        let tied = ValidationSummary {
            rows: C::ALL.iter().map(|&c| with_gap(c, Some(1.0))).collect(),
        };
        let names: Vec<_> = rank_combinations(&tied).iter().map(|c| c.name()).collect();
        assert_eq!(names, vec!["C", "O", "OxC", "OxQ1", "OxQ1xC", "Q1", "Q1xC"]);

        let partial = ValidationSummary {
            rows: vec![with_gap(C::O, None), with_gap(C::C, Some(-1.0))],
        };
        assert_eq!(rank_combinations(&partial), vec![C::C, C::O]);
    }

    #[test]
    fn reports_have_difference_rows() {
        let s = summarize(
            &[assign(0, 13, IndicatorCombination::O, Group::Talent)],
            &[perf(0, 3, 62.5)],
        );
        let mut buf = Vec::new();
        write_counts_csv(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 21);
        assert!(text.contains("difference,O,1,0"));
        let mut buf = Vec::new();
        write_percentiles_csv(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("group,combination,q1,median,mean,q3\n"));
        assert!(text.contains("talent,O,62.500000,62.500000,62.500000,62.500000"));
        assert!(text.contains("difference,O,,,,"));
        assert!(summary_text(&s).starts_with("best combination: none"));
    }
}
