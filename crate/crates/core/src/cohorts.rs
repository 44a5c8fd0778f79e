//! First-year cohorts, per-field top-X% cutoffs, and talent / control selection.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{AuthorId, BroadField, Corpus};
use crate::error::{Error, Result};
use crate::indicators::{AuthorFieldIndicators, FractionalCount, Indicator};

/// Non-empty subset of {O, Q1, C}; membership conditions apply to every member.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct IndicatorCombination(u8);

impl IndicatorCombination {
    pub const O: Self = Self(0b001);
    pub const Q1: Self = Self(0b010);
    pub const C: Self = Self(0b100);
    pub const O_Q1: Self = Self(0b011);
    pub const O_C: Self = Self(0b101);
    pub const Q1_C: Self = Self(0b110);
    pub const O_Q1_C: Self = Self(0b111);

    /// All seven combinations in report order.
    pub const ALL: [Self; 7] = [
        Self::O,
        Self::Q1,
        Self::C,
        Self::O_Q1,
        Self::O_C,
        Self::Q1_C,
        Self::O_Q1_C,
    ];

    pub fn single(indicator: Indicator) -> Self {
        match indicator {
            Indicator::O => Self::O,
            Indicator::Q1 => Self::Q1,
            Indicator::C => Self::C,
        }
    }

    pub fn contains(self, indicator: Indicator) -> bool {
        self.0 & Self::single(indicator).0 != 0
    }

    pub fn members(self) -> impl Iterator<Item = Indicator> {
        Indicator::ALL.into_iter().filter(move |&i| self.contains(i))
    }

    fn position(self) -> usize {
        Self::ALL.iter().position(|&c| c == self).expect("valid combination")
    }

    pub fn name(self) -> &'static str {
        ["O", "Q1", "C", "OxQ1", "OxC", "Q1xC", "OxQ1xC"][self.position()]
    }
}

impl PartialOrd for IndicatorCombination {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for IndicatorCombination {
    fn cmp(&self, other: &Self) -> Ordering {
        self.position().cmp(&other.position())
    }
}

impl fmt::Display for IndicatorCombination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for IndicatorCombination {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::invalid_param("combination", format!("unknown combination `{s}`")))
    }
}

impl TryFrom<String> for IndicatorCombination {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<IndicatorCombination> for String {
    fn from(c: IndicatorCombination) -> String {
        c.name().to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Group {
    Talent,
    Control,
}

impl Group {
    pub fn name(self) -> &'static str {
        match self {
            Group::Talent => "talent",
            Group::Control => "control",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct CohortAssignment {
    pub author: AuthorId,
    pub field: BroadField,
    pub combination: IndicatorCombination,
    pub group: Group,
}

/// Top-X% levels: talent is the top `talent`%, control sits below the top
/// `control_upper`% but within the top `control_lower`%.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopPercents {
    pub talent: f64,
    pub control_upper: f64,
    pub control_lower: f64,
}

impl Default for TopPercents {
    fn default() -> Self {
        TopPercents {
            talent: 1.0,
            control_upper: 5.0,
            control_lower: 10.0,
        }
    }
}

impl TopPercents {
    pub fn validate(&self) -> Result<()> {
        let ok = self.talent > 0.0
            && self.talent <= self.control_upper
            && self.control_upper <= self.control_lower
            && self.control_lower <= 100.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid_param(
                "top_percents",
                format!(
                    "need 0 < {} <= {} <= {} <= 100",
                    self.talent, self.control_upper, self.control_lower
                ),
            ))
        }
    }
}

/// Descending rank `ceil(pct / 100 * n)`, clamped to `[1, n]`.
pub fn cutoff_rank(pct: f64, n: usize) -> usize {
    let r = (pct * n as f64 / 100.0).ceil() as usize;
    r.clamp(1, n)
}

/// Value at descending rank `cutoff_rank(pct, n)`. Everyone at or above it
/// is in the top `pct`%, so boundary ties are all included.
pub fn cutoff_value(sorted_desc: &[FractionalCount], pct: f64) -> FractionalCount {
    sorted_desc[cutoff_rank(pct, sorted_desc.len()) - 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cutoffs {
    pub t1: FractionalCount,
    pub t5: FractionalCount,
    pub t10: FractionalCount,
}

impl Cutoffs {
    pub fn is_talent(&self, v: FractionalCount) -> bool {
        v >= self.t1
    }

    pub fn is_control(&self, v: FractionalCount) -> bool {
        v < self.t5 && v >= self.t10
    }
}

/// Cutoffs of each indicator within one field's ranking population.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FieldThresholds {
    pub field: BroadField,
    pub n: usize,
    pub cutoffs: [Cutoffs; 3],
}

impl FieldThresholds {
    pub fn get(&self, indicator: Indicator) -> &Cutoffs {
        &self.cutoffs[indicator as usize]
    }
}

/// Authors whose first paper year falls in `[first, last]`, in id order.
///
/// Errors if the corpus does not cover the full window of the last cohort year.
pub fn build_cohort(
    corpus: &Corpus,
    first_years: &[i32],
    (first, last): (i32, i32),
    window_length: i32,
) -> Result<Vec<AuthorId>> {
    let (corpus_first, corpus_last) = corpus.year_range();
    let needed = last + window_length - 1;
    if first > last || first < corpus_first || needed > corpus_last {
        return Err(Error::CohortRange {
            first,
            last,
            needed,
            corpus_first,
            corpus_last,
        });
    }
    Ok(first_years
        .iter()
        .enumerate()
        .filter(|(_, &y)| (first..=last).contains(&y))
        .map(|(a, _)| AuthorId(a as u32))
        .collect())
}

/// Indicator rows of cohort members grouped by field. Every author with O > 0
/// in a field is part of that field's ranking population for all indicators.
pub fn field_populations(
    cohort: &[AuthorId],
    indicators: &[AuthorFieldIndicators],
) -> BTreeMap<BroadField, Vec<AuthorFieldIndicators>> {
    let mut out: BTreeMap<BroadField, Vec<AuthorFieldIndicators>> = BTreeMap::new();
    for e in indicators {
        if cohort.binary_search(&e.author).is_ok() {
            out.entry(e.field).or_default().push(*e);
        }
    }
    out
}

/// Cutoffs for one field; `None` for an empty population.
pub fn compute_thresholds(
    population: &[AuthorFieldIndicators],
    field: BroadField,
    percents: &TopPercents,
) -> Option<FieldThresholds> {
    if population.is_empty() {
        return None;
    }
    let cutoffs = Indicator::ALL.map(|ind| {
        let mut values: Vec<FractionalCount> = population.iter().map(|e| e.value(ind)).collect();
        values.sort_unstable_by(|a, b| b.cmp(a));
        Cutoffs {
            t1: cutoff_value(&values, percents.talent),
            t5: cutoff_value(&values, percents.control_upper),
            t10: cutoff_value(&values, percents.control_lower),
        }
    });
    Some(FieldThresholds {
        field,
        n: population.len(),
        cutoffs,
    })
}

/// Talent and control members of one field under one combination.
pub fn select_groups(
    population: &[AuthorFieldIndicators],
    thresholds: &FieldThresholds,
    combination: IndicatorCombination,
) -> Vec<CohortAssignment> {
    let mut out = Vec::new();
    for e in population {
        let talent = combination
            .members()
            .all(|i| thresholds.get(i).is_talent(e.value(i)));
        let control = combination
            .members()
            .all(|i| thresholds.get(i).is_control(e.value(i)));
        let group = match (talent, control) {
            (true, _) => Group::Talent,
            (false, true) => Group::Control,
            (false, false) => continue,
        };
        out.push(CohortAssignment {
            author: e.author,
            field: thresholds.field,
            combination,
            group,
        });
    }
    out
}

/// Thresholds and group assignments of a cohort across all fields and combinations.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortSelection {
    pub thresholds: Vec<FieldThresholds>,
    /// Ordered by (author, field, combination, group).
    pub assignments: Vec<CohortAssignment>,
}

pub fn select_cohort(
    cohort: &[AuthorId],
    indicators: &[AuthorFieldIndicators],
    percents: &TopPercents,
) -> CohortSelection {
    let populations: Vec<_> = field_populations(cohort, indicators).into_iter().collect();
    let per_field: Vec<(FieldThresholds, Vec<CohortAssignment>)> = populations
        .par_iter()
        .filter_map(|(field, pop)| {
            let th = compute_thresholds(pop, *field, percents)?;
            let assigned = IndicatorCombination::ALL
                .iter()
                .flat_map(|&c| select_groups(pop, &th, c))
                .collect();
            Some((th, assigned))
        })
        .collect();
    let mut thresholds = Vec::with_capacity(per_field.len());
    let mut assignments = Vec::new();
    for (th, a) in per_field {
        thresholds.push(th);
        assignments.extend(a);
    }
    assignments.sort_unstable();
    CohortSelection {
        thresholds,
        assignments,
    }
}

/// `author_id,field,combination,group`.
pub fn write_assignments_csv<W: Write>(corpus: &Corpus, assignments: &[CohortAssignment], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["author_id", "field", "combination", "group"])?;
    for a in assignments {
        w.write_record([
            corpus.author_name(a.author),
            &a.field.to_string(),
            a.combination.name(),
            a.group.name(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<cohorts>", e))?;
    Ok(())
}

/// `field,indicator,n,t1,t5,t10`.
pub fn write_thresholds_csv<W: Write>(thresholds: &[FieldThresholds], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["field", "indicator", "n", "t1", "t5", "t10"])?;
    for th in thresholds {
        for ind in Indicator::ALL {
            let c = th.get(ind);
            w.write_record([
                th.field.to_string(),
                ind.name().to_string(),
                th.n.to_string(),
                c.t1.to_string(),
                c.t5.to_string(),
                c.t10.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<thresholds>", e))?;
    Ok(())
}
