//! Early-career O / Q1 / C indicators with fractional counting over broad fields.

use std::fmt;
use std::io::Write;
use std::ops::{Add, AddAssign};

use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{AuthorId, BroadField, Corpus};
use crate::error::{Error, Result};
use crate::quartiles::QuartileTable;

pub const DEFAULT_WINDOW_LENGTH: i32 = 10;

/// Exact fractional paper count, in units of `1 / FractionalCount::UNIT`.
///
/// `UNIT` is divisible by every possible number of broad fields on a paper
/// (at most 21), so `1/k` shares add up without rounding and ties between
/// authors compare exactly.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct FractionalCount(u64);

impl FractionalCount {
    /// lcm(1, 2, ..., 22)
    pub const UNIT: u64 = 232_792_560;
    pub const ZERO: FractionalCount = FractionalCount(0);

    /// One paper split over `k` fields.
    pub fn share(k: usize) -> Self {
        assert!(k > 0 && Self::UNIT % k as u64 == 0, "unsupported field count {k}");
        FractionalCount(Self::UNIT / k as u64)
    }

    pub fn whole(papers: u64) -> Self {
        FractionalCount(papers * Self::UNIT)
    }

    pub fn from_units(units: u64) -> Self {
        FractionalCount(units)
    }

    pub fn units(self) -> u64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / Self::UNIT as f64
    }
}

impl Add for FractionalCount {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        FractionalCount(self.0 + rhs.0)
    }
}

impl AddAssign for FractionalCount {
    fn add_assign(&mut self, rhs: Self) {
        self.0 += rhs.0;
    }
}

impl fmt::Display for FractionalCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}", self.as_f64())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Indicator {
    O,
    Q1,
    C,
}

impl Indicator {
    pub const ALL: [Indicator; 3] = [Indicator::O, Indicator::Q1, Indicator::C];

    pub fn name(self) -> &'static str {
        match self {
            Indicator::O => "O",
            Indicator::Q1 => "Q1",
            Indicator::C => "C",
        }
    }
}

impl fmt::Display for Indicator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuthorFieldIndicators {
    pub author: AuthorId,
    pub field: BroadField,
    pub first_paper_year: i32,
    pub o: FractionalCount,
    pub q1: FractionalCount,
    pub c: FractionalCount,
}

impl AuthorFieldIndicators {
    pub fn value(&self, indicator: Indicator) -> FractionalCount {
        match indicator {
            Indicator::O => self.o,
            Indicator::Q1 => self.q1,
            Indicator::C => self.c,
        }
    }
}

/// Earliest publication year per author, indexed by `AuthorId`. Papers without
/// an eligible field count.
pub fn first_paper_years(corpus: &Corpus) -> Vec<i32> {
    corpus
        .author_ids()
        .map(|a| {
            corpus
                .records_of_author(a)
                .iter()
                .map(|&r| corpus.record(r as usize).year)
                .min()
                .expect("interned authors have records")
        })
        .collect()
}

pub fn first_paper_year(author: &str, corpus: &Corpus) -> Result<i32> {
    let id = corpus
        .author_id(author)
        .ok_or_else(|| Error::UnknownAuthor(author.to_string()))?;
    Ok(corpus
        .records_of_author(id)
        .iter()
        .map(|&r| corpus.record(r as usize).year)
        .min()
        .expect("interned authors have records"))
}

/// Indicators for every (author, field) with at least one eligible paper in
/// the window `[y0, y0 + window_length - 1]`, ordered by (author, field).
pub fn compute_window_indicators(
    corpus: &Corpus,
    quartiles: &QuartileTable,
    first_years: &[i32],
    window_length: i32,
) -> Vec<AuthorFieldIndicators> {
    let per_author: Vec<Vec<AuthorFieldIndicators>> = (0..corpus.n_authors() as u32)
        .into_par_iter()
        .map(|a| {
            let author = AuthorId(a);
            let y0 = first_years[a as usize];
            let last = y0 + window_length - 1;
            let mut acc: Vec<AuthorFieldIndicators> = Vec::new();
            for &r in corpus.records_of_author(author) {
                let r = r as usize;
                let rec = corpus.record(r);
                let fields = corpus.fields(r);
                if rec.year > last || fields.is_empty() {
                    continue;
                }
                let share = FractionalCount::share(fields.len());
                let q1 = quartiles.is_q1(corpus.journal(r), rec.year);
                let corresponding = corpus.is_corresponding(r, author);
                for &field in fields {
                    let pos = match acc.binary_search_by_key(&field, |e| e.field) {
                        Ok(p) => p,
                        Err(p) => {
                            acc.insert(
                                p,
                                AuthorFieldIndicators {
                                    author,
                                    field,
                                    first_paper_year: y0,
                                    o: FractionalCount::ZERO,
                                    q1: FractionalCount::ZERO,
                                    c: FractionalCount::ZERO,
                                },
                            );
                            p
                        }
                    };
                    let e = &mut acc[pos];
                    e.o += share;
                    if q1 {
                        e.q1 += share;
                    }
                    if corresponding {
                        e.c += share;
                    }
                }
            }
            acc
        })
        .collect();
    per_author.into_iter().flatten().collect()
}

/// `author_id,field,first_paper_year,O,Q1,C` with six decimals.
pub fn write_indicators_csv<'a, W, I>(corpus: &Corpus, rows: I, out: W) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a AuthorFieldIndicators>,
{
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["author_id", "field", "first_paper_year", "O", "Q1", "C"])?;
    for e in rows {
        w.write_record([
            corpus.author_name(e.author),
            &e.field.to_string(),
            &e.first_paper_year.to_string(),
            &e.o.to_string(),
            &e.q1.to_string(),
            &e.c.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<indicators>", e))?;
    Ok(())
}
