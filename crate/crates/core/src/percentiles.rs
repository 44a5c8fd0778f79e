//! Hazen citation percentiles within (broad field, publication year) groups.

use std::io::Write;

use rayon::prelude::*;

use crate::corpus::{BroadField, Corpus};
use crate::error::{Error, Result};

/// Hazen percentile of every value within the group, positionally aligned.
///
/// A value with `L` strictly smaller values and `E` equal values (itself
/// included) among `n` gets `100 * (L + E/2) / n`, which is `100 * (r - 0.5) / n`
/// with ties sharing their block's mean rank `r`.
pub fn hazen_percentiles(values: &[u64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::EmptyGroup);
    }
    let n = values.len();
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.sort_unstable_by_key(|&i| values[i as usize]);

    let denom = 2.0 * n as f64;
    let mut out = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let v = values[order[start] as usize];
        let end = start + order[start..].iter().take_while(|&&i| values[i as usize] == v).count();
        // 100 * (2L + E) / 2n, with an exact integer numerator
        let p = (100 * (2 * start + (end - start))) as f64 / denom;
        for &i in &order[start..end] {
            out[i as usize] = p;
        }
        start = end;
    }
    Ok(out)
}

/// One percentile observation for a (paper, field) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaperFieldPercentile {
    /// Index into [`Corpus::records`].
    pub record: usize,
    pub field: BroadField,
    pub year: i32,
    pub percentile: f64,
}

/// Percentiles for every (paper, eligible field) pair of a corpus.
///
/// Per-record values are stored aligned with [`Corpus::fields`].
#[derive(Debug, Clone, PartialEq)]
pub struct PercentileTable {
    offsets: Vec<usize>,
    values: Vec<f64>,
}

impl PercentileTable {
    /// Percentiles of `record`, aligned with `corpus.fields(record)`.
    pub fn of_record(&self, record: usize) -> &[f64] {
        &self.values[self.offsets[record]..self.offsets[record + 1]]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// All observations ordered by (field, year, pub_id).
    pub fn observations(&self, corpus: &Corpus) -> Vec<PaperFieldPercentile> {
        let mut out = Vec::with_capacity(self.values.len());
        for (&(field, year), members) in corpus.by_field_year() {
            for &rec in members {
                let rec = rec as usize;
                let slot = corpus.fields(rec).binary_search(&field).expect("indexed field");
                out.push(PaperFieldPercentile {
                    record: rec,
                    field,
                    year,
                    percentile: self.of_record(rec)[slot],
                });
            }
        }
        out
    }

    /// `pub_id,field,year,percentile` with six decimals.
    pub fn write_csv<W: Write>(&self, corpus: &Corpus, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["pub_id", "field", "year", "percentile"])?;
        for obs in self.observations(corpus) {
            w.write_record([
                corpus.record(obs.record).pub_id.as_str(),
                &obs.field.to_string(),
                &obs.year.to_string(),
                &format!("{:.6}", obs.percentile),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<percentiles>", e))?;
        Ok(())
    }
}

/// Applies [`hazen_percentiles`] to every (field, year) group, pooling document types.
pub fn compute_paper_percentiles(corpus: &Corpus) -> PercentileTable {
    let mut offsets = Vec::with_capacity(corpus.len() + 1);
    let mut total = 0;
    offsets.push(0);
    for rec in 0..corpus.len() {
        total += corpus.fields(rec).len();
        offsets.push(total);
    }

    let groups: Vec<(&(BroadField, i32), &Vec<u32>)> = corpus.by_field_year().iter().collect();
    let scattered: Vec<Vec<(usize, f64)>> = groups
        .par_iter()
        .map(|&(&(field, _), members)| {
            let counts: Vec<u64> = members
                .iter()
                .map(|&r| corpus.record(r as usize).citation_count)
                .collect();
            let pct = hazen_percentiles(&counts).expect("index groups are non-empty");
            members
                .iter()
                .zip(pct)
                .map(|(&r, p)| {
                    let r = r as usize;
                    let slot = corpus.fields(r).binary_search(&field).expect("indexed field");
                    (offsets[r] + slot, p)
                })
                .collect()
        })
        .collect();

    let mut values = vec![f64::NAN; total];
    for (slot, p) in scattered.into_iter().flatten() {
        values[slot] = p;
    }
    PercentileTable { offsets, values }
}
