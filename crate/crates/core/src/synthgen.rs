//! Seeded synthetic corpora with skewed citations and latent author ability.
//!
//! Every author has an early-career ability (drives the first ten years) and a
//! late-career ability correlated with it by `ability_correlation`. Ability
//! raises productivity, the prestige of the journals an author reaches, and
//! citation counts. Citations are discretized lognormal draws scaled by a
//! per-journal prestige multiplier that is stable across years; the top
//! quarter of each field's journals carries an extra boost, which makes
//! roughly a quarter of journals Q1.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::Serialize;

use crate::corpus::{RawRecord, EXCLUDED_PREFIXES};
use crate::error::{Error, Result};

/// Eligible broad fields, in the order synthetic fields are drawn from.
const FIELD_POOL: [u16; 21] = [
    13, 16, 17, 22, 25, 26, 27, 28, 29, 31, 11, 15, 19, 21, 23, 24, 30, 34, 35, 36, 10,
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_authors: usize,
    pub n_journals: usize,
    pub n_fields: usize,
    pub year_range: (i32, i32),
    /// Authors' first active year is drawn uniformly from this range.
    pub start_year_range: (i32, i32),
    /// Poisson paper rate per active year at ability 0.
    pub papers_per_year: f64,
    /// Log-rate slope of productivity on ability.
    pub productivity_ability: f64,
    pub citation_mu: f64,
    pub citation_sigma: f64,
    /// Log-citation boost of the top quarter of journals in each field.
    pub prestige_effect: f64,
    /// Log-citation spread of journal prestige within a tier.
    pub prestige_spread: f64,
    /// Log-citation effect of one standard deviation of author ability.
    pub ability_effect: f64,
    /// How strongly ability steers an author towards prestigious journals, in [0, 1].
    pub journal_ability_coupling: f64,
    pub ability_correlation: f64,
    pub corresponding_prob: f64,
    pub multifield_prob: f64,
    pub excluded_field_prob: f64,
    pub coauthors_mean: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 42,
            n_authors: 5000,
            n_journals: 200,
            n_fields: 4,
            year_range: (1999, 2020),
            start_year_range: (1999, 2011),
            papers_per_year: 1.2,
            productivity_ability: 0.5,
            citation_mu: 1.5,
            citation_sigma: 1.0,
            prestige_effect: 1.5,
            prestige_spread: 0.3,
            ability_effect: 0.5,
            journal_ability_coupling: 0.4,
            ability_correlation: 0.5,
            corresponding_prob: 0.6,
            multifield_prob: 0.2,
            excluded_field_prob: 0.02,
            coauthors_mean: 1.0,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::invalid_param(key, format!("cannot parse `{value}`")))
}

fn parse_range(key: &str, value: &str) -> Result<(i32, i32)> {
    let (a, b) = value
        .split_once(['-', ','])
        .ok_or_else(|| Error::invalid_param(key, format!("expected `first-last`, got `{value}`")))?;
    Ok((parse_num(key, a)?, parse_num(key, b)?))
}

impl SynthConfig {
    /// Sets one parameter from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key.trim() {
            "seed" => self.seed = parse_num(key, value)?,
            "n_authors" => self.n_authors = parse_num(key, value)?,
            "n_journals" => self.n_journals = parse_num(key, value)?,
            "n_fields" => self.n_fields = parse_num(key, value)?,
            "year_range" => self.year_range = parse_range(key, value)?,
            "start_year_range" => self.start_year_range = parse_range(key, value)?,
            "papers_per_year" => self.papers_per_year = parse_num(key, value)?,
            "productivity_ability" => self.productivity_ability = parse_num(key, value)?,
            "citation_mu" => self.citation_mu = parse_num(key, value)?,
            "citation_sigma" => self.citation_sigma = parse_num(key, value)?,
            "prestige_effect" => self.prestige_effect = parse_num(key, value)?,
            "prestige_spread" => self.prestige_spread = parse_num(key, value)?,
            "ability_effect" => self.ability_effect = parse_num(key, value)?,
            "journal_ability_coupling" => self.journal_ability_coupling = parse_num(key, value)?,
            "ability_correlation" => self.ability_correlation = parse_num(key, value)?,
            "corresponding_prob" => self.corresponding_prob = parse_num(key, value)?,
            "multifield_prob" => self.multifield_prob = parse_num(key, value)?,
            "excluded_field_prob" => self.excluded_field_prob = parse_num(key, value)?,
            "coauthors_mean" => self.coauthors_mean = parse_num(key, value)?,
            other => return Err(Error::invalid_param(other, "unknown synthetic parameter")),
        }
        Ok(())
    }

    /// Applies `key=value` assignments.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, pairs: &[S]) -> Result<()> {
        for pair in pairs {
            let pair = pair.as_ref();
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| Error::invalid_param(pair, "expected key=value"))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Reads a key-value file: one `key = value` per line, `#` starts a comment.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = SynthConfig::default();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid_param(line, "expected key = value"))?;
            cfg.set(k, v.trim().trim_matches('"'))?;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, name: &str, reason: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::invalid_param(name, reason))
            }
        };
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        check(self.n_authors > 0, "n_authors", "must be positive")?;
        check(
            (1..=FIELD_POOL.len()).contains(&self.n_fields),
            "n_fields",
            "must be between 1 and 21",
        )?;
        check(
            self.n_journals >= self.n_fields,
            "n_journals",
            "need at least one journal per field",
        )?;
        check(self.year_range.0 <= self.year_range.1, "year_range", "first year after last year")?;
        check(
            self.start_year_range.0 <= self.start_year_range.1
                && self.start_year_range.0 >= self.year_range.0
                && self.start_year_range.1 <= self.year_range.1,
            "start_year_range",
            "must lie within year_range",
        )?;
        check(
            self.papers_per_year > 0.0 && self.papers_per_year.is_finite(),
            "papers_per_year",
            "must be positive",
        )?;
        check(
            self.citation_sigma > 0.0 && self.citation_sigma.is_finite(),
            "citation_sigma",
            "must be positive",
        )?;
        for (name, v) in [
            ("productivity_ability", self.productivity_ability),
            ("citation_mu", self.citation_mu),
            ("prestige_effect", self.prestige_effect),
            ("prestige_spread", self.prestige_spread),
            ("ability_effect", self.ability_effect),
        ] {
            check(v.is_finite(), name, "must be finite")?;
        }
        check(self.coauthors_mean >= 0.0, "coauthors_mean", "must be non-negative")?;
        for (name, v) in [
            ("journal_ability_coupling", self.journal_ability_coupling),
            ("ability_correlation", self.ability_correlation),
            ("corresponding_prob", self.corresponding_prob),
            ("multifield_prob", self.multifield_prob),
            ("excluded_field_prob", self.excluded_field_prob),
        ] {
            check(unit(v), name, "must be in [0, 1]")?;
        }
        Ok(())
    }
}

struct Author {
    start: i32,
    field: usize,
    early: f64,
    late: f64,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-1.7 * x).exp())
}

fn asjc_in(rng: &mut ChaCha8Rng, prefix: u16) -> i64 {
    (prefix * 100 + rng.random_range(1..=99)) as i64
}

/// Generates the full record stream for `config`.
pub fn generate(config: &SynthConfig) -> Result<Vec<RawRecord>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let fields = &FIELD_POOL[..config.n_fields];

    // journals per field, ascending prestige (log-citation offset)
    let mut journals_by_field: Vec<Vec<(usize, f64)>> = vec![Vec::new(); fields.len()];
    for j in 0..config.n_journals {
        let z = normal(&mut rng);
        journals_by_field[j % fields.len()].push((j, z));
    }
    for js in &mut journals_by_field {
        js.sort_by(|a, b| a.1.total_cmp(&b.1));
        let top_tier = js.len() - js.len().div_ceil(4);
        for (rank, entry) in js.iter_mut().enumerate() {
            let boost = if rank >= top_tier { config.prestige_effect } else { 0.0 };
            entry.1 = boost + config.prestige_spread * entry.1;
        }
    }

    let rho = config.ability_correlation;
    let authors: Vec<Author> = (0..config.n_authors)
        .map(|_| {
            let start = rng.random_range(config.start_year_range.0..=config.start_year_range.1);
            let field = rng.random_range(0..fields.len());
            let early = normal(&mut rng);
            let late = rho * early + (1.0 - rho * rho).sqrt() * normal(&mut rng);
            Author {
                start,
                field,
                early,
                late,
            }
        })
        .collect();

    // authors ordered by start year, so "already active" is a prefix
    let mut by_start: Vec<usize> = (0..authors.len()).collect();
    by_start.sort_by_key(|&i| (authors[i].start, i));
    let active_upto = |year: i32| by_start.partition_point(|&i| authors[i].start <= year);

    let coauthors = (config.coauthors_mean > 0.0)
        .then(|| Poisson::new(config.coauthors_mean).expect("validated rate"));
    let gamma = config.journal_ability_coupling;
    let (first_year, last_year) = config.year_range;

    // early ability holds for ten years from the first paper actually published
    let mut first_pub: Vec<Option<i32>> = vec![None; authors.len()];
    let mut out = Vec::new();
    for year in first_year..=last_year {
        let n_active = active_upto(year);
        for (i, author) in authors.iter().enumerate() {
            if author.start > year {
                continue;
            }
            let ability = match first_pub[i] {
                Some(y0) if year >= y0 + 10 => author.late,
                _ => author.early,
            };
            let rate = config.papers_per_year * (config.productivity_ability * ability).exp();
            let n_papers = Poisson::new(rate).map(|p| p.sample(&mut rng) as u64).unwrap_or(0);
            for _ in 0..n_papers {
                let id = format!("P{:08}", out.len());

                let mut author_ids = vec![i];
                if let Some(dist) = &coauthors {
                    let k = dist.sample(&mut rng) as usize;
                    for _ in 0..k.min(n_active.saturating_sub(1)) {
                        let co = by_start[rng.random_range(0..n_active)];
                        if !author_ids.contains(&co) {
                            author_ids.push(co);
                        }
                    }
                }
                let corresponding = if author_ids.len() == 1 || rng.random_bool(config.corresponding_prob) {
                    i
                } else {
                    author_ids[rng.random_range(1..author_ids.len())]
                };

                let field_idx = author.field;
                let js = &journals_by_field[field_idx];
                let u = logistic(gamma * ability + (1.0 - gamma * gamma).sqrt() * normal(&mut rng));
                let (journal, prestige) = js[((u * js.len() as f64) as usize).min(js.len() - 1)];

                let asjc = if rng.random_bool(config.excluded_field_prob) {
                    let prefix = EXCLUDED_PREFIXES[rng.random_range(0..EXCLUDED_PREFIXES.len())];
                    vec![asjc_in(&mut rng, prefix)]
                } else {
                    let mut codes = vec![asjc_in(&mut rng, fields[field_idx])];
                    if fields.len() > 1 && rng.random_bool(config.multifield_prob) {
                        let mut other = rng.random_range(0..fields.len() - 1);
                        if other >= field_idx {
                            other += 1;
                        }
                        codes.push(asjc_in(&mut rng, fields[other]));
                    }
                    codes
                };

                let log_c = config.citation_mu
                    + config.prestige_effect * prestige
                    + config.ability_effect * ability
                    + config.citation_sigma * normal(&mut rng);
                let citations = log_c.exp().floor().min(1e9) as i64;

                let doc_type = match rng.random_range(0..100) {
                    0..85 => "article",
                    85..93 => "review",
                    _ => "proceedings",
                };

                for &a in &author_ids {
                    first_pub[a].get_or_insert(year);
                }
                out.push(RawRecord {
                    id,
                    year: year as i64,
                    doc_type: doc_type.to_string(),
                    journal: format!("J{journal:05}"),
                    asjc,
                    authors: author_ids.iter().map(|a| format!("A{a:07}")).collect(),
                    corresponding: vec![format!("A{corresponding:07}")],
                    citations,
                });
            }
        }
    }
    Ok(out)
}

/// Writes records in the JSON-lines corpus input format.
pub fn write_jsonl<W: Write>(records: &[RawRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Sample skewness (Fisher-Pearson, biased moment estimator).
pub fn sample_skewness(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    m3 / m2.powf(1.5)
}
