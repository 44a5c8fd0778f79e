//! Record ingestion, filtering and the indexed publication store.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use smallvec::SmallVec;

use crate::error::{Error, Result};

/// Two-digit prefixes of ASJC codes that belong to the arts, humanities and
/// social sciences. Papers carrying only these take no part in field normalization.
pub const EXCLUDED_PREFIXES: [u16; 6] = [12, 14, 18, 20, 32, 33];

/// The multidisciplinary code, excluded as an exact code (not as prefix 10).
pub const MULTIDISCIPLINARY: u16 = 1000;

pub const MIN_ASJC: u16 = 1000;
pub const MAX_ASJC: u16 = 3699;

/// Broad subject field: the first two digits of an ASJC code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BroadField(u8);

impl BroadField {
    /// Returns `None` for excluded research areas.
    pub fn new(code: u8) -> Option<Self> {
        if !(10..=36).contains(&code) || EXCLUDED_PREFIXES.contains(&(code as u16)) {
            None
        } else {
            Some(BroadField(code))
        }
    }

    /// Broad field of a single ASJC code, if it is eligible.
    pub fn of_asjc(code: u16) -> Option<Self> {
        if code == MULTIDISCIPLINARY || !(MIN_ASJC..=MAX_ASJC).contains(&code) {
            return None;
        }
        BroadField::new((code / 100) as u8)
    }

    pub fn code(self) -> u8 {
        self.0
    }
}

impl fmt::Display for BroadField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub type FieldSet = SmallVec<[BroadField; 2]>;

/// Deduplicated, sorted set of eligible broad fields for a set of ASJC codes.
pub fn broad_fields_of<I>(asjc_codes: I) -> FieldSet
where
    I: IntoIterator<Item = u16>,
{
    let mut fields: FieldSet = asjc_codes.into_iter().filter_map(BroadField::of_asjc).collect();
    fields.sort_unstable();
    fields.dedup();
    fields
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocType {
    Article,
    Review,
    Proceedings,
}

impl DocType {
    pub const ALL: [DocType; 3] = [DocType::Article, DocType::Review, DocType::Proceedings];

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "article" => Some(DocType::Article),
            "review" => Some(DocType::Review),
            "proceedings" => Some(DocType::Proceedings),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DocType::Article => "article",
            DocType::Review => "review",
            DocType::Proceedings => "proceedings",
        }
    }
}

/// A record exactly as it appears in the input, before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRecord {
    pub id: String,
    pub year: i64,
    #[serde(rename = "type")]
    pub doc_type: String,
    pub journal: String,
    pub asjc: Vec<i64>,
    pub authors: Vec<String>,
    pub corresponding: Vec<String>,
    pub citations: i64,
}

/// One validated, citable publication.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicationRecord {
    pub pub_id: String,
    pub year: i32,
    pub doc_type: DocType,
    pub journal_id: String,
    /// Sorted and deduplicated.
    pub asjc_codes: Vec<u16>,
    pub author_ids: Vec<String>,
    /// Sorted and deduplicated; always a subset of `author_ids`.
    pub corresponding_ids: Vec<String>,
    pub citation_count: u64,
}

impl PublicationRecord {
    pub fn to_raw(&self) -> RawRecord {
        RawRecord {
            id: self.pub_id.clone(),
            year: self.year as i64,
            doc_type: self.doc_type.as_str().to_string(),
            journal: self.journal_id.clone(),
            asjc: self.asjc_codes.iter().map(|&c| c as i64).collect(),
            authors: self.author_ids.clone(),
            corresponding: self.corresponding_ids.clone(),
            citations: self.citation_count as i64,
        }
    }
}

/// Outcome of checking a raw record against the filters.
enum Screened {
    Keep(PublicationRecord),
    Drop(DropReason),
}

fn screen(raw: RawRecord, config: &IngestConfig) -> std::result::Result<Screened, String> {
    if raw.id.is_empty() {
        return Err("empty id".into());
    }
    if raw.citations < 0 {
        return Err(format!("negative citation count {}", raw.citations));
    }
    if raw.asjc.is_empty() {
        return Err("no ASJC codes".into());
    }
    let mut asjc_codes = Vec::with_capacity(raw.asjc.len());
    for &code in &raw.asjc {
        if !(MIN_ASJC as i64..=MAX_ASJC as i64).contains(&code) {
            return Err(format!("ASJC code {code} outside [{MIN_ASJC}, {MAX_ASJC}]"));
        }
        asjc_codes.push(code as u16);
    }
    asjc_codes.sort_unstable();
    asjc_codes.dedup();

    let mut seen = raw.authors.clone();
    seen.sort_unstable();
    if seen.windows(2).any(|w| w[0] == w[1]) {
        return Err("repeated author id".into());
    }
    let mut corresponding_ids = raw.corresponding;
    corresponding_ids.sort_unstable();
    corresponding_ids.dedup();
    if let Some(c) = corresponding_ids
        .iter()
        .find(|c| seen.binary_search(c).is_err())
    {
        return Err(format!("corresponding author `{c}` is not an author"));
    }
    let year = i32::try_from(raw.year).map_err(|_| format!("year {} out of range", raw.year))?;

    let doc_type = match DocType::parse(&raw.doc_type) {
        Some(t) if config.doc_types.contains(&t) => t,
        _ => return Ok(Screened::Drop(DropReason::DocType)),
    };
    if year < config.first_year || year > config.last_year {
        return Ok(Screened::Drop(DropReason::Year));
    }
    Ok(Screened::Keep(PublicationRecord {
        pub_id: raw.id,
        year,
        doc_type,
        journal_id: raw.journal,
        asjc_codes,
        author_ids: raw.authors,
        corresponding_ids,
        citation_count: raw.citations as u64,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestConfig {
    pub first_year: i32,
    pub last_year: i32,
    pub doc_types: Vec<DocType>,
    /// Skip malformed lines with a log warning instead of failing.
    pub skip_malformed: bool,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            first_year: 1999,
            last_year: 2020,
            doc_types: DocType::ALL.to_vec(),
            skip_malformed: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DropReason {
    DocType,
    Year,
    Malformed,
}

impl DropReason {
    pub const ALL: [DropReason; 3] = [DropReason::DocType, DropReason::Year, DropReason::Malformed];

    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::DocType => "doc_type",
            DropReason::Year => "year",
            DropReason::Malformed => "malformed",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub read: usize,
    pub kept: usize,
    pub dropped: BTreeMap<DropReason, usize>,
}

impl IngestReport {
    pub fn dropped_total(&self) -> usize {
        self.dropped.values().sum()
    }

    pub fn dropped_for(&self, reason: DropReason) -> usize {
        self.dropped.get(&reason).copied().unwrap_or(0)
    }

    /// `reason,count` with one row per drop reason, zeros included.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["reason", "count"])?;
        for reason in DropReason::ALL {
            w.write_record([reason.as_str(), &self.dropped_for(reason).to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<ingest report>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AuthorId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct JournalId(pub u32);

#[derive(Debug, Clone, PartialEq, Eq)]
struct PaperKeys {
    journal: JournalId,
    authors: Box<[AuthorId]>,
    corresponding: Box<[AuthorId]>,
    fields: FieldSet,
}

/// Immutable, filtered and indexed set of publications.
///
/// Records are held in `pub_id` order, and author / journal ids are interned
/// in string order, so comparing interned ids orders like the strings do.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    year_range: (i32, i32),
    records: Vec<PublicationRecord>,
    keys: Vec<PaperKeys>,
    author_names: Vec<String>,
    journal_names: Vec<String>,
    by_author: Vec<Vec<u32>>,
    by_journal_year: BTreeMap<(JournalId, i32), Vec<u32>>,
    by_field_year: BTreeMap<(BroadField, i32), Vec<u32>>,
}

fn intern<'a>(names: impl Iterator<Item = &'a String>) -> (Vec<String>, HashMap<String, u32>) {
    let mut sorted: Vec<String> = names.cloned().collect();
    sorted.sort_unstable();
    sorted.dedup();
    let lookup = sorted
        .iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), i as u32))
        .collect();
    (sorted, lookup)
}

impl Corpus {
    /// Builds the indexes over already validated records.
    pub fn from_records(year_range: (i32, i32), mut records: Vec<PublicationRecord>) -> Result<Self> {
        records.sort_unstable_by(|a, b| a.pub_id.cmp(&b.pub_id));
        if let Some(w) = records.windows(2).find(|w| w[0].pub_id == w[1].pub_id) {
            return Err(Error::DuplicateId(w[0].pub_id.clone()));
        }
        let (author_names, author_lookup) = intern(records.iter().flat_map(|r| r.author_ids.iter()));
        let (journal_names, journal_lookup) = intern(records.iter().map(|r| &r.journal_id));

        let keys: Vec<PaperKeys> = records
            .iter()
            .map(|r| PaperKeys {
                journal: JournalId(journal_lookup[&r.journal_id]),
                authors: r.author_ids.iter().map(|a| AuthorId(author_lookup[a])).collect(),
                corresponding: r
                    .corresponding_ids
                    .iter()
                    .map(|a| AuthorId(author_lookup[a]))
                    .collect(),
                fields: broad_fields_of(r.asjc_codes.iter().copied()),
            })
            .collect();

        let n_authors = author_names.len();
        let ((by_author, by_journal_year), by_field_year) = rayon::join(
            || {
                rayon::join(
                    || {
                        let mut idx = vec![Vec::new(); n_authors];
                        for (i, k) in keys.iter().enumerate() {
                            for a in k.authors.iter() {
                                idx[a.0 as usize].push(i as u32);
                            }
                        }
                        idx
                    },
                    || {
                        let mut idx: BTreeMap<(JournalId, i32), Vec<u32>> = BTreeMap::new();
                        for (i, (k, r)) in keys.iter().zip(&records).enumerate() {
                            idx.entry((k.journal, r.year)).or_default().push(i as u32);
                        }
                        idx
                    },
                )
            },
            || {
                let mut idx: BTreeMap<(BroadField, i32), Vec<u32>> = BTreeMap::new();
                for (i, (k, r)) in keys.iter().zip(&records).enumerate() {
                    for &f in &k.fields {
                        idx.entry((f, r.year)).or_default().push(i as u32);
                    }
                }
                idx
            },
        );

        Ok(Corpus {
            year_range,
            records,
            keys,
            author_names,
            journal_names,
            by_author,
            by_journal_year,
            by_field_year,
        })
    }

    pub fn year_range(&self) -> (i32, i32) {
        self.year_range
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[PublicationRecord] {
        &self.records
    }

    pub fn record(&self, idx: usize) -> &PublicationRecord {
        &self.records[idx]
    }

    pub fn fields(&self, idx: usize) -> &[BroadField] {
        &self.keys[idx].fields
    }

    pub fn journal(&self, idx: usize) -> JournalId {
        self.keys[idx].journal
    }

    pub fn authors(&self, idx: usize) -> &[AuthorId] {
        &self.keys[idx].authors
    }

    pub fn is_corresponding(&self, idx: usize, author: AuthorId) -> bool {
        self.keys[idx].corresponding.contains(&author)
    }

    pub fn n_authors(&self) -> usize {
        self.author_names.len()
    }

    pub fn author_ids(&self) -> impl Iterator<Item = AuthorId> + '_ {
        (0..self.author_names.len() as u32).map(AuthorId)
    }

    pub fn author_name(&self, id: AuthorId) -> &str {
        &self.author_names[id.0 as usize]
    }

    pub fn author_id(&self, name: &str) -> Option<AuthorId> {
        self.author_names
            .binary_search_by(|n| n.as_str().cmp(name))
            .ok()
            .map(|i| AuthorId(i as u32))
    }

    pub fn journal_name(&self, id: JournalId) -> &str {
        &self.journal_names[id.0 as usize]
    }

    pub fn journal_id(&self, name: &str) -> Option<JournalId> {
        self.journal_names
            .binary_search_by(|n| n.as_str().cmp(name))
            .ok()
            .map(|i| JournalId(i as u32))
    }

    /// Record indices authored by `author`, in `pub_id` order.
    pub fn records_of_author(&self, author: AuthorId) -> &[u32] {
        &self.by_author[author.0 as usize]
    }

    pub fn by_journal_year(&self) -> &BTreeMap<(JournalId, i32), Vec<u32>> {
        &self.by_journal_year
    }

    pub fn by_field_year(&self) -> &BTreeMap<(BroadField, i32), Vec<u32>> {
        &self.by_field_year
    }

    /// Writes the corpus back out in the JSON-lines input format, in `pub_id` order.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, &r.to_raw())?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON-lines serialization.
    pub fn digest(&self) -> String {
        let mut hasher = HashWriter(Sha256::new());
        self.write_jsonl(&mut hasher).expect("hashing never fails");
        hex_digest(hasher.0)
    }
}

struct HashWriter(Sha256);

impl Write for HashWriter {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.update(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

pub(crate) fn hex_digest(hasher: Sha256) -> String {
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// A raw record tagged with its 1-based source line, or a parse failure.
pub type SourceItem = (usize, std::result::Result<RawRecord, String>);

/// Filters a record stream and builds the corpus.
pub fn ingest<I>(source: I, config: &IngestConfig) -> Result<(Corpus, IngestReport)>
where
    I: IntoIterator<Item = SourceItem>,
{
    if config.first_year > config.last_year {
        return Err(Error::invalid_param(
            "first_year",
            format!("{} is after last_year {}", config.first_year, config.last_year),
        ));
    }
    let mut report = IngestReport::default();
    let mut kept = Vec::new();
    for (line, item) in source {
        report.read += 1;
        let screened = item.and_then(|raw| screen(raw, config));
        match screened {
            Ok(Screened::Keep(rec)) => kept.push(rec),
            Ok(Screened::Drop(reason)) => *report.dropped.entry(reason).or_default() += 1,
            Err(reason) if config.skip_malformed => {
                log::warn!("skipping line {line}: {reason}");
                *report.dropped.entry(DropReason::Malformed).or_default() += 1;
            }
            Err(reason) => return Err(Error::Malformed { line, reason }),
        }
    }
    report.kept = kept.len();
    let corpus = Corpus::from_records((config.first_year, config.last_year), kept)?;
    Ok((corpus, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Jsonl,
    Csv,
}

impl InputFormat {
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => InputFormat::Csv,
            _ => InputFormat::Jsonl,
        }
    }
}

/// Parses JSON-lines input. Blank lines are ignored.
pub fn read_jsonl<R: Read>(reader: R) -> impl Iterator<Item = SourceItem> {
    BufReader::new(reader)
        .lines()
        .enumerate()
        .filter_map(|(i, line)| {
            let line_no = i + 1;
            match line {
                Err(e) => Some((line_no, Err(e.to_string()))),
                Ok(l) if l.trim().is_empty() => None,
                Ok(l) => Some((
                    line_no,
                    serde_json::from_str::<RawRecord>(&l).map_err(|e| e.to_string()),
                )),
            }
        })
}

const CSV_COLUMNS: [&str; 8] = [
    "id",
    "year",
    "type",
    "journal",
    "asjc",
    "authors",
    "corresponding",
    "citations",
];

fn split_list(cell: &str) -> Vec<String> {
    if cell.is_empty() {
        Vec::new()
    } else {
        cell.split(';').map(|s| s.to_string()).collect()
    }
}

fn parse_csv_row(row: &csv::StringRecord, cols: &[usize; 8]) -> std::result::Result<RawRecord, String> {
    let cell = |i: usize| row.get(cols[i]).ok_or_else(|| format!("missing column `{}`", CSV_COLUMNS[i]));
    let int = |i: usize| -> std::result::Result<i64, String> {
        let c = cell(i)?;
        c.trim()
            .parse()
            .map_err(|_| format!("column `{}`: `{c}` is not an integer", CSV_COLUMNS[i]))
    };
    let asjc = split_list(cell(4)?)
        .iter()
        .map(|c| {
            c.trim()
                .parse::<i64>()
                .map_err(|_| format!("column `asjc`: `{c}` is not an integer"))
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(RawRecord {
        id: cell(0)?.to_string(),
        year: int(1)?,
        doc_type: cell(2)?.to_string(),
        journal: cell(3)?.to_string(),
        asjc,
        authors: split_list(cell(5)?),
        corresponding: split_list(cell(6)?),
        citations: int(7)?,
    })
}

/// Parses the CSV variant: same column names, list cells joined with `;`.
pub fn read_csv<'a, R: Read + 'a>(reader: R) -> Result<Box<dyn Iterator<Item = SourceItem> + 'a>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut cols = [0usize; 8];
    for (slot, name) in cols.iter_mut().zip(CSV_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Malformed {
                line: 1,
                reason: format!("missing column `{name}`"),
            })?;
    }
    if let Some(extra) = headers.iter().find(|h| !CSV_COLUMNS.contains(h)) {
        return Err(Error::Malformed {
            line: 1,
            reason: format!("unknown column `{extra}`"),
        });
    }
    Ok(Box::new(rdr.into_records().map(move |row| match row {
        Ok(row) => {
            let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
            (line, parse_csv_row(&row, &cols))
        }
        Err(e) => {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            (line, Err(e.to_string()))
        }
    })))
}
