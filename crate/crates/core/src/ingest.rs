//! Numeric CSV ingestion and the rank transform to pseudo-observations.

use std::cmp::Ordering;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Paired observations (x_i, y_i), all finite, n ≥ 2.
#[derive(Debug, Clone, PartialEq)]
pub struct BivariateSample<T> {
    xs: Vec<T>,
    ys: Vec<T>,
}

impl<T: Scalar> BivariateSample<T> {
    pub fn new(xs: Vec<T>, ys: Vec<T>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::InvalidSample(format!("x has {} values but y has {}", xs.len(), ys.len())));
        }
        if xs.len() < 2 {
            return Err(Error::InvalidSample(format!("need at least 2 observations, got {}", xs.len())));
        }
        if let Some(i) = xs.iter().chain(&ys).position(|v| !v.is_finite()) {
            let i = i % xs.len();
            return Err(Error::InvalidSample(format!("non-finite value in observation {}", i + 1)));
        }
        Ok(Self { xs, ys })
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (T, T)>) -> Result<Self> {
        let (xs, ys) = pairs.into_iter().unzip();
        Self::new(xs, ys)
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn xs(&self) -> &[T] {
        &self.xs
    }

    pub fn ys(&self) -> &[T] {
        &self.ys
    }

    /// Applies `g` to x and `h` to y componentwise.
    pub fn map(&self, g: impl Fn(T) -> T, h: impl Fn(T) -> T) -> Result<Self> {
        Self::new(self.xs.iter().map(|&x| g(x)).collect(), self.ys.iter().map(|&y| h(y)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TiePolicy {
    /// Average rank for tied values; the tied block shares its rank interval.
    /// Pseudo-observations are then no longer the exact grid {1/n, …, 1}.
    MidRank,
    /// Ties broken by a seeded random key; ranks are a permutation of 1..=n.
    #[default]
    SeededJitter,
}

/// Closed range of ranks (1-based) occupied by one observation. Tie-free
/// observations have `first == last`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankSpan {
    pub first: usize,
    pub last: usize,
}

/// Rank-transformed sample: the support points of the empirical copula.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoSample<T> {
    pairs: Vec<(T, T)>,
    spans: Vec<(RankSpan, RankSpan)>,
    tie_policy: TiePolicy,
}

impl<T: Scalar> PseudoSample<T> {
    /// Builds a pseudo-sample from tie-free integer ranks (permutations of 1..=n).
    pub fn from_ranks(x_ranks: &[usize], y_ranks: &[usize]) -> Result<Self> {
        let n = x_ranks.len();
        if n == 0 {
            return Err(Error::InvalidSample("empty pseudo-sample".into()));
        }
        if y_ranks.len() != n {
            return Err(Error::InvalidSample("rank vectors differ in length".into()));
        }
        for ranks in [x_ranks, y_ranks] {
            let mut seen = vec![false; n];
            for &r in ranks {
                if r == 0 || r > n || std::mem::replace(&mut seen[r - 1], true) {
                    return Err(Error::InvalidSample(format!("ranks must be a permutation of 1..={n}")));
                }
            }
        }
        let spans: Vec<_> = x_ranks
            .iter()
            .zip(y_ranks)
            .map(|(&r, &s)| (RankSpan { first: r, last: r }, RankSpan { first: s, last: s }))
            .collect();
        Ok(Self::from_spans(spans, TiePolicy::SeededJitter))
    }

    fn from_spans(spans: Vec<(RankSpan, RankSpan)>, tie_policy: TiePolicy) -> Self {
        let n = T::of_usize(spans.len());
        let two = T::lit(2.0);
        let pos = |s: RankSpan| T::of_usize(s.first + s.last) / (two * n);
        let pairs = spans.iter().map(|&(a, b)| (pos(a), pos(b))).collect();
        Self { pairs, spans, tie_policy }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// (u_i, v_i) = (rank(x_i)/n, rank(y_i)/n).
    pub fn pairs(&self) -> &[(T, T)] {
        &self.pairs
    }

    pub fn spans(&self) -> &[(RankSpan, RankSpan)] {
        &self.spans
    }

    pub fn tie_policy(&self) -> TiePolicy {
        self.tie_policy
    }
}

/// Rank transform of a sample.
pub fn to_pseudo<T: Scalar>(sample: &BivariateSample<T>, tie_policy: TiePolicy, seed: u64) -> PseudoSample<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xr = rank_spans(sample.xs(), tie_policy, &mut rng);
    let yr = rank_spans(sample.ys(), tie_policy, &mut rng);
    if tie_policy == TiePolicy::MidRank && xr.iter().chain(&yr).any(|s| s.first != s.last) {
        log::warn!("mid-ranks assigned to ties; pseudo-observations are not the exact rank grid");
    }
    PseudoSample::from_spans(xr.into_iter().zip(yr).collect(), tie_policy)
}

fn rank_spans<T: Scalar>(values: &[T], policy: TiePolicy, rng: &mut ChaCha8Rng) -> Vec<RankSpan> {
    let n = values.len();
    let cmp = |a: &T, b: &T| a.partial_cmp(b).unwrap_or(Ordering::Equal);
    let mut order: Vec<usize> = (0..n).collect();
    let mut spans = vec![RankSpan { first: 0, last: 0 }; n];
    match policy {
        TiePolicy::SeededJitter => {
            let keys: Vec<u64> = (0..n).map(|_| rng.random()).collect();
            order.sort_by(|&a, &b| cmp(&values[a], &values[b]).then(keys[a].cmp(&keys[b])).then(a.cmp(&b)));
            for (pos, &i) in order.iter().enumerate() {
                spans[i] = RankSpan { first: pos + 1, last: pos + 1 };
            }
        }
        TiePolicy::MidRank => {
            order.sort_by(|&a, &b| cmp(&values[a], &values[b]).then(a.cmp(&b)));
            let mut start = 0;
            while start < n {
                let mut end = start + 1;
                while end < n && cmp(&values[order[start]], &values[order[end]]) == Ordering::Equal {
                    end += 1;
                }
                for &i in &order[start..end] {
                    spans[i] = RankSpan { first: start + 1, last: end };
                }
                start = end;
            }
        }
    }
    spans
}

/// Rectangular numeric table with one designated response column.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnTable {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    endogenous: usize,
}

impl ColumnTable {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>, endogenous: &str) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::InvalidSample("column names and data disagree".into()));
        }
        let rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != rows) {
            return Err(Error::InvalidSample("table is not rectangular".into()));
        }
        let endogenous = resolve_column(&names, true, endogenous)?;
        Ok(Self { names, columns, endogenous })
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn endogenous_name(&self) -> &str {
        &self.names[self.endogenous]
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|i| self.columns[i].as_slice())
    }

    /// Names of every column except the response.
    pub fn exogenous(&self) -> impl Iterator<Item = &str> {
        self.names.iter().enumerate().filter(move |(i, _)| *i != self.endogenous).map(|(_, n)| n.as_str())
    }

    /// (X, Y) sample with X the named column and Y the response.
    pub fn pair(&self, x_name: &str) -> Result<BivariateSample<f64>> {
        let x = self.column(x_name).ok_or_else(|| Error::UnknownColumn(x_name.to_string()))?;
        BivariateSample::new(x.to_vec(), self.columns[self.endogenous].clone())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReadOptions {
    /// Drop rows with a missing value in a selected column instead of failing.
    pub drop_incomplete: bool,
}

struct RawTable {
    names: Vec<String>,
    has_header: bool,
    /// (1-based file line, fields)
    rows: Vec<(usize, Vec<String>)>,
}

fn is_missing(field: &str) -> bool {
    let f = field.trim();
    f.is_empty() || f.eq_ignore_ascii_case("na")
}

fn read_raw(path: &Path) -> Result<RawTable> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(file);
    let mut records = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        records.push((line + 1, rec.iter().map(str::to_string).collect::<Vec<_>>()));
    }
    let Some((_, first)) = records.first() else {
        return Err(Error::InvalidSample("empty file".into()));
    };
    let has_header = first.iter().any(|f| !is_missing(f) && f.trim().parse::<f64>().is_err());
    let names = if has_header { first.clone() } else { (0..first.len()).map(|i| i.to_string()).collect() };
    let rows = if has_header { records.into_iter().skip(1).collect() } else { records };
    Ok(RawTable { names, has_header, rows })
}

fn resolve_column(names: &[String], has_header: bool, col: &str) -> Result<usize> {
    if let Some(i) = names.iter().position(|n| n == col) {
        return Ok(i);
    }
    if has_header {
        if let Ok(i) = col.parse::<usize>() {
            if i < names.len() {
                return Ok(i);
            }
        }
    }
    Err(Error::UnknownColumn(col.to_string()))
}

/// Parses the selected columns; `None` marks a missing value.
fn parse_rows(raw: &RawTable, cols: &[usize]) -> Result<Vec<(usize, Vec<Option<f64>>)>> {
    raw.rows
        .iter()
        .map(|(line, fields)| {
            let values = cols
                .iter()
                .map(|&c| {
                    let field = fields.get(c).map(String::as_str).unwrap_or("");
                    if is_missing(field) {
                        return Ok(None);
                    }
                    let v: f64 = field.parse().map_err(|_| Error::Parse {
                        row: *line,
                        message: format!("`{field}` in column `{}` is not a number", raw.names[c]),
                    })?;
                    if !v.is_finite() {
                        return Err(Error::Parse {
                            row: *line,
                            message: format!("non-finite value `{field}` in column `{}`", raw.names[c]),
                        });
                    }
                    Ok(Some(v))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((*line, values))
        })
        .collect()
}

fn complete_rows(parsed: Vec<(usize, Vec<Option<f64>>)>, opts: ReadOptions) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(parsed.len());
    for (line, values) in parsed {
        match values.into_iter().collect::<Option<Vec<f64>>>() {
            Some(v) => out.push(v),
            None if opts.drop_incomplete => {}
            None => {
                return Err(Error::Parse {
                    row: line,
                    message: "missing value (use --drop-incomplete to skip such rows)".into(),
                })
            }
        }
    }
    if out.len() < 2 {
        return Err(Error::InvalidSample(format!("need at least 2 complete rows, got {}", out.len())));
    }
    Ok(out)
}

/// Reads two columns, selected by header name or by zero-based index.
pub fn read_csv(path: impl AsRef<Path>, x_col: &str, y_col: &str, opts: ReadOptions) -> Result<BivariateSample<f64>> {
    let raw = read_raw(path.as_ref())?;
    let cols = [resolve_column(&raw.names, raw.has_header, x_col)?, resolve_column(&raw.names, raw.has_header, y_col)?];
    let rows = complete_rows(parse_rows(&raw, &cols)?, opts)?;
    BivariateSample::from_pairs(rows.into_iter().map(|r| (r[0], r[1])))
}

/// Reads every column of a numeric CSV, with `y_col` as the response.
pub fn read_table(path: impl AsRef<Path>, y_col: &str, opts: ReadOptions) -> Result<ColumnTable> {
    let raw = read_raw(path.as_ref())?;
    let cols: Vec<usize> = (0..raw.names.len()).collect();
    let rows = complete_rows(parse_rows(&raw, &cols)?, opts)?;
    let columns = cols.iter().map(|&c| rows.iter().map(|r| r[c]).collect()).collect();
    let endogenous = raw.names[resolve_column(&raw.names, raw.has_header, y_col)?].clone();
    ColumnTable::new(raw.names, columns, &endogenous)
}
