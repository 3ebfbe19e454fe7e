//! Observations, feature schemas and dataset containers.
//!
//! Every stored [`Observation`] has at least one click: zero-click rows are
//! dropped at ingestion so the modeling code can divide by clicks freely.
//! Category domains are data-defined and grow as rows are admitted.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column names that cannot be used as structural features.
pub const RESERVED_COLUMNS: [&str; 4] = ["date", "bid_unit_id", "clicks", "revenue"];

/// Name of the derived day-of-week feature. When a schema carries a feature
/// with this name, prediction queries may omit it and it is computed from
/// the query date.
pub const DAY_OF_WEEK: &str = "day_of_week";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: String,
    #[serde(default)]
    pub categories: BTreeSet<String>,
}

/// Ordered structural features. The bid unit is the implicit bottom level
/// and is never listed here.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FeatureSchema {
    features: Vec<FeatureDef>,
}

impl FeatureSchema {
    pub fn new<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut features = Vec::with_capacity(names.len());
        for name in names {
            let name = name.as_ref().trim();
            if name.is_empty() {
                return Err(Error::Schema("empty feature name".into()));
            }
            if RESERVED_COLUMNS.contains(&name) {
                return Err(Error::Schema(format!("`{name}` is a reserved column")));
            }
            if !seen.insert(name.to_string()) {
                return Err(Error::Schema(format!("duplicate feature `{name}`")));
            }
            features.push(FeatureDef {
                name: name.to_string(),
                categories: BTreeSet::new(),
            });
        }
        Ok(Self { features })
    }

    /// Builds a schema from a CSV header of the form
    /// `date,bid_unit_id,<features...>,clicks,revenue`.
    pub fn from_header<S: AsRef<str>>(header: &[S]) -> Result<Self> {
        let cols: Vec<&str> = header.iter().map(|c| c.as_ref().trim()).collect();
        if cols.len() < 4
            || cols[0] != "date"
            || cols[1] != "bid_unit_id"
            || cols[cols.len() - 2] != "clicks"
            || cols[cols.len() - 1] != "revenue"
        {
            return Err(Error::Schema(format!(
                "header must be date,bid_unit_id,<features>,clicks,revenue; got {}",
                cols.join(",")
            )));
        }
        Self::new(&cols[2..cols.len() - 2])
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[FeatureDef] {
        &self.features
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|f| f.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    fn admit(&mut self, values: &[String]) {
        for (def, v) in self.features.iter_mut().zip(values) {
            if !def.categories.contains(v) {
                def.categories.insert(v.clone());
            }
        }
    }
}

/// One bid unit's aggregated activity on one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub date: NaiveDate,
    pub bid_unit_id: String,
    /// Category per schema feature, in schema order.
    pub features: Vec<String>,
    pub clicks: u64,
    pub revenue: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if end < start {
            return Err(Error::Config(format!("date range {start}..{end} is reversed")));
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d <= self.end
    }

    /// Number of calendar days, both ends included.
    pub fn days(&self) -> i64 {
        (self.end - self.start).num_days() + 1
    }

    pub fn iter_days(&self) -> impl Iterator<Item = NaiveDate> {
        let start = self.start;
        (0..self.days()).map(move |i| start + chrono::Duration::days(i))
    }
}

/// Immutable collection of observations sharing a schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    schema: FeatureSchema,
    observations: Vec<Observation>,
    date_range: Option<DateRange>,
}

impl Dataset {
    /// Validates observations and grows the schema's category domains.
    pub fn new(schema: FeatureSchema, observations: Vec<Observation>) -> Result<Self> {
        Self::build(schema, observations, false)
    }

    /// Like [`Dataset::new`] but admits negative revenue. Only simulated
    /// data with untruncated Gaussian noise needs this.
    pub fn new_allow_negative(schema: FeatureSchema, observations: Vec<Observation>) -> Result<Self> {
        Self::build(schema, observations, true)
    }

    fn build(
        mut schema: FeatureSchema,
        observations: Vec<Observation>,
        allow_negative: bool,
    ) -> Result<Self> {
        for (i, o) in observations.iter().enumerate() {
            validate(&schema, o, allow_negative).map_err(|e| match e {
                Error::InvalidObservation(m) => {
                    Error::InvalidObservation(format!("observation {i}: {m}"))
                }
                other => other,
            })?;
            schema.admit(&o.features);
        }
        let date_range = span(&observations);
        Ok(Self {
            schema,
            observations,
            date_range,
        })
    }

    pub fn empty(schema: FeatureSchema) -> Self {
        Self {
            schema,
            observations: Vec::new(),
            date_range: None,
        }
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Inclusive span of observed dates; `None` when empty.
    pub fn date_range(&self) -> Option<DateRange> {
        self.date_range
    }

    pub fn total_clicks(&self) -> u64 {
        self.observations.iter().map(|o| o.clicks).sum()
    }

    /// Observations whose date lies in `[from, to]`, keeping the schema.
    pub fn between(&self, from: NaiveDate, to: NaiveDate) -> Dataset {
        self.filter(|o| from <= o.date && o.date <= to)
    }

    pub fn filter(&self, mut keep: impl FnMut(&Observation) -> bool) -> Dataset {
        let observations: Vec<Observation> =
            self.observations.iter().filter(|o| keep(o)).cloned().collect();
        let date_range = span(&observations);
        Dataset {
            schema: self.schema.clone(),
            observations,
            date_range,
        }
    }

    pub fn bid_units(&self) -> BTreeSet<&str> {
        self.observations
            .iter()
            .map(|o| o.bid_unit_id.as_str())
            .collect()
    }
}

fn span(obs: &[Observation]) -> Option<DateRange> {
    let start = obs.iter().map(|o| o.date).min()?;
    let end = obs.iter().map(|o| o.date).max()?;
    Some(DateRange { start, end })
}

fn validate(schema: &FeatureSchema, o: &Observation, allow_negative: bool) -> Result<()> {
    if o.clicks == 0 {
        return Err(Error::InvalidObservation("clicks must be positive".into()));
    }
    if !o.revenue.is_finite() || (o.revenue < 0.0 && !allow_negative) {
        return Err(Error::InvalidObservation(format!(
            "revenue must be finite and non-negative, got {}",
            o.revenue
        )));
    }
    if o.features.len() != schema.len() {
        return Err(Error::InvalidObservation(format!(
            "expected {} feature values, got {}",
            schema.len(),
            o.features.len()
        )));
    }
    if o.bid_unit_id.is_empty() {
        return Err(Error::InvalidObservation("empty bid_unit_id".into()));
    }
    Ok(())
}

/// Partitions a dataset by the categories of one feature.
pub fn group_by(ds: &Dataset, feature: &str) -> Result<BTreeMap<String, Dataset>> {
    let idx = ds
        .schema
        .index_of(feature)
        .ok_or_else(|| Error::UnknownFeature(feature.to_string()))?;
    let mut parts: BTreeMap<String, Vec<Observation>> = BTreeMap::new();
    for o in &ds.observations {
        parts
            .entry(o.features[idx].clone())
            .or_default()
            .push(o.clone());
    }
    Ok(parts
        .into_iter()
        .map(|(cat, observations)| {
            let date_range = span(&observations);
            (
                cat,
                Dataset {
                    schema: ds.schema.clone(),
                    observations,
                    date_range,
                },
            )
        })
        .collect())
}

/// Result of reading a CSV file.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub dataset: Dataset,
    /// Rows discarded because they recorded zero clicks.
    pub dropped: usize,
}

/// Reads `date,bid_unit_id,<features>,clicks,revenue` rows.
pub fn ingest_csv(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<Ingested> {
    let file = std::fs::File::open(path)?;
    read_csv(file, schema)
}

/// Reads a CSV file, taking the schema from its header.
pub fn ingest_csv_infer(path: impl AsRef<Path>) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path.as_ref())
        .map_err(csv_err)?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_string)
        .collect();
    let schema = FeatureSchema::from_header(&header)?;
    read_records(rdr, &schema)
}

pub fn read_csv<R: Read>(reader: R, schema: &FeatureSchema) -> Result<Ingested> {
    let rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    read_records(rdr, schema)
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::Csv {
        line,
        message: e.to_string(),
    }
}

fn read_records<R: Read>(mut rdr: csv::Reader<R>, schema: &FeatureSchema) -> Result<Ingested> {
    let header: Vec<String> = rdr
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let expected = csv_header(schema);
    if header != expected {
        return Err(Error::Csv {
            line: 1,
            message: format!(
                "header mismatch: expected `{}`, got `{}`",
                expected.join(","),
                header.join(",")
            ),
        });
    }

    let k = schema.len();
    let mut observations = Vec::new();
    let mut dropped = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let bad = |message: String| Error::Csv { line, message };
        if rec.len() != k + 4 {
            return Err(bad(format!("expected {} fields, got {}", k + 4, rec.len())));
        }
        let date = NaiveDate::parse_from_str(rec[0].trim(), "%Y-%m-%d")
            .map_err(|e| bad(format!("bad date `{}`: {e}", &rec[0])))?;
        let bid_unit_id = rec[1].trim().to_string();
        if bid_unit_id.is_empty() {
            return Err(bad("empty bid_unit_id".into()));
        }
        let features: Vec<String> = (0..k).map(|j| rec[2 + j].trim().to_string()).collect();
        let clicks: i64 = rec[k + 2]
            .trim()
            .parse()
            .map_err(|e| bad(format!("bad clicks `{}`: {e}", &rec[k + 2])))?;
        if clicks < 0 {
            return Err(bad(format!("negative clicks {clicks}")));
        }
        let revenue: f64 = rec[k + 3]
            .trim()
            .parse()
            .map_err(|e| bad(format!("bad revenue `{}`: {e}", &rec[k + 3])))?;
        if !revenue.is_finite() || revenue < 0.0 {
            return Err(bad(format!("revenue must be finite and non-negative, got {revenue}")));
        }
        if clicks == 0 {
            dropped += 1;
            continue;
        }
        observations.push(Observation {
            date,
            bid_unit_id,
            features,
            clicks: clicks as u64,
            revenue,
        });
    }
    Ok(Ingested {
        dataset: Dataset::new(schema.clone(), observations)?,
        dropped,
    })
}

pub fn csv_header(schema: &FeatureSchema) -> Vec<String> {
    let mut h = vec!["date".to_string(), "bid_unit_id".to_string()];
    h.extend(schema.names().map(str::to_string));
    h.push("clicks".into());
    h.push("revenue".into());
    h
}

pub fn write_csv<W: Write>(ds: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let to_err = |e: csv::Error| Error::Csv {
        line: 0,
        message: e.to_string(),
    };
    w.write_record(csv_header(&ds.schema)).map_err(to_err)?;
    for o in &ds.observations {
        let mut rec = Vec::with_capacity(o.features.len() + 4);
        rec.push(o.date.format("%Y-%m-%d").to_string());
        rec.push(o.bid_unit_id.clone());
        rec.extend(o.features.iter().cloned());
        rec.push(o.clicks.to_string());
        rec.push(o.revenue.to_string());
        w.write_record(&rec).map_err(to_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Clicks and revenue of one unit on one day, zero-click days included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitDay {
    pub clicks: u64,
    pub revenue: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsityStats {
    /// Fraction of unit-days with zero clicks.
    pub x_sparsity: f64,
    /// Fraction of clicked unit-days with zero revenue; `None` when no
    /// unit-day was clicked.
    pub y_sparsity: Option<f64>,
    pub unit_days: u64,
    pub clicked_unit_days: u64,
}

pub fn sparsity(raw_unit_days: &[UnitDay]) -> SparsityStats {
    let unit_days = raw_unit_days.len() as u64;
    let clicked = raw_unit_days.iter().filter(|d| d.clicks > 0).count() as u64;
    let zero_rev = raw_unit_days
        .iter()
        .filter(|d| d.clicks > 0 && d.revenue == 0.0)
        .count() as u64;
    let x_sparsity = if unit_days == 0 {
        0.0
    } else {
        (unit_days - clicked) as f64 / unit_days as f64
    };
    let y_sparsity = (clicked > 0).then(|| zero_rev as f64 / clicked as f64);
    SparsityStats {
        x_sparsity,
        y_sparsity,
        unit_days,
        clicked_unit_days: clicked,
    }
}

/// Expands a dataset into the full unit × day table over `range`, filling
/// days without a record with zero clicks.
pub fn unit_day_table(ds: &Dataset, range: DateRange) -> Vec<UnitDay> {
    let mut by_key: HashMap<(&str, NaiveDate), UnitDay> = HashMap::new();
    for o in ds.observations() {
        let e = by_key
            .entry((o.bid_unit_id.as_str(), o.date))
            .or_insert(UnitDay {
                clicks: 0,
                revenue: 0.0,
            });
        e.clicks += o.clicks;
        e.revenue += o.revenue;
    }
    let units = ds.bid_units();
    let mut out = Vec::with_capacity(units.len() * range.days().max(0) as usize);
    for u in &units {
        for d in range.iter_days() {
            out.push(by_key.get(&(*u, d)).copied().unwrap_or(UnitDay {
                clicks: 0,
                revenue: 0.0,
            }));
        }
    }
    out
}

pub fn day_of_week_label(date: NaiveDate) -> String {
    date.weekday().to_string()
}

/// Columnar, integer-coded copy of a dataset used by the training code.
#[derive(Debug, Clone)]
pub struct Columns {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// `codes[f][row]` is the index of the row's category in `categories[f]`.
    pub codes: Vec<Vec<u32>>,
    /// Sorted observed categories per feature.
    pub categories: Vec<Vec<String>>,
    pub unit: Vec<u32>,
    /// Sorted observed bid unit ids.
    pub units: Vec<String>,
}

impl Columns {
    pub fn from_dataset(ds: &Dataset) -> Self {
        let obs = ds.observations();
        let k = ds.schema().len();
        let mut categories = Vec::with_capacity(k);
        let mut codes = Vec::with_capacity(k);
        for f in 0..k {
            let cats: BTreeSet<&str> = obs.iter().map(|o| o.features[f].as_str()).collect();
            let lookup: HashMap<&str, u32> =
                cats.iter().enumerate().map(|(i, c)| (*c, i as u32)).collect();
            codes.push(obs.iter().map(|o| lookup[o.features[f].as_str()]).collect());
            categories.push(cats.into_iter().map(str::to_string).collect());
        }
        let units: BTreeSet<&str> = obs.iter().map(|o| o.bid_unit_id.as_str()).collect();
        let lookup: HashMap<&str, u32> =
            units.iter().enumerate().map(|(i, u)| (*u, i as u32)).collect();
        Self {
            x: obs.iter().map(|o| o.clicks as f64).collect(),
            y: obs.iter().map(|o| o.revenue).collect(),
            codes,
            categories,
            unit: obs.iter().map(|o| lookup[o.bid_unit_id.as_str()]).collect(),
            units: units.into_iter().map(str::to_string).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn obs(unit: &str, cat: &str, clicks: u64, revenue: f64) -> Observation {
        Observation {
            date: d("2017-01-01"),
            bid_unit_id: unit.into(),
            features: vec![cat.into()],
            clicks,
            revenue,
        }
    }

    #[test]
    fn ingest_drops_zero_click_rows() {
        let csv = "date,bid_unit_id,A,clicks,revenue\n\
                   2017-01-01,bu1,a1,3,1.5\n\
                   2017-01-02,bu1,a1,0,0\n\
                   2017-01-03,bu2,a2,1,0\n";
        let schema = FeatureSchema::new(&["A"]).unwrap();
        let got = read_csv(csv.as_bytes(), &schema).unwrap();
        assert_eq!(got.dataset.len(), 2);
        assert_eq!(got.dropped, 1);
    }

    #[test]
    fn ingest_empty_file_with_header() {
        let schema = FeatureSchema::new(&["A"]).unwrap();
        let got = read_csv("date,bid_unit_id,A,clicks,revenue\n".as_bytes(), &schema).unwrap();
        assert!(got.dataset.is_empty());
        assert_eq!(got.dataset.date_range(), None);
    }

    #[test]
    fn ingest_maps_fields() {
        let schema = FeatureSchema::new(&["A"]).unwrap();
        let csv = "date,bid_unit_id,A,clicks,revenue\n2017-01-01,bu1,a3,5,12.5\n";
        let got = read_csv(csv.as_bytes(), &schema).unwrap();
        let o = &got.dataset.observations()[0];
        assert_eq!(o.clicks, 5);
        assert_eq!(o.revenue, 12.5);
        assert_eq!(o.features, vec!["a3".to_string()]);
        assert_eq!(o.date, d("2017-01-01"));
        assert!(got.dataset.schema().features()[0].categories.contains("a3"));
    }

    #[test]
    fn ingest_errors_name_the_line() {
        let schema = FeatureSchema::new(&["A"]).unwrap();
        let csv = "date,bid_unit_id,A,clicks,revenue\n2017-01-01,bu1,a,1,1\n2017-01-02,bu1,a,x,1\n";
        match read_csv(csv.as_bytes(), &schema) {
            Err(Error::Csv { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let neg = "date,bid_unit_id,A,clicks,revenue\n2017-01-01,bu1,a,-1,1\n";
        assert!(matches!(read_csv(neg.as_bytes(), &schema), Err(Error::Csv { line: 2, .. })));
        let negrev = "date,bid_unit_id,A,clicks,revenue\n2017-01-01,bu1,a,1,-0.5\n";
        assert!(read_csv(negrev.as_bytes(), &schema).is_err());
        let bad_header = "date,bid_unit_id,B,clicks,revenue\n";
        assert!(read_csv(bad_header.as_bytes(), &schema).is_err());
    }

    #[test]
    fn schema_rejects_duplicates_and_reserved() {
        assert!(FeatureSchema::new(&["A", "A"]).is_err());
        assert!(FeatureSchema::new(&["clicks"]).is_err());
        let s = FeatureSchema::from_header(&["date", "bid_unit_id", "A", "B", "clicks", "revenue"])
            .unwrap();
        assert_eq!(s.names().collect::<Vec<_>>(), vec!["A", "B"]);
    }

    #[test]
    fn sparsity_counts() {
        let mut days = vec![UnitDay { clicks: 0, revenue: 0.0 }; 9];
        days.push(UnitDay { clicks: 2, revenue: 0.0 });
        let s = sparsity(&days);
        assert_eq!(s.x_sparsity, 0.9);
        assert_eq!(s.y_sparsity, Some(1.0));

        let all = vec![UnitDay { clicks: 1, revenue: 1.0 }; 5];
        let s = sparsity(&all);
        assert_eq!((s.x_sparsity, s.y_sparsity), (0.0, Some(0.0)));

        // 100 unit-days: 90 unclicked; of the 10 clicked, 2 earned revenue.
        let mut t = vec![UnitDay { clicks: 0, revenue: 0.0 }; 90];
        t.extend(vec![UnitDay { clicks: 3, revenue: 0.0 }; 8]);
        t.extend(vec![UnitDay { clicks: 3, revenue: 4.0 }; 2]);
        let s = sparsity(&t);
        let x_oracle = t.iter().filter(|d| d.clicks == 0).count() as f64 / 100.0;
        let clicked: Vec<_> = t.iter().filter(|d| d.clicks > 0).collect();
        let y_oracle =
            clicked.iter().filter(|d| d.revenue == 0.0).count() as f64 / clicked.len() as f64;
        assert_eq!(s.x_sparsity, x_oracle);
        assert_eq!(s.y_sparsity, Some(y_oracle));
        assert!((s.x_sparsity - 0.90).abs() < 1e-15);
        assert!((s.y_sparsity.unwrap() - 0.80).abs() < 1e-15);
    }

    #[test]
    fn sparsity_undefined_without_clicks() {
        let s = sparsity(&[UnitDay { clicks: 0, revenue: 0.0 }; 4]);
        assert_eq!(s.x_sparsity, 1.0);
        assert_eq!(s.y_sparsity, None);
    }

    #[test]
    fn sparsity_exact_at_scale() {
        // 10^6 unit-days at the 0.9 / 0.98 regime.
        let n = 1_000_000usize;
        let mut t = Vec::with_capacity(n);
        t.extend(std::iter::repeat_n(UnitDay { clicks: 0, revenue: 0.0 }, 900_000));
        t.extend(std::iter::repeat_n(UnitDay { clicks: 1, revenue: 0.0 }, 98_000));
        t.extend(std::iter::repeat_n(UnitDay { clicks: 1, revenue: 1.0 }, 2_000));
        let s = sparsity(&t);
        assert_eq!(s.x_sparsity, 900_000.0 / 1_000_000.0);
        assert_eq!(s.y_sparsity, Some(98_000.0 / 100_000.0));
    }

    #[test]
    fn unit_day_table_fills_gaps() {
        let schema = FeatureSchema::new(&["A"]).unwrap();
        let ds = Dataset::new(schema, vec![obs("u1", "a", 2, 0.0), obs("u2", "a", 1, 3.0)]).unwrap();
        let range = DateRange::new(d("2017-01-01"), d("2017-01-05")).unwrap();
        let table = unit_day_table(&ds, range);
        assert_eq!(table.len(), 10);
        let s = sparsity(&table);
        assert_eq!(s.x_sparsity, 0.8);
        assert_eq!(s.y_sparsity, Some(0.5));
    }

    #[test]
    fn group_by_partitions() {
        let schema = FeatureSchema::new(&["A"]).unwrap();
        let ds = Dataset::new(
            schema.clone(),
            vec![
                obs("u1", "a", 1, 1.0),
                obs("u2", "b", 1, 1.0),
                obs("u3", "a", 2, 1.0),
                obs("u4", "b", 3, 0.0),
            ],
        )
        .unwrap();
        let parts = group_by(&ds, "A").unwrap();
        assert_eq!(parts.len(), 2);
        assert_eq!(parts.values().map(Dataset::len).sum::<usize>(), 4);

        let single = Dataset::new(schema.clone(), vec![obs("u1", "a", 1, 1.0), obs("u2", "a", 2, 0.0)])
            .unwrap();
        let parts = group_by(&single, "A").unwrap();
        assert_eq!(parts.len(), 1);
        assert_eq!(parts["a"], single);

        assert!(group_by(&Dataset::empty(schema.clone()), "A").unwrap().is_empty());
        assert!(matches!(group_by(&ds, "Z"), Err(Error::UnknownFeature(_))));
    }

    #[test]
    fn dataset_rejects_zero_clicks() {
        let schema = FeatureSchema::new(&["A"]).unwrap();
        assert!(Dataset::new(schema, vec![obs("u", "a", 0, 0.0)]).is_err());
    }
}
