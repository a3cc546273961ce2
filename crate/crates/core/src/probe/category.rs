//! Acoustic feature categories and the editable feature → category map.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Category {
    Energy,
    Frequency,
    Spectral,
    Temporal,
}

impl Category {
    /// Reporting order.
    pub const ALL: [Category; 4] = [Category::Energy, Category::Frequency, Category::Spectral, Category::Temporal];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Energy => "Energy",
            Category::Frequency => "Frequency",
            Category::Spectral => "Spectral",
            Category::Temporal => "Temporal",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s.trim().to_ascii_lowercase().as_str() {
            "energy" | "energy/amplitude" | "energy / amplitude" => Ok(Category::Energy),
            "frequency" => Ok(Category::Frequency),
            "spectral" | "spectral balance" => Ok(Category::Spectral),
            "temporal" => Ok(Category::Temporal),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CategoryMap {
    mapping: BTreeMap<String, Category>,
}

impl CategoryMap {
    pub fn new(mapping: BTreeMap<String, Category>) -> Self {
        Self { mapping }
    }

    pub fn get(&self, feature: &str) -> Option<Category> {
        self.mapping.get(feature).copied()
    }

    pub fn require(&self, feature: &str) -> Result<Category> {
        self.get(feature)
            .ok_or_else(|| Error::UnmappedFeature(feature.to_string()))
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Category)> {
        self.mapping.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Features from `names` that have no mapping, in input order.
    pub fn missing<'a, S: AsRef<str>>(&self, names: &'a [S]) -> Vec<&'a str> {
        names
            .iter()
            .map(AsRef::as_ref)
            .filter(|n| !self.mapping.contains_key(*n))
            .collect()
    }
}

/// Parses a `feature_name,category` CSV. Line numbers in errors count data
/// rows from 1.
pub fn read_category_map<R: Read>(reader: R) -> Result<CategoryMap> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    for (i, expected) in ["feature_name", "category"].iter().enumerate() {
        if headers.get(i).map(str::trim) != Some(*expected) {
            return Err(Error::MissingColumn((*expected).to_string()));
        }
    }
    let mut mapping = BTreeMap::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let line = i + 1;
        if record.len() != 2 {
            return Err(Error::InvalidRow {
                row: line,
                message: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let feature = record[0].trim();
        if feature.is_empty() {
            return Err(Error::InvalidRow {
                row: line,
                message: "empty feature_name".into(),
            });
        }
        let category: Category = record[1].parse().map_err(|_| Error::UnknownCategory {
            line,
            category: record[1].to_string(),
        })?;
        if mapping.insert(feature.to_string(), category).is_some() {
            return Err(Error::InvalidRow {
                row: line,
                message: format!("feature `{feature}` mapped twice"),
            });
        }
    }
    Ok(CategoryMap { mapping })
}

pub fn load_category_map(path: impl AsRef<Path>) -> Result<CategoryMap> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_category_map(std::io::BufReader::new(file))
}

pub fn write_category_map<W: Write>(map: &CategoryMap, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["feature_name", "category"])?;
    for (name, cat) in map.iter() {
        wtr.write_record([name, cat.as_str()])?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Category map for the 88 eGeMAPSv02 functionals, with columns prefixed
/// `egemaps.`.
pub const EGEMAPS_V02_CATEGORIES: &str = include_str!("../../data/egemaps_v02_categories.csv");

pub fn egemaps_v02_category_map() -> CategoryMap {
    read_category_map(EGEMAPS_V02_CATEGORIES.as_bytes()).expect("bundled category map is valid")
}
