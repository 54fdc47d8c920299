//! Column-name grammar.
//!
//! A data column name reads
//! `<dtype> [(MAPE): <percent>] <category-field>[ <subfield>][ hist]`,
//! where single spaces separate the parts. Hyphens and spaces may also occur
//! inside category, field and subfield titles, so the boundary between the
//! body and the subfield is taken at the first space after the prefix.
//! Three metadata names ("Country Code", "txt Country Name", "lbl Region")
//! sit outside that grammar.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NameError {
    #[error("empty column name")]
    Empty,
    #[error("unknown dtype tag in column name {0:?}")]
    UnknownDtype(String),
    #[error("malformed (MAPE) annotation in column name {0:?}")]
    MalformedMape(String),
    #[error("column name {0:?} has no category-field body")]
    MissingBody(String),
}

/// Data-kind tag leading every non-metadata column name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    Txt,
    Num,
    Lbl,
    Enc,
    Sum,
    Amount,
}

impl Dtype {
    pub const ALL: [Dtype; 6] = [
        Dtype::Txt,
        Dtype::Num,
        Dtype::Lbl,
        Dtype::Enc,
        Dtype::Sum,
        Dtype::Amount,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Dtype::Txt => "txt",
            Dtype::Num => "num",
            Dtype::Lbl => "lbl",
            Dtype::Enc => "enc",
            Dtype::Sum => "sum",
            Dtype::Amount => "amount",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Dtype> {
        Dtype::ALL.into_iter().find(|d| d.tag() == tag)
    }

    /// num, sum and amount columns hold numbers.
    pub fn is_numeric(self) -> bool {
        matches!(self, Dtype::Num | Dtype::Sum | Dtype::Amount)
    }
}

impl fmt::Display for Dtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// The imputation error annotation, kept as written so names round-trip.
#[derive(Debug, Clone, PartialEq)]
pub struct Mape {
    text: String,
    percent: f64,
}

impl Mape {
    /// From a fraction (0.0105 means 1.05%), rendered with two decimals.
    pub fn from_fraction(fraction: f64) -> Mape {
        let text = format!("{:.2}", fraction * 100.0);
        let percent = text.parse().unwrap_or(fraction * 100.0);
        Mape { text, percent }
    }

    pub fn percent(&self) -> f64 {
        self.percent
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

impl FromStr for Mape {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.is_empty() || s.starts_with('+') {
            return Err(());
        }
        let percent: f64 = s.parse().map_err(|_| ())?;
        if !percent.is_finite() || percent < 0.0 {
            return Err(());
        }
        Ok(Mape {
            text: s.to_string(),
            percent,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetaColumn {
    CountryCode,
    CountryName,
    Region,
}

impl MetaColumn {
    pub fn as_str(self) -> &'static str {
        match self {
            MetaColumn::CountryCode => "Country Code",
            MetaColumn::CountryName => "txt Country Name",
            MetaColumn::Region => "lbl Region",
        }
    }

    fn from_name(s: &str) -> Option<MetaColumn> {
        [
            MetaColumn::CountryCode,
            MetaColumn::CountryName,
            MetaColumn::Region,
        ]
        .into_iter()
        .find(|m| m.as_str() == s)
    }
}

/// Parsed column name.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnName {
    pub dtype: Dtype,
    pub mape: Option<Mape>,
    pub body: String,
    pub subfield: Option<String>,
    pub hist: bool,
    meta: Option<MetaColumn>,
}

impl ColumnName {
    pub fn new(dtype: Dtype, body: impl Into<String>, subfield: Option<String>) -> ColumnName {
        ColumnName {
            dtype,
            mape: None,
            body: body.into(),
            subfield,
            hist: false,
            meta: None,
        }
    }

    pub fn meta(meta: MetaColumn) -> ColumnName {
        let (dtype, body) = match meta {
            MetaColumn::CountryCode => (Dtype::Txt, "Country Code"),
            MetaColumn::CountryName => (Dtype::Txt, "Country Name"),
            MetaColumn::Region => (Dtype::Lbl, "Region"),
        };
        ColumnName {
            dtype,
            mape: None,
            body: body.to_string(),
            subfield: None,
            hist: false,
            meta: Some(meta),
        }
    }

    pub fn with_hist(mut self, hist: bool) -> ColumnName {
        self.hist = hist;
        self
    }

    pub fn with_mape(mut self, mape: Option<Mape>) -> ColumnName {
        self.mape = mape;
        self
    }

    pub fn with_dtype(mut self, dtype: Dtype) -> ColumnName {
        self.dtype = dtype;
        self
    }

    pub fn meta_kind(&self) -> Option<MetaColumn> {
        self.meta
    }

    pub fn is_meta(&self) -> bool {
        self.meta.is_some()
    }

    pub fn parse(name: &str) -> Result<ColumnName, NameError> {
        if name.is_empty() {
            return Err(NameError::Empty);
        }
        if let Some(meta) = MetaColumn::from_name(name) {
            return Ok(ColumnName::meta(meta));
        }
        let (tag, mut rest) = name
            .split_once(' ')
            .ok_or_else(|| match Dtype::from_tag(name) {
                Some(_) => NameError::MissingBody(name.to_string()),
                None => NameError::UnknownDtype(name.to_string()),
            })?;
        let dtype =
            Dtype::from_tag(tag).ok_or_else(|| NameError::UnknownDtype(name.to_string()))?;

        let mut mape = None;
        if let Some(after) = rest.strip_prefix("(MAPE):") {
            let after = after
                .strip_prefix(' ')
                .ok_or_else(|| NameError::MalformedMape(name.to_string()))?;
            let (number, remainder) = after.split_once(' ').unwrap_or((after, ""));
            let parsed: Mape = number
                .parse()
                .map_err(|_| NameError::MalformedMape(name.to_string()))?;
            mape = Some(parsed);
            rest = remainder;
        }

        let mut hist = false;
        if let Some(stripped) = rest.strip_suffix(" hist") {
            if !stripped.is_empty() {
                hist = true;
                rest = stripped;
            }
        }

        let (body, subfield) = match rest.split_once(' ') {
            Some((b, s)) => (b, Some(s.to_string())),
            None => (rest, None),
        };
        if body.is_empty() {
            return Err(NameError::MissingBody(name.to_string()));
        }
        Ok(ColumnName {
            dtype,
            mape,
            body: body.to_string(),
            subfield,
            hist,
            meta: None,
        })
    }

    /// Canonical form: format then parse. Generated names go through this so
    /// that the stored structure always equals what a reader would parse.
    pub fn canonical(self) -> Result<ColumnName, NameError> {
        ColumnName::parse(&self.to_string())
    }
}

impl fmt::Display for ColumnName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(meta) = self.meta {
            return f.write_str(meta.as_str());
        }
        f.write_str(self.dtype.tag())?;
        if let Some(mape) = &self.mape {
            write!(f, " (MAPE): {}", mape.as_str())?;
        }
        write!(f, " {}", self.body)?;
        if let Some(sub) = &self.subfield {
            write!(f, " {sub}")?;
        }
        if self.hist {
            f.write_str(" hist")?;
        }
        Ok(())
    }
}

impl FromStr for ColumnName {
    type Err = NameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ColumnName::parse(s)
    }
}
