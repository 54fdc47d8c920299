//! Marker-based splitting of an entity page into categories, fields and
//! subfields.
//!
//! Splitting is plain substring search on the lowercased page; no DOM is
//! built. Expected layout:
//!
//! ```text
//! <div class="category ...">geography ::</div>                 category marker + title
//!   <div id="field-anchor-geography-area" ...>area:</div>       field title element
//!   <div class='category_data subfield numeric'>                field marker + class word
//!     <span class="subfield-title">total:</span> 180 sq km      one subfield per "subfield-"
//!   </div>
//!   <div class='category_data subfield grouped'>                grouped payload
//!     <span class="subfield-name">oil:</span> 5 ...
//! ```
//!
//! Consecutive data blocks with no field title between them belong to the
//! same field.

use serde::{Deserialize, Serialize};

use super::values::{clean_title, count_numeric_year_entries, GROUP_MARKER};

pub const CATEGORY_MARKER: &str = "<div class=\"category ";
pub const CATEGORY_MARKER_ALT: &str = "<div class='category ";
pub const FIELD_MARKER: &str = "<div class='category_data subfield";
pub const FIELD_MARKER_ALT: &str = "<div class=\"category_data subfield";
pub const SUBFIELD_MARKER: &str = "subfield-";
pub const FIELD_TITLE_MARKER: &str = "field-anchor";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubfieldKind {
    Numerical,
    Textual,
    Historical,
    Grouped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubfieldRecord {
    pub entity: String,
    pub category: String,
    pub field: String,
    pub subfield_title: String,
    /// The subfield took the field's name because the field had no subfields.
    pub adopted: bool,
    pub kind: SubfieldKind,
    pub payload: String,
}

/// Splits on `primary`, falling back to `alt` when `primary` never occurs.
fn split_on<'a>(text: &'a str, primary: &str, alt: &str) -> (Vec<&'a str>, &'static str) {
    if text.contains(primary) {
        (text.split(primary).collect(), "primary")
    } else if text.contains(alt) {
        (text.split(alt).collect(), "alt")
    } else {
        (vec![text], "none")
    }
}

fn marker_for(text: &str) -> &'static str {
    if text.contains(FIELD_MARKER) {
        FIELD_MARKER
    } else {
        FIELD_MARKER_ALT
    }
}

/// `(title, fragment)` per category; text before the first marker is dropped.
pub fn split_categories(html: &str) -> Vec<(String, String)> {
    let (parts, _) = split_on(html, CATEGORY_MARKER, CATEGORY_MARKER_ALT);
    parts
        .into_iter()
        .skip(1)
        .enumerate()
        .map(|(i, part)| {
            let (class_rest, after) = part.split_once('>').unwrap_or((part, ""));
            let text = after.split('<').next().unwrap_or("");
            let text = text.split("::").next().unwrap_or("");
            let mut title = clean_title(text);
            if title.is_empty() {
                title = class_rest
                    .split(['"', '\''])
                    .next()
                    .unwrap_or("")
                    .trim()
                    .to_string();
            }
            if title.is_empty() {
                title = format!("category-{}", i + 1);
            }
            (title, part.to_string())
        })
        .collect()
}

/// Start of the last field-title element in `segment` and its title text.
fn last_field_title(segment: &str) -> Option<(usize, String)> {
    let pos = segment.rfind(FIELD_TITLE_MARKER)?;
    let start = segment[..pos].rfind('<').unwrap_or(pos);
    let after_tag = segment[pos..].split_once('>').map(|(_, r)| r)?;
    let content = after_tag.split("</div>").next().unwrap_or(after_tag);
    Some((start, clean_title(content)))
}

/// `(field title, fragment)` per field. Each fragment starts right after its
/// first field marker and keeps the markers of continuation blocks.
pub fn split_fields(category_fragment: &str) -> Vec<(String, String)> {
    let (parts, _) = split_on(category_fragment, FIELD_MARKER, FIELD_MARKER_ALT);
    if parts.len() < 2 {
        return Vec::new();
    }
    let marker = marker_for(category_fragment);
    let mut fields: Vec<(String, String)> = Vec::new();
    let mut pending_title = last_field_title(parts[0]).map(|(_, t)| t);
    for (i, part) in parts.iter().enumerate().skip(1) {
        let (body, next_title) = match last_field_title(part) {
            Some((start, title)) if i + 1 < parts.len() => (&part[..start], Some(title)),
            _ => (*part, None),
        };
        match pending_title.take() {
            Some(title) => {
                let title = if title.is_empty() {
                    format!("field-{i}")
                } else {
                    title
                };
                fields.push((title, body.to_string()));
            }
            None => match fields.last_mut() {
                Some((_, frag)) => {
                    frag.push_str(marker);
                    frag.push_str(body);
                }
                None => fields.push((format!("field-{i}"), body.to_string())),
            },
        }
        pending_title = next_title;
    }
    fields
}

/// Class word of a data block (`numeric`, `text`, `historic`, ...) and the
/// block content after the opening tag.
fn block_parts(block: &str) -> (String, &str) {
    let class_word = block
        .split(['\'', '"', '>'])
        .next()
        .unwrap_or("")
        .trim()
        .to_string();
    let content = block.split_once('>').map(|(_, c)| c).unwrap_or("");
    (class_word, content)
}

fn classify(class_word: &str, payload: &str) -> SubfieldKind {
    let text = super::values::clean_text(payload);
    if class_word != "text" && count_numeric_year_entries(&text) >= 2 {
        SubfieldKind::Historical
    } else if class_word.contains("numeric") || class_word.contains("historic") {
        SubfieldKind::Numerical
    } else {
        SubfieldKind::Textual
    }
}

/// Records for one field fragment (as produced by [`split_fields`]).
pub fn detect_subfields(
    entity: &str,
    category: &str,
    field: &str,
    field_fragment: &str,
) -> Vec<SubfieldRecord> {
    let marker = marker_for(field_fragment);
    let record = |title: &str, adopted: bool, kind: SubfieldKind, payload: &str| SubfieldRecord {
        entity: entity.to_string(),
        category: category.to_string(),
        field: field.to_string(),
        subfield_title: title.to_string(),
        adopted,
        kind,
        payload: payload.to_string(),
    };
    let mut out = Vec::new();
    for block in field_fragment.split(marker) {
        let (class_word, content) = block_parts(block);
        if content.trim().is_empty() {
            continue;
        }
        if content.contains(GROUP_MARKER) {
            out.push(record(field, true, SubfieldKind::Grouped, content));
            continue;
        }
        let pieces: Vec<&str> = content.split(SUBFIELD_MARKER).collect();
        if pieces.len() == 1 {
            out.push(record(field, true, classify(&class_word, content), content));
            continue;
        }
        for piece in &pieces[1..] {
            let after = piece.split_once('>').map(|(_, r)| r).unwrap_or("");
            let (title_raw, payload) = after.split_once('<').unwrap_or((after, ""));
            let payload = payload.split_once('>').map(|(_, r)| r).unwrap_or(payload);
            let title = clean_title(title_raw);
            let (title, adopted) = if title.is_empty() {
                (field.to_string(), true)
            } else {
                (title, false)
            };
            out.push(record(
                &title,
                adopted,
                classify(&class_word, payload),
                payload,
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn categories_split_on_marker() {
        let html = r#"<html>junk<div class="category sas_light">geography ::<span>aruba</span></div>a
<div class="category sas_light">economy ::</div>b"#;
        let cats = split_categories(html);
        assert_eq!(cats.len(), 2);
        assert_eq!(cats[0].0, "geography");
        assert_eq!(cats[1].0, "economy");
        assert!(split_categories("<p>nothing</p>").is_empty());
        let quoted = r#"<a title='<div class="category x">'>people ::</a>"#;
        assert_eq!(split_categories(quoted).len(), 1);
    }

    #[test]
    fn alt_quote_style_fallback() {
        let html = r#"<div class='category sas_light'>energy ::</div>"#;
        assert_eq!(split_categories(html)[0].0, "energy");
        let cat = r#"<div id="field-anchor-x" class="t">a:</div><div class="category_data subfield text">x</div>"#;
        let fields = split_fields(cat);
        assert_eq!(fields.len(), 1);
        assert_eq!(fields[0].0, "a");
    }

    #[test]
    fn fields_split_and_titles() {
        let cat = r#"energy ::</div>
<div id="field-anchor-energy-a" class="field-title">a:</div>
<div class='category_data subfield numeric'>1</div>
<div id="field-anchor-energy-b" class="field-title">b field:</div>
<div class='category_data subfield numeric'>2</div>
<div class='category_data subfield numeric'>3</div>
<div id="field-anchor-energy-c" class="field-title">c:</div>
<div class='category_data subfield text'>three</div>"#;
        let fields = split_fields(cat);
        let titles: Vec<_> = fields.iter().map(|f| f.0.as_str()).collect();
        assert_eq!(titles, ["a", "b field", "c"]);
        assert!(!fields[0].1.contains("field-anchor"));
        let recs = detect_subfields("xx", "energy", "b field", &fields[1].1);
        assert_eq!(recs.len(), 2);
        assert!(split_fields("").is_empty());
    }

    #[test]
    fn subfield_detection() {
        let no_sub = " numeric'>1,200 sq km</div>";
        let recs = detect_subfields("aa", "geography", "area", no_sub);
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].subfield_title, "area");
        assert!(recs[0].adopted);
        assert_eq!(recs[0].kind, SubfieldKind::Numerical);

        let two = r#" numeric'><span class="subfield-title">total:</span> 180 sq km <span class="subfield-title">land:</span> 170 sq km</div>"#;
        let recs = detect_subfields("aa", "geography", "area", two);
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].subfield_title, "land");
        assert!(!recs[1].adopted);

        let hist = " historic'>10 (2016 est.) 12 (2018 est.)</div>";
        assert_eq!(
            detect_subfields("aa", "e", "gdp", hist)[0].kind,
            SubfieldKind::Historical
        );

        let grouped = r#" grouped'><span class="subfield-name">oil:</span> 5 <span class="subfield-name">gas:</span> 7</div>"#;
        let recs = detect_subfields("aa", "e", "production", grouped);
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].kind, SubfieldKind::Grouped);

        let text = " text'>tropical (2015); hot (2016)</div>";
        assert_eq!(
            detect_subfields("aa", "g", "climate", text)[0].kind,
            SubfieldKind::Textual
        );
    }
}
