//! Payload-to-value conversion: number scrubbing, historical series,
//! grouped values, NA tokens and text cleanup.

use std::sync::LazyLock;

use regex::Regex;

use crate::table::CellValue;

const NA_TOKENS: [&str; 5] = ["n/a", "na", "na%", "nan", "$na"];

static NOTE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\bnote\b").unwrap());
static NUMBER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(-)?(\d[\d,]*(?:\.\d+)?|\.\d+)").unwrap());
static MAGNITUDE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(million|billion|trillion)\b").unwrap());
static YEAR_PAREN: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\(([^()]*?\D)?(?P<year>1[89]\d{2}|20\d{2})(\D[^()]*)?\)").unwrap()
});
static RANK_ANCHOR: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?s)<a\b[^>]*rankorder[^>]*>.*?</a>").unwrap());
static TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)<[^>]*(?:>|$)").unwrap());
static SPACE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\s+").unwrap());

/// True for the placeholder strings the source uses where no data exist.
pub fn is_na_token(s: &str) -> bool {
    let t = s.trim().to_lowercase();
    NA_TOKENS.contains(&t.as_str())
}

/// Text and Label cells holding an NA token become Missing.
pub fn normalize_na(v: CellValue) -> CellValue {
    match &v {
        CellValue::Text(s) | CellValue::Label(s) if is_na_token(s) => CellValue::Missing,
        _ => v,
    }
}

/// Cuts the text at the first standalone word "note".
pub fn strip_note(text: &str) -> &str {
    match NOTE.find(text) {
        Some(m) => &text[..m.start()],
        None => text,
    }
}

fn decode_entities(s: &str) -> String {
    s.replace("&nbsp;", " ")
        .replace("&quot;", "\"")
        .replace("&#39;", "'")
        .replace("&#039;", "'")
        .replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&amp;", "&")
}

/// Removes country-ranking anchors and every remaining tag, decodes the
/// common entities and collapses whitespace.
pub fn clean_text(fragment: &str) -> String {
    let no_rank = RANK_ANCHOR.replace_all(fragment, " ");
    let no_rank = no_rank.replace("country comparison to the world:", " ");
    let no_tags = TAG.replace_all(&no_rank, " ");
    let decoded = decode_entities(&no_tags);
    SPACE.replace_all(decoded.trim(), " ").into_owned()
}

/// Title text: cleaned, with a trailing colon dropped.
pub fn clean_title(fragment: &str) -> String {
    let t = clean_text(fragment);
    t.trim_end_matches(':').trim().to_string()
}

/// A parsed number token and its byte span in the source text.
pub(crate) struct NumberToken {
    pub value: f64,
    pub start: usize,
    pub end: usize,
}

/// All number tokens in `text`, each scaled by an adjoining magnitude word.
/// A hyphen counts as a sign only when it does not follow a digit, so
/// "2.5-3.0" reads as two positive numbers.
pub(crate) fn number_tokens(text: &str) -> Vec<NumberToken> {
    let bytes = text.as_bytes();
    NUMBER
        .captures_iter(text)
        .filter_map(|cap| {
            let whole = cap.get(0)?;
            let digits = cap.get(2)?;
            let negative = cap.get(1).is_some()
                && !(whole.start() > 0 && bytes[whole.start() - 1].is_ascii_digit());
            let plain: String = digits.as_str().chars().filter(|c| *c != ',').collect();
            let exp = MAGNITUDE
                .captures(&text[whole.end()..])
                .map(|m| match &m[1] {
                    "million" => 6,
                    "billion" => 9,
                    _ => 12,
                })
                .unwrap_or(0);
            let value: f64 = format!("{}{plain}e{exp}", if negative { "-" } else { "" })
                .parse()
                .ok()?;
            value.is_finite().then_some(NumberToken {
                value,
                start: whole.start(),
                end: whole.end(),
            })
        })
        .collect()
}

/// Removes parenthetical date stamps such as "(2017 est.)".
fn strip_year_stamps(text: &str) -> String {
    YEAR_PAREN.replace_all(text, " ").into_owned()
}

/// First number in a payload after note-stripping, with million / billion /
/// trillion applied. Currency signs, commas, percent signs and units are
/// ignored. Returns Missing when no number survives.
pub fn scrub_number(text: &str) -> CellValue {
    let text = strip_note(text);
    if is_na_token(text) {
        return CellValue::Missing;
    }
    let text = strip_year_stamps(text);
    match number_tokens(&text).first() {
        Some(tok) => CellValue::Number(tok.value),
        None => CellValue::Missing,
    }
}

/// (year, value text) pairs of a year-stamped series, in document order.
pub fn historical_pairs(text: &str) -> Vec<(u32, String)> {
    let text = strip_note(text);
    let mut pairs = Vec::new();
    let mut prev_end = 0;
    for cap in YEAR_PAREN.captures_iter(text) {
        let m = cap.get(0).unwrap();
        let year: u32 = cap["year"].parse().unwrap();
        let value = text[prev_end..m.start()].trim().to_string();
        pairs.push((year, value));
        prev_end = m.end();
    }
    pairs
}

/// Number of year-stamped entries whose value carries a digit.
pub fn count_numeric_year_entries(text: &str) -> usize {
    historical_pairs(text)
        .iter()
        .filter(|(_, v)| v.bytes().any(|b| b.is_ascii_digit()))
        .count()
}

/// Value of the most recent year; on equal years the later entry wins.
pub fn latest_historical(text: &str) -> CellValue {
    let pairs = historical_pairs(text);
    let best = pairs
        .iter()
        .filter(|(_, v)| v.bytes().any(|b| b.is_ascii_digit()))
        .fold(None::<&(u32, String)>, |best, p| match best {
            Some(b) if b.0 > p.0 => Some(b),
            _ => Some(p),
        });
    match best {
        Some((_, v)) => scrub_number(v),
        None => CellValue::Missing,
    }
}

pub const GROUP_MARKER: &str = "subfield-name\">";

/// Splits a grouped payload into (group name, value) pairs.
pub fn split_grouped(payload: &str) -> Vec<(String, CellValue)> {
    payload
        .split(GROUP_MARKER)
        .skip(1)
        .filter_map(|piece| {
            let (name, rest) = piece.split_once('<').unwrap_or((piece, ""));
            let name = clean_title(name);
            if name.is_empty() {
                return None;
            }
            let rest = rest.split_once('>').map(|(_, r)| r).unwrap_or(rest);
            Some((name, scrub_number(&clean_text(rest))))
        })
        .collect()
}

/// Lowercase hyphen slug for category and field titles.
pub fn slugify(title: &str) -> String {
    let mut out = String::with_capacity(title.len());
    let mut pending_dash = false;
    for ch in title.chars().flat_map(char::to_lowercase) {
        if ch.is_alphanumeric() {
            if pending_dash && !out.is_empty() {
                out.push('-');
            }
            pending_dash = false;
            out.push(ch);
        } else {
            pending_dash = true;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn num(v: f64) -> CellValue {
        CellValue::Number(v)
    }

    #[test]
    fn scrub_examples() {
        assert_eq!(scrub_number("2.3 billion"), num(2.3e9));
        assert_eq!(scrub_number("180"), num(180.0));
        // 1,234.5 -> 1234.5; "million" -> x1e6; note clause dropped.
        assert_eq!(
            scrub_number("1,234.5 million note: estimate"),
            num(1.2345e9)
        );
        assert_eq!(scrub_number("$2.463 trillion (2017 est.)"), num(2.463e12));
        assert_eq!(scrub_number("180 sq km"), num(180.0));
        assert_eq!(scrub_number("-0.5% (2018 est.)"), num(-0.5));
        assert_eq!(scrub_number("2.5-3.0"), num(2.5));
        assert_eq!(scrub_number("na"), CellValue::Missing);
        assert_eq!(scrub_number("na (2018)"), CellValue::Missing);
        assert_eq!(scrub_number("note: 12 islands"), CellValue::Missing);
        assert_eq!(scrub_number("none"), CellValue::Missing);
        assert_eq!(scrub_number("notes 5"), num(5.0));
    }

    #[test]
    fn historical_latest() {
        assert_eq!(
            latest_historical("10 (2016 est.) 12 (2018 est.)"),
            num(12.0)
        );
        assert_eq!(
            latest_historical("12 (2018 est.) 10 (2016 est.)"),
            num(12.0)
        );
        assert_eq!(latest_historical("$3.2 billion (2017)"), num(3.2e9));
        // Same year twice: the later entry wins.
        assert_eq!(
            latest_historical("7 (2017 est.) 9 (2017 est.) 3 (2015 est.)"),
            num(9.0)
        );
        assert_eq!(latest_historical("no series here"), CellValue::Missing);
        assert_eq!(
            count_numeric_year_entries("10 (2016) 12 (2018) note: x (2019)"),
            2
        );
        assert_eq!(latest_historical("5 (fy2016/17) 6 (fy2015/16)"), num(5.0));
    }

    #[test]
    fn grouped_split() {
        let payload = r#"<span class="subfield-name">oil:</span> 5 <span class="subfield-name">gas:</span> 7 <span class="subfield-name">coal:</span> na"#;
        let groups = split_grouped(payload);
        assert_eq!(
            groups,
            vec![
                ("oil".to_string(), num(5.0)),
                ("gas".to_string(), num(7.0)),
                ("coal".to_string(), CellValue::Missing),
            ]
        );
    }

    #[test]
    fn na_normalization() {
        assert_eq!(
            normalize_na(CellValue::Text("na%".into())),
            CellValue::Missing
        );
        assert_eq!(
            normalize_na(CellValue::Text(" N/A ".into())),
            CellValue::Missing
        );
        assert_eq!(
            normalize_na(CellValue::Label("$na".into())),
            CellValue::Missing
        );
        assert_eq!(
            normalize_na(CellValue::Text("nauru".into())),
            CellValue::Text("nauru".into())
        );
        assert_eq!(normalize_na(CellValue::Number(0.0)), CellValue::Number(0.0));
    }

    #[test]
    fn text_cleanup() {
        let raw = r#"<p>most fertile&nbsp;land</p> country comparison to the world: <a href="../rankorder/2147rank.html#aa">216</a>"#;
        assert_eq!(clean_text(raw), "most fertile land");
        assert_eq!(clean_title(" total: "), "total");
        assert_eq!(slugify("People and Society"), "people-and-society");
        assert_eq!(slugify("HIV/AIDS - deaths"), "hiv-aids-deaths");
        assert_eq!(
            slugify("Environment - international agreements"),
            "environment-international-agreements"
        );
    }
}
