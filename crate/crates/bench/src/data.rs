//! Loaders for explicit-rating files, newline-delimited review dumps and
//! user profile text, plus writers for the on-disk dataset layout.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use hybridrec::semantic::Corpus;
use hybridrec::Interaction;
use serde_json::{json, Value};

use crate::error::{BenchError, Result};

/// Ratings at or above this become positive interactions.
pub const DEFAULT_THRESHOLD: f64 = 4.0;

/// Largest tolerated fraction of unparseable lines in a review dump.
pub const MAX_SKIPPED_FRACTION: f64 = 0.10;

pub const RATINGS_FILE: &str = "ratings.csv";
pub const ITEMS_FILE: &str = "items.jsonl";
pub const USERS_FILE: &str = "users.jsonl";

fn data_err(path: &str, line: usize, msg: impl Into<String>) -> BenchError {
    BenchError::Data { path: path.to_owned(), line, msg: msg.into() }
}

fn split_record(line: &str) -> Vec<&str> {
    if line.contains("::") {
        line.split("::").map(str::trim).collect()
    } else {
        line.split(',').map(str::trim).collect()
    }
}

/// Parses `user,item,rating,timestamp` or `user::item::rating::timestamp`
/// lines (delimiter detected per line). A non-numeric first line is taken as
/// a header. Blank lines are ignored.
pub fn parse_movielens(reader: impl BufRead, source: &str, threshold: f64) -> Result<Vec<Interaction>> {
    let mut out = Vec::new();
    let mut records = 0usize;
    for (n, line) in reader.lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| data_err(source, lineno, e.to_string()))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields = split_record(line);
        if records == 0 && n == 0 && fields.first().is_some_and(|f| f.parse::<u64>().is_err()) {
            continue;
        }
        if fields.len() != 4 {
            return Err(data_err(source, lineno, format!("expected 4 fields, found {}", fields.len())));
        }
        let user = fields[0].parse::<u64>().map_err(|_| data_err(source, lineno, format!("bad user id {:?}", fields[0])))?;
        let item = fields[1].parse::<u64>().map_err(|_| data_err(source, lineno, format!("bad item id {:?}", fields[1])))?;
        let rating = fields[2]
            .parse::<f64>()
            .ok()
            .filter(|r| r.is_finite())
            .ok_or_else(|| data_err(source, lineno, format!("bad rating {:?}", fields[2])))?;
        let timestamp =
            fields[3].parse::<i64>().map_err(|_| data_err(source, lineno, format!("bad timestamp {:?}", fields[3])))?;
        records += 1;
        if rating >= threshold {
            out.push(Interaction::new(user, item, rating, timestamp));
        }
    }
    if records == 0 {
        return Err(data_err(source, 0, "no rating records"));
    }
    Ok(out)
}

pub fn load_movielens(path: &Path, threshold: f64) -> Result<Vec<Interaction>> {
    let f = fs::File::open(path).map_err(|e| BenchError::io(path, e))?;
    parse_movielens(BufReader::new(f), &path.display().to_string(), threshold)
}

/// One review line in either the Amazon or the Yelp schema.
#[derive(Clone, Debug, PartialEq)]
pub struct Review {
    pub user: Option<String>,
    pub item: String,
    pub text: String,
    pub rating: Option<f64>,
    pub timestamp: Option<i64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReviewData {
    /// Item id to its review texts joined by a space, in file order.
    pub texts: BTreeMap<String, String>,
    pub ratings: BTreeMap<String, Vec<f64>>,
    pub reviews: Vec<Review>,
    pub lines: usize,
    pub skipped: usize,
}

fn id_field(obj: &serde_json::Map<String, Value>, keys: &[&str]) -> Option<String> {
    keys.iter().find_map(|k| match obj.get(*k)? {
        Value::String(s) if !s.is_empty() => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    })
}

fn parse_review(line: &str) -> Option<Review> {
    let v: Value = serde_json::from_str(line).ok()?;
    let obj = v.as_object()?;
    let item = id_field(obj, &["asin", "business_id"])?;
    let user = id_field(obj, &["reviewerID", "user_id"]);
    let text = ["reviewText", "text"].iter().find_map(|k| obj.get(*k)?.as_str()).unwrap_or("").to_owned();
    let rating = ["overall", "stars"].iter().find_map(|k| obj.get(*k)?.as_f64());
    let timestamp = obj.get("unixReviewTime").and_then(Value::as_i64);
    Some(Review { user, item, text, rating, timestamp })
}

/// Newline-delimited review objects. Lines that are not JSON objects with an
/// item id are skipped and counted; more than 10% skipped is an error.
pub fn parse_json_reviews(reader: impl BufRead, source: &str) -> Result<ReviewData> {
    let mut data = ReviewData::default();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| data_err(source, n + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        data.lines += 1;
        let Some(r) = parse_review(&line) else {
            data.skipped += 1;
            log::warn!("{source}:{}: skipped unparseable review", n + 1);
            continue;
        };
        let text = data.texts.entry(r.item.clone()).or_default();
        if !text.is_empty() && !r.text.is_empty() {
            text.push(' ');
        }
        text.push_str(&r.text);
        if let Some(x) = r.rating {
            data.ratings.entry(r.item.clone()).or_default().push(x);
        }
        data.reviews.push(r);
    }
    if data.lines == 0 {
        return Err(data_err(source, 0, "no review records"));
    }
    if data.skipped as f64 > MAX_SKIPPED_FRACTION * data.lines as f64 {
        return Err(data_err(source, 0, format!("{} of {} lines unparseable", data.skipped, data.lines)));
    }
    Ok(data)
}

pub fn load_json_reviews(path: &Path) -> Result<ReviewData> {
    let f = fs::File::open(path).map_err(|e| BenchError::io(path, e))?;
    parse_json_reviews(BufReader::new(f), &path.display().to_string())
}

/// `{"user_id": .., "text"|"bio": ..}` lines; same skip rule as reviews.
pub fn parse_user_texts(reader: impl BufRead, source: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let (mut lines, mut skipped) = (0usize, 0usize);
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| data_err(source, n + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        lines += 1;
        let parsed = serde_json::from_str::<Value>(&line).ok().and_then(|v| {
            let obj = v.as_object()?;
            let id = id_field(obj, &["user_id", "reviewerID"])?;
            let text = ["text", "bio"].iter().find_map(|k| obj.get(*k)?.as_str()).unwrap_or("").to_owned();
            Some((id, text))
        });
        match parsed {
            Some((id, text)) => {
                out.insert(id, text);
            }
            None => skipped += 1,
        }
    }
    if skipped as f64 > MAX_SKIPPED_FRACTION * lines.max(1) as f64 {
        return Err(data_err(source, 0, format!("{skipped} of {lines} lines unparseable")));
    }
    Ok(out)
}

fn numeric_keys(map: BTreeMap<String, String>, source: &str) -> Result<BTreeMap<u64, String>> {
    map.into_iter()
        .map(|(k, v)| k.parse::<u64>().map(|k| (k, v)).map_err(|_| data_err(source, 0, format!("non-numeric id {k:?}"))))
        .collect()
}

/// Interactions and text loaded from a dataset directory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub interactions: Vec<Interaction>,
    pub corpus: Corpus,
}

/// Reads `ratings.csv` plus the optional `items.jsonl` and `users.jsonl`.
/// Text files must use the same numeric ids as the ratings.
pub fn load_dataset_dir(dir: &Path, threshold: f64) -> Result<Dataset> {
    let interactions = load_movielens(&dir.join(RATINGS_FILE), threshold)?;
    let mut corpus = Corpus::default();
    let items = dir.join(ITEMS_FILE);
    if items.exists() {
        corpus.item_docs = numeric_keys(load_json_reviews(&items)?.texts, &items.display().to_string())?;
    }
    let users = dir.join(USERS_FILE);
    if users.exists() {
        let f = fs::File::open(&users).map_err(|e| BenchError::io(&users, e))?;
        let source = users.display().to_string();
        corpus.user_docs = numeric_keys(parse_user_texts(BufReader::new(f), &source)?, &source)?;
    }
    Ok(Dataset { interactions, corpus })
}

/// Writes the layout read by [`load_dataset_dir`]. Ratings are written with
/// `Display` for `f64`, which round-trips exactly.
pub fn write_dataset_dir(dir: &Path, data: &Dataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    let write = |name: &str, body: String| -> Result<()> {
        let path = dir.join(name);
        let mut f = fs::File::create(&path).map_err(|e| BenchError::io(&path, e))?;
        f.write_all(body.as_bytes()).map_err(|e| BenchError::io(&path, e))
    };
    let mut ratings = String::from("userId,movieId,rating,timestamp\n");
    for x in &data.interactions {
        ratings.push_str(&format!("{},{},{},{}\n", x.user, x.item, x.weight, x.timestamp));
    }
    write(RATINGS_FILE, ratings)?;
    let mut items = String::new();
    for (id, text) in &data.corpus.item_docs {
        items.push_str(&json!({ "asin": id.to_string(), "reviewText": text }).to_string());
        items.push('\n');
    }
    write(ITEMS_FILE, items)?;
    let mut users = String::new();
    for (id, text) in &data.corpus.user_docs {
        users.push_str(&json!({ "user_id": id.to_string(), "text": text }).to_string());
        users.push('\n');
    }
    write(USERS_FILE, users)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ml(s: &str) -> Result<Vec<Interaction>> {
        parse_movielens(s.as_bytes(), "test", DEFAULT_THRESHOLD)
    }

    #[test]
    fn comma_and_double_colon() {
        assert_eq!(ml("1,31,4.5,85").unwrap(), vec![Interaction::new(1, 31, 4.5, 85)]);
        assert!(ml("1::31::3::85").unwrap().is_empty());
        assert_eq!(ml("1::31::4::85").unwrap().len(), 1);
    }

    #[test]
    fn mixed_delimiters_fixture() {
        let text = "\
userId,movieId,rating,timestamp
1,10,5,100
1::11::4::101
1,12,3.5,102
2::10::4.0::103

2,13,1,104
3::14::5::105
3,15,4.5,106
4::16::2::107
4,17,4,108
";
        let got = ml(text).unwrap();
        let want: Vec<(u64, u64, f64, i64)> = vec![
            (1, 10, 5.0, 100),
            (1, 11, 4.0, 101),
            (2, 10, 4.0, 103),
            (3, 14, 5.0, 105),
            (3, 15, 4.5, 106),
            (4, 17, 4.0, 108),
        ];
        let got: Vec<(u64, u64, f64, i64)> = got.iter().map(|x| (x.user, x.item, x.weight, x.timestamp)).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        let err = ml("1,2,4,5\n1,2,x,5\n").unwrap_err();
        assert!(matches!(err, BenchError::Data { line: 2, .. }), "{err}");
        let err = ml("1,2,4,5\n\n1,2,4\n").unwrap_err();
        assert!(matches!(err, BenchError::Data { line: 3, .. }), "{err}");
        assert!(ml("").is_err());
        assert!(ml("userId,movieId,rating,timestamp\n").is_err());
    }

    #[test]
    fn amazon_and_yelp_reviews() {
        let text = r#"{"asin": "B1", "reviewText": "great sound", "overall": 5.0, "unixReviewTime": 10}
{"asin": "B1", "overall": 3.0}
{"business_id": "Y9", "user_id": "u1", "text": "tasty", "stars": 4}
not json
{"asin": "B2", "reviewText": "", "overall": 1.0}
{"asin": "B1", "reviewText": "loud", "overall": 4.0}
{"reviewText": "no item id"}
{"asin": "B3", "reviewText": "a"}
{"asin": "B3", "reviewText": "b"}
{"asin": "B4", "reviewText": "c"}
{"asin": "B4", "reviewText": "d"}
{"asin": "B5", "reviewText": "e"}
{"asin": "B5", "reviewText": "f"}
{"asin": "B6", "reviewText": "g"}
{"asin": "B6", "reviewText": "h"}
{"asin": "B7", "reviewText": "i"}
{"asin": "B7", "reviewText": "j"}
{"asin": "B8", "reviewText": "k"}
{"asin": "B8", "reviewText": "l"}
{"asin": "B9", "reviewText": "m"}
"#;
        let d = parse_json_reviews(text.as_bytes(), "t").unwrap();
        assert_eq!((d.lines, d.skipped), (20, 2));
        let mut want: BTreeMap<String, String> = BTreeMap::new();
        for (k, v) in [
            ("B1", "great sound loud"),
            ("B2", ""),
            ("B3", "a b"),
            ("B4", "c d"),
            ("B5", "e f"),
            ("B6", "g h"),
            ("B7", "i j"),
            ("B8", "k l"),
            ("B9", "m"),
            ("Y9", "tasty"),
        ] {
            want.insert(k.into(), v.into());
        }
        assert_eq!(d.texts, want);
        assert_eq!(d.ratings["B1"], vec![5.0, 3.0, 4.0]);
        assert_eq!(d.ratings["Y9"], vec![4.0]);
        assert_eq!(d.reviews[2].user.as_deref(), Some("u1"));
    }

    #[test]
    fn too_many_skipped_reviews() {
        let text = "{\"asin\": \"a\"}\nbad\nbad\n{\"asin\": \"b\"}\n";
        assert!(parse_json_reviews(text.as_bytes(), "t").is_err());
        assert!(parse_json_reviews("".as_bytes(), "t").is_err());
    }

    #[test]
    fn missing_text_is_empty() {
        let d = parse_json_reviews("{\"asin\": \"B1\", \"overall\": 4}\n".as_bytes(), "t").unwrap();
        assert_eq!(d.texts["B1"], "");
    }
}
