//! Dataset file format: UTF-8 text, one flat JSON object per line with
//! `label` (0 benign / 1 malicious), `timestamp`, and escaped `paths`.

use super::CorpusError;
use crate::mil::{Bag, Label, Split};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

#[derive(Serialize, Deserialize)]
struct Record {
    label: u8,
    timestamp: i64,
    paths: Vec<String>,
}

pub fn bags_to_jsonl(bags: &[Bag]) -> String {
    let mut out = String::new();
    for bag in bags {
        let rec = Record {
            label: bag.label.index() as u8,
            timestamp: bag.timestamp,
            paths: bag.paths.clone(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn parse_jsonl(text: &str, split: Split) -> Result<Vec<Bag>, CorpusError> {
    let mut bags = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(line)
            .map_err(|e| CorpusError::Parse { line: i + 1, msg: e.to_string() })?;
        let label = Label::from_index(rec.label)
            .ok_or_else(|| CorpusError::Parse { line: i + 1, msg: format!("bad label {}", rec.label) })?;
        if rec.paths.is_empty() {
            return Err(CorpusError::Parse { line: i + 1, msg: "bag has no paths".into() });
        }
        bags.push(Bag { paths: rec.paths, label, split, timestamp: rec.timestamp });
    }
    Ok(bags)
}

pub fn write_dataset(path: &Path, bags: &[Bag]) -> Result<(), CorpusError> {
    fs::write(path, bags_to_jsonl(bags))?;
    Ok(())
}

pub fn read_dataset(path: &Path, split: Split) -> Result<Vec<Bag>, CorpusError> {
    let text = fs::read_to_string(path)?;
    parse_jsonl(&text, split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn roundtrip_preserves_bags_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // Arbitrary printable paths with spaces, backslashes and quotes.
        let charset: Vec<char> =
            (b' '..=b'~').map(|c| c as char).filter(|&c| c != '\u{7f}').collect();
        let bags: Vec<Bag> = (0..50)
            .map(|i| {
                let k = rng.random_range(1..=6);
                let paths = (0..k)
                    .map(|_| {
                        let len = rng.random_range(1..=40);
                        (0..len).map(|_| charset[rng.random_range(0..charset.len())]).collect()
                    })
                    .collect();
                Bag {
                    paths,
                    label: if rng.random::<bool>() { Label::Malicious } else { Label::Benign },
                    split: Split::Train,
                    timestamp: i,
                }
            })
            .collect();
        let text = bags_to_jsonl(&bags);
        let parsed = parse_jsonl(&text, Split::Train).unwrap();
        assert_eq!(parsed, bags);
        // Serialization is stable.
        assert_eq!(bags_to_jsonl(&parsed), text);
    }

    #[test]
    fn parse_reports_line_numbers_on_garbage() {
        let text = "{\"label\":0,\"timestamp\":1,\"paths\":[\"a\"]}\nnot json\n";
        let err = parse_jsonl(text, Split::Test).unwrap_err();
        match err {
            CorpusError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn parse_rejects_bad_labels_and_empty_bags() {
        let text = "{\"label\":7,\"timestamp\":1,\"paths\":[\"a\"]}\n";
        assert!(parse_jsonl(text, Split::Train).is_err());
        let text2 = "{\"label\":1,\"timestamp\":1,\"paths\":[]}\n";
        assert!(parse_jsonl(text2, Split::Train).is_err());
    }
}
