//! Synthetic filepath-bag dataset: Windows-style path templates with
//! randomized filename segments. Malicious bags mix dropper-like temp paths
//! with benign paths so the label signal lives at the instance-subset level;
//! malicious segment generation drifts after a configurable point in the
//! timestamp range to emulate future variants surfacing only in the test
//! period.

mod io;

pub use io::{bags_to_jsonl, parse_jsonl, read_dataset, write_dataset};

use crate::mil::{Bag, Label, Split};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus spec: {0}")]
    BadSpec(String),
    #[error("dataset line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub seed: u64,
    pub bag_count: usize,
    /// Inclusive instance-count range per bag.
    pub bag_size: (usize, usize),
    /// Templates may contain `{r}` placeholders for random segments.
    pub benign_templates: Vec<String>,
    pub malicious_templates: Vec<String>,
    /// Inclusive random-segment length range.
    pub stem_len: (usize, usize),
    /// Fraction of bags labeled malicious.
    pub class_balance: f64,
    /// Inclusive timestamp range.
    pub timestamp_range: (i64, i64),
    /// Fraction of a malicious bag drawn from the malicious pool.
    pub malicious_mix: (f64, f64),
    /// Point in the timestamp range after which malicious segments mutate.
    pub drift_fraction: f64,
    /// Hard cap on emitted path length.
    pub max_path_len: usize,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            seed: 0,
            bag_count: 3800,
            bag_size: (4, 12),
            benign_templates: default_benign_templates(),
            malicious_templates: default_malicious_templates(),
            stem_len: (3, 8),
            class_balance: 0.5,
            timestamp_range: (0, 9999),
            malicious_mix: (0.2, 0.6),
            drift_fraction: 0.7,
            max_path_len: 64,
        }
    }
}

fn default_benign_templates() -> Vec<String> {
    [
        r"C:\Program Files\Common Files\System\ado\msado15.dll",
        r"C:\Program Files\Internet Explorer\iexplore.exe",
        r"C:\Program Files\Adobe\Reader\AcroRd32.exe",
        r"C:\Program Files\Java\jre6\bin\java.exe",
        r"C:\Program Files\Mozilla Firefox\xul.dll",
        r"C:\WINDOWS\system32\kernel32.dll",
        r"C:\WINDOWS\system32\drivers\etc\hosts",
        r"C:\WINDOWS\system32\config\software.LOG",
        r"C:\WINDOWS\system32\wbem\wbemcore.dll",
        r"C:\WINDOWS\WinSxS\x86_shared\comctl32.dll",
        r"C:\WINDOWS\Fonts\arial.ttf",
        r"C:\Documents and Settings\user\Desktop\readme.txt",
        r"C:\Documents and Settings\user\My Documents\notes.doc",
        r"C:\Documents and Settings\user\Cookies\index.dat",
        r"C:\WINDOWS\Prefetch\APP{r}.pf",
        r"C:\Documents and Settings\user\Recent\doc{r}.lnk",
        r"C:\WINDOWS\Temp\setup_{r}.log",
        r"C:\WINDOWS\system32\spool\PRINTERS\{r}.SPL",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

fn default_malicious_templates() -> Vec<String> {
    [
        r"C:\WINDOWS\Temp\GUM{r}.tmp\goopdateres_{r}.dll",
        r"C:\WINDOWS\Temp\ns{r}.tmp\UAC.dll",
        r"C:\WINDOWS\Temp\ns{r}.tmp\System.dll",
        r"C:\WINDOWS\Temp\{r}.ini",
        r"C:\WINDOWS\Temp\{r}.exe",
        r"C:\WINDOWS\Temp\i4j_nlog_{r}",
        r"C:\Program Files\GUM{r}.tmp\goopdateres_{r}.dll",
        r"C:\DOCUME~1\user\LOCALS~1\Temp\{r}.bat",
        r"C:\WINDOWS\Temp\{r}.tmp\{r}.dll",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: &str| Err(CorpusError::BadSpec(m.to_string()));
        if self.benign_templates.is_empty() || self.malicious_templates.is_empty() {
            return bad("template pools must be non-empty");
        }
        if !(self.class_balance > 0.0 && self.class_balance < 1.0) {
            return bad("class_balance must be in (0, 1)");
        }
        if self.bag_count == 0 {
            return bad("bag_count must be positive");
        }
        if self.bag_size.0 == 0 || self.bag_size.0 > self.bag_size.1 {
            return bad("bag_size range is invalid");
        }
        if self.stem_len.0 == 0 || self.stem_len.0 > self.stem_len.1 {
            return bad("stem_len range is invalid");
        }
        if self.timestamp_range.0 > self.timestamp_range.1 {
            return bad("timestamp_range is invalid");
        }
        if !(0.0..=1.0).contains(&self.drift_fraction) {
            return bad("drift_fraction must be in [0, 1]");
        }
        if self.malicious_mix.0 <= 0.0 || self.malicious_mix.0 > self.malicious_mix.1 || self.malicious_mix.1 > 1.0
        {
            return bad("malicious_mix range is invalid");
        }
        let worst = |t: &str| t.len() + t.matches("{r}").count() * self.stem_len.1.saturating_sub(3);
        for t in self.benign_templates.iter().chain(&self.malicious_templates) {
            if worst(t) > self.max_path_len {
                return bad(&format!("template can exceed max_path_len: {t}"));
            }
        }
        Ok(())
    }

    /// Timestamp at which malicious segment generation mutates; also the
    /// default temporal-split cutoff.
    pub fn drift_cutoff(&self) -> i64 {
        let (lo, hi) = self.timestamp_range;
        lo + (((hi - lo + 1) as f64) * self.drift_fraction) as i64
    }
}

const STEM_CHARS: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
const DRIFT_CHARS: &[u8] = b"qxzjkvw0123456789";

fn stem(rng: &mut ChaCha8Rng, len_range: (usize, usize), drifted: bool) -> String {
    let extra = usize::from(drifted);
    let len = rng.random_range(len_range.0 + extra..=len_range.1 + extra);
    let chars = if drifted { DRIFT_CHARS } else { STEM_CHARS };
    (0..len).map(|_| *chars.choose(rng).expect("charset non-empty") as char).collect()
}

fn fill_template(template: &str, rng: &mut ChaCha8Rng, spec: &CorpusSpec, drifted: bool) -> String {
    let mut out = template.to_string();
    while let Some(pos) = out.find("{r}") {
        let s = stem(rng, spec.stem_len, drifted);
        out.replace_range(pos..pos + 3, &s);
    }
    if drifted && rng.random::<f64>() < 0.5 {
        for (from, to) in [(".dll", ".dl_"), (".ini", ".in1"), (".exe", ".ex_"), (".bat", ".vbs")] {
            if out.ends_with(from) {
                let cut = out.len() - from.len();
                out.truncate(cut);
                out.push_str(to);
                break;
            }
        }
    }
    out
}

/// Generate the labeled bag corpus. Deterministic given the spec seed;
/// class counts are exactly stratified. All bags come out with split Train;
/// use [`temporal_split`] to assign splits.
pub fn generate(spec: &CorpusSpec) -> Result<Vec<Bag>, CorpusError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_mal = (spec.bag_count as f64 * spec.class_balance).round() as usize;
    let mut labels = vec![Label::Malicious; n_mal];
    labels.extend(std::iter::repeat(Label::Benign).take(spec.bag_count - n_mal));
    labels.shuffle(&mut rng);

    let drift_cutoff = spec.drift_cutoff();
    let mut bags = Vec::with_capacity(spec.bag_count);
    for label in labels {
        let timestamp = rng.random_range(spec.timestamp_range.0..=spec.timestamp_range.1);
        let size = rng.random_range(spec.bag_size.0..=spec.bag_size.1);
        let drifted = timestamp >= drift_cutoff;
        let mut paths = Vec::with_capacity(size);
        match label {
            Label::Benign => {
                for _ in 0..size {
                    let t = spec.benign_templates.choose(&mut rng).expect("non-empty pool");
                    paths.push(fill_template(t, &mut rng, spec, false));
                }
            }
            Label::Malicious => {
                let mix = rng.random_range(spec.malicious_mix.0..=spec.malicious_mix.1);
                let mal_n = ((size as f64 * mix).round() as usize).clamp(1, size);
                for _ in 0..mal_n {
                    let t = spec.malicious_templates.choose(&mut rng).expect("non-empty pool");
                    paths.push(fill_template(t, &mut rng, spec, drifted));
                }
                for _ in mal_n..size {
                    let t = spec.benign_templates.choose(&mut rng).expect("non-empty pool");
                    paths.push(fill_template(t, &mut rng, spec, false));
                }
                paths.shuffle(&mut rng);
            }
        }
        for p in &paths {
            debug_assert!(p.len() <= spec.max_path_len, "generated path too long: {p}");
        }
        bags.push(Bag { paths, label, split: Split::Train, timestamp });
    }
    Ok(bags)
}

/// Partition by timestamp: train strictly before the cutoff, test at or
/// after. Split tags are rewritten accordingly.
pub fn temporal_split(bags: &[Bag], cutoff: i64) -> (Vec<Bag>, Vec<Bag>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for bag in bags {
        let mut b = bag.clone();
        if b.timestamp < cutoff {
            b.split = Split::Train;
            train.push(b);
        } else {
            b.split = Split::Test;
            test.push(b);
        }
    }
    (train, test)
}

/// Every instance string of every bag, in order (duplicates preserved).
pub fn all_paths(bags: &[Bag]) -> Vec<Vec<u8>> {
    bags.iter().flat_map(|b| b.paths.iter().map(|p| p.as_bytes().to_vec())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let spec = CorpusSpec { bag_count: 50, ..Default::default() };
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(bags_to_jsonl(&a), bags_to_jsonl(&b));
    }

    #[test]
    fn class_counts_are_exactly_stratified() {
        let spec = CorpusSpec { bag_count: 1000, class_balance: 0.5, ..Default::default() };
        let bags = generate(&spec).unwrap();
        let mal = bags.iter().filter(|b| b.label == Label::Malicious).count();
        assert_eq!(mal, 500);
    }

    #[test]
    fn generated_paths_respect_length_cap_and_bag_sizes() {
        let spec = CorpusSpec { bag_count: 300, ..Default::default() };
        let bags = generate(&spec).unwrap();
        for b in &bags {
            assert!(b.paths.len() >= spec.bag_size.0 && b.paths.len() <= spec.bag_size.1);
            for p in &b.paths {
                assert!(!p.is_empty() && p.len() <= spec.max_path_len, "{p}");
                assert!(p.is_ascii());
            }
        }
    }

    #[test]
    fn malicious_bags_mix_in_benign_paths() {
        let spec = CorpusSpec { bag_count: 200, ..Default::default() };
        let bags = generate(&spec).unwrap();
        let mal_bags: Vec<_> = bags.iter().filter(|b| b.label == Label::Malicious).collect();
        // With mix capped at 0.6, larger malicious bags must contain benign paths.
        let with_benign = mal_bags
            .iter()
            .filter(|b| b.paths.len() >= 4)
            .filter(|b| b.paths.iter().any(|p| !p.contains("Temp") && !p.contains(".tmp")))
            .count();
        assert!(with_benign > 0);
    }

    #[test]
    fn temporal_split_is_a_partition_with_boundary_semantics() {
        let spec = CorpusSpec { bag_count: 120, ..Default::default() };
        let bags = generate(&spec).unwrap();
        let min_ts = bags.iter().map(|b| b.timestamp).min().unwrap();
        let max_ts = bags.iter().map(|b| b.timestamp).max().unwrap();

        let (train, test) = temporal_split(&bags, min_ts);
        assert!(train.is_empty());
        assert_eq!(test.len(), bags.len());

        let (train, test) = temporal_split(&bags, max_ts + 1);
        assert_eq!(train.len(), bags.len());
        assert!(test.is_empty());

        let cutoff = spec.drift_cutoff();
        let (train, test) = temporal_split(&bags, cutoff);
        assert_eq!(train.len() + test.len(), bags.len());
        assert!(train.iter().all(|b| b.timestamp < cutoff && b.split == Split::Train));
        assert!(test.iter().all(|b| b.timestamp >= cutoff && b.split == Split::Test));
    }

    #[test]
    fn degenerate_specs_are_rejected() {
        let mut spec = CorpusSpec::default();
        spec.benign_templates.clear();
        assert!(matches!(generate(&spec), Err(CorpusError::BadSpec(_))));
        let spec2 = CorpusSpec { class_balance: 0.0, ..Default::default() };
        assert!(generate(&spec2).is_err());
        let spec3 = CorpusSpec { bag_size: (5, 2), ..Default::default() };
        assert!(generate(&spec3).is_err());
    }

    #[test]
    fn drifted_malicious_segments_change_character_distribution() {
        let spec = CorpusSpec { bag_count: 600, ..Default::default() };
        let bags = generate(&spec).unwrap();
        let cutoff = spec.drift_cutoff();
        let upper_fraction = |bags: &[&Bag]| -> f64 {
            let mut upper = 0usize;
            let mut total = 0usize;
            for b in bags {
                for p in &b.paths {
                    for c in p.bytes().filter(|c| c.is_ascii_alphabetic()) {
                        total += 1;
                        upper += c.is_ascii_uppercase() as usize;
                    }
                }
            }
            upper as f64 / total as f64
        };
        let pre: Vec<&Bag> = bags
            .iter()
            .filter(|b| b.label == Label::Malicious && b.timestamp < cutoff)
            .collect();
        let post: Vec<&Bag> = bags
            .iter()
            .filter(|b| b.label == Label::Malicious && b.timestamp >= cutoff)
            .collect();
        assert!(!pre.is_empty() && !post.is_empty());
        // Drifted stems drop uppercase entirely, so the fraction falls.
        assert!(upper_fraction(&post) < upper_fraction(&pre));
    }
}
