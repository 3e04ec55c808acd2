use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use regex::{Regex, RegexBuilder};

use super::{parse_signature, DatasetLayout, Label, RawSignature};
use crate::error::{Error, Result};
use crate::exec::Exec;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UserSignatures {
    pub genuine: Vec<RawSignature>,
    pub forgeries: Vec<RawSignature>,
}

/// Signatures grouped by user id. Users iterate in sorted id order; within a
/// bucket signatures keep their file-index order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub users: BTreeMap<String, UserSignatures>,
}

impl Dataset {
    pub fn user_ids(&self) -> impl Iterator<Item = &str> {
        self.users.keys().map(String::as_str)
    }

    pub fn total(&self) -> usize {
        self.users.values().map(|u| u.genuine.len() + u.forgeries.len()).sum()
    }

    pub fn all_signatures(&self) -> impl Iterator<Item = &RawSignature> {
        self.users.values().flat_map(|u| u.genuine.iter().chain(&u.forgeries))
    }
}

#[derive(Debug)]
pub struct LoadOutcome {
    pub dataset: Dataset,
    /// Files that matched the rule but failed to parse (empty on fail-fast).
    pub failures: Vec<(PathBuf, Error)>,
}

fn rule_regex(rule: &str) -> Result<Regex> {
    let mut pattern = String::from("^");
    let mut rest = rule;
    while let Some(open) = rest.find('{') {
        pattern.push_str(&regex::escape(&rest[..open]));
        let close = rest[open..]
            .find('}')
            .ok_or_else(|| Error::InvalidLayout(format!("unclosed capture in {rule:?}")))?
            + open;
        match &rest[open + 1..close] {
            "user" => pattern.push_str(r"(?P<user>[^/\\]+?)"),
            "index" => pattern.push_str(r"(?P<index>\d+)"),
            "*" => pattern.push_str(".*?"),
            other => return Err(Error::InvalidLayout(format!("unknown capture {{{other}}}"))),
        }
        rest = &rest[close + 1..];
    }
    pattern.push_str(&regex::escape(rest));
    pattern.push('$');
    RegexBuilder::new(&pattern)
        .case_insensitive(true)
        .build()
        .map_err(|e| Error::InvalidLayout(e.to_string()))
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

struct Matched {
    path: PathBuf,
    user: String,
    index: usize,
    label: Label,
}

/// Walks `root`, binds matching files to (user, label) buckets and parses
/// them. With `fail_fast` the first parse error aborts the load; otherwise
/// failures are collected in [`LoadOutcome::failures`].
pub fn load_dataset(root: &Path, layout: &DatasetLayout, fail_fast: bool, exec: Exec) -> Result<LoadOutcome> {
    layout.validate()?;
    let rule = rule_regex(&layout.filename_rule)?;
    let mut files = Vec::new();
    collect_files(root, &mut files)?;
    files.sort();

    let mut matched = Vec::new();
    for path in files {
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        let Some(caps) = rule.captures(name) else { continue };
        let user = caps["user"].to_string();
        let index: usize = match caps["index"].parse() {
            Ok(i) => i,
            Err(_) => continue,
        };
        let label = if (1..=layout.genuine_per_user).contains(&index) {
            Label::Genuine
        } else if index > layout.genuine_per_user && index <= layout.genuine_per_user + layout.forgery_per_user {
            Label::SkilledForgery
        } else {
            log::warn!("{}: index {index} outside the genuine/forgery ranges, skipped", path.display());
            continue;
        };
        matched.push(Matched { path, user, index, label });
    }
    if matched.is_empty() {
        return Err(Error::EmptyDataset(root.to_path_buf()));
    }
    matched.sort_by(|a, b| (&a.user, a.index, &a.path).cmp(&(&b.user, b.index, &b.path)));

    let parsed = exec.map_slice(&matched, |m| {
        let bytes = std::fs::read(&m.path).map_err(|e| Error::io(&m.path, e))?;
        parse_signature(&bytes, layout).map_err(|e| e.in_file(&m.path))
    });

    let mut dataset = Dataset::default();
    let mut failures = Vec::new();
    for (m, result) in matched.into_iter().zip(parsed) {
        let mut sig = match result {
            Ok(sig) => sig,
            Err(e) if fail_fast => return Err(e),
            Err(e) => {
                log::warn!("{e}");
                failures.push((m.path, e));
                continue;
            }
        };
        sig.user_id = m.user.clone();
        sig.label = m.label;
        sig.source_path = m.path.display().to_string();
        let bucket = dataset.users.entry(m.user).or_default();
        match m.label {
            Label::Genuine => bucket.genuine.push(sig),
            _ => bucket.forgeries.push(sig),
        }
    }
    if dataset.users.is_empty() {
        let (_, first) = failures.remove(0);
        return Err(Error::ParseFailures { count: failures.len() + 1, first: Box::new(first) });
    }
    for (user, bucket) in &dataset.users {
        log::debug!("user {user}: {} genuine, {} forgeries", bucket.genuine.len(), bucket.forgeries.len());
    }
    Ok(LoadOutcome { dataset, failures })
}
