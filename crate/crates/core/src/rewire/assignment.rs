//! Assignment files: a JSON header line `{"mode":..,"s":..,"seed":..}`
//! followed by one integer per ordinary node (`-1` when unassigned).

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentMode {
    Structure,
    TrainLabels,
    Kmeans,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssignmentHeader {
    pub mode: AssignmentMode,
    pub s: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignmentFile {
    pub header: AssignmentHeader,
    pub groups: Vec<Option<usize>>,
}

pub fn write_assignment(header: &AssignmentHeader, groups: &[Option<usize>]) -> String {
    let mut out = serde_json::to_string(header).expect("header serializes");
    out.push('\n');
    for g in groups {
        match g {
            Some(g) => writeln!(out, "{g}").unwrap(),
            None => out.push_str("-1\n"),
        }
    }
    out
}

pub fn read_assignment(text: &str) -> Result<AssignmentFile> {
    let mut lines = text.lines().enumerate();
    let (_, first) = lines.next().ok_or(Error::Parse { line: 1, message: "missing header".into() })?;
    let header: AssignmentHeader = serde_json::from_str(first)
        .map_err(|e| Error::Parse { line: 1, message: format!("bad header: {e}") })?;
    let mut groups = Vec::new();
    for (idx, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let value: i64 = line
            .parse()
            .map_err(|_| Error::Parse { line: idx + 1, message: format!("{line:?} is not an integer") })?;
        groups.push(match value {
            -1 => None,
            g if g >= 0 && (g as usize) < header.s => Some(g as usize),
            g => return Err(Error::Parse { line: idx + 1, message: format!("group {g} outside 0..{}", header.s) }),
        });
    }
    Ok(AssignmentFile { header, groups })
}
