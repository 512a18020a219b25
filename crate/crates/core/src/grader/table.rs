//! The score table: one CSV row per (paper, model).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Grade, GradeError, MemoryScore};
use crate::probegen::ProbeType;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub paper_id: String,
    pub model_name: String,
    pub value: Option<f64>,
    pub n_probes_scored: usize,
    pub n_error_excluded: usize,
    #[serde(rename = "E1_mc")]
    pub e1_mc: Option<f64>,
    #[serde(rename = "E2_mc")]
    pub e2_mc: Option<f64>,
    #[serde(rename = "E4_mc")]
    pub e4_mc: Option<f64>,
    #[serde(rename = "F1_mc")]
    pub f1_mc: Option<f64>,
    pub correct_rate: Option<f64>,
    pub partial_rate: Option<f64>,
    pub refusal_rate: Option<f64>,
    pub wrong_rate: Option<f64>,
    pub hallucination_rate: Option<f64>,
}

impl ScoreRow {
    pub fn type_value(&self, t: ProbeType) -> Option<f64> {
        match t {
            ProbeType::E1Title => self.e1_mc,
            ProbeType::E2Author => self.e2_mc,
            ProbeType::E4Method => self.e4_mc,
            ProbeType::F1Venue => self.f1_mc,
        }
    }

    pub fn rate(&self, g: Grade) -> Option<f64> {
        match g {
            Grade::Correct => self.correct_rate,
            Grade::Partial => self.partial_rate,
            Grade::Refusal => self.refusal_rate,
            Grade::Wrong => self.wrong_rate,
            Grade::Hallucination => self.hallucination_rate,
            Grade::Error => None,
        }
    }
}

impl From<&MemoryScore> for ScoreRow {
    fn from(s: &MemoryScore) -> Self {
        let t = |p: ProbeType| s.per_type_values.get(&p).copied();
        Self {
            paper_id: s.paper_id.clone(),
            model_name: s.model_name.clone(),
            value: s.value,
            n_probes_scored: s.n_probes_scored,
            n_error_excluded: s.n_error_excluded,
            e1_mc: t(ProbeType::E1Title),
            e2_mc: t(ProbeType::E2Author),
            e4_mc: t(ProbeType::E4Method),
            f1_mc: t(ProbeType::F1Venue),
            correct_rate: s.grade_rate(Grade::Correct),
            partial_rate: s.grade_rate(Grade::Partial),
            refusal_rate: s.grade_rate(Grade::Refusal),
            wrong_rate: s.grade_rate(Grade::Wrong),
            hallucination_rate: s.grade_rate(Grade::Hallucination),
        }
    }
}

pub fn score_table_string(rows: &[ScoreRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("score rows serialize");
    }
    if rows.is_empty() {
        w.write_record([
            "paper_id", "model_name", "value", "n_probes_scored", "n_error_excluded", "E1_mc", "E2_mc",
            "E4_mc", "F1_mc", "correct_rate", "partial_rate", "refusal_rate", "wrong_rate",
            "hallucination_rate",
        ])
        .expect("header writes");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
}

pub fn write_score_table(path: &Path, rows: &[ScoreRow]) -> Result<(), GradeError> {
    std::fs::write(path, score_table_string(rows)).map_err(|e| GradeError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn read_score_table(path: &Path) -> Result<Vec<ScoreRow>, GradeError> {
    let err = |m: String| GradeError::Table {
        path: path.display().to_string(),
        message: m,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
    r.deserialize().map(|row| row.map_err(|e| err(e.to_string()))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn round_trip_with_undefined_value() {
        let defined = MemoryScore {
            paper_id: "a".into(),
            model_name: "m".into(),
            value: Some(0.375),
            n_probes_scored: 4,
            n_error_excluded: 0,
            per_type_values: [(ProbeType::E1Title, 0.375)].into_iter().collect(),
            grade_counts: [(Grade::Correct, 1), (Grade::Partial, 1), (Grade::Wrong, 2)]
                .into_iter()
                .collect(),
        };
        let undefined = MemoryScore {
            paper_id: "b".into(),
            model_name: "m".into(),
            value: None,
            n_probes_scored: 0,
            n_error_excluded: 3,
            per_type_values: BTreeMap::new(),
            grade_counts: BTreeMap::new(),
        };
        let rows: Vec<ScoreRow> = [&defined, &undefined].into_iter().map(ScoreRow::from).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.csv");
        write_score_table(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("paper_id,model_name,value,n_probes_scored,n_error_excluded,E1_mc,"));
        assert!(text.contains("\nb,m,,0,3,,,,,,,,,\n"));
        assert_eq!(read_score_table(&path).unwrap(), rows);
    }
}
