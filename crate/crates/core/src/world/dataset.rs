use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DatasetError, Needle, TaskId, TaskSample};

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    task: Option<String>,
    input: String,
    question: String,
    target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    needles: Option<Vec<NeedleRecord>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NeedleRecord {
    text: String,
    offset: usize,
}

/// Reads a line-delimited dataset, keeping records of `task` in file order.
///
/// Records without a `task` field are assumed to belong to `task`. Blank
/// lines are skipped; line numbers in errors are 1-based.
pub fn load_samples(path: &Path, task: TaskId) -> Result<Vec<TaskSample>, DatasetError> {
    let io = |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| DatasetError::MalformedRecord {
            line: line_no,
            reason,
        };
        let record: Record = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        let record_task = match &record.task {
            Some(t) => t.parse::<TaskId>().map_err(|e| malformed(e.to_string()))?,
            None => task,
        };
        if record_task != task {
            continue;
        }
        if record.target.trim().is_empty() {
            return Err(malformed("empty target".into()));
        }
        let len = record.input.len() as f64;
        let mut needles = Vec::new();
        for n in record.needles.unwrap_or_default() {
            if record.input.get(n.offset..n.offset + n.text.len()) != Some(n.text.as_str()) {
                return Err(malformed(format!(
                    "needle {:?} not found at offset {}",
                    n.text, n.offset
                )));
            }
            needles.push(Needle {
                percent: 100.0 * n.offset as f64 / len,
                text: n.text,
                offset: n.offset,
            });
        }
        out.push(TaskSample {
            task,
            input: record.input,
            question: record.question,
            target: record.target.trim().to_lowercase(),
            needles,
            events: None,
            query: None,
            seed: None,
        });
    }
    Ok(out)
}

/// Writes samples in the line-delimited dataset format.
pub fn write_samples(path: &Path, samples: &[TaskSample]) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for s in samples {
        let record = Record {
            task: Some(s.task.to_string()),
            input: s.input.clone(),
            question: s.question.clone(),
            target: s.target.clone(),
            needles: (!s.needles.is_empty()).then(|| {
                s.needles
                    .iter()
                    .map(|n| NeedleRecord {
                        text: n.text.clone(),
                        offset: n.offset,
                    })
                    .collect()
            }),
        };
        serde_json::to_writer(&mut w, &record)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{generate_sample, GenSpec};

    #[test]
    fn loads_in_order_and_lowercases() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let mut body = String::new();
        for i in 0..25 {
            body.push_str(&format!(
                "{{\"task\":\"qa2\",\"input\":\"ctx {i}\",\"question\":\"q{i}\",\"target\":\"Kitchen\"}}\n"
            ));
        }
        body.push_str("{\"task\":\"qa7\",\"input\":\"x\",\"question\":\"q\",\"target\":\"two\"}\n");
        std::fs::write(&path, body).unwrap();
        let got = load_samples(&path, TaskId::Qa2).unwrap();
        assert_eq!(got.len(), 25);
        assert_eq!(got[3].question, "q3");
        assert!(got.iter().all(|s| s.target == "kitchen"));
        assert_eq!(load_samples(&path, TaskId::Qa7).unwrap().len(), 1);
    }

    #[test]
    fn empty_file_gives_no_samples() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.jsonl");
        std::fs::write(&path, "").unwrap();
        assert!(load_samples(&path, TaskId::Qa2).unwrap().is_empty());
    }

    #[test]
    fn missing_target_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        std::fs::write(
            &path,
            "{\"input\":\"a\",\"question\":\"b\",\"target\":\"c\"}\n\n{\"input\":\"a\",\"question\":\"b\"}\n",
        )
        .unwrap();
        match load_samples(&path, TaskId::Qa2) {
            Err(DatasetError::MalformedRecord { line, reason }) => {
                assert_eq!(line, 3);
                assert!(reason.contains("target"), "{reason}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn generated_samples_survive_a_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.jsonl");
        let samples: Vec<_> = (0..3)
            .map(|i| generate_sample(&GenSpec::new(TaskId::Qa7, 1024, i)).unwrap())
            .collect();
        write_samples(&path, &samples).unwrap();
        let back = load_samples(&path, TaskId::Qa7).unwrap();
        for (a, b) in samples.iter().zip(&back) {
            assert_eq!(a.input, b.input);
            assert_eq!(a.target, b.target);
            assert_eq!(a.needles, b.needles);
        }
    }
}
