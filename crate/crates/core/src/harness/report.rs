use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{format_range, Cell, CellKey, ContextSize, EvalRecord, EvalReport, HarnessError, Tally};
use crate::prompt::{Method, PromptOrder};
use crate::world::TaskId;

/// One `records.csv` row; field order is the column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub task: TaskId,
    pub context_size: ContextSize,
    pub method: Method,
    pub order: Option<PromptOrder>,
    pub index: usize,
    pub question: String,
    pub target: String,
    pub output: String,
    pub correct: bool,
}

impl From<&EvalRecord> for CsvRow {
    fn from(r: &EvalRecord) -> Self {
        Self {
            task: r.task,
            context_size: r.context_size,
            method: r.method,
            order: r.order,
            index: r.index,
            question: r.question.clone(),
            target: r.target.clone(),
            output: r.output.clone(),
            correct: r.correct,
        }
    }
}

pub fn emit_csv(records: &[EvalRecord], path: &Path) -> Result<(), HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::Records("no records to write".into()));
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(CsvRow::from(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<Result<Vec<CsvRow>, _>>()?;
    if rows.is_empty() {
        return Err(HarnessError::Records(format!("{} has no rows", path.display())));
    }
    Ok(rows)
}

pub fn report_from_records(rows: &[CsvRow]) -> EvalReport {
    let mut tallies: BTreeMap<CellKey, BTreeMap<Option<PromptOrder>, Tally>> = BTreeMap::new();
    for r in rows {
        let key = CellKey {
            task: r.task,
            context_size: r.context_size,
            method: r.method,
        };
        let t = tallies.entry(key).or_default().entry(r.order).or_default();
        t.total += 1;
        t.correct += usize::from(r.correct);
    }
    EvalReport::from_tallies(tallies)
}

/// A cell as printed in tables: one accuracy, or the range over orders.
pub fn cell_text(cell: &Cell) -> String {
    match cell {
        Cell::Single(t) => format!("{:.2}", t.accuracy()),
        Cell::Ranged { .. } => format_range(&cell.accuracies()),
    }
}

fn method_label(m: Method) -> &'static str {
    match m {
        Method::Baseline => "Baseline",
        Method::NaiveRag => "RAG",
        Method::Proposed => "Proposed",
    }
}

fn render_table(title: &str, corner: &str, header: &[String], rows: &[(String, Vec<String>)]) -> String {
    let first = rows
        .iter()
        .map(|(l, _)| l.len())
        .chain([corner.len()])
        .max()
        .unwrap_or(0);
    let widths: Vec<usize> = (0..header.len())
        .map(|i| {
            rows.iter()
                .map(|(_, c)| c[i].len())
                .chain([header[i].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = format!("{title}\n");
    let line = |label: &str, cells: &[String]| {
        let mut s = format!("{label:<first$}");
        for (c, w) in cells.iter().zip(&widths) {
            let _ = write!(s, "  {c:>w$}");
        }
        s.trim_end().to_string() + "\n"
    };
    out.push_str(&line(corner, header));
    for (label, cells) in rows {
        out.push_str(&line(label, cells));
    }
    out
}

fn text_or_dash(cell: Option<&Cell>) -> String {
    cell.map_or_else(|| "-".to_string(), cell_text)
}

/// Writes `table_<method>.txt`, `tables_by_task.txt`, `heatmap.csv` and
/// `heatmap.svg` into `dir`.
pub fn emit_report(report: &EvalReport, dir: &Path) -> Result<(), HarnessError> {
    if report.cells.is_empty() {
        return Err(HarnessError::Records("empty report".into()));
    }
    fs::create_dir_all(dir)?;
    let sizes = report.sizes();
    let header: Vec<String> = sizes.iter().map(ToString::to_string).collect();

    for method in report.methods() {
        let rows: Vec<(String, Vec<String>)> = report
            .tasks()
            .into_iter()
            .map(|task| {
                let cells = sizes.iter().map(|&s| text_or_dash(report.get(task, s, method))).collect();
                (task.to_string(), cells)
            })
            .collect();
        let title = format!("Accuracy: {}", method_label(method));
        fs::write(
            dir.join(format!("table_{}.txt", method.as_str())),
            render_table(&title, "Task", &header, &rows),
        )?;
    }

    let mut by_task = String::new();
    for task in report.tasks() {
        let rows: Vec<(String, Vec<String>)> = report
            .methods()
            .into_iter()
            .map(|method| {
                let cells = sizes.iter().map(|&s| text_or_dash(report.get(task, s, method))).collect();
                (method_label(method).to_string(), cells)
            })
            .collect();
        if !by_task.is_empty() {
            by_task.push('\n');
        }
        by_task.push_str(&render_table(&format!("Accuracy: {task}"), "Method", &header, &rows));
    }
    fs::write(dir.join("tables_by_task.txt"), by_task)?;

    let grid = heatmap_grid(report);
    let mut csv = csv::Writer::from_path(dir.join("heatmap.csv"))?;
    let mut head = vec!["row".to_string()];
    head.extend(header.iter().cloned());
    csv.write_record(&head)?;
    for (label, values) in &grid {
        let mut rec = vec![label.clone()];
        rec.extend(values.iter().map(|v| v.map_or_else(String::new, |v| format!("{v:.2}"))));
        csv.write_record(&rec)?;
    }
    csv.flush()?;
    fs::write(dir.join("heatmap.svg"), heatmap_svg(&header, &grid))?;
    Ok(())
}

/// Rows are task/method pairs, columns sizes; Proposed cells use the mean
/// over orders.
fn heatmap_grid(report: &EvalReport) -> Vec<(String, Vec<Option<f64>>)> {
    let sizes = report.sizes();
    let mut rows = Vec::new();
    for task in report.tasks() {
        for method in report.methods() {
            let values: Vec<Option<f64>> = sizes
                .iter()
                .map(|&s| report.get(task, s, method).map(Cell::mean))
                .collect();
            if values.iter().any(Option::is_some) {
                rows.push((format!("{task}/{}", method.as_str()), values));
            }
        }
    }
    rows
}

const RAMP_LOW: (f64, f64, f64) = (247.0, 251.0, 255.0);
const RAMP_HIGH: (f64, f64, f64) = (8.0, 48.0, 107.0);

/// Linear ramp, light at 0 and dark at 1; every channel is monotone.
pub fn heatmap_color(value: f64) -> (u8, u8, u8) {
    let t = if value.is_finite() { value.clamp(0.0, 1.0) } else { 0.0 };
    let mix = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    (
        mix(RAMP_LOW.0, RAMP_HIGH.0),
        mix(RAMP_LOW.1, RAMP_HIGH.1),
        mix(RAMP_LOW.2, RAMP_HIGH.2),
    )
}

fn heatmap_svg(columns: &[String], grid: &[(String, Vec<Option<f64>>)]) -> String {
    const CELL_W: usize = 90;
    const CELL_H: usize = 40;
    const LEFT: usize = 160;
    const TOP: usize = 36;
    let width = LEFT + CELL_W * columns.len() + 10;
    let height = TOP + CELL_H * grid.len() + 10;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="13">"#
    );
    let _ = writeln!(s, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    for (j, col) in columns.iter().enumerate() {
        let x = LEFT + CELL_W * j + CELL_W / 2;
        let _ = writeln!(s, r#"<text x="{x}" y="{}" text-anchor="middle">{col}</text>"#, TOP - 12);
    }
    for (i, (label, values)) in grid.iter().enumerate() {
        let y = TOP + CELL_H * i;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{label}</text>"#,
            LEFT - 8,
            y + CELL_H / 2 + 4
        );
        for (j, v) in values.iter().enumerate() {
            let x = LEFT + CELL_W * j;
            match v {
                Some(v) => {
                    let (r, g, b) = heatmap_color(*v);
                    let ink = if *v > 0.5 { "white" } else { "black" };
                    let _ = writeln!(
                        s,
                        r##"<rect x="{x}" y="{y}" width="{CELL_W}" height="{CELL_H}" fill="#{r:02x}{g:02x}{b:02x}" stroke="white"/>"##
                    );
                    let _ = writeln!(
                        s,
                        r#"<text x="{}" y="{}" text-anchor="middle" fill="{ink}">{v:.2}</text>"#,
                        x + CELL_W / 2,
                        y + CELL_H / 2 + 4
                    );
                }
                None => {
                    let _ = writeln!(
                        s,
                        r##"<rect x="{x}" y="{y}" width="{CELL_W}" height="{CELL_H}" fill="none" stroke="#cccccc"/>"##
                    );
                }
            }
        }
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(task: TaskId, size: usize, method: Method, correct: usize) -> (CellKey, Cell) {
        (
            CellKey {
                task,
                context_size: ContextSize(size),
                method,
            },
            Cell::Single(Tally::new(correct, 25)),
        )
    }

    #[test]
    fn ramp_endpoints_and_monotonicity() {
        assert_eq!(heatmap_color(0.0), (247, 251, 255));
        assert_eq!(heatmap_color(1.0), (8, 48, 107));
        let mut prev = heatmap_color(0.0);
        for i in 1..=100 {
            let c = heatmap_color(i as f64 / 100.0);
            assert!(c.0 <= prev.0 && c.1 <= prev.1 && c.2 <= prev.2);
            prev = c;
        }
    }

    #[test]
    fn single_cell_report() {
        let dir = tempfile::tempdir().unwrap();
        let report = EvalReport {
            cells: BTreeMap::from([single(TaskId::Qa2, 16384, Method::Baseline, 11)]),
        };
        emit_report(&report, dir.path()).unwrap();
        let csv = fs::read_to_string(dir.path().join("heatmap.csv")).unwrap();
        assert_eq!(csv, "row,16k\nqa2/baseline,0.44\n");
        let table = fs::read_to_string(dir.path().join("table_baseline.txt")).unwrap();
        assert!(table.lines().any(|l| l.split_whitespace().eq(["qa2", "0.44"])));
        let svg = fs::read_to_string(dir.path().join("heatmap.svg")).unwrap();
        assert_eq!(svg.matches("<rect x=").count(), 1);
    }

    #[test]
    fn csv_round_trip_with_quoting() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.csv");
        let rec = EvalRecord {
            task: TaskId::Qa7,
            context_size: ContextSize(16384),
            method: Method::Proposed,
            order: Some(PromptOrder::QuestionFirst),
            index: 3,
            question: "How many objects is Mary carrying?".into(),
            target: "two".into(),
            output: "Answer: two, \"surely\"\nyes".into(),
            parsed: None,
            correct: true,
            flagged: false,
            error: None,
            latency_ms: 5,
        };
        let base = EvalRecord {
            method: Method::Baseline,
            order: None,
            ..rec.clone()
        };
        emit_csv(&[rec.clone(), base], &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("task,context_size,method,order,index,question,target,output,correct\n"));
        assert!(text.contains("\"Answer: two, \"\"surely\"\"\nyes\""));
        let rows = read_csv(&path).unwrap();
        assert_eq!(rows[0], CsvRow::from(&rec));
        assert_eq!(rows[1].order, None);
        let first = text.clone();
        emit_csv(&[rec.clone(), EvalRecord { method: Method::Baseline, order: None, ..rec }], &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), first);
    }
}
