//! Labeled CSV datasets: a header row with `text` and `label` columns, label
//! one of `negative` / `positive`.

use std::path::Path;

use pulsestream_core::Sentiment;

use crate::CliError;

pub fn read_dataset(path: &Path) -> Result<Vec<(String, Sentiment)>, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Config(format!("cannot open dataset {}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let data_err = |line: u64, msg: String| CliError::Data(format!("{} line {line}: {msg}", path.display()));
    let headers = reader.headers().map_err(|e| data_err(1, e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (Some(text_col), Some(label_col)) = (col("text"), col("label")) else {
        return Err(data_err(1, "header must name \"text\" and \"label\" columns".into()));
    };
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| data_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = row.position().map_or(0, |p| p.line());
        let (Some(text), Some(label)) = (row.get(text_col), row.get(label_col)) else {
            return Err(data_err(line, "missing field".into()));
        };
        let label: Sentiment = label.trim().parse().map_err(|_| data_err(line, format!("bad label {label:?}")))?;
        out.push((text.to_string(), label));
    }
    Ok(out)
}

pub fn write_dataset<'a>(path: &Path, rows: impl IntoIterator<Item = (&'a str, Sentiment)>) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Config(format!("cannot write {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["text", "label"]).map_err(io)?;
    for (text, label) in rows {
        w.write_record([text, label.as_str()]).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}
