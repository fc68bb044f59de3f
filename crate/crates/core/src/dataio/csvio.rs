use std::collections::BTreeSet;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::ambiguity::{AnnotationRecord, AnnotationTable};
use crate::error::{Error, Result};
use crate::probs::{validate_probabilities, ProbabilityMatrix};
use crate::scalar::Scalar;

/// Probability rows with their instance ids and the class names from the
/// header.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledProbabilities<T> {
    pub ids: Vec<String>,
    pub class_names: Vec<String>,
    pub probs: ProbabilityMatrix<T>,
}

/// True labels keyed by instance id, in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelFile {
    pub ids: Vec<String>,
    pub labels: Vec<usize>,
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::parse(display(path), line, err.to_string())
}

fn header(path: &Path, rdr: &mut csv::Reader<File>, expected: &[&str]) -> Result<Vec<String>> {
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(Error::parse(display(path), 1, "missing header row"));
    }
    let names: Vec<String> = headers.iter().map(str::to_string).collect();
    for (i, want) in expected.iter().enumerate() {
        if names.get(i).map(String::as_str) != Some(want) {
            return Err(Error::parse(
                display(path),
                1,
                format!(
                    "header column {} must be {want:?}, got {:?}",
                    i + 1,
                    names.get(i)
                ),
            ));
        }
    }
    Ok(names)
}

/// Maps a label field to a class index: an exact class-name match wins,
/// otherwise the field must be an in-range integer.
pub fn resolve_label(field: &str, class_names: &[String]) -> std::result::Result<usize, String> {
    if let Some(i) = class_names.iter().position(|c| c == field) {
        return Ok(i);
    }
    match field.parse::<usize>() {
        Ok(i) if i < class_names.len() => Ok(i),
        Ok(i) => Err(format!(
            "label {i} out of range for {} classes",
            class_names.len()
        )),
        Err(_) => Err(format!("unknown class label {field:?}")),
    }
}

fn check_unique_ids(path: &Path, ids: &[String], lines: &[usize]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for (id, &line) in ids.iter().zip(lines) {
        if !seen.insert(id.as_str()) {
            return Err(Error::parse(
                display(path),
                line,
                format!("duplicate instance id {id:?}"),
            ));
        }
    }
    Ok(())
}

/// Reads `id,<class_0>,...,<class_{K-1}>` rows, validating each softmax row.
pub fn load_probabilities<T: Scalar>(path: impl AsRef<Path>) -> Result<LabeledProbabilities<T>> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    let names = header(path, &mut rdr, &["id"])?;
    let class_names: Vec<String> = names[1..].to_vec();
    if class_names.len() < 2 {
        return Err(Error::parse(
            display(path),
            1,
            "header must name at least 2 classes",
        ));
    }
    let k = class_names.len();
    let (mut ids, mut lines, mut data) = (Vec::new(), Vec::new(), Vec::new());
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != k + 1 {
            return Err(Error::parse(
                display(path),
                line,
                format!("expected {} fields, got {}", k + 1, record.len()),
            ));
        }
        let row = record
            .iter()
            .skip(1)
            .map(|f| {
                f.parse::<f64>()
                    .map(T::of)
                    .map_err(|_| Error::parse(display(path), line, format!("not a number: {f:?}")))
            })
            .collect::<Result<Vec<T>>>()?;
        validate_probabilities(&row).map_err(|m| Error::parse(display(path), line, m))?;
        ids.push(record[0].to_string());
        lines.push(line);
        data.extend(row);
    }
    if ids.is_empty() {
        return Err(Error::parse(display(path), 1, "no probability rows"));
    }
    check_unique_ids(path, &ids, &lines)?;
    let probs = ProbabilityMatrix::from_flat(data, k)?;
    Ok(LabeledProbabilities {
        ids,
        class_names,
        probs,
    })
}

/// Reads `id,label` rows; labels may be class names or indices.
pub fn load_labels(path: impl AsRef<Path>, class_names: &[String]) -> Result<LabelFile> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    header(path, &mut rdr, &["id", "label"])?;
    let (mut ids, mut lines, mut labels) = (Vec::new(), Vec::new(), Vec::new());
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != 2 {
            return Err(Error::parse(
                display(path),
                line,
                format!("expected 2 fields, got {}", record.len()),
            ));
        }
        let label = resolve_label(&record[1], class_names)
            .map_err(|m| Error::parse(display(path), line, m))?;
        ids.push(record[0].to_string());
        lines.push(line);
        labels.push(label);
    }
    if ids.is_empty() {
        return Err(Error::parse(display(path), 1, "no label rows"));
    }
    check_unique_ids(path, &ids, &lines)?;
    Ok(LabelFile { ids, labels })
}

/// Reads long-format `id,annotator,label` records.
///
/// With `known_ids`, records naming an instance outside that list are
/// rejected with their line number.
pub fn load_annotations(
    path: impl AsRef<Path>,
    class_names: &[String],
    known_ids: Option<&[String]>,
) -> Result<AnnotationTable> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    header(path, &mut rdr, &["id", "annotator", "label"])?;
    let known: Option<BTreeSet<&str>> =
        known_ids.map(|ids| ids.iter().map(String::as_str).collect());
    let mut records = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != 3 {
            return Err(Error::parse(
                display(path),
                line,
                format!("expected 3 fields, got {}", record.len()),
            ));
        }
        let label = resolve_label(&record[2], class_names)
            .map_err(|m| Error::parse(display(path), line, m))?;
        if let Some(known) = &known {
            if !known.contains(&record[0]) {
                return Err(Error::parse(
                    display(path),
                    line,
                    format!("unknown instance id {:?}", &record[0]),
                ));
            }
        }
        records.push(AnnotationRecord {
            instance: record[0].to_string(),
            annotator: record[1].to_string(),
            label,
        });
    }
    if records.is_empty() {
        return Err(Error::parse(display(path), 1, "no annotation rows"));
    }
    AnnotationTable::new(records, class_names.len())
}

fn create(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn finish(path: &Path, mut w: csv::Writer<File>) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::io(path, std::io::Error::other(e.to_string()))
}

/// Writes probabilities at full round-trip precision.
pub fn write_probabilities<T: Scalar>(
    path: impl AsRef<Path>,
    ids: &[String],
    class_names: &[String],
    probs: &ProbabilityMatrix<T>,
) -> Result<()> {
    let path = path.as_ref();
    if ids.len() != probs.n_rows() || class_names.len() != probs.n_classes() {
        return Err(Error::input(
            "ids/class names do not match the probability matrix",
        ));
    }
    let mut w = create(path)?;
    let mut head = vec!["id".to_string()];
    head.extend(class_names.iter().cloned());
    w.write_record(&head).map_err(write_err(path))?;
    for (id, row) in ids.iter().zip(probs.rows()) {
        let mut rec = vec![id.clone()];
        rec.extend(row.iter().map(|p| format!("{}", p.as_f64())));
        w.write_record(&rec).map_err(write_err(path))?;
    }
    finish(path, w)
}

pub fn write_labels(
    path: impl AsRef<Path>,
    ids: &[String],
    labels: &[usize],
    class_names: &[String],
) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    w.write_record(["id", "label"]).map_err(write_err(path))?;
    for (id, &y) in ids.iter().zip(labels) {
        w.write_record([id.as_str(), class_names[y].as_str()])
            .map_err(write_err(path))?;
    }
    finish(path, w)
}

pub fn write_annotations(
    path: impl AsRef<Path>,
    table: &AnnotationTable,
    class_names: &[String],
) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    w.write_record(["id", "annotator", "label"])
        .map_err(write_err(path))?;
    for r in table.records() {
        w.write_record([
            r.instance.as_str(),
            r.annotator.as_str(),
            class_names[r.label].as_str(),
        ])
        .map_err(write_err(path))?;
    }
    finish(path, w)
}

/// Writes raw text, mapping failures to an i/o error naming the path.
pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Checks that two id sequences agree element by element.
pub fn check_alignment(left: &[String], right: &[String], what: &str) -> Result<()> {
    if left.len() != right.len() {
        return Err(Error::input(format!(
            "{what}: {} vs {} instances",
            left.len(),
            right.len()
        )));
    }
    if let Some(i) = (0..left.len()).find(|&i| left[i] != right[i]) {
        return Err(Error::input(format!(
            "{what}: instance {} is {:?} on one side and {:?} on the other",
            i + 1,
            left[i],
            right[i]
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn probabilities_round_trip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![
            vec![0.1f64, 0.2, 0.7],
            vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        ];
        let probs = ProbabilityMatrix::from_rows(&rows).unwrap();
        let ids = vec!["x".to_string(), "y".to_string()];
        let names = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let p = dir.path().join("p.csv");
        write_probabilities(&p, &ids, &names, &probs).unwrap();
        let back = load_probabilities::<f64>(&p).unwrap();
        assert_eq!(back.ids, ids);
        assert_eq!(back.class_names, names);
        assert_eq!(back.probs, probs);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "p.csv", "id,a,b\nx,0.5,0.5\ny,0.5,0.6\n");
        let err = load_probabilities::<f64>(&p).unwrap_err().to_string();
        assert!(err.contains(":3:"), "{err}");
        let p = write(dir.path(), "q.csv", "id,a,b\nx,0.5,0.5\ny,0.5,abc\n");
        assert!(load_probabilities::<f64>(&p)
            .unwrap_err()
            .to_string()
            .contains(":3:"));
        let p = write(dir.path(), "r.csv", "id,a,b\nx,0.5,0.5\nx,0.5,0.5\n");
        assert!(load_probabilities::<f64>(&p)
            .unwrap_err()
            .to_string()
            .contains("duplicate"));
        let p = write(dir.path(), "s.csv", "id,a\nx,1.0\n");
        assert!(load_probabilities::<f64>(&p).is_err());
        let p = write(dir.path(), "t.csv", "");
        assert!(load_probabilities::<f64>(&p).is_err());
    }

    #[test]
    fn labels_by_name_or_index() {
        let names: Vec<String> = ["cat", "dog", "1"].iter().map(|s| s.to_string()).collect();
        assert_eq!(resolve_label("dog", &names), Ok(1));
        assert_eq!(resolve_label("0", &names), Ok(0));
        // a class named "1" shadows the index reading
        assert_eq!(resolve_label("1", &names), Ok(2));
        assert!(resolve_label("3", &names).is_err());
        assert!(resolve_label("cow", &names).is_err());
    }

    #[test]
    fn annotations_reject_unknown_ids() {
        let dir = tempfile::tempdir().unwrap();
        let names = vec!["a".to_string(), "b".to_string()];
        let p = write(
            dir.path(),
            "ann.csv",
            "id,annotator,label\nx,u1,a\nx,u2,b\nz,u1,a\n",
        );
        let known = vec!["x".to_string()];
        let err = load_annotations(&p, &names, Some(&known))
            .unwrap_err()
            .to_string();
        assert!(err.contains(":4:"), "{err}");
        let table = load_annotations(&p, &names, None).unwrap();
        assert_eq!(table.label_set("x"), Some(vec![0, 1]));
    }

    #[test]
    fn alignment() {
        let a = vec!["1".to_string(), "2".to_string()];
        let b = vec!["1".to_string(), "3".to_string()];
        assert!(check_alignment(&a, &a, "t").is_ok());
        assert!(check_alignment(&a, &b, "t").is_err());
        assert!(check_alignment(&a, &a[..1], "t").is_err());
    }
}
