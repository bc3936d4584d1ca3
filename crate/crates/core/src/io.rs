//! Long-format CSV for panels and efficiency matrices.
//!
//! A panel file has one row per (unit, period) cell and the header
//! `unit,period,y,x1..xP,w1..wQ,z1..zR` in any column order. `y` and the
//! `x` columns hold levels and must be positive; they are logged on read and
//! exponentiated on write. Lines starting with `#` are comments.
//!
//! Units and periods keep their order of first appearance.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, Array3, ArrayView2};

use crate::error::{Error, Result};
use crate::model::PanelDataset;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Col {
    Unit,
    Period,
    Y,
    X(usize),
    W(usize),
    Z(usize),
}

fn classify(name: &str) -> Option<Col> {
    match name {
        "unit" => return Some(Col::Unit),
        "period" => return Some(Col::Period),
        "y" => return Some(Col::Y),
        _ => {}
    }
    let (prefix, digits) = name.split_at(1.min(name.len()));
    let idx: usize = digits.parse().ok().filter(|&k| k >= 1 && !digits.starts_with('0'))?;
    match prefix {
        "x" => Some(Col::X(idx - 1)),
        "w" => Some(Col::W(idx - 1)),
        "z" => Some(Col::Z(idx - 1)),
        _ => None,
    }
}

// Number of indexed columns of one family, which must be exactly 1..=count.
fn family_count(cols: &[Col], pick: impl Fn(Col) -> Option<usize>, letter: char) -> Result<usize> {
    let mut idx: Vec<usize> = cols.iter().filter_map(|&c| pick(c)).collect();
    idx.sort_unstable();
    for (expect, &got) in idx.iter().enumerate() {
        if got != expect {
            return Err(Error::Invalid(format!(
                "{letter} columns must be numbered {letter}1..{letter}{} without gaps or repeats",
                idx.len()
            )));
        }
    }
    Ok(idx.len())
}

fn csv_reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn row_of(record: &csv::StringRecord) -> usize {
    record.position().map(|p| p.line() as usize).unwrap_or(0)
}

fn parse_cell(record: &csv::StringRecord, pos: usize, name: &str) -> Result<f64> {
    let raw = record.get(pos).unwrap_or("");
    let value: f64 = raw.parse().map_err(|_| Error::CsvRow {
        row: row_of(record),
        message: format!("column {name}: '{raw}' is not a number"),
    })?;
    if !value.is_finite() {
        return Err(Error::CsvRow {
            row: row_of(record),
            message: format!("column {name}: value must be finite"),
        });
    }
    Ok(value)
}

/// Index of first appearance for unit and period labels.
#[derive(Default)]
struct Keys {
    order: Vec<String>,
    index: HashMap<String, usize>,
}

impl Keys {
    fn id(&mut self, key: &str) -> usize {
        if let Some(&i) = self.index.get(key) {
            return i;
        }
        self.order.push(key.to_string());
        self.index.insert(key.to_string(), self.order.len() - 1);
        self.order.len() - 1
    }
}

/// Reads a panel from CSV text.
pub fn read_panel<S: Scalar, R: Read>(input: R) -> Result<PanelDataset<S>> {
    let mut reader = csv_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let mut cols = Vec::with_capacity(header.len());
    for name in &header {
        cols.push(classify(name).ok_or_else(|| Error::UnknownColumn(name.clone()))?);
    }
    for (need, col) in [("unit", Col::Unit), ("period", Col::Period), ("y", Col::Y)] {
        match cols.iter().filter(|&&c| c == col).count() {
            1 => {}
            0 => return Err(Error::Invalid(format!("missing required column '{need}'"))),
            _ => return Err(Error::Invalid(format!("column '{need}' appears more than once"))),
        }
    }
    let p = family_count(&cols, |c| if let Col::X(k) = c { Some(k) } else { None }, 'x')?;
    let q = family_count(&cols, |c| if let Col::W(k) = c { Some(k) } else { None }, 'w')?;
    let r = family_count(&cols, |c| if let Col::Z(k) = c { Some(k) } else { None }, 'z')?;
    if p == 0 {
        return Err(Error::Invalid("at least one input column x1 required".into()));
    }
    if q == 0 {
        return Err(Error::Invalid("at least one spatial column w1 required".into()));
    }

    let mut units = Keys::default();
    let mut periods = Keys::default();
    // (unit, period) -> (row, y, x, w, z), with y and x already logged
    let mut cells: HashMap<(usize, usize), (usize, f64, Vec<f64>, Vec<f64>, Vec<f64>)> = HashMap::new();
    for record in reader.records() {
        let record = record?;
        let row = row_of(&record);
        if record.len() != header.len() {
            return Err(Error::CsvRow {
                row,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        let (mut unit, mut period, mut y) = (None, None, 0.0);
        let (mut x, mut w, mut z) = (vec![0.0; p], vec![0.0; q], vec![0.0; r]);
        for (pos, &col) in cols.iter().enumerate() {
            let name = &header[pos];
            match col {
                Col::Unit => unit = Some(units.id(&record[pos])),
                Col::Period => period = Some(periods.id(&record[pos])),
                Col::Y => {
                    let v = parse_cell(&record, pos, name)?;
                    if v <= 0.0 {
                        return Err(Error::CsvRow {
                            row,
                            message: format!("output must be positive (y = {v})"),
                        });
                    }
                    y = v.ln();
                }
                Col::X(k) => {
                    let v = parse_cell(&record, pos, name)?;
                    if v <= 0.0 {
                        return Err(Error::CsvRow {
                            row,
                            message: format!("input {name} must be positive ({name} = {v})"),
                        });
                    }
                    x[k] = v.ln();
                }
                Col::W(k) => w[k] = parse_cell(&record, pos, name)?,
                Col::Z(k) => z[k] = parse_cell(&record, pos, name)?,
            }
        }
        let key = (unit.expect("unit column present"), period.expect("period column present"));
        if let Some(prev) = cells.insert(key, (row, y, x, w, z)) {
            return Err(Error::CsvRow {
                row,
                message: format!(
                    "duplicate cell (unit {}, period {}) first seen on row {}",
                    units.order[key.0], periods.order[key.1], prev.0
                ),
            });
        }
    }

    let (n, t_len) = (units.order.len(), periods.order.len());
    let mut log_y = Array2::<S>::zeros((n, t_len));
    let mut log_x = Array3::<S>::zeros((n, t_len, p));
    let mut spatial = Array3::<S>::zeros((n, t_len, q));
    let mut cov = Array3::<S>::zeros((n, t_len, r));
    for i in 0..n {
        for t in 0..t_len {
            let Some((_, y, x, w, z)) = cells.get(&(i, t)) else {
                return Err(Error::MissingCell {
                    unit: units.order[i].clone(),
                    period: periods.order[t].clone(),
                });
            };
            log_y[[i, t]] = S::lit(*y);
            for (k, &v) in x.iter().enumerate() {
                log_x[[i, t, k]] = S::lit(v);
            }
            for (k, &v) in w.iter().enumerate() {
                spatial[[i, t, k]] = S::lit(v);
            }
            for (k, &v) in z.iter().enumerate() {
                cov[[i, t, k]] = S::lit(v);
            }
        }
    }
    PanelDataset::new(log_y, log_x, spatial, cov, units.order, periods.order)
}

pub fn read_panel_csv<S: Scalar>(path: impl AsRef<Path>) -> Result<PanelDataset<S>> {
    read_panel(BufReader::new(File::open(path)?))
}

fn write_comments<W: Write>(out: &mut W, comments: &[String]) -> Result<()> {
    for c in comments {
        for line in c.lines() {
            writeln!(out, "# {line}")?;
        }
    }
    Ok(())
}

/// Writes a panel as CSV text, preceded by `comments` as `#` lines.
pub fn write_panel<S: Scalar, W: Write>(panel: &PanelDataset<S>, out: W, comments: &[String]) -> Result<()> {
    let mut out = BufWriter::new(out);
    write_comments(&mut out, comments)?;
    let (p, q, r) = (panel.n_inputs(), panel.n_spatial(), panel.n_covariates());
    let mut writer = csv::Writer::from_writer(out);
    let mut header = vec!["unit".to_string(), "period".to_string(), "y".to_string()];
    header.extend((1..=p).map(|k| format!("x{k}")));
    header.extend((1..=q).map(|k| format!("w{k}")));
    header.extend((1..=r).map(|k| format!("z{k}")));
    writer.write_record(&header)?;
    let mut fields: Vec<String> = Vec::with_capacity(header.len());
    for (i, unit) in panel.unit_ids().iter().enumerate() {
        for (t, period) in panel.period_ids().iter().enumerate() {
            fields.clear();
            fields.push(unit.clone());
            fields.push(period.clone());
            fields.push(panel.log_output()[[i, t]].as_f64().exp().to_string());
            fields.extend(panel.inputs_at(i, t).iter().map(|v| v.as_f64().exp().to_string()));
            fields.extend(panel.spatial_at(i, t).iter().map(|v| v.as_f64().to_string()));
            fields.extend(panel.covariates_at(i, t).iter().map(|v| v.as_f64().to_string()));
            writer.write_record(&fields)?;
        }
    }
    writer.flush()?;
    Ok(())
}

pub fn write_panel_csv<S: Scalar>(panel: &PanelDataset<S>, path: impl AsRef<Path>) -> Result<()> {
    write_panel(panel, File::create(path)?, &[])
}

/// Writes an `N x T` efficiency matrix as `unit,period,te` rows.
pub fn write_te<S: Scalar, W: Write>(
    te: ArrayView2<S>,
    unit_ids: &[String],
    period_ids: &[String],
    out: W,
    comments: &[String],
) -> Result<()> {
    if te.dim() != (unit_ids.len(), period_ids.len()) {
        return Err(Error::DimensionMismatch {
            what: "technical efficiency matrix",
            expected: unit_ids.len() * period_ids.len(),
            actual: te.len(),
        });
    }
    let mut out = BufWriter::new(out);
    write_comments(&mut out, comments)?;
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["unit", "period", "te"])?;
    for (i, unit) in unit_ids.iter().enumerate() {
        for (t, period) in period_ids.iter().enumerate() {
            writer.write_record([unit.as_str(), period.as_str(), &te[[i, t]].as_f64().to_string()])?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Reads an efficiency matrix laid out on the given unit and period ids.
pub fn read_te<S: Scalar, R: Read>(input: R, unit_ids: &[String], period_ids: &[String]) -> Result<Array2<S>> {
    let mut reader = csv_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let mut pos = [None; 3];
    for (k, name) in header.iter().enumerate() {
        let slot = match name.as_str() {
            "unit" => 0,
            "period" => 1,
            "te" => 2,
            other => return Err(Error::UnknownColumn(other.to_string())),
        };
        pos[slot] = Some(k);
    }
    let [Some(pu), Some(pp), Some(pt)] = pos else {
        return Err(Error::Invalid("efficiency file needs columns unit, period, te".into()));
    };
    let unit_index: HashMap<&str, usize> = unit_ids.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
    let period_index: HashMap<&str, usize> =
        period_ids.iter().enumerate().map(|(t, p)| (p.as_str(), t)).collect();
    let mut te = Array2::<S>::zeros((unit_ids.len(), period_ids.len()));
    let mut seen = Array2::<bool>::from_elem(te.raw_dim(), false);
    for record in reader.records() {
        let record = record?;
        let row = row_of(&record);
        let lookup = |map: &HashMap<&str, usize>, p: usize, what: &str| {
            let key = record.get(p).unwrap_or("");
            map.get(key).copied().ok_or_else(|| Error::CsvRow {
                row,
                message: format!("{what} '{key}' is not in the panel"),
            })
        };
        let i = lookup(&unit_index, pu, "unit")?;
        let t = lookup(&period_index, pp, "period")?;
        if seen[[i, t]] {
            return Err(Error::CsvRow {
                row,
                message: format!("duplicate cell (unit {}, period {})", unit_ids[i], period_ids[t]),
            });
        }
        seen[[i, t]] = true;
        te[[i, t]] = S::lit(parse_cell(&record, pt, "te")?);
    }
    if let Some(((i, t), _)) = seen.indexed_iter().find(|(_, &s)| !s) {
        return Err(Error::MissingCell {
            unit: unit_ids[i].clone(),
            period: period_ids[t].clone(),
        });
    }
    Ok(te)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Scenario;
    use crate::simulate::simulate_panel;

    const SMALL: &str = "unit,period,y,x1,w1\n\
        a,1,2.0,1.0,0.1\na,2,2.5,1.5,0.2\na,3,3.0,2.0,0.3\n\
        b,1,1.0,1.0,0.4\nb,2,1.5,1.5,0.5\nb,3,2.0,2.0,0.6\n";

    #[test]
    fn round_trip() {
        let sim = simulate_panel(&Scenario::<f64>::new(5, 4, 8)).unwrap();
        let mut buf = Vec::new();
        write_panel(&sim.panel, &mut buf, &["run info".to_string()]).unwrap();
        let back: PanelDataset<f64> = read_panel(buf.as_slice()).unwrap();
        assert_eq!(back.unit_ids(), sim.panel.unit_ids());
        assert_eq!(back.period_ids(), sim.panel.period_ids());
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(1.0);
        for (a, b) in back.log_output().iter().zip(sim.panel.log_output()) {
            assert!(close(*a, *b));
        }
        for (a, b) in back.log_inputs().iter().zip(sim.panel.log_inputs()) {
            assert!(close(*a, *b));
        }
        assert_eq!(back.spatial(), sim.panel.spatial());
        assert_eq!(back.covariates(), sim.panel.covariates());
    }

    #[test]
    fn reads_small_file_in_any_column_order() {
        let p: PanelDataset<f64> = read_panel(SMALL.as_bytes()).unwrap();
        assert_eq!((p.n_units(), p.n_periods(), p.n_inputs(), p.n_spatial(), p.n_covariates()), (2, 3, 1, 1, 0));
        assert!((p.log_output()[[0, 1]] - 2.5f64.ln()).abs() < 1e-15);
        let shuffled = "w1,y,period,unit,x1\n0.1,2.0,1,a,1.0\n0.2,2.5,2,a,1.5\n0.3,3.0,3,a,2.0\n\
            0.4,1.0,1,b,1.0\n0.5,1.5,2,b,1.5\n0.6,2.0,3,b,2.0\n";
        let q: PanelDataset<f64> = read_panel(shuffled.as_bytes()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn unknown_column_named() {
        let bad = SMALL.replacen("w1", "weight", 1);
        match read_panel::<f64, _>(bad.as_bytes()) {
            Err(Error::UnknownColumn(c)) => assert_eq!(c, "weight"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_output_cites_row() {
        let bad = SMALL.replacen("b,2,1.5", "b,2,0", 1);
        let err = read_panel::<f64, _>(bad.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::CsvRow { row: 6, .. }), "{err:?}");
        assert!(err.to_string().contains("output must be positive"));
    }

    #[test]
    fn missing_cell_named() {
        let mut text = String::from("unit,period,y,x1,w1\n");
        for u in 1..=4 {
            for t in 1..=8 {
                if (u, t) != (3, 7) {
                    text.push_str(&format!("{u},{t},1.5,{},0.{u}\n", 1.0 + t as f64));
                }
            }
        }
        match read_panel::<f64, _>(text.as_bytes()) {
            Err(Error::MissingCell { unit, period }) => assert_eq!((unit.as_str(), period.as_str()), ("3", "7")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_rows() {
        let dup = format!("{SMALL}a,2,2.5,1.5,0.2\n");
        assert!(matches!(read_panel::<f64, _>(dup.as_bytes()), Err(Error::CsvRow { row: 8, .. })));
        let nan = SMALL.replacen("0.5", "abc", 1);
        assert!(matches!(read_panel::<f64, _>(nan.as_bytes()), Err(Error::CsvRow { row: 6, .. })));
        let gap = SMALL.replacen("w1", "w2", 1);
        assert!(matches!(read_panel::<f64, _>(gap.as_bytes()), Err(Error::Invalid(_))));
    }

    #[test]
    fn comments_skipped() {
        let text = format!("# generated\n{SMALL}");
        assert!(read_panel::<f64, _>(text.as_bytes()).is_ok());
    }

    #[test]
    fn te_round_trip() {
        let units: Vec<String> = ["a", "b"].map(String::from).to_vec();
        let periods: Vec<String> = ["1", "2", "3"].map(String::from).to_vec();
        let te = Array2::from_shape_fn((2, 3), |(i, t)| 0.5 + 0.1 * i as f64 + 0.01 * t as f64 + 1e-13);
        let mut buf = Vec::new();
        write_te(te.view(), &units, &periods, &mut buf, &[]).unwrap();
        let back: Array2<f64> = read_te(buf.as_slice(), &units, &periods).unwrap();
        assert_eq!(back, te);
        let short = "unit,period,te\na,1,0.5\n";
        assert!(matches!(read_te::<f64, _>(short.as_bytes(), &units, &periods), Err(Error::MissingCell { .. })));
    }
}
