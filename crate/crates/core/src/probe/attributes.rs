use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Values of one attribute over all entities; `mask[i]` is false where the
/// value is unknown, and such values are never read.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeColumn {
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl AttributeColumn {
    pub fn value(&self, i: usize) -> Option<f64> {
        self.mask[i].then(|| self.values[i])
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn covered_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Indices and values of covered entities, in index order.
    pub fn covered(&self) -> (Vec<usize>, Vec<f64>) {
        (0..self.values.len())
            .filter(|&i| self.mask[i])
            .map(|i| (i, self.values[i]))
            .unzip()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AttributeTable {
    n: usize,
    columns: BTreeMap<String, AttributeColumn>,
}

impl AttributeTable {
    pub fn new(n: usize) -> Self {
        AttributeTable {
            n,
            columns: BTreeMap::new(),
        }
    }

    pub fn entity_count(&self) -> usize {
        self.n
    }

    /// Adds or replaces an attribute with partial coverage.
    pub fn insert(&mut self, name: impl Into<String>, values: Vec<Option<f64>>) -> Result<()> {
        if values.len() != self.n {
            return Err(invalid(format!("attribute has {} values for {} entities", values.len(), self.n)));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("attribute values must be finite"));
        }
        let mask = values.iter().map(Option::is_some).collect();
        let values = values.into_iter().map(|v| v.unwrap_or(0.0)).collect();
        self.columns.insert(name.into(), AttributeColumn { values, mask });
        Ok(())
    }

    /// Adds a fully covered attribute.
    pub fn insert_full(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        self.insert(name, values.into_iter().map(Some).collect())
    }

    pub fn get(&self, name: &str) -> Result<&AttributeColumn> {
        self.columns
            .get(name)
            .ok_or_else(|| invalid(format!("no attribute named `{name}`")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.keys().map(String::as_str)
    }

    /// Reads `entity_id,attr1,attr2,...`; empty cells are missing values.
    /// Rows for entities outside `names` are ignored and counted.
    pub fn read_csv<R: Read>(reader: R, names: &[String]) -> Result<(Self, usize)> {
        let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.get(0) != Some("entity_id") {
            return Err(Error::Format("attribute CSV must start with an `entity_id` column".into()));
        }
        let attrs: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut cols: Vec<Vec<Option<f64>>> = vec![vec![None; names.len()]; attrs.len()];
        let mut unknown = 0;
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let Some(&i) = rec.get(0).and_then(|id| index.get(id)) else {
                unknown += 1;
                continue;
            };
            for (k, col) in cols.iter_mut().enumerate() {
                let cell = rec.get(k + 1).unwrap_or("").trim();
                if cell.is_empty() {
                    continue;
                }
                col[i] = Some(cell.parse().map_err(|_| Error::Parse {
                    line: row + 2,
                    message: format!("`{cell}` is not a number in column {}", attrs[k]),
                })?);
            }
        }
        let mut table = AttributeTable::new(names.len());
        for (name, values) in attrs.into_iter().zip(cols) {
            table.insert(name, values)?;
        }
        Ok((table, unknown))
    }

    pub fn write_csv<W: Write>(&self, writer: W, names: &[String]) -> Result<()> {
        if names.len() != self.n {
            return Err(invalid("entity name list does not match the table"));
        }
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["entity_id".to_string()];
        header.extend(self.columns.keys().cloned());
        w.write_record(&header)?;
        for (i, name) in names.iter().enumerate() {
            let mut rec = vec![name.clone()];
            rec.extend(
                self.columns
                    .values()
                    .map(|c| c.value(i).map(|v| v.to_string()).unwrap_or_default()),
            );
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_with_missing_cells() {
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let mut t = AttributeTable::new(3);
        t.insert("lr", vec![Some(1.5), None, Some(-2.0)]).unwrap();
        t.insert_full("age", vec![30.0, 40.0, 50.0]).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf, &names).unwrap();
        let (back, unknown) = AttributeTable::read_csv(buf.as_slice(), &names).unwrap();
        assert_eq!(back, t);
        assert_eq!(unknown, 0);
        assert_eq!(back.get("lr").unwrap().covered(), (vec![0, 2], vec![1.5, -2.0]));
    }

    #[test]
    fn unknown_entities_are_counted() {
        let names = vec!["a".to_string()];
        let (t, unknown) = AttributeTable::read_csv("entity_id,x\na,1\nzz,2\n".as_bytes(), &names).unwrap();
        assert_eq!(unknown, 1);
        assert_eq!(t.get("x").unwrap().value(0), Some(1.0));
    }

    #[test]
    fn bad_cells_report_line() {
        let names = vec!["a".to_string()];
        let err = AttributeTable::read_csv("entity_id,x\na,oops\n".as_bytes(), &names).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn length_mismatch_rejected() {
        let mut t = AttributeTable::new(2);
        assert!(t.insert_full("x", vec![1.0]).is_err());
        assert!(t.get("missing").is_err());
    }
}
