use crate::error::{Error, Result};

/// A typed table cell; the type fixes its formatting.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Int(u64),
    /// Decibels, two decimals.
    Psnr(f64),
    /// Structural similarity, four decimals.
    Ssim(f64),
    Float { value: f64, decimals: usize },
}

impl Cell {
    pub fn render(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(n) => n.to_string(),
            Cell::Psnr(v) => format!("{v:.2}"),
            Cell::Ssim(v) => format!("{v:.4}"),
            Cell::Float { value, decimals } => format!("{value:.decimals$}"),
        }
    }

    fn right_aligned(&self) -> bool {
        !matches!(self, Cell::Text(_))
    }
}

/// Rows with a fixed header, emitted as aligned text or CSV.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<I, S>(headers: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Table { headers: headers.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: impl IntoIterator<Item = Cell>) {
        let row: Vec<Cell> = row.into_iter().collect();
        assert_eq!(row.len(), self.headers.len(), "row width must match header");
        self.rows.push(row);
    }

    pub fn to_text(&self) -> String {
        let rendered: Vec<Vec<String>> =
            self.rows.iter().map(|r| r.iter().map(Cell::render).collect()).collect();
        let widths: Vec<usize> = (0..self.headers.len())
            .map(|c| {
                rendered
                    .iter()
                    .map(|r| r[c].chars().count())
                    .chain(std::iter::once(self.headers[c].chars().count()))
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        let header: Vec<String> =
            self.headers.iter().zip(&widths).map(|(h, w)| format!("{h:<w$}")).collect();
        out.push_str(header.join("  ").trim_end());
        out.push('\n');
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        out.push_str(&rule.join("  "));
        out.push('\n');
        for (row, cells) in rendered.iter().zip(&self.rows) {
            let line: Vec<String> = row
                .iter()
                .zip(cells)
                .zip(&widths)
                .map(|((s, cell), w)| {
                    if cell.right_aligned() {
                        format!("{s:>w$}")
                    } else {
                        format!("{s:<w$}")
                    }
                })
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Input(format!("csv: {e}"));
        w.write_record(&self.headers).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Input(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_table_is_header_only() {
        let t = Table::new(["a", "b"]);
        assert_eq!(t.to_csv().unwrap(), "a,b\n");
        assert_eq!(t.to_text().lines().count(), 2);
    }

    #[test]
    fn numeric_formatting() {
        assert_eq!(Cell::Int(298_000).render(), "298000");
        assert_eq!(Cell::Psnr(32.2449).render(), "32.24");
        assert_eq!(Cell::Ssim(0.894_71).render(), "0.8947");
    }

    #[test]
    fn csv_roundtrip() {
        let mut t = Table::new(["image", "psnr", "ssim"]);
        t.push([Cell::Text("a, \"quoted\"".into()), Cell::Psnr(30.123), Cell::Ssim(0.91234)]);
        t.push([Cell::Text("b".into()), Cell::Psnr(28.0), Cell::Ssim(0.8)]);
        let csv = t.to_csv().unwrap();
        let mut r = csv::Reader::from_reader(csv.as_bytes());
        let rows: Vec<csv::StringRecord> = r.records().map(|r| r.unwrap()).collect();
        assert_eq!(&rows[0][0], "a, \"quoted\"");
        assert_eq!(rows[0][1].parse::<f64>().unwrap(), 30.12);
        assert_eq!(rows[1][2].parse::<f64>().unwrap(), 0.8);
    }

    #[test]
    fn text_is_aligned() {
        let mut t = Table::new(["name", "n"]);
        t.push([Cell::Text("x".into()), Cell::Int(5)]);
        t.push([Cell::Text("longer".into()), Cell::Int(12345)]);
        let text = t.to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[2].len(), lines[3].len());
    }
}
