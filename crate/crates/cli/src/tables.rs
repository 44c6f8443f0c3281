//! Output sink: comma-separated tables with header rows, a plain-text
//! summary, and the resolved config echo. Numeric formatting is fixed at
//! nine significant digits and writes happen single-threaded in declaration
//! order, so identical runs produce byte-identical files.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

/// Nine significant digits in scientific notation, for table cells.
pub fn fmt_e(x: f64) -> String {
    format!("{x:.8e}")
}

/// Nine significant digits for human-readable summary values: plain decimal
/// in a comfortable range, scientific outside it.
pub fn fmt_plain(x: f64) -> String {
    if x == 0.0 || (x.abs() >= 1e-3 && x.abs() < 1e6) {
        format!("{x:.8}")
    } else {
        format!("{x:.8e}")
    }
}

/// One summary scalar; everything renders through Display.
#[derive(Debug, Clone)]
pub enum Scalar {
    F(f64),
    I(i64),
    B(bool),
    S(String),
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::F(x) => write!(f, "{}", fmt_plain(*x)),
            Scalar::I(n) => write!(f, "{n}"),
            Scalar::B(b) => write!(f, "{b}"),
            Scalar::S(s) => write!(f, "{s}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub header: String,
    pub rows: Vec<String>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: impl Into<String>) -> Self {
        Table {
            name: name.into(),
            header: header.into(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: String) {
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = String::with_capacity(self.header.len() + 32 * self.rows.len());
        out.push_str(&self.header);
        out.push('\n');
        for row in &self.rows {
            out.push_str(row);
            out.push('\n');
        }
        out
    }
}

/// Everything one run produces besides its exit status.
#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub scalars: Vec<(String, Scalar)>,
    pub tables: Vec<Table>,
    /// Extra plain-text files (name, contents), e.g. survivor word lists.
    pub texts: Vec<(String, String)>,
}

impl ExperimentOutput {
    pub fn scalar(&mut self, name: &str, value: Scalar) {
        self.scalars.push((name.to_string(), value));
    }
}

/// Write tables, the resolved config echo, and the summary. The wall clock
/// goes only into the summary so tables stay reproducible byte for byte.
pub fn write_outputs(
    dir: &Path,
    kind: &str,
    version: &str,
    echo_toml: &str,
    output: &ExperimentOutput,
    wall_seconds: f64,
) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("resolved.toml"), echo_toml)?;
    for table in &output.tables {
        fs::write(dir.join(format!("{}.csv", table.name)), table.render())?;
    }
    for (name, text) in &output.texts {
        fs::write(dir.join(name), text)?;
    }
    let mut summary = fs::File::create(dir.join("summary.txt"))?;
    writeln!(summary, "tool = {version}")?;
    writeln!(summary, "kind = {kind}")?;
    for (name, value) in &output.scalars {
        writeln!(summary, "{name} = {value}")?;
    }
    for table in &output.tables {
        writeln!(
            summary,
            "table = {}.csv ({} rows)",
            table.name,
            table.rows.len()
        )?;
    }
    writeln!(summary, "wall_clock_seconds = {wall_seconds:.3}")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formatting_keeps_nine_significant_digits() {
        assert_eq!(fmt_e(0.6309297535714574), "6.30929754e-1");
        assert_eq!(fmt_plain(0.6309297535714574), "0.63092975");
        assert_eq!(fmt_plain(1.4854268271702417), "1.48542683");
        assert_eq!(fmt_plain(3.2e-9), "3.20000000e-9");
    }

    #[test]
    fn tables_render_with_header_and_trailing_newline() {
        let mut t = Table::new("demo", "a,b");
        t.push("1,2".into());
        assert_eq!(t.render(), "a,b\n1,2\n");
    }
}
