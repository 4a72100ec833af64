//! CSV reports. Each file starts with `# config_hash=<hash> seed=<seed>`
//! followed by the header row.

use std::io::Write;
use std::path::Path;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Table {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Index of column `name`.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| *h == name)
    }

    pub fn write(&self, w: impl Write, config: &ExperimentConfig) -> Result<()> {
        let mut w = w;
        writeln!(w, "# config_hash={} seed={}", config.hash(), config.seed).map_err(csv::Error::from)?;
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(&self.header)?;
        for row in &self.rows {
            csv.write_record(row)?;
        }
        csv.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn save(&self, path: &Path, config: &ExperimentConfig) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
        }
        let file = std::fs::File::create(path).map_err(HarnessError::io(path))?;
        self.write(std::io::BufWriter::new(file), config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Experiment, ExperimentConfig};

    #[test]
    fn comment_then_header() {
        let config = ExperimentConfig::defaults(Experiment::Localization);
        let mut t = Table::new(&["H", "ell", "errloc"]);
        t.push(vec!["5.0000000000000000e-1".into(), "1".into(), "nan".into()]);
        let mut buf = Vec::new();
        t.write(&mut buf, &config).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], format!("# config_hash={} seed=7", config.hash()));
        assert_eq!(lines[1], "H,ell,errloc");
        assert_eq!(lines[2], "5.0000000000000000e-1,1,nan");
        assert_eq!(t.column("errloc"), Some(2));
    }
}
