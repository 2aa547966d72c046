#![allow(dead_code)]

use didsens::{load_panel_csv, CsvSchema, PanelDataset};

pub fn nsw_path() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/nsw_dw_cps.csv")
}

/// Experimental NSW treated units with the CPS comparison sample, 1974/1975/1978.
pub fn nsw() -> PanelDataset {
    load_panel_csv(nsw_path(), &CsvSchema::new("id", "year", "re", "treat")).expect("fixture loads")
}

pub fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs()
}
