//! Per-layer compression tables.

use std::fmt::Write;

use crate::model::{Model, ParameterCount};

/// `"1.0029% (100×)"`: percentage kept to four decimals, then `total / kept` rounded.
pub fn format_rate(count: &ParameterCount) -> String {
    format!("{:.4}% ({}×)", count.rate() * 100.0, count.reduction())
}

/// One row per weighted layer plus a totals row. Biases are not counted.
pub fn layer_table(model: &Model) -> String {
    let mut out = String::from("layer type original remaining rate\n");
    let rows = model.layer_counts();
    for (name, kind, c) in &rows {
        writeln!(out, "{name} {kind} {} {} {}", c.total, c.kept, format_rate(c)).unwrap();
    }
    let total = model.count_parameters();
    writeln!(out, "total - {} {} {}", total.total, total.kept, format_rate(&total)).unwrap();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_percent_rows() {
        assert_eq!(format_rate(&ParameterCount { total: 23_232, kept: 233 }), "1.0029% (100×)");
        assert_eq!(format_rate(&ParameterCount { total: 307_200, kept: 3_074 }), "1.0007% (100×)");
        assert_eq!(format_rate(&ParameterCount { total: 23_232, kept: 128 }), "0.5510% (182×)");
        assert_eq!(format_rate(&ParameterCount { total: 57_035_456, kept: 570_365 }), "1.0000% (100×)");
    }

    #[test]
    fn untruncated_row() {
        assert_eq!(format_rate(&ParameterCount { total: 784, kept: 784 }), "100.0000% (1×)");
    }
}
