//! Long-format plot data: one `x<TAB>series<TAB>value` row per point.

use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::experiment::records::TrialTable;

/// Writes every row of `table` as one line per column in `series`, with `x`
/// taken from `x_column`. Rows keep table order and series keep argument
/// order. `x_column` may also be `"replicate"`. The first line records the
/// config hash.
pub fn write_plot_data<W: Write>(table: &TrialTable, x_column: &str, series: &[&str], mut out: W) -> Result<()> {
    let xj = if x_column == "replicate" { None } else { Some(table.column_index(x_column)?) };
    let cols: Vec<usize> = series.iter().map(|s| table.column_index(s)).collect::<Result<_>>()?;
    writeln!(out, "# config_hash\t{}", table.config_hash)?;
    writeln!(out, "x\tseries\tvalue")?;
    for row in &table.rows {
        for (name, &j) in series.iter().zip(&cols) {
            let x = xj.map_or(row.replicate as f64, |xj| row.values[xj]);
            writeln!(out, "{x}\t{name}\t{}", row.values[j])?;
        }
    }
    Ok(())
}

pub fn emit_plot_data(table: &TrialTable, x_column: &str, series: &[&str], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_plot_data(table, x_column, series, &mut f)?;
    f.flush()?;
    Ok(())
}
