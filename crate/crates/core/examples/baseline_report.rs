//! Metric deltas against the published baseline tables.
//!
//!     cargo run --example baseline_report

use std::path::Path;

use cornercase::report::{report, BaselineTable};

fn main() -> cornercase::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    for file in ["table1.json", "table2.json"] {
        let table = BaselineTable::load(dir.join(file))?;
        let rep = report(table.row("MENOL")?, &table)?;
        println!("{file}");
        print!("{}", rep.to_text());
        println!();
    }
    Ok(())
}
