//! Writes a synthetic record CSV: `cargo run --example sample_data -- N SEED OUT`.

use std::fs::File;
use std::io::BufWriter;

fn main() -> std::io::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n = args.first().map_or(600, |s| s.parse().expect("N"));
    let seed = args.get(1).map_or(7, |s| s.parse().expect("SEED"));
    let out = args.get(2).map_or("sample_records.csv", String::as_str);
    let records = dbforge::synthetic::synthetic_records(n, seed);
    dbforge::synthetic::write_csv(&records, &mut BufWriter::new(File::create(out)?))
}
