//! Loads a `timestamp,node_id,feat_0,...` series with an adjacency CSV.
//! Empty cells and absent rows become masked entries.

use stuq::harness::{load_dataset, CsvSchema};
use stuq::spatial::SupportKind;

/// Two dozen steps for three road sensors; sensor `b` misses a flow reading
/// at `t1` and has no row at all for `t5`.
fn series_csv() -> String {
    let mut out = String::from("timestamp,node_id,speed,flow\n");
    for t in 0..24 {
        for (node, base) in [("a", 60.0), ("b", 57.0), ("c", 63.0)] {
            if node == "b" && t == 5 {
                continue;
            }
            let speed = base - 0.2 * t as f64;
            let flow = if node == "b" && t == 1 { String::new() } else { format!("{}", 300 + 3 * t) };
            out.push_str(&format!("t{t:02},{node},{speed:.1},{flow}\n"));
        }
    }
    out
}

const ADJACENCY: &str = "\
a,b,c
1,0.5,0
0.4,1,0.7
0,0.6,1
";

fn main() -> stuq::Result<()> {
    let dir = std::env::temp_dir().join("stuq-csv-example");
    std::fs::create_dir_all(&dir)?;
    let (series, adjacency) = (dir.join("speeds.csv"), dir.join("adjacency.csv"));
    std::fs::write(&series, series_csv())?;
    std::fs::write(&adjacency, ADJACENCY)?;

    let schema = CsvSchema { input_len: 2, horizon: 1, split: [0.6, 0.2, 0.2], grid: None };
    let data = load_dataset(&series, Some(&adjacency), &schema)?;
    let observed = data.observed().iter().filter(|&&o| o).count();
    println!(
        "{}: {} steps, {} nodes {:?}, {} features, {observed}/{} entries observed",
        data.name,
        data.steps(),
        data.nodes(),
        data.node_ids,
        data.features(),
        data.observed().len()
    );
    println!("normalizer mean {:?} std {:?}", data.normalizer.mean, data.normalizer.std);
    println!("splits {:?}", data.splits);
    let layout = data.layout(&[SupportKind::RandomWalk])?;
    println!("layout covers {} nodes", layout.node_count());
    Ok(())
}
