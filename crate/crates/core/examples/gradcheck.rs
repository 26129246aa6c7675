//! Finite-difference check of every parameter group on a small grid,
//! grouped the same way as `pulse gradcheck`.
//!
//! `cargo run --release --example gradcheck`

use pulse::cli::{cmd_gradcheck, gradcheck_verdict, group_max, RunConfig};
use pulse::io::KeyValues;

fn main() -> pulse::Result<()> {
    let kv = KeyValues::parse("R=8\nA=8\nD=4\nembed_dim=8\npatch_r=2\npatch_a=2\nlayers=1\nhead_hidden=16\n")?;
    let cfg = RunConfig::from_key_values(&kv)?;
    let rows = cmd_gradcheck(&cfg, None)?;
    for r in &rows {
        println!(
            "{:12} {:28} {:5} entries  max |g| {:.2e}  rel err {:.2e}",
            r.group, r.entry.name, r.entry.entries, r.entry.max_abs_grad, r.entry.max_rel_err
        );
    }
    for (group, err) in group_max(&rows) {
        println!("{group:12} worst {err:.2e}");
    }
    gradcheck_verdict(&rows)?;
    println!("all groups below tolerance");
    Ok(())
}
