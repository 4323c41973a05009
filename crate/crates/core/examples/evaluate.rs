//! Simulate a small dataset and score oracle and uniform masks on it with
//! the command-line pipeline functions.

use maskbeam::config::KeyValues;
use maskbeam::pipeline::{cmd_evaluate, cmd_simulate};

fn main() -> maskbeam::Result<()> {
    let dir = std::env::temp_dir().join(format!("maskbeam_evaluate_{}", std::process::id()));
    let data = dir.join("data");
    let sim = KeyValues::parse(&format!("scenario=2\ncount=2\nduration=2\nfft_size=512\nseed=3\nout={}", data.display()))?;
    cmd_simulate(&sim)?;
    let eval = KeyValues::parse(&format!(
        "data={}\nbeamformers=mvdr,gev-ban\npsds=block\nmask_sources=oracle,uniform\nout={}",
        data.display(),
        dir.join("eval").display()
    ))?;
    for row in cmd_evaluate(&eval)? {
        println!("{}", row.csv_row());
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

