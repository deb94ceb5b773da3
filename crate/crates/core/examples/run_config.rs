//! Driving the command-line runner from code: build a config, execute it and
//! write the same files the binary would.

use qdyn::cli::{execute, write_outputs, CommandId, ModelArg, RunConfig};

fn main() -> qdyn::Result<()> {
    let cfg = RunConfig { command: CommandId::Spectrum, model: ModelArg::Fib, lambda: 5.0, k: 8, ..RunConfig::default() };
    println!("{}", cfg.to_toml()?);
    println!("config hash {}", cfg.hash()?);
    let start = std::time::Instant::now();
    let out = execute(&cfg)?;
    let dir = std::env::temp_dir().join("qdyn-run-config");
    write_outputs(&dir, &out, start.elapsed().as_secs_f64())?;
    for (name, body) in &out.files {
        println!("{} ({} bytes)", dir.join(name).display(), body.len());
    }
    println!("{}", serde_json::to_string_pretty(&out.summary).unwrap_or_default());
    Ok(())
}
