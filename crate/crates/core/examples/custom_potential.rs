//! Runs the `spectrum` pipeline on a potential defined inline in a TOML
//! configuration, exactly as the command-line tool would.
//!
//! The potential is V(q) = cos(2 pi q) + 0.5 cos(4 pi q - 1), a tilted double well.

use pseudogen::experiment::{run, Command, ExperimentConfig};

const CONFIG: &str = r#"
t_grid = [0.1, 0.2, 0.4]
k = 4

[potential]
dim = 1
terms = [
    { coef = 1.0, freq = [1] },
    { coef = 0.5, freq = [2], phase = [1.0] },
]
"#;

fn main() -> pseudogen::Result<()> {
    let mut config = ExperimentConfig::from_toml(CONFIG)?;
    config.out = Some(std::env::temp_dir().join("pseudogen-custom-potential"));
    let output = run(Command::Spectrum, &config, true)?;
    for c in &output.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let table = std::fs::read_to_string(output.dir.join("eigenvalues.csv"))?;
    print!("{table}");
    println!("outputs in {}", output.dir.display());
    Ok(())
}
