//! Writes the transition tables documented in `docs/tables/`.
//!
//! ```text
//! cargo run -p odrpo-core --example transition_tables -- docs/tables
//! ```

use std::path::PathBuf;

use odrpo::EnvId;

fn main() -> std::io::Result<()> {
    let dir = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "docs/tables".into()),
    );
    std::fs::create_dir_all(&dir)?;
    for id in EnvId::ALL {
        let path = dir.join(format!("{id}.csv"));
        std::fs::write(&path, id.transition_table_csv())?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
