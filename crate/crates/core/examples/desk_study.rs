//! Desk-scale double-well convergence study.
//!
//! `cargo run --release -p tamed-sde --example desk_study [reference_exponent]`

use std::time::Instant;

use tamed_sde::{double_well_preset, strong_error_study, DoubleWellParams, StudyConfig};

fn main() -> tamed_sde::Result<()> {
    let ref_exp: u32 = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(13);
    let model = double_well_preset(DoubleWellParams::default(), 1.0, 2.0)?;
    let cfg = StudyConfig {
        reference_n: 1 << ref_exp,
        ..StudyConfig::desk_scale(2024)
    };
    let start = Instant::now();
    let report = strong_error_study(&model, &cfg)?;
    print!("{}", report.to_csv());
    eprintln!("elapsed {:.2?}", start.elapsed());
    Ok(())
}
