//! Presets, key-path overrides and the canonical resolved document.

use ionmux::config::{load_preset, load_str, parse_overrides};

fn main() -> ionmux::Result<()> {
    let overrides = parse_overrides(&["shuttle_time=3us".into(), "protocol.overhead=50us".into()])?;
    let cfg = load_preset("12km", &overrides)?;
    let spec = cfg.protocol.as_ref().expect("preset has a protocol");
    println!("{} ions, {} modes, shuttle {} s", spec.ions, spec.mode_count(), spec.shuttle_time);
    let text = cfg.to_toml()?;
    println!("{text}");
    assert_eq!(load_str(&text, &[])?.protocol, cfg.protocol);

    match load_str("scenario = \"3m\"\n[protocol]\nshuttle_time = 25\n", &[]) {
        Err(e) => println!("rejected: {e}"),
        Ok(_) => unreachable!("a bare number has no unit"),
    }
    Ok(())
}
