//! Parameter count, complexity and delay of each generator preset.

use postgan::generator::GeneratorConfig;
use postgan::runtime::cost_report_text;

fn main() -> postgan::Result<()> {
    for name in ["desk", "full", "tiny"] {
        println!("== {name}");
        print!("{}", cost_report_text(&GeneratorConfig::preset(name)?, name == "tiny")?);
    }
    Ok(())
}
