//! Canonicalizes expressions given on the command line (infix).
//!
//! cargo run -p symode --example simplify -- "2*y*(1 - y/3) - 0.5" "y + 0*sin(y)"

use symode::canonicalize::simplify;
use symode::expr::{parse_infix, skeletonize};

fn main() {
    let mut inputs: Vec<String> = std::env::args().skip(1).collect();
    if inputs.is_empty() {
        inputs = ["2*y*(1 - y/3) - 0.5", "y + 0*sin(y)", "-(-y)**2*3*2", "exp(log(2)) + y/1"]
            .iter()
            .map(|s| s.to_string())
            .collect();
    }
    for src in &inputs {
        let e = match parse_infix(src) {
            Ok(e) => e,
            Err(err) => {
                println!("{src}: {err}");
                continue;
            }
        };
        match simplify(&e) {
            Ok(s) => {
                let (skeleton, constants) = skeletonize(&s);
                println!("{src}");
                println!("  simplified  {}", s.to_infix());
                println!("  prefix      {}", s.to_prefix().join(" "));
                println!("  complexity  {} -> {}", e.complexity(), s.complexity());
                println!("  skeleton    {} with {:?}", skeleton.key(), constants.iter().map(|c| c.value).collect::<Vec<_>>());
            }
            Err(err) => println!("{src}: {err}"),
        }
    }
}
