//! Two-hot constant targets, decoding from logits, and the bit-level
//! input encoding.
//!
//! cargo run -p symode --example two_hot -- 1.64 -3.25 10

use symode::codec::{constant_row, decode_input_row, decode_step, encode_input, encode_target, row_logits, Vocabulary};

fn main() {
    let vocab = Vocabulary::standard();
    println!("{} tokens: {}", vocab.len(), vocab.tokens().join(" "));

    let mut values: Vec<f64> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    if values.is_empty() {
        values = vec![1.64, -3.25, 10.0, 0.0];
    }
    for c in values {
        match constant_row(&vocab, c) {
            Ok(row) => {
                let weights: Vec<String> = row.entries().map(|(i, w)| format!("{}:{w:.4}", vocab.name(i))).collect();
                let back = decode_step(&vocab, &row_logits(&row, vocab.len()));
                println!("{c:>8} -> [{}] -> {:?}", weights.join(", "), back);
            }
            Err(e) => println!("{c:>8} -> {e}"),
        }
    }

    let enc = encode_target(&vocab, &["add", "mul", "0.23", "y", "-0.5"]).unwrap();
    println!("\ntarget rows: {}", enc.rows.len());
    let bits = encode_input(&[(0.5, -1.25)]);
    let shown: String = bits[0][..16].iter().map(|b| char::from(b'0' + b)).collect();
    println!("(0.5, -1.25) as bits: {shown}... -> {:?}", decode_input_row(&bits[0]));
}
