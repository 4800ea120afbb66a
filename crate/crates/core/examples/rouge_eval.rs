//! ROUGE and attribute consistency for a handful of candidate summaries.

use acm::eval::{corpus_report, rouge};

fn main() -> acm::Result<()> {
    let pairs = [
        ("the bright council approved the plan", "the bright council approved a new plan"),
        ("storm damage closed the harbor", "the harbor closed after storm damage"),
        ("officials met", "officials met on tuesday to discuss the budget"),
    ];
    let split = |s: &str| s.split_whitespace().map(str::to_string).collect::<Vec<_>>();
    let cands: Vec<Vec<String>> = pairs.iter().map(|(c, _)| split(c)).collect();
    let refs: Vec<Vec<String>> = pairs.iter().map(|(_, r)| split(r)).collect();
    for (c, r) in cands.iter().zip(&refs) {
        let s = rouge(c, r);
        println!("R-1 {:.3}  R-2 {:.3}  R-L {:.3}  | {}", s.r1.f1, s.r2.f1, s.rl.f1, c.join(" "));
    }
    let report = corpus_report(&cands, &refs, Some(&[0.91, 0.64, 0.77]))?;
    print!("\n{}", report.to_table());
    Ok(())
}
