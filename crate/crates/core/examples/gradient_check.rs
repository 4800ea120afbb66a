//! Finite-difference check of a small two-layer network built on the tape.

use acm::numeric::gradcheck::check_gradients;
use acm::numeric::{ParamStore, RngState, Tensor};

fn random(shape: &[usize], rng: &mut RngState) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.normal()).collect()).unwrap()
}

fn main() -> acm::Result<()> {
    let mut rng = RngState::new(3);
    let mut store = ParamStore::new();
    let x = store.add("x", random(&[4, 6], &mut rng));
    let w1 = store.add("w1", random(&[6, 8], &mut rng));
    let w2 = store.add("w2", random(&[8, 3], &mut rng));
    let report = check_gradients(&store, 32, |s, t| {
        let (xv, w1v, w2v) = (t.param(s, x), t.param(s, w1), t.param(s, w2));
        let h = t.matmul(xv, w1v)?;
        let h = t.gelu(h)?;
        let logits = t.matmul(h, w2v)?;
        t.cross_entropy(logits, &[0, 2, 1, 1])
    })?;
    for p in &report.params {
        println!("{:<4} entries {:>3}  relative error {:.2e}", p.name, p.checked, p.rel_error);
    }
    println!("worst {:.2e}", report.max_rel_error());
    Ok(())
}
