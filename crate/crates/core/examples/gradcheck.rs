//! Reverse-mode gradients of a small program against central differences,
//! then the built-in per-primitive and whole-model checks.

use stuq::diffcore::{finite_difference_check, Tape, Tensor, Var};
use stuq::harness::oracles::{gradient_oracle, primitive_gradient_oracle};

fn main() -> stuq::Result<()> {
    let w = Tensor::matrix(2, 3, vec![0.4, -1.1, 0.7, 0.2, 0.9, -0.3])?;
    let x = Tensor::matrix(3, 2, vec![1.0, -0.5, 0.3, 2.0, -1.2, 0.8])?;
    // sum(softplus(tanh(W X)))
    let err = finite_difference_check(
        |tape: &mut Tape, v: &[Var]| {
            let h = tape.matmul(v[0], v[1])?;
            let h = tape.tanh(h)?;
            let h = tape.softplus(h)?;
            tape.sum(h)
        },
        &[w, x],
        1e-6,
    )?;
    println!("hand-written program: max relative error {err:.2e}");

    let mut checks = primitive_gradient_oracle(0)?;
    checks.extend(gradient_oracle(0)?);
    for c in &checks {
        println!("{} {}: {:.2e}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.value);
    }
    Ok(())
}
