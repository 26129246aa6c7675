//! The reverse-mode engine on a two-layer network: a forward pass, one
//! backward sweep, and a finite-difference check of every parameter.
//!
//! `cargo run --release --example autodiff`

use pulse::tensorcore::{grad_check, Graph, ParamGroup, Tensor, Var};

fn loss(g: &mut Graph, params: &ParamGroup) -> pulse::Result<Var> {
    let x = g.constant(Tensor::new(&[3, 2], vec![0.5, -1.0, 1.5, 0.25, -0.75, 2.0])?);
    let (w1, b1) = (g.param(params, "w1")?, g.param(params, "b1")?);
    let (w2, b2) = (g.param(params, "w2")?, g.param(params, "b2")?);
    let h = g.affine(x, w1, b1)?;
    let h = g.relu(h);
    let y = g.affine(h, w2, b2)?;
    let y = g.sigmoid(y);
    Ok(g.mean(y))
}

fn main() -> pulse::Result<()> {
    let mut params = ParamGroup::new();
    params.add("w1", Tensor::new(&[2, 4], vec![0.3, -0.2, 0.8, 0.1, -0.5, 0.4, 0.2, -0.7])?)?;
    params.add("b1", Tensor::new(&[1, 4], vec![0.1, 0.0, -0.1, 0.2])?)?;
    params.add("w2", Tensor::new(&[4, 1], vec![0.6, -0.3, 0.9, 0.4])?)?;
    params.add("b2", Tensor::new(&[1, 1], vec![-0.2])?)?;

    let mut g = Graph::new(0);
    let l = loss(&mut g, &params)?;
    let grads = g.backward(l)?;
    println!("loss {:.6} over a tape of {} nodes", g.value(l).data()[0], g.len());
    for (name, grad) in params.names().iter().zip(g.param_grads(&params, &grads)) {
        println!("  d/d{name} = {grad:.4?}");
    }

    let report = grad_check(loss, &params, 1e-5)?;
    for e in report {
        println!("  {:3} max rel err {:.1e}", e.name, e.max_rel_err);
    }
    Ok(())
}
