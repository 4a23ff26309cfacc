//! Exact Hessian-vector products of a small discriminator loss through the
//! forward-over-reverse pass, checked against a dense Hessian and against
//! finite differences of gradients.

use ldvd::autodiff::{grad_flat, hvp};
use ldvd::curvature::dense_hessian;
use ldvd::verify::{rel_err, tiny_d_loss};

fn main() -> ldvd::Result<()> {
    let (d, loss) = tiny_d_loss("tiny-3d", 3)?;
    let p = d.params();
    let n = p.total_dim();
    let mut rng = ldvd::rng_stream(3, 1);
    let v: Vec<f64> = (0..n).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();

    let hv = hvp(p, &v, &loss)?;
    let h = dense_hessian(p, &loss)?;
    let dense: Vec<f64> = (0..n).map(|i| h[i].iter().zip(&v).map(|(a, b)| a * b).sum()).collect();

    let eps = 1e-4;
    let x = p.flatten();
    let shifted = |s: f64| -> ldvd::Result<Vec<f64>> {
        let y: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + s * b).collect();
        Ok(grad_flat(&p.unflatten(&y)?, &loss)?.1)
    };
    let (gu, gd) = (shifted(eps)?, shifted(-eps)?);
    let fd: Vec<f64> = gu.iter().zip(&gd).map(|(a, b)| (a - b) / (2.0 * eps)).collect();

    println!("{n} parameters");
    println!("Hv vs dense H v:           rel err {:.2e}", rel_err(&hv, &dense));
    println!("Hv vs gradient differences: rel err {:.2e}", rel_err(&hv, &fd));
    let w: Vec<f64> = (0..n).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
    let hw = hvp(p, &w, &loss)?;
    let a: f64 = w.iter().zip(&hv).map(|(a, b)| a * b).sum();
    let b: f64 = v.iter().zip(&hw).map(|(a, b)| a * b).sum();
    println!("w.Hv - v.Hw = {:.2e}", a - b);
    Ok(())
}
