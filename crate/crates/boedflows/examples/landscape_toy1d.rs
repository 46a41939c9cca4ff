//! Tabulate the exact information-gain curve of the 1D binary-observation
//! model and sketch it as ASCII, marking the global maximiser.
//!
//! Run with: cargo run --release --example landscape_toy1d

use boedflows::eig::Toy1dLandscape;
use boedflows::models::Toy1d;

fn main() {
    let model = Toy1d::default();
    let land = Toy1dLandscape::compute(&model, 121, 120);

    let (argmax, max) = land
        .xs
        .iter()
        .zip(&land.vals)
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(x, v)| (*x, *v))
        .unwrap();

    println!("design space: [{}, {}], {} grid points", model.lo, model.hi, land.xs.len());
    println!("max EIG {max:.4} nats at x = {argmax:.3}\n");

    // One bar per grid point, 60 columns wide.
    let width = 60.0;
    for (x, v) in land.xs.iter().zip(&land.vals).step_by(3) {
        let cols = ((v / max) * width).round() as usize;
        let marker = if (x - argmax).abs() < 1e-9 { " <- max" } else { "" };
        println!("{x:>6.2} | {}{marker}", "#".repeat(cols));
    }

    // The curve is multimodal: count strict interior local maxima.
    let mut modes = 0;
    for k in 1..land.vals.len() - 1 {
        if land.vals[k] > land.vals[k - 1] && land.vals[k] > land.vals[k + 1] {
            modes += 1;
        }
    }
    println!("\ninterior local maxima: {modes}");
}
