//! Denoises a synthetic shape and prints the MSE before and after.
//!
//! Usage: `cargo run --release --example efficacy -- [cube|sphere|plane] [points] [sigma] [seed]`

use std::time::Instant;

use glr_core::{add_gaussian_noise, denoise, mse, synthetic, DenoiseConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let shape = args.get(1).map(String::as_str).unwrap_or("cube");
    let n: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(10_000);
    let sigma: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.02);
    let seed: u64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(1);
    let clean = match shape {
        "sphere" => synthetic::sphere(n, 1.0, seed),
        "plane" => synthetic::plane(n, 1.0, seed),
        _ => synthetic::cube_surface(n, 1.0, seed),
    };
    let noisy = add_gaussian_noise(&clean, sigma, seed).expect("valid noise level");
    let start = Instant::now();
    let (out, report) = denoise(&noisy, &DenoiseConfig::default()).expect("denoising succeeds");
    let (before, after) = (mse(&clean, &noisy), mse(&clean, &out));
    println!(
        "{shape} n={n} sigma={sigma}: noisy {before:.4e}, denoised {after:.4e}, ratio {:.3}, {} iterations, {:.1?}",
        after / before,
        report.iterations_run,
        start.elapsed()
    );
}
