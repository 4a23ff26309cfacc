//! Turn a raw 240x320 video into a training clip: subsample frames, pick a
//! start, crop to a square, resize and map to [-1, 1].

use ldvd::tensor::Tensor;
use ldvd::video::{clip_indices, clip_starts, preprocess, Crop, PreprocessConfig};

fn main() -> ldvd::Result<()> {
    // A horizontal ramp over [0, 255] so the crop and resize are visible.
    let (frames, h, w) = (40, 240, 320);
    let mut raw = Tensor::zeros(&[frames, h, w, 1]);
    for t in 0..frames {
        for i in 0..h {
            for j in 0..w {
                raw.set(&[t, i, j, 0], 255.0 * j as f64 / (w - 1) as f64);
            }
        }
    }
    let cfg = PreprocessConfig {
        input_range: (0.0, 255.0),
        ..PreprocessConfig::new(2, 16, Crop::Center, 16)
    };
    println!("needs at least {} frames; {} possible starts", cfg.min_frames(), clip_starts(frames, 2, 16));
    println!("frames used from start 2: {:?}", clip_indices(2, 16, 2));
    let clip = preprocess(&raw, &cfg, &mut ldvd::rng_stream(0, 0))?;
    println!("clip shape {:?}", clip.shape());
    let row: Vec<String> = (0..16).map(|j| format!("{:+.2}", clip.get(&[0, 8, j, 0]))).collect();
    println!("center-cropped row: {}", row.join(" "));
    let short = Tensor::zeros(&[20, h, w, 1]);
    if let Err(e) = preprocess(&short, &cfg, &mut ldvd::rng_stream(0, 0)) {
        println!("20-frame video: {e}");
    }
    Ok(())
}
