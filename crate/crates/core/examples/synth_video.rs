//! Render a synthetic moving-shape scene, print a few frames as text and
//! write it as an LDVD container.
//!
//! cargo run --example synth_video -- [bounce|drift|rotate] [out.ldvd]

use ldvd::video::{load_video, save_video, synth_video, Motion, SynthSceneConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let motion = args.first().and_then(|m| Motion::parse(m)).unwrap_or(Motion::Bounce);
    let cfg = SynthSceneConfig::new(16, motion, 4);
    let video = synth_video(&cfg, 12)?;
    let n = cfg.canvas;
    for t in [0, 4, 8] {
        println!("frame {t} ({})", motion.as_str());
        for i in 0..n {
            let row: String = (0..n).map(|j| if video.get(&[t, i, j, 0]) > 0.0 { '#' } else { '.' }).collect();
            println!("  {row}");
        }
    }
    let out = args.get(1).map_or_else(|| std::env::temp_dir().join("synth.ldvd"), Into::into);
    save_video(&out, &video)?;
    let back = load_video(&out)?;
    println!("wrote {} {:?}, round trip diff {:.1e}", out.display(), back.shape(), back.max_abs_diff(&video));
    Ok(())
}
