//! Re-render the SVG figures of a finished run directory.
//!
//! cargo run --example plot_run -- <run_dir> [spectra|gradnorms|losses]

use ldvd::cli::{cmd_plot, Figure};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(dir) = args.first() else {
        eprintln!("usage: plot_run <run_dir> [figure]");
        std::process::exit(2);
    };
    let fig = args.get(1).and_then(|f| Figure::parse(f));
    match cmd_plot(dir.as_ref(), fig) {
        Ok(paths) => paths.iter().for_each(|p| println!("{}", p.display())),
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(e.exit_code());
        }
    }
}
