use std::io::Write;

fn main() {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let code = iecc_cli::execute(std::env::args().collect(), &mut out);
    let _ = out.flush();
    std::process::exit(code);
}
