fn main() {
    let code = convex_sobolev::cli::run(std::env::args_os(), &mut std::io::stdout().lock());
    std::process::exit(code);
}
