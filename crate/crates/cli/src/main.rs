fn main() {
    let code = topoforge_cli::cli::run(std::env::args_os().collect(), std::env::vars().collect());
    std::process::exit(code);
}
