fn main() {
    std::process::exit(skysim_cli::run(std::env::args_os()));
}
