fn main() {
    std::process::exit(crashrepro::cli::main_with_args(std::env::args_os()));
}
