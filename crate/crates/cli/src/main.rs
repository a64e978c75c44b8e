fn main() {
    std::process::exit(axial_cli::main_with_args(std::env::args_os()));
}
