fn main() {
    std::process::exit(romforge::cli::main_with(std::env::args_os()));
}
