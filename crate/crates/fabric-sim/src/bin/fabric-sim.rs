fn main() {
    std::process::exit(fabric_sim::cli::main_with(std::env::args_os()));
}
