fn main() {
    std::process::exit(clusterfed_cli::main_with(std::env::args_os()));
}
