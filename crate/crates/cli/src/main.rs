fn main() {
    std::process::exit(radlabel_cli::main_with_args(std::env::args_os()));
}
