fn main() {
    std::process::exit(mlofi_cli::main_with(std::env::args_os()));
}
